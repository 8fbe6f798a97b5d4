//! Binary model checkpoints.
//!
//! Layout (little-endian): magic `CFFLOWCK`, version `major.minor.patch` as
//! three `u16`, payload length `u64`, payload, CRC32 of the payload. Readers
//! accept any file with the same major version.

use std::path::Path;

use cfflow_core::nn::{LipschitzBounds, Mlp, MlpConfig, TimeInput};
use cfflow_core::synthdata::ScalingRecord;
use cfflow_core::DataSpec;

use crate::error::{CheckpointError, Error, Result};

pub const MAGIC: &[u8; 8] = b"CFFLOWCK";
pub const VERSION: (u16, u16, u16) = (1, 0, 0);
const HEADER_LEN: usize = 8 + 6 + 8;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ModelKind {
    Velocity,
    Generator,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Checkpoint {
    pub kind: ModelKind,
    pub spec: DataSpec,
    pub scaling: ScalingRecord,
    pub net: Mlp,
    /// Stopping time the model was trained or distilled for.
    pub stop_time: f64,
    pub seed: u64,
}

struct Writer(Vec<u8>);

impl Writer {
    fn u8(&mut self, v: u8) {
        self.0.push(v);
    }
    fn u64(&mut self, v: u64) {
        self.0.extend_from_slice(&v.to_le_bytes());
    }
    fn f64(&mut self, v: f64) {
        self.0.extend_from_slice(&v.to_le_bytes());
    }
    fn opt_f64(&mut self, v: Option<f64>) {
        match v {
            Some(x) => {
                self.u8(1);
                self.f64(x);
            }
            None => self.u8(0),
        }
    }
    fn ranges(&mut self, r: &Option<Vec<(f64, f64)>>) {
        match r {
            Some(v) => {
                self.u8(1);
                self.u64(v.len() as u64);
                for &(a, b) in v {
                    self.f64(a);
                    self.f64(b);
                }
            }
            None => self.u8(0),
        }
    }
}

struct Reader<'a> {
    buf: &'a [u8],
    pos: usize,
}

type Parse<T> = std::result::Result<T, CheckpointError>;

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Parse<&'a [u8]> {
        let end = self.pos.checked_add(n).ok_or(CheckpointError::Truncated)?;
        let s = self.buf.get(self.pos..end).ok_or(CheckpointError::Truncated)?;
        self.pos = end;
        Ok(s)
    }
    fn u8(&mut self) -> Parse<u8> {
        Ok(self.take(1)?[0])
    }
    fn u64(&mut self) -> Parse<u64> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }
    fn usize(&mut self) -> Parse<usize> {
        usize::try_from(self.u64()?).map_err(|_| CheckpointError::Malformed("length overflow".into()))
    }
    fn f64(&mut self) -> Parse<f64> {
        Ok(f64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }
    fn flag(&mut self) -> Parse<bool> {
        match self.u8()? {
            0 => Ok(false),
            1 => Ok(true),
            b => Err(CheckpointError::Malformed(format!("bad option tag {b}"))),
        }
    }
    fn opt_f64(&mut self) -> Parse<Option<f64>> {
        Ok(if self.flag()? { Some(self.f64()?) } else { None })
    }
    fn ranges(&mut self) -> Parse<Option<Vec<(f64, f64)>>> {
        if !self.flag()? {
            return Ok(None);
        }
        let n = self.usize()?;
        if n > self.buf.len() {
            return Err(CheckpointError::Truncated);
        }
        (0..n).map(|_| Ok((self.f64()?, self.f64()?))).collect::<Parse<Vec<_>>>().map(Some)
    }
}

fn encode_payload(c: &Checkpoint) -> Vec<u8> {
    let mut w = Writer(Vec::new());
    w.u8(match c.kind {
        ModelKind::Velocity => 0,
        ModelKind::Generator => 1,
    });
    w.u64(c.spec.dx as u64);
    w.u64(c.spec.dy as u64);
    w.ranges(&c.spec.x_bounds);
    w.ranges(&c.spec.y_bounds);
    w.ranges(&c.scaling.x);
    w.ranges(&c.scaling.y);
    let cfg = c.net.config();
    w.u64(cfg.dx as u64);
    w.u64(cfg.dy as u64);
    match cfg.time {
        TimeInput::Absent => w.u8(0),
        TimeInput::Raw => w.u8(1),
        TimeInput::Fourier(k) => {
            w.u8(2);
            w.u64(k as u64);
        }
    }
    w.u64(cfg.hidden.len() as u64);
    for &h in &cfg.hidden {
        w.u64(h as u64);
    }
    w.opt_f64(cfg.output_cap);
    w.opt_f64(cfg.weight_cap);
    w.opt_f64(cfg.lipschitz.gamma_x);
    w.opt_f64(cfg.lipschitz.gamma_y);
    w.opt_f64(cfg.lipschitz.gamma_t);
    w.f64(c.stop_time);
    w.u64(c.seed);
    w.u64(c.net.params().len() as u64);
    for &p in c.net.params() {
        w.f64(p);
    }
    w.0
}

fn decode_payload(buf: &[u8]) -> Parse<Checkpoint> {
    let mut r = Reader { buf, pos: 0 };
    let kind = match r.u8()? {
        0 => ModelKind::Velocity,
        1 => ModelKind::Generator,
        k => return Err(CheckpointError::Malformed(format!("unknown model kind {k}"))),
    };
    let spec = DataSpec {
        dx: r.usize()?,
        dy: r.usize()?,
        x_bounds: r.ranges()?,
        y_bounds: r.ranges()?,
    };
    let scaling = ScalingRecord {
        x: r.ranges()?,
        y: r.ranges()?,
    };
    let dx = r.usize()?;
    let dy = r.usize()?;
    let time = match r.u8()? {
        0 => TimeInput::Absent,
        1 => TimeInput::Raw,
        2 => TimeInput::Fourier(r.usize()?),
        t => return Err(CheckpointError::Malformed(format!("unknown time encoding {t}"))),
    };
    let depth = r.usize()?;
    if depth > buf.len() {
        return Err(CheckpointError::Truncated);
    }
    let hidden = (0..depth).map(|_| r.usize()).collect::<Parse<Vec<_>>>()?;
    let config = MlpConfig {
        dx,
        dy,
        time,
        hidden,
        output_cap: r.opt_f64()?,
        weight_cap: r.opt_f64()?,
        lipschitz: LipschitzBounds {
            gamma_x: r.opt_f64()?,
            gamma_y: r.opt_f64()?,
            gamma_t: r.opt_f64()?,
        },
    };
    let stop_time = r.f64()?;
    let seed = r.u64()?;
    let n = r.usize()?;
    if n.checked_mul(8).is_none_or(|b| b > buf.len()) {
        return Err(CheckpointError::Truncated);
    }
    let params = (0..n).map(|_| r.f64()).collect::<Parse<Vec<_>>>()?;
    if r.pos != buf.len() {
        return Err(CheckpointError::Malformed("trailing bytes after parameters".into()));
    }
    let net = Mlp::from_params(config, params).map_err(|e| CheckpointError::Malformed(e.to_string()))?;
    spec.validate().map_err(|e| CheckpointError::Malformed(e.to_string()))?;
    Ok(Checkpoint {
        kind,
        spec,
        scaling,
        net,
        stop_time,
        seed,
    })
}

pub fn encode(c: &Checkpoint) -> Vec<u8> {
    encode_with_version(c, VERSION)
}

fn encode_with_version(c: &Checkpoint, v: (u16, u16, u16)) -> Vec<u8> {
    let payload = encode_payload(c);
    let mut out = Vec::with_capacity(HEADER_LEN + payload.len() + 4);
    out.extend_from_slice(MAGIC);
    for part in [v.0, v.1, v.2] {
        out.extend_from_slice(&part.to_le_bytes());
    }
    out.extend_from_slice(&(payload.len() as u64).to_le_bytes());
    out.extend_from_slice(&payload);
    out.extend_from_slice(&crc32fast::hash(&payload).to_le_bytes());
    out
}

pub fn decode(bytes: &[u8]) -> std::result::Result<Checkpoint, CheckpointError> {
    if bytes.len() < 8 || &bytes[..8] != MAGIC {
        return Err(if bytes.len() < 8 && MAGIC.starts_with(bytes) {
            CheckpointError::Truncated
        } else {
            CheckpointError::BadMagic
        });
    }
    if bytes.len() < HEADER_LEN {
        return Err(CheckpointError::Truncated);
    }
    let part = |i: usize| u16::from_le_bytes([bytes[8 + 2 * i], bytes[9 + 2 * i]]);
    let found = (part(0), part(1), part(2));
    if found.0 != VERSION.0 {
        return Err(CheckpointError::Version {
            found: format!("{}.{}.{}", found.0, found.1, found.2),
            supported: format!("{}.x.x", VERSION.0),
        });
    }
    let len = u64::from_le_bytes(bytes[14..22].try_into().unwrap());
    let len = usize::try_from(len).map_err(|_| CheckpointError::Truncated)?;
    let end = HEADER_LEN.checked_add(len).ok_or(CheckpointError::Truncated)?;
    if bytes.len() < end + 4 {
        return Err(CheckpointError::Truncated);
    }
    if bytes.len() > end + 4 {
        return Err(CheckpointError::Malformed("trailing bytes after checksum".into()));
    }
    let payload = &bytes[HEADER_LEN..end];
    let stored = u32::from_le_bytes(bytes[end..end + 4].try_into().unwrap());
    let computed = crc32fast::hash(payload);
    if stored != computed {
        return Err(CheckpointError::Checksum { stored, computed });
    }
    decode_payload(payload)
}

pub fn save(c: &Checkpoint, path: &Path) -> Result<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    }
    std::fs::write(path, encode(c)).map_err(|e| Error::io(path, e))
}

pub fn load(path: &Path) -> Result<Checkpoint> {
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    decode(&bytes).map_err(|kind| Error::Checkpoint {
        path: path.to_path_buf(),
        kind,
    })
}
