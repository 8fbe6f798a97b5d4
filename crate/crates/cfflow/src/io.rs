//! CSV files: datasets and sample matrices (`x0..,y0..` header), loss
//! traces and trajectories. Floats are written with 17 significant digits
//! so values round-trip exactly.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;

use cfflow_core::flow::SamplePath;
use cfflow_core::synthdata::ScalingRecord;
use cfflow_core::{DataSpec, Dataset, Matrix};

use crate::error::{Error, Result};

pub fn fmt_f64(v: f64) -> String {
    format!("{v:.16e}")
}

fn create(path: &Path) -> Result<BufWriter<File>> {
    if let Some(dir) = path.parent() {
        if !dir.as_os_str().is_empty() {
            std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        }
    }
    File::create(path).map(BufWriter::new).map_err(|e| Error::io(path, e))
}

pub fn header(dx: usize, dy: usize) -> String {
    let cols: Vec<String> = (0..dx).map(|j| format!("x{j}")).chain((0..dy).map(|j| format!("y{j}"))).collect();
    cols.join(",")
}

/// Rows `[x | y]` under the `x0..,y0..` header.
pub fn write_pairs(path: &Path, xs: &Matrix, ys: &Matrix) -> Result<()> {
    let mut w = create(path)?;
    let io = |e| Error::io(path, e);
    writeln!(w, "{}", header(xs.cols(), ys.cols())).map_err(io)?;
    for i in 0..xs.rows() {
        let line: Vec<String> = xs.row(i).iter().chain(ys.row(i)).map(|&v| fmt_f64(v)).collect();
        writeln!(w, "{}", line.join(",")).map_err(io)?;
    }
    w.flush().map_err(io)
}

pub fn write_dataset(path: &Path, d: &Dataset) -> Result<()> {
    write_pairs(path, &d.xs, &d.ys)
}

/// Reads every data row as floats; line numbers in errors are 1-based file
/// lines (the header is line 1).
pub fn read_numeric(path: &Path, min_cols: usize) -> Result<(Vec<String>, Vec<Vec<f64>>)> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let mut rdr = csv::ReaderBuilder::new().flexible(true).has_headers(true).from_reader(file);
    let csv_err = |line: u64, message: String| Error::Csv {
        path: path.to_path_buf(),
        line,
        message,
    };
    let header: Vec<String> = rdr
        .headers()
        .map_err(|e| csv_err(1, e.to_string()))?
        .iter()
        .map(|s| s.trim().to_string())
        .collect();
    if header.len() < min_cols {
        return Err(csv_err(1, format!("header has {} columns, need at least {min_cols}", header.len())));
    }
    let mut rows = Vec::new();
    for rec in rdr.records() {
        let rec = rec.map_err(|e| {
            let line = e.position().map(|p| p.line()).unwrap_or(0);
            csv_err(line, e.to_string())
        })?;
        let line = rec.position().map(|p| p.line()).unwrap_or(0);
        if rec.len() != header.len() {
            return Err(csv_err(line, format!("expected {} fields, found {}", header.len(), rec.len())));
        }
        let row = rec
            .iter()
            .enumerate()
            .map(|(j, f)| {
                f.trim()
                    .parse::<f64>()
                    .map_err(|_| csv_err(line, format!("column {} (`{}`): `{f}` is not a number", j + 1, header[j])))
            })
            .collect::<Result<Vec<f64>>>()?;
        rows.push(row);
    }
    Ok((header, rows))
}

/// First `dx` columns become `X`, the next `dy` become `Y`. With `scale`
/// both blocks are min-max mapped to `[0, 1]` and the maps returned.
pub fn load_csv(path: &Path, dx: usize, dy: usize, scale: bool) -> Result<(Dataset, ScalingRecord)> {
    let (_, rows) = read_numeric(path, dx + dy)?;
    if rows.is_empty() {
        return Err(Error::Csv {
            path: path.to_path_buf(),
            line: 1,
            message: "no data rows".into(),
        });
    }
    let n = rows.len();
    let xs: Vec<f64> = rows.iter().flat_map(|r| r[..dx].iter().copied()).collect();
    let ys: Vec<f64> = rows.iter().flat_map(|r| r[dx..dx + dy].iter().copied()).collect();
    let d = Dataset::new(DataSpec::new(dx, dy)?, Matrix::from_vec(n, dx, xs)?, Matrix::from_vec(n, dy, ys)?)?;
    if !scale {
        return Ok((d, ScalingRecord::identity()));
    }
    let rec = ScalingRecord::fit(&d, true, true)?;
    Ok((rec.apply(&d)?, rec))
}

pub fn write_trace(path: &Path, trace: &[f64]) -> Result<()> {
    let mut w = create(path)?;
    let io = |e| Error::io(path, e);
    writeln!(w, "epoch,mean_loss").map_err(io)?;
    for (e, l) in trace.iter().enumerate() {
        writeln!(w, "{},{}", e + 1, fmt_f64(*l)).map_err(io)?;
    }
    w.flush().map_err(io)
}

pub fn write_trajectory(path: &Path, p: &SamplePath) -> Result<()> {
    let mut w = create(path)?;
    let io = |e| Error::io(path, e);
    let dx = p.states.cols();
    let zs: Vec<String> = (0..dx).map(|j| format!("z{j}")).collect();
    writeln!(w, "k,t,{}", zs.join(",")).map_err(io)?;
    for (k, t) in p.times.iter().enumerate() {
        let vals: Vec<String> = p.states.row(k).iter().map(|&v| fmt_f64(v)).collect();
        writeln!(w, "{k},{},{}", fmt_f64(*t), vals.join(",")).map_err(io)?;
    }
    w.flush().map_err(io)
}

pub fn write_text(path: &Path, text: &str) -> Result<()> {
    let mut w = create(path)?;
    w.write_all(text.as_bytes()).map_err(|e| Error::io(path, e))?;
    w.flush().map_err(|e| Error::io(path, e))
}
