use cfflow::checkpoint::{self, Checkpoint, ModelKind};
use cfflow::core::synthdata::ScalingRecord;
use cfflow::core::{DataSpec, Mlp, MlpConfig, RngStream, TimeInput};

#[test]
fn saved_networks_reload_bit_for_bit() {
    let dir = tempfile::tempdir().unwrap();
    let mut rng = RngStream::new(31, 0);
    let mut cfg = MlpConfig::velocity(2, 3).with_hidden(vec![17, 9]);
    cfg.time = TimeInput::Fourier(2);
    cfg.output_cap = Some(4.0);
    let c = Checkpoint {
        kind: ModelKind::Velocity,
        spec: DataSpec::new(2, 3).unwrap(),
        scaling: ScalingRecord {
            x: Some(vec![(-1.0, 2.0), (0.5, 0.75)]),
            y: None,
        },
        net: Mlp::new(cfg, &mut rng).unwrap(),
        stop_time: 0.99,
        seed: 31,
    };
    let path = dir.path().join("nested/model.ckpt");
    checkpoint::save(&c, &path).unwrap();
    let back = checkpoint::load(&path).unwrap();
    assert_eq!(back, c);
    for _ in 0..100 {
        let x = rng.gauss_vector(2);
        let y = rng.gauss_vector(3);
        let t = rng.uniform() * 0.99;
        let a = c.net.forward(&x, &y, t).unwrap();
        let b = back.net.forward(&x, &y, t).unwrap();
        assert!(a.iter().zip(&b).all(|(p, q)| p.to_bits() == q.to_bits()));
    }
}

#[test]
fn corrupted_files_are_rejected() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("g.ckpt");
    let c = Checkpoint {
        kind: ModelKind::Generator,
        spec: DataSpec::new(1, 0).unwrap(),
        scaling: ScalingRecord::identity(),
        net: Mlp::new(MlpConfig::generator(1, 0, vec![4]), &mut RngStream::new(1, 1)).unwrap(),
        stop_time: 0.9,
        seed: 1,
    };
    checkpoint::save(&c, &path).unwrap();
    let mut bytes = std::fs::read(&path).unwrap();
    let mid = bytes.len() / 2;
    bytes[mid] ^= 0x40;
    std::fs::write(&path, &bytes).unwrap();
    let err = checkpoint::load(&path).unwrap_err().to_string();
    assert!(err.contains("g.ckpt"), "{err}");
}
