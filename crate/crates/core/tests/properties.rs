use cfflow_core::eval::{t_cdf, t_quantile, tv_distance, w2_1d};
use cfflow_core::linalg::{norm2, norm_inf};
use cfflow_core::nn::{Adam, AdamConfig};
use cfflow_core::oracle::score_from_velocity;
use cfflow_core::{interpolant, Atom, AtomMixture, Mlp, MlpConfig, RngStream};
use proptest::prelude::*;

fn gauss_pdf(mu: f64, sd: f64) -> impl Fn(f64) -> f64 {
    move |x| {
        let z = (x - mu) / sd;
        (-0.5 * z * z).exp() / (sd * (2.0 * std::f64::consts::PI).sqrt())
    }
}

fn vec_of(len: usize) -> impl Strategy<Value = Vec<f64>> {
    prop::collection::vec(-5.0f64..5.0, len)
}

fn atoms() -> impl Strategy<Value = (usize, Vec<(Vec<f64>, f64, f64)>)> {
    (1usize..=3).prop_flat_map(|dx| {
        let atom = (vec_of(dx), 0.1f64..1.0, prop_oneof![Just(0.0), 0.05f64..2.0]);
        (Just(dx), prop::collection::vec(atom, 1..5))
    })
}

fn mixture(raw: &[(Vec<f64>, f64, f64)]) -> AtomMixture {
    let total: f64 = raw.iter().map(|a| a.1).sum();
    let mut list: Vec<Atom> = raw
        .iter()
        .map(|(u, w, s2)| Atom::gaussian(u.clone(), w / total, *s2))
        .collect();
    // absorb rounding so the weights sum to one within tolerance
    let rest: f64 = list[1..].iter().map(|a| a.weight).sum();
    list[0].weight = 1.0 - rest;
    AtomMixture::new(&list).unwrap()
}

proptest! {
    #[test]
    fn interpolant_is_linear_and_norm_bounded(
        (x1, w1, x2, w2) in (1usize..5).prop_flat_map(|d| (vec_of(d), vec_of(d), vec_of(d), vec_of(d))),
        a in -3.0f64..3.0,
        t in 0.0f64..1.0,
    ) {
        let comb = |p: &[f64], q: &[f64]| -> Vec<f64> { p.iter().zip(q).map(|(u, v)| a * u + v).collect() };
        let lhs = interpolant(&comb(&x1, &x2), &comb(&w1, &w2), t).unwrap();
        let i1 = interpolant(&x1, &w1, t).unwrap();
        let i2 = interpolant(&x2, &w2, t).unwrap();
        for j in 0..lhs.len() {
            prop_assert!((lhs[j] - (a * i1[j] + i2[j])).abs() < 1e-9);
        }
        let bound = (norm2(&x1).powi(2) + norm2(&w1).powi(2)).sqrt();
        prop_assert!(norm2(&i1) <= bound * (1.0 + 1e-12) + 1e-12);
    }

    #[test]
    fn tv_is_a_bounded_metric(
        m in prop::array::uniform3(-2.0f64..2.0),
        s in prop::array::uniform3(0.3f64..2.0),
    ) {
        let (lo, hi, n) = (-15.0, 15.0, 4001);
        let d = |i: usize, j: usize| tv_distance(gauss_pdf(m[i], s[i]), gauss_pdf(m[j], s[j]), lo, hi, n).unwrap();
        let (ab, ba, bc, ac) = (d(0, 1), d(1, 0), d(1, 2), d(0, 2));
        prop_assert!((ab - ba).abs() < 1e-12);
        prop_assert!((0.0..=1.0 + 1e-9).contains(&ab));
        prop_assert!(ac <= ab + bc + 1e-9);
        prop_assert!(d(0, 0) == 0.0);
    }

    #[test]
    fn w2_scales_and_vanishes_only_on_equal_sorted(
        a in prop::collection::vec(-10.0f64..10.0, 1..50),
        c in -4.0f64..4.0,
        seed in any::<u64>(),
    ) {
        let mut b = a.clone();
        RngStream::new(seed, 0).shuffle(&mut b);
        prop_assert_eq!(w2_1d(&a, &b).unwrap(), 0.0);

        let shifted: Vec<f64> = b.iter().map(|v| v + 0.5).collect();
        let base = w2_1d(&a, &shifted).unwrap();
        prop_assert!(base > 0.0);
        let sa: Vec<f64> = a.iter().map(|v| c * v).collect();
        let sb: Vec<f64> = shifted.iter().map(|v| c * v).collect();
        prop_assert!((w2_1d(&sa, &sb).unwrap() - c.abs() * base).abs() < 1e-9 * (1.0 + base));
    }

    #[test]
    fn t_quantile_is_odd_and_inverts_the_cdf(df in 1u32..200, p in 0.001f64..0.999) {
        let q = t_quantile(df, p).unwrap();
        let r = t_quantile(df, 1.0 - p).unwrap();
        prop_assert!((q + r).abs() < 1e-8 * (1.0 + q.abs()));
        prop_assert!((t_cdf(df as f64, q) - p).abs() < 1e-9);
    }

    #[test]
    fn output_cap_bounds_every_output(
        cap in 0.05f64..3.0,
        seed in any::<u64>(),
        x in vec_of(2),
        t in 0.0f64..0.99,
    ) {
        let mut cfg = MlpConfig::velocity(2, 0).with_hidden(vec![8, 8]);
        cfg.output_cap = Some(cap);
        let mut rng = RngStream::new(seed, 1);
        let mut net = Mlp::new(cfg, &mut rng).unwrap();
        for p in net.params_mut() {
            *p *= 20.0;
        }
        let v = net.forward(&x, &[], t).unwrap();
        prop_assert!(norm2(&v) <= cap * (1.0 + 1e-12));
    }

    #[test]
    fn weight_cap_survives_adam_steps(kappa in 0.01f64..0.5, seed in any::<u64>()) {
        let mut cfg = MlpConfig::velocity(1, 1).with_hidden(vec![6]);
        cfg.weight_cap = Some(kappa);
        let mut rng = RngStream::new(seed, 2);
        let mut net = Mlp::new(cfg, &mut rng).unwrap();
        prop_assert!(norm_inf(net.params()) <= kappa);
        let mut adam = Adam::new(AdamConfig { lr: 0.3, ..AdamConfig::default() }, net.params().len());
        for _ in 0..5 {
            let grad = rng.gauss_vector(net.params().len());
            adam.step(&mut net, &grad).unwrap();
            prop_assert!(norm_inf(net.params()) <= kappa);
        }
    }

    #[test]
    fn oracle_posterior_stays_in_the_hull_for_point_atoms(
        (dx, raw) in atoms(),
        t in 0.01f64..0.99,
        seed in any::<u64>(),
    ) {
        let points: Vec<(Vec<f64>, f64, f64)> = raw.iter().map(|(u, w, _)| (u.clone(), *w, 0.0)).collect();
        let m = mixture(&points);
        let x = RngStream::new(seed, 3).gauss_vector(dx);
        let mut post = vec![0.0; dx];
        m.posterior_mean_into(&x, t, &mut post);
        for j in 0..dx {
            let lo = points.iter().map(|p| p.0[j]).fold(f64::INFINITY, f64::min);
            let hi = points.iter().map(|p| p.0[j]).fold(f64::NEG_INFINITY, f64::max);
            prop_assert!(post[j] >= lo - 1e-9 && post[j] <= hi + 1e-9);
        }
    }

    #[test]
    fn oracle_velocity_and_score_agree((dx, raw) in atoms(), t in 0.01f64..0.99, seed in any::<u64>()) {
        let m = mixture(&raw);
        let x: Vec<f64> = RngStream::new(seed, 4).gauss_vector(dx).iter().map(|v| 2.0 * v).collect();
        let mut v = vec![0.0; dx];
        let mut s = vec![0.0; dx];
        m.velocity_into(&x, t, &mut v);
        m.score_into(&x, t, &mut s);
        let implied = score_from_velocity(&x, t, &v).unwrap();
        for j in 0..dx {
            prop_assert!((implied[j] - s[j]).abs() < 1e-8 * (1.0 + s[j].abs()));
        }
        // at t = 0 the field is the mixture mean
        m.velocity_into(&x, 0.0, &mut v);
        let mean = m.mean();
        for j in 0..dx {
            prop_assert!((v[j] - mean[j]).abs() < 1e-9 * (1.0 + mean[j].abs()));
        }
    }
}
