use cfflow_core::eval::{coverage, prediction_interval, w2_vs_quantile};
use cfflow_core::oracle::normal_cdf;
use cfflow_core::RngStream;

fn normal_quantile(p: f64) -> cfflow_core::Result<f64> {
    let (mut lo, mut hi) = (-10.0, 10.0);
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if normal_cdf(mid) < p {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok(0.5 * (lo + hi))
}

#[test]
fn w2_of_gaussian_draws_against_exact_quantiles_is_small() {
    let xs = RngStream::new(1, 0).gauss_vector(100_000);
    let w = w2_vs_quantile(&xs, normal_quantile).unwrap();
    assert!(w <= 0.02, "W2 {w}");
}

#[test]
fn student_t_intervals_cover_at_the_nominal_rate() {
    // exact Gaussian draws standing in for a perfect sampler
    let cases = 5000;
    let mut rng = RngStream::new(2, 0);
    let mut intervals = Vec::with_capacity(cases);
    let mut truths = Vec::with_capacity(cases);
    for _ in 0..cases {
        let mu = 3.0 * rng.gauss();
        let sd = 0.5 + rng.uniform();
        let samples: Vec<f64> = (0..200).map(|_| mu + sd * rng.gauss()).collect();
        intervals.push(prediction_interval(&samples, 0.05).unwrap());
        truths.push(mu + sd * rng.gauss());
    }
    let cr = coverage(&intervals, &truths).unwrap();
    assert!((0.93..=0.97).contains(&cr), "coverage {cr}");
}
