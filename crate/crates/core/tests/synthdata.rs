use cfflow_core::eval::ks_two_sample;
use cfflow_core::linalg::{mean, sample_variance};
use cfflow_core::synthdata::{gen_regression, gen_shape, RegressionModel, Shape};

#[test]
fn shape_marginals_are_stable_across_seeds() {
    for shape in Shape::ALL {
        let a = gen_shape(shape, 100_000, 1).unwrap();
        let b = gen_shape(shape, 100_000, 2).unwrap();
        for (ma, mb) in [(&a.xs, &b.xs), (&a.ys, &b.ys)] {
            let d = ks_two_sample(ma.as_slice(), mb.as_slice()).unwrap();
            assert!(d <= 0.02, "{}: KS {d}", shape.name());
        }
    }
}

#[test]
fn regression_residuals_have_the_stated_moments() {
    for model in RegressionModel::ALL {
        let n = 100_000;
        let data = gen_regression(model, n, 7).unwrap();
        let z: Vec<f64> = (0..n)
            .map(|i| (data.x(i)[0] - model.conditional_mean(data.y(i))) / model.conditional_std(data.y(i)))
            .collect();
        // standardised residuals: mean 0, variance 1
        let se = (1.0 / n as f64).sqrt();
        assert!(mean(&z).abs() < 3.0 * se, "{}: mean {}", model.name(), mean(&z));
        // var of the sample variance is (κ − 1)/n; κ ≤ 3 here
        let var_se = (2.0 / n as f64).sqrt();
        assert!((sample_variance(&z) - 1.0).abs() < 3.0 * var_se, "{}: var {}", model.name(), sample_variance(&z));
    }
}

#[test]
fn four_squares_centres_are_balanced() {
    let n = 100_000;
    let data = gen_shape(Shape::FourSquares, n, 3).unwrap();
    // each coordinate is ±1 + U(−½, ½): mean 0, variance 1 + 1/12
    let var = 1.0 + 1.0 / 12.0;
    let se = (var / n as f64).sqrt();
    for m in [&data.xs, &data.ys] {
        assert!(mean(m.as_slice()).abs() < 3.0 * se);
        assert!((sample_variance(m.as_slice()) - var).abs() < 0.02);
    }
    assert!(data.xs.as_slice().iter().all(|x| (0.5..=1.5).contains(&x.abs())));
}
