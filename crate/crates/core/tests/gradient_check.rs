use cfflow_core::nn::gradcheck::{finite_difference_grad, max_relative_error, random_case, FD_STEP, REL_FLOOR};
use cfflow_core::nn::{Batch, Mlp, MlpConfig};
use cfflow_core::{Matrix, RngStream};

#[test]
fn backprop_matches_central_differences_on_100_configs() {
    let mut rng = RngStream::new(2024, 7);
    for case in 0..100 {
        let (mlp, batch) = random_case(&mut rng);
        let (_, grad) = mlp.loss_and_grad(&batch).unwrap();
        let fd = finite_difference_grad(&mlp, &batch, FD_STEP).unwrap();
        let err = max_relative_error(&grad, &fd, REL_FLOOR);
        assert!(err <= 1e-4, "case {case}: relative error {err:e} for {:?}", mlp.config());
    }
}

#[test]
fn generator_networks_check_too() {
    let mut rng = RngStream::new(5, 5);
    for _ in 0..10 {
        let mut mlp = Mlp::new(MlpConfig::generator(2, 1, vec![6, 5]), &mut rng).unwrap();
        for p in mlp.params_mut() {
            *p += 0.1 * rng.gauss();
        }
        let batch = Batch {
            x_in: Matrix::from_vec(4, 2, rng.gauss_vector(8)).unwrap(),
            y_in: Matrix::from_vec(4, 1, rng.gauss_vector(4)).unwrap(),
            t_in: vec![0.0; 4],
            target: Matrix::from_vec(4, 2, rng.gauss_vector(8)).unwrap(),
        };
        let (_, grad) = mlp.loss_and_grad(&batch).unwrap();
        let fd = finite_difference_grad(&mlp, &batch, FD_STEP).unwrap();
        assert!(max_relative_error(&grad, &fd, REL_FLOOR) <= 1e-4);
    }
}
