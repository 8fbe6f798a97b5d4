use alloc::vec;
use alloc::vec::Vec;

use super::Mlp;
use crate::error::{Error, Result};
use crate::linalg::{dot, gemm_ab, gemm_abt, gemm_atb, norm2, Matrix};

/// Regression batch: inputs `(x_in, y_in, t_in)` and targets, one row each.
#[derive(Clone, Debug, PartialEq)]
pub struct Batch {
    pub x_in: Matrix,
    pub y_in: Matrix,
    pub t_in: Vec<f64>,
    pub target: Matrix,
}

impl Batch {
    pub fn len(&self) -> usize {
        self.x_in.rows()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

impl Mlp {
    /// Mean squared ℓ² residual over the batch and its exact gradient.
    ///
    /// When the output cap is active for a row (`|raw|₂ > K`), the
    /// backward pass goes through the radial rescaling; at `|raw|₂ = K`
    /// the unprojected branch is used.
    pub fn loss_and_grad(&self, batch: &Batch) -> Result<(f64, Vec<f64>)> {
        let rows = batch.len();
        if rows == 0 {
            return Err(Error::Empty("training batch"));
        }
        let dx = self.config.dx;
        if batch.target.cols() != dx || batch.target.rows() != rows {
            return Err(Error::DimensionMismatch {
                what: "batch targets",
                expected: dx,
                got: batch.target.cols(),
            });
        }
        if batch.y_in.rows() != rows || batch.t_in.len() != rows {
            return Err(Error::DimensionMismatch {
                what: "batch rows",
                expected: rows,
                got: batch.y_in.rows().min(batch.t_in.len()),
            });
        }
        if batch.x_in.cols() != dx || batch.y_in.cols() != self.config.dy {
            return Err(Error::DimensionMismatch {
                what: "batch inputs",
                expected: dx + self.config.dy,
                got: batch.x_in.cols() + batch.y_in.cols(),
            });
        }

        let nl = self.layers.len();
        let ind = self.config.in_dim();
        let mut acts: Vec<Vec<f64>> = Vec::with_capacity(nl);
        let mut input = vec![0.0; rows * ind];
        for i in 0..rows {
            self.encode_input(
                batch.x_in.row(i),
                batch.y_in.row(i),
                batch.t_in[i],
                &mut input[i * ind..(i + 1) * ind],
            );
        }
        acts.push(input);

        let mut raw = Vec::new();
        for (l, ly) in self.layers.iter().enumerate() {
            let mut z = vec![0.0; rows * ly.out];
            let bias = &self.params[ly.b..ly.b + ly.out];
            for r in z.chunks_exact_mut(ly.out) {
                r.copy_from_slice(bias);
            }
            gemm_abt(rows, ly.inp, ly.out, 1.0, &acts[l], &self.params[ly.w..ly.b], 1.0, &mut z);
            if l + 1 < nl {
                for v in z.iter_mut() {
                    if *v < 0.0 {
                        *v = 0.0;
                    }
                }
                acts.push(z);
            } else {
                raw = z;
            }
        }

        // loss and d loss / d raw output
        let scale = 2.0 / rows as f64;
        let mut loss = 0.0;
        let mut delta = vec![0.0; rows * dx];
        for i in 0..rows {
            let r_out = &raw[i * dx..(i + 1) * dx];
            let target = batch.target.row(i);
            let d = &mut delta[i * dx..(i + 1) * dx];
            let r = norm2(r_out);
            match self.config.output_cap {
                Some(cap) if r > cap => {
                    let s = cap / r;
                    for j in 0..dx {
                        let e = s * r_out[j] - target[j];
                        loss += e * e;
                        d[j] = scale * e;
                    }
                    // d(s·raw)/d raw = s (I − û ûᵀ)
                    let proj = dot(d, r_out) / (r * r);
                    for j in 0..dx {
                        d[j] = s * (d[j] - proj * r_out[j]);
                    }
                }
                _ => {
                    for j in 0..dx {
                        let e = r_out[j] - target[j];
                        loss += e * e;
                        d[j] = scale * e;
                    }
                }
            }
        }
        loss /= rows as f64;

        let mut grad = vec![0.0; self.params.len()];
        for l in (0..nl).rev() {
            let ly = self.layers[l];
            gemm_atb(ly.out, rows, ly.inp, 1.0, &delta, &acts[l], 0.0, &mut grad[ly.w..ly.b]);
            let gb = &mut grad[ly.b..ly.b + ly.out];
            for r in delta.chunks_exact(ly.out) {
                for (g, d) in gb.iter_mut().zip(r) {
                    *g += d;
                }
            }
            if l > 0 {
                let mut prev = vec![0.0; rows * ly.inp];
                gemm_ab(rows, ly.out, ly.inp, 1.0, &delta, &self.params[ly.w..ly.b], 0.0, &mut prev);
                for (p, a) in prev.iter_mut().zip(&acts[l]) {
                    if *a <= 0.0 {
                        *p = 0.0;
                    }
                }
                delta = prev;
            }
        }
        Ok((loss, grad))
    }

    /// Mean squared residual only.
    pub fn loss(&self, batch: &Batch) -> Result<f64> {
        let out = self.forward_batch(&batch.x_in, &batch.y_in, &batch.t_in)?;
        let rows = batch.len();
        if rows == 0 {
            return Err(Error::Empty("training batch"));
        }
        let sq: f64 = out
            .as_slice()
            .iter()
            .zip(batch.target.as_slice())
            .map(|(a, b)| (a - b) * (a - b))
            .sum();
        Ok(sq / rows as f64)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::{MlpConfig, TimeInput};
    use crate::rng::RngStream;

    fn scalar_net(w: f64) -> Mlp {
        let mut cfg = MlpConfig::generator(1, 0, vec![]);
        cfg.time = TimeInput::Absent;
        Mlp::from_params(cfg, vec![w, 0.0]).unwrap()
    }

    fn single(x: f64, target: f64) -> Batch {
        Batch {
            x_in: Matrix::from_vec(1, 1, vec![x]).unwrap(),
            y_in: Matrix::zeros(1, 0),
            t_in: vec![0.0],
            target: Matrix::from_vec(1, 1, vec![target]).unwrap(),
        }
    }

    #[test]
    fn hand_computed_linear_case() {
        let (loss, grad) = scalar_net(1.0).loss_and_grad(&single(1.0, 3.0)).unwrap();
        assert!((loss - 4.0).abs() < 1e-15);
        assert!((grad[0] + 4.0).abs() < 1e-15);
        assert!((grad[1] + 4.0).abs() < 1e-15);
    }

    #[test]
    fn perfect_fit_has_zero_gradient() {
        let (loss, grad) = scalar_net(2.0).loss_and_grad(&single(1.5, 3.0)).unwrap();
        assert_eq!(loss, 0.0);
        assert!(grad.iter().all(|&g| g == 0.0));
    }

    #[test]
    fn empty_batch_is_an_error() {
        let b = Batch {
            x_in: Matrix::zeros(0, 1),
            y_in: Matrix::zeros(0, 0),
            t_in: vec![],
            target: Matrix::zeros(0, 1),
        };
        assert_eq!(scalar_net(1.0).loss_and_grad(&b), Err(Error::Empty("training batch")));
    }

    #[test]
    fn loss_matches_loss_and_grad() {
        let cfg = MlpConfig::velocity(2, 1).with_hidden(vec![6, 5]);
        let mut rng = RngStream::new(1, 2);
        let mlp = Mlp::new(cfg, &mut rng).unwrap();
        let b = Batch {
            x_in: Matrix::from_vec(3, 2, rng.gauss_vector(6)).unwrap(),
            y_in: Matrix::from_vec(3, 1, rng.gauss_vector(3)).unwrap(),
            t_in: vec![0.1, 0.4, 0.8],
            target: Matrix::from_vec(3, 2, rng.gauss_vector(6)).unwrap(),
        };
        let (l1, _) = mlp.loss_and_grad(&b).unwrap();
        let l2 = mlp.loss(&b).unwrap();
        assert!((l1 - l2).abs() < 1e-12);
    }
}
