//! Order-preserving parallel maps over conditions and row chunks. Every
//! unit of work owns its RNG substream, so results do not depend on the
//! thread count.

use std::ops::Range;

use cfflow_core::flow::{self, VelocityField, CHUNK};
use cfflow_core::{FlowConfig, Matrix, RngStream};
use rayon::prelude::*;

use crate::error::Result;

/// `f(0), …, f(n − 1)` in parallel; on failure returns the error of the
/// lowest failing index.
pub fn map_indexed<T, F>(n: usize, f: F) -> Result<Vec<T>>
where
    T: Send,
    F: Fn(usize) -> Result<T> + Sync + Send,
{
    let results: Vec<Result<T>> = (0..n).into_par_iter().map(f).collect();
    results.into_iter().collect()
}

fn chunks(n: usize) -> Vec<Range<usize>> {
    (0..n).step_by(CHUNK).map(|s| s..(s + CHUNK).min(n)).collect()
}

fn stack(parts: Vec<Matrix>, cols: usize) -> Result<Matrix> {
    let mut out = Matrix::zeros(0, cols);
    for p in &parts {
        out.extend_rows(p)?;
    }
    Ok(out)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Integrator {
    Ode,
    Sde,
}

/// `count` endpoints at one condition, row `i` driven by `rng.substream(i)`.
pub fn sample_condition<F>(field: &F, y: &[f64], flow: &FlowConfig, count: usize, rng: &RngStream, how: Integrator) -> Result<Matrix>
where
    F: VelocityField + Sync + ?Sized,
{
    let parts = map_indexed(chunks(count).len(), |c| {
        let rows = c * CHUNK..((c + 1) * CHUNK).min(count);
        Ok(match how {
            Integrator::Ode => flow::sample_rows(field, y, flow, rng, rows)?,
            Integrator::Sde => flow::sde_sample_rows(field, y, flow, rng, rows)?,
        })
    })?;
    stack(parts, field.dx())
}

/// One endpoint per row of `ys`.
pub fn sample_joint<F>(field: &F, ys: &Matrix, flow: &FlowConfig, rng: &RngStream, how: Integrator) -> Result<Matrix>
where
    F: VelocityField + Sync + ?Sized,
{
    let n = ys.rows();
    let parts = map_indexed(chunks(n).len(), |c| {
        let rows = c * CHUNK..((c + 1) * CHUNK).min(n);
        Ok(match how {
            Integrator::Ode => flow::sample_joint_rows(field, ys, flow, rng, rows)?,
            Integrator::Sde => flow::sde_joint_rows(field, ys, flow, rng, rows)?,
        })
    })?;
    stack(parts, field.dx())
}

#[cfg(test)]
mod tests {
    use super::*;
    use cfflow_core::DiscreteConditionalTarget;

    #[test]
    fn parallel_matches_sequential() {
        let target = DiscreteConditionalTarget::point_mass(&[0.5]);
        let flow = FlowConfig::new(0.9, 10).unwrap();
        let rng = RngStream::new(1, 2);
        let par = sample_condition(&target, &[], &flow, 700, &rng, Integrator::Ode).unwrap();
        let seq = flow::sample_batch(&target, &[], &flow, 700, &rng).unwrap();
        assert_eq!(par, seq);
        let par = sample_condition(&target, &[], &flow, 700, &rng, Integrator::Sde).unwrap();
        let seq = flow::sde_sample(&target, &[], &flow, 700, &rng).unwrap();
        assert_eq!(par, seq);
    }

    #[test]
    fn lowest_error_wins() {
        let r: Result<Vec<usize>> = map_indexed(100, |i| {
            if i % 30 == 29 {
                Err(crate::error::Error::Config(format!("bad {i}")))
            } else {
                Ok(i)
            }
        });
        assert_eq!(r.unwrap_err().to_string(), "config: bad 29");
    }
}
