//! Atom-mixture targets in TOML:
//!
//! ```toml
//! dx = 1
//! dy = 0
//!
//! [[condition]]
//! key = []
//! atoms = [[-1.0], [1.0]]
//! weights = [0.5, 0.5]
//! # variances = [0.0, 0.0]   optional, per atom
//! ```

use std::path::Path;

use cfflow_core::oracle::{Atom, AtomMixture, DiscreteConditionalTarget};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TargetFile {
    pub dx: usize,
    #[serde(default)]
    pub dy: usize,
    pub condition: Vec<ConditionEntry>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ConditionEntry {
    #[serde(default)]
    pub key: Vec<f64>,
    pub atoms: Vec<Vec<f64>>,
    pub weights: Vec<f64>,
    #[serde(default)]
    pub variances: Option<Vec<f64>>,
}

impl TargetFile {
    pub fn build(&self) -> Result<DiscreteConditionalTarget> {
        let mut table = Vec::with_capacity(self.condition.len());
        for (i, c) in self.condition.iter().enumerate() {
            if c.atoms.len() != c.weights.len() {
                return Err(Error::Config(format!(
                    "condition {i}: {} atoms but {} weights",
                    c.atoms.len(),
                    c.weights.len()
                )));
            }
            if let Some(v) = &c.variances {
                if v.len() != c.atoms.len() {
                    return Err(Error::Config(format!("condition {i}: variances length differs from atoms")));
                }
            }
            let atoms: Vec<Atom> = c
                .atoms
                .iter()
                .enumerate()
                .map(|(k, u)| Atom::gaussian(u.clone(), c.weights[k], c.variances.as_ref().map_or(0.0, |v| v[k])))
                .collect();
            let m = AtomMixture::new(&atoms).map_err(|e| Error::Config(format!("condition {i}: {e}")))?;
            if m.dx() != self.dx {
                return Err(Error::Config(format!("condition {i}: atoms have dimension {}, dx = {}", m.dx(), self.dx)));
            }
            table.push((c.key.clone(), m));
        }
        Ok(DiscreteConditionalTarget::new(self.dy, table)?)
    }

    /// Equal-weight point masses at `-1` and `1`.
    pub fn two_atoms() -> Self {
        Self {
            dx: 1,
            dy: 0,
            condition: vec![ConditionEntry {
                key: vec![],
                atoms: vec![vec![-1.0], vec![1.0]],
                weights: vec![0.5, 0.5],
                variances: None,
            }],
        }
    }
}

pub fn load_target(path: &Path) -> Result<DiscreteConditionalTarget> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let file: TargetFile = toml::from_str(&text).map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
    file.build()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_keyed_targets() {
        let text = r#"
            dx = 1
            dy = 1
            [[condition]]
            key = [0.0]
            atoms = [[0.0], [1.0]]
            weights = [0.25, 0.75]
            [[condition]]
            key = [1.0]
            atoms = [[2.0]]
            weights = [1.0]
            variances = [0.5]
        "#;
        let f: TargetFile = toml::from_str(text).unwrap();
        let t = f.build().unwrap();
        assert_eq!(t.conditional_mean(&[0.1]), vec![0.75]);
        assert_eq!(t.conditional_mean(&[0.9]), vec![2.0]);
    }

    #[test]
    fn bad_weights_rejected() {
        let mut f = TargetFile::two_atoms();
        f.condition[0].weights = vec![0.5, 0.6];
        assert!(f.build().is_err());
        let bad: std::result::Result<TargetFile, _> = toml::from_str("dx = 1\ncondition = []\nextra = 3\n");
        assert!(bad.is_err());
    }
}
