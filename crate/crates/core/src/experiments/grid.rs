use std::cmp::Ordering;
use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result};
use crate::optim::{Algorithm, OptimizerConfig};

/// Candidate values per parameter for one algorithm. Parameters without an
/// axis keep their defaults.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParamGrid {
    pub algorithm: Algorithm,
    pub axes: BTreeMap<String, Vec<f64>>,
}

impl ParamGrid {
    pub fn new(algorithm: Algorithm) -> Self {
        Self {
            algorithm,
            axes: BTreeMap::new(),
        }
    }

    pub fn axis(mut self, key: &str, values: &[f64]) -> Self {
        self.axes.insert(key.to_owned(), values.to_vec());
        self
    }

    /// Default scan ranges.
    pub fn default_for(algorithm: Algorithm) -> Self {
        const RATES: [f64; 5] = [0.03, 0.1, 0.3, 1.0, 3.0];
        let grid = Self::new(algorithm);
        match algorithm {
            Algorithm::Sgd => grid.axis("eta", &RATES),
            Algorithm::Nesterov => grid.axis("eta", &RATES).axis("mu", &[0.5, 0.9, 0.99]),
            Algorithm::Adam => grid
                .axis("adam_alpha", &[1e-4, 3e-4, 1e-3, 3e-3])
                .axis("epsilon", &[1e-8, 1e-4, 1e-2]),
            Algorithm::DlrPre | Algorithm::DlrPost => grid
                .axis("eta0", &RATES)
                .axis("alpha", &[1.0, 3.0, 10.0, 30.0]),
            Algorithm::Scheduled => grid,
        }
    }

    /// Cartesian product in lexicographic parameter order (keys sorted by
    /// name, values ascending, duplicates dropped).
    pub fn points(&self) -> Result<Vec<OptimizerConfig>> {
        let mut combos: Vec<BTreeMap<String, f64>> = vec![BTreeMap::new()];
        for (key, values) in &self.axes {
            let mut values = values.clone();
            if values.is_empty() {
                return Err(invalid(format!("grid axis `{key}` has no values")));
            }
            values.sort_by(f64::total_cmp);
            values.dedup();
            combos = combos
                .into_iter()
                .flat_map(|c| {
                    values.iter().map(move |&v| {
                        let mut c = c.clone();
                        c.insert(key.clone(), v);
                        c
                    })
                })
                .collect();
        }
        let mut points = combos
            .iter()
            .map(|p| OptimizerConfig::from_params(self.algorithm, p))
            .collect::<Result<Vec<_>>>()?;
        points.sort_by(compare_params);
        Ok(points)
    }
}

/// Lexicographic order on the flat parameter list.
pub fn compare_params(a: &OptimizerConfig, b: &OptimizerConfig) -> Ordering {
    let (pa, pb) = (a.params(), b.params());
    for ((ka, va), (kb, vb)) in pa.iter().zip(pb.iter()) {
        let ord = ka.cmp(kb).then(va.total_cmp(vb));
        if ord != Ordering::Equal {
            return ord;
        }
    }
    pa.len().cmp(&pb.len())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn product_is_sorted_and_order_free() {
        let g = ParamGrid::new(Algorithm::DlrPre)
            .axis("eta0", &[1.0, 0.1])
            .axis("alpha", &[30.0, 3.0, 3.0]);
        let pts = g.points().unwrap();
        assert_eq!(pts.len(), 4);
        let flat: Vec<Vec<f64>> = pts.iter().map(|p| p.params().values().copied().collect()).collect();
        assert_eq!(
            flat,
            vec![vec![3.0, 0.1], vec![3.0, 1.0], vec![30.0, 0.1], vec![30.0, 1.0]]
        );
        let permuted = ParamGrid::new(Algorithm::DlrPre)
            .axis("alpha", &[3.0, 30.0])
            .axis("eta0", &[0.1, 1.0]);
        assert_eq!(permuted.points().unwrap(), pts);
    }

    #[test]
    fn default_grid_sizes() {
        let n = |a| ParamGrid::default_for(a).points().unwrap().len();
        assert_eq!(n(Algorithm::Sgd), 5);
        assert_eq!(n(Algorithm::Nesterov), 15);
        assert_eq!(n(Algorithm::Adam), 12);
        assert_eq!(n(Algorithm::DlrPost), 20);
    }

    #[test]
    fn bad_axes_rejected() {
        assert!(ParamGrid::new(Algorithm::Sgd).axis("eta", &[]).points().is_err());
        assert!(ParamGrid::new(Algorithm::Sgd).axis("mu", &[0.5]).points().is_err());
        assert!(ParamGrid::new(Algorithm::Sgd).axis("eta", &[-1.0]).points().is_err());
    }
}
