//! Quantile binning of continuous actions into per-dimension tokens.

use std::fmt::Write as _;

use serde::Deserialize;

pub const DEFAULT_BINS: usize = 256;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum ActionsError {
    #[error("dimension {dim} has {got} samples, need at least {need}")]
    InsufficientSamples { dim: usize, got: usize, need: usize },
    #[error("need at least 2 bins, got {0}")]
    TooFewBins(usize),
    #[error("no action dimensions to fit")]
    NoDimensions,
    #[error("dimension {dim} contains a non-finite sample")]
    NonFinite { dim: usize },
    #[error("action has {got} dimensions, table has {expected}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("token {token} in dimension {dim} is outside [0, {max}]")]
    TokenOutOfRange { dim: usize, token: usize, max: usize },
    #[error("malformed bin table: {0}")]
    Malformed(String),
}

/// Per-dimension quantile boundaries.
#[derive(Debug, Clone, PartialEq)]
pub struct BinTable {
    pub n_bins: usize,
    /// `n_bins - 1` non-decreasing interior boundaries per dimension.
    pub boundaries: Vec<Vec<f64>>,
    pub data_min: Vec<f64>,
    pub data_max: Vec<f64>,
}

/// Linear interpolation between order statistics of a sorted sample.
fn interpolated_quantile(sorted: &[f64], q: f64) -> f64 {
    let h = (sorted.len() - 1) as f64 * q;
    let lo = h.floor() as usize;
    if lo + 1 >= sorted.len() {
        return sorted[sorted.len() - 1];
    }
    sorted[lo] + (h - lo as f64) * (sorted[lo + 1] - sorted[lo])
}

/// Fits boundaries at quantiles `i / n_bins` for `i` in `1..n_bins`.
pub fn fit_bins(samples: &[Vec<f64>], n_bins: usize) -> Result<BinTable, ActionsError> {
    if n_bins < 2 {
        return Err(ActionsError::TooFewBins(n_bins));
    }
    if samples.is_empty() {
        return Err(ActionsError::NoDimensions);
    }
    let mut boundaries = Vec::with_capacity(samples.len());
    let mut data_min = Vec::with_capacity(samples.len());
    let mut data_max = Vec::with_capacity(samples.len());
    for (dim, values) in samples.iter().enumerate() {
        if values.len() < n_bins {
            return Err(ActionsError::InsufficientSamples {
                dim,
                got: values.len(),
                need: n_bins,
            });
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(ActionsError::NonFinite { dim });
        }
        let mut sorted = values.clone();
        sorted.sort_unstable_by(f64::total_cmp);
        boundaries.push(
            (1..n_bins)
                .map(|i| interpolated_quantile(&sorted, i as f64 / n_bins as f64))
                .collect(),
        );
        data_min.push(sorted[0]);
        data_max.push(sorted[sorted.len() - 1]);
    }
    Ok(BinTable {
        n_bins,
        boundaries,
        data_min,
        data_max,
    })
}

/// Transposes per-step action vectors into per-dimension sample columns.
pub fn columns(actions: &[Vec<f64>]) -> Result<Vec<Vec<f64>>, ActionsError> {
    let Some(first) = actions.first() else {
        return Err(ActionsError::NoDimensions);
    };
    let dims = first.len();
    let mut cols = vec![Vec::with_capacity(actions.len()); dims];
    for a in actions {
        if a.len() != dims {
            return Err(ActionsError::DimensionMismatch {
                expected: dims,
                got: a.len(),
            });
        }
        for (c, &v) in cols.iter_mut().zip(a) {
            c.push(v);
        }
    }
    Ok(cols)
}

impl BinTable {
    pub fn dims(&self) -> usize {
        self.boundaries.len()
    }

    pub fn encode_value(&self, dim: usize, value: f64) -> usize {
        let below = self.boundaries[dim].partition_point(|&b| b < value);
        below.min(self.n_bins - 1)
    }

    pub fn encode(&self, action: &[f64]) -> Result<Vec<usize>, ActionsError> {
        if action.len() != self.dims() {
            return Err(ActionsError::DimensionMismatch {
                expected: self.dims(),
                got: action.len(),
            });
        }
        Ok(action.iter().enumerate().map(|(d, &v)| self.encode_value(d, v)).collect())
    }

    /// `[left, right]` edges of a bin.
    pub fn bin_edges(&self, dim: usize, token: usize) -> (f64, f64) {
        let b = &self.boundaries[dim];
        let left = if token == 0 { self.data_min[dim] } else { b[token - 1] };
        let right = if token == self.n_bins - 1 { self.data_max[dim] } else { b[token] };
        (left, right)
    }

    pub fn decode(&self, tokens: &[usize]) -> Result<Vec<f64>, ActionsError> {
        if tokens.len() != self.dims() {
            return Err(ActionsError::DimensionMismatch {
                expected: self.dims(),
                got: tokens.len(),
            });
        }
        tokens
            .iter()
            .enumerate()
            .map(|(dim, &token)| {
                if token >= self.n_bins {
                    return Err(ActionsError::TokenOutOfRange {
                        dim,
                        token,
                        max: self.n_bins - 1,
                    });
                }
                let (l, r) = self.bin_edges(dim, token);
                Ok(0.5 * (l + r))
            })
            .collect()
    }

    pub fn validate(&self) -> Result<(), ActionsError> {
        let bad = |m: String| Err(ActionsError::Malformed(m));
        if self.n_bins < 2 {
            return bad(format!("n_bins = {}", self.n_bins));
        }
        let d = self.boundaries.len();
        if d == 0 || self.data_min.len() != d || self.data_max.len() != d {
            return bad("dimension counts disagree".into());
        }
        for (i, b) in self.boundaries.iter().enumerate() {
            if b.len() != self.n_bins - 1 {
                return bad(format!("dimension {i} has {} boundaries", b.len()));
            }
            if b.windows(2).any(|w| w[0] > w[1]) {
                return bad(format!("dimension {i} boundaries decrease"));
            }
            if self.data_min[i] > b[0] || b[b.len() - 1] > self.data_max[i] {
                return bad(format!("dimension {i} boundaries exceed the data range"));
            }
        }
        Ok(())
    }

    /// JSON with floats at 17 significant digits and a fixed key order.
    pub fn to_json(&self) -> String {
        fn num(x: f64) -> String {
            format!("{x:.16e}")
        }
        fn list(xs: &[f64]) -> String {
            let parts: Vec<String> = xs.iter().map(|&x| num(x)).collect();
            format!("[{}]", parts.join(","))
        }
        let mut out = String::new();
        let _ = write!(out, "{{\"n_bins\":{},\"dims\":{},\"boundaries\":[", self.n_bins, self.dims());
        let rows: Vec<String> = self.boundaries.iter().map(|b| list(b)).collect();
        out.push_str(&rows.join(","));
        let _ = write!(out, "],\"min\":{},\"max\":{}}}", list(&self.data_min), list(&self.data_max));
        out
    }

    pub fn from_json(text: &str) -> Result<Self, ActionsError> {
        #[derive(Deserialize)]
        struct Doc {
            n_bins: usize,
            dims: usize,
            boundaries: Vec<Vec<f64>>,
            min: Vec<f64>,
            max: Vec<f64>,
        }
        let doc: Doc = serde_json::from_str(text).map_err(|e| ActionsError::Malformed(e.to_string()))?;
        if doc.dims != doc.boundaries.len() {
            return Err(ActionsError::Malformed(format!(
                "dims = {} but {} boundary rows",
                doc.dims,
                doc.boundaries.len()
            )));
        }
        let table = BinTable {
            n_bins: doc.n_bins,
            boundaries: doc.boundaries,
            data_min: doc.min,
            data_max: doc.max,
        };
        table.validate()?;
        Ok(table)
    }
}

pub fn encode_action(action: &[f64], bins: &BinTable) -> Result<Vec<usize>, ActionsError> {
    bins.encode(action)
}

pub fn decode_tokens(tokens: &[usize], bins: &BinTable) -> Result<Vec<f64>, ActionsError> {
    bins.decode(tokens)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::SplitMix64;
    use proptest::prelude::*;

    fn uniform_table() -> BinTable {
        let samples: Vec<f64> = (0..=1000).map(|i| i as f64 / 1000.0).collect();
        fit_bins(&[samples], 256).unwrap()
    }

    #[test]
    fn arithmetic_sequence_boundaries() {
        let t = uniform_table();
        for (i, &b) in t.boundaries[0].iter().enumerate() {
            assert!((b - (i + 1) as f64 / 256.0).abs() < 1e-9, "boundary {i}: {b}");
        }
        t.validate().unwrap();
    }

    #[test]
    fn constant_samples() {
        let t = fit_bins(&[vec![3.5; 300]], 256).unwrap();
        assert!(t.boundaries[0].iter().all(|&b| b == 3.5));
        assert_eq!(t.encode(&[3.5]).unwrap(), vec![0]);
        assert_eq!(t.encode(&[9.0]).unwrap(), vec![255]);
        for tok in [0, 17, 255] {
            assert_eq!(t.decode(&[tok]).unwrap(), vec![3.5]);
        }
    }

    #[test]
    fn encode_examples() {
        let t = uniform_table();
        assert_eq!(t.encode(&[-5.0]).unwrap(), vec![0]);
        let counting = t.boundaries[0].iter().filter(|&&b| b < 0.5).count();
        // The boundary at exactly 0.5 is not strictly below it.
        assert_eq!(counting, 127);
        assert_eq!(t.encode(&[0.5]).unwrap(), vec![127]);
        assert_eq!(t.encode(&[0.5 + 1e-12]).unwrap(), vec![128]);
        assert_eq!(t.encode(&[1.0]).unwrap(), vec![255]);
        assert_eq!(t.encode(&[7.0]).unwrap(), vec![255]);
        assert!(matches!(t.encode(&[0.1, 0.2]), Err(ActionsError::DimensionMismatch { .. })));
    }

    #[test]
    fn decode_examples() {
        let t = uniform_table();
        assert!((t.decode(&[0]).unwrap()[0] - 1.0 / 512.0).abs() < 1e-9);
        assert!(matches!(t.decode(&[256]), Err(ActionsError::TokenOutOfRange { .. })));
    }

    #[test]
    fn insufficient_samples() {
        assert_eq!(
            fit_bins(&[vec![0.0; 10]], 256).unwrap_err(),
            ActionsError::InsufficientSamples {
                dim: 0,
                got: 10,
                need: 256
            }
        );
    }

    #[test]
    fn json_round_trip_and_format() {
        let mut rng = SplitMix64::new(5);
        let cols: Vec<Vec<f64>> = (0..3).map(|_| (0..600).map(|_| rng.next_f64() * 2.0 - 1.0).collect()).collect();
        let t = fit_bins(&cols, 256).unwrap();
        let json = t.to_json();
        assert!(json.starts_with("{\"n_bins\":256,\"dims\":3,\"boundaries\":[["));
        let back = BinTable::from_json(&json).unwrap();
        assert_eq!(back, t);
        let v: serde_json::Value = serde_json::from_str(&json).unwrap();
        assert_eq!(v["boundaries"][0].as_array().unwrap().len(), 255);
    }

    #[test]
    fn columns_transpose() {
        let cols = columns(&[vec![1.0, 2.0], vec![3.0, 4.0]]).unwrap();
        assert_eq!(cols, vec![vec![1.0, 3.0], vec![2.0, 4.0]]);
        assert!(columns(&[vec![1.0], vec![1.0, 2.0]]).is_err());
    }

    proptest! {
        #[test]
        fn monotone_and_round_trip(seed: u64, a in -2.0f64..2.0, b in -2.0f64..2.0) {
            let mut rng = SplitMix64::new(seed);
            let col: Vec<f64> = (0..512).map(|_| rng.next_f64().powi(3) * 3.0 - 1.0).collect();
            let t = fit_bins(&[col], 256).unwrap();
            let (lo, hi) = if a <= b { (a, b) } else { (b, a) };
            prop_assert!(t.encode(&[lo]).unwrap()[0] <= t.encode(&[hi]).unwrap()[0]);
            let v = lo.clamp(t.data_min[0], t.data_max[0]);
            let tok = t.encode(&[v]).unwrap()[0];
            let (l, r) = t.bin_edges(0, tok);
            let back = t.decode(&[tok]).unwrap()[0];
            prop_assert!((back - v).abs() <= (r - l) / 2.0 + 1e-12);
        }
    }
}
