//! Hyperparameter search-space descriptors.
//!
//! Dimensions live on a continuous [0,1] unit cube internally; integer and
//! ordinal dimensions snap to their grid when mapped back, and the snapped
//! value is what gets recorded and evaluated.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ParamKind {
    Int {
        lo: i64,
        hi: i64,
        #[serde(default = "default_step")]
        step: i64,
    },
    Float {
        lo: f64,
        hi: f64,
        #[serde(default)]
        log: bool,
    },
    Ordinal {
        values: Vec<f64>,
    },
}

fn default_step() -> i64 {
    1
}

#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
pub struct ParamSpec {
    pub name: String,
    #[serde(flatten)]
    pub kind: ParamKind,
}

#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
pub struct SearchSpace {
    pub params: Vec<ParamSpec>,
}

impl SearchSpace {
    pub fn new(params: Vec<ParamSpec>) -> Result<Self> {
        let s = SearchSpace { params };
        s.validate()?;
        Ok(s)
    }

    pub fn validate(&self) -> Result<()> {
        if self.params.is_empty() {
            return Err(Error::Config("search space has no parameters".into()));
        }
        for p in &self.params {
            match &p.kind {
                ParamKind::Int { lo, hi, step } => {
                    if lo >= hi {
                        return Err(Error::Config(format!("{}: lo {lo} >= hi {hi}", p.name)));
                    }
                    if *step <= 0 {
                        return Err(Error::Config(format!("{}: step must be positive", p.name)));
                    }
                }
                ParamKind::Float { lo, hi, log } => {
                    if !(lo < hi) {
                        return Err(Error::Config(format!("{}: lo {lo} >= hi {hi}", p.name)));
                    }
                    if *log && *lo <= 0.0 {
                        return Err(Error::Config(format!(
                            "{}: log scale requires lo > 0, got {lo}",
                            p.name
                        )));
                    }
                }
                ParamKind::Ordinal { values } => {
                    if values.len() < 2 {
                        return Err(Error::Config(format!(
                            "{}: ordinal set needs at least 2 values",
                            p.name
                        )));
                    }
                }
            }
        }
        Ok(())
    }

    pub fn dim(&self) -> usize {
        self.params.len()
    }

    /// Map a unit-cube point to a concrete hyperparameter vector,
    /// snapping integer/ordinal dimensions to their grids.
    pub fn from_unit(&self, u: &[f64]) -> Vec<f64> {
        assert_eq!(u.len(), self.dim());
        self.params
            .iter()
            .zip(u)
            .map(|(p, &ui)| {
                let ui = ui.clamp(0.0, 1.0);
                match &p.kind {
                    ParamKind::Int { lo, hi, step } => {
                        let n = (hi - lo) / step; // grid has n+1 points
                        let idx = (ui * n as f64).round() as i64;
                        (lo + idx.min(n) * step) as f64
                    }
                    ParamKind::Float { lo, hi, log } => {
                        let v = if *log {
                            (lo.ln() + ui * (hi.ln() - lo.ln())).exp()
                        } else {
                            lo + ui * (hi - lo)
                        };
                        v.clamp(*lo, *hi)
                    }
                    ParamKind::Ordinal { values } => {
                        let idx = (ui * (values.len() - 1) as f64).round() as usize;
                        values[idx.min(values.len() - 1)]
                    }
                }
            })
            .collect()
    }

    /// Inverse of `from_unit`; grid dimensions land on their exact grid
    /// coordinate so round-tripping is stable.
    pub fn to_unit(&self, h: &[f64]) -> Vec<f64> {
        assert_eq!(h.len(), self.dim());
        self.params
            .iter()
            .zip(h)
            .map(|(p, &v)| {
                let u = match &p.kind {
                    ParamKind::Int { lo, hi, step } => {
                        let n = (hi - lo) / step;
                        let idx = ((v - *lo as f64) / *step as f64).round();
                        idx / n as f64
                    }
                    ParamKind::Float { lo, hi, log } => {
                        if *log {
                            (v.ln() - lo.ln()) / (hi.ln() - lo.ln())
                        } else {
                            (v - lo) / (hi - lo)
                        }
                    }
                    ParamKind::Ordinal { values } => {
                        let idx = values
                            .iter()
                            .enumerate()
                            .min_by(|a, b| {
                                (a.1 - v).abs().partial_cmp(&(b.1 - v).abs()).unwrap()
                            })
                            .map(|(i, _)| i)
                            .unwrap_or(0);
                        idx as f64 / (values.len() - 1) as f64
                    }
                };
                u.clamp(0.0, 1.0)
            })
            .collect()
    }

    pub fn contains(&self, h: &[f64]) -> bool {
        if h.len() != self.dim() {
            return false;
        }
        self.params.iter().zip(h).all(|(p, &v)| match &p.kind {
            ParamKind::Int { lo, hi, step } => {
                let iv = v.round() as i64;
                (v - iv as f64).abs() < 1e-9 && iv >= *lo && iv <= *hi && (iv - lo) % step == 0
            }
            ParamKind::Float { lo, hi, .. } => v >= *lo && v <= *hi,
            ParamKind::Ordinal { values } => values.iter().any(|x| (x - v).abs() < 1e-12),
        })
    }

    pub fn index_of(&self, name: &str) -> Option<usize> {
        self.params.iter().position(|p| p.name == name)
    }
}

/// The default space tuned by the search: input length, moving-average
/// kernel, attention gate, and learning rate (log scale).
pub fn default_space() -> SearchSpace {
    SearchSpace::new(vec![
        ParamSpec {
            name: "input_len".into(),
            kind: ParamKind::Int { lo: 16, hi: 192, step: 16 },
        },
        ParamSpec {
            name: "ma_kernel".into(),
            kind: ParamKind::Int { lo: 27, hi: 327, step: 20 },
        },
        ParamSpec {
            name: "scale".into(),
            kind: ParamKind::Float { lo: 0.0, hi: 1.0, log: false },
        },
        ParamSpec {
            name: "lr".into(),
            kind: ParamKind::Float { lo: 1e-5, hi: 1e-3, log: true },
        },
    ])
    .expect("default space is valid")
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn default_space_shape() {
        let s = default_space();
        assert_eq!(s.dim(), 4);
        assert_eq!(s.index_of("lr"), Some(3));
        // grid endpoints map to the bounds
        let lo = s.from_unit(&[0.0, 0.0, 0.0, 0.0]);
        let hi = s.from_unit(&[1.0, 1.0, 1.0, 1.0]);
        assert_eq!(lo[0], 16.0);
        assert_eq!(hi[0], 192.0);
        assert_eq!(lo[1], 27.0);
        assert_eq!(hi[1], 327.0);
        assert!((lo[3] - 1e-5).abs() < 1e-12);
        assert!((hi[3] - 1e-3).abs() < 1e-12);
    }

    #[test]
    fn int_snapping_respects_step() {
        let s = default_space();
        for i in 0..=100 {
            let u = i as f64 / 100.0;
            let h = s.from_unit(&[u, u, u, u]);
            assert!(s.contains(&h), "u={u} h={h:?}");
            assert_eq!((h[0] as i64 - 16) % 16, 0);
            assert_eq!((h[1] as i64 - 27) % 20, 0);
        }
    }

    #[test]
    fn unit_round_trip_is_stable() {
        let s = default_space();
        let h = s.from_unit(&[0.37, 0.81, 0.5, 0.25]);
        let u = s.to_unit(&h);
        let h2 = s.from_unit(&u);
        assert_eq!(h, h2);
    }

    #[test]
    fn log_scale_midpoint_is_geometric_mean() {
        let s = SearchSpace::new(vec![ParamSpec {
            name: "lr".into(),
            kind: ParamKind::Float { lo: 1e-5, hi: 1e-3, log: true },
        }])
        .unwrap();
        let mid = s.from_unit(&[0.5])[0];
        assert!((mid - 1e-4).abs() < 1e-12, "mid {mid}");
    }

    #[test]
    fn ordinal_snaps_to_members() {
        let s = SearchSpace::new(vec![ParamSpec {
            name: "o".into(),
            kind: ParamKind::Ordinal { values: vec![0.1, 0.5, 0.9] },
        }])
        .unwrap();
        assert_eq!(s.from_unit(&[0.0])[0], 0.1);
        assert_eq!(s.from_unit(&[0.4])[0], 0.5);
        assert_eq!(s.from_unit(&[1.0])[0], 0.9);
        assert!(s.contains(&[0.5]));
        assert!(!s.contains(&[0.6]));
    }

    #[test]
    fn degenerate_bounds_rejected() {
        assert!(SearchSpace::new(vec![ParamSpec {
            name: "x".into(),
            kind: ParamKind::Float { lo: 1.0, hi: 1.0, log: false },
        }])
        .is_err());
        assert!(SearchSpace::new(vec![ParamSpec {
            name: "x".into(),
            kind: ParamKind::Float { lo: 0.0, hi: 1.0, log: true },
        }])
        .is_err());
        assert!(SearchSpace::new(vec![]).is_err());
    }

    #[test]
    fn json_round_trip() {
        let s = default_space();
        let j = serde_json::to_string(&s).unwrap();
        let s2: SearchSpace = serde_json::from_str(&j).unwrap();
        assert_eq!(s, s2);
    }
}
