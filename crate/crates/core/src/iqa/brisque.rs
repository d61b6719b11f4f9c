//! Linear BRISQUE scorer over min–max normalized NSS features.

use std::fmt::Write as _;
use std::path::Path;

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};

use super::nss::{NssFeatures, FEATURE_COUNT};

pub const MODEL_FORMAT: &str = "hyres-brisque/1";

const BUNDLED: &str = include_str!("brisque_model.txt");

#[derive(Debug, Clone, PartialEq)]
pub struct BrisqueModel {
    weights: Vec<f64>,
    bias: f64,
    min: Vec<f64>,
    max: Vec<f64>,
    note: String,
}

fn parse_list(text: &str, key: &str) -> Result<Vec<f64>> {
    text.split(',')
        .map(|t| {
            t.trim()
                .parse::<f64>()
                .map_err(|_| Error::Format(format!("bad value {t:?} in `{key}`")))
        })
        .collect()
}

impl BrisqueModel {
    pub fn new(weights: Vec<f64>, bias: f64, min: Vec<f64>, max: Vec<f64>, note: impl Into<String>) -> Result<Self> {
        if weights.len() != FEATURE_COUNT || min.len() != FEATURE_COUNT || max.len() != FEATURE_COUNT {
            return Err(Error::Validation(format!(
                "BRISQUE model vectors must have length {FEATURE_COUNT}"
            )));
        }
        if !bias.is_finite() || weights.iter().chain(&min).chain(&max).any(|v| !v.is_finite()) {
            return Err(Error::Validation("non-finite BRISQUE model parameter".into()));
        }
        if let Some(i) = (0..FEATURE_COUNT).find(|&i| min[i] >= max[i]) {
            return Err(Error::Validation(format!(
                "feature {i}: min {} is not below max {}",
                min[i], max[i]
            )));
        }
        Ok(Self {
            weights,
            bias,
            min,
            max,
            note: note.into(),
        })
    }

    /// Model shipped with the crate, fit on a synthetic degradation ladder.
    pub fn bundled() -> Self {
        Self::from_text(BUNDLED).expect("bundled BRISQUE model is valid")
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn bias(&self) -> f64 {
        self.bias
    }

    pub fn note(&self) -> &str {
        &self.note
    }

    pub fn normalize(&self, features: &NssFeatures) -> Vec<f64> {
        features
            .values()
            .iter()
            .enumerate()
            .map(|(i, v)| (v - self.min[i]) / (self.max[i] - self.min[i]))
            .collect()
    }

    /// Unclamped linear response.
    pub fn raw_score(&self, features: &NssFeatures) -> f64 {
        self.bias
            + self
                .normalize(features)
                .iter()
                .zip(&self.weights)
                .map(|(x, w)| x * w)
                .sum::<f64>()
    }

    pub fn to_text(&self) -> String {
        let join = |v: &[f64]| v.iter().map(|x| format!("{x:.16e}")).collect::<Vec<_>>().join(",");
        let mut s = String::new();
        for line in self.note.lines() {
            let _ = writeln!(s, "# {line}");
        }
        let _ = writeln!(s, "format = {MODEL_FORMAT}");
        let _ = writeln!(s, "bias = {:.16e}", self.bias);
        let _ = writeln!(s, "weights = {}", join(&self.weights));
        let _ = writeln!(s, "min = {}", join(&self.min));
        let _ = writeln!(s, "max = {}", join(&self.max));
        s
    }

    pub fn from_text(text: &str) -> Result<Self> {
        let mut note = Vec::new();
        let mut fields = std::collections::HashMap::new();
        for line in text.lines().map(str::trim).filter(|l| !l.is_empty()) {
            if let Some(c) = line.strip_prefix('#') {
                note.push(c.trim());
                continue;
            }
            let (k, v) = line
                .split_once('=')
                .ok_or_else(|| Error::Format(format!("model line without '=': {line:?}")))?;
            fields.insert(k.trim(), v.trim());
        }
        let get = |k: &str| {
            fields
                .get(k)
                .copied()
                .ok_or_else(|| Error::Format(format!("BRISQUE model lacks `{k}`")))
        };
        if get("format")? != MODEL_FORMAT {
            return Err(Error::Format("unsupported BRISQUE model format".into()));
        }
        let bias = get("bias")?
            .parse::<f64>()
            .map_err(|_| Error::Format("bad bias".into()))?;
        Self::new(
            parse_list(get("weights")?, "weights")?,
            bias,
            parse_list(get("min")?, "min")?,
            parse_list(get("max")?, "max")?,
            note.join("\n"),
        )
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        Self::from_text(&std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        std::fs::write(path, self.to_text()).map_err(|e| Error::io(path, e))
    }
}

/// Linear score clamped to `[0, 100]`; lower is better.
pub fn brisque_score(features: &NssFeatures, model: &BrisqueModel) -> f64 {
    model.raw_score(features).clamp(0.0, 100.0)
}

/// Ridge regression of `targets` on min–max normalized features.
/// Features that never vary get a unit span and zero weight.
pub fn fit_brisque_model(
    features: &[NssFeatures],
    targets: &[f64],
    ridge: f64,
    note: impl Into<String>,
) -> Result<BrisqueModel> {
    if features.len() != targets.len() || features.len() < 2 {
        return Err(Error::Training("need at least two labelled samples".into()));
    }
    let mut min = vec![f64::INFINITY; FEATURE_COUNT];
    let mut max = vec![f64::NEG_INFINITY; FEATURE_COUNT];
    for f in features {
        for (i, &v) in f.values().iter().enumerate() {
            min[i] = min[i].min(v);
            max[i] = max[i].max(v);
        }
    }
    let constant: Vec<bool> = (0..FEATURE_COUNT).map(|i| max[i] - min[i] < 1e-12).collect();
    for i in 0..FEATURE_COUNT {
        if constant[i] {
            max[i] = min[i] + 1.0;
        }
    }
    let n = features.len();
    let p = FEATURE_COUNT + 1;
    let x = DMatrix::from_fn(n, p, |r, c| {
        if c == FEATURE_COUNT {
            1.0
        } else if constant[c] {
            0.0
        } else {
            (features[r].values()[c] - min[c]) / (max[c] - min[c])
        }
    });
    let y = DVector::from_column_slice(targets);
    let mut a = x.transpose() * &x;
    for i in 0..FEATURE_COUNT {
        a[(i, i)] += ridge;
    }
    let b = x.transpose() * y;
    let sol = a
        .cholesky()
        .ok_or_else(|| Error::Training("normal equations are not positive definite".into()))?
        .solve(&b);
    let weights = sol.iter().take(FEATURE_COUNT).copied().collect();
    BrisqueModel::new(weights, sol[FEATURE_COUNT], min, max, note)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn flat_model(bias: f64) -> BrisqueModel {
        BrisqueModel::new(
            vec![0.0; FEATURE_COUNT],
            bias,
            vec![0.0; FEATURE_COUNT],
            vec![1.0; FEATURE_COUNT],
            "",
        )
        .unwrap()
    }

    fn features(v: f64) -> NssFeatures {
        NssFeatures::new([v; FEATURE_COUNT]).unwrap()
    }

    #[test]
    fn bias_only_model() {
        assert_eq!(brisque_score(&features(3.7), &flat_model(42.0)), 42.0);
        assert_eq!(brisque_score(&features(3.7), &flat_model(-5.0)), 0.0);
        assert_eq!(brisque_score(&features(3.7), &flat_model(250.0)), 100.0);
    }

    #[test]
    fn text_roundtrip() {
        let mut m = flat_model(1.5);
        m.weights[3] = -0.25;
        m.note = "line one\nline two".into();
        let back = BrisqueModel::from_text(&m.to_text()).unwrap();
        assert_eq!(back, m);
    }

    #[test]
    fn bundled_model_loads() {
        let m = BrisqueModel::bundled();
        assert_eq!(m.weights().len(), FEATURE_COUNT);
    }

    #[test]
    fn invalid_span_rejected() {
        assert!(BrisqueModel::new(
            vec![0.0; FEATURE_COUNT],
            0.0,
            vec![1.0; FEATURE_COUNT],
            vec![1.0; FEATURE_COUNT],
            ""
        )
        .is_err());
    }

    #[test]
    fn ridge_recovers_linear_target() {
        let feats: Vec<NssFeatures> = (0..50)
            .map(|k| {
                let mut v = [0.0; FEATURE_COUNT];
                for (i, x) in v.iter_mut().enumerate() {
                    *x = ((k * 7 + i * 13) % 23) as f64;
                }
                NssFeatures::new(v).unwrap()
            })
            .collect();
        let targets: Vec<f64> = feats.iter().map(|f| 3.0 + 0.5 * f.values()[0]).collect();
        let m = fit_brisque_model(&feats, &targets, 1e-9, "").unwrap();
        for (f, t) in feats.iter().zip(&targets) {
            assert!((m.raw_score(f) - t).abs() < 1e-4);
        }
    }
}
