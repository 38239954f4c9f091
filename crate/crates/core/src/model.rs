//! The trained classifier `g(B) = sign(Σ_t w_t max_{x∈B} Σ_z α_{t,z} K(z, x))`
//! and its JSON form.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::boost::BoostOutput;
use crate::data::{Bag, Label, LabeledSample, WindowNorm};
use crate::error::{Error, Result};
use crate::kernel::KernelSpec;
use crate::weak::{LengthContext, Variant};

pub const MODEL_VERSION: u32 = 1;

/// Columns with weight at or below this are dropped from the model.
const WEIGHT_FLOOR: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Entry {
    pub coef: f64,
    pub vector: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Term {
    pub weight: f64,
    pub length: usize,
    pub entries: Vec<Entry>,
}

/// Per-feature affine map `x ↦ (x − offset) / scale` applied to MIL instances.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureScale {
    pub offset: Vec<f64>,
    pub scale: Vec<f64>,
}

impl FeatureScale {
    /// Min-max scaling fitted on every instance of the given bags. Constant
    /// features keep scale 1.
    pub fn fit_minmax<'a>(instances: impl IntoIterator<Item = &'a [f64]>) -> Option<Self> {
        let mut lo: Vec<f64> = Vec::new();
        let mut hi: Vec<f64> = Vec::new();
        for x in instances {
            if lo.is_empty() {
                lo = x.to_vec();
                hi = x.to_vec();
                continue;
            }
            for ((l, h), &v) in lo.iter_mut().zip(hi.iter_mut()).zip(x) {
                *l = l.min(v);
                *h = h.max(v);
            }
        }
        if lo.is_empty() {
            return None;
        }
        let scale = lo
            .iter()
            .zip(&hi)
            .map(|(l, h)| if h > l { h - l } else { 1.0 })
            .collect();
        Some(FeatureScale { offset: lo, scale })
    }

    pub fn apply(&self, x: &[f64]) -> Result<Vec<f64>> {
        if x.len() != self.offset.len() {
            return Err(Error::DimensionMismatch {
                expected: self.offset.len(),
                found: x.len(),
            });
        }
        Ok(x.iter()
            .zip(&self.offset)
            .zip(&self.scale)
            .map(|((v, o), s)| (v - o) / s)
            .collect())
    }
}

/// How raw records become bags at prediction time.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Preprocess {
    #[serde(default)]
    pub window_norm: WindowNorm,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub feature_scale: Option<FeatureScale>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct ModelMeta {
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub variant: Variant,
    /// Positive class of a one-vs-rest member.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub class: Option<i64>,
    /// Class id predicted for negative scores, when the model is a plain
    /// two-class model.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub negative_class: Option<i64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub gamma: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub training_accuracy: Option<f64>,
    #[serde(default)]
    pub iterations: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoostModel {
    pub version: u32,
    pub kernel: KernelSpec,
    pub nu: f64,
    /// Subsequence lengths the model was trained with.
    pub lengths: Vec<usize>,
    pub terms: Vec<Term>,
    #[serde(default)]
    pub preprocess: Preprocess,
    #[serde(default)]
    pub metadata: ModelMeta,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TermExplanation {
    pub weight: f64,
    pub length: usize,
    /// 0-based index of the maximizing instance within the bag's
    /// length-`ℓ` group; for series this is the window start.
    pub window_start: usize,
    pub contribution: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Explanation {
    pub score: f64,
    pub label: i64,
    pub terms: Vec<TermExplanation>,
}

impl BoostModel {
    /// Assembles a self-contained model from a boosting run. Columns whose
    /// weight is negligible are dropped and the rest renormalized.
    pub fn from_boost(
        output: &BoostOutput,
        contexts: &[LengthContext],
        kernel: KernelSpec,
        nu: f64,
    ) -> Result<Self> {
        let kept: Vec<(f64, usize)> = output
            .primal
            .weights
            .iter()
            .copied()
            .enumerate()
            .filter(|&(_, w)| w > WEIGHT_FLOOR)
            .map(|(j, w)| (w, j))
            .collect();
        let total: f64 = kept.iter().map(|k| k.0).sum();
        if kept.is_empty() || !(total > 0.0) {
            return Err(Error::Model("no column has positive weight".into()));
        }
        let terms = kept
            .into_iter()
            .map(|(w, j)| {
                let col = &output.columns[j];
                let pool = contexts[col.context].pool();
                let entries = col
                    .shapelet
                    .alpha
                    .iter()
                    .enumerate()
                    .filter(|&(_, &a)| a != 0.0)
                    .map(|(z, &a)| Entry {
                        coef: a,
                        vector: pool.get(z).to_vec(),
                    })
                    .collect();
                Term {
                    weight: w / total,
                    length: col.shapelet.length,
                    entries,
                }
            })
            .collect();
        let mut lengths: Vec<usize> = contexts.iter().map(|c| c.length()).collect();
        lengths.sort_unstable();
        lengths.dedup();
        Ok(BoostModel {
            version: MODEL_VERSION,
            kernel,
            nu,
            lengths,
            terms,
            preprocess: Preprocess::default(),
            metadata: ModelMeta {
                gamma: Some(output.gamma()),
                iterations: output.history.len(),
                ..Default::default()
            },
        })
    }

    pub fn total_nonzeros(&self) -> usize {
        self.terms.iter().map(|t| t.entries.len()).sum()
    }

    /// `(max_x Σ_e coef_e K(v_e, x), argmax)` for one term.
    fn term_value(&self, term: &Term, bag: &Bag) -> Result<(f64, usize)> {
        let group = bag.group(term.length).ok_or_else(|| Error::InvalidLength {
            length: term.length,
            reason: "bag has no instances of this length".into(),
        })?;
        let mut best: Option<(f64, usize)> = None;
        for (j, x) in group.iter().enumerate() {
            let v: f64 = term
                .entries
                .iter()
                .map(|e| self.kernel.eval_same_dim(&e.vector, x) * e.coef)
                .sum();
            if best.is_none_or(|(b, _)| v > b) {
                best = Some((v, j));
            }
        }
        best.ok_or_else(|| Error::InvalidLength {
            length: term.length,
            reason: "bag has no instances of this length".into(),
        })
    }

    /// Per-term contributions `w_t · max_x ⟨u_t, Φ(x)⟩`; they sum to the score.
    pub fn explain(&self, bag: &Bag) -> Result<Explanation> {
        let mut terms = Vec::with_capacity(self.terms.len());
        let mut score = 0.0;
        for term in &self.terms {
            let (value, j) = self.term_value(term, bag)?;
            let contribution = term.weight * value;
            score += contribution;
            terms.push(TermExplanation {
                weight: term.weight,
                length: term.length,
                window_start: j,
                contribution,
            });
        }
        Ok(Explanation {
            score,
            label: Label::from_sign(score).as_i64(),
            terms,
        })
    }

    pub fn score(&self, bag: &Bag) -> Result<f64> {
        Ok(self.explain(bag)?.score)
    }

    /// `sign(score)` with `sign(0) = +1`.
    pub fn predict(&self, bag: &Bag) -> Result<Label> {
        Ok(Label::from_sign(self.score(bag)?))
    }

    pub fn accuracy(&self, sample: &LabeledSample) -> Result<f64> {
        let mut correct = 0;
        for (bag, &y) in sample.bags().iter().zip(sample.labels()) {
            if self.predict(bag)? == y {
                correct += 1;
            }
        }
        Ok(correct as f64 / sample.len().max(1) as f64)
    }

    /// Fraction of bags with `y · g(B) < ρ`.
    pub fn margin_loss(&self, sample: &LabeledSample, rho: f64) -> Result<f64> {
        let mut count = 0;
        for (bag, &y) in sample.bags().iter().zip(sample.labels()) {
            if y.sign() * self.score(bag)? < rho {
                count += 1;
            }
        }
        Ok(count as f64 / sample.len().max(1) as f64)
    }

    fn validate(&self) -> Result<()> {
        if self.version != MODEL_VERSION {
            return Err(Error::Model(format!(
                "unsupported model version {} (expected {MODEL_VERSION})",
                self.version
            )));
        }
        if let KernelSpec::Gaussian { sigma2 } = self.kernel {
            KernelSpec::gaussian(sigma2)?;
        }
        if self.terms.is_empty() {
            return Err(Error::Model("model has no terms".into()));
        }
        let total: f64 = self.terms.iter().map(|t| t.weight).sum();
        if self.terms.iter().any(|t| !(t.weight > 0.0)) || (total - 1.0).abs() > 1e-6 {
            return Err(Error::Model(format!("term weights must be positive and sum to 1 (sum {total})")));
        }
        for t in &self.terms {
            if let Some(e) = t.entries.iter().find(|e| e.vector.len() != t.length) {
                return Err(Error::Model(format!(
                    "entry of dimension {} in a length-{} term",
                    e.vector.len(),
                    t.length
                )));
            }
        }
        Ok(())
    }

    pub fn to_json(&self) -> Result<String> {
        serde_json::to_string_pretty(self).map_err(|e| Error::Model(e.to_string()))
    }

    pub fn from_json(text: &str, origin: &str) -> Result<Self> {
        let parse = |e: serde_json::Error| Error::Parse {
            path: origin.to_string(),
            line: e.line(),
            message: e.to_string(),
        };
        let value: serde_json::Value = serde_json::from_str(text).map_err(parse)?;
        let kind = value
            .get("kernel")
            .and_then(|k| k.get("kind"))
            .and_then(|k| k.as_str())
            .ok_or_else(|| Error::Model("missing kernel kind".into()))?;
        if !matches!(kind, "linear" | "gaussian") {
            return Err(Error::UnsupportedKernel(kind.to_string()));
        }
        let model: BoostModel = serde_json::from_value(value).map_err(|e| Error::Model(e.to_string()))?;
        model.validate()?;
        Ok(model)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        fs::write(path, self.to_json()?)?;
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = fs::read_to_string(path)?;
        Self::from_json(&text, &path.display().to_string())
    }
}

pub fn save_model(model: &BoostModel, path: impl AsRef<Path>) -> Result<()> {
    model.save(path)
}

pub fn load_model(path: impl AsRef<Path>) -> Result<BoostModel> {
    BoostModel::load(path)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::Instance;

    fn bag(points: &[&[f64]]) -> Bag {
        Bag::from_instances(points.iter().map(|p| Instance::new(p.to_vec()).unwrap()).collect()).unwrap()
    }

    fn model() -> BoostModel {
        BoostModel {
            version: MODEL_VERSION,
            kernel: KernelSpec::gaussian(0.5).unwrap(),
            nu: 0.3,
            lengths: vec![2],
            terms: vec![
                Term {
                    weight: 0.75,
                    length: 2,
                    entries: vec![Entry {
                        coef: 0.6,
                        vector: vec![0.1, 0.2],
                    }],
                },
                Term {
                    weight: 0.25,
                    length: 2,
                    entries: vec![
                        Entry {
                            coef: -0.5,
                            vector: vec![1.0, -1.0],
                        },
                        Entry {
                            coef: 0.5,
                            vector: vec![0.3, 0.3],
                        },
                    ],
                },
            ],
            preprocess: Preprocess::default(),
            metadata: ModelMeta::default(),
        }
    }

    #[test]
    fn contributions_sum_to_score() {
        let m = model();
        let b = bag(&[&[0.0, 0.0], &[0.1, 0.25], &[1.0, 1.0]]);
        let e = m.explain(&b).unwrap();
        assert_eq!(e.terms.len(), 2);
        let sum: f64 = e.terms.iter().map(|t| t.contribution).sum();
        assert_eq!(sum, m.score(&b).unwrap());
        assert_eq!(e.terms[0].window_start, 1);
    }

    #[test]
    fn margin_loss_counts() {
        // single term whose value is the instance's first coordinate
        let m = BoostModel {
            kernel: KernelSpec::Linear,
            terms: vec![Term {
                weight: 1.0,
                length: 1,
                entries: vec![Entry {
                    coef: 1.0,
                    vector: vec![1.0],
                }],
            }],
            lengths: vec![1],
            ..model()
        };
        let s = LabeledSample::new(
            vec![bag(&[&[0.3]]), bag(&[&[0.1]]), bag(&[&[0.2]]), bag(&[&[0.5]])],
            vec![Label::Positive, Label::Positive, Label::Negative, Label::Positive],
        )
        .unwrap();
        // margins 0.3, 0.1, −0.2, 0.5
        assert_eq!(m.margin_loss(&s, 0.2).unwrap(), 0.5);
        assert_eq!(m.margin_loss(&s, 0.6).unwrap(), 1.0);
        assert_eq!(m.margin_loss(&s, 0.0).unwrap(), 0.25);
        assert_eq!(m.predict(&bag(&[&[0.0]])).unwrap(), Label::Positive);
    }

    #[test]
    fn json_round_trip_is_exact() {
        let m = model();
        let back = BoostModel::from_json(&m.to_json().unwrap(), "mem").unwrap();
        assert_eq!(m, back);
        let b = bag(&[&[0.7, -0.2], &[0.33, 0.1]]);
        assert_eq!(m.score(&b).unwrap(), back.score(&b).unwrap());
    }

    #[test]
    fn bad_files_rejected() {
        let text = model().to_json().unwrap();
        let truncated = &text[..text.len() / 2];
        assert!(matches!(BoostModel::from_json(truncated, "t"), Err(Error::Parse { .. })));
        let other = text.replace("\"gaussian\"", "\"dtw\"");
        assert!(matches!(BoostModel::from_json(&other, "t"), Err(Error::UnsupportedKernel(k)) if k == "dtw"));
        let old = text.replace("\"version\": 1", "\"version\": 7");
        assert!(matches!(BoostModel::from_json(&old, "t"), Err(Error::Model(_))));
    }

    #[test]
    fn missing_length_is_an_error() {
        let m = model();
        assert!(m.score(&bag(&[&[1.0, 2.0, 3.0]])).is_err());
    }

    #[test]
    fn minmax_scaling() {
        let a = [0.0, 5.0];
        let b = [2.0, 5.0];
        let s = FeatureScale::fit_minmax([&a[..], &b[..]]).unwrap();
        assert_eq!(s.apply(&[1.0, 5.0]).unwrap(), vec![0.5, 0.0]);
        assert!(s.apply(&[1.0]).is_err());
    }
}
