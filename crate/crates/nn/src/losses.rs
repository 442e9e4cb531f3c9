//! Least-squares adversarial terms, feature matching, mel reconstruction and
//! their weighted composition.
//!
//! Every objective exists twice: on plain slices (for reporting and as a
//! reference) and on graph nodes (for training). Both produce the same
//! breakdown keys.

use std::collections::BTreeMap;

use avocodo_core::Real;
use serde::{Deserialize, Serialize};

use crate::disc::DiscriminatorOutput;
use crate::error::{config_err, shape_err, Result};
use crate::graph::{Graph, Var};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct LossWeights {
    pub lambda_fm: f64,
    pub lambda_spec: f64,
}

impl Default for LossWeights {
    fn default() -> Self {
        Self { lambda_fm: 2.0, lambda_spec: 45.0 }
    }
}

impl LossWeights {
    pub fn validate(&self) -> Result<()> {
        if !(self.lambda_fm >= 0.0 && self.lambda_spec >= 0.0) {
            return config_err("loss weights must be nonnegative");
        }
        Ok(())
    }
}

/// Real and generated outputs of one discriminator branch.
#[derive(Clone, Debug, PartialEq)]
pub struct BranchPair<S> {
    pub real: DiscriminatorOutput<S>,
    pub fake: DiscriminatorOutput<S>,
}

/// All branches of one step: `P` CoMBD branches, `P − 1` decimated CoMBD
/// branches and `Q` SBD branches.
#[derive(Clone, Debug, PartialEq)]
pub struct AdversarialTerms<S> {
    pub combd: Vec<BranchPair<S>>,
    pub combd_decimated: Vec<BranchPair<S>>,
    pub sbd: Vec<BranchPair<S>>,
}

impl<S> AdversarialTerms<S> {
    pub fn validate(&self) -> Result<()> {
        let p = self.combd.len();
        if p == 0 || self.combd_decimated.len() + 1 != p || self.sbd.is_empty() {
            return config_err(format!(
                "{p} direct, {} decimated and {} sub-band branches",
                self.combd_decimated.len(),
                self.sbd.len()
            ));
        }
        Ok(())
    }

    /// Branches with their breakdown prefixes, in composition order.
    pub fn named(&self) -> impl Iterator<Item = (String, &BranchPair<S>)> {
        let c = self.combd.iter().enumerate().map(|(i, b)| (format!("combd{}", i + 1), b));
        let w = self.combd_decimated.iter().enumerate().map(|(i, b)| (format!("combd{}_dec", i + 1), b));
        let s = self.sbd.iter().enumerate().map(|(i, b)| (format!("sbd{}", i + 1), b));
        c.chain(w).chain(s)
    }
}

/// Totals plus every weighted-in term.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct LossBundle {
    pub total_g: f64,
    pub total_d: f64,
    #[serde(flatten)]
    pub breakdown: BTreeMap<String, f64>,
}

impl LossBundle {
    pub fn is_finite(&self) -> bool {
        self.total_g.is_finite() && self.total_d.is_finite() && self.breakdown.values().all(|v| v.is_finite())
    }

    pub fn mel(&self) -> f64 {
        self.breakdown.get("mel").copied().unwrap_or(f64::NAN)
    }
}

fn mean_sq<T: Real>(xs: &[T], target: f64) -> f64 {
    xs.iter().map(|&v| (v.as_f64() - target).powi(2)).sum::<f64>() / xs.len().max(1) as f64
}

/// `mean((real − 1)²) + mean(fake²)`.
pub fn lsgan_d<T: Real>(real: &[T], fake: &[T]) -> Result<f64> {
    if real.len() != fake.len() || real.is_empty() {
        return shape_err(format!("score maps of {} and {} elements", real.len(), fake.len()));
    }
    Ok(mean_sq(real, 1.0) + mean_sq(fake, 0.0))
}

/// `mean((fake − 1)²)`.
pub fn lsgan_g<T: Real>(fake: &[T]) -> Result<f64> {
    if fake.is_empty() {
        return shape_err("empty score map");
    }
    Ok(mean_sq(fake, 1.0))
}

/// `Σ_t mean|real_t − fake_t|`.
pub fn feature_matching<T: Real, R: AsRef<[T]>>(real: &[R], fake: &[R]) -> Result<f64> {
    if real.len() != fake.len() {
        return shape_err(format!("{} real vs {} generated feature maps", real.len(), fake.len()));
    }
    let mut total = 0.0;
    for (r, f) in real.iter().zip(fake) {
        let (r, f) = (r.as_ref(), f.as_ref());
        if r.len() != f.len() || r.is_empty() {
            return shape_err(format!("feature maps of {} and {} elements", r.len(), f.len()));
        }
        total += r.iter().zip(f).map(|(&a, &b)| (a.as_f64() - b.as_f64()).abs()).sum::<f64>() / r.len() as f64;
    }
    Ok(total)
}

/// Mean absolute difference of two log-mel rasters.
pub fn mel_reconstruction<T: Real>(
    extractor: &avocodo_core::MelExtractor<T>,
    x: &[T],
    x_hat: &[T],
) -> Result<f64> {
    if x.len() != x_hat.len() {
        return shape_err(format!("waveforms of {} and {} samples", x.len(), x_hat.len()));
    }
    let (a, _) = extractor.mel_with_trace(x)?;
    let (b, _) = extractor.mel_with_trace(x_hat)?;
    Ok(mel_l1(&a.values, &b.values))
}

pub fn mel_l1<T: Real>(a: &[T], b: &[T]) -> f64 {
    a.iter().zip(b).map(|(&p, &q)| (p.as_f64() - q.as_f64()).abs()).sum::<f64>() / a.len().max(1) as f64
}

/// Weighted composition from slices; `mel` is the already reduced `L_spec`.
pub fn total_losses<T: Real>(
    terms: &AdversarialTerms<Vec<T>>,
    mel: f64,
    weights: &LossWeights,
) -> Result<LossBundle> {
    terms.validate()?;
    let mut bundle = LossBundle::default();
    for (name, pair) in terms.named() {
        let vd = lsgan_d(&pair.real.score, &pair.fake.score)?;
        let vg = lsgan_g(&pair.fake.score)?;
        let fm = feature_matching(&pair.real.features, &pair.fake.features)?;
        bundle.total_d += vd;
        bundle.total_g += vg + weights.lambda_fm * fm;
        bundle.breakdown.insert(format!("{name}.d"), vd);
        bundle.breakdown.insert(format!("{name}.g"), vg);
        bundle.breakdown.insert(format!("{name}.fm"), fm);
    }
    bundle.total_g += weights.lambda_spec * mel;
    bundle.breakdown.insert("mel".into(), mel);
    Ok(bundle)
}

/// Re-sums a breakdown with the composition weights.
pub fn resum(breakdown: &BTreeMap<String, f64>, weights: &LossWeights) -> (f64, f64) {
    let mut g = 0.0;
    let mut d = 0.0;
    for (k, &v) in breakdown {
        if k == "mel" {
            g += weights.lambda_spec * v;
        } else if k.ends_with(".fm") {
            g += weights.lambda_fm * v;
        } else if k.ends_with(".g") {
            g += v;
        } else if k.ends_with(".d") {
            d += v;
        }
    }
    (g, d)
}

/// Graph versions of the objectives.
pub mod graph {
    use super::*;

    pub fn lsgan_d<T: Real>(g: &mut Graph<T>, real: Var, fake: Var) -> Result<Var> {
        if g.shape(real) != g.shape(fake) {
            return shape_err(format!("score maps {:?} and {:?}", g.shape(real), g.shape(fake)));
        }
        let r = g.mse_to(real, 1.0);
        let f = g.mse_to(fake, 0.0);
        g.weighted_sum(&[(r, 1.0), (f, 1.0)])
    }

    pub fn lsgan_g<T: Real>(g: &mut Graph<T>, fake: Var) -> Var {
        g.mse_to(fake, 1.0)
    }

    pub fn feature_matching<T: Real>(g: &mut Graph<T>, real: &[Var], fake: &[Var]) -> Result<Var> {
        if real.len() != fake.len() || real.is_empty() {
            return shape_err(format!("{} real vs {} generated feature maps", real.len(), fake.len()));
        }
        let terms = real
            .iter()
            .zip(fake)
            .map(|(&r, &f)| Ok((g.mean_abs_diff(r, f)?, 1.0)))
            .collect::<Result<Vec<_>>>()?;
        g.weighted_sum(&terms)
    }

    /// `mean|real_mel − φ(x̂)|` with `real_mel` already a raster node.
    pub fn mel_reconstruction<T: Real>(
        g: &mut Graph<T>,
        extractor: &std::sync::Arc<avocodo_core::MelExtractor<T>>,
        real_mel: Var,
        x_hat: Var,
    ) -> Result<Var> {
        let fake_mel = g.log_mel(x_hat, extractor)?;
        g.mean_abs_diff(real_mel, fake_mel)
    }

    /// Named scalar nodes of one objective and their weighted total.
    pub struct Objective {
        pub total: Var,
        pub terms: Vec<(String, Var)>,
    }

    impl Objective {
        pub fn values<T: Real>(&self, g: &Graph<T>) -> BTreeMap<String, f64> {
            self.terms.iter().map(|(k, v)| (k.clone(), g.value(*v).item().as_f64())).collect()
        }
    }

    /// Discriminator total: the `.d` terms of every branch.
    pub fn discriminator_total<T: Real>(g: &mut Graph<T>, terms: &AdversarialTerms<Var>) -> Result<Objective> {
        terms.validate()?;
        let mut named = Vec::new();
        for (name, pair) in terms.named() {
            named.push((format!("{name}.d"), lsgan_d(g, pair.real.score, pair.fake.score)?));
        }
        let total = g.weighted_sum(&named.iter().map(|(_, v)| (*v, 1.0)).collect::<Vec<_>>())?;
        Ok(Objective { total, terms: named })
    }

    /// Generator total: adversarial, feature-matching and mel terms.
    pub fn generator_total<T: Real>(
        g: &mut Graph<T>,
        terms: &AdversarialTerms<Var>,
        mel: Var,
        weights: &LossWeights,
    ) -> Result<Objective> {
        terms.validate()?;
        let mut named = Vec::new();
        let mut weighted = Vec::new();
        for (name, pair) in terms.named() {
            let vg = lsgan_g(g, pair.fake.score);
            let fm = feature_matching(g, &pair.real.features, &pair.fake.features)?;
            weighted.push((vg, 1.0));
            weighted.push((fm, weights.lambda_fm));
            named.push((format!("{name}.g"), vg));
            named.push((format!("{name}.fm"), fm));
        }
        weighted.push((mel, weights.lambda_spec));
        named.push(("mel".into(), mel));
        let total = g.weighted_sum(&weighted)?;
        Ok(Objective { total, terms: named })
    }
}
