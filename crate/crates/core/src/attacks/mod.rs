//! Untargeted attacks on the classifier.
//!
//! Distributional attacks ([`iter_grad_l2`], [`chamfer_attack`],
//! [`gradient_projection`]) move every point a little. Shape attacks
//! ([`perturbation_resampling`], [`adversarial_sticks`],
//! [`adversarial_sinks`]) make larger, localized deformations that stay
//! attached to the object.

mod chamfer;
mod iterative;
mod resample;
mod search;
mod sinks;
mod sticks;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geometry::{chamfer_distance, hausdorff_to_surface, GeometryError, Point3, PointCloud, SurfaceIndex};
use crate::net::{ClassifierParams, NetError};

pub use chamfer::chamfer_attack;
pub use iterative::{gradient_projection, iter_grad_l2, project_within};
pub use resample::{perturbation_resampling, CANDIDATES_PER_POINT};
pub use search::binary_search_lambda;
pub use sinks::{adversarial_sinks, initial_sinks, sink_displacement, sinks_objective, SinkObjective, SinkSet, SINK_INIT_STEP};
pub use sticks::{adversarial_sticks, allocate_stick_points, stick_point_budget, StickSet};

#[derive(Debug, Error)]
pub enum AttackError {
    #[error("invalid attack config: {0}")]
    Config(String),
    #[error("{0} needs the benign surface")]
    MissingSurface(&'static str),
    #[error(transparent)]
    Geometry(#[from] GeometryError),
    #[error(transparent)]
    Net(#[from] NetError),
}

pub type Result<T> = std::result::Result<T, AttackError>;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AttackKind {
    None,
    IterGradL2,
    Chamfer,
    GradientProjection,
    PerturbationResampling,
    AdversarialSticks,
    AdversarialSinks,
}

impl AttackKind {
    pub const ALL: [AttackKind; 7] = [
        AttackKind::None,
        AttackKind::IterGradL2,
        AttackKind::Chamfer,
        AttackKind::GradientProjection,
        AttackKind::PerturbationResampling,
        AttackKind::AdversarialSticks,
        AttackKind::AdversarialSinks,
    ];

    pub fn name(self) -> &'static str {
        match self {
            AttackKind::None => "none",
            AttackKind::IterGradL2 => "iter_grad_l2",
            AttackKind::Chamfer => "chamfer",
            AttackKind::GradientProjection => "gradient_projection",
            AttackKind::PerturbationResampling => "perturbation_resampling",
            AttackKind::AdversarialSticks => "adversarial_sticks",
            AttackKind::AdversarialSinks => "adversarial_sinks",
        }
    }

    pub fn needs_surface(self) -> bool {
        matches!(self, AttackKind::GradientProjection | AttackKind::AdversarialSticks)
    }
}

impl std::str::FromStr for AttackKind {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        AttackKind::ALL.into_iter().find(|k| k.name() == s).ok_or_else(|| {
            let names: Vec<_> = AttackKind::ALL.iter().map(|k| k.name()).collect();
            format!("unknown attack {s:?}; expected one of {}", names.join(", "))
        })
    }
}

/// Hyperparameters for every attack. Fields an attack does not use are
/// ignored. In JSON only `kind` is required; missing fields take the
/// defaults of [`AttackConfig::defaults`] for that kind.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(from = "PartialAttackConfig")]
pub struct AttackConfig {
    pub kind: AttackKind,
    /// Total L2 budget of the gradient steps.
    pub epsilon: f64,
    pub iterations: usize,
    pub learning_rate: f64,
    pub alpha: f64,
    pub beta: f64,
    /// Density (sticks) or falloff (sinks) scale.
    pub mu: f64,
    /// Stick or sink count.
    pub sigma: usize,
    /// Points resampled per iteration.
    pub kappa: usize,
    /// Hausdorff bound to the benign surface.
    pub tau: f64,
    pub lambda_min: f64,
    pub lambda_max: f64,
    pub lambda_steps: usize,
    /// Points dropped from each gradient evaluation of `iter_grad_l2`.
    pub dropout: Option<usize>,
    /// Recompute the resampling surface every this many iterations.
    pub surface_refresh: usize,
    /// Top-saliency points perturbed when placing initial sinks.
    pub sink_candidates: usize,
}

impl AttackConfig {
    pub fn defaults(kind: AttackKind) -> Self {
        let base = AttackConfig {
            kind,
            epsilon: 2.0,
            iterations: 100,
            learning_rate: 0.1,
            alpha: 0.0,
            beta: 0.0,
            mu: 1.0,
            sigma: 0,
            kappa: 0,
            tau: 0.0,
            lambda_min: 1e-3,
            lambda_max: 1e3,
            lambda_steps: 10,
            dropout: None,
            surface_refresh: 1,
            sink_candidates: 120,
        };
        match kind {
            AttackKind::None | AttackKind::IterGradL2 => base,
            AttackKind::Chamfer => AttackConfig {
                iterations: 20,
                alpha: 0.002,
                ..base
            },
            AttackKind::GradientProjection => AttackConfig {
                epsilon: 1.0,
                tau: 0.05,
                iterations: 20,
                ..base
            },
            AttackKind::PerturbationResampling => AttackConfig { kappa: 500, ..base },
            AttackKind::AdversarialSticks => AttackConfig {
                iterations: 20,
                alpha: 0.01,
                sigma: 100,
                mu: 2.0,
                ..base
            },
            AttackKind::AdversarialSinks => AttackConfig {
                iterations: 20,
                mu: 7.0,
                alpha: 5.0,
                beta: 1.0,
                sigma: 30,
                ..base
            },
        }
    }

    /// Checks the invariants that do not depend on the cloud, then the ones
    /// that do against `n` points.
    pub fn validate(&self, n: usize) -> Result<()> {
        let bad = |m: String| Err(AttackError::Config(m));
        if !(self.epsilon >= 0.0 && self.epsilon.is_finite()) {
            return bad(format!("epsilon must be >= 0, got {}", self.epsilon));
        }
        if !(self.tau >= 0.0 && self.tau.is_finite()) {
            return bad(format!("tau must be >= 0, got {}", self.tau));
        }
        if !(self.learning_rate > 0.0) {
            return bad(format!("learning rate must be > 0, got {}", self.learning_rate));
        }
        if !(self.mu > 0.0 && self.mu.is_finite()) {
            return bad(format!("mu must be > 0, got {}", self.mu));
        }
        if !(self.lambda_min > 0.0 && self.lambda_min <= self.lambda_max && self.lambda_max.is_finite()) {
            return bad(format!("bad lambda range [{}, {}]", self.lambda_min, self.lambda_max));
        }
        if self.lambda_steps == 0 {
            return bad("lambda_steps must be >= 1".into());
        }
        if self.surface_refresh == 0 {
            return bad("surface_refresh must be >= 1".into());
        }
        let needs_sigma = matches!(self.kind, AttackKind::AdversarialSticks | AttackKind::AdversarialSinks);
        if needs_sigma && self.sigma > n {
            return bad(format!("sigma = {} exceeds {n} points", self.sigma));
        }
        if self.kind == AttackKind::PerturbationResampling && self.kappa > n {
            return bad(format!("kappa = {} exceeds {n} points", self.kappa));
        }
        if let Some(d) = self.dropout {
            if d >= n {
                return bad(format!("dropout = {d} leaves no points of {n}"));
            }
        }
        Ok(())
    }

    /// Names accepted by [`AttackConfig::set`].
    pub const PARAMETERS: [&'static str; 15] = [
        "epsilon",
        "iterations",
        "learning_rate",
        "alpha",
        "beta",
        "mu",
        "sigma",
        "kappa",
        "tau",
        "lambda_min",
        "lambda_max",
        "lambda_steps",
        "dropout",
        "surface_refresh",
        "sink_candidates",
    ];

    /// Sets a field by name; `None` if the name is not a parameter.
    pub fn set(&mut self, name: &str, value: f64) -> Option<()> {
        let count = value.max(0.0).round() as usize;
        match name {
            "epsilon" => self.epsilon = value,
            "iterations" => self.iterations = count,
            "learning_rate" => self.learning_rate = value,
            "alpha" => self.alpha = value,
            "beta" => self.beta = value,
            "mu" => self.mu = value,
            "sigma" => self.sigma = count,
            "kappa" => self.kappa = count,
            "tau" => self.tau = value,
            "lambda_min" => self.lambda_min = value,
            "lambda_max" => self.lambda_max = value,
            "lambda_steps" => self.lambda_steps = count,
            "dropout" => self.dropout = (count > 0).then_some(count),
            "surface_refresh" => self.surface_refresh = count,
            "sink_candidates" => self.sink_candidates = count,
            _ => return None,
        }
        Some(())
    }
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct PartialAttackConfig {
    kind: AttackKind,
    epsilon: Option<f64>,
    iterations: Option<usize>,
    learning_rate: Option<f64>,
    alpha: Option<f64>,
    beta: Option<f64>,
    mu: Option<f64>,
    sigma: Option<usize>,
    kappa: Option<usize>,
    tau: Option<f64>,
    lambda_min: Option<f64>,
    lambda_max: Option<f64>,
    lambda_steps: Option<usize>,
    #[serde(default, with = "double_option")]
    dropout: Option<Option<usize>>,
    surface_refresh: Option<usize>,
    sink_candidates: Option<usize>,
}

mod double_option {
    use serde::{Deserialize, Deserializer};

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Option<Option<usize>>, D::Error> {
        Ok(Some(Option::deserialize(d)?))
    }
}

impl From<PartialAttackConfig> for AttackConfig {
    fn from(p: PartialAttackConfig) -> Self {
        let d = AttackConfig::defaults(p.kind);
        AttackConfig {
            kind: p.kind,
            epsilon: p.epsilon.unwrap_or(d.epsilon),
            iterations: p.iterations.unwrap_or(d.iterations),
            learning_rate: p.learning_rate.unwrap_or(d.learning_rate),
            alpha: p.alpha.unwrap_or(d.alpha),
            beta: p.beta.unwrap_or(d.beta),
            mu: p.mu.unwrap_or(d.mu),
            sigma: p.sigma.unwrap_or(d.sigma),
            kappa: p.kappa.unwrap_or(d.kappa),
            tau: p.tau.unwrap_or(d.tau),
            lambda_min: p.lambda_min.unwrap_or(d.lambda_min),
            lambda_max: p.lambda_max.unwrap_or(d.lambda_max),
            lambda_steps: p.lambda_steps.unwrap_or(d.lambda_steps),
            dropout: p.dropout.unwrap_or(d.dropout),
            surface_refresh: p.surface_refresh.unwrap_or(d.surface_refresh),
            sink_candidates: p.sink_candidates.unwrap_or(d.sink_candidates),
        }
    }
}

/// A benign sample handed to an attack.
#[derive(Debug, Clone, Copy)]
pub struct AttackInput<'a> {
    pub cloud: &'a PointCloud,
    pub label: usize,
    /// Benign surface, required by gradient projection and sticks and used
    /// for the Hausdorff metric when present.
    pub surface: Option<&'a SurfaceIndex>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AttackResult {
    pub cloud: PointCloud,
    /// Fresh forward pass on `cloud` predicts a class other than the label.
    pub success: bool,
    pub predicted: usize,
    /// Chamfer distance from the adversarial cloud to the benign one.
    pub chamfer: f64,
    /// Hausdorff distance to the benign surface, when it was supplied.
    pub hausdorff: Option<f64>,
    /// L2 norm of the index-wise difference to the benign cloud.
    pub l2: f64,
    /// Sum of the L2 norms of the gradient steps taken.
    pub step_norm_total: f64,
    pub iterations: usize,
    pub lambda: Option<f64>,
    /// Largest magnitude reached by any tanh-bounded coordinate over all
    /// iterates, with the open bound it must stay below.
    pub bounded_peak: Option<(f64, f64)>,
    /// Set when the attack had to clamp or give up part of its procedure.
    pub flagged: bool,
    pub note: Option<String>,
}

impl AttackResult {
    /// Builds a result for `cloud`, recomputing prediction and metrics.
    pub fn evaluate(model: &ClassifierParams, input: &AttackInput, cloud: PointCloud) -> Result<Self> {
        let predicted = model.predict(&cloud)?;
        let chamfer = chamfer_distance(&cloud, input.cloud)?;
        let hausdorff = input.surface.map(|s| hausdorff_to_surface(&cloud, s));
        let l2 = if cloud.len() == input.cloud.len() {
            cloud.l2_distance(input.cloud)
        } else {
            f64::NAN
        };
        Ok(AttackResult {
            success: predicted != input.label,
            predicted,
            chamfer,
            hausdorff,
            l2,
            cloud,
            step_norm_total: 0.0,
            iterations: 0,
            lambda: None,
            bounded_peak: None,
            flagged: false,
            note: None,
        })
    }
}

/// Global L2 norm over all coordinates.
pub(crate) fn total_norm(v: &[Point3]) -> f64 {
    v.iter().map(|p| p.norm_squared()).sum::<f64>().sqrt()
}

/// Runs the attack named by `cfg.kind`.
pub fn run_attack<R: rand::Rng + ?Sized>(
    model: &ClassifierParams,
    input: &AttackInput,
    cfg: &AttackConfig,
    rng: &mut R,
) -> Result<AttackResult> {
    cfg.validate(input.cloud.len())?;
    match cfg.kind {
        AttackKind::None => AttackResult::evaluate(model, input, input.cloud.clone()),
        AttackKind::IterGradL2 => iter_grad_l2(model, input, cfg, rng),
        AttackKind::Chamfer => chamfer_attack(model, input, cfg),
        AttackKind::GradientProjection => gradient_projection(model, input, cfg),
        AttackKind::PerturbationResampling => perturbation_resampling(model, input, cfg, rng),
        AttackKind::AdversarialSticks => adversarial_sticks(model, input, cfg),
        AttackKind::AdversarialSinks => adversarial_sinks(model, input, cfg),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn partial_json_takes_kind_defaults() {
        let c: AttackConfig = serde_json::from_str(r#"{"kind":"adversarial_sinks","sigma":10}"#).unwrap();
        assert_eq!(c.sigma, 10);
        assert_eq!(c.mu, 7.0);
        assert_eq!(c.alpha, 5.0);
        let c: AttackConfig = serde_json::from_str(r#"{"kind":"gradient_projection"}"#).unwrap();
        assert_eq!((c.epsilon, c.tau, c.iterations), (1.0, 0.05, 20));
        let c: AttackConfig = serde_json::from_str(r#"{"kind":"iter_grad_l2","dropout":524}"#).unwrap();
        assert_eq!(c.dropout, Some(524));
        assert!(serde_json::from_str::<AttackConfig>(r#"{"kind":"chamfer","gamma":1}"#).is_err());
    }

    #[test]
    fn full_json_round_trip() {
        for k in AttackKind::ALL {
            let c = AttackConfig::defaults(k);
            let s = serde_json::to_string(&c).unwrap();
            assert_eq!(serde_json::from_str::<AttackConfig>(&s).unwrap(), c);
            assert_eq!(k.name().parse::<AttackKind>().unwrap(), k);
        }
    }

    #[test]
    fn validation() {
        let mut c = AttackConfig::defaults(AttackKind::PerturbationResampling);
        assert!(c.validate(1024).is_ok());
        assert!(c.validate(100).is_err());
        c.kappa = 0;
        c.lambda_min = 0.0;
        assert!(c.validate(100).is_err());
        let mut c = AttackConfig::defaults(AttackKind::IterGradL2);
        c.epsilon = -1.0;
        assert!(c.validate(10).is_err());
        assert!(c.set("epsilon", 3.0).is_some());
        assert_eq!(c.epsilon, 3.0);
        assert!(c.set("gamma", 1.0).is_none());
    }
}
