//! Scenario configuration: a single JSON document describing the model pair,
//! covariance, kernel, design size, criterion and simulation settings.
//! Unknown keys are rejected so typos fail loudly.

use std::path::Path;

use nalgebra::DVector;
use serde::Deserialize;

use bandopt::catalog;
use bandopt::design::{CriterionConfig, PsoConfig};
use bandopt::kernel::{GroupCovariance, TriangularKernel};
use bandopt::CompositeModel;

use crate::error::{CliError, Result};

pub const DEFAULT_SEED: u64 = 20200101;

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioFile {
    /// Observation interval [a, b].
    pub interval: (f64, f64),
    pub bases: BasesSpec,
    pub sigma: SigmaSpec,
    #[serde(default)]
    pub kernel: KernelSpec,
    /// Number of observation times per group.
    pub n: usize,
    #[serde(default)]
    pub criterion: CriterionSpec,
    #[serde(default)]
    pub pso: PsoSpec,
    #[serde(default)]
    pub seed: Option<u64>,
    /// True parameter vector for simulations; defaults to all ones.
    #[serde(default)]
    pub theta: Option<Vec<f64>>,
    #[serde(default = "default_alpha")]
    pub alpha: f64,
}

fn default_alpha() -> f64 {
    0.05
}

/// Basis components per group. With a nonempty `shared` list the groups
/// share those leading parameters and `group1`/`group2` hold only the
/// group-specific components.
#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BasesSpec {
    pub group1: Vec<String>,
    pub group2: Vec<String>,
    #[serde(default)]
    pub shared: Vec<String>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SigmaSpec {
    pub sigma1: f64,
    pub sigma2: f64,
    pub rho: f64,
}

/// Within-group covariance kernel.
#[derive(Debug, Clone, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum KernelSpec {
    #[default]
    Brownian,
    ScaledBrownian {
        c: f64,
    },
    Exponential {
        lambda: f64,
    },
    Triangular {
        u: String,
        v: String,
    },
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CriterionSpec {
    #[serde(default)]
    pub p_norm: PNorm,
    #[serde(default = "default_grid")]
    pub grid_size: usize,
    #[serde(default = "default_refine")]
    pub refine: bool,
}

impl Default for CriterionSpec {
    fn default() -> Self {
        Self {
            p_norm: PNorm::default(),
            grid_size: default_grid(),
            refine: true,
        }
    }
}

fn default_grid() -> usize {
    2000
}

fn default_refine() -> bool {
    true
}

/// Criterion exponent: a number >= 1 or the string "inf".
#[derive(Debug, Clone, Deserialize)]
#[serde(untagged)]
pub enum PNorm {
    Number(f64),
    Text(String),
}

impl Default for PNorm {
    fn default() -> Self {
        PNorm::Text("inf".to_string())
    }
}

impl PNorm {
    fn value(&self) -> Result<f64> {
        match self {
            PNorm::Number(x) if *x >= 1.0 => Ok(*x),
            PNorm::Number(x) => Err(CliError::config(format!(
                "criterion.p_norm must be >= 1 or \"inf\", got {x}"
            ))),
            PNorm::Text(s) if s.eq_ignore_ascii_case("inf") || s.eq_ignore_ascii_case("infinity") => {
                Ok(f64::INFINITY)
            }
            PNorm::Text(s) => Err(CliError::config(format!(
                "criterion.p_norm must be a number >= 1 or \"inf\", got \"{s}\""
            ))),
        }
    }
}

#[derive(Debug, Clone, Deserialize, Default)]
#[serde(deny_unknown_fields)]
pub struct PsoSpec {
    pub swarm: Option<usize>,
    pub iters: Option<usize>,
    pub inertia: Option<f64>,
    pub c1: Option<f64>,
    pub c2: Option<f64>,
    pub seed: Option<u64>,
    pub restarts: Option<usize>,
}

/// A parsed, validated scenario ready for computation.
pub struct Scenario {
    pub model: CompositeModel,
    pub gc: GroupCovariance,
    pub kernel: Option<TriangularKernel>,
    pub kernel_name: String,
    pub n: usize,
    pub criterion: CriterionConfig,
    pub pso: PsoConfig,
    pub seed: u64,
    pub theta: DVector<f64>,
    pub alpha: f64,
}

impl ScenarioFile {
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::config(format!("cannot read {}: {e}", path.display())))?;
        serde_json::from_str(&text)
            .map_err(|e| CliError::config(format!("{}: {e}", path.display())))
    }

    /// Validate and convert to core types. `seed_override` comes from the
    /// command line and wins over the file.
    pub fn build(&self, seed_override: Option<u64>) -> Result<Scenario> {
        let model = self.build_model()?;
        let gc = GroupCovariance::new(self.sigma.sigma1, self.sigma.sigma2, self.sigma.rho)
            .map_err(CliError::from_config_stage)?;
        let (kernel, kernel_name) = self.build_kernel()?;
        if let Some(k) = &kernel {
            k.validate(model.interval()).map_err(CliError::numeric)?;
        }
        if self.n < 2 {
            return Err(CliError::config(format!("n must be at least 2, got {}", self.n)));
        }
        if !(self.alpha > 0.0 && self.alpha < 1.0) {
            return Err(CliError::config(format!(
                "alpha must lie in (0, 1), got {}",
                self.alpha
            )));
        }
        let seed = seed_override.or(self.seed).unwrap_or(DEFAULT_SEED);
        let criterion = CriterionConfig {
            p_norm: self.criterion.p_norm.value()?,
            grid_size: self.criterion.grid_size,
            refine: self.criterion.refine,
        };
        if criterion.grid_size < 200 {
            return Err(CliError::config(format!(
                "criterion.grid_size must be at least 200, got {}",
                criterion.grid_size
            )));
        }
        let defaults = PsoConfig::default();
        let pso = PsoConfig {
            swarm: self.pso.swarm.unwrap_or(defaults.swarm),
            iters: self.pso.iters.unwrap_or(defaults.iters),
            inertia: self.pso.inertia.unwrap_or(defaults.inertia),
            c1: self.pso.c1.unwrap_or(defaults.c1),
            c2: self.pso.c2.unwrap_or(defaults.c2),
            seed: self.pso.seed.or(seed_override).or(self.seed).unwrap_or(DEFAULT_SEED),
            restarts: self.pso.restarts.unwrap_or(defaults.restarts),
        };
        let theta = match &self.theta {
            None => DVector::from_element(model.p(), 1.0),
            Some(v) => {
                if v.len() != model.p() {
                    return Err(CliError::config(format!(
                        "theta has {} entries but the model has {} parameters",
                        v.len(),
                        model.p()
                    )));
                }
                DVector::from_column_slice(v)
            }
        };
        Ok(Scenario {
            model,
            gc,
            kernel,
            kernel_name,
            n: self.n,
            criterion,
            pso,
            seed,
            theta,
            alpha: self.alpha,
        })
    }

    fn build_model(&self) -> Result<CompositeModel> {
        let parse = |name: &str, specs: &[String]| {
            catalog::parse_basis(name, specs).map_err(CliError::from_config_stage)
        };
        let model = if self.bases.shared.is_empty() {
            CompositeModel::separate(
                parse("group1", &self.bases.group1)?,
                parse("group2", &self.bases.group2)?,
                self.interval,
            )
        } else {
            CompositeModel::shared(
                parse("shared", &self.bases.shared)?,
                parse("group1", &self.bases.group1)?,
                parse("group2", &self.bases.group2)?,
                self.interval,
            )
        };
        model.map_err(CliError::from_config_stage)
    }

    fn build_kernel(&self) -> Result<(Option<TriangularKernel>, String)> {
        Ok(match &self.kernel {
            KernelSpec::Brownian => (None, "brownian".to_string()),
            KernelSpec::ScaledBrownian { c } => (
                Some(TriangularKernel::scaled_brownian(*c).map_err(CliError::from_config_stage)?),
                format!("scaled_brownian(c={c})"),
            ),
            KernelSpec::Exponential { lambda } => (
                Some(
                    TriangularKernel::ornstein_uhlenbeck(*lambda)
                        .map_err(CliError::from_config_stage)?,
                ),
                format!("exponential(lambda={lambda})"),
            ),
            KernelSpec::Triangular { u, v } => {
                let uf = ScalarFun::parse(u)?;
                let vf = ScalarFun::parse(v)?;
                let (u2, v2) = (uf.clone(), vf.clone());
                let kernel = TriangularKernel::new(
                    format!("triangular(u={u}, v={v})"),
                    move |t| uf.eval(t),
                    move |t| u2.deriv(t),
                    move |t| vf.eval(t),
                    move |t| v2.deriv(t),
                );
                (Some(kernel), format!("triangular(u={u}, v={v})"))
            }
        })
    }
}

/// Closed-form scalar function for kernel components:
/// `[c*] (1 | t | t^k | exp([a]t))`.
#[derive(Clone, Debug)]
pub struct ScalarFun {
    coef: f64,
    kind: ScalarKind,
}

#[derive(Clone, Debug)]
enum ScalarKind {
    One,
    Power(f64),
    Exp(f64),
}

impl ScalarFun {
    pub fn parse(spec: &str) -> Result<Self> {
        let s: String = spec.chars().filter(|c| !c.is_whitespace()).collect();
        let bad =
            || CliError::config(format!("kernel component `{spec}`: expected `[c*]{{1|t|t^k|exp([a]t)}}`"));
        // split an optional leading coefficient at '*'
        let (coef, body) = match s.split_once('*') {
            Some((c, rest)) => (c.parse::<f64>().map_err(|_| bad())?, rest.to_string()),
            None => (1.0, s.clone()),
        };
        // also allow a juxtaposed coefficient, e.g. "2t"
        let (coef, body) = if let Some(stripped) = body.strip_suffix('t') {
            if body.starts_with("exp") || stripped.contains('^') || stripped.contains('(') {
                (coef, body)
            } else if stripped.is_empty() {
                (coef, "t".to_string())
            } else {
                let c2: f64 = stripped.parse().map_err(|_| bad())?;
                (coef * c2, "t".to_string())
            }
        } else {
            (coef, body)
        };
        let kind = if body == "1" || body.is_empty() {
            ScalarKind::One
        } else if let Ok(c) = body.parse::<f64>() {
            return Ok(Self {
                coef: coef * c,
                kind: ScalarKind::One,
            });
        } else if body == "t" {
            ScalarKind::Power(1.0)
        } else if let Some(exp) = body.strip_prefix("t^") {
            ScalarKind::Power(exp.parse().map_err(|_| bad())?)
        } else if let Some(arg) = body.strip_prefix("exp(").and_then(|r| r.strip_suffix(')')) {
            let a = match arg.strip_suffix('t') {
                Some("") => 1.0,
                Some("-") => -1.0,
                Some(num) => num.strip_suffix('*').unwrap_or(num).parse().map_err(|_| bad())?,
                None => return Err(bad()),
            };
            ScalarKind::Exp(a)
        } else {
            return Err(bad());
        };
        if !coef.is_finite() || coef == 0.0 {
            return Err(bad());
        }
        Ok(Self { coef, kind })
    }

    pub fn eval(&self, t: f64) -> f64 {
        self.coef
            * match self.kind {
                ScalarKind::One => 1.0,
                ScalarKind::Power(k) => t.powf(k),
                ScalarKind::Exp(a) => (a * t).exp(),
            }
    }

    pub fn deriv(&self, t: f64) -> f64 {
        self.coef
            * match self.kind {
                ScalarKind::One => 0.0,
                ScalarKind::Power(k) => k * t.powf(k - 1.0),
                ScalarKind::Exp(a) => a * (a * t).exp(),
            }
    }
}
