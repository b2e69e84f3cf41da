//! Closed-form regression component catalog.
//!
//! Bases are assembled from a fixed set of named components rather than from
//! arbitrary user code, so configuration files stay declarative and every
//! derivative is analytic. Recognized forms:
//!
//! | spec        | value        | derivative       |
//! |-------------|--------------|------------------|
//! | `1`         | 1            | 0                |
//! | `t`         | t            | 1                |
//! | `t^k`       | t^k          | k t^(k-1)        |
//! | `sin(kt)`   | sin(kt)      | k cos(kt)        |
//! | `cos(kt)`   | cos(kt)      | -k sin(kt)       |
//! | `log(t)`    | ln t         | 1/t              |
//! | `1/t`       | 1/t          | -1/t^2           |
//!
//! The frequency `k` is any nonzero number (`sin(t)` means k = 1; `sin(2t)`
//! and `sin(2*t)` are both accepted).

use crate::error::{Error, Result};
use crate::model::CurveBasis;
use nalgebra::DVector;

/// One closed-form scalar component with analytic derivative.
#[derive(Clone, Debug, PartialEq)]
pub enum Component {
    Constant,
    Power(f64),
    Sin(f64),
    Cos(f64),
    Log,
    Reciprocal,
}

impl Component {
    pub fn eval(&self, t: f64) -> f64 {
        match self {
            Component::Constant => 1.0,
            Component::Power(k) => t.powf(*k),
            Component::Sin(k) => (k * t).sin(),
            Component::Cos(k) => (k * t).cos(),
            Component::Log => t.ln(),
            Component::Reciprocal => 1.0 / t,
        }
    }

    pub fn deriv(&self, t: f64) -> f64 {
        match self {
            Component::Constant => 0.0,
            Component::Power(k) => k * t.powf(k - 1.0),
            Component::Sin(k) => k * (k * t).cos(),
            Component::Cos(k) => -k * (k * t).sin(),
            Component::Log => 1.0 / t,
            Component::Reciprocal => -1.0 / (t * t),
        }
    }
}

/// Parse a single component spec such as `"t^2"` or `"sin(2t)"`.
pub fn parse_component(spec: &str) -> Result<Component> {
    let s: String = spec.chars().filter(|c| !c.is_whitespace()).collect();
    let bad = |msg: &str| Error::InvalidConfig(format!("basis component `{spec}`: {msg}"));
    match s.as_str() {
        "1" => return Ok(Component::Constant),
        "t" => return Ok(Component::Power(1.0)),
        "log(t)" | "ln(t)" => return Ok(Component::Log),
        "1/t" => return Ok(Component::Reciprocal),
        _ => {}
    }
    if let Some(exp) = s.strip_prefix("t^") {
        let k: f64 = exp
            .parse()
            .map_err(|_| bad("exponent is not a number"))?;
        if !k.is_finite() || k == 0.0 {
            return Err(bad("exponent must be a nonzero finite number"));
        }
        return Ok(Component::Power(k));
    }
    for (prefix, kind) in [("sin(", true), ("cos(", false)] {
        if let Some(rest) = s.strip_prefix(prefix) {
            let inner = rest
                .strip_suffix(')')
                .ok_or_else(|| bad("missing closing parenthesis"))?;
            let freq = parse_frequency(inner).ok_or_else(|| bad("argument must look like `kt`"))?;
            return Ok(if kind {
                Component::Sin(freq)
            } else {
                Component::Cos(freq)
            });
        }
    }
    Err(bad("unknown component"))
}

/// Parse the `kt` argument of a trigonometric component.
fn parse_frequency(inner: &str) -> Option<f64> {
    let core = inner.strip_suffix('t')?;
    let core = core.strip_suffix('*').unwrap_or(core);
    let k: f64 = match core {
        "" => 1.0,
        "-" => -1.0,
        _ => core.parse().ok()?,
    };
    if k.is_finite() && k != 0.0 {
        Some(k)
    } else {
        None
    }
}

/// Build a basis from component specs. Duplicate components are rejected
/// since they would make the rows of the model matrix dependent.
pub fn parse_basis(name: impl Into<String>, specs: &[impl AsRef<str>]) -> Result<CurveBasis> {
    let name = name.into();
    if specs.is_empty() {
        return Err(Error::EmptyBasis { name });
    }
    let mut comps = Vec::with_capacity(specs.len());
    for s in specs {
        let c = parse_component(s.as_ref())?;
        if comps.contains(&c) {
            return Err(Error::InvalidConfig(format!(
                "basis `{name}` repeats component `{}`",
                s.as_ref()
            )));
        }
        comps.push(c);
    }
    basis_from_components(name, comps)
}

/// Build a basis from already-parsed components.
pub fn basis_from_components(name: impl Into<String>, comps: Vec<Component>) -> Result<CurveBasis> {
    let dim = comps.len();
    let ev = comps.clone();
    let dv = comps;
    CurveBasis::new(
        name,
        dim,
        move |t| DVector::from_iterator(dim, ev.iter().map(|c| c.eval(t))),
        move |t| DVector::from_iterator(dim, dv.iter().map(|c| c.deriv(t))),
    )
}

/// Demo basis A: `(t, sin t, cos t)`.
pub fn basis_a() -> CurveBasis {
    parse_basis("A", &["t", "sin(t)", "cos(t)"]).expect("builtin basis")
}

/// Demo basis B: `(t^2, cos t, cos 2t)`.
pub fn basis_b() -> CurveBasis {
    parse_basis("B", &["t^2", "cos(t)", "cos(2t)"]).expect("builtin basis")
}

/// Demo basis C: `(t, log t, 1/t)`.
pub fn basis_c() -> CurveBasis {
    parse_basis("C", &["t", "log(t)", "1/t"]).expect("builtin basis")
}
