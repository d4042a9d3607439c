//! Thermodynamic variables derived numerically from any model, catalog or
//! parsed, by quadrature of the partition function and finite differencing of
//! the free money f(T, x̄) = -T ln Q.
//!
//! Two independent routes exist for the entropy (S = -∂f/∂T and the direct
//! mean S = ln Q + ⟨m⟩/T) and for the mean money (quadrature and f + TS);
//! their disagreements are recorded as residuals rather than hidden.

use std::collections::BTreeMap;

use thiserror::Error;

use crate::catalog::Family;
use crate::quadrature::{
    self, MacroParam, ModelSpec, QuadError, DEFAULT_REL_TOL,
};

/// All thermodynamic variables at one (T, x̄) point.
#[derive(Debug, Clone)]
pub struct ThermoState {
    pub temperature: f64,
    /// Partition function Q.
    pub partition: f64,
    /// Free money f = -T ln Q.
    pub free_money: f64,
    pub entropy: f64,
    pub mean_money: f64,
    /// Intensive variables, one per declared macro-parameter.
    pub intensive: Vec<f64>,
    pub heat_capacity: f64,
    /// Consistency-check magnitudes keyed by check name.
    pub residuals: BTreeMap<String, f64>,
}

impl ThermoState {
    pub fn new(
        temperature: f64,
        partition: f64,
        free_money: f64,
        entropy: f64,
        mean_money: f64,
        intensive: Vec<f64>,
        heat_capacity: f64,
    ) -> Self {
        ThermoState {
            temperature,
            partition,
            free_money,
            entropy,
            mean_money,
            intensive,
            heat_capacity,
            residuals: BTreeMap::new(),
        }
    }

    pub fn legendre_residual(&self) -> f64 {
        self.free_money - (self.mean_money - self.temperature * self.entropy)
    }
}

/// Which route computes the entropy.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EntropyMethod {
    /// S = -∂f/∂T by central differences with one Richardson level.
    Derivative,
    /// S = ⟨-ln ρ⟩ = ln Q + ⟨m⟩/T.
    Direct,
}

#[derive(Debug, Clone)]
pub struct ThermoOpts {
    pub rel_tol: f64,
    /// Allow evaluation inside the near-critical Pareto band T > c₁(1 - 1e-3).
    pub allow_near_critical: bool,
}

impl Default for ThermoOpts {
    fn default() -> Self {
        ThermoOpts {
            rel_tol: DEFAULT_REL_TOL,
            allow_near_critical: false,
        }
    }
}

/// Margin below the Pareto critical temperature that plain thermo evaluation
/// refuses to enter; the phase scanner overrides it deliberately.
pub const PARETO_GUARD: f64 = 1e-3;

#[derive(Debug, Clone, Error)]
pub enum ThermoError {
    #[error(transparent)]
    Quad(#[from] QuadError),
    #[error("temperature {t} is inside the near-critical band of T_c = {t_crit} (pass the near-critical override to evaluate here)")]
    NearCritical { t: f64, t_crit: f64 },
    #[error("finite-difference stencil around {at} crosses a validity boundary: {condition}")]
    StencilCrossesBoundary { at: f64, condition: String },
}

fn guard(model: &ModelSpec, t: f64, opts: &ThermoOpts) -> Result<(), ThermoError> {
    if let Some(p) = model.family_params() {
        if p.family == Family::Pareto {
            if t >= p.c1 {
                return Err(ThermoError::Quad(QuadError::Divergent {
                    condition: format!(
                        "pareto requires T < c1, got T = {t} with c1 = {}",
                        p.c1
                    ),
                }));
            }
            if !opts.allow_near_critical && t > p.c1 * (1.0 - PARETO_GUARD) {
                return Err(ThermoError::NearCritical { t, t_crit: p.c1 });
            }
        }
    }
    Ok(())
}

/// Finite-difference step around `t`.
fn step(t: f64) -> f64 {
    f64::max(1e-4 * t.abs(), 1e-7)
}

/// Options for evaluations inside a difference stencil. Differencing divides
/// quadrature error by the step (~1e-4), so the integrals feeding a stencil
/// are computed three decades tighter than the requested tolerance.
fn stencil_opts(opts: &ThermoOpts) -> ThermoOpts {
    ThermoOpts {
        rel_tol: f64::max(opts.rel_tol * 1e-3, 2e-14),
        ..*opts
    }
}

/// Free money f(T) = -T ln Q(T).
pub fn free_money(model: &ModelSpec, t: f64, opts: &ThermoOpts) -> Result<f64, ThermoError> {
    guard(model, t, opts)?;
    let q = quadrature::partition_function_tol(model, t, opts.rel_tol)?;
    Ok(-t * q.ln())
}

/// Entropy by the requested route.
pub fn entropy(
    model: &ModelSpec,
    t: f64,
    method: EntropyMethod,
    opts: &ThermoOpts,
) -> Result<f64, ThermoError> {
    guard(model, t, opts)?;
    match method {
        EntropyMethod::Direct => {
            let q = quadrature::partition_function_tol(model, t, opts.rel_tol)?;
            let mean = quadrature::mean_money_quadrature(model, t, opts.rel_tol)?;
            Ok(q.ln() + mean / t)
        }
        EntropyMethod::Derivative => {
            let h = stencil_step(model, t, opts)?;
            let inner = stencil_opts(opts);
            let f = |tt: f64| free_money(model, tt, &inner);
            Ok(-richardson(&f, t, h)?)
        }
    }
}

/// Validate that the stencil [t - h, t + h] stays in the model's validity
/// region, shrinking h is not attempted: crossing is an error by contract.
fn stencil_step(model: &ModelSpec, t: f64, _opts: &ThermoOpts) -> Result<f64, ThermoError> {
    let h = step(t);
    if t - h <= 0.0 {
        return Err(ThermoError::StencilCrossesBoundary {
            at: t,
            condition: format!("T - h = {} is not positive", t - h),
        });
    }
    if let Some(p) = model.family_params() {
        if p.family == Family::Pareto && t + h >= p.c1 {
            return Err(ThermoError::StencilCrossesBoundary {
                at: t,
                condition: format!("T + h = {} reaches the pole at c1 = {}", t + h, p.c1),
            });
        }
        if p.family == Family::Gamma && p.d1 > 0.0 {
            let a = |tt: f64| (1.0 - p.d1 / tt) / p.delta;
            if a(t - h) <= 0.0 || a(t + h) <= 0.0 {
                return Err(ThermoError::StencilCrossesBoundary {
                    at: t,
                    condition: "stencil crosses the gamma validity boundary T = d1".to_string(),
                });
            }
        }
    }
    Ok(h)
}

/// Mean money ⟨m⟩ by quadrature (the primary route).
pub fn mean_money(model: &ModelSpec, t: f64, opts: &ThermoOpts) -> Result<f64, ThermoError> {
    guard(model, t, opts)?;
    Ok(quadrature::mean_money_quadrature(model, t, opts.rel_tol)?)
}

/// Intensive variables y = -∂f/∂x for every declared macro-parameter.
pub fn intensive_vars(model: &ModelSpec, t: f64, opts: &ThermoOpts) -> Result<Vec<f64>, ThermoError> {
    guard(model, t, opts)?;
    let mut out = Vec::with_capacity(model.macro_params.len());
    for &param in &model.macro_params {
        out.push(intensive_var(model, t, param, opts)?);
    }
    Ok(out)
}

fn intensive_var(
    model: &ModelSpec,
    t: f64,
    param: MacroParam,
    opts: &ThermoOpts,
) -> Result<f64, ThermoError> {
    let v = model.macro_value(param)?;
    let h = f64::max(1e-4 * v.abs(), 1e-7);
    let inner = stencil_opts(opts);
    let f = |vv: f64| -> Result<f64, ThermoError> {
        let perturbed = model
            .with_macro_value(param, vv)
            .map_err(|e| ThermoError::StencilCrossesBoundary {
                at: v,
                condition: e.to_string(),
            })?;
        free_money(&perturbed, t, &inner)
    };
    Ok(-richardson(&f, v, h)?)
}

/// Heat capacity C = T ∂S/∂T, differencing the direct-route entropy.
pub fn heat_capacity(model: &ModelSpec, t: f64, opts: &ThermoOpts) -> Result<f64, ThermoError> {
    guard(model, t, opts)?;
    let h = stencil_step(model, t, opts)?;
    let inner = stencil_opts(opts);
    let s = |tt: f64| entropy(model, tt, EntropyMethod::Direct, &inner);
    Ok(t * richardson(&s, t, h)?)
}

/// First-law residual |Δ⟨m⟩ - T·ΔS + Σ yᵢ·Δxᵢ| between two states straddling
/// (t, x); dt and dx are total increments. Residual is O(step²) on smooth
/// models.
pub fn first_law_residual(
    model: &ModelSpec,
    t: f64,
    dt: f64,
    dx: Option<(MacroParam, f64)>,
    opts: &ThermoOpts,
) -> Result<f64, ThermoError> {
    guard(model, t, opts)?;
    let (lo, hi) = match dx {
        None => (model.clone(), model.clone()),
        Some((param, dv)) => {
            let v = model.macro_value(param)?;
            (
                model.with_macro_value(param, v - 0.5 * dv)?,
                model.with_macro_value(param, v + 0.5 * dv)?,
            )
        }
    };
    let (t1, t2) = (t - 0.5 * dt, t + 0.5 * dt);
    let mean1 = mean_money(&lo, t1, opts)?;
    let mean2 = mean_money(&hi, t2, opts)?;
    let s1 = entropy(&lo, t1, EntropyMethod::Derivative, opts)?;
    let s2 = entropy(&hi, t2, EntropyMethod::Derivative, opts)?;
    let mut residual = (mean2 - mean1) - t * (s2 - s1);
    if let Some((param, dv)) = dx {
        let y_mid = intensive_var(model, t, param, opts)?;
        residual += y_mid * dv;
    }
    Ok(residual.abs())
}

/// Full numeric state: every variable plus the recorded cross-check residuals.
pub fn thermo_state(model: &ModelSpec, t: f64, opts: &ThermoOpts) -> Result<ThermoState, ThermoError> {
    guard(model, t, opts)?;
    let q = quadrature::partition_function_tol(model, t, opts.rel_tol)?;
    let f = -t * q.ln();
    let s_deriv = entropy(model, t, EntropyMethod::Derivative, opts)?;
    let s_direct = entropy(model, t, EntropyMethod::Direct, opts)?;
    let mean = quadrature::mean_money_quadrature(model, t, opts.rel_tol)?;
    let y = intensive_vars(model, t, opts)?;
    let c = heat_capacity(model, t, opts)?;

    let mut state = ThermoState::new(t, q, f, s_deriv, mean, y, c);
    state
        .residuals
        .insert("entropy_routes".to_string(), (s_deriv - s_direct).abs());
    state.residuals.insert(
        "mean_money_cross".to_string(),
        (mean - (f + t * s_deriv)).abs(),
    );
    state
        .residuals
        .insert("legendre".to_string(), state.legendre_residual());
    Ok(state)
}

fn richardson(
    f: &dyn Fn(f64) -> Result<f64, ThermoError>,
    x: f64,
    h: f64,
) -> Result<f64, ThermoError> {
    let d = |h: f64| -> Result<f64, ThermoError> { Ok((f(x + h)? - f(x - h)?) / (2.0 * h)) };
    Ok((4.0 * d(0.5 * h)? - d(h)?) / 3.0)
}
