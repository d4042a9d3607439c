//! Numerical evaluation of the partition function Q(T, x̄) = ∫ e^{-m(λ̄)/T} dλ̄
//! and of expectations ⟨g⟩ against the equilibrium density.
//!
//! Every integral goes through one mechanism: infinite endpoints are mapped to
//! a finite interval (λ = a + t/(1-t) for semi-infinite, λ = t/(1-t²) for the
//! doubly infinite case) and the transformed integrand is handled by adaptive
//! bisection with a Gauss-Kronrod 7-15 rule per panel. Separable money
//! functions factor into independent one-dimensional integrals; non-separable
//! groups up to three variables are integrated by nesting.

use std::cell::RefCell;
use std::collections::{BTreeMap, BinaryHeap};

use thiserror::Error;

use crate::catalog::{Family, FamilyParams};
use crate::expr::{self, MoneyExpr};

/// Default relative tolerance for all quadrature driven by the thermo layer.
pub const DEFAULT_REL_TOL: f64 = 1e-10;
/// Panel budget for one adaptive integral.
pub const MAX_SUBDIVISIONS: usize = 2000;

/// Integration interval; either endpoint may be infinite.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Interval {
    pub lower: f64,
    pub upper: f64,
}

impl Interval {
    pub fn new(lower: f64, upper: f64) -> Result<Self, QuadError> {
        if lower.is_nan() || upper.is_nan() || !(lower < upper) {
            return Err(QuadError::InvalidInterval { lower, upper });
        }
        Ok(Interval { lower, upper })
    }

    pub fn length(&self) -> f64 {
        self.upper - self.lower
    }

    pub fn is_finite(&self) -> bool {
        self.lower.is_finite() && self.upper.is_finite()
    }
}

/// Outcome of one adaptive integral.
#[derive(Debug, Clone, Copy)]
pub struct QuadResult {
    pub value: f64,
    pub abs_error_estimate: f64,
    pub subdivisions: usize,
}

#[derive(Debug, Clone, Error)]
pub enum QuadError {
    #[error("invalid interval [{lower}, {upper}]")]
    InvalidInterval { lower: f64, upper: f64 },
    #[error("relative tolerance {0} outside (1e-14, 1e-2)")]
    InvalidTolerance(f64),
    #[error("temperature must be positive, got {0}")]
    NonPositiveTemperature(f64),
    #[error("divergent integral: {condition}")]
    Divergent { condition: String },
    #[error("integrand returned NaN near {at}")]
    IntegrandNaN { at: f64 },
    #[error("quadrature did not converge: value {value}, error estimate {error}")]
    NonConvergence { value: f64, error: f64 },
    #[error("cannot integrate {0} coupled variables (limit 3)")]
    DimensionTooHigh(usize),
    #[error("model error: {0}")]
    Model(String),
}

/// Money function of a model: a catalog family or a parsed expression.
#[derive(Debug, Clone)]
pub enum MoneyFn {
    Family(FamilyParams),
    Expr { expr: MoneyExpr, n_vars: usize },
}

/// A macroeconomic parameter surviving integration, identified by what it
/// controls in the integration domain.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum MacroParam {
    /// Lower bound of the variable's interval (the Pareto x).
    LowerBound { var: usize },
    /// Length Λᵢ of a finite interval (lower bound held fixed).
    Length { var: usize },
}

impl MacroParam {
    pub fn label(&self) -> String {
        match self {
            MacroParam::LowerBound { var } => format!("x{var}"),
            MacroParam::Length { var } => format!("lambda{var}"),
        }
    }
}

/// A fully specified model: money function, integration domain per variable,
/// constants, spectator measure, and the declared macro-parameters.
#[derive(Debug, Clone)]
pub struct ModelSpec {
    pub money: MoneyFn,
    pub domains: Vec<Interval>,
    pub constants: BTreeMap<String, f64>,
    pub measure_factor: f64,
    pub macro_params: Vec<MacroParam>,
}

impl ModelSpec {
    /// Model from a catalog family with its default domain.
    pub fn family(params: FamilyParams) -> Self {
        let domains = default_domains(&params);
        let macro_params = if params.family == Family::Pareto {
            vec![MacroParam::LowerBound { var: 1 }]
        } else {
            Vec::new()
        };
        let measure_factor = params.measure_factor;
        ModelSpec {
            money: MoneyFn::Family(params),
            domains,
            constants: BTreeMap::new(),
            measure_factor,
            macro_params,
        }
    }

    /// Catalog family over explicit domains.
    pub fn family_with_domains(params: FamilyParams, domains: Vec<Interval>) -> Self {
        let mut spec = ModelSpec::family(params);
        spec.domains = domains;
        spec
    }

    /// Model from a parsed money expression.
    pub fn from_expr(
        expr: MoneyExpr,
        domains: Vec<Interval>,
        constants: BTreeMap<String, f64>,
        measure_factor: f64,
    ) -> Result<Self, QuadError> {
        let n_vars = domains.len();
        if let Some(&max) = expr::vars_used(&expr).iter().max() {
            if max > n_vars {
                return Err(QuadError::Model(format!(
                    "expression references l{max} but only {n_vars} domains are given"
                )));
            }
        }
        for name in expr::constants_used(&expr) {
            if !constants.contains_key(&name) {
                return Err(QuadError::Model(format!(
                    "expression references undefined constant `{name}`"
                )));
            }
        }
        Ok(ModelSpec {
            money: MoneyFn::Expr { expr, n_vars },
            domains,
            constants,
            measure_factor,
            macro_params: Vec::new(),
        })
    }

    pub fn n_vars(&self) -> usize {
        self.domains.len()
    }

    pub fn family_params(&self) -> Option<&FamilyParams> {
        match &self.money {
            MoneyFn::Family(p) => Some(p),
            MoneyFn::Expr { .. } => None,
        }
    }

    /// Current value of a declared macro-parameter.
    pub fn macro_value(&self, param: MacroParam) -> Result<f64, QuadError> {
        let dom = self.domain_of(param)?;
        match param {
            MacroParam::LowerBound { .. } => Ok(dom.lower),
            MacroParam::Length { var } => {
                if !dom.is_finite() {
                    return Err(QuadError::Model(format!(
                        "macro-parameter lambda{var} requires a finite interval"
                    )));
                }
                Ok(dom.length())
            }
        }
    }

    /// Copy of the model with one macro-parameter moved to `value`.
    pub fn with_macro_value(&self, param: MacroParam, value: f64) -> Result<Self, QuadError> {
        let dom = self.domain_of(param)?;
        let new_dom = match param {
            MacroParam::LowerBound { .. } => Interval::new(value, dom.upper)?,
            MacroParam::Length { .. } => {
                if value <= 0.0 {
                    return Err(QuadError::InvalidInterval {
                        lower: dom.lower,
                        upper: dom.lower + value,
                    });
                }
                Interval::new(dom.lower, dom.lower + value)?
            }
        };
        let var = match param {
            MacroParam::LowerBound { var } | MacroParam::Length { var } => var,
        };
        let mut spec = self.clone();
        spec.domains[var - 1] = new_dom;
        if let (MoneyFn::Family(p), MacroParam::LowerBound { var: 1 }) =
            (&mut spec.money, param)
        {
            if p.family == Family::Pareto {
                p.x = value;
            }
        }
        Ok(spec)
    }

    fn domain_of(&self, param: MacroParam) -> Result<Interval, QuadError> {
        let var = match param {
            MacroParam::LowerBound { var } | MacroParam::Length { var } => var,
        };
        self.domains
            .get(var - 1)
            .copied()
            .ok_or_else(|| QuadError::Model(format!("macro-parameter refers to missing variable l{var}")))
    }

    /// Fail fast on the analytically known divergence conditions before any
    /// integration is attempted.
    pub fn check_convergence(&self, t: f64) -> Result<(), QuadError> {
        if t <= 0.0 || !t.is_finite() {
            return Err(QuadError::NonPositiveTemperature(t));
        }
        if let MoneyFn::Family(p) = &self.money {
            match p.family {
                Family::Monomial if p.delta <= 0.0 => {
                    return Err(QuadError::Divergent {
                        condition: format!("monomial requires delta > 0, got delta = {}", p.delta),
                    });
                }
                Family::Quadratic | Family::SingleLinear | Family::Monomial if p.c1 <= 0.0 => {
                    return Err(QuadError::Divergent {
                        condition: format!("family requires c1 > 0, got c1 = {}", p.c1),
                    });
                }
                Family::Pareto => {
                    let x = self.domains[0].lower;
                    if !(x > 0.0) || !x.is_finite() {
                        return Err(QuadError::Divergent {
                            condition: format!("pareto requires a finite lower bound x > 0, got {x}"),
                        });
                    }
                    let alpha = p.c1 / t - 1.0;
                    if alpha <= 0.0 {
                        return Err(QuadError::Divergent {
                            condition: format!(
                                "pareto requires alpha = c1/T - 1 > 0, got alpha = {alpha} at T = {t}"
                            ),
                        });
                    }
                }
                Family::Gamma => {
                    if p.delta <= 0.0 || p.c1 <= 0.0 {
                        return Err(QuadError::Divergent {
                            condition: format!(
                                "gamma requires c1 > 0 and delta > 0, got c1 = {}, delta = {}",
                                p.c1, p.delta
                            ),
                        });
                    }
                    let a = (1.0 - p.d1 / t) / p.delta;
                    if a <= 0.0 {
                        return Err(QuadError::Divergent {
                            condition: format!(
                                "gamma requires (1 - d1/T)/delta > 0, got {a} at T = {t}"
                            ),
                        });
                    }
                }
                _ => {}
            }
        }
        Ok(())
    }

    /// Factorization of the money function into additively independent groups.
    pub(crate) fn plan(&self) -> Result<Plan, QuadError> {
        match &self.money {
            MoneyFn::Family(p) => family_plan(p, &self.domains),
            MoneyFn::Expr { expr, n_vars } => expr_plan(expr, *n_vars, &self.domains, &self.constants),
        }
    }

    /// Total money function m(λ̄) at a full-dimension point.
    pub fn money_at(&self, point: &[f64]) -> Result<f64, QuadError> {
        let plan = self.plan()?;
        Ok(plan.total_money(point))
    }
}

fn default_domains(params: &FamilyParams) -> Vec<Interval> {
    let semi = Interval {
        lower: 0.0,
        upper: f64::INFINITY,
    };
    match params.family {
        // Λ normalized to 1 for the constant model
        Family::Constant => vec![Interval {
            lower: 0.0,
            upper: 1.0,
        }],
        Family::SingleLinear | Family::Monomial | Family::Gamma => vec![semi],
        Family::GeneralLinear => vec![semi; params.n],
        Family::Quadratic => vec![Interval {
            lower: f64::NEG_INFINITY,
            upper: f64::INFINITY,
        }],
        Family::Pareto => vec![Interval {
            lower: params.x,
            upper: f64::INFINITY,
        }],
    }
}

// ---------------------------------------------------------------------------
// factorization plans
// ---------------------------------------------------------------------------

type GroupFn = Box<dyn Fn(&[f64]) -> f64>;

pub(crate) struct PlanGroup {
    /// 1-based variable indices, ascending; the money closure receives the
    /// point restricted to these variables in the same order.
    pub vars: Vec<usize>,
    pub domains: Vec<Interval>,
    pub money: GroupFn,
}

pub(crate) struct Plan {
    /// Constant (variable-free) part of the money function.
    pub offset: f64,
    /// Product of interval lengths of declared but unreferenced variables.
    pub spectator: f64,
    pub groups: Vec<PlanGroup>,
}

impl Plan {
    pub fn total_money(&self, point: &[f64]) -> f64 {
        let mut m = self.offset;
        for g in &self.groups {
            let local: Vec<f64> = g.vars.iter().map(|&v| point[v - 1]).collect();
            m += (g.money)(&local);
        }
        m
    }
}

fn family_plan(p: &FamilyParams, domains: &[Interval]) -> Result<Plan, QuadError> {
    let mut plan = Plan {
        offset: 0.0,
        spectator: 1.0,
        groups: Vec::new(),
    };
    let one_var_group = |m: GroupFn| PlanGroup {
        vars: vec![1],
        domains: vec![domains[0]],
        money: m,
    };
    match p.family {
        Family::Constant => {
            plan.offset = p.c0;
            for (i, d) in domains.iter().enumerate() {
                if !d.is_finite() {
                    return Err(QuadError::Divergent {
                        condition: format!(
                            "constant model requires finite intervals, variable l{} has [{}, {}]",
                            i + 1,
                            d.lower,
                            d.upper
                        ),
                    });
                }
                plan.spectator *= d.length();
            }
        }
        Family::SingleLinear => {
            let c1 = p.c1;
            plan.groups.push(one_var_group(Box::new(move |x| c1 * x[0])));
        }
        Family::GeneralLinear => {
            plan.offset = p.c0;
            let coeffs = p.linear_coefficients();
            for (i, c) in coeffs.into_iter().enumerate() {
                plan.groups.push(PlanGroup {
                    vars: vec![i + 1],
                    domains: vec![domains[i]],
                    money: Box::new(move |x| c * x[0]),
                });
            }
        }
        Family::Quadratic => {
            let c1 = p.c1;
            plan.groups
                .push(one_var_group(Box::new(move |x| c1 * x[0] * x[0])));
        }
        Family::Monomial => {
            let (c1, delta) = (p.c1, p.delta);
            plan.groups
                .push(one_var_group(Box::new(move |x| c1 * x[0].powf(delta))));
        }
        Family::Pareto => {
            let c1 = p.c1;
            plan.groups.push(one_var_group(Box::new(move |x| {
                if x[0] <= 0.0 {
                    f64::NAN
                } else {
                    c1 * x[0].ln()
                }
            })));
        }
        Family::Gamma => {
            let (c1, d1, delta) = (p.c1, p.d1, p.delta);
            plan.groups.push(one_var_group(Box::new(move |x| {
                if x[0] <= 0.0 {
                    f64::NAN
                } else {
                    c1 * x[0].powf(delta) + d1 * x[0].ln()
                }
            })));
        }
    }
    Ok(plan)
}

fn expr_plan(
    e: &MoneyExpr,
    n_vars: usize,
    domains: &[Interval],
    constants: &BTreeMap<String, f64>,
) -> Result<Plan, QuadError> {
    if domains.len() != n_vars {
        return Err(QuadError::Model(format!(
            "expression declares {n_vars} variables but {} domains are given",
            domains.len()
        )));
    }
    let lookup = |name: &str| constants.get(name).copied();
    let offset =
        expr::constant_part(e, &lookup).map_err(|err| QuadError::Model(err.to_string()))?;
    let groups = expr::detect_separability(e);
    let mut plan = Plan {
        offset,
        spectator: 1.0,
        groups: Vec::new(),
    };
    let referenced = expr::vars_used(e);
    for (i, d) in domains.iter().enumerate() {
        if !referenced.contains(&(i + 1)) {
            if !d.is_finite() {
                return Err(QuadError::Divergent {
                    condition: format!(
                        "variable l{} does not appear in the money function and its interval [{}, {}] has infinite measure",
                        i + 1,
                        d.lower,
                        d.upper
                    ),
                });
            }
            plan.spectator *= d.length();
        }
    }
    for group in groups {
        if group.len() > 3 {
            return Err(QuadError::DimensionTooHigh(group.len()));
        }
        let vars: Vec<usize> = group.iter().copied().collect();
        let sub = expr::group_subexpr(e, &group).ok_or_else(|| {
            QuadError::Model("internal error: empty separability group".to_string())
        })?;
        let group_domains: Vec<Interval> = vars.iter().map(|&v| domains[v - 1]).collect();
        let consts = constants.clone();
        // remap group-local coordinates onto the variable indices the
        // sub-expression actually uses
        let var_map: Vec<usize> = vars.clone();
        let max_var = *var_map.iter().max().unwrap();
        plan.groups.push(PlanGroup {
            vars,
            domains: group_domains,
            money: Box::new(move |local: &[f64]| {
                let mut point = vec![f64::NAN; max_var];
                for (slot, &v) in var_map.iter().enumerate() {
                    point[v - 1] = local[slot];
                }
                match expr::eval_money_fn(&sub, &point, &|k| consts.get(k).copied()) {
                    Ok(v) => v,
                    Err(_) => f64::NAN,
                }
            }),
        });
    }
    Ok(plan)
}

// ---------------------------------------------------------------------------
// model-level integrals
// ---------------------------------------------------------------------------

/// Boltzmann weight e^{-m/T}, defined as 0 when the money overflows to +∞ so
/// expectation integrands never form ∞·0 at extreme quadrature nodes.
fn boltzmann(m: f64, t: f64) -> f64 {
    if m == f64::INFINITY {
        0.0
    } else {
        (-m / t).exp()
    }
}

/// Partition function Q(T) = measure_factor · ∏ group integrals of e^{-m_g/T}.
pub fn partition_function(model: &ModelSpec, t: f64) -> Result<f64, QuadError> {
    partition_function_tol(model, t, DEFAULT_REL_TOL)
}

pub fn partition_function_tol(model: &ModelSpec, t: f64, rel_tol: f64) -> Result<f64, QuadError> {
    model.check_convergence(t)?;
    let plan = model.plan()?;
    let mut q = model.measure_factor * plan.spectator * (-plan.offset / t).exp();
    for g in &plan.groups {
        let integrand = |point: &[f64]| boltzmann((g.money)(point), t);
        q *= integrate_nd(&integrand, &g.domains, rel_tol)?.value;
    }
    if !q.is_finite() {
        return Err(QuadError::Divergent {
            condition: format!("partition function evaluated to {q} at T = {t}"),
        });
    }
    if q <= 0.0 {
        return Err(QuadError::Model(format!(
            "partition function must be positive, got {q} at T = {t}"
        )));
    }
    Ok(q)
}

/// Mean value ⟨g⟩ = (1/Q)∫ g e^{-m/T} dλ̄ of an arbitrary observable over the
/// full (non-factorized) domain.
pub fn expectation(
    model: &ModelSpec,
    t: f64,
    observable: &dyn Fn(&[f64]) -> f64,
) -> Result<f64, QuadError> {
    expectation_tol(model, t, observable, DEFAULT_REL_TOL)
}

pub fn expectation_tol(
    model: &ModelSpec,
    t: f64,
    observable: &dyn Fn(&[f64]) -> f64,
    rel_tol: f64,
) -> Result<f64, QuadError> {
    model.check_convergence(t)?;
    if model.n_vars() > 3 {
        return Err(QuadError::DimensionTooHigh(model.n_vars()));
    }
    let plan = model.plan()?;
    // the constant offset and measure factor cancel in the ratio
    let weight = |point: &[f64]| boltzmann(plan.total_money(point) - plan.offset, t);
    let numer = integrate_nd(
        &|point: &[f64]| {
            let w = weight(point);
            if w == 0.0 {
                0.0
            } else {
                observable(point) * w
            }
        },
        &model.domains,
        rel_tol,
    )?;
    let denom = integrate_nd(&weight, &model.domains, rel_tol)?;
    Ok(numer.value / denom.value)
}

/// Mean money ⟨m⟩ computed through the additive factorization:
/// ⟨m⟩ = m₀ + Σ_g ⟨m_g⟩ with each group expectation a low-dimensional ratio.
pub fn mean_money_quadrature(model: &ModelSpec, t: f64, rel_tol: f64) -> Result<f64, QuadError> {
    model.check_convergence(t)?;
    let plan = model.plan()?;
    let mut mean = plan.offset;
    for g in &plan.groups {
        let weight = |p: &[f64]| boltzmann((g.money)(p), t);
        let numer = integrate_nd(
            &|p: &[f64]| {
                let w = weight(p);
                if w == 0.0 {
                    0.0
                } else {
                    (g.money)(p) * w
                }
            },
            &g.domains,
            rel_tol,
        )?;
        let denom = integrate_nd(&weight, &g.domains, rel_tol)?;
        mean += numer.value / denom.value;
    }
    Ok(mean)
}

/// Non-factorized partition function: one nested integral over all variables.
/// Exists as an independent cross-check of the factorized route.
pub fn partition_function_nested(
    model: &ModelSpec,
    t: f64,
    rel_tol: f64,
) -> Result<f64, QuadError> {
    model.check_convergence(t)?;
    if model.n_vars() > 3 {
        return Err(QuadError::DimensionTooHigh(model.n_vars()));
    }
    let plan = model.plan()?;
    let integrand = |point: &[f64]| boltzmann(plan.total_money(point), t);
    let q = integrate_nd(&integrand, &model.domains, rel_tol)?;
    Ok(model.measure_factor * q.value)
}

// ---------------------------------------------------------------------------
// adaptive Gauss-Kronrod core
// ---------------------------------------------------------------------------

/// Adaptive integral of `f` over `interval` to relative tolerance `rel_tol`.
pub fn integrate_1d(
    f: &dyn Fn(f64) -> f64,
    interval: Interval,
    rel_tol: f64,
) -> Result<QuadResult, QuadError> {
    if !(rel_tol > 1e-14 && rel_tol < 1e-2) {
        return Err(QuadError::InvalidTolerance(rel_tol));
    }
    if interval.lower.is_nan() || interval.upper.is_nan() || !(interval.lower < interval.upper) {
        return Err(QuadError::InvalidInterval {
            lower: interval.lower,
            upper: interval.upper,
        });
    }

    // map to a finite parameter interval
    let (a, b, g): (f64, f64, Box<dyn Fn(f64) -> f64 + '_>) =
        match (interval.lower.is_finite(), interval.upper.is_finite()) {
            (true, true) => (interval.lower, interval.upper, Box::new(f)),
            (true, false) => {
                let lo = interval.lower;
                // λ = lo + e^u - 1 with u = t/(1-t): the exponential stretch
                // maps power-law tails to exponential decay in u, so even
                // slowly decaying integrands need only logarithmically many
                // endpoint refinements. dλ = e^u dt/(1-t)².
                (
                    0.0,
                    1.0,
                    Box::new(move |t: f64| {
                        let w = 1.0 - t;
                        let u = t / w;
                        let eu = u.exp();
                        let lambda = lo + (eu - 1.0);
                        if !lambda.is_finite() {
                            // endpoint in the limit: the density vanishes
                            // faster than the jacobian grows (convergence is
                            // vetted up front), so the contribution is zero
                            return 0.0;
                        }
                        let v = f(lambda);
                        if v == 0.0 {
                            return 0.0;
                        }
                        v * eu / (w * w)
                    }),
                )
            }
            (false, true) => {
                let hi = interval.upper;
                (
                    0.0,
                    1.0,
                    Box::new(move |t: f64| {
                        let w = 1.0 - t;
                        let u = t / w;
                        let eu = u.exp();
                        let lambda = hi - (eu - 1.0);
                        if !lambda.is_finite() {
                            return 0.0;
                        }
                        let v = f(lambda);
                        if v == 0.0 {
                            return 0.0;
                        }
                        v * eu / (w * w)
                    }),
                )
            }
            (false, false) => {
                // λ = t/(1-t²), dλ = (1+t²)/(1-t²)² dt
                (
                    -1.0,
                    1.0,
                    Box::new(move |t: f64| {
                        let u = 1.0 - t * t;
                        let lambda = t / u;
                        if !lambda.is_finite() {
                            return 0.0;
                        }
                        let v = f(lambda);
                        if v == 0.0 {
                            return 0.0;
                        }
                        v * (1.0 + t * t) / (u * u)
                    }),
                )
            }
        };

    adaptive_gk(&g, a, b, rel_tol)
}

#[derive(Debug)]
struct Panel {
    a: f64,
    b: f64,
    value: f64,
    error: f64,
}

impl PartialEq for Panel {
    fn eq(&self, other: &Self) -> bool {
        self.error == other.error
    }
}
impl Eq for Panel {}
impl PartialOrd for Panel {
    fn partial_cmp(&self, other: &Self) -> Option<std::cmp::Ordering> {
        Some(self.cmp(other))
    }
}
impl Ord for Panel {
    fn cmp(&self, other: &Self) -> std::cmp::Ordering {
        self.error.total_cmp(&other.error)
    }
}

fn adaptive_gk(
    f: &dyn Fn(f64) -> f64,
    a: f64,
    b: f64,
    rel_tol: f64,
) -> Result<QuadResult, QuadError> {
    let mut heap = BinaryHeap::new();
    let mut total = 0.0;
    let mut total_err = 0.0;
    let first = gk15(f, a, b)?;
    total += first.value;
    total_err += first.error;
    heap.push(first);
    let mut subdivisions = 0usize;

    loop {
        if !total.is_finite() || total.abs() > 1e250 {
            return Err(QuadError::Divergent {
                condition: format!("integral grew without bound (current value {total})"),
            });
        }
        if total_err <= f64::max(rel_tol * total.abs(), 1e-300) {
            return Ok(QuadResult {
                value: total,
                abs_error_estimate: total_err,
                subdivisions,
            });
        }
        if subdivisions >= MAX_SUBDIVISIONS {
            return Err(QuadError::NonConvergence {
                value: total,
                error: total_err,
            });
        }
        let worst = heap.pop().expect("heap cannot be empty");
        let mid = 0.5 * (worst.a + worst.b);
        if mid <= worst.a || mid >= worst.b {
            // interval exhausted at machine precision; accept what we have
            heap.push(worst);
            return Ok(QuadResult {
                value: total,
                abs_error_estimate: total_err,
                subdivisions,
            });
        }
        total -= worst.value;
        total_err -= worst.error;
        let left = gk15(f, worst.a, mid)?;
        let right = gk15(f, mid, worst.b)?;
        total += left.value + right.value;
        total_err += left.error + right.error;
        heap.push(left);
        heap.push(right);
        subdivisions += 1;
    }
}

// Kronrod-15 abscissae (positive half) and weights, with the embedded
// Gauss-7 weights on the shared nodes.
const XGK: [f64; 8] = [
    0.991455371120812639206854697526329,
    0.949107912342758524526189684047851,
    0.864864423359769072789712788640926,
    0.741531185599394439863864773280788,
    0.586087235467691130294144838258730,
    0.405845151377397166906606412076961,
    0.207784955007898467600689403773245,
    0.000000000000000000000000000000000,
];
const WGK: [f64; 8] = [
    0.022935322010529224963732008058970,
    0.063092092629978553290700663189204,
    0.104790010322250183839876322541518,
    0.140653259715525918745189590510238,
    0.169004726639267902826583426598550,
    0.190350578064785409913256402421014,
    0.204432940075298892414161999234649,
    0.209482141084727828012999174891714,
];
const WG: [f64; 4] = [
    0.129484966168869693270611432679082,
    0.279705391489276667901467771423780,
    0.381830050505118944950369775488975,
    0.417959183673469387755102040816327,
];

fn gk15(f: &dyn Fn(f64) -> f64, a: f64, b: f64) -> Result<Panel, QuadError> {
    let half = 0.5 * (b - a);
    let center = 0.5 * (a + b);
    let mut kronrod = 0.0;
    let mut gauss = 0.0;
    for (i, (&x, &wk)) in XGK.iter().zip(WGK.iter()).enumerate() {
        let (f_sum, at) = if i == 7 {
            let v = f(center);
            (v, center)
        } else {
            let lo = center - half * x;
            let hi = center + half * x;
            (f(lo) + f(hi), lo)
        };
        if f_sum.is_nan() {
            return Err(QuadError::IntegrandNaN { at });
        }
        kronrod += wk * f_sum;
        // odd Kronrod indices are the embedded Gauss-7 nodes
        if i % 2 == 1 {
            gauss += WG[i / 2] * f_sum;
        }
    }
    let value = kronrod * half;
    let gauss_value = gauss * half;
    // |K15 - G7| scaled per QUADPACK practice
    let err = {
        let diff = (value - gauss_value).abs();
        let scaled = (200.0 * diff).powf(1.5);
        if scaled < diff {
            scaled
        } else {
            diff
        }
    };
    Ok(Panel {
        a,
        b,
        value,
        error: err,
    })
}

/// Nested adaptive integral over up to three dimensions.
pub fn integrate_nd(
    f: &dyn Fn(&[f64]) -> f64,
    domains: &[Interval],
    rel_tol: f64,
) -> Result<QuadResult, QuadError> {
    match domains.len() {
        0 => Ok(QuadResult {
            value: 1.0,
            abs_error_estimate: 0.0,
            subdivisions: 0,
        }),
        1 => integrate_1d(&|x| f(&[x]), domains[0], rel_tol),
        n if n <= 3 => {
            let inner_err: RefCell<Option<QuadError>> = RefCell::new(None);
            let inner_tol = f64::max(rel_tol * 0.1, 2e-14);
            let outer = integrate_1d(
                &|x| {
                    if inner_err.borrow().is_some() {
                        return 0.0;
                    }
                    let g = |rest: &[f64]| {
                        let mut point = Vec::with_capacity(domains.len());
                        point.push(x);
                        point.extend_from_slice(rest);
                        f(&point)
                    };
                    match integrate_nd(&g, &domains[1..], inner_tol) {
                        Ok(r) => r.value,
                        Err(e) => {
                            *inner_err.borrow_mut() = Some(e);
                            0.0
                        }
                    }
                },
                domains[0],
                rel_tol,
            );
            if let Some(e) = inner_err.into_inner() {
                return Err(e);
            }
            outer
        }
        n => Err(QuadError::DimensionTooHigh(n)),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::catalog::FamilyParams;
    use crate::expr::parse_money_fn;
    use std::f64::consts::PI;

    fn semi() -> Interval {
        Interval {
            lower: 0.0,
            upper: f64::INFINITY,
        }
    }

    #[test]
    fn unit_exponential() {
        let r = integrate_1d(&|x| (-x).exp(), semi(), 1e-10).unwrap();
        assert!((r.value - 1.0).abs() < 1e-10, "got {}", r.value);
    }

    #[test]
    fn gaussian_over_the_whole_line() {
        let dom = Interval {
            lower: f64::NEG_INFINITY,
            upper: f64::INFINITY,
        };
        let r = integrate_1d(&|x| (-x * x).exp(), dom, 1e-10).unwrap();
        assert!((r.value - PI.sqrt()).abs() < 1e-9, "got {}", r.value);
    }

    #[test]
    fn pareto_unit_tail() {
        let dom = Interval {
            lower: 1.0,
            upper: f64::INFINITY,
        };
        let r = integrate_1d(&|x| x.powi(-2), dom, 1e-10).unwrap();
        assert!((r.value - 1.0).abs() < 1e-9, "got {}", r.value);
    }

    #[test]
    fn finite_polynomial() {
        let dom = Interval {
            lower: 0.0,
            upper: 2.0,
        };
        let r = integrate_1d(&|x| 3.0 * x * x, dom, 1e-12).unwrap();
        assert!((r.value - 8.0).abs() < 1e-11);
    }

    #[test]
    fn rejects_bad_tolerance_and_interval() {
        assert!(matches!(
            integrate_1d(&|x| x, semi(), 1e-1),
            Err(QuadError::InvalidTolerance(_))
        ));
        let bad = Interval {
            lower: 2.0,
            upper: 1.0,
        };
        assert!(matches!(
            integrate_1d(&|x| x, bad, 1e-8),
            Err(QuadError::InvalidInterval { .. })
        ));
    }

    #[test]
    fn nan_integrand_reported() {
        let r = integrate_1d(&|_| f64::NAN, semi(), 1e-8);
        assert!(matches!(r, Err(QuadError::IntegrandNaN { .. })));
    }

    #[test]
    fn partition_monomial_sqrt_pi() {
        // c1 = 1, delta = 2, T = 4: Q = (1/2)(4)^{1/2} Γ(1/2) = √π,
        // cross-checked against the closed form (1/δ)(T/c1)^{1/δ}Γ(1/δ)
        let model = ModelSpec::family(FamilyParams::monomial(1.0, 2.0));
        let q = partition_function(&model, 4.0).unwrap();
        assert!((q - PI.sqrt()).abs() < 1e-9, "got {q}");
    }

    #[test]
    fn partition_pareto_alpha_one() {
        let model = ModelSpec::family(FamilyParams::pareto(2.0, 1.0));
        let q = partition_function(&model, 1.0).unwrap();
        assert!((q - 1.0).abs() < 1e-9, "got {q}");
    }

    #[test]
    fn partition_constant_model() {
        let model = ModelSpec::family(FamilyParams::constant(5.0));
        let q = partition_function(&model, 2.0).unwrap();
        assert!((q - (-2.5f64).exp()).abs() < 1e-12, "got {q}");
    }

    #[test]
    fn normalization_is_one() {
        for model in [
            ModelSpec::family(FamilyParams::monomial(1.0, 2.0)),
            ModelSpec::family(FamilyParams::pareto(2.0, 1.0)),
            ModelSpec::family(FamilyParams::single_linear(1.5)),
        ] {
            let one = expectation(&model, 1.0, &|_| 1.0).unwrap();
            assert!((one - 1.0).abs() < 1e-9, "got {one}");
        }
    }

    #[test]
    fn mean_money_monomial() {
        // ⟨m⟩ = T/δ
        let model = ModelSpec::family(FamilyParams::monomial(1.0, 2.0));
        let m = mean_money_quadrature(&model, 4.0, 1e-10).unwrap();
        assert!((m - 2.0).abs() < 1e-8, "got {m}");
    }

    #[test]
    fn mean_money_pareto_against_log_oracle() {
        // oracle: ∫₁^∞ 2 ln λ · λ^{-2} dλ = 2
        let dom = Interval {
            lower: 1.0,
            upper: f64::INFINITY,
        };
        let oracle = integrate_1d(&|x| 2.0 * x.ln() * x.powi(-2), dom, 1e-11).unwrap();
        assert!((oracle.value - 2.0).abs() < 1e-9);

        let model = ModelSpec::family(FamilyParams::pareto(2.0, 1.0));
        let m = mean_money_quadrature(&model, 1.0, 1e-10).unwrap();
        assert!((m - oracle.value).abs() < 1e-8, "got {m}");
    }

    #[test]
    fn divergent_pareto_named_condition() {
        let model = ModelSpec::family(FamilyParams::pareto(2.0, 1.0));
        match partition_function(&model, 3.0) {
            Err(QuadError::Divergent { condition }) => {
                assert!(condition.contains("alpha"), "condition: {condition}");
            }
            other => panic!("expected Divergent, got {other:?}"),
        }
    }

    #[test]
    fn divergent_monomial_nonpositive_delta() {
        let model = ModelSpec::family(FamilyParams::monomial(1.0, -1.0));
        assert!(matches!(
            partition_function(&model, 1.0),
            Err(QuadError::Divergent { .. })
        ));
    }

    #[test]
    fn rejects_nonpositive_temperature() {
        let model = ModelSpec::family(FamilyParams::single_linear(1.0));
        assert!(matches!(
            partition_function(&model, 0.0),
            Err(QuadError::NonPositiveTemperature(_))
        ));
    }

    #[test]
    fn factorized_matches_nested_for_separable_models() {
        let expr = parse_money_fn("c1*l1 + c2*l2^2", 2).unwrap();
        let constants: BTreeMap<String, f64> =
            [("c1".to_string(), 1.0), ("c2".to_string(), 0.5)].into();
        let model = ModelSpec::from_expr(
            expr,
            vec![
                semi(),
                Interval {
                    lower: f64::NEG_INFINITY,
                    upper: f64::INFINITY,
                },
            ],
            constants,
            1.0,
        )
        .unwrap();
        for t in [0.7, 1.0, 2.5] {
            let fact = partition_function(&model, t).unwrap();
            let nested = partition_function_nested(&model, t, 1e-9).unwrap();
            assert!(
                ((fact - nested) / nested).abs() < 1e-8,
                "T = {t}: factorized {fact}, nested {nested}"
            );
        }
    }

    #[test]
    fn three_dimensional_general_linear() {
        let model = ModelSpec::family(FamilyParams::general_linear(1.0, 3, 1.0));
        let t = 2.0;
        let q = partition_function(&model, t).unwrap();
        // closed form: e^{-c0/T} T^n / c̄
        let expected = (-0.5f64).exp() * t.powi(3);
        assert!(((q - expected) / expected).abs() < 1e-9, "got {q}");
        let nested = partition_function_nested(&model, t, 1e-9).unwrap();
        assert!(((q - nested) / nested).abs() < 1e-7);
    }

    #[test]
    fn q_monotone_in_temperature_for_nonnegative_money() {
        let model = ModelSpec::family(FamilyParams::monomial(2.0, 1.5));
        let samples = [0.5, 0.9, 1.3, 2.0, 3.5, 5.0];
        for pair in samples.windows(2) {
            let q1 = partition_function(&model, pair[0]).unwrap();
            let q2 = partition_function(&model, pair[1]).unwrap();
            assert!(q2 > q1, "Q({}) = {q1} !< Q({}) = {q2}", pair[0], pair[1]);
        }
    }

    #[test]
    fn expression_model_matches_family_route() {
        // eval of a catalog-equivalent expression equals the family model
        let expr = parse_money_fn("c1*l1^2", 1).unwrap();
        let constants: BTreeMap<String, f64> = [("c1".to_string(), 1.0)].into();
        let expr_model = ModelSpec::from_expr(expr, vec![semi()], constants, 1.0).unwrap();
        let fam_model = ModelSpec::family(FamilyParams::monomial(1.0, 2.0));
        for t in [1.0, 4.0] {
            let qe = partition_function(&expr_model, t).unwrap();
            let qf = partition_function(&fam_model, t).unwrap();
            assert!(((qe - qf) / qf).abs() < 1e-10);
        }
    }

    #[test]
    fn macro_param_round_trip() {
        let model = ModelSpec::family(FamilyParams::pareto(2.0, 1.0));
        let p = MacroParam::LowerBound { var: 1 };
        assert_eq!(model.macro_value(p).unwrap(), 1.0);
        let moved = model.with_macro_value(p, 1.5).unwrap();
        assert_eq!(moved.macro_value(p).unwrap(), 1.5);
        assert_eq!(moved.family_params().unwrap().x, 1.5);
    }
}
