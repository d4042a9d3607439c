//! Closed-form partition functions and thermodynamic variables for the model
//! families with known analytic solutions. These serve as ground truth for the
//! numeric engine; the numeric engine in turn cross-checks every formula here.

use thiserror::Error;

use crate::thermo::ThermoState;

/// The model families with closed-form solutions.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Family {
    /// m = c₀
    Constant,
    /// m = c₁λ₁ on [0, ∞)
    SingleLinear,
    /// m = c₀ + Σ cᵢλᵢ on [0, ∞)ⁿ
    GeneralLinear,
    /// m = c₁λ₁² on (-∞, ∞)
    Quadratic,
    /// m = c₁λ₁^δ on [0, ∞)
    Monomial,
    /// m = c₁ ln λ₁ on [x, ∞); the Pareto tail with α = c₁/T - 1
    Pareto,
    /// m = c₁λ₁^δ + d₁ ln λ₁ on [0, ∞); the Gamma-distribution model
    Gamma,
}

impl Family {
    pub fn tag(&self) -> &'static str {
        match self {
            Family::Constant => "constant",
            Family::SingleLinear => "single_linear",
            Family::GeneralLinear => "general_linear",
            Family::Quadratic => "quadratic",
            Family::Monomial => "monomial",
            Family::Pareto => "pareto",
            Family::Gamma => "gamma",
        }
    }

    pub fn from_tag(tag: &str) -> Option<Family> {
        Some(match tag {
            "constant" => Family::Constant,
            "single_linear" => Family::SingleLinear,
            "general_linear" => Family::GeneralLinear,
            "quadratic" => Family::Quadratic,
            "monomial" => Family::Monomial,
            "pareto" => Family::Pareto,
            "gamma" => Family::Gamma,
            _ => return None,
        })
    }

    pub const ALL: [Family; 7] = [
        Family::Constant,
        Family::SingleLinear,
        Family::GeneralLinear,
        Family::Quadratic,
        Family::Monomial,
        Family::Pareto,
        Family::Gamma,
    ];
}

/// Parameters of a catalog family. Unused fields keep their defaults.
#[derive(Debug, Clone, PartialEq)]
pub struct FamilyParams {
    pub family: Family,
    /// Constant offset (constant and general linear families).
    pub c0: f64,
    /// Leading coefficient.
    pub c1: f64,
    /// Product c₁c₂…cₙ (general linear family).
    pub cbar: f64,
    /// Explicit per-variable linear coefficients; overrides `cbar` when set.
    pub coeffs: Option<Vec<f64>>,
    /// Logarithm coefficient (gamma family).
    pub d1: f64,
    /// Power exponent (monomial and gamma families).
    pub delta: f64,
    /// Number of variables (general linear family).
    pub n: usize,
    /// Pareto lower bound.
    pub x: f64,
    /// Collapsed spectator measure Λ̄/Λ₁.
    pub measure_factor: f64,
}

impl Default for FamilyParams {
    fn default() -> Self {
        FamilyParams {
            family: Family::Constant,
            c0: 0.0,
            c1: 1.0,
            cbar: 1.0,
            coeffs: None,
            d1: 0.0,
            delta: 1.0,
            n: 1,
            x: 1.0,
            measure_factor: 1.0,
        }
    }
}

impl FamilyParams {
    pub fn constant(c0: f64) -> Self {
        FamilyParams {
            family: Family::Constant,
            c0,
            ..Default::default()
        }
    }

    pub fn single_linear(c1: f64) -> Self {
        FamilyParams {
            family: Family::SingleLinear,
            c1,
            ..Default::default()
        }
    }

    pub fn general_linear(c0: f64, n: usize, cbar: f64) -> Self {
        FamilyParams {
            family: Family::GeneralLinear,
            c0,
            n,
            cbar,
            ..Default::default()
        }
    }

    pub fn quadratic(c1: f64) -> Self {
        FamilyParams {
            family: Family::Quadratic,
            c1,
            ..Default::default()
        }
    }

    pub fn monomial(c1: f64, delta: f64) -> Self {
        FamilyParams {
            family: Family::Monomial,
            c1,
            delta,
            ..Default::default()
        }
    }

    pub fn pareto(c1: f64, x: f64) -> Self {
        FamilyParams {
            family: Family::Pareto,
            c1,
            x,
            ..Default::default()
        }
    }

    pub fn gamma(c1: f64, delta: f64, d1: f64) -> Self {
        FamilyParams {
            family: Family::Gamma,
            c1,
            delta,
            d1,
            ..Default::default()
        }
    }

    pub fn with_measure(mut self, factor: f64) -> Self {
        self.measure_factor = factor;
        self
    }

    /// Per-variable linear coefficients for the general linear family:
    /// explicit when given, otherwise the uniform cᵢ = c̄^{1/n}.
    pub fn linear_coefficients(&self) -> Vec<f64> {
        match &self.coeffs {
            Some(cs) => cs.clone(),
            None => vec![self.cbar.powf(1.0 / self.n as f64); self.n],
        }
    }
}

#[derive(Debug, Clone, Error, PartialEq)]
pub enum CatalogError {
    #[error("validity violation: {condition}")]
    Validity { condition: String },
    #[error("gamma-function pole at argument {argument}")]
    GammaPole { argument: f64 },
    #[error("log_gamma requires z > 0, got {0}")]
    LogGammaDomain(f64),
}

/// Analytic thermodynamic state of a catalog family at temperature `t`.
pub fn closed_form(params: &FamilyParams, t: f64) -> Result<ThermoState, CatalogError> {
    if t <= 0.0 || !t.is_finite() {
        return Err(CatalogError::Validity {
            condition: format!("temperature must be positive, got {t}"),
        });
    }
    let factor = params.measure_factor;
    if factor <= 0.0 {
        return Err(CatalogError::Validity {
            condition: format!("measure_factor must be positive, got {factor}"),
        });
    }
    let lf = factor.ln();

    let (q, s, mean, c, y): (f64, f64, f64, f64, Vec<f64>) = match params.family {
        Family::Constant => {
            let q = factor * (-params.c0 / t).exp();
            (q, lf, params.c0, 0.0, Vec::new())
        }
        Family::SingleLinear => {
            require_positive("c1", params.c1)?;
            let q = factor * t / params.c1;
            let s = 1.0 + (factor * t / params.c1).ln();
            (q, s, t, 1.0, vec![0.0])
        }
        Family::GeneralLinear => {
            let n = params.n as f64;
            let cbar = if let Some(cs) = &params.coeffs {
                cs.iter().product()
            } else {
                params.cbar
            };
            require_positive("cbar", cbar)?;
            let q = factor * (-params.c0 / t).exp() * t.powf(n) / cbar;
            let s = n + (factor * t.powf(n) / cbar).ln();
            (q, s, params.c0 + n * t, n, vec![0.0; params.n])
        }
        Family::Quadratic => {
            require_positive("c1", params.c1)?;
            let q = factor * (std::f64::consts::PI * t / params.c1).sqrt();
            let s = 0.5 * (1.0 + (std::f64::consts::PI * t / params.c1).ln()) + lf;
            (q, s, 0.5 * t, 0.5, vec![0.0])
        }
        Family::Monomial => {
            require_positive("c1", params.c1)?;
            if params.delta <= 0.0 {
                return Err(CatalogError::Validity {
                    condition: format!(
                        "monomial requires delta > 0 for a positive mean, got {}",
                        params.delta
                    ),
                });
            }
            let inv_d = 1.0 / params.delta;
            let q = factor * inv_d * (t / params.c1).powf(inv_d) * gamma_positive(inv_d)?;
            let s = inv_d * (1.0 + (t / params.c1).ln())
                + (factor * inv_d * gamma_positive(inv_d)?).ln();
            (q, s, t * inv_d, inv_d, vec![0.0])
        }
        Family::Pareto => {
            require_positive("c1", params.c1)?;
            require_positive("x", params.x)?;
            let alpha = pareto_alpha(params.c1, t);
            if alpha <= 0.0 {
                return Err(CatalogError::Validity {
                    condition: format!(
                        "pareto requires alpha = c1/T - 1 > 0, got alpha = {alpha} at T = {t}"
                    ),
                });
            }
            let q = factor / (alpha * params.x.powf(alpha));
            let s = params.c1 / (params.c1 - t)
                + (params.x * t / (params.c1 - t)).ln()
                + lf;
            let mean = params.c1 * t / (params.c1 - t) + params.c1 * params.x.ln();
            let c = (params.c1 / (params.c1 - t)).powi(2);
            let y = -(params.c1 - t) / params.x;
            (q, s, mean, c, vec![y])
        }
        Family::Gamma => {
            let q = gamma_partition(params, t)?;
            if q <= 0.0 {
                return Err(CatalogError::Validity {
                    condition: format!(
                        "gamma closed form requires (1 - d1/T)/delta > 0 (Q > 0), T = {t}"
                    ),
                });
            }
            // S and C by differentiating the closed-form free money; no
            // quadrature is involved, so this stays an analytic route.
            let f_of = |tt: f64| -> Result<f64, CatalogError> {
                Ok(-tt * gamma_partition(params, tt)?.ln())
            };
            let h = 1e-5 * t;
            let s = -richardson_derivative(&f_of, t, h)?;
            let f = -t * q.ln();
            let mean = f + t * s;
            let s_of = |tt: f64| -> Result<f64, CatalogError> {
                Ok(-richardson_derivative(&f_of, tt, 1e-5 * tt)?)
            };
            let c = t * richardson_derivative(&s_of, t, 1e-4 * t)?;
            (q, s, mean, c, vec![0.0])
        }
    };

    let free = -t * q.ln();
    let mut state = ThermoState::new(t, q, free, s, mean, y, c);
    state
        .residuals
        .insert("legendre".to_string(), free - (mean - t * s));
    Ok(state)
}

fn require_positive(name: &str, v: f64) -> Result<(), CatalogError> {
    if v > 0.0 && v.is_finite() {
        Ok(())
    } else {
        Err(CatalogError::Validity {
            condition: format!("{name} must be positive and finite, got {v}"),
        })
    }
}

/// Partition function of the gamma family:
/// Q = factor · (1/δ)(T/c₁)^a Γ(a) with a = (1 - d₁/T)/δ.
/// Negative non-integer arguments are continued through the reflection
/// formula; Γ poles (a ∈ {0, -1, -2, …}) are reported as errors.
pub fn gamma_partition(params: &FamilyParams, t: f64) -> Result<f64, CatalogError> {
    if t <= 0.0 || !t.is_finite() {
        return Err(CatalogError::Validity {
            condition: format!("temperature must be positive, got {t}"),
        });
    }
    require_positive("c1", params.c1)?;
    require_positive("delta", params.delta)?;
    let a = (1.0 - params.d1 / t) / params.delta;
    let gamma_a = gamma_signed(a)?;
    Ok(params.measure_factor / params.delta * (t / params.c1).powf(a) * gamma_a)
}

/// Temperatures at which the gamma-family partition function hits a Γ pole:
/// T = d₁/(1 + kδ) for k = 0..k_max. Empty when d₁ ≤ 0.
pub fn gamma_poles(d1: f64, delta: f64, k_max: usize) -> Vec<f64> {
    if d1 <= 0.0 {
        return Vec::new();
    }
    (0..=k_max).map(|k| d1 / (1.0 + k as f64 * delta)).collect()
}

/// Pareto tail exponent α = c₁/T - 1. Positivity is the caller's check.
pub fn pareto_alpha(c1: f64, t: f64) -> f64 {
    c1 / t - 1.0
}

// Lanczos approximation, g = 7, nine coefficients. Relative accuracy is
// better than 1e-13 over z > 0.
const LANCZOS_G: f64 = 7.0;
const LANCZOS: [f64; 9] = [
    0.99999999999980993,
    676.5203681218851,
    -1259.1392167224028,
    771.32342877765313,
    -176.61502916214059,
    12.507343278686905,
    -0.13857109526572012,
    9.9843695780195716e-6,
    1.5056327351493116e-7,
];

/// ln Γ(z) for z > 0.
pub fn log_gamma(z: f64) -> Result<f64, CatalogError> {
    if !(z > 0.0) || !z.is_finite() {
        return Err(CatalogError::LogGammaDomain(z));
    }
    if z < 0.5 {
        // recurrence Γ(z) = Γ(z+1)/z keeps the Lanczos argument in its
        // accurate range
        return Ok(log_gamma(z + 1.0)? - z.ln());
    }
    let z = z - 1.0;
    let mut acc = LANCZOS[0];
    for (i, c) in LANCZOS.iter().enumerate().skip(1) {
        acc += c / (z + i as f64);
    }
    let t = z + LANCZOS_G + 0.5;
    Ok(0.5 * (2.0 * std::f64::consts::PI).ln() + (z + 0.5) * t.ln() - t + acc.ln())
}

/// Γ(z) including negative non-integer arguments (reflection formula).
fn gamma_signed(z: f64) -> Result<f64, CatalogError> {
    if z > 0.0 {
        return Ok(log_gamma(z)?.exp());
    }
    let nearest = z.round();
    if (z - nearest).abs() < 1e-12 {
        return Err(CatalogError::GammaPole { argument: z });
    }
    // Γ(z)Γ(1-z) = π / sin(πz)
    let reflected = log_gamma(1.0 - z)?.exp();
    Ok(std::f64::consts::PI / ((std::f64::consts::PI * z).sin() * reflected))
}

fn gamma_positive(z: f64) -> Result<f64, CatalogError> {
    Ok(log_gamma(z)?.exp())
}

fn richardson_derivative(
    f: &dyn Fn(f64) -> Result<f64, CatalogError>,
    x: f64,
    h: f64,
) -> Result<f64, CatalogError> {
    let d = |h: f64| -> Result<f64, CatalogError> { Ok((f(x + h)? - f(x - h)?) / (2.0 * h)) };
    Ok((4.0 * d(0.5 * h)? - d(h)?) / 3.0)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::quadrature::{self, Interval, ModelSpec};
    use std::f64::consts::PI;

    fn assert_close(got: f64, want: f64, tol: f64, what: &str) {
        assert!(
            (got - want).abs() <= tol * want.abs().max(1.0),
            "{what}: got {got}, want {want}"
        );
    }

    #[test]
    fn log_gamma_reference_points() {
        assert!(log_gamma(1.0).unwrap().abs() < 1e-14);
        assert!(log_gamma(2.0).unwrap().abs() < 1e-14);
        let half = log_gamma(0.5).unwrap();
        assert!((half - PI.sqrt().ln()).abs() < 1e-13, "got {half}");
        // Γ(5) = 24
        assert!((log_gamma(5.0).unwrap() - 24f64.ln()).abs() < 1e-12);
        assert!(matches!(
            log_gamma(0.0),
            Err(CatalogError::LogGammaDomain(_))
        ));
    }

    #[test]
    fn log_gamma_matches_stirling_series_oracle() {
        // independent oracle: Stirling series with correction terms,
        // accurate far from the origin; pull small z up by recurrence
        let stirling = |z: f64| -> f64 {
            let mut z = z;
            let mut shift = 0.0;
            while z < 20.0 {
                shift -= z.ln();
                z += 1.0;
            }
            shift + 0.5 * ((2.0 * PI).ln() - z.ln()) + z * (z.ln() - 1.0) + 1.0 / (12.0 * z)
                - 1.0 / (360.0 * z.powi(3))
                + 1.0 / (1260.0 * z.powi(5))
        };
        for z in [0.1, 0.5, 1.3, 2.7, 6.0, 11.5, 40.0] {
            let got = log_gamma(z).unwrap();
            let want = stirling(z);
            assert!(
                (got - want).abs() <= 1e-12 * want.abs().max(1.0),
                "z = {z}: got {got}, oracle {want}"
            );
        }
    }

    #[test]
    fn constant_family_state() {
        let s = closed_form(&FamilyParams::constant(5.0), 2.0).unwrap();
        assert_close(s.free_money, 5.0, 1e-14, "f");
        assert_close(s.entropy, 0.0, 1e-14, "S");
        assert_close(s.mean_money, 5.0, 1e-14, "mean");
        assert_eq!(s.heat_capacity, 0.0);
    }

    #[test]
    fn single_linear_unit_state() {
        let s = closed_form(&FamilyParams::single_linear(1.0), 1.0).unwrap();
        assert_close(s.partition, 1.0, 1e-14, "Q");
        assert_close(s.free_money, 0.0, 1e-14, "f");
        assert_close(s.entropy, 1.0, 1e-14, "S");
        assert_close(s.mean_money, 1.0, 1e-14, "mean");
    }

    #[test]
    fn monomial_state() {
        let s = closed_form(&FamilyParams::monomial(1.0, 2.0), 4.0).unwrap();
        assert_close(s.mean_money, 2.0, 1e-14, "mean");
        assert_close(s.heat_capacity, 0.5, 1e-14, "C");
        assert_close(s.partition, PI.sqrt(), 1e-13, "Q");
    }

    #[test]
    fn pareto_state_alpha_one() {
        let s = closed_form(&FamilyParams::pareto(2.0, 1.0), 1.0).unwrap();
        assert_close(s.partition, 1.0, 1e-14, "Q");
        assert_close(s.entropy, 2.0, 1e-14, "S");
        assert_close(s.mean_money, 2.0, 1e-14, "mean");
        assert_close(s.heat_capacity, 4.0, 1e-14, "C");
        assert_close(s.intensive[0], -1.0, 1e-14, "y");
    }

    #[test]
    fn general_linear_state() {
        let s = closed_form(&FamilyParams::general_linear(1.0, 2, 1.0), 3.0).unwrap();
        assert_close(s.mean_money, 7.0, 1e-14, "mean");
        assert_close(s.entropy, 2.0 + 9f64.ln(), 1e-14, "S");
    }

    #[test]
    fn pareto_rejects_supercritical_temperature() {
        match closed_form(&FamilyParams::pareto(2.0, 1.0), 2.5) {
            Err(CatalogError::Validity { condition }) => {
                assert!(condition.contains("alpha"), "{condition}");
            }
            other => panic!("expected Validity, got {other:?}"),
        }
    }

    #[test]
    fn gamma_partition_reference_values() {
        // ∫₀^∞ λ e^{-λ} dλ = Γ(2) = 1
        let q = gamma_partition(&FamilyParams::gamma(1.0, 1.0, -1.0), 1.0).unwrap();
        assert_close(q, 1.0, 1e-13, "Q");
        // oracle for the same integral
        let dom = Interval {
            lower: 0.0,
            upper: f64::INFINITY,
        };
        let oracle = quadrature::integrate_1d(&|x| x * (-x).exp(), dom, 1e-11)
            .unwrap()
            .value;
        assert_close(q, oracle, 1e-9, "Q vs oracle");

        // d1 = 0 reduces exactly to the monomial closed form
        let q = gamma_partition(&FamilyParams::gamma(1.0, 2.0, 0.0), 4.0).unwrap();
        assert_close(q, PI.sqrt(), 1e-13, "Q monomial limit");
    }

    #[test]
    fn gamma_partition_pole_is_an_error() {
        // c1 = 1, delta = 1, d1 = 1, T = 1: argument (1 - 1)/1 = 0
        match gamma_partition(&FamilyParams::gamma(1.0, 1.0, 1.0), 1.0) {
            Err(CatalogError::GammaPole { argument }) => assert!(argument.abs() < 1e-12),
            other => panic!("expected GammaPole, got {other:?}"),
        }
    }

    #[test]
    fn gamma_pole_temperatures() {
        let poles = gamma_poles(1.0, 1.0, 3);
        assert_eq!(poles, vec![1.0, 0.5, 1.0 / 3.0, 0.25]);
        let poles = gamma_poles(2.0, 0.5, 2);
        assert_eq!(poles, vec![2.0, 4.0 / 3.0, 1.0]);
        assert!(gamma_poles(-1.0, 1.0, 5).is_empty());
        // strictly decreasing
        let p = gamma_poles(3.0, 0.7, 6);
        assert!(p.windows(2).all(|w| w[1] < w[0]));
    }

    #[test]
    fn pareto_alpha_values() {
        assert_eq!(pareto_alpha(2.0, 1.0), 1.0);
        assert_eq!(pareto_alpha(1.0, 1.0), 0.0);
        assert_eq!(pareto_alpha(3.0, 2.0), 0.5);
    }

    #[test]
    fn legendre_identity_exact_in_closed_forms() {
        let cases: Vec<(FamilyParams, f64)> = vec![
            (FamilyParams::constant(5.0), 2.0),
            (FamilyParams::single_linear(1.3), 0.7),
            (FamilyParams::general_linear(1.0, 3, 2.0), 1.9),
            (FamilyParams::quadratic(0.8), 3.1),
            (FamilyParams::monomial(1.2, 2.5), 2.2),
            (FamilyParams::pareto(2.0, 1.5), 1.1),
        ];
        for (p, t) in cases {
            let s = closed_form(&p, t).unwrap();
            let resid = s.free_money - (s.mean_money - t * s.entropy);
            assert!(
                resid.abs() <= 1e-12 * s.free_money.abs().max(1.0),
                "{:?}: residual {resid}",
                p.family
            );
        }
    }

    #[test]
    fn closed_form_q_matches_quadrature_over_random_params() {
        // fixed-seed pseudo-random sweep across every family
        let mut state = 0x9e3779b97f4a7c15u64;
        let mut next = move || {
            state ^= state << 13;
            state ^= state >> 7;
            state ^= state << 17;
            (state >> 11) as f64 / (1u64 << 53) as f64
        };
        for trial in 0..50 {
            let family = Family::ALL[trial % Family::ALL.len()];
            let t = 0.5 + 2.0 * next();
            let params = match family {
                Family::Constant => FamilyParams::constant(0.5 + 4.0 * next()),
                Family::SingleLinear => FamilyParams::single_linear(0.5 + 2.0 * next()),
                Family::GeneralLinear => {
                    FamilyParams::general_linear(next(), 1 + trial % 3, 0.5 + next())
                }
                Family::Quadratic => FamilyParams::quadratic(0.5 + 2.0 * next()),
                Family::Monomial => FamilyParams::monomial(0.5 + 2.0 * next(), 0.5 + 2.0 * next()),
                Family::Pareto => FamilyParams::pareto(2.0 * t + next(), 0.5 + next()),
                Family::Gamma => {
                    FamilyParams::gamma(0.5 + next(), 0.5 + 1.5 * next(), -next() * 0.5)
                }
            };
            let closed = closed_form(&params, t).unwrap();
            let model = ModelSpec::family(params.clone());
            let numeric = quadrature::partition_function(&model, t).unwrap();
            assert!(
                ((closed.partition - numeric) / numeric).abs() < 1e-8,
                "{:?} at T = {t}: closed {}, numeric {numeric}",
                params.family,
                closed.partition
            );
        }
    }

    #[test]
    fn entropy_monotone_in_temperature() {
        for (p, inv_delta) in [
            (FamilyParams::single_linear(1.0), 1.0),
            (FamilyParams::monomial(1.0, 2.0), 0.5),
        ] {
            let (t1, t2) = (0.8, 2.4);
            let s1 = closed_form(&p, t1).unwrap().entropy;
            let s2 = closed_form(&p, t2).unwrap().entropy;
            let expected = inv_delta * (t2 / t1).ln();
            assert!(s2 > s1);
            assert!(((s2 - s1) - expected).abs() < 1e-12);
        }
    }

    #[test]
    fn pareto_mean_diverges_toward_critical_coupling() {
        // ⟨m⟩ grows without bound as c1 ↓ T with x, T fixed
        let (t, x) = (1.0, 1.0);
        let mut last = 0.0;
        for eps in [0.5, 0.25, 0.1, 0.05, 0.01] {
            let mean = closed_form(&FamilyParams::pareto(t + eps, x), t)
                .unwrap()
                .mean_money;
            assert!(mean > last, "mean {mean} not increasing at eps {eps}");
            last = mean;
        }
        assert!(last > 100.0);
    }
}
