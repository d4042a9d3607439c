//! Cross-check suite behind `ecotherm verify`: every closed-form identity,
//! scan property, and simulation property the library promises, each as a
//! named check printing one PASS/FAIL line. Intended for CI: any failure
//! turns into exit code 2 with the failing check named.

use crate::catalog::{self, Family, FamilyParams};
use crate::exchange::{init_ensemble, ExchangeRule, InitDist};
use crate::expr;
use crate::phase::{self, EventKind};
use crate::quadrature::{Interval, MacroParam, ModelSpec};
use crate::thermo::{self, EntropyMethod, ThermoOpts};

pub struct Check {
    pub name: &'static str,
    /// Families this check exercises; empty means family-independent.
    pub families: &'static [Family],
    pub run: fn() -> Result<(), String>,
}

pub const CHECKS: &[Check] = &[
    Check {
        name: "monomial_mean_money",
        families: &[Family::Monomial],
        run: check_monomial_mean_money,
    },
    Check {
        name: "monomial_heat_capacity",
        families: &[Family::Monomial],
        run: check_monomial_heat_capacity,
    },
    Check {
        name: "single_linear_relations",
        families: &[Family::SingleLinear],
        run: check_single_linear_relations,
    },
    Check {
        name: "general_linear_three_dim",
        families: &[Family::GeneralLinear],
        run: check_general_linear_three_dim,
    },
    Check {
        name: "pareto_closed_forms",
        families: &[Family::Pareto],
        run: check_pareto_closed_forms,
    },
    Check {
        name: "gamma_limit_and_poles",
        families: &[Family::Gamma],
        run: check_gamma_limit_and_poles,
    },
    Check {
        name: "pareto_phase_scan",
        families: &[Family::Pareto],
        run: check_pareto_phase_scan,
    },
    Check {
        name: "smooth_scans_quiet",
        families: &[Family::Monomial, Family::SingleLinear, Family::Constant],
        run: check_smooth_scans_quiet,
    },
    Check {
        name: "first_law_residual",
        families: &[Family::Monomial, Family::Pareto],
        run: check_first_law_residual,
    },
    Check {
        name: "entropy_route_consistency",
        families: &Family::ALL,
        run: check_entropy_route_consistency,
    },
    Check {
        name: "kinetic_equilibrium",
        families: &[],
        run: check_kinetic_equilibrium,
    },
    Check {
        name: "multiplicative_save_non_exponential",
        families: &[],
        run: check_multiplicative_save,
    },
    Check {
        name: "expression_equivalence",
        families: &[Family::Monomial],
        run: check_expression_equivalence,
    },
];

fn fail(msg: String) -> Result<(), String> {
    Err(msg)
}

fn rel_err(a: f64, b: f64) -> f64 {
    (a - b).abs() / b.abs().max(f64::MIN_POSITIVE)
}

fn check_monomial_mean_money() -> Result<(), String> {
    let opts = ThermoOpts::default();
    for delta in [0.5, 1.0, 2.0, 3.0] {
        let model = ModelSpec::family(FamilyParams::monomial(1.0, delta));
        for t in [0.5, 1.0, 2.0, 4.0] {
            let mean = thermo::mean_money(&model, t, &opts).map_err(|e| e.to_string())?;
            let expected = t / delta;
            if rel_err(mean, expected) > 1e-6 {
                return fail(format!(
                    "delta={delta} T={t}: mean {mean} vs {expected}"
                ));
            }
        }
    }
    Ok(())
}

fn check_monomial_heat_capacity() -> Result<(), String> {
    let opts = ThermoOpts::default();
    for delta in [0.5, 1.0, 2.0, 3.0] {
        let model = ModelSpec::family(FamilyParams::monomial(1.0, delta));
        for t in [0.5, 1.0, 2.0, 4.0] {
            let c = thermo::heat_capacity(&model, t, &opts).map_err(|e| e.to_string())?;
            if (c - 1.0 / delta).abs() > 1e-4 {
                return fail(format!("delta={delta} T={t}: C {c} vs {}", 1.0 / delta));
            }
        }
    }
    Ok(())
}

fn check_single_linear_relations() -> Result<(), String> {
    let opts = ThermoOpts::default();
    let c1 = 2.0;
    let model = ModelSpec::family(FamilyParams::single_linear(c1));
    for t in [0.5, 1.0, 3.0] {
        let s = thermo::thermo_state(&model, t, &opts).map_err(|e| e.to_string())?;
        let q = t / c1;
        let checks = [
            ("Q", s.partition, q),
            ("f", s.free_money, -t * q.ln()),
            ("S", s.entropy, 1.0 + q.ln()),
            ("mean_m", s.mean_money, t),
        ];
        for (label, got, want) in checks {
            if (got - want).abs() > 1e-6 * want.abs().max(1.0) {
                return fail(format!("T={t}: {label} {got} vs {want}"));
            }
        }
        // fundamental relation S = 1 + ln(<m>/c1)
        let fundamental = 1.0 + (s.mean_money / c1).ln();
        if (s.entropy - fundamental).abs() > 1e-6 {
            return fail(format!(
                "T={t}: S {} vs fundamental relation {fundamental}",
                s.entropy
            ));
        }
    }
    Ok(())
}

fn check_general_linear_three_dim() -> Result<(), String> {
    let opts = ThermoOpts::default();
    let (c0, n, cbar) = (1.0, 3usize, 2.0);
    let model = ModelSpec::family(FamilyParams::general_linear(c0, n, cbar));
    for t in [0.5, 1.0, 2.0] {
        let mean = thermo::mean_money(&model, t, &opts).map_err(|e| e.to_string())?;
        let expected = c0 + n as f64 * t;
        if rel_err(mean, expected) > 1e-6 {
            return fail(format!("T={t}: mean {mean} vs {expected}"));
        }
        let s = thermo::entropy(&model, t, EntropyMethod::Derivative, &opts)
            .map_err(|e| e.to_string())?;
        let s_expected = n as f64 + (t.powi(n as i32) / cbar).ln();
        if (s - s_expected).abs() > 1e-6 {
            return fail(format!("T={t}: S {s} vs {s_expected}"));
        }
    }
    Ok(())
}

fn check_pareto_closed_forms() -> Result<(), String> {
    let opts = ThermoOpts::default();
    for (c1, x, t) in [(2.0, 1.0, 1.0), (3.0, 2.0, 1.0)] {
        let model = ModelSpec::family(FamilyParams::pareto(c1, x));
        let numeric = thermo::thermo_state(&model, t, &opts).map_err(|e| e.to_string())?;
        let closed = catalog::closed_form(model.family_params().unwrap(), t)
            .map_err(|e| e.to_string())?;
        let checks = [
            ("Q", numeric.partition, closed.partition),
            ("S", numeric.entropy, closed.entropy),
            ("mean_m", numeric.mean_money, closed.mean_money),
            ("y_x", numeric.intensive[0], closed.intensive[0]),
            ("C", numeric.heat_capacity, closed.heat_capacity),
        ];
        for (label, got, want) in checks {
            if (got - want).abs() > 1e-6 * want.abs().max(1.0) {
                return fail(format!("(c1={c1},x={x},T={t}): {label} {got} vs {want}"));
            }
        }
    }
    // spot values at (c1, x, T) = (2, 1, 1): C = (2/(2-1))² = 4, y_x = -(2-1)/1 = -1
    let model = ModelSpec::family(FamilyParams::pareto(2.0, 1.0));
    let s = thermo::thermo_state(&model, 1.0, &opts).map_err(|e| e.to_string())?;
    if (s.heat_capacity - 4.0).abs() > 1e-4 {
        return fail(format!("C at (2,1,1) = {}, want 4", s.heat_capacity));
    }
    if (s.intensive[0] + 1.0).abs() > 1e-6 {
        return fail(format!("y_x at (2,1,1) = {}, want -1", s.intensive[0]));
    }
    Ok(())
}

fn check_gamma_limit_and_poles() -> Result<(), String> {
    // vanishing linear term: the gamma partition function reduces to the
    // monomial one
    for (c1, delta) in [(1.0, 1.0), (2.0, 2.0), (1.0, 0.5)] {
        for t in [0.5, 1.0, 2.0] {
            let d1 = 1e-4 * t;
            let gamma = catalog::gamma_partition(&FamilyParams::gamma(c1, delta, d1), t)
                .map_err(|e| e.to_string())?;
            let monomial = catalog::closed_form(&FamilyParams::monomial(c1, delta), t)
                .map_err(|e| e.to_string())?
                .partition;
            if rel_err(gamma, monomial) > 1e-3 {
                return fail(format!(
                    "(c1={c1},delta={delta},T={t}): gamma Q {gamma} vs monomial Q {monomial}"
                ));
            }
        }
    }
    let poles = catalog::gamma_poles(1.0, 1.0, 3);
    let expected = [1.0, 0.5, 1.0 / 3.0, 0.25];
    if poles != expected {
        return fail(format!("poles {poles:?} vs {expected:?}"));
    }
    Ok(())
}

fn least_squares_slope(pts: &[(f64, f64)]) -> f64 {
    let n = pts.len() as f64;
    let sx: f64 = pts.iter().map(|p| p.0).sum();
    let sy: f64 = pts.iter().map(|p| p.1).sum();
    let sxx: f64 = pts.iter().map(|p| p.0 * p.0).sum();
    let sxy: f64 = pts.iter().map(|p| p.0 * p.1).sum();
    (n * sxy - sx * sy) / (n * sxx - sx * sx)
}

fn check_pareto_phase_scan() -> Result<(), String> {
    let c1 = 2.0;
    let model = ModelSpec::family(FamilyParams::pareto(c1, 1.0));
    let report = phase::scan_temperature(&model, 0.5, 1.9, 50).map_err(|e| e.to_string())?;
    for point in &report.grid {
        if point.temperature >= 1.8 {
            let c = point
                .state
                .as_ref()
                .map_err(|e| format!("T={}: {e}", point.temperature))?
                .heat_capacity;
            if c < 100.0 {
                return fail(format!("C = {c} at T = {}", point.temperature));
            }
        }
    }
    if !report
        .events
        .iter()
        .any(|e| e.kind == EventKind::CDivergence)
    {
        return fail("no heat-capacity divergence event flagged".into());
    }
    // growth exponent 2 from a scan on [1.0, 1.9]
    let slope_report =
        phase::scan_temperature(&model, 1.0, 1.9, 40).map_err(|e| e.to_string())?;
    let pts: Vec<(f64, f64)> = slope_report
        .grid
        .iter()
        .filter_map(|g| {
            g.state
                .as_ref()
                .ok()
                .map(|s| (-(c1 - g.temperature).ln(), s.heat_capacity.ln()))
        })
        .collect();
    let slope = least_squares_slope(&pts);
    if (slope - 2.0).abs() > 0.05 {
        return fail(format!("growth exponent {slope}, want 2 +/- 0.05"));
    }
    Ok(())
}

fn check_smooth_scans_quiet() -> Result<(), String> {
    for params in [
        FamilyParams::monomial(1.0, 2.0),
        FamilyParams::single_linear(1.0),
        FamilyParams::constant(5.0),
    ] {
        let tag = params.family.tag();
        let model = ModelSpec::family(params);
        let report = phase::scan_temperature(&model, 0.1, 10.0, 40).map_err(|e| e.to_string())?;
        if !report.events.is_empty() {
            return fail(format!("{tag}: {} spurious events", report.events.len()));
        }
    }
    Ok(())
}

fn check_first_law_residual() -> Result<(), String> {
    let opts = ThermoOpts::default();

    let monomial = ModelSpec::family(FamilyParams::monomial(1.0, 2.0));
    let r1 = thermo::first_law_residual(&monomial, 1.0, 1e-3, None, &opts)
        .map_err(|e| e.to_string())?;
    if r1.abs() > 1e-5 {
        return fail(format!("monomial dT=1e-3: residual {r1}"));
    }
    let r1_half = thermo::first_law_residual(&monomial, 1.0, 5e-4, None, &opts)
        .map_err(|e| e.to_string())?;
    if r1.abs() > 1e-12 && r1_half.abs() > r1.abs() / 3.0 {
        return fail(format!(
            "monomial halving: residual {r1} -> {r1_half}, reduction < 3x"
        ));
    }

    let pareto = ModelSpec::family(FamilyParams::pareto(2.0, 1.0));
    let dx = Some((MacroParam::LowerBound { var: 1 }, 1e-3));
    let r2 = thermo::first_law_residual(&pareto, 1.0, 0.0, dx, &opts)
        .map_err(|e| e.to_string())?;
    if r2.abs() > 1e-5 {
        return fail(format!("pareto dx=1e-3: residual {r2}"));
    }
    Ok(())
}

fn check_entropy_route_consistency() -> Result<(), String> {
    let opts = ThermoOpts::default();
    let cases: Vec<(FamilyParams, Vec<f64>)> = vec![
        (FamilyParams::constant(5.0), vec![0.5, 1.0, 2.0, 4.0]),
        (FamilyParams::single_linear(2.0), vec![0.5, 1.0, 2.0, 4.0]),
        (
            FamilyParams::general_linear(1.0, 3, 2.0),
            vec![0.5, 1.0, 2.0],
        ),
        (FamilyParams::quadratic(1.0), vec![0.5, 1.0, 2.0, 4.0]),
        (FamilyParams::monomial(1.0, 2.0), vec![0.5, 1.0, 2.0, 4.0]),
        (FamilyParams::pareto(2.0, 1.0), vec![0.5, 1.0, 1.5]),
        (FamilyParams::gamma(1.0, 1.0, 0.05), vec![0.5, 1.0, 2.0]),
    ];
    for (params, ts) in cases {
        let tag = params.family.tag();
        let model = ModelSpec::family(params);
        for t in ts {
            let s_deriv = thermo::entropy(&model, t, EntropyMethod::Derivative, &opts)
                .map_err(|e| format!("{tag} T={t}: {e}"))?;
            let s_direct = thermo::entropy(&model, t, EntropyMethod::Direct, &opts)
                .map_err(|e| format!("{tag} T={t}: {e}"))?;
            if (s_deriv - s_direct).abs() > 1e-6 {
                return fail(format!(
                    "{tag} T={t}: derivative route {s_deriv} vs direct route {s_direct}"
                ));
            }
        }
    }
    Ok(())
}

fn check_kinetic_equilibrium() -> Result<(), String> {
    let mut e = init_ensemble(
        10_000,
        10_000.0,
        ExchangeRule::UniformPair,
        42,
        InitDist::Equal,
    )
    .map_err(|e| e.to_string())?;

    let mut entropies = vec![e.empirical_entropy(100).map_err(|e| e.to_string())?];
    e.run(1_000);
    entropies.push(e.empirical_entropy(100).map_err(|e| e.to_string())?);
    e.run(999_000);
    entropies.push(e.empirical_entropy(100).map_err(|e| e.to_string())?);
    if !entropies.windows(2).all(|w| w[0] <= w[1]) {
        return fail(format!("entropy not non-decreasing: {entropies:?}"));
    }

    e.run(9_000_000); // 10^7 total
    let drift = e.conservation_drift().abs();
    if drift > 1e-9 * e.total() {
        return fail(format!("conservation drift {drift}"));
    }
    let fit = e.fit_boltzmann().map_err(|e| e.to_string())?;
    if (fit.t_hat - 1.0).abs() > 0.03 {
        return fail(format!("t_hat {} outside 1 +/- 3%", fit.t_hat));
    }
    if fit.ks_stat >= 0.02 {
        return fail(format!("KS distance {} >= 0.02", fit.ks_stat));
    }
    Ok(())
}

fn check_multiplicative_save() -> Result<(), String> {
    let mut e = init_ensemble(
        10_000,
        10_000.0,
        ExchangeRule::MultiplicativeSave { saving: 0.5 },
        42,
        InitDist::Equal,
    )
    .map_err(|e| e.to_string())?;
    e.run(5_000_000);
    let fit = e.fit_boltzmann().map_err(|e| e.to_string())?;
    if fit.ks_stat <= 0.05 {
        return fail(format!(
            "KS distance {} <= 0.05: exponential not rejected",
            fit.ks_stat
        ));
    }
    Ok(())
}

fn check_expression_equivalence() -> Result<(), String> {
    let opts = ThermoOpts::default();
    let parsed = expr::parse_money_fn("c1*l1^2", 1).map_err(|e| e.to_string())?;
    let model = ModelSpec::from_expr(
        parsed,
        vec![Interval::new(0.0, f64::INFINITY).map_err(|e| e.to_string())?],
        [("c1".to_string(), 1.0)].into_iter().collect(),
        1.0,
    )
    .map_err(|e| e.to_string())?;
    let reference = ModelSpec::family(FamilyParams::monomial(1.0, 2.0));
    for t in [1.0, 4.0] {
        let a = thermo::thermo_state(&model, t, &opts).map_err(|e| e.to_string())?;
        let b = thermo::thermo_state(&reference, t, &opts).map_err(|e| e.to_string())?;
        let checks = [
            ("Q", a.partition, b.partition),
            ("f", a.free_money, b.free_money),
            ("S", a.entropy, b.entropy),
            ("mean_m", a.mean_money, b.mean_money),
            ("C", a.heat_capacity, b.heat_capacity),
        ];
        for (label, got, want) in checks {
            if (got - want).abs() > 1e-8 * want.abs().max(1.0) {
                return fail(format!("T={t}: {label} {got} vs {want}"));
            }
        }
    }
    Ok(())
}

/// Run the selected checks, printing one line per check. Returns the names of
/// the failing checks.
pub fn run_suite(family_filter: Option<Family>, out: &mut dyn std::io::Write) -> Vec<String> {
    let mut failures = Vec::new();
    for check in CHECKS {
        let selected = match family_filter {
            None => true,
            Some(f) => check.families.contains(&f),
        };
        if !selected {
            continue;
        }
        match (check.run)() {
            Ok(()) => {
                let _ = writeln!(out, "PASS {}", check.name);
            }
            Err(msg) => {
                let _ = writeln!(out, "FAIL {}: {msg}", check.name);
                failures.push(check.name.to_string());
            }
        }
    }
    failures
}
