//! Deterministic report serialization: CSV for grids and histograms, JSON for
//! event lists and run metadata. Reals are printed with 17 significant digits
//! so identical inputs always produce identical bytes.

use std::fmt::Write as _;

use crate::exchange::{Ensemble, FitResult, HistBin};
use crate::phase::PhaseScanReport;
use crate::quadrature::ModelSpec;
use crate::thermo::ThermoState;

/// 17 significant digits: enough to round-trip any f64 exactly.
pub fn fmt_real(x: f64) -> String {
    format!("{x:.16e}")
}

/// CSV for a grid of thermodynamic states. Fixed column order:
/// `T,Q,f,S,mean_m,C,y_<label>...,residual_legendre`, one `y_` column per
/// macro-parameter of the model, in declaration order.
pub fn thermo_grid_csv(model: &ModelSpec, states: &[ThermoState]) -> String {
    let mut out = String::from("T,Q,f,S,mean_m,C");
    for p in &model.macro_params {
        let _ = write!(out, ",y_{}", p.label());
    }
    out.push_str(",residual_legendre\n");
    for s in states {
        let _ = write!(
            out,
            "{},{},{},{},{},{}",
            fmt_real(s.temperature),
            fmt_real(s.partition),
            fmt_real(s.free_money),
            fmt_real(s.entropy),
            fmt_real(s.mean_money),
            fmt_real(s.heat_capacity),
        );
        for y in &s.intensive {
            let _ = write!(out, ",{}", fmt_real(*y));
        }
        let _ = writeln!(out, ",{}", fmt_real(s.legendre_residual()));
    }
    out
}

/// CSV for a phase-scan grid. Same columns as the thermo grid plus a trailing
/// `error` column; failed grid points keep their temperature, leave the state
/// columns empty, and carry the failure message.
pub fn scan_grid_csv(model: &ModelSpec, report: &PhaseScanReport) -> String {
    let n_y = model.macro_params.len();
    let mut out = String::from("T,Q,f,S,mean_m,C");
    for p in &model.macro_params {
        let _ = write!(out, ",y_{}", p.label());
    }
    out.push_str(",residual_legendre,error\n");
    for point in &report.grid {
        let _ = write!(out, "{}", fmt_real(point.temperature));
        match &point.state {
            Ok(s) => {
                let _ = write!(
                    out,
                    ",{},{},{},{},{}",
                    fmt_real(s.partition),
                    fmt_real(s.free_money),
                    fmt_real(s.entropy),
                    fmt_real(s.mean_money),
                    fmt_real(s.heat_capacity),
                );
                for y in &s.intensive {
                    let _ = write!(out, ",{}", fmt_real(*y));
                }
                let _ = writeln!(out, ",{},", fmt_real(s.legendre_residual()));
            }
            Err(msg) => {
                for _ in 0..(7 + n_y) {
                    out.push(',');
                }
                // keep the CSV single-line per record
                let _ = writeln!(out, "{}", msg.replace(['\n', ','], ";"));
            }
        }
    }
    out
}

/// JSON for the detected events of a phase scan, plus predicted poles.
pub fn scan_events_json(report: &PhaseScanReport) -> String {
    let doc = serde_json::json!({
        "t_min": report.t_min(),
        "t_max": report.t_max(),
        "predicted_poles": report.predicted_poles,
        "events": report.events,
    });
    let mut text = serde_json::to_string_pretty(&doc).expect("events are serializable");
    text.push('\n');
    text
}

/// CSV for a simulation histogram: `bin_lo,bin_hi,count,density`.
pub fn histogram_csv(bins: &[HistBin]) -> String {
    let mut out = String::from("bin_lo,bin_hi,count,density\n");
    for b in bins {
        let _ = writeln!(
            out,
            "{},{},{},{}",
            fmt_real(b.bin_lo),
            fmt_real(b.bin_hi),
            b.count,
            fmt_real(b.density),
        );
    }
    out
}

/// JSON metadata describing one simulation run.
pub fn simulation_meta_json(ensemble: &Ensemble, fit: &FitResult) -> String {
    let doc = serde_json::json!({
        "seed": ensemble.seed(),
        "rng": "chacha8",
        "rule": ensemble.rule(),
        "n_agents": ensemble.len(),
        "total_money": ensemble.total(),
        "steps": ensemble.steps_done(),
        "t_hat": fit.t_hat,
        "ks_stat": fit.ks_stat,
        "tail_alpha": fit.tail_alpha,
        "conservation_drift": ensemble.conservation_drift(),
    });
    let mut text = serde_json::to_string_pretty(&doc).expect("metadata is serializable");
    text.push('\n');
    text
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::catalog::FamilyParams;
    use crate::thermo::{thermo_state, ThermoOpts};

    #[test]
    fn real_formatting_has_17_significant_digits() {
        assert_eq!(fmt_real(1.0), "1.0000000000000000e0");
        assert_eq!(fmt_real(-0.5), "-5.0000000000000000e-1");
        let x = std::f64::consts::PI * 1e-7;
        assert_eq!(fmt_real(x).parse::<f64>().unwrap(), x);
    }

    #[test]
    fn thermo_csv_shape() {
        let model = ModelSpec::family(FamilyParams::pareto(2.0, 1.0));
        let opts = ThermoOpts::default();
        let states = vec![
            thermo_state(&model, 0.5, &opts).unwrap(),
            thermo_state(&model, 1.0, &opts).unwrap(),
        ];
        let csv = thermo_grid_csv(&model, &states);
        let lines: Vec<&str> = csv.lines().collect();
        assert_eq!(lines.len(), 3);
        assert_eq!(lines[0], "T,Q,f,S,mean_m,C,y_x1,residual_legendre");
        assert_eq!(lines[1].split(',').count(), 8);
    }

    #[test]
    fn identical_inputs_identical_bytes() {
        let model = ModelSpec::family(FamilyParams::monomial(1.0, 2.0));
        let opts = ThermoOpts::default();
        let states = vec![thermo_state(&model, 1.0, &opts).unwrap()];
        let a = thermo_grid_csv(&model, &states);
        let b = thermo_grid_csv(&model, &states);
        assert_eq!(a, b);
    }

    #[test]
    fn scan_csv_records_failures_inline() {
        let model = ModelSpec::family(FamilyParams::pareto(2.0, 1.0));
        let report = crate::phase::scan_temperature(&model, 1.5, 2.5, 5).unwrap();
        let csv = scan_grid_csv(&model, &report);
        assert!(report.grid.iter().any(|g| g.state.is_err()));
        let lines: Vec<&str> = csv.lines().collect();
        assert_eq!(lines.len(), 6);
        for line in &lines[1..] {
            assert_eq!(line.split(',').count(), 9, "line: {line}");
        }
    }
}
