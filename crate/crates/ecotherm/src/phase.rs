//! Temperature scans for phase-transition candidates: heat-capacity
//! divergences, entropy jumps, validity boundaries, and the predicted
//! Γ-function poles of the gamma family.
//!
//! Scans never abort on a bad grid point; per-point failures are data.
//! First/second-order labels are candidates only, flagged by threshold
//! heuristics at scan resolution.

use serde::Serialize;

use crate::catalog::{self, Family};
use crate::quadrature::ModelSpec;
use crate::thermo::{self, ThermoOpts, ThermoState};

/// Default |C| threshold for flagging a second-order candidate.
pub const DEFAULT_C_THRESHOLD: f64 = 100.0;
/// Default multiple of the typical |ΔS| for flagging a first-order candidate.
pub const DEFAULT_S_JUMP_FACTOR: f64 = 10.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum EventKind {
    CDivergence,
    SJump,
    ValidityBoundary,
    GammaPolePredicted,
}

#[derive(Debug, Clone, Serialize)]
pub struct PhaseEvent {
    pub t_loc: f64,
    pub kind: EventKind,
    pub magnitude: f64,
}

/// One grid point: a full state or the reason it could not be evaluated.
#[derive(Debug, Clone)]
pub struct GridPoint {
    pub temperature: f64,
    pub state: Result<ThermoState, String>,
}

#[derive(Debug, Clone)]
pub struct PhaseScanReport {
    pub grid: Vec<GridPoint>,
    pub events: Vec<PhaseEvent>,
    /// Γ-pole temperatures predicted for the scanned model (gamma family
    /// only), regardless of whether they fall inside the scan range.
    pub predicted_poles: Vec<f64>,
}

impl PhaseScanReport {
    pub fn t_min(&self) -> f64 {
        self.grid.first().map(|g| g.temperature).unwrap_or(f64::NAN)
    }

    pub fn t_max(&self) -> f64 {
        self.grid.last().map(|g| g.temperature).unwrap_or(f64::NAN)
    }
}

/// Critical temperature of the Pareto family: T_c = c₁.
pub fn pareto_critical(c1: f64) -> f64 {
    c1
}

/// Evaluate the model on a uniform temperature grid. Near-pole points of the
/// Pareto and gamma families are computed with the validity override and
/// recorded; points that fail outright are kept as failure markers.
pub fn scan_temperature(
    model: &ModelSpec,
    t_min: f64,
    t_max: f64,
    steps: usize,
) -> Result<PhaseScanReport, String> {
    if !(t_min > 0.0) || !(t_min < t_max) {
        return Err(format!(
            "scan requires 0 < t_min < t_max, got [{t_min}, {t_max}]"
        ));
    }
    if steps < 2 {
        return Err(format!("scan requires at least 2 steps, got {steps}"));
    }
    let opts = ThermoOpts {
        allow_near_critical: true,
        ..Default::default()
    };
    let mut grid = Vec::with_capacity(steps);
    for i in 0..steps {
        let t = t_min + (t_max - t_min) * i as f64 / (steps - 1) as f64;
        let state = thermo::thermo_state(model, t, &opts).map_err(|e| e.to_string());
        grid.push(GridPoint {
            temperature: t,
            state,
        });
    }

    let predicted_poles = match model.family_params() {
        Some(p) if p.family == Family::Gamma && p.d1 > 0.0 => {
            // enough pole orders to cover everything down to t_min
            let k_max = ((p.d1 / t_min - 1.0) / p.delta).ceil().max(0.0) as usize;
            catalog::gamma_poles(p.d1, p.delta, k_max)
        }
        _ => Vec::new(),
    };

    let mut report = PhaseScanReport {
        grid,
        events: Vec::new(),
        predicted_poles,
    };
    report.events = detect_events(&report, DEFAULT_C_THRESHOLD, DEFAULT_S_JUMP_FACTOR);
    Ok(report)
}

/// Flag threshold crossings in an existing scan. Consecutive above-threshold
/// heat capacities collapse into a single event located at the largest |C|.
pub fn detect_events(
    report: &PhaseScanReport,
    c_threshold: f64,
    s_jump_factor: f64,
) -> Vec<PhaseEvent> {
    let mut events = Vec::new();

    // heat-capacity divergence candidates
    let mut run: Option<(f64, f64)> = None; // (t at max |C|, max |C|)
    for point in &report.grid {
        let c = point
            .state
            .as_ref()
            .ok()
            .map(|s| s.heat_capacity.abs())
            .unwrap_or(0.0);
        if c >= c_threshold {
            run = Some(match run {
                Some((t_best, c_best)) if c_best >= c => (t_best, c_best),
                _ => (point.temperature, c),
            });
        } else if let Some((t_loc, magnitude)) = run.take() {
            events.push(PhaseEvent {
                t_loc,
                kind: EventKind::CDivergence,
                magnitude,
            });
        }
    }
    if let Some((t_loc, magnitude)) = run {
        events.push(PhaseEvent {
            t_loc,
            kind: EventKind::CDivergence,
            magnitude,
        });
    }

    // entropy jumps between adjacent valid points, judged against the
    // neighboring increments so smooth-but-steep regions (e.g. ln T at small
    // T) are not flagged: a genuine jump dwarfs both its neighbors
    let mut jumps: Vec<(f64, f64)> = Vec::new();
    for pair in report.grid.windows(2) {
        if let (Ok(a), Ok(b)) = (&pair[0].state, &pair[1].state) {
            jumps.push((
                0.5 * (pair[0].temperature + pair[1].temperature),
                (b.entropy - a.entropy).abs(),
            ));
        }
    }
    if jumps.len() >= 3 {
        for i in 0..jumps.len() {
            let (t_loc, ds) = jumps[i];
            let local = match i {
                0 => jumps[1].1,
                i if i == jumps.len() - 1 => jumps[i - 1].1,
                i => f64::max(jumps[i - 1].1, jumps[i + 1].1),
            };
            if ds >= s_jump_factor * local && ds > 1e-9 {
                events.push(PhaseEvent {
                    t_loc,
                    kind: EventKind::SJump,
                    magnitude: ds,
                });
            }
        }
    }

    // transitions between valid and invalid regions
    for pair in report.grid.windows(2) {
        let boundary = pair[0].state.is_ok() != pair[1].state.is_ok();
        if boundary {
            let t_loc = if pair[0].state.is_ok() {
                pair[1].temperature
            } else {
                pair[0].temperature
            };
            events.push(PhaseEvent {
                t_loc,
                kind: EventKind::ValidityBoundary,
                magnitude: 0.0,
            });
        }
    }

    // predicted gamma poles strictly inside the scan range; a pole sitting
    // exactly on an endpoint belongs to the neighboring range
    let (t_min, t_max) = (report.t_min(), report.t_max());
    for &pole in &report.predicted_poles {
        if pole > t_min && pole < t_max {
            events.push(PhaseEvent {
                t_loc: pole,
                kind: EventKind::GammaPolePredicted,
                magnitude: 0.0,
            });
        }
    }

    events.sort_by(|a, b| a.t_loc.total_cmp(&b.t_loc));
    events
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::catalog::FamilyParams;

    #[test]
    fn rejects_bad_grids() {
        let m = ModelSpec::family(FamilyParams::monomial(1.0, 2.0));
        assert!(scan_temperature(&m, 0.0, 1.0, 10).is_err());
        assert!(scan_temperature(&m, 2.0, 1.0, 10).is_err());
        assert!(scan_temperature(&m, 0.5, 1.0, 1).is_err());
    }

    #[test]
    fn pareto_scan_flags_c_divergence() {
        let m = ModelSpec::family(FamilyParams::pareto(2.0, 1.0));
        let report = scan_temperature(&m, 0.5, 1.9, 50).unwrap();
        // C = (c1/(c1-T))² rises monotonically toward the boundary
        let cs: Vec<f64> = report
            .grid
            .iter()
            .filter_map(|g| g.state.as_ref().ok().map(|s| s.heat_capacity))
            .collect();
        assert!(cs.windows(2).all(|w| w[1] > w[0]), "C not monotone");
        for point in &report.grid {
            if point.temperature >= 1.8 {
                let c = point.state.as_ref().unwrap().heat_capacity;
                assert!(c >= 100.0, "C = {c} at T = {}", point.temperature);
            }
        }
        let divergences: Vec<_> = report
            .events
            .iter()
            .filter(|e| e.kind == EventKind::CDivergence)
            .collect();
        assert_eq!(divergences.len(), 1);
        assert!(divergences[0].t_loc >= 1.8 && divergences[0].t_loc <= 1.9);
    }

    #[test]
    fn smooth_families_produce_zero_events() {
        for params in [
            FamilyParams::monomial(1.0, 2.0),
            FamilyParams::single_linear(1.0),
            FamilyParams::constant(5.0),
        ] {
            let m = ModelSpec::family(params.clone());
            let report = scan_temperature(&m, 0.1, 10.0, 40).unwrap();
            assert!(
                report.events.is_empty(),
                "{:?}: events {:?}",
                params.family,
                report.events
            );
        }
    }

    #[test]
    fn monomial_scan_has_constant_heat_capacity() {
        let m = ModelSpec::family(FamilyParams::monomial(1.0, 2.0));
        let report = scan_temperature(&m, 0.1, 10.0, 25).unwrap();
        for point in &report.grid {
            let c = point.state.as_ref().unwrap().heat_capacity;
            assert!((c - 0.5).abs() < 1e-4, "C = {c} at T = {}", point.temperature);
        }
    }

    #[test]
    fn gamma_scan_predicts_poles() {
        let m = ModelSpec::family(FamilyParams::gamma(1.0, 1.0, 1.0));
        let report = scan_temperature(&m, 0.2, 2.0, 30).unwrap();
        let predicted: Vec<f64> = report
            .events
            .iter()
            .filter(|e| e.kind == EventKind::GammaPolePredicted)
            .map(|e| e.t_loc)
            .collect();
        let expected: Vec<f64> = catalog::gamma_poles(1.0, 1.0, 4)
            .into_iter()
            .filter(|&p| p > 0.2 && p < 2.0)
            .collect();
        assert_eq!(predicted, {
            let mut e = expected;
            e.sort_by(f64::total_cmp);
            e
        });
        // {1, 1/2, 1/3, 1/4} all fall in range
        assert_eq!(predicted.len(), 4);
    }

    #[test]
    fn pareto_c_growth_exponent_is_two() {
        let c1 = 2.0;
        let m = ModelSpec::family(FamilyParams::pareto(c1, 1.0));
        let report = scan_temperature(&m, 0.5 * c1, 0.95 * c1, 30).unwrap();
        let pts: Vec<(f64, f64)> = report
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
        assert!((slope - 2.0).abs() <= 0.05, "slope {slope}");
    }

    #[test]
    fn pareto_critical_is_c1() {
        assert_eq!(pareto_critical(2.0), 2.0);
        assert_eq!(pareto_critical(1.0), 1.0);
        assert_eq!(pareto_critical(0.5), 0.5);
    }

    #[test]
    fn events_sorted_by_temperature() {
        let m = ModelSpec::family(FamilyParams::gamma(1.0, 1.0, 1.0));
        let report = scan_temperature(&m, 0.2, 2.0, 30).unwrap();
        assert!(report
            .events
            .windows(2)
            .all(|w| w[0].t_loc <= w[1].t_loc));
    }

    pub(crate) fn least_squares_slope(pts: &[(f64, f64)]) -> f64 {
        let n = pts.len() as f64;
        let sx: f64 = pts.iter().map(|p| p.0).sum();
        let sy: f64 = pts.iter().map(|p| p.1).sum();
        let sxx: f64 = pts.iter().map(|p| p.0 * p.0).sum();
        let sxy: f64 = pts.iter().map(|p| p.0 * p.1).sum();
        (n * sxy - sx * sy) / (n * sxx - sx * sx)
    }
}
