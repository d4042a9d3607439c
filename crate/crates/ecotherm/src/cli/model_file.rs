//! JSON model files.
//!
//! A model file declares either a catalog `family` or an `expression`, the
//! integration `domain` per variable (numbers or the sentinels `"inf"` /
//! `"-inf"`), a `constants` map, an optional `measure_factor`, and optional
//! `macro_params`. Example:
//!
//! ```json
//! {
//!   "family": "monomial",
//!   "n_vars": 1,
//!   "domain": [["0", "inf"]],
//!   "constants": { "c1": 1, "delta": 2 }
//! }
//! ```
//!
//! Validation reports every violation at once, not just the first.

use std::collections::BTreeMap;
use std::path::Path;

use serde::Deserialize;

use crate::catalog::{Family, FamilyParams};
use crate::expr;
use crate::quadrature::{Interval, MacroParam, ModelSpec};

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawModelFile {
    family: Option<String>,
    expression: Option<String>,
    n_vars: Option<usize>,
    domain: Option<Vec<(RawBound, RawBound)>>,
    constants: Option<BTreeMap<String, f64>>,
    measure_factor: Option<f64>,
    macro_params: Option<Vec<RawMacroParam>>,
}

#[derive(Debug, Deserialize)]
#[serde(untagged)]
enum RawBound {
    Number(f64),
    Text(String),
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawMacroParam {
    kind: String,
    var: usize,
}

#[derive(Debug)]
pub struct ModelFileError(pub Vec<String>);

impl std::fmt::Display for ModelFileError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        writeln!(f, "invalid model file:")?;
        for e in &self.0 {
            writeln!(f, "  - {e}")?;
        }
        Ok(())
    }
}

impl std::error::Error for ModelFileError {}

pub fn load_model(path: &Path) -> Result<ModelSpec, ModelFileError> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| ModelFileError(vec![format!("cannot read {}: {e}", path.display())]))?;
    parse_model(&text)
}

pub fn parse_model(text: &str) -> Result<ModelSpec, ModelFileError> {
    let raw: RawModelFile = serde_json::from_str(text)
        .map_err(|e| ModelFileError(vec![format!("JSON parse error: {e}")]))?;
    let mut errors = Vec::new();

    let constants = raw.constants.clone().unwrap_or_default();
    let measure_factor = raw.measure_factor.unwrap_or(1.0);
    if !(measure_factor > 0.0) {
        errors.push(format!(
            "measure_factor must be positive, got {measure_factor}"
        ));
    }

    let family = match (&raw.family, &raw.expression) {
        (Some(_), Some(_)) => {
            errors.push("exactly one of `family` and `expression` must be present, found both".into());
            None
        }
        (None, None) => {
            errors.push("exactly one of `family` and `expression` must be present, found neither".into());
            None
        }
        (Some(tag), None) => match Family::from_tag(tag) {
            Some(f) => Some(f),
            None => {
                errors.push(format!(
                    "unknown family `{tag}` (expected one of: {})",
                    Family::ALL.map(|f| f.tag()).join(", ")
                ));
                None
            }
        },
        (None, Some(_)) => None,
    };

    // figure out the variable count before validating the domain list
    let n_vars = raw.n_vars.unwrap_or_else(|| match family {
        Some(Family::GeneralLinear) => raw.domain.as_ref().map(|d| d.len()).unwrap_or(1),
        _ => raw.domain.as_ref().map(|d| d.len()).unwrap_or(1),
    });
    if n_vars == 0 {
        errors.push("n_vars must be at least 1".into());
    }

    let domains = match &raw.domain {
        None => None,
        Some(list) => {
            if list.len() != n_vars.max(1) {
                errors.push(format!(
                    "domain lists {} intervals but n_vars = {n_vars}",
                    list.len()
                ));
            }
            let mut parsed = Vec::new();
            for (i, (lo, hi)) in list.iter().enumerate() {
                let lo = parse_bound(lo, &mut errors, i, "lower");
                let hi = parse_bound(hi, &mut errors, i, "upper");
                if let (Some(lo), Some(hi)) = (lo, hi) {
                    match Interval::new(lo, hi) {
                        Ok(iv) => parsed.push(iv),
                        Err(e) => errors.push(format!("domain {}: {e}", i + 1)),
                    }
                }
            }
            if parsed.len() == list.len() {
                Some(parsed)
            } else {
                None
            }
        }
    };

    let mut macro_params = Vec::new();
    if let Some(raw_params) = &raw.macro_params {
        for p in raw_params {
            if p.var == 0 || p.var > n_vars.max(1) {
                errors.push(format!(
                    "macro_params: variable {} out of range 1..{n_vars}",
                    p.var
                ));
                continue;
            }
            match p.kind.as_str() {
                "lower_bound" => macro_params.push(MacroParam::LowerBound { var: p.var }),
                "length" => macro_params.push(MacroParam::Length { var: p.var }),
                other => errors.push(format!(
                    "macro_params: unknown kind `{other}` (expected lower_bound or length)"
                )),
            }
        }
    }

    let spec = if let Some(expression) = &raw.expression {
        build_expr_model(
            expression,
            n_vars,
            domains,
            constants,
            measure_factor,
            &mut errors,
        )
    } else {
        family.and_then(|f| {
            build_family_model(f, n_vars, domains, &constants, measure_factor, &mut errors)
        })
    };

    match spec {
        Some(mut spec) if errors.is_empty() => {
            if !macro_params.is_empty() {
                spec.macro_params = macro_params;
            }
            Ok(spec)
        }
        _ => {
            if errors.is_empty() {
                errors.push("model could not be constructed".into());
            }
            Err(ModelFileError(errors))
        }
    }
}

fn parse_bound(raw: &RawBound, errors: &mut Vec<String>, idx: usize, side: &str) -> Option<f64> {
    match raw {
        RawBound::Number(v) => Some(*v),
        RawBound::Text(s) => match s.as_str() {
            "inf" | "+inf" => Some(f64::INFINITY),
            "-inf" => Some(f64::NEG_INFINITY),
            other => match other.parse::<f64>() {
                Ok(v) => Some(v),
                Err(_) => {
                    errors.push(format!(
                        "domain {}: malformed {side} bound `{other}`",
                        idx + 1
                    ));
                    None
                }
            },
        },
    }
}

fn build_expr_model(
    expression: &str,
    n_vars: usize,
    domains: Option<Vec<Interval>>,
    constants: BTreeMap<String, f64>,
    measure_factor: f64,
    errors: &mut Vec<String>,
) -> Option<ModelSpec> {
    let parsed = match expr::parse_money_fn(expression, n_vars) {
        Ok(e) => e,
        Err(e) => {
            errors.push(format!("expression: {e}"));
            return None;
        }
    };
    let domains = match domains {
        Some(d) => d,
        None => {
            errors.push("expression models require an explicit `domain`".into());
            return None;
        }
    };
    match ModelSpec::from_expr(parsed, domains, constants, measure_factor) {
        Ok(spec) => Some(spec),
        Err(e) => {
            errors.push(e.to_string());
            None
        }
    }
}

fn build_family_model(
    family: Family,
    n_vars: usize,
    domains: Option<Vec<Interval>>,
    constants: &BTreeMap<String, f64>,
    measure_factor: f64,
    errors: &mut Vec<String>,
) -> Option<ModelSpec> {
    let get = |key: &str| constants.get(key).copied();
    let require = |key: &str, errors: &mut Vec<String>| -> f64 {
        match get(key) {
            Some(v) => v,
            None => {
                errors.push(format!(
                    "family `{}` requires constant `{key}`",
                    family.tag()
                ));
                f64::NAN
            }
        }
    };

    let mut params = match family {
        Family::Constant => FamilyParams::constant(require("c0", errors)),
        Family::SingleLinear => FamilyParams::single_linear(require("c1", errors)),
        Family::GeneralLinear => {
            let c0 = get("c0").unwrap_or(0.0);
            // either c1..cn explicitly or the product cbar
            let explicit: Option<Vec<f64>> = (1..=n_vars)
                .map(|i| get(&format!("c{i}")))
                .collect();
            let mut p = match explicit {
                Some(cs) => {
                    let mut p = FamilyParams::general_linear(c0, n_vars, cs.iter().product());
                    p.coeffs = Some(cs);
                    p
                }
                None => match get("cbar") {
                    Some(cbar) => FamilyParams::general_linear(c0, n_vars, cbar),
                    None => {
                        errors.push(
                            "general_linear requires either constants c1..cn or `cbar`".into(),
                        );
                        FamilyParams::general_linear(c0, n_vars, 1.0)
                    }
                },
            };
            p.n = n_vars;
            p
        }
        Family::Quadratic => FamilyParams::quadratic(require("c1", errors)),
        Family::Monomial => FamilyParams::monomial(require("c1", errors), require("delta", errors)),
        Family::Pareto => {
            let c1 = require("c1", errors);
            let x = match (get("x"), &domains) {
                (_, Some(d)) if !d.is_empty() => d[0].lower,
                (Some(x), _) => x,
                (None, _) => {
                    errors.push(
                        "pareto requires the lower bound: constant `x` or an explicit domain".into(),
                    );
                    f64::NAN
                }
            };
            FamilyParams::pareto(c1, x)
        }
        Family::Gamma => FamilyParams::gamma(
            require("c1", errors),
            require("delta", errors),
            require("d1", errors),
        ),
    };
    params.measure_factor = measure_factor;

    if !errors.is_empty() {
        return None;
    }
    let spec = match domains {
        Some(d) => ModelSpec::family_with_domains(params, d),
        None => ModelSpec::family(params),
    };
    if spec.domains.len() != n_vars {
        errors.push(format!(
            "family `{}` uses {} variables but n_vars = {n_vars}",
            family.tag(),
            spec.domains.len()
        ));
        return None;
    }
    Some(spec)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::quadrature::MoneyFn;

    #[test]
    fn loads_monomial_family() {
        let spec = parse_model(
            r#"{"family":"monomial","n_vars":1,"domain":[["0","inf"]],
                "constants":{"c1":1,"delta":2}}"#,
        )
        .unwrap();
        let p = spec.family_params().unwrap();
        assert_eq!(p.family, Family::Monomial);
        assert_eq!(p.delta, 2.0);
        assert!(spec.domains[0].upper.is_infinite());
    }

    #[test]
    fn loads_pareto_equivalent_expression() {
        let spec = parse_model(
            r#"{"expression":"c1*ln(l1)","n_vars":1,"domain":[["1","inf"]],
                "constants":{"c1":2}}"#,
        )
        .unwrap();
        assert!(matches!(spec.money, MoneyFn::Expr { .. }));
        assert_eq!(spec.domains[0].lower, 1.0);
    }

    #[test]
    fn missing_domain_is_named() {
        let err = parse_model(r#"{"expression":"c1*l1","n_vars":1,"constants":{"c1":1}}"#)
            .unwrap_err();
        assert!(err.0.iter().any(|e| e.contains("domain")), "{err}");
    }

    #[test]
    fn all_errors_reported_at_once() {
        let err = parse_model(
            r#"{"family":"monomial","n_vars":1,"domain":[["0","inf"]],
                "constants":{},"measure_factor":-1}"#,
        )
        .unwrap_err();
        assert!(err.0.len() >= 3, "{err}"); // c1, delta, measure_factor
    }

    #[test]
    fn rejects_both_family_and_expression() {
        let err = parse_model(
            r#"{"family":"monomial","expression":"l1","n_vars":1,
                "domain":[["0","inf"]],"constants":{"c1":1,"delta":2}}"#,
        )
        .unwrap_err();
        assert!(err.0.iter().any(|e| e.contains("exactly one")), "{err}");
    }

    #[test]
    fn pareto_lower_bound_from_domain() {
        let spec = parse_model(
            r#"{"family":"pareto","n_vars":1,"domain":[["2","inf"]],
                "constants":{"c1":3}}"#,
        )
        .unwrap();
        assert_eq!(spec.family_params().unwrap().x, 2.0);
        // declared automatically as a macro-parameter
        assert_eq!(spec.macro_params, vec![MacroParam::LowerBound { var: 1 }]);
    }

    #[test]
    fn general_linear_with_explicit_coefficients() {
        let spec = parse_model(
            r#"{"family":"general_linear","n_vars":2,
                "domain":[["0","inf"],["0","inf"]],
                "constants":{"c0":1,"c1":2,"c2":3}}"#,
        )
        .unwrap();
        let p = spec.family_params().unwrap();
        assert_eq!(p.coeffs, Some(vec![2.0, 3.0]));
        assert_eq!(p.cbar, 6.0);
    }
}
