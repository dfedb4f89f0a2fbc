//! Loss-spec strings for CLI flags.
//!
//! Grammar: `kind[:key=value,...]`, e.g. `square`, `huber:delta=0.8`,
//! `robos:a=1.5,lambda=0.3,eps=0.01`. `mse` and `mae` are accepted as
//! aliases for `square` and `absolute`. The special list value `all`
//! expands to the five losses with default parameters.

use robos::LossSpec;

use crate::UsageError;

pub const DEFAULT_HUBER_DELTA: f64 = 1.0;
pub const DEFAULT_ROBOS_A: f64 = 1.0;
pub const DEFAULT_ROBOS_LAMBDA: f64 = 0.25;
pub const DEFAULT_ROBOS_EPS: f64 = 0.02;

pub fn default_losses() -> Vec<LossSpec> {
    vec![
        LossSpec::Absolute,
        LossSpec::Square,
        LossSpec::huber(DEFAULT_HUBER_DELTA),
        LossSpec::LogCosh,
        LossSpec::robos(DEFAULT_ROBOS_A, DEFAULT_ROBOS_LAMBDA, DEFAULT_ROBOS_EPS),
    ]
}

pub fn parse_loss(text: &str) -> Result<LossSpec, UsageError> {
    let (kind, rest) = match text.split_once(':') {
        Some((k, r)) => (k, Some(r)),
        None => (text, None),
    };
    let kind = kind.trim().to_ascii_lowercase();
    let params = parse_params(rest)?;
    let get = |key: &str, default: f64| -> Result<f64, UsageError> {
        for (k, v) in &params {
            if k == key {
                return Ok(*v);
            }
        }
        Ok(default)
    };
    let allow = |allowed: &[&str]| -> Result<(), UsageError> {
        for (k, _) in &params {
            if !allowed.contains(&k.as_str()) {
                return Err(UsageError(format!(
                    "unknown parameter {k:?} for loss {kind:?} (allowed: {allowed:?})"
                )));
            }
        }
        Ok(())
    };

    let spec = match kind.as_str() {
        "square" | "mse" => {
            allow(&[])?;
            LossSpec::Square
        }
        "absolute" | "mae" => {
            allow(&[])?;
            LossSpec::Absolute
        }
        "logcosh" | "log-cosh" | "log_cosh" => {
            allow(&[])?;
            LossSpec::LogCosh
        }
        "huber" => {
            allow(&["delta"])?;
            LossSpec::huber(get("delta", DEFAULT_HUBER_DELTA)?)
        }
        "robos" => {
            allow(&["a", "lambda", "eps"])?;
            LossSpec::robos(
                get("a", DEFAULT_ROBOS_A)?,
                get("lambda", DEFAULT_ROBOS_LAMBDA)?,
                get("eps", DEFAULT_ROBOS_EPS)?,
            )
        }
        other => {
            return Err(UsageError(format!(
                "unknown loss {other:?}; expected square|absolute|huber|logcosh|robos"
            )))
        }
    };
    spec.validate()
        .map_err(|e| UsageError(format!("invalid loss {text:?}: {e}")))?;
    Ok(spec)
}

/// Expands a `--losses` list: either `all` or comma-free repeated specs.
pub fn parse_loss_list(items: &[String]) -> Result<Vec<LossSpec>, UsageError> {
    if items.is_empty() || (items.len() == 1 && items[0].trim().eq_ignore_ascii_case("all")) {
        return Ok(default_losses());
    }
    items.iter().map(|s| parse_loss(s)).collect()
}

fn parse_params(rest: Option<&str>) -> Result<Vec<(String, f64)>, UsageError> {
    let Some(rest) = rest else {
        return Ok(Vec::new());
    };
    let mut out = Vec::new();
    for piece in rest.split(',').filter(|p| !p.trim().is_empty()) {
        let (k, v) = piece
            .split_once('=')
            .ok_or_else(|| UsageError(format!("expected key=value, got {piece:?}")))?;
        let value: f64 = v
            .trim()
            .parse()
            .map_err(|_| UsageError(format!("cannot parse {v:?} as a number in {piece:?}")))?;
        out.push((k.trim().to_ascii_lowercase(), value));
    }
    Ok(out)
}

/// Short label for table headers and reports.
pub fn label(spec: &LossSpec) -> String {
    spec.kind_name().to_string()
}

/// File-name-safe label including parameters where they matter.
pub fn file_label(spec: &LossSpec) -> String {
    match *spec {
        LossSpec::Square | LossSpec::Absolute | LossSpec::LogCosh => {
            spec.kind_name().to_string()
        }
        LossSpec::Huber { delta } => format!("huber_delta{delta}"),
        LossSpec::Robos { a, lambda, eps } => format!("robos_a{a}_lam{lambda}_eps{eps}"),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_kinds_and_aliases() {
        assert_eq!(parse_loss("square").unwrap(), LossSpec::Square);
        assert_eq!(parse_loss("MSE").unwrap(), LossSpec::Square);
        assert_eq!(parse_loss("mae").unwrap(), LossSpec::Absolute);
        assert_eq!(parse_loss("logcosh").unwrap(), LossSpec::LogCosh);
        assert_eq!(parse_loss("huber").unwrap(), LossSpec::huber(1.0));
        assert_eq!(parse_loss("huber:delta=0.5").unwrap(), LossSpec::huber(0.5));
        assert_eq!(
            parse_loss("robos:a=2,lambda=0.7,eps=0.005").unwrap(),
            LossSpec::robos(2.0, 0.7, 0.005)
        );
        // Omitted robos params fall back to defaults.
        assert_eq!(
            parse_loss("robos:a=3").unwrap(),
            LossSpec::robos(3.0, DEFAULT_ROBOS_LAMBDA, DEFAULT_ROBOS_EPS)
        );
    }

    #[test]
    fn rejects_bad_specs() {
        assert!(parse_loss("nope").is_err());
        assert!(parse_loss("huber:delta=-1").is_err());
        assert!(parse_loss("huber:gamma=1").is_err());
        assert!(parse_loss("robos:a=zero").is_err());
        assert!(parse_loss("square:delta=1").is_err());
    }

    #[test]
    fn all_expands_to_five_losses() {
        let all = parse_loss_list(&["all".to_string()]).unwrap();
        assert_eq!(all.len(), 5);
        let kinds: Vec<&str> = all.iter().map(|l| l.kind_name()).collect();
        assert_eq!(kinds, ["absolute", "square", "huber", "logcosh", "robos"]);
        assert_eq!(parse_loss_list(&[]).unwrap().len(), 5);
    }

    #[test]
    fn labels_are_file_safe() {
        let spec = LossSpec::robos(1.0, 0.25, 0.02);
        assert_eq!(file_label(&spec), "robos_a1_lam0.25_eps0.02");
        assert_eq!(label(&spec), "robos");
    }
}
