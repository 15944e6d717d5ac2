//! Run configuration: a flat set of `key = value` settings layered from
//! built-in defaults, a config file and command-line overrides.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use super::units::{format_number, format_quantity, parse_quantity, Dimension};
use super::CliError;
use crate::analytic::landau_zener_constant;
use crate::experiments::{self, Engines, NumericSettings, SweepConfig};
use crate::field::{FieldMode, FieldModel};
use crate::propagator::{self, Basis};
use crate::spin::{Projection, SpinSystem};

#[derive(Clone, Copy, Debug)]
enum Kind {
    Spin,
    Number,
    OptNumber,
    Quantity(Dimension),
    OptQuantity(Dimension),
    List(Dimension),
    Mode,
    Projection,
    Engines,
    Basis,
    Count,
    Path,
}

struct KeySpec {
    name: &'static str,
    kind: Kind,
    default: &'static str,
    /// Echoed into output files so that re-ingesting them repeats the run.
    echoed: bool,
}

const fn key(name: &'static str, kind: Kind, default: &'static str) -> KeySpec {
    KeySpec {
        name,
        kind,
        default,
        echoed: true,
    }
}

use Dimension::{Field, FieldRate, Frequency, Time};

const KEYS: &[KeySpec] = &[
    key("spin", Kind::Spin, "2"),
    key("g_factor", Kind::Number, "0.5"),
    key("b_yi", Kind::Quantity(Field), "0.05G"),
    key("b_yq", Kind::Quantity(Field), "0.05G"),
    key("b_zi", Kind::Quantity(Field), "1G"),
    key("b_zq", Kind::Quantity(Field), "0.5G"),
    key("tau_q", Kind::Quantity(Time), "117.7us"),
    key("tau_i", Kind::List(Time), "117.7us,30.3us,16.1us,11.4us,7.7us,5.8us,4.4us"),
    key("mode", Kind::Mode, "linearized"),
    key("m0", Kind::Projection, "top"),
    key("k", Kind::OptNumber, "default"),
    key("engines", Kind::Engines, "both"),
    key("rel_tol", Kind::Number, "1e-10"),
    key("abs_tol", Kind::Number, "1e-12"),
    key("adiabaticity", Kind::Number, "1e4"),
    key("larmor_resolution", Kind::Number, "50"),
    key("max_step", Kind::OptQuantity(Time), "none"),
    key("basis", Kind::Basis, "field_aligned"),
    key("f_lar", Kind::Quantity(Frequency), "0.1MHz"),
    key("f_rot", Kind::OptQuantity(Frequency), "none"),
    key("a_y", Kind::OptQuantity(Field), "none"),
    key("a_z", Kind::OptQuantity(Field), "none"),
    key("c_z", Kind::OptQuantity(FieldRate), "none"),
    key("t_start", Kind::OptQuantity(Time), "none"),
    key("t_end", Kind::OptQuantity(Time), "none"),
    key("samples", Kind::Count, "2001"),
    key("trace_basis", Kind::Basis, "lab_z"),
    KeySpec {
        name: "out",
        kind: Kind::Path,
        default: "",
        echoed: false,
    },
    KeySpec {
        name: "plot",
        kind: Kind::Path,
        default: "",
        echoed: false,
    },
];

/// Names of every accepted key.
pub fn key_names() -> impl Iterator<Item = &'static str> {
    KEYS.iter().map(|k| k.name)
}

#[derive(Clone, Debug, PartialEq)]
enum Value {
    Spin(u32),
    Number(f64),
    OptNumber(Option<f64>),
    Quantity(f64, Dimension),
    OptQuantity(Option<f64>, Dimension),
    List(Vec<f64>, Dimension),
    Mode(FieldMode),
    /// `None` is the top state `m = J`.
    Projection(Option<Projection>),
    Engines(Engines),
    Basis(Basis),
    Count(usize),
    Path(Option<PathBuf>),
}

fn parse_value(kind: Kind, text: &str) -> Result<Value, String> {
    let text = text.trim();
    let is_none = |t: &str| t.eq_ignore_ascii_case("none") || t.eq_ignore_ascii_case("default");
    Ok(match kind {
        Kind::Spin => {
            let p: Projection = text.parse()?;
            if p.twice() <= 0 {
                return Err(format!("spin must be positive, got `{text}`"));
            }
            Value::Spin(p.twice() as u32)
        }
        Kind::Number => Value::Number(parse_number(text)?),
        Kind::OptNumber if is_none(text) => Value::OptNumber(None),
        Kind::OptNumber => Value::OptNumber(Some(parse_number(text)?)),
        Kind::Quantity(dim) => Value::Quantity(parse_quantity(text, dim)?, dim),
        Kind::OptQuantity(dim) if is_none(text) => Value::OptQuantity(None, dim),
        Kind::OptQuantity(dim) => Value::OptQuantity(Some(parse_quantity(text, dim)?), dim),
        Kind::List(dim) => {
            let values = text
                .split(',')
                .map(|item| parse_quantity(item, dim))
                .collect::<Result<Vec<_>, _>>()?;
            Value::List(values, dim)
        }
        Kind::Mode => Value::Mode(match text {
            "linearized" => FieldMode::Linearized,
            "exact" => FieldMode::ExactExponential,
            _ => return Err(format!("`{text}` is not a field mode (linearized, exact)")),
        }),
        Kind::Projection if text == "top" => Value::Projection(None),
        Kind::Projection => Value::Projection(Some(text.parse()?)),
        Kind::Engines => Value::Engines(match text {
            "analytic" => Engines::AnalyticOnly,
            "numeric" => Engines::NumericOnly,
            "both" => Engines::Both,
            _ => return Err(format!("`{text}` is not an engine choice (analytic, numeric, both)")),
        }),
        Kind::Basis => Value::Basis(match text {
            "lab_z" => Basis::LabZ,
            "field_aligned" => Basis::FieldAligned,
            _ => return Err(format!("`{text}` is not a basis (lab_z, field_aligned)")),
        }),
        Kind::Count => Value::Count(
            text.parse()
                .map_err(|_| format!("`{text}` is not a non-negative integer"))?,
        ),
        Kind::Path if text.is_empty() => Value::Path(None),
        Kind::Path => Value::Path(Some(PathBuf::from(text))),
    })
}

fn parse_number(text: &str) -> Result<f64, String> {
    match text.parse::<f64>() {
        Ok(v) if v.is_finite() => Ok(v),
        _ => Err(format!("`{text}` is not a finite number")),
    }
}

impl Value {
    fn canonical(&self) -> String {
        match self {
            Value::Spin(two_j) => Projection::from_twice(*two_j as i32).to_string(),
            Value::Number(v) => format_number(*v),
            Value::OptNumber(None) => "default".into(),
            Value::OptNumber(Some(v)) => format_number(*v),
            Value::Quantity(v, dim) => format_quantity(*v, *dim),
            Value::OptQuantity(None, _) => "none".into(),
            Value::OptQuantity(Some(v), dim) => format_quantity(*v, *dim),
            Value::List(values, dim) => values
                .iter()
                .map(|v| format_quantity(*v, *dim))
                .collect::<Vec<_>>()
                .join(","),
            Value::Mode(FieldMode::Linearized) => "linearized".into(),
            Value::Mode(FieldMode::ExactExponential) => "exact".into(),
            Value::Projection(None) => "top".into(),
            Value::Projection(Some(p)) => p.to_string(),
            Value::Engines(Engines::AnalyticOnly) => "analytic".into(),
            Value::Engines(Engines::NumericOnly) => "numeric".into(),
            Value::Engines(Engines::Both) => "both".into(),
            Value::Basis(Basis::LabZ) => "lab_z".into(),
            Value::Basis(Basis::FieldAligned) => "field_aligned".into(),
            Value::Count(n) => n.to_string(),
            Value::Path(None) => String::new(),
            Value::Path(Some(p)) => p.display().to_string(),
        }
    }
}

/// How `simulate` builds its field ramp.
#[derive(Clone, Debug, PartialEq)]
pub struct TraceSpec {
    pub model: Option<FieldModel>,
    pub t_start: Option<f64>,
    pub t_end: Option<f64>,
    pub samples: usize,
    pub basis: Basis,
}

/// A fully resolved configuration.
#[derive(Clone, Debug, PartialEq)]
pub struct RunConfig {
    values: Vec<(&'static str, Value)>,
    pub sweep: SweepConfig,
    pub trace: TraceSpec,
    pub out: Option<PathBuf>,
    pub plot: Option<PathBuf>,
}

/// Ordered `key=value` assignments; later ones win.
#[derive(Clone, Debug, Default)]
pub struct Overrides(Vec<(String, String)>);

impl Overrides {
    pub fn push(&mut self, key: impl Into<String>, value: impl Into<String>) {
        self.0.push((key.into(), value.into()));
    }

    /// Parses a `key=value` command-line assignment.
    pub fn push_assignment(&mut self, text: &str) -> Result<(), CliError> {
        let (key, value) = text
            .split_once('=')
            .ok_or_else(|| CliError::config(text.trim(), "expected `key=value`"))?;
        self.push(key.trim(), value.trim());
        Ok(())
    }

    /// Reads a TOML file, or the `# key=value` header of a CSV written by
    /// this tool.
    pub fn load_file(&mut self, path: &Path) -> Result<(), CliError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::config("config", format!("cannot read {}: {e}", path.display())))?;
        if path.extension().is_some_and(|ext| ext.eq_ignore_ascii_case("csv")) {
            self.load_csv_header(&text)
        } else {
            self.load_toml(&text)
        }
    }

    fn load_csv_header(&mut self, text: &str) -> Result<(), CliError> {
        for line in text.lines() {
            let Some(comment) = line.strip_prefix('#') else {
                break;
            };
            if let Some((key, value)) = comment.split_once('=') {
                self.push(key.trim(), value.trim());
            }
        }
        Ok(())
    }

    fn load_toml(&mut self, text: &str) -> Result<(), CliError> {
        let table: toml::Table = text
            .parse()
            .map_err(|e: toml::de::Error| CliError::config("config", e.message().to_string()))?;
        for (key, value) in table {
            let text = toml_scalar(&value)
                .or_else(|| match &value {
                    toml::Value::Array(items) => items
                        .iter()
                        .map(toml_scalar)
                        .collect::<Option<Vec<_>>>()
                        .map(|v| v.join(",")),
                    _ => None,
                })
                .ok_or_else(|| CliError::config(&key, "expected a string, number or list"))?;
            self.push(key, text);
        }
        Ok(())
    }
}

fn toml_scalar(value: &toml::Value) -> Option<String> {
    match value {
        toml::Value::String(s) => Some(s.clone()),
        toml::Value::Integer(i) => Some(i.to_string()),
        toml::Value::Float(f) => Some(format_number(*f)),
        _ => None,
    }
}

impl RunConfig {
    pub fn resolve(overrides: &Overrides) -> Result<Self, CliError> {
        let mut raw: Vec<(&'static KeySpec, String)> =
            KEYS.iter().map(|k| (k, k.default.to_string())).collect();
        for (name, value) in &overrides.0 {
            let slot = raw
                .iter_mut()
                .find(|(spec, _)| spec.name == name)
                .ok_or_else(|| CliError::config(name, "unknown key"))?;
            slot.1 = value.clone();
        }
        let values = raw
            .into_iter()
            .map(|(spec, text)| {
                parse_value(spec.kind, &text)
                    .map(|v| (spec.name, v))
                    .map_err(|e| CliError::config(spec.name, e))
            })
            .collect::<Result<Vec<_>, _>>()?;
        Self::build(values)
    }

    fn get(values: &[(&'static str, Value)], name: &str) -> Value {
        values
            .iter()
            .find(|(n, _)| *n == name)
            .map(|(_, v)| v.clone())
            .expect("every key has a value")
    }

    fn build(values: Vec<(&'static str, Value)>) -> Result<Self, CliError> {
        let num = |name| match Self::get(&values, name) {
            Value::Number(v) | Value::Quantity(v, _) => v,
            other => unreachable!("{name} holds {other:?}"),
        };
        let opt = |name| match Self::get(&values, name) {
            Value::OptNumber(v) | Value::OptQuantity(v, _) => v,
            other => unreachable!("{name} holds {other:?}"),
        };
        let Value::Spin(two_j) = Self::get(&values, "spin") else { unreachable!() };
        let Value::Mode(mode) = Self::get(&values, "mode") else { unreachable!() };
        let Value::List(tau_i_values, _) = Self::get(&values, "tau_i") else { unreachable!() };
        let Value::Projection(m0) = Self::get(&values, "m0") else { unreachable!() };
        let Value::Engines(engines) = Self::get(&values, "engines") else { unreachable!() };
        let Value::Basis(basis) = Self::get(&values, "basis") else { unreachable!() };
        let Value::Basis(trace_basis) = Self::get(&values, "trace_basis") else { unreachable!() };
        let Value::Count(samples) = Self::get(&values, "samples") else { unreachable!() };
        let Value::Path(out) = Self::get(&values, "out") else { unreachable!() };
        let Value::Path(plot) = Self::get(&values, "plot") else { unreachable!() };

        let sys = SpinSystem::with_g_factor(two_j, num("g_factor"))?;
        let m0 = m0.unwrap_or(Projection::from_twice(two_j as i32));
        sys.index_of(m0).map_err(|e| CliError::config("m0", e.to_string()))?;
        let first_tau_i = tau_i_values
            .first()
            .copied()
            .ok_or_else(|| CliError::config("tau_i", "at least one value is required"))?;
        let base_model = FieldModel::new(
            num("b_yi"),
            num("b_yq"),
            num("b_zi"),
            num("b_zq"),
            first_tau_i,
            num("tau_q"),
            mode,
        )?;
        let numeric = NumericSettings {
            rel_tol: num("rel_tol"),
            abs_tol: num("abs_tol"),
            adiabaticity: num("adiabaticity"),
            larmor_resolution: num("larmor_resolution"),
            max_step: opt("max_step").unwrap_or(f64::INFINITY),
            basis_out: basis,
        };
        propagator::PropagationSettings {
            rel_tol: numeric.rel_tol,
            abs_tol: numeric.abs_tol,
            t_start: 0.0,
            t_end: 0.0,
            max_step: numeric.max_step,
            larmor_resolution: numeric.larmor_resolution,
            basis_out: basis,
        }
        .validate()?;
        if !(numeric.adiabaticity.is_finite() && numeric.adiabaticity > 0.0) {
            return Err(CliError::config("adiabaticity", "must be positive"));
        }
        let sweep = SweepConfig {
            sys,
            base_model,
            m0,
            tau_i_values,
            k: opt("k"),
            numeric,
            engines,
        };
        sweep.validate()?;

        let model = if let Some(f_rot) = opt("f_rot") {
            Some(experiments::ramp_from_frequencies(&sys, num("f_lar"), f_rot)?)
        } else if let Some(c_z) = opt("c_z") {
            let a_y = opt("a_y").unwrap_or(base_model.a_y());
            let a_z = opt("a_z").unwrap_or(1e3 * a_y);
            Some(FieldModel::from_linear(a_y, a_z, c_z)?)
        } else {
            None
        };
        let trace = TraceSpec {
            model,
            t_start: opt("t_start"),
            t_end: opt("t_end"),
            samples,
            basis: trace_basis,
        };
        Ok(RunConfig {
            values,
            sweep,
            trace,
            out,
            plot,
        })
    }

    /// `# key=value` lines that reproduce this run when read back.
    pub fn echo(&self) -> String {
        let mut out = String::new();
        for (name, value) in &self.values {
            let spec = KEYS.iter().find(|k| k.name == *name).expect("known key");
            if spec.echoed {
                let _ = writeln!(out, "# {name}={}", value.canonical());
            }
        }
        out
    }

    /// The closed-form constant in effect.
    pub fn k(&self) -> f64 {
        self.sweep.k.unwrap_or_else(|| landau_zener_constant(&self.sweep.sys))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn resolve(pairs: &[(&str, &str)]) -> Result<RunConfig, CliError> {
        let mut o = Overrides::default();
        for (k, v) in pairs {
            o.push(*k, *v);
        }
        RunConfig::resolve(&o)
    }

    #[test]
    fn defaults_resolve() {
        let cfg = resolve(&[]).unwrap();
        assert_eq!(cfg.sweep.tau_i_values.len(), 7);
        assert_eq!(cfg.sweep.m0, Projection::from_twice(4));
        assert!(cfg.trace.model.is_none());
    }

    #[test]
    fn unknown_and_malformed_keys_are_named() {
        let err = resolve(&[("tau_z", "1us")]).unwrap_err();
        assert!(err.message.contains("tau_z"), "{}", err.message);
        let err = resolve(&[("tau_i", "117.7ms?")]).unwrap_err();
        assert_eq!(err.code, 2);
        assert!(err.message.contains("tau_i"), "{}", err.message);
        let err = resolve(&[("m0", "5/2")]).unwrap_err();
        assert!(err.message.contains("m0"), "{}", err.message);
    }

    #[test]
    fn echo_round_trips() {
        let cfg = resolve(&[("tau_i", "117.7us, 4.4us"), ("spin", "3/2"), ("f_rot", "1.2MHz")]).unwrap();
        let mut o = Overrides::default();
        o.load_csv_header(&format!("{}tau_i_s,m\n", cfg.echo())).unwrap();
        let again = RunConfig::resolve(&o).unwrap();
        assert_eq!(again.sweep, cfg.sweep);
        assert_eq!(again.trace, cfg.trace);
        assert_eq!(again.echo(), cfg.echo());
    }

    #[test]
    fn toml_values() {
        let mut o = Overrides::default();
        o.load_toml("spin = 1\ntau_i = [\"10us\", \"5us\"]\nadiabaticity = 100.0\n").unwrap();
        let cfg = RunConfig::resolve(&o).unwrap();
        assert_eq!(cfg.sweep.sys.two_j(), 2);
        assert_eq!(cfg.sweep.tau_i_values, vec![10e-6, 5e-6]);
        assert_eq!(cfg.sweep.numeric.adiabaticity, 100.0);
        let mut o = Overrides::default();
        assert!(o.load_toml("[field]\nb_yi = \"1G\"\n").is_err());
    }
}
