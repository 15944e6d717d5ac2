//! Physical quantities written with a unit suffix, e.g. `117.7us`, `0.5G`.

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Dimension {
    Time,
    Field,
    Frequency,
    FieldRate,
}

impl Dimension {
    /// Accepted suffixes and their SI scale as a power of ten, longest
    /// first so that `ms` is tried before `s`.
    fn suffixes(self) -> &'static [(&'static str, i32)] {
        match self {
            Dimension::Time => &[("us", -6), ("µs", -6), ("ms", -3), ("ns", -9), ("s", 0)],
            Dimension::Field => &[("mG", -7), ("mT", -3), ("uT", -6), ("µT", -6), ("G", -4), ("T", 0)],
            Dimension::Frequency => &[("GHz", 9), ("MHz", 6), ("kHz", 3), ("Hz", 0)],
            Dimension::FieldRate => &[("G/us", 2), ("G/ms", -1), ("T/s", 0), ("G/s", -4)],
        }
    }

    /// Suffix used when writing a value back out.
    pub fn si_suffix(self) -> &'static str {
        match self {
            Dimension::Time => "s",
            Dimension::Field => "T",
            Dimension::Frequency => "Hz",
            Dimension::FieldRate => "T/s",
        }
    }

    fn name(self) -> &'static str {
        match self {
            Dimension::Time => "a time (s, ms, us, ns)",
            Dimension::Field => "a field (T, mT, uT, G, mG)",
            Dimension::Frequency => "a frequency (Hz, kHz, MHz, GHz)",
            Dimension::FieldRate => "a field rate (T/s, G/s, G/ms, G/us)",
        }
    }
}

/// Parses `<number><suffix>` into SI units. The unit is applied to the
/// decimal exponent before conversion, so `10us` and `1e-5s` give the
/// same double.
pub fn parse_quantity(text: &str, dim: Dimension) -> Result<f64, String> {
    let text = text.trim();
    for (suffix, exponent) in dim.suffixes() {
        if let Some(number) = text.strip_suffix(suffix) {
            if let Some(value) = scale_decimal(number.trim_end(), *exponent) {
                return Ok(value);
            }
            break;
        }
    }
    Err(format!("`{text}` is not {}", dim.name()))
}

fn scale_decimal(number: &str, exponent: i32) -> Option<f64> {
    // Reject what `f64::from_str` accepts beyond plain decimals.
    if number.is_empty() || !number.chars().all(|c| c.is_ascii_digit() || "+-.eE".contains(c)) {
        return None;
    }
    let (mantissa, own) = match number.split_once(['e', 'E']) {
        Some((m, e)) => (m, e.parse::<i32>().ok()?),
        None => (number, 0),
    };
    mantissa.parse::<f64>().ok()?;
    let value: f64 = format!("{mantissa}e{}", own.checked_add(exponent)?).parse().ok()?;
    value.is_finite().then_some(value)
}

/// Shortest text that parses back to exactly `value`.
pub fn format_number(value: f64) -> String {
    let a = value.abs();
    if a == 0.0 || (1e-3..1e6).contains(&a) {
        format!("{value}")
    } else {
        format!("{value:e}")
    }
}

pub fn format_quantity(value: f64, dim: Dimension) -> String {
    format!("{}{}", format_number(value), dim.si_suffix())
}
