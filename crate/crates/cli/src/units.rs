use std::f64::consts::PI;

use qong_core::DEG_PER_HOUR;

/// Physical dimension of a config value. Each has one canonical SI suffix
/// used when writing configs back out.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Dim {
    Dimensionless,
    Power,
    Length,
    /// Angular rate of a resonator quantity (loss, coupling, detuning).
    Rate,
    /// Mechanical rotation rate.
    Rotation,
    Angle,
    Responsivity,
    /// Second-order susceptibility.
    Susceptibility,
    InverseLength,
}

impl Dim {
    pub fn canonical(&self) -> &'static str {
        match self {
            Dim::Dimensionless => "",
            Dim::Power => "W",
            Dim::Length => "m",
            Dim::Rate => "rad/s",
            Dim::Rotation => "rad/s",
            Dim::Angle => "rad",
            Dim::Responsivity => "A/W",
            Dim::Susceptibility => "m/V",
            Dim::InverseLength => "1/m",
        }
    }

    fn factor(&self, unit: &str) -> Option<f64> {
        let f = match (self, unit) {
            (Dim::Power, "W") => 1.0,
            (Dim::Power, "mW") => 1e-3,
            (Dim::Power, "uW") => 1e-6,
            (Dim::Power, "nW") => 1e-9,
            (Dim::Length, "m") => 1.0,
            (Dim::Length, "mm") => 1e-3,
            (Dim::Length, "um") => 1e-6,
            (Dim::Length, "nm") => 1e-9,
            (Dim::Rate, "rad/s") => 1.0,
            (Dim::Rate, "Hz") => 2.0 * PI,
            (Dim::Rate, "kHz") => 2.0 * PI * 1e3,
            (Dim::Rate, "MHz") => 2.0 * PI * 1e6,
            (Dim::Rate, "GHz") => 2.0 * PI * 1e9,
            (Dim::Rotation, "rad/s") => 1.0,
            (Dim::Rotation, "deg/s") => PI / 180.0,
            (Dim::Rotation, "deg_per_hour") | (Dim::Rotation, "deg/h") => DEG_PER_HOUR,
            (Dim::Angle, "rad") => 1.0,
            (Dim::Angle, "deg") => PI / 180.0,
            (Dim::Responsivity, "A/W") => 1.0,
            (Dim::Susceptibility, "m/V") => 1.0,
            (Dim::Susceptibility, "pm/V") => 1e-12,
            (Dim::InverseLength, "1/m") => 1.0,
            (Dim::InverseLength, "1/mm") => 1e3,
            (Dim::InverseLength, "1/um") => 1e6,
            _ => return None,
        };
        Some(f)
    }

    pub fn accepted(&self) -> &'static str {
        match self {
            Dim::Dimensionless => "(none)",
            Dim::Power => "W, mW, uW, nW",
            Dim::Length => "m, mm, um, nm",
            Dim::Rate => "rad/s, Hz, kHz, MHz, GHz",
            Dim::Rotation => "rad/s, deg/s, deg/h, deg_per_hour",
            Dim::Angle => "rad, deg",
            Dim::Responsivity => "A/W",
            Dim::Susceptibility => "m/V, pm/V",
            Dim::InverseLength => "1/m, 1/mm, 1/um",
        }
    }
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum UnitError {
    #[error("`{0}` is not a number")]
    Number(String),
    #[error("missing unit, expected one of {0}")]
    Missing(&'static str),
    #[error("unit `{unit}` not accepted here, expected one of {expected}")]
    Wrong { unit: String, expected: &'static str },
    #[error("unexpected trailing text `{0}`")]
    Trailing(String),
}

/// Converts `number` given in `unit` (`None` or `-` for dimensionless) to SI.
pub fn to_si(dim: Dim, number: &str, unit: Option<&str>) -> Result<f64, UnitError> {
    let v: f64 = number.parse().map_err(|_| UnitError::Number(number.to_string()))?;
    let unit = unit.filter(|u| *u != "-");
    match (dim, unit) {
        (Dim::Dimensionless, None) => Ok(v),
        (Dim::Dimensionless, Some(u)) => Err(UnitError::Wrong {
            unit: u.to_string(),
            expected: dim.accepted(),
        }),
        (_, None) => Err(UnitError::Missing(dim.accepted())),
        (_, Some(u)) => dim.factor(u).map(|f| v * f).ok_or_else(|| UnitError::Wrong {
            unit: u.to_string(),
            expected: dim.accepted(),
        }),
    }
}

/// Parses `"<number> [unit]"`.
pub fn parse_quantity(dim: Dim, text: &str) -> Result<f64, UnitError> {
    let mut it = text.split_whitespace();
    let number = it.next().ok_or_else(|| UnitError::Number(String::new()))?;
    let unit = it.next();
    if let Some(extra) = it.next() {
        return Err(UnitError::Trailing(extra.to_string()));
    }
    to_si(dim, number, unit)
}

/// Canonical text for an SI value: shortest round-trip float plus unit.
pub fn format_quantity(dim: Dim, value: f64) -> String {
    match dim {
        Dim::Dimensionless => format!("{value:e}"),
        _ => format!("{value:e} {}", dim.canonical()),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn prefixes() {
        assert!((parse_quantity(Dim::Power, "23.507 mW").unwrap() / 23.507e-3 - 1.0).abs() < 1e-15);
        assert!((parse_quantity(Dim::Power, "0.945 uW").unwrap() - 0.945e-6).abs() < 1e-21);
        assert!((parse_quantity(Dim::Length, "1590 nm").unwrap() / 1590e-9 - 1.0).abs() < 1e-15);
        assert!((parse_quantity(Dim::Rate, "1 Hz").unwrap() - 2.0 * PI).abs() < 1e-15);
        assert!((parse_quantity(Dim::Rotation, "100 deg_per_hour").unwrap() - 100.0 * DEG_PER_HOUR).abs() < 1e-18);
        assert_eq!(parse_quantity(Dim::Dimensionless, "1.018e5").unwrap(), 1.018e5);
    }

    #[test]
    fn unit_required_and_checked() {
        assert_eq!(
            parse_quantity(Dim::Power, "3"),
            Err(UnitError::Missing(Dim::Power.accepted()))
        );
        assert!(matches!(
            parse_quantity(Dim::Power, "3 nm"),
            Err(UnitError::Wrong { .. })
        ));
        assert!(matches!(
            parse_quantity(Dim::Dimensionless, "3 W"),
            Err(UnitError::Wrong { .. })
        ));
        assert!(matches!(
            parse_quantity(Dim::Power, "3 W x"),
            Err(UnitError::Trailing(_))
        ));
        assert!(matches!(
            parse_quantity(Dim::Power, "three W"),
            Err(UnitError::Number(_))
        ));
    }

    #[test]
    fn canonical_text_round_trips_bitwise() {
        for v in [0.1 + 0.2, 1.0 / 3.0, 23.507e-3, 1.18469e15, 0.0, 5e-324] {
            let s = format_quantity(Dim::Power, v);
            assert_eq!(parse_quantity(Dim::Power, &s).unwrap().to_bits(), v.to_bits());
        }
    }
}
