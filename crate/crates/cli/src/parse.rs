//! Flag-value parsers: level lists, component maps, fractions, grids.

use anova_power::catalog::{component_from_key, Component, ComponentMap, Param};
use anova_power::error::Error;
use anova_power::model::{FactorName, ModelSpec};

pub fn parse_factor(s: &str) -> Result<FactorName, Error> {
    let mut chars = s.chars();
    match (chars.next().map(|c| c.to_ascii_uppercase()), chars.next()) {
        (Some(c), None) => FactorName::from_letter(c)
            .ok_or_else(|| Error::InvalidInput(format!("unknown factor '{s}'; expected one of A, B, C, U, V"))),
        _ => Err(Error::InvalidInput(format!("unknown factor '{s}'"))),
    }
}

/// `a=6,b=2` style level lists.
pub fn parse_levels(s: &str) -> Result<Vec<(FactorName, u64)>, Error> {
    let mut out = Vec::new();
    for item in s.split(',').filter(|p| !p.trim().is_empty()) {
        let (key, value) = split_pair(item)?;
        let factor = parse_factor(&key)?;
        let count: u64 = value
            .parse()
            .map_err(|_| Error::InvalidInput(format!("level count '{value}' for {key} is not a positive integer")))?;
        if out.iter().any(|(f, _)| *f == factor) {
            return Err(Error::InvalidInput(format!("level count for {key} given twice")));
        }
        out.push((factor, count));
    }
    Ok(out)
}

/// `b=2,n=3` style parameter minima.
pub fn parse_minima(s: &str) -> Result<Vec<(Param, u64)>, Error> {
    let mut out = Vec::new();
    for item in s.split(',').filter(|p| !p.trim().is_empty()) {
        let (key, value) = split_pair(item)?;
        let param = if key.eq_ignore_ascii_case("n") {
            Param::Reps
        } else {
            Param::Level(parse_factor(&key)?)
        };
        let min: u64 = value
            .parse()
            .map_err(|_| Error::InvalidInput(format!("minimum '{value}' for {key} is not a positive integer")))?;
        out.push((param, min));
    }
    Ok(out)
}

/// Component maps like `sbA=1/18,sgAB=1/9,se=1/6`; values may be decimals or
/// fractions.
pub fn parse_components(model: &ModelSpec, s: &str) -> Result<Vec<(Component, f64)>, Error> {
    let mut out: Vec<(Component, f64)> = Vec::new();
    for item in s.split(',').filter(|p| !p.trim().is_empty()) {
        let (key, value) = split_pair(item)?;
        let comp = component_from_key(model, &key)?;
        let v = parse_number(&value)?;
        if out.iter().any(|(c, _)| *c == comp) {
            return Err(Error::InvalidInput(format!("component {key} given twice")));
        }
        out.push((comp, v));
    }
    Ok(out)
}

pub fn components_to_map(pairs: &[(Component, f64)]) -> ComponentMap {
    pairs.iter().copied().collect()
}

/// Decimal or `p/q` fraction.
pub fn parse_number(s: &str) -> Result<f64, Error> {
    let s = s.trim();
    if let Some((num, den)) = s.split_once('/') {
        let n: f64 = num.trim().parse().map_err(|_| Error::InvalidInput(format!("bad fraction '{s}'")))?;
        let d: f64 = den.trim().parse().map_err(|_| Error::InvalidInput(format!("bad fraction '{s}'")))?;
        if d == 0.0 {
            return Err(Error::InvalidInput(format!("zero denominator in '{s}'")));
        }
        Ok(n / d)
    } else {
        s.parse().map_err(|_| Error::InvalidInput(format!("bad number '{s}'")))
    }
}

/// Comma-separated effect values.
pub fn parse_effects(s: &str) -> Result<Vec<f64>, Error> {
    s.split(',')
        .filter(|p| !p.trim().is_empty())
        .map(parse_number)
        .collect()
}

/// An inclusive integer range per grid axis.
pub type GridRange = (u64, u64);

/// `b=2..25,c=2..25` grid ranges.
pub fn parse_grid(s: &str) -> Result<(GridRange, GridRange), Error> {
    let mut b = None;
    let mut c = None;
    for item in s.split(',').filter(|p| !p.trim().is_empty()) {
        let (key, value) = split_pair(item)?;
        let (lo, hi) = value
            .split_once("..")
            .ok_or_else(|| Error::InvalidInput(format!("range '{value}' must look like 2..25")))?;
        let lo: u64 = lo.trim().parse().map_err(|_| Error::InvalidInput(format!("bad range bound in '{value}'")))?;
        let hi: u64 = hi.trim().parse().map_err(|_| Error::InvalidInput(format!("bad range bound in '{value}'")))?;
        match key.to_ascii_lowercase().as_str() {
            "b" => b = Some((lo, hi)),
            "c" => c = Some((lo, hi)),
            other => return Err(Error::InvalidInput(format!("grid axis '{other}' must be b or c"))),
        }
    }
    match (b, c) {
        (Some(b), Some(c)) => Ok((b, c)),
        _ => Err(Error::InvalidInput("grid needs both b=lo..hi and c=lo..hi".into())),
    }
}

fn split_pair(item: &str) -> Result<(String, String), Error> {
    let (k, v) = item
        .split_once('=')
        .ok_or_else(|| Error::InvalidInput(format!("expected key=value, found '{item}'")))?;
    Ok((k.trim().to_string(), v.trim().to_string()))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn levels_and_numbers() {
        let levels = parse_levels("a=6, b=2").unwrap();
        assert_eq!(levels, vec![(FactorName::A, 6), (FactorName::B, 2)]);
        assert!(parse_levels("a=6,a=2").is_err());
        assert!(parse_levels("z=6").is_err());
        assert_eq!(parse_number("1/18").unwrap(), 1.0 / 18.0);
        assert_eq!(parse_number("0.25").unwrap(), 0.25);
        assert!(parse_number("1/0").is_err());
    }

    #[test]
    fn components_resolve_against_model() {
        let m = ModelSpec::parse("A > B~ > C~").unwrap();
        let comps = parse_components(&m, "sbA=1/18,sgAB=1/9,se=1/6").unwrap();
        assert_eq!(comps.len(), 3);
        assert!(parse_components(&m, "nope=1").is_err());
    }

    #[test]
    fn grids() {
        let ((bl, bh), (cl, ch)) = parse_grid("b=2..25,c=3..10").unwrap();
        assert_eq!((bl, bh, cl, ch), (2, 25, 3, 10));
        assert!(parse_grid("b=2..25").is_err());
    }
}
