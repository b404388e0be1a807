//! Regressor terms: signed sums of monomials over named features.
//!
//! A monomial stores, per feature, a plain power and a power of the absolute
//! value. Normalization folds even absolute powers into plain ones (and even
//! plain powers into odd absolute ones) so that `|x|^2` and `x^2` compare
//! equal and never produce duplicate columns.

use std::collections::BTreeMap;
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::features::{Feature, FeatureVector};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Default)]
struct Powers {
    plain: u32,
    abs: u32,
}

impl Powers {
    fn normalized(mut self) -> Self {
        if self.abs.is_multiple_of(2) {
            self.plain += self.abs;
            self.abs = 0;
        } else if self.plain.is_multiple_of(2) {
            self.abs += self.plain;
            self.plain = 0;
        }
        self
    }
}

/// Product of feature powers. The empty monomial is the constant 1.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Default)]
pub struct Monomial {
    factors: BTreeMap<Feature, Powers>,
}

impl Monomial {
    pub fn one() -> Self {
        Monomial::default()
    }

    pub fn var(feature: Feature, abs: bool, power: u32) -> Self {
        let mut m = Monomial::one();
        if power > 0 {
            let p = if abs {
                Powers { plain: 0, abs: power }
            } else {
                Powers { plain: power, abs: 0 }
            };
            m.factors.insert(feature, p.normalized());
        }
        m
    }

    pub fn is_one(&self) -> bool {
        self.factors.is_empty()
    }

    pub fn degree(&self) -> u32 {
        self.factors.values().map(|p| p.plain + p.abs).sum()
    }

    pub fn mul(&self, other: &Monomial) -> Monomial {
        let mut out = self.clone();
        for (f, p) in &other.factors {
            let e = out.factors.entry(*f).or_default();
            *e = Powers {
                plain: e.plain + p.plain,
                abs: e.abs + p.abs,
            }
            .normalized();
        }
        out
    }

    pub fn features(&self) -> impl Iterator<Item = Feature> + '_ {
        self.factors.keys().copied()
    }

    pub fn eval(&self, x: &FeatureVector) -> f64 {
        let mut acc = 1.0;
        for (f, p) in &self.factors {
            let v = x[*f];
            if p.plain > 0 {
                acc *= v.powi(p.plain as i32);
            }
            if p.abs > 0 {
                acc *= v.abs().powi(p.abs as i32);
            }
        }
        acc
    }
}

impl fmt::Display for Monomial {
    /// Canonical form, e.g. `abs(mu_y)^1*mu_z^2`; the constant prints as `1`.
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.is_one() {
            return f.write_str("1");
        }
        let mut first = true;
        for (feat, p) in &self.factors {
            for (abs, power) in [(true, p.abs), (false, p.plain)] {
                if power == 0 {
                    continue;
                }
                if !first {
                    f.write_str("*")?;
                }
                first = false;
                if abs {
                    write!(f, "abs({})^{}", feat.name(), power)?;
                } else {
                    write!(f, "{}^{}", feat.name(), power)?;
                }
            }
        }
        Ok(())
    }
}

/// One regressor column: `sum_k c_k * m_k`. Most terms have a single part
/// with unit weight; fixed regressors such as `mu_x^2 + mu_y^2` have more.
#[derive(Debug, Clone, PartialEq)]
pub struct Term {
    parts: Vec<(f64, Monomial)>,
}

impl Term {
    pub fn bias() -> Self {
        Term::from(Monomial::one())
    }

    pub fn from_parts(mut parts: Vec<(f64, Monomial)>) -> Result<Self> {
        parts.retain(|(c, _)| *c != 0.0);
        if parts.is_empty() {
            return Err(Error::Grammar("term has no non-zero parts".into()));
        }
        parts.sort_by(|a, b| a.1.cmp(&b.1));
        let mut merged: Vec<(f64, Monomial)> = Vec::with_capacity(parts.len());
        for (c, m) in parts {
            match merged.last_mut() {
                Some((lc, lm)) if *lm == m => *lc += c,
                _ => merged.push((c, m)),
            }
        }
        merged.retain(|(c, _)| *c != 0.0);
        if merged.is_empty() {
            return Err(Error::Grammar("term cancels to zero".into()));
        }
        Ok(Term { parts: merged })
    }

    pub fn parts(&self) -> &[(f64, Monomial)] {
        &self.parts
    }

    pub fn is_bias(&self) -> bool {
        self.parts.len() == 1 && self.parts[0].0 == 1.0 && self.parts[0].1.is_one()
    }

    pub fn features(&self) -> Vec<Feature> {
        let mut v: Vec<Feature> = self.parts.iter().flat_map(|(_, m)| m.features()).collect();
        v.sort();
        v.dedup();
        v
    }

    pub fn eval(&self, x: &FeatureVector) -> f64 {
        self.parts.iter().map(|(c, m)| c * m.eval(x)).sum()
    }

    /// Canonical string, also the serialization key.
    pub fn canonical(&self) -> String {
        self.to_string()
    }

    /// Parses a term such as `abs(mu_x)*mu_y`, `|U_q|^3*omega_avg`,
    /// `mu_x^2 + mu_y^2`, `-mu_z + mu_vin`, `2.5*p` or `1`.
    pub fn parse(text: &str) -> Result<Self> {
        let s: String = text.chars().filter(|c| !c.is_whitespace()).collect();
        if s.is_empty() {
            return Err(Error::Grammar("empty term".into()));
        }
        let mut parts = Vec::new();
        for (sign, chunk) in split_signed(&s)? {
            let (coef, mono) = parse_product(chunk)?;
            parts.push((sign * coef, mono));
        }
        Term::from_parts(parts)
    }
}

impl From<Monomial> for Term {
    fn from(m: Monomial) -> Self {
        Term { parts: vec![(1.0, m)] }
    }
}

impl fmt::Display for Term {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for (i, (c, m)) in self.parts.iter().enumerate() {
            let neg = *c < 0.0;
            if i > 0 {
                f.write_str(if neg { "-" } else { "+" })?;
            } else if neg {
                f.write_str("-")?;
            }
            let mag = c.abs();
            if mag == 1.0 {
                write!(f, "{m}")?;
            } else if m.is_one() {
                write!(f, "{mag:e}")?;
            } else {
                write!(f, "{mag:e}*{m}")?;
            }
        }
        Ok(())
    }
}

impl Serialize for Term {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        s.serialize_str(&self.canonical())
    }
}

impl<'de> Deserialize<'de> for Term {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        Term::parse(&s).map_err(serde::de::Error::custom)
    }
}

/// Splits on top-level `+`/`-`, skipping signs inside parentheses or that
/// belong to an exponent (`1e-3`).
fn split_signed(s: &str) -> Result<Vec<(f64, &str)>> {
    let bytes = s.as_bytes();
    let mut out = Vec::new();
    let mut depth = 0i32;
    let mut start = 0usize;
    let mut sign = 1.0;
    let mut i = 0usize;
    if matches!(bytes.first(), Some(b'+') | Some(b'-')) {
        sign = if bytes[0] == b'-' { -1.0 } else { 1.0 };
        start = 1;
        i = 1;
    }
    while i < bytes.len() {
        let c = bytes[i];
        match c {
            b'(' => depth += 1,
            b')' => depth -= 1,
            b'+' | b'-' if depth == 0 => {
                let exponent = i > 0 && matches!(bytes[i - 1], b'e' | b'E') && i >= 2 && bytes[i - 2].is_ascii_digit();
                if !exponent {
                    if i == start {
                        return Err(Error::Grammar(format!("dangling sign in '{s}'")));
                    }
                    out.push((sign, &s[start..i]));
                    sign = if c == b'-' { -1.0 } else { 1.0 };
                    start = i + 1;
                }
            }
            _ => {}
        }
        i += 1;
    }
    if start >= s.len() {
        return Err(Error::Grammar(format!("dangling sign in '{s}'")));
    }
    out.push((sign, &s[start..]));
    Ok(out)
}

fn parse_product(s: &str) -> Result<(f64, Monomial)> {
    let mut coef = 1.0;
    let mut mono = Monomial::one();
    for factor in s.split(['*', '·']) {
        if factor.is_empty() {
            return Err(Error::Grammar(format!("empty factor in '{s}'")));
        }
        if let Ok(c) = factor.parse::<f64>() {
            coef *= c;
            continue;
        }
        mono = mono.mul(&parse_factor(factor)?);
    }
    Ok((coef, mono))
}

/// Parses `name`, `name^k`, `|name|`, `|name|^k`, `abs(name)`, `abs(name)^k`.
pub fn parse_factor(s: &str) -> Result<Monomial> {
    let (base, power) = match s.rsplit_once('^') {
        Some((b, p)) => {
            let p: f64 = p
                .parse()
                .map_err(|_| Error::Grammar(format!("bad exponent in '{s}'")))?;
            if p < 0.0 || p.fract() != 0.0 {
                return Err(Error::Grammar(format!("exponent must be a non-negative integer in '{s}'")));
            }
            (b, p as u32)
        }
        None => (s, 1),
    };
    let (name, abs) = if let Some(inner) = base.strip_prefix("abs(").and_then(|r| r.strip_suffix(')')) {
        (inner, true)
    } else if let Some(inner) = base.strip_prefix('|').and_then(|r| r.strip_suffix('|')) {
        (inner, true)
    } else {
        (base, false)
    };
    let feature = Feature::from_name(name).ok_or_else(|| Error::Grammar(format!("unknown feature '{name}'")))?;
    Ok(Monomial::var(feature, abs, power))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn fv(pairs: &[(Feature, f64)]) -> FeatureVector {
        let mut x = FeatureVector::zeros();
        for (f, v) in pairs {
            x.set(*f, *v);
        }
        x
    }

    #[test]
    fn canonical_form_and_round_trip() {
        let t = Term::parse("mu_z^2 * |mu_y|").unwrap();
        assert_eq!(t.canonical(), "abs(mu_y)^1*mu_z^2");
        assert_eq!(Term::parse(&t.canonical()).unwrap(), t);
        let s = Term::parse("-mu_z + mu_vin").unwrap();
        assert_eq!(Term::parse(&s.canonical()).unwrap(), s);
        let c = Term::parse("2.5e-3*p - 1e-2*q^2").unwrap();
        assert_eq!(Term::parse(&c.canonical()).unwrap(), c);
        assert!(Term::parse("1").unwrap().is_bias());
    }

    #[test]
    fn even_abs_powers_fold() {
        assert_eq!(Term::parse("|mu_x|^2").unwrap(), Term::parse("mu_x^2").unwrap());
        assert_eq!(Term::parse("|mu_x|*|mu_x|").unwrap(), Term::parse("mu_x*mu_x").unwrap());
        assert_eq!(Term::parse("|U_q|*U_q^2").unwrap(), Term::parse("abs(U_q)^3").unwrap());
        assert_ne!(Term::parse("|U_q|^3").unwrap(), Term::parse("U_q^3").unwrap());
    }

    #[test]
    fn evaluation() {
        let x = fv(&[(Feature::MuX, -2.0), (Feature::MuY, 3.0), (Feature::MuZ, 0.5)]);
        assert_eq!(Term::parse("abs(mu_x)*mu_y").unwrap().eval(&x), 6.0);
        assert_eq!(Term::parse("mu_x^2+mu_y^2").unwrap().eval(&x), 13.0);
        assert_eq!(Term::parse("-mu_z+mu_vin").unwrap().eval(&x), -0.5);
        assert_eq!(Term::parse("|mu_x|^3*mu_z").unwrap().eval(&x), 4.0);
        assert_eq!(Term::bias().eval(&x), 1.0);
    }

    #[test]
    fn grammar_errors() {
        assert!(matches!(Term::parse("mu_q"), Err(Error::Grammar(_))));
        assert!(Term::parse("mu_x^-1").is_err());
        assert!(Term::parse("mu_x - mu_x").is_err());
        assert!(Term::parse("").is_err());
        assert!(Term::parse("mu_x +").is_err());
    }
}
