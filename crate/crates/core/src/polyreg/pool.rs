//! Candidate pool grammar.
//!
//! A pool expression is a `+`-separated list of items:
//!
//! * `C0` adds the bias column.
//! * `[term]` adds a fixed regressor, e.g. `[mu_x^2 + mu_y^2]`.
//! * `Pd(x, |y|, z){1, a, |b|}` adds every monomial of total degree `1..=d`
//!   in the listed variables, each multiplied by each interacting factor.
//!   `P^d(...)`, `·{...}` and a missing factor set (meaning `{1}`) are
//!   accepted too.
//!
//! Candidates are deduplicated in first-seen order and any candidate equal to
//! a fixed term is dropped.

use serde::{Deserialize, Serialize};

use super::term::{parse_factor, Monomial, Term};
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CandidatePool {
    /// Always-present regressors; the bias, when requested, comes first.
    pub fixed: Vec<Term>,
    pub candidates: Vec<Term>,
}

impl CandidatePool {
    pub fn has_bias(&self) -> bool {
        self.fixed.first().is_some_and(Term::is_bias)
    }
}

/// Expands a pool expression. `max_degree` caps every `P^d` block.
pub fn expand_pool(expr: &str, max_degree: Option<u32>) -> Result<CandidatePool> {
    let s: String = expr.chars().filter(|c| !c.is_whitespace()).collect();
    let mut fixed: Vec<Term> = Vec::new();
    let mut candidates: Vec<Term> = Vec::new();
    let mut has_bias = false;

    for item in split_top_level(&s)? {
        if item == "C0" {
            has_bias = true;
        } else if let Some(inner) = item.strip_prefix('[').and_then(|r| r.strip_suffix(']')) {
            let t = Term::parse(inner)?;
            if t.is_bias() {
                has_bias = true;
            } else if !fixed.contains(&t) {
                fixed.push(t);
            }
        } else if item.starts_with('P') {
            for m in expand_block(item, max_degree)? {
                let t = Term::from(m);
                if !candidates.contains(&t) {
                    candidates.push(t);
                }
            }
        } else {
            return Err(Error::Grammar(format!("unrecognized pool item '{item}'")));
        }
    }
    if has_bias {
        fixed.insert(0, Term::bias());
    }
    candidates.retain(|c| !fixed.contains(c));
    Ok(CandidatePool { fixed, candidates })
}

fn split_top_level(s: &str) -> Result<Vec<&str>> {
    let mut out = Vec::new();
    let mut depth = 0i32;
    let mut start = 0;
    for (i, c) in s.char_indices() {
        match c {
            '(' | '[' | '{' => depth += 1,
            ')' | ']' | '}' => {
                depth -= 1;
                if depth < 0 {
                    return Err(Error::Grammar(format!("unbalanced brackets in '{s}'")));
                }
            }
            '+' if depth == 0 => {
                if i == start {
                    return Err(Error::Grammar(format!("empty pool item in '{s}'")));
                }
                out.push(&s[start..i]);
                start = i + 1;
            }
            _ => {}
        }
    }
    if depth != 0 {
        return Err(Error::Grammar(format!("unbalanced brackets in '{s}'")));
    }
    if start >= s.len() {
        return Err(Error::Grammar(format!("empty pool item in '{s}'")));
    }
    out.push(&s[start..]);
    Ok(out)
}

fn expand_block(item: &str, max_degree: Option<u32>) -> Result<Vec<Monomial>> {
    let bad = || Error::Grammar(format!("malformed polynomial block '{item}'"));
    let rest = item.strip_prefix('P').ok_or_else(bad)?;
    let rest = rest.strip_prefix('^').unwrap_or(rest);
    let open = rest.find('(').ok_or_else(bad)?;
    let degree: u32 = rest[..open].parse().map_err(|_| bad())?;
    if degree == 0 {
        return Err(Error::Grammar(format!("degree must be positive in '{item}'")));
    }
    let degree = max_degree.map_or(degree, |cap| degree.min(cap));
    let close = rest.find(')').ok_or_else(bad)?;
    let vars: Vec<Monomial> = rest[open + 1..close]
        .split(',')
        .map(parse_factor)
        .collect::<Result<_>>()?;
    let tail = &rest[close + 1..];
    let tail = tail.strip_prefix('·').or_else(|| tail.strip_prefix('*')).unwrap_or(tail);
    let factors: Vec<Monomial> = if tail.is_empty() {
        vec![Monomial::one()]
    } else {
        let inner = tail
            .strip_prefix('{')
            .and_then(|r| r.strip_suffix('}'))
            .ok_or_else(bad)?;
        inner
            .split(',')
            .map(|f| {
                if f == "1" {
                    Ok(Monomial::one())
                } else {
                    let t = Term::parse(f)?;
                    match t.parts() {
                        [(c, m)] if *c == 1.0 => Ok(m.clone()),
                        _ => Err(Error::Grammar(format!("interacting factor '{f}' must be a monomial"))),
                    }
                }
            })
            .collect::<Result<_>>()?
    };

    // Monomials of total degree 1..=d as multisets of variable indices.
    let mut basis = Vec::new();
    let mut combo: Vec<usize> = Vec::new();
    fn rec(vars: &[Monomial], start: usize, left: u32, cur: &mut Vec<usize>, out: &mut Vec<Monomial>) {
        if !cur.is_empty() {
            out.push(cur.iter().fold(Monomial::one(), |acc, &i| acc.mul(&vars[i])));
        }
        if left == 0 {
            return;
        }
        for i in start..vars.len() {
            cur.push(i);
            rec(vars, i, left - 1, cur, out);
            cur.pop();
        }
    }
    rec(&vars, 0, degree, &mut combo, &mut basis);
    basis.sort_by_key(Monomial::degree);

    let mut out = Vec::with_capacity(basis.len() * factors.len());
    for a in &factors {
        for m in &basis {
            out.push(m.mul(a));
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn names(pool: &CandidatePool) -> Vec<String> {
        pool.candidates.iter().map(Term::canonical).collect()
    }

    #[test]
    fn quadratic_two_variables() {
        let p = expand_pool("P2(mu_x, mu_z){1}", None).unwrap();
        let mut got = names(&p);
        got.sort();
        let mut want: Vec<String> = ["mu_x", "mu_z", "mu_x^2", "mu_x*mu_z", "mu_z^2"]
            .iter()
            .map(|s| Term::parse(s).unwrap().canonical())
            .collect();
        want.sort();
        assert_eq!(got, want);
        assert!(p.fixed.is_empty());
    }

    #[test]
    fn linear_with_interaction() {
        let p = expand_pool("P1(p){1, omega_avg}", None).unwrap();
        assert_eq!(names(&p), vec!["p^1".to_string(), "p^1*omega_avg^1".to_string()]);
    }

    #[test]
    fn cubic_three_variable_count() {
        // Stars and bars: C(3+3, 3) - 1 = 19 monomials of degree 1..3.
        let count = |k: u64, d: u64| (1..=k + d).product::<u64>() / ((1..=k).product::<u64>() * (1..=d).product::<u64>()) - 1;
        let p = expand_pool("C0 + [mu_x] + P3(mu_x, |mu_y|, mu_z){1}", None).unwrap();
        // mu_x itself is fixed, so it drops out of the candidates.
        assert_eq!(p.candidates.len() as u64, count(3, 3) - 1);
        let all = expand_pool("P3(mu_x, |mu_y|, mu_z)", None).unwrap();
        assert_eq!(all.candidates.len() as u64, count(3, 3));
        assert!(p.has_bias());
        assert_eq!(p.fixed.len(), 2);
    }

    #[test]
    fn degree_cap_and_duplicates() {
        let p = expand_pool("P3(mu_x) + P2(mu_x)", Some(2)).unwrap();
        assert_eq!(p.candidates.len(), 2);
        let q = expand_pool("P2(|p|, p)", None).unwrap();
        // |p|^2 and p^2 coincide.
        assert_eq!(q.candidates.len(), 4);
    }

    #[test]
    fn alternate_spellings() {
        let a = expand_pool("C0 + [U_p] + P^3(mu_y,mu_z)·{1,p,U_p}", None).unwrap();
        let b = expand_pool("C0+[U_p]+P3(mu_y,mu_z){1,p,U_p}", None).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.candidates.len(), 27);
    }

    #[test]
    fn errors() {
        assert!(matches!(expand_pool("P2(mu_x, bogus)", None), Err(Error::Grammar(_))));
        assert!(expand_pool("C0 + ", None).is_err());
        assert!(expand_pool("P2(mu_x", None).is_err());
        assert!(expand_pool("Q2(mu_x)", None).is_err());
        assert!(expand_pool("P0(mu_x)", None).is_err());
    }
}
