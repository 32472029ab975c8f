//! Named scalar functionals of the state.
//!
//! Token grammar: `<field>_<kind>` where field is `q`, `eta` or `w`, and
//! kind is `l<p>` (even `p`), `linf`, `h<α>` (spectral fractional norm),
//! `gradl<p>`, or `gradlinf`. Pairings with operator eigenfunctions are
//! `pair<k>` (`⟨q, ρ_k⟩`) and `pairsq<k>` (its square), `k ≥ 1`.

use std::fmt;

use crate::coupling::OperatorEigenpairs;
use crate::error::{Error, Result};
use crate::spectral::{LayerField, SpectralBasis};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Component {
    Q,
    Eta,
    W,
}

impl Component {
    fn prefix(self) -> &'static str {
        match self {
            Component::Q => "q",
            Component::Eta => "eta",
            Component::W => "w",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Observable {
    Lp { of: Component, p: f64 },
    GradLp { of: Component, p: f64 },
    Fractional { of: Component, alpha: f64 },
    Pairing(usize),
    PairingSquared(usize),
}

fn format_exponent(p: f64) -> String {
    if p.is_infinite() {
        "inf".to_string()
    } else if p.fract() == 0.0 {
        format!("{}", p as i64)
    } else {
        format!("{p}")
    }
}

impl Observable {
    pub fn parse(token: &str) -> Result<Self> {
        let bad = || Error::config(format!("unknown observable '{token}'"));
        if let Some(k) = token.strip_prefix("pairsq") {
            let k: usize = k.parse().map_err(|_| bad())?;
            return if k == 0 { Err(bad()) } else { Ok(Observable::PairingSquared(k)) };
        }
        if let Some(k) = token.strip_prefix("pair") {
            let k: usize = k.parse().map_err(|_| bad())?;
            return if k == 0 { Err(bad()) } else { Ok(Observable::Pairing(k)) };
        }
        let (prefix, kind) = token.split_once('_').ok_or_else(bad)?;
        let of = match prefix {
            "q" => Component::Q,
            "eta" => Component::Eta,
            "w" => Component::W,
            _ => return Err(bad()),
        };
        let exponent = |s: &str| -> Result<f64> {
            let p = if s == "inf" {
                f64::INFINITY
            } else {
                s.parse::<f64>().map_err(|_| bad())?
            };
            if p.is_infinite() || (p >= 2.0 && p.fract() == 0.0 && (p as u64).is_multiple_of(2)) {
                Ok(p)
            } else {
                Err(Error::UnsupportedExponent(p))
            }
        };
        if let Some(p) = kind.strip_prefix("gradl") {
            return Ok(Observable::GradLp { of, p: exponent(p)? });
        }
        if let Some(p) = kind.strip_prefix('l') {
            return Ok(Observable::Lp { of, p: exponent(p)? });
        }
        if let Some(a) = kind.strip_prefix('h') {
            let alpha: f64 = a.parse().map_err(|_| bad())?;
            if !(alpha >= 0.0 && alpha.is_finite()) {
                return Err(bad());
            }
            return Ok(Observable::Fractional { of, alpha });
        }
        Err(bad())
    }

    pub fn name(&self) -> String {
        match *self {
            Observable::Lp { of, p } => format!("{}_l{}", of.prefix(), format_exponent(p)),
            Observable::GradLp { of, p } => format!("{}_gradl{}", of.prefix(), format_exponent(p)),
            Observable::Fractional { of, alpha } => format!("{}_h{}", of.prefix(), alpha),
            Observable::Pairing(k) => format!("pair{k}"),
            Observable::PairingSquared(k) => format!("pairsq{k}"),
        }
    }

    /// Largest eigenpair index this observable needs, if any.
    pub fn pair_index(&self) -> Option<usize> {
        match *self {
            Observable::Pairing(k) | Observable::PairingSquared(k) => Some(k),
            _ => None,
        }
    }

    /// Evaluates the functional on a spectral state `q = η + W`.
    pub fn evaluate(
        &self,
        basis: &SpectralBasis,
        pairs: &OperatorEigenpairs,
        q: &LayerField,
        eta: &LayerField,
        w: &LayerField,
    ) -> Result<f64> {
        let pick = |of: Component| match of {
            Component::Q => q,
            Component::Eta => eta,
            Component::W => w,
        };
        let pair = |k: usize| {
            pairs.pairs().get(k - 1).ok_or_else(|| {
                Error::OutOfRange(format!(
                    "pairing index {k} exceeds {} available eigenpairs",
                    pairs.len()
                ))
            })
        };
        match *self {
            Observable::Lp { of, p } => basis.lp_norm(pick(of), p),
            Observable::GradLp { of, p } => basis.grad_lp_norm(pick(of), p),
            Observable::Fractional { of, alpha } => basis.fractional_norm(pick(of), alpha),
            Observable::Pairing(k) => Ok(pair(k)?.project(q)),
            Observable::PairingSquared(k) => Ok(pair(k)?.project(q).powi(2)),
        }
    }
}

impl fmt::Display for Observable {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.name())
    }
}
