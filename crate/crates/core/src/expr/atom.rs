use std::fmt;

use serde::{Deserialize, Serialize};

use super::{Expr, Sym};

/// A variable at a fixed time shift. `shift = j >= 0` is `x(t - j)`,
/// a negative shift is a forward (advanced) value.
#[derive(Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct DelayedVar {
    pub var: Sym,
    pub shift: i32,
}

impl DelayedVar {
    pub fn new(var: Sym, shift: i32) -> Self {
        DelayedVar { var, shift }
    }

    pub fn named(name: &str, shift: i32) -> Self {
        DelayedVar::new(Sym::new(name), shift)
    }

    pub fn shifted(self, k: i32) -> Self {
        DelayedVar::new(self.var, self.shift + k)
    }
}

impl fmt::Display for DelayedVar {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.shift {
            0 => write!(f, "{}", self.var),
            s if s > 0 => write!(f, "{}[-{}]", self.var, s),
            s => write!(f, "{}[+{}]", self.var, -s),
        }
    }
}

impl fmt::Debug for DelayedVar {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        fmt::Display::fmt(self, f)
    }
}

impl Serialize for DelayedVar {
    fn serialize<S: serde::Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_str(&self.to_string())
    }
}

impl<'de> Deserialize<'de> for DelayedVar {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let text = String::deserialize(d)?;
        parse_delayed_var(&text).ok_or_else(|| serde::de::Error::custom("bad delayed variable"))
    }
}

pub(crate) fn parse_delayed_var(text: &str) -> Option<DelayedVar> {
    let text = text.trim();
    match text.find('[') {
        None => Some(DelayedVar::named(text, 0)),
        Some(i) => {
            let inner = text[i + 1..].strip_suffix(']')?;
            let k: i32 = inner.trim_start_matches('+').parse().ok()?;
            Some(DelayedVar::named(&text[..i], -k))
        }
    }
}

/// Generators of the polynomial ring underlying [`Expr`].
#[derive(Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Atom {
    Var(DelayedVar),
    Const(Sym),
    Exp(Box<Expr>),
    Ln(Box<Expr>),
}

impl Atom {
    pub fn is_transcendental(&self) -> bool {
        matches!(self, Atom::Exp(_) | Atom::Ln(_))
    }

    /// Does the atom (or its argument) mention `v`?
    pub fn mentions(&self, v: &DelayedVar) -> bool {
        match self {
            Atom::Var(w) => w == v,
            Atom::Const(_) => false,
            Atom::Exp(e) | Atom::Ln(e) => e.mentions(v),
        }
    }

    pub fn mentions_sym(&self, s: Sym) -> bool {
        match self {
            Atom::Var(w) => w.var == s,
            Atom::Const(c) => *c == s,
            Atom::Exp(e) | Atom::Ln(e) => e.mentions_sym(s),
        }
    }
}

impl fmt::Display for Atom {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Atom::Var(v) => write!(f, "{v}"),
            Atom::Const(c) => write!(f, "{c}"),
            Atom::Exp(e) => write!(f, "exp({e})"),
            Atom::Ln(e) => write!(f, "ln({e})"),
        }
    }
}

impl fmt::Debug for Atom {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        fmt::Display::fmt(self, f)
    }
}
