//! Process-wide symbol interner.
//!
//! Symbols compare by a natural ordering of their names (`x2 < x10`), never by
//! interning order, so canonical forms print identically across runs.

use std::cmp::Ordering;
use std::collections::HashMap;
use std::fmt;
use std::sync::RwLock;

use once_cell::sync::Lazy;

struct Interner {
    names: Vec<String>,
    ids: HashMap<String, u32>,
    fresh: u64,
}

static INTERNER: Lazy<RwLock<Interner>> = Lazy::new(|| {
    RwLock::new(Interner {
        names: Vec::new(),
        ids: HashMap::new(),
        fresh: 0,
    })
});

/// An interned identifier (variable or constant name).
#[derive(Clone, Copy, PartialEq, Eq, Hash)]
pub struct Sym(u32);

impl Sym {
    pub fn new(name: &str) -> Sym {
        if let Some(&id) = INTERNER.read().unwrap().ids.get(name) {
            return Sym(id);
        }
        let mut w = INTERNER.write().unwrap();
        if let Some(&id) = w.ids.get(name) {
            return Sym(id);
        }
        let id = w.names.len() as u32;
        w.names.push(name.to_string());
        w.ids.insert(name.to_string(), id);
        Sym(id)
    }

    /// A symbol whose name has never been interned before, `<prefix>_<n>`.
    pub fn fresh(prefix: &str) -> Sym {
        loop {
            let name = {
                let mut w = INTERNER.write().unwrap();
                w.fresh += 1;
                format!("{prefix}_{}", w.fresh)
            };
            let exists = INTERNER.read().unwrap().ids.contains_key(&name);
            if !exists {
                return Sym::new(&name);
            }
        }
    }

    pub fn name(self) -> String {
        INTERNER.read().unwrap().names[self.0 as usize].clone()
    }
}

fn split_natural(s: &str) -> (&str, Option<u64>, &str) {
    let digits_start = s
        .char_indices()
        .rev()
        .take_while(|(_, c)| c.is_ascii_digit())
        .last()
        .map(|(i, _)| i);
    match digits_start {
        Some(i) if i > 0 => (&s[..i], s[i..].parse().ok(), &s[i..]),
        _ => (s, None, ""),
    }
}

fn natural_cmp(a: &str, b: &str) -> Ordering {
    let (pa, na, ra) = split_natural(a);
    let (pb, nb, rb) = split_natural(b);
    pa.cmp(pb)
        .then_with(|| na.cmp(&nb))
        .then_with(|| ra.len().cmp(&rb.len()))
        .then_with(|| a.cmp(b))
}

impl Ord for Sym {
    fn cmp(&self, other: &Self) -> Ordering {
        if self.0 == other.0 {
            return Ordering::Equal;
        }
        let r = INTERNER.read().unwrap();
        natural_cmp(&r.names[self.0 as usize], &r.names[other.0 as usize])
    }
}

impl PartialOrd for Sym {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl fmt::Display for Sym {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.name())
    }
}

impl fmt::Debug for Sym {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "Sym({})", self.name())
    }
}

impl serde::Serialize for Sym {
    fn serialize<S: serde::Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_str(&self.name())
    }
}
