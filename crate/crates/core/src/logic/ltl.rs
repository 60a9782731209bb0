//! Finite-trace LTL.
//!
//! The strong reading is used throughout: `X φ` at the last letter is false
//! and `φ U ψ` needs its witness inside the word. `G` is the dual of `F`, so
//! it only inspects the remaining letters. Timed operators count letters:
//! `F[a, b]` looks at positions `k + a ..= k + b`.

use std::collections::BTreeSet;

use super::formula::{Formula, Interval};
use super::LogicError;

pub type Letter = BTreeSet<String>;

/// Finite word over `2^AP`. The alphabet is the set of propositions the word
/// speaks about; a formula mentioning anything else is rejected.
#[derive(Debug, Clone, PartialEq)]
pub struct Word {
    alphabet: BTreeSet<String>,
    letters: Vec<Letter>,
}

impl Word {
    /// Alphabet taken as the union of the letters.
    pub fn new(letters: Vec<Letter>) -> Result<Self, LogicError> {
        let alphabet = letters.iter().flatten().cloned().collect();
        Self::with_alphabet(alphabet, letters)
    }

    pub fn with_alphabet(alphabet: BTreeSet<String>, letters: Vec<Letter>) -> Result<Self, LogicError> {
        if letters.is_empty() {
            return Err(LogicError::Empty);
        }
        if let Some(stray) = letters.iter().flatten().find(|p| !alphabet.contains(*p)) {
            return Err(LogicError::UnknownAtom(stray.clone()));
        }
        Ok(Self { alphabet, letters })
    }

    /// Convenience constructor: `from_strs(&["p", "p,q", ""])`.
    pub fn from_strs(alphabet: &[&str], letters: &[&str]) -> Result<Self, LogicError> {
        let alphabet = alphabet.iter().map(|s| s.to_string()).collect();
        let letters = letters
            .iter()
            .map(|l| l.split(',').map(str::trim).filter(|s| !s.is_empty()).map(String::from).collect())
            .collect();
        Self::with_alphabet(alphabet, letters)
    }

    pub fn len(&self) -> usize {
        self.letters.len()
    }

    pub fn is_empty(&self) -> bool {
        self.letters.is_empty()
    }

    pub fn letters(&self) -> &[Letter] {
        &self.letters
    }

    pub fn alphabet(&self) -> &BTreeSet<String> {
        &self.alphabet
    }
}

/// Satisfaction of `formula` by the suffix of `word` starting at `k`.
pub fn ltl_satisfies(word: &Word, k: usize, formula: &Formula) -> Result<bool, LogicError> {
    if k >= word.len() {
        return Err(LogicError::IndexOutOfRange { index: k, len: word.len() });
    }
    Ok(ltl_satisfaction_vector(word, formula)?[k])
}

/// Satisfaction at every position of the word, computed bottom-up.
pub fn ltl_satisfaction_vector(word: &Word, formula: &Formula) -> Result<Vec<bool>, LogicError> {
    let n = word.len();
    Ok(match formula {
        Formula::True => vec![true; n],
        Formula::False => vec![false; n],
        Formula::Atom(p) => {
            if !word.alphabet.contains(p) {
                return Err(LogicError::UnknownAtom(p.clone()));
            }
            word.letters.iter().map(|l| l.contains(p)).collect()
        }
        Formula::Pred(p) => return Err(LogicError::PredicateInLtl(p.to_string())),
        Formula::Not(f) => ltl_satisfaction_vector(word, f)?.into_iter().map(|b| !b).collect(),
        Formula::And(a, b) => {
            let (a, b) = (ltl_satisfaction_vector(word, a)?, ltl_satisfaction_vector(word, b)?);
            a.iter().zip(&b).map(|(x, y)| *x && *y).collect()
        }
        Formula::Or(a, b) => {
            let (a, b) = (ltl_satisfaction_vector(word, a)?, ltl_satisfaction_vector(word, b)?);
            a.iter().zip(&b).map(|(x, y)| *x || *y).collect()
        }
        Formula::Next(f) => {
            let inner = ltl_satisfaction_vector(word, f)?;
            (0..n).map(|i| i + 1 < n && inner[i + 1]).collect()
        }
        Formula::Until(a, b) => {
            let (a, b) = (ltl_satisfaction_vector(word, a)?, ltl_satisfaction_vector(word, b)?);
            let mut out = vec![false; n];
            let mut later = false;
            for i in (0..n).rev() {
                later = b[i] || (a[i] && later);
                out[i] = later;
            }
            out
        }
        Formula::Eventually(iv, f) => {
            let inner = ltl_satisfaction_vector(word, f)?;
            (0..n).map(|i| window(i, iv, n).any(|j| inner[j])).collect()
        }
        Formula::Always(iv, f) => {
            let inner = ltl_satisfaction_vector(word, f)?;
            (0..n).map(|i| window(i, iv, n).all(|j| inner[j])).collect()
        }
        Formula::TimedUntil(iv, a, b) => {
            let (a, b) = (ltl_satisfaction_vector(word, a)?, ltl_satisfaction_vector(word, b)?);
            (0..n)
                .map(|i| window(i, iv, n).any(|j| b[j] && (i..j).all(|m| a[m])))
                .collect()
        }
    })
}

/// Letter positions `i + ceil(lo) ..= i + floor(hi)` clipped to the word.
fn window(i: usize, iv: &Interval, n: usize) -> std::ops::Range<usize> {
    let lo = i.saturating_add(iv.lo.ceil() as usize);
    let hi = if iv.hi.is_infinite() {
        n
    } else {
        i.saturating_add(iv.hi.floor() as usize).saturating_add(1).min(n)
    };
    lo.min(n)..hi.max(lo.min(n))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::logic::parse;

    fn sat(alphabet: &[&str], letters: &[&str], k: usize, f: &str) -> bool {
        ltl_satisfies(&Word::from_strs(alphabet, letters).unwrap(), k, &parse(f).unwrap()).unwrap()
    }

    #[test]
    fn until_witnessed() {
        assert!(sat(&["p", "q"], &["p", "p,q"], 0, "p U q"));
        assert!(!sat(&["p", "q"], &["", "q"], 0, "p U q"));
    }

    #[test]
    fn next_past_end_is_false() {
        assert!(!sat(&["p"], &["p", "p"], 1, "X p"));
        assert!(!sat(&["p"], &["p"], 0, "X true"));
        assert!(sat(&["p"], &["", "p"], 0, "X p"));
    }

    #[test]
    fn excluded_middle_everywhere() {
        let w = Word::from_strs(&["p"], &["p", "", "p", ""]).unwrap();
        let f = parse("p | !p").unwrap();
        assert!(ltl_satisfaction_vector(&w, &f).unwrap().into_iter().all(|b| b));
    }

    #[test]
    fn always_and_eventually_duality() {
        let w = Word::from_strs(&["p"], &["p", "", "p", "p"]).unwrap();
        let g = ltl_satisfaction_vector(&w, &parse("G p").unwrap()).unwrap();
        let nfn = ltl_satisfaction_vector(&w, &parse("!F !p").unwrap()).unwrap();
        assert_eq!(g, nfn);
        assert_eq!(g, vec![false, false, true, true]);
    }

    #[test]
    fn timed_windows_count_letters() {
        assert!(sat(&["p"], &["", "", "p"], 0, "F[1, 2] p"));
        assert!(!sat(&["p"], &["", "", "", "p"], 0, "F[1, 2] p"));
        assert!(sat(&["p", "q"], &["p", "p", "q"], 0, "p U[2, 3] q"));
        assert!(!sat(&["p", "q"], &["p", "q", "q"], 0, "p U[2, 3] !p"));
    }

    #[test]
    fn errors() {
        let w = Word::from_strs(&["p"], &["p"]).unwrap();
        assert!(matches!(ltl_satisfies(&w, 0, &parse("r").unwrap()), Err(LogicError::UnknownAtom(_))));
        assert!(matches!(ltl_satisfies(&w, 3, &parse("p").unwrap()), Err(LogicError::IndexOutOfRange { .. })));
        assert!(matches!(ltl_satisfies(&w, 0, &parse("x1 >= 0").unwrap()), Err(LogicError::PredicateInLtl(_))));
        assert!(matches!(Word::new(vec![]), Err(LogicError::Empty)));
    }
}
