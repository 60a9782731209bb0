use std::fmt;

use serde::{Deserialize, Serialize};

use super::LogicError;

/// Closed time window `[lo, hi]`; `hi` may be infinite for untimed operators.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Interval {
    pub lo: f64,
    pub hi: f64,
}

impl Interval {
    pub fn new(lo: f64, hi: f64) -> Result<Self, LogicError> {
        if !(lo >= 0.0 && lo <= hi) || lo.is_infinite() {
            return Err(LogicError::InvalidInterval { lo, hi });
        }
        Ok(Self { lo, hi })
    }

    pub fn unbounded() -> Self {
        Self { lo: 0.0, hi: f64::INFINITY }
    }

    pub fn is_unbounded(&self) -> bool {
        self.lo == 0.0 && self.hi.is_infinite()
    }
}

/// Affine map `coeffs · x + constant`. Trailing zero coefficients are trimmed
/// so structurally equal maps compare equal.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AffineExpr {
    coeffs: Vec<f64>,
    constant: f64,
}

impl AffineExpr {
    pub fn new(mut coeffs: Vec<f64>, constant: f64) -> Self {
        while coeffs.last() == Some(&0.0) {
            coeffs.pop();
        }
        Self { coeffs, constant }
    }

    pub fn constant(value: f64) -> Self {
        Self::new(Vec::new(), value)
    }

    /// `1.0 * x_index` (zero-based index).
    pub fn variable(index: usize) -> Self {
        let mut coeffs = vec![0.0; index + 1];
        coeffs[index] = 1.0;
        Self::new(coeffs, 0.0)
    }

    pub fn coeffs(&self) -> &[f64] {
        &self.coeffs
    }

    pub fn constant_term(&self) -> f64 {
        self.constant
    }

    pub fn is_constant(&self) -> bool {
        self.coeffs.is_empty()
    }

    /// Smallest state dimension this map can be evaluated on.
    pub fn dim(&self) -> usize {
        self.coeffs.len()
    }

    pub fn eval(&self, x: &[f64]) -> Result<f64, LogicError> {
        if x.len() < self.coeffs.len() {
            return Err(LogicError::DimensionMismatch { expected: self.coeffs.len(), got: x.len() });
        }
        Ok(self.coeffs.iter().zip(x).map(|(a, b)| a * b).sum::<f64>() + self.constant)
    }

    pub fn add(&self, other: &AffineExpr) -> AffineExpr {
        let n = self.coeffs.len().max(other.coeffs.len());
        let coeffs = (0..n)
            .map(|i| self.coeffs.get(i).copied().unwrap_or(0.0) + other.coeffs.get(i).copied().unwrap_or(0.0))
            .collect();
        AffineExpr::new(coeffs, self.constant + other.constant)
    }

    pub fn scale(&self, factor: f64) -> AffineExpr {
        AffineExpr::new(self.coeffs.iter().map(|c| c * factor).collect(), self.constant * factor)
    }

    pub fn neg(&self) -> AffineExpr {
        self.scale(-1.0)
    }

    pub fn sub(&self, other: &AffineExpr) -> AffineExpr {
        self.add(&other.neg())
    }
}

impl fmt::Display for AffineExpr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let mut first = true;
        for (i, &c) in self.coeffs.iter().enumerate() {
            if c == 0.0 {
                continue;
            }
            let (sign, mag) = if c < 0.0 { ("-", -c) } else { ("+", c) };
            match (first, sign) {
                (true, "-") => write!(f, "-")?,
                (true, _) => {}
                (false, s) => write!(f, " {s} ")?,
            }
            if mag == 1.0 {
                write!(f, "x{}", i + 1)?;
            } else {
                write!(f, "{mag}*x{}", i + 1)?;
            }
            first = false;
        }
        if first {
            write!(f, "{}", self.constant)
        } else if self.constant < 0.0 {
            write!(f, " - {}", -self.constant)
        } else if self.constant > 0.0 {
            write!(f, " + {}", self.constant)
        } else {
            Ok(())
        }
    }
}

/// Real-valued predicate `mu(x) >= 0`. Both variants are concave in `x`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum Predicate {
    /// `a · x + c >= 0`
    Affine(AffineExpr),
    /// `radius - ||(e_1(x), ..., e_m(x))|| >= 0`
    NormBall { terms: Vec<AffineExpr>, radius: f64 },
}

impl Predicate {
    /// The predicate function `mu(x)`; its sign decides satisfaction.
    pub fn value(&self, x: &[f64]) -> Result<f64, LogicError> {
        match self {
            Predicate::Affine(expr) => expr.eval(x),
            Predicate::NormBall { terms, radius } => {
                let mut sq = 0.0;
                for t in terms {
                    let v = t.eval(x)?;
                    sq += v * v;
                }
                Ok(radius - sq.sqrt())
            }
        }
    }

    /// Gradient of `mu` with respect to `x`, padded to `x.len()`. At the
    /// centre of a norm ball the (super)gradient zero is returned.
    pub fn gradient(&self, x: &[f64]) -> Result<Vec<f64>, LogicError> {
        let mut grad = vec![0.0; x.len()];
        match self {
            Predicate::Affine(expr) => {
                expr.eval(x)?;
                for (g, c) in grad.iter_mut().zip(expr.coeffs()) {
                    *g = *c;
                }
            }
            Predicate::NormBall { terms, .. } => {
                let values = terms.iter().map(|t| t.eval(x)).collect::<Result<Vec<_>, _>>()?;
                let norm = values.iter().map(|v| v * v).sum::<f64>().sqrt();
                if norm > 0.0 {
                    for (t, v) in terms.iter().zip(&values) {
                        for (g, c) in grad.iter_mut().zip(t.coeffs()) {
                            *g -= c * v / norm;
                        }
                    }
                }
            }
        }
        Ok(grad)
    }

    pub fn dim(&self) -> usize {
        match self {
            Predicate::Affine(e) => e.dim(),
            Predicate::NormBall { terms, .. } => terms.iter().map(AffineExpr::dim).max().unwrap_or(0),
        }
    }
}

impl fmt::Display for Predicate {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Predicate::Affine(expr) => write!(f, "{expr} >= 0"),
            Predicate::NormBall { terms, radius } => {
                write!(f, "norm(")?;
                for (i, t) in terms.iter().enumerate() {
                    if i > 0 {
                        write!(f, ", ")?;
                    }
                    write!(f, "{t}")?;
                }
                write!(f, ") <= {radius}")
            }
        }
    }
}

/// Temporal-logic formula over atomic propositions (LTL) and real-valued
/// predicates with timed operators (STL).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum Formula {
    True,
    False,
    Atom(String),
    Pred(Predicate),
    Not(Box<Formula>),
    And(Box<Formula>, Box<Formula>),
    Or(Box<Formula>, Box<Formula>),
    Next(Box<Formula>),
    Until(Box<Formula>, Box<Formula>),
    Always(Interval, Box<Formula>),
    Eventually(Interval, Box<Formula>),
    TimedUntil(Interval, Box<Formula>, Box<Formula>),
}

impl Formula {
    pub fn atom(name: impl Into<String>) -> Self {
        Formula::Atom(name.into())
    }

    pub fn pred(p: Predicate) -> Self {
        Formula::Pred(p)
    }

    #[allow(clippy::should_implement_trait)]
    pub fn not(f: Formula) -> Self {
        Formula::Not(Box::new(f))
    }

    pub fn and(a: Formula, b: Formula) -> Self {
        Formula::And(Box::new(a), Box::new(b))
    }

    pub fn or(a: Formula, b: Formula) -> Self {
        Formula::Or(Box::new(a), Box::new(b))
    }

    pub fn next(f: Formula) -> Self {
        Formula::Next(Box::new(f))
    }

    pub fn until(a: Formula, b: Formula) -> Self {
        Formula::Until(Box::new(a), Box::new(b))
    }

    pub fn always(i: Interval, f: Formula) -> Self {
        Formula::Always(i, Box::new(f))
    }

    pub fn eventually(i: Interval, f: Formula) -> Self {
        Formula::Eventually(i, Box::new(f))
    }

    pub fn timed_until(i: Interval, a: Formula, b: Formula) -> Self {
        Formula::TimedUntil(i, Box::new(a), Box::new(b))
    }

    /// Left-nested conjunction; `True` for an empty iterator.
    pub fn conjunction(parts: impl IntoIterator<Item = Formula>) -> Formula {
        parts.into_iter().reduce(Formula::and).unwrap_or(Formula::True)
    }

    /// Left-nested disjunction; `False` for an empty iterator.
    pub fn disjunction(parts: impl IntoIterator<Item = Formula>) -> Formula {
        parts.into_iter().reduce(Formula::or).unwrap_or(Formula::False)
    }

    /// Operator nesting depth; leaves have depth 1.
    pub fn depth(&self) -> usize {
        match self {
            Formula::True | Formula::False | Formula::Atom(_) | Formula::Pred(_) => 1,
            Formula::Not(f) | Formula::Next(f) | Formula::Always(_, f) | Formula::Eventually(_, f) => 1 + f.depth(),
            Formula::And(a, b) | Formula::Or(a, b) | Formula::Until(a, b) | Formula::TimedUntil(_, a, b) => {
                1 + a.depth().max(b.depth())
            }
        }
    }

    /// True when the formula contains no temporal operator.
    pub fn is_propositional(&self) -> bool {
        match self {
            Formula::True | Formula::False | Formula::Atom(_) | Formula::Pred(_) => true,
            Formula::Not(f) => f.is_propositional(),
            Formula::And(a, b) | Formula::Or(a, b) => a.is_propositional() && b.is_propositional(),
            _ => false,
        }
    }

    pub fn atoms(&self) -> Vec<&str> {
        let mut out = Vec::new();
        self.visit(&mut |f| {
            if let Formula::Atom(a) = f {
                out.push(a.as_str());
            }
        });
        out.sort_unstable();
        out.dedup();
        out
    }

    pub fn predicates(&self) -> Vec<&Predicate> {
        let mut out = Vec::new();
        self.visit(&mut |f| {
            if let Formula::Pred(p) = f {
                out.push(p);
            }
        });
        out
    }

    fn visit<'a>(&'a self, cb: &mut impl FnMut(&'a Formula)) {
        cb(self);
        match self {
            Formula::True | Formula::False | Formula::Atom(_) | Formula::Pred(_) => {}
            Formula::Not(f) | Formula::Next(f) | Formula::Always(_, f) | Formula::Eventually(_, f) => f.visit(cb),
            Formula::And(a, b) | Formula::Or(a, b) | Formula::Until(a, b) | Formula::TimedUntil(_, a, b) => {
                a.visit(cb);
                b.visit(cb);
            }
        }
    }

    fn precedence(&self) -> u8 {
        match self {
            Formula::Until(..) | Formula::TimedUntil(..) => 1,
            Formula::Or(..) => 2,
            Formula::And(..) => 3,
            Formula::Not(_) | Formula::Next(_) | Formula::Always(..) | Formula::Eventually(..) => 4,
            _ => 5,
        }
    }
}

fn write_interval(f: &mut fmt::Formatter<'_>, i: &Interval) -> fmt::Result {
    if i.is_unbounded() {
        Ok(())
    } else {
        write!(f, "[{}, {}]", i.lo, i.hi)
    }
}

struct Operand<'a>(&'a Formula, u8);

impl fmt::Display for Operand<'_> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.0.precedence() < self.1 {
            write!(f, "({})", self.0)
        } else {
            write!(f, "{}", self.0)
        }
    }
}

impl fmt::Display for Formula {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Formula::True => write!(f, "true"),
            Formula::False => write!(f, "false"),
            Formula::Atom(a) => write!(f, "{a}"),
            Formula::Pred(p) => write!(f, "({p})"),
            Formula::Not(x) => write!(f, "!{}", Operand(x, 4)),
            Formula::Next(x) => write!(f, "X {}", Operand(x, 4)),
            Formula::Always(i, x) => {
                write!(f, "G")?;
                write_interval(f, i)?;
                write!(f, " {}", Operand(x, 4))
            }
            Formula::Eventually(i, x) => {
                write!(f, "F")?;
                write_interval(f, i)?;
                write!(f, " {}", Operand(x, 4))
            }
            Formula::And(a, b) => write!(f, "{} & {}", Operand(a, 3), Operand(b, 4)),
            Formula::Or(a, b) => write!(f, "{} | {}", Operand(a, 2), Operand(b, 3)),
            Formula::Until(a, b) => write!(f, "{} U {}", Operand(a, 2), Operand(b, 1)),
            Formula::TimedUntil(i, a, b) => {
                write!(f, "{} U", Operand(a, 2))?;
                write_interval(f, i)?;
                write!(f, " {}", Operand(b, 1))
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn affine_display() {
        let e = AffineExpr::new(vec![1.0, -2.5], -1.0);
        assert_eq!(e.to_string(), "x1 - 2.5*x2 - 1");
        assert_eq!(AffineExpr::constant(0.0).to_string(), "0");
        assert_eq!(AffineExpr::new(vec![0.0, -1.0], 3.0).to_string(), "-x2 + 3");
    }

    #[test]
    fn trailing_zero_coefficients_trimmed() {
        assert_eq!(AffineExpr::new(vec![1.0, 0.0, 0.0], 1.0), AffineExpr::new(vec![1.0], 1.0));
    }

    #[test]
    fn norm_ball_value_and_gradient() {
        let p = Predicate::NormBall {
            terms: vec![AffineExpr::new(vec![1.0], -3.0), AffineExpr::new(vec![0.0, 1.0], -4.0)],
            radius: 1.0,
        };
        assert_eq!(p.value(&[0.0, 0.0]).unwrap(), -4.0);
        let g = p.gradient(&[0.0, 0.0]).unwrap();
        assert!((g[0] - 0.6).abs() < 1e-12 && (g[1] - 0.8).abs() < 1e-12);
    }

    #[test]
    fn depth_counts_leaves_as_one() {
        let f = Formula::until(Formula::atom("p"), Formula::not(Formula::atom("q")));
        assert_eq!(f.depth(), 3);
    }

    #[test]
    fn interval_validation() {
        assert!(Interval::new(2.0, 1.0).is_err());
        assert!(Interval::new(-1.0, 1.0).is_err());
        assert!(Interval::new(0.0, 0.0).is_ok());
    }
}
