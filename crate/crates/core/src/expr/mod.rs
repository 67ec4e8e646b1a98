//! Scalar kinetic expressions of the membrane voltage `V`.
//!
//! Steady-state activations, time constants and rate constants are written
//! as small infix expressions (see `docs/grammar.md`). Parsing produces an
//! immutable tree that can be evaluated, printed back to parseable text and
//! differentiated symbolically any number of times.
//!
//! Quotients of the form `c (V - a) / (exp(s (V - a)) - 1)` (and the
//! `1 - exp(..)` variant) are recognised when they are built and stored as
//! `bern(s (V - a))`, where `bern(x) = x / (exp(x) - 1)`. This keeps the
//! removable singularity at `V = a` finite for the value and every
//! derivative.

mod bernoulli;
mod parse;
mod program;

use std::fmt;
use std::str::FromStr;
use std::sync::Arc;

use serde::{Deserialize, Deserializer, Serialize, Serializer};
use thiserror::Error;

pub use bernoulli::bern;
use program::Program;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ExprError {
    #[error("syntax error at byte {position}: {message}")]
    Syntax { position: usize, message: String },
    #[error("unknown identifier `{name}` at byte {position}")]
    UnknownIdentifier { name: String, position: usize },
    #[error("expression is not finite at V = {v}")]
    NonFinite { v: f64 },
}

/// Expression tree node.
#[derive(Debug, Clone, PartialEq)]
pub enum Node {
    Const(f64),
    Var,
    Neg(Box<Node>),
    Add(Box<Node>, Box<Node>),
    Sub(Box<Node>, Box<Node>),
    Mul(Box<Node>, Box<Node>),
    Div(Box<Node>, Box<Node>),
    /// Power with a constant exponent.
    Pow(Box<Node>, f64),
    Exp(Box<Node>),
    Tanh(Box<Node>),
    /// k-th derivative of `x / (exp(x) - 1)` applied to the child.
    Bern(u32, Box<Node>),
}

impl Node {
    fn as_const(&self) -> Option<f64> {
        match self {
            Node::Const(c) => Some(*c),
            _ => None,
        }
    }

    pub fn constant(c: f64) -> Node {
        Node::Const(c)
    }

    pub fn neg(a: Node) -> Node {
        match a {
            Node::Const(c) => Node::Const(-c),
            Node::Neg(inner) => *inner,
            other => Node::Neg(Box::new(other)),
        }
    }

    pub fn add(a: Node, b: Node) -> Node {
        match (a.as_const(), b.as_const()) {
            (Some(x), Some(y)) => Node::Const(x + y),
            (Some(x), _) if x == 0.0 => b,
            (_, Some(y)) if y == 0.0 => a,
            _ => Node::Add(Box::new(a), Box::new(b)),
        }
    }

    pub fn sub(a: Node, b: Node) -> Node {
        match (a.as_const(), b.as_const()) {
            (Some(x), Some(y)) => Node::Const(x - y),
            (Some(x), _) if x == 0.0 => Node::neg(b),
            (_, Some(y)) if y == 0.0 => a,
            _ => Node::Sub(Box::new(a), Box::new(b)),
        }
    }

    pub fn mul(a: Node, b: Node) -> Node {
        match (a.as_const(), b.as_const()) {
            (Some(x), Some(y)) => Node::Const(x * y),
            (Some(x), _) | (_, Some(x)) if x == 0.0 => Node::Const(0.0),
            (Some(x), _) if x == 1.0 => b,
            (_, Some(y)) if y == 1.0 => a,
            (Some(x), _) if x == -1.0 => Node::neg(b),
            (_, Some(y)) if y == -1.0 => Node::neg(a),
            _ => Node::Mul(Box::new(a), Box::new(b)),
        }
    }

    pub fn div(a: Node, b: Node) -> Node {
        match (a.as_const(), b.as_const()) {
            (Some(x), Some(y)) if y != 0.0 => return Node::Const(x / y),
            (Some(x), _) if x == 0.0 => return Node::Const(0.0),
            (_, Some(y)) if y == 1.0 => return a,
            _ => {}
        }
        if let Some(rewritten) = removable_quotient(&a, &b) {
            return rewritten;
        }
        Node::Div(Box::new(a), Box::new(b))
    }

    pub fn pow(a: Node, p: f64) -> Node {
        if p == 0.0 {
            return Node::Const(1.0);
        }
        if p == 1.0 {
            return a;
        }
        match a {
            Node::Const(c) => Node::Const(c.powf(p)),
            other => Node::Pow(Box::new(other), p),
        }
    }

    pub fn exp(a: Node) -> Node {
        match a {
            Node::Const(c) => Node::Const(c.exp()),
            other => Node::Exp(Box::new(other)),
        }
    }

    pub fn tanh(a: Node) -> Node {
        match a {
            Node::Const(c) => Node::Const(c.tanh()),
            other => Node::Tanh(Box::new(other)),
        }
    }

    pub fn bern(k: u32, a: Node) -> Node {
        match a {
            Node::Const(c) => Node::Const(bern(k, c)),
            other => Node::Bern(k, Box::new(other)),
        }
    }

    /// Symbolic derivative with respect to `V`.
    pub fn derivative(&self) -> Node {
        use Node::*;
        match self {
            Const(_) => Const(0.0),
            Var => Const(1.0),
            Neg(a) => Node::neg(a.derivative()),
            Add(a, b) => Node::add(a.derivative(), b.derivative()),
            Sub(a, b) => Node::sub(a.derivative(), b.derivative()),
            Mul(a, b) => Node::add(
                Node::mul(a.derivative(), (**b).clone()),
                Node::mul((**a).clone(), b.derivative()),
            ),
            Div(a, b) => {
                // a'/b - a b' / b^2
                let first = Node::div(a.derivative(), (**b).clone());
                let db = b.derivative();
                if db.as_const() == Some(0.0) {
                    return first;
                }
                Node::sub(
                    first,
                    Node::div(Node::mul((**a).clone(), db), Node::pow((**b).clone(), 2.0)),
                )
            }
            Pow(a, p) => Node::mul(
                Node::mul(Node::Const(*p), Node::pow((**a).clone(), p - 1.0)),
                a.derivative(),
            ),
            Exp(a) => Node::mul(self.clone(), a.derivative()),
            Tanh(a) => Node::mul(
                Node::sub(Node::Const(1.0), Node::pow(self.clone(), 2.0)),
                a.derivative(),
            ),
            Bern(k, a) => Node::mul(Node::bern(k + 1, (**a).clone()), a.derivative()),
        }
    }

    /// Direct recursive evaluation.
    pub fn eval(&self, v: f64) -> f64 {
        use Node::*;
        match self {
            Const(c) => *c,
            Var => v,
            Neg(a) => -a.eval(v),
            Add(a, b) => a.eval(v) + b.eval(v),
            Sub(a, b) => a.eval(v) - b.eval(v),
            Mul(a, b) => a.eval(v) * b.eval(v),
            Div(a, b) => a.eval(v) / b.eval(v),
            Pow(a, p) => powf(a.eval(v), *p),
            Exp(a) => a.eval(v).exp(),
            Tanh(a) => a.eval(v).tanh(),
            Bern(k, a) => bern(*k, a.eval(v)),
        }
    }

    /// `(slope, intercept)` if the node is affine in `V`.
    fn affine(&self) -> Option<(f64, f64)> {
        use Node::*;
        match self {
            Const(c) => Some((0.0, *c)),
            Var => Some((1.0, 0.0)),
            Neg(a) => a.affine().map(|(s, i)| (-s, -i)),
            Add(a, b) => {
                let (s1, i1) = a.affine()?;
                let (s2, i2) = b.affine()?;
                Some((s1 + s2, i1 + i2))
            }
            Sub(a, b) => {
                let (s1, i1) = a.affine()?;
                let (s2, i2) = b.affine()?;
                Some((s1 - s2, i1 - i2))
            }
            Mul(a, b) => {
                let (s1, i1) = a.affine()?;
                let (s2, i2) = b.affine()?;
                if s1 == 0.0 {
                    Some((i1 * s2, i1 * i2))
                } else if s2 == 0.0 {
                    Some((s1 * i2, i1 * i2))
                } else {
                    None
                }
            }
            Div(a, b) => {
                let (s1, i1) = a.affine()?;
                let (s2, i2) = b.affine()?;
                (s2 == 0.0 && i2 != 0.0).then(|| (s1 / i2, i1 / i2))
            }
            _ => None,
        }
    }

    /// Matches `±(exp(L) - 1)` and returns the sign and `L`.
    fn exp_minus_one(&self) -> Option<(f64, &Node)> {
        use Node::*;
        match self {
            Sub(a, b) => match (&**a, b.as_const()) {
                (Exp(l), Some(c)) if c == 1.0 => Some((1.0, l)),
                _ => match (a.as_const(), &**b) {
                    (Some(c), Exp(l)) if c == 1.0 => Some((-1.0, l)),
                    _ => None,
                },
            },
            Add(a, b) => match (&**a, &**b) {
                (Exp(l), Const(c)) | (Const(c), Exp(l)) if *c == -1.0 => Some((1.0, l)),
                _ => None,
            },
            Neg(a) => a.exp_minus_one().map(|(s, l)| (-s, l)),
            _ => None,
        }
    }
}

fn powf(x: f64, p: f64) -> f64 {
    if p.fract() == 0.0 && p.abs() <= 64.0 {
        x.powi(p as i32)
    } else {
        x.powf(p)
    }
}

/// Rewrites `N / (±(exp(L) - 1))` into `k * bern(L)` when `N` and `L` are
/// affine in `V` with a common root.
fn removable_quotient(num: &Node, den: &Node) -> Option<Node> {
    let (sign, arg) = den.exp_minus_one()?;
    let (sn, in_) = num.affine()?;
    let (sl, il) = arg.affine()?;
    if sn == 0.0 || sl == 0.0 {
        return None;
    }
    let root_n = -in_ / sn;
    let root_l = -il / sl;
    if (root_n - root_l).abs() > 1e-12 * root_n.abs().max(1.0) {
        return None;
    }
    Some(Node::mul(
        Node::Const(sign * sn / sl),
        Node::bern(0, arg.clone()),
    ))
}

fn fmt_const(c: f64, f: &mut fmt::Formatter<'_>) -> fmt::Result {
    if c < 0.0 || (c == 0.0 && c.is_sign_negative()) {
        write!(f, "({c:?})")
    } else {
        write!(f, "{c:?}")
    }
}

impl fmt::Display for Node {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        use Node::*;
        match self {
            Const(c) => fmt_const(*c, f),
            Var => write!(f, "V"),
            Neg(a) => write!(f, "(-{a})"),
            Add(a, b) => write!(f, "({a}+{b})"),
            Sub(a, b) => write!(f, "({a}-{b})"),
            Mul(a, b) => write!(f, "({a}*{b})"),
            Div(a, b) => write!(f, "({a}/{b})"),
            Pow(a, p) => {
                write!(f, "({a}^")?;
                fmt_const(*p, f)?;
                write!(f, ")")
            }
            Exp(a) => write!(f, "exp({a})"),
            Tanh(a) => write!(f, "tanh({a})"),
            Bern(0, a) => write!(f, "bern({a})"),
            Bern(k, a) => write!(f, "bern_d{k}({a})"),
        }
    }
}

/// An immutable kinetic expression with a compiled evaluator.
#[derive(Clone)]
pub struct KineticExpr {
    root: Arc<Node>,
    program: Arc<Program>,
}

impl KineticExpr {
    pub fn from_node(root: Node) -> Self {
        let program = Program::compile(&[&root]);
        KineticExpr {
            root: Arc::new(root),
            program: Arc::new(program),
        }
    }

    pub fn parse(text: &str) -> Result<Self, ExprError> {
        parse::parse(text).map(Self::from_node)
    }

    pub fn constant(c: f64) -> Self {
        Self::from_node(Node::Const(c))
    }

    pub fn node(&self) -> &Node {
        &self.root
    }

    /// Constant value, if the expression does not depend on `V`.
    pub fn as_constant(&self) -> Option<f64> {
        self.root.as_const()
    }

    /// Evaluates without a finiteness check.
    #[inline]
    pub fn value(&self, v: f64) -> f64 {
        self.program.run(v)
    }

    pub fn eval(&self, v: f64) -> Result<f64, ExprError> {
        let y = self.value(v);
        if y.is_finite() {
            Ok(y)
        } else {
            Err(ExprError::NonFinite { v })
        }
    }

    pub fn derivative(&self) -> Self {
        Self::from_node(self.root.derivative())
    }

    /// Number of distinct operations after common-subexpression sharing.
    pub fn op_count(&self) -> usize {
        self.program.len()
    }

    /// Compiles the expression together with its first two derivatives into
    /// one evaluator that shares their common subexpressions.
    pub fn jet_evaluator(&self) -> JetEvaluator {
        let d1 = self.root.derivative();
        let d2 = d1.derivative();
        JetEvaluator {
            program: Arc::new(Program::compile(&[&self.root, &d1, &d2])),
        }
    }

    /// Derivative of the given order (0 returns a clone).
    pub fn diff(&self, order: u32) -> Self {
        (0..order).fold(self.clone(), |e, _| e.derivative())
    }
}

/// Value, first and second derivative of an expression in one pass.
#[derive(Clone)]
pub struct JetEvaluator {
    program: Arc<Program>,
}

impl JetEvaluator {
    #[inline]
    pub fn eval(&self, v: f64) -> [f64; 3] {
        let mut out = [0.0; 3];
        self.program.run_into(v, &mut out);
        out
    }
}

impl fmt::Debug for JetEvaluator {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "JetEvaluator({} ops)", self.program.len())
    }
}

impl fmt::Debug for KineticExpr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "KineticExpr({})", self.root)
    }
}

impl fmt::Display for KineticExpr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        self.root.fmt(f)
    }
}

impl PartialEq for KineticExpr {
    fn eq(&self, other: &Self) -> bool {
        self.root == other.root
    }
}

impl FromStr for KineticExpr {
    type Err = ExprError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Self::parse(s)
    }
}

impl Serialize for KineticExpr {
    fn serialize<S: Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        serializer.serialize_str(&self.to_string())
    }
}

impl<'de> Deserialize<'de> for KineticExpr {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        let text = String::deserialize(deserializer)?;
        KineticExpr::parse(&text).map_err(serde::de::Error::custom)
    }
}

/// Parses an expression string.
pub fn parse_expr(text: &str) -> Result<KineticExpr, ExprError> {
    KineticExpr::parse(text)
}

/// Evaluates an expression at `v` mV.
pub fn eval_expr(e: &KineticExpr, v: f64) -> Result<f64, ExprError> {
    e.eval(v)
}

/// Symbolic derivative of the given order.
pub fn diff_expr(e: &KineticExpr, order: u32) -> KineticExpr {
    e.diff(order)
}
