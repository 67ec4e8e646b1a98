//! Register-based evaluation of expression trees.
//!
//! Compilation hash-conses structurally equal subtrees, so the repeated
//! factors that symbolic differentiation produces are evaluated once. One
//! program can serve several roots (an expression and its derivatives).

use std::collections::HashMap;

use super::{bern, powf, Node};

const INLINE_REGS: usize = 256;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
enum Op {
    Const(u64),
    Var,
    Neg(u32),
    Add(u32, u32),
    Sub(u32, u32),
    Mul(u32, u32),
    Div(u32, u32),
    Pow(u32, u64),
    Exp(u32),
    Tanh(u32),
    Bern(u32, u32),
}

#[derive(Debug)]
pub(crate) struct Program {
    ops: Vec<Op>,
    outputs: Vec<u32>,
}

struct Builder {
    ops: Vec<Op>,
    index: HashMap<Op, u32>,
}

impl Builder {
    fn push(&mut self, op: Op) -> u32 {
        if let Some(&r) = self.index.get(&op) {
            return r;
        }
        let r = self.ops.len() as u32;
        self.ops.push(op);
        self.index.insert(op, r);
        r
    }

    fn emit(&mut self, node: &Node) -> u32 {
        let op = match node {
            Node::Const(c) => Op::Const(c.to_bits()),
            Node::Var => Op::Var,
            Node::Neg(a) => Op::Neg(self.emit(a)),
            Node::Exp(a) => Op::Exp(self.emit(a)),
            Node::Tanh(a) => Op::Tanh(self.emit(a)),
            Node::Pow(a, p) => Op::Pow(self.emit(a), p.to_bits()),
            Node::Bern(k, a) => Op::Bern(*k, self.emit(a)),
            Node::Add(a, b) => Op::Add(self.emit(a), self.emit(b)),
            Node::Sub(a, b) => Op::Sub(self.emit(a), self.emit(b)),
            Node::Mul(a, b) => Op::Mul(self.emit(a), self.emit(b)),
            Node::Div(a, b) => Op::Div(self.emit(a), self.emit(b)),
        };
        self.push(op)
    }
}

impl Program {
    pub(crate) fn compile(roots: &[&Node]) -> Self {
        let mut b = Builder {
            ops: Vec::new(),
            index: HashMap::new(),
        };
        let outputs = roots.iter().map(|r| b.emit(r)).collect();
        Program { ops: b.ops, outputs }
    }

    #[inline]
    fn exec(&self, v: f64, regs: &mut [f64]) {
        for (i, op) in self.ops.iter().enumerate() {
            let r = |k: u32| regs[k as usize];
            regs[i] = match *op {
                Op::Const(c) => f64::from_bits(c),
                Op::Var => v,
                Op::Neg(a) => -r(a),
                Op::Add(a, b) => r(a) + r(b),
                Op::Sub(a, b) => r(a) - r(b),
                Op::Mul(a, b) => r(a) * r(b),
                Op::Div(a, b) => r(a) / r(b),
                Op::Pow(a, p) => powf(r(a), f64::from_bits(p)),
                Op::Exp(a) => r(a).exp(),
                Op::Tanh(a) => r(a).tanh(),
                Op::Bern(k, a) => bern(k, r(a)),
            };
        }
    }

    /// Evaluates every root, writing them to `out` in order.
    #[inline]
    pub(crate) fn run_into(&self, v: f64, out: &mut [f64]) {
        let n = self.ops.len();
        if n <= INLINE_REGS {
            let mut regs = [0.0f64; INLINE_REGS];
            self.exec(v, &mut regs[..n]);
            for (o, &r) in out.iter_mut().zip(&self.outputs) {
                *o = regs[r as usize];
            }
        } else {
            let mut regs = vec![0.0f64; n];
            self.exec(v, &mut regs);
            for (o, &r) in out.iter_mut().zip(&self.outputs) {
                *o = regs[r as usize];
            }
        }
    }

    /// Value of the first root.
    #[inline]
    pub(crate) fn run(&self, v: f64) -> f64 {
        let mut out = [0.0];
        self.run_into(v, &mut out);
        out[0]
    }

    pub(crate) fn len(&self) -> usize {
        self.ops.len()
    }
}
