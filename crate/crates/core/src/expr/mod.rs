//! Smooth scalar expressions over named real variables.
//!
//! An [`Expression`] is parsed once and is immutable afterwards. It can be
//! evaluated, and differentiated to second order by forward-mode dual
//! numbers: the gradient costs `n` dual evaluations, the Hessian
//! `n(n+1)/2` nested-dual evaluations (only the upper triangle is computed,
//! so the result is symmetric by construction).
//!
//! Only smooth primitives are accepted. Functions such as `abs` or `max`
//! are rejected at parse time.

pub mod dual;
mod parse;
mod print;

use nalgebra::{DMatrix, DVector};
use thiserror::Error;

pub use dual::{Dual, Scalar};

/// Names that look like functions but are not smooth.
pub(crate) const NON_SMOOTH_FUNCTIONS: &[&str] = &[
    "abs", "floor", "ceil", "round", "trunc", "fract", "sign", "signum", "min", "max", "mod",
    "step", "heaviside",
];

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ParseError {
    #[error("syntax error at byte {offset}: {message}")]
    Syntax { offset: usize, message: String },
    #[error("unknown identifier `{name}` at byte {offset}")]
    UnknownIdentifier { name: String, offset: usize },
    #[error("function `{name}` at byte {offset} is not smooth")]
    NonSmoothFunction { name: String, offset: usize },
    #[error("invalid variable list: {0}")]
    InvalidVariables(String),
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum EvalError {
    #[error("domain error in `{subexpr}`: {reason}")]
    Domain { subexpr: String, reason: String },
    #[error("point has {got} coordinates, expression has {expected} variables")]
    Dimension { expected: usize, got: usize },
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum BinOp {
    Add,
    Sub,
    Mul,
    Div,
    Pow,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Func {
    Sin,
    Cos,
    Tan,
    Exp,
    Log,
    Sqrt,
    Sinh,
    Cosh,
    Tanh,
}

impl Func {
    pub const ALL: [Func; 9] = [
        Func::Sin,
        Func::Cos,
        Func::Tan,
        Func::Exp,
        Func::Log,
        Func::Sqrt,
        Func::Sinh,
        Func::Cosh,
        Func::Tanh,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Func::Sin => "sin",
            Func::Cos => "cos",
            Func::Tan => "tan",
            Func::Exp => "exp",
            Func::Log => "log",
            Func::Sqrt => "sqrt",
            Func::Sinh => "sinh",
            Func::Cosh => "cosh",
            Func::Tanh => "tanh",
        }
    }

    pub fn from_name(name: &str) -> Option<Func> {
        Func::ALL.into_iter().find(|f| f.name() == name)
    }
}

/// Expression tree node. Variables are referenced by index.
#[derive(Clone, Debug, PartialEq)]
pub enum Node {
    Num(f64),
    Var(usize),
    Neg(Box<Node>),
    Binary(BinOp, Box<Node>, Box<Node>),
    Call(Func, Box<Node>),
}

impl Node {
    /// Value of a variable-free subtree, if it evaluates cleanly.
    fn constant_value(&self) -> Option<f64> {
        match self {
            Node::Num(v) => Some(*v),
            Node::Var(_) => None,
            Node::Neg(a) => a.constant_value().map(|v| -v),
            Node::Binary(op, a, b) => {
                let (a, b) = (a.constant_value()?, b.constant_value()?);
                let v = match op {
                    BinOp::Add => a + b,
                    BinOp::Sub => a - b,
                    BinOp::Mul => a * b,
                    BinOp::Div => a / b,
                    BinOp::Pow => a.powf(b),
                };
                v.is_finite().then_some(v)
            }
            Node::Call(..) => None,
        }
    }

    fn max_var(&self) -> Option<usize> {
        match self {
            Node::Num(_) => None,
            Node::Var(i) => Some(*i),
            Node::Neg(a) | Node::Call(_, a) => a.max_var(),
            Node::Binary(_, a, b) => match (a.max_var(), b.max_var()) {
                (Some(x), Some(y)) => Some(x.max(y)),
                (x, y) => x.or(y),
            },
        }
    }
}

/// A parsed smooth expression together with its ordered variable list.
#[derive(Clone, Debug, PartialEq)]
pub struct Expression {
    root: Node,
    variables: Vec<String>,
}

fn is_identifier(s: &str) -> bool {
    let mut chars = s.chars();
    matches!(chars.next(), Some(c) if c.is_ascii_alphabetic() || c == '_')
        && chars.all(|c| c.is_ascii_alphanumeric() || c == '_')
}

pub(crate) fn validate_variables<S: AsRef<str>>(variables: &[S]) -> Result<Vec<String>, ParseError> {
    let mut out: Vec<String> = Vec::with_capacity(variables.len());
    for v in variables {
        let v = v.as_ref();
        if !is_identifier(v) {
            return Err(ParseError::InvalidVariables(format!("`{v}` is not an identifier")));
        }
        if Func::from_name(v).is_some() || NON_SMOOTH_FUNCTIONS.contains(&v) {
            return Err(ParseError::InvalidVariables(format!("`{v}` is a reserved function name")));
        }
        if out.iter().any(|o| o == v) {
            return Err(ParseError::InvalidVariables(format!("`{v}` appears twice")));
        }
        out.push(v.to_string());
    }
    Ok(out)
}

impl Expression {
    /// Parses `source` over the given ordered variable names.
    ///
    /// ```
    /// use scfdesign::expr::Expression;
    /// let e = Expression::parse("x*y + sin(z)", &["x", "y", "z"]).unwrap();
    /// assert_eq!(e.evaluate(&[2.0, 3.0, 0.0]).unwrap(), 6.0);
    /// ```
    pub fn parse<S: AsRef<str>>(source: &str, variables: &[S]) -> Result<Self, ParseError> {
        let variables = validate_variables(variables)?;
        let root = parse::parse_node(source, &variables)?;
        Ok(Expression { root, variables })
    }

    /// Builds an expression from an already-constructed tree.
    pub fn from_node(root: Node, variables: Vec<String>) -> Result<Self, ParseError> {
        let variables = validate_variables(&variables)?;
        if let Some(i) = root.max_var() {
            if i >= variables.len() {
                return Err(ParseError::InvalidVariables(format!(
                    "tree references variable #{i} but only {} are declared",
                    variables.len()
                )));
            }
        }
        Ok(Expression { root, variables })
    }

    pub fn root(&self) -> &Node {
        &self.root
    }

    pub fn variables(&self) -> &[String] {
        &self.variables
    }

    pub fn dim(&self) -> usize {
        self.variables.len()
    }

    fn check_dim(&self, got: usize) -> Result<(), EvalError> {
        if got != self.dim() {
            return Err(EvalError::Dimension { expected: self.dim(), got });
        }
        Ok(())
    }

    pub fn evaluate(&self, p: &[f64]) -> Result<f64, EvalError> {
        self.check_dim(p.len())?;
        self.eval_generic(p)
    }

    /// Evaluates over any [`Scalar`] type (plain floats or dual numbers).
    pub fn eval_generic<T: Scalar>(&self, p: &[T]) -> Result<T, EvalError> {
        self.check_dim(p.len())?;
        self.eval_node(&self.root, p)
    }

    pub fn gradient(&self, p: &[f64]) -> Result<DVector<f64>, EvalError> {
        self.value_and_gradient(p).map(|(_, g)| g)
    }

    pub fn value_and_gradient(&self, p: &[f64]) -> Result<(f64, DVector<f64>), EvalError> {
        self.check_dim(p.len())?;
        let n = p.len();
        let mut grad = DVector::zeros(n);
        let mut value = self.evaluate(p)?;
        let mut xs: Vec<Dual<f64>> = p.iter().map(|&v| Dual::new(v, 0.0)).collect();
        for i in 0..n {
            xs[i].eps = 1.0;
            let r = self.eval_node(&self.root, &xs)?;
            xs[i].eps = 0.0;
            grad[i] = r.eps;
            value = r.re;
        }
        Ok((value, grad))
    }

    pub fn hessian(&self, p: &[f64]) -> Result<DMatrix<f64>, EvalError> {
        self.check_dim(p.len())?;
        let n = p.len();
        let mut h = DMatrix::zeros(n, n);
        let zero = Dual::new(0.0, 0.0);
        let mut xs: Vec<Dual<Dual<f64>>> =
            p.iter().map(|&v| Dual::new(Dual::new(v, 0.0), zero)).collect();
        for i in 0..n {
            xs[i].re.eps = 1.0;
            for j in i..n {
                xs[j].eps.re = 1.0;
                let r = self.eval_node(&self.root, &xs)?;
                xs[j].eps.re = 0.0;
                h[(i, j)] = r.eps.eps;
                h[(j, i)] = r.eps.eps;
            }
            xs[i].re.eps = 0.0;
        }
        Ok(h)
    }

    fn domain_error(&self, node: &Node, reason: impl Into<String>) -> EvalError {
        EvalError::Domain {
            subexpr: print::NodeDisplay::new(node, &self.variables).to_string(),
            reason: reason.into(),
        }
    }

    fn eval_node<T: Scalar>(&self, node: &Node, x: &[T]) -> Result<T, EvalError> {
        let v = match node {
            Node::Num(v) => T::constant(*v),
            Node::Var(i) => x[*i],
            Node::Neg(a) => -self.eval_node(a, x)?,
            Node::Binary(op, a, b) => {
                let lhs = self.eval_node(a, x)?;
                match op {
                    BinOp::Add => lhs + self.eval_node(b, x)?,
                    BinOp::Sub => lhs - self.eval_node(b, x)?,
                    BinOp::Mul => lhs * self.eval_node(b, x)?,
                    BinOp::Div => {
                        let rhs = self.eval_node(b, x)?;
                        if rhs.re() == 0.0 {
                            return Err(self.domain_error(node, "division by zero"));
                        }
                        lhs / rhs
                    }
                    BinOp::Pow => self.eval_pow(node, lhs, b, x)?,
                }
            }
            Node::Call(f, a) => {
                let arg = self.eval_node(a, x)?;
                match f {
                    Func::Sin => arg.sin(),
                    Func::Cos => arg.cos(),
                    Func::Tan => arg.tan(),
                    Func::Exp => arg.exp(),
                    Func::Log => {
                        if arg.re() <= 0.0 {
                            return Err(self.domain_error(node, "log of a nonpositive argument"));
                        }
                        arg.ln()
                    }
                    Func::Sqrt => {
                        if arg.re() <= 0.0 {
                            return Err(self.domain_error(node, "sqrt of a nonpositive argument"));
                        }
                        arg.sqrt()
                    }
                    Func::Sinh => arg.sinh(),
                    Func::Cosh => arg.cosh(),
                    Func::Tanh => arg.tanh(),
                }
            }
        };
        if !v.is_finite() {
            return Err(self.domain_error(node, "non-finite result"));
        }
        Ok(v)
    }

    fn eval_pow<T: Scalar>(&self, node: &Node, base: T, exponent: &Node, x: &[T]) -> Result<T, EvalError> {
        // Integer exponents go through repeated products so that x^k is
        // differentiable at x = 0.
        if let Some(k) = exponent.constant_value() {
            if k.fract() == 0.0 && k.abs() <= f64::from(u32::MAX) {
                let k_abs = k.abs() as u32;
                if k >= 0.0 {
                    return Ok(powi(base, k_abs));
                }
                if base.re() == 0.0 {
                    return Err(self.domain_error(node, "negative power of zero"));
                }
                return Ok(T::constant(1.0) / powi(base, k_abs));
            }
        }
        let e = self.eval_node(exponent, x)?;
        if base.re() <= 0.0 {
            return Err(self.domain_error(node, "non-integer power of a nonpositive base"));
        }
        Ok((e * base.ln()).exp())
    }
}

fn powi<T: Scalar>(x: T, mut k: u32) -> T {
    let mut acc = T::constant(1.0);
    let mut b = x;
    while k > 0 {
        if k & 1 == 1 {
            acc = acc * b;
        }
        k >>= 1;
        if k > 0 {
            b = b * b;
        }
    }
    acc
}

impl std::fmt::Display for Expression {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        print::NodeDisplay::new(&self.root, &self.variables).fmt(f)
    }
}
