#![allow(dead_code)]

use std::path::PathBuf;

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use scfdesign::expr::{BinOp, Func, Node};
use scfdesign::{ConstraintProblem, Expression};

pub const VARS: [&str; 3] = ["x", "y", "z"];

pub fn fixture(name: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("fixtures").join(name)
}

pub fn load(name: &str) -> ConstraintProblem {
    let text = std::fs::read_to_string(fixture(name)).unwrap();
    ConstraintProblem::from_json_str(&text).unwrap()
}

pub fn sphere(objective: &str, c: Option<f64>) -> ConstraintProblem {
    ConstraintProblem::new(&VARS, &[("x^2 + y^2 + z^2", 1.0)], objective, c)
        .unwrap()
        .with_bounds(vec![(-2.0, 2.0); 3])
        .unwrap()
}

/// Random expression in x, y, z built only from operations that are smooth
/// and finite on all of ℝ³, so every point is in the domain.
pub fn smooth_expression<R: Rng>(rng: &mut R, depth: usize) -> Node {
    if depth == 0 || rng.gen_bool(0.25) {
        return if rng.gen_bool(0.7) {
            Node::Var(rng.gen_range(0..3))
        } else {
            Node::Num((rng.gen_range(-2.0..2.0f64) * 100.0).round() / 100.0)
        };
    }
    let sub = |rng: &mut R| Box::new(smooth_expression(rng, depth - 1));
    match rng.gen_range(0..9) {
        0 => Node::Binary(BinOp::Add, sub(rng), sub(rng)),
        1 => Node::Binary(BinOp::Sub, sub(rng), sub(rng)),
        2 | 3 => Node::Binary(BinOp::Mul, sub(rng), sub(rng)),
        4 => Node::Binary(BinOp::Pow, sub(rng), Box::new(Node::Num(rng.gen_range(2..4) as f64))),
        // a / (1.5 + b²) never divides by zero
        5 => {
            let den = Node::Binary(
                BinOp::Add,
                Box::new(Node::Num(1.5)),
                Box::new(Node::Binary(BinOp::Pow, sub(rng), Box::new(Node::Num(2.0)))),
            );
            Node::Binary(BinOp::Div, sub(rng), Box::new(den))
        }
        6 => Node::Neg(sub(rng)),
        _ => {
            let f = [Func::Sin, Func::Cos, Func::Tanh, Func::Exp, Func::Sinh, Func::Cosh][rng.gen_range(0..6)];
            let arg = if matches!(f, Func::Exp | Func::Sinh | Func::Cosh) {
                // keep growth moderate
                Node::Call(Func::Sin, sub(rng))
            } else {
                *sub(rng)
            };
            Node::Call(f, Box::new(arg))
        }
    }
}

pub fn expression(node: Node) -> Expression {
    Expression::from_node(node, VARS.iter().map(|s| s.to_string()).collect()).unwrap()
}

/// Central differences of the value.
pub fn fd_gradient(e: &Expression, p: &[f64], h: f64) -> DVector<f64> {
    DVector::from_iterator(
        p.len(),
        (0..p.len()).map(|i| {
            let (mut a, mut b) = (p.to_vec(), p.to_vec());
            a[i] += h;
            b[i] -= h;
            (e.evaluate(&a).unwrap() - e.evaluate(&b).unwrap()) / (2.0 * h)
        }),
    )
}

/// Central differences of the AD gradient.
pub fn fd_hessian(e: &Expression, p: &[f64], h: f64) -> DMatrix<f64> {
    let n = p.len();
    let mut m = DMatrix::zeros(n, n);
    for j in 0..n {
        let (mut a, mut b) = (p.to_vec(), p.to_vec());
        a[j] += h;
        b[j] -= h;
        let col = (e.gradient(&a).unwrap() - e.gradient(&b).unwrap()) / (2.0 * h);
        m.set_column(j, &col);
    }
    m
}

/// `‖got − want‖∞ / max(‖got‖∞, 1)`
pub fn rel_err(got: &[f64], want: &[f64]) -> f64 {
    let diff = got.iter().zip(want).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
    let scale = got.iter().map(|a| a.abs()).fold(1.0, f64::max);
    diff / scale
}
