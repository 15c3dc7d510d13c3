//! Printing with minimal parentheses. Output always reparses to a tree
//! that evaluates bit-for-bit identically.

use std::fmt;

use super::{BinOp, Node};

const ATOM: u8 = 5;
const UNARY: u8 = 4;
const POW: u8 = 3;
const MUL: u8 = 2;
const ADD: u8 = 1;

fn precedence(node: &Node) -> u8 {
    match node {
        Node::Num(v) if v.is_sign_negative() => UNARY,
        Node::Num(_) | Node::Var(_) | Node::Call(..) => ATOM,
        Node::Neg(_) => UNARY,
        Node::Binary(BinOp::Pow, ..) => POW,
        Node::Binary(BinOp::Mul | BinOp::Div, ..) => MUL,
        Node::Binary(BinOp::Add | BinOp::Sub, ..) => ADD,
    }
}

fn write_number(f: &mut fmt::Formatter<'_>, v: f64) -> fmt::Result {
    let a = v.abs();
    if a == 0.0 || (1e-5..1e16).contains(&a) {
        write!(f, "{v}")
    } else {
        write!(f, "{v:e}")
    }
}

pub(crate) struct NodeDisplay<'a> {
    node: &'a Node,
    vars: &'a [String],
}

impl<'a> NodeDisplay<'a> {
    pub(crate) fn new(node: &'a Node, vars: &'a [String]) -> Self {
        NodeDisplay { node, vars }
    }

    fn child(&self, node: &'a Node, min_prec: u8, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let inner = NodeDisplay::new(node, self.vars);
        if precedence(node) < min_prec {
            write!(f, "({inner})")
        } else {
            write!(f, "{inner}")
        }
    }
}

impl fmt::Display for NodeDisplay<'_> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.node {
            Node::Num(v) => write_number(f, *v),
            Node::Var(i) => match self.vars.get(*i) {
                Some(name) => f.write_str(name),
                None => write!(f, "#{i}"),
            },
            Node::Neg(a) => {
                f.write_str("-")?;
                self.child(a, UNARY, f)
            }
            Node::Call(func, a) => write!(f, "{}({})", func.name(), NodeDisplay::new(a, self.vars)),
            Node::Binary(op, a, b) => {
                let (sym, prec) = match op {
                    BinOp::Add => (" + ", ADD),
                    BinOp::Sub => (" - ", ADD),
                    BinOp::Mul => ("*", MUL),
                    BinOp::Div => ("/", MUL),
                    BinOp::Pow => ("^", POW),
                };
                if *op == BinOp::Pow {
                    // right-associative; the base must be an atom
                    self.child(a, ATOM, f)?;
                    f.write_str(sym)?;
                    self.child(b, POW, f)
                } else {
                    self.child(a, prec, f)?;
                    f.write_str(sym)?;
                    self.child(b, prec + 1, f)
                }
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use crate::expr::Expression;

    #[test]
    fn prints_compactly() {
        let vars = ["x", "y", "z"];
        let cases = [
            ("(x^2+y^2+z^2+3)^2 - 16*(x^2+y^2)", "(x^2 + y^2 + z^2 + 3)^2 - 16*(x^2 + y^2)"),
            ("x - (y - z)", "x - (y - z)"),
            ("(x - y) - z", "x - y - z"),
            ("x / (y * z)", "x/(y*z)"),
            ("2^3^x", "2^3^x"),
            ("(2^3)^x", "(2^3)^x"),
            ("-(x^2)", "-(x^2)"),
            ("-x^2", "(-x)^2"),
            ("sin(x + 1e-12)", "sin(x + 1e-12)"),
        ];
        for (src, want) in cases {
            assert_eq!(Expression::parse(src, &vars).unwrap().to_string(), want, "{src}");
        }
    }
}
