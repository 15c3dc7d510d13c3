//! Recursive-descent parser for the expression grammar.
//!
//! ```text
//! expr   := term (("+" | "-") term)*
//! term   := factor (("*" | "/") factor)*
//! factor := unary ("^" factor)?
//! unary  := "-" unary | atom
//! atom   := NUMBER | IDENT | IDENT "(" expr ")" | "(" expr ")"
//! ```
//!
//! `-` may also be written as U+2212 (`−`). Note that unary minus binds
//! tighter than `^`, so `-x^2` means `(-x)^2`.

use super::{BinOp, Func, Node, ParseError, NON_SMOOTH_FUNCTIONS};

#[derive(Clone, Debug, PartialEq)]
enum Tok {
    Num(f64),
    Ident(String),
    Plus,
    Minus,
    Star,
    Slash,
    Caret,
    LParen,
    RParen,
}

#[derive(Clone, Debug)]
struct Token {
    tok: Tok,
    offset: usize,
}

fn lex(src: &str) -> Result<Vec<Token>, ParseError> {
    let bytes = src.as_bytes();
    let mut out = Vec::new();
    let mut i = 0;
    while i < bytes.len() {
        let c = bytes[i];
        let start = i;
        match c {
            b' ' | b'\t' | b'\n' | b'\r' => {
                i += 1;
                continue;
            }
            b'+' => out.push(Token { tok: Tok::Plus, offset: start }),
            b'-' => out.push(Token { tok: Tok::Minus, offset: start }),
            b'*' => out.push(Token { tok: Tok::Star, offset: start }),
            b'/' => out.push(Token { tok: Tok::Slash, offset: start }),
            b'^' => out.push(Token { tok: Tok::Caret, offset: start }),
            b'(' => out.push(Token { tok: Tok::LParen, offset: start }),
            b')' => out.push(Token { tok: Tok::RParen, offset: start }),
            b'0'..=b'9' | b'.' => {
                while i < bytes.len() && bytes[i].is_ascii_digit() {
                    i += 1;
                }
                if i < bytes.len() && bytes[i] == b'.' {
                    i += 1;
                    while i < bytes.len() && bytes[i].is_ascii_digit() {
                        i += 1;
                    }
                }
                if i < bytes.len() && (bytes[i] == b'e' || bytes[i] == b'E') {
                    let mut j = i + 1;
                    if j < bytes.len() && (bytes[j] == b'+' || bytes[j] == b'-') {
                        j += 1;
                    }
                    if j < bytes.len() && bytes[j].is_ascii_digit() {
                        while j < bytes.len() && bytes[j].is_ascii_digit() {
                            j += 1;
                        }
                        i = j;
                    }
                }
                let text = &src[start..i];
                let value: f64 = text.parse().map_err(|_| ParseError::Syntax {
                    offset: start,
                    message: format!("malformed number `{text}`"),
                })?;
                if !value.is_finite() {
                    return Err(ParseError::Syntax {
                        offset: start,
                        message: format!("number `{text}` is out of range"),
                    });
                }
                out.push(Token { tok: Tok::Num(value), offset: start });
                continue;
            }
            c if c.is_ascii_alphabetic() || c == b'_' => {
                while i < bytes.len() && (bytes[i].is_ascii_alphanumeric() || bytes[i] == b'_') {
                    i += 1;
                }
                out.push(Token { tok: Tok::Ident(src[start..i].to_string()), offset: start });
                continue;
            }
            _ => {
                let ch = src[start..].chars().next().unwrap_or('\u{fffd}');
                if ch == '\u{2212}' {
                    out.push(Token { tok: Tok::Minus, offset: start });
                    i += ch.len_utf8();
                    continue;
                }
                return Err(ParseError::Syntax {
                    offset: start,
                    message: format!("unexpected character `{ch}`"),
                });
            }
        }
        i += 1;
    }
    Ok(out)
}

struct Parser<'a> {
    tokens: Vec<Token>,
    pos: usize,
    end: usize,
    variables: &'a [String],
}

impl Parser<'_> {
    fn peek(&self) -> Option<&Tok> {
        self.tokens.get(self.pos).map(|t| &t.tok)
    }

    fn offset(&self) -> usize {
        self.tokens.get(self.pos).map_or(self.end, |t| t.offset)
    }

    fn bump(&mut self) -> Option<Token> {
        let t = self.tokens.get(self.pos).cloned();
        self.pos += 1;
        t
    }

    fn expr(&mut self) -> Result<Node, ParseError> {
        let mut lhs = self.term()?;
        loop {
            let op = match self.peek() {
                Some(Tok::Plus) => BinOp::Add,
                Some(Tok::Minus) => BinOp::Sub,
                _ => return Ok(lhs),
            };
            self.bump();
            let rhs = self.term()?;
            lhs = Node::Binary(op, Box::new(lhs), Box::new(rhs));
        }
    }

    fn term(&mut self) -> Result<Node, ParseError> {
        let mut lhs = self.factor()?;
        loop {
            let op = match self.peek() {
                Some(Tok::Star) => BinOp::Mul,
                Some(Tok::Slash) => BinOp::Div,
                _ => return Ok(lhs),
            };
            self.bump();
            let rhs = self.factor()?;
            lhs = Node::Binary(op, Box::new(lhs), Box::new(rhs));
        }
    }

    fn factor(&mut self) -> Result<Node, ParseError> {
        let base = self.unary()?;
        if let Some(Tok::Caret) = self.peek() {
            self.bump();
            let exponent = self.factor()?;
            return Ok(Node::Binary(BinOp::Pow, Box::new(base), Box::new(exponent)));
        }
        Ok(base)
    }

    fn unary(&mut self) -> Result<Node, ParseError> {
        if let Some(Tok::Minus) = self.peek() {
            self.bump();
            let inner = self.unary()?;
            return Ok(Node::Neg(Box::new(inner)));
        }
        self.atom()
    }

    fn atom(&mut self) -> Result<Node, ParseError> {
        let offset = self.offset();
        let Some(token) = self.bump() else {
            return Err(ParseError::Syntax { offset, message: "unexpected end of input".into() });
        };
        match token.tok {
            Tok::Num(v) => Ok(Node::Num(v)),
            Tok::LParen => {
                let inner = self.expr()?;
                self.expect_rparen(offset)?;
                Ok(inner)
            }
            Tok::Ident(name) => {
                if let Some(Tok::LParen) = self.peek() {
                    let func = match Func::from_name(&name) {
                        Some(f) => f,
                        None if NON_SMOOTH_FUNCTIONS.contains(&name.as_str()) => {
                            return Err(ParseError::NonSmoothFunction { name, offset });
                        }
                        None => return Err(ParseError::UnknownIdentifier { name, offset }),
                    };
                    self.bump();
                    let arg = self.expr()?;
                    self.expect_rparen(offset)?;
                    return Ok(Node::Call(func, Box::new(arg)));
                }
                if let Some(idx) = self.variables.iter().position(|v| *v == name) {
                    return Ok(Node::Var(idx));
                }
                if Func::from_name(&name).is_some() {
                    return Err(ParseError::Syntax {
                        offset,
                        message: format!("function `{name}` must be applied to a parenthesized argument"),
                    });
                }
                if NON_SMOOTH_FUNCTIONS.contains(&name.as_str()) {
                    return Err(ParseError::NonSmoothFunction { name, offset });
                }
                Err(ParseError::UnknownIdentifier { name, offset })
            }
            other => Err(ParseError::Syntax {
                offset,
                message: format!("unexpected token {}", describe(&other)),
            }),
        }
    }

    fn expect_rparen(&mut self, open: usize) -> Result<(), ParseError> {
        match self.peek() {
            Some(Tok::RParen) => {
                self.bump();
                Ok(())
            }
            _ => Err(ParseError::Syntax {
                offset: self.offset(),
                message: format!("unbalanced parenthesis opened at byte {open}"),
            }),
        }
    }
}

fn describe(tok: &Tok) -> String {
    match tok {
        Tok::Num(v) => format!("number {v}"),
        Tok::Ident(s) => format!("`{s}`"),
        Tok::Plus => "`+`".into(),
        Tok::Minus => "`-`".into(),
        Tok::Star => "`*`".into(),
        Tok::Slash => "`/`".into(),
        Tok::Caret => "`^`".into(),
        Tok::LParen => "`(`".into(),
        Tok::RParen => "`)`".into(),
    }
}

pub(super) fn parse_node(src: &str, variables: &[String]) -> Result<Node, ParseError> {
    let tokens = lex(src)?;
    if tokens.is_empty() {
        return Err(ParseError::Syntax { offset: 0, message: "empty expression".into() });
    }
    let mut parser = Parser { tokens, pos: 0, end: src.len(), variables };
    let node = parser.expr()?;
    if parser.pos < parser.tokens.len() {
        let t = &parser.tokens[parser.pos];
        let message = match t.tok {
            Tok::RParen => "unbalanced `)`".to_string(),
            ref other => format!("unexpected token {}", describe(other)),
        };
        return Err(ParseError::Syntax { offset: t.offset, message });
    }
    Ok(node)
}
