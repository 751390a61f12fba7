//! Inline arithmetic expressions for graph functions, fields and test functions.
//!
//! Expressions are compiled once into a postfix program and evaluated against
//! a slice of coordinates. The grammar is documented in `docs/config.md`.
//!
//! ```text
//! sum     := product (("+" | "-") product)*
//! product := unary (("*" | "/") unary)*
//! unary   := ("-" | "+") unary | power
//! power   := primary ("^" unary)?
//! primary := number | name | name "(" sum ("," sum)* ")" | "(" sum ")"
//! ```

use std::fmt;

use thiserror::Error;

const MAX_STACK: usize = 32;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("{message} at offset {offset} in `{source_text}`")]
pub struct ExprError {
    pub message: String,
    pub offset: usize,
    pub source_text: String,
}

#[derive(Debug, Clone, Copy, PartialEq)]
enum Func1 {
    Sin,
    Cos,
    Tan,
    Exp,
    Ln,
    Sqrt,
    Abs,
    Sign,
    Tanh,
    Sinh,
    Cosh,
    Atan,
    Asin,
    Acos,
    Step,
}

#[derive(Debug, Clone, Copy, PartialEq)]
enum Func2 {
    Atan2,
    Min,
    Max,
    Pow,
}

#[derive(Debug, Clone, Copy, PartialEq)]
enum Op {
    Const(f64),
    Var(usize),
    Neg,
    Add,
    Sub,
    Mul,
    Div,
    Pow,
    F1(Func1),
    F2(Func2),
}

/// A compiled expression over the variables `x1, …, x_k`.
#[derive(Clone, PartialEq)]
pub struct Expr {
    source: String,
    ops: Vec<Op>,
    num_vars: usize,
}

impl fmt::Debug for Expr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "Expr({:?})", self.source)
    }
}

impl fmt::Display for Expr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.source)
    }
}

impl Expr {
    /// Compiles `source` for evaluation on `num_vars` coordinates.
    ///
    /// Variables are `x1 … x3`; `x`, `y`, `z` are aliases for the first three.
    pub fn parse(source: &str, num_vars: usize) -> Result<Self, ExprError> {
        let tokens = tokenize(source)?;
        let mut parser = Parser { tokens, pos: 0, ops: Vec::new(), source, num_vars };
        parser.sum()?;
        if parser.pos != parser.tokens.len() {
            let off = parser.tokens[parser.pos].offset;
            return Err(parser.err("unexpected trailing input", off));
        }
        let depth = stack_depth(&parser.ops);
        if depth > MAX_STACK {
            return Err(parser.err("expression nests too deeply", 0));
        }
        Ok(Self { source: source.to_string(), ops: parser.ops, num_vars })
    }

    pub fn constant(value: f64, num_vars: usize) -> Self {
        Self { source: format!("{value}"), ops: vec![Op::Const(value)], num_vars }
    }

    pub fn source(&self) -> &str {
        &self.source
    }

    pub fn num_vars(&self) -> usize {
        self.num_vars
    }

    /// True when the program contains no variable references.
    pub fn is_constant(&self) -> bool {
        !self.ops.iter().any(|op| matches!(op, Op::Var(_)))
    }

    /// Evaluates at `x`; `x.len()` must be at least `num_vars`.
    #[inline]
    pub fn eval(&self, x: &[f64]) -> f64 {
        debug_assert!(x.len() >= self.num_vars);
        let mut stack = [0.0f64; MAX_STACK];
        let mut sp = 0usize;
        for op in &self.ops {
            match *op {
                Op::Const(c) => {
                    stack[sp] = c;
                    sp += 1;
                }
                Op::Var(i) => {
                    stack[sp] = x[i];
                    sp += 1;
                }
                Op::Neg => stack[sp - 1] = -stack[sp - 1],
                Op::F1(f) => stack[sp - 1] = apply1(f, stack[sp - 1]),
                binary => {
                    let b = stack[sp - 1];
                    let a = stack[sp - 2];
                    sp -= 1;
                    stack[sp - 1] = match binary {
                        Op::Add => a + b,
                        Op::Sub => a - b,
                        Op::Mul => a * b,
                        Op::Div => a / b,
                        Op::Pow => pow(a, b),
                        Op::F2(f) => apply2(f, a, b),
                        _ => unreachable!(),
                    };
                }
            }
        }
        stack[0]
    }
}

#[inline]
fn pow(a: f64, b: f64) -> f64 {
    if b == b.trunc() && b.abs() <= 64.0 {
        a.powi(b as i32)
    } else {
        a.powf(b)
    }
}

#[inline]
fn apply1(f: Func1, x: f64) -> f64 {
    match f {
        Func1::Sin => x.sin(),
        Func1::Cos => x.cos(),
        Func1::Tan => x.tan(),
        Func1::Exp => x.exp(),
        Func1::Ln => x.ln(),
        Func1::Sqrt => x.sqrt(),
        Func1::Abs => x.abs(),
        Func1::Sign => {
            if x > 0.0 {
                1.0
            } else if x < 0.0 {
                -1.0
            } else {
                0.0
            }
        }
        Func1::Tanh => x.tanh(),
        Func1::Sinh => x.sinh(),
        Func1::Cosh => x.cosh(),
        Func1::Atan => x.atan(),
        Func1::Asin => x.asin(),
        Func1::Acos => x.acos(),
        Func1::Step => {
            if x > 0.0 {
                1.0
            } else {
                0.0
            }
        }
    }
}

#[inline]
fn apply2(f: Func2, a: f64, b: f64) -> f64 {
    match f {
        Func2::Atan2 => a.atan2(b),
        Func2::Min => a.min(b),
        Func2::Max => a.max(b),
        Func2::Pow => pow(a, b),
    }
}

fn stack_depth(ops: &[Op]) -> usize {
    let mut depth = 0usize;
    let mut max = 0usize;
    for op in ops {
        match op {
            Op::Const(_) | Op::Var(_) => depth += 1,
            Op::Neg | Op::F1(_) => {}
            _ => depth -= 1,
        }
        max = max.max(depth);
    }
    max
}

#[derive(Debug, Clone, PartialEq)]
enum Tok {
    Num(f64),
    Name(String),
    Plus,
    Minus,
    Star,
    Slash,
    Caret,
    LParen,
    RParen,
    Comma,
}

#[derive(Debug, Clone)]
struct Token {
    tok: Tok,
    offset: usize,
}

fn tokenize(src: &str) -> Result<Vec<Token>, ExprError> {
    let bytes = src.as_bytes();
    let mut out = Vec::new();
    let mut i = 0;
    let err = |message: &str, offset: usize| ExprError {
        message: message.to_string(),
        offset,
        source_text: src.to_string(),
    };
    while i < bytes.len() {
        let c = bytes[i] as char;
        let start = i;
        let tok = match c {
            ' ' | '\t' | '\n' | '\r' => {
                i += 1;
                continue;
            }
            '+' => Tok::Plus,
            '-' => Tok::Minus,
            '*' => Tok::Star,
            '/' => Tok::Slash,
            '^' => Tok::Caret,
            '(' => Tok::LParen,
            ')' => Tok::RParen,
            ',' => Tok::Comma,
            '0'..='9' | '.' => {
                while i < bytes.len() && (bytes[i].is_ascii_digit() || bytes[i] == b'.') {
                    i += 1;
                }
                if i < bytes.len() && (bytes[i] == b'e' || bytes[i] == b'E') {
                    let mut j = i + 1;
                    if j < bytes.len() && (bytes[j] == b'+' || bytes[j] == b'-') {
                        j += 1;
                    }
                    if j < bytes.len() && bytes[j].is_ascii_digit() {
                        i = j;
                        while i < bytes.len() && bytes[i].is_ascii_digit() {
                            i += 1;
                        }
                    }
                }
                let text = &src[start..i];
                let value: f64 = text.parse().map_err(|_| err("malformed number", start))?;
                out.push(Token { tok: Tok::Num(value), offset: start });
                continue;
            }
            c if c.is_ascii_alphabetic() || c == '_' => {
                while i < bytes.len() && (bytes[i].is_ascii_alphanumeric() || bytes[i] == b'_') {
                    i += 1;
                }
                out.push(Token { tok: Tok::Name(src[start..i].to_string()), offset: start });
                continue;
            }
            _ => return Err(err(&format!("unexpected character `{c}`"), start)),
        };
        out.push(Token { tok, offset: start });
        i += 1;
    }
    Ok(out)
}

struct Parser<'a> {
    tokens: Vec<Token>,
    pos: usize,
    ops: Vec<Op>,
    source: &'a str,
    num_vars: usize,
}

impl Parser<'_> {
    fn err(&self, message: &str, offset: usize) -> ExprError {
        ExprError { message: message.to_string(), offset, source_text: self.source.to_string() }
    }

    fn peek(&self) -> Option<&Tok> {
        self.tokens.get(self.pos).map(|t| &t.tok)
    }

    fn offset(&self) -> usize {
        self.tokens.get(self.pos).map_or(self.source.len(), |t| t.offset)
    }

    fn expect(&mut self, tok: Tok, what: &str) -> Result<(), ExprError> {
        if self.peek() == Some(&tok) {
            self.pos += 1;
            Ok(())
        } else {
            Err(self.err(&format!("expected {what}"), self.offset()))
        }
    }

    fn sum(&mut self) -> Result<(), ExprError> {
        self.product()?;
        loop {
            let op = match self.peek() {
                Some(Tok::Plus) => Op::Add,
                Some(Tok::Minus) => Op::Sub,
                _ => return Ok(()),
            };
            self.pos += 1;
            self.product()?;
            self.ops.push(op);
        }
    }

    fn product(&mut self) -> Result<(), ExprError> {
        self.unary()?;
        loop {
            let op = match self.peek() {
                Some(Tok::Star) => Op::Mul,
                Some(Tok::Slash) => Op::Div,
                _ => return Ok(()),
            };
            self.pos += 1;
            self.unary()?;
            self.ops.push(op);
        }
    }

    fn unary(&mut self) -> Result<(), ExprError> {
        match self.peek() {
            Some(Tok::Minus) => {
                self.pos += 1;
                self.unary()?;
                self.ops.push(Op::Neg);
                Ok(())
            }
            Some(Tok::Plus) => {
                self.pos += 1;
                self.unary()
            }
            _ => self.power(),
        }
    }

    fn power(&mut self) -> Result<(), ExprError> {
        self.primary()?;
        if self.peek() == Some(&Tok::Caret) {
            self.pos += 1;
            self.unary()?;
            self.ops.push(Op::Pow);
        }
        Ok(())
    }

    fn primary(&mut self) -> Result<(), ExprError> {
        let offset = self.offset();
        let tok = self.peek().cloned();
        match tok {
            Some(Tok::Num(v)) => {
                self.pos += 1;
                self.ops.push(Op::Const(v));
                Ok(())
            }
            Some(Tok::LParen) => {
                self.pos += 1;
                self.sum()?;
                self.expect(Tok::RParen, "`)`")
            }
            Some(Tok::Name(name)) => {
                self.pos += 1;
                if self.peek() == Some(&Tok::LParen) {
                    self.pos += 1;
                    self.call(&name, offset)
                } else {
                    self.name(&name, offset)
                }
            }
            _ => Err(self.err("expected a number, name or `(`", offset)),
        }
    }

    fn name(&mut self, name: &str, offset: usize) -> Result<(), ExprError> {
        let var = match name {
            "pi" => {
                self.ops.push(Op::Const(std::f64::consts::PI));
                return Ok(());
            }
            "e" => {
                self.ops.push(Op::Const(std::f64::consts::E));
                return Ok(());
            }
            "x" | "x1" => 0,
            "y" | "x2" => 1,
            "z" | "x3" => 2,
            _ => return Err(self.err(&format!("unknown name `{name}`"), offset)),
        };
        if var >= self.num_vars {
            return Err(self.err(
                &format!("variable `{name}` is not available with {} coordinates", self.num_vars),
                offset,
            ));
        }
        self.ops.push(Op::Var(var));
        Ok(())
    }

    fn call(&mut self, name: &str, offset: usize) -> Result<(), ExprError> {
        let mut argc = 0;
        if self.peek() != Some(&Tok::RParen) {
            loop {
                self.sum()?;
                argc += 1;
                if self.peek() == Some(&Tok::Comma) {
                    self.pos += 1;
                } else {
                    break;
                }
            }
        }
        self.expect(Tok::RParen, "`)`")?;
        let f1 = match name {
            "sin" => Some(Func1::Sin),
            "cos" => Some(Func1::Cos),
            "tan" => Some(Func1::Tan),
            "exp" => Some(Func1::Exp),
            "ln" | "log" => Some(Func1::Ln),
            "sqrt" => Some(Func1::Sqrt),
            "abs" => Some(Func1::Abs),
            "sign" => Some(Func1::Sign),
            "tanh" => Some(Func1::Tanh),
            "sinh" => Some(Func1::Sinh),
            "cosh" => Some(Func1::Cosh),
            "atan" => Some(Func1::Atan),
            "asin" => Some(Func1::Asin),
            "acos" => Some(Func1::Acos),
            "step" => Some(Func1::Step),
            _ => None,
        };
        if let Some(f) = f1 {
            if argc != 1 {
                return Err(self.err(&format!("`{name}` takes one argument"), offset));
            }
            self.ops.push(Op::F1(f));
            return Ok(());
        }
        let f2 = match name {
            "atan2" => Func2::Atan2,
            "min" => Func2::Min,
            "max" => Func2::Max,
            "pow" => Func2::Pow,
            _ => return Err(self.err(&format!("unknown function `{name}`"), offset)),
        };
        if argc != 2 {
            return Err(self.err(&format!("`{name}` takes two arguments"), offset));
        }
        self.ops.push(Op::F2(f2));
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ev(src: &str, x: &[f64]) -> f64 {
        Expr::parse(src, x.len()).unwrap().eval(x)
    }

    #[test]
    fn precedence_and_associativity() {
        assert_eq!(ev("1 + 2 * 3", &[0.0]), 7.0);
        assert_eq!(ev("(1 + 2) * 3", &[0.0]), 9.0);
        assert_eq!(ev("2 ^ 3 ^ 2", &[0.0]), 512.0);
        assert_eq!(ev("-x1^2", &[3.0]), -9.0);
        assert_eq!(ev("2^-1", &[0.0]), 0.5);
        assert_eq!(ev("8 / 4 / 2", &[0.0]), 1.0);
        assert_eq!(ev("1 - 2 - 3", &[0.0]), -4.0);
    }

    #[test]
    fn variables_functions_and_constants() {
        assert_eq!(ev("x1 * x2", &[2.0, 3.0]), 6.0);
        assert_eq!(ev("x + y", &[2.0, 3.0]), 5.0);
        assert!((ev("0.2*sin(3*x1)", &[0.5]) - 0.2 * 1.5f64.sin()).abs() < 1e-15);
        assert_eq!(ev("abs(x1 - 0.5)", &[0.25]), 0.25);
        assert_eq!(ev("max(x1, 1e-3)", &[0.0]), 1e-3);
        assert_eq!(ev("step(x1) + sign(-2)", &[1.0]), 0.0);
        assert!((ev("pi", &[0.0]) - std::f64::consts::PI).abs() < 1e-16);
        assert_eq!(ev("2.5E+1", &[0.0]), 25.0);
    }

    #[test]
    fn errors_carry_offsets() {
        let e = Expr::parse("1 + x3", 2).unwrap_err();
        assert_eq!(e.offset, 4);
        let e = Expr::parse("sin(1, 2)", 1).unwrap_err();
        assert!(e.message.contains("one argument"));
        let e = Expr::parse("1 + ", 1).unwrap_err();
        assert_eq!(e.offset, 4);
        let e = Expr::parse("1 $ 2", 1).unwrap_err();
        assert_eq!(e.offset, 2);
        assert!(Expr::parse("(1", 1).is_err());
        assert!(Expr::parse("foo(1)", 1).is_err());
    }

    #[test]
    fn constant_detection() {
        assert!(Expr::parse("2*pi", 2).unwrap().is_constant());
        assert!(!Expr::parse("x2", 2).unwrap().is_constant());
    }
}
