//! Scalar expression grammar for nonlinearities and forcing maps.
//!
//! ```text
//! expr   := term (("+" | "-") term)*
//! term   := factor (("*" | "/") factor)*
//! factor := "-" factor | power
//! power  := atom ("^" factor)?
//! atom   := NUMBER | IDENT | IDENT "(" expr ")" | "(" expr ")"
//! ```
//!
//! `^` is right-associative and unary minus binds between `*` and `^`, so
//! `-x1^2` is `-(x1^2)`. Inputs are limited to 64 KiB and 256 nesting levels;
//! syntax errors carry the byte offset of the offending token.

use std::collections::HashMap;
use std::fmt;
use thiserror::Error;

pub const MAX_INPUT_BYTES: usize = 64 * 1024;
pub const MAX_DEPTH: usize = 256;

#[derive(Debug, Error, Clone, PartialEq)]
#[error("byte {offset}: {message}")]
pub struct ParseError {
    pub offset: usize,
    pub message: String,
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum EvalError {
    #[error("unbound variable '{0}'")]
    UnboundVariable(String),
    #[error("non-finite value produced by {0}")]
    NonFinite(&'static str),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BinOp {
    Add,
    Sub,
    Mul,
    Div,
    Pow,
}

impl BinOp {
    fn symbol(self) -> &'static str {
        match self {
            BinOp::Add => "+",
            BinOp::Sub => "-",
            BinOp::Mul => "*",
            BinOp::Div => "/",
            BinOp::Pow => "^",
        }
    }

    fn apply(self, a: f64, b: f64) -> f64 {
        match self {
            BinOp::Add => a + b,
            BinOp::Sub => a - b,
            BinOp::Mul => a * b,
            BinOp::Div => a / b,
            BinOp::Pow => a.powf(b),
        }
    }

    fn name(self) -> &'static str {
        match self {
            BinOp::Add => "addition",
            BinOp::Sub => "subtraction",
            BinOp::Mul => "multiplication",
            BinOp::Div => "division",
            BinOp::Pow => "exponentiation",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Func {
    Sin,
    Cos,
    Tan,
    Tanh,
    Arctan,
    Exp,
    Ln,
    Abs,
    Sqrt,
}

impl Func {
    pub fn from_name(name: &str) -> Option<Func> {
        Some(match name {
            "sin" => Func::Sin,
            "cos" => Func::Cos,
            "tan" => Func::Tan,
            "tanh" => Func::Tanh,
            "arctan" => Func::Arctan,
            "exp" => Func::Exp,
            "ln" => Func::Ln,
            "abs" => Func::Abs,
            "sqrt" => Func::Sqrt,
            _ => return None,
        })
    }

    pub fn name(self) -> &'static str {
        match self {
            Func::Sin => "sin",
            Func::Cos => "cos",
            Func::Tan => "tan",
            Func::Tanh => "tanh",
            Func::Arctan => "arctan",
            Func::Exp => "exp",
            Func::Ln => "ln",
            Func::Abs => "abs",
            Func::Sqrt => "sqrt",
        }
    }

    pub fn apply(self, x: f64) -> f64 {
        match self {
            Func::Sin => x.sin(),
            Func::Cos => x.cos(),
            Func::Tan => x.tan(),
            Func::Tanh => x.tanh(),
            Func::Arctan => x.atan(),
            Func::Exp => x.exp(),
            Func::Ln => x.ln(),
            Func::Abs => x.abs(),
            Func::Sqrt => x.sqrt(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Ast {
    Number(f64),
    Var(String),
    Neg(Box<Ast>),
    Binary(BinOp, Box<Ast>, Box<Ast>),
    Call(Func, Box<Ast>),
}

/// A parsed expression (immutable syntax tree).
#[derive(Debug, Clone, PartialEq)]
pub struct Expression {
    root: Ast,
}

pub fn parse(text: &str) -> Result<Expression, ParseError> {
    if text.len() > MAX_INPUT_BYTES {
        return Err(ParseError {
            offset: MAX_INPUT_BYTES,
            message: format!("input exceeds {MAX_INPUT_BYTES} bytes"),
        });
    }
    let mut p = Parser { src: text.as_bytes(), pos: 0, depth: 0 };
    p.skip_ws();
    let root = p.expr()?;
    p.skip_ws();
    if p.pos != p.src.len() {
        return Err(p.error("unexpected trailing input"));
    }
    Ok(Expression { root })
}

impl Expression {
    pub fn root(&self) -> &Ast {
        &self.root
    }

    /// Evaluates against a name -> value environment.
    pub fn eval(&self, env: &HashMap<String, f64>) -> Result<f64, EvalError> {
        eval_ast(&self.root, env)
    }

    /// Variable names referenced by the expression, sorted.
    pub fn free_vars(&self) -> Vec<String> {
        let mut vars = Vec::new();
        collect_vars(&self.root, &mut vars);
        vars.sort();
        vars.dedup();
        vars
    }

    pub fn depth(&self) -> usize {
        ast_depth(&self.root)
    }

    /// Compiles against a fixed variable space for allocation-free evaluation.
    pub fn compile(&self, space: VarSpace) -> Result<CompiledExpr, EvalError> {
        let mut ops = Vec::new();
        compile_ast(&self.root, space, &mut ops)?;
        let mut max_stack = 0usize;
        let mut depth = 0isize;
        for op in &ops {
            depth += match op {
                Op::Const(_) | Op::LoadT | Op::LoadS | Op::LoadX(_) => 1,
                Op::Neg | Op::Fun(_) => 0,
                Op::Bin(_) => -1,
            };
            max_stack = max_stack.max(depth as usize);
        }
        Ok(CompiledExpr { ops, max_stack, source: self.to_string() })
    }
}

impl fmt::Display for Expression {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write_ast(&self.root, f)
    }
}

fn eval_ast(ast: &Ast, env: &HashMap<String, f64>) -> Result<f64, EvalError> {
    let v = match ast {
        Ast::Number(v) => *v,
        Ast::Var(name) => {
            *env.get(name).ok_or_else(|| EvalError::UnboundVariable(name.clone()))?
        }
        Ast::Neg(inner) => -eval_ast(inner, env)?,
        Ast::Binary(op, l, r) => {
            let v = op.apply(eval_ast(l, env)?, eval_ast(r, env)?);
            if !v.is_finite() {
                return Err(EvalError::NonFinite(op.name()));
            }
            v
        }
        Ast::Call(f, arg) => {
            let v = f.apply(eval_ast(arg, env)?);
            if !v.is_finite() {
                return Err(EvalError::NonFinite(f.name()));
            }
            v
        }
    };
    if v.is_finite() {
        Ok(v)
    } else {
        Err(EvalError::NonFinite("literal or variable"))
    }
}

fn collect_vars(ast: &Ast, out: &mut Vec<String>) {
    match ast {
        Ast::Number(_) => {}
        Ast::Var(name) => out.push(name.clone()),
        Ast::Neg(a) | Ast::Call(_, a) => collect_vars(a, out),
        Ast::Binary(_, l, r) => {
            collect_vars(l, out);
            collect_vars(r, out);
        }
    }
}

fn ast_depth(ast: &Ast) -> usize {
    match ast {
        Ast::Number(_) | Ast::Var(_) => 1,
        Ast::Neg(a) | Ast::Call(_, a) => 1 + ast_depth(a),
        Ast::Binary(_, l, r) => 1 + ast_depth(l).max(ast_depth(r)),
    }
}

// ---------------------------------------------------------------------------
// Parser
// ---------------------------------------------------------------------------

struct Parser<'a> {
    src: &'a [u8],
    pos: usize,
    depth: usize,
}

impl<'a> Parser<'a> {
    fn error(&self, message: impl Into<String>) -> ParseError {
        ParseError { offset: self.pos, message: message.into() }
    }

    fn skip_ws(&mut self) {
        while self.pos < self.src.len() && self.src[self.pos].is_ascii_whitespace() {
            self.pos += 1;
        }
    }

    fn peek(&self) -> Option<u8> {
        self.src.get(self.pos).copied()
    }

    fn enter(&mut self) -> Result<(), ParseError> {
        self.depth += 1;
        if self.depth > MAX_DEPTH {
            Err(self.error(format!("expression nesting exceeds {MAX_DEPTH} levels")))
        } else {
            Ok(())
        }
    }

    fn leave(&mut self) {
        self.depth -= 1;
    }

    fn expr(&mut self) -> Result<Ast, ParseError> {
        self.enter()?;
        let mut lhs = self.term()?;
        loop {
            self.skip_ws();
            let op = match self.peek() {
                Some(b'+') => BinOp::Add,
                Some(b'-') => BinOp::Sub,
                _ => break,
            };
            self.pos += 1;
            self.skip_ws();
            let rhs = self.term()?;
            lhs = Ast::Binary(op, Box::new(lhs), Box::new(rhs));
        }
        self.leave();
        Ok(lhs)
    }

    fn term(&mut self) -> Result<Ast, ParseError> {
        let mut lhs = self.factor()?;
        loop {
            self.skip_ws();
            let op = match self.peek() {
                Some(b'*') => BinOp::Mul,
                Some(b'/') => BinOp::Div,
                _ => break,
            };
            self.pos += 1;
            self.skip_ws();
            let rhs = self.factor()?;
            lhs = Ast::Binary(op, Box::new(lhs), Box::new(rhs));
        }
        Ok(lhs)
    }

    fn factor(&mut self) -> Result<Ast, ParseError> {
        self.enter()?;
        self.skip_ws();
        let node = if self.peek() == Some(b'-') {
            self.pos += 1;
            Ast::Neg(Box::new(self.factor()?))
        } else {
            self.power()?
        };
        self.leave();
        Ok(node)
    }

    fn power(&mut self) -> Result<Ast, ParseError> {
        let base = self.atom()?;
        self.skip_ws();
        if self.peek() == Some(b'^') {
            self.pos += 1;
            self.skip_ws();
            let exponent = self.factor()?;
            Ok(Ast::Binary(BinOp::Pow, Box::new(base), Box::new(exponent)))
        } else {
            Ok(base)
        }
    }

    fn atom(&mut self) -> Result<Ast, ParseError> {
        self.skip_ws();
        match self.peek() {
            None => Err(self.error("unexpected end of input")),
            Some(b'(') => {
                self.pos += 1;
                let inner = self.expr()?;
                self.skip_ws();
                if self.peek() != Some(b')') {
                    return Err(self.error("expected ')'"));
                }
                self.pos += 1;
                Ok(inner)
            }
            Some(c) if c.is_ascii_digit() => self.number(),
            Some(c) if c.is_ascii_alphabetic() || c == b'_' => self.ident(),
            Some(c) => Err(self.error(format!("unexpected character '{}'", c as char))),
        }
    }

    fn number(&mut self) -> Result<Ast, ParseError> {
        let start = self.pos;
        while self.peek().is_some_and(|c| c.is_ascii_digit()) {
            self.pos += 1;
        }
        if self.peek() == Some(b'.') {
            self.pos += 1;
            if !self.peek().is_some_and(|c| c.is_ascii_digit()) {
                return Err(self.error("expected digits after decimal point"));
            }
            while self.peek().is_some_and(|c| c.is_ascii_digit()) {
                self.pos += 1;
            }
        }
        if matches!(self.peek(), Some(b'e') | Some(b'E')) {
            let mark = self.pos;
            self.pos += 1;
            if matches!(self.peek(), Some(b'+') | Some(b'-')) {
                self.pos += 1;
            }
            if self.peek().is_some_and(|c| c.is_ascii_digit()) {
                while self.peek().is_some_and(|c| c.is_ascii_digit()) {
                    self.pos += 1;
                }
            } else {
                // Not an exponent after all ("2e" could start an identifier
                // elsewhere, but here it is simply a malformed literal).
                self.pos = mark;
            }
        }
        let text = std::str::from_utf8(&self.src[start..self.pos]).expect("ascii slice");
        match text.parse::<f64>() {
            Ok(v) if v.is_finite() => Ok(Ast::Number(v)),
            _ => Err(ParseError {
                offset: start,
                message: format!("numeric literal '{text}' is out of range"),
            }),
        }
    }

    fn ident(&mut self) -> Result<Ast, ParseError> {
        let start = self.pos;
        while self.peek().is_some_and(|c| c.is_ascii_alphanumeric() || c == b'_') {
            self.pos += 1;
        }
        let name = std::str::from_utf8(&self.src[start..self.pos]).expect("ascii slice");
        self.skip_ws();
        if self.peek() == Some(b'(') {
            let func = Func::from_name(name).ok_or(ParseError {
                offset: start,
                message: format!("unknown function '{name}'"),
            })?;
            self.pos += 1;
            let arg = self.expr()?;
            self.skip_ws();
            if self.peek() != Some(b')') {
                return Err(self.error("expected ')'"));
            }
            self.pos += 1;
            Ok(Ast::Call(func, Box::new(arg)))
        } else {
            Ok(Ast::Var(name.to_string()))
        }
    }
}

// ---------------------------------------------------------------------------
// Printer
// ---------------------------------------------------------------------------

/// Syntactic class used to decide where parentheses are required.
#[derive(PartialEq, Eq, Clone, Copy)]
enum Shape {
    AddSub,
    MulDiv,
    Negated,
    Power,
    Atomic,
}

fn shape(ast: &Ast) -> Shape {
    match ast {
        Ast::Number(_) | Ast::Var(_) | Ast::Call(..) => Shape::Atomic,
        Ast::Neg(_) => Shape::Negated,
        Ast::Binary(BinOp::Add, ..) | Ast::Binary(BinOp::Sub, ..) => Shape::AddSub,
        Ast::Binary(BinOp::Mul, ..) | Ast::Binary(BinOp::Div, ..) => Shape::MulDiv,
        Ast::Binary(BinOp::Pow, ..) => Shape::Power,
    }
}

fn write_ast(ast: &Ast, f: &mut fmt::Formatter<'_>) -> fmt::Result {
    match ast {
        Ast::Number(v) => {
            if *v >= 0.0 {
                write!(f, "{v}")
            } else {
                // A sign would reparse as unary minus; parenthesize so the
                // printed form stays a fixpoint of print-parse-print.
                write!(f, "(-{})", -v)
            }
        }
        Ast::Var(name) => f.write_str(name),
        Ast::Call(func, arg) => {
            write!(f, "{}(", func.name())?;
            write_ast(arg, f)?;
            f.write_str(")")
        }
        Ast::Neg(inner) => {
            f.write_str("-")?;
            // The operand of unary minus is a factor: sums and products need
            // parentheses, another negation / power / atom does not.
            write_child(inner, matches!(shape(inner), Shape::AddSub | Shape::MulDiv), f)
        }
        Ast::Binary(op, l, r) => {
            match op {
                BinOp::Add | BinOp::Sub => {
                    write_child(l, false, f)?;
                    write!(f, " {} ", op.symbol())?;
                    // "a - b + c" parses left-associated; a right operand that
                    // is itself a sum needs explicit grouping.
                    write_child(r, shape(r) == Shape::AddSub, f)
                }
                BinOp::Mul | BinOp::Div => {
                    write_child(l, shape(l) == Shape::AddSub, f)?;
                    write!(f, " {} ", op.symbol())?;
                    write_child(r, matches!(shape(r), Shape::AddSub | Shape::MulDiv), f)
                }
                BinOp::Pow => {
                    write_child(l, shape(l) != Shape::Atomic, f)?;
                    f.write_str("^")?;
                    // The exponent position accepts any factor.
                    write_child(r, matches!(shape(r), Shape::AddSub | Shape::MulDiv), f)
                }
            }
        }
    }
}

fn write_child(ast: &Ast, parens: bool, f: &mut fmt::Formatter<'_>) -> fmt::Result {
    if parens {
        f.write_str("(")?;
        write_ast(ast, f)?;
        f.write_str(")")
    } else {
        write_ast(ast, f)
    }
}

// ---------------------------------------------------------------------------
// Compiled form
// ---------------------------------------------------------------------------

/// Which variables an expression may reference: the time variable `t`, the
/// lift variable `s`, and state components `x1..x{dim}`.
#[derive(Debug, Clone, Copy)]
pub struct VarSpace {
    pub time: bool,
    pub lift: bool,
    pub state_dim: usize,
}

impl VarSpace {
    pub fn state_and_time(dim: usize) -> Self {
        VarSpace { time: true, lift: false, state_dim: dim }
    }

    pub fn state_only(dim: usize) -> Self {
        VarSpace { time: false, lift: false, state_dim: dim }
    }

    pub fn lift_only() -> Self {
        VarSpace { time: false, lift: true, state_dim: 0 }
    }
}

#[derive(Debug, Clone, Copy)]
enum Op {
    Const(f64),
    LoadT,
    LoadS,
    LoadX(u32),
    Neg,
    Bin(BinOp),
    Fun(Func),
}

/// Stack-machine form of an [`Expression`] with variables resolved to slots.
#[derive(Debug, Clone)]
pub struct CompiledExpr {
    ops: Vec<Op>,
    max_stack: usize,
    source: String,
}

fn compile_ast(ast: &Ast, space: VarSpace, out: &mut Vec<Op>) -> Result<(), EvalError> {
    match ast {
        Ast::Number(v) => out.push(Op::Const(*v)),
        Ast::Var(name) => out.push(resolve_var(name, space)?),
        Ast::Neg(a) => {
            compile_ast(a, space, out)?;
            out.push(Op::Neg);
        }
        Ast::Binary(op, l, r) => {
            compile_ast(l, space, out)?;
            compile_ast(r, space, out)?;
            out.push(Op::Bin(*op));
        }
        Ast::Call(func, a) => {
            compile_ast(a, space, out)?;
            out.push(Op::Fun(*func));
        }
    }
    Ok(())
}

fn resolve_var(name: &str, space: VarSpace) -> Result<Op, EvalError> {
    if name == "t" && space.time {
        return Ok(Op::LoadT);
    }
    if name == "s" && space.lift {
        return Ok(Op::LoadS);
    }
    if let Some(rest) = name.strip_prefix('x') {
        if let Ok(i) = rest.parse::<u32>() {
            if i >= 1 && (i as usize) <= space.state_dim && !rest.starts_with('0') {
                return Ok(Op::LoadX(i - 1));
            }
        }
    }
    Err(EvalError::UnboundVariable(name.to_string()))
}

impl CompiledExpr {
    pub fn source(&self) -> &str {
        &self.source
    }

    pub fn max_stack(&self) -> usize {
        self.max_stack
    }

    /// Evaluates with an externally owned stack buffer (cleared on entry).
    pub fn eval_with(
        &self,
        stack: &mut Vec<f64>,
        t: f64,
        s: f64,
        x: &[f64],
    ) -> Result<f64, EvalError> {
        stack.clear();
        for op in &self.ops {
            match op {
                Op::Const(v) => stack.push(*v),
                Op::LoadT => stack.push(t),
                Op::LoadS => stack.push(s),
                Op::LoadX(i) => stack.push(x[*i as usize]),
                Op::Neg => {
                    let a = stack.last_mut().expect("stack underflow");
                    *a = -*a;
                }
                Op::Bin(op) => {
                    let b = stack.pop().expect("stack underflow");
                    let a = stack.last_mut().expect("stack underflow");
                    let v = op.apply(*a, b);
                    if !v.is_finite() {
                        return Err(EvalError::NonFinite(op.name()));
                    }
                    *a = v;
                }
                Op::Fun(f) => {
                    let a = stack.last_mut().expect("stack underflow");
                    let v = f.apply(*a);
                    if !v.is_finite() {
                        return Err(EvalError::NonFinite(f.name()));
                    }
                    *a = v;
                }
            }
        }
        let v = stack.pop().expect("empty program");
        if v.is_finite() {
            Ok(v)
        } else {
            Err(EvalError::NonFinite("literal or variable"))
        }
    }

    pub fn eval(&self, t: f64, s: f64, x: &[f64]) -> Result<f64, EvalError> {
        let mut stack = Vec::with_capacity(self.max_stack);
        self.eval_with(&mut stack, t, s, x)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn eval_str(text: &str, vars: &[(&str, f64)]) -> Result<f64, EvalError> {
        let env: HashMap<String, f64> =
            vars.iter().map(|(k, v)| (k.to_string(), *v)).collect();
        parse(text).unwrap().eval(&env)
    }

    #[test]
    fn literals_and_arithmetic() {
        assert_eq!(eval_str("2.5", &[]).unwrap(), 2.5);
        assert_eq!(eval_str("1e-3", &[]).unwrap(), 1e-3);
        assert_eq!(eval_str("2E3", &[]).unwrap(), 2000.0);
        assert_eq!(eval_str("1 + 2 * 3", &[]).unwrap(), 7.0);
        assert_eq!(eval_str("(1 + 2) * 3", &[]).unwrap(), 9.0);
        assert_eq!(eval_str("7 - 2 - 1", &[]).unwrap(), 4.0);
        assert_eq!(eval_str("8 / 4 / 2", &[]).unwrap(), 1.0);
    }

    #[test]
    fn power_is_right_associative_and_binds_tighter_than_times() {
        assert_eq!(eval_str("2 * 3^2", &[]).unwrap(), 18.0);
        assert_eq!(eval_str("2^3^2", &[]).unwrap(), 512.0);
        assert_eq!(eval_str("2^-3", &[]).unwrap(), 0.125);
    }

    #[test]
    fn unary_minus_binds_between_times_and_power() {
        assert_eq!(eval_str("-(x1)^2", &[("x1", 3.0)]).unwrap(), -9.0);
        assert_eq!(eval_str("-x1^2", &[("x1", 3.0)]).unwrap(), -9.0);
        assert_eq!(eval_str("(-x1)^2", &[("x1", 3.0)]).unwrap(), 9.0);
        assert_eq!(eval_str("2 * -3", &[]).unwrap(), -6.0);
        assert_eq!(eval_str("--5", &[]).unwrap(), 5.0);
    }

    #[test]
    fn function_reference_values() {
        assert!((eval_str("sin(1)", &[]).unwrap() - 1f64.sin()).abs() < 1e-15);
        assert!((eval_str("arctan(1)", &[]).unwrap() - std::f64::consts::FRAC_PI_4).abs() < 1e-15);
        assert!((eval_str("tanh(2)", &[]).unwrap() - 2f64.tanh()).abs() < 1e-15);
        assert!((eval_str("ln(exp(2))", &[]).unwrap() - 2.0).abs() < 1e-15);
        assert_eq!(eval_str("abs(-3)", &[]).unwrap(), 3.0);
        assert_eq!(eval_str("sqrt(9)", &[]).unwrap(), 3.0);
        // The lift map from the worked example.
        assert!((eval_str("(s+1)^3", &[("s", 0.23)]).unwrap() - 1.860867).abs() < 1e-12);
    }

    #[test]
    fn syntax_errors_carry_byte_offsets() {
        let err = parse("1 + $").unwrap_err();
        assert_eq!(err.offset, 4);
        let err = parse("foo(1)").unwrap_err();
        assert_eq!(err.offset, 0);
        assert!(err.message.contains("unknown function 'foo'"));
        let err = parse("(1 + 2").unwrap_err();
        assert_eq!(err.offset, 6);
        let err = parse("1 2").unwrap_err();
        assert!(err.message.contains("trailing"));
        assert!(parse("").is_err());
        let err = parse("3.").unwrap_err();
        assert!(err.message.contains("decimal"));
        assert!(parse("1e999").unwrap_err().message.contains("out of range"));
    }

    #[test]
    fn nesting_depth_is_limited() {
        let deep_ok = format!("{}1{}", "(".repeat(100), ")".repeat(100));
        assert!(parse(&deep_ok).is_ok());
        let too_deep = format!("{}1{}", "(".repeat(300), ")".repeat(300));
        let err = parse(&too_deep).unwrap_err();
        assert!(err.message.contains("nesting"));
    }

    #[test]
    fn input_size_is_limited() {
        let wide = "1+".repeat(40_000) + "1"; // > 64 KiB
        assert!(parse(&wide).unwrap_err().message.contains("exceeds"));
        let ok = "1+".repeat(20_000) + "1"; // wide but shallow: iterative sums
        assert!(parse(&ok).is_ok());
    }

    #[test]
    fn eval_errors() {
        assert_eq!(
            eval_str("x9", &[]).unwrap_err(),
            EvalError::UnboundVariable("x9".into())
        );
        assert!(matches!(eval_str("1/0", &[]), Err(EvalError::NonFinite(_))));
        assert!(matches!(eval_str("ln(-1)", &[]), Err(EvalError::NonFinite(_))));
        assert!(matches!(eval_str("exp(1000)", &[]), Err(EvalError::NonFinite(_))));
    }

    #[test]
    fn print_parse_is_idempotent_on_fixed_cases() {
        for text in [
            "1 + 2 * 3",
            "-x1^2",
            "(-x1)^2",
            "2^3^2",
            "(2^3)^2",
            "a - (b - c)",
            "a - b - c",
            "0.1*cos(x2) + 0.3*sin(2*t)",
            "2 * -3",
            "-(1 + 2)",
            "1 / (2 / 3)",
            "x1 / x2 * x1",
            "2^-3",
        ] {
            let first = parse(text).unwrap();
            let printed = first.to_string();
            let second = parse(&printed).unwrap();
            assert_eq!(first, second, "print of '{text}' was '{printed}'");
            assert_eq!(printed, second.to_string());
        }
    }

    #[test]
    fn compile_resolves_slots_and_rejects_unknowns() {
        let e = parse("0.1*cos(x2) + 0.3*sin(2*t)").unwrap();
        let c = e.compile(VarSpace::state_and_time(2)).unwrap();
        let env: HashMap<String, f64> =
            [("t".to_string(), 0.4), ("x1".to_string(), 1.0), ("x2".to_string(), -0.7)]
                .into_iter()
                .collect();
        let want = e.eval(&env).unwrap();
        let got = c.eval(0.4, 0.0, &[1.0, -0.7]).unwrap();
        assert!((want - got).abs() < 1e-15);

        // t is not available to state-only expressions.
        assert!(e.compile(VarSpace::state_only(2)).is_err());
        // x2 out of range for a 1-dimensional state.
        assert!(e.compile(VarSpace::state_and_time(1)).is_err());
        // x0 and x01 are not valid state slots.
        assert!(parse("x0").unwrap().compile(VarSpace::state_only(2)).is_err());
        assert!(parse("x01").unwrap().compile(VarSpace::state_only(2)).is_err());
        let lift = parse("4.5*s").unwrap().compile(VarSpace::lift_only()).unwrap();
        assert_eq!(lift.eval(0.0, 2.0, &[]).unwrap(), 9.0);
    }

    #[test]
    fn free_vars_are_sorted_and_deduplicated() {
        let e = parse("x2 + t*x1 + sin(x2)").unwrap();
        assert_eq!(e.free_vars(), vec!["t".to_string(), "x1".into(), "x2".into()]);
    }

    mod properties {
        use super::*;
        use proptest::prelude::*;

        fn arb_ast() -> impl Strategy<Value = Ast> {
            let leaf = prop_oneof![
                (0.0..100.0f64).prop_map(Ast::Number),
                prop_oneof![Just("t"), Just("x1"), Just("x2")]
                    .prop_map(|s| Ast::Var(s.to_string())),
            ];
            leaf.prop_recursive(6, 64, 3, |inner| {
                prop_oneof![
                    (inner.clone(), inner.clone(), any::<u8>()).prop_map(|(l, r, k)| {
                        let op = match k % 5 {
                            0 => BinOp::Add,
                            1 => BinOp::Sub,
                            2 => BinOp::Mul,
                            3 => BinOp::Div,
                            _ => BinOp::Pow,
                        };
                        Ast::Binary(op, Box::new(l), Box::new(r))
                    }),
                    inner.clone().prop_map(|a| Ast::Neg(Box::new(a))),
                    (inner, any::<u8>()).prop_map(|(a, k)| {
                        let f = [
                            Func::Sin,
                            Func::Cos,
                            Func::Tanh,
                            Func::Arctan,
                            Func::Abs,
                            Func::Exp,
                        ][k as usize % 6];
                        Ast::Call(f, Box::new(a))
                    }),
                ]
            })
        }

        proptest! {
            /// Printing then reparsing reproduces the syntax tree.
            #[test]
            fn print_parse_roundtrip(ast in arb_ast()) {
                let expr = Expression { root: ast };
                let printed = expr.to_string();
                let reparsed = parse(&printed).unwrap();
                prop_assert_eq!(&reparsed, &expr, "printed: {}", printed);
                prop_assert_eq!(reparsed.to_string(), printed);
            }

            /// The compiled evaluator agrees with the tree-walking one.
            #[test]
            fn compiled_eval_matches_tree_eval(
                ast in arb_ast(),
                t in -3.0..3.0f64,
                x1 in -3.0..3.0f64,
                x2 in -3.0..3.0f64,
            ) {
                let expr = Expression { root: ast };
                let env: HashMap<String, f64> = [
                    ("t".to_string(), t),
                    ("x1".to_string(), x1),
                    ("x2".to_string(), x2),
                ].into_iter().collect();
                let compiled = expr.compile(VarSpace::state_and_time(2)).unwrap();
                match (expr.eval(&env), compiled.eval(t, 0.0, &[x1, x2])) {
                    (Ok(a), Ok(b)) => prop_assert!(
                        (a - b).abs() <= 1e-12 * a.abs().max(1.0),
                        "{a} vs {b}"
                    ),
                    (Err(_), Err(_)) => {}
                    (a, b) => prop_assert!(false, "divergent outcomes: {a:?} vs {b:?}"),
                }
            }

            /// Arbitrary ASCII input never panics the parser.
            #[test]
            fn parser_never_panics(text in "[ -~]{0,200}") {
                let _ = parse(&text);
            }
        }
    }
}
