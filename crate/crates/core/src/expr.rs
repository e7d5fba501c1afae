//! Scalar expressions over named state/control symbols.
//!
//! Expressions are parsed once into an immutable [`ExpressionAst`], which is
//! compiled into a flat instruction tape. The tape is evaluated either for
//! values only or with forward-mode dual numbers carrying one partial per
//! declared symbol.
//!
//! Grammar (whitespace is insignificant):
//!
//! ```text
//! expr    := term (('+' | '-') term)*
//! term    := unary (('*' | '/') unary)*
//! unary   := '-' unary | postfix
//! postfix := atom ('^' ['-'] integer)*
//! atom    := number | ident | func '(' args ')' | '(' expr ')'
//! func    := abs | sin | cos | exp | min | max | min2 | max2
//! number  := digits ['.' digits] [('e' | 'E') ['+' | '-'] digits]
//! ```
//!
//! `min`/`max` take exactly two arguments, every other function takes one.
//! Exponents are integer literals only.

use std::fmt;
use std::ops::{Add, Div, Mul, Neg, Sub};

use smallvec::SmallVec;
use thiserror::Error;

/// Node of an expression tree. Variables are indices into the symbol table
/// the expression was parsed against.
#[derive(Debug, Clone, PartialEq)]
pub enum Node {
    Const(f64),
    Var(usize),
    Neg(Box<Node>),
    Add(Box<Node>, Box<Node>),
    Sub(Box<Node>, Box<Node>),
    Mul(Box<Node>, Box<Node>),
    Div(Box<Node>, Box<Node>),
    Pow(Box<Node>, i32),
    Abs(Box<Node>),
    Min(Box<Node>, Box<Node>),
    Max(Box<Node>, Box<Node>),
    Sin(Box<Node>),
    Cos(Box<Node>),
    Exp(Box<Node>),
}

impl Node {
    pub fn constant(v: f64) -> Node {
        Node::Const(v)
    }

    pub fn var(index: usize) -> Node {
        Node::Var(index)
    }

    pub fn powi(self, k: i32) -> Node {
        Node::Pow(Box::new(self), k)
    }

    pub fn abs(self) -> Node {
        Node::Abs(Box::new(self))
    }

    pub fn min2(self, other: Node) -> Node {
        Node::Min(Box::new(self), Box::new(other))
    }

    pub fn max2(self, other: Node) -> Node {
        Node::Max(Box::new(self), Box::new(other))
    }

    pub fn sin(self) -> Node {
        Node::Sin(Box::new(self))
    }

    pub fn cos(self) -> Node {
        Node::Cos(Box::new(self))
    }

    pub fn exp(self) -> Node {
        Node::Exp(Box::new(self))
    }

    fn children(&self) -> SmallVec<[&Node; 2]> {
        use Node::*;
        match self {
            Const(_) | Var(_) => SmallVec::new(),
            Neg(a) | Pow(a, _) | Abs(a) | Sin(a) | Cos(a) | Exp(a) => smallvec::smallvec![&**a],
            Add(a, b) | Sub(a, b) | Mul(a, b) | Div(a, b) | Min(a, b) | Max(a, b) => {
                smallvec::smallvec![&**a, &**b]
            }
        }
    }

    fn visit(&self, f: &mut impl FnMut(&Node)) {
        f(self);
        for c in self.children() {
            c.visit(f);
        }
    }

    /// Polynomial degree of the node in the variables selected by `is_tracked`.
    /// `None` stands for "not a polynomial of bounded degree" in those variables.
    fn degree_in(&self, is_tracked: &impl Fn(usize) -> bool) -> Option<u32> {
        use Node::*;
        match self {
            Const(_) => Some(0),
            Var(i) => Some(u32::from(is_tracked(*i))),
            Neg(a) => a.degree_in(is_tracked),
            Add(a, b) | Sub(a, b) => Some(a.degree_in(is_tracked)?.max(b.degree_in(is_tracked)?)),
            Mul(a, b) => Some(a.degree_in(is_tracked)? + b.degree_in(is_tracked)?),
            Div(a, b) => match b.degree_in(is_tracked)? {
                0 => a.degree_in(is_tracked),
                _ => None,
            },
            Pow(a, k) => {
                let d = a.degree_in(is_tracked)?;
                if d == 0 {
                    Some(0)
                } else if *k >= 0 {
                    Some(d * (*k as u32))
                } else {
                    None
                }
            }
            Abs(a) | Sin(a) | Cos(a) | Exp(a) => match a.degree_in(is_tracked)? {
                0 => Some(0),
                _ => None,
            },
            Min(a, b) | Max(a, b) => {
                match (a.degree_in(is_tracked)?, b.degree_in(is_tracked)?) {
                    (0, 0) => Some(0),
                    _ => None,
                }
            }
        }
    }
}

macro_rules! binop {
    ($tr:ident, $method:ident, $variant:ident) => {
        impl $tr for Node {
            type Output = Node;
            fn $method(self, rhs: Node) -> Node {
                Node::$variant(Box::new(self), Box::new(rhs))
            }
        }
        impl $tr<f64> for Node {
            type Output = Node;
            fn $method(self, rhs: f64) -> Node {
                Node::$variant(Box::new(self), Box::new(Node::Const(rhs)))
            }
        }
        impl $tr<Node> for f64 {
            type Output = Node;
            fn $method(self, rhs: Node) -> Node {
                Node::$variant(Box::new(Node::Const(self)), Box::new(rhs))
            }
        }
    };
}

binop!(Add, add, Add);
binop!(Sub, sub, Sub);
binop!(Mul, mul, Mul);
binop!(Div, div, Div);

impl Neg for Node {
    type Output = Node;
    fn neg(self) -> Node {
        Node::Neg(Box::new(self))
    }
}

/// Ordered symbol names plus optional aliases resolving to the same index.
#[derive(Debug, Clone, PartialEq)]
pub struct Symbols {
    names: Vec<String>,
    aliases: Vec<(String, usize)>,
}

impl Symbols {
    pub fn new<S: AsRef<str>>(names: &[S]) -> Result<Self, ParseError> {
        let names: Vec<String> = names.iter().map(|s| s.as_ref().to_string()).collect();
        for (i, name) in names.iter().enumerate() {
            if !is_identifier(name) || is_function_name(name) {
                return Err(ParseError::new(ParseErrorKind::InvalidSymbol(name.clone()), 0));
            }
            if names[..i].contains(name) {
                return Err(ParseError::new(ParseErrorKind::DuplicateSymbol(name.clone()), 0));
            }
        }
        Ok(Symbols { names, aliases: Vec::new() })
    }

    pub fn with_alias(mut self, alias: &str, index: usize) -> Self {
        if index < self.names.len() && self.lookup(alias).is_none() {
            self.aliases.push((alias.to_string(), index));
        }
        self
    }

    pub fn len(&self) -> usize {
        self.names.len()
    }

    pub fn is_empty(&self) -> bool {
        self.names.is_empty()
    }

    pub fn name(&self, index: usize) -> &str {
        &self.names[index]
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    pub fn lookup(&self, ident: &str) -> Option<usize> {
        self.names
            .iter()
            .position(|n| n == ident)
            .or_else(|| self.aliases.iter().find(|(a, _)| a == ident).map(|(_, i)| *i))
    }
}

fn is_identifier(s: &str) -> bool {
    let mut chars = s.chars();
    matches!(chars.next(), Some(c) if c.is_ascii_alphabetic() || c == '_')
        && chars.all(|c| c.is_ascii_alphanumeric() || c == '_')
}

fn is_function_name(s: &str) -> bool {
    matches!(s, "abs" | "sin" | "cos" | "exp" | "min" | "max" | "min2" | "max2")
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ParseErrorKind {
    #[error("empty expression")]
    Empty,
    #[error("unexpected character '{0}'")]
    UnexpectedChar(char),
    #[error("unexpected token: {0}")]
    UnexpectedToken(String),
    #[error("unexpected end of input")]
    UnexpectedEnd,
    #[error("invalid number literal '{0}'")]
    InvalidNumber(String),
    #[error("exponent must be an integer literal")]
    NonIntegerExponent,
    #[error("unknown identifier '{0}'")]
    UnknownIdentifier(String),
    #[error("function '{name}' expects {expected} argument(s), got {got}")]
    Arity { name: String, expected: usize, got: usize },
    #[error("invalid symbol name '{0}'")]
    InvalidSymbol(String),
    #[error("duplicate symbol name '{0}'")]
    DuplicateSymbol(String),
}

#[derive(Debug, Clone, PartialEq, Error)]
#[error("{kind} at position {position}")]
pub struct ParseError {
    pub kind: ParseErrorKind,
    /// Byte offset into the source text.
    pub position: usize,
}

impl ParseError {
    fn new(kind: ParseErrorKind, position: usize) -> Self {
        ParseError { kind, position }
    }
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum EvalError {
    #[error("point has {got} coordinates, expected {expected}")]
    Dimension { expected: usize, got: usize },
    #[error("division by zero")]
    DivisionByZero,
    #[error("nonsmooth kink hit without one-sided derivative mode")]
    KinkHit,
    #[error("non-finite value produced")]
    NonFinite,
}

#[derive(Debug, Clone, PartialEq)]
enum Token {
    Num(f64),
    Ident(String),
    Plus,
    Minus,
    Star,
    Slash,
    Caret,
    LParen,
    RParen,
    Comma,
}

fn tokenize(src: &str) -> Result<Vec<(Token, usize)>, ParseError> {
    let bytes = src.as_bytes();
    let mut out = Vec::new();
    let mut i = 0;
    while i < bytes.len() {
        let c = bytes[i] as char;
        let start = i;
        match c {
            ' ' | '\t' | '\n' | '\r' => {
                i += 1;
                continue;
            }
            '+' => out.push((Token::Plus, start)),
            '-' => out.push((Token::Minus, start)),
            '*' => out.push((Token::Star, start)),
            '/' => out.push((Token::Slash, start)),
            '^' => out.push((Token::Caret, start)),
            '(' => out.push((Token::LParen, start)),
            ')' => out.push((Token::RParen, start)),
            ',' => out.push((Token::Comma, start)),
            _ if c.is_ascii_digit() || c == '.' => {
                while i < bytes.len() && (bytes[i].is_ascii_digit() || bytes[i] == b'.') {
                    i += 1;
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
                    } else {
                        let text = &src[start..j.min(bytes.len())];
                        return Err(ParseError::new(
                            ParseErrorKind::InvalidNumber(text.to_string()),
                            start,
                        ));
                    }
                }
                let text = &src[start..i];
                let v: f64 = text.parse().map_err(|_| {
                    ParseError::new(ParseErrorKind::InvalidNumber(text.to_string()), start)
                })?;
                out.push((Token::Num(v), start));
                continue;
            }
            _ if c.is_ascii_alphabetic() || c == '_' => {
                while i < bytes.len() && (bytes[i].is_ascii_alphanumeric() || bytes[i] == b'_') {
                    i += 1;
                }
                out.push((Token::Ident(src[start..i].to_string()), start));
                continue;
            }
            _ => {
                let ch = src[start..].chars().next().unwrap_or(c);
                return Err(ParseError::new(ParseErrorKind::UnexpectedChar(ch), start));
            }
        }
        i += 1;
    }
    Ok(out)
}

struct Parser<'a> {
    tokens: Vec<(Token, usize)>,
    pos: usize,
    end: usize,
    symbols: &'a Symbols,
}

impl Parser<'_> {
    fn peek(&self) -> Option<&Token> {
        self.tokens.get(self.pos).map(|(t, _)| t)
    }

    fn offset(&self) -> usize {
        self.tokens.get(self.pos).map_or(self.end, |(_, p)| *p)
    }

    fn bump(&mut self) -> Option<Token> {
        let t = self.tokens.get(self.pos).map(|(t, _)| t.clone());
        self.pos += 1;
        t
    }

    fn unexpected(&self) -> ParseError {
        match self.tokens.get(self.pos) {
            Some((t, p)) => ParseError::new(ParseErrorKind::UnexpectedToken(format!("{t:?}")), *p),
            None => ParseError::new(ParseErrorKind::UnexpectedEnd, self.end),
        }
    }

    fn expect(&mut self, tok: Token) -> Result<(), ParseError> {
        if self.peek() == Some(&tok) {
            self.pos += 1;
            Ok(())
        } else {
            Err(self.unexpected())
        }
    }

    fn expr(&mut self) -> Result<Node, ParseError> {
        let mut lhs = self.term()?;
        loop {
            match self.peek() {
                Some(Token::Plus) => {
                    self.pos += 1;
                    lhs = lhs + self.term()?;
                }
                Some(Token::Minus) => {
                    self.pos += 1;
                    lhs = lhs - self.term()?;
                }
                _ => return Ok(lhs),
            }
        }
    }

    fn term(&mut self) -> Result<Node, ParseError> {
        let mut lhs = self.unary()?;
        loop {
            match self.peek() {
                Some(Token::Star) => {
                    self.pos += 1;
                    lhs = lhs * self.unary()?;
                }
                Some(Token::Slash) => {
                    self.pos += 1;
                    lhs = lhs / self.unary()?;
                }
                _ => return Ok(lhs),
            }
        }
    }

    fn unary(&mut self) -> Result<Node, ParseError> {
        if self.peek() == Some(&Token::Minus) {
            self.pos += 1;
            return Ok(-self.unary()?);
        }
        self.postfix()
    }

    fn postfix(&mut self) -> Result<Node, ParseError> {
        let mut base = self.atom()?;
        while self.peek() == Some(&Token::Caret) {
            self.pos += 1;
            let negative = if self.peek() == Some(&Token::Minus) {
                self.pos += 1;
                true
            } else {
                false
            };
            let at = self.offset();
            match self.bump() {
                Some(Token::Num(v)) if v.fract() == 0.0 && v.abs() <= i32::MAX as f64 => {
                    let k = v as i32;
                    base = base.powi(if negative { -k } else { k });
                }
                Some(Token::Num(_)) => {
                    return Err(ParseError::new(ParseErrorKind::NonIntegerExponent, at))
                }
                _ => return Err(ParseError::new(ParseErrorKind::NonIntegerExponent, at)),
            }
        }
        Ok(base)
    }

    fn atom(&mut self) -> Result<Node, ParseError> {
        let at = self.offset();
        match self.bump() {
            Some(Token::Num(v)) => Ok(Node::Const(v)),
            Some(Token::LParen) => {
                let e = self.expr()?;
                self.expect(Token::RParen)?;
                Ok(e)
            }
            Some(Token::Ident(name)) => {
                if is_function_name(&name) && self.peek() == Some(&Token::LParen) {
                    self.pos += 1;
                    let mut args = vec![self.expr()?];
                    while self.peek() == Some(&Token::Comma) {
                        self.pos += 1;
                        args.push(self.expr()?);
                    }
                    self.expect(Token::RParen)?;
                    build_call(&name, args, at)
                } else if let Some(i) = self.symbols.lookup(&name) {
                    Ok(Node::Var(i))
                } else {
                    Err(ParseError::new(ParseErrorKind::UnknownIdentifier(name), at))
                }
            }
            Some(_) => {
                self.pos -= 1;
                Err(self.unexpected())
            }
            None => Err(ParseError::new(ParseErrorKind::UnexpectedEnd, self.end)),
        }
    }
}

fn build_call(name: &str, args: Vec<Node>, at: usize) -> Result<Node, ParseError> {
    let expected = if matches!(name, "min" | "max" | "min2" | "max2") { 2 } else { 1 };
    if args.len() != expected {
        return Err(ParseError::new(
            ParseErrorKind::Arity { name: name.to_string(), expected, got: args.len() },
            at,
        ));
    }
    let mut it = args.into_iter();
    let a = it.next().unwrap();
    Ok(match name {
        "abs" => a.abs(),
        "sin" => a.sin(),
        "cos" => a.cos(),
        "exp" => a.exp(),
        "min" | "min2" => a.min2(it.next().unwrap()),
        _ => a.max2(it.next().unwrap()),
    })
}

/// Parse `source` against the ordered symbol list.
pub fn parse_expression(source: &str, symbols: &Symbols) -> Result<ExpressionAst, ParseError> {
    if source.trim().is_empty() {
        return Err(ParseError::new(ParseErrorKind::Empty, 0));
    }
    let tokens = tokenize(source)?;
    let mut p = Parser { tokens, pos: 0, end: source.len(), symbols };
    let root = p.expr()?;
    if p.pos < p.tokens.len() {
        return Err(p.unexpected());
    }
    Ok(ExpressionAst::new(root, symbols.clone()))
}

/// An immutable, compiled expression.
#[derive(Debug, Clone)]
pub struct ExpressionAst {
    root: Node,
    symbols: Symbols,
    tape: Vec<Instr>,
}

impl PartialEq for ExpressionAst {
    fn eq(&self, other: &Self) -> bool {
        self.root == other.root && self.symbols.names == other.symbols.names
    }
}

#[derive(Debug, Clone, Copy)]
enum Instr {
    Const(f64),
    Var(usize),
    Neg(usize),
    Add(usize, usize),
    Sub(usize, usize),
    Mul(usize, usize),
    Div(usize, usize),
    Pow(usize, i32),
    Abs(usize),
    Min(usize, usize),
    Max(usize, usize),
    Sin(usize),
    Cos(usize),
    Exp(usize),
}

fn compile(node: &Node, tape: &mut Vec<Instr>) -> usize {
    let instr = match node {
        Node::Const(v) => Instr::Const(*v),
        Node::Var(i) => Instr::Var(*i),
        Node::Neg(a) => Instr::Neg(compile(a, tape)),
        Node::Add(a, b) => {
            let (a, b) = (compile(a, tape), compile(b, tape));
            Instr::Add(a, b)
        }
        Node::Sub(a, b) => {
            let (a, b) = (compile(a, tape), compile(b, tape));
            Instr::Sub(a, b)
        }
        Node::Mul(a, b) => {
            let (a, b) = (compile(a, tape), compile(b, tape));
            Instr::Mul(a, b)
        }
        Node::Div(a, b) => {
            let (a, b) = (compile(a, tape), compile(b, tape));
            Instr::Div(a, b)
        }
        Node::Pow(a, k) => Instr::Pow(compile(a, tape), *k),
        Node::Abs(a) => Instr::Abs(compile(a, tape)),
        Node::Min(a, b) => {
            let (a, b) = (compile(a, tape), compile(b, tape));
            Instr::Min(a, b)
        }
        Node::Max(a, b) => {
            let (a, b) = (compile(a, tape), compile(b, tape));
            Instr::Max(a, b)
        }
        Node::Sin(a) => Instr::Sin(compile(a, tape)),
        Node::Cos(a) => Instr::Cos(compile(a, tape)),
        Node::Exp(a) => Instr::Exp(compile(a, tape)),
    };
    tape.push(instr);
    tape.len() - 1
}

/// Derivative policy at the kinks of `abs`, `min` and `max`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum KinkMode {
    /// Evaluating exactly at a kink is an error.
    #[default]
    Strict,
    /// Take the right branch and raise the `nonsmooth_hit` flag.
    OneSided,
}

/// Value and gradient with respect to every declared symbol.
#[derive(Debug, Clone, PartialEq)]
pub struct DualNumberVector {
    pub value: f64,
    pub partials: Vec<f64>,
    pub nonsmooth_hit: bool,
}

impl ExpressionAst {
    pub fn new(root: Node, symbols: Symbols) -> Self {
        let mut tape = Vec::new();
        compile(&root, &mut tape);
        ExpressionAst { root, symbols, tape }
    }

    pub fn root(&self) -> &Node {
        &self.root
    }

    pub fn symbols(&self) -> &Symbols {
        &self.symbols
    }

    /// True when the tree contains a division, `abs`, `min` or `max`.
    pub fn is_potentially_nonsmooth(&self) -> bool {
        let mut flag = false;
        self.root.visit(&mut |n| {
            flag |= matches!(n, Node::Div(..) | Node::Abs(_) | Node::Min(..) | Node::Max(..))
        });
        flag
    }

    pub fn depends_on(&self, index: usize) -> bool {
        let mut hit = false;
        self.root.visit(&mut |n| hit |= matches!(n, Node::Var(i) if *i == index));
        hit
    }

    /// True when the expression is affine in the symbols selected by `is_tracked`
    /// for every fixed value of the remaining symbols (checked syntactically).
    pub fn is_affine_in(&self, is_tracked: impl Fn(usize) -> bool) -> bool {
        matches!(self.root.degree_in(&is_tracked), Some(0 | 1))
    }

    fn check_len(&self, point: &[f64]) -> Result<(), EvalError> {
        if point.len() != self.symbols.len() {
            return Err(EvalError::Dimension { expected: self.symbols.len(), got: point.len() });
        }
        Ok(())
    }

    /// Value only. Kinks are not errors here since no derivative is taken.
    pub fn eval(&self, point: &[f64]) -> Result<f64, EvalError> {
        self.check_len(point)?;
        let mut slots: SmallVec<[f64; 48]> = SmallVec::with_capacity(self.tape.len());
        for instr in &self.tape {
            let v = match *instr {
                Instr::Const(c) => c,
                Instr::Var(i) => point[i],
                Instr::Neg(a) => -slots[a],
                Instr::Add(a, b) => slots[a] + slots[b],
                Instr::Sub(a, b) => slots[a] - slots[b],
                Instr::Mul(a, b) => slots[a] * slots[b],
                Instr::Div(a, b) => {
                    if slots[b] == 0.0 {
                        return Err(EvalError::DivisionByZero);
                    }
                    slots[a] / slots[b]
                }
                Instr::Pow(a, k) => {
                    if k < 0 && slots[a] == 0.0 {
                        return Err(EvalError::DivisionByZero);
                    }
                    slots[a].powi(k)
                }
                Instr::Abs(a) => slots[a].abs(),
                Instr::Min(a, b) => slots[a].min(slots[b]),
                Instr::Max(a, b) => slots[a].max(slots[b]),
                Instr::Sin(a) => slots[a].sin(),
                Instr::Cos(a) => slots[a].cos(),
                Instr::Exp(a) => slots[a].exp(),
            };
            slots.push(v);
        }
        let v = *slots.last().expect("tape is never empty");
        if v.is_finite() {
            Ok(v)
        } else {
            Err(EvalError::NonFinite)
        }
    }

    /// Value and exact first partials (forward mode).
    pub fn eval_with_gradient(
        &self,
        point: &[f64],
        mode: KinkMode,
    ) -> Result<DualNumberVector, EvalError> {
        self.check_len(point)?;
        let nv = self.symbols.len();
        let stride = nv + 1;
        let mut buf: SmallVec<[f64; 256]> = smallvec::smallvec![0.0; stride * self.tape.len()];
        let mut kink = false;
        for (k, instr) in self.tape.iter().enumerate() {
            let (done, cur) = buf.split_at_mut(k * stride);
            let cur = &mut cur[..stride];
            let slot = |i: usize| &done[i * stride..(i + 1) * stride];
            // cur[0] = value, cur[1..] = partials
            match *instr {
                Instr::Const(c) => cur[0] = c,
                Instr::Var(i) => {
                    cur[0] = point[i];
                    cur[1 + i] = 1.0;
                }
                Instr::Neg(a) => {
                    for (c, x) in cur.iter_mut().zip(slot(a)) {
                        *c = -x;
                    }
                }
                Instr::Add(a, b) => {
                    for ((c, x), y) in cur.iter_mut().zip(slot(a)).zip(slot(b)) {
                        *c = x + y;
                    }
                }
                Instr::Sub(a, b) => {
                    for ((c, x), y) in cur.iter_mut().zip(slot(a)).zip(slot(b)) {
                        *c = x - y;
                    }
                }
                Instr::Mul(a, b) => {
                    let (sa, sb) = (slot(a), slot(b));
                    cur[0] = sa[0] * sb[0];
                    for j in 1..stride {
                        cur[j] = sa[j] * sb[0] + sa[0] * sb[j];
                    }
                }
                Instr::Div(a, b) => {
                    let (sa, sb) = (slot(a), slot(b));
                    if sb[0] == 0.0 {
                        return Err(EvalError::DivisionByZero);
                    }
                    let q = sa[0] / sb[0];
                    cur[0] = q;
                    for j in 1..stride {
                        cur[j] = (sa[j] - q * sb[j]) / sb[0];
                    }
                }
                Instr::Pow(a, p) => {
                    let sa = slot(a);
                    if p < 0 && sa[0] == 0.0 {
                        return Err(EvalError::DivisionByZero);
                    }
                    cur[0] = sa[0].powi(p);
                    let d = if p == 0 { 0.0 } else { f64::from(p) * sa[0].powi(p - 1) };
                    for j in 1..stride {
                        cur[j] = d * sa[j];
                    }
                }
                Instr::Abs(a) => {
                    let sa = slot(a);
                    if sa[0] == 0.0 {
                        if mode == KinkMode::Strict {
                            return Err(EvalError::KinkHit);
                        }
                        kink = true;
                    }
                    let s = if sa[0] < 0.0 { -1.0 } else { 1.0 };
                    for (c, x) in cur.iter_mut().zip(sa) {
                        *c = s * x;
                    }
                }
                Instr::Min(a, b) | Instr::Max(a, b) => {
                    let (sa, sb) = (slot(a), slot(b));
                    if sa[0] == sb[0] {
                        if mode == KinkMode::Strict {
                            return Err(EvalError::KinkHit);
                        }
                        kink = true;
                    }
                    let take_a = match *instr {
                        Instr::Min(..) => sa[0] < sb[0],
                        _ => sa[0] > sb[0],
                    };
                    cur.copy_from_slice(if take_a { sa } else { sb });
                }
                Instr::Sin(a) => {
                    let sa = slot(a);
                    cur[0] = sa[0].sin();
                    let d = sa[0].cos();
                    for j in 1..stride {
                        cur[j] = d * sa[j];
                    }
                }
                Instr::Cos(a) => {
                    let sa = slot(a);
                    cur[0] = sa[0].cos();
                    let d = -sa[0].sin();
                    for j in 1..stride {
                        cur[j] = d * sa[j];
                    }
                }
                Instr::Exp(a) => {
                    let sa = slot(a);
                    let e = sa[0].exp();
                    cur[0] = e;
                    for j in 1..stride {
                        cur[j] = e * sa[j];
                    }
                }
            }
        }
        let last = &buf[(self.tape.len() - 1) * stride..];
        if !last.iter().all(|v| v.is_finite()) {
            return Err(EvalError::NonFinite);
        }
        Ok(DualNumberVector { value: last[0], partials: last[1..].to_vec(), nonsmooth_hit: kink })
    }
}

struct Pretty<'a>(&'a Node, &'a Symbols);

impl<'a> fmt::Display for Pretty<'a> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = self.1;
        let p = |n: &'a Node| Pretty(n, s);
        match self.0 {
            Node::Const(v) => write!(f, "{v:?}"),
            Node::Var(i) => f.write_str(s.name(*i)),
            Node::Neg(a) => write!(f, "(-{})", p(a)),
            Node::Add(a, b) => write!(f, "({} + {})", p(a), p(b)),
            Node::Sub(a, b) => write!(f, "({} - {})", p(a), p(b)),
            Node::Mul(a, b) => write!(f, "({} * {})", p(a), p(b)),
            Node::Div(a, b) => write!(f, "({} / {})", p(a), p(b)),
            Node::Pow(a, k) => write!(f, "({}^{})", p(a), k),
            Node::Abs(a) => write!(f, "abs({})", p(a)),
            Node::Min(a, b) => write!(f, "min({}, {})", p(a), p(b)),
            Node::Max(a, b) => write!(f, "max({}, {})", p(a), p(b)),
            Node::Sin(a) => write!(f, "sin({})", p(a)),
            Node::Cos(a) => write!(f, "cos({})", p(a)),
            Node::Exp(a) => write!(f, "exp({})", p(a)),
        }
    }
}

/// Fully parenthesised rendering that re-parses to the same tree.
impl fmt::Display for ExpressionAst {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        Pretty(&self.root, &self.symbols).fmt(f)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn syms(names: &[&str]) -> Symbols {
        Symbols::new(names).unwrap()
    }

    #[test]
    fn parses_mixed_constraint_of_first_spring() {
        let s = syms(&["x1", "x2", "u"]);
        let ast = parse_expression("x2 - u", &s).unwrap();
        assert_eq!(ast.root(), &(Node::var(1) - Node::var(2)));
    }

    #[test]
    fn parses_constant_zero() {
        let ast = parse_expression("0", &syms(&["x1"])).unwrap();
        assert_eq!(ast.root(), &Node::Const(0.0));
    }

    #[test]
    fn parses_product_constraint_of_second_spring() {
        let s = syms(&["x1", "x2", "u"]);
        let ast = parse_expression("x2*(x2 - u)", &s).unwrap();
        let (mut muls, mut subs) = (0, 0);
        ast.root().visit(&mut |n| match n {
            Node::Mul(..) => muls += 1,
            Node::Sub(..) => subs += 1,
            _ => {}
        });
        assert_eq!((muls, subs), (1, 1));
    }

    #[test]
    fn precedence_and_unary_minus() {
        let s = syms(&["x"]);
        let ast = parse_expression("-x^2 + 3*x/2", &s).unwrap();
        assert_eq!(ast.eval(&[2.0]).unwrap(), -4.0 + 3.0);
        let ast = parse_expression("2^-1 * x", &s).unwrap();
        assert_eq!(ast.eval(&[4.0]).unwrap(), 2.0);
    }

    #[test]
    fn reports_unknown_identifier_with_name_and_position() {
        let err = parse_expression("x1 + y", &syms(&["x1"])).unwrap_err();
        assert_eq!(err.kind, ParseErrorKind::UnknownIdentifier("y".into()));
        assert_eq!(err.position, 5);
    }

    #[test]
    fn reports_syntax_errors_with_position() {
        let s = syms(&["x1"]);
        let err = parse_expression("x1 + * 2", &s).unwrap_err();
        assert_eq!(err.position, 5);
        assert!(matches!(parse_expression("(x1", &s).unwrap_err().kind, ParseErrorKind::UnexpectedEnd));
        assert!(matches!(
            parse_expression("x1^2.5", &s).unwrap_err().kind,
            ParseErrorKind::NonIntegerExponent
        ));
        assert!(matches!(parse_expression("  ", &s).unwrap_err().kind, ParseErrorKind::Empty));
        assert!(matches!(
            parse_expression("min(x1)", &s).unwrap_err().kind,
            ParseErrorKind::Arity { .. }
        ));
        assert!(matches!(
            parse_expression("x1 $ 2", &s).unwrap_err().kind,
            ParseErrorKind::UnexpectedChar('$')
        ));
    }

    #[test]
    fn aliases_resolve_to_declared_index() {
        let s = syms(&["x1", "u1"]).with_alias("x", 0).with_alias("u", 1);
        let ast = parse_expression("x - u", &s).unwrap();
        assert_eq!(ast.root(), &(Node::var(0) - Node::var(1)));
        // printing uses canonical names
        assert_eq!(ast.to_string(), "(x1 - u1)");
    }

    #[test]
    fn gradient_of_linear_expression() {
        let s = syms(&["x1", "x2", "u"]);
        let ast = parse_expression("x2 - u", &s).unwrap();
        let d = ast.eval_with_gradient(&[0.0, 0.3, 0.1], KinkMode::Strict).unwrap();
        assert!((d.value - 0.2).abs() < 1e-15);
        assert_eq!(d.partials, vec![0.0, 1.0, -1.0]);
        assert!(!d.nonsmooth_hit);
    }

    #[test]
    fn gradient_of_product_constraint() {
        let s = syms(&["x1", "x2", "u"]);
        let ast = parse_expression("x2*(x2-u)", &s).unwrap();
        let d = ast.eval_with_gradient(&[0.0, 0.5, 1.0], KinkMode::Strict).unwrap();
        assert_eq!(d.value, -0.25);
        assert_eq!(d.partials, vec![0.0, 0.0, -0.5]);
        // finite-difference oracle
        let h = 1e-6;
        for j in 0..3 {
            let mut p = [0.0, 0.5, 1.0];
            let mut q = p;
            p[j] += h;
            q[j] -= h;
            let fd = (ast.eval(&p).unwrap() - ast.eval(&q).unwrap()) / (2.0 * h);
            assert!((fd - d.partials[j]).abs() < 1e-8);
        }
    }

    #[test]
    fn kink_flags_and_errors() {
        let s = syms(&["x1", "x2", "u"]);
        let ast = parse_expression("abs(x2)", &s).unwrap();
        let d = ast.eval_with_gradient(&[0.0, 0.0, 0.0], KinkMode::OneSided).unwrap();
        assert!(d.nonsmooth_hit);
        assert_eq!(d.partials, vec![0.0, 1.0, 0.0]);
        assert_eq!(
            ast.eval_with_gradient(&[0.0, 0.0, 0.0], KinkMode::Strict).unwrap_err(),
            EvalError::KinkHit
        );
        let m = parse_expression("max(x1, x2)", &s).unwrap();
        let d = m.eval_with_gradient(&[1.0, 1.0, 0.0], KinkMode::OneSided).unwrap();
        assert!(d.nonsmooth_hit);
        assert_eq!(d.partials, vec![0.0, 1.0, 0.0]);
        let d = m.eval_with_gradient(&[2.0, 1.0, 0.0], KinkMode::Strict).unwrap();
        assert_eq!(d.partials, vec![1.0, 0.0, 0.0]);
    }

    #[test]
    fn division_by_zero_is_an_error() {
        let s = syms(&["x"]);
        let ast = parse_expression("1/x", &s).unwrap();
        assert_eq!(ast.eval(&[0.0]).unwrap_err(), EvalError::DivisionByZero);
        assert_eq!(
            ast.eval_with_gradient(&[0.0], KinkMode::OneSided).unwrap_err(),
            EvalError::DivisionByZero
        );
        let ast = parse_expression("x^-2", &s).unwrap();
        assert_eq!(ast.eval(&[0.0]).unwrap_err(), EvalError::DivisionByZero);
    }

    #[test]
    fn dimension_mismatch() {
        let ast = parse_expression("x", &syms(&["x"])).unwrap();
        assert!(matches!(ast.eval(&[1.0, 2.0]), Err(EvalError::Dimension { .. })));
    }

    #[test]
    fn nonsmooth_flag_and_affinity() {
        let s = syms(&["x1", "x2", "u"]);
        let is_u = |i: usize| i == 2;
        let g = parse_expression("x2*(x2 - u)", &s).unwrap();
        assert!(!g.is_potentially_nonsmooth());
        assert!(g.is_affine_in(is_u));
        let q = parse_expression("x2 - u^2", &s).unwrap();
        assert!(!q.is_affine_in(is_u));
        let d = parse_expression("u / (1 + x1^2)", &s).unwrap();
        assert!(d.is_potentially_nonsmooth());
        assert!(d.is_affine_in(is_u));
        let a = parse_expression("abs(x1) + sin(x2) * u", &s).unwrap();
        assert!(a.is_affine_in(is_u));
        assert!(!parse_expression("abs(u)", &s).unwrap().is_affine_in(is_u));
        assert!(g.depends_on(2) && !a.depends_on(3));
    }

    #[test]
    fn pretty_print_round_trip() {
        let s = syms(&["x1", "x2", "u"]);
        for src in [
            "x2*(x2 - u)",
            "-x1^2 + 3.5e-3*cos(u) - exp(-x2)/2",
            "max(x1, min(x2, u)) ^ -3",
            "abs(-u) - -x1",
        ] {
            let a = parse_expression(src, &s).unwrap();
            let b = parse_expression(&a.to_string(), &s).unwrap();
            assert_eq!(a, b, "{src}");
        }
    }
}
