//! Small arithmetic grammar for inline right-hand sides, kernels and
//! reference solutions.
//!
//! ```text
//! expr   := term (('+' | '-') term)*
//! term   := unary (('*' | '/') unary)*
//! unary  := '-' unary | power
//! power  := atom ('^' unary)?
//! atom   := number | name | name '(' expr (',' expr)* ')' | '(' expr ')'
//! ```
//!
//! Names are `x0, x1, ...` (and `x` for `x0`), `s`, `t`, `pi` and `e`.
//! Functions: `sin cos exp abs tanh` (one argument), `min max` (two or more).

use crate::error::{Error, Result};

/// Which variables an expression may reference.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Scope {
    /// Number of state components `x0 .. x{dim-1}`.
    pub dim: usize,
    pub s: bool,
    pub t: bool,
}

impl Scope {
    pub fn state(dim: usize) -> Self {
        Scope { dim, s: false, t: false }
    }

    pub fn time() -> Self {
        Scope { dim: 0, s: false, t: true }
    }

    pub fn kernel() -> Self {
        Scope { dim: 0, s: true, t: true }
    }
}

/// Values bound to the variables at evaluation time.
#[derive(Debug, Clone, Copy, Default)]
pub struct Env<'a> {
    pub x: &'a [f64],
    pub s: f64,
    pub t: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Func {
    Sin,
    Cos,
    Exp,
    Abs,
    Tanh,
    Min,
    Max,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum BinOp {
    Add,
    Sub,
    Mul,
    Div,
    Pow,
}

#[derive(Debug, Clone, PartialEq)]
enum Node {
    Num(f64),
    X(usize),
    S,
    T,
    Neg(Box<Node>),
    Bin(BinOp, Box<Node>, Box<Node>),
    Call(Func, Vec<Node>),
}

/// A parsed expression.
#[derive(Debug, Clone, PartialEq)]
pub struct Expr {
    root: Node,
    source: String,
}

impl Expr {
    pub fn parse(text: &str, scope: Scope) -> Result<Self> {
        let tokens = lex(text)?;
        let mut p = Parser { tokens: &tokens, at: 0, scope, end: text.len() };
        let root = p.expr()?;
        if let Some(tok) = p.peek() {
            return Err(parse_err(tok.pos, format!("unexpected {}", tok.kind.describe())));
        }
        Ok(Expr { root, source: text.to_string() })
    }

    pub fn source(&self) -> &str {
        &self.source
    }

    pub fn eval(&self, env: &Env) -> f64 {
        eval(&self.root, env)
    }
}

/// Evaluates a list of expressions, one per output component.
pub fn expression_eval(exprs: &[Expr], env: &Env) -> Vec<f64> {
    exprs.iter().map(|e| e.eval(env)).collect()
}

fn eval(n: &Node, env: &Env) -> f64 {
    match n {
        Node::Num(v) => *v,
        Node::X(i) => env.x[*i],
        Node::S => env.s,
        Node::T => env.t,
        Node::Neg(a) => -eval(a, env),
        Node::Bin(op, a, b) => {
            let (a, b) = (eval(a, env), eval(b, env));
            match op {
                BinOp::Add => a + b,
                BinOp::Sub => a - b,
                BinOp::Mul => a * b,
                BinOp::Div => a / b,
                BinOp::Pow => a.powf(b),
            }
        }
        Node::Call(f, args) => {
            let first = eval(&args[0], env);
            match f {
                Func::Sin => first.sin(),
                Func::Cos => first.cos(),
                Func::Exp => first.exp(),
                Func::Abs => first.abs(),
                Func::Tanh => first.tanh(),
                Func::Min => args[1..].iter().fold(first, |m, a| m.min(eval(a, env))),
                Func::Max => args[1..].iter().fold(first, |m, a| m.max(eval(a, env))),
            }
        }
    }
}

fn parse_err(pos: usize, msg: String) -> Error {
    Error::Parse { pos, msg }
}

#[derive(Debug, Clone, PartialEq)]
enum Kind {
    Num(f64),
    Name(String),
    Op(char),
    Open,
    Close,
    Comma,
}

impl Kind {
    fn describe(&self) -> String {
        match self {
            Kind::Num(v) => format!("number {v}"),
            Kind::Name(n) => format!("name '{n}'"),
            Kind::Op(c) => format!("operator '{c}'"),
            Kind::Open => "'('".into(),
            Kind::Close => "')'".into(),
            Kind::Comma => "','".into(),
        }
    }
}

#[derive(Debug, Clone)]
struct Token {
    kind: Kind,
    pos: usize,
}

fn lex(text: &str) -> Result<Vec<Token>> {
    let bytes = text.as_bytes();
    let mut out = Vec::new();
    let mut i = 0;
    while i < bytes.len() {
        let c = bytes[i] as char;
        let start = i;
        if c.is_ascii_whitespace() {
            i += 1;
            continue;
        }
        let kind = if c.is_ascii_digit() || c == '.' {
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
                }
            }
            let lit = &text[start..i];
            Kind::Num(lit.parse().map_err(|_| parse_err(start, format!("malformed number '{lit}'")))?)
        } else if c.is_ascii_alphabetic() || c == '_' {
            while i < bytes.len() && (bytes[i].is_ascii_alphanumeric() || bytes[i] == b'_') {
                i += 1;
            }
            Kind::Name(text[start..i].to_string())
        } else {
            i += c.len_utf8();
            match c {
                '+' | '-' | '*' | '/' | '^' => Kind::Op(c),
                '(' => Kind::Open,
                ')' => Kind::Close,
                ',' => Kind::Comma,
                _ => {
                    let ch = text[start..].chars().next().unwrap_or(c);
                    return Err(parse_err(start, format!("unexpected character '{ch}'")));
                }
            }
        };
        out.push(Token { kind, pos: start });
    }
    Ok(out)
}

struct Parser<'a> {
    tokens: &'a [Token],
    at: usize,
    scope: Scope,
    end: usize,
}

impl Parser<'_> {
    fn peek(&self) -> Option<&Token> {
        self.tokens.get(self.at)
    }

    fn next(&mut self) -> Option<Token> {
        let t = self.tokens.get(self.at).cloned();
        self.at += 1;
        t
    }

    fn eat_op(&mut self, ops: &[char]) -> Option<char> {
        match self.peek() {
            Some(Token { kind: Kind::Op(c), .. }) if ops.contains(c) => {
                let c = *c;
                self.at += 1;
                Some(c)
            }
            _ => None,
        }
    }

    fn expect(&mut self, want: Kind) -> Result<()> {
        match self.next() {
            Some(t) if t.kind == want => Ok(()),
            Some(t) => Err(parse_err(t.pos, format!("expected {}, found {}", want.describe(), t.kind.describe()))),
            None => Err(parse_err(self.end, format!("expected {}, found end of input", want.describe()))),
        }
    }

    fn expr(&mut self) -> Result<Node> {
        let mut lhs = self.term()?;
        while let Some(c) = self.eat_op(&['+', '-']) {
            let rhs = self.term()?;
            let op = if c == '+' { BinOp::Add } else { BinOp::Sub };
            lhs = Node::Bin(op, Box::new(lhs), Box::new(rhs));
        }
        Ok(lhs)
    }

    fn term(&mut self) -> Result<Node> {
        let mut lhs = self.unary()?;
        while let Some(c) = self.eat_op(&['*', '/']) {
            let rhs = self.unary()?;
            let op = if c == '*' { BinOp::Mul } else { BinOp::Div };
            lhs = Node::Bin(op, Box::new(lhs), Box::new(rhs));
        }
        Ok(lhs)
    }

    fn unary(&mut self) -> Result<Node> {
        if self.eat_op(&['-']).is_some() {
            return Ok(Node::Neg(Box::new(self.unary()?)));
        }
        if self.eat_op(&['+']).is_some() {
            return self.unary();
        }
        self.power()
    }

    fn power(&mut self) -> Result<Node> {
        let base = self.atom()?;
        if self.eat_op(&['^']).is_some() {
            let exp = self.unary()?;
            return Ok(Node::Bin(BinOp::Pow, Box::new(base), Box::new(exp)));
        }
        Ok(base)
    }

    fn atom(&mut self) -> Result<Node> {
        let Some(tok) = self.next() else {
            return Err(parse_err(self.end, "unexpected end of input".into()));
        };
        match tok.kind {
            Kind::Num(v) => Ok(Node::Num(v)),
            Kind::Open => {
                let inner = self.expr()?;
                self.expect(Kind::Close)?;
                Ok(inner)
            }
            Kind::Name(name) => {
                if matches!(self.peek(), Some(Token { kind: Kind::Open, .. })) {
                    self.at += 1;
                    self.call(&name, tok.pos)
                } else {
                    self.variable(&name, tok.pos)
                }
            }
            other => Err(parse_err(tok.pos, format!("unexpected {}", other.describe()))),
        }
    }

    fn call(&mut self, name: &str, pos: usize) -> Result<Node> {
        let func = match name {
            "sin" => Func::Sin,
            "cos" => Func::Cos,
            "exp" => Func::Exp,
            "abs" => Func::Abs,
            "tanh" => Func::Tanh,
            "min" => Func::Min,
            "max" => Func::Max,
            _ => return Err(parse_err(pos, format!("unknown function '{name}'"))),
        };
        let mut args = vec![self.expr()?];
        while matches!(self.peek(), Some(Token { kind: Kind::Comma, .. })) {
            self.at += 1;
            args.push(self.expr()?);
        }
        self.expect(Kind::Close)?;
        let ok = match func {
            Func::Min | Func::Max => args.len() >= 2,
            _ => args.len() == 1,
        };
        if !ok {
            let want = if matches!(func, Func::Min | Func::Max) { "at least 2" } else { "1" };
            return Err(parse_err(pos, format!("'{name}' takes {want} argument(s), got {}", args.len())));
        }
        Ok(Node::Call(func, args))
    }

    fn variable(&self, name: &str, pos: usize) -> Result<Node> {
        let unknown = || parse_err(pos, format!("unknown variable '{name}'"));
        match name {
            "pi" => Ok(Node::Num(std::f64::consts::PI)),
            "e" => Ok(Node::Num(std::f64::consts::E)),
            "s" if self.scope.s => Ok(Node::S),
            "t" if self.scope.t => Ok(Node::T),
            "x" if self.scope.dim >= 1 => Ok(Node::X(0)),
            _ => {
                let idx = name.strip_prefix('x').filter(|d| !d.is_empty()).ok_or_else(unknown)?;
                let i: usize = idx.parse().map_err(|_| unknown())?;
                if i >= self.scope.dim {
                    return Err(parse_err(pos, format!("'{name}' exceeds the state dimension {}", self.scope.dim)));
                }
                Ok(Node::X(i))
            }
        }
    }
}
