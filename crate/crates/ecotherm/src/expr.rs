//! Money functions given as text expressions.
//!
//! Models beyond the closed-form catalog are declared as infix expressions
//! over the variables `l1..ln` and named constants, e.g. `c1*l1^0.5 + d1*ln(l1)`.
//!
//! Grammar (EBNF):
//!
//! ```text
//! expr     = term , { ("+" | "-") , term } ;
//! term     = unary , { ("*" | "/") , unary } ;
//! unary    = "-" , unary | power ;
//! power    = atom , [ "^" , exponent ] ;
//! exponent = [ "-" ] , ( number | "(" , exponent , ")" ) ;
//! atom     = number | ident | "ln" , "(" , expr , ")" | "(" , expr , ")" ;
//! ident    = lowercase letter , { lowercase letter | digit } ;
//! ```
//!
//! `^` binds tighter than `*` and `/`, which bind tighter than `+` and `-`.
//! Exponents are numeric literals (division desugars to a `-1` power, so the
//! AST has no division node). Identifiers of the form `l<digits>` are variable
//! references; every other identifier is a named constant bound at evaluation.

use std::collections::BTreeSet;
use std::fmt;

use thiserror::Error;

/// Abstract syntax tree of a money function m(λ̄).
#[derive(Debug, Clone, PartialEq)]
pub enum MoneyExpr {
    /// Literal real number.
    Number(f64),
    /// Named constant, bound from the model's constants map at evaluation.
    Constant(String),
    /// Variable reference, 1-based index into λ₁..λₙ.
    Var(usize),
    Add(Box<MoneyExpr>, Box<MoneyExpr>),
    Mul(Box<MoneyExpr>, Box<MoneyExpr>),
    /// Power with a real constant exponent.
    Pow(Box<MoneyExpr>, f64),
    /// Natural logarithm.
    Ln(Box<MoneyExpr>),
}

#[derive(Debug, Clone, Error, PartialEq)]
pub enum ExprError {
    #[error("syntax error at byte {pos}: {msg}")]
    Syntax { pos: usize, msg: String },
    #[error("variable index out of range at byte {pos}: {name} but n_vars = {n_vars}")]
    VarOutOfRange {
        pos: usize,
        name: String,
        n_vars: usize,
    },
    #[error("unknown constant `{0}`")]
    MissingConstant(String),
    #[error("ln of non-positive value {0}")]
    LnNonPositive(f64),
    #[error("evaluation point has dimension {got}, expected {expected}")]
    DimensionMismatch { got: usize, expected: usize },
    #[error("non-finite exponent")]
    NonFiniteExponent,
}

/// Parse a money-function expression over `n_vars` variables `l1..l<n_vars>`.
pub fn parse_money_fn(text: &str, n_vars: usize) -> Result<MoneyExpr, ExprError> {
    let tokens = lex(text)?;
    let mut p = Parser {
        tokens,
        pos: 0,
        n_vars,
    };
    let expr = p.expr()?;
    match p.peek() {
        Token::Eof => Ok(expr),
        t => Err(ExprError::Syntax {
            pos: p.current_pos(),
            msg: format!("unexpected {t}"),
        }),
    }
}

/// Evaluate `expr` at `point` with the given constant bindings.
pub fn eval_money_fn(
    expr: &MoneyExpr,
    point: &[f64],
    constants: &dyn Fn(&str) -> Option<f64>,
) -> Result<f64, ExprError> {
    match expr {
        MoneyExpr::Number(v) => Ok(*v),
        MoneyExpr::Constant(name) => constants(name)
            .ok_or_else(|| ExprError::MissingConstant(name.clone())),
        MoneyExpr::Var(i) => point
            .get(i - 1)
            .copied()
            .ok_or(ExprError::DimensionMismatch {
                got: point.len(),
                expected: *i,
            }),
        MoneyExpr::Add(a, b) => {
            Ok(eval_money_fn(a, point, constants)? + eval_money_fn(b, point, constants)?)
        }
        MoneyExpr::Mul(a, b) => {
            Ok(eval_money_fn(a, point, constants)? * eval_money_fn(b, point, constants)?)
        }
        MoneyExpr::Pow(base, exp) => Ok(eval_money_fn(base, point, constants)?.powf(*exp)),
        MoneyExpr::Ln(inner) => {
            let v = eval_money_fn(inner, point, constants)?;
            if v <= 0.0 {
                Err(ExprError::LnNonPositive(v))
            } else {
                Ok(v.ln())
            }
        }
    }
}

/// Variable indices referenced anywhere in the expression.
pub fn vars_used(expr: &MoneyExpr) -> BTreeSet<usize> {
    let mut out = BTreeSet::new();
    collect_vars(expr, &mut out);
    out
}

fn collect_vars(expr: &MoneyExpr, out: &mut BTreeSet<usize>) {
    match expr {
        MoneyExpr::Number(_) | MoneyExpr::Constant(_) => {}
        MoneyExpr::Var(i) => {
            out.insert(*i);
        }
        MoneyExpr::Add(a, b) | MoneyExpr::Mul(a, b) => {
            collect_vars(a, out);
            collect_vars(b, out);
        }
        MoneyExpr::Pow(a, _) | MoneyExpr::Ln(a) => collect_vars(a, out),
    }
}

/// Split the expression into top-level additive terms.
pub fn additive_terms(expr: &MoneyExpr) -> Vec<&MoneyExpr> {
    let mut terms = Vec::new();
    flatten_add(expr, &mut terms);
    terms
}

fn flatten_add<'a>(expr: &'a MoneyExpr, out: &mut Vec<&'a MoneyExpr>) {
    match expr {
        MoneyExpr::Add(a, b) => {
            flatten_add(a, out);
            flatten_add(b, out);
        }
        other => out.push(other),
    }
}

/// Partition the referenced variables into additively independent groups:
/// m = Σ_g m_g with disjoint variable sets. Variables appearing together in a
/// single additive term land in the same group.
pub fn detect_separability(expr: &MoneyExpr) -> Vec<BTreeSet<usize>> {
    let mut groups: Vec<BTreeSet<usize>> = Vec::new();
    for term in additive_terms(expr) {
        let vars = vars_used(term);
        if vars.is_empty() {
            continue;
        }
        // merge every group intersecting this term's variable set
        let (mut merged, rest): (Vec<_>, Vec<_>) = groups
            .into_iter()
            .partition(|g| !g.is_disjoint(&vars));
        let mut new_group = vars;
        for g in merged.drain(..) {
            new_group.extend(g);
        }
        groups = rest;
        groups.push(new_group);
    }
    groups.sort_by_key(|g| *g.iter().next().unwrap());
    groups
}

/// Sum of the additive terms whose variables are contained in `group`,
/// excluding constant terms. Returns `None` when no term matches.
pub fn group_subexpr(expr: &MoneyExpr, group: &BTreeSet<usize>) -> Option<MoneyExpr> {
    let mut acc: Option<MoneyExpr> = None;
    for term in additive_terms(expr) {
        let vars = vars_used(term);
        if vars.is_empty() || !vars.is_subset(group) {
            continue;
        }
        acc = Some(match acc {
            None => term.clone(),
            Some(a) => MoneyExpr::Add(Box::new(a), Box::new(term.clone())),
        });
    }
    acc
}

/// Sum of the additive terms that reference no variable at all.
pub fn constant_part(
    expr: &MoneyExpr,
    constants: &dyn Fn(&str) -> Option<f64>,
) -> Result<f64, ExprError> {
    let mut sum = 0.0;
    for term in additive_terms(expr) {
        if vars_used(term).is_empty() {
            sum += eval_money_fn(term, &[], constants)?;
        }
    }
    Ok(sum)
}

/// Named constants referenced anywhere in the expression.
pub fn constants_used(expr: &MoneyExpr) -> BTreeSet<String> {
    let mut out = BTreeSet::new();
    collect_constants(expr, &mut out);
    out
}

fn collect_constants(expr: &MoneyExpr, out: &mut BTreeSet<String>) {
    match expr {
        MoneyExpr::Number(_) | MoneyExpr::Var(_) => {}
        MoneyExpr::Constant(name) => {
            out.insert(name.clone());
        }
        MoneyExpr::Add(a, b) | MoneyExpr::Mul(a, b) => {
            collect_constants(a, out);
            collect_constants(b, out);
        }
        MoneyExpr::Pow(a, _) | MoneyExpr::Ln(a) => collect_constants(a, out),
    }
}

// ---------------------------------------------------------------------------
// canonical printing
// ---------------------------------------------------------------------------

impl fmt::Display for MoneyExpr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            MoneyExpr::Number(v) => write!(f, "{v}"),
            MoneyExpr::Constant(name) => write!(f, "{name}"),
            MoneyExpr::Var(i) => write!(f, "l{i}"),
            MoneyExpr::Add(a, b) => {
                write!(f, "{a} + ")?;
                // parenthesize a right-nested sum: `+` parses left-associated
                match b.as_ref() {
                    MoneyExpr::Add(_, _) => write!(f, "({b})"),
                    _ => write!(f, "{b}"),
                }
            }
            MoneyExpr::Mul(a, b) => {
                write_factor(f, a)?;
                write!(f, "*")?;
                // likewise for a right-nested product
                match b.as_ref() {
                    MoneyExpr::Mul(_, _) => write!(f, "({b})"),
                    _ => write_factor(f, b),
                }
            }
            MoneyExpr::Pow(base, exp) => {
                match base.as_ref() {
                    MoneyExpr::Number(v) if *v >= 0.0 => write!(f, "{v}")?,
                    MoneyExpr::Constant(name) => write!(f, "{name}")?,
                    MoneyExpr::Var(i) => write!(f, "l{i}")?,
                    MoneyExpr::Ln(inner) => write!(f, "ln({inner})")?,
                    other => write!(f, "({other})")?,
                }
                if *exp < 0.0 {
                    write!(f, "^({exp})")
                } else {
                    write!(f, "^{exp}")
                }
            }
            MoneyExpr::Ln(inner) => write!(f, "ln({inner})"),
        }
    }
}

fn write_factor(f: &mut fmt::Formatter<'_>, e: &MoneyExpr) -> fmt::Result {
    match e {
        MoneyExpr::Add(_, _) => write!(f, "({e})"),
        MoneyExpr::Number(v) if *v < 0.0 => write!(f, "({e})"),
        _ => write!(f, "{e}"),
    }
}

// ---------------------------------------------------------------------------
// lexer + recursive-descent parser
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, PartialEq)]
enum Token {
    Number(f64),
    Ident(String),
    Plus,
    Minus,
    Star,
    Slash,
    Caret,
    LParen,
    RParen,
    Eof,
}

impl fmt::Display for Token {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Token::Number(v) => write!(f, "number {v}"),
            Token::Ident(s) => write!(f, "identifier `{s}`"),
            Token::Plus => write!(f, "`+`"),
            Token::Minus => write!(f, "`-`"),
            Token::Star => write!(f, "`*`"),
            Token::Slash => write!(f, "`/`"),
            Token::Caret => write!(f, "`^`"),
            Token::LParen => write!(f, "`(`"),
            Token::RParen => write!(f, "`)`"),
            Token::Eof => write!(f, "end of input"),
        }
    }
}

fn lex(text: &str) -> Result<Vec<(usize, Token)>, ExprError> {
    if text.trim().is_empty() {
        return Err(ExprError::Syntax {
            pos: 0,
            msg: "empty expression".into(),
        });
    }
    let bytes = text.as_bytes();
    let mut tokens = Vec::new();
    let mut i = 0;
    while i < bytes.len() {
        let c = bytes[i];
        match c {
            b' ' | b'\t' | b'\n' | b'\r' => i += 1,
            b'+' => {
                tokens.push((i, Token::Plus));
                i += 1;
            }
            b'-' => {
                tokens.push((i, Token::Minus));
                i += 1;
            }
            b'*' => {
                tokens.push((i, Token::Star));
                i += 1;
            }
            b'/' => {
                tokens.push((i, Token::Slash));
                i += 1;
            }
            b'^' => {
                tokens.push((i, Token::Caret));
                i += 1;
            }
            b'(' => {
                tokens.push((i, Token::LParen));
                i += 1;
            }
            b')' => {
                tokens.push((i, Token::RParen));
                i += 1;
            }
            b'0'..=b'9' | b'.' => {
                let start = i;
                while i < bytes.len() && matches!(bytes[i], b'0'..=b'9' | b'.') {
                    i += 1;
                }
                // optional exponent part, e.g. 1e-3
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
                let s = &text[start..i];
                let v: f64 = s.parse().map_err(|_| ExprError::Syntax {
                    pos: start,
                    msg: format!("malformed number `{s}`"),
                })?;
                tokens.push((start, Token::Number(v)));
            }
            b'a'..=b'z' => {
                let start = i;
                while i < bytes.len() && matches!(bytes[i], b'a'..=b'z' | b'0'..=b'9') {
                    i += 1;
                }
                tokens.push((start, Token::Ident(text[start..i].to_string())));
            }
            _ => {
                return Err(ExprError::Syntax {
                    pos: i,
                    msg: format!("unexpected character `{}`", &text[i..i + 1]),
                })
            }
        }
    }
    tokens.push((text.len(), Token::Eof));
    Ok(tokens)
}

struct Parser {
    tokens: Vec<(usize, Token)>,
    pos: usize,
    n_vars: usize,
}

impl Parser {
    fn peek(&self) -> &Token {
        &self.tokens[self.pos].1
    }

    fn current_pos(&self) -> usize {
        self.tokens[self.pos].0
    }

    fn bump(&mut self) -> Token {
        let t = self.tokens[self.pos].1.clone();
        if self.pos + 1 < self.tokens.len() {
            self.pos += 1;
        }
        t
    }

    fn expect(&mut self, want: &Token) -> Result<(), ExprError> {
        if self.peek() == want {
            self.bump();
            Ok(())
        } else {
            Err(ExprError::Syntax {
                pos: self.current_pos(),
                msg: format!("expected {want}, found {}", self.peek()),
            })
        }
    }

    fn expr(&mut self) -> Result<MoneyExpr, ExprError> {
        let mut lhs = self.term()?;
        loop {
            match self.peek() {
                Token::Plus => {
                    self.bump();
                    let rhs = self.term()?;
                    lhs = MoneyExpr::Add(Box::new(lhs), Box::new(rhs));
                }
                Token::Minus => {
                    self.bump();
                    let rhs = self.term()?;
                    lhs = MoneyExpr::Add(
                        Box::new(lhs),
                        Box::new(MoneyExpr::Mul(
                            Box::new(MoneyExpr::Number(-1.0)),
                            Box::new(rhs),
                        )),
                    );
                }
                _ => return Ok(lhs),
            }
        }
    }

    fn term(&mut self) -> Result<MoneyExpr, ExprError> {
        let mut lhs = self.unary()?;
        loop {
            match self.peek() {
                Token::Star => {
                    self.bump();
                    let rhs = self.unary()?;
                    lhs = MoneyExpr::Mul(Box::new(lhs), Box::new(rhs));
                }
                Token::Slash => {
                    self.bump();
                    let rhs = self.unary()?;
                    lhs = MoneyExpr::Mul(
                        Box::new(lhs),
                        Box::new(MoneyExpr::Pow(Box::new(rhs), -1.0)),
                    );
                }
                _ => return Ok(lhs),
            }
        }
    }

    fn unary(&mut self) -> Result<MoneyExpr, ExprError> {
        if matches!(self.peek(), Token::Minus) {
            self.bump();
            let inner = self.unary()?;
            // fold the sign into a bare literal so printing and reparsing
            // reproduce the same tree
            Ok(match inner {
                MoneyExpr::Number(v) => MoneyExpr::Number(-v),
                other => MoneyExpr::Mul(
                    Box::new(MoneyExpr::Number(-1.0)),
                    Box::new(other),
                ),
            })
        } else {
            self.power()
        }
    }

    fn power(&mut self) -> Result<MoneyExpr, ExprError> {
        let base = self.atom()?;
        if matches!(self.peek(), Token::Caret) {
            self.bump();
            let exp = self.exponent()?;
            if !exp.is_finite() {
                return Err(ExprError::NonFiniteExponent);
            }
            Ok(MoneyExpr::Pow(Box::new(base), exp))
        } else {
            Ok(base)
        }
    }

    fn exponent(&mut self) -> Result<f64, ExprError> {
        match self.bump() {
            Token::Minus => Ok(-self.exponent()?),
            Token::Number(v) => Ok(v),
            Token::LParen => {
                let v = self.exponent()?;
                self.expect(&Token::RParen)?;
                Ok(v)
            }
            other => Err(ExprError::Syntax {
                pos: self.current_pos(),
                msg: format!("expected numeric exponent, found {other}"),
            }),
        }
    }

    fn atom(&mut self) -> Result<MoneyExpr, ExprError> {
        let pos = self.current_pos();
        match self.bump() {
            Token::Number(v) => Ok(MoneyExpr::Number(v)),
            Token::Ident(name) if name == "ln" => {
                self.expect(&Token::LParen)?;
                let inner = self.expr()?;
                self.expect(&Token::RParen)?;
                Ok(MoneyExpr::Ln(Box::new(inner)))
            }
            Token::Ident(name) => {
                if let Some(idx) = variable_index(&name) {
                    if idx == 0 || idx > self.n_vars {
                        return Err(ExprError::VarOutOfRange {
                            pos,
                            name,
                            n_vars: self.n_vars,
                        });
                    }
                    Ok(MoneyExpr::Var(idx))
                } else {
                    Ok(MoneyExpr::Constant(name))
                }
            }
            Token::LParen => {
                let inner = self.expr()?;
                self.expect(&Token::RParen)?;
                Ok(inner)
            }
            other => Err(ExprError::Syntax {
                pos,
                msg: format!("expected value, found {other}"),
            }),
        }
    }
}

/// `l<digits>` names are variable references; everything else is a constant.
fn variable_index(name: &str) -> Option<usize> {
    let rest = name.strip_prefix('l')?;
    if rest.is_empty() || !rest.bytes().all(|b| b.is_ascii_digit()) {
        return None;
    }
    rest.parse().ok()
}
