//! Analytic field descriptors: a small catalog of periodic expressions
//! (trigonometric monomials, constants, scalar multiples, products, sums)
//! that can be sampled onto a torus grid.
//!
//! Leaf expression kinds live behind the [`FieldExpr`] trait and are looked up
//! by keyword in an [`ExprRegistry`], so the parser itself knows nothing about
//! the individual kinds. Descriptors are strings like
//! `"const 3"`, `"sin(2*pi*x)"`, `"0.001*sin(2*pi*x)*sin(2*pi*y)"`.
//! The unicode forms `π` and `·` are accepted as `pi` and `*`.

use std::collections::BTreeMap;
use std::f64::consts::PI;
use std::sync::Arc;

use crate::domain::{GridField, TorusDomain};
use crate::error::{Error, Result};

/// An analytic expression in the torus coordinates.
pub trait FieldExpr: Send + Sync {
    /// Value at a point (first `n` coordinates are used).
    fn eval(&self, p: &[f64; 3]) -> f64;
    /// True if the expression has period `period` in every coordinate it uses.
    fn is_periodic(&self, period: f64) -> bool;
    /// Highest coordinate axis referenced, if any.
    fn max_axis(&self) -> Option<usize>;
    fn describe(&self) -> String;
}

pub type DynExpr = Arc<dyn FieldExpr>;

struct Const(f64);

impl FieldExpr for Const {
    fn eval(&self, _p: &[f64; 3]) -> f64 {
        self.0
    }
    fn is_periodic(&self, _period: f64) -> bool {
        true
    }
    fn max_axis(&self) -> Option<usize> {
        None
    }
    fn describe(&self) -> String {
        format!("const {}", self.0)
    }
}

#[derive(Clone, Copy)]
enum TrigKind {
    Sin,
    Cos,
}

/// sin(c x_axis) or cos(c x_axis) with c a multiple of pi.
struct Trig {
    kind: TrigKind,
    /// Angular coefficient, c = pi_multiple * pi.
    pi_multiple: f64,
    axis: usize,
}

impl FieldExpr for Trig {
    fn eval(&self, p: &[f64; 3]) -> f64 {
        let arg = self.pi_multiple * PI * p[self.axis];
        match self.kind {
            TrigKind::Sin => arg.sin(),
            TrigKind::Cos => arg.cos(),
        }
    }
    fn is_periodic(&self, period: f64) -> bool {
        // Periodic on [0, period) iff c * period is a multiple of 2 pi.
        let cycles = self.pi_multiple * period / 2.0;
        (cycles - cycles.round()).abs() < 1e-9
    }
    fn max_axis(&self) -> Option<usize> {
        Some(self.axis)
    }
    fn describe(&self) -> String {
        let k = match self.kind {
            TrigKind::Sin => "sin",
            TrigKind::Cos => "cos",
        };
        format!("{k}({}*pi*{})", self.pi_multiple, ["x", "y", "z"][self.axis])
    }
}

struct Product(Vec<DynExpr>);

impl FieldExpr for Product {
    fn eval(&self, p: &[f64; 3]) -> f64 {
        self.0.iter().map(|e| e.eval(p)).product()
    }
    fn is_periodic(&self, period: f64) -> bool {
        self.0.iter().all(|e| e.is_periodic(period))
    }
    fn max_axis(&self) -> Option<usize> {
        self.0.iter().filter_map(|e| e.max_axis()).max()
    }
    fn describe(&self) -> String {
        self.0.iter().map(|e| e.describe()).collect::<Vec<_>>().join("*")
    }
}

struct Sum(Vec<(f64, DynExpr)>);

impl FieldExpr for Sum {
    fn eval(&self, p: &[f64; 3]) -> f64 {
        self.0.iter().map(|(s, e)| s * e.eval(p)).sum()
    }
    fn is_periodic(&self, period: f64) -> bool {
        self.0.iter().all(|(_, e)| e.is_periodic(period))
    }
    fn max_axis(&self) -> Option<usize> {
        self.0.iter().filter_map(|(_, e)| e.max_axis()).max()
    }
    fn describe(&self) -> String {
        self.0
            .iter()
            .map(|(s, e)| format!("{s}*{}", e.describe()))
            .collect::<Vec<_>>()
            .join(" + ")
    }
}

/// Builds one leaf expression kind from the token stream.
type LeafBuilder = fn(&mut Tokens) -> Result<DynExpr>;

/// Keyword-indexed registry of leaf expression kinds.
pub struct ExprRegistry {
    builders: BTreeMap<&'static str, LeafBuilder>,
}

impl ExprRegistry {
    pub fn empty() -> Self {
        Self { builders: BTreeMap::new() }
    }

    /// Registry preloaded with the built-in catalog.
    pub fn builtin() -> Self {
        let mut r = Self::empty();
        r.register("const", build_const);
        r.register("sin", build_sin);
        r.register("cos", build_cos);
        r
    }

    pub fn register(&mut self, keyword: &'static str, builder: LeafBuilder) {
        self.builders.insert(keyword, builder);
    }

    pub fn keywords(&self) -> impl Iterator<Item = &'static str> + '_ {
        self.builders.keys().copied()
    }

    /// Parse a full descriptor string into an expression tree.
    pub fn parse(&self, descriptor: &str) -> Result<DynExpr> {
        let mut toks = Tokens::lex(descriptor)?;
        let expr = self.parse_sum(&mut toks)?;
        if toks.peek().is_some() {
            return Err(Error::UnknownDescriptor(format!(
                "{descriptor}: trailing input near {:?}",
                toks.peek().unwrap()
            )));
        }
        Ok(expr)
    }

    fn parse_sum(&self, toks: &mut Tokens) -> Result<DynExpr> {
        let mut terms = vec![(1.0, self.parse_product(toks)?)];
        while let Some(t) = toks.peek() {
            let sign = match t {
                Tok::Plus => 1.0,
                Tok::Minus => -1.0,
                _ => break,
            };
            toks.next();
            terms.push((sign, self.parse_product(toks)?));
        }
        if terms.len() == 1 && terms[0].0 == 1.0 {
            Ok(terms.remove(0).1)
        } else {
            Ok(Arc::new(Sum(terms)))
        }
    }

    fn parse_product(&self, toks: &mut Tokens) -> Result<DynExpr> {
        let mut factors = vec![self.parse_factor(toks)?];
        while matches!(toks.peek(), Some(Tok::Star)) {
            toks.next();
            factors.push(self.parse_factor(toks)?);
        }
        if factors.len() == 1 {
            Ok(factors.pop().unwrap())
        } else {
            Ok(Arc::new(Product(factors)))
        }
    }

    fn parse_factor(&self, toks: &mut Tokens) -> Result<DynExpr> {
        match toks.peek().cloned() {
            Some(Tok::Num(v)) => {
                toks.next();
                Ok(Arc::new(Const(v)) as DynExpr)
            }
            Some(Tok::Ident(name)) => {
                let builder = self
                    .builders
                    .get(name.as_str())
                    .copied()
                    .ok_or_else(|| Error::UnknownDescriptor(name.clone()))?;
                toks.next();
                builder(toks)
            }
            other => Err(Error::UnknownDescriptor(format!("unexpected token {other:?}"))),
        }
    }
}

fn build_const(toks: &mut Tokens) -> Result<DynExpr> {
    match toks.next() {
        Some(Tok::Num(v)) => Ok(Arc::new(Const(v))),
        Some(Tok::Minus) => match toks.next() {
            Some(Tok::Num(v)) => Ok(Arc::new(Const(-v))),
            other => Err(Error::UnknownDescriptor(format!("const expects a number, got {other:?}"))),
        },
        other => Err(Error::UnknownDescriptor(format!("const expects a number, got {other:?}"))),
    }
}

fn build_sin(toks: &mut Tokens) -> Result<DynExpr> {
    build_trig(toks, TrigKind::Sin)
}

fn build_cos(toks: &mut Tokens) -> Result<DynExpr> {
    build_trig(toks, TrigKind::Cos)
}

/// Parses the `(2*pi*x)` part of a trig factor. The multiplier of pi may be
/// any positive number; the `*` separators are optional so `(2πx)` works.
fn build_trig(toks: &mut Tokens, kind: TrigKind) -> Result<DynExpr> {
    toks.expect(&Tok::LParen)?;
    let mut pi_multiple = 1.0;
    if let Some(Tok::Num(v)) = toks.peek() {
        pi_multiple = *v;
        toks.next();
        toks.skip_star();
    }
    match toks.next() {
        Some(Tok::Ident(s)) if s == "pi" => {}
        other => {
            return Err(Error::UnknownDescriptor(format!(
                "trig argument must be a multiple of pi times a coordinate, got {other:?}"
            )))
        }
    }
    toks.skip_star();
    let axis = match toks.next() {
        Some(Tok::Ident(s)) => match s.as_str() {
            "x" => 0,
            "y" => 1,
            "z" => 2,
            _ => return Err(Error::UnknownDescriptor(format!("unknown coordinate {s}"))),
        },
        other => return Err(Error::UnknownDescriptor(format!("expected coordinate, got {other:?}"))),
    };
    toks.expect(&Tok::RParen)?;
    Ok(Arc::new(Trig { kind, pi_multiple, axis }))
}

#[derive(Clone, Debug, PartialEq)]
pub enum Tok {
    Num(f64),
    Ident(String),
    Star,
    Plus,
    Minus,
    LParen,
    RParen,
}

pub struct Tokens {
    toks: Vec<Tok>,
    pos: usize,
}

impl Tokens {
    fn lex(s: &str) -> Result<Self> {
        let normalized = s.replace('π', " pi ").replace('·', "*").replace('−', "-");
        let mut toks = Vec::new();
        let chars: Vec<char> = normalized.chars().collect();
        let mut i = 0;
        while i < chars.len() {
            let c = chars[i];
            match c {
                ' ' | '\t' => i += 1,
                '*' => {
                    toks.push(Tok::Star);
                    i += 1;
                }
                '+' => {
                    toks.push(Tok::Plus);
                    i += 1;
                }
                '-' => {
                    toks.push(Tok::Minus);
                    i += 1;
                }
                '(' => {
                    toks.push(Tok::LParen);
                    i += 1;
                }
                ')' => {
                    toks.push(Tok::RParen);
                    i += 1;
                }
                c if c.is_ascii_digit() || c == '.' => {
                    let start = i;
                    while i < chars.len()
                        && (chars[i].is_ascii_digit()
                            || chars[i] == '.'
                            || chars[i] == 'e'
                            || chars[i] == 'E'
                            || ((chars[i] == '+' || chars[i] == '-')
                                && i > start
                                && (chars[i - 1] == 'e' || chars[i - 1] == 'E')))
                    {
                        i += 1;
                    }
                    let text: String = chars[start..i].iter().collect();
                    let v: f64 = text
                        .parse()
                        .map_err(|_| Error::UnknownDescriptor(format!("bad number {text}")))?;
                    toks.push(Tok::Num(v));
                }
                c if c.is_ascii_alphabetic() => {
                    let start = i;
                    while i < chars.len() && chars[i].is_ascii_alphabetic() {
                        i += 1;
                    }
                    toks.push(Tok::Ident(chars[start..i].iter().collect()));
                }
                other => {
                    return Err(Error::UnknownDescriptor(format!("unexpected character {other:?}")))
                }
            }
        }
        Ok(Self { toks, pos: 0 })
    }

    fn peek(&self) -> Option<&Tok> {
        self.toks.get(self.pos)
    }

    fn next(&mut self) -> Option<Tok> {
        let t = self.toks.get(self.pos).cloned();
        if t.is_some() {
            self.pos += 1;
        }
        t
    }

    fn skip_star(&mut self) {
        if matches!(self.peek(), Some(Tok::Star)) {
            self.pos += 1;
        }
    }

    fn expect(&mut self, want: &Tok) -> Result<()> {
        match self.next() {
            Some(t) if t == *want => Ok(()),
            other => Err(Error::UnknownDescriptor(format!("expected {want:?}, got {other:?}"))),
        }
    }
}

/// Sample a catalog expression (or `file:<path>` FGRID load) onto a grid.
pub fn sample_field(domain: TorusDomain, descriptor: &str) -> Result<GridField> {
    if let Some(path) = descriptor.strip_prefix("file:") {
        let field = crate::io::read_fgrid(std::path::Path::new(path))?;
        if field.domain != domain {
            return Err(Error::DomainMismatch);
        }
        return Ok(field);
    }
    let expr = ExprRegistry::builtin().parse(descriptor)?;
    sample_expr(domain, expr.as_ref())
}

/// Sample an already-parsed expression onto a grid.
pub fn sample_expr(domain: TorusDomain, expr: &dyn FieldExpr) -> Result<GridField> {
    if !expr.is_periodic(domain.period) {
        return Err(Error::NonPeriodic(expr.describe()));
    }
    if let Some(axis) = expr.max_axis() {
        if axis >= domain.n {
            return Err(Error::UnknownDescriptor(format!(
                "expression {} uses coordinate {} beyond dimension {}",
                expr.describe(),
                ["x", "y", "z"][axis],
                domain.n
            )));
        }
    }
    let values: Vec<f64> = domain.indices().map(|idx| expr.eval(&domain.node_point(idx))).collect();
    GridField::new(domain, values)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn unit2(res: usize) -> TorusDomain {
        TorusDomain::unit(2, res).unwrap()
    }

    #[test]
    fn constant_field() {
        let f = sample_field(unit2(64), "const 3").unwrap();
        assert!(f.values.iter().all(|&v| v == 3.0));
        let g = sample_field(unit2(64), "const -3").unwrap();
        assert!(g.values.iter().all(|&v| v == -3.0));
    }

    #[test]
    fn separable_sin() {
        let d = unit2(64);
        let f = sample_field(d, "sin(2πx)").unwrap();
        for idx in d.indices() {
            let want = (2.0 * PI * idx[0] as f64 / 64.0).sin();
            assert!((f.at(idx) - want).abs() < 1e-15);
        }
    }

    #[test]
    fn product_at_quarter_period() {
        let d = unit2(128);
        let f = sample_field(d, "sin(2πx)·sin(2πy)").unwrap();
        assert!((f.at([32, 32, 0]) - 1.0).abs() < 1e-12);
    }

    #[test]
    fn scalar_multiple_and_ascii_syntax() {
        let d = unit2(64);
        let f = sample_field(d, "0.001*sin(2*pi*x)").unwrap();
        let v = f.at([16, 0, 0]);
        assert!((v - 0.001).abs() < 1e-15);
    }

    #[test]
    fn sums_parse() {
        let d = unit2(64);
        let f = sample_field(d, "sin(2πx) + 2*cos(4πy)").unwrap();
        let want = (2.0 * PI * 0.25).sin() + 2.0 * (4.0 * PI * 0.5).cos();
        assert!((f.at([16, 32, 0]) - want).abs() < 1e-12);
    }

    #[test]
    fn rejects_unknown_and_nonperiodic() {
        assert!(matches!(sample_field(unit2(64), "tan(2πx)"), Err(Error::UnknownDescriptor(_))));
        assert!(matches!(sample_field(unit2(64), "sin(3πx)"), Err(Error::NonPeriodic(_))));
        // Periodic on a period-2 torus though.
        let d2 = TorusDomain::new(2, 64, 2.0).unwrap();
        assert!(sample_field(d2, "sin(3πx)").is_ok());
    }

    #[test]
    fn rejects_z_in_two_dims() {
        assert!(sample_field(unit2(64), "sin(2πz)").is_err());
    }
}
