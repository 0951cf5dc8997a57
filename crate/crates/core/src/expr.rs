//! Expression trees for quadratic differentials and their s-expression form.
//!
//! `(const re im)`, `(z)`, `(dz2)`, `(add a b)`, `(sub a b)`, `(mul a b)`,
//! `(div a b)`, `(pow a p q)` for `a^(p/q)` on the principal branch,
//! `(exp a)` and `(pullback name inner)`.

use std::fmt;

use num_complex::Complex64;

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub enum Expr {
    Const(Complex64),
    Z,
    Dz2,
    Add(Box<Expr>, Box<Expr>),
    Sub(Box<Expr>, Box<Expr>),
    Mul(Box<Expr>, Box<Expr>),
    Div(Box<Expr>, Box<Expr>),
    Pow(Box<Expr>, i64, i64),
    Exp(Box<Expr>),
    Pullback(String, Box<Expr>),
}

/// A point at which an expression is evaluated. Pullback nodes ask the point
/// for the map derivative and for the image point.
pub trait EvalPoint {
    fn z(&self) -> Result<Complex64>;
    fn pull(&self, map: &str) -> Result<(Complex64, Box<dyn EvalPoint + '_>)>;
}

impl Expr {
    pub fn constant(re: f64, im: f64) -> Expr {
        Expr::Const(Complex64::new(re, im))
    }

    pub fn scaled(c: Complex64, e: Expr) -> Expr {
        Expr::Mul(Box::new(Expr::Const(c)), Box::new(e))
    }

    pub fn pullback(name: &str, inner: Expr) -> Expr {
        Expr::Pullback(name.to_string(), Box::new(inner))
    }

    pub fn parse(src: &str) -> Result<Expr> {
        let tokens = tokenize(src);
        let mut pos = 0;
        let e = parse_expr(&tokens, &mut pos)?;
        if pos != tokens.len() {
            return Err(Error::Parse(format!("trailing input after expression: {:?}", &tokens[pos..])));
        }
        Ok(e)
    }

    pub fn eval(&self, p: &dyn EvalPoint) -> Result<Complex64> {
        Ok(match self {
            Expr::Const(c) => *c,
            Expr::Z => p.z()?,
            Expr::Dz2 => Complex64::new(1.0, 0.0),
            Expr::Add(a, b) => a.eval(p)? + b.eval(p)?,
            Expr::Sub(a, b) => a.eval(p)? - b.eval(p)?,
            Expr::Mul(a, b) => a.eval(p)? * b.eval(p)?,
            Expr::Div(a, b) => a.eval(p)? / b.eval(p)?,
            Expr::Pow(a, num, den) => {
                let v = a.eval(p)?;
                if *den == 1 {
                    v.powi(*num as i32)
                } else if v == Complex64::new(0.0, 0.0) {
                    if *num > 0 { v } else { Complex64::new(f64::INFINITY, 0.0) }
                } else {
                    (v.ln() * (*num as f64 / *den as f64)).exp()
                }
            }
            Expr::Exp(a) => a.eval(p)?.exp(),
            Expr::Pullback(name, inner) => {
                let (d, q) = p.pull(name)?;
                d * d * inner.eval(&*q)?
            }
        })
    }

    pub fn depends_on_z(&self) -> bool {
        match self {
            Expr::Z => true,
            Expr::Const(_) | Expr::Dz2 | Expr::Pullback(..) => false,
            Expr::Add(a, b) | Expr::Sub(a, b) | Expr::Mul(a, b) | Expr::Div(a, b) => a.depends_on_z() || b.depends_on_z(),
            Expr::Pow(a, ..) | Expr::Exp(a) => a.depends_on_z(),
        }
    }

    /// True if a `dz2` or pullback node occurs in the tree.
    pub fn carries_differential(&self) -> bool {
        match self {
            Expr::Dz2 | Expr::Pullback(..) => true,
            Expr::Const(_) | Expr::Z => false,
            Expr::Add(a, b) | Expr::Sub(a, b) | Expr::Mul(a, b) | Expr::Div(a, b) => {
                a.carries_differential() || b.carries_differential()
            }
            Expr::Pow(a, ..) | Expr::Exp(a) => a.carries_differential(),
        }
    }

    /// Names of all maps referenced by pullback nodes, in order of appearance.
    pub fn map_names(&self) -> Vec<String> {
        let mut out = Vec::new();
        self.collect_maps(&mut out);
        out
    }

    fn collect_maps(&self, out: &mut Vec<String>) {
        match self {
            Expr::Pullback(n, inner) => {
                if !out.contains(n) {
                    out.push(n.clone());
                }
                inner.collect_maps(out);
            }
            Expr::Add(a, b) | Expr::Sub(a, b) | Expr::Mul(a, b) | Expr::Div(a, b) => {
                a.collect_maps(out);
                b.collect_maps(out);
            }
            Expr::Pow(a, ..) | Expr::Exp(a) => a.collect_maps(out),
            _ => {}
        }
    }

    /// Constant value if the tree has no `z` and no pullback.
    pub fn as_constant(&self) -> Option<Complex64> {
        if self.depends_on_z() || !self.map_names().is_empty() {
            return None;
        }
        struct Nowhere;
        impl EvalPoint for Nowhere {
            fn z(&self) -> Result<Complex64> {
                unreachable!("constant expression")
            }
            fn pull(&self, _: &str) -> Result<(Complex64, Box<dyn EvalPoint + '_>)> {
                unreachable!("constant expression")
            }
        }
        self.eval(&Nowhere).ok()
    }
}

fn fmt_num(x: f64) -> String {
    if x == x.trunc() && x.abs() < 1e15 {
        format!("{}", x as i64)
    } else {
        format!("{x:?}")
    }
}

impl fmt::Display for Expr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Expr::Const(c) => write!(f, "(const {} {})", fmt_num(c.re), fmt_num(c.im)),
            Expr::Z => write!(f, "(z)"),
            Expr::Dz2 => write!(f, "(dz2)"),
            Expr::Add(a, b) => write!(f, "(add {a} {b})"),
            Expr::Sub(a, b) => write!(f, "(sub {a} {b})"),
            Expr::Mul(a, b) => write!(f, "(mul {a} {b})"),
            Expr::Div(a, b) => write!(f, "(div {a} {b})"),
            Expr::Pow(a, p, q) => write!(f, "(pow {a} {p} {q})"),
            Expr::Exp(a) => write!(f, "(exp {a})"),
            Expr::Pullback(n, a) => write!(f, "(pullback {n} {a})"),
        }
    }
}

impl serde::Serialize for Expr {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        s.serialize_str(&self.to_string())
    }
}

impl<'de> serde::Deserialize<'de> for Expr {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let src = String::deserialize(d)?;
        Expr::parse(&src).map_err(serde::de::Error::custom)
    }
}

fn tokenize(src: &str) -> Vec<String> {
    src.replace('(', " ( ").replace(')', " ) ").split_whitespace().map(str::to_string).collect()
}

fn expect(tokens: &[String], pos: &mut usize, what: &str) -> Result<()> {
    match tokens.get(*pos) {
        Some(t) if t == what => {
            *pos += 1;
            Ok(())
        }
        other => Err(Error::Parse(format!("expected '{what}', found {other:?}"))),
    }
}

fn atom<'a>(tokens: &'a [String], pos: &mut usize) -> Result<&'a str> {
    match tokens.get(*pos) {
        Some(t) if t != "(" && t != ")" => {
            *pos += 1;
            Ok(t)
        }
        other => Err(Error::Parse(format!("expected an atom, found {other:?}"))),
    }
}

fn number<T: std::str::FromStr>(tokens: &[String], pos: &mut usize) -> Result<T> {
    let a = atom(tokens, pos)?;
    a.parse().map_err(|_| Error::Parse(format!("bad number '{a}'")))
}

fn parse_expr(tokens: &[String], pos: &mut usize) -> Result<Expr> {
    expect(tokens, pos, "(")?;
    let head = atom(tokens, pos)?.to_string();
    let sub = |pos: &mut usize| parse_expr(tokens, pos).map(Box::new);
    let e = match head.as_str() {
        "const" => {
            let re: f64 = number(tokens, pos)?;
            let im: f64 = number(tokens, pos)?;
            Expr::Const(Complex64::new(re, im))
        }
        "z" => Expr::Z,
        "dz2" => Expr::Dz2,
        "add" => Expr::Add(sub(pos)?, sub(pos)?),
        "sub" => Expr::Sub(sub(pos)?, sub(pos)?),
        "mul" => Expr::Mul(sub(pos)?, sub(pos)?),
        "div" => Expr::Div(sub(pos)?, sub(pos)?),
        "pow" => {
            let a = sub(pos)?;
            let p: i64 = number(tokens, pos)?;
            let q: i64 = number(tokens, pos)?;
            if q <= 0 {
                return Err(Error::Parse("pow denominator must be positive".into()));
            }
            Expr::Pow(a, p, q)
        }
        "exp" => Expr::Exp(sub(pos)?),
        "pullback" => {
            let name = atom(tokens, pos)?.to_string();
            Expr::Pullback(name, sub(pos)?)
        }
        other => return Err(Error::Parse(format!("unknown form '{other}'"))),
    };
    expect(tokens, pos, ")")?;
    Ok(e)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    pub(crate) struct At(pub Complex64);
    impl EvalPoint for At {
        fn z(&self) -> Result<Complex64> {
            Ok(self.0)
        }
        fn pull(&self, _: &str) -> Result<(Complex64, Box<dyn EvalPoint + '_>)> {
            // stand-in map w = 2z
            Ok((Complex64::new(2.0, 0.0), Box::new(At(self.0 * 2.0))))
        }
    }

    #[test]
    fn parses_and_evaluates_examples() {
        let e = Expr::parse("(mul (const 0 -1) (dz2))").unwrap();
        assert_eq!(e.eval(&At(Complex64::new(0.3, 0.7))).unwrap(), Complex64::new(0.0, -1.0));
        let e = Expr::parse("(mul (z) (dz2))").unwrap();
        assert_eq!(e.eval(&At(Complex64::new(0.0, 2.0))).unwrap(), Complex64::new(0.0, 2.0));
        let e = Expr::parse("(pullback f4 (z))").unwrap();
        assert_eq!(e.eval(&At(Complex64::new(1.0, 0.0))).unwrap(), Complex64::new(8.0, 0.0));
        assert_eq!(e.map_names(), vec!["f4".to_string()]);
    }

    #[test]
    fn rejects_malformed_input() {
        assert!(Expr::parse("(add (z))").is_err());
        assert!(Expr::parse("(foo)").is_err());
        assert!(Expr::parse("(z) (z)").is_err());
        assert!(Expr::parse("(pow (z) 1 0)").is_err());
    }

    #[test]
    fn rational_power_uses_principal_branch() {
        let e = Expr::parse("(pow (z) 1 2)").unwrap();
        let v = e.eval(&At(Complex64::new(-4.0, 1e-300))).unwrap();
        assert!((v - Complex64::new(0.0, 2.0)).norm() < 1e-12);
    }

    fn arb_expr() -> impl Strategy<Value = Expr> {
        let leaf = prop_oneof![
            Just(Expr::Z),
            Just(Expr::Dz2),
            (-5i32..5, -5i32..5).prop_map(|(a, b)| Expr::constant(a as f64 * 0.5, b as f64 * 0.25)),
        ];
        leaf.prop_recursive(4, 24, 2, |inner| {
            prop_oneof![
                (inner.clone(), inner.clone()).prop_map(|(a, b)| Expr::Add(Box::new(a), Box::new(b))),
                (inner.clone(), inner.clone()).prop_map(|(a, b)| Expr::Mul(Box::new(a), Box::new(b))),
                (inner.clone(), inner.clone()).prop_map(|(a, b)| Expr::Sub(Box::new(a), Box::new(b))),
                (inner.clone(), 1i64..4, 1i64..3).prop_map(|(a, p, q)| Expr::Pow(Box::new(a), p, q)),
                inner.clone().prop_map(|a| Expr::Exp(Box::new(a))),
                inner.prop_map(|a| Expr::pullback("f2", a)),
            ]
        })
    }

    proptest! {
        #[test]
        fn print_parse_roundtrip(e in arb_expr()) {
            let back = Expr::parse(&e.to_string()).unwrap();
            prop_assert_eq!(back, e);
        }
    }
}
