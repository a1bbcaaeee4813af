//! Lexer and parser for the knowledge-base language.
//!
//! ```text
//! observable QRS { process ventricular_depolarization; attr amp: real [0, 5000] uV; }
//! isa N beat;
//! excludes VB VT;
//! grammar G_N hypothesizes N {
//!     H -> Pw D { abstracted; h.Tb = m.Tb; 50 <= m.Te - m.Tb <= 120 }
//!     D -> QRS E { abstracted; 100 <= m.Tb - Pw.Tb <= 210 }
//!     E -> Tw { abstracted; h.Te = m.Te }
//! }
//! ```

use std::collections::BTreeSet;

use crate::model::{Attribute, Domain, Observable};

use super::{KbError, KbErrorKind, Pos};

#[derive(Debug, Clone, PartialEq)]
pub(crate) enum Tok {
    Ident(String),
    Num(f64),
    Sym(&'static str),
    Eof,
}

#[derive(Debug, Clone)]
struct Token {
    tok: Tok,
    pos: Pos,
    start: usize,
    end: usize,
}

const SYMBOLS: [&str; 20] = [
    "->", "<=", ">=", "==", "{", "}", "(", ")", "[", "]", ";", ":", ",", ".", "<", ">", "=", "+",
    "-", "*",
];

fn lex(file: &str, text: &str) -> Result<Vec<Token>, KbError> {
    let bytes = text.as_bytes();
    let mut out = Vec::new();
    let (mut i, mut line, mut col) = (0usize, 1usize, 1usize);
    let err = |line, col, msg: String| KbError {
        kind: KbErrorKind::Syntax,
        pos: Pos {
            file: file.to_string(),
            line,
            col,
        },
        message: msg,
    };
    while i < bytes.len() {
        let c = bytes[i] as char;
        if c == '\n' {
            i += 1;
            line += 1;
            col = 1;
            continue;
        }
        if c.is_whitespace() {
            i += 1;
            col += 1;
            continue;
        }
        if c == '#' || (c == '/' && bytes.get(i + 1) == Some(&b'/')) {
            while i < bytes.len() && bytes[i] != b'\n' {
                i += 1;
            }
            continue;
        }
        let pos = Pos {
            file: file.to_string(),
            line,
            col,
        };
        let start = i;
        if c.is_ascii_alphabetic() || c == '_' {
            while i < bytes.len() && (bytes[i].is_ascii_alphanumeric() || bytes[i] == b'_') {
                i += 1;
            }
            out.push(Token {
                tok: Tok::Ident(text[start..i].to_string()),
                pos,
                start,
                end: i,
            });
            col += i - start;
            continue;
        }
        if c.is_ascii_digit() {
            while i < bytes.len() && (bytes[i].is_ascii_digit() || bytes[i] == b'.') {
                i += 1;
            }
            if i < bytes.len() && (bytes[i] == b'e' || bytes[i] == b'E') {
                let save = i;
                i += 1;
                if i < bytes.len() && (bytes[i] == b'-' || bytes[i] == b'+') {
                    i += 1;
                }
                if i < bytes.len() && bytes[i].is_ascii_digit() {
                    while i < bytes.len() && bytes[i].is_ascii_digit() {
                        i += 1;
                    }
                } else {
                    i = save;
                }
            }
            let num: f64 = text[start..i]
                .parse()
                .map_err(|_| err(line, col, format!("bad number `{}`", &text[start..i])))?;
            // Time suffixes convert to milliseconds.
            let rest = &text[i..];
            let word_end = rest
                .find(|ch: char| !ch.is_ascii_alphanumeric() && ch != '_')
                .unwrap_or(rest.len());
            let (num, skip) = match &rest[..word_end] {
                "ms" => (num, 2),
                "s" => (num * 1000.0, 1),
                _ => (num, 0),
            };
            i += skip;
            out.push(Token {
                tok: Tok::Num(num),
                pos,
                start,
                end: i,
            });
            col += i - start;
            continue;
        }
        match SYMBOLS.iter().find(|s| text[i..].starts_with(**s)) {
            Some(s) => {
                i += s.len();
                col += s.len();
                out.push(Token {
                    tok: Tok::Sym(s),
                    pos,
                    start,
                    end: i,
                });
            }
            None => return Err(err(line, col, format!("unexpected character `{c}`"))),
        }
    }
    out.push(Token {
        tok: Tok::Eof,
        pos: Pos {
            file: file.to_string(),
            line,
            col,
        },
        start: text.len(),
        end: text.len(),
    });
    Ok(out)
}

#[derive(Debug, Clone, PartialEq)]
pub(crate) struct RefAst {
    pub owner: String,
    pub field: String,
}

#[derive(Debug, Clone, PartialEq)]
pub(crate) enum Expr {
    Num(f64),
    Ref(RefAst),
    Neg(Box<Expr>),
    Add(Box<Expr>, Box<Expr>),
    Sub(Box<Expr>, Box<Expr>),
    Mul(Box<Expr>, Box<Expr>),
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub(crate) enum Cmp {
    Le,
    Lt,
    Ge,
    Gt,
    Eq,
}

#[derive(Debug, Clone, PartialEq)]
pub(crate) enum PredArgAst {
    Ref(RefAst),
    Num(f64),
}

#[derive(Debug, Clone, PartialEq)]
pub(crate) enum ConstraintAst {
    Compare {
        exprs: Vec<Expr>,
        ops: Vec<Cmp>,
        text: String,
        pos: Pos,
    },
    Pred {
        name: String,
        args: Vec<PredArgAst>,
        text: String,
        pos: Pos,
    },
}

#[derive(Debug, Clone, PartialEq)]
pub(crate) enum Item {
    Abstracted,
    Environment,
    Theta(String, Pos),
    Constraint(ConstraintAst),
}

#[derive(Debug, Clone, PartialEq)]
pub(crate) struct ProductionAst {
    pub lhs: String,
    pub terminal: Option<(String, Pos)>,
    pub rhs: Option<String>,
    pub items: Vec<Item>,
    pub pos: Pos,
}

#[derive(Debug, Clone, PartialEq)]
pub(crate) struct GrammarAst {
    pub name: String,
    pub hypothesis: (String, Pos),
    pub salient: Vec<(String, Pos)>,
    pub detector: Option<(String, Pos)>,
    pub productions: Vec<ProductionAst>,
    pub pos: Pos,
}

#[derive(Debug, Clone, PartialEq)]
pub(crate) enum Decl {
    Observable(Observable, Pos),
    IsA(String, String, Pos),
    Excludes(String, String, Pos),
    Grammar(GrammarAst),
}

struct Parser<'a> {
    text: &'a str,
    toks: Vec<Token>,
    at: usize,
}

impl<'a> Parser<'a> {
    fn peek(&self) -> &Tok {
        &self.toks[self.at].tok
    }

    fn pos(&self) -> Pos {
        self.toks[self.at].pos.clone()
    }

    fn error(&self, msg: String) -> KbError {
        KbError {
            kind: KbErrorKind::Syntax,
            pos: self.pos(),
            message: msg,
        }
    }

    fn describe(t: &Tok) -> String {
        match t {
            Tok::Ident(s) => format!("`{s}`"),
            Tok::Num(x) => format!("`{x}`"),
            Tok::Sym(s) => format!("`{s}`"),
            Tok::Eof => "end of input".to_string(),
        }
    }

    fn bump(&mut self) -> Tok {
        let t = self.toks[self.at].tok.clone();
        if t != Tok::Eof {
            self.at += 1;
        }
        t
    }

    fn eat(&mut self, sym: &str) -> bool {
        if matches!(self.peek(), Tok::Sym(s) if *s == sym) {
            self.at += 1;
            true
        } else {
            false
        }
    }

    fn expect(&mut self, sym: &str) -> Result<(), KbError> {
        if self.eat(sym) {
            Ok(())
        } else {
            Err(self.error(format!(
                "expected `{sym}`, found {}",
                Self::describe(self.peek())
            )))
        }
    }

    fn is_keyword(&self, kw: &str) -> bool {
        matches!(self.peek(), Tok::Ident(s) if s == kw)
    }

    fn keyword(&mut self, kw: &str) -> Result<(), KbError> {
        if self.is_keyword(kw) {
            self.at += 1;
            Ok(())
        } else {
            Err(self.error(format!(
                "expected `{kw}`, found {}",
                Self::describe(self.peek())
            )))
        }
    }

    fn ident(&mut self) -> Result<(String, Pos), KbError> {
        let pos = self.pos();
        match self.bump() {
            Tok::Ident(s) => Ok((s, pos)),
            other => {
                self.at -= usize::from(other != Tok::Eof);
                Err(self.error(format!(
                    "expected identifier, found {}",
                    Self::describe(&other)
                )))
            }
        }
    }

    fn number(&mut self) -> Result<f64, KbError> {
        let neg = self.eat("-");
        match self.bump() {
            Tok::Num(x) => Ok(if neg { -x } else { x }),
            other => {
                self.at -= usize::from(other != Tok::Eof);
                Err(self.error(format!("expected number, found {}", Self::describe(&other))))
            }
        }
    }

    fn kb(&mut self) -> Result<Vec<Decl>, KbError> {
        let mut decls = Vec::new();
        loop {
            let pos = self.pos();
            match self.peek().clone() {
                Tok::Eof => return Ok(decls),
                Tok::Ident(kw) if kw == "observable" => decls.push(self.observable()?),
                Tok::Ident(kw) if kw == "isa" || kw == "excludes" => {
                    self.at += 1;
                    let (a, _) = self.ident()?;
                    let (b, _) = self.ident()?;
                    self.expect(";")?;
                    decls.push(if kw == "isa" {
                        Decl::IsA(a, b, pos)
                    } else {
                        Decl::Excludes(a, b, pos)
                    });
                }
                Tok::Ident(kw) if kw == "grammar" => decls.push(Decl::Grammar(self.grammar()?)),
                other => {
                    return Err(self.error(format!(
                        "expected a declaration, found {}",
                        Self::describe(&other)
                    )))
                }
            }
        }
    }

    fn observable(&mut self) -> Result<Decl, KbError> {
        let pos = self.pos();
        self.keyword("observable")?;
        let (id, _) = self.ident()?;
        self.expect("{")?;
        self.keyword("process")?;
        let (process, _) = self.ident()?;
        self.expect(";")?;
        let mut q = Observable::new(&id, &process);
        let mut names = BTreeSet::new();
        loop {
            if self.is_keyword("attr") {
                self.at += 1;
                let (name, npos) = self.ident()?;
                self.expect(":")?;
                let domain = self.domain()?;
                self.expect(";")?;
                if !names.insert(name.clone()) {
                    return Err(KbError::semantic(
                        npos,
                        format!("duplicate attribute `{name}` in `{id}`"),
                    ));
                }
                q.attributes.push(Attribute { name, domain });
            } else if self.is_keyword("instant") {
                self.at += 1;
                self.expect(";")?;
                q.instant = true;
            } else {
                break;
            }
        }
        self.expect("}")?;
        Ok(Decl::Observable(q, pos))
    }

    fn domain(&mut self) -> Result<Domain, KbError> {
        if self.eat("{") {
            let mut labels = BTreeSet::new();
            loop {
                let (l, _) = self.ident()?;
                labels.insert(l);
                if !self.eat(",") {
                    break;
                }
            }
            self.expect("}")?;
            return Ok(Domain::Labels(labels));
        }
        let (kind, pos) = self.ident()?;
        match kind.as_str() {
            "any" => Ok(Domain::Any),
            "bool" => Ok(Domain::Bool),
            "real" => {
                let (mut lo, mut hi) = (None, None);
                if self.eat("[") {
                    lo = Some(self.number()?);
                    self.expect(",")?;
                    hi = Some(self.number()?);
                    self.expect("]")?;
                }
                let unit = match self.peek() {
                    Tok::Ident(u) => {
                        let u = u.clone();
                        self.at += 1;
                        Some(u)
                    }
                    _ => None,
                };
                Ok(Domain::Real { lo, hi, unit })
            }
            other => Err(KbError {
                kind: KbErrorKind::Syntax,
                pos,
                message: format!("unknown domain `{other}`"),
            }),
        }
    }

    fn grammar(&mut self) -> Result<GrammarAst, KbError> {
        let pos = self.pos();
        self.keyword("grammar")?;
        let (name, _) = self.ident()?;
        self.keyword("hypothesizes")?;
        let hypothesis = self.ident()?;
        let mut salient = Vec::new();
        let mut detector = None;
        loop {
            if self.is_keyword("salient") {
                self.at += 1;
                while let Tok::Ident(s) = self.peek() {
                    if s == "detector" {
                        break;
                    }
                    salient.push(self.ident()?);
                }
                if salient.is_empty() {
                    return Err(self.error("`salient` needs at least one observable".into()));
                }
            } else if self.is_keyword("detector") {
                self.at += 1;
                detector = Some(self.ident()?);
            } else {
                break;
            }
        }
        self.expect("{")?;
        let mut productions = Vec::new();
        while !self.eat("}") {
            productions.push(self.production()?);
        }
        if productions.is_empty() {
            return Err(KbError {
                kind: KbErrorKind::Syntax,
                pos,
                message: format!("grammar `{name}` has no productions"),
            });
        }
        Ok(GrammarAst {
            name,
            hypothesis,
            salient,
            detector,
            productions,
            pos,
        })
    }

    fn production(&mut self) -> Result<ProductionAst, KbError> {
        let pos = self.pos();
        let (lhs, _) = self.ident()?;
        self.expect("->")?;
        let (terminal, rhs) = if self.is_keyword("lambda") {
            self.at += 1;
            (None, None)
        } else {
            let t = self.ident()?;
            let rhs = match self.peek() {
                Tok::Ident(_) => Some(self.ident()?.0),
                _ => None,
            };
            (Some(t), rhs)
        };
        self.expect("{")?;
        let mut items = Vec::new();
        loop {
            if self.eat("}") {
                break;
            }
            items.push(self.item()?);
            if !self.eat(";") {
                self.expect("}")?;
                break;
            }
        }
        Ok(ProductionAst {
            lhs,
            terminal,
            rhs,
            items,
            pos,
        })
    }

    fn item(&mut self) -> Result<Item, KbError> {
        let pos = self.pos();
        if self.is_keyword("abstracted") {
            self.at += 1;
            return Ok(Item::Abstracted);
        }
        if self.is_keyword("environment") {
            self.at += 1;
            return Ok(Item::Environment);
        }
        if self.is_keyword("theta") {
            self.at += 1;
            let (name, p) = self.ident()?;
            return Ok(Item::Theta(name, p));
        }
        let start = self.toks[self.at].start;
        if self.is_keyword("pred") {
            self.at += 1;
            let (name, _) = self.ident()?;
            self.expect("(")?;
            let mut args = Vec::new();
            if !self.eat(")") {
                loop {
                    let arg = match self.peek() {
                        Tok::Num(_) | Tok::Sym("-") => PredArgAst::Num(self.number()?),
                        _ => PredArgAst::Ref(self.reference()?),
                    };
                    args.push(arg);
                    if self.eat(")") {
                        break;
                    }
                    self.expect(",")?;
                }
            }
            let text = self.text[start..self.toks[self.at - 1].end].to_string();
            return Ok(Item::Constraint(ConstraintAst::Pred {
                name,
                args,
                text,
                pos,
            }));
        }
        let mut exprs = vec![self.expr()?];
        let mut ops = Vec::new();
        while let Some(op) = self.cmp() {
            ops.push(op);
            exprs.push(self.expr()?);
        }
        if ops.is_empty() {
            return Err(self.error(format!(
                "expected a comparison, found {}",
                Self::describe(self.peek())
            )));
        }
        let text = self.text[start..self.toks[self.at - 1].end].to_string();
        Ok(Item::Constraint(ConstraintAst::Compare {
            exprs,
            ops,
            text,
            pos,
        }))
    }

    fn cmp(&mut self) -> Option<Cmp> {
        let op = match self.peek() {
            Tok::Sym("<=") => Cmp::Le,
            Tok::Sym("<") => Cmp::Lt,
            Tok::Sym(">=") => Cmp::Ge,
            Tok::Sym(">") => Cmp::Gt,
            Tok::Sym("=") | Tok::Sym("==") => Cmp::Eq,
            _ => return None,
        };
        self.at += 1;
        Some(op)
    }

    fn expr(&mut self) -> Result<Expr, KbError> {
        let mut e = self.term()?;
        loop {
            if self.eat("+") {
                e = Expr::Add(Box::new(e), Box::new(self.term()?));
            } else if self.eat("-") {
                e = Expr::Sub(Box::new(e), Box::new(self.term()?));
            } else {
                return Ok(e);
            }
        }
    }

    fn term(&mut self) -> Result<Expr, KbError> {
        let mut e = self.factor()?;
        while self.eat("*") {
            e = Expr::Mul(Box::new(e), Box::new(self.factor()?));
        }
        Ok(e)
    }

    fn factor(&mut self) -> Result<Expr, KbError> {
        if self.eat("-") {
            return Ok(Expr::Neg(Box::new(self.factor()?)));
        }
        if self.eat("(") {
            let e = self.expr()?;
            self.expect(")")?;
            return Ok(e);
        }
        match self.peek().clone() {
            Tok::Num(x) => {
                self.at += 1;
                Ok(Expr::Num(x))
            }
            Tok::Ident(_) => Ok(Expr::Ref(self.reference()?)),
            other => Err(self.error(format!(
                "expected an expression, found {}",
                Self::describe(&other)
            ))),
        }
    }

    fn reference(&mut self) -> Result<RefAst, KbError> {
        let (owner, _) = self.ident()?;
        self.expect(".")?;
        let (field, _) = self.ident()?;
        Ok(RefAst { owner, field })
    }
}

pub(crate) fn parse(file: &str, text: &str) -> Result<Vec<Decl>, KbError> {
    let toks = lex(file, text)?;
    Parser { text, toks, at: 0 }.kb()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn lexes_time_suffixes() {
        let toks = lex("t", "50ms 0.5s 7").unwrap();
        let nums: Vec<f64> = toks
            .iter()
            .filter_map(|t| match t.tok {
                Tok::Num(x) => Some(x),
                _ => None,
            })
            .collect();
        assert_eq!(nums, vec![50.0, 500.0, 7.0]);
    }

    #[test]
    fn syntax_error_location() {
        let err = parse("kb", "observable A {\n  process p\n}").unwrap_err();
        assert_eq!(err.kind, KbErrorKind::Syntax);
        assert_eq!((err.pos.line, err.pos.col), (3, 1));
    }

    #[test]
    fn parses_production_items() {
        let decls = parse(
            "kb",
            "grammar G hypothesizes N { H -> Pw D { abstracted; theta f; h.Tb = m.Tb; 1.5*200 <= m.Te - m.Tb < 4*800; pred p(m.Tb, 3) } D -> lambda { } }",
        )
        .unwrap();
        let Decl::Grammar(g) = &decls[0] else {
            panic!()
        };
        assert_eq!(g.productions.len(), 2);
        assert_eq!(g.productions[0].items.len(), 5);
        assert!(g.productions[1].terminal.is_none());
        let Item::Constraint(ConstraintAst::Compare { text, .. }) = &g.productions[0].items[3]
        else {
            panic!()
        };
        assert_eq!(text, "1.5*200 <= m.Te - m.Tb < 4*800");
    }
}
