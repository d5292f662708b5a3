use alloc::boxed::Box;
use alloc::format;
use alloc::string::String;
use alloc::sync::Arc;
use alloc::vec::Vec;

use super::ast::{BinOp, CellAst, Expr, Ident, NameClass, Span, Statement, StmtKind};
use super::lexer::{tokenize, Tok, Token};
use super::SyntaxError;
use crate::analysis::is_builtin;
use crate::value::FnDef;

pub fn parse_cell(code: &str) -> Result<CellAst, SyntaxError> {
    let tokens = tokenize(code)?;
    let mut p = Parser { src: code, tokens, i: 0, params: Vec::new() };
    let mut statements = Vec::new();
    loop {
        while p.at(&Tok::Sep) {
            p.i += 1;
        }
        if p.at(&Tok::Eof) {
            break;
        }
        statements.push(p.statement()?);
        match p.peek().tok {
            Tok::Sep | Tok::Eof => {}
            _ => return Err(p.unexpected("end of statement")),
        }
    }
    Ok(CellAst { statements })
}

/// Parse a standalone function definition such as `fn double(a) = a * 2`.
pub fn parse_fn_def(source: &str) -> Result<Arc<FnDef>, SyntaxError> {
    let ast = parse_cell(source)?;
    match ast.statements.as_slice() {
        [Statement { kind: StmtKind::FnDef(def), .. }] => Ok(def.clone()),
        _ => Err(SyntaxError::new(Default::default(), "expected a single function definition")),
    }
}

struct Parser<'a> {
    src: &'a str,
    tokens: Vec<Token>,
    i: usize,
    params: Vec<String>,
}

impl Parser<'_> {
    fn peek(&self) -> &Token {
        &self.tokens[self.i.min(self.tokens.len() - 1)]
    }

    fn at(&self, t: &Tok) -> bool {
        core::mem::discriminant(&self.peek().tok) == core::mem::discriminant(t)
    }

    fn next(&mut self) -> Token {
        let t = self.peek().clone();
        if self.i < self.tokens.len() - 1 {
            self.i += 1;
        }
        t
    }

    fn unexpected(&self, wanted: &str) -> SyntaxError {
        let t = self.peek();
        let found = match &t.tok {
            Tok::Eof => String::from("end of input"),
            Tok::Sep => String::from("end of line"),
            _ => format!("`{}`", &self.src[t.start..t.end]),
        };
        SyntaxError::new(t.pos, format!("expected {wanted}, found {found}"))
    }

    fn expect(&mut self, t: Tok, wanted: &str) -> Result<Token, SyntaxError> {
        if self.at(&t) {
            Ok(self.next())
        } else {
            Err(self.unexpected(wanted))
        }
    }

    fn name(&mut self) -> Result<String, SyntaxError> {
        match self.peek().tok.clone() {
            Tok::Name(n) => {
                self.next();
                Ok(n)
            }
            _ => Err(self.unexpected("a name")),
        }
    }

    fn ident(&self, name: String) -> Ident {
        let class = if self.params.contains(&name) {
            NameClass::Param
        } else if is_builtin(&name) {
            NameClass::Builtin
        } else {
            NameClass::Global
        };
        Ident { name, class }
    }

    fn statement(&mut self) -> Result<Statement, SyntaxError> {
        let first = self.peek().clone();
        let kind = match first.tok {
            Tok::Fn => self.fn_def(first.start)?,
            Tok::Push => {
                self.next();
                self.expect(Tok::LParen, "`(` after push")?;
                let target = self.name()?;
                self.expect(Tok::Comma, "`,`")?;
                let value = self.expr()?;
                self.expect(Tok::RParen, "`)`")?;
                StmtKind::Push { target, value }
            }
            _ => {
                let lhs = self.expr()?;
                if self.at(&Tok::Assign) {
                    let eq = self.next();
                    let value = self.expr()?;
                    match lhs {
                        Expr::Name(id) => StmtKind::Assign { target: id.name, value },
                        Expr::Index(base, index) => match *base {
                            Expr::Name(id) => StmtKind::IndexSet { target: id.name, index: *index, value },
                            _ => return Err(bad_target(eq.pos)),
                        },
                        _ => return Err(bad_target(eq.pos)),
                    }
                } else {
                    StmtKind::Expr(lhs)
                }
            }
        };
        if let StmtKind::Assign { target, .. } | StmtKind::IndexSet { target, .. } = &kind {
            if is_builtin(target) {
                return Err(SyntaxError::new(first.pos, format!("cannot assign to builtin `{target}`")));
            }
        }
        let last = &self.tokens[self.i - 1];
        let span = Span { start: first.pos, end: end_pos(self.src, last), start_byte: first.start, end_byte: last.end };
        let source = String::from(&self.src[first.start..last.end]);
        if let StmtKind::FnDef(def) = &kind {
            debug_assert_eq!(def.source, source);
        }
        Ok(Statement { kind, span, source })
    }

    fn fn_def(&mut self, start: usize) -> Result<StmtKind, SyntaxError> {
        let kw = self.next();
        let name = self.name()?;
        if is_builtin(&name) {
            return Err(SyntaxError::new(kw.pos, format!("cannot redefine builtin `{name}`")));
        }
        self.expect(Tok::LParen, "`(`")?;
        let mut params = Vec::new();
        if !self.at(&Tok::RParen) {
            loop {
                let pos = self.peek().pos;
                let p = self.name()?;
                if params.contains(&p) {
                    return Err(SyntaxError::new(pos, format!("duplicate parameter `{p}`")));
                }
                params.push(p);
                if self.at(&Tok::Comma) {
                    self.next();
                } else {
                    break;
                }
            }
        }
        self.expect(Tok::RParen, "`)`")?;
        self.expect(Tok::Assign, "`=`")?;
        let saved = core::mem::replace(&mut self.params, params.clone());
        let body = self.expr();
        self.params = saved;
        let body = body?;
        let end = self.tokens[self.i - 1].end;
        let source = String::from(&self.src[start..end]);
        Ok(StmtKind::FnDef(Arc::new(FnDef { name, params, body, source })))
    }

    fn expr(&mut self) -> Result<Expr, SyntaxError> {
        let lhs = self.additive()?;
        let op = match self.peek().tok {
            Tok::EqEq => BinOp::Eq,
            Tok::NotEq => BinOp::Ne,
            Tok::Lt => BinOp::Lt,
            Tok::Gt => BinOp::Gt,
            Tok::Le => BinOp::Le,
            Tok::Ge => BinOp::Ge,
            _ => return Ok(lhs),
        };
        self.next();
        let rhs = self.additive()?;
        if matches!(self.peek().tok, Tok::EqEq | Tok::NotEq | Tok::Lt | Tok::Gt | Tok::Le | Tok::Ge) {
            return Err(SyntaxError::new(self.peek().pos, "comparisons do not chain; use parentheses"));
        }
        Ok(Expr::Binary(op, Box::new(lhs), Box::new(rhs)))
    }

    fn additive(&mut self) -> Result<Expr, SyntaxError> {
        let mut lhs = self.multiplicative()?;
        loop {
            let op = match self.peek().tok {
                Tok::Plus => BinOp::Add,
                Tok::Minus => BinOp::Sub,
                Tok::Concat => BinOp::Concat,
                _ => return Ok(lhs),
            };
            self.next();
            let rhs = self.multiplicative()?;
            lhs = Expr::Binary(op, Box::new(lhs), Box::new(rhs));
        }
    }

    fn multiplicative(&mut self) -> Result<Expr, SyntaxError> {
        let mut lhs = self.unary()?;
        loop {
            let op = match self.peek().tok {
                Tok::Star => BinOp::Mul,
                Tok::Slash => BinOp::Div,
                Tok::Percent => BinOp::Rem,
                _ => return Ok(lhs),
            };
            self.next();
            let rhs = self.unary()?;
            lhs = Expr::Binary(op, Box::new(lhs), Box::new(rhs));
        }
    }

    fn unary(&mut self) -> Result<Expr, SyntaxError> {
        if self.at(&Tok::Minus) {
            self.next();
            return Ok(match self.unary()? {
                Expr::Int(v) => Expr::Int(-v),
                Expr::Float(v) => Expr::Float(-v),
                e => Expr::Neg(Box::new(e)),
            });
        }
        self.postfix()
    }

    fn postfix(&mut self) -> Result<Expr, SyntaxError> {
        let mut e = self.primary()?;
        while self.at(&Tok::LBracket) {
            self.next();
            let idx = self.expr()?;
            self.expect(Tok::RBracket, "`]`")?;
            e = Expr::Index(Box::new(e), Box::new(idx));
        }
        Ok(e)
    }

    fn primary(&mut self) -> Result<Expr, SyntaxError> {
        let t = self.peek().clone();
        match t.tok {
            Tok::Int(v) => {
                self.next();
                Ok(Expr::Int(v))
            }
            Tok::Float(v) => {
                self.next();
                Ok(Expr::Float(v))
            }
            Tok::Str(s) => {
                self.next();
                Ok(Expr::Str(s))
            }
            Tok::True => {
                self.next();
                Ok(Expr::Bool(true))
            }
            Tok::False => {
                self.next();
                Ok(Expr::Bool(false))
            }
            Tok::Name(n) => {
                self.next();
                let id = self.ident(n);
                if self.at(&Tok::LParen) {
                    self.next();
                    let args = self.list_until(Tok::RParen, "`)`")?;
                    Ok(Expr::Call(id, args))
                } else {
                    Ok(Expr::Name(id))
                }
            }
            Tok::LParen => {
                self.next();
                let e = self.expr()?;
                self.expect(Tok::RParen, "`)`")?;
                Ok(e)
            }
            Tok::LBracket => {
                self.next();
                Ok(Expr::List(self.list_until(Tok::RBracket, "`]`")?))
            }
            Tok::LBrace => {
                self.next();
                let mut pairs = Vec::new();
                while !self.at(&Tok::RBrace) {
                    let k = self.expr()?;
                    self.expect(Tok::Colon, "`:`")?;
                    let v = self.expr()?;
                    pairs.push((k, v));
                    if self.at(&Tok::Comma) {
                        self.next();
                    } else {
                        break;
                    }
                }
                self.expect(Tok::RBrace, "`}`")?;
                Ok(Expr::Map(pairs))
            }
            Tok::Push => Err(SyntaxError::new(t.pos, "push(...) is a statement, not an expression")),
            _ => Err(self.unexpected("an expression")),
        }
    }

    fn list_until(&mut self, close: Tok, wanted: &str) -> Result<Vec<Expr>, SyntaxError> {
        let mut items = Vec::new();
        while !self.at(&close) {
            items.push(self.expr()?);
            if self.at(&Tok::Comma) {
                self.next();
            } else {
                break;
            }
        }
        self.expect(close, wanted)?;
        Ok(items)
    }
}

fn bad_target(pos: super::ast::Pos) -> SyntaxError {
    SyntaxError::new(pos, "assignment target must be NAME or NAME[index]")
}

fn end_pos(src: &str, last: &Token) -> super::ast::Pos {
    let mut pos = last.pos;
    for c in src[last.start..last.end].chars() {
        if c == '\n' {
            pos.line += 1;
            pos.col = 1;
        } else {
            pos.col += 1;
        }
    }
    pos
}
