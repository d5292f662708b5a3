use alloc::boxed::Box;
use alloc::string::String;
use alloc::sync::Arc;
use alloc::vec::Vec;

use crate::value::FnDef;

/// 1-based line and column of a character in cell source.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Default)]
pub struct Pos {
    pub line: u32,
    pub col: u32,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct Span {
    pub start: Pos,
    pub end: Pos,
    pub start_byte: usize,
    pub end_byte: usize,
}

/// How an identifier resolves, decided statically at parse time.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum NameClass {
    Builtin,
    Param,
    Global,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Ident {
    pub name: String,
    pub class: NameClass,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BinOp {
    Add,
    Sub,
    Mul,
    Div,
    Rem,
    Eq,
    Ne,
    Lt,
    Gt,
    Le,
    Ge,
    Concat,
}

impl BinOp {
    pub fn symbol(self) -> &'static str {
        match self {
            BinOp::Add => "+",
            BinOp::Sub => "-",
            BinOp::Mul => "*",
            BinOp::Div => "/",
            BinOp::Rem => "%",
            BinOp::Eq => "==",
            BinOp::Ne => "!=",
            BinOp::Lt => "<",
            BinOp::Gt => ">",
            BinOp::Le => "<=",
            BinOp::Ge => ">=",
            BinOp::Concat => "++",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Expr {
    Int(i64),
    Float(f64),
    Str(String),
    Bool(bool),
    Name(Ident),
    List(Vec<Expr>),
    Map(Vec<(Expr, Expr)>),
    Neg(Box<Expr>),
    Binary(BinOp, Box<Expr>, Box<Expr>),
    Index(Box<Expr>, Box<Expr>),
    Call(Ident, Vec<Expr>),
}

impl Expr {
    /// Visit every identifier in evaluation order (call heads before their
    /// arguments).
    pub fn for_each_ident<'a>(&'a self, f: &mut impl FnMut(&'a Ident)) {
        match self {
            Expr::Int(_) | Expr::Float(_) | Expr::Str(_) | Expr::Bool(_) => {}
            Expr::Name(id) => f(id),
            Expr::List(items) => items.iter().for_each(|e| e.for_each_ident(f)),
            Expr::Map(pairs) => {
                for (k, v) in pairs {
                    k.for_each_ident(f);
                    v.for_each_ident(f);
                }
            }
            Expr::Neg(e) => e.for_each_ident(f),
            Expr::Binary(_, l, r) | Expr::Index(l, r) => {
                l.for_each_ident(f);
                r.for_each_ident(f);
            }
            Expr::Call(head, args) => {
                f(head);
                args.iter().for_each(|e| e.for_each_ident(f));
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum StmtKind {
    Assign { target: String, value: Expr },
    IndexSet { target: String, index: Expr, value: Expr },
    Push { target: String, value: Expr },
    FnDef(Arc<FnDef>),
    Expr(Expr),
}

#[derive(Debug, Clone, PartialEq)]
pub struct Statement {
    pub kind: StmtKind,
    pub span: Span,
    /// Exact source text of the statement.
    pub source: String,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct CellAst {
    pub statements: Vec<Statement>,
}
