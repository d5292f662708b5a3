use alloc::string::String;
use alloc::vec::Vec;

use super::ast::Pos;
use super::SyntaxError;

#[derive(Debug, Clone, PartialEq)]
pub(crate) enum Tok {
    Int(i64),
    Float(f64),
    Str(String),
    Name(String),
    True,
    False,
    Fn,
    Push,
    Assign,
    LBracket,
    RBracket,
    LParen,
    RParen,
    LBrace,
    RBrace,
    Comma,
    Colon,
    Plus,
    Minus,
    Star,
    Slash,
    Percent,
    EqEq,
    NotEq,
    Lt,
    Gt,
    Le,
    Ge,
    Concat,
    /// Newline or `;` outside of any bracket.
    Sep,
    Eof,
}

#[derive(Debug, Clone)]
pub(crate) struct Token {
    pub tok: Tok,
    pub pos: Pos,
    pub start: usize,
    pub end: usize,
}

pub(crate) fn tokenize(src: &str) -> Result<Vec<Token>, SyntaxError> {
    Lexer { src, bytes: src.as_bytes(), i: 0, line: 1, col: 1, depth: 0, out: Vec::new() }.run()
}

struct Lexer<'a> {
    src: &'a str,
    bytes: &'a [u8],
    i: usize,
    line: u32,
    col: u32,
    depth: usize,
    out: Vec<Token>,
}

impl Lexer<'_> {
    fn pos(&self) -> Pos {
        Pos { line: self.line, col: self.col }
    }

    fn peek(&self) -> Option<u8> {
        self.bytes.get(self.i).copied()
    }

    fn peek2(&self) -> Option<u8> {
        self.bytes.get(self.i + 1).copied()
    }

    fn bump(&mut self) -> Option<char> {
        let c = self.src[self.i..].chars().next()?;
        self.i += c.len_utf8();
        if c == '\n' {
            self.line += 1;
            self.col = 1;
        } else {
            self.col += 1;
        }
        Some(c)
    }

    fn push(&mut self, tok: Tok, pos: Pos, start: usize) {
        self.out.push(Token { tok, pos, start, end: self.i });
    }

    fn run(mut self) -> Result<Vec<Token>, SyntaxError> {
        while let Some(b) = self.peek() {
            let pos = self.pos();
            let start = self.i;
            match b {
                b' ' | b'\t' | b'\r' => {
                    self.bump();
                }
                b'#' => {
                    while let Some(c) = self.peek() {
                        if c == b'\n' {
                            break;
                        }
                        self.bump();
                    }
                }
                b'\n' | b';' => {
                    self.bump();
                    if self.depth == 0 {
                        self.push(Tok::Sep, pos, start);
                    } else if b == b';' {
                        return Err(SyntaxError::new(pos, "`;` inside brackets"));
                    }
                }
                b'"' => self.string(pos, start)?,
                b'0'..=b'9' => self.number(pos, start)?,
                b if b == b'_' || b.is_ascii_alphabetic() => {
                    while matches!(self.peek(), Some(c) if c == b'_' || c.is_ascii_alphanumeric()) {
                        self.bump();
                    }
                    let word = &self.src[start..self.i];
                    let tok = match word {
                        "true" => Tok::True,
                        "false" => Tok::False,
                        "fn" => Tok::Fn,
                        "push" => Tok::Push,
                        _ => Tok::Name(String::from(word)),
                    };
                    self.push(tok, pos, start);
                }
                _ => self.punct(pos, start)?,
            }
        }
        let pos = self.pos();
        let end = self.i;
        self.out.push(Token { tok: Tok::Eof, pos, start: end, end });
        Ok(self.out)
    }

    fn punct(&mut self, pos: Pos, start: usize) -> Result<(), SyntaxError> {
        let b = self.peek().unwrap_or(0);
        let next = self.peek2();
        let (tok, width) = match (b, next) {
            (b'=', Some(b'=')) => (Tok::EqEq, 2),
            (b'!', Some(b'=')) => (Tok::NotEq, 2),
            (b'<', Some(b'=')) => (Tok::Le, 2),
            (b'>', Some(b'=')) => (Tok::Ge, 2),
            (b'+', Some(b'+')) => (Tok::Concat, 2),
            (b'=', _) => (Tok::Assign, 1),
            (b'<', _) => (Tok::Lt, 1),
            (b'>', _) => (Tok::Gt, 1),
            (b'+', _) => (Tok::Plus, 1),
            (b'-', _) => (Tok::Minus, 1),
            (b'*', _) => (Tok::Star, 1),
            (b'/', _) => (Tok::Slash, 1),
            (b'%', _) => (Tok::Percent, 1),
            (b',', _) => (Tok::Comma, 1),
            (b':', _) => (Tok::Colon, 1),
            (b'[', _) => (Tok::LBracket, 1),
            (b']', _) => (Tok::RBracket, 1),
            (b'(', _) => (Tok::LParen, 1),
            (b')', _) => (Tok::RParen, 1),
            (b'{', _) => (Tok::LBrace, 1),
            (b'}', _) => (Tok::RBrace, 1),
            _ => {
                let c = self.src[self.i..].chars().next().unwrap_or('?');
                return Err(SyntaxError::new(pos, alloc::format!("unexpected character {c:?}")));
            }
        };
        match tok {
            Tok::LBracket | Tok::LParen | Tok::LBrace => self.depth += 1,
            Tok::RBracket | Tok::RParen | Tok::RBrace => self.depth = self.depth.saturating_sub(1),
            _ => {}
        }
        for _ in 0..width {
            self.bump();
        }
        self.push(tok, pos, start);
        Ok(())
    }

    fn number(&mut self, pos: Pos, start: usize) -> Result<(), SyntaxError> {
        while matches!(self.peek(), Some(b'0'..=b'9')) {
            self.bump();
        }
        let is_float = self.peek() == Some(b'.') && matches!(self.peek2(), Some(b'0'..=b'9'));
        if is_float {
            self.bump();
            while matches!(self.peek(), Some(b'0'..=b'9')) {
                self.bump();
            }
            let text = &self.src[start..self.i];
            let v: f64 = text
                .parse()
                .map_err(|_| SyntaxError::new(pos, alloc::format!("bad float literal {text}")))?;
            self.push(Tok::Float(v), pos, start);
        } else {
            let text = &self.src[start..self.i];
            let v: i64 = text.parse().map_err(|_| {
                SyntaxError::new(pos, alloc::format!("integer literal {text} out of range"))
            })?;
            self.push(Tok::Int(v), pos, start);
        }
        Ok(())
    }

    fn string(&mut self, pos: Pos, start: usize) -> Result<(), SyntaxError> {
        self.bump();
        let mut s = String::new();
        loop {
            let here = self.pos();
            match self.bump() {
                None | Some('\n') => return Err(SyntaxError::new(pos, "unterminated string")),
                Some('"') => break,
                Some('\\') => match self.bump() {
                    Some('"') => s.push('"'),
                    Some('\\') => s.push('\\'),
                    Some('n') => s.push('\n'),
                    Some(c) => {
                        return Err(SyntaxError::new(here, alloc::format!("unknown escape \\{c}")))
                    }
                    None => return Err(SyntaxError::new(pos, "unterminated string")),
                },
                Some(c) => s.push(c),
            }
        }
        self.push(Tok::Str(s), pos, start);
        Ok(())
    }
}
