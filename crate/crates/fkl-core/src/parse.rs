//! Parser for group-ring elements and matrices.
//!
//! Grammar (whitespace insignificant):
//! ```text
//! expr   := term (('+'|'-') term)*
//! term   := int | int '*' mono | mono
//! mono   := gen ('^' int)? ('*' gen ('^' int)?)*
//! matrix := '[' row (';' row)* ']'   row := expr (',' expr)*
//! ```
//! Errors report the byte position of the offending token.

use crate::error::{FklError, Result};
use crate::group::{GroupDescriptor, GroupElement};
use crate::ring::{GroupRingElement, GroupRingMatrix};
use num_bigint::BigInt;
use num_traits::One;

struct Lexer<'a> {
    input: &'a [u8],
    pos: usize,
}

#[derive(Debug, Clone, PartialEq)]
enum Token {
    Int(BigInt),
    Ident(String),
    Plus,
    Minus,
    Star,
    Caret,
    LBracket,
    RBracket,
    Comma,
    Semicolon,
    End,
}

impl<'a> Lexer<'a> {
    fn new(input: &'a str) -> Self {
        Lexer {
            input: input.as_bytes(),
            pos: 0,
        }
    }

    fn skip_ws(&mut self) {
        while self.pos < self.input.len() && self.input[self.pos].is_ascii_whitespace() {
            self.pos += 1;
        }
    }

    fn peek_pos(&mut self) -> usize {
        self.skip_ws();
        self.pos
    }

    fn next_token(&mut self) -> Result<(usize, Token)> {
        self.skip_ws();
        let start = self.pos;
        if self.pos >= self.input.len() {
            return Ok((start, Token::End));
        }
        let c = self.input[self.pos];
        let tok = match c {
            b'+' => Token::Plus,
            b'-' => Token::Minus,
            b'*' => Token::Star,
            b'^' => Token::Caret,
            b'[' => Token::LBracket,
            b']' => Token::RBracket,
            b',' => Token::Comma,
            b';' => Token::Semicolon,
            b'0'..=b'9' => {
                let mut end = self.pos;
                while end < self.input.len() && self.input[end].is_ascii_digit() {
                    end += 1;
                }
                let s = std::str::from_utf8(&self.input[self.pos..end]).unwrap();
                self.pos = end;
                return Ok((start, Token::Int(s.parse().unwrap())));
            }
            c if c.is_ascii_alphabetic() => {
                let mut end = self.pos;
                while end < self.input.len()
                    && (self.input[end].is_ascii_alphanumeric() || self.input[end] == b'_')
                {
                    end += 1;
                }
                let s = std::str::from_utf8(&self.input[self.pos..end])
                    .unwrap()
                    .to_string();
                self.pos = end;
                return Ok((start, Token::Ident(s)));
            }
            other => {
                return Err(FklError::Syntax {
                    position: start,
                    message: format!("unexpected character '{}'", other as char),
                })
            }
        };
        self.pos += 1;
        Ok((start, tok))
    }
}

struct Parser<'a> {
    lexer: Lexer<'a>,
    group: GroupDescriptor,
    lookahead: Option<(usize, Token)>,
}

impl<'a> Parser<'a> {
    fn new(input: &'a str, group: GroupDescriptor) -> Self {
        Parser {
            lexer: Lexer::new(input),
            group,
            lookahead: None,
        }
    }

    fn peek(&mut self) -> Result<&(usize, Token)> {
        if self.lookahead.is_none() {
            self.lookahead = Some(self.lexer.next_token()?);
        }
        Ok(self.lookahead.as_ref().unwrap())
    }

    fn advance(&mut self) -> Result<(usize, Token)> {
        match self.lookahead.take() {
            Some(t) => Ok(t),
            None => self.lexer.next_token(),
        }
    }

    fn expect_int(&mut self) -> Result<BigInt> {
        // optional sign, for exponents like ^-1
        let (pos, tok) = self.advance()?;
        match tok {
            Token::Int(v) => Ok(v),
            Token::Minus => {
                let (pos2, tok2) = self.advance()?;
                match tok2 {
                    Token::Int(v) => Ok(-v),
                    _ => Err(FklError::Syntax {
                        position: pos2,
                        message: "expected integer after '-'".into(),
                    }),
                }
            }
            _ => Err(FklError::Syntax {
                position: pos,
                message: "expected integer".into(),
            }),
        }
    }

    fn parse_generator(&mut self, name: &str, pos: usize) -> Result<usize> {
        self.group.generator_index(name).ok_or_else(|| FklError::Syntax {
            position: pos,
            message: format!("unknown generator '{}' for group {}", name, self.group),
        })
    }

    /// mono := gen('^'int)? ('*' gen('^'int)?)*
    /// Called with the first identifier already consumed.
    fn parse_mono(&mut self, first: String, first_pos: usize) -> Result<GroupElement> {
        let mut g = GroupElement::identity(self.group);
        let mut name = first;
        let mut name_pos = first_pos;
        loop {
            let idx = self.parse_generator(&name, name_pos)?;
            let exp = if matches!(self.peek()?.1, Token::Caret) {
                self.advance()?;
                let e = self.expect_int()?;
                i64::try_from(&e).map_err(|_| FklError::Syntax {
                    position: name_pos,
                    message: "exponent out of range".into(),
                })?
            } else {
                1
            };
            g = g.mul(&GroupElement::generator(self.group, idx, exp).map_err(|e| {
                FklError::Syntax {
                    position: name_pos,
                    message: e.to_string(),
                }
            })?);
            // continue on '*' followed by an identifier
            if matches!(self.peek()?.1, Token::Star) {
                let save = self.lookahead.clone();
                self.advance()?;
                match self.peek()?.1.clone() {
                    Token::Ident(next) => {
                        name_pos = self.peek()?.0;
                        name = next;
                        self.advance()?;
                    }
                    _ => {
                        // '*' not followed by a generator: not part of this mono
                        // (cannot happen in this grammar; restore and stop)
                        self.lookahead = save;
                        break;
                    }
                }
            } else {
                break;
            }
        }
        Ok(g)
    }

    /// term := int | int'*'mono | mono
    fn parse_term(&mut self) -> Result<(BigInt, GroupElement)> {
        let (pos, tok) = self.advance()?;
        match tok {
            Token::Int(c) => {
                if matches!(self.peek()?.1, Token::Star) {
                    self.advance()?;
                    let (gpos, gtok) = self.advance()?;
                    match gtok {
                        Token::Ident(name) => Ok((c, self.parse_mono(name, gpos)?)),
                        _ => Err(FklError::Syntax {
                            position: gpos,
                            message: "expected generator after '*'".into(),
                        }),
                    }
                } else {
                    Ok((c, GroupElement::identity(self.group)))
                }
            }
            Token::Ident(name) => Ok((BigInt::one(), self.parse_mono(name, pos)?)),
            _ => Err(FklError::Syntax {
                position: pos,
                message: "expected term".into(),
            }),
        }
    }

    /// expr := term (('+'|'-') term)*
    fn parse_expr(&mut self) -> Result<GroupRingElement> {
        let mut out = GroupRingElement::zero(self.group);
        // optional leading sign
        let mut sign = BigInt::one();
        if matches!(self.peek()?.1, Token::Minus) {
            self.advance()?;
            sign = -sign;
        } else if matches!(self.peek()?.1, Token::Plus) {
            self.advance()?;
        }
        loop {
            let (c, g) = self.parse_term()?;
            out.add_term(g, c * &sign);
            match self.peek()?.1 {
                Token::Plus => {
                    self.advance()?;
                    sign = BigInt::one();
                }
                Token::Minus => {
                    self.advance()?;
                    sign = -BigInt::one();
                }
                _ => break,
            }
        }
        Ok(out)
    }

    fn expect_end(&mut self) -> Result<()> {
        let (pos, tok) = self.advance()?;
        if tok == Token::End {
            Ok(())
        } else {
            Err(FklError::Syntax {
                position: pos,
                message: "unexpected trailing input".into(),
            })
        }
    }
}

/// Parse a single group-ring element.
pub fn parse_element(text: &str, group: GroupDescriptor) -> Result<GroupRingElement> {
    let mut p = Parser::new(text, group);
    let e = p.parse_expr()?;
    p.expect_end()?;
    Ok(e)
}

/// Parse a matrix `[expr, expr; expr, expr]`. Bare expressions without
/// brackets parse as 1x1 matrices.
pub fn parse_matrix(text: &str, group: GroupDescriptor) -> Result<GroupRingMatrix> {
    let mut p = Parser::new(text, group);
    if !matches!(p.peek()?.1, Token::LBracket) {
        let e = p.parse_expr()?;
        p.expect_end()?;
        return Ok(GroupRingMatrix::from_element(e));
    }
    p.advance()?;
    let mut rows: Vec<Vec<GroupRingElement>> = Vec::new();
    loop {
        let mut row = vec![p.parse_expr()?];
        while matches!(p.peek()?.1, Token::Comma) {
            p.advance()?;
            row.push(p.parse_expr()?);
        }
        rows.push(row);
        let (pos, tok) = p.advance()?;
        match tok {
            Token::Semicolon => continue,
            Token::RBracket => break,
            _ => {
                return Err(FklError::Syntax {
                    position: pos,
                    message: "expected ';' or ']'".into(),
                })
            }
        }
    }
    p.expect_end()?;
    let cols = rows[0].len();
    if rows.iter().any(|r| r.len() != cols) {
        let pos = p.lexer.peek_pos();
        return Err(FklError::Syntax {
            position: pos,
            message: "ragged matrix rows".into(),
        });
    }
    let m = rows.len();
    GroupRingMatrix::from_entries(m, cols, rows.into_iter().flatten().collect())
}
