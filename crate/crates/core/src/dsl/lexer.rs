//! Tokenizer for the diagram DSL. Tracks line/column for every token.

use std::fmt;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Span {
    pub line: usize,
    pub col: usize,
}

impl fmt::Display for Span {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}:{}", self.line, self.col)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum TokenKind {
    /// `[A-Za-z_][A-Za-z0-9_/]*`
    Ident(String),
    /// Raw numeric literal text (sign, decimals, exponent).
    Number(String),
    LBrace,
    RBrace,
    LBracket,
    RBracket,
    Colon,
    Semi,
    Comma,
    Dot,
    Arrow,
    Eof,
}

impl TokenKind {
    pub fn describe(&self) -> String {
        match self {
            TokenKind::Ident(s) => format!("identifier `{s}`"),
            TokenKind::Number(s) => format!("number `{s}`"),
            TokenKind::LBrace => "`{`".to_string(),
            TokenKind::RBrace => "`}`".to_string(),
            TokenKind::LBracket => "`[`".to_string(),
            TokenKind::RBracket => "`]`".to_string(),
            TokenKind::Colon => "`:`".to_string(),
            TokenKind::Semi => "`;`".to_string(),
            TokenKind::Comma => "`,`".to_string(),
            TokenKind::Dot => "`.`".to_string(),
            TokenKind::Arrow => "`->`".to_string(),
            TokenKind::Eof => "end of input".to_string(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Token {
    pub kind: TokenKind,
    pub span: Span,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LexError {
    pub span: Span,
    pub message: String,
}

pub fn lex(text: &str) -> Result<Vec<Token>, LexError> {
    let mut tokens = Vec::new();
    let mut line = 1usize;
    let mut col = 1usize;
    let mut chars = text.chars().peekable();

    macro_rules! bump {
        () => {{
            let c = chars.next();
            if c == Some('\n') {
                line += 1;
                col = 1;
            } else if c.is_some() {
                col += 1;
            }
            c
        }};
    }

    loop {
        let span = Span { line, col };
        let Some(&c) = chars.peek() else {
            tokens.push(Token { kind: TokenKind::Eof, span });
            return Ok(tokens);
        };
        match c {
            ' ' | '\t' | '\r' | '\n' => {
                bump!();
            }
            '#' => {
                while let Some(&c) = chars.peek() {
                    if c == '\n' {
                        break;
                    }
                    bump!();
                }
            }
            '{' | '}' | '[' | ']' | ':' | ';' | ',' | '.' => {
                bump!();
                let kind = match c {
                    '{' => TokenKind::LBrace,
                    '}' => TokenKind::RBrace,
                    '[' => TokenKind::LBracket,
                    ']' => TokenKind::RBracket,
                    ':' => TokenKind::Colon,
                    ';' => TokenKind::Semi,
                    ',' => TokenKind::Comma,
                    _ => TokenKind::Dot,
                };
                tokens.push(Token { kind, span });
            }
            '-' => {
                bump!();
                match chars.peek() {
                    Some('>') => {
                        bump!();
                        tokens.push(Token { kind: TokenKind::Arrow, span });
                    }
                    Some(d) if d.is_ascii_digit() || *d == '.' => {
                        let text = lex_number(&mut chars, &mut line, &mut col, true);
                        tokens.push(Token { kind: TokenKind::Number(text), span });
                    }
                    _ => {
                        return Err(LexError {
                            span,
                            message: "stray `-` (expected `->` or a number)".to_string(),
                        })
                    }
                }
            }
            c if c.is_ascii_digit() => {
                let text = lex_number(&mut chars, &mut line, &mut col, false);
                tokens.push(Token { kind: TokenKind::Number(text), span });
            }
            c if c.is_ascii_alphabetic() || c == '_' => {
                let mut ident = String::new();
                while let Some(&c) = chars.peek() {
                    if c.is_ascii_alphanumeric() || c == '_' || c == '/' {
                        ident.push(c);
                        bump!();
                    } else {
                        break;
                    }
                }
                tokens.push(Token { kind: TokenKind::Ident(ident), span });
            }
            other => {
                return Err(LexError { span, message: format!("unexpected character `{other}`") })
            }
        }
    }

    fn lex_number(
        chars: &mut std::iter::Peekable<std::str::Chars<'_>>,
        line: &mut usize,
        col: &mut usize,
        negative: bool,
    ) -> String {
        let mut text = String::new();
        if negative {
            text.push('-');
        }
        let mut bump = |chars: &mut std::iter::Peekable<std::str::Chars<'_>>| {
            let c = chars.next();
            if c == Some('\n') {
                *line += 1;
                *col = 1;
            } else if c.is_some() {
                *col += 1;
            }
            c
        };
        let mut seen_exp = false;
        while let Some(&c) = chars.peek() {
            if c.is_ascii_digit() || c == '.' {
                text.push(c);
                bump(chars);
            } else if (c == 'e' || c == 'E') && !seen_exp {
                seen_exp = true;
                text.push(c);
                bump(chars);
                if let Some(&s) = chars.peek() {
                    if s == '+' || s == '-' {
                        text.push(s);
                        bump(chars);
                    }
                }
            } else {
                break;
            }
        }
        text
    }
}
