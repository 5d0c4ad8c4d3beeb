//! Tokenizer for the Spider SQL subset. Tracks byte offsets so syntax errors
//! point at the failing position.

use super::{SqlError, SqlResult};

#[derive(Debug, Clone, PartialEq)]
pub enum Tok {
    /// Bare identifier or keyword; keywords are recognized contextually.
    Ident(String),
    Number(String),
    /// String literal content, quotes stripped.
    Str(String),
    LParen,
    RParen,
    Comma,
    Dot,
    Star,
    Eq,
    Neq,
    Gt,
    Lt,
    Ge,
    Le,
    Plus,
    Minus,
    Slash,
    Semi,
    Eof,
}

#[derive(Debug, Clone)]
pub struct Spanned {
    pub tok: Tok,
    pub offset: usize,
}

pub fn lex(text: &str) -> SqlResult<Vec<Spanned>> {
    let chars: Vec<(usize, char)> = text.char_indices().collect();
    let mut tokens = Vec::new();
    let mut i = 0;
    while i < chars.len() {
        let (start, c) = chars[i];
        if c.is_whitespace() {
            i += 1;
            continue;
        }
        let tok = match c {
            '(' => {
                i += 1;
                Tok::LParen
            }
            ')' => {
                i += 1;
                Tok::RParen
            }
            ',' => {
                i += 1;
                Tok::Comma
            }
            '.' => {
                i += 1;
                Tok::Dot
            }
            '*' => {
                i += 1;
                Tok::Star
            }
            '+' => {
                i += 1;
                Tok::Plus
            }
            '-' => {
                i += 1;
                Tok::Minus
            }
            '/' => {
                i += 1;
                Tok::Slash
            }
            ';' => {
                i += 1;
                Tok::Semi
            }
            '=' => {
                i += 1;
                if i < chars.len() && chars[i].1 == '=' {
                    i += 1;
                }
                Tok::Eq
            }
            '!' => {
                i += 1;
                if i < chars.len() && chars[i].1 == '=' {
                    i += 1;
                    Tok::Neq
                } else {
                    return Err(SqlError::Syntax {
                        offset: start,
                        message: "expected '=' after '!'".into(),
                    });
                }
            }
            '>' => {
                i += 1;
                if i < chars.len() && chars[i].1 == '=' {
                    i += 1;
                    Tok::Ge
                } else {
                    Tok::Gt
                }
            }
            '<' => {
                i += 1;
                if i < chars.len() && chars[i].1 == '=' {
                    i += 1;
                    Tok::Le
                } else if i < chars.len() && chars[i].1 == '>' {
                    i += 1;
                    Tok::Neq
                } else {
                    Tok::Lt
                }
            }
            '\'' | '"' => {
                let quote = c;
                i += 1;
                let mut content = String::new();
                let mut closed = false;
                while i < chars.len() {
                    let (_, ch) = chars[i];
                    if ch == quote {
                        // Doubled quote is an escaped quote character.
                        if i + 1 < chars.len() && chars[i + 1].1 == quote {
                            content.push(quote);
                            i += 2;
                            continue;
                        }
                        i += 1;
                        closed = true;
                        break;
                    }
                    content.push(ch);
                    i += 1;
                }
                if !closed {
                    return Err(SqlError::Syntax {
                        offset: start,
                        message: "unterminated string literal".into(),
                    });
                }
                Tok::Str(content)
            }
            c if c.is_ascii_digit() => {
                let mut seen_dot = false;
                let mut end = start + 1;
                i += 1;
                while i < chars.len() {
                    let (pos, ch) = chars[i];
                    if ch.is_ascii_digit() {
                        i += 1;
                        end = pos + 1;
                    } else if ch == '.' && !seen_dot {
                        seen_dot = true;
                        i += 1;
                        end = pos + 1;
                    } else {
                        break;
                    }
                }
                Tok::Number(text[start..end].to_string())
            }
            c if c.is_ascii_alphabetic() || c == '_' => {
                let mut end = start + 1;
                i += 1;
                while i < chars.len() {
                    let (pos, ch) = chars[i];
                    if ch.is_ascii_alphanumeric() || ch == '_' {
                        i += 1;
                        end = pos + 1;
                    } else {
                        break;
                    }
                }
                Tok::Ident(text[start..end].to_string())
            }
            other => {
                return Err(SqlError::Syntax {
                    offset: start,
                    message: format!("unexpected character {other:?}"),
                })
            }
        };
        tokens.push(Spanned { tok, offset: start });
    }
    tokens.push(Spanned {
        tok: Tok::Eof,
        offset: text.len(),
    });
    Ok(tokens)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn lexes_operators_and_literals() {
        let toks = lex("SELECT a, b FROM t WHERE x >= 2.5 AND y != 'No Response'").unwrap();
        let kinds: Vec<&Tok> = toks.iter().map(|s| &s.tok).collect();
        assert!(kinds.contains(&&Tok::Ge));
        assert!(kinds.contains(&&Tok::Neq));
        assert!(kinds.contains(&&Tok::Number("2.5".into())));
        assert!(kinds.contains(&&Tok::Str("No Response".into())));
    }

    #[test]
    fn doubled_quotes_escape() {
        let toks = lex("'it''s'").unwrap();
        assert_eq!(toks[0].tok, Tok::Str("it's".into()));
    }

    #[test]
    fn non_ascii_literal_content_survives() {
        let toks = lex("'São Tomé and Príncipe'").unwrap();
        assert_eq!(toks[0].tok, Tok::Str("São Tomé and Príncipe".into()));
    }

    #[test]
    fn unterminated_string_errors_with_offset() {
        let err = lex("WHERE x = 'oops").unwrap_err();
        match err {
            SqlError::Syntax { offset, .. } => assert_eq!(offset, 10),
            other => panic!("unexpected {other:?}"),
        }
    }
}
