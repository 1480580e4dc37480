use num::BigInt;

use super::LangError;

#[derive(Clone, PartialEq, Eq, Debug)]
pub enum Tok {
    Name(String),
    VarName(String),
    Int(BigInt),
    LParen,
    RParen,
    LBrace,
    RBrace,
    Comma,
    Dot,
    ColonDash,
    QueryDash,
    Eq,
    Lt,
    Gt,
    Le,
    Ge,
    Plus,
    Minus,
    Star,
    Slash,
}

impl Tok {
    pub fn describe(&self) -> String {
        match self {
            Tok::Name(s) => format!("name `{s}`"),
            Tok::VarName(s) => format!("variable `{s}`"),
            Tok::Int(n) => format!("integer `{n}`"),
            Tok::LParen => "`(`".into(),
            Tok::RParen => "`)`".into(),
            Tok::LBrace => "`{`".into(),
            Tok::RBrace => "`}`".into(),
            Tok::Comma => "`,`".into(),
            Tok::Dot => "`.`".into(),
            Tok::ColonDash => "`:-`".into(),
            Tok::QueryDash => "`?-`".into(),
            Tok::Eq => "`=`".into(),
            Tok::Lt => "`<`".into(),
            Tok::Gt => "`>`".into(),
            Tok::Le => "`=<`".into(),
            Tok::Ge => "`>=`".into(),
            Tok::Plus => "`+`".into(),
            Tok::Minus => "`-`".into(),
            Tok::Star => "`*`".into(),
            Tok::Slash => "`/`".into(),
        }
    }
}

#[derive(Clone, Debug)]
pub struct Spanned {
    pub tok: Tok,
    pub line: usize,
    pub col: usize,
}

/// Tokenizes a program or query. `%` starts a line comment. The dotted
/// operators `.=.`, `.<.`, `.>.`, `.=<.`, `.>=.` are accepted as aliases
/// for their plain counterparts; a bare `.` ends a clause.
pub fn lex(src: &str) -> Result<Vec<Spanned>, LangError> {
    let chars: Vec<char> = src.chars().collect();
    let mut toks = Vec::new();
    let mut i = 0;
    let mut line = 1;
    let mut col = 1;

    macro_rules! push {
        ($tok:expr, $len:expr) => {{
            toks.push(Spanned {
                tok: $tok,
                line,
                col,
            });
            i += $len;
            col += $len;
        }};
    }

    while i < chars.len() {
        let c = chars[i];
        match c {
            '\n' => {
                i += 1;
                line += 1;
                col = 1;
            }
            ' ' | '\t' | '\r' => {
                i += 1;
                col += 1;
            }
            '%' => {
                while i < chars.len() && chars[i] != '\n' {
                    i += 1;
                }
            }
            '(' => push!(Tok::LParen, 1),
            ')' => push!(Tok::RParen, 1),
            '{' => push!(Tok::LBrace, 1),
            '}' => push!(Tok::RBrace, 1),
            ',' => push!(Tok::Comma, 1),
            '+' => push!(Tok::Plus, 1),
            '*' => push!(Tok::Star, 1),
            '/' => push!(Tok::Slash, 1),
            '-' => push!(Tok::Minus, 1),
            '=' => {
                if chars.get(i + 1) == Some(&'<') {
                    push!(Tok::Le, 2);
                } else {
                    push!(Tok::Eq, 1);
                }
            }
            '<' => push!(Tok::Lt, 1),
            '>' => {
                if chars.get(i + 1) == Some(&'=') {
                    push!(Tok::Ge, 2);
                } else {
                    push!(Tok::Gt, 1);
                }
            }
            ':' => {
                if chars.get(i + 1) == Some(&'-') {
                    push!(Tok::ColonDash, 2);
                } else {
                    return Err(err(line, col, "expected `:-`"));
                }
            }
            '?' => {
                if chars.get(i + 1) == Some(&'-') {
                    push!(Tok::QueryDash, 2);
                } else {
                    return Err(err(line, col, "expected `?-`"));
                }
            }
            '.' => {
                // Dotted operator aliases: .=. .<. .>. .=<. .>=.
                let at = |k: usize| chars.get(i + k).copied();
                if at(1) == Some('=') && at(2) == Some('<') && at(3) == Some('.') {
                    push!(Tok::Le, 4);
                } else if at(1) == Some('>') && at(2) == Some('=') && at(3) == Some('.') {
                    push!(Tok::Ge, 4);
                } else if at(1) == Some('=') && at(2) == Some('.') {
                    push!(Tok::Eq, 3);
                } else if at(1) == Some('<') && at(2) == Some('.') {
                    push!(Tok::Lt, 3);
                } else if at(1) == Some('>') && at(2) == Some('.') {
                    push!(Tok::Gt, 3);
                } else {
                    push!(Tok::Dot, 1);
                }
            }
            _ if c.is_ascii_digit() => {
                let start = i;
                while i < chars.len() && chars[i].is_ascii_digit() {
                    i += 1;
                }
                let text: String = chars[start..i].iter().collect();
                let n: BigInt = text.parse().expect("digits parse as BigInt");
                toks.push(Spanned {
                    tok: Tok::Int(n),
                    line,
                    col,
                });
                col += i - start;
            }
            _ if c.is_ascii_lowercase() => {
                let start = i;
                while i < chars.len() && ident_char(chars[i]) {
                    i += 1;
                }
                let text: String = chars[start..i].iter().collect();
                toks.push(Spanned {
                    tok: Tok::Name(text),
                    line,
                    col,
                });
                col += i - start;
            }
            _ if c.is_ascii_uppercase() || c == '_' => {
                let start = i;
                while i < chars.len() && ident_char(chars[i]) {
                    i += 1;
                }
                let text: String = chars[start..i].iter().collect();
                toks.push(Spanned {
                    tok: Tok::VarName(text),
                    line,
                    col,
                });
                col += i - start;
            }
            _ => {
                return Err(err(line, col, &format!("unexpected character `{c}`")));
            }
        }
    }
    Ok(toks)
}

fn ident_char(c: char) -> bool {
    c.is_ascii_alphanumeric() || c == '_'
}

fn err(line: usize, col: usize, msg: &str) -> LangError {
    LangError::Parse {
        line,
        col,
        msg: msg.to_string(),
    }
}
