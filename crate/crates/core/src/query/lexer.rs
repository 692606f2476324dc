use std::fmt;

#[derive(Debug, Clone, PartialEq, Eq)]
pub(crate) enum Tok {
    Ident(String),
    /// Integer literal; the raw text is kept so codes like `011` survive.
    Number { value: i64, raw: String },
    Str(String),
    /// `YYYY-MM-DD`, converted to days since 1970-01-01.
    Date { days: i64, raw: String },
    LBrace,
    RBrace,
    LBracket,
    RBracket,
    Comma,
    Colon,
    Arrow,
    DotDot,
    Eq,
    Neq,
    Gt,
    Lt,
    Eof,
}

impl fmt::Display for Tok {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Tok::Ident(s) => write!(f, "`{s}`"),
            Tok::Number { raw, .. } | Tok::Date { raw, .. } => write!(f, "`{raw}`"),
            Tok::Str(s) => write!(f, "{s:?}"),
            Tok::LBrace => f.write_str("`{`"),
            Tok::RBrace => f.write_str("`}`"),
            Tok::LBracket => f.write_str("`[`"),
            Tok::RBracket => f.write_str("`]`"),
            Tok::Comma => f.write_str("`,`"),
            Tok::Colon => f.write_str("`:`"),
            Tok::Arrow => f.write_str("`->`"),
            Tok::DotDot => f.write_str("`..`"),
            Tok::Eq => f.write_str("`==`"),
            Tok::Neq => f.write_str("`!=`"),
            Tok::Gt => f.write_str("`>`"),
            Tok::Lt => f.write_str("`<`"),
            Tok::Eof => f.write_str("end of input"),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub(crate) struct Pos {
    pub line: usize,
    pub column: usize,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub(crate) struct Token {
    pub tok: Tok,
    pub pos: Pos,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub(crate) struct LexError {
    pub pos: Pos,
    pub message: String,
}

pub(crate) fn is_ident_start(c: char) -> bool {
    c.is_ascii_alphabetic() || c == '_'
}

pub(crate) fn is_ident_char(c: char) -> bool {
    c.is_ascii_alphanumeric() || c == '_'
}

struct Lexer<'a> {
    chars: std::iter::Peekable<std::str::CharIndices<'a>>,
    src: &'a str,
    line: usize,
    column: usize,
}

impl<'a> Lexer<'a> {
    fn pos(&self) -> Pos {
        Pos { line: self.line, column: self.column }
    }

    fn peek(&mut self) -> Option<char> {
        self.chars.peek().map(|&(_, c)| c)
    }

    fn offset(&mut self) -> usize {
        self.chars.peek().map_or(self.src.len(), |&(i, _)| i)
    }

    fn bump(&mut self) -> Option<char> {
        let (_, c) = self.chars.next()?;
        if c == '\n' {
            self.line += 1;
            self.column = 1;
        } else {
            self.column += 1;
        }
        Some(c)
    }

    fn skip_trivia(&mut self) {
        while let Some(c) = self.peek() {
            if c.is_whitespace() {
                self.bump();
            } else if c == '#' {
                while self.peek().is_some_and(|c| c != '\n') {
                    self.bump();
                }
            } else {
                break;
            }
        }
    }

    fn digits(&mut self) -> &'a str {
        let start = self.offset();
        while self.peek().is_some_and(|c| c.is_ascii_digit()) {
            self.bump();
        }
        let end = self.offset();
        &self.src[start..end]
    }

    fn number_or_date(&mut self, pos: Pos, negative: bool) -> Result<Tok, LexError> {
        let start = self.offset() - usize::from(negative);
        let head = self.digits();
        // a date is exactly NNNN-NN-NN
        let off = self.offset();
        let b = &self.src.as_bytes()[off..];
        if !negative && head.len() == 4 && b.len() >= 6 {
            if b[0] == b'-' && b[3] == b'-' && [1, 2, 4, 5].iter().all(|&i| b[i].is_ascii_digit()) {
                for _ in 0..6 {
                    self.bump();
                }
                let raw = &self.src[start..self.offset()];
                let date = crate::calendar::parse_date(raw)
                    .ok_or_else(|| LexError { pos, message: format!("invalid date `{raw}`") })?;
                return Ok(Tok::Date { days: crate::calendar::epoch_days(date) as i64, raw: raw.to_string() });
            }
        }
        let raw = &self.src[start..self.offset()];
        let value = raw
            .parse()
            .map_err(|_| LexError { pos, message: format!("integer `{raw}` is out of range") })?;
        Ok(Tok::Number { value, raw: raw.to_string() })
    }

    fn string(&mut self, pos: Pos) -> Result<Tok, LexError> {
        let mut s = String::new();
        loop {
            match self.bump() {
                None => return Err(LexError { pos, message: "unterminated string".into() }),
                Some('"') => return Ok(Tok::Str(s)),
                Some('\\') => {
                    let esc = self.pos();
                    match self.bump() {
                        Some('"') => s.push('"'),
                        Some('\\') => s.push('\\'),
                        Some('n') => s.push('\n'),
                        Some('t') => s.push('\t'),
                        _ => return Err(LexError { pos: esc, message: "invalid escape sequence".into() }),
                    }
                }
                Some(c) => s.push(c),
            }
        }
    }

    fn next_token(&mut self) -> Result<Token, LexError> {
        self.skip_trivia();
        let pos = self.pos();
        let Some(c) = self.peek() else {
            return Ok(Token { tok: Tok::Eof, pos });
        };
        let single = |lx: &mut Self, tok| {
            lx.bump();
            Ok(tok)
        };
        let tok = match c {
            '{' => single(self, Tok::LBrace),
            '}' => single(self, Tok::RBrace),
            '[' => single(self, Tok::LBracket),
            ']' => single(self, Tok::RBracket),
            ',' => single(self, Tok::Comma),
            ':' => single(self, Tok::Colon),
            '>' => single(self, Tok::Gt),
            '<' => single(self, Tok::Lt),
            '"' => {
                self.bump();
                self.string(pos)
            }
            '=' | '!' => {
                self.bump();
                if self.peek() == Some('=') {
                    self.bump();
                    Ok(if c == '=' { Tok::Eq } else { Tok::Neq })
                } else {
                    Err(LexError { pos, message: format!("expected `{c}=`") })
                }
            }
            '.' => {
                self.bump();
                if self.peek() == Some('.') {
                    self.bump();
                    Ok(Tok::DotDot)
                } else {
                    Err(LexError { pos, message: "expected `..`".into() })
                }
            }
            '-' => {
                self.bump();
                match self.peek() {
                    Some('>') => {
                        self.bump();
                        Ok(Tok::Arrow)
                    }
                    Some(d) if d.is_ascii_digit() => self.number_or_date(pos, true),
                    _ => Err(LexError { pos, message: "expected `->` or a negative number".into() }),
                }
            }
            d if d.is_ascii_digit() => self.number_or_date(pos, false),
            c if is_ident_start(c) => {
                let start = self.offset();
                while self.peek().is_some_and(is_ident_char) {
                    self.bump();
                }
                let end = self.offset();
                Ok(Tok::Ident(self.src[start..end].to_string()))
            }
            other => Err(LexError { pos, message: format!("unexpected character {other:?}") }),
        }?;
        Ok(Token { tok, pos })
    }
}

/// Tokenize `src`; the result always ends with [`Tok::Eof`].
pub(crate) fn tokenize(src: &str) -> Result<Vec<Token>, LexError> {
    let mut lx = Lexer { chars: src.char_indices().peekable(), src, line: 1, column: 1 };
    let mut out = Vec::new();
    loop {
        let t = lx.next_token()?;
        let done = t.tok == Tok::Eof;
        out.push(t);
        if done {
            return Ok(out);
        }
    }
}
