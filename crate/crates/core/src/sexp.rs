// SPDX-License-Identifier: Apache-2.0

//! S-expression reader. `f(a, b)` is read as `(f a b)`; commas are blanks and
//! `;` starts a line comment.

use std::fmt;

/// Line and column (1-based) where a node starts.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Default)]
pub struct Span {
    pub line: usize,
    pub col: usize,
}

impl fmt::Display for Span {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}:{}", self.line, self.col)
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum Sexp {
    Atom(String, Span),
    List(Vec<Sexp>, Span),
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
#[error("{span}: {message}")]
pub struct SexpError {
    pub span: Span,
    pub message: String,
}

impl Sexp {
    pub fn atom(&self) -> Option<&str> {
        match self {
            Sexp::Atom(a, _) => Some(a),
            Sexp::List(..) => None,
        }
    }

    pub fn list(&self) -> Option<&[Sexp]> {
        match self {
            Sexp::List(xs, _) => Some(xs),
            Sexp::Atom(..) => None,
        }
    }

    pub fn span(&self) -> Span {
        match self {
            Sexp::Atom(_, s) | Sexp::List(_, s) => *s,
        }
    }

    /// Head atom of a list.
    pub fn head(&self) -> Option<&str> {
        self.list().and_then(|xs| xs.first()).and_then(Sexp::atom)
    }
}

impl fmt::Display for Sexp {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Sexp::Atom(a, _) => write!(f, "{a}"),
            Sexp::List(xs, _) => {
                write!(f, "(")?;
                for (i, x) in xs.iter().enumerate() {
                    if i > 0 {
                        write!(f, " ")?;
                    }
                    write!(f, "{x}")?;
                }
                write!(f, ")")
            }
        }
    }
}

struct Reader<'a> {
    chars: std::iter::Peekable<std::str::Chars<'a>>,
    line: usize,
    col: usize,
}

impl<'a> Reader<'a> {
    fn span(&self) -> Span {
        Span {
            line: self.line,
            col: self.col,
        }
    }

    fn bump(&mut self) -> Option<char> {
        let c = self.chars.next()?;
        if c == '\n' {
            self.line += 1;
            self.col = 1;
        } else {
            self.col += 1;
        }
        Some(c)
    }

    fn skip_blank(&mut self) {
        while let Some(&c) = self.chars.peek() {
            if c.is_whitespace() || c == ',' {
                self.bump();
            } else if c == ';' {
                while let Some(c) = self.bump() {
                    if c == '\n' {
                        break;
                    }
                }
            } else {
                break;
            }
        }
    }

    fn err(&self, span: Span, message: impl Into<String>) -> SexpError {
        SexpError {
            span,
            message: message.into(),
        }
    }

    fn read(&mut self) -> Result<Option<Sexp>, SexpError> {
        self.skip_blank();
        let start = self.span();
        match self.chars.peek() {
            None => Ok(None),
            Some(')') => Err(self.err(start, "unexpected ')'")),
            Some('(') => {
                self.bump();
                Ok(Some(Sexp::List(self.read_items(start)?, start)))
            }
            Some(_) => {
                let atom = self.read_atom();
                if self.chars.peek() == Some(&'(') {
                    self.bump();
                    let mut items = vec![Sexp::Atom(atom, start)];
                    items.extend(self.read_items(start)?);
                    Ok(Some(Sexp::List(items, start)))
                } else {
                    Ok(Some(Sexp::Atom(atom, start)))
                }
            }
        }
    }

    fn read_items(&mut self, open: Span) -> Result<Vec<Sexp>, SexpError> {
        let mut items = Vec::new();
        loop {
            self.skip_blank();
            match self.chars.peek() {
                None => return Err(self.err(open, "unclosed '('")),
                Some(')') => {
                    self.bump();
                    return Ok(items);
                }
                Some(_) => items.push(self.read()?.expect("non-empty input")),
            }
        }
    }

    fn read_atom(&mut self) -> String {
        let mut s = String::new();
        if self.chars.peek() == Some(&'|') {
            self.bump();
            s.push('|');
            while let Some(c) = self.bump() {
                s.push(c);
                if c == '|' {
                    break;
                }
            }
            return s;
        }
        while let Some(&c) = self.chars.peek() {
            if c.is_whitespace() || matches!(c, '(' | ')' | ',' | ';') {
                break;
            }
            s.push(c);
            self.bump();
        }
        s
    }
}

pub fn parse_all(text: &str) -> Result<Vec<Sexp>, SexpError> {
    let mut r = Reader {
        chars: text.chars().peekable(),
        line: 1,
        col: 1,
    };
    let mut out = Vec::new();
    while let Some(s) = r.read()? {
        out.push(s);
    }
    Ok(out)
}

pub fn parse_one(text: &str) -> Result<Sexp, SexpError> {
    let mut all = parse_all(text)?;
    match all.len() {
        1 => Ok(all.pop().unwrap()),
        0 => Err(SexpError {
            span: Span { line: 1, col: 1 },
            message: "empty input".into(),
        }),
        _ => Err(SexpError {
            span: all[1].span(),
            message: "expected a single expression".into(),
        }),
    }
}
