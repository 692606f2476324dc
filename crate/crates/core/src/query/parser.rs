use std::collections::HashSet;
use std::fmt;

use serde::Serialize;

use super::lexer::{tokenize, Pos, Tok, Token};
use super::{CmpOp, Constraint, NextEventRange, PatternEdge, PatternNode, QueryGraph, QueryParams, Value};
use crate::attribute::{Attribute, AttributeKind};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, thiserror::Error)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ParseError {
    #[error("{line}:{column}: {message}")]
    Syntax { line: usize, column: usize, message: String, expected: Vec<String> },
    #[error("{line}:{column}: edge `{edge}` refers to undeclared node `{name}`")]
    Resolution { line: usize, column: usize, edge: String, name: String },
}

impl ParseError {
    pub fn position(&self) -> (usize, usize) {
        match self {
            ParseError::Syntax { line, column, .. } | ParseError::Resolution { line, column, .. } => (*line, *column),
        }
    }
}

fn syntax(pos: Pos, message: impl Into<String>, expected: &[&str]) -> ParseError {
    ParseError::Syntax {
        line: pos.line,
        column: pos.column,
        message: message.into(),
        expected: expected.iter().map(|s| s.to_string()).collect(),
    }
}

const KEYWORDS: [&str; 6] = ["node", "edge", "observe", "steps", "next_within", "IN"];

struct Parser {
    tokens: Vec<Token>,
    at: usize,
}

struct EdgeRefs {
    id: String,
    from: (String, Pos),
    to: (String, Pos),
}

impl Parser {
    fn peek(&self) -> &Token {
        &self.tokens[self.at]
    }

    fn next(&mut self) -> Token {
        let t = self.tokens[self.at].clone();
        if t.tok != Tok::Eof {
            self.at += 1;
        }
        t
    }

    fn unexpected(&self, expected: &[&str]) -> ParseError {
        let t = self.peek();
        let list = expected.join(", ");
        syntax(t.pos, format!("expected {list}, found {}", t.tok), expected)
    }

    fn expect(&mut self, tok: Tok, name: &str) -> Result<Pos, ParseError> {
        if self.peek().tok == tok {
            Ok(self.next().pos)
        } else {
            Err(self.unexpected(&[name]))
        }
    }

    fn ident(&mut self, what: &str) -> Result<(String, Pos), ParseError> {
        match &self.peek().tok {
            Tok::Ident(s) if !KEYWORDS.contains(&s.as_str()) => {
                let s = s.clone();
                Ok((s, self.next().pos))
            }
            _ => Err(self.unexpected(&[what])),
        }
    }

    fn keyword(&self) -> Option<&str> {
        match &self.peek().tok {
            Tok::Ident(s) if KEYWORDS.contains(&s.as_str()) => Some(s.as_str()),
            _ => None,
        }
    }

    fn integer(&mut self, what: &str) -> Result<(i64, Pos), ParseError> {
        match self.peek().tok {
            Tok::Number { value, .. } => Ok((value, self.next().pos)),
            _ => Err(self.unexpected(&[what])),
        }
    }

    fn query(&mut self) -> Result<QueryGraph, ParseError> {
        let mut nodes = Vec::new();
        let mut edges = Vec::new();
        let mut refs = Vec::new();
        let mut observe = None;
        let mut steps = None;
        let mut range = None;
        loop {
            let t = self.peek().clone();
            match self.keyword() {
                Some("node") => {
                    self.next();
                    nodes.push(self.node()?);
                }
                Some("edge") => {
                    self.next();
                    let (edge, r) = self.edge()?;
                    edges.push(edge);
                    refs.push(r);
                }
                Some("observe") => {
                    self.next();
                    if observe.is_some() {
                        return Err(syntax(t.pos, "duplicate `observe`", &[]));
                    }
                    observe = Some(self.ident("attribute name")?.0);
                }
                Some("steps") => {
                    self.next();
                    if steps.is_some() {
                        return Err(syntax(t.pos, "duplicate `steps`", &[]));
                    }
                    let (n, pos) = self.integer("step count")?;
                    steps = Some(u32::try_from(n).map_err(|_| syntax(pos, "step count must be a non-negative 32-bit integer", &[]))?);
                }
                Some("next_within") => {
                    self.next();
                    if range.is_some() {
                        return Err(syntax(t.pos, "duplicate `next_within`", &[]));
                    }
                    range = Some(self.range()?);
                }
                _ if t.tok == Tok::Eof => break,
                _ => return Err(self.unexpected(&["`node`", "`edge`", "`observe`", "`steps`", "`next_within`"])),
            }
        }
        if nodes.is_empty() && edges.is_empty() {
            return Err(syntax(self.peek().pos, format!("expected `node`, found {}", self.peek().tok), &["`node`"]));
        }

        let declared: HashSet<&str> = nodes.iter().map(|n: &PatternNode| n.id.as_str()).collect();
        for r in &refs {
            for (name, pos) in [&r.from, &r.to] {
                if !declared.contains(name.as_str()) {
                    return Err(ParseError::Resolution {
                        line: pos.line,
                        column: pos.column,
                        edge: r.id.clone(),
                        name: name.clone(),
                    });
                }
            }
        }

        let defaults = QueryParams::default();
        Ok(QueryGraph {
            nodes,
            edges,
            params: QueryParams {
                steps: steps.unwrap_or(defaults.steps),
                observe: observe.unwrap_or(defaults.observe),
                next_event_range: range,
            },
        })
    }

    fn node(&mut self) -> Result<PatternNode, ParseError> {
        let (id, _) = self.ident("node id")?;
        let constraints = self.constraint_block()?;
        Ok(PatternNode { id, constraints })
    }

    fn edge(&mut self) -> Result<(PatternEdge, EdgeRefs), ParseError> {
        let (id, _) = self.ident("edge id")?;
        self.expect(Tok::Colon, "`:`")?;
        let from = self.ident("node id")?;
        self.expect(Tok::Arrow, "`->`")?;
        let to = self.ident("node id")?;
        let constraints = if self.peek().tok == Tok::LBrace { self.constraint_block()? } else { Vec::new() };
        let edge = PatternEdge { id: id.clone(), from: from.0.clone(), to: to.0.clone(), constraints };
        Ok((edge, EdgeRefs { id, from, to }))
    }

    fn constraint_block(&mut self) -> Result<Vec<Constraint>, ParseError> {
        self.expect(Tok::LBrace, "`{`")?;
        let mut out = Vec::new();
        if self.peek().tok == Tok::RBrace {
            self.next();
            return Ok(out);
        }
        loop {
            out.push(self.constraint()?);
            match self.peek().tok {
                Tok::Comma => {
                    self.next();
                    if self.peek().tok == Tok::RBrace {
                        self.next();
                        return Ok(out);
                    }
                }
                Tok::RBrace => {
                    self.next();
                    return Ok(out);
                }
                _ => return Err(self.unexpected(&["`,`", "`}`"])),
            }
        }
    }

    fn constraint(&mut self) -> Result<Constraint, ParseError> {
        let (attribute, _) = self.ident("attribute name")?;
        let integer_valued = Attribute::from_name(&attribute).is_some_and(|a| a.kind() == AttributeKind::Integer);
        let op = match &self.peek().tok {
            Tok::Eq => CmpOp::Eq,
            Tok::Neq => CmpOp::Neq,
            Tok::Gt => CmpOp::Gt,
            Tok::Lt => CmpOp::Lt,
            Tok::Ident(s) if s == "IN" => CmpOp::In,
            _ => return Err(self.unexpected(&["`==`", "`!=`", "`>`", "`<`", "`IN`"])),
        };
        self.next();
        let value = if op == CmpOp::In {
            self.expect(Tok::LBracket, "`[`")?;
            let mut codes = vec![self.code_literal()?];
            while self.peek().tok == Tok::Comma {
                self.next();
                codes.push(self.code_literal()?);
            }
            self.expect(Tok::RBracket, "`]`")?;
            Value::Codes(codes)
        } else if integer_valued {
            match self.peek().tok {
                Tok::Number { value, .. } | Tok::Date { days: value, .. } => {
                    self.next();
                    Value::Int(value)
                }
                _ => return Err(self.unexpected(&["integer", "date"])),
            }
        } else {
            Value::Code(self.code_literal()?)
        };
        Ok(Constraint { attribute, op, value })
    }

    fn code_literal(&mut self) -> Result<String, ParseError> {
        let s = match &self.peek().tok {
            Tok::Number { raw, .. } | Tok::Date { raw, .. } => raw.clone(),
            Tok::Str(s) => s.clone(),
            Tok::Ident(s) if !KEYWORDS.contains(&s.as_str()) => s.clone(),
            _ => return Err(self.unexpected(&["code"])),
        };
        self.next();
        Ok(s)
    }

    fn range(&mut self) -> Result<NextEventRange, ParseError> {
        let min_days = match self.peek().tok {
            Tok::Number { value, .. } => {
                self.next();
                Some(value)
            }
            Tok::DotDot => None,
            _ => return Err(self.unexpected(&["integer", "`..`"])),
        };
        self.expect(Tok::DotDot, "`..`")?;
        let max_days = match self.peek().tok {
            Tok::Number { value, .. } => {
                self.next();
                Some(value)
            }
            _ if min_days.is_none() => return Err(self.unexpected(&["integer"])),
            _ => None,
        };
        Ok(NextEventRange { min_days, max_days })
    }
}

/// Parse DSL text into a query graph.
///
/// Only syntax and references to undeclared nodes are checked here; structural
/// rules (acyclicity, single sink, attribute kinds) belong to [`super::validate`].
pub fn parse(text: &str) -> Result<QueryGraph, ParseError> {
    let tokens = tokenize(text).map_err(|e| syntax(e.pos, e.message, &[]))?;
    Parser { tokens, at: 0 }.query()
}

impl fmt::Display for QueryGraph {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&super::to_canonical(self))
    }
}
