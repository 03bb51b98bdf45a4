//! Line-oriented parser for rule files.
//!
//! ```text
//! RULE name
//! VelocityXFact: [A, 0]->VelocityXFact: [A, 5]
//! VelocityXFact: [A, 0]
//! AnimationFact: [A, (8, 4, 3)]
//! ...
//! ```
//!
//! A rule runs from its `RULE` header to the next header or end of file.
//! Blank lines and `#` comment lines are skipped anywhere. The header name
//! may carry a trailing colon (`RULE jump:`); the arrow may be `->` or `→`.

use crate::error::{Error, Result};

use super::{Fact, FactKind, RuleRecord};

/// Rule under construction: header line, name, effect, conditions.
type Pending = (usize, String, Option<(Fact, Fact)>, Vec<Fact>);

/// Parses every rule block in `text`, in file order.
pub fn parse_rules(text: &str) -> Result<Vec<RuleRecord>> {
    let mut rules = Vec::new();
    let mut current: Option<Pending> = None;

    for (idx, raw) in text.lines().enumerate() {
        let line_no = idx + 1;
        let trimmed = raw.trim();
        if trimmed.is_empty() || trimmed.starts_with('#') {
            continue;
        }

        if let Some(rest) = header_name(trimmed) {
            if let Some(done) = current.take() {
                rules.push(finish(done)?);
            }
            let name = rest.trim().trim_end_matches(':').trim();
            if name.is_empty() {
                return Err(syntax(line_no, raw.len() + 1, "missing rule name"));
            }
            current = Some((line_no, name.to_string(), None, Vec::new()));
            continue;
        }

        let Some((_, _, effect, conditions)) = current.as_mut() else {
            let col = raw.len() - raw.trim_start().len() + 1;
            return Err(syntax(line_no, col, "expected `RULE <name>` header"));
        };

        let mut cur = Cursor::new(raw, line_no);
        if effect.is_none() {
            let pre = cur.fact()?;
            cur.skip_ws();
            let arrow_col = cur.column();
            if !(cur.eat_str("->") || cur.eat_str("→")) {
                return Err(syntax(line_no, arrow_col, "expected `->` in effect line"));
            }
            cur.skip_ws();
            let post_col = cur.column();
            let post = cur.fact()?;
            cur.expect_end()?;
            if pre.kind != post.kind {
                return Err(syntax(
                    line_no,
                    post_col,
                    format!(
                        "effect kinds differ: {} -> {}",
                        pre.kind.name(),
                        post.kind.name()
                    ),
                ));
            }
            if pre.entity != post.entity {
                return Err(syntax(
                    line_no,
                    post_col,
                    format!("effect entities differ: {} -> {}", pre.entity, post.entity),
                ));
            }
            *effect = Some((pre, post));
        } else {
            let fact = cur.fact()?;
            cur.expect_end()?;
            conditions.push(fact);
        }
    }

    if let Some(done) = current.take() {
        rules.push(finish(done)?);
    }
    Ok(rules)
}

fn header_name(line: &str) -> Option<&str> {
    let rest = line.strip_prefix("RULE")?;
    match rest.chars().next() {
        None => Some(rest),
        Some(c) if c.is_whitespace() || c == ':' => Some(rest),
        _ => None,
    }
}

fn finish((line, name, effect, conditions): Pending) -> Result<RuleRecord> {
    let Some((pre_effect, post_effect)) = effect else {
        return Err(syntax(line, 1, format!("rule `{name}` has no effect line")));
    };
    if conditions.is_empty() {
        return Err(syntax(line, 1, format!("rule `{name}` has no conditions")));
    }
    Ok(RuleRecord { name, pre_effect, post_effect, conditions })
}

fn syntax(line: usize, column: usize, message: impl Into<String>) -> Error {
    Error::Syntax { line, column, message: message.into() }
}

struct Cursor<'a> {
    chars: Vec<char>,
    pos: usize,
    line: usize,
    _src: &'a str,
}

impl<'a> Cursor<'a> {
    fn new(src: &'a str, line: usize) -> Self {
        Cursor { chars: src.chars().collect(), pos: 0, line, _src: src }
    }

    fn column(&self) -> usize {
        self.pos + 1
    }

    fn peek(&self) -> Option<char> {
        self.chars.get(self.pos).copied()
    }

    fn skip_ws(&mut self) {
        while self.peek().is_some_and(char::is_whitespace) {
            self.pos += 1;
        }
    }

    fn eat(&mut self, c: char) -> bool {
        if self.peek() == Some(c) {
            self.pos += 1;
            true
        } else {
            false
        }
    }

    fn eat_str(&mut self, s: &str) -> bool {
        let n = s.chars().count();
        let matches = self
            .chars
            .get(self.pos..self.pos + n)
            .is_some_and(|w| w.iter().copied().eq(s.chars()));
        if matches {
            self.pos += n;
        }
        matches
    }

    fn expect(&mut self, c: char) -> Result<()> {
        self.skip_ws();
        if self.eat(c) {
            Ok(())
        } else {
            Err(self.error(format!("expected `{c}`, found {}", self.describe())))
        }
    }

    fn expect_end(&mut self) -> Result<()> {
        self.skip_ws();
        match self.peek() {
            None => Ok(()),
            Some(_) => Err(self.error(format!("unexpected trailing {}", self.describe()))),
        }
    }

    fn describe(&self) -> String {
        match self.peek() {
            Some(c) => format!("`{c}`"),
            None => "end of line".to_string(),
        }
    }

    fn error(&self, message: impl Into<String>) -> Error {
        syntax(self.line, self.column(), message)
    }

    fn take_while(&mut self, f: impl Fn(char) -> bool) -> String {
        let start = self.pos;
        while self.peek().is_some_and(&f) {
            self.pos += 1;
        }
        self.chars[start..self.pos].iter().collect()
    }

    fn fact(&mut self) -> Result<Fact> {
        self.skip_ws();
        let start = self.column();
        let word = self.take_while(|c| c.is_ascii_alphanumeric() || c == '_');
        let kind = word
            .strip_suffix("Fact")
            .and_then(FactKind::from_name)
            .ok_or_else(|| {
                if word.is_empty() {
                    self.error(format!("expected fact kind, found {}", self.describe()))
                } else {
                    syntax(self.line, start, format!("unknown fact kind `{word}`"))
                }
            })?;
        self.expect(':')?;
        self.expect('[')?;
        self.skip_ws();
        let entity = self.take_while(|c| {
            !c.is_whitespace() && !matches!(c, ',' | '[' | ']' | '(' | ')')
        });
        if entity.is_empty() {
            return Err(self.error("expected entity name"));
        }
        self.expect(',')?;
        self.skip_ws();
        let values_col = self.column();
        let values = if self.eat('(') {
            let mut vs = vec![self.integer()?];
            loop {
                self.skip_ws();
                if self.eat(')') {
                    break;
                }
                self.expect(',')?;
                vs.push(self.integer()?);
            }
            vs
        } else {
            vec![self.integer()?]
        };
        if values.len() != kind.arity() {
            return Err(syntax(
                self.line,
                values_col,
                format!(
                    "{}Fact takes {} value(s), found {}",
                    kind.name(),
                    kind.arity(),
                    values.len()
                ),
            ));
        }
        self.expect(']')?;
        Ok(Fact { kind, entity, values })
    }

    fn integer(&mut self) -> Result<i32> {
        self.skip_ws();
        let col = self.column();
        let mut tok = String::new();
        if self.peek() == Some('-') || self.peek() == Some('+') {
            tok.push(self.peek().unwrap_or('-'));
            self.pos += 1;
        }
        tok.push_str(&self.take_while(|c| !c.is_whitespace() && !matches!(c, ',' | ')' | ']')));
        tok.parse::<i32>().map_err(|_| {
            syntax(self.line, col, format!("expected integer, found `{tok}`"))
        })
    }
}
