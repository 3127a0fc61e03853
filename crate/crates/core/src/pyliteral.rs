//! Lenient reader for the Python/JSON-ish literals models reply with.
//!
//! Accepts single or double quoted strings, `True`/`False`/`None` as well as
//! their JSON spellings, tuples, and trailing commas. Replies are often wrapped
//! in prose or code fences, so [`find_dict`] and [`find_key`] scan for the
//! first position that parses.

use alloc::string::String;
use alloc::vec::Vec;

#[derive(Debug, Clone, PartialEq)]
pub enum Value {
    Str(String),
    Int(i64),
    Float(f64),
    Bool(bool),
    None,
    List(Vec<Value>),
    Tuple(Vec<Value>),
    Dict(Vec<(Value, Value)>),
}

impl Value {
    pub fn as_str(&self) -> Option<&str> {
        match self {
            Value::Str(s) => Some(s),
            _ => None,
        }
    }

    pub fn as_int(&self) -> Option<i64> {
        match self {
            Value::Int(i) => Some(*i),
            Value::Float(f) if *f == libm::trunc(*f) => Some(*f as i64),
            Value::Str(s) => s.trim().parse().ok(),
            _ => None,
        }
    }

    /// Elements of a list or tuple.
    pub fn as_seq(&self) -> Option<&[Value]> {
        match self {
            Value::List(v) | Value::Tuple(v) => Some(v),
            _ => None,
        }
    }

    /// Dictionary lookup by string key, ignoring ASCII case and surrounding space.
    pub fn get(&self, key: &str) -> Option<&Value> {
        match self {
            Value::Dict(entries) => entries.iter().find_map(|(k, v)| match k {
                Value::Str(s) if s.trim().eq_ignore_ascii_case(key) => Some(v),
                _ => None,
            }),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ParseError {
    pub offset: usize,
}

/// Parse one value at the start of `text` (leading whitespace allowed).
/// Returns the value and the number of bytes consumed.
pub fn parse_value(text: &str) -> Result<(Value, usize), ParseError> {
    let mut p = Parser { src: text.as_bytes(), text, pos: 0 };
    let v = p.value()?;
    Ok((v, p.pos))
}

/// First `{...}` in `text` that parses as a dictionary.
pub fn find_dict(text: &str) -> Option<Value> {
    text.char_indices()
        .filter(|(_, c)| *c == '{')
        .find_map(|(i, _)| match parse_value(&text[i..]) {
            Ok((v @ Value::Dict(_), _)) => Some(v),
            _ => None,
        })
}

/// Value following the first quoted occurrence of `key` and a colon, even when
/// the surrounding dictionary is malformed.
pub fn find_key(text: &str, key: &str) -> Option<Value> {
    for quote in ['"', '\''] {
        let needle = alloc::format!("{quote}{key}{quote}");
        let mut from = 0;
        while let Some(at) = text[from..].find(&needle) {
            let after = from + at + needle.len();
            let rest = text[after..].trim_start();
            if let Some(rest) = rest.strip_prefix(':') {
                if let Ok((v, _)) = parse_value(rest) {
                    return Some(v);
                }
            }
            from = after;
        }
    }
    None
}

struct Parser<'a> {
    src: &'a [u8],
    text: &'a str,
    pos: usize,
}

impl Parser<'_> {
    fn err<T>(&self) -> Result<T, ParseError> {
        Err(ParseError { offset: self.pos })
    }

    fn skip_ws(&mut self) {
        while self.pos < self.src.len() && self.src[self.pos].is_ascii_whitespace() {
            self.pos += 1;
        }
    }

    fn peek(&self) -> Option<u8> {
        self.src.get(self.pos).copied()
    }

    fn value(&mut self) -> Result<Value, ParseError> {
        self.skip_ws();
        match self.peek() {
            Some(b'{') => self.dict(),
            Some(b'[') => self.seq(b']').map(Value::List),
            Some(b'(') => self.seq(b')').map(Value::Tuple),
            Some(b'"') | Some(b'\'') => self.string().map(Value::Str),
            Some(c) if c == b'-' || c == b'+' || c.is_ascii_digit() => self.number(),
            Some(c) if c.is_ascii_alphabetic() => self.word(),
            _ => self.err(),
        }
    }

    fn dict(&mut self) -> Result<Value, ParseError> {
        self.pos += 1;
        let mut entries = Vec::new();
        loop {
            self.skip_ws();
            if self.peek() == Some(b'}') {
                self.pos += 1;
                return Ok(Value::Dict(entries));
            }
            let key = self.value()?;
            self.skip_ws();
            if self.peek() != Some(b':') {
                return self.err();
            }
            self.pos += 1;
            let value = self.value()?;
            entries.push((key, value));
            self.skip_ws();
            match self.peek() {
                Some(b',') => self.pos += 1,
                Some(b'}') => {}
                _ => return self.err(),
            }
        }
    }

    fn seq(&mut self, close: u8) -> Result<Vec<Value>, ParseError> {
        self.pos += 1;
        let mut items = Vec::new();
        loop {
            self.skip_ws();
            if self.peek() == Some(close) {
                self.pos += 1;
                return Ok(items);
            }
            items.push(self.value()?);
            self.skip_ws();
            match self.peek() {
                Some(b',') => self.pos += 1,
                Some(c) if c == close => {}
                _ => return self.err(),
            }
        }
    }

    fn string(&mut self) -> Result<String, ParseError> {
        let quote = self.src[self.pos];
        self.pos += 1;
        let mut out = String::new();
        let mut chars = self.text[self.pos..].char_indices();
        while let Some((i, c)) = chars.next() {
            match c {
                '\\' => {
                    let Some((_, esc)) = chars.next() else { break };
                    match esc {
                        'n' => out.push('\n'),
                        't' => out.push('\t'),
                        'r' => out.push('\r'),
                        'u' => {
                            let hex: String = chars.by_ref().take(4).map(|(_, c)| c).collect();
                            match u32::from_str_radix(&hex, 16).ok().and_then(char::from_u32) {
                                Some(ch) => out.push(ch),
                                None => return self.err(),
                            }
                        }
                        other => out.push(other),
                    }
                }
                c if c as u32 == quote as u32 => {
                    self.pos += i + 1;
                    return Ok(out);
                }
                c => out.push(c),
            }
        }
        self.pos = self.src.len();
        self.err()
    }

    fn number(&mut self) -> Result<Value, ParseError> {
        let start = self.pos;
        if matches!(self.peek(), Some(b'-') | Some(b'+')) {
            self.pos += 1;
        }
        let mut is_float = false;
        while let Some(c) = self.peek() {
            match c {
                b'0'..=b'9' => {}
                b'.' | b'e' | b'E' => is_float = true,
                b'-' | b'+' if is_float => {}
                _ => break,
            }
            self.pos += 1;
        }
        let lit = &self.text[start..self.pos];
        if !is_float {
            if let Ok(i) = lit.parse::<i64>() {
                return Ok(Value::Int(i));
            }
        }
        match lit.parse::<f64>() {
            Ok(f) => Ok(Value::Float(f)),
            Err(_) => {
                self.pos = start;
                self.err()
            }
        }
    }

    fn word(&mut self) -> Result<Value, ParseError> {
        let start = self.pos;
        while self.peek().is_some_and(|c| c.is_ascii_alphanumeric() || c == b'_') {
            self.pos += 1;
        }
        match &self.text[start..self.pos] {
            "True" | "true" => Ok(Value::Bool(true)),
            "False" | "false" => Ok(Value::Bool(false)),
            "None" | "null" => Ok(Value::None),
            _ => {
                self.pos = start;
                self.err()
            }
        }
    }
}
