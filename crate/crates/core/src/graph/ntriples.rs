//! N-Triples (canonical) and Turtle (readable) serializers.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use super::model::{Datatype, Iri, Literal, Node, RdfTriple, RDF_TYPE};
use super::store::GraphStore;
use crate::error::{Error, Result};

fn escape_literal(s: &str, out: &mut String) {
    for c in s.chars() {
        match c {
            '\\' => out.push_str("\\\\"),
            '"' => out.push_str("\\\""),
            '\n' => out.push_str("\\n"),
            '\r' => out.push_str("\\r"),
            '\t' => out.push_str("\\t"),
            c if c.is_control() => {
                let _ = write!(out, "\\u{:04X}", c as u32);
            }
            c => out.push(c),
        }
    }
}

fn write_node(node: &Node, out: &mut String) {
    match node {
        Node::Iri(i) => {
            out.push('<');
            out.push_str(i.as_str());
            out.push('>');
        }
        Node::Literal(l) => {
            out.push('"');
            escape_literal(&l.lexical, out);
            out.push('"');
            if l.datatype != Datatype::String {
                out.push_str("^^<");
                out.push_str(l.datatype.iri());
                out.push('>');
            }
        }
    }
}

pub fn ntriples_line(t: &RdfTriple) -> String {
    let mut line = String::new();
    line.push('<');
    line.push_str(t.subject.as_str());
    line.push_str("> <");
    line.push_str(t.predicate.as_str());
    line.push_str("> ");
    write_node(&t.object, &mut line);
    line.push_str(" .");
    line
}

/// One triple per line, lines sorted bytewise, trailing newline. An empty
/// store serializes to the empty string.
pub fn serialize_ntriples(store: &GraphStore) -> String {
    let mut lines: Vec<String> = store.iter().map(ntriples_line).collect();
    lines.sort();
    let mut out = String::new();
    for l in lines {
        out.push_str(&l);
        out.push('\n');
    }
    out
}

struct Cursor<'a> {
    s: &'a str,
    pos: usize,
    line: usize,
}

impl<'a> Cursor<'a> {
    fn err(&self, msg: impl Into<String>) -> Error {
        Error::Parse {
            what: "n-triples",
            line: self.line,
            message: format!("column {}: {}", self.pos + 1, msg.into()),
        }
    }

    fn rest(&self) -> &'a str {
        &self.s[self.pos..]
    }

    fn skip_ws(&mut self) {
        let trimmed = self.rest().trim_start_matches([' ', '\t']);
        self.pos = self.s.len() - trimmed.len();
    }

    fn iri(&mut self) -> Result<Iri> {
        self.skip_ws();
        if !self.rest().starts_with('<') {
            return Err(self.err("expected '<'"));
        }
        let end = self.rest().find('>').ok_or_else(|| self.err("unterminated IRI"))?;
        let body = &self.rest()[1..end];
        let iri = Iri::new(body).map_err(|_| self.err(format!("invalid IRI {body:?}")))?;
        self.pos += end + 1;
        Ok(iri)
    }

    fn literal(&mut self) -> Result<Literal> {
        // opening quote already checked
        self.pos += 1;
        let mut lexical = String::new();
        let mut chars = self.rest().char_indices();
        let close = loop {
            let Some((i, c)) = chars.next() else {
                return Err(self.err("unterminated literal"));
            };
            match c {
                '"' => break i,
                '\\' => {
                    let (_, e) = chars.next().ok_or_else(|| self.err("dangling escape"))?;
                    match e {
                        't' => lexical.push('\t'),
                        'b' => lexical.push('\u{8}'),
                        'n' => lexical.push('\n'),
                        'r' => lexical.push('\r'),
                        'f' => lexical.push('\u{c}'),
                        '"' => lexical.push('"'),
                        '\'' => lexical.push('\''),
                        '\\' => lexical.push('\\'),
                        'u' | 'U' => {
                            let n = if e == 'u' { 4 } else { 8 };
                            let hex: String = (0..n).filter_map(|_| chars.next().map(|(_, h)| h)).collect();
                            let cp = u32::from_str_radix(&hex, 16)
                                .ok()
                                .filter(|_| hex.len() == n)
                                .and_then(char::from_u32)
                                .ok_or_else(|| self.err(format!("bad unicode escape {hex:?}")))?;
                            lexical.push(cp);
                        }
                        other => return Err(self.err(format!("unknown escape \\{other}"))),
                    }
                }
                c => lexical.push(c),
            }
        };
        self.pos += close + 1;
        if self.rest().starts_with("^^") {
            self.pos += 2;
            let dt = self.iri()?;
            let datatype =
                Datatype::from_iri(dt.as_str()).ok_or_else(|| self.err(format!("unsupported datatype {dt}")))?;
            Literal::new(lexical, datatype).map_err(|e| self.err(e.to_string()))
        } else if self.rest().starts_with('@') {
            Err(self.err("language-tagged literals are not supported"))
        } else {
            Ok(Literal::string(lexical))
        }
    }
}

/// Exact inverse of [`serialize_ntriples`]. Blank lines and `#` comments are
/// skipped; any other malformed line fails with its line number.
pub fn parse_ntriples(text: &str) -> Result<GraphStore> {
    let mut store = GraphStore::new();
    for (n, raw) in text.lines().enumerate() {
        let line = raw.trim_end_matches('\r');
        if line.trim().is_empty() || line.trim_start().starts_with('#') {
            continue;
        }
        let mut c = Cursor { s: line, pos: 0, line: n + 1 };
        let subject = c.iri()?;
        let predicate = c.iri()?;
        c.skip_ws();
        let object = if c.rest().starts_with('<') {
            Node::Iri(c.iri()?)
        } else if c.rest().starts_with('"') {
            Node::Literal(c.literal()?)
        } else if c.rest().starts_with("_:") {
            return Err(c.err("blank nodes are not supported"));
        } else {
            return Err(c.err("expected IRI or literal object"));
        };
        c.skip_ws();
        if c.rest() != "." {
            return Err(c.err("expected '.' at end of triple"));
        }
        store.insert(RdfTriple { subject, predicate, object });
    }
    Ok(store)
}

/// Turtle with `@prefix` lines and triples grouped by subject. Prefixes are
/// only emitted when used. Not meant for round-tripping.
pub fn serialize_turtle(store: &GraphStore) -> String {
    let prefixes = store.prefixes();
    let compact = |iri: &Iri| -> String {
        if iri.as_str() == RDF_TYPE {
            return "a".to_string();
        }
        // longest matching base wins
        let best = prefixes
            .iter()
            .filter(|(_, base)| iri.as_str().starts_with(base.as_str()))
            .max_by_key(|(_, base)| base.len());
        if let Some((p, base)) = best {
            let local = &iri.as_str()[base.len()..];
            if !local.is_empty() && local.chars().all(|c| c.is_alphanumeric() || matches!(c, '_' | '-')) {
                return format!("{p}:{local}");
            }
        }
        format!("<{iri}>")
    };
    let mut used: BTreeMap<&str, &str> = BTreeMap::new();
    let mut body = String::new();
    let mut current: Option<&Iri> = None;
    for t in store.iter() {
        for iri in [Some(&t.subject), Some(&t.predicate), t.object.as_iri()].into_iter().flatten() {
            for (p, base) in prefixes {
                if iri.as_str().starts_with(base.as_str()) {
                    used.insert(p, base);
                }
            }
        }
        let obj = match &t.object {
            Node::Iri(i) => compact(i),
            Node::Literal(_) => {
                let mut s = String::new();
                write_node(&t.object, &mut s);
                s
            }
        };
        if current == Some(&t.subject) {
            let _ = write!(body, " ;\n    {} {}", compact(&t.predicate), obj);
        } else {
            if current.is_some() {
                body.push_str(" .\n\n");
            }
            let _ = write!(body, "{} {} {}", compact(&t.subject), compact(&t.predicate), obj);
            current = Some(&t.subject);
        }
    }
    if current.is_some() {
        body.push_str(" .\n");
    }
    let mut out = String::new();
    for (p, base) in used {
        let _ = writeln!(out, "@prefix {p}: <{base}> .");
    }
    if !out.is_empty() {
        out.push('\n');
    }
    out + &body
}
