//! A small SPARQL subset: `PREFIX`, `SELECT [DISTINCT] ?v... | *`, a single
//! group of triple patterns separated by `.`, and `FILTER` over numeric
//! comparisons joined with `&&`. Other constructs are rejected explicitly.

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use super::model::{Datatype, Iri, Literal, Node, RdfTriple};
use super::store::GraphStore;
use crate::error::{Error, Result};
use crate::ontology::default_prefixes;

const UNSUPPORTED: &[&str] = &[
    "OPTIONAL", "UNION", "MINUS", "GRAPH", "SERVICE", "BIND", "VALUES", "CONSTRUCT", "ASK", "DESCRIBE", "ORDER",
    "GROUP", "HAVING", "LIMIT", "OFFSET", "FROM", "INSERT", "DELETE", "NOT", "EXISTS",
];

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum PatternTerm {
    Var(String),
    Node(Node),
}

impl PatternTerm {
    fn var(&self) -> Option<&str> {
        match self {
            PatternTerm::Var(v) => Some(v),
            PatternTerm::Node(_) => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct TriplePattern {
    pub subject: PatternTerm,
    pub predicate: PatternTerm,
    pub object: PatternTerm,
}

impl TriplePattern {
    fn terms(&self) -> [&PatternTerm; 3] {
        [&self.subject, &self.predicate, &self.object]
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum CmpOp {
    Gt,
    Lt,
    Ge,
    Le,
    Eq,
    Ne,
}

impl CmpOp {
    fn holds(&self, a: f64, b: f64) -> bool {
        match self {
            CmpOp::Gt => a > b,
            CmpOp::Lt => a < b,
            CmpOp::Ge => a >= b,
            CmpOp::Le => a <= b,
            CmpOp::Eq => a == b,
            CmpOp::Ne => a != b,
        }
    }

    pub fn as_str(&self) -> &'static str {
        match self {
            CmpOp::Gt => ">",
            CmpOp::Lt => "<",
            CmpOp::Ge => ">=",
            CmpOp::Le => "<=",
            CmpOp::Eq => "=",
            CmpOp::Ne => "!=",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum Operand {
    Var(String),
    Number(f64),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Comparison {
    pub left: Operand,
    pub op: CmpOp,
    pub right: Operand,
}

impl Comparison {
    fn vars(&self) -> impl Iterator<Item = &str> {
        [&self.left, &self.right].into_iter().filter_map(|o| match o {
            Operand::Var(v) => Some(v.as_str()),
            Operand::Number(_) => None,
        })
    }

    /// Non-numeric or unbound operands fail the comparison.
    pub fn eval(&self, b: &BTreeMap<String, Node>) -> bool {
        let val = |o: &Operand| match o {
            Operand::Number(n) => Some(*n),
            Operand::Var(v) => b.get(v).and_then(Node::as_literal).and_then(Literal::as_f64),
        };
        match (val(&self.left), val(&self.right)) {
            (Some(a), Some(c)) => self.op.holds(a, c),
            _ => false,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SparqlQuery {
    pub prefixes: BTreeMap<String, String>,
    pub distinct: bool,
    /// Projected variables, without the leading `?`.
    pub select: Vec<String>,
    pub patterns: Vec<TriplePattern>,
    /// Conjunction of all comparisons.
    pub filters: Vec<Comparison>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct QueryResult {
    pub vars: Vec<String>,
    /// Rows sorted by binding tuple; duplicates kept unless `DISTINCT`.
    pub rows: Vec<Vec<Node>>,
}

#[derive(Debug, Clone, PartialEq)]
enum Tok {
    IriRef(String),
    PName(String, String),
    Var(String),
    Str(String, Option<Box<Tok>>),
    Num(String),
    Word(String),
    Punct(char),
    Op(&'static str),
}

#[derive(Debug, Clone)]
struct Spanned {
    tok: Tok,
    line: usize,
    col: usize,
}

fn syntax(line: usize, col: usize, msg: impl Into<String>) -> Error {
    Error::QuerySyntax {
        line,
        column: col,
        message: msg.into(),
    }
}

fn tokenize(text: &str) -> Result<Vec<Spanned>> {
    let chars: Vec<char> = text.chars().collect();
    let mut out = Vec::new();
    let (mut i, mut line, mut col) = (0usize, 1usize, 1usize);
    while i < chars.len() {
        let c = chars[i];
        let (l0, c0) = (line, col);
        let advance = |n: usize, i: &mut usize, col: &mut usize| {
            *i += n;
            *col += n;
        };
        if c == '\n' {
            i += 1;
            line += 1;
            col = 1;
            continue;
        }
        if c.is_whitespace() {
            advance(1, &mut i, &mut col);
            continue;
        }
        if c == '#' {
            while i < chars.len() && chars[i] != '\n' {
                i += 1;
            }
            continue;
        }
        let push = |tok: Tok, out: &mut Vec<Spanned>| out.push(Spanned { tok, line: l0, col: c0 });
        match c {
            '<' => {
                // an IRI if a '>' closes it before any whitespace, otherwise an operator
                let close = chars[i + 1..].iter().position(|&x| x == '>' || x.is_whitespace());
                if let Some(k) = close.filter(|&k| chars[i + 1 + k] == '>') {
                    let body: String = chars[i + 1..i + 1 + k].iter().collect();
                    push(Tok::IriRef(body), &mut out);
                    advance(k + 2, &mut i, &mut col);
                } else if chars.get(i + 1) == Some(&'=') {
                    push(Tok::Op("<="), &mut out);
                    advance(2, &mut i, &mut col);
                } else {
                    push(Tok::Op("<"), &mut out);
                    advance(1, &mut i, &mut col);
                }
            }
            '>' | '!' | '=' | '&' | '|' => {
                let two: String = chars[i..(i + 2).min(chars.len())].iter().collect();
                let op = match two.as_str() {
                    ">=" => Some(">="),
                    "!=" => Some("!="),
                    "&&" => Some("&&"),
                    "||" => Some("||"),
                    _ => None,
                };
                if let Some(op) = op {
                    push(Tok::Op(op), &mut out);
                    advance(2, &mut i, &mut col);
                } else {
                    let op = match c {
                        '>' => ">",
                        '=' => "=",
                        '!' => "!",
                        '|' => "|",
                        _ => return Err(syntax(l0, c0, format!("unexpected '{c}'"))),
                    };
                    push(Tok::Op(op), &mut out);
                    advance(1, &mut i, &mut col);
                }
            }
            '?' | '$' => {
                let mut k = i + 1;
                while k < chars.len() && (chars[k].is_alphanumeric() || chars[k] == '_') {
                    k += 1;
                }
                if k == i + 1 {
                    return Err(syntax(l0, c0, "empty variable name"));
                }
                push(Tok::Var(chars[i + 1..k].iter().collect()), &mut out);
                advance(k - i, &mut i, &mut col);
            }
            '"' => {
                let mut k = i + 1;
                let mut s = String::new();
                loop {
                    match chars.get(k) {
                        None | Some('\n') => return Err(syntax(l0, c0, "unterminated string")),
                        Some('"') => break,
                        Some('\\') => {
                            let e = chars.get(k + 1).ok_or_else(|| syntax(l0, c0, "dangling escape"))?;
                            s.push(match e {
                                'n' => '\n',
                                't' => '\t',
                                'r' => '\r',
                                other => *other,
                            });
                            k += 2;
                        }
                        Some(&ch) => {
                            s.push(ch);
                            k += 1;
                        }
                    }
                }
                advance(k + 1 - i, &mut i, &mut col);
                let dt = if chars.get(i) == Some(&'^') && chars.get(i + 1) == Some(&'^') {
                    advance(2, &mut i, &mut col);
                    let rest: String = chars[i..].iter().collect();
                    let sub = tokenize_one(&rest, line, col)?;
                    advance(sub.1, &mut i, &mut col);
                    Some(Box::new(sub.0))
                } else if chars.get(i) == Some(&'@') {
                    return Err(Error::Unsupported(format!("language tags (line {line}, column {col})")));
                } else {
                    None
                };
                push(Tok::Str(s, dt), &mut out);
            }
            c if c.is_ascii_digit() || ((c == '-' || c == '+') && chars.get(i + 1).is_some_and(|d| d.is_ascii_digit())) => {
                let mut k = i + 1;
                while k < chars.len() && chars[k].is_ascii_digit() {
                    k += 1;
                }
                if k + 1 < chars.len() && chars[k] == '.' && chars[k + 1].is_ascii_digit() {
                    k += 1;
                    while k < chars.len() && chars[k].is_ascii_digit() {
                        k += 1;
                    }
                }
                push(Tok::Num(chars[i..k].iter().collect()), &mut out);
                advance(k - i, &mut i, &mut col);
            }
            '{' | '}' | '(' | ')' | '.' | ';' | ',' | '*' | '/' | '^' | '[' | ']' => {
                push(Tok::Punct(c), &mut out);
                advance(1, &mut i, &mut col);
            }
            c if c.is_alphabetic() || c == ':' || c == '_' => {
                let mut k = i;
                while k < chars.len() && (chars[k].is_alphanumeric() || matches!(chars[k], '_' | '-' | ':' | '.')) {
                    k += 1;
                }
                // a trailing '.' ends the triple, it is not part of the name
                while k > i && chars[k - 1] == '.' {
                    k -= 1;
                }
                let word: String = chars[i..k].iter().collect();
                if word.starts_with("_:") {
                    return Err(Error::Unsupported(format!("blank nodes (line {l0}, column {c0})")));
                }
                match word.split_once(':') {
                    Some((p, local)) => push(Tok::PName(p.to_string(), local.to_string()), &mut out),
                    None => push(Tok::Word(word.clone()), &mut out),
                }
                advance(k - i, &mut i, &mut col);
            }
            other => return Err(syntax(l0, c0, format!("unexpected character {other:?}"))),
        }
    }
    Ok(out)
}

/// Reads a single datatype token after `^^`, returning it and its length in chars.
fn tokenize_one(rest: &str, line: usize, col: usize) -> Result<(Tok, usize)> {
    let chars: Vec<char> = rest.chars().collect();
    if chars.first() == Some(&'<') {
        let k = chars
            .iter()
            .position(|&c| c == '>')
            .ok_or_else(|| syntax(line, col, "unterminated datatype IRI"))?;
        return Ok((Tok::IriRef(chars[1..k].iter().collect()), k + 1));
    }
    let k = chars
        .iter()
        .position(|c| !(c.is_alphanumeric() || matches!(c, '_' | '-' | ':')))
        .unwrap_or(chars.len());
    let word: String = chars[..k].iter().collect();
    match word.split_once(':') {
        Some((p, l)) => Ok((Tok::PName(p.into(), l.into()), k)),
        None => Err(syntax(line, col, "expected datatype IRI after ^^")),
    }
}

struct Parser {
    toks: Vec<Spanned>,
    pos: usize,
    prefixes: BTreeMap<String, String>,
    end: (usize, usize),
}

impl Parser {
    fn peek(&self) -> Option<&Tok> {
        self.toks.get(self.pos).map(|s| &s.tok)
    }

    fn here(&self) -> (usize, usize) {
        self.toks.get(self.pos).map(|s| (s.line, s.col)).unwrap_or(self.end)
    }

    fn err(&self, msg: impl Into<String>) -> Error {
        let (l, c) = self.here();
        syntax(l, c, msg)
    }

    fn next(&mut self) -> Option<Tok> {
        let t = self.peek().cloned();
        self.pos += 1;
        t
    }

    fn check_supported(&self) -> Result<()> {
        let (l, c) = self.here();
        if let Some(Tok::Word(w)) = self.peek() {
            let up = w.to_ascii_uppercase();
            if UNSUPPORTED.contains(&up.as_str()) {
                return Err(Error::Unsupported(format!("{up} (line {l}, column {c})")));
            }
        }
        Ok(())
    }

    fn keyword(&mut self, kw: &str) -> bool {
        if matches!(self.peek(), Some(Tok::Word(w)) if w.eq_ignore_ascii_case(kw)) {
            self.pos += 1;
            true
        } else {
            false
        }
    }

    fn expect_punct(&mut self, p: char) -> Result<()> {
        if self.peek() == Some(&Tok::Punct(p)) {
            self.pos += 1;
            Ok(())
        } else {
            Err(self.err(format!("expected '{p}'")))
        }
    }

    fn iri(&self, t: &Tok) -> Result<Iri> {
        match t {
            Tok::IriRef(s) => Iri::new(s.as_str()).map_err(|_| self.err(format!("invalid IRI <{s}>"))),
            Tok::PName(p, l) => {
                let base = self
                    .prefixes
                    .get(p)
                    .ok_or_else(|| self.err(format!("undeclared prefix {p}:")))?;
                Iri::new(format!("{base}{l}")).map_err(|_| self.err(format!("invalid IRI {p}:{l}")))
            }
            _ => Err(self.err("expected IRI")),
        }
    }

    fn term(&mut self, predicate_position: bool) -> Result<PatternTerm> {
        self.check_supported()?;
        let start = self.pos;
        let t = self.next().ok_or_else(|| self.err("unexpected end of query"))?;
        let term = match &t {
            Tok::Var(v) => PatternTerm::Var(v.clone()),
            Tok::IriRef(_) | Tok::PName(..) => {
                self.pos = start;
                let iri = self.iri(&t)?;
                self.pos = start + 1;
                PatternTerm::Node(Node::Iri(iri))
            }
            Tok::Word(w) if w == "a" && predicate_position => PatternTerm::Node(Node::Iri(Iri::rdf_type())),
            Tok::Str(s, dt) if !predicate_position => {
                let lit = match dt {
                    None => Literal::string(s.clone()),
                    Some(d) => {
                        self.pos = start;
                        let dti = self.iri(d)?;
                        let datatype = Datatype::from_iri(dti.as_str())
                            .ok_or_else(|| self.err(format!("unsupported datatype {dti}")))?;
                        let lit = Literal::new(s.clone(), datatype).map_err(|e| self.err(e.to_string()))?;
                        self.pos = start + 1;
                        lit
                    }
                };
                PatternTerm::Node(Node::Literal(lit))
            }
            Tok::Num(n) if !predicate_position => {
                let dt = if n.contains('.') { Datatype::Decimal } else { Datatype::Integer };
                let lexical = n.strip_prefix('+').unwrap_or(n);
                PatternTerm::Node(Node::Literal(Literal::new(lexical, dt).map_err(|e| self.err(e.to_string()))?))
            }
            _ => {
                self.pos = start;
                return Err(self.err(if predicate_position {
                    "expected variable or IRI in predicate position"
                } else {
                    "expected variable, IRI or literal"
                }));
            }
        };
        if predicate_position {
            if let Some(Tok::Punct(p @ ('/' | '*' | '^' | '|'))) = self.peek() {
                let (l, c) = self.here();
                return Err(Error::Unsupported(format!("property path '{p}' (line {l}, column {c})")));
            }
            if let Some(Tok::Op("|")) = self.peek() {
                let (l, c) = self.here();
                return Err(Error::Unsupported(format!("property path '|' (line {l}, column {c})")));
            }
        }
        Ok(term)
    }

    fn operand(&mut self) -> Result<Operand> {
        match self.next() {
            Some(Tok::Var(v)) => Ok(Operand::Var(v)),
            Some(Tok::Num(n)) => n
                .parse()
                .map(Operand::Number)
                .map_err(|_| self.err("bad number")),
            _ => {
                self.pos -= 1;
                Err(self.err("FILTER supports only variables and numbers"))
            }
        }
    }

    fn comparison(&mut self) -> Result<Comparison> {
        let left = self.operand()?;
        let op = match self.next() {
            Some(Tok::Op(">")) => CmpOp::Gt,
            Some(Tok::Op("<")) => CmpOp::Lt,
            Some(Tok::Op(">=")) => CmpOp::Ge,
            Some(Tok::Op("<=")) => CmpOp::Le,
            Some(Tok::Op("=")) => CmpOp::Eq,
            Some(Tok::Op("!=")) => CmpOp::Ne,
            Some(Tok::Op("||")) => {
                self.pos -= 1;
                let (l, c) = self.here();
                return Err(Error::Unsupported(format!("'||' in FILTER (line {l}, column {c})")));
            }
            _ => {
                self.pos -= 1;
                return Err(self.err("expected comparison operator"));
            }
        };
        let right = self.operand()?;
        Ok(Comparison { left, op, right })
    }

    fn filter(&mut self, out: &mut Vec<Comparison>) -> Result<()> {
        self.expect_punct('(')?;
        loop {
            let parens = self.peek() == Some(&Tok::Punct('('));
            if parens {
                self.pos += 1;
            }
            out.push(self.comparison()?);
            if parens {
                self.expect_punct(')')?;
            }
            match self.peek() {
                Some(Tok::Op("&&")) => self.pos += 1,
                Some(Tok::Op("||")) => {
                    let (l, c) = self.here();
                    return Err(Error::Unsupported(format!("'||' in FILTER (line {l}, column {c})")));
                }
                _ => break,
            }
        }
        self.expect_punct(')')
    }
}

pub fn parse_sparql(text: &str) -> Result<SparqlQuery> {
    let toks = tokenize(text)?;
    let last_line = text.lines().count().max(1);
    let last_col = text.lines().last().map(|l| l.chars().count() + 1).unwrap_or(1);
    let mut p = Parser {
        toks,
        pos: 0,
        prefixes: default_prefixes(),
        end: (last_line, last_col),
    };
    loop {
        p.check_supported()?;
        if !p.keyword("PREFIX") {
            break;
        }
        let name = match p.next() {
            Some(Tok::PName(n, l)) if l.is_empty() => n,
            _ => {
                p.pos -= 1;
                return Err(p.err("expected prefix name like 'kg:'"));
            }
        };
        let base = match p.next() {
            Some(Tok::IriRef(s)) => s,
            _ => {
                p.pos -= 1;
                return Err(p.err("expected <iri> after prefix name"));
            }
        };
        Iri::new(base.as_str()).map_err(|_| p.err("invalid prefix IRI"))?;
        p.prefixes.insert(name, base);
    }
    p.check_supported()?;
    if !p.keyword("SELECT") {
        return Err(p.err("expected SELECT"));
    }
    let distinct = p.keyword("DISTINCT");
    let mut select = Vec::new();
    let mut star = false;
    loop {
        match p.peek() {
            Some(Tok::Var(v)) => {
                select.push(v.clone());
                p.pos += 1;
            }
            Some(Tok::Punct('*')) if select.is_empty() && !star => {
                star = true;
                p.pos += 1;
            }
            _ => break,
        }
    }
    if select.is_empty() && !star {
        return Err(p.err("expected projection variables or '*'"));
    }
    p.check_supported()?;
    p.keyword("WHERE");
    p.expect_punct('{')?;
    let mut patterns = Vec::new();
    let mut filters = Vec::new();
    loop {
        p.check_supported()?;
        match p.peek() {
            Some(Tok::Punct('}')) => {
                p.pos += 1;
                break;
            }
            Some(Tok::Punct('.')) => {
                p.pos += 1;
            }
            Some(Tok::Punct('{')) | Some(Tok::Punct('[')) => {
                let (l, c) = p.here();
                return Err(Error::Unsupported(format!("nested groups (line {l}, column {c})")));
            }
            Some(Tok::Word(w)) if w.eq_ignore_ascii_case("FILTER") => {
                p.pos += 1;
                p.filter(&mut filters)?;
            }
            None => return Err(p.err("unterminated group, expected '}'")),
            _ => {
                let subject = p.term(false)?;
                if matches!(subject, PatternTerm::Node(Node::Literal(_))) {
                    return Err(p.err("literal in subject position"));
                }
                // predicate-object lists and object lists share the subject
                loop {
                    let predicate = p.term(true)?;
                    loop {
                        let object = p.term(false)?;
                        patterns.push(TriplePattern {
                            subject: subject.clone(),
                            predicate: predicate.clone(),
                            object,
                        });
                        if p.peek() == Some(&Tok::Punct(',')) {
                            p.pos += 1;
                        } else {
                            break;
                        }
                    }
                    if p.peek() == Some(&Tok::Punct(';')) {
                        p.pos += 1;
                    } else {
                        break;
                    }
                }
                match p.peek() {
                    Some(Tok::Punct('.')) | Some(Tok::Punct('}')) => {}
                    Some(Tok::Word(w)) if w.eq_ignore_ascii_case("FILTER") => {}
                    _ => {
                        p.check_supported()?;
                        return Err(p.err("expected '.' or '}' after triple pattern"));
                    }
                }
            }
        }
    }
    p.check_supported()?;
    if p.peek().is_some() {
        return Err(p.err("unexpected input after query"));
    }
    let mentioned: BTreeSet<&str> = patterns.iter().flat_map(|t| t.terms()).filter_map(PatternTerm::var).collect();
    if star {
        let mut seen = BTreeSet::new();
        for t in &patterns {
            for v in t.terms().into_iter().filter_map(PatternTerm::var) {
                if seen.insert(v) {
                    select.push(v.to_string());
                }
            }
        }
    }
    for v in &select {
        if !mentioned.contains(v.as_str()) {
            return Err(syntax(1, 1, format!("selected variable ?{v} does not appear in any pattern")));
        }
    }
    for f in &filters {
        for v in f.vars() {
            if !mentioned.contains(v) {
                return Err(syntax(1, 1, format!("filter variable ?{v} does not appear in any pattern")));
            }
        }
    }
    Ok(SparqlQuery {
        prefixes: p.prefixes,
        distinct,
        select,
        patterns,
        filters,
    })
}

type Binding = BTreeMap<String, Node>;

fn resolve<'a>(t: &'a PatternTerm, b: &'a Binding) -> Option<&'a Node> {
    match t {
        PatternTerm::Node(n) => Some(n),
        PatternTerm::Var(v) => b.get(v),
    }
}

fn bound_count(t: &TriplePattern, b: &Binding) -> usize {
    t.terms().iter().filter(|x| resolve(x, b).is_some()).count()
}

fn candidates(store: &GraphStore, t: &TriplePattern, b: &Binding) -> Vec<RdfTriple> {
    let s = resolve(&t.subject, b);
    let p = resolve(&t.predicate, b);
    let o = resolve(&t.object, b);
    match (s, p, o) {
        (Some(Node::Literal(_)), _, _) | (_, Some(Node::Literal(_)), _) => Vec::new(),
        (Some(Node::Iri(s)), _, _) => store.with_subject(s).cloned().collect(),
        (None, Some(Node::Iri(p)), Some(o)) => store
            .subjects_with(p, o)
            .map(|s| RdfTriple::new(s.clone(), p.clone(), o.clone()))
            .collect(),
        (None, Some(Node::Iri(p)), None) => store
            .with_predicate(p)
            .map(|(s, o)| RdfTriple::new(s.clone(), p.clone(), o.clone()))
            .collect(),
        _ => store.iter().cloned().collect(),
    }
}

fn unify(t: &TriplePattern, tr: &RdfTriple, b: &mut Binding, added: &mut Vec<String>) -> bool {
    let pairs = [
        (&t.subject, Node::Iri(tr.subject.clone())),
        (&t.predicate, Node::Iri(tr.predicate.clone())),
        (&t.object, tr.object.clone()),
    ];
    for (term, node) in pairs {
        match term {
            PatternTerm::Node(n) => {
                if *n != node {
                    return false;
                }
            }
            PatternTerm::Var(v) => match b.get(v) {
                Some(existing) => {
                    if *existing != node {
                        return false;
                    }
                }
                None => {
                    b.insert(v.clone(), node);
                    added.push(v.clone());
                }
            },
        }
    }
    true
}

/// Evaluates the query with a greedy join order: at each step the pattern
/// with the most bound positions goes next. Filters run as soon as their
/// variables are bound.
pub fn eval_sparql(query: &SparqlQuery, store: &GraphStore) -> QueryResult {
    let mut solutions: Vec<Binding> = Vec::new();
    let mut remaining: Vec<&TriplePattern> = query.patterns.iter().collect();
    let mut checked = vec![false; query.filters.len()];
    search(store, query, &mut remaining, &mut checked, &mut Binding::new(), &mut solutions);

    let mut rows: Vec<Vec<Node>> = solutions
        .into_iter()
        .map(|b| query.select.iter().map(|v| b[v].clone()).collect())
        .collect();
    rows.sort();
    if query.distinct {
        rows.dedup();
    }
    QueryResult {
        vars: query.select.clone(),
        rows,
    }
}

fn search(
    store: &GraphStore,
    q: &SparqlQuery,
    remaining: &mut Vec<&TriplePattern>,
    checked: &mut [bool],
    b: &mut Binding,
    out: &mut Vec<Binding>,
) {
    // filters whose variables are all bound
    let mut newly = Vec::new();
    for (i, f) in q.filters.iter().enumerate() {
        if !checked[i] && f.vars().all(|v| b.contains_key(v)) {
            if !f.eval(b) {
                for j in newly {
                    checked[j] = false;
                }
                return;
            }
            checked[i] = true;
            newly.push(i);
        }
    }
    if remaining.is_empty() {
        out.push(b.clone());
    } else {
        let (idx, _) = remaining
            .iter()
            .enumerate()
            .max_by_key(|(i, t)| (bound_count(t, b), std::cmp::Reverse(*i)))
            .expect("non-empty");
        let t = remaining.remove(idx);
        for tr in candidates(store, t, b) {
            let mut added = Vec::new();
            if unify(t, &tr, b, &mut added) {
                search(store, q, remaining, checked, b, out);
            }
            for v in added {
                b.remove(&v);
            }
        }
        remaining.insert(idx, t);
    }
    for j in newly {
        checked[j] = false;
    }
}
