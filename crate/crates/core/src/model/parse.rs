//! Model documents.
//!
//! Text grammar, one directive per line (`#` starts a comment):
//!
//! ```text
//! model oscillatory
//! var X
//! var Y
//! const k = 5
//! eq X = k*X - 1*X*Y
//! eq Y = 0.4*X*Y - 5.4*Y
//! thresholds X = 0 1 2 3
//! thresholds Y = 0 1 2
//! init X = [1, 2]
//! init Y = [0, 1]
//! ```
//!
//! `const` values are multiplied into coefficients. A variable without an
//! `eq` line (or with `eq V = 0`) is a constant species. `init` bounds must
//! be thresholds; a span over several intervals selects every rectangle in
//! it. `initrect i j ...` adds a single rectangle by index. A document whose
//! first non-blank character is `{` is read as JSON instead.

use std::collections::{BTreeMap, HashMap};

use serde::{Deserialize, Serialize};

use super::{
    check_thresholds, BiochemicalSystem, Constants, ModelError, MultiAffineField, MultiAffineTerm,
    Partition,
};
use crate::geometry::RectIndex;

pub fn parse_model(text: &str) -> Result<BiochemicalSystem, ModelError> {
    parse_model_with(text, &Constants::new())
}

/// Like [`parse_model`], with extra constants that override `const` lines.
pub fn parse_model_with(
    text: &str,
    overrides: &Constants,
) -> Result<BiochemicalSystem, ModelError> {
    if text.trim_start().starts_with('{') {
        return parse_json(text);
    }
    TextParser::default().run(text, overrides)
}

#[derive(Debug, Clone, PartialEq)]
enum Tok {
    Num(f64),
    Ident(String),
    Plus,
    Minus,
    Star,
}

fn syntax(line: usize, column: usize, message: impl Into<String>) -> ModelError {
    ModelError::Syntax {
        line,
        column,
        message: message.into(),
    }
}

fn is_ident_start(c: char) -> bool {
    c.is_ascii_alphabetic() || c == '_'
}

fn is_ident_char(c: char) -> bool {
    c.is_ascii_alphanumeric() || c == '_' || c == ':'
}

/// Tokens of an equation right-hand side, each with its 1-based column.
fn tokenize(s: &str, line: usize, col0: usize) -> Result<Vec<(Tok, usize)>, ModelError> {
    let chars: Vec<char> = s.chars().collect();
    let mut out = Vec::new();
    let mut i = 0;
    while i < chars.len() {
        let c = chars[i];
        let col = col0 + i;
        match c {
            ' ' | '\t' => i += 1,
            '+' => {
                out.push((Tok::Plus, col));
                i += 1;
            }
            '-' => {
                out.push((Tok::Minus, col));
                i += 1;
            }
            '*' => {
                out.push((Tok::Star, col));
                i += 1;
            }
            c if c.is_ascii_digit() || c == '.' => {
                let start = i;
                while i < chars.len() && (chars[i].is_ascii_digit() || chars[i] == '.') {
                    i += 1;
                }
                if i < chars.len() && (chars[i] == 'e' || chars[i] == 'E') {
                    let mut j = i + 1;
                    if j < chars.len() && (chars[j] == '+' || chars[j] == '-') {
                        j += 1;
                    }
                    if j < chars.len() && chars[j].is_ascii_digit() {
                        i = j;
                        while i < chars.len() && chars[i].is_ascii_digit() {
                            i += 1;
                        }
                    }
                }
                let lit: String = chars[start..i].iter().collect();
                let v: f64 = lit
                    .parse()
                    .map_err(|_| syntax(line, col, format!("bad number `{lit}`")))?;
                out.push((Tok::Num(v), col));
            }
            c if is_ident_start(c) => {
                let start = i;
                while i < chars.len() && is_ident_char(chars[i]) {
                    i += 1;
                }
                out.push((Tok::Ident(chars[start..i].iter().collect()), col));
            }
            other => return Err(syntax(line, col, format!("unexpected character `{other}`"))),
        }
    }
    Ok(out)
}

#[derive(Default)]
struct TextParser {
    name: Option<String>,
    vars: Vec<String>,
    consts: Constants,
    // (line, column of rhs, rhs text)
    eqs: HashMap<String, (usize, usize, String)>,
    thresholds: HashMap<String, Vec<f64>>,
    inits: HashMap<String, (usize, f64, f64)>,
    init_rects: Vec<(usize, Vec<usize>)>,
}

impl TextParser {
    fn run(mut self, text: &str, overrides: &Constants) -> Result<BiochemicalSystem, ModelError> {
        for (lineno, raw) in text.lines().enumerate() {
            let line = lineno + 1;
            let content = raw.split('#').next().unwrap_or("");
            if content.trim().is_empty() {
                continue;
            }
            let indent = content.len() - content.trim_start().len();
            let body = content.trim();
            let (kw, rest) = body.split_once(char::is_whitespace).unwrap_or((body, ""));
            let rest_col = indent + kw.len() + 2 + (rest.len() - rest.trim_start().len());
            let rest = rest.trim();
            match kw {
                "model" => self.name = Some(rest.to_string()),
                "var" => {
                    if !valid_ident(rest) {
                        return Err(syntax(line, rest_col, format!("bad variable name `{rest}`")));
                    }
                    if self.vars.iter().any(|v| v == rest) {
                        return Err(syntax(line, rest_col, format!("variable `{rest}` declared twice")));
                    }
                    self.vars.push(rest.to_string());
                }
                "const" | "eq" | "thresholds" | "init" => {
                    let (lhs, rhs) = rest
                        .split_once('=')
                        .ok_or_else(|| syntax(line, rest_col, "expected `<name> = ...`"))?;
                    let lhs = lhs.trim();
                    let rhs_col = rest_col + rest.find('=').unwrap_or(0) + 1;
                    let rhs_col = rhs_col + (rhs.len() - rhs.trim_start().len());
                    let rhs = rhs.trim();
                    if !valid_ident(lhs) {
                        return Err(syntax(line, rest_col, format!("bad name `{lhs}`")));
                    }
                    self.directive(kw, lhs, rhs, line, rhs_col)?;
                }
                "initrect" => {
                    let idx = rest
                        .split_whitespace()
                        .map(|s| s.parse::<usize>())
                        .collect::<Result<Vec<_>, _>>()
                        .map_err(|_| syntax(line, rest_col, "initrect expects integer indices"))?;
                    self.init_rects.push((line, idx));
                }
                other => return Err(syntax(line, indent + 1, format!("unknown directive `{other}`"))),
            }
        }
        for (k, v) in overrides {
            self.consts.insert(k.clone(), *v);
        }
        self.finish()
    }

    fn directive(
        &mut self,
        kw: &str,
        lhs: &str,
        rhs: &str,
        line: usize,
        col: usize,
    ) -> Result<(), ModelError> {
        match kw {
            "const" => {
                let v: f64 = rhs
                    .parse()
                    .map_err(|_| syntax(line, col, format!("bad constant value `{rhs}`")))?;
                self.consts.insert(lhs.to_string(), v);
            }
            "eq" => {
                if self
                    .eqs
                    .insert(lhs.to_string(), (line, col, rhs.to_string()))
                    .is_some()
                {
                    return Err(syntax(line, 1, format!("second equation for `{lhs}`")));
                }
            }
            "thresholds" => {
                let vals = rhs
                    .split(|c: char| c.is_whitespace() || c == ',')
                    .filter(|s| !s.is_empty())
                    .map(|s| s.parse::<f64>())
                    .collect::<Result<Vec<_>, _>>()
                    .map_err(|_| syntax(line, col, "thresholds must be numbers"))?;
                check_thresholds(&vals).map_err(|message| ModelError::Thresholds {
                    var: lhs.to_string(),
                    message,
                })?;
                self.thresholds.insert(lhs.to_string(), vals);
            }
            "init" => {
                let inner = rhs
                    .strip_prefix('[')
                    .and_then(|s| s.strip_suffix(']'))
                    .ok_or_else(|| syntax(line, col, "expected `[lo, hi]`"))?;
                let (lo, hi) = inner
                    .split_once(',')
                    .ok_or_else(|| syntax(line, col, "expected `[lo, hi]`"))?;
                let lo: f64 = lo
                    .trim()
                    .parse()
                    .map_err(|_| syntax(line, col, "bad lower bound"))?;
                let hi: f64 = hi
                    .trim()
                    .parse()
                    .map_err(|_| syntax(line, col, "bad upper bound"))?;
                self.inits.insert(lhs.to_string(), (line, lo, hi));
            }
            _ => unreachable!(),
        }
        Ok(())
    }

    fn finish(self) -> Result<BiochemicalSystem, ModelError> {
        let n = self.vars.len();
        if n == 0 {
            return Err(ModelError::Dimension("no `var` declarations".into()));
        }
        for name in self.eqs.keys().chain(self.thresholds.keys()).chain(self.inits.keys()) {
            if !self.vars.contains(name) {
                let line = self.eqs.get(name).map(|e| e.0).or(self.inits.get(name).map(|i| i.0));
                return Err(match line {
                    Some(l) => syntax(l, 1, format!("`{name}` is not a declared variable")),
                    None => ModelError::Dimension(format!("`{name}` is not a declared variable")),
                });
            }
        }
        let index: HashMap<&str, usize> = self
            .vars
            .iter()
            .enumerate()
            .map(|(i, v)| (v.as_str(), i))
            .collect();

        let mut equations = Vec::with_capacity(n);
        for v in &self.vars {
            equations.push(match self.eqs.get(v) {
                Some((line, col, rhs)) => self.parse_expr(rhs, *line, *col, &index)?,
                None => Vec::new(),
            });
        }
        let field = MultiAffineField::new(equations)?;

        let mut thresholds = Vec::with_capacity(n);
        for v in &self.vars {
            thresholds.push(self.thresholds.get(v).cloned().ok_or_else(|| {
                ModelError::Thresholds {
                    var: v.clone(),
                    message: "missing `thresholds` line".into(),
                }
            })?);
        }
        let partition = Partition::new(thresholds)?;

        let mut initial = Vec::new();
        if !self.inits.is_empty() {
            let mut spans = Vec::with_capacity(n);
            for (i, v) in self.vars.iter().enumerate() {
                let &(_, lo, hi) = self
                    .inits
                    .get(v)
                    .ok_or_else(|| ModelError::Initial(format!("missing `init` for `{v}`")))?;
                spans.push(threshold_span(partition.thresholds(i), lo, hi).ok_or_else(|| {
                    ModelError::Initial(format!(
                        "[{lo}, {hi}] for `{v}` is not bounded by two thresholds"
                    ))
                })?);
            }
            initial.extend(box_rects(&spans));
        }
        for (line, idx) in &self.init_rects {
            let r = RectIndex::new(idx.clone());
            if !partition.contains_rect(&r) {
                return Err(ModelError::Initial(format!(
                    "line {line}: rectangle {r} is out of range"
                )));
            }
            initial.push(r);
        }
        BiochemicalSystem::new(
            self.name.unwrap_or_else(|| "model".into()),
            self.vars,
            field,
            partition,
            initial,
        )
    }

    fn parse_expr(
        &self,
        rhs: &str,
        line: usize,
        col: usize,
        index: &HashMap<&str, usize>,
    ) -> Result<Vec<MultiAffineTerm>, ModelError> {
        let toks = tokenize(rhs, line, col)?;
        let mut terms = Vec::new();
        let mut pos = 0;
        let end_col = col + rhs.chars().count();
        while pos < toks.len() {
            let mut sign = 1.0;
            if !terms.is_empty() || matches!(toks[pos].0, Tok::Plus | Tok::Minus) {
                match toks[pos].0 {
                    Tok::Plus => {}
                    Tok::Minus => sign = -1.0,
                    _ => return Err(syntax(line, toks[pos].1, "expected `+` or `-`")),
                }
                pos += 1;
            }
            let mut coef = sign;
            let mut vars = Vec::new();
            let mut names = Vec::new();
            loop {
                let (tok, c) = toks
                    .get(pos)
                    .cloned()
                    .ok_or_else(|| syntax(line, end_col, "expected a factor"))?;
                match tok {
                    Tok::Num(v) => coef *= v,
                    Tok::Ident(name) => {
                        if let Some(&j) = index.get(name.as_str()) {
                            vars.push(j);
                            names.push(name);
                        } else if let Some(v) = self.consts.get(&name) {
                            coef *= v;
                        } else {
                            return Err(syntax(line, c, format!("unknown identifier `{name}`")));
                        }
                    }
                    _ => return Err(syntax(line, c, "expected a number or identifier")),
                }
                pos += 1;
                if pos < toks.len() && toks[pos].0 == Tok::Star {
                    pos += 1;
                } else {
                    break;
                }
            }
            if vars.is_empty() && coef == 0.0 {
                continue;
            }
            let term = MultiAffineTerm::new(coef, vars).map_err(|j| ModelError::NotMultiAffine {
                var: self.vars[j].clone(),
            })?;
            terms.push(term);
        }
        Ok(terms)
    }
}

fn valid_ident(s: &str) -> bool {
    let mut chars = s.chars();
    matches!(chars.next(), Some(c) if is_ident_start(c)) && chars.all(is_ident_char)
}

/// Index range `[first, last]` of cells covering `[lo, hi]` when both are thresholds.
fn threshold_span(t: &[f64], lo: f64, hi: f64) -> Option<(usize, usize)> {
    let a = t.iter().position(|&v| v == lo)?;
    let b = t.iter().position(|&v| v == hi)?;
    (a < b).then(|| (a, b - 1))
}

fn box_rects(spans: &[(usize, usize)]) -> Vec<RectIndex> {
    let mut out = vec![Vec::new()];
    for &(a, b) in spans {
        out = out
            .into_iter()
            .flat_map(|prefix| {
                (a..=b).map(move |k| {
                    let mut p = prefix.clone();
                    p.push(k);
                    p
                })
            })
            .collect();
    }
    out.into_iter().map(RectIndex::new).collect()
}

/// Canonical text form; `parse_model(&print_model(s))` reproduces `s`.
pub fn print_model(system: &BiochemicalSystem) -> String {
    use std::fmt::Write;
    let names = system.names();
    let mut s = String::new();
    let _ = writeln!(s, "model {}", system.name);
    for v in names {
        let _ = writeln!(s, "var {v}");
    }
    for (i, eq) in system.field().equations().iter().enumerate() {
        let _ = write!(s, "eq {} =", names[i]);
        if eq.is_empty() {
            s.push_str(" 0");
        }
        for (k, term) in eq.iter().enumerate() {
            let c = term.coefficient;
            let neg = c.is_sign_negative();
            match (k, neg) {
                (0, false) => s.push(' '),
                (0, true) => s.push_str(" -"),
                (_, false) => s.push_str(" + "),
                (_, true) => s.push_str(" - "),
            }
            let _ = write!(s, "{}", c.abs());
            for &j in term.vars() {
                let _ = write!(s, "*{}", names[j]);
            }
        }
        s.push('\n');
    }
    let p = system.partition();
    for (i, v) in names.iter().enumerate() {
        let vals: Vec<String> = p.thresholds(i).iter().map(|x| x.to_string()).collect();
        let _ = writeln!(s, "thresholds {v} = {}", vals.join(" "));
    }
    match as_box(system) {
        Some(spans) => {
            for (i, v) in names.iter().enumerate() {
                let t = p.thresholds(i);
                let (a, b) = spans[i];
                let _ = writeln!(s, "init {v} = [{}, {}]", t[a], t[b + 1]);
            }
        }
        None => {
            for r in system.initial() {
                let idx: Vec<String> = r.iter().map(|k| k.to_string()).collect();
                let _ = writeln!(s, "initrect {}", idx.join(" "));
            }
        }
    }
    s
}

/// Per-axis spans if the initial set is exactly a box of rectangles.
fn as_box(system: &BiochemicalSystem) -> Option<Vec<(usize, usize)>> {
    let init = system.initial();
    let n = system.dim();
    let spans: Vec<(usize, usize)> = (0..n)
        .map(|i| {
            let lo = init.iter().map(|r| r[i]).min().unwrap_or(0);
            let hi = init.iter().map(|r| r[i]).max().unwrap_or(0);
            (lo, hi)
        })
        .collect();
    let expected: usize = spans.iter().map(|(a, b)| b - a + 1).product();
    (expected == init.len()).then_some(spans)
}

/// JSON form of a model document.
#[derive(Debug, Serialize, Deserialize)]
pub struct ModelDocument {
    #[serde(default)]
    pub name: Option<String>,
    pub variables: Vec<String>,
    #[serde(default)]
    pub equations: BTreeMap<String, Vec<TermDocument>>,
    pub thresholds: BTreeMap<String, Vec<f64>>,
    #[serde(default)]
    pub init: BTreeMap<String, [f64; 2]>,
    #[serde(default)]
    pub initial_rects: Vec<Vec<usize>>,
}

#[derive(Debug, Serialize, Deserialize)]
pub struct TermDocument {
    pub coefficient: f64,
    #[serde(default)]
    pub vars: Vec<String>,
}

fn parse_json(text: &str) -> Result<BiochemicalSystem, ModelError> {
    let doc: ModelDocument = serde_json::from_str(text).map_err(|e| ModelError::Syntax {
        line: e.line(),
        column: e.column(),
        message: e.to_string(),
    })?;
    let name = doc.name.clone().unwrap_or_else(|| "model".into());
    let mut p = TextParser::default();
    for v in &doc.variables {
        if !valid_ident(v) || p.vars.contains(v) {
            return Err(ModelError::Dimension(format!("bad or duplicate variable `{v}`")));
        }
        p.vars.push(v.clone());
    }
    let index: HashMap<String, usize> = p
        .vars
        .iter()
        .enumerate()
        .map(|(i, v)| (v.clone(), i))
        .collect();
    let mut equations = vec![Vec::new(); p.vars.len()];
    for (name, terms) in &doc.equations {
        let i = *index
            .get(name)
            .ok_or_else(|| ModelError::Dimension(format!("equation for unknown `{name}`")))?;
        for t in terms {
            let vars = t
                .vars
                .iter()
                .map(|v| {
                    index
                        .get(v)
                        .copied()
                        .ok_or_else(|| ModelError::Dimension(format!("unknown variable `{v}`")))
                })
                .collect::<Result<Vec<_>, _>>()?;
            equations[i].push(
                MultiAffineTerm::new(t.coefficient, vars).map_err(|j| {
                    ModelError::NotMultiAffine {
                        var: p.vars[j].clone(),
                    }
                })?,
            );
        }
    }
    let field = MultiAffineField::new(equations)?;
    let mut thresholds = Vec::new();
    for v in &p.vars {
        let t = doc.thresholds.get(v).cloned().ok_or_else(|| ModelError::Thresholds {
            var: v.clone(),
            message: "missing thresholds".into(),
        })?;
        check_thresholds(&t).map_err(|message| ModelError::Thresholds {
            var: v.clone(),
            message,
        })?;
        thresholds.push(t);
    }
    let partition = Partition::new(thresholds)?;
    let mut initial = Vec::new();
    if !doc.init.is_empty() {
        let mut spans = Vec::new();
        for (i, v) in p.vars.iter().enumerate() {
            let [lo, hi] = *doc
                .init
                .get(v)
                .ok_or_else(|| ModelError::Initial(format!("missing init for `{v}`")))?;
            spans.push(threshold_span(partition.thresholds(i), lo, hi).ok_or_else(|| {
                ModelError::Initial(format!("[{lo}, {hi}] for `{v}` is not bounded by thresholds"))
            })?);
        }
        initial.extend(box_rects(&spans));
    }
    initial.extend(doc.initial_rects.into_iter().map(RectIndex::new));
    BiochemicalSystem::new(name, p.vars, field, partition, initial)
}
