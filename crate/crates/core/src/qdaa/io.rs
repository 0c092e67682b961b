//! Line-oriented text format for automata.
//!
//! ```text
//! qdaa-automaton 1
//! model <name>
//! hash <sha256 of the canonical model text>
//! config kappa=<k> sims=<m> sampling=<per-tile|per-state> seed=<s> backward=<bool> tmax=<t> step=<auto|h> boundary-tol=<e> bisect=<i>
//! var <name> <thresholds...>            one per variable, in order
//! diagnostics simulations=.. discarded=.. empty-tiles=.. diverged=.. dropped=.. empty-states=.. unconfirmed=..
//! states <count>
//! <id> <init|-> <rect> <entry>         rect is "i,j,..."; or "<id> sink"
//! transitions <count>
//! <src> <dst> <weight>
//! end
//! ```
//!
//! Entries are `H` (whole rectangle), `-` (empty) or `F<axis><L|U>[t,...]`
//! listing the tile indices of the entry facet. Weights use the shortest
//! representation that parses back to the same `f64`.

use std::fmt::Write as _;
use std::path::Path;

use fixedbitset::FixedBitSet;
use thiserror::Error;

use super::{Diagnostics, Edge, EntrySet, Node, Provenance, Qdaa, QdaaState, RunConfig, Sampling};
use crate::geometry::{RectIndex, Side};
use crate::model::Partition;
use crate::simulate::IntegratorConfig;

pub const FORMAT_HEADER: &str = "qdaa-automaton 1";

#[derive(Debug, Error)]
pub enum FormatError {
    #[error("line {line}: {message}")]
    Corrupt { line: usize, message: String },
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

fn rect_token(r: &RectIndex) -> String {
    r.iter().map(|k| k.to_string()).collect::<Vec<_>>().join(",")
}

pub fn entry_token(e: &EntrySet) -> String {
    match e {
        EntrySet::Empty => "-".into(),
        EntrySet::WholeRectangle => "H".into(),
        EntrySet::FacetTiles { axis, side, tiles } => {
            let s = if *side == Side::Lower { 'L' } else { 'U' };
            let t: Vec<String> = tiles.ones().map(|i| i.to_string()).collect();
            format!("F{axis}{s}[{}]", t.join(","))
        }
    }
}

pub fn parse_entry(tok: &str, tile_slots: usize) -> Result<EntrySet, String> {
    match tok {
        "-" => return Ok(EntrySet::Empty),
        "H" => return Ok(EntrySet::WholeRectangle),
        _ => {}
    }
    let rest = tok.strip_prefix('F').ok_or_else(|| format!("bad entry {tok:?}"))?;
    let open = rest.find('[').ok_or_else(|| format!("bad entry {tok:?}"))?;
    let body = rest[open + 1..]
        .strip_suffix(']')
        .ok_or_else(|| format!("bad entry {tok:?}"))?;
    let head = &rest[..open];
    let (axis, side) = head.split_at(head.len().saturating_sub(1));
    let side = match side {
        "L" => Side::Lower,
        "U" => Side::Upper,
        _ => return Err(format!("bad facet side in {tok:?}")),
    };
    let axis: usize = axis.parse().map_err(|_| format!("bad axis in {tok:?}"))?;
    let mut tiles = FixedBitSet::with_capacity(tile_slots);
    for t in body.split(',').filter(|s| !s.is_empty()) {
        let i: usize = t.parse().map_err(|_| format!("bad tile {t:?}"))?;
        if i >= tile_slots {
            return Err(format!("tile {i} out of range"));
        }
        tiles.insert(i);
    }
    if tiles.count_ones(..) == 0 {
        return Err(format!("entry {tok:?} has no tiles"));
    }
    Ok(EntrySet::FacetTiles { axis, side, tiles })
}

pub fn parse_rect(tok: &str) -> Result<RectIndex, String> {
    tok.split(',')
        .map(|s| s.parse::<usize>().map_err(|_| format!("bad rectangle {tok:?}")))
        .collect::<Result<Vec<_>, _>>()
        .map(RectIndex::new)
}

pub fn to_text(q: &Qdaa) -> String {
    let p = &q.provenance;
    let c = &p.config;
    let mut s = String::new();
    let _ = writeln!(s, "{FORMAT_HEADER}");
    let _ = writeln!(s, "model {}", p.model_name);
    let _ = writeln!(s, "hash {}", p.model_hash);
    let step = c.integrator.step.map_or("auto".to_string(), |h| h.to_string());
    let _ = writeln!(
        s,
        "config kappa={} sims={} sampling={} seed={} backward={} tmax={} step={} boundary-tol={} bisect={}",
        c.kappa,
        c.sims,
        c.sampling.name(),
        c.seed,
        c.backward_refine,
        c.integrator.t_max,
        step,
        c.integrator.boundary_tol,
        c.integrator.bisect_iters
    );
    for (i, name) in p.var_names.iter().enumerate() {
        let t: Vec<String> = p.partition.thresholds(i).iter().map(|v| v.to_string()).collect();
        let _ = writeln!(s, "var {name} {}", t.join(" "));
    }
    let d = &q.diagnostics;
    let _ = writeln!(
        s,
        "diagnostics simulations={} discarded={} empty-tiles={} diverged={} dropped={} empty-states={} unconfirmed={}",
        d.simulations, d.discarded, d.empty_tiles, d.diverged, d.dropped, d.empty_states, d.unconfirmed
    );
    let _ = writeln!(s, "states {}", q.nodes.len());
    for (id, node) in q.nodes.iter().enumerate() {
        match node {
            Node::Sink => {
                let _ = writeln!(s, "{id} sink");
            }
            Node::State(st) => {
                let flag = if q.initial.contains(&id) { "init" } else { "-" };
                let _ = writeln!(s, "{id} {flag} {} {}", rect_token(&st.rect), entry_token(&st.entry));
            }
        }
    }
    let _ = writeln!(s, "transitions {}", q.transition_count());
    for (src, row) in q.edges.iter().enumerate() {
        for e in row {
            let _ = writeln!(s, "{src} {} {}", e.target, e.weight);
        }
    }
    s.push_str("end\n");
    s
}

pub fn save(q: &Qdaa, path: &Path) -> Result<(), FormatError> {
    std::fs::write(path, to_text(q))?;
    Ok(())
}

pub fn load(path: &Path) -> Result<Qdaa, FormatError> {
    from_text(&std::fs::read_to_string(path)?)
}

struct Lines<'a> {
    it: std::iter::Enumerate<std::str::Lines<'a>>,
    line: usize,
}

impl<'a> Lines<'a> {
    fn err(&self, message: impl Into<String>) -> FormatError {
        FormatError::Corrupt {
            line: self.line,
            message: message.into(),
        }
    }

    fn next(&mut self) -> Result<&'a str, FormatError> {
        let (i, l) = self.it.next().ok_or(FormatError::Corrupt {
            line: self.line + 1,
            message: "unexpected end of file".into(),
        })?;
        self.line = i + 1;
        Ok(l.trim_end())
    }

    fn keyed(&mut self, key: &str) -> Result<&'a str, FormatError> {
        let l = self.next()?;
        l.strip_prefix(key)
            .and_then(|r| r.strip_prefix(' '))
            .ok_or_else(|| self.err(format!("expected `{key}`")))
    }
}

fn kv<'a>(fields: &[(&'a str, &'a str)], key: &str) -> Option<&'a str> {
    fields.iter().find(|(k, _)| *k == key).map(|(_, v)| *v)
}

fn num<T: std::str::FromStr>(l: &Lines, fields: &[(&str, &str)], key: &str) -> Result<T, FormatError> {
    kv(fields, key)
        .and_then(|v| v.parse().ok())
        .ok_or_else(|| l.err(format!("missing or bad `{key}`")))
}

fn pairs(s: &str) -> Vec<(&str, &str)> {
    s.split_whitespace().filter_map(|f| f.split_once('=')).collect()
}

pub fn from_text(text: &str) -> Result<Qdaa, FormatError> {
    let mut l = Lines {
        it: text.lines().enumerate(),
        line: 0,
    };
    if l.next()? != FORMAT_HEADER {
        return Err(l.err(format!("expected header `{FORMAT_HEADER}`")));
    }
    let model_name = l.keyed("model")?.to_string();
    let model_hash = l.keyed("hash")?.to_string();
    let cf = pairs(l.keyed("config")?);
    let step = match kv(&cf, "step") {
        Some("auto") => None,
        Some(v) => Some(v.parse().map_err(|_| l.err("bad `step`"))?),
        None => return Err(l.err("missing `step`")),
    };
    let config = RunConfig {
        kappa: num(&l, &cf, "kappa")?,
        sims: num(&l, &cf, "sims")?,
        sampling: kv(&cf, "sampling")
            .and_then(Sampling::from_name)
            .ok_or_else(|| l.err("missing or bad `sampling`"))?,
        seed: num(&l, &cf, "seed")?,
        backward_refine: num(&l, &cf, "backward")?,
        integrator: IntegratorConfig {
            step,
            t_max: num(&l, &cf, "tmax")?,
            boundary_tol: num(&l, &cf, "boundary-tol")?,
            bisect_iters: num(&l, &cf, "bisect")?,
        },
    };
    config.validate().map_err(|e| l.err(e.to_string()))?;

    let mut var_names = Vec::new();
    let mut thresholds = Vec::new();
    let mut line = l.next()?;
    while let Some(rest) = line.strip_prefix("var ") {
        let mut it = rest.split_whitespace();
        let name = it.next().ok_or_else(|| l.err("variable without name"))?;
        let t = it
            .map(|v| v.parse::<f64>())
            .collect::<Result<Vec<_>, _>>()
            .map_err(|_| l.err("bad threshold"))?;
        var_names.push(name.to_string());
        thresholds.push(t);
        line = l.next()?;
    }
    if var_names.is_empty() {
        return Err(l.err("no variables"));
    }
    let partition = Partition::new(thresholds).map_err(|e| l.err(e.to_string()))?;
    let n = partition.dim();
    let slots = config.kappa.pow(n as u32 - 1);

    let df = pairs(line.strip_prefix("diagnostics ").ok_or_else(|| l.err("expected `diagnostics`"))?);
    let diagnostics = Diagnostics {
        simulations: num(&l, &df, "simulations")?,
        discarded: num(&l, &df, "discarded")?,
        empty_tiles: num(&l, &df, "empty-tiles")?,
        diverged: num(&l, &df, "diverged")?,
        dropped: num(&l, &df, "dropped")?,
        empty_states: num(&l, &df, "empty-states")?,
        unconfirmed: num(&l, &df, "unconfirmed")?,
    };

    let count: usize = l.keyed("states")?.parse().map_err(|_| l.err("bad state count"))?;
    let mut nodes = Vec::with_capacity(count);
    let mut initial = Vec::new();
    let mut sink = None;
    for id in 0..count {
        let toks: Vec<&str> = l.next()?.split_whitespace().collect();
        if toks.first().and_then(|t| t.parse::<usize>().ok()) != Some(id) {
            return Err(l.err(format!("expected state {id}")));
        }
        match toks[1..] {
            ["sink"] => {
                if sink.replace(id).is_some() {
                    return Err(l.err("second sink"));
                }
                nodes.push(Node::Sink);
            }
            [flag, rect, entry] => {
                let rect = parse_rect(rect).map_err(|m| l.err(m))?;
                if rect.len() != n || !partition.contains_rect(&rect) {
                    return Err(l.err("rectangle outside the partition"));
                }
                let entry = parse_entry(entry, slots).map_err(|m| l.err(m))?;
                if matches!(&entry, EntrySet::FacetTiles { axis, .. } if *axis >= n) {
                    return Err(l.err("entry axis out of range"));
                }
                match flag {
                    "init" => initial.push(id),
                    "-" => {}
                    _ => return Err(l.err(format!("bad flag {flag:?}"))),
                }
                nodes.push(Node::State(QdaaState { rect, entry }));
            }
            _ => return Err(l.err("malformed state line")),
        }
    }

    let tcount: usize = l.keyed("transitions")?.parse().map_err(|_| l.err("bad transition count"))?;
    let mut edges = vec![Vec::new(); count];
    for _ in 0..tcount {
        let toks: Vec<&str> = l.next()?.split_whitespace().collect();
        let [src, dst, w] = toks[..] else {
            return Err(l.err("malformed transition line"));
        };
        let (src, dst, weight) = match (src.parse::<usize>(), dst.parse::<usize>(), w.parse::<f64>()) {
            (Ok(s), Ok(d), Ok(w)) if s < count && d < count && (0.0..=1.0).contains(&w) => (s, d, w),
            _ => return Err(l.err("bad transition")),
        };
        edges[src].push(Edge { target: dst, weight });
    }
    if l.next()? != "end" {
        return Err(l.err("expected `end`"));
    }

    let q = Qdaa {
        nodes,
        edges,
        initial,
        sink,
        provenance: Provenance {
            model_name,
            model_hash,
            var_names,
            partition,
            config,
        },
        diagnostics,
    };
    q.check_invariants().map_err(|e| l.err(e.to_string()))?;
    Ok(q)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::parse_model;
    use crate::qdaa::build_reachable;

    fn built() -> Qdaa {
        let s = parse_model(
            "model osc\nvar x\nvar y\neq x = 5*x - x*y\neq y = 0.4*x*y - 5.4*y\n\
             thresholds x = 12 14 16 18 20 22 24\nthresholds y = 2 3 4 5 6 7 8\ninitrect 4 3\n",
        )
        .unwrap();
        let cfg = RunConfig {
            kappa: 3,
            sims: 5,
            seed: 9,
            ..Default::default()
        };
        build_reachable(&s, &cfg).unwrap()
    }

    #[test]
    fn round_trip() {
        let q = built();
        let text = to_text(&q);
        let back = from_text(&text).unwrap();
        assert_eq!(back, q);
        assert_eq!(to_text(&back), text);
    }

    #[test]
    fn entry_tokens() {
        let mut b = FixedBitSet::with_capacity(9);
        b.insert(0);
        b.insert(7);
        let e = EntrySet::FacetTiles {
            axis: 2,
            side: Side::Upper,
            tiles: b,
        };
        assert_eq!(entry_token(&e), "F2U[0,7]");
        assert_eq!(parse_entry("F2U[0,7]", 9).unwrap(), e);
        assert_eq!(parse_entry("H", 9).unwrap(), EntrySet::WholeRectangle);
        assert!(parse_entry("F2U[]", 9).is_err());
        assert!(parse_entry("F2U[9]", 9).is_err());
        assert!(parse_entry("F2X[1]", 9).is_err());
    }

    #[test]
    fn corrupt_files_are_rejected() {
        let text = to_text(&built());
        assert!(matches!(from_text("nonsense"), Err(FormatError::Corrupt { line: 1, .. })));
        let truncated: String = text.lines().take(12).map(|l| format!("{l}\n")).collect();
        assert!(from_text(&truncated).is_err());
        // Break stochasticity of the first row.
        let lines: Vec<&str> = text.lines().collect();
        let t = lines.iter().position(|l| l.starts_with("transitions")).unwrap();
        let mut broken: Vec<String> = lines.iter().map(|s| s.to_string()).collect();
        let toks: Vec<&str> = lines[t + 1].split(' ').collect();
        broken[t + 1] = format!("{} {} 0.123", toks[0], toks[1]);
        assert!(from_text(&(broken.join("\n") + "\n")).is_err());
    }
}
