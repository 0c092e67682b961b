use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::geometry::RectIndex;
use crate::qdaa::io::{entry_token, parse_rect};
use crate::qdaa::{Edge, MarkovChain, Node, Qdaa};

fn label(node: &Node) -> String {
    match node {
        Node::Sink => "sink".into(),
        Node::State(s) => s.to_string(),
    }
}

pub fn write_dot(q: &Qdaa) -> String {
    let mut s = String::from("digraph qdaa {\n  rankdir=LR;\n  node [shape=box, fontname=\"monospace\"];\n");
    for (id, node) in q.nodes.iter().enumerate() {
        let style = if q.initial.contains(&id) {
            ", penwidth=2"
        } else if matches!(node, Node::Sink) {
            ", shape=doublecircle"
        } else {
            ""
        };
        let _ = writeln!(s, "  n{id} [label=\"{}\"{style}];", label(node).replace('"', "\\\""));
    }
    for (src, row) in q.edges.iter().enumerate() {
        for e in row {
            let _ = writeln!(s, "  n{src} -> n{} [label=\"{}\"];", e.target, e.weight);
        }
    }
    s.push_str("}\n");
    s
}

#[derive(Debug, Serialize, Deserialize)]
struct CsvRow {
    src: usize,
    dst: usize,
    weight: f64,
    src_rect: String,
    dst_rect: String,
    src_entry: String,
    dst_entry: String,
}

fn rect_cell(node: &Node) -> String {
    node.rect()
        .map(|r| r.iter().map(|k| k.to_string()).collect::<Vec<_>>().join(","))
        .unwrap_or_default()
}

fn entry_cell(node: &Node) -> String {
    match node {
        Node::Sink => "sink".into(),
        Node::State(s) => entry_token(&s.entry),
    }
}

/// One row per transition. Entry columns let a reader recover the initial
/// states (entry `H`).
pub fn write_csv(q: &Qdaa) -> Result<String, csv::Error> {
    let mut w = csv::Writer::from_writer(Vec::new());
    for (src, row) in q.edges.iter().enumerate() {
        for e in row {
            w.serialize(CsvRow {
                src,
                dst: e.target,
                weight: e.weight,
                src_rect: rect_cell(&q.nodes[src]),
                dst_rect: rect_cell(&q.nodes[e.target]),
                src_entry: entry_cell(&q.nodes[src]),
                dst_entry: entry_cell(&q.nodes[e.target]),
            })?;
        }
    }
    let bytes = w.into_inner().map_err(|e| e.into_error())?;
    Ok(String::from_utf8(bytes).expect("csv output is utf-8"))
}

/// Reads a chain back from [`write_csv`] output.
pub fn read_csv_chain(text: &str) -> Result<MarkovChain, String> {
    let mut r = csv::Reader::from_reader(text.as_bytes());
    let rows: Vec<CsvRow> = r
        .deserialize()
        .collect::<Result<_, _>>()
        .map_err(|e| e.to_string())?;
    let count = rows.iter().map(|r| r.src.max(r.dst) + 1).max().unwrap_or(0);
    let mut edges = vec![Vec::new(); count];
    let mut rects: Vec<Option<RectIndex>> = vec![None; count];
    let mut initial = Vec::new();
    for row in &rows {
        if !(0.0..=1.0).contains(&row.weight) {
            return Err(format!("weight {} outside [0, 1]", row.weight));
        }
        edges[row.src].push(Edge {
            target: row.dst,
            weight: row.weight,
        });
        for (id, cell, entry) in [
            (row.src, &row.src_rect, &row.src_entry),
            (row.dst, &row.dst_rect, &row.dst_entry),
        ] {
            if !cell.is_empty() {
                rects[id] = Some(parse_rect(cell)?);
            }
            if entry == "H" && !initial.contains(&id) {
                initial.push(id);
            }
        }
    }
    initial.sort_unstable();
    Ok(MarkovChain {
        edges,
        initial,
        rects,
    })
}
