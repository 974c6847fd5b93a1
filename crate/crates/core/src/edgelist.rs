//! Plain-text edge lists.
//!
//! ```text
//! n m
//! [complete]
//! u v sign [weight]
//! ...
//! ```
//!
//! `sign` is `+` or `-`; a missing weight means 1. When the optional
//! `complete` line is present the graph is complete and unweighted: listed
//! pairs take the given sign, every unlisted pair is a negative unit edge.
//! Blank lines and lines starting with `#` are ignored. A pair may appear
//! once per sign; listing both signs yields a graph with parallel edges.

use std::fmt::Write as _;
use std::io::{BufRead, Write};

use crate::error::{Error, Result};
use crate::graph::{pair_index, pairs, Edge, PairWeight, Sign, SignedGraph};

fn perr(line: usize, msg: impl Into<String>) -> Error {
    Error::Parse { line, msg: msg.into() }
}

pub fn parse_edge_list(text: &str) -> Result<SignedGraph> {
    let mut lines = text
        .lines()
        .enumerate()
        .map(|(i, l)| (i + 1, l.trim()))
        .filter(|(_, l)| !l.is_empty() && !l.starts_with('#'));

    let (hline, header) = lines.next().ok_or_else(|| perr(1, "empty input"))?;
    let mut head = header.split_whitespace();
    let n: usize = head
        .next()
        .and_then(|t| t.parse().ok())
        .ok_or_else(|| perr(hline, "header must be `n m`"))?;
    let m: usize = head
        .next()
        .and_then(|t| t.parse().ok())
        .ok_or_else(|| perr(hline, "header must be `n m`"))?;
    if head.next().is_some() {
        return Err(perr(hline, "trailing tokens in header"));
    }

    let mut complete = false;
    let mut edges = Vec::with_capacity(m);
    let mut first = true;
    for (lno, line) in lines {
        if first && line.eq_ignore_ascii_case("complete") {
            complete = true;
            first = false;
            continue;
        }
        first = false;
        let toks: Vec<&str> = line.split_whitespace().collect();
        if toks.len() != 3 && toks.len() != 4 {
            return Err(perr(lno, "expected `u v sign [weight]`"));
        }
        let u: usize = toks[0].parse().map_err(|_| perr(lno, format!("bad vertex `{}`", toks[0])))?;
        let v: usize = toks[1].parse().map_err(|_| perr(lno, format!("bad vertex `{}`", toks[1])))?;
        let sign = match toks[2] {
            "+" | "+1" => Sign::Pos,
            "-" | "-1" => Sign::Neg,
            s => return Err(perr(lno, format!("bad sign `{s}`"))),
        };
        let weight = match toks.get(3) {
            Some(t) => t.parse::<f64>().map_err(|_| perr(lno, format!("bad weight `{t}`")))?,
            None => 1.0,
        };
        if u >= n || v >= n || u == v {
            return Err(perr(lno, format!("pair ({u}, {v}) invalid for n = {n}")));
        }
        if !weight.is_finite() || weight < 0.0 {
            return Err(perr(lno, format!("weight {weight} must be finite and non-negative")));
        }
        edges.push(Edge::new(u, v, sign, weight));
    }
    if edges.len() != m {
        return Err(perr(hline, format!("header declares {m} edges, found {}", edges.len())));
    }

    if complete {
        let mut dense = vec![None; pairs(n).count()];
        for e in &edges {
            if e.weight != 1.0 {
                return Err(Error::Parse {
                    line: hline,
                    msg: "a `complete` graph must be unweighted".into(),
                });
            }
            let i = pair_index(n, e.u, e.v);
            if dense[i].is_some() {
                return Err(perr(hline, format!("pair ({}, {}) listed twice", e.u, e.v)));
            }
            dense[i] = Some(e.sign);
        }
        let w = dense
            .into_iter()
            .map(|s| PairWeight::of(s.unwrap_or(Sign::Neg), 1.0))
            .collect();
        return SignedGraph::from_pair_weights(n, w, false);
    }

    let parallel = has_parallel(&edges);
    SignedGraph::from_edges(n, edges, parallel).map_err(|e| match e {
        Error::Contract(msg) => perr(hline, msg),
        other => other,
    })
}

fn has_parallel(edges: &[Edge]) -> bool {
    let mut seen = std::collections::HashMap::new();
    for e in edges {
        let key = (e.u.min(e.v), e.u.max(e.v));
        if let Some(&s) = seen.get(&key) {
            if s != e.sign {
                return true;
            }
        } else {
            seen.insert(key, e.sign);
        }
    }
    false
}

pub fn read_edge_list(reader: impl BufRead) -> Result<SignedGraph> {
    let mut text = String::new();
    for line in reader.lines() {
        text.push_str(&line?);
        text.push('\n');
    }
    parse_edge_list(&text)
}

/// Serializes `g`. Unit weights use the three-token shorthand; other weights
/// are printed with Rust's shortest round-trip formatting.
pub fn format_edge_list(g: &SignedGraph) -> String {
    let edges = g.edges();
    let mut out = String::new();
    let _ = writeln!(out, "{} {}", g.n(), edges.len());
    for e in edges {
        if e.weight == 1.0 {
            let _ = writeln!(out, "{} {} {}", e.u, e.v, e.sign);
        } else {
            let _ = writeln!(out, "{} {} {} {}", e.u, e.v, e.sign, e.weight);
        }
    }
    out
}

pub fn write_edge_list(g: &SignedGraph, mut w: impl Write) -> Result<()> {
    w.write_all(format_edge_list(g).as_bytes())?;
    Ok(())
}
