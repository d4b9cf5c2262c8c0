//! DIMACS max-flow instance reader and writer.
//!
//! The accepted dialect: `c` comment lines, one `p max <n> <m>` problem
//! line, `n <id> s|t` node descriptors and `a <tail> <head> <cap>` arc
//! lines with 1-based vertex ids.

use crate::error::{Error, Result};
use crate::graph::DirectedMultigraph;
use std::fmt::Write as _;

#[derive(Debug, Clone)]
pub struct MaxFlowInstance {
    pub graph: DirectedMultigraph,
    pub source: usize,
    pub sink: usize,
}

pub fn parse_dimacs(text: &str) -> Result<MaxFlowInstance> {
    let mut n: Option<usize> = None;
    let mut m_declared = 0usize;
    let mut source = None;
    let mut sink = None;
    let mut arcs = Vec::new();
    let mut caps = Vec::new();

    for (lineno, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('c') {
            continue;
        }
        let mut it = line.split_whitespace();
        let tag = it.next().unwrap();
        let err = |msg: &str| Error::Parse(format!("line {}: {}", lineno + 1, msg));
        match tag {
            "p" => {
                if n.is_some() {
                    return Err(err("duplicate problem line"));
                }
                if it.next() != Some("max") {
                    return Err(err("expected `p max n m`"));
                }
                n = Some(
                    it.next()
                        .and_then(|x| x.parse().ok())
                        .ok_or_else(|| err("bad vertex count"))?,
                );
                m_declared = it
                    .next()
                    .and_then(|x| x.parse().ok())
                    .ok_or_else(|| err("bad arc count"))?;
            }
            "n" => {
                let id: usize = it
                    .next()
                    .and_then(|x| x.parse().ok())
                    .ok_or_else(|| err("bad node id"))?;
                if id == 0 || id > n.ok_or_else(|| err("node line before problem line"))? {
                    return Err(err("node id out of range"));
                }
                match it.next() {
                    Some("s") => source = Some(id - 1),
                    Some("t") => sink = Some(id - 1),
                    _ => return Err(err("node descriptor must be s or t")),
                }
            }
            "a" => {
                let nv = n.ok_or_else(|| err("arc line before problem line"))?;
                let u: usize = it
                    .next()
                    .and_then(|x| x.parse().ok())
                    .ok_or_else(|| err("bad arc tail"))?;
                let v: usize = it
                    .next()
                    .and_then(|x| x.parse().ok())
                    .ok_or_else(|| err("bad arc head"))?;
                let cap: u64 = it
                    .next()
                    .and_then(|x| x.parse().ok())
                    .ok_or_else(|| err("bad arc capacity"))?;
                if u == 0 || u > nv || v == 0 || v > nv {
                    return Err(err("arc endpoint out of range"));
                }
                if u == v {
                    return Err(err("self-loop arc"));
                }
                arcs.push((u - 1, v - 1));
                caps.push(cap);
            }
            _ => return Err(err("unknown line tag")),
        }
    }

    let n = n.ok_or_else(|| Error::Parse("missing problem line".into()))?;
    if arcs.len() != m_declared {
        return Err(Error::Parse(format!(
            "arc count mismatch: declared {m_declared}, found {}",
            arcs.len()
        )));
    }
    let source = source.ok_or_else(|| Error::Parse("missing source descriptor".into()))?;
    let sink = sink.ok_or_else(|| Error::Parse("missing sink descriptor".into()))?;
    if source == sink {
        return Err(Error::Parse("source equals sink".into()));
    }
    Ok(MaxFlowInstance {
        graph: DirectedMultigraph::with_capacities(n, arcs, caps),
        source,
        sink,
    })
}

pub fn emit_dimacs(inst: &MaxFlowInstance) -> String {
    let g = &inst.graph;
    let mut s = String::new();
    writeln!(s, "p max {} {}", g.vertex_count(), g.arc_count()).unwrap();
    writeln!(s, "n {} s", inst.source + 1).unwrap();
    writeln!(s, "n {} t", inst.sink + 1).unwrap();
    for (e, &(u, v)) in g.arcs().iter().enumerate() {
        writeln!(s, "a {} {} {}", u + 1, v + 1, g.capacity(e).unwrap_or(1)).unwrap();
    }
    s
}
