//! GraphML export of one date's signed network.
//!
//! Nodes carry `symbol`, `market_cap` and (when known) `contribution`;
//! edges are the nonzero adjacency entries with an integer `sign`.

use std::fmt::Write;

use crate::error::{Error, Result};
use crate::io::fmt_f64;
use crate::market_data::DATE_FORMAT;
use crate::network::SignedAdjacency;

fn escape(s: &str) -> String {
    let mut out = String::with_capacity(s.len());
    for c in s.chars() {
        match c {
            '&' => out.push_str("&amp;"),
            '<' => out.push_str("&lt;"),
            '>' => out.push_str("&gt;"),
            '"' => out.push_str("&quot;"),
            '\'' => out.push_str("&apos;"),
            c => out.push(c),
        }
    }
    out
}

pub fn to_graphml(
    symbols: &[String],
    caps: &[f64],
    contributions: Option<&[f64]>,
    adj: &SignedAdjacency,
) -> Result<String> {
    let n = symbols.len();
    if caps.len() != n || adj.n_assets() != n || contributions.is_some_and(|c| c.len() != n) {
        return Err(Error::Dimension(format!(
            "graphml export for {n} symbols got {} caps and a {m}x{m} adjacency",
            caps.len(),
            m = adj.n_assets()
        )));
    }

    let mut out = String::new();
    let _ = writeln!(out, r#"<?xml version="1.0" encoding="UTF-8"?>"#);
    let _ = writeln!(
        out,
        r#"<graphml xmlns="http://graphml.graphdrawing.org/xmlns" xmlns:xsi="http://www.w3.org/2001/XMLSchema-instance" xsi:schemaLocation="http://graphml.graphdrawing.org/xmlns http://graphml.graphdrawing.org/xmlns/1.0/graphml.xsd">"#
    );
    let _ = writeln!(out, r#"  <key id="date" for="graph" attr.name="date" attr.type="string"/>"#);
    let _ = writeln!(out, r#"  <key id="symbol" for="node" attr.name="symbol" attr.type="string"/>"#);
    let _ = writeln!(out, r#"  <key id="market_cap" for="node" attr.name="market_cap" attr.type="double"/>"#);
    if contributions.is_some() {
        let _ = writeln!(
            out,
            r#"  <key id="contribution" for="node" attr.name="contribution" attr.type="double"/>"#
        );
    }
    let _ = writeln!(out, r#"  <key id="sign" for="edge" attr.name="sign" attr.type="int"/>"#);
    let _ = writeln!(out, r#"  <graph id="G" edgedefault="undirected">"#);
    let _ = writeln!(
        out,
        r#"    <data key="date">{}</data>"#,
        adj.date.format(DATE_FORMAT)
    );
    for (i, s) in symbols.iter().enumerate() {
        let _ = writeln!(out, r#"    <node id="n{i}">"#);
        let _ = writeln!(out, r#"      <data key="symbol">{}</data>"#, escape(s));
        let _ = writeln!(out, r#"      <data key="market_cap">{}</data>"#, fmt_f64(caps[i]));
        if let Some(c) = contributions {
            let _ = writeln!(out, r#"      <data key="contribution">{}</data>"#, fmt_f64(c[i]));
        }
        let _ = writeln!(out, "    </node>");
    }
    for (k, (i, j, v)) in adj.edges().enumerate() {
        let _ = writeln!(
            out,
            r#"    <edge id="e{k}" source="n{i}" target="n{j}"><data key="sign">{v}</data></edge>"#
        );
    }
    let _ = writeln!(out, "  </graph>");
    let _ = writeln!(out, "</graphml>");
    Ok(out)
}
