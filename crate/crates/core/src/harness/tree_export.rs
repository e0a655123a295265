use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use crate::error::{Error, Result};
use crate::mcts::TreeSnapshot;

/// Graphviz rendering of a search tree. Nodes appear in creation order.
pub fn render_dot(tree: &TreeSnapshot) -> String {
    let mut out = String::from("digraph search {\n  node [shape=box, fontname=\"monospace\"];\n");
    for node in &tree.nodes {
        let token = node.token.map_or_else(|| "root".to_string(), |t| t.to_string());
        let mark = if node.terminal { ", style=bold" } else { "" };
        let _ = writeln!(
            out,
            "  n{} [label=\"{}\\nN={} Q={:.4}\"{}];",
            node.index, token, node.visits, node.value, mark
        );
    }
    for node in &tree.nodes {
        if let Some(parent) = node.parent {
            let _ = writeln!(
                out,
                "  n{} -> n{} [label=\"{:.4}\"];",
                parent,
                node.index,
                node.prior.unwrap_or(0.0)
            );
        }
    }
    out.push_str("}\n");
    out
}

pub fn export_tree(tree: &TreeSnapshot, path: &Path) -> Result<()> {
    fs::write(path, render_dot(tree)).map_err(|e| Error::io(path, e))
}
