use std::fs::File;
use std::io::{self, BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use anyhow::{bail, Context, Result};
use serde::Serialize;
use sparse_rsp::dissim::format_significant;
use sparse_rsp::{FlowField, Graph, Partition};

/// Net flows below this are not drawn, matching a 3-decimal display.
pub const DISPLAY_THRESHOLD: f64 = 5e-4;

/// Opens `path` for writing; `-` is stdout.
pub fn writer(path: &Path, flag: &str) -> Result<Box<dyn Write>> {
    if path == Path::new("-") {
        return Ok(Box::new(io::stdout().lock()));
    }
    let file = File::create(path).with_context(|| format!("{flag} {}", path.display()))?;
    Ok(Box::new(BufWriter::new(file)))
}

/// Pretty JSON followed by a newline.
pub fn write_json(value: &impl Serialize, path: &Path, flag: &str) -> Result<()> {
    let mut out = writer(path, flag)?;
    serde_json::to_writer_pretty(&mut out, value)?;
    writeln!(out)?;
    out.flush()?;
    Ok(())
}

/// Twelve significant digits, always with a decimal point or exponent.
pub fn number(x: f64) -> String {
    let s = format_significant(x);
    if s.contains(['.', 'e', 'E', 'N', 'i']) {
        s
    } else {
        format!("{s}.0")
    }
}

pub fn number_list(values: &[f64]) -> String {
    let items: Vec<String> = values.iter().map(|&v| number(v)).collect();
    format!("[{}]", items.join(", "))
}

fn quoted(name: &str) -> String {
    format!("\"{}\"", name.replace('\\', "\\\\").replace('"', "\\\""))
}

/// Graphviz digraph of the positive net flows. Nodes touching no drawn edge are grey.
pub fn write_flow_dot(graph: &Graph, flow: &FlowField, mut out: impl Write) -> io::Result<()> {
    let drawn: Vec<_> = flow
        .net_flows(graph)
        .into_iter()
        .filter(|f| f.value >= DISPLAY_THRESHOLD)
        .collect();
    let mut used = vec![false; graph.node_count()];
    for f in &drawn {
        used[f.src] = true;
        used[f.dst] = true;
    }
    used[flow.source] = true;
    used[flow.target] = true;

    writeln!(out, "digraph flow {{")?;
    writeln!(out, "  rankdir=LR;")?;
    writeln!(out, "  node [shape=circle];")?;
    for (i, name) in graph.names().iter().enumerate() {
        let style = match i {
            _ if i == flow.source => " [style=bold]",
            _ if i == flow.target => " [shape=doublecircle]",
            _ if !used[i] => " [color=gray, fontcolor=gray]",
            _ => "",
        };
        writeln!(out, "  {}{style};", quoted(name))?;
    }
    for f in &drawn {
        writeln!(
            out,
            "  {} -> {} [label=\"{:.3}\"];",
            quoted(graph.name(f.src)),
            quoted(graph.name(f.dst)),
            f.value
        )?;
    }
    writeln!(out, "}}")
}

/// Reads `node label` rows and returns the partition in node index order.
pub fn read_labels(graph: &Graph, path: &Path) -> Result<Partition> {
    let file = File::open(path).with_context(|| format!("--labels {}", path.display()))?;
    let mut labels: Vec<Option<String>> = vec![None; graph.node_count()];
    for (number, line) in BufReader::new(file).lines().enumerate() {
        let line = line.with_context(|| format!("--labels {}", path.display()))?;
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let context = || format!("--labels {}: line {}", path.display(), number + 1);
        let mut fields = line.split_whitespace();
        let (Some(node), Some(label), None) = (fields.next(), fields.next(), fields.next()) else {
            bail!("{}: expected `node label`", context());
        };
        let index = graph.node_index(node).with_context(context)?;
        if labels[index].replace(label.to_string()).is_some() {
            bail!("{}: node `{node}` labelled twice", context());
        }
    }
    let labels = labels
        .into_iter()
        .enumerate()
        .map(|(i, l)| l.with_context(|| format!("--labels {}: node `{}` has no label", path.display(), graph.name(i))))
        .collect::<Result<Vec<_>>>()?;
    Ok(Partition::from_labels(&labels))
}
