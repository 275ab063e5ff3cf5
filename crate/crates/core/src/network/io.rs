//! Network text format:
//!
//! ```text
//! nn ne c_p avn
//! x y z            (nn lines, one to three coordinates)
//! a b [length]     (ne lines, length defaults to the endpoint distance)
//! terminals: i j k ...
//! ```
//!
//! Blank lines and `#` comments are ignored.

use std::fmt::Write as _;
use std::path::Path;
use std::str::FromStr;

use super::{ConductionNetwork, NetworkError};
use crate::mesh::MeshError;

fn err(path: &Path, line: usize, message: impl Into<String>) -> NetworkError {
    NetworkError::Parse {
        path: path.to_path_buf(),
        line,
        message: message.into(),
    }
}

fn tok<T: FromStr>(path: &Path, line: usize, t: &str, what: &str) -> Result<T, NetworkError> {
    t.parse()
        .map_err(|_| err(path, line, format!("cannot parse {what} from `{t}`")))
}

pub fn load_network(path: &Path) -> Result<ConductionNetwork, NetworkError> {
    let text = std::fs::read_to_string(path).map_err(|source| {
        NetworkError::Io(MeshError::Io {
            path: path.to_path_buf(),
            source,
        })
    })?;
    parse_network(&text, path)
}

pub fn parse_network(text: &str, path: &Path) -> Result<ConductionNetwork, NetworkError> {
    let mut lines = text
        .lines()
        .enumerate()
        .map(|(i, l)| (i + 1, l.trim()))
        .filter(|(_, l)| !l.is_empty() && !l.starts_with('#'));
    let (hl, header) = lines.next().ok_or_else(|| err(path, 1, "empty file"))?;
    let h: Vec<&str> = header.split_whitespace().collect();
    if h.len() != 4 {
        return Err(err(path, hl, "header must be `nn ne c_p avn`"));
    }
    let nn: usize = tok(path, hl, h[0], "node count")?;
    let ne: usize = tok(path, hl, h[1], "edge count")?;
    let c_p: f64 = tok(path, hl, h[2], "conduction velocity")?;
    let avn: usize = tok(path, hl, h[3], "AV node index")?;
    let mut nodes = Vec::with_capacity(nn);
    for k in 0..nn {
        let (ln, l) = lines
            .next()
            .ok_or_else(|| err(path, hl, format!("missing coordinates of node {k}")))?;
        let toks: Vec<&str> = l.split_whitespace().collect();
        if toks.is_empty() || toks.len() > 3 {
            return Err(err(path, ln, "expected one to three coordinates"));
        }
        let mut p = [0.0; 3];
        for (x, t) in p.iter_mut().zip(&toks) {
            *x = tok(path, ln, t, "coordinate")?;
        }
        nodes.push(p);
    }
    let mut edges = Vec::with_capacity(ne);
    for k in 0..ne {
        let (ln, l) = lines
            .next()
            .ok_or_else(|| err(path, hl, format!("missing edge {k}")))?;
        let toks: Vec<&str> = l.split_whitespace().collect();
        if toks.len() != 2 && toks.len() != 3 {
            return Err(err(path, ln, "expected `a b [length]`"));
        }
        let a = tok(path, ln, toks[0], "node index")?;
        let b = tok(path, ln, toks[1], "node index")?;
        let len = match toks.get(2) {
            Some(t) => Some(tok(path, ln, t, "edge length")?),
            None => None,
        };
        edges.push((a, b, len));
    }
    let mut terminals = Vec::new();
    if let Some((ln, l)) = lines.next() {
        let rest = l
            .strip_prefix("terminals:")
            .ok_or_else(|| err(path, ln, "expected `terminals:` line"))?;
        for t in rest.split_whitespace() {
            terminals.push(tok(path, ln, t, "terminal index")?);
        }
        if let Some((ln, _)) = lines.next() {
            return Err(err(path, ln, "unexpected trailing content"));
        }
    }
    ConductionNetwork::new(nodes, edges, c_p, avn, terminals).map_err(|e| NetworkError::Invalid {
        path: path.to_path_buf(),
        source: Box::new(e),
    })
}

/// Explicit lengths are written only for edges that carry one.
pub fn write_network(net: &ConductionNetwork) -> String {
    let mut out = String::new();
    let _ = writeln!(
        out,
        "{} {} {} {}",
        net.num_nodes(),
        net.num_edges(),
        net.conduction_velocity(),
        net.avn()
    );
    for p in net.nodes() {
        let _ = writeln!(out, "{} {} {}", p[0], p[1], p[2]);
    }
    for e in net.edges() {
        if e.explicit_length {
            let _ = writeln!(out, "{} {} {}", e.a, e.b, e.length);
        } else {
            let _ = writeln!(out, "{} {}", e.a, e.b);
        }
    }
    let t: Vec<String> = net.terminals().iter().map(|t| t.to_string()).collect();
    let _ = writeln!(out, "terminals: {}", t.join(" "));
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::network::{build_synthetic_tree, TreeSpec};

    #[test]
    fn parses_explicit_and_geometric_lengths() {
        let text = "# path\n3 2 4 0\n0\n0.004\n0.008\n0 1\n1 2 0.01\nterminals: 2\n";
        let net = parse_network(text, Path::new("n.txt")).unwrap();
        assert_eq!(net.num_nodes(), 3);
        assert!((net.edges()[0].length - 0.004).abs() < 1e-15);
        assert!(net.edges()[1].explicit_length);
        assert_eq!(net.terminals(), &[2]);
    }

    #[test]
    fn reports_line_of_bad_edge() {
        let text = "2 1 4 0\n0\n1\n0 x\n";
        assert!(matches!(
            parse_network(text, Path::new("n.txt")),
            Err(NetworkError::Parse { line: 4, .. })
        ));
    }

    #[test]
    fn written_tree_reads_back() {
        let net = build_synthetic_tree(&TreeSpec {
            jitter: 0.1,
            seed: 3,
            ..TreeSpec::default()
        })
        .unwrap();
        let back = parse_network(&write_network(&net), Path::new("t.txt")).unwrap();
        assert_eq!(back.nodes(), net.nodes());
        assert_eq!(back.terminals(), net.terminals());
        for (a, b) in back.edges().iter().zip(net.edges()) {
            assert!((a.length - b.length).abs() <= 1e-15);
        }
    }
}
