//! Newick reading and canonical writing.

use crate::error::{Error, Result};

use super::tree::{clamp_length, Edge, Phylogeny, DEFAULT_BL};

#[derive(Debug)]
struct RawNode {
    label: Option<String>,
    length: Option<f64>,
    children: Vec<RawNode>,
}

struct Parser<'a> {
    src: &'a [u8],
    pos: usize,
}

impl<'a> Parser<'a> {
    fn err<T>(&self, message: impl Into<String>) -> Result<T> {
        Err(Error::Newick { position: self.pos, message: message.into() })
    }

    fn skip_ws(&mut self) -> Result<()> {
        loop {
            match self.src.get(self.pos) {
                Some(b) if b.is_ascii_whitespace() => self.pos += 1,
                Some(b'[') => {
                    let start = self.pos;
                    match self.src[self.pos..].iter().position(|&b| b == b']') {
                        Some(off) => self.pos += off + 1,
                        None => {
                            self.pos = start;
                            return self.err("unterminated comment");
                        }
                    }
                }
                _ => return Ok(()),
            }
        }
    }

    fn peek(&mut self) -> Result<Option<u8>> {
        self.skip_ws()?;
        Ok(self.src.get(self.pos).copied())
    }

    fn subtree(&mut self) -> Result<RawNode> {
        let mut children = Vec::new();
        if self.peek()? == Some(b'(') {
            self.pos += 1;
            loop {
                children.push(self.subtree()?);
                match self.peek()? {
                    Some(b',') => self.pos += 1,
                    Some(b')') => {
                        self.pos += 1;
                        break;
                    }
                    Some(c) => return self.err(format!("expected ',' or ')', found {:?}", c as char)),
                    None => return self.err("unexpected end of input"),
                }
            }
        }
        let label = self.label()?;
        let mut length = None;
        if self.peek()? == Some(b':') {
            self.pos += 1;
            self.skip_ws()?;
            let start = self.pos;
            while let Some(&b) = self.src.get(self.pos) {
                if b.is_ascii_digit() || matches!(b, b'.' | b'-' | b'+' | b'e' | b'E') {
                    self.pos += 1;
                } else {
                    break;
                }
            }
            let text = std::str::from_utf8(&self.src[start..self.pos]).unwrap_or("");
            match text.parse::<f64>() {
                Ok(v) if v.is_finite() => length = Some(v),
                _ => {
                    self.pos = start;
                    return self.err(format!("invalid branch length {text:?}"));
                }
            }
        }
        if children.is_empty() && label.is_none() {
            return self.err("leaf without label");
        }
        Ok(RawNode { label, length, children })
    }

    fn label(&mut self) -> Result<Option<String>> {
        match self.peek()? {
            Some(b'\'') => {
                self.pos += 1;
                let mut out = Vec::new();
                loop {
                    match self.src.get(self.pos) {
                        None => return self.err("unterminated quoted label"),
                        Some(b'\'') if self.src.get(self.pos + 1) == Some(&b'\'') => {
                            out.push(b'\'');
                            self.pos += 2;
                        }
                        Some(b'\'') => {
                            self.pos += 1;
                            break;
                        }
                        Some(&b) => {
                            out.push(b);
                            self.pos += 1;
                        }
                    }
                }
                Ok(Some(String::from_utf8_lossy(&out).into_owned()))
            }
            _ => {
                let start = self.pos;
                while let Some(&b) = self.src.get(self.pos) {
                    if matches!(b, b'(' | b')' | b',' | b':' | b';' | b'[' | b']') {
                        break;
                    }
                    self.pos += 1;
                }
                let s = String::from_utf8_lossy(&self.src[start..self.pos]).trim().to_string();
                Ok(if s.is_empty() { None } else { Some(s) })
            }
        }
    }
}

/// Parse a Newick string. Missing branch lengths default to 0.05 and all
/// lengths are clamped into the admissible range. A degree-2 root, and any
/// other node with a single child, is suppressed by fusing its edges.
pub fn parse_newick(text: &str) -> Result<Phylogeny> {
    let mut p = Parser { src: text.as_bytes(), pos: 0 };
    if p.peek()?.is_none() {
        return p.err("empty input");
    }
    let root = p.subtree()?;
    match p.peek()? {
        Some(b';') => p.pos += 1,
        Some(c) => return p.err(format!("expected ';', found {:?}", c as char)),
        None => return p.err("missing ';' at end of input"),
    }
    if p.peek()?.is_some() {
        return p.err("trailing characters after ';'");
    }
    build(root)
}

fn build(root: RawNode) -> Result<Phylogeny> {
    // Collect leaves first so they get ids 0..n.
    let mut names = Vec::new();
    fn collect(n: &RawNode, names: &mut Vec<String>) {
        if n.children.is_empty() {
            names.push(n.label.clone().unwrap_or_default());
        }
        for c in &n.children {
            collect(c, names);
        }
    }
    collect(&root, &mut names);
    let n_leaves = names.len();
    if n_leaves == 1 {
        return Phylogeny::from_edges(names, 1, vec![]);
    }

    // Rooted edge list, then suppress degree-2 nodes.
    let mut next_leaf = 0;
    let mut next_internal = n_leaves;
    let mut edges: Vec<Edge> = Vec::new();
    fn walk(
        n: &RawNode,
        next_leaf: &mut usize,
        next_internal: &mut usize,
        edges: &mut Vec<Edge>,
    ) -> usize {
        if n.children.is_empty() {
            let id = *next_leaf;
            *next_leaf += 1;
            return id;
        }
        let id = *next_internal;
        *next_internal += 1;
        for c in &n.children {
            let cid = walk(c, next_leaf, next_internal, edges);
            edges.push(Edge { a: id, b: cid, length: c.length.unwrap_or(DEFAULT_BL) });
        }
        id
    }
    walk(&root, &mut next_leaf, &mut next_internal, &mut edges);
    let n_nodes = next_internal;

    loop {
        let mut degree = vec![0usize; n_nodes];
        for e in &edges {
            degree[e.a] += 1;
            degree[e.b] += 1;
        }
        if let Some(v) = (n_leaves..n_nodes).find(|&v| degree[v] == 1) {
            edges.retain(|e| e.a != v && e.b != v);
            continue;
        }
        let Some(v) = (n_leaves..n_nodes).find(|&v| degree[v] == 2) else { break };
        let incident: Vec<usize> = (0..edges.len()).filter(|&i| edges[i].a == v || edges[i].b == v).collect();
        let (e1, e2) = (incident[0], incident[1]);
        let x = edges[e1].other(v);
        let y = edges[e2].other(v);
        let fused = Edge { a: x, b: y, length: edges[e1].length + edges[e2].length };
        edges[e1] = fused;
        edges.remove(e2);
    }
    // Compact internal node ids (suppressed nodes are now isolated).
    let mut degree = vec![0usize; n_nodes];
    for e in &edges {
        degree[e.a] += 1;
        degree[e.b] += 1;
    }
    let mut remap = vec![usize::MAX; n_nodes];
    let mut next = 0;
    for v in 0..n_nodes {
        if v < n_leaves || degree[v] > 0 {
            remap[v] = next;
            next += 1;
        }
    }
    let edges = edges
        .into_iter()
        .map(|e| Edge { a: remap[e.a], b: remap[e.b], length: clamp_length(e.length) })
        .collect();
    Phylogeny::from_edges(names, next, edges)
}

/// Format with 10 significant digits, trailing zeros trimmed.
pub fn format_length(v: f64) -> String {
    if v == 0.0 {
        return "0".into();
    }
    let exp = v.abs().log10().floor() as i32;
    if (-7..10).contains(&exp) {
        let decimals = (9 - exp).max(0) as usize;
        let s = format!("{v:.decimals$}");
        if s.contains('.') {
            s.trim_end_matches('0').trim_end_matches('.').to_string()
        } else {
            s
        }
    } else {
        format!("{v:.9e}")
    }
}

fn quote_label(label: &str) -> String {
    let needs = label
        .chars()
        .any(|c| c.is_whitespace() || matches!(c, '(' | ')' | '[' | ']' | '\'' | ':' | ';' | ','));
    if needs {
        format!("'{}'", label.replace('\'', "''"))
    } else {
        label.to_string()
    }
}

/// Canonical Newick: rooted at the internal node adjacent to the leaf with
/// the smallest label; children ordered by their smallest leaf label.
pub fn write_newick(tree: &Phylogeny) -> String {
    let n = tree.n_leaves();
    if n == 1 {
        return format!("{};", quote_label(tree.name(0)));
    }
    if n == 2 {
        let (first, second) = if tree.name(0) <= tree.name(1) { (0, 1) } else { (1, 0) };
        return format!(
            "({}:{},{}:0);",
            quote_label(tree.name(first)),
            format_length(tree.length(0)),
            quote_label(tree.name(second))
        );
    }
    let min_leaf = (0..n).min_by(|&a, &b| tree.name(a).cmp(tree.name(b))).unwrap();
    let root = tree.neighbors(min_leaf)[0].0;

    // Smallest leaf label in each rooted subtree.
    let order = tree.preorder(root);
    let mut min_label: Vec<Option<&str>> = vec![None; tree.n_nodes()];
    for &(v, pe) in order.iter().rev() {
        let mut best: Option<&str> = if tree.is_leaf(v) { Some(tree.name(v)) } else { None };
        for &(w, e) in tree.neighbors(v) {
            if Some(e) != pe {
                let m = min_label[w];
                if m.is_some() && (best.is_none() || m < best) {
                    best = m;
                }
            }
        }
        min_label[v] = best;
    }

    fn emit(tree: &Phylogeny, v: usize, pe: Option<usize>, min_label: &[Option<&str>], out: &mut String) {
        if tree.is_leaf(v) && pe.is_some() {
            out.push_str(&quote_label(tree.name(v)));
        } else {
            let mut kids: Vec<(usize, usize)> =
                tree.neighbors(v).iter().copied().filter(|&(_, e)| Some(e) != pe).collect();
            kids.sort_by(|a, b| min_label[a.0].cmp(&min_label[b.0]));
            out.push('(');
            for (i, &(w, e)) in kids.iter().enumerate() {
                if i > 0 {
                    out.push(',');
                }
                emit(tree, w, Some(e), min_label, out);
                out.push(':');
                out.push_str(&format_length(tree.length(e)));
            }
            out.push(')');
        }
    }
    let mut out = String::new();
    emit(tree, root, None, &min_label, &mut out);
    out.push(';');
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng;
    use rand::Rng as _;

    #[test]
    fn parses_rooted_three_leaf_tree() {
        let t = parse_newick("((A:0.1,B:0.1):0.05,C:0.2);").unwrap();
        assert_eq!(t.n_leaves(), 3);
        assert_eq!(t.n_nodes(), 4);
        assert!(t.is_binary());
        let a = t.leaf_index("A").unwrap();
        let (_, e) = t.neighbors(a)[0];
        assert!((t.length(e) - 0.1).abs() < 1e-15);
        let c = t.leaf_index("C").unwrap();
        let (_, e) = t.neighbors(c)[0];
        assert!((t.length(e) - 0.25).abs() < 1e-15);
    }

    #[test]
    fn writes_canonical_three_leaf() {
        let t = parse_newick("(C:0.3,(B:0.2,A:0.1):0.0);").unwrap();
        assert_eq!(write_newick(&t), "(A:0.1,B:0.2,C:0.3);");
    }

    #[test]
    fn permuted_children_write_identically() {
        let a = parse_newick("((A:0.1,B:0.2):0.3,(C:0.4,D:0.5):0.6,E:0.7);").unwrap();
        let b = parse_newick("(E:0.7,(D:0.5,C:0.4):0.6,(B:0.2,A:0.1):0.3);").unwrap();
        assert_eq!(write_newick(&a), write_newick(&b));
    }

    #[test]
    fn two_leaf_special_case() {
        let t = parse_newick("(A:0.3,B:0.2);").unwrap();
        assert_eq!(t.n_edges(), 1);
        assert_eq!(write_newick(&t), "(A:0.5,B:0);");
        let back = parse_newick(&write_newick(&t)).unwrap();
        assert!((back.length(0) - 0.5).abs() < 1e-12);
    }

    #[test]
    fn defaults_and_quotes() {
        let t = parse_newick("('Old English',[comment]B,'C''s');").unwrap();
        assert_eq!(t.names(), ["Old English", "B", "C's"]);
        assert!(t.edges().iter().all(|e| e.length == DEFAULT_BL));
        let s = write_newick(&t);
        assert_eq!(parse_newick(&s).unwrap().names().len(), 3);
        assert!(s.contains("'Old English'"));
    }

    #[test]
    fn syntax_errors() {
        match parse_newick("((A,B)") {
            Err(Error::Newick { position, .. }) => assert_eq!(position, 6),
            other => panic!("{other:?}"),
        }
        assert!(parse_newick("(A,B,A);").is_err());
        assert!(parse_newick("(A,,B);").is_err());
        assert!(parse_newick("(A:x,B);").is_err());
        assert!(parse_newick("").is_err());
        assert!(parse_newick("(A,B);junk").is_err());
    }

    #[test]
    fn multifurcation_and_unary_nodes() {
        let t = parse_newick("((A,B,C,D),((E)));").unwrap();
        assert_eq!(t.n_leaves(), 5);
        assert!(!t.is_binary());
    }

    #[test]
    fn length_format() {
        assert_eq!(format_length(0.1), "0.1");
        assert_eq!(format_length(1.234567890123), "1.23456789");
        assert_eq!(format_length(1e-6), "0.000001");
        assert_eq!(format_length(10.0), "10");
    }

    #[test]
    fn round_trip_random_trees() {
        let mut r = rng::seeded(11);
        for n in 3..15 {
            let names: Vec<String> = (0..n).map(|i| format!("L{i}")).collect();
            let t = Phylogeny::random_binary(&names, &mut r, |r| r.random_range(0.001..2.0)).unwrap();
            let s = write_newick(&t);
            let back = parse_newick(&s).unwrap();
            assert_eq!(write_newick(&back), s);
            // Isomorphic: identical splits with equal lengths.
            for e in 0..t.n_edges() {
                let split = t.leaves_beyond(t.edge(e).a, e);
                let names_t: Vec<&str> = split.iter().map(|&l| t.name(l)).collect();
                let found = (0..back.n_edges()).any(|f| {
                    let s1: Vec<&str> = back.leaves_beyond(back.edge(f).a, f).iter().map(|&l| back.name(l)).collect();
                    let s2: Vec<&str> = back.leaves_beyond(back.edge(f).b, f).iter().map(|&l| back.name(l)).collect();
                    let same = |x: &Vec<&str>| {
                        let mut a = x.clone();
                        a.sort();
                        let mut b = names_t.clone();
                        b.sort();
                        a == b
                    };
                    (same(&s1) || same(&s2)) && (back.length(f) - t.length(e)).abs() <= 1e-9 * t.length(e).max(1.0)
                });
                assert!(found);
            }
        }
    }
}
