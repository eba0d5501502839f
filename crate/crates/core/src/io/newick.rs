use crate::error::{Error, Result};
use crate::likelihood::RootedView;
use crate::trees::{leaf_order, RankedTree, Tree, UnrootedTree};

/// Relative tolerance for the ultrametric check on parsed ranked trees.
const ULTRAMETRIC_TOL: f64 = 1e-9;

fn fmt_len(x: f64) -> String {
    format!("{x:.17e}")
}

fn write_subtree(view: &RootedView, labels: &[String], lengths: &[f64], v: usize, out: &mut String) {
    let children = view.children(v);
    if children.is_empty() {
        out.push_str(&labels[v]);
    } else {
        out.push('(');
        for (i, &c) in children.iter().enumerate() {
            if i > 0 {
                out.push(',');
            }
            write_subtree(view, labels, lengths, c, out);
        }
        out.push(')');
    }
    if v != view.root() {
        out.push(':');
        out.push_str(&fmt_len(lengths[v]));
    }
}

/// Newick string with 17 significant digits. Ranked trees are written rooted
/// at the final merger; unrooted trees as a trifurcation at internal node `n`.
pub fn to_newick(tree: &Tree) -> String {
    let view = RootedView::from_tree(tree);
    let lengths: Vec<f64> = (0..view.node_count()).map(|v| view.length(v)).collect();
    let mut out = String::new();
    write_subtree(&view, tree.labels(), &lengths, view.root(), &mut out);
    out.push(';');
    out
}

/// A parsed Newick node.
#[derive(Debug, Clone, PartialEq)]
pub struct NewickNode {
    pub label: Option<String>,
    pub length: Option<f64>,
    pub children: Vec<NewickNode>,
}

struct Parser<'a> {
    src: &'a [u8],
    pos: usize,
}

impl<'a> Parser<'a> {
    fn skip_ws(&mut self) {
        while self.pos < self.src.len() && self.src[self.pos].is_ascii_whitespace() {
            self.pos += 1;
        }
    }

    fn peek(&mut self) -> Option<u8> {
        self.skip_ws();
        self.src.get(self.pos).copied()
    }

    fn err(&self, msg: &str) -> Error {
        Error::Parse(format!("newick: {msg} at byte {}", self.pos))
    }

    fn token(&mut self) -> String {
        self.skip_ws();
        let start = self.pos;
        while self.pos < self.src.len()
            && !b"(),:;[".contains(&self.src[self.pos])
            && !self.src[self.pos].is_ascii_whitespace()
        {
            self.pos += 1;
        }
        String::from_utf8_lossy(&self.src[start..self.pos]).into_owned()
    }

    fn node(&mut self, depth: usize) -> Result<NewickNode> {
        if depth > 10_000 {
            return Err(self.err("nesting too deep"));
        }
        let mut children = Vec::new();
        if self.peek() == Some(b'(') {
            self.pos += 1;
            loop {
                children.push(self.node(depth + 1)?);
                match self.peek() {
                    Some(b',') => self.pos += 1,
                    Some(b')') => {
                        self.pos += 1;
                        break;
                    }
                    _ => return Err(self.err("expected ',' or ')'")),
                }
            }
        }
        let label = self.token();
        let label = (!label.is_empty()).then_some(label);
        let mut length = None;
        if self.peek() == Some(b':') {
            self.pos += 1;
            let tok = self.token();
            let x: f64 = tok.parse().map_err(|_| self.err(&format!("bad branch length {tok:?}")))?;
            length = Some(x);
        }
        if self.peek() == Some(b'[') {
            while self.pos < self.src.len() && self.src[self.pos] != b']' {
                self.pos += 1;
            }
            if self.pos == self.src.len() {
                return Err(self.err("unterminated comment"));
            }
            self.pos += 1;
        }
        Ok(NewickNode { label, length, children })
    }
}

pub fn parse_newick(s: &str) -> Result<NewickNode> {
    let mut p = Parser { src: s.as_bytes(), pos: 0 };
    let root = p.node(0)?;
    if p.peek() != Some(b';') {
        return Err(p.err("expected ';'"));
    }
    p.pos += 1;
    if p.peek().is_some() {
        return Err(p.err("trailing input"));
    }
    Ok(root)
}

/// Flattened rooted tree: parents, lengths and leaf labels.
struct Flat {
    parent: Vec<Option<usize>>,
    length: Vec<f64>,
    children: Vec<Vec<usize>>,
    leaf_label: Vec<Option<String>>,
}

fn flatten(root: &NewickNode) -> Result<Flat> {
    let mut flat = Flat { parent: vec![], length: vec![], children: vec![], leaf_label: vec![] };
    let mut stack = vec![(root, None::<usize>)];
    while let Some((node, parent)) = stack.pop() {
        let id = flat.parent.len();
        flat.parent.push(parent);
        flat.children.push(vec![]);
        if let Some(p) = parent {
            flat.children[p].push(id);
            let len = node.length.ok_or_else(|| Error::Parse("newick: missing branch length".into()))?;
            if !(len.is_finite() && len >= 0.0) {
                return Err(Error::Parse(format!("newick: invalid branch length {len}")));
            }
            flat.length.push(len);
        } else {
            flat.length.push(0.0);
        }
        if node.children.is_empty() {
            let label = node.label.clone().ok_or_else(|| Error::Parse("newick: unlabelled leaf".into()))?;
            flat.leaf_label.push(Some(label));
        } else {
            if node.children.len() == 1 {
                return Err(Error::Parse("newick: unary node".into()));
            }
            flat.leaf_label.push(None);
        }
        for c in node.children.iter().rev() {
            stack.push((c, Some(id)));
        }
    }
    Ok(flat)
}

fn resolve_labels(found: Vec<String>, order: Option<&[String]>) -> Result<Vec<String>> {
    match order {
        None => Ok(leaf_order(&found)),
        Some(order) => {
            let mut a = found.clone();
            let mut b = order.to_vec();
            a.sort();
            b.sort();
            if a != b {
                return Err(Error::Parse("newick leaf labels do not match the given label order".into()));
            }
            Ok(order.to_vec())
        }
    }
}

/// Parse a rooted binary ultrametric tree. The ranking is recovered from the
/// internal node heights; tied heights are an error. Leaf order is `labels`
/// when given, otherwise [`leaf_order`].
pub fn ranked_from_newick(s: &str, labels: Option<&[String]>) -> Result<RankedTree> {
    let flat = flatten(&parse_newick(s)?)?;
    let nodes = flat.parent.len();
    if flat.children.iter().any(|c| !c.is_empty() && c.len() != 2) {
        return Err(Error::Parse("ranked tree must be binary".into()));
    }
    let found: Vec<String> = flat.leaf_label.iter().flatten().cloned().collect();
    let labels = resolve_labels(found, labels)?;
    let n = labels.len();
    // Heights bottom-up from the first child; the second child checks ultrametricity.
    let mut height = vec![0.0f64; nodes];
    for v in (0..nodes).rev() {
        if let [a, b] = flat.children[v][..] {
            let ha = height[a] + flat.length[a];
            let hb = height[b] + flat.length[b];
            if (ha - hb).abs() > ULTRAMETRIC_TOL * ha.max(hb).max(1e-300) {
                return Err(Error::Parse(format!("tree is not ultrametric ({ha} vs {hb})")));
            }
            height[v] = ha;
        }
    }
    let mut internal: Vec<usize> = (0..nodes).filter(|&v| !flat.children[v].is_empty()).collect();
    internal.sort_by(|&a, &b| height[a].total_cmp(&height[b]));
    if internal.windows(2).any(|w| height[w[0]] == height[w[1]]) {
        return Err(Error::Parse("tied internal node heights; ranking is ambiguous".into()));
    }
    let mut id = vec![usize::MAX; nodes];
    for v in 0..nodes {
        if let Some(l) = &flat.leaf_label[v] {
            id[v] = labels.iter().position(|x| x == l).expect("label resolved");
        }
    }
    for (j, &v) in internal.iter().enumerate() {
        id[v] = n + j;
    }
    let merges = internal.iter().map(|&v| (id[flat.children[v][0]], id[flat.children[v][1]])).collect();
    let mut holding = Vec::with_capacity(n - 1);
    let mut prev = 0.0;
    for &v in &internal {
        holding.push(height[v] - prev);
        prev = height[v];
    }
    // Stored from the root downwards: holding[i - 1] is x_i.
    holding.reverse();
    RankedTree::new(labels, merges, holding)
}

/// Parse an unrooted binary tree written with a trifurcating or a binary
/// root; a binary root is suppressed by joining its two edges.
pub fn unrooted_from_newick(s: &str, labels: Option<&[String]>) -> Result<UnrootedTree> {
    let mut flat = flatten(&parse_newick(s)?)?;
    let found: Vec<String> = flat.leaf_label.iter().flatten().cloned().collect();
    let labels = resolve_labels(found, labels)?;
    let n = labels.len();
    let root = 0;
    match flat.children[root].len() {
        3 => {}
        2 => {
            // Hang everything from the first internal child instead.
            let (a, b) = (flat.children[root][0], flat.children[root][1]);
            let (keep, other) = if flat.children[a].is_empty() { (b, a) } else { (a, b) };
            if flat.children[keep].is_empty() {
                return Err(Error::Parse("unrooted tree needs at least 4 leaves".into()));
            }
            let joined = flat.length[a] + flat.length[b];
            flat.parent[other] = Some(keep);
            flat.length[other] = joined;
            flat.children[keep].push(other);
            flat.parent[keep] = None;
            flat.children[root].clear();
        }
        _ => return Err(Error::Parse("unrooted tree must have a binary or trifurcating root".into())),
    }
    let nodes = flat.parent.len();
    let mut id = vec![usize::MAX; nodes];
    let mut next = n;
    for v in 0..nodes {
        if let Some(l) = &flat.leaf_label[v] {
            id[v] = labels.iter().position(|x| x == l).expect("label resolved");
        } else if flat.parent[v].is_some() || !flat.children[v].is_empty() {
            if flat.children[v].len() != 2 && flat.parent[v].is_some() {
                return Err(Error::Parse("unrooted tree must be binary".into()));
            }
            id[v] = next;
            next += 1;
        }
    }
    let mut edges = Vec::new();
    let mut lengths = Vec::new();
    for v in 0..nodes {
        if let Some(p) = flat.parent[v] {
            edges.push((id[p], id[v]));
            lengths.push(flat.length[v]);
        }
    }
    UnrootedTree::new(labels, edges, lengths)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::priors::Prior;
    use crate::seed;

    #[test]
    fn ranked_round_trip() {
        let mut rng = seed::rng_from(&[1]);
        for _ in 0..50 {
            let Tree::Ranked(t) = Prior::kingman(6).unwrap().sample(&mut rng) else { unreachable!() };
            let back = ranked_from_newick(&to_newick(&Tree::Ranked(t.clone())), Some(t.labels())).unwrap();
            assert_eq!(back.merges(), t.merges());
            for (a, b) in back.holding_times().iter().zip(t.holding_times()) {
                assert!((a - b).abs() < 1e-12 * t.total_height());
            }
        }
    }

    #[test]
    fn unrooted_round_trip_preserves_splits() {
        let mut rng = seed::rng_from(&[2]);
        for _ in 0..50 {
            let tree = Prior::uniform(7, 1.0).unwrap().sample(&mut rng);
            let s = to_newick(&tree);
            let back = Tree::Unrooted(unrooted_from_newick(&s, Some(tree.labels())).unwrap());
            assert_eq!(to_newick(&back).len(), s.len());
            let key = |t: &Tree| crate::trees::canonical_topology(t, crate::trees::CanonicalMode::Unrooted).unwrap();
            assert_eq!(key(&back), key(&tree));
            let mut a = back.parameters().to_vec();
            let mut b = tree.parameters().to_vec();
            a.sort_by(f64::total_cmp);
            b.sort_by(f64::total_cmp);
            assert_eq!(a, b);
        }
    }

    #[test]
    fn binary_root_is_suppressed() {
        let t = unrooted_from_newick("((a:1,b:2):0.5,(c:1,d:1):0.25);", None).unwrap();
        assert_eq!(t.n_leaves(), 4);
        assert!(t.lengths().contains(&0.75));
    }

    #[test]
    fn malformed_inputs() {
        assert!(parse_newick("(a:1,b:1)").is_err());
        assert!(parse_newick("(a:1,b:x);").is_err());
        assert!(ranked_from_newick("(a:1,b:2);", None).is_err());
        assert!(ranked_from_newick("((a:1,b:1):1,(c:1,d:1):1);", None).is_err());
        assert!(ranked_from_newick("(a:1,b:1,c:1);", None).is_err());
        assert!(unrooted_from_newick("((a:1,b:1):1,c:1);", None).is_err());
    }
}
