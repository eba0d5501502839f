use crate::error::{Error, Result};
use crate::mutation::SiteMatrix;
use crate::trees::Tree;

use super::newick::to_newick;

/// Minimal NEXUS file with a TAXA block and a TREES block.
pub fn write_nexus_trees(trees: &[(String, Tree)]) -> Result<String> {
    if trees.is_empty() {
        return Err(Error::Config("no trees to write".into()));
    }
    let mut labels: Vec<&String> = trees.iter().flat_map(|(_, t)| t.labels()).collect();
    labels.sort();
    labels.dedup();
    let mut out = String::from("#NEXUS\n\nBEGIN TAXA;\n");
    out.push_str(&format!("  DIMENSIONS NTAX={};\n  TAXLABELS", labels.len()));
    for l in &labels {
        out.push(' ');
        out.push_str(l);
    }
    out.push_str(";\nEND;\n\nBEGIN TREES;\n");
    for (name, tree) in trees {
        if name.is_empty() || name.chars().any(|c| c.is_whitespace() || "=;[]".contains(c)) {
            return Err(Error::Config(format!("invalid NEXUS tree name {name:?}")));
        }
        let root = if matches!(tree, Tree::Ranked(_)) { "[&R]" } else { "[&U]" };
        out.push_str(&format!("  TREE {name} = {root} {}\n", to_newick(tree)));
    }
    out.push_str("END;\n");
    Ok(out)
}

/// `(name, newick)` pairs from the TREES block of a NEXUS file.
pub fn read_nexus_trees(s: &str) -> Result<Vec<(String, String)>> {
    if !s.trim_start().to_ascii_uppercase().starts_with("#NEXUS") {
        return Err(Error::Parse("missing #NEXUS header".into()));
    }
    let mut out = Vec::new();
    let mut in_trees = false;
    for line in s.lines() {
        let t = line.trim();
        let upper = t.to_ascii_uppercase();
        if upper.starts_with("BEGIN TREES") {
            in_trees = true;
        } else if upper.starts_with("END") {
            in_trees = false;
        } else if in_trees && upper.starts_with("TREE ") {
            let (head, body) = t.split_once('=').ok_or_else(|| Error::Parse(format!("bad TREE line {t:?}")))?;
            let name = head[5..].trim().to_string();
            let mut body = body.trim();
            while let Some(rest) = body.strip_prefix('[') {
                let end = rest.find(']').ok_or_else(|| Error::Parse("unterminated NEXUS comment".into()))?;
                body = rest[end + 1..].trim_start();
            }
            out.push((name, body.to_string()));
        }
    }
    if out.is_empty() {
        return Err(Error::Parse("no trees in NEXUS TREES block".into()));
    }
    Ok(out)
}

/// NEXUS CHARACTERS-style block (a DATA block) for a site matrix.
pub fn write_nexus_characters(data: &SiteMatrix, alleles: &[String]) -> Result<String> {
    if alleles.iter().any(|a| a.chars().count() != 1) {
        return Err(Error::Config("NEXUS character output needs single-character allele symbols".into()));
    }
    let symbols: String = alleles.concat();
    let mut out = String::from("#NEXUS\n\nBEGIN DATA;\n");
    out.push_str(&format!(
        "  DIMENSIONS NTAX={} NCHAR={};\n  FORMAT DATATYPE=STANDARD SYMBOLS=\"{}\";\n  MATRIX\n",
        data.n_leaves(),
        data.n_sites(),
        symbols
    ));
    for (i, label) in data.labels().iter().enumerate() {
        let row: String = data.row(i).iter().map(|&a| alleles[a as usize].as_str()).collect();
        out.push_str(&format!("    {label} {row}\n"));
    }
    out.push_str("  ;\nEND;\n");
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::io::newick::ranked_from_newick;
    use crate::priors::Prior;
    use crate::seed;

    #[test]
    fn trees_block_round_trip() {
        let mut rng = seed::rng_from(&[4]);
        let t = Prior::kingman(5).unwrap().sample(&mut rng);
        let s = write_nexus_trees(&[("n5".into(), t.clone())]).unwrap();
        let parsed = read_nexus_trees(&s).unwrap();
        assert_eq!(parsed[0].0, "n5");
        let back = ranked_from_newick(&parsed[0].1, Some(t.labels())).unwrap();
        let Tree::Ranked(orig) = &t else { unreachable!() };
        assert_eq!(back.merges(), orig.merges());
        assert!(s.contains("NTAX=5"));
    }

    #[test]
    fn characters_block() {
        let d = SiteMatrix::from_rows(vec!["a".into(), "b".into()], vec![vec![0, 1, 1], vec![1, 1, 0]], 2).unwrap();
        let s = write_nexus_characters(&d, &["0".into(), "1".into()]).unwrap();
        assert!(s.contains("NCHAR=3"));
        assert!(s.contains("    a 011\n"));
        assert!(read_nexus_trees("BEGIN TREES;").is_err());
    }
}
