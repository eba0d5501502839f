//! Plain text site matrix.
//!
//! ```text
//! #alleles 0 1
//! #leaves 1 2 3 4
//! 1 0110...
//! 2 0100...
//! ```
//!
//! One row per leaf: the label, then one symbol per site. Symbols are
//! concatenated when every allele name is a single character and separated
//! by spaces otherwise.

use crate::error::{Error, Result};
use crate::mutation::SiteMatrix;

pub fn write_matrix(data: &SiteMatrix, alleles: &[String]) -> Result<String> {
    if alleles.is_empty() || alleles.iter().any(|a| a.is_empty() || a.contains(char::is_whitespace)) {
        return Err(Error::Config("allele names must be nonempty and contain no whitespace".into()));
    }
    let compact = alleles.iter().all(|a| a.chars().count() == 1);
    let mut out = format!("#alleles {}\n#leaves {}\n", alleles.join(" "), data.labels().join(" "));
    for (i, label) in data.labels().iter().enumerate() {
        out.push_str(label);
        out.push(' ');
        let symbols = data.row(i).iter().map(|&a| alleles[a as usize].as_str());
        if compact {
            out.extend(symbols);
        } else {
            out.push_str(&symbols.collect::<Vec<_>>().join(" "));
        }
        out.push('\n');
    }
    Ok(out)
}

/// Parse a matrix; returns the data and the allele names from the header.
/// When `alleles` is given the header must match it.
pub fn read_matrix(s: &str, alleles: Option<&[String]>) -> Result<(SiteMatrix, Vec<String>)> {
    let mut lines = s.lines().filter(|l| !l.trim().is_empty());
    let header = |line: Option<&str>, tag: &str| -> Result<Vec<String>> {
        let line = line.ok_or_else(|| Error::Parse(format!("missing {tag} header")))?;
        let rest = line
            .trim()
            .strip_prefix(tag)
            .ok_or_else(|| Error::Parse(format!("expected {tag} header, got {line:?}")))?;
        Ok(rest.split_whitespace().map(String::from).collect())
    };
    let names = header(lines.next(), "#alleles")?;
    let leaves = header(lines.next(), "#leaves")?;
    if let Some(want) = alleles {
        if want != names.as_slice() {
            return Err(Error::Parse(format!("matrix alleles {names:?} do not match the model's {want:?}")));
        }
    }
    let compact = names.iter().all(|a| a.chars().count() == 1);
    let index = |sym: &str| -> Result<u8> {
        names.iter().position(|a| a == sym).map(|i| i as u8).ok_or_else(|| Error::UnknownAllele(sym.to_string()))
    };
    let mut rows = Vec::with_capacity(leaves.len());
    for (i, line) in lines.enumerate() {
        let mut parts = line.split_whitespace();
        let label = parts.next().unwrap_or_default();
        if leaves.get(i).map(String::as_str) != Some(label) {
            return Err(Error::Parse(format!("row {} has label {label:?}, expected {:?}", i + 1, leaves.get(i))));
        }
        let row = if compact {
            let body: String = parts.collect();
            body.chars().map(|c| index(&c.to_string())).collect::<Result<Vec<_>>>()?
        } else {
            parts.map(index).collect::<Result<Vec<_>>>()?
        };
        rows.push(row);
    }
    if rows.len() != leaves.len() {
        return Err(Error::Parse(format!("{} rows for {} leaves", rows.len(), leaves.len())));
    }
    Ok((SiteMatrix::from_rows(leaves, rows, names.len())?, names))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn names(v: &[&str]) -> Vec<String> {
        v.iter().map(|s| s.to_string()).collect()
    }

    #[test]
    fn round_trip_compact_and_spaced() {
        let d = SiteMatrix::from_rows(names(&["x", "y"]), vec![vec![0, 1, 2], vec![2, 2, 0]], 3).unwrap();
        for alleles in [names(&["A", "B", "C"]), names(&["aa", "bb", "cc"])] {
            let s = write_matrix(&d, &alleles).unwrap();
            let (back, got) = read_matrix(&s, Some(&alleles)).unwrap();
            assert_eq!(back, d);
            assert_eq!(got, alleles);
        }
    }

    #[test]
    fn rejects_bad_input() {
        let s = "#alleles 0 1\n#leaves a b\na 01\nb 02\n";
        assert!(matches!(read_matrix(s, None), Err(Error::UnknownAllele(_))));
        let s = "#alleles 0 1\n#leaves a b\na 01\n";
        assert!(read_matrix(s, None).is_err());
        let s = "#alleles 0 1\n#leaves a b\na 01\nb 0\n";
        assert!(read_matrix(s, None).is_err());
        let ok = "#alleles 0 1\n#leaves a b\na 01\nb 00\n";
        assert!(read_matrix(ok, Some(&names(&["A", "C"]))).is_err());
    }
}
