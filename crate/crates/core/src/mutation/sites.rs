use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// One uniformized event on a branch: distance from the top of the branch,
/// the uniform mark that selects the jump, and the allele after the event.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Event {
    pub offset: f64,
    pub mark: f64,
    pub allele: u8,
}

/// Per-site, per-branch event record. Branches are indexed by the branch ids
/// of the [`RootedView`](crate::likelihood::RootedView) the data were
/// simulated on.
#[derive(Debug, Clone, PartialEq)]
pub struct EventLog {
    n_branches: usize,
    root: Vec<u8>,
    events: Vec<Vec<Event>>,
}

impl EventLog {
    pub fn new(n_branches: usize, root: Vec<u8>, events: Vec<Vec<Event>>) -> Result<Self> {
        if events.len() != root.len() * n_branches {
            return Err(Error::Parse(format!(
                "event log holds {} branch records, expected {}",
                events.len(),
                root.len() * n_branches
            )));
        }
        Ok(Self { n_branches, root, events })
    }

    pub fn n_sites(&self) -> usize {
        self.root.len()
    }

    pub fn n_branches(&self) -> usize {
        self.n_branches
    }

    pub fn root_allele(&self, site: usize) -> u8 {
        self.root[site]
    }

    pub fn root_alleles(&self) -> &[u8] {
        &self.root
    }

    pub fn events(&self, site: usize, branch: usize) -> &[Event] {
        &self.events[site * self.n_branches + branch]
    }

    pub(crate) fn events_mut(&mut self, site: usize, branch: usize) -> &mut Vec<Event> {
        &mut self.events[site * self.n_branches + branch]
    }

    pub fn total_events(&self) -> usize {
        self.events.iter().map(Vec::len).sum()
    }

    pub fn prefix(&self, k: usize) -> Self {
        Self {
            n_branches: self.n_branches,
            root: self.root[..k].to_vec(),
            events: self.events[..k * self.n_branches].to_vec(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Provenance {
    pub tree_id: String,
    pub seed: u64,
}

/// Observed leaf alleles, `n` leaves by `k` sites, stored as allele indices.
#[derive(Debug, Clone, PartialEq)]
pub struct SiteMatrix {
    labels: Vec<String>,
    n_sites: usize,
    /// Leaf-major: `alleles[leaf * n_sites + site]`.
    alleles: Vec<u8>,
    event_log: Option<EventLog>,
    provenance: Option<Provenance>,
}

impl SiteMatrix {
    /// Build from one row of allele indices per leaf.
    pub fn from_rows(labels: Vec<String>, rows: Vec<Vec<u8>>, n_alleles: usize) -> Result<Self> {
        if rows.len() != labels.len() {
            return Err(Error::Parse(format!("{} rows for {} labels", rows.len(), labels.len())));
        }
        let n_sites = rows.first().map_or(0, Vec::len);
        if rows.iter().any(|r| r.len() != n_sites) {
            return Err(Error::Parse("rows have different lengths".into()));
        }
        if let Some(&bad) = rows.iter().flatten().find(|&&a| a as usize >= n_alleles) {
            return Err(Error::UnknownAllele(format!("index {bad}")));
        }
        Ok(Self { labels, n_sites, alleles: rows.concat(), event_log: None, provenance: None })
    }

    pub(crate) fn from_parts(
        labels: Vec<String>,
        n_sites: usize,
        alleles: Vec<u8>,
        event_log: Option<EventLog>,
        provenance: Option<Provenance>,
    ) -> Self {
        debug_assert_eq!(alleles.len(), labels.len() * n_sites);
        Self { labels, n_sites, alleles, event_log, provenance }
    }

    pub fn labels(&self) -> &[String] {
        &self.labels
    }

    pub fn n_leaves(&self) -> usize {
        self.labels.len()
    }

    pub fn n_sites(&self) -> usize {
        self.n_sites
    }

    pub fn allele(&self, leaf: usize, site: usize) -> u8 {
        self.alleles[leaf * self.n_sites + site]
    }

    pub fn row(&self, leaf: usize) -> &[u8] {
        &self.alleles[leaf * self.n_sites..(leaf + 1) * self.n_sites]
    }

    pub fn column(&self, site: usize) -> Vec<u8> {
        (0..self.n_leaves()).map(|l| self.allele(l, site)).collect()
    }

    pub fn event_log(&self) -> Option<&EventLog> {
        self.event_log.as_ref()
    }

    pub fn provenance(&self) -> Option<&Provenance> {
        self.provenance.as_ref()
    }

    pub fn with_event_log(mut self, log: Option<EventLog>) -> Result<Self> {
        if let Some(l) = &log {
            if l.n_sites() != self.n_sites {
                return Err(Error::Parse(format!(
                    "event log covers {} sites, matrix has {}",
                    l.n_sites(),
                    self.n_sites
                )));
            }
        }
        self.event_log = log;
        Ok(self)
    }

    pub fn with_provenance(mut self, provenance: Option<Provenance>) -> Self {
        self.provenance = provenance;
        self
    }

    /// The first `k` sites, event log included.
    pub fn prefix(&self, k: usize) -> Result<Self> {
        if k > self.n_sites {
            return Err(Error::OutOfRange(format!("prefix {k} exceeds {} sites", self.n_sites)));
        }
        let alleles = (0..self.n_leaves()).flat_map(|l| self.row(l)[..k].iter().copied()).collect();
        Ok(Self {
            labels: self.labels.clone(),
            n_sites: k,
            alleles,
            event_log: self.event_log.as_ref().map(|e| e.prefix(k)),
            provenance: self.provenance.clone(),
        })
    }

    /// Reorder rows to follow `labels`. The event log is dropped because its
    /// branch ids refer to the original tree.
    pub fn reorder(&self, labels: &[String]) -> Result<Self> {
        if labels.len() != self.n_leaves() {
            return Err(Error::Config(format!("data has {} leaves, tree has {}", self.n_leaves(), labels.len())));
        }
        let mut rows = Vec::with_capacity(labels.len());
        for l in labels {
            let i = self
                .labels
                .iter()
                .position(|x| x == l)
                .ok_or_else(|| Error::Config(format!("leaf {l:?} missing from data")))?;
            rows.push(self.row(i).to_vec());
        }
        let n_alleles = self.alleles.iter().map(|&a| a as usize + 1).max().unwrap_or(1);
        Ok(Self::from_rows(labels.to_vec(), rows, n_alleles)?.with_provenance(self.provenance.clone()))
    }

    /// Distinct columns with multiplicities, in first-seen order.
    pub fn patterns(&self) -> Vec<(Vec<u8>, usize)> {
        let mut index: std::collections::HashMap<Vec<u8>, usize> = std::collections::HashMap::new();
        let mut out: Vec<(Vec<u8>, usize)> = Vec::new();
        for s in 0..self.n_sites {
            let col = self.column(s);
            match index.get(&col) {
                Some(&i) => out[i].1 += 1,
                None => {
                    index.insert(col.clone(), out.len());
                    out.push((col, 1));
                }
            }
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn labels(n: usize) -> Vec<String> {
        (1..=n).map(|i| i.to_string()).collect()
    }

    #[test]
    fn patterns_count_columns() {
        let m = SiteMatrix::from_rows(labels(2), vec![vec![0, 1, 0, 0], vec![0, 1, 0, 1]], 2).unwrap();
        let p = m.patterns();
        assert_eq!(p, vec![(vec![0, 0], 2), (vec![1, 1], 1), (vec![0, 1], 1)]);
    }

    #[test]
    fn prefix_is_column_prefix() {
        let m = SiteMatrix::from_rows(labels(2), vec![vec![0, 1, 1], vec![1, 1, 0]], 2).unwrap();
        let p = m.prefix(2).unwrap();
        assert_eq!(p.row(0), &[0, 1]);
        assert_eq!(p.row(1), &[1, 1]);
        assert!(m.prefix(4).is_err());
    }

    #[test]
    fn reorder_by_labels() {
        let m = SiteMatrix::from_rows(labels(2), vec![vec![0, 1], vec![1, 1]], 2).unwrap();
        let r = m.reorder(&["2".to_string(), "1".to_string()]).unwrap();
        assert_eq!(r.row(0), &[1, 1]);
        assert!(m.reorder(&["3".to_string(), "1".to_string()]).is_err());
    }

    #[test]
    fn out_of_alphabet_rejected() {
        assert!(SiteMatrix::from_rows(labels(1), vec![vec![2]], 2).is_err());
    }
}
