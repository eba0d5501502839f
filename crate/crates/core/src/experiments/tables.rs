use super::{Crossing, Curve, ResultRow};
use crate::error::{Error, Result};

pub const RESULTS_HEADER: &str = "prior,n,mu,k,replicate,posterior_support,acceptance_rate,ess,seed,wall_time_s";

/// Marker written in the support column of a failed cell.
const FAILED: &str = "error";

fn float(x: f64) -> String {
    format!("{x:.16e}")
}

pub fn results_csv(rows: &[ResultRow]) -> String {
    let mut out = format!("{RESULTS_HEADER}\n");
    for r in rows {
        let support = if r.error.is_some() { FAILED.to_string() } else { float(r.posterior_support) };
        out.push_str(&format!(
            "{},{},{},{},{},{},{},{},{},{}\n",
            r.prior,
            r.n,
            float(r.mu),
            r.k,
            r.replicate,
            support,
            float(r.acceptance_rate),
            float(r.ess),
            r.seed,
            float(r.wall_time_s)
        ));
    }
    out
}

pub fn parse_results_csv(s: &str) -> Result<Vec<ResultRow>> {
    let mut lines = s.lines();
    if lines.next().map(str::trim) != Some(RESULTS_HEADER) {
        return Err(Error::Parse(format!("results header must be {RESULTS_HEADER:?}")));
    }
    let mut rows = Vec::new();
    for (i, line) in lines.enumerate().filter(|(_, l)| !l.trim().is_empty()) {
        let f: Vec<&str> = line.trim().split(',').collect();
        if f.len() != 10 {
            return Err(Error::Parse(format!("results line {} has {} fields", i + 2, f.len())));
        }
        let bad = |what: &str| Error::Parse(format!("results line {}: bad {what}", i + 2));
        let num = |j: usize, what: &str| f[j].parse::<f64>().map_err(|_| bad(what));
        let failed = f[5] == FAILED;
        let support = if failed { f64::NAN } else { num(5, "posterior_support")? };
        if !failed && !(0.0..=1.0).contains(&support) {
            return Err(bad("posterior_support (outside [0, 1])"));
        }
        rows.push(ResultRow {
            prior: f[0].to_string(),
            n: f[1].parse().map_err(|_| bad("n"))?,
            mu: num(2, "mu")?,
            k: f[3].parse().map_err(|_| bad("k"))?,
            replicate: f[4].parse().map_err(|_| bad("replicate"))?,
            posterior_support: support,
            acceptance_rate: num(6, "acceptance_rate")?,
            ess: num(7, "ess")?,
            seed: f[8].parse().map_err(|_| bad("seed"))?,
            wall_time_s: num(9, "wall_time_s")?,
            error: failed.then(|| "chain failed".to_string()),
        });
    }
    Ok(rows)
}

pub fn curves_csv(curves: &[Curve]) -> String {
    let mut out = String::from("prior,n,mu,k,mean_support,sd,q10,q50,q90,replicates\n");
    for c in curves {
        for p in &c.points {
            out.push_str(&format!(
                "{},{},{},{},{},{},{},{},{},{}\n",
                c.prior,
                c.n,
                float(c.mu),
                p.k,
                float(p.mean),
                float(p.sd),
                float(p.q10),
                float(p.q50),
                float(p.q90),
                p.replicates
            ));
        }
    }
    out
}

pub fn crossings_csv(crossings: &[Crossing]) -> String {
    let opt = |k: Option<usize>| k.map_or_else(|| "NA".to_string(), |k| k.to_string());
    let mut out = String::from("prior,n,mu,level,k_below,k_above,crossed\n");
    for c in crossings {
        out.push_str(&format!(
            "{},{},{},{},{},{},{}\n",
            c.prior,
            c.n,
            float(c.mu),
            float(c.level),
            opt(c.k_below),
            opt(c.k_above),
            c.crossed()
        ));
    }
    out
}
