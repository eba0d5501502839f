use nalgebra::{DMatrix, DVector, SymmetricEigen};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

const ROW_TOL: f64 = 1e-12;

/// Finite-alphabet substitution model: allele set `H`, rate matrix `Q` and
/// root distribution `r`, with the derived constants `eta`, `gamma` and `w`.
#[derive(Debug, Clone)]
pub struct MutationModel {
    alleles: Vec<String>,
    q: Vec<f64>,
    root: Vec<f64>,
    eta: f64,
    gamma: f64,
    w: usize,
    stationary: Vec<f64>,
    reversible: bool,
    spectral: Option<Spectral>,
    /// Uniformization rate: the largest exit rate.
    nu: f64,
    /// Cumulative rows of `I + Q / nu`.
    jump_cdf: Vec<f64>,
}

/// `exp(Qt) = L diag(exp(lambda t)) R` for models reversible with respect
/// to their stationary distribution.
#[derive(Debug, Clone)]
struct Spectral {
    eigenvalues: Vec<f64>,
    left: Vec<f64>,
    right: Vec<f64>,
}

/// Serializable description of a model.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct ModelSpec {
    pub alleles: Vec<String>,
    pub rates: Vec<Vec<f64>>,
    pub root: Vec<f64>,
}

/// `(eta, gamma, w)` for a rate matrix given as rows.
pub fn derive_constants(q: &[Vec<f64>]) -> Result<(f64, f64, usize)> {
    let h = q.len();
    let eta = q
        .iter()
        .flatten()
        .copied()
        .filter(|&v| v > 0.0)
        .min_by(f64::total_cmp)
        .ok_or_else(|| Error::InvalidModel("Q has no positive entry".into()))?;
    let gamma = q.iter().flatten().map(|v| v.abs()).fold(0.0, f64::max);
    let support: Vec<bool> = q.iter().flatten().map(|&v| v != 0.0).collect();
    let mut power = support.clone();
    let cap = h * h;
    for j in 1..=cap {
        if power.iter().all(|&b| b) {
            return Ok((eta, gamma, j));
        }
        let mut next = vec![false; h * h];
        for a in 0..h {
            for b in 0..h {
                next[a * h + b] = (0..h).any(|c| power[a * h + c] && support[c * h + b]);
            }
        }
        power = next;
    }
    Err(Error::Reducible { cap })
}

impl MutationModel {
    pub fn new(alleles: Vec<String>, q: Vec<Vec<f64>>, root: Vec<f64>) -> Result<Self> {
        let h = alleles.len();
        if h < 2 {
            return Err(Error::InvalidModel("need at least two alleles".into()));
        }
        if h > 64 {
            return Err(Error::InvalidModel(format!("{h} alleles exceeds the supported 64")));
        }
        let mut distinct = alleles.clone();
        distinct.sort();
        distinct.dedup();
        if distinct.len() != h || alleles.iter().any(|a| a.is_empty()) {
            return Err(Error::InvalidModel("allele names must be distinct and nonempty".into()));
        }
        if q.len() != h || q.iter().any(|row| row.len() != h) {
            return Err(Error::InvalidModel(format!("Q must be {h}x{h}")));
        }
        for (a, row) in q.iter().enumerate() {
            if row.iter().any(|v| !v.is_finite()) {
                return Err(Error::InvalidModel(format!("row {a} of Q has non-finite entries")));
            }
            let sum: f64 = row.iter().sum();
            let scale = row.iter().map(|v| v.abs()).fold(1.0, f64::max);
            if sum.abs() > ROW_TOL * scale {
                return Err(Error::InvalidModel(format!("row {a} of Q sums to {sum}, not 0")));
            }
            if row.iter().enumerate().any(|(b, &v)| b != a && v < 0.0) {
                return Err(Error::InvalidModel(format!("row {a} of Q has a negative off-diagonal")));
            }
        }
        if root.len() != h {
            return Err(Error::InvalidModel("root distribution has the wrong length".into()));
        }
        let total: f64 = root.iter().sum();
        if (total - 1.0).abs() > ROW_TOL || root.iter().any(|&p| !(p > 0.0)) {
            return Err(Error::InvalidModel("root distribution must be strictly positive and sum to 1".into()));
        }
        let (eta, gamma, w) = derive_constants(&q)?;
        let flat: Vec<f64> = q.iter().flatten().copied().collect();
        let stationary = stationary_distribution(&flat, h)?;
        let reversible = detailed_balance(&flat, &root, h);
        let spectral =
            if detailed_balance(&flat, &stationary, h) { Some(Spectral::new(&flat, &stationary, h)) } else { None };
        let nu = (0..h).map(|a| -flat[a * h + a]).fold(0.0, f64::max);
        let mut jump_cdf = vec![0.0; h * h];
        for a in 0..h {
            let mut acc = 0.0;
            for b in 0..h {
                let kernel = if a == b { 1.0 + flat[a * h + a] / nu } else { flat[a * h + b] / nu };
                acc += kernel.max(0.0);
                jump_cdf[a * h + b] = acc;
            }
            jump_cdf[a * h + h - 1] = f64::INFINITY;
        }
        Ok(Self { alleles, q: flat, root, eta, gamma, w, stationary, reversible, spectral, nu, jump_cdf })
    }

    pub fn from_spec(spec: &ModelSpec) -> Result<Self> {
        Self::new(spec.alleles.clone(), spec.rates.clone(), spec.root.clone())
    }

    pub fn spec(&self) -> ModelSpec {
        let h = self.n_alleles();
        ModelSpec {
            alleles: self.alleles.clone(),
            rates: (0..h).map(|a| self.q[a * h..(a + 1) * h].to_vec()).collect(),
            root: self.root.clone(),
        }
    }

    /// Two alleles `0`/`1`, `Q_01 = Q_10 = mu`, uniform root.
    pub fn binary_symmetric(mu: f64) -> Result<Self> {
        if !(mu > 0.0 && mu.is_finite()) {
            return Err(Error::InvalidModel(format!("mutation rate {mu} must be positive")));
        }
        Self::new(vec!["0".into(), "1".into()], vec![vec![-mu, mu], vec![mu, -mu]], vec![0.5, 0.5])
    }

    /// Four nucleotides with every off-diagonal rate equal to `mu`.
    pub fn jukes_cantor(mu: f64) -> Result<Self> {
        if !(mu > 0.0 && mu.is_finite()) {
            return Err(Error::InvalidModel(format!("mutation rate {mu} must be positive")));
        }
        let q = (0..4).map(|a| (0..4).map(|b| if a == b { -3.0 * mu } else { mu }).collect()).collect();
        Self::new(["A", "C", "G", "T"].iter().map(|s| s.to_string()).collect(), q, vec![0.25; 4])
    }

    pub fn n_alleles(&self) -> usize {
        self.alleles.len()
    }

    pub fn alleles(&self) -> &[String] {
        &self.alleles
    }

    pub fn allele_index(&self, symbol: &str) -> Result<u8> {
        self.alleles
            .iter()
            .position(|a| a == symbol)
            .map(|i| i as u8)
            .ok_or_else(|| Error::UnknownAllele(symbol.to_string()))
    }

    pub fn rate(&self, from: usize, to: usize) -> f64 {
        self.q[from * self.n_alleles() + to]
    }

    pub fn root_distribution(&self) -> &[f64] {
        &self.root
    }

    pub fn stationary(&self) -> &[f64] {
        &self.stationary
    }

    /// Least positive entry of `Q`.
    pub fn eta(&self) -> f64 {
        self.eta
    }

    /// Largest absolute entry of `Q`.
    pub fn gamma(&self) -> f64 {
        self.gamma
    }

    /// Least `j` with `|Q|^j` strictly positive.
    pub fn w(&self) -> usize {
        self.w
    }

    /// Detailed balance with respect to the root distribution.
    pub fn is_reversible(&self) -> bool {
        self.reversible
    }

    pub(crate) fn uniformization_rate(&self) -> f64 {
        self.nu
    }

    /// Allele after a uniformized event in state `from` with mark `u` in `[0, 1)`.
    pub(crate) fn jump(&self, from: u8, u: f64) -> u8 {
        let h = self.n_alleles();
        let row = &self.jump_cdf[from as usize * h..(from as usize + 1) * h];
        row.iter().position(|&c| u < c).unwrap_or(h - 1) as u8
    }

    /// `exp(Qt)` as a dense matrix.
    pub fn transition_matrix(&self, t: f64) -> Result<DMatrix<f64>> {
        let h = self.n_alleles();
        let mut out = vec![0.0; h * h];
        self.fill_transition(t, &mut out)?;
        Ok(DMatrix::from_row_slice(h, h, &out))
    }

    /// Write `exp(Qt)` row-major into `out`.
    pub fn fill_transition(&self, t: f64, out: &mut [f64]) -> Result<()> {
        let h = self.n_alleles();
        if !(t >= 0.0) || !t.is_finite() {
            return Err(Error::OutOfRange(format!("branch length {t} must be finite and nonnegative")));
        }
        if t == 0.0 {
            out.iter_mut().for_each(|v| *v = 0.0);
            (0..h).for_each(|a| out[a * h + a] = 1.0);
            return Ok(());
        }
        match &self.spectral {
            Some(s) => s.fill(t, h, out),
            None => expm_series(&self.q, t, h, out),
        }
        Ok(())
    }
}

impl Spectral {
    fn new(q: &[f64], pi: &[f64], h: usize) -> Self {
        let sq: Vec<f64> = pi.iter().map(|p| p.sqrt()).collect();
        let sym = DMatrix::from_fn(h, h, |a, b| {
            let v = sq[a] * q[a * h + b] / sq[b];
            let vt = sq[b] * q[b * h + a] / sq[a];
            0.5 * (v + vt)
        });
        let eig = SymmetricEigen::new(sym);
        let u = eig.eigenvectors;
        let mut left = vec![0.0; h * h];
        let mut right = vec![0.0; h * h];
        for a in 0..h {
            for k in 0..h {
                left[a * h + k] = u[(a, k)] / sq[a];
                right[k * h + a] = u[(a, k)] * sq[a];
            }
        }
        Self { eigenvalues: eig.eigenvalues.iter().copied().collect(), left, right }
    }

    fn fill(&self, t: f64, h: usize, out: &mut [f64]) {
        let e: Vec<f64> = self.eigenvalues.iter().map(|l| (l * t).exp()).collect();
        for a in 0..h {
            for b in 0..h {
                let mut s = 0.0;
                for k in 0..h {
                    s += self.left[a * h + k] * e[k] * self.right[k * h + b];
                }
                out[a * h + b] = s.max(0.0);
            }
        }
    }
}

/// Scaling and squaring with a truncated Taylor series.
fn expm_series(q: &[f64], t: f64, h: usize, out: &mut [f64]) {
    let a = DMatrix::from_row_slice(h, h, q) * t;
    let norm = (0..h).map(|r| (0..h).map(|c| a[(r, c)].abs()).sum::<f64>()).fold(0.0, f64::max);
    let squarings = if norm > 0.5 { (norm / 0.5).log2().ceil() as i32 } else { 0 };
    let a = a / 2f64.powi(squarings);
    let mut result = DMatrix::<f64>::identity(h, h);
    let mut term = DMatrix::<f64>::identity(h, h);
    for k in 1..=20 {
        term = &term * &a / k as f64;
        result += &term;
    }
    for _ in 0..squarings {
        result = &result * &result;
    }
    for r in 0..h {
        for c in 0..h {
            out[r * h + c] = result[(r, c)].max(0.0);
        }
    }
}

fn stationary_distribution(q: &[f64], h: usize) -> Result<Vec<f64>> {
    // Solve pi Q = 0 with sum(pi) = 1 by replacing one balance equation.
    let mut a = DMatrix::from_fn(h, h, |r, c| q[c * h + r]);
    for c in 0..h {
        a[(h - 1, c)] = 1.0;
    }
    let mut rhs = DVector::zeros(h);
    rhs[h - 1] = 1.0;
    let pi = a.lu().solve(&rhs).ok_or_else(|| Error::Numeric("stationary distribution is not unique".into()))?;
    Ok(pi.iter().map(|p| p.max(0.0)).collect())
}

fn detailed_balance(q: &[f64], p: &[f64], h: usize) -> bool {
    (0..h).all(|a| {
        (0..h).all(|b| {
            let (x, y) = (p[a] * q[a * h + b], p[b] * q[b * h + a]);
            (x - y).abs() <= 1e-12 * x.abs().max(y.abs()).max(1e-300)
        })
    })
}
