//! User-association tensors, pairing matrices and uplink decoding orders.

use itertools::Itertools;
use nalgebra::DMatrix;
use rand::seq::SliceRandom;

use crate::error::{Error, Result};
use crate::rng::Rng;

/// Upper bound on `K! * L!` accepted by [`enumerate_associations`].
pub const ENUMERATION_LIMIT: f64 = 1e6;

/// Per-zone cluster membership: `c[i][(cluster, user)] = 1` when user `user`
/// of zone `i` belongs to cluster `cluster`. Zone 0 defines the clusters.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct AssociationTensor {
    pub c: Vec<DMatrix<i64>>,
}

fn is_permutation_matrix(m: &DMatrix<i64>) -> bool {
    m.is_square()
        && m.iter().all(|&v| v == 0 || v == 1)
        && m.row_iter().all(|r| r.sum() == 1)
        && m.column_iter().all(|c| c.sum() == 1)
}

impl AssociationTensor {
    pub fn new(c: Vec<DMatrix<i64>>) -> Result<Self> {
        let k = c.first().map_or(0, |m| m.nrows());
        if c.is_empty() || c.iter().any(|m| m.nrows() != k || m.ncols() != k) {
            return Err(Error::Dimension("tensor slices must all be K x K".into()));
        }
        if c[0] != DMatrix::identity(k, k) {
            return Err(Error::Association("first zone must define the clusters (identity slice)".into()));
        }
        if !c.iter().all(is_permutation_matrix) {
            return Err(Error::Association("every slice must be a permutation matrix".into()));
        }
        Ok(AssociationTensor { c })
    }

    pub fn random(n_zones: usize, k: usize, rng: &mut Rng) -> Self {
        let mut c = vec![DMatrix::identity(k, k)];
        for _ in 1..n_zones {
            let mut perm: Vec<usize> = (0..k).collect();
            perm.shuffle(rng);
            c.push(permutation_matrix(&perm));
        }
        AssociationTensor { c }
    }

    pub fn from_pairing(p: &PairingMatrix) -> Result<Self> {
        let k = p.size();
        let c2 = DMatrix::from_fn(k, k, |r, col| p.0[(r, col)].round() as i64);
        AssociationTensor::new(vec![DMatrix::identity(k, k), c2])
    }

    pub fn n_zones(&self) -> usize {
        self.c.len()
    }

    pub fn users_per_zone(&self) -> usize {
        self.c[0].nrows()
    }

    /// `T^{iz} = C_i^T C_z`: entry `(k, j)` is 1 when user `k` of zone `i` and
    /// user `j` of zone `z` share a cluster.
    pub fn ua_matrix(&self, i: usize, z: usize) -> DMatrix<i64> {
        self.c[i].transpose() * &self.c[z]
    }

    pub fn pairing(&self) -> Result<PairingMatrix> {
        if self.n_zones() != 2 {
            return Err(Error::Dimension("pairing matrices are defined for two zones".into()));
        }
        Ok(PairingMatrix(self.ua_matrix(0, 1).map(|v| v as f64)))
    }
}

pub fn permutation_matrix(perm: &[usize]) -> DMatrix<i64> {
    let k = perm.len();
    DMatrix::from_fn(k, k, |r, c| i64::from(perm[r] == c))
}

/// `alpha[(k, j)] = 1` pairs inner user `k` with outer user `j`. May be relaxed.
#[derive(Clone, Debug, PartialEq)]
pub struct PairingMatrix(pub DMatrix<f64>);

/// `beta[(l, m)] = 1` means uplink user `l` is decoded before `m`. May be relaxed.
#[derive(Clone, Debug, PartialEq)]
pub struct DecodingOrder(pub DMatrix<f64>);

#[derive(Clone, Debug, PartialEq)]
pub struct Association {
    pub pairing: PairingMatrix,
    pub order: DecodingOrder,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Violation {
    PairingNotBinary,
    PairingNotPermutation,
    OrderNotBinary,
    OrderSelfDecoding,
    OrderNotAntisymmetric,
    OrderRowSumsNotDistinct,
}

impl Violation {
    pub fn name(self) -> &'static str {
        match self {
            Violation::PairingNotBinary => "pairing entries must be binary",
            Violation::PairingNotPermutation => "each user must be paired exactly once",
            Violation::OrderNotBinary => "decoding-order entries must be binary",
            Violation::OrderSelfDecoding => "a user cannot precede itself",
            Violation::OrderNotAntisymmetric => "exactly one of each ordered pair must hold",
            Violation::OrderRowSumsNotDistinct => "decoding order must be transitive (distinct row sums)",
        }
    }
}

const BIN_TOL: f64 = 1e-9;

fn binary(v: f64) -> bool {
    v.abs() <= BIN_TOL || (v - 1.0).abs() <= BIN_TOL
}

impl PairingMatrix {
    pub fn size(&self) -> usize {
        self.0.nrows()
    }

    pub fn from_permutation(perm: &[usize]) -> Self {
        PairingMatrix(permutation_matrix(perm).map(|v| v as f64))
    }

    pub fn identity(k: usize) -> Self {
        PairingMatrix(DMatrix::identity(k, k))
    }

    /// Uniform doubly-stochastic relaxation.
    pub fn uniform(k: usize) -> Self {
        PairingMatrix(DMatrix::from_element(k, k, 1.0 / k as f64))
    }

    pub fn is_binary(&self) -> bool {
        self.0.iter().all(|&v| binary(v))
    }

    /// Outer user paired with inner user `k` (binary matrices only).
    pub fn partner_of_inner(&self, k: usize) -> Option<usize> {
        (0..self.size()).find(|&j| self.0[(k, j)] > 0.5)
    }

    /// Inner user paired with outer user `j` (binary matrices only).
    pub fn partner_of_outer(&self, j: usize) -> Option<usize> {
        (0..self.size()).find(|&k| self.0[(k, j)] > 0.5)
    }

    pub fn violations(&self) -> Vec<Violation> {
        let mut v = Vec::new();
        if !self.is_binary() {
            v.push(Violation::PairingNotBinary);
        }
        let ok_rows = self.0.row_iter().all(|r| (r.sum() - 1.0).abs() <= BIN_TOL);
        let ok_cols = self.0.column_iter().all(|c| (c.sum() - 1.0).abs() <= BIN_TOL);
        if !(ok_rows && ok_cols) {
            v.push(Violation::PairingNotPermutation);
        }
        v
    }
}

impl DecodingOrder {
    pub fn size(&self) -> usize {
        self.0.nrows()
    }

    /// `sequence[0]` is decoded first.
    pub fn from_sequence(sequence: &[usize]) -> Self {
        let l = sequence.len();
        let mut b = DMatrix::zeros(l, l);
        for (a, &first) in sequence.iter().enumerate() {
            for &later in &sequence[a + 1..] {
                b[(first, later)] = 1.0;
            }
        }
        DecodingOrder(b)
    }

    pub fn is_binary(&self) -> bool {
        self.0.iter().all(|&v| binary(v))
    }

    pub fn row_sums(&self) -> Vec<f64> {
        self.0.row_iter().map(|r| r.sum()).collect()
    }

    /// Users sorted by descending row sum, ties broken by the lower index.
    pub fn sequence(&self) -> Vec<usize> {
        let sums = self.row_sums();
        let mut idx: Vec<usize> = (0..self.size()).collect();
        idx.sort_by(|&a, &b| sums[b].partial_cmp(&sums[a]).unwrap_or(std::cmp::Ordering::Equal).then(a.cmp(&b)));
        idx
    }

    pub fn violations(&self) -> Vec<Violation> {
        let l = self.size();
        let b = &self.0;
        let mut v = Vec::new();
        if !self.is_binary() {
            v.push(Violation::OrderNotBinary);
        }
        if (0..l).any(|i| b[(i, i)].abs() > BIN_TOL) {
            v.push(Violation::OrderSelfDecoding);
        }
        if (0..l).any(|i| (0..l).any(|j| i != j && (b[(i, j)] + b[(j, i)] - 1.0).abs() > BIN_TOL)) {
            v.push(Violation::OrderNotAntisymmetric);
        }
        let mut sums: Vec<f64> = self.row_sums();
        sums.sort_by(|a, b| a.partial_cmp(b).unwrap_or(std::cmp::Ordering::Equal));
        if sums.iter().enumerate().any(|(i, s)| (s - i as f64).abs() > BIN_TOL) {
            v.push(Violation::OrderRowSumsNotDistinct);
        }
        v
    }
}

impl Association {
    pub fn new(pairing: PairingMatrix, order: DecodingOrder) -> Self {
        Association { pairing, order }
    }

    pub fn violations(&self) -> Vec<Violation> {
        let mut v = self.pairing.violations();
        v.extend(self.order.violations());
        v
    }

    pub fn is_binary(&self) -> bool {
        self.pairing.is_binary() && self.order.is_binary()
    }

    pub fn random(k: usize, l: usize, rng: &mut Rng) -> Self {
        let mut perm: Vec<usize> = (0..k).collect();
        perm.shuffle(rng);
        let mut seq: Vec<usize> = (0..l).collect();
        seq.shuffle(rng);
        Association::new(PairingMatrix::from_permutation(&perm), DecodingOrder::from_sequence(&seq))
    }
}

pub fn validate_association(a: &Association) -> Result<()> {
    let v = a.violations();
    if v.is_empty() {
        Ok(())
    } else {
        Err(Error::Association(v.iter().map(|x| x.name()).join("; ")))
    }
}

fn factorial(n: usize) -> f64 {
    (1..=n).map(|v| v as f64).product()
}

pub fn association_count(k: usize, l: usize) -> f64 {
    factorial(k) * factorial(l)
}

/// Every binary association, pairings outermost, both in lexicographic
/// permutation order.
pub fn enumerate_associations(k: usize, l: usize) -> Result<Vec<Association>> {
    let count = association_count(k, l);
    if count > ENUMERATION_LIMIT {
        return Err(Error::TooManyAssociations { count, limit: ENUMERATION_LIMIT });
    }
    let orders: Vec<DecodingOrder> =
        (0..l).permutations(l).map(|seq| DecodingOrder::from_sequence(&seq)).collect();
    let mut out = Vec::with_capacity(count as usize);
    for perm in (0..k).permutations(k) {
        let p = PairingMatrix::from_permutation(&perm);
        for o in &orders {
            out.push(Association::new(p.clone(), o.clone()));
        }
    }
    Ok(out)
}

/// Maximum-weight perfect matching on a square matrix (Hungarian method).
/// Returns `assign[row] = column`.
pub fn max_weight_matching(w: &DMatrix<f64>) -> Vec<usize> {
    let n = w.nrows();
    assert_eq!(n, w.ncols(), "matching needs a square matrix");
    if n == 0 {
        return Vec::new();
    }
    // 1-based potentials formulation, minimizing -w.
    let cost = |i: usize, j: usize| -w[(i - 1, j - 1)];
    let inf = f64::INFINITY;
    let mut u = vec![0.0; n + 1];
    let mut v = vec![0.0; n + 1];
    let mut p = vec![0usize; n + 1];
    let mut way = vec![0usize; n + 1];
    for i in 1..=n {
        p[0] = i;
        let mut j0 = 0;
        let mut minv = vec![inf; n + 1];
        let mut used = vec![false; n + 1];
        loop {
            used[j0] = true;
            let i0 = p[j0];
            let mut delta = inf;
            let mut j1 = 0;
            for j in 1..=n {
                if !used[j] {
                    let cur = cost(i0, j) - u[i0] - v[j];
                    if cur < minv[j] {
                        minv[j] = cur;
                        way[j] = j0;
                    }
                    if minv[j] < delta {
                        delta = minv[j];
                        j1 = j;
                    }
                }
            }
            for j in 0..=n {
                if used[j] {
                    u[p[j]] += delta;
                    v[j] -= delta;
                } else {
                    minv[j] -= delta;
                }
            }
            j0 = j1;
            if p[j0] == 0 {
                break;
            }
        }
        loop {
            let j1 = way[j0];
            p[j0] = p[j1];
            j0 = j1;
            if j0 == 0 {
                break;
            }
        }
    }
    let mut assign = vec![0; n];
    for j in 1..=n {
        if p[j] > 0 {
            assign[p[j] - 1] = j - 1;
        }
    }
    assign
}

fn round_half_up(m: &DMatrix<f64>) -> DMatrix<f64> {
    m.map(|v| (v + 0.5).floor().clamp(0.0, 1.0))
}

/// Rounds a relaxed association entrywise and repairs whatever the rounding broke.
pub fn round_and_project(pairing: &PairingMatrix, order: &DecodingOrder) -> Association {
    let mut alpha = PairingMatrix(round_half_up(&pairing.0));
    if !alpha.violations().is_empty() {
        alpha = PairingMatrix::from_permutation(&max_weight_matching(&pairing.0));
    }
    let mut beta = DecodingOrder(round_half_up(&order.0));
    if !beta.violations().is_empty() {
        beta = DecodingOrder::from_sequence(&order.sequence());
    }
    Association::new(alpha, beta)
}
