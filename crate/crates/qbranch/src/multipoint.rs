//! The metric space of unordered Q-tuples of points in ℝⁿ.
//!
//! Values are stored with repetition in a canonical lexicographic order, so
//! re-canonicalizing is idempotent and serialization is deterministic. The
//! distance between two tuples is the square root of the minimal sum of
//! squared pairwise distances over bijections, computed by an O(Q³)
//! assignment routine; a brute-force enumeration over all Q! bijections
//! lives in test code as the independent oracle.

use crate::assignment::{cost_of, AssignmentSolver};
use crate::error::{Error, Result};

/// Largest Q for which ties are resolved by exhaustive scan.
const MAX_TIE_SCAN: usize = 6;

/// An unordered Q-tuple of points in ℝⁿ, the pointwise value of a
/// multivalued map.
#[derive(Debug, Clone, PartialEq)]
pub struct QPoint {
    q: usize,
    n: usize,
    values: Vec<f64>,
}

impl QPoint {
    /// Builds a tuple from `q * n` coordinates (point-major) and stores it
    /// in canonical order.
    pub fn new(q: usize, n: usize, mut values: Vec<f64>) -> Result<Self> {
        if q == 0 || n == 0 {
            return Err(Error::Input("QPoint requires q >= 1 and n >= 1".into()));
        }
        if values.len() != q * n {
            return Err(Error::Input(format!(
                "expected {} coordinates, got {}",
                q * n,
                values.len()
            )));
        }
        if values.iter().any(|x| !x.is_finite()) {
            return Err(Error::Input("QPoint coordinates must be finite".into()));
        }
        // normalize -0.0 so canonical order is representation-independent
        for x in values.iter_mut() {
            *x += 0.0;
        }
        canonicalize(&mut values, q, n);
        Ok(Self { q, n, values })
    }

    /// Tuple of `q` copies of the same point.
    pub fn constant(q: usize, point: &[f64]) -> Result<Self> {
        let mut values = Vec::with_capacity(q * point.len());
        for _ in 0..q {
            values.extend_from_slice(point);
        }
        Self::new(q, point.len(), values)
    }

    pub fn q(&self) -> usize {
        self.q
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    /// Coordinates of the `i`-th value in canonical order.
    pub fn value(&self, i: usize) -> &[f64] {
        &self.values[i * self.n..(i + 1) * self.n]
    }

    /// All coordinates, point-major, in canonical order.
    pub fn coords(&self) -> &[f64] {
        &self.values
    }

    /// Tuple with `v` added to every value.
    pub fn translated(&self, v: &[f64]) -> Result<Self> {
        if v.len() != self.n {
            return Err(Error::Input("translation dimension mismatch".into()));
        }
        let mut values = self.values.clone();
        for chunk in values.chunks_mut(self.n) {
            for (x, dv) in chunk.iter_mut().zip(v) {
                *x += dv;
            }
        }
        Self::new(self.q, self.n, values)
    }
}

/// Canonical multiset order: lexicographic on coordinates.
pub(crate) fn canonicalize(values: &mut [f64], q: usize, n: usize) {
    debug_assert_eq!(values.len(), q * n);
    if q < 2 {
        return;
    }
    // sort the q points of length n lexicographically
    let mut idx: Vec<usize> = (0..q).collect();
    idx.sort_unstable_by(|&a, &b| lex_cmp(&values[a * n..a * n + n], &values[b * n..b * n + n]));
    let old = values.to_vec();
    for (slot, &src) in idx.iter().enumerate() {
        values[slot * n..slot * n + n].copy_from_slice(&old[src * n..src * n + n]);
    }
}

pub(crate) fn lex_cmp(a: &[f64], b: &[f64]) -> std::cmp::Ordering {
    for (x, y) in a.iter().zip(b) {
        match x.partial_cmp(y).expect("finite coordinates") {
            std::cmp::Ordering::Equal => continue,
            ord => return ord,
        }
    }
    std::cmp::Ordering::Equal
}

#[inline]
pub(crate) fn sq_dist(a: &[f64], b: &[f64]) -> f64 {
    let mut s = 0.0;
    for (x, y) in a.iter().zip(b) {
        let d = x - y;
        s += d * d;
    }
    s
}

/// Arithmetic mean of the Q values.
pub fn eta(a: &QPoint) -> Vec<f64> {
    let mut mean = vec![0.0; a.n];
    for i in 0..a.q {
        for (m, x) in mean.iter_mut().zip(a.value(i)) {
            *m += x;
        }
    }
    for m in mean.iter_mut() {
        *m /= a.q as f64;
    }
    mean
}

/// Minimal distance between distinct values; `+inf` when Q = 1 or all
/// values coincide (the separation of Definition-style b-separated data is
/// undefined there, so the sentinel is documented in serialized output).
pub fn separation(a: &QPoint) -> f64 {
    let mut best = f64::INFINITY;
    for i in 0..a.q {
        for j in (i + 1)..a.q {
            let vi = a.value(i);
            let vj = a.value(j);
            if vi != vj {
                best = best.min(sq_dist(vi, vj).sqrt());
            }
        }
    }
    best
}

/// An optimal bijection between two tuples.
#[derive(Debug, Clone)]
pub struct Matching {
    /// Value `i` of the first tuple pairs with value `perm[i]` of the second.
    pub perm: Vec<usize>,
    /// Minimal sum of squared pairwise distances.
    pub cost: f64,
    /// Whether a genuinely different bijection lies within the tie
    /// tolerance of the optimum. Permutations of exactly equal values do
    /// not count as different bijections.
    pub ambiguous: bool,
}

impl Matching {
    pub fn distance(&self) -> f64 {
        self.cost.sqrt()
    }

    /// Inverse permutation.
    pub fn inverse(&self) -> Vec<usize> {
        let mut inv = vec![0usize; self.perm.len()];
        for (i, &j) in self.perm.iter().enumerate() {
            inv[j] = i;
        }
        inv
    }
}

/// Optimal matching between the raw coordinate slices of two Q-tuples.
///
/// `a` and `b` are point-major `q * n` slices. The permutation minimizes
/// the sum of squared distances; ties are broken towards the
/// lexicographically smallest permutation among exact-cost minimizers when
/// Q ≤ 6. Scratch buffers live in `ws` so ring sweeps do not reallocate.
pub fn match_slices(a: &[f64], b: &[f64], q: usize, n: usize, eps_tie: f64, ws: &mut MatchWorkspace) -> Matching {
    debug_assert_eq!(a.len(), q * n);
    debug_assert_eq!(b.len(), q * n);

    if q == 1 {
        return Matching {
            perm: vec![0],
            cost: sq_dist(a, b),
            ambiguous: false,
        };
    }

    ws.cost.clear();
    ws.cost.reserve(q * q);
    for i in 0..q {
        let ai = &a[i * n..i * n + n];
        for j in 0..q {
            ws.cost.push(sq_dist(ai, &b[j * n..j * n + n]));
        }
    }

    // Fast path: when each row minimum is unique by more than the tie
    // tolerance and the row minima form a permutation, that permutation is
    // optimal and no other bijection comes within the tolerance.
    let MatchWorkspace {
        cost: cost_buf,
        solver,
        taken,
        mins,
    } = ws;
    if let Some(m) = row_min_shortcut(cost_buf, q, eps_tie, taken, mins) {
        return m;
    }

    let perm = solver.solve(cost_buf, q);
    let cost = cost_of(cost_buf, q, &perm);

    if q <= MAX_TIE_SCAN {
        resolve_ties_by_scan(a, b, q, n, cost_buf, perm, cost, eps_tie)
    } else {
        let ambiguous = second_best_gap(cost_buf, q, &perm, solver) <= eps_tie;
        Matching { perm, cost, ambiguous }
    }
}

/// Reusable buffers for [`match_slices`].
#[derive(Debug, Default)]
pub struct MatchWorkspace {
    cost: Vec<f64>,
    solver: AssignmentSolver,
    taken: Vec<bool>,
    mins: Vec<usize>,
}

impl MatchWorkspace {
    pub fn new() -> Self {
        Self::default()
    }
}

fn row_min_shortcut(
    cost: &[f64],
    q: usize,
    eps_tie: f64,
    taken: &mut Vec<bool>,
    mins: &mut Vec<usize>,
) -> Option<Matching> {
    taken.clear();
    taken.resize(q, false);
    mins.clear();
    for i in 0..q {
        let row = &cost[i * q..(i + 1) * q];
        let mut jmin = 0usize;
        let mut cmin = row[0];
        let mut csecond = f64::INFINITY;
        for (j, &c) in row.iter().enumerate().skip(1) {
            if c < cmin {
                csecond = cmin;
                cmin = c;
                jmin = j;
            } else if c < csecond {
                csecond = c;
            }
        }
        if !(csecond - cmin > eps_tie) || taken[jmin] {
            return None;
        }
        taken[jmin] = true;
        mins.push(jmin);
    }
    let perm = mins.clone();
    let cost_total = cost_of(cost, q, &perm);
    Some(Matching {
        perm,
        cost: cost_total,
        ambiguous: false,
    })
}

/// Exhaustive scan used for the ambiguity flag and the deterministic
/// tie-break. The returned cost is the assignment routine's value; the scan
/// only canonicalizes which exact-cost minimizer is reported and decides
/// whether a genuinely different bijection ties within `eps_tie`.
fn resolve_ties_by_scan(
    a: &[f64],
    b: &[f64],
    q: usize,
    n: usize,
    cost: &[f64],
    hungarian_perm: Vec<usize>,
    hungarian_cost: f64,
    eps_tie: f64,
) -> Matching {
    // collapse exactly equal values so permutations of repeats are not
    // treated as distinct bijections
    let mut b_rep = vec![0usize; q];
    for j in 0..q {
        let mut rep = j;
        for j2 in 0..j {
            if b[j2 * n..j2 * n + n] == b[j * n..j * n + n] {
                rep = j2;
                break;
            }
        }
        b_rep[j] = rep;
    }
    let mut a_group = vec![0usize; q]; // index of first value equal to a_i
    for i in 0..q {
        let mut g = i;
        for i2 in 0..i {
            if a[i2 * n..i2 * n + n] == a[i * n..i * n + n] {
                g = i2;
                break;
            }
        }
        a_group[i] = g;
    }
    let signature = |perm: &[usize]| -> Vec<usize> {
        // per group of equal a-values, the sorted multiset of matched
        // b-representatives
        let mut sig: Vec<usize> = perm.iter().map(|&j| b_rep[j]).collect();
        let mut start = 0;
        while start < q {
            let mut end = start + 1;
            while end < q && a_group[end] == a_group[start] {
                end += 1;
            }
            sig[start..end].sort_unstable();
            start = end;
        }
        sig
    };

    // first pass: lexicographically smallest permutation with the exact
    // optimal cost (the assignment routine's permutation is in the scan, so
    // the set is nonempty)
    let mut best: Option<Vec<usize>> = None;
    let mut scratch: Vec<usize> = (0..q).collect();
    loop {
        if best.is_none() && cost_of(cost, q, &scratch) == hungarian_cost {
            best = Some(scratch.clone());
            break;
        }
        if !next_permutation(&mut scratch) {
            break;
        }
    }
    let perm = best.unwrap_or(hungarian_perm);
    let sig_ref = signature(&perm);

    let mut ambiguous = false;
    let mut p: Vec<usize> = (0..q).collect();
    loop {
        let c = cost_of(cost, q, &p);
        if c <= hungarian_cost + eps_tie && signature(&p) != sig_ref {
            ambiguous = true;
            break;
        }
        if !next_permutation(&mut p) {
            break;
        }
    }

    Matching {
        perm,
        cost: hungarian_cost,
        ambiguous,
    }
}

/// Second-best assignment cost gap via forbidden edges (used beyond the
/// exhaustive-scan range; index-level, so exact repeats may overreport).
fn second_best_gap(cost: &[f64], q: usize, perm: &[usize], solver: &mut AssignmentSolver) -> f64 {
    let base = cost_of(cost, q, perm);
    let mut gap = f64::INFINITY;
    let mut modified = cost.to_vec();
    for i in 0..q {
        let saved = modified[i * q + perm[i]];
        modified[i * q + perm[i]] = f64::INFINITY;
        let alt = solver.solve(&modified, q);
        let c = cost_of(&modified, q, &alt);
        if c.is_finite() {
            gap = gap.min(c - base);
        }
        modified[i * q + perm[i]] = saved;
    }
    gap
}

fn next_permutation(p: &mut [usize]) -> bool {
    let n = p.len();
    if n < 2 {
        return false;
    }
    let mut i = n - 1;
    while i > 0 && p[i - 1] >= p[i] {
        i -= 1;
    }
    if i == 0 {
        return false;
    }
    let mut j = n - 1;
    while p[j] <= p[i - 1] {
        j -= 1;
    }
    p.swap(i - 1, j);
    p[i..].reverse();
    true
}

fn check_compatible(a: &QPoint, b: &QPoint) -> Result<()> {
    if a.q != b.q {
        return Err(Error::Input(format!("Q mismatch: {} vs {}", a.q, b.q)));
    }
    if a.n != b.n {
        return Err(Error::Input(format!(
            "target dimension mismatch: {} vs {}",
            a.n, b.n
        )));
    }
    Ok(())
}

/// Optimal bijection realizing the matching distance, with deterministic
/// tie-break and ambiguity flag.
pub fn match_selection(a: &QPoint, b: &QPoint, eps_tie: f64) -> Result<Matching> {
    check_compatible(a, b)?;
    let mut ws = MatchWorkspace::new();
    Ok(match_slices(&a.values, &b.values, a.q, a.n, eps_tie, &mut ws))
}

/// The matching distance: square root of the minimal sum of squared
/// pairwise distances over bijections.
pub fn g_distance(a: &QPoint, b: &QPoint) -> Result<f64> {
    Ok(match_selection(a, b, crate::EPS_TIE)?.distance())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn qp(n: usize, pts: &[&[f64]]) -> QPoint {
        let mut v = Vec::new();
        for p in pts {
            v.extend_from_slice(p);
        }
        QPoint::new(pts.len(), n, v).unwrap()
    }

    /// Independent oracle: minimum over all Q! bijections, each candidate
    /// accumulated in ascending index order.
    fn brute_distance(a: &QPoint, b: &QPoint) -> f64 {
        let q = a.q();
        let mut perm: Vec<usize> = (0..q).collect();
        let mut best = f64::INFINITY;
        loop {
            let mut s = 0.0;
            for (i, &j) in perm.iter().enumerate() {
                s += sq_dist(a.value(i), b.value(j));
            }
            if s < best {
                best = s;
            }
            if !next_permutation(&mut perm) {
                break;
            }
        }
        best.sqrt()
    }

    #[test]
    fn canonical_order_is_idempotent() {
        let a = qp(2, &[&[3.0, 4.0], &[0.0, 0.0]]);
        assert_eq!(a.value(0), &[0.0, 0.0]);
        assert_eq!(a.value(1), &[3.0, 4.0]);
        let again = QPoint::new(2, 2, a.coords().to_vec()).unwrap();
        assert_eq!(a, again);
    }

    #[test]
    fn distance_two_points_collapsed() {
        // both bijections pair (0,0) with one origin copy and (3,4) with
        // the other, each giving sqrt(0 + 25)
        let a = qp(2, &[&[0.0, 0.0], &[3.0, 4.0]]);
        let b = qp(2, &[&[0.0, 0.0], &[0.0, 0.0]]);
        assert_eq!(g_distance(&a, &b).unwrap(), 5.0);
    }

    #[test]
    fn distance_identical_tuples_is_zero() {
        let a = qp(3, &[&[1.0, 2.0, 3.0], &[0.0, 0.0, 1.0], &[-1.0, 5.0, 2.0]]);
        assert_eq!(g_distance(&a, &a).unwrap(), 0.0);
    }

    #[test]
    fn distance_shifted_triple() {
        // brute force over all 6 permutations gives 3 * 0.5^2 = 0.75
        let a = qp(1, &[&[0.0], &[1.0], &[2.0]]);
        let b = qp(1, &[&[0.5], &[1.5], &[2.5]]);
        let d = g_distance(&a, &b).unwrap();
        assert!((d - 0.75f64.sqrt()).abs() < 1e-15, "d = {d}");
        assert_eq!(d, brute_distance(&a, &b));
    }

    #[test]
    fn distance_mismatched_inputs_error() {
        let a = qp(1, &[&[0.0], &[1.0]]);
        let b = qp(1, &[&[0.0]]);
        assert!(g_distance(&a, &b).is_err());
        let c = qp(2, &[&[0.0, 0.0], &[1.0, 1.0]]);
        assert!(g_distance(&a, &c).is_err());
    }

    #[test]
    fn eta_examples() {
        let a = qp(2, &[&[1.0, 0.0], &[3.0, 0.0]]);
        assert_eq!(eta(&a), vec![2.0, 0.0]);
        let c = QPoint::constant(4, &[7.0, -1.0]).unwrap();
        assert_eq!(eta(&c), vec![7.0, -1.0]);
        let s = qp(1, &[&[0.0], &[1.0], &[5.0]]);
        assert_eq!(eta(&s), vec![2.0]);
    }

    #[test]
    fn eta_translation_equivariance() {
        let a = qp(2, &[&[1.0, 0.0], &[3.0, 2.0], &[-1.0, 4.0]]);
        let t = a.translated(&[0.5, -2.0]).unwrap();
        let ea = eta(&a);
        let et = eta(&t);
        assert!((et[0] - (ea[0] + 0.5)).abs() < 1e-15);
        assert!((et[1] - (ea[1] - 2.0)).abs() < 1e-15);
    }

    #[test]
    fn separation_examples() {
        let a = qp(1, &[&[0.0], &[1.0], &[3.0]]);
        assert_eq!(separation(&a), 1.0);
        let b = QPoint::constant(2, &[4.0, 4.0]).unwrap();
        assert_eq!(separation(&b), f64::INFINITY);
        let c = qp(2, &[&[0.0, 0.0], &[0.0, 2.0], &[3.0, 0.0]]);
        assert_eq!(separation(&c), 2.0);
        // repeated value next to a distinct one: repeats do not count
        let d = qp(1, &[&[5.0], &[5.0], &[7.0]]);
        assert_eq!(separation(&d), 2.0);
    }

    #[test]
    fn matching_identity_on_equal_tuples() {
        let a = qp(2, &[&[0.0, 1.0], &[2.0, 3.0], &[4.0, 5.0]]);
        let m = match_selection(&a, &a, 1e-9).unwrap();
        assert_eq!(m.perm, vec![0, 1, 2]);
        assert_eq!(m.cost, 0.0);
        assert!(!m.ambiguous);
    }

    #[test]
    fn matching_swap_detected() {
        let a = qp(1, &[&[0.0], &[10.0]]);
        let b = qp(1, &[&[9.5], &[0.5]]);
        let m = match_selection(&a, &b, 1e-9).unwrap();
        // canonical order sorts b to [0.5, 9.5], so 0 -> 0 and 10 -> 9.5
        assert_eq!(m.perm, vec![0, 1]);
        assert!((m.distance() - 0.5f64.hypot(0.5)).abs() < 1e-15);
        assert!(!m.ambiguous);
    }

    #[test]
    fn matching_reproduces_distance() {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(7);
        for _ in 0..300 {
            let q = rng.gen_range(2..=4);
            let n = rng.gen_range(1..=3);
            let mk = |rng: &mut rand_chacha::ChaCha8Rng| {
                let vals: Vec<f64> = (0..q * n).map(|_| rng.gen_range(-2.0..2.0)).collect();
                QPoint::new(q, n, vals).unwrap()
            };
            let a = mk(&mut rng);
            let b = mk(&mut rng);
            let m = match_selection(&a, &b, 1e-9).unwrap();
            let mut s = 0.0;
            for (i, &j) in m.perm.iter().enumerate() {
                s += sq_dist(a.value(i), b.value(j));
            }
            assert_eq!(s, m.cost);
            assert_eq!(m.distance(), g_distance(&a, &b).unwrap());
            assert_eq!(g_distance(&a, &b).unwrap(), brute_distance(&a, &b));
        }
    }

    #[test]
    fn ambiguity_on_symmetric_configuration() {
        // two bijections with genuinely different pairings tie exactly
        let a = qp(2, &[&[0.0, 1.0], &[0.0, -1.0]]);
        let b = qp(2, &[&[1.0, 0.0], &[-1.0, 0.0]]);
        let m = match_selection(&a, &b, 1e-9).unwrap();
        assert!(m.ambiguous);
        // deterministic tie-break: lexicographically smallest permutation
        assert_eq!(m.perm, vec![0, 1]);
    }

    #[test]
    fn repeats_are_not_ambiguous() {
        // swapping two copies of the same value is the same bijection
        let a = qp(1, &[&[0.0], &[0.0]]);
        let b = qp(1, &[&[-1.0], &[1.0]]);
        let m = match_selection(&a, &b, 1e-9).unwrap();
        assert!(!m.ambiguous);
        assert_eq!(m.cost, 2.0);
        let c = QPoint::constant(3, &[2.0]).unwrap();
        let m2 = match_selection(&c, &c, 1e-9).unwrap();
        assert!(!m2.ambiguous);
    }

    #[test]
    fn metric_properties_against_brute_force() {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(0xa1b2);
        for trial in 0..1000 {
            let q = rng.gen_range(1..=4);
            let n = rng.gen_range(1..=3);
            let mk = |rng: &mut rand_chacha::ChaCha8Rng| {
                let vals: Vec<f64> = (0..q * n).map(|_| rng.gen_range(-1.0..1.0)).collect();
                QPoint::new(q, n, vals).unwrap()
            };
            let a = mk(&mut rng);
            let b = mk(&mut rng);
            let c = mk(&mut rng);
            let dab = g_distance(&a, &b).unwrap();
            let dba = g_distance(&b, &a).unwrap();
            let dac = g_distance(&a, &c).unwrap();
            let dbc = g_distance(&b, &c).unwrap();
            assert!(dab >= 0.0);
            assert!((dab - dba).abs() <= 1e-12 * (1.0 + dab), "trial {trial}");
            assert_eq!(dab, brute_distance(&a, &b), "trial {trial}");
            // triangle inequality with a rounding allowance
            assert!(dac <= dab + dbc + 1e-12, "trial {trial}");
        }
        // identity of indiscernibles: zero distance iff equal as multisets
        let a = qp(1, &[&[1.0], &[2.0]]);
        let b = qp(1, &[&[2.0], &[1.0]]);
        assert_eq!(g_distance(&a, &b).unwrap(), 0.0);
        assert_eq!(a, b);
    }

    #[test]
    fn translation_and_rotation_invariance() {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(99);
        let theta: f64 = 0.7;
        let (c, s) = (theta.cos(), theta.sin());
        for _ in 0..100 {
            let q = rng.gen_range(1..=4);
            let mk = |rng: &mut rand_chacha::ChaCha8Rng| {
                let vals: Vec<f64> = (0..q * 2).map(|_| rng.gen_range(-1.0..1.0)).collect();
                QPoint::new(q, 2, vals).unwrap()
            };
            let a = mk(&mut rng);
            let b = mk(&mut rng);
            let d0 = g_distance(&a, &b).unwrap();
            let shift = [0.3, -1.2];
            let d1 = g_distance(
                &a.translated(&shift).unwrap(),
                &b.translated(&shift).unwrap(),
            )
            .unwrap();
            assert!((d0 - d1).abs() <= 1e-12 * (1.0 + d0));
            let rot = |p: &QPoint| {
                let mut vals = Vec::new();
                for i in 0..p.q() {
                    let v = p.value(i);
                    vals.push(c * v[0] - s * v[1]);
                    vals.push(s * v[0] + c * v[1]);
                }
                QPoint::new(p.q(), 2, vals).unwrap()
            };
            let d2 = g_distance(&rot(&a), &rot(&b)).unwrap();
            assert!((d0 - d2).abs() <= 1e-12 * (1.0 + d0));
        }
    }
}
