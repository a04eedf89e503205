//! Boundary traces on ∂B_r: monodromy tracking, decomposition into
//! irreducible pieces and Fourier analysis of the unrolled curves.
//!
//! A trace is parametrized by the angle θ ∈ [0, 2π) of the euclidean disk
//! that the winding map carries onto the boundary circle of the cover, so
//! it always has M·Q̄ uniform samples. Composing the optimal matchings
//! between consecutive samples once around the loop yields the monodromy
//! permutation; each of its cycles unrolls into a closed curve γ_j whose
//! Fourier coefficients describe the piece.

use crate::error::{Error, Result};
use crate::field::MultiField;
use crate::multipoint::{self, match_slices, MatchWorkspace, QPoint};

/// A Q-valued closed curve sampled on the boundary circle of the cover.
#[derive(Debug, Clone)]
pub struct BoundaryTrace {
    qbar: usize,
    angular_base: usize,
    q: usize,
    n: usize,
    radius: f64,
    values: Vec<f64>,
}

impl BoundaryTrace {
    pub fn new(
        qbar: usize,
        angular_base: usize,
        q: usize,
        n: usize,
        radius: f64,
        mut values: Vec<f64>,
    ) -> Result<Self> {
        let mq = qbar * angular_base;
        if values.len() != mq * q * n {
            return Err(Error::Input(format!(
                "expected {} trace coordinates, got {}",
                mq * q * n,
                values.len()
            )));
        }
        for chunk in values.chunks_mut(q * n) {
            for x in chunk.iter_mut() {
                *x += 0.0;
            }
            multipoint::canonicalize(chunk, q, n);
        }
        Ok(Self {
            qbar,
            angular_base,
            q,
            n,
            radius,
            values,
        })
    }

    pub fn qbar(&self) -> usize {
        self.qbar
    }

    pub fn angular_base(&self) -> usize {
        self.angular_base
    }

    pub fn q(&self) -> usize {
        self.q
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    pub fn radius(&self) -> f64 {
        self.radius
    }

    /// Number of angular samples, M·Q̄.
    pub fn samples(&self) -> usize {
        self.qbar * self.angular_base
    }

    /// Euclidean-disk angle of sample m.
    pub fn theta(&self, m: usize) -> f64 {
        std::f64::consts::TAU * m as f64 / self.samples() as f64
    }

    #[inline]
    pub fn values_at(&self, m: usize) -> &[f64] {
        let s = m * self.q * self.n;
        &self.values[s..s + self.q * self.n]
    }

    pub fn point(&self, m: usize) -> QPoint {
        QPoint::new(self.q, self.n, self.values_at(m).to_vec()).expect("stored values are valid")
    }

    /// Arc-length element on the cover circle: r · 2π/M per sample.
    fn arc(&self) -> f64 {
        self.radius * std::f64::consts::TAU / self.angular_base as f64
    }

    /// ∫_{∂B_r} |u|².
    pub fn l2_sq(&self) -> f64 {
        let arc = self.arc();
        self.values
            .chunks(self.q * self.n)
            .map(|c| c.iter().map(|x| x * x).sum::<f64>())
            .sum::<f64>()
            * arc
    }

    /// ∫_{∂B_r} |η∘u|.
    pub fn eta_l1(&self) -> f64 {
        let arc = self.arc();
        let mut acc = 0.0;
        for m in 0..self.samples() {
            let v = self.values_at(m);
            let mut sq = 0.0;
            for c in 0..self.n {
                let mut mean = 0.0;
                for i in 0..self.q {
                    mean += v[i * self.n + c];
                }
                mean /= self.q as f64;
                sq += mean * mean;
            }
            acc += sq.sqrt();
        }
        acc * arc
    }

    /// ∫_{∂B_r} 𝒢(u, v)² via node-wise optimal matching.
    pub fn g_l2_sq_distance(&self, other: &BoundaryTrace) -> Result<f64> {
        self.check_compatible(other)?;
        let mut ws = MatchWorkspace::new();
        let arc = self.arc();
        let mut acc = 0.0;
        for m in 0..self.samples() {
            let mt = match_slices(
                self.values_at(m),
                other.values_at(m),
                self.q,
                self.n,
                crate::EPS_TIE,
                &mut ws,
            );
            acc += mt.cost;
        }
        Ok(acc * arc)
    }

    /// sup over samples of 𝒢(u, v).
    pub fn sup_distance(&self, other: &BoundaryTrace) -> Result<f64> {
        self.check_compatible(other)?;
        let mut ws = MatchWorkspace::new();
        let mut best: f64 = 0.0;
        for m in 0..self.samples() {
            let mt = match_slices(
                self.values_at(m),
                other.values_at(m),
                self.q,
                self.n,
                crate::EPS_TIE,
                &mut ws,
            );
            best = best.max(mt.cost);
        }
        Ok(best.sqrt())
    }

    /// Per-sample scaling of every value.
    pub fn scaled(&self, factor: f64) -> BoundaryTrace {
        let mut out = self.clone();
        for x in out.values.iter_mut() {
            *x *= factor;
        }
        out
    }

    /// Same samples reported at a different radius (used by the blow-up
    /// rescalings, which live on ∂B_1).
    pub fn at_radius(&self, radius: f64) -> BoundaryTrace {
        let mut out = self.clone();
        out.radius = radius;
        out
    }

    fn check_compatible(&self, other: &BoundaryTrace) -> Result<()> {
        if self.q != other.q
            || self.n != other.n
            || self.samples() != other.samples()
            || self.qbar != other.qbar
        {
            return Err(Error::Input("trace layout mismatch".into()));
        }
        Ok(())
    }
}

/// Restriction of a field to ∂B_r, with linear radial interpolation between
/// grid rings. Values at grid radii are copied bit-exactly.
pub fn extract_trace(field: &MultiField, r: f64, eps_tie: f64) -> Result<BoundaryTrace> {
    if !(r > 0.0) {
        return Err(Error::Input("trace radius must be positive".into()));
    }
    field.grid().check_radius(r)?;
    let grid = field.grid();
    let mq = grid.angular_count();
    let q = field.q();
    let n = field.dim();
    let mut values = Vec::with_capacity(mq * q * n);
    let pos = r / grid.dr();
    let k = pos.round() as usize;
    if (pos - k as f64).abs() < 1e-12 && k >= 1 {
        for m in 0..mq {
            values.extend_from_slice(field.values_at(k, m));
        }
    } else {
        for m in 0..mq {
            values.extend_from_slice(&field.values_interpolated(r, m, eps_tie)?);
        }
    }
    BoundaryTrace::new(grid.qbar(), grid.angular_base(), q, n, r, values)
}

/// One irreducible piece: a closed curve of cycle length Q_j given by its
/// Fourier coefficients (the constant term is a\[0\]/2).
#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct TracePiece {
    pub q_j: usize,
    pub multiplicity: usize,
    /// a[l][c], l = 0..=L_max.
    pub a: Vec<Vec<f64>>,
    /// b[l][c]; b[0] is identically zero.
    pub b: Vec<Vec<f64>>,
    /// Max distance between the unrolled samples and their synthesis.
    pub truncation_error: f64,
}

impl TracePiece {
    /// γ_j(t) from the coefficients.
    pub fn curve_at(&self, t: f64) -> Vec<f64> {
        let n = self.a[0].len();
        let mut v = vec![0.0; n];
        for c in 0..n {
            v[c] = 0.5 * self.a[0][c];
        }
        for l in 1..self.a.len() {
            let (s, co) = (l as f64 * t).sin_cos();
            for c in 0..n {
                v[c] += self.a[l][c] * co + self.b[l][c] * s;
            }
        }
        v
    }

    /// Σ_l l (|a_l|² + |b_l|²), the Dirichlet weight of the piece.
    pub fn fourier_energy(&self) -> f64 {
        let mut acc = 0.0;
        for l in 1..self.a.len() {
            let sq: f64 = self.a[l].iter().map(|x| x * x).sum::<f64>()
                + self.b[l].iter().map(|x| x * x).sum::<f64>();
            acc += l as f64 * sq;
        }
        acc
    }
}

/// Decomposition of a boundary trace into irreducible pieces.
#[derive(Debug, Clone, serde::Serialize, serde::Deserialize)]
pub struct TraceDecomposition {
    pub qbar: usize,
    pub q: usize,
    pub n: usize,
    pub angular_base: usize,
    pub l_max: usize,
    pub pieces: Vec<TracePiece>,
    /// Slot permutation at sample 0 accumulated over one loop.
    pub monodromy: Vec<usize>,
}

impl TraceDecomposition {
    /// Σ_j multiplicity · Q_j (must equal Q).
    pub fn total_q(&self) -> usize {
        self.pieces.iter().map(|p| p.multiplicity * p.q_j).sum()
    }

    /// Reassembles the Q-valued value at euclidean-disk angle θ.
    pub fn synthesize(&self, theta: f64) -> QPoint {
        let mut values = Vec::with_capacity(self.q * self.n);
        for piece in &self.pieces {
            for _ in 0..piece.multiplicity {
                for i in 0..piece.q_j {
                    let t = (theta + std::f64::consts::TAU * i as f64) / piece.q_j as f64;
                    values.extend_from_slice(&piece.curve_at(t));
                }
            }
        }
        QPoint::new(self.q, self.n, values).expect("synthesis yields q values")
    }

    /// Trace sampled from the coefficients on the standard angular grid.
    pub fn synthesize_trace(&self, radius: f64) -> Result<BoundaryTrace> {
        let mq = self.qbar * self.angular_base;
        let mut values = Vec::with_capacity(mq * self.q * self.n);
        for m in 0..mq {
            let theta = std::f64::consts::TAU * m as f64 / mq as f64;
            values.extend_from_slice(self.synthesize(theta).coords());
        }
        BoundaryTrace::new(self.qbar, self.angular_base, self.q, self.n, radius, values)
    }

    /// Copy with the mean of every piece removed (a\[0\] zeroed).
    pub fn centered(&self) -> Self {
        let mut out = self.clone();
        for piece in out.pieces.iter_mut() {
            for x in piece.a[0].iter_mut() {
                *x = 0.0;
            }
        }
        out
    }
}

/// Decomposes a trace by composing per-step optimal matchings around the
/// loop. Ambiguous steps reject the decomposition: silently perturbing a
/// collided matching would corrupt the monodromy.
pub fn decompose_trace(
    trace: &BoundaryTrace,
    l_max: usize,
    eps_tie: f64,
) -> Result<TraceDecomposition> {
    let mq = trace.samples();
    let q = trace.q();
    let n = trace.dim();

    // chain[m][s]: slot at sample m of the sheet occupying slot s at sample 0
    let mut ws = MatchWorkspace::new();
    let mut chain: Vec<usize> = (0..q).collect();
    let mut chains = Vec::with_capacity(mq * q);
    chains.extend_from_slice(&chain);
    let mut monodromy: Vec<usize> = (0..q).collect();
    for m in 0..mq {
        let a = trace.values_at(m);
        let b = trace.values_at((m + 1) % mq);
        let mt = match_slices(a, b, q, n, eps_tie, &mut ws);
        if mt.ambiguous {
            return Err(Error::Collision(format!(
                "matching between samples {} and {} is ambiguous (cost {:.3e}); refine the angular grid or perturb the field",
                m,
                (m + 1) % mq,
                mt.cost
            )));
        }
        for s in 0..q {
            chain[s] = mt.perm[chain[s]];
        }
        if m + 1 < mq {
            chains.extend_from_slice(&chain);
        } else {
            monodromy.copy_from_slice(&chain);
        }
    }

    // cycles of the monodromy, each started at its smallest slot
    let mut seen = vec![false; q];
    let mut pieces: Vec<TracePiece> = Vec::new();
    for start in 0..q {
        if seen[start] {
            continue;
        }
        let mut cycle = vec![start];
        seen[start] = true;
        let mut s = monodromy[start];
        while s != start {
            seen[s] = true;
            cycle.push(s);
            s = monodromy[s];
        }
        let q_j = cycle.len();
        // unroll: γ sampled at N = mq·Q_j uniform parameters, reading the
        // trace once around the loop per cycle element
        let nn = mq * q_j;
        let mut gamma = vec![0.0; nn * n];
        for (u, &slot0) in cycle.iter().enumerate() {
            for m in 0..mq {
                let slot = chains[m * q + slot0];
                let src = &trace.values_at(m)[slot * n..slot * n + n];
                let dst = (u * mq + m) * n;
                gamma[dst..dst + n].copy_from_slice(src);
            }
        }
        let piece = fourier_analyze(&gamma, nn, n, q_j, l_max);
        // merge exact repeats into multiplicities
        if let Some(existing) = pieces
            .iter_mut()
            .find(|p| p.q_j == piece.q_j && p.a == piece.a && p.b == piece.b)
        {
            existing.multiplicity += 1;
        } else {
            pieces.push(piece);
        }
    }

    let dec = TraceDecomposition {
        qbar: trace.qbar(),
        q,
        n,
        angular_base: trace.angular_base(),
        l_max,
        pieces,
        monodromy,
    };
    debug_assert_eq!(dec.total_q(), q);
    Ok(dec)
}

fn fourier_analyze(gamma: &[f64], nn: usize, n: usize, q_j: usize, l_max: usize) -> TracePiece {
    // keep the band inside the Nyquist limit of the unrolled curve
    let l_eff = l_max.min((nn - 1) / 2);
    let mut a = vec![vec![0.0; n]; l_eff + 1];
    let mut b = vec![vec![0.0; n]; l_eff + 1];
    let base = std::f64::consts::TAU / nn as f64;
    for l in 0..=l_eff {
        let mut ac = vec![0.0; n];
        let mut bc = vec![0.0; n];
        for t in 0..nn {
            let (s, co) = (l as f64 * t as f64 * base).sin_cos();
            for c in 0..n {
                let v = gamma[t * n + c];
                ac[c] += v * co;
                bc[c] += v * s;
            }
        }
        let norm = 2.0 / nn as f64;
        for c in 0..n {
            a[l][c] = ac[c] * norm;
            b[l][c] = if l == 0 { 0.0 } else { bc[c] * norm };
        }
    }
    let mut piece = TracePiece {
        q_j,
        multiplicity: 1,
        a,
        b,
        truncation_error: 0.0,
    };
    let mut err: f64 = 0.0;
    for t in 0..nn {
        let synth = piece.curve_at(t as f64 * base);
        let mut sq = 0.0;
        for c in 0..n {
            let d = synth[c] - gamma[t * n + c];
            sq += d * d;
        }
        err = err.max(sq);
    }
    piece.truncation_error = err.sqrt();
    piece
}
