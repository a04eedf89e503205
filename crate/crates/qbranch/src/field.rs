//! Q-valued fields sampled on a branched grid.
//!
//! Values are stored per node in canonical order; the coherent sheet
//! structure needed by finite differences is recovered through optimal
//! matchings between neighboring nodes. Per-ring reductions (boundary
//! norms, radial energies, Dirichlet density) are the building blocks of
//! the frequency diagnostics and are computed in a single sweep, in a fixed
//! deterministic order within each ring.

use crate::error::{Error, Result};
use crate::grid::BranchedGrid;
use crate::multipoint::{self, match_slices, MatchWorkspace, QPoint};
use rayon::prelude::*;

#[derive(Debug, Clone)]
pub struct MultiField {
    grid: BranchedGrid,
    q: usize,
    n: usize,
    values: Vec<f64>,
}

/// Matchings from each ring to the next, shared by gradient stencils.
#[derive(Debug, Clone)]
pub struct RadialSelections {
    /// perm\[(k-1) * MQ̄ * q + m * q + i\]: sheet at ring k+1 matched to
    /// sheet i at ring k, for k = 1..K-1.
    perm: Vec<u8>,
    ambiguous: Vec<bool>,
    mq: usize,
    q: usize,
    eps_tie: f64,
}

/// Matchings along one ring from each node to its angular successor.
#[derive(Debug, Clone)]
pub struct RingChain {
    pub perm: Vec<u8>,
    pub ambiguous: Vec<bool>,
}

/// Per-ring quadrature reductions; index 0 is the center and holds zeros.
#[derive(Debug, Clone)]
pub struct RingScan {
    /// ∫_{∂B_r} |f|²
    pub h: Vec<f64>,
    /// ∫_{∂B_r} Σ_i ⟨f_i, ∂_ν f_i⟩
    pub e: Vec<f64>,
    /// ∫_{∂B_r} |∂_ν f|²
    pub g: Vec<f64>,
    /// ∫_{∂B_r} |Df|² (the derivative of the Dirichlet energy)
    pub dens: Vec<f64>,
    /// ∫_{∂B_r} |η∘f|
    pub eta_abs: Vec<f64>,
    /// max over nodes and sheets of the gradient norm |∇f_i|
    pub max_sheet_grad: Vec<f64>,
    /// nodes per ring whose gradient was dropped for ambiguity (their
    /// weight is redistributed over the ring)
    pub excluded: Vec<usize>,
}

impl RingScan {
    /// ∫_{B_r} |Df|² at ring radius k: trapezoid of the density rings,
    /// consistent with the grid quadrature.
    pub fn dirichlet_to(&self, dr: f64, k: usize) -> f64 {
        let mut acc = 0.0;
        for j in 1..k {
            acc += self.dens[j];
        }
        dr * (acc + 0.5 * self.dens[k])
    }
}

impl MultiField {
    /// Samples `f(k, m, r, φ) -> q·n coordinates` on every node. The center
    /// is sampled once as `f(0, 0, 0, 0)`.
    pub fn from_fn<F>(grid: BranchedGrid, q: usize, n: usize, f: F) -> Result<Self>
    where
        F: Fn(usize, usize, f64, f64) -> Vec<f64> + Sync,
    {
        check_qn(q, n)?;
        let mq = grid.angular_count();
        let mut values = vec![0.0; grid.node_count() * q * n];
        let center = f(0, 0, 0.0, 0.0);
        if center.len() != q * n {
            return Err(Error::Input("generator returned wrong arity".into()));
        }
        values[..q * n].copy_from_slice(&center);
        let rows: Vec<Vec<f64>> = (1..=grid.radial_count())
            .into_par_iter()
            .map(|k| {
                let mut row = Vec::with_capacity(mq * q * n);
                let r = grid.radius(k);
                for m in 0..mq {
                    let v = f(k, m, r, grid.phi(m));
                    assert_eq!(v.len(), q * n, "generator returned wrong arity");
                    row.extend_from_slice(&v);
                }
                row
            })
            .collect();
        for (k, row) in rows.into_iter().enumerate() {
            let start = grid.node_index(k + 1, 0) * q * n;
            values[start..start + row.len()].copy_from_slice(&row);
        }
        Self::from_raw(grid, q, n, values)
    }

    /// Wraps raw node-major values (canonicalizing each node).
    pub fn from_raw(grid: BranchedGrid, q: usize, n: usize, mut values: Vec<f64>) -> Result<Self> {
        check_qn(q, n)?;
        if values.len() != grid.node_count() * q * n {
            return Err(Error::Input(format!(
                "expected {} values, got {}",
                grid.node_count() * q * n,
                values.len()
            )));
        }
        if values.iter().any(|x| !x.is_finite()) {
            return Err(Error::Input("field values must be finite".into()));
        }
        values.par_chunks_mut(q * n).for_each(|chunk| {
            for x in chunk.iter_mut() {
                *x += 0.0;
            }
            multipoint::canonicalize(chunk, q, n);
        });
        Ok(Self { grid, q, n, values })
    }

    pub fn grid(&self) -> &BranchedGrid {
        &self.grid
    }

    pub fn q(&self) -> usize {
        self.q
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    pub fn raw_values(&self) -> &[f64] {
        &self.values
    }

    #[inline]
    pub fn values_at(&self, k: usize, m: usize) -> &[f64] {
        let s = self.grid.node_index(k, m) * self.q * self.n;
        &self.values[s..s + self.q * self.n]
    }

    pub fn point(&self, k: usize, m: usize) -> QPoint {
        QPoint::new(self.q, self.n, self.values_at(k, m).to_vec()).expect("stored values are valid")
    }

    pub fn sup_norm(&self) -> f64 {
        // |f|(x) = sqrt(Σ_i |f_i|²) per node, maximized over nodes
        self.values
            .par_chunks(self.q * self.n)
            .map(|c| c.iter().map(|x| x * x).sum::<f64>())
            .reduce(|| 0.0, f64::max)
            .sqrt()
    }

    /// Matchings between consecutive rings, computed once and shared.
    pub fn radial_selections(&self, eps_tie: f64) -> RadialSelections {
        let k_max = self.grid.radial_count();
        let mq = self.grid.angular_count();
        let q = self.q;
        let n = self.n;
        if k_max < 2 {
            return RadialSelections {
                perm: Vec::new(),
                ambiguous: Vec::new(),
                mq,
                q,
                eps_tie,
            };
        }
        let per_ring = mq * q;
        let mut perm = vec![0u8; (k_max - 1) * per_ring];
        let mut ambiguous = vec![false; (k_max - 1) * mq];
        perm.par_chunks_mut(per_ring)
            .zip(ambiguous.par_chunks_mut(mq))
            .enumerate()
            .for_each(|(ki, (pchunk, achunk))| {
                let k = ki + 1;
                let mut ws = MatchWorkspace::new();
                for m in 0..mq {
                    let a = self.values_at(k, m);
                    let b = self.values_at(k + 1, m);
                    let mt = match_slices(a, b, q, n, eps_tie, &mut ws);
                    for i in 0..q {
                        pchunk[m * q + i] = mt.perm[i] as u8;
                    }
                    achunk[m] = mt.ambiguous;
                }
            });
        RadialSelections {
            perm,
            ambiguous,
            mq,
            q,
            eps_tie,
        }
    }

    /// Matchings (k, m) -> (k, m+1) along ring k.
    pub fn angular_chain(&self, k: usize, eps_tie: f64) -> RingChain {
        let mq = self.grid.angular_count();
        let q = self.q;
        let mut perm = vec![0u8; mq * q];
        let mut ambiguous = vec![false; mq];
        let mut ws = MatchWorkspace::new();
        for m in 0..mq {
            let a = self.values_at(k, m);
            let b = self.values_at(k, (m + 1) % mq);
            let mt = match_slices(a, b, q, self.n, eps_tie, &mut ws);
            for i in 0..q {
                perm[m * q + i] = mt.perm[i] as u8;
            }
            ambiguous[m] = mt.ambiguous;
        }
        RingChain { perm, ambiguous }
    }

    /// One pass of all per-ring quadrature reductions.
    pub fn ring_scan(&self, sel: &RadialSelections) -> RingScan {
        let k_max = self.grid.radial_count();
        let rows: Vec<RingRow> = (1..=k_max)
            .into_par_iter()
            .map(|k| self.scan_ring(k, sel))
            .collect();
        let mut scan = RingScan {
            h: vec![0.0; k_max + 1],
            e: vec![0.0; k_max + 1],
            g: vec![0.0; k_max + 1],
            dens: vec![0.0; k_max + 1],
            eta_abs: vec![0.0; k_max + 1],
            max_sheet_grad: vec![0.0; k_max + 1],
            excluded: vec![0; k_max + 1],
        };
        for (ki, row) in rows.into_iter().enumerate() {
            let k = ki + 1;
            let arc = self.grid.radius(k) * self.grid.dphi();
            scan.h[k] = row.h_sum * arc;
            scan.eta_abs[k] = row.eta_sum * arc;
            let mq = self.grid.angular_count();
            let redistribute = if row.reliable > 0 {
                mq as f64 / row.reliable as f64
            } else {
                0.0
            };
            scan.e[k] = row.e_sum * arc * redistribute;
            scan.g[k] = row.g_sum * arc * redistribute;
            scan.dens[k] = row.dens_sum * arc * redistribute;
            scan.max_sheet_grad[k] = row.max_grad_sq.sqrt();
            scan.excluded[k] = mq - row.reliable;
        }
        scan
    }

    fn scan_ring(&self, k: usize, sel: &RadialSelections) -> RingRow {
        let grid = &self.grid;
        let q = self.q;
        let n = self.n;
        let mq = grid.angular_count();
        let k_max = grid.radial_count();
        let dr = grid.dr();
        let dphi = grid.dphi();
        let r = grid.radius(k);
        let eps_tie = sel.eps_tie;

        let ang = self.angular_chain(k, eps_tie);
        let mut row = RingRow::default();
        let mut rad_d = vec![0.0; q * n];
        let mut ang_d = vec![0.0; q * n];
        let mut inv_lo = vec![0usize; q];
        let mut inv_lo2 = vec![0usize; q];
        let mut inv_ang = vec![0usize; q];
        // the two angular neighbors span a chord of length 2r·sin(Δφ)
        // parallel to the tangent, so dividing by it makes the tangential
        // derivative exact on linear functions
        let chord = 2.0 * r * dphi.sin();

        for m in 0..mq {
            let here = self.values_at(k, m);

            // |f|² and |η∘f| need no matching and are never excluded
            let mut sq = 0.0;
            for x in here {
                sq += x * x;
            }
            row.h_sum += sq;
            let mut eta_sq = 0.0;
            for c in 0..n {
                let mut mean = 0.0;
                for i in 0..q {
                    mean += here[i * n + c];
                }
                mean /= q as f64;
                eta_sq += mean * mean;
            }
            row.eta_sum += eta_sq.sqrt();

            // reliability of the full gradient stencil at this node
            let m_prev = (m + mq - 1) % mq;
            let mut ok = !ang.ambiguous[m] && !ang.ambiguous[m_prev];
            if k == 1 {
                ok &= !sel.is_ambiguous(1, m) && !sel.is_ambiguous(2, m);
            } else if k == k_max {
                ok &= !sel.is_ambiguous(k - 1, m) && !sel.is_ambiguous(k - 2, m);
            } else {
                ok &= !sel.is_ambiguous(k - 1, m) && !sel.is_ambiguous(k, m);
            }
            if !ok {
                continue;
            }
            row.reliable += 1;

            // radial derivative, one-sided 3-point at the first and last ring
            if k == 1 {
                let up1 = self.values_at(2, m);
                let up2 = self.values_at(3, m);
                for i in 0..q {
                    let j2 = sel.map(1, m, i);
                    let j3 = sel.map(2, m, j2);
                    for c in 0..n {
                        rad_d[i * n + c] = (-3.0 * here[i * n + c] + 4.0 * up1[j2 * n + c]
                            - up2[j3 * n + c])
                            / (2.0 * dr);
                    }
                }
            } else if k == k_max {
                let lo1 = self.values_at(k - 1, m);
                let lo2 = self.values_at(k - 2, m);
                sel.inverse_into(k - 1, m, &mut inv_lo);
                sel.inverse_into(k - 2, m, &mut inv_lo2);
                for i in 0..q {
                    let j2 = inv_lo[i];
                    let j3 = inv_lo2[j2];
                    for c in 0..n {
                        rad_d[i * n + c] = (3.0 * here[i * n + c] - 4.0 * lo1[j2 * n + c]
                            + lo2[j3 * n + c])
                            / (2.0 * dr);
                    }
                }
            } else {
                let up = self.values_at(k + 1, m);
                let lo = self.values_at(k - 1, m);
                sel.inverse_into(k - 1, m, &mut inv_lo);
                for i in 0..q {
                    let ju = sel.map(k, m, i);
                    let jl = inv_lo[i];
                    for c in 0..n {
                        rad_d[i * n + c] =
                            (up[ju * n + c] - lo[jl * n + c]) / (2.0 * dr);
                    }
                }
            }

            // angular derivative (central, periodic)
            let next = self.values_at(k, (m + 1) % mq);
            let prev = self.values_at(k, m_prev);
            for i in 0..q {
                inv_ang[ang.perm[m_prev * q + i] as usize] = i;
            }
            for i in 0..q {
                let jn = ang.perm[m * q + i] as usize;
                let jp = inv_ang[i];
                for c in 0..n {
                    ang_d[i * n + c] = (next[jn * n + c] - prev[jp * n + c]) / chord;
                }
            }

            let mut g_nu = 0.0;
            let mut e_nu = 0.0;
            let mut dtau = 0.0;
            for i in 0..q * n {
                g_nu += rad_d[i] * rad_d[i];
                e_nu += here[i] * rad_d[i];
                dtau += ang_d[i] * ang_d[i];
            }
            row.g_sum += g_nu;
            row.e_sum += e_nu;
            row.dens_sum += g_nu + dtau;
            for i in 0..q {
                let mut sq = 0.0;
                for c in 0..n {
                    sq += rad_d[i * n + c] * rad_d[i * n + c]
                        + ang_d[i * n + c] * ang_d[i * n + c];
                }
                row.max_grad_sq = row.max_grad_sq.max(sq);
            }
        }
        row
    }

    /// Per-sheet linearly interpolated values at radius r and angular node
    /// m, returned in the sheet order of the ring at or below r.
    pub fn values_interpolated(&self, r: f64, m: usize, eps_tie: f64) -> Result<Vec<f64>> {
        self.grid.check_radius(r)?;
        if r <= 0.0 {
            return Ok(self.values_at(0, 0).to_vec());
        }
        let pos = r / self.grid.dr();
        let kl = pos.floor() as usize;
        let frac = pos - kl as f64;
        if frac.abs() < 1e-12 && kl >= 1 {
            return Ok(self.values_at(kl, m).to_vec());
        }
        if kl >= self.grid.radial_count() {
            return Ok(self.values_at(self.grid.radial_count(), m).to_vec());
        }
        let q = self.q;
        let n = self.n;
        let lo = if kl == 0 {
            self.values_at(0, 0)
        } else {
            self.values_at(kl, m)
        };
        let hi = self.values_at(kl + 1, m);
        let mut ws = MatchWorkspace::new();
        let mt = match_slices(lo, hi, q, n, eps_tie, &mut ws);
        let mut out = vec![0.0; q * n];
        for i in 0..q {
            let j = mt.perm[i];
            for c in 0..n {
                out[i * n + c] = (1.0 - frac) * lo[i * n + c] + frac * hi[j * n + c];
            }
        }
        Ok(out)
    }
}

#[derive(Debug, Default, Clone)]
struct RingRow {
    h_sum: f64,
    e_sum: f64,
    g_sum: f64,
    dens_sum: f64,
    eta_sum: f64,
    max_grad_sq: f64,
    reliable: usize,
}

impl RadialSelections {
    #[inline]
    fn base(&self, k: usize, m: usize) -> usize {
        ((k - 1) * self.mq + m) * self.q
    }

    /// Sheet at ring k+1 matched to sheet i at ring k.
    #[inline]
    pub fn map(&self, k: usize, m: usize, i: usize) -> usize {
        self.perm[self.base(k, m) + i] as usize
    }

    #[inline]
    pub fn is_ambiguous(&self, k: usize, m: usize) -> bool {
        self.ambiguous[(k - 1) * self.mq + m]
    }

    /// Writes the inverse of the (k -> k+1) permutation at node m.
    pub fn inverse_into(&self, k: usize, m: usize, inv: &mut [usize]) {
        let b = self.base(k, m);
        for i in 0..self.q {
            inv[self.perm[b + i] as usize] = i;
        }
    }
}

fn check_qn(q: usize, n: usize) -> Result<()> {
    if q == 0 || n == 0 {
        return Err(Error::Input("field requires q >= 1 and n >= 1".into()));
    }
    if q > 255 {
        return Err(Error::Input("q larger than 255 is not supported".into()));
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn dirichlet(field: &MultiField, scan: &RingScan, k: usize) -> f64 {
        // trapezoid of the density rings, matching the grid quadrature
        let dr = field.grid().dr();
        let mut acc = 0.0;
        for j in 1..k {
            acc += scan.dens[j];
        }
        dr * (acc + 0.5 * scan.dens[k])
    }

    #[test]
    fn constant_field_has_zero_gradient() {
        let grid = BranchedGrid::new(2, 1.0, 16, 16).unwrap();
        let f = MultiField::from_fn(grid, 3, 2, |_, _, _, _| {
            vec![1.0, -2.0, 4.0, 0.5, 1.0, -2.0]
        })
        .unwrap();
        let sel = f.radial_selections(1e-9);
        let scan = f.ring_scan(&sel);
        for k in 1..=16 {
            assert_eq!(scan.dens[k], 0.0, "ring {k}");
            assert_eq!(scan.e[k], 0.0);
            assert_eq!(scan.g[k], 0.0);
            assert_eq!(scan.excluded[k], 0, "repeats must not be excluded");
        }
    }

    #[test]
    fn linear_field_density_is_exact() {
        // f = Re z on the unit disk: |Df|² ≡ 1
        let grid = BranchedGrid::new(1, 1.0, 24, 32).unwrap();
        let f = MultiField::from_fn(grid, 1, 1, |_, _, r, phi| vec![r * phi.cos()]).unwrap();
        let sel = f.radial_selections(1e-9);
        let scan = f.ring_scan(&sel);
        for k in 1..=24 {
            let per_length = scan.dens[k] / (std::f64::consts::TAU * grid.radius(k));
            assert!(
                (per_length - 1.0).abs() < 1e-10,
                "ring {k}: |Df|^2 = {per_length}"
            );
        }
    }

    #[test]
    fn branch_pair_energy_scales_cubically() {
        // the two branches of z^{3/2} (complex values keep the sheets
        // separated) have D(r) = D(1) r³ with D(1) = 6π
        let grid = BranchedGrid::new(1, 1.0, 128, 256).unwrap();
        let f = MultiField::from_fn(grid, 2, 2, |_, _, r, phi| {
            let (s, c) = (1.5 * phi).sin_cos();
            let rr = r.powf(1.5);
            vec![rr * c, rr * s, -rr * c, -rr * s]
        })
        .unwrap();
        let sel = f.radial_selections(1e-9);
        let scan = f.ring_scan(&sel);
        let d_full = dirichlet(&f, &scan, 128);
        assert!(
            (d_full - 6.0 * std::f64::consts::PI).abs() < 1e-3 * d_full,
            "D(1) = {d_full}"
        );
        for k in [32, 64, 96] {
            let r = grid.radius(k);
            let d_r = dirichlet(&f, &scan, k);
            let expected = d_full * r.powi(3);
            assert!(
                (d_r - expected).abs() < 2e-3 * expected.max(1e-12),
                "r={r}: {d_r} vs {expected}"
            );
        }
    }

    #[test]
    fn real_branch_pair_energy_with_crossings() {
        // the real pair ±Re z^{3/2} has three sheet crossings; the central
        // differences smear the reconnection corners over the adjacent
        // columns, an O(1/M) effect that the tolerance here reflects
        let grid = BranchedGrid::new(1, 1.0, 64, 512).unwrap();
        let f = MultiField::from_fn(grid, 2, 1, |_, _, r, phi| {
            let v = r.powf(1.5) * (1.5 * phi).cos();
            vec![v, -v]
        })
        .unwrap();
        let sel = f.radial_selections(1e-9);
        let scan = f.ring_scan(&sel);
        let d_full = dirichlet(&f, &scan, 64);
        let expected = 3.0 * std::f64::consts::PI;
        assert!(
            (d_full - expected).abs() < 1e-2 * expected,
            "D(1) = {d_full} vs {expected}"
        );
    }

    #[test]
    fn interpolated_values_match_rings_exactly() {
        let grid = BranchedGrid::new(1, 1.0, 16, 16).unwrap();
        let f = MultiField::from_fn(grid, 2, 1, |_, _, r, phi| {
            vec![r * phi.cos() + 2.0, -r * phi.sin() - 2.0]
        })
        .unwrap();
        for k in [1usize, 7, 16] {
            let r = grid.radius(k);
            let v = f.values_interpolated(r, 3, 1e-9).unwrap();
            assert_eq!(&v[..], f.values_at(k, 3));
        }
        // between rings: linear interpolation of matched sheets
        let r_mid = 0.5 * (grid.radius(4) + grid.radius(5));
        let v = f.values_interpolated(r_mid, 0, 1e-9).unwrap();
        let expect0 = 0.5 * (f.values_at(4, 0)[0] + f.values_at(5, 0)[0]);
        assert!((v[0] - expect0).abs() < 1e-15);
    }
}
