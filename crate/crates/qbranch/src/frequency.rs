//! Radius-indexed energy quantities and their identities: D, H, E, G, F, Λ,
//! the frequency I = rD/H and its reciprocal K, the H' identity, Poincaré
//! checks, monotonicity and decay fitting.

use crate::error::{Error, Result};
use crate::field::MultiField;
use serde::{Deserialize, Serialize};

/// One radius of a frequency profile. `i`/`k_inv` are `None` where H
/// vanishes.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct ProfileRow {
    pub r: f64,
    pub d: f64,
    pub h: f64,
    pub e: f64,
    pub g: f64,
    pub f: f64,
    pub lambda: f64,
    pub i: Option<f64>,
    pub k_inv: Option<f64>,
    /// ∫_{∂B_r} |η∘f|
    pub eta_abs: f64,
}

/// Frequency quantities sampled at every grid ring.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct FrequencyProfile {
    pub gamma0: f64,
    pub rho: f64,
    pub rows: Vec<ProfileRow>,
    /// Set when H vanishes identically on an initial interval of radii
    /// (the map is Q copies of zero there).
    pub vanishing: bool,
}

/// All quantities by quadrature: D by the ring-density trapezoid, F by a
/// cumulative trapezoid of H(t)/t^{2-γ₀}, I and K where H > 0.
pub fn profile(field: &MultiField, gamma0: f64, eps_tie: f64) -> FrequencyProfile {
    let grid = field.grid();
    let k_max = grid.radial_count();
    let dr = grid.dr();
    let sel = field.radial_selections(eps_tie);
    let scan = field.ring_scan(&sel);

    let mut rows = Vec::with_capacity(k_max);
    let mut f_acc = 0.0;
    let mut prev_integrand = 0.0; // H(t)/t^{2-γ₀} -> 0 at t = 0 for our fields
    for k in 1..=k_max {
        let r = grid.radius(k);
        let d = scan.dirichlet_to(dr, k);
        let h = scan.h[k];
        let integrand = h / r.powf(2.0 - gamma0);
        f_acc += 0.5 * (prev_integrand + integrand) * dr;
        prev_integrand = integrand;
        let i = if h > 0.0 { Some(r * d / h) } else { None };
        rows.push(ProfileRow {
            r,
            d,
            h,
            e: scan.e[k],
            g: scan.g[k],
            f: f_acc,
            lambda: d + f_acc,
            i,
            k_inv: i.map(|v| if v > 0.0 { 1.0 / v } else { f64::INFINITY }),
            eta_abs: scan.eta_abs[k],
        });
    }
    let vanishing = rows.first().map(|r| r.h == 0.0).unwrap_or(false)
        && rows.iter().any(|r| r.h == 0.0);
    FrequencyProfile {
        gamma0,
        rho: grid.rho(),
        rows,
        vanishing,
    }
}

impl FrequencyProfile {
    /// Rows with radius inside `[lo, hi]`.
    pub fn window(&self, lo: f64, hi: f64) -> Vec<&ProfileRow> {
        self.rows
            .iter()
            .filter(|row| row.r >= lo - 1e-12 && row.r <= hi + 1e-12)
            .collect()
    }

    /// D'(r) by central differences on the ring grid (one-sided at the
    /// ends), indexed like `rows`.
    pub fn d_prime(&self) -> Vec<f64> {
        numeric_derivative(&self.rows.iter().map(|r| (r.r, r.d)).collect::<Vec<_>>())
    }

    /// H'(r) by central differences on the ring grid.
    pub fn h_prime(&self) -> Vec<f64> {
        numeric_derivative(&self.rows.iter().map(|r| (r.r, r.h)).collect::<Vec<_>>())
    }
}

fn numeric_derivative(samples: &[(f64, f64)]) -> Vec<f64> {
    let n = samples.len();
    let mut out = vec![0.0; n];
    for j in 0..n {
        let (lo, hi) = if j == 0 {
            (0, 1.min(n - 1))
        } else if j == n - 1 {
            (n - 2, n - 1)
        } else {
            (j - 1, j + 1)
        };
        let (r0, v0) = samples[lo];
        let (r1, v1) = samples[hi];
        out[j] = if r1 > r0 { (v1 - v0) / (r1 - r0) } else { 0.0 };
    }
    out
}

/// Residual report of the identity H'(r) = H(r)/r + 2E(r).
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct HPrimeReport {
    pub max_residual: f64,
    pub at_radius: f64,
    pub rows_checked: usize,
    pub window: (f64, f64),
}

/// Max relative residual of H' = H/r + 2E over rows inside the window
/// (the first rings sit on the discretization floor and stay outside any
/// sensible window).
pub fn check_h_prime(profile: &FrequencyProfile, window: (f64, f64)) -> Result<HPrimeReport> {
    if profile.rows.len() < 3 {
        return Err(Error::Input("need at least 3 radii".into()));
    }
    let hp = profile.h_prime();
    let mut max_residual: f64 = 0.0;
    let mut at_radius = f64::NAN;
    let mut count = 0;
    for (j, row) in profile.rows.iter().enumerate() {
        if j == 0 || j + 1 == profile.rows.len() {
            continue;
        }
        if row.r < window.0 || row.r > window.1 {
            continue;
        }
        let predicted = row.h / row.r + 2.0 * row.e;
        let denom = (row.h / row.r).abs().max(1e-14);
        let res = (hp[j] - predicted).abs() / denom;
        count += 1;
        if res > max_residual {
            max_residual = res;
            at_radius = row.r;
        }
    }
    if count == 0 {
        return Err(Error::Input("window contains no interior radii".into()));
    }
    Ok(HPrimeReport {
        max_residual,
        at_radius,
        rows_checked: count,
        window,
    })
}

/// Empirical constants of the two Poincaré-type inequalities
///
///   ∫_{B_r}|f|²            ≤ C r² ∫_{B_r}|Df|² + C r ∫_{∂B_r}|f|²
///   ∫_{B_r}|z|^{γ₀-1}|f|²  ≤ C r^{1+γ₀} ∫_{B_r}|Df|² + C r^{γ₀} ∫_{∂B_r}|f|²
///
/// reported as the minimal admissible C over the sampled radii.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PoincareLemmaReport {
    pub c_plain: f64,
    pub c_weighted: f64,
    pub radii_checked: usize,
}

pub fn check_poincare_lemma(
    field: &MultiField,
    radii_rings: &[usize],
    gamma0: f64,
    eps_tie: f64,
) -> Result<PoincareLemmaReport> {
    let grid = field.grid();
    let k_max = grid.radial_count();
    let dr = grid.dr();
    let sel = field.radial_selections(eps_tie);
    let scan = field.ring_scan(&sel);

    // cumulative trapezoids of |f|² (plain and |z|^{γ₀-1}-weighted)
    let mut sq = vec![0.0; k_max + 1];
    let mut sq_w = vec![0.0; k_max + 1];
    for k in 1..=k_max {
        let r = grid.radius(k);
        let h = scan.h[k];
        let prev = if k == 1 { 0.0 } else { scan.h[k - 1] };
        let prev_w = if k == 1 {
            0.0
        } else {
            scan.h[k - 1] * grid.radius(k - 1).powf(gamma0 - 1.0)
        };
        sq[k] = sq[k - 1] + 0.5 * (prev + h) * dr;
        sq_w[k] = sq_w[k - 1] + 0.5 * (prev_w + h * r.powf(gamma0 - 1.0)) * dr;
    }

    let mut c_plain: f64 = 0.0;
    let mut c_weighted: f64 = 0.0;
    let mut checked = 0;
    for &k in radii_rings {
        if k == 0 || k > k_max {
            return Err(Error::Input(format!("ring {k} outside the grid")));
        }
        let r = grid.radius(k);
        let d = scan.dirichlet_to(dr, k);
        let h = scan.h[k];
        let rhs_plain = r * r * d + r * h;
        let rhs_weighted = r.powf(1.0 + gamma0) * d + r.powf(gamma0) * h;
        if rhs_plain > 0.0 {
            c_plain = c_plain.max(sq[k] / rhs_plain);
        } else if sq[k] > 0.0 {
            c_plain = f64::INFINITY;
        }
        if rhs_weighted > 0.0 {
            c_weighted = c_weighted.max(sq_w[k] / rhs_weighted);
        } else if sq_w[k] > 0.0 {
            c_weighted = f64::INFINITY;
        }
        checked += 1;
    }
    Ok(PoincareLemmaReport {
        c_plain,
        c_weighted,
        radii_checked: checked,
    })
}

/// Max of H(r)/(r·D(r)) over the window; for degree-α minimizers this is
/// 1/α. Only meaningful on (numerically certified) minimizing fields.
pub fn poincare_theorem_ratio(profile: &FrequencyProfile, window: (f64, f64)) -> Option<f64> {
    profile
        .window(window.0, window.1)
        .iter()
        .filter(|row| row.d > 0.0)
        .map(|row| row.h / (row.r * row.d))
        .fold(None, |acc, v| Some(acc.map_or(v, |a: f64| a.max(v))))
}

/// Frequency monotonicity report for minimizer-certified fields.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct MonotonicityReport {
    pub applicable: bool,
    pub violations: usize,
    pub first_violation: Option<(f64, f64)>,
    pub tol: f64,
    pub steps_checked: usize,
}

/// Asserts I(r_{k+1}) ≥ I(r_k) − tol·(1 + I(r_k)) over consecutive defined
/// rows in the window. Non-minimizing inputs report "not applicable".
pub fn check_frequency_monotonicity(
    profile: &FrequencyProfile,
    minimizing: bool,
    tol: f64,
    window: (f64, f64),
) -> MonotonicityReport {
    if !minimizing {
        return MonotonicityReport {
            applicable: false,
            violations: 0,
            first_violation: None,
            tol,
            steps_checked: 0,
        };
    }
    let rows = profile.window(window.0, window.1);
    let mut violations = 0;
    let mut first = None;
    let mut steps = 0;
    for pair in rows.windows(2) {
        if let (Some(i0), Some(i1)) = (pair[0].i, pair[1].i) {
            steps += 1;
            let slack = tol * (1.0 + i0);
            if i1 < i0 - slack {
                violations += 1;
                if first.is_none() {
                    first = Some((pair[1].r, i0 - i1));
                }
            }
        }
    }
    MonotonicityReport {
        applicable: true,
        violations,
        first_violation: first,
        tol,
        steps_checked: steps,
    }
}

/// Per-radius ratios D(r) / (r D'(r) + H(r) + F(r) + m₀^{1/2} r^{γ₀} ∫|η∘f|).
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct AlmostMinReport {
    pub max_ratio: f64,
    pub at_radius: f64,
    pub unbounded: bool,
    pub rows_checked: usize,
}

pub fn check_almost_min(
    profile: &FrequencyProfile,
    m0_sqrt: f64,
    window: (f64, f64),
) -> AlmostMinReport {
    let dprime = profile.d_prime();
    let mut max_ratio: f64 = 0.0;
    let mut at_radius = f64::NAN;
    let mut unbounded = false;
    let mut count = 0;
    for (j, row) in profile.rows.iter().enumerate() {
        if row.r < window.0 || row.r > window.1 {
            continue;
        }
        let rhs = row.r * dprime[j]
            + row.h
            + row.f
            + m0_sqrt * row.r.powf(profile.gamma0) * row.eta_abs;
        count += 1;
        if rhs <= 0.0 {
            if row.d > 0.0 {
                unbounded = true;
            }
            continue;
        }
        let ratio = row.d / rhs;
        if ratio > max_ratio {
            max_ratio = ratio;
            at_radius = row.r;
        }
    }
    AlmostMinReport {
        max_ratio,
        at_radius,
        unbounded,
        rows_checked: count,
    }
}

/// Fitted asymptotics of a profile: I(r) ≈ I₀ + c·r^λ, H(r)/r^{2I₀+1} → H₀,
/// D(r)/r^{2I₀} → D₀.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct DecayFit {
    pub i0: f64,
    pub h0: f64,
    pub d0: f64,
    /// `None` when the power law is unidentifiable (constant I up to
    /// quadrature noise).
    pub lambda: Option<f64>,
    pub residual: f64,
    pub window: (f64, f64),
}

/// Weighted least squares of I(r) against r^λ with λ on a grid, jointly
/// with the constant; the normalized H and D sequences reuse the fitted λ.
pub fn fit_decay(profile: &FrequencyProfile, window: (f64, f64)) -> Result<DecayFit> {
    let rows: Vec<&ProfileRow> = profile
        .window(window.0, window.1)
        .into_iter()
        .filter(|r| r.i.is_some())
        .collect();
    if rows.len() < 8 {
        return Err(Error::Fit(format!(
            "fit window holds {} radii, need at least 8",
            rows.len()
        )));
    }
    let rs: Vec<f64> = rows.iter().map(|r| r.r).collect();
    let is: Vec<f64> = rows.iter().map(|r| r.i.unwrap()).collect();

    // constant fit as the null model
    let mean_i = is.iter().sum::<f64>() / is.len() as f64;
    let sse_const: f64 = is.iter().map(|v| (v - mean_i).powi(2)).sum();

    // grid over λ, linear least squares in (I₀, c) for each candidate
    let mut best = (f64::INFINITY, 0.0, mean_i, 0.0); // (sse, lambda, i0, c)
    let mut lambda = 0.05;
    while lambda <= 3.0 + 1e-9 {
        if let Some((i0, c, sse)) = linear_fit(&rs, &is, lambda) {
            if sse < best.0 {
                best = (sse, lambda, i0, c);
            }
        }
        lambda += 0.01;
    }
    let (sse_best, lambda_best, i0_best, _c) = best;
    let identifiable = sse_best.is_finite() && sse_best <= 0.2 * sse_const && sse_const > 0.0;

    let (i0, lambda_opt) = if identifiable {
        (i0_best, Some(lambda_best))
    } else {
        (mean_i, None)
    };

    // normalized boundary mass and energy sequences
    let hs: Vec<f64> = rows
        .iter()
        .map(|r| r.h / r.r.powf(2.0 * i0 + 1.0))
        .collect();
    let ds: Vec<f64> = rows.iter().map(|r| r.d / r.r.powf(2.0 * i0)).collect();
    let h0 = match lambda_opt {
        Some(l) => linear_fit(&rs, &hs, l).map(|f| f.0),
        None => None,
    }
    .unwrap_or_else(|| hs.iter().sum::<f64>() / hs.len() as f64);
    let d0 = match lambda_opt {
        Some(l) => linear_fit(&rs, &ds, l).map(|f| f.0),
        None => None,
    }
    .unwrap_or_else(|| ds.iter().sum::<f64>() / ds.len() as f64);

    let residual = if identifiable {
        (sse_best / rows.len() as f64).sqrt()
    } else {
        (sse_const / rows.len() as f64).sqrt()
    };

    Ok(DecayFit {
        i0,
        h0,
        d0,
        lambda: lambda_opt,
        residual,
        window,
    })
}

/// Least squares for y ≈ a + c·r^λ at fixed λ; returns (a, c, sse).
fn linear_fit(rs: &[f64], ys: &[f64], lambda: f64) -> Option<(f64, f64, f64)> {
    let n = rs.len() as f64;
    let xs: Vec<f64> = rs.iter().map(|r| r.powf(lambda)).collect();
    let sx: f64 = xs.iter().sum();
    let sy: f64 = ys.iter().sum();
    let sxx: f64 = xs.iter().map(|x| x * x).sum();
    let sxy: f64 = xs.iter().zip(ys).map(|(x, y)| x * y).sum();
    let det = n * sxx - sx * sx;
    if det.abs() < 1e-14 * n * sxx.max(1.0) {
        return None;
    }
    let c = (n * sxy - sx * sy) / det;
    let a = (sy - c * sx) / n;
    let sse = xs
        .iter()
        .zip(ys)
        .map(|(x, y)| (y - a - c * x).powi(2))
        .sum();
    Some((a, c, sse))
}
