//! The rescaling family f_r = N(i_r(·))/r^{I₀} on ∂B_1, estimation of the
//! limit profile f₀, convergence-rate measurement, and the homogeneous
//! extension g = |z|^{I₀} f₀.

use crate::error::{Error, Result};
use crate::field::MultiField;
use crate::grid::BranchedGrid;
use crate::multipoint::{match_slices, MatchWorkspace};
use crate::trace::{extract_trace, BoundaryTrace};
use serde::{Deserialize, Serialize};

/// Boundary profile f_r: the trace at radius r rescaled by r^{-I₀} and
/// reported on ∂B_1. The norm identity ∫_{∂B_1}|f_r|² = H(r)/r^{2I₀+1}
/// holds exactly at grid radii.
pub fn rescale(field: &MultiField, r: f64, i0: f64, eps_tie: f64) -> Result<BoundaryTrace> {
    if !(i0 > 0.0) {
        return Err(Error::Input("normalization exponent must be positive".into()));
    }
    if r < 2.0 * field.grid().dr() - 1e-12 {
        return Err(Error::Input(format!(
            "radius {} below two grid annuli; interpolation unreliable",
            r
        )));
    }
    let tr = extract_trace(field, r, eps_tie)?;
    Ok(tr.scaled(r.powf(-i0)).at_radius(1.0))
}

/// Profiles of a field at a decreasing set of radii.
#[derive(Debug, Clone)]
pub struct BlowupFamily {
    pub i0: f64,
    pub radii: Vec<f64>,
    pub profiles: Vec<BoundaryTrace>,
}

pub fn family(field: &MultiField, i0: f64, radii: &[f64], eps_tie: f64) -> Result<BlowupFamily> {
    let mut rs: Vec<f64> = radii.to_vec();
    rs.sort_by(|a, b| b.partial_cmp(a).unwrap());
    rs.dedup();
    let mut profiles = Vec::with_capacity(rs.len());
    for &r in &rs {
        profiles.push(rescale(field, r, i0, eps_tie)?);
    }
    Ok(BlowupFamily {
        i0,
        radii: rs,
        profiles,
    })
}

/// Convergence report of the rescaling family.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct LimitReport {
    #[serde(rename = "I0")]
    pub i0: f64,
    pub radii: Vec<f64>,
    /// L² matching distances of f_r to the limit estimate.
    pub l2_distances: Vec<f64>,
    pub sup_distances: Vec<f64>,
    /// Fitted exponent of the squared L² distance against r; positive for
    /// genuinely perturbed homogeneous inputs.
    pub fitted_rate: Option<f64>,
    /// Whether the sup distances decrease monotonically towards the limit.
    pub cauchy: bool,
    /// ∫_{∂B_1} |f₀|².
    pub f0_l2_sq: f64,
    /// ∫_{∂B_1} |η∘f₀|.
    pub f0_eta_l1: f64,
    pub richardson: bool,
}

/// Estimates the limit profile (smallest-radius profile, optionally
/// Richardson-extrapolated in r^λ) and fits the convergence rate.
///
/// Non-Cauchy behavior (sup distances not decreasing) is reported and no
/// limit is emitted.
pub fn limit_profile(
    fam: &BlowupFamily,
    richardson_lambda: Option<f64>,
) -> Result<(Option<BoundaryTrace>, LimitReport)> {
    if fam.radii.len() < 6 {
        return Err(Error::Input(format!(
            "need at least 6 radii, got {}",
            fam.radii.len()
        )));
    }
    let last = fam.profiles.len() - 1;
    let f0 = match richardson_lambda {
        None => fam.profiles[last].clone(),
        Some(lambda) => richardson(
            &fam.profiles[last],
            fam.radii[last],
            &fam.profiles[last - 1],
            fam.radii[last - 1],
            lambda,
        )?,
    };

    let mut l2 = Vec::with_capacity(fam.profiles.len());
    let mut sup = Vec::with_capacity(fam.profiles.len());
    for p in &fam.profiles {
        l2.push(p.g_l2_sq_distance(&f0)?.sqrt());
        sup.push(p.sup_distance(&f0)?);
    }

    // monotone decrease of the sup distance along decreasing radii
    let mut cauchy = true;
    for w in sup[..=last].windows(2) {
        if w[1] > w[0] + 1e-12 * (1.0 + w[0]) {
            cauchy = false;
        }
    }

    // rate from the dyadic Cauchy differences ∫𝒢(f_r, f_s)², s ∈ [r/2, r]:
    // distances to the estimated limit flatten near the smallest radius
    // and would bias the slope
    let mut xs = Vec::new();
    let mut ys = Vec::new();
    for j in 0..last {
        let d_sq = fam.profiles[j].g_l2_sq_distance(&fam.profiles[j + 1])?;
        if d_sq > 1e-28 {
            xs.push(fam.radii[j].ln());
            ys.push(d_sq.ln());
        }
    }
    let fitted_rate = if xs.len() >= 3 {
        slope(&xs, &ys)
    } else {
        None
    };

    let report = LimitReport {
        i0: fam.i0,
        radii: fam.radii.clone(),
        l2_distances: l2,
        sup_distances: sup,
        fitted_rate,
        cauchy,
        f0_l2_sq: f0.l2_sq(),
        f0_eta_l1: f0.eta_l1(),
        richardson: richardson_lambda.is_some(),
    };
    Ok((if cauchy { Some(f0) } else { None }, report))
}

fn slope(xs: &[f64], ys: &[f64]) -> Option<f64> {
    let n = xs.len() as f64;
    let sx: f64 = xs.iter().sum();
    let sy: f64 = ys.iter().sum();
    let sxx: f64 = xs.iter().map(|x| x * x).sum();
    let sxy: f64 = xs.iter().zip(ys).map(|(x, y)| x * y).sum();
    let det = n * sxx - sx * sx;
    if det.abs() < 1e-12 {
        None
    } else {
        Some((n * sxy - sx * sy) / det)
    }
}

/// Richardson extrapolation f₀ ≈ (f_s − κ f_r)/(1 − κ) with κ = (s/r)^λ,
/// combined per node along the optimal matching.
fn richardson(
    f_s: &BoundaryTrace,
    s: f64,
    f_r: &BoundaryTrace,
    r: f64,
    lambda: f64,
) -> Result<BoundaryTrace> {
    if !(lambda > 0.0) {
        return Err(Error::Input("Richardson rate must be positive".into()));
    }
    let kappa = (s / r).powf(lambda);
    let q = f_s.q();
    let n = f_s.dim();
    let mut ws = MatchWorkspace::new();
    let mut values = Vec::with_capacity(f_s.samples() * q * n);
    for m in 0..f_s.samples() {
        let a = f_s.values_at(m);
        let b = f_r.values_at(m);
        let mt = match_slices(a, b, q, n, crate::EPS_TIE, &mut ws);
        for i in 0..q {
            let j = mt.perm[i];
            for c in 0..n {
                values.push((a[i * n + c] - kappa * b[j * n + c]) / (1.0 - kappa));
            }
        }
    }
    BoundaryTrace::new(f_s.qbar(), f_s.angular_base(), q, n, 1.0, values)
}

/// The I₀-homogeneous extension of a unit-circle profile: g(r, φ) = r^{I₀}
/// f₀(φ) on a fresh grid of `radial` annuli and unit radius.
pub fn homogeneous_extension(
    f0: &BoundaryTrace,
    i0: f64,
    radial: usize,
) -> Result<MultiField> {
    if !(i0 > 0.0) {
        return Err(Error::Input("homogeneity degree must be positive".into()));
    }
    let grid = BranchedGrid::new(f0.qbar(), 1.0, radial, f0.angular_base())?;
    let q = f0.q();
    let n = f0.dim();
    MultiField::from_fn(grid, q, n, |k, m, r, _phi| {
        if k == 0 {
            return vec![0.0; q * n];
        }
        let scale = r.powf(i0);
        f0.values_at(m).iter().map(|v| v * scale).collect()
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::frequency::profile;

    fn complex_pair(k: usize, m: usize) -> MultiField {
        let grid = BranchedGrid::new(1, 1.0, k, m).unwrap();
        MultiField::from_fn(grid, 2, 2, |_, _, r, phi| {
            let (s, c) = (1.5 * phi).sin_cos();
            let rr = r.powf(1.5);
            vec![rr * c, rr * s, -rr * c, -rr * s]
        })
        .unwrap()
    }

    #[test]
    fn rescaled_profiles_of_homogeneous_fields_coincide() {
        let f = complex_pair(128, 64);
        let p1 = rescale(&f, 0.25, 1.5, 1e-9).unwrap();
        let p2 = rescale(&f, 0.5, 1.5, 1e-9).unwrap();
        assert!(p1.sup_distance(&p2).unwrap() < 1e-12);
    }

    #[test]
    fn norm_identity_matches_frequency_profile() {
        let f = complex_pair(128, 64);
        let p = profile(&f, 0.5, 1e-9);
        for k in [32usize, 64, 96] {
            let r = f.grid().radius(k);
            let fr = rescale(&f, r, 1.5, 1e-9).unwrap();
            let lhs = fr.l2_sq();
            let rhs = p.rows[k - 1].h / r.powf(2.0 * 1.5 + 1.0);
            assert!((lhs - rhs).abs() < 1e-10 * (1.0 + rhs), "{lhs} vs {rhs}");
        }
    }

    #[test]
    fn wrong_normalization_scales_as_power() {
        let f = complex_pair(128, 64);
        let delta = 0.25;
        let n1 = rescale(&f, 0.5, 1.5 + delta, 1e-9).unwrap().l2_sq().sqrt();
        let n2 = rescale(&f, 0.25, 1.5 + delta, 1e-9).unwrap().l2_sq().sqrt();
        // ‖f_r‖ ∝ r^{-δ}
        let measured = (n2 / n1).ln() / (0.25f64 / 0.5).ln();
        assert!((measured + delta).abs() < 1e-6, "exponent {measured}");
    }

    #[test]
    fn zero_field_rescales_to_zero() {
        let grid = BranchedGrid::new(1, 1.0, 16, 16).unwrap();
        let f = MultiField::from_fn(grid, 2, 1, |_, _, _, _| vec![0.0, 0.0]).unwrap();
        let p = rescale(&f, 0.5, 1.0, 1e-9).unwrap();
        assert_eq!(p.l2_sq(), 0.0);
    }

    #[test]
    fn radius_below_two_annuli_errors() {
        let f = complex_pair(16, 16);
        assert!(rescale(&f, 0.05, 1.5, 1e-9).is_err());
    }

    #[test]
    fn limit_of_homogeneous_family_is_boundary_profile() {
        let f = complex_pair(256, 64);
        let radii: Vec<f64> = (0..7).map(|j| 0.5f64.powi(j)).collect();
        let fam = family(&f, 1.5, &radii, 1e-9).unwrap();
        let (f0, rep) = limit_profile(&fam, None).unwrap();
        let f0 = f0.expect("homogeneous family is Cauchy");
        assert!(rep.cauchy);
        for d in &rep.sup_distances {
            assert!(*d < 1e-12, "sup distance {d}");
        }
        let boundary = rescale(&f, 1.0, 1.5, 1e-9).unwrap();
        assert!(f0.sup_distance(&boundary).unwrap() < 1e-12);
        // nontriviality: ∫|f₀|² = 4π for unit complex pair
        assert!((rep.f0_l2_sq - 4.0 * std::f64::consts::PI).abs() < 1e-10);
        // η-centered input keeps the limit centered
        assert!(rep.f0_eta_l1 < 1e-12);
    }

    #[test]
    fn perturbed_family_reports_positive_rate() {
        // g + |z|^{α+1/2} h: squared-distance exponent ≈ 2·1/2 = 1
        let grid = BranchedGrid::new(1, 1.0, 512, 64).unwrap();
        let f = MultiField::from_fn(grid, 2, 2, |_, _, r, phi| {
            let (s, c) = (1.5 * phi).sin_cos();
            let rr = r.powf(1.5);
            let bump = 0.3 * r.powf(2.0);
            vec![rr * c + bump, rr * s, -rr * c + bump, -rr * s]
        })
        .unwrap();
        let radii: Vec<f64> = (0..8).map(|j| 0.5f64.powi(j)).collect();
        let fam = family(&f, 1.5, &radii, 1e-9).unwrap();
        let (f0, rep) = limit_profile(&fam, None).unwrap();
        assert!(f0.is_some());
        assert!(rep.cauchy);
        let rate = rep.fitted_rate.expect("rate must be fitted");
        assert!((0.8..=1.2).contains(&rate), "rate {rate}");
    }

    #[test]
    fn extension_round_trips_homogeneous_field() {
        let f = complex_pair(256, 128);
        let f0 = rescale(&f, 0.25, 1.5, 1e-9).unwrap();
        let g = homogeneous_extension(&f0, 1.5, 256).unwrap();
        // traces agree at every shared radius
        for k in [32usize, 128, 256] {
            let r = g.grid().radius(k);
            let t_f = extract_trace(&f, r, 1e-9).unwrap();
            let t_g = extract_trace(&g, r, 1e-9).unwrap();
            assert!(t_f.sup_distance(&t_g).unwrap() < 1e-12, "r={r}");
        }
        // frequency of the extension is constant 1.5
        let p = profile(&g, 0.5, 1e-9);
        for row in p.window(0.25, 0.9) {
            assert!((row.i.unwrap() - 1.5).abs() < 1e-3, "r={}", row.r);
        }
        // D(g, B_r) = r^{2I₀} D(g, B_1)
        let rows = &p.rows;
        let d_full = rows.last().unwrap().d;
        for row in p.window(0.4, 0.8) {
            let expect = d_full * row.r.powf(3.0);
            assert!((row.d - expect).abs() < 2e-3 * expect, "r={}", row.r);
        }
    }

    #[test]
    fn constant_profile_extension_scales_radially() {
        let mq = 32;
        let mut values = Vec::with_capacity(mq * 2);
        for _ in 0..mq {
            values.extend_from_slice(&[2.0, -1.0]);
        }
        let f0 = BoundaryTrace::new(1, mq, 2, 1, 1.0, values).unwrap();
        let g = homogeneous_extension(&f0, 1.5, 32).unwrap();
        assert_eq!(g.values_at(0, 0), &[0.0, 0.0]);
        for k in [8usize, 16, 32] {
            let r = g.grid().radius(k);
            let v = g.values_at(k, 0);
            let scale = r.powf(1.5);
            assert!((v[0] + scale).abs() < 1e-14 && (v[1] - 2.0 * scale).abs() < 1e-14);
        }
    }
}
