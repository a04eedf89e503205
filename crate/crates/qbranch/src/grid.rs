//! Polar discretization of the branched disk.
//!
//! The Q̄-fold branched disk of radius ρ carries the flat metric pulled in
//! from its standard charts; we parametrize it by the radius r = |z| and
//! the covering angle φ ∈ [0, 2πQ̄). The grid has K uniform annuli,
//! M angular samples per 2π of covering angle (so M·Q̄ nodes per ring) and
//! a single center node shared by all sheets. Quadrature is trapezoidal in
//! r against the area element r dr dφ and uniform in φ, which is exact for
//! constants: the area of the cover is πρ²Q̄ and the length of ∂B_r is
//! 2πrQ̄.

use crate::error::{Error, Result};
use num_complex::Complex64;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BranchedGrid {
    qbar: usize,
    rho: f64,
    radial: usize,
    angular_base: usize,
}

impl BranchedGrid {
    pub fn new(qbar: usize, rho: f64, radial: usize, angular_base: usize) -> Result<Self> {
        if qbar == 0 {
            return Err(Error::Input("covering order must be >= 1".into()));
        }
        if !(rho > 0.0) || !rho.is_finite() {
            return Err(Error::Input("outer radius must be positive".into()));
        }
        if radial < 4 {
            return Err(Error::Input("need at least 4 radial annuli".into()));
        }
        if angular_base < 8 {
            return Err(Error::Input("need at least 8 angular samples per 2π".into()));
        }
        Ok(Self {
            qbar,
            rho,
            radial,
            angular_base,
        })
    }

    pub fn qbar(&self) -> usize {
        self.qbar
    }

    pub fn rho(&self) -> f64 {
        self.rho
    }

    /// Number of annuli K; ring indices run 1..=K, ring 0 is the center.
    pub fn radial_count(&self) -> usize {
        self.radial
    }

    /// Angular samples per 2π of covering angle.
    pub fn angular_base(&self) -> usize {
        self.angular_base
    }

    /// Angular nodes per ring (M·Q̄); node (k, M·Q̄) wraps to (k, 0).
    pub fn angular_count(&self) -> usize {
        self.angular_base * self.qbar
    }

    pub fn dr(&self) -> f64 {
        self.rho / self.radial as f64
    }

    /// Covering-angle step 2π/M.
    pub fn dphi(&self) -> f64 {
        std::f64::consts::TAU / self.angular_base as f64
    }

    pub fn radius(&self, k: usize) -> f64 {
        self.rho * k as f64 / self.radial as f64
    }

    /// Covering angle of angular index m.
    pub fn phi(&self, m: usize) -> f64 {
        std::f64::consts::TAU * m as f64 / self.angular_base as f64
    }

    /// Angle on the euclidean disk that the winding map sends to φ(m);
    /// ranges over [0, 2π) as m runs over a full ring.
    pub fn theta(&self, m: usize) -> f64 {
        self.phi(m) / self.qbar as f64
    }

    pub fn wrap_m(&self, m: isize) -> usize {
        let c = self.angular_count() as isize;
        (((m % c) + c) % c) as usize
    }

    /// Total nodes: one center plus K rings.
    pub fn node_count(&self) -> usize {
        1 + self.radial * self.angular_count()
    }

    /// Flat node index; `k = 0` is the center (any m).
    pub fn node_index(&self, k: usize, m: usize) -> usize {
        if k == 0 {
            0
        } else {
            1 + (k - 1) * self.angular_count() + m
        }
    }

    /// Area weight of node (k, m); the center carries zero weight and the
    /// weights sum to πρ²Q̄.
    pub fn area_weight(&self, k: usize) -> f64 {
        if k == 0 {
            return 0.0;
        }
        let c = if k == self.radial { 0.5 } else { 1.0 };
        c * self.radius(k) * self.dr() * self.dphi()
    }

    /// ∫_{B_r} of per-node scalar samples (length `node_count`). For radii
    /// between grid rings the cumulative ring integrals are interpolated
    /// linearly.
    pub fn ball_integral(&self, samples: &[f64], r: f64) -> Result<f64> {
        self.check_samples(samples)?;
        self.check_radius(r)?;
        let pos = r / self.dr();
        let k_full = pos.floor() as usize;
        let mut acc = 0.0;
        let mut ring = vec![0.0; self.radial + 1];
        for k in 1..=self.radial.min(k_full + 1) {
            ring[k] = self.ring_sum(samples, k) * self.radius(k) * self.dphi() * self.dr();
        }
        // trapezoid in r: full annuli plus half-weights at both ends of the
        // integration range (the r = 0 end vanishes with the area element)
        let kl = k_full.min(self.radial);
        for k in 1..kl {
            acc += ring[k];
        }
        if kl >= 1 {
            acc += 0.5 * ring[kl];
        }
        // partial annulus up to r
        let frac = pos - kl as f64;
        if frac > 0.0 && kl < self.radial {
            // linear interpolation of the cumulative integral
            let next = 0.5 * ring[kl] + 0.5 * ring[kl + 1];
            acc += frac * next;
        }
        Ok(acc)
    }

    /// ∫_{∂B_r} of per-node scalar samples; exact trapezoid on the ring
    /// when r is a grid radius, linear interpolation of ring integrals
    /// otherwise.
    pub fn circle_integral(&self, samples: &[f64], r: f64) -> Result<f64> {
        self.check_samples(samples)?;
        self.check_radius(r)?;
        let pos = r / self.dr();
        let k = pos.round() as usize;
        if (pos - k as f64).abs() < 1e-12 && k >= 1 {
            return Ok(self.circle_integral_at_ring(samples, k));
        }
        let kl = pos.floor() as usize;
        let frac = pos - kl as f64;
        let lo = if kl == 0 {
            0.0
        } else {
            self.circle_integral_at_ring(samples, kl)
        };
        let hi = self.circle_integral_at_ring(samples, (kl + 1).min(self.radial));
        Ok(lo * (1.0 - frac) + hi * frac)
    }

    pub fn circle_integral_at_ring(&self, samples: &[f64], k: usize) -> f64 {
        self.ring_sum(samples, k) * self.radius(k) * self.dphi()
    }

    fn ring_sum(&self, samples: &[f64], k: usize) -> f64 {
        let start = self.node_index(k, 0);
        samples[start..start + self.angular_count()].iter().sum()
    }

    fn check_samples(&self, samples: &[f64]) -> Result<()> {
        if samples.len() != self.node_count() {
            return Err(Error::Input(format!(
                "expected {} samples, got {}",
                self.node_count(),
                samples.len()
            )));
        }
        Ok(())
    }

    pub(crate) fn check_radius(&self, r: f64) -> Result<()> {
        if !(r >= 0.0) || r > self.rho * (1.0 + 1e-12) {
            return Err(Error::Input(format!(
                "radius {} outside [0, {}]",
                r, self.rho
            )));
        }
        Ok(())
    }

    /// Ring index whose radius is nearest to r, clamped to 1..=K.
    pub fn nearest_ring(&self, r: f64) -> usize {
        ((r / self.dr()).round() as usize).clamp(1, self.radial)
    }
}

/// The winding map ζ ↦ (ζ^Q̄, ζ) from the euclidean disk of radius ρ^{1/Q̄}
/// onto the branched disk.
pub fn wind(zeta: Complex64, qbar: usize, rho: f64) -> Result<(Complex64, Complex64)> {
    let max_norm = rho.powf(1.0 / qbar as f64);
    if zeta.norm() > max_norm * (1.0 + 1e-12) {
        return Err(Error::Input(format!(
            "|ζ| = {} exceeds the disk radius {}",
            zeta.norm(),
            max_norm
        )));
    }
    Ok((zeta.powu(qbar as u32), zeta))
}

/// Inverse of the winding map.
pub fn unwind(_z: Complex64, w: Complex64) -> Complex64 {
    w
}
