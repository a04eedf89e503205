//! Ground-truth field generators and a descent-based Dirichlet minimizer
//! used as an independent check against the harmonic competitor.

use crate::competitor;
use crate::error::{Error, Result};
use crate::field::MultiField;
use crate::grid::BranchedGrid;
use crate::multipoint::{match_slices, MatchWorkspace};
use crate::trace::{decompose_trace, BoundaryTrace, TraceDecomposition, TracePiece};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

/// One Fourier mode of a piece, with per-coordinate coefficients.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ModeSpec {
    pub l: usize,
    pub a: Vec<f64>,
    pub b: Vec<f64>,
}

/// One irreducible piece of a generated field.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PieceSpec {
    pub q_j: usize,
    /// Constant offset of the piece (the curve mean).
    #[serde(default)]
    pub offset: Vec<f64>,
    pub modes: Vec<ModeSpec>,
}

/// What to generate.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum GeneratorKind {
    /// Single common homogeneity degree: one mode per piece, equal l/Q_j.
    Homogeneous { pieces: Vec<PieceSpec> },
    /// Arbitrary band-limited mode lists per piece.
    Superposition { pieces: Vec<PieceSpec> },
    /// A homogeneous base plus amplitude·r^{α+order}·h(θ) added to every
    /// sheet, with h band-limited.
    Perturbed {
        pieces: Vec<PieceSpec>,
        order: f64,
        amplitude: f64,
        profile: Vec<ModeSpec>,
    },
    /// Seeded random separated superposition of single-valued pieces.
    RandomLipschitz {
        q: usize,
        l_max: usize,
        amplitude: f64,
        separation: f64,
    },
}

/// Generator request; `seed` makes generation reproducible bit-exactly.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct GeneratorSpec {
    pub n: usize,
    pub seed: u64,
    #[serde(flatten)]
    pub kind: GeneratorKind,
}

impl GeneratorSpec {
    /// Total Q of the generated field.
    pub fn total_q(&self) -> usize {
        match &self.kind {
            GeneratorKind::Homogeneous { pieces }
            | GeneratorKind::Superposition { pieces }
            | GeneratorKind::Perturbed { pieces, .. } => {
                pieces.iter().map(|p| p.q_j).sum()
            }
            GeneratorKind::RandomLipschitz { q, .. } => *q,
        }
    }

    /// Homogeneity degree of a single-degree spec.
    pub fn degree(&self) -> Option<f64> {
        let pieces = match &self.kind {
            GeneratorKind::Homogeneous { pieces } | GeneratorKind::Perturbed { pieces, .. } => {
                pieces
            }
            _ => return None,
        };
        let mut alpha = None;
        for p in pieces {
            for m in &p.modes {
                let a = m.l as f64 / p.q_j as f64;
                match alpha {
                    None => alpha = Some(a),
                    Some(prev) if (prev - a).abs() < 1e-12 => {}
                    _ => return None,
                }
            }
        }
        alpha
    }
}

fn pieces_to_decomposition(
    pieces: &[PieceSpec],
    n: usize,
    qbar: usize,
    angular_base: usize,
) -> Result<TraceDecomposition> {
    let mut out = Vec::with_capacity(pieces.len());
    let mut q = 0;
    for p in pieces {
        if p.q_j == 0 {
            return Err(Error::Input("piece cycle length must be >= 1".into()));
        }
        let l_top = p.modes.iter().map(|m| m.l).max().unwrap_or(0);
        let mut a = vec![vec![0.0; n]; l_top + 1];
        let mut b = vec![vec![0.0; n]; l_top + 1];
        if !p.offset.is_empty() {
            if p.offset.len() != n {
                return Err(Error::Input("piece offset dimension mismatch".into()));
            }
            for c in 0..n {
                a[0][c] = 2.0 * p.offset[c]; // constant term is a0/2
            }
        }
        for m in &p.modes {
            if m.a.len() != n || m.b.len() != n {
                return Err(Error::Input(format!(
                    "mode l={} coefficient arity mismatch (expected {n})",
                    m.l
                )));
            }
            if m.l == 0 {
                return Err(Error::Input(
                    "modes use l >= 1; constants go in the piece offset".into(),
                ));
            }
            for c in 0..n {
                a[m.l][c] += m.a[c];
                b[m.l][c] += m.b[c];
            }
        }
        q += p.q_j;
        out.push(TracePiece {
            q_j: p.q_j,
            multiplicity: 1,
            a,
            b,
            truncation_error: 0.0,
        });
    }
    Ok(TraceDecomposition {
        qbar,
        q,
        n,
        angular_base,
        l_max: out.iter().map(|p| p.a.len() - 1).max().unwrap_or(0),
        pieces: out,
        monodromy: Vec::new(),
    })
}

/// Materializes a spec on a grid. Homogeneous and superposition kinds are
/// the Fourier-power fields ρ^{l/Q_j}·(cos, sin) assembled over the cycle
/// offsets; the perturbed kind adds its per-sheet bump on top.
pub fn generate(spec: &GeneratorSpec, grid: BranchedGrid) -> Result<MultiField> {
    if spec.n == 0 {
        return Err(Error::Input("target dimension must be >= 1".into()));
    }
    match &spec.kind {
        GeneratorKind::Homogeneous { pieces } => {
            if spec.degree().is_none() {
                return Err(Error::Input(
                    "homogeneous kind requires a single common degree l/Q_j".into(),
                ));
            }
            let dec = pieces_to_decomposition(pieces, spec.n, grid.qbar(), grid.angular_base())?;
            competitor::harmonic_field(&dec, grid)
        }
        GeneratorKind::Superposition { pieces } => {
            let dec = pieces_to_decomposition(pieces, spec.n, grid.qbar(), grid.angular_base())?;
            competitor::harmonic_field(&dec, grid)
        }
        GeneratorKind::Perturbed {
            pieces,
            order,
            amplitude,
            profile,
        } => {
            if !(*order > 0.0) {
                return Err(Error::Input("perturbation order must be positive".into()));
            }
            let alpha = spec.degree().ok_or_else(|| {
                Error::Input("perturbed kind requires a homogeneous base".into())
            })?;
            let dec = pieces_to_decomposition(pieces, spec.n, grid.qbar(), grid.angular_base())?;
            let base = competitor::harmonic_field(&dec, grid)?;
            let q = base.q();
            let n = base.dim();
            for m in profile {
                if m.a.len() != n || m.b.len() != n {
                    return Err(Error::Input("perturbation profile arity mismatch".into()));
                }
            }
            let power = alpha + order;
            let rho = grid.rho();
            MultiField::from_fn(grid, q, n, |k, mm, r, _phi| {
                let mut v = base.values_at(k, mm).to_vec();
                if k > 0 {
                    let theta = grid.theta(mm);
                    let scale = amplitude * (r / rho).powf(power);
                    for mode in profile {
                        let (s, c) = (mode.l as f64 * theta).sin_cos();
                        for i in 0..q {
                            for cc in 0..n {
                                v[i * n + cc] += scale * (mode.a[cc] * c + mode.b[cc] * s);
                            }
                        }
                    }
                }
                v
            })
        }
        GeneratorKind::RandomLipschitz {
            q,
            l_max,
            amplitude,
            separation,
        } => {
            if *q == 0 {
                return Err(Error::Input("q must be >= 1".into()));
            }
            let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
            let mut pieces = Vec::with_capacity(*q);
            for i in 0..*q {
                let mut offset = vec![0.0; spec.n];
                offset[0] = *separation * i as f64;
                for c in 1..spec.n {
                    offset[c] = rng.gen_range(-0.25 * separation..0.25 * separation);
                }
                let mut modes = Vec::new();
                for l in 1..=*l_max {
                    let mut a = vec![0.0; spec.n];
                    let mut b = vec![0.0; spec.n];
                    for c in 0..spec.n {
                        a[c] = rng.gen_range(-1.0..1.0) * amplitude / l as f64;
                        b[c] = rng.gen_range(-1.0..1.0) * amplitude / l as f64;
                    }
                    modes.push(ModeSpec { l, a, b });
                }
                pieces.push(PieceSpec {
                    q_j: 1,
                    offset,
                    modes,
                });
            }
            let dec = pieces_to_decomposition(&pieces, spec.n, grid.qbar(), grid.angular_base())?;
            competitor::harmonic_field(&dec, grid)
        }
    }
}

/// How a minimizer result was produced.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "certificate", rename_all = "snake_case")]
pub enum Certificate {
    /// Decomposable trace: per-piece Fourier extension on the cycle cover
    /// (identical to the harmonic competitor path).
    Exact { truncation_error: f64 },
    /// Relaxation on the grid with boundary fixed.
    Descent {
        converged: bool,
        gradient_norm: f64,
        iterations: usize,
    },
}

/// Options of the descent path.
#[derive(Debug, Clone, Copy)]
pub struct DescentOptions {
    pub max_iters: usize,
    /// Stop when the gradient norm falls below `tol_rel` times its initial
    /// value.
    pub tol_rel: f64,
    pub eps_tie: f64,
    /// Skip the decomposition attempt and always run descent.
    pub force_descent: bool,
}

impl Default for DescentOptions {
    fn default() -> Self {
        Self {
            max_iters: 100_000,
            tol_rel: 1e-8,
            eps_tie: crate::EPS_TIE,
            force_descent: false,
        }
    }
}

/// Dirichlet minimization with the given boundary trace.
///
/// Decomposable traces get the per-piece harmonic extension ("exact"
/// certificate); otherwise projected descent runs on the node values with
/// the boundary fixed, freezing the previous matching wherever a step's
/// matching turns ambiguous.
pub fn dir_minimize(
    trace: &BoundaryTrace,
    grid: BranchedGrid,
    opts: DescentOptions,
) -> Result<(MultiField, Certificate)> {
    if trace.qbar() != grid.qbar() || trace.angular_base() != grid.angular_base() {
        return Err(Error::Input("trace layout does not match the grid".into()));
    }
    if !opts.force_descent {
        let l_max = grid.angular_base() / 4;
        match decompose_trace(trace, l_max, opts.eps_tie) {
            Ok(dec) => {
                let field = competitor::harmonic_field(&dec, grid)?;
                let truncation_error = dec
                    .pieces
                    .iter()
                    .map(|p| p.truncation_error)
                    .fold(0.0f64, f64::max);
                return Ok((field, Certificate::Exact { truncation_error }));
            }
            Err(Error::Collision(_)) => {}
            Err(e) => return Err(e),
        }
    }
    descend(trace, grid, opts)
}

/// Frozen sheet pairings of one relaxation sweep.
struct FrozenLinks {
    /// radial\[(k-1)·mq·q + m·q + i\]: slot at ring k+1 linked to slot i at
    /// ring k, k = 1..K-1
    radial: Vec<u8>,
    /// angular\[(k-1)·mq·q + m·q + i\]: slot at (k, m+1) linked to slot i
    /// at (k, m), k = 1..K
    angular: Vec<u8>,
}

fn descend(
    trace: &BoundaryTrace,
    grid: BranchedGrid,
    opts: DescentOptions,
) -> Result<(MultiField, Certificate)> {
    let q = trace.q();
    let n = trace.dim();
    let k_max = grid.radial_count();
    let mq = grid.angular_count();
    let rho = grid.rho();

    // cone/homotopy initial guess: boundary values shrunk linearly towards
    // the overall boundary mean
    let mut mean = vec![0.0; n];
    for m in 0..mq {
        let v = trace.values_at(m);
        for i in 0..q {
            for c in 0..n {
                mean[c] += v[i * n + c];
            }
        }
    }
    for c in mean.iter_mut() {
        *c /= (mq * q) as f64;
    }
    let mut values = vec![0.0; grid.node_count() * q * n];
    for i in 0..q {
        values[i * n..(i + 1) * n].copy_from_slice(&mean);
    }
    for k in 1..=k_max {
        let lam = grid.radius(k) / rho;
        for m in 0..mq {
            let src = trace.values_at(m);
            let dst = grid.node_index(k, m) * q * n;
            for j in 0..q * n {
                values[dst + j] = mean[j % n] + lam * (src[j] - mean[j % n]);
            }
        }
    }

    let mut links = relink(&values, &grid, q, n, opts.eps_tie, None);
    let nvals = values.len();
    let mut grad = vec![0.0; nvals];
    let mut resid = vec![0.0; nvals];
    let mut dir = vec![0.0; nvals];
    let mut hd = vec![0.0; nvals];
    let mut initial_norm: Option<f64> = None;
    let mut iterations = 0;
    let mut converged = false;
    let mut grad_norm = 0.0;
    // conjugate-gradient cycles on the frozen quadratic, re-matching the
    // sheets between cycles (each re-matching can only lower the energy)
    let relink_every = 50;

    'outer: while iterations < opts.max_iters {
        let gnorm_sq = gradient_into(&values, &grid, q, n, &links, &mut grad);
        grad_norm = gnorm_sq.sqrt();
        let init = *initial_norm.get_or_insert(grad_norm);
        if grad_norm <= opts.tol_rel * init || grad_norm == 0.0 {
            converged = true;
            break;
        }
        for j in 0..nvals {
            resid[j] = -grad[j];
            dir[j] = resid[j];
        }
        let mut rs_old = gnorm_sq;
        for _ in 0..relink_every {
            if iterations >= opts.max_iters {
                break 'outer;
            }
            iterations += 1;
            hessian_apply(&dir, &grid, q, n, &links, &mut hd);
            let dhd: f64 = dir.iter().zip(&hd).map(|(a, b)| a * b).sum();
            if dhd <= 0.0 {
                break;
            }
            let alpha = rs_old / dhd;
            for j in 0..nvals {
                values[j] += alpha * dir[j];
            }
            for j in 0..nvals {
                resid[j] -= alpha * hd[j];
            }
            let rs_new: f64 = resid.iter().map(|x| x * x).sum();
            grad_norm = rs_new.sqrt();
            if grad_norm <= opts.tol_rel * init {
                converged = true;
                break 'outer;
            }
            let beta = rs_new / rs_old;
            rs_old = rs_new;
            for j in 0..nvals {
                dir[j] = resid[j] + beta * dir[j];
            }
        }
        links = relink(&values, &grid, q, n, opts.eps_tie, Some(links));
    }

    let field = MultiField::from_raw(grid, q, n, values)?;
    Ok((
        field,
        Certificate::Descent {
            converged,
            gradient_norm: grad_norm,
            iterations,
        },
    ))
}

fn idx(grid: &BranchedGrid, k: usize, m: usize, q: usize, n: usize) -> usize {
    grid.node_index(k, m) * q * n
}

/// Recomputes sheet links from the current values, keeping the previous
/// link wherever the new matching is ambiguous.
fn relink(
    values: &[f64],
    grid: &BranchedGrid,
    q: usize,
    n: usize,
    eps_tie: f64,
    previous: Option<FrozenLinks>,
) -> FrozenLinks {
    let k_max = grid.radial_count();
    let mq = grid.angular_count();
    let mut ws = MatchWorkspace::new();
    let mut radial = vec![0u8; (k_max - 1) * mq * q];
    let mut angular = vec![0u8; k_max * mq * q];
    for k in 1..=k_max {
        for m in 0..mq {
            let here = &values[idx(grid, k, m, q, n)..idx(grid, k, m, q, n) + q * n];
            if k < k_max {
                let up = &values[idx(grid, k + 1, m, q, n)..idx(grid, k + 1, m, q, n) + q * n];
                let mt = match_slices(here, up, q, n, eps_tie, &mut ws);
                let base = ((k - 1) * mq + m) * q;
                if mt.ambiguous {
                    if let Some(prev) = &previous {
                        radial[base..base + q].copy_from_slice(&prev.radial[base..base + q]);
                    } else {
                        for i in 0..q {
                            radial[base + i] = mt.perm[i] as u8;
                        }
                    }
                } else {
                    for i in 0..q {
                        radial[base + i] = mt.perm[i] as u8;
                    }
                }
            }
            let next = &values
                [idx(grid, k, (m + 1) % mq, q, n)..idx(grid, k, (m + 1) % mq, q, n) + q * n];
            let mt = match_slices(here, next, q, n, eps_tie, &mut ws);
            let base = ((k - 1) * mq + m) * q;
            if mt.ambiguous {
                if let Some(prev) = &previous {
                    angular[base..base + q].copy_from_slice(&prev.angular[base..base + q]);
                } else {
                    for i in 0..q {
                        angular[base + i] = mt.perm[i] as u8;
                    }
                }
            } else {
                for i in 0..q {
                    angular[base + i] = mt.perm[i] as u8;
                }
            }
        }
    }
    FrozenLinks { radial, angular }
}

/// Energy of the frozen difference form (forward differences against the
/// linked sheets, midpoint annulus weights).
#[cfg(test)]
fn frozen_energy(values: &[f64], grid: &BranchedGrid, q: usize, n: usize, links: &FrozenLinks) -> f64 {
    let k_max = grid.radial_count();
    let mq = grid.angular_count();
    let dr = grid.dr();
    let dphi = grid.dphi();
    let mut acc = 0.0;
    for k in 1..=k_max {
        let r = grid.radius(k);
        for m in 0..mq {
            let base = ((k - 1) * mq + m) * q;
            let here = &values[idx(grid, k, m, q, n)..idx(grid, k, m, q, n) + q * n];
            if k < k_max {
                let up = &values[idx(grid, k + 1, m, q, n)..idx(grid, k + 1, m, q, n) + q * n];
                let w = (r + 0.5 * dr) * dr * dphi / (dr * dr);
                for i in 0..q {
                    let j = links.radial[base + i] as usize;
                    for c in 0..n {
                        let d = up[j * n + c] - here[i * n + c];
                        acc += w * d * d;
                    }
                }
            }
            let next = &values
                [idx(grid, k, (m + 1) % mq, q, n)..idx(grid, k, (m + 1) % mq, q, n) + q * n];
            let chord = 2.0 * r * (0.5 * dphi).sin();
            // the outer ring represents only half an annulus
            let cap = if k == k_max { 0.5 } else { 1.0 };
            let w = cap * r * dr * dphi / (chord * chord);
            for i in 0..q {
                let j = links.angular[base + i] as usize;
                for c in 0..n {
                    let d = next[j * n + c] - here[i * n + c];
                    acc += w * d * d;
                }
            }
        }
    }
    acc
}

/// Gradient of the frozen form into `grad` (zero on the fixed center and
/// boundary rows); returns |grad|².
fn gradient_into(
    values: &[f64],
    grid: &BranchedGrid,
    q: usize,
    n: usize,
    links: &FrozenLinks,
    grad: &mut [f64],
) -> f64 {
    hessian_apply(values, grid, q, n, links, grad);
    grad.iter().map(|g| g * g).sum()
}

/// Action of the frozen quadratic form's Hessian: out = 2 Σ w Sᵀ(S·v),
/// with the fixed rows (center and boundary ring) projected to zero.
fn hessian_apply(
    v: &[f64],
    grid: &BranchedGrid,
    q: usize,
    n: usize,
    links: &FrozenLinks,
    out: &mut [f64],
) {
    let k_max = grid.radial_count();
    let mq = grid.angular_count();
    let dr = grid.dr();
    let dphi = grid.dphi();
    for g in out.iter_mut() {
        *g = 0.0;
    }
    for k in 1..=k_max {
        let r = grid.radius(k);
        for m in 0..mq {
            let base = ((k - 1) * mq + m) * q;
            let here_at = idx(grid, k, m, q, n);
            if k < k_max {
                let up_at = idx(grid, k + 1, m, q, n);
                let w = (r + 0.5 * dr) * dr * dphi / (dr * dr);
                for i in 0..q {
                    let j = links.radial[base + i] as usize;
                    for c in 0..n {
                        let d = v[up_at + j * n + c] - v[here_at + i * n + c];
                        out[here_at + i * n + c] -= 2.0 * w * d;
                        out[up_at + j * n + c] += 2.0 * w * d;
                    }
                }
            }
            let next_at = idx(grid, k, (m + 1) % mq, q, n);
            let chord = 2.0 * r * (0.5 * dphi).sin();
            let cap = if k == k_max { 0.5 } else { 1.0 };
            let w = cap * r * dr * dphi / (chord * chord);
            for i in 0..q {
                let j = links.angular[base + i] as usize;
                for c in 0..n {
                    let d = v[next_at + j * n + c] - v[here_at + i * n + c];
                    out[here_at + i * n + c] -= 2.0 * w * d;
                    out[next_at + j * n + c] += 2.0 * w * d;
                }
            }
        }
    }
    for g in out[..q * n].iter_mut() {
        *g = 0.0;
    }
    let bstart = idx(grid, k_max, 0, q, n);
    for g in out[bstart..bstart + mq * q * n].iter_mut() {
        *g = 0.0;
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::competitor::{closed_form_energies, quadrature_energies};
    use crate::trace::extract_trace;

    fn grid(k: usize, m: usize) -> BranchedGrid {
        BranchedGrid::new(1, 1.0, k, m).unwrap()
    }

    fn branch_pair_spec() -> GeneratorSpec {
        GeneratorSpec {
            n: 2,
            seed: 0,
            kind: GeneratorKind::Homogeneous {
                pieces: vec![PieceSpec {
                    q_j: 2,
                    offset: vec![],
                    modes: vec![ModeSpec {
                        l: 3,
                        a: vec![1.0, 0.0],
                        b: vec![0.0, 1.0],
                    }],
                }],
            },
        }
    }

    #[test]
    fn homogeneous_branch_pair_has_expected_frequency() {
        let f = generate(&branch_pair_spec(), grid(128, 128)).unwrap();
        let p = crate::frequency::profile(&f, 0.5, 1e-9);
        for row in p.window(0.2, 0.9) {
            assert!((row.i.unwrap() - 1.5).abs() < 2e-3, "I = {:?}", row.i);
        }
    }

    #[test]
    fn single_valued_linear_spec() {
        let spec = GeneratorSpec {
            n: 1,
            seed: 0,
            kind: GeneratorKind::Homogeneous {
                pieces: vec![PieceSpec {
                    q_j: 1,
                    offset: vec![],
                    modes: vec![ModeSpec {
                        l: 1,
                        a: vec![1.0],
                        b: vec![0.0],
                    }],
                }],
            },
        };
        let f = generate(&spec, grid(16, 16)).unwrap();
        // f = Re z sampled exactly
        for k in 1..=16 {
            for m in 0..16 {
                let g = f.grid();
                let expect = g.radius(k) * g.phi(m).cos();
                let got = f.values_at(k, m)[0];
                assert!((got - expect).abs() < 1e-14, "k={k} m={m}");
            }
        }
    }

    #[test]
    fn random_lipschitz_is_seed_deterministic() {
        let spec = GeneratorSpec {
            n: 2,
            seed: 42,
            kind: GeneratorKind::RandomLipschitz {
                q: 3,
                l_max: 5,
                amplitude: 0.4,
                separation: 4.0,
            },
        };
        let f1 = generate(&spec, grid(24, 32)).unwrap();
        let f2 = generate(&spec, grid(24, 32)).unwrap();
        assert_eq!(f1.raw_values(), f2.raw_values());
        let other = GeneratorSpec { seed: 43, ..spec };
        let f3 = generate(&other, grid(24, 32)).unwrap();
        assert_ne!(f1.raw_values(), f3.raw_values());
    }

    #[test]
    fn generated_field_round_trips_through_decomposition() {
        let f = generate(&branch_pair_spec(), grid(64, 128)).unwrap();
        let tr = extract_trace(&f, 1.0, 1e-9).unwrap();
        let dec = decompose_trace(&tr, 32, 1e-9).unwrap();
        assert_eq!(dec.pieces.len(), 1);
        assert_eq!(dec.pieces[0].q_j, 2);
        // mode content survives: single l = 3 with unit coefficients
        let p = &dec.pieces[0];
        for l in 0..p.a.len() {
            let mag = (p.a[l].iter().map(|x| x * x).sum::<f64>()
                + p.b[l].iter().map(|x| x * x).sum::<f64>())
            .sqrt();
            if l == 3 {
                assert!((mag - 2.0f64.sqrt()).abs() < 1e-10, "l=3: {mag}");
            } else {
                assert!(mag < 1e-10, "l={l}: {mag}");
            }
        }
    }

    #[test]
    fn invalid_specs_are_rejected() {
        // mixed degrees under the homogeneous kind
        let spec = GeneratorSpec {
            n: 1,
            seed: 0,
            kind: GeneratorKind::Homogeneous {
                pieces: vec![
                    PieceSpec {
                        q_j: 1,
                        offset: vec![],
                        modes: vec![ModeSpec { l: 1, a: vec![1.0], b: vec![0.0] }],
                    },
                    PieceSpec {
                        q_j: 1,
                        offset: vec![],
                        modes: vec![ModeSpec { l: 2, a: vec![1.0], b: vec![0.0] }],
                    },
                ],
            },
        };
        assert!(generate(&spec, grid(8, 8)).is_err());
        // coefficient arity mismatch
        let bad = GeneratorSpec {
            n: 2,
            seed: 0,
            kind: GeneratorKind::Superposition {
                pieces: vec![PieceSpec {
                    q_j: 1,
                    offset: vec![],
                    modes: vec![ModeSpec { l: 1, a: vec![1.0], b: vec![0.0] }],
                }],
            },
        };
        assert!(generate(&bad, grid(8, 8)).is_err());
    }

    #[test]
    fn exact_minimizer_for_single_cosine_trace() {
        // trace cos θ: the minimizer is Re z with energy π
        let mq = 64;
        let mut values = Vec::with_capacity(mq);
        for m in 0..mq {
            values.push((std::f64::consts::TAU * m as f64 / mq as f64).cos());
        }
        let tr = BoundaryTrace::new(1, mq, 1, 1, 1.0, values).unwrap();
        let g = grid(64, 64);
        let (field, cert) = dir_minimize(&tr, g, DescentOptions::default()).unwrap();
        assert!(matches!(cert, Certificate::Exact { .. }));
        let e = quadrature_energies(&field, 1e-9);
        assert!(
            (e.dirichlet - std::f64::consts::PI).abs() < 1e-6 * std::f64::consts::PI,
            "energy {}",
            e.dirichlet
        );
    }

    #[test]
    fn exact_minimizer_for_separated_constants() {
        let mq = 32;
        let mut values = Vec::with_capacity(mq * 2);
        for _ in 0..mq {
            values.extend_from_slice(&[0.0, 7.0]);
        }
        let tr = BoundaryTrace::new(1, mq, 2, 1, 1.0, values).unwrap();
        let (field, cert) = dir_minimize(&tr, grid(16, 32), DescentOptions::default()).unwrap();
        assert!(matches!(cert, Certificate::Exact { .. }));
        let e = quadrature_energies(&field, 1e-9);
        assert!(e.dirichlet.abs() < 1e-20, "energy {}", e.dirichlet);
    }

    #[test]
    fn frozen_form_approximates_dirichlet_energy() {
        // the forward-difference form used by descent is consistent with
        // the Dirichlet integral: π for Re z on the unit disk
        let g = grid(64, 64);
        let f = MultiField::from_fn(g, 1, 1, |_, _, r, phi| vec![r * phi.cos()]).unwrap();
        let links = relink(f.raw_values(), &g, 1, 1, 1e-9, None);
        let e = frozen_energy(f.raw_values(), &g, 1, 1, &links);
        assert!(
            (e - std::f64::consts::PI).abs() < 2e-3 * std::f64::consts::PI,
            "frozen energy {e}"
        );
    }

    #[test]
    fn descent_energy_decreases_across_relink_cycles() {
        let f = generate(&branch_pair_spec(), grid(24, 32)).unwrap();
        let tr = extract_trace(&f, 1.0, 1e-9).unwrap();
        let g = grid(24, 32);
        let mut energies = Vec::new();
        for iters in [5usize, 20, 80, 320, 1280] {
            let opts = DescentOptions {
                force_descent: true,
                max_iters: iters,
                ..DescentOptions::default()
            };
            let (field, _) = dir_minimize(&tr, g, opts).unwrap();
            let links = relink(field.raw_values(), &g, 2, 2, 1e-9, None);
            energies.push(frozen_energy(field.raw_values(), &g, 2, 2, &links));
        }
        for w in energies.windows(2) {
            assert!(w[1] <= w[0] + 1e-12 * (1.0 + w[0]), "{energies:?}");
        }
    }

    #[test]
    fn descent_agrees_with_exact_path() {
        // branch-pair trace: descent from the cone start reaches the
        // harmonic competitor energy
        let f = generate(&branch_pair_spec(), grid(48, 64)).unwrap();
        let tr = extract_trace(&f, 1.0, 1e-9).unwrap();
        let g = grid(48, 64);
        let opts = DescentOptions {
            force_descent: true,
            max_iters: 60_000,
            ..DescentOptions::default()
        };
        let (field, cert) = dir_minimize(&tr, g, opts).unwrap();
        match cert {
            Certificate::Descent { converged, .. } => assert!(converged),
            other => panic!("expected descent certificate, got {other:?}"),
        }
        let dec = decompose_trace(&tr, 16, 1e-9).unwrap();
        let exact = crate::competitor::harmonic_field(&dec, g).unwrap();
        let e_descent = quadrature_energies(&field, 1e-9).dirichlet;
        let e_exact = quadrature_energies(&exact, 1e-9).dirichlet;
        let closed = closed_form_energies(&dec).dirichlet;
        assert!(
            (e_descent - e_exact).abs() < 1e-3 * e_exact,
            "descent {} vs exact {} (closed form {})",
            e_descent,
            e_exact,
            closed
        );
        // the descent result can only undercut the competitor by the
        // discretization slack
        assert!(e_descent <= e_exact + 1e-3 * e_exact);
    }

    #[test]
    fn descent_energy_never_undercuts_decomposable_minimum_substantially() {
        // random separated superposition
        let spec = GeneratorSpec {
            n: 1,
            seed: 7,
            kind: GeneratorKind::RandomLipschitz {
                q: 2,
                l_max: 3,
                amplitude: 0.3,
                separation: 5.0,
            },
        };
        let g = grid(32, 48);
        let f = generate(&spec, g).unwrap();
        let tr = extract_trace(&f, 1.0, 1e-9).unwrap();
        let (exact_field, cert) = dir_minimize(&tr, g, DescentOptions::default()).unwrap();
        assert!(matches!(cert, Certificate::Exact { .. }));
        let opts = DescentOptions {
            force_descent: true,
            max_iters: 40_000,
            ..DescentOptions::default()
        };
        let (descent_field, _) = dir_minimize(&tr, g, opts).unwrap();
        let e_exact = quadrature_energies(&exact_field, 1e-9).dirichlet;
        let e_descent = quadrature_energies(&descent_field, 1e-9).dirichlet;
        assert!(
            e_descent >= e_exact - 1e-3 * e_exact.max(1.0)
                && e_descent <= e_exact + 1e-3 * e_exact.max(1.0),
            "descent {e_descent} vs exact {e_exact}"
        );
    }
}
