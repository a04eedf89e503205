//! Invariant suites behind `qbranch verify`: each check prints one
//! pass/fail line; the command exits nonzero if any check fails.

use qbranch::blowup;
use qbranch::competitor::{self, Smoothing};
use qbranch::frequency;
use qbranch::multipoint::{g_distance, match_selection, QPoint};
use qbranch::oracle::{self, DescentOptions, GeneratorKind, GeneratorSpec, ModeSpec, PieceSpec};
use qbranch::trace::{decompose_trace, extract_trace};
use qbranch::{BranchedGrid, Error, MultiField};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

type Check = (&'static str, Box<dyn FnOnce() -> Result<(), String>>);

pub fn run_suite(suite: &str, seed: u64) -> qbranch::Result<usize> {
    let mut checks: Vec<Check> = Vec::new();
    let all = suite == "all";
    match suite {
        "matching" | "quadrature" | "competitor" | "frequency" | "blowup" | "minimize" | "all" => {}
        other => {
            return Err(Error::Input(format!(
                "unknown suite {other:?}; expected matching|quadrature|competitor|frequency|blowup|minimize|all"
            )))
        }
    }
    if all || suite == "matching" {
        matching_checks(&mut checks, seed);
    }
    if all || suite == "quadrature" {
        quadrature_checks(&mut checks);
    }
    if all || suite == "competitor" {
        competitor_checks(&mut checks, seed);
    }
    if all || suite == "frequency" {
        frequency_checks(&mut checks);
    }
    if all || suite == "blowup" {
        blowup_checks(&mut checks);
    }
    if all || suite == "minimize" {
        minimize_checks(&mut checks);
    }

    let mut failures = 0;
    for (name, check) in checks {
        match check() {
            Ok(()) => println!("PASS {name}"),
            Err(msg) => {
                failures += 1;
                println!("FAIL {name}: {msg}");
            }
        }
    }
    println!(
        "verify: {} check(s), {} failure(s)",
        if failures == 0 { "all passed" } else { "completed" },
        failures
    );
    Ok(failures)
}

fn random_qpoint(rng: &mut ChaCha8Rng, q: usize, n: usize) -> QPoint {
    let vals: Vec<f64> = (0..q * n).map(|_| rng.gen_range(-2.0..2.0)).collect();
    QPoint::new(q, n, vals).unwrap()
}

fn brute_force_distance(a: &QPoint, b: &QPoint) -> f64 {
    fn next_perm(p: &mut [usize]) -> bool {
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
    let q = a.q();
    let mut perm: Vec<usize> = (0..q).collect();
    let mut best = f64::INFINITY;
    loop {
        let mut s = 0.0;
        for (i, &j) in perm.iter().enumerate() {
            let (va, vb) = (a.value(i), b.value(j));
            let mut pair = 0.0;
            for c in 0..a.dim() {
                let d = va[c] - vb[c];
                pair += d * d;
            }
            s += pair;
        }
        if s < best {
            best = s;
        }
        if !next_perm(&mut perm) {
            break;
        }
    }
    best.sqrt()
}

fn matching_checks(checks: &mut Vec<Check>, seed: u64) {
    checks.push((
        "matching: assignment equals brute force (Q = 2..6)",
        Box::new(move || {
            let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x6d61);
            for q in 2..=6 {
                for trial in 0..200 {
                    let n = rng.gen_range(1..=3);
                    let a = random_qpoint(&mut rng, q, n);
                    let b = random_qpoint(&mut rng, q, n);
                    let fast = g_distance(&a, &b).map_err(|e| e.to_string())?;
                    let brute = brute_force_distance(&a, &b);
                    if fast != brute {
                        return Err(format!("q={q} trial={trial}: {fast} vs {brute}"));
                    }
                }
            }
            Ok(())
        }),
    ));
    checks.push((
        "matching: metric properties on random triples",
        Box::new(move || {
            let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x7472);
            for trial in 0..500 {
                let q = rng.gen_range(1..=4);
                let n = rng.gen_range(1..=3);
                let a = random_qpoint(&mut rng, q, n);
                let b = random_qpoint(&mut rng, q, n);
                let c = random_qpoint(&mut rng, q, n);
                let ab = g_distance(&a, &b).map_err(|e| e.to_string())?;
                let ba = g_distance(&b, &a).map_err(|e| e.to_string())?;
                let ac = g_distance(&a, &c).map_err(|e| e.to_string())?;
                let bc = g_distance(&b, &c).map_err(|e| e.to_string())?;
                if (ab - ba).abs() > 1e-12 * (1.0 + ab) {
                    return Err(format!("symmetry broken at trial {trial}"));
                }
                if ac > ab + bc + 1e-12 {
                    return Err(format!("triangle inequality broken at trial {trial}"));
                }
            }
            Ok(())
        }),
    ));
    checks.push((
        "matching: deterministic tie-break and ambiguity flag",
        Box::new(|| {
            let a = QPoint::new(2, 2, vec![0.0, 1.0, 0.0, -1.0]).unwrap();
            let b = QPoint::new(2, 2, vec![1.0, 0.0, -1.0, 0.0]).unwrap();
            let m = match_selection(&a, &b, 1e-9).map_err(|e| e.to_string())?;
            if !m.ambiguous {
                return Err("symmetric configuration not flagged".into());
            }
            if m.perm != vec![0, 1] {
                return Err(format!("tie-break not lexicographic: {:?}", m.perm));
            }
            let c = QPoint::constant(3, &[2.0, 2.0]).unwrap();
            let mc = match_selection(&c, &c, 1e-9).map_err(|e| e.to_string())?;
            if mc.ambiguous {
                return Err("repeated values wrongly flagged".into());
            }
            Ok(())
        }),
    ));
}

fn quadrature_checks(checks: &mut Vec<Check>) {
    checks.push((
        "quadrature: cover area and circumference are exact",
        Box::new(|| {
            for qbar in 1..=3 {
                let g = BranchedGrid::new(qbar, 1.25, 32, 16).map_err(|e| e.to_string())?;
                let ones = vec![1.0; g.node_count()];
                let area = g.ball_integral(&ones, 1.25).map_err(|e| e.to_string())?;
                let expected = std::f64::consts::PI * 1.25 * 1.25 * qbar as f64;
                if (area - expected).abs() > 1e-12 * expected {
                    return Err(format!("area {area} vs {expected}"));
                }
                let len = g.circle_integral(&ones, 1.0).map_err(|e| e.to_string())?;
                let expected = std::f64::consts::TAU * qbar as f64;
                if (len - expected).abs() > 1e-12 * expected {
                    return Err(format!("length {len} vs {expected}"));
                }
            }
            Ok(())
        }),
    ));
    checks.push((
        "quadrature: second-order convergence on smooth integrands",
        Box::new(|| {
            let f = |r: f64, phi: f64| (2.5 * r).cos() * (1.3 + (2.0 * phi).cos()) + r * phi.sin();
            let value = |kk: usize, mm: usize| -> Result<f64, String> {
                let g = BranchedGrid::new(1, 1.0, kk, mm).map_err(|e| e.to_string())?;
                let mut s = vec![0.0; g.node_count()];
                for k in 1..=kk {
                    for m in 0..g.angular_count() {
                        s[g.node_index(k, m)] = f(g.radius(k), g.phi(m));
                    }
                }
                s[0] = f(0.0, 0.0);
                g.ball_integral(&s, 1.0).map_err(|e| e.to_string())
            };
            let reference = value(1024, 64)?;
            let e1 = (value(64, 64)? - reference).abs();
            let e2 = (value(128, 64)? - reference).abs();
            let ratio = e1 / e2.max(1e-300);
            if !(3.0..=5.5).contains(&ratio) {
                return Err(format!("convergence ratio {ratio}"));
            }
            Ok(())
        }),
    ));
    checks.push((
        "quadrature: Dirichlet energy is conformally invariant",
        Box::new(|| {
            // compare the energy of f on the double cover with f∘W on the
            // euclidean disk
            let qbar = 2usize;
            let grid_b = BranchedGrid::new(qbar, 1.0, 128, 64).map_err(|e| e.to_string())?;
            let f = MultiField::from_fn(grid_b, 1, 1, |_, _, r, phi| {
                vec![r * (phi / 2.0).cos() + 0.3 * r * r * phi.cos()]
            })
            .map_err(|e| e.to_string())?;
            let sel = f.radial_selections(1e-9);
            let scan = f.ring_scan(&sel);
            let d_branched = scan.dirichlet_to(grid_b.dr(), 128);

            let grid_e =
                BranchedGrid::new(1, 1.0, 128, 64 * qbar).map_err(|e| e.to_string())?;
            let pullback = MultiField::from_fn(grid_e, 1, 1, |_, _, s, theta| {
                let r = s.powi(qbar as i32);
                let phi = qbar as f64 * theta;
                vec![r * (phi / 2.0).cos() + 0.3 * r * r * phi.cos()]
            })
            .map_err(|e| e.to_string())?;
            let sel_e = pullback.radial_selections(1e-9);
            let scan_e = pullback.ring_scan(&sel_e);
            let d_euclid = scan_e.dirichlet_to(grid_e.dr(), 128);
            let rel = (d_branched - d_euclid).abs() / d_branched;
            if rel > 5e-3 {
                return Err(format!(
                    "branched {d_branched} vs euclidean {d_euclid} (rel {rel:.2e})"
                ));
            }
            Ok(())
        }),
    ));
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

fn competitor_checks(checks: &mut Vec<Check>, seed: u64) {
    checks.push((
        "competitor: quadrature energies match the closed forms",
        Box::new(move || {
            let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x636f);
            for trial in 0..4 {
                let n = 2;
                let piece_count = rng.gen_range(1..=2);
                let mut pieces = Vec::new();
                for p in 0..piece_count {
                    let q_j = rng.gen_range(1..=2);
                    let mut modes = Vec::new();
                    for l in q_j..=(q_j + 3) {
                        modes.push(ModeSpec {
                            l,
                            a: vec![rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)],
                            b: vec![rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)],
                        });
                    }
                    pieces.push(PieceSpec {
                        q_j,
                        offset: vec![8.0 * p as f64, 0.0],
                        modes,
                    });
                }
                let spec = GeneratorSpec {
                    n,
                    seed: 0,
                    kind: GeneratorKind::Superposition { pieces },
                };
                let grid = BranchedGrid::new(1, 1.0, 256, 512).map_err(|e| e.to_string())?;
                let field = oracle::generate(&spec, grid).map_err(|e| e.to_string())?;
                let tr = extract_trace(&field, 1.0, 1e-9).map_err(|e| e.to_string())?;
                let dec = decompose_trace(&tr, 128, 1e-9).map_err(|e| e.to_string())?;
                let closed = competitor::closed_form_energies(&dec);
                let quad = competitor::quadrature_energies(&field, 1e-9);
                let rel = (quad.dirichlet - closed.dirichlet).abs() / closed.dirichlet;
                if rel > 5e-3 {
                    return Err(format!(
                        "trial {trial}: dirichlet {} vs {} (rel {rel:.2e})",
                        quad.dirichlet, closed.dirichlet
                    ));
                }
            }
            Ok(())
        }),
    ));
    checks.push((
        "competitor: smoothing excess shrinks with the blend width",
        Box::new(|| {
            let spec = branch_pair_spec();
            let grid = BranchedGrid::new(1, 1.0, 64, 64).map_err(|e| e.to_string())?;
            let field = oracle::generate(&spec, grid).map_err(|e| e.to_string())?;
            let tr = extract_trace(&field, 1.0, 1e-9).map_err(|e| e.to_string())?;
            let dec = decompose_trace(&tr, 16, 1e-9).map_err(|e| e.to_string())?;
            let mut last = f64::INFINITY;
            for t in [0.4, 0.2, 0.1] {
                let rep = competitor::smoothing_report(
                    &dec,
                    grid,
                    Smoothing { t, clamp: 0.02 },
                    1e-9,
                )
                .map_err(|e| e.to_string())?;
                if rep.excess >= last {
                    return Err(format!("excess not decreasing at t={t}"));
                }
                last = rep.excess;
            }
            Ok(())
        }),
    ));
}

fn frequency_checks(checks: &mut Vec<Check>) {
    checks.push((
        "frequency: homogeneous fields have constant I",
        Box::new(|| {
            for (alpha_num, q_j) in [(1usize, 1usize), (3, 2), (2, 1), (5, 2), (3, 1)] {
                let alpha = alpha_num as f64 / q_j as f64;
                let spec = GeneratorSpec {
                    n: 2,
                    seed: 0,
                    kind: GeneratorKind::Homogeneous {
                        pieces: vec![PieceSpec {
                            q_j,
                            offset: vec![],
                            modes: vec![ModeSpec {
                                l: alpha_num,
                                a: vec![1.0, 0.0],
                                b: vec![0.0, 1.0],
                            }],
                        }],
                    },
                };
                let kk = if alpha_num == 3 && q_j == 1 { 768 } else { 512 };
                let grid = BranchedGrid::new(1, 1.0, kk, 2048).map_err(|e| e.to_string())?;
                let field = oracle::generate(&spec, grid).map_err(|e| e.to_string())?;
                let prof = frequency::profile(&field, 0.5, 1e-9);
                for row in prof.window(0.2, 0.9) {
                    let i = row.i.ok_or("undefined I")?;
                    if (i - alpha).abs() > 1e-3 {
                        return Err(format!("alpha={alpha}: I({}) = {i}", row.r));
                    }
                }
            }
            Ok(())
        }),
    ));
    checks.push((
        "frequency: H' identity residual within tolerance",
        Box::new(|| {
            let spec = branch_pair_spec();
            let grid = BranchedGrid::new(1, 1.0, 512, 128).map_err(|e| e.to_string())?;
            let field = oracle::generate(&spec, grid).map_err(|e| e.to_string())?;
            let prof = frequency::profile(&field, 0.5, 1e-9);
            let rep = frequency::check_h_prime(&prof, (0.1, 0.9)).map_err(|e| e.to_string())?;
            if rep.max_residual > 5e-2 {
                return Err(format!("residual {}", rep.max_residual));
            }
            Ok(())
        }),
    ));
    checks.push((
        "frequency: Poincaré inequality with C = 8",
        Box::new(|| {
            let spec = GeneratorSpec {
                n: 2,
                seed: 3,
                kind: GeneratorKind::RandomLipschitz {
                    q: 3,
                    l_max: 5,
                    amplitude: 0.6,
                    separation: 4.0,
                },
            };
            let grid = BranchedGrid::new(1, 1.0, 128, 64).map_err(|e| e.to_string())?;
            let field = oracle::generate(&spec, grid).map_err(|e| e.to_string())?;
            let rings: Vec<usize> = (1..=10).map(|j| j * 12).collect();
            let rep = frequency::check_poincare_lemma(&field, &rings, 0.5, 1e-9)
                .map_err(|e| e.to_string())?;
            if rep.c_plain > 8.0 {
                return Err(format!("C = {}", rep.c_plain));
            }
            Ok(())
        }),
    ));
    checks.push((
        "frequency: monotonicity of I for minimizers",
        Box::new(|| {
            let grid = BranchedGrid::new(1, 1.0, 512, 64).map_err(|e| e.to_string())?;
            let mixed = MultiField::from_fn(grid, 1, 1, |_, _, r, phi| {
                vec![r.powi(2) * (2.0 * phi).cos() + 0.7 * r.powi(3) * (3.0 * phi).sin()]
            })
            .map_err(|e| e.to_string())?;
            let prof = frequency::profile(&mixed, 0.5, 1e-9);
            let rep = frequency::check_frequency_monotonicity(&prof, true, 1e-6, (0.3, 0.9));
            if rep.violations > 0 {
                return Err(format!("{} violation(s): {:?}", rep.violations, rep.first_violation));
            }
            Ok(())
        }),
    ));
}

fn blowup_checks(checks: &mut Vec<Check>) {
    checks.push((
        "blowup: norm identity and homogeneous limit",
        Box::new(|| {
            let spec = branch_pair_spec();
            let grid = BranchedGrid::new(1, 1.0, 256, 64).map_err(|e| e.to_string())?;
            let field = oracle::generate(&spec, grid).map_err(|e| e.to_string())?;
            let prof = frequency::profile(&field, 0.5, 1e-9);
            let fr = blowup::rescale(&field, 0.5, 1.5, 1e-9).map_err(|e| e.to_string())?;
            let lhs = fr.l2_sq();
            let rhs = prof.rows[127].h / 0.5f64.powi(4);
            if (lhs - rhs).abs() > 1e-10 * rhs {
                return Err(format!("norm identity {lhs} vs {rhs}"));
            }
            let radii: Vec<f64> = (0..6).map(|j| 0.5f64.powi(j)).collect();
            let fam = blowup::family(&field, 1.5, &radii, 1e-9).map_err(|e| e.to_string())?;
            let (f0, rep) = blowup::limit_profile(&fam, None).map_err(|e| e.to_string())?;
            if f0.is_none() || !rep.cauchy {
                return Err("homogeneous family not Cauchy".into());
            }
            if rep.sup_distances.iter().any(|d| *d > 1e-12) {
                return Err("profiles differ across radii".into());
            }
            Ok(())
        }),
    ));
    checks.push((
        "blowup: perturbed field has positive fitted rate",
        Box::new(|| {
            let grid = BranchedGrid::new(1, 1.0, 512, 64).map_err(|e| e.to_string())?;
            let field = MultiField::from_fn(grid, 2, 2, |_, _, r, phi| {
                let (s, c) = (1.5 * phi).sin_cos();
                let rr = r.powf(1.5);
                let bump = 0.3 * r.powi(2);
                vec![rr * c + bump, rr * s, -rr * c + bump, -rr * s]
            })
            .map_err(|e| e.to_string())?;
            let radii: Vec<f64> = (0..8).map(|j| 0.5f64.powi(j)).collect();
            let fam = blowup::family(&field, 1.5, &radii, 1e-9).map_err(|e| e.to_string())?;
            let (_, rep) = blowup::limit_profile(&fam, None).map_err(|e| e.to_string())?;
            let rate = rep.fitted_rate.ok_or("no fitted rate")?;
            if !(0.8..=1.2).contains(&rate) {
                return Err(format!("rate {rate}"));
            }
            if !rep.cauchy {
                return Err("sup distances not monotone".into());
            }
            Ok(())
        }),
    ));
    checks.push((
        "blowup: homogeneous extension round trip",
        Box::new(|| {
            let spec = branch_pair_spec();
            let grid = BranchedGrid::new(1, 1.0, 256, 128).map_err(|e| e.to_string())?;
            let field = oracle::generate(&spec, grid).map_err(|e| e.to_string())?;
            let f0 = blowup::rescale(&field, 0.25, 1.5, 1e-9).map_err(|e| e.to_string())?;
            let g = blowup::homogeneous_extension(&f0, 1.5, 256).map_err(|e| e.to_string())?;
            for k in [64usize, 128, 256] {
                let r = g.grid().radius(k);
                let tf = extract_trace(&field, r, 1e-9).map_err(|e| e.to_string())?;
                let tg = extract_trace(&g, r, 1e-9).map_err(|e| e.to_string())?;
                let d = tf.sup_distance(&tg).map_err(|e| e.to_string())?;
                if d > 1e-12 {
                    return Err(format!("r={r}: sup distance {d}"));
                }
            }
            Ok(())
        }),
    ));
}

fn minimize_checks(checks: &mut Vec<Check>) {
    checks.push((
        "minimize: exact certificate matches the competitor",
        Box::new(|| {
            let spec = branch_pair_spec();
            let grid = BranchedGrid::new(1, 1.0, 96, 64).map_err(|e| e.to_string())?;
            let field = oracle::generate(&spec, grid).map_err(|e| e.to_string())?;
            let tr = extract_trace(&field, 1.0, 1e-9).map_err(|e| e.to_string())?;
            let (minimized, cert) =
                oracle::dir_minimize(&tr, grid, DescentOptions::default())
                    .map_err(|e| e.to_string())?;
            if !matches!(cert, oracle::Certificate::Exact { .. }) {
                return Err(format!("unexpected certificate {cert:?}"));
            }
            let dec = decompose_trace(&tr, 16, 1e-9).map_err(|e| e.to_string())?;
            let ext =
                competitor::harmonic_field(&dec, grid).map_err(|e| e.to_string())?;
            if minimized.raw_values() != ext.raw_values() {
                return Err("exact path differs from the competitor".into());
            }
            Ok(())
        }),
    ));
    checks.push((
        "minimize: descent agrees with the exact energy",
        Box::new(|| {
            let spec = branch_pair_spec();
            let grid = BranchedGrid::new(1, 1.0, 48, 64).map_err(|e| e.to_string())?;
            let field = oracle::generate(&spec, grid).map_err(|e| e.to_string())?;
            let tr = extract_trace(&field, 1.0, 1e-9).map_err(|e| e.to_string())?;
            let opts = DescentOptions {
                force_descent: true,
                max_iters: 50_000,
                ..DescentOptions::default()
            };
            let (descended, _) =
                oracle::dir_minimize(&tr, grid, opts).map_err(|e| e.to_string())?;
            let dec = decompose_trace(&tr, 16, 1e-9).map_err(|e| e.to_string())?;
            let ext = competitor::harmonic_field(&dec, grid).map_err(|e| e.to_string())?;
            let e_descent = competitor::quadrature_energies(&descended, 1e-9).dirichlet;
            let e_exact = competitor::quadrature_energies(&ext, 1e-9).dirichlet;
            let rel = (e_descent - e_exact).abs() / e_exact;
            if rel > 1e-3 {
                return Err(format!("descent {e_descent} vs exact {e_exact}"));
            }
            Ok(())
        }),
    ));
}
