use super::*;
use rand::prelude::*;
use rand_chacha::ChaCha8Rng;

fn lp(sense: Sense) -> LinearProgram {
    LinearProgram::new(sense)
}

#[test]
fn single_var_ge_row() {
    let mut p = lp(Sense::Minimize);
    let x = p.add_var(1.0, 0.0, 10.0);
    p.add_row(RowOp::Ge, 3.0, &[(x, 1.0)]);
    let sol = solve_lp(&p).unwrap().optimal().unwrap();
    assert!((sol.x[x] - 3.0).abs() < 1e-9);
    assert!((sol.objective - 3.0).abs() < 1e-9);
    assert!((sol.duals[0] - 1.0).abs() < 1e-9);
    assert!(certify_optimal(&p, &sol).is_empty());
}

#[test]
fn le_row_dual_under_max() {
    let mut p = lp(Sense::Maximize);
    let x = p.add_var(2.0, 0.0, 10.0);
    p.add_row(RowOp::Le, 5.0, &[(x, 1.0)]);
    let sol = solve_lp(&p).unwrap().optimal().unwrap();
    assert!((sol.objective - 10.0).abs() < 1e-9);
    // One more unit of rhs is worth one more unit of x.
    assert!((sol.duals[0] - 2.0).abs() < 1e-9);
    assert!(certify_optimal(&p, &sol).is_empty());
}

#[test]
fn equality_row_dual() {
    let mut p = lp(Sense::Minimize);
    let x = p.add_var(1.0, 0.0, 10.0);
    let y = p.add_var(3.0, 0.0, 10.0);
    p.add_row(RowOp::Eq, 2.0, &[(x, 1.0), (y, 1.0)]);
    let sol = solve_lp(&p).unwrap().optimal().unwrap();
    assert!((sol.objective - 2.0).abs() < 1e-9);
    assert!((sol.x[x] - 2.0).abs() < 1e-9);
    assert!((sol.duals[0] - 1.0).abs() < 1e-9);
    assert!(certify_optimal(&p, &sol).is_empty());
}

#[test]
fn negative_rhs_le_dual_sign() {
    // -x <= -3 is x >= 3 in disguise; dual of the Le row must be <= 0.
    let mut p = lp(Sense::Minimize);
    let x = p.add_var(1.0, 0.0, 10.0);
    p.add_row(RowOp::Le, -3.0, &[(x, -1.0)]);
    let sol = solve_lp(&p).unwrap().optimal().unwrap();
    assert!((sol.objective - 3.0).abs() < 1e-9);
    assert!((sol.duals[0] + 1.0).abs() < 1e-9);
    assert!(certify_optimal(&p, &sol).is_empty());
}

#[test]
fn detects_infeasible() {
    let mut p = lp(Sense::Minimize);
    let x = p.add_var(1.0, 0.0, 10.0);
    p.add_row(RowOp::Ge, 2.0, &[(x, 1.0)]);
    p.add_row(RowOp::Le, 1.0, &[(x, 1.0)]);
    match solve_lp(&p).unwrap() {
        LpOutcome::Infeasible { certificate } => assert_eq!(certificate.len(), 2),
        other => panic!("expected infeasible, got {other:?}"),
    }
}

#[test]
fn detects_unbounded() {
    let mut p = lp(Sense::Maximize);
    let x = p.add_var(1.0, 0.0, f64::INFINITY);
    p.add_row(RowOp::Ge, 0.0, &[(x, 1.0)]);
    assert!(matches!(solve_lp(&p).unwrap(), LpOutcome::Unbounded));
}

#[test]
fn free_variable_minimum_on_row() {
    let mut p = lp(Sense::Minimize);
    let x = p.add_var(1.0, f64::NEG_INFINITY, f64::INFINITY);
    p.add_row(RowOp::Ge, -5.0, &[(x, 1.0)]);
    let sol = solve_lp(&p).unwrap().optimal().unwrap();
    assert!((sol.x[x] + 5.0).abs() < 1e-9);
    assert!(certify_optimal(&p, &sol).is_empty());
}

#[test]
fn upper_bounded_only_variable() {
    let mut p = lp(Sense::Maximize);
    let x = p.add_var(1.0, f64::NEG_INFINITY, 7.0);
    p.add_row(RowOp::Ge, 0.0, &[(x, 1.0)]);
    let sol = solve_lp(&p).unwrap().optimal().unwrap();
    assert!((sol.x[x] - 7.0).abs() < 1e-9);
    assert!(certify_optimal(&p, &sol).is_empty());
}

#[test]
fn no_rows_bound_flip_only() {
    let mut p = lp(Sense::Minimize);
    let x = p.add_var(-2.0, 0.0, 4.0);
    let y = p.add_var(1.0, -1.0, 3.0);
    let sol = solve_lp(&p).unwrap().optimal().unwrap();
    assert!((sol.x[x] - 4.0).abs() < 1e-12);
    assert!((sol.x[y] + 1.0).abs() < 1e-12);
    assert!((sol.objective + 9.0).abs() < 1e-12);
}

#[test]
fn beale_cycling_example_terminates() {
    let mut p = lp(Sense::Minimize);
    let x1 = p.add_var(-0.75, 0.0, f64::INFINITY);
    let x2 = p.add_var(150.0, 0.0, f64::INFINITY);
    let x3 = p.add_var(-0.02, 0.0, f64::INFINITY);
    let x4 = p.add_var(6.0, 0.0, f64::INFINITY);
    p.add_row(
        RowOp::Le,
        0.0,
        &[(x1, 0.25), (x2, -60.0), (x3, -0.04), (x4, 9.0)],
    );
    p.add_row(
        RowOp::Le,
        0.0,
        &[(x1, 0.5), (x2, -90.0), (x3, -0.02), (x4, 3.0)],
    );
    p.add_row(RowOp::Le, 1.0, &[(x3, 1.0)]);
    let sol = solve_lp(&p).unwrap().optimal().unwrap();
    assert!((sol.objective + 0.05).abs() < 1e-9);
    assert!(certify_optimal(&p, &sol).is_empty());
}

#[test]
fn resolving_is_bit_identical() {
    let p = random_lp(424242);
    let a = solve_lp(&p).unwrap().optimal().unwrap();
    let b = solve_lp(&p).unwrap().optimal().unwrap();
    assert_eq!(a.x, b.x);
    assert_eq!(a.objective, b.objective);
    assert_eq!(a.duals, b.duals);
}

// ---------------------------------------------------------------------
// Randomized cross-checks against brute-force oracles.

/// Solves a dense square system by Gaussian elimination with partial
/// pivoting. Returns None when near-singular.
fn gauss_solve(mut a: Vec<Vec<f64>>, mut b: Vec<f64>) -> Option<Vec<f64>> {
    let n = b.len();
    for col in 0..n {
        let piv = (col..n).max_by(|&i, &j| {
            a[i][col].abs().partial_cmp(&a[j][col].abs()).unwrap()
        })?;
        if a[piv][col].abs() < 1e-10 {
            return None;
        }
        a.swap(col, piv);
        b.swap(col, piv);
        for r in col + 1..n {
            let f = a[r][col] / a[col][col];
            if f != 0.0 {
                for k in col..n {
                    a[r][k] -= f * a[col][k];
                }
                b[r] -= f * b[col];
            }
        }
    }
    let mut x = vec![0.0; n];
    for r in (0..n).rev() {
        let mut v = b[r];
        for k in r + 1..n {
            v -= a[r][k] * x[k];
        }
        x[r] = v / a[r][r];
    }
    Some(x)
}

fn combinations(pool: usize, k: usize) -> Vec<Vec<usize>> {
    let mut out = Vec::new();
    let mut idx: Vec<usize> = (0..k).collect();
    if k > pool {
        return out;
    }
    loop {
        out.push(idx.clone());
        let mut i = k;
        loop {
            if i == 0 {
                return out;
            }
            i -= 1;
            if idx[i] != i + pool - k {
                break;
            }
        }
        idx[i] += 1;
        for j in i + 1..k {
            idx[j] = idx[j - 1] + 1;
        }
    }
}

/// Brute-force LP optimum over all basic points: every choice of n active
/// constraints among rows and bounds. Assumes all variable bounds finite,
/// so a feasible LP has a vertex optimum.
fn oracle_vertex_opt(p: &LinearProgram) -> Option<f64> {
    let n = p.num_vars();
    let rows = p.rows();
    // Constraint pool: each row as equality, then each bound.
    let mut pool: Vec<(Vec<f64>, f64)> = Vec::new();
    for row in rows {
        let mut a = vec![0.0; n];
        for &(j, c) in &row.coefs {
            a[j] += c;
        }
        pool.push((a, row.rhs));
    }
    for j in 0..n {
        let (l, u) = p.bounds(j);
        let mut a = vec![0.0; n];
        a[j] = 1.0;
        pool.push((a.clone(), l));
        pool.push((a, u));
    }
    let mut best: Option<f64> = None;
    for combo in combinations(pool.len(), n) {
        let a: Vec<Vec<f64>> = combo.iter().map(|&i| pool[i].0.clone()).collect();
        let b: Vec<f64> = combo.iter().map(|&i| pool[i].1).collect();
        let Some(x) = gauss_solve(a, b) else { continue };
        let feasible = (0..n).all(|j| {
            let (l, u) = p.bounds(j);
            x[j] >= l - 1e-7 && x[j] <= u + 1e-7
        }) && rows.iter().all(|row| {
            let act: f64 = row.coefs.iter().map(|&(j, c)| c * x[j]).sum();
            let tol = 1e-7 * (1.0 + row.rhs.abs());
            match row.op {
                RowOp::Le => act <= row.rhs + tol,
                RowOp::Ge => act >= row.rhs - tol,
                RowOp::Eq => (act - row.rhs).abs() <= tol,
            }
        });
        if feasible {
            let v = p.objective_value(&x);
            best = Some(match (best, p.sense) {
                (None, _) => v,
                (Some(b), Sense::Minimize) => b.min(v),
                (Some(b), Sense::Maximize) => b.max(v),
            });
        }
    }
    best
}

fn random_lp(seed: u64) -> LinearProgram {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n = rng.gen_range(2..=4);
    let m = rng.gen_range(1..=6);
    let mut p = lp(if rng.gen_bool(0.5) {
        Sense::Minimize
    } else {
        Sense::Maximize
    });
    for _ in 0..n {
        let c = rng.gen_range(-5.0..5.0);
        let u = rng.gen_range(1.0..8.0);
        p.add_var(c, 0.0, u);
    }
    // Anchor rhs values near the activity of a random box point so a decent
    // share of programs is feasible.
    let anchor: Vec<f64> = (0..n).map(|j| rng.gen_range(0.0..p.bounds(j).1)).collect();
    for _ in 0..m {
        let mut coefs = Vec::new();
        for j in 0..n {
            if rng.gen_bool(0.7) {
                coefs.push((j, rng.gen_range(-4.0..4.0)));
            }
        }
        if coefs.is_empty() {
            coefs.push((0, 1.0));
        }
        let act: f64 = coefs.iter().map(|&(j, c)| c * anchor[j]).sum();
        let rhs = act + rng.gen_range(-2.0..2.0);
        let op = match rng.gen_range(0..6) {
            0 => RowOp::Eq,
            1 | 2 => RowOp::Ge,
            _ => RowOp::Le,
        };
        p.add_row(op, rhs, &coefs);
    }
    p
}

#[test]
fn matches_vertex_enumeration_oracle() {
    let mut feasible = 0;
    for seed in 0..400u64 {
        let p = random_lp(seed);
        let got = solve_lp(&p).unwrap();
        let want = oracle_vertex_opt(&p);
        match (got, want) {
            (LpOutcome::Optimal(sol), Some(reference)) => {
                feasible += 1;
                assert!(
                    (sol.objective - reference).abs() <= 1e-6 * (1.0 + reference.abs()),
                    "seed {seed}: solver {} vs oracle {reference}",
                    sol.objective
                );
                let problems = certify_optimal(&p, &sol);
                assert!(problems.is_empty(), "seed {seed}: {problems:?}");
            }
            (LpOutcome::Infeasible { .. }, None) => {}
            (got, want) => panic!("seed {seed}: solver {got:?} vs oracle {want:?}"),
        }
    }
    assert!(feasible >= 100, "only {feasible} feasible programs sampled");
}

fn random_bip(seed: u64) -> BinaryProgram {
    let mut rng = ChaCha8Rng::seed_from_u64(seed.wrapping_mul(0x9e3779b9).wrapping_add(17));
    let n = rng.gen_range(2..=10);
    let m = rng.gen_range(1..=5);
    let mut bp = BinaryProgram::new(if rng.gen_bool(0.5) {
        Sense::Minimize
    } else {
        Sense::Maximize
    });
    for _ in 0..n {
        bp.add_var(rng.gen_range(-6.0..6.0));
    }
    for _ in 0..m {
        let mut coefs = Vec::new();
        for j in 0..n {
            if rng.gen_bool(0.6) {
                coefs.push((j, rng.gen_range(-3.0..3.0) as f64));
            }
        }
        if coefs.is_empty() {
            coefs.push((0, 1.0));
        }
        let bound: f64 = coefs.iter().map(|&(_, c)| c.abs()).sum();
        let rhs = rng.gen_range(-bound..bound.max(0.5));
        let op = match rng.gen_range(0..6) {
            0 => RowOp::Eq,
            1 | 2 => RowOp::Ge,
            _ => RowOp::Le,
        };
        bp.add_row(op, rhs, &coefs);
    }
    bp
}

fn oracle_bip(bp: &BinaryProgram) -> Option<f64> {
    let n = bp.num_vars();
    let mut best: Option<f64> = None;
    for mask in 0u32..(1 << n) {
        let x: Vec<bool> = (0..n).map(|j| mask >> j & 1 == 1).collect();
        if !bp.satisfied(&x) {
            continue;
        }
        let v = bp.objective_value(&x);
        best = Some(match (best, bp.sense) {
            (None, _) => v,
            (Some(b), Sense::Minimize) => b.min(v),
            (Some(b), Sense::Maximize) => b.max(v),
        });
    }
    best
}

#[test]
fn matches_exhaustive_binary_enumeration() {
    let mut feasible = 0;
    for seed in 0..300u64 {
        let bp = random_bip(seed);
        let got = solve_bip(&bp, DEFAULT_NODE_LIMIT).unwrap();
        let want = oracle_bip(&bp);
        match (got, want) {
            (BipOutcome::Optimal(sol), Some(reference)) => {
                feasible += 1;
                assert!(
                    (sol.objective - reference).abs() <= 1e-6 * (1.0 + reference.abs()),
                    "seed {seed}: solver {} vs oracle {reference}",
                    sol.objective
                );
                assert!(bp.satisfied(&sol.x), "seed {seed}: returned point infeasible");
            }
            (BipOutcome::Infeasible, None) => {}
            (got, want) => panic!("seed {seed}: solver {got:?} vs oracle {want:?}"),
        }
    }
    assert!(feasible >= 60, "only {feasible} feasible programs sampled");
}

#[test]
fn bip_resolving_is_bit_identical() {
    for seed in [3u64, 77, 2024] {
        let bp = random_bip(seed);
        let a = solve_bip(&bp, DEFAULT_NODE_LIMIT).unwrap();
        let b = solve_bip(&bp, DEFAULT_NODE_LIMIT).unwrap();
        match (a, b) {
            (BipOutcome::Optimal(a), BipOutcome::Optimal(b)) => {
                assert_eq!(a.x, b.x);
                assert_eq!(a.objective, b.objective);
            }
            (BipOutcome::Infeasible, BipOutcome::Infeasible) => {}
            _ => panic!("seed {seed}: nondeterministic outcome"),
        }
    }
}

#[test]
fn rejects_malformed_programs() {
    let mut p = lp(Sense::Minimize);
    let x = p.add_var(1.0, 0.0, 1.0);
    p.add_row(RowOp::Le, f64::NAN, &[(x, 1.0)]);
    assert!(matches!(solve_lp(&p), Err(SolverError::Invalid(_))));

    let mut q = lp(Sense::Minimize);
    q.add_var(1.0, 2.0, 1.0);
    assert!(matches!(solve_lp(&q), Err(SolverError::Invalid(_))));
}
