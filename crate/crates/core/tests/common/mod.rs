//! Independent oracles shared by the integration tests. Nothing here calls
//! into the library's transport or Riccati code.
#![allow(dead_code)]

/// Dense two-phase simplex with Bland's rule:
/// `min cᵀx` subject to `Ax = b`, `x ≥ 0`, with `b ≥ 0`.
pub fn simplex_min(a: &[Vec<f64>], b: &[f64], c: &[f64]) -> f64 {
    let m = a.len();
    let n = c.len();
    let width = n + m + 1;
    // Rows 0..m: constraints with artificials; row m: objective.
    let mut t = vec![vec![0.0; width]; m + 1];
    for i in 0..m {
        assert!(b[i] >= 0.0);
        t[i][..n].copy_from_slice(&a[i]);
        t[i][n + i] = 1.0;
        t[i][width - 1] = b[i];
    }
    let mut basis: Vec<usize> = (n..n + m).collect();

    let pivot = |t: &mut Vec<Vec<f64>>, r: usize, col: usize| {
        let p = t[r][col];
        for v in t[r].iter_mut() {
            *v /= p;
        }
        let row = t[r].clone();
        for (i, other) in t.iter_mut().enumerate() {
            if i != r && other[col] != 0.0 {
                let f = other[col];
                for (o, rv) in other.iter_mut().zip(&row) {
                    *o -= f * rv;
                }
            }
        }
    };

    let optimize = |t: &mut Vec<Vec<f64>>, basis: &mut Vec<usize>, allowed: usize| loop {
        let Some(col) = (0..allowed).find(|&j| t[m][j] < -1e-12) else {
            return;
        };
        let mut best: Option<(f64, usize)> = None;
        for r in 0..m {
            if t[r][col] > 1e-12 {
                let ratio = t[r][width - 1] / t[r][col];
                let better = match best {
                    None => true,
                    Some((q, br)) => ratio < q - 1e-14 || (ratio <= q + 1e-14 && basis[r] < basis[br]),
                };
                if better {
                    best = Some((ratio, r));
                }
            }
        }
        let (_, r) = best.expect("unbounded LP");
        pivot(t, r, col);
        basis[r] = col;
    };

    // Phase I: minimize the sum of artificials.
    for j in 0..width {
        t[m][j] = 0.0;
    }
    for i in 0..m {
        for j in 0..width {
            if j < n || j == width - 1 {
                t[m][j] -= t[i][j];
            }
        }
    }
    optimize(&mut t, &mut basis, n + m);
    assert!(t[m][width - 1].abs() < 1e-9, "infeasible LP");
    // Drive remaining artificials out of the basis where possible.
    for r in 0..m {
        if basis[r] >= n {
            if let Some(col) = (0..n).find(|&j| t[r][j].abs() > 1e-12) {
                pivot(&mut t, r, col);
                basis[r] = col;
            }
        }
    }
    // Phase II objective, expressed in the current basis.
    for j in 0..width {
        t[m][j] = if j < n { c[j] } else { 0.0 };
    }
    for r in 0..m {
        let col = basis[r];
        if col < n && t[m][col] != 0.0 {
            let f = t[m][col];
            let row = t[r].clone();
            for (o, rv) in t[m].iter_mut().zip(&row) {
                *o -= f * rv;
            }
        }
    }
    // Artificial columns may not re-enter.
    optimize(&mut t, &mut basis, n);
    -t[m][width - 1]
}

/// Squared 2-Wasserstein distance between weighted 1-d point sets as a
/// transportation LP.
pub fn transport_lp_w2_squared(xa: &[f64], wa: &[f64], xb: &[f64], wb: &[f64]) -> f64 {
    let (p, q) = (xa.len(), xb.len());
    let mut a = Vec::new();
    let mut b = Vec::new();
    for i in 0..p {
        let mut row = vec![0.0; p * q];
        for j in 0..q {
            row[i * q + j] = 1.0;
        }
        a.push(row);
        b.push(wa[i]);
    }
    // The last column constraint is implied by the others.
    for j in 0..q - 1 {
        let mut row = vec![0.0; p * q];
        for i in 0..p {
            row[i * q + j] = 1.0;
        }
        a.push(row);
        b.push(wb[j]);
    }
    let c: Vec<f64> = (0..p * q)
        .map(|e| {
            let d = xa[e / q] - xb[e % q];
            d * d
        })
        .collect();
    simplex_min(&a, &b, &c).max(0.0)
}

/// Squared 2-Wasserstein distance between equal-size uniform point sets by
/// enumerating every permutation.
pub fn permutation_w2_squared(xa: &[f64], xb: &[f64]) -> f64 {
    let n = xa.len();
    let mut perm: Vec<usize> = (0..n).collect();
    let mut best = f64::INFINITY;
    // Heap's algorithm.
    let mut c = vec![0usize; n];
    let eval = |perm: &[usize]| perm.iter().enumerate().map(|(i, &j)| (xa[i] - xb[j]).powi(2)).sum::<f64>() / n as f64;
    best = best.min(eval(&perm));
    let mut i = 0;
    while i < n {
        if c[i] < i {
            if i % 2 == 0 {
                perm.swap(0, i);
            } else {
                perm.swap(c[i], i);
            }
            best = best.min(eval(&perm));
            c[i] += 1;
            i = 0;
        } else {
            c[i] = 0;
            i += 1;
        }
    }
    best
}

/// Single-label LQ variance problem under the gain-feedback class
/// `a = −g(x − m)` with `g` constant on each of `pieces` equal time pieces:
/// `v' = −2g v + σ²`, cost `∫ ½(g² + c) v dt`. Returns the minimum over all
/// gain assignments from `gains` and the minimizing assignment.
pub fn coarse_gain_search(c: f64, sigma: f64, v0: f64, horizon: f64, pieces: usize, gains: &[f64]) -> (f64, Vec<f64>) {
    let len = horizon / pieces as f64;
    let s2 = sigma * sigma;
    // Cost and end variance of one piece, in closed form.
    let piece = |g: f64, v: f64| -> (f64, f64) {
        if g.abs() < 1e-12 {
            let cost = 0.5 * c * (v * len + 0.5 * s2 * len * len);
            return (cost, v + s2 * len);
        }
        let eq = s2 / (2.0 * g);
        let decay = (-2.0 * g * len).exp();
        let integral = eq * len + (v - eq) * (1.0 - decay) / (2.0 * g);
        (0.5 * (g * g + c) * integral, eq + (v - eq) * decay)
    };
    let mut best = (f64::INFINITY, Vec::new());
    let mut idx = vec![0usize; pieces];
    loop {
        let mut v = v0;
        let mut total = 0.0;
        for &i in &idx {
            let (cost, next) = piece(gains[i], v);
            total += cost;
            v = next;
        }
        if total < best.0 {
            best = (total, idx.iter().map(|&i| gains[i]).collect());
        }
        let mut p = 0;
        loop {
            if p == pieces {
                return best;
            }
            idx[p] += 1;
            if idx[p] < gains.len() {
                break;
            }
            idx[p] = 0;
            p += 1;
        }
    }
}

/// `Π(0)` of the deterministic mean problem
/// `min ∫ ½ āᵀΛā + ½ mᵀQm`, `m' = ā`, by shooting on the Hamiltonian
/// system `m' = −Λ⁻¹y`, `y' = −Qm`, `y(T) = 0`: with `Φ = exp(MT)`,
/// `Π(0) = −Φ_yy⁻¹ Φ_ym`. Two labels only.
pub fn shooting_mean_matrix(weights: [f64; 2], q: [[f64; 2]; 2], horizon: f64, steps: usize) -> [[f64; 2]; 2] {
    let mut mat = [[0.0; 4]; 4];
    mat[0][2] = -1.0 / weights[0];
    mat[1][3] = -1.0 / weights[1];
    for i in 0..2 {
        for j in 0..2 {
            mat[2 + i][j] = -q[i][j];
        }
    }
    let apply = |z: &[[f64; 4]; 4]| -> [[f64; 4]; 4] {
        let mut out = [[0.0; 4]; 4];
        for i in 0..4 {
            for j in 0..4 {
                out[i][j] = (0..4).map(|l| mat[i][l] * z[l][j]).sum();
            }
        }
        out
    };
    let axpy = |z: &[[f64; 4]; 4], k: &[[f64; 4]; 4], h: f64| -> [[f64; 4]; 4] {
        let mut out = *z;
        for i in 0..4 {
            for j in 0..4 {
                out[i][j] += h * k[i][j];
            }
        }
        out
    };
    let mut phi = [[0.0; 4]; 4];
    for (i, row) in phi.iter_mut().enumerate() {
        row[i] = 1.0;
    }
    let h = horizon / steps as f64;
    for _ in 0..steps {
        let k1 = apply(&phi);
        let k2 = apply(&axpy(&phi, &k1, 0.5 * h));
        let k3 = apply(&axpy(&phi, &k2, 0.5 * h));
        let k4 = apply(&axpy(&phi, &k3, h));
        for i in 0..4 {
            for j in 0..4 {
                phi[i][j] += h / 6.0 * (k1[i][j] + 2.0 * k2[i][j] + 2.0 * k3[i][j] + k4[i][j]);
            }
        }
    }
    let (a, b, c, d) = (phi[2][2], phi[2][3], phi[3][2], phi[3][3]);
    let det = a * d - b * c;
    let inv = [[d / det, -b / det], [-c / det, a / det]];
    let mut pi = [[0.0; 2]; 2];
    for i in 0..2 {
        for j in 0..2 {
            pi[i][j] = -(inv[i][0] * phi[2][j] + inv[i][1] * phi[3][j]);
        }
    }
    pi
}

/// Ordinary least-squares slope of `ln y` against `ln x`.
pub fn fitted_slope(x: &[f64], y: &[f64]) -> f64 {
    let lx: Vec<f64> = x.iter().map(|v| v.ln()).collect();
    let ly: Vec<f64> = y.iter().map(|v| v.ln()).collect();
    let n = lx.len() as f64;
    let (mx, my) = (lx.iter().sum::<f64>() / n, ly.iter().sum::<f64>() / n);
    let sxy: f64 = lx.iter().zip(&ly).map(|(a, b)| (a - mx) * (b - my)).sum();
    let sxx: f64 = lx.iter().map(|a| (a - mx).powi(2)).sum();
    sxy / sxx
}
