//! Dense two-phase simplex over the transportation LP. Used only as an
//! oracle for the flow-based EMD solver; it shares no code with it.

const TOL: f64 = 1e-11;

/// min c.x subject to A x = b, x >= 0 with b >= 0. Returns the optimum.
pub fn solve_standard_form(a: &[Vec<f64>], b: &[f64], c: &[f64]) -> f64 {
    let m = a.len();
    let n = c.len();
    // Tableau columns: n structural, m artificial, then rhs.
    let width = n + m + 1;
    let mut t = vec![vec![0.0; width]; m];
    for i in 0..m {
        t[i][..n].copy_from_slice(&a[i]);
        t[i][n + i] = 1.0;
        t[i][width - 1] = b[i];
    }
    let mut basis: Vec<usize> = (n..n + m).collect();

    // Phase one: minimize the artificial sum.
    let mut phase1 = vec![0.0; n + m];
    phase1[n..].fill(1.0);
    run_simplex(&mut t, &mut basis, &phase1, n + m);

    // Drive remaining artificials out of the basis, dropping redundant rows.
    let mut row = 0;
    while row < t.len() {
        if basis[row] >= n {
            if let Some(col) = (0..n).find(|&j| t[row][j].abs() > 1e-9) {
                pivot(&mut t, &mut basis, row, col);
            } else {
                t.remove(row);
                basis.remove(row);
                continue;
            }
        }
        row += 1;
    }
    let mut phase2 = c.to_vec();
    phase2.extend(std::iter::repeat_n(0.0, m));
    run_simplex(&mut t, &mut basis, &phase2, n);
    basis
        .iter()
        .zip(&t)
        .map(|(&j, r)| if j < n { c[j] * r[width - 1] } else { 0.0 })
        .sum()
}

fn run_simplex(t: &mut [Vec<f64>], basis: &mut [usize], cost: &[f64], allowed: usize) {
    let width = t[0].len();
    loop {
        // Bland's rule: smallest index with negative reduced cost.
        let mut entering = None;
        for j in 0..allowed {
            if basis.contains(&j) {
                continue;
            }
            let mut reduced = cost[j];
            for (i, row) in t.iter().enumerate() {
                reduced -= cost[basis[i]] * row[j];
            }
            if reduced < -TOL {
                entering = Some(j);
                break;
            }
        }
        let Some(col) = entering else { return };
        let mut leave = None;
        let mut best = f64::INFINITY;
        for (i, row) in t.iter().enumerate() {
            if row[col] > TOL {
                let ratio = row[width - 1] / row[col];
                if ratio < best - TOL || (ratio < best + TOL && leave.is_none_or(|l: usize| basis[i] < basis[l])) {
                    best = ratio;
                    leave = Some(i);
                }
            }
        }
        let row = leave.expect("transportation LP is bounded");
        pivot(t, basis, row, col);
    }
}

fn pivot(t: &mut [Vec<f64>], basis: &mut [usize], row: usize, col: usize) {
    let p = t[row][col];
    t[row].iter_mut().for_each(|v| *v /= p);
    let pivot_row = t[row].clone();
    for (i, r) in t.iter_mut().enumerate() {
        if i != row {
            let f = r[col];
            if f != 0.0 {
                for (v, pv) in r.iter_mut().zip(&pivot_row) {
                    *v -= f * pv;
                }
            }
        }
    }
    basis[row] = col;
}

/// Earth mover's distance between two row-major grids of width `width`
/// with Euclidean cell-center ground distance, by brute-force LP.
pub fn emd_by_lp(p: &[f64], q: &[f64], width: usize) -> f64 {
    let n = p.len();
    let mut a = Vec::with_capacity(2 * n);
    for i in 0..n {
        let mut row = vec![0.0; n * n];
        for j in 0..n {
            row[i * n + j] = 1.0;
        }
        a.push(row);
    }
    for j in 0..n {
        let mut row = vec![0.0; n * n];
        for i in 0..n {
            row[i * n + j] = 1.0;
        }
        a.push(row);
    }
    let mut b = p.to_vec();
    b.extend_from_slice(q);
    let mut c = vec![0.0; n * n];
    for i in 0..n {
        for j in 0..n {
            let dr = (i / width) as f64 - (j / width) as f64;
            let dc = (i % width) as f64 - (j % width) as f64;
            c[i * n + j] = (dr * dr + dc * dc).sqrt();
        }
    }
    solve_standard_form(&a, &b, &c)
}
