//! Sparse symmetric linear algebra.
//!
//! [`SparseMatrix`] is a plain CSR matrix. SPD systems are solved with
//! Jacobi-preconditioned conjugate gradients ([`cg_solve`]); the dense
//! [`LdltFactor`] (Bunch-Kaufman pivoting) handles small symmetric
//! indefinite systems and serves as an oracle for the iterative path.

use crate::error::{Error, Result};

/// Default relative residual tolerance for CG.
pub const DEFAULT_TOL: f64 = 1e-12;
/// Default iteration cap is `DEFAULT_MAXIT_FACTOR * n`.
pub const DEFAULT_MAXIT_FACTOR: usize = 20;

#[derive(Debug, Clone, PartialEq)]
pub struct SparseMatrix {
    n_rows: usize,
    n_cols: usize,
    row_ptr: Vec<usize>,
    col_idx: Vec<usize>,
    values: Vec<f64>,
}

/// Accumulates `(row, col, value)` entries; duplicates are summed.
#[derive(Debug, Clone)]
pub struct TripletBuilder {
    n_rows: usize,
    n_cols: usize,
    entries: Vec<(usize, usize, f64)>,
}

impl TripletBuilder {
    pub fn new(n_rows: usize, n_cols: usize) -> Self {
        TripletBuilder { n_rows, n_cols, entries: Vec::new() }
    }

    pub fn with_capacity(n_rows: usize, n_cols: usize, cap: usize) -> Self {
        TripletBuilder { n_rows, n_cols, entries: Vec::with_capacity(cap) }
    }

    pub fn add(&mut self, row: usize, col: usize, value: f64) {
        debug_assert!(row < self.n_rows && col < self.n_cols);
        self.entries.push((row, col, value));
    }

    pub fn build(mut self) -> SparseMatrix {
        // stable sort keeps the summation order of duplicates fixed
        self.entries.sort_by_key(|&(r, c, _)| (r, c));
        let mut row_ptr = vec![0usize; self.n_rows + 1];
        let mut col_idx = Vec::with_capacity(self.entries.len());
        let mut values: Vec<f64> = Vec::with_capacity(self.entries.len());
        let mut last: Option<(usize, usize)> = None;
        for &(r, c, v) in &self.entries {
            if last == Some((r, c)) {
                *values.last_mut().unwrap() += v;
            } else {
                col_idx.push(c);
                values.push(v);
                row_ptr[r + 1] += 1;
                last = Some((r, c));
            }
        }
        for i in 0..self.n_rows {
            row_ptr[i + 1] += row_ptr[i];
        }
        SparseMatrix { n_rows: self.n_rows, n_cols: self.n_cols, row_ptr, col_idx, values }
    }
}

impl SparseMatrix {
    pub fn identity(n: usize) -> Self {
        SparseMatrix {
            n_rows: n,
            n_cols: n,
            row_ptr: (0..=n).collect(),
            col_idx: (0..n).collect(),
            values: vec![1.0; n],
        }
    }

    pub fn from_diagonal(d: &[f64]) -> Self {
        let mut m = Self::identity(d.len());
        m.values.copy_from_slice(d);
        m
    }

    pub fn from_dense(rows: &[Vec<f64>]) -> Self {
        let n_cols = rows.first().map_or(0, Vec::len);
        let mut b = TripletBuilder::new(rows.len(), n_cols);
        for (i, row) in rows.iter().enumerate() {
            for (j, &v) in row.iter().enumerate() {
                if v != 0.0 {
                    b.add(i, j, v);
                }
            }
        }
        b.build()
    }

    pub fn n_rows(&self) -> usize {
        self.n_rows
    }

    pub fn n_cols(&self) -> usize {
        self.n_cols
    }

    pub fn nnz(&self) -> usize {
        self.values.len()
    }

    /// Iterates `(col, value)` over the stored entries of `row`.
    pub fn row(&self, row: usize) -> impl Iterator<Item = (usize, f64)> + '_ {
        let range = self.row_ptr[row]..self.row_ptr[row + 1];
        self.col_idx[range.clone()].iter().copied().zip(self.values[range].iter().copied())
    }

    pub fn get(&self, row: usize, col: usize) -> f64 {
        let range = self.row_ptr[row]..self.row_ptr[row + 1];
        match self.col_idx[range.clone()].binary_search(&col) {
            Ok(k) => self.values[range.start + k],
            Err(_) => 0.0,
        }
    }

    pub fn diagonal(&self) -> Vec<f64> {
        (0..self.n_rows.min(self.n_cols)).map(|i| self.get(i, i)).collect()
    }

    /// y = A x
    pub fn matvec(&self, x: &[f64]) -> Vec<f64> {
        let mut y = vec![0.0; self.n_rows];
        self.matvec_into(x, &mut y);
        y
    }

    pub fn matvec_into(&self, x: &[f64], y: &mut [f64]) {
        assert_eq!(x.len(), self.n_cols);
        assert_eq!(y.len(), self.n_rows);
        for (i, yi) in y.iter_mut().enumerate() {
            let mut s = 0.0;
            for k in self.row_ptr[i]..self.row_ptr[i + 1] {
                s += self.values[k] * x[self.col_idx[k]];
            }
            *yi = s;
        }
    }

    /// xᵀ A y
    pub fn bilinear(&self, x: &[f64], y: &[f64]) -> f64 {
        dot(x, &self.matvec(y))
    }

    /// xᵀ A x
    pub fn quadratic(&self, x: &[f64]) -> f64 {
        self.bilinear(x, x)
    }

    pub fn transpose(&self) -> SparseMatrix {
        let mut b = TripletBuilder::with_capacity(self.n_cols, self.n_rows, self.nnz());
        for i in 0..self.n_rows {
            for (j, v) in self.row(i) {
                b.add(j, i, v);
            }
        }
        b.build()
    }

    /// Σ cₖ Aₖ over matrices of identical shape.
    pub fn linear_combination(terms: &[(f64, &SparseMatrix)]) -> SparseMatrix {
        let (n_rows, n_cols) = terms.first().map_or((0, 0), |(_, m)| (m.n_rows, m.n_cols));
        let cap = terms.iter().map(|(_, m)| m.nnz()).sum();
        let mut b = TripletBuilder::with_capacity(n_rows, n_cols, cap);
        for &(c, m) in terms {
            assert_eq!((m.n_rows, m.n_cols), (n_rows, n_cols));
            for i in 0..m.n_rows {
                for (j, v) in m.row(i) {
                    b.add(i, j, c * v);
                }
            }
        }
        b.build()
    }

    /// Replaces the rows and columns of `dofs` by those of the identity.
    pub fn eliminate(&self, dofs: &[bool]) -> SparseMatrix {
        assert_eq!(dofs.len(), self.n_rows);
        let mut b = TripletBuilder::with_capacity(self.n_rows, self.n_cols, self.nnz());
        for i in 0..self.n_rows {
            if dofs[i] {
                b.add(i, i, 1.0);
                continue;
            }
            for (j, v) in self.row(i) {
                if !dofs[j] {
                    b.add(i, j, v);
                }
            }
        }
        b.build()
    }

    /// Largest |A - Aᵀ| entry relative to the largest |A| entry.
    pub fn asymmetry(&self) -> f64 {
        let scale = self.values.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        if scale == 0.0 {
            return 0.0;
        }
        let mut worst = 0.0f64;
        for i in 0..self.n_rows {
            for (j, v) in self.row(i) {
                worst = worst.max((v - self.get(j, i)).abs());
            }
        }
        worst / scale
    }

    pub fn to_dense(&self) -> DenseMatrix {
        let mut d = DenseMatrix::zeros(self.n_rows, self.n_cols);
        for i in 0..self.n_rows {
            for (j, v) in self.row(i) {
                d[(i, j)] += v;
            }
        }
        d
    }
}

pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    assert_eq!(a.len(), b.len());
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub fn norm2(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

/// Relative residual ‖Ax − b‖₂ / ‖b‖₂ (absolute when b = 0).
pub fn relative_residual(a: &SparseMatrix, x: &[f64], b: &[f64]) -> f64 {
    let ax = a.matvec(x);
    let r: f64 = ax.iter().zip(b).map(|(p, q)| (p - q) * (p - q)).sum::<f64>().sqrt();
    let nb = norm2(b);
    if nb > 0.0 {
        r / nb
    } else {
        r
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SolveReport {
    pub iterations: usize,
    pub relative_residual: f64,
}

/// Jacobi-preconditioned CG from a zero initial guess.
pub fn cg_solve(a: &SparseMatrix, b: &[f64], tol: f64, maxit: usize) -> Result<(Vec<f64>, SolveReport)> {
    let mut x = vec![0.0; b.len()];
    let report = cg_solve_from(a, b, &mut x, tol, maxit)?;
    Ok((x, report))
}

/// Jacobi-preconditioned CG starting from the contents of `x`.
///
/// Stops when ‖Ax − b‖₂ ≤ tol·‖b‖₂ (recursive residual, confirmed against the
/// true residual before returning).
pub fn cg_solve_from(a: &SparseMatrix, b: &[f64], x: &mut [f64], tol: f64, maxit: usize) -> Result<SolveReport> {
    let n = b.len();
    if a.n_rows != n || a.n_cols != n || x.len() != n {
        return Err(Error::DimensionMismatch(format!(
            "cg: matrix {}x{}, rhs {}, guess {}",
            a.n_rows,
            a.n_cols,
            n,
            x.len()
        )));
    }
    let nb = norm2(b);
    if nb == 0.0 {
        x.iter_mut().for_each(|v| *v = 0.0);
        return Ok(SolveReport { iterations: 0, relative_residual: 0.0 });
    }
    let inv_diag: Vec<f64> = a
        .diagonal()
        .iter()
        .map(|&d| if d > 0.0 { 1.0 / d } else { 1.0 })
        .collect();

    let mut r = a.matvec(x);
    for (ri, bi) in r.iter_mut().zip(b) {
        *ri = bi - *ri;
    }
    let target = tol * nb;
    let mut z: Vec<f64> = r.iter().zip(&inv_diag).map(|(r, d)| r * d).collect();
    let mut p = z.clone();
    let mut ap = vec![0.0; n];
    let mut rz = dot(&r, &z);
    let mut rnorm = norm2(&r);
    let mut it = 0;

    // restart from the true residual if the recursion drifts below target
    let mut confirmations = 0;
    loop {
        if rnorm <= target {
            let true_res = relative_residual(a, x, b);
            if true_res <= tol || confirmations >= 3 {
                return if true_res <= tol {
                    Ok(SolveReport { iterations: it, relative_residual: true_res })
                } else {
                    Err(Error::NotConverged { iterations: it, residual: true_res })
                };
            }
            confirmations += 1;
            let ax = a.matvec(x);
            for i in 0..n {
                r[i] = b[i] - ax[i];
                z[i] = r[i] * inv_diag[i];
            }
            p.copy_from_slice(&z);
            rz = dot(&r, &z);
            rnorm = norm2(&r);
            continue;
        }
        if it >= maxit {
            return Err(Error::NotConverged { iterations: it, residual: rnorm / nb });
        }
        a.matvec_into(&p, &mut ap);
        let pap = dot(&p, &ap);
        if pap <= 0.0 {
            return Err(Error::NotConverged { iterations: it, residual: rnorm / nb });
        }
        let step = rz / pap;
        for i in 0..n {
            x[i] += step * p[i];
            r[i] -= step * ap[i];
            z[i] = r[i] * inv_diag[i];
        }
        let rz_new = dot(&r, &z);
        let beta = rz_new / rz;
        rz = rz_new;
        for i in 0..n {
            p[i] = z[i] + beta * p[i];
        }
        rnorm = norm2(&r);
        it += 1;
    }
}

/// Row-major dense matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct DenseMatrix {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl DenseMatrix {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        DenseMatrix { rows, cols, data: vec![0.0; rows * cols] }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Self::zeros(n, n);
        for i in 0..n {
            m[(i, i)] = 1.0;
        }
        m
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Self {
        let cols = rows.first().map_or(0, Vec::len);
        let mut m = Self::zeros(rows.len(), cols);
        for (i, r) in rows.iter().enumerate() {
            assert_eq!(r.len(), cols);
            m.data[i * cols..(i + 1) * cols].copy_from_slice(r);
        }
        m
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn matvec(&self, x: &[f64]) -> Vec<f64> {
        assert_eq!(x.len(), self.cols);
        (0..self.rows)
            .map(|i| dot(&self.data[i * self.cols..(i + 1) * self.cols], x))
            .collect()
    }

    fn swap_symmetric(&mut self, a: usize, b: usize) {
        if a == b {
            return;
        }
        let n = self.cols;
        for j in 0..n {
            self.data.swap(a * n + j, b * n + j);
        }
        for i in 0..self.rows {
            self.data.swap(i * n + a, i * n + b);
        }
    }
}

impl std::ops::Index<(usize, usize)> for DenseMatrix {
    type Output = f64;
    fn index(&self, (i, j): (usize, usize)) -> &f64 {
        &self.data[i * self.cols + j]
    }
}

impl std::ops::IndexMut<(usize, usize)> for DenseMatrix {
    fn index_mut(&mut self, (i, j): (usize, usize)) -> &mut f64 {
        &mut self.data[i * self.cols + j]
    }
}

#[derive(Debug, Clone, Copy)]
enum Pivot {
    One,
    Two,
}

/// Symmetric indefinite factorization P A Pᵀ = L D Lᵀ with Bunch-Kaufman
/// pivoting; D has 1x1 and 2x2 diagonal blocks.
#[derive(Debug, Clone)]
pub struct LdltFactor {
    n: usize,
    /// Unit lower triangle holds L, diagonal blocks hold D.
    work: DenseMatrix,
    /// Symmetric interchange applied at each elimination step.
    swaps: Vec<(usize, usize)>,
    pivots: Vec<(usize, Pivot)>,
}

impl LdltFactor {
    pub fn factor(a: &DenseMatrix) -> Result<Self> {
        let n = a.rows();
        if a.cols() != n {
            return Err(Error::DimensionMismatch(format!("ldlt: {}x{} is not square", n, a.cols())));
        }
        let growth = (1.0 + 17f64.sqrt()) / 8.0;
        let scale = a.data.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        let tiny = scale * n as f64 * f64::EPSILON * 1e-3;
        let mut w = a.clone();
        let mut swaps = Vec::new();
        let mut pivots = Vec::new();
        let mut k = 0;
        while k < n {
            let akk = w[(k, k)].abs();
            let (imax, colmax) = ((k + 1)..n)
                .map(|i| (i, w[(i, k)].abs()))
                .fold((k, 0.0), |best, c| if c.1 > best.1 { c } else { best });
            if akk.max(colmax) <= tiny {
                return Err(Error::Singular(format!("zero pivot column {k}")));
            }
            let (kp, kind) = if akk >= growth * colmax {
                (k, Pivot::One)
            } else {
                let rowmax = (k..n)
                    .filter(|&j| j != imax)
                    .map(|j| w[(imax, j)].abs())
                    .fold(0.0, f64::max);
                if akk * rowmax >= growth * colmax * colmax {
                    (k, Pivot::One)
                } else if w[(imax, imax)].abs() >= growth * rowmax {
                    (imax, Pivot::One)
                } else {
                    (imax, Pivot::Two)
                }
            };
            let kk = match kind {
                Pivot::One => k,
                Pivot::Two => k + 1,
            };
            swaps.push((kk, kp));
            w.swap_symmetric(kk, kp);
            match kind {
                Pivot::One => {
                    let d = w[(k, k)];
                    for i in (k + 1)..n {
                        let lik = w[(i, k)] / d;
                        if lik != 0.0 {
                            for j in (k + 1)..=i {
                                let v = w[(i, j)] - lik * w[(j, k)];
                                w[(i, j)] = v;
                                w[(j, i)] = v;
                            }
                        }
                    }
                    for i in (k + 1)..n {
                        w[(i, k)] /= d;
                        w[(k, i)] = 0.0;
                    }
                    pivots.push((k, Pivot::One));
                    k += 1;
                }
                Pivot::Two => {
                    let (d11, d21, d22) = (w[(k, k)], w[(k + 1, k)], w[(k + 1, k + 1)]);
                    let det = d11 * d22 - d21 * d21;
                    if det.abs() <= tiny * tiny {
                        return Err(Error::Singular(format!("singular 2x2 pivot at {k}")));
                    }
                    let (e11, e21, e22) = (d22 / det, -d21 / det, d11 / det);
                    let ls: Vec<(f64, f64)> = ((k + 2)..n)
                        .map(|i| {
                            let (a1, a2) = (w[(i, k)], w[(i, k + 1)]);
                            (a1 * e11 + a2 * e21, a1 * e21 + a2 * e22)
                        })
                        .collect();
                    for (oi, i) in ((k + 2)..n).enumerate() {
                        let (l1, l2) = ls[oi];
                        for j in (k + 2)..=i {
                            let v = w[(i, j)] - l1 * w[(j, k)] - l2 * w[(j, k + 1)];
                            w[(i, j)] = v;
                            w[(j, i)] = v;
                        }
                    }
                    for (oi, i) in ((k + 2)..n).enumerate() {
                        w[(i, k)] = ls[oi].0;
                        w[(i, k + 1)] = ls[oi].1;
                        w[(k, i)] = 0.0;
                        w[(k + 1, i)] = 0.0;
                    }
                    w[(k, k + 1)] = d21;
                    pivots.push((k, Pivot::Two));
                    k += 2;
                }
            }
        }
        Ok(LdltFactor { n, work: w, swaps, pivots })
    }

    pub fn solve(&self, b: &[f64]) -> Vec<f64> {
        assert_eq!(b.len(), self.n);
        let n = self.n;
        let w = &self.work;
        let mut x = b.to_vec();
        // The interchange at step k also permutes the rows of L computed in
        // earlier columns, so applying all swaps first yields P b.
        for &(a, c) in &self.swaps {
            x.swap(a, c);
        }
        // forward: L y = P b
        for &(k, kind) in &self.pivots {
            let width = match kind {
                Pivot::One => 1,
                Pivot::Two => 2,
            };
            for c in k..k + width {
                let xc = x[c];
                if xc != 0.0 {
                    for i in (k + width)..n {
                        x[i] -= w[(i, c)] * xc;
                    }
                }
            }
        }
        // block diagonal
        for &(k, kind) in &self.pivots {
            match kind {
                Pivot::One => x[k] /= w[(k, k)],
                Pivot::Two => {
                    let (d11, d21, d22) = (w[(k, k)], w[(k + 1, k)], w[(k + 1, k + 1)]);
                    let det = d11 * d22 - d21 * d21;
                    let (b1, b2) = (x[k], x[k + 1]);
                    x[k] = (d22 * b1 - d21 * b2) / det;
                    x[k + 1] = (d11 * b2 - d21 * b1) / det;
                }
            }
        }
        // backward: Lᵀ z = y
        for &(k, kind) in self.pivots.iter().rev() {
            let width = match kind {
                Pivot::One => 1,
                Pivot::Two => 2,
            };
            for c in k..k + width {
                let mut s = x[c];
                for i in (k + width)..n {
                    s -= w[(i, c)] * x[i];
                }
                x[c] = s;
            }
        }
        for &(a, c) in self.swaps.iter().rev() {
            x.swap(a, c);
        }
        x
    }
}

/// Solves a dense symmetric (possibly indefinite) system by LDLᵀ.
pub fn dense_solve(a: &DenseMatrix, b: &[f64]) -> Result<Vec<f64>> {
    if b.len() != a.rows() {
        return Err(Error::DimensionMismatch(format!("rhs {} vs matrix {}", b.len(), a.rows())));
    }
    Ok(LdltFactor::factor(a)?.solve(b))
}
