//! Small dense helpers shared by the data and optimization layers.

use nalgebra::{DMatrix, DVector, SymmetricEigen};

use crate::error::{Error, Result};

/// Relative singular-value cutoff used for pseudo-inverses.
pub const PINV_RTOL: f64 = 1e-10;

/// Moore-Penrose pseudo-inverse through the SVD.
///
/// Singular values below `rtol * sigma_max` are treated as zero.
/// Returns the pseudo-inverse and the numerical rank.
pub fn pinv(m: &DMatrix<f64>, rtol: f64) -> (DMatrix<f64>, usize) {
    let (r, c) = m.shape();
    if r == 0 || c == 0 {
        return (DMatrix::zeros(c, r), 0);
    }
    // The bidiagonalization is cheaper on the wide orientation.
    let transpose = r > c;
    let work = if transpose { m.transpose() } else { m.clone() };
    let svd = work.svd(true, true);
    let u = svd.u.expect("u requested");
    let vt = svd.v_t.expect("v_t requested");
    let smax = svd.singular_values.iter().cloned().fold(0.0, f64::max);
    let cut = rtol * smax;
    let mut rank = 0;
    // work = U S Vt  =>  work+ = V S+ Ut
    let mut vs = vt.transpose();
    for (k, s) in svd.singular_values.iter().enumerate() {
        if *s > cut && *s > 0.0 {
            rank += 1;
            vs.column_mut(k).scale_mut(1.0 / s);
        } else {
            vs.column_mut(k).fill(0.0);
        }
    }
    let p = vs * u.transpose();
    if transpose {
        (p.transpose(), rank)
    } else {
        (p, rank)
    }
}

/// Singular values of `m` in descending order.
pub fn singular_values(m: &DMatrix<f64>) -> Vec<f64> {
    if m.nrows() == 0 || m.ncols() == 0 {
        return Vec::new();
    }
    let work = if m.nrows() > m.ncols() { m.transpose() } else { m.clone() };
    let mut s: Vec<f64> = work.singular_values().iter().cloned().collect();
    s.sort_by(|a, b| b.partial_cmp(a).unwrap());
    s
}

/// Kronecker product `a (x) b`.
pub fn kron(a: &DMatrix<f64>, b: &DMatrix<f64>) -> DMatrix<f64> {
    let (ar, ac) = a.shape();
    let (br, bc) = b.shape();
    let mut out = DMatrix::zeros(ar * br, ac * bc);
    for i in 0..ar {
        for j in 0..ac {
            let aij = a[(i, j)];
            if aij != 0.0 {
                out.view_mut((i * br, j * bc), (br, bc)).copy_from(&(b * aij));
            }
        }
    }
    out
}

/// Stack matrices with equal column counts vertically.
pub fn vstack(blocks: &[&DMatrix<f64>]) -> DMatrix<f64> {
    let cols = blocks.first().map(|b| b.ncols()).unwrap_or(0);
    let rows: usize = blocks.iter().map(|b| b.nrows()).sum();
    let mut out = DMatrix::zeros(rows, cols);
    let mut r = 0;
    for b in blocks {
        assert_eq!(b.ncols(), cols, "vstack column mismatch");
        out.view_mut((r, 0), (b.nrows(), cols)).copy_from(*b);
        r += b.nrows();
    }
    out
}

/// Stack vectors vertically.
pub fn vcat(parts: &[&DVector<f64>]) -> DVector<f64> {
    let n: usize = parts.iter().map(|p| p.len()).sum();
    let mut out = DVector::zeros(n);
    let mut r = 0;
    for p in parts {
        out.rows_mut(r, p.len()).copy_from(*p);
        r += p.len();
    }
    out
}

/// `(m + m^T) / 2`.
pub fn symmetrize(m: &DMatrix<f64>) -> DMatrix<f64> {
    (m + m.transpose()) * 0.5
}

/// Factor a symmetric PSD matrix as `G^T G`.
///
/// Eigenvalues in `[-1e-6 ||M||, 0)` are clipped to zero; anything more
/// negative is rejected. Rows of `G` belonging to zero eigenvalues are dropped,
/// so `G` has `rank(M)` rows.
pub fn psd_factor(m: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let n = m.nrows();
    if n != m.ncols() {
        return Err(Error::Dimension(format!("psd_factor needs a square matrix, got {}x{}", n, m.ncols())));
    }
    if n == 0 {
        return Ok(DMatrix::zeros(0, 0));
    }
    let sym = symmetrize(m);
    let norm = sym.norm().max(f64::MIN_POSITIVE);
    let eig = SymmetricEigen::new(sym);
    let min_eig = eig.eigenvalues.iter().cloned().fold(f64::INFINITY, f64::min);
    if min_eig < -1e-6 * norm {
        return Err(Error::NotPsd { min_eig, norm });
    }
    let keep: Vec<usize> = (0..n).filter(|&k| eig.eigenvalues[k] > 1e-14 * norm).collect();
    let mut g = DMatrix::zeros(keep.len(), n);
    for (row, &k) in keep.iter().enumerate() {
        let s = eig.eigenvalues[k].sqrt();
        for j in 0..n {
            g[(row, j)] = s * eig.eigenvectors[(j, k)];
        }
    }
    Ok(g)
}

/// Smallest eigenvalue of the symmetric part of `m`.
pub fn min_eigenvalue(m: &DMatrix<f64>) -> f64 {
    if m.nrows() == 0 {
        return 0.0;
    }
    SymmetricEigen::new(symmetrize(m)).eigenvalues.iter().cloned().fold(f64::INFINITY, f64::min)
}

/// Build a block-diagonal matrix.
pub fn block_diag(blocks: &[DMatrix<f64>]) -> DMatrix<f64> {
    let rows: usize = blocks.iter().map(|b| b.nrows()).sum();
    let cols: usize = blocks.iter().map(|b| b.ncols()).sum();
    let mut out = DMatrix::zeros(rows, cols);
    let (mut r, mut c) = (0, 0);
    for b in blocks {
        out.view_mut((r, c), b.shape()).copy_from(b);
        r += b.nrows();
        c += b.ncols();
    }
    out
}
