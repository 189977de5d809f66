//! Small dense linear-algebra helpers on top of `nalgebra`.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};

pub type Mat = DMatrix<f64>;
pub type Vector = DVector<f64>;

/// Largest eigenvalue modulus of a square matrix.
pub fn spectral_radius(m: &Mat) -> f64 {
    assert!(m.is_square(), "spectral radius of a non-square matrix");
    if m.nrows() == 0 {
        return 0.0;
    }
    if m.nrows() == 1 {
        return m[(0, 0)].abs();
    }
    m.clone()
        .complex_eigenvalues()
        .iter()
        .map(|z| z.norm())
        .fold(0.0, f64::max)
}

pub fn symmetrize(m: &Mat) -> Mat {
    (m + m.transpose()) * 0.5
}

/// Smallest eigenvalue of the symmetric part of `m`.
pub fn min_sym_eigenvalue(m: &Mat) -> f64 {
    symmetrize(m)
        .symmetric_eigenvalues()
        .iter()
        .copied()
        .fold(f64::INFINITY, f64::min)
}

pub fn max_sym_eigenvalue(m: &Mat) -> f64 {
    symmetrize(m)
        .symmetric_eigenvalues()
        .iter()
        .copied()
        .fold(f64::NEG_INFINITY, f64::max)
}

/// Thin SVD `(U, s, V)` with `m = U diag(s) Vᵀ`, singular values descending.
/// Runs on faer: nalgebra's SVD loses several digits on about one matrix in
/// three thousand, which breaks the projector and the constraint retraction.
pub fn svd(m: &Mat) -> (Mat, Vec<f64>, Mat) {
    let f = faer::Mat::<f64>::from_fn(m.nrows(), m.ncols(), |i, j| m[(i, j)]);
    match f.as_ref().thin_svd() {
        Ok(d) => {
            let (u, v) = (d.U(), d.V());
            let s = (0..u.ncols()).map(|i| d.S()[i]).collect();
            (
                Mat::from_fn(u.nrows(), u.ncols(), |i, j| u[(i, j)]),
                s,
                Mat::from_fn(v.nrows(), v.ncols(), |i, j| v[(i, j)]),
            )
        }
        Err(_) => {
            let d = m.clone().svd(true, true);
            let u = d.u.expect("svd u");
            let v = d.v_t.expect("svd v_t").transpose();
            (u, d.singular_values.iter().copied().collect(), v)
        }
    }
}

/// Smallest singular value; for wide matrices this is the `min(rows, cols)`-th one.
pub fn sigma_min(m: &Mat) -> f64 {
    if m.is_empty() {
        return 0.0;
    }
    svd(m).1.into_iter().fold(f64::INFINITY, f64::min)
}

/// Spectral norm.
pub fn norm2(m: &Mat) -> f64 {
    if m.is_empty() {
        return 0.0;
    }
    svd(m).1.into_iter().fold(0.0, f64::max)
}

/// Moore-Penrose pseudo-inverse with relative singular-value cutoff `rcond * sigma_max`.
pub fn pinv(m: &Mat, rcond: f64) -> Mat {
    let mut out = Mat::zeros(m.ncols(), m.nrows());
    if m.is_empty() {
        return out;
    }
    let (u, s, v) = svd(m);
    let cutoff = rcond * s.iter().copied().fold(0.0, f64::max);
    for (i, &si) in s.iter().enumerate() {
        if si > cutoff && si > 0.0 {
            out += v.column(i) * u.column(i).transpose() / si;
        }
    }
    out
}

/// Solves `a x = b` for square `a` by LU.
pub fn solve(a: &Mat, b: &Mat, context: &'static str) -> Result<Mat> {
    a.clone().lu().solve(b).ok_or(Error::Singular(context))
}

pub fn inverse(a: &Mat, context: &'static str) -> Result<Mat> {
    a.clone().try_inverse().ok_or(Error::Singular(context))
}

/// Solves `a x = b` for symmetric positive semidefinite `a`: Cholesky first,
/// eigenvalue-floored pseudo-inverse when the factorization fails.
pub fn spd_solve(a: &Mat, b: &Mat, floor: f64) -> Mat {
    let sym = symmetrize(a);
    if let Some(chol) = sym.clone().cholesky() {
        return chol.solve(b);
    }
    let eig = sym.symmetric_eigen();
    let mut inv = Mat::zeros(a.nrows(), a.ncols());
    for (i, &lam) in eig.eigenvalues.iter().enumerate() {
        if lam > floor {
            let q = eig.eigenvectors.column(i);
            inv += q * q.transpose() / lam;
        }
    }
    inv * b
}

/// Kronecker product `a ⊗ b`.
pub fn kron(a: &Mat, b: &Mat) -> Mat {
    let (ar, ac) = a.shape();
    let (br, bc) = b.shape();
    let mut out = Mat::zeros(ar * br, ac * bc);
    for i in 0..ar {
        for j in 0..ac {
            let aij = a[(i, j)];
            if aij != 0.0 {
                out.view_mut((i * br, j * bc), (br, bc))
                    .copy_from(&(b * aij));
            }
        }
    }
    out
}

/// Stacks `top` over `bottom`.
pub fn vstack(top: &Mat, bottom: &Mat) -> Mat {
    assert_eq!(top.ncols(), bottom.ncols());
    let mut out = Mat::zeros(top.nrows() + bottom.nrows(), top.ncols());
    out.rows_mut(0, top.nrows()).copy_from(top);
    out.rows_mut(top.nrows(), bottom.nrows()).copy_from(bottom);
    out
}

/// Places `left` and `right` side by side.
pub fn hstack(left: &Mat, right: &Mat) -> Mat {
    assert_eq!(left.nrows(), right.nrows());
    let mut out = Mat::zeros(left.nrows(), left.ncols() + right.ncols());
    out.columns_mut(0, left.ncols()).copy_from(left);
    out.columns_mut(left.ncols(), right.ncols())
        .copy_from(right);
    out
}

/// `[[a, b], [c, d]]` block matrix.
pub fn block2(a: &Mat, b: &Mat, c: &Mat, d: &Mat) -> Mat {
    vstack(&hstack(a, b), &hstack(c, d))
}

pub fn is_symmetric(m: &Mat, tol: f64) -> bool {
    m.is_square() && (m - m.transpose()).amax() <= tol * (1.0 + m.amax())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn svd_of_hard_data_blocks() {
        // covariance blocks on which nalgebra's SVD loses two digits, one per orientation
        #[rustfmt::skip]
        let d = [
            7.389263081405478, 17.892207119071685, 20.22355896155293, 12.455490383232394,
            10.868466290000436, 26.443625104745152, 28.68254623055543, 17.672914310403197,
            -2.169743919376992, -6.113597137879968, -7.520633990783264, -4.224891180533036,
            -1.0133691384674537, -2.2261986117234844, -1.9988644829864104, -1.5964213209244642,
            7.817861524512826, 11.644338780718034, 11.608332426496123, 7.85737090418247,
            11.644338780718034, 32.05974721208755, 30.240087826680142, 19.489882878692494,
            11.608332426496123, 30.240087826680142, 33.45139730986204, 20.005206991392363,
            7.85737090418247, 19.489882878692494, 20.005206991392363, 14.011366284077813,
        ];
        #[rustfmt::skip]
        let e = [
            0.8027974038145098, 3.2022425866645268, 3.4886576716507967, 2.120871804806996,
            3.1673155226837464, 8.449317564032118, 9.398447058887754, 4.729784463398514,
            -6.093025753864048, -16.46102023718525, -18.026649868155136, -9.349601265585523,
            -1.6656900177993368, -5.876930126161933, -6.804153193325837, -3.8235114210529533,
            3.4620493123589955, 4.793676197074102, 5.448629265053548, 2.6976496737464837,
            4.793676197074102, 17.828993849422304, 17.341484918045996, 8.72880456806357,
            5.448629265053548, 17.341484918045996, 19.497716495981443, 9.654662329308604,
            2.6976496737464837, 8.72880456806357, 9.654662329308604, 6.43485344491183,
        ];
        for x in [
            Mat::from_column_slice(4, 8, &d),
            Mat::from_column_slice(4, 8, &e),
        ] {
            for m in [x.clone(), x.transpose()] {
                let (u, s, v) = svd(&m);
                let back = &u * Mat::from_diagonal(&Vector::from_vec(s)) * v.transpose();
                assert!((back - &m).norm() < 1e-12 * m.norm());
            }
            let p = pinv(&x, 1e-12);
            assert!((&x * &p - Mat::identity(4, 4)).norm() < 1e-11);
            assert!((pinv(&x.transpose(), 1e-12) - p.transpose()).norm() < 1e-11);
            let g = (&x * x.transpose()).symmetric_eigenvalues();
            let want = g.iter().copied().fold(f64::INFINITY, f64::min).sqrt();
            assert!((sigma_min(&x) - want).abs() < 1e-9 * want);
        }
    }

    #[test]
    fn spectral_radius_basics() {
        assert_eq!(spectral_radius(&Mat::identity(3, 3)), 1.0);
        assert_eq!(spectral_radius(&Mat::zeros(3, 3)), 0.0);
        // rotation by 90 degrees scaled by 0.5
        let r = Mat::from_row_slice(2, 2, &[0.0, -0.5, 0.5, 0.0]);
        assert!((spectral_radius(&r) - 0.5).abs() < 1e-14);
    }

    #[test]
    fn pinv_of_wide_matrix() {
        let x = Mat::from_row_slice(2, 3, &[1.0, 2.0, 0.0, 0.0, 1.0, 1.0]);
        let p = pinv(&x, 1e-12);
        assert!((&x * &p - Mat::identity(2, 2)).amax() < 1e-12);
        assert!((&x * &p * &x - &x).amax() < 1e-12);
    }

    #[test]
    fn spd_solve_falls_back_on_singular() {
        let a = Mat::from_row_slice(2, 2, &[1.0, 0.0, 0.0, 0.0]);
        let b = Mat::from_row_slice(2, 1, &[2.0, 3.0]);
        let x = spd_solve(&a, &b, 1e-12);
        assert_eq!(x[(0, 0)], 2.0);
        assert_eq!(x[(1, 0)], 0.0);
    }

    #[test]
    fn kron_shape_and_entries() {
        let a = Mat::from_row_slice(1, 2, &[1.0, 2.0]);
        let b = Mat::identity(2, 2);
        let k = kron(&a, &b);
        assert_eq!(k.shape(), (2, 4));
        assert_eq!(k[(1, 3)], 2.0);
    }
}
