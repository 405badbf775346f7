//! Winograd minimal-filtering convolution F(m, r): transform-matrix
//! generation from interpolation nodes, and the tile-level 2D convolution
//! built on those matrices.
//!
//! This is reference code for correctness and accuracy experiments; the
//! planner takes transform operation counts from [`crate::tables`], never
//! from here.

use num_traits::Float;

use crate::error::{Error, Result};
use crate::mat::{hadamard, matmul, Mat};

/// Default interpolation nodes, truncated to t-1 for each transform size.
///
/// Integer nodes make the transform error grow steeply with t (roughly two
/// orders of magnitude from t=6 to t=8 in single precision), which is the
/// regime that motivates capping Winograd tiles at 6x6. Better-conditioned
/// node sets (e.g. replacing ±3 with ±1/2) exist and can be passed to
/// [`winograd_matrices_with_points`].
pub const DEFAULT_POINTS: [f64; 7] = [0.0, 1.0, -1.0, 2.0, -2.0, 3.0, -3.0];

/// The three transform matrices of F(m, r), plus the nodes they came from.
///
/// For a t-vector tile f and r-vector kernel g (t = m + r - 1), the m
/// valid cross-correlation outputs are `a_t * ((g_mat*g) .* (b_t*f))`; the 2D
/// form sandwiches both transforms, see [`winograd_conv_2d`].
#[derive(Debug, Clone)]
pub struct WinogradMatrices {
    pub m: usize,
    pub r: usize,
    pub t: usize,
    /// Output transform, m x t.
    pub a_t: Mat<f64>,
    /// Input transform, t x t.
    pub b_t: Mat<f64>,
    /// Kernel transform, t x r.
    pub g: Mat<f64>,
    /// The t-1 interpolation nodes used.
    pub points: Vec<f64>,
}

/// Coefficient-form product of two polynomials (ascending powers).
fn poly_mul(a: &[f64], b: &[f64]) -> Vec<f64> {
    let mut out = vec![0.0; a.len() + b.len() - 1];
    for (i, &x) in a.iter().enumerate() {
        for (j, &y) in b.iter().enumerate() {
            out[i + j] += x * y;
        }
    }
    out
}

/// Builds F(m, r) matrices over the default nodes.
pub fn winograd_matrices(m: usize, r: usize) -> Result<WinogradMatrices> {
    winograd_matrices_with_points(m, r, &DEFAULT_POINTS)
}

/// Builds F(m, r) matrices over caller-chosen interpolation nodes.
///
/// The nodes are Vandermonde-style sample points in homogeneous coordinates:
/// t-1 finite nodes plus the point at infinity. `points` must supply at
/// least t-1 distinct finite values; extras are ignored.
pub fn winograd_matrices_with_points(
    m: usize,
    r: usize,
    points: &[f64],
) -> Result<WinogradMatrices> {
    if m < 2 || r < 2 {
        return Err(Error::InvalidArgument(format!(
            "F(m={m}, r={r}): both tile and kernel edges must be >= 2"
        )));
    }
    let t = m + r - 1;
    if t > 8 {
        return Err(Error::InvalidArgument(format!(
            "F(m={m}, r={r}) needs t={t} > 8; transforms that large are numerically \
             unusable and out of scope"
        )));
    }
    if points.len() < t - 1 {
        return Err(Error::InvalidArgument(format!(
            "need {} interpolation nodes for t={t}, got {}",
            t - 1,
            points.len()
        )));
    }
    let pts = &points[..t - 1];
    for (i, a) in pts.iter().enumerate() {
        if pts[..i].contains(a) {
            return Err(Error::InvalidArgument(format!(
                "interpolation nodes must be distinct, {a} repeats"
            )));
        }
    }

    // d_i = prod_{k != i} (p_i - p_k); N_i(x) = prod_{k != i} (x - p_k).
    // Scaling is split so that B_t keeps the integer N_i coefficients
    // (signed by d_i) while G absorbs 1/|d_i|.
    let mut b_t = Mat::zeros(t, t);
    let mut g = Mat::zeros(t, r);
    let mut a_t = Mat::zeros(m, t);
    for (i, &p) in pts.iter().enumerate() {
        let mut d = 1.0;
        let mut n_i = vec![1.0];
        for (k, &q) in pts.iter().enumerate() {
            if k != i {
                d *= p - q;
                n_i = poly_mul(&n_i, &[-q, 1.0]);
            }
        }
        for (j, &coeff) in n_i.iter().enumerate() {
            b_t.set(i, j, d.signum() * coeff);
        }
        for j in 0..r {
            g.set(i, j, p.powi(j as i32) / d.abs());
        }
        for j in 0..m {
            a_t.set(j, i, p.powi(j as i32));
        }
    }

    // The row/column for the node at infinity. M(x) = prod (x - p_k); sigma
    // normalizes so B_t's infinity row has a positive lowest-order
    // coefficient, with the compensating sign carried by A_t's last column.
    let mut m_poly = vec![1.0];
    for &q in pts {
        m_poly = poly_mul(&m_poly, &[-q, 1.0]);
    }
    let sigma = m_poly
        .iter()
        .find(|&&coeff| coeff != 0.0)
        .map_or(1.0, |&coeff| coeff.signum());
    for (j, &coeff) in m_poly.iter().enumerate() {
        b_t.set(t - 1, j, sigma * coeff);
    }
    g.set(t - 1, r - 1, 1.0);
    a_t.set(m - 1, t - 1, sigma);

    Ok(WinogradMatrices {
        m,
        r,
        t,
        a_t,
        b_t,
        g,
        points: pts.to_vec(),
    })
}

impl WinogradMatrices {
    pub fn a_t_as<T: Float>(&self) -> Mat<T>
    where
        T: Default,
    {
        self.a_t.map(|v| T::from(v).unwrap())
    }

    pub fn b_t_as<T: Float>(&self) -> Mat<T>
    where
        T: Default,
    {
        self.b_t.map(|v| T::from(v).unwrap())
    }

    pub fn g_as<T: Float>(&self) -> Mat<T>
    where
        T: Default,
    {
        self.g.map(|v| T::from(v).unwrap())
    }
}

/// 2D Winograd valid cross-correlation of a t x t tile with an r x r kernel,
/// producing the m x m output block:
/// `A_t [(G k G^T) .* (B_t f B_t^T)] A_t^T`, all arithmetic in `T`.
pub fn winograd_conv_2d<T: Float + Default>(
    tile: &Mat<T>,
    kernel: &Mat<T>,
    m: usize,
) -> Result<Mat<T>> {
    let r = kernel.rows();
    if kernel.cols() != r {
        return Err(Error::ShapeMismatch(format!(
            "kernel must be square, got {r}x{}",
            kernel.cols()
        )));
    }
    if m < 1 {
        return Err(Error::InvalidArgument("m must be >= 1".into()));
    }
    let t = m + r - 1;
    if tile.rows() != t || tile.cols() != t {
        return Err(Error::ShapeMismatch(format!(
            "tile must be {t}x{t} for m={m}, r={r}; got {}x{}",
            tile.rows(),
            tile.cols()
        )));
    }
    let mats = winograd_matrices(m, r)?;
    Ok(winograd_conv_2d_with(&mats, tile, kernel))
}

/// Same as [`winograd_conv_2d`] but reusing already-built matrices.
pub fn winograd_conv_2d_with<T: Float + Default>(
    mats: &WinogradMatrices,
    tile: &Mat<T>,
    kernel: &Mat<T>,
) -> Mat<T> {
    let a_t = mats.a_t_as::<T>();
    let b_t = mats.b_t_as::<T>();
    let g = mats.g_as::<T>();
    let u = matmul(&matmul(&g, kernel), &g.transpose());
    let v = matmul(&matmul(&b_t, tile), &b_t.transpose());
    matmul(&matmul(&a_t, &hadamard(&u, &v)), &a_t.transpose())
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn direct_corr_2d(tile: &Mat<f64>, kernel: &Mat<f64>) -> Mat<f64> {
        let r = kernel.rows();
        let m = tile.rows() - r + 1;
        let mut out = Mat::zeros(m, m);
        for i in 0..m {
            for j in 0..m {
                let mut acc = 0.0;
                for a in 0..r {
                    for b in 0..r {
                        acc += tile.get(i + a, j + b) * kernel.get(a, b);
                    }
                }
                out.set(i, j, acc);
            }
        }
        out
    }

    fn random_mat(rng: &mut ChaCha8Rng, rows: usize, cols: usize) -> Mat<f64> {
        Mat::from_vec(
            rows,
            cols,
            (0..rows * cols).map(|_| rng.gen_range(-1.0..1.0)).collect(),
        )
    }

    fn l2_rel(a: &Mat<f64>, b: &Mat<f64>) -> f64 {
        let num: f64 = a
            .data()
            .iter()
            .zip(b.data())
            .map(|(x, y)| (x - y) * (x - y))
            .sum();
        let den: f64 = b.data().iter().map(|y| y * y).sum();
        (num / den).sqrt()
    }

    #[test]
    fn f23_matrices_exact() {
        let w = winograd_matrices_with_points(2, 3, &[0.0, 1.0, -1.0]).unwrap();
        let b_t = Mat::from_rows(&[
            &[1.0, 0.0, -1.0, 0.0],
            &[0.0, 1.0, 1.0, 0.0],
            &[0.0, -1.0, 1.0, 0.0],
            &[0.0, 1.0, 0.0, -1.0],
        ]);
        let g = Mat::from_rows(&[
            &[1.0, 0.0, 0.0],
            &[0.5, 0.5, 0.5],
            &[0.5, -0.5, 0.5],
            &[0.0, 0.0, 1.0],
        ]);
        let a_t = Mat::from_rows(&[&[1.0, 1.0, 1.0, 0.0], &[0.0, 1.0, -1.0, -1.0]]);
        assert_eq!(w.b_t, b_t);
        assert_eq!(w.g, g);
        assert_eq!(w.a_t, a_t);
        // The default node sequence starts with the same three nodes.
        assert_eq!(winograd_matrices(2, 3).unwrap().b_t, b_t);
    }

    #[test]
    fn shapes_for_all_supported_sizes() {
        for m in 2..=7usize {
            for r in 2..=7usize {
                if m + r - 1 > 8 {
                    assert!(winograd_matrices(m, r).is_err());
                    continue;
                }
                let w = winograd_matrices(m, r).unwrap();
                let t = m + r - 1;
                assert_eq!((w.a_t.rows(), w.a_t.cols()), (m, t));
                assert_eq!((w.b_t.rows(), w.b_t.cols()), (t, t));
                assert_eq!((w.g.rows(), w.g.cols()), (t, r));
                assert_eq!(w.points.len(), t - 1);
            }
        }
    }

    #[test]
    fn rejects_degenerate_requests() {
        assert!(winograd_matrices(1, 3).is_err());
        assert!(winograd_matrices(2, 1).is_err());
        assert!(winograd_matrices_with_points(2, 3, &[0.0, 1.0]).is_err());
        assert!(winograd_matrices_with_points(2, 3, &[0.0, 1.0, 1.0]).is_err());
    }

    #[test]
    fn one_d_identity_vs_direct() {
        // The defining invariant: A_t ((G g) .* (B_t f)) = valid correlation.
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for m in 2..=6usize {
            for r in 2..=6usize {
                if m + r - 1 > 8 {
                    continue;
                }
                let t = m + r - 1;
                let w = winograd_matrices(m, r).unwrap();
                let f = random_mat(&mut rng, t, 1);
                let g = random_mat(&mut rng, r, 1);
                let u = matmul(&w.g, &g);
                let v = matmul(&w.b_t, &f);
                let y = matmul(&w.a_t, &hadamard(&u, &v));
                let mut direct = Mat::zeros(m, 1);
                for i in 0..m {
                    let mut acc = 0.0;
                    for a in 0..r {
                        acc += f.get(i + a, 0) * g.get(a, 0);
                    }
                    direct.set(i, 0, acc);
                }
                assert!(
                    l2_rel(&y, &direct) < 1e-10,
                    "F({m},{r}) 1D deviates: {}",
                    l2_rel(&y, &direct)
                );
            }
        }
    }

    #[test]
    fn two_d_matches_direct_oracle() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for m in 2..=7usize {
            for r in 2..=7usize {
                if m + r - 1 > 8 {
                    continue;
                }
                let t = m + r - 1;
                for _ in 0..20 {
                    let tile = random_mat(&mut rng, t, t);
                    let kernel = random_mat(&mut rng, r, r);
                    let y = winograd_conv_2d(&tile, &kernel, m).unwrap();
                    let oracle = direct_corr_2d(&tile, &kernel);
                    assert!(l2_rel(&y, &oracle) < 1e-10, "F({m},{r})");
                }
            }
        }
    }

    #[test]
    fn all_ones_tile_and_kernel() {
        let tile = Mat::from_vec(4, 4, vec![1.0f64; 16]);
        let kernel = Mat::from_vec(3, 3, vec![1.0f64; 9]);
        let y = winograd_conv_2d(&tile, &kernel, 2).unwrap();
        for &v in y.data() {
            assert!((v - 9.0).abs() < 1e-12);
        }
    }

    #[test]
    fn zero_kernel_gives_zero() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let tile = random_mat(&mut rng, 6, 6);
        let kernel = Mat::zeros(3, 3);
        let y = winograd_conv_2d(&tile, &kernel, 4).unwrap();
        assert!(y.data().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn corner_impulse_kernel_shifts_image() {
        // r=2 kernel with a single 1 at the top-left corner selects the
        // corresponding input window verbatim (the r=1 degenerate case is
        // excluded by the constructor).
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let tile = random_mat(&mut rng, 5, 5);
        let mut kernel = Mat::zeros(2, 2);
        kernel.set(0, 0, 1.0);
        let y = winograd_conv_2d(&tile, &kernel, 4).unwrap();
        for i in 0..4 {
            for j in 0..4 {
                assert!((y.get(i, j) - tile.get(i, j)).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn bilinear_in_the_tile() {
        let mut rng = ChaCha8Rng::seed_from_u64(13);
        let alpha = 1.7;
        let f1 = random_mat(&mut rng, 6, 6);
        let f2 = random_mat(&mut rng, 6, 6);
        let g = random_mat(&mut rng, 3, 3);
        let mut combo = Mat::zeros(6, 6);
        for i in 0..6 {
            for j in 0..6 {
                combo.set(i, j, alpha * f1.get(i, j) + f2.get(i, j));
            }
        }
        let lhs = winograd_conv_2d(&combo, &g, 4).unwrap();
        let y1 = winograd_conv_2d(&f1, &g, 4).unwrap();
        let y2 = winograd_conv_2d(&f2, &g, 4).unwrap();
        for i in 0..4 {
            for j in 0..4 {
                let want = alpha * y1.get(i, j) + y2.get(i, j);
                assert!((lhs.get(i, j) - want).abs() < 1e-9);
            }
        }
    }

    #[test]
    fn single_precision_error_grows_steeply_with_t() {
        // Mean (over trials) of max|err| / max|reference|, single precision.
        let trials = 120;
        let mut err_by_t = Vec::new();
        for m in [4usize, 6] {
            let mats = winograd_matrices(m, 3).unwrap();
            let t = m + 2;
            let mut rng = ChaCha8Rng::seed_from_u64(99);
            let mut acc = 0.0;
            for _ in 0..trials {
                let tile = random_mat(&mut rng, t, t);
                let kernel = random_mat(&mut rng, 3, 3);
                let tile32 = tile.map(|v| v as f32);
                let kernel32 = kernel.map(|v| v as f32);
                let y = winograd_conv_2d_with(&mats, &tile32, &kernel32);
                let oracle = direct_corr_2d(&tile, &kernel);
                let max_err = y
                    .data()
                    .iter()
                    .zip(oracle.data())
                    .map(|(&a, &b)| (a as f64 - b).abs())
                    .fold(0.0, f64::max);
                let max_ref = oracle.data().iter().fold(0.0f64, |acc, &v| acc.max(v.abs()));
                acc += max_err / max_ref;
            }
            err_by_t.push(acc / trials as f64);
        }
        assert!(
            err_by_t[1] >= 10.0 * err_by_t[0],
            "t=8 error {} not >= 10x t=6 error {}",
            err_by_t[1],
            err_by_t[0]
        );
        // Sanity on usable sizes: well under the single-precision tolerance
        // the oracle-equivalence suite asserts for t <= 6.
        assert!(err_by_t[0] < 1e-4);
    }
}
