//! Reference DFT-based valid convolution and Gauss' three-multiplication
//! complex product.
//!
//! Transforms are direct O(n²) summations with double-precision twiddles;
//! tile edges never exceed 32 here, and the planner takes transform costs
//! from the lookup tables, so there is nothing to gain from a fast FFT.

use num_complex::Complex;
use num_traits::Float;

use crate::error::{Error, Result};
use crate::mat::{CMat, Mat};

/// Relative conjugate-symmetry tolerance accepted by
/// [`conjugate_symmetric_pack`]; larger deviations mean the input was not a
/// real signal's spectrum.
pub const SYMMETRY_TOL: f64 = 1e-9;

/// Direct DFT of an arbitrary-length complex sequence. The inverse includes
/// the 1/n scale, so `dft_1d(dft_1d(x, false), true) == x` up to rounding.
pub fn dft_1d<T: Float + Default>(signal: &[Complex<T>], inverse: bool) -> Vec<Complex<T>> {
    let n = signal.len();
    if n == 0 {
        return Vec::new();
    }
    let sign = if inverse { 1.0 } else { -1.0 };
    let mut out = Vec::with_capacity(n);
    for k in 0..n {
        let mut acc = Complex::new(T::zero(), T::zero());
        for (j, &x) in signal.iter().enumerate() {
            let angle = sign * 2.0 * std::f64::consts::PI * ((j * k) % n) as f64 / n as f64;
            let w = Complex::new(
                T::from(angle.cos()).unwrap(),
                T::from(angle.sin()).unwrap(),
            );
            acc = acc + x * w;
        }
        if inverse {
            acc = acc / T::from(n).unwrap();
        }
        out.push(acc);
    }
    out
}

/// Row-column 2D DFT (inverse includes the 1/(rows·cols) scale).
pub fn dft_2d<T: Float + Default>(input: &CMat<T>, inverse: bool) -> CMat<T> {
    let (rows, cols) = (input.rows(), input.cols());
    let mut tmp = CMat::<T>::zeros(rows, cols);
    for i in 0..rows {
        let row: Vec<Complex<T>> = (0..cols).map(|j| input.get(i, j)).collect();
        for (j, v) in dft_1d(&row, inverse).into_iter().enumerate() {
            tmp.set(i, j, v);
        }
    }
    let mut out = CMat::<T>::zeros(rows, cols);
    for j in 0..cols {
        let col: Vec<Complex<T>> = (0..rows).map(|i| tmp.get(i, j)).collect();
        for (i, v) in dft_1d(&col, inverse).into_iter().enumerate() {
            out.set(i, j, v);
        }
    }
    out
}

/// Lifts a real tile to a complex matrix.
pub fn to_complex<T: Float + Default>(input: &Mat<T>) -> CMat<T> {
    input.map(|v| Complex::new(v, T::zero()))
}

/// Spectrum of an r x r kernel zero-padded to t x t.
pub(crate) fn kernel_spectrum<T: Float + Default>(kernel: &Mat<T>, t: usize) -> CMat<T> {
    let mut padded = Mat::<T>::zeros(t, t);
    for i in 0..kernel.rows() {
        for j in 0..kernel.cols() {
            padded.set(i, j, kernel.get(i, j));
        }
    }
    dft_2d(&to_complex(&padded), false)
}

/// 2D valid cross-correlation of a t x t tile with an r x r kernel through
/// the frequency domain, returning the m x m output block.
///
/// The kernel spectrum is conjugated before the point-wise product, which
/// turns circular convolution into circular cross-correlation; the first
/// m x m entries of the inverse transform are the valid (wrap-free) outputs.
pub fn fft_conv_valid_2d<T: Float + Default>(
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
    let f = dft_2d(&to_complex(tile), false);
    let g = kernel_spectrum(kernel, t);
    let mut prod = CMat::<T>::zeros(t, t);
    for i in 0..t {
        for j in 0..t {
            prod.set(i, j, f.get(i, j) * g.get(i, j).conj());
        }
    }
    let y = dft_2d(&prod, true);
    let mut out = Mat::<T>::zeros(m, m);
    for i in 0..m {
        for j in 0..m {
            out.set(i, j, y.get(i, j).re);
        }
    }
    Ok(out)
}

/// Complex product by Gauss' method: three real multiplications instead of
/// four.
///
/// With u = u_r + u_i·i and v = v_r + v_i·i:
/// tmp1 = v_r(u_r + u_i), tmp2 = u_r(v_i - v_r), tmp3 = u_i(v_r + v_i),
/// giving re = tmp1 - tmp3 and im = tmp1 + tmp2.
pub fn gauss_product<T: Float>(u: Complex<T>, v: Complex<T>) -> Complex<T> {
    let tmp1 = v.re * (u.re + u.im);
    let tmp2 = u.re * (v.im - v.re);
    let tmp3 = u.im * (v.re + v.im);
    Complex::new(tmp1 - tmp3, tmp1 + tmp2)
}

/// A complex tile split into equal-shape real and imaginary planes, the
/// storage layout the Gauss-FFT element-wise stage operates on.
#[derive(Debug, Clone, PartialEq)]
pub struct ComplexTensor<T> {
    re: Mat<T>,
    im: Mat<T>,
}

impl<T: Float + Default> ComplexTensor<T> {
    pub fn new(re: Mat<T>, im: Mat<T>) -> Result<Self> {
        if re.rows() != im.rows() || re.cols() != im.cols() {
            return Err(Error::ShapeMismatch(format!(
                "real part is {}x{}, imaginary part {}x{}",
                re.rows(),
                re.cols(),
                im.rows(),
                im.cols()
            )));
        }
        Ok(ComplexTensor { re, im })
    }

    pub fn from_complex(m: &CMat<T>) -> Self {
        ComplexTensor {
            re: m.map(|v| v.re),
            im: m.map(|v| v.im),
        }
    }

    pub fn to_complex(&self) -> CMat<T> {
        let mut out = CMat::<T>::zeros(self.re.rows(), self.re.cols());
        for i in 0..out.rows() {
            for j in 0..out.cols() {
                out.set(i, j, Complex::new(self.re.get(i, j), self.im.get(i, j)));
            }
        }
        out
    }

    pub fn re(&self) -> &Mat<T> {
        &self.re
    }

    pub fn im(&self) -> &Mat<T> {
        &self.im
    }

    pub fn rows(&self) -> usize {
        self.re.rows()
    }

    pub fn cols(&self) -> usize {
        self.re.cols()
    }
}

/// Packs the spectrum of a real t x t signal down to its first
/// ceil((t+1)/2) columns (t·ceil((t+1)/2) complex entries) after checking
/// that the dropped columns really are conjugate mirrors of kept ones.
///
/// The deviation check is relative to the largest spectrum magnitude and
/// rejects inputs beyond [`SYMMETRY_TOL`].
pub fn conjugate_symmetric_pack<T: Float + Default>(
    spectrum: &CMat<T>,
) -> Result<ComplexTensor<T>> {
    let t = spectrum.rows();
    if spectrum.cols() != t {
        return Err(Error::ShapeMismatch(format!(
            "spectrum must be square, got {t}x{}",
            spectrum.cols()
        )));
    }
    let half = (t + 1).div_ceil(2);
    let scale = spectrum
        .data()
        .iter()
        .fold(0.0f64, |acc, v| acc.max(v.norm_sqr().to_f64().unwrap()))
        .sqrt()
        .max(1.0);
    let mut worst = 0.0f64;
    for i in 0..t {
        for j in half..t {
            let mirror = spectrum.get((t - i) % t, (t - j) % t).conj();
            let dev = (spectrum.get(i, j) - mirror).norm().to_f64().unwrap() / scale;
            worst = worst.max(dev);
        }
    }
    if worst > SYMMETRY_TOL {
        return Err(Error::SymmetryViolation {
            deviation: worst,
            tolerance: SYMMETRY_TOL,
        });
    }
    let mut packed = CMat::<T>::zeros(t, half);
    for i in 0..t {
        for j in 0..half {
            packed.set(i, j, spectrum.get(i, j));
        }
    }
    Ok(ComplexTensor::from_complex(&packed))
}

/// Reconstructs the full t x t spectrum from its packed half.
pub fn conjugate_symmetric_unpack<T: Float + Default>(packed: &ComplexTensor<T>) -> CMat<T> {
    let t = packed.rows();
    let half = packed.cols();
    let stored = packed.to_complex();
    let mut out = CMat::<T>::zeros(t, t);
    for i in 0..t {
        for j in 0..half {
            out.set(i, j, stored.get(i, j));
        }
        for j in half..t {
            out.set(i, j, stored.get((t - i) % t, (t - j) % t).conj());
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_mat(rng: &mut ChaCha8Rng, rows: usize, cols: usize) -> Mat<f64> {
        Mat::from_vec(
            rows,
            cols,
            (0..rows * cols).map(|_| rng.gen_range(-1.0..1.0)).collect(),
        )
    }

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

    #[test]
    fn dft_roundtrip_arbitrary_lengths() {
        let mut rng = ChaCha8Rng::seed_from_u64(17);
        for n in [1usize, 2, 3, 5, 7, 12, 15, 31, 32] {
            let signal: Vec<Complex<f64>> = (0..n)
                .map(|_| Complex::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)))
                .collect();
            let back = dft_1d(&dft_1d(&signal, false), true);
            for (a, b) in signal.iter().zip(&back) {
                assert!((a - b).norm() < 1e-10, "n={n}");
            }
        }
    }

    #[test]
    fn dft_parseval() {
        let mut rng = ChaCha8Rng::seed_from_u64(19);
        for n in [3usize, 8, 13, 27] {
            let signal: Vec<Complex<f64>> = (0..n)
                .map(|_| Complex::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)))
                .collect();
            let spectrum = dft_1d(&signal, false);
            let lhs: f64 = signal.iter().map(|x| x.norm_sqr()).sum();
            let rhs: f64 = spectrum.iter().map(|x| x.norm_sqr()).sum::<f64>() / n as f64;
            assert!((lhs - rhs).abs() < 1e-10, "n={n}");
        }
    }

    #[test]
    fn dft_impulse_is_flat() {
        let mut signal = vec![Complex::new(0.0f64, 0.0); 8];
        signal[0] = Complex::new(1.0, 0.0);
        for v in dft_1d(&signal, false) {
            assert!((v - Complex::new(1.0, 0.0)).norm() < 1e-12);
        }
    }

    #[test]
    fn fft_conv_matches_direct_oracle() {
        let mut rng = ChaCha8Rng::seed_from_u64(23);
        for (m, r) in [(2usize, 2usize), (2, 3), (4, 3), (6, 3), (3, 5), (14, 3), (30, 3)] {
            let t = m + r - 1;
            let tile = random_mat(&mut rng, t, t);
            let kernel = random_mat(&mut rng, r, r);
            let y = fft_conv_valid_2d(&tile, &kernel, m).unwrap();
            let oracle = direct_corr_2d(&tile, &kernel);
            let mut num = 0.0;
            let mut den = 0.0;
            for (a, b) in y.data().iter().zip(oracle.data()) {
                num += (a - b) * (a - b);
                den += b * b;
            }
            assert!((num / den).sqrt() < 1e-10, "m={m} r={r}");
        }
    }

    #[test]
    fn fft_conv_linear_in_both_arguments() {
        let mut rng = ChaCha8Rng::seed_from_u64(29);
        let (m, r, t) = (4usize, 3usize, 6usize);
        let f1 = random_mat(&mut rng, t, t);
        let f2 = random_mat(&mut rng, t, t);
        let g1 = random_mat(&mut rng, r, r);
        let g2 = random_mat(&mut rng, r, r);
        let alpha = 0.37;

        let mut f_combo = Mat::zeros(t, t);
        for i in 0..t {
            for j in 0..t {
                f_combo.set(i, j, alpha * f1.get(i, j) + f2.get(i, j));
            }
        }
        let lhs = fft_conv_valid_2d(&f_combo, &g1, m).unwrap();
        let y1 = fft_conv_valid_2d(&f1, &g1, m).unwrap();
        let y2 = fft_conv_valid_2d(&f2, &g1, m).unwrap();
        for i in 0..m {
            for j in 0..m {
                let want = alpha * y1.get(i, j) + y2.get(i, j);
                assert!((lhs.get(i, j) - want).abs() < 1e-10);
            }
        }

        let mut g_combo = Mat::zeros(r, r);
        for i in 0..r {
            for j in 0..r {
                g_combo.set(i, j, alpha * g1.get(i, j) + g2.get(i, j));
            }
        }
        let lhs = fft_conv_valid_2d(&f1, &g_combo, m).unwrap();
        let y1 = fft_conv_valid_2d(&f1, &g1, m).unwrap();
        let y2 = fft_conv_valid_2d(&f1, &g2, m).unwrap();
        for i in 0..m {
            for j in 0..m {
                let want = alpha * y1.get(i, j) + y2.get(i, j);
                assert!((lhs.get(i, j) - want).abs() < 1e-10);
            }
        }
    }

    #[test]
    fn gauss_product_equals_complex_product() {
        assert_eq!(
            gauss_product(Complex::new(1.0, 2.0), Complex::new(3.0, 4.0)),
            Complex::new(-5.0, 10.0)
        );
        let mut rng = ChaCha8Rng::seed_from_u64(31);
        for _ in 0..200 {
            let u = Complex::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0));
            let v = Complex::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0));
            assert!((gauss_product(u, v) - u * v).norm() < 1e-12);
            let uf = Complex::new(u.re as f32, u.im as f32);
            let vf = Complex::new(v.re as f32, v.im as f32);
            let rel = (gauss_product(uf, vf) - uf * vf).norm() / (uf * vf).norm().max(1e-6);
            assert!(rel < 1e-6);
        }
    }

    #[test]
    fn pack_shape_and_roundtrip() {
        let mut rng = ChaCha8Rng::seed_from_u64(37);
        for t in [2usize, 3, 4, 5, 6, 8] {
            let tile = random_mat(&mut rng, t, t);
            let spectrum = dft_2d(&to_complex(&tile), false);
            let packed = conjugate_symmetric_pack(&spectrum).unwrap();
            assert_eq!(
                (packed.rows(), packed.cols()),
                (t, (t + 1).div_ceil(2)),
                "t={t}"
            );
            if t == 3 {
                assert_eq!(packed.rows() * packed.cols(), 6);
            }
            let full = conjugate_symmetric_unpack(&packed);
            for i in 0..t {
                for j in 0..t {
                    assert!(
                        (full.get(i, j) - spectrum.get(i, j)).norm() < 1e-12,
                        "t={t} ({i},{j})"
                    );
                }
            }
        }
    }

    #[test]
    fn pack_impulse_exactly() {
        let mut tile = Mat::<f64>::zeros(4, 4);
        tile.set(0, 0, 1.0);
        let spectrum = dft_2d(&to_complex(&tile), false);
        let packed = conjugate_symmetric_pack(&spectrum).unwrap();
        let full = conjugate_symmetric_unpack(&packed);
        for v in full.data() {
            assert!((v - Complex::new(1.0, 0.0)).norm() < 1e-9);
        }
    }

    #[test]
    fn pack_rejects_asymmetric_spectrum() {
        let mut rng = ChaCha8Rng::seed_from_u64(41);
        let mut spectrum = CMat::<f64>::zeros(4, 4);
        for i in 0..4 {
            for j in 0..4 {
                spectrum.set(
                    i,
                    j,
                    Complex::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)),
                );
            }
        }
        match conjugate_symmetric_pack(&spectrum) {
            Err(Error::SymmetryViolation { .. }) => {}
            other => panic!("expected symmetry violation, got {other:?}"),
        }
    }

    #[test]
    fn complex_tensor_shape_check() {
        assert!(ComplexTensor::new(Mat::<f64>::zeros(2, 3), Mat::<f64>::zeros(2, 3)).is_ok());
        assert!(ComplexTensor::new(Mat::<f64>::zeros(2, 3), Mat::<f64>::zeros(3, 2)).is_err());
    }
}
