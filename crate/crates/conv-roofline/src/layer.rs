//! Whole-layer forward passes: overlap-add tile decomposition, the
//! double-precision direct oracle, the four-stage transform pipelines for
//! each method, and the seeded accuracy harness comparing single-precision
//! runs against the oracle.

use num_traits::Float;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::fft::{dft_2d, gauss_product, to_complex};
use crate::mat::{matmul, CMat, Mat};
use crate::model::{LayerShape, Method};
use crate::winograd::winograd_matrices;

/// Arithmetic width of a forward pass. Tensors are always stored in double;
/// `Single` rounds them to f32 and runs the whole pipeline at that width.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Precision {
    Single,
    Double,
}

impl Precision {
    pub fn as_str(self) -> &'static str {
        match self {
            Precision::Single => "single",
            Precision::Double => "double",
        }
    }

    pub fn parse(s: &str) -> Result<Precision> {
        match s {
            "single" => Ok(Precision::Single),
            "double" => Ok(Precision::Double),
            other => Err(Error::InvalidArgument(format!(
                "unknown precision {other:?}; expected single or double"
            ))),
        }
    }
}

impl std::fmt::Display for Precision {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Input images and kernel weights of one layer.
///
/// Values are held as doubles but generated on the f32 grid, so single- and
/// double-precision pipelines see bit-identical inputs. Layouts are row-major
/// `[b][c][i][j]` for the input and `[c'][c][a][b]` for the weights; forward
/// passes return the output as row-major `[b][c'][i][j]` with edge x - r + 1.
#[derive(Debug, Clone)]
pub struct LayerTensors {
    layer: LayerShape,
    input: Vec<f64>,
    weights: Vec<f64>,
}

impl LayerTensors {
    pub fn new(layer: LayerShape, input: Vec<f64>, weights: Vec<f64>) -> Result<Self> {
        layer.validate()?;
        let want_in = (layer.b * layer.c * layer.x * layer.x) as usize;
        let want_w = (layer.c_out * layer.c * layer.r * layer.r) as usize;
        if input.len() != want_in || weights.len() != want_w {
            return Err(Error::ShapeMismatch(format!(
                "layer {layer:?} needs {want_in} input and {want_w} weight values, \
                 got {} and {}",
                input.len(),
                weights.len()
            )));
        }
        Ok(LayerTensors {
            layer,
            input,
            weights,
        })
    }

    /// Fills a layer with values uniform in [-1, 1). `stream` selects an
    /// independent RNG stream under the same seed; trial k of an experiment
    /// uses stream k, so trials are reproducible individually and in any
    /// order.
    pub fn random(layer: LayerShape, seed: u64, stream: u64) -> Result<Self> {
        layer.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(stream);
        let mut draw = |count: u64| -> Vec<f64> {
            (0..count)
                .map(|_| rng.gen_range(-1.0f32..1.0f32) as f64)
                .collect()
        };
        let input = draw(layer.b * layer.c * layer.x * layer.x);
        let weights = draw(layer.c_out * layer.c * layer.r * layer.r);
        LayerTensors::new(layer, input, weights)
    }

    pub fn layer(&self) -> &LayerShape {
        &self.layer
    }

    pub fn input(&self) -> &[f64] {
        &self.input
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    fn channel_image<T: Float + Default>(&self, b: usize, c: usize) -> Mat<T> {
        let x = self.layer.x as usize;
        let base = (b * self.layer.c as usize + c) * x * x;
        Mat::from_vec(
            x,
            x,
            self.input[base..base + x * x]
                .iter()
                .map(|&v| T::from(v).unwrap())
                .collect(),
        )
    }

    fn kernel_mat<T: Float + Default>(&self, c_out: usize, c: usize) -> Mat<T> {
        let r = self.layer.r as usize;
        let base = (c_out * self.layer.c as usize + c) * r * r;
        Mat::from_vec(
            r,
            r,
            self.weights[base..base + r * r]
                .iter()
                .map(|&v| T::from(v).unwrap())
                .collect(),
        )
    }
}

/// Splits an x by x image into overlap-add tiles of edge t = m + r - 1 at
/// stride m, one per m x m output block, in row-major block order. Reads past
/// the image edge are zero (implicit padding), so every block is covered even
/// when m does not divide x - r + 1.
pub fn tile_decompose<T: Float + Default>(image: &Mat<T>, m: u64, r: u64) -> Result<Vec<Mat<T>>> {
    let x = image.rows();
    if image.cols() != x {
        return Err(Error::ShapeMismatch(format!(
            "image must be square, got {x}x{}",
            image.cols()
        )));
    }
    if m < 1 {
        return Err(Error::InvalidArgument("m must be >= 1".into()));
    }
    if (x as u64) < r {
        return Err(Error::InvalidLayer(format!(
            "image edge {x} smaller than kernel edge {r}"
        )));
    }
    let (m, r) = (m as usize, r as usize);
    let t = m + r - 1;
    let e = x - r + 1;
    let per_row = e.div_ceil(m);
    let mut tiles = Vec::with_capacity(per_row * per_row);
    for bi in 0..per_row {
        for bj in 0..per_row {
            let mut tile = Mat::<T>::zeros(t, t);
            for di in 0..t {
                for dj in 0..t {
                    let (i, j) = (bi * m + di, bj * m + dj);
                    if i < x && j < x {
                        tile.set(di, dj, image.get(i, j));
                    }
                }
            }
            tiles.push(tile);
        }
    }
    Ok(tiles)
}

/// Direct valid cross-correlation of the whole layer, accumulated over input
/// channels, in double precision. This is the oracle every other path is
/// measured against.
pub fn layer_forward_direct(tensors: &LayerTensors) -> Vec<f64> {
    direct_forward::<f64>(tensors)
}

fn direct_forward<T: Float + Default>(tensors: &LayerTensors) -> Vec<f64> {
    let layer = tensors.layer;
    let (bn, cn, cpn) = (layer.b as usize, layer.c as usize, layer.c_out as usize);
    let (r, e) = (layer.r as usize, layer.out_edge() as usize);
    let mut out = vec![0.0f64; bn * cpn * e * e];
    for b in 0..bn {
        for cp in 0..cpn {
            let mut acc = vec![T::zero(); e * e];
            for c in 0..cn {
                let img = tensors.channel_image::<T>(b, c);
                let ker = tensors.kernel_mat::<T>(cp, c);
                for i in 0..e {
                    for j in 0..e {
                        let mut s = T::zero();
                        for a in 0..r {
                            for bb in 0..r {
                                s = s + img.get(i + a, j + bb) * ker.get(a, bb);
                            }
                        }
                        acc[i * e + j] = acc[i * e + j] + s;
                    }
                }
            }
            let base = (b * cpn + cp) * e * e;
            for (dst, v) in out[base..base + e * e].iter_mut().zip(&acc) {
                *dst = v.to_f64().unwrap();
            }
        }
    }
    out
}

/// Runs the four-stage transform pipeline for one method and tile size:
/// transform all B·C·N input tiles and all C·C' kernels, accumulate over
/// input channels point by point in the transform domain (per location this
/// is a (B·N) x C by C x C' matrix product; Gauss-FFT multiplies with three
/// real products per entry), inverse-transform the B·C'·N results and
/// reassemble the output.
pub fn layer_forward(
    tensors: &LayerTensors,
    method: Method,
    m: u64,
    precision: Precision,
) -> Result<Vec<f64>> {
    match precision {
        Precision::Single => forward_dispatch::<f32>(tensors, method, m),
        Precision::Double => forward_dispatch::<f64>(tensors, method, m),
    }
}

fn forward_dispatch<T: Float + Default>(
    tensors: &LayerTensors,
    method: Method,
    m: u64,
) -> Result<Vec<f64>> {
    match method {
        Method::Winograd => forward_winograd::<T>(tensors, m),
        Method::RegularFft => forward_fft::<T>(tensors, m, false),
        Method::GaussFft => forward_fft::<T>(tensors, m, true),
        Method::Direct => Err(Error::UnsupportedMethod {
            method,
            detail: "the tiled pipeline needs a transform; use layer_forward_direct".into(),
        }),
    }
}

struct Geometry {
    bn: usize,
    cn: usize,
    cpn: usize,
    m: usize,
    t: usize,
    e: usize,
    per_row: usize,
    n: usize,
}

fn geometry(layer: &LayerShape, m: u64) -> Result<Geometry> {
    layer.validate()?;
    if m < 1 {
        return Err(Error::InvalidArgument("m must be >= 1".into()));
    }
    let e = layer.out_edge() as usize;
    let m = m as usize;
    let per_row = e.div_ceil(m);
    Ok(Geometry {
        bn: layer.b as usize,
        cn: layer.c as usize,
        cpn: layer.c_out as usize,
        m,
        t: m + layer.r as usize - 1,
        e,
        per_row,
        n: per_row * per_row,
    })
}

/// Adds the m x m (clipped at the output edge) block of tile `idx` into the
/// output tensor.
fn scatter_block<T: Float>(
    out: &mut [f64],
    g: &Geometry,
    b: usize,
    cp: usize,
    idx: usize,
    block: impl Fn(usize, usize) -> T,
) {
    let (bi, bj) = (idx / g.per_row, idx % g.per_row);
    let base = (b * g.cpn + cp) * g.e * g.e;
    for ii in 0..g.m {
        let i = bi * g.m + ii;
        if i >= g.e {
            break;
        }
        for jj in 0..g.m {
            let j = bj * g.m + jj;
            if j >= g.e {
                break;
            }
            out[base + i * g.e + j] = block(ii, jj).to_f64().unwrap();
        }
    }
}

fn forward_winograd<T: Float + Default>(tensors: &LayerTensors, m: u64) -> Result<Vec<f64>> {
    let layer = tensors.layer;
    let g = geometry(&layer, m)?;
    let mats = winograd_matrices(g.m, layer.r as usize)?;
    let a_t = mats.a_t_as::<T>();
    let b_t = mats.b_t_as::<T>();
    let g_mat = mats.g_as::<T>();

    // Kernel transforms, C'·C of them.
    let mut u: Vec<Mat<T>> = Vec::with_capacity(g.cpn * g.cn);
    for cp in 0..g.cpn {
        for c in 0..g.cn {
            let k = tensors.kernel_mat::<T>(cp, c);
            u.push(matmul(&matmul(&g_mat, &k), &g_mat.transpose()));
        }
    }
    // Input transforms, B·C·N of them.
    let mut v: Vec<Mat<T>> = Vec::with_capacity(g.bn * g.cn * g.n);
    for b in 0..g.bn {
        for c in 0..g.cn {
            for tile in tile_decompose(&tensors.channel_image::<T>(b, c), m, layer.r)? {
                v.push(matmul(&matmul(&b_t, &tile), &b_t.transpose()));
            }
        }
    }

    let mut out = vec![0.0f64; g.bn * g.cpn * g.e * g.e];
    for b in 0..g.bn {
        for idx in 0..g.n {
            for cp in 0..g.cpn {
                let mut acc = Mat::<T>::zeros(g.t, g.t);
                for c in 0..g.cn {
                    let uu = &u[cp * g.cn + c];
                    let vv = &v[(b * g.cn + c) * g.n + idx];
                    for i in 0..g.t {
                        for j in 0..g.t {
                            acc.set(i, j, acc.get(i, j) + uu.get(i, j) * vv.get(i, j));
                        }
                    }
                }
                let y = matmul(&matmul(&a_t, &acc), &a_t.transpose());
                scatter_block(&mut out, &g, b, cp, idx, |i, j| y.get(i, j));
            }
        }
    }
    Ok(out)
}

fn forward_fft<T: Float + Default>(tensors: &LayerTensors, m: u64, gauss: bool) -> Result<Vec<f64>> {
    let layer = tensors.layer;
    let g = geometry(&layer, m)?;

    // Kernel spectra, conjugated once here so the element-wise stage is a
    // plain product (correlation instead of convolution).
    let mut u: Vec<CMat<T>> = Vec::with_capacity(g.cpn * g.cn);
    for cp in 0..g.cpn {
        for c in 0..g.cn {
            let k = tensors.kernel_mat::<T>(cp, c);
            let mut padded = Mat::<T>::zeros(g.t, g.t);
            for i in 0..k.rows() {
                for j in 0..k.cols() {
                    padded.set(i, j, k.get(i, j));
                }
            }
            u.push(dft_2d(&to_complex(&padded), false).map(|z| z.conj()));
        }
    }
    let mut v: Vec<CMat<T>> = Vec::with_capacity(g.bn * g.cn * g.n);
    for b in 0..g.bn {
        for c in 0..g.cn {
            for tile in tile_decompose(&tensors.channel_image::<T>(b, c), m, layer.r)? {
                v.push(dft_2d(&to_complex(&tile), false));
            }
        }
    }

    let mut out = vec![0.0f64; g.bn * g.cpn * g.e * g.e];
    for b in 0..g.bn {
        for idx in 0..g.n {
            for cp in 0..g.cpn {
                let mut acc = CMat::<T>::zeros(g.t, g.t);
                for c in 0..g.cn {
                    let uu = &u[cp * g.cn + c];
                    let vv = &v[(b * g.cn + c) * g.n + idx];
                    for i in 0..g.t {
                        for j in 0..g.t {
                            let prod = if gauss {
                                gauss_product(uu.get(i, j), vv.get(i, j))
                            } else {
                                uu.get(i, j) * vv.get(i, j)
                            };
                            acc.set(i, j, acc.get(i, j) + prod);
                        }
                    }
                }
                let y = dft_2d(&acc, true);
                scatter_block(&mut out, &g, b, cp, idx, |i, j| y.get(i, j).re);
            }
        }
    }
    Ok(out)
}

/// L2 relative deviation ||a - b|| / ||b||; zero reference with zero
/// deviation counts as exact.
pub fn l2_rel_error(a: &[f64], b: &[f64]) -> f64 {
    assert_eq!(a.len(), b.len(), "comparing tensors of different size");
    let mut num = 0.0;
    let mut den = 0.0;
    for (&x, &y) in a.iter().zip(b) {
        num += (x - y) * (x - y);
        den += y * y;
    }
    if den == 0.0 {
        return if num == 0.0 { 0.0 } else { f64::INFINITY };
    }
    (num / den).sqrt()
}

/// One line of an accuracy report. For the direct baseline (single vs double
/// precision of the same loop) `m` and `t` are 0: tiling does not apply.
#[derive(Debug, Clone, Serialize)]
pub struct AccuracyRow {
    pub method: Method,
    pub m: u64,
    pub t: u64,
    pub r: u64,
    pub rel_error: f64,
    pub trials: u64,
    pub seed: u64,
}

/// Mean single-precision L2 relative error of each (method, m) case against
/// the double-precision direct oracle, over `trials` independently seeded
/// random layers. Trial k draws from RNG stream k of `seed`, so reports are
/// reproducible and trial-order independent.
pub fn accuracy_report(
    layer: &LayerShape,
    cases: &[(Method, u64)],
    trials: u64,
    seed: u64,
) -> Result<Vec<AccuracyRow>> {
    if trials < 1 {
        return Err(Error::InvalidArgument("trials must be >= 1".into()));
    }
    layer.validate()?;
    let mut sums = vec![0.0f64; cases.len()];
    for trial in 0..trials {
        let tensors = LayerTensors::random(*layer, seed, trial)?;
        let oracle = layer_forward_direct(&tensors);
        for (sum, &(method, m)) in sums.iter_mut().zip(cases) {
            let single = match method {
                Method::Direct => direct_forward::<f32>(&tensors),
                _ => layer_forward(&tensors, method, m, Precision::Single)?,
            };
            *sum += l2_rel_error(&single, &oracle);
        }
    }
    Ok(cases
        .iter()
        .zip(&sums)
        .map(|(&(method, m), &sum)| {
            let (m, t) = match method {
                Method::Direct => (0, 0),
                _ => (m, m + layer.r - 1),
            };
            AccuracyRow {
                method,
                m,
                t,
                r: layer.r,
                rel_error: sum / trials as f64,
                trials,
                seed,
            }
        })
        .collect())
}
