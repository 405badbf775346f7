//! Roofline cost model: per-stage FLOP/data-movement accounting, channel
//! cache blocking, runtime prediction, tile-size selection, speedups,
//! parameter sweeps and model-fitness scoring.
//!
//! Conventions: 4 bytes per real number; outputs are written once (streaming
//! stores); no shared higher-level cache is modeled. Units are FLOP, bytes
//! and seconds; all ratios are dimensionless.

use serde::Serialize;

use crate::error::{Error, Result};
use crate::model::{tile_geometry, LayerShape, MachineSpec, Method};
use crate::tables::{tile_search_space, transform_cost, TransformStage};

/// The four pipeline stages of a transform-based convolution layer.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Stage {
    InputTransform,
    KernelTransform,
    ElementWise,
    OutputTransform,
}

impl Stage {
    pub const ALL: [Stage; 4] = [
        Stage::InputTransform,
        Stage::KernelTransform,
        Stage::ElementWise,
        Stage::OutputTransform,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Stage::InputTransform => "input_transform",
            Stage::KernelTransform => "kernel_transform",
            Stage::ElementWise => "element_wise",
            Stage::OutputTransform => "output_transform",
        }
    }
}

impl std::fmt::Display for Stage {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Result of the element-wise cache-blocking optimization: channel blocks
/// (c, c') minimizing data movement per useful FLOP.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct BlockingSolution {
    /// In-channel block; divides C.
    pub c: u64,
    /// Out-channel block; divides C'.
    pub c_out_block: u64,
    /// 1 when c covers all of C (input tiles are read once), else 2.
    pub alpha: u64,
    /// Words per value: 1 for real, 2 for complex element-wise data.
    pub beta: u64,
    /// The minimized objective (c + alpha*c') / (c*c').
    pub dm_per_flop_objective: f64,
}

/// FLOPs, bytes moved and arithmetic intensity of one stage.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct StageCost {
    pub stage: Stage,
    pub fpo: u64,
    pub dm: u64,
    pub ai: f64,
}

/// Which side of the Roofline a stage lands on.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Bound {
    Compute,
    Memory,
}

/// A fully-evaluated (method, m) choice on a given machine.
#[derive(Debug, Clone, Serialize)]
pub struct MethodPlan {
    pub method: Method,
    pub m: u64,
    pub t: u64,
    pub stage_costs: [StageCost; 4],
    /// Seconds per stage, same order as `stage_costs`.
    pub stage_runtimes: [f64; 4],
    pub bound_per_stage: [Bound; 4],
    /// Sum of the four stage runtimes, seconds.
    pub total_runtime: f64,
}

/// Ratio of words per stored value in the element-wise stage: complex data
/// for the regular-FFT method, real for Winograd and Gauss-FFT (which stores
/// separate real planes).
pub fn elementwise_beta(method: Method) -> u64 {
    match method {
        Method::RegularFft => 2,
        _ => 1,
    }
}

/// Exhaustively minimizes (c + αc')/(cc') over divisor pairs c | C, c' | C'
/// subject to the working set 4βcc' fitting in half the cache. Ties prefer
/// larger c, then larger c'.
pub fn blocking_solve(
    c_total: u64,
    c_out_total: u64,
    cache_bytes: u64,
    beta: u64,
) -> Result<BlockingSolution> {
    if c_total < 1 || c_out_total < 1 {
        return Err(Error::InvalidArgument(
            "channel counts must be >= 1".into(),
        ));
    }
    if !matches!(beta, 1 | 2) {
        return Err(Error::InvalidArgument(format!("beta must be 1 or 2, got {beta}")));
    }
    let budget = cache_bytes / 2;
    let mut best: Option<BlockingSolution> = None;
    for c in divisors(c_total) {
        for cp in divisors(c_out_total) {
            if 4 * beta * c * cp > budget {
                continue;
            }
            let alpha = if c == c_total { 1 } else { 2 };
            let objective = (c + alpha * cp) as f64 / (c * cp) as f64;
            let better = match &best {
                None => true,
                Some(b) => {
                    objective < b.dm_per_flop_objective
                        || (objective == b.dm_per_flop_objective
                            && (c, cp) > (b.c, b.c_out_block))
                }
            };
            if better {
                best = Some(BlockingSolution {
                    c,
                    c_out_block: cp,
                    alpha,
                    beta,
                    dm_per_flop_objective: objective,
                });
            }
        }
    }
    best.ok_or(Error::InfeasibleCache { cache_bytes, beta })
}

fn divisors(n: u64) -> Vec<u64> {
    let mut out: Vec<u64> = (1..=n).filter(|d| n % d == 0).collect();
    out.sort_unstable();
    out
}

/// Arithmetic intensity of the element-wise stage under a blocking solution:
/// cc'/2(c + αc') for Winograd and Gauss-FFT, cc'/(c + αc') for regular-FFT.
pub fn elementwise_ai(sol: &BlockingSolution, method: Method) -> f64 {
    let num = (sol.c * sol.c_out_block) as f64;
    let den = (sol.c + sol.alpha * sol.c_out_block) as f64;
    match method {
        Method::RegularFft => num / den,
        _ => num / (2.0 * den),
    }
}

/// Per-real-number size in bytes (32-bit floats throughout the model).
const WORD: u64 = 4;

/// Evaluates the four stage costs of `method` with output tiles of edge `m`.
///
/// Per-tile transform FLOPs come from the cost tables; element-wise FLOPs
/// and every data-movement term are closed-form in the layer dimensions,
/// with the element-wise DM depending on the cache blocking chosen for this
/// machine's cache size.
pub fn stage_costs(
    layer: &LayerShape,
    method: Method,
    m: u64,
    cache_bytes: u64,
) -> Result<[StageCost; 4]> {
    if method == Method::Direct {
        return Err(Error::UnsupportedMethod {
            method,
            detail: "the cost model covers transform-based methods only".into(),
        });
    }
    layer.validate()?;
    let plan = tile_geometry(layer, m)?;
    let (b, c, cp, x, r) = (layer.b, layer.c, layer.c_out, layer.x, layer.r);
    let (t, n, q) = (plan.t, plan.n_tiles, plan.n_cplx);

    let f_in = transform_cost(method, m, r, TransformStage::Input)?.flops;
    let f_ker = transform_cost(method, m, r, TransformStage::Kernel)?.flops;
    let f_out = transform_cost(method, m, r, TransformStage::Output)?.flops;

    let blocking = blocking_solve(c, cp, cache_bytes, elementwise_beta(method))?;
    let (cb, cpb, alpha) = (blocking.c, blocking.c_out_block, blocking.alpha);
    // (c + αc')·C·C'/(c·c') is integral because c | C and c' | C'.
    let block_reads = (cb + alpha * cpb) * (c / cb) * (cp / cpb);

    // Stored size of one transformed tile, bytes: t² reals (Winograd),
    // q = t⌈(t+1)/2⌉ complex entries (regular-FFT), or the same q entries
    // as three real planes (Gauss-FFT).
    let tile_bytes = match method {
        Method::Winograd => WORD * t * t,
        Method::RegularFft => 2 * WORD * q,
        Method::GaussFft => 3 * WORD * q,
        Method::Direct => unreachable!(),
    };
    // FLOPs per stored location in the element-wise stage: one multiply-add
    // over reals (Winograd), one complex multiply-add (8 ops) per complex
    // entry, or Gauss' three real multiplies plus accumulation (6 ops).
    let el_fpo = match method {
        Method::Winograd => 2 * t * t * b * n * c * cp,
        Method::RegularFft => 8 * q * b * n * c * cp,
        Method::GaussFft => 6 * q * b * n * c * cp,
        Method::Direct => unreachable!(),
    };

    let costs = [
        StageCost::new(
            Stage::InputTransform,
            b * c * n * f_in,
            WORD * b * c * x * x + b * c * n * tile_bytes,
        ),
        StageCost::new(
            Stage::KernelTransform,
            c * cp * f_ker,
            c * cp * (WORD * r * r + tile_bytes),
        ),
        StageCost::new(Stage::ElementWise, el_fpo, tile_bytes * b * n * block_reads),
        StageCost::new(
            Stage::OutputTransform,
            b * cp * n * f_out,
            b * cp * n * (tile_bytes + WORD * m * m),
        ),
    ];
    Ok(costs)
}

impl StageCost {
    fn new(stage: Stage, fpo: u64, dm: u64) -> StageCost {
        StageCost {
            stage,
            fpo,
            dm,
            ai: fpo as f64 / dm as f64,
        }
    }
}

/// Roofline runtime of one stage: FLOPs at peak when the machine's
/// compute-to-memory ratio does not exceed the stage's arithmetic intensity,
/// otherwise bytes at bandwidth.
pub fn stage_runtime(cost: &StageCost, machine: &MachineSpec) -> (f64, Bound) {
    if machine.exact_cmr() <= cost.ai {
        (cost.fpo as f64 / machine.peak_flops, Bound::Compute)
    } else {
        (cost.dm as f64 / machine.mem_bandwidth, Bound::Memory)
    }
}

/// Evaluates a full plan for (layer, method, m) on `machine`.
pub fn total_runtime(
    layer: &LayerShape,
    method: Method,
    m: u64,
    machine: &MachineSpec,
) -> Result<MethodPlan> {
    let stage_costs = stage_costs(layer, method, m, machine.cache_bytes)?;
    let mut stage_runtimes = [0.0; 4];
    let mut bound_per_stage = [Bound::Compute; 4];
    for (i, cost) in stage_costs.iter().enumerate() {
        let (seconds, bound) = stage_runtime(cost, machine);
        stage_runtimes[i] = seconds;
        bound_per_stage[i] = bound;
    }
    Ok(MethodPlan {
        method,
        m,
        t: m + layer.r - 1,
        stage_costs,
        stage_runtimes,
        bound_per_stage,
        total_runtime: stage_runtimes.iter().sum(),
    })
}

/// Picks the m minimizing predicted total runtime over the method's search
/// space. Ties go to the smaller m (smaller tiles are numerically kinder).
pub fn best_tile(
    layer: &LayerShape,
    method: Method,
    machine: &MachineSpec,
    max_winograd_tile: u64,
) -> Result<MethodPlan> {
    let mut best: Option<MethodPlan> = None;
    for m in tile_search_space(method, layer.r, max_winograd_tile)? {
        let plan = total_runtime(layer, method, m, machine)?;
        if best
            .as_ref()
            .is_none_or(|b| plan.total_runtime < b.total_runtime)
        {
            best = Some(plan);
        }
    }
    best.ok_or(Error::EmptySearchSpace {
        method,
        r: layer.r,
        detail: "no feasible tile size".into(),
    })
}

/// Speedup(A, B) = predicted time of B / predicted time of A, each method at
/// its own best tile size. Greater than 1 means A is faster.
pub fn speedup(
    layer: &LayerShape,
    method_a: Method,
    method_b: Method,
    machine: &MachineSpec,
    max_winograd_tile: u64,
) -> Result<f64> {
    let a = best_tile(layer, method_a, machine, max_winograd_tile)?;
    let b = best_tile(layer, method_b, machine, max_winograd_tile)?;
    Ok(b.total_runtime / a.total_runtime)
}

/// Layer or machine parameter varied by [`sweep`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum SweepParameter {
    /// Cache size in bytes.
    Cache,
    /// Sets C = C' = value.
    Channels,
    /// Image edge x.
    ImageSize,
    /// Kernel edge r.
    KernelSize,
    /// Compute-to-memory ratio; peak FLOPS is rescaled at fixed bandwidth.
    Cmr,
}

impl SweepParameter {
    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "cache" => Ok(SweepParameter::Cache),
            "channels" => Ok(SweepParameter::Channels),
            "x" => Ok(SweepParameter::ImageSize),
            "r" => Ok(SweepParameter::KernelSize),
            "cmr" => Ok(SweepParameter::Cmr),
            other => Err(Error::InvalidArgument(format!(
                "unknown sweep parameter {other:?}; expected cache, channels, x, r or cmr"
            ))),
        }
    }
}

/// One sweep row: the three pairwise speedups at a parameter value.
#[derive(Debug, Clone, Copy, Serialize)]
pub struct SweepRow {
    pub param_value: f64,
    pub speedup_rfft_wino: f64,
    pub speedup_gfft_wino: f64,
    pub speedup_rfft_gfft: f64,
}

/// Evaluates the three pairwise speedups at each parameter value. Rows are
/// independent; evaluation order never affects results.
pub fn sweep(
    base_layer: &LayerShape,
    machine: &MachineSpec,
    parameter: SweepParameter,
    values: &[f64],
    max_winograd_tile: u64,
) -> Result<Vec<SweepRow>> {
    if values.is_empty() {
        return Err(Error::InvalidArgument("sweep needs at least one value".into()));
    }
    values
        .iter()
        .map(|&value| {
            let (layer, machine) = apply_parameter(base_layer, machine, parameter, value)?;
            Ok(SweepRow {
                param_value: value,
                speedup_rfft_wino: speedup(
                    &layer,
                    Method::RegularFft,
                    Method::Winograd,
                    &machine,
                    max_winograd_tile,
                )?,
                speedup_gfft_wino: speedup(
                    &layer,
                    Method::GaussFft,
                    Method::Winograd,
                    &machine,
                    max_winograd_tile,
                )?,
                speedup_rfft_gfft: speedup(
                    &layer,
                    Method::RegularFft,
                    Method::GaussFft,
                    &machine,
                    max_winograd_tile,
                )?,
            })
        })
        .collect()
}

fn apply_parameter(
    layer: &LayerShape,
    machine: &MachineSpec,
    parameter: SweepParameter,
    value: f64,
) -> Result<(LayerShape, MachineSpec)> {
    let mut layer = *layer;
    let mut machine = machine.clone();
    let as_count = |value: f64, what: &str| -> Result<u64> {
        if value < 1.0 || value.fract() != 0.0 {
            return Err(Error::InvalidArgument(format!(
                "{what} must be a positive integer, got {value}"
            )));
        }
        Ok(value as u64)
    };
    match parameter {
        SweepParameter::Cache => {
            machine.cache_bytes = as_count(value, "cache bytes")?;
        }
        SweepParameter::Channels => {
            let channels = as_count(value, "channel count")?;
            layer.c = channels;
            layer.c_out = channels;
        }
        SweepParameter::ImageSize => {
            layer.x = as_count(value, "image edge")?;
        }
        SweepParameter::KernelSize => {
            layer.r = as_count(value, "kernel edge")?;
        }
        SweepParameter::Cmr => {
            if !(value > 0.0) {
                return Err(Error::InvalidArgument(format!(
                    "cmr must be positive, got {value}"
                )));
            }
            machine = MachineSpec::with_cmr_label(
                machine.name.clone(),
                value * machine.mem_bandwidth,
                machine.mem_bandwidth,
                machine.cache_bytes,
                value,
            )?;
        }
    }
    layer.validate()?;
    Ok((layer, machine))
}

/// Relative RMS error of predictions against measurements, and the derived
/// fitness score 100/(1 + rRMSE).
pub fn model_fitness(predicted: &[f64], measured: &[f64]) -> Result<(f64, f64)> {
    if predicted.len() != measured.len() || predicted.is_empty() {
        return Err(Error::LengthMismatch {
            predicted: predicted.len(),
            measured: measured.len(),
        });
    }
    let mut acc = 0.0;
    for (i, (&p, &m)) in predicted.iter().zip(measured).enumerate() {
        if m == 0.0 {
            return Err(Error::ZeroMeasured(i));
        }
        let rel = (p - m) / m;
        acc += rel * rel;
    }
    let rrmse = (acc / predicted.len() as f64).sqrt();
    Ok((rrmse, 100.0 / (1.0 + rrmse)))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn vgg32() -> LayerShape {
        LayerShape::new(64, 256, 256, 58, 3).unwrap()
    }

    fn phi_11() -> MachineSpec {
        crate::model::find_machine("Xeon Phi 7210@11").unwrap()
    }

    #[test]
    fn blocking_pinned_examples() {
        let sol = blocking_solve(1, 1, 64, 1).unwrap();
        assert_eq!((sol.c, sol.c_out_block, sol.alpha), (1, 1, 1));

        let sol = blocking_solve(256, 256, 262144, 1).unwrap();
        assert_eq!((sol.c, sol.c_out_block, sol.alpha), (256, 128, 1));
        assert_eq!(sol.dm_per_flop_objective, 384.0 / 32768.0);

        let sol = blocking_solve(64, 64, 262144, 2).unwrap();
        assert_eq!((sol.c, sol.c_out_block, sol.alpha), (64, 64, 1));
    }

    #[test]
    fn blocking_infeasible_cache() {
        // The 1x1 block needs 4*beta bytes in half the cache, i.e. cache >= 8*beta.
        assert!(matches!(
            blocking_solve(4, 4, 7, 1),
            Err(Error::InfeasibleCache { .. })
        ));
        assert!(blocking_solve(4, 4, 8, 1).is_ok());
        assert!(matches!(
            blocking_solve(4, 4, 15, 2),
            Err(Error::InfeasibleCache { .. })
        ));
        assert!(blocking_solve(4, 4, 16, 2).is_ok());
    }

    #[test]
    fn elementwise_ai_examples() {
        let sol = BlockingSolution {
            c: 16,
            c_out_block: 16,
            alpha: 1,
            beta: 1,
            dm_per_flop_objective: 0.125,
        };
        assert_eq!(elementwise_ai(&sol, Method::Winograd), 4.0);
        assert_eq!(elementwise_ai(&sol, Method::RegularFft), 8.0);
        let unit = BlockingSolution {
            c: 1,
            c_out_block: 1,
            alpha: 1,
            beta: 1,
            dm_per_flop_objective: 2.0,
        };
        assert_eq!(elementwise_ai(&unit, Method::GaussFft), 0.25);
    }

    #[test]
    fn stage_costs_winograd_pinned() {
        let layer = LayerShape::new(2, 3, 1, 6, 3).unwrap();
        let costs = stage_costs(&layer, Method::Winograd, 2, 262144).unwrap();
        assert_eq!(costs[0].fpo, 768);
        assert_eq!(costs[0].dm, 2400);
        assert_eq!(costs[0].ai, 768.0 / 2400.0);
    }

    #[test]
    fn elementwise_fpo_formulas() {
        let unit = LayerShape::new(1, 1, 1, 4, 3).unwrap();
        // t=4 so q = 4*ceil(5/2) = 12.
        let w = stage_costs(&unit, Method::Winograd, 2, 262144).unwrap();
        assert_eq!(w[2].fpo, 2 * 16);
        let f = stage_costs(&unit, Method::RegularFft, 2, 262144).unwrap();
        assert_eq!(f[2].fpo, 8 * 12);
        let g = stage_costs(&unit, Method::GaussFft, 2, 262144).unwrap();
        assert_eq!(g[2].fpo, 6 * 12);
    }

    #[test]
    fn stage_runtime_branches() {
        let machine = MachineSpec::new("toy", 1000.0, 100.0, 1024).unwrap();
        let cost = StageCost::new(Stage::ElementWise, 1000, 500);
        // CMR 10 > AI 2: memory-bound.
        let (seconds, bound) = stage_runtime(&cost, &machine);
        assert_eq!(bound, Bound::Memory);
        assert_eq!(seconds, 5.0);

        let machine = MachineSpec::new("toy", 100.0, 100.0, 1024).unwrap();
        let (seconds, bound) = stage_runtime(&cost, &machine);
        assert_eq!(bound, Bound::Compute);
        assert_eq!(seconds, 10.0);

        // At CMR = AI both branches agree.
        let machine = MachineSpec::new("toy", 200.0, 100.0, 1024).unwrap();
        let (seconds, _) = stage_runtime(&cost, &machine);
        assert_eq!(seconds, cost.fpo as f64 / machine.peak_flops);
        assert_eq!(seconds, cost.dm as f64 / machine.mem_bandwidth);
    }

    #[test]
    fn total_is_sum_and_at_least_max() {
        let plan = total_runtime(&vgg32(), Method::RegularFft, 4, &phi_11()).unwrap();
        let sum: f64 = plan.stage_runtimes.iter().sum();
        assert_eq!(plan.total_runtime, sum);
        let max = plan.stage_runtimes.iter().cloned().fold(0.0, f64::max);
        assert!(plan.total_runtime >= max);
    }

    #[test]
    fn best_tile_never_worse_than_explicit() {
        let layer = vgg32();
        let machine = phi_11();
        let best = best_tile(&layer, Method::GaussFft, &machine, 6).unwrap();
        for m in tile_search_space(Method::GaussFft, 3, 6).unwrap() {
            let plan = total_runtime(&layer, Method::GaussFft, m, &machine).unwrap();
            assert!(best.total_runtime <= plan.total_runtime, "m={m}");
        }
    }

    #[test]
    fn speedup_identity_and_direction() {
        let layer = vgg32();
        let machine = phi_11();
        let same = speedup(&layer, Method::Winograd, Method::Winograd, &machine, 6).unwrap();
        assert_eq!(same, 1.0);
        let ab = speedup(&layer, Method::RegularFft, Method::Winograd, &machine, 6).unwrap();
        let ba = speedup(&layer, Method::Winograd, Method::RegularFft, &machine, 6).unwrap();
        assert!((ab * ba - 1.0).abs() < 1e-12);
    }

    #[test]
    fn regular_fft_elementwise_ai_doubles_winograd() {
        for (c, cp, cache) in [(64, 64, 262144u64), (256, 256, 1048576), (12, 30, 65536)] {
            let sol = blocking_solve(c, cp, cache, 1).unwrap();
            assert_eq!(
                elementwise_ai(&sol, Method::RegularFft),
                2.0 * elementwise_ai(&sol, Method::Winograd)
            );
        }
    }

    #[test]
    fn batch_linearity() {
        let layer = LayerShape::new(3, 8, 16, 20, 3).unwrap();
        let mut doubled = layer;
        doubled.b *= 2;
        for method in Method::PLANNABLE {
            let a = stage_costs(&layer, method, 2, 262144).unwrap();
            let b = stage_costs(&doubled, method, 2, 262144).unwrap();
            for (sa, sb) in a.iter().zip(&b) {
                if sa.stage == Stage::KernelTransform {
                    // Kernels are transformed once regardless of batch.
                    assert_eq!(sa.fpo, sb.fpo);
                    assert_eq!(sa.dm, sb.dm);
                } else {
                    assert_eq!(sa.fpo * 2, sb.fpo);
                    assert_eq!(sa.dm * 2, sb.dm);
                }
            }
        }
    }

    #[test]
    fn sweep_single_value_matches_speedup() {
        let layer = vgg32();
        let machine = phi_11();
        let rows = sweep(&layer, &machine, SweepParameter::Cmr, &[22.0], 6).unwrap();
        assert_eq!(rows.len(), 1);
        let (_, m22) =
            apply_parameter(&layer, &machine, SweepParameter::Cmr, 22.0).unwrap();
        let want = speedup(&layer, Method::RegularFft, Method::Winograd, &m22, 6).unwrap();
        assert_eq!(rows[0].speedup_rfft_wino, want);
    }

    #[test]
    fn fitness_examples() {
        let (rrmse, fitness) = model_fitness(&[1.0, 2.0], &[1.0, 2.0]).unwrap();
        assert_eq!(rrmse, 0.0);
        assert_eq!(fitness, 100.0);

        let (rrmse, fitness) = model_fitness(&[1.079], &[1.0]).unwrap();
        assert!((rrmse - 0.079).abs() < 1e-12);
        assert!((fitness - 92.68).abs() < 0.01);

        let (_, fitness) = model_fitness(&[1.1], &[1.0]).unwrap();
        assert!((fitness - 90.909).abs() < 0.01);

        assert!(model_fitness(&[1.0], &[]).is_err());
        assert!(matches!(
            model_fitness(&[1.0], &[0.0]),
            Err(Error::ZeroMeasured(0))
        ));
    }

    #[test]
    fn direct_method_rejected() {
        assert!(stage_costs(&vgg32(), Method::Direct, 2, 262144).is_err());
    }
}
