//! Shared domain types: layer shapes, machine specs, tile geometry, methods.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Dimensions of a square convolutional layer.
///
/// `x` is the padded input edge actually seen by the convolution, so the
/// valid output edge is `x - r + 1`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct LayerShape {
    /// Batch size B.
    pub b: u64,
    /// Input channels C.
    pub c: u64,
    /// Output channels C'.
    pub c_out: u64,
    /// Input image edge x (square images).
    pub x: u64,
    /// Kernel edge r (square kernels).
    pub r: u64,
}

impl LayerShape {
    pub fn new(b: u64, c: u64, c_out: u64, x: u64, r: u64) -> Result<Self> {
        let shape = LayerShape { b, c, c_out, x, r };
        shape.validate()?;
        Ok(shape)
    }

    pub fn validate(&self) -> Result<()> {
        if self.b < 1 || self.c < 1 || self.c_out < 1 || self.x < 1 || self.r < 1 {
            return Err(Error::InvalidLayer(format!(
                "all dimensions must be >= 1, got {self:?}"
            )));
        }
        if self.x < self.r {
            return Err(Error::InvalidLayer(format!(
                "image edge x={} smaller than kernel edge r={}",
                self.x, self.r
            )));
        }
        Ok(())
    }

    /// Valid-convolution output edge, x - r + 1.
    pub fn out_edge(&self) -> u64 {
        self.x - self.r + 1
    }
}

/// A target machine for the Roofline model.
///
/// `cmr` carries the ratio the machine is cataloged under; it must agree with
/// `peak_flops / mem_bandwidth` within 1% but may be a rounded label (the
/// runtime model itself always uses the exact ratio).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MachineSpec {
    pub name: String,
    /// Peak floating-point throughput, FLOP/s.
    pub peak_flops: f64,
    /// Main-memory bandwidth, bytes/s.
    pub mem_bandwidth: f64,
    /// Core-exclusive cache, bytes.
    pub cache_bytes: u64,
    /// Compute-to-memory ratio, FLOP per byte.
    pub cmr: f64,
}

impl MachineSpec {
    /// Builds a spec with `cmr` computed exactly from peak and bandwidth.
    pub fn new(
        name: impl Into<String>,
        peak_flops: f64,
        mem_bandwidth: f64,
        cache_bytes: u64,
    ) -> Result<Self> {
        let name = name.into();
        if !(peak_flops > 0.0) || !(mem_bandwidth > 0.0) || cache_bytes == 0 {
            return Err(Error::InvalidMachine(format!(
                "{name}: peak, bandwidth and cache must all be positive"
            )));
        }
        Ok(MachineSpec {
            cmr: peak_flops / mem_bandwidth,
            name,
            peak_flops,
            mem_bandwidth,
            cache_bytes,
        })
    }

    /// Builds a spec carrying a cataloged (possibly rounded) CMR label.
    pub fn with_cmr_label(
        name: impl Into<String>,
        peak_flops: f64,
        mem_bandwidth: f64,
        cache_bytes: u64,
        cmr: f64,
    ) -> Result<Self> {
        let mut spec = MachineSpec::new(name, peak_flops, mem_bandwidth, cache_bytes)?;
        let exact = spec.cmr;
        if ((cmr - exact) / exact).abs() > 0.01 {
            return Err(Error::InvalidMachine(format!(
                "{}: cataloged CMR {cmr} deviates more than 1% from peak/bandwidth = {exact:.4}",
                spec.name
            )));
        }
        spec.cmr = cmr;
        Ok(spec)
    }

    /// Exact compute-to-memory ratio used by the runtime model.
    pub fn exact_cmr(&self) -> f64 {
        self.peak_flops / self.mem_bandwidth
    }
}

/// Machine description as read from a user config file.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct MachineConfig {
    pub name: String,
    pub gflops: f64,
    pub gbps: f64,
    pub cache_kb: u64,
}

impl MachineConfig {
    pub fn into_spec(self) -> Result<MachineSpec> {
        MachineSpec::new(
            self.name,
            self.gflops * 1e9,
            self.gbps * 1e9,
            self.cache_kb * 1024,
        )
    }

    pub fn load(path: &std::path::Path) -> Result<MachineSpec> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::io(format!("reading machine config {}", path.display()), e))?;
        let config: MachineConfig = serde_json::from_str(&text).map_err(|e| Error::Config {
            context: format!("parsing machine config {}", path.display()),
            source: e,
        })?;
        config.into_spec()
    }
}

/// Overlap-add tile geometry for one (layer, m) choice.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct TilePlan {
    /// Output-tile edge.
    pub m: u64,
    /// Input-tile edge, t = m + r - 1.
    pub t: u64,
    /// Tiles per image, N = ceil((x - r + 1)/m)^2.
    pub n_tiles: u64,
    /// Complex entries stored per FFT tile under conjugate symmetry,
    /// t * ceil((t+1)/2).
    pub n_cplx: u64,
}

/// Convolution algorithm. `Direct` is the oracle; the planner only ever
/// searches over the other three.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    Winograd,
    RegularFft,
    GaussFft,
    Direct,
}

impl Method {
    pub const PLANNABLE: [Method; 3] = [Method::Winograd, Method::RegularFft, Method::GaussFft];

    pub fn as_str(self) -> &'static str {
        match self {
            Method::Winograd => "winograd",
            Method::RegularFft => "regular_fft",
            Method::GaussFft => "gauss_fft",
            Method::Direct => "direct",
        }
    }

    pub fn parse(s: &str) -> Result<Method> {
        match s {
            "winograd" => Ok(Method::Winograd),
            "regular_fft" => Ok(Method::RegularFft),
            "gauss_fft" => Ok(Method::GaussFft),
            "direct" => Ok(Method::Direct),
            other => Err(Error::InvalidArgument(format!(
                "unknown method {other:?}; expected winograd, regular_fft, gauss_fft or direct"
            ))),
        }
    }
}

impl std::fmt::Display for Method {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Derives the overlap-add tile geometry for output-tile edge `m`.
pub fn tile_geometry(layer: &LayerShape, m: u64) -> Result<TilePlan> {
    layer.validate()?;
    if m == 0 {
        return Err(Error::InvalidArgument("m must be >= 1".into()));
    }
    let t = m + layer.r - 1;
    let per_row = layer.out_edge().div_ceil(m);
    Ok(TilePlan {
        m,
        t,
        n_tiles: per_row * per_row,
        n_cplx: t * (t + 1).div_ceil(2),
    })
}

/// The ten cataloged machines, bandwidth and peak normalized to bytes/s and
/// FLOP/s. Duplicate CPU models are disambiguated by their CMR label.
pub fn machine_catalog() -> Vec<MachineSpec> {
    let rows: [(&str, f64, f64, u64, f64); 10] = [
        ("Xeon Phi 7210@11", 4506.0, 409.6, 512, 11.0),
        ("i7-6950X@14.06", 960.0, 68.3, 1024, 14.06),
        ("i9-7900X@22", 2122.0, 96.0, 1024, 22.0),
        ("Xeon Gold 6148@24", 3072.0, 128.0, 1024, 24.0),
        ("E7-8890v3@28.13", 1440.0, 51.2, 256, 28.13),
        ("Xeon Platinum 8124M@30", 3456.0, 115.2, 1024, 30.0),
        ("i9-7900X@31", 2122.0, 68.3, 1024, 31.0),
        // 48-core configuration: 4506 GFLOPS is the 64-core figure; scaled by
        // 48/64 so the cataloged CMR of 33 holds.
        ("Xeon Phi 7210@33", 3379.5, 102.4, 512, 33.0),
        // Cataloged at CMR 39.11 = 4506/115.2; the bandwidth here is the
        // DDR4-2400 figure, not the 102.4 GB/s of the row above.
        ("Xeon Phi 7210@39.11", 4506.0, 115.2, 512, 39.11),
        ("i9-7900X@41.25", 2122.0, 51.2, 1024, 41.25),
    ];
    rows.iter()
        .map(|&(name, gflops, gbps, cache_kb, cmr)| {
            MachineSpec::with_cmr_label(name, gflops * 1e9, gbps * 1e9, cache_kb * 1024, cmr)
                .expect("catalog rows satisfy the CMR invariant")
        })
        .collect()
}

/// Looks up a cataloged machine by its full name (`"i9-7900X@22"`). A bare
/// CPU name is accepted when it is unambiguous.
pub fn find_machine(name: &str) -> Result<MachineSpec> {
    let catalog = machine_catalog();
    if let Some(spec) = catalog.iter().find(|m| m.name == name) {
        return Ok(spec.clone());
    }
    let prefix: Vec<&MachineSpec> = catalog
        .iter()
        .filter(|m| m.name.split('@').next() == Some(name))
        .collect();
    match prefix.len() {
        1 => Ok(prefix[0].clone()),
        0 => Err(Error::InvalidMachine(format!(
            "unknown machine {name:?}; cataloged: {}",
            catalog
                .iter()
                .map(|m| m.name.as_str())
                .collect::<Vec<_>>()
                .join(", ")
        ))),
        _ => Err(Error::InvalidMachine(format!(
            "machine name {name:?} is ambiguous; candidates: {}",
            prefix
                .iter()
                .map(|m| m.name.as_str())
                .collect::<Vec<_>>()
                .join(", ")
        ))),
    }
}
