//! Per-tile transform cost tables: FLOP counts and arithmetic intensities for
//! every supported (method, m, r, stage).
//!
//! The tables are the single source of truth for transform costs; nothing in
//! the planner re-derives them. They ship as an embedded CSV resource with
//! columns `method,m,r,stage,flops,ai`, so they can be audited line by line
//! and swapped out via the `CONV_ROOFLINE_TABLES` environment variable.
//! Combinations absent from the resource (out-of-range tiles) are absent from
//! the lookup, never zero.

use std::collections::BTreeMap;
use std::sync::OnceLock;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::Method;

/// Environment variable naming a replacement CSV resource.
pub const TABLES_ENV: &str = "CONV_ROOFLINE_TABLES";

const EMBEDDED_CSV: &str = include_str!("tables/transform_costs.csv");

/// The three transform stages a table row can describe. The element-wise
/// stage has closed-form costs and no table entries.
#[derive(
    Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize,
)]
#[serde(rename_all = "snake_case")]
pub enum TransformStage {
    Input,
    Kernel,
    Output,
}

impl TransformStage {
    pub const ALL: [TransformStage; 3] = [
        TransformStage::Input,
        TransformStage::Kernel,
        TransformStage::Output,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            TransformStage::Input => "input",
            TransformStage::Kernel => "kernel",
            TransformStage::Output => "output",
        }
    }
}

impl std::fmt::Display for TransformStage {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

/// One table cell: per-tile transform FLOPs and arithmetic intensity.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TransformCostEntry {
    pub method: Method,
    pub m: u64,
    pub r: u64,
    pub stage: TransformStage,
    pub flops: u64,
    pub ai: f64,
}

#[derive(Debug, Deserialize)]
struct CsvRow {
    method: String,
    m: u64,
    r: u64,
    stage: String,
    flops: u64,
    ai: f64,
}

/// Loaded, validated cost tables.
#[derive(Debug)]
pub struct CostTables {
    entries: BTreeMap<(Method, u64, u64, TransformStage), TransformCostEntry>,
    csv_text: String,
}

impl CostTables {
    pub fn from_csv_str(text: &str) -> Result<Self> {
        let mut entries = BTreeMap::new();
        let mut reader = csv::Reader::from_reader(text.as_bytes());
        for (line, row) in reader.deserialize::<CsvRow>().enumerate() {
            let row = row.map_err(|e| Error::MalformedTable(format!("row {}: {e}", line + 2)))?;
            let method = Method::parse(&row.method)
                .map_err(|e| Error::MalformedTable(format!("row {}: {e}", line + 2)))?;
            let stage = match row.stage.as_str() {
                "input" => TransformStage::Input,
                "kernel" => TransformStage::Kernel,
                "output" => TransformStage::Output,
                other => {
                    return Err(Error::MalformedTable(format!(
                        "row {}: unknown stage {other:?}",
                        line + 2
                    )))
                }
            };
            if row.flops == 0 || !(row.ai > 0.0) {
                return Err(Error::MalformedTable(format!(
                    "row {}: flops and ai must be positive",
                    line + 2
                )));
            }
            let entry = TransformCostEntry {
                method,
                m: row.m,
                r: row.r,
                stage,
                flops: row.flops,
                ai: row.ai,
            };
            if entries.insert((method, row.m, row.r, stage), entry).is_some() {
                return Err(Error::MalformedTable(format!(
                    "duplicate entry for {method} m={} r={} {stage}",
                    row.m, row.r
                )));
            }
        }
        if entries.is_empty() {
            return Err(Error::MalformedTable("no rows".into()));
        }
        Ok(CostTables {
            entries,
            csv_text: text.to_string(),
        })
    }

    pub fn from_path(path: &std::path::Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::io(format!("reading cost tables {}", path.display()), e))?;
        CostTables::from_csv_str(&text)
    }

    /// The embedded resource, ignoring any environment override.
    pub fn embedded() -> Self {
        CostTables::from_csv_str(EMBEDDED_CSV).expect("embedded tables parse")
    }

    /// The process-wide active tables: the file named by `CONV_ROOFLINE_TABLES`
    /// if set, otherwise the embedded resource. Loaded once.
    pub fn active() -> &'static CostTables {
        static ACTIVE: OnceLock<CostTables> = OnceLock::new();
        ACTIVE.get_or_init(|| match std::env::var_os(TABLES_ENV) {
            Some(path) => CostTables::from_path(std::path::Path::new(&path))
                .unwrap_or_else(|e| panic!("loading {TABLES_ENV} override: {e}")),
            None => CostTables::embedded(),
        })
    }

    /// Raw CSV text of this table set, as served by `dump-tables`.
    pub fn csv_text(&self) -> &str {
        &self.csv_text
    }

    pub fn iter(&self) -> impl Iterator<Item = &TransformCostEntry> {
        self.entries.values()
    }

    pub fn get(
        &self,
        method: Method,
        m: u64,
        r: u64,
        stage: TransformStage,
    ) -> Result<TransformCostEntry> {
        if method == Method::Direct {
            return Err(Error::UnsupportedMethod {
                method,
                detail: "the direct method has no transform cost tables".into(),
            });
        }
        self.entries
            .get(&(method, m, r, stage))
            .copied()
            .ok_or_else(|| Error::MissingTableEntry {
                method,
                m,
                r,
                valid: self.describe_range(method, r),
            })
    }

    /// All table-covered m for (method, r), ascending. For Winograd the tile
    /// edge is additionally capped at `max_winograd_tile`; FFT tile sizes are
    /// unrestricted beyond table coverage.
    pub fn search_space(&self, method: Method, r: u64, max_winograd_tile: u64) -> Result<Vec<u64>> {
        if method == Method::Direct {
            return Err(Error::UnsupportedMethod {
                method,
                detail: "the planner never searches the direct method".into(),
            });
        }
        if r < 2 {
            return Err(Error::InvalidArgument(format!(
                "kernel edge r={r} out of range; tables start at r=2"
            )));
        }
        if method == Method::Winograd && !matches!(max_winograd_tile, 6 | 8) {
            return Err(Error::InvalidArgument(format!(
                "max_winograd_tile must be 6 or 8, got {max_winograd_tile}"
            )));
        }
        let ms: Vec<u64> = self
            .entries
            .keys()
            .filter(|&&(me, m, rr, stage)| {
                me == method
                    && rr == r
                    && stage == TransformStage::Input
                    && (method != Method::Winograd || m + r - 1 <= max_winograd_tile)
            })
            .map(|&(_, m, _, _)| m)
            .collect();
        if ms.is_empty() {
            return Err(Error::EmptySearchSpace {
                method,
                r,
                detail: self.describe_range(method, r),
            });
        }
        Ok(ms)
    }

    fn describe_range(&self, method: Method, r: u64) -> String {
        let ms: Vec<u64> = self
            .entries
            .keys()
            .filter(|&&(me, _, rr, stage)| {
                me == method && rr == r && stage == TransformStage::Input
            })
            .map(|&(_, m, _, _)| m)
            .collect();
        if let (Some(lo), Some(hi)) = (ms.first(), ms.last()) {
            return format!("{method} tables cover m={lo}..={hi} at r={r}");
        }
        let rs: Vec<u64> = self
            .entries
            .keys()
            .filter(|&&(me, _, _, _)| me == method)
            .map(|&(_, _, rr, _)| rr)
            .collect();
        match (rs.iter().min(), rs.iter().max()) {
            (Some(lo), Some(hi)) => format!("{method} tables cover r={lo}..={hi}; r={r} is out"),
            _ => format!("no {method} tables loaded"),
        }
    }
}

/// Looks up one cell of the active tables.
pub fn transform_cost(
    method: Method,
    m: u64,
    r: u64,
    stage: TransformStage,
) -> Result<TransformCostEntry> {
    CostTables::active().get(method, m, r, stage)
}

/// Search space of output-tile sizes for `best_tile`, from the active tables.
pub fn tile_search_space(method: Method, r: u64, max_winograd_tile: u64) -> Result<Vec<u64>> {
    CostTables::active().search_space(method, r, max_winograd_tile)
}

/// Per-(m, r) FLOP differences between the Gauss-FFT and regular-FFT tables.
///
/// The expected pattern is (t², 2t², 2t²) for (input, kernel, output): one
/// extra addition per spectrum point on the input side, and two extra
/// operations per point on the kernel and output sides. Entries that deviate
/// are flagged rather than silently accepted.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct GaussDelta {
    pub m: u64,
    pub r: u64,
    pub t: u64,
    pub input_delta: i64,
    pub kernel_delta: i64,
    pub output_delta: i64,
    pub matches_pattern: bool,
}

/// Compares the two FFT tables over every (m, r) present in both.
pub fn gauss_table_consistency() -> Vec<GaussDelta> {
    let tables = CostTables::active();
    let mut out = Vec::new();
    for entry in tables.iter() {
        if entry.method != Method::RegularFft || entry.stage != TransformStage::Input {
            continue;
        }
        let (m, r) = (entry.m, entry.r);
        let t = m + r - 1;
        let cell = |method, stage| tables.get(method, m, r, stage).map(|e| e.flops as i64);
        let deltas: Option<Vec<i64>> = TransformStage::ALL
            .iter()
            .map(|&stage| {
                Some(cell(Method::GaussFft, stage).ok()? - cell(Method::RegularFft, stage).ok()?)
            })
            .collect();
        let Some(deltas) = deltas else { continue };
        let tt = (t * t) as i64;
        out.push(GaussDelta {
            m,
            r,
            t,
            input_delta: deltas[0],
            kernel_delta: deltas[1],
            output_delta: deltas[2],
            matches_pattern: deltas == [tt, 2 * tt, 2 * tt],
        });
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn pinned_cells() {
        let e = transform_cost(Method::Winograd, 2, 3, TransformStage::Input).unwrap();
        assert_eq!(e.flops, 32);
        assert_eq!(e.ai, 0.25);
        let e = transform_cost(Method::RegularFft, 2, 3, TransformStage::Kernel).unwrap();
        assert_eq!(e.flops, 48);
        let e = transform_cost(Method::GaussFft, 4, 2, TransformStage::Output).unwrap();
        assert_eq!(e.flops, 274);
        let e = transform_cost(Method::Winograd, 2, 6, TransformStage::Output).unwrap();
        assert_eq!(e.ai, 2.38);
    }

    #[test]
    fn missing_entries_name_the_range() {
        let err = transform_cost(Method::Winograd, 9, 3, TransformStage::Input).unwrap_err();
        let msg = err.to_string();
        assert!(msg.contains("m=2..=6"), "{msg}");
        let err = transform_cost(Method::Winograd, 2, 9, TransformStage::Input).unwrap_err();
        assert!(err.to_string().contains("r=2..=7"), "{err}");
    }

    #[test]
    fn search_spaces() {
        assert_eq!(
            tile_search_space(Method::Winograd, 3, 6).unwrap(),
            vec![2, 3, 4]
        );
        assert_eq!(
            tile_search_space(Method::Winograd, 3, 8).unwrap(),
            vec![2, 3, 4, 5, 6]
        );
        let fft = tile_search_space(Method::RegularFft, 3, 6).unwrap();
        assert_eq!(fft, (2..=30).collect::<Vec<u64>>());
        assert!(tile_search_space(Method::Winograd, 6, 6).is_err());
        assert!(tile_search_space(Method::Winograd, 7, 8).is_ok());
        assert!(tile_search_space(Method::Winograd, 3, 7).is_err());
    }

    #[test]
    fn winograd_input_flops_depend_only_on_t() {
        let tables = CostTables::embedded();
        let mut by_t: BTreeMap<(Method, u64), u64> = BTreeMap::new();
        for e in tables.iter() {
            if e.stage != TransformStage::Input {
                continue;
            }
            let prev = by_t.insert((e.method, e.m + e.r - 1), e.flops);
            if let Some(prev) = prev {
                assert_eq!(prev, e.flops, "{} t={}", e.method, e.m + e.r - 1);
            }
        }
    }

    #[test]
    fn gauss_deltas_match_pattern() {
        let report = gauss_table_consistency();
        assert_eq!(report.len(), 165);
        assert!(report.iter().all(|d| d.matches_pattern));
        let d33 = report.iter().find(|d| (d.m, d.r) == (3, 3)).unwrap();
        assert_eq!(d33.input_delta, 25);
    }

    #[test]
    fn dashes_are_absent() {
        assert!(transform_cost(Method::Winograd, 3, 7, TransformStage::Input).is_err());
        assert!(transform_cost(Method::RegularFft, 31, 3, TransformStage::Input).is_err());
    }

    #[test]
    fn malformed_tables_rejected() {
        assert!(CostTables::from_csv_str("method,m,r,stage,flops,ai\n").is_err());
        assert!(CostTables::from_csv_str(
            "method,m,r,stage,flops,ai\nwinograd,2,3,input,0,0.25\n"
        )
        .is_err());
        assert!(CostTables::from_csv_str(
            "method,m,r,stage,flops,ai\nwinograd,2,3,input,32,0.25\nwinograd,2,3,input,32,0.25\n"
        )
        .is_err());
    }
}
