//! Simulation designs: fully shared signals, individually non-identifiable
//! shared vectors, and interleaved shared/unshared layouts for tracing.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::SignalSpec;

/// `(n, p1, p2, α, β)`.
pub type DesignRow = (usize, usize, usize, f64, f64);

/// Fully shared rank-3 signals with `Σ_1 = diag(α, α/2, α/4)` and `Σ_2 = diag(β, β/2, β/4)`.
pub const TABLE1_ROWS: &[DesignRow] = &[
    (10, 20, 20, 50.0, 50.0),
    (10, 20, 20, 37.0, 60.0),
    (10, 20, 20, 10.0, 70.0),
    (20, 300, 400, 100.0, 100.0),
    (20, 300, 400, 74.0, 120.0),
    (20, 300, 400, 20.0, 140.0),
    (10, 20, 300, 50.0, 50.0),
    (10, 20, 300, 37.0, 60.0),
    (10, 20, 300, 60.0, 37.0),
    (10, 20, 300, 10.0, 70.0),
    (10, 20, 300, 70.0, 10.0),
    (20, 50, 500, 100.0, 100.0),
    (20, 50, 500, 74.0, 120.0),
    (20, 50, 500, 120.0, 74.0),
    (20, 50, 500, 20.0, 140.0),
    (20, 50, 500, 140.0, 20.0),
];

/// `X_1 = (u u_1) diag(α, α) V_1ᵀ`, `X_2 = (u u_2) diag(β, β) V_2ᵀ`: the shared
/// vector ties with an unshared one inside each matrix. The last two rows are
/// the very-high-signal follow-up.
pub const TABLE2_ROWS: &[DesignRow] = &[
    (10, 100, 100, 10.0, 15.0),
    (10, 100, 100, 20.0, 20.0),
    (10, 100, 100, 50.0, 60.0),
    (20, 1000, 1000, 10.0, 15.0),
    (20, 1000, 1000, 20.0, 20.0),
    (20, 1000, 1000, 50.0, 60.0),
    (10, 100, 500, 10.0, 15.0),
    (10, 100, 500, 20.0, 20.0),
    (10, 100, 500, 50.0, 60.0),
    (20, 1000, 2000, 10.0, 15.0),
    (20, 1000, 2000, 20.0, 20.0),
    (20, 1000, 2000, 50.0, 60.0),
    (10, 100, 100, 5000.0, 5000.0),
    (10, 100, 100, 10000.0, 10000.0),
];

/// Tracing layouts, listed from the largest stacked singular value down:
/// `S` shared, `1` unshared in `X_1`, `2` unshared in `X_2`.
pub const TRACE_LAYOUTS: [&str; 3] = ["221S", "121S2S", "2121S2S1S"];

/// Minimum stacked gaps examined for each layout.
pub const TRACE_GAPS: [[f64; 5]; 3] = [
    [1.0, 3.0, 5.0, 7.0, 10.0],
    [1.0, 5.0, 10.0, 15.0, 20.0],
    [1.0, 5.0, 10.0, 20.0, 25.0],
];

/// Smallest stacked singular value in the tracing designs.
pub const TRACE_BASE: f64 = 20.0;
pub const TRACE_N: usize = 50;
pub const TRACE_P: usize = 100;

/// A built-in design, rows numbered from 1.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "preset", rename_all = "snake_case")]
pub enum Design {
    Table1 {
        row: usize,
    },
    Table2 {
        row: usize,
    },
    /// Rows 1..=15 run over the three layouts, five gaps each.
    Table3 {
        row: usize,
    },
    Custom {
        spec: SignalSpec,
    },
}

impl Design {
    pub fn preset_name(&self) -> &'static str {
        match self {
            Design::Table1 { .. } => "table1",
            Design::Table2 { .. } => "table2",
            Design::Table3 { .. } => "table3",
            Design::Custom { .. } => "custom",
        }
    }

    /// Number of rows a preset offers.
    pub fn row_count(preset: &str) -> Option<usize> {
        match preset {
            "table1" => Some(TABLE1_ROWS.len()),
            "table2" => Some(TABLE2_ROWS.len()),
            "table3" => Some(TRACE_LAYOUTS.len() * 5),
            _ => None,
        }
    }

    pub fn from_preset(preset: &str, row: usize) -> Result<Self> {
        let count = Self::row_count(preset).ok_or_else(|| {
            Error::Config(format!(
                "unknown preset `{preset}`; valid presets: table1, table2, table3"
            ))
        })?;
        if row == 0 || row > count {
            return Err(Error::Config(format!(
                "row {row} is not valid for {preset}; valid rows: 1..={count}\n{}",
                Self::describe_rows(preset)
            )));
        }
        Ok(match preset {
            "table1" => Design::Table1 { row },
            "table2" => Design::Table2 { row },
            _ => Design::Table3 { row },
        })
    }

    fn describe_rows(preset: &str) -> String {
        let rows: Vec<String> = match preset {
            "table1" => TABLE1_ROWS.iter().enumerate().map(|(i, r)| fmt_row(i, r)).collect(),
            "table2" => TABLE2_ROWS.iter().enumerate().map(|(i, r)| fmt_row(i, r)).collect(),
            _ => (0..15)
                .map(|i| {
                    format!(
                        "  {}: setting {}, min gap {}",
                        i + 1,
                        i / 5 + 1,
                        TRACE_GAPS[i / 5][i % 5]
                    )
                })
                .collect(),
        };
        rows.join("\n")
    }

    /// Signal spec for this design; the frame seed is replaced per trial.
    pub fn spec(&self) -> Result<SignalSpec> {
        match self {
            Design::Table1 { row } => {
                let (n, p1, p2, a, b) = lookup(TABLE1_ROWS, *row, "table1")?;
                SignalSpec::builder(n, vec![p1, p2])
                    .shared("u1", &[a, b])
                    .shared("u2", &[a / 2.0, b / 2.0])
                    .shared("u3", &[a / 4.0, b / 4.0])
                    .build()
            }
            Design::Table2 { row } => {
                let (n, p1, p2, a, b) = lookup(TABLE2_ROWS, *row, "table2")?;
                SignalSpec::builder(n, vec![p1, p2])
                    .shared("u", &[a, b])
                    .unshared("u1", 1, a)
                    .unshared("u2", 2, b)
                    .build()
            }
            Design::Table3 { row } => {
                if *row == 0 || *row > 15 {
                    return Err(Error::Config(format!("table3 row {row} outside 1..=15")));
                }
                let setting = (row - 1) / 5 + 1;
                trace_spec(setting, TRACE_GAPS[setting - 1][(row - 1) % 5], TRACE_BASE)
            }
            Design::Custom { spec } => {
                spec.validate()?;
                Ok(spec.clone())
            }
        }
    }

    /// Whether the design scores tracing success rather than subspace loss.
    pub fn is_tracing(&self) -> bool {
        matches!(self, Design::Table3 { .. })
    }
}

fn fmt_row(i: usize, r: &DesignRow) -> String {
    format!(
        "  {}: (n,p1,p2)=({},{},{}), (alpha,beta)=({},{})",
        i + 1,
        r.0,
        r.1,
        r.2,
        r.3,
        r.4
    )
}

fn lookup(rows: &[DesignRow], row: usize, name: &str) -> Result<DesignRow> {
    row.checked_sub(1)
        .and_then(|i| rows.get(i))
        .copied()
        .ok_or_else(|| Error::Config(format!("{name} row {row} outside 1..={}", rows.len())))
}

/// Tracing design for layout `setting` (1-based). Stacked singular values are
/// equally spaced, `base + (m − 1 − j)·gap` for position `j` (0-based, top
/// down), so every consecutive gap equals `gap` and the smallest value is
/// `base`. Shared vectors split their stacked value evenly between the two
/// matrices; all left vectors are mutually orthogonal.
pub fn trace_spec(setting: usize, gap: f64, base: f64) -> Result<SignalSpec> {
    let layout = TRACE_LAYOUTS
        .get(setting.wrapping_sub(1))
        .ok_or_else(|| Error::Config(format!("tracing setting {setting} outside 1..=3")))?;
    if !(gap > 0.0) || !(base > 0.0) {
        return Err(Error::Config("gap and base must be positive".into()));
    }
    let m = layout.len();
    let mut b = SignalSpec::builder(TRACE_N, vec![TRACE_P, TRACE_P]);
    let (mut s, mut u) = (0, 0);
    for (j, t) in layout.chars().enumerate() {
        let value = base + (m - 1 - j) as f64 * gap;
        b = match t {
            'S' => {
                s += 1;
                let half = value / 2f64.sqrt();
                b.shared(&format!("u{s}"), &[half, half])
            }
            '1' | '2' => {
                u += 1;
                b.unshared(&format!("u{u}*"), t.to_digit(10).unwrap() as usize, value)
            }
            _ => unreachable!("layouts use S, 1 and 2"),
        };
    }
    b.build()
}
