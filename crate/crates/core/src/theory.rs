//! Order-level risk envelopes, SNR phase thresholds and parameter-space checks.
//!
//! All rate constants are 1: the formulas describe how risk scales with
//! dimensions and signal strength, not its exact value. Signal strengths are
//! squared and normalised by the noise variance `τ²`.

use std::fmt::Write as _;
use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::SinThetaNorm;
use crate::model::{switch_profile, SignalSpec, UnsharedGeometry, VectorKind};

/// Inputs to [`rate_upper`]. `strength_sq` is `γ²` (or `t²`).
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct RateQuery {
    pub n: usize,
    pub p_total: usize,
    pub strength_sq: f64,
    pub r: usize,
    pub norm: SinThetaNorm,
}

impl RateQuery {
    pub fn new(n: usize, p_total: usize, strength_sq: f64, r: usize, norm: SinThetaNorm) -> Result<Self> {
        if n == 0 || p_total == 0 || r == 0 {
            return Err(Error::contract("dimensions and rank must be positive"));
        }
        if !(strength_sq > 0.0) {
            return Err(Error::contract(format!("strength must be positive, got {strength_sq}")));
        }
        Ok(RateQuery {
            n,
            p_total,
            strength_sq,
            r,
            norm,
        })
    }
}

/// `n(s + p)/s² ∧ 1` (spectral) or `n r (s + p)/s² ∧ r` (Frobenius²), with `s = strength_sq`.
pub fn rate_upper(q: &RateQuery) -> f64 {
    let s = q.strength_sq;
    let base = q.n as f64 * (s + q.p_total as f64) / (s * s);
    match q.norm {
        SinThetaNorm::Spectral => base.min(1.0),
        SinThetaNorm::FrobeniusSquared => {
            let r = q.r as f64;
            (r * base).min(r)
        }
    }
}

/// Critical SNRs: `sqrt(n(n + p_i))` for each matrix alone and `sqrt(n(n + p_1 + p_2))` stacked.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SnrThresholds {
    pub individual_1: f64,
    pub individual_2: f64,
    pub stacked: f64,
}

pub fn snr_thresholds(n: usize, p1: usize, p2: usize) -> SnrThresholds {
    let (n, p1, p2) = (n as f64, p1 as f64, p2 as f64);
    SnrThresholds {
        individual_1: (n * (n + p1)).sqrt(),
        individual_2: (n * (n + p2)).sqrt(),
        stacked: (n * (n + p1 + p2)).sqrt(),
    }
}

/// Regions of the phase diagram, ordered from least to most favourable.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PhaseRegion {
    Impossible,
    X1Consistent,
    X2Consistent,
    StackConsistent,
    StackOptimal,
}

impl PhaseRegion {
    /// Position in the ordering impossible < individual < stack < stack-optimal.
    pub fn rank(self) -> u8 {
        match self {
            PhaseRegion::Impossible => 0,
            PhaseRegion::X1Consistent | PhaseRegion::X2Consistent => 1,
            PhaseRegion::StackConsistent => 2,
            PhaseRegion::StackOptimal => 3,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            PhaseRegion::Impossible => "impossible",
            PhaseRegion::X1Consistent => "x1_consistent",
            PhaseRegion::X2Consistent => "x2_consistent",
            PhaseRegion::StackConsistent => "stack_consistent",
            PhaseRegion::StackOptimal => "stack_optimal",
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct PhaseConfig {
    /// `p_1 ≍ p_2` is read as `max(p)/min(p) ≤ p_ratio`.
    pub p_ratio: f64,
}

impl Default for PhaseConfig {
    fn default() -> Self {
        PhaseConfig { p_ratio: 4.0 }
    }
}

/// Richest region label together with every condition that holds.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct PhaseClassification {
    pub region: PhaseRegion,
    pub x1_consistent: bool,
    pub x2_consistent: bool,
    pub stack_consistent: bool,
    pub stack_optimal: bool,
}

/// Classifies `(snr1, snr2, snr_stacked)` against the critical thresholds.
///
/// Stacking is optimal once consistent if the column dimensions are
/// comparable or `sqrt(snr_stacked) ≥ p_1 + p_2`. When both individual
/// estimators work but the stack does not, `X1Consistent` is reported.
pub fn classify_phase(
    n: usize,
    p1: usize,
    p2: usize,
    snr1: f64,
    snr2: f64,
    snr_stacked: f64,
    cfg: &PhaseConfig,
) -> Result<PhaseClassification> {
    if snr_stacked < snr1.max(snr2) {
        return Err(Error::contract(format!(
            "stacked SNR {snr_stacked} is below an individual SNR ({snr1}, {snr2})"
        )));
    }
    let t = snr_thresholds(n, p1, p2);
    let x1 = snr1 > t.individual_1;
    let x2 = snr2 > t.individual_2;
    let stack = snr_stacked > t.stacked;
    let ratio = p1.max(p2) as f64 / p1.min(p2).max(1) as f64;
    let optimal = stack && (ratio <= cfg.p_ratio || snr_stacked.sqrt() >= (p1 + p2) as f64);
    let region = if optimal {
        PhaseRegion::StackOptimal
    } else if stack {
        PhaseRegion::StackConsistent
    } else if x1 {
        PhaseRegion::X1Consistent
    } else if x2 {
        PhaseRegion::X2Consistent
    } else {
        PhaseRegion::Impossible
    };
    Ok(PhaseClassification {
        region,
        x1_consistent: x1,
        x2_consistent: x2,
        stack_consistent: stack,
        stack_optimal: optimal,
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct PhasePoint {
    pub snr1: f64,
    pub snr2: f64,
    pub region: PhaseRegion,
}

/// `steps` evenly spaced values from `min` to `max` inclusive.
fn linspace(min: f64, max: f64, steps: usize) -> Vec<f64> {
    if steps == 1 {
        return vec![min];
    }
    (0..steps)
        .map(|i| min + (max - min) * i as f64 / (steps - 1) as f64)
        .collect()
}

/// Classifies every `(snr1, snr2)` on a square grid, taking `snr_stacked = snr1 + snr2`.
/// Rows run over `snr2`, columns over `snr1`.
pub fn phase_grid(
    n: usize,
    p1: usize,
    p2: usize,
    min: f64,
    max: f64,
    steps: usize,
    cfg: &PhaseConfig,
) -> Result<Vec<PhasePoint>> {
    if steps == 0 || !(min >= 0.0) || !(max >= min) {
        return Err(Error::contract(format!("invalid grid {min}:{max}:{steps}")));
    }
    let axis = linspace(min, max, steps);
    let mut out = Vec::with_capacity(steps * steps);
    for &snr2 in &axis {
        for &snr1 in &axis {
            let c = classify_phase(n, p1, p2, snr1, snr2, snr1 + snr2, cfg)?;
            out.push(PhasePoint {
                snr1,
                snr2,
                region: c.region,
            });
        }
    }
    Ok(out)
}

pub fn write_phase_csv<W: Write>(points: &[PhasePoint], w: W) -> Result<()> {
    let mut wtr = csv::Writer::from_writer(w);
    for p in points {
        wtr.serialize(p).map_err(|e| Error::Config(e.to_string()))?;
    }
    wtr.flush()?;
    Ok(())
}

fn region_colour(r: PhaseRegion) -> &'static str {
    match r {
        PhaseRegion::Impossible => "#d9d9d9",
        PhaseRegion::X1Consistent => "#9ecae1",
        PhaseRegion::X2Consistent => "#fdae6b",
        PhaseRegion::StackConsistent => "#a1d99b",
        PhaseRegion::StackOptimal => "#31a354",
    }
}

/// Minimal SVG heatmap of a grid from [`phase_grid`]: `snr1` left to right,
/// `snr2` bottom to top, with a legend.
pub fn render_phase_svg(points: &[PhasePoint]) -> Result<String> {
    let steps = (points.len() as f64).sqrt().round() as usize;
    if steps == 0 || steps * steps != points.len() {
        return Err(Error::contract("phase grid must be square and non-empty"));
    }
    let cell = (400 / steps).max(2);
    let side = cell * steps;
    let (margin, legend) = (40, 170);
    let mut svg = String::new();
    let _ = writeln!(
        svg,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{}" height="{}" font-family="sans-serif" font-size="11">"#,
        side + margin + legend,
        side + 2 * margin
    );
    for (idx, p) in points.iter().enumerate() {
        let (row, col) = (idx / steps, idx % steps);
        let x = margin + col * cell;
        let y = margin + (steps - 1 - row) * cell;
        let _ = writeln!(
            svg,
            r#"<rect x="{x}" y="{y}" width="{cell}" height="{cell}" fill="{}"/>"#,
            region_colour(p.region)
        );
    }
    let (lo, hi) = (points[0].snr1, points[points.len() - 1].snr1);
    let _ = writeln!(svg, r#"<text x="{margin}" y="{}">{lo:.3}</text>"#, side + margin + 15);
    let _ = writeln!(
        svg,
        r#"<text x="{}" y="{}" text-anchor="end">{hi:.3}</text>"#,
        side + margin,
        side + margin + 15
    );
    let _ = writeln!(
        svg,
        r#"<text x="{}" y="{}" text-anchor="middle">SNR(X1)</text>"#,
        margin + side / 2,
        side + margin + 30
    );
    let _ = writeln!(
        svg,
        r#"<text x="12" y="{}" transform="rotate(-90 12 {})" text-anchor="middle">SNR(X2)</text>"#,
        margin + side / 2,
        margin + side / 2
    );
    let regions = [
        PhaseRegion::Impossible,
        PhaseRegion::X1Consistent,
        PhaseRegion::X2Consistent,
        PhaseRegion::StackConsistent,
        PhaseRegion::StackOptimal,
    ];
    for (i, r) in regions.iter().enumerate() {
        let x = side + margin + 15;
        let y = margin + i * 20;
        let _ = writeln!(
            svg,
            r#"<rect x="{x}" y="{y}" width="12" height="12" fill="{}"/><text x="{}" y="{}">{}</text>"#,
            region_colour(*r),
            x + 18,
            y + 10,
            r.as_str()
        );
    }
    svg.push_str("</svg>\n");
    Ok(svg)
}

/// Parameter spaces whose defining inequalities [`space_membership`] checks.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ParameterSpace {
    /// Fully shared, minimum combined value² at least `γ²`.
    F,
    /// Orthogonal unshared parts, relative gaps above `c·σ²_{s+1}`, minimum gap at least `t²`.
    H,
    /// Weak unshared signals: ordering condition with `c₁` and `G₁ ≥ t²`.
    H1,
    /// Strong unshared signals: ordering condition with `c₁` and `G₂ ≥ t²`.
    H2,
    /// Like `H` but the unshared parts may overlap.
    S,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct MembershipParams {
    pub r: usize,
    /// `γ²` for `F`, `t²` otherwise.
    pub strength_sq: f64,
    pub gap_constant: f64,
    pub scenario_constant: f64,
}

impl MembershipParams {
    pub fn new(r: usize, strength_sq: f64) -> Self {
        MembershipParams {
            r,
            strength_sq,
            gap_constant: 0.1,
            scenario_constant: 0.9,
        }
    }
}

/// One failed inequality `lhs relation rhs`, with both sides evaluated.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Violation {
    pub condition: String,
    pub lhs: f64,
    pub rhs: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Membership {
    pub member: bool,
    pub violations: Vec<Violation>,
}

struct Checker(Vec<Violation>);

impl Checker {
    fn require(&mut self, ok: bool, condition: impl Into<String>, lhs: f64, rhs: f64) {
        if !ok {
            self.0.push(Violation {
                condition: condition.into(),
                lhs,
                rhs,
            });
        }
    }
}

/// Evaluates every defining inequality of `space` on the noiseless signal described by `spec`.
pub fn space_membership(spec: &SignalSpec, space: ParameterSpace, params: &MembershipParams) -> Result<Membership> {
    spec.validate()?;
    let mut c = Checker(Vec::new());
    let r = spec.shared_count();
    c.require(r == params.r, "shared rank == r", r as f64, params.r as f64);
    let orthogonal = matches!(spec.unshared_geometry, UnsharedGeometry::Orthogonal);
    if matches!(space, ParameterSpace::H | ParameterSpace::H1 | ParameterSpace::H2) {
        c.require(orthogonal, "unshared subspaces mutually orthogonal", 0.0, 0.0);
    }
    let combined_sq: Vec<f64> = spec
        .shared_labels()
        .map(|l| {
            (1..=spec.k)
                .filter_map(|i| spec.value(i, l))
                .map(|v| v * v)
                .sum::<f64>()
        })
        .collect();
    let min_combined = combined_sq.iter().copied().fold(f64::INFINITY, f64::min);
    let max_combined = combined_sq.iter().copied().fold(0.0, f64::max);
    let unshared_sq = |i: usize| -> Vec<f64> {
        spec.unshared_labels(i)
            .map(|l| spec.value(i, l).unwrap().powi(2))
            .collect()
    };
    let max_unshared = (1..=spec.k).flat_map(unshared_sq).fold(0.0, f64::max);
    let t2 = params.strength_sq;

    match space {
        ParameterSpace::F => {
            let unshared = spec.vectors.iter().filter(|v| v.kind == VectorKind::Unshared).count();
            c.require(unshared == 0, "no unshared vectors", unshared as f64, 0.0);
            c.require(min_combined >= t2, "min combined shared value² >= γ²", min_combined, t2);
        }
        ParameterSpace::H | ParameterSpace::S => {
            let profile = switch_profile(spec)?;
            let values = &profile.stacked_values;
            for g in profile.gaps.iter().filter(|g| !g.terminal) {
                let rhs = params.gap_constant * values[g.position].powi(2);
                c.require(
                    g.gap_sq > rhs,
                    format!("gap at switch {} > c·σ²_{{s+1}}", g.position),
                    g.gap_sq,
                    rhs,
                );
            }
            let min_gap = profile.min_gap_sq.unwrap_or(f64::INFINITY);
            c.require(min_gap >= t2, "min gap >= t²", min_gap, t2);
        }
        ParameterSpace::H1 => {
            let rhs = params.scenario_constant * min_combined;
            c.require(
                max_unshared < rhs,
                "max unshared value² < c₁·min combined shared value²",
                max_unshared,
                rhs,
            );
            let profile = switch_profile(spec)?;
            match profile.g1 {
                Some(g1) => c.require(g1 >= t2, "G₁ >= t²", g1, t2),
                None => c.require(false, "shared vectors lead the stacked order", 0.0, 0.0),
            }
        }
        ParameterSpace::H2 => {
            let min_of = |i: usize| unshared_sq(i).into_iter().fold(f64::INFINITY, f64::min);
            let (m1, m2) = if spec.k == 2 {
                (min_of(1), min_of(2))
            } else {
                (0.0, 0.0)
            };
            c.require(spec.k == 2, "exactly two matrices", spec.k as f64, 2.0);
            let rhs = params.scenario_constant * m1.min(m2);
            c.require(
                max_combined < rhs,
                "max combined shared value² < c₁·(σ²_{d1}(X1) ∧ σ²_{d2}(X2))",
                max_combined,
                rhs,
            );
            let profile = switch_profile(spec)?;
            match profile.g2 {
                Some(g2) => c.require(g2 >= t2, "G₂ >= t²", g2, t2),
                None => c.require(
                    false,
                    "unshared vectors of both matrices lead the stacked order",
                    0.0,
                    0.0,
                ),
            }
        }
    }

    let violations = c.0;
    Ok(Membership {
        member: violations.is_empty(),
        violations,
    })
}
