//! Dyadic frequency decomposition and Besov-type norms.
//!
//! The partition of unity is the classical one: a smooth radial cutoff
//! `chi` equal to 1 on `{|xi| <= 3/4}` and 0 outside `{|xi| < 4/3}` defines
//! the annulus bump `phi(xi) = chi(xi/2) - chi(xi)`, supported in
//! `{3/4 <= |xi| <= 8/3}`, and `sum_j phi(2^{-j} xi) = 1` for `xi != 0` by
//! telescoping. On a finite lattice only blocks `j` in `[j_min, j_max]` can
//! be nonzero; every norm report records the truncation range it used.
//!
//! Band splitting follows the hybrid-space convention: the high band is
//! `j >= j0`, the low band `j < j0`. Block `L^p` norms are computed on the
//! physical grid after an inverse transform, except `p = 2`, where the
//! coefficient sum gives the same value exactly (discrete Plancherel) and is
//! used directly.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::field::{lebesgue_norm, SpectralField};
use crate::grid::GridSpec;

/// Smooth one-sided mollifier piece: `exp(-1/t)` for `t > 0`.
fn mollifier_edge(t: f64) -> f64 {
    if t <= 0.0 {
        0.0
    } else {
        (-1.0 / t).exp()
    }
}

/// C-infinity transition: 0 for `t <= 0`, 1 for `t >= 1`.
fn transition(t: f64) -> f64 {
    let a = mollifier_edge(t);
    let b = mollifier_edge(1.0 - t);
    if a == 0.0 {
        0.0
    } else if b == 0.0 {
        1.0
    } else {
        a / (a + b)
    }
}

/// Low-pass profile: 1 on `r <= 3/4`, 0 on `r >= 4/3`.
pub fn lowpass_profile(r: f64) -> f64 {
    1.0 - transition((r - 0.75) / (4.0 / 3.0 - 0.75))
}

/// Annulus bump `phi(r) = chi(r/2) - chi(r)`, supported in `[3/4, 8/3]`.
pub fn bump_profile(r: f64) -> f64 {
    lowpass_profile(r / 2.0) - lowpass_profile(r)
}

/// Dyadic partition of the lattice-resolvable frequency range.
#[derive(Clone, Debug)]
pub struct DyadicPartition {
    grid: GridSpec,
    j_min: i32,
    j_max: i32,
}

impl DyadicPartition {
    /// Partition resolving every nonzero lattice frequency of `grid`.
    pub fn for_grid(grid: GridSpec) -> Self {
        let xi_min = grid.fundamental();
        let xi_max = grid.max_radial_wavenumber();
        // Telescoping leaves chi(2^{-j_max-1} xi) - chi(2^{-j_min} xi); the
        // range below pins the first term to 1 and the second to 0 on the
        // lattice.
        let j_min = (0.75 * xi_min).log2().floor() as i32;
        let j_max = (xi_max / 1.5).log2().ceil() as i32;
        DyadicPartition { grid, j_min, j_max }
    }

    pub fn grid(&self) -> GridSpec {
        self.grid
    }

    pub fn j_min(&self) -> i32 {
        self.j_min
    }

    pub fn j_max(&self) -> i32 {
        self.j_max
    }

    pub fn in_range(&self, j: i32) -> bool {
        j >= self.j_min && j <= self.j_max
    }

    /// Block multiplier value `phi(2^{-j} |xi|)`.
    pub fn block_weight(&self, j: i32, r: f64) -> f64 {
        bump_profile(r * 2.0f64.powi(-j))
    }

    /// Largest deviation of `sum_j phi(2^{-j}|xi|)` from 1 over nonzero
    /// lattice frequencies.
    pub fn partition_residual(&self) -> f64 {
        let mut worst = 0.0f64;
        for (_, _, xi) in self.grid.lattice() {
            let r = xi.iter().map(|&x| x * x).sum::<f64>().sqrt();
            if r == 0.0 {
                continue;
            }
            let total: f64 = (self.j_min..=self.j_max)
                .map(|j| self.block_weight(j, r))
                .sum();
            worst = worst.max((total - 1.0).abs());
        }
        worst
    }
}

/// Frequency-localized piece `Delta_j f` of a field. Out-of-range `j` gives
/// the zero field (the partition resolves nothing there).
pub fn dyadic_block(part: &DyadicPartition, f: &SpectralField, j: i32) -> SpectralField {
    assert_eq!(part.grid(), f.grid(), "partition and field grids differ");
    let mut out = f.clone();
    if !part.in_range(j) {
        out.scale(0.0);
        return out;
    }
    out.scale_modes(|xi, _| {
        let r = xi.iter().map(|&x| x * x).sum::<f64>().sqrt();
        part.block_weight(j, r)
    });
    out
}

/// Besov regularity/integrability/summation triple for `B^s_{p,r}`.
#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
pub struct BesovSpec {
    pub s: f64,
    pub p: f64,
    pub r: f64,
}

impl BesovSpec {
    pub fn new(s: f64, p: f64, r: f64) -> Result<Self> {
        if !(p > 1.0) || p.is_infinite() || p.is_nan() {
            return Err(Error::InvalidConfig(format!(
                "Besov integrability p = {p}, need 1 < p < infinity"
            )));
        }
        if !(r >= 1.0) {
            return Err(Error::InvalidConfig(format!(
                "Besov summation r = {r}, need r >= 1 (or infinity)"
            )));
        }
        Ok(BesovSpec { s, p, r })
    }
}

/// Which dyadic blocks participate in a norm.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Band {
    All,
    /// Blocks `j < j0`.
    Low { j0: i32 },
    /// Blocks `j >= j0`.
    High { j0: i32 },
}

impl Band {
    fn clamp(&self, j_min: i32, j_max: i32) -> (i32, i32) {
        match *self {
            Band::All => (j_min, j_max),
            Band::Low { j0 } => (j_min, j_max.min(j0 - 1)),
            Band::High { j0 } => (j_min.max(j0), j_max),
        }
    }
}

/// One row of a norm report: block index, raw block norm, dyadic weight.
#[derive(Clone, Copy, Debug, Serialize)]
pub struct BlockContribution {
    pub j: i32,
    pub block_norm: f64,
    pub weight: f64,
}

/// Besov norm with its per-block breakdown and the truncation range used.
#[derive(Clone, Debug, Serialize)]
pub struct NormReport {
    pub value: f64,
    pub blocks: Vec<BlockContribution>,
    pub j_range: (i32, i32),
    /// The requested band contained no resolvable blocks; the value is 0.
    pub empty_band: bool,
}

/// `L^p` norm of one dyadic block; `p = 2` via the exact coefficient sum.
pub fn block_lp_norm(part: &DyadicPartition, f: &SpectralField, j: i32, p: f64) -> Result<f64> {
    let block = dyadic_block(part, f, j);
    if p == 2.0 {
        Ok(block.l2_norm_spectral())
    } else {
        lebesgue_norm(&block, p)
    }
}

fn aggregate_lr(terms: &[f64], r: f64) -> f64 {
    if r.is_infinite() {
        terms.iter().fold(0.0f64, |acc, &t| acc.max(t))
    } else if r == 1.0 {
        terms.iter().sum()
    } else {
        terms
            .iter()
            .map(|&t| t.powf(r))
            .sum::<f64>()
            .powf(1.0 / r)
    }
}

/// Besov norm of `f` over the requested band, with block breakdown.
pub fn besov_norm_report(
    part: &DyadicPartition,
    f: &SpectralField,
    spec: BesovSpec,
    band: Band,
) -> Result<NormReport> {
    BesovSpec::new(spec.s, spec.p, spec.r)?;
    let (lo, hi) = band.clamp(part.j_min(), part.j_max());
    if lo > hi {
        return Ok(NormReport {
            value: 0.0,
            blocks: Vec::new(),
            j_range: (lo, hi),
            empty_band: true,
        });
    }
    let mut blocks = Vec::with_capacity((hi - lo + 1) as usize);
    let mut terms = Vec::with_capacity(blocks.capacity());
    for j in lo..=hi {
        let bn = block_lp_norm(part, f, j, spec.p)?;
        let w = 2.0f64.powi(j).powf(spec.s);
        blocks.push(BlockContribution {
            j,
            block_norm: bn,
            weight: w,
        });
        terms.push(w * bn);
    }
    Ok(NormReport {
        value: aggregate_lr(&terms, spec.r),
        blocks,
        j_range: (lo, hi),
        empty_band: false,
    })
}

/// Besov norm value (see [`besov_norm_report`] for the breakdown).
pub fn besov_norm(
    part: &DyadicPartition,
    f: &SpectralField,
    spec: BesovSpec,
    band: Band,
) -> Result<f64> {
    Ok(besov_norm_report(part, f, spec, band)?.value)
}

/// Two-band norm: high blocks `j >= j0` with one spec, low blocks with the
/// other.
#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
pub struct HybridBesovSpec {
    pub high: BesovSpec,
    pub low: BesovSpec,
    pub j0: i32,
}

/// Hybrid norm: `||f||^h + ||f||^l` split at `spec.j0`.
pub fn hybrid_norm(part: &DyadicPartition, f: &SpectralField, spec: HybridBesovSpec) -> Result<f64> {
    let high = besov_norm(part, f, spec.high, Band::High { j0: spec.j0 })?;
    let low = besov_norm(part, f, spec.low, Band::Low { j0: spec.j0 })?;
    Ok(high + low)
}

/// Time-sampled field trajectory with strictly increasing sample instants.
#[derive(Clone, Debug)]
pub struct FieldSeries {
    times: Vec<f64>,
    fields: Vec<SpectralField>,
}

impl FieldSeries {
    pub fn new(times: Vec<f64>, fields: Vec<SpectralField>) -> Result<Self> {
        if times.is_empty() || times.len() != fields.len() {
            return Err(Error::ShapeMismatch(format!(
                "{} times vs {} fields",
                times.len(),
                fields.len()
            )));
        }
        if times.windows(2).any(|w| w[1] <= w[0]) {
            return Err(Error::InvalidConfig(
                "sample times must be strictly increasing".into(),
            ));
        }
        let grid = fields[0].grid();
        let ncomp = fields[0].ncomp();
        for f in &fields {
            if f.grid() != grid || f.ncomp() != ncomp {
                return Err(Error::ShapeMismatch(
                    "all fields in a series must share grid and components".into(),
                ));
            }
        }
        Ok(FieldSeries { times, fields })
    }

    pub fn times(&self) -> &[f64] {
        &self.times
    }

    pub fn fields(&self) -> &[SpectralField] {
        &self.fields
    }

    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }
}

/// Time-integrated (Chemin-Lerner style) hybrid norm configuration.
#[derive(Clone, Debug)]
pub struct CheminLernerSpec {
    /// Time exponent for the high band.
    pub rho_high: f64,
    /// Time exponent for the low band.
    pub rho_low: f64,
    pub space: HybridBesovSpec,
    pub time_samples: Vec<f64>,
}

/// `L^rho` quadrature in time of per-sample block norms (trapezoid rule);
/// `rho = infinity` takes the max over samples.
fn time_lr_norm(times: &[f64], values: &[f64], rho: f64) -> Result<f64> {
    if rho.is_infinite() {
        return Ok(values.iter().fold(0.0f64, |acc, &v| acc.max(v)));
    }
    if !(rho >= 1.0) {
        return Err(Error::InvalidConfig(format!(
            "time exponent rho = {rho}, need rho >= 1 (or infinity)"
        )));
    }
    if times.len() < 2 {
        return Err(Error::DegenerateQuadrature(format!(
            "rho = {rho} needs at least two time samples, got {}",
            times.len()
        )));
    }
    let mut acc = 0.0;
    for k in 0..times.len() - 1 {
        let dt = times[k + 1] - times[k];
        acc += 0.5 * dt * (values[k].powf(rho) + values[k + 1].powf(rho));
    }
    Ok(acc.powf(1.0 / rho))
}

/// Per-band Chemin-Lerner norm: per block, `L^rho` in time of the block
/// `L^p` norm, then the dyadic `l^r` aggregation over the band.
pub fn chemin_lerner_band(
    part: &DyadicPartition,
    series: &FieldSeries,
    spec: BesovSpec,
    rho: f64,
    band: Band,
) -> Result<f64> {
    BesovSpec::new(spec.s, spec.p, spec.r)?;
    let (lo, hi) = band.clamp(part.j_min(), part.j_max());
    if lo > hi {
        return Ok(0.0);
    }
    let mut terms = Vec::with_capacity((hi - lo + 1) as usize);
    for j in lo..=hi {
        let per_sample: Vec<f64> = series
            .fields()
            .iter()
            .map(|f| block_lp_norm(part, f, j, spec.p))
            .collect::<Result<_>>()?;
        let w = 2.0f64.powi(j).powf(spec.s);
        terms.push(w * time_lr_norm(series.times(), &per_sample, rho)?);
    }
    Ok(aggregate_lr(&terms, spec.r))
}

/// Hybrid Chemin-Lerner norm, band-split at `spec.space.j0`.
pub fn chemin_lerner_norm(
    part: &DyadicPartition,
    series: &FieldSeries,
    spec: &CheminLernerSpec,
) -> Result<f64> {
    if spec.time_samples.len() != series.len()
        || spec
            .time_samples
            .iter()
            .zip(series.times())
            .any(|(a, b)| (a - b).abs() > 1e-12 * (1.0 + b.abs()))
    {
        return Err(Error::InvalidConfig(
            "series is not sampled on the spec's time instants".into(),
        ));
    }
    let j0 = spec.space.j0;
    let high = chemin_lerner_band(part, series, spec.space.high, spec.rho_high, Band::High { j0 })?;
    let low = chemin_lerner_band(part, series, spec.space.low, spec.rho_low, Band::Low { j0 })?;
    Ok(high + low)
}

/// Bernstein embedding ratio `||D_j f||_{L^q} / (2^{jd(1/p-1/q)} ||D_j f||_{L^p})`
/// for `p <= q`; bounded by a dimensional constant uniformly in `j`.
pub fn bernstein_check(
    part: &DyadicPartition,
    f: &SpectralField,
    j: i32,
    p: f64,
    q: f64,
) -> Result<f64> {
    if p > q {
        return Err(Error::InvalidConfig(format!(
            "Bernstein embedding needs p <= q, got p = {p}, q = {q}"
        )));
    }
    if !(p >= 1.0) {
        return Err(Error::InvalidExponent(p));
    }
    let block = dyadic_block(part, f, j);
    let num = if q == 2.0 {
        block.l2_norm_spectral()
    } else {
        lebesgue_norm(&block, q)?
    };
    let den_base = if p == 2.0 {
        block.l2_norm_spectral()
    } else {
        lebesgue_norm(&block, p)?
    };
    if den_base == 0.0 {
        return Err(Error::EmptyBand(format!("block {j} is zero")));
    }
    let d = f.grid().dim as f64;
    let factor = 2.0f64.powi(j).powf(d * (1.0 / p - 1.0 / q));
    Ok(num / (factor * den_base))
}
