//! Spectral representation of periodic fields and the operator toolbox.
//!
//! A [`SpectralField`] stores the Fourier coefficients of one or more scalar
//! components on the lattice of a [`GridSpec`]. With the forward transform
//! normalized by `1/n^dim`, a field with coefficients `c_k` represents
//!
//! ```text
//! f(x) = sum_k c_k exp(i xi_k . x),      xi_k = 2 pi k / L,
//! ```
//!
//! so real fields satisfy the Hermitian symmetry `c_{-k} = conj(c_k)`. Each
//! field carries a `real` flag tracking whether that symmetry holds; applying
//! a non-Hermitian [`Symbol`] clears it and the result can only be read back
//! with [`SpectralField::to_grid_complex`].
//!
//! Plancherel on the box reads `int |f|^2 dx = L^dim * sum_k |c_k|^2`, and the
//! discrete grid norm of a trigonometric polynomial reproduces it exactly.

use num_complex::Complex64;
use rand::Rng;
use std::sync::Arc;

use crate::error::{Error, Result};
use crate::fft;
use crate::grid::{GridSpec, MAX_DIM};

/// Tolerance (relative to the largest coefficient) below which Hermitian
/// asymmetry is attributed to rounding.
pub const HERMITIAN_TOL: f64 = 1e-12;

/// Relative asymmetry above which [`SpectralField::project_hermitian`]
/// refuses to fold: far beyond transform roundoff, so it can only come from
/// a wrongly built field.
pub const HERMITIAN_PROJECT_GUARD: f64 = 1e-6;

/// Multi-component field in spectral representation.
#[derive(Clone, Debug)]
pub struct SpectralField {
    grid: GridSpec,
    comps: Vec<Vec<Complex64>>,
    real: bool,
}

impl SpectralField {
    /// Zero field with `ncomp` components.
    pub fn zeros(grid: GridSpec, ncomp: usize) -> Self {
        assert!(ncomp > 0, "need at least one component");
        SpectralField {
            grid,
            comps: vec![vec![Complex64::default(); grid.len()]; ncomp],
            real: true,
        }
    }

    /// Forward transform of real grid samples (row-major, one slice per component).
    pub fn from_grid(grid: GridSpec, values: &[Vec<f64>]) -> Result<Self> {
        if values.is_empty() {
            return Err(Error::ShapeMismatch("no components given".into()));
        }
        let mut comps = Vec::with_capacity(values.len());
        for (c, vals) in values.iter().enumerate() {
            if vals.len() != grid.len() {
                return Err(Error::ShapeMismatch(format!(
                    "component {c} has {} samples, grid has {}",
                    vals.len(),
                    grid.len()
                )));
            }
            let mut data: Vec<Complex64> =
                vals.iter().map(|&v| Complex64::new(v, 0.0)).collect();
            fft::transform(&grid, &mut data, true);
            comps.push(data);
        }
        let mut field = SpectralField {
            grid,
            comps,
            real: true,
        };
        // The transform of real samples is Hermitian by definition; fold
        // away the complex FFT's asymmetric roundoff so repeated product
        // round trips cannot drift off the real subspace.
        field.fold_hermitian();
        Ok(field)
    }

    /// Wrap raw coefficients; the Hermitian symmetry is measured to set the
    /// `real` flag.
    pub fn from_coefficients(grid: GridSpec, comps: Vec<Vec<Complex64>>) -> Result<Self> {
        if comps.is_empty() {
            return Err(Error::ShapeMismatch("no components given".into()));
        }
        for (c, data) in comps.iter().enumerate() {
            if data.len() != grid.len() {
                return Err(Error::ShapeMismatch(format!(
                    "component {c} has {} coefficients, grid has {}",
                    data.len(),
                    grid.len()
                )));
            }
        }
        let mut field = SpectralField {
            grid,
            comps,
            real: false,
        };
        let (residual, scale) = field.hermitian_residual();
        field.real = residual <= HERMITIAN_TOL * scale.max(f64::MIN_POSITIVE);
        Ok(field)
    }

    pub fn grid(&self) -> GridSpec {
        self.grid
    }

    pub fn ncomp(&self) -> usize {
        self.comps.len()
    }

    /// Whether the coefficients satisfy the real-field symmetry.
    pub fn is_real(&self) -> bool {
        self.real
    }

    pub fn coeffs(&self, comp: usize) -> &[Complex64] {
        &self.comps[comp]
    }

    pub fn coeffs_mut(&mut self, comp: usize) -> &mut [Complex64] {
        &mut self.comps[comp]
    }

    /// Extract one component as a scalar field.
    pub fn component(&self, comp: usize) -> SpectralField {
        SpectralField {
            grid: self.grid,
            comps: vec![self.comps[comp].clone()],
            real: self.real,
        }
    }

    /// Stack scalar fields into one multi-component field.
    pub fn stack(parts: &[SpectralField]) -> SpectralField {
        assert!(!parts.is_empty());
        let grid = parts[0].grid;
        let mut comps = Vec::new();
        let mut real = true;
        for p in parts {
            assert_eq!(p.grid, grid, "stacked components must share a grid");
            real &= p.real;
            for c in &p.comps {
                comps.push(c.clone());
            }
        }
        SpectralField { grid, comps, real }
    }

    /// Coefficient of the zero mode (the mean of the represented field).
    pub fn zero_mode(&self, comp: usize) -> Complex64 {
        self.comps[comp][0]
    }

    /// Force every component to zero mean.
    pub fn remove_mean(&mut self) {
        for c in &mut self.comps {
            c[0] = Complex64::default();
        }
    }

    /// Max deviation from `c_{-k} = conj(c_k)` and the largest coefficient
    /// magnitude, over all components.
    pub fn hermitian_residual(&self) -> (f64, f64) {
        let mut worst = 0.0f64;
        let mut scale = 0.0f64;
        for data in &self.comps {
            for flat in 0..self.grid.len() {
                let conj_flat = self.grid.conjugate_index(flat);
                if conj_flat < flat {
                    continue;
                }
                let d = (data[flat] - data[conj_flat].conj()).norm();
                worst = worst.max(d);
                scale = scale.max(data[flat].norm());
            }
        }
        (worst, scale)
    }

    /// Fold the field onto the Hermitian subspace: average `c_k` with
    /// `conj(c_{-k})` and force self-conjugate modes real. Repeated
    /// transform round trips leave a slow asymmetry drift at roundoff
    /// level; this removes it exactly. Asymmetry beyond
    /// [`HERMITIAN_PROJECT_GUARD`] of the largest coefficient is a
    /// structural defect, not drift, and stays an error.
    pub fn project_hermitian(&mut self) -> Result<()> {
        let (residual, scale) = self.hermitian_residual();
        if residual > HERMITIAN_PROJECT_GUARD * scale.max(f64::MIN_POSITIVE) {
            return Err(Error::NotRealValued { residual });
        }
        self.fold_hermitian();
        Ok(())
    }

    fn fold_hermitian(&mut self) {
        for data in &mut self.comps {
            for flat in 0..self.grid.len() {
                let conj_flat = self.grid.conjugate_index(flat);
                if conj_flat == flat {
                    data[flat] = Complex64::new(data[flat].re, 0.0);
                } else if flat < conj_flat {
                    let avg = 0.5 * (data[flat] + data[conj_flat].conj());
                    data[flat] = avg;
                    data[conj_flat] = avg.conj();
                }
            }
        }
        self.real = true;
    }

    /// Inverse transform to real grid samples. Errors if the field is flagged
    /// complex.
    pub fn to_grid(&self) -> Result<Vec<Vec<f64>>> {
        if !self.real {
            let (residual, _) = self.hermitian_residual();
            return Err(Error::NotRealValued { residual });
        }
        let mut out = Vec::with_capacity(self.ncomp());
        for data in &self.comps {
            let mut work = data.clone();
            fft::transform(&self.grid, &mut work, false);
            out.push(work.into_iter().map(|z| z.re).collect());
        }
        Ok(out)
    }

    /// Inverse transform keeping complex values.
    pub fn to_grid_complex(&self) -> Vec<Vec<Complex64>> {
        self.comps
            .iter()
            .map(|data| {
                let mut work = data.clone();
                fft::transform(&self.grid, &mut work, false);
                work
            })
            .collect()
    }

    /// Multiply every coefficient by a real scalar multiplier `w(xi, k)`.
    /// Real multipliers with `w(-xi) = w(xi)` preserve real fields; all
    /// multipliers used through this path are radial or componentwise-even,
    /// so the flag is kept.
    pub(crate) fn scale_modes<F>(&mut self, mut w: F)
    where
        F: FnMut(&[f64; MAX_DIM], &[i64; MAX_DIM]) -> f64,
    {
        let factors: Vec<f64> = self
            .grid
            .lattice()
            .map(|(_, k, xi)| w(&xi, &k))
            .collect();
        for data in &mut self.comps {
            for (v, &f) in data.iter_mut().zip(&factors) {
                *v *= f;
            }
        }
    }

    /// In-place `self += scale * other`.
    pub fn add_scaled(&mut self, other: &SpectralField, scale: f64) {
        assert_eq!(self.grid, other.grid, "grid mismatch");
        assert_eq!(self.ncomp(), other.ncomp(), "component mismatch");
        for (dst, src) in self.comps.iter_mut().zip(&other.comps) {
            for (d, s) in dst.iter_mut().zip(src) {
                *d += s * scale;
            }
        }
        self.real &= other.real;
    }

    pub fn scale(&mut self, factor: f64) {
        for data in &mut self.comps {
            for v in data.iter_mut() {
                *v *= factor;
            }
        }
    }

    /// Zero every mode with any `|k_i| > keep` (sharp cube truncation used by
    /// the 2/3 dealiasing rule).
    pub fn dealias_truncate(&mut self, keep: i64) {
        self.scale_modes(|_, k| {
            if k.iter().any(|&ki| ki.abs() > keep) {
                0.0
            } else {
                1.0
            }
        });
    }

    /// Zero every mode with radial wavenumber above `cap`.
    pub fn radial_truncate(&mut self, cap: f64) {
        let cap2 = cap * cap;
        self.scale_modes(|xi, _| {
            let r2: f64 = xi.iter().map(|&x| x * x).sum();
            if r2 > cap2 {
                0.0
            } else {
                1.0
            }
        });
    }

    /// Largest coefficient magnitude over all components.
    pub fn max_coefficient(&self) -> f64 {
        self.comps
            .iter()
            .flat_map(|d| d.iter())
            .map(|z| z.norm())
            .fold(0.0, f64::max)
    }

    /// `sqrt(L^dim * sum |c_k|^2)` over all components: the L2 norm by
    /// Plancherel, exact for the represented trigonometric polynomial.
    pub fn l2_norm_spectral(&self) -> f64 {
        let sum: f64 = self
            .comps
            .iter()
            .flat_map(|d| d.iter())
            .map(|z| z.norm_sqr())
            .sum();
        (self.grid.volume() * sum).sqrt()
    }

    /// Gradient of a scalar field: `i xi_a c_k` per axis, with the unpaired
    /// Nyquist mode differentiated to zero (see
    /// [`GridSpec::deriv_wavenumber`]), so real fields keep real gradients.
    pub fn gradient(&self) -> SpectralField {
        assert_eq!(self.ncomp(), 1, "gradient takes a scalar field");
        let dim = self.grid.dim;
        let mut comps = vec![vec![Complex64::default(); self.grid.len()]; dim];
        let src = &self.comps[0];
        for (flat, k, _) in self.grid.lattice() {
            let c = src[flat];
            for ax in 0..dim {
                comps[ax][flat] = Complex64::new(0.0, self.grid.deriv_wavenumber(k[ax])) * c;
            }
        }
        SpectralField {
            grid: self.grid,
            comps,
            real: self.real,
        }
    }

    /// Divergence of a vector field: `i xi . c_k`, Nyquist differentiated to
    /// zero as in [`SpectralField::gradient`].
    pub fn divergence(&self) -> SpectralField {
        let dim = self.grid.dim;
        assert_eq!(self.ncomp(), dim, "divergence takes a dim-component field");
        let mut out = vec![Complex64::default(); self.grid.len()];
        for (flat, k, _) in self.grid.lattice() {
            let mut s = Complex64::default();
            for ax in 0..dim {
                s += Complex64::new(0.0, self.grid.deriv_wavenumber(k[ax])) * self.comps[ax][flat];
            }
            out[flat] = s;
        }
        SpectralField {
            grid: self.grid,
            comps: vec![out],
            real: self.real,
        }
    }

    /// Random real field with deterministic radial amplitude `profile(|xi|)`
    /// per component and independent uniform phases, Hermitian by
    /// construction. Self-conjugate lattice modes get phase zero; the zero
    /// mode gets `profile(0)`.
    pub fn random_hermitian<R: Rng>(
        grid: GridSpec,
        ncomp: usize,
        profile: impl Fn(f64) -> f64,
        rng: &mut R,
    ) -> SpectralField {
        let mut field = SpectralField::zeros(grid, ncomp);
        let lattice: Vec<(usize, [i64; MAX_DIM], f64)> = grid
            .lattice()
            .map(|(flat, k, xi)| {
                let r = xi.iter().map(|&x| x * x).sum::<f64>().sqrt();
                (flat, k, r)
            })
            .collect();
        for comp in 0..ncomp {
            for &(flat, k, r) in &lattice {
                let conj_flat = grid.conjugate_index(flat);
                if conj_flat == flat {
                    // Self-conjugate mode: the coefficient must be real.
                    field.comps[comp][flat] = Complex64::new(profile(r), 0.0);
                } else if flat < conj_flat {
                    let amp = profile(r);
                    let theta = rng.gen::<f64>() * 2.0 * std::f64::consts::PI;
                    let c = Complex64::from_polar(amp, theta);
                    field.comps[comp][flat] = c;
                    field.comps[comp][conj_flat] = c.conj();
                } else {
                    // Filled when the canonical partner was visited.
                    let _ = k;
                }
            }
        }
        field
    }
}

/// Pointwise evaluation rule `xi -> complex factor` for diagonal Fourier
/// multipliers. `hermitian` declares `s(-xi) = conj(s(xi))`, the condition
/// under which the multiplier maps real fields to real fields.
#[derive(Clone)]
pub struct Symbol {
    label: String,
    hermitian: bool,
    eval: Arc<dyn Fn(&[f64]) -> Complex64 + Send + Sync>,
}

impl Symbol {
    pub fn new(
        label: impl Into<String>,
        hermitian: bool,
        eval: impl Fn(&[f64]) -> Complex64 + Send + Sync + 'static,
    ) -> Self {
        Symbol {
            label: label.into(),
            hermitian,
            eval: Arc::new(eval),
        }
    }

    pub fn label(&self) -> &str {
        &self.label
    }

    pub fn is_hermitian(&self) -> bool {
        self.hermitian
    }

    pub fn eval(&self, xi: &[f64]) -> Complex64 {
        (self.eval)(xi)
    }

    /// `|xi|^l`, with the zero mode mapped to 0 (inert under homogeneous
    /// symbols; negative powers stay finite this way).
    pub fn abs_pow(l: f64) -> Self {
        Symbol::new(format!("|xi|^{l}"), true, move |xi| {
            let r2: f64 = xi.iter().map(|&x| x * x).sum();
            if r2 == 0.0 {
                Complex64::default()
            } else {
                Complex64::new(r2.sqrt().powf(l), 0.0)
            }
        })
    }

    /// Laplacian symbol `-|xi|^2`.
    pub fn laplacian() -> Self {
        Symbol::new("-|xi|^2", true, |xi| {
            Complex64::new(-xi.iter().map(|&x| x * x).sum::<f64>(), 0.0)
        })
    }

    /// Heat propagator `exp(-mu |xi|^2 t)`.
    pub fn heat(mu: f64, t: f64) -> Self {
        Symbol::new(format!("exp(-{mu} |xi|^2 {t})"), true, move |xi| {
            let r2: f64 = xi.iter().map(|&x| x * x).sum();
            Complex64::new((-mu * r2 * t).exp(), 0.0)
        })
    }

    /// Partial derivative symbol `i xi_axis`.
    pub fn derivative(axis: usize) -> Self {
        Symbol::new(format!("i xi_{axis}"), true, move |xi| {
            Complex64::new(0.0, xi[axis])
        })
    }
}

/// Multiply a field's coefficients by `s(xi_k)` componentwise. The result is
/// marked complex when the symbol is not Hermitian.
pub fn apply_symbol(f: &SpectralField, s: &Symbol) -> SpectralField {
    let mut out = f.clone();
    let factors: Vec<Complex64> = f.grid.lattice().map(|(_, _, xi)| s.eval(&xi)).collect();
    for data in &mut out.comps {
        for (v, &fac) in data.iter_mut().zip(&factors) {
            *v *= fac;
        }
    }
    out.real = f.real && s.hermitian;
    out
}

/// Forward transform of real grid samples (free-function form of
/// [`SpectralField::from_grid`]).
pub fn transform_forward(grid: GridSpec, values: &[Vec<f64>]) -> Result<SpectralField> {
    SpectralField::from_grid(grid, values)
}

/// Helmholtz (Leray) decomposition `m = P m + Q m` with
/// `Q m = xi (xi . m_hat) / |xi|^2` per mode and `Q = 0` on the zero mode.
/// Returns `(P m, Q m)`.
pub fn leray_project(m: &SpectralField) -> (SpectralField, SpectralField) {
    let dim = m.grid.dim;
    assert_eq!(m.ncomp(), dim, "Leray projection takes a dim-component field");
    let mut p = m.clone();
    let mut q = SpectralField::zeros(m.grid, dim);
    q.real = m.real;
    for (flat, _, xi) in m.grid.lattice() {
        let r2: f64 = xi.iter().take(dim).map(|&x| x * x).sum();
        if r2 == 0.0 {
            continue;
        }
        let mut dot = Complex64::default();
        for ax in 0..dim {
            dot += Complex64::new(xi[ax], 0.0) * m.comps[ax][flat];
        }
        for ax in 0..dim {
            let qv = dot * (xi[ax] / r2);
            q.comps[ax][flat] = qv;
            p.comps[ax][flat] -= qv;
        }
    }
    (p, q)
}

/// Grid Lebesgue norm `||f||_{L^p}` with the cell-volume weight; vector
/// fields use the pointwise Euclidean magnitude over components. `p` may be
/// `f64::INFINITY`.
pub fn lebesgue_norm(f: &SpectralField, p: f64) -> Result<f64> {
    if !(p >= 1.0) {
        return Err(Error::InvalidExponent(p));
    }
    let grids = f.to_grid_complex();
    let npts = f.grid.len();
    let mut mag2 = vec![0.0f64; npts];
    for g in &grids {
        for (m, z) in mag2.iter_mut().zip(g) {
            *m += z.norm_sqr();
        }
    }
    if p.is_infinite() {
        return Ok(mag2.iter().fold(0.0f64, |acc, &m| acc.max(m)).sqrt());
    }
    let cell = f.grid.cell_volume();
    let sum: f64 = if p == 2.0 {
        mag2.iter().sum()
    } else if p == 1.0 {
        mag2.iter().map(|&m| m.sqrt()).sum()
    } else {
        mag2.iter().map(|&m| m.powf(p / 2.0)).sum()
    };
    Ok((sum * cell).powf(1.0 / p))
}
