//! Capillary compressible fluid model with zero sound speed, in
//! perturbation form.
//!
//! Unknowns are the density fluctuation `a = (rho - rho*)/rho*` and the
//! scaled momentum `m = rho u / rho*` around a constant state `rho*` at
//! rest. They satisfy
//!
//! ```text
//! d/dt a + div m = 0,
//! d/dt m - A m - kappa_bar grad lap a = g(a, m),
//! A m = mu_bar lap m + (mu_bar + lambda_bar) grad div m,
//! ```
//!
//! where the pressure closure is critical at `rho*` (`P'(rho*) = 0`, zero
//! sound speed) and `g` collects every nonlinear term of the conservative
//! system, split into six groups built from composite closures. Per Fourier
//! mode the linear flow decouples into a 2x2 block coupling `a_hat` with the
//! longitudinal momentum component and a heat flow at rate `mu_bar` on the
//! transverse components; when `nu_bar^2 >= 4 kappa_bar`
//! (`nu_bar = lambda_bar + 2 mu_bar`) both block eigenvalues are real and
//! nonpositive, so the dynamics is purely diffusive with no acoustic waves.

use num_complex::Complex64;
use serde::Serialize;

use crate::closure::Polynomial;
use crate::error::{Error, Result};
use crate::field::{leray_project, transform_forward, SpectralField};
use crate::grid::{GridSpec, MAX_DIM};

/// Hard floor on `1 + a`: below this the perturbation framework is void and
/// evaluation aborts.
pub const VACUUM_FLOOR: f64 = 0.1;

/// Whether the compressible 2x2 block has real (parabolic) or complex
/// (oscillatory) eigenvalues.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub enum Regime {
    Parabolic,
    Oscillatory,
}

/// Physical closures and the scaled coefficients derived from them at the
/// reference density.
#[derive(Clone, Debug, Serialize)]
pub struct PhysParams {
    pub rho_star: f64,
    pub pressure: Polynomial,
    /// Shear viscosity closure `mu(rho)`.
    pub shear: Polynomial,
    /// Bulk viscosity closure `lambda(rho)`.
    pub bulk: Polynomial,
    /// Capillarity closure `kappa(rho)`.
    pub capillarity: Polynomial,
    /// `mu(rho*)/rho*`.
    pub mu_bar: f64,
    /// `lambda(rho*)/rho*`.
    pub lambda_bar: f64,
    /// `kappa(rho*) rho*`.
    pub kappa_bar: f64,
    /// `kappa(rho*) + rho* kappa'(rho*)`.
    pub kappa_check: f64,
    /// `lambda_bar + 2 mu_bar`.
    pub nu_bar: f64,
    pub regime: Regime,
    /// Set when `lambda_bar <= 0`: accepted (only `nu_bar > 0` is used), but
    /// worth surfacing.
    pub lambda_nonpositive: bool,
}

impl PhysParams {
    /// Derive all scaled coefficients from the closures and validate:
    /// `mu_bar > 0`, `nu_bar > 0`, `kappa_bar > 0`, and the zero-sound-speed
    /// condition `P'(rho*) = 0`.
    pub fn from_closures(
        rho_star: f64,
        pressure: Polynomial,
        shear: Polynomial,
        bulk: Polynomial,
        capillarity: Polynomial,
    ) -> Result<Self> {
        if !(rho_star > 0.0) || !rho_star.is_finite() {
            return Err(Error::InvalidConfig(format!(
                "reference density rho_star = {rho_star}, need a positive finite value"
            )));
        }
        let dp = pressure.derivative();
        let slope = dp.eval(rho_star);
        let slope_scale = dp
            .coeffs()
            .iter()
            .enumerate()
            .map(|(k, &c)| c.abs() * rho_star.powi(k as i32))
            .sum::<f64>()
            .max(1.0);
        if slope.abs() > 1e-12 * slope_scale {
            return Err(Error::NonzeroSoundSpeed(slope));
        }
        let mu_bar = shear.eval(rho_star) / rho_star;
        let lambda_bar = bulk.eval(rho_star) / rho_star;
        let kappa_bar = capillarity.eval(rho_star) * rho_star;
        let kappa_check = capillarity.eval(rho_star) + rho_star * capillarity.derivative().eval(rho_star);
        let nu_bar = lambda_bar + 2.0 * mu_bar;
        if !(mu_bar > 0.0) {
            return Err(Error::InvalidConfig(format!(
                "shear viscosity mu_bar = {mu_bar}, need > 0"
            )));
        }
        if !(nu_bar > 0.0) {
            return Err(Error::InvalidConfig(format!(
                "longitudinal viscosity nu_bar = {nu_bar}, need > 0"
            )));
        }
        if !(kappa_bar > 0.0) {
            return Err(Error::InvalidConfig(format!(
                "capillarity kappa_bar = {kappa_bar}, need > 0"
            )));
        }
        let regime = if nu_bar * nu_bar >= 4.0 * kappa_bar {
            Regime::Parabolic
        } else {
            Regime::Oscillatory
        };
        Ok(PhysParams {
            rho_star,
            pressure,
            shear,
            bulk,
            capillarity,
            mu_bar,
            lambda_bar,
            kappa_bar,
            kappa_check,
            nu_bar,
            regime,
            lambda_nonpositive: lambda_bar <= 0.0,
        })
    }

    /// Constant closures realizing the given scaled coefficients, with a
    /// constant (hence critical) pressure.
    pub fn uniform(mu_bar: f64, lambda_bar: f64, kappa_bar: f64, rho_star: f64) -> Result<Self> {
        PhysParams::from_closures(
            rho_star,
            Polynomial::zero(),
            Polynomial::constant(mu_bar * rho_star),
            Polynomial::constant(lambda_bar * rho_star),
            Polynomial::constant(kappa_bar / rho_star),
        )
    }

    /// `Q(a) = a/(1+a)`, the relative density weight with `(1-Q(a)) m = u`.
    pub fn q_of(&self, a: f64) -> f64 {
        a / (1.0 + a)
    }

    /// Nonlinear pressure source `(P(rho*) - P(rho*(1+a)))/rho*`; vanishes to
    /// second order at `a = 0` because `P'(rho*) = 0`, and its gradient is
    /// exactly the pressure term of the conservative system moved to the
    /// right-hand side.
    pub fn pressure_deficit(&self, a: f64) -> f64 {
        (self.pressure.eval(self.rho_star) - self.pressure.eval(self.rho_star * (1.0 + a)))
            / self.rho_star
    }

    /// `mu(rho*(1+a))/rho* - mu_bar`.
    pub fn mu_tilde(&self, a: f64) -> f64 {
        self.shear.eval(self.rho_star * (1.0 + a)) / self.rho_star - self.mu_bar
    }

    /// `lambda(rho*(1+a))/rho* - lambda_bar`.
    pub fn lambda_tilde(&self, a: f64) -> f64 {
        self.bulk.eval(self.rho_star * (1.0 + a)) / self.rho_star - self.lambda_bar
    }

    /// `rho kappa(rho) - kappa_bar` at `rho = rho*(1+a)`.
    pub fn kappa1_tilde(&self, a: f64) -> f64 {
        let rho = self.rho_star * (1.0 + a);
        rho * self.capillarity.eval(rho) - self.kappa_bar
    }

    /// `kappa(rho) + rho kappa'(rho) - kappa_check` at `rho = rho*(1+a)`.
    pub fn kappa2_tilde(&self, a: f64) -> f64 {
        let rho = self.rho_star * (1.0 + a);
        self.capillarity.eval(rho) + rho * self.capillarity.derivative().eval(rho)
            - self.kappa_check
    }

    /// `rho* kappa(rho) - kappa_bar` at `rho = rho*(1+a)`.
    pub fn kappa3_tilde(&self, a: f64) -> f64 {
        self.rho_star * self.capillarity.eval(self.rho_star * (1.0 + a)) - self.kappa_bar
    }
}

/// Perturbation state: scalar `a` and `dim`-component `m`, both real and
/// zero-mean.
#[derive(Clone, Debug)]
pub struct State {
    a: SpectralField,
    m: SpectralField,
}

impl State {
    pub fn new(a: SpectralField, m: SpectralField) -> Result<State> {
        let grid = a.grid();
        if m.grid() != grid {
            return Err(Error::ShapeMismatch("a and m live on different grids".into()));
        }
        if a.ncomp() != 1 || m.ncomp() != grid.dim {
            return Err(Error::ShapeMismatch(format!(
                "need scalar a and {}-component m, got {} and {}",
                grid.dim,
                a.ncomp(),
                m.ncomp()
            )));
        }
        for (name, f) in [("a", &a), ("m", &m)] {
            if !f.is_real() {
                let (residual, _) = f.hermitian_residual();
                let _ = name;
                return Err(Error::NotRealValued { residual });
            }
        }
        let scale = a.max_coefficient().max(m.max_coefficient()).max(f64::MIN_POSITIVE);
        let mean = (0..1)
            .map(|c| a.zero_mode(c).norm())
            .chain((0..m.ncomp()).map(|c| m.zero_mode(c).norm()))
            .fold(0.0f64, f64::max);
        if mean > 1e-12 * scale {
            return Err(Error::InvalidConfig(format!(
                "state must be zero-mean; largest mean magnitude {mean:.3e}"
            )));
        }
        Ok(State { a, m })
    }

    pub(crate) fn from_parts_unchecked(a: SpectralField, m: SpectralField) -> State {
        State { a, m }
    }

    pub fn zeros(grid: GridSpec) -> State {
        State {
            a: SpectralField::zeros(grid, 1),
            m: SpectralField::zeros(grid, grid.dim),
        }
    }

    pub fn a(&self) -> &SpectralField {
        &self.a
    }

    pub fn m(&self) -> &SpectralField {
        &self.m
    }

    pub fn grid(&self) -> GridSpec {
        self.a.grid()
    }

    pub fn into_parts(self) -> (SpectralField, SpectralField) {
        (self.a, self.m)
    }

    pub fn add_scaled(&mut self, other: &State, w: f64) {
        self.a.add_scaled(&other.a, w);
        self.m.add_scaled(&other.m, w);
    }

    pub fn scale(&mut self, w: f64) {
        self.a.scale(w);
        self.m.scale(w);
    }

    pub fn max_coefficient(&self) -> f64 {
        self.a.max_coefficient().max(self.m.max_coefficient())
    }

    /// Combined spectral L2 norm `sqrt(||a||^2 + ||m||^2)`.
    pub fn l2_norm(&self) -> f64 {
        self.a
            .l2_norm_spectral()
            .hypot(self.m.l2_norm_spectral())
    }

    pub fn is_finite(&self) -> bool {
        let ok = |f: &SpectralField| {
            (0..f.ncomp()).all(|c| f.coeffs(c).iter().all(|z| z.re.is_finite() && z.im.is_finite()))
        };
        ok(&self.a) && ok(&self.m)
    }

    /// Sharp cube truncation of both fields to the alias-free band.
    pub fn dealias(&mut self) {
        let keep = self.grid().dealias_keep();
        self.a.dealias_truncate(keep);
        self.m.dealias_truncate(keep);
    }

    /// Fold both fields onto the Hermitian subspace; see
    /// [`SpectralField::project_hermitian`].
    pub fn project_hermitian(&mut self) -> Result<()> {
        self.a.project_hermitian()?;
        self.m.project_hermitian()
    }

    /// Smallest grid value of `1 + a`.
    pub fn min_density(&self) -> Result<f64> {
        let vals = self.a.to_grid()?;
        Ok(vals[0]
            .iter()
            .fold(f64::INFINITY, |acc, &v| acc.min(1.0 + v)))
    }
}

/// Which root of the block quadratic the diagonalizing weight uses.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub enum Branch {
    Plus,
    Minus,
}

/// Diagonalizing weight `alpha = (nu_bar -+ sqrt(nu_bar^2 - 4 kappa_bar))/2`,
/// real only in the parabolic regime. It satisfies
/// `alpha (nu_bar - alpha) = kappa_bar`, so `Q m + alpha grad a` follows a
/// pure heat flow at rate `nu_bar - alpha` under the linear dynamics.
#[derive(Clone, Copy, Debug, Serialize)]
pub struct Alpha {
    value: f64,
    branch: Branch,
}

impl Alpha {
    pub fn new(p: &PhysParams, branch: Branch) -> Result<Alpha> {
        let disc = p.nu_bar * p.nu_bar - 4.0 * p.kappa_bar;
        if disc < 0.0 {
            return Err(Error::OscillatoryRegime(format!(
                "nu_bar^2 - 4 kappa_bar = {disc:.6e} < 0; the diagonalizing weight is complex"
            )));
        }
        let s = disc.sqrt();
        let value = match branch {
            Branch::Plus => 0.5 * (p.nu_bar + s),
            Branch::Minus => 0.5 * (p.nu_bar - s),
        };
        Ok(Alpha { value, branch })
    }

    pub fn value(&self) -> f64 {
        self.value
    }

    pub fn branch(&self) -> Branch {
        self.branch
    }

    /// The complementary rate `nu_bar - alpha`.
    pub fn conjugate_rate(&self, p: &PhysParams) -> f64 {
        p.nu_bar - self.value
    }
}

/// Eigenvalues of the per-mode linear generator at squared wavenumber
/// `xi_sq`: the two compressible roots (ordered by real part, `plus` the
/// slower one) and the transverse heat rate of multiplicity `dim - 1`.
#[derive(Clone, Copy, Debug)]
pub struct EigenSet {
    pub plus: Complex64,
    pub minus: Complex64,
    pub solenoidal: f64,
}

/// Roots of `z^2 + nu_bar xi_sq z + kappa_bar xi_sq^2 = 0` together with the
/// transverse eigenvalue `-mu_bar xi_sq`.
pub fn spectral_eigenvalues(xi_sq: f64, p: &PhysParams) -> EigenSet {
    let disc = Complex64::new(p.nu_bar * p.nu_bar - 4.0 * p.kappa_bar, 0.0).sqrt();
    let half = 0.5 * xi_sq;
    EigenSet {
        plus: (disc - p.nu_bar) * half,
        minus: (-disc - p.nu_bar) * half,
        solenoidal: -p.mu_bar * xi_sq,
    }
}

/// Linear tendency `(-div m, A m + kappa_bar grad lap a)`, exact per mode.
///
/// Gradient and divergence factors follow the grid derivative convention
/// (unpaired Nyquist wavenumbers differentiate to zero); the Laplacian keeps
/// the true `-r^2`. Mixing the two would push real states off the real
/// subspace at Nyquist-active modes.
pub fn linear_rhs(s: &State, p: &PhysParams) -> State {
    let grid = s.grid();
    let dim = grid.dim;
    let npts = grid.len();
    let mut a_dot = vec![Complex64::default(); npts];
    let mut m_dot = vec![vec![Complex64::default(); npts]; dim];
    for (flat, k, xi) in grid.lattice() {
        let r2: f64 = xi.iter().map(|&x| x * x).sum();
        let xid: Vec<f64> = (0..dim).map(|ax| grid.deriv_wavenumber(k[ax])).collect();
        let mut div = Complex64::default();
        for ax in 0..dim {
            div += Complex64::new(0.0, xid[ax]) * s.m.coeffs(ax)[flat];
        }
        a_dot[flat] = -div;
        let a_hat = s.a.coeffs(0)[flat];
        let mut dot = Complex64::default();
        for ax in 0..dim {
            dot += xid[ax] * s.m.coeffs(ax)[flat];
        }
        for ax in 0..dim {
            // A m: -mu_bar r^2 m - (mu_bar+lambda_bar) xi (xi.m);
            // kappa_bar grad lap a: -i kappa_bar r^2 xi a.
            m_dot[ax][flat] = -p.mu_bar * r2 * s.m.coeffs(ax)[flat]
                - (p.mu_bar + p.lambda_bar) * xid[ax] * dot
                - Complex64::new(0.0, p.kappa_bar * r2 * xid[ax]) * a_hat;
        }
    }
    let a = SpectralField::from_coefficients(grid, vec![a_dot]).expect("shape is consistent");
    let m = SpectralField::from_coefficients(grid, m_dot).expect("shape is consistent");
    State::from_parts_unchecked(a, m)
}

/// Exact linear solution operator for one mode over time `t`: a 2x2 block on
/// `(a_hat, q_hat)` with `q_hat` the longitudinal momentum component, and a
/// scalar factor on the transverse complement. The block diagonal is real
/// and the off-diagonal purely imaginary in every regime; entries are
/// projected onto that structure, which keeps real fields exactly real.
#[derive(Clone, Copy, Debug)]
pub struct PropagatorBlock {
    pub e11: Complex64,
    pub e12: Complex64,
    pub e21: Complex64,
    pub e22: Complex64,
    pub solenoidal: f64,
}

impl PropagatorBlock {
    pub fn identity() -> Self {
        PropagatorBlock {
            e11: Complex64::new(1.0, 0.0),
            e12: Complex64::default(),
            e21: Complex64::default(),
            e22: Complex64::new(1.0, 0.0),
            solenoidal: 1.0,
        }
    }
}

/// Threshold on `|lambda_plus - lambda_minus| * t` below which the
/// double-root limit formula replaces the divided-difference form.
const DEGENERATE_SWITCH: f64 = 1e-5;

/// Matrix exponential of the linear generator with Laplacian strength `r2`
/// and coupling strength `rc2` (the squared lengths of the true and the
/// derivative-convention wavevectors). The two coincide except at modes with
/// an unpaired Nyquist axis, where the coupling is weakened or lost.
fn propagator_block(r2: f64, rc2: f64, t: f64, p: &PhysParams) -> PropagatorBlock {
    if r2 == 0.0 {
        return PropagatorBlock::identity();
    }
    let sol = (-p.mu_bar * r2 * t).exp();
    if rc2 == 0.0 {
        // No surviving gradient: density is frozen, momentum is pure heat.
        return PropagatorBlock {
            e11: Complex64::new(1.0, 0.0),
            e12: Complex64::default(),
            e21: Complex64::default(),
            e22: Complex64::new(sol, 0.0),
            solenoidal: sol,
        };
    }
    let rc = rc2.sqrt();
    // Generator on (a_hat, q_hat):
    //   [[0, -i rc], [-i kappa_bar r^2 rc, -(mu_bar r^2 + (mu_bar+lambda_bar) rc^2)]].
    let m12 = Complex64::new(0.0, -rc);
    let m21 = Complex64::new(0.0, -p.kappa_bar * r2 * rc);
    let d = p.mu_bar * r2 + (p.mu_bar + p.lambda_bar) * rc2;
    let sq = Complex64::new(d * d - 4.0 * p.kappa_bar * r2 * rc2, 0.0).sqrt();
    let lam_p = 0.5 * (sq - d);
    let lam_m = 0.5 * (-sq - d);
    let (e11, e12, e21, e22) = if (lam_p - lam_m).norm() * t <= DEGENERATE_SWITCH {
        // exp(tM) = e^{lam t} (I + t (M - lam I)) at the mean eigenvalue.
        let lam = -0.5 * d;
        let scale = (lam * t).exp();
        (
            Complex64::new(scale * (1.0 - lam * t), 0.0),
            scale * t * m12,
            scale * t * m21,
            Complex64::new(scale * (1.0 + lam * t), 0.0),
        )
    } else {
        let denom = lam_p - lam_m;
        let ep = (lam_p * t).exp();
        let em = (lam_m * t).exp();
        (
            (lam_p * em - lam_m * ep) / denom,
            (ep - em) * m12 / denom,
            (ep - em) * m21 / denom,
            (lam_p * ep - lam_m * em) / denom,
        )
    };
    PropagatorBlock {
        e11: Complex64::new(e11.re, 0.0),
        e12: Complex64::new(0.0, e12.im),
        e21: Complex64::new(0.0, e21.im),
        e22: Complex64::new(e22.re, 0.0),
        solenoidal: sol,
    }
}

/// Matrix exponential of the per-mode linear generator at wavevector `xi`
/// over time `t >= 0`, with the full continuum coupling `[[0, -i r],
/// [-i kappa_bar r^3, -nu_bar r^2]]` on `(a_hat, q_hat)`.
pub fn linear_propagator(xi: &[f64], t: f64, p: &PhysParams) -> Result<PropagatorBlock> {
    if t < 0.0 {
        return Err(Error::InvalidConfig(format!(
            "propagator time t = {t}, need t >= 0"
        )));
    }
    let r2: f64 = xi.iter().map(|&x| x * x).sum();
    Ok(propagator_block(r2, r2, t, p))
}

/// Propagator blocks for every lattice mode, indexed by flat position.
///
/// Couplings are built from the grid derivative convention, so the table is
/// the exact flow of [`linear_rhs`] and maps real states to real states even
/// when Nyquist modes carry energy.
pub fn propagator_table(grid: GridSpec, t: f64, p: &PhysParams) -> Result<Vec<PropagatorBlock>> {
    if t < 0.0 {
        return Err(Error::InvalidConfig(format!(
            "propagator time t = {t}, need t >= 0"
        )));
    }
    Ok(grid
        .lattice()
        .map(|(_, k, xi)| {
            let r2: f64 = xi.iter().map(|&x| x * x).sum();
            let rc2: f64 = (0..grid.dim)
                .map(|ax| {
                    let w = grid.deriv_wavenumber(k[ax]);
                    w * w
                })
                .sum();
            propagator_block(r2, rc2, t, p)
        })
        .collect())
}

/// Apply a precomputed propagator table to a state. The longitudinal
/// direction at each mode follows the same derivative convention the table
/// was built with.
pub fn apply_propagator(s: &State, table: &[PropagatorBlock]) -> State {
    let grid = s.grid();
    let dim = grid.dim;
    assert_eq!(table.len(), grid.len(), "table built for a different grid");
    let npts = grid.len();
    let mut a_out = vec![Complex64::default(); npts];
    let mut m_out = vec![vec![Complex64::default(); npts]; dim];
    for (flat, k, _) in grid.lattice() {
        let blk = &table[flat];
        let a_hat = s.a.coeffs(0)[flat];
        let xid: Vec<f64> = (0..dim).map(|ax| grid.deriv_wavenumber(k[ax])).collect();
        let rc2: f64 = xid.iter().map(|&x| x * x).sum();
        if rc2 == 0.0 {
            a_out[flat] = blk.e11 * a_hat;
            for ax in 0..dim {
                m_out[ax][flat] = blk.solenoidal * s.m.coeffs(ax)[flat];
            }
            continue;
        }
        let rc = rc2.sqrt();
        let e: Vec<f64> = (0..dim).map(|ax| xid[ax] / rc).collect();
        let mut q = Complex64::default();
        for ax in 0..dim {
            q += e[ax] * s.m.coeffs(ax)[flat];
        }
        let a_new = blk.e11 * a_hat + blk.e12 * q;
        let q_new = blk.e21 * a_hat + blk.e22 * q;
        a_out[flat] = a_new;
        for ax in 0..dim {
            let transverse = s.m.coeffs(ax)[flat] - e[ax] * q;
            m_out[ax][flat] = e[ax] * q_new + blk.solenoidal * transverse;
        }
    }
    let a = SpectralField::from_coefficients(grid, vec![a_out]).expect("shape is consistent");
    let m = SpectralField::from_coefficients(grid, m_out).expect("shape is consistent");
    State::from_parts_unchecked(a, m)
}

/// Exact linear flow over `[0, t]`.
pub fn propagate(s: &State, t: f64, p: &PhysParams) -> Result<State> {
    let table = propagator_table(s.grid(), t, p)?;
    Ok(apply_propagator(s, &table))
}

/// Effective velocity `w = Q m + alpha grad a` (`Q` the gradient-part
/// projector): under the linear flow it satisfies a pure heat equation at
/// rate `nu_bar - alpha`, decoupled from everything else.
pub fn effective_velocity(s: &State, alpha: Alpha) -> SpectralField {
    let (_, qm) = leray_project(&s.m);
    let mut w = qm;
    w.add_scaled(&s.a.gradient(), alpha.value());
    w
}

/// Upper-triangle component order for symmetric tensors in `dim` dimensions.
fn symmetric_pairs(dim: usize) -> Vec<(usize, usize)> {
    let mut pairs = Vec::new();
    for i in 0..dim {
        for j in i..dim {
            pairs.push((i, j));
        }
    }
    pairs
}

/// Divergence of a symmetric tensor field given by its upper triangle:
/// `(div T)_i = sum_j d_j T_ij`, Nyquist differentiated to zero like every
/// other odd derivative.
fn divergence_symmetric(t_hat: &SpectralField, dim: usize) -> SpectralField {
    let grid = t_hat.grid();
    let pairs = symmetric_pairs(dim);
    assert_eq!(t_hat.ncomp(), pairs.len(), "tensor component count");
    let mut slot = [[0usize; MAX_DIM]; MAX_DIM];
    for (idx, &(i, j)) in pairs.iter().enumerate() {
        slot[i][j] = idx;
        slot[j][i] = idx;
    }
    let npts = grid.len();
    let mut out = vec![vec![Complex64::default(); npts]; dim];
    for (flat, k, _) in grid.lattice() {
        for i in 0..dim {
            let mut s = Complex64::default();
            for j in 0..dim {
                s += Complex64::new(0.0, grid.deriv_wavenumber(k[j])) * t_hat.coeffs(slot[i][j])[flat];
            }
            out[i][flat] = s;
        }
    }
    SpectralField::from_coefficients(grid, out).expect("shape is consistent")
}

/// Grid-product context shared by the six nonlinear groups.
struct GridData {
    a: Vec<f64>,
    m: Vec<Vec<f64>>,
    grad_a: Vec<Vec<f64>>,
    lap_a: Vec<f64>,
    u: Vec<Vec<f64>>,
    /// `grad_u[i][j]` holds `d_j u_i`.
    grad_u: Vec<Vec<Vec<f64>>>,
    div_u: Vec<f64>,
    min_density: f64,
}

fn grid_data(s: &State) -> Result<GridData> {
    let grid = s.grid();
    let dim = grid.dim;
    let a = s.a().to_grid()?.remove(0);
    let min_density = a.iter().fold(f64::INFINITY, |acc, &v| acc.min(1.0 + v));
    if min_density < VACUUM_FLOOR {
        return Err(Error::Vacuum {
            min_density,
            time: f64::NAN,
        });
    }
    let m = s.m().to_grid()?;
    let grad_a = s.a().gradient().to_grid()?;
    let lap_a = crate::field::apply_symbol(s.a(), &crate::field::Symbol::laplacian())
        .to_grid()?
        .remove(0);
    let npts = grid.len();
    let mut u = vec![vec![0.0f64; npts]; dim];
    for i in 0..dim {
        for x in 0..npts {
            u[i][x] = m[i][x] / (1.0 + a[x]);
        }
    }
    let u_hat = transform_forward(grid, &u)?;
    let mut grad_u = Vec::with_capacity(dim);
    for i in 0..dim {
        grad_u.push(u_hat.component(i).gradient().to_grid()?);
    }
    let mut div_u = vec![0.0f64; npts];
    for x in 0..npts {
        for i in 0..dim {
            div_u[x] += grad_u[i][i][x];
        }
    }
    Ok(GridData {
        a,
        m,
        grad_a,
        lap_a,
        u,
        grad_u,
        div_u,
        min_density,
    })
}

/// The six nonlinear groups of the momentum equation, each a `dim`-component
/// field, in the order:
///
/// 1. convection: `div((Q(a)-1) m (x) m)`
/// 2. viscous linearization remainder: `-[mu_bar lap(Q(a)m) + (mu_bar+lambda_bar) grad div(Q(a)m)]`
/// 3. variable-coefficient viscosity: `2 div(mu_tilde(a) D(u)) + grad(lambda_tilde(a) div u)` with `u = (1-Q(a))m`
/// 4. nonlinear pressure: `grad((P(rho*) - P(rho))/rho*)`
/// 5. variable-coefficient capillarity: `grad(kappa1_tilde(a) lap a)`
/// 6. quadratic capillarity:
///    `rho*/2 grad((kappa2_tilde(a)+kappa_check)|grad a|^2) - div((kappa3_tilde(a)+kappa_bar) grad a (x) grad a)`
///
/// With `dealias` set, each group is truncated to the alias-free cube.
pub fn nonlinear_terms(s: &State, p: &PhysParams, dealias: bool) -> Result<[SpectralField; 6]> {
    let grid = s.grid();
    let dim = grid.dim;
    let npts = grid.len();
    let gd = grid_data(s)?;
    let pairs = symmetric_pairs(dim);

    // Pointwise composite closures.
    let mut q = vec![0.0f64; npts];
    let mut mu_t = vec![0.0f64; npts];
    let mut la_t = vec![0.0f64; npts];
    let mut k1 = vec![0.0f64; npts];
    let mut k2 = vec![0.0f64; npts];
    let mut k3 = vec![0.0f64; npts];
    let mut pdef = vec![0.0f64; npts];
    for x in 0..npts {
        let a = gd.a[x];
        q[x] = p.q_of(a);
        mu_t[x] = p.mu_tilde(a);
        la_t[x] = p.lambda_tilde(a);
        k1[x] = p.kappa1_tilde(a);
        k2[x] = p.kappa2_tilde(a);
        k3[x] = p.kappa3_tilde(a);
        pdef[x] = p.pressure_deficit(a);
    }

    // 1: div((Q-1) m (x) m).
    let mut t1 = vec![vec![0.0f64; npts]; pairs.len()];
    for (idx, &(i, j)) in pairs.iter().enumerate() {
        for x in 0..npts {
            t1[idx][x] = (q[x] - 1.0) * gd.m[i][x] * gd.m[j][x];
        }
    }
    let g1 = divergence_symmetric(&transform_forward(grid, &t1)?, dim);

    // 2: -A(Q m), assembled spectrally from the transform of Q m.
    let mut qm = vec![vec![0.0f64; npts]; dim];
    for i in 0..dim {
        for x in 0..npts {
            qm[i][x] = q[x] * gd.m[i][x];
        }
    }
    let qm_hat = transform_forward(grid, &qm)?;
    // Assembled with the same derivative convention (Nyquist -> 0) the
    // pointwise chains use, so the constant-coefficient viscous pieces
    // cancel exactly against the conservative form.
    let mut g2_comps = vec![vec![Complex64::default(); npts]; dim];
    for (flat, k, _) in grid.lattice() {
        let mut xi_d = [0.0f64; MAX_DIM];
        for ax in 0..dim {
            xi_d[ax] = grid.deriv_wavenumber(k[ax]);
        }
        let r2: f64 = xi_d.iter().map(|&x| x * x).sum();
        let mut dot = Complex64::default();
        for ax in 0..dim {
            dot += xi_d[ax] * qm_hat.coeffs(ax)[flat];
        }
        for ax in 0..dim {
            g2_comps[ax][flat] = p.mu_bar * r2 * qm_hat.coeffs(ax)[flat]
                + (p.mu_bar + p.lambda_bar) * xi_d[ax] * dot;
        }
    }
    let g2 = SpectralField::from_coefficients(grid, g2_comps)?;

    // 3: 2 div(mu_tilde D(u)) + grad(lambda_tilde div u).
    let mut t3 = vec![vec![0.0f64; npts]; pairs.len()];
    for (idx, &(i, j)) in pairs.iter().enumerate() {
        for x in 0..npts {
            let dij = 0.5 * (gd.grad_u[i][j][x] + gd.grad_u[j][i][x]);
            t3[idx][x] = mu_t[x] * dij;
        }
    }
    let mut g3 = divergence_symmetric(&transform_forward(grid, &t3)?, dim);
    g3.scale(2.0);
    let mut s3 = vec![0.0f64; npts];
    for x in 0..npts {
        s3[x] = la_t[x] * gd.div_u[x];
    }
    g3.add_scaled(&transform_forward(grid, &[s3])?.gradient(), 1.0);

    // 4: grad of the pressure deficit.
    let g4 = transform_forward(grid, &[pdef])?.gradient();

    // 5: grad(kappa1_tilde lap a).
    let mut s5 = vec![0.0f64; npts];
    for x in 0..npts {
        s5[x] = k1[x] * gd.lap_a[x];
    }
    let g5 = transform_forward(grid, &[s5])?.gradient();

    // 6: rho*/2 grad((kappa2_tilde+kappa_check)|grad a|^2)
    //    - div((kappa3_tilde+kappa_bar) grad a (x) grad a).
    let mut s6 = vec![0.0f64; npts];
    for x in 0..npts {
        let mut g2norm = 0.0;
        for i in 0..dim {
            g2norm += gd.grad_a[i][x] * gd.grad_a[i][x];
        }
        s6[x] = 0.5 * p.rho_star * (k2[x] + p.kappa_check) * g2norm;
    }
    let mut g6 = transform_forward(grid, &[s6])?.gradient();
    let mut t6 = vec![vec![0.0f64; npts]; pairs.len()];
    for (idx, &(i, j)) in pairs.iter().enumerate() {
        for x in 0..npts {
            t6[idx][x] = (k3[x] + p.kappa_bar) * gd.grad_a[i][x] * gd.grad_a[j][x];
        }
    }
    g6.add_scaled(&divergence_symmetric(&transform_forward(grid, &t6)?, dim), -1.0);

    let mut terms = [g1, g2, g3, g4, g5, g6];
    if dealias {
        let keep = grid.dealias_keep();
        for t in &mut terms {
            t.dealias_truncate(keep);
        }
    }
    Ok(terms)
}

/// Total nonlinear momentum source `g = g1 + ... + g6`.
pub fn nonlinear_g(s: &State, p: &PhysParams, dealias: bool) -> Result<SpectralField> {
    let terms = nonlinear_terms(s, p, dealias)?;
    let mut sum = SpectralField::zeros(s.grid(), s.grid().dim);
    for t in &terms {
        sum.add_scaled(t, 1.0);
    }
    Ok(sum)
}

/// Momentum tendency of the conservative system evaluated directly:
/// `[-div(rho u (x) u) - grad P(rho) + div(2 mu(rho) D(u)) + grad(lambda(rho) div u) + div K]/rho*`
/// with `rho = rho*(1+a)`, `u = m/(1+a)`, and the capillary stress
/// `div K = grad(rho kappa(rho) lap rho + (kappa(rho)+rho kappa'(rho))|grad rho|^2/2)
///          - div(kappa(rho) grad rho (x) grad rho)`.
/// Used to validate the perturbation-form splitting: this must equal
/// `A m + kappa_bar grad lap a + g(a, m)` up to rounding.
pub fn physical_momentum_tendency(s: &State, p: &PhysParams) -> Result<SpectralField> {
    let grid = s.grid();
    let dim = grid.dim;
    let npts = grid.len();
    let gd = grid_data(s)?;
    let pairs = symmetric_pairs(dim);
    let kprime = p.capillarity.derivative();

    // -div((1+a) u (x) u)
    let mut conv = vec![vec![0.0f64; npts]; pairs.len()];
    for (idx, &(i, j)) in pairs.iter().enumerate() {
        for x in 0..npts {
            conv[idx][x] = (1.0 + gd.a[x]) * gd.u[i][x] * gd.u[j][x];
        }
    }
    let mut out = divergence_symmetric(&transform_forward(grid, &conv)?, dim);
    out.scale(-1.0);

    // -grad(P(rho)/rho*)
    let mut pres = vec![0.0f64; npts];
    for x in 0..npts {
        pres[x] = p.pressure.eval(p.rho_star * (1.0 + gd.a[x])) / p.rho_star;
    }
    out.add_scaled(&transform_forward(grid, &[pres])?.gradient(), -1.0);

    // div(2 (mu(rho)/rho*) D(u)) + grad((lambda(rho)/rho*) div u)
    let mut visc = vec![vec![0.0f64; npts]; pairs.len()];
    for (idx, &(i, j)) in pairs.iter().enumerate() {
        for x in 0..npts {
            let rho = p.rho_star * (1.0 + gd.a[x]);
            let dij = 0.5 * (gd.grad_u[i][j][x] + gd.grad_u[j][i][x]);
            visc[idx][x] = 2.0 * p.shear.eval(rho) / p.rho_star * dij;
        }
    }
    out.add_scaled(&divergence_symmetric(&transform_forward(grid, &visc)?, dim), 1.0);
    let mut bulkdiv = vec![0.0f64; npts];
    for x in 0..npts {
        let rho = p.rho_star * (1.0 + gd.a[x]);
        bulkdiv[x] = p.bulk.eval(rho) / p.rho_star * gd.div_u[x];
    }
    out.add_scaled(&transform_forward(grid, &[bulkdiv])?.gradient(), 1.0);

    // Capillary stress, scaled: grad(rho kappa(rho) lap a + rho*/2 (kappa+rho kappa')|grad a|^2)
    //                           - div(rho* kappa(rho) grad a (x) grad a).
    let mut cap = vec![0.0f64; npts];
    for x in 0..npts {
        let rho = p.rho_star * (1.0 + gd.a[x]);
        let mut g2norm = 0.0;
        for i in 0..dim {
            g2norm += gd.grad_a[i][x] * gd.grad_a[i][x];
        }
        cap[x] = rho * p.capillarity.eval(rho) * gd.lap_a[x]
            + 0.5 * p.rho_star * (p.capillarity.eval(rho) + rho * kprime.eval(rho)) * g2norm;
    }
    out.add_scaled(&transform_forward(grid, &[cap])?.gradient(), 1.0);
    let mut capt = vec![vec![0.0f64; npts]; pairs.len()];
    for (idx, &(i, j)) in pairs.iter().enumerate() {
        for x in 0..npts {
            let rho = p.rho_star * (1.0 + gd.a[x]);
            capt[idx][x] = p.rho_star * p.capillarity.eval(rho) * gd.grad_a[i][x] * gd.grad_a[j][x];
        }
    }
    out.add_scaled(&divergence_symmetric(&transform_forward(grid, &capt)?, dim), -1.0);

    let _ = gd.min_density;
    Ok(out)
}
