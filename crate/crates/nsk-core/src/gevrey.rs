//! Analytic-regularity (Gevrey) multipliers and inequality probes.
//!
//! The central object is the weight e^{tau |xi|_1} with the anisotropic
//! l1 length |xi|_1 = sum_i |xi_i|. Smoothing (negative exponent) is the
//! Fourier side of a tensor product of Poisson kernels and contracts every
//! Lp norm; amplification is only meaningful on band-limited data and is
//! protected by a hard overflow guard plus relative dust zeroing, since
//! amplifying rounding noise at high modes would swamp the signal.
//!
//! Around the weight this module collects numerical verifiers for the
//! multiplier and product inequalities the decay analysis rests on: the
//! square-root kernel norm, the Gaussian-versus-l1 symbol bound, the
//! twisted bilinear operator, maximal regularity for the forced heat
//! equation under the weight, annulus decay estimates, time-weighted band
//! inequalities, Besov product estimates, and composition bounds. Each
//! verifier returns a dimensionless ratio (left side over right side at
//! the implementation's calibrated constants) meant to stay bounded over
//! parameter sweeps; sweeps are recorded with [`SweepReport`].

use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::field::{apply_symbol, lebesgue_norm, SpectralField, Symbol};
use crate::grid::{GridSpec, MAX_DIM};
use crate::littlewood_paley::{besov_norm, Band, BesovSpec, CheminLernerSpec, DyadicPartition, FieldSeries};
use crate::model::{Alpha, PhysParams};

/// Hard cap on the amplification exponent tau * |xi|_1 per retained mode.
pub const AMPLIFY_GUARD: f64 = 700.0;

/// Coefficients at or below this fraction of the largest one are treated
/// as rounding dust and zeroed before amplification.
pub const DUST_RELATIVE: f64 = 1e-14;

/// Calibrated annulus decay constant: |xi|_1 >= |xi| gives c = 1/sqrt(d).
pub fn annulus_decay_constant(dim: usize) -> f64 {
    1.0 / (dim as f64).sqrt()
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum GevreyDirection {
    Amplify,
    Smooth,
}

/// Weight e^{+tau |xi|_1} (amplify) or e^{-tau |xi|_1} (smooth).
#[derive(Clone, Copy, Debug)]
pub struct GevreyWeight {
    tau: f64,
    direction: GevreyDirection,
}

impl GevreyWeight {
    pub fn new(tau: f64, direction: GevreyDirection) -> Result<Self> {
        if !(tau >= 0.0) || !tau.is_finite() {
            return Err(Error::InvalidExponent(tau));
        }
        Ok(GevreyWeight { tau, direction })
    }

    pub fn amplify(tau: f64) -> Result<Self> {
        Self::new(tau, GevreyDirection::Amplify)
    }

    pub fn smooth(tau: f64) -> Result<Self> {
        Self::new(tau, GevreyDirection::Smooth)
    }

    pub fn tau(&self) -> f64 {
        self.tau
    }

    pub fn direction(&self) -> GevreyDirection {
        self.direction
    }
}

/// Rate constant under the square root in the moving radius sqrt(c0 t).
#[derive(Clone, Copy, Debug)]
pub struct GevreyConstant {
    c0: f64,
}

impl GevreyConstant {
    pub fn new(c0: f64) -> Result<Self> {
        if !(c0 > 0.0) || !c0.is_finite() {
            return Err(Error::InvalidExponent(c0));
        }
        Ok(GevreyConstant { c0 })
    }

    /// Conservative default: a quarter of the slowest dissipation rate
    /// among the shear rate and the two density-momentum rates.
    pub fn default_for(p: &PhysParams, alpha: &Alpha) -> Self {
        let slowest = p
            .mu_bar
            .min(alpha.value())
            .min(alpha.conjugate_rate(p));
        GevreyConstant { c0: 0.25 * slowest }
    }

    pub fn value(&self) -> f64 {
        self.c0
    }

    /// Moving analyticity radius sqrt(c0 t).
    pub fn radius_at(&self, t: f64) -> f64 {
        (self.c0 * t).max(0.0).sqrt()
    }
}

fn l1_length(xi: &[f64; MAX_DIM]) -> f64 {
    xi.iter().map(|x| x.abs()).sum()
}

/// Scale every coefficient by e^{+-tau |xi|_1}. Amplification zeroes dust
/// coefficients first and rejects any retained mode whose exponent would
/// exceed [`AMPLIFY_GUARD`], naming the offending mode.
pub fn gevrey_apply(f: &SpectralField, w: &GevreyWeight) -> Result<SpectralField> {
    let grid = f.grid();
    let mut out = f.clone();
    if w.tau == 0.0 {
        return Ok(out);
    }
    match w.direction {
        GevreyDirection::Smooth => {
            for (flat, _, xi) in grid.lattice() {
                let fac = (-w.tau * l1_length(&xi)).exp();
                for c in 0..out.ncomp() {
                    out.coeffs_mut(c)[flat] *= fac;
                }
            }
        }
        GevreyDirection::Amplify => {
            let floor = DUST_RELATIVE * f.max_coefficient();
            for (flat, k, xi) in grid.lattice() {
                let l1 = l1_length(&xi);
                let live = (0..f.ncomp()).any(|c| f.coeffs(c)[flat].norm() > floor);
                if !live {
                    for c in 0..out.ncomp() {
                        out.coeffs_mut(c)[flat] = Complex64::new(0.0, 0.0);
                    }
                    continue;
                }
                let exponent = w.tau * l1;
                if exponent > AMPLIFY_GUARD {
                    return Err(Error::GevreyOverflow {
                        mode: k,
                        exponent,
                        max_tau: AMPLIFY_GUARD / l1,
                    });
                }
                let fac = exponent.exp();
                for c in 0..out.ncomp() {
                    let v = out.coeffs(c)[flat];
                    out.coeffs_mut(c)[flat] = if v.norm() > floor {
                        v * fac
                    } else {
                        Complex64::new(0.0, 0.0)
                    };
                }
            }
        }
    }
    Ok(out)
}

/// L1 norm of the kernel of e^{-delta Lambda_1} on the reference line,
/// delta = sqrt(t-s) + sqrt(s) - sqrt(t) >= 0 (concavity of the square
/// root); the d-dimensional kernel is the tensor power, so its norm is
/// this value to the d-th power. delta = 0 is the identity with norm 1.
/// The kernel is the Poisson kernel; substituting x = delta sinh(u) turns
/// the integral into the integral of 1/cosh over the line, evaluated by
/// Simpson's rule on |u| <= 35 where the tail is below 1e-15.
pub fn kernel_f_norm(s: f64, t: f64) -> Result<f64> {
    if !(0.0 <= s && s <= t) || !t.is_finite() {
        return Err(Error::InvalidConfig(format!(
            "kernel norm needs 0 <= s <= t, got s = {s}, t = {t}"
        )));
    }
    let delta = (t - s).sqrt() + s.sqrt() - t.sqrt();
    if delta <= 1e-15 * (1.0 + t.sqrt()) {
        return Ok(1.0);
    }
    let half_width = 35.0f64;
    let n = 7000usize;
    let h = 2.0 * half_width / n as f64;
    let f = |u: f64| 1.0 / u.cosh();
    let mut acc = f(-half_width) + f(half_width);
    for i in 1..n {
        let u = -half_width + h * i as f64;
        acc += if i % 2 == 1 { 4.0 } else { 2.0 } * f(u);
    }
    Ok(acc * h / 3.0 / std::f64::consts::PI)
}

/// Lattice supremum of the symbol e^{-a |xi|^2 / 2 + sqrt(a) |xi|_1}. The
/// per-coordinate exponent peaks at |xi_i| = 1/sqrt(a) with value 1/2, so
/// the supremum never exceeds e^{d/2} for any a >= 0.
pub fn multiplier32_bound(a: f64, grid: GridSpec) -> Result<f64> {
    if !(a >= 0.0) || !a.is_finite() {
        return Err(Error::InvalidExponent(a));
    }
    let mut best = 0.0f64;
    for (_, _, xi) in grid.lattice() {
        let r2: f64 = xi.iter().map(|x| x * x).sum();
        let expo = -0.5 * a * r2 + a.sqrt() * l1_length(&xi);
        best = best.max(expo);
    }
    Ok(best.exp())
}

/// Twisted product: amplify the plain (dealiased) product of the smoothed
/// factors. At t = 0 this is the plain dealiased pointwise product.
pub fn bilinear_gevrey(
    f: &SpectralField,
    g: &SpectralField,
    t: f64,
    c0: GevreyConstant,
) -> Result<SpectralField> {
    let grid = f.grid();
    if g.grid() != grid || f.ncomp() != 1 || g.ncomp() != 1 {
        return Err(Error::InvalidConfig(
            "twisted product needs two scalar fields on one grid".into(),
        ));
    }
    if !(t >= 0.0) {
        return Err(Error::InvalidConfig(format!("time t = {t}, need >= 0")));
    }
    let tau = c0.radius_at(t);
    let sf = gevrey_apply(f, &GevreyWeight::smooth(tau)?)?;
    let sg = gevrey_apply(g, &GevreyWeight::smooth(tau)?)?;
    let pf = sf.to_grid()?;
    let pg = sg.to_grid()?;
    let vals: Vec<f64> = pf[0].iter().zip(&pg[0]).map(|(x, y)| x * y).collect();
    let mut prod = SpectralField::from_grid(grid, &[vals])?;
    prod.dealias_truncate(grid.dealias_keep());
    gevrey_apply(&prod, &GevreyWeight::amplify(tau)?)
}

fn inv_exponent(rho: f64) -> f64 {
    if rho.is_infinite() {
        0.0
    } else {
        1.0 / rho
    }
}

/// Maximal-regularity ratio for the forced heat equation under the moving
/// weight. The solution of dv/dt - mu lap v = F, v(0) = v0, is formed
/// exactly per mode (Duhamel with exponential factors, trapezoid in the
/// source time). With V = e^{sqrt(c0 t) Lambda_1} v the ratio is
///
///   mu^{1/rho1} |V| in L^rho1_t Besov(sigma + 2/rho1)
///   over |v0| in Besov(sigma) + mu^{1/rho2 - 1} |weighted F| in
///   L^rho2_t Besov(sigma - 2 + 2/rho2),
///
/// which stays bounded over (sigma, p, r, rho1, rho2, mu). The spec's
/// high exponent plays rho1 (solution side), the low one rho2 (source
/// side), and the spatial base is the high-band component used across all
/// blocks. Zero data returns 0.
pub fn heat_gevrey_maxreg_check(
    v0: &SpectralField,
    forcing: &FieldSeries,
    mu: f64,
    spec: &CheminLernerSpec,
    c0: GevreyConstant,
) -> Result<f64> {
    if !(mu > 0.0) || !mu.is_finite() {
        return Err(Error::InvalidConfig(format!("diffusivity mu = {mu}")));
    }
    let rho1 = spec.rho_high;
    let rho2 = spec.rho_low;
    if rho1 < rho2 {
        return Err(Error::InvalidConfig(format!(
            "solution exponent rho1 = {rho1} must be >= source exponent rho2 = {rho2}"
        )));
    }
    let grid = v0.grid();
    if v0.ncomp() != 1 {
        return Err(Error::InvalidConfig("heat check takes a scalar field".into()));
    }
    let times = spec.time_samples.as_slice();
    if times.len() != forcing.len()
        || times
            .iter()
            .zip(forcing.times())
            .any(|(a, b)| (a - b).abs() > 1e-12 * (1.0 + b.abs()))
        || forcing.fields().iter().any(|f| f.grid() != grid)
    {
        return Err(Error::InvalidConfig(
            "forcing series must live on the check's time grid and spatial grid".into(),
        ));
    }
    if times.first().copied() != Some(0.0) {
        return Err(Error::InvalidConfig(
            "heat check needs the time grid to start at 0".into(),
        ));
    }

    let r2: Vec<f64> = grid
        .lattice()
        .map(|(_, _, xi)| xi.iter().map(|x| x * x).sum())
        .collect();

    // Exact per-mode Duhamel evolution on the sample grid.
    let mut sol_fields = Vec::with_capacity(times.len());
    for (k, &tk) in times.iter().enumerate() {
        let mut v = v0.clone();
        {
            let coeffs = v.coeffs_mut(0);
            for (c, &rr) in coeffs.iter_mut().zip(&r2) {
                *c *= (-mu * rr * tk).exp();
            }
        }
        for i in 0..k {
            let w = 0.5 * (times[i + 1] - times[i]);
            let add = |v: &mut SpectralField, idx: usize, weight: f64| {
                let src = forcing.fields()[idx].coeffs(0);
                let ti = times[idx];
                let coeffs = v.coeffs_mut(0);
                for ((c, &s), &rr) in coeffs.iter_mut().zip(src).zip(&r2) {
                    *c += weight * (-mu * rr * (tk - ti)).exp() * s;
                }
            };
            add(&mut v, i, w);
            add(&mut v, i + 1, w);
        }
        sol_fields.push(v);
    }

    let part = DyadicPartition::for_grid(grid);
    let base = spec.space.high;
    let weighted = |fields: &[SpectralField]| -> Result<Vec<SpectralField>> {
        fields
            .iter()
            .zip(times)
            .map(|(f, &tk)| gevrey_apply(f, &GevreyWeight::amplify(c0.radius_at(tk))?))
            .collect()
    };

    let v_series = FieldSeries::new(times.to_vec(), weighted(&sol_fields)?)?;
    let f_series = FieldSeries::new(times.to_vec(), weighted(forcing.fields())?)?;

    let s1 = BesovSpec::new(base.s + 2.0 * inv_exponent(rho1), base.p, base.r)?;
    let s2 = BesovSpec::new(base.s - 2.0 + 2.0 * inv_exponent(rho2), base.p, base.r)?;
    let lhs = mu.powf(inv_exponent(rho1))
        * crate::littlewood_paley::chemin_lerner_band(&part, &v_series, s1, rho1, Band::All)?;
    let data = besov_norm(&part, v0, BesovSpec::new(base.s, base.p, base.r)?, Band::All)?;
    let src = mu.powf(inv_exponent(rho2) - 1.0)
        * crate::littlewood_paley::chemin_lerner_band(&part, &f_series, s2, rho2, Band::All)?;
    let rhs = data + src;
    if rhs == 0.0 {
        return Ok(0.0);
    }
    Ok(lhs / rhs)
}

/// Annulus decay ratio: for u with spectrum in an annulus of outer radius
/// lambda, the quantity |Lambda^zeta e^{-alpha Lambda_1} u|_p divided by
/// lambda^zeta e^{-c alpha lambda} |u|_p with the calibrated c = 1/sqrt(d).
/// lambda is read off the support of u (dust-filtered). Zero input gives 0.
pub fn lemma_annulus_ratio(u: &SpectralField, zeta: f64, alpha: f64, p: f64) -> Result<f64> {
    if !(alpha > 0.0) || !alpha.is_finite() {
        return Err(Error::InvalidExponent(alpha));
    }
    if u.ncomp() != 1 {
        return Err(Error::InvalidConfig("annulus check takes a scalar field".into()));
    }
    let grid = u.grid();
    let floor = DUST_RELATIVE * u.max_coefficient();
    if u.max_coefficient() == 0.0 {
        return Ok(0.0);
    }
    let mut lambda = 0.0f64;
    for (flat, _, xi) in grid.lattice() {
        if u.coeffs(0)[flat].norm() > floor {
            let r: f64 = xi.iter().map(|x| x * x).sum::<f64>().sqrt();
            lambda = lambda.max(r);
        }
    }
    if lambda == 0.0 {
        return Err(Error::EmptyBand(
            "annulus check needs support away from the zero mode".into(),
        ));
    }
    let mut num_field = u.clone();
    num_field.scale_modes(|xi, _| {
        let r: f64 = xi.iter().map(|x| x * x).sum::<f64>().sqrt();
        if r == 0.0 {
            0.0
        } else {
            r.powf(zeta) * (-alpha * l1_length(xi)).exp()
        }
    });
    let num = lebesgue_norm(&num_field, p)?;
    let c = annulus_decay_constant(grid.dim);
    let den = lambda.powf(zeta) * (-c * alpha * lambda).exp() * lebesgue_norm(u, p)?;
    if den == 0.0 {
        return Ok(0.0);
    }
    Ok(num / den)
}

/// Time-weighted band inequality ratio. Low band:
///   t^{zeta/2} |Lambda^zeta u| in Besov(sigma, q, 1) over the same band
///   norm with r = infinity of the amplified field.
/// High band: the numerator additionally carries e^{a sqrt(t)} with
/// a = (c/2) sqrt(c0) 2^{j0}. Both stay bounded over t sweeps. The band
/// must name a split point; zeta must be positive (the dyadic sum behind
/// the estimate diverges otherwise).
pub fn lemma_band_ratio(
    u: &SpectralField,
    zeta: f64,
    t: f64,
    band: Band,
    space: BesovSpec,
    c0: GevreyConstant,
) -> Result<f64> {
    if !(zeta > 0.0) {
        return Err(Error::InvalidExponent(zeta));
    }
    if !(t > 0.0) || !t.is_finite() {
        return Err(Error::InvalidConfig(format!("time t = {t}, need > 0")));
    }
    let j0 = match band {
        Band::Low { j0 } | Band::High { j0 } => j0,
        Band::All => {
            return Err(Error::InvalidConfig(
                "band ratio needs a low or high band, not the full range".into(),
            ))
        }
    };
    if u.max_coefficient() == 0.0 {
        return Ok(0.0);
    }
    let part = DyadicPartition::for_grid(u.grid());
    let num_field = apply_symbol(u, &Symbol::abs_pow(zeta));
    let num_spec = BesovSpec::new(space.s, space.p, 1.0)?;
    let num = besov_norm(&part, &num_field, num_spec, band)?;
    let amp = gevrey_apply(u, &GevreyWeight::amplify(c0.radius_at(t))?)?;
    let den_spec = BesovSpec::new(space.s, space.p, f64::INFINITY)?;
    let den = besov_norm(&part, &amp, den_spec, band)?;
    if den == 0.0 {
        return Ok(0.0);
    }
    let mut scale = t.powf(0.5 * zeta);
    if matches!(band, Band::High { .. }) {
        let c = annulus_decay_constant(u.grid().dim);
        let a = 0.5 * c * c0.value().sqrt() * 2.0f64.powi(j0);
        scale *= (a * t.sqrt()).exp();
    }
    Ok(scale * num / den)
}

/// Which product estimate to exercise.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ProductVariant {
    /// Both factors measured with the same integrability p.
    M1,
    /// Second factor measured with the product's integrability q.
    M2,
}

#[allow(clippy::too_many_arguments)]
fn product_indices_check(
    s: f64,
    s1: f64,
    s2: f64,
    p: f64,
    q: f64,
    d: f64,
    variant: ProductVariant,
) -> Result<()> {
    let fail = |name: &str| Err(Error::IndexConstraint(name.to_string()));
    if !(p > 1.0 && p.is_finite()) || !(q > 1.0 && q.is_finite()) {
        return fail("1 < p, q < infinity");
    }
    if p > 2.0 * q {
        return fail("p <= 2q");
    }
    match variant {
        ProductVariant::M1 => {
            if (s + 2.0 * d / p - d / q - s1 - s2).abs() > 1e-9 {
                return fail("s + 2d/p - d/q = s1 + s2");
            }
            if s1 + s2 < (0.0f64).max(d * (2.0 / p - 1.0)) - 1e-12 {
                return fail("s1 + s2 >= max(0, d(2/p - 1))");
            }
            let lim = d * (1.0 / p).min(2.0 / p - 1.0 / q);
            if s1 > lim + 1e-12 {
                return fail("s1 <= d min(1/p, 2/p - 1/q)");
            }
            if s2 >= lim - 1e-12 {
                return fail("s2 < d min(1/p, 2/p - 1/q)");
            }
        }
        ProductVariant::M2 => {
            if (s + d / p - s1 - s2).abs() > 1e-9 {
                return fail("s + d/p = s1 + s2");
            }
            if s1 + s2 < (0.0f64).max(d * (1.0 / p + 1.0 / q - 1.0)) - 1e-12 {
                return fail("s1 + s2 >= max(0, d(1/p + 1/q - 1))");
            }
            if s1 > d / p + 1e-12 {
                return fail("s1 <= d/p");
            }
            if s2 >= d * (1.0 / p).min(1.0 / q) - 1e-12 {
                return fail("s2 < d min(1/p, 1/q)");
            }
        }
    }
    Ok(())
}

/// Product estimate ratio: the weighted Besov norm of the product over the
/// product of factor norms, with A and B the amplified factors:
///
///   M1: |weighted(ab)| in Besov(s, q, inf) over
///       |A| in Besov(s1, p, 1) times |B| in Besov(s2, p, inf),
///   M2: same numerator over |A| in Besov(s1, p, 1) times
///       |B| in Besov(s2, q, inf).
///
/// Index constraints are validated up front; violations name the failed
/// inequality. A zero factor gives 0.
#[allow(clippy::too_many_arguments)]
pub fn product_estimate_ratio(
    a: &SpectralField,
    b: &SpectralField,
    s: f64,
    s1: f64,
    s2: f64,
    p: f64,
    q: f64,
    variant: ProductVariant,
    t: f64,
    c0: GevreyConstant,
) -> Result<f64> {
    let grid = a.grid();
    if b.grid() != grid || a.ncomp() != 1 || b.ncomp() != 1 {
        return Err(Error::InvalidConfig(
            "product check needs two scalar fields on one grid".into(),
        ));
    }
    product_indices_check(s, s1, s2, p, q, grid.dim as f64, variant)?;
    if !(t >= 0.0) {
        return Err(Error::InvalidConfig(format!("time t = {t}, need >= 0")));
    }
    let tau = c0.radius_at(t);
    let part = DyadicPartition::for_grid(grid);

    let ga = a.to_grid()?;
    let gb = b.to_grid()?;
    let vals: Vec<f64> = ga[0].iter().zip(&gb[0]).map(|(x, y)| x * y).collect();
    let mut prod = SpectralField::from_grid(grid, &[vals])?;
    prod.dealias_truncate(grid.dealias_keep());
    let weighted_prod = gevrey_apply(&prod, &GevreyWeight::amplify(tau)?)?;
    let cap_a = gevrey_apply(a, &GevreyWeight::amplify(tau)?)?;
    let cap_b = gevrey_apply(b, &GevreyWeight::amplify(tau)?)?;

    let num = besov_norm(
        &part,
        &weighted_prod,
        BesovSpec::new(s, q, f64::INFINITY)?,
        Band::All,
    )?;
    let na = besov_norm(&part, &cap_a, BesovSpec::new(s1, p, 1.0)?, Band::All)?;
    let b_integrability = match variant {
        ProductVariant::M1 => p,
        ProductVariant::M2 => q,
    };
    let nb = besov_norm(
        &part,
        &cap_b,
        BesovSpec::new(s2, b_integrability, f64::INFINITY)?,
        Band::All,
    )?;
    let den = na * nb;
    if den == 0.0 {
        return Ok(0.0);
    }
    Ok(num / den)
}

/// Composition bound ratio for an analytic closure F with F(0) = 0:
/// the weighted norm of F(z) over the weighted norm of z, both in
/// Besov(space). The weighted Besov(d/p, p, 1) norm of z must not exceed
/// `r0` (the smallness radius), and the regularity must satisfy
/// -d min(1/p, 1/p') < s < d/p.
pub fn composition_gevrey_check(
    z: &SpectralField,
    f: &dyn Fn(f64) -> f64,
    space: BesovSpec,
    c0: GevreyConstant,
    t: f64,
    r0: f64,
) -> Result<f64> {
    if z.ncomp() != 1 {
        return Err(Error::InvalidConfig(
            "composition check takes a scalar field".into(),
        ));
    }
    if f(0.0).abs() > 1e-12 {
        return Err(Error::InvalidConfig(
            "composition closure must vanish at 0".into(),
        ));
    }
    let grid = z.grid();
    let d = grid.dim as f64;
    let p = space.p;
    let lower = -d * (1.0 / p).min(1.0 - 1.0 / p);
    if !(space.s > lower && space.s < d / p) {
        return Err(Error::IndexConstraint(format!(
            "-d min(1/p, 1/p') < s < d/p fails at s = {}, p = {p}",
            space.s
        )));
    }
    if !(t >= 0.0) {
        return Err(Error::InvalidConfig(format!("time t = {t}, need >= 0")));
    }
    let tau = c0.radius_at(t);
    let part = DyadicPartition::for_grid(grid);
    let cap_z = gevrey_apply(z, &GevreyWeight::amplify(tau)?)?;
    let small = besov_norm(&part, &cap_z, BesovSpec::new(d / p, p, 1.0)?, Band::All)?;
    if small > r0 {
        return Err(Error::SmallnessViolated(format!(
            "weighted critical norm {small:.6e} exceeds the radius {r0:.6e}"
        )));
    }
    let den = besov_norm(&part, &cap_z, space, Band::All)?;
    if den == 0.0 {
        return Ok(0.0);
    }
    let vals: Vec<f64> = z.to_grid()?[0].iter().map(|&x| f(x)).collect();
    let fz = SpectralField::from_grid(grid, &[vals])?;
    let cap_fz = gevrey_apply(&fz, &GevreyWeight::amplify(tau)?)?;
    let num = besov_norm(&part, &cap_fz, space, Band::All)?;
    Ok(num / den)
}

/// Labelled ratio sweep: remembers every (configuration, ratio) pair and
/// reports the extremes for regression bounds.
#[derive(Clone, Debug, Default)]
pub struct SweepReport {
    rows: Vec<(String, f64)>,
}

impl SweepReport {
    pub fn new() -> Self {
        SweepReport { rows: Vec::new() }
    }

    pub fn push(&mut self, label: impl Into<String>, value: f64) {
        self.rows.push((label.into(), value));
    }

    pub fn rows(&self) -> &[(String, f64)] {
        &self.rows
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    pub fn max(&self) -> Option<(&str, f64)> {
        self.rows
            .iter()
            .max_by(|a, b| a.1.total_cmp(&b.1))
            .map(|(s, v)| (s.as_str(), *v))
    }

    pub fn min(&self) -> Option<(&str, f64)> {
        self.rows
            .iter()
            .min_by(|a, b| a.1.total_cmp(&b.1))
            .map(|(s, v)| (s.as_str(), *v))
    }

    /// Ratio of the largest to the smallest recorded value (flatness).
    pub fn spread(&self) -> f64 {
        match (self.max(), self.min()) {
            (Some((_, hi)), Some((_, lo))) if lo > 0.0 => hi / lo,
            _ => f64::INFINITY,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::littlewood_paley::{block_lp_norm, dyadic_block};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;
    use std::f64::consts::PI;

    fn band_limited(grid: GridSpec, cap: f64, seed: u64) -> SpectralField {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let profile = move |r: f64| {
            if r > 0.0 && r <= cap {
                1.0 / (1.0 + r * r)
            } else {
                0.0
            }
        };
        SpectralField::random_hermitian(grid, 1, profile, &mut rng)
    }

    #[test]
    fn zero_radius_weight_is_the_identity() {
        let grid = GridSpec::new(2, 8, 2.0 * PI).unwrap();
        let f = band_limited(grid, 3.0, 1);
        for dir in [GevreyDirection::Amplify, GevreyDirection::Smooth] {
            let g = gevrey_apply(&f, &GevreyWeight::new(0.0, dir).unwrap()).unwrap();
            let mut diff = g.clone();
            diff.add_scaled(&f, -1.0);
            assert_eq!(diff.max_coefficient(), 0.0);
        }
    }

    #[test]
    fn single_mode_amplifies_by_the_closed_form() {
        let grid = GridSpec::new(2, 8, 2.0 * PI).unwrap();
        let h = grid.spacing();
        let vals: Vec<f64> = (0..grid.len())
            .map(|flat| (h * grid.decompose(flat)[0] as f64).cos())
            .collect();
        let f = SpectralField::from_grid(grid, &[vals]).unwrap();
        let g = gevrey_apply(&f, &GevreyWeight::amplify(1.0).unwrap()).unwrap();
        let idx = grid.flatten(&[1, 0, 0]);
        let expect = f.coeffs(0)[idx] * 1.0f64.exp();
        assert!((g.coeffs(0)[idx] - expect).norm() <= 1e-13);
    }

    #[test]
    fn smooth_then_amplify_recovers_band_limited_fields() {
        let grid = GridSpec::new(3, 8, 2.0 * PI).unwrap();
        let f = band_limited(grid, 2.5, 2);
        let tau = 0.8;
        let smooth = gevrey_apply(&f, &GevreyWeight::smooth(tau).unwrap()).unwrap();
        let back = gevrey_apply(&smooth, &GevreyWeight::amplify(tau).unwrap()).unwrap();
        let mut diff = back.clone();
        diff.add_scaled(&f, -1.0);
        assert!(diff.max_coefficient() <= 1e-10 * f.max_coefficient());
    }

    #[test]
    fn smoothing_contracts_grid_and_block_norms() {
        let grid = GridSpec::new(2, 16, 2.0 * PI).unwrap();
        let f = band_limited(grid, 6.0, 3);
        let g = gevrey_apply(&f, &GevreyWeight::smooth(0.5).unwrap()).unwrap();
        for p in [2.0, 4.0] {
            assert!(lebesgue_norm(&g, p).unwrap() <= lebesgue_norm(&f, p).unwrap() * (1.0 + 1e-12));
        }
        let part = DyadicPartition::for_grid(grid);
        for j in part.j_min()..=part.j_max() {
            let before = block_lp_norm(&part, &f, j, 4.0).unwrap();
            let after = block_lp_norm(&part, &g, j, 4.0).unwrap();
            assert!(after <= before * (1.0 + 1e-12), "block {j}");
        }
    }

    #[test]
    fn amplification_guard_names_the_mode() {
        let grid = GridSpec::new(2, 8, 2.0 * PI).unwrap();
        let f = band_limited(grid, 3.0, 4);
        match gevrey_apply(&f, &GevreyWeight::amplify(500.0).unwrap()) {
            Err(Error::GevreyOverflow {
                mode,
                exponent,
                max_tau,
            }) => {
                assert!(exponent > AMPLIFY_GUARD);
                assert!(max_tau < 500.0);
                assert!(mode.iter().any(|&k| k != 0));
            }
            other => panic!("expected an overflow, got {other:?}"),
        }
    }

    #[test]
    fn kernel_norm_is_one_at_the_boundary_and_flat_inside() {
        assert_eq!(kernel_f_norm(0.0, 7.0).unwrap(), 1.0);
        assert_eq!(kernel_f_norm(7.0, 7.0).unwrap(), 1.0);
        let mut sweep = SweepReport::new();
        for t in [0.1f64, 1.0, 10.0, 100.0] {
            for frac in [0.25, 0.5, 0.75] {
                let s: f64 = frac * t;
                let delta = (t - s).sqrt() + s.sqrt() - t.sqrt();
                assert!(delta >= 0.0);
                sweep.push(format!("t={t},s={s}"), kernel_f_norm(s, t).unwrap());
            }
        }
        let (_, hi) = sweep.max().unwrap();
        let (_, lo) = sweep.min().unwrap();
        assert!((hi - 1.0).abs() <= 1e-6 && (lo - 1.0).abs() <= 1e-6);
        assert!(sweep.spread() <= 10.0);
        assert!(kernel_f_norm(2.0, 1.0).is_err());
    }

    #[test]
    fn gaussian_l1_symbol_stays_under_the_dimensional_cap() {
        let grid1 = GridSpec::new(1, 32, 2.0 * PI).unwrap();
        assert_eq!(multiplier32_bound(0.0, grid1).unwrap(), 1.0);
        let exact = multiplier32_bound(1.0, grid1).unwrap();
        assert!((exact - 0.5f64.exp()).abs() <= 1e-12);
        let grid3 = GridSpec::new(3, 16, 2.0 * PI).unwrap();
        let cap = 1.5f64.exp() * (1.0 + 1e-9);
        for a in [1e-3, 1e-1, 1.0, 1e1, 1e3] {
            assert!(multiplier32_bound(a, grid3).unwrap() <= cap, "a = {a}");
        }
    }

    #[test]
    fn twisted_product_reduces_to_plain_product_at_time_zero() {
        let grid = GridSpec::new(2, 16, 2.0 * PI).unwrap();
        let f = band_limited(grid, 4.0, 5);
        let g = band_limited(grid, 4.0, 6);
        let c0 = GevreyConstant::new(1.0).unwrap();
        let twisted = bilinear_gevrey(&f, &g, 0.0, c0).unwrap();
        let pf = f.to_grid().unwrap();
        let pg = g.to_grid().unwrap();
        let vals: Vec<f64> = pf[0].iter().zip(&pg[0]).map(|(x, y)| x * y).collect();
        let mut plain = SpectralField::from_grid(grid, &[vals]).unwrap();
        plain.dealias_truncate(grid.dealias_keep());
        let mut diff = twisted.clone();
        diff.add_scaled(&plain, -1.0);
        assert!(diff.max_coefficient() <= 1e-12 * plain.max_coefficient());

        let zero = SpectralField::zeros(grid, 1);
        let z = bilinear_gevrey(&f, &zero, 1.0, c0).unwrap();
        assert_eq!(z.max_coefficient(), 0.0);
    }

    #[test]
    fn twisted_product_obeys_a_uniform_holder_bound() {
        let grid = GridSpec::new(2, 16, 2.0 * PI).unwrap();
        let c0 = GevreyConstant::new(0.25).unwrap();
        let mut sweep = SweepReport::new();
        for seed in 0..6u64 {
            let f = band_limited(grid, 4.0, 100 + seed);
            let g = band_limited(grid, 4.0, 200 + seed);
            let den = lebesgue_norm(&f, 4.0).unwrap() * lebesgue_norm(&g, 4.0).unwrap();
            for t in [0.0, 1.0, 10.0] {
                let b = bilinear_gevrey(&f, &g, t, c0).unwrap();
                let ratio = lebesgue_norm(&b, 2.0).unwrap() / den;
                sweep.push(format!("seed={seed},t={t}"), ratio);
            }
        }
        let (arg, hi) = sweep.max().unwrap();
        assert!(hi <= 5.0, "worst ratio {hi} at {arg}");
    }

    fn heat_spec(sigma: f64, rho1: f64, rho2: f64, times: Vec<f64>) -> CheminLernerSpec {
        let space = BesovSpec::new(sigma, 2.0, 1.0).unwrap();
        CheminLernerSpec {
            rho_high: rho1,
            rho_low: rho2,
            space: crate::littlewood_paley::HybridBesovSpec {
                high: space,
                low: space,
                j0: 0,
            },
            time_samples: times,
        }
    }

    #[test]
    fn heat_bound_is_uniform_over_diffusivity() {
        let grid = GridSpec::new(2, 16, 2.0 * PI).unwrap();
        let part = DyadicPartition::for_grid(grid);
        let f = band_limited(grid, 6.0, 7);
        let v0 = dyadic_block(&part, &f, 1);
        let times: Vec<f64> = (0..=40).map(|k| 0.05 * k as f64).collect();
        let zeros: Vec<SpectralField> =
            times.iter().map(|_| SpectralField::zeros(grid, 1)).collect();
        let forcing = FieldSeries::new(times.clone(), zeros).unwrap();
        let c0 = GevreyConstant::new(0.25).unwrap();
        let mut sweep = SweepReport::new();
        for mu in [0.1, 1.0, 10.0] {
            let spec = heat_spec(0.0, 1.0, 1.0, times.clone());
            let ratio = heat_gevrey_maxreg_check(&v0, &forcing, mu, &spec, c0).unwrap();
            assert!(ratio.is_finite() && ratio > 0.0);
            sweep.push(format!("mu={mu}"), ratio);
        }
        assert!(sweep.max().unwrap().1 <= 10.0, "{:?}", sweep.rows());
        assert!(sweep.spread() <= 10.0, "{:?}", sweep.rows());
    }

    #[test]
    fn heat_bound_handles_forced_and_empty_problems() {
        let grid = GridSpec::new(2, 16, 2.0 * PI).unwrap();
        let part = DyadicPartition::for_grid(grid);
        let block = dyadic_block(&part, &band_limited(grid, 6.0, 8), 1);
        let times: Vec<f64> = (0..=40).map(|k| 0.05 * k as f64).collect();
        let steady: Vec<SpectralField> = times.iter().map(|_| block.clone()).collect();
        let forcing = FieldSeries::new(times.clone(), steady).unwrap();
        let c0 = GevreyConstant::new(0.25).unwrap();
        let spec = heat_spec(0.0, 1.0, 1.0, times.clone());
        let v0 = SpectralField::zeros(grid, 1);
        let ratio = heat_gevrey_maxreg_check(&v0, &forcing, 1.0, &spec, c0).unwrap();
        assert!(ratio.is_finite() && ratio > 0.0 && ratio <= 10.0, "{ratio}");

        let zeros: Vec<SpectralField> =
            times.iter().map(|_| SpectralField::zeros(grid, 1)).collect();
        let empty = FieldSeries::new(times.clone(), zeros).unwrap();
        let z = heat_gevrey_maxreg_check(&v0, &empty, 1.0, &spec, c0).unwrap();
        assert_eq!(z, 0.0);
        assert!(heat_gevrey_maxreg_check(&v0, &empty, -1.0, &spec, c0).is_err());
    }

    #[test]
    fn annulus_ratio_is_controlled_and_tight_for_single_modes() {
        let grid = GridSpec::new(2, 16, 2.0 * PI).unwrap();
        let h = grid.spacing();
        let vals: Vec<f64> = (0..grid.len())
            .map(|flat| {
                let b = grid.decompose(flat);
                (h * (3 * b[0] + 2 * b[1]) as f64).cos()
            })
            .collect();
        let mode = SpectralField::from_grid(grid, &[vals]).unwrap();
        let r = lemma_annulus_ratio(&mode, 1.5, 0.7, 2.0).unwrap();
        assert!(r <= 1.0 + 1e-9, "single mode ratio {r}");

        let near_zero = lemma_annulus_ratio(&mode, 0.0, 1e-9, 2.0).unwrap();
        assert!((near_zero - 1.0).abs() <= 1e-6);

        let part = DyadicPartition::for_grid(grid);
        let f = band_limited(grid, 7.5, 9);
        let mut sweep = SweepReport::new();
        for j in 0..=2 {
            let u = dyadic_block(&part, &f, j);
            if u.max_coefficient() == 0.0 {
                continue;
            }
            for p in [2.0, 4.0] {
                let ratio = lemma_annulus_ratio(&u, 1.0, 1.0, p).unwrap();
                sweep.push(format!("j={j},p={p}"), ratio);
            }
        }
        assert!(sweep.max().unwrap().1 <= 3.0, "{:?}", sweep.rows());
        assert!(lemma_annulus_ratio(&f, 1.0, -1.0, 2.0).is_err());
    }

    #[test]
    fn band_ratios_stay_bounded_over_time_sweeps() {
        let grid = GridSpec::new(2, 32, 2.0 * PI).unwrap();
        let part = DyadicPartition::for_grid(grid);
        let f = band_limited(grid, 14.0, 10);
        let c0 = GevreyConstant::new(1.0).unwrap();
        let space = BesovSpec::new(0.0, 2.0, 1.0).unwrap();
        let j0 = 2;

        let low_block = dyadic_block(&part, &f, 0);
        let mut low = SweepReport::new();
        for t in [0.01, 0.1, 1.0, 10.0] {
            let r = lemma_band_ratio(&low_block, 1.0, t, Band::Low { j0 }, space, c0).unwrap();
            assert!(r.is_finite());
            low.push(format!("t={t}"), r);
        }
        assert!(low.max().unwrap().1 <= 3.0, "{:?}", low.rows());

        // A single mode at |xi| = 1 isolates the time dependence: the weight
        // t^{zeta/2} and the amplification e^{c0 sqrt(t)} balance around
        // t = 1, so the ratio stays within a factor of two across four
        // decades. Multi-mode blocks mix frequencies and lose this flatness.
        let line = GridSpec::new(1, 32, 2.0 * PI).unwrap();
        let h1 = line.spacing();
        let cosine: Vec<f64> = (0..line.len()).map(|i| (h1 * i as f64).cos()).collect();
        let single = SpectralField::from_grid(line, &[cosine]).unwrap();
        let c_small = GevreyConstant::new(0.25).unwrap();
        let mut flat = SweepReport::new();
        for k in 0..=4 {
            let t = 7.6e-4 * 10f64.powi(k);
            let r =
                lemma_band_ratio(&single, 0.25, t, Band::Low { j0 }, space, c_small).unwrap();
            flat.push(format!("t={t}"), r);
        }
        assert!(flat.spread() <= 3.0, "{:?}", flat.rows());

        let high_block = dyadic_block(&part, &f, 3);
        let mut high = SweepReport::new();
        for t in [0.01, 0.1, 1.0, 10.0] {
            let r = lemma_band_ratio(&high_block, 1.0, t, Band::High { j0 }, space, c0).unwrap();
            assert!(r.is_finite());
            high.push(format!("t={t}"), r);
        }
        assert!(high.max().unwrap().1 <= 5.0, "{:?}", high.rows());

        assert!(lemma_band_ratio(&low_block, 0.0, 1.0, Band::Low { j0 }, space, c0).is_err());
        assert!(lemma_band_ratio(&low_block, 1.0, 1.0, Band::All, space, c0).is_err());
        let zero = SpectralField::zeros(grid, 1);
        let z = lemma_band_ratio(&zero, 1.0, 1.0, Band::Low { j0 }, space, c0).unwrap();
        assert_eq!(z, 0.0);
    }

    #[test]
    fn product_ratio_validates_indices_and_stays_bounded() {
        let grid = GridSpec::new(3, 8, 2.0 * PI).unwrap();
        let c0 = GevreyConstant::new(0.25).unwrap();
        let d = 3.0;
        let (p, q) = (2.0, 2.0);
        let s1 = d / p - 1.0;
        let s2 = 0.0;
        let s = s1 + s2 - 2.0 * d / p + d / q;

        let a = band_limited(grid, 3.0, 11);
        let zero = SpectralField::zeros(grid, 1);
        let z =
            product_estimate_ratio(&a, &zero, s, s1, s2, p, q, ProductVariant::M1, 0.0, c0)
                .unwrap();
        assert_eq!(z, 0.0);

        let mut sweep = SweepReport::new();
        for seed in 0..10u64 {
            let fa = band_limited(grid, 3.0, 300 + seed);
            let fb = band_limited(grid, 3.0, 400 + seed);
            for t in [0.0, 1.0] {
                let r = product_estimate_ratio(&fa, &fb, s, s1, s2, p, q, ProductVariant::M1, t, c0)
                    .unwrap();
                assert!(r.is_finite());
                sweep.push(format!("seed={seed},t={t}"), r);
            }
        }
        assert!(sweep.max().unwrap().1 <= 20.0, "{:?}", sweep.max());

        let m2 = product_estimate_ratio(
            &a,
            &band_limited(grid, 3.0, 12),
            s1 + s2 - d / p,
            s1,
            s2,
            p,
            q,
            ProductVariant::M2,
            0.5,
            c0,
        )
        .unwrap();
        assert!(m2.is_finite());

        match product_estimate_ratio(&a, &a, s + 1.0, s1, s2, p, q, ProductVariant::M1, 0.0, c0) {
            Err(Error::IndexConstraint(msg)) => assert!(msg.contains("s1 + s2")),
            other => panic!("expected an index violation, got {other:?}"),
        }
        let bad_s2 = d * (1.0 / p).min(2.0 / p - 1.0 / q) + 0.1;
        let bad_s = s1 + bad_s2 - 2.0 * d / p + d / q;
        match product_estimate_ratio(&a, &a, bad_s, s1, bad_s2, p, q, ProductVariant::M1, 0.0, c0)
        {
            Err(Error::IndexConstraint(msg)) => assert!(msg.contains("s2 <")),
            other => panic!("expected an index violation, got {other:?}"),
        }
    }

    #[test]
    fn composition_ratio_matches_the_identity_and_small_square() {
        let grid = GridSpec::new(2, 16, 2.0 * PI).unwrap();
        let c0 = GevreyConstant::new(0.25).unwrap();
        let space = BesovSpec::new(0.5, 2.0, 1.0).unwrap();
        let mut z = band_limited(grid, 4.0, 13);
        let peak = z.to_grid().unwrap()[0]
            .iter()
            .fold(0.0f64, |m, &v| m.max(v.abs()));
        z.scale(0.05 / peak);

        let ident = composition_gevrey_check(&z, &|x| x, space, c0, 0.5, 100.0).unwrap();
        assert!((ident - 1.0).abs() <= 1e-6, "identity ratio {ident}");

        let square = composition_gevrey_check(&z, &|x| x * x, space, c0, 0.5, 100.0).unwrap();
        assert!(square <= 0.3, "square ratio {square}");

        let q = composition_gevrey_check(&z, &|x| x / (1.0 + x), space, c0, 0.5, 100.0).unwrap();
        assert!(q.is_finite() && q <= 5.0, "rational ratio {q}");

        match composition_gevrey_check(&z, &|x| x, space, c0, 0.5, 1e-12) {
            Err(Error::SmallnessViolated(_)) => {}
            other => panic!("expected a smallness violation, got {other:?}"),
        }
        match composition_gevrey_check(&z, &|x| x + 1.0, space, c0, 0.5, 100.0) {
            Err(Error::InvalidConfig(_)) => {}
            other => panic!("expected rejection of F(0) != 0, got {other:?}"),
        }
    }
}
