//! Periodic box discretization and the discrete wavenumber lattice.
//!
//! A [`GridSpec`] describes the box `[0, L)^d` sampled on `n` equispaced
//! points per axis. Spectral coefficients live on the signed integer lattice
//! `k` with `-n/2 <= k_i < n/2`, and the physical wavevector of a mode is
//! `xi = 2 pi k / L`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Largest supported spatial dimension.
pub const MAX_DIM: usize = 3;

/// Shape of the periodic computational box.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct GridSpec {
    /// Spatial dimension, `1..=3`.
    pub dim: usize,
    /// Points per axis; a power of two, at least 8.
    pub n: usize,
    /// Side length `L` of the box.
    pub box_length: f64,
}

impl GridSpec {
    pub fn new(dim: usize, n: usize, box_length: f64) -> Result<Self> {
        if dim == 0 || dim > MAX_DIM {
            return Err(Error::InvalidGrid(format!("dim = {dim}, need 1..={MAX_DIM}")));
        }
        if n < 8 || !n.is_power_of_two() {
            return Err(Error::InvalidGrid(format!(
                "n = {n}, need a power of two >= 8"
            )));
        }
        if !(box_length > 0.0) || !box_length.is_finite() {
            return Err(Error::InvalidGrid(format!("box_length = {box_length}")));
        }
        Ok(Self { dim, n, box_length })
    }

    /// Total number of lattice points `n^dim`.
    pub fn len(&self) -> usize {
        self.n.pow(self.dim as u32)
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    /// Row-major strides; axes beyond `dim` get stride 0.
    pub fn strides(&self) -> [usize; MAX_DIM] {
        let mut s = [0usize; MAX_DIM];
        s[self.dim - 1] = 1;
        for ax in (0..self.dim - 1).rev() {
            s[ax] = s[ax + 1] * self.n;
        }
        s
    }

    /// Smallest nonzero wavenumber `2 pi / L`.
    pub fn fundamental(&self) -> f64 {
        2.0 * std::f64::consts::PI / self.box_length
    }

    /// Wavenumber entering odd (direction-carrying) derivatives: the signed
    /// `2 pi k / L`, except the unpaired Nyquist mode `k = -n/2`, which
    /// differentiates to zero. On an even grid that mode has no conjugate
    /// partner, so any other choice would turn real fields complex.
    pub fn deriv_wavenumber(&self, k: i64) -> f64 {
        if 2 * k == -(self.n as i64) {
            0.0
        } else {
            k as f64 * self.fundamental()
        }
    }

    /// Signed lattice index of DFT bin `i`: `i` for `i < n/2`, else `i - n`.
    pub fn signed_mode(&self, i: usize) -> i64 {
        if i < self.n / 2 {
            i as i64
        } else {
            i as i64 - self.n as i64
        }
    }

    /// DFT bin of a signed lattice index.
    pub fn bin_of_mode(&self, k: i64) -> usize {
        k.rem_euclid(self.n as i64) as usize
    }

    /// Per-axis table of signed lattice indices by DFT bin.
    pub fn mode_table(&self) -> Vec<i64> {
        (0..self.n).map(|i| self.signed_mode(i)).collect()
    }

    /// Per-axis table of wavenumbers `2 pi k / L` by DFT bin.
    pub fn xi_table(&self) -> Vec<f64> {
        let h = self.fundamental();
        (0..self.n).map(|i| self.signed_mode(i) as f64 * h).collect()
    }

    /// Decompose a flat index into per-axis DFT bins.
    pub fn decompose(&self, flat: usize) -> [usize; MAX_DIM] {
        let mut out = [0usize; MAX_DIM];
        let mut rest = flat;
        for ax in (0..self.dim).rev() {
            out[ax] = rest % self.n;
            rest /= self.n;
        }
        out
    }

    /// Flat index of per-axis DFT bins.
    pub fn flatten(&self, bins: &[usize; MAX_DIM]) -> usize {
        let mut flat = 0usize;
        for ax in 0..self.dim {
            flat = flat * self.n + bins[ax];
        }
        flat
    }

    /// Signed lattice vector of a flat index (unused axes are 0).
    pub fn mode_vector(&self, flat: usize) -> [i64; MAX_DIM] {
        let bins = self.decompose(flat);
        let mut k = [0i64; MAX_DIM];
        for ax in 0..self.dim {
            k[ax] = self.signed_mode(bins[ax]);
        }
        k
    }

    /// Wavevector `xi = 2 pi k / L` of a flat index (unused axes are 0).
    pub fn wavevector(&self, flat: usize) -> [f64; MAX_DIM] {
        let k = self.mode_vector(flat);
        let h = self.fundamental();
        let mut xi = [0.0; MAX_DIM];
        for ax in 0..self.dim {
            xi[ax] = k[ax] as f64 * h;
        }
        xi
    }

    /// Flat index of the mode conjugate to `flat` (negated lattice vector).
    pub fn conjugate_index(&self, flat: usize) -> usize {
        let bins = self.decompose(flat);
        let mut neg = [0usize; MAX_DIM];
        for ax in 0..self.dim {
            neg[ax] = (self.n - bins[ax]) % self.n;
        }
        self.flatten(&neg)
    }

    /// Grid spacing `L / n`.
    pub fn spacing(&self) -> f64 {
        self.box_length / self.n as f64
    }

    /// Volume `L^dim` of the box.
    pub fn volume(&self) -> f64 {
        self.box_length.powi(self.dim as i32)
    }

    /// Volume of one grid cell, `(L/n)^dim`.
    pub fn cell_volume(&self) -> f64 {
        self.spacing().powi(self.dim as i32)
    }

    /// Largest per-axis wavenumber magnitude, `(2 pi / L)(n/2)`.
    pub fn nyquist_wavenumber(&self) -> f64 {
        self.fundamental() * (self.n / 2) as f64
    }

    /// Largest radial wavenumber on the lattice (at the Nyquist corner).
    pub fn max_radial_wavenumber(&self) -> f64 {
        self.nyquist_wavenumber() * (self.dim as f64).sqrt()
    }

    /// Largest per-axis signed index kept by the 2/3-rule alias-free band.
    ///
    /// Pointwise quadratic products of fields supported in `|k_i| <= K` alias
    /// onto `|k_i| >= n - 2K`; keeping `K < n/3` leaves the retained band
    /// uncontaminated.
    pub fn dealias_keep(&self) -> i64 {
        (self.n as i64 + 2) / 3 - 1
    }

    /// Wavenumber corresponding to [`GridSpec::dealias_keep`].
    pub fn dealias_cutoff(&self) -> f64 {
        self.dealias_keep() as f64 * self.fundamental()
    }

    /// Iterator over the full lattice yielding `(flat, k, xi)`.
    pub fn lattice(&self) -> Lattice {
        Lattice::new(self)
    }
}

/// Odometer-style iterator over all lattice modes.
pub struct Lattice {
    dim: usize,
    n: usize,
    len: usize,
    flat: usize,
    bins: [usize; MAX_DIM],
    modes: Vec<i64>,
    xi: Vec<f64>,
}

impl Lattice {
    fn new(grid: &GridSpec) -> Self {
        Lattice {
            dim: grid.dim,
            n: grid.n,
            len: grid.len(),
            flat: 0,
            bins: [0; MAX_DIM],
            modes: grid.mode_table(),
            xi: grid.xi_table(),
        }
    }
}

impl Iterator for Lattice {
    /// `(flat index, signed lattice vector, wavevector)`
    type Item = (usize, [i64; MAX_DIM], [f64; MAX_DIM]);

    fn next(&mut self) -> Option<Self::Item> {
        if self.flat >= self.len {
            return None;
        }
        let mut k = [0i64; MAX_DIM];
        let mut xi = [0.0f64; MAX_DIM];
        for ax in 0..self.dim {
            k[ax] = self.modes[self.bins[ax]];
            xi[ax] = self.xi[self.bins[ax]];
        }
        let item = (self.flat, k, xi);
        self.flat += 1;
        for ax in (0..self.dim).rev() {
            self.bins[ax] += 1;
            if self.bins[ax] < self.n {
                break;
            }
            self.bins[ax] = 0;
        }
        Some(item)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rejects_bad_shapes() {
        assert!(GridSpec::new(0, 16, 1.0).is_err());
        assert!(GridSpec::new(4, 16, 1.0).is_err());
        assert!(GridSpec::new(2, 12, 1.0).is_err());
        assert!(GridSpec::new(2, 4, 1.0).is_err());
        assert!(GridSpec::new(2, 16, 0.0).is_err());
        assert!(GridSpec::new(3, 8, 2.0).is_ok());
    }

    #[test]
    fn signed_modes_cover_expected_range() {
        let g = GridSpec::new(1, 8, 1.0).unwrap();
        let modes: Vec<i64> = (0..8).map(|i| g.signed_mode(i)).collect();
        assert_eq!(modes, vec![0, 1, 2, 3, -4, -3, -2, -1]);
        for i in 0..8 {
            assert_eq!(g.bin_of_mode(modes[i]), i);
        }
    }

    #[test]
    fn lattice_matches_decompose() {
        let g = GridSpec::new(3, 8, 2.0).unwrap();
        for (flat, k, xi) in g.lattice() {
            assert_eq!(k, g.mode_vector(flat));
            let xi_ref = g.wavevector(flat);
            for ax in 0..3 {
                assert!((xi[ax] - xi_ref[ax]).abs() < 1e-15);
            }
        }
        assert_eq!(g.lattice().count(), g.len());
    }

    #[test]
    fn conjugate_index_negates_modes() {
        let g = GridSpec::new(2, 16, 1.0).unwrap();
        for (flat, k, _) in g.lattice() {
            let conj = g.conjugate_index(flat);
            let kc = g.mode_vector(conj);
            for ax in 0..2 {
                // Nyquist bins are their own conjugates.
                if k[ax] == -(g.n as i64) / 2 {
                    assert_eq!(kc[ax], k[ax]);
                } else {
                    assert_eq!(kc[ax], -k[ax]);
                }
            }
        }
    }

    #[test]
    fn dealias_band_is_alias_free() {
        for n in [8usize, 16, 32, 64, 128] {
            let g = GridSpec::new(1, n, 1.0).unwrap();
            let keep = g.dealias_keep();
            assert!(keep >= 2);
            // A sum of two retained modes that wraps around lands outside the band.
            assert!(n as i64 - 2 * keep > keep);
        }
    }
}
