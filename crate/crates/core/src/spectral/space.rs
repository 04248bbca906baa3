use std::fmt;
use std::sync::Arc;

use num_complex::Complex64;
use rustfft::{Fft, FftPlanner};

use super::SpectralError;

/// Truncated Fourier grid on the 2π-periodic torus.
///
/// Modes are stored in FFT index order: index `i` along an axis carries the
/// wavenumber `i` for `i <= N/2` and `i - N` otherwise, so the retained range
/// is `-N/2 < k <= N/2`. The Galerkin space keeps the nonzero modes with
/// `max(|k1|, |k2|) <= (N - 1) / 3`, which is the two-thirds rule: quadratic
/// products evaluated on the `N x N` grid are alias-free on those modes.
pub struct SpectralSpace {
    n: usize,
    cutoff: i64,
    wavenumbers: Vec<(i64, i64)>,
    eigenvalues: Vec<f64>,
    retained: Vec<bool>,
    retained_indices: Vec<usize>,
    half_indices: Vec<usize>,
    mirror: Vec<usize>,
    forward: Arc<dyn Fft<f64>>,
    inverse: Arc<dyn Fft<f64>>,
}

impl fmt::Debug for SpectralSpace {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("SpectralSpace")
            .field("n", &self.n)
            .field("cutoff", &self.cutoff)
            .field("retained", &self.retained_indices.len())
            .finish()
    }
}

impl SpectralSpace {
    pub fn new(n: usize) -> Result<Arc<Self>, SpectralError> {
        if n < 4 || n % 2 != 0 {
            return Err(SpectralError::InvalidModes(n));
        }
        let cutoff = ((n - 1) / 3) as i64;
        let len = n * n;
        let mut wavenumbers = Vec::with_capacity(len);
        let mut eigenvalues = Vec::with_capacity(len);
        let mut retained = Vec::with_capacity(len);
        for i1 in 0..n {
            for i2 in 0..n {
                let k = (axis_wavenumber(i1, n), axis_wavenumber(i2, n));
                let keep = (k.0 != 0 || k.1 != 0) && k.0.abs().max(k.1.abs()) <= cutoff;
                wavenumbers.push(k);
                eigenvalues.push((k.0 * k.0 + k.1 * k.1) as f64);
                retained.push(keep);
            }
        }
        let mirror: Vec<usize> = (0..len)
            .map(|idx| {
                let (i1, i2) = (idx / n, idx % n);
                ((n - i1) % n) * n + (n - i2) % n
            })
            .collect();
        let retained_indices: Vec<usize> = (0..len).filter(|&i| retained[i]).collect();
        // one representative per ±k pair: k1 > 0, or k1 == 0 and k2 > 0
        let half_indices: Vec<usize> = retained_indices
            .iter()
            .copied()
            .filter(|&i| {
                let (k1, k2) = wavenumbers[i];
                k1 > 0 || (k1 == 0 && k2 > 0)
            })
            .collect();
        let mut planner = FftPlanner::new();
        let forward = planner.plan_fft_forward(n);
        let inverse = planner.plan_fft_inverse(n);
        Ok(Arc::new(Self {
            n,
            cutoff,
            wavenumbers,
            eigenvalues,
            retained,
            retained_indices,
            half_indices,
            mirror,
            forward,
            inverse,
        }))
    }

    /// Modes per axis (`N`).
    pub fn modes_per_axis(&self) -> usize {
        self.n
    }

    /// Largest retained `max(|k1|, |k2|)`.
    pub fn cutoff(&self) -> i64 {
        self.cutoff
    }

    pub fn len(&self) -> usize {
        self.n * self.n
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    /// Storage index of wavenumber `k`, if it lies on the grid.
    pub fn index_of(&self, k1: i64, k2: i64) -> Option<usize> {
        let half = (self.n / 2) as i64;
        let wrap = |k: i64| -> Option<usize> {
            if k <= -half || k > half {
                None
            } else if k >= 0 {
                Some(k as usize)
            } else {
                Some((k + self.n as i64) as usize)
            }
        };
        Some(wrap(k1)? * self.n + wrap(k2)?)
    }

    pub fn wavenumber(&self, index: usize) -> (i64, i64) {
        self.wavenumbers[index]
    }

    /// `λ_k = |k|²`.
    pub fn eigenvalue(&self, index: usize) -> f64 {
        self.eigenvalues[index]
    }

    /// Smallest retained eigenvalue; 1 on the 2π torus.
    pub fn lambda1(&self) -> f64 {
        1.0
    }

    pub fn is_retained(&self, index: usize) -> bool {
        self.retained[index]
    }

    /// Dealiasing mask: true for every mode the Galerkin space keeps.
    pub fn dealias_mask(&self) -> &[bool] {
        &self.retained
    }

    pub fn retained_indices(&self) -> &[usize] {
        &self.retained_indices
    }

    /// One storage index for each `±k` pair of retained modes.
    pub fn half_indices(&self) -> &[usize] {
        &self.half_indices
    }

    /// Storage index of `-k`.
    pub fn mirror(&self, index: usize) -> usize {
        self.mirror[index]
    }

    /// Physical grid coordinates `(ξ1, ξ2)` of grid point `(j1, j2)`.
    pub fn grid_point(&self, j1: usize, j2: usize) -> (f64, f64) {
        let h = 2.0 * std::f64::consts::PI / self.n as f64;
        (j1 as f64 * h, j2 as f64 * h)
    }

    /// Physical values from coefficients: `u(ξ_j) = Σ_k û(k) e^{ik·ξ_j}`.
    pub(crate) fn to_physical(&self, data: &mut [Complex64]) {
        self.transform(data, &self.inverse);
    }

    /// Coefficients from physical values (normalised by `N²`).
    pub(crate) fn to_spectral(&self, data: &mut [Complex64]) {
        self.transform(data, &self.forward);
        let scale = 1.0 / (self.n * self.n) as f64;
        for c in data.iter_mut() {
            *c *= scale;
        }
    }

    fn transform(&self, data: &mut [Complex64], plan: &Arc<dyn Fft<f64>>) {
        let n = self.n;
        debug_assert_eq!(data.len(), n * n);
        let mut scratch = vec![Complex64::default(); plan.get_inplace_scratch_len()];
        plan.process_with_scratch(data, &mut scratch);
        let mut columns = vec![Complex64::default(); n * n];
        transpose(data, &mut columns, n);
        plan.process_with_scratch(&mut columns, &mut scratch);
        transpose(&columns, data, n);
    }
}

fn axis_wavenumber(i: usize, n: usize) -> i64 {
    if i <= n / 2 {
        i as i64
    } else {
        i as i64 - n as i64
    }
}

fn transpose(src: &[Complex64], dst: &mut [Complex64], n: usize) {
    for r in 0..n {
        for c in 0..n {
            dst[c * n + r] = src[r * n + c];
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rejects_odd_or_tiny_grids() {
        assert!(SpectralSpace::new(15).is_err());
        assert!(SpectralSpace::new(2).is_err());
        assert!(SpectralSpace::new(16).is_ok());
    }

    #[test]
    fn mask_follows_two_thirds_rule() {
        let space = SpectralSpace::new(32).unwrap();
        for idx in 0..space.len() {
            let (k1, k2) = space.wavenumber(idx);
            let m = k1.abs().max(k2.abs());
            if m as f64 > 32.0 / 3.0 || (k1, k2) == (0, 0) {
                assert!(!space.is_retained(idx), "{k1},{k2}");
            } else {
                assert!(space.is_retained(idx), "{k1},{k2}");
            }
        }
        let min_lambda = space
            .retained_indices()
            .iter()
            .map(|&i| space.eigenvalue(i))
            .fold(f64::INFINITY, f64::min);
        assert_eq!(min_lambda, 1.0);
    }

    #[test]
    fn half_lattice_covers_each_pair_once() {
        let space = SpectralSpace::new(16).unwrap();
        assert_eq!(space.half_indices().len() * 2, space.retained_indices().len());
        for &i in space.half_indices() {
            let m = space.mirror(i);
            assert!(space.is_retained(m));
            assert!(!space.half_indices().contains(&m));
            let (a, b) = (space.wavenumber(i), space.wavenumber(m));
            assert_eq!((a.0 + b.0, a.1 + b.1), (0, 0));
        }
    }

    #[test]
    fn index_round_trip() {
        let space = SpectralSpace::new(16).unwrap();
        for idx in 0..space.len() {
            let (k1, k2) = space.wavenumber(idx);
            assert_eq!(space.index_of(k1, k2), Some(idx));
        }
        assert_eq!(space.index_of(-8, 0), None);
    }

    #[test]
    fn transform_round_trip() {
        let space = SpectralSpace::new(8).unwrap();
        let orig: Vec<Complex64> = (0..64)
            .map(|i| Complex64::new((i as f64).sin(), (i as f64 * 0.3).cos()))
            .collect();
        let mut data = orig.clone();
        space.to_spectral(&mut data);
        space.to_physical(&mut data);
        for (a, b) in orig.iter().zip(&data) {
            assert!((a - b).norm() < 1e-13);
        }
    }
}
