use std::sync::Arc;

use num_complex::Complex64;

use super::{SpectralError, SpectralSpace};

/// Complex velocity coefficients `û(k) = (û₁(k), û₂(k))`.
pub type ModeCoeff = [Complex64; 2];

const ZERO: ModeCoeff = [Complex64::new(0.0, 0.0), Complex64::new(0.0, 0.0)];

/// Arbitrary periodic vector field in spectral form (not necessarily
/// divergence-free or truncated). Input to [`super::leray_project`].
#[derive(Clone, Debug)]
pub struct RawSpectrum {
    n: usize,
    coeffs: Vec<ModeCoeff>,
}

impl RawSpectrum {
    pub fn zeros(n: usize) -> Self {
        Self { n, coeffs: vec![ZERO; n * n] }
    }

    pub fn from_coeffs(n: usize, coeffs: Vec<ModeCoeff>) -> Result<Self, SpectralError> {
        if coeffs.len() != n * n {
            return Err(SpectralError::LengthMismatch { expected: n * n, found: coeffs.len() });
        }
        Ok(Self { n, coeffs })
    }

    /// Spectrum of a field sampled on the `N x N` grid of `space`; each
    /// component is indexed `j1 * N + j2`.
    pub fn from_physical(space: &SpectralSpace, u1: &[f64], u2: &[f64]) -> Result<Self, SpectralError> {
        let n = space.modes_per_axis();
        for comp in [u1, u2] {
            if comp.len() != n * n {
                return Err(SpectralError::LengthMismatch { expected: n * n, found: comp.len() });
            }
        }
        let mut c1: Vec<Complex64> = u1.iter().map(|&x| Complex64::new(x, 0.0)).collect();
        let mut c2: Vec<Complex64> = u2.iter().map(|&x| Complex64::new(x, 0.0)).collect();
        space.to_spectral(&mut c1);
        space.to_spectral(&mut c2);
        let coeffs = c1.into_iter().zip(c2).map(|(a, b)| [a, b]).collect();
        Ok(Self { n, coeffs })
    }

    pub fn modes_per_axis(&self) -> usize {
        self.n
    }

    pub fn coeffs(&self) -> &[ModeCoeff] {
        &self.coeffs
    }

    pub fn coeffs_mut(&mut self) -> &mut [ModeCoeff] {
        &mut self.coeffs
    }

    /// Sets `û(k)` and its Hermitian partner `û(-k) = conj(û(k))`.
    pub fn set_mode_pair(&mut self, space: &SpectralSpace, k1: i64, k2: i64, value: ModeCoeff) {
        let idx = space.index_of(k1, k2).expect("wavenumber outside grid");
        let mirror = space.mirror(idx);
        self.coeffs[idx] = value;
        self.coeffs[mirror] = [value[0].conj(), value[1].conj()];
    }
}

/// Divergence-free, zero-mean, real velocity field on a truncated grid.
///
/// Only modes retained by the dealiasing mask are ever nonzero and the
/// Hermitian symmetry `û(-k) = conj(û(k))` holds exactly.
#[derive(Clone, Debug)]
pub struct SpectralField {
    space: Arc<SpectralSpace>,
    coeffs: Vec<ModeCoeff>,
}

impl PartialEq for SpectralField {
    fn eq(&self, other: &Self) -> bool {
        self.space.modes_per_axis() == other.space.modes_per_axis() && self.coeffs == other.coeffs
    }
}

impl SpectralField {
    pub fn zeros(space: &Arc<SpectralSpace>) -> Self {
        Self { space: Arc::clone(space), coeffs: vec![ZERO; space.len()] }
    }

    /// Builds a field from structure-preserving coefficients without altering
    /// a single bit. Used by checkpoint reload.
    pub fn from_coeffs_checked(space: &Arc<SpectralSpace>, coeffs: Vec<ModeCoeff>) -> Result<Self, SpectralError> {
        if coeffs.len() != space.len() {
            return Err(SpectralError::LengthMismatch { expected: space.len(), found: coeffs.len() });
        }
        let scale = coeffs.iter().map(|c| c[0].norm().max(c[1].norm())).fold(0.0, f64::max);
        let tol = 1e-12 * scale.max(f64::MIN_POSITIVE);
        for (idx, c) in coeffs.iter().enumerate() {
            if !space.is_retained(idx) {
                if c[0] != Complex64::default() || c[1] != Complex64::default() {
                    return Err(if idx == 0 { SpectralError::NonzeroMean } else { SpectralError::OutsideMask });
                }
                continue;
            }
            let m = &coeffs[space.mirror(idx)];
            if m[0] != c[0].conj() || m[1] != c[1].conj() {
                return Err(SpectralError::NotHermitian);
            }
            let (k1, k2) = space.wavenumber(idx);
            if (c[0] * k1 as f64 + c[1] * k2 as f64).norm() > tol * (k1.abs() + k2.abs()) as f64 {
                return Err(SpectralError::NotDivergenceFree);
            }
        }
        Ok(Self { space: Arc::clone(space), coeffs })
    }

    /// Caller guarantees the structural invariants.
    pub(crate) fn from_coeffs_unchecked(space: &Arc<SpectralSpace>, coeffs: Vec<ModeCoeff>) -> Self {
        Self { space: Arc::clone(space), coeffs }
    }

    /// Unit-norm basis vector `√2 cos(k·ξ) k⊥/|k|` (or `sin` when `sine`),
    /// scaled by `amplitude`. These are the real eigenvectors of the Stokes
    /// operator in the normalised `L²` inner product.
    pub fn basis_mode(space: &Arc<SpectralSpace>, k1: i64, k2: i64, sine: bool, amplitude: f64) -> Result<Self, SpectralError> {
        let idx = space
            .index_of(k1, k2)
            .filter(|&i| space.is_retained(i))
            .ok_or(SpectralError::ModeNotRetained(k1, k2))?;
        let norm = ((k1 * k1 + k2 * k2) as f64).sqrt();
        let tangent = [-(k2 as f64) / norm, k1 as f64 / norm];
        let c = if sine {
            Complex64::new(0.0, -amplitude / std::f64::consts::SQRT_2)
        } else {
            Complex64::new(amplitude / std::f64::consts::SQRT_2, 0.0)
        };
        let mut coeffs = vec![ZERO; space.len()];
        coeffs[idx] = [c * tangent[0], c * tangent[1]];
        let m = space.mirror(idx);
        coeffs[m] = [coeffs[idx][0].conj(), coeffs[idx][1].conj()];
        Ok(Self { space: Arc::clone(space), coeffs })
    }

    pub fn space(&self) -> &Arc<SpectralSpace> {
        &self.space
    }

    pub fn coeffs(&self) -> &[ModeCoeff] {
        &self.coeffs
    }

    pub fn coefficient(&self, k1: i64, k2: i64) -> Option<ModeCoeff> {
        self.space.index_of(k1, k2).map(|i| self.coeffs[i])
    }

    pub fn into_raw(self) -> RawSpectrum {
        RawSpectrum { n: self.space.modes_per_axis(), coeffs: self.coeffs }
    }

    pub fn same_space(&self, other: &SpectralField) -> bool {
        Arc::ptr_eq(&self.space, &other.space)
            || self.space.modes_per_axis() == other.space.modes_per_axis()
    }

    pub(crate) fn check_space(&self, other: &SpectralField) -> Result<(), SpectralError> {
        if self.same_space(other) {
            Ok(())
        } else {
            Err(SpectralError::SpaceMismatch {
                left: self.space.modes_per_axis(),
                right: other.space.modes_per_axis(),
            })
        }
    }

    fn assert_space(&self, other: &SpectralField) {
        assert!(
            self.same_space(other),
            "field arithmetic across spaces (N={} vs N={})",
            self.space.modes_per_axis(),
            other.space.modes_per_axis()
        );
    }

    /// Normalised `L²` inner product `⟨u, v⟩ = mean_ξ u·v`.
    pub fn inner(&self, other: &SpectralField) -> f64 {
        self.assert_space(other);
        self.space
            .retained_indices()
            .iter()
            .map(|&i| {
                let (a, b) = (&self.coeffs[i], &other.coeffs[i]);
                (a[0] * b[0].conj() + a[1] * b[1].conj()).re
            })
            .sum()
    }

    /// `|u|`, the `H` norm.
    pub fn l2_norm(&self) -> f64 {
        self.l2_norm_sq().sqrt()
    }

    pub fn l2_norm_sq(&self) -> f64 {
        self.space
            .retained_indices()
            .iter()
            .map(|&i| self.coeffs[i][0].norm_sqr() + self.coeffs[i][1].norm_sqr())
            .sum()
    }

    pub fn is_finite(&self) -> bool {
        self.coeffs.iter().all(|c| c[0].is_finite() && c[1].is_finite())
    }

    pub fn scaled(&self, a: f64) -> SpectralField {
        let mut out = self.clone();
        out.scale_in_place(a);
        out
    }

    pub fn scale_in_place(&mut self, a: f64) {
        for c in &mut self.coeffs {
            c[0] *= a;
            c[1] *= a;
        }
    }

    /// `self += a * other`.
    pub fn axpy(&mut self, a: f64, other: &SpectralField) {
        self.assert_space(other);
        for (c, o) in self.coeffs.iter_mut().zip(&other.coeffs) {
            c[0] += o[0] * a;
            c[1] += o[1] * a;
        }
    }

    pub fn add(&self, other: &SpectralField) -> SpectralField {
        let mut out = self.clone();
        out.axpy(1.0, other);
        out
    }

    pub fn sub(&self, other: &SpectralField) -> SpectralField {
        let mut out = self.clone();
        out.axpy(-1.0, other);
        out
    }

    /// Applies a real multiplier that depends only on `|k|²`; such maps keep
    /// every structural invariant exactly.
    pub fn map_radial(&self, mut factor: impl FnMut(f64) -> f64) -> SpectralField {
        let mut out = self.clone();
        for &i in self.space.retained_indices() {
            let s = factor(self.space.eigenvalue(i));
            out.coeffs[i][0] *= s;
            out.coeffs[i][1] *= s;
        }
        out
    }

    /// Per-pair real multiplier: `factor(index)` is evaluated on the half
    /// lattice and mirrored, so Hermitian symmetry is preserved.
    pub(crate) fn map_pairs(&self, mut factor: impl FnMut(usize, &ModeCoeff) -> f64) -> SpectralField {
        let mut out = self.clone();
        for &i in self.space.half_indices() {
            let s = factor(i, &self.coeffs[i]);
            let m = self.space.mirror(i);
            out.coeffs[i][0] *= s;
            out.coeffs[i][1] *= s;
            out.coeffs[m][0] *= s;
            out.coeffs[m][1] *= s;
        }
        out
    }

    /// Physical components on the `N x N` grid, indexed `j1 * N + j2`.
    pub fn to_physical(&self) -> [Vec<f64>; 2] {
        let mut c1: Vec<Complex64> = self.coeffs.iter().map(|c| c[0]).collect();
        let mut c2: Vec<Complex64> = self.coeffs.iter().map(|c| c[1]).collect();
        self.space.to_physical(&mut c1);
        self.space.to_physical(&mut c2);
        [c1.iter().map(|c| c.re).collect(), c2.iter().map(|c| c.re).collect()]
    }

    /// `max_k |k·û(k)|`.
    pub fn divergence_residual(&self) -> f64 {
        self.space
            .retained_indices()
            .iter()
            .map(|&i| {
                let (k1, k2) = self.space.wavenumber(i);
                (self.coeffs[i][0] * k1 as f64 + self.coeffs[i][1] * k2 as f64).norm()
            })
            .fold(0.0, f64::max)
    }

    pub fn is_hermitian(&self) -> bool {
        (0..self.coeffs.len()).all(|i| {
            let m = &self.coeffs[self.space.mirror(i)];
            m[0] == self.coeffs[i][0].conj() && m[1] == self.coeffs[i][1].conj()
        })
    }
}
