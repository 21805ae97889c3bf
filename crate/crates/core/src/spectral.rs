//! Fourier-modulus features and the correlation functions built on them.
//!
//! Every kernel in this module has the same squared-exponential shape
//!
//! ```text
//! rho(a, b) = exp(-sum_k theta_k (z_a,k - z_b,k)^2 - theta_d (d_a - d_b)^2)
//! ```
//!
//! and differs only in the coordinates `z` a design is mapped to: the DFT
//! modulus half-spectrum for the spectral-distance kernel, the four sinusoid
//! parameters for the feature-based baseline, and the raw curve (scaled by
//! `sqrt(dt)`) for the functional l2 baseline. [`KernelInput`] holds those
//! coordinates so that estimation and inverse design can work on one shape.

use std::f64::consts::PI;
use std::fmt;

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::harness::design::SinusoidSpec;
use crate::linalg;

/// Physical length of a structure, in mm.
pub const STRUCTURE_LENGTH_MM: f64 = 20.0;
/// Default number of grid points on a structure curve.
pub const DEFAULT_POINTS: usize = 81;
pub const DEFAULT_NUGGET: f64 = 1e-8;

/// Structure height sampled on the uniform grid `t_k = k * 20 / (p - 1)` mm.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<f64>", into = "Vec<f64>")]
pub struct StructureCurve {
    values: Vec<f64>,
}

impl StructureCurve {
    pub fn new(values: Vec<f64>) -> Result<Self> {
        check_curve_values(&values)?;
        Ok(Self { values })
    }

    pub fn zeros(p: usize) -> Result<Self> {
        Self::new(vec![0.0; p])
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    /// Grid spacing in mm.
    pub fn spacing(&self) -> f64 {
        grid_spacing(self.len())
    }

    /// Circular shift by `s` grid points: `out[l] = x[(l - s) mod p]`.
    pub fn cyclic_shift(&self, s: usize) -> Self {
        let p = self.len();
        let mut values = vec![0.0; p];
        for (l, v) in values.iter_mut().enumerate() {
            *v = self.values[(l + p - s % p) % p];
        }
        Self { values }
    }

    pub fn modulus_spectrum(&self) -> ModulusSpectrum {
        dft_modulus(&self.values).expect("curve invariants already checked")
    }
}

impl TryFrom<Vec<f64>> for StructureCurve {
    type Error = Error;

    fn try_from(values: Vec<f64>) -> Result<Self> {
        Self::new(values)
    }
}

impl From<StructureCurve> for Vec<f64> {
    fn from(c: StructureCurve) -> Self {
        c.values
    }
}

fn check_curve_values(values: &[f64]) -> Result<()> {
    if values.is_empty() || values.len() % 2 == 0 {
        return invalid(format!(
            "structure curve needs an odd number of points, got {}",
            values.len()
        ));
    }
    if let Some(i) = values.iter().position(|v| !v.is_finite()) {
        return invalid(format!("structure curve value {i} is not finite"));
    }
    Ok(())
}

pub fn grid_spacing(p: usize) -> f64 {
    if p < 2 {
        STRUCTURE_LENGTH_MM
    } else {
        STRUCTURE_LENGTH_MM / (p - 1) as f64
    }
}

/// Length of the modulus half-spectrum for a curve of `p` points.
pub fn half_spectrum_len(p: usize) -> usize {
    (p - 1) / 2 + 1
}

/// Frequency (mm^-1) attached to each half-spectrum bin: `k / 20` for the
/// default grid.
pub fn frequency_grid(p: usize) -> Vec<f64> {
    (0..half_spectrum_len(p))
        .map(|k| k as f64 / STRUCTURE_LENGTH_MM)
        .collect()
}

/// Admissible fiber diameters, in mm.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DiameterBounds {
    pub min: f64,
    pub max: f64,
}

impl Default for DiameterBounds {
    fn default() -> Self {
        Self { min: 0.2, max: 2.0 }
    }
}

impl DiameterBounds {
    pub fn contains(&self, d: f64) -> bool {
        d >= self.min && d <= self.max
    }
}

/// A functional input: a uniform fiber diameter plus a structure curve.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StructureDesign {
    pub diameter: f64,
    pub curve: StructureCurve,
    /// Sinusoid parameters the curve was generated from, when known. Only
    /// the feature-based baseline kernel reads them.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub provenance: Option<SinusoidSpec>,
}

impl StructureDesign {
    pub fn new(diameter: f64, curve: StructureCurve) -> Result<Self> {
        Self::with_bounds(diameter, curve, DiameterBounds::default())
    }

    pub fn with_bounds(diameter: f64, curve: StructureCurve, bounds: DiameterBounds) -> Result<Self> {
        if !diameter.is_finite() || !bounds.contains(diameter) {
            return invalid(format!(
                "diameter {diameter} outside [{}, {}]",
                bounds.min, bounds.max
            ));
        }
        Ok(Self {
            diameter,
            curve,
            provenance: None,
        })
    }

    pub fn p(&self) -> usize {
        self.curve.len()
    }
}

/// Nonnegative DFT modulus over the half-spectrum `k = 0..=(p-1)/2`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModulusSpectrum {
    moduli: Vec<f64>,
}

impl ModulusSpectrum {
    pub fn new(moduli: Vec<f64>) -> Result<Self> {
        if let Some(i) = moduli.iter().position(|v| !v.is_finite() || *v < 0.0) {
            return invalid(format!("modulus {i} is negative or not finite"));
        }
        Ok(Self { moduli })
    }

    pub fn moduli(&self) -> &[f64] {
        &self.moduli
    }

    pub fn len(&self) -> usize {
        self.moduli.len()
    }

    pub fn is_empty(&self) -> bool {
        self.moduli.is_empty()
    }

    /// Number of curve points this half-spectrum belongs to.
    pub fn curve_len(&self) -> usize {
        2 * (self.moduli.len() - 1) + 1
    }
}

/// `|x_hat_k|` for `k = 0..=(p-1)/2`, from the unnormalized forward DFT
/// `x_hat_k = sum_l x_l exp(-2 pi i l k / p)`, by direct summation.
pub fn dft_modulus(values: &[f64]) -> Result<ModulusSpectrum> {
    check_curve_values(values)?;
    let p = values.len();
    let moduli = (0..half_spectrum_len(p))
        .map(|k| {
            let (mut re, mut im) = (0.0, 0.0);
            for (l, x) in values.iter().enumerate() {
                // reduce l*k mod p first so the angle stays small
                let angle = -2.0 * PI * ((l * k) % p) as f64 / p as f64;
                re += x * angle.cos();
                im += x * angle.sin();
            }
            re.hypot(im)
        })
        .collect();
    Ok(ModulusSpectrum { moduli })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum KernelFamily {
    Sped,
    FeatureBased,
    L2Distance,
}

impl KernelFamily {
    /// Number of `theta` weights for curves of `p` points.
    pub fn theta_len(self, p: usize) -> usize {
        match self {
            KernelFamily::Sped => half_spectrum_len(p),
            KernelFamily::FeatureBased => 4,
            KernelFamily::L2Distance => p,
        }
    }

    /// Whether the separable diameter factor `exp(-theta_d (d_a - d_b)^2)`
    /// applies. The feature-based kernel already carries `d` as a feature.
    pub fn uses_diameter(self) -> bool {
        !matches!(self, KernelFamily::FeatureBased)
    }
}

impl fmt::Display for KernelFamily {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            KernelFamily::Sped => "sped",
            KernelFamily::FeatureBased => "feature_based",
            KernelFamily::L2Distance => "l2_distance",
        })
    }
}

impl std::str::FromStr for KernelFamily {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "sped" => Ok(KernelFamily::Sped),
            "feature_based" | "feature" => Ok(KernelFamily::FeatureBased),
            "l2_distance" | "l2" => Ok(KernelFamily::L2Distance),
            other => Err(Error::InvalidInput(format!("unknown kernel family {other:?}"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KernelParams {
    pub theta: Vec<f64>,
    pub theta_d: f64,
    pub nugget: f64,
    pub family: KernelFamily,
}

impl KernelParams {
    pub fn new(family: KernelFamily, theta: Vec<f64>, theta_d: f64, nugget: f64) -> Result<Self> {
        let params = Self {
            theta,
            theta_d,
            nugget,
            family,
        };
        params.validate()?;
        Ok(params)
    }

    pub fn validate(&self) -> Result<()> {
        if let Some(k) = self.theta.iter().position(|t| !(*t >= 0.0) || !t.is_finite()) {
            return invalid(format!("theta[{k}] = {} is not a finite nonnegative weight", self.theta[k]));
        }
        if !(self.theta_d >= 0.0) || !self.theta_d.is_finite() {
            return invalid(format!("theta_d = {} must be finite and nonnegative", self.theta_d));
        }
        if !(self.nugget >= 0.0) || !self.nugget.is_finite() {
            return invalid(format!("nugget = {} must be finite and nonnegative", self.nugget));
        }
        Ok(())
    }

    pub fn active_count(&self) -> usize {
        self.theta.iter().filter(|t| **t > 0.0).count()
    }
}

/// The coordinates a kernel actually consumes for one design.
#[derive(Debug, Clone, PartialEq)]
pub struct KernelInput {
    pub diameter: f64,
    pub coords: Vec<f64>,
}

impl KernelInput {
    pub fn embed(design: &StructureDesign, family: KernelFamily) -> Result<Self> {
        let coords = match family {
            KernelFamily::Sped => design.curve.modulus_spectrum().moduli,
            KernelFamily::FeatureBased => {
                let spec = design.provenance.as_ref().ok_or_else(|| {
                    Error::InvalidInput(
                        "feature-based kernel needs sinusoid parameters for every design".into(),
                    )
                })?;
                spec.features().to_vec()
            }
            KernelFamily::L2Distance => {
                let scale = design.curve.spacing().sqrt();
                design.curve.values().iter().map(|x| x * scale).collect()
            }
        };
        Ok(Self {
            diameter: design.diameter,
            coords,
        })
    }
}

pub fn embed_all(designs: &[StructureDesign], family: KernelFamily) -> Result<Vec<KernelInput>> {
    if let Some(first) = designs.first() {
        let p = first.p();
        if let Some(i) = designs.iter().position(|d| d.p() != p) {
            return invalid(format!(
                "design {i} has {} curve points, expected {p}",
                designs[i].p()
            ));
        }
    }
    designs.iter().map(|d| KernelInput::embed(d, family)).collect()
}

/// Weighted squared distance `sum_k theta_k (a_k - b_k)^2 + theta_d (d_a - d_b)^2`.
#[inline]
pub fn weighted_sq_distance(a: &KernelInput, b: &KernelInput, params: &KernelParams) -> f64 {
    let mut dist: f64 = params
        .theta
        .iter()
        .zip(a.coords.iter().zip(&b.coords))
        .map(|(t, (x, y))| t * (x - y) * (x - y))
        .sum();
    if params.family.uses_diameter() {
        let dd = a.diameter - b.diameter;
        dist += params.theta_d * dd * dd;
    }
    dist
}

#[inline]
pub fn kernel(a: &KernelInput, b: &KernelInput, params: &KernelParams) -> f64 {
    (-weighted_sq_distance(a, b, params)).exp()
}

fn check_theta_len(params: &KernelParams, coords: usize) -> Result<()> {
    if params.theta.len() != coords {
        return invalid(format!(
            "theta has {} entries but the {} kernel needs {coords}",
            params.theta.len(),
            params.family
        ));
    }
    Ok(())
}

/// Spectral-distance correlation with the separable diameter factor.
pub fn sped_correlation(a: &StructureDesign, b: &StructureDesign, params: &KernelParams) -> Result<f64> {
    if a.p() != b.p() {
        return invalid(format!("curve lengths differ: {} vs {}", a.p(), b.p()));
    }
    let sped = KernelParams {
        family: KernelFamily::Sped,
        ..params.clone()
    };
    let (ea, eb) = (
        KernelInput::embed(a, KernelFamily::Sped)?,
        KernelInput::embed(b, KernelFamily::Sped)?,
    );
    check_theta_len(&sped, ea.coords.len())?;
    Ok(kernel(&ea, &eb, &sped))
}

/// Gaussian correlation on the sinusoid parameters `[d, A, omega, phi]`.
pub fn feature_correlation(fa: &[f64; 4], fb: &[f64; 4], theta4: &[f64; 4]) -> f64 {
    let dist: f64 = (0..4).map(|k| theta4[k] * (fa[k] - fb[k]).powi(2)).sum();
    (-dist).exp()
}

/// Gaussian correlation on the pointwise curve difference, as a Riemann sum
/// over the structure grid.
pub fn l2_correlation(a: &StructureCurve, b: &StructureCurve, theta_t: &[f64]) -> Result<f64> {
    if a.len() != b.len() || theta_t.len() != a.len() {
        return invalid(format!(
            "length mismatch: curves {} and {}, weights {}",
            a.len(),
            b.len(),
            theta_t.len()
        ));
    }
    let dt = a.spacing();
    let dist: f64 = theta_t
        .iter()
        .zip(a.values().iter().zip(b.values()))
        .map(|(t, (x, y))| t * (x - y) * (x - y) * dt)
        .sum();
    Ok((-dist).exp())
}

/// Correlation between two designs under `params.family`.
pub fn correlation(a: &StructureDesign, b: &StructureDesign, params: &KernelParams) -> Result<f64> {
    let inputs = embed_all(&[a.clone(), b.clone()], params.family)?;
    check_theta_len(params, inputs[0].coords.len())?;
    Ok(kernel(&inputs[0], &inputs[1], params))
}

/// `R` with `R_ii = 1 + nugget`. Assembly only; use [`factorize`] to get a
/// Cholesky factor with a diagnostic on failure.
pub fn correlation_matrix(designs: &[StructureDesign], params: &KernelParams) -> Result<DMatrix<f64>> {
    if designs.is_empty() {
        return invalid("correlation matrix needs at least one design");
    }
    params.validate()?;
    let inputs = embed_all(designs, params.family)?;
    check_theta_len(params, inputs[0].coords.len())?;
    Ok(correlation_matrix_from_inputs(&inputs, params))
}

pub fn correlation_matrix_from_inputs(inputs: &[KernelInput], params: &KernelParams) -> DMatrix<f64> {
    let n = inputs.len();
    // each row of the upper triangle is independent, so the parallel
    // result is bit-identical to the sequential one
    let rows: Vec<Vec<f64>> = (0..n)
        .into_par_iter()
        .map(|i| (i + 1..n).map(|j| kernel(&inputs[i], &inputs[j], params)).collect())
        .collect();
    let mut r = DMatrix::from_element(n, n, 0.0);
    for (i, row) in rows.into_iter().enumerate() {
        r[(i, i)] = 1.0 + params.nugget;
        for (off, v) in row.into_iter().enumerate() {
            let j = i + 1 + off;
            r[(i, j)] = v;
            r[(j, i)] = v;
        }
    }
    r
}

/// Cholesky factor of a correlation matrix. On failure, reports the most
/// strongly correlated off-diagonal pair.
pub fn factorize(r: &DMatrix<f64>) -> Result<linalg::Chol> {
    linalg::cholesky(r).ok_or_else(|| {
        let n = r.nrows();
        let mut best = ((0, 0), f64::NEG_INFINITY);
        for i in 0..n {
            for j in (i + 1)..n {
                if r[(i, j)] > best.1 {
                    best = ((i, j), r[(i, j)]);
                }
            }
        }
        Error::SingularCorrelation {
            pair: best.0,
            correlation: best.1,
        }
    })
}

/// `r_i = rho(new, design_i)`.
pub fn cross_correlation(
    new: &StructureDesign,
    designs: &[StructureDesign],
    params: &KernelParams,
) -> Result<DVector<f64>> {
    if designs.is_empty() {
        return invalid("cross correlation needs at least one design");
    }
    let inputs = embed_all(designs, params.family)?;
    if new.p() != designs[0].p() {
        return invalid(format!(
            "new design has {} curve points, training designs have {}",
            new.p(),
            designs[0].p()
        ));
    }
    let probe = KernelInput::embed(new, params.family)?;
    check_theta_len(params, probe.coords.len())?;
    Ok(cross_correlation_from_inputs(&probe, &inputs, params))
}

pub fn cross_correlation_from_inputs(
    probe: &KernelInput,
    inputs: &[KernelInput],
    params: &KernelParams,
) -> DVector<f64> {
    DVector::from_iterator(inputs.len(), inputs.iter().map(|x| kernel(probe, x, params)))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn curve(v: &[f64]) -> StructureCurve {
        StructureCurve::new(v.to_vec()).unwrap()
    }

    fn design(d: f64, v: &[f64]) -> StructureDesign {
        StructureDesign::new(d, curve(v)).unwrap()
    }

    fn sped(theta: Vec<f64>, theta_d: f64) -> KernelParams {
        KernelParams::new(KernelFamily::Sped, theta, theta_d, 0.0).unwrap()
    }

    /// Full-length DFT by direct complex summation, independent of `dft_modulus`.
    fn brute_dft(x: &[f64]) -> Vec<(f64, f64)> {
        let p = x.len() as f64;
        (0..x.len())
            .map(|k| {
                x.iter().enumerate().fold((0.0, 0.0), |(re, im), (l, v)| {
                    let a = -2.0 * PI * (l as f64) * (k as f64) / p;
                    (re + v * a.cos(), im + v * a.sin())
                })
            })
            .collect()
    }

    #[test]
    fn modulus_of_constant_and_zero_signals() {
        let m = dft_modulus(&[1.0; 5]).unwrap();
        assert!((m.moduli()[0] - 5.0).abs() < 1e-12);
        assert!(m.moduli()[1].abs() < 1e-12 && m.moduli()[2].abs() < 1e-12);
        assert_eq!(m.len(), 3);
        let z = dft_modulus(&[0.0; 5]).unwrap();
        assert_eq!(z.moduli(), &[0.0, 0.0, 0.0]);
    }

    #[test]
    fn modulus_of_unit_impulse() {
        let m = dft_modulus(&[1.0, 0.0, 0.0]).unwrap();
        assert_eq!(m.len(), 2);
        assert!((m.moduli()[0] - 1.0).abs() < 1e-15);
        assert!((m.moduli()[1] - 1.0).abs() < 1e-15);
    }

    #[test]
    fn modulus_rejects_bad_input() {
        assert!(matches!(dft_modulus(&[1.0, 2.0]), Err(Error::InvalidInput(_))));
        assert!(matches!(dft_modulus(&[1.0, f64::NAN, 0.0]), Err(Error::InvalidInput(_))));
        assert!(StructureCurve::new(vec![0.0; 4]).is_err());
    }

    #[test]
    fn sped_identity_and_zero_weights() {
        let a = design(1.0, &[0.1, -0.4, 0.3, 0.9, 0.0]);
        let b = design(0.5, &[1.0, 0.2, -0.3, 0.0, 0.4]);
        assert_eq!(sped_correlation(&a, &a, &sped(vec![3.0; 3], 2.0)).unwrap(), 1.0);
        assert_eq!(sped_correlation(&a, &b, &sped(vec![0.0; 3], 0.0)).unwrap(), 1.0);
    }

    #[test]
    fn sped_cyclic_shift_is_perfectly_correlated() {
        let a = design(1.2, &[0.3, -0.7, 0.25, 0.9, 0.0, -0.1, 0.55]);
        for s in 0..7 {
            let b = StructureDesign::new(1.2, a.curve.cyclic_shift(s)).unwrap();
            let rho = sped_correlation(&a, &b, &sped(vec![5.0; 4], 1.0)).unwrap();
            assert!((rho - 1.0).abs() < 1e-10, "shift {s}: {rho}");
        }
    }

    #[test]
    fn sped_three_point_hand_computation() {
        // a = [1, 0, 0] -> |a_hat| = [1, 1]; b = [1, 2, 0]:
        // b_hat_0 = 3, b_hat_1 = 1 + 2 e^{-2 pi i/3} = 1 - 1 - i sqrt(3) -> |b_hat_1| = sqrt(3)
        let a = design(1.0, &[1.0, 0.0, 0.0]);
        let b = design(1.5, &[1.0, 2.0, 0.0]);
        let theta = vec![0.2, 0.7];
        let expected: f64 =
            (-(0.2 * (1.0f64 - 3.0).powi(2) + 0.7 * (1.0 - 3f64.sqrt()).powi(2) + 0.4 * 0.25)).exp();
        let got = sped_correlation(&a, &b, &sped(theta, 0.4)).unwrap();
        assert!((got - expected).abs() < 1e-14, "{got} vs {expected}");
    }

    #[test]
    fn sped_rejects_theta_length_mismatch() {
        let a = design(1.0, &[1.0, 0.0, 0.0]);
        assert!(sped_correlation(&a, &a, &sped(vec![1.0; 3], 0.0)).is_err());
    }

    #[test]
    fn feature_correlation_examples() {
        let f = [1.0, 0.5, 0.2, 3.0];
        assert_eq!(feature_correlation(&f, &f, &[1.0; 4]), 1.0);
        assert_eq!(feature_correlation(&f, &[0.0; 4], &[0.0; 4]), 1.0);
        let v = feature_correlation(&[1.0, 0.0, 0.0, 0.0], &[0.0; 4], &[1.0; 4]);
        assert!((v - (-1.0f64).exp()).abs() < 1e-15);
    }

    #[test]
    fn l2_correlation_examples() {
        let a = curve(&[0.0, 1.0, 2.0, 3.0, 4.0]);
        assert_eq!(l2_correlation(&a, &a, &[1.0; 5]).unwrap(), 1.0);
        let b = curve(&[0.0, 1.0, 2.5, 3.0, 4.0]);
        assert_eq!(l2_correlation(&a, &b, &[0.0; 5]).unwrap(), 1.0);
        let dt = 20.0 / 4.0;
        let v = l2_correlation(&a, &b, &[1.0; 5]).unwrap();
        assert!((v - (-0.25f64 * dt).exp()).abs() < 1e-15);
        assert!(l2_correlation(&a, &b, &[1.0; 4]).is_err());
    }

    #[test]
    fn matrix_of_one_design_is_one_plus_nugget() {
        let a = design(1.0, &[0.1, 0.2, 0.3]);
        let params = KernelParams::new(KernelFamily::Sped, vec![1.0, 1.0], 1.0, 1e-6).unwrap();
        let r = correlation_matrix(&[a], &params).unwrap();
        assert_eq!(r.shape(), (1, 1));
        assert_eq!(r[(0, 0)], 1.0 + 1e-6);
    }

    #[test]
    fn shifted_duplicates_give_all_ones_and_a_singular_factorization() {
        let a = design(1.0, &[0.3, -0.7, 0.25, 0.9, 0.0]);
        let b = StructureDesign::new(1.0, a.curve.cyclic_shift(2)).unwrap();
        let r = correlation_matrix(&[a, b], &sped(vec![2.0; 3], 1.0)).unwrap();
        for v in r.iter() {
            assert!((v - 1.0).abs() < 1e-10);
        }
        match factorize(&r) {
            Err(Error::SingularCorrelation { pair, .. }) => assert_eq!(pair, (0, 1)),
            Ok(_) => {
                // rounding may leave a tiny positive pivot; the pivot must then be negligible
                assert!(linalg::min_eigenvalue(&r) < 1e-9);
            }
            Err(e) => panic!("unexpected error {e}"),
        }
    }

    #[test]
    fn cross_correlation_examples() {
        let designs = vec![
            design(0.5, &[0.0, 1.0, 0.0, -1.0, 0.0]),
            design(1.5, &[0.2, 0.2, 0.9, -0.1, 0.3]),
        ];
        let params = sped(vec![0.3, 0.5, 0.1], 0.8);
        let r = cross_correlation(&designs[1], &designs, &params).unwrap();
        assert_eq!(r[1], 1.0);
        let direct = sped_correlation(&designs[1], &designs[0], &params).unwrap();
        assert_eq!(r[0], direct);
        let ones = cross_correlation(&designs[0], &designs, &sped(vec![0.0; 3], 0.0)).unwrap();
        assert!(ones.iter().all(|v| *v == 1.0));
    }

    #[test]
    fn frequency_grid_default() {
        let f = frequency_grid(DEFAULT_POINTS);
        assert_eq!(f.len(), 41);
        assert!((f[1] - 0.05).abs() < 1e-15 && (f[40] - 2.0).abs() < 1e-15);
    }

    fn odd_curve() -> impl Strategy<Value = Vec<f64>> {
        (1usize..12).prop_flat_map(|h| prop::collection::vec(-2.0f64..2.0, 2 * h + 1))
    }

    proptest! {
        #[test]
        fn half_spectrum_matches_full_brute_force(x in odd_curve()) {
            let p = x.len();
            let full = brute_dft(&x);
            let half = dft_modulus(&x).unwrap();
            for k in 0..half.len() {
                let m = full[k].0.hypot(full[k].1);
                prop_assert!((half.moduli()[k] - m).abs() < 1e-9);
                if k > 0 {
                    let mirror = full[p - k].0.hypot(full[p - k].1);
                    prop_assert!((m - mirror).abs() < 1e-9);
                }
            }
            prop_assert!((half.moduli()[0] - x.iter().sum::<f64>().abs()).abs() < 1e-9);
        }

        #[test]
        fn kernel_is_symmetric_and_in_range(
            x in prop::collection::vec(-1.0f64..1.0, 9),
            y in prop::collection::vec(-1.0f64..1.0, 9),
            theta in prop::collection::vec(0.0f64..3.0, 5),
            da in 0.2f64..2.0, db in 0.2f64..2.0, td in 0.0f64..3.0,
        ) {
            let a = design(da, &x);
            let b = design(db, &y);
            let params = sped(theta, td);
            let ab = sped_correlation(&a, &b, &params).unwrap();
            let ba = sped_correlation(&b, &a, &params).unwrap();
            prop_assert_eq!(ab, ba);
            prop_assert!(ab > 0.0 && ab <= 1.0);
        }

        #[test]
        fn increasing_a_weight_never_increases_correlation(
            x in prop::collection::vec(-1.0f64..1.0, 9),
            y in prop::collection::vec(-1.0f64..1.0, 9),
            theta in prop::collection::vec(0.0f64..0.5, 5),
            k in 0usize..5, bump in 0.0f64..2.0,
        ) {
            let a = design(1.0, &x);
            let b = design(1.0, &y);
            let base = sped_correlation(&a, &b, &sped(theta.clone(), 0.0)).unwrap();
            let mut more = theta;
            more[k] += bump;
            let after = sped_correlation(&a, &b, &sped(more, 0.0)).unwrap();
            prop_assert!(after <= base);
        }
    }
}
