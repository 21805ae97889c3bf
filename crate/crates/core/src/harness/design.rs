//! Sinusoidal structure generator and space-filling designs over its
//! parameter box.

use std::f64::consts::PI;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result};
use crate::spectral::{DiameterBounds, StructureCurve, StructureDesign};

/// `I(t) = A sin(2 pi omega t + phi)` with fiber diameter `d`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SinusoidSpec {
    /// mm
    pub d: f64,
    /// mm
    pub amplitude: f64,
    /// mm^-1
    pub omega: f64,
    /// rad
    pub phi: f64,
}

impl SinusoidSpec {
    pub fn features(&self) -> [f64; 4] {
        [self.d, self.amplitude, self.omega, self.phi]
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DesignBox {
    pub d: (f64, f64),
    pub amplitude: (f64, f64),
    pub omega: (f64, f64),
    pub phi: (f64, f64),
}

impl Default for DesignBox {
    fn default() -> Self {
        Self {
            d: (0.2, 2.0),
            amplitude: (0.0, 1.0),
            omega: (0.0, 0.8),
            phi: (0.0, 2.0 * PI),
        }
    }
}

impl DesignBox {
    fn ranges(&self) -> [(f64, f64); 4] {
        [self.d, self.amplitude, self.omega, self.phi]
    }

    pub fn contains(&self, spec: &SinusoidSpec) -> bool {
        self.ranges()
            .iter()
            .zip(spec.features())
            .all(|((lo, hi), v)| v >= *lo && v <= *hi)
    }

    /// Maps a point of the unit hypercube into the box.
    pub fn scale(&self, u: [f64; 4]) -> SinusoidSpec {
        let r = self.ranges();
        let v: Vec<f64> = (0..4).map(|k| r[k].0 + u[k] * (r[k].1 - r[k].0)).collect();
        SinusoidSpec {
            d: v[0],
            amplitude: v[1],
            omega: v[2],
            phi: v[3],
        }
    }

    pub fn diameter_bounds(&self) -> DiameterBounds {
        DiameterBounds {
            min: self.d.0,
            max: self.d.1,
        }
    }
}

/// Samples the sinusoid on the uniform grid of `p` points over 20 mm.
pub fn gen_sinusoid(spec: &SinusoidSpec, p: usize) -> Result<StructureDesign> {
    gen_sinusoid_in(spec, p, &DesignBox::default())
}

pub fn gen_sinusoid_in(spec: &SinusoidSpec, p: usize, bounds: &DesignBox) -> Result<StructureDesign> {
    if !bounds.contains(spec) {
        return invalid(format!("sinusoid {spec:?} outside the design box"));
    }
    let dt = crate::spectral::grid_spacing(p);
    let values = (0..p)
        .map(|k| spec.amplitude * (2.0 * PI * spec.omega * k as f64 * dt + spec.phi).sin())
        .collect();
    let curve = StructureCurve::new(values)?;
    let mut design = StructureDesign::with_bounds(spec.d, curve, bounds.diameter_bounds())?;
    design.provenance = Some(*spec);
    Ok(design)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SamplingScheme {
    Lhs,
    Sobol,
}

pub fn sample_designs(n: usize, seed: u64, scheme: SamplingScheme, bounds: &DesignBox) -> Vec<SinusoidSpec> {
    let unit = match scheme {
        SamplingScheme::Lhs => latin_hypercube(n, seed),
        SamplingScheme::Sobol => sobol_points(n, seed),
    };
    unit.into_iter().map(|u| bounds.scale(u)).collect()
}

/// One point per stratum in every coordinate, jittered within the stratum.
pub fn latin_hypercube(n: usize, seed: u64) -> Vec<[f64; 4]> {
    latin_hypercube_dim(n, 4, seed)
        .into_iter()
        .map(|p| [p[0], p[1], p[2], p[3]])
        .collect()
}

/// [`latin_hypercube`] in `dim` dimensions.
pub fn latin_hypercube_dim(n: usize, dim: usize, seed: u64) -> Vec<Vec<f64>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = vec![vec![0.0; dim]; n];
    for d in 0..dim {
        let mut strata: Vec<usize> = (0..n).collect();
        strata.shuffle(&mut rng);
        for (i, s) in strata.into_iter().enumerate() {
            out[i][d] = (s as f64 + rng.random::<f64>()) / n as f64;
        }
    }
    out
}

// Joe-Kuo direction numbers for dimensions 2..4 (dimension 1 is the van der
// Corput sequence): (degree s, coefficient a, initial m_1..m_s).
const SOBOL_PARAMS: [(u32, u32, &[u32]); 3] = [(1, 0, &[1]), (2, 1, &[1, 3]), (3, 1, &[1, 3, 1])];
const SOBOL_BITS: u32 = 32;

fn sobol_directions() -> [[u32; SOBOL_BITS as usize]; 4] {
    let mut v = [[0u32; SOBOL_BITS as usize]; 4];
    for i in 0..SOBOL_BITS as usize {
        v[0][i] = 1u32 << (31 - i);
    }
    for (dim, (s, a, m)) in SOBOL_PARAMS.iter().enumerate() {
        let s = *s as usize;
        let row = &mut v[dim + 1];
        for i in 0..s {
            row[i] = m[i] << (31 - i);
        }
        for i in s..SOBOL_BITS as usize {
            let mut x = row[i - s] ^ (row[i - s] >> s);
            for k in 1..s {
                if (a >> (s - 1 - k)) & 1 == 1 {
                    x ^= row[i - k];
                }
            }
            row[i] = x;
        }
    }
    v
}

/// Gray-code Sobol' points 1..=n with a seeded random digital shift.
pub fn sobol_points(n: usize, seed: u64) -> Vec<[f64; 4]> {
    let dirs = sobol_directions();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let shift: [u32; 4] = std::array::from_fn(|_| rng.random::<u32>());
    let mut state = [0u32; 4];
    let mut out = Vec::with_capacity(n);
    for i in 0..n as u64 {
        // point i+1 differs from point i in the direction of the lowest zero bit of i
        let c = (!i).trailing_zeros() as usize;
        for d in 0..4 {
            state[d] ^= dirs[d][c.min(SOBOL_BITS as usize - 1)];
        }
        out.push(std::array::from_fn(|d| {
            ((state[d] ^ shift[d]) as f64 + 0.5) / 4_294_967_296.0
        }));
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_amplitude_is_zero_curve() {
        let s = SinusoidSpec { d: 1.0, amplitude: 0.0, omega: 0.3, phi: 1.0 };
        let d = gen_sinusoid(&s, 81).unwrap();
        assert!(d.curve.values().iter().all(|v| *v == 0.0));
        assert_eq!(d.provenance, Some(s));
    }

    #[test]
    fn zero_frequency_quarter_phase_is_constant_one() {
        let s = SinusoidSpec { d: 1.0, amplitude: 1.0, omega: 0.0, phi: PI / 2.0 };
        let d = gen_sinusoid(&s, 81).unwrap();
        assert!(d.curve.values().iter().all(|v| (v - 1.0).abs() < 1e-15));
    }

    #[test]
    fn one_full_period_over_the_structure() {
        let s = SinusoidSpec { d: 1.0, amplitude: 1.0, omega: 0.05, phi: 0.0 };
        let v = gen_sinusoid(&s, 81).unwrap().curve.values().to_vec();
        assert!(v[0].abs() < 1e-12 && v[80].abs() < 1e-12);
        assert!((v[20] - 1.0).abs() < 1e-12 && (v[60] + 1.0).abs() < 1e-12);
    }

    #[test]
    fn out_of_box_spec_is_rejected() {
        let s = SinusoidSpec { d: 3.0, amplitude: 0.5, omega: 0.1, phi: 0.0 };
        assert!(gen_sinusoid(&s, 81).is_err());
    }

    #[test]
    fn collapsed_box_gives_the_corner() {
        let b = DesignBox { d: (0.7, 0.7), amplitude: (0.2, 0.2), omega: (0.1, 0.1), phi: (1.0, 1.0) };
        for scheme in [SamplingScheme::Lhs, SamplingScheme::Sobol] {
            let pts = sample_designs(1, 3, scheme, &b);
            assert_eq!(pts, vec![SinusoidSpec { d: 0.7, amplitude: 0.2, omega: 0.1, phi: 1.0 }]);
        }
    }

    #[test]
    fn sampling_is_deterministic_per_seed() {
        let b = DesignBox::default();
        for scheme in [SamplingScheme::Lhs, SamplingScheme::Sobol] {
            assert_eq!(sample_designs(20, 9, scheme, &b), sample_designs(20, 9, scheme, &b));
            assert_ne!(sample_designs(20, 9, scheme, &b), sample_designs(20, 10, scheme, &b));
        }
    }

    #[test]
    fn lhs_has_one_point_per_stratum() {
        let n = 58;
        let pts = latin_hypercube(n, 2024);
        for dim in 0..4 {
            let mut seen = vec![false; n];
            for p in &pts {
                let s = (p[dim] * n as f64).floor() as usize;
                assert!(!seen[s], "stratum {s} of dim {dim} hit twice");
                seen[s] = true;
            }
        }
    }

    #[test]
    fn unshifted_sobol_matches_reference_prefix() {
        // first points of the 4-d Sobol' sequence (Joe-Kuo), skipping the origin
        let dirs = sobol_directions();
        let mut state = [0u32; 4];
        let mut pts = vec![];
        for i in 0..4u64 {
            let c = (!i).trailing_zeros() as usize;
            for d in 0..4 {
                state[d] ^= dirs[d][c];
            }
            pts.push(state.map(|s| s as f64 / 4_294_967_296.0));
        }
        assert_eq!(pts[0], [0.5, 0.5, 0.5, 0.5]);
        assert_eq!(pts[1], [0.75, 0.25, 0.25, 0.25]);
        assert_eq!(pts[2], [0.25, 0.75, 0.75, 0.75]);
        assert_eq!(pts[3], [0.375, 0.375, 0.625, 0.875]);
    }

    #[test]
    fn sobol_points_are_stratified_in_each_coordinate() {
        // the first 16 points (origin included) hit every 1/16 interval once
        let dirs = sobol_directions();
        let mut state = [0u32; 4];
        let mut block = vec![state];
        for i in 0..15u64 {
            let c = (!i).trailing_zeros() as usize;
            for d in 0..4 {
                state[d] ^= dirs[d][c];
            }
            block.push(state);
        }
        for d in 0..4 {
            let mut seen = [false; 16];
            for s in &block {
                let idx = (s[d] >> 28) as usize;
                assert!(!seen[idx]);
                seen[idx] = true;
            }
        }
    }
}
