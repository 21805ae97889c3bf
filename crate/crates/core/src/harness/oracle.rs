//! Synthetic stand-in for the finite-element simulator.
//!
//! The response is a power law `O(s) = a s^b` whose coefficients depend on
//! the diameter and on a band energy of the structure's modulus spectrum,
//!
//! ```text
//! w     = (2/p) sum_{k in band} c_k |x_hat_k|
//! u     = tanh(d / d_s)
//! b     = b0 + b_d u + b_w tanh(g w)
//! ln a  = a0 + a_d u + a_w tanh(g w)
//! ```
//!
//! The `2/p` factor makes a sinusoid of amplitude `A` sitting exactly on bin
//! `k` contribute `c_k A`. Because only moduli enter, the oracle is blind to
//! cyclic shifts and to phase. The diameter enters through a saturating
//! transform: a response exactly linear in `d` would push the fitted
//! diameter length scale to infinity. With the default constants `b` ranges
//! over roughly `[0.54, 1.9]`, so both strain-softening and
//! strain-stiffening designs occur in the default design box.

use serde::{Deserialize, Serialize};

use crate::cokrige::{ResponseCurve, StrainGrid};
use crate::error::{invalid, Result};
use crate::spectral::StructureDesign;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SyntheticOracle {
    /// Half-spectrum bins that drive the response.
    pub band: Vec<usize>,
    /// `c_k`, one per band bin.
    pub weights: Vec<f64>,
    pub gain: f64,
    /// Diameter scale `d_s`, mm.
    pub d_scale: f64,
    pub b0: f64,
    pub b_d: f64,
    pub b_w: f64,
    pub a0: f64,
    pub a_d: f64,
    pub a_w: f64,
}

impl Default for SyntheticOracle {
    fn default() -> Self {
        Self {
            band: (2..=8).collect(),
            weights: vec![0.6, 0.8, 1.0, 1.2, 1.0, 0.8, 0.6],
            gain: 1.5,
            d_scale: 0.8,
            b0: 0.45,
            b_d: 0.35,
            b_w: 1.1,
            a0: 0.8f64.ln(),
            a_d: 0.9,
            a_w: -0.5,
        }
    }
}

/// `O(s) = a s^b`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PowerLaw {
    pub a: f64,
    pub b: f64,
}

impl PowerLaw {
    pub fn curve(&self, grid: &StrainGrid) -> ResponseCurve {
        ResponseCurve {
            values: grid.levels().iter().map(|s| self.a * s.powf(self.b)).collect(),
            in_log_space: false,
        }
    }
}

impl SyntheticOracle {
    pub fn band_energy(&self, design: &StructureDesign) -> Result<f64> {
        if self.band.len() != self.weights.len() {
            return invalid("oracle band and weights differ in length");
        }
        let spec = design.curve.modulus_spectrum();
        let moduli = spec.moduli();
        if let Some(k) = self.band.iter().find(|&&k| k >= moduli.len()) {
            return invalid(format!("oracle band bin {k} exceeds the {} spectrum bins", moduli.len()));
        }
        let p = design.p() as f64;
        Ok(2.0 / p * self.band.iter().zip(&self.weights).map(|(&k, c)| c * moduli[k]).sum::<f64>())
    }

    pub fn power_law(&self, design: &StructureDesign) -> Result<PowerLaw> {
        let t = (self.gain * self.band_energy(design)?).tanh();
        let u = (design.diameter / self.d_scale).tanh();
        Ok(PowerLaw {
            a: (self.a0 + self.a_d * u + self.a_w * t).exp(),
            b: self.b0 + self.b_d * u + self.b_w * t,
        })
    }

    pub fn response(&self, design: &StructureDesign, grid: &StrainGrid) -> Result<ResponseCurve> {
        Ok(self.power_law(design)?.curve(grid))
    }
}

/// Response of the default oracle.
pub fn synthetic_oracle(design: &StructureDesign, grid: &StrainGrid) -> Result<ResponseCurve> {
    SyntheticOracle::default().response(design, grid)
}
