//! Uniform grid in the log-radial variable `t = log(rho) = -log(x)`.
//!
//! `x` is the boundary defining function at the scattering end (`x ~ 1/rho`),
//! so the scattering end `x -> 0` sits at `t -> t_max` and the truncated cone
//! tip at `t_min`.

use crate::error::{Error, Result};

/// Uniform log-radial grid. Nodes are strictly increasing in `t`.
#[derive(Debug, Clone)]
pub struct LogGrid {
    pub t_min: f64,
    pub t_max: f64,
    pub num_points: usize,
    pub h: f64,
    /// `t_i = t_min + i h`
    pub t: Vec<f64>,
    /// radial coordinate `rho_i = e^{t_i}`
    pub rho: Vec<f64>,
    /// boundary defining function `x_i = e^{-t_i}` (decreasing along the grid)
    pub x: Vec<f64>,
}

impl LogGrid {
    pub fn new(t_min: f64, t_max: f64, num_points: usize) -> Result<Self> {
        if !(t_max > t_min) {
            return Err(Error::BadGrid(format!(
                "t_max ({t_max}) must exceed t_min ({t_min})"
            )));
        }
        if num_points < 64 {
            return Err(Error::BadGrid(format!(
                "need at least 64 points, got {num_points}"
            )));
        }
        let h = (t_max - t_min) / (num_points - 1) as f64;
        let t: Vec<f64> = (0..num_points).map(|i| t_min + i as f64 * h).collect();
        let rho: Vec<f64> = t.iter().map(|&ti| ti.exp()).collect();
        let x: Vec<f64> = t.iter().map(|&ti| (-ti).exp()).collect();
        Ok(Self {
            t_min,
            t_max,
            num_points,
            h,
            t,
            rho,
            x,
        })
    }

    /// Acceptance-grade grids require `h <= 0.05`.
    pub fn is_acceptance_grade(&self) -> bool {
        self.h <= 0.05
    }

    pub fn len(&self) -> usize {
        self.num_points
    }

    pub fn is_empty(&self) -> bool {
        self.num_points == 0
    }

    /// Trapezoid quadrature weights in `t` (plain `dt` measure).
    pub fn trapezoid_weights(&self) -> Vec<f64> {
        let n = self.num_points;
        let mut w = vec![self.h; n];
        w[0] = 0.5 * self.h;
        w[n - 1] = 0.5 * self.h;
        w
    }

    /// Gregory endpoint-corrected quadrature weights in `t` (O(h^4) for
    /// smooth integrands, all weights positive). Falls back to trapezoid
    /// when the grid is too short for the 3-point correction.
    pub fn quad_weights(&self) -> Vec<f64> {
        let n = self.num_points;
        if n < 6 {
            return self.trapezoid_weights();
        }
        let mut w = vec![self.h; n];
        for (i, c) in [3.0 / 8.0, 7.0 / 6.0, 23.0 / 24.0].into_iter().enumerate() {
            w[i] = c * self.h;
            w[n - 1 - i] = c * self.h;
        }
        w
    }

    /// Grid translated by `shift` in `t`; same spacing and point count.
    pub fn translated(&self, shift: f64) -> Result<Self> {
        LogGrid::new(self.t_min + shift, self.t_max + shift, self.num_points)
    }

    /// Integer index shift realizing the dilation `x -> x/|sigma|` when
    /// `log(1/|sigma|)` is an exact multiple of `h`. Returns the number of
    /// grid steps, or an error if the shift is not grid-compatible.
    pub fn dilation_shift(&self, sigma_abs: f64) -> Result<i64> {
        if !(sigma_abs > 0.0) {
            return Err(Error::BadGrid("dilation shift needs |sigma| > 0".into()));
        }
        let steps = (1.0 / sigma_abs).ln() / self.h;
        let rounded = steps.round();
        if (steps - rounded).abs() > 1e-9 {
            return Err(Error::BadGrid(format!(
                "log(1/|sigma|)/h = {steps} is not an integer; sigma incompatible with grid shift"
            )));
        }
        Ok(rounded as i64)
    }
}
