//! Gain crossover, phase margin with a pure delay, Nyquist locus and
//! encirclement counting.

use std::f64::consts::PI;

use num_complex::Complex64;
use thiserror::Error;

use crate::lti::{ComplexPoint, ContinuousTf, LtiError};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum StabilityError {
    #[error("DC gain magnitude {0} does not exceed 1; no gain crossover")]
    NoGainCrossover(f64),
    #[error("magnitude stays above 1 up to {0} rad/s")]
    CrossoverNotBracketed(f64),
    #[error("delay must be finite and >= 0, got {0}")]
    BadDelay(f64),
    #[error("frequency grid must be positive and strictly ascending")]
    BadGrid,
    #[error("locus passes within {0:e} of -1; encirclement count is ambiguous")]
    Marginal(f64),
    #[error(transparent)]
    Lti(#[from] LtiError),
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MarginReport {
    pub gain_crossover_omega: f64,
    pub phase_margin_deg: f64,
    pub stable: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct NyquistLocus {
    pub omegas: Vec<f64>,
    pub points: Vec<ComplexPoint>,
}

impl NyquistLocus {
    /// Negative-frequency mirror followed by the positive branch, as
    /// `(omega, point)` pairs ordered from −ω_max to ω_max.
    pub fn closed(&self) -> Vec<(f64, ComplexPoint)> {
        let neg = self.omegas.iter().zip(&self.points).rev().map(|(w, p)| (-w, p.conj()));
        let pos = self.omegas.iter().copied().zip(self.points.iter().copied());
        neg.chain(pos).collect()
    }
}

fn magnitude(ctf: &ContinuousTf, w: f64) -> Result<f64, StabilityError> {
    Ok(ctf.freq_response(w)?.norm())
}

/// Frequency where `|G(jω)| = 1`, by bisection. Dead time is ignored (it
/// does not change the magnitude).
pub fn gain_crossover(ctf: &ContinuousTf) -> Result<f64, StabilityError> {
    let dc = magnitude(ctf, 0.0)?;
    if dc <= 1.0 {
        return Err(StabilityError::NoGainCrossover(dc));
    }
    let mut hi = 1.0;
    while magnitude(ctf, hi)? >= 1.0 {
        hi *= 2.0;
        if hi > 1e12 {
            return Err(StabilityError::CrossoverNotBracketed(hi));
        }
    }
    let mut lo = 0.0;
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        if magnitude(ctf, mid)? > 1.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok(0.5 * (lo + hi))
}

/// `ϕ_M = 180° + ∠G(jω_g) − ω_g·τ_d·180/π`, with the rational part's phase
/// taken as its principal value.
pub fn phase_margin(ctf: &ContinuousTf, tau_d: f64) -> Result<MarginReport, StabilityError> {
    if !(tau_d.is_finite() && tau_d >= 0.0) {
        return Err(StabilityError::BadDelay(tau_d));
    }
    let rational = ctf.clone().with_dead_time(0.0)?;
    let wg = gain_crossover(&rational)?;
    let phase = rational.freq_response(wg)?.arg().to_degrees();
    let pm = 180.0 + phase - (ctf.dead_time() + tau_d) * wg * 180.0 / PI;
    Ok(MarginReport { gain_crossover_omega: wg, phase_margin_deg: pm, stable: pm > 0.0 })
}

fn log_space(lo: f64, hi: f64, n: usize) -> impl Iterator<Item = f64> {
    let (a, b) = (lo.log10(), hi.log10());
    (0..n).map(move |i| 10f64.powf(a + (b - a) * i as f64 / (n - 1) as f64))
}

/// 1000 log-spaced points over [1e-3, 1e3] rad/s, with ten times the
/// density over the decade centered on `omega_g` when given.
pub fn default_grid(omega_g: Option<f64>) -> Vec<f64> {
    let mut w: Vec<f64> = log_space(1e-3, 1e3, 1000).collect();
    if let Some(wg) = omega_g.filter(|w| *w > 0.0) {
        let (lo, hi) = (wg / 10f64.sqrt(), wg * 10f64.sqrt());
        w.extend(log_space(lo, hi, 1667));
    }
    w.sort_by(f64::total_cmp);
    w.dedup_by(|a, b| (*a - *b).abs() <= 1e-12 * b.abs());
    w
}

/// `G(jω)·e^(−jωτ_d)` over the grid (positive frequencies).
pub fn nyquist_locus(ctf: &ContinuousTf, tau_d: f64, omegas: &[f64]) -> Result<NyquistLocus, StabilityError> {
    if !(tau_d.is_finite() && tau_d >= 0.0) {
        return Err(StabilityError::BadDelay(tau_d));
    }
    if omegas.iter().any(|w| !(*w > 0.0)) || omegas.windows(2).any(|p| p[1] <= p[0]) {
        return Err(StabilityError::BadGrid);
    }
    let delayed = ctf.clone().with_dead_time(ctf.dead_time() + tau_d)?;
    let points = omegas
        .iter()
        .map(|&w| delayed.freq_response(w))
        .collect::<Result<Vec<_>, _>>()?;
    Ok(NyquistLocus { omegas: omegas.to_vec(), points })
}

/// Clockwise encirclements of −1 by the closed contour (positive branch,
/// mirrored negative branch, closed through the point at infinity).
pub fn encirclements(locus: &NyquistLocus) -> Result<i32, StabilityError> {
    const TOL: f64 = 1e-9;
    let minus_one = Complex64::new(-1.0, 0.0);
    let path: Vec<Complex64> = locus.closed().into_iter().map(|(_, p)| p - minus_one).collect();
    if path.iter().any(|v| v.norm() < TOL) {
        return Err(StabilityError::Marginal(TOL));
    }
    let mut total = 0.0;
    for i in 0..path.len() {
        let a = path[i];
        let b = path[(i + 1) % path.len()];
        total += (b / a).arg();
    }
    Ok(-(total / (2.0 * PI)).round() as i32)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn motor() -> ContinuousTf {
        ContinuousTf::first_order(4.159, 3.888).unwrap()
    }

    #[test]
    fn crossover_examples() {
        let w = gain_crossover(&motor()).unwrap();
        assert!((w - (4.159f64.powi(2) - 3.888f64.powi(2)).sqrt()).abs() < 1e-9);
        assert!((motor().freq_response(w).unwrap().norm() - 1.0).abs() < 1e-9);
        let g = ContinuousTf::first_order(2.0, 1.0).unwrap();
        assert!((gain_crossover(&g).unwrap() - 3f64.sqrt()).abs() < 1e-9);
        let g = ContinuousTf::first_order(0.5, 1.0).unwrap();
        assert!(matches!(gain_crossover(&g), Err(StabilityError::NoGainCrossover(_))));
    }

    #[test]
    fn margin_examples() {
        let r = phase_margin(&motor(), 0.0).unwrap();
        assert!((r.phase_margin_deg - 159.19).abs() < 0.02);
        let r = phase_margin(&motor(), 1.0).unwrap();
        assert!((r.phase_margin_deg - 74.5).abs() < 0.2);
        let r = phase_margin(&motor(), 2.0).unwrap();
        assert!(r.phase_margin_deg < 0.0 && !r.stable);
    }

    #[test]
    fn margin_is_affine_in_delay() {
        let m: Vec<f64> = [0.1, 0.7, 1.3].iter().map(|&t| phase_margin(&motor(), t).unwrap().phase_margin_deg).collect();
        assert!(((m[1] - m[0]) - (m[2] - m[1])).abs() < 1e-9);
        let wg = gain_crossover(&motor()).unwrap();
        assert!(((m[1] - m[0]) / 0.6 + wg * 180.0 / PI).abs() < 1e-9);
    }

    #[test]
    fn delay_preserves_magnitude_at_crossover() {
        let wg = gain_crossover(&motor()).unwrap();
        for tau in [0.0, 0.3, 2.0] {
            let l = nyquist_locus(&motor(), tau, &[wg]).unwrap();
            assert!((l.points[0].norm() - 1.0).abs() < 1e-9);
        }
    }

    #[test]
    fn encirclements_follow_margin_sign() {
        let wg = gain_crossover(&motor()).unwrap();
        let grid = default_grid(Some(wg));
        for (tau, expect_stable) in [(0.0, true), (0.3, true), (2.0, false)] {
            let n = encirclements(&nyquist_locus(&motor(), tau, &grid).unwrap()).unwrap();
            assert_eq!(n == 0, expect_stable, "tau={tau} n={n}");
            assert_eq!(phase_margin(&motor(), tau).unwrap().stable, expect_stable);
        }
        let k = ContinuousTf::gain(0.5).unwrap();
        assert_eq!(encirclements(&nyquist_locus(&k, 0.0, &grid).unwrap()).unwrap(), 0);
    }

    #[test]
    fn phase_at_crossover_approaches_minus_180() {
        let wg = gain_crossover(&motor()).unwrap();
        let mut last = f64::INFINITY;
        for tau in [0.0, 0.2, 0.5, 1.0, 1.5] {
            let p = nyquist_locus(&motor(), tau, &[wg]).unwrap().points[0];
            // unwrapped phase: rational part plus −ωτ
            let phase = motor().freq_response(wg).unwrap().arg() - wg * tau;
            assert!((Complex64::from_polar(1.0, phase) - p).norm() < 1e-9);
            let dist = (phase.to_degrees() + 180.0).abs();
            assert!(dist < last);
            last = dist;
        }
    }

    #[test]
    fn grid_checks() {
        assert!(nyquist_locus(&motor(), 0.0, &[1.0, 0.5]).is_err());
        let g = default_grid(Some(1.5));
        assert!(g.windows(2).all(|w| w[1] > w[0]));
        assert!(g.len() > 2000);
    }
}
