//! Empirical `(C_W, beta_W)` with `||W^(r) - E_n|| <= C_W beta_W^r` for PULM restarted at `W = I`.

use crate::consensus::DistributionMatrix;
use crate::error::{Result, SimError};
use crate::mixing::MixingMatrix;

/// `w_error` values at or below this are treated as converged and left out of the fit.
pub const W_ERROR_FLOOR: f64 = 1e-13;

/// Lower clamp on `beta_W`, reached when a window converges in one round.
pub const BETA_FLOOR: f64 = 1e-6;

/// Slopes above this count as non-decaying.
const DECAY_TOLERANCE: f64 = -1e-12;

/// Least-squares fit of `ln w_error` against `r` for one window.
#[derive(Debug, Clone, PartialEq)]
pub struct WindowFit {
    pub window: usize,
    pub start_round: usize,
    /// `-inf` when fewer than two points sit above the floor.
    pub slope: f64,
    pub intercept: f64,
    /// RMS of the log-residuals.
    pub residual: f64,
    /// Fitted points: rounds `r >= 1` above the floor.
    pub points: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CalibrationReport {
    pub c_w: f64,
    pub beta_w: f64,
    pub fits: Vec<WindowFit>,
    /// Largest per-window fit residual.
    pub max_residual: f64,
    /// `w_error` for `r = 0..=rounds`, per window.
    pub w_errors: Vec<Vec<f64>>,
}

impl CalibrationReport {
    pub fn envelope(&self, r: usize) -> f64 {
        self.c_w * self.beta_w.powi(r as i32)
    }
}

fn fit(points: &[(f64, f64)]) -> (f64, f64, f64) {
    match points.len() {
        0 => (f64::NEG_INFINITY, f64::NEG_INFINITY, 0.0),
        1 => (f64::NEG_INFINITY, points[0].1, 0.0),
        m => {
            let m = m as f64;
            let mx = points.iter().map(|p| p.0).sum::<f64>() / m;
            let my = points.iter().map(|p| p.1).sum::<f64>() / m;
            let sxy: f64 = points.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
            let sxx: f64 = points.iter().map(|p| (p.0 - mx).powi(2)).sum();
            let slope = sxy / sxx;
            let intercept = my - slope * mx;
            let rss: f64 = points.iter().map(|p| (p.1 - intercept - slope * p.0).powi(2)).sum();
            (slope, intercept, (rss / m).sqrt())
        }
    }
}

/// Splits `seq` into `windows` consecutive blocks of `rounds` matrices, restarts the
/// distribution matrix at the identity in each block and fits its log-error over `r >= 1`.
///
/// `beta_W = max(exp(max slope), BETA_FLOOR)`. `C_W` is the larger of `exp(max intercept)` and
/// `max w_error(r) / beta_W^r` over every point above the floor, so the envelope dominates
/// every observation.
pub fn calibrate_sequence(seq: &[MixingMatrix], windows: usize, rounds: usize) -> Result<CalibrationReport> {
    if windows == 0 || rounds == 0 {
        return Err(SimError::invalid(
            "calibration needs at least one window of at least one round",
        ));
    }
    if seq.len() < windows * rounds {
        return Err(SimError::invalid(format!(
            "calibration needs {} matrices, got {}",
            windows * rounds,
            seq.len()
        )));
    }
    let n = seq[0].size();
    let mut fits = Vec::with_capacity(windows);
    let mut w_errors = Vec::with_capacity(windows);
    for m in 0..windows {
        let start = m * rounds;
        let mut w = DistributionMatrix::identity(n);
        let mut errs = vec![w.w_error()];
        for a in &seq[start..start + rounds] {
            w = w.step(a)?;
            errs.push(w.w_error());
        }
        // r = 0 is skipped: the first adjust resets the diagonal from 1 to 1/n, a jump that is
        // not part of the geometric tail and would make a frozen sequence look like it decays.
        let pts: Vec<(f64, f64)> = errs
            .iter()
            .enumerate()
            .skip(1)
            .filter(|(_, &e)| e > W_ERROR_FLOOR)
            .map(|(r, &e)| (r as f64, e.ln()))
            .collect();
        let (slope, intercept, residual) = fit(&pts);
        fits.push(WindowFit {
            window: m,
            start_round: start,
            slope,
            intercept,
            residual,
            points: pts.len(),
        });
        w_errors.push(errs);
    }
    if n == 1 {
        // W = E_1 from the start; nothing to fit.
        return Ok(CalibrationReport {
            c_w: 1.0,
            beta_w: BETA_FLOOR,
            fits,
            max_residual: 0.0,
            w_errors,
        });
    }
    let max_slope = fits.iter().map(|f| f.slope).fold(f64::NEG_INFINITY, f64::max);
    if max_slope > DECAY_TOLERANCE {
        let worst = fits.iter().find(|f| f.slope == max_slope).expect("non-empty");
        return Err(SimError::CalibrationFailed(format!(
            "w_error does not decay in window {} (slope {max_slope:e}); the topology violates the connectivity assumptions",
            worst.window
        )));
    }
    let beta_w = max_slope.exp().max(BETA_FLOOR);
    let mut c_w = fits.iter().map(|f| f.intercept).fold(f64::NEG_INFINITY, f64::max).exp();
    for errs in &w_errors {
        for (r, &e) in errs.iter().enumerate() {
            if e > W_ERROR_FLOOR {
                c_w = c_w.max(e / beta_w.powi(r as i32));
            }
        }
    }
    let max_residual = fits.iter().map(|f| f.residual).fold(0.0, f64::max);
    Ok(CalibrationReport {
        c_w,
        beta_w,
        fits,
        max_residual,
        w_errors,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    #[test]
    fn averaging_matrix_hits_the_beta_floor() {
        let seq = vec![MixingMatrix::averaging(5); 500];
        let rep = calibrate_sequence(&seq, 10, 50).unwrap();
        assert_eq!(rep.beta_w, BETA_FLOOR);
        // Nothing past r = 0 is above the floor, so C_W = ||I - E_5||_F = 2.
        assert_abs_diff_eq!(rep.c_w, 2.0, epsilon = 1e-12);
    }

    #[test]
    fn static_pair_decays_at_the_clamped_submatrix_rate() {
        // Column l of W evolves by A with entry l clamped, so the error contracts by
        // max_l rho(A without row/column l) = max(0.5, 0.9) = 0.9 per round.
        let a1 = MixingMatrix::row_stochastic(&[[0.9, 0.1], [0.5, 0.5]]).unwrap();
        let seq = vec![a1; 500];
        let rep = calibrate_sequence(&seq, 10, 50).unwrap();
        assert_abs_diff_eq!(rep.beta_w, 0.9, epsilon = 1e-3);
        for errs in &rep.w_errors {
            for (r, &e) in errs.iter().enumerate() {
                assert!(e <= rep.envelope(r) * (1.0 + 1e-12));
            }
        }
    }

    #[test]
    fn identity_sequence_fails() {
        let seq = vec![MixingMatrix::identity(3); 100];
        assert!(matches!(
            calibrate_sequence(&seq, 2, 50),
            Err(SimError::CalibrationFailed(_))
        ));
    }

    #[test]
    fn short_sequence_is_rejected() {
        let seq = vec![MixingMatrix::averaging(3); 10];
        assert!(matches!(
            calibrate_sequence(&seq, 2, 50),
            Err(SimError::InvalidArgument(_))
        ));
    }

    #[test]
    fn least_squares_recovers_an_exact_line() {
        let pts: Vec<(f64, f64)> = (0..10).map(|r| (r as f64, 1.5 - 0.25 * r as f64)).collect();
        let (s, c, res) = fit(&pts);
        assert_abs_diff_eq!(s, -0.25, epsilon = 1e-14);
        assert_abs_diff_eq!(c, 1.5, epsilon = 1e-14);
        assert!(res < 1e-14);
    }
}
