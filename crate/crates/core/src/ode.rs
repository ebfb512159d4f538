//! Dormand-Prince 5(4) adaptive integration with grid-aligned output.
//!
//! Steps are capped so the integrator lands exactly on every requested grid
//! point; the recorded states therefore carry no interpolation error on the
//! benchmark grids (which are much finer than the accepted step sizes the
//! tolerances would otherwise allow).

use crate::error::{Error, Result};

/// Trajectory on the requested grid plus step statistics.
#[derive(Clone, Debug)]
pub struct RkSolution {
    /// states[k] is the state vector at t_grid[k].
    pub states: Vec<Vec<f64>>,
    pub accepted_steps: usize,
    pub rejected_steps: usize,
    pub rtol: f64,
    pub atol: f64,
}

// Dormand-Prince coefficients.
const A: [[f64; 6]; 6] = [
    [1.0 / 5.0, 0.0, 0.0, 0.0, 0.0, 0.0],
    [3.0 / 40.0, 9.0 / 40.0, 0.0, 0.0, 0.0, 0.0],
    [44.0 / 45.0, -56.0 / 15.0, 32.0 / 9.0, 0.0, 0.0, 0.0],
    [
        19372.0 / 6561.0,
        -25360.0 / 2187.0,
        64448.0 / 6561.0,
        -212.0 / 729.0,
        0.0,
        0.0,
    ],
    [
        9017.0 / 3168.0,
        -355.0 / 33.0,
        46732.0 / 5247.0,
        49.0 / 176.0,
        -5103.0 / 18656.0,
        0.0,
    ],
    [
        35.0 / 384.0,
        0.0,
        500.0 / 1113.0,
        125.0 / 192.0,
        -2187.0 / 6784.0,
        11.0 / 84.0,
    ],
];
const C: [f64; 6] = [1.0 / 5.0, 3.0 / 10.0, 4.0 / 5.0, 8.0 / 9.0, 1.0, 1.0];
/// 5th-order minus 4th-order weights (error estimator).
const E: [f64; 7] = [
    71.0 / 57600.0,
    0.0,
    -71.0 / 16695.0,
    71.0 / 1920.0,
    -17253.0 / 339200.0,
    22.0 / 525.0,
    -1.0 / 40.0,
];

/// Integrate dy/dt = rhs(t, y) from y0 at t_grid[0], recording the state at
/// every grid point. Local error per step is kept under atol + rtol |y|.
pub fn rk45<F>(mut rhs: F, y0: &[f64], t_grid: &[f64], rtol: f64, atol: f64) -> Result<RkSolution>
where
    F: FnMut(f64, &[f64], &mut [f64]),
{
    if t_grid.len() < 2 {
        return Err(Error::contract("rk45", "need at least two grid points"));
    }
    if !(rtol > 0.0 && atol > 0.0) {
        return Err(Error::contract("rk45", "rtol and atol must be positive"));
    }
    if t_grid.windows(2).any(|w| w[1] <= w[0]) {
        return Err(Error::contract("rk45", "grid must be strictly increasing"));
    }
    let dim = y0.len();
    let t_end = *t_grid.last().expect("non-empty grid");
    let span = t_end - t_grid[0];

    let mut states = Vec::with_capacity(t_grid.len());
    states.push(y0.to_vec());

    let mut t = t_grid[0];
    let mut y = y0.to_vec();
    let mut k = vec![vec![0.0f64; dim]; 7];
    let mut y_stage = vec![0.0f64; dim];
    let mut y_next = vec![0.0f64; dim];
    let mut h = (span / 100.0).min(t_grid[1] - t_grid[0]);
    let mut accepted = 0usize;
    let mut rejected = 0usize;
    let mut next_idx = 1usize;

    while next_idx < t_grid.len() {
        let target = t_grid[next_idx];
        let h_eff = h.min(target - t);
        if h_eff < 1e-14 * t.abs().max(1.0) {
            return Err(Error::Integration {
                t,
                detail: format!("step size underflow (h = {h_eff:.3e})"),
            });
        }

        // Seven stages (k7 evaluated at the candidate point).
        {
            let krow = &mut k[0];
            rhs(t, &y, krow);
        }
        for s in 0..6 {
            for d in 0..dim {
                let mut acc = 0.0;
                for (j, kj) in k.iter().enumerate().take(s + 1) {
                    acc += A[s][j] * kj[d];
                }
                y_stage[d] = y[d] + h_eff * acc;
            }
            if s == 5 {
                y_next.copy_from_slice(&y_stage);
            }
            let krow = &mut k[s + 1];
            rhs(t + C[s] * h_eff, &y_stage, krow);
        }

        // Scaled RMS error of the embedded pair.
        let mut err_sq = 0.0;
        for d in 0..dim {
            let mut e = 0.0;
            for (j, kj) in k.iter().enumerate() {
                e += E[j] * kj[d];
            }
            e *= h_eff;
            let scale = atol + rtol * y[d].abs().max(y_next[d].abs());
            err_sq += (e / scale) * (e / scale);
        }
        let err = (err_sq / dim as f64).sqrt();
        if !err.is_finite() {
            return Err(Error::Integration {
                t,
                detail: "non-finite derivative or state".into(),
            });
        }

        if err <= 1.0 {
            accepted += 1;
            t += h_eff;
            y.copy_from_slice(&y_next);
            while next_idx < t_grid.len() && t >= t_grid[next_idx] - 1e-12 * span.max(1.0) {
                states.push(y.clone());
                next_idx += 1;
            }
        } else {
            rejected += 1;
        }
        let factor = if err == 0.0 {
            5.0
        } else {
            (0.9 * err.powf(-0.2)).clamp(0.2, 5.0)
        };
        h = (h_eff * factor).min(span);
    }

    Ok(RkSolution {
        states,
        accepted_steps: accepted,
        rejected_steps: rejected,
        rtol,
        atol,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn exponential_decay() {
        let grid = [0.0, 1.0];
        let sol = rk45(|_, y, dy| dy[0] = -y[0], &[1.0], &grid, 1e-8, 1e-8).unwrap();
        let want = (-1.0f64).exp();
        assert!(
            (sol.states[1][0] - want).abs() <= 1e-8,
            "{} vs {want}",
            sol.states[1][0]
        );
        assert!(sol.accepted_steps > 0);
    }

    #[test]
    fn harmonic_energy_conservation() {
        // x'' + x = 0 from (0, 1): energy (x^2 + v^2)/2 = 0.5 drifts <= 1e-7
        // over t in [0, 20].
        let grid: Vec<f64> = (0..=2000).map(|k| k as f64 * 0.01).collect();
        let sol = rk45(
            |_, y, dy| {
                dy[0] = y[1];
                dy[1] = -y[0];
            },
            &[0.0, 1.0],
            &grid,
            1e-10,
            1e-10,
        )
        .unwrap();
        for s in &sol.states {
            let e = 0.5 * (s[0] * s[0] + s[1] * s[1]);
            assert!((e - 0.5).abs() <= 1e-7, "energy drift {e}");
        }
    }

    #[test]
    fn lorenz_unforced_equilibrium() {
        // rho = 5: trajectories from (1, 0, 0) settle at
        // (sqrt(32/3), sqrt(32/3), 4).
        let (sigma, rho, beta) = (10.0, 5.0, 8.0 / 3.0);
        let grid: Vec<f64> = (0..=500).map(|k| k as f64 * 0.1).collect();
        let sol = rk45(
            |_, y, dy| {
                dy[0] = sigma * (y[1] - y[0]);
                dy[1] = y[0] * (rho - y[2]) - y[1];
                dy[2] = y[0] * y[1] - beta * y[2];
            },
            &[1.0, 0.0, 0.0],
            &grid,
            1e-10,
            1e-10,
        )
        .unwrap();
        let end = sol.states.last().unwrap();
        let eq = (32.0f64 / 3.0).sqrt();
        assert!((end[0] - eq).abs() <= 1e-3, "{end:?}");
        assert!((end[1] - eq).abs() <= 1e-3);
        assert!((end[2] - 4.0).abs() <= 1e-3);
    }

    #[test]
    fn finite_time_blowup_reports_failure_time() {
        // y' = y^2 from 1 blows up at t = 1.
        let grid = [0.0, 2.0];
        match rk45(|_, y, dy| dy[0] = y[0] * y[0], &[1.0], &grid, 1e-8, 1e-8) {
            Err(Error::Integration { t, .. }) => {
                assert!((0.9..=1.1).contains(&t), "failure at t = {t}");
            }
            other => panic!("expected integration failure, got {other:?}"),
        }
    }

    #[test]
    fn rejects_bad_grids_and_tolerances() {
        assert!(rk45(|_, _, dy| dy[0] = 0.0, &[0.0], &[0.0], 1e-8, 1e-8).is_err());
        assert!(rk45(|_, _, dy| dy[0] = 0.0, &[0.0], &[0.0, -1.0], 1e-8, 1e-8).is_err());
        assert!(rk45(|_, _, dy| dy[0] = 0.0, &[0.0], &[0.0, 1.0], -1.0, 1e-8).is_err());
    }
}
