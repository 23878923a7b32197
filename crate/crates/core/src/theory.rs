//! Step-size conditions from the convergence analysis, evaluated with all
//! constants as written.
//!
//! With `a = theta_r`, `b = theta_m`, `L = L_f`:
//!
//! * local drift:  `4 eta^2 a^2 b^3 tau L^2 <= 1/(8 tau)` (worst local step `t + 1 = tau`)
//! * descent:      `(5/2) a^3 b^2 L^2 eta^2 tau^3 <= tau / (4 b)`
//! * Lyapunov (i): `1 - eta tau L a^2 b^2 - 4 eta^3 tau a^4 b^2 L^2 / n >= 0`
//! * Lyapunov (ii): `20 a^4 L^2 b^3 eta^4 tau^4 / n <= eta tau / (8 b)`
//! * Lyapunov (iii): `5 n eta tau a b^2 L^2 <= 1`

use serde::Serialize;

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct StepSizeInputs {
    pub theta_r: f64,
    pub theta_m: f64,
    pub smoothness: f64,
    pub n_clients: usize,
    pub local_steps: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct StepSizeCondition {
    pub name: &'static str,
    /// Largest step size satisfying this condition alone.
    pub max_step: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct StepSizeReport {
    pub inputs: StepSizeInputs,
    pub conditions: Vec<StepSizeCondition>,
    /// Largest step size satisfying every condition.
    pub bound: f64,
}

impl StepSizeReport {
    pub fn admits(&self, eta: f64) -> bool {
        eta <= self.bound
    }
}

pub fn theory_step_size(inp: StepSizeInputs) -> StepSizeReport {
    let a = inp.theta_r;
    let b = inp.theta_m;
    let l = inp.smoothness;
    let n = inp.n_clients as f64;
    let tau = inp.local_steps as f64;

    let drift = 1.0 / (tau * a * b.powf(1.5) * l * 32f64.sqrt());
    let descent = 1.0 / (10.0 * a.powi(3) * b.powi(3) * l * l * tau * tau).sqrt();
    // monotone decreasing in eta: bisect on the sign change
    let lyap_i = {
        let h = |eta: f64| 1.0 - eta * tau * l * a * a * b * b - 4.0 * eta.powi(3) * tau * a.powi(4) * b * b * l * l / n;
        let mut lo = 0.0;
        let mut hi = 1.0;
        while h(hi) >= 0.0 {
            hi *= 2.0;
        }
        for _ in 0..200 {
            let mid = 0.5 * (lo + hi);
            if h(mid) >= 0.0 {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        lo
    };
    let lyap_ii = (n / (160.0 * a.powi(4) * l * l * b.powi(4) * tau.powi(3))).cbrt();
    let lyap_iii = 1.0 / (5.0 * n * tau * a * b * b * l * l);

    let conditions = vec![
        StepSizeCondition { name: "local-drift", max_step: drift },
        StepSizeCondition { name: "descent", max_step: descent },
        StepSizeCondition { name: "lyapunov-i", max_step: lyap_i },
        StepSizeCondition { name: "lyapunov-ii", max_step: lyap_ii },
        StepSizeCondition { name: "lyapunov-iii", max_step: lyap_iii },
    ];
    let bound = conditions.iter().map(|c| c.max_step).fold(f64::INFINITY, f64::min);
    StepSizeReport {
        inputs: inp,
        conditions,
        bound,
    }
}
