use serde::{Deserialize, Serialize};

use crate::error::{Result, UrnError};
use crate::meanfield::{mean_field, MeanFieldModel};

const MAX_HALVINGS: u32 = 20;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FlowTrajectory {
    pub t: Vec<f64>,
    pub y: Vec<Vec<f64>>,
    /// Number of step-size halvings that were needed.
    pub halvings: u32,
}

impl FlowTrajectory {
    pub fn endpoint(&self) -> &[f64] {
        self.y.last().expect("flow has at least its initial point")
    }
}

fn axpy(y: &[f64], a: f64, k: &[f64]) -> Vec<f64> {
    y.iter().zip(k).map(|(u, v)| u - a * v).collect()
}

/// One classical RK4 step of `ẏ = −h(y)`.
fn rk4(model: &MeanFieldModel, y: &[f64], dt: f64) -> Result<Vec<f64>> {
    let k1 = mean_field(model, y)?;
    let k2 = mean_field(model, &axpy(y, dt / 2.0, &k1))?;
    let k3 = mean_field(model, &axpy(y, dt / 2.0, &k2))?;
    let k4 = mean_field(model, &axpy(y, dt, &k3))?;
    Ok((0..y.len())
        .map(|i| y[i] - dt / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]))
        .collect())
}

/// Integrates `ẏ = −h(y)` from `y0` to `t_end`, projecting round-off back
/// onto the simplex after each step. A step that leaves the simplex by more
/// than round-off is retried with half the step size.
pub fn ode_flow(model: &MeanFieldModel, y0: &[f64], t_end: f64, dt: f64) -> Result<FlowTrajectory> {
    let d = model.dim();
    if y0.len() != d || y0.iter().any(|v| *v < 0.0) || (y0.iter().sum::<f64>() - 1.0).abs() > 1e-9 {
        return Err(UrnError::invalid("y0", "must lie in the simplex"));
    }
    if !(t_end >= 0.0) || !(dt > 0.0) {
        return Err(UrnError::invalid("dt", "need t_end >= 0 and dt > 0"));
    }
    let mut t = 0.0;
    let mut y = y0.to_vec();
    let mut out = FlowTrajectory {
        t: vec![0.0],
        y: vec![y.clone()],
        halvings: 0,
    };
    let mut h = dt;
    while t < t_end - 1e-12 {
        let step = h.min(t_end - t);
        let next = rk4(model, &y, step);
        let ok = match &next {
            Ok(v) => v.iter().all(|x| x.is_finite() && *x > -1e-9),
            Err(_) => false,
        };
        if !ok {
            if out.halvings >= MAX_HALVINGS {
                return Err(UrnError::Internal(format!(
                    "flow unstable at t = {t} after {MAX_HALVINGS} halvings"
                )));
            }
            out.halvings += 1;
            h /= 2.0;
            continue;
        }
        let mut v = next.unwrap();
        v.iter_mut().for_each(|x| *x = x.max(0.0));
        let s: f64 = v.iter().sum();
        v.iter_mut().for_each(|x| *x /= s);
        y = v;
        t += step;
        out.t.push(t);
        out.y.push(y.clone());
    }
    Ok(out)
}
