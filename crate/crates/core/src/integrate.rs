use nalgebra::DVector;

use crate::error::Result;

/// One classical fourth-order Runge-Kutta step of `ẏ = f(t, y)`.
pub fn rk4_step<F>(mut f: F, t: f64, y: &DVector<f64>, dt: f64) -> Result<DVector<f64>>
where
    F: FnMut(f64, &DVector<f64>) -> Result<DVector<f64>>,
{
    let half = 0.5 * dt;
    let k1 = f(t, y)?;
    let k2 = f(t + half, &(y + half * &k1))?;
    let k3 = f(t + half, &(y + half * &k2))?;
    let k4 = f(t + dt, &(y + dt * &k3))?;
    Ok(y + (dt / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4))
}
