use crate::error::{Error, Result};

const SLACK: f64 = 1e-12;

/// `δ = 9(E² − 1)η²L²`.
pub fn delta_for(eta: f64, smoothness: f64, gap: usize) -> f64 {
    let e = gap as f64;
    9.0 * (e * e - 1.0) * (eta * smoothness).powi(2)
}

/// `θ₀ = 1 − 2ηL/(1 − ηL)` for the recursive sequence.
pub fn initial_theta(eta_l: f64) -> f64 {
    1.0 - 2.0 * eta_l / (1.0 - eta_l)
}

/// Positive root `θ'` of `(1 − θ' + δ) / ((1 − δ)θ'²) = 1/θ²`.
pub fn theta_next(theta: f64, delta: f64) -> Result<f64> {
    if !(0.0..1.0).contains(&delta) {
        return Err(Error::DomainError(format!("delta = {delta} outside [0, 1)")));
    }
    if !(theta >= 2.0 * delta - SLACK && theta <= 1.0 + delta + SLACK) {
        return Err(Error::DomainError(format!("theta = {theta} outside [2 delta, 1 + delta] for delta = {delta}")));
    }
    if theta == 0.0 {
        return Ok(0.0);
    }
    // Rationalized root; avoids cancellation for small theta.
    Ok(2.0 * (1.0 + delta) / (1.0 + (1.0 + 4.0 * (1.0 - delta * delta) / (theta * theta)).sqrt()))
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ThetaMode {
    Constant,
    Recursive,
}

/// Momentum weights of the accelerated solver, one per stage.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ThetaState {
    pub delta: f64,
    pub theta: f64,
    pub mode: ThetaMode,
}

impl ThetaState {
    /// `θ = 2δ + √(4δ² + ημm)`.
    pub fn constant(delta: f64, eta: f64, mu: f64, inner_m: usize) -> Result<Self> {
        let theta = 2.0 * delta + (4.0 * delta * delta + eta * mu * inner_m as f64).sqrt();
        Self::fixed(delta, theta)
    }

    /// A caller-chosen constant weight.
    pub fn fixed(delta: f64, theta: f64) -> Result<Self> {
        check(delta, theta)?;
        Ok(Self { delta, theta, mode: ThetaMode::Constant })
    }

    pub fn recursive(delta: f64, theta0: f64) -> Result<Self> {
        check(delta, theta0)?;
        Ok(Self { delta, theta: theta0, mode: ThetaMode::Recursive })
    }

    pub fn current(&self) -> f64 {
        self.theta
    }

    /// Moves to the next stage's weight and returns it.
    pub fn advance(&mut self) -> Result<f64> {
        if self.mode == ThetaMode::Recursive {
            self.theta = theta_next(self.theta, self.delta)?;
        }
        Ok(self.theta)
    }
}

fn check(delta: f64, theta: f64) -> Result<()> {
    if !(0.0..1.0).contains(&delta) {
        return Err(Error::DeltaOutOfRange { delta });
    }
    if !(theta > 2.0 * delta && theta <= 1.0 + delta + SLACK) {
        return Err(Error::ThetaOutOfRange { theta, delta });
    }
    Ok(())
}
