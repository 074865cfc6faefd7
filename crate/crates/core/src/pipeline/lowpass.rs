use nalgebra::Vector3;

/// First-order low-pass `ȧ_filt = (a − a_filt)/τ`, discretised exactly for a
/// piecewise-constant input so it is stable for any step size.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LowPassState {
    pub value: Vector3<f64>,
    pub tau: f64,
}

impl LowPassState {
    pub fn new(tau: f64) -> Self {
        Self {
            value: Vector3::zeros(),
            tau,
        }
    }

    pub fn step(&mut self, input: &Vector3<f64>, dt: f64) -> Vector3<f64> {
        let gain = -(-dt / self.tau).exp_m1();
        self.value += (input - self.value) * gain;
        self.value
    }

    pub fn reset(&mut self, value: Vector3<f64>) {
        self.value = value;
    }
}
