//! Scalar activations shared by layers and loss code.

pub fn leaky_relu(z: f64, slope: f64) -> f64 {
    if z > 0.0 {
        z
    } else {
        slope * z
    }
}

pub fn leaky_relu_f32(z: f32, slope: f32) -> f32 {
    if z > 0.0 {
        z
    } else {
        slope * z
    }
}

/// Logistic function, evaluated without overflowing `exp` for large |z|.
pub fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

pub fn sigmoid_f32(z: f32) -> f32 {
    sigmoid(z as f64) as f32
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sigmoid_saturates_cleanly() {
        assert_eq!(sigmoid(0.0), 0.5);
        assert!(sigmoid(-1000.0) >= 0.0 && sigmoid(-1000.0) < 1e-300);
        assert_eq!(sigmoid(1000.0), 1.0);
        assert!((sigmoid(2.0) + sigmoid(-2.0) - 1.0).abs() < 1e-15);
    }

    #[test]
    fn leaky_relu_slopes() {
        assert_eq!(leaky_relu(3.0, 0.2), 3.0);
        assert_eq!(leaky_relu(-3.0, 0.2), -0.6000000000000001);
        assert_eq!(leaky_relu_f32(-1.0, 0.2), -0.2);
    }
}
