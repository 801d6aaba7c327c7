use super::Matrix;

#[inline]
pub fn relu_scalar(x: f64) -> f64 {
    if x > 0.0 {
        x
    } else {
        0.0
    }
}

/// Logistic function, evaluated on the branch that never overflows `exp`.
#[inline]
pub fn sigmoid_scalar(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// `ln(1 + e^x)`; exact to within 1e-12 of the closed form outside [-30, 30].
#[inline]
pub fn softplus_scalar(x: f64) -> f64 {
    if x > 30.0 {
        x
    } else if x < -30.0 {
        x.exp()
    } else {
        x.exp().ln_1p()
    }
}

/// `ln sigmoid(x)`.
#[inline]
pub fn log_sigmoid_scalar(x: f64) -> f64 {
    -softplus_scalar(-x)
}

pub fn relu(x: &Matrix) -> Matrix {
    x.map(relu_scalar)
}

pub fn sigmoid(x: &Matrix) -> Matrix {
    x.map(sigmoid_scalar)
}

pub fn softplus(x: &Matrix) -> Matrix {
    x.map(softplus_scalar)
}
