//! Cancellation-free building blocks for the affine flow and its sensitivities.
//!
//! Each helper is the regular extension of an expression with a removable
//! singularity at zero; small arguments are handled by Taylor series.

/// `(e^z - 1) / z`, equal to 1 at `z = 0`.
#[inline]
pub fn expm1_ratio(z: f64) -> f64 {
    if z == 0.0 {
        1.0
    } else if z.abs() < 1e-5 {
        1.0 + z * (0.5 + z / 6.0)
    } else {
        z.exp_m1() / z
    }
}

/// `(z e^z - e^z + 1) / z^2`, the derivative of [`expm1_ratio`]; 1/2 at zero.
#[inline]
pub fn expm1_ratio_derivative(z: f64) -> f64 {
    if z.abs() < 0.1 {
        // sum_{n>=2} (n - 1) z^{n-2} / n!
        let mut sum = 0.0;
        let mut inv_fact = 1.0;
        let mut pow = 1.0;
        for n in 2..20 {
            inv_fact /= n as f64;
            sum += (n - 1) as f64 * inv_fact * pow;
            pow *= z;
        }
        sum
    } else {
        (z * z.exp() - z.exp_m1()) / (z * z)
    }
}

/// `ln(1 + r) / r`, equal to 1 at `r = 0`. Requires `r > -1`.
#[inline]
pub fn log1p_ratio(r: f64) -> f64 {
    if r == 0.0 {
        1.0
    } else if r.abs() < 1e-5 {
        1.0 - r * (0.5 - r / 3.0)
    } else {
        r.ln_1p() / r
    }
}

/// `(ln(1 + r) - r / (1 + r)) / r^2`; 1/2 at zero. Requires `r > -1`.
#[inline]
pub fn log1p_defect_ratio(r: f64) -> f64 {
    if r.abs() < 0.05 {
        // sum_{n>=2} (-1)^n (n - 1) / n r^{n-2}
        let mut sum = 0.0;
        let mut pow = 1.0;
        for n in 2..40 {
            let nf = n as f64;
            let sign = if n % 2 == 0 { 1.0 } else { -1.0 };
            let term = sign * (nf - 1.0) / nf * pow;
            sum += term;
            if term.abs() < 1e-18 {
                break;
            }
            pow *= r;
        }
        sum
    } else {
        (r.ln_1p() - r / (1.0 + r)) / (r * r)
    }
}
