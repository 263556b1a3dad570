//! Standard normal CDF and quantile.
//!
//! `phi` uses Cody's rational Chebyshev approximation for erfc (relative
//! error below 1e-15 over the double range); `phi_inv` is Wichura's PPND16.
//! Both are far inside the 1e-7 accuracy contract.

/// erfc via W. J. Cody's CALERF rational approximations.
fn erfc(x: f64) -> f64 {
    let ax = x.abs();
    if ax < 0.46875 {
        // erf on [0, 0.46875]
        const A: [f64; 5] = [
            3.16112374387056560e0,
            1.13864154151050156e2,
            3.77485237685302021e2,
            3.20937758913846947e3,
            1.85777706184603153e-1,
        ];
        const B: [f64; 4] = [
            2.36012909523441209e1,
            2.44024637934444173e2,
            1.28261652607737228e3,
            2.84423683343917062e3,
        ];
        let z = x * x;
        let num = ((((A[4] * z + A[0]) * z + A[1]) * z + A[2]) * z + A[3]) * x;
        let den = (((z + B[0]) * z + B[1]) * z + B[2]) * z + B[3];
        return 1.0 - num / den;
    }
    let r = if ax <= 4.0 {
        const C: [f64; 9] = [
            5.64188496988670089e-1,
            8.88314979438837594e0,
            6.61191906371416295e1,
            2.98635138197400131e2,
            8.81952221241769090e2,
            1.71204761263407058e3,
            2.05107837782607147e3,
            1.23033935479799725e3,
            2.15311535474403846e-8,
        ];
        const D: [f64; 8] = [
            1.57449261107098347e1,
            1.17693950891312499e2,
            5.37181101862009858e2,
            1.62138957456669019e3,
            3.29079923573345963e3,
            4.36261909014324716e3,
            3.43936767414372164e3,
            1.23033935480374942e3,
        ];
        let num = ((((((((C[8] * ax + C[0]) * ax + C[1]) * ax + C[2]) * ax + C[3]) * ax + C[4])
            * ax
            + C[5])
            * ax
            + C[6])
            * ax
            + C[7])
            * 1.0;
        let den = (((((((ax + D[0]) * ax + D[1]) * ax + D[2]) * ax + D[3]) * ax + D[4]) * ax
            + D[5])
            * ax
            + D[6])
            * ax
            + D[7];
        (-ax * ax).exp() * num / den
    } else {
        const P: [f64; 6] = [
            3.05326634961232344e-1,
            3.60344899949804439e-1,
            1.25781726111229246e-1,
            1.60837851487422766e-2,
            6.58749161529837803e-4,
            1.63153871373020978e-2,
        ];
        const Q: [f64; 5] = [
            2.56852019228982242e0,
            1.87295284992346047e0,
            5.27905102951428412e-1,
            6.05183413124413191e-2,
            2.33520497626869185e-3,
        ];
        let z = 1.0 / (ax * ax);
        let num = ((((P[5] * z + P[0]) * z + P[1]) * z + P[2]) * z + P[3]) * z + P[4];
        let den = ((((z + Q[0]) * z + Q[1]) * z + Q[2]) * z + Q[3]) * z + Q[4];
        const FRAC_1_SQRT_PI: f64 = 5.6418958354775628695e-1;
        let poly = z * num / den;
        ((-ax * ax).exp() / ax) * (FRAC_1_SQRT_PI - poly)
    };
    if x < 0.0 {
        2.0 - r
    } else {
        r
    }
}

/// Standard normal CDF.
pub fn phi(z: f64) -> f64 {
    0.5 * erfc(-z / std::f64::consts::SQRT_2)
}

/// Upper tail of the standard normal, `1 - phi(z)`, without cancellation.
pub fn phi_bar(z: f64) -> f64 {
    0.5 * erfc(z / std::f64::consts::SQRT_2)
}

/// Standard normal quantile (Wichura, algorithm AS 241, PPND16).
pub fn phi_inv(p: f64) -> f64 {
    assert!(p > 0.0 && p < 1.0, "phi_inv domain is (0,1), got {p}");
    let q = p - 0.5;
    if q.abs() <= 0.425 {
        let r = 0.180625 - q * q;
        return q * poly(&A7, r) / poly(&B7, r);
    }
    let r = if q < 0.0 { p } else { 1.0 - p };
    let mut r = (-r.ln()).sqrt();
    let val = if r <= 5.0 {
        r -= 1.6;
        poly(&C7, r) / poly(&D7, r)
    } else {
        r -= 5.0;
        poly(&E7, r) / poly(&F7, r)
    };
    if q < 0.0 {
        -val
    } else {
        val
    }
}

fn poly(coeffs: &[f64], x: f64) -> f64 {
    coeffs.iter().rev().fold(0.0, |acc, &c| acc * x + c)
}

const A7: [f64; 8] = [
    3.3871328727963666080e0,
    1.3314166789178437745e2,
    1.9715909503065514427e3,
    1.3731693765509461125e4,
    4.5921953931549871457e4,
    6.7265770927008700853e4,
    3.3430575583588128105e4,
    2.5090809287301226727e3,
];
const B7: [f64; 8] = [
    1.0,
    4.2313330701600911252e1,
    6.8718700749205790830e2,
    5.3941960214247511077e3,
    2.1213794301586595867e4,
    3.9307895800092710610e4,
    2.8729085735721942674e4,
    5.2264952788528545610e3,
];
const C7: [f64; 8] = [
    1.42343711074968357734e0,
    4.63033784615654529590e0,
    5.76949722146069140550e0,
    3.64784832476320460504e0,
    1.27045825245236838258e0,
    2.41780725177450611770e-1,
    2.27238449892691845833e-2,
    7.74545014278341407640e-4,
];
const D7: [f64; 8] = [
    1.0,
    2.05319162663775882187e0,
    1.67638483018380384940e0,
    6.89767334985100004550e-1,
    1.48103976427480074590e-1,
    1.51986665636164571966e-2,
    5.47593808499534494600e-4,
    1.05075007164441684324e-9,
];
const E7: [f64; 8] = [
    6.65790464350110377720e0,
    5.46378491116411436990e0,
    1.78482653991729133580e0,
    2.96560571828504891230e-1,
    2.65321895265761230930e-2,
    1.24266094738807843860e-3,
    2.71155556874348757815e-5,
    2.01033439929228813265e-7,
];
const F7: [f64; 8] = [
    1.0,
    5.99832206555887937690e-1,
    1.36929880922735805310e-1,
    1.48753612908506148525e-2,
    7.86869131145613259100e-4,
    1.84631831751005468180e-5,
    1.42151175831644588870e-7,
    2.04426310338993978564e-15,
];

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn quantile_known_values() {
        assert!((phi_inv(0.975) - 1.959963984540054).abs() < 1e-10);
        assert!((phi_inv(0.95) - 1.6448536269514722).abs() < 1e-10);
        assert!((phi_inv(0.8) - 0.8416212335729143).abs() < 1e-10);
        assert!((phi_inv(0.5)).abs() < 1e-15);
        assert!((phi_inv(1.0 - 0.00037037) - 3.374038525543936).abs() < 1e-9);
    }

    #[test]
    fn cdf_known_values() {
        assert!((phi(0.0) - 0.5).abs() < 1e-15);
        assert!((phi(1.959963984540054) - 0.975).abs() < 1e-12);
        assert!((phi_bar(3.0) - 1.3498980316300946e-3).abs() < 1e-12);
        assert!((phi(-1.0) - 0.15865525393145707).abs() < 1e-12);
    }

    #[test]
    fn cdf_quantile_roundtrip() {
        for i in 1..999 {
            let p = i as f64 / 1000.0;
            let z = phi_inv(p);
            assert!((phi(z) - p).abs() < 1e-12, "p={p}");
        }
        // deep tails
        for &p in &[1e-10, 1e-6, 1e-3, 1.0 - 1e-3, 1.0 - 1e-6] {
            let z = phi_inv(p);
            assert!((phi(z) - p).abs() / p.min(1.0 - p) < 1e-7, "p={p}");
        }
    }

    #[test]
    fn tail_symmetry() {
        for &z in &[0.3, 1.7, 4.2, 7.5] {
            assert!((phi(z) + phi_bar(z) - 1.0).abs() < 1e-14);
            assert!((phi(-z) - phi_bar(z)).abs() < 1e-15);
        }
    }
}
