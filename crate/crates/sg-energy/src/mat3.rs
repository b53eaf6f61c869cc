//! Small fixed-size float kernels: 3-vectors, 3x3 and 2x2 matrices.
//!
//! Everything downstream of the harmonic structure works with products of
//! 3x3 maps and their restrictions to the mean-zero plane, so these stay
//! plain arrays on the stack. The 2x2 helpers use closed forms for the
//! operator norm and eigenvalues; for the long matrix products that show up
//! in ratio estimates, the closed form is the only variant that keeps its
//! accuracy once the entries span many orders of magnitude.

pub type Vec3 = [f64; 3];
pub type Mat3 = [[f64; 3]; 3];
pub type Mat2 = [[f64; 2]; 2];

pub const MAT3_IDENTITY: Mat3 = [[1.0, 0.0, 0.0], [0.0, 1.0, 0.0], [0.0, 0.0, 1.0]];

pub fn dot3(x: &Vec3, y: &Vec3) -> f64 {
    x[0] * y[0] + x[1] * y[1] + x[2] * y[2]
}

pub fn norm3(x: &Vec3) -> f64 {
    dot3(x, x).sqrt()
}

pub fn sub3(x: &Vec3, y: &Vec3) -> Vec3 {
    [x[0] - y[0], x[1] - y[1], x[2] - y[2]]
}

pub fn scale3(x: &Vec3, c: f64) -> Vec3 {
    [c * x[0], c * x[1], c * x[2]]
}

pub fn cross3(x: &Vec3, y: &Vec3) -> Vec3 {
    [
        x[1] * y[2] - x[2] * y[1],
        x[2] * y[0] - x[0] * y[2],
        x[0] * y[1] - x[1] * y[0],
    ]
}

/// y = M x
pub fn matvec3(m: &Mat3, x: &Vec3) -> Vec3 {
    [dot3(&m[0], x), dot3(&m[1], x), dot3(&m[2], x)]
}

/// y = M^T x  (columns of M dotted with x)
pub fn tmatvec3(m: &Mat3, x: &Vec3) -> Vec3 {
    [
        m[0][0] * x[0] + m[1][0] * x[1] + m[2][0] * x[2],
        m[0][1] * x[0] + m[1][1] * x[1] + m[2][1] * x[2],
        m[0][2] * x[0] + m[1][2] * x[1] + m[2][2] * x[2],
    ]
}

pub fn matmul3(a: &Mat3, b: &Mat3) -> Mat3 {
    let mut out = [[0.0; 3]; 3];
    for i in 0..3 {
        for j in 0..3 {
            out[i][j] = a[i][0] * b[0][j] + a[i][1] * b[1][j] + a[i][2] * b[2][j];
        }
    }
    out
}

pub fn det3(m: &Mat3) -> f64 {
    m[0][0] * (m[1][1] * m[2][2] - m[1][2] * m[2][1])
        - m[0][1] * (m[1][0] * m[2][2] - m[1][2] * m[2][0])
        + m[0][2] * (m[1][0] * m[2][1] - m[1][1] * m[2][0])
}

/// x^T M y, the bilinear form of M.
pub fn quad_form3(m: &Mat3, x: &Vec3, y: &Vec3) -> f64 {
    dot3(x, &matvec3(m, y))
}

/// Largest absolute entry; used for overflow/underflow rescaling of running
/// products.
pub fn max_abs2(m: &Mat2) -> f64 {
    let mut v = 0.0f64;
    for row in m {
        for &e in row {
            v = v.max(e.abs());
        }
    }
    v
}

pub fn matmul2(a: &Mat2, b: &Mat2) -> Mat2 {
    [
        [
            a[0][0] * b[0][0] + a[0][1] * b[1][0],
            a[0][0] * b[0][1] + a[0][1] * b[1][1],
        ],
        [
            a[1][0] * b[0][0] + a[1][1] * b[1][0],
            a[1][0] * b[0][1] + a[1][1] * b[1][1],
        ],
    ]
}

pub fn det2(m: &Mat2) -> f64 {
    m[0][0] * m[1][1] - m[0][1] * m[1][0]
}

/// Spectral norm of a real 2x2 matrix in closed form.
///
/// With f = sum of squared entries and d = det, the singular values satisfy
/// s1^2 + s2^2 = f and s1 s2 = |d|, so s1^2 = (f + sqrt(f^2 - 4 d^2)) / 2.
/// The discriminant is clamped at zero to absorb roundoff when s1 ~ s2.
pub fn op_norm2(m: &Mat2) -> f64 {
    let s = max_abs2(m);
    if s == 0.0 {
        return 0.0;
    }
    if !s.is_finite() {
        return f64::INFINITY;
    }
    // Prescale so the squared sums below can neither overflow nor flush.
    let a = m[0][0] / s;
    let b = m[0][1] / s;
    let c = m[1][0] / s;
    let e = m[1][1] / s;
    let f = a * a + b * b + c * c + e * e;
    let d = a * e - b * c;
    let disc = (f * f - 4.0 * d * d).max(0.0);
    s * (0.5 * (f + disc.sqrt())).sqrt()
}

/// Eigenvalues of a real 2x2 matrix.
///
/// Returns `(re1, im1, re2, im2)` with the pair ordered by descending real
/// part when real; complex pairs come back as conjugates.
pub fn eigvals2(m: &Mat2) -> (f64, f64, f64, f64) {
    let tr = m[0][0] + m[1][1];
    let det = det2(m);
    let disc = tr * tr / 4.0 - det;
    if disc >= 0.0 {
        let s = disc.sqrt();
        (tr / 2.0 + s, 0.0, tr / 2.0 - s, 0.0)
    } else {
        let s = (-disc).sqrt();
        (tr / 2.0, s, tr / 2.0, -s)
    }
}

/// Projection onto the mean-zero hyperplane: P = I - (1/3) J.
pub fn project_mean_zero(x: &Vec3) -> Vec3 {
    let m = (x[0] + x[1] + x[2]) / 3.0;
    [x[0] - m, x[1] - m, x[2] - m]
}
