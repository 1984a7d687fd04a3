use crate::numerics::Rng;

/// Row-major 3×3 matrix.
pub type Mat3 = [[f64; 3]; 3];

pub const IDENTITY: Mat3 = [[1.0, 0.0, 0.0], [0.0, 1.0, 0.0], [0.0, 0.0, 1.0]];

/// Uniformly distributed rotation from a normalized Gaussian quaternion.
pub fn random_rotation(rng: &mut Rng) -> Mat3 {
    let mut q = [0.0; 4];
    loop {
        for v in &mut q {
            *v = rng.normal();
        }
        let n = q.iter().map(|v| v * v).sum::<f64>().sqrt();
        if n > 1e-8 {
            q.iter_mut().for_each(|v| *v /= n);
            break;
        }
    }
    let [w, x, y, z] = q;
    [
        [1.0 - 2.0 * (y * y + z * z), 2.0 * (x * y - w * z), 2.0 * (x * z + w * y)],
        [2.0 * (x * y + w * z), 1.0 - 2.0 * (x * x + z * z), 2.0 * (y * z - w * x)],
        [2.0 * (x * z - w * y), 2.0 * (y * z + w * x), 1.0 - 2.0 * (x * x + y * y)],
    ]
}

pub fn rotate(r: &Mat3, p: &[f64; 3]) -> [f64; 3] {
    [
        r[0][0] * p[0] + r[0][1] * p[1] + r[0][2] * p[2],
        r[1][0] * p[0] + r[1][1] * p[1] + r[1][2] * p[2],
        r[2][0] * p[0] + r[2][1] * p[1] + r[2][2] * p[2],
    ]
}

/// Applies `p -> R p + t` to every point.
pub fn transform(r: &Mat3, t: [f64; 3], points: &[[f64; 3]]) -> Vec<[f64; 3]> {
    points
        .iter()
        .map(|p| {
            let q = rotate(r, p);
            [q[0] + t[0], q[1] + t[1], q[2] + t[2]]
        })
        .collect()
}
