use nalgebra::{Matrix3, Vector3};

use crate::error::{Error, Result};

/// Optimal rotation `R` and translation `t` minimizing `Σ |R a_i + t − b_i|²`.
pub fn kabsch(a: &[[f64; 3]], b: &[[f64; 3]]) -> Result<(Matrix3<f64>, Vector3<f64>)> {
    if a.len() != b.len() || a.is_empty() {
        return Err(Error::SizeMismatch(format!("cannot align {} points onto {}", a.len(), b.len())));
    }
    let ca = mean(a);
    let cb = mean(b);
    let mut h = Matrix3::zeros();
    for (p, q) in a.iter().zip(b) {
        h += (Vector3::from(*p) - ca) * (Vector3::from(*q) - cb).transpose();
    }
    let svd = h.svd(true, true);
    let (u, v_t) = (svd.u.expect("u requested"), svd.v_t.expect("v_t requested"));
    let d = (v_t.transpose() * u.transpose()).determinant().signum();
    let fix = Matrix3::from_diagonal(&Vector3::new(1.0, 1.0, d));
    let r = v_t.transpose() * fix * u.transpose();
    Ok((r, cb - r * ca))
}

/// RMSD after optimal rigid superposition of `a` onto `b`.
pub fn kabsch_rmsd(a: &[[f64; 3]], b: &[[f64; 3]]) -> Result<f64> {
    let (r, t) = kabsch(a, b)?;
    let ss: f64 = a
        .iter()
        .zip(b)
        .map(|(p, q)| (r * Vector3::from(*p) + t - Vector3::from(*q)).norm_squared())
        .sum();
    Ok((ss / a.len() as f64).sqrt())
}

fn mean(p: &[[f64; 3]]) -> Vector3<f64> {
    p.iter().fold(Vector3::zeros(), |acc, x| acc + Vector3::from(*x)) / p.len() as f64
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numerics::geom::{random_rotation, rotate};
    use crate::numerics::Rng;

    #[test]
    fn recovers_rigid_motion() {
        let mut rng = Rng::new(4);
        let a: Vec<[f64; 3]> = (0..7).map(|_| [rng.normal(), rng.normal(), rng.normal()]).collect();
        let r = random_rotation(&mut rng);
        let b: Vec<[f64; 3]> = a.iter().map(|p| {
            let q = rotate(&r, p);
            [q[0] + 1.0, q[1] - 2.0, q[2] + 0.5]
        }).collect();
        assert!(kabsch_rmsd(&a, &b).unwrap() < 1e-10);
    }

    #[test]
    fn reflection_is_not_a_rotation() {
        let a = [[1.0, 0.0, 0.0], [0.0, 1.0, 0.0], [0.0, 0.0, 1.0], [1.0, 1.0, 1.0]];
        let b: Vec<[f64; 3]> = a.iter().map(|p| [-p[0], p[1], p[2]]).collect();
        let (r, _) = kabsch(&a, &b).unwrap();
        assert!((r.determinant() - 1.0).abs() < 1e-12);
        assert!(kabsch_rmsd(&a, &b).unwrap() > 0.1);
    }
}
