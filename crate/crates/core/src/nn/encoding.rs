//! Sinusoidal encoding of unit view directions.

use crate::error::{Error, Result};
use crate::geom::Vec3;

pub const UNIT_TOLERANCE: f64 = 1e-6;

/// `(sin(pi x), cos(pi x))` with exact zeros and ones at integer and
/// half-integer arguments.
pub fn sin_cos_pi(x: f64) -> (f64, f64) {
    // Reduce to r in [-1, 1], then to a quarter turn around 0 or +-1/2.
    let r = x - 2.0 * (x * 0.5).round();
    let q = (2.0 * r).round();
    let t = r - 0.5 * q;
    let (s, c) = (std::f64::consts::PI * t).sin_cos();
    match q as i64 {
        0 => (s, c),
        1 => (c, -s),
        -1 => (-c, s),
        _ => (-s, -c),
    }
}

/// Writes the `6L` encoding of `d` into `out`: for each component in x, y,
/// z order, `(sin, cos)` of `2^l pi d_c` for `l = 0..L`.
pub fn encode_into(d: &[f64; 3], l: usize, out: &mut [f64]) {
    for (c, &v) in d.iter().enumerate() {
        let (mut s, mut co) = sin_cos_pi(v);
        let base = c * 2 * l;
        for f in 0..l {
            out[base + 2 * f] = s;
            out[base + 2 * f + 1] = co;
            let s2 = 2.0 * s * co;
            co = (co - s) * (co + s);
            s = s2;
        }
    }
}

pub fn encode_direction(d: &Vec3, l: usize) -> Result<Vec<f64>> {
    if l == 0 {
        return Err(Error::InvalidInput("at least one frequency is required".into()));
    }
    let n = d.norm();
    if !n.is_finite() || (n - 1.0).abs() > UNIT_TOLERANCE {
        return Err(Error::InvalidInput(format!("direction has norm {n}, expected 1")));
    }
    let mut out = vec![0.0; 6 * l];
    encode_into(&[d.x, d.y, d.z], l, &mut out);
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn exact_axis_encoding() {
        let e = encode_direction(&Vec3::new(1.0, 0.0, 0.0), 1).unwrap();
        assert_eq!(e, vec![0.0, -1.0, 0.0, 1.0, 0.0, 1.0]);
        for l in 1..6 {
            assert_eq!(encode_direction(&Vec3::new(0.0, 0.6, 0.8), l).unwrap().len(), 6 * l);
        }
    }

    #[test]
    fn matches_scalar_reference() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for _ in 0..500 {
            let d = Vec3::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)).normalize();
            let e = encode_direction(&d, 4).unwrap();
            let mut k = 0;
            for c in 0..3 {
                for f in 0..4 {
                    let arg = (1u32 << f) as f64 * std::f64::consts::PI * d[c];
                    assert!((e[k] - arg.sin()).abs() < 1e-12);
                    assert!((e[k + 1] - arg.cos()).abs() < 1e-12);
                    assert!((e[k] * e[k] + e[k + 1] * e[k + 1] - 1.0).abs() < 1e-6);
                    k += 2;
                }
            }
        }
    }

    #[test]
    fn sin_cos_pi_quadrants() {
        for i in -40..=40 {
            let x = i as f64 * 0.137;
            let (s, c) = sin_cos_pi(x);
            let (rs, rc) = (std::f64::consts::PI * x).sin_cos();
            assert!((s - rs).abs() < 1e-13 && (c - rc).abs() < 1e-13, "{x}");
        }
        assert_eq!(sin_cos_pi(0.5), (1.0, 0.0));
        assert_eq!(sin_cos_pi(-1.0).0.abs(), 0.0);
    }

    #[test]
    fn rejects_bad_input() {
        assert!(encode_direction(&Vec3::new(1.0, 1.0, 0.0), 2).is_err());
        assert!(encode_direction(&Vec3::new(1.0, 0.0, 0.0), 0).is_err());
        assert!(encode_direction(&Vec3::new(f64::NAN, 0.0, 0.0), 2).is_err());
    }
}
