//! Dense motion from sparse hints, and Euler integration of motion fields.

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::field::{sample_vec2, DisplacementMap, MotionField};
use crate::io::SparseHint;
use crate::raster::{Mask, Raster};

/// Gaussian bandwidth used when none is given: a tenth of the larger side.
pub fn default_sigma(width: usize, height: usize) -> f64 {
    0.1 * width.max(height) as f64
}

/// Gaussian-weighted average of hint velocities at every fluid pixel.
///
/// Weights are normalized after subtracting the largest exponent, so a tiny
/// `sigma` degrades to nearest-hint assignment instead of `0 / 0`.
pub fn densify_hints(hints: &[SparseHint], fluid_mask: &Mask, sigma: f64) -> Result<MotionField> {
    if hints.is_empty() {
        return Err(Error::NoHints);
    }
    if !(sigma > 0.0 && sigma.is_finite()) {
        return Err(Error::InvalidConfig(format!("sigma must be positive, got {sigma}")));
    }
    let (w, h) = fluid_mask.dims();
    for hint in hints {
        hint.validate(w, h)?;
    }
    let inv_s2 = 1.0 / (sigma * sigma);
    let rows: Vec<Vec<[f64; 2]>> = (0..h)
        .into_par_iter()
        .map(|v| {
            let mut expo = vec![0.0; hints.len()];
            (0..w)
                .map(|u| {
                    if !*fluid_mask.get(u, v) {
                        return [0.0; 2];
                    }
                    let mut top = f64::NEG_INFINITY;
                    for (e, k) in expo.iter_mut().zip(hints) {
                        let du = u as f64 - k.u;
                        let dv = v as f64 - k.v;
                        *e = -(du * du + dv * dv) * inv_s2;
                        top = top.max(*e);
                    }
                    let (mut sx, mut sy, mut sw) = (0.0, 0.0, 0.0);
                    for (e, k) in expo.iter().zip(hints) {
                        let wt = (e - top).exp();
                        sx += wt * k.vx;
                        sy += wt * k.vy;
                        sw += wt;
                    }
                    [sx / sw, sy / sw]
                })
                .collect()
        })
        .collect();
    Ok(MotionField {
        data: Raster::from_vec(w, h, rows.into_iter().flatten().collect())?,
        valid: fluid_mask.clone(),
    })
}

/// Displacement after `steps` Euler steps of one frame each.
///
/// A path that leaves the raster stops where it left and is marked invalid.
pub fn integrate_euler(field: &MotionField, steps: usize) -> DisplacementMap {
    let (w, h) = field.dims();
    integrate_euler_from(field, &DisplacementMap::zeros(w, h), steps)
}

/// Continue integration from an existing displacement map.
///
/// `integrate_euler_from(f, &integrate_euler(f, a), b)` equals
/// `integrate_euler(f, a + b)` bit for bit.
pub fn integrate_euler_from(
    field: &MotionField,
    start: &DisplacementMap,
    steps: usize,
) -> DisplacementMap {
    let (w, h) = field.dims();
    let (xmax, ymax) = ((w - 1) as f64, (h - 1) as f64);
    let out: Vec<([f64; 2], bool)> = (0..w * h)
        .into_par_iter()
        .map(|i| {
            let (u, v) = ((i % w) as f64, (i / w) as f64);
            let mut d = start.data.data()[i];
            let mut ok = start.valid.data()[i];
            for _ in 0..steps {
                if !ok {
                    break;
                }
                let s = sample_vec2(&field.data, u + d[0], v + d[1]);
                let nd = [d[0] + s[0], d[1] + s[1]];
                let (x, y) = (u + nd[0], v + nd[1]);
                if !(x >= 0.0 && x <= xmax && y >= 0.0 && y <= ymax) {
                    ok = false;
                    break;
                }
                d = nd;
            }
            (d, ok)
        })
        .collect();
    let (data, valid): (Vec<_>, Vec<_>) = out.into_iter().unzip();
    DisplacementMap {
        data: Raster::from_vec(w, h, data).expect("sized"),
        valid: Raster::from_vec(w, h, valid).expect("sized"),
    }
}

/// `D_0 ..= D_n`, each continuing from the previous one.
pub fn integrate_euler_all(field: &MotionField, n: usize) -> Vec<DisplacementMap> {
    let (w, h) = field.dims();
    let mut out = Vec::with_capacity(n + 1);
    out.push(DisplacementMap::zeros(w, h));
    for i in 0..n {
        let next = integrate_euler_from(field, &out[i], 1);
        out.push(next);
    }
    out
}

/// Approximate inverse of a forward displacement map.
///
/// Each valid source scatters `-D` to its nearest target pixel, collisions
/// are averaged, and unfilled pixels are grown from filled 3x3 neighbors
/// until nothing more can be filled.
pub fn invert_displacement(d: &DisplacementMap) -> DisplacementMap {
    let (w, h) = d.dims();
    let mut sum = vec![[0.0f64; 2]; w * h];
    let mut count = vec![0u32; w * h];
    for v in 0..h {
        for u in 0..w {
            if !*d.valid.get(u, v) {
                continue;
            }
            let s = d.get(u, v);
            let tx = (u as f64 + s[0]).round();
            let ty = (v as f64 + s[1]).round();
            if tx < 0.0 || ty < 0.0 || tx > (w - 1) as f64 || ty > (h - 1) as f64 {
                continue;
            }
            let t = ty as usize * w + tx as usize;
            sum[t][0] -= s[0];
            sum[t][1] -= s[1];
            count[t] += 1;
        }
    }
    let mut data: Vec<[f64; 2]> = sum
        .iter()
        .zip(&count)
        .map(|(s, &c)| {
            if c > 0 {
                [s[0] / c as f64, s[1] / c as f64]
            } else {
                [0.0; 2]
            }
        })
        .collect();
    let mut filled: Vec<bool> = count.iter().map(|&c| c > 0).collect();
    if filled.iter().any(|&f| f) {
        loop {
            let mut updates = Vec::new();
            for v in 0..h {
                for u in 0..w {
                    if filled[v * w + u] {
                        continue;
                    }
                    let mut acc = [0.0; 2];
                    let mut n = 0;
                    for nv in v.saturating_sub(1)..(v + 2).min(h) {
                        for nu in u.saturating_sub(1)..(u + 2).min(w) {
                            let j = nv * w + nu;
                            if filled[j] {
                                acc[0] += data[j][0];
                                acc[1] += data[j][1];
                                n += 1;
                            }
                        }
                    }
                    if n > 0 {
                        updates.push((v * w + u, [acc[0] / n as f64, acc[1] / n as f64]));
                    }
                }
            }
            if updates.is_empty() {
                break;
            }
            for (i, val) in updates {
                data[i] = val;
                filled[i] = true;
            }
        }
    }
    DisplacementMap {
        data: Raster::from_vec(w, h, data).expect("sized"),
        valid: Raster::from_vec(w, h, filled).expect("sized"),
    }
}

/// Mean of `|Dinv(y) + D(y + Dinv(y))|` over pixels valid in `inverse`.
///
/// Zero when `inverse` exactly undoes `forward`.
pub fn composition_error(forward: &DisplacementMap, inverse: &DisplacementMap) -> f64 {
    let (w, h) = forward.dims();
    let mut total = 0.0;
    let mut n = 0usize;
    for v in 0..h {
        for u in 0..w {
            if !*inverse.valid.get(u, v) {
                continue;
            }
            let di = inverse.get(u, v);
            let (x, y) = (u as f64 + di[0], v as f64 + di[1]);
            let df = forward.sample(x, y);
            total += (di[0] + df[0]).hypot(di[1] + df[1]);
            n += 1;
        }
    }
    if n == 0 {
        0.0
    } else {
        total / n as f64
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn hint(u: f64, v: f64, vx: f64, vy: f64) -> SparseHint {
        SparseHint { u, v, vx, vy }
    }

    #[test]
    fn single_hint_is_constant() {
        let mask = Raster::from_fn(40, 30, |u, v| (u * v) % 3 != 1);
        let f = densify_hints(&[hint(7.0, 3.0, 3.0, 0.0)], &mask, 4.0).unwrap();
        for v in 0..30 {
            for u in 0..40 {
                let want = if *mask.get(u, v) { [3.0, 0.0] } else { [0.0, 0.0] };
                assert_eq!(f.get(u, v), want);
            }
        }
        assert_eq!(f.valid, mask);
    }

    #[test]
    fn equidistant_hints_average() {
        let mask = Raster::filled(21, 21, true);
        let hs = [hint(5.0, 10.0, 2.0, 0.0), hint(15.0, 10.0, 0.0, 2.0)];
        let f = densify_hints(&hs, &mask, 3.0).unwrap();
        let p = f.get(10, 4);
        assert!((p[0] - 1.0).abs() < 1e-12 && (p[1] - 1.0).abs() < 1e-12);
    }

    #[test]
    fn no_hints_is_error() {
        let mask = Raster::filled(4, 4, true);
        assert!(matches!(densify_hints(&[], &mask, 1.0), Err(Error::NoHints)));
    }

    #[test]
    fn matches_double_loop_oracle() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let mask = Raster::from_fn(64, 64, |u, v| (u as i32 - 30).pow(2) + (v as i32 - 34).pow(2) < 900);
        let hs: Vec<_> = (0..5)
            .map(|_| {
                hint(
                    rng.gen_range(0.0..63.0),
                    rng.gen_range(0.0..63.0),
                    rng.gen_range(-4.0..4.0),
                    rng.gen_range(-4.0..4.0),
                )
            })
            .collect();
        let sigma = 9.0;
        let f = densify_hints(&hs, &mask, sigma).unwrap();
        for j in 0..64 {
            for i in 0..64 {
                let mut num = [0.0, 0.0];
                let mut den = 0.0;
                for k in &hs {
                    let d2 = (i as f64 - k.u).powi(2) + (j as f64 - k.v).powi(2);
                    let wt = (-d2 / (sigma * sigma)).exp();
                    num[0] += k.vx * wt;
                    num[1] += k.vy * wt;
                    den += wt;
                }
                let want = if *mask.get(i, j) { [num[0] / den, num[1] / den] } else { [0.0; 2] };
                let got = f.get(i, j);
                assert!((got[0] - want[0]).abs() <= 1e-7 && (got[1] - want[1]).abs() <= 1e-7);
            }
        }
    }

    #[test]
    fn small_sigma_recovers_hint_at_its_pixel() {
        let mask = Raster::filled(32, 32, true);
        let hs = [hint(4.0, 4.0, 1.5, -2.0), hint(25.0, 20.0, -3.0, 0.5)];
        let f = densify_hints(&hs, &mask, 0.5).unwrap();
        for k in &hs {
            let p = f.get(k.u as usize, k.v as usize);
            assert!((p[0] - k.vx).abs() < 1e-9 && (p[1] - k.vy).abs() < 1e-9);
        }
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(16))]
        #[test]
        fn densify_is_permutation_invariant(
            raw in prop::collection::vec((0.0f64..15.0, 0.0f64..15.0, -3.0f64..3.0, -3.0f64..3.0), 2..6),
            rot in 0usize..6,
        ) {
            let mask = Raster::filled(16, 16, true);
            let hs: Vec<_> = raw.iter().map(|&(u, v, a, b)| hint(u, v, a, b)).collect();
            let mut perm = hs.clone();
            perm.rotate_left(rot % hs.len());
            perm.reverse();
            let a = densify_hints(&hs, &mask, 4.0).unwrap();
            let b = densify_hints(&perm, &mask, 4.0).unwrap();
            for (p, q) in a.data.data().iter().zip(b.data.data()) {
                prop_assert!((p[0] - q[0]).abs() < 1e-12 && (p[1] - q[1]).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn zero_steps_is_identity() {
        let f = MotionField::constant(8, 8, [1.0, 2.0]);
        let d = integrate_euler(&f, 0);
        assert!(d.data.data().iter().all(|p| *p == [0.0, 0.0]));
        assert!(d.valid.data().iter().all(|&b| b));
    }

    #[test]
    fn constant_field_translates() {
        let f = MotionField::constant(20, 10, [1.0, 0.0]);
        let d = integrate_euler(&f, 5);
        for v in 0..10 {
            for u in 0..15 {
                assert_eq!(d.get(u, v), [5.0, 0.0]);
                assert!(*d.valid.get(u, v));
            }
            for u in 15..20 {
                assert!(!*d.valid.get(u, v));
            }
        }
    }

    #[test]
    fn rotation_matches_analytic_circle() {
        let n = 128;
        let c = 63.5;
        let omega = 0.02;
        let f = MotionField::from_fn(n, n, |u, v| {
            [-omega * (v as f64 - c), omega * (u as f64 - c)]
        });
        let steps = 8;
        let d = integrate_euler(&f, steps);
        let angle = omega * steps as f64;
        for v in 0..n {
            for u in 0..n {
                let (x, y) = (u as f64 - c, v as f64 - c);
                if x.hypot(y) >= n as f64 / 4.0 {
                    continue;
                }
                let ex = c + x * angle.cos() - y * angle.sin();
                let ey = c + x * angle.sin() + y * angle.cos();
                let p = d.get(u, v);
                let err = (u as f64 + p[0] - ex).hypot(v as f64 + p[1] - ey);
                assert!(err < 0.5, "({u},{v}) err {err}");
            }
        }
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(12))]
        #[test]
        fn stepping_is_associative(seed in 0u64..1000, a in 0usize..6, b in 0usize..6) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let f = MotionField::from_fn(12, 9, |_, _| [rng.gen_range(-1.5..1.5), rng.gen_range(-1.5..1.5)]);
            let whole = integrate_euler(&f, a + b);
            let split = integrate_euler_from(&f, &integrate_euler(&f, a), b);
            prop_assert_eq!(whole, split);
        }
    }

    #[test]
    fn all_matches_individual() {
        let f = MotionField::from_fn(10, 10, |u, v| [0.1 * v as f64, -0.05 * u as f64]);
        let all = integrate_euler_all(&f, 6);
        for (i, d) in all.iter().enumerate() {
            assert_eq!(*d, integrate_euler(&f, i));
        }
    }

    #[test]
    fn inverse_of_zero_is_zero() {
        let inv = invert_displacement(&DisplacementMap::zeros(6, 5));
        assert!(inv.data.data().iter().all(|p| *p == [0.0, 0.0]));
        assert!(inv.valid.data().iter().all(|&b| b));
    }

    #[test]
    fn inverse_of_translation() {
        let f = MotionField::constant(30, 8, [1.0, 0.0]);
        let d = integrate_euler(&f, 5);
        let inv = invert_displacement(&d);
        for v in 0..8 {
            for u in 5..30 {
                assert_eq!(inv.get(u, v), [-5.0, 0.0]);
            }
        }
    }

    #[test]
    fn smooth_field_self_composition() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let (w, h) = (64, 48);
        let modes: Vec<[f64; 4]> = (0..3)
            .map(|_| {
                [
                    rng.gen_range(0.02..0.12),
                    rng.gen_range(0.02..0.12),
                    rng.gen_range(0.0..6.3),
                    rng.gen_range(0.0..6.3),
                ]
            })
            .collect();
        let amp = 0.7;
        let d = DisplacementMap {
            data: Raster::from_fn(w, h, |u, v| {
                let (x, y) = (u as f64, v as f64);
                let mut p = [0.0; 2];
                for m in &modes {
                    p[0] += amp * (m[0] * x + m[2]).sin() * (m[1] * y).cos();
                    p[1] += amp * (m[1] * y + m[3]).cos() * (m[0] * x).sin();
                }
                p
            }),
            valid: Raster::filled(w, h, true),
        };
        assert!(d.data.data().iter().all(|p| p[0].hypot(p[1]) <= 3.0));
        let inv = invert_displacement(&d);
        let err = composition_error(&d, &inv);
        assert!(err <= 0.75, "mean composition error {err}");
    }
}
