//! Correlation-based motion estimation between consecutive feature frames.
//!
//! For each cell of frame `t` the estimator scores every integer
//! displacement `d` within a square search window by correlating the two
//! frames at the half-offset positions `p - d/2` (frame `t`) and `p + d/2`
//! (frame `t+1`), summed over channels with bilinear sampling. A softmax
//! over scores turns them into weights and the field value is the weighted
//! mean displacement, accumulated in antisymmetric pairs
//! `(w(d) - w(-d)) * d`.
//!
//! Two consequences of this construction carry the invariants downstream
//! code relies on:
//!
//! * **Static exactness.** If the two frames are identical, the score map
//!   is symmetric in `d` (the two factors merely swap), every pair cancels
//!   exactly, and the field is all zeros — not merely small.
//! * **Mirror antisymmetry.** The backward correlation of frame `t+1`
//!   against frame `t` is the forward one with `d` negated, so the backward
//!   field at `t+1` equals the negated forward field at `t`, value for
//!   value. It is computed that way rather than re-estimated.
//!
//! Fields use the convention `forward[T-1] = 0` (no successor frame) and
//! `backward[0] = 0` (no predecessor).

use ndarray::{s, Array4};

use super::FeatureMap;

/// Per-cell displacement fields, each `[time, h, w, 2]` with `(dy, dx)` in
/// the last axis. Values are bounded by the search radius.
#[derive(Debug, Clone)]
pub struct MotionFields {
    pub forward: Array4<f64>,
    pub backward: Array4<f64>,
}

impl MotionFields {
    pub fn t_len(&self) -> usize {
        self.forward.shape()[0]
    }

    pub fn height(&self) -> usize {
        self.forward.shape()[1]
    }

    pub fn width(&self) -> usize {
        self.forward.shape()[2]
    }
}

/// Bilinear interpolation footprint at a (clamped) continuous position.
#[derive(Debug, Clone, Copy)]
pub(crate) struct Taps {
    pub y0: usize,
    pub y1: usize,
    pub x0: usize,
    pub x1: usize,
    pub w00: f64,
    pub w01: f64,
    pub w10: f64,
    pub w11: f64,
}

/// Corner indices and weights for sampling at `(y, x)` on an `h x w` grid.
/// Positions outside the grid clamp to the border.
pub(crate) fn bilinear_taps(h: usize, w: usize, y: f64, x: f64) -> Taps {
    let yc = y.clamp(0.0, (h - 1) as f64);
    let xc = x.clamp(0.0, (w - 1) as f64);
    let y0 = yc.floor() as usize;
    let x0 = xc.floor() as usize;
    let y1 = (y0 + 1).min(h - 1);
    let x1 = (x0 + 1).min(w - 1);
    let fy = yc - y0 as f64;
    let fx = xc - x0 as f64;
    Taps {
        y0,
        y1,
        x0,
        x1,
        w00: (1.0 - fy) * (1.0 - fx),
        w01: (1.0 - fy) * fx,
        w10: fy * (1.0 - fx),
        w11: fy * fx,
    }
}

/// Tap with indices pre-flattened to `y * w + x` offsets within a frame.
#[derive(Debug, Clone, Copy)]
struct FlatTaps {
    o00: usize,
    o01: usize,
    o10: usize,
    o11: usize,
    w00: f64,
    w01: f64,
    w10: f64,
    w11: f64,
}

fn flatten(t: Taps, w: usize) -> FlatTaps {
    FlatTaps {
        o00: t.y0 * w + t.x0,
        o01: t.y0 * w + t.x1,
        o10: t.y1 * w + t.x0,
        o11: t.y1 * w + t.x1,
        w00: t.w00,
        w01: t.w01,
        w10: t.w10,
        w11: t.w11,
    }
}

#[inline]
fn sample(frame: &[f64], t: FlatTaps) -> f64 {
    t.w00 * frame[t.o00] + t.w01 * frame[t.o01] + t.w10 * frame[t.o10] + t.w11 * frame[t.o11]
}

/// Estimate forward and backward fields for one feature map.
pub fn estimate_motion_fields(map: &FeatureMap, radius: usize) -> MotionFields {
    let (c, t, h, w) = (map.shape()[0], map.shape()[1], map.shape()[2], map.shape()[3]);
    assert!(radius >= 1 && radius < h && radius < w, "search radius must fit the grid");
    let r = radius as i64;
    let side = (2 * radius + 1) as i64;
    let count = (side * side) as usize;
    let hw = h * w;

    // Tap positions depend only on (y, x, d); build them once per call.
    // Index: (y * w + x) * count + displacement index.
    let mut taps_a = Vec::with_capacity(hw * count);
    let mut taps_b = Vec::with_capacity(hw * count);
    for y in 0..h {
        for x in 0..w {
            for dy in -r..=r {
                for dx in -r..=r {
                    let (hy, hx) = (dy as f64 / 2.0, dx as f64 / 2.0);
                    taps_a.push(flatten(bilinear_taps(h, w, y as f64 - hy, x as f64 - hx), w));
                    taps_b.push(flatten(bilinear_taps(h, w, y as f64 + hy, x as f64 + hx), w));
                }
            }
        }
    }

    let flat = map.as_slice().expect("feature map is contiguous");
    let mut forward = Array4::<f64>::zeros((t, h, w, 2));
    let mut backward = Array4::<f64>::zeros((t, h, w, 2));
    let mut scores = vec![0.0f64; count];

    for ti in 0..t.saturating_sub(1) {
        for cell in 0..hw {
            let base = cell * count;
            for (di, s) in scores.iter_mut().enumerate() {
                let ta = taps_a[base + di];
                let tb = taps_b[base + di];
                let mut score = 0.0;
                for ci in 0..c {
                    // Frame (ci, ti) occupies one contiguous h*w block.
                    let fa = &flat[(ci * t + ti) * hw..(ci * t + ti) * hw + hw];
                    let fb = &flat[(ci * t + ti + 1) * hw..(ci * t + ti + 1) * hw + hw];
                    score += sample(fa, ta) * sample(fb, tb);
                }
                *s = score;
            }

            let max = scores.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            let mut denom = 0.0;
            for s in scores.iter_mut() {
                *s = (*s - max).exp();
                denom += *s;
            }

            // Walk the half-space of displacements and accumulate each pair
            // as (w(d) - w(-d)) * d: exactly zero when the score map is
            // symmetric.
            let mut disp = [0.0f64; 2];
            for dy in -r..=r {
                for dx in -r..=r {
                    if dy < 0 || (dy == 0 && dx <= 0) {
                        continue;
                    }
                    let pos = scores[((dy + r) * side + (dx + r)) as usize];
                    let neg = scores[((r - dy) * side + (r - dx)) as usize];
                    let diff = (pos - neg) / denom;
                    disp[0] += diff * dy as f64;
                    disp[1] += diff * dx as f64;
                }
            }

            let (y, x) = (cell / w, cell % w);
            forward[[ti, y, x, 0]] = disp[0];
            forward[[ti, y, x, 1]] = disp[1];
            backward[[ti + 1, y, x, 0]] = -disp[0];
            backward[[ti + 1, y, x, 1]] = -disp[1];
        }
    }

    MotionFields { forward, backward }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::seeds;
    use approx::assert_abs_diff_eq;
    use ndarray::Array4 as A4;
    use rand::Rng;

    fn random_map(c: usize, t: usize, h: usize, w: usize, seed: u64) -> FeatureMap {
        let mut rng = seeds::rng(seed, "motion-test", 0);
        A4::from_shape_fn((c, t, h, w), |_| rng.gen::<f64>())
    }

    #[test]
    fn static_clip_gives_exact_zero_fields() {
        // Every frame identical: cancellation must be exact, not approximate.
        let frame = random_map(6, 1, 5, 5, 3);
        let mut map = A4::zeros((6, 4, 5, 5));
        for t in 0..4 {
            map.slice_mut(s![.., t, .., ..]).assign(&frame.slice(s![.., 0, .., ..]));
        }
        let fields = estimate_motion_fields(&map, 2);
        assert!(fields.forward.iter().all(|&v| v == 0.0));
        assert!(fields.backward.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn boundary_frames_have_zero_fields() {
        let map = random_map(4, 5, 6, 6, 7);
        let fields = estimate_motion_fields(&map, 2);
        assert!(fields.forward.slice(s![4, .., .., ..]).iter().all(|&v| v == 0.0));
        assert!(fields.backward.slice(s![0, .., .., ..]).iter().all(|&v| v == 0.0));
    }

    #[test]
    fn displacements_stay_within_radius() {
        let map = random_map(4, 6, 6, 6, 11);
        for radius in [1usize, 2] {
            let fields = estimate_motion_fields(&map, radius);
            for v in fields.forward.iter().chain(fields.backward.iter()) {
                assert!(v.abs() <= radius as f64 + 1e-12);
            }
        }
    }

    #[test]
    fn backward_equals_independent_reestimation() {
        // The shipped backward field is the negated forward field; check it
        // against a from-scratch correlation of (t, t-1) pairs.
        let map = random_map(5, 4, 5, 5, 13);
        let radius = 2usize;
        let fields = estimate_motion_fields(&map, radius);

        let (c, t, h, w) = (5usize, 4usize, 5usize, 5usize);
        let r = radius as i64;
        for ti in 1..t {
            let a = map.slice(s![.., ti, .., ..]);
            let b = map.slice(s![.., ti - 1, .., ..]);
            for y in 0..h {
                for x in 0..w {
                    let mut scores = Vec::new();
                    for dy in -r..=r {
                        for dx in -r..=r {
                            let ta = bilinear_taps(h, w, y as f64 - dy as f64 / 2.0, x as f64 - dx as f64 / 2.0);
                            let tb = bilinear_taps(h, w, y as f64 + dy as f64 / 2.0, x as f64 + dx as f64 / 2.0);
                            let mut score = 0.0;
                            for ci in 0..c {
                                let va = ta.w00 * a[[ci, ta.y0, ta.x0]]
                                    + ta.w01 * a[[ci, ta.y0, ta.x1]]
                                    + ta.w10 * a[[ci, ta.y1, ta.x0]]
                                    + ta.w11 * a[[ci, ta.y1, ta.x1]];
                                let vb = tb.w00 * b[[ci, tb.y0, tb.x0]]
                                    + tb.w01 * b[[ci, tb.y0, tb.x1]]
                                    + tb.w10 * b[[ci, tb.y1, tb.x0]]
                                    + tb.w11 * b[[ci, tb.y1, tb.x1]];
                                score += va * vb;
                            }
                            scores.push(score);
                        }
                    }
                    let max = scores.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
                    let exps: Vec<f64> = scores.iter().map(|s| (s - max).exp()).collect();
                    let denom: f64 = exps.iter().sum();
                    let side = 2 * r + 1;
                    let (mut ey, mut ex) = (0.0, 0.0);
                    for dy in -r..=r {
                        for dx in -r..=r {
                            if dy < 0 || (dy == 0 && dx <= 0) {
                                continue;
                            }
                            let pos = exps[((dy + r) * side + (dx + r)) as usize];
                            let neg = exps[((r - dy) * side + (r - dx)) as usize];
                            ey += (pos - neg) / denom * dy as f64;
                            ex += (pos - neg) / denom * dx as f64;
                        }
                    }
                    assert_abs_diff_eq!(fields.backward[[ti, y, x, 0]], ey, epsilon = 1e-12);
                    assert_abs_diff_eq!(fields.backward[[ti, y, x, 1]], ex, epsilon = 1e-12);
                }
            }
        }
    }

    #[test]
    fn rightward_blob_yields_positive_dx() {
        // A smooth blob moving one cell right per frame.
        let (t, h, w) = (4usize, 8usize, 8usize);
        let mut map = A4::<f64>::zeros((1, t, h, w));
        for ti in 0..t {
            let (cy, cx) = (4.0f64, 2.0 + ti as f64);
            for y in 0..h {
                for x in 0..w {
                    let d2 = (y as f64 - cy).powi(2) + (x as f64 - cx).powi(2);
                    map[[0, ti, y, x]] = 5.0 * (-d2 / 2.0).exp();
                }
            }
        }
        let fields = estimate_motion_fields(&map, 2);
        for ti in 0..t - 1 {
            let cx = 2 + ti;
            let dx = fields.forward[[ti, 4, cx, 1]];
            let dy = fields.forward[[ti, 4, cx, 0]];
            assert!(dx > 0.5, "frame {ti}: expected strong rightward flow, got {dx}");
            assert!(dy.abs() < 0.1, "frame {ti}: expected no vertical flow, got {dy}");
        }
    }
}
