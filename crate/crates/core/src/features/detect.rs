//! Corner detection: FAST-style segment test, grid bucketing, sub-pixel
//! refinement and an oriented 256-bit binary descriptor.

use std::sync::OnceLock;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::{Descriptor, Keypoint};
use crate::camera::ImageGray8;

/// Detector configuration.
#[derive(Debug, Clone)]
pub struct DetectorParams {
    /// Keep at most this many keypoints, balanced over an 8x8 grid.
    pub max_keypoints: usize,
    /// FAST intensity threshold.
    pub fast_threshold: u8,
    /// Gradient-based sub-pixel corner refinement.
    pub refine_subpixel: bool,
}

impl Default for DetectorParams {
    fn default() -> Self {
        Self {
            max_keypoints: 500,
            fast_threshold: 20,
            refine_subpixel: true,
        }
    }
}

/// Bresenham circle of radius 3 used by the segment test.
const CIRCLE: [(i32, i32); 16] = [
    (0, -3),
    (1, -3),
    (2, -2),
    (3, -1),
    (3, 0),
    (3, 1),
    (2, 2),
    (1, 3),
    (0, 3),
    (-1, 3),
    (-2, 2),
    (-3, 1),
    (-3, 0),
    (-3, -1),
    (-2, -2),
    (-1, -3),
];

/// Patch margin required for orientation and descriptor sampling.
const PATCH_MARGIN: i32 = 17;

/// Detects corners (FAST 9-of-16 contiguous segment test), suppresses
/// non-maxima, balances the survivors over an 8x8 grid and attaches
/// oriented binary descriptors. Keypoints come back sorted by
/// non-increasing response; an empty result is fine (uniform images).
pub fn detect_features(img: &ImageGray8, params: &DetectorParams) -> Vec<Keypoint> {
    let (w, h) = (img.width as i32, img.height as i32);
    if w <= 2 * PATCH_MARGIN || h <= 2 * PATCH_MARGIN || params.max_keypoints == 0 {
        return Vec::new();
    }
    let t = params.fast_threshold as i32;

    // Segment test + score over the interior where the descriptor patch
    // fits.
    let mut scores = vec![0f32; (w * h) as usize];
    let mut candidates: Vec<(i32, i32)> = Vec::new();
    for y in PATCH_MARGIN..h - PATCH_MARGIN {
        for x in PATCH_MARGIN..w - PATCH_MARGIN {
            if let Some(score) = fast_score(img, x, y, t) {
                scores[(y * w + x) as usize] = score;
                candidates.push((x, y));
            }
        }
    }

    // 3x3 non-maximum suppression on the score map.
    let mut peaks: Vec<(i32, i32, f32)> = Vec::new();
    for &(x, y) in &candidates {
        let s = scores[(y * w + x) as usize];
        let mut is_max = true;
        'nms: for dy in -1..=1 {
            for dx in -1..=1 {
                if dx == 0 && dy == 0 {
                    continue;
                }
                let n = scores[((y + dy) * w + x + dx) as usize];
                if n > s || (n == s && (dy < 0 || (dy == 0 && dx < 0))) {
                    is_max = false;
                    break 'nms;
                }
            }
        }
        if is_max {
            peaks.push((x, y, s));
        }
    }

    // Bucket into an 8x8 grid and take the strongest per cell in rounds,
    // so texture concentrated in a few cells cannot crowd out the rest.
    let mut cells: Vec<Vec<(i32, i32, f32)>> = vec![Vec::new(); 64];
    let (cw, ch) = ((w + 7) / 8, (h + 7) / 8);
    for p in peaks {
        let cell = ((p.1 / ch) * 8 + p.0 / cw) as usize;
        cells[cell].push(p);
    }
    for cell in &mut cells {
        cell.sort_by(|a, b| b.2.total_cmp(&a.2));
    }
    let mut selected: Vec<(i32, i32, f32)> = Vec::new();
    let mut round = 0;
    while selected.len() < params.max_keypoints {
        let mut any = false;
        for cell in &cells {
            if let Some(&p) = cell.get(round) {
                selected.push(p);
                any = true;
                if selected.len() == params.max_keypoints {
                    break;
                }
            }
        }
        if !any {
            break;
        }
        round += 1;
    }

    let smoothed = BoxSmoothed::new(img);
    let mut out: Vec<Keypoint> = selected
        .into_iter()
        .map(|(x, y, s)| {
            let (mut u, mut v) = (x as f64, y as f64);
            if params.refine_subpixel {
                (u, v) = refine_corner(img, u, v);
            }
            let angle = orientation(img, x, y);
            let descriptor = describe(&smoothed, x, y, angle);
            Keypoint {
                u,
                v,
                response: s as f64,
                descriptor,
            }
        })
        .collect();
    out.sort_by(|a, b| b.response.total_cmp(&a.response));
    out
}

/// Segment test at one pixel. Returns the corner score if at least 9
/// contiguous circle pixels are all brighter than `p + t` or all darker
/// than `p - t`.
fn fast_score(img: &ImageGray8, x: i32, y: i32, t: i32) -> Option<f32> {
    let w = img.width as i32;
    let p = img.pixels[(y * w + x) as usize] as i32;
    let mut diffs = [0i32; 16];
    for (i, (dx, dy)) in CIRCLE.iter().enumerate() {
        diffs[i] = img.pixels[((y + dy) * w + x + dx) as usize] as i32 - p;
    }

    let run = |pred: &dyn Fn(i32) -> bool| -> bool {
        let mut best = 0;
        let mut current = 0;
        // Doubled walk covers wrap-around runs.
        for k in 0..32 {
            if pred(diffs[k % 16]) {
                current += 1;
                best = best.max(current);
                if best >= 9 {
                    return true;
                }
            } else {
                current = 0;
            }
            if k >= 16 && current == 0 {
                break;
            }
        }
        false
    };

    let brighter = run(&|d| d > t);
    let darker = run(&|d| d < -t);
    if !brighter && !darker {
        return None;
    }
    let score: i32 = if brighter {
        diffs.iter().filter(|&&d| d > t).map(|d| d - t).sum()
    } else {
        diffs.iter().filter(|&&d| d < -t).map(|d| -d - t).sum()
    };
    Some(score as f32)
}

/// Moves a corner onto the gradient-orthogonality point (the saddle/corner
/// where every neighborhood gradient is perpendicular to the offset from
/// the center). A handful of fixed-point iterations over a 5x5 window;
/// diverging refinements fall back to the integer position.
fn refine_corner(img: &ImageGray8, u0: f64, v0: f64) -> (f64, f64) {
    let (mut u, mut v) = (u0, v0);
    for _ in 0..10 {
        let mut a = [0.0f64; 4]; // 2x2 normal matrix
        let mut b = [0.0f64; 2];
        for dy in -2..=2 {
            for dx in -2..=2 {
                let qx = u + dx as f64;
                let qy = v + dy as f64;
                let (gx, gy) = bilinear_gradient(img, qx, qy);
                a[0] += gx * gx;
                a[1] += gx * gy;
                a[2] += gx * gy;
                a[3] += gy * gy;
                b[0] += gx * gx * qx + gx * gy * qy;
                b[1] += gx * gy * qx + gy * gy * qy;
            }
        }
        let det = a[0] * a[3] - a[1] * a[2];
        if det.abs() < 1e-9 {
            break;
        }
        let nu = (a[3] * b[0] - a[1] * b[1]) / det;
        let nv = (-a[2] * b[0] + a[0] * b[1]) / det;
        let step = ((nu - u).powi(2) + (nv - v).powi(2)).sqrt();
        u = nu;
        v = nv;
        if step < 1e-3 {
            break;
        }
    }
    let moved = ((u - u0).powi(2) + (v - v0).powi(2)).sqrt();
    if moved > 2.0 || !u.is_finite() || !v.is_finite() {
        (u0, v0)
    } else {
        (u, v)
    }
}

fn bilinear_gradient(img: &ImageGray8, x: f64, y: f64) -> (f64, f64) {
    let sample = |x: f64, y: f64| -> f64 {
        let w = img.width as i32;
        let h = img.height as i32;
        let x0 = (x.floor() as i32).clamp(0, w - 2);
        let y0 = (y.floor() as i32).clamp(0, h - 2);
        let fx = (x - x0 as f64).clamp(0.0, 1.0);
        let fy = (y - y0 as f64).clamp(0.0, 1.0);
        let at = |xx: i32, yy: i32| img.pixels[(yy * w + xx) as usize] as f64;
        at(x0, y0) * (1.0 - fx) * (1.0 - fy)
            + at(x0 + 1, y0) * fx * (1.0 - fy)
            + at(x0, y0 + 1) * (1.0 - fx) * fy
            + at(x0 + 1, y0 + 1) * fx * fy
    };
    (
        (sample(x + 1.0, y) - sample(x - 1.0, y)) / 2.0,
        (sample(x, y + 1.0) - sample(x, y - 1.0)) / 2.0,
    )
}

/// Intensity-centroid orientation over a radius-15 disc.
fn orientation(img: &ImageGray8, x: i32, y: i32) -> f64 {
    let w = img.width as i32;
    let mut m01 = 0i64;
    let mut m10 = 0i64;
    for dy in -15i32..=15 {
        for dx in -15i32..=15 {
            if dx * dx + dy * dy > 225 {
                continue;
            }
            let val = img.pixels[((y + dy) * w + x + dx) as usize] as i64;
            m10 += dx as i64 * val;
            m01 += dy as i64 * val;
        }
    }
    (m01 as f64).atan2(m10 as f64)
}

/// 5x5 box-smoothed lookup backed by an integral image.
struct BoxSmoothed {
    width: i32,
    height: i32,
    integral: Vec<u32>,
}

impl BoxSmoothed {
    fn new(img: &ImageGray8) -> Self {
        let (w, h) = (img.width as usize, img.height as usize);
        let mut integral = vec![0u32; (w + 1) * (h + 1)];
        for y in 0..h {
            let mut row = 0u32;
            for x in 0..w {
                row += img.pixels[y * w + x] as u32;
                integral[(y + 1) * (w + 1) + x + 1] = integral[y * (w + 1) + x + 1] + row;
            }
        }
        Self {
            width: w as i32,
            height: h as i32,
            integral,
        }
    }

    fn at(&self, x: i32, y: i32) -> i32 {
        let x0 = (x - 2).clamp(0, self.width - 1);
        let y0 = (y - 2).clamp(0, self.height - 1);
        let x1 = (x + 3).clamp(1, self.width);
        let y1 = (y + 3).clamp(1, self.height);
        let w = (self.width + 1) as usize;
        let sum = self.integral[y1 as usize * w + x1 as usize]
            + self.integral[y0 as usize * w + x0 as usize]
            - self.integral[y0 as usize * w + x1 as usize]
            - self.integral[y1 as usize * w + x0 as usize];
        (sum / ((x1 - x0) as u32 * (y1 - y0) as u32)) as i32
    }
}

/// Fixed comparison pattern for the binary descriptor: 256 point pairs in
/// a radius-13 disc, drawn once from a seeded generator so every detector
/// instance uses the same pattern.
fn brief_pattern() -> &'static [(i8, i8, i8, i8); 256] {
    static PATTERN: OnceLock<[(i8, i8, i8, i8); 256]> = OnceLock::new();
    PATTERN.get_or_init(|| {
        let mut rng = ChaCha8Rng::seed_from_u64(0x0b5e55ed);
        let mut draw = |rng: &mut ChaCha8Rng| -> (i8, i8) {
            loop {
                let x = rng.gen_range(-13i32..=13);
                let y = rng.gen_range(-13i32..=13);
                if x * x + y * y <= 169 {
                    return (x as i8, y as i8);
                }
            }
        };
        let mut out = [(0i8, 0i8, 0i8, 0i8); 256];
        for slot in out.iter_mut() {
            let (ax, ay) = draw(&mut rng);
            let (bx, by) = draw(&mut rng);
            *slot = (ax, ay, bx, by);
        }
        out
    })
}

/// Steered binary descriptor: the sampling pattern is rotated by the
/// keypoint orientation and compared on the box-smoothed image.
fn describe(img: &BoxSmoothed, x: i32, y: i32, angle: f64) -> Descriptor {
    let (sin, cos) = angle.sin_cos();
    let rotate = |px: i8, py: i8| -> (i32, i32) {
        let rx = cos * px as f64 - sin * py as f64;
        let ry = sin * px as f64 + cos * py as f64;
        (x + rx.round() as i32, y + ry.round() as i32)
    };
    let mut bits = [0u8; 32];
    for (i, &(ax, ay, bx, by)) in brief_pattern().iter().enumerate() {
        let (pax, pay) = rotate(ax, ay);
        let (pbx, pby) = rotate(bx, by);
        if img.at(pax, pay) < img.at(pbx, pby) {
            bits[i / 8] |= 1 << (i % 8);
        }
    }
    Descriptor(bits)
}
