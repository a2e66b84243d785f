//! Classical translation estimation: sparse corners with binary
//! descriptors on pseudo-RGBD frames, 3D-3D correspondences and a robust
//! metric rigid transform. Only the translation (the pseudo-scale) is
//! consumed downstream; the rotation is discarded by the pipeline.

mod detect;
mod ransac;

pub use detect::{detect_features, DetectorParams};
pub use ransac::{estimate_rigid_transform, RansacParams};

use nalgebra::Vector3;

/// 256-bit binary descriptor.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Descriptor(pub [u8; 32]);

impl Descriptor {
    pub fn hamming(&self, other: &Descriptor) -> u32 {
        self.0
            .iter()
            .zip(&other.0)
            .map(|(a, b)| (a ^ b).count_ones())
            .sum()
    }
}

/// Detected corner with sub-pixel position, detector response and
/// descriptor.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Keypoint {
    pub u: f64,
    pub v: f64,
    pub response: f64,
    pub descriptor: Descriptor,
}

/// A 3D-3D correspondence, one point per camera frame, meters.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Correspondence3D {
    pub p_a: Vector3<f64>,
    pub p_b: Vector3<f64>,
}

/// Mutual-nearest-neighbor matching with Lowe's ratio test on Hamming
/// distance. Returns index pairs `(i in a, j in b)`; the pairing is
/// one-to-one.
pub fn match_features(a: &[Keypoint], b: &[Keypoint], ratio: f64) -> Vec<(usize, usize)> {
    if a.is_empty() || b.is_empty() {
        return Vec::new();
    }
    // Best and second-best neighbor in b for every a.
    let forward: Vec<Option<(usize, u32, u32)>> = a
        .iter()
        .map(|ka| {
            let mut best: Option<(usize, u32)> = None;
            let mut second = u32::MAX;
            for (j, kb) in b.iter().enumerate() {
                let d = ka.descriptor.hamming(&kb.descriptor);
                match best {
                    Some((_, bd)) if d < bd => {
                        second = bd;
                        best = Some((j, d));
                    }
                    Some(_) if d < second => second = d,
                    None => best = Some((j, d)),
                    _ => {}
                }
            }
            best.map(|(j, d)| (j, d, second))
        })
        .collect();

    // Nearest neighbor in a for every b (for the mutual check).
    let backward: Vec<Option<usize>> = b
        .iter()
        .map(|kb| {
            let mut best: Option<(usize, u32)> = None;
            for (i, ka) in a.iter().enumerate() {
                let d = kb.descriptor.hamming(&ka.descriptor);
                if best.map_or(true, |(_, bd)| d < bd) {
                    best = Some((i, d));
                }
            }
            best.map(|(i, _)| i)
        })
        .collect();

    let mut out = Vec::new();
    for (i, f) in forward.iter().enumerate() {
        let Some((j, d, second)) = *f else { continue };
        if backward[j] != Some(i) {
            continue;
        }
        // Ratio test; a unique neighbor (second == MAX) passes.
        if second != u32::MAX && (d as f64) >= ratio * (second as f64) {
            continue;
        }
        out.push((i, j));
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::rngs::StdRng;
    use rand::{Rng, SeedableRng};

    fn kp(descriptor: Descriptor) -> Keypoint {
        Keypoint {
            u: 0.0,
            v: 0.0,
            response: 1.0,
            descriptor,
        }
    }

    fn random_descriptor(rng: &mut impl Rng) -> Descriptor {
        let mut d = [0u8; 32];
        rng.fill(&mut d[..]);
        Descriptor(d)
    }

    #[test]
    fn hamming_distance_counts_bits() {
        let a = Descriptor([0u8; 32]);
        let mut b = [0u8; 32];
        b[0] = 0b1010_1010;
        b[31] = 0xff;
        assert_eq!(a.hamming(&Descriptor(b)), 12);
        assert_eq!(a.hamming(&a), 0);
    }

    #[test]
    fn identical_sets_match_identically() {
        let mut rng = StdRng::seed_from_u64(1);
        let set: Vec<Keypoint> = (0..50).map(|_| kp(random_descriptor(&mut rng))).collect();
        let matches = match_features(&set, &set, 0.8);
        assert_eq!(matches.len(), set.len());
        for (i, j) in matches {
            assert_eq!(i, j);
        }
    }

    #[test]
    fn disjoint_random_descriptors_rarely_match() {
        // Random 256-bit descriptors concentrate around Hamming distance
        // 128 (sigma 8); the mutual + 0.7-ratio gate makes a surviving
        // match vanishingly unlikely.
        let mut rng = StdRng::seed_from_u64(2);
        let a: Vec<Keypoint> = (0..100).map(|_| kp(random_descriptor(&mut rng))).collect();
        let b: Vec<Keypoint> = (0..100).map(|_| kp(random_descriptor(&mut rng))).collect();
        let matches = match_features(&a, &b, 0.7);
        assert!(
            matches.len() <= 1,
            "expected ~0 chance matches, got {}",
            matches.len()
        );
    }

    #[test]
    fn matches_are_one_to_one() {
        let mut rng = StdRng::seed_from_u64(3);
        // Lots of near-duplicate descriptors to stress the mutual check.
        let base = random_descriptor(&mut rng);
        let mut perturb = |flips: usize| {
            let mut d = base.0;
            for _ in 0..flips {
                let bit = rng.gen_range(0..256);
                d[bit / 8] ^= 1 << (bit % 8);
            }
            Descriptor(d)
        };
        let a: Vec<Keypoint> = (0..40).map(|_| kp(perturb(3))).collect();
        let b: Vec<Keypoint> = (0..40).map(|_| kp(perturb(3))).collect();
        let matches = match_features(&a, &b, 0.95);
        let mut seen_i = std::collections::HashSet::new();
        let mut seen_j = std::collections::HashSet::new();
        for (i, j) in matches {
            assert!(seen_i.insert(i), "index {i} repeated on the left");
            assert!(seen_j.insert(j), "index {j} repeated on the right");
        }
    }
}
