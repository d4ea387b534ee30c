//! Small labelled image sets for tests and examples that run without downloads.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::idx::StaticImage;

/// `n` noisy copies of `classes` random prototypes on a `side x side` canvas.
///
/// Each prototype lights about a third of the pixels; every sample flips
/// `noise` of them and draws lit intensities from 160..=255. Labels cycle
/// through the classes so any prefix is balanced.
pub fn prototype_images(n: usize, classes: usize, side: usize, noise: f64, seed: u64) -> Vec<StaticImage> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let protos: Vec<Vec<bool>> = (0..classes)
        .map(|_| (0..side * side).map(|_| rng.gen_bool(0.33)).collect())
        .collect();
    (0..n)
        .map(|k| {
            let label = k % classes;
            let pixels = protos[label]
                .iter()
                .map(|&on| {
                    let lit = on != rng.gen_bool(noise);
                    if lit {
                        rng.gen_range(160..=255)
                    } else {
                        0
                    }
                })
                .collect();
            StaticImage {
                rows: side,
                cols: side,
                pixels,
                label: label as u8,
            }
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn balanced_and_seeded() {
        let a = prototype_images(40, 4, 6, 0.1, 9);
        assert_eq!(a.len(), 40);
        for c in 0..4u8 {
            assert_eq!(a.iter().filter(|im| im.label == c).count(), 10);
        }
        assert_eq!(a, prototype_images(40, 4, 6, 0.1, 9));
        assert!(a.iter().all(|im| im.pixels.len() == 36));
    }

    #[test]
    fn same_class_images_are_closer() {
        let a = prototype_images(200, 2, 8, 0.05, 1);
        let dist = |x: &StaticImage, y: &StaticImage| x.pixels.iter().zip(&y.pixels).filter(|(p, q)| (**p > 0) != (**q > 0)).count();
        let same = dist(&a[0], &a[2]);
        let other = dist(&a[0], &a[1]);
        assert!(same < other, "{same} vs {other}");
    }
}
