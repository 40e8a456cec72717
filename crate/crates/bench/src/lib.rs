//! Seeded synthetic inputs shared by the criterion benches and the
//! `hybridkit bench --synthetic` command.

use hybridkit::bench::BenchImage;
use hybridkit::Image;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub const DEFAULT_SEED: u64 = 0x5EED;

/// Square sizes used by `--synthetic`.
pub const SYNTHETIC_SIZES: [usize; 3] = [64, 128, 256];

/// Uniform noise in `[0, 1]`. Same seed, same pixels.
pub fn noise_image(width: usize, height: usize, channels: usize, seed: u64) -> Image {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let planes = (0..channels)
        .map(|_| (0..width * height).map(|_| rng.random::<f64>()).collect())
        .collect();
    Image::from_planes(width, height, planes).expect("valid dimensions")
}

/// One RGB noise image per size, ids like `synthetic_128x128`.
pub fn synthetic_corpus(sizes: &[usize], seed: u64) -> Vec<BenchImage> {
    sizes
        .iter()
        .enumerate()
        .map(|(i, &n)| {
            BenchImage::new(
                format!("synthetic_{n}x{n}"),
                noise_image(n, n, 3, seed.wrapping_add(i as u64)),
            )
        })
        .collect()
}
