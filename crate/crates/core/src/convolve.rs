//! Same-size spatial convolution.
//!
//! Every output sample is `Σ in(resolve(p + (u, v))) · k(u, v)` over the
//! kernel support, with the sum taken in row-major kernel order. Kernels
//! produced by [`crate::kernels`] are symmetric, so this correlation form and
//! true convolution coincide.
//!
//! The row loop may run on the rayon pool ([`Execution::Parallel`]); each
//! output sample is still accumulated by one thread in a fixed order, so the
//! result is bit-identical to [`Execution::Serial`].

use std::fmt;
use std::str::FromStr;
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::Arc;

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::image::{Planar, SignedImage};
use crate::kernels::{Kernel1D, Kernel2D};

/// How samples outside the image are produced.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default)]
pub enum BoundaryPolicy {
    /// Clamp to the nearest edge sample.
    #[default]
    Replicate,
    /// Mirror about the edge, repeating the edge sample (`-1 -> 0`, `-2 -> 1`).
    Reflect,
    /// Treat outside samples as 0.
    Zero,
}

impl BoundaryPolicy {
    pub const ALL: [BoundaryPolicy; 3] = [
        BoundaryPolicy::Replicate,
        BoundaryPolicy::Reflect,
        BoundaryPolicy::Zero,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            BoundaryPolicy::Replicate => "replicate",
            BoundaryPolicy::Reflect => "reflect",
            BoundaryPolicy::Zero => "zero",
        }
    }
}

impl fmt::Display for BoundaryPolicy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for BoundaryPolicy {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "replicate" => Ok(BoundaryPolicy::Replicate),
            "reflect" => Ok(BoundaryPolicy::Reflect),
            "zero" => Ok(BoundaryPolicy::Zero),
            other => Err(Error::invalid(
                "boundary",
                format!("expected replicate, reflect or zero, got {other:?}"),
            )),
        }
    }
}

/// Maps a possibly out-of-range index onto `0..len`, or `None` when the
/// sample contributes 0.
pub fn resolve_index(i: isize, len: usize, b: BoundaryPolicy) -> Option<usize> {
    debug_assert!(len > 0);
    let n = len as isize;
    if (0..n).contains(&i) {
        return Some(i as usize);
    }
    match b {
        BoundaryPolicy::Zero => None,
        BoundaryPolicy::Replicate => Some(i.clamp(0, n - 1) as usize),
        BoundaryPolicy::Reflect => {
            // Half-sample symmetric extension has period 2n.
            let m = i.rem_euclid(2 * n);
            Some(if m < n { m } else { 2 * n - 1 - m } as usize)
        }
    }
}

/// Resolves a 2-D coordinate against `(width, height)`.
pub fn resolve(
    (x, y): (isize, isize),
    b: BoundaryPolicy,
    (width, height): (usize, usize),
) -> Option<(usize, usize)> {
    Some((resolve_index(x, width, b)?, resolve_index(y, height, b)?))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Execution {
    Serial,
    /// Rows are distributed over the rayon pool.
    #[default]
    Parallel,
}

/// Counts kernel tap multiplications performed by an [`Engine`].
#[derive(Debug, Default)]
pub struct TapCounter(AtomicU64);

impl TapCounter {
    pub fn new() -> Arc<Self> {
        Arc::new(Self::default())
    }

    pub fn get(&self) -> u64 {
        self.0.load(Ordering::Relaxed)
    }

    pub fn reset(&self) {
        self.0.store(0, Ordering::Relaxed);
    }

    fn add(&self, n: u64) {
        self.0.fetch_add(n, Ordering::Relaxed);
    }
}

/// Execution settings shared by all convolution entry points.
///
/// Tap counting is off unless a [`TapCounter`] is attached; when off the hot
/// loops carry no instrumentation.
#[derive(Debug, Clone, Default)]
pub struct Engine {
    pub execution: Execution,
    pub counter: Option<Arc<TapCounter>>,
}

impl Engine {
    pub fn serial() -> Self {
        Self {
            execution: Execution::Serial,
            counter: None,
        }
    }

    pub fn parallel() -> Self {
        Self::default()
    }

    pub fn with_counter(mut self, counter: Arc<TapCounter>) -> Self {
        self.counter = Some(counter);
        self
    }

    /// Direct 2-D convolution, each channel independently.
    pub fn convolve2d<P: Planar + ?Sized>(
        &self,
        img: &P,
        k: &Kernel2D,
        b: BoundaryPolicy,
    ) -> Result<SignedImage> {
        check_fits(k.size(), img.width(), img.height())?;
        let (w, h, _) = img.dims();
        let planes = (0..img.channels())
            .map(|c| self.direct_plane(img.plane(c), w, h, k, b))
            .collect();
        SignedImage::from_planes(w, h, planes)
    }

    /// Horizontal pass then vertical pass with the same 1-D kernel.
    pub fn convolve_separable<P: Planar + ?Sized>(
        &self,
        img: &P,
        k: &Kernel1D,
        b: BoundaryPolicy,
    ) -> Result<SignedImage> {
        self.convolve_separable_pair(img, k.taps(), k.taps(), b)
    }

    /// Separable convolution with the rank-1 kernel `outer(col, row)`:
    /// `row` runs along x, `col` along y.
    pub fn convolve_separable_pair<P: Planar + ?Sized>(
        &self,
        img: &P,
        row: &[f64],
        col: &[f64],
        b: BoundaryPolicy,
    ) -> Result<SignedImage> {
        for taps in [row, col] {
            if taps.len() % 2 == 0 {
                return Err(Error::invalid(
                    "taps",
                    format!("kernel length must be odd, got {}", taps.len()),
                ));
            }
        }
        check_fits(row.len().max(col.len()), img.width(), img.height())?;
        let (w, h, _) = img.dims();
        let planes = (0..img.channels())
            .map(|c| {
                let tmp = self.horizontal_plane(img.plane(c), w, h, row, b);
                self.vertical_plane(&tmp, w, h, col, b)
            })
            .collect();
        SignedImage::from_planes(w, h, planes)
    }

    fn for_each_row(&self, out: &mut [f64], w: usize, f: impl Fn(usize, &mut [f64]) -> u64 + Sync) {
        let counter = self.counter.as_deref();
        let run = |(y, row): (usize, &mut [f64])| {
            let muls = f(y, row);
            if let Some(c) = counter {
                c.add(muls);
            }
        };
        match self.execution {
            Execution::Serial => out.chunks_mut(w).enumerate().for_each(run),
            Execution::Parallel => out.par_chunks_mut(w).enumerate().for_each(run),
        }
    }

    fn direct_plane(
        &self,
        src: &[f64],
        w: usize,
        h: usize,
        k: &Kernel2D,
        b: BoundaryPolicy,
    ) -> Vec<f64> {
        let size = k.size();
        let r = k.radius() as isize;
        let xmap = index_map(w, r, b);
        let taps = k.taps();
        let mut out = vec![0.0; w * h];
        self.for_each_row(&mut out, w, |y, acc| {
            let mut padded = vec![0.0; w + size - 1];
            for (ky, krow) in taps.chunks_exact(size).enumerate() {
                let sy = resolve_index(y as isize + ky as isize - r, h, b);
                fill_padded(&mut padded, src, w, sy, &xmap);
                for (x, a) in acc.iter_mut().enumerate() {
                    let window = &padded[x..x + size];
                    let mut s = *a;
                    for (v, t) in window.iter().zip(krow) {
                        s += v * t;
                    }
                    *a = s;
                }
            }
            (w * size * size) as u64
        });
        out
    }

    fn horizontal_plane(
        &self,
        src: &[f64],
        w: usize,
        h: usize,
        taps: &[f64],
        b: BoundaryPolicy,
    ) -> Vec<f64> {
        let size = taps.len();
        let r = (size / 2) as isize;
        let xmap = index_map(w, r, b);
        let mut out = vec![0.0; w * h];
        self.for_each_row(&mut out, w, |y, acc| {
            let mut padded = vec![0.0; w + size - 1];
            fill_padded(&mut padded, src, w, Some(y), &xmap);
            for (x, a) in acc.iter_mut().enumerate() {
                let mut s = 0.0;
                for (v, t) in padded[x..x + size].iter().zip(taps) {
                    s += v * t;
                }
                *a = s;
            }
            (w * size) as u64
        });
        out
    }

    fn vertical_plane(
        &self,
        src: &[f64],
        w: usize,
        h: usize,
        taps: &[f64],
        b: BoundaryPolicy,
    ) -> Vec<f64> {
        let r = (taps.len() / 2) as isize;
        let mut out = vec![0.0; w * h];
        self.for_each_row(&mut out, w, |y, acc| {
            for (ky, &t) in taps.iter().enumerate() {
                match resolve_index(y as isize + ky as isize - r, h, b) {
                    Some(sy) => {
                        let srow = &src[sy * w..(sy + 1) * w];
                        for (a, v) in acc.iter_mut().zip(srow) {
                            *a += v * t;
                        }
                    }
                    None => {
                        // zero boundary: same ±0 contribution the direct path adds
                        for a in acc.iter_mut() {
                            *a += 0.0 * t;
                        }
                    }
                }
            }
            (w * taps.len()) as u64
        });
        out
    }
}

/// Source column for every padded position `i` (`x = i - r`).
fn index_map(w: usize, r: isize, b: BoundaryPolicy) -> Vec<Option<usize>> {
    (0..w as isize + 2 * r)
        .map(|i| resolve_index(i - r, w, b))
        .collect()
}

fn fill_padded(
    padded: &mut [f64],
    src: &[f64],
    w: usize,
    row: Option<usize>,
    xmap: &[Option<usize>],
) {
    match row {
        Some(sy) => {
            let srow = &src[sy * w..(sy + 1) * w];
            for (p, m) in padded.iter_mut().zip(xmap) {
                *p = m.map_or(0.0, |sx| srow[sx]);
            }
        }
        None => padded.fill(0.0),
    }
}

fn check_fits(size: usize, width: usize, height: usize) -> Result<()> {
    let max = 2 * width.min(height) + 1;
    if size > max {
        return Err(Error::KernelTooLarge {
            size,
            width,
            height,
            max,
        });
    }
    Ok(())
}

/// [`Engine::convolve2d`] with the default engine.
pub fn convolve2d<P: Planar + ?Sized>(
    img: &P,
    k: &Kernel2D,
    b: BoundaryPolicy,
) -> Result<SignedImage> {
    Engine::default().convolve2d(img, k, b)
}

/// [`Engine::convolve_separable`] with the default engine.
pub fn convolve_separable<P: Planar + ?Sized>(
    img: &P,
    k: &Kernel1D,
    b: BoundaryPolicy,
) -> Result<SignedImage> {
    Engine::default().convolve_separable(img, k, b)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::image::Image;
    use crate::kernels::{binomial3, gaussian_1d, gaussian_2d, log_2d};
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_image(w: usize, h: usize, c: usize, seed: u64) -> Image {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        Image::from_fn(w, h, c, |_, _, _| rng.random::<f64>()).unwrap()
    }

    /// Textbook quadruple loop, kept free of the padded-row machinery.
    fn brute_force(img: &Image, k: &Kernel2D, b: BoundaryPolicy) -> Vec<Vec<f64>> {
        let (w, h, c) = img.dims();
        let r = k.radius() as isize;
        let s = k.size();
        let mut planes = vec![vec![0.0; w * h]; c];
        for (ch, plane) in planes.iter_mut().enumerate() {
            for y in 0..h {
                for x in 0..w {
                    let mut acc = 0.0;
                    for ky in 0..s {
                        for kx in 0..s {
                            let p = (x as isize + kx as isize - r, y as isize + ky as isize - r);
                            let v = match resolve(p, b, (w, h)) {
                                Some((sx, sy)) => img.get(sx, sy, ch),
                                None => 0.0,
                            };
                            acc += v * k.taps()[ky * s + kx];
                        }
                    }
                    plane[y * w + x] = acc;
                }
            }
        }
        planes
    }

    #[test]
    fn resolve_examples() {
        let bounds = (10, 10);
        assert_eq!(
            resolve((-1, 5), BoundaryPolicy::Replicate, bounds),
            Some((0, 5))
        );
        assert_eq!(
            resolve((-2, 3), BoundaryPolicy::Reflect, bounds),
            Some((1, 3))
        );
        assert_eq!(
            resolve((11, 3), BoundaryPolicy::Replicate, bounds),
            Some((9, 3))
        );
        assert_eq!(
            resolve((-1, 3), BoundaryPolicy::Reflect, bounds),
            Some((0, 3))
        );
        assert_eq!(
            resolve((10, 3), BoundaryPolicy::Reflect, bounds),
            Some((9, 3))
        );
        assert_eq!(
            resolve((11, 3), BoundaryPolicy::Reflect, bounds),
            Some((8, 3))
        );
        assert_eq!(resolve((-1, 3), BoundaryPolicy::Zero, bounds), None);
        assert_eq!(resolve((4, 4), BoundaryPolicy::Zero, bounds), Some((4, 4)));
    }

    #[test]
    fn reflect_folds_far_indices() {
        // 0 1 2 | 2 1 0 0 1 2 2 1 0 ...
        let seq: Vec<usize> = (3..12)
            .map(|i| resolve_index(i, 3, BoundaryPolicy::Reflect).unwrap())
            .collect();
        assert_eq!(seq, vec![2, 1, 0, 0, 1, 2, 2, 1, 0]);
        assert_eq!(resolve_index(-4, 3, BoundaryPolicy::Reflect), Some(2));
        assert_eq!(resolve_index(0, 1, BoundaryPolicy::Reflect), Some(0));
        assert_eq!(resolve_index(-5, 1, BoundaryPolicy::Reflect), Some(0));
    }

    #[test]
    fn boundary_parses() {
        for b in BoundaryPolicy::ALL {
            assert_eq!(b.as_str().parse::<BoundaryPolicy>().unwrap(), b);
        }
        assert!("wrap".parse::<BoundaryPolicy>().is_err());
    }

    #[test]
    fn identity_kernel_is_exact() {
        let img = random_image(7, 5, 3, 1);
        let id = Kernel2D::identity(3).unwrap();
        for b in BoundaryPolicy::ALL {
            let out = convolve2d(&img, &id, b).unwrap();
            assert_eq!(out.planes(), img.planes(), "{b}");
        }
        let id1 = Kernel1D::from_taps(vec![0.0, 1.0, 0.0]).unwrap();
        for b in BoundaryPolicy::ALL {
            let out = convolve_separable(&img, &id1, b).unwrap();
            assert_eq!(out.planes(), img.planes(), "{b}");
        }
    }

    #[test]
    fn constant_image_keeps_dc() {
        let img = Image::filled(20, 16, 3, 0.37).unwrap();
        let k = gaussian_2d(2.0).unwrap();
        let out = convolve2d(&img, &k, BoundaryPolicy::Replicate).unwrap();
        for v in out.planes().iter().flatten() {
            assert!((v - 0.37).abs() < 1e-12);
        }
    }

    #[test]
    fn ramp_binomial_zero_matches_brute_force() {
        let img = Image::from_fn(5, 5, 1, |x, y, _| (x + 5 * y) as f64 / 24.0).unwrap();
        let k = binomial3();
        let out = convolve2d(&img, &k, BoundaryPolicy::Zero).unwrap();
        assert_eq!(
            out.planes(),
            brute_force(&img, &k, BoundaryPolicy::Zero).as_slice()
        );
        // corner: (4·0 + 2·(1/24) + 2·(5/24) + 1·(6/24)) / 16
        let corner = (2.0 * (1.0 / 24.0) + 2.0 * (5.0 / 24.0) + 6.0 / 24.0) / 16.0;
        assert!((out.get(0, 0, 0) - corner).abs() < 1e-15);
    }

    #[test]
    fn direct_matches_brute_force_all_policies() {
        let img = random_image(13, 11, 3, 7);
        for k in [binomial3(), gaussian_2d(1.5).unwrap(), log_2d(1.0).unwrap()] {
            for b in BoundaryPolicy::ALL {
                let out = convolve2d(&img, &k, b).unwrap();
                assert_eq!(out.planes(), brute_force(&img, &k, b).as_slice(), "{b}");
            }
        }
    }

    #[test]
    fn separable_matches_direct() {
        let img = random_image(64, 64, 1, 3);
        for sigma in [2.0, 4.0, 7.0] {
            let k1 = gaussian_1d(sigma).unwrap();
            let k2 = gaussian_2d(sigma).unwrap();
            for b in BoundaryPolicy::ALL {
                let sep = convolve_separable(&img, &k1, b).unwrap();
                let dir = convolve2d(&img, &k2, b).unwrap();
                let worst = sep
                    .plane(0)
                    .iter()
                    .zip(dir.plane(0))
                    .map(|(a, b)| (a - b).abs())
                    .fold(0.0, f64::max);
                assert!(worst <= 1e-10, "sigma {sigma} {b}: {worst}");
            }
        }
    }

    #[test]
    fn separable_does_fewer_multiplies() {
        let img = random_image(256, 256, 1, 11);
        let direct = TapCounter::new();
        let sep = TapCounter::new();
        Engine::parallel()
            .with_counter(direct.clone())
            .convolve2d(&img, &gaussian_2d(7.0).unwrap(), BoundaryPolicy::Replicate)
            .unwrap();
        Engine::parallel()
            .with_counter(sep.clone())
            .convolve_separable(&img, &gaussian_1d(7.0).unwrap(), BoundaryPolicy::Replicate)
            .unwrap();
        let n = 256 * 256;
        assert_eq!(direct.get(), 29 * 29 * n);
        assert_eq!(sep.get(), 2 * 29 * n);
        assert!(sep.get() < direct.get());
    }

    #[test]
    fn kernel_too_large() {
        let img = random_image(10, 4, 1, 0);
        // 2·4 + 1 = 9 is the limit
        assert!(convolve2d(&img, &Kernel2D::identity(9).unwrap(), BoundaryPolicy::Zero).is_ok());
        assert!(matches!(
            convolve2d(&img, &Kernel2D::identity(11).unwrap(), BoundaryPolicy::Zero),
            Err(Error::KernelTooLarge {
                size: 11,
                max: 9,
                ..
            })
        ));
        assert!(matches!(
            convolve_separable(&img, &gaussian_1d(7.0).unwrap(), BoundaryPolicy::Zero),
            Err(Error::KernelTooLarge { .. })
        ));
    }

    #[test]
    fn serial_and_parallel_are_bit_identical() {
        let img = random_image(40, 33, 3, 5);
        let k = gaussian_2d(3.0).unwrap();
        let a = Engine::serial()
            .convolve2d(&img, &k, BoundaryPolicy::Reflect)
            .unwrap();
        let b = Engine::parallel()
            .convolve2d(&img, &k, BoundaryPolicy::Reflect)
            .unwrap();
        assert_eq!(a, b);
        let k1 = gaussian_1d(3.0).unwrap();
        let a = Engine::serial()
            .convolve_separable(&img, &k1, BoundaryPolicy::Zero)
            .unwrap();
        let b = Engine::parallel()
            .convolve_separable(&img, &k1, BoundaryPolicy::Zero)
            .unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn convolution_equals_correlation_for_symmetric_kernels() {
        let img = random_image(24, 18, 3, 9);
        for k in [gaussian_2d(2.0).unwrap(), log_2d(2.0).unwrap(), binomial3()] {
            let a = convolve2d(&img, &k, BoundaryPolicy::Replicate).unwrap();
            let b = convolve2d(&img, &k.flipped(), BoundaryPolicy::Replicate).unwrap();
            assert_eq!(a, b);
        }
    }

    #[test]
    fn shift_covariance_in_interior() {
        let (w, h) = (30, 20);
        let img = random_image(w + 1, h, 1, 21);
        let shifted =
            Image::from_fn(w + 1, h, 1, |x, y, _| img.get(x.saturating_sub(1), y, 0)).unwrap();
        let k = gaussian_2d(1.0).unwrap();
        let r = k.radius();
        let a = convolve2d(&img, &k, BoundaryPolicy::Zero).unwrap();
        let b = convolve2d(&shifted, &k, BoundaryPolicy::Zero).unwrap();
        for y in r..h - r {
            for x in r + 1..w - r {
                assert_eq!(a.get(x, y, 0), b.get(x + 1, y, 0));
            }
        }
    }

    proptest! {
        #[test]
        fn linearity(seed in any::<u64>(), a in -2.0f64..2.0, bcoef in -2.0f64..2.0) {
            let i1 = random_image(9, 7, 1, seed);
            let i2 = random_image(9, 7, 1, seed ^ 0xABCD);
            let mix = SignedImage::from_fn(9, 7, 1, |x, y, _| a * i1.get(x, y, 0) + bcoef * i2.get(x, y, 0)).unwrap();
            let k = gaussian_2d(1.0).unwrap();
            for b in BoundaryPolicy::ALL {
                let lhs = convolve2d(&mix, &k, b).unwrap();
                let o1 = convolve2d(&i1, &k, b).unwrap();
                let o2 = convolve2d(&i2, &k, b).unwrap();
                for (i, v) in lhs.plane(0).iter().enumerate() {
                    let rhs = a * o1.plane(0)[i] + bcoef * o2.plane(0)[i];
                    prop_assert!((v - rhs).abs() < 1e-9);
                }
            }
        }

        #[test]
        fn output_dims_match_input(w in 2usize..20, h in 2usize..20, gray in any::<bool>()) {
            let c = if gray { 1 } else { 3 };
            let img = random_image(w, h, c, 0);
            let out = convolve2d(&img, &binomial3(), BoundaryPolicy::Reflect).unwrap();
            prop_assert_eq!(out.dims(), (w, h, c));
        }
    }
}
