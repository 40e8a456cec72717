//! Gaussian, binomial and Laplacian-of-Gaussian kernels.
//!
//! Kernels are point-sampled at integer offsets from the center tap. The
//! support width for a given `sigma` comes from [`size_rule`]: `4·sigma + 1`,
//! rounded and forced odd so that every kernel has a center tap.
//!
//! All 2-D kernels are built from one octant (`0 <= dy <= dx`) and mirrored,
//! so the four reflections `(x, y) -> (-x, y), (x, -y), (y, x)` are bitwise
//! equal to the original.

use crate::error::{Error, Result};

/// Largest accepted standard deviation. Keeps the 2-D tap grid under ~16M
/// entries.
pub const MAX_SIGMA: f64 = 1000.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum KernelKind {
    Gaussian,
    Log,
    Binomial3,
    /// User-supplied taps (identity kernels, test fixtures).
    Custom,
}

fn check_sigma(sigma: f64) -> Result<()> {
    if !sigma.is_finite() || sigma <= 0.0 {
        return Err(Error::invalid(
            "sigma",
            format!("must be a positive finite number, got {sigma}"),
        ));
    }
    if sigma > MAX_SIGMA {
        return Err(Error::invalid(
            "sigma",
            format!("{sigma} exceeds the supported maximum of {MAX_SIGMA}"),
        ));
    }
    Ok(())
}

/// Number of taps per side for a kernel of standard deviation `sigma`.
///
/// `round(4·sigma) + 1`, bumped to the next odd number when even, and never
/// less than 3.
pub fn size_rule(sigma: f64) -> Result<usize> {
    check_sigma(sigma)?;
    let mut size = (4.0 * sigma).round() as usize + 1;
    if size.is_multiple_of(2) {
        size += 1;
    }
    Ok(size.max(3))
}

#[inline]
fn gaussian_weight(r2: f64, sigma: f64) -> f64 {
    (-r2 / (2.0 * sigma * sigma)).exp()
}

/// Unnormalized Laplacian of Gaussian evaluated at an integer offset:
/// `((x² + y² - 2σ²) / σ⁴) · exp(-(x² + y²) / 2σ²)`.
pub fn log_closed_form(x: f64, y: f64, sigma: f64) -> f64 {
    let r2 = x * x + y * y;
    let s2 = sigma * sigma;
    (r2 - 2.0 * s2) / (s2 * s2) * gaussian_weight(r2, sigma)
}

/// Symmetric odd-length 1-D kernel.
#[derive(Debug, Clone, PartialEq)]
pub struct Kernel1D {
    sigma: Option<f64>,
    taps: Vec<f64>,
    kind: KernelKind,
}

impl Kernel1D {
    /// Sampled Gaussian normalized to unit sum.
    pub fn gaussian(sigma: f64) -> Result<Self> {
        let size = size_rule(sigma)?;
        let radius = (size / 2) as isize;
        let mut taps: Vec<f64> = (-radius..=radius)
            .map(|u| {
                // mirrored: weight depends on |u| only
                let u = u.unsigned_abs() as f64;
                gaussian_weight(u * u, sigma)
            })
            .collect();
        let sum: f64 = taps.iter().sum();
        taps.iter_mut().for_each(|t| *t /= sum);
        Ok(Self {
            sigma: Some(sigma),
            taps,
            kind: KernelKind::Gaussian,
        })
    }

    /// Wraps arbitrary taps. The length must be odd.
    pub fn from_taps(taps: Vec<f64>) -> Result<Self> {
        if taps.len().is_multiple_of(2) {
            return Err(Error::invalid(
                "taps",
                format!("kernel length must be odd, got {}", taps.len()),
            ));
        }
        Ok(Self {
            sigma: None,
            taps,
            kind: KernelKind::Custom,
        })
    }

    pub fn taps(&self) -> &[f64] {
        &self.taps
    }

    pub fn len(&self) -> usize {
        self.taps.len()
    }

    pub fn is_empty(&self) -> bool {
        self.taps.is_empty()
    }

    pub fn radius(&self) -> usize {
        self.taps.len() / 2
    }

    pub fn sigma(&self) -> Option<f64> {
        self.sigma
    }

    pub fn kind(&self) -> KernelKind {
        self.kind
    }

    /// Outer product with itself.
    pub fn outer(&self) -> Kernel2D {
        let n = self.taps.len();
        let mut taps = Vec::with_capacity(n * n);
        for &ty in &self.taps {
            for &tx in &self.taps {
                taps.push(ty * tx);
            }
        }
        Kernel2D {
            size: n,
            taps,
            sigma: self.sigma,
            kind: self.kind,
            dc_correction: 0.0,
        }
    }
}

/// Square odd-sized 2-D kernel stored row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct Kernel2D {
    size: usize,
    taps: Vec<f64>,
    sigma: Option<f64>,
    kind: KernelKind,
    dc_correction: f64,
}

impl Kernel2D {
    /// Fills an `size`×`size` grid from one octant of `value(dx, dy)` with
    /// `dx >= dy >= 0`.
    fn mirrored(size: usize, mut value: impl FnMut(usize, usize) -> f64) -> Vec<f64> {
        let r = size / 2;
        let mut taps = vec![0.0; size * size];
        for dx in 0..=r {
            for dy in 0..=dx {
                let v = value(dx, dy);
                for (a, b) in [(dx, dy), (dy, dx)] {
                    for x in [r - a, r + a] {
                        for y in [r - b, r + b] {
                            taps[y * size + x] = v;
                        }
                    }
                }
            }
        }
        taps
    }

    /// Sampled isotropic Gaussian normalized to unit sum.
    pub fn gaussian(sigma: f64) -> Result<Self> {
        let size = size_rule(sigma)?;
        let mut taps = Self::mirrored(size, |dx, dy| {
            let (x, y) = (dx as f64, dy as f64);
            gaussian_weight(x * x + y * y, sigma)
        });
        let sum: f64 = taps.iter().sum();
        taps.iter_mut().for_each(|t| *t /= sum);
        Ok(Self {
            size,
            taps,
            sigma: Some(sigma),
            kind: KernelKind::Gaussian,
            dc_correction: 0.0,
        })
    }

    /// `[[1,2,1],[2,4,2],[1,2,1]] / 16`.
    pub fn binomial3() -> Self {
        let taps = [1.0, 2.0, 1.0, 2.0, 4.0, 2.0, 1.0, 2.0, 1.0]
            .into_iter()
            .map(|t| t / 16.0)
            .collect();
        Self {
            size: 3,
            taps,
            sigma: None,
            kind: KernelKind::Binomial3,
            dc_correction: 0.0,
        }
    }

    /// Laplacian of Gaussian at the closed-form scale, shifted to zero sum.
    ///
    /// The truncated support leaves a nonzero DC gain; the mean tap is
    /// subtracted so flat regions respond with 0. The subtracted amount is
    /// available from [`Kernel2D::dc_correction`].
    pub fn log(sigma: f64) -> Result<Self> {
        let size = size_rule(sigma)?;
        let mut taps = Self::mirrored(size, |dx, dy| log_closed_form(dx as f64, dy as f64, sigma));
        let mean = taps.iter().sum::<f64>() / taps.len() as f64;
        taps.iter_mut().for_each(|t| *t -= mean);
        Ok(Self {
            size,
            taps,
            sigma: Some(sigma),
            kind: KernelKind::Log,
            dc_correction: mean,
        })
    }

    /// Wraps arbitrary row-major taps. `size` must be odd.
    pub fn from_taps(size: usize, taps: Vec<f64>) -> Result<Self> {
        if size.is_multiple_of(2) || taps.len() != size * size {
            return Err(Error::invalid(
                "taps",
                format!(
                    "expected an odd square grid, got size {size} with {} taps",
                    taps.len()
                ),
            ));
        }
        Ok(Self {
            size,
            taps,
            sigma: None,
            kind: KernelKind::Custom,
            dc_correction: 0.0,
        })
    }

    /// `size`×`size` kernel with a single 1 at the center.
    pub fn identity(size: usize) -> Result<Self> {
        let mut taps = vec![0.0; size * size];
        if let Some(c) = taps.get_mut(size * size / 2) {
            *c = 1.0;
        }
        Self::from_taps(size, taps)
    }

    pub fn size(&self) -> usize {
        self.size
    }

    pub fn radius(&self) -> usize {
        self.size / 2
    }

    pub fn taps(&self) -> &[f64] {
        &self.taps
    }

    pub fn sigma(&self) -> Option<f64> {
        self.sigma
    }

    pub fn kind(&self) -> KernelKind {
        self.kind
    }

    /// Amount subtracted from every tap to zero the DC gain (LoG only).
    pub fn dc_correction(&self) -> f64 {
        self.dc_correction
    }

    /// Tap at offset `(dx, dy)` from the center.
    pub fn at(&self, dx: isize, dy: isize) -> f64 {
        let r = self.radius() as isize;
        self.taps[((dy + r) as usize) * self.size + (dx + r) as usize]
    }

    pub fn sum(&self) -> f64 {
        self.taps.iter().sum()
    }

    /// Kernel rotated by 180°; convolution with the result is correlation
    /// with `self`.
    pub fn flipped(&self) -> Self {
        let mut k = self.clone();
        k.taps.reverse();
        k
    }

    /// Rank-3 separable form of a LoG kernel.
    ///
    /// The sampled closed form splits as `d2(x)·g(y) + g(x)·d2(y)`, and the DC
    /// correction is a constant times the all-ones kernel, so the corrected
    /// kernel equals `outer(d2, g) + outer(g, d2) - c·outer(1, 1)`.
    pub fn log_separable_terms(&self) -> Option<LogTerms> {
        let sigma = match (self.kind, self.sigma) {
            (KernelKind::Log, Some(s)) => s,
            _ => return None,
        };
        let r = self.radius() as isize;
        let s2 = sigma * sigma;
        let gauss: Vec<f64> = (-r..=r)
            .map(|u| {
                let u = u.unsigned_abs() as f64;
                gaussian_weight(u * u, sigma)
            })
            .collect();
        let second = (-r..=r)
            .zip(&gauss)
            .map(|(u, g)| {
                let u = u.unsigned_abs() as f64;
                (u * u - s2) / (s2 * s2) * g
            })
            .collect();
        Some(LogTerms {
            gauss,
            second,
            dc: self.dc_correction,
        })
    }
}

/// 1-D factors of a LoG kernel; see [`Kernel2D::log_separable_terms`].
#[derive(Debug, Clone, PartialEq)]
pub struct LogTerms {
    pub gauss: Vec<f64>,
    pub second: Vec<f64>,
    pub dc: f64,
}

pub fn gaussian_1d(sigma: f64) -> Result<Kernel1D> {
    Kernel1D::gaussian(sigma)
}

pub fn gaussian_2d(sigma: f64) -> Result<Kernel2D> {
    Kernel2D::gaussian(sigma)
}

pub fn binomial3() -> Kernel2D {
    Kernel2D::binomial3()
}

pub fn log_2d(sigma: f64) -> Result<Kernel2D> {
    Kernel2D::log(sigma)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn assert_four_fold(k: &Kernel2D) {
        let r = k.radius() as isize;
        for y in -r..=r {
            for x in -r..=r {
                let v = k.at(x, y).to_bits();
                assert_eq!(v, k.at(-x, y).to_bits(), "({x},{y}) vs (-x,y)");
                assert_eq!(v, k.at(x, -y).to_bits(), "({x},{y}) vs (x,-y)");
                assert_eq!(v, k.at(y, x).to_bits(), "({x},{y}) vs (y,x)");
            }
        }
    }

    #[test]
    fn size_rule_values() {
        assert_eq!(size_rule(7.0).unwrap(), 29);
        assert_eq!(size_rule(2.0).unwrap(), 9);
        // round(2.4) + 1 = 3
        assert_eq!(size_rule(0.6).unwrap(), 3);
        // round(0.4) + 1 = 1, floored to 3
        assert_eq!(size_rule(0.1).unwrap(), 3);
        // round(5.0) + 1 = 6 -> 7
        assert_eq!(size_rule(1.25).unwrap(), 7);
        assert_eq!(size_rule(30.0).unwrap(), 121);
    }

    #[test]
    fn size_rule_rejects_bad_sigma() {
        for s in [0.0, -1.0, f64::NAN, f64::INFINITY, MAX_SIGMA * 2.0] {
            assert!(
                matches!(
                    size_rule(s),
                    Err(Error::InvalidParameter { name: "sigma", .. })
                ),
                "{s}"
            );
        }
        assert!(gaussian_1d(0.0).is_err());
        assert!(gaussian_2d(-2.0).is_err());
        assert!(log_2d(f64::NAN).is_err());
    }

    #[test]
    fn gaussian_1d_center_ratio() {
        let k = gaussian_1d(1.0).unwrap();
        let c = k.radius();
        let ratio = k.taps()[c] / k.taps()[c + 1];
        assert!((ratio - 0.5f64.exp()).abs() < 1e-9, "{ratio}");
    }

    #[test]
    fn gaussian_1d_sums_to_one() {
        let k = gaussian_1d(2.0).unwrap();
        assert_eq!(k.len(), 9);
        assert!((k.taps().iter().sum::<f64>() - 1.0).abs() < 1e-9);
        let max = k.taps().iter().cloned().fold(f64::MIN, f64::max);
        assert_eq!(max, k.taps()[k.radius()]);
    }

    #[test]
    fn gaussian_2d_matches_outer_product() {
        let g2 = gaussian_2d(2.0).unwrap();
        let outer = gaussian_1d(2.0).unwrap().outer();
        assert_eq!(g2.size(), 9);
        for (a, b) in g2.taps().iter().zip(outer.taps()) {
            assert!((a - b).abs() <= 1e-12);
        }
        assert_eq!(g2.at(1, 2), g2.at(2, 1));
    }

    #[test]
    fn gaussian_2d_radially_monotone() {
        // Walk outward along the axis, the diagonal and a knight's-move ray.
        let k = gaussian_2d(5.0).unwrap();
        let r = k.radius() as isize;
        for (sx, sy) in [(1, 0), (1, 1), (2, 1), (0, -1), (-1, -1)] {
            let mut prev = k.at(0, 0);
            let mut step: isize = 1;
            while (sx * step).abs() <= r && (sy * step).abs() <= r {
                let v = k.at(sx * step, sy * step);
                assert!(v < prev, "ray ({sx},{sy}) step {step}");
                prev = v;
                step += 1;
            }
        }
    }

    #[test]
    fn binomial3_is_exact() {
        let k = binomial3();
        let expected: Vec<f64> = [1., 2., 1., 2., 4., 2., 1., 2., 1.]
            .iter()
            .map(|v| v / 16.0)
            .collect();
        assert_eq!(k.taps(), expected.as_slice());
        assert_eq!(k.sum(), 1.0);
        assert_eq!(k.at(0, 0), 0.25);
        assert_eq!(k.kind(), KernelKind::Binomial3);
    }

    #[test]
    fn log_closed_form_values() {
        for s in [0.6, 1.0, 2.0, 7.0] {
            assert!((log_closed_form(0.0, 0.0, s) + 2.0 / (s * s)).abs() < 1e-12);
        }
        // x² + y² = 2σ² with σ = 1: (1, 1)
        assert_eq!(log_closed_form(1.0, 1.0, 1.0), 0.0);
        // σ = 5: (5, 5) lies on the ring
        assert_eq!(log_closed_form(5.0, 5.0, 5.0), 0.0);
    }

    #[test]
    fn log_kernel_zero_dc_and_center_minimum() {
        let k = log_2d(2.0).unwrap();
        assert!(k.sum().abs() < 1e-9);
        assert_eq!(k.at(1, 2), k.at(2, 1));
        let min = k.taps().iter().cloned().fold(f64::MAX, f64::min);
        assert_eq!(min, k.at(0, 0));
        let pre = k.at(0, 0) + k.dc_correction();
        assert!((pre + 0.5).abs() < 1e-9, "{pre}");
    }

    #[test]
    fn log_separable_terms_reconstruct_kernel() {
        for s in [0.6, 2.0, 4.5] {
            let k = log_2d(s).unwrap();
            let t = k.log_separable_terms().unwrap();
            let r = k.radius() as isize;
            for y in -r..=r {
                for x in -r..=r {
                    let (ix, iy) = ((x + r) as usize, (y + r) as usize);
                    let v = t.second[ix] * t.gauss[iy] + t.gauss[ix] * t.second[iy] - t.dc;
                    assert!((v - k.at(x, y)).abs() < 1e-12);
                }
            }
        }
        assert!(gaussian_2d(2.0).unwrap().log_separable_terms().is_none());
    }

    #[test]
    fn identity_and_custom() {
        let d = Kernel2D::identity(3).unwrap();
        assert_eq!(d.at(0, 0), 1.0);
        assert_eq!(d.sum(), 1.0);
        assert!(Kernel2D::from_taps(2, vec![0.0; 4]).is_err());
        assert!(Kernel1D::from_taps(vec![0.0; 4]).is_err());
    }

    proptest! {
        #[test]
        fn kernel_invariants(sigma in 0.05f64..12.0) {
            let size = size_rule(sigma).unwrap();
            prop_assert!(size % 2 == 1 && size >= 3);

            let g1 = gaussian_1d(sigma).unwrap();
            prop_assert_eq!(g1.len(), size);
            prop_assert!((g1.taps().iter().sum::<f64>() - 1.0).abs() < 1e-9);
            let c = g1.radius();
            for i in 0..size {
                prop_assert_eq!(g1.taps()[i].to_bits(), g1.taps()[size - 1 - i].to_bits());
                prop_assert!(g1.taps()[i] > 0.0);
            }
            for i in c..size - 1 {
                prop_assert!(g1.taps()[i] >= g1.taps()[i + 1]);
            }

            let g2 = gaussian_2d(sigma).unwrap();
            prop_assert!((g2.sum() - 1.0).abs() < 1e-9);
            let outer = g1.outer();
            let worst = g2.taps().iter().zip(outer.taps()).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
            prop_assert!(worst <= 1e-12, "separability residual {}", worst);
            assert_four_fold(&g2);

            let log = log_2d(sigma).unwrap();
            prop_assert!(log.sum().abs() < 1e-9);
            assert_four_fold(&log);
        }

        #[test]
        fn size_rule_monotone(a in 0.01f64..200.0, b in 0.01f64..200.0) {
            let (lo, hi) = if a <= b { (a, b) } else { (b, a) };
            prop_assert!(size_rule(lo).unwrap() <= size_rule(hi).unwrap());
        }
    }
}
