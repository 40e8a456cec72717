//! Lowpass/highpass decomposition and hybrid-image synthesis.
//!
//! A hybrid is `clamp(w·L + (1 - w)·(H + 0.5))` where `L` is a Gaussian blur
//! of the first source and `H` a high-pass residual of the second. The `+0.5`
//! offset is the same mid-gray shift used to display a residual on its own,
//! so `w = 1` reproduces the lowpass render and `w = 0` the displayed
//! high-pass render exactly.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::convolve::{BoundaryPolicy, Engine, Execution};
use crate::error::{Error, Result};
use crate::image::{clamp_unit, Image, Planar, SignedImage};
use crate::image_io::resize_bilinear;
use crate::kernels::{gaussian_1d, gaussian_2d, log_2d};

/// Direct 2-D convolution or two 1-D passes.
#[derive(
    Debug, Clone, Copy, PartialEq, Eq, Hash, Default, PartialOrd, Ord, Serialize, Deserialize,
)]
#[serde(rename_all = "lowercase")]
pub enum Strategy {
    Direct,
    #[default]
    Separable,
}

impl Strategy {
    pub fn as_str(self) -> &'static str {
        match self {
            Strategy::Direct => "direct",
            Strategy::Separable => "separable",
        }
    }
}

impl fmt::Display for Strategy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Strategy {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "direct" => Ok(Strategy::Direct),
            "separable" => Ok(Strategy::Separable),
            other => Err(Error::invalid(
                "strategy",
                format!("expected direct or separable, got {other:?}"),
            )),
        }
    }
}

/// How the high-frequency layer is extracted.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default)]
pub enum HighpassMode {
    /// `I - G_σ * I`
    #[default]
    Subtract,
    /// Laplacian of Gaussian response.
    Log,
}

impl HighpassMode {
    pub fn as_str(self) -> &'static str {
        match self {
            HighpassMode::Subtract => "subtract",
            HighpassMode::Log => "log",
        }
    }
}

impl fmt::Display for HighpassMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for HighpassMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "subtract" => Ok(HighpassMode::Subtract),
            "log" => Ok(HighpassMode::Log),
            other => Err(Error::invalid(
                "mode",
                format!("expected subtract or log, got {other:?}"),
            )),
        }
    }
}

/// Full recipe for one hybrid image.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BlendSpec {
    pub sigma_low: f64,
    pub sigma_high: f64,
    /// Fraction of the lowpass layer, in `[0, 1]`.
    pub weight: f64,
    pub highpass_mode: HighpassMode,
    pub boundary: BoundaryPolicy,
}

impl Default for BlendSpec {
    fn default() -> Self {
        Self {
            sigma_low: 7.0,
            sigma_high: 7.0,
            weight: 0.5,
            highpass_mode: HighpassMode::Subtract,
            boundary: BoundaryPolicy::Replicate,
        }
    }
}

impl BlendSpec {
    pub fn validate(&self) -> Result<()> {
        for (name, s) in [
            ("sigma_low", self.sigma_low),
            ("sigma_high", self.sigma_high),
        ] {
            if !s.is_finite() || s <= 0.0 {
                return Err(Error::invalid(name, format!("must be positive, got {s}")));
            }
        }
        if !(0.0..=1.0).contains(&self.weight) {
            return Err(Error::invalid(
                "weight",
                format!("must lie in [0, 1], got {}", self.weight),
            ));
        }
        Ok(())
    }
}

/// Strategy plus convolution engine. The free functions in this module use
/// `Filters::default()` (separable, parallel rows).
#[derive(Debug, Clone, Default)]
pub struct Filters {
    pub strategy: Strategy,
    pub engine: Engine,
}

impl Filters {
    pub fn new(strategy: Strategy, engine: Engine) -> Self {
        Self { strategy, engine }
    }

    /// Unclamped Gaussian blur.
    pub fn blur<P: Planar + ?Sized>(
        &self,
        img: &P,
        sigma: f64,
        b: BoundaryPolicy,
    ) -> Result<SignedImage> {
        match self.strategy {
            Strategy::Separable => self.engine.convolve_separable(img, &gaussian_1d(sigma)?, b),
            Strategy::Direct => self.engine.convolve2d(img, &gaussian_2d(sigma)?, b),
        }
    }

    pub fn lowpass(&self, img: &Image, sigma: f64, b: BoundaryPolicy) -> Result<Image> {
        Ok(self.blur(img, sigma, b)?.clamp_to_image())
    }

    pub fn highpass(
        &self,
        img: &Image,
        sigma: f64,
        mode: HighpassMode,
        b: BoundaryPolicy,
    ) -> Result<SignedImage> {
        match mode {
            HighpassMode::Subtract => {
                let low = self.lowpass(img, sigma, b)?;
                let (w, h, _) = img.dims();
                let planes = img
                    .planes()
                    .iter()
                    .zip(low.planes())
                    .map(|(p, l)| p.iter().zip(l).map(|(a, b)| a - b).collect())
                    .collect();
                SignedImage::from_planes(w, h, planes)
            }
            HighpassMode::Log => self.log_response(img, sigma, b),
        }
    }

    fn log_response(&self, img: &Image, sigma: f64, b: BoundaryPolicy) -> Result<SignedImage> {
        let k = log_2d(sigma)?;
        match self.strategy {
            Strategy::Direct => self.engine.convolve2d(img, &k, b),
            Strategy::Separable => {
                let terms = k
                    .log_separable_terms()
                    .expect("log kernel has separable terms");
                let e = &self.engine;
                let mut acc = e.convolve_separable_pair(img, &terms.second, &terms.gauss, b)?;
                let other = e.convolve_separable_pair(img, &terms.gauss, &terms.second, b)?;
                let ones = vec![1.0; k.size()];
                let boxed = e.convolve_separable_pair(img, &ones, &ones, b)?;
                for c in 0..acc.channels() {
                    let (o, bx) = (other.plane(c), boxed.plane(c));
                    for (i, a) in acc.plane_mut(c).iter_mut().enumerate() {
                        *a = *a + o[i] - terms.dc * bx[i];
                    }
                }
                Ok(acc)
            }
        }
    }

    pub fn hybrid(&self, low_src: &Image, high_src: &Image, spec: &BlendSpec) -> Result<Image> {
        spec.validate()?;
        if low_src.dims() != high_src.dims() {
            let (a, b) = (low_src.dims(), high_src.dims());
            return Err(Error::DimensionMismatch(a.0, a.1, a.2, b.0, b.1, b.2));
        }
        let (low, high) = self.layers(low_src, high_src, spec)?;
        Ok(blend(&low, &high, spec.weight))
    }

    /// The two hybrid ingredients: lowpass of `low_src`, signed high-pass of
    /// `high_src`.
    pub fn layers(
        &self,
        low_src: &Image,
        high_src: &Image,
        spec: &BlendSpec,
    ) -> Result<(Image, SignedImage)> {
        let low = || self.lowpass(low_src, spec.sigma_low, spec.boundary);
        let high = || self.highpass(high_src, spec.sigma_high, spec.highpass_mode, spec.boundary);
        let (low, high) = match self.engine.execution {
            Execution::Parallel => rayon::join(low, high),
            Execution::Serial => (low(), high()),
        };
        Ok((low?, high?))
    }
}

/// `clamp(w·low + (1 - w)·(high + 0.5))`, sample by sample.
pub fn blend(low: &Image, high: &SignedImage, weight: f64) -> Image {
    let mut out = low.clone();
    for c in 0..out.channels() {
        let h = high.plane(c);
        for (i, v) in out.plane_mut(c).iter_mut().enumerate() {
            *v = clamp_unit(weight * *v + (1.0 - weight) * display_offset(h[i]));
        }
    }
    out
}

pub fn lowpass(img: &Image, sigma: f64, b: BoundaryPolicy) -> Result<Image> {
    Filters::default().lowpass(img, sigma, b)
}

pub fn highpass(
    img: &Image,
    sigma: f64,
    mode: HighpassMode,
    b: BoundaryPolicy,
) -> Result<SignedImage> {
    Filters::default().highpass(img, sigma, mode, b)
}

pub fn hybrid(low_src: &Image, high_src: &Image, spec: &BlendSpec) -> Result<Image> {
    Filters::default().hybrid(low_src, high_src, spec)
}

/// Residuals below this magnitude are rounding noise from a kernel whose
/// taps do not sum to exactly 1 in floating point.
const RESIDUAL_NOISE: f64 = 1e-12;

/// `s + 0.5`, with noise-level residuals pinned to exactly 0.5 so flat regions
/// quantize to 128 instead of flickering between 127 and 128.
fn display_offset(s: f64) -> f64 {
    if s.abs() < RESIDUAL_NOISE {
        0.5
    } else {
        s + 0.5
    }
}

/// Shifts a residual by +0.5 and clamps, so zero response is mid-gray.
pub fn visualize_signed(s: &SignedImage) -> Image {
    let mut out = s.clone();
    out.map_in_place(display_offset);
    out.clamp_to_image()
}

/// Mean squared difference between `img` and its lowpass: the energy removed
/// by the blur.
pub fn high_frequency_energy(img: &Image, sigma: f64, b: BoundaryPolicy) -> Result<f64> {
    let low = lowpass(img, sigma, b)?;
    let n = img.planes().iter().map(Vec::len).sum::<usize>() as f64;
    let sum: f64 = img
        .planes()
        .iter()
        .flatten()
        .zip(low.planes().iter().flatten())
        .map(|(a, b)| (a - b) * (a - b))
        .sum();
    Ok(sum / n)
}

/// Downscales whichever image is larger so both take the per-axis minimum
/// size. Never upscales.
pub fn match_dimensions(a: &Image, b: &Image) -> Result<(Image, Image)> {
    if a.channels() != b.channels() {
        return Err(Error::ChannelMismatch(a.channels(), b.channels()));
    }
    let w = a.width().min(b.width());
    let h = a.height().min(b.height());
    Ok((resize_bilinear(a, w, h)?, resize_bilinear(b, w, h)?))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PyramidSpec {
    pub levels: usize,
    /// Size of each level relative to the previous one, in `(0, 1)`.
    pub scale_factor: f64,
    /// White columns between levels.
    pub gap_px: usize,
}

impl Default for PyramidSpec {
    fn default() -> Self {
        Self {
            levels: 4,
            scale_factor: 0.5,
            gap_px: 8,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Pyramid {
    pub strip: Image,
    /// Levels actually drawn; fewer than requested when a level would shrink
    /// below 1×1.
    pub levels: usize,
    pub level_sizes: Vec<(usize, usize)>,
}

/// Lays out successively downscaled copies left to right, bottom-aligned on a
/// white background.
pub fn scale_pyramid(img: &Image, spec: &PyramidSpec) -> Result<Pyramid> {
    if spec.levels == 0 {
        return Err(Error::invalid("levels", "at least one level is required"));
    }
    if !(spec.scale_factor > 0.0 && spec.scale_factor < 1.0) {
        return Err(Error::invalid(
            "scale_factor",
            format!("must lie in (0, 1), got {}", spec.scale_factor),
        ));
    }
    let mut levels = vec![img.clone()];
    while levels.len() < spec.levels {
        let prev = levels.last().expect("non-empty");
        let w = (prev.width() as f64 * spec.scale_factor).round() as usize;
        let h = (prev.height() as f64 * spec.scale_factor).round() as usize;
        if w == 0 || h == 0 {
            break;
        }
        levels.push(resize_bilinear(prev, w, h)?);
    }
    let width = levels.iter().map(Planar::width).sum::<usize>() + spec.gap_px * (levels.len() - 1);
    let height = img.height();
    let mut strip = Image::filled(width, height, img.channels(), 1.0)?;
    let mut x0 = 0;
    for level in &levels {
        let y0 = height - level.height();
        for c in 0..img.channels() {
            for y in 0..level.height() {
                for x in 0..level.width() {
                    strip.set(x0 + x, y0 + y, c, level.get(x, y, c));
                }
            }
        }
        x0 += level.width() + spec.gap_px;
    }
    Ok(Pyramid {
        strip,
        levels: levels.len(),
        level_sizes: levels.iter().map(|l| (l.width(), l.height())).collect(),
    })
}
