//! Planar floating-point rasters.
//!
//! An [`Image`] holds one row-major plane per channel with samples nominally
//! in `[0, 1]`. A [`SignedImage`] has the same layout but carries unrestricted
//! values, e.g. high-pass residuals before they are offset for display.

use crate::error::{Error, Result};

/// Read access shared by [`Image`] and [`SignedImage`].
pub trait Planar {
    fn width(&self) -> usize;
    fn height(&self) -> usize;
    fn plane(&self, channel: usize) -> &[f64];

    fn channels(&self) -> usize;

    fn dims(&self) -> (usize, usize, usize) {
        (self.width(), self.height(), self.channels())
    }
}

#[derive(Debug, Clone, PartialEq)]
struct Planes {
    width: usize,
    height: usize,
    data: Vec<Vec<f64>>,
}

impl Planes {
    fn new(width: usize, height: usize, data: Vec<Vec<f64>>) -> Result<Self> {
        if width == 0 || height == 0 {
            return Err(Error::invalid(
                "dimensions",
                format!("{width}x{height} has no pixels"),
            ));
        }
        if !matches!(data.len(), 1 | 3) {
            return Err(Error::invalid(
                "channels",
                format!("expected 1 or 3 channels, got {}", data.len()),
            ));
        }
        let n = width * height;
        if let Some((c, p)) = data.iter().enumerate().find(|(_, p)| p.len() != n) {
            return Err(Error::invalid(
                "planes",
                format!("plane {c} has {} samples, expected {n}", p.len()),
            ));
        }
        Ok(Self {
            width,
            height,
            data,
        })
    }
}

macro_rules! raster {
    ($name:ident) => {
        impl $name {
            /// Builds a raster from per-channel row-major planes.
            pub fn from_planes(width: usize, height: usize, planes: Vec<Vec<f64>>) -> Result<Self> {
                Planes::new(width, height, planes).map(Self)
            }

            /// A raster with every sample set to `value`.
            pub fn filled(
                width: usize,
                height: usize,
                channels: usize,
                value: f64,
            ) -> Result<Self> {
                Self::from_planes(width, height, vec![vec![value; width * height]; channels])
            }

            /// Builds a raster by evaluating `f(x, y, channel)` for every sample.
            pub fn from_fn(
                width: usize,
                height: usize,
                channels: usize,
                mut f: impl FnMut(usize, usize, usize) -> f64,
            ) -> Result<Self> {
                let planes = (0..channels)
                    .map(|c| {
                        (0..width * height)
                            .map(|i| f(i % width, i / width, c))
                            .collect()
                    })
                    .collect();
                Self::from_planes(width, height, planes)
            }

            #[inline]
            pub fn get(&self, x: usize, y: usize, channel: usize) -> f64 {
                self.0.data[channel][y * self.0.width + x]
            }

            #[inline]
            pub fn set(&mut self, x: usize, y: usize, channel: usize, value: f64) {
                let w = self.0.width;
                self.0.data[channel][y * w + x] = value;
            }

            pub fn plane_mut(&mut self, channel: usize) -> &mut [f64] {
                &mut self.0.data[channel]
            }

            pub fn planes(&self) -> &[Vec<f64>] {
                &self.0.data
            }

            pub fn into_planes(self) -> Vec<Vec<f64>> {
                self.0.data
            }

            /// Applies `f` to every sample in place.
            pub fn map_in_place(&mut self, mut f: impl FnMut(f64) -> f64) {
                for plane in &mut self.0.data {
                    for v in plane.iter_mut() {
                        *v = f(*v);
                    }
                }
            }
        }

        impl Planar for $name {
            fn width(&self) -> usize {
                self.0.width
            }
            fn height(&self) -> usize {
                self.0.height
            }
            fn channels(&self) -> usize {
                self.0.data.len()
            }
            fn plane(&self, channel: usize) -> &[f64] {
                &self.0.data[channel]
            }
        }
    };
}

/// Owned raster with samples in `[0, 1]`; 1 (gray) or 3 (RGB) channels.
#[derive(Debug, Clone, PartialEq)]
pub struct Image(Planes);

/// Raster whose samples may take any real value.
#[derive(Debug, Clone, PartialEq)]
pub struct SignedImage(Planes);

raster!(Image);
raster!(SignedImage);

impl Image {
    pub fn to_signed(&self) -> SignedImage {
        SignedImage(self.0.clone())
    }

    pub fn into_signed(self) -> SignedImage {
        SignedImage(self.0)
    }

    /// Smallest and largest sample over all channels.
    pub fn value_range(&self) -> (f64, f64) {
        self.0
            .data
            .iter()
            .flatten()
            .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &v| {
                (lo.min(v), hi.max(v))
            })
    }
}

impl SignedImage {
    /// Clamps every sample into `[0, 1]`.
    pub fn clamp_to_image(mut self) -> Image {
        self.map_in_place(clamp_unit);
        Image(self.0)
    }
}

#[inline]
pub(crate) fn clamp_unit(v: f64) -> f64 {
    v.clamp(0.0, 1.0)
}
