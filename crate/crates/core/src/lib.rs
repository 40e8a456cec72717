//! Gaussian and Laplacian-of-Gaussian filtering, hybrid-image synthesis and
//! filter benchmarking.
//!
//! ```
//! use hybridkit::{hybrid, BlendSpec, Image};
//!
//! let low = Image::filled(64, 64, 3, 0.2).unwrap();
//! let high = Image::filled(64, 64, 3, 0.8).unwrap();
//! let out = hybrid(&low, &high, &BlendSpec::default()).unwrap();
//! assert!((out.get(10, 10, 0) - 0.35).abs() < 1e-12);
//! ```

pub mod bench;
pub mod convolve;
pub mod error;
pub mod filters;
pub mod image;
pub mod image_io;
pub mod kernels;

pub use convolve::{convolve2d, convolve_separable, BoundaryPolicy, Engine, Execution, TapCounter};
pub use error::{Error, Result};
pub use filters::{
    blend, high_frequency_energy, highpass, hybrid, lowpass, match_dimensions, scale_pyramid,
    visualize_signed, BlendSpec, Filters, HighpassMode, Pyramid, PyramidSpec, Strategy,
};
pub use image::{Image, Planar, SignedImage};
pub use image_io::{load, load_path, resize_bilinear, save, EncodedFormat};
pub use kernels::{size_rule, Kernel1D, Kernel2D, KernelKind, MAX_SIGMA};
