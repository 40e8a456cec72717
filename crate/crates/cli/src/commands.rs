use std::fmt;
use std::io::Write as _;
use std::net::SocketAddr;
use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use hybridkit::bench::{self, BenchConfig, BenchImage, SystemClock};
use hybridkit::kernels::{binomial3, gaussian_2d, log_2d};
use hybridkit::{
    highpass, hybrid, image_io, lowpass, match_dimensions, scale_pyramid, visualize_signed,
    BlendSpec, EncodedFormat, Image, PyramidSpec,
};

use crate::{Command, DumpKind};

/// Problems with the invocation itself rather than the computation.
#[derive(Debug)]
pub struct UsageError(pub String);

impl fmt::Display for UsageError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for UsageError {}

fn usage(msg: impl Into<String>) -> anyhow::Error {
    UsageError(msg.into()).into()
}

fn read_input(path: &Path) -> Result<Vec<u8>> {
    if !path.is_file() {
        return Err(usage(format!("input file not found: {}", path.display())));
    }
    std::fs::read(path).with_context(|| format!("reading {}", path.display()))
}

fn load_image(path: &Path) -> Result<Image> {
    let bytes = read_input(path)?;
    image_io::load(&bytes).with_context(|| format!("decoding {}", path.display()))
}

fn output_format(path: &Path) -> Result<EncodedFormat> {
    EncodedFormat::from_path(path).ok_or_else(|| {
        usage(format!(
            "cannot infer image format of {}; use .png, .ppm or .pgm",
            path.display()
        ))
    })
}

/// Writes to a sibling temp file and renames it into place, so a failed run
/// never leaves a partial output.
fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let dir = match path.parent() {
        Some(p) if !p.as_os_str().is_empty() => p.to_path_buf(),
        _ => PathBuf::from("."),
    };
    let mut tmp = tempfile::NamedTempFile::new_in(&dir)
        .with_context(|| format!("creating temporary file in {}", dir.display()))?;
    tmp.write_all(bytes)
        .with_context(|| format!("writing {}", path.display()))?;
    tmp.persist(path)
        .with_context(|| format!("writing {}", path.display()))?;
    Ok(())
}

fn save_image(img: &Image, path: &Path, fmt: EncodedFormat) -> Result<()> {
    write_atomic(path, &image_io::save(img, fmt)?)
}

fn corpus(dir: &Path) -> Result<Vec<BenchImage>> {
    if !dir.is_dir() {
        return Err(usage(format!(
            "corpus directory not found: {}",
            dir.display()
        )));
    }
    let mut paths: Vec<PathBuf> = std::fs::read_dir(dir)
        .with_context(|| format!("listing {}", dir.display()))?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.is_file() && EncodedFormat::from_path(p).is_some())
        .collect();
    if paths.is_empty() {
        return Err(usage(format!(
            "corpus directory {} contains no .png/.ppm/.pgm images",
            dir.display()
        )));
    }
    paths.sort();
    paths
        .into_iter()
        .map(|p| {
            let id = p.file_name().expect("file").to_string_lossy().into_owned();
            Ok(BenchImage::new(id, load_image(&p)?))
        })
        .collect()
}

fn dump_kernel(kind: DumpKind, sigma: f64) -> Result<String> {
    let k = match kind {
        DumpKind::Gaussian => gaussian_2d(sigma)?,
        DumpKind::Log => log_2d(sigma)?,
        DumpKind::Binomial3 => binomial3(),
    };
    let mut out = String::new();
    for row in k.taps().chunks(k.size()) {
        let cells: Vec<String> = row.iter().map(|v| format!("{v:.16e}")).collect();
        out.push_str(&cells.join(" "));
        out.push('\n');
    }
    out.push_str(&format!("sum {:.16e}\n", k.sum()));
    Ok(out)
}

pub fn run(command: Command) -> Result<()> {
    match command {
        Command::Blur {
            input,
            output,
            sigma,
            boundary,
        } => {
            let fmt = output_format(&output)?;
            let img = load_image(&input)?;
            save_image(&lowpass(&img, sigma, boundary)?, &output, fmt)
        }
        Command::Highpass {
            input,
            output,
            sigma,
            mode,
            boundary,
        } => {
            let fmt = output_format(&output)?;
            let img = load_image(&input)?;
            let h = highpass(&img, sigma, mode, boundary)?;
            save_image(&visualize_signed(&h), &output, fmt)
        }
        Command::Hybrid {
            input_low,
            input_high,
            output,
            sigma_low,
            sigma_high,
            weight,
            mode,
            boundary,
            pyramid_levels,
        } => {
            if pyramid_levels == 0 {
                return Err(usage("--pyramid-levels must be at least 1"));
            }
            let fmt = output_format(&output)?;
            let low = load_image(&input_low)?;
            let high = load_image(&input_high)?;
            let (low, high) = match_dimensions(&low, &high)?;
            let spec = BlendSpec {
                sigma_low,
                sigma_high,
                weight,
                highpass_mode: mode,
                boundary,
            };
            let mut out = hybrid(&low, &high, &spec)?;
            if pyramid_levels > 1 {
                let p = scale_pyramid(
                    &out,
                    &PyramidSpec {
                        levels: pyramid_levels,
                        ..PyramidSpec::default()
                    },
                )?;
                if p.levels < pyramid_levels {
                    eprintln!(
                        "note: only {} of {pyramid_levels} pyramid levels fit before reaching 1 px",
                        p.levels
                    );
                }
                out = p.strip;
            }
            save_image(&out, &output, fmt)
        }
        Command::Bench {
            corpus: dir,
            synthetic,
            seed,
            sigmas,
            kinds,
            strategies,
            repetitions,
            parallel,
            note,
            out,
        } => {
            let images = if synthetic {
                hybridkit_bench::synthetic_corpus(&hybridkit_bench::SYNTHETIC_SIZES, seed)
            } else {
                corpus(
                    dir.as_deref()
                        .expect("clap requires --corpus or --synthetic"),
                )?
            };
            let mut config = BenchConfig {
                kinds: kinds.into_iter().map(Into::into).collect(),
                strategies,
                repetitions,
                parallel,
                note,
                ..BenchConfig::default()
            };
            if !sigmas.is_empty() {
                config.sigmas = sigmas;
            }
            let suite = bench::run_bench(&images, &config, &SystemClock::default())?;
            let skipped = suite.records.iter().filter(|r| r.is_skipped()).count();
            write_atomic(&out, &bench::save_suite(&suite)?)?;
            eprintln!(
                "wrote {} records ({skipped} skipped) to {}",
                suite.records.len(),
                out.display()
            );
            Ok(())
        }
        Command::Plot { input, output } => {
            let bytes = read_input(&input)?;
            let suite = bench::load_suite(&bytes)
                .with_context(|| format!("loading {}", input.display()))?;
            write_atomic(&output, bench::plot_scatter(&suite)?.as_bytes())
        }
        Command::KernelDump { kind, sigma } => {
            print!("{}", dump_kernel(kind, sigma)?);
            Ok(())
        }
        Command::Serve {
            port,
            host,
            max_sessions,
            ui_dir,
        } => {
            if let Some(dir) = &ui_dir {
                if !dir.is_dir() {
                    return Err(usage(format!("UI directory not found: {}", dir.display())));
                }
            }
            let addr = SocketAddr::new(host, port);
            let config = hybridkit_service::ServiceConfig {
                max_sessions: max_sessions as usize,
                static_dir: ui_dir,
            };
            let rt = tokio::runtime::Runtime::new().context("starting async runtime")?;
            eprintln!("listening on http://{addr}");
            rt.block_on(hybridkit_service::serve(addr, config))
                .with_context(|| format!("serving on {addr}"))
        }
    }
}
