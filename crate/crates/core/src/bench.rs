//! Filter timing across image sizes and kernel scales.
//!
//! [`run_bench`] times one filter call per (image, sigma, kind, strategy)
//! combination and keeps the minimum over `repetitions` runs. Only the
//! filter is timed; decoding and encoding happen outside the measured
//! region. Results persist as JSON ([`save_suite`], [`load_suite`]) and plot
//! as an SVG scatter of time against `width·height·channels`
//! ([`plot_scatter`]).

use std::collections::BTreeMap;
use std::fmt::{self, Write as _};
use std::str::FromStr;
use std::sync::atomic::{AtomicU64, Ordering};
use std::time::{Duration, Instant};

use serde::{Deserialize, Serialize};

use crate::convolve::{BoundaryPolicy, Engine, Execution};
use crate::error::{Error, Result};
use crate::filters::{Filters, HighpassMode, Strategy};
use crate::image::{Image, Planar};

/// Kernel scales swept by default.
pub const DEFAULT_SIGMAS: [f64; 9] = [2.0, 4.0, 5.0, 7.0, 10.0, 15.0, 20.0, 25.0, 30.0];
pub const DEFAULT_REPETITIONS: u32 = 3;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FilterKind {
    Lowpass,
    HighpassSubtract,
    HighpassLog,
}

impl FilterKind {
    pub const ALL: [FilterKind; 3] = [
        FilterKind::Lowpass,
        FilterKind::HighpassSubtract,
        FilterKind::HighpassLog,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            FilterKind::Lowpass => "lowpass",
            FilterKind::HighpassSubtract => "highpass_subtract",
            FilterKind::HighpassLog => "highpass_log",
        }
    }
}

impl fmt::Display for FilterKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for FilterKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        FilterKind::ALL
            .into_iter()
            .find(|k| k.as_str() == s)
            .ok_or_else(|| {
                Error::invalid(
                    "filter_kind",
                    format!("expected lowpass, highpass_subtract or highpass_log, got {s:?}"),
                )
            })
    }
}

/// One timed (image, sigma, kind, strategy) combination.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchRecord {
    pub image_id: String,
    pub width: u64,
    pub height: u64,
    pub channels: u64,
    /// `width · height · channels`
    pub size_metric: u64,
    pub sigma: f64,
    pub filter_kind: FilterKind,
    pub strategy: Strategy,
    /// Minimum over `repetitions` runs; 0 when skipped.
    pub elapsed_ns: u64,
    pub repetitions: u32,
    pub timestamp: String,
    /// Why the combination was not run (e.g. kernel larger than the image).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub skipped: Option<String>,
}

impl BenchRecord {
    pub fn is_skipped(&self) -> bool {
        self.skipped.is_some()
    }

    pub fn elapsed_ms(&self) -> f64 {
        self.elapsed_ns as f64 / 1e6
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchSuite {
    pub machine_note: String,
    pub records: Vec<BenchRecord>,
}

/// Monotonic time source plus wall-clock stamp, injectable for tests.
pub trait Clock {
    /// Monotonic time since an arbitrary origin.
    fn now(&self) -> Duration;
    /// UTC ISO-8601 timestamp.
    fn timestamp(&self) -> String;
}

#[derive(Debug)]
pub struct SystemClock {
    origin: Instant,
}

impl Default for SystemClock {
    fn default() -> Self {
        Self {
            origin: Instant::now(),
        }
    }
}

impl Clock for SystemClock {
    fn now(&self) -> Duration {
        self.origin.elapsed()
    }

    fn timestamp(&self) -> String {
        chrono::Utc::now().to_rfc3339_opts(chrono::SecondsFormat::Secs, true)
    }
}

/// Advances by a fixed step on every `now()` call.
#[derive(Debug)]
pub struct FakeClock {
    ticks: AtomicU64,
    step_ns: u64,
    stamp: String,
}

impl FakeClock {
    pub fn new(step_ns: u64, stamp: impl Into<String>) -> Self {
        Self {
            ticks: AtomicU64::new(0),
            step_ns,
            stamp: stamp.into(),
        }
    }
}

impl Clock for FakeClock {
    fn now(&self) -> Duration {
        let t = self.ticks.fetch_add(1, Ordering::Relaxed);
        Duration::from_nanos(t * self.step_ns)
    }

    fn timestamp(&self) -> String {
        self.stamp.clone()
    }
}

/// A named input image.
#[derive(Debug, Clone)]
pub struct BenchImage {
    pub id: String,
    pub image: Image,
}

impl BenchImage {
    pub fn new(id: impl Into<String>, image: Image) -> Self {
        Self {
            id: id.into(),
            image,
        }
    }
}

#[derive(Debug, Clone)]
pub struct BenchConfig {
    pub sigmas: Vec<f64>,
    pub kinds: Vec<FilterKind>,
    pub strategies: Vec<Strategy>,
    pub repetitions: u32,
    pub boundary: BoundaryPolicy,
    /// Row-parallel convolution. Off by default so records are comparable.
    pub parallel: bool,
    /// Free text appended to the generated machine note.
    pub note: Option<String>,
}

impl Default for BenchConfig {
    fn default() -> Self {
        Self {
            sigmas: DEFAULT_SIGMAS.to_vec(),
            kinds: vec![FilterKind::Lowpass, FilterKind::HighpassSubtract],
            strategies: vec![Strategy::Direct, Strategy::Separable],
            repetitions: DEFAULT_REPETITIONS,
            boundary: BoundaryPolicy::Replicate,
            parallel: false,
            note: None,
        }
    }
}

impl BenchConfig {
    fn validate(&self, images: &[BenchImage]) -> Result<()> {
        if images.is_empty() {
            return Err(Error::invalid("images", "at least one image is required"));
        }
        if self.sigmas.is_empty() {
            return Err(Error::invalid("sigmas", "at least one sigma is required"));
        }
        if let Some(s) = self.sigmas.iter().find(|s| !(s.is_finite() && **s > 0.0)) {
            return Err(Error::invalid(
                "sigmas",
                format!("{s} is not a positive number"),
            ));
        }
        if self.kinds.is_empty() {
            return Err(Error::invalid(
                "kinds",
                "at least one filter kind is required",
            ));
        }
        if self.strategies.is_empty() {
            return Err(Error::invalid(
                "strategies",
                "at least one strategy is required",
            ));
        }
        if self.repetitions == 0 {
            return Err(Error::invalid("repetitions", "must be at least 1"));
        }
        Ok(())
    }

    fn machine_note(&self) -> String {
        let threads = std::thread::available_parallelism().map_or(1, |n| n.get());
        let mut note = format!(
            "os={} arch={} threads={} execution={} boundary={}",
            std::env::consts::OS,
            std::env::consts::ARCH,
            threads,
            if self.parallel { "parallel" } else { "serial" },
            self.boundary,
        );
        if let Some(extra) = &self.note {
            note.push_str("; ");
            note.push_str(extra);
        }
        note
    }
}

fn run_filter(
    filters: &Filters,
    img: &Image,
    sigma: f64,
    kind: FilterKind,
    b: BoundaryPolicy,
) -> Result<()> {
    match kind {
        FilterKind::Lowpass => {
            std::hint::black_box(filters.lowpass(img, sigma, b)?);
        }
        FilterKind::HighpassSubtract => {
            std::hint::black_box(filters.highpass(img, sigma, HighpassMode::Subtract, b)?);
        }
        FilterKind::HighpassLog => {
            std::hint::black_box(filters.highpass(img, sigma, HighpassMode::Log, b)?);
        }
    }
    Ok(())
}

/// Times every (image × sigma × kind × strategy) combination, in that
/// nesting order.
///
/// Combinations whose kernel does not fit the image are recorded with
/// `skipped` set instead of being dropped.
pub fn run_bench(
    images: &[BenchImage],
    config: &BenchConfig,
    clock: &dyn Clock,
) -> Result<BenchSuite> {
    config.validate(images)?;
    let execution = if config.parallel {
        Execution::Parallel
    } else {
        Execution::Serial
    };
    let mut records = Vec::new();
    for input in images {
        let (w, h, c) = input.image.dims();
        for &sigma in &config.sigmas {
            for &kind in &config.kinds {
                for &strategy in &config.strategies {
                    let filters = Filters::new(
                        strategy,
                        Engine {
                            execution,
                            counter: None,
                        },
                    );
                    let mut best: Option<Duration> = None;
                    let mut skipped = None;
                    for _ in 0..config.repetitions {
                        let t0 = clock.now();
                        match run_filter(&filters, &input.image, sigma, kind, config.boundary) {
                            Ok(()) => {}
                            Err(e @ Error::KernelTooLarge { .. }) => {
                                skipped = Some(e.to_string());
                                break;
                            }
                            Err(e) => return Err(e),
                        }
                        let dt = clock.now().saturating_sub(t0);
                        best = Some(best.map_or(dt, |b| b.min(dt)));
                    }
                    records.push(BenchRecord {
                        image_id: input.id.clone(),
                        width: w as u64,
                        height: h as u64,
                        channels: c as u64,
                        size_metric: (w * h * c) as u64,
                        sigma,
                        filter_kind: kind,
                        strategy,
                        elapsed_ns: match skipped {
                            Some(_) => 0,
                            None => best.map_or(0, |d| d.as_nanos() as u64),
                        },
                        repetitions: config.repetitions,
                        timestamp: clock.timestamp(),
                        skipped,
                    });
                }
            }
        }
    }
    Ok(BenchSuite {
        machine_note: config.machine_note(),
        records,
    })
}

pub fn save_suite(suite: &BenchSuite) -> Result<Vec<u8>> {
    if suite.records.is_empty() {
        return Err(Error::EmptySuite);
    }
    let mut out = serde_json::to_vec_pretty(suite).map_err(|e| Error::Schema(e.to_string()))?;
    out.push(b'\n');
    Ok(out)
}

/// Parses a suite; unknown fields are ignored.
pub fn load_suite(bytes: &[u8]) -> Result<BenchSuite> {
    let suite: BenchSuite =
        serde_json::from_slice(bytes).map_err(|e| Error::Schema(e.to_string()))?;
    if suite.records.is_empty() {
        return Err(Error::EmptySuite);
    }
    for (i, r) in suite.records.iter().enumerate() {
        let expected = r
            .width
            .checked_mul(r.height)
            .and_then(|n| n.checked_mul(r.channels));
        if expected != Some(r.size_metric) {
            return Err(Error::Schema(format!(
                "record {i}: field `size_metric` is {} but width·height·channels is {}",
                r.size_metric,
                expected.map_or_else(|| "out of range".to_string(), |n| n.to_string())
            )));
        }
        if r.repetitions == 0 {
            return Err(Error::Schema(format!(
                "record {i}: field `repetitions` must be positive"
            )));
        }
        if !(r.sigma.is_finite() && r.sigma > 0.0) {
            return Err(Error::Schema(format!(
                "record {i}: field `sigma` must be positive"
            )));
        }
    }
    Ok(suite)
}

/// Spearman rank correlation with average ranks for ties. `None` for fewer
/// than two points, mismatched lengths, or a constant series.
pub fn spearman(xs: &[f64], ys: &[f64]) -> Option<f64> {
    if xs.len() != ys.len() || xs.len() < 2 {
        return None;
    }
    let (rx, ry) = (ranks(xs), ranks(ys));
    let n = rx.len() as f64;
    let (mx, my) = (rx.iter().sum::<f64>() / n, ry.iter().sum::<f64>() / n);
    let mut cov = 0.0;
    let mut vx = 0.0;
    let mut vy = 0.0;
    for (a, b) in rx.iter().zip(&ry) {
        cov += (a - mx) * (b - my);
        vx += (a - mx) * (a - mx);
        vy += (b - my) * (b - my);
    }
    if vx == 0.0 || vy == 0.0 {
        return None;
    }
    Some(cov / (vx * vy).sqrt())
}

fn ranks(v: &[f64]) -> Vec<f64> {
    let mut idx: Vec<usize> = (0..v.len()).collect();
    idx.sort_by(|&a, &b| v[a].total_cmp(&v[b]));
    let mut out = vec![0.0; v.len()];
    let mut i = 0;
    while i < idx.len() {
        let mut j = i;
        while j + 1 < idx.len() && v[idx[j + 1]] == v[idx[i]] {
            j += 1;
        }
        // 1-based average rank of the tie group
        let rank = (i + j) as f64 / 2.0 + 1.0;
        for &k in &idx[i..=j] {
            out[k] = rank;
        }
        i = j + 1;
    }
    out
}

const PALETTE: [&str; 10] = [
    "#1f77b4", "#ff7f0e", "#2ca02c", "#d62728", "#9467bd", "#8c564b", "#e377c2", "#7f7f7f",
    "#bcbd22", "#17becf",
];

fn sigma_color(index: usize, count: usize) -> String {
    if count <= PALETTE.len() {
        PALETTE[index].to_string()
    } else {
        format!("hsl({:.1},65%,45%)", 360.0 * index as f64 / count as f64)
    }
}

fn xml_escape(s: &str) -> String {
    s.replace('&', "&amp;")
        .replace('<', "&lt;")
        .replace('>', "&gt;")
        .replace('"', "&quot;")
}

/// Rounds `max` up to a 1/2/5 multiple so tick labels stay short.
fn nice_ceiling(max: f64) -> f64 {
    if max <= 0.0 {
        return 1.0;
    }
    let mag = 10f64.powf(max.log10().floor());
    [1.0, 2.0, 5.0, 10.0]
        .into_iter()
        .map(|m| m * mag)
        .find(|&v| v >= max)
        .unwrap_or(10.0 * mag)
}

fn fmt_tick(v: f64) -> String {
    if v == 0.0 {
        "0".to_string()
    } else if v.abs() >= 1e5 {
        format!("{v:.2e}")
    } else if v.fract() == 0.0 {
        format!("{v:.0}")
    } else {
        format!("{v:.3}")
            .trim_end_matches('0')
            .trim_end_matches('.')
            .to_string()
    }
}

const PANEL_W: f64 = 420.0;
const PANEL_H: f64 = 320.0;
const MARGIN_L: f64 = 70.0;
const MARGIN_T: f64 = 40.0;
const MARGIN_B: f64 = 50.0;
const LEGEND_W: f64 = 150.0;

/// Time (ms) against size metric, one panel per filter kind.
///
/// Every timed record becomes one `<circle>`; skipped records are not drawn.
/// Fill color is keyed by sigma; direct-strategy points get a dark outline.
/// Output depends only on the suite contents.
pub fn plot_scatter(suite: &BenchSuite) -> Result<String> {
    if suite.records.is_empty() {
        return Err(Error::EmptySuite);
    }
    let mut sigmas: Vec<f64> = suite.records.iter().map(|r| r.sigma).collect();
    sigmas.sort_by(f64::total_cmp);
    sigmas.dedup();

    let mut by_kind: BTreeMap<FilterKind, Vec<&BenchRecord>> = BTreeMap::new();
    for r in &suite.records {
        by_kind.entry(r.filter_kind).or_default();
        if !r.is_skipped() {
            by_kind.get_mut(&r.filter_kind).expect("inserted").push(r);
        }
    }
    for points in by_kind.values_mut() {
        points.sort_by(|a, b| {
            a.image_id
                .cmp(&b.image_id)
                .then(a.sigma.total_cmp(&b.sigma))
                .then(a.strategy.cmp(&b.strategy))
                .then(a.size_metric.cmp(&b.size_metric))
        });
    }

    let timed = || suite.records.iter().filter(|r| !r.is_skipped());
    let x_max = nice_ceiling(timed().map(|r| r.size_metric as f64).fold(0.0, f64::max));
    let y_max = nice_ceiling(timed().map(BenchRecord::elapsed_ms).fold(0.0, f64::max));

    let cell_w = MARGIN_L + PANEL_W + 20.0;
    let width = cell_w * by_kind.len() as f64 + LEGEND_W;
    let height = MARGIN_T + PANEL_H + MARGIN_B;

    let mut s = String::new();
    let _ = writeln!(s, r#"<?xml version="1.0" encoding="UTF-8"?>"#);
    let _ = writeln!(
        s,
        r#"<svg xmlns="http://www.w3.org/2000/svg" version="1.1" width="{width:.0}" height="{height:.0}" viewBox="0 0 {width:.0} {height:.0}" font-family="sans-serif" font-size="11">"#
    );
    let _ = writeln!(
        s,
        r#"<rect x="0" y="0" width="{width:.0}" height="{height:.0}" fill="white"/>"#
    );

    for (panel, (kind, points)) in by_kind.iter().enumerate() {
        let ox = panel as f64 * cell_w + MARGIN_L;
        let oy = MARGIN_T;
        let _ = writeln!(s, r#"<g class="panel" data-kind="{kind}">"#);
        let _ = writeln!(
            s,
            r#"<text x="{:.1}" y="{:.1}" text-anchor="middle" font-size="13">Time vs size: {kind}</text>"#,
            ox + PANEL_W / 2.0,
            oy - 14.0
        );
        let _ = writeln!(
            s,
            r##"<rect x="{ox:.1}" y="{oy:.1}" width="{PANEL_W:.1}" height="{PANEL_H:.1}" fill="none" stroke="#333"/>"##
        );
        for i in 0..=5 {
            let f = i as f64 / 5.0;
            let gx = ox + f * PANEL_W;
            let gy = oy + PANEL_H - f * PANEL_H;
            let _ = writeln!(
                s,
                r##"<line x1="{gx:.1}" y1="{:.1}" x2="{gx:.1}" y2="{:.1}" stroke="#333"/><text x="{gx:.1}" y="{:.1}" text-anchor="middle">{}</text>"##,
                oy + PANEL_H,
                oy + PANEL_H + 5.0,
                oy + PANEL_H + 18.0,
                fmt_tick(f * x_max)
            );
            let _ = writeln!(
                s,
                r##"<line x1="{:.1}" y1="{gy:.1}" x2="{ox:.1}" y2="{gy:.1}" stroke="#333"/><text x="{:.1}" y="{:.1}" text-anchor="end">{}</text>"##,
                ox - 5.0,
                ox - 8.0,
                gy + 4.0,
                fmt_tick(f * y_max)
            );
        }
        let _ = writeln!(
            s,
            r#"<text x="{:.1}" y="{:.1}" text-anchor="middle">size (width × height × channels)</text>"#,
            ox + PANEL_W / 2.0,
            oy + PANEL_H + 38.0
        );
        let _ = writeln!(
            s,
            r#"<text x="{:.1}" y="{:.1}" text-anchor="middle" transform="rotate(-90 {:.1} {:.1})">time (ms)</text>"#,
            ox - 52.0,
            oy + PANEL_H / 2.0,
            ox - 52.0,
            oy + PANEL_H / 2.0
        );
        for r in points {
            let si = sigmas
                .iter()
                .position(|&v| v == r.sigma)
                .expect("sigma listed");
            let cx = ox + r.size_metric as f64 / x_max * PANEL_W;
            let cy = oy + PANEL_H - r.elapsed_ms() / y_max * PANEL_H;
            let stroke = match r.strategy {
                Strategy::Direct => r##" stroke="#111" stroke-width="1.5""##,
                Strategy::Separable => "",
            };
            let _ = writeln!(
                s,
                r#"<circle class="point" data-kind="{kind}" data-image="{}" data-sigma="{}" data-strategy="{}" cx="{cx:.2}" cy="{cy:.2}" r="4" fill="{}"{stroke}/>"#,
                xml_escape(&r.image_id),
                r.sigma,
                r.strategy,
                sigma_color(si, sigmas.len()),
            );
        }
        let _ = writeln!(s, "</g>");
    }

    let lx = cell_w * by_kind.len() as f64 + 10.0;
    let _ = writeln!(s, r#"<g class="legend">"#);
    let _ = writeln!(
        s,
        r#"<text x="{lx:.1}" y="{:.1}" font-size="12">sigma</text>"#,
        MARGIN_T
    );
    for (i, sigma) in sigmas.iter().enumerate() {
        let y = MARGIN_T + 10.0 + i as f64 * 16.0;
        let _ = writeln!(
            s,
            r#"<rect x="{lx:.1}" y="{y:.1}" width="10" height="10" fill="{}"/><text x="{:.1}" y="{:.1}">{}</text>"#,
            sigma_color(i, sigmas.len()),
            lx + 16.0,
            y + 9.0,
            sigma
        );
    }
    let y = MARGIN_T + 20.0 + sigmas.len() as f64 * 16.0;
    let _ = writeln!(
        s,
        r##"<rect x="{lx:.1}" y="{y:.1}" width="10" height="10" fill="#ccc" stroke="#111" stroke-width="1.5"/><text x="{:.1}" y="{:.1}">direct</text>"##,
        lx + 16.0,
        y + 9.0
    );
    let _ = writeln!(
        s,
        r##"<rect x="{lx:.1}" y="{:.1}" width="10" height="10" fill="#ccc"/><text x="{:.1}" y="{:.1}">separable</text>"##,
        y + 16.0,
        lx + 16.0,
        y + 25.0
    );
    let _ = writeln!(s, "</g>");
    let _ = writeln!(s, "</svg>");
    Ok(s)
}
