//! Experiment harness: synthetic-shift precision sweeps, brightness
//! robustness and integer-match audits.

use std::collections::{BTreeMap, HashSet};
use std::io::Write;
use std::path::Path;
use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Deserializer, Serialize};

use crate::error::{Error, Result};
use crate::features::{detect_features, redetection_rate, Feature};
use crate::image::{apply_brightness, clip, subpixel_shift, GrayImage, ShiftSpec};
use crate::matching::{match_features, Match, MatchConfig};
use crate::phase_congruency::{compute_phase_congruency, PcConfig, PhaseCongruencyResult};
use crate::poc::{refine_matches, PocConfig, RefineSource, RefineStatus};

/// Parameter grid of a shift sweep.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepSpec {
    /// Shifts in pixels. In JSON either a list or `{"start", "stop", "step"}`.
    #[serde(deserialize_with = "deserialize_deltas")]
    pub deltas: Vec<f64>,
    #[serde(alias = "windows")]
    pub window_sizes: Vec<usize>,
    pub gammas: Vec<f64>,
    #[serde(default = "default_taus")]
    pub taus: Vec<f64>,
    /// Defaults to the largest window.
    #[serde(default)]
    pub border_margin: Option<usize>,
    /// Integer matching searches `floor(delta) - slack ..= ceil(delta) + slack`.
    #[serde(default = "default_slack")]
    pub disparity_slack: i64,
    /// Records wall-clock runtimes. Off by default so reports stay reproducible.
    #[serde(default)]
    pub timing: bool,
    /// Per shift, scores at most this many evaluable features, taken at an
    /// even stride in row-major order. Matching still sees every feature.
    #[serde(default)]
    pub max_features: Option<usize>,
}

pub fn default_taus() -> Vec<f64> {
    vec![0.5, 0.25, 0.1, 0.05]
}

fn default_slack() -> i64 {
    2
}

#[derive(Deserialize)]
#[serde(untagged)]
enum DeltaList {
    List(Vec<f64>),
    Range { start: f64, stop: f64, step: f64 },
}

fn deserialize_deltas<'de, D: Deserializer<'de>>(de: D) -> std::result::Result<Vec<f64>, D::Error> {
    match DeltaList::deserialize(de)? {
        DeltaList::List(v) => Ok(v),
        DeltaList::Range { start, stop, step } => delta_range(start, stop, step).map_err(serde::de::Error::custom),
    }
}

/// `start, start + step, ..., stop` (inclusive, computed without accumulation).
pub fn delta_range(start: f64, stop: f64, step: f64) -> Result<Vec<f64>> {
    if !(step > 0.0) || !(stop >= start) || !start.is_finite() || !stop.is_finite() {
        return Err(Error::Spec(format!("bad delta range {start}..{stop} step {step}")));
    }
    let n = ((stop - start) / step + 1e-9).floor() as usize;
    Ok((0..=n).map(|i| start + i as f64 * step).collect())
}

impl SweepSpec {
    pub fn new(deltas: Vec<f64>, window_sizes: Vec<usize>, gammas: Vec<f64>) -> Self {
        Self {
            deltas,
            window_sizes,
            gammas,
            taus: default_taus(),
            border_margin: None,
            disparity_slack: default_slack(),
            timing: false,
            max_features: None,
        }
    }

    pub fn margin(&self) -> usize {
        self.border_margin
            .unwrap_or_else(|| self.window_sizes.iter().copied().max().unwrap_or(0))
    }

    pub fn validate(&self) -> Result<()> {
        if self.deltas.is_empty() || self.window_sizes.is_empty() || self.gammas.is_empty() || self.taus.is_empty() {
            return Err(Error::Spec("deltas, window sizes, gammas and taus must be non-empty".into()));
        }
        if let Some(d) = self.deltas.iter().find(|d| !(d.is_finite() && **d >= 0.0)) {
            return Err(Error::Spec(format!("shift {d} is not a non-negative number")));
        }
        if let Some(w) = self.window_sizes.iter().find(|w| **w < 3 || **w % 2 == 0) {
            return Err(Error::Spec(format!("window size {w} must be odd and at least 3")));
        }
        if let Some(g) = self.gammas.iter().find(|g| !(**g > 0.0 && **g < 1.0)) {
            return Err(Error::Spec(format!("gamma {g} must lie in (0, 1)")));
        }
        if self.taus.iter().any(|t| !(*t > 0.0)) || self.taus.windows(2).any(|p| p[1] >= p[0]) {
            return Err(Error::Spec(format!("taus {:?} must be positive and strictly descending", self.taus)));
        }
        if self.max_features == Some(0) {
            return Err(Error::Spec("max_features must be positive".into()));
        }
        if self.disparity_slack < 0 {
            return Err(Error::Spec("disparity slack must be non-negative".into()));
        }
        Ok(())
    }

    pub fn from_json_str(text: &str) -> Result<Self> {
        let spec: Self = serde_json::from_str(text)?;
        spec.validate()?;
        Ok(spec)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_json_str(&text)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct Runtime {
    pub mean: f64,
    pub std: f64,
}

impl Runtime {
    pub fn from_samples(samples: &[f64]) -> Self {
        if samples.is_empty() {
            return Self::default();
        }
        let n = samples.len() as f64;
        let mean = samples.iter().sum::<f64>() / n;
        let var = samples.iter().map(|s| (s - mean).powi(2)).sum::<f64>() / n;
        Self { mean, std: var.sqrt() }
    }
}

/// Aggregate over all shifts for one `(window, gamma)` pair.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalCell {
    pub window: usize,
    pub gamma: f64,
    /// Keyed by the formatted threshold, e.g. `"0.25"`.
    pub tau_rates: BTreeMap<String, f64>,
    /// Over all evaluated matches; `None` when nothing matched.
    pub rmsd: Option<f64>,
    /// Median over shifts of the per-shift RMSD.
    pub rmsd_median: Option<f64>,
    pub rmsd_per_delta: Vec<Option<f64>>,
    /// Evaluated features: detected minus border-excluded.
    pub n_features: usize,
    pub n_detected: usize,
    pub n_excluded: usize,
    /// Features entering the precision rates; below `n_features` only when
    /// `max_features` thins the set.
    pub n_scored: usize,
    pub n_matched: usize,
    pub fallback_rate: f64,
    pub runtime_ms: Runtime,
}

impl EvalCell {
    pub fn rate(&self, tau: f64) -> Option<f64> {
        self.tau_rates.get(&tau_key(tau)).copied()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportConfig {
    pub sweep: SweepSpec,
    pub pc: PcConfig,
    #[serde(rename = "match")]
    pub matching: MatchConfig,
    pub poc: PocConfig,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub config: ReportConfig,
    pub cells: Vec<EvalCell>,
}

impl EvalReport {
    pub fn cell(&self, window: usize, gamma: f64) -> Option<&EvalCell> {
        self.cells.iter().find(|c| c.window == window && c.gamma == gamma)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }

    /// One row per `(window, gamma, tau)`.
    pub fn write_csv<W: Write>(&self, mut out: W) -> std::io::Result<()> {
        writeln!(out, "window,gamma,tau,precision_rate,rmsd,rmsd_median,n_features,fallback_rate,runtime_mean_ms,runtime_std_ms")?;
        let opt = |v: Option<f64>| v.map(|x| x.to_string()).unwrap_or_default();
        for c in &self.cells {
            for tau in &self.config.sweep.taus {
                writeln!(
                    out,
                    "{},{},{},{},{},{},{},{},{},{}",
                    c.window,
                    c.gamma,
                    tau,
                    c.rate(*tau).unwrap_or(0.0),
                    opt(c.rmsd),
                    opt(c.rmsd_median),
                    c.n_features,
                    c.fallback_rate,
                    c.runtime_ms.mean,
                    c.runtime_ms.std
                )?;
            }
        }
        Ok(())
    }
}

fn tau_key(tau: f64) -> String {
    format!("{tau}")
}

fn median(values: &mut [f64]) -> Option<f64> {
    if values.is_empty() {
        return None;
    }
    values.sort_by(f64::total_cmp);
    let n = values.len();
    Some(if n % 2 == 1 { values[n / 2] } else { 0.5 * (values[n / 2 - 1] + values[n / 2]) })
}

/// True when a left feature and its true correspondence both keep `margin`
/// pixels from every edge.
fn evaluable(f: &Feature, delta: f64, margin: usize, width: usize, height: usize) -> bool {
    let (x, y, m) = (f.x as f64, f.y as f64, margin as f64);
    let inside = |v: f64, n: usize| v >= m && v < n as f64 - m;
    inside(x, width) && inside(y, height) && inside(x - delta, width)
}

/// Per-shift outcome for one `(window, gamma)` pair.
#[derive(Debug, Clone, Default)]
struct ShiftOutcome {
    n_detected: usize,
    n_evaluated: usize,
    n_scored: usize,
    /// Absolute errors of evaluated features that were matched.
    errors: Vec<f64>,
    n_fallback: usize,
    runtime_ms: f64,
}

fn shift_outcomes(
    pc_r: &PhaseCongruencyResult,
    right_feats: &[Vec<Feature>],
    img: &GrayImage,
    delta: f64,
    spec: &SweepSpec,
    pc_cfg: &PcConfig,
    match_cfg: &MatchConfig,
    poc_cfg: &PocConfig,
) -> Result<Vec<Vec<ShiftOutcome>>> {
    let (w, h) = img.dims();
    let margin = spec.margin();
    let t0 = Instant::now();
    let left = subpixel_shift(img, ShiftSpec::horizontal(delta))?;
    let pc_l = compute_phase_congruency(&left, pc_cfg)?;
    let extract_ms = t0.elapsed().as_secs_f64() * 1e3;

    let mcfg = MatchConfig {
        disparity_min: (delta.floor() as i64 - spec.disparity_slack).max(0),
        disparity_max: delta.ceil() as i64 + spec.disparity_slack,
        ..match_cfg.clone()
    };

    let mut per_gamma = Vec::with_capacity(spec.gammas.len());
    for (gi, &gamma) in spec.gammas.iter().enumerate() {
        let t1 = Instant::now();
        let feats_l = detect_features(&pc_l, gamma, 0);
        let matches = match_features(&feats_l, &right_feats[gi], &pc_l.moment_max, &pc_r.moment_max, &mcfg)?;
        let match_ms = t1.elapsed().as_secs_f64() * 1e3;

        let mut evaluated: Vec<(usize, usize)> = feats_l
            .iter()
            .filter(|f| evaluable(f, delta, margin, w, h))
            .map(|f| (f.y, f.x))
            .collect();
        let n_evaluated = evaluated.len();
        evaluated.sort_unstable();
        let scored: HashSet<(usize, usize)> = match spec.max_features {
            Some(cap) if cap < evaluated.len() => {
                let n = evaluated.len();
                (0..cap).map(|i| evaluated[i * n / cap]).collect()
            }
            _ => evaluated.into_iter().collect(),
        };
        let (src_l, src_r) = match poc_cfg.source {
            RefineSource::MomentMap => (&pc_l.moment_max, &pc_r.moment_max),
            RefineSource::RawImage => (&left, img),
        };
        let kept: Vec<Match> = matches
            .into_iter()
            .filter(|m| scored.contains(&(m.left.y, m.left.x)))
            .collect();

        let mut per_window = Vec::with_capacity(spec.window_sizes.len());
        for &window in &spec.window_sizes {
            let t2 = Instant::now();
            let cfg = PocConfig { window, ..poc_cfg.clone() };
            let refined = refine_matches(&kept, src_l, src_r, &cfg);
            let refine_ms = t2.elapsed().as_secs_f64() * 1e3;
            per_window.push(ShiftOutcome {
                n_detected: feats_l.len(),
                n_evaluated,
                n_scored: scored.len(),
                errors: refined.iter().map(|r| (r.disparity - delta).abs()).collect(),
                n_fallback: refined.iter().filter(|r| r.status == RefineStatus::FallbackInteger).count(),
                runtime_ms: extract_ms + match_ms + refine_ms,
            });
        }
        per_gamma.push(per_window);
    }
    Ok(per_gamma)
}

/// Shifts `img` by every delta, runs the full pipeline against the unshifted
/// image and scores refined disparities against the known shift.
///
/// The shifted image is the left view, so the true disparity equals the
/// shift. Features closer than the border margin to an edge, or whose true
/// correspondence is, are excluded from every statistic; the precision rate
/// counts unmatched scored features as failures.
pub fn run_shift_sweep(
    img: &GrayImage,
    spec: &SweepSpec,
    pc_cfg: &PcConfig,
    match_cfg: &MatchConfig,
    poc_cfg: &PocConfig,
) -> Result<EvalReport> {
    spec.validate()?;
    pc_cfg.validate()?;
    match_cfg.validate()?;
    poc_cfg.validate()?;
    let (w, h) = img.dims();
    let max_window = *spec.window_sizes.iter().max().expect("validated");
    if w < max_window + 2 * spec.margin() || h < max_window + 2 * spec.margin() {
        return Err(Error::Spec(format!(
            "{w}x{h} image cannot host a {max_window} px window inside a {} px margin",
            spec.margin()
        )));
    }
    if let Some(d) = spec.deltas.iter().find(|d| **d >= w as f64 / 2.0) {
        return Err(Error::Spec(format!("shift {d} must stay below half the image width")));
    }

    let pc_r = compute_phase_congruency(img, pc_cfg)?;
    let right_feats: Vec<Vec<Feature>> = spec.gammas.iter().map(|&g| detect_features(&pc_r, g, 0)).collect();

    let outcomes: Vec<Vec<Vec<ShiftOutcome>>> = spec
        .deltas
        .par_iter()
        .map(|&d| shift_outcomes(&pc_r, &right_feats, img, d, spec, pc_cfg, match_cfg, poc_cfg))
        .collect::<Result<_>>()?;

    let mut cells = Vec::new();
    for (wi, &window) in spec.window_sizes.iter().enumerate() {
        for (gi, &gamma) in spec.gammas.iter().enumerate() {
            let per_delta: Vec<&ShiftOutcome> = outcomes.iter().map(|o| &o[gi][wi]).collect();
            cells.push(aggregate(window, gamma, &per_delta, spec));
        }
    }
    Ok(EvalReport {
        config: ReportConfig {
            sweep: spec.clone(),
            pc: pc_cfg.clone(),
            matching: match_cfg.clone(),
            poc: poc_cfg.clone(),
        },
        cells,
    })
}

fn rms(errors: &[f64]) -> Option<f64> {
    if errors.is_empty() {
        None
    } else {
        Some((errors.iter().map(|e| e * e).sum::<f64>() / errors.len() as f64).sqrt())
    }
}

fn aggregate(window: usize, gamma: f64, per_delta: &[&ShiftOutcome], spec: &SweepSpec) -> EvalCell {
    let n_detected: usize = per_delta.iter().map(|o| o.n_detected).sum();
    let n_features: usize = per_delta.iter().map(|o| o.n_evaluated).sum();
    let n_scored: usize = per_delta.iter().map(|o| o.n_scored).sum();
    let all_errors: Vec<f64> = per_delta.iter().flat_map(|o| o.errors.iter().copied()).collect();
    let n_matched = all_errors.len();
    let n_fallback: usize = per_delta.iter().map(|o| o.n_fallback).sum();

    let tau_rates = spec
        .taus
        .iter()
        .map(|&tau| {
            let hits = all_errors.iter().filter(|e| **e <= tau).count();
            let rate = if n_scored == 0 { 0.0 } else { hits as f64 / n_scored as f64 };
            (tau_key(tau), rate)
        })
        .collect();

    let rmsd_per_delta: Vec<Option<f64>> = per_delta.iter().map(|o| rms(&o.errors)).collect();
    let mut finite: Vec<f64> = rmsd_per_delta.iter().flatten().copied().collect();
    let runtime_ms = if spec.timing {
        Runtime::from_samples(&per_delta.iter().map(|o| o.runtime_ms).collect::<Vec<_>>())
    } else {
        Runtime::default()
    };

    EvalCell {
        window,
        gamma,
        tau_rates,
        rmsd: rms(&all_errors),
        rmsd_median: median(&mut finite),
        rmsd_per_delta,
        n_features,
        n_detected,
        n_excluded: n_detected - n_features,
        n_scored,
        n_matched,
        fallback_rate: if n_matched == 0 { 0.0 } else { n_fallback as f64 / n_matched as f64 },
        runtime_ms,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BrightnessRow {
    pub beta: f64,
    pub n_features: usize,
    pub redetection_rate: f64,
}

/// Feature counts and exact-location re-detection after `I + beta` for each
/// beta, relative to the unmodified image. With `clip_values` the perturbed
/// image is clamped to `[0, 1]`, as an 8-bit sensor would saturate.
pub fn run_brightness_sweep(
    img: &GrayImage,
    betas: &[f64],
    gamma: f64,
    pc_cfg: &PcConfig,
    clip_values: bool,
) -> Result<Vec<BrightnessRow>> {
    let base = detect_features(&compute_phase_congruency(img, pc_cfg)?, gamma, 0);
    betas
        .par_iter()
        .map(|&beta| {
            let mut shifted = apply_brightness(img, 1.0, beta);
            if clip_values {
                shifted = clip(&shifted, 0.0, 1.0);
            }
            let feats = detect_features(&compute_phase_congruency(&shifted, pc_cfg)?, gamma, 0);
            Ok(BrightnessRow {
                beta,
                n_features: feats.len(),
                redetection_rate: redetection_rate(&base, &feats, 0),
            })
        })
        .collect()
}

/// Fraction of matches whose integer disparity misses `round(truth_shift)` by
/// more than `window / 2` pixels. Empty input scores 0.
pub fn audit_mismatches(matches: &[Match], truth_shift: f64, window: usize) -> f64 {
    if matches.is_empty() {
        return 0.0;
    }
    let truth = truth_shift.round() as i64;
    let tol = (window / 2) as i64;
    let bad = matches.iter().filter(|m| (m.disparity_int - truth).abs() > tol).count();
    bad as f64 / matches.len() as f64
}

/// Mean and standard deviation of phase-congruency extraction plus feature
/// detection over `repetitions` runs.
pub fn time_extraction(img: &GrayImage, pc_cfg: &PcConfig, gamma: f64, repetitions: usize) -> Result<Runtime> {
    let mut samples = Vec::with_capacity(repetitions);
    for _ in 0..repetitions {
        let t = Instant::now();
        let pc = compute_phase_congruency(img, pc_cfg)?;
        std::hint::black_box(detect_features(&pc, gamma, 0));
        samples.push(t.elapsed().as_secs_f64() * 1e3);
    }
    Ok(Runtime::from_samples(&samples))
}
