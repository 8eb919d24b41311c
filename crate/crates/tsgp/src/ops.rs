//! The executable primitives of the feature-learning pipeline: segment
//! detection, domain transforms, content-adaptive patching, shape and
//! distribution feature extraction, and pooling.
//!
//! Everything here is a pure function over `f64` slices; pooling comparisons
//! are exact (the positive-value count uses a strict `> 0`).

use std::cell::RefCell;

use rustfft::num_complex::Complex;
use rustfft::FftPlanner;

use crate::error::{Error, Result};

/// Divisors admissible for content-adaptive patching: patch length is
/// `floor(input_len / divisor)`.
pub const PATCH_DIVISORS: [usize; 6] = [2, 4, 8, 16, 32, 64];

/// Admissible values for the kernel-span factor λ and the subsampling
/// proportion τ.
pub const RATIO_CHOICES: [f64; 3] = [0.25, 0.5, 0.75];

/// Extracts the contiguous slice of length `len_seg` starting at the 1-based
/// index `start_seg`.
pub fn seg_detect(x: &[f64], len_seg: usize, start_seg: usize) -> Result<Vec<f64>> {
    let l = x.len();
    if len_seg < 1 || len_seg >= l || start_seg < 1 || start_seg + len_seg - 1 > l {
        return Err(Error::OutOfRange { start: start_seg, len: len_seg, input_len: l });
    }
    Ok(x[start_seg - 1..start_seg - 1 + len_seg].to_vec())
}

thread_local! {
    static FFT_PLANNER: RefCell<FftPlanner<f64>> = RefCell::new(FftPlanner::new());
}

/// Full-length DFT magnitude spectrum; bin 1 is the DC term. Output length
/// equals input length.
pub fn dom_freq(x: &[f64]) -> Vec<f64> {
    if x.is_empty() {
        return Vec::new();
    }
    let mut buf: Vec<Complex<f64>> = x.iter().map(|&v| Complex::new(v, 0.0)).collect();
    FFT_PLANNER.with(|p| {
        let fft = p.borrow_mut().plan_fft_forward(buf.len());
        fft.process(&mut buf);
    });
    buf.into_iter().map(|c| c.norm()).collect()
}

/// First-order differences; output is one element shorter than the input.
pub fn dom_diff(x: &[f64]) -> Result<Vec<f64>> {
    if x.len() < 2 {
        return Err(Error::TooShort { len: x.len() });
    }
    Ok(x.windows(2).map(|w| w[1] - w[0]).collect())
}

/// Overlapping patches of a segment.
#[derive(Debug, Clone, PartialEq)]
pub struct PatchSet {
    pub patches: Vec<Vec<f64>>,
    pub patch_len: usize,
    pub stride: usize,
    pub source_len: usize,
}

impl PatchSet {
    pub fn n_patches(&self) -> usize {
        self.patches.len()
    }

    /// Treats a whole segment as a single patch (the unpatched extraction
    /// path shares the per-patch code).
    pub fn single(segment: &[f64]) -> PatchSet {
        PatchSet {
            patch_len: segment.len(),
            stride: segment.len(),
            source_len: segment.len(),
            patches: vec![segment.to_vec()],
        }
    }
}

/// Number of patches produced by patching a segment of length `input_len`
/// with the given divisor, or None when the patch would be shorter than 2.
pub fn patch_counts(input_len: usize, divisor: usize) -> Option<(usize, usize, usize)> {
    let patch_len = input_len / divisor;
    if patch_len < 2 {
        return None;
    }
    let stride = patch_len / 2;
    let n_patch = (input_len - patch_len) / stride + 1;
    Some((patch_len, stride, n_patch))
}

/// Splits `x` into overlapping patches of length `floor(len/divisor)` with
/// stride `floor(patch_len/2)`; trailing samples not covered by a full patch
/// are dropped.
pub fn ada_patch(x: &[f64], divisor: usize) -> Result<PatchSet> {
    let input_len = x.len();
    let (patch_len, stride, n_patch) =
        patch_counts(input_len, divisor).ok_or(Error::PatchTooSmall {
            input_len,
            divisor,
            patch_len: input_len / divisor.max(1),
        })?;
    let patches = (0..n_patch)
        .map(|i| x[i * stride..i * stride + patch_len].to_vec())
        .collect();
    Ok(PatchSet { patches, patch_len, stride, source_len: input_len })
}

/// The three morphological template kinds.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum KernelKind {
    Inc,
    Dec,
    Peak,
}

impl KernelKind {
    pub fn name(self) -> &'static str {
        match self {
            KernelKind::Inc => "Inc",
            KernelKind::Dec => "Dec",
            KernelKind::Peak => "Peak",
        }
    }

    /// Shortest legal kernel for the kind. A peak template needs a center,
    /// so its minimum is 3 taps.
    pub fn min_len(self) -> usize {
        match self {
            KernelKind::Peak => 3,
            _ => 2,
        }
    }
}

/// A fixed zero-mean, unit-norm 1D convolution template.
#[derive(Debug, Clone, PartialEq)]
pub struct ShapeKernel {
    pub kind: KernelKind,
    pub weights: Vec<f64>,
}

/// Builds a shape kernel: Inc is a zero-mean ascending ramp, Dec its
/// negation, Peak a zero-mean center-positive cosine template. All are
/// normalized to unit Euclidean norm, so a constant patch always yields an
/// all-zero activation map.
pub fn make_shape_kernel(kind: KernelKind, c: usize) -> Result<ShapeKernel> {
    let min = kind.min_len();
    if c < min {
        return Err(Error::KernelTooShort { kind: kind.name(), c, min });
    }
    let mut w: Vec<f64> = match kind {
        KernelKind::Inc | KernelKind::Dec => {
            (0..c).map(|i| i as f64 - (c as f64 - 1.0) / 2.0).collect()
        }
        KernelKind::Peak => {
            let raw: Vec<f64> = (0..c)
                .map(|i| {
                    let phase = 2.0 * std::f64::consts::PI * (i as f64 / (c as f64 - 1.0))
                        - std::f64::consts::PI;
                    phase.cos()
                })
                .collect();
            let mean = raw.iter().sum::<f64>() / c as f64;
            raw.into_iter().map(|v| v - mean).collect()
        }
    };
    let norm = w.iter().map(|v| v * v).sum::<f64>().sqrt();
    debug_assert!(norm > 0.0);
    for v in &mut w {
        *v /= norm;
    }
    if kind == KernelKind::Dec {
        for v in &mut w {
            *v = -*v;
        }
    }
    Ok(ShapeKernel { kind, weights: w })
}

/// Valid 1D cross-correlation (no padding, stride 1): output element j is
/// `sum_i p[j+i] * w[i]`.
pub fn convolve_valid(p: &[f64], w: &ShapeKernel) -> Result<Vec<f64>> {
    let c = w.weights.len();
    if c > p.len() {
        return Err(Error::KernelLongerThanPatch { c, patch_len: p.len() });
    }
    Ok((0..p.len() - c + 1)
        .map(|j| w.weights.iter().enumerate().map(|(i, wi)| p[j + i] * wi).sum())
        .collect())
}

/// Pooled summary of an activation map.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PoolStats {
    /// Fraction of strictly positive entries.
    pub ppv: f64,
    pub max: f64,
    pub mean: f64,
}

pub fn pool(r: &[f64]) -> Result<PoolStats> {
    if r.is_empty() {
        return Err(Error::EmptyMap);
    }
    let n = r.len() as f64;
    let positive = r.iter().filter(|&&v| v > 0.0).count() as f64;
    let max = r.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mean = r.iter().sum::<f64>() / n;
    Ok(PoolStats { ppv: positive / n, max, mean })
}

/// Kernel lengths used by shape extraction on a patch of length `patch_len`
/// with span factor `lambda`: powers of two in `[2, floor(lambda *
/// patch_len)]`, falling back to the shortest legal kernel when that range is
/// empty. Peak substitutes 3 for 2, keeping the set size (and hence the
/// output dimension) identical across kinds.
pub fn kernel_lengths(kind: KernelKind, patch_len: usize, lambda: f64) -> Vec<usize> {
    let c_max = (lambda * patch_len as f64).floor() as usize;
    let mut lengths: Vec<usize> = Vec::new();
    let mut c = 2usize;
    while c <= c_max {
        lengths.push(c);
        c *= 2;
    }
    if lengths.is_empty() {
        lengths.push(2);
    }
    if kind == KernelKind::Peak && lengths[0] == 2 {
        lengths[0] = 3;
    }
    debug_assert!(lengths.iter().all(|&c| c <= patch_len));
    lengths
}

/// Output dimension of shape extraction on one patch.
pub fn shape_dim(kind: KernelKind, patch_len: usize, lambda: f64) -> usize {
    3 * kernel_lengths(kind, patch_len, lambda).len()
}

/// Multi-scale shape features of one patch: (PPV, MAX, MEAN) per kernel
/// length, concatenated in ascending length order.
pub fn extract_shape(p: &[f64], kind: KernelKind, lambda: f64) -> Result<Vec<f64>> {
    if p.len() < kind.min_len() {
        return Err(Error::PatchTooShort { len: p.len() });
    }
    let mut out = Vec::new();
    for c in kernel_lengths(kind, p.len(), lambda) {
        let kernel = make_shape_kernel(kind, c)?;
        let map = convolve_valid(p, &kernel)?;
        let stats = pool(&map)?;
        out.extend_from_slice(&[stats.ppv, stats.max, stats.mean]);
    }
    Ok(out)
}

/// Number of retained order statistics for a patch of length `patch_len`:
/// `floor(tau * patch_len)`, clamped below to 2.
pub fn statis_dist_len(patch_len: usize, tau: f64) -> usize {
    ((tau * patch_len as f64).floor() as usize).max(2)
}

/// Distribution-profile features of one patch: the sorted values uniformly
/// subsampled at `statis_dist_len` points, endpoints included. Rounding of
/// the fractional indices is half-away-from-zero.
pub fn extract_statis_dist(p: &[f64], tau: f64) -> Result<Vec<f64>> {
    let l = p.len();
    if l < 2 {
        return Err(Error::PatchTooShort { len: l });
    }
    let mut sorted = p.to_vec();
    sorted.sort_unstable_by(f64::total_cmp);
    let m = statis_dist_len(l, tau);
    Ok((0..m)
        .map(|j| {
            let idx = 1 + (((l - 1) * j) as f64 / (m - 1) as f64).round() as usize;
            sorted[idx - 1]
        })
        .collect())
}

/// A configured extraction operator, applied identically to every patch.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Extractor {
    Shape { kind: KernelKind, lambda: f64 },
    StatisDist { tau: f64 },
}

impl Extractor {
    pub fn apply(&self, p: &[f64]) -> Result<Vec<f64>> {
        match *self {
            Extractor::Shape { kind, lambda } => extract_shape(p, kind, lambda),
            Extractor::StatisDist { tau } => extract_statis_dist(p, tau),
        }
    }

    /// Output dimension on one patch of the given length.
    pub fn dim(&self, patch_len: usize) -> usize {
        match *self {
            Extractor::Shape { kind, lambda } => shape_dim(kind, patch_len, lambda),
            Extractor::StatisDist { tau } => statis_dist_len(patch_len, tau),
        }
    }

    /// Minimum patch length the extractor can operate on.
    pub fn min_patch_len(&self) -> usize {
        match *self {
            Extractor::Shape { kind, .. } => kind.min_len(),
            Extractor::StatisDist { .. } => 2,
        }
    }
}

/// Applies `extractor` to every patch and concatenates the results in patch
/// order.
pub fn extract_over_patches(ps: &PatchSet, extractor: &Extractor) -> Result<Vec<f64>> {
    let mut out = Vec::with_capacity(ps.n_patches() * extractor.dim(ps.patch_len));
    for p in &ps.patches {
        out.extend(extractor.apply(p)?);
    }
    Ok(out)
}
