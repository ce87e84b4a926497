//! Sensor preprocessing and per-window feature extraction.
//!
//! Each tri-axial stream is fused into a magnitude signal, cut into sliding
//! windows, and summarized by 27 time and frequency domain features. Feature
//! vectors of several sensors worn on the same body part are concatenated in
//! sensor order.

use std::collections::BTreeMap;

use rustfft::num_complex::Complex;
use rustfft::FftPlanner;

use crate::error::{Result, StlError};

/// Number of features extracted per sensor.
pub const FEATURES_PER_SENSOR: usize = 27;

/// Number of spectral peaks reported per window.
pub const N_PEAKS: usize = 5;

const MODE_BINS: usize = 10;

/// Raw tri-axial samples from one sensor.
#[derive(Debug, Clone, PartialEq)]
pub struct SensorStream {
    samples: Vec<[f64; 3]>,
    rate_hz: f64,
    labels: Option<Vec<usize>>,
}

impl SensorStream {
    pub fn new(samples: Vec<[f64; 3]>, rate_hz: f64, labels: Option<Vec<usize>>) -> Result<Self> {
        if !(rate_hz > 0.0 && rate_hz.is_finite()) {
            return Err(StlError::invalid(format!("sampling rate must be positive, got {rate_hz}")));
        }
        if samples.iter().flatten().any(|v| !v.is_finite()) {
            return Err(StlError::invalid("non-finite sensor sample"));
        }
        if let Some(l) = &labels {
            if l.len() != samples.len() {
                return Err(StlError::invalid(format!(
                    "{} samples but {} labels",
                    samples.len(),
                    l.len()
                )));
            }
        }
        Ok(Self {
            samples,
            rate_hz,
            labels,
        })
    }

    pub fn samples(&self) -> &[[f64; 3]] {
        &self.samples
    }

    pub fn rate_hz(&self) -> f64 {
        self.rate_hz
    }

    pub fn labels(&self) -> Option<&[usize]> {
        self.labels.as_deref()
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }
}

/// A contiguous run of magnitude samples.
#[derive(Debug, Clone, PartialEq)]
pub struct Window {
    pub values: Vec<f64>,
    pub rate_hz: f64,
    pub label: Option<usize>,
}

impl Window {
    pub fn new(values: Vec<f64>, rate_hz: f64) -> Result<Self> {
        if values.len() < 2 {
            return Err(StlError::invalid("window needs at least 2 samples"));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(StlError::invalid("non-finite window value"));
        }
        if !(rate_hz > 0.0 && rate_hz.is_finite()) {
            return Err(StlError::invalid("sampling rate must be positive"));
        }
        Ok(Self {
            values,
            rate_hz,
            label: None,
        })
    }
}

/// Concatenated per-sensor features for one window position.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureVector {
    pub values: Vec<f64>,
    pub label: Option<usize>,
}

/// Euclidean norm of each (x, y, z) sample.
pub fn magnitude(stream: &SensorStream) -> Result<Vec<f64>> {
    if stream.is_empty() {
        return Err(StlError::empty("sensor stream has no samples"));
    }
    Ok(stream
        .samples
        .iter()
        .map(|[x, y, z]| (x * x + y * y + z * z).sqrt())
        .collect())
}

/// Window length in samples and stride for the given geometry.
fn window_geometry(rate_hz: f64, window_s: f64, overlap: f64) -> Result<(usize, usize)> {
    if !(0.0..1.0).contains(&overlap) {
        return Err(StlError::invalid(format!("overlap must lie in [0, 1), got {overlap}")));
    }
    if !(rate_hz > 0.0) || !(window_s > 0.0) {
        return Err(StlError::invalid("rate and window length must be positive"));
    }
    let len = (window_s * rate_hz).round();
    if len < 2.0 {
        return Err(StlError::invalid(format!(
            "window of {window_s} s at {rate_hz} Hz is shorter than 2 samples"
        )));
    }
    let len = len as usize;
    let stride = ((len as f64 * (1.0 - overlap)).floor() as usize).max(1);
    Ok((len, stride))
}

/// Start offsets of all full windows over a signal of `n` samples.
fn window_starts(n: usize, len: usize, stride: usize) -> Vec<usize> {
    if n < len {
        return Vec::new();
    }
    (0..=n - len).step_by(stride).collect()
}

/// Cuts `values` into fixed-length windows; a trailing partial window is dropped.
pub fn slide_windows(values: &[f64], rate_hz: f64, window_s: f64, overlap: f64) -> Result<Vec<Window>> {
    slide_labeled_windows(values, None, rate_hz, window_s, overlap)
}

/// Like [`slide_windows`], attaching the majority per-sample label to each window.
///
/// A window whose label counts tie keeps `label: None`.
pub fn slide_labeled_windows(
    values: &[f64],
    labels: Option<&[usize]>,
    rate_hz: f64,
    window_s: f64,
    overlap: f64,
) -> Result<Vec<Window>> {
    let (len, stride) = window_geometry(rate_hz, window_s, overlap)?;
    if values.len() < len {
        return Err(StlError::empty(format!(
            "signal of {} samples is shorter than one window ({len})",
            values.len()
        )));
    }
    if values.iter().any(|v| !v.is_finite()) {
        return Err(StlError::invalid("non-finite signal value"));
    }
    Ok(window_starts(values.len(), len, stride)
        .into_iter()
        .map(|s| Window {
            values: values[s..s + len].to_vec(),
            rate_hz,
            label: labels.and_then(|l| majority_label(&l[s..s + len])),
        })
        .collect())
}

/// Most frequent label; `None` on a tie for first place.
fn majority_label(labels: &[usize]) -> Option<usize> {
    let mut counts = BTreeMap::new();
    for &l in labels {
        *counts.entry(l).or_insert(0usize) += 1;
    }
    let best = counts.values().copied().max()?;
    let mut winners = counts.iter().filter(|(_, &c)| c == best);
    let (&label, _) = winners.next()?;
    winners.next().is_none().then_some(label)
}

/// Population moments: mean, std, skewness, raw kurtosis.
///
/// Skewness and kurtosis are 0 when the spread is 0.
fn moments(values: &[f64]) -> [f64; 4] {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    weighted_moments(values.iter().map(|&v| (v, 1.0 / n)), mean)
}

/// Moments of a discrete distribution given as (value, probability) pairs.
fn weighted_moments(points: impl Iterator<Item = (f64, f64)> + Clone, mean: f64) -> [f64; 4] {
    let (m2, m3, m4) = points.fold((0.0, 0.0, 0.0), |(a, b, c), (v, p)| {
        let d = v - mean;
        let d2 = d * d;
        (a + p * d2, b + p * d2 * d, c + p * d2 * d2)
    });
    let std = m2.max(0.0).sqrt();
    // relative cutoff so round-off in a constant signal reads as zero spread
    if std <= 1e-12 * mean.abs().max(1e-300) || m2 <= 0.0 {
        return [mean, 0.0, 0.0, 0.0];
    }
    [mean, std, m3 / (std * m2), m4 / (m2 * m2)]
}

/// Center of the most populated of 10 equal-width bins over [min, max].
fn histogram_mode(values: &[f64], min: f64, max: f64) -> f64 {
    let range = max - min;
    if range <= 0.0 {
        return min;
    }
    let width = range / MODE_BINS as f64;
    let mut counts = [0usize; MODE_BINS];
    for &v in values {
        let bin = (((v - min) / width).floor() as usize).min(MODE_BINS - 1);
        counts[bin] += 1;
    }
    // first maximum wins, so ties resolve to the lowest bin
    let best = counts
        .iter()
        .enumerate()
        .fold(0, |best, (i, &c)| if c > counts[best] { i } else { best });
    min + (best as f64 + 0.5) * width
}

/// The 27 features of one window, in this order:
///
/// | index | feature |
/// |-------|---------|
/// | 0 | mean |
/// | 1 | std (population) |
/// | 2 | min |
/// | 3 | max |
/// | 4 | mode (10-bin histogram) |
/// | 5 | range |
/// | 6 | mean crossing rate |
/// | 7 | DC component |
/// | 8..13 | magnitudes of the 5 largest spectral peaks |
/// | 13..18 | frequencies of those peaks (Hz) |
/// | 18 | energy |
/// | 19..23 | mean, std, skewness, kurtosis of the normalized spectrum over frequency |
/// | 23..27 | mean, std, skewness, kurtosis of the samples |
pub fn extract_features(w: &Window) -> [f64; FEATURES_PER_SENSOR] {
    let v = &w.values;
    let n = v.len();
    let nf = n as f64;

    let [mean, std, skew, kurt] = moments(v);
    let min = v.iter().copied().fold(f64::INFINITY, f64::min);
    let max = v.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mode = histogram_mode(v, min, max);
    let crossings = v
        .windows(2)
        .filter(|p| (p[0] - mean) * (p[1] - mean) < 0.0)
        .count();
    let mcr = crossings as f64 / (nf - 1.0);
    let energy = v.iter().map(|x| x * x).sum::<f64>() / nf;

    let spectrum = fft(v);
    let dc = spectrum[0].re / nf;
    // one-sided magnitudes, DC excluded; index k is frequency bin k + 1
    let half = n / 2;
    let mags: Vec<f64> = spectrum[1..=half].iter().map(|c| c.norm() / nf).collect();
    let freq = |k: usize| (k + 1) as f64 * w.rate_hz / nf;
    let scale = v.iter().fold(0.0f64, |a, x| a.max(x.abs()));
    let floor = 1e-12 * scale.max(f64::MIN_POSITIVE);

    let mut peaks: Vec<usize> = (0..mags.len())
        .filter(|&k| {
            mags[k] > floor
                && (k == 0 || mags[k] > mags[k - 1])
                && (k + 1 == mags.len() || mags[k] >= mags[k + 1])
        })
        .collect();
    peaks.sort_by(|&a, &b| mags[b].total_cmp(&mags[a]).then(a.cmp(&b)));
    peaks.truncate(N_PEAKS);

    let mut out = [0.0; FEATURES_PER_SENSOR];
    out[..8].copy_from_slice(&[mean, std, min, max, mode, max - min, mcr, dc]);
    for (i, &k) in peaks.iter().enumerate() {
        out[8 + i] = mags[k];
        out[13 + i] = freq(k);
    }
    out[18] = energy;

    let total: f64 = mags.iter().filter(|&&m| m > floor).sum();
    if total > 0.0 {
        let pts = mags
            .iter()
            .enumerate()
            .filter(|(_, &m)| m > floor)
            .map(|(k, &m)| (freq(k), m / total));
        let centroid = pts.clone().map(|(f, p)| f * p).sum::<f64>();
        out[19..23].copy_from_slice(&weighted_moments(pts, centroid));
    }
    out[23..27].copy_from_slice(&[mean, std, skew, kurt]);
    out
}

fn fft(values: &[f64]) -> Vec<Complex<f64>> {
    let mut buf: Vec<Complex<f64>> = values.iter().map(|&v| Complex::new(v, 0.0)).collect();
    FftPlanner::new().plan_fft_forward(buf.len()).process(&mut buf);
    buf
}

/// Windows every stream identically (aligned by row index) and concatenates
/// the per-sensor features. Labels come from the first stream that carries
/// them; windows with a tied label are dropped when labels are present.
pub fn features_from_streams(
    streams: &[SensorStream],
    window_s: f64,
    overlap: f64,
) -> Result<Vec<FeatureVector>> {
    let first = streams.first().ok_or_else(|| StlError::empty("no sensor streams"))?;
    let rate = first.rate_hz;
    if streams.iter().any(|s| s.rate_hz != rate) {
        return Err(StlError::invalid("all sensor streams must share one sampling rate"));
    }
    let n = streams.iter().map(SensorStream::len).min().unwrap_or(0);
    let labels = streams.iter().find_map(|s| s.labels()).map(|l| &l[..n]);

    let mut per_sensor = Vec::with_capacity(streams.len());
    for s in streams {
        let mag = magnitude(s)?;
        per_sensor.push(slide_labeled_windows(&mag[..n], labels, rate, window_s, overlap)?);
    }

    let n_windows = per_sensor[0].len();
    let mut out = Vec::with_capacity(n_windows);
    for i in 0..n_windows {
        let label = per_sensor[0][i].label;
        if labels.is_some() && label.is_none() {
            continue;
        }
        let mut values = Vec::with_capacity(FEATURES_PER_SENSOR * streams.len());
        for windows in &per_sensor {
            values.extend_from_slice(&extract_features(&windows[i]));
        }
        out.push(FeatureVector { values, label });
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use proptest::prelude::*;

    fn window(values: &[f64], rate: f64) -> Window {
        Window::new(values.to_vec(), rate).unwrap()
    }

    #[test]
    fn magnitude_examples() {
        let s = SensorStream::new(vec![[3.0, 4.0, 0.0], [0.0, 0.0, 0.0], [1.0, 1.0, 1.0]], 50.0, None).unwrap();
        let m = magnitude(&s).unwrap();
        assert_eq!(m[0], 5.0);
        assert_eq!(m[1], 0.0);
        assert_abs_diff_eq!(m[2], 1.7320508, epsilon = 1e-7);
    }

    #[test]
    fn magnitude_of_empty_stream() {
        let s = SensorStream::new(vec![], 50.0, None).unwrap();
        assert!(matches!(magnitude(&s), Err(StlError::EmptyInput(_))));
    }

    #[test]
    fn window_tiling() {
        let v: Vec<f64> = (0..10).map(f64::from).collect();
        let w = slide_windows(&v, 1.0, 5.0, 0.0).unwrap();
        assert_eq!(w.len(), 2);
        assert_eq!(w[1].values, vec![5.0, 6.0, 7.0, 8.0, 9.0]);

        // stride floor(5 * 0.5) = 2: starts 0, 2, 4
        let w = slide_windows(&v, 1.0, 5.0, 0.5).unwrap();
        let starts: Vec<f64> = w.iter().map(|w| w.values[0]).collect();
        assert_eq!(starts, vec![0.0, 2.0, 4.0]);

        assert!(matches!(
            slide_windows(&v[..4], 1.0, 5.0, 0.0),
            Err(StlError::EmptyInput(_))
        ));
        assert!(slide_windows(&v, 1.0, 1.0, 0.0).is_err());
        assert!(slide_windows(&v, 1.0, 5.0, 1.0).is_err());
    }

    #[test]
    fn window_labels_by_majority() {
        let v = vec![0.0; 6];
        let labels = [1, 1, 2, 2, 2, 3];
        let w = slide_labeled_windows(&v, Some(&labels), 1.0, 3.0, 0.0).unwrap();
        assert_eq!(w[0].label, Some(1));
        assert_eq!(w[1].label, Some(2));
        let w = slide_labeled_windows(&v, Some(&labels), 1.0, 2.0, 0.0).unwrap();
        assert_eq!(w[2].label, None);
    }

    #[test]
    fn four_sample_oracle() {
        let f = extract_features(&window(&[1.0, 2.0, 3.0, 4.0], 1.0));
        assert_abs_diff_eq!(f[0], 2.5, epsilon = 1e-12);
        assert_abs_diff_eq!(f[1], 1.25f64.sqrt(), epsilon = 1e-12);
        assert_eq!(f[2], 1.0);
        assert_eq!(f[3], 4.0);
        // every bin holds one sample; lowest bin center = 1 + 0.15
        assert_abs_diff_eq!(f[4], 1.15, epsilon = 1e-12);
        assert_eq!(f[5], 3.0);
        assert_abs_diff_eq!(f[6], 1.0 / 3.0, epsilon = 1e-12);
        assert_abs_diff_eq!(f[7], 2.5, epsilon = 1e-12);
        assert_abs_diff_eq!(f[18], 7.5, epsilon = 1e-12);
        // symmetric samples: zero skew, raw kurtosis 1.64
        assert_abs_diff_eq!(f[25], 0.0, epsilon = 1e-12);
        assert_abs_diff_eq!(f[26], 1.64, epsilon = 1e-12);
    }

    #[test]
    fn four_sample_spectrum() {
        // X1 = -2 + 2i, X2 = -2; one-sided bins 1..=2 normalized by N = 4
        let f = extract_features(&window(&[1.0, 2.0, 3.0, 4.0], 4.0));
        let m1 = 8f64.sqrt() / 4.0;
        // bin 1 rises from the excluded DC edge, bin 2 is lower: single peak at 1 Hz
        assert_abs_diff_eq!(f[8], m1, epsilon = 1e-12);
        assert_eq!(&f[9..13], &[0.0; 4]);
        assert_abs_diff_eq!(f[13], 1.0, epsilon = 1e-12);
        // normalized spectrum: p(1 Hz) = m1/(m1+0.5), p(2 Hz) = 0.5/(m1+0.5)
        let p1 = m1 / (m1 + 0.5);
        let p2 = 1.0 - p1;
        let mu = p1 + 2.0 * p2;
        assert_abs_diff_eq!(f[19], mu, epsilon = 1e-12);
        assert_abs_diff_eq!(f[20], (p1 * p2).sqrt(), epsilon = 1e-12);
    }

    #[test]
    fn constant_window() {
        let c = 9.81;
        let f = extract_features(&window(&[c; 50], 50.0));
        assert_abs_diff_eq!(f[0], c, epsilon = 1e-12);
        assert_eq!(f[1], 0.0);
        assert_eq!(f[4], c);
        assert_eq!(f[5], 0.0);
        assert_eq!(f[6], 0.0);
        assert_abs_diff_eq!(f[18], c * c, epsilon = 1e-9);
        assert_eq!(&f[8..18], &[0.0; 10]);
        assert_eq!(&f[19..23], &[0.0; 4]);
        assert_eq!(&f[24..27], &[0.0; 3]);
    }

    #[test]
    fn peaks_sorted_and_located() {
        let rate = 64.0;
        let v: Vec<f64> = (0..64)
            .map(|i| {
                let t = i as f64 / rate;
                3.0 * (2.0 * std::f64::consts::PI * 5.0 * t).sin()
                    + (2.0 * std::f64::consts::PI * 12.0 * t).sin()
                    + 10.0
            })
            .collect();
        let f = extract_features(&window(&v, rate));
        assert_abs_diff_eq!(f[13], 5.0, epsilon = 1e-9);
        assert_abs_diff_eq!(f[14], 12.0, epsilon = 1e-9);
        assert_abs_diff_eq!(f[8], 1.5, epsilon = 1e-9);
        assert_abs_diff_eq!(f[9], 0.5, epsilon = 1e-9);
        assert!(f[10] == 0.0 && f[15] == 0.0);
        assert_abs_diff_eq!(f[7], 10.0, epsilon = 1e-9);
    }

    #[test]
    fn three_sensor_assembly() {
        let rate = 10.0;
        let mk = |k: f64, labels: Option<Vec<usize>>| {
            let samples = (0..100).map(|i| [k * (i as f64).sin(), k, 0.5]).collect();
            SensorStream::new(samples, rate, labels).unwrap()
        };
        let labels: Vec<usize> = (0..100).map(|i| usize::from(i >= 50)).collect();
        let streams = [mk(1.0, Some(labels)), mk(2.0, None), mk(3.0, None)];
        let fv = features_from_streams(&streams, 5.0, 0.5).unwrap();
        // 50-sample windows, stride 25: starts 0, 25, 50; the middle one ties and is dropped
        assert_eq!(fv.len(), 2);
        assert!(fv.iter().all(|f| f.values.len() == 81));
        assert_eq!(fv[0].label, Some(0));
        assert_eq!(fv[1].label, Some(1));
        let w = slide_windows(&magnitude(&streams[1]).unwrap(), rate, 5.0, 0.5).unwrap();
        assert_eq!(&fv[0].values[27..54], &extract_features(&w[0])[..]);
    }

    proptest! {
        #[test]
        fn magnitude_ignores_axis_order_and_sign(x in -1e3..1e3f64, y in -1e3..1e3f64, z in -1e3..1e3f64) {
            let a = SensorStream::new(vec![[x, y, z]], 1.0, None).unwrap();
            let b = SensorStream::new(vec![[-z, x, -y]], 1.0, None).unwrap();
            let (ma, mb) = (magnitude(&a).unwrap()[0], magnitude(&b).unwrap()[0]);
            prop_assert!((ma - mb).abs() <= 1e-12 * ma.max(1.0));
        }

        #[test]
        fn feature_invariants(values in prop::collection::vec(-50.0..50.0f64, 2..80), rate in 0.5..200.0f64) {
            let w = window(&values, rate);
            let f = extract_features(&w);
            prop_assert_eq!(f.len(), FEATURES_PER_SENSOR);
            prop_assert!(f.iter().all(|x| x.is_finite()));
            prop_assert!(f[2] <= f[4] && f[4] <= f[3]);
            prop_assert_eq!(f[5], f[3] - f[2]);
            prop_assert!(f[18] >= 0.0);

            let g = extract_features(&window(&values, 2.0 * rate));
            for i in (0..8).chain(23..27) {
                prop_assert_eq!(f[i], g[i]);
            }
            for i in 13..18 {
                prop_assert!((g[i] - 2.0 * f[i]).abs() <= 1e-9 * f[i].abs().max(1.0));
            }
        }

        #[test]
        fn zero_overlap_windows_partition_prefix(n in 2usize..200, len in 2usize..20) {
            let v: Vec<f64> = (0..n).map(|i| i as f64).collect();
            match slide_windows(&v, 1.0, len as f64, 0.0) {
                Ok(ws) => {
                    prop_assert_eq!(ws.len(), n / len);
                    let flat: Vec<f64> = ws.iter().flat_map(|w| w.values.clone()).collect();
                    prop_assert_eq!(&flat[..], &v[..ws.len() * len]);
                }
                Err(e) => {
                    prop_assert!(n < len);
                    prop_assert!(matches!(e, StlError::EmptyInput(_)), "unexpected error kind");
                }
            }
        }
    }
}
