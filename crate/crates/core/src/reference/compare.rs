use serde::{Deserialize, Serialize};

use super::EnvelopePoint;
use crate::error::{Error, Result};
use crate::interp;

/// Agreement of a candidate envelope curve with reference envelope peaks.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EnvelopeMetrics {
    /// RMS of `(candidate − reference) / reference` over the matched peaks.
    pub rms_relative_error: f64,
    /// Relative error of the largest candidate value against the largest
    /// reference peak.
    pub peak_relative_error: f64,
    /// `t_peak(candidate) − t_peak(reference)`.
    pub peak_time_error: f64,
    pub matched_peaks: usize,
}

/// Compares a sampled candidate envelope `(t, u)` with reference peaks.
/// Peaks outside the candidate's time span are skipped; the candidate is
/// linearly interpolated at each reference peak time. The candidate peak
/// is taken within the span of the matched reference peaks.
pub fn compare_envelopes(reference: &[EnvelopePoint], t: &[f64], u: &[f64]) -> Result<EnvelopeMetrics> {
    if t.len() != u.len() || t.is_empty() {
        return Err(Error::InvalidConfig("candidate envelope needs matching, non-empty t and u".into()));
    }
    if t.windows(2).any(|w| w[1] < w[0]) {
        return Err(Error::InvalidConfig("candidate times must be ascending".into()));
    }
    let (t0, t1) = (t[0], t[t.len() - 1]);
    let matched: Vec<&EnvelopePoint> = reference.iter().filter(|p| p.t >= t0 && p.t <= t1).collect();
    if matched.is_empty() {
        return Err(Error::Incompatible("runs share no envelope peaks in a common time span".into()));
    }
    let at = |tp: f64| -> f64 {
        if t.len() == 1 {
            return u[0];
        }
        let k = interp::locate(t, tp);
        let (ta, tb) = (t[k], t[k + 1]);
        if tb == ta {
            return u[k];
        }
        let s = (tp - ta) / (tb - ta);
        u[k] + s * (u[k + 1] - u[k])
    };
    let sq: f64 = matched
        .iter()
        .map(|p| {
            let e = (at(p.t) - p.u) / p.u;
            e * e
        })
        .sum();
    let ref_peak = matched.iter().max_by(|a, b| a.u.total_cmp(&b.u)).copied().unwrap();
    // Candidate maximum over the span of the matched reference peaks.
    let (lo, hi) = (matched[0].t, matched[matched.len() - 1].t);
    let (t_peak, u_peak) = t
        .iter()
        .zip(u)
        .filter(|(&ti, _)| ti >= lo && ti <= hi)
        .map(|(&ti, &ui)| (ti, ui))
        .chain(matched.iter().map(|p| (p.t, at(p.t))))
        .max_by(|a, b| a.1.total_cmp(&b.1))
        .unwrap();
    Ok(EnvelopeMetrics {
        rms_relative_error: (sq / matched.len() as f64).sqrt(),
        peak_relative_error: (u_peak - ref_peak.u) / ref_peak.u,
        peak_time_error: t_peak - ref_peak.t,
        matched_peaks: matched.len(),
    })
}

/// Reference peaks down to `fraction` of the first one.
pub fn decay_window(peaks: &[EnvelopePoint], fraction: f64) -> &[EnvelopePoint] {
    let Some(first) = peaks.first() else {
        return peaks;
    };
    let n = peaks.iter().take_while(|p| p.u >= fraction * first.u).count();
    &peaks[..n]
}

#[cfg(test)]
mod tests {
    use super::*;

    fn peaks() -> Vec<EnvelopePoint> {
        (0..10)
            .map(|k| EnvelopePoint {
                t: k as f64,
                u: (-0.3 * k as f64).exp(),
            })
            .collect()
    }

    #[test]
    fn identical_runs_compare_to_zero() {
        let p = peaks();
        let t: Vec<f64> = p.iter().map(|q| q.t).collect();
        let u: Vec<f64> = p.iter().map(|q| q.u).collect();
        let m = compare_envelopes(&p, &t, &u).unwrap();
        assert_eq!(m.rms_relative_error, 0.0);
        assert_eq!(m.peak_relative_error, 0.0);
        assert_eq!(m.peak_time_error, 0.0);
        assert_eq!(m.matched_peaks, 10);
    }

    #[test]
    fn uniform_offset() {
        let p = peaks();
        let t: Vec<f64> = (0..=90).map(|k| k as f64 * 0.1).collect();
        let u: Vec<f64> = t.iter().map(|&s| 1.02 * (-0.3 * s).exp()).collect();
        let m = compare_envelopes(&p, &t, &u).unwrap();
        // linear interpolation only matters between nodes; every peak is a node
        assert!((m.rms_relative_error - 0.02).abs() < 1e-12);
        assert!((m.peak_relative_error - 0.02).abs() < 1e-12);
    }

    #[test]
    fn candidate_peak_ignores_samples_before_first_reference_peak() {
        let p: Vec<EnvelopePoint> = peaks().into_iter().skip(2).collect();
        let t: Vec<f64> = (0..=90).map(|k| k as f64 * 0.1).collect();
        let u: Vec<f64> = t.iter().map(|&s| (-0.3 * s).exp()).collect();
        let m = compare_envelopes(&p, &t, &u).unwrap();
        assert!(m.peak_relative_error.abs() < 1e-12);
        assert!(m.peak_time_error.abs() < 1e-12);
    }

    #[test]
    fn disjoint_spans_are_rejected() {
        let p = peaks();
        assert!(matches!(
            compare_envelopes(&p, &[20.0, 21.0], &[1.0, 1.0]),
            Err(Error::Incompatible(_))
        ));
    }

    #[test]
    fn decay_window_stops_at_fraction() {
        let p = peaks();
        // e^{−0.3k} ≥ 0.1 for k ≤ 7
        assert_eq!(decay_window(&p, 0.1).len(), 8);
    }
}
