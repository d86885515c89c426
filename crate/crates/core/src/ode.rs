//! Dormand–Prince 5(4) with embedded error control and continuous
//! (dense) output of order 4.

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct OdeOptions {
    pub rel_tol: f64,
    pub abs_tol: f64,
    pub initial_step: Option<f64>,
    pub max_step: f64,
    pub max_steps: usize,
    /// Attached to step-collapse errors to point at the likely culprit.
    pub stiffness_hint: Option<String>,
}

impl Default for OdeOptions {
    fn default() -> Self {
        OdeOptions {
            rel_tol: 1e-8,
            abs_tol: 1e-10,
            initial_step: None,
            max_step: f64::INFINITY,
            max_steps: 50_000_000,
            stiffness_hint: None,
        }
    }
}

impl OdeOptions {
    pub fn with_tolerances(rel_tol: f64, abs_tol: f64) -> Self {
        OdeOptions {
            rel_tol,
            abs_tol,
            ..Default::default()
        }
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct OdeStats {
    pub accepted: usize,
    pub rejected: usize,
    pub evaluations: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct OdeSolution {
    pub t: Vec<f64>,
    pub y: Vec<Vec<f64>>,
    pub stats: OdeStats,
}

const C2: f64 = 1.0 / 5.0;
const C3: f64 = 3.0 / 10.0;
const C4: f64 = 4.0 / 5.0;
const C5: f64 = 8.0 / 9.0;
const A21: f64 = 1.0 / 5.0;
const A31: f64 = 3.0 / 40.0;
const A32: f64 = 9.0 / 40.0;
const A41: f64 = 44.0 / 45.0;
const A42: f64 = -56.0 / 15.0;
const A43: f64 = 32.0 / 9.0;
const A51: f64 = 19372.0 / 6561.0;
const A52: f64 = -25360.0 / 2187.0;
const A53: f64 = 64448.0 / 6561.0;
const A54: f64 = -212.0 / 729.0;
const A61: f64 = 9017.0 / 3168.0;
const A62: f64 = -355.0 / 33.0;
const A63: f64 = 46732.0 / 5247.0;
const A64: f64 = 49.0 / 176.0;
const A65: f64 = -5103.0 / 18656.0;
const A71: f64 = 35.0 / 384.0;
const A73: f64 = 500.0 / 1113.0;
const A74: f64 = 125.0 / 192.0;
const A75: f64 = -2187.0 / 6784.0;
const A76: f64 = 11.0 / 84.0;
const E1: f64 = 71.0 / 57600.0;
const E3: f64 = -71.0 / 16695.0;
const E4: f64 = 71.0 / 1920.0;
const E5: f64 = -17253.0 / 339200.0;
const E6: f64 = 22.0 / 525.0;
const E7: f64 = -1.0 / 40.0;
const D1: f64 = -12715105075.0 / 11282082432.0;
const D3: f64 = 87487479700.0 / 32700410799.0;
const D4: f64 = -10690763975.0 / 1880347072.0;
const D5: f64 = 701980252875.0 / 199316789632.0;
const D6: f64 = -1453857185.0 / 822651844.0;
const D7: f64 = 69997945.0 / 29380423.0;

/// Integrates `ẏ = f(t, y)` from `t0` to the last entry of `t_out`
/// (ascending, all `≥ t0`) and returns the state at every `t_out` entry.
pub fn integrate<F>(mut f: F, t0: f64, y0: &[f64], t_out: &[f64], opts: &OdeOptions) -> Result<OdeSolution>
where
    F: FnMut(f64, &[f64], &mut [f64]),
{
    let n = y0.len();
    if t_out.windows(2).any(|w| w[1] < w[0]) || t_out.first().is_some_and(|&t| t < t0) {
        return Err(Error::InvalidConfig("output times must be ascending and >= t0".into()));
    }
    if !(opts.rel_tol > 0.0 && opts.abs_tol > 0.0) {
        return Err(Error::InvalidConfig("integrator tolerances must be > 0".into()));
    }
    let mut stats = OdeStats::default();
    let mut out_t = Vec::with_capacity(t_out.len());
    let mut out_y = Vec::with_capacity(t_out.len());
    let mut next = 0;
    while next < t_out.len() && t_out[next] == t0 {
        out_t.push(t0);
        out_y.push(y0.to_vec());
        next += 1;
    }
    let Some(&t_end) = t_out.last() else {
        return Ok(OdeSolution { t: out_t, y: out_y, stats });
    };
    if next == t_out.len() {
        return Ok(OdeSolution { t: out_t, y: out_y, stats });
    }

    let mut t = t0;
    let mut y = y0.to_vec();
    let mut k = vec![vec![0.0; n]; 7];
    let mut ytmp = vec![0.0; n];
    let mut ynew = vec![0.0; n];
    let mut err = vec![0.0; n];
    let mut r = vec![vec![0.0; n]; 5];
    let scale = |a: &[f64], b: &[f64], i: usize| opts.abs_tol + opts.rel_tol * a[i].abs().max(b[i].abs());

    f(t, &y, &mut k[0]);
    stats.evaluations += 1;
    let span = t_end - t0;
    let mut h = match opts.initial_step {
        Some(h) => h,
        None => {
            let d0 = rms((0..n).map(|i| y[i] / scale(&y, &y, i)));
            let d1 = rms((0..n).map(|i| k[0][i] / scale(&y, &y, i)));
            let h0 = if d0 < 1e-5 || d1 < 1e-5 { 1e-6 } else { 0.01 * d0 / d1 };
            let h0 = h0.min(span);
            for i in 0..n {
                ytmp[i] = y[i] + h0 * k[0][i];
            }
            f(t + h0, &ytmp, &mut k[1]);
            stats.evaluations += 1;
            let d2 = rms((0..n).map(|i| (k[1][i] - k[0][i]) / scale(&y, &y, i))) / h0;
            let h1 = if d1.max(d2) <= 1e-15 {
                (h0 * 1e-3).max(1e-6)
            } else {
                (0.01 / d1.max(d2)).powf(0.2)
            };
            (100.0 * h0).min(h1)
        }
    }
    .min(opts.max_step)
    .min(span)
    .max(f64::MIN_POSITIVE);

    let mut last_fac_err = 1e-4f64;
    while next < t_out.len() {
        if stats.accepted + stats.rejected >= opts.max_steps {
            return Err(Error::StepSizeCollapse {
                time: t,
                step: h,
                hint: Some(format!("step budget of {} exhausted", opts.max_steps)),
            });
        }
        let h_min = 16.0 * f64::EPSILON * t.abs().max(span.abs()).max(1e-300);
        if h < h_min {
            return Err(Error::StepSizeCollapse {
                time: t,
                step: h,
                hint: opts.stiffness_hint.clone(),
            });
        }
        let last = t + h >= t_end;
        if last {
            h = t_end - t;
        }
        macro_rules! stage {
            ($dst:expr, $c:expr, $($a:expr => $kk:expr),+) => {{
                for i in 0..n {
                    ytmp[i] = y[i] + h * (0.0 $(+ $a * k[$kk][i])+);
                }
                let (head, tail) = k.split_at_mut($dst);
                let _ = head;
                f(t + $c * h, &ytmp, &mut tail[0]);
            }};
        }
        stage!(1, C2, A21 => 0);
        stage!(2, C3, A31 => 0, A32 => 1);
        stage!(3, C4, A41 => 0, A42 => 1, A43 => 2);
        stage!(4, C5, A51 => 0, A52 => 1, A53 => 2, A54 => 3);
        stage!(5, 1.0, A61 => 0, A62 => 1, A63 => 2, A64 => 3, A65 => 4);
        for i in 0..n {
            ynew[i] = y[i]
                + h * (A71 * k[0][i] + A73 * k[2][i] + A74 * k[3][i] + A75 * k[4][i] + A76 * k[5][i]);
        }
        let t_new = if last { t_end } else { t + h };
        {
            let (head, tail) = k.split_at_mut(6);
            let _ = head;
            f(t_new, &ynew, &mut tail[0]);
        }
        stats.evaluations += 6;
        for i in 0..n {
            err[i] = h
                * (E1 * k[0][i] + E3 * k[2][i] + E4 * k[3][i] + E5 * k[4][i] + E6 * k[5][i] + E7 * k[6][i]);
        }
        let e = rms((0..n).map(|i| err[i] / scale(&y, &ynew, i)));
        if !e.is_finite() {
            stats.rejected += 1;
            h *= 0.1;
            continue;
        }
        if e <= 1.0 {
            stats.accepted += 1;
            for i in 0..n {
                let dy = ynew[i] - y[i];
                let bspl = h * k[0][i] - dy;
                r[0][i] = y[i];
                r[1][i] = dy;
                r[2][i] = bspl;
                r[3][i] = dy - h * k[6][i] - bspl;
                r[4][i] = h
                    * (D1 * k[0][i] + D3 * k[2][i] + D4 * k[3][i] + D5 * k[4][i] + D6 * k[5][i] + D7 * k[6][i]);
            }
            while next < t_out.len() && (t_out[next] <= t_new || last) {
                let tq = t_out[next];
                let th = if h > 0.0 { ((tq - t) / h).clamp(0.0, 1.0) } else { 1.0 };
                let th1 = 1.0 - th;
                out_t.push(tq);
                out_y.push(
                    (0..n)
                        .map(|i| {
                            if tq == t_new {
                                ynew[i]
                            } else {
                                r[0][i] + th * (r[1][i] + th1 * (r[2][i] + th * (r[3][i] + th1 * r[4][i])))
                            }
                        })
                        .collect(),
                );
                next += 1;
            }
            t = t_new;
            std::mem::swap(&mut y, &mut ynew);
            k.swap(0, 6);
            // PI controller (Hairer's DOPRI5 constants)
            let fac = (e.max(1e-10).powf(0.17) / last_fac_err.powf(0.04) / 0.9).clamp(0.2, 10.0);
            last_fac_err = e.max(1e-4);
            h = (h / fac).min(opts.max_step);
        } else {
            stats.rejected += 1;
            h /= (e.powf(0.2) / 0.9).min(10.0);
        }
    }
    Ok(OdeSolution {
        t: out_t,
        y: out_y,
        stats,
    })
}

fn rms(it: impl Iterator<Item = f64>) -> f64 {
    let (s, c) = it.fold((0.0, 0usize), |(s, c), v| (s + v * v, c + 1));
    if c == 0 {
        0.0
    } else {
        (s / c as f64).sqrt()
    }
}

/// `n + 1` equally spaced times from `t0` to `t1`.
pub fn linspace(t0: f64, t1: f64, n: usize) -> Vec<f64> {
    if n == 0 {
        return vec![t0];
    }
    (0..=n)
        .map(|k| if k == n { t1 } else { t0 + (t1 - t0) * k as f64 / n as f64 })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn harmonic_oscillator_over_fifty_periods() {
        let t = linspace(0.0, 100.0 * std::f64::consts::PI, 2000);
        let sol = integrate(
            |_, y, dy| {
                dy[0] = y[1];
                dy[1] = -y[0];
            },
            0.0,
            &[1.0, 0.0],
            &t,
            &OdeOptions::default(),
        )
        .unwrap();
        for (ti, yi) in sol.t.iter().zip(&sol.y) {
            assert!((yi[0] - ti.cos()).abs() < 1e-6);
        }
    }

    #[test]
    fn dense_output_is_fourth_order_accurate() {
        let t: Vec<f64> = (0..=200).map(|k| k as f64 * 0.0137).collect();
        let opts = OdeOptions::with_tolerances(1e-10, 1e-12);
        let sol = integrate(|_, y, dy| dy[0] = -0.7 * y[0], 0.0, &[2.0], &t, &opts).unwrap();
        for (ti, yi) in sol.t.iter().zip(&sol.y) {
            assert!((yi[0] - 2.0 * (-0.7 * ti).exp()).abs() < 1e-9);
        }
        assert!(sol.stats.accepted < 200);
    }

    #[test]
    fn finite_time_blow_up_collapses_the_step() {
        let opts = OdeOptions {
            stiffness_hint: Some("blow-up".into()),
            ..Default::default()
        };
        let err = integrate(|_, y, dy| dy[0] = y[0] * y[0], 0.0, &[1.0], &[2.0], &opts).unwrap_err();
        assert!(matches!(err, Error::StepSizeCollapse { .. }), "{err}");
    }
}
