//! Monotone piecewise-cubic Hermite interpolation (Fritsch–Carlson slopes).

/// Node slopes for the shape-preserving cubic through `(x, y)`.
/// `x` must be strictly increasing.
pub fn pchip_slopes(x: &[f64], y: &[f64]) -> Vec<f64> {
    let n = x.len();
    debug_assert_eq!(n, y.len());
    match n {
        0 => return Vec::new(),
        1 => return vec![0.0],
        2 => {
            let s = (y[1] - y[0]) / (x[1] - x[0]);
            return vec![s, s];
        }
        _ => {}
    }
    let h: Vec<f64> = x.windows(2).map(|w| w[1] - w[0]).collect();
    let del: Vec<f64> = (0..n - 1).map(|k| (y[k + 1] - y[k]) / h[k]).collect();
    let mut d = vec![0.0; n];
    for k in 1..n - 1 {
        if del[k - 1] * del[k] > 0.0 {
            let w1 = 2.0 * h[k] + h[k - 1];
            let w2 = h[k] + 2.0 * h[k - 1];
            d[k] = (w1 + w2) / (w1 / del[k - 1] + w2 / del[k]);
        }
    }
    d[0] = end_slope(h[0], h[1], del[0], del[1]);
    d[n - 1] = end_slope(h[n - 2], h[n - 3], del[n - 2], del[n - 3]);
    d
}

fn end_slope(h0: f64, h1: f64, del0: f64, del1: f64) -> f64 {
    let d = ((2.0 * h0 + h1) * del0 - h0 * del1) / (h0 + h1);
    if d.signum() != del0.signum() || del0 == 0.0 {
        0.0
    } else if del0.signum() != del1.signum() && d.abs() > 3.0 * del0.abs() {
        3.0 * del0
    } else {
        d
    }
}

/// Index `k` of the interval `[x_k, x_{k+1}]` holding `t` (clamped).
pub fn locate(x: &[f64], t: f64) -> usize {
    let n = x.len();
    if n < 2 {
        return 0;
    }
    x.partition_point(|&v| v <= t).saturating_sub(1).min(n - 2)
}

/// Hermite cubic on interval `k`; `t` is expected inside it.
#[inline]
pub fn hermite(x: &[f64], y: &[f64], d: &[f64], k: usize, t: f64) -> f64 {
    if x.len() == 1 {
        return y[0];
    }
    let h = x[k + 1] - x[k];
    let s = (t - x[k]) / h;
    let s2 = s * s;
    let s3 = s2 * s;
    let h00 = 2.0 * s3 - 3.0 * s2 + 1.0;
    let h10 = s3 - 2.0 * s2 + s;
    let h01 = -2.0 * s3 + 3.0 * s2;
    let h11 = s3 - s2;
    h00 * y[k] + h10 * h * d[k] + h01 * y[k + 1] + h11 * h * d[k + 1]
}

#[derive(Debug, Clone, PartialEq)]
pub struct Pchip {
    x: Vec<f64>,
    y: Vec<f64>,
    d: Vec<f64>,
}

impl Pchip {
    pub fn new(x: Vec<f64>, y: Vec<f64>) -> Self {
        let d = pchip_slopes(&x, &y);
        Pchip { x, y, d }
    }

    /// Value at `t`, clamped to the end nodes outside the data range.
    pub fn eval(&self, t: f64) -> f64 {
        let t = t.clamp(self.x[0], self.x[self.x.len() - 1]);
        hermite(&self.x, &self.y, &self.d, locate(&self.x, t), t)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn exact_at_nodes_and_constant_data() {
        let x = vec![0.0, 1.0, 2.5, 4.0];
        let p = Pchip::new(x.clone(), vec![1.0, 3.0, 2.0, 5.0]);
        for (xi, yi) in x.iter().zip([1.0, 3.0, 2.0, 5.0]) {
            assert_eq!(p.eval(*xi), yi);
        }
        let c = Pchip::new(x, vec![7.0; 4]);
        assert_eq!(c.eval(1.7), 7.0);
    }

    #[test]
    fn reproduces_straight_lines() {
        let x: Vec<f64> = (0..6).map(|k| (k * k) as f64).collect();
        let p = Pchip::new(x.clone(), x.iter().map(|v| 2.0 * v - 1.0).collect());
        assert!((p.eval(7.3) - 13.6).abs() < 1e-12);
    }

    proptest! {
        #[test]
        fn monotone_data_gives_bracketed_values(
            steps in prop::collection::vec((0.01f64..2.0, 0.0f64..3.0), 3..12),
            frac in 0.0f64..1.0,
        ) {
            let mut x = vec![0.0];
            let mut y = vec![0.0];
            for (dx, dy) in &steps {
                x.push(x.last().unwrap() + dx);
                y.push(y.last().unwrap() + dy);
            }
            let p = Pchip::new(x.clone(), y.clone());
            let k = ((steps.len() as f64 * frac) as usize).min(steps.len() - 1);
            let t = x[k] + frac.fract() * (x[k + 1] - x[k]);
            let v = p.eval(t);
            prop_assert!(v >= y[k] - 1e-12 && v <= y[k + 1] + 1e-12);
        }
    }
}
