use super::Trajectory;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EnvelopePoint {
    pub t: f64,
    pub u: f64,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct Envelope {
    pub upper: Vec<EnvelopePoint>,
    pub lower: Vec<EnvelopePoint>,
    /// Fewer than three extrema were found; both lists are empty.
    pub non_oscillatory: bool,
}

/// Vertex of the parabola through three samples around index `k`.
fn parabolic(t: &[f64], u: &[f64], k: usize) -> EnvelopePoint {
    if k == 0 || k + 1 >= u.len() {
        return EnvelopePoint { t: t[k], u: u[k] };
    }
    let (t0, t1, t2) = (t[k - 1], t[k], t[k + 1]);
    let (u0, u1, u2) = (u[k - 1], u[k], u[k + 1]);
    let d01 = (u1 - u0) / (t1 - t0);
    let d12 = (u2 - u1) / (t2 - t1);
    let c = (d12 - d01) / (t2 - t0);
    if c == 0.0 {
        return EnvelopePoint { t: t1, u: u1 };
    }
    let b = d01 - c * (t0 + t1);
    let tv = (-b / (2.0 * c)).clamp(t0, t2);
    EnvelopePoint {
        t: tv,
        u: u0 + d01 * (tv - t0) + c * (tv - t0) * (tv - t1),
    }
}

/// Per-cycle maxima and minima located at velocity sign changes (or, when
/// `v` is absent, at slope sign changes of `u`) and refined by a parabola
/// through the three samples around the discrete extremum.
pub fn envelope_from_samples(t: &[f64], u: &[f64], v: Option<&[f64]>) -> Envelope {
    let n = t.len().min(u.len());
    let slope: Vec<f64> = match v {
        Some(v) => v[..n].to_vec(),
        None => (0..n)
            .map(|k| {
                if k + 1 < n {
                    u[k + 1] - u[k]
                } else {
                    0.0
                }
            })
            .collect(),
    };
    let mut env = Envelope::default();
    for k in 0..n.saturating_sub(1) {
        let (s0, s1) = (slope[k], slope[k + 1]);
        let peak = s0 > 0.0 && s1 <= 0.0;
        let trough = s0 < 0.0 && s1 >= 0.0;
        if !(peak || trough) {
            continue;
        }
        let j = if v.is_some() {
            if (peak && u[k + 1] > u[k]) || (trough && u[k + 1] < u[k]) {
                k + 1
            } else {
                k
            }
        } else {
            k + 1
        };
        if j == 0 || j + 1 >= n {
            continue;
        }
        let p = parabolic(t, u, j);
        if peak {
            env.upper.push(p);
        } else {
            env.lower.push(p);
        }
    }
    if env.upper.len() + env.lower.len() < 3 {
        return Envelope {
            non_oscillatory: true,
            ..Default::default()
        };
    }
    env
}

/// Envelope of one DOF of a full trajectory.
pub fn extract_envelope(trajectory: &Trajectory, dof: usize) -> Envelope {
    envelope_from_samples(
        &trajectory.t,
        &trajectory.displacement(dof),
        Some(&trajectory.velocity(dof)),
    )
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn decaying_cosine() {
        let t: Vec<f64> = (0..4000).map(|k| k as f64 * 0.01).collect();
        let u: Vec<f64> = t.iter().map(|&t| (-0.1 * t).exp() * t.cos()).collect();
        let v: Vec<f64> = t
            .iter()
            .map(|&t| (-0.1 * t).exp() * (-0.1 * t.cos() - t.sin()))
            .collect();
        let env = envelope_from_samples(&t, &u, Some(&v));
        assert!(env.upper.len() >= 5 && !env.non_oscillatory);
        // extrema of e^{−0.1t} cos t sit where tan t = ∓0.1, i.e. at 1/√1.01 of
        // the exponential
        let f = 1.0 / 1.01f64.sqrt();
        for p in &env.upper {
            assert!((p.u - f * (-0.1 * p.t).exp()).abs() < 1e-6);
            assert!((p.u - (-0.1 * p.t).exp()).abs() < 6e-3);
        }
        for p in &env.lower {
            assert!((p.u + f * (-0.1 * p.t).exp()).abs() < 1e-6);
        }
    }

    #[test]
    fn constant_signal_is_flagged() {
        let t: Vec<f64> = (0..100).map(|k| k as f64).collect();
        let env = envelope_from_samples(&t, &[2.0; 100], None);
        assert!(env.non_oscillatory && env.upper.is_empty());
    }
}
