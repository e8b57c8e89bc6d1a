//! The three-variable frq oscillator and its adaptive integrator.
//!
//! State `(y, w, z)` is mRNA, protein and phosphorylated protein:
//!
//! ```text
//! dy/dt = c / (1 + (z/θ8)^8) - θ1 y
//! dw/dt = θ2 y - (θ3 + θ4) w + θ6 z - θ7 w z^4 / (θ9^4 + z^4)
//! dz/dt = θ4 w - (θ5 + θ6) z + θ7 w z^4 / (θ9^e + z^4)
//! ```
//!
//! where `e` is 4 by default (both exchange terms describe the same flux) and
//! may be set to 2 through [`OdeSettings::z_hill_exponent`].

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Number of free rate parameters.
pub const NUM_PARAMS: usize = 9;

/// The nine rate parameters plus the fixed transcription rate `c`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ThetaVector {
    rates: [f64; NUM_PARAMS],
    c: f64,
}

impl ThetaVector {
    pub fn new(rates: [f64; NUM_PARAMS], c: f64) -> Result<Self> {
        if !(c.is_finite() && c > 0.0) {
            return Err(Error::Domain(format!("transcription rate c must be positive, got {c}")));
        }
        for (j, &r) in rates.iter().enumerate() {
            if !(r.is_finite() && r > 0.0) {
                return Err(Error::Domain(format!("theta{} must be positive, got {r}", j + 1)));
            }
        }
        Ok(Self { rates, c })
    }

    pub fn from_slice(rates: &[f64], c: f64) -> Result<Self> {
        let arr: [f64; NUM_PARAMS] = rates.try_into().map_err(|_| {
            Error::InvalidArgument(format!("expected {NUM_PARAMS} parameters, got {}", rates.len()))
        })?;
        Self::new(arr, c)
    }

    /// Builds a vector without the positivity check. Used for degenerate
    /// cases such as `θ2 = 0` (no translation) in tests and simulations.
    pub fn new_unchecked(rates: [f64; NUM_PARAMS], c: f64) -> Self {
        Self { rates, c }
    }

    pub fn rates(&self) -> &[f64; NUM_PARAMS] {
        &self.rates
    }

    /// Zero-based access: `get(0)` is θ1.
    pub fn get(&self, j: usize) -> f64 {
        self.rates[j]
    }

    pub fn c(&self) -> f64 {
        self.c
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SystemState {
    pub y: f64,
    pub w: f64,
    pub z: f64,
}

impl SystemState {
    pub const fn new(y: f64, w: f64, z: f64) -> Self {
        Self { y, w, z }
    }

    fn as_array(&self) -> [f64; 3] {
        [self.y, self.w, self.z]
    }

    fn from_array(a: [f64; 3]) -> Self {
        Self::new(a[0], a[1], a[2])
    }

    fn is_finite(&self) -> bool {
        self.y.is_finite() && self.w.is_finite() && self.z.is_finite()
    }
}

/// Integration and sampling settings shared by every model evaluation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct OdeSettings {
    pub ic: [f64; 3],
    /// Hours integrated and discarded before recording.
    pub transient: f64,
    /// Number of recorded points `T`.
    pub n_points: usize,
    /// Spacing of recorded points, hours.
    pub dt_out: f64,
    pub abs_tol: f64,
    pub rel_tol: f64,
    /// Exponent of θ9 in the dz/dt exchange term; 4 or 2.
    pub z_hill_exponent: u8,
    pub overflow_guard: f64,
    pub max_steps: usize,
}

impl Default for OdeSettings {
    fn default() -> Self {
        Self {
            ic: [0.1, 0.1, 0.1],
            transient: 200.0,
            n_points: 66,
            dt_out: 1.0,
            abs_tol: 1e-8,
            rel_tol: 1e-8,
            z_hill_exponent: 4,
            overflow_guard: 1e12,
            max_steps: 2_000_000,
        }
    }
}

impl OdeSettings {
    /// Problems with these settings, each as `field: message`.
    pub fn problems(&self) -> Vec<String> {
        let mut out = Vec::new();
        if self.ic.iter().any(|v| !(v.is_finite() && *v >= 0.0)) {
            out.push("ic: components must be finite and non-negative".to_string());
        }
        if !(self.transient.is_finite() && self.transient >= 0.0) {
            out.push(format!("transient: must be >= 0, got {}", self.transient));
        }
        if self.n_points < 2 {
            out.push(format!("n_points: must be >= 2, got {}", self.n_points));
        }
        if !(self.dt_out.is_finite() && self.dt_out > 0.0) {
            out.push(format!("dt_out: must be positive, got {}", self.dt_out));
        }
        if !(self.abs_tol > 0.0 && self.rel_tol > 0.0) {
            out.push("abs_tol/rel_tol: must be positive".to_string());
        }
        if !matches!(self.z_hill_exponent, 2 | 4) {
            out.push(format!(
                "z_hill_exponent: must be 2 or 4, got {}",
                self.z_hill_exponent
            ));
        }
        if !(self.overflow_guard > 0.0) {
            out.push("overflow_guard: must be positive".to_string());
        }
        if self.max_steps == 0 {
            out.push("max_steps: must be positive".to_string());
        }
        out
    }

    pub fn validate(&self) -> Result<()> {
        let p = self.problems();
        if p.is_empty() {
            Ok(())
        } else {
            Err(Error::Config(p))
        }
    }
}

/// Recorded mRNA output `y` on the grid `transient + i * dt_out`.
#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    pub values: Vec<f64>,
    pub dt_out: f64,
    pub transient_dropped: f64,
}

impl Trajectory {
    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }
}

/// Why an integration stopped. A failed solve is an ordinary outcome: the
/// likelihood maps it to `-inf` and the failure tables count it.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum IntegrationFailure {
    /// A state component exceeded the overflow guard at time `t`.
    Overflow { t: f64 },
    NonFinite { t: f64 },
    StepSizeUnderflow { t: f64 },
    StepLimit { t: f64 },
}

impl std::fmt::Display for IntegrationFailure {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Self::Overflow { t } => write!(f, "state exceeded overflow guard at t={t}"),
            Self::NonFinite { t } => write!(f, "non-finite state at t={t}"),
            Self::StepSizeUnderflow { t } => write!(f, "step size underflow at t={t}"),
            Self::StepLimit { t } => write!(f, "step limit reached at t={t}"),
        }
    }
}

#[inline]
fn rhs(s: [f64; 3], th: &[f64; NUM_PARAMS], c: f64, z_squared: bool) -> [f64; 3] {
    let [y, w, z] = s;
    let r = z / th[7];
    let r2 = r * r;
    let r4 = r2 * r2;
    let z2 = z * z;
    let z4 = z2 * z2;
    let t9_2 = th[8] * th[8];
    let t9_4 = t9_2 * t9_2;
    let flux = th[6] * w * z4;
    let dy = c / (1.0 + r4 * r4) - th[0] * y;
    let dw = th[1] * y - (th[2] + th[3]) * w + th[5] * z - flux / (t9_4 + z4);
    let den3 = if z_squared { t9_2 + z4 } else { t9_4 + z4 };
    let dz = th[3] * w - (th[4] + th[5]) * z + flux / den3;
    [dy, dw, dz]
}

/// Right-hand side `(dy/dt, dw/dt, dz/dt)` of the oscillator.
pub fn evaluate_rhs(state: SystemState, theta: &ThetaVector, z_exponent: u8) -> Result<[f64; 3]> {
    if !state.is_finite() {
        return Err(Error::Domain(format!("non-finite state {state:?}")));
    }
    if !theta.c.is_finite() || theta.rates.iter().any(|v| !v.is_finite()) {
        return Err(Error::Domain("non-finite parameter".to_string()));
    }
    if !matches!(z_exponent, 2 | 4) {
        return Err(Error::InvalidArgument(format!("z Hill exponent must be 2 or 4, got {z_exponent}")));
    }
    Ok(rhs(state.as_array(), &theta.rates, theta.c, z_exponent == 2))
}

// Dormand-Prince 5(4) tableau.
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
const B1: f64 = 35.0 / 384.0;
const B3: f64 = 500.0 / 1113.0;
const B4: f64 = 125.0 / 192.0;
const B5: f64 = -2187.0 / 6784.0;
const B6: f64 = 11.0 / 84.0;
const E1: f64 = 71.0 / 57600.0;
const E3: f64 = -71.0 / 16695.0;
const E4: f64 = 71.0 / 1920.0;
const E5: f64 = -17253.0 / 339200.0;
const E6: f64 = 22.0 / 525.0;
const E7: f64 = -1.0 / 40.0;

#[inline]
fn axpy(y: [f64; 3], h: f64, terms: &[(f64, &[f64; 3])]) -> [f64; 3] {
    let mut out = y;
    for i in 0..3 {
        let mut acc = 0.0;
        for (coef, k) in terms {
            acc += coef * k[i];
        }
        out[i] += h * acc;
    }
    out
}

struct Solver<'a> {
    theta: &'a [f64; NUM_PARAMS],
    c: f64,
    z_squared: bool,
    settings: &'a OdeSettings,
}

impl Solver<'_> {
    fn f(&self, s: [f64; 3]) -> [f64; 3] {
        rhs(s, self.theta, self.c, self.z_squared)
    }

    fn initial_step(&self, y0: [f64; 3], f0: [f64; 3]) -> f64 {
        let scale = |i: usize| self.settings.abs_tol + self.settings.rel_tol * y0[i].abs();
        let norm = |v: [f64; 3]| ((0..3).map(|i| (v[i] / scale(i)).powi(2)).sum::<f64>() / 3.0).sqrt();
        let d0 = norm(y0);
        let d1 = norm(f0);
        let h = if d0 < 1e-5 || d1 < 1e-5 { 1e-6 } else { 0.01 * d0 / d1 };
        h.clamp(1e-8, 1.0)
    }

    /// Integrates from t=0 and returns the state at each requested time.
    fn solve(&self, output_times: &[f64]) -> std::result::Result<Vec<[f64; 3]>, IntegrationFailure> {
        let s = self.settings;
        let mut y = s.ic;
        let mut t = 0.0;
        let mut k1 = self.f(y);
        let mut h = self.initial_step(y, k1);
        let mut out = Vec::with_capacity(output_times.len());
        let mut steps = 0usize;

        for &t_next in output_times {
            while t < t_next {
                let remaining = t_next - t;
                let clipped = h >= remaining;
                let h_try = if clipped { remaining } else { h };
                if steps >= s.max_steps {
                    return Err(IntegrationFailure::StepLimit { t });
                }
                steps += 1;

                let k2 = self.f(axpy(y, h_try, &[(A21, &k1)]));
                let k3 = self.f(axpy(y, h_try, &[(A31, &k1), (A32, &k2)]));
                let k4 = self.f(axpy(y, h_try, &[(A41, &k1), (A42, &k2), (A43, &k3)]));
                let k5 = self.f(axpy(y, h_try, &[(A51, &k1), (A52, &k2), (A53, &k3), (A54, &k4)]));
                let k6 = self.f(axpy(
                    y,
                    h_try,
                    &[(A61, &k1), (A62, &k2), (A63, &k3), (A64, &k4), (A65, &k5)],
                ));
                let y_new = axpy(y, h_try, &[(B1, &k1), (B3, &k3), (B4, &k4), (B5, &k5), (B6, &k6)]);
                let k7 = self.f(y_new);

                let mut err_sq = 0.0;
                for i in 0..3 {
                    let e = h_try
                        * (E1 * k1[i] + E3 * k3[i] + E4 * k4[i] + E5 * k5[i] + E6 * k6[i] + E7 * k7[i]);
                    let sc = s.abs_tol + s.rel_tol * y[i].abs().max(y_new[i].abs());
                    err_sq += (e / sc) * (e / sc);
                }
                let err = (err_sq / 3.0).sqrt();

                if !err.is_finite() {
                    h = h_try * 0.2;
                    if h < 1e-12 * (1.0 + t.abs()) {
                        return Err(IntegrationFailure::NonFinite { t });
                    }
                    continue;
                }

                if err <= 1.0 {
                    t = if clipped { t_next } else { t + h_try };
                    y = y_new;
                    k1 = k7;
                    if y.iter().any(|v| !v.is_finite()) {
                        return Err(IntegrationFailure::NonFinite { t });
                    }
                    if y.iter().any(|v| v.abs() > s.overflow_guard) {
                        return Err(IntegrationFailure::Overflow { t });
                    }
                    let factor = if err == 0.0 { 5.0 } else { (0.9 * err.powf(-0.2)).clamp(0.2, 5.0) };
                    let proposed = h_try * factor;
                    // a step shortened to land on an output time says nothing
                    // about the natural step size
                    h = if clipped { proposed.max(h) } else { proposed };
                } else {
                    let factor = (0.9 * err.powf(-0.2)).clamp(0.2, 1.0);
                    h = h_try * factor;
                    if h < 1e-12 * (1.0 + t.abs()) {
                        return Err(IntegrationFailure::StepSizeUnderflow { t });
                    }
                }
            }
            out.push(y);
        }
        Ok(out)
    }
}

fn output_times(settings: &OdeSettings) -> Vec<f64> {
    (0..settings.n_points)
        .map(|i| settings.transient + i as f64 * settings.dt_out)
        .collect()
}

/// Integrates the system and records every state component on the output grid.
pub fn integrate_states(
    theta: &ThetaVector,
    settings: &OdeSettings,
) -> std::result::Result<Vec<SystemState>, IntegrationFailure> {
    let solver = Solver {
        theta: &theta.rates,
        c: theta.c,
        z_squared: settings.z_hill_exponent == 2,
        settings,
    };
    let states = solver.solve(&output_times(settings))?;
    Ok(states.into_iter().map(SystemState::from_array).collect())
}

/// Integrates the system, drops `[0, transient)` and records `y` at
/// `n_points` times spaced `dt_out` apart.
pub fn integrate(
    theta: &ThetaVector,
    settings: &OdeSettings,
) -> std::result::Result<Trajectory, IntegrationFailure> {
    let states = integrate_states(theta, settings)?;
    Ok(Trajectory {
        values: states.into_iter().map(|s| s.y).collect(),
        dt_out: settings.dt_out,
        transient_dropped: settings.transient,
    })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Oscillation {
    pub oscillating: bool,
    pub peak_to_trough: f64,
}

/// Oscillating iff the peak-to-trough range over the window exceeds `amp_tol`.
pub fn detect_oscillation(traj: &Trajectory, amp_tol: f64) -> Oscillation {
    let (lo, hi) = traj
        .values
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &v| (lo.min(v), hi.max(v)));
    let peak_to_trough = if traj.values.is_empty() { 0.0 } else { hi - lo };
    Oscillation {
        oscillating: peak_to_trough > amp_tol,
        peak_to_trough,
    }
}

/// Same as [`detect_oscillation`], with a failed integration reported as
/// not oscillating.
pub fn detect_oscillation_outcome(
    outcome: &std::result::Result<Trajectory, IntegrationFailure>,
    amp_tol: f64,
) -> Oscillation {
    match outcome {
        Ok(traj) => detect_oscillation(traj, amp_tol),
        Err(_) => Oscillation {
            oscillating: false,
            peak_to_trough: 0.0,
        },
    }
}

/// A parameter set that settles onto a limit cycle with a period of about
/// 22 hours under the default settings (c = 1, θ9⁴ in both exchange terms).
pub const REFERENCE_THETA: [f64; NUM_PARAMS] = [
    0.19299, 0.39902, 0.15909, 0.07215, 0.39989, 0.96262, 0.64388, 0.01725, 0.04593,
];

#[cfg(test)]
mod tests {
    use super::*;

    fn reference() -> ThetaVector {
        ThetaVector::new(REFERENCE_THETA, 1.0).unwrap()
    }

    #[test]
    fn origin_gives_pure_transcription() {
        let th = reference();
        let d = evaluate_rhs(SystemState::new(0.0, 0.0, 0.0), &th, 4).unwrap();
        assert_eq!(d, [1.0, 0.0, 0.0]);
        let th = ThetaVector::new(REFERENCE_THETA, 2.5).unwrap();
        assert_eq!(evaluate_rhs(SystemState::new(0.0, 0.0, 0.0), &th, 2).unwrap(), [2.5, 0.0, 0.0]);
    }

    #[test]
    fn half_repression_at_threshold() {
        let mut r = REFERENCE_THETA;
        r[0] = 0.5;
        let th = ThetaVector::new(r, 1.0).unwrap();
        let d = evaluate_rhs(SystemState::new(1.0, 0.0, r[7]), &th, 4).unwrap();
        assert_eq!(d[0], 0.0);
    }

    #[test]
    fn strong_repression_leaves_degradation() {
        let th = reference();
        let y = 0.7;
        let z = 100.0 * th.get(7);
        let d = evaluate_rhs(SystemState::new(y, 0.3, z), &th, 4).unwrap();
        let expected = -th.get(0) * y;
        assert!(((d[0] - expected) / expected).abs() < 0.01);
    }

    #[test]
    fn rejects_non_finite_state() {
        let th = reference();
        assert!(evaluate_rhs(SystemState::new(f64::NAN, 0.0, 0.0), &th, 4).is_err());
        assert!(evaluate_rhs(SystemState::new(0.0, f64::INFINITY, 0.0), &th, 4).is_err());
        assert!(evaluate_rhs(SystemState::new(0.0, 0.0, 0.0), &th, 3).is_err());
    }

    #[test]
    fn theta_validation() {
        let mut r = REFERENCE_THETA;
        r[8] = 0.0;
        assert!(ThetaVector::new(r, 1.0).is_err());
        assert!(ThetaVector::new(REFERENCE_THETA, 0.0).is_err());
        assert!(ThetaVector::from_slice(&[1.0; 8], 1.0).is_err());
    }

    #[test]
    fn no_translation_relaxes_to_fixed_point() {
        let mut r = REFERENCE_THETA;
        r[1] = 0.0;
        let th = ThetaVector::new_unchecked(r, 1.0);
        let settings = OdeSettings {
            ic: [0.0, 0.0, 0.0],
            ..OdeSettings::default()
        };
        let states = integrate_states(&th, &settings).unwrap();
        let target = 1.0 / r[0];
        for s in &states {
            assert_eq!(s.w, 0.0);
            assert_eq!(s.z, 0.0);
            assert!((s.y - target).abs() < 1e-6 * target);
        }
        let traj = integrate(&th, &settings).unwrap();
        let osc = detect_oscillation(&traj, 1e-6);
        assert!(!osc.oscillating);
    }

    #[test]
    fn integration_is_deterministic() {
        let th = reference();
        let settings = OdeSettings {
            transient: 0.0,
            ..OdeSettings::default()
        };
        let a = integrate(&th, &settings).unwrap();
        let b = integrate(&th, &settings).unwrap();
        let bits = |t: &Trajectory| t.values.iter().map(|v| v.to_bits()).collect::<Vec<_>>();
        assert_eq!(bits(&a), bits(&b));
        assert_eq!(a.values[0], settings.ic[0]);
        assert_eq!(a.len(), 66);
    }

    #[test]
    fn blow_up_is_a_failure_value() {
        // a huge transcription rate with no degradation runs away
        let mut r = REFERENCE_THETA;
        r[0] = 1e-300;
        r[1] = 1e-300;
        let th = ThetaVector::new(r, 1e11).unwrap();
        let out = integrate(&th, &OdeSettings::default());
        assert!(matches!(out, Err(IntegrationFailure::Overflow { .. })), "{out:?}");
        let osc = detect_oscillation_outcome(&out, 1e-3);
        assert!(!osc.oscillating);
    }

    #[test]
    fn oscillation_detection_on_constructed_signals() {
        let amp_tol = 0.05;
        let flat = Trajectory {
            values: vec![3.0; 50],
            dt_out: 1.0,
            transient_dropped: 0.0,
        };
        let osc = detect_oscillation(&flat, amp_tol);
        assert_eq!((osc.oscillating, osc.peak_to_trough), (false, 0.0));

        // sampled at quarter periods so the extremes are hit exactly
        let sine = Trajectory {
            values: (0..40).map(|t| 2.0 * amp_tol * (t as f64 * std::f64::consts::FRAC_PI_2).sin()).collect(),
            dt_out: 1.0,
            transient_dropped: 0.0,
        };
        let osc = detect_oscillation(&sine, amp_tol);
        assert!(osc.oscillating);
        assert!((osc.peak_to_trough - 4.0 * amp_tol).abs() < 1e-15);

        // e^{-t} cos t decays well below the tolerance after the transient
        let damped = Trajectory {
            values: (0..60)
                .map(|i| {
                    let t = 20.0 + i as f64 * 0.5;
                    (-t as f64).exp() * t.cos()
                })
                .collect(),
            dt_out: 0.5,
            transient_dropped: 20.0,
        };
        let osc = detect_oscillation(&damped, amp_tol);
        assert!(!osc.oscillating);
        assert!(osc.peak_to_trough < amp_tol);
    }

    #[test]
    fn z_exponent_switch_changes_only_dz() {
        let th = reference();
        let s = SystemState::new(0.3, 0.2, 0.03);
        let a = evaluate_rhs(s, &th, 4).unwrap();
        let b = evaluate_rhs(s, &th, 2).unwrap();
        assert_eq!(a[0], b[0]);
        assert_eq!(a[1], b[1]);
        assert_ne!(a[2], b[2]);
    }
}
