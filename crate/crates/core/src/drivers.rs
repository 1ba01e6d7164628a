//! Human-driver decision sets, per-decision control laws, ground-truth
//! stochastic decision models for both scenarios, and the
//! logistic-regression distribution estimator with its trainer.
//!
//! Decision semantics are fixed: index 0 brakes, index 1 tracks the
//! reference velocity. Human vehicles hold their lane, so every law
//! returns a zero steering angle.

use crate::dynamics::{TrafficState, VehicleControl, VehicleState};
use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Decision index: braking.
pub const DECISION_BRAKE: usize = 0;
/// Decision index: tracking the reference velocity.
pub const DECISION_TRACK: usize = 1;

/// Ordered decision ids; the experiments use two.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DecisionSet {
    pub n: usize,
}

impl DecisionSet {
    pub fn braking_tracking() -> Self {
        Self { n: 2 }
    }
}

#[derive(Debug, Error, PartialEq)]
pub enum DriverError {
    #[error("IDM gap must be positive, got {0}")]
    NonPositiveGap(f64),
    #[error("unknown decision id {0}")]
    UnknownDecision(usize),
    #[error("trajectory needs at least 2 samples, got {0}")]
    TrajectoryTooShort(usize),
    #[error("empty training dataset")]
    EmptyDataset,
    #[error("feature dimension {got} does not match model ({want})")]
    FeatureDim { got: usize, want: usize },
}

/// Intelligent Driver Model parameters.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct IdmParams {
    /// Desired speed (m/s).
    pub v0: f64,
    /// Time headway (s).
    pub t_headway: f64,
    /// Maximum acceleration (m/s²).
    pub a_max: f64,
    /// Comfortable deceleration (m/s²).
    pub b_comf: f64,
    /// Jam distance (m).
    pub s0: f64,
    /// Free-road exponent.
    pub delta_exp: f64,
}

impl IdmParams {
    pub fn new(v0: f64, t_headway: f64, a_max: f64, b_comf: f64, s0: f64) -> Self {
        let p = Self { v0, t_headway, a_max, b_comf, s0, delta_exp: 4.0 };
        assert!(
            p.v0 > 0.0 && p.t_headway > 0.0 && p.a_max > 0.0 && p.b_comf > 0.0 && p.s0 > 0.0,
            "IDM parameters must be positive: {p:?}"
        );
        p
    }
}

/// Standard IDM acceleration; `leader = (gap, leader speed)`. Without a
/// leader only the free-road term applies.
pub fn idm_accel(v: f64, leader: Option<(f64, f64)>, p: &IdmParams) -> Result<f64, DriverError> {
    let free = 1.0 - (v / p.v0).powf(p.delta_exp);
    match leader {
        None => Ok(p.a_max * free),
        Some((gap, v_lead)) => {
            if gap <= 0.0 {
                return Err(DriverError::NonPositiveGap(gap));
            }
            let dv = v - v_lead;
            let s_star = p.s0 + v * p.t_headway + v * dv / (2.0 * (p.a_max * p.b_comf).sqrt());
            Ok(p.a_max * (free - (s_star / gap).powi(2)))
        }
    }
}

fn softplus(x: f64) -> f64 {
    // Stable log(1 + exp(x)).
    if x > 30.0 {
        x
    } else {
        x.exp().ln_1p()
    }
}

fn softplus_deriv(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

/// Smooth gap floor: behaves like the identity for comfortable gaps and
/// saturates at `floor` for closing or negative gaps, keeping the IDM
/// term differentiable inside the optimizer.
pub fn smooth_gap(gap: f64, floor: f64) -> f64 {
    floor + softplus(gap - floor)
}

pub fn smooth_gap_deriv(gap: f64, floor: f64) -> f64 {
    softplus_deriv(gap - floor)
}

const GAP_FLOOR: f64 = 0.5;
/// Smooth lower clamp on human decel so tree rollouts stay bounded.
const HUMAN_DECEL_CAP: f64 = 6.0;
/// Standstill attenuation scale for the smooth law.
const STANDSTILL_V0: f64 = 0.2;
const STANDSTILL_WIDTH: f64 = 0.05;

/// Per-decision laws of the crossing scenario: braking is IDM against a
/// virtual stopped leader at the conflict point (origin of the vehicle's
/// travel frame), tracking is free-road IDM at the reference speed.
#[derive(Debug, Clone)]
pub struct CrossingLaws {
    pub brake: IdmParams,
    pub track: IdmParams,
    /// Tractor half-length; the front bumper measures the gap.
    pub front_offset: f64,
    /// Simulation step used by the standstill clamp.
    pub dt: f64,
}

impl CrossingLaws {
    pub fn standard(v_ref: f64, front_offset: f64, dt: f64) -> Self {
        Self {
            // Aggressive stop: strong comfortable deceleration, creep
            // target speed so the braking branch actually halts.
            brake: IdmParams::new(0.1, 1.0, 1.5, 4.0, 1.0),
            track: IdmParams::new(v_ref, 1.0, 1.5, 2.0, 2.0),
            front_offset,
            dt,
        }
    }

    /// Acceleration for a decision given the human's own state (travel
    /// frame: crossing at the origin). Smooth in the state.
    pub fn accel(&self, human: &VehicleState, decision: usize) -> Result<f64, DriverError> {
        match decision {
            DECISION_BRAKE => {
                let gap = smooth_gap(-(human.px + self.front_offset), GAP_FLOOR);
                let p = &self.brake;
                let v = human.v;
                let s_star = p.s0 + v * p.t_headway + v * v / (2.0 * (p.a_max * p.b_comf).sqrt());
                let raw = p.a_max * (1.0 - (v / p.v0).powf(p.delta_exp) - (s_star / gap).powi(2));
                Ok(smooth_clamped(raw, v))
            }
            DECISION_TRACK => idm_accel(human.v, None, &self.track),
            other => Err(DriverError::UnknownDecision(other)),
        }
    }
}

/// Smooth composition of the decel cap and the standstill attenuation.
fn smooth_clamped(raw: f64, v: f64) -> f64 {
    let capped = -HUMAN_DECEL_CAP + softplus(raw + HUMAN_DECEL_CAP);
    let pos = softplus(capped);
    let neg = capped - pos;
    let gate = 1.0 / (1.0 + (-(v - STANDSTILL_V0) / STANDSTILL_WIDTH).exp());
    pos + neg * gate
}

/// Per-decision laws of the lane-change scenario. Braking follows a
/// predictive IDM against the ego position projected one headway ahead
/// at its current speed; tracking is free-road IDM at the reference.
#[derive(Debug, Clone)]
pub struct LaneChangeLaws {
    pub brake: IdmParams,
    pub track: IdmParams,
    /// Bumper-to-bumper correction: ego rear offset plus human front offset.
    pub gap_offset: f64,
    pub dt: f64,
}

impl LaneChangeLaws {
    pub fn standard(v_ref: f64, gap_offset: f64, dt: f64) -> Self {
        Self {
            // Smooth deceleration tuned for yielding in dense traffic.
            brake: IdmParams::new(v_ref, 1.5, 1.5, 2.0, 2.0),
            track: IdmParams::new(v_ref, 1.5, 1.5, 2.0, 2.0),
            gap_offset,
            dt,
        }
    }

    /// Smooth acceleration with analytic gradients with respect to the
    /// ego and human states (5 entries each), used inside the planner.
    pub fn accel_with_grad(
        &self,
        ego: &VehicleState,
        human: &VehicleState,
        decision: usize,
    ) -> Result<(f64, [f64; 5], [f64; 5]), DriverError> {
        match decision {
            DECISION_TRACK => {
                let p = &self.track;
                let a = p.a_max * (1.0 - (human.v / p.v0).powf(p.delta_exp));
                let mut dh = [0.0; 5];
                dh[2] = -p.a_max * p.delta_exp * (human.v / p.v0).powf(p.delta_exp - 1.0) / p.v0;
                Ok((a, [0.0; 5], dh))
            }
            DECISION_BRAKE => {
                let p = &self.brake;
                // Projected ego position after one headway at constant speed.
                let raw_gap = ego.px + p.t_headway * ego.v - human.px - self.gap_offset;
                let gap = smooth_gap(raw_gap, GAP_FLOOR);
                let dgap = smooth_gap_deriv(raw_gap, GAP_FLOOR);
                let v = human.v;
                let dv = v - ego.v;
                let sab = 2.0 * (p.a_max * p.b_comf).sqrt();
                let s_star = p.s0 + v * p.t_headway + v * dv / sab;
                let raw =
                    p.a_max * (1.0 - (v / p.v0).powf(p.delta_exp) - (s_star / gap).powi(2));

                // Chain rule pieces: d(raw)/d(s*) and d(raw)/d(gap).
                let coef_s = -2.0 * p.a_max * s_star / (gap * gap);
                let coef_gap = 2.0 * p.a_max * s_star * s_star / (gap * gap * gap);
                let mut d_raw_e = [0.0; 5];
                let mut d_raw_h = [0.0; 5];
                d_raw_e[0] = coef_gap * dgap;
                d_raw_e[2] = coef_s * (-v / sab) + coef_gap * dgap * p.t_headway;
                d_raw_h[0] = -coef_gap * dgap;
                d_raw_h[2] = -p.a_max * p.delta_exp * (v / p.v0).powf(p.delta_exp - 1.0) / p.v0
                    + coef_s * (p.t_headway + (2.0 * v - ego.v) / sab);

                // Smooth clamp chain.
                let (a, da_draw, da_dv) = smooth_clamped_with_grad(raw, v);
                let mut de = [0.0; 5];
                let mut dh = [0.0; 5];
                for i in 0..5 {
                    de[i] = da_draw * d_raw_e[i];
                    dh[i] = da_draw * d_raw_h[i];
                }
                dh[2] += da_dv;
                Ok((a, de, dh))
            }
            other => Err(DriverError::UnknownDecision(other)),
        }
    }
}

fn smooth_clamped_with_grad(raw: f64, v: f64) -> (f64, f64, f64) {
    let capped = -HUMAN_DECEL_CAP + softplus(raw + HUMAN_DECEL_CAP);
    let dcapped = softplus_deriv(raw + HUMAN_DECEL_CAP);
    let pos = softplus(capped);
    let dpos = softplus_deriv(capped);
    let neg = capped - pos;
    let gate_arg = (v - STANDSTILL_V0) / STANDSTILL_WIDTH;
    let gate = 1.0 / (1.0 + (-gate_arg).exp());
    let dgate = gate * (1.0 - gate) / STANDSTILL_WIDTH;
    let a = pos + neg * gate;
    let da_draw = (dpos + (1.0 - dpos) * gate) * dcapped;
    let da_dv = neg * dgate;
    (a, da_draw, da_dv)
}

/// Scenario-specific bundles of per-decision laws.
#[derive(Debug, Clone)]
pub enum HumanLaws {
    Crossing(CrossingLaws),
    LaneChange(LaneChangeLaws),
}

/// Control action of the (single) human vehicle for a decision; human
/// vehicles hold their lane (`delta = 0`). Applies the standstill clamp
/// `a >= -v/dt` so simulated humans never reverse.
pub fn human_control(
    traffic: &TrafficState,
    decision: usize,
    laws: &HumanLaws,
) -> Result<VehicleControl, DriverError> {
    let human = &traffic.humans[0];
    let (a, dt) = match laws {
        HumanLaws::Crossing(l) => (l.accel(human, decision)?, l.dt),
        HumanLaws::LaneChange(l) => {
            let (a, _, _) = l.accel_with_grad(&traffic.ego, human, decision)?;
            (a, l.dt)
        }
    };
    Ok(VehicleControl::new(a.max(-human.v / dt), 0.0))
}

/// Which feature map a logistic model uses.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum FeatureSpec {
    /// `[progress_e / v_e, progress_h / v_h]` with speed floored.
    Crossing,
    /// `[1, x_e - x_h]` (six entries).
    LaneChange,
}

impl FeatureSpec {
    pub fn dim(&self) -> usize {
        match self {
            FeatureSpec::Crossing => 2,
            FeatureSpec::LaneChange => 6,
        }
    }
}

/// Speed floor for the crossing features (avoids the v = 0 singularity).
pub const V_FLOOR: f64 = 0.1;

/// Smooth floored speed `sqrt(v² + V_FLOOR²)`.
pub fn floored_speed(v: f64) -> f64 {
    (v * v + V_FLOOR * V_FLOOR).sqrt()
}

/// Crossing features: signed progress toward the crossing divided by
/// (floored) speed, for ego and human, each in its own travel frame.
pub fn case1_features(traffic: &TrafficState) -> [f64; 2] {
    let e = &traffic.ego;
    let h = &traffic.humans[0];
    [e.px / floored_speed(e.v), h.px / floored_speed(h.v)]
}

/// Lane-change features: bias plus full state difference.
pub fn case2_features(traffic: &TrafficState) -> [f64; 6] {
    let e = traffic.ego.to_array();
    let h = traffic.humans[0].to_array();
    [1.0, e[0] - h[0], e[1] - h[1], e[2] - h[2], e[3] - h[3], e[4] - h[4]]
}

pub fn features(traffic: &TrafficState, spec: FeatureSpec) -> Vec<f64> {
    match spec {
        FeatureSpec::Crossing => case1_features(traffic).to_vec(),
        FeatureSpec::LaneChange => case2_features(traffic).to_vec(),
    }
}

/// Softmax decision model `P(d) ∝ exp(theta_d' phi)`.
///
/// The weight matrix is stored row-major over features:
/// `theta[f * n_decisions + d]`.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct LogisticModel {
    pub feature_spec: FeatureSpec,
    pub theta: Vec<f64>,
    pub n_features: usize,
    pub n_decisions: usize,
}

impl LogisticModel {
    pub fn zeros(feature_spec: FeatureSpec, n_decisions: usize) -> Self {
        let n_features = feature_spec.dim();
        Self { feature_spec, theta: vec![0.0; n_features * n_decisions], n_features, n_decisions }
    }

    /// Column-wise constructor: `columns[d]` are the weights of decision d.
    pub fn from_columns(feature_spec: FeatureSpec, columns: &[Vec<f64>]) -> Self {
        let n_decisions = columns.len();
        let n_features = feature_spec.dim();
        let mut theta = vec![0.0; n_features * n_decisions];
        for (d, col) in columns.iter().enumerate() {
            assert_eq!(col.len(), n_features);
            for f in 0..n_features {
                theta[f * n_decisions + d] = col[f];
            }
        }
        Self { feature_spec, theta, n_features, n_decisions }
    }

    pub fn logits(&self, phi: &[f64]) -> Vec<f64> {
        assert_eq!(phi.len(), self.n_features);
        let mut out = vec![0.0; self.n_decisions];
        for f in 0..self.n_features {
            for d in 0..self.n_decisions {
                out[d] += self.theta[f * self.n_decisions + d] * phi[f];
            }
        }
        out
    }

    /// Probabilities from features (max-subtraction stabilized).
    pub fn probabilities(&self, phi: &[f64]) -> Vec<f64> {
        softmax(&self.logits(phi))
    }

    /// Probabilities plus their Jacobian with respect to the features:
    /// `jac[d][f] = dP_d / dphi_f`.
    pub fn probabilities_with_feature_grad(&self, phi: &[f64]) -> (Vec<f64>, Vec<Vec<f64>>) {
        let probs = self.probabilities(phi);
        let nd = self.n_decisions;
        let nf = self.n_features;
        let mut mean = vec![0.0; nf];
        for f in 0..nf {
            for d in 0..nd {
                mean[f] += probs[d] * self.theta[f * nd + d];
            }
        }
        let mut jac = vec![vec![0.0; nf]; nd];
        for d in 0..nd {
            for f in 0..nf {
                jac[d][f] = probs[d] * (self.theta[f * nd + d] - mean[f]);
            }
        }
        (probs, jac)
    }
}

/// Numerically stabilized softmax.
pub fn softmax(logits: &[f64]) -> Vec<f64> {
    let max = logits.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = logits.iter().map(|l| (l - max).exp()).collect();
    let sum: f64 = exps.iter().sum();
    exps.iter().map(|e| e / sum).collect()
}

/// Softmax distribution over decisions at a traffic state.
pub fn softmax_distribution(model: &LogisticModel, traffic: &TrafficState) -> Vec<f64> {
    model.probabilities(&features(traffic, model.feature_spec))
}

/// Ground-truth decision model of the lane-change scenario, trading off
/// yielding versus non-yielding drivers through the cooperation
/// coefficient `c`.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct CooperationModel {
    pub c: f64,
    pub vehicle_length: f64,
    pub lane_width: f64,
}

impl CooperationModel {
    pub fn new(c: f64, vehicle_length: f64, lane_width: f64) -> Self {
        assert!((0.0..=1.0).contains(&c), "cooperation coefficient in [0,1]");
        Self { c, vehicle_length, lane_width }
    }

    pub fn cx(&self) -> f64 {
        (1.0 - self.c) * self.vehicle_length
    }

    pub fn cy(&self) -> f64 {
        self.c * self.lane_width
    }
}

/// `P(brake)` from the relative ego-human position; the tracking
/// probability is the complement (components sum to one exactly).
pub fn cooperation_distribution(traffic: &TrafficState, m: &CooperationModel) -> [f64; 2] {
    let e = &traffic.ego;
    let h = &traffic.humans[0];
    let arg = (e.px - h.px - m.cx()) - (e.py - h.py - m.cy());
    let p_brake = 1.0 / (1.0 + (-arg).exp());
    [p_brake, 1.0 - p_brake]
}

/// Labels each velocity step: braking where the velocity strictly
/// decreases (beyond a small threshold), tracking otherwise. Returns one
/// label per transition.
pub fn label_data(velocities: &[f64]) -> Result<Vec<usize>, DriverError> {
    if velocities.len() < 2 {
        return Err(DriverError::TrajectoryTooShort(velocities.len()));
    }
    const STRICT_DECREASE: f64 = 1e-3;
    Ok(velocities
        .windows(2)
        .map(|w| if w[1] < w[0] - STRICT_DECREASE { DECISION_BRAKE } else { DECISION_TRACK })
        .collect())
}

/// Outcome of [`train_logistic`].
#[derive(Debug, Clone)]
pub struct TrainReport {
    pub model: LogisticModel,
    /// Mean cross-entropy after each epoch.
    pub loss_trace: Vec<f64>,
    pub accuracy: f64,
    /// All labels belonged to one class.
    pub single_class: bool,
}

const WEIGHT_CLIP: f64 = 50.0;

/// Full-batch Adam on the mean cross-entropy, starting from zero
/// weights; deterministic. Weights are clipped to ±50 so separable data
/// saturates boundedly.
pub fn train_logistic(
    dataset: &[(Vec<f64>, usize)],
    spec: FeatureSpec,
    n_decisions: usize,
    lr: f64,
    epochs: usize,
) -> Result<TrainReport, DriverError> {
    if dataset.is_empty() {
        return Err(DriverError::EmptyDataset);
    }
    let nf = spec.dim();
    for (phi, label) in dataset {
        if phi.len() != nf {
            return Err(DriverError::FeatureDim { got: phi.len(), want: nf });
        }
        if *label >= n_decisions {
            return Err(DriverError::UnknownDecision(*label));
        }
    }
    let first = dataset[0].1;
    let single_class = dataset.iter().all(|(_, l)| *l == first);

    let mut model = LogisticModel::zeros(spec, n_decisions);
    model.n_features = nf;
    let nw = nf * n_decisions;
    let mut m1 = vec![0.0; nw];
    let mut m2 = vec![0.0; nw];
    let (beta1, beta2, eps_adam) = (0.9, 0.999, 1e-8);
    let inv_n = 1.0 / dataset.len() as f64;
    let mut loss_trace = Vec::with_capacity(epochs);

    let mean_loss = |model: &LogisticModel| -> f64 {
        dataset
            .iter()
            .map(|(phi, label)| {
                let p = model.probabilities(phi);
                -(p[*label].max(1e-300)).ln()
            })
            .sum::<f64>()
            * inv_n
    };

    for t in 1..=epochs {
        let mut grad = vec![0.0; nw];
        for (phi, label) in dataset {
            let p = model.probabilities(phi);
            for d in 0..n_decisions {
                let err = p[d] - if d == *label { 1.0 } else { 0.0 };
                for f in 0..nf {
                    grad[f * n_decisions + d] += err * phi[f] * inv_n;
                }
            }
        }
        for k in 0..nw {
            m1[k] = beta1 * m1[k] + (1.0 - beta1) * grad[k];
            m2[k] = beta2 * m2[k] + (1.0 - beta2) * grad[k] * grad[k];
            let mhat = m1[k] / (1.0 - beta1.powi(t as i32));
            let vhat = m2[k] / (1.0 - beta2.powi(t as i32));
            model.theta[k] =
                (model.theta[k] - lr * mhat / (vhat.sqrt() + eps_adam)).clamp(-WEIGHT_CLIP, WEIGHT_CLIP);
        }
        loss_trace.push(mean_loss(&model));
    }

    let correct = dataset
        .iter()
        .filter(|(phi, label)| {
            let p = model.probabilities(phi);
            let argmax = p
                .iter()
                .enumerate()
                .max_by(|a, b| a.1.partial_cmp(b.1).unwrap())
                .map(|(i, _)| i)
                .unwrap();
            argmax == *label
        })
        .count();
    Ok(TrainReport {
        model,
        loss_trace,
        accuracy: correct as f64 / dataset.len() as f64,
        single_class,
    })
}

/// Serialized weight-file payload.
#[derive(Debug, Serialize, Deserialize)]
pub struct WeightsFile {
    pub feature_spec: FeatureSpec,
    pub theta: Vec<f64>,
    pub n_features: usize,
    pub n_decisions: usize,
}

impl From<&LogisticModel> for WeightsFile {
    fn from(m: &LogisticModel) -> Self {
        Self {
            feature_spec: m.feature_spec,
            theta: m.theta.clone(),
            n_features: m.n_features,
            n_decisions: m.n_decisions,
        }
    }
}

impl WeightsFile {
    pub fn into_model(self) -> Result<LogisticModel, DriverError> {
        if self.theta.len() != self.n_features * self.n_decisions
            || self.n_features != self.feature_spec.dim()
        {
            return Err(DriverError::FeatureDim {
                got: self.theta.len(),
                want: self.feature_spec.dim() * self.n_decisions,
            });
        }
        Ok(LogisticModel {
            feature_spec: self.feature_spec,
            theta: self.theta,
            n_features: self.n_features,
            n_decisions: self.n_decisions,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dynamics::VehicleState;
    use approx::assert_abs_diff_eq;
    use rand::{Rng, SeedableRng};

    fn vstate(px: f64, v: f64) -> VehicleState {
        VehicleState::new(px, 0.0, v, 0.0, 0.0)
    }

    #[test]
    fn idm_free_road_equilibria() {
        let p = IdmParams::new(20.0 / 3.6, 1.0, 1.5, 2.0, 2.0);
        assert_abs_diff_eq!(idm_accel(p.v0, None, &p).unwrap(), 0.0, epsilon = 1e-12);
        assert_abs_diff_eq!(idm_accel(0.0, None, &p).unwrap(), p.a_max, epsilon = 1e-12);
    }

    #[test]
    fn idm_interaction_term_by_hand() {
        // v = v0/2, gap = 2 s*, zero closing speed:
        // a = a_max (1 - 2^-4 - 1/4).
        let p = IdmParams::new(10.0, 1.3, 1.5, 2.0, 2.0);
        let v = p.v0 / 2.0;
        let s_star = p.s0 + v * p.t_headway;
        let a = idm_accel(v, Some((2.0 * s_star, v)), &p).unwrap();
        assert_abs_diff_eq!(a, p.a_max * (1.0 - 0.0625 - 0.25), epsilon = 1e-12);
    }

    #[test]
    fn idm_rejects_nonpositive_gap() {
        let p = IdmParams::new(10.0, 1.0, 1.5, 2.0, 2.0);
        assert_eq!(idm_accel(5.0, Some((0.0, 5.0)), &p), Err(DriverError::NonPositiveGap(0.0)));
    }

    #[test]
    fn crossing_laws_examples() {
        let v_ref = 20.0 / 3.6;
        let laws = CrossingLaws::standard(v_ref, 6.18 / 2.0, 0.7);
        let traffic = TrafficState::new(vstate(-15.0, v_ref), vec![vstate(-15.0, v_ref)]);
        // Tracking at the reference speed is nearly zero acceleration.
        let u = human_control(&traffic, DECISION_TRACK, &HumanLaws::Crossing(laws.clone())).unwrap();
        assert_abs_diff_eq!(u.a, 0.0, epsilon = 1e-9);
        assert_eq!(u.delta, 0.0);
        // Braking decelerates at speed.
        let u = human_control(&traffic, DECISION_BRAKE, &HumanLaws::Crossing(laws.clone())).unwrap();
        assert!(u.a < -0.1, "braking accel {}", u.a);
        // Standstill clamp: at v = 0 the clamped accel is (almost) zero
        // and never reverses.
        let stopped = TrafficState::new(vstate(-15.0, 5.556), vec![vstate(-10.0, 0.0)]);
        let u = human_control(&stopped, DECISION_BRAKE, &HumanLaws::Crossing(laws)).unwrap();
        assert!(u.a >= 0.0 - 1e-12, "standstill accel {}", u.a);
        // Unknown decision errors.
        let traffic2 = TrafficState::new(vstate(0.0, 1.0), vec![vstate(0.0, 1.0)]);
        let laws2 = CrossingLaws::standard(5.0, 3.0, 0.7);
        assert!(matches!(
            human_control(&traffic2, 7, &HumanLaws::Crossing(laws2)),
            Err(DriverError::UnknownDecision(7))
        ));
    }

    #[test]
    fn braking_human_stops_before_crossing() {
        let laws = CrossingLaws::standard(20.0 / 3.6, 6.18 / 2.0, 0.1);
        let hl = HumanLaws::Crossing(laws);
        let g = crate::dynamics::VehicleGeometry::hvc();
        let mut h = vstate(-15.0, 20.0 / 3.6);
        for _ in 0..300 {
            let traffic = TrafficState::new(vstate(-100.0, 0.0), vec![h]);
            let u = human_control(&traffic, DECISION_BRAKE, &hl).unwrap();
            h = crate::dynamics::integrate(&h, &u, &g, 0.1).unwrap();
        }
        assert!(h.v < 0.05, "human still moving at {}", h.v);
        // Front bumper short of the crossing.
        assert!(h.px + 6.18 / 2.0 < 0.0, "human front at {}", h.px + 3.09);
    }

    #[test]
    fn lane_change_gradients_match_finite_differences() {
        let laws = LaneChangeLaws::standard(5.556, 18.08, 0.3);
        let ego = VehicleState::new(2.0, 0.0, 5.0, 0.02, 0.01);
        let human = VehicleState::new(-8.0, -3.75, 5.4, 0.0, 0.0);
        for decision in [DECISION_BRAKE, DECISION_TRACK] {
            let (_, de, dh) = laws.accel_with_grad(&ego, &human, decision).unwrap();
            let h = 1e-6;
            for i in 0..5 {
                let mut ep = ego.to_array();
                let mut em = ego.to_array();
                ep[i] += h;
                em[i] -= h;
                let (ap, _, _) = laws
                    .accel_with_grad(&VehicleState::from_array(ep), &human, decision)
                    .unwrap();
                let (am, _, _) = laws
                    .accel_with_grad(&VehicleState::from_array(em), &human, decision)
                    .unwrap();
                assert_abs_diff_eq!(de[i], (ap - am) / (2.0 * h), epsilon = 1e-6);

                let mut hp = human.to_array();
                let mut hm = human.to_array();
                hp[i] += h;
                hm[i] -= h;
                let (ap, _, _) = laws
                    .accel_with_grad(&ego, &VehicleState::from_array(hp), decision)
                    .unwrap();
                let (am, _, _) = laws
                    .accel_with_grad(&ego, &VehicleState::from_array(hm), decision)
                    .unwrap();
                assert_abs_diff_eq!(dh[i], (ap - am) / (2.0 * h), epsilon = 1e-6);
            }
        }
    }

    #[test]
    fn softmax_examples() {
        let m = LogisticModel::zeros(FeatureSpec::Crossing, 2);
        let traffic = TrafficState::new(vstate(-15.0, 5.556), vec![vstate(-15.0, 5.556)]);
        let p = softmax_distribution(&m, &traffic);
        assert_eq!(p, vec![0.5, 0.5]);
        assert_abs_diff_eq!(softmax(&[3.0f64.ln(), 0.0])[0], 0.75, epsilon = 1e-12);
        assert_abs_diff_eq!(softmax(&[3.0f64.ln(), 0.0])[1], 0.25, epsilon = 1e-12);
    }

    #[test]
    fn crossing_model_symmetric_start() {
        // theta_brake = [0.5, -0.5], theta_track = -theta_brake gives a
        // 50/50 split at the symmetric initial state.
        let m = LogisticModel::from_columns(
            FeatureSpec::Crossing,
            &[vec![0.5, -0.5], vec![-0.5, 0.5]],
        );
        let v = 20.0 / 3.6;
        let traffic = TrafficState::new(vstate(-15.0, v), vec![vstate(-15.0, v)]);
        let phi = case1_features(&traffic);
        assert_abs_diff_eq!(phi[0], -15.0 / floored_speed(v), epsilon = 1e-12);
        assert_abs_diff_eq!(phi[0], -2.7, epsilon = 1e-3);
        assert_abs_diff_eq!(phi[1], phi[0], epsilon = 1e-12);
        let p = softmax_distribution(&m, &traffic);
        assert_abs_diff_eq!(p[0], 0.5, epsilon = 1e-12);
    }

    #[test]
    fn case2_feature_examples() {
        let s = VehicleState::new(1.0, 2.0, 3.0, 0.1, 0.2);
        let traffic = TrafficState::new(s, vec![s]);
        assert_eq!(case2_features(&traffic), [1.0, 0.0, 0.0, 0.0, 0.0, 0.0]);
        let ahead = TrafficState::new(VehicleState::new(6.0, 2.0, 3.0, 0.1, 0.2), vec![s]);
        assert_eq!(case2_features(&ahead), [1.0, 5.0, 0.0, 0.0, 0.0, 0.0]);
    }

    #[test]
    fn softmax_invariances() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(4);
        for _ in 0..500 {
            let logits: Vec<f64> = (0..3).map(|_| rng.gen_range(-5.0..5.0)).collect();
            let p = softmax(&logits);
            assert_abs_diff_eq!(p.iter().sum::<f64>(), 1.0, epsilon = 1e-12);
            let shift = rng.gen_range(-100.0..100.0);
            let shifted: Vec<f64> = logits.iter().map(|l| l + shift).collect();
            let q = softmax(&shifted);
            for (a, b) in p.iter().zip(&q) {
                assert_abs_diff_eq!(*a, *b, epsilon = 1e-9);
            }
        }
    }

    #[test]
    fn argmax_invariant_to_inverse_scaling() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(14);
        for _ in 0..200 {
            let cols: Vec<Vec<f64>> = (0..2)
                .map(|_| (0..2).map(|_| rng.gen_range(-2.0..2.0)).collect())
                .collect();
            let m = LogisticModel::from_columns(FeatureSpec::Crossing, &cols);
            let scale = rng.gen_range(0.1..10.0);
            let scaled_cols: Vec<Vec<f64>> =
                cols.iter().map(|c| c.iter().map(|w| w / scale).collect()).collect();
            let ms = LogisticModel::from_columns(FeatureSpec::Crossing, &scaled_cols);
            let phi: Vec<f64> = (0..2).map(|_| rng.gen_range(-3.0..3.0)).collect();
            let phis: Vec<f64> = phi.iter().map(|f| f * scale).collect();
            let p = m.probabilities(&phi);
            let q = ms.probabilities(&phis);
            let am = |v: &[f64]| {
                v.iter().enumerate().max_by(|a, b| a.1.partial_cmp(b.1).unwrap()).unwrap().0
            };
            assert_eq!(am(&p), am(&q));
        }
    }

    #[test]
    fn probability_feature_grad_matches_fd() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(77);
        let cols: Vec<Vec<f64>> = (0..2)
            .map(|_| (0..6).map(|_| rng.gen_range(-1.0..1.0)).collect())
            .collect();
        let m = LogisticModel::from_columns(FeatureSpec::LaneChange, &cols);
        let phi: Vec<f64> = (0..6).map(|_| rng.gen_range(-2.0..2.0)).collect();
        let (_, jac) = m.probabilities_with_feature_grad(&phi);
        let h = 1e-6;
        for f in 0..6 {
            let mut pp = phi.clone();
            let mut pm = phi.clone();
            pp[f] += h;
            pm[f] -= h;
            let vp = m.probabilities(&pp);
            let vm = m.probabilities(&pm);
            for d in 0..2 {
                assert_abs_diff_eq!(jac[d][f], (vp[d] - vm[d]) / (2.0 * h), epsilon = 1e-7);
            }
        }
    }

    #[test]
    fn cooperation_model_reference_values() {
        let m = CooperationModel::new(0.35, 18.08, 3.75);
        assert_abs_diff_eq!(m.cx(), 11.752, epsilon = 1e-9);
        assert_abs_diff_eq!(m.cy(), 1.3125, epsilon = 1e-12);
        // Relative position exactly (Cx, Cy) gives a 50/50 split.
        let ego = VehicleState::new(m.cx(), m.cy(), 5.0, 0.0, 0.0);
        let human = VehicleState::new(0.0, 0.0, 5.0, 0.0, 0.0);
        let p = cooperation_distribution(&TrafficState::new(ego, vec![human]), &m);
        assert_abs_diff_eq!(p[0], 0.5, epsilon = 1e-12);
        assert_abs_diff_eq!(p[0] + p[1], 1.0, epsilon = 0.0);
        // Ego far ahead: the human yields almost surely.
        let far = VehicleState::new(1e3, 0.0, 5.0, 0.0, 0.0);
        let p = cooperation_distribution(&TrafficState::new(far, vec![human]), &m);
        assert!(p[0] > 1.0 - 1e-9);
    }

    #[test]
    fn labeling_rule() {
        assert_eq!(label_data(&[5.0, 5.0, 5.0]).unwrap(), vec![DECISION_TRACK; 2]);
        assert_eq!(label_data(&[5.0, 4.0, 3.0]).unwrap(), vec![DECISION_BRAKE; 2]);
        let v: Vec<f64> = [20.0, 19.0, 19.0, 20.0].iter().map(|x| x / 3.6).collect();
        assert_eq!(
            label_data(&v).unwrap(),
            vec![DECISION_BRAKE, DECISION_TRACK, DECISION_TRACK]
        );
        assert!(label_data(&[1.0]).is_err());
    }

    #[test]
    fn training_learns_separable_data() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(2);
        let mut data = Vec::new();
        for _ in 0..400 {
            let x = rng.gen_range(-3.0..3.0);
            let y = rng.gen_range(-3.0..3.0);
            let label = if x + 0.5 * y > 0.0 { 0 } else { 1 };
            data.push((vec![x, y], label));
        }
        let report = train_logistic(&data, FeatureSpec::Crossing, 2, 0.01, 500).unwrap();
        assert!(report.accuracy >= 0.99, "accuracy {}", report.accuracy);
        assert!(!report.single_class);
    }

    #[test]
    fn training_matches_class_frequencies_on_noise() {
        // Labels independent of the informative features: the bias column
        // of the lane-change map must soak up the class frequencies.
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(6);
        let mut data = Vec::new();
        for _ in 0..4000 {
            let mut phi = vec![1.0];
            phi.extend((0..5).map(|_| rng.gen_range(-1.0..1.0)));
            let label = if rng.gen_bool(0.7) { 0 } else { 1 };
            data.push((phi, label));
        }
        let report = train_logistic(&data, FeatureSpec::LaneChange, 2, 0.01, 800).unwrap();
        let freq = data.iter().filter(|(_, l)| *l == 0).count() as f64 / data.len() as f64;
        let mean_p0: f64 = data
            .iter()
            .map(|(phi, _)| report.model.probabilities(phi)[0])
            .sum::<f64>()
            / data.len() as f64;
        assert!((mean_p0 - freq).abs() <= 0.02, "{mean_p0} vs {freq}");
    }

    #[test]
    fn zero_epochs_returns_uniform_initialization() {
        let data = vec![(vec![1.0, 2.0], 0usize)];
        let report = train_logistic(&data, FeatureSpec::Crossing, 2, 0.01, 0).unwrap();
        assert!(report.model.theta.iter().all(|&w| w == 0.0));
        assert_eq!(report.model.probabilities(&[3.0, -1.0]), vec![0.5, 0.5]);
    }

    #[test]
    fn single_class_training_is_flagged_and_bounded() {
        let data: Vec<(Vec<f64>, usize)> =
            (0..50).map(|i| (vec![i as f64 / 10.0, 1.0], 0usize)).collect();
        let report = train_logistic(&data, FeatureSpec::Crossing, 2, 0.05, 3000).unwrap();
        assert!(report.single_class);
        assert!(report.model.theta.iter().all(|w| w.abs() <= WEIGHT_CLIP + 1e-12));
        assert!(report.accuracy > 0.99);
    }

    #[test]
    fn training_loss_non_increasing_full_batch() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(8);
        let mut data = Vec::new();
        for _ in 0..300 {
            let x = rng.gen_range(-2.0..2.0);
            let y = rng.gen_range(-2.0..2.0);
            let label = if x - y + rng.gen_range(-0.5..0.5) > 0.0 { 0 } else { 1 };
            data.push((vec![x, y], label));
        }
        let report = train_logistic(&data, FeatureSpec::Crossing, 2, 0.01, 400).unwrap();
        for w in report.loss_trace.windows(2) {
            assert!(w[1] <= w[0] + 1e-6, "loss increased: {} -> {}", w[0], w[1]);
        }
    }

    #[test]
    fn weights_file_round_trip() {
        let m = LogisticModel::from_columns(
            FeatureSpec::Crossing,
            &[vec![0.5, -0.5], vec![-0.5, 0.5]],
        );
        let file = WeightsFile::from(&m);
        let json = serde_json::to_string(&file).unwrap();
        let parsed: WeightsFile = serde_json::from_str(&json).unwrap();
        let back = parsed.into_model().unwrap();
        assert_eq!(back.theta, m.theta);
        assert_eq!(back.feature_spec, m.feature_spec);
    }
}
