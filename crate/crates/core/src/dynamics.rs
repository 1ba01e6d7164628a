//! Tractor-trailer kinematics and fixed-step integration.
//!
//! The continuous-time model is an extended kinematic bicycle for a
//! heavy-vehicle combination: tractor position `(px, py)`, speed `v`,
//! tractor heading `psi1` and trailer heading `psi2`, driven by
//! longitudinal acceleration `a` and steering angle `delta`. The slip
//! angle `beta = atan(tan(delta)/2)` is an internal intermediate.
//!
//! Note: the trailer-heading rate uses `sin(psi1 + psi2)` in its first
//! term while the correction term uses `cos(psi1 - psi2)`. Standard
//! trailer models typically use the heading *difference* in both terms;
//! the mixed form is implemented verbatim here and is what every
//! downstream consumer (planner, simulator, tests) assumes.

use thiserror::Error;

/// Continuous state of one vehicle, measured in its own travel frame.
///
/// Headings are stored unwrapped (no modulo); the operating envelope
/// keeps them well inside one revolution.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct VehicleState {
    /// Longitudinal position (m).
    pub px: f64,
    /// Lateral position (m).
    pub py: f64,
    /// Speed (m/s).
    pub v: f64,
    /// Tractor heading (rad).
    pub psi1: f64,
    /// Trailer heading (rad).
    pub psi2: f64,
}

impl VehicleState {
    pub fn new(px: f64, py: f64, v: f64, psi1: f64, psi2: f64) -> Self {
        Self { px, py, v, psi1, psi2 }
    }

    pub fn to_array(self) -> [f64; 5] {
        [self.px, self.py, self.v, self.psi1, self.psi2]
    }

    pub fn from_array(x: [f64; 5]) -> Self {
        Self { px: x[0], py: x[1], v: x[2], psi1: x[3], psi2: x[4] }
    }

    pub fn is_finite(&self) -> bool {
        self.to_array().iter().all(|c| c.is_finite())
    }
}

/// Control input: longitudinal acceleration (m/s²) and steering angle (rad).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct VehicleControl {
    pub a: f64,
    pub delta: f64,
}

impl VehicleControl {
    pub fn new(a: f64, delta: f64) -> Self {
        Self { a, delta }
    }

    pub fn zero() -> Self {
        Self { a: 0.0, delta: 0.0 }
    }

    pub fn is_finite(&self) -> bool {
        self.a.is_finite() && self.delta.is_finite()
    }
}

/// Fixed shape parameters of a tractor-trailer combination.
#[derive(Debug, Clone, Copy)]
pub struct VehicleGeometry {
    /// Tractor length (m).
    pub l1: f64,
    /// Trailer length, hitch to trailer rear (m).
    pub l2: f64,
    /// Distance from tractor center back to the hitch (m).
    pub l3: f64,
    /// Body width (m).
    pub lw: f64,
}

impl VehicleGeometry {
    pub fn new(l1: f64, l2: f64, l3: f64, lw: f64) -> Self {
        let g = Self { l1, l2, l3, lw };
        assert!(
            l1 > 0.0 && l2 > 0.0 && l3 > 0.0 && lw > 0.0 && l3 < l1,
            "invalid vehicle geometry {g:?}"
        );
        g
    }

    /// Reference heavy-vehicle combination used throughout the experiments.
    pub fn hvc() -> Self {
        Self::new(6.18, 13.60, 1.39, 2.54)
    }

    /// Total occupied length, tractor front bumper to trailer rear.
    pub fn total_length(&self) -> f64 {
        self.l1 / 2.0 + self.l3 + self.l2
    }
}

/// States of every vehicle in the scene; `humans` has one entry per
/// uncontrolled vehicle and its length is fixed per scenario.
#[derive(Debug, Clone, PartialEq)]
pub struct TrafficState {
    pub ego: VehicleState,
    pub humans: Vec<VehicleState>,
}

impl TrafficState {
    pub fn new(ego: VehicleState, humans: Vec<VehicleState>) -> Self {
        Self { ego, humans }
    }
}

#[derive(Debug, Error, PartialEq)]
pub enum DynamicsError {
    #[error("non-finite state or control input")]
    NonFinite,
    #[error("steering angle {0} outside (-pi/2, pi/2)")]
    SteeringRange(f64),
    #[error("time step must be positive, got {0}")]
    NonPositiveStep(f64),
}

fn slip_angle(delta: f64) -> f64 {
    (delta.tan() / 2.0).atan()
}

/// d(beta)/d(delta) for the slip intermediate.
fn slip_angle_ddelta(delta: f64) -> f64 {
    let t = delta.tan();
    let sec2 = 1.0 + t * t;
    (sec2 / 2.0) / (1.0 + t * t / 4.0)
}

/// Time derivative of the vehicle state, packed as a `VehicleState`.
pub fn state_derivative(
    x: &VehicleState,
    u: &VehicleControl,
    g: &VehicleGeometry,
) -> Result<VehicleState, DynamicsError> {
    if !x.is_finite() || !u.is_finite() {
        return Err(DynamicsError::NonFinite);
    }
    if u.delta.abs() >= std::f64::consts::FRAC_PI_2 {
        return Err(DynamicsError::SteeringRange(u.delta));
    }
    let beta = slip_angle(u.delta);
    let (sb, cb) = (beta.sin(), beta.cos());
    let _ = cb;
    let head = x.psi1 + beta;
    let sum = x.psi1 + x.psi2;
    let diff = x.psi1 - x.psi2;
    let k = 2.0 * g.l3 - g.l1;
    Ok(VehicleState {
        px: x.v * head.cos(),
        py: x.v * head.sin(),
        v: u.a,
        psi1: x.v * sb / (g.l1 / 2.0),
        psi2: x.v * sum.sin() / g.l2 - x.v * k * diff.cos() * sb / (g.l1 * g.l2),
    })
}

/// Jacobians of [`state_derivative`] with respect to state (5x5) and
/// control (5x2), evaluated analytically.
pub fn derivative_jacobians(
    x: &VehicleState,
    u: &VehicleControl,
    g: &VehicleGeometry,
) -> ([[f64; 5]; 5], [[f64; 2]; 5]) {
    let beta = slip_angle(u.delta);
    let dbeta = slip_angle_ddelta(u.delta);
    let (sb, cb) = (beta.sin(), beta.cos());
    let head = x.psi1 + beta;
    let (sh, ch) = (head.sin(), head.cos());
    let sum = x.psi1 + x.psi2;
    let diff = x.psi1 - x.psi2;
    let (ss, cs) = (sum.sin(), sum.cos());
    let (sd, cd) = (diff.sin(), diff.cos());
    let k = 2.0 * g.l3 - g.l1;
    let half_l1 = g.l1 / 2.0;
    let l1l2 = g.l1 * g.l2;

    let mut a = [[0.0; 5]; 5];
    // rows: d/dt of (px, py, v, psi1, psi2); cols: (px, py, v, psi1, psi2)
    a[0][2] = ch;
    a[0][3] = -x.v * sh;
    a[1][2] = sh;
    a[1][3] = x.v * ch;
    a[3][2] = sb / half_l1;
    a[4][2] = ss / g.l2 - k * cd * sb / l1l2;
    a[4][3] = x.v * cs / g.l2 + x.v * k * sd * sb / l1l2;
    a[4][4] = x.v * cs / g.l2 - x.v * k * sd * sb / l1l2;

    let mut b = [[0.0; 2]; 5];
    // cols: (a, delta)
    b[0][1] = -x.v * sh * dbeta;
    b[1][1] = x.v * ch * dbeta;
    b[2][0] = 1.0;
    b[3][1] = x.v * cb * dbeta / half_l1;
    b[4][1] = -x.v * k * cd * cb * dbeta / l1l2;
    (a, b)
}

fn add_scaled(x: &VehicleState, k: &VehicleState, h: f64) -> VehicleState {
    VehicleState {
        px: x.px + h * k.px,
        py: x.py + h * k.py,
        v: x.v + h * k.v,
        psi1: x.psi1 + h * k.psi1,
        psi2: x.psi2 + h * k.psi2,
    }
}

/// One classical 4th-order Runge-Kutta step with zero-order-hold control.
pub fn integrate(
    x: &VehicleState,
    u: &VehicleControl,
    g: &VehicleGeometry,
    dt: f64,
) -> Result<VehicleState, DynamicsError> {
    if !(dt > 0.0) {
        return Err(DynamicsError::NonPositiveStep(dt));
    }
    let k1 = state_derivative(x, u, g)?;
    let k2 = state_derivative(&add_scaled(x, &k1, dt / 2.0), u, g)?;
    let k3 = state_derivative(&add_scaled(x, &k2, dt / 2.0), u, g)?;
    let k4 = state_derivative(&add_scaled(x, &k3, dt), u, g)?;
    Ok(VehicleState {
        px: x.px + dt / 6.0 * (k1.px + 2.0 * k2.px + 2.0 * k3.px + k4.px),
        py: x.py + dt / 6.0 * (k1.py + 2.0 * k2.py + 2.0 * k3.py + k4.py),
        v: x.v + dt / 6.0 * (k1.v + 2.0 * k2.v + 2.0 * k3.v + k4.v),
        psi1: x.psi1 + dt / 6.0 * (k1.psi1 + 2.0 * k2.psi1 + 2.0 * k3.psi1 + k4.psi1),
        psi2: x.psi2 + dt / 6.0 * (k1.psi2 + 2.0 * k2.psi2 + 2.0 * k3.psi2 + k4.psi2),
    })
}

fn mat_mul5(a: &[[f64; 5]; 5], b: &[[f64; 5]; 5]) -> [[f64; 5]; 5] {
    let mut c = [[0.0; 5]; 5];
    for i in 0..5 {
        for k in 0..5 {
            let aik = a[i][k];
            if aik == 0.0 {
                continue;
            }
            for j in 0..5 {
                c[i][j] += aik * b[k][j];
            }
        }
    }
    c
}

fn mat_mul5x2(a: &[[f64; 5]; 5], b: &[[f64; 2]; 5]) -> [[f64; 2]; 5] {
    let mut c = [[0.0; 2]; 5];
    for i in 0..5 {
        for k in 0..5 {
            let aik = a[i][k];
            if aik == 0.0 {
                continue;
            }
            c[i][0] += aik * b[k][0];
            c[i][1] += aik * b[k][1];
        }
    }
    c
}

/// RK4 step together with its sensitivities: returns the next state and
/// the Jacobians of the step with respect to the initial state (5x5) and
/// the held control (5x2).
pub fn rk4_with_jacobians(
    x: &VehicleState,
    u: &VehicleControl,
    g: &VehicleGeometry,
    dt: f64,
) -> Result<(VehicleState, [[f64; 5]; 5], [[f64; 2]; 5]), DynamicsError> {
    if !(dt > 0.0) {
        return Err(DynamicsError::NonPositiveStep(dt));
    }
    let x1 = *x;
    let k1 = state_derivative(&x1, u, g)?;
    let x2 = add_scaled(x, &k1, dt / 2.0);
    let k2 = state_derivative(&x2, u, g)?;
    let x3 = add_scaled(x, &k2, dt / 2.0);
    let k3 = state_derivative(&x3, u, g)?;
    let x4 = add_scaled(x, &k3, dt);
    let k4 = state_derivative(&x4, u, g)?;

    let (a1, b1) = derivative_jacobians(&x1, u, g);
    let (a2, b2) = derivative_jacobians(&x2, u, g);
    let (a3, b3) = derivative_jacobians(&x3, u, g);
    let (a4, b4) = derivative_jacobians(&x4, u, g);

    let eye = {
        let mut m = [[0.0; 5]; 5];
        for (i, row) in m.iter_mut().enumerate() {
            row[i] = 1.0;
        }
        m
    };
    let plus_scaled = |k: &[[f64; 5]; 5], h: f64| {
        let mut m = eye;
        for i in 0..5 {
            for j in 0..5 {
                m[i][j] += h * k[i][j];
            }
        }
        m
    };

    // Stage sensitivities: dk_i/dx0 and dk_i/du with chain rule through
    // the intermediate stage states.
    let k1x = a1;
    let k1u = b1;
    let k2x = mat_mul5(&a2, &plus_scaled(&k1x, dt / 2.0));
    let mut k2u = mat_mul5x2(&a2, &{
        let mut m = [[0.0; 2]; 5];
        for i in 0..5 {
            m[i][0] = dt / 2.0 * k1u[i][0];
            m[i][1] = dt / 2.0 * k1u[i][1];
        }
        m
    });
    for i in 0..5 {
        k2u[i][0] += b2[i][0];
        k2u[i][1] += b2[i][1];
    }
    let k3x = mat_mul5(&a3, &plus_scaled(&k2x, dt / 2.0));
    let mut k3u = mat_mul5x2(&a3, &{
        let mut m = [[0.0; 2]; 5];
        for i in 0..5 {
            m[i][0] = dt / 2.0 * k2u[i][0];
            m[i][1] = dt / 2.0 * k2u[i][1];
        }
        m
    });
    for i in 0..5 {
        k3u[i][0] += b3[i][0];
        k3u[i][1] += b3[i][1];
    }
    let k4x = mat_mul5(&a4, &plus_scaled(&k3x, dt));
    let mut k4u = mat_mul5x2(&a4, &{
        let mut m = [[0.0; 2]; 5];
        for i in 0..5 {
            m[i][0] = dt * k3u[i][0];
            m[i][1] = dt * k3u[i][1];
        }
        m
    });
    for i in 0..5 {
        k4u[i][0] += b4[i][0];
        k4u[i][1] += b4[i][1];
    }

    let mut jx = eye;
    let mut ju = [[0.0; 2]; 5];
    for i in 0..5 {
        for j in 0..5 {
            jx[i][j] += dt / 6.0 * (k1x[i][j] + 2.0 * k2x[i][j] + 2.0 * k3x[i][j] + k4x[i][j]);
        }
        for c in 0..2 {
            ju[i][c] = dt / 6.0 * (k1u[i][c] + 2.0 * k2u[i][c] + 2.0 * k3u[i][c] + k4u[i][c]);
        }
    }

    let next = VehicleState {
        px: x.px + dt / 6.0 * (k1.px + 2.0 * k2.px + 2.0 * k3.px + k4.px),
        py: x.py + dt / 6.0 * (k1.py + 2.0 * k2.py + 2.0 * k3.py + k4.py),
        v: x.v + dt / 6.0 * (k1.v + 2.0 * k2.v + 2.0 * k3.v + k4.v),
        psi1: x.psi1 + dt / 6.0 * (k1.psi1 + 2.0 * k2.psi1 + 2.0 * k3.psi1 + k4.psi1),
        psi2: x.psi2 + dt / 6.0 * (k1.psi2 + 2.0 * k2.psi2 + 2.0 * k3.psi2 + k4.psi2),
    };
    Ok((next, jx, ju))
}
