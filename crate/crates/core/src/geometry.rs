//! Vehicle occupancy as unions of convex polygons, an exact polygon
//! distance oracle, and the Lagrange-dual minimum-distance blocks used
//! by the planner.
//!
//! The dual blocks certify `min_pairs dist²(O_e, O_h) >= d_safe²` through
//! collision multipliers `(zeta, mu, nu)` and a shared bound variable
//! `gamma`, which at the optimum equals the smallest squared distance
//! with a negative sign. The oracle in this module is deliberately
//! independent of that machinery so tests can pit one against the other.

use crate::dynamics::{VehicleGeometry, VehicleState};
use crate::solver::{JacobianPattern, NlpProblem};
use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum GeometryError {
    #[error("polytope needs at least 3 vertices, got {0}")]
    TooFewVertices(usize),
    #[error("vertices must form a strictly convex counter-clockwise polygon")]
    NotConvex,
    #[error("degenerate polygon with near-zero area")]
    DegeneratePolygon,
    #[error("non-finite vertex coordinates")]
    NonFinite,
    #[error("safety margin must be positive, got {0}")]
    NonPositiveMargin(f64),
}

/// Convex polygon in body coordinates, counter-clockwise vertex order.
#[derive(Debug, Clone, PartialEq)]
pub struct VPolytope {
    verts: Vec<[f64; 2]>,
}

impl VPolytope {
    pub fn new(verts: Vec<[f64; 2]>) -> Result<Self, GeometryError> {
        if verts.len() < 3 {
            return Err(GeometryError::TooFewVertices(verts.len()));
        }
        if verts.iter().any(|v| !v[0].is_finite() || !v[1].is_finite()) {
            return Err(GeometryError::NonFinite);
        }
        // Strict convexity in CCW order; rules out interior and collinear
        // vertices, so the hull of the vertex set is the vertex set.
        let n = verts.len();
        for i in 0..n {
            let a = verts[i];
            let b = verts[(i + 1) % n];
            let c = verts[(i + 2) % n];
            let cross = (b[0] - a[0]) * (c[1] - b[1]) - (b[1] - a[1]) * (c[0] - b[0]);
            if cross <= 1e-12 {
                return Err(GeometryError::NotConvex);
            }
        }
        Ok(Self { verts })
    }

    /// Axis-aligned `length x width` rectangle centered at the origin.
    pub fn rectangle(length: f64, width: f64) -> Self {
        let (hl, hw) = (length / 2.0, width / 2.0);
        Self::new(vec![[hl, -hw], [hl, hw], [-hl, hw], [-hl, -hw]]).expect("valid rectangle")
    }

    pub fn vertices(&self) -> &[[f64; 2]] {
        &self.verts
    }

    pub fn len(&self) -> usize {
        self.verts.len()
    }

    pub fn is_empty(&self) -> bool {
        self.verts.is_empty()
    }
}

/// Rigid placement: rotation by `heading` followed by translation.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Pose {
    pub position: [f64; 2],
    pub heading: f64,
}

impl Pose {
    pub fn new(position: [f64; 2], heading: f64) -> Self {
        Self { position, heading }
    }
}

/// Placed convex polygon in world coordinates (CCW).
#[derive(Debug, Clone, PartialEq)]
pub struct Polygon {
    pub verts: Vec<[f64; 2]>,
}

impl Polygon {
    pub fn vertices(&self) -> &[[f64; 2]] {
        &self.verts
    }

    fn signed_area(&self) -> f64 {
        let n = self.verts.len();
        let mut s = 0.0;
        for i in 0..n {
            let a = self.verts[i];
            let b = self.verts[(i + 1) % n];
            s += a[0] * b[1] - b[0] * a[1];
        }
        s / 2.0
    }
}

/// Rotates each body vertex by the pose heading, then translates;
/// vertex order is preserved.
pub fn place_vertices(p: &VPolytope, pose: &Pose) -> Polygon {
    let (s, c) = pose.heading.sin_cos();
    let verts = p
        .verts
        .iter()
        .map(|v| {
            [
                pose.position[0] + c * v[0] - s * v[1],
                pose.position[1] + s * v[0] + c * v[1],
            ]
        })
        .collect();
    Polygon { verts }
}

/// How one body unit is anchored to the vehicle state.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Placement {
    /// Centered at `(px, py)` with heading `psi1`.
    Tractor,
    /// Centered `l2/2` behind the hitch along heading `psi2`; the hitch
    /// sits `l3` behind the tractor center along `psi1`.
    Trailer,
}

/// Union of placed convex units forming a vehicle's occupied space.
#[derive(Debug, Clone)]
pub struct BodyShape {
    pub units: Vec<(VPolytope, Placement)>,
}

impl BodyShape {
    /// Two-unit tractor-trailer footprint.
    pub fn hvc(g: &VehicleGeometry) -> Self {
        Self {
            units: vec![
                (VPolytope::rectangle(g.l1, g.lw), Placement::Tractor),
                (VPolytope::rectangle(g.l2, g.lw), Placement::Trailer),
            ],
        }
    }

    /// Single rectangular footprint (e.g. a rigid vehicle).
    pub fn single(length: f64, width: f64) -> Self {
        Self {
            units: vec![(VPolytope::rectangle(length, width), Placement::Tractor)],
        }
    }

    pub fn n_units(&self) -> usize {
        self.units.len()
    }
}

/// Rotation mapping a vehicle's travel frame into world coordinates.
///
/// States are stored per-vehicle in a frame aligned with the direction of
/// travel (position = progress along the road, crossing/lane origin at 0);
/// geometry composes this rotation on top of the in-frame pose.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Frame {
    pub rotation: f64,
}

impl Frame {
    pub fn identity() -> Self {
        Self { rotation: 0.0 }
    }

    pub fn rotated(rotation: f64) -> Self {
        Self { rotation }
    }

    pub fn to_world(&self, p: [f64; 2]) -> [f64; 2] {
        let (s, c) = self.rotation.sin_cos();
        [c * p[0] - s * p[1], s * p[0] + c * p[1]]
    }
}

fn unit_pose(x: &VehicleState, g: &VehicleGeometry, placement: Placement) -> Pose {
    match placement {
        Placement::Tractor => Pose::new([x.px, x.py], x.psi1),
        Placement::Trailer => {
            let hitch = [x.px - g.l3 * x.psi1.cos(), x.py - g.l3 * x.psi1.sin()];
            Pose::new(
                [
                    hitch[0] - g.l2 / 2.0 * x.psi2.cos(),
                    hitch[1] - g.l2 / 2.0 * x.psi2.sin(),
                ],
                x.psi2,
            )
        }
    }
}

/// World-frame tractor and trailer polygons for a vehicle state measured
/// in an identity frame.
pub fn vehicle_polytopes(x: &VehicleState, g: &VehicleGeometry) -> [Polygon; 2] {
    let shape = BodyShape::hvc(g);
    let polys = body_polytopes(&shape, x, g, &Frame::identity());
    [polys[0].clone(), polys[1].clone()]
}

/// Places every unit of a body shape, composing the vehicle frame.
pub fn body_polytopes(
    shape: &BodyShape,
    x: &VehicleState,
    g: &VehicleGeometry,
    frame: &Frame,
) -> Vec<Polygon> {
    shape
        .units
        .iter()
        .map(|(poly, placement)| {
            let pose = unit_pose(x, g, *placement);
            let world_pose = Pose::new(frame.to_world(pose.position), frame.rotation + pose.heading);
            place_vertices(poly, &world_pose)
        })
        .collect()
}

/// World position of one body vertex together with its Jacobian with
/// respect to the vehicle state (identity frame assumed; the planner only
/// differentiates states expressed in identity frames).
pub fn unit_vertex_jacobian(
    x: &VehicleState,
    g: &VehicleGeometry,
    placement: Placement,
    vbody: [f64; 2],
) -> ([f64; 2], [[f64; 5]; 2]) {
    let mut jac = [[0.0; 5]; 2];
    jac[0][0] = 1.0;
    jac[1][1] = 1.0;
    match placement {
        Placement::Tractor => {
            let (s1, c1) = x.psi1.sin_cos();
            let v = [
                x.px + c1 * vbody[0] - s1 * vbody[1],
                x.py + s1 * vbody[0] + c1 * vbody[1],
            ];
            jac[0][3] = -s1 * vbody[0] - c1 * vbody[1];
            jac[1][3] = c1 * vbody[0] - s1 * vbody[1];
            (v, jac)
        }
        Placement::Trailer => {
            let (s1, c1) = x.psi1.sin_cos();
            let (s2, c2) = x.psi2.sin_cos();
            let cx = x.px - g.l3 * c1 - g.l2 / 2.0 * c2;
            let cy = x.py - g.l3 * s1 - g.l2 / 2.0 * s2;
            let v = [cx + c2 * vbody[0] - s2 * vbody[1], cy + s2 * vbody[0] + c2 * vbody[1]];
            jac[0][3] = g.l3 * s1;
            jac[1][3] = -g.l3 * c1;
            jac[0][4] = g.l2 / 2.0 * s2 - s2 * vbody[0] - c2 * vbody[1];
            jac[1][4] = -g.l2 / 2.0 * c2 + c2 * vbody[0] - s2 * vbody[1];
            (v, jac)
        }
    }
}

/// Second derivatives of a placed vertex with respect to the heading
/// states: returns (d²v/dpsi1², d²v/dpsi2²); the psi1-psi2 cross term is
/// identically zero for both placements.
pub fn unit_vertex_heading_hessians(
    x: &VehicleState,
    g: &VehicleGeometry,
    placement: Placement,
    vbody: [f64; 2],
) -> ([f64; 2], [f64; 2]) {
    match placement {
        Placement::Tractor => {
            let (s1, c1) = x.psi1.sin_cos();
            (
                [-c1 * vbody[0] + s1 * vbody[1], -s1 * vbody[0] - c1 * vbody[1]],
                [0.0, 0.0],
            )
        }
        Placement::Trailer => {
            let (s1, c1) = x.psi1.sin_cos();
            let (s2, c2) = x.psi2.sin_cos();
            (
                [g.l3 * c1, g.l3 * s1],
                [
                    g.l2 / 2.0 * c2 - c2 * vbody[0] + s2 * vbody[1],
                    g.l2 / 2.0 * s2 - s2 * vbody[0] - c2 * vbody[1],
                ],
            )
        }
    }
}

fn point_segment_distance_sq(p: [f64; 2], a: [f64; 2], b: [f64; 2]) -> (f64, [f64; 2]) {
    let ab = [b[0] - a[0], b[1] - a[1]];
    let ap = [p[0] - a[0], p[1] - a[1]];
    let len2 = ab[0] * ab[0] + ab[1] * ab[1];
    let t = if len2 > 0.0 {
        ((ap[0] * ab[0] + ap[1] * ab[1]) / len2).clamp(0.0, 1.0)
    } else {
        0.0
    };
    let q = [a[0] + t * ab[0], a[1] + t * ab[1]];
    let d = [p[0] - q[0], p[1] - q[1]];
    (d[0] * d[0] + d[1] * d[1], q)
}

fn polygons_overlap(a: &Polygon, b: &Polygon) -> bool {
    // Separating-axis test over both polygons' edge normals.
    for (first, second) in [(a, b), (b, a)] {
        let n = first.verts.len();
        for i in 0..n {
            let p0 = first.verts[i];
            let p1 = first.verts[(i + 1) % n];
            let axis = [p1[1] - p0[1], -(p1[0] - p0[0])];
            let project = |poly: &Polygon| {
                let mut lo = f64::INFINITY;
                let mut hi = f64::NEG_INFINITY;
                for v in &poly.verts {
                    let d = v[0] * axis[0] + v[1] * axis[1];
                    lo = lo.min(d);
                    hi = hi.max(d);
                }
                (lo, hi)
            };
            let (alo, ahi) = project(first);
            let (blo, bhi) = project(second);
            if ahi < blo || bhi < alo {
                return false;
            }
        }
    }
    true
}

fn check_polygon(p: &Polygon) -> Result<(), GeometryError> {
    if p.verts.len() < 3 {
        return Err(GeometryError::TooFewVertices(p.verts.len()));
    }
    if p.signed_area().abs() < 1e-12 {
        return Err(GeometryError::DegeneratePolygon);
    }
    Ok(())
}

/// Exact minimum squared distance between two convex polygons: zero when
/// they overlap, otherwise the minimum over all vertex-edge pairs.
pub fn distance_oracle(a: &Polygon, b: &Polygon) -> Result<f64, GeometryError> {
    check_polygon(a)?;
    check_polygon(b)?;
    if polygons_overlap(a, b) {
        return Ok(0.0);
    }
    Ok(closest_pair(a, b).0)
}

/// Closest points realizing the oracle distance; `None` when the
/// polygons overlap.
pub fn closest_points(a: &Polygon, b: &Polygon) -> Option<([f64; 2], [f64; 2])> {
    if polygons_overlap(a, b) {
        return None;
    }
    let (_, pa, pb) = closest_pair(a, b);
    Some((pa, pb))
}

fn closest_pair(a: &Polygon, b: &Polygon) -> (f64, [f64; 2], [f64; 2]) {
    let mut best = (f64::INFINITY, [0.0; 2], [0.0; 2]);
    let na = a.verts.len();
    let nb = b.verts.len();
    for &v in &a.verts {
        for i in 0..nb {
            let (d2, q) = point_segment_distance_sq(v, b.verts[i], b.verts[(i + 1) % nb]);
            if d2 < best.0 {
                best = (d2, v, q);
            }
        }
    }
    for &v in &b.verts {
        for i in 0..na {
            let (d2, q) = point_segment_distance_sq(v, a.verts[i], a.verts[(i + 1) % na]);
            if d2 < best.0 {
                best = (d2, q, v);
            }
        }
    }
    best
}

/// Dual minimum-distance constraint block over every (ego unit, human
/// unit) pair for fixed world polygons.
///
/// Variables are laid out as `[gamma, (zeta_x, zeta_y, mu, nu) per pair]`.
/// Rows per pair: the quadratic bound `zeta'zeta/4 + mu + nu - gamma <= 0`
/// followed by one support row per ego vertex (`-v'zeta - mu <= 0`) and
/// per human vertex (`v'zeta - nu <= 0`).
#[derive(Debug, Clone)]
pub struct DualBlock {
    pub ego: Vec<Polygon>,
    pub human: Vec<Polygon>,
    pub d_safe: f64,
    pairs: Vec<(usize, usize)>,
}

impl DualBlock {
    pub fn new(ego: Vec<Polygon>, human: Vec<Polygon>, d_safe: f64) -> Result<Self, GeometryError> {
        if !(d_safe > 0.0) {
            return Err(GeometryError::NonPositiveMargin(d_safe));
        }
        for p in ego.iter().chain(human.iter()) {
            check_polygon(p)?;
        }
        let mut pairs = Vec::new();
        for l in 0..ego.len() {
            for lt in 0..human.len() {
                pairs.push((l, lt));
            }
        }
        Ok(Self { ego, human, d_safe, pairs })
    }

    pub fn n_pairs(&self) -> usize {
        self.pairs.len()
    }

    /// gamma plus (zeta, mu, nu) per pair.
    pub fn n_vars(&self) -> usize {
        1 + 4 * self.pairs.len()
    }

    /// Inequality rows excluding the `gamma <= -d_safe²` cap.
    pub fn n_rows(&self) -> usize {
        self.pairs
            .iter()
            .map(|&(l, lt)| 1 + self.ego[l].verts.len() + self.human[lt].verts.len())
            .sum()
    }

    fn var_gamma(&self) -> usize {
        0
    }

    fn var_pair(&self, p: usize) -> usize {
        1 + 4 * p
    }

    pub fn residuals(&self, z: &[f64], out: &mut [f64]) {
        let gamma = z[self.var_gamma()];
        let mut r = 0;
        for (p, &(l, lt)) in self.pairs.iter().enumerate() {
            let base = self.var_pair(p);
            let zeta = [z[base], z[base + 1]];
            let (mu, nu) = (z[base + 2], z[base + 3]);
            out[r] = 0.25 * (zeta[0] * zeta[0] + zeta[1] * zeta[1]) + mu + nu - gamma;
            r += 1;
            for v in &self.ego[l].verts {
                out[r] = -(v[0] * zeta[0] + v[1] * zeta[1]) - mu;
                r += 1;
            }
            for v in &self.human[lt].verts {
                out[r] = v[0] * zeta[0] + v[1] * zeta[1] - nu;
                r += 1;
            }
        }
    }

    pub fn jacobian_pattern(&self) -> Vec<(usize, usize)> {
        let mut pat = Vec::new();
        let mut r = 0;
        for (p, &(l, lt)) in self.pairs.iter().enumerate() {
            let base = self.var_pair(p);
            pat.extend([
                (r, base),
                (r, base + 1),
                (r, base + 2),
                (r, base + 3),
                (r, self.var_gamma()),
            ]);
            r += 1;
            for _ in &self.ego[l].verts {
                pat.extend([(r, base), (r, base + 1), (r, base + 2)]);
                r += 1;
            }
            for _ in &self.human[lt].verts {
                pat.extend([(r, base), (r, base + 1), (r, base + 3)]);
                r += 1;
            }
        }
        pat
    }

    pub fn jacobian_values(&self, z: &[f64], out: &mut Vec<f64>) {
        out.clear();
        for (p, &(l, lt)) in self.pairs.iter().enumerate() {
            let base = self.var_pair(p);
            let zeta = [z[base], z[base + 1]];
            out.extend([0.5 * zeta[0], 0.5 * zeta[1], 1.0, 1.0, -1.0]);
            for v in &self.ego[l].verts {
                out.extend([-v[0], -v[1], -1.0]);
            }
            for v in &self.human[lt].verts {
                out.extend([v[0], v[1], -1.0]);
            }
        }
    }

    /// Multiplier initialization from the oracle's closest-point witnesses:
    /// `zeta* = 2 (p_e* - p_h*)`, support values for `mu`, `nu`, and
    /// `gamma` slightly above the tightest pair bound.
    pub fn witness_start(&self) -> Vec<f64> {
        let mut z = vec![0.0; self.n_vars()];
        let mut worst = f64::NEG_INFINITY;
        for (p, &(l, lt)) in self.pairs.iter().enumerate() {
            let base = self.var_pair(p);
            let (zeta, mu, nu) = match closest_points(&self.ego[l], &self.human[lt]) {
                Some((pe, ph)) => {
                    let zeta = [2.0 * (pe[0] - ph[0]), 2.0 * (pe[1] - ph[1])];
                    let mu = -self.ego[l]
                        .verts
                        .iter()
                        .map(|v| v[0] * zeta[0] + v[1] * zeta[1])
                        .fold(f64::INFINITY, f64::min);
                    let nu = self.human[lt]
                        .verts
                        .iter()
                        .map(|v| v[0] * zeta[0] + v[1] * zeta[1])
                        .fold(f64::NEG_INFINITY, f64::max);
                    (zeta, mu, nu)
                }
                None => ([0.0, 0.0], 1.0, 1.0),
            };
            z[base] = zeta[0];
            z[base + 1] = zeta[1];
            z[base + 2] = mu;
            z[base + 3] = nu;
            worst = worst.max(0.25 * (zeta[0] * zeta[0] + zeta[1] * zeta[1]) + mu + nu);
        }
        z[self.var_gamma()] = worst + 0.1;
        z
    }
}

/// Standalone program over one dual block.
///
/// Without `enforce_margin` it minimizes `gamma`, whose optimum is
/// `-min_pairs dist²`. With `enforce_margin` it is a pure feasibility
/// problem with the added cap `gamma + d_safe² <= 0`, which is
/// infeasible exactly when the bodies come closer than the margin.
pub struct DualDistanceProblem {
    pub block: DualBlock,
    pub enforce_margin: bool,
    ineq_pattern: JacobianPattern,
}

impl DualDistanceProblem {
    pub fn new(block: DualBlock, enforce_margin: bool) -> Self {
        let mut pat = block.jacobian_pattern();
        let mut rows = block.n_rows();
        if enforce_margin {
            pat.push((rows, 0));
            rows += 1;
        }
        let ineq_pattern = JacobianPattern { rows, entries: pat };
        Self { block, enforce_margin, ineq_pattern }
    }
}

impl NlpProblem for DualDistanceProblem {
    fn n_vars(&self) -> usize {
        self.block.n_vars()
    }

    fn bounds(&self, lower: &mut [f64], upper: &mut [f64]) {
        lower.fill(f64::NEG_INFINITY);
        upper.fill(f64::INFINITY);
    }

    fn objective(&self, x: &[f64], grad: Option<&mut [f64]>) -> f64 {
        if self.enforce_margin {
            if let Some(g) = grad {
                g.fill(0.0);
            }
            return 0.0;
        }
        if let Some(g) = grad {
            g.fill(0.0);
            g[0] = 1.0;
        }
        x[0]
    }

    fn eq_pattern(&self) -> JacobianPattern {
        JacobianPattern { rows: 0, entries: Vec::new() }
    }

    fn ineq_pattern(&self) -> JacobianPattern {
        self.ineq_pattern.clone()
    }

    fn eval_eq(&self, _x: &[f64], _res: &mut [f64], _jac: Option<&mut Vec<f64>>) {}

    fn eval_ineq(&self, x: &[f64], res: &mut [f64], jac: Option<&mut Vec<f64>>) {
        let rows = self.block.n_rows();
        self.block.residuals(x, &mut res[..rows]);
        if self.enforce_margin {
            res[rows] = x[0] + self.block.d_safe * self.block.d_safe;
        }
        if let Some(vals) = jac {
            self.block.jacobian_values(x, vals);
            if self.enforce_margin {
                vals.push(1.0);
            }
        }
    }

    fn hessian_pattern(&self) -> Option<Vec<(usize, usize)>> {
        // Curvature lives only in the quadratic rows' zeta entries.
        let mut pat = Vec::new();
        for p in 0..self.block.n_pairs() {
            let base = self.block.var_pair(p);
            pat.push((base, base));
            pat.push((base + 1, base + 1));
        }
        Some(pat)
    }

    fn eval_hessian(&self, _x: &[f64], _obj_w: f64, _y: &[f64], z: &[f64], vals: &mut Vec<f64>) {
        vals.clear();
        let mut row = 0;
        for &(l, lt) in &self.block.pairs {
            let w = 0.5 * z[row];
            vals.push(w);
            vals.push(w);
            row += 1 + self.block.ego[l].verts.len() + self.block.human[lt].verts.len();
        }
    }
}


#[cfg(test)]
mod solver_tests {
    use super::*;
    use crate::solver::{solve, SolveOptions, SolveStatus};
    use approx::assert_abs_diff_eq;
    use rand::{Rng, SeedableRng};

    fn square_at(cx: f64, cy: f64, heading: f64) -> Polygon {
        place_vertices(&VPolytope::rectangle(1.0, 1.0), &Pose::new([cx, cy], heading))
    }

    #[test]
    fn minimized_gamma_certifies_oracle_distance() {
        // Two separated unit squares with gap 2: gamma* = -4.
        let block = DualBlock::new(
            vec![square_at(0.0, 0.0, 0.0)],
            vec![square_at(3.0, 0.0, 0.0)],
            0.1,
        )
        .unwrap();
        let x0 = block.witness_start();
        let p = DualDistanceProblem::new(block, false);
        let r = solve(&p, &x0, &SolveOptions::default());
        assert_eq!(r.status, SolveStatus::Optimal, "{r:?}");
        assert_abs_diff_eq!(r.x[0], -4.0, epsilon = 1e-5);
    }

    #[test]
    fn single_pair_reduces_to_scalar_system() {
        // One pair: at the optimum gamma = -(zeta'zeta/4 + mu + nu).
        let block = DualBlock::new(
            vec![square_at(0.0, 0.0, 0.3)],
            vec![square_at(4.0, 1.0, -0.2)],
            0.1,
        )
        .unwrap();
        let x0 = block.witness_start();
        let p = DualDistanceProblem::new(block, false);
        let r = solve(&p, &x0, &SolveOptions::default());
        assert_eq!(r.status, SolveStatus::Optimal);
        let quad = 0.25 * (r.x[1] * r.x[1] + r.x[2] * r.x[2]) + r.x[3] + r.x[4];
        assert_abs_diff_eq!(r.x[0], quad, epsilon = 1e-5);
    }

    #[test]
    fn overlap_makes_margin_infeasible() {
        let block = DualBlock::new(
            vec![square_at(0.0, 0.0, 0.0)],
            vec![square_at(0.5, 0.0, 0.0)],
            0.3,
        )
        .unwrap();
        let x0 = block.witness_start();
        let p = DualDistanceProblem::new(block, true);
        let opts = SolveOptions { max_iter: 300, ..Default::default() };
        let r = solve(&p, &x0, &opts);
        assert_eq!(r.status, SolveStatus::Infeasible, "{r:?}");
    }

    #[test]
    fn feasible_margin_with_multi_unit_bodies() {
        let g = crate::dynamics::VehicleGeometry::hvc();
        let ego = vehicle_polytopes(&crate::dynamics::VehicleState::new(0.0, 0.0, 0.0, 0.0, 0.0), &g);
        let hum = vehicle_polytopes(&crate::dynamics::VehicleState::new(25.0, 3.0, 0.0, 0.1, 0.05), &g);
        let block = DualBlock::new(ego.to_vec(), hum.to_vec(), 0.605).unwrap();
        let x0 = block.witness_start();
        let p = DualDistanceProblem::new(block, true);
        let r = solve(&p, &x0, &SolveOptions::default());
        assert_eq!(r.status, SolveStatus::Optimal, "{r:?}");
        assert!(r.x[0] <= -0.605 * 0.605 + 1e-8);
    }

    #[test]
    fn random_rectangle_pairs_match_oracle() {
        // Trimmed-down version of the acceptance sweep for fast feedback.
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(99);
        for trial in 0..40 {
            let (a, b) = random_separated_pair(&mut rng);
            let d2 = distance_oracle(&a, &b).unwrap();
            let block = DualBlock::new(vec![a], vec![b], 0.1).unwrap();
            let x0 = block.witness_start();
            let p = DualDistanceProblem::new(block, false);
            let r = solve(&p, &x0, &SolveOptions::default());
            assert_eq!(r.status, SolveStatus::Optimal, "trial {trial}: {r:?}");
            assert_abs_diff_eq!((-r.x[0]).sqrt(), d2.sqrt(), epsilon = 1e-5);
        }
    }

    pub(crate) fn random_separated_pair(rng: &mut rand_chacha::ChaCha8Rng) -> (Polygon, Polygon) {
        fn make(rng: &mut rand_chacha::ChaCha8Rng, lo: f64, hi: f64) -> Polygon {
            let len = rng.gen_range(0.5..15.0);
            let wid = rng.gen_range(0.5..15.0);
            let heading = rng.gen_range(0.0..std::f64::consts::TAU);
            let cx = rng.gen_range(lo..hi);
            let cy = rng.gen_range(lo..hi);
            place_vertices(&VPolytope::rectangle(len, wid), &Pose::new([cx, cy], heading))
        }
        loop {
            let a = make(rng, -10.0, 10.0);
            let b = make(rng, -40.0, 40.0);
            if distance_oracle(&a, &b).unwrap() > 1e-6 {
                return (a, b);
            }
        }
    }
}
