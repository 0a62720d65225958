//! Reconstruction of the immersion by integrating the moving-frame system
//!
//! ```text
//! d e_I = omega_I^J e_J,   omega_{a I}^J = eta_I W_a^{IJ}
//! d q   = theta^I e_I,     theta^I = theta_a^I dx^a
//! ```
//!
//! along polylines in coordinate space with a fixed-step classical RK4 scheme.
//! Frames and positions are stored as components in the fixed basis.

use std::io::Write;
use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::expr::{Dual4, EvalError, Expr, NVARS};
use crate::geometry::{
    connection_field, eta, frame, orthonormality_residual, ConnectionAtPoint, GeometryError,
};
use crate::solutions::closed_connection;
use crate::spin_field::{Differentiation, Point, SpinFieldSpec, AMBIENT_DIM, TANGENT_DIM};

pub type Matrix = [[f64; AMBIENT_DIM]; AMBIENT_DIM];
pub type Vector = [f64; AMBIENT_DIM];

pub const DEFAULT_STEPS: usize = 256;

#[derive(Debug, Error)]
pub enum ImmersionError {
    #[error(transparent)]
    Geometry(#[from] GeometryError),
    #[error(transparent)]
    Eval(#[from] EvalError),
    #[error("invalid path: {0}")]
    InvalidPath(String),
    #[error("invalid grid: {0}")]
    InvalidGrid(String),
    #[error("frames were integrated on a different discretization: {0}")]
    DiscretizationMismatch(String),
    #[error("invalid vielbein: {0}")]
    InvalidVielbein(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// Anything that can report the connection `W_a^{IJ}` at a coordinate point.
pub trait ConnectionSource: Sync {
    fn connection_at(&self, x: Point) -> Result<ConnectionAtPoint, GeometryError>;
}

/// Connection by Killing extraction from a spin field.
#[derive(Debug, Clone)]
pub struct ExtractedConnection {
    pub spec: SpinFieldSpec,
    pub diff: Differentiation,
}

impl ExtractedConnection {
    pub fn new(spec: SpinFieldSpec) -> Self {
        ExtractedConnection {
            spec,
            diff: Differentiation::Automatic,
        }
    }
}

impl ConnectionSource for ExtractedConnection {
    fn connection_at(&self, x: Point) -> Result<ConnectionAtPoint, GeometryError> {
        connection_field(&self.spec, x, self.diff)
    }
}

/// Connection from the closed-form type-A/type-B expressions.
#[derive(Debug, Clone)]
pub struct ClosedFormConnection(pub SpinFieldSpec);

impl ConnectionSource for ClosedFormConnection {
    fn connection_at(&self, x: Point) -> Result<ConnectionAtPoint, GeometryError> {
        Ok(closed_connection(&self.0, x)?)
    }
}

#[derive(Debug, Clone, Copy)]
pub struct ConstantConnection(pub ConnectionAtPoint);

impl ConnectionSource for ConstantConnection {
    fn connection_at(&self, _: Point) -> Result<ConnectionAtPoint, GeometryError> {
        Ok(self.0)
    }
}

/// Adapter for closures.
pub struct FnConnection<F>(pub F);

impl<F> ConnectionSource for FnConnection<F>
where
    F: Fn(Point) -> Result<ConnectionAtPoint, GeometryError> + Sync,
{
    fn connection_at(&self, x: Point) -> Result<ConnectionAtPoint, GeometryError> {
        (self.0)(x)
    }
}

/// Polyline in coordinate space, each segment split into `steps` equal steps.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PathSpec {
    pub waypoints: Vec<Point>,
    #[serde(default = "default_steps")]
    pub steps: usize,
}

fn default_steps() -> usize {
    DEFAULT_STEPS
}

impl PathSpec {
    pub fn new(waypoints: Vec<Point>, steps: usize) -> Result<Self, ImmersionError> {
        let path = PathSpec { waypoints, steps };
        path.validate()?;
        Ok(path)
    }

    pub fn segment(from: Point, to: Point, steps: usize) -> Result<Self, ImmersionError> {
        Self::new(vec![from, to], steps)
    }

    /// Closed axis-aligned square with corner `base` in the `(a, b)` coordinate plane.
    pub fn square_loop(
        base: Point,
        a: usize,
        b: usize,
        side: f64,
        steps: usize,
    ) -> Result<Self, ImmersionError> {
        let mut p1 = base;
        p1[a] += side;
        let mut p2 = p1;
        p2[b] += side;
        let mut p3 = base;
        p3[b] += side;
        Self::new(vec![base, p1, p2, p3, base], steps)
    }

    pub fn validate(&self) -> Result<(), ImmersionError> {
        if self.waypoints.len() < 2 {
            return Err(ImmersionError::InvalidPath(
                "a path needs at least two waypoints".into(),
            ));
        }
        if self.steps == 0 {
            return Err(ImmersionError::InvalidPath("steps must be at least 1".into()));
        }
        if self.waypoints.iter().flatten().any(|v| !v.is_finite()) {
            return Err(ImmersionError::InvalidPath("waypoints must be finite".into()));
        }
        Ok(())
    }

    pub fn start(&self) -> Point {
        self.waypoints[0]
    }

    pub fn end(&self) -> Point {
        *self.waypoints.last().expect("validated path")
    }

    /// Total number of integration steps.
    pub fn total_steps(&self) -> usize {
        self.steps * (self.waypoints.len() - 1)
    }

    /// Start point and coordinate velocity (per unit step parameter) of step `n`.
    fn step(&self, n: usize) -> (Point, Point) {
        let seg = n / self.steps;
        let k = n % self.steps;
        let (p, q) = (self.waypoints[seg], self.waypoints[seg + 1]);
        let t = k as f64 / self.steps as f64;
        let v: Point = std::array::from_fn(|a| (q[a] - p[a]) / self.steps as f64);
        let x: Point = std::array::from_fn(|a| p[a] + t * (q[a] - p[a]));
        (x, v)
    }
}

/// Position and frame in the fixed basis: `e[I][J]` is the `J` component of `e_I`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FrameState {
    pub q: Vector,
    pub e: Matrix,
}

impl FrameState {
    pub fn identity() -> Self {
        FrameState {
            q: [0.0; AMBIENT_DIM],
            e: std::array::from_fn(|i| std::array::from_fn(|j| if i == j { 1.0 } else { 0.0 })),
        }
    }

    /// The moving frame of a spin field at `x`, placed at `q`.
    pub fn from_field(spec: &SpinFieldSpec, x: Point, q: Vector) -> Result<Self, ImmersionError> {
        Ok(FrameState {
            q,
            e: frame(spec, x)?.e,
        })
    }

    pub fn orthonormality_residual(&self) -> f64 {
        orthonormality_residual(&self.e)
    }

    /// Largest component difference in frame and position.
    pub fn distance(&self, other: &FrameState) -> f64 {
        let dq = self.q.iter().zip(&other.q).fold(0.0f64, |m, (a, b)| m.max((a - b).abs()));
        let de = self
            .e
            .iter()
            .flatten()
            .zip(other.e.iter().flatten())
            .fold(0.0f64, |m, (a, b)| m.max((a - b).abs()));
        dq.max(de)
    }

    pub fn frame_distance(&self, other: &FrameState) -> f64 {
        FrameState { q: other.q, ..*self }.distance(other)
    }
}

/// `M = sum_a v^a eta_I W_a^{IJ}`, so that `de/ds = M e`.
fn generator(conn: &ConnectionAtPoint, v: &Point) -> Matrix {
    let mut m = [[0.0; AMBIENT_DIM]; AMBIENT_DIM];
    for (a, &va) in v.iter().enumerate() {
        if va == 0.0 {
            continue;
        }
        for (i, row) in m.iter_mut().enumerate() {
            for (j, slot) in row.iter_mut().enumerate() {
                *slot += va * eta(i) * conn.get(a, i, j);
            }
        }
    }
    m
}

fn mat_mul(m: &Matrix, e: &Matrix) -> Matrix {
    let mut out = [[0.0; AMBIENT_DIM]; AMBIENT_DIM];
    for i in 0..AMBIENT_DIM {
        for k in 0..AMBIENT_DIM {
            let mik = m[i][k];
            if mik == 0.0 {
                continue;
            }
            for j in 0..AMBIENT_DIM {
                out[i][j] += mik * e[k][j];
            }
        }
    }
    out
}

fn axpy(e: &Matrix, h: f64, k: &Matrix) -> Matrix {
    std::array::from_fn(|i| std::array::from_fn(|j| e[i][j] + h * k[i][j]))
}

/// Frames along a path, with what [`integrate_position`] needs to advance `q`
/// consistently with the RK4 frame steps.
#[derive(Debug, Clone)]
pub struct FrameTrajectory {
    pub path: PathSpec,
    /// Frame at every step boundary (`total_steps + 1` entries).
    pub frames: Vec<Matrix>,
    /// Effective mid-step frame `e + (h/4)(k1 + k2)` of each step.
    pub midframes: Vec<Matrix>,
    /// Largest orthonormality residual met along the way.
    pub max_drift: f64,
}

impl FrameTrajectory {
    pub fn last(&self) -> &Matrix {
        self.frames.last().expect("trajectory has a start frame")
    }
}

/// Transports the frame `init` along `path` with classical RK4.
pub fn integrate_frame(
    source: &dyn ConnectionSource,
    path: &PathSpec,
    init: &Matrix,
) -> Result<FrameTrajectory, ImmersionError> {
    path.validate()?;
    let total = path.total_steps();
    let mut frames = Vec::with_capacity(total + 1);
    let mut midframes = Vec::with_capacity(total);
    let mut e = *init;
    let mut max_drift = orthonormality_residual(&e);
    frames.push(e);
    let mut cached: Option<(Point, ConnectionAtPoint)> = None;
    for n in 0..total {
        let (x0, v) = path.step(n);
        let xm: Point = std::array::from_fn(|a| x0[a] + 0.5 * v[a]);
        let x1: Point = std::array::from_fn(|a| x0[a] + v[a]);
        let c0 = match cached {
            Some((x, c)) if x == x0 => c,
            _ => source.connection_at(x0)?,
        };
        let cm = source.connection_at(xm)?;
        let c1 = source.connection_at(x1)?;
        cached = Some((x1, c1));
        let (m0, mm, m1) = (generator(&c0, &v), generator(&cm, &v), generator(&c1, &v));
        let k1 = mat_mul(&m0, &e);
        let k2 = mat_mul(&mm, &axpy(&e, 0.5, &k1));
        let k3 = mat_mul(&mm, &axpy(&e, 0.5, &k2));
        let k4 = mat_mul(&m1, &axpy(&e, 1.0, &k3));
        midframes.push(std::array::from_fn(|i| {
            std::array::from_fn(|j| e[i][j] + 0.25 * (k1[i][j] + k2[i][j]))
        }));
        e = std::array::from_fn(|i| {
            std::array::from_fn(|j| {
                e[i][j] + (k1[i][j] + 2.0 * k2[i][j] + 2.0 * k3[i][j] + k4[i][j]) / 6.0
            })
        });
        max_drift = max_drift.max(orthonormality_residual(&e));
        frames.push(e);
    }
    Ok(FrameTrajectory {
        path: path.clone(),
        frames,
        midframes,
        max_drift,
    })
}

/// The vielbein `theta_a^I(x)`: 4 rows (coordinates) of 10 expressions (frame indices).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct VielbeinField {
    pub components: [[Expr; AMBIENT_DIM]; NVARS],
}

impl VielbeinField {
    pub fn from_strings(rows: [[&str; AMBIENT_DIM]; NVARS]) -> Result<Self, ImmersionError> {
        let mut parsed = Vec::with_capacity(NVARS);
        for row in rows {
            let mut out = Vec::with_capacity(AMBIENT_DIM);
            for src in row {
                out.push(
                    Expr::parse(src)
                        .map_err(|e| ImmersionError::InvalidVielbein(format!("`{src}`: {e}")))?,
                );
            }
            parsed.push(<[Expr; AMBIENT_DIM]>::try_from(out).expect("row length"));
        }
        Ok(VielbeinField {
            components: parsed.try_into().expect("four rows"),
        })
    }

    /// `theta_a^I = diag[a]` for `I = a`, zero otherwise.
    pub fn tangent_diagonal(diag: [&str; NVARS]) -> Result<Self, ImmersionError> {
        let mut rows = [["0"; AMBIENT_DIM]; NVARS];
        for (a, d) in diag.iter().enumerate() {
            rows[a][a] = d;
        }
        Self::from_strings(rows)
    }

    pub fn identity() -> Self {
        Self::tangent_diagonal(["1"; NVARS]).expect("constant vielbein")
    }

    /// The vielbein `diag(1, s, s, s)` with `s = 1/(1+r^2)` that pairs with
    /// [`SpinFieldSpec::Sphere`].
    pub fn sphere() -> Self {
        let s = "1/(1+x1^2+x2^2+x3^2)";
        Self::tangent_diagonal(["1", s, s, s]).expect("built-in vielbein")
    }

    pub fn eval(&self, x: Point) -> Result<[Vector; NVARS], ImmersionError> {
        let mut out = [[0.0; AMBIENT_DIM]; NVARS];
        for (a, row) in self.components.iter().enumerate() {
            for (i, e) in row.iter().enumerate() {
                out[a][i] = e.eval(x)?;
            }
        }
        Ok(out)
    }

    pub fn eval_dual(&self, x: Point) -> Result<[[Dual4; AMBIENT_DIM]; NVARS], ImmersionError> {
        let mut out = [[Dual4::default(); AMBIENT_DIM]; NVARS];
        for (a, row) in self.components.iter().enumerate() {
            for (i, e) in row.iter().enumerate() {
                out[a][i] = e.eval_dual(x)?;
            }
        }
        Ok(out)
    }

    /// Induced metric `g_ab = eta_IJ theta_a^I theta_b^J`.
    pub fn metric_at(&self, x: Point) -> Result<[[f64; NVARS]; NVARS], ImmersionError> {
        let th = self.eval(x)?;
        Ok(std::array::from_fn(|a| {
            std::array::from_fn(|b| (0..AMBIENT_DIM).map(|i| eta(i) * th[a][i] * th[b][i]).sum())
        }))
    }

    /// True if no normal-index component mentions anything but the literal 0.
    pub fn is_tangent(&self) -> bool {
        self.components
            .iter()
            .all(|row| row[TANGENT_DIM..].iter().all(|e| *e == Expr::Num(0.0)))
    }
}

/// `dq/ds = sum_a v^a theta_a^I e_I` in the fixed basis.
fn velocity(theta: &[Vector; NVARS], v: &Point, e: &Matrix) -> Vector {
    let mut out = [0.0; AMBIENT_DIM];
    for (a, &va) in v.iter().enumerate() {
        if va == 0.0 {
            continue;
        }
        for (i, row) in e.iter().enumerate() {
            let c = va * theta[a][i];
            if c == 0.0 {
                continue;
            }
            for (slot, ej) in out.iter_mut().zip(row) {
                *slot += c * ej;
            }
        }
    }
    out
}

/// Advances `q` along a frame trajectory; together with [`integrate_frame`]
/// this is RK4 on the joint system `(q, e)`. Returns the state at every step
/// boundary.
pub fn integrate_position(
    vielbein: &VielbeinField,
    trajectory: &FrameTrajectory,
    path: &PathSpec,
    q0: Vector,
) -> Result<Vec<FrameState>, ImmersionError> {
    if trajectory.path != *path {
        return Err(ImmersionError::DiscretizationMismatch(
            "path or step count differs".into(),
        ));
    }
    let total = path.total_steps();
    if trajectory.frames.len() != total + 1 || trajectory.midframes.len() != total {
        return Err(ImmersionError::DiscretizationMismatch(format!(
            "expected {} frames, got {}",
            total + 1,
            trajectory.frames.len()
        )));
    }
    let mut q = q0;
    let mut out = Vec::with_capacity(total + 1);
    out.push(FrameState {
        q,
        e: trajectory.frames[0],
    });
    let mut theta_prev: Option<(Point, [Vector; NVARS])> = None;
    for n in 0..total {
        let (x0, v) = path.step(n);
        let xm: Point = std::array::from_fn(|a| x0[a] + 0.5 * v[a]);
        let x1: Point = std::array::from_fn(|a| x0[a] + v[a]);
        let th0 = match theta_prev {
            Some((x, th)) if x == x0 => th,
            _ => vielbein.eval(x0)?,
        };
        let thm = vielbein.eval(xm)?;
        let th1 = vielbein.eval(x1)?;
        theta_prev = Some((x1, th1));
        let g0 = velocity(&th0, &v, &trajectory.frames[n]);
        let gm = velocity(&thm, &v, &trajectory.midframes[n]);
        let g1 = velocity(&th1, &v, &trajectory.frames[n + 1]);
        for k in 0..AMBIENT_DIM {
            q[k] += (g0[k] + 4.0 * gm[k] + g1[k]) / 6.0;
        }
        out.push(FrameState {
            q,
            e: trajectory.frames[n + 1],
        });
    }
    Ok(out)
}

/// Frame and position at the end of `path`, starting from `init`.
pub fn transport(
    source: &dyn ConnectionSource,
    vielbein: &VielbeinField,
    path: &PathSpec,
    init: &FrameState,
) -> Result<(FrameState, f64), ImmersionError> {
    let traj = integrate_frame(source, path, &init.e)?;
    let states = integrate_position(vielbein, &traj, path, init.q)?;
    Ok((*states.last().expect("non-empty"), traj.max_drift))
}

/// Infinity norm over `a < b` and `I` of
/// `(d_a theta_b^I - d_b theta_a^I) - (theta_a^K omega_{bK}^I - theta_b^K omega_{aK}^I)`
/// with `omega_{bK}^I = eta_K W_b^{KI}`. Derivatives of the vielbein are exact.
pub fn exactness_check(
    vielbein: &VielbeinField,
    source: &dyn ConnectionSource,
    x: Point,
) -> Result<f64, ImmersionError> {
    let th = vielbein.eval_dual(x)?;
    let conn = source.connection_at(x)?;
    let mut worst: f64 = 0.0;
    for a in 0..NVARS {
        for b in a + 1..NVARS {
            for i in 0..AMBIENT_DIM {
                let d = th[b][i].grad[a] - th[a][i].grad[b];
                let mut rot = 0.0;
                for k in 0..AMBIENT_DIM {
                    rot += th[a][k].value * eta(k) * conn.get(b, k, i)
                        - th[b][k].value * eta(k) * conn.get(a, k, i);
                }
                worst = worst.max((d - rot).abs());
            }
        }
    }
    Ok(worst)
}

/// Regular grid over `(x1, x2, x3)` at fixed `x0`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridSpec {
    pub x0: f64,
    pub min: [f64; 3],
    pub max: [f64; 3],
    pub counts: [usize; 3],
}

impl GridSpec {
    pub fn validate(&self) -> Result<(), ImmersionError> {
        if self.counts.contains(&0) {
            return Err(ImmersionError::InvalidGrid("counts must be positive".into()));
        }
        let finite = self.min.iter().chain(&self.max).chain([&self.x0]).all(|v| v.is_finite());
        if !finite {
            return Err(ImmersionError::InvalidGrid("bounds must be finite".into()));
        }
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.counts.iter().product()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    fn coordinate(&self, axis: usize, k: usize) -> f64 {
        if self.counts[axis] == 1 {
            return self.min[axis];
        }
        let t = k as f64 / (self.counts[axis] - 1) as f64;
        self.min[axis] + t * (self.max[axis] - self.min[axis])
    }

    pub fn point(&self, idx: [usize; 3]) -> Point {
        [
            self.x0,
            self.coordinate(0, idx[0]),
            self.coordinate(1, idx[1]),
            self.coordinate(2, idx[2]),
        ]
    }

    /// All index triples in lexicographic order.
    pub fn indices(&self) -> Vec<[usize; 3]> {
        let [n0, n1, n2] = self.counts;
        let mut out = Vec::with_capacity(self.len());
        for i in 0..n0 {
            for j in 0..n1 {
                for k in 0..n2 {
                    out.push([i, j, k]);
                }
            }
        }
        out
    }
}

/// One exported sample of the immersion.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct CloudPoint {
    pub index: [usize; 3],
    pub x: Point,
    pub q: Vector,
}

/// Integrates `q` over a spanning tree of grid edges rooted at grid index
/// `(0, 0, 0)`, whose state is `init`. `axis_order` lists the grid axes (0, 1, 2
/// for `x1, x2, x3`) in the order the tree branches: the first axis is walked
/// from the root, the second from every point of that line, and so on. Rows
/// are returned in lexicographic index order.
pub fn integrate_grid(
    source: &dyn ConnectionSource,
    vielbein: &VielbeinField,
    grid: &GridSpec,
    init: &FrameState,
    axis_order: [usize; 3],
    steps_per_edge: usize,
) -> Result<Vec<CloudPoint>, ImmersionError> {
    grid.validate()?;
    let mut sorted = axis_order;
    sorted.sort_unstable();
    if sorted != [0, 1, 2] {
        return Err(ImmersionError::InvalidGrid(format!(
            "axis order {axis_order:?} is not a permutation of [0, 1, 2]"
        )));
    }
    let mut frontier: Vec<([usize; 3], FrameState)> = vec![([0, 0, 0], *init)];
    for &axis in &axis_order {
        let grown: Vec<Vec<([usize; 3], FrameState)>> = frontier
            .par_iter()
            .map(|(idx, state)| {
                let mut line = vec![(*idx, *state)];
                let mut current = *state;
                for k in 1..grid.counts[axis] {
                    let mut prev = *idx;
                    prev[axis] = k - 1;
                    let mut next = *idx;
                    next[axis] = k;
                    let path = PathSpec::segment(grid.point(prev), grid.point(next), steps_per_edge)?;
                    current = transport(source, vielbein, &path, &current)?.0;
                    line.push((next, current));
                }
                Ok(line)
            })
            .collect::<Result<_, ImmersionError>>()?;
        frontier = grown.into_iter().flatten().collect();
    }
    let mut out: Vec<CloudPoint> = frontier
        .into_iter()
        .map(|(index, state)| CloudPoint {
            index,
            x: grid.point(index),
            q: state.q,
        })
        .collect();
    out.sort_by_key(|p| p.index);
    Ok(out)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CloudFormat {
    Csv,
    Obj,
}

/// Writes the cloud as CSV (`x0..x3, q0..q9`) or as OBJ vertices of the chosen
/// three `q` components.
pub fn write_pointcloud<W: Write>(
    out: &mut W,
    points: &[CloudPoint],
    format: CloudFormat,
    projection: [usize; 3],
) -> Result<(), ImmersionError> {
    if projection.iter().any(|&p| p >= AMBIENT_DIM) {
        return Err(ImmersionError::InvalidGrid(format!(
            "projection {projection:?} must index q0..q9"
        )));
    }
    match format {
        CloudFormat::Csv => {
            let mut header: Vec<String> = (0..NVARS).map(|i| format!("x{i}")).collect();
            header.extend((0..AMBIENT_DIM).map(|i| format!("q{i}")));
            writeln!(out, "{}", header.join(","))?;
            for p in points {
                let fields: Vec<String> = p.x.iter().chain(&p.q).map(|v| format!("{v:?}")).collect();
                writeln!(out, "{}", fields.join(","))?;
            }
        }
        CloudFormat::Obj => {
            for p in points {
                let [a, b, c] = projection.map(|i| p.q[i]);
                writeln!(out, "v {a:?} {b:?} {c:?}")?;
            }
        }
    }
    Ok(())
}

/// [`integrate_grid`] for a spin field, starting from its own frame at the
/// grid root, followed by [`write_pointcloud`] into `path`.
#[allow(clippy::too_many_arguments)]
pub fn export_pointcloud(
    spec: &SpinFieldSpec,
    vielbein: &VielbeinField,
    grid: &GridSpec,
    q0: Vector,
    axis_order: [usize; 3],
    steps_per_edge: usize,
    format: CloudFormat,
    projection: [usize; 3],
    path: &Path,
) -> Result<Vec<CloudPoint>, ImmersionError> {
    let init = FrameState::from_field(spec, grid.point([0, 0, 0]), q0)?;
    let source = ExtractedConnection::new(spec.clone());
    let points = integrate_grid(&source, vielbein, grid, &init, axis_order, steps_per_edge)?;
    let mut file = std::io::BufWriter::new(std::fs::File::create(path)?);
    write_pointcloud(&mut file, &points, format, projection)?;
    file.flush()?;
    Ok(points)
}

/// The closed-form position of the sphere example,
/// `q = x0 e0 + (x1 e1 + x2 e2 + x3 e3 + e5) / (1 + r^2)`.
pub fn sphere_position(x: Point) -> Vector {
    let s = 1.0 / (1.0 + x[1] * x[1] + x[2] * x[2] + x[3] * x[3]);
    let mut q = [0.0; AMBIENT_DIM];
    q[0] = x[0];
    q[1] = x[1] * s;
    q[2] = x[2] * s;
    q[3] = x[3] * s;
    q[5] = s;
    q
}
