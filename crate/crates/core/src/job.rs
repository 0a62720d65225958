//! Batch jobs: a JSON job file in, a deterministic JSON or CSV report out.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};
use thiserror::Error;

use crate::geometry::{
    connection_field, curvature, split_connection, Block, ConnectionAtPoint, CurvatureMethod,
};
use crate::immersion::{
    exactness_check, integrate_grid, sphere_position, transport, write_pointcloud, CloudFormat,
    CloudPoint, ExtractedConnection, FrameState, GridSpec, ImmersionError, PathSpec,
    VielbeinField,
};
use crate::solutions::{
    closed_connection, compose_a_checked, compose_b_checked, compose_by_conjugation,
    TypeAPointData, TypeBPointData,
};
use crate::spin_field::{
    check_spin, killing_extract, Differentiation, FdConfig, Point, SpinFieldSpec, AMBIENT_DIM,
    TANGENT_DIM,
};

pub const EXIT_PASS: i32 = 0;
pub const EXIT_TOLERANCE: i32 = 1;
pub const EXIT_SCHEMA: i32 = 2;
pub const EXIT_EVALUATION: i32 = 3;

#[derive(Debug, Error)]
pub enum JobError {
    #[error("invalid job: {0}")]
    Schema(String),
    #[error("evaluation failed: {0}")]
    Evaluation(String),
}

impl JobError {
    pub fn exit_code(&self) -> i32 {
        match self {
            JobError::Schema(_) => EXIT_SCHEMA,
            JobError::Evaluation(_) => EXIT_EVALUATION,
        }
    }
}

fn at<E: std::fmt::Display>(x: Point) -> impl Fn(E) -> JobError {
    move |e| JobError::Evaluation(format!("at {x:?}: {e}"))
}

fn evaluation<E: std::fmt::Display>(e: E) -> JobError {
    JobError::Evaluation(e.to_string())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Command {
    Verify,
    Extract,
    Curvature,
    Gcr,
    Compose,
    Immerse,
    Example,
}

impl Command {
    pub fn name(self) -> &'static str {
        match self {
            Command::Verify => "verify",
            Command::Extract => "extract",
            Command::Curvature => "curvature",
            Command::Gcr => "gcr",
            Command::Compose => "compose",
            Command::Immerse => "immerse",
            Command::Example => "example",
        }
    }
}

/// Sample points: an explicit list or a regular 4D grid (inclusive bounds).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase", deny_unknown_fields)]
pub enum PointSet {
    List(Vec<Point>),
    Grid {
        min: Point,
        max: Point,
        counts: [usize; 4],
    },
}

impl PointSet {
    /// Points in lexicographic order.
    pub fn points(&self) -> Vec<Point> {
        let mut pts = match self {
            PointSet::List(v) => v.clone(),
            PointSet::Grid { min, max, counts } => {
                let axis = |a: usize, k: usize| {
                    if counts[a] <= 1 {
                        min[a]
                    } else {
                        min[a] + (max[a] - min[a]) * k as f64 / (counts[a] - 1) as f64
                    }
                };
                let mut v = Vec::with_capacity(counts.iter().product());
                for i in 0..counts[0] {
                    for j in 0..counts[1] {
                        for k in 0..counts[2] {
                            for l in 0..counts[3] {
                                v.push([axis(0, i), axis(1, j), axis(2, k), axis(3, l)]);
                            }
                        }
                    }
                }
                v
            }
        };
        pts.sort_by(|a, b| {
            a.iter()
                .zip(b)
                .map(|(x, y)| x.total_cmp(y))
                .find(|o| o.is_ne())
                .unwrap_or(std::cmp::Ordering::Equal)
        });
        pts
    }

    fn validate(&self) -> Result<(), JobError> {
        match self {
            PointSet::List(v) if v.is_empty() => {
                Err(JobError::Schema("points.list must not be empty".into()))
            }
            PointSet::List(v) if v.iter().flatten().any(|c| !c.is_finite()) => {
                Err(JobError::Schema("points must be finite".into()))
            }
            PointSet::Grid { counts, .. } if counts.contains(&0) => {
                Err(JobError::Schema("points.grid.counts must be positive".into()))
            }
            PointSet::Grid { min, max, .. } if min.iter().chain(max).any(|c| !c.is_finite()) => {
                Err(JobError::Schema("points.grid bounds must be finite".into()))
            }
            _ => Ok(()),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MethodName {
    #[default]
    Exact,
    Fd,
    ClosedForm,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Tolerances {
    pub spin: f64,
    pub killing: f64,
    pub connection: f64,
    pub curvature: f64,
    pub gcr: f64,
    pub compose: f64,
    pub exactness: f64,
    pub immersion: f64,
}

impl Default for Tolerances {
    fn default() -> Self {
        Tolerances {
            spin: 1e-10,
            killing: 1e-8,
            connection: 1e-8,
            curvature: 1e-5,
            gcr: 1e-4,
            compose: 1e-8,
            exactness: 1e-6,
            immersion: 1e-6,
        }
    }
}

impl Tolerances {
    fn validate(&self) -> Result<(), JobError> {
        let all = [
            ("spin", self.spin),
            ("killing", self.killing),
            ("connection", self.connection),
            ("curvature", self.curvature),
            ("gcr", self.gcr),
            ("compose", self.compose),
            ("exactness", self.exactness),
            ("immersion", self.immersion),
        ];
        for (name, v) in all {
            if !(v > 0.0 && v.is_finite()) {
                return Err(JobError::Schema(format!(
                    "tolerances.{name} must be positive, got {v}"
                )));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ReportFormat {
    #[default]
    Json,
    Csv,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputSpec {
    #[serde(default)]
    pub path: Option<PathBuf>,
    #[serde(default)]
    pub format: ReportFormat,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum VielbeinInput {
    Preset { preset: VielbeinPreset },
    Field(Box<VielbeinField>),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum VielbeinPreset {
    Sphere,
    Identity,
}

impl VielbeinInput {
    fn resolve(&self) -> VielbeinField {
        match self {
            VielbeinInput::Preset {
                preset: VielbeinPreset::Sphere,
            } => VielbeinField::sphere(),
            VielbeinInput::Preset {
                preset: VielbeinPreset::Identity,
            } => VielbeinField::identity(),
            VielbeinInput::Field(v) => (**v).clone(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CloudOutput {
    pub path: PathBuf,
    #[serde(default = "default_cloud_format")]
    pub format: CloudFormat,
    #[serde(default = "default_projection")]
    pub projection: [usize; 3],
}

fn default_cloud_format() -> CloudFormat {
    CloudFormat::Csv
}

fn default_projection() -> [usize; 3] {
    [1, 2, 3]
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ImmerseSpec {
    pub vielbein: VielbeinInput,
    pub grid: GridSpec,
    #[serde(default)]
    pub q0: Option<[f64; AMBIENT_DIM]>,
    #[serde(default = "default_steps_per_edge")]
    pub steps_per_edge: usize,
    #[serde(default = "default_axis_order")]
    pub axis_order: [usize; 3],
    #[serde(default)]
    pub cloud: Option<CloudOutput>,
}

fn default_steps_per_edge() -> usize {
    16
}

fn default_axis_order() -> [usize; 3] {
    [0, 1, 2]
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct JobSpec {
    pub command: Command,
    #[serde(default)]
    pub field: Option<SpinFieldSpec>,
    #[serde(default)]
    pub points: Option<PointSet>,
    #[serde(default)]
    pub fd: FdConfig,
    #[serde(default)]
    pub method: MethodName,
    #[serde(default)]
    pub tolerances: Tolerances,
    #[serde(default)]
    pub output: OutputSpec,
    #[serde(default)]
    pub immerse: Option<ImmerseSpec>,
}

impl JobSpec {
    pub fn from_json(text: &str) -> Result<Self, JobError> {
        let job: JobSpec =
            serde_json::from_str(text).map_err(|e| JobError::Schema(e.to_string()))?;
        job.validate()?;
        Ok(job)
    }

    pub fn from_file(path: &Path) -> Result<Self, JobError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| JobError::Schema(format!("cannot read {}: {e}", path.display())))?;
        Self::from_json(&text)
    }

    pub fn validate(&self) -> Result<(), JobError> {
        self.tolerances.validate()?;
        FdConfig::new(self.fd.step).map_err(|e| JobError::Schema(e.to_string()))?;
        if let Some(points) = &self.points {
            points.validate()?;
        }
        if let Some(field) = &self.field {
            field.validate().map_err(|e| JobError::Schema(e.to_string()))?;
        }
        let needs_field = !matches!(self.command, Command::Example);
        if needs_field && self.field.is_none() {
            return Err(JobError::Schema(format!(
                "command `{}` requires `field`",
                self.command.name()
            )));
        }
        let needs_points = !matches!(self.command, Command::Example | Command::Immerse);
        if needs_points && self.points.is_none() {
            return Err(JobError::Schema(format!(
                "command `{}` requires `points`",
                self.command.name()
            )));
        }
        if self.command == Command::Compose {
            match &self.field {
                Some(SpinFieldSpec::Product { factors }) if factors.len() == 2 => {}
                _ => {
                    return Err(JobError::Schema(
                        "command `compose` requires a product field with two factors".into(),
                    ))
                }
            }
        }
        if self.command == Command::Immerse {
            let Some(im) = &self.immerse else {
                return Err(JobError::Schema("command `immerse` requires `immerse`".into()));
            };
            im.grid.validate().map_err(|e| JobError::Schema(e.to_string()))?;
            if im.steps_per_edge == 0 {
                return Err(JobError::Schema("immerse.steps_per_edge must be positive".into()));
            }
            let mut order = im.axis_order;
            order.sort_unstable();
            if order != [0, 1, 2] {
                return Err(JobError::Schema(
                    "immerse.axis_order must be a permutation of [0, 1, 2]".into(),
                ));
            }
            if let Some(c) = &im.cloud {
                if c.projection.iter().any(|&p| p >= AMBIENT_DIM) {
                    return Err(JobError::Schema("cloud.projection entries must be < 10".into()));
                }
            }
        }
        Ok(())
    }

    fn curvature_method(&self) -> CurvatureMethod {
        match self.method {
            MethodName::Exact => CurvatureMethod::Exact,
            MethodName::Fd => CurvatureMethod::FiniteDifference(self.fd),
            MethodName::ClosedForm => CurvatureMethod::ClosedForm,
        }
    }

    fn differentiation(&self) -> Differentiation {
        match self.method {
            MethodName::Fd => Differentiation::Central(self.fd),
            _ => Differentiation::Automatic,
        }
    }
}

/// One point's checks: every metric is compared against its tolerance.
#[derive(Debug, Clone, Serialize)]
pub struct Record {
    pub point: Point,
    pub passed: bool,
    pub metrics: BTreeMap<String, f64>,
    #[serde(skip_serializing_if = "Vec::is_empty")]
    pub failing: Vec<String>,
    #[serde(skip_serializing_if = "Value::is_null")]
    pub details: Value,
}

struct RecordBuilder {
    point: Point,
    metrics: BTreeMap<String, f64>,
    failing: Vec<String>,
    details: Value,
}

impl RecordBuilder {
    fn new(point: Point) -> Self {
        RecordBuilder {
            point,
            metrics: BTreeMap::new(),
            failing: Vec::new(),
            details: Value::Null,
        }
    }

    fn check(&mut self, name: impl Into<String>, value: f64, tol: f64) -> &mut Self {
        let name = name.into();
        if value.is_nan() || value > tol {
            self.failing.push(name.clone());
        }
        self.metrics.insert(name, value);
        self
    }

    fn details(&mut self, details: Value) -> &mut Self {
        self.details = details;
        self
    }

    fn build(&mut self) -> Record {
        Record {
            point: self.point,
            passed: self.failing.is_empty(),
            metrics: std::mem::take(&mut self.metrics),
            failing: std::mem::take(&mut self.failing),
            details: std::mem::take(&mut self.details),
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct Header {
    pub tool: &'static str,
    pub version: &'static str,
    pub command: &'static str,
    pub method: MethodName,
}

#[derive(Debug, Clone, Serialize)]
pub struct Counts {
    pub points: usize,
    pub passed: usize,
    pub failed: usize,
}

#[derive(Debug, Clone, Serialize)]
pub struct Summary {
    pub max_residuals: BTreeMap<String, f64>,
    pub counts: Counts,
}

#[derive(Debug, Clone, Serialize)]
pub struct Report {
    pub header: Header,
    pub records: Vec<Record>,
    pub summary: Summary,
    pub passed: bool,
}

impl Report {
    fn new(job: &JobSpec, records: Vec<Record>) -> Self {
        let mut max_residuals = BTreeMap::new();
        for r in &records {
            for (k, &v) in &r.metrics {
                let slot = max_residuals.entry(k.clone()).or_insert(0.0f64);
                *slot = slot.max(v);
            }
        }
        let passed_count = records.iter().filter(|r| r.passed).count();
        Report {
            header: Header {
                tool: "spinframe",
                version: env!("CARGO_PKG_VERSION"),
                command: job.command.name(),
                method: job.method,
            },
            summary: Summary {
                max_residuals,
                counts: Counts {
                    points: records.len(),
                    passed: passed_count,
                    failed: records.len() - passed_count,
                },
            },
            passed: passed_count == records.len(),
            records,
        }
    }

    pub fn exit_code(&self) -> i32 {
        if self.passed {
            EXIT_PASS
        } else {
            EXIT_TOLERANCE
        }
    }

    pub fn render(&self, format: ReportFormat) -> String {
        match format {
            ReportFormat::Json => {
                let mut s = serde_json::to_string_pretty(self).expect("report serializes");
                s.push('\n');
                s
            }
            ReportFormat::Csv => self.render_csv(),
        }
    }

    /// One row per record: coordinates, metrics in name order, pass flag.
    fn render_csv(&self) -> String {
        let names: Vec<&String> = self.summary.max_residuals.keys().collect();
        let mut out = String::from("x0,x1,x2,x3");
        for n in &names {
            out.push(',');
            out.push_str(n);
        }
        out.push_str(",passed\n");
        for r in &self.records {
            let mut fields: Vec<String> = r.point.iter().map(|v| format!("{v:?}")).collect();
            for n in &names {
                fields.push(r.metrics.get(*n).map(|v| format!("{v:?}")).unwrap_or_default());
            }
            fields.push(r.passed.to_string());
            out.push_str(&fields.join(","));
            out.push('\n');
        }
        out
    }
}

/// Runs `f` on every point in parallel; the first error in point order wins.
fn sweep<F>(points: &[Point], f: F) -> Result<Vec<Record>, JobError>
where
    F: Fn(Point) -> Result<Record, JobError> + Sync,
{
    let results: Vec<Result<Record, JobError>> = points.par_iter().map(|&x| f(x)).collect();
    results.into_iter().collect()
}

pub fn run(job: &JobSpec) -> Result<Report, JobError> {
    job.validate()?;
    let records = match job.command {
        Command::Verify => run_verify(job)?,
        Command::Extract => run_extract(job)?,
        Command::Curvature => run_curvature(job, true)?,
        Command::Gcr => run_curvature(job, false)?,
        Command::Compose => run_compose(job)?,
        Command::Immerse => run_immerse(job)?,
        Command::Example => run_example(job)?,
    };
    Ok(Report::new(job, records))
}

fn field(job: &JobSpec) -> &SpinFieldSpec {
    job.field.as_ref().expect("validated job has a field")
}

fn points(job: &JobSpec) -> Vec<Point> {
    job.points.as_ref().expect("validated job has points").points()
}

fn run_verify(job: &JobSpec) -> Result<Vec<Record>, JobError> {
    let spec = field(job);
    let tol = job.tolerances.spin;
    sweep(&points(job), |x| {
        let c = check_spin(spec, x, tol).map_err(at(x))?;
        let mut r = RecordBuilder::new(x);
        r.check("normalization", c.normalization_residual, tol)
            .check("right_normalization", c.right_normalization_residual, tol);
        for (i, &g) in c.grade1_residual.iter().enumerate() {
            r.check(format!("grade1_e{i}"), g, tol);
        }
        r.details(json!({ "failing_frame_indices": c.failing_indices() }));
        Ok(r.build())
    })
}

fn run_extract(job: &JobSpec) -> Result<Vec<Record>, JobError> {
    let spec = field(job);
    let diff = job.differentiation();
    let tol = job.tolerances.killing;
    sweep(&points(job), |x| {
        let k = killing_extract(spec, x, diff).map_err(at(x))?;
        let conn = split_connection(&k.k);
        let mut r = RecordBuilder::new(x);
        r.check("grade2", k.max_grade2_residual(), tol)
            .check("reconstruction", k.max_reconstruction_residual(), tol)
            .check("normalization", k.normalization_residual, tol)
            .details(json!({ "connection": conn }));
        Ok(r.build())
    })
}

fn run_curvature(job: &JobSpec, full: bool) -> Result<Vec<Record>, JobError> {
    let spec = field(job);
    let method = job.curvature_method();
    let tol = job.tolerances.gcr;
    sweep(&points(job), |x| {
        let c = curvature(spec, x, method).map_err(at(x))?;
        let g = c.gcr();
        let mut r = RecordBuilder::new(x);
        r.check("gauss", g.gauss, tol)
            .check("codazzi", g.codazzi, tol)
            .check("ricci", g.ricci, tol);
        if full {
            r.details(json!({ "curvature": c }));
        }
        Ok(r.build())
    })
}

fn run_compose(job: &JobSpec) -> Result<Vec<Record>, JobError> {
    let SpinFieldSpec::Product { factors } = field(job) else {
        unreachable!("validated compose job")
    };
    let (first, second) = (&factors[0], &factors[1]);
    let product = field(job);
    let tol = job.tolerances.compose;
    sweep(&points(job), |x| {
        let conn1 = closed_connection(first, x).map_err(at(x))?;
        let conn2 = closed_connection(second, x).map_err(at(x))?;
        let psi1 = first.evaluate(x).map_err(at(x))?;
        let oracle = compose_by_conjugation(&psi1, &conn1, &conn2).map_err(at(x))?;
        let extracted = connection_field(product, x, Differentiation::Automatic).map_err(at(x))?;
        let mut r = RecordBuilder::new(x);
        r.check("composition_vs_extraction", oracle.distance(&extracted), tol);
        let formula = match first {
            SpinFieldSpec::TypeA { .. } | SpinFieldSpec::Sphere => {
                let p = TypeAPointData::from_spec(first, x).map_err(at(x))?;
                Some(compose_a_checked(&p, &conn2).map_err(at(x))?.oracle_discrepancy)
            }
            SpinFieldSpec::TypeB { .. } => {
                let p = TypeBPointData::from_spec(first, x).map_err(at(x))?;
                Some(compose_b_checked(&p, &conn2).map_err(at(x))?.oracle_discrepancy)
            }
            _ => None,
        };
        if let Some(d) = formula {
            r.check("formula_vs_conjugation", d, tol);
        }
        r.details(json!({ "connection": oracle }));
        Ok(r.build())
    })
}

fn run_immerse(job: &JobSpec) -> Result<Vec<Record>, JobError> {
    let spec = field(job);
    let im = job.immerse.as_ref().expect("validated immerse job");
    let vielbein = im.vielbein.resolve();
    let source = ExtractedConnection {
        spec: spec.clone(),
        diff: job.differentiation(),
    };
    let base = im.grid.point([0, 0, 0]);
    let init = FrameState::from_field(spec, base, im.q0.unwrap_or([0.0; AMBIENT_DIM]))
        .map_err(at(base))?;
    let tree = |order: [usize; 3]| {
        integrate_grid(&source, &vielbein, &im.grid, &init, order, im.steps_per_edge)
            .map_err(evaluation)
    };
    let cloud = tree(im.axis_order)?;
    let mut reversed = im.axis_order;
    reversed.reverse();
    let other = tree(reversed)?;
    if let Some(out) = &im.cloud {
        write_cloud(out, &cloud).map_err(evaluation)?;
    }
    let tol = job.tolerances;
    let results: Vec<Result<Record, JobError>> = cloud
        .par_iter()
        .zip(&other)
        .map(|(p, o)| {
            let exact = exactness_check(&vielbein, &source, p.x).map_err(at(p.x))?;
            let tree_gap = p.q.iter().zip(&o.q).fold(0.0f64, |m, (a, b)| m.max((a - b).abs()));
            let mut r = RecordBuilder::new(p.x);
            r.check("exactness", exact, tol.exactness)
                .check("tree_discrepancy", tree_gap, tol.immersion)
                .details(json!({ "q": p.q }));
            Ok(r.build())
        })
        .collect();
    results.into_iter().collect()
}

fn write_cloud(out: &CloudOutput, cloud: &[CloudPoint]) -> Result<(), ImmersionError> {
    let mut buf = Vec::new();
    write_pointcloud(&mut buf, cloud, out.format, out.projection)?;
    std::fs::write(&out.path, buf)?;
    Ok(())
}

/// Points used by `example` when the job lists none.
pub const EXAMPLE_POINTS: [Point; 5] = [
    [0.0, 0.0, 0.0, 0.0],
    [0.3, 0.2, -0.1, 0.5],
    [-0.5, 1.0, 0.5, -0.5],
    [1.0, -1.2, 0.3, 0.8],
    [0.0, 0.1, -0.7, 0.2],
];

/// Expected connection of the sphere field: `(alpha, I, J, W_alpha^{IJ})`.
pub fn sphere_connection_table(x: Point) -> Vec<(usize, usize, usize, f64)> {
    let s = 1.0 / (1.0 + x[1] * x[1] + x[2] * x[2] + x[3] * x[3]);
    let mut out = vec![
        (1, 1, 2, 2.0 * x[2] * s),
        (1, 1, 3, 2.0 * x[3] * s),
        (1, 2, 3, 0.0),
        (2, 1, 2, -2.0 * x[1] * s),
        (2, 1, 3, 0.0),
        (2, 2, 3, 2.0 * x[3] * s),
        (3, 1, 2, 0.0),
        (3, 1, 3, -2.0 * x[1] * s),
        (3, 2, 3, -2.0 * x[2] * s),
    ];
    for mu in 1..TANGENT_DIM {
        out.push((mu, mu, 5, -2.0 * s));
    }
    out
}

/// Induced metric by central differences of integrated positions around `x`.
fn fd_metric(
    source: &ExtractedConnection,
    vielbein: &VielbeinField,
    state: &FrameState,
    x: Point,
    h: f64,
) -> Result<[[f64; 4]; 4], ImmersionError> {
    let mut dq = [[0.0; AMBIENT_DIM]; 4];
    for a in 0..4 {
        let mut plus = x;
        plus[a] += h;
        let mut minus = x;
        minus[a] -= h;
        let qp = transport(source, vielbein, &PathSpec::segment(x, plus, 4)?, state)?.0.q;
        let qm = transport(source, vielbein, &PathSpec::segment(x, minus, 4)?, state)?.0.q;
        for k in 0..AMBIENT_DIM {
            dq[a][k] = (qp[k] - qm[k]) / (2.0 * h);
        }
    }
    Ok(std::array::from_fn(|a| {
        std::array::from_fn(|b| {
            (0..AMBIENT_DIM)
                .map(|k| crate::geometry::eta(k) * dq[a][k] * dq[b][k])
                .sum()
        })
    }))
}

fn run_example(job: &JobSpec) -> Result<Vec<Record>, JobError> {
    let spec = SpinFieldSpec::Sphere;
    let pts = match &job.points {
        Some(p) => p.points(),
        None => PointSet::List(EXAMPLE_POINTS.to_vec()).points(),
    };
    let tol = job.tolerances;
    let source = ExtractedConnection::new(spec.clone());
    let vielbein = VielbeinField::sphere();
    let origin = [0.0; 4];
    let start = FrameState::from_field(&spec, origin, sphere_position(origin)).map_err(at(origin))?;
    sweep(&pts, |x| {
        let s = 1.0 / (1.0 + x[1] * x[1] + x[2] * x[2] + x[3] * x[3]);
        let conn = connection_field(&spec, x, Differentiation::Automatic).map_err(at(x))?;
        let table = sphere_connection_table(x);
        let mut expected = ConnectionAtPoint::zero();
        let mut rows = Vec::new();
        for &(a, i, j, v) in &table {
            expected.set(a, i, j, v);
            let name = if j < TANGENT_DIM {
                format!("omega_{a}^{{{i}{j}}}")
            } else {
                format!("H_{a}^{{{i}{j}}}")
            };
            rows.push(json!({ "quantity": name, "computed": conn.get(a, i, j), "expected": v }));
        }
        let diff = conn.zip(&expected, |p, q| p - q);
        let h_diag = (1..TANGENT_DIM)
            .map(|m| (conn.h(m, m, 5) + 2.0 * s).abs())
            .fold(0.0, f64::max);
        let off_block = diff
            .only_block(Block::H)
            .max_abs()
            .max(diff.max_abs_block(Block::A));

        let curv = curvature(&spec, x, CurvatureMethod::Exact).map_err(at(x))?;
        let r_expected = -4.0 * s * s;
        let mut r_dev: f64 = 0.0;
        for (kind, [a, b, u, v], value) in curv.rows() {
            let target = if kind == "R" && a >= 1 && a == u && b == v {
                r_expected
            } else {
                0.0
            };
            r_dev = r_dev.max((value - target).abs());
        }
        for (a, b) in [(1, 2), (1, 3), (2, 3)] {
            rows.push(json!({
                "quantity": format!("R_{{{a}{b}}}^{{{a}{b}}}"),
                "computed": curv.r(a, b, a, b),
                "expected": r_expected,
            }));
        }

        let path = PathSpec::segment(origin, x, 256).map_err(at(x))?;
        let (state, drift) = transport(&source, &vielbein, &path, &start).map_err(at(x))?;
        let q_closed = sphere_position(x);
        let q_err = state.q.iter().zip(&q_closed).fold(0.0f64, |m, (a, b)| m.max((a - b).abs()));
        let g = fd_metric(&source, &vielbein, &state, x, 1e-4).map_err(at(x))?;
        let g_expected = |a: usize, b: usize| match (a, b) {
            (0, 0) => -1.0,
            (a, b) if a == b => s * s,
            _ => 0.0,
        };
        let mut g_dev: f64 = 0.0;
        for a in 0..4 {
            for b in 0..4 {
                g_dev = g_dev.max((g[a][b] - g_expected(a, b)).abs());
            }
            rows.push(json!({
                "quantity": format!("g_{{{a}{a}}}"),
                "computed": g[a][a],
                "expected": g_expected(a, a),
            }));
        }
        let exact = exactness_check(&vielbein, &source, x).map_err(at(x))?;

        let mut r = RecordBuilder::new(x);
        r.check("H_diagonal", h_diag, tol.connection)
            .check("H_A_off_table", off_block, tol.connection)
            .check("omega", diff.max_abs_block(Block::Omega), tol.connection)
            .check("curvature", r_dev, tol.curvature)
            .check("immersion_map", q_err, tol.immersion)
            .check("metric_fd", g_dev, tol.curvature)
            .check("exactness", exact, tol.exactness)
            .check("frame_drift", drift, tol.killing)
            .details(json!({ "table": rows, "q": state.q, "q_expected": q_closed }));
        Ok(r.build())
    })
}

/// JSON schema of the job file.
pub fn schema() -> Value {
    let point = json!({ "type": "array", "items": { "type": "number" }, "minItems": 4, "maxItems": 4 });
    let expr = json!({ "type": "string", "minLength": 1 });
    let positive = json!({ "type": "number", "exclusiveMinimum": 0 });
    let index = json!({ "type": "integer", "minimum": 0, "maximum": 9 });
    let term = json!({
        "type": "object",
        "required": ["blade", "coeff"],
        "additionalProperties": false,
        "properties": {
            "blade": { "type": "array", "items": index },
            "coeff": { "type": "number" }
        }
    });
    let exprs = |n: usize| json!({ "type": "array", "items": expr, "minItems": n, "maxItems": n });
    let tolerance_props: serde_json::Map<String, Value> = [
        "spin", "killing", "connection", "curvature", "gcr", "compose", "exactness", "immersion",
    ]
    .iter()
    .map(|k| (k.to_string(), positive.clone()))
    .collect();
    json!({
        "$schema": "http://json-schema.org/draft-07/schema#",
        "title": "spinframe job",
        "type": "object",
        "required": ["command"],
        "additionalProperties": false,
        "properties": {
            "command": { "enum": ["verify", "extract", "curvature", "gcr", "compose", "immerse", "example"] },
            "field": { "$ref": "#/definitions/field" },
            "points": {
                "oneOf": [
                    {
                        "type": "object",
                        "required": ["list"],
                        "additionalProperties": false,
                        "properties": { "list": { "type": "array", "items": point, "minItems": 1 } }
                    },
                    {
                        "type": "object",
                        "required": ["grid"],
                        "additionalProperties": false,
                        "properties": {
                            "grid": {
                                "type": "object",
                                "required": ["min", "max", "counts"],
                                "additionalProperties": false,
                                "properties": {
                                    "min": point,
                                    "max": point,
                                    "counts": {
                                        "type": "array",
                                        "items": { "type": "integer", "minimum": 1 },
                                        "minItems": 4,
                                        "maxItems": 4
                                    }
                                }
                            }
                        }
                    }
                ]
            },
            "fd": {
                "type": "object",
                "required": ["step"],
                "additionalProperties": false,
                "properties": { "step": positive }
            },
            "method": { "enum": ["exact", "fd", "closed_form"] },
            "tolerances": {
                "type": "object",
                "additionalProperties": false,
                "properties": tolerance_props
            },
            "output": {
                "type": "object",
                "additionalProperties": false,
                "properties": {
                    "path": { "type": "string" },
                    "format": { "enum": ["json", "csv"] }
                }
            },
            "immerse": {
                "type": "object",
                "required": ["vielbein", "grid"],
                "additionalProperties": false,
                "properties": {
                    "vielbein": {
                        "oneOf": [
                            {
                                "type": "object",
                                "required": ["preset"],
                                "additionalProperties": false,
                                "properties": { "preset": { "enum": ["sphere", "identity"] } }
                            },
                            {
                                "type": "object",
                                "required": ["components"],
                                "additionalProperties": false,
                                "properties": {
                                    "components": {
                                        "type": "array",
                                        "items": exprs(10),
                                        "minItems": 4,
                                        "maxItems": 4
                                    }
                                }
                            }
                        ]
                    },
                    "grid": {
                        "type": "object",
                        "required": ["x0", "min", "max", "counts"],
                        "additionalProperties": false,
                        "properties": {
                            "x0": { "type": "number" },
                            "min": { "type": "array", "items": { "type": "number" }, "minItems": 3, "maxItems": 3 },
                            "max": { "type": "array", "items": { "type": "number" }, "minItems": 3, "maxItems": 3 },
                            "counts": {
                                "type": "array",
                                "items": { "type": "integer", "minimum": 1 },
                                "minItems": 3,
                                "maxItems": 3
                            }
                        }
                    },
                    "q0": { "type": "array", "items": { "type": "number" }, "minItems": 10, "maxItems": 10 },
                    "steps_per_edge": { "type": "integer", "minimum": 1 },
                    "axis_order": {
                        "type": "array",
                        "items": { "enum": [0, 1, 2] },
                        "minItems": 3,
                        "maxItems": 3,
                        "uniqueItems": true
                    },
                    "cloud": {
                        "type": "object",
                        "required": ["path"],
                        "additionalProperties": false,
                        "properties": {
                            "path": { "type": "string" },
                            "format": { "enum": ["csv", "obj"] },
                            "projection": {
                                "type": "array",
                                "items": index,
                                "minItems": 3,
                                "maxItems": 3
                            }
                        }
                    }
                }
            }
        },
        "definitions": {
            "field": {
                "oneOf": [
                    {
                        "type": "object",
                        "required": ["family", "plane", "angle"],
                        "additionalProperties": false,
                        "properties": {
                            "family": { "const": "rotation" },
                            "plane": { "type": "array", "items": index, "minItems": 2, "maxItems": 2 },
                            "angle": expr
                        }
                    },
                    {
                        "type": "object",
                        "required": ["family", "normal_index", "f", "fA"],
                        "additionalProperties": false,
                        "properties": {
                            "family": { "const": "typeA" },
                            "normal_index": { "type": "integer", "minimum": 4, "maximum": 9 },
                            "f": expr,
                            "fA": exprs(4)
                        }
                    },
                    {
                        "type": "object",
                        "required": ["family", "tangent_index", "f", "fB"],
                        "additionalProperties": false,
                        "properties": {
                            "family": { "const": "typeB" },
                            "tangent_index": { "type": "integer", "minimum": 0, "maximum": 3 },
                            "f": expr,
                            "fB": exprs(6)
                        }
                    },
                    {
                        "type": "object",
                        "required": ["family", "factors"],
                        "additionalProperties": false,
                        "properties": {
                            "family": { "const": "product" },
                            "factors": { "type": "array", "items": { "$ref": "#/definitions/field" }, "minItems": 1 }
                        }
                    },
                    {
                        "type": "object",
                        "required": ["family"],
                        "additionalProperties": false,
                        "properties": { "family": { "const": "sphere" } }
                    },
                    {
                        "type": "object",
                        "required": ["family", "terms"],
                        "additionalProperties": false,
                        "properties": {
                            "family": { "const": "constant" },
                            "terms": { "type": "array", "items": term }
                        }
                    }
                ]
            }
        }
    })
}
