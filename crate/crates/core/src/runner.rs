//! Configuration-driven trajectory and ensemble runs, plain-text records, and
//! Poincaré sections.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use num_complex::Complex64 as C64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::compiled::CompiledOperator;
use crate::error::{Error, Result};
use crate::fock::{FockState, Quadrature};
use crate::integrator::{CompiledModel, IntegratorConfig};
use crate::models::ModelConfig;
use crate::moving::{mqsd_step, MovingFrame, MqsdState, TruncationPolicy};
use crate::noise::TrajectoryRng;
use crate::operator::OperatorExpr;
use crate::oracle::{master_equation_samples, DensityMatrix};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum BasisConfig {
    Fixed { capacities: Vec<usize> },
    Moving(TruncationPolicy),
}

/// Initial state `prod_k D(q_k, p_k)|n_k>`; empty lists mean the origin and vacuum.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InitialState {
    #[serde(default)]
    pub origins: Vec<[f64; 2]>,
    #[serde(default)]
    pub occupations: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub t_final: f64,
    /// Steps between recorded samples.
    #[serde(default = "one_u64")]
    pub sample_interval: u64,
    /// Names such as `Q0`, `P1`, `N0`.
    pub observables: Vec<String>,
    #[serde(default = "one_usize")]
    pub trajectories: usize,
    #[serde(default = "one_usize")]
    pub workers: usize,
    #[serde(default)]
    pub poincare_period: Option<f64>,
    #[serde(default)]
    pub poincare_offset: f64,
    #[serde(default)]
    pub output_dir: Option<PathBuf>,
    pub model: ModelConfig,
    /// `rng_seed` is the master seed of the ensemble.
    pub integrator: IntegratorConfig,
    pub basis: BasisConfig,
    #[serde(default)]
    pub initial: InitialState,
}

fn one_u64() -> u64 {
    1
}

fn one_usize() -> usize {
    1
}

/// A parsed observable name.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Observable {
    Q(usize),
    P(usize),
    N(usize),
}

impl Observable {
    pub fn parse(name: &str) -> Result<Self> {
        let bad = || Error::Config(format!("unknown observable `{name}` (expected Q<k>, P<k> or N<k>)"));
        let mut chars = name.chars();
        let kind = chars.next().ok_or_else(bad)?;
        let mode: usize = chars.as_str().parse().map_err(|_| bad())?;
        match kind {
            'Q' => Ok(Self::Q(mode)),
            'P' => Ok(Self::P(mode)),
            'N' => Ok(Self::N(mode)),
            _ => Err(bad()),
        }
    }

    pub fn mode(&self) -> usize {
        match *self {
            Self::Q(m) | Self::P(m) | Self::N(m) => m,
        }
    }

    pub fn operator(&self) -> OperatorExpr {
        match *self {
            Self::Q(m) => OperatorExpr::quadrature(m, Quadrature::Q),
            Self::P(m) => OperatorExpr::quadrature(m, Quadrature::P),
            Self::N(m) => OperatorExpr::number(m),
        }
    }
}

impl RunConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        let config: Self = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        config.validate()?;
        Ok(config)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
        Self::from_toml(&text)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("run configuration serializes")
    }

    pub fn n_modes(&self) -> usize {
        self.model.n_modes()
    }

    pub fn steps(&self) -> u64 {
        (self.t_final / self.integrator.dt).round() as u64
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::Config(msg));
        self.integrator.validate()?;
        self.model.build()?;
        let n = self.n_modes();
        if !(self.t_final > 0.0 && self.t_final.is_finite()) {
            return bad(format!("t_final must be positive, got {}", self.t_final));
        }
        if self.steps() == 0 {
            return bad("t_final is shorter than one step".into());
        }
        if self.sample_interval == 0 || self.trajectories == 0 || self.workers == 0 {
            return bad("sample_interval, trajectories and workers must be at least 1".into());
        }
        for name in &self.observables {
            let obs = Observable::parse(name)?;
            if obs.mode() >= n {
                return bad(format!("observable {name} refers to mode {} of a {n}-mode model", obs.mode()));
            }
        }
        if let Some(period) = self.poincare_period {
            if !(period > 0.0 && period.is_finite()) {
                return bad(format!("poincare_period must be positive, got {period}"));
            }
        }
        match &self.basis {
            BasisConfig::Fixed { capacities } => {
                if capacities.len() != n || capacities.contains(&0) {
                    return bad(format!("fixed basis needs {n} positive capacities, got {capacities:?}"));
                }
            }
            BasisConfig::Moving(policy) => policy.validate()?,
        }
        for (what, len) in [("origins", self.initial.origins.len()), ("occupations", self.initial.occupations.len())] {
            if len != 0 && len != n {
                return bad(format!("initial {what} must list {n} modes, got {len}"));
            }
        }
        Ok(())
    }

    fn initial_mqsd(&self) -> Result<MqsdState> {
        let n = self.n_modes();
        let origins: Vec<(f64, f64)> = if self.initial.origins.is_empty() {
            vec![(0.0, 0.0); n]
        } else {
            self.initial.origins.iter().map(|o| (o[0], o[1])).collect()
        };
        let occupations = if self.initial.occupations.is_empty() { vec![0; n] } else { self.initial.occupations.clone() };
        let min_cap = match &self.basis {
            BasisConfig::Moving(policy) => policy.min_capacity,
            BasisConfig::Fixed { .. } => 2,
        };
        let pad = match &self.basis {
            BasisConfig::Moving(policy) => policy.pad_size,
            BasisConfig::Fixed { .. } => 0,
        };
        let caps: Vec<usize> = occupations.iter().map(|&k| min_cap.max(k + pad + 1)).collect();
        let local = FockState::basis(&caps, &occupations)?;
        MqsdState::new(MovingFrame { origins, phase: 0.0 }, local)
    }
}

/// One recorded sample of a trajectory.
#[derive(Debug, Clone, PartialEq)]
pub struct RecordRow {
    pub t: f64,
    pub values: Vec<C64>,
    pub origins: Vec<(f64, f64)>,
    pub capacities: Vec<usize>,
    /// Norm before renormalization in the most recent step.
    pub pre_normalization_norm: f64,
    /// Probability lost to truncation since the start of the run.
    pub dropped_total: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrajectoryRecord {
    pub index: u64,
    pub observables: Vec<String>,
    pub n_modes: usize,
    pub rows: Vec<RecordRow>,
    /// Set when the integration stopped early; `rows` then holds the partial record.
    pub failure: Option<Error>,
}

impl TrajectoryRecord {
    pub fn header(&self) -> String {
        let mut cols = vec!["t".to_string()];
        for name in &self.observables {
            cols.push(format!("{name}.re"));
            cols.push(format!("{name}.im"));
        }
        for k in 0..self.n_modes {
            cols.push(format!("q{k}"));
            cols.push(format!("p{k}"));
        }
        for k in 0..self.n_modes {
            cols.push(format!("cap{k}"));
        }
        cols.push("norm".into());
        cols.push("dropped".into());
        cols.join("\t")
    }

    pub fn to_tsv(&self) -> String {
        let mut out = self.header();
        out.push('\n');
        for row in &self.rows {
            let mut fields = vec![row.t.to_string()];
            for v in &row.values {
                fields.push(v.re.to_string());
                fields.push(v.im.to_string());
            }
            for (q, p) in &row.origins {
                fields.push(q.to_string());
                fields.push(p.to_string());
            }
            fields.extend(row.capacities.iter().map(|c| c.to_string()));
            fields.push(row.pre_normalization_norm.to_string());
            fields.push(row.dropped_total.to_string());
            out.push_str(&fields.join("\t"));
            out.push('\n');
        }
        out
    }

    pub fn from_tsv(index: u64, text: &str) -> Result<Self> {
        let bad = |msg: String| Error::Record(msg);
        let mut lines = text.lines();
        let header: Vec<&str> = lines.next().ok_or_else(|| bad("empty record".into()))?.split('\t').collect();
        if header.first() != Some(&"t") || header.len() < 3 {
            return Err(bad("record header must start with `t`".into()));
        }
        let n_modes = header.iter().filter(|h| h.starts_with("cap")).count();
        let n_obs = (header.len() - 3 - 3 * n_modes) / 2;
        if header.len() != 3 + 2 * n_obs + 3 * n_modes {
            return Err(bad(format!("unexpected column count {}", header.len())));
        }
        let observables: Vec<String> = (0..n_obs)
            .map(|k| header[1 + 2 * k].strip_suffix(".re").map(str::to_string).ok_or_else(|| bad(format!("bad column {}", header[1 + 2 * k]))))
            .collect::<Result<_>>()?;
        let mut rows = Vec::new();
        for (lineno, line) in lines.enumerate() {
            let f: Vec<&str> = line.split('\t').collect();
            if f.len() != header.len() {
                return Err(bad(format!("line {}: expected {} fields, got {}", lineno + 2, header.len(), f.len())));
            }
            let num = |s: &str| s.parse::<f64>().map_err(|e| bad(format!("line {}: {e}", lineno + 2)));
            let mut pos = 1;
            let mut values = Vec::with_capacity(n_obs);
            for _ in 0..n_obs {
                values.push(C64::new(num(f[pos])?, num(f[pos + 1])?));
                pos += 2;
            }
            let mut origins = Vec::with_capacity(n_modes);
            for _ in 0..n_modes {
                origins.push((num(f[pos])?, num(f[pos + 1])?));
                pos += 2;
            }
            let mut capacities = Vec::with_capacity(n_modes);
            for _ in 0..n_modes {
                capacities.push(f[pos].parse::<usize>().map_err(|e| bad(format!("line {}: {e}", lineno + 2)))?);
                pos += 1;
            }
            rows.push(RecordRow {
                t: num(f[0])?,
                values,
                origins,
                capacities,
                pre_normalization_norm: num(f[pos])?,
                dropped_total: num(f[pos + 1])?,
            });
        }
        Ok(Self { index, observables, n_modes, rows, failure: None })
    }

    /// Index of a named observable column.
    pub fn column(&self, name: &str) -> Option<usize> {
        self.observables.iter().position(|o| o == name)
    }
}

/// The state being propagated, in whichever basis the run uses.
#[derive(Debug, Clone, PartialEq)]
pub enum StateView<'a> {
    Fixed(&'a FockState),
    Moving(&'a MqsdState),
}

enum Propagated {
    Fixed(FockState),
    Moving(MqsdState),
}

impl Propagated {
    fn view(&self) -> StateView<'_> {
        match self {
            Propagated::Fixed(s) => StateView::Fixed(s),
            Propagated::Moving(s) => StateView::Moving(s),
        }
    }
}

/// Everything a trajectory needs that can be shared across an ensemble.
pub struct PreparedRun {
    pub config: RunConfig,
    model: CompiledModel,
    observables: Vec<CompiledOperator>,
}

impl PreparedRun {
    pub fn new(config: &RunConfig) -> Result<Self> {
        config.validate()?;
        let model = CompiledModel::new(&config.model.build()?);
        let observables = config
            .observables
            .iter()
            .map(|name| Observable::parse(name).map(|o| o.operator().compile()))
            .collect::<Result<_>>()?;
        Ok(Self { config: config.clone(), model, observables })
    }

    fn initial(&self) -> Result<Propagated> {
        let mq = self.config.initial_mqsd()?;
        Ok(match &self.config.basis {
            BasisConfig::Fixed { capacities } => Propagated::Fixed(mq.to_fixed_basis(capacities)?),
            BasisConfig::Moving(_) => Propagated::Moving(mq),
        })
    }

    fn sample(&self, state: &Propagated, t: f64, norm: f64, dropped: f64) -> RecordRow {
        let n = self.config.n_modes();
        match state {
            Propagated::Fixed(s) => RecordRow {
                t,
                values: self.observables.iter().map(|o| CompiledModel::expectation(o, s, t)).collect(),
                origins: vec![(0.0, 0.0); n],
                capacities: s.capacities(),
                pre_normalization_norm: norm,
                dropped_total: dropped,
            },
            Propagated::Moving(s) => RecordRow {
                t,
                values: self.observables.iter().map(|o| s.expectation(o, t)).collect(),
                origins: s.frame.origins.clone(),
                capacities: s.capacities(),
                pre_normalization_norm: norm,
                dropped_total: dropped,
            },
        }
    }

    /// Integrates one trajectory, calling `observer(step, t, state)` after
    /// every step (and once for the initial state with step 0).
    pub fn run_observed(&self, index: u64, observer: &mut dyn FnMut(u64, f64, StateView<'_>)) -> TrajectoryRecord {
        let config = &self.config;
        let mut record = TrajectoryRecord {
            index,
            observables: config.observables.clone(),
            n_modes: config.n_modes(),
            rows: Vec::new(),
            failure: None,
        };
        let mut state = match self.initial() {
            Ok(s) => s,
            Err(e) => {
                record.failure = Some(e);
                return record;
            }
        };
        let mut rng = TrajectoryRng::new(config.integrator.rng_seed, index);
        let dt = config.integrator.dt;
        let (mut norm, mut dropped) = (1.0, 0.0);
        record.rows.push(self.sample(&state, 0.0, norm, dropped));
        observer(0, 0.0, state.view());
        for step in 0..config.steps() {
            let t = step as f64 * dt;
            let advanced = match &state {
                Propagated::Fixed(s) => self.model.step(s, t, &config.integrator, &mut rng).map(|(s, d)| (Propagated::Fixed(s), d)),
                Propagated::Moving(s) => {
                    let BasisConfig::Moving(policy) = &config.basis else { unreachable!() };
                    mqsd_step(&self.model, s, t, &config.integrator, policy, &mut rng).map(|(s, d)| (Propagated::Moving(s), d))
                }
            };
            match advanced {
                Ok((next, diagnostics)) => {
                    state = next;
                    norm = diagnostics.pre_normalization_norm;
                    dropped += diagnostics.dropped_probability;
                }
                Err(e) => {
                    record.failure = Some(e);
                    return record;
                }
            }
            let t_next = (step + 1) as f64 * dt;
            observer(step + 1, t_next, state.view());
            if (step + 1) % config.sample_interval == 0 {
                record.rows.push(self.sample(&state, t_next, norm, dropped));
            }
        }
        record
    }

    pub fn run(&self, index: u64) -> TrajectoryRecord {
        self.run_observed(index, &mut |_, _, _| {})
    }

    /// All trajectories of the ensemble, in index order.
    pub fn run_all(&self) -> Result<Vec<TrajectoryRecord>> {
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(self.config.workers)
            .build()
            .map_err(|e| Error::Config(format!("cannot start worker pool: {e}")))?;
        Ok(pool.install(|| (0..self.config.trajectories as u64).into_par_iter().map(|i| self.run(i)).collect()))
    }
}

/// Deterministic given the master seed and `index`.
pub fn run_trajectory(config: &RunConfig, index: u64) -> Result<TrajectoryRecord> {
    Ok(PreparedRun::new(config)?.run(index))
}

#[derive(Debug, Clone, PartialEq)]
pub struct EnsembleSummary {
    pub observables: Vec<String>,
    pub times: Vec<f64>,
    /// Number of trajectories that completed.
    pub count: usize,
    /// `mean[sample][observable]`.
    pub mean: Vec<Vec<C64>>,
    /// Standard errors of the real and imaginary parts, same layout as `mean`.
    pub stderr: Vec<Vec<C64>>,
    pub failures: Vec<(u64, String)>,
}

impl EnsembleSummary {
    pub fn to_tsv(&self) -> String {
        let mut out = String::from("t");
        for name in &self.observables {
            write!(out, "\t{name}.re\t{name}.im\t{name}.se_re\t{name}.se_im").unwrap();
        }
        out.push('\n');
        for (k, t) in self.times.iter().enumerate() {
            out.push_str(&t.to_string());
            for (m, s) in self.mean[k].iter().zip(&self.stderr[k]) {
                write!(out, "\t{}\t{}\t{}\t{}", m.re, m.im, s.re, s.im).unwrap();
            }
            out.push('\n');
        }
        out
    }

    /// Sample index whose time is closest to `t`.
    pub fn sample_near(&self, t: f64) -> Option<usize> {
        (0..self.times.len()).min_by(|&a, &b| (self.times[a] - t).abs().total_cmp(&(self.times[b] - t).abs()))
    }
}

/// Mean and standard error per sample over completed trajectories. Records
/// are reduced in index order, so the result does not depend on the order in
/// which they are supplied.
pub fn summarize(records: &[TrajectoryRecord]) -> Result<EnsembleSummary> {
    let mut sorted: Vec<&TrajectoryRecord> = records.iter().collect();
    sorted.sort_by_key(|r| r.index);
    let failures: Vec<(u64, String)> =
        sorted.iter().filter_map(|r| r.failure.as_ref().map(|e| (r.index, e.to_string()))).collect();
    let done: Vec<&TrajectoryRecord> = sorted.into_iter().filter(|r| r.failure.is_none()).collect();
    let first = done.first().ok_or(Error::EmptyEnsemble)?;
    let times: Vec<f64> = first.rows.iter().map(|r| r.t).collect();
    for r in &done {
        if r.rows.len() != times.len() || r.observables != first.observables {
            return Err(Error::Record(format!("trajectory {} has a different sample layout", r.index)));
        }
    }
    let n = done.len() as f64;
    let n_obs = first.observables.len();
    let mut mean = vec![vec![C64::new(0.0, 0.0); n_obs]; times.len()];
    let mut stderr = vec![vec![C64::new(0.0, 0.0); n_obs]; times.len()];
    for k in 0..times.len() {
        for j in 0..n_obs {
            let m = done.iter().map(|r| r.rows[k].values[j]).sum::<C64>() / n;
            mean[k][j] = m;
            if done.len() > 1 {
                let (vr, vi) = done.iter().fold((0.0, 0.0), |(vr, vi), r| {
                    let d = r.rows[k].values[j] - m;
                    (vr + d.re * d.re, vi + d.im * d.im)
                });
                stderr[k][j] = C64::new((vr / (n - 1.0) / n).sqrt(), (vi / (n - 1.0) / n).sqrt());
            }
        }
    }
    Ok(EnsembleSummary { observables: first.observables.clone(), times, count: done.len(), mean, stderr, failures })
}

pub fn run_ensemble(config: &RunConfig) -> Result<(EnsembleSummary, Vec<TrajectoryRecord>)> {
    let records = PreparedRun::new(config)?.run_all()?;
    Ok((summarize(&records)?, records))
}

/// Observable expectations of the dense master-equation solution.
#[derive(Debug, Clone, PartialEq)]
pub struct OracleTable {
    pub observables: Vec<String>,
    pub times: Vec<f64>,
    /// `values[sample][observable]`.
    pub values: Vec<Vec<C64>>,
}

impl OracleTable {
    pub fn to_tsv(&self) -> String {
        let mut out = String::from("t");
        for name in &self.observables {
            write!(out, "\t{name}.re\t{name}.im").unwrap();
        }
        out.push('\n');
        for (t, row) in self.times.iter().zip(&self.values) {
            out.push_str(&t.to_string());
            for v in row {
                write!(out, "\t{}\t{}", v.re, v.im).unwrap();
            }
            out.push('\n');
        }
        out
    }
}

/// Integrates the master equation from the configured initial state in a
/// fixed basis with `capacities`, sampling at the trajectory sample times.
pub fn run_oracle(config: &RunConfig, capacities: &[usize], dimension_limit: usize) -> Result<OracleTable> {
    config.validate()?;
    let model = config.model.build()?;
    let psi0 = config.initial_mqsd()?.to_fixed_basis(capacities)?;
    let dt = config.integrator.dt;
    let times: Vec<f64> =
        (0..=config.steps()).step_by(config.sample_interval as usize).map(|k| k as f64 * dt).collect();
    let rhos = master_equation_samples(&model, &DensityMatrix::from_pure(&psi0), &times, dt, dimension_limit)?;
    let ops = config.observables.iter().map(|n| Observable::parse(n).map(|o| o.operator())).collect::<Result<Vec<_>>>()?;
    let values = rhos
        .iter()
        .zip(&times)
        .map(|(rho, &t)| ops.iter().map(|op| rho.expectation(op, t)).collect::<Result<Vec<_>>>())
        .collect::<Result<_>>()?;
    Ok(OracleTable { observables: config.observables.clone(), times, values })
}

/// `(<Q0>, <P0>)` at `offset + n * period`, linearly interpolated between samples.
pub fn extract_poincare(record: &TrajectoryRecord, period: f64, offset: f64) -> Result<Vec<(f64, f64)>> {
    if !(period > 0.0 && period.is_finite()) {
        return Err(Error::InvalidParameter(format!("period must be positive, got {period}")));
    }
    let (Some(iq), Some(ip)) = (record.column("Q0"), record.column("P0")) else {
        return Err(Error::Record("Poincaré sections need Q0 and P0 columns".into()));
    };
    let rows = &record.rows;
    let (Some(first), Some(last)) = (rows.first(), rows.last()) else {
        return Ok(Vec::new());
    };
    if last.t - first.t < period {
        return Ok(Vec::new());
    }
    let value = |r: &RecordRow| (r.values[iq].re, r.values[ip].re);
    let mut out = Vec::new();
    let mut n = ((first.t - offset) / period).ceil() as i64;
    loop {
        let t = offset + n as f64 * period;
        if t > last.t {
            break;
        }
        let hi = rows.partition_point(|r| r.t < t);
        let point = if rows[hi].t == t || hi == 0 {
            value(&rows[hi])
        } else {
            let (a, b) = (&rows[hi - 1], &rows[hi]);
            let w = (t - a.t) / (b.t - a.t);
            let (qa, pa) = value(a);
            let (qb, pb) = value(b);
            (qa + w * (qb - qa), pa + w * (pb - pa))
        };
        out.push(point);
        n += 1;
    }
    Ok(out)
}

/// Section points as `n, x, p`, with both coordinates divided by `scale`.
pub fn poincare_tsv(points: &[(f64, f64)], scale: f64) -> String {
    let mut out = String::from("n\tx\tp\n");
    for (n, (q, p)) in points.iter().enumerate() {
        writeln!(out, "{n}\t{}\t{}", q / scale, p / scale).unwrap();
    }
    out
}

/// Run metadata: version, seed, outcome per trajectory, and the resolved configuration.
pub fn run_meta(config: &RunConfig, records: &[TrajectoryRecord]) -> String {
    let mut out = String::new();
    writeln!(out, "version\t{}", env!("CARGO_PKG_VERSION")).unwrap();
    writeln!(out, "seed\t{}", config.integrator.rng_seed).unwrap();
    writeln!(out, "trajectories\t{}", records.len()).unwrap();
    for r in records {
        match &r.failure {
            None => writeln!(out, "trajectory\t{}\tok\t{} samples", r.index, r.rows.len()).unwrap(),
            Some(e) => writeln!(out, "trajectory\t{}\tfailed\t{} samples\t{e}", r.index, r.rows.len()).unwrap(),
        }
    }
    out.push_str("config\n");
    out.push_str(&config.to_toml());
    out
}

fn write_file(dir: &Path, name: &str, contents: &str) -> Result<PathBuf> {
    let path = dir.join(name);
    std::fs::write(&path, contents).map_err(|e| Error::Record(format!("{}: {e}", path.display())))?;
    Ok(path)
}

/// Writes `trajectory_<i>.tsv` for every record, `ensemble_summary.tsv` when
/// given a summary, `poincare.tsv` (first record) when a period is
/// configured, and `run_meta.txt`. Returns the paths written.
pub fn write_outputs(dir: &Path, config: &RunConfig, records: &[TrajectoryRecord], summary: Option<&EnsembleSummary>) -> Result<Vec<PathBuf>> {
    std::fs::create_dir_all(dir).map_err(|e| Error::Record(format!("{}: {e}", dir.display())))?;
    let mut written = Vec::new();
    for r in records {
        written.push(write_file(dir, &format!("trajectory_{}.tsv", r.index), &r.to_tsv())?);
    }
    if let Some(s) = summary {
        written.push(write_file(dir, "ensemble_summary.tsv", &s.to_tsv())?);
    }
    if let (Some(period), Some(first)) = (config.poincare_period, records.first()) {
        let points = extract_poincare(first, period, config.poincare_offset)?;
        written.push(write_file(dir, "poincare.tsv", &poincare_tsv(&points, config.model.phase_space_scale()))?);
    }
    written.push(write_file(dir, "run_meta.txt", &run_meta(config, records))?);
    Ok(written)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::models::OscillatorParams;

    fn oscillator_config() -> RunConfig {
        RunConfig {
            t_final: 0.5,
            sample_interval: 10,
            observables: vec!["Q0".into(), "P0".into(), "N0".into()],
            trajectories: 3,
            workers: 1,
            poincare_period: None,
            poincare_offset: 0.0,
            output_dir: None,
            model: ModelConfig::Oscillator(OscillatorParams { omega: 1.0, kappa: 0.2, f: 0.5 }),
            integrator: IntegratorConfig::new(0.01, 1),
            basis: BasisConfig::Fixed { capacities: vec![12] },
            initial: InitialState { origins: vec![[0.5, 0.0]], occupations: vec![1] },
        }
    }

    #[test]
    fn observable_names() {
        assert_eq!(Observable::parse("Q0").unwrap(), Observable::Q(0));
        assert_eq!(Observable::parse("N12").unwrap(), Observable::N(12));
        assert!(Observable::parse("X0").is_err());
        assert!(Observable::parse("Q").is_err());
    }

    #[test]
    fn config_validation() {
        let good = oscillator_config();
        assert!(good.validate().is_ok());
        let mut bad = good.clone();
        bad.observables.push("N1".into());
        assert!(bad.validate().is_err());
        let mut bad = good.clone();
        bad.basis = BasisConfig::Fixed { capacities: vec![4, 4] };
        assert!(bad.validate().is_err());
        let mut bad = good;
        bad.trajectories = 0;
        assert!(bad.validate().is_err());
    }

    #[test]
    fn toml_round_trip_and_unknown_keys() {
        let config = oscillator_config();
        let text = config.to_toml();
        assert_eq!(RunConfig::from_toml(&text).unwrap(), config);
        let typo = text.replace("t_final", "t_finale");
        assert!(matches!(RunConfig::from_toml(&typo), Err(Error::Config(_))));
    }

    #[test]
    fn tsv_round_trip() {
        let record = run_trajectory(&oscillator_config(), 0).unwrap();
        assert!(record.failure.is_none());
        assert_eq!(record.rows.len(), 6);
        let back = TrajectoryRecord::from_tsv(0, &record.to_tsv()).unwrap();
        assert_eq!(back, record);
    }

    #[test]
    fn single_trajectory_summary_has_zero_errors() {
        let mut config = oscillator_config();
        config.trajectories = 1;
        let (summary, records) = run_ensemble(&config).unwrap();
        assert_eq!(summary.count, 1);
        for (k, row) in records[0].rows.iter().enumerate() {
            assert_eq!(summary.mean[k], row.values);
            assert!(summary.stderr[k].iter().all(|s| *s == C64::new(0.0, 0.0)));
        }
    }

    #[test]
    fn summary_ignores_input_order() {
        let (summary, mut records) = run_ensemble(&oscillator_config()).unwrap();
        records.reverse();
        assert_eq!(summarize(&records).unwrap(), summary);
    }

    fn flat_record(times: &[f64], q: impl Fn(f64) -> f64) -> TrajectoryRecord {
        TrajectoryRecord {
            index: 0,
            observables: vec!["Q0".into(), "P0".into()],
            n_modes: 1,
            rows: times
                .iter()
                .map(|&t| RecordRow {
                    t,
                    values: vec![C64::new(q(t), 0.0), C64::new(-q(t), 0.0)],
                    origins: vec![(0.0, 0.0)],
                    capacities: vec![4],
                    pre_normalization_norm: 1.0,
                    dropped_total: 0.0,
                })
                .collect(),
            failure: None,
        }
    }

    #[test]
    fn poincare_sections() {
        let times: Vec<f64> = (0..=100).map(|k| k as f64 * 0.1).collect();
        let constant = flat_record(&times, |_| 0.7);
        let points = extract_poincare(&constant, 2.0, 0.0).unwrap();
        assert_eq!(points.len(), 6);
        assert!(points.iter().all(|&p| p == (0.7, -0.7)));

        let period = 0.25;
        let exact: Vec<f64> = (0..=8).map(|n| n as f64 * period).collect();
        let rec = flat_record(&exact, |t| t * t);
        let points = extract_poincare(&rec, period, 0.0).unwrap();
        for (n, (q, _)) in points.iter().enumerate() {
            assert_eq!(*q, exact[n] * exact[n]);
        }

        let linear = flat_record(&times, |t| 3.0 * t);
        let points = extract_poincare(&linear, 1.05, 0.0).unwrap();
        assert!((points[1].0 - 3.15).abs() < 1e-12);

        let short = flat_record(&times[..5], |t| t);
        assert!(extract_poincare(&short, 1.0, 0.0).unwrap().is_empty());
        assert!(extract_poincare(&short, 0.0, 0.0).is_err());
    }
}
