//! Convergence studies, single solves and rate fitting over CSV results.

use std::io::Write;
use std::path::Path;
use std::str::FromStr;
use std::sync::Arc;
use std::time::Instant;

use num_rational::Rational64;
use num_traits::Signed;

use crate::analysis::{
    error_norms, evaluate, fit_rate, DiscreteSolution, Discretization, ErrorField, RateFit, SolutionMeta, StudyRecord,
    DEFAULT_PLATEAU,
};
use crate::assembly::{assemble_operator, AssemblyConfig, OperatorPair};
use crate::eigen::{solve_smallest, SolverOptions};
use crate::error::{Error, Result};
use crate::mesh::{assign_degrees, build_graded_mesh};

fn half() -> Rational64 {
    Rational64::new(1, 2)
}

pub const CSV_HEADER: [&str; 7] = ["N", "levels", "lambda", "err_dg", "err_l2", "err_linf", "err_lambda"];

/// Quadrature and degree slope used for the reference solution.
pub const REFERENCE_QUAD_EXTRA: usize = 10;

#[derive(Clone, Debug, PartialEq)]
pub struct StudyConfig {
    pub dim: usize,
    pub alpha: Rational64,
    pub slope: Rational64,
    pub p0: usize,
    pub sigma: Rational64,
    pub theta: i32,
    pub penalty: f64,
    pub quad_extra: usize,
    pub shells: usize,
    pub levels: (usize, usize),
    pub k: usize,
    pub tol: f64,
    /// `None` means two levels past the last study level.
    pub ref_levels: Option<usize>,
    pub seed: u64,
    /// Constant added to the potential; `-1` with `alpha = 0` gives `V = 0`.
    pub potential_shift: f64,
}

impl Default for StudyConfig {
    fn default() -> Self {
        StudyConfig {
            dim: 2,
            alpha: Rational64::from_integer(1),
            slope: Rational64::new(1, 4),
            p0: 1,
            sigma: half(),
            theta: 1,
            penalty: 10.0,
            quad_extra: 2,
            shells: 10,
            levels: (2, 6),
            k: 1,
            tol: 1e-10,
            ref_levels: None,
            seed: 0,
            potential_shift: 0.0,
        }
    }
}

fn bad(key: &str, value: &str, why: impl std::fmt::Display) -> Error {
    Error::Config(format!("{key} = {value:?}: {why}"))
}

/// Exact rational from `a/b`, an integer, or a plain decimal such as `0.25`.
pub fn parse_rational(s: &str) -> std::result::Result<Rational64, String> {
    let s = s.trim();
    if s.contains('/') {
        return Rational64::from_str(s).map_err(|e| e.to_string());
    }
    let (neg, body) = match s.strip_prefix('-') {
        Some(rest) => (true, rest),
        None => (false, s),
    };
    let (int, frac) = body.split_once('.').unwrap_or((body, ""));
    if int.is_empty() && frac.is_empty() || !int.chars().chain(frac.chars()).all(|c| c.is_ascii_digit()) {
        return Err("expected a/b, an integer or a decimal".into());
    }
    if frac.len() > 15 {
        return Err("too many decimal places".into());
    }
    let digits: i64 = format!("{int}{frac}").parse().map_err(|e: std::num::ParseIntError| e.to_string())?;
    let r = Rational64::new(digits, 10i64.pow(frac.len() as u32));
    Ok(if neg { -r } else { r })
}

/// `A..B`, `A..=B` or a single level `A`.
pub fn parse_levels(s: &str) -> std::result::Result<(usize, usize), String> {
    let s = s.trim();
    let parse = |t: &str| t.trim().parse::<usize>().map_err(|e| e.to_string());
    match s.split_once("..") {
        Some((a, b)) => Ok((parse(a)?, parse(b.strip_prefix('=').unwrap_or(b))?)),
        None => parse(s).map(|a| (a, a)),
    }
}

/// Parses `key = value` lines; blank lines and `#` comments are skipped.
pub fn parse_config_text(text: &str) -> Result<Vec<(String, String)>> {
    let mut out = Vec::new();
    for (i, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let (k, v) = line
            .split_once('=')
            .ok_or_else(|| Error::Config(format!("line {}: expected `key = value`, got {raw:?}", i + 1)))?;
        out.push((k.trim().replace('-', "_"), v.trim().to_string()));
    }
    Ok(out)
}

impl StudyConfig {
    /// Sets one field from its textual form. Keys use underscores.
    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        fn num<T: FromStr>(key: &str, value: &str) -> Result<T>
        where
            T::Err: std::fmt::Display,
        {
            value.trim().parse::<T>().map_err(|e| bad(key, value, e))
        }
        let rational = |v: &str| parse_rational(v).map_err(|e| bad(key, v, e));
        match key {
            "dim" => self.dim = num(key, value)?,
            "alpha" => self.alpha = rational(value)?,
            "slope" => self.slope = rational(value)?,
            "p0" => self.p0 = num(key, value)?,
            "sigma" => self.sigma = rational(value)?,
            "theta" => self.theta = num(key, value)?,
            "penalty" => self.penalty = num(key, value)?,
            "quad_extra" => self.quad_extra = num(key, value)?,
            "shells" | "singular_shells" => self.shells = num(key, value)?,
            "levels" => self.levels = parse_levels(value).map_err(|e| bad(key, value, e))?,
            "k" => self.k = num(key, value)?,
            "tol" => self.tol = num(key, value)?,
            "ref_levels" => self.ref_levels = Some(num(key, value)?),
            "seed" => self.seed = num(key, value)?,
            "potential_shift" => self.potential_shift = num(key, value)?,
            _ => return Err(Error::Config(format!("unknown key {key:?}"))),
        }
        Ok(())
    }

    pub fn apply(&mut self, pairs: &[(String, String)]) -> Result<()> {
        pairs.iter().try_for_each(|(k, v)| self.set(k, v))
    }

    pub fn reference_levels(&self) -> usize {
        self.ref_levels.unwrap_or(self.levels.1 + 2)
    }

    pub fn validate(&self) -> Result<()> {
        let fail = |m: String| Err(Error::Config(m));
        if self.dim != 2 && self.dim != 3 {
            return Err(Error::InvalidDimension(self.dim));
        }
        if self.alpha.is_negative() || self.alpha >= Rational64::from_integer(self.dim as i64) {
            return fail(format!("alpha = {} must satisfy 0 <= alpha < dim = {}", self.alpha, self.dim));
        }
        if self.slope.is_negative() {
            return fail(format!("slope = {} must be non-negative", self.slope));
        }
        if self.p0 < 1 {
            return fail("p0 must be at least 1".into());
        }
        if self.sigma != half() {
            return Err(Error::UnsupportedRatio(self.sigma.to_string()));
        }
        if ![-1, 0, 1].contains(&self.theta) {
            return fail(format!("theta = {} must be -1, 0 or 1", self.theta));
        }
        if !(self.penalty > 0.0 && self.penalty.is_finite()) {
            return fail(format!("penalty = {} must be positive", self.penalty));
        }
        if self.shells < 1 {
            return fail("shells must be at least 1".into());
        }
        let (a, b) = self.levels;
        if a < 1 || a > b {
            return fail(format!("levels {a}..{b} must be a non-empty range starting at 1 or above"));
        }
        if self.reference_levels() < b {
            return fail(format!("ref_levels = {} must be at least the last study level {b}", self.reference_levels()));
        }
        if self.k < 1 {
            return fail("k must be at least 1".into());
        }
        if !(self.tol > 0.0) {
            return fail(format!("tol = {} must be positive", self.tol));
        }
        if !self.potential_shift.is_finite() {
            return fail("potential_shift must be finite".into());
        }
        Ok(())
    }

    pub fn assembly_config(&self) -> AssemblyConfig {
        AssemblyConfig {
            theta: self.theta,
            penalty: self.penalty,
            alpha: self.alpha,
            quad_extra: self.quad_extra,
            shells: self.shells,
            potential_shift: self.potential_shift,
        }
    }

    /// SIP, high quadrature, two extra levels and slope at least 1/2.
    pub fn reference_config(&self) -> StudyConfig {
        let r = self.reference_levels();
        StudyConfig {
            theta: 1,
            quad_extra: REFERENCE_QUAD_EXTRA,
            slope: self.slope.max(half()),
            levels: (r, r),
            ref_levels: Some(r),
            ..self.clone()
        }
    }

    pub fn solver_options(&self) -> SolverOptions {
        SolverOptions {
            k: self.k,
            tol: self.tol,
            // The potential is bounded below by its shift; the DG form is coercive.
            shift: self.potential_shift.min(0.0),
            seed: self.seed,
            ..SolverOptions::default()
        }
    }

    fn meta(&self, levels: usize) -> SolutionMeta {
        SolutionMeta {
            dim: self.dim,
            levels,
            slope: self.slope,
            p0: self.p0,
            alpha: self.alpha,
            theta: self.theta,
            penalty: self.penalty,
            quad_extra: self.quad_extra,
            shells: self.shells,
        }
    }
}

/// Everything produced by one solve at one level.
pub struct LevelSolution {
    pub op: OperatorPair,
    pub pairs: Vec<DiscreteSolution>,
    pub residuals: Vec<f64>,
}

impl LevelSolution {
    pub fn n(&self) -> usize {
        self.op.len()
    }
}

pub fn discretize(cfg: &StudyConfig, levels: usize) -> Result<Arc<Discretization>> {
    let mesh = build_graded_mesh(cfg.dim, levels, cfg.sigma).map_err(Error::at(levels, "mesh"))?;
    let mesh = assign_degrees(mesh, cfg.p0, cfg.slope).map_err(Error::at(levels, "degrees"))?;
    Discretization::new(mesh).map_err(Error::at(levels, "faces"))
}

/// Mesh → degrees → assemble → solve for the `k` smallest eigenpairs.
pub fn solve_level(cfg: &StudyConfig, levels: usize) -> Result<LevelSolution> {
    let disc = discretize(cfg, levels)?;
    let op = assemble_operator(&disc.mesh, &disc.faces, &disc.dofs, &cfg.assembly_config())
        .map_err(Error::at(levels, "assemble"))?;
    let pairs = solve_smallest(&op, &cfg.solver_options()).map_err(Error::at(levels, "solve"))?;
    let residuals = pairs.iter().map(|p| p.residual).collect();
    let meta = cfg.meta(levels);
    let pairs = pairs
        .into_iter()
        .map(|p| DiscreteSolution { disc: Arc::clone(&disc), coefficients: p.vector, lambda: p.lambda, meta: meta.clone() })
        .collect();
    Ok(LevelSolution { op, pairs, residuals })
}

pub fn reference_solution(cfg: &StudyConfig) -> Result<LevelSolution> {
    let r = cfg.reference_config();
    let at = r.levels.0;
    solve_level(&r, at).map_err(|e| match e {
        Error::Stage { levels, stage, source } => Error::Stage {
            levels,
            stage: match stage {
                "mesh" => "reference mesh",
                "degrees" => "reference degrees",
                "faces" => "reference faces",
                "assemble" => "reference assemble",
                _ => "reference solve",
            },
            source,
        },
        other => other,
    })
}

/// Errors of the first eigenpair against the reference.
pub fn record_for(sol: &LevelSolution, reference: &LevelSolution) -> Result<StudyRecord> {
    let u = &sol.pairs[0];
    let r = &reference.pairs[0];
    let norms = error_norms(u, r).map_err(Error::at(u.meta.levels, "errors"))?;
    Ok(StudyRecord {
        n: sol.n(),
        levels: u.meta.levels,
        lambda: u.lambda,
        err_dg: norms.dg,
        err_l2: norms.l2,
        err_linf: norms.linf,
        err_lambda: (u.lambda - r.lambda).abs(),
    })
}

fn format_float(x: f64) -> String {
    format!("{x:.16e}")
}

fn csv_error(e: csv::Error) -> Error {
    match e.into_kind() {
        csv::ErrorKind::Io(io) => Error::Io(io),
        other => Error::Csv(format!("{other:?}")),
    }
}

pub struct RecordWriter<W: Write> {
    inner: csv::Writer<W>,
}

impl<W: Write> RecordWriter<W> {
    pub fn new(w: W) -> Result<Self> {
        let mut inner = csv::WriterBuilder::new().has_headers(false).from_writer(w);
        inner.write_record(CSV_HEADER).map_err(csv_error)?;
        inner.flush()?;
        Ok(RecordWriter { inner })
    }

    /// Writes and flushes one row so a failed study keeps its earlier rows.
    pub fn write(&mut self, r: &StudyRecord) -> Result<()> {
        let row = [
            r.n.to_string(),
            r.levels.to_string(),
            format_float(r.lambda),
            format_float(r.err_dg),
            format_float(r.err_l2),
            format_float(r.err_linf),
            format_float(r.err_lambda),
        ];
        self.inner.write_record(&row).map_err(csv_error)?;
        self.inner.flush()?;
        Ok(())
    }
}

/// Reads study rows; `#` lines (such as fit footers) are ignored.
pub fn read_records<R: std::io::Read>(r: R) -> Result<Vec<StudyRecord>> {
    let mut reader = csv::ReaderBuilder::new()
        .comment(Some(b'#'))
        .trim(csv::Trim::All)
        .from_reader(r);
    let header = reader.headers().map_err(csv_error)?.clone();
    if header.iter().ne(CSV_HEADER) {
        return Err(Error::Csv(format!("expected header {}, got {}", CSV_HEADER.join(","), header.iter().collect::<Vec<_>>().join(","))));
    }
    let mut out = Vec::new();
    for row in reader.records() {
        let row = row.map_err(csv_error)?;
        let line = row.position().map_or(0, |p| p.line());
        let field = |i: usize| -> Result<&str> { row.get(i).ok_or_else(|| Error::Csv(format!("line {line}: missing column {}", CSV_HEADER[i]))) };
        let int = |i: usize| -> Result<usize> {
            field(i)?.parse().map_err(|e| Error::Csv(format!("line {line}, column {}: {e}", CSV_HEADER[i])))
        };
        let float = |i: usize| -> Result<f64> {
            field(i)?.parse().map_err(|e| Error::Csv(format!("line {line}, column {}: {e}", CSV_HEADER[i])))
        };
        out.push(StudyRecord {
            n: int(0)?,
            levels: int(1)?,
            lambda: float(2)?,
            err_dg: float(3)?,
            err_l2: float(4)?,
            err_linf: float(5)?,
            err_lambda: float(6)?,
        });
    }
    Ok(out)
}

pub type FitTable = Vec<(ErrorField, Result<RateFit>)>;

pub fn fit_all(records: &[StudyRecord], dim: usize, threshold: f64) -> FitTable {
    ErrorField::ALL.into_iter().map(|f| (f, fit_rate(records, f, dim, threshold))).collect()
}

/// Coefficient table `field b C R² points`; failed fits show their reason.
pub fn format_fit_table(fits: &FitTable) -> String {
    let mut s = format!("{:<11} {:>24} {:>24} {:>24} {:>6}\n", "field", "b", "C", "R2", "points");
    for (field, fit) in fits {
        match fit {
            Ok(f) => s.push_str(&format!(
                "{:<11} {:>24} {:>24} {:>24} {:>6}\n",
                field.column(),
                format_float(f.b),
                format_float(f.c),
                format_float(f.r_squared),
                f.points_used
            )),
            Err(e) => s.push_str(&format!("{:<11} n/a ({e})\n", field.column())),
        }
    }
    s
}

fn fit_footer(fits: &FitTable) -> String {
    format_fit_table(fits).lines().map(|l| format!("# fit: {l}\n")).collect()
}

pub struct StudySummary {
    pub records: Vec<StudyRecord>,
    pub fits: FitTable,
    pub reference_lambda: f64,
}

/// Reference once, then one CSV row per level; progress goes to `log`.
pub fn run_study(cfg: &StudyConfig, out: &Path, log: &mut dyn Write) -> Result<StudySummary> {
    cfg.validate()?;
    let file = std::fs::File::create(out)?;
    let mut writer = RecordWriter::new(file)?;
    let t0 = Instant::now();
    let reference = reference_solution(cfg)?;
    writeln!(
        log,
        "reference: levels {}, N = {}, lambda = {:.16e} ({:.1} s)",
        cfg.reference_levels(),
        reference.n(),
        reference.pairs[0].lambda,
        t0.elapsed().as_secs_f64()
    )?;
    let mut records = Vec::new();
    for levels in cfg.levels.0..=cfg.levels.1 {
        let t = Instant::now();
        let sol = solve_level(cfg, levels)?;
        let rec = record_for(&sol, &reference)?;
        writer.write(&rec).map_err(Error::at(levels, "write"))?;
        writeln!(
            log,
            "levels {levels}: N = {}, lambda = {:.12e}, err_dg = {:.3e}, err_l2 = {:.3e}, err_linf = {:.3e}, err_lambda = {:.3e} ({:.1} s)",
            rec.n,
            rec.lambda,
            rec.err_dg,
            rec.err_l2,
            rec.err_linf,
            rec.err_lambda,
            t.elapsed().as_secs_f64()
        )?;
        records.push(rec);
    }
    // Fit from the rows as they were written so `fit` on the file agrees.
    let records = read_records(std::fs::File::open(out)?)?;
    let fits = fit_all(&records, cfg.dim, DEFAULT_PLATEAU);
    Ok(StudySummary { records, fits, reference_lambda: reference.pairs[0].lambda })
}

/// Fits every error column of a study CSV. Fails only if no column can be
/// fitted, returning the first column's error.
pub fn fit_command(csv: &Path, dim: usize, threshold: f64, append_footer: bool) -> Result<FitTable> {
    if dim != 2 && dim != 3 {
        return Err(Error::InvalidDimension(dim));
    }
    let records = read_records(std::fs::File::open(csv)?)?;
    let mut fits = fit_all(&records, dim, threshold);
    if fits.iter().all(|(_, f)| f.is_err()) {
        let (_, first) = fits.swap_remove(0);
        return Err(first.expect_err("all fits failed"));
    }
    if append_footer {
        let mut f = std::fs::OpenOptions::new().append(true).open(csv)?;
        f.write_all(fit_footer(&fits).as_bytes())?;
    }
    Ok(fits)
}

/// Optional artifacts of a single solve.
#[derive(Clone, Debug, Default)]
pub struct SolveOutputs {
    /// Sampled eigenfunction, CSV `x,y[,z],value`.
    pub field: Option<std::path::PathBuf>,
    /// Grid points per direction (odd counts include the origin).
    pub grid: usize,
    /// 1-based eigenpair to sample.
    pub mode: usize,
    pub mesh: Option<std::path::PathBuf>,
    pub matrix: Option<std::path::PathBuf>,
    pub mass: Option<std::path::PathBuf>,
    pub coefficients: Option<std::path::PathBuf>,
}

pub struct SolveSummary {
    pub n: usize,
    pub lambdas: Vec<f64>,
    pub residuals: Vec<f64>,
}

/// Uniform tensor grid on the closed domain.
pub fn uniform_grid(dim: usize, per_axis: usize) -> Vec<Vec<f64>> {
    let g = per_axis.max(2);
    let coord = |i: usize| -0.5 + i as f64 / (g - 1) as f64;
    let total = g.pow(dim as u32);
    (0..total)
        .map(|mut idx| {
            let mut x = vec![0.0; dim];
            for a in (0..dim).rev() {
                x[a] = coord(idx % g);
                idx /= g;
            }
            x
        })
        .collect()
}

pub fn write_field<W: Write>(sol: &DiscreteSolution, per_axis: usize, w: W) -> Result<()> {
    let dim = sol.dim();
    let points = uniform_grid(dim, per_axis);
    let values = evaluate(sol, &points, false)?.values;
    let mut writer = csv::WriterBuilder::new().has_headers(false).from_writer(w);
    let names = ["x", "y", "z"];
    let header: Vec<&str> = names[..dim].iter().copied().chain(["value"]).collect();
    writer.write_record(&header).map_err(csv_error)?;
    for (x, v) in points.iter().zip(values) {
        let row: Vec<String> = x.iter().copied().chain([v]).map(format_float).collect();
        writer.write_record(&row).map_err(csv_error)?;
    }
    writer.flush()?;
    Ok(())
}

fn write_lines<T: std::fmt::Display>(path: &Path, items: impl Iterator<Item = T>) -> Result<()> {
    let mut w = std::io::BufWriter::new(std::fs::File::create(path)?);
    for it in items {
        writeln!(w, "{it}")?;
    }
    w.flush()?;
    Ok(())
}

/// One solve at a single level with optional dumps.
pub fn solve_once(cfg: &StudyConfig, outputs: &SolveOutputs) -> Result<SolveSummary> {
    cfg.validate()?;
    let (a, b) = cfg.levels;
    if a != b {
        return Err(Error::Config(format!("solve needs a single level, got {a}..{b}")));
    }
    if outputs.mode < 1 || outputs.mode > cfg.k {
        return Err(Error::Config(format!("mode {} must lie in 1..={}", outputs.mode, cfg.k)));
    }
    let sol = solve_level(cfg, a)?;
    let disc = &sol.pairs[0].disc;
    if let Some(p) = &outputs.mesh {
        let mut w = std::io::BufWriter::new(std::fs::File::create(p)?);
        disc.mesh.dump(&mut w)?;
        w.flush()?;
    }
    if let Some(p) = &outputs.matrix {
        let mut w = std::io::BufWriter::new(std::fs::File::create(p)?);
        sol.op.a.write_coordinate(&mut w)?;
        w.flush()?;
    }
    if let Some(p) = &outputs.mass {
        write_lines(p, sol.op.mass.iter().map(|m| format_float(*m)))?;
    }
    let chosen = &sol.pairs[outputs.mode - 1];
    if let Some(p) = &outputs.coefficients {
        write_lines(p, chosen.coefficients.iter().map(|c| format_float(*c)))?;
    }
    if let Some(p) = &outputs.field {
        let w = std::io::BufWriter::new(std::fs::File::create(p)?);
        write_field(chosen, outputs.grid, w).map_err(Error::at(a, "sample"))?;
    }
    Ok(SolveSummary { n: sol.n(), lambdas: sol.pairs.iter().map(|p| p.lambda).collect(), residuals: sol.residuals })
}
