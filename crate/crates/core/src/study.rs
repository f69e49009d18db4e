//! Convergence studies: run a benchmark over a mesh family, measure errors
//! against the exact solution, and tabulate experimental orders of convergence.

use std::fmt::{self, Write as _};
use std::fs;
use std::path::{Path, PathBuf};
use std::str::FromStr;
use std::sync::Arc;

use crate::error::{Error, Result};
use crate::fem::{error_norm, NormKind, QuadPolicy};
use crate::mesh::Mesh;
use crate::optctrl::{ControlVector, PdasResult, ProblemInstance, SolverOptions};
use crate::problems::{build, BcOption, BuildOptions, ExactControl, ProblemSetup, PROBLEM_NAMES};
use crate::weights::Weight;

/// `ln(e_{k-1}/e_k) / ln(N_{k-1}/N_k)` for consecutive entries.
pub fn eoc(errors: &[f64], dofs: &[usize]) -> Result<Vec<f64>> {
    if errors.len() != dofs.len() || errors.len() < 2 {
        return Err(Error::Domain("need at least two errors with matching degree-of-freedom counts".into()));
    }
    if dofs.windows(2).any(|w| w[0] >= w[1]) {
        return Err(Error::Domain("degree-of-freedom counts must increase strictly".into()));
    }
    let n: Vec<f64> = dofs.iter().map(|&d| d as f64).collect();
    rates(errors, &n)
}

/// `ln(e_{k-1}/e_k) / ln(h_{k-1}/h_k)`: the order in the mesh size.
pub fn eoc_in_h(errors: &[f64], h: &[f64]) -> Result<Vec<f64>> {
    if errors.len() != h.len() || errors.len() < 2 {
        return Err(Error::Domain("need at least two errors with matching mesh sizes".into()));
    }
    if h.windows(2).any(|w| !(w[0] > w[1] && w[1] > 0.0)) {
        return Err(Error::Domain("mesh sizes must be positive and decrease strictly".into()));
    }
    rates(errors, h)
}

fn rates(errors: &[f64], scale: &[f64]) -> Result<Vec<f64>> {
    if let Some(e) = errors.iter().find(|&&e| !(e > 0.0 && e.is_finite())) {
        return Err(Error::Domain(format!("error {e} has no logarithm")));
    }
    Ok(errors
        .windows(2)
        .zip(scale.windows(2))
        .map(|(e, s)| (e[0] / e[1]).ln() / (s[0] / s[1]).ln())
        .collect())
}

fn check_h(h: f64) -> Result<()> {
    if h > 0.0 && h < 1.0 {
        Ok(())
    } else {
        Err(Error::Domain(format!("mesh size {h} outside (0, 1)")))
    }
}

/// `σ = h^{2 - n/2} |ln h|`.
pub fn sigma_factor(h: f64, n: usize) -> Result<f64> {
    check_h(h)?;
    Ok(h.powf(2.0 - n as f64 / 2.0) * h.ln().abs())
}

/// Inverse-inequality factor: `(1 + |ln h|)^{1/2}` in 2D, `h^{-1/2}` in 3D.
pub fn inverse_factor(h: f64, n: usize) -> Result<f64> {
    check_h(h)?;
    match n {
        2 => Ok((1.0 + h.ln().abs()).sqrt()),
        3 => Ok(h.powf(-0.5)),
        _ => Err(Error::Capability(format!("inverse factor in dimension {n}"))),
    }
}

/// Error quantities a study can report.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum NormName {
    ControlL2,
    ControlWeightedL2,
    ControlL2Vec,
    StateLinf,
    StateL2,
}

impl NormName {
    pub const ALL: [NormName; 5] =
        [NormName::ControlL2, NormName::ControlWeightedL2, NormName::ControlL2Vec, NormName::StateLinf, NormName::StateL2];

    pub fn as_str(&self) -> &'static str {
        match self {
            NormName::ControlL2 => "control_L2",
            NormName::ControlWeightedL2 => "control_weightedL2",
            NormName::ControlL2Vec => "control_l2vec",
            NormName::StateLinf => "state_Linf",
            NormName::StateL2 => "state_L2",
        }
    }
}

impl fmt::Display for NormName {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for NormName {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        NormName::ALL
            .into_iter()
            .find(|n| n.as_str().eq_ignore_ascii_case(s.trim()))
            .ok_or_else(|| Error::Config(format!("unknown norm `{s}`")))
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Default)]
pub enum OutputFormat {
    #[default]
    Csv,
    Markdown,
}

impl FromStr for OutputFormat {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s.trim() {
            "csv" => Ok(OutputFormat::Csv),
            "markdown" | "md" => Ok(OutputFormat::Markdown),
            _ => Err(Error::Config(format!("unknown format `{s}` (expected csv or markdown)"))),
        }
    }
}

/// Parameters of a convergence study.
#[derive(Clone, Debug, PartialEq)]
pub struct StudyConfig {
    pub problem: String,
    pub levels: Vec<usize>,
    pub norms: Vec<NormName>,
    pub solver: SolverOptions,
    pub build: BuildOptions,
    pub format: OutputFormat,
    pub out: Option<PathBuf>,
    pub seed: u64,
}

impl Default for StudyConfig {
    fn default() -> Self {
        StudyConfig {
            problem: "point-obs-2d-1".into(),
            levels: (2..=6).collect(),
            norms: vec![NormName::ControlL2, NormName::StateLinf],
            solver: SolverOptions::default(),
            build: BuildOptions::default(),
            format: OutputFormat::Csv,
            out: None,
            seed: 0,
        }
    }
}

/// Parses `a..b` (inclusive) or a comma-separated list.
pub fn parse_levels(s: &str) -> Result<Vec<usize>> {
    let bad = || Error::Config(format!("cannot parse levels `{s}` (expected a..b or a,b,c)"));
    let s = s.trim();
    if let Some((a, b)) = s.split_once("..") {
        let a: usize = a.trim().parse().map_err(|_| bad())?;
        let b: usize = b.trim().trim_start_matches('=').parse().map_err(|_| bad())?;
        if a > b {
            return Err(bad());
        }
        Ok((a..=b).collect())
    } else {
        s.split(',').map(|t| t.trim().parse().map_err(|_| bad())).collect()
    }
}

/// Parses a comma-separated norm list.
pub fn parse_norms(s: &str) -> Result<Vec<NormName>> {
    s.split(',').filter(|t| !t.trim().is_empty()).map(NormName::from_str).collect()
}

fn parse_num<T: FromStr>(key: &str, v: &str) -> Result<T> {
    v.trim().parse().map_err(|_| Error::Config(format!("invalid value `{v}` for `{key}`")))
}

impl StudyConfig {
    /// Sets one field from its textual key and value.
    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        match key.trim() {
            "problem" => self.problem = value.trim().to_string(),
            "levels" => self.levels = parse_levels(value)?,
            "norms" => self.norms = parse_norms(value)?,
            "format" => self.format = value.parse()?,
            "out" => self.out = Some(PathBuf::from(value.trim())),
            "bc" => self.build.bc = value.trim().parse::<BcOption>()?,
            "lambda" => self.build.lambda = parse_num(key, value)?,
            "alpha" => self.build.alpha = parse_num(key, value)?,
            "rtol" => self.solver.linear_rtol = parse_num(key, value)?,
            "quad_rtol" => self.solver.quad_rtol = parse_num(key, value)?,
            "tol" => self.solver.tol = parse_num(key, value)?,
            "max_iter" => self.solver.max_iter = parse_num(key, value)?,
            "seed" => self.seed = parse_num(key, value)?,
            other => return Err(Error::Config(format!("unknown configuration key `{other}`"))),
        }
        Ok(())
    }

    /// Applies `key = value` lines; blank lines and `#` comments are ignored.
    pub fn apply_text(&mut self, text: &str) -> Result<()> {
        for (n, line) in text.lines().enumerate() {
            let line = line.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (k, v) = line
                .split_once('=')
                .ok_or_else(|| Error::Config(format!("line {}: expected key = value", n + 1)))?;
            self.set(k, v)?;
        }
        Ok(())
    }

    pub fn from_file(path: &Path) -> Result<Self> {
        let mut cfg = StudyConfig::default();
        cfg.apply_text(&fs::read_to_string(path)?)?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        if !PROBLEM_NAMES.contains(&self.problem.as_str()) {
            return Err(Error::Config(format!("unknown problem `{}`; known: {}", self.problem, PROBLEM_NAMES.join(", "))));
        }
        if self.levels.is_empty() || self.levels.windows(2).any(|w| w[0] >= w[1]) {
            return Err(Error::Config("levels must be nonempty and strictly increasing".into()));
        }
        if self.norms.is_empty() {
            return Err(Error::Config("at least one norm is required".into()));
        }
        let point_source = self.problem == "point-source-2d";
        for n in &self.norms {
            let ok = match n {
                NormName::ControlL2 | NormName::ControlWeightedL2 => !point_source,
                NormName::ControlL2Vec => point_source,
                NormName::StateLinf | NormName::StateL2 => true,
            };
            if !ok {
                return Err(Error::Config(format!("norm {n} does not apply to {}", self.problem)));
            }
        }
        Ok(())
    }
}

/// One mesh level of a convergence table.
#[derive(Clone, Debug, PartialEq)]
pub struct TableRow {
    pub level: usize,
    /// Interior vertices (state unknowns).
    pub dofs: usize,
    pub control_dofs: usize,
    pub h: f64,
    pub errors: Vec<f64>,
    /// `None` on the first row and wherever an error vanishes.
    pub eocs: Vec<Option<f64>>,
    pub pdas_iterations: usize,
}

/// Descriptive data attached to a table.
#[derive(Clone, Debug, PartialEq)]
pub struct TableMetadata {
    pub problem: String,
    pub date: String,
    pub bc: BcOption,
    pub lambda: f64,
    pub alpha: f64,
    pub solver: SolverOptions,
}

/// Errors and experimental orders of convergence per level.
#[derive(Clone, Debug, PartialEq)]
pub struct ConvergenceTable {
    pub norms: Vec<NormName>,
    pub rows: Vec<TableRow>,
    pub metadata: TableMetadata,
}

/// Predicted rate of a norm for a problem, for display.
pub fn theory_rate(problem: &str, norm: NormName) -> Option<&'static str> {
    match (problem, norm) {
        ("point-obs-2d-1" | "point-obs-2d-4", NormName::ControlL2) => Some("N^(-1/2) log N"),
        ("point-obs-3d", NormName::ControlL2) => Some("N^(-1/6) log^2 N"),
        ("point-obs-2d-1" | "point-obs-2d-4", NormName::StateLinf) => Some("N^(-1) log^2 N"),
        ("point-obs-3d", NormName::StateLinf) => Some("N^(-1/3) log N"),
        ("point-source-2d", NormName::ControlL2Vec) => Some("N^(-1+eps)"),
        ("weighted-elliptic", NormName::ControlWeightedL2 | NormName::ControlL2) => Some("h^1"),
        _ => None,
    }
}

impl ConvergenceTable {
    pub fn new(norms: Vec<NormName>, metadata: TableMetadata) -> Self {
        ConvergenceTable { norms, rows: Vec::new(), metadata }
    }

    /// Appends a row and fills its EOC entries from the previous row.
    pub fn push(&mut self, mut row: TableRow) {
        row.eocs = match self.rows.last() {
            None => vec![None; row.errors.len()],
            Some(prev) => row
                .errors
                .iter()
                .zip(&prev.errors)
                .map(|(&e, &ep)| eoc(&[ep, e], &[prev.dofs, row.dofs]).ok().map(|v| v[0]))
                .collect(),
        };
        self.rows.push(row);
    }

    /// Error column of one norm.
    pub fn column(&self, norm: NormName) -> Option<Vec<f64>> {
        let k = self.norms.iter().position(|&n| n == norm)?;
        Some(self.rows.iter().map(|r| r.errors[k]).collect())
    }

    /// EOC column of one norm (first entry always `None`).
    pub fn eoc_column(&self, norm: NormName) -> Option<Vec<Option<f64>>> {
        let k = self.norms.iter().position(|&n| n == norm)?;
        Some(self.rows.iter().map(|r| r.eocs[k]).collect())
    }

    fn header_lines(&self) -> Vec<String> {
        let m = &self.metadata;
        let mut lines = vec![
            format!("problem: {}", m.problem),
            format!("date: {}", m.date),
            format!(
                "bc: {}, lambda: {}, alpha: {}, linear rtol: {:e}, control tol: {:e}",
                m.bc, m.lambda, m.alpha, m.solver.linear_rtol, m.solver.tol
            ),
        ];
        for n in &self.norms {
            if let Some(rate) = theory_rate(&m.problem, *n) {
                lines.push(format!("theory {n}: {rate}"));
            }
        }
        lines
    }

    /// CSV with `#` metadata lines, a header row, and 17 significant digits.
    pub fn to_csv(&self) -> String {
        let mut s = String::new();
        for l in self.header_lines() {
            let _ = writeln!(s, "# {l}");
        }
        let mut head = vec!["level".to_string(), "dofs".into(), "control_dofs".into(), "h".into()];
        for n in &self.norms {
            head.push(n.to_string());
            head.push(format!("eoc_{n}"));
        }
        head.push("pdas_iterations".into());
        let _ = writeln!(s, "{}", head.join(","));
        for r in &self.rows {
            let mut cells = vec![r.level.to_string(), r.dofs.to_string(), r.control_dofs.to_string(), format!("{:.16e}", r.h)];
            for (e, o) in r.errors.iter().zip(&r.eocs) {
                cells.push(format!("{:.16e}", e));
                cells.push(o.map(|v| format!("{:.16e}", v)).unwrap_or_default());
            }
            cells.push(r.pdas_iterations.to_string());
            let _ = writeln!(s, "{}", cells.join(","));
        }
        s
    }

    /// Pipe table with 7 significant digits, preceded by metadata lines.
    pub fn to_markdown(&self) -> String {
        let mut s = String::new();
        for l in self.header_lines() {
            let _ = writeln!(s, "- {l}");
        }
        s.push('\n');
        let mut head = vec!["level".to_string(), "N".into(), "h".into()];
        for n in &self.norms {
            head.push(format!("`{n}`"));
            head.push("EOC".into());
        }
        let _ = writeln!(s, "| {} |", head.join(" | "));
        let _ = writeln!(s, "|{}", "---|".repeat(head.len()));
        for r in &self.rows {
            let mut cells = vec![r.level.to_string(), r.dofs.to_string(), format!("{:.6e}", r.h)];
            for (e, o) in r.errors.iter().zip(&r.eocs) {
                cells.push(format!("{:.6e}", e));
                cells.push(o.map(|v| format!("{:.6e}", v)).unwrap_or_else(|| "–".into()));
            }
            let _ = writeln!(s, "| {} |", cells.join(" | "));
        }
        s
    }

    pub fn render(&self, format: OutputFormat) -> String {
        match format {
            OutputFormat::Csv => self.to_csv(),
            OutputFormat::Markdown => self.to_markdown(),
        }
    }
}

/// Errors of one solved level in the requested norms.
pub fn measure_errors(setup: &ProblemSetup, inst: &ProblemInstance, result: &PdasResult, norms: &[NormName]) -> Result<Vec<f64>> {
    let exact = &setup.exact;
    let mesh = inst.mesh();
    let quad_rtol = inst.options().quad_rtol;
    norms
        .iter()
        .map(|n| match (n, &result.control, &exact.control) {
            (NormName::ControlL2, ControlVector::Cells(u), ExactControl::Field(f)) => {
                error_norm(u, |x| f(x), &NormKind::L2, &QuadPolicy::Fixed)
            }
            (NormName::ControlWeightedL2, ControlVector::Cells(u), ExactControl::Field(f)) => {
                let w = exact.control_weight.clone().unwrap_or_else(|| Weight::unit(mesh.dim()));
                let policy = QuadPolicy::near_singularities(&w, quad_rtol);
                error_norm(u, |x| f(x), &NormKind::WeightedL2(w), &policy)
            }
            (NormName::ControlL2Vec, ControlVector::Points(u), ExactControl::Vector(v)) => {
                Ok(u.iter().zip(v).map(|(a, b)| (a - b) * (a - b)).sum::<f64>().sqrt())
            }
            (NormName::StateLinf, _, _) => {
                let kind = if exact.state_singular_points.is_empty() {
                    NormKind::Linf
                } else {
                    NormKind::LinfExcluding { points: exact.state_singular_points.clone(), radius: 2.0 * mesh.h() }
                };
                error_norm(&result.state, |x| (exact.state)(x), &kind, &QuadPolicy::Fixed)
            }
            (NormName::StateL2, _, _) => {
                let policy = QuadPolicy::Hybrid { points: exact.state_singular_points.clone(), rtol: quad_rtol };
                error_norm(&result.state, |x| (exact.state)(x), &NormKind::L2, &policy)
            }
            _ => Err(Error::Config(format!("norm {n} does not apply to {}", setup.name))),
        })
        .collect()
}

/// Solves one level and returns its table row (without EOC entries).
pub fn solve_level(setup: &ProblemSetup, level: usize, solver: SolverOptions, norms: &[NormName]) -> Result<TableRow> {
    let mesh = Arc::new(Mesh::unit(setup.dim, level)?);
    let inst = setup.problem.instantiate(Arc::clone(&mesh), solver)?;
    let result = inst.pdas_solve()?;
    let errors = measure_errors(setup, &inst, &result, norms)?;
    Ok(TableRow {
        level,
        dofs: mesh.num_interior_vertices(),
        control_dofs: inst.num_controls(),
        h: mesh.h(),
        errors,
        eocs: Vec::new(),
        pdas_iterations: result.iterations,
    })
}

/// Runs the configured study; a failing level aborts with the rows so far.
pub fn run_study(cfg: &StudyConfig) -> Result<ConvergenceTable> {
    cfg.validate()?;
    let setup = build(&cfg.problem, &cfg.build)?;
    let metadata = TableMetadata {
        problem: cfg.problem.clone(),
        date: chrono::Local::now().format("%Y-%m-%d").to_string(),
        bc: cfg.build.bc,
        lambda: cfg.build.lambda,
        alpha: cfg.build.alpha,
        solver: cfg.solver,
    };
    let mut table = ConvergenceTable::new(cfg.norms.clone(), metadata);
    for &level in &cfg.levels {
        match solve_level(&setup, level, cfg.solver, &cfg.norms) {
            Ok(row) => table.push(row),
            Err(e) => return Err(Error::StudyAborted { level, partial: Box::new(table), source: Box::new(e) }),
        }
    }
    if let Some(path) = &cfg.out {
        fs::write(path, table.render(cfg.format))?;
    }
    Ok(table)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn eoc_examples() {
        let v = eoc(&[0.0456202, 0.0259039], &[42, 146]).unwrap();
        assert!((v[0] - -0.454242118833).abs() < 1e-9);
        let v = eoc(&[0.0536485, 0.0207101], &[86, 294]).unwrap();
        assert!((v[0] - -0.7743303).abs() < 1e-6);
        let v = eoc(&[1.0, 0.5], &[10, 40]).unwrap();
        assert_eq!(v[0], -0.5);
        assert!(matches!(eoc(&[1.0, 0.0], &[1, 2]), Err(Error::Domain(_))));
        assert!(matches!(eoc(&[1.0], &[1]), Err(Error::Domain(_))));
        let v = eoc_in_h(&[1.0, 0.5, 0.25], &[0.1, 0.05, 0.025]).unwrap();
        assert!(v.iter().all(|&r| (r - 1.0).abs() < 1e-14));
    }

    #[test]
    fn mesh_factors() {
        assert!((sigma_factor(0.1, 2).unwrap() - 0.2302585093).abs() < 1e-10);
        let e = (-1f64).exp();
        assert!((sigma_factor(e, 2).unwrap() - e).abs() < 1e-15);
        assert!((sigma_factor(0.01, 3).unwrap() - 0.4605170186).abs() < 1e-10);
        assert!((inverse_factor(e, 2).unwrap() - 2f64.sqrt()).abs() < 1e-15);
        assert!((inverse_factor(0.25, 3).unwrap() - 2.0).abs() < 1e-15);
        assert!((inverse_factor(0.1, 2).unwrap() - 1.8173015966).abs() < 1e-10);
        assert!(matches!(sigma_factor(1.0, 2), Err(Error::Domain(_))));
        assert!(matches!(inverse_factor(1.5, 3), Err(Error::Domain(_))));
    }

    #[test]
    fn config_parsing() {
        assert_eq!(parse_levels("2..5").unwrap(), vec![2, 3, 4, 5]);
        assert_eq!(parse_levels("1,3,4").unwrap(), vec![1, 3, 4]);
        assert!(parse_levels("5..2").is_err());
        let mut cfg = StudyConfig::default();
        cfg.apply_text("# comment\nproblem = point-source-2d\nlevels = 2..3\nnorms = control_l2vec\nbc = zero\nlambda = 2\n").unwrap();
        assert_eq!(cfg.problem, "point-source-2d");
        assert_eq!(cfg.levels, vec![2, 3]);
        assert_eq!(cfg.build.bc, BcOption::Zero);
        assert_eq!(cfg.build.lambda, 2.0);
        cfg.validate().unwrap();
        cfg.norms = vec![NormName::ControlL2];
        assert!(matches!(cfg.validate(), Err(Error::Config(_))));
        assert!(cfg.apply_text("colour = blue").is_err());
    }

    #[test]
    fn single_level_table_has_no_eoc() {
        let cfg = StudyConfig { levels: vec![2], ..Default::default() };
        let t = run_study(&cfg).unwrap();
        assert_eq!(t.rows.len(), 1);
        assert!(t.rows[0].eocs.iter().all(Option::is_none));
        let csv = t.to_csv();
        assert!(csv.lines().any(|l| l.starts_with("level,dofs")));
        assert!(t.to_markdown().contains("| level |"));
    }
}
