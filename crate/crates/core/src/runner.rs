//! Config-driven commands behind the `hjhomog` binary.
//!
//! Every command writes its artifacts through one [`ArtifactWriter`] and
//! finishes with `manifest.json`, which lists each artifact with its SHA-256.
//! Artifacts depend only on the config (and seed override), never on the
//! worker count; timings live in the manifest alone.

use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicUsize, Ordering};
use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::action::{read_action_table, table_cache_key, write_action_table, ActionEngine, ActionTable};
use crate::config::{DatumBlock, ExperimentConfig, MediumKindSpec};
use crate::effective::{
    double_conjugate_check, effective_hamiltonian, effective_lagrangian_table_with, envelope_check,
    homogeneity_check, midpoint_defect, target_box, DirectionGrid, EffectiveTable,
};
use crate::error::{Error, Result};
use crate::hash;
use crate::media::{audit_assumptions, sample_environment, Medium};
use crate::solver::{
    audit_value_regularity, convergence_error, solve_homogenized, solve_rescaled, ConvergenceReport, HopfLaxPlan,
    RegularityReport, SolvePlan, ValueField,
};
use crate::stablenorm::{audit_metric_family, norm_audit, periodic_norm_table, stationary_stable_norm, MetricFamily};

/// Environment variable naming the cache root when `--cache` is absent.
pub const CACHE_ENV: &str = "HJHOMG_CACHE_DIR";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Command {
    Audit,
    Effective,
    Converge,
    StableNorm,
}

#[derive(Debug, Clone, Default)]
pub struct RunOptions {
    pub out: Option<PathBuf>,
    pub cache: Option<PathBuf>,
    pub workers: Option<usize>,
    pub strict: bool,
    pub seed_override: Option<u64>,
    /// Also write every rescaled solution as CSV.
    pub export_fields: bool,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ArtifactEntry {
    pub path: String,
    pub sha256: String,
    pub bytes: usize,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct AuditEntry {
    pub name: String,
    pub passed: bool,
    pub detail: String,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Timing {
    pub stage: String,
    pub seconds: f64,
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
pub struct CacheSummary {
    pub dir: Option<String>,
    pub hits: usize,
    pub misses: usize,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RunManifest {
    pub tool: String,
    pub version: String,
    pub command: Command,
    pub config_hash: String,
    pub seed_override: Option<u64>,
    pub workers: usize,
    pub strict: bool,
    pub artifacts: Vec<ArtifactEntry>,
    pub timings: Vec<Timing>,
    pub cache: CacheSummary,
    pub audits: Vec<AuditEntry>,
    pub warnings: Vec<String>,
    pub passed: bool,
}

/// Result of a run: exit status 0 when `passed`, 1 otherwise.
#[derive(Debug, Clone)]
pub struct RunOutcome {
    pub manifest: RunManifest,
    pub out_dir: PathBuf,
}

impl RunOutcome {
    pub fn exit_code(&self) -> i32 {
        if self.manifest.passed {
            0
        } else {
            1
        }
    }
}

/// Collects artifacts in write order; the single writer of a run.
pub struct ArtifactWriter {
    dir: PathBuf,
    entries: Vec<ArtifactEntry>,
}

impl ArtifactWriter {
    pub fn new(dir: &Path) -> Result<Self> {
        std::fs::create_dir_all(dir)?;
        Ok(Self {
            dir: dir.to_path_buf(),
            entries: Vec::new(),
        })
    }

    pub fn write(&mut self, name: &str, bytes: &[u8]) -> Result<()> {
        std::fs::write(self.dir.join(name), bytes)?;
        self.entries.push(ArtifactEntry {
            path: name.to_string(),
            sha256: hash::sha256_hex(bytes),
            bytes: bytes.len(),
        });
        Ok(())
    }

    pub fn json<T: Serialize>(&mut self, name: &str, value: &T) -> Result<()> {
        let mut s = serde_json::to_string_pretty(value)?;
        s.push('\n');
        self.write(name, s.as_bytes())
    }
}

struct Run<'c> {
    cfg: &'c ExperimentConfig,
    opts: &'c RunOptions,
    writer: ArtifactWriter,
    timings: Vec<Timing>,
    audits: Vec<AuditEntry>,
    warnings: Vec<String>,
    cache_dir: Option<PathBuf>,
    hits: AtomicUsize,
    misses: AtomicUsize,
    clock: Instant,
}

impl<'c> Run<'c> {
    fn lap(&mut self, stage: &str) {
        let now = Instant::now();
        self.timings.push(Timing {
            stage: stage.to_string(),
            seconds: (now - self.clock).as_secs_f64(),
        });
        self.clock = now;
    }

    fn audit(&mut self, name: &str, passed: bool, detail: String) {
        self.audits.push(AuditEntry {
            name: name.to_string(),
            passed,
            detail,
        });
    }

    fn seeds(&self, seeds: &[u64]) -> Vec<u64> {
        match self.opts.seed_override {
            Some(k) => vec![k],
            None => seeds.to_vec(),
        }
    }

    fn cache_path(&self, key: &str) -> Option<PathBuf> {
        self.cache_dir
            .as_ref()
            .map(|d| d.join("actions").join(&key[..2]).join(format!("{key}.hjact")))
    }

    /// Action tables for the effective estimates, cropped to the targets of
    /// `grid` and read from / written to the cache.
    fn tables(
        &self,
        grid: &DirectionGrid,
        engine: &ActionEngine,
        source: [i64; 2],
        horizons: &[usize],
    ) -> Result<Vec<ActionTable>> {
        let lat = engine.lattice();
        let spu = lat.steps_per_unit as usize;
        let domain = crate::action::IndexBox::cube(lat.dim, lat.half_cells());
        let crops: Vec<_> = horizons
            .iter()
            .map(|h| target_box(lat, source, grid, (h / spu) as u32).intersect(&domain))
            .collect();
        let keys: Vec<String> = horizons
            .iter()
            .zip(&crops)
            .map(|(h, c)| {
                let base = table_cache_key(engine.medium(), engine.omega(), lat, source, *h);
                hash::content_hash(&(base, c.lo, c.hi))
            })
            .collect();
        let paths: Vec<Option<PathBuf>> = keys.iter().map(|k| self.cache_path(k)).collect();
        if paths.iter().all(|p| p.as_ref().is_some_and(|p| p.exists())) {
            let read: Result<Vec<ActionTable>> = paths
                .iter()
                .map(|p| read_action_table(p.as_ref().expect("checked"), engine))
                .collect();
            if let Ok(tables) = read {
                self.hits.fetch_add(tables.len(), Ordering::Relaxed);
                return Ok(tables);
            }
        }
        let tables: Vec<ActionTable> = engine
            .action_tables(source, horizons)?
            .into_iter()
            .zip(&crops)
            .map(|(t, c)| t.cropped(*c))
            .collect();
        self.misses.fetch_add(tables.len(), Ordering::Relaxed);
        for (t, p) in tables.iter().zip(&paths) {
            if let Some(p) = p {
                write_action_table(p, engine.medium(), t)?;
            }
        }
        Ok(tables)
    }

    fn effective_table(&self, medium: &Medium) -> Result<EffectiveTable> {
        let cfg = self.cfg;
        let grid = cfg.grids()?.directions(cfg.dim())?;
        let sched = cfg.schedule()?;
        let seeds = self.seeds(&sched.seeds);
        let provider = |e: &ActionEngine, s: [i64; 2], h: &[usize]| self.tables(&grid, e, s, h);
        effective_lagrangian_table_with(
            medium,
            &grid,
            &seeds,
            &sched.horizons,
            &cfg.lattice()?,
            &cfg.estimate_options()?,
            &provider,
        )
    }

    fn finish(mut self, command: Command, workers: usize) -> Result<RunOutcome> {
        let strict_fail = self.opts.strict && !self.warnings.is_empty();
        let passed = self.audits.iter().all(|a| a.passed) && !strict_fail;
        let manifest = RunManifest {
            tool: "hjhomog".into(),
            version: env!("CARGO_PKG_VERSION").into(),
            command,
            config_hash: self.cfg.hash(),
            seed_override: self.opts.seed_override,
            workers,
            strict: self.opts.strict,
            artifacts: std::mem::take(&mut self.writer.entries),
            timings: self.timings,
            cache: CacheSummary {
                dir: self.cache_dir.as_ref().map(|d| d.display().to_string()),
                hits: self.hits.load(Ordering::Relaxed),
                misses: self.misses.load(Ordering::Relaxed),
            },
            audits: self.audits,
            warnings: self.warnings,
            passed,
        };
        let mut s = serde_json::to_string_pretty(&manifest)?;
        s.push('\n');
        std::fs::write(self.writer.dir.join("manifest.json"), s)?;
        Ok(RunOutcome {
            manifest,
            out_dir: self.writer.dir,
        })
    }
}

fn resolve_cache(opts: &RunOptions, cfg: &ExperimentConfig) -> Option<PathBuf> {
    opts.cache
        .clone()
        .or_else(|| cfg.cache.clone())
        .or_else(|| std::env::var_os(CACHE_ENV).map(PathBuf::from))
}

/// Runs `command` on a dedicated pool of `opts.workers` threads (default:
/// all cores).
pub fn run(command: Command, cfg: &ExperimentConfig, opts: &RunOptions) -> Result<RunOutcome> {
    let workers = opts.workers.unwrap_or_else(rayon::current_num_threads).max(1);
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(workers)
        .build()
        .map_err(|e| Error::Config(format!("worker pool: {e}")))?;
    let out = opts
        .out
        .clone()
        .or_else(|| cfg.output.clone())
        .unwrap_or_else(|| PathBuf::from("out"));
    pool.install(|| {
        let mut run = Run {
            cfg,
            opts,
            writer: ArtifactWriter::new(&out)?,
            timings: Vec::new(),
            audits: Vec::new(),
            warnings: Vec::new(),
            cache_dir: resolve_cache(opts, cfg),
            hits: AtomicUsize::new(0),
            misses: AtomicUsize::new(0),
            clock: Instant::now(),
        };
        match command {
            Command::Audit => cmd_audit(&mut run)?,
            Command::Effective => cmd_effective(&mut run)?,
            Command::Converge => cmd_converge(&mut run)?,
            Command::StableNorm => cmd_stable_norm(&mut run)?,
        }
        run.finish(command, workers)
    })
}

#[derive(Serialize)]
struct DatumAuditRow {
    datum: String,
    audit: crate::solver::DatumAudit,
}

#[derive(Serialize)]
struct AuditDocument {
    medium_id: Option<String>,
    rejection: Option<String>,
    assumptions: Option<crate::media::AuditReport>,
    metric: Option<crate::stablenorm::MetricAudit>,
    data: Vec<DatumAuditRow>,
    passed: bool,
}

fn cmd_audit(run: &mut Run) -> Result<()> {
    let cfg = run.cfg;
    let mut doc = AuditDocument {
        medium_id: None,
        rejection: None,
        assumptions: None,
        metric: None,
        data: Vec::new(),
        passed: true,
    };
    match cfg.medium.build() {
        Err(e @ Error::Config(_)) => return Err(e),
        Err(e) => {
            run.audit("medium", false, e.to_string());
            doc.rejection = Some(e.to_string());
            doc.passed = false;
        }
        Ok(medium) => {
            let acfg = cfg.audit.clone().unwrap_or_default();
            let report = audit_assumptions(&medium, &acfg);
            for c in &report.checks {
                run.audit(&c.name, c.passed, format!("{} = {:e}", c.detail, c.value));
            }
            doc.passed &= report.all_passed;
            if cfg.medium.kind == MediumKindSpec::Metric {
                let audit = audit_metric_family(&cfg.medium.metric_family()?, acfg.samples, acfg.seed);
                run.audit("metric", audit.all_passed, format!("{:?}", audit.checks));
                doc.passed &= audit.all_passed;
                doc.metric = Some(audit);
            }
            if let Some(c) = &cfg.converge {
                let eps = cfg
                    .schedule
                    .as_ref()
                    .and_then(|s| s.epsilons.clone())
                    .unwrap_or_else(|| vec![0.2, 0.1, 0.05]);
                for d in &c.data {
                    let a = d.datum()?.audit(cfg.dim(), &eps, acfg.samples, acfg.seed);
                    run.audit(
                        &format!("datum {}", d.label()),
                        a.passed,
                        format!("max excess {:e}", a.max_excess),
                    );
                    doc.passed &= a.passed;
                    doc.data.push(DatumAuditRow {
                        datum: d.label(),
                        audit: a,
                    });
                }
            }
            doc.medium_id = Some(medium.id().to_string());
            doc.assumptions = Some(report);
        }
    }
    run.lap("audit");
    run.writer.json("audit.json", &doc)
}

#[derive(Serialize)]
struct EffectiveSidecar<'a> {
    medium_id: &'a str,
    medium: &'a crate::config::MediumBlock,
    seeds: &'a [u64],
    schedule: &'a [u32],
    lattice: &'a crate::action::Lattice,
    grids: &'a crate::config::GridsBlock,
    tolerances: &'a crate::config::TolerancesBlock,
    unconverged: Vec<Vec<f64>>,
    envelope: crate::effective::SandwichReport,
    double_conjugate: crate::effective::DoubleConjugateReport,
    midpoint_defect: f64,
    max_raw_minus_convexified: f64,
}

fn effective_audits(run: &mut Run, table: &EffectiveTable) -> Result<()> {
    let env = envelope_check(table, run.cfg.tolerances.envelope_slack);
    run.audit(
        "envelope sandwich",
        env.passed,
        format!(
            "lower {:e}, upper {:e}, slack {}",
            env.max_lower_violation, env.max_upper_violation, env.slack
        ),
    );
    let dc = double_conjugate_check(table)?;
    run.audit(
        "double conjugate",
        dc.passed,
        format!("max error {:e}, worst error/bound {:.3}", dc.max_error, dc.worst_ratio),
    );
    let mid = midpoint_defect(&table.grid, &table.convexified);
    run.audit("midpoint convexity", mid <= 1e-12, format!("defect {mid:e}"));
    for k in &table.unconverged {
        run.warnings.push(format!(
            "direction {:?} unconverged: spread {:e}",
            table.grid.point(*k),
            table.schedule_spread[*k]
        ));
    }
    let gap = table
        .raw
        .iter()
        .zip(&table.convexified)
        .map(|(r, c)| r - c)
        .fold(0.0, f64::max);
    let cfg = run.cfg;
    let sidecar = EffectiveSidecar {
        medium_id: &table.medium_id,
        medium: &cfg.medium,
        seeds: &table.seeds,
        schedule: &table.schedule,
        lattice: &table.lattice,
        grids: cfg.grids()?,
        tolerances: &cfg.tolerances,
        unconverged: table.unconverged.iter().map(|k| table.grid.point(*k)).collect(),
        envelope: env,
        double_conjugate: dc,
        midpoint_defect: mid,
        max_raw_minus_convexified: gap,
    };
    run.writer.write("effective.csv", table.to_csv().as_bytes())?;
    run.writer.write("hbar.csv", table.hbar_csv().as_bytes())?;
    run.writer.json("effective.json", &sidecar)
}

fn cmd_effective(run: &mut Run) -> Result<()> {
    let cfg = run.cfg;
    let medium = cfg.medium.build()?;
    let table = run.effective_table(&medium)?;
    run.lap("effective lagrangian");
    let table = effective_hamiltonian(&table, &cfg.grids()?.momenta(cfg.dim())?)?;
    run.lap("effective hamiltonian");
    effective_audits(run, &table)
}

#[derive(Serialize)]
struct ConvergenceRow {
    datum: String,
    seed: u64,
    epsilons: Vec<f64>,
    sup_errors: Vec<f64>,
    datum_errors: Vec<Option<f64>>,
    ratio: f64,
    passed: bool,
    regularity: RegularityReport,
    reports: Vec<ConvergenceReport>,
}

#[derive(Serialize)]
struct ConvergenceDocument {
    medium_id: String,
    k_id: &'static str,
    k: crate::solver::KSet,
    convergence_ratio: f64,
    rows: Vec<ConvergenceRow>,
    homogenized_radii: Vec<Vec<crate::solver::MinimizerCheck>>,
    passed: bool,
}

fn cmd_converge(run: &mut Run) -> Result<()> {
    let cfg = run.cfg;
    let eps = cfg.epsilons()?.to_vec();
    let conv = cfg.converge()?;
    let medium = cfg.medium.build()?;
    let table = run.effective_table(&medium)?;
    run.lap("effective lagrangian");
    let table = effective_hamiltonian(&table, &cfg.grids()?.momenta(cfg.dim())?)?;
    effective_audits(run, &table)?;

    let k = conv.k_set();
    let mut times = vec![0.0];
    times.extend(k.times());
    let mut solve_lattice = cfg.lattice()?;
    if let Some(a) = conv.solve_speed_cap {
        solve_lattice.speed_cap = a;
    }
    let bases = if conv.bases.is_empty() {
        vec![vec![0.0; cfg.dim()]]
    } else {
        conv.bases.clone()
    };
    let seeds = run.seeds(conv.seeds.as_deref().unwrap_or(&cfg.schedule()?.seeds));
    let data: Vec<(&DatumBlock, _)> = conv
        .data
        .iter()
        .map(|d| d.datum().map(|x| (d, x)))
        .collect::<Result<_>>()?;

    let homogenized: Vec<ValueField> = data
        .par_iter()
        .map(|(_, d)| {
            solve_homogenized(
                &table,
                d,
                &HopfLaxPlan {
                    times: times.clone(),
                    extent: k.reach(),
                    step: k.h_step,
                    search_step: conv.search_step,
                },
            )
        })
        .collect::<Result<_>>()?;
    run.lap("homogenized solves");

    let mut tasks: Vec<(usize, u64, f64)> = Vec::new();
    for i in 0..data.len() {
        for s in &seeds {
            for e in &eps {
                tasks.push((i, *s, *e));
            }
        }
    }
    let fields: Vec<ValueField> = tasks
        .par_iter()
        .map(|&(i, seed, e)| {
            let w = sample_environment(&medium, seed);
            let plan = SolvePlan {
                epsilon: e,
                times: times.clone(),
                reach: k.reach() + bases.iter().flatten().map(|b| b.abs()).fold(0.0, f64::max),
            };
            solve_rescaled(&medium, &w, &data[i].1, &plan, &solve_lattice)
        })
        .collect::<Result<_>>()?;
    run.lap("rescaled solves");

    let ratio_bar = cfg.tolerances.convergence_ratio;
    let mut rows = Vec::new();
    let mut csv = String::from("epsilon,sup_error,k_id,seed,datum\n");
    let per = eps.len();
    for (chunk, fs) in tasks.chunks(per).zip(fields.chunks(per)) {
        let (i, seed, _) = chunk[0];
        let (block, datum) = &data[i];
        let reports: Vec<ConvergenceReport> = fs
            .iter()
            .map(|u| convergence_error(u, &homogenized[i], &k, &bases))
            .collect::<Result<_>>()?;
        let errs: Vec<f64> = reports.iter().map(|r| r.sup_error).collect();
        for (e, r) in eps.iter().zip(&errs) {
            csv.push_str(&format!("{e},{r},K0,{seed},{}\n", block.label()));
        }
        let first = errs[0];
        let last = *errs.last().expect("nonempty");
        let ratio = if first > 0.0 { last / first } else { f64::INFINITY };
        let finite = errs.iter().all(|e| e.is_finite() && *e > 0.0);
        let passed = finite && (per < 2 || ratio <= ratio_bar);
        let regularity = if per >= 2 {
            audit_value_regularity(fs, datum, k.t0, cfg.tolerances.regularity)?
        } else {
            RegularityReport {
                t0: k.t0,
                entries: Vec::new(),
                spread: 0.0,
                tolerance: cfg.tolerances.regularity,
                uniform: true,
            }
        };
        let label = format!("{} seed {seed}", block.label());
        run.audit(
            &format!("convergence {label}"),
            passed,
            format!("errors {errs:?}, ratio {ratio:.4} (bar {ratio_bar})"),
        );
        if !regularity.uniform {
            run.warnings.push(format!(
                "{label}: Lipschitz spread {:.4} across eps exceeds {}",
                regularity.spread, regularity.tolerance
            ));
        }
        if run.opts.export_fields {
            for (u, e) in fs.iter().zip(&eps) {
                run.writer
                    .write(&format!("u_{}_seed{seed}_eps{e}.csv", block.label()), u.to_csv().as_bytes())?;
            }
        }
        rows.push(ConvergenceRow {
            datum: block.label(),
            seed,
            epsilons: eps.clone(),
            sup_errors: errs,
            datum_errors: reports.iter().map(|r| r.datum_error).collect(),
            ratio,
            passed,
            regularity,
            reports,
        });
    }
    for ((block, _), v) in data.iter().zip(&homogenized) {
        run.writer
            .write(&format!("v_{}.csv", block.label()), v.to_csv().as_bytes())?;
    }
    run.writer.write("convergence.csv", csv.as_bytes())?;
    let doc = ConvergenceDocument {
        medium_id: medium.id().to_string(),
        k_id: "K0",
        k,
        convergence_ratio: ratio_bar,
        passed: rows.iter().all(|r| r.passed),
        rows,
        homogenized_radii: homogenized.iter().map(|v| v.minimizers.clone()).collect(),
    };
    run.lap("reports");
    run.writer.json("convergence.json", &doc)
}

#[derive(Serialize)]
struct StableNormDocument {
    medium_id: String,
    family: MetricFamily,
    ergodic: crate::stablenorm::NormAuditReport,
    periodic: Option<crate::stablenorm::NormAuditReport>,
    /// Largest relative disagreement between the two methods.
    agreement: Option<f64>,
    homogeneity: crate::effective::HomogeneityReport,
    /// Largest `| ||h|| - |h| | / |h|` for the flat family.
    euclidean_defect: Option<f64>,
}

fn cmd_stable_norm(run: &mut Run) -> Result<()> {
    let cfg = run.cfg;
    if cfg.medium.kind != MediumKindSpec::Metric {
        return Err(Error::Config("stable-norm needs medium.kind = \"metric\"".into()));
    }
    let sn = cfg
        .stable_norm
        .as_ref()
        .ok_or_else(|| Error::Config("missing [stable_norm] block".into()))?;
    let family = cfg.medium.metric_family()?;
    let medium = cfg.medium.build()?;
    let table = run.effective_table(&medium)?;
    run.lap("effective lagrangian");
    let tol = cfg.tolerances.norm;
    let ergodic = stationary_stable_norm(&table)?;
    let erg_audit = norm_audit(&ergodic, &sn.lambdas, tol);
    run.audit(
        "norm axioms (ergodic)",
        erg_audit.passed,
        format!(
            "positivity {:e}, homogeneity {:e}, triangle {:e}",
            erg_audit.positivity, erg_audit.homogeneity, erg_audit.triangle
        ),
    );
    let homog = homogeneity_check(&table, &sn.lambdas)?;
    run.audit(
        "degree-2 homogeneity",
        homog.max_defect <= tol,
        format!("max defect {:e}", homog.max_defect),
    );
    let mut csv = ergodic.to_csv();
    let (periodic, agreement) = if family.alpha().is_none() {
        let graph = sn.graph.clone().unwrap_or_default();
        let per = periodic_norm_table(&medium, &table.grid, &sn.periodic_schedule, &graph)?;
        run.lap("periodic oracle");
        let mut worst = 0.0f64;
        for (h, v) in per.directions.iter().zip(&per.values) {
            if *v > 0.0 {
                if let Some(e) = ergodic.value_at(h) {
                    worst = worst.max((e - v).abs() / v);
                }
            }
        }
        run.audit("method agreement", worst <= tol, format!("max relative gap {worst:e}"));
        let a = norm_audit(&per, &sn.lambdas, tol);
        run.audit(
            "norm axioms (periodic oracle)",
            a.passed,
            format!(
                "positivity {:e}, homogeneity {:e}, triangle {:e}",
                a.positivity, a.homogeneity, a.triangle
            ),
        );
        csv.push_str(per.to_csv().split_once('\n').map_or("", |(_, rest)| rest));
        (Some(a), Some(worst))
    } else {
        (None, None)
    };
    let euclidean_defect = matches!(family, MetricFamily::Flat { .. }).then(|| {
        ergodic
            .directions
            .iter()
            .zip(&ergodic.values)
            .filter_map(|(h, v)| {
                let e = h.iter().map(|x| x * x).sum::<f64>().sqrt();
                (e > 0.0).then(|| (v - e).abs() / e)
            })
            .fold(0.0, f64::max)
    });
    if let Some(d) = euclidean_defect {
        run.audit("euclidean recovery", d <= tol, format!("max relative defect {d:e}"));
    }
    run.writer.write("stable_norm.csv", csv.as_bytes())?;
    let doc = StableNormDocument {
        medium_id: medium.id().to_string(),
        family,
        ergodic: erg_audit,
        periodic,
        agreement,
        homogeneity: homog,
        euclidean_defect,
    };
    run.writer.json("stable_norm.json", &doc)
}
