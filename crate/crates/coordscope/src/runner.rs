//! End-to-end orchestration: search, classify, plan, and emit deterministic
//! artifacts (report JSON plus plot-ready CSVs).

use std::fs;
use std::path::Path;
use std::time::Instant;

use serde::Serialize;
use sha2::{Digest, Sha256};

use crate::calculus::{
    fd_gradient, fd_hessian, relative_error_mat, relative_error_vec, worst_coordinate_vec,
    FdSettings,
};
use crate::classify::{classify, enumerate_sets, FamilyMode, SolutionAtlas, TimeSet};
use crate::config::RunConfig;
use crate::error::{Error, Result};
use crate::planner::{build_instance, solve, CoordinationInstance, CoordinationResult};
use crate::problem::{integrate_positions, JointPoint, TwoAgentProblem};
use crate::search::{derive_seed, search, SearchStats};

pub const TOOL_VERSION: &str = env!("CARGO_PKG_VERSION");

/// Wall-clock stage timings. The only report fields expected to differ
/// between reruns of the same config.
#[derive(Debug, Clone, Serialize, Default)]
pub struct Timings {
    pub search_ms: f64,
    pub classify_ms: f64,
    pub plan_ms: f64,
    pub total_ms: f64,
}

/// One reproduction-case assertion outcome.
#[derive(Debug, Clone, Serialize)]
pub struct CaseAssertion {
    pub name: String,
    pub passed: bool,
    /// Required assertions fail the reproduce command; informational ones
    /// only record what was observed.
    pub required: bool,
    pub detail: String,
}

#[derive(Debug, Clone, Serialize)]
pub struct RunReport {
    pub tool_version: String,
    pub config: RunConfig,
    /// SHA-256 of the config file bytes.
    pub config_digest: String,
    pub search_stats: SearchStats,
    pub atlas: SolutionAtlas,
    pub instance: CoordinationInstance,
    pub coordination: CoordinationResult,
    pub assertions: Vec<CaseAssertion>,
    pub timings_ms: Timings,
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    let digest = Sha256::digest(bytes);
    digest.iter().map(|b| format!("{b:02x}")).collect()
}

/// Executes search -> classify -> build_instance -> solve for one config.
pub fn run(cfg: &RunConfig, config_digest: String) -> Result<RunReport> {
    cfg.validate()?;
    let problem = cfg.build_problem()?;
    let horizon = cfg.effective_horizon()?;
    let total_start = Instant::now();

    let t = Instant::now();
    let search_out = search(&problem, &cfg.search).map_err(|e| e.in_stage("search"))?;
    let search_ms = t.elapsed().as_secs_f64() * 1e3;

    let t = Instant::now();
    let family = enumerate_sets(horizon, cfg.family.mode, cfg.family.include_empty)
        .map_err(|e| e.in_stage("classify"))?;
    let atlas = classify(&search_out.solutions, &problem, &family)
        .map_err(|e| e.in_stage("classify"))?;
    let classify_ms = t.elapsed().as_secs_f64() * 1e3;

    let t = Instant::now();
    let instance = build_instance(&atlas, &cfg.cost_rule()?, &cfg.nominal_rule()?)
        .map_err(|e| e.in_stage("plan"))?;
    let coordination =
        solve(&instance, cfg.planner.tolerance).map_err(|e| e.in_stage("plan"))?;
    let plan_ms = t.elapsed().as_secs_f64() * 1e3;

    Ok(RunReport {
        tool_version: TOOL_VERSION.to_string(),
        config: cfg.clone(),
        config_digest,
        search_stats: search_out.stats,
        atlas,
        instance,
        coordination,
        assertions: vec![],
        timings_ms: Timings {
            search_ms,
            classify_ms,
            plan_ms,
            total_ms: total_start.elapsed().as_secs_f64() * 1e3,
        },
    })
}

/// Writes report.json, solutions.csv, heatmap.csv (contiguous families), and
/// trajectories.csv (dynamic problems) into `out_dir`.
pub fn write_artifacts(report: &RunReport, out_dir: &Path) -> Result<()> {
    fs::create_dir_all(out_dir).map_err(|e| io_err(out_dir, e))?;

    let json = serde_json::to_string_pretty(report)
        .map_err(|e| Error::SolverFailure(format!("report serialization: {e}")))?;
    write_file(&out_dir.join("report.json"), &(json + "\n"))?;

    write_file(&out_dir.join("solutions.csv"), &solutions_csv(report))?;

    if report.config.family.mode == FamilyMode::Contiguous {
        write_file(&out_dir.join("heatmap.csv"), &heatmap_csv(report))?;
    }
    if report.config.problem.name == "dynamic_separation" {
        let problem = report.config.build_problem()?;
        write_file(
            &out_dir.join("trajectories.csv"),
            &trajectories_csv(report, &problem)?,
        )?;
    }
    Ok(())
}

fn write_file(path: &Path, contents: &str) -> Result<()> {
    fs::write(path, contents).map_err(|e| io_err(path, e))
}

fn io_err(path: &Path, source: std::io::Error) -> Error {
    Error::Io {
        path: path.display().to_string(),
        source,
    }
}

fn fmt_f64(v: f64) -> String {
    // Shortest round-trip decimal via the standard formatter.
    format!("{v}")
}

fn solutions_csv(report: &RunReport) -> String {
    let n = report
        .atlas
        .records
        .first()
        .map(|r| r.point.point.len())
        .unwrap_or(0);
    let mut out = String::from("id,cost,gradient_residual,maximal_sets");
    for i in 0..n {
        out.push_str(&format!(",z{i}"));
    }
    out.push('\n');
    for (id, rec) in report.atlas.records.iter().enumerate() {
        let sets = rec
            .maximal_sets
            .iter()
            .map(|s| s.label())
            .collect::<Vec<_>>()
            .join(";");
        out.push_str(&format!(
            "{id},{},{},{sets}",
            fmt_f64(rec.point.cost),
            fmt_f64(rec.point.gradient_residual)
        ));
        for v in &rec.point.point {
            out.push(',');
            out.push_str(&fmt_f64(*v));
        }
        out.push('\n');
    }
    out
}

fn heatmap_csv(report: &RunReport) -> String {
    let mut out = String::from("start,end,p\n");
    for (set, p) in report.instance.family.iter().zip(&report.coordination.p) {
        let (start, end) = match set {
            TimeSet::Interval { start, end } => (*start, *end),
            // The empty set (include_empty runs) is encoded as 0,0.
            TimeSet::Subset { indices } if indices.is_empty() => (0, 0),
            TimeSet::Subset { indices } => (indices[0], *indices.last().unwrap()),
        };
        out.push_str(&format!("{start},{end},{}\n", fmt_f64(*p)));
    }
    out
}

fn trajectories_csv(report: &RunReport, problem: &TwoAgentProblem) -> Result<String> {
    let dims = problem.dims();
    let mut out = String::from("solution_id,agent,t,position\n");
    for (id, rec) in report.atlas.records.iter().enumerate() {
        let z = JointPoint::new(rec.point.point.clone(), &dims)
            .map_err(|_| Error::SolverFailure("record does not match problem dims".into()))?;
        let (z1, z2) = integrate_positions(&dims, &z);
        for (t, v) in z1.iter().enumerate() {
            out.push_str(&format!("{id},1,{},{}\n", t + 1, fmt_f64(*v)));
        }
        for (t, v) in z2.iter().enumerate() {
            out.push_str(&format!("{id},2,{},{}\n", t + 1, fmt_f64(*v)));
        }
    }
    Ok(out)
}

// ---------------------------------------------------------------------------
// check-derivatives
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, Serialize)]
pub struct WorstError {
    pub point_index: usize,
    pub coordinate: usize,
    pub relative_error: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct DerivativeReport {
    pub problem: String,
    pub points: usize,
    pub master_seed: u64,
    pub grad_tolerance: f64,
    pub hess_tolerance: f64,
    pub worst_gradient: WorstError,
    pub worst_hessian: WorstError,
    pub passed: bool,
}

/// Compares analytic derivatives against the finite-difference oracles at
/// seeded random points drawn from the search init box.
pub fn check_derivatives_for(
    problem: &TwoAgentProblem,
    points: usize,
    master_seed: u64,
    half_width: f64,
    settings: &FdSettings,
) -> Result<DerivativeReport> {
    use rand::Rng;
    use rand_chacha::rand_core::SeedableRng;
    if points == 0 {
        return Err(Error::InvalidParameter {
            name: "points",
            reason: "must be >= 1".into(),
        });
    }
    settings.validate()?;
    let dims = problem.dims();
    let n = dims.joint_dim();
    let mut worst_g = WorstError {
        point_index: 0,
        coordinate: 0,
        relative_error: 0.0,
    };
    let mut worst_h = worst_g.clone();
    for idx in 0..points {
        // Offset keeps check points decoupled from search restarts.
        let seed = derive_seed(master_seed, 0x5EED_0000_0000_0000 | idx as u64);
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
        let vals: Vec<f64> = (0..n)
            .map(|_| rng.random::<f64>() * 2.0 * half_width - half_width)
            .collect();
        let z = JointPoint::new(vals, &dims)?;

        let g = problem.gradient(&z);
        let g_fd = fd_gradient(problem, &z, settings)?;
        let g_err = relative_error_vec(&g, &g_fd);
        if g_err > worst_g.relative_error {
            worst_g = WorstError {
                point_index: idx,
                coordinate: worst_coordinate_vec(&g, &g_fd),
                relative_error: g_err,
            };
        }

        let h = problem.hessian(&z);
        let h_fd = fd_hessian(problem, &z, settings)?;
        let h_err = relative_error_mat(&h, &h_fd);
        if h_err > worst_h.relative_error {
            let diff = &h - &h_fd;
            let (mut wi, mut wv) = (0usize, -1.0f64);
            for (i, v) in diff.iter().enumerate() {
                if v.abs() > wv {
                    wv = v.abs();
                    wi = i;
                }
            }
            worst_h = WorstError {
                point_index: idx,
                coordinate: wi % h.nrows(),
                relative_error: h_err,
            };
        }
    }
    let passed = worst_g.relative_error <= settings.grad_rtol
        && worst_h.relative_error <= settings.hess_rtol;
    Ok(DerivativeReport {
        problem: problem.name().to_string(),
        points,
        master_seed,
        grad_tolerance: settings.grad_rtol,
        hess_tolerance: settings.hess_rtol,
        worst_gradient: worst_g,
        worst_hessian: worst_h,
        passed,
    })
}

pub fn check_derivatives(cfg: &RunConfig, points: usize) -> Result<DerivativeReport> {
    cfg.validate()?;
    let problem = cfg.build_problem()?;
    check_derivatives_for(
        &problem,
        points,
        cfg.search.master_seed,
        cfg.search.init_half_width,
        &FdSettings::default(),
    )
}

// ---------------------------------------------------------------------------
// reproduce
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ReproCase {
    Fig1,
    RemarkQ,
    T6,
    T10,
}

impl ReproCase {
    pub fn parse(name: &str) -> Result<Self> {
        match name {
            "fig1" => Ok(Self::Fig1),
            "remark_q" => Ok(Self::RemarkQ),
            "t6" => Ok(Self::T6),
            "t10" => Ok(Self::T10),
            other => Err(Error::Config(format!(
                "unknown case `{other}` (expected fig1, remark_q, t6, or t10)"
            ))),
        }
    }

    pub fn config(&self, out_dir: &str) -> RunConfig {
        let toml = match self {
            ReproCase::Fig1 => format!(
                "[problem]\nname = \"static_separation\"\ntau = 0.5\ngamma = 1.0\nrho = 1.5\n\n\
                 [search]\nrestarts = 500\nmaster_seed = 42\ninit_half_width = 3.0\n\
                 gradient_tolerance = 1e-10\nmax_iterations = 100\nregularization_floor = 1e-8\n\
                 dedup_tolerance = 1e-4\n\n[output]\ndirectory = \"{out_dir}\"\n"
            ),
            ReproCase::RemarkQ => format!(
                "[problem]\nname = \"quadratic_coupling\"\n\n\
                 [search]\nrestarts = 50\nmaster_seed = 42\ninit_half_width = 3.0\n\
                 gradient_tolerance = 1e-10\nmax_iterations = 100\nregularization_floor = 1e-8\n\
                 dedup_tolerance = 1e-4\n\n[family]\nmode = \"power-set\"\ninclude_empty = false\n\n\
                 [output]\ndirectory = \"{out_dir}\"\n"
            ),
            ReproCase::T6 => format!(
                "[problem]\nname = \"dynamic_separation\"\nhorizon = 6\ntau = 0.5\ngamma = 1.0\nrho = 1.5\n\n\
                 [search]\nrestarts = 2000\nmaster_seed = 42\ninit_half_width = 3.0\n\
                 gradient_tolerance = 1e-10\nmax_iterations = 100\nregularization_floor = 1e-8\n\
                 dedup_tolerance = 1e-4\n\n[output]\ndirectory = \"{out_dir}\"\n"
            ),
            ReproCase::T10 => format!(
                "[problem]\nname = \"dynamic_separation\"\nhorizon = 10\ntau = 0.5\ngamma = 1.0\nrho = 1.5\n\n\
                 [search]\nrestarts = 2000\nmaster_seed = 42\ninit_half_width = 3.0\n\
                 gradient_tolerance = 1e-10\nmax_iterations = 100\nregularization_floor = 1e-8\n\
                 dedup_tolerance = 1e-4\n\n[output]\ndirectory = \"{out_dir}\"\n"
            ),
        };
        RunConfig::from_toml_str(&toml).expect("bundled config is valid")
    }
}

/// Runs the bundled config for a reproduction case and evaluates its assertions.
/// The returned flag is true when every required assertion passed.
pub fn reproduce(case: ReproCase, out_dir: &str) -> Result<(RunReport, bool)> {
    let cfg = case.config(out_dir);
    let toml = cfg.to_toml_string();
    let digest = sha256_hex(toml.as_bytes());
    let mut report = run(&cfg, digest)?;
    report.assertions = match case {
        ReproCase::Fig1 => assert_fig1(&report),
        ReproCase::RemarkQ => assert_remark_q(&report),
        ReproCase::T6 => assert_t6(&report),
        ReproCase::T10 => assert_t10(&report),
    };
    let out = Path::new(out_dir);
    write_artifacts(&report, out)?;
    write_file(&out.join("config.toml"), &toml)?;
    let ok = report
        .assertions
        .iter()
        .all(|a| a.passed || !a.required);
    Ok((report, ok))
}

fn check(name: &str, passed: bool, detail: String) -> CaseAssertion {
    CaseAssertion {
        name: name.to_string(),
        passed,
        required: true,
        detail,
    }
}

fn info(name: &str, detail: String) -> CaseAssertion {
    CaseAssertion {
        name: name.to_string(),
        passed: true,
        required: false,
        detail,
    }
}

fn assert_fig1(report: &RunReport) -> Vec<CaseAssertion> {
    let recs = &report.atlas.records;
    let mut out = vec![check(
        "three_solutions",
        recs.len() == 3,
        format!("found {} distinct solutions", recs.len()),
    )];
    if recs.len() == 3 {
        let pair_ok = (recs[0].point.cost - 0.886).abs() <= 1e-3
            && (recs[1].point.cost - 0.886).abs() <= 1e-3;
        let antisym = recs[..2].iter().all(|r| {
            let p = &r.point.point;
            (p[0] + p[1]).abs() <= 1e-8
        });
        let swapped = {
            let (a, b) = (&recs[0].point.point, &recs[1].point.point);
            (a[0] + b[0]).abs() <= 1e-6 && (a[1] + b[1]).abs() <= 1e-6
        };
        out.push(check(
            "coordinated_pair_costs",
            pair_ok && antisym && swapped,
            format!(
                "costs {} and {} at ({}, {}) and ({}, {})",
                fmt_f64(recs[0].point.cost),
                fmt_f64(recs[1].point.cost),
                fmt_f64(recs[0].point.point[0]),
                fmt_f64(recs[0].point.point[1]),
                fmt_f64(recs[1].point.point[0]),
                fmt_f64(recs[1].point.point[1])
            ),
        ));
        out.push(check(
            "saddle_cost",
            (recs[2].point.cost - 1.0).abs() <= 1e-9,
            format!("origin cost {}", fmt_f64(recs[2].point.cost)),
        ));
        let full_set = report.atlas.family.len() - 1;
        out.push(check(
            "pair_coordinated_on_full_set",
            recs[0].is_coordinated_on(full_set) && recs[1].is_coordinated_on(full_set),
            "both minima must be coordinated on the full horizon".to_string(),
        ));
        out.push(check(
            "saddle_uncoordinated",
            recs[2].coordinated_sets.is_empty(),
            format!(
                "origin coordinated on {} family set(s)",
                recs[2].coordinated_sets.len()
            ),
        ));
    }
    out
}

fn assert_remark_q(report: &RunReport) -> Vec<CaseAssertion> {
    let recs = &report.atlas.records;
    let mut out = vec![check(
        "single_solution",
        recs.len() == 1,
        format!("found {} distinct solutions", recs.len()),
    )];
    if let Some(rec) = recs.first() {
        let boundary_ok = report
            .atlas
            .family
            .iter()
            .enumerate()
            .all(|(fi, set)| rec.is_coordinated_on(fi) == (set.len() <= 2));
        out.push(check(
            "cardinality_two_boundary",
            boundary_ok,
            "coordinated exactly on subsets of cardinality <= 2".to_string(),
        ));
        let maximal: Vec<Vec<usize>> = rec.maximal_sets.iter().map(|s| s.indices()).collect();
        out.push(check(
            "maximal_sets_are_pairs",
            maximal == vec![vec![1, 2], vec![1, 3], vec![2, 3]],
            format!("maximal sets: {maximal:?}"),
        ));
    }
    out
}

fn coordination_classes(report: &RunReport) -> usize {
    use std::collections::BTreeSet;
    report
        .atlas
        .records
        .iter()
        .map(|r| r.coordinated_sets.clone())
        .collect::<BTreeSet<_>>()
        .len()
}

fn argmax_interval(report: &RunReport) -> Option<(&TimeSet, f64)> {
    report
        .instance
        .family
        .iter()
        .zip(&report.coordination.p)
        .max_by(|a, b| a.1.total_cmp(b.1))
        .map(|(s, p)| (s, *p))
}

/// p must be non-increasing along nested chains of intervals that all contain
/// the anchor times.
fn nesting_monotone(report: &RunReport, anchor: &[usize]) -> bool {
    let fam = &report.instance.family;
    let p = &report.coordination.p;
    for (i, si) in fam.iter().enumerate() {
        if !anchor.iter().all(|&t| si.contains(t)) {
            continue;
        }
        for (j, sj) in fam.iter().enumerate() {
            if i == j || !anchor.iter().all(|&t| sj.contains(t)) {
                continue;
            }
            if si.is_subset_of(sj) && p[i] < p[j] - 1e-12 {
                return false;
            }
        }
    }
    true
}

fn assert_t6(report: &RunReport) -> Vec<CaseAssertion> {
    let classes = coordination_classes(report);
    let mut out = vec![check(
        "distinct_coordination_classes",
        classes >= 2,
        format!("{classes} distinct coordination classes"),
    )];
    match argmax_interval(report) {
        Some((set, p)) => {
            out.push(check(
                "top_interval_contains_4_5",
                set.contains(4) && set.contains(5),
                format!("maximal p* = {} on {}", fmt_f64(p), set.label()),
            ));
            out.push(check(
                "p_nonincreasing_over_nested_intervals",
                nesting_monotone(report, &[4, 5]),
                "p* must not grow along nested intervals containing {4,5}".to_string(),
            ));
        }
        None => out.push(check("top_interval_contains_4_5", false, "empty plan".into())),
    }
    out.push(info(
        "solution_census",
        format!(
            "{} solutions, costs {:?}",
            report.atlas.records.len(),
            report
                .atlas
                .records
                .iter()
                .map(|r| r.point.cost)
                .collect::<Vec<_>>()
        ),
    ));
    out
}

fn assert_t10(report: &RunReport) -> Vec<CaseAssertion> {
    let classes = coordination_classes(report);
    let mut out = vec![check(
        "distinct_coordination_classes",
        classes >= 2,
        format!("{classes} distinct coordination classes"),
    )];
    // The exact optimum interval is parameter-dependent and the source
    // parameters are not published; a mismatch is recorded as a deviation
    // instead of failing the case.
    match argmax_interval(report) {
        Some((set, p)) => {
            let expected: Vec<usize> = (3..=8).collect();
            let hit = set.indices() == expected;
            out.push(CaseAssertion {
                name: "top_interval_is_3_to_8".to_string(),
                passed: hit,
                required: false,
                detail: if hit {
                    format!("maximal p* = {} on {}", fmt_f64(p), set.label())
                } else {
                    format!(
                        "maximal p* = {} on {} (expected 3-8; parameter-dependent reproduction)",
                        fmt_f64(p),
                        set.label()
                    )
                },
            });
        }
        None => out.push(check("top_interval_is_3_to_8", false, "empty plan".into())),
    }
    out.push(info(
        "solution_census",
        format!("{} solutions", report.atlas.records.len()),
    ));
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn fig1_reproduction() {
        let dir = tempfile::tempdir().unwrap();
        let (report, ok) = reproduce(ReproCase::Fig1, dir.path().to_str().unwrap()).unwrap();
        for a in &report.assertions {
            assert!(a.passed || !a.required, "{}: {}", a.name, a.detail);
        }
        assert!(ok);
        assert!(dir.path().join("report.json").exists());
        assert!(dir.path().join("solutions.csv").exists());
        assert!(dir.path().join("heatmap.csv").exists());
        assert!(dir.path().join("config.toml").exists());
        // Static problem emits no trajectories.
        assert!(!dir.path().join("trajectories.csv").exists());
    }

    #[test]
    fn remark_q_reproduction() {
        let dir = tempfile::tempdir().unwrap();
        let (report, ok) = reproduce(ReproCase::RemarkQ, dir.path().to_str().unwrap()).unwrap();
        for a in &report.assertions {
            assert!(a.passed || !a.required, "{}: {}", a.name, a.detail);
        }
        assert!(ok);
        // Power-set family: no heatmap.
        assert!(!dir.path().join("heatmap.csv").exists());
    }

    #[test]
    fn check_derivatives_builtins_pass() {
        for toml in [
            "[problem]\nname = \"static_separation\"\n",
            "[problem]\nname = \"quadratic_coupling\"\n",
            "[problem]\nname = \"dynamic_separation\"\nhorizon = 6\n",
        ] {
            let cfg = RunConfig::from_toml_str(toml).unwrap();
            let report = check_derivatives(&cfg, 20).unwrap();
            assert!(report.passed, "{}: {report:?}", cfg.problem.name);
        }
    }

    #[test]
    fn check_derivatives_flags_corrupted_gradient() {
        use crate::problem::{make_static_separation, TwoAgentProblem};
        let base = make_static_separation(0.5, 1.0, 1.5).unwrap();
        let inner = base.clone();
        let corrupted = TwoAgentProblem::from_fns(
            "corrupted",
            base.dims(),
            base.params().clone(),
            {
                let p = base.clone();
                move |z| {
                    let dims = p.dims();
                    p.value(&JointPoint::new(z.to_vec(), &dims).unwrap())
                }
            },
            move |z| {
                let dims = inner.dims();
                let mut g = inner.gradient(&JointPoint::new(z.to_vec(), &dims).unwrap());
                g[1] += 1e-2;
                g
            },
            {
                let p = base.clone();
                move |z| {
                    let dims = p.dims();
                    p.hessian(&JointPoint::new(z.to_vec(), &dims).unwrap())
                }
            },
        );
        let report =
            check_derivatives_for(&corrupted, 20, 42, 3.0, &FdSettings::default()).unwrap();
        assert!(!report.passed);
        assert_eq!(report.worst_gradient.coordinate, 1);
        assert!(report.worst_gradient.relative_error > 1e-3);
    }

    #[test]
    fn check_derivatives_is_deterministic() {
        let cfg = RunConfig::from_toml_str(
            "[problem]\nname = \"dynamic_separation\"\nhorizon = 6\n",
        )
        .unwrap();
        let a = check_derivatives(&cfg, 5).unwrap();
        let b = check_derivatives(&cfg, 5).unwrap();
        assert_eq!(
            serde_json::to_string(&a).unwrap(),
            serde_json::to_string(&b).unwrap()
        );
    }

    #[test]
    fn check_derivatives_rejects_zero_points() {
        let cfg = RunConfig::from_toml_str("[problem]\nname = \"static_separation\"\n").unwrap();
        assert!(check_derivatives(&cfg, 0).is_err());
    }

    #[test]
    fn heatmap_rows_and_simplex_sum() {
        let cfg = RunConfig::from_toml_str(
            "[problem]\nname = \"static_separation\"\n\n[search]\nrestarts = 100\nmaster_seed = 1\n",
        )
        .unwrap();
        let report = run(&cfg, "digest".into()).unwrap();
        let csv = heatmap_csv(&report);
        let lines: Vec<&str> = csv.lines().collect();
        assert_eq!(lines[0], "start,end,p");
        assert_eq!(lines.len(), 2);
        assert_eq!(lines[1], "1,1,1");
    }

    #[test]
    fn unknown_case_is_config_error() {
        assert!(matches!(ReproCase::parse("fig9"), Err(Error::Config(_))));
    }

    #[test]
    fn include_empty_heatmap_encodes_empty_as_zero_row() {
        let cfg = RunConfig::from_toml_str(
            "[problem]\nname = \"static_separation\"\n\n[search]\nrestarts = 100\nmaster_seed = 1\n\n\
             [family]\nmode = \"contiguous\"\ninclude_empty = true\n",
        )
        .unwrap();
        let report = run(&cfg, "digest".into()).unwrap();
        // Every surviving record sits in the empty set's solution set.
        assert_eq!(report.atlas.sol_members[0].len(), report.atlas.records.len());
        let csv = heatmap_csv(&report);
        let lines: Vec<&str> = csv.lines().collect();
        assert_eq!(lines.len(), 3);
        assert!(lines[1].starts_with("0,0,"));
        let total: f64 = lines[1..]
            .iter()
            .map(|l| l.rsplit(',').next().unwrap().parse::<f64>().unwrap())
            .sum();
        assert!((total - 1.0).abs() <= 1e-10);
    }
}
