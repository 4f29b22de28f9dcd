//! Acceptance suite: one test per criterion, each printing a PASS line with
//! the observed margins. Run with `cargo test --test acceptance -- --nocapture`
//! to see every line.

use std::collections::BTreeMap;
use std::time::Instant;

use coordscope::calculus::FdSettings;
use coordscope::classify::{
    classify, enumerate_sets, verify_downward_closure, FamilyMode, SolutionAtlas, TimeSet,
};
use coordscope::planner::{solve, solve_oracle, CoordinationInstance};
use coordscope::problem::{
    make_dynamic_separation, make_quadratic_coupling, make_static_separation, JointPoint,
    ProblemDims, TwoAgentProblem,
};
use coordscope::runner::{check_derivatives_for, reproduce, ReproCase};
use coordscope::search::{search, SearchSettings, StationaryPoint};

fn pass(criterion: usize, name: &str, detail: &str) {
    println!("ACCEPTANCE {criterion} ({name}): PASS — {detail}");
}

fn settings(restarts: usize, seed: u64) -> SearchSettings {
    SearchSettings {
        restarts,
        master_seed: seed,
        ..Default::default()
    }
}

fn static_atlas() -> SolutionAtlas {
    let p = make_static_separation(0.5, 1.0, 1.5).unwrap();
    let out = search(&p, &settings(500, 42)).unwrap();
    let fam = enumerate_sets(1, FamilyMode::Contiguous, false).unwrap();
    classify(&out.solutions, &p, &fam).unwrap()
}

fn quadratic_atlas() -> SolutionAtlas {
    let p = make_quadratic_coupling();
    let out = search(&p, &settings(50, 42)).unwrap();
    let fam = enumerate_sets(3, FamilyMode::PowerSet, false).unwrap();
    classify(&out.solutions, &p, &fam).unwrap()
}

fn t6_atlas() -> SolutionAtlas {
    let p = make_dynamic_separation(6, 0.5, 1.0, 1.5).unwrap();
    let out = search(&p, &settings(2000, 42)).unwrap();
    let fam = enumerate_sets(6, FamilyMode::Contiguous, false).unwrap();
    classify(&out.solutions, &p, &fam).unwrap()
}

#[test]
fn criterion_1_fig1_reproduction() {
    let start = Instant::now();
    let p = make_static_separation(0.5, 1.0, 1.5).unwrap();
    let out = search(&p, &settings(500, 42)).unwrap();
    assert_eq!(out.solutions.len(), 3, "expected exactly 3 solutions");

    let fam = enumerate_sets(1, FamilyMode::Contiguous, false).unwrap();
    let atlas = classify(&out.solutions, &p, &fam).unwrap();
    assert_eq!(atlas.records.len(), 3);

    // Sorted by cost: the coordinated pair first, the saddle last.
    let pair = &atlas.records[..2];
    for rec in pair {
        assert!(
            (rec.point.cost - 0.886).abs() <= 1e-3,
            "pair cost {}",
            rec.point.cost
        );
        // Located on the antisymmetric line y = -x.
        assert!((rec.point.point[0] + rec.point.point[1]).abs() <= 1e-8);
        // Coordinated on the full set [1,1].
        assert_eq!(rec.coordinated_sets, vec![0]);
    }
    // The two minima mirror each other: (c*, -c*) and (-c*, c*).
    assert!((pair[0].point.point[0] + pair[1].point.point[0]).abs() <= 1e-6);
    assert!(pair[0].point.point[0].abs() > 0.5);

    let saddle = &atlas.records[2];
    assert!((saddle.point.cost - 1.0).abs() <= 1e-9, "saddle cost {}", saddle.point.cost);
    assert!(saddle.point.point[0].abs() <= 1e-8);
    assert!(
        saddle.coordinated_sets.is_empty(),
        "origin must sit in SOL_empty only"
    );
    assert!(saddle.agent_one_pd && saddle.agent_two_pd);

    let elapsed = start.elapsed();
    assert!(elapsed.as_secs_f64() < 5.0, "runtime {elapsed:?} >= 5 s");
    pass(
        1,
        "fig1",
        &format!(
            "3 solutions, costs ({:.6}, {:.6}, {:.9}), {elapsed:?}",
            atlas.records[0].point.cost, atlas.records[1].point.cost, atlas.records[2].point.cost
        ),
    );
}

#[test]
fn criterion_2_remark_q_reproduction() {
    let start = Instant::now();
    let atlas = quadratic_atlas();
    assert_eq!(atlas.records.len(), 1, "the origin is the only solution");
    let rec = &atlas.records[0];

    let mut members = 0;
    for (fi, set) in atlas.family.iter().enumerate() {
        let expected = set.len() <= 2;
        assert_eq!(
            rec.is_coordinated_on(fi),
            expected,
            "set {} membership",
            set.label()
        );
        if expected {
            members += 1;
        }
    }
    assert_eq!(members, 6, "all 6 subsets of cardinality <= 2");

    let maximal: Vec<Vec<usize>> = rec.maximal_sets.iter().map(|s| s.indices()).collect();
    assert_eq!(maximal, vec![vec![1, 2], vec![1, 3], vec![2, 3]]);

    let elapsed = start.elapsed();
    assert!(elapsed.as_secs_f64() < 1.0, "runtime {elapsed:?} >= 1 s");
    pass(
        2,
        "remark_q",
        &format!("cardinality-2 boundary exact, maximal sets = three pairs, {elapsed:?}"),
    );
}

#[test]
fn criterion_3_solution_continuum_property() {
    // f(x, y) = (x - y)^2 is stationary along the whole line x = y; every
    // sampled point must pass the per-agent checks with identical cost.
    let dims = ProblemDims::new(1, 1, 1).unwrap();
    let p = TwoAgentProblem::from_fns(
        "pair_gap",
        dims,
        BTreeMap::new(),
        |z| (z[0] - z[1]) * (z[0] - z[1]),
        |z| vec![2.0 * (z[0] - z[1]), -2.0 * (z[0] - z[1])],
        |_| nalgebra::DMatrix::from_row_slice(2, 2, &[2.0, -2.0, -2.0, 2.0]),
    );
    let points: Vec<StationaryPoint> = (0..100)
        .map(|i| {
            let v = -4.95 + 0.1 * i as f64;
            let z = JointPoint::new(vec![v, v], &dims).unwrap();
            let grad = p.gradient(&z);
            let residual = grad.iter().map(|g| g.abs()).fold(0.0_f64, f64::max);
            assert!(residual <= 1e-10, "gradient residual {residual} at v={v}");
            StationaryPoint {
                point: vec![v, v],
                cost: p.value(&z),
                gradient_residual: residual,
                iterations: 0,
                restart_index: i,
            }
        })
        .collect();

    let fam = enumerate_sets(1, FamilyMode::Contiguous, false).unwrap();
    let atlas = classify(&points, &p, &fam).unwrap();
    assert_eq!(atlas.records.len(), 100, "no point may be discarded");
    for rec in &atlas.records {
        assert!(rec.agent_one_pd && rec.agent_two_pd);
    }
    let mean = atlas.records.iter().map(|r| r.point.cost).sum::<f64>() / 100.0;
    let variance = atlas
        .records
        .iter()
        .map(|r| (r.point.cost - mean).powi(2))
        .sum::<f64>()
        / 100.0;
    assert!(variance <= 1e-12, "cost variance {variance}");
    pass(
        3,
        "solution_continuum",
        &format!("100 points on x=y, cost variance {variance:e}"),
    );
}

#[test]
fn criterion_4_planner_exactness() {
    use rand::Rng;
    use rand_chacha::rand_core::SeedableRng;
    let start = Instant::now();

    // Hand-derived two-set instance.
    let hand = CoordinationInstance::new(
        vec![TimeSet::interval(1, 1), TimeSet::interval(2, 2)],
        vec![0.0, 1.0],
        vec![1.0, 1.0],
        vec![0.5, 0.5],
    )
    .unwrap();
    let exact = solve(&hand, 1e-12).unwrap();
    assert!((exact.p[0] - 0.75).abs() <= 1e-10 && (exact.p[1] - 0.25).abs() <= 1e-10);
    assert!(exact.kkt_residual <= 1e-8);

    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(20260811);
    let mut worst_gap = 0.0_f64;
    let mut worst_kkt = 0.0_f64;
    for trial in 0..100 {
        let m = 2 + (trial * 62) / 99; // sizes sweep 2..=64
        let fbar: Vec<f64> = (0..m).map(|_| rng.random::<f64>() * 10.0 - 5.0).collect();
        let weights: Vec<f64> = (0..m).map(|_| 0.1 + rng.random::<f64>() * 9.9).collect();
        let raw: Vec<f64> = (0..m).map(|_| rng.random::<f64>() + 1e-3).collect();
        let s: f64 = raw.iter().sum();
        let nominal: Vec<f64> = raw.iter().map(|x| x / s).collect();
        let family: Vec<TimeSet> = (1..=m).map(|t| TimeSet::subset(vec![t])).collect();
        let inst = CoordinationInstance::new(family, fbar, weights, nominal).unwrap();

        let res = solve(&inst, 1e-12).unwrap();
        let oracle = solve_oracle(&inst, 200_000, 1e-3);
        let gap = res
            .p
            .iter()
            .zip(&oracle.p)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0_f64, f64::max);
        assert!(gap <= 1e-6, "trial {trial} (m={m}): oracle gap {gap:e}");
        assert!(res.kkt_residual <= 1e-8, "trial {trial}: KKT {:e}", res.kkt_residual);
        assert!((res.p.iter().sum::<f64>() - 1.0).abs() <= 1e-10);
        worst_gap = worst_gap.max(gap);
        worst_kkt = worst_kkt.max(res.kkt_residual);
    }

    let elapsed = start.elapsed();
    assert!(elapsed.as_secs_f64() < 10.0, "runtime {elapsed:?} >= 10 s");
    pass(
        4,
        "planner_exactness",
        &format!(
            "hand instance (0.75, 0.25); worst oracle gap {worst_gap:e}, worst KKT {worst_kkt:e}, {elapsed:?}"
        ),
    );
}

#[test]
fn criterion_5_nesting_monotonicity() {
    let mut violations = 0usize;
    let mut checked = 0usize;
    for atlas in [static_atlas(), quadratic_atlas(), t6_atlas()] {
        verify_downward_closure(&atlas).unwrap();
        // Independent re-check against the family's subset relation.
        for (i, a) in atlas.family.iter().enumerate() {
            for (j, b) in atlas.family.iter().enumerate() {
                if i == j || !a.is_subset_of(b) {
                    continue;
                }
                for rec in &atlas.records {
                    checked += 1;
                    if rec.is_coordinated_on(j) && !rec.is_coordinated_on(i) {
                        violations += 1;
                    }
                }
            }
        }
    }
    assert_eq!(violations, 0);
    pass(
        5,
        "nesting_monotonicity",
        &format!("{checked} (record, subset-pair) checks, 0 violations"),
    );
}

#[test]
fn criterion_6_t6_qualitative_reproduction() {
    let start = Instant::now();
    let dir = tempfile::tempdir().unwrap();
    let (report, ok) = reproduce(ReproCase::T6, dir.path().to_str().unwrap()).unwrap();

    let classes: std::collections::BTreeSet<Vec<usize>> = report
        .atlas
        .records
        .iter()
        .map(|r| r.coordinated_sets.clone())
        .collect();
    assert!(classes.len() >= 2, "only {} coordination classes", classes.len());

    let (top_set, top_p) = report
        .instance
        .family
        .iter()
        .zip(&report.coordination.p)
        .max_by(|a, b| a.1.total_cmp(b.1))
        .unwrap();
    let contains = top_set.contains(4) && top_set.contains(5);
    if !contains {
        // The reproduce command must have reported the deviation explicitly.
        let recorded = report
            .assertions
            .iter()
            .any(|a| a.name == "top_interval_contains_4_5" && !a.passed);
        assert!(
            recorded,
            "containment failed without an explicit deviation record"
        );
        panic!(
            "top interval {} does not contain {{4,5}} (deviation was recorded, p* = {top_p})",
            top_set.label()
        );
    }

    // p* non-increasing across nested intervals of growing length containing {4,5}.
    for (i, a) in report.instance.family.iter().enumerate() {
        if !(a.contains(4) && a.contains(5)) {
            continue;
        }
        for (j, b) in report.instance.family.iter().enumerate() {
            if i == j || !(b.contains(4) && b.contains(5)) || !a.is_subset_of(b) {
                continue;
            }
            assert!(
                report.coordination.p[i] >= report.coordination.p[j] - 1e-12,
                "p[{}] = {} < p[{}] = {}",
                a.label(),
                report.coordination.p[i],
                b.label(),
                report.coordination.p[j]
            );
        }
    }
    assert!(ok, "required reproduce assertions failed");

    let elapsed = start.elapsed();
    assert!(elapsed.as_secs_f64() < 60.0, "runtime {elapsed:?} >= 60 s");
    pass(
        6,
        "t6_reproduction",
        &format!(
            "{} classes, top p* = {top_p:.6} on {}, nested mass non-increasing, {elapsed:?}",
            classes.len(),
            top_set.label()
        ),
    );
}

#[test]
fn criterion_7_t10_qualitative_reproduction() {
    let start = Instant::now();
    let dir = tempfile::tempdir().unwrap();
    let (report, ok) = reproduce(ReproCase::T10, dir.path().to_str().unwrap()).unwrap();
    assert!(ok, "required reproduce assertions failed");

    let (top_set, top_p) = report
        .instance
        .family
        .iter()
        .zip(&report.coordination.p)
        .max_by(|a, b| a.1.total_cmp(b.1))
        .unwrap();
    let expected: Vec<usize> = (3..=8).collect();
    let detail = if top_set.indices() == expected {
        format!("top interval is 3-8 with p* = {top_p:.6}")
    } else {
        // Soft assertion: the mismatch must be recorded as an explicit
        // deviation in the reproduce report, never passed silently.
        let recorded = report.assertions.iter().find(|a| a.name == "top_interval_is_3_to_8");
        let recorded = recorded.expect("t10 must record the top-interval assertion");
        assert!(!recorded.passed, "mismatch must not be recorded as a pass");
        assert!(
            recorded.detail.contains(&top_set.label()),
            "deviation record must name the observed interval: {}",
            recorded.detail
        );
        format!(
            "top interval {} (p* = {top_p:.6}) deviates from 3-8; deviation recorded explicitly: \"{}\"",
            top_set.label(),
            recorded.detail
        )
    };

    let elapsed = start.elapsed();
    assert!(elapsed.as_secs_f64() < 300.0, "runtime {elapsed:?} >= 5 min");
    pass(7, "t10_reproduction", &format!("{detail}, {elapsed:?}"));
}

#[test]
fn criterion_8_derivative_validation() {
    let problems = [
        make_static_separation(0.5, 1.0, 1.5).unwrap(),
        make_quadratic_coupling(),
        make_dynamic_separation(6, 0.5, 1.0, 1.5).unwrap(),
        make_dynamic_separation(10, 0.5, 1.0, 1.5).unwrap(),
    ];
    let fd = FdSettings::default();
    let mut details = Vec::new();
    for p in &problems {
        let report = check_derivatives_for(p, 20, 42, 3.0, &fd).unwrap();
        assert!(
            report.passed,
            "{}: grad {:e} (tol {:e}), hess {:e} (tol {:e})",
            p.name(),
            report.worst_gradient.relative_error,
            fd.grad_rtol,
            report.worst_hessian.relative_error,
            fd.hess_rtol
        );
        details.push(format!(
            "{}: g {:.1e} / h {:.1e}",
            p.name(),
            report.worst_gradient.relative_error,
            report.worst_hessian.relative_error
        ));
    }
    pass(8, "derivative_validation", &details.join("; "));
}

#[test]
fn criterion_9_byte_identical_reruns() {
    use std::process::Command;
    let bin = env!("CARGO_BIN_EXE_coordscope");
    let dir = tempfile::tempdir().unwrap();
    let config_path = dir.path().join("run.toml");
    std::fs::write(
        &config_path,
        "[problem]\nname = \"dynamic_separation\"\nhorizon = 6\n\n\
         [search]\nrestarts = 400\nmaster_seed = 42\n",
    )
    .unwrap();

    let mut outputs: Vec<(String, String, String, String)> = Vec::new();
    let out_dir = dir.path().join("out");
    for threads in ["1", "8", "1", "8"] {
        let status = Command::new(bin)
            .arg("run")
            .arg(&config_path)
            .arg("--out")
            .arg(out_dir.to_str().unwrap())
            .env("COORDSCOPE_THREADS", threads)
            .status()
            .unwrap();
        assert!(status.success());
        let report = std::fs::read_to_string(out_dir.join("report.json")).unwrap();
        let mut value: serde_json::Value = serde_json::from_str(&report).unwrap();
        value.as_object_mut().unwrap().remove("timings_ms");
        let canonical = serde_json::to_string(&value).unwrap();
        let solutions = std::fs::read_to_string(out_dir.join("solutions.csv")).unwrap();
        let heatmap = std::fs::read_to_string(out_dir.join("heatmap.csv")).unwrap();
        let trajectories = std::fs::read_to_string(out_dir.join("trajectories.csv")).unwrap();
        outputs.push((canonical, solutions, heatmap, trajectories));
    }
    for other in &outputs[1..] {
        assert_eq!(outputs[0].0, other.0, "report.json differs (modulo timings)");
        assert_eq!(outputs[0].1, other.1, "solutions.csv differs");
        assert_eq!(outputs[0].2, other.2, "heatmap.csv differs");
        assert_eq!(outputs[0].3, other.3, "trajectories.csv differs");
    }
    pass(
        9,
        "determinism",
        "4 runs (threads 1/8 x2): report modulo timings and all CSVs byte-identical",
    );
}
