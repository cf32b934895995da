//! Acceptance suite: prints one PASS/FAIL line per criterion and exits
//! nonzero if any criterion fails.
//!
//! Criteria 3 to 7 run end to end through the command-line binary with
//! `--threads 1`; criterion 8 reruns the same invocations with `--threads 8`
//! and compares the output directories byte for byte.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::process::Command;
use std::sync::Arc;
use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use attractor_lab::boxset::{hausdorff, semi_distance, BoxCover, GridSpec};
use attractor_lab::flow::{check_semigroup, evolve, IntegratorConfig, SystemFamily};

const BIN: &str = env!("CARGO_BIN_EXE_attractor-lab");

struct Verdict {
    ok: bool,
    detail: String,
}

fn verdict(problems: Vec<String>, summary: String) -> Verdict {
    if problems.is_empty() {
        Verdict {
            ok: true,
            detail: summary,
        }
    } else {
        Verdict {
            ok: false,
            detail: format!("{summary}; {}", problems.join("; ")),
        }
    }
}

// ---------------------------------------------------------------- criterion 1

fn random_cover(grid: &Arc<GridSpec>, rng: &mut ChaCha8Rng) -> BoxCover {
    let n = rng.gen_range(1..=1000);
    let total = grid.total_cells();
    BoxCover::from_linear(grid.clone(), (0..n).map(|_| rng.gen_range(0..total))).unwrap()
}

fn brute_semi(a: &BoxCover, b: &BoxCover) -> f64 {
    let g = a.grid();
    let bs: Vec<Vec<f64>> = b.cells().iter().map(|&j| g.center_of_linear(j)).collect();
    a.cells()
        .iter()
        .map(|&i| {
            let x = g.center_of_linear(i);
            bs.iter()
                .map(|y| x.iter().zip(y).map(|(p, q)| (p - q).abs()).fold(0.0, f64::max))
                .fold(f64::INFINITY, f64::min)
        })
        .fold(0.0, f64::max)
}

fn criterion_1() -> Verdict {
    let grid = Arc::new(GridSpec::new(vec![-1.0, 0.0], vec![2.0, 1.0], vec![60, 45]).unwrap());
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let mut worst: f64 = 0.0;
    for _ in 0..200 {
        let (a, b) = (random_cover(&grid, &mut rng), random_cover(&grid, &mut rng));
        let (ab, ba) = (brute_semi(&a, &b), brute_semi(&b, &a));
        worst = worst
            .max((semi_distance(&a, &b).unwrap() - ab).abs())
            .max((semi_distance(&b, &a).unwrap() - ba).abs())
            .max((hausdorff(&a, &b).unwrap() - ab.max(ba)).abs());
    }
    let mut triangle_violations = 0;
    for _ in 0..200 {
        let (a, b, c) = (
            random_cover(&grid, &mut rng),
            random_cover(&grid, &mut rng),
            random_cover(&grid, &mut rng),
        );
        let h = |x: &BoxCover, y: &BoxCover| hausdorff(x, y).unwrap();
        if h(&a, &c) > h(&a, &b) + h(&b, &c) + 1e-12 {
            triangle_violations += 1;
        }
    }
    let mut problems = Vec::new();
    if worst > 1e-12 {
        problems.push(format!("metric mismatch {worst:e}"));
    }
    if triangle_violations > 0 {
        problems.push(format!("{triangle_violations} triangle violations"));
    }
    verdict(
        problems,
        format!("max |fast − brute| = {worst:e} over 200 pairs, triangle ok on 200 triples"),
    )
}

// ---------------------------------------------------------------- criterion 2

fn criterion_2() -> Verdict {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let cfg = IntegratorConfig::with_dt(1e-3);
    let mut problems = Vec::new();
    let mut parts = Vec::new();
    for (family, lambda) in [
        (SystemFamily::pitchfork(), 1.0),
        (SystemFamily::semistable(), -0.01),
        (SystemFamily::lorenz(), 28.0),
    ] {
        let p = family.param(&[lambda]).unwrap();
        let dom = family.default_domain().clone();
        let states: Vec<Vec<f64>> = (0..100)
            .map(|_| {
                (0..family.state_dim())
                    .map(|i| rng.gen_range(dom.lower[i]..=dom.upper[i]))
                    .collect()
            })
            .collect();
        for x in &states {
            let y = evolve(&family, &p, x, 0.0, &cfg).unwrap();
            if y.iter().zip(x).any(|(a, b)| a.to_bits() != b.to_bits()) {
                problems.push(format!("{}: evolve(0) is not the identity", family.name()));
                break;
            }
        }
        match check_semigroup(&family, &p, &states, 1.0, 1.0, &cfg) {
            Ok(d) if d <= 1e-6 => parts.push(format!("{} {d:e}", family.name())),
            Ok(d) => problems.push(format!("{} defect {d:e}", family.name())),
            Err(e) => problems.push(format!("{}: {e}", family.name())),
        }
    }
    verdict(problems, format!("identity exact; two-path defects: {}", parts.join(", ")))
}

// ------------------------------------------------------------ CLI plumbing

/// One CLI invocation used by criteria 3 to 7; replayed by criterion 8.
struct Run {
    name: &'static str,
    args: Vec<String>,
    /// Output directory of an earlier run this one reads.
    from: Option<&'static str>,
}

fn run(name: &'static str, args: &str) -> Run {
    Run {
        name,
        args: args.split_whitespace().map(String::from).collect(),
        from: None,
    }
}

struct Outcome {
    code: i32,
    stderr: String,
}

fn execute(r: &Run, root: &Path, threads: usize) -> Outcome {
    fs::create_dir_all(root).expect("output root");
    let mut cmd = Command::new(BIN);
    cmd.current_dir(root)
        .args(&r.args)
        .args(["--out", r.name, "--threads", &threads.to_string()]);
    if let Some(src) = r.from {
        cmd.args(["--from", src]);
    }
    let out = cmd.output().expect("run attractor-lab");
    Outcome {
        code: out.status.code().unwrap_or(-1),
        stderr: String::from_utf8_lossy(&out.stderr).into_owned(),
    }
}

fn manifest(dir: &Path) -> BTreeMap<String, String> {
    fs::read_to_string(dir.join("manifest"))
        .unwrap_or_default()
        .lines()
        .filter_map(|l| l.split_once('='))
        .map(|(k, v)| (k.to_string(), v.to_string()))
        .collect()
}

/// Data rows of a CSV, split on commas.
fn csv(dir: &Path, name: &str) -> Vec<Vec<String>> {
    fs::read_to_string(dir.join(name))
        .unwrap_or_default()
        .lines()
        .skip(1)
        .map(|l| l.split(',').map(String::from).collect())
        .collect()
}

fn num(s: &str) -> f64 {
    s.parse().unwrap_or(f64::NAN)
}

fn read_cover(path: &Path) -> Option<BoxCover> {
    BoxCover::from_dump(&fs::read_to_string(path).ok()?).ok()
}

fn exit_problem(name: &str, o: &Outcome) -> Option<String> {
    (o.code != 0).then(|| format!("{name} exited {}: {}", o.code, o.stderr.trim()))
}

// ---------------------------------------------------------------- criterion 3

fn criterion_3_runs() -> Vec<Run> {
    vec![
        run("c3_pitchfork_0", "attractor --family pitchfork --lambda 0 --cells 1024 --dt 0.1 --tstep 12000 --samples 3"),
        run("c3_pitchfork_0.25", "attractor --family pitchfork --lambda 0.25 --cells 1024 --dt 0.01 --tstep 8 --samples 9"),
        run("c3_pitchfork_1", "attractor --family pitchfork --lambda 1 --cells 1024 --dt 0.01 --tstep 2 --samples 9"),
        run("c3_pitchfork_2", "attractor --family pitchfork --lambda 2 --cells 1024 --dt 0.01 --tstep 1 --samples 9"),
        run("c3_lorenz_0.5", "attractor --family lorenz --lambda 0.5 --cells 64 --dt 0.01 --tstep 2 --samples 2"),
        run("c3_lorenz_28", "attractor --family lorenz --lambda 28 --cells 128 --dt 0.01 --tstep 0.25 --tol-cells 3 --samples 2"),
    ]
}

fn criterion_3(root: &Path, outcomes: &BTreeMap<&str, Outcome>) -> Verdict {
    let mut problems = Vec::new();
    let mut parts = Vec::new();
    for r in criterion_3_runs() {
        if let Some(p) = exit_problem(r.name, &outcomes[r.name]) {
            problems.push(p);
            continue;
        }
        let dir = root.join(r.name);
        let Some(cover) = read_cover(&dir.join("attractor.cover")) else {
            problems.push(format!("{}: unreadable cover", r.name));
            continue;
        };
        let g = cover.grid().clone();
        let w = g.cell_width();
        let m = manifest(&dir);
        let lambda = num(&m["lambda"]);
        if r.name.starts_with("c3_pitchfork") {
            let s = lambda.sqrt();
            let exact = BoxCover::from_rect(g.clone(), &[-s], &[s]).unwrap();
            let dh = hausdorff(&cover, &exact).unwrap() / w;
            parts.push(format!("λ={lambda}: {dh:.2} cells"));
            if dh > 2.0 + 1e-9 {
                problems.push(format!("pitchfork λ={lambda}: d_H = {dh:.2} cells"));
            }
        } else if lambda < 1.0 {
            let origin = BoxCover::from_rect(g.clone(), &[0.0; 3], &[0.0; 3]).unwrap();
            let dh = hausdorff(&cover, &origin).unwrap() / w;
            parts.push(format!("ρ=0.5: {dh:.2} cells"));
            if dh > 2.0 + 1e-9 {
                problems.push(format!("lorenz ρ=0.5: d_H to origin = {dh:.2} cells"));
            }
        } else {
            let defect = num(&m["invariance_defect"]) / w;
            parts.push(format!("ρ=28: {} cells, defect {defect:.2} cells", m["cells"]));
            if !(defect <= 3.0 + 1e-9) {
                problems.push(format!("lorenz ρ=28: invariance defect {defect:.2} cells"));
            }
        }
    }
    verdict(problems, parts.join(", "))
}

// ------------------------------------------------------------- criteria 4, 5

const SEMI_SWEEP: &str = "--family semistable --grid -0.5 0.5 21 --cells 2048 --dt 0.01 --tstep 2 --samples 9";

fn criterion_45_runs() -> Vec<Run> {
    vec![
        run("c4_sweep", &format!("sweep {SEMI_SWEEP}")),
        Run {
            from: Some("c4_sweep"),
            ..run("c5_scan_21", "scan --delta 0.3 --window 1")
        },
        run(
            "c5_scan_41",
            "scan --family semistable --grid -0.5 0.5 41 --cells 2048 --dt 0.01 --tstep 2 --samples 9 --delta 0.3 --window 1",
        ),
        Run {
            from: Some("c6_pitchfork"),
            ..run("c5_scan_pitchfork", "scan --delta 0.1 --window 1")
        },
    ]
}

/// Root of `(x − 1)²(x + 1) = λ` below −1 for `λ < 0`, by bisection.
fn semistable_equilibrium(lambda: f64) -> f64 {
    let g = |x: f64| (x - 1.0).powi(2) * (x + 1.0) - lambda;
    let (mut lo, mut hi) = (-3.0, -1.0);
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if g(mid) > 0.0 {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    0.5 * (lo + hi)
}

fn criterion_4(root: &Path, outcomes: &BTreeMap<&str, Outcome>) -> Verdict {
    if let Some(p) = exit_problem("c4_sweep", &outcomes["c4_sweep"]) {
        return verdict(vec![p], String::new());
    }
    let dir = root.join("c4_sweep");
    let lambdas: Vec<f64> = csv(&dir, "sweep.csv").iter().map(|r| num(&r[0])).collect();
    let w = read_cover(&dir.join("covers/0.cover")).unwrap().grid().cell_width();
    let i0 = lambdas.iter().position(|&l| l == 0.0).expect("λ = 0 on the grid");
    let il = lambdas.iter().position(|&l| l == -0.05).expect("λ = −0.05 on the grid");
    let mut problems = Vec::new();
    let mut upper = f64::NAN;
    let mut lower = f64::NAN;
    let mut worst_other: f64 = 0.0;
    for row in csv(&dir, "dist.csv") {
        let (i, j) = (row[0].parse::<usize>().unwrap(), row[1].parse::<usize>().unwrap());
        let (rho_ij, rho_ji) = (num(&row[3]), num(&row[4]));
        if (i, j) == (il, i0) {
            upper = rho_ij;
            lower = rho_ji;
        } else {
            worst_other = worst_other.max(rho_ij).max(rho_ji);
        }
    }
    // A_0 = [−1, 1] and A_λ = {x*(λ)} for λ < 0: lower deviation is 1 − x*.
    let oracle = 1.0 - semistable_equilibrium(-0.05);
    if !(upper <= 0.05 + 2.0 * w) {
        problems.push(format!("upper deviation {upper} > 0.05 + 2 cells"));
    }
    if !(1.8..=2.1).contains(&lower) {
        problems.push(format!("lower deviation {lower} outside [1.8, 2.1]"));
    }
    // The cover of A_0 may overshoot the non-hyperbolic point x = 1, never undershoot.
    if lower < oracle - 2.0 * w {
        problems.push(format!("lower deviation {lower} below oracle {oracle}"));
    }
    if !(worst_other <= 0.3) {
        problems.push(format!("other neighbor deviation {worst_other} > 0.3"));
    }
    verdict(
        problems,
        format!(
            "upper {upper:.4}, lower {lower:.4} (oracle {oracle:.4}), other pairs ≤ {worst_other:.4}"
        ),
    )
}

fn flagged(dir: &Path) -> (Vec<usize>, usize) {
    let rows = csv(dir, "scan.csv");
    let f = rows
        .iter()
        .enumerate()
        .filter(|(_, r)| r[2] == "true")
        .map(|(i, _)| i)
        .collect();
    (f, rows.len())
}

fn criterion_5(root: &Path, outcomes: &BTreeMap<&str, Outcome>) -> Verdict {
    let mut problems = Vec::new();
    let mut parts = Vec::new();
    for (name, m) in [("c5_scan_21", 21usize), ("c5_scan_41", 41)] {
        if let Some(p) = exit_problem(name, &outcomes[name]) {
            problems.push(p);
            continue;
        }
        let (f, rows) = flagged(&root.join(name));
        let center = (m - 1) / 2;
        if rows != m {
            problems.push(format!("{name}: {rows} rows"));
        }
        if f.iter().any(|&i| i.abs_diff(center) > 1) {
            problems.push(format!("m={m}: flags {f:?} away from λ = 0"));
        }
        if f.len() > 3 {
            problems.push(format!("m={m}: {} flagged", f.len()));
        }
        parts.push(format!("m={m}: {}/{m} flagged", f.len()));
    }
    match exit_problem("c5_scan_pitchfork", &outcomes["c5_scan_pitchfork"]) {
        Some(p) => problems.push(p),
        None => {
            let (f, rows) = flagged(&root.join("c5_scan_pitchfork"));
            if !f.is_empty() || rows != 16 {
                problems.push(format!("pitchfork flags {f:?} of {rows}"));
            }
            parts.push(format!("pitchfork: {}/{rows} flagged", f.len()));
        }
    }
    verdict(problems, parts.join(", "))
}

// ---------------------------------------------------------------- criterion 6

fn criterion_6_runs() -> Vec<Run> {
    vec![
        run(
            "c6_pitchfork",
            "equi --family pitchfork --grid 0.5 2 16 --cells 1024 --dt 0.01 --tstep 1 --samples 9 --times 1:30:1",
        ),
        run(
            "c6_semistable",
            "equi --family semistable --grid -0.2 0.2 33 --cells 1024 --dt 0.01 --tstep 1 --samples 9 --times 1:40:1",
        ),
    ]
}

fn criterion_6(root: &Path, outcomes: &BTreeMap<&str, Outcome>) -> Verdict {
    let mut problems = Vec::new();
    for r in criterion_6_runs() {
        if let Some(p) = exit_problem(r.name, &outcomes[r.name]) {
            problems.push(p);
        }
    }
    if !problems.is_empty() {
        return verdict(problems, String::new());
    }
    let pdir = root.join("c6_pitchfork");
    let w = read_cover(&pdir.join("covers/0.cover")).unwrap().grid().cell_width();
    let curve: Vec<(f64, f64)> = csv(&pdir, "equi.csv").iter().map(|r| (num(&r[0]), num(&r[1]))).collect();
    let rises = curve.windows(2).filter(|p| p[1].1 > p[0].1 + w).count();
    let late = curve.iter().filter(|(t, _)| *t >= 25.0).map(|(_, e)| *e).fold(0.0, f64::max);
    if rises > 0 {
        problems.push(format!("pitchfork e(t) rises by more than a cell {rises} times"));
    }
    if !(late <= 3.0 * w) || !curve.iter().any(|(t, _)| *t >= 25.0) {
        problems.push(format!("pitchfork e(t ≥ 25) = {late}"));
    }

    let sdir = root.join("c6_semistable");
    let sw = read_cover(&sdir.join("covers/0.cover")).unwrap().grid().cell_width();
    let scurve: Vec<(f64, f64)> = csv(&sdir, "equi.csv").iter().map(|r| (num(&r[0]), num(&r[1]))).collect();
    let e5 = scurve.iter().find(|(t, _)| *t == 5.0).map_or(f64::NAN, |p| p.1);
    if !(e5 >= 1.0) {
        problems.push(format!("semistable e(5) = {e5}"));
    }
    let mut horizon: BTreeMap<String, Option<f64>> = BTreeMap::new();
    for row in csv(&sdir, "equi_lambda.csv") {
        let entry = horizon.entry(row[0].clone()).or_insert(None);
        if entry.is_none() && num(&row[2]) <= 3.0 * sw {
            *entry = Some(num(&row[1]));
        }
    }
    if !horizon.contains_key("-0.0125") {
        problems.push("λ = −0.0125 missing from the grid".into());
    }
    let never: Vec<&String> = horizon.iter().filter(|(_, h)| h.is_none()).map(|(l, _)| l).collect();
    if horizon.len() != 33 || !never.is_empty() {
        problems.push(format!("λ never within 3 cells: {never:?}"));
    }
    let slowest = horizon.values().flatten().fold(0.0, |a: f64, b| a.max(*b));
    verdict(
        problems,
        format!(
            "pitchfork e(t≥25) ≤ {:.2} cells, monotone; semistable e(5) = {e5:.3}, \
             every λ within 3 cells by t ≤ {slowest} (λ=−0.0125 at t={})",
            late / w,
            horizon.get("-0.0125").copied().flatten().unwrap_or(f64::NAN)
        ),
    )
}

// ---------------------------------------------------------------- criterion 7

fn criterion_7_runs() -> Vec<Run> {
    vec![run(
        "c7_dini",
        "dini --family pitchfork --grid 0.5 2 16 --domain -4 4 --cells 1024 --seed-box -2 2 \
         --dt 0.01 --tstep 1 --samples 9 --t-unit 1 --max-steps 20 --iterations 10",
    )]
}

fn criterion_7(root: &Path, outcomes: &BTreeMap<&str, Outcome>) -> Verdict {
    if let Some(p) = exit_problem("c7_dini", &outcomes["c7_dini"]) {
        return verdict(vec![p], String::new());
    }
    let dir = root.join("c7_dini");
    let m = manifest(&dir);
    let w = read_cover(&dir.join("covers/0.cover")).unwrap().grid().cell_width();
    let mut problems = Vec::new();
    let absorb = csv(&dir, "absorb.csv");
    if absorb.len() != 16 {
        problems.push(format!("absorption recorded for {} λ", absorb.len()));
    }
    let mut per: BTreeMap<String, Vec<(usize, f64, bool)>> = BTreeMap::new();
    for r in csv(&dir, "dini.csv") {
        per.entry(r[0].clone())
            .or_default()
            .push((r[1].parse().unwrap(), num(&r[2]), r[3] == "true"));
    }
    if per.len() != 16 || per.values().any(|v| v.iter().map(|e| e.0).ne(1..=10)) {
        problems.push("dini.csv does not hold n = 1..10 for all 16 λ".into());
    }
    let not_nested = per.values().flatten().filter(|e| !e.2).count();
    if not_nested > 0 {
        problems.push(format!("{not_nested} subset failures"));
    }
    let worst = per
        .values()
        .flat_map(|v| v.windows(2).map(|p| p[1].1 - p[0].1))
        .fold(0.0, f64::max);
    if worst > w {
        problems.push(format!("d_H increases by {worst}"));
    }
    verdict(
        problems,
        format!(
            "T = {}, absorption verified at 16 λ, chain nested, max increase {:.2} cells",
            m.get("T").map_or("?", String::as_str),
            worst / w
        ),
    )
}

// ---------------------------------------------------------------- criterion 8

fn files(dir: &Path) -> BTreeMap<PathBuf, Vec<u8>> {
    let mut out = BTreeMap::new();
    let mut stack = vec![dir.to_path_buf()];
    while let Some(d) = stack.pop() {
        for e in fs::read_dir(&d).into_iter().flatten().flatten() {
            let p = e.path();
            if p.is_dir() {
                stack.push(p);
            } else {
                let rel = p.strip_prefix(dir).unwrap().to_path_buf();
                out.insert(rel, fs::read(&p).unwrap());
            }
        }
    }
    out
}

fn criterion_8(runs: &[Run], one: &Path, many: &Path) -> Verdict {
    let mut problems = Vec::new();
    let mut csvs = 0;
    for r in runs {
        let o = execute(r, many, 8);
        let (a, b) = (files(&one.join(r.name)), files(&many.join(r.name)));
        if o.code != 0 {
            problems.push(format!("{} exited {} with 8 threads", r.name, o.code));
        }
        if a.keys().ne(b.keys()) {
            problems.push(format!("{}: different file sets", r.name));
            continue;
        }
        for (path, bytes) in &a {
            if &b[path] != bytes {
                problems.push(format!("{}/{} differs", r.name, path.display()));
            }
        }
        csvs += a.keys().filter(|p| p.extension().is_some_and(|e| e == "csv")).count();
    }
    verdict(
        problems,
        format!("{} runs, {csvs} CSVs plus covers and manifests identical", runs.len()),
    )
}

fn main() {
    let tmp = tempfile::tempdir().expect("temporary directory");
    let (one, many) = (tmp.path().join("threads1"), tmp.path().join("threads8"));
    let mut failed = 0;
    let mut report = |n: usize, started: Instant, v: Verdict| {
        let tag = if v.ok { "PASS" } else { "FAIL" };
        failed += usize::from(!v.ok);
        println!(
            "{tag} criterion {n}: {} ({:.1} s)",
            v.detail,
            started.elapsed().as_secs_f64()
        );
    };

    let t = Instant::now();
    report(1, t, criterion_1());
    let t = Instant::now();
    report(2, t, criterion_2());

    // Order matters: scans with `from` read directories of earlier runs.
    let mut runs = criterion_3_runs();
    runs.extend(criterion_6_runs());
    runs.extend(criterion_45_runs());
    runs.extend(criterion_7_runs());
    let mut outcomes = BTreeMap::new();
    let mut elapsed = BTreeMap::new();
    for r in &runs {
        let t = Instant::now();
        outcomes.insert(r.name, execute(r, &one, 1));
        elapsed.insert(r.name, t.elapsed().as_secs_f64());
    }
    let secs = |prefix: &str| -> f64 {
        elapsed.iter().filter(|(k, _)| k.starts_with(prefix)).map(|(_, v)| v).sum()
    };
    let timed = |secs: f64, v: Verdict| Verdict {
        detail: format!("{} [{secs:.1} s in CLI]", v.detail),
        ..v
    };
    let now = Instant::now();
    report(3, now, timed(secs("c3_"), criterion_3(&one, &outcomes)));
    report(4, now, timed(secs("c4_"), criterion_4(&one, &outcomes)));
    report(5, now, timed(secs("c5_"), criterion_5(&one, &outcomes)));
    report(6, now, timed(secs("c6_"), criterion_6(&one, &outcomes)));
    report(7, now, timed(secs("c7_"), criterion_7(&one, &outcomes)));
    let t = Instant::now();
    report(8, t, criterion_8(&runs, &one, &many));

    if failed > 0 {
        println!("{failed} criterion(s) failed");
        std::process::exit(1);
    }
}
