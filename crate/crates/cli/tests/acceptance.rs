//! Acceptance suite: one PASS/FAIL line per criterion. Runs without the
//! libtest harness so the lines always reach standard output.

use std::collections::BTreeMap;
use std::fs;
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;
use std::process::Command;
use std::time::{Duration, Instant};

use rand::Rng;

use zico_core::data::Batch;
use zico_core::eval::{
    kendall_tau, kendall_tau_naive, run_benchmark, spearman_rho, BenchConfig, BenchData,
};
use zico_core::proxies::{flops_proxy, params_proxy, GradStats, ProxyKind};
use zico_core::rng;
use zico_core::search::{brute_force_best, evolve, ProxyScorer, SearchConfig};
use zico_core::space::{CellSpace, LayerDesc, SpaceConfig, WidthSpace};
use zico_core::tensor::{grad_check, Graph, LayerKind, NodeId, ParamSet, Tensor};
use zico_core::theory::suite;

const GRAD_TOL: f64 = 1e-5;

type Outcome = Result<String, String>;

type Criterion = (&'static str, fn() -> Outcome);

fn ensure(ok: bool, detail: String) -> Outcome {
    if ok {
        Ok(detail)
    } else {
        Err(detail)
    }
}

fn within_time(limit: Duration, start: Instant, detail: String) -> Outcome {
    let took = start.elapsed();
    if took < limit {
        Ok(format!("{detail}; {:.1}s", took.as_secs_f64()))
    } else {
        Err(format!(
            "{detail}; took {:.1}s, limit {}s",
            took.as_secs_f64(),
            limit.as_secs()
        ))
    }
}

fn random_tensor(shape: &[usize], seed: u64) -> Tensor {
    let mut r = rng::rng_from_seed(seed);
    let n = shape.iter().product();
    Tensor::new(
        shape.to_vec(),
        (0..n).map(|_| r.random_range(-1.0..1.0)).collect(),
    )
    .unwrap()
}

fn raw_params(shapes: &[&[usize]], seed: u64) -> ParamSet {
    let mut ps = ParamSet::new();
    for (i, s) in shapes.iter().enumerate() {
        ps.add_raw(
            &format!("p{i}"),
            random_tensor(s, rng::indexed_seed(seed, "raw", i as u64)),
            1,
        );
    }
    ps
}

/// Reduces a tensor node to a scalar with a nontrivial gradient.
fn squared_error(g: &mut Graph, x: NodeId, seed: u64) -> zico_core::Result<NodeId> {
    let t = g.input(random_tensor(g.value(x).shape(), seed));
    g.mse_loss(x, t)
}

type OpBuilder = fn(&mut Graph, &[NodeId]) -> zico_core::Result<NodeId>;

fn op_cases() -> Vec<(&'static str, Vec<Vec<usize>>, OpBuilder)> {
    vec![
        ("matmul", vec![vec![3, 4], vec![4, 5]], |g, p| {
            let y = g.matmul(p[0], p[1])?;
            squared_error(g, y, 1)
        }),
        ("add", vec![vec![2, 3, 4], vec![2, 3, 4]], |g, p| {
            let y = g.add(p[0], p[1])?;
            squared_error(g, y, 2)
        }),
        ("add_bias_4d", vec![vec![2, 3, 4, 4], vec![3]], |g, p| {
            let y = g.add_bias(p[0], p[1])?;
            squared_error(g, y, 3)
        }),
        ("add_bias_2d", vec![vec![4, 5], vec![5]], |g, p| {
            let y = g.add_bias(p[0], p[1])?;
            squared_error(g, y, 4)
        }),
        ("scale", vec![vec![3, 3]], |g, p| {
            let y = g.scale(p[0], -1.7);
            squared_error(g, y, 5)
        }),
        ("relu", vec![vec![4, 6]], |g, p| {
            let y = g.relu(p[0]);
            squared_error(g, y, 6)
        }),
        (
            "conv2d_same",
            vec![vec![2, 3, 5, 5], vec![4, 3, 3, 3]],
            |g, p| {
                let y = g.conv2d(p[0], p[1], 1, 1)?;
                squared_error(g, y, 7)
            },
        ),
        (
            "conv2d_reduce",
            vec![vec![2, 2, 6, 6], vec![3, 2, 4, 4]],
            |g, p| {
                let y = g.conv2d(p[0], p[1], 2, 1)?;
                squared_error(g, y, 8)
            },
        ),
        ("avg_pool2d", vec![vec![2, 3, 5, 5]], |g, p| {
            let y = g.avg_pool2d(p[0], 3, 1, 1)?;
            squared_error(g, y, 9)
        }),
        ("global_avg_pool", vec![vec![2, 3, 4, 4]], |g, p| {
            let y = g.global_avg_pool(p[0])?;
            squared_error(g, y, 10)
        }),
        ("flatten", vec![vec![2, 3, 2, 2]], |g, p| {
            let y = g.flatten(p[0])?;
            squared_error(g, y, 11)
        }),
        ("sum", vec![vec![3, 4]], |g, p| {
            let y = g.scale(p[0], 0.5);
            let y = g.relu(y);
            Ok(g.sum(y))
        }),
        ("cross_entropy", vec![vec![4, 5]], |g, p| {
            g.cross_entropy(p[0], &[0, 3, 4, 1])
        }),
        ("mse_loss", vec![vec![3, 4], vec![3, 4]], |g, p| {
            g.mse_loss(p[0], p[1])
        }),
    ]
}

fn criterion_6() -> Outcome {
    let start = Instant::now();
    let mut worst: f64 = 0.0;
    for (name, shapes, build) in op_cases() {
        let shapes: Vec<&[usize]> = shapes.iter().map(Vec::as_slice).collect();
        let mut ps = raw_params(&shapes, rng::child_seed(0, name));
        let rep = grad_check(&mut ps, build, GRAD_TOL, None).map_err(|e| format!("{name}: {e}"))?;
        if !rep.passed() {
            return Err(format!("op {name}: max rel err {:.3e}", rep.max_rel_err()));
        }
        worst = worst.max(rep.max_rel_err());
    }
    let space = SpaceConfig::Cell(CellSpace::default());
    let shape = [1usize, 8, 8];
    for i in 0..20u64 {
        let genome = space.random(rng::indexed_seed(0, "gradcheck-genome", i));
        let net = space
            .instantiate(
                &genome,
                &shape,
                10,
                rng::indexed_seed(0, "gradcheck-net", i),
            )
            .map_err(|e| e.to_string())?;
        let x = random_tensor(&[2, 1, 8, 8], rng::indexed_seed(0, "gradcheck-x", i));
        let labels = [i as usize % 10, (i as usize + 3) % 10];
        let mut ps = net.params.clone();
        let rep = grad_check(
            &mut ps,
            |g, ids| {
                let xi = g.input(x.clone());
                let z = net.forward(g, ids, xi)?;
                g.cross_entropy(z, &labels)
            },
            GRAD_TOL,
            Some(24),
        )
        .map_err(|e| e.to_string())?;
        if !rep.passed() {
            return Err(format!(
                "network {}: max rel err {:.3e}",
                genome.key(),
                rep.max_rel_err()
            ));
        }
        worst = worst.max(rep.max_rel_err());
    }
    within_time(
        Duration::from_secs(60),
        start,
        format!(
            "{} ops and 20 networks, max rel err {worst:.2e}",
            op_cases().len()
        ),
    )
}

/// Definitional Pearson correlation of mid-ranks.
fn oracle_spearman(x: &[f64], y: &[f64]) -> Option<f64> {
    fn ranks(v: &[f64]) -> Vec<f64> {
        v.iter()
            .map(|&a| {
                let below = v.iter().filter(|&&b| b < a).count() as f64;
                let equal = v.iter().filter(|&&b| b == a).count() as f64;
                below + (equal + 1.0) / 2.0
            })
            .collect()
    }
    let (rx, ry) = (ranks(x), ranks(y));
    let n = x.len() as f64;
    let (mx, my) = (rx.iter().sum::<f64>() / n, ry.iter().sum::<f64>() / n);
    let sxy: f64 = rx.iter().zip(&ry).map(|(a, b)| (a - mx) * (b - my)).sum();
    let sxx: f64 = rx.iter().map(|a| (a - mx).powi(2)).sum();
    let syy: f64 = ry.iter().map(|b| (b - my).powi(2)).sum();
    (sxx > 0.0 && syy > 0.0).then(|| sxy / (sxx * syy).sqrt())
}

fn criterion_7() -> Outcome {
    let mut r = rng::rng_from_seed(rng::child_seed(0, "corr-vectors"));
    let mut max_dev: f64 = 0.0;
    for i in 0..100 {
        let n = r.random_range(2..=60);
        let levels = r.random_range(2..=8);
        let x: Vec<f64> = (0..n).map(|_| r.random_range(0..levels) as f64).collect();
        let y: Vec<f64> = (0..n)
            .map(|_| r.random_range(-1.0..1.0_f64).round() + r.random_range(0..3) as f64)
            .collect();
        let fast = kendall_tau(&x, &y).map_err(|e| e.to_string())?;
        let naive = kendall_tau_naive(&x, &y).map_err(|e| e.to_string())?;
        if fast != naive {
            return Err(format!("vector {i}: fast {fast:?} vs naive {naive:?}"));
        }
        let rho = spearman_rho(&x, &y).map_err(|e| e.to_string())?;
        match (rho, oracle_spearman(&x, &y)) {
            (Some(a), Some(b)) => max_dev = max_dev.max((a - b).abs()),
            (None, None) => {}
            (a, b) => return Err(format!("vector {i}: rho {a:?} vs oracle {b:?}")),
        }
    }
    if max_dev > 1e-12 {
        return Err(format!(
            "spearman deviates from mid-rank pearson by {max_dev:.2e}"
        ));
    }
    let (a, b) = ([1.0, 2.0, 3.0], [1.0, 3.0, 2.0]);
    let tau = kendall_tau(&a, &b).map_err(|e| e.to_string())?;
    let rho = spearman_rho(&a, &b).map_err(|e| e.to_string())?;
    let hand_ok = tau.is_some_and(|t| (t - 1.0 / 3.0).abs() < 1e-15)
        && rho.is_some_and(|p| (p - 0.5).abs() < 1e-15);
    ensure(
        hand_ok,
        format!("100 tied vectors exact, spearman dev {max_dev:.1e}, hand tau {tau:?} rho {rho:?}"),
    )
}

fn criterion_8() -> Outcome {
    let single =
        GradStats::from_records(&[vec![vec![1.0]], vec![vec![-3.0]]]).map_err(|e| e.to_string())?;
    let two = GradStats::from_records(&[
        vec![vec![1.0, 2.0], vec![1.0]],
        vec![vec![-3.0, -6.0], vec![3.0]],
    ])
    .map_err(|e| e.to_string())?;
    let zero = GradStats::from_records(&[
        vec![vec![1.0], vec![0.0, 0.0]],
        vec![vec![-3.0], vec![0.0, 0.0]],
    ])
    .map_err(|e| e.to_string())?;
    let same = GradStats::from_records(&[vec![vec![0.5, -0.25]], vec![vec![0.5, -0.25]]])
        .map_err(|e| e.to_string())?;
    let close = |a: f64, b: f64| (a - b).abs() <= 1e-12 * b.abs().max(1.0);
    let checks = [
        ("single", single.zico(), 2f64.ln()),
        ("single mean_abs", single.mean_abs[0][0], 2.0),
        ("single std_abs", single.std_abs[0][0], 1.0),
        ("mean only", single.zico_mean_only(), 2f64.ln()),
        ("std only", single.zico_std_only(), 0.0),
        ("two layers", two.zico(), 8f64.ln()),
        ("zero layer", zero.zico(), 2f64.ln() + 1e-12f64.ln()),
        ("identical batches", same.zico(), (0.75 / 1e-8f64).ln()),
    ];
    for (name, got, want) in checks {
        if !close(got, want) {
            return Err(format!("{name}: {got} vs {want}"));
        }
    }
    Ok(format!(
        "ln 2 = {:.6}, ln 8 = {:.6}, zero-variance clamps as stated",
        single.zico(),
        two.zico()
    ))
}

fn motif_batches(seed: u64, n: usize, size: usize) -> (Vec<Batch>, Vec<usize>, usize) {
    let (train, _) = BenchData::default().load(seed).unwrap();
    let mut b = train
        .batch_iter(size, rng::child_seed(seed, "proxy-batches"))
        .unwrap();
    b.truncate(n);
    (b, train.sample_shape().to_vec(), train.classes().unwrap())
}

fn criterion_9() -> Outcome {
    let start = Instant::now();
    let space = SpaceConfig::cell_two_op();
    let (batches, shape, classes) = motif_batches(0, 2, 64);
    let budget = u64::MAX;
    let mut summary = Vec::new();
    let mut ok = true;
    for proxy in [ProxyKind::Params, ProxyKind::Zico] {
        let mut hits = 0;
        for seed in 0..20u64 {
            let mut scorer = ProxyScorer::new(
                space.clone(),
                proxy,
                batches.clone(),
                shape.clone(),
                classes,
                seed,
            )
            .map_err(|e| e.to_string())?;
            let cfg = SearchConfig {
                steps: 2000,
                budget,
                population: 8,
                seed,
            };
            let out = evolve(&cfg, &mut scorer).map_err(|e| e.to_string())?;
            let (best, _) = brute_force_best(budget, &mut scorer).map_err(|e| e.to_string())?;
            hits += (out.best == best) as usize;
        }
        ok &= hits >= 19;
        summary.push(format!("{proxy} {hits}/20"));
    }
    let detail = format!(
        "evolve equals brute force: {} (need 19/20 each)",
        summary.join(", ")
    );
    if !ok {
        return Err(detail);
    }
    within_time(Duration::from_secs(300), start, detail)
}

fn criterion_10() -> Outcome {
    let start = Instant::now();
    let (_, res) = run_benchmark(BenchConfig::default()).map_err(|e| e.to_string())?;
    if res.records.len() > 128 {
        return Err(format!("{} genomes exceed 128", res.records.len()));
    }
    let tau = |p: ProxyKind| res.report.get(p).and_then(|r| r.kendall_tau);
    let complete = ProxyKind::ALL.iter().all(|&p| res.report.get(p).is_some());
    let zico = tau(ProxyKind::Zico);
    let params = tau(ProxyKind::Params);
    let sign = match (zico, params) {
        (Some(z), Some(p)) if z > p => "+",
        (Some(z), Some(p)) if z < p => "-",
        (Some(_), Some(_)) => "0",
        _ => "NA",
    };
    let detail = format!(
        "{} genomes, tau(zico) {:?}, tau(params) {:?}, sign of difference {sign}, all eight proxies reported: {complete}",
        res.records.len(),
        zico,
        params
    );
    if !(complete && zico.is_some_and(|z| z >= 0.3)) {
        return Err(detail);
    }
    within_time(Duration::from_secs(1800), start, detail)
}

fn bin() -> &'static str {
    env!("CARGO_BIN_EXE_zico")
}

fn run_cli(args: &[&str]) -> Result<Vec<u8>, String> {
    let out = Command::new(bin())
        .args(args)
        .output()
        .map_err(|e| e.to_string())?;
    if !out.status.success() {
        return Err(format!(
            "zico {} exited with {:?}: {}",
            args.join(" "),
            out.status.code(),
            String::from_utf8_lossy(&out.stderr)
        ));
    }
    Ok(out.stdout)
}

fn snapshot(dir: &Path) -> BTreeMap<String, Vec<u8>> {
    let mut m = BTreeMap::new();
    for e in fs::read_dir(dir).unwrap() {
        let e = e.unwrap();
        m.insert(
            e.file_name().to_string_lossy().into_owned(),
            fs::read(e.path()).unwrap(),
        );
    }
    m
}

fn criterion_11() -> Outcome {
    let tmp = tempfile::tempdir().map_err(|e| e.to_string())?;
    let inputs = tmp.path().join("inputs");
    fs::create_dir_all(&inputs).unwrap();
    let genome = inputs.join("genome.json");
    fs::write(&genome, "{\"space\":\"cell\",\"genes\":[3,1,2,3,4,0]}\n").unwrap();
    let train = inputs.join("train.json");
    fs::write(
        &train,
        r#"{"epochs": 1, "batch_size": 16, "lr": 0.05, "cosine": true, "momentum": 0.9, "weight_decay": 0.0, "clip": 1.0, "seed": 0}"#,
    )
    .unwrap();
    let g = genome.to_str().unwrap();
    let t = train.to_str().unwrap();
    let commands: Vec<(&str, Vec<&str>)> = vec![
        (
            "theorems",
            vec!["theorems", "--which", "all", "--trials", "20"],
        ),
        ("score", vec!["score", "--genome", g, "--proxy", "zico"]),
        (
            "search",
            vec![
                "search",
                "--proxy",
                "zico",
                "--steps",
                "100",
                "--space",
                "cell-two-op",
            ],
        ),
        ("bench", vec!["bench", "--sample", "6", "--train", t]),
        (
            "ablate-batches",
            vec!["ablate", "--axis", "batches", "--sample", "6", "--train", t],
        ),
        (
            "ablate-batchsize",
            vec![
                "ablate",
                "--axis",
                "batchsize",
                "--sample",
                "6",
                "--train",
                t,
            ],
        ),
    ];
    let mut files = 0;
    for (name, args) in &commands {
        let mut runs = Vec::new();
        for (k, jobs) in ["1", "3", "1"].iter().enumerate() {
            let out = tmp.path().join(format!("{name}-{k}"));
            let o = out.to_str().unwrap();
            let mut full = vec!["--seed", "7", "--jobs", jobs, "--out", o];
            full.extend(args.iter().copied());
            let stdout = run_cli(&full)?;
            let mut snap = if out.exists() {
                snapshot(&out)
            } else {
                BTreeMap::new()
            };
            snap.insert("<stdout>".into(), stdout);
            runs.push(snap);
        }
        if runs[0] != runs[1] || runs[0] != runs[2] {
            let differing: Vec<&String> = runs[0]
                .keys()
                .filter(|k| {
                    runs[1].get(*k) != runs[0].get(*k) || runs[2].get(*k) != runs[0].get(*k)
                })
                .collect();
            return Err(format!("{name}: outputs differ in {differing:?}"));
        }
        files += runs[0].len();
    }
    Ok(format!(
        "{} commands run three times with --jobs 1/3/1, {files} outputs byte-identical",
        commands.len()
    ))
}

fn criterion_12() -> Outcome {
    let mut checked = 0;
    let spaces = [
        (SpaceConfig::cell_two_op(), vec![1usize, 8, 8]),
        (SpaceConfig::Width(WidthSpace::default()), vec![1, 8, 8]),
        (SpaceConfig::Cell(CellSpace::default()), vec![3, 8, 8]),
    ];
    for (space, shape) in &spaces {
        for g in &space.enumerate().map_err(|e| e.to_string())? {
            let net = space
                .instantiate(g, shape, 10, 0)
                .map_err(|e| e.to_string())?;
            let counted: u64 = net
                .params
                .iter()
                .filter(|p| p.trainable)
                .map(|p| p.value.len() as u64)
                .sum();
            let measured = net.measured_macs().map_err(|e| e.to_string())?;
            if params_proxy(&net.spec) != counted || flops_proxy(&net.spec) != measured {
                return Err(format!(
                    "{}: params {} vs {counted}, flops {} vs {measured}",
                    g.key(),
                    params_proxy(&net.spec),
                    flops_proxy(&net.spec)
                ));
            }
            checked += 1;
        }
    }
    let conv = LayerDesc {
        name: "conv".into(),
        kind: LayerKind::Conv {
            in_ch: 3,
            out_ch: 8,
            k: 3,
        },
        stride: 1,
        pad: 1,
        out_hw: (8, 8),
    };
    let mut ps = ParamSet::new();
    ps.add_conv("conv", 3, 8, 3);
    let mut g = Graph::new();
    let x = g.input(Tensor::zeros(&[1, 3, 8, 8]));
    let k = g.param(Tensor::zeros(&[8, 3, 3, 3]));
    g.conv2d(x, k, 1, 1).map_err(|e| e.to_string())?;
    let hand = conv.params() == 224
        && ps.num_scalars() == 224
        && conv.macs() == 13824
        && g.macs() == 13824;
    ensure(
        hand,
        format!(
            "{checked} genomes match instantiate-and-count; conv 3->8 gives {} params, {} MACs",
            conv.params(),
            g.macs()
        ),
    )
}

fn criterion_1() -> Outcome {
    let start = Instant::now();
    let r = suite::linear_suite(1000, 0).map_err(|e| e.to_string())?;
    let n = r.trend.iter().chain(&r.wide).count();
    let holds = r.mean_bound_holds();
    let detail = format!("{holds}/{n} trials within the bound (eta in (0, 2/M) and (0, 2))");
    if holds != n || n < 1000 {
        return Err(detail);
    }
    within_time(Duration::from_secs(60), start, detail)
}

fn criterion_2() -> Outcome {
    let start = Instant::now();
    let r = suite::linear_suite(1000, 0).map_err(|e| e.to_string())?;
    let detail = format!(
        "{}/{} trials at eta = 1/M within the bound",
        r.spread_bound_holds(),
        r.inverse_m.len()
    );
    if r.spread_bound_holds() != r.inverse_m.len() || r.inverse_m.len() != 1000 {
        return Err(detail);
    }
    within_time(Duration::from_secs(60), start, detail)
}

fn criterion_3() -> Outcome {
    let start = Instant::now();
    let r = suite::linear_suite(1000, 0).map_err(|e| e.to_string())?;
    let detail = format!(
        "rho(sum mu^2) {:?}, rho(sum sigma^2) {:?}",
        r.rho_mu, r.rho_sigma
    );
    if !(r.rho_mu.is_some_and(|v| v <= -0.3) && r.rho_sigma.is_some_and(|v| v >= 0.3)) {
        return Err(detail);
    }
    within_time(Duration::from_secs(120), start, detail)
}

fn criterion_4() -> Outcome {
    let start = Instant::now();
    let r = suite::relu_suite(200, 0).map_err(|e| e.to_string())?;
    let detail = format!(
        "{} trials, rho train {:?}, rho test {:?}",
        r.trials.len(),
        r.rho_train,
        r.rho_test
    );
    if !(r.rho_train.is_some_and(|v| v > 0.3) && r.rho_test.is_some_and(|v| v > 0.3)) {
        return Err(detail);
    }
    within_time(Duration::from_secs(600), start, detail)
}

fn criterion_5() -> Outcome {
    let start = Instant::now();
    let r = suite::gram_suite(200, 0).map_err(|e| e.to_string())?;
    let s = &r.summary;
    let detail = format!(
        "{} trials, displacement {:.3}, lambda_min {:.3}, lambda_max {:.3} (floor 0.81)",
        s.trials, s.displacement, s.lambda_min, s.lambda_max
    );
    let ok = [s.displacement, s.lambda_min, s.lambda_max]
        .iter()
        .all(|&f| f >= 0.81)
        && s.trials == 200;
    if !ok {
        return Err(detail);
    }
    within_time(Duration::from_secs(600), start, detail)
}

fn main() {
    let criteria: [Criterion; 12] = [
        ("linear bound, eta in (0, 2)", criterion_1),
        ("linear bound at eta = 1/M", criterion_2),
        ("linear trends of gradient mean and spread", criterion_3),
        ("two-layer ReLU trends", criterion_4),
        ("Gram eigenvalue and displacement bounds", criterion_5),
        ("gradient correctness", criterion_6),
        ("correlation oracles", criterion_7),
        ("ZiCo unit values", criterion_8),
        ("search optimality", criterion_9),
        ("desk benchmark", criterion_10),
        ("CLI determinism", criterion_11),
        ("parameter and FLOPs counters", criterion_12),
    ];
    let mut failed = 0;
    for (i, (name, f)) in criteria.iter().enumerate() {
        let outcome = catch_unwind(AssertUnwindSafe(f)).unwrap_or_else(|p| {
            let msg = p
                .downcast_ref::<String>()
                .cloned()
                .or_else(|| p.downcast_ref::<&str>().map(|s| s.to_string()))
                .unwrap_or_default();
            Err(format!("panicked: {msg}"))
        });
        match outcome {
            Ok(d) => println!("PASS criterion {:>2} ({name}): {d}", i + 1),
            Err(d) => {
                failed += 1;
                println!("FAIL criterion {:>2} ({name}): {d}", i + 1);
            }
        }
    }
    println!(
        "acceptance: {}/{} criteria passed",
        criteria.len() - failed,
        criteria.len()
    );
    if failed > 0 {
        std::process::exit(1);
    }
}
