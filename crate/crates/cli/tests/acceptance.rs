//! Acceptance criteria. Prints one PASS/FAIL line per criterion and exits
//! non-zero if any fails.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, ExitCode};
use std::time::Instant;

use moe_routing::costmodel::{comm_transfer_time, comm_volume, Collective, CostProfile};
use moe_routing::flow::{feasibility_test, max_flow, FlowNetwork};
use moe_routing::placement::{eplb_place, eplb_replicate};
use moe_routing::routing::{route_bruteforce, route_optimal, search_space, BRUTEFORCE_LIMIT};
use moe_routing::seed::rng_for;
use moe_routing::workload::{sample_history, ZipfPopularity};
use moe_routing::{
    aggregate_loads, route, validate_assignment, ClusterSpec, ExpertLoadVector, ModelSpec, PlacementMap, RouterKind,
};
use rand::seq::SliceRandom;
use rand::Rng;
use rand_chacha::ChaCha8Rng;

type Outcome = Result<String, String>;
type Criterion = (&'static str, fn() -> Outcome);

fn main() -> ExitCode {
    let criteria: [Criterion; 9] = [
        ("optimal matches brute force", c1_oracle_equivalence),
        ("router dominance and validity", c2_dominance),
        ("routing quality on Zipf batches", c3_routing_quality),
        ("decode latency across ratios", c4_ratio_sweep),
        ("communication fixture", c5_comm_fixture),
        ("max-flow oracle", c6_max_flow),
        ("feasibility monotone", c7_feasibility),
        ("Pareto sweep", c8_pareto),
        ("determinism", c9_determinism),
    ];
    let mut failed = 0;
    for (i, (name, f)) in criteria.iter().enumerate() {
        let start = Instant::now();
        let outcome = f();
        let secs = start.elapsed().as_secs_f64();
        match outcome {
            Ok(detail) => println!("criterion {} ({name}): PASS [{detail}; {secs:.2} s]", i + 1),
            Err(detail) => {
                failed += 1;
                println!("criterion {} ({name}): FAIL [{detail}; {secs:.2} s]", i + 1);
            }
        }
    }
    println!("{} of {} criteria passed", criteria.len() - failed, criteria.len());
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}

fn check(ok: bool, detail: String) -> Outcome {
    if ok {
        Ok(detail)
    } else {
        Err(detail)
    }
}

fn rng(seed: u64, label: &str) -> ChaCha8Rng {
    rng_for(seed, label)
}

fn small_instance(r: &mut ChaCha8Rng) -> (ExpertLoadVector, PlacementMap) {
    let g = r.gen_range(1..=4);
    let n = r.gen_range(1..=12);
    let gpus: Vec<usize> = (0..g).collect();
    let sets: Vec<Vec<usize>> = (0..n)
        .map(|_| {
            let c = r.gen_range(1..=3.min(g));
            gpus.choose_multiple(r, c).copied().collect()
        })
        .collect();
    let mut ids: Vec<usize> = (0..n).collect();
    ids.shuffle(r);
    let mut loads = vec![0u64; n];
    for &i in &ids[..r.gen_range(0..=10.min(n))] {
        loads[i] = r.gen_range(1..20);
    }
    (ExpertLoadVector(loads), PlacementMap::from_replica_sets(g, sets).unwrap())
}

fn c1_oracle_equivalence() -> Outcome {
    let start = Instant::now();
    let mut mismatches = 0;
    for seed in 0..1000 {
        let (loads, placement) = small_instance(&mut rng(seed, "c1"));
        let opt = route_optimal(&loads, &placement).map_err(|e| e.to_string())?;
        let bf = route_bruteforce(&loads, &placement).map_err(|e| e.to_string())?;
        mismatches += usize::from(opt.lambda != bf.lambda);
    }
    let secs = start.elapsed().as_secs_f64();
    check(mismatches == 0 && secs < 10.0, format!("1000 instances, {mismatches} mismatches, {secs:.2} s of 10 s"))
}

/// A random model with N <= 128, G <= 8 and a slot count between N and 1.5 N
/// that G divides, placed by EPLB or at random, plus one Zipf batch.
fn large_instance(r: &mut ChaCha8Rng, eplb: bool) -> (ExpertLoadVector, PlacementMap) {
    loop {
        let g = r.gen_range(1..=8);
        let n = r.gen_range(1..=128);
        let hi = (n * 3 / 2).min(n * g);
        let choices: Vec<usize> = (n..=hi).filter(|s| s % g == 0).collect();
        let Some(&slots) = choices.choose(r) else { continue };
        let pop = ZipfPopularity::new(n, r.gen_range(0.0..2.0), r.gen()).unwrap();
        let k = r.gen_range(1..=n.min(8));
        let placement = if eplb {
            let history = sample_history(&pop, k, r.gen_range(0..2000), r.gen());
            let plan = eplb_replicate(&history, slots as f64 / n as f64, g).unwrap();
            eplb_place(&plan, &history, g).unwrap()
        } else {
            let mut counts = vec![1usize; n];
            let mut extra = slots - n;
            while extra > 0 {
                let i = r.gen_range(0..n);
                if counts[i] < g {
                    counts[i] += 1;
                    extra -= 1;
                }
            }
            let gpus: Vec<usize> = (0..g).collect();
            let sets = counts.iter().map(|&c| gpus.choose_multiple(r, c).copied().collect()).collect();
            PlacementMap::from_replica_sets(g, sets).unwrap()
        };
        let batch = pop.batch(k, g, r.gen_range(0..=64), r);
        let mut loads = ExpertLoadVector::zeros(n);
        for t in &batch.tokens {
            for &e in &t.experts {
                loads.0[e] += 1;
            }
        }
        return (loads, placement);
    }
}

fn c2_dominance() -> Outcome {
    let mut order = 0;
    let mut sparse = 0;
    let mut invalid = 0;
    let mut bruteforce_checked = 0;
    for seed in 0..10_000u64 {
        let (loads, placement) = large_instance(&mut rng(seed, "c2"), seed % 2 == 0);
        let mut lambda = BTreeMap::new();
        for kind in RouterKind::ALL {
            if kind == RouterKind::Bruteforce {
                if search_space(&loads, &placement) > BRUTEFORCE_LIMIT {
                    continue;
                }
                bruteforce_checked += 1;
            }
            let a = route(kind, &loads, &placement, seed).map_err(|e| format!("seed {seed} {kind}: {e}"))?;
            let report = validate_assignment(&a, &placement, &loads, kind.single_replica())
                .map_err(|e| format!("seed {seed} {kind}: {e}"))?;
            invalid += usize::from(!report.is_valid());
            lambda.insert(kind.as_str(), a.lambda);
        }
        let (o, m, e) = (lambda["optimal"], lambda["metro"], lambda["eplb"]);
        if !(o <= m && m <= e) {
            order += 1;
            // Fewer tokens than replicas leaves some EPLB replicas idle.
            sparse += usize::from(loads.active_experts().iter().any(|&i| loads[i] < placement.replica_count(i) as u64));
        }
    }
    check(
        order == 0 && invalid == 0,
        format!(
            "10000 instances, {order} ordering violations ({sparse} with an expert holding fewer tokens \
             than replicas), {invalid} invalid assignments, \
             brute force on {bruteforce_checked}"
        ),
    )
}

fn c3_routing_quality() -> Outcome {
    let start = Instant::now();
    let (n, g, k) = (128, 8, 8);
    let pop = ZipfPopularity::new(n, 1.2, 3).unwrap();
    let history = sample_history(&pop, k, 100_000, 4);
    let plan = eplb_replicate(&history, 1.25, g).unwrap();
    let placement = eplb_place(&plan, &history, g).unwrap();
    let model = ModelSpec { num_experts: n, top_k: k, ..toy_model() };
    let mut r = rng(5, "c3");
    let (mut metro_opt, mut eplb_metro, mut eplb_opt) = (0.0, 0.0, 0.0);
    for _ in 0..500 {
        let batch = pop.batch(k, g, 256 / g, &mut r);
        let loads = aggregate_loads(&batch, &model).map_err(|e| e.to_string())?;
        let l = |kind| route(kind, &loads, &placement, 0).map(|a| a.lambda as f64).map_err(|e| e.to_string());
        let (e, m, o) = (l(RouterKind::Eplb)?, l(RouterKind::Metro)?, l(RouterKind::Optimal)?);
        metro_opt += m / o;
        eplb_metro += e / m;
        eplb_opt += e / o;
    }
    let (metro_opt, eplb_metro, eplb_opt) = (metro_opt / 500.0, eplb_metro / 500.0, eplb_opt / 500.0);
    let secs = start.elapsed().as_secs_f64();
    check(
        metro_opt <= 1.15 && eplb_metro >= 1.20 && secs < 60.0,
        format!(
            "mean metro/optimal {metro_opt:.4} (<= 1.15), mean eplb/metro {eplb_metro:.4} (>= 1.20), \
             mean eplb/optimal {eplb_opt:.4}, {secs:.2} s of 60 s"
        ),
    )
}

fn toy_model() -> ModelSpec {
    ModelSpec {
        num_experts: 8,
        top_k: 1,
        hidden_dim: 4096,
        dtype_bytes: 2,
        expert_weight_bytes: 1e7,
        dense_weight_bytes: 0.0,
        flops_per_token_per_expert: 2e7,
        num_moe_layers: 1,
    }
}

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_moe-routing"))
}

fn run_cli(args: &[&str], config: &Path, out: &Path) -> Result<String, String> {
    let o = bin().args(args).arg("--config").arg(config).arg("--out").arg(out).output().map_err(|e| e.to_string())?;
    if !o.status.success() {
        return Err(format!("{args:?} failed: {}", String::from_utf8_lossy(&o.stderr).trim()));
    }
    Ok(String::from_utf8_lossy(&o.stdout).into_owned())
}

struct Row {
    batch: usize,
    tp: usize,
    ep: usize,
    router: String,
    tpot: f64,
    throughput: f64,
}

fn read_rows(path: &Path) -> Result<Vec<Row>, String> {
    let text = fs::read_to_string(path).map_err(|e| format!("{}: {e}", path.display()))?;
    text.lines()
        .skip(1)
        .map(|l| {
            let f: Vec<&str> = l.split(',').collect();
            let num = |i: usize| f[i].parse::<f64>().map_err(|e| format!("{l}: {e}"));
            Ok(Row {
                batch: num(0)? as usize,
                tp: num(1)? as usize,
                ep: num(2)? as usize,
                router: f[4].to_string(),
                tpot: num(9)?,
                throughput: num(11)?,
            })
        })
        .collect()
}

fn c4_ratio_sweep() -> Outcome {
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let config = dir.path().join("decode.toml");
    fs::write(
        &config,
        r#"
seed = 7
preset = "qwen3-30b-a100"

[placement]
history_tokens = 100000

[workload]
skew = 1.2
decode_passes = 64
decode_tokens_per_gpu = 32

[simulate]
ratios = [1.0, 1.125, 1.25, 1.5]
routers = ["eplb", "metro"]
"#,
    )
    .map_err(|e| e.to_string())?;
    run_cli(&["simulate"], &config, dir.path())?;
    let rows = read_rows(&dir.path().join("results.csv"))?;
    let tpot = |router: &str| -> Vec<f64> { rows.iter().filter(|r| r.router == router).map(|r| r.tpot).collect() };
    let (eplb, metro) = (tpot("eplb"), tpot("metro"));
    if eplb.len() != 4 || metro.len() != 4 {
        return Err(format!("expected 4 ratios per router, got {} and {}", eplb.len(), metro.len()));
    }
    let monotone = eplb.windows(2).all(|w| w[1] >= w[0]);
    let eplb_rise = eplb[3] / eplb[0] - 1.0;
    let metro_rise = metro[3] / metro[0] - 1.0;
    let ms = |v: &[f64]| v.iter().map(|t| format!("{:.3}", t * 1e3)).collect::<Vec<_>>().join("/");
    check(
        monotone && eplb_rise >= 0.05 && metro_rise <= 0.01,
        format!(
            "eplb tpot {} ms (monotone {monotone}, +{:.1}% >= 5%), metro tpot {} ms (+{:.1}% <= 1%)",
            ms(&eplb),
            eplb_rise * 100.0,
            ms(&metro),
            metro_rise * 100.0
        ),
    )
}

fn c5_comm_fixture() -> Outcome {
    let cluster = ClusterSpec {
        num_gpus: 8,
        hbm_bandwidth: 2e12,
        peak_flops: 1e15,
        link_bandwidth: 600e9,
        collective_launch_overhead: 0.0,
        link_base_latency: 0.0,
    };
    let p = CostProfile::new(cluster, toy_model());
    let a2a = comm_volume(Collective::AllToAll, 32, &p);
    let a2a_t = comm_transfer_time(Collective::AllToAll, 32, &p) * 1e6;
    let ag_mib = comm_volume(Collective::AllGather, 32, &p) / (1024.0 * 1024.0);
    let ag_t = comm_transfer_time(Collective::AllGather, 32, &p) * 1e6;
    check(
        a2a == 262_144.0
            && (0.35..=0.55).contains(&a2a_t)
            && (1.75..=2.0).contains(&ag_mib)
            && (2.3..=3.7).contains(&ag_t),
        format!("all_to_all {a2a} B in {a2a_t:.3} us, all_gather {ag_mib:.3} MiB in {ag_t:.3} us"),
    )
}

/// Ford-Fulkerson with breadth-first augmenting paths on a capacity matrix.
fn edmonds_karp(n: usize, edges: &[(usize, usize, u64)], s: usize, t: usize) -> u64 {
    let mut cap = vec![vec![0u64; n]; n];
    for &(u, v, c) in edges {
        cap[u][v] += c;
    }
    let mut total = 0;
    loop {
        let mut parent = vec![usize::MAX; n];
        parent[s] = s;
        let mut queue = std::collections::VecDeque::from([s]);
        while let Some(u) = queue.pop_front() {
            for v in 0..n {
                if cap[u][v] > 0 && parent[v] == usize::MAX {
                    parent[v] = u;
                    queue.push_back(v);
                }
            }
        }
        if parent[t] == usize::MAX {
            return total;
        }
        let mut push = u64::MAX;
        let mut v = t;
        while v != s {
            push = push.min(cap[parent[v]][v]);
            v = parent[v];
        }
        let mut v = t;
        while v != s {
            let u = parent[v];
            cap[u][v] -= push;
            cap[v][u] += push;
            v = u;
        }
        total += push;
    }
}

fn c6_max_flow() -> Outcome {
    let mut mismatches = 0;
    for seed in 0..200 {
        let mut r = rng(seed, "c6");
        let n = r.gen_range(2..=24);
        let edges: Vec<(usize, usize, u64)> = (0..r.gen_range(0..=n * 4))
            .filter_map(|_| {
                let (u, v) = (r.gen_range(0..n), r.gen_range(0..n));
                (u != v).then(|| (u, v, r.gen_range(0..=9)))
            })
            .collect();
        let mut net = FlowNetwork::new(n, 0, n - 1).map_err(|e| e.to_string())?;
        for &(u, v, c) in &edges {
            net.add_edge(u, v, c).map_err(|e| e.to_string())?;
        }
        mismatches += usize::from(max_flow(&net).value != edmonds_karp(n, &edges, 0, n - 1));
    }
    check(mismatches == 0, format!("200 networks, {mismatches} mismatches"))
}

fn c7_feasibility() -> Outcome {
    let mut flips = 0;
    for seed in 0..500 {
        let (loads, placement) = if seed % 2 == 0 {
            small_instance(&mut rng(seed, "c7"))
        } else {
            large_instance(&mut rng(seed, "c7"), true)
        };
        let active = loads.active_experts();
        let feasible: Vec<bool> =
            (0..=active.len() as u64 + 1).map(|l| feasibility_test(&active, &placement, l).feasible).collect();
        flips += feasible.windows(2).filter(|w| w[0] && !w[1]).count();
    }
    check(flips == 0, format!("500 instances, {flips} feasible-then-infeasible flips"))
}

fn c8_pareto() -> Outcome {
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let config = dir.path().join("sweep.toml");
    fs::write(
        &config,
        r#"
seed = 3
preset = "deepseek-v3-h100"

[workload]
skew = 1.2

[sweep]
batches = [64, 128, 256, 512, 1024]
ratios = [1.0, 1.125, 1.25, 1.5]
routers = ["eplb", "metro", "metro-parallel", "optimal"]
steps = 16
"#,
    )
    .map_err(|e| e.to_string())?;
    run_cli(&["sweep"], &config, dir.path())?;
    let rows = read_rows(&dir.path().join("sweep.csv"))?;
    let eplb: Vec<&Row> = rows.iter().filter(|r| r.router == "eplb").collect();
    let metro: Vec<&Row> = rows.iter().filter(|r| r.router == "metro").collect();
    let uncovered =
        eplb.iter().filter(|e| !metro.iter().any(|m| m.tpot <= e.tpot && m.throughput >= e.throughput)).count();

    let num_gpus = rows.iter().map(|r| r.tp * r.ep).max().unwrap_or(0);
    let mut full_tp: BTreeMap<usize, Vec<&Row>> = BTreeMap::new();
    for r in rows.iter().filter(|r| r.tp == num_gpus) {
        full_tp.entry(r.batch).or_default().push(r);
    }
    let diverging = full_tp
        .values()
        .filter(|pts| pts.iter().any(|p| p.tpot != pts[0].tpot || p.throughput != pts[0].throughput))
        .count();
    let routers_at_full_tp = full_tp.values().map(Vec::len).min().unwrap_or(0);
    check(
        !eplb.is_empty() && uncovered == 0 && !full_tp.is_empty() && diverging == 0 && routers_at_full_tp == 4,
        format!(
            "{} points, {uncovered} of {} eplb points not matched by metro, \
             {diverging} of {} tp={num_gpus} batches with diverging routers",
            rows.len(),
            eplb.len(),
            full_tp.len()
        ),
    )
}

fn snapshot(dir: &Path) -> Result<BTreeMap<PathBuf, Vec<u8>>, String> {
    let mut out = BTreeMap::new();
    for entry in fs::read_dir(dir).map_err(|e| e.to_string())? {
        let path = entry.map_err(|e| e.to_string())?.path();
        if path.is_file() {
            let bytes = fs::read(&path).map_err(|e| e.to_string())?;
            out.insert(PathBuf::from(path.file_name().unwrap()), bytes);
        }
    }
    Ok(out)
}

fn c9_determinism() -> Outcome {
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let config = dir.path().join("all.toml");
    fs::write(
        &config,
        r#"
seed = 21
preset = "qwen3-30b-a100"

[placement]
ratio = 1.25

[workload]
skew = 1.1
decode_passes = 4
decode_tokens_per_gpu = 16
prefill_passes = 1
prefill_tokens_per_gpu = 64
layers_per_pass = 2
interleave = 4.0

[simulate]
ratios = [1.0, 1.25, 1.5]
routers = ["eplb", "metro", "metro-parallel", "optimal"]

[sweep]
batches = [64, 256]
ratios = [1.0, 1.5]
routers = ["eplb", "metro", "metro-parallel"]
steps = 4

[compare]
routers = ["eplb", "metro", "metro-parallel", "optimal"]
"#,
    )
    .map_err(|e| e.to_string())?;
    let commands: [&[&str]; 7] = [
        &["gen-trace"],
        &["place"],
        &["route", "--batch", "1"],
        &["route", "--batch", "2", "--router", "metro-parallel"],
        &["simulate"],
        &["sweep"],
        &["compare"],
    ];
    let mut compared = 0;
    for cmd in commands {
        let (a, b) = (dir.path().join("a"), dir.path().join("b"));
        let out_a = run_cli(cmd, &config, &a)?;
        let out_b = run_cli(cmd, &config, &b)?;
        let (sa, sb) = (snapshot(&a)?, snapshot(&b)?);
        if sa != sb || out_a.replace(a.to_str().unwrap(), "") != out_b.replace(b.to_str().unwrap(), "") {
            return Err(format!("{cmd:?} differs between runs"));
        }
        compared += sa.len();
        fs::remove_dir_all(&a).map_err(|e| e.to_string())?;
        fs::remove_dir_all(&b).map_err(|e| e.to_string())?;
    }
    Ok(format!("{} commands rerun, {compared} output files byte-identical", commands.len()))
}
