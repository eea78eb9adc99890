//! Acceptance suite. Each criterion runs under a shared lock so that its
//! wall-clock budget is measured without competing criteria, and prints one
//! `criterion N: PASS|FAIL` line straight to stderr (visible without
//! `--nocapture`).

use std::collections::BinaryHeap;
use std::cmp::Reverse;
use std::io::Write;
use std::process::Command;
use std::sync::{Arc, Mutex};
use std::time::{Duration, Instant};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use pursuit_core::datastore::{
    aggregate_detection_rate, build_filter_dataset, collect_dataset, PolicyFactory, Split, SplitConfig,
};
use pursuit_core::evader::{astar_plan, PlanGrid};
use pursuit_core::filter::{
    build_filter_input, disk_probability, metric_ade, metric_desv, metric_ll, motion_extrapolate, nll_loss,
    DetectionSlot, FilterArch, FilterInput, FilterKind, FilterModel, FilterTrainConfig, MixturePrediction,
    MotionState, TrainingPair, DESV_IDEAL, SIGMA_MIN,
};
use pursuit_core::geom::Vec2;
use pursuit_core::maddpg::{evaluate_policies, train_marl, AugmentMode, Batch, MarlPolicy, PolicyMeta, PolicySet, TrainConfig, Transition};
use pursuit_core::ndgrad::{grad_check_steps, Activation, Coverage, DenseArray, Graph, Mlp, NdError, ParamSet, Var};
use pursuit_core::policies::{HeuristicConfig, HeuristicPolicy, PursuitPolicy, RandomPolicy};
use pursuit_core::world::{generate_terrain, Detection, EnvConfig, Scenario};
use pursuit_core::Error;

static SERIAL: Mutex<()> = Mutex::new(());

fn report(n: usize, pass: bool, elapsed: Duration, detail: &str) {
    let verdict = if pass { "PASS" } else { "FAIL" };
    let _ = writeln!(
        std::io::stderr(),
        "criterion {n:>2}: {verdict}  ({:.1} s)  {detail}",
        elapsed.as_secs_f64()
    );
}

fn run(n: usize, budget: Duration, body: impl FnOnce() -> (bool, String)) {
    let _lock = SERIAL.lock().unwrap_or_else(|e| e.into_inner());
    let t0 = Instant::now();
    let (ok, detail) = body();
    let elapsed = t0.elapsed();
    let in_time = elapsed <= budget;
    let detail = if in_time { detail } else { format!("{detail}; over the {} s budget", budget.as_secs()) };
    report(n, ok && in_time, elapsed, &detail);
    assert!(ok && in_time, "criterion {n}: {detail}");
}

fn desk() -> Arc<Scenario> {
    Scenario::build(EnvConfig::default()).unwrap()
}

fn heuristic() -> Box<PolicyFactory<'static>> {
    Box::new(|| Box::new(HeuristicPolicy::new(HeuristicConfig::default())) as Box<dyn PursuitPolicy>)
}

fn random() -> Box<PolicyFactory<'static>> {
    Box::new(|| Box::new(RandomPolicy::new()) as Box<dyn PursuitPolicy>)
}

fn nd(e: Error) -> NdError {
    match e {
        Error::Nd(e) => e,
        e => panic!("{e}"),
    }
}

fn median(mut v: Vec<f64>) -> f64 {
    v.sort_by(f64::total_cmp);
    v[v.len() / 2]
}

fn random_input(rng: &mut impl Rng) -> FilterInput {
    let slot = |rng: &mut ChaCha8Rng| DetectionSlot {
        position: Vec2::new(rng.random(), rng.random()),
        velocity: Vec2::new(rng.random_range(-0.05..0.05), rng.random_range(-0.05..0.05)),
        staleness: rng.random(),
    };
    let mut r = ChaCha8Rng::seed_from_u64(rng.random());
    FilterInput {
        start: Vec2::new(r.random(), r.random()),
        t_norm: r.random(),
        slots: [slot(&mut r), slot(&mut r)],
    }
}

fn random_matrix(rng: &mut impl Rng, rows: usize, cols: usize) -> DenseArray {
    DenseArray::matrix(rows, cols, (0..rows * cols).map(|_| rng.random_range(-1.0..1.0)).collect()).unwrap()
}

/// Loss `Σ out ⊙ w` over a fixed random projection of a network's output.
fn projected<'a>(net: &'a Mlp, x: &'a DenseArray, w: &'a DenseArray) -> impl Fn(&mut Graph, &ParamSet) -> Result<Var, NdError> + 'a {
    move |g, set| {
        let xi = g.constant(x.clone());
        let out = net.forward(g, set, xi)?;
        let wv = g.constant(w.clone());
        let prod = g.mul(out, wv)?;
        Ok(g.sum(prod))
    }
}

/// Central-difference steps; each entry counts its best agreement.
const STEPS: [f64; 3] = [1e-5, 3e-6, 1e-6];
const COVER: Coverage = Coverage::Sampled { per_param: 48, seed: 17 };

#[test]
fn c01_autodiff_matches_finite_differences() {
    run(1, Duration::from_secs(60), || {
        let mut rng = ChaCha8Rng::seed_from_u64(101);
        let mut worst: Vec<(String, f64)> = Vec::new();
        let arch = FilterArch::default();
        let relu = Activation::Relu;
        let subnets: [(&str, Vec<usize>, Option<Activation>); 4] = [
            ("prior encoder", vec![3, 64, 64, arch.embed], None),
            ("motion branch", vec![2, arch.motion_hidden, arch.embed], None),
            ("confidence net", vec![13, arch.confidence_hidden, 1], Some(Activation::Sigmoid)),
            ("decoder", vec![arch.embed, arch.decoder_hidden, arch.head_width()], None),
        ];
        for (name, sizes, out) in subnets {
            let mut set = ParamSet::new();
            let net = Mlp::new(&mut set, name, &sizes, relu, out, &mut rng);
            let x = random_matrix(&mut rng, 6, sizes[0]);
            let w = random_matrix(&mut rng, 6, *sizes.last().unwrap());
            let err = grad_check_steps(&mut set, &STEPS, COVER, projected(&net, &x, &w)).unwrap();
            worst.push((name.into(), err));
        }

        let inputs: Vec<_> = (0..6).map(|_| random_input(&mut rng)).collect();
        let targets: Vec<_> = (0..6).map(|_| Vec2::new(rng.random(), rng.random())).collect();
        for (name, arch) in [("FC filter", FilterArch::fc(300)), ("end-to-end PMC NLL", FilterArch::pmc(300))] {
            let mut model = FilterModel::new(arch, 3).unwrap();
            let probe = model.clone();
            let err = grad_check_steps(model.params_mut(), &STEPS, COVER, |g, set| {
                probe.nll_graph_with(g, set, &inputs, &targets)
            })
            .unwrap();
            worst.push((name.into(), err));
        }

        let scenario = desk();
        let obs_dim = scenario.base_obs_dim() + AugmentMode::Filter.extra_dim(arch.components);
        let n = scenario.learnable().len();
        let tc = TrainConfig::default();
        let meta = PolicyMeta {
            mode: AugmentMode::Filter,
            filter: None,
            obs_dim,
            max_speeds: (0..n).map(|i| scenario.max_speed(i)).collect(),
            actor_hidden: tc.actor_hidden.clone(),
            critic_hidden: tc.critic_hidden.clone(),
        };
        let p = PolicySet::new(meta, 5).unwrap();
        let ts: Vec<Transition> = (0..8)
            .map(|_| Transition {
                obs: (0..n * obs_dim).map(|_| rng.random_range(-1.0..1.0)).collect(),
                actions: (0..2 * n).map(|_| rng.random_range(-1.0..1.0)).collect(),
                rewards: (0..n).map(|_| rng.random_range(-1.0..1.0)).collect(),
                next_obs: (0..n * obs_dim).map(|_| rng.random_range(-1.0..1.0)).collect(),
                done: rng.random_bool(0.2),
            })
            .collect();
        let refs: Vec<&Transition> = ts.iter().collect();
        let batch = Batch::from_transitions(&refs).unwrap();
        let y: Vec<f64> = (0..8).map(|_| rng.random_range(-2.0..2.0)).collect();
        let mut critic = p.critics[0].clone();
        let err = grad_check_steps(&mut critic, &STEPS, COVER, |g, set| p.critic_loss(g, set, &batch, &y).map_err(nd)).unwrap();
        worst.push(("critic".into(), err));
        let mut actor = p.actors[1].clone();
        let err = grad_check_steps(&mut actor, &STEPS, COVER, |g, set| {
            p.actor_loss(g, 1, set, &p.critics[1], &batch).map_err(nd)
        })
        .unwrap();
        worst.push(("actor".into(), err));

        let max = worst.iter().map(|w| w.1).fold(0.0, f64::max);
        let detail = worst.iter().map(|(n, e)| format!("{n} {e:.1e}")).collect::<Vec<_>>().join(", ");
        (max < 1e-4, format!("max rel err {max:.2e} < 1e-4 [{detail}]"))
    });
}

#[test]
fn c02_mixture_outputs_are_valid() {
    run(2, Duration::from_secs(60), || {
        let mut rng = ChaCha8Rng::seed_from_u64(202);
        let (mut worst_sum, mut min_sigma, mut finite, mut count) = (0.0f64, f64::INFINITY, true, 0);
        for kind in [FilterKind::Pmc, FilterKind::Fc] {
            for model_seed in 0..10 {
                let model = FilterModel::new(FilterArch { kind, ..FilterArch::default() }, model_seed).unwrap();
                let inputs: Vec<_> = (0..1000).map(|_| random_input(&mut rng)).collect();
                for p in model.predict(&inputs).unwrap() {
                    count += 1;
                    worst_sum = worst_sum.max((p.weights.iter().sum::<f64>() - 1.0).abs());
                    for (m, s) in p.means.iter().zip(&p.scales) {
                        min_sigma = min_sigma.min(s.x).min(s.y);
                        finite &= m.x.is_finite() && m.y.is_finite() && s.x.is_finite() && s.y.is_finite();
                    }
                    finite &= p.weights.iter().all(|w| w.is_finite());
                }
            }
        }
        let ok = count == 20_000 && worst_sum <= 1e-6 && min_sigma >= SIGMA_MIN && finite;
        (ok, format!("{count} predictions, max |Σλ−1| {worst_sum:.1e}, min σ {min_sigma:.2e}, finite {finite}"))
    });
}

#[test]
fn c03_analytic_filter_oracles() {
    run(3, Duration::from_secs(60), || {
        let y = Vec2::new(0.4, 0.7);
        let nll = nll_loss(&MixturePrediction::single(y, Vec2::new(1.0, 1.0)), y);
        let nll_err = (nll - (2.0 * std::f64::consts::PI).ln()).abs();

        let delta = 0.05;
        let ideal = 1.0 - (-0.5f64).exp();
        let disk = disk_probability(&MixturePrediction::single(y, Vec2::new(delta, delta)), y, delta).unwrap();
        let disk_err = (disk - ideal).abs();

        // Well-separated components, so responsibility picks the generating one.
        let mut rng = ChaCha8Rng::seed_from_u64(303);
        let std = Normal::new(0.0, 1.0).unwrap();
        let mut preds = Vec::with_capacity(100_000);
        let mut targets = Vec::with_capacity(100_000);
        let centers = [Vec2::new(0.2, 0.2), Vec2::new(0.8, 0.3), Vec2::new(0.5, 0.8)];
        for _ in 0..100_000 {
            let k = rng.random_range(1..=3);
            let raw: Vec<f64> = (0..k).map(|_| rng.random_range(0.2..1.0)).collect();
            let total: f64 = raw.iter().sum();
            let p = MixturePrediction {
                weights: raw.iter().map(|w| w / total).collect(),
                means: centers[..k].iter().map(|&c| c + Vec2::new(rng.random_range(-0.05..0.05), rng.random_range(-0.05..0.05))).collect(),
                scales: (0..k).map(|_| Vec2::new(rng.random_range(0.005..0.03), rng.random_range(0.005..0.03))).collect(),
            };
            let u: f64 = rng.random();
            let mut j = 0;
            let mut acc = p.weights[0];
            while u > acc && j + 1 < k {
                j += 1;
                acc += p.weights[j];
            }
            targets.push(Vec2::new(
                p.means[j].x + p.scales[j].x * std.sample(&mut rng),
                p.means[j].y + p.scales[j].y * std.sample(&mut rng),
            ));
            preds.push(p);
        }
        let desv = metric_desv(&preds, &targets).unwrap();

        let ok = nll_err <= 1e-9 && disk_err <= 1e-3 && desv.abs() <= 0.01 && (DESV_IDEAL - ideal).abs() < 1e-15;
        (ok, format!("NLL−log 2π {nll_err:.1e}, disk P {disk:.5} vs {ideal:.5}, DESV {desv:+.4}"))
    });
}

#[test]
fn c04_motion_model_is_exact() {
    run(4, Duration::from_secs(30), || {
        let t_max = 300;
        let mut rng = ChaCha8Rng::seed_from_u64(404);
        let (mut worst_inside, mut worst_clamped, mut checked) = (0.0f64, 0.0f64, 0usize);
        for _ in 0..200 {
            let x0 = Vec2::new(rng.random(), rng.random());
            let u = Vec2::new(rng.random_range(-0.004..0.004), rng.random_range(-0.004..0.004));
            let truth = |k: usize| x0 + u * k as f64;
            let k_hat = rng.random_range(0..t_max);
            let det = Detection {
                k: k_hat,
                position: truth(k_hat),
                velocity: u,
                detector: 0,
            };
            let m = MotionState {
                position: det.position,
                velocity: det.velocity,
                k: k_hat,
            };
            for k in k_hat..=t_max {
                let want = truth(k);
                let got = motion_extrapolate(&m, k).unwrap();
                let via_input = build_filter_input(std::slice::from_ref(&det), k, x0, t_max).motion_estimate(t_max);
                let inside = (0.0..=1.0).contains(&want.x) && (0.0..=1.0).contains(&want.y);
                let expect = if inside { want } else { Vec2::new(want.x.clamp(0.0, 1.0), want.y.clamp(0.0, 1.0)) };
                let err = (got - expect).norm().max((via_input - expect).norm());
                if inside {
                    worst_inside = worst_inside.max(err);
                } else {
                    worst_clamped = worst_clamped.max(err);
                }
                checked += 1;
            }
        }
        let ok = worst_inside <= 1e-12 && worst_clamped <= 1e-12;
        (ok, format!("{checked} (k̂, k) pairs, max error {worst_inside:.1e} inside, {worst_clamped:.1e} clamped"))
    });
}

/// Plain Dijkstra over the planner's lattice.
fn dijkstra(grid: &PlanGrid<'_>, start: usize, goal: usize) -> u64 {
    let mut dist = vec![u64::MAX; grid.node_count()];
    let mut heap = BinaryHeap::new();
    dist[start] = 0;
    heap.push(Reverse((0u64, start)));
    while let Some(Reverse((d, v))) = heap.pop() {
        if v == goal {
            return d;
        }
        if d > dist[v] {
            continue;
        }
        for (w, c) in grid.neighbors(v) {
            if d + c < dist[w] {
                dist[w] = d + c;
                heap.push(Reverse((d + c, w)));
            }
        }
    }
    u64::MAX
}

#[test]
fn c05_planner_matches_dijkstra() {
    run(5, Duration::from_secs(60), || {
        let mut rng = ChaCha8Rng::seed_from_u64(505);
        let (mut agree, mut valid, n) = (0, 0, 150);
        for i in 0..n {
            let terrain = generate_terrain(1000 + i, 32, rng.random_range(0.1..0.7)).unwrap();
            let start = Vec2::new(rng.random(), rng.random());
            let goal = Vec2::new(rng.random(), rng.random());
            let w_v = rng.random_range(0.0..4.0);
            let plan = astar_plan(&terrain, start, goal, w_v).unwrap();
            let grid = PlanGrid::new(&terrain, w_v).unwrap();
            let oracle = dijkstra(&grid, terrain.cell_index(start), terrain.cell_index(goal));
            agree += usize::from(plan.cost_units == oracle);
            let walked: u64 = plan.cells.windows(2).map(|w| grid.edge_cost(w[0], w[1])).sum();
            let adjacent = plan.cells.windows(2).all(|w| grid.neighbors(w[0]).any(|(c, _)| c == w[1]));
            valid += usize::from(walked == plan.cost_units && adjacent && plan.cells[0] == terrain.cell_index(start));
        }
        (agree == n as usize && valid == n as usize, format!("{agree}/{n} costs equal, {valid}/{n} paths consistent"))
    });
}

fn filter_pairs(records: &[pursuit_core::datastore::TrajectoryRecord], split: &SplitConfig, which: Split) -> Vec<TrainingPair> {
    build_filter_dataset(records, 300, split).unwrap().split(which)
}

#[test]
fn c06_pmc_filter_beats_fc_on_both_datasets() {
    run(6, Duration::from_secs(20 * 60), || {
        let scenario = desk();
        let mut lines = Vec::new();
        let mut ok = true;
        for (label, factory) in [("heuristic", heuristic()), ("random", random())] {
            let (mut ll, mut ade) = ([vec![], vec![]], [vec![], vec![]]);
            for seed in 0..3u64 {
                let train_eps = collect_dataset(&scenario, &*factory, 60, 100 + seed).unwrap();
                let eval_eps = collect_dataset(&scenario, &*factory, 40, 200 + seed).unwrap();
                let split = SplitConfig {
                    train: 0.875,
                    val: 0.125,
                    eval: 0.0,
                    seed,
                };
                let (train, val) = (filter_pairs(&train_eps, &split, Split::Train), filter_pairs(&train_eps, &split, Split::Val));
                let eval = filter_pairs(&eval_eps, &SplitConfig::all(Split::Eval), Split::Eval);
                let inputs: Vec<_> = eval.iter().map(|p| p.input).collect();
                let ys: Vec<_> = eval.iter().map(|p| p.target).collect();
                for (m, arch) in [FilterArch::pmc(300), FilterArch::fc(300)].into_iter().enumerate() {
                    let cfg = FilterTrainConfig { seed, ..FilterTrainConfig::default() };
                    let model = pursuit_core::filter::train_filter(arch, &train, &val, &cfg).unwrap().model;
                    let preds = model.predict(&inputs).unwrap();
                    ll[m].push(metric_ll(&preds, &ys).unwrap());
                    ade[m].push(metric_ade(&preds, &ys).unwrap());
                }
            }
            let (lp, lf) = (median(ll[0].clone()), median(ll[1].clone()));
            let (ap, af) = (median(ade[0].clone()), median(ade[1].clone()));
            ok &= lp >= lf && ap <= af;
            lines.push(format!("{label}: LL PMC {lp:.3} vs FC {lf:.3}, ADE PMC {ap:.4} vs FC {af:.4}"));
        }
        (ok, format!("medians over 3 seeds; {}", lines.join("; ")))
    });
}

#[test]
fn c07_heuristic_collection_detects_more() {
    run(7, Duration::from_secs(5 * 60), || {
        let scenario = desk();
        let h = aggregate_detection_rate(&collect_dataset(&scenario, &*heuristic(), 100, 700).unwrap());
        let r = aggregate_detection_rate(&collect_dataset(&scenario, &*random(), 100, 701).unwrap());
        (h > r, format!("100 episodes each: heuristic {h:.4} vs random {r:.4}"))
    });
}

#[test]
fn c08_c09_filter_augmented_marl_and_frozen_filter() {
    let _lock = SERIAL.lock().unwrap_or_else(|e| e.into_inner());
    let t0 = Instant::now();
    let scenario = desk();
    let (mut with_filter, mut base) = (Vec::new(), Vec::new());
    let mut checksums_equal = true;
    let mut ck_detail = Vec::new();
    for seed in 0..3u64 {
        let data = collect_dataset(&scenario, &*heuristic(), 60, 100 + seed).unwrap();
        let split = SplitConfig {
            train: 0.875,
            val: 0.125,
            eval: 0.0,
            seed,
        };
        let (train, val) = (filter_pairs(&data, &split, Split::Train), filter_pairs(&data, &split, Split::Val));
        let cfg = FilterTrainConfig { seed, ..FilterTrainConfig::default() };
        let filter = pursuit_core::filter::train_filter(FilterArch::pmc(300), &train, &val, &cfg).unwrap().model;
        let before = filter.params().checksum();
        let tc = TrainConfig { seed, ..TrainConfig::default() };
        let filter = Arc::new(filter);
        for mode in [AugmentMode::Filter, AugmentMode::Base] {
            let run = train_marl(&scenario, Some(&filter), mode, &tc).unwrap();
            let policy = MarlPolicy::new(Arc::new(run.policies), Some(filter.clone())).unwrap();
            let factory = move || Box::new(policy.clone()) as Box<dyn PursuitPolicy>;
            let rate = evaluate_policies(&scenario, &factory, 50, 999 + seed).unwrap().detection_rate.mean;
            if mode == AugmentMode::Filter {
                let after = filter.params().checksum();
                let reported = run.filter_checksum.clone().unwrap_or_default();
                checksums_equal &= before == after && reported == before;
                ck_detail.push(before[..12].to_string());
                with_filter.push(rate);
            } else {
                base.push(rate);
            }
        }
    }
    let elapsed = t0.elapsed();
    let (mf, mb) = (median(with_filter.clone()), median(base.clone()));
    let ok8 = mf >= 1.5 * mb && elapsed <= Duration::from_secs(60 * 60);
    report(
        8,
        ok8,
        elapsed,
        &format!("median detection rate PMC+MADDPG {mf:.4} vs BaseObs {mb:.4} (ratio {:.2}, need ≥ 1.5); per seed {with_filter:.3?} vs {base:.3?}", mf / mb.max(1e-12)),
    );
    report(9, checksums_equal, elapsed, &format!("filter checksums unchanged by training: {}", ck_detail.join(", ")));
    assert!(checksums_equal, "criterion 9: filter parameters changed during MARL training");
    assert!(ok8, "criterion 8: PMC+MADDPG {mf:.4} vs BaseObs {mb:.4}");
}

fn cli(dir: &std::path::Path, args: &[&str]) {
    let out = Command::new(env!("CARGO_BIN_EXE_pursuit-track"))
        .current_dir(dir)
        .env("PURSUIT_TRACK_THREADS", "2")
        .args(["--out", "out", "--seed", "4"])
        .args(args)
        .output()
        .unwrap();
    assert!(out.status.success(), "{args:?}: {}", String::from_utf8_lossy(&out.stderr));
}

fn tree(dir: &std::path::Path) -> Vec<(String, Vec<u8>)> {
    let mut files = Vec::new();
    let mut stack = vec![dir.to_path_buf()];
    while let Some(d) = stack.pop() {
        for e in std::fs::read_dir(&d).unwrap() {
            let p = e.unwrap().path();
            if p.is_dir() {
                stack.push(p);
            } else {
                files.push((p.strip_prefix(dir).unwrap().display().to_string(), std::fs::read(&p).unwrap()));
            }
        }
    }
    files.sort();
    files
}

#[test]
fn c10_pipeline_is_byte_reproducible() {
    run(10, Duration::from_secs(10 * 60), || {
        let runs: Vec<_> = (0..2)
            .map(|_| {
                let dir = tempfile::tempdir().unwrap();
                let p = dir.path();
                cli(p, &["gen-world"]);
                cli(p, &["collect", "--policy", "heuristic", "--episodes", "12"]);
                cli(p, &["collect", "--policy", "random", "--episodes", "12"]);
                cli(p, &["train-filter", "--model", "pmc", "--dataset", "out/data/heuristic", "--epochs", "5"]);
                cli(p, &["train-filter", "--model", "fc", "--dataset", "out/data/heuristic", "--epochs", "5"]);
                cli(
                    p,
                    &[
                        "eval-filter", "--checkpoint", "out/filters/pmc_4.ndg", "--checkpoint", "out/filters/fc_4.ndg",
                        "--dataset", "out/data/random", "--split", "all", "--skip-runtime",
                    ],
                );
                cli(p, &["train-marl", "--mode", "filter", "--filter", "out/filters/pmc_4.ndg", "--episodes", "4"]);
                cli(p, &["train-marl", "--mode", "detections", "--episodes", "4"]);
                cli(
                    p,
                    &[
                        "eval-marl", "--policy", "heuristic", "--policy", "search", "--policy", "out/policies/pmc_4.ndg",
                        "--policy", "out/policies/detections_4.ndg", "--filter", "out/filters/pmc_4.ndg", "--episodes", "4",
                    ],
                );
                (tree(&p.join("out")), dir)
            })
            .collect();
        let (a, b) = (&runs[0].0, &runs[1].0);
        let names_equal = a.iter().map(|f| &f.0).eq(b.iter().map(|f| &f.0));
        let differing: Vec<&str> = a.iter().zip(b).filter(|(x, y)| x != y).map(|(x, _)| x.0.as_str()).collect();
        let ok = names_equal && differing.is_empty() && a.len() >= 20;
        (ok, format!("{} files over 9 stages, byte-identical: {ok}{}", a.len(), if differing.is_empty() { String::new() } else { format!(", differing {differing:?}") }))
    });
}

#[test]
fn c11_heuristic_policy_beats_random() {
    run(11, Duration::from_secs(5 * 60), || {
        let scenario = desk();
        let h = evaluate_policies(&scenario, &*heuristic(), 50, 1100).unwrap().detection_rate;
        let r = evaluate_policies(&scenario, &*random(), 50, 1100).unwrap().detection_rate;
        (h.mean > r.mean, format!("50 episodes: heuristic {:.4} ± {:.4} vs random {:.4} ± {:.4}", h.mean, h.std, r.mean, r.std))
    });
}
