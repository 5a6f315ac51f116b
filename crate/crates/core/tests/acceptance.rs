//! Acceptance run: every headline property checked at its stated tolerance,
//! one PASS/FAIL line per criterion. Runs as a plain binary so the lines are
//! always printed.

use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, ExitCode};
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Arc;
use std::time::{Duration, Instant};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use airnav::dataset::{self, Dataset, DatasetConfig};
use airnav::harness::bridge::{decode, encode, BridgeMessage, ObserveMessage};
use airnav::harness::{
    run_suite, Agent, AgentFailure, ExpertReplayAgent, GreedyOracleAgent, PolicyAgent, RandomAgent,
    RunConfig, SuiteOutput,
};
use airnav::memory::{pis_offsets, select_history, MemoryKind, MemoryPolicy, Observation};
use airnav::metrics::{EpisodeResult, EvalReport};
use airnav::policy::{FeatureVector, PolicyParams, RolloutSettings, Sampling, StepRecord, FEATURE_DIM, NUM_ACTIONS};
use airnav::reward::{
    distance_reward, format_reward, step_reward, stop_reward, total_reward, yaw_reward, RewardBreakdown,
    RewardConfig, SubgoalProgress,
};
use airnav::synth::{chunk_expert, Difficulty, Episode, NodeChain, SynthConfig};
use airnav::train::{
    group_advantages, surrogate_gradient, surrogate_objective, train_on, training_suite, GroupSample,
    RolloutRecord, Stage, TrainConfig, TrainingSuite,
};
use airnav::world::{Action, ActionSequence, Heading, Kinematics, Landmark, Position, SensorFrame, UavState, VisibleLandmark, WorldConfig};

const SUITE_SEED: u64 = 7;

/// Failed checks collected for one criterion.
#[derive(Default)]
struct Checks(Vec<String>);

impl Checks {
    fn check(&mut self, ok: bool, what: impl FnOnce() -> String) {
        if !ok {
            self.0.push(what());
        }
    }

    fn close(&mut self, got: f64, want: f64, tol: f64, what: &str) {
        self.check((got - want).abs() <= tol, || format!("{what}: got {got}, want {want} ± {tol}"));
    }

    fn within(&mut self, started: Instant, limit: Duration) {
        let took = started.elapsed();
        self.check(took < limit, || format!("took {took:.1?}, limit {limit:?}"));
    }
}

struct Outcome {
    name: &'static str,
    summary: String,
    failures: Vec<String>,
    took: Duration,
}

fn lattice(label: &str, report: &EvalReport, results: &[EpisodeResult], c: &mut Checks) {
    let o = &report.overall;
    c.check(o.osr >= o.sr, || format!("{label}: OSR {} < SR {}", o.osr, o.sr));
    c.check(o.spl <= o.sr + 1e-9, || format!("{label}: SPL {} > SR {}", o.spl, o.sr));
    let bad = results.iter().filter(|r| r.success && !r.oracle_success).count();
    c.check(bad == 0, || format!("{label}: {bad} successes without oracle success"));
}

fn suite_dataset() -> Dataset {
    dataset::generate(&WorldConfig::default(), &SynthConfig::default(), &DatasetConfig::default(), SUITE_SEED)
        .expect("suite dataset")
}

fn run_builtin(ds: &Dataset, make: fn() -> Box<dyn Agent>, seed: u64) -> SuiteOutput {
    let cfg = RunConfig { seed, ..RunConfig::default() };
    run_suite(|| Ok(make()), &ds.episodes, ds.worlds(), &cfg).expect("suite runs")
}

// ---------------------------------------------------------------- 1

fn straight_episode() -> Episode {
    let lm = |id, y: f64| Landmark {
        id,
        position: Position::new(0.0, y),
        radius: 1.0,
        label: "tower".into(),
    };
    let mut expert = vec![Action::MoveForward; 40];
    expert.push(Action::Stop);
    Episode {
        id: "straight".into(),
        seed: 0,
        world: "w".into(),
        split: String::new(),
        chain: NodeChain {
            start: UavState::default(),
            intermediate: vec![lm(1, 100.0)],
            target: lm(2, 200.0),
        },
        expert_chunks: chunk_expert(&expert),
        expert,
        node_states: vec![UavState::new(0.0, 100.0, 0.0).unwrap(), UavState::new(0.0, 200.0, 0.0).unwrap()],
        instruction: "Head toward the tower, then fly to the tower and stop.".into(),
        difficulty: Difficulty::Medium,
        path_length_m: 200.0,
    }
}

fn criterion_1() -> Outcome {
    let started = Instant::now();
    let mut c = Checks::default();
    let cfg = RewardConfig::default();
    let seq = |a: &[Action]| ActionSequence::new(a.to_vec()).unwrap();
    let h = |d: f64| Heading::new(d).unwrap();
    use Action::{MoveForward as F, Stop as S, TurnLeft as L, TurnRight as R};

    c.close(distance_reward(100.0, 80.0, cfg.epsilon).unwrap(), 0.2, 1e-6, "r_dis(100,80)");
    c.close(distance_reward(50.0, 60.0, cfg.epsilon).unwrap(), 0.0, 1e-6, "r_dis(50,60)");
    c.close(distance_reward(0.0, 0.0, cfg.epsilon).unwrap(), 0.0, 1e-6, "r_dis(0,0)");
    c.check(distance_reward(-1.0, 0.0, cfg.epsilon).is_err(), || "negative distance accepted".into());

    c.close(yaw_reward(h(0.0), h(0.0), 60.0), 1.0, 1e-6, "r_yaw(0)");
    c.close(yaw_reward(h(30.0), h(0.0), 60.0), 0.5, 1e-6, "r_yaw(30)");
    c.close(yaw_reward(h(90.0), h(0.0), 60.0), 0.0, 1e-6, "r_yaw(90)");

    c.close(stop_reward(&seq(&[F, S]), &seq(&[F, F, S]), cfg.alpha, cfg.beta), 1.0, 1e-6, "r_stop both");
    c.close(stop_reward(&seq(&[F, F]), &seq(&[F, R]), cfg.alpha, cfg.beta), 0.1, 1e-6, "r_stop neither");
    c.close(stop_reward(&seq(&[F, S]), &seq(&[F, F]), cfg.alpha, cfg.beta), 0.0, 1e-6, "r_stop mismatch");

    let (r, parsed) = format_reward(r#"["MOVE_FORWARD","STOP"]"#, cfg.gamma);
    c.close(r, 0.1, 1e-6, "r_format well-formed");
    c.check(parsed == Some(seq(&[F, S])), || "well-formed output not parsed".into());
    c.check(format_reward(r#"["FLY_UP"]"#, cfg.gamma) == (0.0, None), || "unknown token accepted".into());
    let nine = serde_json::to_string(&vec!["MOVE_FORWARD"; 9]).unwrap();
    c.check(format_reward(&nine, cfg.gamma) == (0.0, None), || "nine actions accepted".into());

    let b = |d, y, s, f| RewardBreakdown { r_dis: d, r_yaw: y, r_stop: s, r_format: f, r_all: 0.0 };
    c.close(total_reward(&b(0.2, 0.5, 1.0, 0.1), &cfg), 1.8, 1e-6, "r_all linear");
    c.close(total_reward(&b(0.0, 0.0, 0.0, 0.0), &cfg), 0.0, 1e-6, "r_all zeros");
    c.close(total_reward(&b(1.0, 1.0, 1.0, 0.1), &cfg), 3.1, 1e-6, "r_all maximum");
    c.close(cfg.max_total(), 3.1, 1e-12, "max_total");

    let ep = straight_episode();
    let kin = Kinematics::default();
    let start = UavState::default();
    let fresh = SubgoalProgress::new();
    let stop_gt = seq(&[F, F, S]);
    let composed = step_reward(&ep, &kin, start, fresh, r#"["MOVE_FORWARD","MOVE_FORWARD","MOVE_FORWARD","MOVE_FORWARD","STOP"]"#, &stop_gt, &cfg).unwrap();
    c.close(composed.r_all, 2.3, 1e-6, "step_reward composition");
    let garbage = step_reward(&ep, &kin, start, fresh, "go north", &stop_gt, &cfg).unwrap();
    c.check(garbage == RewardBreakdown::default(), || format!("malformed output scored {garbage:?}"));
    // Six left turns face south, then 10 m away from the subgoal.
    let away = step_reward(&ep, &kin, start, fresh, &seq(&[L, L, L, L, L, L, F, F]).to_output_text(), &seq(&[F, F]), &cfg).unwrap();
    let want_yaw = (1.0 - 180.0 / cfg.tau_yaw).max(0.0);
    c.close(away.r_dis, 0.0, 1e-6, "divergent r_dis");
    c.close(away.r_yaw, want_yaw, 1e-6, "divergent r_yaw");
    c.close(away.r_all, want_yaw + 0.1 + 0.1, 1e-6, "divergent r_all");

    // Bounds and an independent re-derivation on random inputs.
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let mut worst = 0.0f64;
    for _ in 0..100_000 {
        let d_t: f64 = rng.random_range(0.0..500.0);
        let d_t1: f64 = rng.random_range(0.0..500.0);
        let r_dis = distance_reward(d_t, d_t1, cfg.epsilon).unwrap();
        let want = ((d_t - d_t1) / (d_t + cfg.epsilon)).max(0.0);
        worst = worst.max((r_dis - want).abs());
        c.check((0.0..=1.0).contains(&r_dis), || format!("r_dis {r_dis} out of [0,1]"));

        let (a, s) = (rng.random_range(-179.999..180.0), rng.random_range(-179.999..180.0));
        let r_yaw = yaw_reward(h(a), h(s), cfg.tau_yaw);
        let mut delta: f64 = (a - s).rem_euclid(360.0);
        if delta > 180.0 {
            delta = 360.0 - delta;
        }
        worst = worst.max((r_yaw - (1.0 - delta / cfg.tau_yaw).max(0.0)).abs());
        c.check((0.0..=1.0).contains(&r_yaw), || format!("r_yaw {r_yaw} out of [0,1]"));
        if c.0.len() > 5 {
            break;
        }
    }
    c.check(worst <= 1e-6, || format!("random inputs deviate from closed form by {worst}"));
    c.within(started, Duration::from_secs(5));
    Outcome {
        name: "reward formulas",
        summary: format!("examples exact, 1e5 random inputs in bounds, max dev {worst:.1e}"),
        failures: c.0,
        took: started.elapsed(),
    }
}

// ---------------------------------------------------------------- 2

fn criterion_2() -> Outcome {
    let started = Instant::now();
    let mut c = Checks::default();
    c.check(pis_offsets(4) == [1, 2, 4, 7], || format!("pis_offsets(4) = {:?}", pis_offsets(4)));
    c.check(pis_offsets(5) == [1, 2, 4, 7, 11], || format!("pis_offsets(5) = {:?}", pis_offsets(5)));
    c.check(pis_offsets(0).is_empty(), || "pis_offsets(0) not empty".into());
    let pis = |n| MemoryPolicy::new(MemoryKind::ProgressiveInterval, n);
    c.check(select_history(pis(4), 12) == [11, 10, 8, 5], || "PIS t=12".into());
    c.check(select_history(pis(4), 3) == [2, 1], || "PIS t=3".into());
    c.check(select_history(MemoryPolicy::new(MemoryKind::LastK, 4), 10) == [9, 8, 7, 6], || "LastK t=10".into());

    let mut cases = 0;
    for n in 0..=8usize {
        // Offsets recomputed from the recursion s_i = s_{i-1} + i.
        let offsets: Vec<usize> = (0..n).scan(1usize, |s, i| { *s += i; Some(*s) }).collect();
        let mut prev_len = 0;
        for t in 1..=100usize {
            cases += 1;
            let want: Vec<usize> = offsets.iter().filter(|&&s| s < t).map(|&s| t - s).collect();
            let got = select_history(pis(n), t);
            c.check(got == want, || format!("PIS N={n} t={t}: {got:?} != {want:?}"));
            c.check(got.len() >= prev_len, || format!("PIS N={n}: size shrank at t={t}"));
            prev_len = got.len();
            for kind in MemoryKind::ALL {
                let sel = select_history(MemoryPolicy::new(kind, n), t);
                let valid = sel.iter().all(|&i| i >= 1 && i < t) && sel.windows(2).all(|w| w[0] > w[1]);
                c.check(valid, || format!("{kind} N={n} t={t}: invalid {sel:?}"));
                let cap = if kind == MemoryKind::NoHistory { 0 } else { n };
                c.check(sel.len() <= cap, || format!("{kind} N={n} t={t}: {} frames", sel.len()));
            }
        }
    }
    c.within(started, Duration::from_secs(1));
    Outcome {
        name: "progressive interval sampling",
        summary: format!("{cases} (t, N) cases across four policies"),
        failures: c.0,
        took: started.elapsed(),
    }
}

// ---------------------------------------------------------------- 3 to 5

fn criterion_3(ds: &Dataset, expert: &SuiteOutput, took: Duration) -> Outcome {
    let started = Instant::now();
    let mut c = Checks::default();
    let o = &expert.report.overall;
    c.check(o.count == 500, || format!("{} episodes", o.count));
    c.check(o.sr == 100.0, || format!("expert SR {}", o.sr));
    c.check(o.spl >= 95.0, || format!("expert SPL {}", o.spl));
    for ep in &ds.episodes {
        let world = ds.worlds().iter().find(|w| w.id == ep.world).unwrap();
        let mut s = ep.start();
        for &a in &ep.expert {
            s = world.kinematics.apply(s, a);
        }
        let ne = s.position.distance_to(&ep.target());
        c.check(ne < 20.0, || format!("{}: expert ends {ne:.2} m from target", ep.id));
    }
    let bad = expert.results.iter().filter(|r| r.ne >= 20.0).count();
    c.check(bad == 0, || format!("{bad} replays outside 20 m"));
    let took = took + started.elapsed();
    c.check(took < Duration::from_secs(30), || format!("took {took:.1?}"));
    Outcome {
        name: "expert soundness",
        summary: format!("SR {:.1}, SPL {:.2} over {} episodes", o.sr, o.spl, o.count),
        failures: c.0,
        took,
    }
}

fn criterion_4(oracle: &SuiteOutput, random: &SuiteOutput, took: Duration) -> Outcome {
    let mut c = Checks::default();
    let (o, r) = (&oracle.report.overall, &random.report.overall);
    c.check(o.sr >= 95.0, || format!("oracle SR {}", o.sr));
    c.check(r.sr <= 5.0, || format!("random SR {}", r.sr));
    c.check(o.count == 500 && r.count == 500, || "suite size".into());
    c.check(took < Duration::from_secs(120), || format!("took {took:.1?}"));
    Outcome {
        name: "oracle vs random separation",
        summary: format!("oracle SR {:.1}, random SR {:.1}", o.sr, r.sr),
        failures: c.0,
        took,
    }
}

fn criterion_5(runs: &[(String, EvalReport, Vec<EpisodeResult>)]) -> Outcome {
    let started = Instant::now();
    let mut c = Checks::default();
    for (label, report, results) in runs {
        lattice(label, report, results, &mut c);
    }
    Outcome {
        name: "metric lattice",
        summary: format!("OSR >= SR >= SPL and success => oracle success on {} runs", runs.len()),
        failures: c.0,
        took: started.elapsed(),
    }
}

// ---------------------------------------------------------------- 6

fn oracle_objective(flat: &[f64], group: &GroupSample, adv: &[f64], clip: f64) -> f64 {
    let logp = |f: &FeatureVector, a: Action| {
        let z: Vec<f64> = (0..NUM_ACTIONS)
            .map(|k| flat[NUM_ACTIONS * FEATURE_DIM + k] + (0..FEATURE_DIM).map(|j| flat[k * FEATURE_DIM + j] * f.0[j]).sum::<f64>())
            .collect();
        let m = z.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        z[a.index()] - (m + z.iter().map(|v| (v - m).exp()).sum::<f64>().ln())
    };
    let mut total = 0.0;
    for (r, &a) in group.rollouts.iter().zip(adv) {
        let mut s = 0.0;
        for st in &r.steps {
            let ratio = (logp(&st.features, st.action) - st.logprob).exp();
            s += (ratio * a).min(ratio.clamp(1.0 - clip, 1.0 + clip) * a);
        }
        total += s / r.steps.len() as f64;
    }
    total / group.rollouts.len() as f64
}

fn criterion_6() -> Outcome {
    let started = Instant::now();
    let mut c = Checks::default();
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    let (clip, h) = (0.2, 1e-5);
    let mut worst = 0.0f64;
    let mut clipped = 0usize;
    for _ in 0..100 {
        let params = PolicyParams::random(FEATURE_DIM, rng.random_range(0.1..2.0), &mut rng);
        let g = rng.random_range(2..=8);
        let rollouts = (0..g)
            .map(|_| {
                let steps = (0..rng.random_range(1..=8))
                    .map(|_| {
                        let mut f = [0.0; FEATURE_DIM];
                        f.iter_mut().for_each(|v| *v = rng.random_range(-1.0..1.0));
                        let action = Action::ALL[rng.random_range(0..NUM_ACTIONS)];
                        // Stale log-probs push some ratios past the clip range;
                        // stay off the kinks where the objective is not smooth.
                        let ratio: f64 = loop {
                            let r: f64 = rng.random_range(0.6..1.5);
                            if (r - 0.8).abs() > 1e-3 && (r - 1.2).abs() > 1e-3 {
                                break r;
                            }
                        };
                        if !(0.8..=1.2).contains(&ratio) {
                            clipped += 1;
                        }
                        StepRecord { features: FeatureVector(f), action, logprob: params.log_prob(&f, action) - ratio.ln() }
                    })
                    .collect();
                RolloutRecord { steps, reward: rng.random_range(0.0..3.1) }
            })
            .collect();
        let group = GroupSample { rollouts };
        let adv = group_advantages(&group.rewards());
        let analytic = surrogate_gradient(&params, &group, &adv, clip);
        let flat = params.to_flat();
        let direct = surrogate_objective(&params, &group, &adv, clip);
        c.close(direct, oracle_objective(&flat, &group, &adv, clip), 1e-12, "objective");
        for i in 0..flat.len() {
            let (mut up, mut down) = (flat.clone(), flat.clone());
            up[i] += h;
            down[i] -= h;
            let fd = (oracle_objective(&up, &group, &adv, clip) - oracle_objective(&down, &group, &adv, clip)) / (2.0 * h);
            let rel = (fd - analytic[i]).abs() / fd.abs().max(analytic[i].abs()).max(1e-6);
            worst = worst.max(rel);
        }

        let rewards = group.rewards();
        c.close(adv.iter().sum::<f64>(), 0.0, 1e-6, "advantage sum");
        let shift = rng.random_range(-50.0..50.0);
        let shifted = group_advantages(&rewards.iter().map(|r| r + shift).collect::<Vec<_>>());
        let dev = adv.iter().zip(&shifted).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
        c.check(dev < 1e-6, || format!("shift {shift} moved advantages by {dev}"));
    }
    c.check(worst < 1e-4, || format!("max relative gradient error {worst:.2e}"));
    c.check(clipped > 0, || "no clipped terms exercised".into());
    c.within(started, Duration::from_secs(30));
    Outcome {
        name: "gradient fidelity",
        summary: format!("100 policies, max rel err {worst:.2e}, {clipped} clipped terms"),
        failures: c.0,
        took: started.elapsed(),
    }
}

// ---------------------------------------------------------------- 7

struct Arm {
    label: String,
    report: EvalReport,
    results: Vec<EpisodeResult>,
}

fn heldout_eval(suite: &TrainingSuite, make: &(dyn Fn() -> Box<dyn Agent> + Sync), label: String, cfg: &RunConfig) -> Arm {
    let out = run_suite(|| Ok(make()), &suite.heldout, &suite.world, cfg).expect("held-out run");
    Arm { label, report: out.report, results: out.results }
}

fn criterion_7() -> (Outcome, Vec<Arm>) {
    let started = Instant::now();
    let mut c = Checks::default();
    let base = TrainConfig::default();
    let suite = training_suite(&WorldConfig::default(), &SynthConfig::default(), &base).expect("training suite");
    c.check(suite.train.len() == 200, || format!("{} training episodes", suite.train.len()));
    let easy_medium = suite.train.iter().chain(&suite.heldout).all(|e| e.difficulty != Difficulty::Hard);
    c.check(easy_medium, || "hard episode in training suite".into());

    let reward = RewardConfig::default();
    let settings = RolloutSettings {
        kinematics: suite.world.kinematics,
        node_threshold_m: reward.node_threshold_m,
        d_norm_m: base.d_norm_m,
        ..Default::default()
    };
    let per_seed: Vec<(u64, Vec<Arm>)> = std::thread::scope(|s| {
        let handles: Vec<_> = [1u64, 2, 3]
            .into_iter()
            .map(|seed| {
                let (suite, base, reward) = (&suite, &base, &reward);
                s.spawn(move || {
                    let cfg = TrainConfig { seed, ..base.clone() };
                    let run = RunConfig { seed, max_decision_steps: cfg.max_decision_steps, parallelism: 1, ..RunConfig::default() };
                    let mut arms = Vec::new();
                    for stage in [Stage::BcOnly, Stage::GrpoOnly, Stage::BcThenGrpo] {
                        let out = train_on(suite, reward, &run, &cfg, stage).expect("training");
                        assert_eq!(out.curve.last().map(|p| p.update), Some(if stage == Stage::BcOnly { 0 } else { cfg.updates }));
                        let params = out.params.clone();
                        let arm = heldout_eval(
                            suite,
                            &move || Box::new(PolicyAgent::new(params.clone(), Sampling::Greedy, settings)) as Box<dyn Agent>,
                            format!("seed {seed} {stage}"),
                            &run,
                        );
                        assert_eq!(arm.report.overall, out.heldout.overall, "held-out evaluation is reproducible");
                        arms.push(arm);
                    }
                    arms.push(heldout_eval(suite, &|| Box::new(RandomAgent::new()) as Box<dyn Agent>, format!("seed {seed} random"), &run));
                    (seed, arms)
                })
            })
            .collect();
        handles.into_iter().map(|h| h.join().expect("training thread")).collect()
    });

    let mut lines = Vec::new();
    let mut all = Vec::new();
    for (seed, arms) in per_seed {
        let sr: Vec<f64> = arms.iter().map(|a| a.report.overall.sr).collect();
        let (bc, grpo, both, random) = (sr[0], sr[1], sr[2], sr[3]);
        c.check(both >= bc, || format!("seed {seed}: bc+grpo {both} < bc {bc}"));
        c.check(bc >= random, || format!("seed {seed}: bc {bc} < random {random}"));
        c.check(both >= grpo, || format!("seed {seed}: bc+grpo {both} < grpo {grpo}"));
        c.check(both >= 70.0, || format!("seed {seed}: bc+grpo SR {both} < 70"));
        lines.push(format!("s{seed} bc {bc:.0}/grpo {grpo:.0}/bc+grpo {both:.0}/random {random:.0}"));
        all.extend(arms);
    }
    c.within(started, Duration::from_secs(15 * 60));
    let outcome = Outcome {
        name: "two-stage training trend",
        summary: format!("held-out SR {}", lines.join(", ")),
        failures: c.0,
        took: started.elapsed(),
    };
    (outcome, all)
}

// ---------------------------------------------------------------- 8

/// Expert replay that also checks the history frames it is shown.
struct HistoryProbe {
    inner: ExpertReplayAgent,
    policy: MemoryPolicy,
    mismatches: Arc<AtomicUsize>,
}

impl Agent for HistoryProbe {
    fn name(&self) -> String {
        "history-probe".into()
    }

    fn begin_episode(&mut self, episode: &Episode, world: &airnav::world::WorldMap, seed: u64) -> airnav::Result<()> {
        self.inner.begin_episode(episode, world, seed)
    }

    fn decide(&mut self, obs: &Observation) -> Result<String, AgentFailure> {
        let mut want = select_history(self.policy, obs.step);
        want.reverse();
        let got: Vec<usize> = obs.history_frames.iter().map(|f| f.step).collect();
        if got != want || obs.current_frame.step != obs.step {
            self.mismatches.fetch_add(1, Ordering::SeqCst);
        }
        self.inner.decide(obs)
    }
}

fn bin() -> Command {
    let mut cmd = Command::new(env!("CARGO_BIN_EXE_airnav"));
    cmd.env_remove("AIRNAV_SEED");
    cmd
}

fn criterion_8(scratch: &Path) -> Outcome {
    let started = Instant::now();
    let mut c = Checks::default();
    let sets: Vec<Vec<usize>> = MemoryKind::ALL.iter().map(|&k| select_history(MemoryPolicy::new(k, 4), 12)).collect();
    c.check(sets[0] == [11, 10, 8, 5], || format!("PIS {:?}", sets[0]));
    c.check(sets[1] == [11, 10, 9, 8], || format!("LastK {:?}", sets[1]));
    c.check(sets[2] == [11, 8, 4, 1], || format!("UniformK {:?}", sets[2]));
    c.check(sets[3].is_empty(), || format!("NoHistory {:?}", sets[3]));
    for i in 0..sets.len() {
        for j in i + 1..sets.len() {
            c.check(sets[i] != sets[j], || format!("policies {i} and {j} coincide"));
        }
    }

    let ds_dir = scratch.join("memory_ds");
    let gen = bin()
        .args(["gen", "--episodes", "12", "--seed", "8", "--out"])
        .arg(&ds_dir)
        .output()
        .unwrap();
    c.check(gen.status.success(), || format!("gen failed: {}", String::from_utf8_lossy(&gen.stderr)));
    let ds = Dataset::load(&ds_dir).expect("memory dataset");
    let mut frames_seen = Vec::new();
    for kind in MemoryKind::ALL {
        let policy = MemoryPolicy::new(kind, 4);
        let mismatches = Arc::new(AtomicUsize::new(0));
        let cfg = RunConfig { memory: policy, ..RunConfig::default() };
        let out = run_suite(
            || Ok(Box::new(HistoryProbe { inner: ExpertReplayAgent::new(), policy, mismatches: mismatches.clone() }) as Box<dyn Agent>),
            &ds.episodes,
            ds.worlds(),
            &cfg,
        )
        .expect("probe run");
        let bad = mismatches.load(Ordering::SeqCst);
        c.check(bad == 0, || format!("{kind}: {bad} observations with wrong history frames"));
        c.check(out.report.overall.sr == 100.0, || format!("{kind}: probe SR {}", out.report.overall.sr));

        let ev_dir = scratch.join(format!("memory_eval_{kind}"));
        let ev = bin()
            .args(["eval", "--agent", "expert", "--frames", "4", "--memory", kind.name(), "--dataset"])
            .arg(&ds_dir)
            .arg("--out")
            .arg(&ev_dir)
            .output()
            .unwrap();
        c.check(ev.status.success(), || format!("eval --memory {kind} failed: {}", String::from_utf8_lossy(&ev.stderr)));
        if let Ok(bytes) = fs::read(ev_dir.join("report.json")) {
            let report: EvalReport = serde_json::from_slice(&bytes).unwrap();
            c.check(report.meta.memory == format!("{kind}:{}", policy.frames), || format!("report memory {}", report.meta.memory));
            c.check(report.overall.sr == 100.0, || format!("eval --memory {kind}: SR {}", report.overall.sr));
            frames_seen.push(report.meta.memory);
        }
    }
    c.within(started, Duration::from_secs(60));
    Outcome {
        name: "memory-policy plumbing",
        summary: format!("t=12 N=4 sets {:?}; harness ran under {}", sets, frames_seen.join(", ")),
        failures: c.0,
        took: started.elapsed(),
    }
}

// ---------------------------------------------------------------- 9

fn tree(dir: &Path) -> Vec<(PathBuf, Vec<u8>)> {
    let mut files = Vec::new();
    let mut stack = vec![dir.to_path_buf()];
    while let Some(d) = stack.pop() {
        for entry in fs::read_dir(&d).unwrap() {
            let p = entry.unwrap().path();
            if p.is_dir() {
                stack.push(p);
            } else {
                files.push((p.strip_prefix(dir).unwrap().to_path_buf(), fs::read(&p).unwrap()));
            }
        }
    }
    files.sort();
    files
}

fn random_text(rng: &mut ChaCha8Rng) -> String {
    const POOL: &[char] = &['a', 'Z', ' ', '"', '\\', '\n', '\t', 'é', '→', '🚁', '\u{0}', '/', '{', '}'];
    (0..rng.random_range(0..40)).map(|_| POOL[rng.random_range(0..POOL.len())]).collect()
}

fn random_frame(rng: &mut ChaCha8Rng, step: usize) -> SensorFrame {
    SensorFrame {
        step,
        heading: Heading::new(rng.random_range(-1000.0..1000.0)).unwrap(),
        visible: (0..rng.random_range(0..6))
            .map(|_| VisibleLandmark {
                id: rng.random(),
                bearing_deg: rng.random_range(-180.0..180.0),
                distance_m: rng.random_range(0.0..100.0) * rng.random::<f64>(),
            })
            .collect(),
    }
}

fn criterion_9(scratch: &Path) -> Outcome {
    let started = Instant::now();
    let mut c = Checks::default();
    let dirs = [scratch.join("gen_a"), scratch.join("gen_b")];
    for d in &dirs {
        let out = bin().args(["gen", "--seed", "42", "--out"]).arg(d).output().unwrap();
        c.check(out.status.success(), || format!("gen failed: {}", String::from_utf8_lossy(&out.stderr)));
    }
    let (a, b) = (tree(&dirs[0]), tree(&dirs[1]));
    c.check(a.len() == 501, || format!("{} files written", a.len()));
    c.check(a == b, || "two gen runs differ".into());

    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let mut lossy = 0;
    for i in 0..10_000 {
        let step = rng.random_range(1..200);
        let obs = Observation {
            instruction: random_text(&mut rng),
            state: UavState::new(rng.random_range(-1e4..1e4), rng.random_range(-1e4..1e4), rng.random_range(-720.0..720.0)).unwrap(),
            action_history: (0..rng.random_range(0..30)).map(|_| Action::ALL[rng.random_range(0..4)]).collect(),
            current_frame: random_frame(&mut rng, step),
            history_frames: (0..rng.random_range(0..5)).map(|k| random_frame(&mut rng, k + 1)).collect(),
            step,
        };
        let msg = BridgeMessage::Observe(ObserveMessage::new(&format!("ep_{i}"), &obs));
        let line = encode(&msg).unwrap();
        let back = decode(&line);
        let same = !line.contains('\n')
            && matches!(&back, Ok(BridgeMessage::Observe(m)) if m.observation() == obs && m.episode_id == format!("ep_{i}"));
        if !same {
            lossy += 1;
        }
        let act = BridgeMessage::Act { output: random_text(&mut rng) };
        if decode(&encode(&act).unwrap()).ok() != Some(act) {
            lossy += 1;
        }
    }
    c.check(lossy == 0, || format!("{lossy} lossy round trips"));
    c.within(started, Duration::from_secs(60));
    Outcome {
        name: "determinism and formats",
        summary: format!("gen byte-identical ({} files), 1e4 observations round-trip", a.len()),
        failures: c.0,
        took: started.elapsed(),
    }
}

fn main() -> ExitCode {
    let scratch = tempfile::tempdir().expect("scratch dir");
    let mut outcomes: Vec<Outcome> = Vec::new();

    let c7 = std::thread::spawn(criterion_7);
    outcomes.push(criterion_1());
    outcomes.push(criterion_2());

    let started = Instant::now();
    let ds = suite_dataset();
    let synth_took = started.elapsed();
    let t = Instant::now();
    let expert = run_builtin(&ds, || Box::new(ExpertReplayAgent::new()), SUITE_SEED);
    let expert_took = synth_took + t.elapsed();
    let t = Instant::now();
    let oracle = run_builtin(&ds, || Box::new(GreedyOracleAgent::default()), SUITE_SEED);
    let random = run_builtin(&ds, || Box::new(RandomAgent::new()), SUITE_SEED);
    let oracle_took = synth_took + t.elapsed();
    outcomes.push(criterion_3(&ds, &expert, expert_took));
    outcomes.push(criterion_4(&oracle, &random, oracle_took));

    outcomes.push(criterion_6());
    outcomes.push(criterion_8(scratch.path()));
    outcomes.push(criterion_9(scratch.path()));

    let (o7, arms) = c7.join().expect("criterion 7 thread");
    let mut runs: Vec<(String, EvalReport, Vec<EpisodeResult>)> = vec![
        ("expert".into(), expert.report, expert.results),
        ("oracle".into(), oracle.report, oracle.results),
        ("random".into(), random.report, random.results),
    ];
    runs.extend(arms.into_iter().map(|a| (a.label, a.report, a.results)));
    outcomes.push(criterion_5(&runs));
    outcomes.push(o7);

    let order = [1, 2, 3, 4, 6, 8, 9, 5, 7];
    let mut numbered: Vec<(usize, Outcome)> = order.into_iter().zip(outcomes).collect();
    numbered.sort_by_key(|(n, _)| *n);
    let mut failed = 0;
    for (n, o) in &numbered {
        let verdict = if o.failures.is_empty() { "PASS" } else { "FAIL" };
        println!("{verdict} criterion {n}: {} ({}; {:.1?})", o.name, o.summary, o.took);
        for f in o.failures.iter().take(10) {
            println!("    {f}");
        }
        failed += usize::from(!o.failures.is_empty());
    }
    println!("{} of {} criteria passed", numbered.len() - failed, numbered.len());
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
