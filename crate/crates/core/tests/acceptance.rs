//! End-to-end acceptance checks. Each criterion writes one PASS/FAIL line to
//! stdout (bypassing the test harness capture) before asserting.

use std::collections::BTreeMap;
use std::fs;
use std::io::Write;
use std::path::Path;
use std::sync::OnceLock;

use fistlab::datastore::{DatasetMeta, StateNorm, SubTrajectory, Trajectory, TrajectoryDataset, WindowSampler};
use fistlab::imitator::{BcConfig, BcKind, BcPolicy, EvalReport, PolicyKind, ReportRow};
use fistlab::maze::{generate_offline_data, EnvConfig, MazeLayout, OfflineDataConfig, Region};
use fistlab::metric::{distance, lookahead_index, train_distance, DemoIndex, DistanceConfig, DistanceEncoder, StateMetric};
use fistlab::numerics::gaussian::{gaussian_kl, gaussian_log_prob, DiagGaussian};
use fistlab::numerics::gradcheck::{analytic_grads, check_param_grads};
use fistlab::numerics::{ParamSet, Tape};
use fistlab::pipeline::{
    ablate_stage, eval_stage, train_all, write_report, ExperimentConfig, RunManifest, ABLATE_DIR, EPISODES_FILE,
    EVAL_DIR, REPORT_CSV,
};
use fistlab::skillmodel::model::standard_noise;
use fistlab::skillmodel::{PriorKind, SkillModel, SkillModelConfig};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

const GRAD_REL_TOL: f64 = 1e-4;
const GRAD_INSTANCES: u64 = 20;
const CLOSED_FORM_TOL: f64 = 1e-10;
const MC_SAMPLES: usize = 1_000_000;
const MC_SIGMAS: f64 = 3.0;
const NEAREST_QUERIES: usize = 1000;
const MAX_TRAJ_LEN: usize = 50;
const SEPARATION_BATCHES: usize = 1000;
const SEPARATION_MIN: f64 = 0.95;
const FIST_MIN_SUCCESS: f64 = 0.8;
const SPIRL_MAX_SUCCESS: f64 = 0.3;
const PERIOD_SE: f64 = 1.0;

fn verdict(n: u8, title: &str, pass: bool, detail: &str) {
    let line = format!("criterion {n} [{}] {title}: {detail}\n", if pass { "PASS" } else { "FAIL" });
    let mut out = std::io::stdout().lock();
    out.write_all(line.as_bytes()).unwrap();
    out.flush().unwrap();
}

fn perturb(params: &mut ParamSet, rng: &mut ChaCha8Rng) {
    for id in params.ids().collect::<Vec<_>>() {
        params.value_mut(id).data_mut().iter_mut().for_each(|v| *v += rng.random_range(-0.3..0.3));
    }
}

fn random_trajectory(len: usize, sd: usize, ad: usize, rng: &mut ChaCha8Rng) -> Trajectory {
    let s: Vec<f32> = (0..len * sd).map(|_| rng.random_range(-1.0..1.0)).collect();
    let a: Vec<f32> = (0..len * ad).map(|_| rng.random_range(-1.0..1.0)).collect();
    Trajectory::new(sd, ad, s, a).unwrap()
}

fn random_dataset(lengths: &[usize], sd: usize, ad: usize, rng: &mut ChaCha8Rng) -> TrajectoryDataset {
    let trajs = lengths.iter().map(|&n| random_trajectory(n, sd, ad, rng)).collect();
    TrajectoryDataset::new(DatasetMeta { state_dim: sd, action_dim: ad, ..Default::default() }, trajs).unwrap()
}

fn joint_loss_instance(seed: u64) -> Result<f64, String> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let prior = if seed.is_multiple_of(2) { PriorKind::Inverse } else { PriorKind::StateOnly };
    let config = SkillModelConfig {
        horizon: 3,
        z_dim: 3,
        hidden: 8,
        decoder_layers: 2,
        prior_layers: 2,
        batch_size: 4,
        ..SkillModelConfig::default()
    }
    .with_prior(prior);
    let mut model = SkillModel::new(config, 2, 2, StateNorm::identity(2), seed).unwrap();
    perturb(&mut model.params, &mut rng);
    let windows: Vec<SubTrajectory> =
        (0..3).map(|i| SubTrajectory::from_trajectory(&random_trajectory(3, 2, 2, &mut rng), i, 0, 3)).collect();
    let batch = model.batch(&windows).unwrap();
    let noise = standard_noise(3, 3, &mut rng);
    let net = model.net.clone();
    let (m0, l0) = {
        let mut tape = Tape::new();
        let q = net.posterior(&mut tape, &model.params, &batch);
        (tape.value(q.mean).clone(), tape.value(q.log_std).clone())
    };
    // Posterior held constant inside the prior term.
    let detached = |tape: &mut Tape, p: &ParamSet| net.losses(tape, p, &batch, &noise, 0.3).total;
    let frozen = |tape: &mut Tape, p: &ParamSet| net.losses_against(tape, p, &batch, &noise, 0.3, (&m0, &l0)).total;
    let mut reference = model.params.clone();
    analytic_grads(&mut model.params, &detached);
    analytic_grads(&mut reference, &frozen);
    for id in model.params.ids() {
        if model.params.grad(id) != reference.grad(id) {
            return Err(format!("detached gradient differs for {}", model.params.name(id)));
        }
    }
    check_param_grads(&mut reference, &frozen, GRAD_REL_TOL).map_err(|m| m.to_string())
}

fn infonce_instance(seed: u64) -> Result<f64, String> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let cfg = DistanceConfig { horizon: 3, hidden: 6, hidden_layers: 2, embed_dim: 3, batch_size: 4, ..Default::default() };
    let mut enc = DistanceEncoder::new(cfg, 2, StateNorm::identity(2), seed).unwrap();
    perturb(&mut enc.params, &mut rng);
    let pts = |rng: &mut ChaCha8Rng| (0..4).map(|_| vec![rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)]).collect::<Vec<_>>();
    let (q, k) = (pts(&mut rng), pts(&mut rng));
    let qs: Vec<&[f64]> = q.iter().map(Vec::as_slice).collect();
    let ks: Vec<&[f64]> = k.iter().map(Vec::as_slice).collect();
    let frozen = enc.clone();
    let loss = |t: &mut Tape, p: &ParamSet| frozen.infonce_on_tape(t, p, &qs, &ks);
    check_param_grads(&mut enc.params, &loss, GRAD_REL_TOL).map_err(|m| m.to_string())
}

fn bc_instance(kind: BcKind, seed: u64) -> Result<f64, String> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let data = random_dataset(&[6, 5], 2, 1, &mut rng);
    let cfg = BcConfig { horizon: 3, hidden: 8, hidden_layers: 2, ..BcConfig::default() };
    let mut p = BcPolicy::new(kind, cfg, 2, 1, StateNorm::identity(2), seed).unwrap();
    perturb(&mut p.params, &mut rng);
    let batch = p.batch(&data, &[(0, 0), (1, 2), (0, 3)]);
    let frozen = p.clone();
    let loss = |t: &mut Tape, ps: &ParamSet| frozen.loss_on_tape(t, ps, &batch);
    check_param_grads(&mut p.params, &loss, GRAD_REL_TOL).map_err(|m| m.to_string())
}

#[test]
fn criterion_1_gradients_match_finite_differences() {
    let objectives: [(&str, &dyn Fn(u64) -> Result<f64, String>); 4] = [
        ("joint skill loss", &joint_loss_instance),
        ("InfoNCE", &infonce_instance),
        ("BC", &|s| bc_instance(BcKind::Plain, s)),
        ("goal-conditioned BC", &|s| bc_instance(BcKind::Goal, s)),
    ];
    let mut failures = Vec::new();
    let mut worst = Vec::new();
    for (name, run) in objectives {
        let mut w: f64 = 0.0;
        for seed in 0..GRAD_INSTANCES {
            match run(1000 + seed) {
                Ok(e) => w = w.max(e),
                Err(m) => failures.push(format!("{name} #{seed}: {m}")),
            }
        }
        worst.push(format!("{name} {w:.1e}"));
    }
    let pass = failures.is_empty();
    let detail = format!("{GRAD_INSTANCES} instances each (abs floor 1e-8), worst rel err: {}; {failures:?}", worst.join(", "));
    verdict(1, "analytic vs central-difference gradients", pass, &detail);
    assert!(pass, "{detail}");
}

fn random_gaussian(dim: usize, rng: &mut ChaCha8Rng) -> DiagGaussian {
    DiagGaussian::new(
        (0..dim).map(|_| rng.random_range(-2.0..2.0)).collect(),
        (0..dim).map(|_| rng.random_range(-1.0..0.7)).collect(),
    )
    .unwrap()
}

/// Log of a product of univariate densities.
fn log_density(g: &DiagGaussian, x: &[f64]) -> f64 {
    let mut p = 1.0;
    for ((m, ls), x) in g.mean.iter().zip(&g.log_std).zip(x) {
        let s = ls.exp();
        p *= (-(x - m) * (x - m) / (2.0 * s * s)).exp() / (s * (2.0 * std::f64::consts::PI).sqrt());
    }
    p.ln()
}

/// Matrix form: (tr(P^-1 Q) + d' P^-1 d - k + ln det P - ln det Q) / 2.
fn kl_matrix_form(q: &DiagGaussian, p: &DiagGaussian) -> f64 {
    let vq: Vec<f64> = q.std().iter().map(|s| s * s).collect();
    let vp: Vec<f64> = p.std().iter().map(|s| s * s).collect();
    let trace: f64 = vq.iter().zip(&vp).map(|(a, b)| a / b).sum();
    let maha: f64 = q.mean.iter().zip(&p.mean).zip(&vp).map(|((a, b), v)| (a - b) * (a - b) / v).sum();
    let (det_p, det_q): (f64, f64) = (vp.iter().product(), vq.iter().product());
    0.5 * (trace + maha - q.dim() as f64 + (det_p / det_q).ln())
}

fn mc_mean(samples: impl Iterator<Item = f64>) -> (f64, f64) {
    let (mut n, mut mean, mut m2) = (0.0, 0.0, 0.0);
    for x in samples {
        n += 1.0;
        let d = x - mean;
        mean += d / n;
        m2 += d * (x - mean);
    }
    (mean, (m2 / (n - 1.0) / n).sqrt())
}

fn draw(g: &DiagGaussian, rng: &mut ChaCha8Rng) -> Vec<f64> {
    g.mean.iter().zip(g.std()).map(|(m, s)| Normal::new(*m, s).unwrap().sample(rng)).collect()
}

#[test]
fn criterion_2_distribution_calculus() {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let mut closed_err: f64 = 0.0;
    let mut worst_z: f64 = 0.0;
    for _ in 0..4 {
        let (q, p) = (random_gaussian(3, &mut rng), random_gaussian(3, &mut rng));
        closed_err = closed_err.max((gaussian_kl(&q, &p).unwrap() - kl_matrix_form(&q, &p)).abs());
        for _ in 0..50 {
            let x = draw(&q, &mut rng);
            closed_err = closed_err.max((gaussian_log_prob(&q, &x).unwrap() - log_density(&q, &x)).abs());
        }
        let xs: Vec<Vec<f64>> = (0..MC_SAMPLES).map(|_| draw(&q, &mut rng)).collect();
        let (kl_mc, kl_se) = mc_mean(xs.iter().map(|x| log_density(&q, x) - log_density(&p, x)));
        worst_z = worst_z.max((kl_mc - gaussian_kl(&q, &p).unwrap()).abs() / kl_se);
        // E_q[log q] equals minus the closed-form differential entropy.
        let neg_entropy: f64 = -q.log_std.iter().map(|l| 0.5 + 0.5 * (2.0 * std::f64::consts::PI).ln() + l).sum::<f64>();
        let (lp_mc, lp_se) = mc_mean(xs.iter().map(|x| gaussian_log_prob(&q, x).unwrap()));
        worst_z = worst_z.max((lp_mc - neg_entropy).abs() / lp_se);
    }
    let pass = closed_err <= CLOSED_FORM_TOL && worst_z <= MC_SIGMAS;
    let detail = format!("closed-form max err {closed_err:.1e} (tol {CLOSED_FORM_TOL:.0e}), MC worst {worst_z:.2} SE (limit {MC_SIGMAS})");
    verdict(2, "gaussian KL and log-prob", pass, &detail);
    assert!(pass, "{detail}");
}

#[test]
fn criterion_3_nearest_and_lookahead() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let demos = random_dataset(&[17, 40, 3, 25, 50, 1], 4, 2, &mut rng);
    let enc = DistanceEncoder::new(DistanceConfig { hidden: 8, embed_dim: 5, ..Default::default() }, 4, StateNorm::identity(4), 3).unwrap();
    let mut mismatches = 0;
    for metric in [StateMetric::Euclidean, StateMetric::Learned(enc.clone())] {
        let index = DemoIndex::new(&demos, metric.clone());
        let embed = |s: &[f64]| match &metric {
            StateMetric::Euclidean => s.to_vec(),
            StateMetric::Learned(e) => e.embed(s),
        };
        for _ in 0..NEAREST_QUERIES {
            let q: Vec<f64> = (0..4).map(|_| rng.random_range(-1.2..1.2)).collect();
            let eq = embed(&q);
            let mut best = (f64::INFINITY, 0, 0);
            for (i, t) in demos.trajectories().iter().enumerate() {
                for j in 0..t.len() {
                    let d: f64 = embed(&t.state_f64(j)).iter().zip(&eq).map(|(a, b)| (a - b).powi(2)).sum();
                    if d < best.0 {
                        best = (d, i, j);
                    }
                }
            }
            if index.nearest(&q).unwrap() != (best.1, best.2) {
                mismatches += 1;
            }
        }
    }
    let mut lookahead_bad = 0;
    let mut checked = 0;
    for len in 1..=MAX_TRAJ_LEN {
        let d = random_dataset(&[len], 2, 1, &mut rng);
        let index = DemoIndex::new(&d, StateMetric::Euclidean);
        for h in 1..=MAX_TRAJ_LEN + 2 {
            for j in 0..len {
                let mut k = j;
                for _ in 1..h {
                    if k + 1 < len {
                        k += 1;
                    }
                }
                checked += 1;
                if lookahead_index(j, h, len) != k || index.lookahead(0, j, h) != d.trajectories()[0].state_f64(k).as_slice() {
                    lookahead_bad += 1;
                }
            }
        }
    }
    let pass = mismatches == 0 && lookahead_bad == 0;
    let detail = format!(
        "{mismatches} nearest mismatches over {} queries, {lookahead_bad} bad lookaheads over {checked} (j, H, T) triples",
        2 * NEAREST_QUERIES
    );
    verdict(3, "nearest and lookahead exactness", pass, &detail);
    assert!(pass, "{detail}");
}

#[test]
fn criterion_4_contrastive_separation() {
    let layout = MazeLayout::default_layout();
    let env = EnvConfig::default();
    let data = generate_offline_data(&layout, Some(Region::Left), &OfflineDataConfig::default(), 4, String::new()).unwrap();
    let cfg = DistanceConfig::default();
    let (enc, _) = train_distance(&data, &cfg, StateNorm::for_maze(&layout, &env), 4).unwrap();
    let sampler = WindowSampler::new(&data, cfg.horizon).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(44);
    let mut wins = 0;
    for _ in 0..SEPARATION_BATCHES {
        let w = sampler.sample(&data, cfg.batch_size, &mut rng);
        let (mut pos, mut neg, mut n_neg) = (0.0, 0.0, 0);
        for (i, wi) in w.iter().enumerate() {
            pos += distance(&enc, wi.first_state(), wi.last_state());
            let j = (i + 1 + rng.random_range(0..w.len() - 1)) % w.len();
            if w[j].trajectory != wi.trajectory {
                neg += distance(&enc, wi.first_state(), w[j].last_state());
                n_neg += 1;
            }
        }
        if n_neg > 0 && pos / (w.len() as f64) < neg / n_neg as f64 {
            wins += 1;
        }
    }
    let rate = wins as f64 / SEPARATION_BATCHES as f64;
    let pass = rate >= SEPARATION_MIN;
    let detail = format!("true pairs closer in {wins}/{SEPARATION_BATCHES} batches ({rate:.3}, need {SEPARATION_MIN})");
    verdict(4, "contrastive separation on the default corpus", pass, &detail);
    assert!(pass, "{detail}");
}

struct RegionResult {
    region: Region,
    eval: Vec<EvalReport>,
    ablate: Vec<EvalReport>,
}

impl RegionResult {
    fn row(&self, name: &str) -> &ReportRow {
        self.eval.iter().chain(&self.ablate).map(|r| &r.row).find(|r| r.policy == name).unwrap_or_else(|| panic!("no {name} row"))
    }
}

/// Desk-scale pipeline on every blocked region, shared by criteria 5 and 6.
fn desk_results() -> &'static [RegionResult] {
    static RESULTS: OnceLock<Vec<RegionResult>> = OnceLock::new();
    RESULTS.get_or_init(|| {
        Region::ALL
            .iter()
            .map(|&region| {
                let tmp = tempfile::tempdir().unwrap();
                let config = ExperimentConfig::desk(region);
                let mut run = train_all(&config, tmp.path()).unwrap();
                let kinds = [PolicyKind::Fist, PolicyKind::Spirl, PolicyKind::BcFt];
                let eval = eval_stage(&mut run, &kinds, &config.eval, 1).unwrap();
                let ablate = ablate_stage(&mut run, &config.eval, 1).unwrap();
                for r in eval.iter().chain(&ablate) {
                    eprintln!("{region}: {}", r.row.csv_line());
                }
                RegionResult { region, eval, ablate }
            })
            .collect()
    })
}

#[test]
fn criterion_5_fist_beats_baselines_on_every_region() {
    let mut pass = true;
    let mut parts = Vec::new();
    for r in desk_results() {
        let (fist, spirl, bc) = (r.row("fist"), r.row("spirl"), r.row("bc_ft"));
        let checks = [
            fist.success_rate >= FIST_MIN_SUCCESS,
            spirl.success_rate <= SPIRL_MAX_SUCCESS,
            fist.mean_length < bc.mean_length,
        ];
        pass &= checks.iter().all(|&c| c);
        parts.push(format!(
            "{}: FIST success {:.1} [{}], SPiRL success {:.1} [{}], length FIST {:.1} vs BC+FT {:.1} [{}]",
            r.region,
            fist.success_rate,
            ok_str(checks[0]),
            spirl.success_rate,
            ok_str(checks[1]),
            fist.mean_length,
            bc.mean_length,
            ok_str(checks[2]),
        ));
    }
    let detail = format!("need FIST >= {FIST_MIN_SUCCESS}, SPiRL <= {SPIRL_MAX_SUCCESS}; {}", parts.join("; "));
    verdict(5, "success and length ordering at desk scale", pass, &detail);
    assert!(pass, "{detail}");
}

#[test]
fn criterion_6_ablation_orderings() {
    let mut pass = true;
    let mut parts = Vec::new();
    for r in desk_results() {
        let fist = r.row("fist");
        let (no_ft, oracle) = (r.row("fist_no_ft"), r.row("fist_oracle"));
        let t10 = r.row(&format!("fist_t{}", ExperimentConfig::desk(r.region).skills.horizon));
        let se = (fist.stderr_length.powi(2) + t10.stderr_length.powi(2)).sqrt();
        let checks = [
            fist.success_rate > no_ft.success_rate,
            oracle.mean_length <= fist.mean_length,
            fist.mean_length <= t10.mean_length + PERIOD_SE * se,
        ];
        pass &= checks.iter().all(|&c| c);
        parts.push(format!(
            "{}: success FIST {:.1} vs no-FT {:.1} [{}], length oracle {:.1} vs FIST {:.1} [{}], t=1 {:.1} vs t=10 {:.1} + {:.1} [{}]",
            r.region,
            fist.success_rate,
            no_ft.success_rate,
            ok_str(checks[0]),
            oracle.mean_length,
            fist.mean_length,
            ok_str(checks[1]),
            fist.mean_length,
            t10.mean_length,
            PERIOD_SE * se,
            ok_str(checks[2]),
        ));
    }
    let detail = parts.join("; ");
    verdict(6, "ablation orderings", pass, &detail);
    assert!(pass, "{detail}");
}

fn ok_str(b: bool) -> &'static str {
    if b {
        "ok"
    } else {
        "violated"
    }
}

/// Full smoke pipeline plus report; returns the run directory.
fn smoke_run(dir: &Path) {
    let config = ExperimentConfig::smoke(Region::Left);
    let mut run = train_all(&config, dir).unwrap();
    eval_stage(&mut run, &[PolicyKind::Fist, PolicyKind::Spirl, PolicyKind::BcFt], &config.eval, 1).unwrap();
    ablate_stage(&mut run, &config.eval, 1).unwrap();
    let logs = [dir.join(EVAL_DIR).join(EPISODES_FILE), dir.join(ABLATE_DIR).join(EPISODES_FILE)];
    let refs: Vec<&Path> = logs.iter().map(|p| p.as_path()).collect();
    write_report(&refs, &dir.join("report")).unwrap();
}

fn smoke_runs() -> &'static (tempfile::TempDir, tempfile::TempDir) {
    static RUNS: OnceLock<(tempfile::TempDir, tempfile::TempDir)> = OnceLock::new();
    RUNS.get_or_init(|| {
        let (a, b) = (tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap());
        smoke_run(a.path());
        smoke_run(b.path());
        (a, b)
    })
}

fn tree(dir: &Path) -> BTreeMap<String, Vec<u8>> {
    let mut out = BTreeMap::new();
    let mut stack = vec![dir.to_path_buf()];
    while let Some(d) = stack.pop() {
        for e in fs::read_dir(&d).unwrap() {
            let p = e.unwrap().path();
            if p.is_dir() {
                stack.push(p);
            } else {
                out.insert(p.strip_prefix(dir).unwrap().to_string_lossy().into_owned(), fs::read(&p).unwrap());
            }
        }
    }
    out
}

#[test]
fn criterion_7_identical_seeds_give_identical_artifacts() {
    let (a, b) = smoke_runs();
    let (ta, tb) = (tree(a.path()), tree(b.path()));
    // run.json holds stage timestamps.
    let differing: Vec<&String> =
        ta.keys().chain(tb.keys()).filter(|k| k.as_str() != "run.json" && ta.get(*k) != tb.get(*k)).collect();
    let (ma, mb) = (RunManifest::load(a.path()).unwrap(), RunManifest::load(b.path()).unwrap());
    let kinds = ["data/", "models/", "eval/", "ablate/", "report/"];
    let covered = kinds.iter().all(|k| ta.keys().any(|f| f.starts_with(k)));
    let pass = differing.is_empty() && ma.files == mb.files && ma.config_hash == mb.config_hash && covered;
    let detail = format!("{} files compared, differing: {differing:?}, manifest checksums equal: {}", ta.len(), ma.files == mb.files);
    verdict(7, "bit-identical smoke runs", pass, &detail);
    assert!(pass, "{detail}");
}

#[test]
fn criterion_8_normalized_score_from_raw_logs() {
    let (a, _) = smoke_runs();
    let mut groups: Vec<((String, String), (f64, f64, f64))> = Vec::new();
    let mut seen: Vec<serde_json::Value> = Vec::new();
    for log in [EVAL_DIR, ABLATE_DIR] {
        let text = fs::read_to_string(a.path().join(log).join(EPISODES_FILE)).unwrap();
        for line in text.lines() {
            let v: serde_json::Value = serde_json::from_str(line).unwrap();
            if seen.contains(&v) {
                continue;
            }
            seen.push(v.clone());
            let key = (v["policy"].as_str().unwrap().to_string(), v["task"].as_str().unwrap().to_string());
            let (len, max) = (v["length"].as_u64().unwrap() as f64, v["max_steps"].as_u64().unwrap() as f64);
            match groups.iter_mut().find(|(k, _)| *k == key) {
                Some((_, acc)) => {
                    acc.0 += len;
                    acc.1 += 1.0;
                }
                None => groups.push((key, (len, 1.0, max))),
            }
        }
    }
    let csv = fs::read_to_string(a.path().join("report").join(REPORT_CSV)).unwrap();
    let header: Vec<&str> = csv.lines().next().unwrap().split(',').collect();
    let col = |name: &str| header.iter().position(|h| *h == name).unwrap();
    let (pc, tc, sc) = (col("policy"), col("task"), col("normalized_score"));
    let mut rows = 0;
    let mut wrong = Vec::new();
    for line in csv.lines().skip(1) {
        let f: Vec<&str> = line.split(',').collect();
        let (_, (sum, n, max)) =
            groups.iter().find(|(k, _)| k.0 == f[pc] && k.1 == f[tc]).unwrap_or_else(|| panic!("row without episodes: {line}"));
        let expected = (max - sum / n) / max;
        let reported: f64 = f[sc].parse().unwrap();
        rows += 1;
        if reported != expected {
            wrong.push(format!("{}: {reported} vs {expected}", f[pc]));
        }
    }
    let pass = wrong.is_empty() && rows == groups.len() && rows > 0;
    let detail = format!("{rows} report rows vs {} log groups, mismatches: {wrong:?}", groups.len());
    verdict(8, "normalized score recomputed from episode logs", pass, &detail);
    assert!(pass, "{detail}");
}
