//! Task execution: dataset loading, training loops with artifact
//! emission, AIS evaluation, topology analysis, and grid expansion.

use std::fs::{self, File};
use std::io::{BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;

use rand::Rng;
use sparset::data::{
    load_cifar10_binary, load_csv_numeric, load_idx, load_sparse_binary, make_synthetic,
    Dataset, SyntheticSpec,
};
use sparset::io::{read_rbm_checkpoint, write_mlp_checkpoint, write_rbm_checkpoint};
use sparset::layers::Activation;
use sparset::mlp::{build_mlp, MlpTrainer, TrainConfig};
use sparset::rbm::{LogProbMethod, RbmModel, RbmTrainConfig, RbmTrainer};
use sparset::topology::{EvolutionConfig, Side, SparseWeights};
use sparset::analysis::null_hypothesis_p_value_at;
use sparset::{
    ais_log_z, fit_power_law, rng, test_log_prob,
    visible_connectivity_map, AisConfig,
};

use crate::config::{DatasetSpec, ExperimentConfig, RawConfig, Task};

pub type RunResult = Result<(), String>;

fn err<T: std::fmt::Display>(e: T) -> String {
    e.to_string()
}

/// Execute a validated configuration.
pub fn run(cfg: &ExperimentConfig, raw: &RawConfig, workers: usize) -> RunResult {
    match cfg.task {
        Task::TrainMlp => run_train_mlp(cfg),
        Task::TrainRbm => run_train_rbm(cfg),
        Task::EvalAis => run_eval_ais(cfg),
        Task::AnalyzeTopology => run_analyze(cfg),
        Task::Grid => run_grid(cfg, raw, workers),
    }
}

fn run_dir(cfg: &ExperimentConfig) -> PathBuf {
    cfg.out_dir.join(&cfg.name)
}

fn load_split(cfg: &ExperimentConfig) -> Result<(Dataset, Option<Dataset>), String> {
    let spec = cfg
        .dataset
        .as_ref()
        .ok_or_else(|| "no dataset configured".to_string())?;
    let (mut train, mut test) = match spec {
        DatasetSpec::Mnist { dir } => {
            let train = load_idx(
                &dir.join("train-images-idx3-ubyte"),
                &dir.join("train-labels-idx1-ubyte"),
            )
            .map_err(err)?;
            let test = load_idx(
                &dir.join("t10k-images-idx3-ubyte"),
                &dir.join("t10k-labels-idx1-ubyte"),
            )
            .map_err(err)?;
            (train, Some(test))
        }
        DatasetSpec::Cifar10 { dir } => {
            let batches: Vec<PathBuf> = (1..=5)
                .map(|i| dir.join(format!("data_batch_{i}.bin")))
                .collect();
            let train = load_cifar10_binary(&batches).map_err(err)?;
            let test = load_cifar10_binary(&[dir.join("test_batch.bin")]).map_err(err)?;
            (train, Some(test))
        }
        DatasetSpec::Csv {
            train,
            test,
            label_column,
        } => {
            let tr = load_csv_numeric(train, *label_column).map_err(err)?;
            let te = match test {
                Some(p) => Some(load_csv_numeric(p, *label_column).map_err(err)?),
                None => None,
            };
            (tr, te)
        }
        DatasetSpec::SparseBinary { train, test } => {
            let tr = load_sparse_binary(train).map_err(err)?;
            let te = match test {
                Some(p) => Some(load_sparse_binary(p).map_err(err)?),
                None => None,
            };
            (tr, te)
        }
        DatasetSpec::SyntheticPrototype {
            n_features,
            n_prototypes,
            flip_prob,
            n_train,
            n_test,
        } => {
            // One stream for both splits: they share the prototype set.
            let make = |n: usize| SyntheticSpec::PrototypeMixture {
                n_features: *n_features,
                n_prototypes: *n_prototypes,
                flip_prob: *flip_prob,
                n_samples: n,
            };
            let tr = make_synthetic(&make(*n_train), &mut rng::substream(cfg.seed, 1))
                .map_err(err)?;
            let te = make_synthetic(&make(*n_test), &mut rng::substream(cfg.seed, 1))
                .map_err(err)?;
            (tr, Some(te))
        }
        DatasetSpec::SyntheticMoons { n_train, n_test, noise } => {
            let make = |n: usize| SyntheticSpec::TwoMoons {
                n_samples: n,
                noise: *noise,
            };
            let tr = make_synthetic(&make(*n_train), &mut rng::substream(cfg.seed, 2))
                .map_err(err)?;
            let te = make_synthetic(&make(*n_test), &mut rng::substream(cfg.seed, 3))
                .map_err(err)?;
            (tr, Some(te))
        }
        DatasetSpec::SyntheticLinear { n_train, n_test, margin } => {
            let make = |n: usize| SyntheticSpec::LinearlySeparable {
                n_samples: n,
                margin: *margin,
            };
            let tr = make_synthetic(&make(*n_train), &mut rng::substream(cfg.seed, 4))
                .map_err(err)?;
            let te = make_synthetic(&make(*n_test), &mut rng::substream(cfg.seed, 5))
                .map_err(err)?;
            (tr, Some(te))
        }
    };
    if let Some(threshold) = cfg.binarize {
        if train.feature_kind == sparset::FeatureKind::Binary {
            eprintln!("note: dataset already binary; binarize is a no-op");
        }
        train = train.binarize(threshold);
        test = test.map(|t| t.binarize(threshold));
    }
    if let Some(n) = cfg.limit_train {
        train = train.take(n).map_err(err)?;
    }
    if let (Some(n), Some(t)) = (cfg.limit_test, test.as_mut()) {
        *t = t.take(n).map_err(err)?;
    }
    Ok((train, test))
}

fn csv_cell(v: f64) -> String {
    if v.is_nan() {
        String::new()
    } else {
        v.to_string()
    }
}

fn run_train_mlp(cfg: &ExperimentConfig) -> RunResult {
    let dir = run_dir(cfg);
    fs::create_dir_all(dir.join("snapshots")).map_err(err)?;
    let (train, test) = load_split(cfg)?;

    let mut tc = TrainConfig::new(cfg.epochs, cfg.seed);
    tc.learning_rate = cfg.learning_rate;
    tc.momentum = cfg.momentum;
    tc.nesterov = cfg.nesterov;
    tc.weight_decay_l2 = cfg.weight_decay_l2;
    tc.l1_rate = cfg.l1_rate;
    tc.dropout_rate = cfg.dropout;
    tc.input_dropout = cfg.input_dropout;
    tc.batch_size = cfg.batch_size;
    tc.evolution = EvolutionConfig::new(cfg.epsilon, cfg.zeta, cfg.seed).map_err(err)?;
    tc.pvalue_monte_carlo = cfg.pvalues.then_some(cfg.pvalue_mc);
    if cfg.hflip {
        tc.hflip_shape = Some((3, 32, 32));
    }

    let n_classes = train
        .n_classes()
        .ok_or_else(|| "training data has no labels".to_string())?;
    if *cfg.architecture.last().unwrap() != n_classes {
        return Err(format!(
            "architecture output {} but dataset has {} classes",
            cfg.architecture.last().unwrap(),
            n_classes
        ));
    }
    let mut activations = vec![cfg.activation; cfg.architecture.len() - 2];
    activations.push(Activation::Softmax);
    let model = build_mlp(&cfg.architecture, &activations, cfg.mode, &tc).map_err(err)?;
    let hidden_layers = model.layers.len() - 1;
    let mut trainer = MlpTrainer::new(model, tc).map_err(err)?;

    let mut metrics = BufWriter::new(File::create(dir.join("metrics.csv")).map_err(err)?);
    let pvalue_cols: Vec<String> = (1..=hidden_layers)
        .map(|i| format!("pvalue_layer{i}"))
        .collect();
    writeln!(
        metrics,
        "epoch,train_loss,test_accuracy,nnz_total,{},walltime_s",
        pvalue_cols.join(",")
    )
    .map_err(err)?;

    let mut powerlaw = BufWriter::new(File::create(dir.join("powerlaw.csv")).map_err(err)?);
    writeln!(powerlaw, "epoch,layer,gamma_hat,d_min,n_tail,p_value").map_err(err)?;

    for epoch in 0..cfg.epochs {
        if cfg.snapshot_every > 0 && epoch % cfg.snapshot_every == 0 {
            emit_mlp_topology_artifacts(cfg, &dir, trainer.model(), epoch, &mut powerlaw)?;
        }
        let m = trainer.train_epoch(&train, test.as_ref()).map_err(err)?;
        let pvals: Vec<String> = if m.layer_p_values.is_empty() {
            vec![String::new(); hidden_layers]
        } else {
            m.layer_p_values.iter().map(|&p| csv_cell(p)).collect()
        };
        writeln!(
            metrics,
            "{},{},{},{},{},{}",
            m.epoch,
            m.train_loss,
            m.test_accuracy.map(|a| a.to_string()).unwrap_or_default(),
            m.layer_nnz.iter().sum::<usize>(),
            pvals.join(","),
            m.wall_time_s
        )
        .map_err(err)?;
        metrics.flush().map_err(err)?;
    }
    emit_mlp_topology_artifacts(cfg, &dir, trainer.model(), cfg.epochs, &mut powerlaw)?;

    let ckpt = File::create(dir.join("checkpoint.txt")).map_err(err)?;
    write_mlp_checkpoint(trainer.model(), BufWriter::new(ckpt)).map_err(err)?;
    Ok(())
}

fn emit_mlp_topology_artifacts(
    cfg: &ExperimentConfig,
    dir: &Path,
    model: &sparset::MlpModel,
    epoch: usize,
    powerlaw: &mut impl Write,
) -> RunResult {
    for (l, layer) in model.layers.iter().enumerate() {
        let path = dir.join(format!("snapshots/epoch_{epoch:04}.layer{l}.topo"));
        let file = File::create(path).map_err(err)?;
        layer
            .weights
            .write_snapshot(BufWriter::new(file))
            .map_err(err)?;
    }
    if cfg.pvalues {
        for l in 0..model.layers.len().saturating_sub(1) {
            let degrees = model.layers[l].weights.degree_distribution(Side::Output);
            let mut stream = rng::substream(cfg.seed, 0x706c_0000 ^ ((epoch as u64) << 8) ^ l as u64);
            let report = sparset::power_law_report(
                &degrees,
                sparset::analysis::DEFAULT_D_MIN,
                cfg.pvalue_mc,
                &mut stream,
            );
            if let Ok(r) = report {
                writeln!(
                    powerlaw,
                    "{epoch},{l},{},{},{},{}",
                    r.gamma_hat, r.d_min, r.n_tail, r.p_value
                )
                .map_err(err)?;
            }
        }
    }
    if let Some((h, w)) = cfg.connectivity_shape {
        if let Some(first) = model.layers.first() {
            if first.n_in() == h * w {
                let map = visible_connectivity_map(&first.weights, h, w).map_err(err)?;
                write_connectivity(dir, epoch, &map)?;
            }
        }
    }
    Ok(())
}

fn write_connectivity(dir: &Path, epoch: usize, map: &sparset::ConnectivityMap) -> RunResult {
    let cdir = dir.join("connectivity");
    fs::create_dir_all(&cdir).map_err(err)?;
    let txt = File::create(cdir.join(format!("epoch_{epoch:04}.txt"))).map_err(err)?;
    map.write_text(BufWriter::new(txt)).map_err(err)?;
    let pgm = File::create(cdir.join(format!("epoch_{epoch:04}.pgm"))).map_err(err)?;
    map.write_pgm(BufWriter::new(pgm)).map_err(err)?;
    Ok(())
}

fn run_train_rbm(cfg: &ExperimentConfig) -> RunResult {
    let dir = run_dir(cfg);
    fs::create_dir_all(dir.join("snapshots")).map_err(err)?;
    let (train, test) = load_split(cfg)?;
    if train
        .features
        .data()
        .iter()
        .any(|&v| v != 0.0 && v != 1.0)
    {
        return Err("RBM training needs binary features; set [dataset] binarize".into());
    }

    let mut rc = RbmTrainConfig::new(cfg.rbm_epochs, cfg.seed);
    rc.cd_steps = cfg.cd_steps;
    rc.learning_rate = cfg.rbm_learning_rate;
    rc.momentum = cfg.rbm_momentum;
    rc.weight_decay = cfg.rbm_weight_decay;
    rc.batch_size = cfg.rbm_batch_size;
    rc.evolution =
        EvolutionConfig::new(cfg.rbm_epsilon, cfg.rbm_zeta, cfg.seed).map_err(err)?;
    rc.mode = cfg.mode;
    rc.eval_every = cfg.eval_every;
    rc.visible_bias_from_marginals = cfg.visible_bias_from_marginals;
    rc.eval_method = match cfg.eval_method.as_str() {
        "ais" => LogProbMethod::Ais {
            num_betas: cfg.ais_betas,
            num_chains: cfg.ais_chains,
        },
        _ => LogProbMethod::ExactEnumeration,
    };
    rc.pvalue_monte_carlo = cfg.pvalues.then_some(cfg.pvalue_mc);

    let model = RbmModel::new(
        train.n_features(),
        cfg.hidden,
        cfg.mode,
        &rc.evolution,
        &rc.weight_init,
    )
    .map_err(err)?;
    let mut trainer = RbmTrainer::new(model, rc).map_err(err)?;

    let mut metrics = BufWriter::new(File::create(dir.join("metrics.csv")).map_err(err)?);
    writeln!(
        metrics,
        "epoch,recon_error,test_log_prob,nnz_total,pvalue_hidden,walltime_s"
    )
    .map_err(err)?;
    let mut powerlaw = BufWriter::new(File::create(dir.join("powerlaw.csv")).map_err(err)?);
    writeln!(powerlaw, "epoch,layer,gamma_hat,d_min,n_tail,p_value").map_err(err)?;

    let write_row = |m: &sparset::RbmEpochMetrics,
                         metrics: &mut BufWriter<File>|
     -> RunResult {
        writeln!(
            metrics,
            "{},{},{},{},{},{}",
            m.epoch,
            m.recon_error.map(|v| v.to_string()).unwrap_or_default(),
            m.test_log_prob.map(|v| v.to_string()).unwrap_or_default(),
            m.nnz,
            m.p_value.map(csv_cell).unwrap_or_default(),
            m.wall_time_s
        )
        .map_err(err)?;
        metrics.flush().map_err(err)
    };

    let baseline = trainer.baseline_metrics(&train, test.as_ref()).map_err(err)?;
    write_row(&baseline, &mut metrics)?;
    for epoch in 0..cfg.rbm_epochs {
        if cfg.snapshot_every > 0 && epoch % cfg.snapshot_every == 0 {
            emit_rbm_topology_artifacts(cfg, &dir, trainer.model(), epoch, &mut powerlaw)?;
        }
        let m = trainer.train_epoch(&train, test.as_ref()).map_err(err)?;
        write_row(&m, &mut metrics)?;
    }
    emit_rbm_topology_artifacts(cfg, &dir, trainer.model(), cfg.rbm_epochs, &mut powerlaw)?;

    let ckpt = File::create(dir.join("checkpoint.txt")).map_err(err)?;
    write_rbm_checkpoint(trainer.model(), BufWriter::new(ckpt)).map_err(err)?;
    Ok(())
}

fn emit_rbm_topology_artifacts(
    cfg: &ExperimentConfig,
    dir: &Path,
    model: &RbmModel,
    epoch: usize,
    powerlaw: &mut impl Write,
) -> RunResult {
    let path = dir.join(format!("snapshots/epoch_{epoch:04}.topo"));
    let file = File::create(path).map_err(err)?;
    model
        .weights
        .write_snapshot(BufWriter::new(file))
        .map_err(err)?;
    if cfg.pvalues {
        let degrees = model.weights.degree_distribution(Side::Output);
        let mut stream = rng::substream(cfg.seed, 0x706c_0001 ^ ((epoch as u64) << 8));
        if let Ok(r) = sparset::power_law_report(
            &degrees,
            sparset::analysis::DEFAULT_D_MIN,
            cfg.pvalue_mc,
            &mut stream,
        ) {
            writeln!(
                powerlaw,
                "{epoch},hidden,{},{},{},{}",
                r.gamma_hat, r.d_min, r.n_tail, r.p_value
            )
            .map_err(err)?;
        }
    }
    if let Some((h, w)) = cfg.connectivity_shape {
        if model.n_visible() == h * w {
            let map = visible_connectivity_map(&model.weights, h, w).map_err(err)?;
            write_connectivity(dir, epoch, &map)?;
        }
    }
    Ok(())
}

fn run_eval_ais(cfg: &ExperimentConfig) -> RunResult {
    let dir = run_dir(cfg);
    fs::create_dir_all(&dir).map_err(err)?;
    let ckpt_path = cfg
        .checkpoint
        .as_ref()
        .ok_or_else(|| "eval-ais needs [eval] checkpoint".to_string())?;
    let model =
        read_rbm_checkpoint(BufReader::new(File::open(ckpt_path).map_err(err)?)).map_err(err)?;
    let (train, test) = load_split(cfg)?;
    let eval_set = test.as_ref().unwrap_or(&train);

    let mut ais_cfg = AisConfig::from_data(&train.features, cfg.seed);
    ais_cfg.num_betas = cfg.ais_betas;
    ais_cfg.num_chains = cfg.ais_chains;
    let estimate = ais_log_z(&model, &ais_cfg).map_err(err)?;
    let avg = test_log_prob(&model, &eval_set.features, estimate.log_z);

    let mut report = BufWriter::new(File::create(dir.join("ais_report.txt")).map_err(err)?);
    writeln!(report, "checkpoint {}", ckpt_path.display()).map_err(err)?;
    writeln!(report, "num_betas {}", cfg.ais_betas).map_err(err)?;
    writeln!(report, "num_chains {}", cfg.ais_chains).map_err(err)?;
    writeln!(report, "seed {}", cfg.seed).map_err(err)?;
    writeln!(report, "log_z {}", estimate.log_z).map_err(err)?;
    writeln!(report, "log_z_stderr {}", estimate.stderr).map_err(err)?;
    writeln!(report, "avg_test_log_prob {avg}").map_err(err)?;
    println!(
        "log_z {:.4} (stderr {:.4}), avg test log-prob {:.4} nats",
        estimate.log_z, estimate.stderr, avg
    );
    Ok(())
}

fn run_analyze(cfg: &ExperimentConfig) -> RunResult {
    let dir = run_dir(cfg);
    fs::create_dir_all(&dir).map_err(err)?;
    let weights: SparseWeights = if let Some(snap) = &cfg.snapshot {
        SparseWeights::read_snapshot(BufReader::new(File::open(snap).map_err(err)?))
            .map_err(err)?
    } else if let Some(ckpt) = &cfg.checkpoint {
        read_rbm_checkpoint(BufReader::new(File::open(ckpt).map_err(err)?))
            .map_err(err)?
            .weights
    } else {
        return Err("analyze-topology needs a snapshot or checkpoint".into());
    };
    let side = if cfg.analyze_side == "input" {
        Side::Input
    } else {
        Side::Output
    };
    let degrees = weights.degree_distribution(side);

    let mut out = BufWriter::new(File::create(dir.join("powerlaw_report.txt")).map_err(err)?);
    let gamma = fit_power_law(&degrees, cfg.d_min);
    let p_value = null_hypothesis_p_value_at(
        &degrees,
        cfg.d_min,
        cfg.analyze_mc,
        &mut rng::seeded(cfg.seed),
    );
    let n_tail = degrees.iter().filter(|&&d| d >= cfg.d_min).count();
    writeln!(out, "side {}", cfg.analyze_side).map_err(err)?;
    writeln!(out, "d_min {}", cfg.d_min).map_err(err)?;
    writeln!(out, "n_tail {n_tail}").map_err(err)?;
    match &gamma {
        Ok(g) => writeln!(out, "gamma_hat {g}").map_err(err)?,
        Err(e) => writeln!(out, "gamma_hat undefined ({e})").map_err(err)?,
    }
    match &p_value {
        Ok(p) => writeln!(out, "p_value {p}").map_err(err)?,
        Err(e) => writeln!(out, "p_value undefined ({e})").map_err(err)?,
    }

    let mut hist = std::collections::BTreeMap::new();
    for d in &degrees {
        *hist.entry(*d).or_insert(0usize) += 1;
    }
    let mut hcsv = BufWriter::new(File::create(dir.join("degree_histogram.csv")).map_err(err)?);
    writeln!(hcsv, "degree,count").map_err(err)?;
    for (d, c) in hist {
        writeln!(hcsv, "{d},{c}").map_err(err)?;
    }

    if let Some((h, w)) = cfg.connectivity_shape {
        if weights.n_in() == h * w {
            let map = visible_connectivity_map(&weights, h, w).map_err(err)?;
            write_connectivity(&dir, 0, &map)?;
        } else {
            return Err(format!(
                "connectivity shape {h}x{w} does not cover {} input neurons",
                weights.n_in()
            ));
        }
    }
    match (gamma, p_value) {
        (Ok(g), Ok(p)) => println!("gamma_hat {g:.4}, p_value {p:.4}, n_tail {n_tail}"),
        _ => println!("degenerate degree distribution; see powerlaw_report.txt"),
    }
    Ok(())
}

/// Cross-product grid expansion; members run under a bounded worker pool.
fn run_grid(cfg: &ExperimentConfig, raw: &RawConfig, workers: usize) -> RunResult {
    let member_task = cfg
        .member_task
        .ok_or_else(|| "grid needs member_task".to_string())?;
    let axes = &cfg.grid_axes;
    let total: usize = axes.iter().map(|(_, v)| v.len()).product();
    if total == 0 {
        return Err("grid expands to zero members".into());
    }
    let dir = run_dir(cfg);
    fs::create_dir_all(&dir).map_err(err)?;

    // Manifest of member index -> axis values.
    let mut manifest =
        BufWriter::new(File::create(dir.join("grid_manifest.csv")).map_err(err)?);
    let axis_names: Vec<String> = axes.iter().map(|(k, _)| k.clone()).collect();
    writeln!(manifest, "member,seed,{}", axis_names.join(",")).map_err(err)?;

    let mut members = Vec::with_capacity(total);
    for idx in 0..total {
        let mut member_raw = raw.clone();
        member_raw.sections.remove("grid");
        let mut rem = idx;
        let mut values = Vec::new();
        for (key, axis_values) in axes.iter().rev() {
            let v = &axis_values[rem % axis_values.len()];
            rem /= axis_values.len();
            values.push((key.clone(), v.clone()));
        }
        values.reverse();
        for (key, value) in &values {
            let (section, k) = key.split_once('.').unwrap_or(("", key.as_str()));
            member_raw.set(section, k, value);
        }
        let member_seed: u64 = rng::substream(cfg.seed, idx as u64).gen();
        member_raw.set("", "task", member_task.name());
        member_raw.set("", "seed", &member_seed.to_string());
        member_raw.set("", "name", &format!("{}/m{idx:03}", cfg.name));
        member_raw.set("", "out", &cfg.out_dir.to_string_lossy());
        writeln!(
            manifest,
            "m{idx:03},{member_seed},{}",
            values
                .iter()
                .map(|(_, v)| v.clone())
                .collect::<Vec<_>>()
                .join(",")
        )
        .map_err(err)?;
        members.push(member_raw);
    }
    manifest.flush().map_err(err)?;

    let failures: Mutex<Vec<String>> = Mutex::new(Vec::new());
    let next = AtomicUsize::new(0);
    let workers = workers.max(1).min(total);
    std::thread::scope(|scope| {
        for _ in 0..workers {
            scope.spawn(|| loop {
                let idx = next.fetch_add(1, Ordering::Relaxed);
                if idx >= members.len() {
                    break;
                }
                let member_raw = &members[idx];
                let (member_cfg, report) = crate::config::interpret(member_raw);
                let result = if report.findings.is_empty() {
                    run(&member_cfg, member_raw, 1)
                } else {
                    Err(format!("member m{idx:03} invalid: {}", report.findings.join("; ")))
                };
                if let Err(e) = result {
                    failures
                        .lock()
                        .unwrap()
                        .push(format!("member m{idx:03}: {e}"));
                }
            });
        }
    });
    let failures = failures.into_inner().unwrap();
    if failures.is_empty() {
        println!("grid complete: {total} members");
        Ok(())
    } else {
        Err(failures.join("\n"))
    }
}
