//! Experiment configuration: a sectioned key-value text format, its
//! parser, and static validation that reports every problem it finds.

use std::collections::BTreeMap;
use std::fmt;
use std::path::{Path, PathBuf};

use sparset::layers::Activation;
use sparset::topology::SparsityMode;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Task {
    TrainMlp,
    TrainRbm,
    EvalAis,
    AnalyzeTopology,
    Grid,
}

impl Task {
    pub fn parse(s: &str) -> Option<Task> {
        match s {
            "train-mlp" => Some(Task::TrainMlp),
            "train-rbm" => Some(Task::TrainRbm),
            "eval-ais" => Some(Task::EvalAis),
            "analyze-topology" => Some(Task::AnalyzeTopology),
            "grid" => Some(Task::Grid),
            _ => None,
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            Task::TrainMlp => "train-mlp",
            Task::TrainRbm => "train-rbm",
            Task::EvalAis => "eval-ais",
            Task::AnalyzeTopology => "analyze-topology",
            Task::Grid => "grid",
        }
    }
}

/// Raw parsed config: ordered key-value pairs per section. Section ""
/// holds top-level keys.
#[derive(Debug, Clone, Default)]
pub struct RawConfig {
    pub sections: BTreeMap<String, Vec<(String, String)>>,
    pub path: PathBuf,
}

impl RawConfig {
    pub fn parse_file(path: &Path) -> Result<RawConfig, String> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| format!("{}: {e}", path.display()))?;
        Self::parse_str(&text, path)
    }

    pub fn parse_str(text: &str, path: &Path) -> Result<RawConfig, String> {
        let mut sections: BTreeMap<String, Vec<(String, String)>> = BTreeMap::new();
        let mut current = String::new();
        sections.entry(current.clone()).or_default();
        for (lineno, line) in text.lines().enumerate() {
            let line = match line.find('#') {
                Some(idx) => &line[..idx],
                None => line,
            }
            .trim();
            if line.is_empty() {
                continue;
            }
            if let Some(name) = line.strip_prefix('[') {
                let name = name
                    .strip_suffix(']')
                    .ok_or_else(|| format!("{}:{}: unterminated section", path.display(), lineno + 1))?;
                current = name.trim().to_string();
                sections.entry(current.clone()).or_default();
                continue;
            }
            let (key, value) = line.split_once('=').ok_or_else(|| {
                format!("{}:{}: expected 'key = value'", path.display(), lineno + 1)
            })?;
            sections
                .get_mut(&current)
                .unwrap()
                .push((key.trim().to_string(), value.trim().to_string()));
        }
        Ok(RawConfig {
            sections,
            path: path.to_path_buf(),
        })
    }

    pub fn get(&self, section: &str, key: &str) -> Option<&str> {
        self.sections.get(section).and_then(|kv| {
            kv.iter()
                .rev()
                .find(|(k, _)| k == key)
                .map(|(_, v)| v.as_str())
        })
    }

    pub fn set(&mut self, section: &str, key: &str, value: &str) {
        self.sections
            .entry(section.to_string())
            .or_default()
            .push((key.to_string(), value.to_string()));
    }

    /// Grid axes in file order: (section.key, values).
    pub fn grid_axes(&self) -> Vec<(String, Vec<String>)> {
        self.sections
            .get("grid")
            .map(|kv| {
                kv.iter()
                    .filter(|(k, _)| k != "member_task")
                    .map(|(k, v)| {
                        (
                            k.clone(),
                            v.split(',').map(|s| s.trim().to_string()).collect(),
                        )
                    })
                    .collect()
            })
            .unwrap_or_default()
    }
}

/// Dataset slot of an experiment.
#[derive(Debug, Clone)]
pub enum DatasetSpec {
    Mnist { dir: PathBuf },
    Cifar10 { dir: PathBuf },
    Csv { train: PathBuf, test: Option<PathBuf>, label_column: Option<usize> },
    SparseBinary { train: PathBuf, test: Option<PathBuf> },
    SyntheticPrototype { n_features: usize, n_prototypes: usize, flip_prob: f64, n_train: usize, n_test: usize },
    SyntheticMoons { n_train: usize, n_test: usize, noise: f64 },
    SyntheticLinear { n_train: usize, n_test: usize, margin: f64 },
}

impl DatasetSpec {
    /// Statically known (features, classes), when the format implies them.
    pub fn known_dims(&self) -> (Option<usize>, Option<usize>) {
        match self {
            DatasetSpec::Mnist { .. } => (Some(784), Some(10)),
            DatasetSpec::Cifar10 { .. } => (Some(3072), Some(10)),
            DatasetSpec::Csv { .. } | DatasetSpec::SparseBinary { .. } => (None, None),
            DatasetSpec::SyntheticPrototype { n_features, n_prototypes, .. } => {
                (Some(*n_features), Some(*n_prototypes))
            }
            DatasetSpec::SyntheticMoons { .. } | DatasetSpec::SyntheticLinear { .. } => {
                (Some(2), Some(2))
            }
        }
    }

    pub fn referenced_files(&self) -> Vec<PathBuf> {
        match self {
            DatasetSpec::Mnist { dir } => vec![
                dir.join("train-images-idx3-ubyte"),
                dir.join("train-labels-idx1-ubyte"),
                dir.join("t10k-images-idx3-ubyte"),
                dir.join("t10k-labels-idx1-ubyte"),
            ],
            DatasetSpec::Cifar10 { dir } => {
                let mut files: Vec<PathBuf> = (1..=5)
                    .map(|i| dir.join(format!("data_batch_{i}.bin")))
                    .collect();
                files.push(dir.join("test_batch.bin"));
                files
            }
            DatasetSpec::Csv { train, test, .. }
            | DatasetSpec::SparseBinary { train, test } => {
                let mut files = vec![train.clone()];
                files.extend(test.clone());
                files
            }
            _ => Vec::new(),
        }
    }
}

/// Fully interpreted experiment configuration.
#[derive(Debug, Clone)]
pub struct ExperimentConfig {
    pub task: Task,
    pub name: String,
    pub seed: u64,
    pub out_dir: PathBuf,
    pub dataset: Option<DatasetSpec>,
    pub binarize: Option<f64>,
    pub limit_train: Option<usize>,
    pub limit_test: Option<usize>,
    // model
    pub architecture: Vec<usize>,
    pub hidden: usize,
    pub mode: SparsityMode,
    pub activation: Activation,
    // mlp training
    pub learning_rate: f64,
    pub momentum: f64,
    pub nesterov: bool,
    pub weight_decay_l2: f64,
    pub l1_rate: f64,
    pub dropout: f64,
    pub input_dropout: bool,
    pub epochs: usize,
    pub batch_size: usize,
    pub epsilon: f64,
    pub zeta: f64,
    pub hflip: bool,
    // rbm training
    pub cd_steps: usize,
    pub rbm_learning_rate: f64,
    pub rbm_momentum: f64,
    pub rbm_weight_decay: f64,
    pub rbm_epochs: usize,
    pub rbm_batch_size: usize,
    pub rbm_epsilon: f64,
    pub rbm_zeta: f64,
    pub eval_every: Option<usize>,
    pub eval_method: String,
    pub visible_bias_from_marginals: bool,
    pub ais_betas: usize,
    pub ais_chains: usize,
    // output
    pub snapshot_every: usize,
    pub pvalues: bool,
    pub pvalue_mc: usize,
    pub connectivity_shape: Option<(usize, usize)>,
    // eval-ais / analyze-topology inputs
    pub checkpoint: Option<PathBuf>,
    pub snapshot: Option<PathBuf>,
    pub d_min: usize,
    pub analyze_mc: usize,
    pub analyze_side: String,
    // grid
    pub member_task: Option<Task>,
    pub grid_axes: Vec<(String, Vec<String>)>,
}

pub struct ValidationReport {
    pub findings: Vec<String>,
}

impl fmt::Display for ValidationReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.findings.is_empty() {
            writeln!(f, "configuration valid; no findings")
        } else {
            for finding in &self.findings {
                writeln!(f, "finding: {finding}")?;
            }
            Ok(())
        }
    }
}

/// Root directory that relative dataset paths resolve against.
pub fn data_root() -> PathBuf {
    std::env::var_os("SPARSET_DATA")
        .map(PathBuf::from)
        .unwrap_or_else(|| PathBuf::from("data"))
}

fn resolve_data_path(s: &str) -> PathBuf {
    let p = PathBuf::from(s);
    if p.is_absolute() {
        p
    } else {
        data_root().join(p)
    }
}

/// Interpret a raw config, collecting findings instead of failing fast.
/// Returns the config (usable if findings are empty) plus the report.
pub fn interpret(raw: &RawConfig) -> (ExperimentConfig, ValidationReport) {
    let mut findings = Vec::new();
    let mut f = |msg: String| findings.push(msg);

    let task = match raw.get("", "task") {
        Some(t) => match Task::parse(t) {
            Some(task) => task,
            None => {
                f(format!("unknown task '{t}'"));
                Task::TrainMlp
            }
        },
        None => {
            f("missing top-level 'task'".into());
            Task::TrainMlp
        }
    };
    let name = raw
        .get("", "name")
        .map(str::to_string)
        .unwrap_or_else(|| {
            raw.path
                .file_stem()
                .map(|s| s.to_string_lossy().into_owned())
                .unwrap_or_else(|| "experiment".into())
        });
    let seed = match raw.get("", "seed") {
        Some(s) => s.parse().unwrap_or_else(|_| {
            f(format!("seed '{s}' is not an integer"));
            0
        }),
        None => {
            f("missing top-level 'seed' (a seed is mandatory)".into());
            0
        }
    };
    let out_dir = PathBuf::from(raw.get("", "out").unwrap_or("out"));

    macro_rules! num {
        ($section:expr, $key:expr, $default:expr, $ty:ty) => {
            match raw.get($section, $key) {
                Some(v) => v.parse::<$ty>().unwrap_or_else(|_| {
                    f(format!("[{}] {} '{}' is not a valid number", $section, $key, v));
                    $default
                }),
                None => $default,
            }
        };
    }
    macro_rules! flag {
        ($section:expr, $key:expr, $default:expr) => {
            match raw.get($section, $key) {
                Some("true") => true,
                Some("false") => false,
                Some(v) => {
                    f(format!("[{}] {} '{}' is not true/false", $section, $key, v));
                    $default
                }
                None => $default,
            }
        };
    }

    // Dataset.
    let dataset = match raw.get("dataset", "kind") {
        None => {
            if matches!(task, Task::TrainMlp | Task::TrainRbm | Task::EvalAis | Task::Grid) {
                f("missing [dataset] kind".into());
            }
            None
        }
        Some(kind) => match kind {
            "mnist" | "fashion-mnist" => Some(DatasetSpec::Mnist {
                dir: resolve_data_path(raw.get("dataset", "dir").unwrap_or(kind)),
            }),
            "cifar10" => Some(DatasetSpec::Cifar10 {
                dir: resolve_data_path(raw.get("dataset", "dir").unwrap_or("cifar-10-batches-bin")),
            }),
            "csv" => {
                let train = raw.get("dataset", "train").map(resolve_data_path);
                if train.is_none() {
                    f("[dataset] csv needs 'train = <path>'".into());
                }
                Some(DatasetSpec::Csv {
                    train: train.unwrap_or_default(),
                    test: raw.get("dataset", "test").map(resolve_data_path),
                    label_column: raw.get("dataset", "label_column").and_then(|v| {
                        v.parse().map(Some).unwrap_or_else(|_| {
                            f(format!("[dataset] label_column '{v}' is not an integer"));
                            None
                        })
                    }),
                })
            }
            "sparse-binary" => {
                let train = raw.get("dataset", "train").map(resolve_data_path);
                if train.is_none() {
                    f("[dataset] sparse-binary needs 'train = <path>'".into());
                }
                Some(DatasetSpec::SparseBinary {
                    train: train.unwrap_or_default(),
                    test: raw.get("dataset", "test").map(resolve_data_path),
                })
            }
            "synthetic-prototype" => Some(DatasetSpec::SyntheticPrototype {
                n_features: num!("dataset", "n_features", 20, usize),
                n_prototypes: num!("dataset", "n_prototypes", 4, usize),
                flip_prob: num!("dataset", "flip_prob", 0.1, f64),
                n_train: num!("dataset", "n_train", 2000, usize),
                n_test: num!("dataset", "n_test", 500, usize),
            }),
            "synthetic-moons" => Some(DatasetSpec::SyntheticMoons {
                n_train: num!("dataset", "n_train", 1000, usize),
                n_test: num!("dataset", "n_test", 200, usize),
                noise: num!("dataset", "noise", 0.1, f64),
            }),
            "synthetic-linear" => Some(DatasetSpec::SyntheticLinear {
                n_train: num!("dataset", "n_train", 1000, usize),
                n_test: num!("dataset", "n_test", 200, usize),
                margin: num!("dataset", "margin", 0.1, f64),
            }),
            other => {
                f(format!("unknown dataset kind '{other}'"));
                None
            }
        },
    };
    let binarize = raw.get("dataset", "binarize").and_then(|v| {
        v.parse()
            .map(Some)
            .unwrap_or_else(|_| {
                f(format!("[dataset] binarize '{v}' is not a number"));
                None
            })
    });
    let limit_train = raw.get("dataset", "limit_train").and_then(|v| v.parse().ok());
    let limit_test = raw.get("dataset", "limit_test").and_then(|v| v.parse().ok());

    // Model.
    let architecture: Vec<usize> = match raw.get("model", "architecture") {
        Some(spec) => {
            let parts: Vec<Option<usize>> =
                spec.split('-').map(|p| p.trim().parse().ok()).collect();
            if parts.iter().any(Option::is_none) {
                f(format!("[model] architecture '{spec}' must be sizes joined by '-'"));
                Vec::new()
            } else {
                parts.into_iter().flatten().collect()
            }
        }
        None => Vec::new(),
    };
    let hidden = num!("model", "hidden", 0, usize);
    let mode = match raw.get("model", "mode").unwrap_or("set") {
        "set" => SparsityMode::Set,
        "fixprob" => SparsityMode::FixProb,
        "dense" => SparsityMode::Dense,
        other => {
            f(format!("[model] unknown mode '{other}'"));
            SparsityMode::Set
        }
    };
    let activation = match raw.get("model", "activation").unwrap_or("relu") {
        "relu" => Activation::Relu,
        "srelu" => Activation::Srelu,
        "sigmoid" => Activation::Sigmoid,
        other => {
            f(format!("[model] unsupported hidden activation '{other}'"));
            Activation::Relu
        }
    };

    // MLP training; the optional `regularizer` shorthand overrides the
    // two rate keys.
    let mut weight_decay_l2 = num!("train", "weight_decay_l2", 0.0002, f64);
    let mut l1_rate = num!("train", "l1_rate", 0.0, f64);
    if let Some(reg) = raw.get("train", "regularizer") {
        let mut parts = reg.split_whitespace();
        match (parts.next(), parts.next()) {
            (Some("none"), None) => {
                weight_decay_l2 = 0.0;
                l1_rate = 0.0;
            }
            (Some("l1"), Some(rate)) => match rate.parse() {
                Ok(r) => {
                    l1_rate = r;
                    weight_decay_l2 = 0.0;
                }
                Err(_) => f(format!("[train] regularizer l1 rate '{rate}' invalid")),
            },
            (Some("l2"), Some(rate)) => match rate.parse() {
                Ok(r) => {
                    weight_decay_l2 = r;
                    l1_rate = 0.0;
                }
                Err(_) => f(format!("[train] regularizer l2 rate '{rate}' invalid")),
            },
            _ => f(format!("[train] regularizer '{reg}' must be none | l1 R | l2 R")),
        }
    }

    let config = ExperimentConfig {
        task,
        name,
        seed,
        out_dir,
        dataset,
        binarize,
        limit_train,
        limit_test,
        architecture,
        hidden,
        mode,
        activation,
        learning_rate: num!("train", "learning_rate", 0.01, f64),
        momentum: num!("train", "momentum", 0.9, f64),
        nesterov: flag!("train", "nesterov", false),
        weight_decay_l2,
        l1_rate,
        dropout: num!("train", "dropout", 0.3, f64),
        input_dropout: flag!("train", "input_dropout", false),
        epochs: num!("train", "epochs", 30, usize),
        batch_size: num!("train", "batch_size", 100, usize),
        epsilon: num!("train", "epsilon", 20.0, f64),
        zeta: num!("train", "zeta", 0.3, f64),
        hflip: flag!("train", "hflip", false),
        cd_steps: num!("rbm", "cd_steps", 1, usize),
        rbm_learning_rate: num!("rbm", "learning_rate", 0.01, f64),
        rbm_momentum: num!("rbm", "momentum", 0.9, f64),
        rbm_weight_decay: num!("rbm", "weight_decay", 0.0002, f64),
        rbm_epochs: num!("rbm", "epochs", 100, usize),
        rbm_batch_size: num!("rbm", "batch_size", 100, usize),
        rbm_epsilon: num!("rbm", "epsilon", 11.0, f64),
        rbm_zeta: num!("rbm", "zeta", 0.3, f64),
        eval_every: raw.get("rbm", "eval_every").and_then(|v| v.parse().ok()),
        eval_method: raw.get("rbm", "eval").unwrap_or("exact").to_string(),
        visible_bias_from_marginals: match raw.get("rbm", "visible_bias_init").unwrap_or("zeros") {
            "zeros" => false,
            "marginals" => true,
            other => {
                f(format!("[rbm] visible_bias_init must be zeros|marginals, got '{other}'"));
                false
            }
        },
        ais_betas: num!("rbm", "ais_betas", 1000, usize)
            .max(num!("eval", "betas", 1000, usize)),
        ais_chains: num!("rbm", "ais_chains", 100, usize)
            .max(num!("eval", "chains", 100, usize)),
        snapshot_every: num!("output", "snapshot_every", 10, usize),
        pvalues: flag!("output", "pvalues", false),
        pvalue_mc: num!("output", "pvalue_mc", 1000, usize),
        connectivity_shape: raw.get("output", "connectivity_shape").and_then(|v| {
            match v.split_once('x') {
                Some((h, w)) => match (h.trim().parse(), w.trim().parse()) {
                    (Ok(h), Ok(w)) => Some((h, w)),
                    _ => {
                        f(format!("[output] connectivity_shape '{v}' must be HxW"));
                        None
                    }
                },
                None => {
                    f(format!("[output] connectivity_shape '{v}' must be HxW"));
                    None
                }
            }
        }),
        checkpoint: raw
            .get("eval", "checkpoint")
            .or_else(|| raw.get("analyze", "checkpoint"))
            .map(PathBuf::from),
        snapshot: raw.get("analyze", "snapshot").map(PathBuf::from),
        d_min: num!("analyze", "d_min", sparset::analysis::DEFAULT_D_MIN, usize),
        analyze_mc: num!("analyze", "monte_carlo", 1000, usize),
        analyze_side: raw.get("analyze", "side").unwrap_or("output").to_string(),
        member_task: raw.get("grid", "member_task").map(|t| match Task::parse(t) {
            Some(task) => task,
            None => {
                f(format!("[grid] unknown member_task '{t}'"));
                Task::TrainMlp
            }
        }),
        grid_axes: raw.grid_axes(),
    };

    check_unknown_keys(raw, &mut findings);
    validate(&config, &mut findings);
    (config, ValidationReport { findings })
}

fn check_unknown_keys(raw: &RawConfig, findings: &mut Vec<String>) {
    let known: &[(&str, &[&str])] = &[
        ("", &["task", "name", "seed", "out"]),
        (
            "dataset",
            &[
                "kind", "dir", "train", "test", "label_column", "binarize", "limit_train",
                "limit_test", "n_features", "n_prototypes", "flip_prob", "n_train", "n_test",
                "noise", "margin",
            ],
        ),
        ("model", &["architecture", "hidden", "mode", "activation"]),
        (
            "train",
            &[
                "learning_rate", "momentum", "nesterov", "weight_decay_l2", "l1_rate",
                "regularizer", "dropout", "input_dropout", "epochs", "batch_size", "epsilon",
                "zeta", "hflip",
            ],
        ),
        (
            "rbm",
            &[
                "cd_steps", "learning_rate", "momentum", "weight_decay", "epochs", "batch_size",
                "epsilon", "zeta", "eval_every", "eval", "ais_betas", "ais_chains",
                "visible_bias_init",
            ],
        ),
        (
            "output",
            &["snapshot_every", "pvalues", "pvalue_mc", "connectivity_shape"],
        ),
        ("eval", &["checkpoint", "betas", "chains"]),
        (
            "analyze",
            &["snapshot", "checkpoint", "d_min", "monte_carlo", "side"],
        ),
    ];
    for (section, pairs) in &raw.sections {
        if section == "grid" {
            continue; // grid keys are validated as axes
        }
        match known.iter().find(|(name, _)| name == section) {
            None => findings.push(format!("unknown section [{section}]")),
            Some((_, keys)) => {
                for (key, _) in pairs {
                    if !keys.contains(&key.as_str()) {
                        findings.push(format!("unknown key '{key}' in section [{section}]"));
                    }
                }
            }
        }
    }
}

fn validate(cfg: &ExperimentConfig, findings: &mut Vec<String>) {
    let mut f = |msg: String| findings.push(msg);

    // Parameter ranges.
    let effective_task = match cfg.task {
        Task::Grid => cfg.member_task.unwrap_or(Task::TrainMlp),
        t => t,
    };
    match effective_task {
        Task::TrainMlp => {
            if !(cfg.epsilon > 0.0) {
                f(format!("[train] epsilon must be positive, got {}", cfg.epsilon));
            }
            if !(0.0..1.0).contains(&cfg.zeta) {
                f(format!("[train] zeta must be in [0, 1), got {}", cfg.zeta));
            }
            if !(cfg.learning_rate > 0.0) {
                f(format!("[train] learning_rate must be positive, got {}", cfg.learning_rate));
            }
            if cfg.weight_decay_l2 < 0.0 || cfg.l1_rate < 0.0 || cfg.momentum < 0.0 {
                f("[train] rates must be non-negative".into());
            }
            if !(0.0..1.0).contains(&cfg.dropout) {
                f(format!("[train] dropout must be in [0, 1), got {}", cfg.dropout));
            }
            if cfg.batch_size == 0 || cfg.epochs == 0 {
                f("[train] batch_size and epochs must be >= 1".into());
            }
            if cfg.architecture.len() < 2 {
                f("[model] architecture needs at least input and output sizes".into());
            }
            if cfg.architecture.iter().any(|&n| n == 0) {
                f("[model] architecture sizes must be positive".into());
            }
            if let (Some(&first), (Some(features), _)) =
                (cfg.architecture.first(), known_dims(cfg))
            {
                if cfg.architecture.len() >= 2 && first != features {
                    f(format!(
                        "[model] architecture input {first} does not match dataset features {features}"
                    ));
                }
            }
            if let (Some(&last), (_, Some(classes))) =
                (cfg.architecture.last(), known_dims(cfg))
            {
                if cfg.architecture.len() >= 2 && last != classes {
                    f(format!(
                        "[model] architecture output {last} does not match dataset classes {classes}"
                    ));
                }
            }
            if cfg.hflip {
                let features = cfg.architecture.first().copied().unwrap_or(0);
                if features != 3072 {
                    f("[train] hflip is defined for 3x32x32 planar inputs (3072 features)".into());
                }
            }
        }
        Task::TrainRbm => {
            if !(cfg.rbm_epsilon > 0.0) {
                f(format!("[rbm] epsilon must be positive, got {}", cfg.rbm_epsilon));
            }
            if !(0.0..1.0).contains(&cfg.rbm_zeta) {
                f(format!("[rbm] zeta must be in [0, 1), got {}", cfg.rbm_zeta));
            }
            if cfg.cd_steps == 0 {
                f("[rbm] cd_steps must be >= 1".into());
            }
            if !(cfg.rbm_learning_rate > 0.0) {
                f("[rbm] learning_rate must be positive".into());
            }
            if cfg.rbm_batch_size == 0 || cfg.rbm_epochs == 0 {
                f("[rbm] batch_size and epochs must be >= 1".into());
            }
            if cfg.hidden == 0 {
                f("[model] hidden must be >= 1 for RBM training".into());
            }
            match &cfg.dataset {
                Some(DatasetSpec::SparseBinary { .. })
                | Some(DatasetSpec::SyntheticPrototype { .. }) => {}
                Some(_) if cfg.binarize.is_some() => {}
                Some(_) => {
                    f("[dataset] RBM training needs binary data; set binarize or use a binary format".into())
                }
                None => {}
            }
            if !matches!(cfg.eval_method.as_str(), "exact" | "ais") {
                f(format!("[rbm] eval must be exact|ais, got '{}'", cfg.eval_method));
            }
            if cfg.eval_method == "ais" && (cfg.ais_betas < 2 || cfg.ais_chains < 2) {
                f("[rbm] AIS needs betas >= 2 and chains >= 2".into());
            }
            if let (Some((h, w)), (Some(features), _)) =
                (cfg.connectivity_shape, known_dims(cfg))
            {
                if h * w != features {
                    f(format!(
                        "[output] connectivity_shape {h}x{w} does not cover {features} visible units"
                    ));
                }
            }
        }
        Task::EvalAis => {
            match &cfg.checkpoint {
                Some(path) if !path.exists() => {
                    f(format!("missing file: checkpoint {}", path.display()))
                }
                Some(_) => {}
                None => f("[eval] needs 'checkpoint = <path>'".into()),
            }
            if cfg.ais_betas < 2 || cfg.ais_chains < 2 {
                f("[eval] AIS needs betas >= 2 and chains >= 2".into());
            }
        }
        Task::AnalyzeTopology => {
            match (&cfg.snapshot, &cfg.checkpoint) {
                (None, None) => {
                    f("[analyze] needs 'snapshot = <path>' or 'checkpoint = <path>'".into())
                }
                (Some(p), _) if !p.exists() => f(format!("missing file: snapshot {}", p.display())),
                (_, Some(p)) if !p.exists() => {
                    f(format!("missing file: checkpoint {}", p.display()))
                }
                _ => {}
            }
            if cfg.d_min == 0 {
                f("[analyze] d_min must be >= 1".into());
            }
            if !matches!(cfg.analyze_side.as_str(), "input" | "output") {
                f(format!("[analyze] side must be input|output, got '{}'", cfg.analyze_side));
            }
        }
        Task::Grid => unreachable!("grid resolves to member task"),
    }

    if cfg.task == Task::Grid {
        if cfg.member_task.is_none() {
            f("[grid] needs 'member_task = <task>'".into());
        }
        if cfg.grid_axes.is_empty() {
            f("[grid] needs at least one axis".into());
        }
        for (key, values) in &cfg.grid_axes {
            if values.is_empty() || values.iter().any(String::is_empty) {
                f(format!("[grid] axis '{key}' has empty values"));
            }
            let known = [
                "model.mode",
                "model.activation",
                "train.nesterov",
                "train.regularizer",
                "train.epsilon",
                "train.zeta",
                "train.dropout",
                "rbm.cd_steps",
                "rbm.epsilon",
                "rbm.zeta",
                "model.hidden",
            ];
            if !known.contains(&key.as_str()) {
                f(format!("[grid] unknown axis key '{key}'"));
            }
        }
    }

    // Referenced dataset files.
    if let Some(ds) = &cfg.dataset {
        for path in ds.referenced_files() {
            if !path.exists() {
                f(format!("missing file: {}", path.display()));
            }
        }
    }
}

fn known_dims(cfg: &ExperimentConfig) -> (Option<usize>, Option<usize>) {
    cfg.dataset
        .as_ref()
        .map(|d| d.known_dims())
        .unwrap_or((None, None))
}
