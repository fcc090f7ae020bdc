//! Flat `key = value` experiment configuration.
//!
//! One assignment per line, `#` starts a comment, keys carry dotted section
//! prefixes. Relative paths are resolved against the config file's
//! directory. Every key is optional except where a command needs it; unknown
//! keys are rejected so typos do not silently fall back to defaults.
//!
//! ```text
//! net.preset = lenet-small        # or mlp (net.hidden = 64), or net.layer.N
//! data.source = synthetic         # synthetic | idx | csv
//! data.classes = 10
//! data.shape = 1,16,16
//! data.per_class = 2000
//! data.test_per_class = 200
//! data.separation = 3
//! train.b = 50
//! train.lr = 0.2
//! train.seed = 0
//! scheme.name = sparknet
//! scheme.K = 4
//! scheme.tau = 10
//! cost.C_b = 1
//! cost.S = 20
//! target.calibrate_at = 2000      # or target.a = 0.55
//! budget.iters = 4000
//! eval.every = 20
//! sweep.K = 1,2,4
//! sweep.tau = 1,10,50,100
//! output.dir = out
//! ```

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::str::FromStr;
use std::sync::Arc;

use parasgd_core::analysis::{TargetRule, DEFAULT_TAUS};
use parasgd_core::data::{Dataset, SyntheticSpec};
use parasgd_core::model::{LayerSpec, NetParams, SgdConfig};
use parasgd_core::schemes::{CostModel, Experiment, Scheme};

use crate::error::{CliError, Result};
use crate::io;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Preset {
    LenetSmall,
    Mlp,
}

#[derive(Debug, Clone, PartialEq)]
pub enum NetSource {
    Preset { preset: Preset, hidden: usize },
    Layers(Vec<LayerSpec>),
}

#[derive(Debug, Clone, PartialEq)]
pub enum DataSource {
    Synthetic { spec: SyntheticSpec, per_class: usize, test_per_class: usize },
    Idx { train: (PathBuf, PathBuf), test: (PathBuf, PathBuf), classes: Option<usize> },
    Csv { train: PathBuf, test: PathBuf, layout: [usize; 3], classes: usize },
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentConfig {
    pub net: NetSource,
    pub data: DataSource,
    pub b: usize,
    pub learning_rate: f64,
    pub momentum: f64,
    pub seed: u64,
    /// Whether `data.seed` was given; otherwise the data follows `train.seed`.
    pub data_seed_fixed: bool,
    pub warm_start: u64,
    pub scheme: Scheme,
    pub k: usize,
    pub tau: u64,
    pub cost: CostModel,
    pub target: Option<TargetRule>,
    /// Iteration budget (serial/naive), or parallel iterations for
    /// SparkNet runs and sweep cells.
    pub budget_iters: u64,
    /// Explicit SparkNet round budget; defaults to ⌈iters/τ⌉.
    pub budget_rounds: Option<u64>,
    /// Simulated-time budget for the τ sweep.
    pub time_budget: Option<f64>,
    pub eval_every: u64,
    pub eval_batch: usize,
    pub stop_at_target: bool,
    pub sweep_k: Vec<usize>,
    pub sweep_tau: Vec<u64>,
    pub sweep_s: Vec<f64>,
    pub output_dir: Option<PathBuf>,
}

struct Entries {
    map: BTreeMap<String, String>,
    base: PathBuf,
}

impl Entries {
    fn take(&mut self, key: &str) -> Option<String> {
        self.map.remove(key)
    }

    fn parse<T: FromStr>(&mut self, key: &str, default: T) -> Result<T> {
        match self.take(key) {
            None => Ok(default),
            Some(v) => v.parse().map_err(|_| CliError::config(key, format!("cannot parse {v:?}"))),
        }
    }

    fn opt<T: FromStr>(&mut self, key: &str) -> Result<Option<T>> {
        match self.take(key) {
            None => Ok(None),
            Some(v) => v.parse().map(Some).map_err(|_| CliError::config(key, format!("cannot parse {v:?}"))),
        }
    }

    fn list<T: FromStr>(&mut self, key: &str, default: Vec<T>) -> Result<Vec<T>> {
        match self.take(key) {
            None => Ok(default),
            Some(v) => v
                .split(',')
                .map(|s| s.trim().parse().map_err(|_| CliError::config(key, format!("bad list entry {s:?}"))))
                .collect(),
        }
    }

    fn path(&mut self, key: &str) -> Result<PathBuf> {
        let v = self.take(key).ok_or_else(|| CliError::config(key, "required"))?;
        let p = self.base.join(v);
        if !p.is_file() {
            return Err(CliError::config(key, format!("{} does not exist", p.display())));
        }
        Ok(p)
    }
}

fn positive<T: PartialOrd + Default + Copy + std::fmt::Display>(key: &str, v: T) -> Result<T> {
    if v > T::default() {
        Ok(v)
    } else {
        Err(CliError::config(key, format!("must be >= 1 / positive, got {v}")))
    }
}

fn shape3(key: &str, v: Vec<usize>) -> Result<[usize; 3]> {
    match v[..] {
        [c, h, w] if c > 0 && h > 0 && w > 0 => Ok([c, h, w]),
        _ => Err(CliError::config(key, "expected channels,height,width")),
    }
}

impl ExperimentConfig {
    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
        let base = path.parent().map(Path::to_path_buf).unwrap_or_default();
        Self::parse(&text, &base)
    }

    pub fn parse(text: &str, base: &Path) -> Result<Self> {
        let mut map = BTreeMap::new();
        for (i, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (k, v) = line
                .split_once('=')
                .ok_or_else(|| CliError::config(format!("line {}", i + 1), "expected key = value"))?;
            let key = k.trim().to_string();
            if map.insert(key.clone(), v.trim().to_string()).is_some() {
                return Err(CliError::config(key, "assigned twice"));
            }
        }
        let mut e = Entries { map, base: base.to_path_buf() };

        let b = positive("train.b", e.parse("train.b", 50usize)?)?;
        let learning_rate = e.parse("train.lr", 0.01f64)?;
        if !(learning_rate > 0.0 && learning_rate.is_finite()) {
            return Err(CliError::config("train.lr", "must be positive"));
        }
        let momentum = e.parse("train.momentum", 0.0f64)?;
        if !(0.0..1.0).contains(&momentum) {
            return Err(CliError::config("train.momentum", "must lie in [0, 1)"));
        }
        let seed = e.parse("train.seed", 0u64)?;
        let warm_start = e.parse("train.warm_start", 50u64)?;

        let scheme_name = e.take("scheme.name").unwrap_or_else(|| "serial".into());
        let scheme = scheme_name
            .parse::<Scheme>()
            .map_err(|err| CliError::config("scheme.name", err.to_string()))?;
        let k = positive("scheme.K", e.parse("scheme.K", 1usize)?)?;
        let tau = positive("scheme.tau", e.parse("scheme.tau", 50u64)?)?;

        let c_b = e.parse("cost.C_b", 1.0f64)?;
        let s = e.parse("cost.S", 0.0f64)?;
        let gamma = e.parse("cost.gamma", 1.0f64)?;
        let cost = CostModel::with_gamma(c_b, s, gamma).map_err(|err| CliError::config("cost", err.to_string()))?;

        let fixed: Option<f64> = e.opt("target.a")?;
        let calibrate: Option<u64> = e.opt("target.calibrate_at")?;
        let window: Option<u64> = e.opt("target.window")?;
        let target = match (fixed, calibrate) {
            (Some(_), Some(_)) => {
                return Err(CliError::config("target", "give either target.a or target.calibrate_at, not both"))
            }
            (Some(a), None) if a > 0.0 && a <= 1.0 => Some(TargetRule::Fixed(a)),
            (Some(a), None) => return Err(CliError::config("target.a", format!("must lie in (0, 1], got {a}"))),
            (None, Some(at)) => {
                let at = positive("target.calibrate_at", at)?;
                let window = window.unwrap_or(at / 10).max(1);
                Some(TargetRule::Calibrated { at, window })
            }
            (None, None) => None,
        };

        let budget_iters = e.parse("budget.iters", 2000u64)?;
        let budget_rounds = e.opt("budget.rounds")?;
        let time_budget: Option<f64> = e.opt("budget.time")?;
        if let Some(t) = time_budget {
            positive("budget.time", t)?;
        }
        let eval_every = positive("eval.every", e.parse("eval.every", 100u64)?)?;
        let eval_batch = positive("eval.batch", e.parse("eval.batch", 100usize)?)?;
        let stop_at_target = e.parse("eval.stop_at_target", false)?;

        let sweep_k = e.list("sweep.K", vec![1, 2, 4])?;
        let sweep_tau = e.list("sweep.tau", DEFAULT_TAUS.to_vec())?;
        let sweep_s: Vec<f64> = e.list("sweep.S", vec![0.0, 1.0, 2.0, 5.0, 10.0, 20.0, 50.0, 100.0])?;
        if sweep_k.is_empty() || sweep_k.contains(&0) {
            return Err(CliError::config("sweep.K", "entries must be >= 1"));
        }
        if sweep_tau.is_empty() || sweep_tau.contains(&0) {
            return Err(CliError::config("sweep.tau", "entries must be >= 1"));
        }
        if sweep_s.iter().any(|s| !(*s >= 0.0 && s.is_finite())) {
            return Err(CliError::config("sweep.S", "entries must be >= 0"));
        }
        let output_dir = e.take("output.dir").map(|d| e.base.join(d));

        let data_seed: Option<u64> = e.opt("data.seed")?;
        let data = Self::parse_data(&mut e, data_seed.unwrap_or(seed))?;
        let net = Self::parse_net(&mut e)?;

        if let Some(key) = e.map.keys().next() {
            return Err(CliError::config(key.clone(), "unknown key"));
        }
        Ok(Self {
            net,
            data,
            b,
            learning_rate,
            momentum,
            seed,
            data_seed_fixed: data_seed.is_some(),
            warm_start,
            scheme,
            k,
            tau,
            cost,
            target,
            budget_iters,
            budget_rounds,
            time_budget,
            eval_every,
            eval_batch,
            stop_at_target,
            sweep_k,
            sweep_tau,
            sweep_s,
            output_dir,
        })
    }

    fn parse_data(e: &mut Entries, seed: u64) -> Result<DataSource> {
        let source = e.take("data.source").unwrap_or_else(|| "synthetic".into());
        match source.as_str() {
            "synthetic" => {
                let num_classes = positive("data.classes", e.parse("data.classes", 10usize)?)?;
                let dims = shape3("data.shape", e.list("data.shape", vec![1, 16, 16])?)?;
                let separation = e.parse("data.separation", 3.0f64)?;
                if !(separation >= 0.0 && separation.is_finite()) {
                    return Err(CliError::config("data.separation", "must be >= 0"));
                }
                let per_class = positive("data.per_class", e.parse("data.per_class", 500usize)?)?;
                let test_per_class = positive("data.test_per_class", e.parse("data.test_per_class", 50usize)?)?;
                let spec = SyntheticSpec { num_classes, dims, separation, seed };
                Ok(DataSource::Synthetic { spec, per_class, test_per_class })
            }
            "idx" => Ok(DataSource::Idx {
                train: (e.path("data.train_images")?, e.path("data.train_labels")?),
                test: (e.path("data.test_images")?, e.path("data.test_labels")?),
                classes: e.opt("data.classes")?,
            }),
            "csv" => Ok(DataSource::Csv {
                train: e.path("data.train_csv")?,
                test: e.path("data.test_csv")?,
                layout: shape3("data.shape", e.list("data.shape", vec![1, 28, 28])?)?,
                classes: positive("data.classes", e.parse("data.classes", 10usize)?)?,
            }),
            other => Err(CliError::config("data.source", format!("unknown source {other:?}; valid: synthetic, idx, csv"))),
        }
    }

    fn parse_net(e: &mut Entries) -> Result<NetSource> {
        let mut layers: Vec<(usize, String)> = Vec::new();
        let keys: Vec<String> = e.map.keys().filter(|k| k.starts_with("net.layer.")).cloned().collect();
        for key in keys {
            let idx: usize = key["net.layer.".len()..]
                .parse()
                .map_err(|_| CliError::config(&key, "layer keys are net.layer.<index>"))?;
            let spec = e.take(&key).unwrap_or_default();
            layers.push((idx, spec));
        }
        let preset = e.take("net.preset");
        let hidden = e.parse("net.hidden", 64usize)?;
        if !layers.is_empty() {
            if preset.is_some() {
                return Err(CliError::config("net.preset", "cannot be combined with net.layer.*"));
            }
            layers.sort_by_key(|(i, _)| *i);
            let specs = layers
                .into_iter()
                .map(|(i, s)| s.parse::<LayerSpec>().map_err(|err| CliError::config(format!("net.layer.{i}"), err.to_string())))
                .collect::<Result<Vec<_>>>()?;
            NetParams::new(specs.clone()).map_err(|err| CliError::config("net.layer", err.to_string()))?;
            return Ok(NetSource::Layers(specs));
        }
        let preset = match preset.as_deref().unwrap_or("lenet-small") {
            "lenet-small" => Preset::LenetSmall,
            "mlp" => Preset::Mlp,
            other => return Err(CliError::config("net.preset", format!("unknown preset {other:?}; valid: lenet-small, mlp"))),
        };
        Ok(NetSource::Preset { preset, hidden: positive("net.hidden", hidden)? })
    }

    /// Train and test datasets.
    pub fn load_data(&self) -> Result<(Dataset, Dataset)> {
        match &self.data {
            DataSource::Synthetic { spec, per_class, test_per_class } => {
                Ok((spec.generate_split(*per_class, 0)?, spec.generate_split(*test_per_class, 1)?))
            }
            DataSource::Idx { train, test, classes } => {
                let tr = io::load_idx(&train.0, &train.1, *classes)?;
                let te = io::load_idx(&test.0, &test.1, Some(tr.num_classes()))?;
                Ok((tr, te))
            }
            DataSource::Csv { train, test, layout, classes } => {
                Ok((io::load_csv(train, *layout, *classes)?, io::load_csv(test, *layout, *classes)?))
            }
        }
    }

    pub fn net_params(&self, dims: [usize; 3], num_classes: usize) -> Result<NetParams> {
        let params = match &self.net {
            NetSource::Preset { preset: Preset::LenetSmall, .. } => NetParams::lenet_small(self.b, dims, num_classes),
            NetSource::Preset { preset: Preset::Mlp, hidden } => NetParams::mlp(self.b, dims, *hidden, num_classes),
            NetSource::Layers(layers) => NetParams::new(layers.clone()),
        };
        let params = params.map_err(|err| CliError::config("net", err.to_string()))?;
        if params.input_dims() != dims || params.num_classes() != num_classes {
            return Err(CliError::config(
                "net",
                format!(
                    "network expects {:?} inputs and {} classes, data has {dims:?} and {num_classes}",
                    params.input_dims(),
                    params.num_classes()
                ),
            ));
        }
        Ok(params)
    }

    pub fn experiment(&self) -> Result<Experiment> {
        let (train, test) = self.load_data()?;
        let net = self.net_params(train.dims(), train.num_classes())?;
        if self.b > train.len() {
            return Err(CliError::config("train.b", format!("larger than the {} training examples", train.len())));
        }
        Ok(Experiment {
            net,
            train: Arc::new(train),
            validation: Arc::new(test),
            batch_size: self.b,
            sgd: SgdConfig { learning_rate: self.learning_rate, momentum: self.momentum },
            seed: self.seed,
            eval_batch: self.eval_batch,
        })
    }

    /// Applies a `--seed` override; synthetic data follows unless `data.seed`
    /// was pinned.
    pub fn override_seed(&mut self, seed: u64) {
        self.seed = seed;
        if let DataSource::Synthetic { spec, .. } = &mut self.data {
            if !self.data_seed_fixed {
                spec.seed = seed;
            }
        }
    }

    pub fn target_rule(&self) -> Result<TargetRule> {
        self.target.ok_or_else(|| CliError::config("target", "this command needs target.a or target.calibrate_at"))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn parse(text: &str) -> Result<ExperimentConfig> {
        ExperimentConfig::parse(text, Path::new("."))
    }

    #[test]
    fn defaults_and_overrides() {
        let c = parse("train.b = 20\nscheme.name = naive # comment\nscheme.K=4\ncost.S=20\n").unwrap();
        assert_eq!(c.b, 20);
        assert_eq!(c.scheme, Scheme::Naive);
        assert_eq!(c.k, 4);
        assert_eq!(c.cost.s, 20.0);
        assert_eq!(c.sweep_tau, DEFAULT_TAUS.to_vec());
        assert!(c.target.is_none());
    }

    #[test]
    fn errors_name_the_field() {
        let field = |text: &str| match parse(text).unwrap_err() {
            CliError::Config { field, .. } => field,
            other => panic!("{other}"),
        };
        assert_eq!(field("train.b = 0"), "train.b");
        assert_eq!(field("scheme.tau = 0"), "scheme.tau");
        assert_eq!(field("target.a = 1.5"), "target.a");
        assert_eq!(field("train.bb = 3"), "train.bb");
        assert_eq!(field("scheme.name = hogwild"), "scheme.name");
        assert_eq!(field("train.lr = 0.1\ntrain.lr = 0.2"), "train.lr");
        assert_eq!(field("data.source = idx"), "data.train_images");
        assert_eq!(field("net.layer.0 = bogus name=x"), "net.layer.0");
    }

    #[test]
    fn unknown_scheme_lists_valid_names() {
        let err = parse("scheme.name = hogwild").unwrap_err();
        assert_eq!(err.exit_code(), 2);
        assert!(err.to_string().contains("serial, naive, sparknet"), "{err}");
    }

    #[test]
    fn inline_layers() {
        let text = "data.shape = 1,4,4\ndata.classes = 3\n\
            net.layer.0 = data name=data shape=8,1,4,4\n\
            net.layer.1 = label name=label shape=8,1\n\
            net.layer.2 = linear name=ip inputs=data outputs=3\n\
            net.layer.10 = softmax-loss name=loss inputs=ip,label\n";
        let c = parse(text).unwrap();
        let NetSource::Layers(layers) = &c.net else { panic!() };
        assert_eq!(layers.len(), 4);
        assert_eq!(layers[3].name, "loss");
        assert!(c.net_params([1, 4, 4], 3).is_ok());
        assert!(c.net_params([1, 4, 4], 4).is_err());
    }

    #[test]
    fn calibrated_target_default_window() {
        let c = parse("target.calibrate_at = 2000").unwrap();
        assert_eq!(c.target, Some(TargetRule::Calibrated { at: 2000, window: 200 }));
    }

    #[test]
    fn seed_override_moves_unpinned_data() {
        let mut c = parse("train.seed = 1").unwrap();
        c.override_seed(7);
        let DataSource::Synthetic { spec, .. } = &c.data else { panic!() };
        assert_eq!(spec.seed, 7);
        let mut c = parse("data.seed = 1").unwrap();
        c.override_seed(7);
        let DataSource::Synthetic { spec, .. } = &c.data else { panic!() };
        assert_eq!(spec.seed, 1);
    }
}
