//! `key = value` run configuration shared by every subcommand.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use cmunext::data::MetricMode;
use cmunext::model::{Architecture, DecoderKind, EncoderKind};
use cmunext::nn::FusionWidth;
use cmunext::{Error, Result, VariantConfig};

/// Which samples the reported metrics are computed on.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EvalSet {
    /// `split` for corpora loaded from disk, `train` for synthetic data.
    Auto,
    /// The held-out side of the split.
    Split,
    /// Every sample, without holding any out.
    Train,
}

impl EvalSet {
    fn as_str(self) -> &'static str {
        match self {
            EvalSet::Auto => "auto",
            EvalSet::Split => "split",
            EvalSet::Train => "train",
        }
    }
}

impl FromStr for EvalSet {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s {
            "auto" => Ok(EvalSet::Auto),
            "split" => Ok(EvalSet::Split),
            "train" => Ok(EvalSet::Train),
            _ => Err("expected auto, split or train".into()),
        }
    }
}

/// Synthetic corpus request, written `n=32,size=64[,seed=7]`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SyntheticArg {
    pub n: usize,
    pub size: usize,
    pub seed: Option<u64>,
}

impl FromStr for SyntheticArg {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        let mut out = SyntheticArg {
            n: 32,
            size: 64,
            seed: None,
        };
        for part in s.split(',').filter(|p| !p.is_empty()) {
            let (k, v) = part
                .split_once('=')
                .ok_or_else(|| format!("`{part}` is not key=value"))?;
            let num = |v: &str| v.parse::<u64>().map_err(|_| format!("`{v}` is not an integer"));
            match k.trim() {
                "n" => out.n = num(v.trim())? as usize,
                "size" => out.size = num(v.trim())? as usize,
                "seed" => out.seed = Some(num(v.trim())?),
                other => return Err(format!("unknown synthetic field `{other}` (expected n, size, seed)")),
            }
        }
        Ok(out)
    }
}

impl std::fmt::Display for SyntheticArg {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "n={},size={}", self.n, self.size)?;
        if let Some(seed) = self.seed {
            write!(f, ",seed={seed}")?;
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub variant: String,
    pub channels: Option<[usize; 5]>,
    pub depths: Option<[usize; 5]>,
    pub kernels: Option<[usize; 5]>,
    pub in_channels: usize,
    pub fusion_width: FusionWidth,
    pub data: Option<PathBuf>,
    pub prefixes: Vec<String>,
    pub synthetic: Option<SyntheticArg>,
    pub size: usize,
    pub epochs: usize,
    pub batch_size: usize,
    pub lr: f64,
    pub momentum: f32,
    pub weight_decay: f32,
    pub power: f64,
    pub augment: bool,
    pub seed: u64,
    pub seeds: Vec<u64>,
    pub eval_set: EvalSet,
    pub split_file: Option<PathBuf>,
    pub metric_mode: MetricMode,
    pub out_dir: PathBuf,
    pub weights: Option<PathBuf>,
    pub dump_masks: bool,
    pub warmup: usize,
    pub iters: usize,
    pub two_per_mac: bool,
    pub format: String,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            variant: "cmunext".into(),
            channels: None,
            depths: None,
            kernels: None,
            in_channels: 3,
            fusion_width: FusionWidth::Halved,
            data: None,
            prefixes: Vec::new(),
            synthetic: None,
            size: 256,
            epochs: 300,
            batch_size: 8,
            lr: 0.01,
            momentum: 0.9,
            weight_decay: 1e-4,
            power: 0.9,
            augment: true,
            seed: 0,
            seeds: vec![0, 1, 2],
            eval_set: EvalSet::Auto,
            split_file: None,
            metric_mode: MetricMode::SetLevel,
            out_dir: PathBuf::from("runs/latest"),
            weights: None,
            dump_masks: false,
            warmup: 3,
            iters: 10,
            two_per_mac: false,
            format: "table".into(),
        }
    }
}

/// Every accepted key, in the order [`RunConfig::to_text`] prints them.
pub const KEYS: &[&str] = &[
    "variant",
    "channels",
    "depths",
    "kernels",
    "in_channels",
    "fusion_width",
    "data",
    "prefixes",
    "synthetic",
    "size",
    "epochs",
    "batch_size",
    "lr",
    "momentum",
    "weight_decay",
    "power",
    "augment",
    "seed",
    "seeds",
    "eval_set",
    "split_file",
    "metric_mode",
    "out_dir",
    "weights",
    "dump_masks",
    "warmup",
    "iters",
    "two_per_mac",
    "format",
];

fn parse<T: FromStr>(key: &str, value: &str) -> Result<T> {
    value.parse().map_err(|_| Error::Config {
        field: key.into(),
        reason: format!("cannot parse `{value}`"),
    })
}

fn parse_list<T: FromStr>(key: &str, value: &str) -> Result<Vec<T>> {
    value
        .split(',')
        .map(str::trim)
        .filter(|s| !s.is_empty())
        .map(|s| parse(key, s))
        .collect()
}

fn parse_five(key: &str, value: &str) -> Result<Option<[usize; 5]>> {
    if value.is_empty() {
        return Ok(None);
    }
    let v: Vec<usize> = parse_list(key, value)?;
    v.try_into().map(Some).map_err(|v: Vec<usize>| Error::Config {
        field: key.into(),
        reason: format!("expected 5 comma-separated entries, got {}", v.len()),
    })
}

fn opt_path(value: &str) -> Option<PathBuf> {
    (!value.is_empty()).then(|| PathBuf::from(value))
}

fn join<T: ToString>(v: &[T]) -> String {
    v.iter().map(T::to_string).collect::<Vec<_>>().join(",")
}

impl RunConfig {
    /// Sets one key from its textual value. Unknown keys are an error.
    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        let value = value.trim();
        match key {
            "variant" => self.variant = value.to_string(),
            "channels" => self.channels = parse_five(key, value)?,
            "depths" => self.depths = parse_five(key, value)?,
            "kernels" => self.kernels = parse_five(key, value)?,
            "in_channels" => self.in_channels = parse(key, value)?,
            "fusion_width" => self.fusion_width = FusionWidth::parse(value)?,
            "data" => self.data = opt_path(value),
            "prefixes" => self.prefixes = parse_list(key, value)?,
            "synthetic" => {
                self.synthetic = if value.is_empty() {
                    None
                } else {
                    Some(value.parse().map_err(|reason| Error::Config {
                        field: key.into(),
                        reason,
                    })?)
                }
            }
            "size" => self.size = parse(key, value)?,
            "epochs" => self.epochs = parse(key, value)?,
            "batch_size" => self.batch_size = parse(key, value)?,
            "lr" => self.lr = parse(key, value)?,
            "momentum" => self.momentum = parse(key, value)?,
            "weight_decay" => self.weight_decay = parse(key, value)?,
            "power" => self.power = parse(key, value)?,
            "augment" => self.augment = parse(key, value)?,
            "seed" => self.seed = parse(key, value)?,
            "seeds" => self.seeds = parse_list(key, value)?,
            "eval_set" => self.eval_set = parse(key, value)?,
            "split_file" => self.split_file = opt_path(value),
            "metric_mode" => self.metric_mode = MetricMode::parse(value)?,
            "out_dir" => self.out_dir = PathBuf::from(value),
            "weights" => self.weights = opt_path(value),
            "dump_masks" => self.dump_masks = parse(key, value)?,
            "warmup" => self.warmup = parse(key, value)?,
            "iters" => self.iters = parse(key, value)?,
            "two_per_mac" => self.two_per_mac = parse(key, value)?,
            "format" => {
                if value != "table" && value != "kv" {
                    return Err(Error::Config {
                        field: key.into(),
                        reason: format!("expected table or kv, got `{value}`"),
                    });
                }
                self.format = value.to_string();
            }
            other => {
                return Err(Error::Config {
                    field: other.into(),
                    reason: "unknown configuration key".into(),
                })
            }
        }
        Ok(())
    }

    /// Parses `key = value` lines; blank lines and `#` comments are skipped.
    pub fn from_text(text: &str) -> Result<Self> {
        let mut cfg = RunConfig::default();
        cfg.apply_text(text)?;
        Ok(cfg)
    }

    pub fn apply_text(&mut self, text: &str) -> Result<()> {
        for (i, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (k, v) = line
                .split_once('=')
                .ok_or_else(|| Error::Format(format!("config line {}: expected `key = value`, got `{line}`", i + 1)))?;
            self.set(k.trim(), v)?;
        }
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|source| Error::Io {
            path: path.to_path_buf(),
            source,
        })?;
        Self::from_text(&text)
    }

    fn get(&self, key: &str) -> String {
        let five = |v: &Option<[usize; 5]>| v.map(|a| join(&a)).unwrap_or_default();
        let path = |p: &Option<PathBuf>| p.as_ref().map(|p| p.display().to_string()).unwrap_or_default();
        match key {
            "variant" => self.variant.clone(),
            "channels" => five(&self.channels),
            "depths" => five(&self.depths),
            "kernels" => five(&self.kernels),
            "in_channels" => self.in_channels.to_string(),
            "fusion_width" => self.fusion_width.as_str().into(),
            "data" => path(&self.data),
            "prefixes" => self.prefixes.join(","),
            "synthetic" => self.synthetic.map(|s| s.to_string()).unwrap_or_default(),
            "size" => self.size.to_string(),
            "epochs" => self.epochs.to_string(),
            "batch_size" => self.batch_size.to_string(),
            "lr" => self.lr.to_string(),
            "momentum" => self.momentum.to_string(),
            "weight_decay" => self.weight_decay.to_string(),
            "power" => self.power.to_string(),
            "augment" => self.augment.to_string(),
            "seed" => self.seed.to_string(),
            "seeds" => join(&self.seeds),
            "eval_set" => self.eval_set.as_str().into(),
            "split_file" => path(&self.split_file),
            "metric_mode" => self.metric_mode.as_str().into(),
            "out_dir" => self.out_dir.display().to_string(),
            "weights" => path(&self.weights),
            "dump_masks" => self.dump_masks.to_string(),
            "warmup" => self.warmup.to_string(),
            "iters" => self.iters.to_string(),
            "two_per_mac" => self.two_per_mac.to_string(),
            "format" => self.format.clone(),
            _ => unreachable!("KEYS and get() list the same keys"),
        }
    }

    /// Every key, one `key = value` line each; [`RunConfig::from_text`]
    /// reads it back to an equal value.
    pub fn to_text(&self) -> String {
        let mut s = String::new();
        for key in KEYS {
            let _ = writeln!(s, "{key} = {}", self.get(key));
        }
        s
    }

    /// The network configuration: the named variant, with any explicit
    /// channel/depth/kernel lists replacing its rows.
    pub fn variant_config(&self) -> Result<VariantConfig> {
        let explicit = self.channels.is_some() || self.depths.is_some() || self.kernels.is_some();
        let mut cfg = match VariantConfig::by_name(&self.variant) {
            Ok(cfg) => cfg,
            Err(e) if !explicit => return Err(e),
            Err(_) => VariantConfig::cmunext(),
        };
        if explicit {
            cfg.name = "custom".into();
        }
        if let Some(c) = self.channels {
            cfg.channels = c;
        }
        if let Some(d) = self.depths {
            cfg.depths = d;
        }
        if let Some(k) = self.kernels {
            cfg.kernels = k;
        }
        cfg.in_channels = self.in_channels;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn architecture(&self) -> Architecture {
        Architecture {
            encoder: EncoderKind::CmuNext,
            decoder: DecoderKind::SkipFusion(self.fusion_width),
        }
    }
}
