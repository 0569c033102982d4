//! `key=value` run configuration. Later sources win: defaults, then the config
//! file, then `CATDESK_*` environment variables, then command-line overrides.

use std::fmt;
use std::path::PathBuf;

use catdesk_core::am::{DEFAULT_CLIP_NORM, DEFAULT_LR};
use catdesk_core::decode::{DEFAULT_BEAM, DEFAULT_LM_SCALE, DEFAULT_MAX_ACTIVE};
use catdesk_core::loss::DEFAULT_ALPHA;
use catdesk_core::streaming::{
    ChunkPlan, DEFAULT_CHUNK_SIZE, DEFAULT_FRAME_SHIFT_MS, DEFAULT_JITTER, DEFAULT_LAMBDA,
    DEFAULT_LEFT_CONTEXT, DEFAULT_RIGHT_CONTEXT, DEFAULT_SAMPLING_FACTOR,
};

pub const ENV_PREFIX: &str = "CATDESK_";

#[derive(Debug, thiserror::Error, PartialEq, Eq)]
pub enum ConfigError {
    #[error("{origin}: unknown key `{key}`")]
    UnknownKey { origin: String, key: String },
    #[error("{origin}: bad value `{value}` for `{key}`")]
    BadValue {
        origin: String,
        key: String,
        value: String,
    },
    #[error("{origin}: expected `key=value`, found `{line}`")]
    Syntax { origin: String, line: String },
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub seed: u64,
    pub alphabet: usize,
    pub d_in: usize,
    pub d_h: usize,
    pub sigma: f64,
    pub corpus_size: usize,
    pub lm_order: usize,
    pub alpha: f64,
    pub lambda: f64,
    pub chunk_size: usize,
    pub left_context: usize,
    pub right_context: usize,
    pub jitter_fraction: f64,
    pub lr: f64,
    pub clip_norm: f64,
    pub epochs: usize,
    pub batch_size: usize,
    pub workers: usize,
    pub beam: f64,
    pub max_active: usize,
    pub lm_scale: f64,
    pub frame_shift_ms: f64,
    pub sampling_factor: usize,
    pub data_dir: Option<PathBuf>,
    pub lm_path: Option<PathBuf>,
    pub den_path: Option<PathBuf>,
    pub model_path: Option<PathBuf>,
    pub teacher_path: Option<PathBuf>,
    pub log_path: Option<PathBuf>,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            seed: 0,
            alphabet: 3,
            d_in: 2,
            d_h: 16,
            sigma: 0.3,
            corpus_size: 250,
            lm_order: 2,
            alpha: DEFAULT_ALPHA,
            lambda: DEFAULT_LAMBDA,
            chunk_size: DEFAULT_CHUNK_SIZE,
            left_context: DEFAULT_LEFT_CONTEXT,
            right_context: DEFAULT_RIGHT_CONTEXT,
            jitter_fraction: DEFAULT_JITTER,
            lr: DEFAULT_LR,
            clip_norm: DEFAULT_CLIP_NORM,
            epochs: 30,
            batch_size: 8,
            workers: 0,
            beam: DEFAULT_BEAM,
            max_active: DEFAULT_MAX_ACTIVE,
            lm_scale: DEFAULT_LM_SCALE,
            frame_shift_ms: DEFAULT_FRAME_SHIFT_MS,
            sampling_factor: DEFAULT_SAMPLING_FACTOR,
            data_dir: None,
            lm_path: None,
            den_path: None,
            model_path: None,
            teacher_path: None,
            log_path: None,
        }
    }
}

pub const KEYS: &[&str] = &[
    "seed",
    "alphabet",
    "d_in",
    "d_h",
    "sigma",
    "corpus_size",
    "lm_order",
    "alpha",
    "lambda",
    "chunk_size",
    "left_context",
    "right_context",
    "jitter_fraction",
    "lr",
    "clip_norm",
    "epochs",
    "batch_size",
    "workers",
    "beam",
    "max_active",
    "lm_scale",
    "frame_shift_ms",
    "sampling_factor",
    "data_dir",
    "lm_path",
    "den_path",
    "model_path",
    "teacher_path",
    "log_path",
];

impl RunConfig {
    pub fn set(&mut self, key: &str, value: &str, origin: &str) -> Result<(), ConfigError> {
        fn num<T: std::str::FromStr>(key: &str, value: &str, origin: &str) -> Result<T, ConfigError> {
            value.trim().parse().map_err(|_| ConfigError::BadValue {
                origin: origin.to_owned(),
                key: key.to_owned(),
                value: value.to_owned(),
            })
        }
        let path = || Some(PathBuf::from(value.trim()));
        match key {
            "seed" => self.seed = num(key, value, origin)?,
            "alphabet" => self.alphabet = num(key, value, origin)?,
            "d_in" => self.d_in = num(key, value, origin)?,
            "d_h" => self.d_h = num(key, value, origin)?,
            "sigma" => self.sigma = num(key, value, origin)?,
            "corpus_size" => self.corpus_size = num(key, value, origin)?,
            "lm_order" => self.lm_order = num(key, value, origin)?,
            "alpha" => self.alpha = num(key, value, origin)?,
            "lambda" => self.lambda = num(key, value, origin)?,
            "chunk_size" => self.chunk_size = num(key, value, origin)?,
            "left_context" => self.left_context = num(key, value, origin)?,
            "right_context" => self.right_context = num(key, value, origin)?,
            "jitter_fraction" => self.jitter_fraction = num(key, value, origin)?,
            "lr" => self.lr = num(key, value, origin)?,
            "clip_norm" => self.clip_norm = num(key, value, origin)?,
            "epochs" => self.epochs = num(key, value, origin)?,
            "batch_size" => self.batch_size = num(key, value, origin)?,
            "workers" => self.workers = num(key, value, origin)?,
            "beam" => self.beam = num(key, value, origin)?,
            "max_active" => self.max_active = num(key, value, origin)?,
            "lm_scale" => self.lm_scale = num(key, value, origin)?,
            "frame_shift_ms" => self.frame_shift_ms = num(key, value, origin)?,
            "sampling_factor" => self.sampling_factor = num(key, value, origin)?,
            "data_dir" => self.data_dir = path(),
            "lm_path" => self.lm_path = path(),
            "den_path" => self.den_path = path(),
            "model_path" => self.model_path = path(),
            "teacher_path" => self.teacher_path = path(),
            "log_path" => self.log_path = path(),
            _ => {
                return Err(ConfigError::UnknownKey {
                    origin: origin.to_owned(),
                    key: key.to_owned(),
                })
            }
        }
        Ok(())
    }

    /// Applies `key=value` lines; `#` starts a comment.
    pub fn apply_text(&mut self, text: &str, origin: &str) -> Result<(), ConfigError> {
        for (i, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let at = format!("{origin}:{}", i + 1);
            let (k, v) = line.split_once('=').ok_or_else(|| ConfigError::Syntax {
                origin: at.clone(),
                line: raw.to_owned(),
            })?;
            self.set(k.trim(), v, &at)?;
        }
        Ok(())
    }

    /// Applies `CATDESK_<KEY>` variables. Other variables with the prefix are
    /// rejected like unknown file keys.
    pub fn apply_env<I: IntoIterator<Item = (String, String)>>(&mut self, vars: I) -> Result<(), ConfigError> {
        for (name, value) in vars {
            let Some(key) = name.strip_prefix(ENV_PREFIX) else {
                continue;
            };
            self.set(&key.to_ascii_lowercase(), &value, &name)?;
        }
        Ok(())
    }

    pub fn apply_overrides(&mut self, pairs: &[String]) -> Result<(), ConfigError> {
        for p in pairs {
            let (k, v) = p.split_once('=').ok_or_else(|| ConfigError::Syntax {
                origin: "--set".into(),
                line: p.clone(),
            })?;
            self.set(k.trim(), v, "--set")?;
        }
        Ok(())
    }

    pub fn chunk_plan(&self) -> ChunkPlan {
        ChunkPlan {
            chunk_size: self.chunk_size,
            left_context: self.left_context,
            right_context: self.right_context,
            jitter_fraction: self.jitter_fraction,
            seed: self.seed,
        }
    }

    pub fn worker_count(&self) -> usize {
        if self.workers > 0 {
            self.workers
        } else {
            std::thread::available_parallelism().map_or(1, |n| n.get())
        }
    }
}

impl fmt::Display for RunConfig {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let p = |p: &Option<PathBuf>| p.as_ref().map_or(String::new(), |p| p.display().to_string());
        writeln!(f, "seed={}", self.seed)?;
        writeln!(f, "alphabet={}", self.alphabet)?;
        writeln!(f, "d_in={}", self.d_in)?;
        writeln!(f, "d_h={}", self.d_h)?;
        writeln!(f, "sigma={}", self.sigma)?;
        writeln!(f, "corpus_size={}", self.corpus_size)?;
        writeln!(f, "lm_order={}", self.lm_order)?;
        writeln!(f, "alpha={}", self.alpha)?;
        writeln!(f, "lambda={}", self.lambda)?;
        writeln!(f, "chunk_size={}", self.chunk_size)?;
        writeln!(f, "left_context={}", self.left_context)?;
        writeln!(f, "right_context={}", self.right_context)?;
        writeln!(f, "jitter_fraction={}", self.jitter_fraction)?;
        writeln!(f, "lr={}", self.lr)?;
        writeln!(f, "clip_norm={}", self.clip_norm)?;
        writeln!(f, "epochs={}", self.epochs)?;
        writeln!(f, "batch_size={}", self.batch_size)?;
        writeln!(f, "workers={}", self.workers)?;
        writeln!(f, "beam={}", self.beam)?;
        writeln!(f, "max_active={}", self.max_active)?;
        writeln!(f, "lm_scale={}", self.lm_scale)?;
        writeln!(f, "frame_shift_ms={}", self.frame_shift_ms)?;
        writeln!(f, "sampling_factor={}", self.sampling_factor)?;
        for (k, v) in [
            ("data_dir", &self.data_dir),
            ("lm_path", &self.lm_path),
            ("den_path", &self.den_path),
            ("model_path", &self.model_path),
            ("teacher_path", &self.teacher_path),
            ("log_path", &self.log_path),
        ] {
            if v.is_some() {
                writeln!(f, "{k}={}", p(v))?;
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn streaming_and_loss_defaults() {
        let c = RunConfig::default();
        assert_eq!((c.alpha, c.lambda), (0.01, 0.005));
        assert_eq!((c.chunk_size, c.left_context, c.right_context), (40, 10, 10));
        assert_eq!((c.frame_shift_ms, c.sampling_factor), (10.0, 3));
    }

    #[test]
    fn precedence_and_unknown_keys() {
        let mut c = RunConfig::default();
        c.apply_text("# comment\nseed = 4\nlr=0.01\n", "run.cfg").unwrap();
        c.apply_env([("CATDESK_SEED".to_owned(), "5".to_owned()), ("HOME".to_owned(), "/".to_owned())])
            .unwrap();
        assert_eq!((c.seed, c.lr), (5, 0.01));
        c.apply_overrides(&["seed=6".to_owned()]).unwrap();
        assert_eq!(c.seed, 6);
        let err = c.apply_text("sedd=1\n", "run.cfg").unwrap_err();
        assert_eq!(
            err,
            ConfigError::UnknownKey {
                origin: "run.cfg:1".into(),
                key: "sedd".into()
            }
        );
        assert!(c.apply_env([("CATDESK_NOPE".to_owned(), "1".to_owned())]).is_err());
        assert!(c.apply_text("epochs=many\n", "f").is_err());
    }

    #[test]
    fn display_round_trips() {
        let mut c = RunConfig {
            seed: 9,
            data_dir: Some("/tmp/x".into()),
            ..RunConfig::default()
        };
        c.lr = 0.0025;
        let mut back = RunConfig::default();
        back.apply_text(&c.to_string(), "dump").unwrap();
        assert_eq!(back, c);
        assert_eq!(KEYS.len(), 29);
    }
}
