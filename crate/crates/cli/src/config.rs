//! Flat `key=value` training config files. Unknown keys are errors so a
//! typo cannot silently fall back to a default.

use texsplat::scene::EllipsoidScaleMode;
use texsplat::trainer::TrainConfig;
use texsplat::Error;

#[derive(Debug, Clone)]
pub struct TrainFileConfig {
    pub train: TrainConfig,
    pub color_degree: usize,
    pub opacity_degree: usize,
    pub scale_mode: Option<EllipsoidScaleMode>,
}

impl Default for TrainFileConfig {
    fn default() -> Self {
        TrainFileConfig {
            train: TrainConfig::default(),
            color_degree: 3,
            opacity_degree: 3,
            scale_mode: None,
        }
    }
}

pub fn parse_background(s: &str) -> Result<[f64; 3], Error> {
    let parts: Vec<&str> = s.split(',').collect();
    if parts.len() != 3 {
        return Err(Error::Config(format!(
            "background must be r,g,b with three components, got {s:?}"
        )));
    }
    let mut rgb = [0.0; 3];
    for (slot, part) in rgb.iter_mut().zip(&parts) {
        *slot = part
            .trim()
            .parse::<f64>()
            .map_err(|_| Error::Config(format!("bad background component {part:?}")))?;
        if !(0.0..=1.0).contains(slot) {
            return Err(Error::Config(format!(
                "background component {part:?} outside [0, 1]"
            )));
        }
    }
    Ok(rgb)
}

pub fn parse_config(text: &str) -> Result<TrainFileConfig, Error> {
    let mut cfg = TrainFileConfig::default();
    for (line_no, raw) in text.lines().enumerate() {
        let line = raw.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let (key, value) = line.split_once('=').ok_or_else(|| {
            Error::Config(format!("line {}: expected key=value, got {raw:?}", line_no + 1))
        })?;
        let key = key.trim();
        let value = value.trim();
        let bad = |what: &str| Error::Config(format!("line {}: bad {what} value {value:?}", line_no + 1));

        match key {
            "iterations" => cfg.train.iterations = value.parse().map_err(|_| bad(key))?,
            "lr_color" => cfg.train.lr_color = value.parse().map_err(|_| bad(key))?,
            "lr_opacity" => cfg.train.lr_opacity = value.parse().map_err(|_| bad(key))?,
            "lambda" => cfg.train.lambda = value.parse().map_err(|_| bad(key))?,
            "beta1" => cfg.train.beta1 = value.parse().map_err(|_| bad(key))?,
            "beta2" => cfg.train.beta2 = value.parse().map_err(|_| bad(key))?,
            "epsilon" => cfg.train.epsilon = value.parse().map_err(|_| bad(key))?,
            "eval_every" => cfg.train.eval_every = value.parse().map_err(|_| bad(key))?,
            "checkpoint_every" => cfg.train.checkpoint_every = value.parse().map_err(|_| bad(key))?,
            "seed" => cfg.train.seed = value.parse().map_err(|_| bad(key))?,
            "parallel" => cfg.train.parallel = value.parse().map_err(|_| bad(key))?,
            "background" => cfg.train.background = parse_background(value)?,
            "color_degree" => cfg.color_degree = value.parse().map_err(|_| bad(key))?,
            "opacity_degree" => cfg.opacity_degree = value.parse().map_err(|_| bad(key))?,
            "scale_mode" => cfg.scale_mode = Some(EllipsoidScaleMode::parse(value)?),
            other => {
                return Err(Error::Config(format!(
                    "line {}: unknown key {other:?}",
                    line_no + 1
                )))
            }
        }
    }
    Ok(cfg)
}
