//! Trainer checkpoints: the whole run state as versioned JSON, written
//! atomically at epoch boundaries.

use std::fs;
use std::path::Path;

use sagail_core::train::Trainer;
use serde::{Deserialize, Serialize};

use crate::{AppError, AppResult};

pub const CHECKPOINT_VERSION: u32 = 1;

#[derive(Serialize)]
struct Out<'a> {
    version: u32,
    trainer: &'a Trainer,
}

#[derive(Deserialize)]
struct In {
    version: u32,
    trainer: serde_json::Value,
}

pub fn save(trainer: &Trainer, path: &Path) -> AppResult<()> {
    let text = serde_json::to_string(&Out {
        version: CHECKPOINT_VERSION,
        trainer,
    })
    .map_err(|e| AppError::Runtime(format!("serializing checkpoint: {e}")))?;
    let tmp = path.with_extension("json.tmp");
    fs::write(&tmp, text).map_err(AppError::io(&tmp))?;
    fs::rename(&tmp, path).map_err(AppError::io(path))
}

pub fn load(path: &Path) -> AppResult<Trainer> {
    let text = fs::read_to_string(path).map_err(AppError::io(path))?;
    let raw: In = serde_json::from_str(&text).map_err(|e| AppError::Config(format!("{}: {e}", path.display())))?;
    if raw.version != CHECKPOINT_VERSION {
        return Err(AppError::Config(format!(
            "{}: checkpoint version {} is not supported (expected {CHECKPOINT_VERSION})",
            path.display(),
            raw.version
        )));
    }
    serde_json::from_value(raw.trainer).map_err(|e| AppError::Config(format!("{}: {e}", path.display())))
}

#[cfg(test)]
mod tests {
    use super::*;
    use sagail_core::env::EnvConfig;
    use sagail_core::train::{Algo, Preset, TrainConfig};

    #[test]
    fn round_trip_and_version_check() {
        let mut cfg = TrainConfig::for_env(Preset::Desk, "bitflip4".parse::<EnvConfig>().unwrap(), Algo::Her);
        cfg.epochs = 1;
        cfg.cycles_per_epoch = 1;
        cfg.episodes_per_cycle = 2;
        cfg.policy_batches_per_cycle = 2;
        cfg.policy_batch_size = 8;
        cfg.eval_episodes = 4;
        let mut t = Trainer::new(cfg, 1, None).unwrap();
        t.train_epoch().unwrap();
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("ckpt.json");
        save(&t, &p).unwrap();
        let back = load(&p).unwrap();
        // The RNG serializes its stream position, so equal JSON means equal state.
        assert_eq!(serde_json::to_string(&back).unwrap(), serde_json::to_string(&t).unwrap());
        assert_eq!(back.metrics.len(), 2);

        let bumped = fs::read_to_string(&p).unwrap().replacen("\"version\":1", "\"version\":7", 1);
        fs::write(&p, bumped).unwrap();
        assert!(matches!(load(&p), Err(AppError::Config(m)) if m.contains("version 7")));
    }
}
