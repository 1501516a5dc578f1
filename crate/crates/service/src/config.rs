//! TOML configuration files.

use std::path::Path;

use anyhow::{Context, Result};
use polestar_core::engine::EngineConfig;
use serde::de::DeserializeOwned;

/// Parses a TOML file; a missing path means defaults.
pub fn load_or_default<T: DeserializeOwned + Default>(path: Option<&Path>) -> Result<T> {
    match path {
        Some(p) => load(p),
        None => Ok(T::default()),
    }
}

pub fn load<T: DeserializeOwned>(path: &Path) -> Result<T> {
    let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    toml::from_str(&text).with_context(|| format!("parsing {}", path.display()))
}

/// `engine.toml` with paths resolved against its directory.
pub fn load_engine_config(path: &Path) -> Result<EngineConfig> {
    let mut cfg: EngineConfig = load(path)?;
    cfg.resolve_paths(path.parent().unwrap_or(Path::new(".")));
    for (what, p) in
        [("ptg", Some(&cfg.ptg)), ("cache", Some(&cfg.cache)), ("data", Some(&cfg.data)), ("model", cfg.model.as_ref())]
    {
        if let Some(p) = p {
            anyhow::ensure!(p.exists(), "{}: {what} path {} does not exist", path.display(), p.display());
        }
    }
    Ok(cfg)
}

#[cfg(test)]
mod tests {
    use super::*;
    use polestar_core::ptg::WeightConfig;
    use polestar_core::rerank::GbdtParams;

    #[test]
    fn partial_files_fill_in_defaults() {
        let w: WeightConfig = toml::from_str("transfer_penalty_s = 90.0").unwrap();
        assert_eq!(w.transfer_penalty_s, 90.0);
        assert_eq!(w.walk_speed_mps, WeightConfig::default().walk_speed_mps);
        let p: GbdtParams = toml::from_str("beta = 5.0\nn_trees = 50").unwrap();
        assert_eq!((p.beta, p.n_trees, p.max_depth), (5.0, 50, 6));
        assert!(toml::from_str::<GbdtParams>("betta = 5.0").is_err());
    }

    #[test]
    fn engine_paths_resolve_against_the_file() {
        let dir = tempfile::tempdir().unwrap();
        for f in ["ptg.bin", "cache.bin"] {
            std::fs::write(dir.path().join(f), b"").unwrap();
        }
        std::fs::create_dir(dir.path().join("data")).unwrap();
        let path = dir.path().join("engine.toml");
        std::fs::write(&path, "ptg = \"ptg.bin\"\ncache = \"cache.bin\"\ndata = \"data\"\n[pipeline]\nbind_k = 2\n").unwrap();
        let cfg = load_engine_config(&path).unwrap();
        assert_eq!(cfg.ptg, dir.path().join("ptg.bin"));
        assert_eq!(cfg.pipeline.bind_k, 2);
        assert_eq!(cfg.listen, "127.0.0.1:8080");

        std::fs::write(&path, "ptg = \"nope.bin\"\ncache = \"cache.bin\"\ndata = \"data\"\n").unwrap();
        assert!(load_engine_config(&path).unwrap_err().to_string().contains("nope.bin"));
    }
}
