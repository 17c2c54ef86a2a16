use std::path::{Path, PathBuf};

use serde::Deserialize;

use crate::error::{Error, Result};
use crate::routing::{GameConfig, SolveMethod};

/// Environment variable overriding the default output directory.
pub const OUTPUT_DIR_ENV: &str = "CVARVI_OUTPUT_DIR";

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
struct ExperimentSection {
    #[serde(default = "default_sample_sizes")]
    sample_sizes: Vec<usize>,
    #[serde(default = "default_replications")]
    replications: usize,
    #[serde(default)]
    master_seed: u64,
    #[serde(default = "default_method")]
    method: String,
    output_dir: Option<PathBuf>,
    cache_dir: Option<PathBuf>,
    #[serde(default)]
    record_timings: bool,
}

impl Default for ExperimentSection {
    fn default() -> Self {
        ExperimentSection {
            sample_sizes: default_sample_sizes(),
            replications: default_replications(),
            master_seed: 0,
            method: default_method(),
            output_dir: None,
            cache_dir: None,
            record_timings: false,
        }
    }
}

fn default_sample_sizes() -> Vec<usize> {
    vec![50, 500, 5000]
}
fn default_replications() -> usize {
    500
}
fn default_method() -> String {
    "lemke".into()
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
struct ConfigFile {
    game: GameConfig,
    #[serde(default)]
    experiment: ExperimentSection,
}

/// A game plus the Monte Carlo protocol run on it.
#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentConfig {
    pub game: GameConfig,
    pub sample_sizes: Vec<usize>,
    pub replications: usize,
    pub master_seed: u64,
    pub method: SolveMethod,
    pub output_dir: PathBuf,
    /// Where the reference path CVaRs are cached; `None` disables caching.
    pub cache_dir: Option<PathBuf>,
    /// Also write per-replication wall times to `timings.csv`. Off by
    /// default since timings are the only nondeterministic output.
    pub record_timings: bool,
}

impl ExperimentConfig {
    /// Parses a TOML config. Relative paths resolve against `base`. The
    /// output directory falls back to `$CVARVI_OUTPUT_DIR`, then `out`.
    pub fn from_toml(text: &str, base: &Path) -> Result<Self> {
        let file: ConfigFile = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        let mut game = file.game;
        game.resolve_paths(base);
        let exp = file.experiment;
        let resolve = |p: PathBuf| if p.is_relative() { base.join(p) } else { p };
        let output_dir = match exp.output_dir {
            Some(p) => resolve(p),
            None => std::env::var_os(OUTPUT_DIR_ENV).map_or_else(|| PathBuf::from("out"), PathBuf::from),
        };
        let cfg = ExperimentConfig {
            game,
            sample_sizes: exp.sample_sizes,
            replications: exp.replications,
            master_seed: exp.master_seed,
            method: exp.method.parse()?,
            output_dir,
            cache_dir: exp.cache_dir.map(resolve),
            record_timings: exp.record_timings,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::Config(format!("cannot read {}: {e}", path.display())))?;
        let base = path.parent().unwrap_or(Path::new("."));
        Self::from_toml(&text, base)
    }

    pub fn validate(&self) -> Result<()> {
        if self.sample_sizes.is_empty() || self.sample_sizes[0] == 0 {
            return Err(Error::Config("sample_sizes must be a nonempty list of positive integers".into()));
        }
        if self.sample_sizes.windows(2).any(|w| w[0] >= w[1]) {
            return Err(Error::Config("sample_sizes must be strictly ascending".into()));
        }
        if self.replications == 0 {
            return Err(Error::Config("replications must be >= 1".into()));
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const MINIMAL: &str = r#"
[game]
network = "net.tntp"
[[game.od]]
origin = 1
destination = 2
demand = 1.0
"#;

    #[test]
    fn defaults_fill_in() {
        let cfg = ExperimentConfig::from_toml(
            &format!("{MINIMAL}\n[experiment]\noutput_dir = \"o\"\n"),
            Path::new("/base"),
        )
        .unwrap();
        assert_eq!(cfg.sample_sizes, vec![50, 500, 5000]);
        assert_eq!(cfg.replications, 500);
        assert_eq!(cfg.method, SolveMethod::Lemke);
        assert_eq!(cfg.game.network, PathBuf::from("/base/net.tntp"));
        assert_eq!(cfg.output_dir, PathBuf::from("/base/o"));
        assert_eq!(cfg.game.alpha, 0.05);
        assert!(!cfg.record_timings);
    }

    #[test]
    fn bad_configs_are_rejected() {
        let base = Path::new(".");
        assert!(ExperimentConfig::from_toml("[game]\n", base).is_err());
        let unsorted = format!("{MINIMAL}\n[experiment]\nsample_sizes = [500, 50]\n");
        assert!(ExperimentConfig::from_toml(&unsorted, base).is_err());
        let zero = format!("{MINIMAL}\n[experiment]\nreplications = 0\n");
        assert!(ExperimentConfig::from_toml(&zero, base).is_err());
        let typo = format!("{MINIMAL}\n[experiment]\nreplication = 3\n");
        assert!(ExperimentConfig::from_toml(&typo, base).is_err());
        let method = format!("{MINIMAL}\n[experiment]\nmethod = \"newton\"\n");
        assert!(ExperimentConfig::from_toml(&method, base).is_err());
    }
}
