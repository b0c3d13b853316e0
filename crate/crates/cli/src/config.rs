//! Run configuration: defaults, named presets, a flat `key = value` file and
//! command-line flags, merged in that order of increasing priority.

use std::collections::BTreeMap;
use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use nvdd::MeasurementConfig;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, clap::ValueEnum)]
pub enum Format {
    #[default]
    Csv,
    Json,
}

impl FromStr for Format {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "csv" => Ok(Format::Csv),
            "json" => Ok(Format::Json),
            _ => Err(format!("unknown format {s:?} (expected csv or json)")),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, clap::ValueEnum)]
pub enum Preset {
    Fig2a,
    Fig2b,
    Fig3a,
    Fig3b,
}

impl Preset {
    fn entries(self) -> &'static [(&'static str, &'static str)] {
        match self {
            Preset::Fig2a | Preset::Fig2b => &[("concentration", "0.011")],
            Preset::Fig3a => &[
                ("concentration", "0.011"),
                ("readout", "1"),
                ("pulse_width", "0"),
                ("pulse_error", "0"),
            ],
            Preset::Fig3b => &[
                ("concentration", "0.011"),
                ("readout", "1"),
                ("pulse_width", "50e-9"),
                ("pulse_error", "0.01"),
            ],
        }
    }
}

/// Configuration problems, reported with exit status 2.
#[derive(Debug)]
pub struct ConfigError(pub String);

impl fmt::Display for ConfigError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

const KEYS: [&str; 7] = [
    "concentration",
    "readout",
    "pulse_width",
    "pulse_error",
    "seed",
    "output",
    "format",
];

fn canonical(key: &str) -> Option<&'static str> {
    let key = if key == "C" { "readout" } else { key };
    KEYS.iter().copied().find(|k| *k == key)
}

/// Parses `key = value` lines; `#` starts a comment.
pub fn parse_config(text: &str) -> Result<BTreeMap<&'static str, String>, ConfigError> {
    let mut out = BTreeMap::new();
    for (i, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let (key, value) = line
            .split_once('=')
            .ok_or_else(|| ConfigError(format!("config line {}: expected key = value", i + 1)))?;
        let key = canonical(key.trim()).ok_or_else(|| {
            ConfigError(format!(
                "config line {}: unknown key {:?}",
                i + 1,
                key.trim()
            ))
        })?;
        out.insert(key, value.trim().to_string());
    }
    Ok(out)
}

/// Values shared by every command after merging all layers.
#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub concentration: f64,
    pub readout: f64,
    pub pulse_width: f64,
    pub pulse_error: f64,
    pub seed: u64,
    pub output: Option<PathBuf>,
    pub format: Format,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            concentration: 0.011,
            readout: 1.0,
            pulse_width: 0.0,
            pulse_error: 0.01,
            seed: 1,
            output: None,
            format: Format::Csv,
        }
    }
}

/// Flag values; `None` means "not given on the command line".
#[derive(Debug, Clone, Default, clap::Args)]
pub struct Overrides {
    /// ¹³C isotope fraction, in (0, 1].
    #[arg(long, global = true)]
    pub concentration: Option<f64>,
    /// Readout efficiency C.
    #[arg(long = "readout", short = 'C', global = true)]
    pub readout: Option<f64>,
    /// π-pulse duration in seconds.
    #[arg(long, global = true)]
    pub pulse_width: Option<f64>,
    /// Contrast lost per pulse.
    #[arg(long, global = true)]
    pub pulse_error: Option<f64>,
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Write results here instead of stdout.
    #[arg(long, short = 'o', global = true)]
    pub output: Option<PathBuf>,
    #[arg(long, value_enum, global = true)]
    pub format: Option<Format>,
}

fn parse_value<T: FromStr>(key: &str, value: &str) -> Result<T, ConfigError>
where
    T::Err: fmt::Display,
{
    value
        .parse()
        .map_err(|e| ConfigError(format!("invalid value {value:?} for {key}: {e}")))
}

impl RunConfig {
    pub fn resolve(
        preset: Option<Preset>,
        file: Option<&Path>,
        flags: &Overrides,
    ) -> Result<Self, ConfigError> {
        let mut cfg = RunConfig::default();
        if let Some(preset) = preset {
            for (key, value) in preset.entries() {
                cfg.set(key, value)?;
            }
        }
        if let Some(path) = file {
            let text = std::fs::read_to_string(path)
                .map_err(|e| ConfigError(format!("cannot read config {}: {e}", path.display())))?;
            for (key, value) in parse_config(&text)? {
                cfg.set(key, &value)?;
            }
        }
        if let Some(v) = flags.concentration {
            cfg.concentration = v;
        }
        if let Some(v) = flags.readout {
            cfg.readout = v;
        }
        if let Some(v) = flags.pulse_width {
            cfg.pulse_width = v;
        }
        if let Some(v) = flags.pulse_error {
            cfg.pulse_error = v;
        }
        if let Some(v) = flags.seed {
            cfg.seed = v;
        }
        if let Some(v) = &flags.output {
            cfg.output = Some(v.clone());
        }
        if let Some(v) = flags.format {
            cfg.format = v;
        }
        Ok(cfg)
    }

    fn set(&mut self, key: &str, value: &str) -> Result<(), ConfigError> {
        match key {
            "concentration" => self.concentration = parse_value(key, value)?,
            "readout" => self.readout = parse_value(key, value)?,
            "pulse_width" => self.pulse_width = parse_value(key, value)?,
            "pulse_error" => self.pulse_error = parse_value(key, value)?,
            "seed" => self.seed = parse_value(key, value)?,
            "output" => self.output = Some(PathBuf::from(value)),
            "format" => self.format = parse_value(key, value)?,
            _ => return Err(ConfigError(format!("unknown key {key:?}"))),
        }
        Ok(())
    }

    pub fn measurement(&self) -> MeasurementConfig {
        MeasurementConfig {
            readout: self.readout,
            pulse_width: self.pulse_width,
            pulse_error: self.pulse_error,
            ..MeasurementConfig::default()
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn file_layer_sits_between_preset_and_flags() {
        let dir = std::env::temp_dir().join(format!("nvdd-config-{}", std::process::id()));
        std::fs::create_dir_all(&dir).unwrap();
        let path = dir.join("run.cfg");
        std::fs::write(
            &path,
            "# comment\nconcentration = 0.003\nC = 0.3 # inline\nseed=9\n",
        )
        .unwrap();
        let flags = Overrides {
            seed: Some(4),
            ..Overrides::default()
        };
        let cfg = RunConfig::resolve(Some(Preset::Fig3b), Some(&path), &flags).unwrap();
        assert_eq!(cfg.concentration, 0.003);
        assert_eq!(cfg.readout, 0.3);
        assert_eq!(cfg.pulse_width, 50e-9);
        assert_eq!(cfg.seed, 4);
        std::fs::remove_dir_all(&dir).ok();
    }

    #[test]
    fn rejects_unknown_keys_and_bad_lines() {
        assert!(parse_config("colour = red").is_err());
        assert!(parse_config("concentration 0.1").is_err());
        assert!(parse_config("\n  # only comments\n").unwrap().is_empty());
    }
}
