//! Flat `key = value` configuration files.
//!
//! Blank lines and lines starting with `#` are ignored. Unknown keys are an
//! error so that typos do not silently fall back to defaults.

use std::fmt::Write as _;
use std::path::Path;

use crate::baselines::ThresholdConfig;
use crate::error::{Error, Result};
use crate::hierarchy::{HierarchicalConfig, Stage1Init};

/// Splits text into `(line number, key, value)` triples.
pub fn parse_kv(text: &str) -> Result<Vec<(usize, String, String)>> {
    let mut out = Vec::new();
    for (i, raw) in text.lines().enumerate() {
        let line = raw.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let Some((k, v)) = line.split_once('=') else {
            return Err(Error::Config {
                line: i + 1,
                reason: format!("expected `key = value`, got {line:?}"),
            });
        };
        let (k, v) = (k.trim(), v.trim());
        if k.is_empty() {
            return Err(Error::Config {
                line: i + 1,
                reason: "empty key".into(),
            });
        }
        out.push((i + 1, k.to_string(), v.to_string()));
    }
    Ok(out)
}

/// Every tunable of the classifiers in one place.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct PipelineConfig {
    pub hierarchy: HierarchicalConfig,
    pub thresholds: ThresholdConfig,
}

fn num<T: std::str::FromStr>(line: usize, key: &str, value: &str) -> Result<T> {
    value.parse().map_err(|_| Error::Config {
        line,
        reason: format!("{key}: cannot parse {value:?}"),
    })
}

fn list(line: usize, key: &str, value: &str) -> Result<Vec<f64>> {
    value.split(',').map(|v| num(line, key, v.trim())).collect()
}

fn flag(line: usize, key: &str, value: &str) -> Result<bool> {
    match value {
        "true" | "1" => Ok(true),
        "false" | "0" => Ok(false),
        _ => Err(Error::Config {
            line,
            reason: format!("{key}: expected true/false, got {value:?}"),
        }),
    }
}

fn join(v: &[f64]) -> String {
    v.iter()
        .map(|x| x.to_string())
        .collect::<Vec<_>>()
        .join(",")
}

impl PipelineConfig {
    pub fn from_kv(text: &str) -> Result<Self> {
        let mut cfg = Self::default();
        for (line, key, value) in parse_kv(text)? {
            cfg.set(line, &key, &value)?;
        }
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_kv(&text)
    }

    /// Applies a single setting; `line` is only used in error messages.
    pub fn set(&mut self, line: usize, key: &str, value: &str) -> Result<()> {
        let h = &mut self.hierarchy;
        let th = &mut self.thresholds;
        match key {
            "epochs1" => h.epochs1 = num(line, key, value)?,
            "epochs2" => h.epochs2 = num(line, key, value)?,
            "finetune_t" => h.finetune_t = num(line, key, value)?,
            "finetune_high" => h.finetune_high = flag(line, key, value)?,
            "finetune_low" => h.finetune_low = flag(line, key, value)?,
            "fixation_speed_ceiling" => h.fixation_speed_ceiling = num(line, key, value)?,
            "merge_gap_ms" => h.merge_gap_ms = num(line, key, value)?,
            "merge_dist_deg" => h.merge_dist_deg = num(line, key, value)?,
            "window_ms" => h.window_ms = num(line, key, value)?,
            "min_fixation_ms" => h.min_fixation_ms = num(line, key, value)?,
            "min_pursuit_ms" => h.min_pursuit_ms = num(line, key, value)?,
            "min_saccade_ms" => h.min_saccade_ms = num(line, key, value)?,
            "stage1_init" => {
                h.stage1_init = match value {
                    "two_means" => Stage1Init::TwoMeans,
                    "percentiles" => Stage1Init::Percentiles,
                    _ => {
                        return Err(Error::Config {
                            line,
                            reason: format!(
                                "{key}: expected two_means or percentiles, got {value:?}"
                            ),
                        })
                    }
                }
            }
            "stage1_percentiles" => h.stage1_percentiles = list(line, key, value)?,
            "saccade_min_peak" => h.saccade_min_peak = num(line, key, value)?,
            "stage2_percentiles" => h.stage2_percentiles = list(line, key, value)?,
            "self_transition" => h.self_transition = num(line, key, value)?,
            "hmm3_percentiles" => th.hmm3_percentiles = list(line, key, value)?,
            "v_low" => th.v_low = num(line, key, value)?,
            "v_high" => th.v_high = num(line, key, value)?,
            "v_sac" => th.v_sac = num(line, key, value)?,
            "dispersion_deg" => th.dispersion_deg = num(line, key, value)?,
            "idt_window_ms" => th.idt_window_ms = num(line, key, value)?,
            "direction_window_ms" => th.direction_window_ms = num(line, key, value)?,
            "similarity_cut" => th.similarity_cut = num(line, key, value)?,
            _ => {
                return Err(Error::Config {
                    line,
                    reason: format!("unknown key {key:?}"),
                })
            }
        }
        Ok(())
    }

    pub fn validate(&self) -> Result<()> {
        self.hierarchy.validate()?;
        self.thresholds.validate()
    }

    /// Canonical text form; `from_kv(to_kv())` reproduces the config.
    pub fn to_kv(&self) -> String {
        let h = &self.hierarchy;
        let th = &self.thresholds;
        let mut s = String::new();
        let mut put = |k: &str, v: String| writeln!(s, "{k} = {v}").unwrap();
        put("epochs1", h.epochs1.to_string());
        put("epochs2", h.epochs2.to_string());
        put("finetune_t", h.finetune_t.to_string());
        put("finetune_high", h.finetune_high.to_string());
        put("finetune_low", h.finetune_low.to_string());
        put(
            "fixation_speed_ceiling",
            h.fixation_speed_ceiling.to_string(),
        );
        put("merge_gap_ms", h.merge_gap_ms.to_string());
        put("merge_dist_deg", h.merge_dist_deg.to_string());
        put("window_ms", h.window_ms.to_string());
        put("min_fixation_ms", h.min_fixation_ms.to_string());
        put("min_pursuit_ms", h.min_pursuit_ms.to_string());
        put("min_saccade_ms", h.min_saccade_ms.to_string());
        let init = match h.stage1_init {
            Stage1Init::TwoMeans => "two_means",
            Stage1Init::Percentiles => "percentiles",
        };
        put("stage1_init", init.to_string());
        put("stage1_percentiles", join(&h.stage1_percentiles));
        put("stage2_percentiles", join(&h.stage2_percentiles));
        put("saccade_min_peak", h.saccade_min_peak.to_string());
        put("self_transition", h.self_transition.to_string());
        put("hmm3_percentiles", join(&th.hmm3_percentiles));
        put("v_low", th.v_low.to_string());
        put("v_high", th.v_high.to_string());
        put("v_sac", th.v_sac.to_string());
        put("dispersion_deg", th.dispersion_deg.to_string());
        put("idt_window_ms", th.idt_window_ms.to_string());
        put("direction_window_ms", th.direction_window_ms.to_string());
        put("similarity_cut", th.similarity_cut.to_string());
        s
    }
}
