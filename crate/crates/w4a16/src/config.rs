//! Machine config files: one `key = value` per line, `#` starts a comment.
//! Keys are the [`MachineConfig`] field names; missing keys keep their
//! defaults.
//!
//! ```text
//! # plausible, not measured
//! num_ai_cores = 24
//! gm_bandwidth = 1.0e12
//! overlap_efficiency = 0.8
//! ```

use std::fs;
use std::path::Path;

use w4a16_core::MachineConfig;

use crate::error::{Error, Result};

pub const KEYS: [&str; 8] = [
    "num_ai_cores",
    "cube_per_core",
    "vec_per_core",
    "gm_bandwidth",
    "cube_macs_per_cycle_per_core",
    "vec_elems_per_cycle_per_core",
    "clock",
    "overlap_efficiency",
];

fn parse_count(line: usize, key: &str, value: &str) -> Result<usize> {
    value.parse().map_err(|_| Error::Config {
        line,
        msg: format!("{key} expects a non-negative integer, got {value:?}"),
    })
}

fn parse_real(line: usize, key: &str, value: &str) -> Result<f64> {
    value.parse().map_err(|_| Error::Config {
        line,
        msg: format!("{key} expects a number, got {value:?}"),
    })
}

pub fn parse_machine_config(text: &str) -> Result<MachineConfig> {
    let mut cfg = MachineConfig::default();
    for (idx, raw) in text.lines().enumerate() {
        let line = idx + 1;
        let content = raw.split('#').next().unwrap_or("").trim();
        if content.is_empty() {
            continue;
        }
        let (key, value) = content.split_once('=').ok_or_else(|| Error::Config {
            line,
            msg: format!("expected `key = value`, got {content:?}"),
        })?;
        let (key, value) = (key.trim(), value.trim());
        match key {
            "num_ai_cores" => cfg.num_ai_cores = parse_count(line, key, value)?,
            "cube_per_core" => cfg.cube_per_core = parse_count(line, key, value)?,
            "vec_per_core" => cfg.vec_per_core = parse_count(line, key, value)?,
            "gm_bandwidth" => cfg.gm_bandwidth = parse_real(line, key, value)?,
            "cube_macs_per_cycle_per_core" => cfg.cube_macs_per_cycle_per_core = parse_real(line, key, value)?,
            "vec_elems_per_cycle_per_core" => cfg.vec_elems_per_cycle_per_core = parse_real(line, key, value)?,
            "clock" => cfg.clock = parse_real(line, key, value)?,
            "overlap_efficiency" => cfg.overlap_efficiency = parse_real(line, key, value)?,
            other => {
                return Err(Error::Config {
                    line,
                    msg: format!("unknown key {other:?} (expected one of {})", KEYS.join(", ")),
                })
            }
        }
    }
    cfg.validate()?;
    Ok(cfg)
}

pub fn load_machine_config(path: &Path) -> Result<MachineConfig> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_machine_config(&text)
}

/// Renders `cfg` in the file format; parsing the output gives `cfg` back.
pub fn render_machine_config(cfg: &MachineConfig) -> String {
    format!(
        "num_ai_cores = {}\ncube_per_core = {}\nvec_per_core = {}\ngm_bandwidth = {:?}\n\
         cube_macs_per_cycle_per_core = {:?}\nvec_elems_per_cycle_per_core = {:?}\nclock = {:?}\n\
         overlap_efficiency = {:?}\n",
        cfg.num_ai_cores,
        cfg.cube_per_core,
        cfg.vec_per_core,
        cfg.gm_bandwidth,
        cfg.cube_macs_per_cycle_per_core,
        cfg.vec_elems_per_cycle_per_core,
        cfg.clock,
        cfg.overlap_efficiency,
    )
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_keys_and_comments() {
        let cfg = parse_machine_config(
            "# test machine\n\nnum_ai_cores = 8   # fewer cores\ngm_bandwidth=2e12\nclock = 1000000000\n",
        )
        .unwrap();
        assert_eq!(cfg.num_ai_cores, 8);
        assert_eq!(cfg.gm_bandwidth, 2e12);
        assert_eq!(cfg.clock, 1e9);
        assert_eq!(cfg.vec_per_core, 2);
    }

    #[test]
    fn empty_file_is_default() {
        assert_eq!(parse_machine_config("").unwrap(), MachineConfig::default());
    }

    #[test]
    fn render_round_trips() {
        let cfg = MachineConfig {
            num_ai_cores: 30,
            gm_bandwidth: 1.6e12,
            overlap_efficiency: 0.75,
            ..MachineConfig::default()
        };
        assert_eq!(parse_machine_config(&render_machine_config(&cfg)).unwrap(), cfg);
        let text = render_machine_config(&cfg);
        for key in KEYS {
            assert!(text.contains(key));
        }
    }

    #[test]
    fn errors_name_the_line() {
        let line_of = |text: &str| match parse_machine_config(text) {
            Err(Error::Config { line, .. }) => line,
            other => panic!("unexpected {other:?}"),
        };
        assert_eq!(line_of("clock = 1e9\nbogus = 3\n"), 2);
        assert_eq!(line_of("num_ai_cores = -1\n"), 1);
        assert_eq!(line_of("\n\nclock fast\n"), 3);
        assert!(matches!(
            parse_machine_config("overlap_efficiency = 1.5"),
            Err(Error::Core(_))
        ));
    }
}
