//! Flat key=value scene/simulation config files.
//!
//! One file describes both the scene and the sensor. Lines are `key = value`,
//! `#` starts a comment, and unknown keys are rejected so that configs stay
//! auditable. Example:
//!
//! ```text
//! kind = translating_blob
//! width = 160
//! height = 120
//! duration_us = 2000000
//! contrast_threshold = 0.2
//! blob_peak = 1.2
//! blob_sigma = 4
//! center_x = 40
//! center_y = 60
//! velocity_x = 20
//! velocity_y = 0
//! queries = 40:60;42:60
//! ```
//!
//! Common keys: `kind`, `width`, `height`, `duration_us`,
//! `contrast_threshold`, `dt_integration_us`, `refractory_us`, `noise_rate`,
//! `seed`, `background`, `gt_steps`, `queries`.
//! Per kind:
//! - `translating_edge`: `edge_contrast`, `edge_x`, `velocity_x`,
//!   `velocity_y`, `ramp_width`.
//! - `translating_blob`: `blob_peak`, `blob_sigma`, `center_x`, `center_y`,
//!   `velocity_x`, `velocity_y`.
//! - `rotating_stick`: `stick_contrast`, `stick_length`, `stick_half_width`,
//!   `pivot_x`, `pivot_y`, `angular_velocity`.
//! - `sinusoidal_blob`: `blob_peak`, `blob_sigma`, `center_x`, `center_y`,
//!   `osc_amplitude`, `osc_frequency`, `axis_x`, `axis_y`.

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use evtap_core::{Scene, SceneKind, SimConfig, Vec2};

use crate::FormatError;

struct KeyMap<'p> {
    path: &'p Path,
    entries: BTreeMap<String, (usize, String)>,
}

impl<'p> KeyMap<'p> {
    fn parse(path: &'p Path, text: &str) -> Result<Self, FormatError> {
        let mut entries = BTreeMap::new();
        for (idx, raw_line) in text.lines().enumerate() {
            let line_no = idx + 1;
            let line = raw_line.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (key, value) = line.split_once('=').ok_or_else(|| {
                FormatError::parse(path, line_no, "expected `key = value`")
            })?;
            let key = key.trim().to_string();
            let value = value.trim().to_string();
            if key.is_empty() || value.is_empty() {
                return Err(FormatError::parse(path, line_no, "empty key or value"));
            }
            if entries.insert(key.clone(), (line_no, value)).is_some() {
                return Err(FormatError::parse(
                    path,
                    line_no,
                    format!("duplicate key `{key}`"),
                ));
            }
        }
        Ok(KeyMap { path, entries })
    }

    fn take(&mut self, key: &str) -> Option<(usize, String)> {
        self.entries.remove(key)
    }

    fn required<T: std::str::FromStr>(&mut self, key: &str) -> Result<T, FormatError> {
        let (line, value) = self.take(key).ok_or_else(|| {
            FormatError::validation(self.path, format!("missing required key `{key}`"))
        })?;
        value.parse().map_err(|_| {
            FormatError::parse(self.path, line, format!("bad value `{value}` for `{key}`"))
        })
    }

    fn optional<T: std::str::FromStr>(&mut self, key: &str, default: T) -> Result<T, FormatError> {
        match self.take(key) {
            None => Ok(default),
            Some((line, value)) => value.parse().map_err(|_| {
                FormatError::parse(self.path, line, format!("bad value `{value}` for `{key}`"))
            }),
        }
    }

    fn finish(self) -> Result<(), FormatError> {
        if let Some((key, (line, _))) = self.entries.into_iter().next() {
            return Err(FormatError::parse(
                self.path,
                line,
                format!("unknown key `{key}`"),
            ));
        }
        Ok(())
    }
}

/// Parses `x:y` pairs separated by `;`.
fn parse_queries(path: &Path, line: usize, raw: &str) -> Result<Vec<Vec2>, FormatError> {
    let mut out = Vec::new();
    for part in raw.split(';') {
        let part = part.trim();
        if part.is_empty() {
            continue;
        }
        let (x, y) = part.split_once(':').ok_or_else(|| {
            FormatError::parse(path, line, format!("query `{part}` must be `x:y`"))
        })?;
        let x: f64 = x.trim().parse().map_err(|_| {
            FormatError::parse(path, line, format!("bad query x `{x}`"))
        })?;
        let y: f64 = y.trim().parse().map_err(|_| {
            FormatError::parse(path, line, format!("bad query y `{y}`"))
        })?;
        out.push(Vec2::new(x, y));
    }
    Ok(out)
}

pub fn load_scene_config(path: &Path) -> Result<(Scene, SimConfig), FormatError> {
    let text = fs::read_to_string(path).map_err(|source| FormatError::io(path, source))?;
    parse_scene_config(path, &text)
}

pub fn parse_scene_config(path: &Path, text: &str) -> Result<(Scene, SimConfig), FormatError> {
    let mut keys = KeyMap::parse(path, text)?;

    let kind_raw: String = keys.required("kind")?;
    let width: u32 = keys.required("width")?;
    let height: u32 = keys.required("height")?;
    let duration_us: u64 = keys.required("duration_us")?;
    let contrast_threshold: f64 = keys.required("contrast_threshold")?;
    let dt_integration_us: u64 = keys.optional("dt_integration_us", 500)?;
    let refractory_us: u64 = keys.optional("refractory_us", 0)?;
    let noise_rate: f64 = keys.optional("noise_rate", 0.0)?;
    let rng_seed: u64 = keys.optional("seed", 0)?;
    let background: f64 = keys.optional("background", 0.0)?;
    let gt_timesteps: usize = keys.optional("gt_steps", 48)?;
    let query_points = match keys.take("queries") {
        None => Vec::new(),
        Some((line, value)) => parse_queries(path, line, &value)?,
    };

    let kind = match kind_raw.as_str() {
        "translating_edge" => SceneKind::TranslatingEdge {
            contrast: keys.required("edge_contrast")?,
            edge_x: keys.required("edge_x")?,
            velocity: Vec2::new(
                keys.required("velocity_x")?,
                keys.optional("velocity_y", 0.0)?,
            ),
            ramp_width: keys.optional("ramp_width", 2.0)?,
        },
        "translating_blob" => SceneKind::TranslatingBlob {
            peak: keys.required("blob_peak")?,
            sigma: keys.required("blob_sigma")?,
            center: Vec2::new(keys.required("center_x")?, keys.required("center_y")?),
            velocity: Vec2::new(
                keys.required("velocity_x")?,
                keys.optional("velocity_y", 0.0)?,
            ),
        },
        "rotating_stick" => SceneKind::RotatingStick {
            contrast: keys.required("stick_contrast")?,
            length: keys.required("stick_length")?,
            half_width: keys.optional("stick_half_width", 1.5)?,
            pivot: Vec2::new(keys.required("pivot_x")?, keys.required("pivot_y")?),
            angular_velocity: keys.required("angular_velocity")?,
        },
        "sinusoidal_blob" => SceneKind::SinusoidalBlob {
            peak: keys.required("blob_peak")?,
            sigma: keys.required("blob_sigma")?,
            center: Vec2::new(keys.required("center_x")?, keys.required("center_y")?),
            amplitude: keys.required("osc_amplitude")?,
            frequency: keys.required("osc_frequency")?,
            axis: Vec2::new(keys.optional("axis_x", 1.0)?, keys.optional("axis_y", 0.0)?),
        },
        other => {
            return Err(FormatError::validation(
                path,
                format!(
                    "unknown scene kind `{other}` (expected translating_edge, \
                     translating_blob, rotating_stick, or sinusoidal_blob)"
                ),
            ))
        }
    };
    keys.finish()?;

    let scene = Scene {
        kind,
        background,
        query_points,
    };
    let cfg = SimConfig {
        width,
        height,
        duration_us,
        contrast_threshold,
        dt_integration_us,
        refractory_us,
        noise_rate,
        rng_seed,
        gt_timesteps,
    };
    Ok((scene, cfg))
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::path::PathBuf;

    fn parse(text: &str) -> Result<(Scene, SimConfig), FormatError> {
        parse_scene_config(&PathBuf::from("test.cfg"), text)
    }

    const BLOB: &str = "\
kind = translating_blob
width = 160
height = 120
duration_us = 2000000
contrast_threshold = 0.2
blob_peak = 1.2
blob_sigma = 4
center_x = 40
center_y = 60
velocity_x = 20
";

    #[test]
    fn parses_a_blob_scene_with_defaults() {
        let (scene, cfg) = parse(BLOB).unwrap();
        assert_eq!(cfg.width, 160);
        assert_eq!(cfg.dt_integration_us, 500);
        assert_eq!(cfg.gt_timesteps, 48);
        match scene.kind {
            SceneKind::TranslatingBlob { velocity, .. } => {
                assert_eq!(velocity, Vec2::new(20.0, 0.0));
            }
            _ => panic!("wrong kind"),
        }
        assert!(scene.query_points.is_empty());
    }

    #[test]
    fn rejects_unknown_keys() {
        let text = format!("{BLOB}mystery_knob = 3\n");
        let err = parse(&text).unwrap_err();
        assert!(err.to_string().contains("unknown key `mystery_knob`"), "{err}");
    }

    #[test]
    fn rejects_keys_from_other_kinds() {
        let text = format!("{BLOB}angular_velocity = 2\n");
        assert!(parse(&text).is_err());
    }

    #[test]
    fn rejects_duplicates_and_missing_required() {
        assert!(parse(&format!("{BLOB}width = 10\n")).is_err());
        assert!(parse("kind = translating_blob\nwidth = 4\n").is_err());
    }

    #[test]
    fn parses_queries_and_comments() {
        let text = format!("{BLOB}queries = 40:60; 42.5:61.25  # two points\n");
        let (scene, _) = parse(&text).unwrap();
        assert_eq!(
            scene.query_points,
            vec![Vec2::new(40.0, 60.0), Vec2::new(42.5, 61.25)]
        );
    }

    #[test]
    fn stick_scene_round() {
        let text = "\
kind = rotating_stick
width = 128
height = 128
duration_us = 1000000
contrast_threshold = 0.2
stick_contrast = 1.0
stick_length = 50
pivot_x = 64
pivot_y = 64
angular_velocity = 6.283185307179586
";
        let (scene, cfg) = parse(text).unwrap();
        assert_eq!(cfg.contrast_threshold, 0.2);
        assert!(matches!(scene.kind, SceneKind::RotatingStick { .. }));
    }
}
