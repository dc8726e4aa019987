//! Run configuration: flat key=value text with section prefixes.
//!
//! Precedence is flags > config file > built-in defaults. Every key is
//! checked against the whitelist and parsed up front, so a bad value fails
//! the run before any work starts and names the offending key.

use std::collections::BTreeMap;
use std::fmt::Display;
use std::path::Path;
use std::str::FromStr;

use skinet_core::classifier::{Backbone, ClassifierConfig, DropoutPlacement};
use skinet_core::data::AugmentationSpec;
use skinet_core::pipeline::{MaskApplyMode, PipelineConfig};
use skinet_core::saliency::{SaliencyMethod, XraiParams};
use skinet_core::segnet::{LossKind, SegArch, SegNetConfig, TrainConfig};
use skinet_core::xai_eval::BokehParams;
use skinet_core::{Error, Result};

/// Every key the config file and flag overrides may set.
pub const KNOWN_KEYS: &[&str] = &[
    "seed",
    "split.train_fraction",
    "split.val_fraction",
    "split.test_fraction",
    "seg.input_size",
    "seg.channels",
    "seg.base_w",
    "seg.respath_base",
    "seg.depth",
    "seg.dropout_rate",
    "seg.arch",
    "clf.backbone",
    "clf.input_size",
    "clf.channels",
    "clf.dropout_rate",
    "clf.dropout_positions",
    "clf.num_classes",
    "train.learning_rate",
    "train.batch_size",
    "train.epochs",
    "train.loss",
    "augment.hflip",
    "augment.vflip",
    "augment.rotation_min",
    "augment.rotation_max",
    "pipeline.seg_threshold",
    "pipeline.clf_threshold",
    "pipeline.mask_apply_mode",
    "pipeline.margin",
    "pipeline.samples",
    "pipeline.explainer",
    "xrai.ig_steps",
    "xrai.scales",
    "xrai.sigma",
    "xrai.min_size",
    "bokeh.blur_kernel_sigma",
    "bokeh.keep_fraction",
];

/// Parsed configuration: explicit keys over module defaults.
#[derive(Debug, Clone, Default)]
pub struct RunConfig {
    keys: BTreeMap<String, String>,
}

fn bad_key(key: &str, value: &str, want: &str) -> Error {
    Error::Config(format!("config key {key}: cannot parse {value:?} as {want}"))
}

fn section_err(section: &str, e: Error) -> Error {
    Error::Config(format!("config section {section}: {e}"))
}

impl RunConfig {
    /// Loads the optional file, then applies flag overrides on top. Both
    /// paths reject unknown keys; the file also rejects duplicates.
    pub fn load(file: Option<&Path>, overrides: &[(&str, String)]) -> Result<RunConfig> {
        let mut keys = BTreeMap::new();
        if let Some(path) = file {
            let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
            for (ln, raw) in text.lines().enumerate() {
                let line = raw.trim();
                if line.is_empty() || line.starts_with('#') {
                    continue;
                }
                let (key, value) = line.split_once('=').ok_or_else(|| {
                    Error::Config(format!(
                        "{} line {}: expected key=value, got {line:?}",
                        path.display(),
                        ln + 1
                    ))
                })?;
                let (key, value) = (key.trim(), value.trim());
                if !KNOWN_KEYS.contains(&key) {
                    return Err(Error::Config(format!("unknown config key {key}")));
                }
                if keys.insert(key.to_string(), value.to_string()).is_some() {
                    return Err(Error::Config(format!("duplicate config key {key}")));
                }
            }
        }
        for (key, value) in overrides {
            if !KNOWN_KEYS.contains(key) {
                return Err(Error::Config(format!("unknown config key {key}")));
            }
            keys.insert((*key).to_string(), value.clone());
        }
        Ok(RunConfig { keys })
    }

    fn parsed<T>(&self, key: &str, default: T, want: &str) -> Result<T>
    where
        T: FromStr,
        T::Err: Display,
    {
        match self.keys.get(key) {
            None => Ok(default),
            Some(v) => v.parse().map_err(|_| bad_key(key, v, want)),
        }
    }

    fn parsed_bool(&self, key: &str, default: bool) -> Result<bool> {
        match self.keys.get(key).map(String::as_str) {
            None => Ok(default),
            Some("true") => Ok(true),
            Some("false") => Ok(false),
            Some(v) => Err(bad_key(key, v, "true or false")),
        }
    }

    pub fn seed(&self) -> Result<u64> {
        self.parsed("seed", 0, "an unsigned integer")
    }

    pub fn split_fractions(&self) -> Result<(f64, f64, f64)> {
        Ok((
            self.parsed("split.train_fraction", 0.8, "a number")?,
            self.parsed("split.val_fraction", 0.2, "a number")?,
            self.parsed("split.test_fraction", 0.0, "a number")?,
        ))
    }

    pub fn seg_config(&self) -> Result<SegNetConfig> {
        let d = SegNetConfig::default();
        let size = self.parsed("seg.input_size", d.input_shape.0, "an integer")?;
        let channels = self.parsed("seg.channels", d.input_shape.2, "an integer")?;
        let arch = match self.keys.get("seg.arch") {
            None => d.arch,
            Some(v) => SegArch::parse(v).map_err(|_| bad_key("seg.arch", v, "an arch name"))?,
        };
        let cfg = SegNetConfig {
            input_shape: (size, size, channels),
            base_w: self.parsed("seg.base_w", d.base_w, "an integer")?,
            respath_base: self.parsed("seg.respath_base", d.respath_base, "an integer")?,
            depth: self.parsed("seg.depth", d.depth, "an integer")?,
            dropout_rate: self.parsed("seg.dropout_rate", d.dropout_rate, "a number")?,
            arch,
        };
        cfg.validate().map_err(|e| section_err("seg", e))?;
        Ok(cfg)
    }

    /// `default_classes` fills `clf.num_classes` when the key is absent;
    /// training passes the manifest's class count.
    pub fn clf_config(&self, default_classes: usize) -> Result<ClassifierConfig> {
        let d = ClassifierConfig::default();
        let backbone = match self.keys.get("clf.backbone") {
            None => d.backbone,
            Some(v) => {
                Backbone::parse(v).map_err(|_| bad_key("clf.backbone", v, "a backbone name"))?
            }
        };
        let positions = match self.keys.get("clf.dropout_positions") {
            None => d.dropout_positions,
            Some(v) => DropoutPlacement::parse(v)
                .map_err(|_| bad_key("clf.dropout_positions", v, "a placement"))?,
        };
        let size = self.parsed("clf.input_size", d.input_shape.0, "an integer")?;
        let channels = self.parsed("clf.channels", d.input_shape.2, "an integer")?;
        let cfg = ClassifierConfig {
            backbone,
            dropout_rate: self.parsed("clf.dropout_rate", d.dropout_rate, "a number")?,
            dropout_positions: positions,
            num_classes: self.parsed("clf.num_classes", default_classes, "an integer")?,
            input_shape: (size, size, channels),
        };
        cfg.validate().map_err(|e| section_err("clf", e))?;
        Ok(cfg)
    }

    pub fn train_config(&self) -> Result<TrainConfig> {
        let d = TrainConfig::default();
        let loss = match self.keys.get("train.loss").map(String::as_str) {
            None => d.loss,
            Some("bce") => LossKind::Bce,
            Some("categorical") => LossKind::Categorical,
            Some(v) => return Err(bad_key("train.loss", v, "bce or categorical")),
        };
        let cfg = TrainConfig {
            learning_rate: self.parsed("train.learning_rate", d.learning_rate, "a number")?,
            batch_size: self.parsed("train.batch_size", d.batch_size, "an integer")?,
            epochs: self.parsed("train.epochs", d.epochs, "an integer")?,
            loss,
        };
        cfg.validate().map_err(|e| section_err("train", e))?;
        Ok(cfg)
    }

    pub fn augment_spec(&self) -> Result<AugmentationSpec> {
        let d = AugmentationSpec::default();
        let spec = AugmentationSpec {
            allow_hflip: self.parsed_bool("augment.hflip", d.allow_hflip)?,
            allow_vflip: self.parsed_bool("augment.vflip", d.allow_vflip)?,
            rotation_range: (
                self.parsed("augment.rotation_min", d.rotation_range.0, "a number")?,
                self.parsed("augment.rotation_max", d.rotation_range.1, "a number")?,
            ),
            seed: d.seed,
        };
        spec.validate().map_err(|e| section_err("augment", e))?;
        Ok(spec)
    }

    pub fn pipeline_config(&self) -> Result<PipelineConfig> {
        let d = PipelineConfig::default();
        let mode = match self.keys.get("pipeline.mask_apply_mode") {
            None => d.mask_apply_mode,
            Some(v) => MaskApplyMode::parse(v)
                .map_err(|_| bad_key("pipeline.mask_apply_mode", v, "a mask apply mode"))?,
        };
        let explainer = match self.keys.get("pipeline.explainer") {
            None => d.explainer,
            Some(v) => SaliencyMethod::parse(v)
                .map_err(|_| bad_key("pipeline.explainer", v, "an explainer name"))?,
        };
        let cfg = PipelineConfig {
            seg_threshold: self.parsed("pipeline.seg_threshold", d.seg_threshold, "a number")?,
            clf_threshold: self.parsed("pipeline.clf_threshold", d.clf_threshold, "a number")?,
            mask_apply_mode: mode,
            margin: self.parsed("pipeline.margin", d.margin, "a number")?,
            samples: self.parsed("pipeline.samples", d.samples, "an integer")?,
            explainer,
            augment: self.augment_spec()?,
        };
        cfg.validate().map_err(|e| section_err("pipeline", e))?;
        Ok(cfg)
    }

    pub fn xrai_params(&self) -> Result<XraiParams> {
        let d = XraiParams::default();
        let scales = match self.keys.get("xrai.scales") {
            None => d.scales,
            Some(v) => v
                .split(',')
                .map(|s| s.trim().parse::<f64>())
                .collect::<std::result::Result<Vec<f64>, _>>()
                .map_err(|_| bad_key("xrai.scales", v, "comma-separated numbers"))?,
        };
        let params = XraiParams {
            ig_steps: self.parsed("xrai.ig_steps", d.ig_steps, "an integer")?,
            scales,
            sigma: self.parsed("xrai.sigma", d.sigma, "a number")?,
            min_size: self.parsed("xrai.min_size", d.min_size, "an integer")?,
        };
        params.validate().map_err(|e| section_err("xrai", e))?;
        Ok(params)
    }

    pub fn bokeh_params(&self) -> Result<BokehParams> {
        let d = BokehParams::default();
        let params = BokehParams {
            blur_kernel_sigma: self.parsed("bokeh.blur_kernel_sigma", d.blur_kernel_sigma, "a number")?,
            keep_fraction: self.parsed("bokeh.keep_fraction", d.keep_fraction, "a number")?,
        };
        params.validate().map_err(|e| section_err("bokeh", e))?;
        Ok(params)
    }

    /// Parses every section so a bad key fails before any work starts.
    pub fn validate_all(&self, default_classes: usize) -> Result<()> {
        self.seed()?;
        let (ft, fv, fs) = self.split_fractions()?;
        if ft < 0.0 || fv < 0.0 || fs < 0.0 || (ft + fv + fs - 1.0).abs() > 1e-9 {
            return Err(Error::Config(format!(
                "config section split: fractions ({ft}, {fv}, {fs}) must be non-negative and sum to 1"
            )));
        }
        self.seg_config()?;
        self.clf_config(default_classes)?;
        self.train_config()?;
        self.pipeline_config()?;
        self.xrai_params()?;
        self.bokeh_params()?;
        Ok(())
    }

    /// The full effective key map, defaults materialized. Written back out
    /// as a key=value file, it reproduces the run exactly.
    pub fn resolved(&self, default_classes: usize) -> Result<BTreeMap<String, String>> {
        let mut out = BTreeMap::new();
        let mut put = |k: &str, v: String| {
            out.insert(k.to_string(), v);
        };
        put("seed", self.seed()?.to_string());
        let (ft, fv, fs) = self.split_fractions()?;
        put("split.train_fraction", ft.to_string());
        put("split.val_fraction", fv.to_string());
        put("split.test_fraction", fs.to_string());
        let seg = self.seg_config()?;
        put("seg.input_size", seg.input_shape.0.to_string());
        put("seg.channels", seg.input_shape.2.to_string());
        put("seg.base_w", seg.base_w.to_string());
        put("seg.respath_base", seg.respath_base.to_string());
        put("seg.depth", seg.depth.to_string());
        put("seg.dropout_rate", seg.dropout_rate.to_string());
        put("seg.arch", seg.arch.as_str().to_string());
        let clf = self.clf_config(default_classes)?;
        put("clf.backbone", clf.backbone.as_str().to_string());
        put("clf.input_size", clf.input_shape.0.to_string());
        put("clf.channels", clf.input_shape.2.to_string());
        put("clf.dropout_rate", clf.dropout_rate.to_string());
        put("clf.dropout_positions", clf.dropout_positions.as_config_string());
        put("clf.num_classes", clf.num_classes.to_string());
        let train = self.train_config()?;
        put("train.learning_rate", train.learning_rate.to_string());
        put("train.batch_size", train.batch_size.to_string());
        put("train.epochs", train.epochs.to_string());
        put(
            "train.loss",
            match train.loss {
                LossKind::Bce => "bce".to_string(),
                LossKind::Categorical => "categorical".to_string(),
            },
        );
        let aug = self.augment_spec()?;
        put("augment.hflip", aug.allow_hflip.to_string());
        put("augment.vflip", aug.allow_vflip.to_string());
        put("augment.rotation_min", aug.rotation_range.0.to_string());
        put("augment.rotation_max", aug.rotation_range.1.to_string());
        let pipe = self.pipeline_config()?;
        put("pipeline.seg_threshold", pipe.seg_threshold.to_string());
        put("pipeline.clf_threshold", pipe.clf_threshold.to_string());
        put("pipeline.mask_apply_mode", pipe.mask_apply_mode.as_str().to_string());
        put("pipeline.margin", pipe.margin.to_string());
        put("pipeline.samples", pipe.samples.to_string());
        put("pipeline.explainer", pipe.explainer.as_str().to_string());
        let xrai = self.xrai_params()?;
        put("xrai.ig_steps", xrai.ig_steps.to_string());
        put(
            "xrai.scales",
            xrai.scales.iter().map(f64::to_string).collect::<Vec<_>>().join(","),
        );
        put("xrai.sigma", xrai.sigma.to_string());
        put("xrai.min_size", xrai.min_size.to_string());
        let bokeh = self.bokeh_params()?;
        put("bokeh.blur_kernel_sigma", bokeh.blur_kernel_sigma.to_string());
        put("bokeh.keep_fraction", bokeh.keep_fraction.to_string());
        Ok(out)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::io::Write;

    fn write_cfg(dir: &Path, text: &str) -> std::path::PathBuf {
        let path = dir.join("run.cfg");
        let mut f = std::fs::File::create(&path).unwrap();
        f.write_all(text.as_bytes()).unwrap();
        path
    }

    #[test]
    fn file_keys_parse_with_comments_and_blanks() {
        let dir = tempfile::tempdir().unwrap();
        let path = write_cfg(
            dir.path(),
            "# training at desk scale\n\nseed = 7\nseg.depth = 3\ntrain.epochs=25\n",
        );
        let cfg = RunConfig::load(Some(&path), &[]).unwrap();
        assert_eq!(cfg.seed().unwrap(), 7);
        assert_eq!(cfg.train_config().unwrap().epochs, 25);
    }

    #[test]
    fn flags_override_file_keys() {
        let dir = tempfile::tempdir().unwrap();
        let path = write_cfg(dir.path(), "seed=7\npipeline.samples=16\n");
        let cfg =
            RunConfig::load(Some(&path), &[("seed", "9".into()), ("pipeline.samples", "4".into())])
                .unwrap();
        assert_eq!(cfg.seed().unwrap(), 9);
        assert_eq!(cfg.pipeline_config().unwrap().samples, 4);
    }

    #[test]
    fn unknown_and_duplicate_keys_are_named() {
        let dir = tempfile::tempdir().unwrap();
        let bad = write_cfg(dir.path(), "segnet.depth=3\n");
        let err = RunConfig::load(Some(&bad), &[]).unwrap_err().to_string();
        assert!(err.contains("segnet.depth"), "{err}");

        let dup = write_cfg(dir.path(), "seed=1\nseed=2\n");
        let err = RunConfig::load(Some(&dup), &[]).unwrap_err().to_string();
        assert!(err.contains("duplicate config key seed"), "{err}");
    }

    #[test]
    fn bad_values_name_the_offending_key() {
        let dir = tempfile::tempdir().unwrap();
        let path = write_cfg(dir.path(), "seg.depth=banana\n");
        let cfg = RunConfig::load(Some(&path), &[]).unwrap();
        let err = cfg.validate_all(7).unwrap_err().to_string();
        assert!(err.contains("seg.depth"), "{err}");

        let path = write_cfg(dir.path(), "pipeline.explainer=shapley\n");
        let cfg = RunConfig::load(Some(&path), &[]).unwrap();
        let err = cfg.validate_all(7).unwrap_err().to_string();
        assert!(err.contains("pipeline.explainer"), "{err}");
    }

    #[test]
    fn semantic_violations_name_the_section() {
        let dir = tempfile::tempdir().unwrap();
        let path = write_cfg(dir.path(), "seg.depth=9\n");
        let cfg = RunConfig::load(Some(&path), &[]).unwrap();
        let err = cfg.validate_all(7).unwrap_err().to_string();
        assert!(err.contains("config section seg"), "{err}");
    }

    #[test]
    fn defaults_match_the_module_defaults() {
        let cfg = RunConfig::default();
        assert_eq!(cfg.seg_config().unwrap(), SegNetConfig::default());
        assert_eq!(cfg.clf_config(7).unwrap(), ClassifierConfig::default());
        assert_eq!(cfg.train_config().unwrap(), TrainConfig::default());
        assert_eq!(cfg.pipeline_config().unwrap(), PipelineConfig::default());
        assert_eq!(cfg.bokeh_params().unwrap().keep_fraction, 0.10);
    }

    #[test]
    fn resolved_map_round_trips_through_a_file() {
        let dir = tempfile::tempdir().unwrap();
        let path = write_cfg(
            dir.path(),
            "seed=11\nseg.input_size=32\nseg.base_w=12\nseg.respath_base=8\nseg.depth=3\npipeline.samples=6\n",
        );
        let cfg = RunConfig::load(Some(&path), &[]).unwrap();
        let map = cfg.resolved(5).unwrap();

        // Replay the way a run manifest is replayed: dump the resolved map
        // to a config file and load it back with no flags.
        let text: String = map.iter().map(|(k, v)| format!("{k}={v}\n")).collect();
        let replay_path = write_cfg(dir.path(), &text);
        let replay = RunConfig::load(Some(&replay_path), &[]).unwrap();
        assert_eq!(replay.resolved(5).unwrap(), map);
        assert_eq!(replay.seed().unwrap(), 11);
        assert_eq!(replay.seg_config().unwrap(), cfg.seg_config().unwrap());
        assert_eq!(map["clf.num_classes"], "5");
    }

    #[test]
    fn num_classes_key_beats_the_manifest_default() {
        let dir = tempfile::tempdir().unwrap();
        let path = write_cfg(dir.path(), "clf.num_classes=3\n");
        let cfg = RunConfig::load(Some(&path), &[]).unwrap();
        assert_eq!(cfg.clf_config(7).unwrap().num_classes, 3);
    }
}
