//! Plain-text key-value configuration shared by the command-line tools.
//!
//! Grammar: one `key = value` per line, `#` starts a comment, blank lines
//! are skipped. Values are scalars (`1.388`, `true`), lists (`[0.2, 5.0]`),
//! or label maps (`{1:160, 3:50}`). Consumers pull the keys they know;
//! unknown keys are preserved so a round-tripped config stays complete.

use std::collections::BTreeMap;

use crate::error::{Error, Result};
use crate::postprocess::{PostprocessConfig, RatioThresholds};
use crate::volume::LabelEncoding;

/// Parsed configuration: raw values by key, typed on access.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct ConfigMap {
    entries: BTreeMap<String, String>,
}

impl ConfigMap {
    pub fn parse(text: &str) -> Result<ConfigMap> {
        let mut entries = BTreeMap::new();
        for (lineno, raw) in text.lines().enumerate() {
            let line = match raw.find('#') {
                Some(pos) => &raw[..pos],
                None => raw,
            }
            .trim();
            if line.is_empty() {
                continue;
            }
            let (key, value) = line.split_once('=').ok_or_else(|| {
                Error::Config(format!("line {}: expected key = value", lineno + 1))
            })?;
            let key = key.trim().to_string();
            let value = value.trim().to_string();
            if key.is_empty() {
                return Err(Error::Config(format!("line {}: empty key", lineno + 1)));
            }
            if entries.insert(key.clone(), value).is_some() {
                return Err(Error::Config(format!(
                    "line {}: duplicate key '{key}'",
                    lineno + 1
                )));
            }
        }
        Ok(ConfigMap { entries })
    }

    pub fn from_file(path: &std::path::Path) -> Result<ConfigMap> {
        ConfigMap::parse(&std::fs::read_to_string(path)?)
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// All entries, for echoing the resolved config into run manifests.
    pub fn entries(&self) -> &BTreeMap<String, String> {
        &self.entries
    }

    pub fn get_str(&self, key: &str) -> Option<&str> {
        self.entries.get(key).map(String::as_str)
    }

    pub fn get_f64(&self, key: &str) -> Result<Option<f64>> {
        match self.entries.get(key) {
            None => Ok(None),
            Some(v) => v
                .parse::<f64>()
                .map(Some)
                .map_err(|_| Error::Config(format!("key '{key}': '{v}' is not a number"))),
        }
    }

    pub fn get_u64(&self, key: &str) -> Result<Option<u64>> {
        match self.entries.get(key) {
            None => Ok(None),
            Some(v) => v
                .parse::<u64>()
                .map(Some)
                .map_err(|_| Error::Config(format!("key '{key}': '{v}' is not an integer"))),
        }
    }

    pub fn get_u8(&self, key: &str) -> Result<Option<u8>> {
        match self.get_u64(key)? {
            None => Ok(None),
            Some(v) => u8::try_from(v)
                .map(Some)
                .map_err(|_| Error::Config(format!("key '{key}': {v} exceeds a label byte"))),
        }
    }

    pub fn get_bool(&self, key: &str) -> Result<Option<bool>> {
        match self.entries.get(key).map(String::as_str) {
            None => Ok(None),
            Some("true") | Some("on") => Ok(Some(true)),
            Some("false") | Some("off") => Ok(Some(false)),
            Some(v) => Err(Error::Config(format!(
                "key '{key}': '{v}' is not a boolean (true/false/on/off)"
            ))),
        }
    }

    /// `[a, b, ...]` as numbers.
    pub fn get_list(&self, key: &str) -> Result<Option<Vec<f64>>> {
        let raw = match self.entries.get(key) {
            None => return Ok(None),
            Some(v) => v,
        };
        let inner = raw
            .strip_prefix('[')
            .and_then(|s| s.strip_suffix(']'))
            .ok_or_else(|| Error::Config(format!("key '{key}': expected [..], got '{raw}'")))?;
        let mut values = Vec::new();
        for part in inner.split(',') {
            let part = part.trim();
            if part.is_empty() {
                continue;
            }
            values.push(part.parse::<f64>().map_err(|_| {
                Error::Config(format!("key '{key}': '{part}' is not a number"))
            })?);
        }
        Ok(Some(values))
    }

    /// `[low, high]` with low ≤ high.
    pub fn get_range(&self, key: &str) -> Result<Option<(f64, f64)>> {
        match self.get_list(key)? {
            None => Ok(None),
            Some(v) if v.len() == 2 && v[0] <= v[1] => Ok(Some((v[0], v[1]))),
            Some(v) => Err(Error::Config(format!(
                "key '{key}': expected [low, high] with low <= high, got {v:?}"
            ))),
        }
    }

    /// `{label:value, ...}` with byte labels.
    pub fn get_label_map(&self, key: &str) -> Result<Option<BTreeMap<u8, f64>>> {
        let raw = match self.entries.get(key) {
            None => return Ok(None),
            Some(v) => v,
        };
        let inner = raw
            .strip_prefix('{')
            .and_then(|s| s.strip_suffix('}'))
            .ok_or_else(|| Error::Config(format!("key '{key}': expected {{..}}, got '{raw}'")))?;
        let mut map = BTreeMap::new();
        for part in inner.split(',') {
            let part = part.trim();
            if part.is_empty() {
                continue;
            }
            let (label, value) = part.split_once(':').ok_or_else(|| {
                Error::Config(format!("key '{key}': expected label:value, got '{part}'"))
            })?;
            let label = label.trim().parse::<u8>().map_err(|_| {
                Error::Config(format!("key '{key}': '{}' is not a label", label.trim()))
            })?;
            let value = value.trim().parse::<f64>().map_err(|_| {
                Error::Config(format!("key '{key}': '{}' is not a number", value.trim()))
            })?;
            if map.insert(label, value).is_some() {
                return Err(Error::Config(format!(
                    "key '{key}': duplicate label {label}"
                )));
            }
        }
        Ok(Some(map))
    }
}

impl PostprocessConfig {
    /// Builds the pipeline settings from a config, starting from the
    /// published defaults and overriding whatever keys are present:
    /// `ratio_upper`, `ratio_lower`, `exclusion`, `volume_thresholds`,
    /// `relabel`, `enhancing_label`, `non_enhancing_label`.
    pub fn from_config(config: &ConfigMap) -> Result<PostprocessConfig> {
        let defaults = PostprocessConfig::default();
        let upper = config
            .get_f64("ratio_upper")?
            .unwrap_or(defaults.thresholds.upper);
        let lower = config
            .get_f64("ratio_lower")?
            .unwrap_or(defaults.thresholds.lower);
        let (exc_low, exc_high) = config.get_range("exclusion")?.unwrap_or((
            defaults.thresholds.exclusion_low,
            defaults.thresholds.exclusion_high,
        ));
        Ok(PostprocessConfig {
            thresholds: RatioThresholds::new(upper, lower, exc_low, exc_high)?,
            relabel_enabled: config
                .get_bool("relabel")?
                .unwrap_or(defaults.relabel_enabled),
            volume_thresholds: config
                .get_label_map("volume_thresholds")?
                .unwrap_or(defaults.volume_thresholds),
            enhancing_label: config
                .get_u8("enhancing_label")?
                .unwrap_or(defaults.enhancing_label),
            non_enhancing_label: config
                .get_u8("non_enhancing_label")?
                .unwrap_or(defaults.non_enhancing_label),
        })
    }
}

impl LabelEncoding {
    /// Builds the class encoding from a config, starting from the default
    /// assignment and overriding whatever keys are present:
    /// `enhancing_label`, `non_enhancing_label`, `cystic_label`,
    /// `edema_label`. The four labels must be distinct.
    pub fn from_config(config: &ConfigMap) -> Result<LabelEncoding> {
        let defaults = LabelEncoding::default();
        let encoding = LabelEncoding {
            enhancing: config
                .get_u8("enhancing_label")?
                .unwrap_or(defaults.enhancing),
            non_enhancing: config
                .get_u8("non_enhancing_label")?
                .unwrap_or(defaults.non_enhancing),
            cystic: config.get_u8("cystic_label")?.unwrap_or(defaults.cystic),
            edema: config.get_u8("edema_label")?.unwrap_or(defaults.edema),
        };
        let mut labels = encoding.whole_tumor();
        labels.sort_unstable();
        if labels.windows(2).any(|w| w[0] == w[1]) {
            return Err(Error::Config(format!(
                "label encoding must assign distinct labels, got {labels:?}"
            )));
        }
        Ok(encoding)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_published_defaults_verbatim() {
        let text = "\
# refinement thresholds
ratio_upper = 1.388
ratio_lower = 0.766
exclusion = [0.2, 5.0]
volume_thresholds = {1:160, 3:50}
";
        let map = ConfigMap::parse(text).unwrap();
        let cfg = PostprocessConfig::from_config(&map).unwrap();
        assert_eq!(cfg, PostprocessConfig::default());
    }

    #[test]
    fn empty_config_gives_defaults() {
        let cfg = PostprocessConfig::from_config(&ConfigMap::default()).unwrap();
        assert_eq!(cfg.thresholds.upper, 1.388);
        assert_eq!(cfg.thresholds.lower, 0.766);
        assert_eq!(cfg.thresholds.exclusion_low, 0.2);
        assert_eq!(cfg.thresholds.exclusion_high, 5.0);
        assert_eq!(cfg.volume_thresholds.get(&1), Some(&160.0));
        assert_eq!(cfg.volume_thresholds.get(&3), Some(&50.0));
        assert!(cfg.relabel_enabled);
    }

    #[test]
    fn comments_blanks_and_inline_comments() {
        let text = "\n# full line\nratio_upper = 2.0  # trailing\n\n";
        let map = ConfigMap::parse(text).unwrap();
        assert_eq!(map.get_f64("ratio_upper").unwrap(), Some(2.0));
    }

    #[test]
    fn neutral_overrides() {
        let text = "relabel = off\nvolume_thresholds = {}\n";
        let cfg = PostprocessConfig::from_config(&ConfigMap::parse(text).unwrap()).unwrap();
        assert!(!cfg.relabel_enabled);
        assert!(cfg.volume_thresholds.is_empty());
    }

    #[test]
    fn label_encoding_defaults_and_overrides() {
        let encoding = LabelEncoding::from_config(&ConfigMap::default()).unwrap();
        assert_eq!(encoding, LabelEncoding::default());

        let text = "enhancing_label = 3\ncystic_label = 1\n";
        let encoding = LabelEncoding::from_config(&ConfigMap::parse(text).unwrap()).unwrap();
        assert_eq!(encoding.enhancing, 3);
        assert_eq!(encoding.cystic, 1);
        assert_eq!(encoding.non_enhancing, 2);
        assert_eq!(encoding.edema, 4);
    }

    #[test]
    fn label_encoding_rejects_collisions() {
        let text = "enhancing_label = 2\n"; // collides with non-enhancing
        assert!(matches!(
            LabelEncoding::from_config(&ConfigMap::parse(text).unwrap()),
            Err(Error::Config(_))
        ));
    }

    #[test]
    fn structural_errors_are_reported_with_context() {
        assert!(matches!(
            ConfigMap::parse("just words"),
            Err(Error::Config(_))
        ));
        assert!(matches!(
            ConfigMap::parse("a=1\na=2"),
            Err(Error::Config(_))
        ));
        let map = ConfigMap::parse("exclusion = [5.0, 0.2]").unwrap();
        assert!(matches!(map.get_range("exclusion"), Err(Error::Config(_))));
        let map = ConfigMap::parse("volume_thresholds = {300:1}").unwrap();
        assert!(matches!(
            map.get_label_map("volume_thresholds"),
            Err(Error::Config(_))
        ));
        let map = ConfigMap::parse("ratio_upper = abc").unwrap();
        assert!(matches!(
            PostprocessConfig::from_config(&map),
            Err(Error::Config(_))
        ));
    }

    #[test]
    fn invalid_threshold_order_rejected_at_build() {
        let map = ConfigMap::parse("ratio_upper = 0.5\nratio_lower = 0.766").unwrap();
        assert!(PostprocessConfig::from_config(&map).is_err());
    }
}
