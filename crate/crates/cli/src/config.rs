//! Run configurations: a versioned JSON envelope around each command's
//! settings, merged from an optional file and dotted-path overrides.

use std::fs;
use std::path::Path;

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use serde_json::Value;

use texfit::body_model::HumanoidConfig;
use texfit::optim::{FitConfig, ObjectiveConfig};
use texfit::synth::{PerturbSpec, SceneConfig};
use texfit::Error;

pub const RUN_VERSION: &str = "texfit-run/1";

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig<T> {
    pub version: String,
    pub command: String,
    pub settings: T,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SynthSettings {
    pub model: HumanoidConfig,
    pub scene: SceneConfig,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum InitSource {
    GroundTruth,
    #[default]
    Perturbed,
    /// Rest pose and zero shape with the ground-truth cameras.
    Rest,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct InitConfig {
    pub source: InitSource,
    /// Applied to the ground truth when `source` is `perturbed`.
    pub perturb: PerturbSpec,
    pub seed: u64,
}

impl Default for InitConfig {
    fn default() -> Self {
        Self {
            source: InitSource::Perturbed,
            perturb: PerturbSpec::joints(0.1),
            seed: 0,
        }
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FitSettings {
    pub objective: ObjectiveConfig,
    pub fit: FitConfig,
    pub init: InitConfig,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BenchSettings {
    pub model: HumanoidConfig,
    pub views: usize,
    pub seeds: usize,
    pub first_seed: u64,
    pub width: usize,
    pub height: usize,
    pub keypoint_joints: Vec<usize>,
    pub keypoint_sigma: f64,
    /// Per-axis joint rotation noise of the initialization (rad).
    pub init_sigma: f64,
    pub objective: ObjectiveConfig,
    pub fit: FitConfig,
}

impl Default for BenchSettings {
    fn default() -> Self {
        Self {
            model: HumanoidConfig::default(),
            views: 4,
            seeds: 10,
            first_seed: 0,
            width: 128,
            height: 128,
            keypoint_joints: vec![0, 2, 4, 6, 8, 10],
            keypoint_sigma: 1.0,
            init_sigma: 0.1,
            objective: ObjectiveConfig::default(),
            fit: FitConfig::default(),
        }
    }
}

fn bad(msg: impl Into<String>) -> Error {
    Error::ConfigOutOfRange(msg.into())
}

/// Parses a flag value: JSON when it parses, a bare string otherwise.
pub fn parse_value(raw: &str) -> Value {
    serde_json::from_str(raw).unwrap_or_else(|_| Value::String(raw.to_string()))
}

/// Resolves a dotted path against `root`. A path whose first key is not a
/// top-level field is looked up one level down, in the unique section that
/// has it (`weights.texture` finds `objective.weights.texture`).
fn resolve_path(root: &Value, path: &str) -> Result<Vec<String>, Error> {
    let keys: Vec<String> = path.split('.').map(str::to_string).collect();
    if keys.iter().any(|k| k.is_empty()) {
        return Err(bad(format!("malformed override path `{path}`")));
    }
    let Value::Object(top) = root else {
        return Err(bad("settings are not an object"));
    };
    let full = if top.contains_key(&keys[0]) {
        keys
    } else {
        let owners: Vec<&String> = top
            .iter()
            .filter(|(_, v)| v.as_object().is_some_and(|o| o.contains_key(&keys[0])))
            .map(|(k, _)| k)
            .collect();
        match owners.as_slice() {
            [one] => std::iter::once((*one).clone()).chain(keys).collect(),
            [] => return Err(bad(format!("unknown setting `{path}`"))),
            _ => return Err(bad(format!("ambiguous setting `{path}`"))),
        }
    };
    let mut node = root;
    for k in &full[..full.len() - 1] {
        node = node
            .get(k)
            .filter(|v| v.is_object())
            .ok_or_else(|| bad(format!("unknown setting `{path}`")))?;
    }
    if node.get(full.last().unwrap()).is_none() {
        return Err(bad(format!("unknown setting `{path}`")));
    }
    Ok(full)
}

pub fn apply_override(root: &mut Value, path: &str, value: Value) -> Result<(), Error> {
    let keys = resolve_path(root, path)?;
    let mut node = root;
    for k in &keys[..keys.len() - 1] {
        node = node.get_mut(k).unwrap();
    }
    let Value::Object(map) = node else {
        unreachable!()
    };
    map.insert(keys.last().unwrap().clone(), value);
    Ok(())
}

/// Reads a config file holding either a full envelope or bare settings.
fn read_settings_value(path: &Path, command: &str) -> Result<Value, Error> {
    let text = fs::read_to_string(path)
        .map_err(|e| bad(format!("cannot read config {}: {e}", path.display())))?;
    let value: Value = serde_json::from_str(&text)
        .map_err(|e| bad(format!("config {} is not valid JSON: {e}", path.display())))?;
    let Value::Object(map) = value else {
        return Err(bad(format!(
            "config {} must be a JSON object",
            path.display()
        )));
    };
    if !map.contains_key("settings") {
        return Ok(Value::Object(map));
    }
    let version = map.get("version").and_then(Value::as_str);
    if version != Some(RUN_VERSION) {
        return Err(bad(format!(
            "config version {version:?}, expected {RUN_VERSION}"
        )));
    }
    let cmd = map.get("command").and_then(Value::as_str);
    if cmd != Some(command) {
        return Err(bad(format!(
            "config is for command {cmd:?}, not `{command}`"
        )));
    }
    Ok(map["settings"].clone())
}

/// Defaults, then the file, then each override in order.
pub fn resolve<T>(
    command: &str,
    file: Option<&Path>,
    overrides: &[(String, Value)],
) -> Result<RunConfig<T>, Error>
where
    T: Serialize + DeserializeOwned + Default,
{
    let base: T = match file {
        Some(p) => serde_json::from_value(read_settings_value(p, command)?)
            .map_err(|e| bad(format!("config {}: {e}", p.display())))?,
        None => T::default(),
    };
    let mut value = serde_json::to_value(&base).expect("settings serialize");
    for (path, v) in overrides {
        apply_override(&mut value, path, v.clone())?;
    }
    let settings =
        serde_json::from_value(value).map_err(|e| bad(format!("invalid override: {e}")))?;
    Ok(RunConfig {
        version: RUN_VERSION.to_string(),
        command: command.to_string(),
        settings,
    })
}

pub type Overrides = Vec<(String, Value)>;

/// Splits setting overrides out of an argument list: every `--key value`
/// or `--key=value` whose key is not in `known` (the command-line flags)
/// or holds a dot.
pub fn split_overrides(
    args: Vec<String>,
    known: &[String],
) -> Result<(Vec<String>, Overrides), Error> {
    let mut rest = Vec::new();
    let mut overrides = Vec::new();
    let mut it = args.into_iter();
    while let Some(a) = it.next() {
        let is_override = |n: &&str| {
            let key = n.split('=').next().unwrap_or_default();
            !key.is_empty() && (key.contains('.') || !known.iter().any(|k| k == key))
        };
        let Some(name) = a.strip_prefix("--").filter(is_override) else {
            rest.push(a);
            continue;
        };
        let (key, raw) = match name.split_once('=') {
            Some((k, v)) => (k.to_string(), v.to_string()),
            None => {
                let v = it
                    .next()
                    .ok_or_else(|| bad(format!("override --{name} needs a value")))?;
                (name.to_string(), v)
            }
        };
        overrides.push((key, parse_value(&raw)));
    }
    Ok((rest, overrides))
}

pub fn to_json_pretty<T: Serialize>(value: &T) -> String {
    let mut s = serde_json::to_string_pretty(value).expect("serializable");
    s.push('\n');
    s
}
