//! Run configuration file: one JSON document with a section per command.

use std::path::Path;
use std::sync::Arc;

use navsim::env::EnvConfig;
use navsim::eval::{LayoutSwap, SweepSpec};
use navsim::msl::TrainerConfig;
use navsim::world::Shape;
use navsim::{DimensionalConfig, Point, Pose, WorldLayout};
use serde::{Deserialize, Serialize};

use crate::CliError;

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub env: EnvConfig,
    pub trainer: TrainerConfig,
    pub eval: EvalSection,
    pub transfer: TransferSection,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EvalSection {
    /// Layout for the four-goal protocol.
    pub goals_layout: String,
    pub sweep: SweepSpec,
    pub dynamic: DynamicSpec,
}

impl Default for EvalSection {
    fn default() -> Self {
        Self {
            goals_layout: "env0".into(),
            sweep: SweepSpec::default(),
            dynamic: DynamicSpec::default(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DynamicSpec {
    pub layout: String,
    pub start: Pose,
    pub goal: Point,
    pub swaps: Vec<SwapSpec>,
}

impl Default for DynamicSpec {
    /// A block drops onto the straight path once the robot is under way.
    fn default() -> Self {
        Self {
            layout: "empty8".into(),
            start: Pose::new(-3.0, 0.0, 0.0),
            goal: Point::new(3.0, 0.0),
            swaps: vec![SwapSpec {
                at: Point::new(-1.5, 0.0),
                within: 0.5,
                layout: None,
                add_obstacles: vec![Shape::circle(1.0, 0.0, 0.5)],
                name: Some("empty8+block".into()),
            }],
        }
    }
}

/// A layout swap. The new layout is `layout` (or the episode's starting
/// layout) with `add_obstacles` appended.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SwapSpec {
    pub at: Point,
    pub within: f64,
    #[serde(default)]
    pub layout: Option<String>,
    #[serde(default)]
    pub add_obstacles: Vec<Shape>,
    #[serde(default)]
    pub name: Option<String>,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TransferSection {
    /// Defaults to `env.robot`.
    pub meta: Option<DimensionalConfig>,
    pub scaled: Option<DimensionalConfig>,
    /// Defaults to `env.dt`.
    pub dt: Option<f64>,
    /// Meta commands as `[v, omega]` pairs.
    pub commands: Vec<[f64; 2]>,
}

impl RunConfig {
    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Validation(format!("cannot read config {}: {e}", path.display())))?;
        Self::parse(&text).map_err(|e| CliError::Validation(format!("{}: {e}", path.display())))
    }

    /// Parses and validates, reporting the dotted path of the first bad
    /// field.
    pub fn parse(text: &str) -> Result<Self, String> {
        let de = &mut serde_json::Deserializer::from_str(text);
        let cfg: RunConfig = serde_path_to_error::deserialize(de).map_err(|e| {
            let path = e.path().to_string();
            if e.inner().is_syntax() || e.inner().is_eof() {
                format!("invalid config: malformed JSON: {}", e.inner())
            } else if path == "." {
                format!("invalid config: {}", e.inner())
            } else {
                format!("field `{path}`: {}", e.inner())
            }
        })?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load_or_default(path: Option<&Path>) -> Result<Self, CliError> {
        match path {
            Some(p) => Self::load(p),
            None => Ok(Self::default()),
        }
    }

    fn validate(&self) -> Result<(), String> {
        self.env
            .validate()
            .map_err(|e| format!("field `env.{}`: {}", e.field, e.message))?;
        self.trainer
            .validate()
            .map_err(|e| format!("field `{}`: {}", e.field, e.message))?;
        self.eval
            .sweep
            .validate()
            .map_err(|e| format!("field `eval.sweep`: {e}"))?;
        for (i, s) in self.eval.dynamic.swaps.iter().enumerate() {
            if !(s.within > 0.0) {
                return Err(format!("field `eval.dynamic.swaps[{i}].within`: must be > 0"));
            }
        }
        let t = &self.transfer;
        for (name, robot) in [("meta", &t.meta), ("scaled", &t.scaled)] {
            if let Some(r) = robot {
                r.validate().map_err(|e| format!("field `transfer.{name}`: {e}"))?;
            }
        }
        if let Some(dt) = t.dt {
            if !(dt > 0.0) {
                return Err("field `transfer.dt`: must be > 0".into());
            }
        }
        for (i, [v, _]) in t.commands.iter().enumerate() {
            if *v < 0.0 {
                return Err(format!("field `transfer.commands[{i}]`: linear velocity must be >= 0"));
            }
        }
        Ok(())
    }

    pub fn curriculum(&self) -> Result<Vec<Arc<WorldLayout>>, CliError> {
        self.env.curriculum.iter().map(|n| layout(n)).collect()
    }

    pub fn swaps(&self) -> Result<Vec<LayoutSwap>, CliError> {
        let d = &self.eval.dynamic;
        d.swaps
            .iter()
            .enumerate()
            .map(|(i, s)| {
                let base = layout(s.layout.as_deref().unwrap_or(&d.layout))?;
                let name = s.name.clone().unwrap_or_else(|| format!("{}+swap{i}", base.name));
                let l = base
                    .with_obstacles(name, &s.add_obstacles)
                    .map_err(|e| CliError::Validation(format!("field `eval.dynamic.swaps[{i}]`: {e}")))?;
                Ok(LayoutSwap {
                    at: s.at,
                    within: s.within,
                    layout: Arc::new(l),
                })
            })
            .collect()
    }
}

pub fn layout(name: &str) -> Result<Arc<WorldLayout>, CliError> {
    WorldLayout::resolve(name)
        .map(Arc::new)
        .map_err(|e| CliError::Validation(format!("layout `{name}`: {e}")))
}
