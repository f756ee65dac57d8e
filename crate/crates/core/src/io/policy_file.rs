//! JSON policy files: FSC logits plus the labels they were trained against.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fsc::FscParams;
use crate::model::{ModelFamily, Objective};

const FORMAT: &str = "hmpomdp-policy/1";

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PolicyFile {
    pub format: String,
    pub model: String,
    pub objective: Objective,
    pub observations: Vec<String>,
    pub actions: Vec<String>,
    pub params: FscParams,
}

impl PolicyFile {
    pub fn new(family: &ModelFamily, params: &FscParams) -> Self {
        let sk = &family.skeleton;
        PolicyFile {
            format: FORMAT.into(),
            model: sk.name.clone(),
            objective: sk.objective,
            observations: sk.observations.clone(),
            actions: sk.actions.clone(),
            params: params.clone(),
        }
    }

    /// Checks that the policy fits `family` and returns its parameters.
    pub fn into_params(self, family: &ModelFamily) -> Result<FscParams> {
        let sk = &family.skeleton;
        if self.format != FORMAT {
            return Err(Error::input(format!(
                "unsupported policy format `{}`",
                self.format
            )));
        }
        if self.objective != sk.objective {
            return Err(Error::input(format!(
                "policy was optimized to {} but the model objective is {}",
                self.objective.as_str(),
                sk.objective.as_str()
            )));
        }
        if self.observations != sk.observations {
            return Err(Error::input("policy observation labels differ from the model"));
        }
        if self.actions != sk.actions {
            return Err(Error::input("policy action labels differ from the model"));
        }
        self.params.check_space(&family.controller_space())?;
        Ok(self.params)
    }
}

pub fn write_policy(family: &ModelFamily, params: &FscParams, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let text = serde_json::to_string_pretty(&PolicyFile::new(family, params))
        .map_err(|e| Error::Serialize(e.to_string()))?;
    std::fs::write(path, text + "\n").map_err(|e| Error::io(path, e))
}

pub fn read_policy(family: &ModelFamily, path: impl AsRef<Path>) -> Result<FscParams> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let file: PolicyFile = serde_json::from_str(&text).map_err(|e| Error::Parse {
        path: path.to_path_buf(),
        message: e.to_string(),
    })?;
    file.into_params(family)
}
