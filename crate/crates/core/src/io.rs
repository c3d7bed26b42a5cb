//! JSON file formats.
//!
//! ```text
//! mdp:    { num_states, num_actions, discount, transition[s][a][s'], initial_dist[s] }
//! demos:  { trajectories: [[[s, a], ...], ...] }
//! labels: { labels: [l, ...] }
//! model:  { clusters: [{ theta: [...], psi }], beta: [[...], ...] }
//! ```

use std::fs;
use std::path::Path;

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::em::{ClusterModel, ResponsibilityMatrix};
use crate::error::{Error, Result};
use crate::mdp::{DemonstrationSet, TabularMdp, Trajectory};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MdpFile {
    pub num_states: usize,
    pub num_actions: usize,
    pub discount: f64,
    pub transition: Vec<Vec<Vec<f64>>>,
    pub initial_dist: Vec<f64>,
}

impl From<&TabularMdp> for MdpFile {
    fn from(mdp: &TabularMdp) -> Self {
        let (ns, na) = (mdp.num_states(), mdp.num_actions());
        Self {
            num_states: ns,
            num_actions: na,
            discount: mdp.discount(),
            transition: (0..ns)
                .map(|s| (0..na).map(|a| mdp.row(s, a).to_vec()).collect())
                .collect(),
            initial_dist: mdp.initial_dist().to_vec(),
        }
    }
}

impl TryFrom<MdpFile> for TabularMdp {
    type Error = Error;

    fn try_from(f: MdpFile) -> Result<Self> {
        if f.transition.len() != f.num_states {
            return Err(Error::Dimension {
                what: "transition",
                expected: f.num_states,
                got: f.transition.len(),
            });
        }
        let mut flat = Vec::with_capacity(f.num_states * f.num_actions * f.num_states);
        for (s, per_action) in f.transition.into_iter().enumerate() {
            if per_action.len() != f.num_actions {
                return Err(Error::InvalidModel(format!(
                    "transition[{s}] has {} actions, expected {}",
                    per_action.len(),
                    f.num_actions
                )));
            }
            for (a, row) in per_action.into_iter().enumerate() {
                if row.len() != f.num_states {
                    return Err(Error::InvalidModel(format!(
                        "transition[{s}][{a}] has {} entries, expected {}",
                        row.len(),
                        f.num_states
                    )));
                }
                flat.extend(row);
            }
        }
        TabularMdp::new(f.num_states, f.num_actions, flat, f.discount, f.initial_dist)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DemoFile {
    pub trajectories: Vec<Vec<[usize; 2]>>,
}

impl From<&DemonstrationSet> for DemoFile {
    fn from(demos: &DemonstrationSet) -> Self {
        Self {
            trajectories: demos
                .iter()
                .map(|t| t.steps().iter().map(|&(s, a)| [s, a]).collect())
                .collect(),
        }
    }
}

impl TryFrom<DemoFile> for DemonstrationSet {
    type Error = Error;

    fn try_from(f: DemoFile) -> Result<Self> {
        let trajectories = f
            .trajectories
            .into_iter()
            .map(|steps| Trajectory::new(steps.into_iter().map(|[s, a]| (s, a)).collect()))
            .collect::<Result<Vec<_>>>()?;
        DemonstrationSet::new(trajectories)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LabelFile {
    pub labels: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ClusterEntry {
    pub theta: Vec<f64>,
    pub psi: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelFile {
    pub clusters: Vec<ClusterEntry>,
    pub beta: Vec<Vec<f64>>,
}

impl ModelFile {
    pub fn new(model: &ClusterModel, beta: &ResponsibilityMatrix) -> Self {
        Self {
            clusters: model
                .thetas
                .iter()
                .zip(&model.prior)
                .map(|(t, &psi)| ClusterEntry {
                    theta: t.as_slice().to_vec(),
                    psi,
                })
                .collect(),
            beta: beta.rows().map(<[f64]>::to_vec).collect(),
        }
    }

    pub fn responsibilities(&self) -> Result<ResponsibilityMatrix> {
        ResponsibilityMatrix::from_rows(self.beta.clone())
    }
}

pub fn to_json<T: Serialize>(value: &T) -> String {
    serde_json::to_string_pretty(value).expect("file types always serialize")
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    if let Some(parent) = path.parent() {
        fs::create_dir_all(parent).map_err(|source| Error::Io {
            path: parent.to_path_buf(),
            source,
        })?;
    }
    let mut text = to_json(value);
    text.push('\n');
    fs::write(path, text).map_err(|source| Error::Io {
        path: path.to_path_buf(),
        source,
    })
}

pub fn read_json<T: DeserializeOwned>(path: &Path) -> Result<T> {
    let text = fs::read_to_string(path).map_err(|source| Error::Io {
        path: path.to_path_buf(),
        source,
    })?;
    serde_json::from_str(&text).map_err(|source| Error::Parse {
        path: path.to_path_buf(),
        source,
    })
}

pub fn read_mdp(path: &Path) -> Result<TabularMdp> {
    read_json::<MdpFile>(path)?.try_into()
}

pub fn read_demos(path: &Path) -> Result<DemonstrationSet> {
    read_json::<DemoFile>(path)?.try_into()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn mdp_schema_shape() {
        let mdp = TabularMdp::new(2, 1, vec![0.25, 0.75, 1.0, 0.0], 0.5, vec![1.0, 0.0]).unwrap();
        let json = serde_json::to_value(MdpFile::from(&mdp)).unwrap();
        assert_eq!(json["transition"][0][0][1], 0.75);
        assert_eq!(json["num_actions"], 1);
        let back: TabularMdp = serde_json::from_value::<MdpFile>(json).unwrap().try_into().unwrap();
        assert_eq!(back, mdp);
    }

    #[test]
    fn missing_field_is_named() {
        let err = serde_json::from_str::<MdpFile>(r#"{"num_states": 1, "num_actions": 1, "discount": 0.5, "transition": [[[1.0]]]}"#)
            .unwrap_err();
        assert!(err.to_string().contains("initial_dist"));
    }

    #[test]
    fn ragged_transition_rejected() {
        let f = MdpFile {
            num_states: 2,
            num_actions: 1,
            discount: 0.5,
            transition: vec![vec![vec![1.0, 0.0]], vec![vec![1.0]]],
            initial_dist: vec![1.0, 0.0],
        };
        assert!(TabularMdp::try_from(f).is_err());
    }

    #[test]
    fn demo_schema_shape() {
        let json = r#"{"trajectories": [[[0, 1], [2, 0]], [[1, 1]]]}"#;
        let demos: DemonstrationSet = serde_json::from_str::<DemoFile>(json).unwrap().try_into().unwrap();
        assert_eq!(demos.len(), 2);
        assert_eq!(demos.trajectories()[0].steps(), &[(0, 1), (2, 0)]);
        let empty = r#"{"trajectories": [[]]}"#;
        assert!(DemonstrationSet::try_from(serde_json::from_str::<DemoFile>(empty).unwrap()).is_err());
    }
}
