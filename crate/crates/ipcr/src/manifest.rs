//! Reproducibility record written next to experiment outputs.

use std::path::Path;

use serde::{Deserialize, Serialize};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Endpoints {
    /// Always the string `"simulated"`.
    Simulated(String),
    Live(Vec<String>),
}

impl Endpoints {
    pub fn simulated() -> Self {
        Endpoints::Simulated("simulated".into())
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct Parameters {
    pub d: usize,
    pub r: u32,
    pub m: usize,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub f: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub l: Option<u64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub l1: Option<u32>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub q: Option<u64>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub alphas: Vec<u64>,
    /// Logarithm base of leakage outputs.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub base: Option<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub command: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub scheme: Option<String>,
    pub parameters: Parameters,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub endpoints: Option<Endpoints>,
    #[serde(default)]
    pub outputs: Vec<String>,
}

impl RunManifest {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("manifest serializes") + "\n"
    }

    pub fn write(&self, path: &Path) -> std::io::Result<()> {
        std::fs::write(path, self.to_json())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn json_round_trip() {
        let m = RunManifest {
            command: "query".into(),
            scheme: Some("two-phase".into()),
            parameters: Parameters { d: 3, r: 3, m: 3, q: Some(29), alphas: vec![1, 2, 3], ..Default::default() },
            seed: Some(7),
            endpoints: Some(Endpoints::simulated()),
            outputs: vec![],
        };
        let json = m.to_json();
        assert!(json.contains("\"endpoints\": \"simulated\""));
        assert_eq!(serde_json::from_str::<RunManifest>(&json).unwrap(), m);
        let live = RunManifest { endpoints: Some(Endpoints::Live(vec!["h:1".into()])), ..m };
        assert_eq!(serde_json::from_str::<RunManifest>(&live.to_json()).unwrap(), live);
    }
}
