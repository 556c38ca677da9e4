//! Server configuration files (TOML) and pre-shared key handling.

use std::path::{Path, PathBuf};

use ipcr_core::server::{ServerSetupError, SharedKey};
use ipcr_core::ServerNode;
use serde::{Deserialize, Serialize};

use crate::dbfile::{load_database, DbFileError};

/// Overrides the key source of every server config when set.
pub const KEY_FILE_ENV: &str = "IPCR_KEY_FILE";

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ServerConfig {
    /// 1-based server index.
    pub index: usize,
    pub n_servers: usize,
    pub q: u64,
    pub alpha: u64,
    /// Hex-encoded 32-byte key. Exactly one of `key` and `key_file`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub key: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub key_file: Option<PathBuf>,
    /// Relative paths resolve against the config file's directory.
    pub database: PathBuf,
    pub listen: String,
}

#[derive(Debug, thiserror::Error)]
pub enum ConfigFileError {
    #[error("{path}: {source}")]
    Io { path: String, source: std::io::Error },
    #[error("{path}: {source}")]
    Toml { path: String, source: toml::de::Error },
    #[error("key: {0}")]
    Key(String),
    #[error("database: {0}")]
    Database(#[from] DbFileError),
    #[error(transparent)]
    Setup(#[from] ServerSetupError),
}

pub fn parse_key(text: &str) -> Result<SharedKey, ConfigFileError> {
    let bytes = hex::decode(text.trim()).map_err(|e| ConfigFileError::Key(e.to_string()))?;
    bytes.try_into().map_err(|b: Vec<u8>| ConfigFileError::Key(format!("expected 32 bytes, got {}", b.len())))
}

pub fn read_key_file(path: &Path) -> Result<SharedKey, ConfigFileError> {
    let text = std::fs::read_to_string(path).map_err(|source| ConfigFileError::Io { path: path.display().to_string(), source })?;
    parse_key(&text)
}

fn resolve(base: &Path, p: &Path) -> PathBuf {
    if p.is_absolute() {
        p.to_path_buf()
    } else {
        base.join(p)
    }
}

impl ServerConfig {
    pub fn load(path: &Path) -> Result<(ServerConfig, PathBuf), ConfigFileError> {
        let text = std::fs::read_to_string(path).map_err(|source| ConfigFileError::Io { path: path.display().to_string(), source })?;
        let cfg = toml::from_str(&text).map_err(|source| ConfigFileError::Toml { path: path.display().to_string(), source })?;
        let dir = path.parent().map(Path::to_path_buf).unwrap_or_default();
        Ok((cfg, dir))
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    /// Key from `$IPCR_KEY_FILE`, else `key_file`, else inline `key`.
    pub fn resolve_key(&self, base: &Path) -> Result<SharedKey, ConfigFileError> {
        if let Some(p) = std::env::var_os(KEY_FILE_ENV) {
            return read_key_file(Path::new(&p));
        }
        match (&self.key, &self.key_file) {
            (Some(_), Some(_)) => Err(ConfigFileError::Key("set either key or key_file, not both".into())),
            (Some(k), None) => parse_key(k),
            (None, Some(p)) => read_key_file(&resolve(base, p)),
            (None, None) => Err(ConfigFileError::Key(format!("no key configured and {KEY_FILE_ENV} unset"))),
        }
    }

    pub fn build_node(&self, base: &Path) -> Result<ServerNode, ConfigFileError> {
        let key = self.resolve_key(base)?;
        let db = load_database(&resolve(base, &self.database))?;
        Ok(ServerNode::new(self.index, self.n_servers, self.q, self.alpha, db, key)?)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_and_builds() {
        let dir = tempfile::tempdir().unwrap();
        std::fs::write(dir.path().join("db.txt"), "3 3 1\n1 2 3\n").unwrap();
        let text = format!(
            "index = 2\nn_servers = 3\nq = 29\nalpha = 2\nkey = \"{}\"\ndatabase = \"db.txt\"\nlisten = \"127.0.0.1:0\"\n",
            "ab".repeat(32)
        );
        let path = dir.path().join("server.toml");
        std::fs::write(&path, &text).unwrap();
        let (cfg, base) = ServerConfig::load(&path).unwrap();
        assert_eq!(cfg.index, 2);
        assert_eq!(toml::from_str::<ServerConfig>(&cfg.to_toml()).unwrap(), cfg);
        let node = cfg.build_node(&base).unwrap();
        assert_eq!(node.identity().alpha.value(), 2);
    }

    #[test]
    fn key_errors() {
        assert!(parse_key("abcd").is_err());
        assert!(parse_key("zz").is_err());
        assert_eq!(parse_key(&"01".repeat(32)).unwrap(), [1; 32]);
        let cfg = ServerConfig {
            index: 1,
            n_servers: 3,
            q: 29,
            alpha: 1,
            key: None,
            key_file: None,
            database: "db.txt".into(),
            listen: "x".into(),
        };
        if std::env::var_os(KEY_FILE_ENV).is_none() {
            assert!(cfg.resolve_key(Path::new(".")).is_err());
        }
    }

    #[test]
    fn unknown_fields_rejected() {
        assert!(toml::from_str::<ServerConfig>("index = 1\nbogus = 2\n").is_err());
    }
}
