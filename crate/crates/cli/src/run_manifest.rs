// SPDX-License-Identifier: Apache-2.0

//! Optional JSON file collecting the settings of one secure run, so both
//! parties can be started from a checked-in document instead of long
//! command lines. Command-line flags take precedence over its fields.

use std::net::{SocketAddr, ToSocketAddrs};
use std::path::{Path, PathBuf};

use anyhow::{bail, Result};
use serde::Deserialize;

use crate::exit::usage;
use crate::files::read_json;
use sealedinfer::net::Mode;

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunManifest {
    pub bundle: Option<PathBuf>,
    pub inputs: Option<PathBuf>,
    pub labels: Option<PathBuf>,
    pub randomness_dir: Option<PathBuf>,
    pub randomness_label: Option<String>,
    pub mode: Option<String>,
    pub endpoint: Option<String>,
    pub seed: Option<u64>,
    pub out: Option<PathBuf>,
}

impl RunManifest {
    /// Loads `path`; relative paths inside resolve against its directory.
    pub fn load(path: &Path) -> Result<Self> {
        let mut m: RunManifest = read_json(path)?;
        let base = path.parent().unwrap_or(Path::new("."));
        for p in [&mut m.bundle, &mut m.inputs, &mut m.labels, &mut m.randomness_dir, &mut m.out]
            .into_iter()
            .flatten()
        {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        }
        for p in [&m.bundle, &m.inputs, &m.labels, &m.randomness_dir].into_iter().flatten() {
            if !p.exists() {
                bail!(usage(format!("{}: {} does not exist", path.display(), p.display())));
            }
        }
        if let Some(mode) = &m.mode {
            parse_mode(mode)?;
        }
        if let Some(ep) = &m.endpoint {
            resolve_endpoint(ep)?;
        }
        Ok(m)
    }
}

pub fn parse_mode(s: &str) -> Result<Mode> {
    s.parse::<Mode>().map_err(|e| usage(e.to_string()))
}

/// Resolves `host:port`.
pub fn resolve_endpoint(s: &str) -> Result<SocketAddr> {
    let bad = || usage(format!("endpoint `{s}` is not host:port"));
    let (host, port) = s.rsplit_once(':').ok_or_else(bad)?;
    if host.is_empty() || port.parse::<u16>().is_err() {
        return Err(bad());
    }
    s.to_socket_addrs()
        .map_err(|e| usage(format!("endpoint `{s}`: {e}")))?
        .next()
        .ok_or_else(bad)
}
