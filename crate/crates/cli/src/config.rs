//! Agent configuration file.
//!
//! ```toml
//! [generation]            # defaults for every role
//! beam_size = 5
//! top_p = 0.98
//! temperature = 1.2
//!
//! [questioner]
//! endpoint = "remote:http://127.0.0.1:8000"
//! timeout_secs = 30
//! retries = 2
//! max_in_flight = 4
//!
//! [answerer]
//! endpoint = "scripted:lexical-answerer"
//! generation = { beam_size = 1 }
//! ```
//!
//! Roles are `questioner`, `extractor`, `answerer` and `filter`. An endpoint
//! is `scripted:<name>`, `remote:<url>` or a bare `http(s)://` URL.

use std::collections::BTreeMap;
use std::path::Path;
use std::time::Duration;

use anyhow::{bail, Context, Result};
use serde::Deserialize;
use simseek::agents::{AgentEndpoint, EndpointKind, GenerationConfig};

#[derive(Debug, Default, Deserialize)]
pub struct AgentsFile {
    #[serde(default)]
    pub generation: GenerationOverrides,
    #[serde(flatten)]
    pub roles: BTreeMap<String, RoleEntry>,
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GenerationOverrides {
    pub beam_size: Option<u32>,
    pub top_p: Option<f64>,
    pub temperature: Option<f64>,
    pub max_new_tokens: Option<u32>,
}

impl GenerationOverrides {
    fn apply(&self, g: &mut GenerationConfig) {
        if let Some(v) = self.beam_size {
            g.beam_size = v;
        }
        if let Some(v) = self.top_p {
            g.top_p = v;
        }
        if let Some(v) = self.temperature {
            g.temperature = v;
        }
        if let Some(v) = self.max_new_tokens {
            g.max_new_tokens = v;
        }
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RoleEntry {
    pub endpoint: String,
    pub timeout_secs: Option<f64>,
    pub retries: Option<u32>,
    pub max_in_flight: Option<usize>,
    #[serde(default)]
    pub generation: GenerationOverrides,
}

pub const ROLES: [&str; 4] = ["questioner", "extractor", "answerer", "filter"];

pub fn parse_endpoint(arg: &str) -> Result<EndpointKind> {
    if let Some(name) = arg.strip_prefix("scripted:") {
        Ok(EndpointKind::Scripted(name.to_owned()))
    } else if let Some(url) = arg.strip_prefix("remote:") {
        Ok(EndpointKind::Remote(url.to_owned()))
    } else if arg.starts_with("http://") || arg.starts_with("https://") {
        Ok(EndpointKind::Remote(arg.to_owned()))
    } else {
        bail!("endpoint {arg:?} must be scripted:<name>, remote:<url> or an http(s) URL")
    }
}

impl AgentsFile {
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
        let file: Self = toml::from_str(&text).with_context(|| format!("parsing {}", path.display()))?;
        if let Some(unknown) = file.roles.keys().find(|k| !ROLES.contains(&k.as_str())) {
            bail!("{}: unknown role [{unknown}]; expected one of {ROLES:?}", path.display());
        }
        Ok(file)
    }

    /// Endpoint for `role`; a command-line `flag` replaces the file's
    /// endpoint but keeps its timeout, retries and generation settings.
    pub fn endpoint(&self, role: &str, flag: Option<&str>) -> Result<Option<AgentEndpoint>> {
        let entry = self.roles.get(role);
        let arg = match (flag, entry) {
            (Some(f), _) => f,
            (None, Some(e)) => e.endpoint.as_str(),
            (None, None) => return Ok(None),
        };
        let mut ep = AgentEndpoint::scripted("");
        ep.kind = parse_endpoint(arg).with_context(|| format!("{role} endpoint"))?;
        self.generation.apply(&mut ep.generation);
        if let Some(e) = entry {
            e.generation.apply(&mut ep.generation);
            if let Some(t) = e.timeout_secs {
                if !(t.is_finite() && t > 0.0) {
                    bail!("{role}: timeout_secs must be positive");
                }
                ep.timeout = Duration::from_secs_f64(t);
            }
            if let Some(r) = e.retries {
                ep.retries = r;
            }
            if let Some(m) = e.max_in_flight {
                ep.max_in_flight = m;
            }
        }
        ep.validate().with_context(|| format!("{role} endpoint"))?;
        Ok(Some(ep))
    }
}
