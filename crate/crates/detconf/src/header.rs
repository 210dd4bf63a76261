//! Comment headers embedded in every output file.
//!
//! The header pins the provenance of an output: tool version, the
//! subcommand, a digest of the effective configuration and the seed when
//! the command is randomized. Nothing time- or path-dependent goes in, so
//! rerunning a command with identical inputs reproduces the file byte for
//! byte.

use detconf_core::rng::fnv1a;

/// Digest of the effective configuration, computed over the canonical
/// `key=value` lines of [`Header::config`].
fn digest(pairs: &[(String, String)]) -> u64 {
    let mut canonical = String::new();
    for (k, v) in pairs {
        canonical.push_str(k);
        canonical.push('=');
        canonical.push_str(v);
        canonical.push('\n');
    }
    fnv1a(canonical.as_bytes())
}

/// Builder for the `#`-comment block of an output file.
pub struct Header {
    command: &'static str,
    config: Vec<(String, String)>,
    seed: Option<u64>,
    extra: Vec<String>,
}

impl Header {
    pub fn new(command: &'static str) -> Self {
        Self {
            command,
            config: Vec::new(),
            seed: None,
            extra: Vec::new(),
        }
    }

    /// Records one effective-configuration setting (flags already merged).
    pub fn config(mut self, key: &str, value: impl ToString) -> Self {
        self.config.push((key.to_string(), value.to_string()));
        self
    }

    pub fn seed(mut self, seed: u64) -> Self {
        self.seed = Some(seed);
        self
    }

    /// Free-form extra comment line (used e.g. for warnings).
    pub fn note(mut self, line: impl Into<String>) -> Self {
        self.extra.push(line.into());
        self
    }

    pub fn render(&self) -> Vec<String> {
        let mut lines = vec![
            format!("detconf {}", crate::TOOL_VERSION),
            format!("command: {}", self.command),
            format!("config: {:016x}", digest(&self.config)),
        ];
        if let Some(seed) = self.seed {
            lines.push(format!("seed: {seed}"));
        }
        lines.extend(self.extra.iter().cloned());
        lines
    }
}
