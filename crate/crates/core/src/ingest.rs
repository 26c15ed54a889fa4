//! Configuration ingest: the line grammar, the JSON device form, and snapshot
//! loading.
//!
//! A config file is a sequence of stanzas. A stanza header starts in column 0
//! (`<kind> <name>`), entries are indented lines below it. `#` and `!` start
//! comments. A top-level `hostname <name>` line overrides the device name.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::grammar;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum StanzaKind {
    Acl,
    RouteFilter,
    Vrf,
    RoutingPolicy,
    Interface,
    BgpNeighbor,
}

impl StanzaKind {
    pub const ALL: [StanzaKind; 6] = [
        StanzaKind::Acl,
        StanzaKind::RouteFilter,
        StanzaKind::Vrf,
        StanzaKind::RoutingPolicy,
        StanzaKind::Interface,
        StanzaKind::BgpNeighbor,
    ];

    pub fn keyword(self) -> &'static str {
        match self {
            StanzaKind::Acl => "acl",
            StanzaKind::RouteFilter => "route-filter",
            StanzaKind::Vrf => "vrf",
            StanzaKind::RoutingPolicy => "routing-policy",
            StanzaKind::Interface => "interface",
            StanzaKind::BgpNeighbor => "bgp-neighbor",
        }
    }

    pub fn from_keyword(s: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|k| k.keyword() == s)
    }

    /// Validates one entry against the kind's entry grammar.
    fn check_entry(self, toks: &[&str]) -> Result<(), String> {
        match self {
            StanzaKind::Acl => grammar::parse_acl_rule(toks).map(drop),
            StanzaKind::RouteFilter => grammar::parse_route_filter_rule(toks).map(drop),
            StanzaKind::Vrf => grammar::parse_vrf_setting(toks).map(drop),
            StanzaKind::RoutingPolicy => grammar::parse_policy_clause(toks).map(drop),
            StanzaKind::Interface => grammar::parse_interface_setting(toks).map(drop),
            StanzaKind::BgpNeighbor => grammar::parse_neighbor_setting(toks).map(drop),
        }
    }
}

impl fmt::Display for StanzaKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.keyword())
    }
}

/// Inclusive, 1-based line range.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct LineSpan {
    pub start: usize,
    pub end: usize,
}

impl LineSpan {
    pub fn contains(&self, line: usize) -> bool {
        self.start <= line && line <= self.end
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Entry {
    pub key: String,
    /// Remaining tokens, operators included (`eq`, `le`, `ge`, ...).
    pub args: Vec<String>,
}

impl Entry {
    pub fn tokens(&self) -> impl Iterator<Item = &str> {
        std::iter::once(self.key.as_str()).chain(self.args.iter().map(String::as_str))
    }

    pub fn token_vec(&self) -> Vec<&str> {
        self.tokens().collect()
    }

    pub fn line(&self) -> String {
        self.token_vec().join(" ")
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Stanza {
    pub kind: StanzaKind,
    pub name: String,
    pub entries: Vec<Entry>,
    /// Header and entry lines exactly as they appeared in the source.
    pub raw_text: String,
    pub lines: LineSpan,
    /// Source line of each entry, parallel to `entries`.
    pub entry_lines: Vec<usize>,
}

impl Stanza {
    /// Canonical text: header plus one indented line per entry.
    pub fn print(&self) -> String {
        let mut out = format!("{} {}\n", self.kind, self.name);
        for e in &self.entries {
            out.push(' ');
            out.push_str(&e.line());
            out.push('\n');
        }
        out
    }

    fn same_structure(&self, other: &Stanza) -> bool {
        self.kind == other.kind && self.name == other.name && self.entries == other.entries
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "UPPERCASE")]
pub enum Level {
    Info,
    Warning,
    Error,
}

impl fmt::Display for Level {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Level::Info => "INFO",
            Level::Warning => "WARNING",
            Level::Error => "ERROR",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "code", rename_all = "kebab-case")]
pub enum DiagnosticKind {
    UnknownStanzaKind { kind: String, name: String },
    EmptyDevice { device: String },
    DuplicateConfig { first: String, second: String },
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Diagnostic {
    pub level: Level,
    pub file: Option<PathBuf>,
    pub line: Option<usize>,
    #[serde(flatten)]
    pub kind: DiagnosticKind,
}

impl Diagnostic {
    pub fn message(&self) -> String {
        match &self.kind {
            DiagnosticKind::UnknownStanzaKind { kind, name } => {
                format!("ignoring stanza `{name}` of unknown kind `{kind}`")
            }
            DiagnosticKind::EmptyDevice { device } => format!("device `{device}` has no stanzas"),
            DiagnosticKind::DuplicateConfig { first, second } => {
                format!("devices `{first}` and `{second}` have byte-identical configs")
            }
        }
    }
}

/// `LEVEL file:line message`
impl fmt::Display for Diagnostic {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let file = self.file.as_ref().map_or_else(|| "-".to_owned(), |p| p.display().to_string());
        match self.line {
            Some(line) => write!(f, "{} {}:{} {}", self.level, file, line, self.message()),
            None => write!(f, "{} {} {}", self.level, file, self.message()),
        }
    }
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum ParseError {
    #[error("line {line}: malformed stanza: {reason}")]
    MalformedStanza { line: usize, reason: String },
    #[error("line {line}: duplicate {kind} `{name}`")]
    DuplicateStanzaName { kind: StanzaKind, name: String, line: usize },
    #[error("device name must be a non-empty identifier, got `{0}`")]
    InvalidDeviceName(String),
}

#[derive(Debug, Error)]
pub enum IngestError {
    #[error("snapshot contains no device files")]
    EmptySnapshot,
    #[error("{}: {source}", path.display())]
    Io { path: PathBuf, source: std::io::Error },
    #[error("{}: {source}", path.display())]
    Parse { path: PathBuf, source: ParseError },
    #[error("{}: invalid device JSON: {message}", path.display())]
    Json { path: PathBuf, message: String },
    #[error("device `{name}` defined by both {} and {}", first.display(), second.display())]
    DuplicateDevice { name: String, first: PathBuf, second: PathBuf },
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DeviceConfig {
    pub device_name: String,
    /// Set when a `hostname` directive overrode the file-derived name.
    pub hostname: Option<String>,
    pub source_path: PathBuf,
    pub stanzas: Vec<Stanza>,
    /// SHA-256 of the source bytes.
    pub digest: String,
    pub line_count: usize,
    /// Line ranges of skipped unknown-kind blocks.
    pub skipped: Vec<LineSpan>,
    pub warnings: Vec<Diagnostic>,
}

impl DeviceConfig {
    /// (kind, name) → line range, one per stanza.
    pub fn line_index(&self) -> Vec<(StanzaKind, &str, LineSpan)> {
        self.stanzas.iter().map(|s| (s.kind, s.name.as_str(), s.lines)).collect()
    }

    pub fn stanza(&self, kind: StanzaKind, name: &str) -> Option<&Stanza> {
        self.stanzas.iter().find(|s| s.kind == kind && s.name == name)
    }

    /// Canonical text; parsing it yields a structurally equal device.
    pub fn print(&self) -> String {
        let mut out = String::new();
        if let Some(h) = &self.hostname {
            out.push_str(&format!("hostname {h}\n"));
        }
        for s in &self.stanzas {
            out.push_str(&s.print());
        }
        out
    }

    /// Equality of names and stanza content, ignoring source positions.
    pub fn same_structure(&self, other: &DeviceConfig) -> bool {
        self.device_name == other.device_name
            && self.stanzas.len() == other.stanzas.len()
            && self.stanzas.iter().zip(&other.stanzas).all(|(a, b)| a.same_structure(b))
    }
}

pub fn digest_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

fn is_comment_or_blank(line: &str) -> bool {
    let t = line.trim();
    t.is_empty() || t.starts_with('#') || t.starts_with('!')
}

enum Block {
    None,
    Known(Stanza),
    Skipped(LineSpan),
}

/// Parses one device config in the line grammar.
pub fn parse_config(text: &str, device_name: &str) -> Result<DeviceConfig, ParseError> {
    if !grammar::is_identifier(device_name) {
        return Err(ParseError::InvalidDeviceName(device_name.to_owned()));
    }
    let mut device = DeviceConfig {
        device_name: device_name.to_owned(),
        hostname: None,
        source_path: PathBuf::new(),
        stanzas: Vec::new(),
        digest: digest_hex(text.as_bytes()),
        line_count: text.lines().count(),
        skipped: Vec::new(),
        warnings: Vec::new(),
    };
    let mut seen: BTreeSet<(StanzaKind, String)> = BTreeSet::new();
    let mut block = Block::None;

    let close = |block: Block, device: &mut DeviceConfig| match block {
        Block::Known(s) => device.stanzas.push(s),
        Block::Skipped(span) => device.skipped.push(span),
        Block::None => {}
    };

    for (idx, raw) in text.lines().enumerate() {
        let line_no = idx + 1;
        let line = raw.strip_suffix('\r').unwrap_or(raw);
        if is_comment_or_blank(line) {
            continue;
        }
        let indented = line.starts_with(|c: char| c.is_whitespace());
        let toks: Vec<&str> = line.split_whitespace().collect();
        if indented {
            match &mut block {
                Block::None => {
                    return Err(ParseError::MalformedStanza {
                        line: line_no,
                        reason: "entry outside of any stanza".to_owned(),
                    })
                }
                Block::Skipped(span) => span.end = line_no,
                Block::Known(stanza) => {
                    stanza
                        .kind
                        .check_entry(&toks)
                        .map_err(|reason| ParseError::MalformedStanza { line: line_no, reason })?;
                    stanza.entries.push(Entry {
                        key: toks[0].to_owned(),
                        args: toks[1..].iter().map(|t| (*t).to_owned()).collect(),
                    });
                    stanza.entry_lines.push(line_no);
                    stanza.raw_text.push_str(line);
                    stanza.raw_text.push('\n');
                    stanza.lines.end = line_no;
                }
            }
            continue;
        }

        close(std::mem::replace(&mut block, Block::None), &mut device);
        let malformed = |reason: String| ParseError::MalformedStanza { line: line_no, reason };
        if toks[0] == "hostname" {
            match toks.as_slice() {
                [_, name] if grammar::is_identifier(name) => {
                    device.device_name = (*name).to_owned();
                    device.hostname = Some((*name).to_owned());
                }
                _ => return Err(malformed("hostname needs exactly one valid name".to_owned())),
            }
            continue;
        }
        let [kind, name] = toks.as_slice() else {
            return Err(malformed(format!("expected `<kind> <name>`, found {} tokens", toks.len())));
        };
        if !grammar::is_identifier(kind) || !grammar::is_identifier(name) {
            return Err(malformed(format!("invalid header `{}`", toks.join(" "))));
        }
        let span = LineSpan { start: line_no, end: line_no };
        match StanzaKind::from_keyword(kind) {
            Some(kind) => {
                if !seen.insert((kind, (*name).to_owned())) {
                    return Err(ParseError::DuplicateStanzaName { kind, name: (*name).to_owned(), line: line_no });
                }
                block = Block::Known(Stanza {
                    kind,
                    name: (*name).to_owned(),
                    entries: Vec::new(),
                    raw_text: format!("{line}\n"),
                    lines: span,
                    entry_lines: Vec::new(),
                });
            }
            None => {
                device.warnings.push(Diagnostic {
                    level: Level::Warning,
                    file: None,
                    line: Some(line_no),
                    kind: DiagnosticKind::UnknownStanzaKind { kind: (*kind).to_owned(), name: (*name).to_owned() },
                });
                block = Block::Skipped(span);
            }
        }
    }
    close(block, &mut device);
    Ok(device)
}

/// JSON device form: `{"hostname": "r1", "stanzas": [{"kind": "acl", "name": "A", "entries": ["permit ip any any"]}]}`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct JsonDevice {
    #[serde(default)]
    pub hostname: Option<String>,
    #[serde(default)]
    pub stanzas: Vec<JsonStanza>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct JsonStanza {
    pub kind: String,
    pub name: String,
    #[serde(default)]
    pub entries: Vec<String>,
}

impl JsonDevice {
    /// Renders the device in the line grammar. Line numbers of the parsed
    /// result refer to this rendering.
    pub fn to_text(&self) -> Result<String, String> {
        let mut out = String::new();
        if let Some(h) = &self.hostname {
            out.push_str(&format!("hostname {h}\n"));
        }
        for s in &self.stanzas {
            if s.kind.split_whitespace().count() != 1 || s.name.split_whitespace().count() != 1 {
                return Err(format!("stanza `{} {}` has whitespace in kind or name", s.kind, s.name));
            }
            out.push_str(&format!("{} {}\n", s.kind, s.name));
            for e in &s.entries {
                if e.contains(['\n', '\r']) || e.trim().is_empty() {
                    return Err(format!("stanza `{}`: entries must be single non-empty lines", s.name));
                }
                out.push(' ');
                out.push_str(e.trim());
                out.push('\n');
            }
        }
        Ok(out)
    }
}

pub fn parse_json_device(text: &str, device_name: &str) -> Result<DeviceConfig, String> {
    let dev: JsonDevice = serde_json::from_str(text).map_err(|e| e.to_string())?;
    let rendered = dev.to_text()?;
    let mut cfg = parse_config(&rendered, device_name).map_err(|e| e.to_string())?;
    cfg.digest = digest_hex(text.as_bytes());
    Ok(cfg)
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct NetworkSnapshot {
    pub snapshot_id: String,
    pub devices: BTreeMap<String, DeviceConfig>,
    pub ingest_warnings: Vec<Diagnostic>,
}

impl NetworkSnapshot {
    pub fn from_devices(devices: Vec<DeviceConfig>) -> Result<Self, IngestError> {
        if devices.is_empty() {
            return Err(IngestError::EmptySnapshot);
        }
        let mut map: BTreeMap<String, DeviceConfig> = BTreeMap::new();
        let mut warnings = Vec::new();
        for mut dev in devices {
            for w in &mut dev.warnings {
                if w.file.is_none() && !dev.source_path.as_os_str().is_empty() {
                    w.file = Some(dev.source_path.clone());
                }
            }
            warnings.extend(dev.warnings.iter().cloned());
            if let Some(prev) = map.get(&dev.device_name) {
                return Err(IngestError::DuplicateDevice {
                    name: dev.device_name.clone(),
                    first: prev.source_path.clone(),
                    second: dev.source_path.clone(),
                });
            }
            map.insert(dev.device_name.clone(), dev);
        }
        let snapshot_id = snapshot_id(map.values());
        Ok(NetworkSnapshot { snapshot_id, devices: map, ingest_warnings: warnings })
    }

    pub fn device(&self, name: &str) -> Option<&DeviceConfig> {
        self.devices.get(name)
    }
}

fn snapshot_id<'a>(devices: impl Iterator<Item = &'a DeviceConfig>) -> String {
    let mut h = Sha256::new();
    for d in devices {
        h.update(d.device_name.as_bytes());
        h.update([0]);
        h.update(d.digest.as_bytes());
        h.update([0]);
    }
    hex::encode(h.finalize())
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> IngestError + '_ {
    move |source| IngestError::Io { path: path.to_owned(), source }
}

/// Loads one `.cfg` or `.json` device file.
pub fn load_device(path: &Path) -> Result<DeviceConfig, IngestError> {
    let bytes = fs::read(path).map_err(io_err(path))?;
    let text = String::from_utf8(bytes)
        .map_err(|e| std::io::Error::new(std::io::ErrorKind::InvalidData, e))
        .map_err(io_err(path))?;
    let stem = path.file_stem().and_then(|s| s.to_str()).unwrap_or_default();
    let mut dev = if path.extension().is_some_and(|e| e == "json") {
        parse_json_device(&text, stem).map_err(|message| IngestError::Json { path: path.to_owned(), message })?
    } else {
        parse_config(&text, stem).map_err(|source| IngestError::Parse { path: path.to_owned(), source })?
    };
    dev.source_path = path.to_owned();
    Ok(dev)
}

/// Loads every `*.cfg` / `*.json` file in `dir` (non-recursive), in file-name order.
pub fn load_snapshot(dir: &Path) -> Result<NetworkSnapshot, IngestError> {
    let mut files: Vec<PathBuf> = fs::read_dir(dir)
        .map_err(io_err(dir))?
        .map(|e| e.map(|e| e.path()).map_err(io_err(dir)))
        .collect::<Result<Vec<_>, _>>()?
        .into_iter()
        .filter(|p| p.is_file() && p.extension().is_some_and(|e| e == "cfg" || e == "json"))
        .collect();
    files.sort();
    if files.is_empty() {
        return Err(IngestError::EmptySnapshot);
    }
    let devices = files.iter().map(|p| load_device(p)).collect::<Result<Vec<_>, _>>()?;
    NetworkSnapshot::from_devices(devices)
}

/// Structural diagnostics. Never fails and never mutates the snapshot.
pub fn validate_snapshot(snapshot: &NetworkSnapshot) -> Vec<Diagnostic> {
    let mut out = Vec::new();
    for dev in snapshot.devices.values() {
        if dev.stanzas.is_empty() {
            out.push(Diagnostic {
                level: Level::Warning,
                file: path_opt(&dev.source_path),
                line: None,
                kind: DiagnosticKind::EmptyDevice { device: dev.device_name.clone() },
            });
        }
    }
    let mut by_digest: BTreeMap<&str, &DeviceConfig> = BTreeMap::new();
    for dev in snapshot.devices.values() {
        match by_digest.get(dev.digest.as_str()) {
            Some(first) => out.push(Diagnostic {
                level: Level::Info,
                file: path_opt(&dev.source_path),
                line: None,
                kind: DiagnosticKind::DuplicateConfig {
                    first: first.device_name.clone(),
                    second: dev.device_name.clone(),
                },
            }),
            None => {
                by_digest.insert(&dev.digest, dev);
            }
        }
    }
    out
}

fn path_opt(p: &Path) -> Option<PathBuf> {
    (!p.as_os_str().is_empty()).then(|| p.to_owned())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn minimal_acl() {
        let dev = parse_config("acl A\n permit ip 10.0.0.0/8 any\n", "r1").unwrap();
        assert_eq!(dev.stanzas.len(), 1);
        assert_eq!(dev.stanzas[0].kind, StanzaKind::Acl);
        assert_eq!(dev.stanzas[0].entries.len(), 1);
        assert_eq!(dev.stanzas[0].lines, LineSpan { start: 1, end: 2 });
    }

    #[test]
    fn empty_input() {
        let dev = parse_config("", "r1").unwrap();
        assert!(dev.stanzas.is_empty());
        assert!(dev.warnings.is_empty());
    }

    #[test]
    fn unknown_kind_is_a_warning() {
        let dev = parse_config("ntp-server x\n server 1.2.3.4\nacl A\n deny ip any any\n", "r1").unwrap();
        assert_eq!(dev.stanzas.len(), 1);
        assert_eq!(dev.warnings.len(), 1);
        assert_eq!(dev.skipped, vec![LineSpan { start: 1, end: 2 }]);
        assert!(dev.warnings[0].to_string().starts_with("WARNING -:1 "));
    }

    #[test]
    fn malformed_headers() {
        for (text, line) in [
            ("acl\n", 1),
            ("acl A B\n", 1),
            ("# c\n permit ip any any\n", 2),
            ("acl A\n permit ip any\n", 2),
            ("acl A/B\n", 1),
            ("hostname\n", 1),
        ] {
            match parse_config(text, "r1") {
                Err(ParseError::MalformedStanza { line: l, .. }) => assert_eq!(l, line, "{text:?}"),
                other => panic!("{text:?}: {other:?}"),
            }
        }
    }

    #[test]
    fn duplicate_stanza() {
        let err = parse_config("acl A\nacl A\n", "r1").unwrap_err();
        assert_eq!(err, ParseError::DuplicateStanzaName { kind: StanzaKind::Acl, name: "A".into(), line: 2 });
        // same name, different kind is fine
        assert!(parse_config("acl A\nroute-filter A\n", "r1").is_ok());
    }

    #[test]
    fn hostname_overrides() {
        let dev = parse_config("hostname core-1\nvrf V\n rd 65000:1\n", "file-stem").unwrap();
        assert_eq!(dev.device_name, "core-1");
        let again = parse_config(&dev.print(), "other").unwrap();
        assert!(dev.same_structure(&again));
    }

    #[test]
    fn json_device() {
        let text = r#"{"hostname":"j1","stanzas":[{"kind":"acl","name":"A","entries":["permit ip any any"]}]}"#;
        let dev = parse_json_device(text, "stem").unwrap();
        assert_eq!(dev.device_name, "j1");
        assert_eq!(dev.stanzas[0].entries[0].line(), "permit ip any any");
        assert!(parse_json_device(r#"{"stanzas":[{"kind":"acl","name":"A","entries":["x\ny"]}]}"#, "s").is_err());
        assert!(parse_json_device(r#"{"bogus":1}"#, "s").is_err());
    }

    #[test]
    fn validate_reports_empty_and_duplicates() {
        let a = parse_config("acl A\n permit ip any any\n", "a").unwrap();
        let mut b = parse_config("acl A\n permit ip any any\n", "b").unwrap();
        b.source_path = PathBuf::from("b.cfg");
        let empty = parse_config("# nothing\n", "c").unwrap();
        let snap = NetworkSnapshot::from_devices(vec![a, b, empty]).unwrap();
        let before = snap.clone();
        let diags = validate_snapshot(&snap);
        assert_eq!(snap, before);
        assert!(diags.contains(&Diagnostic {
            level: Level::Warning,
            file: None,
            line: None,
            kind: DiagnosticKind::EmptyDevice { device: "c".into() },
        }));
        assert!(diags.iter().any(|d| d.level == Level::Info
            && d.kind == DiagnosticKind::DuplicateConfig { first: "a".into(), second: "b".into() }));
    }

    #[test]
    fn clean_snapshot_validates_empty() {
        let a = parse_config("acl A\n permit ip any any\n", "a").unwrap();
        let b = parse_config("acl B\n deny ip any any\n", "b").unwrap();
        let snap = NetworkSnapshot::from_devices(vec![a, b]).unwrap();
        assert!(validate_snapshot(&snap).is_empty());
    }

    #[test]
    fn duplicate_device_names_rejected() {
        let a = parse_config("hostname x\n", "a").unwrap();
        let b = parse_config("hostname x\n", "b").unwrap();
        assert!(matches!(NetworkSnapshot::from_devices(vec![a, b]), Err(IngestError::DuplicateDevice { .. })));
        assert!(matches!(NetworkSnapshot::from_devices(vec![]), Err(IngestError::EmptySnapshot)));
    }
}
