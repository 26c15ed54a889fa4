//! Typed forms of stanza entries.
//!
//! The line parser keeps entries as raw token lists; this module turns them
//! into rules and clauses. Parsing here is also what validates an entry at
//! ingest time, so extraction can rely on every known-kind entry being well
//! formed.

use std::fmt;
use std::net::Ipv4Addr;
use std::str::FromStr;

use ipnet::Ipv4Net;
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Action {
    Permit,
    Deny,
}

impl Action {
    pub fn flipped(self) -> Self {
        match self {
            Action::Permit => Action::Deny,
            Action::Deny => Action::Permit,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Action::Permit => "permit",
            Action::Deny => "deny",
        }
    }
}

impl FromStr for Action {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "permit" => Ok(Action::Permit),
            "deny" => Ok(Action::Deny),
            other => Err(format!("expected permit or deny, found `{other}`")),
        }
    }
}

impl fmt::Display for Action {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Protocol {
    Ip,
    Tcp,
    Udp,
    Icmp,
}

impl Protocol {
    fn parse(s: &str) -> Result<Self, String> {
        match s {
            "ip" => Ok(Protocol::Ip),
            "tcp" => Ok(Protocol::Tcp),
            "udp" => Ok(Protocol::Udp),
            "icmp" => Ok(Protocol::Icmp),
            other => Err(format!("unknown protocol `{other}`")),
        }
    }

    /// `ip` matches every protocol.
    fn covers(self, other: Protocol) -> bool {
        self == Protocol::Ip || self == other
    }
}

impl fmt::Display for Protocol {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Protocol::Ip => "ip",
            Protocol::Tcp => "tcp",
            Protocol::Udp => "udp",
            Protocol::Icmp => "icmp",
        })
    }
}

/// Source or destination match of an ACL rule.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case", tag = "type", content = "value")]
pub enum Endpoint {
    Any,
    Net(Ipv4Net),
    PrefixList(String),
}

impl Endpoint {
    fn covers(&self, other: &Endpoint) -> bool {
        match (self, other) {
            (Endpoint::Any, _) => true,
            (Endpoint::Net(a), Endpoint::Net(b)) => a.contains(b),
            (Endpoint::PrefixList(a), Endpoint::PrefixList(b)) => a == b,
            _ => false,
        }
    }

    pub fn is_any(&self) -> bool {
        matches!(self, Endpoint::Any)
    }
}

impl fmt::Display for Endpoint {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Endpoint::Any => f.write_str("any"),
            Endpoint::Net(net) if net.prefix_len() == 32 => write!(f, "host {}", net.addr()),
            Endpoint::Net(net) => write!(f, "{net}"),
            Endpoint::PrefixList(name) => write!(f, "prefix-list {name}"),
        }
    }
}

/// Inclusive destination port range.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct PortRange {
    pub lo: u16,
    pub hi: u16,
}

impl PortRange {
    fn covers(&self, other: &PortRange) -> bool {
        self.lo <= other.lo && other.hi <= self.hi
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct AclRule {
    pub action: Action,
    pub protocol: Protocol,
    pub src: Endpoint,
    pub dst: Endpoint,
    /// `None` matches every port.
    pub ports: Option<PortRange>,
}

impl AclRule {
    /// True when every packet matched by `other` is also matched by `self`.
    pub fn covers(&self, other: &AclRule) -> bool {
        let ports = match (&self.ports, &other.ports) {
            (None, _) => true,
            (Some(_), None) => false,
            (Some(a), Some(b)) => a.covers(b),
        };
        self.protocol.covers(other.protocol)
            && self.src.covers(&other.src)
            && self.dst.covers(&other.dst)
            && ports
    }

    pub fn tokens(&self) -> Vec<String> {
        let mut out = vec![self.action.to_string(), self.protocol.to_string()];
        for ep in [&self.src, &self.dst] {
            out.extend(ep.to_string().split(' ').map(str::to_owned));
        }
        match self.ports {
            Some(p) if p.lo == p.hi => out.extend(["eq".to_owned(), p.lo.to_string()]),
            Some(p) => out.extend(["range".to_owned(), p.lo.to_string(), p.hi.to_string()]),
            None => {}
        }
        out
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct RouteFilterRule {
    pub action: Action,
    pub prefix: Ipv4Net,
    pub ge: Option<u8>,
    pub le: Option<u8>,
}

impl RouteFilterRule {
    /// Matched prefix-length window.
    pub fn length_range(&self) -> (u8, u8) {
        let len = self.prefix.prefix_len();
        let lo = self.ge.unwrap_or(len);
        let hi = self.le.unwrap_or(if self.ge.is_some() { 32 } else { len });
        (lo, hi)
    }

    pub fn covers(&self, other: &RouteFilterRule) -> bool {
        let (a_lo, a_hi) = self.length_range();
        let (b_lo, b_hi) = other.length_range();
        self.prefix.contains(&other.prefix) && a_lo <= b_lo && b_hi <= a_hi
    }
}

/// One clause of a routing policy.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case", tag = "clause", content = "value")]
pub enum PolicyClause {
    MatchAcl(String),
    MatchRouteFilter(String),
    MatchCommunity(String),
    SetLocalPreference(u32),
    SetMed(u32),
    SetCommunity(String),
    SetAsPathPrepend(u32),
    Action(Action),
    Description(String),
}

impl PolicyClause {
    pub fn is_match(&self) -> bool {
        matches!(
            self,
            PolicyClause::MatchAcl(_) | PolicyClause::MatchRouteFilter(_) | PolicyClause::MatchCommunity(_)
        )
    }

    pub fn is_set(&self) -> bool {
        matches!(
            self,
            PolicyClause::SetLocalPreference(_)
                | PolicyClause::SetMed(_)
                | PolicyClause::SetCommunity(_)
                | PolicyClause::SetAsPathPrepend(_)
        )
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case", tag = "setting", content = "value")]
pub enum VrfSetting {
    Rd(String),
    ImportTarget(String),
    ExportTarget(String),
    ImportPolicy(String),
    ExportPolicy(String),
    MaxRoutes(u32),
    Description(String),
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case", tag = "setting", content = "value")]
pub enum InterfaceSetting {
    Vrf(String),
    AclIn(String),
    AclOut(String),
    Address(Ipv4Net),
    Shutdown,
    Description(String),
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case", tag = "setting", content = "value")]
pub enum NeighborSetting {
    RemoteAs(u32),
    ImportPolicy(String),
    ExportPolicy(String),
    Vrf(String),
    UpdateSource(String),
    Description(String),
}

/// Object names: letters, digits and `_ . : -`. No `/`, which separates id parts.
pub fn is_identifier(s: &str) -> bool {
    !s.is_empty()
        && s.len() <= 128
        && s.chars().all(|c| c.is_ascii_alphanumeric() || matches!(c, '_' | '.' | ':' | '-'))
}

fn ident(tok: Option<&&str>, what: &str) -> Result<String, String> {
    match tok {
        Some(t) if is_identifier(t) => Ok((*t).to_owned()),
        Some(t) => Err(format!("invalid {what} `{t}`")),
        None => Err(format!("missing {what}")),
    }
}

fn number<T: FromStr>(tok: Option<&&str>, what: &str) -> Result<T, String> {
    let t = tok.ok_or_else(|| format!("missing {what}"))?;
    t.parse().map_err(|_| format!("invalid {what} `{t}`"))
}

fn route_target(tok: Option<&&str>, what: &str) -> Result<String, String> {
    let t = tok.ok_or_else(|| format!("missing {what}"))?;
    let (asn, nn) = t.split_once(':').ok_or_else(|| format!("invalid {what} `{t}`"))?;
    if asn.parse::<u32>().is_err() || nn.parse::<u32>().is_err() {
        return Err(format!("invalid {what} `{t}`"));
    }
    Ok((*t).to_owned())
}

fn net(tok: &str) -> Result<Ipv4Net, String> {
    tok.parse::<Ipv4Net>()
        .map(|n| n.trunc())
        .map_err(|_| format!("invalid prefix `{tok}`"))
}

fn no_trailing(rest: &[&str]) -> Result<(), String> {
    match rest.first() {
        None => Ok(()),
        Some(t) => Err(format!("unexpected token `{t}`")),
    }
}

fn endpoint<'a>(toks: &'a [&'a str]) -> Result<(Endpoint, &'a [&'a str]), String> {
    match toks {
        ["any", rest @ ..] => Ok((Endpoint::Any, rest)),
        ["host", addr, rest @ ..] => {
            let ip: Ipv4Addr = addr.parse().map_err(|_| format!("invalid host `{addr}`"))?;
            Ok((Endpoint::Net(Ipv4Net::from(ip)), rest))
        }
        ["prefix-list", name, rest @ ..] => Ok((Endpoint::PrefixList(ident(Some(name), "prefix-list name")?), rest)),
        [tok, rest @ ..] => Ok((Endpoint::Net(net(tok)?), rest)),
        [] => Err("missing endpoint".to_owned()),
    }
}

pub fn parse_acl_rule(toks: &[&str]) -> Result<AclRule, String> {
    let [action, proto, rest @ ..] = toks else {
        return Err("acl entry needs action and protocol".to_owned());
    };
    let action = action.parse()?;
    let protocol = Protocol::parse(proto)?;
    let (src, rest) = endpoint(rest)?;
    let (dst, rest) = endpoint(rest)?;
    let (ports, rest) = match rest {
        ["eq", p, rest @ ..] => {
            let p: u16 = number(Some(p), "port")?;
            (Some(PortRange { lo: p, hi: p }), rest)
        }
        ["range", lo, hi, rest @ ..] => {
            let lo: u16 = number(Some(lo), "port")?;
            let hi: u16 = number(Some(hi), "port")?;
            if lo > hi {
                return Err(format!("empty port range {lo}..{hi}"));
            }
            (Some(PortRange { lo, hi }), rest)
        }
        other => (None, other),
    };
    if ports.is_some() && !matches!(protocol, Protocol::Tcp | Protocol::Udp) {
        return Err("ports need tcp or udp".to_owned());
    }
    no_trailing(rest)?;
    Ok(AclRule { action, protocol, src, dst, ports })
}

pub fn parse_route_filter_rule(toks: &[&str]) -> Result<RouteFilterRule, String> {
    let [action, prefix, rest @ ..] = toks else {
        return Err("route-filter entry needs action and prefix".to_owned());
    };
    let action = action.parse()?;
    let prefix = net(prefix)?;
    let mut ge = None;
    let mut le = None;
    let mut rest = rest;
    loop {
        match rest {
            ["ge", n, tail @ ..] if ge.is_none() && le.is_none() => {
                ge = Some(number::<u8>(Some(n), "ge length")?);
                rest = tail;
            }
            ["le", n, tail @ ..] if le.is_none() => {
                le = Some(number::<u8>(Some(n), "le length")?);
                rest = tail;
            }
            _ => break,
        }
    }
    no_trailing(rest)?;
    let len = prefix.prefix_len();
    let lo = ge.unwrap_or(len);
    let hi = le.unwrap_or(32);
    if lo < len || hi > 32 || lo > hi {
        return Err(format!("invalid length window ge {lo} le {hi} for /{len}"));
    }
    Ok(RouteFilterRule { action, prefix, ge, le })
}

fn free_text(rest: &[&str]) -> Result<String, String> {
    if rest.is_empty() {
        Err("missing description text".to_owned())
    } else {
        Ok(rest.join(" "))
    }
}

pub fn parse_policy_clause(toks: &[&str]) -> Result<PolicyClause, String> {
    let clause = match toks {
        ["match", "acl", rest @ ..] => PolicyClause::MatchAcl(ident(rest.first(), "acl name")?),
        ["match", "route-filter", rest @ ..] => PolicyClause::MatchRouteFilter(ident(rest.first(), "route-filter name")?),
        ["match", "community", rest @ ..] => PolicyClause::MatchCommunity(route_target(rest.first(), "community")?),
        ["set", "local-preference", rest @ ..] => PolicyClause::SetLocalPreference(number(rest.first(), "local-preference")?),
        ["set", "med", rest @ ..] => PolicyClause::SetMed(number(rest.first(), "med")?),
        ["set", "community", rest @ ..] => PolicyClause::SetCommunity(route_target(rest.first(), "community")?),
        ["set", "as-path-prepend", rest @ ..] => PolicyClause::SetAsPathPrepend(number(rest.first(), "prepend count")?),
        ["action", rest @ ..] => {
            let a = rest.first().ok_or("missing action")?;
            PolicyClause::Action(a.parse()?)
        }
        ["description", rest @ ..] => return Ok(PolicyClause::Description(free_text(rest)?)),
        _ => return Err(format!("unknown routing-policy clause `{}`", toks.join(" "))),
    };
    let consumed = if matches!(toks.first(), Some(&"action")) { 2 } else { 3 };
    no_trailing(&toks[consumed.min(toks.len())..])?;
    Ok(clause)
}

pub fn parse_vrf_setting(toks: &[&str]) -> Result<VrfSetting, String> {
    let setting = match toks {
        ["rd", rest @ ..] => VrfSetting::Rd(route_target(rest.first(), "route distinguisher")?),
        ["import-target", rest @ ..] => VrfSetting::ImportTarget(route_target(rest.first(), "route target")?),
        ["export-target", rest @ ..] => VrfSetting::ExportTarget(route_target(rest.first(), "route target")?),
        ["import-policy", rest @ ..] => VrfSetting::ImportPolicy(ident(rest.first(), "policy name")?),
        ["export-policy", rest @ ..] => VrfSetting::ExportPolicy(ident(rest.first(), "policy name")?),
        ["max-routes", rest @ ..] => VrfSetting::MaxRoutes(number(rest.first(), "route limit")?),
        ["description", rest @ ..] => return Ok(VrfSetting::Description(free_text(rest)?)),
        _ => return Err(format!("unknown vrf setting `{}`", toks.join(" "))),
    };
    no_trailing(&toks[2.min(toks.len())..])?;
    Ok(setting)
}

pub fn parse_interface_setting(toks: &[&str]) -> Result<InterfaceSetting, String> {
    let setting = match toks {
        ["vrf", rest @ ..] => InterfaceSetting::Vrf(ident(rest.first(), "vrf name")?),
        ["acl-in", rest @ ..] => InterfaceSetting::AclIn(ident(rest.first(), "acl name")?),
        ["acl-out", rest @ ..] => InterfaceSetting::AclOut(ident(rest.first(), "acl name")?),
        ["address", rest @ ..] => {
            let tok = rest.first().ok_or("missing address")?;
            let addr: Ipv4Net = tok.parse().map_err(|_| format!("invalid address `{tok}`"))?;
            InterfaceSetting::Address(addr)
        }
        ["shutdown"] => return Ok(InterfaceSetting::Shutdown),
        ["description", rest @ ..] => return Ok(InterfaceSetting::Description(free_text(rest)?)),
        _ => return Err(format!("unknown interface setting `{}`", toks.join(" "))),
    };
    no_trailing(&toks[2.min(toks.len())..])?;
    Ok(setting)
}

pub fn parse_neighbor_setting(toks: &[&str]) -> Result<NeighborSetting, String> {
    let setting = match toks {
        ["remote-as", rest @ ..] => NeighborSetting::RemoteAs(number(rest.first(), "AS number")?),
        ["import-policy", rest @ ..] => NeighborSetting::ImportPolicy(ident(rest.first(), "policy name")?),
        ["export-policy", rest @ ..] => NeighborSetting::ExportPolicy(ident(rest.first(), "policy name")?),
        ["vrf", rest @ ..] => NeighborSetting::Vrf(ident(rest.first(), "vrf name")?),
        ["update-source", rest @ ..] => NeighborSetting::UpdateSource(ident(rest.first(), "interface name")?),
        ["description", rest @ ..] => return Ok(NeighborSetting::Description(free_text(rest)?)),
        _ => return Err(format!("unknown bgp-neighbor setting `{}`", toks.join(" "))),
    };
    no_trailing(&toks[2.min(toks.len())..])?;
    Ok(setting)
}
