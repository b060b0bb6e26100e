use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

#[derive(Copy, Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum DomainKind {
    Process,
    Kernel,
    VmGuest,
    Hypervisor,
    Enclave,
}

impl DomainKind {
    pub fn as_str(self) -> &'static str {
        match self {
            DomainKind::Process => "process",
            DomainKind::Kernel => "kernel",
            DomainKind::VmGuest => "vm-guest",
            DomainKind::Hypervisor => "hypervisor",
            DomainKind::Enclave => "enclave",
        }
    }
}

impl FromStr for DomainKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "process" => Ok(DomainKind::Process),
            "kernel" => Ok(DomainKind::Kernel),
            "vm-guest" => Ok(DomainKind::VmGuest),
            "hypervisor" => Ok(DomainKind::Hypervisor),
            "enclave" => Ok(DomainKind::Enclave),
            other => Err(format!("unknown domain kind `{other}`")),
        }
    }
}

/// A security-domain label. Address spaces are identity mapped; the label
/// on a page decides which contexts may touch it.
#[derive(Copy, Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct Domain {
    pub kind: DomainKind,
    pub id: u32,
}

impl Domain {
    pub const fn new(kind: DomainKind, id: u32) -> Self {
        Self { kind, id }
    }

    pub const fn process(id: u32) -> Self {
        Self::new(DomainKind::Process, id)
    }
}

impl fmt::Display for Domain {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}:{}", self.kind.as_str(), self.id)
    }
}
