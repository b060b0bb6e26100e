use thiserror::Error;

use super::Domain;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum SimError {
    #[error("address {0:#x} is not mapped")]
    Unmapped(u64),
    #[error("thread {thread} ({domain}) may not access {addr:#x} owned by {owner}")]
    DomainViolation {
        thread: usize,
        domain: Domain,
        owner: Domain,
        addr: u64,
    },
    #[error("access of {len} bytes at {addr:#x} crosses a cache line")]
    CrossesLine { addr: u64, len: usize },
    #[error("page {0:#x} is already mapped")]
    AlreadyMapped(u64),
    #[error("no such logical thread {0}")]
    BadThread(usize),
    #[error("nested xbegin on thread {0}")]
    NestedTransaction(usize),
    #[error("xend without an open transaction on thread {0}")]
    NoTransaction(usize),
    #[error("transaction on thread {0} aborted")]
    Aborted(usize),
    #[error("transactional execution is disabled")]
    TsxDisabled,
    #[error("invalid noise configuration: {0}")]
    InvalidNoise(String),
}
