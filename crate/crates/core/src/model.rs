//! The common face every engine shows to the replay harness.

use crate::error::Result;
use crate::store::OpCounter;

/// Outcome of one access as seen by the harness.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Access {
    pub hit: bool,
    /// Key of the element that left the cache, if any.
    pub evicted: Option<u64>,
    /// Operations charged to this packet. Reference engines report zeros.
    pub ops: OpCounter,
}

pub trait CacheModel: Send {
    fn access(&mut self, key: u64) -> Result<Access>;

    /// Every key currently cached, in no particular order.
    fn live_keys(&self) -> Vec<u64>;
}

impl<M: CacheModel + ?Sized> CacheModel for Box<M> {
    fn access(&mut self, key: u64) -> Result<Access> {
        (**self).access(key)
    }

    fn live_keys(&self) -> Vec<u64> {
        (**self).live_keys()
    }
}
