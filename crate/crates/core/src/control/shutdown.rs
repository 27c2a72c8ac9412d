//! Global emergency stop.

use std::sync::atomic::{AtomicBool, Ordering};

use chrono::{DateTime, Utc};
use parking_lot::Mutex;
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ShutdownState {
    pub active: bool,
    pub reason: Option<String>,
    pub author: Option<String>,
    pub since: Option<DateTime<Utc>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ShutdownAck {
    pub active: bool,
    /// The switch was already in the requested position.
    pub unchanged: bool,
    pub state: ShutdownState,
}

/// The flag is read lock-free by executors; the metadata sits behind a mutex
/// that also serializes writers.
#[derive(Debug)]
pub struct ShutdownSwitch {
    flag: AtomicBool,
    meta: Mutex<ShutdownState>,
}

impl Default for ShutdownSwitch {
    fn default() -> Self {
        ShutdownSwitch {
            flag: AtomicBool::new(false),
            meta: Mutex::new(ShutdownState {
                active: false,
                reason: None,
                author: None,
                since: None,
            }),
        }
    }
}

impl ShutdownSwitch {
    pub fn is_active(&self) -> bool {
        self.flag.load(Ordering::SeqCst)
    }

    pub fn state(&self) -> ShutdownState {
        self.meta.lock().clone()
    }

    pub fn reason(&self) -> Option<String> {
        self.meta.lock().reason.clone()
    }

    /// Idempotent: a second trigger keeps the original reason.
    pub fn trigger(&self, reason: &str, author: &str) -> ShutdownAck {
        let mut meta = self.meta.lock();
        if meta.active {
            return ShutdownAck {
                active: true,
                unchanged: true,
                state: meta.clone(),
            };
        }
        *meta = ShutdownState {
            active: true,
            reason: Some(reason.to_string()),
            author: Some(author.to_string()),
            since: Some(Utc::now()),
        };
        self.flag.store(true, Ordering::SeqCst);
        ShutdownAck {
            active: true,
            unchanged: false,
            state: meta.clone(),
        }
    }

    pub fn clear(&self, author: &str) -> ShutdownAck {
        let mut meta = self.meta.lock();
        if !meta.active {
            return ShutdownAck {
                active: false,
                unchanged: true,
                state: meta.clone(),
            };
        }
        self.flag.store(false, Ordering::SeqCst);
        *meta = ShutdownState {
            active: false,
            reason: None,
            author: Some(author.to_string()),
            since: Some(Utc::now()),
        };
        ShutdownAck {
            active: false,
            unchanged: false,
            state: meta.clone(),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn trigger_and_clear_are_idempotent() {
        let s = ShutdownSwitch::default();
        assert!(!s.is_active());
        let first = s.trigger("smoke", "ops");
        assert!(first.active && !first.unchanged);
        let second = s.trigger("again", "ops");
        assert!(second.unchanged);
        assert_eq!(second.state.reason.as_deref(), Some("smoke"));
        assert!(s.is_active());
        assert!(!s.clear("ops").unchanged);
        assert!(s.clear("ops").unchanged);
        assert!(!s.is_active());
    }
}
