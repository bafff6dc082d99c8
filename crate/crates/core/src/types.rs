//! Identifier newtypes shared by every module.

use std::fmt;

use serde::{Deserialize, Serialize};

/// Simulated time in milliseconds.
pub type Millis = u64;

macro_rules! string_id {
    ($(#[$meta:meta])* $name:ident) => {
        $(#[$meta])*
        #[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
        #[serde(transparent)]
        pub struct $name(pub String);

        impl $name {
            pub fn new(id: impl Into<String>) -> Self {
                Self(id.into())
            }

            pub fn as_str(&self) -> &str {
                &self.0
            }
        }

        impl fmt::Display for $name {
            fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
                f.write_str(&self.0)
            }
        }

        impl From<&str> for $name {
            fn from(id: &str) -> Self {
                Self(id.to_owned())
            }
        }

        impl From<String> for $name {
            fn from(id: String) -> Self {
                Self(id)
            }
        }
    };
}

string_id!(
    /// Forwarding device identifier (`R1`, `P2`, `C3`, ...).
    DeviceId
);
string_id!(UserId);
string_id!(
    /// Physical zone served by one or more forwarding devices.
    ZoneId
);
string_id!(ObjectId);
string_id!(SegmentId);
string_id!(
    /// Sensitivity label attached to object segments (`top-secret`, ...).
    Label
);
string_id!(Role);
string_id!(RuleId);
string_id!(FlowId);

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Medium {
    Wired,
    Wireless,
}

impl fmt::Display for Medium {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Medium::Wired => f.write_str("wired"),
            Medium::Wireless => f.write_str("wireless"),
        }
    }
}
