use std::collections::BTreeSet;
use std::net::IpAddr;

use serde::{Deserialize, Serialize};

use super::HarnessError;
use crate::context::FlowEvent;
use crate::fbac::Function;
use crate::netsim::CompromisedBehavior;
use crate::types::{DeviceId, Label, Medium, Millis, ObjectId, Role, UserId};

/// Number of shipped organization maps.
pub const MAP_COUNT: u8 = 7;

/// Insider scenario categories.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Category {
    /// Threat indicators on the requester's own device.
    OwnDevice,
    /// Threat indicators on a device near the requester.
    Proximity,
    /// A compromised forwarding device on the requester's path.
    CompromisedPath,
    /// Two or more of the above.
    Combined,
}

impl Category {
    pub const ALL: [Category; 4] =
        [Category::OwnDevice, Category::Proximity, Category::CompromisedPath, Category::Combined];

    pub fn number(self) -> u8 {
        self as u8 + 1
    }
}

/// What an injected flow is meant to exercise.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Injection {
    /// Requester's own device, inside the recent window of the attack.
    Own,
    /// Requester's own device, long before the attack.
    Historic,
    /// A device in the requester's zone.
    Proximity,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct UserSpec {
    pub user: UserId,
    pub role: Role,
    pub ip: IpAddr,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProviderSpec {
    pub ip: IpAddr,
    pub fd_id: DeviceId,
    pub port_id: u32,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "op", rename_all = "snake_case", deny_unknown_fields)]
pub enum Step {
    Attach {
        time: Millis,
        user: UserId,
        fd_id: DeviceId,
        port_id: u32,
        medium: Medium,
    },
    Flow {
        event: FlowEvent,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        injection: Option<Injection>,
    },
    Fault {
        time: Millis,
        fd_id: DeviceId,
        behavior: Option<CompromisedBehavior>,
    },
    Request {
        time: Millis,
        request_id: String,
        user: UserId,
        object: ObjectId,
    },
    /// The user stops using the object obtained by `request_id`.
    Close {
        time: Millis,
        request_id: String,
    },
    RouteCheck {
        time: Millis,
        user: UserId,
    },
}

impl Step {
    pub fn time(&self) -> Millis {
        match self {
            Step::Attach { time, .. }
            | Step::Fault { time, .. }
            | Step::Request { time, .. }
            | Step::Close { time, .. }
            | Step::RouteCheck { time, .. } => *time,
            Step::Flow { event, .. } => event.time,
        }
    }
}

/// The insider's scripted exfiltration attempt.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AttackGoal {
    pub request_id: String,
    pub function: Function,
    pub label: Label,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Expectation {
    /// The attack should be stopped.
    Protected,
    /// The context holds no threat for the requester.
    Unaffected,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioSpec {
    pub id: u32,
    pub category: Category,
    pub map: u8,
    pub provider: ProviderSpec,
    pub requester: UserId,
    pub users: Vec<UserSpec>,
    /// Script, in time order.
    pub steps: Vec<Step>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub attack: Option<AttackGoal>,
    pub horizon: Millis,
    pub expected: Expectation,
}

impl ScenarioSpec {
    pub fn user(&self, id: &UserId) -> Option<&UserSpec> {
        self.users.iter().find(|u| &u.user == id)
    }

    pub fn requests(&self) -> impl Iterator<Item = (&String, &UserId, &ObjectId, Millis)> {
        self.steps.iter().filter_map(|s| match s {
            Step::Request { time, request_id, user, object } => Some((request_id, user, object, *time)),
            _ => None,
        })
    }

    pub fn validate(&self) -> Result<(), HarnessError> {
        let bad = |reason: String| HarnessError::InvalidScenario { id: self.id, reason };
        if !(1..=MAP_COUNT).contains(&self.map) {
            return Err(bad(format!("map {} out of range", self.map)));
        }
        let mut users = BTreeSet::new();
        let mut ips = BTreeSet::from([self.provider.ip]);
        for u in &self.users {
            if !users.insert(&u.user) {
                return Err(bad(format!("duplicate user `{}`", u.user)));
            }
            if !ips.insert(u.ip) {
                return Err(bad(format!("duplicate address {}", u.ip)));
            }
        }
        if !users.contains(&self.requester) {
            return Err(bad(format!("requester `{}` is not declared", self.requester)));
        }

        let mut last = 0;
        let mut request_ids = BTreeSet::new();
        let (mut own, mut near, mut path) = (false, false, false);
        for step in &self.steps {
            let time = step.time();
            if time < last {
                return Err(bad(format!("step at {time} follows step at {last}")));
            }
            if time > self.horizon {
                return Err(bad(format!("step at {time} is past the horizon {}", self.horizon)));
            }
            last = time;
            let user = match step {
                Step::Attach { user, .. } | Step::Request { user, .. } | Step::RouteCheck { user, .. } => Some(user),
                Step::Flow { event, .. } => Some(&event.user_id),
                Step::Fault { .. } | Step::Close { .. } => None,
            };
            if let Some(user) = user.filter(|u| !users.contains(u)) {
                return Err(bad(format!("step at {time} names unknown user `{user}`")));
            }
            match step {
                Step::Request { request_id, .. } if !request_ids.insert(request_id) => {
                    return Err(bad(format!("duplicate request id `{request_id}`")));
                }
                Step::Flow { event, injection } => {
                    event.validate().map_err(bad)?;
                    own |= *injection == Some(Injection::Own);
                    near |= *injection == Some(Injection::Proximity);
                }
                Step::Close { request_id, .. } if !request_ids.contains(request_id) => {
                    return Err(bad(format!("close of unknown request `{request_id}`")));
                }
                Step::Fault { behavior: Some(_), .. } => path = true,
                _ => {}
            }
        }
        if let Some(attack) = &self.attack {
            if !request_ids.contains(&attack.request_id) {
                return Err(bad(format!("attack request `{}` is not scripted", attack.request_id)));
            }
        }

        if self.expected == Expectation::Protected {
            let ok = match self.category {
                Category::OwnDevice => own,
                Category::Proximity => near,
                Category::CompromisedPath => path,
                Category::Combined => [own, near, path].iter().filter(|b| **b).count() >= 2,
            };
            if !ok {
                return Err(bad(format!("injections do not match category {}", self.category.number())));
            }
        }
        Ok(())
    }
}
