//! Hand-coded signal policies used as reference points.

use std::fmt;
use std::str::FromStr;

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::traffic::Action;

/// `fixed:<k>` switches after `k` steps in a phase (`fixed:inf` never
/// switches), `random:<p>` switches with probability `p`, `always`
/// switches every step.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub enum BaselinePolicy {
    FixedCycle(Option<u32>),
    Random(f64),
    AlwaysSwitch,
}

impl BaselinePolicy {
    pub(crate) fn check(&self) -> std::result::Result<(), String> {
        match *self {
            BaselinePolicy::FixedCycle(Some(0)) => Err("fixed cycle length must be at least 1".into()),
            BaselinePolicy::Random(p) if !(0.0..=1.0).contains(&p) => {
                Err(format!("switch probability must lie in [0, 1], got {p}"))
            }
            _ => Ok(()),
        }
    }

    /// File-system friendly label.
    pub fn slug(&self) -> String {
        self.to_string().replace(':', "-")
    }

    pub fn controller(&self, agents: usize) -> BaselineController {
        BaselineController {
            policy: *self,
            dwell: vec![0; agents],
        }
    }
}

impl fmt::Display for BaselinePolicy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            BaselinePolicy::FixedCycle(Some(k)) => write!(f, "fixed:{k}"),
            BaselinePolicy::FixedCycle(None) => write!(f, "fixed:inf"),
            BaselinePolicy::Random(p) => write!(f, "random:{p}"),
            BaselinePolicy::AlwaysSwitch => write!(f, "always"),
        }
    }
}

impl FromStr for BaselinePolicy {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let bad = |reason: String| Error::InvalidConfig {
            key: "policy".into(),
            reason,
        };
        let (kind, arg) = s.split_once(':').unwrap_or((s, ""));
        let policy = match kind.trim() {
            "always" if arg.is_empty() => BaselinePolicy::AlwaysSwitch,
            "fixed" if arg == "inf" => BaselinePolicy::FixedCycle(None),
            "fixed" => BaselinePolicy::FixedCycle(Some(
                arg.parse().map_err(|_| bad(format!("bad cycle length {arg:?} in {s:?}")))?,
            )),
            "random" => {
                BaselinePolicy::Random(arg.parse().map_err(|_| bad(format!("bad probability {arg:?} in {s:?}")))?)
            }
            _ => {
                return Err(bad(format!(
                    "unknown policy {s:?}; expected fixed:<k>, fixed:inf, random:<p> or always"
                )))
            }
        };
        policy.check().map_err(bad)?;
        Ok(policy)
    }
}

impl TryFrom<String> for BaselinePolicy {
    type Error = Error;

    fn try_from(s: String) -> Result<Self> {
        s.parse()
    }
}

impl From<BaselinePolicy> for String {
    fn from(p: BaselinePolicy) -> String {
        p.to_string()
    }
}

/// Per-episode controller state for a baseline policy.
#[derive(Debug, Clone)]
pub struct BaselineController {
    policy: BaselinePolicy,
    dwell: Vec<u32>,
}

impl BaselineController {
    pub fn reset(&mut self) {
        self.dwell.iter_mut().for_each(|d| *d = 0);
    }

    pub fn act(&mut self, rng: &mut ChaCha8Rng) -> Vec<Action> {
        let policy = self.policy;
        self.dwell
            .iter_mut()
            .map(|d| {
                *d += 1;
                let switch = match policy {
                    BaselinePolicy::AlwaysSwitch => true,
                    BaselinePolicy::FixedCycle(None) => false,
                    BaselinePolicy::FixedCycle(Some(k)) => *d >= k,
                    BaselinePolicy::Random(p) => rng.random_bool(p),
                };
                if switch {
                    *d = 0;
                }
                Action::from(switch)
            })
            .collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ddpg::stream_rng;

    #[test]
    fn parse_and_display_round_trip() {
        for s in ["fixed:3", "fixed:inf", "random:0.5", "always"] {
            let p: BaselinePolicy = s.parse().unwrap();
            assert_eq!(p.to_string(), s);
        }
        for s in ["fixed:0", "fixed:x", "random:2", "sometimes", "always:1"] {
            assert!(s.parse::<BaselinePolicy>().is_err(), "{s}");
        }
    }

    #[test]
    fn fixed_cycle_switches_every_k() {
        let mut c = BaselinePolicy::FixedCycle(Some(3)).controller(1);
        let mut rng = stream_rng(0, 0);
        let bits: Vec<u8> = (0..7).map(|_| c.act(&mut rng)[0].bit()).collect();
        assert_eq!(bits, vec![0, 0, 1, 0, 0, 1, 0]);
    }

    #[test]
    fn random_extremes() {
        let mut rng = stream_rng(0, 0);
        let mut never = BaselinePolicy::Random(0.0).controller(2);
        let mut always = BaselinePolicy::Random(1.0).controller(2);
        for _ in 0..20 {
            assert!(never.act(&mut rng).iter().all(|&a| a == Action::Continue));
            assert!(always.act(&mut rng).iter().all(|&a| a == Action::Switch));
        }
    }
}
