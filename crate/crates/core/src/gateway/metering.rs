use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::AgentRole;
use crate::domain::TokenUsage;

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct RoleUsage {
    pub calls: u64,
    pub prompt_tokens: u64,
    pub completion_tokens: u64,
}

impl std::ops::AddAssign for RoleUsage {
    fn add_assign(&mut self, rhs: Self) {
        self.calls += rhs.calls;
        self.prompt_tokens += rhs.prompt_tokens;
        self.completion_tokens += rhs.completion_tokens;
    }
}

/// Per-role usage totals. Every role is present, zero when unused.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct UsageReport {
    pub roles: BTreeMap<AgentRole, RoleUsage>,
}

impl Default for UsageReport {
    fn default() -> Self {
        Self {
            roles: AgentRole::ALL.iter().map(|r| (*r, RoleUsage::default())).collect(),
        }
    }
}

impl UsageReport {
    pub fn get(&self, role: AgentRole) -> RoleUsage {
        self.roles.get(&role).copied().unwrap_or_default()
    }

    pub fn total(&self) -> RoleUsage {
        let mut t = RoleUsage::default();
        for u in self.roles.values() {
            t += *u;
        }
        t
    }

    pub fn add(&mut self, role: AgentRole, usage: TokenUsage) {
        *self.roles.entry(role).or_default() += RoleUsage {
            calls: 1,
            prompt_tokens: usage.prompt_tokens,
            completion_tokens: usage.completion_tokens,
        };
    }

    pub fn merge(&mut self, other: &UsageReport) {
        for (role, u) in &other.roles {
            *self.roles.entry(*role).or_default() += *u;
        }
    }
}

#[derive(Debug, Default)]
pub(super) struct Meter {
    report: UsageReport,
}

impl Meter {
    pub(super) fn record(&mut self, role: AgentRole, usage: TokenUsage) {
        self.report.add(role, usage);
    }

    pub(super) fn snapshot(&self) -> UsageReport {
        self.report.clone()
    }
}
