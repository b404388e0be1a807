//! The six force and moment channels.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Target {
    Fx,
    Fy,
    Fz,
    Mx,
    My,
    Mz,
}

impl Target {
    pub const ALL: [Target; 6] = [Target::Fx, Target::Fy, Target::Fz, Target::Mx, Target::My, Target::Mz];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn name(self) -> &'static str {
        match self {
            Target::Fx => "Fx",
            Target::Fy => "Fy",
            Target::Fz => "Fz",
            Target::Mx => "Mx",
            Target::My => "My",
            Target::Mz => "Mz",
        }
    }

    pub fn is_force(self) -> bool {
        matches!(self, Target::Fx | Target::Fy | Target::Fz)
    }

    pub fn parse(s: &str) -> Result<Target> {
        Target::ALL
            .into_iter()
            .find(|t| t.name().eq_ignore_ascii_case(s))
            .ok_or_else(|| Error::InvalidInput(format!("unknown target '{s}'")))
    }
}

impl std::fmt::Display for Target {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}
