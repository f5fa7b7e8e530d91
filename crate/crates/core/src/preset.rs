use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::Error;

/// The four sample types the system is exercised on. Each name doubles as the
/// key for the matching scene, height-sensor profile, optical fingerprint and
/// controller tuning.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SamplePreset {
    LiverPhantom,
    StomachPhantom,
    RumpSteak,
    LambLiver,
}

impl SamplePreset {
    pub const ALL: [SamplePreset; 4] = [
        SamplePreset::LiverPhantom,
        SamplePreset::StomachPhantom,
        SamplePreset::RumpSteak,
        SamplePreset::LambLiver,
    ];

    pub fn name(self) -> &'static str {
        match self {
            SamplePreset::LiverPhantom => "liver_phantom",
            SamplePreset::StomachPhantom => "stomach_phantom",
            SamplePreset::RumpSteak => "rump_steak",
            SamplePreset::LambLiver => "lamb_liver",
        }
    }

    /// Silicone phantoms have a single homogeneous material.
    pub fn is_phantom(self) -> bool {
        matches!(self, SamplePreset::LiverPhantom | SamplePreset::StomachPhantom)
    }

    /// Number of automatic scans performed on this sample in the reference protocol.
    pub fn protocol_repeats(self) -> usize {
        match self {
            SamplePreset::LiverPhantom => 12,
            SamplePreset::StomachPhantom => 10,
            SamplePreset::RumpSteak => 15,
            SamplePreset::LambLiver => 25,
        }
    }
}

impl fmt::Display for SamplePreset {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for SamplePreset {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        SamplePreset::ALL
            .into_iter()
            .find(|p| p.name() == s)
            .ok_or_else(|| Error::UnknownMaterial(s.to_string()))
    }
}
