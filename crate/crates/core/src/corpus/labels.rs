use core::fmt;
use core::str::FromStr;

use serde::{Deserialize, Serialize};

use super::CycleAnnotation;
use crate::error::Error;

/// Adventitious-sound class of a cycle or recording.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum SoundLabel {
    Crackles = 0,
    Wheezes = 1,
    Both = 2,
    Healthy = 3,
}

impl SoundLabel {
    pub const COUNT: usize = 4;
    pub const ALL: [SoundLabel; 4] =
        [SoundLabel::Crackles, SoundLabel::Wheezes, SoundLabel::Both, SoundLabel::Healthy];

    pub fn from_flags(crackle: bool, wheeze: bool) -> Self {
        match (crackle, wheeze) {
            (true, false) => SoundLabel::Crackles,
            (false, true) => SoundLabel::Wheezes,
            (true, true) => SoundLabel::Both,
            (false, false) => SoundLabel::Healthy,
        }
    }

    pub fn flags(self) -> (bool, bool) {
        match self {
            SoundLabel::Crackles => (true, false),
            SoundLabel::Wheezes => (false, true),
            SoundLabel::Both => (true, true),
            SoundLabel::Healthy => (false, false),
        }
    }

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn from_index(i: usize) -> Option<Self> {
        Self::ALL.get(i).copied()
    }

    pub fn name(self) -> &'static str {
        match self {
            SoundLabel::Crackles => "Crackles",
            SoundLabel::Wheezes => "Wheezes",
            SoundLabel::Both => "Both",
            SoundLabel::Healthy => "Healthy",
        }
    }
}

impl fmt::Display for SoundLabel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// Diagnosis classes kept by the disease head.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum DiseaseLabel {
    Bronchiectasis = 0,
    Bronchiolitis = 1,
    Copd = 2,
    Pneumonia = 3,
    Urti = 4,
    Healthy = 5,
}

impl DiseaseLabel {
    pub const COUNT: usize = 6;
    pub const ALL: [DiseaseLabel; 6] = [
        DiseaseLabel::Bronchiectasis,
        DiseaseLabel::Bronchiolitis,
        DiseaseLabel::Copd,
        DiseaseLabel::Pneumonia,
        DiseaseLabel::Urti,
        DiseaseLabel::Healthy,
    ];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn from_index(i: usize) -> Option<Self> {
        Self::ALL.get(i).copied()
    }

    pub fn name(self) -> &'static str {
        match self {
            DiseaseLabel::Bronchiectasis => "Bronchiectasis",
            DiseaseLabel::Bronchiolitis => "Bronchiolitis",
            DiseaseLabel::Copd => "COPD",
            DiseaseLabel::Pneumonia => "Pneumonia",
            DiseaseLabel::Urti => "URTI",
            DiseaseLabel::Healthy => "Healthy",
        }
    }
}

impl FromStr for DiseaseLabel {
    type Err = Error;

    /// Case-insensitive; surrounding whitespace ignored.
    fn from_str(s: &str) -> Result<Self, Error> {
        let t = s.trim();
        DiseaseLabel::ALL
            .iter()
            .copied()
            .find(|d| d.name().eq_ignore_ascii_case(t))
            .ok_or_else(|| Error::UnknownDiagnosis(t.into()))
    }
}

impl fmt::Display for DiseaseLabel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// Collapses per-cycle flags to one recording label with priority
/// Both > Crackles > Wheezes > Healthy.
pub fn recording_sound_label(cycles: &[CycleAnnotation]) -> SoundLabel {
    let mut crackle = false;
    let mut wheeze = false;
    for c in cycles {
        if c.crackle && c.wheeze {
            return SoundLabel::Both;
        }
        crackle |= c.crackle;
        wheeze |= c.wheeze;
    }
    if crackle {
        SoundLabel::Crackles
    } else if wheeze {
        SoundLabel::Wheezes
    } else {
        SoundLabel::Healthy
    }
}
