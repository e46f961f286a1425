use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const NUM_CLASSES: usize = 43;

/// GTSRB class names, indexed by class id.
pub const CLASS_NAMES: [&str; NUM_CLASSES] = [
    "Speed limit (20km/h)",
    "Speed limit (30km/h)",
    "Speed limit (50km/h)",
    "Speed limit (60km/h)",
    "Speed limit (70km/h)",
    "Speed limit (80km/h)",
    "End of speed limit (80km/h)",
    "Speed limit (100km/h)",
    "Speed limit (120km/h)",
    "No passing",
    "No passing for vehicles over 3.5 metric tons",
    "Right-of-way at the next intersection",
    "Priority road",
    "Yield",
    "Stop",
    "No vehicles",
    "Vehicles over 3.5 metric tons prohibited",
    "No entry",
    "General caution",
    "Dangerous curve to the left",
    "Dangerous curve to the right",
    "Double curve",
    "Bumpy road",
    "Slippery road",
    "Road narrows on the right",
    "Road work",
    "Traffic signals",
    "Pedestrians",
    "Children crossing",
    "Bicycles crossing",
    "Beware of ice/snow",
    "Wild animals crossing",
    "End of all speed and passing limits",
    "Turn right ahead",
    "Turn left ahead",
    "Ahead only",
    "Go straight or right",
    "Go straight or left",
    "Keep right",
    "Keep left",
    "Roundabout mandatory",
    "End of no passing",
    "End of no passing by vehicles over 3.5 metric tons",
];

/// The four GTSDB benchmark categories.
///
/// Membership follows the German Traffic Sign Detection Benchmark
/// (Houben et al., IJCNN 2013): prohibitory signs are round with a red
/// border, mandatory signs round and blue, danger signs triangular.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum BroadCategory {
    Prohibitory,
    Mandatory,
    Danger,
    Other,
}

impl BroadCategory {
    pub const ALL: [BroadCategory; 4] = [
        BroadCategory::Prohibitory,
        BroadCategory::Mandatory,
        BroadCategory::Danger,
        BroadCategory::Other,
    ];

    /// Class id used when annotations are written in the broad label space.
    pub fn index(self) -> u32 {
        self as u32
    }

    pub fn from_index(i: u32) -> Option<Self> {
        Self::ALL.get(i as usize).copied()
    }

    pub fn name(self) -> &'static str {
        match self {
            BroadCategory::Prohibitory => "Prohibitory",
            BroadCategory::Mandatory => "Mandatory",
            BroadCategory::Danger => "Danger",
            BroadCategory::Other => "Other",
        }
    }
}

impl fmt::Display for BroadCategory {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

pub fn group_class(class_id: i64) -> Result<BroadCategory> {
    use BroadCategory::*;
    Ok(match class_id {
        0..=5 | 7..=10 | 15 | 16 => Prohibitory,
        11 | 18..=31 => Danger,
        33..=40 => Mandatory,
        6 | 12..=14 | 17 | 32 | 41 | 42 => Other,
        _ => return Err(Error::ClassOutOfRange(class_id)),
    })
}

pub fn class_name(class_id: u32) -> Option<&'static str> {
    CLASS_NAMES.get(class_id as usize).copied()
}

/// Which class ids annotation files carry.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum LabelSpace {
    /// The 43 GTSRB classes.
    #[default]
    Fine,
    /// The four broad categories, ids in [`BroadCategory::ALL`] order.
    Broad,
}

impl LabelSpace {
    pub fn map(self, class_id: u32) -> Result<u32> {
        match self {
            LabelSpace::Fine => {
                group_class(class_id as i64)?;
                Ok(class_id)
            }
            LabelSpace::Broad => Ok(group_class(class_id as i64)?.index()),
        }
    }

    pub fn names(self) -> Vec<&'static str> {
        match self {
            LabelSpace::Fine => CLASS_NAMES.to_vec(),
            LabelSpace::Broad => BroadCategory::ALL.iter().map(|c| c.name()).collect(),
        }
    }

    pub fn name(self, id: u32) -> String {
        self.names()
            .get(id as usize)
            .map_or_else(|| id.to_string(), |s| s.to_string())
    }

    /// `classes.names` contents, one name per line.
    pub fn names_file(self) -> String {
        let mut s = self.names().join("\n");
        s.push('\n');
        s
    }
}
