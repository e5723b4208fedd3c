//! Anatomical landmark registry and the two 29-landmark experiment sets.
//!
//! Every landmark is annotated twice: on the bone (craniometric) and at the
//! corresponding point of the soft tissue (cephalometric). The registry holds
//! the names used by the experiment sets; ids are stable indices into it.

use std::collections::HashMap;
use std::fmt;
use std::sync::LazyLock;

use serde::{Deserialize, Serialize};

use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct LandmarkId(pub u16);

impl LandmarkId {
    pub fn index(self) -> usize {
        self.0 as usize
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Laterality {
    Midline,
    Left,
    Right,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LandmarkDef {
    pub id: LandmarkId,
    pub name: String,
    pub laterality: Laterality,
}

impl LandmarkDef {
    /// Name without the `Left `/`Right ` prefix.
    pub fn base_name(&self) -> &str {
        self.name.strip_prefix("Left ").or_else(|| self.name.strip_prefix("Right ")).unwrap_or(&self.name)
    }
}

/// Landmarks of the E1-E3 experiments (upper and mid face).
pub const SET_A: [&str; 29] = [
    "Glabella",
    "Left Dacryon",
    "Left Ectoconchion",
    "Left Frontomalare Orbitale",
    "Left Frontotemporale",
    "Left Mid-supraorbital",
    "Left Nasomaxillare",
    "Left Orbitale",
    "Left Superciliare",
    "Left Supraorbital Ridge",
    "Left Zygion",
    "Left Zygomatic",
    "Left Zygomaxillare",
    "Left Zygoorbitale",
    "Nasion",
    "Rhinion",
    "Right Dacryon",
    "Right Ectoconchion",
    "Right Frontomalare Orbitale",
    "Right Frontotemporale",
    "Right Mid-supraorbital",
    "Right Nasomaxillare",
    "Right Orbitale",
    "Right Superciliare",
    "Right Supraorbital Ridge",
    "Right Zygion",
    "Right Zygomatic",
    "Right Zygomaxillare",
    "Right Zygoorbitale",
];

/// Landmarks of the E4 experiment (whole face including the mandible).
pub const SET_B: [&str; 29] = [
    "Glabella",
    "Gnathion",
    "Left Ectoconchion",
    "Left Ectomolare_2",
    "Left Frontomalare Orbitale",
    "Left Frontotemporale",
    "Left Mentale",
    "Left Mid-nasomaxillare",
    "Left Mid-ramus",
    "Left Nasomaxillare",
    "Left Orbitale",
    "Left Superciliare",
    "Left Supra Canine",
    "Left Zygion",
    "Mid-philtrum",
    "Nasion",
    "Prosthion",
    "Right Ectoconchion",
    "Right Ectomolare_2",
    "Right Frontomalare Orbitale",
    "Right Frontotemporale",
    "Right Mentale",
    "Right Mid-nasomaxillare",
    "Right Mid-ramus",
    "Right Nasomaxillare",
    "Right Orbitale",
    "Right Superciliare",
    "Right Supra Canine",
    "Right Zygion",
];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum LandmarkSet {
    #[serde(rename = "set_a")]
    SetA,
    #[serde(rename = "set_b")]
    SetB,
}

impl LandmarkSet {
    pub fn names(self) -> &'static [&'static str] {
        match self {
            LandmarkSet::SetA => &SET_A,
            LandmarkSet::SetB => &SET_B,
        }
    }

    /// Registry ids of the set, in ascending id order.
    pub fn ids(self, registry: &Registry) -> Vec<LandmarkId> {
        let mut ids: Vec<_> =
            self.names().iter().map(|n| registry.id(n).expect("experiment sets are registered")).collect();
        ids.sort();
        ids
    }

    pub fn label(self) -> &'static str {
        match self {
            LandmarkSet::SetA => "set_a",
            LandmarkSet::SetB => "set_b",
        }
    }
}

impl fmt::Display for LandmarkSet {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.label())
    }
}

impl std::str::FromStr for LandmarkSet {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "set_a" | "a" => Ok(LandmarkSet::SetA),
            "set_b" | "b" => Ok(LandmarkSet::SetB),
            _ => Err(Error::InvalidSpec(format!("unknown landmark set `{s}`"))),
        }
    }
}

#[derive(Debug)]
pub struct Registry {
    defs: Vec<LandmarkDef>,
    by_name: HashMap<String, LandmarkId>,
}

static STANDARD: LazyLock<Registry> = LazyLock::new(|| {
    let mut names: Vec<&str> = SET_A.iter().chain(SET_B.iter()).copied().collect();
    names.sort_unstable();
    names.dedup();
    Registry::from_names(&names).expect("standard registry is well formed")
});

impl Registry {
    /// The registry of every landmark used by the experiment sets, sorted by name.
    pub fn standard() -> &'static Registry {
        &STANDARD
    }

    pub fn from_names(names: &[&str]) -> Result<Registry> {
        let mut defs = Vec::with_capacity(names.len());
        let mut by_name = HashMap::with_capacity(names.len());
        for (i, &name) in names.iter().enumerate() {
            let id = LandmarkId(i as u16);
            let laterality = if name.starts_with("Left ") {
                Laterality::Left
            } else if name.starts_with("Right ") {
                Laterality::Right
            } else {
                Laterality::Midline
            };
            if by_name.insert(name.to_string(), id).is_some() {
                return Err(Error::InvalidSpec(format!("duplicate landmark `{name}`")));
            }
            defs.push(LandmarkDef { id, name: name.to_string(), laterality });
        }
        let registry = Registry { defs, by_name };
        for def in &registry.defs {
            if def.laterality != Laterality::Midline && registry.mirror(def.id).is_none() {
                return Err(Error::InvalidSpec(format!("`{}` has no bilateral partner", def.name)));
            }
        }
        Ok(registry)
    }

    pub fn len(&self) -> usize {
        self.defs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.defs.is_empty()
    }

    pub fn defs(&self) -> &[LandmarkDef] {
        &self.defs
    }

    pub fn get(&self, id: LandmarkId) -> &LandmarkDef {
        &self.defs[id.index()]
    }

    pub fn name(&self, id: LandmarkId) -> &str {
        &self.defs[id.index()].name
    }

    pub fn id(&self, name: &str) -> Option<LandmarkId> {
        self.by_name.get(name).copied()
    }

    pub fn lookup(&self, name: &str) -> Result<LandmarkId> {
        self.id(name).ok_or_else(|| Error::UnknownLandmark(name.to_string()))
    }

    /// The bilateral partner of a landmark; `None` for midline landmarks.
    pub fn mirror(&self, id: LandmarkId) -> Option<LandmarkId> {
        let def = self.get(id);
        let other = match def.laterality {
            Laterality::Midline => return None,
            Laterality::Left => format!("Right {}", def.base_name()),
            Laterality::Right => format!("Left {}", def.base_name()),
        };
        self.id(&other)
    }
}
