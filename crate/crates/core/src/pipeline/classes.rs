//! The five target classes and per-class containers.

use std::fmt;
use std::ops::{Index, IndexMut};
use std::str::FromStr;

use serde::de::{self, MapAccess, Visitor};
use serde::ser::SerializeMap;
use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::error::{Error, Result};

pub const NUM_CLASSES: usize = 5;

/// Canonical order, used for every vector, file and report.
pub const CLASS_NAMES: [&str; NUM_CLASSES] = ["MI", "STTC", "CD", "HYP", "AF"];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum ClassName {
    /// Myocardial infarction.
    Mi,
    /// ST/T changes.
    Sttc,
    /// Conduction delay.
    Cd,
    /// Hypertrophy.
    Hyp,
    /// Atrial fibrillation.
    Af,
}

impl ClassName {
    pub const ALL: [ClassName; NUM_CLASSES] = [Self::Mi, Self::Sttc, Self::Cd, Self::Hyp, Self::Af];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn from_index(i: usize) -> Option<Self> {
        Self::ALL.get(i).copied()
    }

    pub fn as_str(self) -> &'static str {
        CLASS_NAMES[self.index()]
    }
}

impl fmt::Display for ClassName {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for ClassName {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        CLASS_NAMES
            .iter()
            .position(|&n| n == s)
            .map(|i| Self::ALL[i])
            .ok_or_else(|| {
                Error::Parameter(format!(
                    "unknown class '{s}'; expected one of {}",
                    CLASS_NAMES.join(", ")
                ))
            })
    }
}

/// One value per class in canonical order. Serializes as a JSON object
/// keyed by class name; deserialization requires exactly the five keys.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct PerClass<T>(pub [T; NUM_CLASSES]);

impl<T> PerClass<T> {
    pub fn iter(&self) -> std::slice::Iter<'_, T> {
        self.0.iter()
    }

    pub fn map<U>(&self, f: impl FnMut(&T) -> U) -> PerClass<U> {
        PerClass(self.0.each_ref().map(f))
    }
}

impl<T> Index<ClassName> for PerClass<T> {
    type Output = T;

    fn index(&self, c: ClassName) -> &T {
        &self.0[c.index()]
    }
}

impl<T> IndexMut<ClassName> for PerClass<T> {
    fn index_mut(&mut self, c: ClassName) -> &mut T {
        &mut self.0[c.index()]
    }
}

impl<T> From<[T; NUM_CLASSES]> for PerClass<T> {
    fn from(v: [T; NUM_CLASSES]) -> Self {
        Self(v)
    }
}

impl<T: Serialize> Serialize for PerClass<T> {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        let mut map = s.serialize_map(Some(NUM_CLASSES))?;
        for (name, v) in CLASS_NAMES.iter().zip(&self.0) {
            map.serialize_entry(name, v)?;
        }
        map.end()
    }
}

impl<'de, T: Deserialize<'de>> Deserialize<'de> for PerClass<T> {
    fn deserialize<D: Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        struct V<T>(std::marker::PhantomData<T>);

        impl<'de, T: Deserialize<'de>> Visitor<'de> for V<T> {
            type Value = PerClass<T>;

            fn expecting(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
                write!(f, "an object with keys {}", CLASS_NAMES.join(", "))
            }

            fn visit_map<A: MapAccess<'de>>(
                self,
                mut map: A,
            ) -> std::result::Result<Self::Value, A::Error> {
                let mut slots: [Option<T>; NUM_CLASSES] = Default::default();
                while let Some(key) = map.next_key::<String>()? {
                    let c: ClassName = key
                        .parse()
                        .map_err(|_| de::Error::unknown_field(&key, &CLASS_NAMES))?;
                    if slots[c.index()].is_some() {
                        return Err(de::Error::custom(format!("duplicate class '{key}'")));
                    }
                    slots[c.index()] = Some(map.next_value()?);
                }
                if let Some(i) = slots.iter().position(Option::is_none) {
                    return Err(de::Error::missing_field(CLASS_NAMES[i]));
                }
                Ok(PerClass(slots.map(|s| s.expect("checked above"))))
            }
        }

        d.deserialize_map(V(std::marker::PhantomData))
    }
}
