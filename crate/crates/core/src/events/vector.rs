use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::error::{Error, Result};
use crate::ingest::FEATURE_COUNT;

/// Feature groups in row order: voltage magnitude, current magnitude, power factor.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Group {
    Voltage,
    Current,
    PowerFactor,
}

impl Group {
    pub const ALL: [Group; 3] = [Group::Voltage, Group::Current, Group::PowerFactor];

    pub fn index(self) -> usize {
        self as usize
    }

    /// Feature index of phase `p` (0 = A) in this group.
    pub fn feature(self, p: usize) -> usize {
        3 * self.index() + p
    }
}

/// Which of the nine features look abnormal, in feature order.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct DetectionVector(pub [bool; FEATURE_COUNT]);

impl DetectionVector {
    pub const EMPTY: DetectionVector = DetectionVector([false; FEATURE_COUNT]);

    /// Collects per-feature flags; every one of the nine must be present.
    pub fn assemble(flags: &[Option<bool>]) -> Result<Self> {
        if flags.len() != FEATURE_COUNT {
            return Err(Error::Shape {
                expected: format!("{FEATURE_COUNT} feature flags"),
                got: format!("{}", flags.len()),
            });
        }
        let mut bits = [false; FEATURE_COUNT];
        for (f, flag) in flags.iter().enumerate() {
            bits[f] = flag
                .ok_or_else(|| Error::InvalidArgument(format!("missing flag for feature {f}")))?;
        }
        Ok(DetectionVector(bits))
    }

    pub fn from_mask(mask: u16) -> Self {
        let mut bits = [false; FEATURE_COUNT];
        for (f, b) in bits.iter_mut().enumerate() {
            *b = mask & (1 << f) != 0;
        }
        DetectionVector(bits)
    }

    pub fn mask(&self) -> u16 {
        self.0
            .iter()
            .enumerate()
            .filter(|(_, &b)| b)
            .map(|(f, _)| 1u16 << f)
            .sum()
    }

    pub fn any(&self) -> bool {
        self.0.iter().any(|&b| b)
    }

    pub fn count(&self) -> usize {
        self.0.iter().filter(|&&b| b).count()
    }

    pub fn get(&self, feature: usize) -> bool {
        self.0[feature]
    }

    pub fn or(&self, other: &Self) -> Self {
        let mut out = self.0;
        for (o, &b) in out.iter_mut().zip(&other.0) {
            *o |= b;
        }
        DetectionVector(out)
    }

    pub fn phases(&self, group: Group) -> [bool; 3] {
        [0, 1, 2].map(|p| self.0[group.feature(p)])
    }

    pub fn group_active(&self, group: Group) -> bool {
        self.phases(group).iter().any(|&b| b)
    }
}

impl fmt::Display for DetectionVector {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for (g, group) in Group::ALL.iter().enumerate() {
            if g > 0 {
                f.write_str(" ")?;
            }
            for b in self.phases(*group) {
                f.write_str(if b { "1" } else { "0" })?;
            }
        }
        Ok(())
    }
}

impl FromStr for DetectionVector {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let digits: Vec<char> = s.chars().filter(|c| !c.is_whitespace()).collect();
        if digits.len() != FEATURE_COUNT {
            return Err(Error::InvalidArgument(format!(
                "detection vector {s:?} needs {FEATURE_COUNT} bits"
            )));
        }
        let mut bits = [false; FEATURE_COUNT];
        for (b, c) in bits.iter_mut().zip(digits) {
            *b = match c {
                '0' => false,
                '1' => true,
                _ => return Err(Error::InvalidArgument(format!("bad bit {c:?} in {s:?}"))),
            };
        }
        Ok(DetectionVector(bits))
    }
}

impl Serialize for DetectionVector {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        s.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for DetectionVector {
    fn deserialize<D: Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn display_round_trip() {
        let v: DetectionVector = "000 011 011".parse().unwrap();
        assert_eq!(v.to_string(), "000 011 011");
        assert_eq!(v.count(), 4);
        assert_eq!(DetectionVector::from_mask(v.mask()), v);
        let json = serde_json::to_string(&v).unwrap();
        assert_eq!(json, "\"000 011 011\"");
        assert_eq!(serde_json::from_str::<DetectionVector>(&json).unwrap(), v);
    }

    #[test]
    fn assemble_follows_flags() {
        let mut flags = vec![Some(false); 9];
        for f in 0..3 {
            flags[f] = Some(true);
        }
        assert_eq!(
            DetectionVector::assemble(&flags).unwrap().to_string(),
            "111 000 000"
        );
        flags[4] = None;
        assert!(DetectionVector::assemble(&flags).is_err());
        assert!(DetectionVector::assemble(&flags[..8]).is_err());
        assert!(!DetectionVector::assemble(&[Some(false); 9]).unwrap().any());
    }

    #[test]
    fn rejects_bad_strings() {
        assert!("11".parse::<DetectionVector>().is_err());
        assert!("111 000 00x".parse::<DetectionVector>().is_err());
    }
}
