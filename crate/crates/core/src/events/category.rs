use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};

use super::{DetectionVector, Group};
use crate::error::{Error, Result};

/// Which feature groups are active and whether every active group has all
/// three phases set. Balance is `None` when only the power-factor group is
/// active: the three PF-only patterns share one category.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct CategoryKey {
    pub voltage: bool,
    pub current: bool,
    pub power_factor: bool,
    pub balanced: Option<bool>,
}

impl CategoryKey {
    pub fn of(v: &DetectionVector) -> Result<Self> {
        if !v.any() {
            return Err(Error::InvalidArgument(
                "zero detection vector has no category".into(),
            ));
        }
        let active = Group::ALL.map(|g| v.group_active(g));
        let pf_only = active == [false, false, true];
        let balanced = Group::ALL
            .iter()
            .filter(|g| v.group_active(**g))
            .all(|g| v.phases(*g).iter().all(|&b| b));
        Ok(Self {
            voltage: active[0],
            current: active[1],
            power_factor: active[2],
            balanced: if pf_only { None } else { Some(balanced) },
        })
    }

    pub fn label(&self) -> String {
        let mut groups = Vec::new();
        if self.voltage {
            groups.push("V");
        }
        if self.current {
            groups.push("I");
        }
        if self.power_factor {
            groups.push("PF");
        }
        let bal = match self.balanced {
            Some(true) => " balanced",
            Some(false) => " unbalanced",
            None => "",
        };
        format!("{}{bal}", groups.join("+"))
    }
}

/// The five keys realized by the reference detection vectors, in report order.
pub fn reference_keys() -> [CategoryKey; 5] {
    let key = |v, i, pf, balanced| CategoryKey {
        voltage: v,
        current: i,
        power_factor: pf,
        balanced,
    };
    [
        key(true, true, true, Some(true)),
        key(true, false, false, Some(true)),
        key(false, true, true, Some(true)),
        key(false, true, true, Some(false)),
        key(false, false, true, None),
    ]
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Category {
    /// 1-based; 1..=5 are the reference categories.
    pub id: u32,
    pub key: CategoryKey,
    pub members: BTreeSet<DetectionVector>,
    pub count: u64,
}

/// Categories seen so far. The five reference categories always exist;
/// unseen keys are appended with fresh ids. Single writer.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CategoryRegistry {
    pub categories: Vec<Category>,
}

impl Default for CategoryRegistry {
    fn default() -> Self {
        Self {
            categories: reference_keys()
                .into_iter()
                .enumerate()
                .map(|(k, key)| Category {
                    id: k as u32 + 1,
                    key,
                    members: BTreeSet::new(),
                    count: 0,
                })
                .collect(),
        }
    }
}

impl CategoryRegistry {
    /// Category id for `v`, registering the vector (and a new category if
    /// its key is unseen).
    pub fn categorize(&mut self, v: &DetectionVector) -> Result<u32> {
        let key = CategoryKey::of(v)?;
        let idx = match self.categories.iter().position(|c| c.key == key) {
            Some(i) => i,
            None => {
                let id = self.categories.iter().map(|c| c.id).max().unwrap_or(0) + 1;
                self.categories.push(Category {
                    id,
                    key,
                    members: BTreeSet::new(),
                    count: 0,
                });
                self.categories.len() - 1
            }
        };
        let cat = &mut self.categories[idx];
        cat.members.insert(*v);
        cat.count += 1;
        Ok(cat.id)
    }

    /// Lookup without registering.
    pub fn find(&self, v: &DetectionVector) -> Result<Option<u32>> {
        let key = CategoryKey::of(v)?;
        Ok(self.categories.iter().find(|c| c.key == key).map(|c| c.id))
    }

    pub fn get(&self, id: u32) -> Option<&Category> {
        self.categories.iter().find(|c| c.id == id)
    }
}

/// Roman numeral display name used in reports.
pub fn category_name(id: u32) -> String {
    const ROMAN: [&str; 10] = ["I", "II", "III", "IV", "V", "VI", "VII", "VIII", "IX", "X"];
    match ROMAN.get(id.wrapping_sub(1) as usize) {
        Some(r) => format!("Category {r}"),
        None => format!("Category {id}"),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn cat(reg: &mut CategoryRegistry, s: &str) -> u32 {
        reg.categorize(&s.parse().unwrap()).unwrap()
    }

    #[test]
    fn reference_vectors_give_five_categories() {
        let mut reg = CategoryRegistry::default();
        let rows = [
            ("111 111 111", 1),
            ("111 000 000", 2),
            ("000 111 111", 3),
            ("000 100 100", 4),
            ("000 110 110", 4),
            ("000 011 011", 4),
            ("000 000 111", 5),
            ("000 000 110", 5),
            ("000 000 011", 5),
        ];
        for (v, id) in rows {
            assert_eq!(cat(&mut reg, v), id, "{v}");
        }
        assert_eq!(reg.categories.len(), 5);
        assert_eq!(reg.get(4).unwrap().members.len(), 3);
    }

    #[test]
    fn unseen_keys_create_categories() {
        let mut reg = CategoryRegistry::default();
        let id = cat(&mut reg, "110 111 111");
        assert_eq!(id, 6);
        assert_eq!(cat(&mut reg, "111 011 111"), 6);
        assert_eq!(cat(&mut reg, "100 000 000"), 7);
        assert_eq!(reg.get(6).unwrap().key.label(), "V+I+PF unbalanced");
    }

    #[test]
    fn zero_vector_is_an_error() {
        assert!(CategoryRegistry::default()
            .categorize(&DetectionVector::EMPTY)
            .is_err());
    }

    #[test]
    fn names() {
        assert_eq!(category_name(4), "Category IV");
        assert_eq!(category_name(12), "Category 12");
    }
}
