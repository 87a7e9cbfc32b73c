//! Hierarchical label schemas.
//!
//! Levels are indexed from 0 (coarsest) to `K - 1` (finest) in memory and
//! printed 1-based in files and reports. Every label at level `k >= 1` has
//! exactly one parent label at level `k - 1`.

use crate::error::{Error, Result};

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct LabelSchema {
    labels_per_level: Vec<usize>,
    /// `parents[k][l]` is the parent of label `l` at level `k`; `parents[0]` is empty.
    parents: Vec<Vec<usize>>,
    level_names: Vec<Vec<String>>,
}

/// Check raw schema parts. `parent_maps[k - 1]` holds the map of level `k`
/// (for `k >= 1`); a `None` entry or a short map is a missing parent.
pub fn validate_schema(labels_per_level: &[usize], parent_maps: &[Vec<Option<usize>>]) -> Result<()> {
    if labels_per_level.is_empty() {
        return Err(Error::NoLevels);
    }
    if let Some(level) = labels_per_level.iter().position(|&l| l == 0) {
        return Err(Error::EmptyLevel { level });
    }
    for level in 1..labels_per_level.len() {
        let map = parent_maps.get(level - 1).map(Vec::as_slice).unwrap_or(&[]);
        for label in 0..labels_per_level[level] {
            match map.get(label).copied().flatten() {
                None => return Err(Error::MissingParent { level, label }),
                Some(parent) if parent >= labels_per_level[level - 1] => {
                    return Err(Error::OutOfRangeParent {
                        level,
                        label,
                        parent,
                        limit: labels_per_level[level - 1],
                    })
                }
                Some(_) => {}
            }
        }
        if map.len() > labels_per_level[level] {
            return Err(Error::OutOfRangeLabel {
                level,
                label: map.len() - 1,
                limit: labels_per_level[level],
            });
        }
    }
    if parent_maps.len() > labels_per_level.len().saturating_sub(1) {
        return Err(Error::InvalidParams(format!(
            "{} parent maps for {} levels",
            parent_maps.len(),
            labels_per_level.len()
        )));
    }
    Ok(())
}

impl LabelSchema {
    pub fn new(labels_per_level: Vec<usize>, parent_maps: Vec<Vec<Option<usize>>>) -> Result<Self> {
        validate_schema(&labels_per_level, &parent_maps)?;
        let mut parents = vec![Vec::new()];
        parents.extend(
            parent_maps
                .into_iter()
                .map(|m| m.into_iter().map(|p| p.expect("validated")).collect()),
        );
        parents.resize(labels_per_level.len(), Vec::new());
        let level_names = vec![Vec::new(); labels_per_level.len()];
        Ok(LabelSchema {
            labels_per_level,
            parents,
            level_names,
        })
    }

    /// Convenience constructor taking complete parent maps.
    pub fn from_parents(labels_per_level: Vec<usize>, parent_maps: Vec<Vec<usize>>) -> Result<Self> {
        let maps = parent_maps
            .into_iter()
            .map(|m| m.into_iter().map(Some).collect())
            .collect();
        Self::new(labels_per_level, maps)
    }

    /// A single-level schema with `labels` classes.
    pub fn flat(labels: usize) -> Result<Self> {
        Self::new(vec![labels], Vec::new())
    }

    /// Attach display names; each level gets either no names or exactly `L^(k)`.
    pub fn with_names(mut self, names: Vec<Vec<String>>) -> Result<Self> {
        if names.len() != self.level_count() {
            return Err(Error::InvalidParams("one name list per level expected".into()));
        }
        for (k, n) in names.iter().enumerate() {
            if !n.is_empty() && n.len() != self.labels_per_level[k] {
                return Err(Error::InvalidParams(format!(
                    "level {} has {} names for {} labels",
                    k + 1,
                    n.len(),
                    self.labels_per_level[k]
                )));
            }
        }
        self.level_names = names;
        Ok(self)
    }

    pub fn level_count(&self) -> usize {
        self.labels_per_level.len()
    }

    pub fn finest(&self) -> usize {
        self.level_count() - 1
    }

    pub fn labels_per_level(&self) -> &[usize] {
        &self.labels_per_level
    }

    pub fn labels(&self, level: usize) -> usize {
        self.labels_per_level[level]
    }

    /// Parent of `label` at `level >= 1`.
    pub fn parent(&self, level: usize, label: usize) -> usize {
        self.parents[level][label]
    }

    pub fn parent_map(&self, level: usize) -> &[usize] {
        &self.parents[level]
    }

    /// Ancestor of `label` (at `level`) at the coarser level `target <= level`.
    pub fn ancestor(&self, level: usize, label: usize, target: usize) -> usize {
        let mut l = label;
        for k in (target + 1..=level).rev() {
            l = self.parents[k][l];
        }
        l
    }

    pub fn children(&self, level: usize, label: usize) -> Vec<usize> {
        if level + 1 >= self.level_count() {
            return Vec::new();
        }
        (0..self.labels_per_level[level + 1])
            .filter(|&c| self.parents[level + 1][c] == label)
            .collect()
    }

    pub fn level_names(&self, level: usize) -> &[String] {
        &self.level_names[level]
    }

    pub fn name(&self, level: usize, label: usize) -> Option<&str> {
        self.level_names[level].get(label).map(String::as_str)
    }

    /// Find a label id by display name.
    pub fn label_by_name(&self, level: usize, name: &str) -> Option<usize> {
        self.level_names[level].iter().position(|n| n == name)
    }

    pub fn validate(&self) -> Result<()> {
        let maps: Vec<Vec<Option<usize>>> = self.parents[1..]
            .iter()
            .map(|m| m.iter().copied().map(Some).collect())
            .collect();
        validate_schema(&self.labels_per_level, &maps)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn single_level_schema_is_valid() {
        let s = LabelSchema::new(vec![4], vec![]).unwrap();
        assert_eq!(s.level_count(), 1);
        assert!(s.validate().is_ok());
    }

    #[test]
    fn two_level_8_36_schema_is_valid() {
        let map: Vec<Option<usize>> = (0..36).map(|l| Some(l % 8)).collect();
        let s = LabelSchema::new(vec![8, 36], vec![map]).unwrap();
        assert_eq!(s.labels(1), 36);
        assert_eq!(s.parent(1, 35), 3);
    }

    #[test]
    fn missing_parent_is_reported() {
        let mut map: Vec<Option<usize>> = (0..36).map(|l| Some(l % 8)).collect();
        map[35] = None;
        assert!(matches!(
            LabelSchema::new(vec![8, 36], vec![map.clone()]),
            Err(Error::MissingParent { level: 1, label: 35 })
        ));
        map.truncate(35);
        assert!(matches!(
            LabelSchema::new(vec![8, 36], vec![map]),
            Err(Error::MissingParent { level: 1, label: 35 })
        ));
    }

    #[test]
    fn out_of_range_parent_and_empty_level() {
        assert!(matches!(
            LabelSchema::from_parents(vec![2, 3], vec![vec![0, 1, 2]]),
            Err(Error::OutOfRangeParent {
                level: 1,
                label: 2,
                parent: 2,
                limit: 2
            })
        ));
        assert!(matches!(
            LabelSchema::new(vec![2, 0], vec![vec![]]),
            Err(Error::EmptyLevel { level: 1 })
        ));
        assert!(matches!(LabelSchema::new(vec![], vec![]), Err(Error::NoLevels)));
    }

    #[test]
    fn ancestors_and_children() {
        let s = LabelSchema::from_parents(vec![2, 3, 5], vec![vec![0, 0, 1], vec![0, 1, 1, 2, 2]]).unwrap();
        assert_eq!(s.ancestor(2, 4, 0), 1);
        assert_eq!(s.ancestor(2, 1, 0), 0);
        assert_eq!(s.ancestor(2, 1, 2), 1);
        assert_eq!(s.children(0, 0), vec![0, 1]);
        assert_eq!(s.children(1, 2), vec![3, 4]);
        assert!(s.children(2, 0).is_empty());
    }
}
