//! Point clouds and per-level hierarchical labels.

use crate::error::{Error, Result};
use crate::geom::{norm, Aabb, Vec3};
use crate::schema::LabelSchema;

/// A semantic label at one level, or the marker for points excluded from
/// supervision (written as `-1` in files).
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Label {
    Unlabeled,
    Part(u32),
}

impl Label {
    pub fn part(id: usize) -> Self {
        Label::Part(id as u32)
    }

    pub fn id(self) -> Option<usize> {
        match self {
            Label::Part(l) => Some(l as usize),
            Label::Unlabeled => None,
        }
    }

    pub fn is_labeled(self) -> bool {
        matches!(self, Label::Part(_))
    }

    /// File encoding: `-1` for unlabeled, the id otherwise.
    pub fn to_i64(self) -> i64 {
        match self {
            Label::Part(l) => i64::from(l),
            Label::Unlabeled => -1,
        }
    }
}

pub const NORMAL_TOLERANCE: f64 = 1e-6;

#[derive(Clone, Debug, PartialEq)]
pub struct PointCloud {
    points: Vec<Vec3>,
    normals: Option<Vec<Vec3>>,
}

impl PointCloud {
    pub fn new(points: Vec<Vec3>, normals: Option<Vec<Vec3>>) -> Result<Self> {
        if points.is_empty() {
            return Err(Error::InvalidCloud("no points".into()));
        }
        if let Some(i) = points.iter().position(|p| p.iter().any(|c| !c.is_finite())) {
            return Err(Error::InvalidCloud(format!("point {i} has a non-finite coordinate")));
        }
        if let Some(ns) = &normals {
            if ns.len() != points.len() {
                return Err(Error::ShapeMismatch {
                    what: "normals",
                    got: ns.len(),
                    expected: points.len(),
                });
            }
            if let Some(i) = ns
                .iter()
                .position(|n| (norm(*n) - 1.0).abs() > NORMAL_TOLERANCE || !norm(*n).is_finite())
            {
                return Err(Error::InvalidCloud(format!("normal {i} is not unit length")));
            }
        }
        Ok(PointCloud { points, normals })
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn points(&self) -> &[Vec3] {
        &self.points
    }

    pub fn normals(&self) -> Option<&[Vec3]> {
        self.normals.as_deref()
    }

    pub fn bbox(&self) -> Aabb {
        Aabb::of_points(&self.points).expect("non-empty cloud")
    }

    /// Keep the points at `indices`, in that order.
    pub fn select(&self, indices: &[usize]) -> Result<PointCloud> {
        let points = indices.iter().map(|&i| self.points[i]).collect();
        let normals = self.normals.as_ref().map(|ns| indices.iter().map(|&i| ns[i]).collect());
        PointCloud::new(points, normals)
    }

    /// Center on the bounding-box midpoint and scale so the farthest point
    /// lies on the unit sphere.
    pub fn normalized_to_unit_sphere(&self) -> PointCloud {
        let c = self.bbox().center();
        let r = self
            .points
            .iter()
            .map(|p| norm([p[0] - c[0], p[1] - c[1], p[2] - c[2]]))
            .fold(0.0, f64::max);
        let s = if r > 0.0 { 1.0 / r } else { 1.0 };
        let points = self
            .points
            .iter()
            .map(|p| [(p[0] - c[0]) * s, (p[1] - c[1]) * s, (p[2] - c[2]) * s])
            .collect();
        PointCloud {
            points,
            normals: self.normals.clone(),
        }
    }
}

/// Labels of every point at every level of a schema.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct HierLabels {
    levels: Vec<Vec<Label>>,
}

impl HierLabels {
    /// Validates ranges, hierarchical coherence and unlabeled propagation.
    pub fn new(levels: Vec<Vec<Label>>, schema: &LabelSchema) -> Result<Self> {
        let h = HierLabels { levels };
        h.validate(schema)?;
        Ok(h)
    }

    /// Builds labels without any check; [`HierLabels::validate`] can be run later.
    pub fn new_unchecked(levels: Vec<Vec<Label>>) -> Self {
        HierLabels { levels }
    }

    pub fn validate(&self, schema: &LabelSchema) -> Result<()> {
        if self.levels.len() != schema.level_count() {
            return Err(Error::ShapeMismatch {
                what: "label levels",
                got: self.levels.len(),
                expected: schema.level_count(),
            });
        }
        let n = self.levels[0].len();
        for (k, lv) in self.levels.iter().enumerate() {
            if lv.len() != n {
                return Err(Error::ShapeMismatch {
                    what: "labels",
                    got: lv.len(),
                    expected: n,
                });
            }
            for l in lv.iter().filter_map(|l| l.id()) {
                if l >= schema.labels(k) {
                    return Err(Error::OutOfRangeLabel {
                        level: k,
                        label: l,
                        limit: schema.labels(k),
                    });
                }
            }
        }
        for k in 1..self.levels.len() {
            for i in 0..n {
                match (self.levels[k - 1][i], self.levels[k][i]) {
                    (Label::Part(p), Label::Part(c)) => {
                        if schema.parent(k, c as usize) != p as usize {
                            return Err(Error::IncoherentLabels { point: i, level: k });
                        }
                    }
                    (Label::Unlabeled, Label::Part(_)) => {
                        return Err(Error::IncoherentLabels { point: i, level: k });
                    }
                    _ => {}
                }
            }
        }
        Ok(())
    }

    pub fn level_count(&self) -> usize {
        self.levels.len()
    }

    pub fn len(&self) -> usize {
        self.levels.first().map_or(0, Vec::len)
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn level(&self, k: usize) -> &[Label] {
        &self.levels[k]
    }

    pub fn finest(&self) -> &[Label] {
        &self.levels[self.levels.len() - 1]
    }

    pub fn get(&self, level: usize, point: usize) -> Label {
        self.levels[level][point]
    }

    pub fn select(&self, indices: &[usize]) -> HierLabels {
        HierLabels {
            levels: self
                .levels
                .iter()
                .map(|lv| indices.iter().map(|&i| lv[i]).collect())
                .collect(),
        }
    }

    /// Unlabel the flagged points at every level.
    pub fn masked(&self, mask: &[bool]) -> HierLabels {
        HierLabels {
            levels: self
                .levels
                .iter()
                .map(|lv| {
                    lv.iter()
                        .zip(mask)
                        .map(|(&l, &m)| if m { Label::Unlabeled } else { l })
                        .collect()
                })
                .collect(),
        }
    }

    pub fn concat(&self, other: &HierLabels) -> HierLabels {
        HierLabels {
            levels: self
                .levels
                .iter()
                .zip(&other.levels)
                .map(|(a, b)| a.iter().chain(b).copied().collect())
                .collect(),
        }
    }

    pub fn into_levels(self) -> Vec<Vec<Label>> {
        self.levels
    }
}

/// Fill every coarser level from finest-level labels through the parent maps.
pub fn coarsen_labels(fine: &[Label], schema: &LabelSchema) -> Result<HierLabels> {
    let k_fine = schema.finest();
    let limit = schema.labels(k_fine);
    if let Some(label) = fine.iter().filter_map(|l| l.id()).find(|&l| l >= limit) {
        return Err(Error::OutOfRangeLabel {
            level: k_fine,
            label,
            limit,
        });
    }
    let mut levels = vec![Vec::new(); schema.level_count()];
    levels[k_fine] = fine.to_vec();
    for k in (0..k_fine).rev() {
        levels[k] = levels[k + 1]
            .iter()
            .map(|l| match l {
                Label::Part(c) => Label::part(schema.parent(k + 1, *c as usize)),
                Label::Unlabeled => Label::Unlabeled,
            })
            .collect();
    }
    Ok(HierLabels { levels })
}

/// A point cloud with hierarchical labels.
#[derive(Clone, Debug, PartialEq)]
pub struct LabeledCloud {
    pub cloud: PointCloud,
    pub labels: HierLabels,
}

impl LabeledCloud {
    pub fn new(cloud: PointCloud, labels: HierLabels, schema: &LabelSchema) -> Result<Self> {
        labels.validate(schema)?;
        if labels.len() != cloud.len() {
            return Err(Error::ShapeMismatch {
                what: "labels",
                got: labels.len(),
                expected: cloud.len(),
            });
        }
        Ok(LabeledCloud { cloud, labels })
    }

    pub fn len(&self) -> usize {
        self.cloud.len()
    }

    pub fn is_empty(&self) -> bool {
        self.cloud.is_empty()
    }

    pub fn validate(&self, schema: &LabelSchema) -> Result<()> {
        self.labels.validate(schema)?;
        if self.labels.len() != self.cloud.len() {
            return Err(Error::ShapeMismatch {
                what: "labels",
                got: self.labels.len(),
                expected: self.cloud.len(),
            });
        }
        Ok(())
    }

    /// Distinct labeled finest-level parts.
    pub fn finest_parts(&self) -> Vec<usize> {
        let mut v: Vec<usize> = self.labels.finest().iter().filter_map(|l| l.id()).collect();
        v.sort_unstable();
        v.dedup();
        v
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn chair_schema() -> LabelSchema {
        // coarse: 0 back, 1 seat, 2 support
        // fine: 0 back, 1 seat, 2 front-leg-L, 3 front-leg-R, 4 back-leg
        LabelSchema::from_parents(vec![3, 5], vec![vec![0, 1, 2, 2, 2]]).unwrap()
    }

    #[test]
    fn coarsen_single_application() {
        let s = LabelSchema::from_parents(vec![2, 4], vec![vec![0, 0, 1, 1]]).unwrap();
        let h = coarsen_labels(&[Label::part(3)], &s).unwrap();
        assert_eq!(h.level(0), &[Label::part(1)]);
    }

    #[test]
    fn coarsen_propagates_unlabeled() {
        let s = LabelSchema::from_parents(vec![2, 3, 4], vec![vec![0, 0, 1], vec![0, 1, 2, 2]]).unwrap();
        let h = coarsen_labels(&[Label::Unlabeled], &s).unwrap();
        for k in 0..3 {
            assert_eq!(h.level(k), &[Label::Unlabeled]);
        }
    }

    #[test]
    fn coarsen_front_legs_to_support() {
        let s = chair_schema();
        let h = coarsen_labels(&[Label::part(2), Label::part(3)], &s).unwrap();
        assert_eq!(h.level(0), &[Label::part(2), Label::part(2)]);
    }

    #[test]
    fn coarsen_rejects_out_of_range() {
        let s = chair_schema();
        assert!(matches!(
            coarsen_labels(&[Label::part(5)], &s),
            Err(Error::OutOfRangeLabel {
                level: 1,
                label: 5,
                limit: 5
            })
        ));
    }

    #[test]
    fn incoherent_labels_are_rejected() {
        let s = chair_schema();
        let bad = vec![vec![Label::part(0)], vec![Label::part(2)]];
        assert!(matches!(
            HierLabels::new(bad, &s),
            Err(Error::IncoherentLabels { point: 0, level: 1 })
        ));
        let bad = vec![vec![Label::Unlabeled], vec![Label::part(2)]];
        assert!(HierLabels::new(bad, &s).is_err());
        let ok = vec![vec![Label::part(2)], vec![Label::Unlabeled]];
        assert!(HierLabels::new(ok, &s).is_ok());
    }

    #[test]
    fn cloud_validation() {
        assert!(PointCloud::new(vec![], None).is_err());
        assert!(PointCloud::new(vec![[f64::NAN, 0.0, 0.0]], None).is_err());
        assert!(PointCloud::new(vec![[0.0; 3]], Some(vec![[0.0, 0.0, 1.1]])).is_err());
        assert!(PointCloud::new(vec![[0.0; 3]], Some(vec![[0.0, 0.0, 1.0 + 5e-7]])).is_ok());
    }

    #[test]
    fn unit_sphere_normalization() {
        let c = PointCloud::new(vec![[1.0, 1.0, 1.0], [3.0, 1.0, 1.0], [2.0, 5.0, 1.0]], None).unwrap();
        let n = c.normalized_to_unit_sphere();
        let r = n.points().iter().map(|p| norm(*p)).fold(0.0, f64::max);
        assert!((r - 1.0).abs() < 1e-12);
    }
}
