//! Two randomly perturbed copies of a point cloud with tracked correspondence.
//!
//! Each copy is `x -> t + R (s x)` with `R = Rz(yaw) Rx(pitch) Ry(roll)`,
//! followed by clipping to the clip box. Normals are rotated only.

use rand::Rng;

use crate::cloud::PointCloud;
use crate::error::{Error, Result};
use crate::geom::{mat_mul, mat_vec, norm, rot_x, rot_y, rot_z, Aabb, Mat3, Vec3};
use crate::rng::Stream;

#[derive(Clone, Debug, PartialEq)]
pub struct PerturbParams {
    pub scale_range: (f64, f64),
    /// Bounds in degrees on |pitch|, |yaw|, |roll|.
    pub max_rotation_deg: [f64; 3],
    pub translation_range: [(f64, f64); 3],
    pub clip_region: Aabb,
    pub seed: u64,
}

impl Default for PerturbParams {
    fn default() -> Self {
        PerturbParams {
            scale_range: (0.75, 1.25),
            max_rotation_deg: [10.0; 3],
            translation_range: [(-0.25, 0.25); 3],
            clip_region: Aabb::unit(),
            seed: 0,
        }
    }
}

impl PerturbParams {
    /// Parameters that always yield the identity transform.
    pub fn identity() -> Self {
        PerturbParams {
            scale_range: (1.0, 1.0),
            max_rotation_deg: [0.0; 3],
            translation_range: [(0.0, 0.0); 3],
            ..Default::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        let (lo, hi) = self.scale_range;
        if !(lo > 0.0 && lo <= hi && hi.is_finite()) {
            return Err(Error::InvalidParams(format!("scale range [{lo}, {hi}]")));
        }
        if self.max_rotation_deg.iter().any(|a| !(0.0..=180.0).contains(a)) {
            return Err(Error::InvalidParams("rotation bounds must lie in [0, 180]".into()));
        }
        if self
            .translation_range
            .iter()
            .any(|&(a, b)| !(a <= b && a.is_finite() && b.is_finite()))
        {
            return Err(Error::InvalidParams("translation range".into()));
        }
        Ok(())
    }
}

/// Uniform scale, then rotation, then translation.
#[derive(Clone, Debug, PartialEq)]
pub struct SimilarityTransform {
    pub scale: f64,
    /// Pitch, yaw, roll in radians.
    pub angles: [f64; 3],
    pub rotation: Mat3,
    pub translation: Vec3,
}

impl SimilarityTransform {
    pub fn identity() -> Self {
        SimilarityTransform {
            scale: 1.0,
            angles: [0.0; 3],
            rotation: [[1.0, 0.0, 0.0], [0.0, 1.0, 0.0], [0.0, 0.0, 1.0]],
            translation: [0.0; 3],
        }
    }

    pub fn from_parts(scale: f64, angles: [f64; 3], translation: Vec3) -> Self {
        let [pitch, yaw, roll] = angles;
        let rotation = mat_mul(&rot_z(yaw), &mat_mul(&rot_x(pitch), &rot_y(roll)));
        SimilarityTransform {
            scale,
            angles,
            rotation,
            translation,
        }
    }

    pub fn apply(&self, p: Vec3) -> Vec3 {
        let r = mat_vec(
            &self.rotation,
            [self.scale * p[0], self.scale * p[1], self.scale * p[2]],
        );
        [
            r[0] + self.translation[0],
            r[1] + self.translation[1],
            r[2] + self.translation[2],
        ]
    }

    pub fn apply_normal(&self, n: Vec3) -> Vec3 {
        let r = mat_vec(&self.rotation, n);
        let l = norm(r);
        [r[0] / l, r[1] / l, r[2] / l]
    }
}

fn uniform<R: Rng>(rng: &mut R, lo: f64, hi: f64) -> f64 {
    let u: f64 = rng.random();
    lo + (hi - lo) * u
}

/// Draw one transform; the draw order is scale, pitch, yaw, roll, tx, ty, tz.
pub fn sample_transform<R: Rng>(params: &PerturbParams, rng: &mut R) -> SimilarityTransform {
    let scale = uniform(rng, params.scale_range.0, params.scale_range.1);
    let mut angles = [0.0; 3];
    for (a, &max) in angles.iter_mut().zip(&params.max_rotation_deg) {
        let m = max.to_radians();
        *a = uniform(rng, -m, m);
    }
    let mut t = [0.0; 3];
    for (v, &(lo, hi)) in t.iter_mut().zip(&params.translation_range) {
        *v = uniform(rng, lo, hi);
    }
    SimilarityTransform::from_parts(scale, angles, t)
}

/// One row of the correspondence: original point index and its rows in both copies.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct CorrPair {
    pub source: usize,
    pub a: usize,
    pub b: usize,
}

#[derive(Clone, Debug, PartialEq, Eq, Default)]
pub struct Correspondence {
    pub pairs: Vec<CorrPair>,
}

impl Correspondence {
    /// Row `i` of both copies is original point `i`.
    pub fn identity(n: usize) -> Self {
        Correspondence {
            pairs: (0..n).map(|i| CorrPair { source: i, a: i, b: i }).collect(),
        }
    }

    pub fn len(&self) -> usize {
        self.pairs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pairs.is_empty()
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct PerturbPair {
    pub copy_a: PointCloud,
    pub copy_b: PointCloud,
    pub keep_a: Vec<bool>,
    pub keep_b: Vec<bool>,
    pub correspondence: Correspondence,
    pub transform_a: SimilarityTransform,
    pub transform_b: SimilarityTransform,
}

impl PerturbPair {
    /// Original point index of every row of copy A.
    pub fn source_indices_a(&self) -> Vec<usize> {
        mask_indices(&self.keep_a)
    }

    pub fn source_indices_b(&self) -> Vec<usize> {
        mask_indices(&self.keep_b)
    }
}

fn mask_indices(mask: &[bool]) -> Vec<usize> {
    mask.iter().enumerate().filter(|(_, &k)| k).map(|(i, _)| i).collect()
}

fn apply_and_clip(
    cloud: &PointCloud,
    t: &SimilarityTransform,
    clip: &Aabb,
) -> (Vec<Vec3>, Option<Vec<Vec3>>, Vec<bool>) {
    let moved: Vec<Vec3> = cloud.points().iter().map(|&p| t.apply(p)).collect();
    let keep: Vec<bool> = moved.iter().map(|&p| clip.contains(p)).collect();
    let points = moved.iter().zip(&keep).filter(|(_, &k)| k).map(|(p, _)| *p).collect();
    let normals = cloud.normals().map(|ns| {
        ns.iter()
            .zip(&keep)
            .filter(|(_, &k)| k)
            .map(|(n, _)| t.apply_normal(*n))
            .collect()
    });
    (points, normals, keep)
}

/// Apply two given transforms and clip.
pub fn make_pair_with(
    cloud: &PointCloud,
    transform_a: SimilarityTransform,
    transform_b: SimilarityTransform,
    clip: &Aabb,
) -> Result<PerturbPair> {
    let (pa, na, keep_a) = apply_and_clip(cloud, &transform_a, clip);
    let (pb, nb, keep_b) = apply_and_clip(cloud, &transform_b, clip);
    let mut pairs = Vec::new();
    let (mut ra, mut rb) = (0, 0);
    for i in 0..cloud.len() {
        if keep_a[i] && keep_b[i] {
            pairs.push(CorrPair {
                source: i,
                a: ra,
                b: rb,
            });
        }
        ra += usize::from(keep_a[i]);
        rb += usize::from(keep_b[i]);
    }
    if pairs.is_empty() {
        return Err(Error::EmptyCorrespondence);
    }
    Ok(PerturbPair {
        copy_a: PointCloud::new(pa, na)?,
        copy_b: PointCloud::new(pb, nb)?,
        keep_a,
        keep_b,
        correspondence: Correspondence { pairs },
        transform_a,
        transform_b,
    })
}

/// Two independent random copies; fully determined by `(cloud, params)`.
pub fn make_pair(cloud: &PointCloud, params: &PerturbParams) -> Result<PerturbPair> {
    params.validate()?;
    let mut rng = Stream::new(params.seed).split("perturb").rng();
    let ta = sample_transform(params, &mut rng);
    let tb = sample_transform(params, &mut rng);
    make_pair_with(cloud, ta, tb, &params.clip_region)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sphere_cloud(n: usize) -> PointCloud {
        let golden = std::f64::consts::PI * (3.0 - 5f64.sqrt());
        let pts: Vec<Vec3> = (0..n)
            .map(|i| {
                let y = 1.0 - 2.0 * (i as f64 + 0.5) / n as f64;
                let r = (1.0 - y * y).sqrt();
                let t = golden * i as f64;
                [0.9 * r * t.cos(), 0.9 * y, 0.9 * r * t.sin()]
            })
            .collect();
        let normals = pts
            .iter()
            .map(|p| {
                let l = norm(*p);
                [p[0] / l, p[1] / l, p[2] / l]
            })
            .collect();
        PointCloud::new(pts, Some(normals)).unwrap()
    }

    #[test]
    fn degenerate_ranges_give_identity() {
        let mut rng = Stream::new(1).rng();
        let t = sample_transform(&PerturbParams::identity(), &mut rng);
        assert_eq!(t, SimilarityTransform::identity());
    }

    #[test]
    fn identity_pair_keeps_everything() {
        let c = sphere_cloud(100);
        let p = make_pair(&c, &PerturbParams::identity()).unwrap();
        assert!(p.keep_a.iter().all(|&k| k));
        assert!(p.keep_b.iter().all(|&k| k));
        assert_eq!(p.copy_a.points(), c.points());
        assert_eq!(p.copy_b.points(), c.points());
        for (n, m) in p.copy_b.normals().unwrap().iter().zip(c.normals().unwrap()) {
            assert!((0..3).all(|a| (n[a] - m[a]).abs() < 1e-15));
        }
        assert_eq!(p.correspondence, Correspondence::identity(100));
    }

    #[test]
    fn translated_point_outside_box_is_clipped() {
        let c = PointCloud::new(vec![[0.8, 0.0, 0.0], [0.0, 0.0, 0.0]], None).unwrap();
        let shift = SimilarityTransform::from_parts(1.0, [0.0; 3], [0.5, 0.0, 0.0]);
        let p = make_pair_with(&c, shift.clone(), shift, &Aabb::unit()).unwrap();
        assert_eq!(p.keep_a, vec![false, true]);
        assert_eq!(p.copy_a.points(), &[[0.5, 0.0, 0.0]]);
        assert_eq!(p.correspondence.pairs, vec![CorrPair { source: 1, a: 0, b: 0 }]);
    }

    #[test]
    fn nothing_in_common_is_an_error() {
        let c = PointCloud::new(vec![[0.9, 0.0, 0.0], [-0.9, 0.0, 0.0]], None).unwrap();
        let right = SimilarityTransform::from_parts(1.0, [0.0; 3], [0.5, 0.0, 0.0]);
        let left = SimilarityTransform::from_parts(1.0, [0.0; 3], [-0.5, 0.0, 0.0]);
        assert!(matches!(
            make_pair_with(&c, right, left, &Aabb::unit()),
            Err(Error::EmptyCorrespondence)
        ));
    }

    #[test]
    fn pair_is_deterministic_and_sound() {
        let c = sphere_cloud(1000);
        let params = PerturbParams {
            seed: 7,
            ..Default::default()
        };
        let p1 = make_pair(&c, &params).unwrap();
        let p2 = make_pair(&c, &params).unwrap();
        assert_eq!(p1, p2);
        assert!(!p1.correspondence.is_empty());
        assert_eq!(p1.copy_a.len(), p1.keep_a.iter().filter(|&&k| k).count());
        for q in p1.copy_a.points().iter().chain(p1.copy_b.points()) {
            assert!(params.clip_region.contains(*q));
        }
        for pair in &p1.correspondence.pairs {
            let re = p1.transform_a.apply(c.points()[pair.source]);
            let got = p1.copy_a.points()[pair.a];
            assert!((0..3).all(|a| (re[a] - got[a]).abs() <= 1e-12));
            let re = p1.transform_b.apply(c.points()[pair.source]);
            let got = p1.copy_b.points()[pair.b];
            assert!((0..3).all(|a| (re[a] - got[a]).abs() <= 1e-12));
        }
        for n in p1.copy_a.normals().unwrap() {
            assert!((norm(*n) - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn default_ranges_hold() {
        let params = PerturbParams::default();
        let mut rng = Stream::new(3).rng();
        for _ in 0..2000 {
            let t = sample_transform(&params, &mut rng);
            assert!((0.75..=1.25).contains(&t.scale));
            assert!(t.angles.iter().all(|a| a.abs() <= 10f64.to_radians()));
            assert!(t.translation.iter().all(|v| v.abs() <= 0.25));
        }
    }
}
