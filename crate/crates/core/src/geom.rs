//! Small 3D geometry helpers: boxes, per-axis affine maps, similarity transforms.

pub type Vec3 = [f64; 3];

/// Round to 9 significant digits, the precision of the text formats.
pub fn quantize(x: f64) -> f64 {
    format!("{x:.8e}").parse().unwrap_or(x)
}

pub fn quantize3(p: Vec3) -> Vec3 {
    [quantize(p[0]), quantize(p[1]), quantize(p[2])]
}

pub fn sub(a: Vec3, b: Vec3) -> Vec3 {
    [a[0] - b[0], a[1] - b[1], a[2] - b[2]]
}

pub fn dist2(a: Vec3, b: Vec3) -> f64 {
    let d = sub(a, b);
    d[0] * d[0] + d[1] * d[1] + d[2] * d[2]
}

pub fn norm(a: Vec3) -> f64 {
    (a[0] * a[0] + a[1] * a[1] + a[2] * a[2]).sqrt()
}

/// Axis-aligned bounding box.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Aabb {
    pub min: Vec3,
    pub max: Vec3,
}

impl Aabb {
    pub fn new(min: Vec3, max: Vec3) -> Self {
        debug_assert!((0..3).all(|a| min[a] <= max[a]));
        Aabb { min, max }
    }

    /// The box `[-1, 1]^3`.
    pub fn unit() -> Self {
        Aabb::new([-1.0; 3], [1.0; 3])
    }

    /// Bounding box of a non-empty point set.
    pub fn of_points<'a>(points: impl IntoIterator<Item = &'a Vec3>) -> Option<Self> {
        let mut it = points.into_iter();
        let first = *it.next()?;
        let mut b = Aabb::new(first, first);
        for p in it {
            for a in 0..3 {
                b.min[a] = b.min[a].min(p[a]);
                b.max[a] = b.max[a].max(p[a]);
            }
        }
        Some(b)
    }

    pub fn union(&self, other: &Aabb) -> Aabb {
        let mut b = *self;
        for a in 0..3 {
            b.min[a] = b.min[a].min(other.min[a]);
            b.max[a] = b.max[a].max(other.max[a]);
        }
        b
    }

    pub fn extent(&self) -> Vec3 {
        sub(self.max, self.min)
    }

    pub fn center(&self) -> Vec3 {
        [
            0.5 * (self.min[0] + self.max[0]),
            0.5 * (self.min[1] + self.max[1]),
            0.5 * (self.min[2] + self.max[2]),
        ]
    }

    pub fn diagonal(&self) -> f64 {
        norm(self.extent())
    }

    pub fn contains(&self, p: Vec3) -> bool {
        (0..3).all(|a| p[a] >= self.min[a] && p[a] <= self.max[a])
    }

    pub fn expanded(&self, margin: f64) -> Aabb {
        Aabb::new(
            [self.min[0] - margin, self.min[1] - margin, self.min[2] - margin],
            [self.max[0] + margin, self.max[1] + margin, self.max[2] + margin],
        )
    }

    pub fn corners(&self) -> [Vec3; 8] {
        let mut out = [[0.0; 3]; 8];
        for (i, c) in out.iter_mut().enumerate() {
            for a in 0..3 {
                c[a] = if i >> a & 1 == 0 { self.min[a] } else { self.max[a] };
            }
        }
        out
    }
}

/// Per-axis map `x -> scale * x + offset`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct AxisAffine {
    pub scale: Vec3,
    pub offset: Vec3,
}

impl AxisAffine {
    pub fn identity() -> Self {
        AxisAffine {
            scale: [1.0; 3],
            offset: [0.0; 3],
        }
    }

    pub fn apply(&self, p: Vec3) -> Vec3 {
        [
            self.scale[0] * p[0] + self.offset[0],
            self.scale[1] * p[1] + self.offset[1],
            self.scale[2] * p[2] + self.offset[2],
        ]
    }

    /// Normals transform with the inverse transpose, then get renormalized.
    /// Zero scales are treated as unit scales.
    pub fn apply_normal(&self, n: Vec3) -> Vec3 {
        let mut out = [0.0; 3];
        for a in 0..3 {
            let s = if self.scale[a] == 0.0 { 1.0 } else { self.scale[a] };
            out[a] = n[a] / s;
        }
        let l = norm(out);
        if l > 0.0 {
            [out[0] / l, out[1] / l, out[2] / l]
        } else {
            n
        }
    }
}

/// Map taking the box `src` onto the box `dst`.
///
/// Axes where `src` has zero extent keep scale 1 and align the box centers.
pub fn bbox_affine(src: &Aabb, dst: &Aabb) -> AxisAffine {
    let mut t = AxisAffine::identity();
    let se = src.extent();
    let de = dst.extent();
    let sc = src.center();
    let dc = dst.center();
    for a in 0..3 {
        if se[a] > 0.0 {
            t.scale[a] = de[a] / se[a];
            t.offset[a] = dst.min[a] - t.scale[a] * src.min[a];
        } else {
            t.scale[a] = 1.0;
            t.offset[a] = dc[a] - sc[a];
        }
    }
    t
}

pub type Mat3 = [[f64; 3]; 3];

pub fn mat_mul(a: &Mat3, b: &Mat3) -> Mat3 {
    let mut c = [[0.0; 3]; 3];
    for (i, row) in c.iter_mut().enumerate() {
        for (j, v) in row.iter_mut().enumerate() {
            *v = (0..3).map(|k| a[i][k] * b[k][j]).sum();
        }
    }
    c
}

pub fn mat_vec(m: &Mat3, v: Vec3) -> Vec3 {
    [
        m[0][0] * v[0] + m[0][1] * v[1] + m[0][2] * v[2],
        m[1][0] * v[0] + m[1][1] * v[1] + m[1][2] * v[2],
        m[2][0] * v[0] + m[2][1] * v[1] + m[2][2] * v[2],
    ]
}

pub fn rot_x(t: f64) -> Mat3 {
    let (s, c) = t.sin_cos();
    [[1.0, 0.0, 0.0], [0.0, c, -s], [0.0, s, c]]
}

pub fn rot_y(t: f64) -> Mat3 {
    let (s, c) = t.sin_cos();
    [[c, 0.0, s], [0.0, 1.0, 0.0], [-s, 0.0, c]]
}

pub fn rot_z(t: f64) -> Mat3 {
    let (s, c) = t.sin_cos();
    [[c, -s, 0.0], [s, c, 0.0], [0.0, 0.0, 1.0]]
}
