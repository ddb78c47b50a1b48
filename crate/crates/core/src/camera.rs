//! Pinhole camera: pixel rays and point projection.
//!
//! Camera frame: +z forward, +x right, +y down. Pixel `(u, v)` is continuous;
//! the center of integer pixel `(c, r)` is `(c + 0.5, r + 0.5)`.

use nalgebra::{Matrix3, Vector3};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Ray {
    pub origin: Vector3<f64>,
    /// Unit length.
    pub dir: Vector3<f64>,
}

impl Ray {
    pub fn at(&self, t: f64) -> Vector3<f64> {
        self.origin + self.dir * t
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "CameraFile", into = "CameraFile")]
pub struct PinholeCamera {
    fx: f64,
    fy: f64,
    cx: f64,
    cy: f64,
    width: u32,
    height: u32,
    rotation: Matrix3<f64>,
    translation: Vector3<f64>,
}

impl PinholeCamera {
    /// `rotation` maps camera-frame vectors to world, `translation` is the
    /// camera center in world meters.
    #[allow(clippy::too_many_arguments)]
    pub fn new(
        fx: f64,
        fy: f64,
        cx: f64,
        cy: f64,
        width: u32,
        height: u32,
        rotation: Matrix3<f64>,
        translation: Vector3<f64>,
    ) -> Result<Self> {
        if !(fx.is_finite() && fx > 0.0 && fy.is_finite() && fy > 0.0) {
            return Err(Error::InvalidParameter(format!(
                "focal lengths must be positive, got fx={fx} fy={fy}"
            )));
        }
        if !(cx.is_finite() && cy.is_finite()) {
            return Err(Error::InvalidParameter(
                "principal point must be finite".into(),
            ));
        }
        if width == 0 || height == 0 {
            return Err(Error::InvalidParameter(format!(
                "image size must be positive, got {width}x{height}"
            )));
        }
        if translation.iter().any(|t| !t.is_finite()) {
            return Err(Error::InvalidParameter("translation must be finite".into()));
        }
        let ortho = (rotation.transpose() * rotation - Matrix3::identity()).amax();
        if ortho.is_nan() || ortho > 1e-6 || (rotation.determinant() - 1.0).abs() > 1e-6 {
            return Err(Error::InvalidParameter(
                "rotation must be orthonormal with determinant +1".into(),
            ));
        }
        Ok(Self {
            fx,
            fy,
            cx,
            cy,
            width,
            height,
            rotation,
            translation,
        })
    }

    /// Camera at `eye` looking at `target`, with world `up` projecting to image-up.
    #[allow(clippy::too_many_arguments)]
    pub fn look_at(
        fx: f64,
        fy: f64,
        cx: f64,
        cy: f64,
        width: u32,
        height: u32,
        eye: Vector3<f64>,
        target: Vector3<f64>,
        up: Vector3<f64>,
    ) -> Result<Self> {
        let forward = (target - eye)
            .try_normalize(1e-12)
            .ok_or_else(|| Error::InvalidParameter("eye and target coincide".into()))?;
        let right = forward.cross(&up).try_normalize(1e-12).ok_or_else(|| {
            Error::InvalidParameter("up is parallel to the view direction".into())
        })?;
        let down = forward.cross(&right);
        let rotation = Matrix3::from_columns(&[right, down, forward]);
        Self::new(fx, fy, cx, cy, width, height, rotation, eye)
    }

    pub fn fx(&self) -> f64 {
        self.fx
    }

    pub fn fy(&self) -> f64 {
        self.fy
    }

    pub fn cx(&self) -> f64 {
        self.cx
    }

    pub fn cy(&self) -> f64 {
        self.cy
    }

    pub fn width(&self) -> u32 {
        self.width
    }

    pub fn height(&self) -> u32 {
        self.height
    }

    pub fn rotation(&self) -> &Matrix3<f64> {
        &self.rotation
    }

    /// Camera center in world coordinates.
    pub fn position(&self) -> Vector3<f64> {
        self.translation
    }

    pub fn contains_pixel(&self, u: f64, v: f64) -> bool {
        u >= 0.0 && u < f64::from(self.width) && v >= 0.0 && v < f64::from(self.height)
    }

    /// World ray through a continuous pixel position.
    pub fn pixel_to_ray(&self, u: f64, v: f64) -> Result<Ray> {
        if !self.contains_pixel(u, v) {
            return Err(Error::OutOfRange(format!(
                "pixel ({u}, {v}) outside {}x{} image",
                self.width, self.height
            )));
        }
        let d_cam = Vector3::new((u - self.cx) / self.fx, (v - self.cy) / self.fy, 1.0).normalize();
        Ok(Ray {
            origin: self.translation,
            dir: (self.rotation * d_cam).normalize(),
        })
    }

    /// Ray through the center of integer pixel `(col, row)`.
    pub fn pixel_center_ray(&self, col: u32, row: u32) -> Result<Ray> {
        self.pixel_to_ray(f64::from(col) + 0.5, f64::from(row) + 0.5)
    }

    /// Projects a world point to `(u, v, depth)`; `None` when it is behind the
    /// camera or outside the image.
    pub fn project_point(&self, p: &Vector3<f64>) -> Option<(f64, f64, f64)> {
        let (u, v, depth) = self.project_unbounded(p)?;
        self.contains_pixel(u, v).then_some((u, v, depth))
    }

    /// Like [`project_point`](Self::project_point) without the image-bounds check.
    pub fn project_unbounded(&self, p: &Vector3<f64>) -> Option<(f64, f64, f64)> {
        let pc = self.rotation.transpose() * (p - self.translation);
        if pc.z <= 1e-9 {
            return None;
        }
        Some((
            self.fx * pc.x / pc.z + self.cx,
            self.fy * pc.y / pc.z + self.cy,
            pc.z,
        ))
    }

    /// Row-major 4x4 camera-to-world matrix.
    pub fn cam_to_world(&self) -> [f64; 16] {
        let r = &self.rotation;
        let t = &self.translation;
        [
            r[(0, 0)],
            r[(0, 1)],
            r[(0, 2)],
            t.x,
            r[(1, 0)],
            r[(1, 1)],
            r[(1, 2)],
            t.y,
            r[(2, 0)],
            r[(2, 1)],
            r[(2, 2)],
            t.z,
            0.0,
            0.0,
            0.0,
            1.0,
        ]
    }
}

/// On-disk camera JSON.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CameraFile {
    pub fx: f64,
    pub fy: f64,
    pub cx: f64,
    pub cy: f64,
    pub width: u32,
    pub height: u32,
    pub cam_to_world: Vec<f64>,
}

impl TryFrom<CameraFile> for PinholeCamera {
    type Error = Error;

    fn try_from(f: CameraFile) -> Result<Self> {
        let m = &f.cam_to_world;
        if m.len() != 16 {
            return Err(Error::InvalidParameter(format!(
                "cam_to_world needs 16 numbers, got {}",
                m.len()
            )));
        }
        if m[12..] != [0.0, 0.0, 0.0, 1.0] {
            return Err(Error::InvalidParameter(
                "cam_to_world bottom row must be 0,0,0,1".into(),
            ));
        }
        let rotation = Matrix3::new(m[0], m[1], m[2], m[4], m[5], m[6], m[8], m[9], m[10]);
        let translation = Vector3::new(m[3], m[7], m[11]);
        PinholeCamera::new(
            f.fx,
            f.fy,
            f.cx,
            f.cy,
            f.width,
            f.height,
            rotation,
            translation,
        )
    }
}

impl From<PinholeCamera> for CameraFile {
    fn from(c: PinholeCamera) -> Self {
        CameraFile {
            fx: c.fx,
            fy: c.fy,
            cx: c.cx,
            cy: c.cy,
            width: c.width,
            height: c.height,
            cam_to_world: c.cam_to_world().to_vec(),
        }
    }
}
