//! Nadir range-image simplification.
//!
//! Points are taken into the camera frame with the collinearity rotation
//! (`c = rᵀ (X − X₀)`, camera looking along its −Z axis) and binned by the
//! angles `θx = atan(x/d)`, `θy = atan(y/d)` where `d = −z` is the depth.
//! Each pixel is a conical ray of `angular_resolution` degrees and keeps only
//! the point closest to the projection center.

use crate::cloud::{Matrix3, Point3, PointCloud, Vector3};
use crate::error::{Error, Result};
use crate::par;
use crate::transform::is_rotation;

pub const DEFAULT_ANGULAR_RESOLUTION_DEG: f64 = 0.01;
pub const DEFAULT_HEIGHT_FACTOR: f64 = 5.0;
pub const DEFAULT_BORDER_THRESHOLD: f64 = 0.5;

const EMPTY: u32 = u32::MAX;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RangeCameraParams {
    /// Projection center `X₀ Y₀ Z₀`.
    pub position: Point3,
    /// Collinearity rotation `r`; columns are the camera axes in world frame.
    pub orientation: Matrix3,
    pub angular_resolution_deg: f64,
    pub fov_x_deg: f64,
    pub fov_y_deg: f64,
}

impl RangeCameraParams {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::InvalidParams(m.to_string()));
        if !(self.angular_resolution_deg > 0.0 && self.angular_resolution_deg.is_finite()) {
            return bad("angular resolution must be positive");
        }
        for fov in [self.fov_x_deg, self.fov_y_deg] {
            if !(fov > 0.0 && fov < 180.0) {
                return bad("field of view must lie in (0°, 180°)");
            }
        }
        if !is_rotation(&self.orientation) {
            return bad("orientation is not a rotation");
        }
        if !crate::cloud::is_finite_point(&self.position) {
            return bad("position is not finite");
        }
        Ok(())
    }

    pub fn width(&self) -> usize {
        (self.fov_x_deg / self.angular_resolution_deg).ceil() as usize
    }

    pub fn height(&self) -> usize {
        (self.fov_y_deg / self.angular_resolution_deg).ceil() as usize
    }

    fn resolution_rad(&self) -> f64 {
        self.angular_resolution_deg.to_radians()
    }

    /// Camera-frame coordinates `rᵀ (X − X₀)`.
    pub fn to_camera(&self, p: &Point3) -> Vector3 {
        self.orientation.transpose() * (p - self.position)
    }

    /// Pixel `(col, row)` of a world point, if in front of the camera and
    /// inside the field of view. Pixel edges use the floor convention.
    pub fn pixel_of(&self, p: &Point3) -> Option<(usize, usize)> {
        let (u, v) = self.image_coords(p)?;
        let (col, row) = (u.floor(), v.floor());
        if col < 0.0 || row < 0.0 || col >= self.width() as f64 || row >= self.height() as f64 {
            return None;
        }
        Some((col as usize, row as usize))
    }

    /// Continuous image coordinates in pixel units; the optical axis sits at
    /// `(width/2, height/2)`.
    pub fn image_coords(&self, p: &Point3) -> Option<(f64, f64)> {
        let c = self.to_camera(p);
        let depth = -c.z;
        if !(depth > 0.0) {
            return None;
        }
        let res = self.resolution_rad();
        let u = (c.x / depth).atan() / res + self.width() as f64 / 2.0;
        let v = (c.y / depth).atan() / res + self.height() as f64 / 2.0;
        Some((u, v))
    }

    /// Ground footprint of one pixel at the given range.
    pub fn footprint(&self, range: f64) -> f64 {
        range * self.resolution_rad()
    }
}

/// Camera centered over the cloud at `height_factor` times the largest
/// bounding-box edge above its top, looking straight down, with a field of
/// view that just covers the box: `2·atan((L/2)/(height_factor·L))`.
pub fn default_camera(cloud: &PointCloud) -> Result<RangeCameraParams> {
    camera_for(cloud, DEFAULT_HEIGHT_FACTOR, DEFAULT_ANGULAR_RESOLUTION_DEG)
}

pub fn camera_for(cloud: &PointCloud, height_factor: f64, resolution_deg: f64) -> Result<RangeCameraParams> {
    let bb = cloud.bounding_box().ok_or(Error::EmptyCloud)?;
    let edge = bb.max_edge();
    if !(edge > 0.0) {
        return Err(Error::DegenerateBBox);
    }
    if !(height_factor > 0.0) {
        return Err(Error::InvalidParams("height factor must be positive".into()));
    }
    let c = bb.center();
    let fov = 2.0 * (0.5 / height_factor).atan().to_degrees();
    let params = RangeCameraParams {
        position: Point3::new(c.x, c.y, bb.max.z + height_factor * edge),
        orientation: Matrix3::identity(),
        angular_resolution_deg: resolution_deg,
        fov_x_deg: fov,
        fov_y_deg: fov,
    };
    params.validate()?;
    Ok(params)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum BorderClass {
    None,
    ObjectBorder,
    ShadowBorder,
    Veil,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FilledPixel {
    pub pixel: usize,
    pub source_index: usize,
    pub point: Point3,
    pub range: f64,
}

/// Angular depth buffer. Filled pixels are stored compactly in row-major
/// pixel order; that order is also the point order of [`to_point_cloud`].
#[derive(Debug, Clone)]
pub struct RangeImage {
    width: usize,
    height: usize,
    params: RangeCameraParams,
    range: Vec<f64>,
    slot: Vec<u32>,
    filled: Vec<FilledPixel>,
    scalar: Option<Vec<f64>>,
    normals: Option<Vec<Vector3>>,
    border: Option<Vec<BorderClass>>,
}

impl RangeImage {
    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn params(&self) -> &RangeCameraParams {
        &self.params
    }

    pub fn pixel_count(&self) -> usize {
        self.width * self.height
    }

    /// Per-pixel range; `+∞` for empty pixels.
    pub fn range(&self, pixel: usize) -> f64 {
        self.range[pixel]
    }

    pub fn ranges(&self) -> &[f64] {
        &self.range
    }

    pub fn source_index(&self, pixel: usize) -> Option<usize> {
        self.slot_of(pixel).map(|s| self.filled[s].source_index)
    }

    /// Ordinal of a filled pixel among all filled pixels (its index in
    /// [`to_point_cloud`]'s output).
    pub fn slot_of(&self, pixel: usize) -> Option<usize> {
        let s = self.slot[pixel];
        (s != EMPTY).then_some(s as usize)
    }

    pub fn is_filled(&self, pixel: usize) -> bool {
        self.slot[pixel] != EMPTY
    }

    pub fn filled(&self) -> &[FilledPixel] {
        &self.filled
    }

    pub fn point_at(&self, pixel: usize) -> Option<Point3> {
        self.slot_of(pixel).map(|s| self.filled[s].point)
    }

    pub fn border_classes(&self) -> Option<&[BorderClass]> {
        self.border.as_deref()
    }

    pub fn border(&self, pixel: usize) -> Option<BorderClass> {
        self.border.as_ref().map(|b| b[pixel])
    }

    pub fn pixel(&self, col: usize, row: usize) -> usize {
        row * self.width + col
    }

    pub fn col_row(&self, pixel: usize) -> (usize, usize) {
        (pixel % self.width, pixel / self.width)
    }
}

/// Z-buffer projection. Ties on equal range keep the lower point index.
pub fn project(cloud: &PointCloud, params: &RangeCameraParams) -> Result<RangeImage> {
    params.validate()?;
    let (width, height) = (params.width(), params.height());
    let pixels = width
        .checked_mul(height)
        .filter(|&n| n < EMPTY as usize)
        .ok_or_else(|| Error::InvalidParams(format!("image of {width}×{height} pixels is too large")))?;
    let pts = cloud.points();
    let binned: Vec<Option<(u32, f64)>> = par::map_slice(pts, |p| {
        let (col, row) = params.pixel_of(p)?;
        Some(((row * width + col) as u32, (p - params.position).norm()))
    });

    let mut range = vec![f64::INFINITY; pixels];
    let mut winner = vec![EMPTY; pixels];
    for (i, b) in binned.iter().enumerate() {
        if let Some((px, r)) = *b {
            let px = px as usize;
            if r < range[px] {
                range[px] = r;
                winner[px] = i as u32;
            }
        }
    }
    drop(binned);

    let mut slot = winner;
    let mut filled = Vec::new();
    for (px, s) in slot.iter_mut().enumerate() {
        if *s != EMPTY {
            let i = *s as usize;
            *s = filled.len() as u32;
            filled.push(FilledPixel {
                pixel: px,
                source_index: i,
                point: pts[i],
                range: range[px],
            });
        }
    }
    let scalar = cloud
        .scalar()
        .map(|s| filled.iter().map(|f| s[f.source_index]).collect());
    let normals = cloud
        .normals()
        .map(|n| filled.iter().map(|f| n[f.source_index]).collect());
    Ok(RangeImage {
        width,
        height,
        params: *params,
        range,
        slot,
        filled,
        scalar,
        normals,
        border: None,
    })
}

/// The surviving original points, one per filled pixel, in pixel order.
pub fn to_point_cloud(img: &RangeImage) -> PointCloud {
    let points = img.filled.iter().map(|f| f.point).collect();
    PointCloud::from_parts_unchecked(points, img.scalar.clone(), img.normals.clone())
}

/// Labels range discontinuities. A filled pixel is an object border when a
/// 4-neighbor inside the image is farther by more than `threshold` (empty
/// neighbors count as `+∞`); the far side of such a jump is a shadow border.
pub fn detect_borders(img: &RangeImage, threshold: f64) -> Result<RangeImage> {
    if !(threshold > 0.0 && threshold.is_finite()) {
        return Err(Error::NonPositiveThreshold(threshold));
    }
    let (w, h) = (img.width, img.height);
    let mut labels = vec![BorderClass::None; w * h];
    let mut shadow = Vec::new();
    for f in &img.filled {
        let (col, row) = img.col_row(f.pixel);
        let mut object = false;
        for (dc, dr) in [(-1i64, 0i64), (1, 0), (0, -1), (0, 1)] {
            let (c, r) = (col as i64 + dc, row as i64 + dr);
            if c < 0 || r < 0 || c >= w as i64 || r >= h as i64 {
                continue;
            }
            let q = r as usize * w + c as usize;
            if img.range[q] - f.range > threshold {
                object = true;
                if img.is_filled(q) {
                    shadow.push(q);
                }
            }
        }
        if object {
            labels[f.pixel] = BorderClass::ObjectBorder;
        }
    }
    for q in shadow {
        if labels[q] == BorderClass::None {
            labels[q] = BorderClass::ShadowBorder;
        }
    }
    let mut out = img.clone();
    out.border = Some(labels);
    Ok(out)
}
