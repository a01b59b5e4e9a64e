//! Planar primitives shared by the generator, simulator, and planners:
//! poses, rectangular footprints, analytic obstacles, and a boolean
//! occupancy raster with sweep, morphology, contour, and ray queries.

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Tolerance for degenerate-direction and tangency checks.
pub const GEOM_EPS: f64 = 1e-9;

#[derive(Debug, Error, PartialEq)]
pub enum GeometryError {
    #[error("footprint dimensions must be positive, got length={length} width={width}")]
    InvalidFootprint { length: f64, width: f64 },
    #[error("grid resolution must be positive, got {0}")]
    InvalidResolution(f64),
    #[error("sweep requires at least one pose")]
    EmptySweep,
}

// ---------------------------------------------------------------------------
// Vectors and poses
// ---------------------------------------------------------------------------

/// 2D point / vector in meters.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Vec2 {
    pub x: f64,
    pub y: f64,
}

impl Vec2 {
    pub const ZERO: Vec2 = Vec2 { x: 0.0, y: 0.0 };

    pub fn new(x: f64, y: f64) -> Self {
        Vec2 { x, y }
    }

    pub fn dot(self, o: Vec2) -> f64 {
        self.x * o.x + self.y * o.y
    }

    /// z-component of the 3D cross product.
    pub fn cross(self, o: Vec2) -> f64 {
        self.x * o.y - self.y * o.x
    }

    pub fn norm(self) -> f64 {
        self.x.hypot(self.y)
    }

    pub fn norm_sq(self) -> f64 {
        self.x * self.x + self.y * self.y
    }

    pub fn dist(self, o: Vec2) -> f64 {
        (self - o).norm()
    }

    /// Counterclockwise perpendicular.
    pub fn perp(self) -> Vec2 {
        Vec2::new(-self.y, self.x)
    }

    pub fn rotated(self, angle: f64) -> Vec2 {
        let (s, c) = angle.sin_cos();
        Vec2::new(c * self.x - s * self.y, s * self.x + c * self.y)
    }

    pub fn normalized(self) -> Vec2 {
        let n = self.norm();
        if n < GEOM_EPS {
            Vec2::ZERO
        } else {
            self * (1.0 / n)
        }
    }

    pub fn angle(self) -> f64 {
        self.y.atan2(self.x)
    }
}

impl std::ops::Add for Vec2 {
    type Output = Vec2;
    fn add(self, o: Vec2) -> Vec2 {
        Vec2::new(self.x + o.x, self.y + o.y)
    }
}

impl std::ops::Sub for Vec2 {
    type Output = Vec2;
    fn sub(self, o: Vec2) -> Vec2 {
        Vec2::new(self.x - o.x, self.y - o.y)
    }
}

impl std::ops::Mul<f64> for Vec2 {
    type Output = Vec2;
    fn mul(self, s: f64) -> Vec2 {
        Vec2::new(self.x * s, self.y * s)
    }
}

impl std::ops::Neg for Vec2 {
    type Output = Vec2;
    fn neg(self) -> Vec2 {
        Vec2::new(-self.x, -self.y)
    }
}

/// Normalize an angle into (-pi, pi].
pub fn normalize_angle(a: f64) -> f64 {
    let two_pi = 2.0 * std::f64::consts::PI;
    let r = a.rem_euclid(two_pi);
    if r > std::f64::consts::PI {
        r - two_pi
    } else {
        r
    }
}

/// Planar pose: position in meters, heading in radians within (-pi, pi].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Pose2D {
    pub x: f64,
    pub y: f64,
    pub theta: f64,
}

impl Pose2D {
    pub fn new(x: f64, y: f64, theta: f64) -> Self {
        Pose2D {
            x,
            y,
            theta: normalize_angle(theta),
        }
    }

    pub fn position(&self) -> Vec2 {
        Vec2::new(self.x, self.y)
    }

    /// Unit heading vector.
    pub fn heading(&self) -> Vec2 {
        Vec2::new(self.theta.cos(), self.theta.sin())
    }

    /// Express a world point in this pose's frame.
    pub fn to_local(&self, p: Vec2) -> Vec2 {
        (p - self.position()).rotated(-self.theta)
    }

    /// Express a local point in the world frame.
    pub fn to_world(&self, p: Vec2) -> Vec2 {
        self.position() + p.rotated(self.theta)
    }

    pub fn translated(&self, offset: Vec2) -> Pose2D {
        Pose2D::new(self.x + offset.x, self.y + offset.y, self.theta)
    }
}

// ---------------------------------------------------------------------------
// Footprints
// ---------------------------------------------------------------------------

/// Axis-aligned rectangle in the vehicle frame. `ref_offset` is the signed
/// distance from the pose reference point (rear axle) forward to the
/// rectangle center.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FootprintRect {
    pub length: f64,
    pub width: f64,
    pub ref_offset: f64,
}

impl FootprintRect {
    pub fn new(length: f64, width: f64, ref_offset: f64) -> Result<Self, GeometryError> {
        if length <= 0.0 || width <= 0.0 || !length.is_finite() || !width.is_finite() {
            return Err(GeometryError::InvalidFootprint { length, width });
        }
        Ok(FootprintRect {
            length,
            width,
            ref_offset,
        })
    }

    /// Grow the rectangle by `margin` on every side.
    pub fn inflated(&self, margin: f64) -> FootprintRect {
        FootprintRect {
            length: self.length + 2.0 * margin,
            width: self.width + 2.0 * margin,
            ref_offset: self.ref_offset,
        }
    }

    /// Center of the rectangle in the world frame.
    pub fn center(&self, pose: &Pose2D) -> Vec2 {
        pose.position() + pose.heading() * self.ref_offset
    }

    /// Radius of the smallest circle around the rectangle center.
    pub fn circumradius(&self) -> f64 {
        (self.length * 0.5).hypot(self.width * 0.5)
    }

    /// Radius of the largest circle inside the rectangle.
    pub fn inradius(&self) -> f64 {
        (self.length * 0.5).min(self.width * 0.5)
    }

    /// Radius of the smallest circle around the pose reference point.
    pub fn outer_radius(&self) -> f64 {
        (self.length * 0.5 + self.ref_offset.abs()).hypot(self.width * 0.5)
    }
}

/// Corners of the footprint at `pose`, counterclockwise.
pub fn footprint_polygon(pose: &Pose2D, footprint: &FootprintRect) -> [Vec2; 4] {
    let c = footprint.center(pose);
    let u = pose.heading();
    let v = u.perp();
    let hl = footprint.length * 0.5;
    let hw = footprint.width * 0.5;
    [
        c + u * hl - v * hw,
        c + u * hl + v * hw,
        c - u * hl + v * hw,
        c - u * hl - v * hw,
    ]
}

fn point_in_convex_ccw(p: Vec2, poly: &[Vec2]) -> bool {
    for i in 0..poly.len() {
        let a = poly[i];
        let b = poly[(i + 1) % poly.len()];
        if (b - a).cross(p - a) < 0.0 {
            return false;
        }
    }
    true
}

// ---------------------------------------------------------------------------
// Obstacles
// ---------------------------------------------------------------------------

/// Analytic obstacle primitives realized by the generator.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum Obstacle {
    /// Thin box centered on the segment `p0..p1`, full width `thickness`.
    Wall { p0: Vec2, p1: Vec2, thickness: f64 },
    /// Circular post.
    Cylinder { center: Vec2, radius: f64 },
}

impl Obstacle {
    /// Center and radius of a bounding circle, for quick rejection.
    pub fn bounding_circle(&self) -> (Vec2, f64) {
        match self {
            Obstacle::Wall { p0, p1, thickness } => {
                let c = (*p0 + *p1) * 0.5;
                (c, p0.dist(*p1) * 0.5 + thickness * 0.5)
            }
            Obstacle::Cylinder { center, radius } => (*center, *radius),
        }
    }

    pub fn translated(&self, offset: Vec2) -> Obstacle {
        match self {
            Obstacle::Wall { p0, p1, thickness } => Obstacle::Wall {
                p0: *p0 + offset,
                p1: *p1 + offset,
                thickness: *thickness,
            },
            Obstacle::Cylinder { center, radius } => Obstacle::Cylinder {
                center: *center + offset,
                radius: *radius,
            },
        }
    }

    pub fn contains(&self, p: Vec2) -> bool {
        match self {
            Obstacle::Wall { p0, p1, thickness } => {
                let axis = (*p1 - *p0).normalized();
                let rel = p - (*p0 + *p1) * 0.5;
                let half_len = p0.dist(*p1) * 0.5;
                rel.dot(axis).abs() <= half_len && rel.cross(axis).abs() <= thickness * 0.5
            }
            Obstacle::Cylinder { center, radius } => p.dist(*center) <= *radius,
        }
    }
}

/// Oriented box described by center, unit axes, and half extents.
#[derive(Debug, Clone, Copy)]
struct Obb {
    center: Vec2,
    axis: Vec2,
    half_len: f64,
    half_wid: f64,
}

impl Obb {
    fn of_wall(p0: Vec2, p1: Vec2, thickness: f64) -> Obb {
        let d = p1 - p0;
        let len = d.norm();
        let axis = if len < GEOM_EPS {
            Vec2::new(1.0, 0.0)
        } else {
            d * (1.0 / len)
        };
        Obb {
            center: (p0 + p1) * 0.5,
            axis,
            half_len: len * 0.5,
            half_wid: thickness * 0.5,
        }
    }

    fn of_footprint(pose: &Pose2D, footprint: &FootprintRect) -> Obb {
        Obb {
            center: footprint.center(pose),
            axis: pose.heading(),
            half_len: footprint.length * 0.5,
            half_wid: footprint.width * 0.5,
        }
    }

    fn axes(&self) -> [Vec2; 2] {
        [self.axis, self.axis.perp()]
    }

    fn extents(&self) -> [f64; 2] {
        [self.half_len, self.half_wid]
    }

    /// Signed distance from a point: negative inside.
    fn signed_distance(&self, p: Vec2) -> f64 {
        let rel = p - self.center;
        let dx = rel.dot(self.axis).abs() - self.half_len;
        let dy = rel.dot(self.axis.perp()).abs() - self.half_wid;
        if dx > 0.0 || dy > 0.0 {
            dx.max(0.0).hypot(dy.max(0.0))
        } else {
            dx.max(dy)
        }
    }

    /// Projection radius onto a unit direction.
    fn projected_radius(&self, dir: Vec2) -> f64 {
        self.half_len * self.axis.dot(dir).abs() + self.half_wid * self.axis.perp().dot(dir).abs()
    }

    /// Largest separation over the SAT axes of both boxes; positive means
    /// disjoint, zero or negative means contact or overlap.
    fn separation(&self, other: &Obb) -> f64 {
        let mut best = f64::NEG_INFINITY;
        let delta = other.center - self.center;
        for axis in self.axes().into_iter().chain(other.axes()) {
            let gap =
                delta.dot(axis).abs() - self.projected_radius(axis) - other.projected_radius(axis);
            best = best.max(gap);
        }
        best
    }

    fn collides_circle(&self, center: Vec2, radius: f64) -> bool {
        self.signed_distance(center) <= radius
    }
}

// ---------------------------------------------------------------------------
// Collision and penetration queries
// ---------------------------------------------------------------------------

/// True when the footprint at `pose` touches or overlaps any obstacle.
/// Boundary contact counts as a collision.
pub fn footprint_collides(pose: &Pose2D, footprint: &FootprintRect, obstacles: &[Obstacle]) -> bool {
    let body = Obb::of_footprint(pose, footprint);
    let reach = footprint.circumradius();
    for obstacle in obstacles {
        let (c, r) = obstacle.bounding_circle();
        if c.dist(body.center) > reach + r + GEOM_EPS {
            continue;
        }
        let hit = match obstacle {
            Obstacle::Wall { p0, p1, thickness } => {
                body.separation(&Obb::of_wall(*p0, *p1, *thickness)) <= 0.0
            }
            Obstacle::Cylinder { center, radius } => body.collides_circle(*center, *radius),
        };
        if hit {
            return true;
        }
    }
    false
}

/// Worst-case penetration depth of the footprint into any obstacle, in
/// meters. Non-positive when there is no overlap.
pub fn footprint_penetration(
    pose: &Pose2D,
    footprint: &FootprintRect,
    obstacles: &[Obstacle],
) -> f64 {
    let body = Obb::of_footprint(pose, footprint);
    let mut worst = f64::NEG_INFINITY;
    for obstacle in obstacles {
        let depth = match obstacle {
            Obstacle::Wall { p0, p1, thickness } => {
                -body.separation(&Obb::of_wall(*p0, *p1, *thickness))
            }
            Obstacle::Cylinder { center, radius } => radius - body.signed_distance(*center),
        };
        worst = worst.max(depth);
    }
    worst
}

// ---------------------------------------------------------------------------
// Ray casting
// ---------------------------------------------------------------------------

fn slab_interval(p: f64, d: f64, half: f64) -> Option<(f64, f64)> {
    if d.abs() < 1e-15 {
        if p.abs() > half {
            None
        } else {
            Some((f64::NEG_INFINITY, f64::INFINITY))
        }
    } else {
        let t0 = (-half - p) / d;
        let t1 = (half - p) / d;
        Some((t0.min(t1), t0.max(t1)))
    }
}

fn ray_obb(origin: Vec2, dir: Vec2, obb: &Obb) -> Option<f64> {
    let rel = origin - obb.center;
    let axes = obb.axes();
    let ext = obb.extents();
    let mut t_min = 0.0f64;
    let mut t_max = f64::INFINITY;
    for k in 0..2 {
        let (lo, hi) = slab_interval(rel.dot(axes[k]), dir.dot(axes[k]), ext[k])?;
        t_min = t_min.max(lo);
        t_max = t_max.min(hi);
        if t_min > t_max {
            return None;
        }
    }
    Some(t_min)
}

fn ray_circle(origin: Vec2, dir: Vec2, center: Vec2, radius: f64) -> Option<f64> {
    let oc = origin - center;
    let b = oc.dot(dir);
    let c = oc.norm_sq() - radius * radius;
    let disc = b * b - c;
    if disc < 0.0 {
        return None;
    }
    let s = disc.sqrt();
    let t = -b - s;
    if t >= 0.0 {
        Some(t)
    } else {
        let t = -b + s;
        if t >= 0.0 {
            Some(t)
        } else {
            None
        }
    }
}

/// Distance from `origin` along `angle` to the first obstacle surface,
/// saturated at `d_max`.
pub fn raycast(origin: Vec2, angle: f64, obstacles: &[Obstacle], d_max: f64) -> f64 {
    let dir = Vec2::new(angle.cos(), angle.sin());
    let mut best = d_max;
    for obstacle in obstacles {
        let (c, r) = obstacle.bounding_circle();
        let rel = c - origin;
        // Quick rejection: bounding circle behind the ray or farther than the
        // current best hit, or farther from the ray line than its radius.
        let along = rel.dot(dir);
        if along - r > best || along + r < 0.0 || rel.cross(dir).abs() > r + GEOM_EPS {
            continue;
        }
        let t = match obstacle {
            Obstacle::Wall { p0, p1, thickness } => {
                ray_obb(origin, dir, &Obb::of_wall(*p0, *p1, *thickness))
            }
            Obstacle::Cylinder { center, radius } => ray_circle(origin, dir, *center, *radius),
        };
        if let Some(t) = t {
            if t < best {
                best = t;
            }
        }
    }
    best
}

// ---------------------------------------------------------------------------
// Occupancy grid
// ---------------------------------------------------------------------------

/// Boolean occupancy raster. `origin` is the world position of the minimum
/// corner of cell (0, 0); cell (ix, iy) covers
/// `[origin + (ix, iy) * resolution, origin + (ix+1, iy+1) * resolution)`.
#[derive(Debug, Clone, PartialEq)]
pub struct OccupancyGrid {
    pub origin: Vec2,
    pub resolution: f64,
    pub width: usize,
    pub height: usize,
    cells: Vec<bool>,
}

impl OccupancyGrid {
    pub fn new(
        origin: Vec2,
        resolution: f64,
        width: usize,
        height: usize,
    ) -> Result<Self, GeometryError> {
        if resolution <= 0.0 || !resolution.is_finite() {
            return Err(GeometryError::InvalidResolution(resolution));
        }
        Ok(OccupancyGrid {
            origin,
            resolution,
            width,
            height,
            cells: vec![false; width * height],
        })
    }

    fn index(&self, ix: i64, iy: i64) -> Option<usize> {
        if ix < 0 || iy < 0 || ix >= self.width as i64 || iy >= self.height as i64 {
            None
        } else {
            Some(iy as usize * self.width + ix as usize)
        }
    }

    /// Occupancy of a cell; anything outside the bounds reports occupied.
    pub fn occupied(&self, ix: i64, iy: i64) -> bool {
        match self.index(ix, iy) {
            Some(i) => self.cells[i],
            None => true,
        }
    }

    /// Occupancy of a cell treating out-of-bounds as free; used by contour
    /// extraction where the raster margin is free by construction.
    pub fn occupied_or_free_outside(&self, ix: i64, iy: i64) -> bool {
        self.index(ix, iy).map_or(false, |i| self.cells[i])
    }

    pub fn set(&mut self, ix: i64, iy: i64, value: bool) {
        if let Some(i) = self.index(ix, iy) {
            self.cells[i] = value;
        }
    }

    pub fn cell_of(&self, p: Vec2) -> (i64, i64) {
        (
            ((p.x - self.origin.x) / self.resolution).floor() as i64,
            ((p.y - self.origin.y) / self.resolution).floor() as i64,
        )
    }

    /// Occupancy at a world point; outside the bounds reports occupied.
    pub fn occupied_at(&self, p: Vec2) -> bool {
        let (ix, iy) = self.cell_of(p);
        self.occupied(ix, iy)
    }

    pub fn cell_center(&self, ix: i64, iy: i64) -> Vec2 {
        Vec2::new(
            self.origin.x + (ix as f64 + 0.5) * self.resolution,
            self.origin.y + (iy as f64 + 0.5) * self.resolution,
        )
    }

    pub fn occupied_count(&self) -> usize {
        self.cells.iter().filter(|&&c| c).count()
    }

    /// True when every occupied cell of `other` is occupied here. Both grids
    /// must share the resolution; cells are compared in world coordinates.
    pub fn covers(&self, other: &OccupancyGrid) -> bool {
        for iy in 0..other.height as i64 {
            for ix in 0..other.width as i64 {
                if other.occupied(ix, iy) && !self.occupied_at(other.cell_center(ix, iy)) {
                    return false;
                }
            }
        }
        true
    }

    fn morphology(&self, dilate: bool) -> OccupancyGrid {
        let mut out = self.clone();
        for iy in 0..self.height as i64 {
            for ix in 0..self.width as i64 {
                let mut any = false;
                let mut all = true;
                for dy in -1..=1i64 {
                    for dx in -1..=1i64 {
                        // Treat outside as free so dilation never grows walls
                        // inward from the raster margin.
                        let occ = self.occupied_or_free_outside(ix + dx, iy + dy);
                        any |= occ;
                        all &= occ;
                    }
                }
                out.set(ix, iy, if dilate { any } else { all });
            }
        }
        out
    }

    pub fn dilated(&self) -> OccupancyGrid {
        self.morphology(true)
    }

    pub fn eroded(&self) -> OccupancyGrid {
        self.morphology(false)
    }

    /// Morphological closing (dilate then erode) to seal sub-cell cracks
    /// before contour extraction.
    pub fn closed(&self) -> OccupancyGrid {
        self.dilated().eroded()
    }

    /// Mark every cell whose center lies inside the convex polygon.
    pub fn fill_convex(&mut self, poly: &[Vec2]) {
        let min_x = poly.iter().map(|p| p.x).fold(f64::INFINITY, f64::min);
        let max_x = poly.iter().map(|p| p.x).fold(f64::NEG_INFINITY, f64::max);
        let min_y = poly.iter().map(|p| p.y).fold(f64::INFINITY, f64::min);
        let max_y = poly.iter().map(|p| p.y).fold(f64::NEG_INFINITY, f64::max);
        let (ix0, iy0) = self.cell_of(Vec2::new(min_x, min_y));
        let (ix1, iy1) = self.cell_of(Vec2::new(max_x, max_y));
        for iy in iy0..=iy1 {
            for ix in ix0..=ix1 {
                if self.index(ix, iy).is_some()
                    && point_in_convex_ccw(self.cell_center(ix, iy), poly)
                {
                    self.set(ix, iy, true);
                }
            }
        }
    }
}

/// Cells whose margin to the swept footprints is kept free around the union.
const SWEEP_MARGIN_CELLS: usize = 3;

/// Union of the footprint placed at every pose, rasterized at `resolution`.
/// The raster bounds cover all footprints plus a free margin.
pub fn sweep_union(
    poses: &[Pose2D],
    footprint: &FootprintRect,
    resolution: f64,
) -> Result<OccupancyGrid, GeometryError> {
    if poses.is_empty() {
        return Err(GeometryError::EmptySweep);
    }
    if resolution <= 0.0 || !resolution.is_finite() {
        return Err(GeometryError::InvalidResolution(resolution));
    }
    let mut min = Vec2::new(f64::INFINITY, f64::INFINITY);
    let mut max = Vec2::new(f64::NEG_INFINITY, f64::NEG_INFINITY);
    for pose in poses {
        for corner in footprint_polygon(pose, footprint) {
            min.x = min.x.min(corner.x);
            min.y = min.y.min(corner.y);
            max.x = max.x.max(corner.x);
            max.y = max.y.max(corner.y);
        }
    }
    let margin = SWEEP_MARGIN_CELLS as f64 * resolution;
    // Snap the origin to a global lattice so sweeps of overlapping pose sets
    // rasterize identically and unions compose cell by cell.
    let origin = Vec2::new(
        ((min.x - margin) / resolution).floor() * resolution,
        ((min.y - margin) / resolution).floor() * resolution,
    );
    let width = ((max.x + margin - origin.x) / resolution).ceil() as usize + 1;
    let height = ((max.y + margin - origin.y) / resolution).ceil() as usize + 1;
    let mut grid = OccupancyGrid::new(origin, resolution, width, height)?;
    for pose in poses {
        grid.fill_convex(&footprint_polygon(pose, footprint));
    }
    Ok(grid)
}

/// Conservative obstacle raster: a cell is occupied when its square
/// intersects any obstacle, so a grid-free footprint is also free against
/// the analytic obstacles.
pub fn rasterize_obstacles(
    obstacles: &[Obstacle],
    min: Vec2,
    max: Vec2,
    resolution: f64,
) -> Result<OccupancyGrid, GeometryError> {
    if resolution <= 0.0 || !resolution.is_finite() {
        return Err(GeometryError::InvalidResolution(resolution));
    }
    let width = ((max.x - min.x) / resolution).ceil() as usize + 1;
    let height = ((max.y - min.y) / resolution).ceil() as usize + 1;
    let mut grid = OccupancyGrid::new(min, resolution, width, height)?;
    let half_cell = resolution * 0.5;
    let cell_radius = half_cell * std::f64::consts::SQRT_2;
    for obstacle in obstacles {
        let (c, r) = obstacle.bounding_circle();
        let reach = r + cell_radius;
        let (ix0, iy0) = grid.cell_of(c - Vec2::new(reach, reach));
        let (ix1, iy1) = grid.cell_of(c + Vec2::new(reach, reach));
        for iy in iy0..=iy1 {
            for ix in ix0..=ix1 {
                if grid.index(ix, iy).is_none() || grid.occupied(ix, iy) {
                    continue;
                }
                let center = grid.cell_center(ix, iy);
                let hit = match obstacle {
                    Obstacle::Wall { p0, p1, thickness } => {
                        let cell = Obb {
                            center,
                            axis: Vec2::new(1.0, 0.0),
                            half_len: half_cell,
                            half_wid: half_cell,
                        };
                        cell.separation(&Obb::of_wall(*p0, *p1, *thickness)) <= 0.0
                    }
                    Obstacle::Cylinder { center: cc, radius } => {
                        let cell = Obb {
                            center,
                            axis: Vec2::new(1.0, 0.0),
                            half_len: half_cell,
                            half_wid: half_cell,
                        };
                        cell.collides_circle(*cc, *radius)
                    }
                };
                if hit {
                    grid.set(ix, iy, true);
                }
            }
        }
    }
    Ok(grid)
}

// ---------------------------------------------------------------------------
// Boundary extraction
// ---------------------------------------------------------------------------

/// Chain of points in world coordinates. Closed polylines implicitly join
/// the last point back to the first.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Polyline {
    pub points: Vec<Vec2>,
    pub closed: bool,
}

impl Polyline {
    pub fn length(&self) -> f64 {
        let mut total = 0.0;
        for w in self.points.windows(2) {
            total += w[0].dist(w[1]);
        }
        if self.closed && self.points.len() > 1 {
            total += self.points[self.points.len() - 1].dist(self.points[0]);
        }
        total
    }

    /// Consecutive segments, including the closing one for loops.
    pub fn segments(&self) -> Vec<(Vec2, Vec2)> {
        let mut out = Vec::new();
        for w in self.points.windows(2) {
            out.push((w[0], w[1]));
        }
        if self.closed && self.points.len() > 2 {
            out.push((self.points[self.points.len() - 1], self.points[0]));
        }
        out
    }
}

fn perpendicular_distance(p: Vec2, a: Vec2, b: Vec2) -> f64 {
    let d = b - a;
    let len = d.norm();
    if len < GEOM_EPS {
        return p.dist(a);
    }
    (d.cross(p - a)).abs() / len
}

fn douglas_peucker(points: &[Vec2], tolerance: f64, keep: &mut Vec<Vec2>) {
    if points.len() < 3 {
        keep.extend_from_slice(&points[..points.len().saturating_sub(1)]);
        return;
    }
    let a = points[0];
    let b = points[points.len() - 1];
    let mut worst = 0.0;
    let mut split = 0;
    for (i, &p) in points.iter().enumerate().skip(1).take(points.len() - 2) {
        let d = perpendicular_distance(p, a, b);
        if d > worst {
            worst = d;
            split = i;
        }
    }
    if worst > tolerance {
        douglas_peucker(&points[..=split], tolerance, keep);
        douglas_peucker(&points[split..], tolerance, keep);
    } else {
        keep.push(a);
    }
}

/// Douglas-Peucker simplification with endpoints preserved.
pub fn simplify_open(points: &[Vec2], tolerance: f64) -> Vec<Vec2> {
    if points.len() < 3 {
        return points.to_vec();
    }
    let mut keep = Vec::new();
    douglas_peucker(points, tolerance, &mut keep);
    keep.push(points[points.len() - 1]);
    keep
}

/// Simplify a closed loop, anchoring at the four axis-extreme vertices so
/// that small loops keep their extent and no loop ever collapses.
pub fn simplify_closed(points: &[Vec2], tolerance: f64) -> Vec<Vec2> {
    if points.len() <= 4 {
        return points.to_vec();
    }
    let mut anchors = [0usize; 4];
    for (i, p) in points.iter().enumerate() {
        if p.x < points[anchors[0]].x {
            anchors[0] = i;
        }
        if p.x > points[anchors[1]].x {
            anchors[1] = i;
        }
        if p.y < points[anchors[2]].y {
            anchors[2] = i;
        }
        if p.y > points[anchors[3]].y {
            anchors[3] = i;
        }
    }
    let mut anchors = anchors.to_vec();
    anchors.sort_unstable();
    anchors.dedup();
    let mut out = Vec::new();
    for k in 0..anchors.len() {
        let from = anchors[k];
        let to = anchors[(k + 1) % anchors.len()];
        let mut arc = Vec::new();
        let mut i = from;
        loop {
            arc.push(points[i]);
            if i == to {
                break;
            }
            i = (i + 1) % points.len();
        }
        let simple = simplify_open(&arc, tolerance);
        out.extend_from_slice(&simple[..simple.len() - 1]);
    }
    out
}

/// Trace the free/occupied interface of the grid as closed polylines with
/// the occupied side on the left (outer loops counterclockwise, holes
/// clockwise), then simplify with a one-cell tolerance. Diagonally touching
/// occupied cells are treated as connected.
pub fn extract_boundary(grid: &OccupancyGrid) -> Vec<Polyline> {
    use std::collections::HashMap;

    // Directed boundary edges between lattice corners, occupied cell on the
    // left of travel. Corner (i, j) is the minimum corner of cell (i, j).
    #[derive(Clone, Copy)]
    struct Edge {
        to: (i64, i64),
        used: bool,
    }
    let mut edges: HashMap<(i64, i64), Vec<Edge>> = HashMap::new();
    let mut push = |from: (i64, i64), to: (i64, i64)| {
        edges.entry(from).or_default().push(Edge { to, used: false });
    };
    for iy in 0..grid.height as i64 {
        for ix in 0..grid.width as i64 {
            if !grid.occupied_or_free_outside(ix, iy) {
                continue;
            }
            if !grid.occupied_or_free_outside(ix, iy - 1) {
                push((ix, iy), (ix + 1, iy));
            }
            if !grid.occupied_or_free_outside(ix + 1, iy) {
                push((ix + 1, iy), (ix + 1, iy + 1));
            }
            if !grid.occupied_or_free_outside(ix, iy + 1) {
                push((ix + 1, iy + 1), (ix, iy + 1));
            }
            if !grid.occupied_or_free_outside(ix - 1, iy) {
                push((ix, iy + 1), (ix, iy));
            }
        }
    }

    let mut loops = Vec::new();
    let starts: Vec<(i64, i64)> = {
        let mut s: Vec<_> = edges.keys().copied().collect();
        s.sort_unstable();
        s
    };
    for start in starts {
        loop {
            let first = {
                let outgoing = edges.get_mut(&start).unwrap();
                match outgoing.iter_mut().find(|e| !e.used) {
                    Some(e) => {
                        e.used = true;
                        e.to
                    }
                    None => break,
                }
            };
            let mut corners = vec![start, first];
            let mut prev = start;
            let mut here = first;
            while here != start {
                let incoming = (here.0 - prev.0, here.1 - prev.1);
                let outgoing = edges.get_mut(&here).expect("boundary edge chain broken");
                // At saddle corners prefer the right turn, which merges
                // diagonally touching occupied regions into one contour.
                let mut pick = None;
                let mut best = i32::MIN;
                for (i, e) in outgoing.iter().enumerate() {
                    if e.used {
                        continue;
                    }
                    let dir = (e.to.0 - here.0, e.to.1 - here.1);
                    let cross = incoming.0 * dir.1 - incoming.1 * dir.0;
                    let rank = -cross as i32; // right turn first, then straight, then left
                    if rank > best {
                        best = rank;
                        pick = Some(i);
                    }
                }
                let i = pick.expect("boundary walk dead-ended");
                outgoing[i].used = true;
                prev = here;
                here = outgoing[i].to;
                corners.push(here);
            }
            corners.pop(); // drop the repeated start corner
            let world: Vec<Vec2> = corners
                .iter()
                .map(|&(ix, iy)| {
                    Vec2::new(
                        grid.origin.x + ix as f64 * grid.resolution,
                        grid.origin.y + iy as f64 * grid.resolution,
                    )
                })
                .collect();
            loops.push(Polyline {
                points: simplify_closed(&world, grid.resolution),
                closed: true,
            });
        }
    }
    loops
}
