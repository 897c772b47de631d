//! Z-buffer depth rendering of triangle meshes.
//!
//! Pixels are sampled at their centres. A centre lying exactly on an edge is
//! owned by the triangle for which that edge is a top or left edge, so
//! adjacent triangles never both claim it. Depth is the camera-frame `z`,
//! interpolated perspective-correctly (barycentric `1/z`). Triangles with a
//! vertex at or in front of the near plane are dropped whole.

use std::fs;
use std::io::{BufRead, BufReader, Read, Write};
use std::path::Path;

use crate::body_model::Mesh;
use crate::camera::{BBox, Extrinsics, Intrinsics};
use crate::error::{Error, Result};
use crate::rotation::Vec3;

pub const NEAR_PLANE: f64 = 1e-3;

#[derive(Clone, Debug, PartialEq)]
pub struct DepthMap {
    pub width: u32,
    pub height: u32,
    /// Row-major, meters; `f64::INFINITY` marks background.
    pub depth: Vec<f64>,
}

impl DepthMap {
    pub fn background(width: u32, height: u32) -> Self {
        DepthMap {
            width,
            height,
            depth: vec![f64::INFINITY; width as usize * height as usize],
        }
    }

    #[inline]
    pub fn get(&self, x: u32, y: u32) -> f64 {
        self.depth[y as usize * self.width as usize + x as usize]
    }

    #[inline]
    pub fn set(&mut self, x: u32, y: u32, z: f64) {
        self.depth[y as usize * self.width as usize + x as usize] = z;
    }

    pub fn is_covered(&self, x: u32, y: u32) -> bool {
        self.get(x, y).is_finite()
    }

    pub fn covered_count(&self) -> usize {
        self.depth.iter().filter(|d| d.is_finite()).count()
    }

    pub fn validate(&self) -> Result<()> {
        if self.depth.len() != self.width as usize * self.height as usize {
            return Err(Error::Dimension(format!(
                "depth buffer has {} entries for a {}x{} map",
                self.depth.len(),
                self.width,
                self.height
            )));
        }
        if let Some(i) = self.depth.iter().position(|&d| !(d > 0.0)) {
            return Err(Error::Invariant(format!("depth entry {i} is not positive")));
        }
        Ok(())
    }
}

fn camera_vertices(mesh: &Mesh, ext: &Extrinsics, t_b: &Vec3) -> Vec<Vec3> {
    let rot = ext.rotation();
    mesh.vertices.iter().map(|v| rot * v - t_b).collect()
}

#[inline]
fn edge(a: [f64; 2], b: [f64; 2], p: [f64; 2]) -> f64 {
    (b[0] - a[0]) * (p[1] - a[1]) - (b[1] - a[1]) * (p[0] - a[0])
}

/// Whether a centre lying exactly on edge `a -> b` belongs to the triangle,
/// given the triangle interior has positive edge values.
#[inline]
fn is_top_left(a: [f64; 2], b: [f64; 2]) -> bool {
    let dx = b[0] - a[0];
    let dy = b[1] - a[1];
    dy < 0.0 || (dy == 0.0 && dx > 0.0)
}

#[inline]
fn passes(e: f64, a: [f64; 2], b: [f64; 2]) -> bool {
    e > 0.0 || (e == 0.0 && is_top_left(a, b))
}

/// Screen triangle with positive orientation, plus the camera depths in the
/// same vertex order.
fn screen_triangle(intr: &Intrinsics, cam: [Vec3; 3]) -> Option<([[f64; 2]; 3], [f64; 3])> {
    if cam.iter().any(|p| p.z <= NEAR_PLANE) {
        return None;
    }
    let mut s = cam.map(|p| intr.project_camera_point(&p));
    let mut z = cam.map(|p| p.z);
    let area = edge(s[0], s[1], s[2]);
    if area == 0.0 || !area.is_finite() {
        return None;
    }
    if area < 0.0 {
        s.swap(1, 2);
        z.swap(1, 2);
    }
    Some((s, z))
}

/// Renders per-pixel camera-frame depth of `mesh`.
pub fn render_depth(mesh: &Mesh, intr: &Intrinsics, ext: &Extrinsics, t_b: &Vec3) -> Result<DepthMap> {
    if intr.width == 0 || intr.height == 0 {
        return Err(Error::InvalidArgument("cannot render a zero-size image".into()));
    }
    let cam = camera_vertices(mesh, ext, t_b);
    let mut out = DepthMap::background(intr.width, intr.height);
    let (w, h) = (intr.width as f64, intr.height as f64);

    for face in mesh.faces.iter() {
        let Some((s, z)) = screen_triangle(intr, face.map(|i| cam[i])) else {
            continue;
        };
        let area = edge(s[0], s[1], s[2]);
        let min_x = s.iter().map(|p| p[0]).fold(f64::INFINITY, f64::min);
        let max_x = s.iter().map(|p| p[0]).fold(f64::NEG_INFINITY, f64::max);
        let min_y = s.iter().map(|p| p[1]).fold(f64::INFINITY, f64::min);
        let max_y = s.iter().map(|p| p[1]).fold(f64::NEG_INFINITY, f64::max);
        if max_x < 0.0 || max_y < 0.0 || min_x > w || min_y > h {
            continue;
        }
        let x0 = (min_x - 0.5).floor().max(0.0) as u32;
        let x1 = ((max_x - 0.5).ceil().min(w - 1.0)).max(0.0) as u32;
        let y0 = (min_y - 0.5).floor().max(0.0) as u32;
        let y1 = ((max_y - 0.5).ceil().min(h - 1.0)).max(0.0) as u32;
        for py in y0..=y1 {
            for px in x0..=x1 {
                let p = [px as f64 + 0.5, py as f64 + 0.5];
                let e0 = edge(s[1], s[2], p);
                let e1 = edge(s[2], s[0], p);
                let e2 = edge(s[0], s[1], p);
                if !(passes(e0, s[1], s[2]) && passes(e1, s[2], s[0]) && passes(e2, s[0], s[1])) {
                    continue;
                }
                let inv_z = (e0 / z[0] + e1 / z[1] + e2 / z[2]) / area;
                let depth = 1.0 / inv_z;
                if depth < out.get(px, py) {
                    out.set(px, py, depth);
                }
            }
        }
    }
    Ok(out)
}

/// Brute-force reference renderer: casts one ray per pixel centre against
/// every triangle (Moller-Trumbore). Intended for tests; O(pixels x faces).
pub fn render_depth_oracle(mesh: &Mesh, intr: &Intrinsics, ext: &Extrinsics, t_b: &Vec3) -> Result<DepthMap> {
    if intr.width == 0 || intr.height == 0 {
        return Err(Error::InvalidArgument("cannot render a zero-size image".into()));
    }
    let cam = camera_vertices(mesh, ext, t_b);
    let mut out = DepthMap::background(intr.width, intr.height);
    let tris: Vec<[Vec3; 3]> = mesh
        .faces
        .iter()
        .map(|f| f.map(|i| cam[i]))
        .filter(|t| t.iter().all(|p| p.z > NEAR_PLANE))
        .collect();

    for py in 0..intr.height {
        for px in 0..intr.width {
            let dir = intr.ray(px as f64 + 0.5, py as f64 + 0.5);
            let mut best = f64::INFINITY;
            for tri in &tris {
                if let Some(t) = ray_triangle(intr, &dir, tri, [px as f64 + 0.5, py as f64 + 0.5]) {
                    best = best.min(t);
                }
            }
            out.set(px, py, best);
        }
    }
    Ok(out)
}

const EDGE_EPS: f64 = 1e-10;

/// Ray from the camera origin along `dir` (unit depth); returns the hit depth.
fn ray_triangle(intr: &Intrinsics, dir: &Vec3, tri: &[Vec3; 3], pixel: [f64; 2]) -> Option<f64> {
    let e1 = tri[1] - tri[0];
    let e2 = tri[2] - tri[0];
    let pvec = dir.cross(&e2);
    let det = e1.dot(&pvec);
    if det == 0.0 {
        return None;
    }
    let inv = 1.0 / det;
    let tvec = -tri[0];
    let u = tvec.dot(&pvec) * inv;
    let qvec = tvec.cross(&e1);
    let v = dir.dot(&qvec) * inv;
    let w = 1.0 - u - v;
    let closest = u.min(v).min(w);
    if closest < -EDGE_EPS {
        return None;
    }
    if closest <= EDGE_EPS {
        // Exactly on an edge: defer to the shared ownership rule in screen space.
        let (s, _) = screen_triangle(intr, *tri)?;
        let ok = passes(edge(s[1], s[2], pixel), s[1], s[2])
            && passes(edge(s[2], s[0], pixel), s[2], s[0])
            && passes(edge(s[0], s[1], pixel), s[0], s[1]);
        if !ok {
            return None;
        }
    }
    let t = e2.dot(&qvec) * inv;
    (t > 0.0).then_some(t * dir.z)
}

/// Nearest-neighbour resample of a square crop to `out_size x out_size`.
/// Samples outside the source image read as background.
pub fn crop_resize_depth(d: &DepthMap, bbox: &BBox, out_size: u32) -> Result<DepthMap> {
    if out_size == 0 {
        return Err(Error::InvalidArgument("output size must be positive".into()));
    }
    if !(bbox.size > 0.0) {
        return Err(Error::InvalidArgument(format!("crop size must be positive, got {}", bbox.size)));
    }
    let (w, h) = (d.width as f64, d.height as f64);
    let x0 = w / 2.0 + bbox.cx - bbox.size / 2.0;
    let y0 = h / 2.0 + bbox.cy - bbox.size / 2.0;
    if x0 >= w || y0 >= h || x0 + bbox.size <= 0.0 || y0 + bbox.size <= 0.0 {
        return Err(Error::InvalidArgument("crop does not overlap the image".into()));
    }
    let scale = bbox.size / out_size as f64;
    let mut out = DepthMap::background(out_size, out_size);
    for oy in 0..out_size {
        let sy = (y0 + (oy as f64 + 0.5) * scale).floor();
        if sy < 0.0 || sy >= h {
            continue;
        }
        for ox in 0..out_size {
            let sx = (x0 + (ox as f64 + 0.5) * scale).floor();
            if sx < 0.0 || sx >= w {
                continue;
            }
            out.set(ox, oy, d.get(sx as u32, sy as u32));
        }
    }
    Ok(out)
}

/// Writes a single-channel little-endian PFM (rows stored bottom-up).
pub fn write_pfm(d: &DepthMap, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let mut buf = format!("Pf\n{} {}\n-1.0\n", d.width, d.height).into_bytes();
    buf.reserve(d.depth.len() * 4);
    for y in (0..d.height).rev() {
        for x in 0..d.width {
            buf.extend_from_slice(&(d.get(x, y) as f32).to_le_bytes());
        }
    }
    let mut f = fs::File::create(path).map_err(|e| Error::io(path, e))?;
    f.write_all(&buf).map_err(|e| Error::io(path, e))
}

pub fn read_pfm(path: impl AsRef<Path>) -> Result<DepthMap> {
    let path = path.as_ref();
    let ctx = || path.display().to_string();
    let file = fs::File::open(path).map_err(|e| Error::io(path, e))?;
    let mut r = BufReader::new(file);
    let mut line = String::new();
    let mut next_line = |r: &mut BufReader<fs::File>| -> Result<String> {
        line.clear();
        r.read_line(&mut line).map_err(|e| Error::io(path, e))?;
        Ok(line.trim().to_string())
    };
    let magic = next_line(&mut r)?;
    if magic != "Pf" {
        return Err(Error::schema(ctx(), format!("expected single-channel PFM, found header {magic:?}")));
    }
    let dims = next_line(&mut r)?;
    let mut it = dims.split_whitespace().map(str::parse::<u32>);
    let (width, height) = match (it.next(), it.next()) {
        (Some(Ok(w)), Some(Ok(h))) => (w, h),
        _ => return Err(Error::schema(ctx(), format!("bad PFM dimensions {dims:?}"))),
    };
    let scale: f64 = next_line(&mut r)?
        .parse()
        .map_err(|e| Error::schema(ctx(), format!("bad PFM scale: {e}")))?;
    let little = scale < 0.0;
    let mut raw = Vec::new();
    r.read_to_end(&mut raw).map_err(|e| Error::io(path, e))?;
    let n = width as usize * height as usize;
    if raw.len() != 4 * n {
        return Err(Error::schema(ctx(), format!("expected {} bytes of pixel data, found {}", 4 * n, raw.len())));
    }
    let mut out = DepthMap::background(width, height);
    for (i, chunk) in raw.chunks_exact(4).enumerate() {
        let bytes = [chunk[0], chunk[1], chunk[2], chunk[3]];
        let v = if little { f32::from_le_bytes(bytes) } else { f32::from_be_bytes(bytes) };
        let x = (i % width as usize) as u32;
        let y = height - 1 - (i / width as usize) as u32;
        out.set(x, y, v as f64);
    }
    Ok(out)
}
