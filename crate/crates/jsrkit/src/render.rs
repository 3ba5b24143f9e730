//! Static renderings of invariant bodies: SVG for the plane, OFF meshes for
//! three dimensions.
//!
//! The planar drawing traces the hull boundary through its support-achieving
//! points (exact on vertices and ellipse arcs, chords across flat edges),
//! outlines each generator, marks root elements, and can overlay the polar
//! body. In dimension three the symmetric vertex cloud goes through an
//! incremental convex hull with coplanar-face merging and comes out as an
//! OFF mesh.

use crate::norm::{polar_2d, NormError, Polar2D};
use crate::polytope::{BodyKind, InvariantBody, Payload};
use nalgebra::DVector;
use std::fmt::Write as _;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum RenderError {
    #[error("rendering supports dimensions 2 and 3, got {0}")]
    DimensionMismatch(usize),
    #[error("degenerate geometry: {0}")]
    Degenerate(String),
    #[error(transparent)]
    Polar(#[from] NormError),
}

const SVG_SIZE: f64 = 640.0;
const BOUNDARY_SAMPLES: usize = 720;
const ELLIPSE_OUTLINE: usize = 96;

// ---------------------------------------------------------------------------
// SVG (d = 2)
// ---------------------------------------------------------------------------

fn support_contact(p: &Payload, u: &DVector<f64>) -> (f64, DVector<f64>) {
    match p {
        Payload::Vertex(v) => {
            let d = v.dot(u);
            if d >= 0.0 {
                (d, v.clone())
            } else {
                (-d, -v)
            }
        }
        Payload::Ellipse(e) => {
            let c = e.x.dot(u);
            let s = e.y.dot(u);
            let r = c.hypot(s);
            if r == 0.0 {
                (0.0, DVector::zeros(u.len()))
            } else {
                (r, (&e.x * c + &e.y * s) / r)
            }
        }
    }
}

struct Frame {
    extent: f64,
    scale: f64,
}

impl Frame {
    fn new(extent: f64) -> Frame {
        Frame {
            extent,
            scale: SVG_SIZE / (2.0 * extent),
        }
    }

    fn map(&self, p: &DVector<f64>) -> (f64, f64) {
        (
            (p[0] + self.extent) * self.scale,
            (self.extent - p[1]) * self.scale,
        )
    }

    fn path(&self, pts: &[DVector<f64>], close: bool) -> String {
        let mut s = String::new();
        for (i, p) in pts.iter().enumerate() {
            let (x, y) = self.map(p);
            let _ = write!(s, "{}{x:.4},{y:.4}", if i == 0 { "M" } else { " L" });
        }
        if close {
            s.push_str(" Z");
        }
        s
    }
}

fn ellipse_outline(e: &crate::feasibility::EllipsePair, n: usize) -> Vec<DVector<f64>> {
    (0..n)
        .map(|i| e.point(2.0 * std::f64::consts::PI * i as f64 / n as f64))
        .collect()
}

/// Deterministic SVG 1.1 drawing of a planar body: hull boundary, generator
/// outlines, root elements highlighted, optional polar overlay.
pub fn body_svg(body: &InvariantBody, with_polar: bool) -> Result<String, RenderError> {
    if body.dim != 2 {
        return Err(RenderError::DimensionMismatch(body.dim));
    }

    // Hull boundary through support contacts.
    let mut boundary = Vec::with_capacity(BOUNDARY_SAMPLES);
    for i in 0..BOUNDARY_SAMPLES {
        let t = 2.0 * std::f64::consts::PI * i as f64 / BOUNDARY_SAMPLES as f64;
        let u = DVector::from_column_slice(&[t.cos(), t.sin()]);
        let best = body
            .generators
            .iter()
            .map(|g| support_contact(&g.payload, &u))
            .max_by(|a, b| a.0.partial_cmp(&b.0).unwrap())
            .ok_or_else(|| RenderError::Degenerate("no generators".into()))?;
        boundary.push(best.1);
    }
    boundary.dedup_by(|a, b| (&*a - &*b).norm() < 1e-12);

    let polar = if with_polar {
        Some(polar_2d(body)?)
    } else {
        None
    };

    let mut extent = boundary.iter().map(|p| p.amax()).fold(0.0, f64::max);
    if let Some(p) = &polar {
        extent = p.points().iter().map(|q| q.amax()).fold(extent, f64::max);
    }
    if extent <= 0.0 {
        return Err(RenderError::Degenerate("body has no extent".into()));
    }
    let frame = Frame::new(extent * 1.1);

    let mut svg = String::new();
    let _ = writeln!(svg, r#"<?xml version="1.0" encoding="UTF-8"?>"#);
    let _ = writeln!(
        svg,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{s}" height="{s}" viewBox="0 0 {s} {s}">"#,
        s = SVG_SIZE
    );
    let _ = writeln!(
        svg,
        r#"  <rect width="{s}" height="{s}" fill="white"/>"#,
        s = SVG_SIZE
    );

    // Axes for orientation.
    let (ox, oy) = frame.map(&DVector::from_column_slice(&[0.0, 0.0]));
    let _ = writeln!(
        svg,
        r##"  <path d="M0,{oy:.4} L{s},{oy:.4} M{ox:.4},0 L{ox:.4},{s}" stroke="#dddddd" stroke-width="1"/>"##,
        s = SVG_SIZE
    );

    for g in &body.generators {
        match &g.payload {
            Payload::Vertex(v) => {
                for q in [v.clone(), -v] {
                    let (x, y) = frame.map(&q);
                    let _ = writeln!(
                        svg,
                        r##"  <circle cx="{x:.4}" cy="{y:.4}" r="3" fill="#888888"/>"##
                    );
                }
            }
            Payload::Ellipse(e) => {
                let _ = writeln!(
                    svg,
                    r##"  <path d="{}" fill="none" stroke="#888888" stroke-width="1"/>"##,
                    frame.path(&ellipse_outline(e, ELLIPSE_OUTLINE), true)
                );
            }
        }
    }

    let _ = writeln!(
        svg,
        r#"  <path d="{}" fill="none" stroke="black" stroke-width="2"/>"#,
        frame.path(&boundary, true)
    );

    for (root, &alpha) in body.roots.iter().zip(&body.alphas) {
        for p in &root.elements {
            match p.scaled(alpha) {
                Payload::Vertex(v) => {
                    let (x, y) = frame.map(&v);
                    let _ = writeln!(
                        svg,
                        r#"  <circle class="root" cx="{x:.4}" cy="{y:.4}" r="5" fill="red"/>"#
                    );
                }
                Payload::Ellipse(e) => {
                    let _ = writeln!(
                        svg,
                        r#"  <path class="root" d="{}" fill="none" stroke="red" stroke-width="2"/>"#,
                        frame.path(&ellipse_outline(&e, ELLIPSE_OUTLINE), true)
                    );
                }
            }
        }
    }

    if let Some(polar) = polar {
        let pts = match &polar {
            Polar2D::Polygon(p) | Polar2D::Curve(p) => p.clone(),
        };
        let _ = writeln!(
            svg,
            r##"  <path class="polar" d="{}" fill="none" stroke="#2060c0" stroke-width="1.5" stroke-dasharray="6,4"/>"##,
            frame.path(&pts, true)
        );
    }

    svg.push_str("</svg>\n");
    Ok(svg)
}

// ---------------------------------------------------------------------------
// Convex hull and OFF mesh (d = 3)
// ---------------------------------------------------------------------------

type P3 = [f64; 3];

fn sub(a: P3, b: P3) -> P3 {
    [a[0] - b[0], a[1] - b[1], a[2] - b[2]]
}

fn cross(a: P3, b: P3) -> P3 {
    [
        a[1] * b[2] - a[2] * b[1],
        a[2] * b[0] - a[0] * b[2],
        a[0] * b[1] - a[1] * b[0],
    ]
}

fn dot(a: P3, b: P3) -> f64 {
    a[0] * b[0] + a[1] * b[1] + a[2] * b[2]
}

fn norm3(a: P3) -> f64 {
    dot(a, a).sqrt()
}

#[derive(Clone)]
struct Tri {
    v: [usize; 3],
    /// Unit outward normal.
    n: P3,
    /// Plane offset: `dot(n, x) = d` on the face.
    d: f64,
    alive: bool,
}

fn make_tri(pts: &[P3], a: usize, b: usize, c: usize, inside: P3) -> Tri {
    let mut n = cross(sub(pts[b], pts[a]), sub(pts[c], pts[a]));
    let ln = norm3(n);
    n = [n[0] / ln, n[1] / ln, n[2] / ln];
    let mut v = [a, b, c];
    let mut d = dot(n, pts[a]);
    if dot(n, inside) > d {
        n = [-n[0], -n[1], -n[2]];
        d = -d;
        v.swap(1, 2);
    }
    Tri { v, n, d, alive: true }
}

/// Incremental convex hull with coplanar-face merging. Returns the hull
/// vertices (re-indexed) and faces as vertex index cycles.
pub fn convex_hull_3d(points: &[[f64; 3]]) -> Result<(Vec<P3>, Vec<Vec<usize>>), RenderError> {
    let scale = points
        .iter()
        .flat_map(|p| p.iter())
        .fold(0.0f64, |m, &c| m.max(c.abs()));
    if scale == 0.0 {
        return Err(RenderError::Degenerate("all points at the origin".into()));
    }
    let eps = 1e-9 * scale;
    let mut pts: Vec<P3> = Vec::new();
    for &p in points {
        if !pts
            .iter()
            .any(|q| norm3(sub(p, *q)) < 1e-9 * scale)
        {
            pts.push(p);
        }
    }
    pts.sort_by(|a, b| a.partial_cmp(b).unwrap());

    // A non-degenerate starting tetrahedron.
    let n = pts.len();
    if n < 4 {
        return Err(RenderError::Degenerate("fewer than 4 distinct points".into()));
    }
    let i0 = 0;
    let i1 = (1..n)
        .max_by(|&a, &b| {
            norm3(sub(pts[a], pts[i0]))
                .partial_cmp(&norm3(sub(pts[b], pts[i0])))
                .unwrap()
        })
        .unwrap();
    let i2 = (0..n)
        .filter(|&i| i != i0 && i != i1)
        .max_by(|&a, &b| {
            norm3(cross(sub(pts[i1], pts[i0]), sub(pts[a], pts[i0])))
                .partial_cmp(&norm3(cross(sub(pts[i1], pts[i0]), sub(pts[b], pts[i0]))))
                .unwrap()
        })
        .unwrap();
    let base_n = cross(sub(pts[i1], pts[i0]), sub(pts[i2], pts[i0]));
    if norm3(base_n) < eps {
        return Err(RenderError::Degenerate("points are collinear".into()));
    }
    let i3 = (0..n)
        .filter(|&i| i != i0 && i != i1 && i != i2)
        .max_by(|&a, &b| {
            dot(base_n, sub(pts[a], pts[i0]))
                .abs()
                .partial_cmp(&dot(base_n, sub(pts[b], pts[i0])).abs())
                .unwrap()
        })
        .unwrap();
    if dot(base_n, sub(pts[i3], pts[i0])).abs() < eps {
        return Err(RenderError::Degenerate("points are coplanar".into()));
    }
    let inside = [
        (pts[i0][0] + pts[i1][0] + pts[i2][0] + pts[i3][0]) / 4.0,
        (pts[i0][1] + pts[i1][1] + pts[i2][1] + pts[i3][1]) / 4.0,
        (pts[i0][2] + pts[i1][2] + pts[i2][2] + pts[i3][2]) / 4.0,
    ];
    let mut tris = vec![
        make_tri(&pts, i0, i1, i2, inside),
        make_tri(&pts, i0, i1, i3, inside),
        make_tri(&pts, i0, i2, i3, inside),
        make_tri(&pts, i1, i2, i3, inside),
    ];

    for p in 0..n {
        if p == i0 || p == i1 || p == i2 || p == i3 {
            continue;
        }
        let visible: Vec<usize> = tris
            .iter()
            .enumerate()
            .filter(|(_, t)| t.alive && dot(t.n, pts[p]) - t.d > eps)
            .map(|(i, _)| i)
            .collect();
        if visible.is_empty() {
            continue;
        }
        // Horizon: directed edges of visible faces whose neighbor is hidden.
        let mut edge_count: std::collections::HashMap<(usize, usize), i32> =
            std::collections::HashMap::new();
        for &ti in &visible {
            let v = tris[ti].v;
            for (a, b) in [(v[0], v[1]), (v[1], v[2]), (v[2], v[0])] {
                *edge_count.entry((a.min(b), a.max(b))).or_insert(0) += 1;
            }
        }
        let mut horizon: Vec<(usize, usize)> = Vec::new();
        for &ti in &visible {
            let v = tris[ti].v;
            for (a, b) in [(v[0], v[1]), (v[1], v[2]), (v[2], v[0])] {
                if edge_count[&(a.min(b), a.max(b))] == 1 {
                    horizon.push((a, b));
                }
            }
        }
        for &ti in &visible {
            tris[ti].alive = false;
        }
        for (a, b) in horizon {
            tris.push(make_tri(&pts, a, b, p, inside));
        }
    }

    let faces: Vec<Tri> = tris.into_iter().filter(|t| t.alive).collect();

    // Merge coplanar neighbors (union-find over shared edges).
    let mut parent: Vec<usize> = (0..faces.len()).collect();
    fn find(parent: &mut Vec<usize>, i: usize) -> usize {
        if parent[i] != i {
            let r = find(parent, parent[i]);
            parent[i] = r;
        }
        parent[i]
    }
    let mut by_edge: std::collections::HashMap<(usize, usize), Vec<usize>> =
        std::collections::HashMap::new();
    for (fi, f) in faces.iter().enumerate() {
        for (a, b) in [(f.v[0], f.v[1]), (f.v[1], f.v[2]), (f.v[2], f.v[0])] {
            by_edge.entry((a.min(b), a.max(b))).or_default().push(fi);
        }
    }
    for owners in by_edge.values() {
        if owners.len() == 2 {
            let (a, b) = (owners[0], owners[1]);
            let aligned = norm3(sub(faces[a].n, faces[b].n)) < 1e-7
                && (faces[a].d - faces[b].d).abs() < 1e-7 * scale.max(1.0);
            if aligned {
                let (ra, rb) = (find(&mut parent, a), find(&mut parent, b));
                parent[ra] = rb;
            }
        }
    }
    let mut groups: std::collections::HashMap<usize, Vec<usize>> = std::collections::HashMap::new();
    for fi in 0..faces.len() {
        let r = find(&mut parent, fi);
        groups.entry(r).or_default().push(fi);
    }

    // Boundary cycle of each group: directed edges that appear exactly once.
    let mut polys: Vec<Vec<usize>> = Vec::new();
    for group in groups.values() {
        let mut directed: std::collections::HashMap<(usize, usize), usize> =
            std::collections::HashMap::new();
        for &fi in group {
            let v = faces[fi].v;
            for (a, b) in [(v[0], v[1]), (v[1], v[2]), (v[2], v[0])] {
                *directed.entry((a, b)).or_insert(0) += 1;
            }
        }
        let mut succ: std::collections::HashMap<usize, usize> = std::collections::HashMap::new();
        for (&(a, b), _) in directed.iter().filter(|&(&(a, b), _)| {
            !directed.contains_key(&(b, a))
        }) {
            succ.insert(a, b);
        }
        if succ.is_empty() {
            return Err(RenderError::Degenerate("face merge lost a boundary".into()));
        }
        let start = *succ.keys().min().unwrap();
        let mut cycle = vec![start];
        let mut cur = succ[&start];
        while cur != start {
            cycle.push(cur);
            cur = succ[&cur];
            if cycle.len() > succ.len() {
                return Err(RenderError::Degenerate("non-simple merged face".into()));
            }
        }
        polys.push(cycle);
    }
    polys.sort();

    // Re-index to the vertices actually used.
    let mut used: Vec<usize> = polys.iter().flatten().copied().collect();
    used.sort_unstable();
    used.dedup();
    let mut remap = vec![usize::MAX; pts.len()];
    for (new, &old) in used.iter().enumerate() {
        remap[old] = new;
    }
    let vertices: Vec<P3> = used.iter().map(|&i| pts[i]).collect();
    for poly in &mut polys {
        for v in poly.iter_mut() {
            *v = remap[*v];
        }
    }
    Ok((vertices, polys))
}

fn body_point_cloud(body: &InvariantBody) -> Vec<P3> {
    let mut out = Vec::new();
    let mut push = |v: &DVector<f64>| {
        out.push([v[0], v[1], v[2]]);
        out.push([-v[0], -v[1], -v[2]]);
    };
    for g in &body.generators {
        match &g.payload {
            Payload::Vertex(v) => push(v),
            Payload::Ellipse(e) => {
                for i in 0..64 {
                    let p = e.point(2.0 * std::f64::consts::PI * i as f64 / 64.0);
                    push(&p);
                }
            }
        }
    }
    out
}

/// OFF mesh of a three-dimensional body.
pub fn body_off(body: &InvariantBody) -> Result<String, RenderError> {
    if body.dim != 3 {
        return Err(RenderError::DimensionMismatch(body.dim));
    }
    if body.kind == BodyKind::MonotonePolytope {
        return Err(RenderError::Degenerate(
            "monotone bodies are unbounded as symmetric sets; render their vertex cloud instead"
                .into(),
        ));
    }
    let (vertices, faces) = convex_hull_3d(&body_point_cloud(body))?;
    let mut edges: Vec<(usize, usize)> = Vec::new();
    for f in &faces {
        for i in 0..f.len() {
            let (a, b) = (f[i], f[(i + 1) % f.len()]);
            edges.push((a.min(b), a.max(b)));
        }
    }
    edges.sort_unstable();
    edges.dedup();

    let mut off = String::from("OFF\n");
    let _ = writeln!(off, "{} {} {}", vertices.len(), faces.len(), edges.len());
    for v in &vertices {
        let _ = writeln!(off, "{:.9} {:.9} {:.9}", v[0], v[1], v[2]);
    }
    for f in &faces {
        let _ = write!(off, "{}", f.len());
        for &i in f {
            let _ = write!(off, " {i}");
        }
        off.push('\n');
    }
    Ok(off)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::{Matrix, MatrixFamily};
    use crate::polytope::{run_algorithm1, AlgorithmConfig, RunOutcome};
    use crate::search::enumerate_candidates;

    fn mat(rows: &[&[f64]]) -> Matrix {
        Matrix::from_rows(rows).unwrap()
    }

    fn halted(fam: &MatrixFamily) -> InvariantBody {
        let cand = enumerate_candidates(fam, 6, 1).unwrap().remove(0);
        match run_algorithm1(fam, &cand, &AlgorithmConfig::default()).unwrap() {
            RunOutcome::Halted(b) => b.prune_redundant(1e-8).unwrap(),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn planar_svg_marks_roots_and_closes_paths() {
        let fam = MatrixFamily::new(vec![
            mat(&[&[2.0, -2.0], &[1.0, 2.0]]),
            mat(&[&[1.0, 2.0], &[-1.0, -3.0]]),
        ])
        .unwrap();
        let body = halted(&fam);
        let svg = body_svg(&body, true).unwrap();
        assert!(svg.starts_with("<?xml"));
        assert!(svg.trim_end().ends_with("</svg>"));
        assert_eq!(svg.matches(r#"class="root""#).count(), 4);
        assert_eq!(svg.matches(r#"class="polar""#).count(), 1);
        // Deterministic output.
        assert_eq!(svg, body_svg(&body, true).unwrap());
    }

    #[test]
    fn ellipse_hull_svg_renders() {
        let fam = MatrixFamily::new(vec![
            mat(&[&[0.0, 1.0], &[-1.0, 0.0]]),
            mat(&[&[0.890, 0.646], &[-0.129, -0.178]]),
        ])
        .unwrap();
        let body = halted(&fam);
        let svg = body_svg(&body, false).unwrap();
        assert!(svg.contains("stroke=\"red\""));
        assert!(!svg.contains("class=\"polar\""));
    }

    #[test]
    fn hull_of_cube_and_octahedron() {
        let cube: Vec<[f64; 3]> = (0..8)
            .map(|i| {
                [
                    if i & 1 == 0 { -1.0 } else { 1.0 },
                    if i & 2 == 0 { -1.0 } else { 1.0 },
                    if i & 4 == 0 { -1.0 } else { 1.0 },
                ]
            })
            .collect();
        let (v, f) = convex_hull_3d(&cube).unwrap();
        assert_eq!(v.len(), 8);
        assert_eq!(f.len(), 6);
        assert!(f.iter().all(|face| face.len() == 4));

        let octa = vec![
            [1.0, 0.0, 0.0],
            [-1.0, 0.0, 0.0],
            [0.0, 1.0, 0.0],
            [0.0, -1.0, 0.0],
            [0.0, 0.0, 1.0],
            [0.0, 0.0, -1.0],
            [0.1, 0.1, 0.1],
        ];
        let (v, f) = convex_hull_3d(&octa).unwrap();
        assert_eq!(v.len(), 6);
        assert_eq!(f.len(), 8);
        assert!(f.iter().all(|face| face.len() == 3));
    }

    fn off_counts(off: &str) -> (usize, usize, usize) {
        let mut lines = off.lines();
        assert_eq!(lines.next().unwrap(), "OFF");
        let c: Vec<usize> = lines
            .next()
            .unwrap()
            .split_whitespace()
            .map(|s| s.parse().unwrap())
            .collect();
        (c[0], c[1], c[2])
    }

    #[test]
    fn off_mesh_of_three_dimensional_bodies() {
        let a1 = mat(&[&[1.0, 2.0, 1.0], &[-1.0, 3.0, 2.0], &[2.0, -2.0, 3.0]]);
        let a2 = mat(&[&[-1.0, 0.0, 3.0], &[0.0, -1.0, -2.0], &[-3.0, 2.0, 1.0]]);
        let fam = MatrixFamily::new(vec![a1.clone(), a2.clone()]).unwrap();
        let (nv, nf, ne) = off_counts(&body_off(&halted(&fam)).unwrap());
        assert_eq!((nv, nf), (14, 24));
        assert_eq!(ne, nv + nf - 2, "Euler relation");

        // The transposed family carves the finer polytope whose polar is the
        // Barabanov ball of the original pair.
        let dual = MatrixFamily::new(vec![a1.transpose(), a2.transpose()]).unwrap();
        let (nv, nf, ne) = off_counts(&body_off(&halted(&dual)).unwrap());
        assert_eq!((nv, nf), (24, 44));
        assert_eq!(ne, nv + nf - 2, "Euler relation");
    }

    #[test]
    fn dimension_gates() {
        let fam = MatrixFamily::new(vec![
            mat(&[&[2.0, -2.0], &[1.0, 2.0]]),
            mat(&[&[1.0, 2.0], &[-1.0, -3.0]]),
        ])
        .unwrap();
        let body = halted(&fam);
        assert!(matches!(
            body_off(&body),
            Err(RenderError::DimensionMismatch(2))
        ));
    }
}
