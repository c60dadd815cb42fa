//! SVG rendering of a scene over its world.

use std::fmt::Write;

use scenelang_core::sampler::Scene;
use scenelang_core::world::World;
use scenelang_geometry::{heading_vector, Polygon, Region, Sector, Vector};

const SIZE: f64 = 1000.0;
const MARGIN: f64 = 0.05;
const ARROWS_PER_SIDE: usize = 24;

/// World coordinates to pixels; y points down in SVG.
struct View {
    min: Vector,
    max_y: f64,
    scale: f64,
    width: f64,
    height: f64,
}

impl View {
    fn new(min: Vector, max: Vector) -> Self {
        let span = (max.x - min.x).max(max.y - min.y).max(1e-9);
        let scale = SIZE * (1.0 - 2.0 * MARGIN) / span;
        let pad = SIZE * MARGIN;
        View {
            min: Vector::new(min.x - pad / scale, min.y - pad / scale),
            max_y: max.y + pad / scale,
            scale,
            width: (max.x - min.x) * scale + 2.0 * pad,
            height: (max.y - min.y) * scale + 2.0 * pad,
        }
    }

    fn px(&self, p: Vector) -> (f64, f64) {
        ((p.x - self.min.x) * self.scale, (self.max_y - p.y) * self.scale)
    }
}

fn ring_path(out: &mut String, view: &View, pts: impl Iterator<Item = Vector>) {
    for (i, p) in pts.enumerate() {
        let (x, y) = view.px(p);
        let _ = write!(out, "{}{x:.2},{y:.2} ", if i == 0 { "M" } else { "L" });
    }
    out.push_str("Z ");
}

fn region_path(view: &View, r: &Region) -> String {
    let mut d = String::new();
    for poly in r.polygons() {
        polygon_path(&mut d, view, poly);
    }
    d
}

fn polygon_path(d: &mut String, view: &View, poly: &Polygon<f64>) {
    ring_path(d, view, poly.exterior().coords().map(|c| Vector::new(c.x, c.y)));
    for h in poly.interiors() {
        ring_path(d, view, h.coords().map(|c| Vector::new(c.x, c.y)));
    }
}

/// Renders the workspace, named regions, field arrows, every object box
/// with a heading tick and the ego's visible sector. Objects are the only
/// `rect` elements.
pub fn render(scene: &Scene, world: &World) -> String {
    let (mut lo, mut hi) = world.workspace.bounds().unwrap_or((Vector::ZERO, Vector::new(1.0, 1.0)));
    for o in &scene.objects {
        for c in &o.corners {
            lo = Vector::new(lo.x.min(c.x), lo.y.min(c.y));
            hi = Vector::new(hi.x.max(c.x), hi.y.max(c.y));
        }
    }
    let view = View::new(lo, hi);
    let mut s = String::new();
    let _ = writeln!(
        s,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{w:.0}" height="{h:.0}" viewBox="0 0 {w:.2} {h:.2}">"#,
        w = view.width,
        h = view.height
    );
    let _ = writeln!(s, r#"<path class="background" d="M0,0 H{:.2} V{:.2} H0 Z" fill="white"/>"#, view.width, view.height);
    for (name, r) in &world.regions {
        let _ = writeln!(
            s,
            r#"<path class="region" data-name="{name}" d="{}" fill="{}" fill-opacity="0.35" stroke="none"/>"#,
            region_path(&view, r),
            region_colour(name)
        );
    }
    let _ = writeln!(
        s,
        r##"<path class="workspace" d="{}" fill="none" stroke="#333" stroke-width="1.5"/>"##,
        region_path(&view, &world.workspace)
    );

    let step = (hi.x - lo.x).max(hi.y - lo.y) / ARROWS_PER_SIDE as f64;
    for f in world.fields.values() {
        let mut y = lo.y + step / 2.0;
        while y < hi.y {
            let mut x = lo.x + step / 2.0;
            while x < hi.x {
                let p = Vector::new(x, y);
                let inside = match f.as_piecewise() {
                    Some(pw) => pw.cell_at(p).is_some(),
                    None => world.workspace.contains_point(p),
                };
                if inside {
                    arrow(&mut s, &view, p, f.at(p), step * 0.4);
                }
                x += step;
            }
            y += step;
        }
    }

    let ego = &scene.objects[scene.ego];
    let sector = Sector::visible_region(
        ego.position(),
        ego.props.get("heading").and_then(|v| v.as_scalar()),
        ego.scalar("viewDistance"),
        ego.props.get("viewAngle").and_then(|v| v.as_scalar()).unwrap_or(std::f64::consts::TAU),
    );
    let _ = writeln!(
        s,
        r##"<path class="sector" d="{}" fill="#ffd54f" fill-opacity="0.3" stroke="#f9a825"/>"##,
        region_path(&view, &sector.to_region())
    );

    for (i, o) in scene.objects.iter().enumerate() {
        let (cx, cy) = view.px(o.position());
        let (w, h) = (o.scalar("width") * view.scale, o.scalar("height") * view.scale);
        let deg = -o.heading().to_degrees();
        let colour = if i == scene.ego { "#c62828" } else { "#1565c0" };
        let _ = writeln!(
            s,
            r#"<rect class="object" data-class="{}" x="{:.2}" y="{:.2}" width="{w:.2}" height="{h:.2}" transform="rotate({deg:.4} {cx:.2} {cy:.2})" fill="{colour}" fill-opacity="0.6" stroke="{colour}"/>"#,
            o.class,
            cx - w / 2.0,
            cy - h / 2.0
        );
        let tip = o.position() + heading_vector(o.heading()) * (o.scalar("height") / 2.0);
        let (tx, ty) = view.px(tip);
        let _ = writeln!(s, r#"<line class="heading" x1="{cx:.2}" y1="{cy:.2}" x2="{tx:.2}" y2="{ty:.2}" stroke="black"/>"#);
    }
    s.push_str("</svg>\n");
    s
}

fn arrow(s: &mut String, view: &View, p: Vector, heading: f64, len: f64) {
    let d = heading_vector(heading) * len;
    let (x1, y1) = view.px(p - d * 0.5);
    let (x2, y2) = view.px(p + d * 0.5);
    let back = heading_vector(heading + 2.6) * (len * 0.3);
    let (a1, b1) = view.px(p + d * 0.5 + back);
    let back2 = heading_vector(heading - 2.6) * (len * 0.3);
    let (a2, b2) = view.px(p + d * 0.5 + back2);
    let _ = writeln!(
        s,
        r##"<path class="field" d="M{x1:.2},{y1:.2} L{x2:.2},{y2:.2} M{a1:.2},{b1:.2} L{x2:.2},{y2:.2} L{a2:.2},{b2:.2}" stroke="#777" fill="none"/>"##
    );
}

fn region_colour(name: &str) -> &'static str {
    match name {
        "road" => "#9e9e9e",
        "curb" => "#8d6e63",
        _ => "#81c784",
    }
}
