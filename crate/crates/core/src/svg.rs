//! Deterministic SVG figures.
//!
//! Numbers are printed with fixed precision so identical inputs give
//! identical bytes.

use std::fmt::Write;

use crate::evaluation::{HistBin, JointCellMap};
use crate::geometry::{forward_kinematics, JointAngles, Obstacle, THETA1_MAX, THETA1_MIN, THETA2_MAX, THETA2_MIN, WORKSPACE_X, WORKSPACE_Y};
use crate::planner::Plan;
use crate::scenarios::ObstacleScenario;

const PALETTE: [&str; 6] = ["#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b"];
const OBSTACLE_FILL: &str = "#7f7f7f";

fn num(v: f64) -> String {
    let s = format!("{v:.2}");
    if s == "-0.00" {
        "0.00".into()
    } else {
        s
    }
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

/// Minimal SVG writer.
pub struct Svg {
    body: String,
    width: f64,
    height: f64,
}

impl Svg {
    pub fn new(width: f64, height: f64) -> Self {
        Svg {
            body: String::new(),
            width,
            height,
        }
    }

    pub fn rect(&mut self, x: f64, y: f64, w: f64, h: f64, style: &str) {
        let _ = writeln!(
            self.body,
            r#"<rect x="{}" y="{}" width="{}" height="{}" {style}/>"#,
            num(x),
            num(y),
            num(w),
            num(h)
        );
    }

    pub fn line(&mut self, a: (f64, f64), b: (f64, f64), style: &str) {
        let _ = writeln!(
            self.body,
            r#"<line x1="{}" y1="{}" x2="{}" y2="{}" {style}/>"#,
            num(a.0),
            num(a.1),
            num(b.0),
            num(b.1)
        );
    }

    pub fn polyline(&mut self, pts: &[(f64, f64)], style: &str) {
        let coords: Vec<String> = pts.iter().map(|p| format!("{},{}", num(p.0), num(p.1))).collect();
        let _ = writeln!(self.body, r#"<polyline points="{}" fill="none" {style}/>"#, coords.join(" "));
    }

    pub fn circle(&mut self, c: (f64, f64), r: f64, style: &str) {
        let _ = writeln!(self.body, r#"<circle cx="{}" cy="{}" r="{}" {style}/>"#, num(c.0), num(c.1), num(r));
    }

    pub fn text(&mut self, at: (f64, f64), anchor: &str, size: f64, content: &str) {
        let _ = writeln!(
            self.body,
            r#"<text x="{}" y="{}" text-anchor="{anchor}" font-family="sans-serif" font-size="{}">{}</text>"#,
            num(at.0),
            num(at.1),
            num(size),
            escape(content)
        );
    }

    pub fn finish(self) -> String {
        format!(
            "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{w}\" height=\"{h}\" viewBox=\"0 0 {w} {h}\">\n\
             <rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n{}</svg>\n",
            self.body,
            w = num(self.width),
            h = num(self.height)
        )
    }
}

/// Maps data coordinates into a pixel rectangle, y pointing up.
#[derive(Debug, Clone, Copy)]
pub struct Frame {
    pub x: f64,
    pub y: f64,
    pub w: f64,
    pub h: f64,
    pub xr: (f64, f64),
    pub yr: (f64, f64),
}

impl Frame {
    pub fn px(&self, x: f64) -> f64 {
        self.x + (x - self.xr.0) / (self.xr.1 - self.xr.0) * self.w
    }

    pub fn py(&self, y: f64) -> f64 {
        self.y + self.h - (y - self.yr.0) / (self.yr.1 - self.yr.0) * self.h
    }

    pub fn map(&self, p: (f64, f64)) -> (f64, f64) {
        (self.px(p.0), self.py(p.1))
    }

    /// Border, `ticks + 1` labelled ticks per axis and axis titles.
    pub fn axes(&self, svg: &mut Svg, ticks: usize, x_label: &str, y_label: &str) {
        svg.rect(self.x, self.y, self.w, self.h, r#"fill="none" stroke="black""#);
        for k in 0..=ticks {
            let t = k as f64 / ticks as f64;
            let xv = self.xr.0 + t * (self.xr.1 - self.xr.0);
            let yv = self.yr.0 + t * (self.yr.1 - self.yr.0);
            let (xp, yp) = (self.px(xv), self.py(yv));
            svg.line((xp, self.y + self.h), (xp, self.y + self.h + 4.0), r#"stroke="black""#);
            svg.text((xp, self.y + self.h + 16.0), "middle", 10.0, &tick_label(xv));
            svg.line((self.x - 4.0, yp), (self.x, yp), r#"stroke="black""#);
            svg.text((self.x - 6.0, yp + 3.0), "end", 10.0, &tick_label(yv));
        }
        svg.text((self.x + self.w / 2.0, self.y + self.h + 32.0), "middle", 12.0, x_label);
        let (lx, ly) = (self.x - 40.0, self.y + self.h / 2.0);
        let _ = writeln!(
            svg.body,
            r#"<text x="{}" y="{}" text-anchor="middle" font-family="sans-serif" font-size="12.00" transform="rotate(-90 {} {})">{}</text>"#,
            num(lx),
            num(ly),
            num(lx),
            num(ly),
            escape(y_label)
        );
    }
}

fn tick_label(v: f64) -> String {
    if (v - v.round()).abs() < 1e-9 {
        format!("{}", v.round() as i64)
    } else {
        format!("{v:.2}")
    }
}

/// Relative-frequency bar chart.
pub fn histogram(bins: &[HistBin], title: &str, x_label: &str) -> String {
    let mut svg = Svg::new(480.0, 340.0);
    let top = bins.iter().map(|b| b.frequency).fold(0.0, f64::max).max(1e-9);
    let ymax = (top * 10.0).ceil() / 10.0;
    let (lo, hi) = match (bins.first(), bins.last()) {
        (Some(a), Some(b)) => (a.lo, b.hi),
        _ => (0.0, 1.0),
    };
    let frame = Frame {
        x: 60.0,
        y: 30.0,
        w: 390.0,
        h: 250.0,
        xr: (lo, hi),
        yr: (0.0, ymax),
    };
    svg.text((240.0, 18.0), "middle", 14.0, title);
    for b in bins {
        let (x0, x1) = (frame.px(b.lo), frame.px(b.hi));
        let y = frame.py(b.frequency);
        svg.rect(x0, y, x1 - x0, frame.py(0.0) - y, r##"fill="#1f77b4" stroke="white""##);
    }
    frame.axes(&mut svg, 5, x_label, "relative frequency");
    svg.finish()
}

#[derive(Debug, Clone, PartialEq)]
pub struct Series {
    pub name: String,
    pub points: Vec<(f64, f64)>,
}

/// Line chart with markers and a legend; the ranges cover all points.
pub fn line_chart(series: &[Series], title: &str, x_label: &str, y_label: &str) -> String {
    let mut svg = Svg::new(520.0, 360.0);
    let all = || series.iter().flat_map(|s| s.points.iter());
    let (mut xr, mut yr) = ((f64::INFINITY, f64::NEG_INFINITY), (0.0f64, f64::NEG_INFINITY));
    for &(x, y) in all() {
        xr = (xr.0.min(x), xr.1.max(x));
        yr = (yr.0.min(y), yr.1.max(y));
    }
    if !xr.0.is_finite() {
        xr = (0.0, 1.0);
        yr = (0.0, 1.0);
    }
    if xr.1 <= xr.0 {
        xr.1 = xr.0 + 1.0;
    }
    yr.1 = if yr.1 > yr.0 { yr.1 * 1.1 } else { yr.0 + 1.0 };
    let frame = Frame {
        x: 70.0,
        y: 30.0,
        w: 320.0,
        h: 270.0,
        xr,
        yr,
    };
    svg.text((230.0, 18.0), "middle", 14.0, title);
    for (k, s) in series.iter().enumerate() {
        let colour = PALETTE[k % PALETTE.len()];
        let pts: Vec<(f64, f64)> = s.points.iter().map(|&p| frame.map(p)).collect();
        svg.polyline(&pts, &format!(r#"stroke="{colour}" stroke-width="2""#));
        for &p in &pts {
            svg.circle(p, 3.0, &format!(r#"fill="{colour}""#));
        }
        let ly = 50.0 + 18.0 * k as f64;
        svg.line((400.0, ly), (420.0, ly), &format!(r#"stroke="{colour}" stroke-width="2""#));
        svg.text((425.0, ly + 4.0), "start", 11.0, &s.name);
    }
    frame.axes(&mut svg, 4, x_label, y_label);
    svg.finish()
}

fn obstacle_shapes(svg: &mut Svg, frame: &Frame, obstacles: &[Obstacle]) {
    let style = format!(r#"fill="{OBSTACLE_FILL}" fill-opacity="0.7""#);
    for ob in obstacles {
        match *ob {
            Obstacle::Circle { cx, cy, r } => {
                let rp = r / (frame.xr.1 - frame.xr.0) * frame.w;
                svg.circle(frame.map((cx, cy)), rp, &style);
            }
            Obstacle::Rect { x0, y0, x1, y1 } => {
                let (a, b) = (frame.map((x0.min(x1), y0.max(y1))), frame.map((x0.max(x1), y0.min(y1))));
                svg.rect(a.0, a.1, b.0 - a.0, b.1 - a.1, &style);
            }
        }
    }
}

/// Latent path, joint-space trajectory over the collision map, and arm poses
/// in the workspace, side by side.
pub fn plan_figure(plan: &Plan, scenario: &ObstacleScenario, map: &JointCellMap) -> String {
    let mut svg = Svg::new(1020.0, 380.0);
    let title = format!(
        "scenario {} | {} | valid={} | length {:.1} deg",
        plan.scenario_id,
        match plan.method {
            crate::planner::Method::Line => "line",
            crate::planner::Method::Astar => "astar",
        },
        plan.valid,
        plan.joint_path_length_deg
    );
    svg.text((510.0, 18.0), "middle", 14.0, &title);
    let path_style = r##"stroke="#d62728" stroke-width="2""##;

    let latent = Frame {
        x: 60.0,
        y: 40.0,
        w: 260.0,
        h: 260.0,
        xr: (0.0, 1.0),
        yr: (0.0, 1.0),
    };
    let pts: Vec<(f64, f64)> = plan.latent_waypoints.iter().map(|z| latent.map((z[0], z[1]))).collect();
    svg.polyline(&pts, path_style);
    endpoints(&mut svg, &pts);
    latent.axes(&mut svg, 4, "z1", "z2");

    let joint = Frame {
        x: 400.0,
        y: 40.0,
        w: 260.0 * 180.0 / 145.0,
        h: 260.0,
        xr: (THETA1_MIN, THETA1_MAX),
        yr: (THETA2_MIN, THETA2_MAX),
    };
    let (n1, n2) = map.dims;
    let (cw, ch) = (
        map.dtheta / (THETA1_MAX - THETA1_MIN) * joint.w,
        map.dtheta / (THETA2_MAX - THETA2_MIN) * joint.h,
    );
    for i in 0..n1 {
        for j in 0..n2 {
            if !map.free[i * n2 + j] {
                let c = joint.map((THETA1_MIN + i as f64 * map.dtheta, THETA2_MIN + j as f64 * map.dtheta));
                svg.rect(c.0 - cw / 2.0, c.1 - ch / 2.0, cw, ch, &format!(r#"fill="{OBSTACLE_FILL}""#));
            }
        }
    }
    let pts: Vec<(f64, f64)> = plan.joint_trajectory_deg.iter().map(|q| joint.map((q[0], q[1]))).collect();
    svg.polyline(&pts, path_style);
    endpoints(&mut svg, &pts);
    joint.axes(&mut svg, 4, "theta1 [deg]", "theta2 [deg]");

    let work = Frame {
        x: 780.0,
        y: 40.0,
        w: 195.0,
        h: 260.0,
        xr: WORKSPACE_X,
        yr: WORKSPACE_Y,
    };
    obstacle_shapes(&mut svg, &work, &scenario.obstacles);
    let traj = &plan.joint_trajectory_deg;
    let shown = 8.min(traj.len());
    for k in 0..shown {
        let idx = if shown == 1 { 0 } else { k * (traj.len() - 1) / (shown - 1) };
        let q = JointAngles::new_unchecked(traj[idx][0], traj[idx][1]);
        if let Ok(pose) = forward_kinematics(q) {
            let arm: Vec<(f64, f64)> = [pose.base, pose.elbow, pose.tip].iter().map(|p| work.map((p.x, p.y))).collect();
            let opacity = 0.3 + 0.7 * k as f64 / shown.max(2).saturating_sub(1) as f64;
            svg.polyline(&arm, &format!(r##"stroke="#1f77b4" stroke-width="2" stroke-opacity="{}""##, num(opacity)));
        }
    }
    work.axes(&mut svg, 3, "x", "y");
    svg.finish()
}

fn endpoints(svg: &mut Svg, pts: &[(f64, f64)]) {
    if let (Some(&a), Some(&b)) = (pts.first(), pts.last()) {
        svg.circle(a, 4.0, r##"fill="#2ca02c""##);
        svg.circle(b, 4.0, r##"fill="#9467bd""##);
    }
}
