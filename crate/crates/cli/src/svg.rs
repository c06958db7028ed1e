//! Minimal deterministic SVG rendering of the section CSVs.

use std::fmt::Write as _;
use std::str::FromStr;

use planar_ppv::csv;
use planar_ppv::isochron::IsochronReport;
use planar_ppv::{DilibertoBasis, LimitCycle, Vec2};

const WIDTH: f64 = 640.0;
const HEIGHT: f64 = 480.0;
const MARGIN: f64 = 50.0;
const PALETTE: [&str; 6] = ["#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#17becf"];

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PlotKind {
    Cycle,
    Basis,
    Lock,
    Density,
    Isochron,
}

impl FromStr for PlotKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "cycle" => Ok(Self::Cycle),
            "basis" => Ok(Self::Basis),
            "lock" => Ok(Self::Lock),
            "density" => Ok(Self::Density),
            "isochron" => Ok(Self::Isochron),
            other => Err(format!("unknown plot kind `{other}` (cycle, basis, lock, density, isochron)")),
        }
    }
}

/// Affine map from data bounds onto the drawing area.
struct Frame {
    x0: f64,
    x1: f64,
    y0: f64,
    y1: f64,
    equal_aspect: bool,
}

impl Frame {
    fn fit(points: impl IntoIterator<Item = (f64, f64)>, equal_aspect: bool) -> Self {
        let (mut x0, mut x1, mut y0, mut y1) = (f64::INFINITY, f64::NEG_INFINITY, f64::INFINITY, f64::NEG_INFINITY);
        for (x, y) in points {
            x0 = x0.min(x);
            x1 = x1.max(x);
            y0 = y0.min(y);
            y1 = y1.max(y);
        }
        if !x0.is_finite() {
            (x0, x1, y0, y1) = (0.0, 1.0, 0.0, 1.0);
        }
        let pad = |lo: f64, hi: f64| {
            let w = if hi > lo { hi - lo } else { lo.abs().max(1.0) };
            (lo - 0.05 * w, hi + 0.05 * w)
        };
        let (x0, x1) = pad(x0, x1);
        let (y0, y1) = pad(y0, y1);
        Self { x0, x1, y0, y1, equal_aspect }
    }

    fn scales(&self) -> (f64, f64) {
        let sx = (WIDTH - 2.0 * MARGIN) / (self.x1 - self.x0);
        let sy = (HEIGHT - 2.0 * MARGIN) / (self.y1 - self.y0);
        if self.equal_aspect {
            let s = sx.min(sy);
            (s, s)
        } else {
            (sx, sy)
        }
    }

    fn map(&self, x: f64, y: f64) -> (f64, f64) {
        let (sx, sy) = self.scales();
        (MARGIN + (x - self.x0) * sx, HEIGHT - MARGIN - (y - self.y0) * sy)
    }
}

struct Doc {
    body: String,
}

impl Doc {
    fn new(title: &str) -> Self {
        let mut body = String::new();
        let _ = writeln!(
            body,
            r#"<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{HEIGHT}" viewBox="0 0 {WIDTH} {HEIGHT}">"#
        );
        let _ = writeln!(body, r#"<rect class="background" width="{WIDTH}" height="{HEIGHT}" fill="white"/>"#);
        let _ = writeln!(
            body,
            r#"<text x="{}" y="24" text-anchor="middle" font-family="sans-serif" font-size="14">{}</text>"#,
            WIDTH / 2.0,
            escape(title)
        );
        Self { body }
    }

    fn axes(&mut self, frame: &Frame, xlabel: &str, ylabel: &str) {
        let (l, b) = (MARGIN, HEIGHT - MARGIN);
        let _ = writeln!(
            self.body,
            r#"<g class="axes" stroke="black" stroke-width="1"><line x1="{l}" y1="{b}" x2="{}" y2="{b}"/><line x1="{l}" y1="{b}" x2="{l}" y2="{MARGIN}"/></g>"#,
            WIDTH - MARGIN
        );
        let label = |v: f64| format!("{v:.3e}");
        let _ = writeln!(
            self.body,
            r#"<g font-family="sans-serif" font-size="10"><text x="{l}" y="{}">{}</text><text x="{}" y="{}" text-anchor="end">{}</text><text x="4" y="{}">{}</text><text x="4" y="{}">{}</text><text x="{}" y="{}" text-anchor="middle">{}</text><text x="4" y="{}">{}</text></g>"#,
            b + 14.0,
            label(frame.x0),
            WIDTH - MARGIN,
            b + 14.0,
            label(frame.x1),
            b,
            label(frame.y0),
            MARGIN + 10.0,
            label(frame.y1),
            WIDTH / 2.0,
            HEIGHT - 10.0,
            escape(xlabel),
            HEIGHT / 2.0,
            escape(ylabel)
        );
    }

    fn polyline(&mut self, frame: &Frame, class: &str, color: &str, pts: &[(f64, f64)]) {
        let _ =
            write!(self.body, r#"<polyline class="{class}" fill="none" stroke="{color}" stroke-width="1.5" points=""#);
        for (i, &(x, y)) in pts.iter().enumerate() {
            let (px, py) = frame.map(x, y);
            let sep = if i == 0 { "" } else { " " };
            let _ = write!(self.body, "{sep}{px:.3},{py:.3}");
        }
        self.body.push_str("\"/>\n");
    }

    fn circle(&mut self, frame: &Frame, class: &str, x: f64, y: f64, fill: &str) {
        let (px, py) = frame.map(x, y);
        let _ = writeln!(
            self.body,
            r#"<circle class="{class}" cx="{px:.3}" cy="{py:.3}" r="4" fill="{fill}" stroke="black" stroke-width="0.8"/>"#
        );
    }

    fn square(&mut self, frame: &Frame, class: &str, x: f64, y: f64, fill: &str) {
        let (px, py) = frame.map(x, y);
        let _ = writeln!(
            self.body,
            r#"<rect class="{class}" x="{:.3}" y="{:.3}" width="8" height="8" fill="{fill}" stroke="black" stroke-width="0.8"/>"#,
            px - 4.0,
            py - 4.0
        );
    }

    fn arrow(&mut self, frame: &Frame, class: &str, color: &str, from: Vec2, to: Vec2) {
        let (x1, y1) = frame.map(from.x, from.y);
        let (x2, y2) = frame.map(to.x, to.y);
        let _ = writeln!(
            self.body,
            r#"<line class="{class}" x1="{x1:.3}" y1="{y1:.3}" x2="{x2:.3}" y2="{y2:.3}" stroke="{color}" stroke-width="1.5"/>"#
        );
        let (dx, dy) = (x2 - x1, y2 - y1);
        let len = dx.hypot(dy);
        if len > 0.0 {
            let (ux, uy) = (dx / len, dy / len);
            let (bx, by) = (x2 - 6.0 * ux, y2 - 6.0 * uy);
            let _ = writeln!(
                self.body,
                r#"<polygon class="{class}" points="{x2:.3},{y2:.3} {:.3},{:.3} {:.3},{:.3}" fill="{color}"/>"#,
                bx - 3.0 * uy,
                by + 3.0 * ux,
                bx + 3.0 * uy,
                by - 3.0 * ux
            );
        }
    }

    fn legend(&mut self, entries: &[(&str, &str)]) {
        for (i, (name, color)) in entries.iter().enumerate() {
            let y = MARGIN + 14.0 * i as f64;
            let _ = writeln!(
                self.body,
                r#"<text x="{}" y="{y}" font-family="sans-serif" font-size="11" fill="{color}">{}</text>"#,
                WIDTH - MARGIN - 120.0,
                escape(name)
            );
        }
    }

    fn finish(mut self) -> String {
        self.body.push_str("</svg>\n");
        self.body
    }
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

struct Table {
    header: Vec<String>,
    rows: Vec<Vec<String>>,
}

impl Table {
    fn parse(text: &str, required: &[&str]) -> Result<Self, String> {
        let (header, rows) = csv::parse(text).ok_or("empty CSV")?;
        for r in required {
            if !header.iter().any(|h| h == r) {
                return Err(format!("CSV lacks column `{r}` (found {})", header.join(",")));
            }
        }
        Ok(Self { header, rows })
    }

    fn col(&self, name: &str) -> usize {
        self.header.iter().position(|h| h == name).expect("column checked at parse time")
    }

    fn num(&self, row: &[String], name: &str) -> Result<f64, String> {
        let cell = row.get(self.col(name)).ok_or("short CSV row")?;
        cell.parse().map_err(|_| format!("`{cell}` in column `{name}` is not a number"))
    }

    fn series(&self, x: &str, y: &str) -> Result<Vec<(f64, f64)>, String> {
        self.rows.iter().map(|r| Ok((self.num(r, x)?, self.num(r, y)?))).collect()
    }
}

/// Renders one section CSV.
pub fn plot(csv_text: &str, kind: PlotKind) -> Result<String, String> {
    match kind {
        PlotKind::Cycle => plot_cycle(csv_text),
        PlotKind::Basis => plot_basis(csv_text),
        PlotKind::Lock => plot_lock(csv_text),
        PlotKind::Density => plot_density(csv_text),
        PlotKind::Isochron => plot_isochron(csv_text),
    }
}

fn plot_cycle(text: &str) -> Result<String, String> {
    let t = Table::parse(text, &["x", "y"])?;
    let pts = t.series("x", "y")?;
    if pts.len() < 2 {
        return Err("cycle CSV needs at least two samples".into());
    }
    let frame = Frame::fit(pts.iter().copied(), true);
    let mut doc = Doc::new("limit cycle");
    doc.axes(&frame, "x", "y");
    let mut d = String::new();
    for (i, &(x, y)) in pts.iter().enumerate() {
        let (px, py) = frame.map(x, y);
        let _ = write!(d, "{}{px:.3},{py:.3} ", if i == 0 { "M" } else { "L" });
    }
    d.push('Z');
    let _ = writeln!(doc.body, r#"<path class="cycle" d="{d}" fill="none" stroke="{}" stroke-width="2"/>"#, PALETTE[0]);
    Ok(doc.finish())
}

fn plot_basis(text: &str) -> Result<String, String> {
    let names = ["v1x", "v1y", "u2x", "u2y"];
    let t = Table::parse(text, &["t", "v1x", "v1y", "u2x", "u2y"])?;
    let series: Vec<Vec<(f64, f64)>> = names.iter().map(|n| t.series("t", n)).collect::<Result<_, _>>()?;
    let frame = Frame::fit(series.iter().flatten().copied(), false);
    let mut doc = Doc::new("Floquet frame over one period");
    doc.axes(&frame, "t", "component");
    for (i, (s, n)) in series.iter().zip(names).enumerate() {
        doc.polyline(&frame, n, PALETTE[i], s);
    }
    doc.legend(&names.iter().enumerate().map(|(i, n)| (*n, PALETTE[i])).collect::<Vec<_>>());
    Ok(doc.finish())
}

fn plot_lock(text: &str) -> Result<String, String> {
    let t = Table::parse(text, &["eps", "delta_omega", "locked"])?;
    let lc = t.col("locked");
    let mut pts = Vec::new();
    for r in &t.rows {
        let locked = match r.get(lc).map(String::as_str) {
            Some("true") => true,
            Some("false") => false,
            other => return Err(format!("`locked` must be true or false, got {other:?}")),
        };
        pts.push((t.num(r, "delta_omega")?, t.num(r, "eps")?, locked));
    }
    let frame = Frame::fit(pts.iter().map(|p| (p.0, p.1)), false);
    let mut doc = Doc::new("injection locking map");
    doc.axes(&frame, "detuning", "eps");
    for (x, y, locked) in pts {
        if locked {
            doc.circle(&frame, "locked", x, y, PALETTE[0]);
        } else {
            doc.circle(&frame, "unlocked", x, y, "white");
        }
    }
    doc.legend(&[("filled: locked", PALETTE[0]), ("hollow: unlocked", "black")]);
    Ok(doc.finish())
}

fn plot_density(text: &str) -> Result<String, String> {
    let t = Table::parse(text, &["t", "psi", "p"])?;
    let mut groups: Vec<(f64, Vec<(f64, f64)>)> = Vec::new();
    for r in &t.rows {
        let (time, psi, p) = (t.num(r, "t")?, t.num(r, "psi")?, t.num(r, "p")?);
        match groups.last_mut() {
            Some((gt, pts)) if *gt == time => pts.push((psi, p)),
            _ => groups.push((time, vec![(psi, p)])),
        }
    }
    let frame = Frame::fit(groups.iter().flat_map(|g| g.1.iter().copied()), false);
    let mut doc = Doc::new("phase density");
    doc.axes(&frame, "psi", "p");
    for (i, (_, pts)) in groups.iter().enumerate() {
        doc.polyline(&frame, "density", PALETTE[i % PALETTE.len()], pts);
    }
    Ok(doc.finish())
}

fn plot_isochron(text: &str) -> Result<String, String> {
    let t = Table::parse(text, &["set", "offset", "phase"])?;
    let sc = t.col("set");
    let mut iso = Vec::new();
    let mut ctl = Vec::new();
    for r in &t.rows {
        let p = (t.num(r, "offset")?, t.num(r, "phase")?);
        match r.get(sc).map(String::as_str) {
            Some("isochron") => iso.push(p),
            Some("control") => ctl.push(p),
            other => return Err(format!("unknown seed set {other:?}")),
        }
    }
    let frame = Frame::fit(iso.iter().chain(&ctl).copied(), false);
    let mut doc = Doc::new("asymptotic phase of seeded trajectories");
    doc.axes(&frame, "offset", "asymptotic phase");
    for &(x, y) in &iso {
        doc.circle(&frame, "isochron", x, y, PALETTE[0]);
    }
    for &(x, y) in &ctl {
        doc.square(&frame, "control", x, y, PALETTE[1]);
    }
    doc.legend(&[("circles: along u2", PALETTE[0]), ("squares: along f-perp", PALETTE[1])]);
    Ok(doc.finish())
}

/// Phase-plane picture of the isochron experiment: the cycle, `u₁`/`u₂`
/// arrows at eight times, and both seed sets.
pub fn isochron_figure(cycle: &LimitCycle, basis: &DilibertoBasis, report: &IsochronReport) -> String {
    let samples: Vec<Vec2> = (0..256).map(|j| cycle.point(cycle.period() * j as f64 / 256.0)).collect();
    let seeds_iso: Vec<Vec2> = report.isochron.iter().map(|s| s.reading.seed).collect();
    let seeds_ctl: Vec<Vec2> = report.control.iter().map(|s| s.reading.seed).collect();
    let frame = Frame::fit(samples.iter().chain(&seeds_iso).chain(&seeds_ctl).map(|p| (p.x, p.y)), true);
    let scale = samples.iter().map(|p| p.norm()).fold(0.0, f64::max) * 0.25;
    let mut doc = Doc::new("isochron-seeded (circles) and control (squares) trajectories");
    doc.axes(&frame, "x", "y");
    let mut pts: Vec<(f64, f64)> = samples.iter().map(|p| (p.x, p.y)).collect();
    pts.push(pts[0]);
    doc.polyline(&frame, "cycle", "black", &pts);
    for j in 0..8 {
        let t = cycle.period() * j as f64 / 8.0;
        let fr = basis.frame(t);
        doc.arrow(&frame, "u1", PALETTE[0], fr.x, fr.x + fr.u1.normalized().scale(scale));
        doc.arrow(&frame, "u2", PALETTE[2], fr.x, fr.x + fr.u2.normalized().scale(scale));
    }
    for p in &seeds_iso {
        doc.circle(&frame, "isochron", p.x, p.y, PALETTE[0]);
    }
    for p in &seeds_ctl {
        doc.square(&frame, "control", p.x, p.y, PALETTE[1]);
    }
    doc.legend(&[("u1 (tangent)", PALETTE[0]), ("u2 (isochron)", PALETTE[2])]);
    doc.finish()
}
