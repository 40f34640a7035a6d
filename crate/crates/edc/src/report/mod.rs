//! Report emission: CSV files, static SVG charts, and atomic writes.
//!
//! All files are written to a temporary sibling and renamed into place, so
//! an interrupted run never leaves a partial artifact. Numeric cells use
//! `.` as the decimal separator and no thousands separators.

use std::fmt::Write as _;
use std::io;
use std::path::Path;

use crate::cost::CostReport;

/// Writes `content` atomically (temp file + rename) at `path`.
pub fn atomic_write(path: &Path, content: &[u8]) -> io::Result<()> {
    let dir = path.parent().filter(|p| !p.as_os_str().is_empty());
    if let Some(dir) = dir {
        std::fs::create_dir_all(dir)?;
    }
    let file_name = path
        .file_name()
        .ok_or_else(|| io::Error::new(io::ErrorKind::InvalidInput, "path has no file name"))?;
    let mut tmp = path.to_path_buf();
    tmp.set_file_name(format!(".{}.tmp", file_name.to_string_lossy()));
    std::fs::write(&tmp, content)?;
    std::fs::rename(&tmp, path)
}

/// Formats one f64 cell: shortest round-trip representation, `.` decimal.
pub fn num(v: f64) -> String {
    format!("{v}")
}

/// The per-layer estimate CSV for one dataflow.
///
/// Header: `layer,dataflow,q_bits,p,pe_energy,input_move,weight_move,output_move,register_energy,total,logic_area,memory_bits`.
pub fn estimate_csv(report: &CostReport) -> String {
    let mut out = String::from(
        "layer,dataflow,q_bits,p,pe_energy,input_move,weight_move,output_move,register_energy,total,logic_area,memory_bits\n",
    );
    for layer in &report.layers {
        let e = &layer.energy;
        writeln!(
            out,
            "{},{},{},{},{},{},{},{},{},{},{},{}",
            layer.layer,
            report.dataflow,
            layer.q_bits,
            num(layer.p),
            num(e.pe_energy),
            num(e.input_move),
            num(e.weight_move),
            num(e.output_move),
            num(e.register_energy),
            num(e.total()),
            num(layer.logic_area),
            layer.memory_bits,
        )
        .expect("write to string");
    }
    let t = &report.total_energy;
    writeln!(
        out,
        "total,{},,,{},{},{},{},{},{},{},{}",
        report.dataflow,
        num(t.pe_energy),
        num(t.input_move),
        num(t.weight_move),
        num(t.output_move),
        num(t.register_energy),
        num(t.total()),
        num(report.area.logic_area),
        report.area.memory_bits,
    )
    .expect("write to string");
    out
}

/// One row per `(episode, step, layer)` of a search history.
///
/// Header: `episode,step,layer,Q,P,alpha,beta,reward`.
pub fn history_csv(episodes: &[crate::rl::EpisodeSummary]) -> String {
    let mut out = String::from("episode,step,layer,Q,P,alpha,beta,reward\n");
    for ep in episodes {
        for rec in &ep.records {
            for (layer, (&q, &p)) in rec.q.iter().zip(&rec.p).enumerate() {
                writeln!(
                    out,
                    "{},{},{},{},{},{},{},{}",
                    ep.episode,
                    rec.step,
                    layer,
                    num(q),
                    num(p),
                    num(rec.accuracy),
                    num(rec.energy),
                    num(rec.reward),
                )
                .expect("write to string");
            }
        }
    }
    out
}

const SVG_W: f64 = 720.0;
const SVG_H: f64 = 420.0;
const MARGIN_L: f64 = 70.0;
const MARGIN_B: f64 = 60.0;
const MARGIN_T: f64 = 30.0;
const MARGIN_R: f64 = 20.0;

struct SvgCanvas {
    body: String,
}

impl SvgCanvas {
    fn new() -> Self {
        let mut body = String::new();
        writeln!(
            body,
            r#"<svg xmlns="http://www.w3.org/2000/svg" width="{SVG_W}" height="{SVG_H}" viewBox="0 0 {SVG_W} {SVG_H}">"#
        )
        .unwrap();
        writeln!(
            body,
            r#"<rect width="{SVG_W}" height="{SVG_H}" fill="white"/>"#
        )
        .unwrap();
        Self { body }
    }

    fn rect(&mut self, x: f64, y: f64, w: f64, h: f64, fill: &str) {
        writeln!(
            self.body,
            r#"<rect x="{:.2}" y="{:.2}" width="{:.2}" height="{:.2}" fill="{fill}"/>"#,
            x, y, w.max(0.0), h.max(0.0)
        )
        .unwrap();
    }

    fn text(&mut self, x: f64, y: f64, size: f64, anchor: &str, s: &str) {
        writeln!(
            self.body,
            r#"<text x="{x:.2}" y="{y:.2}" font-family="sans-serif" font-size="{size}" text-anchor="{anchor}">{}</text>"#,
            xml_escape(s)
        )
        .unwrap();
    }

    fn polyline(&mut self, pts: &[(f64, f64)], stroke: &str) {
        let path: Vec<String> = pts.iter().map(|(x, y)| format!("{x:.2},{y:.2}")).collect();
        writeln!(
            self.body,
            r#"<polyline points="{}" fill="none" stroke="{stroke}" stroke-width="2"/>"#,
            path.join(" ")
        )
        .unwrap();
    }

    fn line(&mut self, x1: f64, y1: f64, x2: f64, y2: f64, stroke: &str) {
        writeln!(
            self.body,
            r#"<line x1="{x1:.2}" y1="{y1:.2}" x2="{x2:.2}" y2="{y2:.2}" stroke="{stroke}" stroke-width="1"/>"#
        )
        .unwrap();
    }

    fn finish(mut self) -> String {
        self.body.push_str("</svg>\n");
        self.body
    }
}

fn xml_escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

const BREAKDOWN_COLORS: [(&str, &str); 5] = [
    ("pe", "#4c72b0"),
    ("input", "#dd8452"),
    ("weight", "#55a868"),
    ("output", "#c44e52"),
    ("register", "#8172b3"),
];

/// Stacked per-layer energy-breakdown bars for one dataflow.
pub fn breakdown_svg(report: &CostReport) -> String {
    let mut svg = SvgCanvas::new();
    let plot_w = SVG_W - MARGIN_L - MARGIN_R;
    let plot_h = SVG_H - MARGIN_T - MARGIN_B;
    let max_total = report
        .layers
        .iter()
        .map(|l| l.energy.total())
        .fold(1e-300, f64::max);
    let n = report.layers.len().max(1);
    let slot = plot_w / n as f64;
    let bar_w = slot * 0.6;
    for (i, layer) in report.layers.iter().enumerate() {
        let x = MARGIN_L + i as f64 * slot + slot * 0.2;
        let parts = [
            layer.energy.pe_energy,
            layer.energy.input_move,
            layer.energy.weight_move,
            layer.energy.output_move,
            layer.energy.register_energy,
        ];
        let mut y = SVG_H - MARGIN_B;
        for (value, (_, color)) in parts.iter().zip(BREAKDOWN_COLORS) {
            let h = value / max_total * plot_h;
            y -= h;
            svg.rect(x, y, bar_w, h, color);
        }
        svg.text(
            x + bar_w / 2.0,
            SVG_H - MARGIN_B + 16.0,
            12.0,
            "middle",
            &format!("layer {}", layer.layer),
        );
    }
    svg.line(
        MARGIN_L,
        SVG_H - MARGIN_B,
        SVG_W - MARGIN_R,
        SVG_H - MARGIN_B,
        "#333",
    );
    svg.line(MARGIN_L, MARGIN_T, MARGIN_L, SVG_H - MARGIN_B, "#333");
    svg.text(MARGIN_L, 18.0, 14.0, "start", &format!(
        "energy breakdown, dataflow {} (total {})",
        report.dataflow,
        num(report.total())
    ));
    for (i, (name, color)) in BREAKDOWN_COLORS.iter().enumerate() {
        let x = MARGIN_L + 110.0 * i as f64;
        svg.rect(x, SVG_H - 24.0, 10.0, 10.0, color);
        svg.text(x + 14.0, SVG_H - 15.0, 12.0, "start", name);
    }
    svg.finish()
}

/// Energy-vs-episode line chart with accuracy bars underneath.
pub fn campaign_svg(episodes: &[crate::rl::EpisodeSummary], baseline_energy: f64) -> String {
    let mut svg = SvgCanvas::new();
    let plot_w = SVG_W - MARGIN_L - MARGIN_R;
    let plot_h = SVG_H - MARGIN_T - MARGIN_B;
    let n = episodes.len().max(1);
    let max_e = episodes
        .iter()
        .map(|e| e.final_energy)
        .fold(baseline_energy, f64::max)
        .max(1e-300);
    let sx = |i: usize| MARGIN_L + (i as f64 + 0.5) / n as f64 * plot_w;
    let sy = |v: f64| MARGIN_T + (1.0 - v / max_e) * plot_h;

    // accuracy bars (scale 0..1 mapped onto the plot height)
    for (i, ep) in episodes.iter().enumerate() {
        let h = ep.final_accuracy.clamp(0.0, 1.0) * plot_h;
        svg.rect(
            sx(i) - plot_w / n as f64 * 0.3,
            SVG_H - MARGIN_B - h,
            plot_w / n as f64 * 0.6,
            h,
            "#d9e4f1",
        );
    }
    // baseline energy reference
    svg.line(MARGIN_L, sy(baseline_energy), SVG_W - MARGIN_R, sy(baseline_energy), "#999");
    // final modeled energy per episode
    let pts: Vec<(f64, f64)> = episodes
        .iter()
        .enumerate()
        .map(|(i, e)| (sx(i), sy(e.final_energy)))
        .collect();
    if pts.len() > 1 {
        svg.polyline(&pts, "#c44e52");
    } else if let Some(&(x, y)) = pts.first() {
        svg.rect(x - 2.0, y - 2.0, 4.0, 4.0, "#c44e52");
    }
    svg.line(MARGIN_L, SVG_H - MARGIN_B, SVG_W - MARGIN_R, SVG_H - MARGIN_B, "#333");
    svg.line(MARGIN_L, MARGIN_T, MARGIN_L, SVG_H - MARGIN_B, "#333");
    svg.text(
        MARGIN_L,
        18.0,
        14.0,
        "start",
        "energy per episode (line) and accuracy (bars)",
    );
    svg.text(MARGIN_L, SVG_H - 8.0, 12.0, "start", "episode");
    svg.finish()
}

pub fn to_hex(bytes: &[u8]) -> String {
    let mut s = String::with_capacity(bytes.len() * 2);
    for b in bytes {
        write!(s, "{b:02x}").unwrap();
    }
    s
}

pub fn from_hex(s: &str) -> Result<Vec<u8>, String> {
    if s.len() % 2 != 0 {
        return Err("odd hex length".into());
    }
    (0..s.len() / 2)
        .map(|i| {
            u8::from_str_radix(&s[2 * i..2 * i + 2], 16).map_err(|e| format!("bad hex: {e}"))
        })
        .collect()
}
