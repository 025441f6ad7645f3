//! CSV, certificate JSON and SVG emission.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::HarnessError;
use crate::mesh_fem::Grading;
use crate::minimax::{MinimaxCertificate, SolverOptions, ValidityReport};
use crate::model::Discretization;

pub const CERT_SCHEMA: &str = "mf-cert/1";

/// 17 significant digits, `nan` for non-finite values.
pub fn fmt_f64(x: f64) -> String {
    if x.is_finite() {
        format!("{x:.16e}")
    } else if x.is_nan() {
        "nan".into()
    } else if x > 0.0 {
        "inf".into()
    } else {
        "-inf".into()
    }
}

pub fn fmt_opt(x: Option<f64>) -> String {
    x.map_or_else(|| "nan".into(), fmt_f64)
}

#[derive(Debug, Default)]
pub struct Csv {
    header: Vec<String>,
    rows: Vec<Vec<String>>,
}

impl Csv {
    pub fn new(header: &[&str]) -> Self {
        Csv {
            header: header.iter().map(|s| s.to_string()).collect(),
            rows: Vec::new(),
        }
    }

    pub fn row(&mut self, cells: Vec<String>) {
        debug_assert_eq!(cells.len(), self.header.len());
        self.rows.push(cells);
    }

    pub fn render(&self) -> String {
        let mut s = self.header.join(",");
        s.push('\n');
        for r in &self.rows {
            s.push_str(&r.join(","));
            s.push('\n');
        }
        s
    }
}

/// Collects every file written by one run.
#[derive(Debug, Default)]
pub struct Writer {
    pub root: PathBuf,
    pub files: Vec<PathBuf>,
}

impl Writer {
    pub fn new(root: &Path) -> Result<Self, HarnessError> {
        fs::create_dir_all(root.join("plotdata")).map_err(|e| HarnessError::Io(format!("{}: {e}", root.display())))?;
        Ok(Writer {
            root: root.to_path_buf(),
            files: Vec::new(),
        })
    }

    pub fn text(&mut self, rel: &str, content: &str) -> Result<(), HarnessError> {
        let p = self.root.join(rel);
        fs::write(&p, content).map_err(|e| HarnessError::Io(format!("{}: {e}", p.display())))?;
        self.files.push(p);
        Ok(())
    }

    pub fn csv(&mut self, rel: &str, csv: &Csv) -> Result<(), HarnessError> {
        self.text(rel, &csv.render())
    }

    pub fn json<T: Serialize>(&mut self, rel: &str, value: &T) -> Result<(), HarnessError> {
        let mut s = serde_json::to_string_pretty(value).map_err(|e| HarnessError::Io(e.to_string()))?;
        s.push('\n');
        self.text(rel, &s)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CertificateFile {
    pub schema: String,
    pub problem: String,
    pub params: serde_json::Value,
    pub n: usize,
    pub grading: Grading,
    pub solver: SolverOptions,
    pub certificate: MinimaxCertificate,
    pub validity: ValidityReport,
}

pub fn load_certificate(path: &Path) -> Result<CertificateFile, HarnessError> {
    let s = fs::read_to_string(path).map_err(|e| HarnessError::Io(format!("{}: {e}", path.display())))?;
    let c: CertificateFile = serde_json::from_str(&s).map_err(|e| HarnessError::Config(format!("certificate: {e}")))?;
    if c.schema != CERT_SCHEMA {
        return Err(HarnessError::Config(format!("unknown certificate schema {}", c.schema)));
    }
    Ok(c)
}

/// Nodal values including the boundary zeros: `x, u_0.., v_0..`.
pub fn solution_csv(d: &Discretization, cert: &MinimaxCertificate) -> Csv {
    let m = d.m();
    let mut header = vec!["x".to_string()];
    header.extend((0..m).map(|k| format!("u{k}")));
    header.extend((0..m).map(|k| format!("v{k}")));
    let h: Vec<&str> = header.iter().map(|s| s.as_str()).collect();
    let mut csv = Csv::new(&h);
    let nodes = d.mesh().nodes();
    for (j, &x) in nodes.iter().enumerate() {
        let interior = j > 0 && j + 1 < nodes.len();
        let mut row = vec![fmt_f64(x)];
        for f in [&cert.u_star, &cert.v_star] {
            for k in 0..m {
                row.push(fmt_f64(if interior { f.get(k, j - 1) } else { 0.0 }));
            }
        }
        csv.row(row);
    }
    csv
}

pub struct Series {
    pub name: String,
    pub points: Vec<(f64, f64)>,
}

const COLORS: [&str; 6] = ["#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#17becf"];

/// Static line chart; non-finite points and nonpositive values on log axes
/// are dropped.
pub fn svg_line_chart(title: &str, xlabel: &str, ylabel: &str, series: &[Series], logx: bool, logy: bool) -> String {
    let tx = |x: f64| if logx { x.log10() } else { x };
    let ty = |y: f64| if logy { y.log10() } else { y };
    let keep = |&(x, y): &(f64, f64)| x.is_finite() && y.is_finite() && (!logx || x > 0.0) && (!logy || y > 0.0);
    let pts: Vec<Vec<(f64, f64)>> = series
        .iter()
        .map(|s| s.points.iter().filter(|p| keep(p)).map(|&(x, y)| (tx(x), ty(y))).collect())
        .collect();
    let all = pts.iter().flatten();
    let (mut x0, mut x1, mut y0, mut y1) = (f64::INFINITY, f64::NEG_INFINITY, f64::INFINITY, f64::NEG_INFINITY);
    for &(x, y) in all {
        x0 = x0.min(x);
        x1 = x1.max(x);
        y0 = y0.min(y);
        y1 = y1.max(y);
    }
    if !(x0.is_finite() && y0.is_finite()) {
        (x0, x1, y0, y1) = (0.0, 1.0, 0.0, 1.0);
    }
    if x1 - x0 <= 0.0 {
        x1 = x0 + 1.0;
    }
    if y1 - y0 <= 0.0 {
        y1 = y0 + 1.0;
    }
    let (w, h, ml, mr, mt, mb) = (640.0, 420.0, 80.0, 20.0, 40.0, 60.0);
    let px = |x: f64| ml + (x - x0) / (x1 - x0) * (w - ml - mr);
    let py = |y: f64| h - mb - (y - y0) / (y1 - y0) * (h - mt - mb);
    let mut s = String::new();
    let _ = writeln!(s, "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{w}\" height=\"{h}\" font-family=\"sans-serif\" font-size=\"12\">");
    let _ = writeln!(s, "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>");
    let _ = writeln!(s, "<text x=\"{}\" y=\"24\" text-anchor=\"middle\" font-size=\"14\">{}</text>", w / 2.0, escape(title));
    let _ = writeln!(
        s,
        "<rect x=\"{ml}\" y=\"{mt}\" width=\"{}\" height=\"{}\" fill=\"none\" stroke=\"black\"/>",
        w - ml - mr,
        h - mt - mb
    );
    for i in 0..=4 {
        let fx = x0 + (x1 - x0) * i as f64 / 4.0;
        let fy = y0 + (y1 - y0) * i as f64 / 4.0;
        let lx = if logx { format!("1e{fx:.2}") } else { format!("{fx:.4}") };
        let ly = if logy { format!("1e{fy:.2}") } else { format!("{fy:.4}") };
        let _ = writeln!(s, "<text x=\"{:.1}\" y=\"{:.1}\" text-anchor=\"middle\">{lx}</text>", px(fx), h - mb + 18.0);
        let _ = writeln!(s, "<text x=\"{:.1}\" y=\"{:.1}\" text-anchor=\"end\">{ly}</text>", ml - 6.0, py(fy) + 4.0);
    }
    let _ = writeln!(s, "<text x=\"{}\" y=\"{}\" text-anchor=\"middle\">{}</text>", w / 2.0, h - 16.0, escape(xlabel));
    let _ = writeln!(
        s,
        "<text x=\"18\" y=\"{}\" text-anchor=\"middle\" transform=\"rotate(-90 18 {})\">{}</text>",
        h / 2.0,
        h / 2.0,
        escape(ylabel)
    );
    for (i, (ser, p)) in series.iter().zip(&pts).enumerate() {
        let c = COLORS[i % COLORS.len()];
        let path: Vec<String> = p.iter().map(|&(x, y)| format!("{:.2},{:.2}", px(x), py(y))).collect();
        let _ = writeln!(s, "<polyline fill=\"none\" stroke=\"{c}\" stroke-width=\"1.5\" points=\"{}\"/>", path.join(" "));
        let _ = writeln!(
            s,
            "<text x=\"{}\" y=\"{}\" fill=\"{c}\">{}</text>",
            ml + 10.0,
            mt + 16.0 + 14.0 * i as f64,
            escape(&ser.name)
        );
    }
    s.push_str("</svg>\n");
    s
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}
