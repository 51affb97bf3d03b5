//! Artifact writing: every body is built in memory first, then each file is
//! written to a temporary sibling and renamed into place.

use std::fmt::Write as _;
use std::io::Write as _;
use std::path::{Path, PathBuf};

use serde_json::{json, Value};
use sha2::{Digest, Sha256};

/// One output file.
#[derive(Debug, Clone, PartialEq)]
pub struct Artifact {
    pub name: String,
    pub body: Vec<u8>,
}

impl Artifact {
    pub fn text(name: &str, body: String) -> Self {
        Self { name: name.to_string(), body: body.into_bytes() }
    }

    pub fn json(name: &str, value: &Value) -> Self {
        let mut s = serde_json::to_string_pretty(value).expect("json values serialize");
        s.push('\n');
        Self::text(name, s)
    }
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

/// Run facts recorded next to the artifacts.
#[derive(Debug, Clone)]
pub struct ManifestInfo {
    pub subcommand: String,
    pub config_path: PathBuf,
    pub config_sha256: String,
    pub seed: u64,
    pub workers: usize,
    pub wall_time_seconds: f64,
    pub started_unix: u64,
}

pub const MANIFEST_NAME: &str = "run_manifest.json";

pub fn manifest(info: &ManifestInfo, artifacts: &[Artifact]) -> Artifact {
    let files: Vec<Value> = artifacts
        .iter()
        .map(|a| json!({ "name": a.name, "sha256": sha256_hex(&a.body), "bytes": a.body.len() }))
        .collect();
    Artifact::json(
        MANIFEST_NAME,
        &json!({
            "subcommand": info.subcommand,
            "versions": { "slowfast": env!("CARGO_PKG_VERSION") },
            "config": info.config_path.display().to_string(),
            "config_sha256": info.config_sha256,
            "seed": info.seed,
            "workers": info.workers,
            "started_unix": info.started_unix,
            "wall_time_seconds": info.wall_time_seconds,
            "files": files,
        }),
    )
}

/// Writes each artifact through a temporary file in `dir` and an atomic
/// rename, so a reader never sees a half-written file.
pub fn write_all(dir: &Path, artifacts: &[Artifact]) -> std::io::Result<Vec<PathBuf>> {
    std::fs::create_dir_all(dir)?;
    let mut written = Vec::with_capacity(artifacts.len());
    for a in artifacts {
        let mut tmp = tempfile::Builder::new().prefix(".slowfast-").tempfile_in(dir)?;
        tmp.write_all(&a.body)?;
        tmp.as_file().sync_all()?;
        let target = dir.join(&a.name);
        tmp.persist(&target).map_err(|e| e.error)?;
        written.push(target);
    }
    Ok(written)
}

/// Whitespace-separated columns under a `# name name ...` header.
pub fn plot_data(columns: &[&str], rows: &[Vec<f64>]) -> String {
    let mut s = format!("# {}\n", columns.join(" "));
    for r in rows {
        let cells: Vec<String> = r.iter().map(|v| format!("{v:.12e}")).collect();
        s.push_str(&cells.join(" "));
        s.push('\n');
    }
    s
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Style {
    Markers,
    Line,
}

#[derive(Debug, Clone)]
pub struct Series {
    pub label: String,
    pub points: Vec<(f64, f64)>,
    pub style: Style,
}

#[derive(Debug, Clone)]
pub struct Plot {
    pub title: String,
    pub x_label: String,
    pub y_label: String,
    pub log_x: bool,
    pub log_y: bool,
    pub series: Vec<Series>,
}

const WIDTH: f64 = 640.0;
const HEIGHT: f64 = 420.0;
const MARGIN: f64 = 60.0;
const COLORS: [&str; 4] = ["#1f4e79", "#b03a2e", "#1e8449", "#7d3c98"];

impl Plot {
    /// Static SVG; points that cannot be drawn on a log axis are dropped.
    pub fn to_svg(&self) -> String {
        let tx = |v: f64| if self.log_x { v.log10() } else { v };
        let ty = |v: f64| if self.log_y { v.log10() } else { v };
        let pts: Vec<Vec<(f64, f64)>> = self
            .series
            .iter()
            .map(|s| {
                s.points
                    .iter()
                    .map(|&(x, y)| (tx(x), ty(y)))
                    .filter(|(x, y)| x.is_finite() && y.is_finite())
                    .collect()
            })
            .collect();
        let all = pts.iter().flatten();
        let (mut x0, mut x1, mut y0, mut y1) = (f64::INFINITY, f64::NEG_INFINITY, f64::INFINITY, f64::NEG_INFINITY);
        for &(x, y) in all {
            x0 = x0.min(x);
            x1 = x1.max(x);
            y0 = y0.min(y);
            y1 = y1.max(y);
        }
        if !x0.is_finite() {
            (x0, x1, y0, y1) = (0.0, 1.0, 0.0, 1.0);
        }
        if x1 - x0 < 1e-12 {
            x1 = x0 + 1.0;
        }
        if y1 - y0 < 1e-12 {
            y1 = y0 + 1.0;
        }
        let pad_y = 0.05 * (y1 - y0);
        let (y0, y1) = (y0 - pad_y, y1 + pad_y);
        let sx = |x: f64| MARGIN + (x - x0) / (x1 - x0) * (WIDTH - 2.0 * MARGIN);
        let sy = |y: f64| HEIGHT - MARGIN - (y - y0) / (y1 - y0) * (HEIGHT - 2.0 * MARGIN);
        let tick = |v: f64, log: bool| if log { format!("{:.3e}", 10f64.powf(v)) } else { format!("{v:.3}") };

        let mut s = String::new();
        let _ = writeln!(
            s,
            r#"<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{HEIGHT}" viewBox="0 0 {WIDTH} {HEIGHT}" font-family="sans-serif" font-size="12">"#
        );
        let _ = writeln!(s, r#"<rect x="0" y="0" width="{WIDTH}" height="{HEIGHT}" fill="white"/>"#);
        let _ = writeln!(s, r#"<text x="{}" y="24" text-anchor="middle" font-size="14">{}</text>"#, WIDTH / 2.0, escape(&self.title));
        let (l, r, t, b) = (MARGIN, WIDTH - MARGIN, MARGIN, HEIGHT - MARGIN);
        let _ = writeln!(s, r#"<rect x="{l}" y="{t}" width="{}" height="{}" fill="none" stroke="black"/>"#, r - l, b - t);
        for (v, anchor_x) in [(x0, l), (x1, r)] {
            let _ = writeln!(s, r#"<text x="{anchor_x}" y="{}" text-anchor="middle">{}</text>"#, b + 16.0, tick(v, self.log_x));
        }
        for (v, anchor_y) in [(y0, b), (y1, t)] {
            let _ = writeln!(s, r#"<text x="{}" y="{anchor_y}" text-anchor="end">{}</text>"#, l - 4.0, tick(v, self.log_y));
        }
        let _ = writeln!(s, r#"<text x="{}" y="{}" text-anchor="middle">{}</text>"#, WIDTH / 2.0, HEIGHT - 16.0, escape(&self.x_label));
        let _ = writeln!(
            s,
            r#"<text x="16" y="{}" text-anchor="middle" transform="rotate(-90 16 {})">{}</text>"#,
            HEIGHT / 2.0,
            HEIGHT / 2.0,
            escape(&self.y_label)
        );
        for (i, (series, p)) in self.series.iter().zip(&pts).enumerate() {
            let color = COLORS[i % COLORS.len()];
            match series.style {
                Style::Markers => {
                    for &(x, y) in p {
                        let _ = writeln!(s, r#"<circle cx="{:.2}" cy="{:.2}" r="3.5" fill="{color}"/>"#, sx(x), sy(y));
                    }
                }
                Style::Line => {
                    let coords: Vec<String> = p.iter().map(|&(x, y)| format!("{:.2},{:.2}", sx(x), sy(y))).collect();
                    let _ = writeln!(s, r#"<polyline points="{}" fill="none" stroke="{color}" stroke-width="1.5"/>"#, coords.join(" "));
                }
            }
            let ly = t + 16.0 + 16.0 * i as f64;
            let _ = writeln!(s, r#"<text x="{}" y="{ly}" fill="{color}">{}</text>"#, l + 8.0, escape(&series.label));
        }
        s.push_str("</svg>\n");
        s
    }
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn atomic_write_leaves_no_temporaries() {
        let dir = tempfile::tempdir().unwrap();
        let arts = vec![Artifact::text("a.csv", "x\n1\n".into()), Artifact::json("b.json", &json!({"k": 1}))];
        write_all(dir.path(), &arts).unwrap();
        let mut names: Vec<String> =
            std::fs::read_dir(dir.path()).unwrap().map(|e| e.unwrap().file_name().into_string().unwrap()).collect();
        names.sort();
        assert_eq!(names, vec!["a.csv", "b.json"]);
        assert_eq!(std::fs::read_to_string(dir.path().join("b.json")).unwrap(), "{\n  \"k\": 1\n}\n");
    }

    #[test]
    fn manifest_hashes_every_file() {
        let arts = vec![Artifact::text("a.csv", "abc".into())];
        let info = ManifestInfo {
            subcommand: "simulate".into(),
            config_path: "c.toml".into(),
            config_sha256: sha256_hex(b""),
            seed: 3,
            workers: 1,
            wall_time_seconds: 0.5,
            started_unix: 0,
        };
        let m: Value = serde_json::from_slice(&manifest(&info, &arts).body).unwrap();
        assert_eq!(m["files"][0]["sha256"], "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad");
        assert_eq!(m["files"][0]["bytes"], 3);
        assert_eq!(m["seed"], 3);
    }

    #[test]
    fn log_plot_drops_nonpositive_points() {
        let plot = Plot {
            title: "t".into(),
            x_label: "x".into(),
            y_label: "y".into(),
            log_x: true,
            log_y: true,
            series: vec![Series { label: "s".into(), points: vec![(1.0, 1.0), (10.0, 0.0), (100.0, 10.0)], style: Style::Markers }],
        };
        let svg = plot.to_svg();
        assert_eq!(svg.matches("<circle").count(), 2);
        assert!(svg.starts_with("<svg") && svg.ends_with("</svg>\n"));
    }
}
