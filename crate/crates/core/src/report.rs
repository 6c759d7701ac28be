//! CSV and SVG output writers. All formatting is fixed-precision so that
//! identical runs produce byte-identical files.

use crate::engine::{CycleRecord, HeatmapRecord};
use crate::optics::{f_qrx, QrxOpticalConfig};
use std::fmt::Write as _;
use std::io::Write as _;
use std::path::Path;

const TRACE_HEADER: &str =
    "t_s,x1,y1,x2,y2,x1_hat,y1_hat,x2_hat,y2_hat,e1_m,e2_m,e_norm_m,valid";

fn num(v: f64) -> String {
    if v.is_finite() {
        format!("{v:.6}")
    } else {
        "nan".to_string()
    }
}

fn opt(v: Option<f64>) -> String {
    num(v.unwrap_or(f64::NAN))
}

/// Per-cycle localization trace.
pub fn trace_csv(records: &[CycleRecord]) -> String {
    let mut out = String::with_capacity(64 * (records.len() + 1));
    out.push_str(TRACE_HEADER);
    out.push('\n');
    for r in records {
        let (e1, e2, norm) = match r.error {
            Some(e) => (Some(e.e1), Some(e.e2), Some(e.norm)),
            None => (None, None, None),
        };
        let _ = writeln!(
            out,
            "{},{},{},{},{},{},{},{},{},{},{},{},{}",
            num(r.t_s),
            num(r.truth.p1.x),
            num(r.truth.p1.y),
            num(r.truth.p2.x),
            num(r.truth.p2.y),
            opt(r.estimate.p1.map(|p| p.x)),
            opt(r.estimate.p1.map(|p| p.y)),
            opt(r.estimate.p2.map(|p| p.x)),
            opt(r.estimate.p2.map(|p| p.y)),
            opt(e1),
            opt(e2),
            opt(norm),
            u8::from(r.complete()),
        );
    }
    out
}

/// SM4 range characterization heatmap.
pub fn heatmap_csv(records: &[HeatmapRecord]) -> String {
    let mut out = String::from("x_m,y_m,mean_err_m,availability\n");
    for r in records {
        let _ = writeln!(
            out,
            "{},{},{},{}",
            num(r.x_m),
            num(r.y_m),
            opt(r.mean_err_m),
            num(r.availability)
        );
    }
    out
}

/// Forward-map curve of a QRX design: `theta_deg, phi`.
pub fn qrx_curve_csv(cfg: &QrxOpticalConfig, n_points: usize) -> String {
    let mut out = String::from("theta_deg,phi\n");
    let n = n_points.max(16);
    let fov = cfg.fov();
    for i in 0..n {
        let theta = -fov + 2.0 * fov * i as f64 / (n - 1) as f64;
        let phi = f_qrx(theta, cfg).unwrap_or(f64::NAN);
        let _ = writeln!(out, "{},{}", num(theta.to_degrees()), num(phi));
    }
    out
}

/// One row of a bound map.
pub struct CrlbMapRecord {
    pub x_m: f64,
    pub y_m: f64,
    pub sigma_rad: f64,
    pub bound_p1_m: f64,
    pub bound_p2_m: f64,
}

/// Position-bound map over a geometry grid.
pub fn crlb_map_csv(records: &[CrlbMapRecord]) -> String {
    let mut out = String::from("x,y,sigma_used,bound_p1_m,bound_p2_m\n");
    for r in records {
        let _ = writeln!(
            out,
            "{},{},{},{},{}",
            num(r.x_m),
            num(r.y_m),
            format_sig(r.sigma_rad),
            format_sig(r.bound_p1_m),
            format_sig(r.bound_p2_m)
        );
    }
    out
}

fn format_sig(v: f64) -> String {
    if v.is_finite() {
        format!("{v:.6e}")
    } else {
        "nan".to_string()
    }
}

pub fn write_text(path: &Path, text: &str) -> std::io::Result<()> {
    if let Some(parent) = path.parent() {
        std::fs::create_dir_all(parent)?;
    }
    let mut f = std::fs::File::create(path)?;
    f.write_all(text.as_bytes())
}

// --- SVG plots --------------------------------------------------------------

const PLOT_W: f64 = 860.0;
const PLOT_H: f64 = 480.0;
const MARGIN: f64 = 60.0;

/// Line plot of one or more `(t, value)` series. The configuration hash is
/// embedded as a comment for traceability.
pub fn svg_line_plot(
    title: &str,
    x_label: &str,
    y_label: &str,
    series: &[(String, Vec<(f64, f64)>)],
    config_hash: u64,
) -> String {
    let mut xs = (f64::INFINITY, f64::NEG_INFINITY);
    let mut ys = (f64::INFINITY, f64::NEG_INFINITY);
    for (_, pts) in series {
        for &(x, y) in pts {
            if !x.is_finite() || !y.is_finite() {
                continue;
            }
            xs = (xs.0.min(x), xs.1.max(x));
            ys = (ys.0.min(y), ys.1.max(y));
        }
    }
    if !xs.0.is_finite() {
        xs = (0.0, 1.0);
    }
    if !ys.0.is_finite() {
        ys = (0.0, 1.0);
    }
    if ys.0 == ys.1 {
        ys.1 = ys.0 + 1.0;
    }
    if xs.0 == xs.1 {
        xs.1 = xs.0 + 1.0;
    }
    let sx = |x: f64| MARGIN + (x - xs.0) / (xs.1 - xs.0) * (PLOT_W - 2.0 * MARGIN);
    let sy = |y: f64| PLOT_H - MARGIN - (y - ys.0) / (ys.1 - ys.0) * (PLOT_H - 2.0 * MARGIN);

    let colors = ["#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b"];
    let mut svg = svg_open(config_hash);
    let _ = writeln!(
        svg,
        "<text x=\"{:.1}\" y=\"24\" font-size=\"16\" text-anchor=\"middle\">{}</text>",
        PLOT_W / 2.0,
        title
    );
    // Axes.
    let _ = writeln!(
        svg,
        "<rect x=\"{m:.1}\" y=\"{m:.1}\" width=\"{w:.1}\" height=\"{h:.1}\" fill=\"none\" stroke=\"#333\"/>",
        m = MARGIN,
        w = PLOT_W - 2.0 * MARGIN,
        h = PLOT_H - 2.0 * MARGIN
    );
    for k in 0..=4 {
        let fx = xs.0 + (xs.1 - xs.0) * k as f64 / 4.0;
        let fy = ys.0 + (ys.1 - ys.0) * k as f64 / 4.0;
        let _ = writeln!(
            svg,
            "<text x=\"{:.1}\" y=\"{:.1}\" font-size=\"11\" text-anchor=\"middle\">{:.3}</text>",
            sx(fx),
            PLOT_H - MARGIN + 16.0,
            fx
        );
        let _ = writeln!(
            svg,
            "<text x=\"{:.1}\" y=\"{:.1}\" font-size=\"11\" text-anchor=\"end\">{:.3}</text>",
            MARGIN - 6.0,
            sy(fy) + 4.0,
            fy
        );
    }
    let _ = writeln!(
        svg,
        "<text x=\"{:.1}\" y=\"{:.1}\" font-size=\"13\" text-anchor=\"middle\">{}</text>",
        PLOT_W / 2.0,
        PLOT_H - 12.0,
        x_label
    );
    let _ = writeln!(
        svg,
        "<text x=\"16\" y=\"{:.1}\" font-size=\"13\" text-anchor=\"middle\" transform=\"rotate(-90 16 {:.1})\">{}</text>",
        PLOT_H / 2.0,
        PLOT_H / 2.0,
        y_label
    );
    for (si, (label, pts)) in series.iter().enumerate() {
        let color = colors[si % colors.len()];
        let mut path = String::new();
        let mut pen = false;
        for &(x, y) in pts {
            if !x.is_finite() || !y.is_finite() {
                pen = false;
                continue;
            }
            let cmd = if pen { 'L' } else { 'M' };
            let _ = write!(path, "{}{:.2} {:.2} ", cmd, sx(x), sy(y));
            pen = true;
        }
        let _ = writeln!(
            svg,
            "<path d=\"{}\" fill=\"none\" stroke=\"{}\" stroke-width=\"1.4\"/>",
            path.trim_end(),
            color
        );
        let _ = writeln!(
            svg,
            "<text x=\"{:.1}\" y=\"{:.1}\" font-size=\"12\" fill=\"{}\">{}</text>",
            PLOT_W - MARGIN - 150.0,
            MARGIN + 16.0 + 16.0 * si as f64,
            color,
            label
        );
    }
    svg.push_str("</svg>\n");
    svg
}

/// Heatmap of the SM4 sweep. Unavailable cells are drawn gray.
pub fn svg_heatmap(
    title: &str,
    records: &[HeatmapRecord],
    cell_w_m: f64,
    cell_h_m: f64,
    config_hash: u64,
) -> String {
    let mut xs = (f64::INFINITY, f64::NEG_INFINITY);
    let mut ys = (f64::INFINITY, f64::NEG_INFINITY);
    for r in records {
        xs = (xs.0.min(r.x_m), xs.1.max(r.x_m));
        ys = (ys.0.min(r.y_m), ys.1.max(r.y_m));
    }
    if !xs.0.is_finite() {
        return svg_open(config_hash) + "</svg>\n";
    }
    let span_x = xs.1 - xs.0 + cell_w_m;
    let span_y = ys.1 - ys.0 + cell_h_m;
    let scale = ((PLOT_W - 2.0 * MARGIN) / span_x).min((PLOT_H - 2.0 * MARGIN) / span_y);
    let px = |x: f64| MARGIN + (x - xs.0) * scale;
    let py = |y: f64| PLOT_H - MARGIN - (y - ys.0 + cell_h_m) * scale;

    let mut svg = svg_open(config_hash);
    let _ = writeln!(
        svg,
        "<text x=\"{:.1}\" y=\"24\" font-size=\"16\" text-anchor=\"middle\">{}</text>",
        PLOT_W / 2.0,
        title
    );
    for r in records {
        let fill = match r.mean_err_m {
            None => "#bbbbbb".to_string(),
            Some(err) => error_color(err),
        };
        let _ = writeln!(
            svg,
            "<rect x=\"{:.2}\" y=\"{:.2}\" width=\"{:.2}\" height=\"{:.2}\" fill=\"{}\"><title>({}, {}): {}</title></rect>",
            px(r.x_m - cell_w_m / 2.0),
            py(r.y_m - cell_h_m / 2.0),
            cell_w_m * scale,
            cell_h_m * scale,
            fill,
            num(r.x_m),
            num(r.y_m),
            opt(r.mean_err_m),
        );
    }
    let _ = writeln!(
        svg,
        "<text x=\"{:.1}\" y=\"{:.1}\" font-size=\"12\">color: log error, green 1 mm, yellow 10 cm, red 1 m+; gray = unavailable</text>",
        MARGIN,
        PLOT_H - 16.0
    );
    svg.push_str("</svg>\n");
    svg
}

/// Map an error in meters onto a green-yellow-red log ramp.
fn error_color(err_m: f64) -> String {
    // log10(err) from -3 (1 mm) to 0 (1 m) mapped to hue 120 -> 0.
    let t = ((err_m.max(1e-6).log10() + 3.0) / 3.0).clamp(0.0, 1.0);
    let hue = 120.0 * (1.0 - t);
    format!("hsl({hue:.0}, 85%, 45%)")
}

fn svg_open(config_hash: u64) -> String {
    format!(
        "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{PLOT_W}\" height=\"{PLOT_H}\" viewBox=\"0 0 {PLOT_W} {PLOT_H}\">\n<!-- config-hash: {config_hash:016x} -->\n<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n"
    )
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::{Point, RelativeTargetState};
    use crate::vlp::{LocalizationError, PositionEstimate};

    fn record(t: f64, valid: bool) -> CycleRecord {
        let truth = RelativeTargetState {
            p1: Point::new(0.0, 5.0),
            p2: Point::new(1.6, 5.0),
            tx_facings: (std::f64::consts::PI, std::f64::consts::PI),
        };
        let estimate = PositionEstimate {
            p1: valid.then_some(Point::new(0.01, 5.02)),
            p2: valid.then_some(Point::new(1.59, 4.99)),
            timestamp_s: t,
        };
        let error = valid.then(|| LocalizationError {
            e1: 0.022,
            e2: 0.014,
            norm: 0.026,
        });
        CycleRecord {
            t_s: t,
            truth,
            estimate,
            error,
            snr_db: [[Some(40.0); 2]; 2],
        }
    }

    #[test]
    fn trace_header_and_rows() {
        let text = trace_csv(&[record(0.01, true), record(0.03, false)]);
        let mut lines = text.lines();
        assert_eq!(
            lines.next().unwrap(),
            "t_s,x1,y1,x2,y2,x1_hat,y1_hat,x2_hat,y2_hat,e1_m,e2_m,e_norm_m,valid"
        );
        let first = lines.next().unwrap();
        assert!(first.starts_with("0.010000,0.000000,5.000000,1.600000,5.000000,"));
        assert!(first.ends_with(",1"));
        let second = lines.next().unwrap();
        assert!(second.contains(",nan,"));
        assert!(second.ends_with(",0"));
        assert_eq!(lines.next(), None);
    }

    #[test]
    fn heatmap_rows() {
        let text = heatmap_csv(&[
            HeatmapRecord {
                x_m: -1.0,
                y_m: 2.0,
                mean_err_m: Some(0.031),
                availability: 1.0,
            },
            HeatmapRecord {
                x_m: 3.0,
                y_m: 1.0,
                mean_err_m: None,
                availability: 0.0,
            },
        ]);
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(lines[0], "x_m,y_m,mean_err_m,availability");
        assert_eq!(lines[1], "-1.000000,2.000000,0.031000,1.000000");
        assert_eq!(lines[2], "3.000000,1.000000,nan,0.000000");
    }

    #[test]
    fn qrx_curve_covers_fov() {
        let cfg = QrxOpticalConfig::default();
        let text = qrx_curve_csv(&cfg, 64);
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(lines.len(), 65);
        assert!(lines[1].starts_with("-80.0"));
        let last: Vec<&str> = lines[64].split(',').collect();
        assert!((last[1].parse::<f64>().unwrap() - 1.0).abs() < 1e-9);
    }

    #[test]
    fn svg_embeds_config_hash() {
        let svg = svg_line_plot(
            "errors",
            "t [s]",
            "e [m]",
            &[("run".to_string(), vec![(0.0, 0.1), (1.0, 0.2)])],
            0xDEADBEEF,
        );
        assert!(svg.contains("config-hash: 00000000deadbeef"));
        assert!(svg.starts_with("<svg"));
        assert!(svg.trim_end().ends_with("</svg>"));
    }
}
