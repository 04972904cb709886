//! Minimal SVG rendering for the explanation panels: acceleration trace,
//! CWT scalogram, and relevance strip stacked vertically.

use har_core::explain::cwt::Scalogram;
use har_core::explain::lrp::RelevanceMap;
use har_core::signal::SignalWindow;

const WIDTH: f64 = 900.0;
const PANEL_H: f64 = 180.0;
const STRIP_H: f64 = 60.0;
const MARGIN: f64 = 40.0;

fn color_heat(v: f64) -> String {
    // 0..1 -> dark blue to yellow.
    let v = v.clamp(0.0, 1.0);
    let r = (255.0 * v) as u8;
    let g = (224.0 * v * v) as u8;
    let b = (96.0 + 120.0 * (1.0 - v)) as u8;
    format!("#{r:02x}{g:02x}{b:02x}")
}

fn color_diverging(v: f64) -> String {
    // -1..1 -> blue through black to red.
    let v = v.clamp(-1.0, 1.0);
    if v >= 0.0 {
        format!("#{:02x}0000", (255.0 * v) as u8)
    } else {
        format!("#0000{:02x}", (255.0 * -v) as u8)
    }
}

fn polyline(points: &[(f64, f64)], stroke: &str) -> String {
    let pts: Vec<String> =
        points.iter().map(|(x, y)| format!("{:.2},{:.2}", x, y)).collect();
    format!(
        "<polyline fill=\"none\" stroke=\"{stroke}\" stroke-width=\"1\" points=\"{}\"/>\n",
        pts.join(" ")
    )
}

/// Stacked panel figure for one window.
pub fn panel_svg(window: &SignalWindow, scalogram: &Scalogram, relevance: &RelevanceMap) -> String {
    let t_len = window.len();
    let total_h = MARGIN * 4.0 + PANEL_H * 2.0 + STRIP_H;
    let mut svg = format!(
        "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{}\" height=\"{}\" viewBox=\"0 0 {} {}\">\n",
        WIDTH + 2.0 * MARGIN,
        total_h,
        WIDTH + 2.0 * MARGIN,
        total_h
    );
    svg.push_str("<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n");
    let x_of = |t: usize| MARGIN + WIDTH * t as f64 / (t_len - 1) as f64;

    // Panel 1: tri-axial trace.
    let mut lo = f32::INFINITY;
    let mut hi = f32::NEG_INFINITY;
    for &v in window.samples() {
        lo = lo.min(v);
        hi = hi.max(v);
    }
    let span = (hi - lo).max(1e-6);
    let y0 = MARGIN;
    for (c, stroke) in ["#c62828", "#2e7d32", "#1565c0"].iter().enumerate() {
        let pts: Vec<(f64, f64)> = window
            .channel(c)
            .iter()
            .enumerate()
            .map(|(t, &v)| (x_of(t), y0 + PANEL_H * (1.0 - ((v - lo) / span) as f64)))
            .collect();
        svg.push_str(&polyline(&pts, stroke));
    }
    svg.push_str(&format!(
        "<text x=\"{MARGIN}\" y=\"{}\" font-size=\"12\">acceleration (x red, y green, z blue)</text>\n",
        y0 - 6.0
    ));

    // Panel 2: scalogram heat map.
    let y1 = MARGIN * 2.0 + PANEL_H;
    let max_mag = scalogram.magnitudes.iter().fold(1e-12f64, |m, &v| m.max(v));
    let cell_w = WIDTH / scalogram.t as f64;
    let cell_h = PANEL_H / scalogram.n_scales as f64;
    for j in 0..scalogram.n_scales {
        for t in 0..scalogram.t {
            let v = scalogram.at(j, t) / max_mag;
            if v < 0.004 {
                continue; // background stays white
            }
            svg.push_str(&format!(
                "<rect x=\"{:.2}\" y=\"{:.2}\" width=\"{:.2}\" height=\"{:.2}\" fill=\"{}\"/>\n",
                MARGIN + t as f64 * cell_w,
                y1 + j as f64 * cell_h,
                cell_w + 0.5,
                cell_h + 0.5,
                color_heat(v)
            ));
        }
    }
    svg.push_str(&format!(
        "<text x=\"{MARGIN}\" y=\"{}\" font-size=\"12\">|CWT| scalogram ({:.2}-{:.2} Hz)</text>\n",
        y1 - 6.0,
        scalogram.freqs_hz.last().unwrap(),
        scalogram.freqs_hz.first().unwrap()
    ));

    // Panel 3: relevance strip (summed over channels).
    let y2 = MARGIN * 3.0 + PANEL_H * 2.0;
    let per_t = relevance.per_timestep();
    let max_abs = per_t.iter().fold(1e-12f64, |m, &v| m.max(v.abs()));
    for (t, &v) in per_t.iter().enumerate() {
        svg.push_str(&format!(
            "<rect x=\"{:.2}\" y=\"{:.2}\" width=\"{:.2}\" height=\"{:.2}\" fill=\"{}\"/>\n",
            MARGIN + t as f64 * cell_w,
            y2,
            cell_w + 0.5,
            STRIP_H,
            color_diverging(v / max_abs)
        ));
    }
    svg.push_str(&format!(
        "<text x=\"{MARGIN}\" y=\"{}\" font-size=\"12\">{} relevance (red supports, blue contradicts)</text>\n",
        y2 - 6.0,
        relevance.method
    ));
    svg.push_str("</svg>\n");
    svg
}
