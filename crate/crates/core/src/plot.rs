//! Minimal log-log line plots written as PNG. Axes and curves only, no text.

use std::path::Path;

use image::{Rgb, RgbImage};

const W: u32 = 640;
const H: u32 = 480;
const MARGIN: f64 = 40.0;
const COLORS: [[u8; 3]; 5] = [[31, 119, 180], [214, 39, 40], [44, 160, 44], [148, 103, 189], [255, 127, 14]];

fn draw_line(img: &mut RgbImage, (x0, y0): (f64, f64), (x1, y1): (f64, f64), color: Rgb<u8>) {
    let steps = ((x1 - x0).abs().max((y1 - y0).abs()).ceil() as usize).max(1);
    for i in 0..=steps {
        let s = i as f64 / steps as f64;
        let (x, y) = (x0 + s * (x1 - x0), y0 + s * (y1 - y0));
        if x >= 0.0 && y >= 0.0 && (x as u32) < W && (y as u32) < H {
            img.put_pixel(x as u32, y as u32, color);
        }
    }
}

/// Plots every `(x, y)` series with positive finite entries on shared log axes.
pub fn loglog_png(path: &Path, series: &[(Vec<f64>, Vec<f64>)]) -> Result<(), String> {
    let pts: Vec<Vec<(f64, f64)>> = series
        .iter()
        .map(|(xs, ys)| {
            xs.iter()
                .zip(ys)
                .filter(|(x, y)| **x > 0.0 && **y > 0.0 && x.is_finite() && y.is_finite())
                .map(|(x, y)| (x.log10(), y.log10()))
                .collect()
        })
        .collect();
    let all: Vec<&(f64, f64)> = pts.iter().flatten().collect();
    if all.is_empty() {
        return Err("nothing to plot".into());
    }
    let (mut x_lo, mut x_hi, mut y_lo, mut y_hi) = (f64::MAX, f64::MIN, f64::MAX, f64::MIN);
    for &&(x, y) in &all {
        x_lo = x_lo.min(x);
        x_hi = x_hi.max(x);
        y_lo = y_lo.min(y);
        y_hi = y_hi.max(y);
    }
    if x_hi - x_lo < 1e-12 {
        x_hi = x_lo + 1.0;
    }
    if y_hi - y_lo < 1e-12 {
        y_hi = y_lo + 1.0;
    }
    let map = |(x, y): (f64, f64)| {
        (
            MARGIN + (x - x_lo) / (x_hi - x_lo) * (W as f64 - 2.0 * MARGIN),
            H as f64 - MARGIN - (y - y_lo) / (y_hi - y_lo) * (H as f64 - 2.0 * MARGIN),
        )
    };
    let mut img = RgbImage::from_pixel(W, H, Rgb([255, 255, 255]));
    let black = Rgb([0, 0, 0]);
    draw_line(&mut img, (MARGIN, H as f64 - MARGIN), (W as f64 - MARGIN, H as f64 - MARGIN), black);
    draw_line(&mut img, (MARGIN, MARGIN), (MARGIN, H as f64 - MARGIN), black);
    // decade ticks
    for d in (x_lo.ceil() as i64)..=(x_hi.floor() as i64) {
        let (x, y) = map((d as f64, y_lo));
        draw_line(&mut img, (x, y), (x, y + 6.0), black);
    }
    for d in (y_lo.ceil() as i64)..=(y_hi.floor() as i64) {
        let (x, y) = map((x_lo, d as f64));
        draw_line(&mut img, (x - 6.0, y), (x, y), black);
    }
    for (i, curve) in pts.iter().enumerate() {
        let color = Rgb(COLORS[i % COLORS.len()]);
        for w in curve.windows(2) {
            draw_line(&mut img, map(w[0]), map(w[1]), color);
        }
        for &p in curve {
            let (x, y) = map(p);
            draw_line(&mut img, (x - 2.0, y), (x + 2.0, y), color);
        }
    }
    img.save(path).map_err(|e| e.to_string())
}
