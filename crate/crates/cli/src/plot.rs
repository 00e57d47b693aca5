//! Minimal line-plot renderer: axes, ticks, series with markers and a legend.

use eclad::imageio::Raster;

const WIDTH: usize = 640;
const HEIGHT: usize = 400;
const LEFT: usize = 70;
const RIGHT: usize = 20;
const TOP: usize = 40;
const BOTTOM: usize = 50;
const SCALE: usize = 2;

const PALETTE: [[u8; 3]; 6] = [
    [31, 119, 180],
    [214, 39, 40],
    [44, 160, 44],
    [255, 127, 14],
    [148, 103, 189],
    [23, 190, 207],
];

pub struct Series {
    pub name: String,
    pub points: Vec<(f64, f64)>,
}

/// 3×5 bitmap glyphs, one row per byte, most significant of the low three bits on the left.
fn glyph(ch: char) -> [u8; 5] {
    match ch.to_ascii_uppercase() {
        '0' => [7, 5, 5, 5, 7],
        '1' => [2, 6, 2, 2, 7],
        '2' => [7, 1, 7, 4, 7],
        '3' => [7, 1, 7, 1, 7],
        '4' => [5, 5, 7, 1, 1],
        '5' => [7, 4, 7, 1, 7],
        '6' => [7, 4, 7, 5, 7],
        '7' => [7, 1, 1, 1, 1],
        '8' => [7, 5, 7, 5, 7],
        '9' => [7, 5, 7, 1, 7],
        '.' => [0, 0, 0, 0, 2],
        ',' => [0, 0, 0, 2, 4],
        ':' => [0, 2, 0, 2, 0],
        '-' => [0, 0, 7, 0, 0],
        '+' => [0, 2, 7, 2, 0],
        '=' => [0, 7, 0, 7, 0],
        '_' => [0, 0, 0, 0, 7],
        '/' => [1, 1, 2, 4, 4],
        '(' => [2, 4, 4, 4, 2],
        ')' => [2, 1, 1, 1, 2],
        'A' => [2, 5, 7, 5, 5],
        'B' => [6, 5, 6, 5, 6],
        'C' => [3, 4, 4, 4, 3],
        'D' => [6, 5, 5, 5, 6],
        'E' => [7, 4, 6, 4, 7],
        'F' => [7, 4, 6, 4, 4],
        'G' => [3, 4, 5, 5, 3],
        'H' => [5, 5, 7, 5, 5],
        'I' => [7, 2, 2, 2, 7],
        'J' => [1, 1, 1, 5, 2],
        'K' => [5, 5, 6, 5, 5],
        'L' => [4, 4, 4, 4, 7],
        'M' => [5, 7, 7, 5, 5],
        'N' => [6, 5, 5, 5, 5],
        'O' => [2, 5, 5, 5, 2],
        'P' => [6, 5, 6, 4, 4],
        'Q' => [2, 5, 5, 6, 3],
        'R' => [6, 5, 6, 5, 5],
        'S' => [3, 4, 2, 1, 6],
        'T' => [7, 2, 2, 2, 2],
        'U' => [5, 5, 5, 5, 7],
        'V' => [5, 5, 5, 5, 2],
        'W' => [5, 5, 7, 7, 5],
        'X' => [5, 5, 2, 5, 5],
        'Y' => [5, 5, 2, 2, 2],
        'Z' => [7, 1, 2, 4, 7],
        _ => [0; 5],
    }
}

struct Canvas {
    pixels: Vec<u8>,
}

impl Canvas {
    fn new() -> Self {
        Self {
            pixels: vec![255; WIDTH * HEIGHT * 3],
        }
    }

    fn set(&mut self, x: i64, y: i64, color: [u8; 3]) {
        if x >= 0 && y >= 0 && (x as usize) < WIDTH && (y as usize) < HEIGHT {
            let i = (y as usize * WIDTH + x as usize) * 3;
            self.pixels[i..i + 3].copy_from_slice(&color);
        }
    }

    fn rect(&mut self, x: i64, y: i64, w: i64, h: i64, color: [u8; 3]) {
        for yy in y..y + h {
            for xx in x..x + w {
                self.set(xx, yy, color);
            }
        }
    }

    fn line(&mut self, (x0, y0): (i64, i64), (x1, y1): (i64, i64), color: [u8; 3], thick: bool) {
        let (dx, dy) = ((x1 - x0).abs(), -(y1 - y0).abs());
        let (sx, sy) = (if x0 < x1 { 1 } else { -1 }, if y0 < y1 { 1 } else { -1 });
        let (mut x, mut y, mut err) = (x0, y0, dx + dy);
        loop {
            if thick {
                self.rect(x, y, 2, 2, color);
            } else {
                self.set(x, y, color);
            }
            if x == x1 && y == y1 {
                break;
            }
            let e2 = 2 * err;
            if e2 >= dy {
                err += dy;
                x += sx;
            }
            if e2 <= dx {
                err += dx;
                y += sy;
            }
        }
    }

    fn text(&mut self, x: i64, y: i64, s: &str, color: [u8; 3]) {
        let step = (4 * SCALE) as i64;
        for (k, ch) in s.chars().enumerate() {
            for (row, bits) in glyph(ch).iter().enumerate() {
                for col in 0..3 {
                    if bits >> (2 - col) & 1 == 1 {
                        let px = x + k as i64 * step + (col * SCALE) as i64;
                        let py = y + (row * SCALE) as i64;
                        self.rect(px, py, SCALE as i64, SCALE as i64, color);
                    }
                }
            }
        }
    }
}

fn text_width(s: &str) -> i64 {
    (s.chars().count() * 4 * SCALE) as i64
}

fn nice_step(range: f64) -> f64 {
    let raw = range / 5.0;
    let mag = 10f64.powf(raw.log10().floor());
    let m = raw / mag;
    let f = if m <= 1.0 {
        1.0
    } else if m <= 2.0 {
        2.0
    } else if m <= 5.0 {
        5.0
    } else {
        10.0
    };
    f * mag
}

fn tick_label(v: f64, step: f64) -> String {
    let decimals = (-step.log10().floor()).clamp(0.0, 3.0) as usize;
    let s = format!("{v:.decimals$}");
    match s.strip_prefix('-') {
        Some(rest) if rest.chars().all(|c| c == '0' || c == '.') => rest.to_string(),
        _ => s,
    }
}

fn ticks(lo: f64, hi: f64) -> (f64, f64, f64) {
    let step = nice_step(hi - lo);
    ((lo / step).floor() * step, (hi / step).ceil() * step, step)
}

/// Renders the series as an RGB raster.
pub fn line_plot(title: &str, x_label: &str, series: &[Series]) -> anyhow::Result<Raster> {
    let all: Vec<(f64, f64)> = series
        .iter()
        .flat_map(|s| s.points.iter().copied())
        .collect();
    anyhow::ensure!(!all.is_empty(), "nothing to plot");
    anyhow::ensure!(
        all.iter().all(|(x, y)| x.is_finite() && y.is_finite()),
        "plot values must be finite"
    );
    let fold = |f: fn(&(f64, f64)) -> f64| {
        all.iter()
            .map(f)
            .fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), v| {
                (a.min(v), b.max(v))
            })
    };
    let (mut x_lo, mut x_hi) = fold(|p| p.0);
    let (mut y_lo, mut y_hi) = fold(|p| p.1);
    if x_hi == x_lo {
        x_lo -= 1.0;
        x_hi += 1.0;
    }
    if y_hi == y_lo {
        y_lo -= 1.0;
        y_hi += 1.0;
    }
    let (x_lo, x_hi, x_step) = ticks(x_lo, x_hi);
    let (y_lo, y_hi, y_step) = ticks(y_lo, y_hi);

    let (pw, ph) = (
        (WIDTH - LEFT - RIGHT) as f64,
        (HEIGHT - TOP - BOTTOM) as f64,
    );
    let to_px = |x: f64, y: f64| {
        (
            LEFT as i64 + ((x - x_lo) / (x_hi - x_lo) * pw).round() as i64,
            (TOP as f64 + ph - (y - y_lo) / (y_hi - y_lo) * ph).round() as i64,
        )
    };

    let mut c = Canvas::new();
    let black = [0, 0, 0];
    let grid = [225, 225, 225];
    let (x0, y0) = to_px(x_lo, y_lo);
    let (x1, y1) = to_px(x_hi, y_hi);

    let n_x = ((x_hi - x_lo) / x_step).round() as usize;
    for k in 0..=n_x {
        let v = x_lo + k as f64 * x_step;
        let (px, _) = to_px(v, y_lo);
        c.line((px, y1), (px, y0), grid, false);
        c.line((px, y0), (px, y0 + 5), black, false);
        let label = tick_label(v, x_step);
        c.text(px - text_width(&label) / 2, y0 + 9, &label, black);
    }
    let n_y = ((y_hi - y_lo) / y_step).round() as usize;
    for k in 0..=n_y {
        let v = y_lo + k as f64 * y_step;
        let (_, py) = to_px(x_lo, v);
        c.line((x0, py), (x1, py), grid, false);
        c.line((x0 - 5, py), (x0, py), black, false);
        let label = tick_label(v, y_step);
        c.text(x0 - 9 - text_width(&label), py - 5, &label, black);
    }
    c.line((x0, y0), (x1, y0), black, false);
    c.line((x0, y0), (x0, y1), black, false);
    c.text((WIDTH as i64 - text_width(title)) / 2, 12, title, black);
    c.text(
        (LEFT as i64 + x1 - text_width(x_label)) / 2 + LEFT as i64 / 2,
        HEIGHT as i64 - 18,
        x_label,
        black,
    );

    for (k, s) in series.iter().enumerate() {
        let color = PALETTE[k % PALETTE.len()];
        let pts: Vec<(i64, i64)> = s.points.iter().map(|&(x, y)| to_px(x, y)).collect();
        for w in pts.windows(2) {
            c.line(w[0], w[1], color, true);
        }
        for &(px, py) in &pts {
            c.rect(px - 3, py - 3, 7, 7, color);
        }
    }

    let longest = series
        .iter()
        .map(|s| text_width(&s.name))
        .max()
        .unwrap_or(0);
    let (lx, ly) = (x1 - longest - 44, y0 - series.len() as i64 * 16 - 8);
    c.rect(
        lx - 6,
        ly - 6,
        longest + 46,
        series.len() as i64 * 16 + 8,
        [250, 250, 250],
    );
    for (k, s) in series.iter().enumerate() {
        let color = PALETTE[k % PALETTE.len()];
        let y = ly + k as i64 * 16;
        c.rect(lx, y + 3, 24, 4, color);
        c.text(lx + 32, y, &s.name, black);
    }

    Ok(Raster {
        width: WIDTH as u32,
        height: HEIGHT as u32,
        channels: 3,
        pixels: c.pixels,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn nice_steps() {
        assert_eq!(nice_step(10.0), 2.0);
        assert_eq!(nice_step(64.0), 20.0);
        assert_eq!(nice_step(1.0), 0.2);
        assert_eq!(tick_label(0.4, 0.2), "0.4");
        assert_eq!(tick_label(40.0, 20.0), "40");
    }

    #[test]
    fn plot_draws_series_colours() {
        let s = vec![
            Series {
                name: "dst".into(),
                points: vec![(0.0, 0.0), (8.0, 0.5), (16.0, 1.0)],
            },
            Series {
                name: "jaccard".into(),
                points: vec![(0.0, 1.0), (8.0, 0.0), (16.0, 0.0)],
            },
        ];
        let r = line_plot("offset study", "offset px", &s).unwrap();
        assert_eq!(r.pixels.len(), WIDTH * HEIGHT * 3);
        for color in &PALETTE[..2] {
            assert!(r.pixels.chunks(3).any(|p| p == color));
        }
        assert!(line_plot("t", "x", &[]).is_err());
    }
}
