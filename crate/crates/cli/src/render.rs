use std::fmt::Write as _;
use std::path::Path;

use potts_sir::io;

use crate::CliResult;

/// 8-bit RGB raster written as binary PPM (P6).
#[derive(Debug, Clone, PartialEq)]
pub struct Image {
    pub width: usize,
    pub height: usize,
    pub pixels: Vec<[u8; 3]>,
}

impl Image {
    /// One `scale x scale` block per grid cell of a row-major `height x width` field.
    pub fn from_cells(height: usize, width: usize, scale: usize, color: impl Fn(usize) -> [u8; 3]) -> Self {
        let scale = scale.max(1);
        let (h, w) = (height * scale, width * scale);
        let pixels = (0..h * w)
            .map(|i| color((i / w / scale) * width + (i % w) / scale))
            .collect();
        Self {
            width: w,
            height: h,
            pixels,
        }
    }

    pub fn to_ppm(&self) -> Vec<u8> {
        let mut out = format!("P6\n{} {}\n255\n", self.width, self.height).into_bytes();
        out.extend(self.pixels.iter().flatten());
        out
    }
}

const NEGATIVE: [f64; 3] = [33.0, 102.0, 172.0];
const POSITIVE: [f64; 3] = [178.0, 24.0, 43.0];

/// Diverging blue-white-red map of `v / limit`, white at zero.
pub fn diverging(v: f64, limit: f64) -> [u8; 3] {
    let t = if limit > 0.0 { (v / limit).clamp(-1.0, 1.0) } else { 0.0 };
    let end = if t < 0.0 { NEGATIVE } else { POSITIVE };
    let a = t.abs();
    end.map(|e| (255.0 + a * (e - 255.0)).round() as u8)
}

const PALETTE: [[u8; 3]; 10] = [
    [31, 119, 180],
    [255, 127, 14],
    [44, 160, 44],
    [214, 39, 40],
    [148, 103, 189],
    [140, 86, 75],
    [227, 119, 194],
    [127, 127, 127],
    [188, 189, 34],
    [23, 190, 207],
];

/// Distinct color for cluster `k`; beyond the palette, golden-angle hues.
pub fn categorical(k: usize) -> [u8; 3] {
    if k < PALETTE.len() {
        return PALETTE[k];
    }
    let hue = ((k - PALETTE.len()) as f64 * 137.507_764) % 360.0;
    let lightness = [0.35, 0.5, 0.65][(k - PALETTE.len()) % 3];
    hsl(hue, 0.7, lightness)
}

fn hsl(h: f64, s: f64, l: f64) -> [u8; 3] {
    let c = (1.0 - (2.0 * l - 1.0).abs()) * s;
    let x = c * (1.0 - ((h / 60.0) % 2.0 - 1.0).abs());
    let (r, g, b) = match (h / 60.0) as u32 {
        0 => (c, x, 0.0),
        1 => (x, c, 0.0),
        2 => (0.0, c, x),
        3 => (0.0, x, c),
        4 => (x, 0.0, c),
        _ => (c, 0.0, x),
    };
    let m = l - c / 2.0;
    [r, g, b].map(|v| ((v + m) * 255.0).round() as u8)
}

fn grid_csv<V: std::fmt::Display>(width: usize, values: &[V]) -> String {
    let mut out = String::new();
    for row in values.chunks(width.max(1)) {
        let line: Vec<String> = row.iter().map(ToString::to_string).collect();
        let _ = writeln!(out, "{}", line.join(","));
    }
    out
}

fn write_image(out: &Path, name: &str, image: &Image) -> CliResult {
    let path = out.join(format!("{name}.ppm"));
    std::fs::write(&path, image.to_ppm()).map_err(|source| potts_sir::Error::Io { path, source })?;
    Ok(())
}

pub fn render(fit_dir: &Path, summary_dir: &Path, data_dir: Option<&Path>, out: &Path, scale: usize) -> CliResult {
    let fit = io::read_fit(fit_dir)?;
    let lattice = io::read_lattice(fit_dir)?;
    let labels = io::read_minvi_labels(&io::require_file(summary_dir, "minvi_labels.csv")?)?;
    let truth = match data_dir {
        Some(d) => io::read_truth(d)?,
        None => None,
    };
    let (h, w) = (lattice.height(), lattice.width());
    let mean_beta = fit.posterior_mean_beta();
    let mut images = vec![("beta_mean", mean_beta.clone())];
    if let Some(t) = &truth {
        images.push(("beta_true", t.true_beta.clone()));
    }
    // one color scale for all coefficient images so they are comparable
    let limit = images
        .iter()
        .flat_map(|(_, v)| v.iter())
        .fold(0.0f64, |m, v| m.max(v.abs()));
    std::fs::create_dir_all(out).map_err(|source| potts_sir::Error::Io {
        path: out.to_path_buf(),
        source,
    })?;
    for (name, values) in &images {
        write_image(
            out,
            name,
            &Image::from_cells(h, w, scale, |j| diverging(values[j], limit)),
        )?;
        io::write_text(&out.join(format!("{name}.csv")), &grid_csv(w, values))?;
    }
    let z = labels.labels();
    write_image(
        out,
        "minvi_labels",
        &Image::from_cells(h, w, scale, |j| categorical(z[j])),
    )?;
    let one_based: Vec<usize> = z.iter().map(|l| l + 1).collect();
    io::write_text(&out.join("minvi_labels.csv"), &grid_csv(w, &one_based))?;
    log::info!(
        "{} images ({}x{}) -> {}",
        images.len() + 1,
        w * scale.max(1),
        h * scale.max(1),
        out.display()
    );
    Ok(())
}
