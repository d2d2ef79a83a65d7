//! Equirectangular rendering of grid fields to 8-bit PNG.

use std::f64::consts::PI;

use sparse_sphere::GridField;

use crate::args::PaletteArg;
use crate::error::{config_err, CliError, CliResult};

/// Level assigned to every pixel when the field is constant.
pub const MID_GRAY: u8 = 128;

/// Blue–white–red table, index 0 cold, 255 hot.
pub const DIVERGING: [[u8; 3]; 256] = diverging();

const fn ramp(from: u32, to: u32, j: u32) -> u8 {
    if to >= from {
        (from + (to - from) * j / 127) as u8
    } else {
        (from - (from - to) * j / 127) as u8
    }
}

const fn diverging() -> [[u8; 3]; 256] {
    let cold = [59, 76, 192];
    let hot = [180, 4, 38];
    let mut t = [[0u8; 3]; 256];
    let mut i = 0;
    while i < 256 {
        let mut c = 0;
        while c < 3 {
            t[i][c] = if i < 128 {
                ramp(cold[c], 255, i as u32)
            } else {
                ramp(255, hot[c], (i - 128) as u32)
            };
            c += 1;
        }
        i += 1;
    }
    t
}

/// Linear map of `v` from `[lo, hi]` to `0..=255`; `MID_GRAY` when `lo == hi`.
pub fn level(v: f64, lo: f64, hi: f64) -> u8 {
    if !(hi > lo) {
        return MID_GRAY;
    }
    let t = ((v - lo) / (hi - lo)).clamp(0.0, 1.0);
    (t * 255.0).round() as u8
}

/// Bilinear interpolation of the grid at colatitude `theta`, longitude `phi`.
/// Beyond the outermost latitude rings the nearest ring is used.
pub fn sample(field: &GridField, theta: f64, phi: f64) -> f64 {
    let g = field.grid();
    let nt = g.n_theta();
    let np = g.n_phi();
    let thetas: Vec<f64> = (0..nt).map(|i| g.theta(i)).collect();
    let along = |i: usize| {
        let u = phi.rem_euclid(2.0 * PI) / (2.0 * PI) * np as f64;
        let j0 = (u.floor() as usize) % np;
        let j1 = (j0 + 1) % np;
        let f = u - u.floor();
        field.get(i, j0) * (1.0 - f) + field.get(i, j1) * f
    };
    let k = thetas.partition_point(|&t| t <= theta);
    if k == 0 {
        return along(0);
    }
    if k == nt {
        return along(nt - 1);
    }
    let (t0, t1) = (thetas[k - 1], thetas[k]);
    let f = (theta - t0) / (t1 - t0);
    along(k - 1) * (1.0 - f) + along(k) * f
}

/// Raster of levels, `width × width/2`, row 0 at the north pole.
pub fn levels(field: &GridField, width: u32, symmetric: bool) -> CliResult<(u32, u32, Vec<u8>)> {
    if width < 2 {
        return Err(config_err("image width must be at least 2"));
    }
    let height = width / 2;
    let values = field.values();
    if values.iter().any(|v| !v.is_finite()) {
        return Err(CliError::Io("grid contains non-finite values".into()));
    }
    let lo = values.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let constant = lo == hi;
    let (lo, hi) = if symmetric {
        let a = lo.abs().max(hi.abs());
        (-a, a)
    } else {
        (lo, hi)
    };
    let mut out = Vec::with_capacity((width * height) as usize);
    for r in 0..height {
        let theta = PI * (r as f64 + 0.5) / height as f64;
        for c in 0..width {
            if constant {
                out.push(MID_GRAY);
                continue;
            }
            let phi = 2.0 * PI * (c as f64 + 0.5) / width as f64;
            out.push(level(sample(field, theta, phi), lo, hi));
        }
    }
    Ok((width, height, out))
}

pub fn encode_png(field: &GridField, width: u32, symmetric: bool, palette: PaletteArg) -> CliResult<Vec<u8>> {
    let (w, h, data) = levels(field, width, symmetric)?;
    let mut buf = Vec::new();
    {
        let mut enc = png::Encoder::new(&mut buf, w, h);
        enc.set_depth(png::BitDepth::Eight);
        enc.set_compression(png::Compression::Balanced);
        match palette {
            PaletteArg::Gray => enc.set_color(png::ColorType::Grayscale),
            PaletteArg::Diverging => {
                enc.set_color(png::ColorType::Indexed);
                enc.set_palette(DIVERGING.iter().flatten().copied().collect::<Vec<u8>>());
            }
        }
        let mut writer = enc.write_header().map_err(|e| CliError::Io(e.to_string()))?;
        writer.write_image_data(&data).map_err(|e| CliError::Io(e.to_string()))?;
        writer.finish().map_err(|e| CliError::Io(e.to_string()))?;
    }
    Ok(buf)
}

#[cfg(test)]
mod tests {
    use super::*;
    use sparse_sphere::geom::gauss_legendre_grid;

    #[test]
    fn levels_map_endpoints() {
        assert_eq!(level(0.0, 0.0, 1.0), 0);
        assert_eq!(level(1.0, 0.0, 1.0), 255);
        assert_eq!(level(0.0, -1.0, 1.0), 128);
        assert_eq!(level(3.0, 3.0, 3.0), MID_GRAY);
        assert_eq!(level(7.0, 0.0, 1.0), 255);
    }

    #[test]
    fn palette_runs_cold_white_hot() {
        assert_eq!(DIVERGING[0], [59, 76, 192]);
        assert_eq!(DIVERGING[127], [255, 255, 255]);
        assert_eq!(DIVERGING[128], [255, 255, 255]);
        assert_eq!(DIVERGING[255], [180, 4, 38]);
    }

    #[test]
    fn sample_reproduces_nodes_and_wraps() {
        let g = gauss_legendre_grid(4);
        let f = GridField::from_fn(g.clone(), |x| x.z() + 0.5 * x.x()).unwrap();
        for i in 0..g.n_theta() {
            for j in 0..g.n_phi() {
                assert!((sample(&f, g.theta(i), g.phi(j)) - f.get(i, j)).abs() < 1e-12);
            }
        }
        let a = sample(&f, 1.0, 0.1);
        assert!((sample(&f, 1.0, 0.1 + 2.0 * PI) - a).abs() < 1e-12);
    }
}
