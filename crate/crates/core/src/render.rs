//! Static figures: grayscale and signed-colormap PNGs, SVG quiver plots.

use std::fmt::Write as _;
use std::str::FromStr;

use image::codecs::png::PngEncoder;
use image::{ExtendedColorType, ImageEncoder};

use crate::error::{Error, Result};
use crate::grid::ScalarField;
use crate::io::FieldKind;

pub const DEFAULT_QUIVER_STRIDE: usize = 4;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Style {
    Gray,
    SignedColormap,
    Quiver,
}

impl FromStr for Style {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "gray" => Ok(Style::Gray),
            "signed-colormap" => Ok(Style::SignedColormap),
            "quiver" => Ok(Style::Quiver),
            other => Err(Error::Render(format!("unknown style `{other}`"))),
        }
    }
}

impl Style {
    pub fn as_str(&self) -> &'static str {
        match self {
            Style::Gray => "gray",
            Style::SignedColormap => "signed-colormap",
            Style::Quiver => "quiver",
        }
    }

    pub fn accepts(&self, kind: FieldKind) -> bool {
        match self {
            Style::Gray => true,
            Style::SignedColormap => matches!(kind, FieldKind::Velocity | FieldKind::Phase),
            Style::Quiver => kind == FieldKind::Velocity,
        }
    }
}

/// Value range shown in a figure, written next to it as a text sidecar.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct RenderRange {
    pub min: f64,
    pub max: f64,
}

impl RenderRange {
    pub fn sidecar(&self, style: Style, kind: FieldKind) -> String {
        format!(
            "style={}\nkind={}\nmin={:e}\nmax={:e}\n",
            style.as_str(),
            kind.as_str(),
            self.min,
            self.max
        )
    }
}

fn encode_png(width: usize, height: usize, data: &[u8], color: ExtendedColorType) -> Result<Vec<u8>> {
    let mut out = Vec::new();
    PngEncoder::new(&mut out)
        .write_image(data, width as u32, height as u32, color)
        .map_err(|e| Error::Render(e.to_string()))?;
    Ok(out)
}

/// 8-bit gray levels spanning `[min, max]`; a constant field maps to mid-gray.
pub fn gray_pixels(field: &ScalarField) -> (Vec<u8>, RenderRange) {
    let v = field.values();
    let min = v.iter().copied().fold(f64::INFINITY, f64::min);
    let max = v.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let span = max - min;
    let pixels = v
        .iter()
        .map(|&x| {
            if span > 0.0 {
                ((x - min) / span * 255.0).round() as u8
            } else {
                128
            }
        })
        .collect();
    (pixels, RenderRange { min, max })
}

/// Blue–white–red map of `t ∈ [-1, 1]`.
pub fn signed_color(t: f64) -> [u8; 3] {
    let t = t.clamp(-1.0, 1.0);
    let fade = (255.0 * (1.0 - t.abs())).round() as u8;
    if t >= 0.0 {
        [255, fade, fade]
    } else {
        [fade, fade, 255]
    }
}

/// RGB pixels on the symmetric range `[-M, M]`, `M = max |v|`.
pub fn signed_pixels(field: &ScalarField) -> (Vec<u8>, RenderRange) {
    let m = field.max_abs();
    let pixels = field
        .values()
        .iter()
        .flat_map(|&x| signed_color(if m > 0.0 { x / m } else { 0.0 }))
        .collect();
    (pixels, RenderRange { min: -m, max: m })
}

pub fn render_gray_png(field: &ScalarField) -> Result<(Vec<u8>, RenderRange)> {
    let (px, range) = gray_pixels(field);
    Ok((encode_png(field.width(), field.height(), &px, ExtendedColorType::L8)?, range))
}

pub fn render_signed_png(field: &ScalarField) -> Result<(Vec<u8>, RenderRange)> {
    let (px, range) = signed_pixels(field);
    Ok((encode_png(field.width(), field.height(), &px, ExtendedColorType::Rgb8)?, range))
}

/// Arrow plot of `(vx, vz)` sampled every `stride` pixels; `vz` defaults to
/// zero. Arrows are scaled so the longest spans `0.9 · stride` pixels and
/// zero-length arrows are omitted.
pub fn render_quiver_svg(vx: &ScalarField, vz: Option<&ScalarField>, stride: usize) -> Result<(String, RenderRange)> {
    if stride == 0 {
        return Err(Error::Render("stride must be positive".into()));
    }
    if let Some(z) = vz {
        vx.shape().ensure_same(&z.shape())?;
    }
    let (w, h) = (vx.width(), vx.height());
    let speed = |x: usize, y: usize| {
        let a = vx.get(x, y);
        let b = vz.map_or(0.0, |z| z.get(x, y));
        (a, b, a.hypot(b))
    };
    let mut vmax: f64 = 0.0;
    for y in (0..h).step_by(stride) {
        for x in (0..w).step_by(stride) {
            vmax = vmax.max(speed(x, y).2);
        }
    }
    let scale = if vmax > 0.0 { 0.9 * stride as f64 / vmax } else { 0.0 };
    let cell = 8.0;
    let mut svg = String::new();
    let _ = writeln!(
        svg,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{}" height="{}" viewBox="0 0 {w} {h}">"#,
        w as f64 * cell,
        h as f64 * cell
    );
    let _ = writeln!(svg, r#"<rect width="{w}" height="{h}" fill="white"/>"#);
    for y in (0..h).step_by(stride) {
        for x in (0..w).step_by(stride) {
            let (a, b, s) = speed(x, y);
            if s == 0.0 {
                continue;
            }
            let (x0, y0) = (x as f64 + 0.5, y as f64 + 0.5);
            let (x1, y1) = (x0 + a * scale, y0 + b * scale);
            let len = (s * scale).max(1e-12);
            let (ux, uy) = ((x1 - x0) / len, (y1 - y0) / len);
            let head = 0.3 * len.min(stride as f64);
            let (lx, ly) = (x1 - head * (ux - 0.5 * uy), y1 - head * (uy + 0.5 * ux));
            let (rx, ry) = (x1 - head * (ux + 0.5 * uy), y1 - head * (uy - 0.5 * ux));
            let _ = writeln!(
                svg,
                r#"<path d="M{x0:.3} {y0:.3}L{x1:.3} {y1:.3}M{lx:.3} {ly:.3}L{x1:.3} {y1:.3}L{rx:.3} {ry:.3}" stroke="black" stroke-width="0.15" fill="none"/>"#
            );
        }
    }
    svg.push_str("</svg>\n");
    Ok((svg, RenderRange { min: 0.0, max: vmax }))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::Shape;

    #[test]
    fn constant_gray_is_uniform_and_deterministic() {
        let f = ScalarField::filled(Shape::new(8, 6).unwrap(), 3.0);
        let (px, range) = gray_pixels(&f);
        assert!(px.iter().all(|&p| p == px[0]));
        assert_eq!(range, RenderRange { min: 3.0, max: 3.0 });
        assert_eq!(render_gray_png(&f).unwrap().0, render_gray_png(&f).unwrap().0);
    }

    #[test]
    fn antisymmetric_field_gives_mirrored_palette() {
        let shape = Shape::new(9, 5).unwrap();
        let f = ScalarField::from_fn(shape, |x, y| (x as f64 - 4.0) * (1.0 + y as f64).sqrt());
        let (px, _) = signed_pixels(&f);
        for y in 0..5 {
            for x in 0..9 {
                let a = &px[3 * shape.index(x, y)..][..3];
                let b = &px[3 * shape.index(8 - x, y)..][..3];
                assert_eq!([a[0], a[1], a[2]], [b[2], b[1], b[0]]);
            }
        }
    }

    #[test]
    fn zero_velocity_quiver_has_no_arrows() {
        let z = ScalarField::zeros(Shape::new(16, 16).unwrap());
        let (svg, range) = render_quiver_svg(&z, Some(&z), DEFAULT_QUIVER_STRIDE).unwrap();
        assert!(!svg.contains("<path"));
        assert_eq!(range.max, 0.0);
    }

    #[test]
    fn quiver_draws_one_arrow_per_stride_cell() {
        let shape = Shape::new(16, 16).unwrap();
        let vx = ScalarField::filled(shape, 1.0);
        let (svg, _) = render_quiver_svg(&vx, None, 4).unwrap();
        assert_eq!(svg.matches("<path").count(), 16);
    }

    #[test]
    fn style_kind_compatibility() {
        assert!(Style::Gray.accepts(FieldKind::Label));
        assert!(!Style::Quiver.accepts(FieldKind::Magnitude));
        assert!(!Style::SignedColormap.accepts(FieldKind::Magnitude));
        assert!("bogus".parse::<Style>().is_err());
    }
}
