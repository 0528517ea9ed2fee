//! Deterministic SVG stimuli for attribute vectors.
//!
//! Coordinate-to-feature mapping (coordinates beyond `d` take 0.5):
//!
//! | family        | a₀                 | a₁                       | a₂                  | a₃              |
//! |---------------|--------------------|--------------------------|---------------------|-----------------|
//! | `color_shape` | hue 0–300°         | radius 10–45% of canvas  | aspect 0.5–2.0      | rotation 0–90°  |
//! | `face_glyph`  | mouth curvature −1–1 | eyebrow angle −30–30°  | eye size 3–10%      | face width 50–90% |
//!
//! Each document carries its feature values as `data-*` attributes on the
//! root group so they can be read back.

use std::fmt::{self, Write};
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::attribute::AttributeVector;
use crate::error::{Error, Result};

pub const MAX_STIMULUS_DIM: usize = 4;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Family {
    ColorShape,
    FaceGlyph,
}

impl Family {
    pub fn as_str(self) -> &'static str {
        match self {
            Family::ColorShape => "color_shape",
            Family::FaceGlyph => "face_glyph",
        }
    }
}

impl fmt::Display for Family {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Family {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "color_shape" => Ok(Family::ColorShape),
            "face_glyph" => Ok(Family::FaceGlyph),
            other => Err(Error::invalid(format!(
                "unknown stimulus family {other:?} (expected color_shape or face_glyph)"
            ))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct StimulusSpec {
    pub family: Family,
    pub dimension: usize,
    pub width: u32,
    pub height: u32,
}

impl StimulusSpec {
    pub fn new(family: Family, dimension: usize) -> Result<Self> {
        let spec = Self {
            family,
            dimension,
            width: 256,
            height: 256,
        };
        spec.validate()?;
        Ok(spec)
    }

    pub fn validate(&self) -> Result<()> {
        if !(1..=MAX_STIMULUS_DIM).contains(&self.dimension) {
            return Err(Error::invalid(format!(
                "stimulus dimension must be in 1..={MAX_STIMULUS_DIM}, got {}",
                self.dimension
            )));
        }
        if self.width == 0 || self.height == 0 {
            return Err(Error::invalid("canvas must be non-empty"));
        }
        Ok(())
    }
}

fn lerp(lo: f64, hi: f64, t: f64) -> f64 {
    lo + (hi - lo) * t
}

pub fn render(spec: &StimulusSpec, a: &AttributeVector) -> Result<String> {
    spec.validate()?;
    if a.dim() != spec.dimension {
        return Err(Error::DimensionMismatch {
            expected: spec.dimension,
            found: a.dim(),
        });
    }
    let mut coords = [0.5; MAX_STIMULUS_DIM];
    coords[..a.dim()].copy_from_slice(a.as_slice());
    let body = match spec.family {
        Family::ColorShape => color_shape(spec, coords),
        Family::FaceGlyph => face_glyph(spec, coords),
    };
    Ok(format!(
        "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{w}\" height=\"{h}\" viewBox=\"0 0 {w} {h}\">\n\
         <rect width=\"{w}\" height=\"{h}\" fill=\"#f4f4f4\"/>\n{body}</svg>\n",
        w = spec.width,
        h = spec.height
    ))
}

fn color_shape(spec: &StimulusSpec, c: [f64; 4]) -> String {
    let (w, h) = (spec.width as f64, spec.height as f64);
    let hue = lerp(0.0, 300.0, c[0]);
    let radius = lerp(0.10, 0.45, c[1]) * w.min(h);
    let aspect = lerp(0.5, 2.0, c[2]);
    let rotation = lerp(0.0, 90.0, c[3]);
    let (rx, ry) = (radius * aspect.sqrt(), radius / aspect.sqrt());
    let mut s = String::new();
    let _ = writeln!(
        s,
        "<g data-family=\"color_shape\" data-hue=\"{hue:.4}\" data-radius=\"{radius:.4}\" \
         data-aspect=\"{aspect:.4}\" data-rotation=\"{rotation:.4}\" \
         transform=\"translate({cx:.4} {cy:.4}) rotate({rotation:.4})\">",
        cx = w / 2.0,
        cy = h / 2.0,
    );
    let _ = writeln!(
        s,
        "<ellipse cx=\"0\" cy=\"0\" rx=\"{rx:.4}\" ry=\"{ry:.4}\" fill=\"hsl({hue:.4}, 70%, 50%)\" stroke=\"#222\" stroke-width=\"2\"/>"
    );
    s.push_str("</g>\n");
    s
}

fn face_glyph(spec: &StimulusSpec, c: [f64; 4]) -> String {
    let (w, h) = (spec.width as f64, spec.height as f64);
    let size = w.min(h);
    let curvature = lerp(-1.0, 1.0, c[0]);
    let brow_angle = lerp(-30.0, 30.0, c[1]);
    let eye_size = lerp(0.03, 0.10, c[2]);
    let face_width = lerp(0.5, 0.9, c[3]);

    let (cx, cy) = (w / 2.0, h / 2.0);
    let face_rx = face_width * size / 2.0;
    let face_ry = 0.42 * size;
    let eye_r = eye_size * size;
    let eye_dx = 0.38 * face_rx;
    let eye_y = cy - 0.15 * size;
    let brow_y = eye_y - eye_r - 0.05 * size;
    let brow_half = 0.08 * size;
    let mouth_y = cy + 0.2 * size;
    let mouth_half = 0.45 * face_rx;
    let mouth_ctrl = mouth_y + curvature * 0.12 * size;

    let mut s = String::new();
    let _ = writeln!(
        s,
        "<g data-family=\"face_glyph\" data-mouth-curvature=\"{curvature:.4}\" \
         data-eyebrow-angle=\"{brow_angle:.4}\" data-eye-size=\"{eye_size:.4}\" \
         data-face-width=\"{face_width:.4}\">"
    );
    let _ = writeln!(
        s,
        "<ellipse cx=\"{cx:.4}\" cy=\"{cy:.4}\" rx=\"{face_rx:.4}\" ry=\"{face_ry:.4}\" fill=\"#f2d0a9\" stroke=\"#222\" stroke-width=\"2\"/>"
    );
    for side in [-1.0, 1.0] {
        let ex = cx + side * eye_dx;
        let _ = writeln!(s, "<circle cx=\"{ex:.4}\" cy=\"{eye_y:.4}\" r=\"{eye_r:.4}\" fill=\"#222\"/>");
        // Brows mirror each other so a positive angle raises the outer ends.
        let _ = writeln!(
            s,
            "<line x1=\"{x1:.4}\" y1=\"{brow_y:.4}\" x2=\"{x2:.4}\" y2=\"{brow_y:.4}\" stroke=\"#222\" stroke-width=\"4\" \
             transform=\"rotate({rot:.4} {ex:.4} {brow_y:.4})\"/>",
            x1 = ex - brow_half,
            x2 = ex + brow_half,
            rot = -side * brow_angle,
        );
    }
    let _ = writeln!(
        s,
        "<path d=\"M {x1:.4} {mouth_y:.4} Q {cx:.4} {mouth_ctrl:.4} {x2:.4} {mouth_y:.4}\" fill=\"none\" stroke=\"#222\" stroke-width=\"4\"/>",
        x1 = cx - mouth_half,
        x2 = cx + mouth_half,
    );
    s.push_str("</g>\n");
    s
}

#[cfg(test)]
mod tests {
    use super::*;

    fn v(c: &[f64]) -> AttributeVector {
        AttributeVector::new(c.to_vec()).unwrap()
    }

    /// Reads a numeric `data-*` attribute back out of a rendered document.
    fn data_attr(doc: &str, name: &str) -> f64 {
        let key = format!("data-{name}=\"");
        let start = doc.find(&key).unwrap_or_else(|| panic!("missing {name}")) + key.len();
        let end = start + doc[start..].find('"').unwrap();
        doc[start..end].parse().unwrap()
    }

    #[test]
    fn rendering_is_byte_identical() {
        for family in [Family::ColorShape, Family::FaceGlyph] {
            let spec = StimulusSpec::new(family, 3).unwrap();
            let a = v(&[0.1, 0.7, 0.33]);
            assert_eq!(render(&spec, &a).unwrap(), render(&spec, &a).unwrap());
        }
    }

    #[test]
    fn hue_endpoints() {
        let spec = StimulusSpec::new(Family::ColorShape, 2).unwrap();
        let lo = render(&spec, &v(&[0.0, 0.5])).unwrap();
        let hi = render(&spec, &v(&[1.0, 0.5])).unwrap();
        assert_eq!(data_attr(&lo, "hue"), 0.0);
        assert!(lo.contains("hsl(0.0000, 70%, 50%)"));
        assert_eq!(data_attr(&hi, "hue"), 300.0);
        let mid_radius = 0.275 * 256.0;
        assert!((data_attr(&lo, "radius") - mid_radius).abs() < 1e-4);
    }

    #[test]
    fn radius_is_monotone_when_parsed_back() {
        let spec = StimulusSpec::new(Family::ColorShape, 2).unwrap();
        let radii: Vec<f64> = (1..=9)
            .map(|i| data_attr(&render(&spec, &v(&[0.5, i as f64 / 10.0])).unwrap(), "radius"))
            .collect();
        assert!(radii.windows(2).all(|w| w[1] > w[0]), "{radii:?}");
    }

    #[test]
    fn distinct_coordinates_give_distinct_parameters() {
        let names = [
            (Family::ColorShape, ["hue", "radius", "aspect", "rotation"]),
            (Family::FaceGlyph, ["mouth-curvature", "eyebrow-angle", "eye-size", "face-width"]),
        ];
        for (family, params) in names {
            let spec = StimulusSpec::new(family, 4).unwrap();
            for (axis, param) in params.iter().enumerate() {
                let mut lo = [0.4; 4];
                let mut hi = [0.4; 4];
                lo[axis] = 0.50;
                hi[axis] = 0.52;
                let a = data_attr(&render(&spec, &v(&lo)).unwrap(), param);
                let b = data_attr(&render(&spec, &v(&hi)).unwrap(), param);
                assert!(b > a, "{family} {param}: {a} vs {b}");
            }
        }
    }

    #[test]
    fn invalid_inputs() {
        assert!(StimulusSpec::new(Family::ColorShape, 0).is_err());
        assert!(StimulusSpec::new(Family::ColorShape, 5).is_err());
        let spec = StimulusSpec::new(Family::FaceGlyph, 2).unwrap();
        assert!(render(&spec, &v(&[0.5])).is_err());
        assert!("triangle".parse::<Family>().is_err());
        assert_eq!("face_glyph".parse::<Family>().unwrap(), Family::FaceGlyph);
    }
}
