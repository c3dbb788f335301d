//! Colored and rotated digit construction and label corruption.
//!
//! Color schemes paint a digit red or green through a color index `z` that
//! agrees with the binary label with a scheme-specific probability (the
//! fourth scheme ignores the label and paints a uniformly random RGB color).
//! Rotation schemes turn digits by fixed angles, by a uniform draw from two
//! options, or by a uniform draw from continuous bands.

use dair_autodiff::Tensor;
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::data::{RawDigit, DIGIT_PIXELS, DIGIT_SIDE};
use crate::error::DataError;

/// Color schemes: probability that the color index matches the label.
/// `C1`: 0.8, `C2`: 0.9, `C3`: 0.1, `C4`: uniformly random color.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum ColorScheme {
    C1,
    C2,
    C3,
    C4,
}

impl ColorScheme {
    /// P(color index = label); `None` for the random-color scheme.
    pub fn match_probability(&self) -> Option<f64> {
        match self {
            ColorScheme::C1 => Some(0.8),
            ColorScheme::C2 => Some(0.9),
            ColorScheme::C3 => Some(0.1),
            ColorScheme::C4 => None,
        }
    }
}

/// Rotation schemes: `R1` 0°, `R2` 90°, `R3` {0°, 180°}, `R4` {90°, 270°},
/// `R5` uniform [0°, 360°], `R6` uniform over [22.5°, 67.5°] ∪ [202.5°, 247.5°].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum RotationScheme {
    R1,
    R2,
    R3,
    R4,
    R5,
    R6,
}

/// Continuous rotation families used by the noisy-label study:
/// weak draws from [0, 30°), strong from [0, 360°).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum ContinuousRotation {
    Weak,
    Strong,
}

/// One augmentation scheme: exactly one family and member.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SchemeId {
    Color(ColorScheme),
    Rotation(RotationScheme),
    RotationContinuous(ContinuousRotation),
}

impl SchemeId {
    fn name(&self) -> &'static str {
        match self {
            SchemeId::Color(ColorScheme::C1) => "C1",
            SchemeId::Color(ColorScheme::C2) => "C2",
            SchemeId::Color(ColorScheme::C3) => "C3",
            SchemeId::Color(ColorScheme::C4) => "C4",
            SchemeId::Rotation(RotationScheme::R1) => "R1",
            SchemeId::Rotation(RotationScheme::R2) => "R2",
            SchemeId::Rotation(RotationScheme::R3) => "R3",
            SchemeId::Rotation(RotationScheme::R4) => "R4",
            SchemeId::Rotation(RotationScheme::R5) => "R5",
            SchemeId::Rotation(RotationScheme::R6) => "R6",
            SchemeId::RotationContinuous(ContinuousRotation::Weak) => "rotation-weak",
            SchemeId::RotationContinuous(ContinuousRotation::Strong) => "rotation-strong",
        }
    }
}

/// Digits 0-4 are labeled 1; digits 5-9 are labeled 0.
pub fn binarize_digits(d: &RawDigit) -> Result<usize, DataError> {
    if d.digit > 9 {
        return Err(DataError::BadDigit { digit: d.digit });
    }
    Ok(if d.digit <= 4 { 1 } else { 0 })
}

/// Paints the digit's intensity into RGB channels per the color scheme.
///
/// Index schemes draw `z = label` with the scheme probability (else the
/// opposite); `z = 0` paints red (channel 0), `z = 1` green (channel 1),
/// blue stays zero. The random scheme scales each channel by a uniformly
/// random level drawn from {0, ..., 255}. Output is `[28, 28, 3]`.
pub fn colorize(
    d: &RawDigit,
    scheme: SchemeId,
    binary_label: usize,
    rng: &mut ChaCha8Rng,
) -> Result<Tensor, DataError> {
    let SchemeId::Color(color) = scheme else {
        return Err(DataError::WrongSchemeFamily {
            scheme: scheme.name(),
            expected: "color",
        });
    };
    if binary_label > 1 {
        return Err(DataError::BadBinaryLabel { label: binary_label });
    }
    let mut rgb = [0.0f64; 3];
    match color.match_probability() {
        Some(p) => {
            let z = if rng.random::<f64>() < p {
                binary_label
            } else {
                1 - binary_label
            };
            rgb[z] = 1.0; // z = 0 -> red channel, z = 1 -> green channel
        }
        None => {
            for channel in rgb.iter_mut() {
                *channel = rng.random_range(0..=255u32) as f64 / 255.0;
            }
        }
    }
    let mut data = vec![0.0; DIGIT_PIXELS * 3];
    for (i, &px) in d.pixels.iter().enumerate() {
        if px != 0.0 {
            data[i * 3] = px * rgb[0];
            data[i * 3 + 1] = px * rgb[1];
            data[i * 3 + 2] = px * rgb[2];
        }
    }
    Ok(Tensor::new(vec![DIGIT_SIDE, DIGIT_SIDE, 3], data).expect("colorized digit"))
}

/// Rotates per the scheme, drawing from the scheme's options or bands.
pub fn rotate(
    d: &RawDigit,
    scheme: SchemeId,
    rng: &mut ChaCha8Rng,
) -> Result<RawDigit, DataError> {
    let degrees = match scheme {
        SchemeId::Rotation(r) => match r {
            RotationScheme::R1 => 0.0,
            RotationScheme::R2 => 90.0,
            RotationScheme::R3 => {
                if rng.random::<f64>() < 0.5 {
                    0.0
                } else {
                    180.0
                }
            }
            RotationScheme::R4 => {
                if rng.random::<f64>() < 0.5 {
                    90.0
                } else {
                    270.0
                }
            }
            RotationScheme::R5 => rng.random_range(0.0..360.0),
            RotationScheme::R6 => {
                let base = if rng.random::<f64>() < 0.5 { 22.5 } else { 202.5 };
                base + rng.random_range(0.0..45.0)
            }
        },
        SchemeId::RotationContinuous(c) => match c {
            ContinuousRotation::Weak => rng.random_range(0.0..30.0),
            ContinuousRotation::Strong => rng.random_range(0.0..360.0),
        },
        SchemeId::Color(_) => {
            return Err(DataError::WrongSchemeFamily {
                scheme: scheme.name(),
                expected: "rotation",
            })
        }
    };
    Ok(rotate_by_degrees(d, degrees))
}

/// Nearest-neighbor rotation about the image center. Multiples of 90° take
/// an exact index-permutation path, so pixel mass is preserved exactly
/// there and four quarter turns compose to the identity.
pub fn rotate_by_degrees(d: &RawDigit, degrees: f64) -> RawDigit {
    let quarter = degrees.rem_euclid(360.0) / 90.0;
    if (quarter - quarter.round()).abs() < 1e-12 {
        return rotate_quarter_turns(d, quarter.round() as u32 % 4);
    }
    let n = DIGIT_SIDE;
    let center = (n as f64 - 1.0) / 2.0;
    let theta = degrees.to_radians();
    let (sin, cos) = theta.sin_cos();
    let mut pixels = vec![0.0; DIGIT_PIXELS];
    for r in 0..n {
        for c in 0..n {
            // Destination pixel in centered coordinates (x right, y up).
            let x = c as f64 - center;
            let y = center - r as f64;
            // Sample the source at the inverse rotation.
            let sx = cos * x + sin * y;
            let sy = -sin * x + cos * y;
            let sc = (sx + center).round();
            let sr = (center - sy).round();
            if sc >= 0.0 && sr >= 0.0 && (sc as usize) < n && (sr as usize) < n {
                pixels[r * n + c] = d.pixels[sr as usize * n + sc as usize];
            }
        }
    }
    RawDigit {
        pixels,
        digit: d.digit,
    }
}

/// Exact rotation by `k` counterclockwise quarter turns.
fn rotate_quarter_turns(d: &RawDigit, k: u32) -> RawDigit {
    let n = DIGIT_SIDE;
    let mut pixels = vec![0.0; DIGIT_PIXELS];
    for r in 0..n {
        for c in 0..n {
            let (sr, sc) = match k {
                0 => (r, c),
                // dest(r, c) = src rotated back by k quarter turns
                1 => (c, n - 1 - r),
                2 => (n - 1 - r, n - 1 - c),
                _ => (n - 1 - c, r),
            };
            pixels[r * n + c] = d.pixels[sr * n + sc];
        }
    }
    RawDigit {
        pixels,
        digit: d.digit,
    }
}

/// Label corruption modes: replace with a uniform draw from {0..9}, or flip
/// a binary label.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum NoiseMode {
    UniformReplace10,
    BernoulliFlip,
}

/// Independently corrupts each label with probability `p` per the mode.
pub fn inject_label_noise(
    labels: &[usize],
    p: f64,
    mode: NoiseMode,
    rng: &mut ChaCha8Rng,
) -> Result<Vec<usize>, DataError> {
    if !(0.0..=1.0).contains(&p) {
        return Err(DataError::BadProbability { p });
    }
    let mut out = Vec::with_capacity(labels.len());
    for &label in labels {
        let corrupt = rng.random::<f64>() < p;
        let new = match mode {
            NoiseMode::UniformReplace10 => {
                let replacement = rng.random_range(0..10usize);
                if corrupt {
                    replacement
                } else {
                    label
                }
            }
            NoiseMode::BernoulliFlip => {
                if label > 1 {
                    return Err(DataError::BadBinaryLabel { label });
                }
                if corrupt {
                    1 - label
                } else {
                    label
                }
            }
        };
        out.push(new);
    }
    Ok(out)
}
