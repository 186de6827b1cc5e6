//! sRGB <-> CIE-Lab conversion under the D65 white point and the CIE76
//! color difference.
//!
//! Conversions use the IEC 61966-2-1 transfer curve and the sRGB primaries
//! matrix. The reference white is the row sum of that matrix, so 8-bit white
//! lands on `L = 100, a = b = 0` to within floating-point noise.

use serde::{Deserialize, Serialize};

const SRGB_TO_XYZ: [[f64; 3]; 3] = [
    [0.412_456_4, 0.357_576_1, 0.180_437_5],
    [0.212_672_9, 0.715_152_2, 0.072_175_0],
    [0.019_333_9, 0.119_192_0, 0.950_304_1],
];

// Numerical inverse of SRGB_TO_XYZ (not the rounded textbook inverse) so that
// 8-bit colors survive a round trip exactly.
const XYZ_TO_SRGB: [[f64; 3]; 3] = [
    [
        3.240_454_836_021_408_7,
        -1.537_138_850_102_575_1,
        -0.498_531_546_868_481,
    ],
    [
        -0.969_266_389_875_653_8,
        1.876_010_928_842_491,
        0.041_556_082_346_673_55,
    ],
    [
        0.055_643_419_604_213_67,
        -0.204_025_854_267_698_18,
        1.057_225_162_457_929,
    ],
];

const WHITE: [f64; 3] = [
    0.412_456_4 + 0.357_576_1 + 0.180_437_5,
    0.212_672_9 + 0.715_152_2 + 0.072_175_0,
    0.019_333_9 + 0.119_192_0 + 0.950_304_1,
];

const EPSILON: f64 = 216.0 / 24389.0;
const KAPPA: f64 = 24389.0 / 27.0;

/// Half of one 8-bit quantization step, in encoded units. A channel inside
/// `[-HALF_STEP, 1 + HALF_STEP]` rounds to a valid byte without clamping.
const HALF_STEP: f64 = 0.5 / 255.0;

/// A CIE-Lab color. Serialized as a `[L, a, b]` triple.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(from = "[f64; 3]", into = "[f64; 3]")]
pub struct LabColor {
    pub l: f64,
    pub a: f64,
    pub b: f64,
}

impl LabColor {
    pub const fn new(l: f64, a: f64, b: f64) -> Self {
        Self { l, a, b }
    }

    /// Moves `distance` along `direction` (which need not be normalized).
    pub fn offset(self, direction: [f64; 3], distance: f64) -> Self {
        let norm = (direction[0].powi(2) + direction[1].powi(2) + direction[2].powi(2)).sqrt();
        let k = distance / norm;
        Self::new(
            self.l + direction[0] * k,
            self.a + direction[1] * k,
            self.b + direction[2] * k,
        )
    }
}

impl From<[f64; 3]> for LabColor {
    fn from(v: [f64; 3]) -> Self {
        Self::new(v[0], v[1], v[2])
    }
}

impl From<LabColor> for [f64; 3] {
    fn from(c: LabColor) -> Self {
        [c.l, c.a, c.b]
    }
}

/// Result of mapping a Lab color onto the 8-bit display cube.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct DisplayColor {
    pub rgb: [u8; 3],
    /// Set when at least one channel had to be clamped.
    pub out_of_gamut: bool,
}

fn decode(channel: f64) -> f64 {
    if channel <= 0.040_45 {
        channel / 12.92
    } else {
        ((channel + 0.055) / 1.055).powf(2.4)
    }
}

fn encode(linear: f64) -> f64 {
    if linear <= 0.003_130_8 {
        linear * 12.92
    } else {
        1.055 * linear.powf(1.0 / 2.4) - 0.055
    }
}

fn lab_f(t: f64) -> f64 {
    if t > EPSILON {
        t.cbrt()
    } else {
        (KAPPA * t + 16.0) / 116.0
    }
}

fn lab_f_inv(f: f64) -> f64 {
    let cube = f * f * f;
    if cube > EPSILON {
        cube
    } else {
        (116.0 * f - 16.0) / KAPPA
    }
}

fn mul(m: &[[f64; 3]; 3], v: [f64; 3]) -> [f64; 3] {
    [
        m[0][0] * v[0] + m[0][1] * v[1] + m[0][2] * v[2],
        m[1][0] * v[0] + m[1][1] * v[1] + m[1][2] * v[2],
        m[2][0] * v[0] + m[2][1] * v[1] + m[2][2] * v[2],
    ]
}

/// Converts an 8-bit sRGB color to Lab.
pub fn srgb_to_lab(rgb: [u8; 3]) -> LabColor {
    let linear = rgb.map(|c| decode(f64::from(c) / 255.0));
    let xyz = mul(&SRGB_TO_XYZ, linear);
    let fx = lab_f(xyz[0] / WHITE[0]);
    let fy = lab_f(xyz[1] / WHITE[1]);
    let fz = lab_f(xyz[2] / WHITE[2]);
    LabColor::new(116.0 * fy - 16.0, 500.0 * (fx - fy), 200.0 * (fy - fz))
}

/// Continuous (unquantized) encoded sRGB channels in nominal `[0, 1]`.
pub fn lab_to_encoded(lab: LabColor) -> [f64; 3] {
    let fy = (lab.l + 16.0) / 116.0;
    let fx = fy + lab.a / 500.0;
    let fz = fy - lab.b / 200.0;
    let y = if lab.l > KAPPA * EPSILON {
        fy * fy * fy
    } else {
        lab.l / KAPPA
    };
    let xyz = [lab_f_inv(fx) * WHITE[0], y * WHITE[1], lab_f_inv(fz) * WHITE[2]];
    mul(&XYZ_TO_SRGB, xyz).map(encode)
}

/// Converts Lab to 8-bit sRGB, clamping and flagging out-of-gamut input.
pub fn lab_to_srgb(lab: LabColor) -> DisplayColor {
    let encoded = lab_to_encoded(lab);
    let mut out_of_gamut = false;
    let rgb = encoded.map(|c| {
        if !c.is_finite() || !(-HALF_STEP..=1.0 + HALF_STEP).contains(&c) {
            out_of_gamut = true;
        }
        let c = if c.is_finite() { c.clamp(0.0, 1.0) } else { 0.0 };
        (c * 255.0).round() as u8
    });
    DisplayColor { rgb, out_of_gamut }
}

/// True when `lab` maps into the 8-bit cube without clamping.
pub fn in_gamut(lab: LabColor) -> bool {
    !lab_to_srgb(lab).out_of_gamut
}

/// Lab color of the nearest 8-bit display color.
pub fn quantize(lab: LabColor) -> LabColor {
    srgb_to_lab(lab_to_srgb(lab).rgb)
}

/// CIE76 color difference (Euclidean distance in Lab).
pub fn delta_e(x: LabColor, y: LabColor) -> f64 {
    ((x.l - y.l).powi(2) + (x.a - y.a).powi(2) + (x.b - y.b).powi(2)).sqrt()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn white_and_black_points() {
        let white = srgb_to_lab([255, 255, 255]);
        assert!((white.l - 100.0).abs() < 1e-6, "{white:?}");
        assert!(white.a.abs() < 0.01 && white.b.abs() < 0.01, "{white:?}");

        let black = srgb_to_lab([0, 0, 0]);
        assert_eq!(black, LabColor::new(0.0, 0.0, 0.0));

        assert_eq!(lab_to_srgb(LabColor::new(100.0, 0.0, 0.0)).rgb, [255, 255, 255]);
        assert!(!lab_to_srgb(LabColor::new(100.0, 0.0, 0.0)).out_of_gamut);
    }

    // Reference values from an independent implementation (scikit-image
    // rgb2lab, D65/2°). Its white point differs in the 5th digit, hence 0.02.
    #[test]
    fn matches_reference_implementation() {
        let cases = [
            ([119, 119, 119], [50.034_438_8, 0.0, 0.0]),
            ([200, 30, 90], [44.160_887_0, 65.806_642_6, 10.615_001_9]),
            ([12, 180, 250], [69.196_613_2, -13.267_905_8, -45.078_500_9]),
        ];
        for (rgb, expected) in cases {
            let lab = srgb_to_lab(rgb);
            assert!((lab.l - expected[0]).abs() < 0.02, "{rgb:?} -> {lab:?}");
            assert!((lab.a - expected[1]).abs() < 0.02, "{rgb:?} -> {lab:?}");
            assert!((lab.b - expected[2]).abs() < 0.02, "{rgb:?} -> {lab:?}");
        }
        let gray = srgb_to_lab([119, 119, 119]);
        assert!((gray.l - 50.0).abs() < 0.1);
    }

    #[test]
    fn mid_gray_round_trips_exactly() {
        let lab = srgb_to_lab([119, 119, 119]);
        let back = lab_to_srgb(lab);
        assert_eq!(back.rgb, [119, 119, 119]);
        assert!(!back.out_of_gamut);
    }

    #[test]
    fn every_byte_triple_round_trips() {
        for r in (0..=255u8).step_by(5) {
            for g in (0..=255u8).step_by(3) {
                for b in (0..=255u8).step_by(7) {
                    let back = lab_to_srgb(srgb_to_lab([r, g, b]));
                    assert_eq!(back.rgb, [r, g, b]);
                    assert!(!back.out_of_gamut);
                }
            }
        }
    }

    #[test]
    fn saturated_magenta_blue_is_out_of_gamut() {
        let flagged = lab_to_srgb(LabColor::new(50.0, 120.0, -120.0));
        assert!(flagged.out_of_gamut);
    }

    #[test]
    fn delta_e_examples() {
        let x = LabColor::new(50.0, 10.0, 0.0);
        assert_eq!(delta_e(x, x), 0.0);
        assert_eq!(delta_e(x, LabColor::new(50.0, 0.0, 0.0)), 10.0);
        assert_eq!(
            delta_e(LabColor::new(50.0, 3.0, 4.0), LabColor::new(50.0, 0.0, 0.0)),
            5.0
        );
    }

    #[test]
    fn lab_serializes_as_triple() {
        let json = serde_json::to_string(&LabColor::new(50.0, -1.5, 2.25)).unwrap();
        assert_eq!(json, "[50.0,-1.5,2.25]");
        let back: LabColor = serde_json::from_str(&json).unwrap();
        assert_eq!(back, LabColor::new(50.0, -1.5, 2.25));
    }
}
