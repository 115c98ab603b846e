//! sRGB (D65) <-> CIELAB.
//!
//! The RGB->XYZ matrix is derived from the sRGB primaries and the D65 white
//! point at double precision, so that (255, 255, 255) lands exactly on the
//! reference white.

use std::sync::OnceLock;

use super::to_u8;

const WHITE: [f64; 3] = [0.95047, 1.0, 1.08883];
const DELTA: f64 = 6.0 / 29.0;
const PRIMARIES: [[f64; 2]; 3] = [[0.64, 0.33], [0.30, 0.60], [0.15, 0.06]];

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Lab {
    pub l: f64,
    pub a: f64,
    pub b: f64,
}

struct Matrices {
    to_xyz: [[f64; 3]; 3],
    to_rgb: [[f64; 3]; 3],
}

fn matrices() -> &'static Matrices {
    static M: OnceLock<Matrices> = OnceLock::new();
    M.get_or_init(|| {
        // columns: XYZ of each primary at unit luminance
        let mut p = [[0.0; 3]; 3];
        for (j, [x, y]) in PRIMARIES.iter().enumerate() {
            p[0][j] = x / y;
            p[1][j] = 1.0;
            p[2][j] = (1.0 - x - y) / y;
        }
        let p_inv = invert3(&p);
        let s = mat_vec(&p_inv, WHITE);
        let mut to_xyz = p;
        for row in to_xyz.iter_mut() {
            for j in 0..3 {
                row[j] *= s[j];
            }
        }
        let to_rgb = invert3(&to_xyz);
        Matrices { to_xyz, to_rgb }
    })
}

fn mat_vec(m: &[[f64; 3]; 3], v: [f64; 3]) -> [f64; 3] {
    [0, 1, 2].map(|i| m[i][0] * v[0] + m[i][1] * v[1] + m[i][2] * v[2])
}

fn invert3(m: &[[f64; 3]; 3]) -> [[f64; 3]; 3] {
    let cof = |r0: usize, r1: usize, c0: usize, c1: usize| m[r0][c0] * m[r1][c1] - m[r0][c1] * m[r1][c0];
    let det = m[0][0] * cof(1, 2, 1, 2) - m[0][1] * cof(1, 2, 0, 2) + m[0][2] * cof(1, 2, 0, 1);
    let inv_det = 1.0 / det;
    [
        [
            cof(1, 2, 1, 2) * inv_det,
            -cof(0, 2, 1, 2) * inv_det,
            cof(0, 1, 1, 2) * inv_det,
        ],
        [
            -cof(1, 2, 0, 2) * inv_det,
            cof(0, 2, 0, 2) * inv_det,
            -cof(0, 1, 0, 2) * inv_det,
        ],
        [
            cof(1, 2, 0, 1) * inv_det,
            -cof(0, 2, 0, 1) * inv_det,
            cof(0, 1, 0, 1) * inv_det,
        ],
    ]
}

#[inline]
fn srgb_to_linear(c: f64) -> f64 {
    if c <= 0.04045 {
        c / 12.92
    } else {
        ((c + 0.055) / 1.055).powf(2.4)
    }
}

#[inline]
fn linear_to_srgb(c: f64) -> f64 {
    if c <= 0.0031308 {
        12.92 * c
    } else {
        1.055 * c.powf(1.0 / 2.4) - 0.055
    }
}

#[inline]
fn lab_f(t: f64) -> f64 {
    if t > DELTA * DELTA * DELTA {
        t.cbrt()
    } else {
        t / (3.0 * DELTA * DELTA) + 4.0 / 29.0
    }
}

#[inline]
fn lab_f_inv(t: f64) -> f64 {
    if t > DELTA {
        t * t * t
    } else {
        3.0 * DELTA * DELTA * (t - 4.0 / 29.0)
    }
}

pub fn rgb_to_lab(rgb: [u8; 3]) -> Lab {
    let lin = rgb.map(|c| srgb_to_linear(f64::from(c) / 255.0));
    let xyz = mat_vec(&matrices().to_xyz, lin);
    let fx = lab_f(xyz[0] / WHITE[0]);
    let fy = lab_f(xyz[1] / WHITE[1]);
    let fz = lab_f(xyz[2] / WHITE[2]);
    Lab {
        l: 116.0 * fy - 16.0,
        a: 500.0 * (fx - fy),
        b: 200.0 * (fy - fz),
    }
}

/// Inverse of [`rgb_to_lab`]; out-of-gamut values are clamped.
pub fn lab_to_rgb(lab: Lab) -> [u8; 3] {
    let fy = (lab.l + 16.0) / 116.0;
    let fx = fy + lab.a / 500.0;
    let fz = fy - lab.b / 200.0;
    let xyz = [
        WHITE[0] * lab_f_inv(fx),
        WHITE[1] * lab_f_inv(fy),
        WHITE[2] * lab_f_inv(fz),
    ];
    let lin = mat_vec(&matrices().to_rgb, xyz);
    lin.map(|c| to_u8(255.0 * linear_to_srgb(c.clamp(0.0, 1.0))))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn black_and_white_anchor_points() {
        let black = rgb_to_lab([0, 0, 0]);
        assert!(black.l.abs() < 1e-12 && black.a.abs() < 1e-12 && black.b.abs() < 1e-12);
        let white = rgb_to_lab([255, 255, 255]);
        assert!((white.l - 100.0).abs() < 1e-6);
        assert!(white.a.abs() < 1e-6 && white.b.abs() < 1e-6);
        assert_eq!(lab_to_rgb(Lab { l: 0.0, a: 0.0, b: 0.0 }), [0, 0, 0]);
        assert_eq!(lab_to_rgb(Lab { l: 100.0, a: 0.0, b: 0.0 }), [255, 255, 255]);
    }

    #[test]
    fn mid_grey_lightness() {
        // direct evaluation of the piecewise formulas for Y alone
        let c: f64 = 128.0 / 255.0;
        let y = ((c + 0.055) / 1.055).powf(2.4);
        let expected = 116.0 * y.cbrt() - 16.0;
        let lab = rgb_to_lab([128, 128, 128]);
        assert!((lab.l - expected).abs() < 1e-9);
        assert!((lab.l - 53.585).abs() < 1e-3);
        assert!(lab.a.abs() < 1e-9 && lab.b.abs() < 1e-9);
    }

    #[test]
    fn all_greys_round_trip() {
        for v in 0..=255u8 {
            assert_eq!(lab_to_rgb(rgb_to_lab([v, v, v])), [v, v, v], "grey {v}");
        }
    }

    #[test]
    fn out_of_gamut_clamps() {
        assert_eq!(lab_to_rgb(Lab { l: 150.0, a: 0.0, b: 0.0 }), [255, 255, 255]);
        assert_eq!(lab_to_rgb(Lab { l: -20.0, a: 0.0, b: 0.0 }), [0, 0, 0]);
        let px = lab_to_rgb(Lab { l: 50.0, a: 200.0, b: -200.0 });
        assert!(px[0] > px[1] && px[2] > px[1]);
    }
}
