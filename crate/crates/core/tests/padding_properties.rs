//! Property suite for square padding, the reflection fold and colour
//! conversion.

use dcf_core::imaging::{
    histogram, lab_to_rgb, mean_pixel, pad_square, reflect_index, resize_bilinear, rgb_to_lab, ImageU8, PadAxis,
    PadGeometry, PaddingScheme,
};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn crop() -> impl Strategy<Value = ImageU8> {
    (1usize..24, 1usize..48).prop_flat_map(|(h, w)| {
        proptest::collection::vec(any::<u8>(), h * w * 3).prop_map(move |d| ImageU8::new(h, w, d).unwrap())
    })
}

/// Textbook sRGB -> CIELAB with the widely published rounded matrix.
fn lab_oracle(rgb: [f64; 3]) -> [f64; 3] {
    let lin = rgb.map(|c| {
        let c = c / 255.0;
        if c <= 0.04045 {
            c / 12.92
        } else {
            ((c + 0.055) / 1.055).powf(2.4)
        }
    });
    let x = 0.4124564 * lin[0] + 0.3575761 * lin[1] + 0.1804375 * lin[2];
    let y = 0.2126729 * lin[0] + 0.7151522 * lin[1] + 0.0721750 * lin[2];
    let z = 0.0193339 * lin[0] + 0.1191920 * lin[1] + 0.9503041 * lin[2];
    let d: f64 = 6.0 / 29.0;
    let f = |t: f64| if t > d.powi(3) { t.cbrt() } else { t / (3.0 * d * d) + 4.0 / 29.0 };
    let (fx, fy, fz) = (f(x / 0.95047), f(y), f(z / 1.08883));
    [116.0 * fy - 16.0, 500.0 * (fx - fy), 200.0 * (fy - fz)]
}

fn expected_fill(img: &ImageU8, scheme: PaddingScheme) -> Option<[u8; 3]> {
    let n = (img.height() * img.width()) as f64;
    match scheme {
        PaddingScheme::Zero => Some([0; 3]),
        PaddingScheme::White => Some([255; 3]),
        PaddingScheme::Grey => Some([128; 3]),
        PaddingScheme::RgbMean => {
            let mut sums = [0.0; 3];
            for px in img.data().chunks_exact(3) {
                for c in 0..3 {
                    sums[c] += px[c] as f64;
                }
            }
            Some(sums.map(|s| (s / n).round() as u8))
        }
        PaddingScheme::LabMean | PaddingScheme::Reflection => None,
    }
}

/// Pixels of the pad band, in scan order.
fn pad_band(out: &ImageU8, g: &PadGeometry, h: usize, w: usize) -> Vec<[u8; 3]> {
    let side = out.height();
    let mut px = Vec::new();
    for y in 0..side {
        for x in 0..side {
            let inside = match g.axis {
                PadAxis::Vertical => (g.pad_top..g.pad_top + h).contains(&y),
                PadAxis::Horizontal => (g.pad_top..g.pad_top + w).contains(&x),
                PadAxis::None => true,
            };
            if !inside {
                px.push(out.pixel(y, x));
            }
        }
    }
    px
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(1000))]

    #[test]
    fn every_scheme_squares_and_copies_the_interior(img in crop()) {
        let (h, w) = (img.height(), img.width());
        let g = PadGeometry::for_dims(h, w);
        let diff = h.abs_diff(w);
        prop_assert_eq!(g.pad_top, diff / 2);
        prop_assert_eq!(g.pad_top + g.pad_bottom, diff);
        prop_assert!(g.pad_bottom >= g.pad_top && g.pad_bottom - g.pad_top <= 1);
        let side = h.max(w);
        let crop_hist = histogram(&img, 256).unwrap();

        for scheme in PaddingScheme::ALL {
            let out = pad_square(&img, scheme);
            prop_assert_eq!((out.height(), out.width()), (side, side));
            for y in 0..h {
                for x in 0..w {
                    let (oy, ox) = match g.axis {
                        PadAxis::Vertical => (y + g.pad_top, x),
                        PadAxis::Horizontal => (y, x + g.pad_top),
                        PadAxis::None => (y, x),
                    };
                    prop_assert_eq!(out.pixel(oy, ox), img.pixel(y, x));
                }
            }
            let band = pad_band(&out, &g, h, w);
            prop_assert_eq!(band.len(), diff * side);

            if let Some(fill) = expected_fill(&img, scheme) {
                prop_assert!(band.iter().all(|&p| p == fill), "{} fill", scheme);
                let crop_sum: u64 = img.channel_sums().iter().sum();
                let v: u64 = fill.iter().map(|&c| c as u64).sum();
                let analytic = (crop_sum + (diff * side) as u64 * v) as f64 / (side * side * 3 * 255) as f64;
                prop_assert!((mean_pixel(&out) - analytic).abs() < 1e-12);
            }
            match scheme {
                PaddingScheme::LabMean => {
                    let n = (h * w) as f64;
                    let mut acc = [0.0; 3];
                    for px in img.data().chunks_exact(3) {
                        let lab = lab_oracle([px[0] as f64, px[1] as f64, px[2] as f64]);
                        (0..3).for_each(|c| acc[c] += lab[c] / n);
                    }
                    let fill = band.first().copied().unwrap_or([0; 3]);
                    prop_assert!(band.iter().all(|&p| p == fill));
                    if !band.is_empty() {
                        // compare in Lab space: the fill must sit within one 8-bit step of the mean
                        let back = lab_oracle(fill.map(|c| c as f64));
                        let step = 100.0 / 255.0 * 3.0;
                        if acc[0] > 1.0 && acc[0] < 99.0 && acc[1].abs() < 60.0 && acc[2].abs() < 60.0 {
                            prop_assert!((back[0] - acc[0]).abs() < step, "L {} vs {}", back[0], acc[0]);
                        }
                    }
                }
                PaddingScheme::Reflection => {
                    // every padded line is a copy of a crop line
                    for y in 0..side {
                        for x in 0..side {
                            let src = match g.axis {
                                PadAxis::Vertical => img.pixel(reflect_index(y as i64 - g.pad_top as i64, h), x),
                                PadAxis::Horizontal => img.pixel(y, reflect_index(x as i64 - g.pad_top as i64, w)),
                                PadAxis::None => img.pixel(y, x),
                            };
                            prop_assert_eq!(out.pixel(y, x), src);
                        }
                    }
                    let out_hist = histogram(&out, 256).unwrap();
                    for (o, c) in out_hist.iter().zip(&crop_hist) {
                        prop_assert_eq!(*o > 0, *c > 0);
                    }
                }
                _ => {}
            }
        }
    }

    #[test]
    fn fold_is_periodic_and_symmetric(k in -10_000i64..10_000, len in 1usize..64) {
        let r = reflect_index(k, len);
        prop_assert!(r < len);
        prop_assert_eq!(r, reflect_index(k + 2 * len as i64, len));
        prop_assert_eq!(r, reflect_index(-1 - k, len));
        if (0..len as i64).contains(&k) {
            prop_assert_eq!(r, k as usize);
        }
    }

    #[test]
    fn constant_crops_stay_constant_through_pad_and_resize(
        h in 1usize..20, w in 1usize..40, rgb in any::<[u8; 3]>(), side in 1usize..32,
    ) {
        let img = ImageU8::filled(h, w, rgb).unwrap();
        for scheme in [PaddingScheme::Reflection, PaddingScheme::RgbMean] {
            let out = resize_bilinear(&pad_square(&img, scheme), side).unwrap();
            prop_assert!(out.data().chunks_exact(3).all(|p| p == rgb));
        }
        let lab = resize_bilinear(&pad_square(&img, PaddingScheme::LabMean), side).unwrap();
        for p in lab.data().chunks_exact(3) {
            for c in 0..3 {
                prop_assert!(p[c].abs_diff(rgb[c]) <= 1);
            }
        }
    }
}

#[test]
fn reflect_examples() {
    assert_eq!(reflect_index(-1, 3), 0);
    assert_eq!(reflect_index(7, 3), 1);
    for k in 0..3 {
        assert_eq!(reflect_index(k, 3), k as usize);
    }
}

#[test]
fn odd_difference_geometry() {
    let g = PadGeometry::for_dims(2, 7);
    assert_eq!((g.pad_top, g.pad_bottom, g.axis), (2, 3, PadAxis::Vertical));
    let g = PadGeometry::for_dims(9, 4);
    assert_eq!((g.pad_top, g.pad_bottom, g.axis), (2, 3, PadAxis::Horizontal));
    let g = PadGeometry::for_dims(5, 5);
    assert_eq!((g.pad_top, g.pad_bottom, g.axis), (0, 0, PadAxis::None));
}

#[test]
fn grey_levels_round_trip_exactly_and_white_is_l100() {
    for v in 0..=255u8 {
        assert_eq!(lab_to_rgb(rgb_to_lab([v; 3])), [v; 3]);
    }
    let white = rgb_to_lab([255; 3]);
    assert!((white.l - 100.0).abs() < 1e-6);
    assert!(white.a.abs() < 1e-6 && white.b.abs() < 1e-6);
    let grey = rgb_to_lab([128; 3]);
    let oracle = lab_oracle([128.0; 3]);
    assert!((grey.l - oracle[0]).abs() < 1e-4, "{} vs {}", grey.l, oracle[0]);
    assert!((grey.l - 53.585).abs() < 1e-3);
}

#[test]
fn lab_matches_textbook_formula() {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    for _ in 0..10_000 {
        let rgb: [u8; 3] = rng.random();
        let lab = rgb_to_lab(rgb);
        let o = lab_oracle(rgb.map(f64::from));
        assert!((lab.l - o[0]).abs() < 1e-3 && (lab.a - o[1]).abs() < 1e-3 && (lab.b - o[2]).abs() < 1e-3);
    }
}

#[test]
fn sampled_colours_round_trip_within_one() {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    for _ in 0..100_000 {
        let rgb: [u8; 3] = rng.random();
        let back = lab_to_rgb(rgb_to_lab(rgb));
        for c in 0..3 {
            assert!(back[c].abs_diff(rgb[c]) <= 1, "{rgb:?} -> {back:?}");
        }
    }
}

#[test]
fn every_colour_round_trips_within_one() {
    let mut worst = 0u8;
    for r in 0..=255u8 {
        for g in 0..=255u8 {
            for b in 0..=255u8 {
                let back = lab_to_rgb(rgb_to_lab([r, g, b]));
                for (x, y) in back.iter().zip([r, g, b]) {
                    worst = worst.max(x.abs_diff(y));
                }
            }
        }
    }
    assert!(worst <= 1, "worst channel error {worst}");
}
