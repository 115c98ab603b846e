use super::ImageU8;
use crate::error::{Error, Result};

/// Mean of all channel values, normalised to `[0, 1]`.
pub fn mean_pixel(img: &ImageU8) -> f64 {
    let total: u64 = img.data().iter().map(|&v| u64::from(v)).sum();
    total as f64 / (img.data().len() as f64 * 255.0)
}

/// Counts of all `H * W * 3` channel values in `bins` equal-width bins.
pub fn histogram(img: &ImageU8, bins: usize) -> Result<Vec<u64>> {
    if bins == 0 || 256 % bins != 0 {
        return Err(Error::InvalidArgument(format!(
            "histogram bin count {bins} does not divide 256"
        )));
    }
    let width = 256 / bins;
    let mut counts = vec![0u64; bins];
    for &v in img.data() {
        counts[usize::from(v) / width] += 1;
    }
    Ok(counts)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn mean_pixel_extremes() {
        assert_eq!(mean_pixel(&ImageU8::filled(3, 4, [0, 0, 0]).unwrap()), 0.0);
        assert_eq!(mean_pixel(&ImageU8::filled(3, 4, [255, 255, 255]).unwrap()), 1.0);
        let half = ImageU8::new(1, 2, vec![0, 0, 0, 255, 255, 255]).unwrap();
        assert_eq!(mean_pixel(&half), 0.5);
    }

    #[test]
    fn histogram_counts() {
        let img = ImageU8::filled(2, 3, [0, 0, 0]).unwrap();
        let h = histogram(&img, 256).unwrap();
        assert_eq!(h[0], 18);
        assert!(h[1..].iter().all(|&c| c == 0));

        let img = ImageU8::new(1, 2, vec![0, 63, 64, 128, 255, 200]).unwrap();
        assert_eq!(histogram(&img, 4).unwrap(), vec![2, 1, 1, 2]);
    }

    #[test]
    fn bad_bin_counts_rejected() {
        let img = ImageU8::filled(1, 1, [1, 2, 3]).unwrap();
        assert!(histogram(&img, 0).is_err());
        assert!(histogram(&img, 3).is_err());
        assert!(histogram(&img, 512).is_err());
    }
}
