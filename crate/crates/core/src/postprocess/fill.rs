use image::{Rgb, RgbImage};

use super::PostprocessError;
use crate::layout::PixelRect;

/// Levels per channel used when building the color histogram.
pub const QUANT_LEVELS: usize = 32;
const SHIFT: u32 = 3; // 256 / 32

fn bin(c: Rgb<u8>) -> usize {
    let q = |v: u8| (v >> SHIFT) as usize;
    (q(c[0]) * QUANT_LEVELS + q(c[1])) * QUANT_LEVELS + q(c[2])
}

/// Top-ranked color of a pixel set: the most populated bin of a 32-level
/// per-channel histogram, returned as the mean true color of that bin.
/// Count ties go to the lowest quantized `(r, g, b)`.
pub fn dominant_fill_color<I>(pixels: I) -> Result<Rgb<u8>, PostprocessError>
where
    I: IntoIterator<Item = Rgb<u8>>,
{
    let n_bins = QUANT_LEVELS * QUANT_LEVELS * QUANT_LEVELS;
    let mut counts = vec![0u64; n_bins];
    let mut sums = vec![[0u64; 3]; n_bins];
    let mut any = false;
    for p in pixels {
        any = true;
        let b = bin(p);
        counts[b] += 1;
        for ch in 0..3 {
            sums[b][ch] += p[ch] as u64;
        }
    }
    if !any {
        return Err(PostprocessError::EmptyRegion);
    }
    // max_by_key keeps the last maximum; scan in reverse so the lowest index wins
    let best = (0..n_bins)
        .rev()
        .max_by_key(|&b| counts[b])
        .expect("histogram has bins");
    let n = counts[best];
    Ok(Rgb(std::array::from_fn(|ch| {
        ((sums[best][ch] + n / 2) / n) as u8
    })))
}

/// Dominant color of the pixels of `rect` that satisfy `keep`.
pub fn dominant_fill_color_in(
    img: &RgbImage,
    rect: PixelRect,
    keep: impl Fn(u32, u32) -> bool,
) -> Result<Rgb<u8>, PostprocessError> {
    dominant_fill_color(
        (rect.y0..rect.y1)
            .flat_map(|y| (rect.x0..rect.x1).map(move |x| (x, y)))
            .filter(|&(x, y)| keep(x, y))
            .map(|(x, y)| *img.get_pixel(x, y)),
    )
}

#[cfg(test)]
mod tests {
    use super::*;

    fn repeat(c: [u8; 3], n: usize) -> impl Iterator<Item = Rgb<u8>> {
        std::iter::repeat_n(Rgb(c), n)
    }

    #[test]
    fn solid_region() {
        assert_eq!(
            dominant_fill_color(repeat([10, 20, 200], 50)).unwrap(),
            Rgb([10, 20, 200])
        );
    }

    #[test]
    fn seventy_thirty() {
        let px = repeat([10, 20, 200], 70).chain(repeat([255, 255, 255], 30));
        assert_eq!(dominant_fill_color(px).unwrap(), Rgb([10, 20, 200]));
    }

    #[test]
    fn exact_tie_prefers_smaller_quantized_tuple() {
        // (10,20,200) -> (1,2,25); (255,255,255) -> (31,31,31)
        let px = repeat([255, 255, 255], 40).chain(repeat([10, 20, 200], 40));
        assert_eq!(dominant_fill_color(px).unwrap(), Rgb([10, 20, 200]));
        let px = repeat([0, 9, 0], 3).chain(repeat([0, 8, 1], 3)).chain(repeat([0, 0, 8], 3));
        // bins (0,1,0), (0,1,0), (0,0,1): the shared bin wins on count
        assert_eq!(dominant_fill_color(px).unwrap(), Rgb([0, 9, 1]));
    }

    #[test]
    fn near_colors_share_a_bin_and_average() {
        let px = repeat([100, 100, 100], 2)
            .chain(repeat([103, 101, 102], 2))
            .chain(repeat([0, 0, 0], 3));
        assert_eq!(dominant_fill_color(px).unwrap(), Rgb([102, 101, 101]));
    }

    #[test]
    fn empty_region_errors() {
        assert!(matches!(
            dominant_fill_color(std::iter::empty()),
            Err(PostprocessError::EmptyRegion)
        ));
    }
}
