use image::imageops::FilterType;
use image::RgbImage;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::EvalError;

pub const DEFAULT_WEIGHT: f64 = 2.5;

/// Maps images and texts into one embedding space.
pub trait EmbeddingBackend: Send + Sync {
    fn name(&self) -> &str;
    fn embed_image(&self, image: &RgbImage) -> Result<Vec<f32>, EvalError>;
    fn embed_text(&self, text: &str) -> Result<Vec<f32>, EvalError>;
}

pub fn cosine(a: &[f32], b: &[f32]) -> f64 {
    let dot: f64 = a.iter().zip(b).map(|(x, y)| *x as f64 * *y as f64).sum();
    let na: f64 = a.iter().map(|x| (*x as f64).powi(2)).sum::<f64>().sqrt();
    let nb: f64 = b.iter().map(|x| (*x as f64).powi(2)).sum::<f64>().sqrt();
    if na == 0.0 || nb == 0.0 {
        0.0
    } else {
        (dot / (na * nb)).clamp(-1.0, 1.0)
    }
}

/// `w · max(cos(embed(image), embed(text)), 0)`.
pub struct CompatibilityScorer {
    backend: Box<dyn EmbeddingBackend>,
    pub weight: f64,
}

impl CompatibilityScorer {
    pub fn new(backend: Box<dyn EmbeddingBackend>) -> Self {
        Self {
            backend,
            weight: DEFAULT_WEIGHT,
        }
    }

    /// `mock` or `mock:<seed>` gives the deterministic test backend. Pretrained
    /// backends such as `clip` are not bundled.
    pub fn from_name(name: &str) -> Result<Self, EvalError> {
        match name.split_once(':') {
            None if name == "mock" => Ok(Self::new(Box::new(MockBackend::new(0)))),
            Some(("mock", seed)) => seed
                .parse()
                .map(|s| Self::new(Box::new(MockBackend::new(s))))
                .map_err(|_| EvalError::BackendUnavailable(name.to_string())),
            _ => Err(EvalError::BackendUnavailable(name.to_string())),
        }
    }

    pub fn backend_name(&self) -> &str {
        self.backend.name()
    }

    pub fn score_embeddings(&self, image: &[f32], text: &[f32]) -> Result<f64, EvalError> {
        if image.len() != text.len() {
            return Err(EvalError::DimensionMismatch {
                image: image.len(),
                text: text.len(),
            });
        }
        Ok(self.weight * cosine(image, text).max(0.0))
    }

    pub fn score(&self, image: &RgbImage, text: &str) -> Result<f64, EvalError> {
        let i = self.backend.embed_image(image)?;
        let t = self.backend.embed_text(text)?;
        self.score_embeddings(&i, &t)
    }
}

/// Returns the same two vectors for every input.
pub struct FixedBackend {
    pub image: Vec<f32>,
    pub text: Vec<f32>,
}

impl EmbeddingBackend for FixedBackend {
    fn name(&self) -> &str {
        "fixed"
    }

    fn embed_image(&self, _: &RgbImage) -> Result<Vec<f32>, EvalError> {
        Ok(self.image.clone())
    }

    fn embed_text(&self, _: &str) -> Result<Vec<f32>, EvalError> {
        Ok(self.text.clone())
    }
}

const MOCK_GRID: u32 = 4;
const MOCK_DIM: usize = 64;

/// Seeded random projections: image thumbnails and hashed words land in the
/// same 64-d space. Deterministic, weight-free, and meaningless beyond that.
pub struct MockBackend {
    seed: u64,
    image_proj: Vec<f32>,
}

impl MockBackend {
    pub fn new(seed: u64) -> Self {
        let n_in = (MOCK_GRID * MOCK_GRID * 3) as usize;
        let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x1a6e);
        let image_proj = (0..n_in * MOCK_DIM)
            .map(|_| rng.random_range(-1.0f32..1.0))
            .collect();
        Self { seed, image_proj }
    }
}

fn fnv1a(s: &str) -> u64 {
    s.bytes().fold(0xcbf29ce484222325, |h, b| {
        (h ^ b as u64).wrapping_mul(0x100000001b3)
    })
}

impl EmbeddingBackend for MockBackend {
    fn name(&self) -> &str {
        "mock"
    }

    fn embed_image(&self, image: &RgbImage) -> Result<Vec<f32>, EvalError> {
        let thumb = image::imageops::resize(image, MOCK_GRID, MOCK_GRID, FilterType::Triangle);
        let feats: Vec<f32> = thumb
            .pixels()
            .flat_map(|p| p.0)
            .map(|v| v as f32 / 127.5 - 1.0)
            .collect();
        Ok((0..MOCK_DIM)
            .map(|j| {
                feats
                    .iter()
                    .enumerate()
                    .map(|(i, f)| f * self.image_proj[i * MOCK_DIM + j])
                    .sum()
            })
            .collect())
    }

    fn embed_text(&self, text: &str) -> Result<Vec<f32>, EvalError> {
        let mut out = vec![0f32; MOCK_DIM];
        for word in text.split(|c: char| !c.is_alphanumeric()).filter(|w| !w.is_empty()) {
            let mut rng = ChaCha8Rng::seed_from_u64(self.seed ^ fnv1a(&word.to_lowercase()));
            for v in out.iter_mut() {
                *v += rng.random_range(-1.0f32..1.0);
            }
        }
        Ok(out)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn fixed(image: Vec<f32>, text: Vec<f32>) -> CompatibilityScorer {
        CompatibilityScorer::new(Box::new(FixedBackend { image, text }))
    }

    #[test]
    fn identical_embeddings_score_weight() {
        let s = fixed(vec![0.3, -1.0, 2.0], vec![0.3, -1.0, 2.0]);
        let v = s.score(&RgbImage::new(2, 2), "x").unwrap();
        assert!((v - 2.5).abs() < 1e-12);
    }

    #[test]
    fn orthogonal_and_antiparallel_score_zero() {
        let img = RgbImage::new(2, 2);
        assert_eq!(fixed(vec![1.0, 0.0], vec![0.0, 1.0]).score(&img, "").unwrap(), 0.0);
        assert_eq!(fixed(vec![1.0, 2.0], vec![-1.0, -2.0]).score(&img, "").unwrap(), 0.0);
    }

    #[test]
    fn partial_alignment() {
        let s = fixed(vec![1.0, 0.0], vec![1.0, 1.0]);
        let v = s.score(&RgbImage::new(1, 1), "").unwrap();
        assert!((v - 2.5 / 2f64.sqrt()).abs() < 1e-6);
    }

    #[test]
    fn mock_is_deterministic_and_bounded() {
        let a = CompatibilityScorer::from_name("mock:7").unwrap();
        let b = CompatibilityScorer::from_name("mock:7").unwrap();
        let img = RgbImage::from_fn(32, 32, |x, y| image::Rgb([x as u8 * 8, y as u8 * 8, 90]));
        let t = "A login screen with a text button";
        let va = a.score(&img, t).unwrap();
        assert_eq!(va, b.score(&img, t).unwrap());
        assert!((0.0..=2.5).contains(&va));
    }

    #[test]
    fn unknown_backends_are_unavailable() {
        assert!(matches!(
            CompatibilityScorer::from_name("clip"),
            Err(EvalError::BackendUnavailable(_))
        ));
    }

    #[test]
    fn dimension_mismatch() {
        let s = fixed(vec![1.0], vec![1.0, 0.0]);
        assert!(s.score(&RgbImage::new(1, 1), "").is_err());
    }
}
