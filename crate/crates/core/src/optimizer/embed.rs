use crate::error::{Error, Result};

/// Maps prompts to unit-norm vectors; the text encoder used for retrieval.
pub trait TextEmbedder: Send + Sync {
    /// Name, dimension and version, e.g. `hashed-512/v1`. Indexes record this
    /// and refuse queries from a different embedder.
    fn id(&self) -> String;

    fn dimension(&self) -> usize;

    fn embed(&self, prompt: &str) -> Result<Vec<f32>>;
}

/// Scales a vector to unit L2 norm, rounding to `f32` storage precision.
pub fn normalize_embedding(v: &[f64]) -> Result<Vec<f32>> {
    let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
    if !(norm.is_finite() && norm > 0.0) {
        return Err(Error::Embedding("embedding has zero or non-finite norm".into()));
    }
    Ok(v.iter().map(|x| (x / norm) as f32).collect())
}

/// Offline embedder: signed feature hashing of lowercase word unigrams and
/// adjacent-word bigrams, L2-normalized.
#[derive(Debug, Clone)]
pub struct HashedEmbedder {
    dimension: usize,
}

pub const HASHED_VERSION: u32 = 1;

impl HashedEmbedder {
    pub fn new(dimension: usize) -> Self {
        assert!(dimension > 0, "embedding dimension must be positive");
        Self { dimension }
    }

    /// Parses ids like `hashed-512` or `hashed-512/v1`.
    pub fn from_name(name: &str) -> Option<Self> {
        let rest = name.strip_prefix("hashed-")?;
        let dim = match rest.split_once('/') {
            Some((d, v)) if v == format!("v{HASHED_VERSION}") => d,
            Some(_) => return None,
            None => rest,
        };
        dim.parse().ok().filter(|d| *d > 0).map(Self::new)
    }
}

impl Default for HashedEmbedder {
    fn default() -> Self {
        Self::new(512)
    }
}

fn fnv1a(bytes: &[u8]) -> u64 {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for b in bytes {
        h ^= *b as u64;
        h = h.wrapping_mul(0x0000_0100_0000_01b3);
    }
    h
}

fn tokens(prompt: &str) -> Vec<String> {
    prompt
        .split(|c: char| !c.is_alphanumeric())
        .filter(|t| !t.is_empty())
        .map(str::to_lowercase)
        .collect()
}

impl TextEmbedder for HashedEmbedder {
    fn id(&self) -> String {
        format!("hashed-{}/v{HASHED_VERSION}", self.dimension)
    }

    fn dimension(&self) -> usize {
        self.dimension
    }

    fn embed(&self, prompt: &str) -> Result<Vec<f32>> {
        let toks = tokens(prompt);
        let mut features: Vec<String> = toks.iter().map(|t| format!("u:{t}")).collect();
        features.extend(toks.windows(2).map(|w| format!("b:{} {}", w[0], w[1])));
        if features.is_empty() {
            features.push("<empty>".into());
        }
        let mut v = vec![0.0f64; self.dimension];
        for f in &features {
            let h = fnv1a(f.as_bytes());
            let bucket = (h % self.dimension as u64) as usize;
            let sign = if h >> 63 == 0 { 1.0 } else { -1.0 };
            // Bigrams carry word order, so they count a little more.
            let weight = if f.starts_with("b:") { 1.5 } else { 1.0 };
            v[bucket] += sign * weight;
        }
        if v.iter().all(|x| *x == 0.0) {
            // Colliding features cancelled out; fall back to the first bucket set.
            v[(fnv1a(features[0].as_bytes()) % self.dimension as u64) as usize] = 1.0;
        }
        normalize_embedding(&v)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn norm(v: &[f32]) -> f64 {
        v.iter().map(|x| (*x as f64) * (*x as f64)).sum::<f64>().sqrt()
    }

    #[test]
    fn unit_norm_and_deterministic() {
        let e = HashedEmbedder::default();
        for p in ["a bear cub in the forest", "", "!!!", "Bear"] {
            let a = e.embed(p).unwrap();
            assert_eq!(a.len(), 512);
            assert!((norm(&a) - 1.0).abs() < 1e-6);
            assert_eq!(a, e.embed(p).unwrap());
        }
    }

    #[test]
    fn related_prompts_are_closer() {
        let e = HashedEmbedder::default();
        let d = |a: &str, b: &str| {
            let (x, y) = (e.embed(a).unwrap(), e.embed(b).unwrap());
            x.iter().zip(&y).map(|(p, q)| ((p - q) as f64).powi(2)).sum::<f64>().sqrt()
        };
        assert!(d("a brown bear in the snow", "a bear in the snow") < d("a brown bear in the snow", "city skyline at night"));
    }

    #[test]
    fn name_parsing() {
        assert_eq!(HashedEmbedder::from_name("hashed-512").unwrap().id(), "hashed-512/v1");
        assert_eq!(HashedEmbedder::from_name("hashed-64/v1").unwrap().dimension(), 64);
        assert!(HashedEmbedder::from_name("hashed-64/v9").is_none());
        assert!(HashedEmbedder::from_name("clip").is_none());
        assert!(HashedEmbedder::from_name("hashed-0").is_none());
    }
}
