use super::LlmError;

pub const EMBED_DIM: usize = 256;

/// Maps text to a unit-norm vector of fixed dimension.
pub trait EmbeddingProvider: Send + Sync {
    fn dim(&self) -> usize;
    fn embed(&self, text: &str) -> Result<Vec<f64>, LlmError>;
}

/// Signed feature hashing of lowercase word unigrams and bigrams.
#[derive(Debug, Clone, Copy)]
pub struct HashingEmbedder {
    dim: usize,
}

impl Default for HashingEmbedder {
    fn default() -> Self {
        Self { dim: EMBED_DIM }
    }
}

impl HashingEmbedder {
    pub fn with_dim(dim: usize) -> Self {
        assert!(dim > 0, "embedding dimension must be positive");
        Self { dim }
    }
}

fn fnv1a(bytes: &[u8]) -> u64 {
    let mut h: u64 = 0xcbf29ce484222325;
    for b in bytes {
        h ^= *b as u64;
        h = h.wrapping_mul(0x100000001b3);
    }
    h
}

fn tokens(text: &str) -> Vec<String> {
    text.split(|c: char| !c.is_alphanumeric())
        .filter(|t| !t.is_empty())
        .map(str::to_lowercase)
        .collect()
}

impl EmbeddingProvider for HashingEmbedder {
    fn dim(&self) -> usize {
        self.dim
    }

    fn embed(&self, text: &str) -> Result<Vec<f64>, LlmError> {
        if text.trim().is_empty() {
            return Err(LlmError::EmptyText);
        }
        let toks = tokens(text);
        let mut v = vec![0.0; self.dim];
        let mut add = |feature: &str| {
            let h = fnv1a(feature.as_bytes());
            let sign = if h >> 63 == 1 { -1.0 } else { 1.0 };
            v[(h % self.dim as u64) as usize] += sign;
        };
        for t in &toks {
            add(t);
        }
        for pair in toks.windows(2) {
            add(&format!("{} {}", pair[0], pair[1]));
        }
        // Punctuation-only text still gets a well-defined direction.
        if toks.is_empty() {
            add(text.trim());
        }
        let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        if norm == 0.0 {
            v[(fnv1a(text.as_bytes()) % self.dim as u64) as usize] = 1.0;
            return Ok(v);
        }
        Ok(v.into_iter().map(|x| x / norm).collect())
    }
}

/// Cosine similarity; zero when either vector is zero.
pub fn cosine(a: &[f64], b: &[f64]) -> f64 {
    let dot: f64 = a.iter().zip(b).map(|(x, y)| x * y).sum();
    let na = a.iter().map(|x| x * x).sum::<f64>().sqrt();
    let nb = b.iter().map(|x| x * x).sum::<f64>().sqrt();
    if na == 0.0 || nb == 0.0 {
        0.0
    } else {
        dot / (na * nb)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn identical_text_has_cosine_one() {
        let e = HashingEmbedder::default();
        let a = e.embed("date difference in years").unwrap();
        let b = e.embed("date difference in years").unwrap();
        assert_eq!(a, b);
        assert!((cosine(&a, &b) - 1.0).abs() < 1e-12);
    }

    #[test]
    fn empty_text_is_rejected() {
        assert_eq!(HashingEmbedder::default().embed("  "), Err(LlmError::EmptyText));
    }

    #[test]
    fn case_and_punctuation_do_not_matter() {
        let e = HashingEmbedder::default();
        assert_eq!(e.embed("Hello, World").unwrap(), e.embed("hello world").unwrap());
    }

    proptest! {
        #[test]
        fn vectors_are_unit_norm(text in "[a-zA-Z0-9 ,.()_-]{1,80}") {
            prop_assume!(!text.trim().is_empty());
            let v = HashingEmbedder::default().embed(&text).unwrap();
            let n = v.iter().map(|x| x * x).sum::<f64>().sqrt();
            prop_assert!((n - 1.0).abs() < 1e-6);
            prop_assert_eq!(v.len(), EMBED_DIM);
        }
    }
}
