use super::{Embedder, EmbeddingError, EmbeddingVector};

pub const DEFAULT_DIM: usize = 384;

const FNV_OFFSET_BASIS: u64 = 0xcbf2_9ce4_8422_2325;
const FNV_PRIME: u64 = 0x0000_0100_0000_01b3;

/// 64-bit FNV-1a. The seed is XORed into the offset basis; seed 0 is plain
/// FNV-1a.
pub fn fnv1a64(bytes: &[u8], seed: u64) -> u64 {
    bytes.iter().fold(FNV_OFFSET_BASIS ^ seed, |h, b| {
        (h ^ u64::from(*b)).wrapping_mul(FNV_PRIME)
    })
}

/// Lowercase and split on anything that is not alphanumeric.
pub fn tokenize(text: &str) -> Vec<String> {
    text.to_lowercase()
        .split(|c: char| !c.is_alphanumeric())
        .filter(|t| !t.is_empty())
        .map(str::to_string)
        .collect()
}

/// Feature-hashed bag of unigrams and adjacent-token bigrams, term-frequency
/// weighted and L2-normalized. Fully deterministic.
#[derive(Debug, Clone)]
pub struct HashingEmbedder {
    dim: usize,
    seed: u64,
}

impl Default for HashingEmbedder {
    fn default() -> Self {
        HashingEmbedder::new(DEFAULT_DIM)
    }
}

impl HashingEmbedder {
    pub fn new(dim: usize) -> Self {
        assert!(dim > 0, "embedding dimension must be positive");
        HashingEmbedder { dim, seed: 0 }
    }

    fn bucket(&self, feature: &str) -> usize {
        (fnv1a64(feature.as_bytes(), self.seed) % self.dim as u64) as usize
    }

    /// Raw term-frequency counts before normalization.
    pub fn counts(&self, text: &str) -> Vec<f64> {
        let tokens = tokenize(text);
        let mut counts = vec![0.0; self.dim];
        for t in &tokens {
            counts[self.bucket(t)] += 1.0;
        }
        for pair in tokens.windows(2) {
            counts[self.bucket(&format!("{} {}", pair[0], pair[1]))] += 1.0;
        }
        counts
    }
}

impl Embedder for HashingEmbedder {
    fn id(&self) -> String {
        format!("fnv1a-bow-bigram/seed{}/d{}", self.seed, self.dim)
    }

    fn dim(&self) -> usize {
        self.dim
    }

    fn embed(&self, text: &str) -> Result<EmbeddingVector, EmbeddingError> {
        if text.trim().is_empty() {
            return Err(EmbeddingError::EmptyText);
        }
        // Text made only of separators has no features either.
        EmbeddingVector::normalized(self.counts(text)).map_err(|_| EmbeddingError::EmptyText)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::embedding::cosine_similarity;

    #[test]
    fn fnv_reference_values() {
        // Published FNV-1a 64 test vectors.
        assert_eq!(fnv1a64(b"", 0), 0xcbf29ce484222325);
        assert_eq!(fnv1a64(b"a", 0), 0xaf63dc4c8601ec8c);
        assert_eq!(fnv1a64(b"foobar", 0), 0x85944171f73967e8);
    }

    #[test]
    fn tokenizer_splits_on_non_alphanumerics() {
        assert_eq!(
            tokenize("Node.js + PostgreSQL, api_style=REST"),
            vec!["node", "js", "postgresql", "api", "style", "rest"]
        );
    }

    #[test]
    fn deterministic_and_unit_norm() {
        let e = HashingEmbedder::default();
        let a = e.embed("postgres rest ssr").unwrap();
        let b = e.embed("postgres rest ssr").unwrap();
        assert_eq!(a, b);
        assert_eq!(a.dim(), DEFAULT_DIM);
        for text in ["x", "a much longer text with repeated repeated words", "ünïcode ok"] {
            let v = e.embed(text).unwrap();
            assert!((v.norm() - 1.0).abs() <= 1e-6);
        }
    }

    #[test]
    fn distinct_tokens_are_distinguishable() {
        let e = HashingEmbedder::default();
        let s = cosine_similarity(&e.embed("ssr").unwrap(), &e.embed("spa").unwrap()).unwrap();
        assert!(s < 0.99, "ssr vs spa similarity {s}");
    }

    #[test]
    fn empty_and_separator_only_text_rejected() {
        let e = HashingEmbedder::default();
        assert_eq!(e.embed("   \n"), Err(EmbeddingError::EmptyText));
        assert_eq!(e.embed("--- !!"), Err(EmbeddingError::EmptyText));
    }

    #[test]
    fn counts_include_bigrams() {
        let e = HashingEmbedder::new(1 << 20);
        let c = e.counts("a b");
        assert_eq!(c.iter().sum::<f64>(), 3.0);
        assert_eq!(c[e.bucket("a b")], 1.0);
    }
}
