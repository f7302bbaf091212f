/// Approximate token count: one token per four UTF-8 bytes, rounded up.
pub fn count_tokens_approx(text: &str) -> u64 {
    (text.len() as u64).div_ceil(4)
}
