/// Dimension of the offline embedding.
pub const EMBED_DIM: usize = 512;

fn fnv1a(bytes: &[u8]) -> u64 {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for &b in bytes {
        h ^= b as u64;
        h = h.wrapping_mul(0x0000_0100_0000_01b3);
    }
    h
}

/// Lower-cased alphanumeric tokens.
fn tokens(text: &str) -> impl Iterator<Item = String> + '_ {
    text.split(|c: char| !c.is_alphanumeric() && c != '_')
        .filter(|t| !t.is_empty())
        .map(|t| t.to_lowercase())
}

/// Bucket and sign of a token in the hashed embedding.
pub(crate) fn token_slot(token: &str) -> (usize, f32) {
    let h = fnv1a(token.as_bytes());
    ((h % EMBED_DIM as u64) as usize, if h >> 63 == 0 { 1.0 } else { -1.0 })
}

/// Signed hashed term-frequency vector, L2-normalized (all zeros for token-free text).
pub fn hashed_embedding(text: &str) -> Vec<f32> {
    let mut v = vec![0.0f64; EMBED_DIM];
    for t in tokens(text) {
        let (slot, sign) = token_slot(&t);
        v[slot] += sign as f64;
    }
    let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
    if norm > 0.0 {
        v.iter().map(|x| (x / norm) as f32).collect()
    } else {
        vec![0.0; EMBED_DIM]
    }
}

/// Cosine similarity; zero when either vector vanishes.
pub fn cosine(a: &[f32], b: &[f32]) -> f64 {
    let dot: f64 = a.iter().zip(b).map(|(x, y)| *x as f64 * *y as f64).sum();
    let na = a.iter().map(|x| (*x as f64).powi(2)).sum::<f64>().sqrt();
    let nb = b.iter().map(|x| (*x as f64).powi(2)).sum::<f64>().sqrt();
    if na == 0.0 || nb == 0.0 {
        0.0
    } else {
        dot / (na * nb)
    }
}
