//! Small shared helpers: deterministic seed derivation, stable hashing,
//! and fixed-precision float formatting for text artifacts.

/// One round of splitmix64, the counter-based generator used to derive
/// independent sub-seeds from a base seed. Derivation is position-based, so
/// consumers (per-tree seeds, per-fold seeds) are order-independent.
pub fn splitmix64(x: u64) -> u64 {
    let mut z = x.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Derives the seed for logical stream `stream` from `base`.
pub fn derive_seed(base: u64, stream: u64) -> u64 {
    splitmix64(base ^ splitmix64(stream))
}

/// FNV-1a over a byte string; used where a platform-stable hash is required
/// (fitness cache keys feed per-individual classifier seeds).
pub fn fnv1a64(bytes: &[u8]) -> u64 {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for &b in bytes {
        h ^= u64::from(b);
        h = h.wrapping_mul(0x0000_0100_0000_01b3);
    }
    h
}

/// Ordered sample of `k` distinct values from `0..n` (partial Fisher-Yates).
pub fn sample_without_replacement<R: rand::Rng>(rng: &mut R, n: usize, k: usize) -> Vec<usize> {
    let k = k.min(n);
    let mut pool: Vec<usize> = (0..n).collect();
    for i in 0..k {
        let j = rng.random_range(i..n);
        pool.swap(i, j);
    }
    pool.truncate(k);
    pool
}

/// Formats `x` with 12 significant digits, the precision contract for all
/// numeric text artifacts (feature CSV, dataset re-serialization).
pub fn fmt_sig12(x: f64) -> String {
    if x == 0.0 {
        return "0".to_string();
    }
    if !x.is_finite() {
        // Text artifacts only ever carry finite values; keep Display's
        // spelling for anything that slips through.
        return format!("{x}");
    }
    let formatted = format!("{x:.11e}");
    // Rust renders exponents without a sign or padding ("1.5e2"); that is
    // fine for round-tripping, which is all the contract asks for.
    formatted
}
