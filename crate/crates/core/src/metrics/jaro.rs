/// Prefix scaling factor.
pub const WINKLER_P: f64 = 0.1;
/// Maximum common-prefix length that earns the bonus.
pub const WINKLER_PREFIX_CAP: usize = 4;

/// Jaro similarity over Unicode scalar values.
///
/// Two characters match when equal and no further apart than
/// `⌊max(|a|,|b|)/2⌋ − 1`. Transpositions are half the matched pairs that
/// are out of order, rounded down.
pub fn jaro(a: &str, b: &str) -> f64 {
    let a: Vec<char> = a.chars().collect();
    let b: Vec<char> = b.chars().collect();
    if a == b {
        return 1.0;
    }
    if a.is_empty() || b.is_empty() {
        return 0.0;
    }
    let window = (a.len().max(b.len()) / 2).saturating_sub(1);
    let mut a_matched = vec![false; a.len()];
    let mut b_matched = vec![false; b.len()];
    let mut matches = 0usize;
    for (i, ca) in a.iter().enumerate() {
        let lo = i.saturating_sub(window);
        let hi = (i + window + 1).min(b.len());
        for j in lo..hi {
            if !b_matched[j] && b[j] == *ca {
                a_matched[i] = true;
                b_matched[j] = true;
                matches += 1;
                break;
            }
        }
    }
    if matches == 0 {
        return 0.0;
    }
    let a_seq = a.iter().zip(&a_matched).filter(|(_, m)| **m).map(|(c, _)| c);
    let b_seq = b.iter().zip(&b_matched).filter(|(_, m)| **m).map(|(c, _)| c);
    let out_of_order = a_seq.zip(b_seq).filter(|(x, y)| x != y).count();
    let t = (out_of_order / 2) as f64;
    let m = matches as f64;
    (m / a.len() as f64 + m / b.len() as f64 + (m - t) / m) / 3.0
}

/// Jaro-Winkler similarity: `J + ℓ·p·(1 − J)` with `p = 0.1` and the
/// common prefix `ℓ` capped at 4. Always in `[0, 1]`; 1 iff `a == b`.
pub fn jaro_winkler(a: &str, b: &str) -> f64 {
    let j = jaro(a, b);
    if j == 0.0 || j == 1.0 {
        return j;
    }
    let prefix = a
        .chars()
        .zip(b.chars())
        .take(WINKLER_PREFIX_CAP)
        .take_while(|(x, y)| x == y)
        .count();
    j + prefix as f64 * WINKLER_P * (1.0 - j)
}
