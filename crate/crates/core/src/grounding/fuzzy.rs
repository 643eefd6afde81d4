/// Minimal insert/delete edit distance between two strings, over chars.
///
/// Equals `|a| + |b| - 2·LCS(a, b)`.
pub fn indel_distance(a: &str, b: &str) -> usize {
    let a: Vec<char> = a.chars().collect();
    let b: Vec<char> = b.chars().collect();
    a.len() + b.len() - 2 * lcs_len(&a, &b)
}

fn lcs_len(a: &[char], b: &[char]) -> usize {
    if a.is_empty() || b.is_empty() {
        return 0;
    }
    let mut row = vec![0usize; b.len() + 1];
    for &ca in a {
        let mut diag = 0;
        for (j, &cb) in b.iter().enumerate() {
            let up = row[j + 1];
            row[j + 1] = if ca == cb { diag + 1 } else { up.max(row[j]) };
            diag = up;
        }
    }
    row[b.len()]
}

/// Normalized indel similarity in `[0, 100]`: `100·(1 − d/(|a|+|b|))`.
/// Two empty strings score 100.
pub fn fuzzy_ratio(a: &str, b: &str) -> f64 {
    let total = a.chars().count() + b.chars().count();
    if total == 0 {
        return 100.0;
    }
    let d = indel_distance(a, b);
    100.0 * (1.0 - d as f64 / total as f64)
}
