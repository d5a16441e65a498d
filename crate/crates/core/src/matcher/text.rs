//! Native text similarities used by the rule baseline and the features.

use std::collections::BTreeSet;

fn normalize(s: &str) -> Vec<char> {
    let folded = s.to_lowercase();
    let mut out = Vec::with_capacity(folded.len());
    for word in folded.split_whitespace() {
        if !out.is_empty() {
            out.push(' ');
        }
        out.extend(word.chars());
    }
    out
}

/// Sorted (trigram, count) pairs. Inputs shorter than three characters
/// contribute the whole string as their single gram.
fn trigram_counts(s: &str) -> Vec<(Vec<char>, u64)> {
    let chars = normalize(s);
    let mut grams: Vec<Vec<char>> = if chars.is_empty() {
        Vec::new()
    } else if chars.len() < 3 {
        vec![chars]
    } else {
        chars.windows(3).map(<[char]>::to_vec).collect()
    };
    grams.sort_unstable();
    let mut out: Vec<(Vec<char>, u64)> = Vec::new();
    for g in grams {
        match out.last_mut() {
            Some((last, n)) if *last == g => *n += 1,
            _ => out.push((g, 1)),
        }
    }
    out
}

/// Cosine similarity of character-trigram count vectors over case-folded,
/// whitespace-collapsed input.
pub fn text_cosine(a: &str, b: &str) -> f64 {
    let (ca, cb) = (trigram_counts(a), trigram_counts(b));
    if ca.is_empty() || cb.is_empty() {
        return 0.0;
    }
    let norm = |c: &[(Vec<char>, u64)]| c.iter().map(|(_, n)| n * n).sum::<u64>();
    let (mut i, mut j, mut dot) = (0, 0, 0u64);
    while i < ca.len() && j < cb.len() {
        match ca[i].0.cmp(&cb[j].0) {
            std::cmp::Ordering::Less => i += 1,
            std::cmp::Ordering::Greater => j += 1,
            std::cmp::Ordering::Equal => {
                dot += ca[i].1 * cb[j].1;
                i += 1;
                j += 1;
            }
        }
    }
    // sqrt(na·nb) is exact when na == nb, so identical inputs give exactly 1
    let denom = ((norm(&ca) as f64) * (norm(&cb) as f64)).sqrt();
    (dot as f64 / denom).min(1.0)
}

/// 1 − Levenshtein distance / longer length, on case-folded input.
pub fn levenshtein_sim(a: &str, b: &str) -> f64 {
    let a: String = normalize(a).into_iter().collect();
    let b: String = normalize(b).into_iter().collect();
    strsim::normalized_levenshtein(&a, &b)
}

pub fn tokens(s: &str) -> BTreeSet<String> {
    s.split(|c: char| !c.is_alphanumeric()).filter(|t| !t.is_empty()).map(str::to_lowercase).collect()
}

/// Jaccard index of two token sets; two empty sets score 0.
pub fn jaccard(a: &BTreeSet<String>, b: &BTreeSet<String>) -> f64 {
    let union = a.union(b).count();
    if union == 0 {
        return 0.0;
    }
    a.intersection(b).count() as f64 / union as f64
}
