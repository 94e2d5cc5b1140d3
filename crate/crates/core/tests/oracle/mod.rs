//! Slow reference implementations shared by the property suites.
#![allow(dead_code)]

use num_rational::Ratio;

/// Full-matrix edit distance over chars.
pub fn edit_distance(a: &str, b: &str) -> usize {
    let a: Vec<char> = a.chars().collect();
    let b: Vec<char> = b.chars().collect();
    let mut d = vec![vec![0usize; b.len() + 1]; a.len() + 1];
    for (i, row) in d.iter_mut().enumerate() {
        row[0] = i;
    }
    for j in 0..=b.len() {
        d[0][j] = j;
    }
    for i in 1..=a.len() {
        for j in 1..=b.len() {
            let cost = usize::from(a[i - 1] != b[j - 1]);
            d[i][j] = (d[i - 1][j] + 1).min(d[i][j - 1] + 1).min(d[i - 1][j - 1] + cost);
        }
    }
    d[a.len()][b.len()]
}

pub fn exact_similarity(a: &str, b: &str) -> Ratio<i64> {
    let len = a.chars().count().max(b.chars().count());
    if len == 0 {
        return Ratio::from_integer(1);
    }
    Ratio::new((len - edit_distance(a, b)) as i64, len as i64)
}

/// Every word span as (start, end) byte offsets, no length cap.
pub fn all_spans(text: &str, max_words: usize) -> Vec<(usize, usize)> {
    let mut words = Vec::new();
    let bytes: Vec<(usize, char)> = text.char_indices().collect();
    let mut i = 0;
    while i < bytes.len() {
        if bytes[i].1.is_whitespace() {
            i += 1;
            continue;
        }
        let start = bytes[i].0;
        while i < bytes.len() && !bytes[i].1.is_whitespace() {
            i += 1;
        }
        let end = if i < bytes.len() { bytes[i].0 } else { text.len() };
        words.push((start, end));
    }
    let mut spans = Vec::new();
    for a in 0..words.len() {
        for b in a..words.len() {
            if b - a < max_words {
                spans.push((words[a].0, words[b].1));
            }
        }
    }
    spans
}

/// Unpruned argmax: (start, end, similarity) under the shorter-then-earlier tie-break.
pub fn brute_align(prediction: &str, text: &str, max_words: usize) -> Option<(usize, usize, Ratio<i64>)> {
    if let Some(s) = text.find(prediction) {
        return Some((s, s + prediction.len(), Ratio::from_integer(1)));
    }
    let mut scored: Vec<(Ratio<i64>, usize, usize)> = all_spans(text, max_words)
        .into_iter()
        .map(|(s, e)| (exact_similarity(prediction, &text[s..e]), s, e))
        .collect();
    scored.sort_by(|x, y| y.0.cmp(&x.0).then((x.2 - x.1).cmp(&(y.2 - y.1))).then(x.1.cmp(&y.1)));
    scored.first().map(|&(sim, s, e)| (s, e, sim))
}

/// Exhaustive maximum matching over a boolean adjacency matrix.
pub fn brute_matching(adj: &[Vec<bool>], right: usize) -> usize {
    fn go(i: usize, adj: &[Vec<bool>], used: &mut [bool]) -> usize {
        if i == adj.len() {
            return 0;
        }
        let mut best = go(i + 1, adj, used);
        for j in 0..used.len() {
            if adj[i][j] && !used[j] {
                used[j] = true;
                best = best.max(1 + go(i + 1, adj, used));
                used[j] = false;
            }
        }
        best
    }
    go(0, adj, &mut vec![false; right])
}
