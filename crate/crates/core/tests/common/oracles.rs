//! Slow reference implementations of the corpus metrics, written without
//! sharing code with the library versions.

use kw2sent::evalsuite::StemMatcher;

fn count_occurrences(tokens: &[String], gram: &[String]) -> usize {
    if tokens.len() < gram.len() {
        return 0;
    }
    (0..=tokens.len() - gram.len())
        .filter(|&i| tokens[i..i + gram.len()] == *gram)
        .count()
}

/// Corpus BLEU-4 by scanning every candidate n-gram position.
pub fn bleu(cands: &[Vec<String>], refs: &[Vec<String>]) -> f64 {
    let mut logs = Vec::new();
    for n in 1..=4 {
        let mut matched = 0usize;
        let mut total = 0usize;
        for (c, r) in cands.iter().zip(refs) {
            if c.len() < n {
                continue;
            }
            let grams: Vec<&[String]> = (0..=c.len() - n).map(|i| &c[i..i + n]).collect();
            total += grams.len();
            let mut seen: Vec<&[String]> = Vec::new();
            for g in &grams {
                if seen.contains(g) {
                    continue;
                }
                seen.push(g);
                matched += count_occurrences(c, g).min(count_occurrences(r, g));
            }
        }
        if total > 0 {
            if matched == 0 {
                return 0.0;
            }
            logs.push((matched as f64 / total as f64).ln());
        }
    }
    if logs.is_empty() {
        return 0.0;
    }
    let c: usize = cands.iter().map(Vec::len).sum();
    let r: usize = refs.iter().map(Vec::len).sum();
    let bp = if c == 0 {
        0.0
    } else if c > r {
        1.0
    } else {
        (1.0 - r as f64 / c as f64).exp()
    };
    let mean = logs.iter().sum::<f64>() / logs.len() as f64;
    100.0 * bp * mean.exp()
}

/// LCS length by enumerating every subsequence of the shorter sentence.
pub fn lcs_brute(a: &[String], b: &[String]) -> usize {
    let (short, long) = if a.len() <= b.len() { (a, b) } else { (b, a) };
    assert!(short.len() <= 16, "brute force LCS is exponential");
    let mut best = 0;
    for mask in 0u32..(1 << short.len()) {
        let sub: Vec<&String> = (0..short.len()).filter(|i| mask & (1 << i) != 0).map(|i| &short[i]).collect();
        if sub.len() <= best {
            continue;
        }
        let mut it = long.iter();
        if sub.iter().all(|w| it.any(|x| x == *w)) {
            best = sub.len();
        }
    }
    best
}

pub fn rouge_l(cands: &[Vec<String>], refs: &[Vec<String>]) -> f64 {
    let beta2 = 1.2f64 * 1.2;
    let mut sum = 0.0;
    for (c, r) in cands.iter().zip(refs) {
        sum += if c.is_empty() && r.is_empty() {
            1.0
        } else {
            let l = lcs_brute(c, r) as f64;
            if l == 0.0 {
                0.0
            } else {
                let p = l / c.len() as f64;
                let rr = l / r.len() as f64;
                (1.0 + beta2) * p * rr / (rr + beta2 * p)
            }
        };
    }
    100.0 * sum / cands.len() as f64
}

/// METEOR-lite with an alignment built from a reference-side table.
pub fn meteor_lite(cands: &[Vec<String>], refs: &[Vec<String>]) -> f64 {
    let stemmer = StemMatcher::default();
    let (mut m, mut ch, mut cl, mut rl) = (0usize, 0usize, 0usize, 0usize);
    for (c, r) in cands.iter().zip(refs) {
        // ref_of[i] = reference position aligned to candidate position i
        let mut ref_of = vec![usize::MAX; c.len()];
        let mut taken = vec![false; r.len()];
        let keys: [Box<dyn Fn(&str) -> String>; 2] =
            [Box::new(|w: &str| w.to_string()), Box::new(|w: &str| stemmer.stem(w))];
        for key in keys.iter() {
            for i in 0..c.len() {
                if ref_of[i] != usize::MAX {
                    continue;
                }
                let k = key(&c[i]);
                for j in 0..r.len() {
                    if !taken[j] && key(&r[j]) == k {
                        taken[j] = true;
                        ref_of[i] = j;
                        break;
                    }
                }
            }
        }
        let aligned: Vec<(usize, usize)> = (0..c.len())
            .filter(|&i| ref_of[i] != usize::MAX)
            .map(|i| (i, ref_of[i]))
            .collect();
        let mut chunks = 0;
        for k in 0..aligned.len() {
            let continues = k > 0 && aligned[k].0 == aligned[k - 1].0 + 1 && aligned[k].1 == aligned[k - 1].1 + 1;
            if !continues {
                chunks += 1;
            }
        }
        m += aligned.len();
        ch += chunks;
        cl += c.len();
        rl += r.len();
    }
    if m == 0 {
        return 0.0;
    }
    let mf = m as f64;
    let p = mf / cl as f64;
    let r = mf / rl as f64;
    let fmean = p * r / (0.9 * p + 0.1 * r);
    let pen = 0.5 * (ch as f64 / mf).powi(3);
    100.0 * fmean * (1.0 - pen)
}

const WORDS: [&str; 10] = ["the", "cat", "cats", "sat", "sits", "on", "mat", "mats", "a", "dog"];

fn random_sentence(rng: &mut impl rand::Rng, max_len: usize) -> Vec<String> {
    let n = rng.gen_range(1..=max_len);
    (0..n).map(|_| WORDS[rng.gen_range(0..WORDS.len())].to_string()).collect()
}

/// Random sentence pairs over a small vocabulary, including inflected forms
/// so that stem matching is exercised.
pub fn random_pairs(rng: &mut impl rand::Rng, count: usize, max_len: usize) -> (Vec<Vec<String>>, Vec<Vec<String>>) {
    (0..count)
        .map(|_| (random_sentence(rng, max_len), random_sentence(rng, max_len)))
        .unzip()
}
