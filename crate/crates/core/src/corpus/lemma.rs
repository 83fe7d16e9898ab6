//! Rule-based English lemmatizer: an exception lexicon for irregular forms,
//! then suffix stripping by coarse part of speech.

use std::collections::HashMap;
use std::sync::OnceLock;

const IRREGULAR: &str = include_str!("../../data/irregular.tsv");

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
enum Class {
    Noun,
    Verb,
    Adj,
    Adv,
    Other,
}

impl Class {
    fn of(universal_tag: &str) -> Class {
        match universal_tag {
            "NOUN" => Class::Noun,
            "VERB" => Class::Verb,
            "ADJ" => Class::Adj,
            "ADV" => Class::Adv,
            _ => Class::Other,
        }
    }
}

fn exceptions() -> &'static HashMap<(Class, String), String> {
    static TABLE: OnceLock<HashMap<(Class, String), String>> = OnceLock::new();
    TABLE.get_or_init(|| {
        IRREGULAR
            .lines()
            .filter(|l| !l.starts_with('#') && !l.trim().is_empty())
            .filter_map(|l| {
                let mut parts = l.split('\t');
                let class = Class::of(parts.next()?);
                let form = parts.next()?.to_string();
                let lemma = parts.next()?.to_string();
                Some(((class, form), lemma))
            })
            .collect()
    })
}

fn is_vowel(c: u8) -> bool {
    matches!(c, b'a' | b'e' | b'i' | b'o' | b'u')
}

fn has_vowel(s: &str) -> bool {
    s.bytes().any(|c| is_vowel(c) || c == b'y')
}

fn vowel_groups(s: &str) -> usize {
    let mut groups = 0;
    let mut prev = false;
    for c in s.bytes() {
        let v = is_vowel(c);
        if v && !prev {
            groups += 1;
        }
        prev = v;
    }
    groups
}

/// Undoes consonant doubling (`stopp` -> `stop`) for the letters English doubles.
fn undouble(stem: &str) -> Option<String> {
    let b = stem.as_bytes();
    let n = b.len();
    if n >= 3 && b[n - 1] == b[n - 2] && matches!(b[n - 1], b'b' | b'd' | b'g' | b'm' | b'n' | b'p' | b'r' | b't') {
        Some(stem[..n - 1].to_string())
    } else {
        None
    }
}

/// Restores a silent final `e` removed by `-ed`/`-ing` (`bak` -> `bake`).
fn restore_e(stem: &str) -> String {
    let b = stem.as_bytes();
    let n = b.len();
    let last = b[n - 1];
    let cvc = n >= 2
        && !is_vowel(last)
        && !matches!(last, b'w' | b'x' | b'y')
        && is_vowel(b[n - 2])
        && (n == 2 || !is_vowel(b[n - 3]))
        && vowel_groups(stem) == 1;
    let needs_e = match last {
        b'v' | b'u' | b'c' => true,
        b'z' => !(n >= 2 && b[n - 2] == b'z'),
        b'g' => (n >= 2 && matches!(b[n - 2], b'd' | b'r')) || cvc,
        b'l' => (n >= 2 && !is_vowel(b[n - 2]) && !matches!(b[n - 2], b'l' | b'r' | b'w')) || cvc,
        _ => cvc,
    };
    if needs_e {
        format!("{stem}e")
    } else {
        stem.to_string()
    }
}

fn strip_plural(w: &str) -> Option<String> {
    for (suffix, repl) in [("sses", "ss"), ("xes", "x"), ("zzes", "zz"), ("ches", "ch"), ("shes", "sh")] {
        if let Some(stem) = w.strip_suffix(suffix) {
            if !stem.is_empty() {
                return Some(format!("{stem}{repl}"));
            }
        }
    }
    if let Some(stem) = w.strip_suffix("ies") {
        if stem.len() >= 2 {
            return Some(format!("{stem}y"));
        }
    }
    if w.len() > 3 && w.ends_with('s') && !w.ends_with("ss") && !w.ends_with("us") && !w.ends_with("is") {
        return Some(w[..w.len() - 1].to_string());
    }
    None
}

fn strip_verb(w: &str) -> Option<String> {
    if let Some(s) = strip_plural(w) {
        return Some(s);
    }
    if let Some(stem) = w.strip_suffix("ied") {
        if stem.len() >= 2 {
            return Some(format!("{stem}y"));
        }
    }
    if w.len() > 4 && w.ends_with("eed") {
        return Some(w[..w.len() - 1].to_string());
    }
    for suffix in ["ed", "ing"] {
        if let Some(stem) = w.strip_suffix(suffix) {
            if stem.len() < 2 || !has_vowel(stem) {
                continue;
            }
            if let Some(s) = undouble(stem) {
                return Some(s);
            }
            if suffix == "ing" && stem.ends_with('y') {
                return Some(stem.to_string());
            }
            return Some(restore_e(stem));
        }
    }
    None
}

fn strip_degree(w: &str) -> Option<String> {
    for suffix in ["est", "er"] {
        if let Some(stem) = w.strip_suffix(suffix) {
            if stem.len() < 3 || !has_vowel(stem) {
                continue;
            }
            if let Some(s) = stem.strip_suffix('i') {
                return Some(format!("{s}y"));
            }
            if let Some(s) = undouble(stem) {
                return Some(s);
            }
            return Some(restore_e(stem));
        }
    }
    None
}

fn step(word: &str, class: Class) -> String {
    if let Some(l) = exceptions().get(&(class, word.to_string())) {
        return l.clone();
    }
    let stripped = match class {
        Class::Noun => strip_plural(word),
        Class::Verb => strip_verb(word),
        Class::Adj | Class::Adv => strip_degree(word),
        Class::Other => None,
    };
    stripped.unwrap_or_else(|| word.to_string())
}

/// Lowercased lemma of `word` given its universal tag. Unknown patterns pass
/// through unchanged, and the result is always a fixed point
/// (`lemmatize(lemmatize(w)) == lemmatize(w)`).
pub fn lemmatize(word: &str, universal_tag: &str) -> String {
    let class = Class::of(universal_tag);
    let mut current = word.to_lowercase();
    for _ in 0..8 {
        let next = step(&current, class);
        if next == current {
            return current;
        }
        current = next;
    }
    current
}
