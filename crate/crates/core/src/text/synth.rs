use alloc::collections::BTreeSet;
use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;

use rand::seq::index;
use rand::Rng;
use serde::{Deserialize, Serialize};

use super::corpus::{Comment, Label, Reason};
use crate::error::{Error, Result};
use crate::rng;

/// Parameters of a planted-token corpus.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SynthConfig {
    pub comments: usize,
    pub benign_vocab: usize,
    pub toxic_tokens: usize,
    pub inappropriate_fraction: f64,
    /// Probability that a planted toxic token gets one character replaced by a digit.
    pub obfuscation_rate: f64,
    pub min_len: usize,
    pub max_len: usize,
    /// Longest run of consecutive toxic tokens planted as one phrase.
    pub max_phrase_len: usize,
    pub seed: u64,
}

impl Default for SynthConfig {
    fn default() -> Self {
        SynthConfig {
            comments: 2000,
            benign_vocab: 400,
            toxic_tokens: 10,
            inappropriate_fraction: 0.5,
            obfuscation_rate: 0.0,
            min_len: 8,
            max_len: 20,
            max_phrase_len: 3,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SyntheticCorpus {
    pub comments: Vec<Comment>,
    pub benign_vocab: Vec<String>,
    pub toxic_vocab: Vec<String>,
}

const CONSONANTS: &[u8] = b"bcdfghjklmnprstvz";
const VOWELS: &[u8] = b"aeiouy";

fn word(rng: &mut impl Rng, len: usize) -> String {
    let start_vowel = rng.gen_bool(0.3);
    (0..len)
        .map(|i| {
            let set = if (i % 2 == 0) ^ start_vowel { CONSONANTS } else { VOWELS };
            set[rng.gen_range(0..set.len())] as char
        })
        .collect()
}

fn vocabulary(rng: &mut impl Rng, count: usize, lens: (usize, usize), taken: &mut BTreeSet<String>) -> Vec<String> {
    let mut out = Vec::with_capacity(count);
    while out.len() < count {
        let len = rng.gen_range(lens.0..=lens.1);
        let w = word(rng, len);
        if taken.insert(w.clone()) {
            out.push(w);
        }
    }
    out
}

/// Replaces one character with a digit, preferring look-alike digits
/// (`insult` → `1nsult`).
pub fn obfuscate_token(token: &str, rng: &mut impl Rng) -> String {
    let chars: Vec<char> = token.chars().collect();
    let letters: Vec<usize> = (0..chars.len()).filter(|&i| !chars[i].is_ascii_digit()).collect();
    if letters.is_empty() {
        return String::from(token);
    }
    let pos = letters[rng.gen_range(0..letters.len())];
    let digit = match chars[pos] {
        'a' => '4',
        'e' => '3',
        'i' | 'l' => '1',
        'o' => '0',
        's' => '5',
        't' => '7',
        'b' => '8',
        'g' => '9',
        'z' => '2',
        _ => (b'0' + rng.gen_range(0..10u8)) as char,
    };
    chars.iter().enumerate().map(|(i, &c)| if i == pos { digit } else { c }).collect()
}

/// Generates comments over a random benign vocabulary with toxic phrases
/// planted in a fixed fraction of them. A comment is inappropriate exactly when
/// it contains a toxic token; its gold rationale is the positions of those
/// tokens and its reasons are the categories of the planted tokens.
pub fn generate_synthetic_corpus(cfg: &SynthConfig) -> Result<SyntheticCorpus> {
    if !(0.0..=1.0).contains(&cfg.inappropriate_fraction) || !(0.0..=1.0).contains(&cfg.obfuscation_rate) {
        return Err(Error::InvalidArgument("fractions must lie in [0, 1]".into()));
    }
    let n_bad = libm::round(cfg.comments as f64 * cfg.inappropriate_fraction) as usize;
    if cfg.toxic_tokens == 0 && n_bad > 0 {
        return Err(Error::InvalidArgument("inappropriate comments requested with an empty toxic vocabulary".into()));
    }
    if cfg.benign_vocab == 0 || cfg.min_len == 0 || cfg.min_len > cfg.max_len || cfg.max_phrase_len == 0 {
        return Err(Error::InvalidArgument(format!("invalid synthetic corpus config {cfg:?}")));
    }

    let mut vocab_rng = rng::derived(cfg.seed, 0x70c, 0);
    let mut taken = BTreeSet::new();
    let toxic_vocab = vocabulary(&mut vocab_rng, cfg.toxic_tokens, (6, 9), &mut taken);
    let benign_vocab = vocabulary(&mut vocab_rng, cfg.benign_vocab, (3, 8), &mut taken);

    let mut rng = rng::derived(cfg.seed, 0xc0a, 0);
    let bad: BTreeSet<usize> = index::sample(&mut rng, cfg.comments, n_bad).into_iter().collect();

    let mut comments = Vec::with_capacity(cfg.comments);
    for i in 0..cfg.comments {
        let len = rng.gen_range(cfg.min_len..=cfg.max_len);
        let mut tokens: Vec<(String, Option<usize>)> =
            (0..len).map(|_| (benign_vocab[rng.gen_range(0..benign_vocab.len())].clone(), None)).collect();

        if bad.contains(&i) {
            let phrases = if rng.gen_bool(0.3) { 2 } else { 1 };
            let mut gaps = index::sample(&mut rng, len + 1, phrases).into_vec();
            gaps.sort_unstable_by(|a, b| b.cmp(a));
            for gap in gaps {
                let plen = rng.gen_range(1..=cfg.max_phrase_len);
                for _ in 0..plen {
                    let t = rng.gen_range(0..toxic_vocab.len());
                    tokens.insert(gap, (toxic_vocab[t].clone(), Some(t)));
                }
            }
        }

        let mut gold = Vec::new();
        let mut reasons = Vec::new();
        let mut words = Vec::with_capacity(tokens.len());
        for (pos, (w, toxic)) in tokens.into_iter().enumerate() {
            match toxic {
                Some(t) => {
                    gold.push(pos);
                    reasons.push(Reason::ALL[t % Reason::ALL.len()]);
                    if rng.gen_bool(cfg.obfuscation_rate) {
                        words.push(obfuscate_token(&w, &mut rng));
                    } else {
                        words.push(w);
                    }
                }
                None => words.push(w),
            }
        }
        let label = if gold.is_empty() { Label::Appropriate } else { Label::Inappropriate };
        let text = words.join(" ");
        comments.push(Comment::new(format!("s{}-{i}", cfg.seed), text, label, reasons, Some(gold), i as u64)?);
    }
    Ok(SyntheticCorpus { comments, benign_vocab, toxic_vocab })
}

/// Copies of `comments` whose gold tokens are each obfuscated with probability `rate`.
pub fn obfuscate_toxic_tokens(comments: &[Comment], rate: f64, seed: u64) -> Result<Vec<Comment>> {
    let mut rng = rng::derived(seed, 0x0bf, 0);
    comments
        .iter()
        .map(|c| {
            let mut words = c.tokens.clone();
            for &i in c.gold_spans.iter().flatten() {
                if rng.gen_bool(rate) {
                    words[i] = obfuscate_token(&words[i], &mut rng);
                }
            }
            Comment::new(c.id.clone(), words.join(" "), c.label, c.reasons.clone(), c.gold_spans.clone(), c.timestamp)
        })
        .collect()
}
