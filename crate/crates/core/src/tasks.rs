//! Long-context retrieval task: hide a numeric pass key in filler text and
//! score whether a model's output recalls it.

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};

const INTRO: &str = "There is a pass key hidden inside a lot of irrelevant text. \
Find it and memorize it. I will quiz you about the pass key.\n";
const FILLER: &str = "The grass is green. The sky is blue. The sun is yellow. \
Here we go. There and back again.\n";
const QUESTION: &str = "What is the pass key? The pass key is ";

/// A generated retrieval prompt with its ground truth.
#[derive(Debug, Clone, PartialEq)]
pub struct PasskeyPrompt {
    pub text: String,
    pub answer: String,
    /// Where the needle sits in the filler, in `[0, 1)`.
    pub depth_fraction: f64,
}

/// Build a prompt of at most `context_len` bytes: intro, filler sentences,
/// a pass-key needle at a seed-chosen depth, and the quiz question.
///
/// Deterministic for a given `(context_len, key_digits, seed)`. The first
/// key digit is nonzero so the answer has exactly `key_digits` digits.
pub fn passkey_make(context_len: usize, key_digits: usize, seed: u64) -> Result<PasskeyPrompt> {
    if key_digits == 0 {
        return Err(Error::EmptyInput("key_digits must be >= 1"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut answer = String::with_capacity(key_digits);
    answer.push(char::from(b'1' + rng.random_range(0..9u8)));
    for _ in 1..key_digits {
        answer.push(char::from(b'0' + rng.random_range(0..10u8)));
    }
    let depth_fraction: f64 = rng.random_range(0.0..1.0);

    let needle = format!("The pass key is {answer}. Remember it. {answer} is the pass key.\n");
    let fixed = INTRO.len() + needle.len() + QUESTION.len();
    let min = fixed + 2 * FILLER.len();
    if context_len < min {
        return Err(Error::ContextTooShort {
            context_len,
            min,
        });
    }
    let n_fill = (context_len - fixed) / FILLER.len();
    let before = (depth_fraction * (n_fill + 1) as f64).floor() as usize;

    let mut text = String::with_capacity(context_len);
    text.push_str(INTRO);
    for _ in 0..before {
        text.push_str(FILLER);
    }
    text.push_str(&needle);
    for _ in before..n_fill {
        text.push_str(FILLER);
    }
    text.push_str(QUESTION);
    debug_assert!(text.len() <= context_len);
    Ok(PasskeyPrompt {
        text,
        answer,
        depth_fraction,
    })
}

/// 1 iff the first maximal run of ASCII digits in `model_output` equals
/// `answer` exactly.
pub fn passkey_score(model_output: &str, answer: &str) -> u8 {
    let bytes = model_output.as_bytes();
    let Some(start) = bytes.iter().position(u8::is_ascii_digit) else {
        return 0;
    };
    let end = start
        + bytes[start..]
            .iter()
            .take_while(|b| b.is_ascii_digit())
            .count();
    u8::from(&model_output[start..end] == answer)
}
