//! Pluggable tokenization. The built-in default is byte-level (vocab 256),
//! so the toy model needs no external vocabulary files.

pub trait Tokenizer {
    fn encode(&self, text: &str) -> Vec<u32>;
    fn decode(&self, tokens: &[u32]) -> String;
    fn vocab_size(&self) -> usize;
}

/// One token per UTF-8 byte. Decoding drops token ids >= 256 and replaces
/// invalid UTF-8 lossily.
#[derive(Debug, Clone, Copy, Default)]
pub struct ByteTokenizer;

impl Tokenizer for ByteTokenizer {
    fn encode(&self, text: &str) -> Vec<u32> {
        text.bytes().map(u32::from).collect()
    }

    fn decode(&self, tokens: &[u32]) -> String {
        let bytes: Vec<u8> = tokens
            .iter()
            .filter_map(|&t| u8::try_from(t).ok())
            .collect();
        String::from_utf8_lossy(&bytes).into_owned()
    }

    fn vocab_size(&self) -> usize {
        256
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn byte_round_trip() {
        let tok = ByteTokenizer;
        let text = "pass key 48291, over & out";
        let ids = tok.encode(text);
        assert_eq!(ids.len(), text.len());
        assert!(ids.iter().all(|&t| t < 256));
        assert_eq!(tok.decode(&ids), text);
    }

    #[test]
    fn decode_skips_out_of_vocab() {
        let tok = ByteTokenizer;
        assert_eq!(tok.decode(&[104, 105, 999]), "hi");
    }
}
