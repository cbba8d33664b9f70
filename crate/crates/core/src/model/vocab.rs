//! Byte-level vocabulary: 256 byte tokens plus a beginning-of-sequence marker.

use std::fmt;

pub const VOCAB_SIZE: usize = 257;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct TokenId(u32);

impl TokenId {
    pub const BOS: TokenId = TokenId(256);

    pub const fn new(id: u32) -> Self {
        TokenId(id)
    }

    pub const fn from_byte(b: u8) -> Self {
        TokenId(b as u32)
    }

    pub const fn id(self) -> u32 {
        self.0
    }

    pub const fn index(self) -> usize {
        self.0 as usize
    }

    /// The byte this token encodes, or `None` for BOS and out-of-range ids.
    pub fn as_byte(self) -> Option<u8> {
        u8::try_from(self.0).ok()
    }
}

impl fmt::Display for TokenId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if *self == Self::BOS {
            f.write_str("<bos>")
        } else {
            write!(f, "{}", self.0)
        }
    }
}

/// `[BOS]` followed by one token per byte.
pub fn tokenize(bytes: &[u8]) -> Vec<TokenId> {
    std::iter::once(TokenId::BOS)
        .chain(bytes.iter().copied().map(TokenId::from_byte))
        .collect()
}

/// Inverse of [`tokenize`]; BOS markers and out-of-range ids are dropped.
pub fn detokenize(tokens: &[TokenId]) -> Vec<u8> {
    tokens.iter().filter_map(|t| t.as_byte()).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn empty_input_is_bos_only() {
        assert_eq!(tokenize(b""), vec![TokenId::BOS]);
        assert_eq!(TokenId::BOS.id(), 256);
    }

    #[test]
    fn bytes_map_to_their_values() {
        let ids: Vec<u32> = tokenize(b"ab").iter().map(|t| t.id()).collect();
        assert_eq!(ids, vec![256, 97, 98]);
    }

    proptest! {
        #[test]
        fn round_trip(bytes in proptest::collection::vec(any::<u8>(), 0..256)) {
            prop_assert_eq!(detokenize(&tokenize(&bytes)), bytes);
        }
    }
}
