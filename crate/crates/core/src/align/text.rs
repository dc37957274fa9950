//! Caption tokenization by word hashing.

/// Lowercased alphanumeric runs, each hashed (FNV-1a) into `0..buckets`.
/// An empty caption becomes the single pad id `buckets`.
pub fn tokenize_text(caption: &str, buckets: usize) -> Vec<usize> {
    let ids: Vec<usize> = caption
        .split(|c: char| !c.is_alphanumeric())
        .filter(|w| !w.is_empty())
        .map(|w| (fnv1a(&w.to_lowercase()) % buckets as u64) as usize)
        .collect();
    if ids.is_empty() {
        vec![buckets]
    } else {
        ids
    }
}

fn fnv1a(word: &str) -> u64 {
    word.bytes().fold(0xcbf2_9ce4_8422_2325, |h, b| (h ^ u64::from(b)).wrapping_mul(0x0100_0000_01b3))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn words_hash_deterministically() {
        let ids = tokenize_text("A pop song about love", 32768);
        assert_eq!(ids.len(), 5);
        assert_eq!(ids, tokenize_text("a POP song, about... love!", 32768));
        assert!(ids.iter().all(|&i| i < 32768));
    }

    #[test]
    fn empty_caption_is_pad() {
        assert_eq!(tokenize_text("", 100), vec![100]);
        assert_eq!(tokenize_text(" ,;! ", 100), vec![100]);
    }

    #[test]
    fn repeated_word_repeats_id() {
        let ids = tokenize_text("love love", 32768);
        assert_eq!(ids[0], ids[1]);
    }

    #[test]
    fn fnv_reference_values() {
        assert_eq!(fnv1a(""), 0xcbf29ce484222325);
        assert_eq!(fnv1a("a"), 0xaf63dc4c8601ec8c);
    }
}
