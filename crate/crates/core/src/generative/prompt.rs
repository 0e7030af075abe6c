//! Paraphrase prompts sent to text generators.

use super::AugMode;
use crate::{Error, Result};

const PREFIX: &str = "This is a hard problem. The following is a caption from a video: [\"";
const MIDDLE: &str = "\"]. Based on this caption, carefully generate a paraphrased caption capturing the key information and main themes in one sentence with up to twenty words";
const RELEVANCE_CLAUSE: &str =
    " (feel free to add more relevant details based on your knowledge and specalutaion)";

/// Builds the paraphrase prompt for `caption`. The relevance-enhancing variant adds
/// the parenthetical invitation before the final colon. The wording (including its
/// misspelling) is fixed and pinned by golden tests.
pub fn build_prompt(caption: &str, mode: AugMode) -> Result<String> {
    let caption = caption.trim();
    if caption.is_empty() {
        return Err(Error::invalid("cannot build a prompt for an empty caption"));
    }
    let clause = match mode {
        AugMode::Tpvs => "",
        AugMode::Re => RELEVANCE_CLAUSE,
    };
    Ok(format!("{PREFIX}{caption}{MIDDLE}{clause}:"))
}

/// Recovers the caption embedded by [`build_prompt`].
pub fn caption_from_prompt(prompt: &str) -> Option<&str> {
    let rest = prompt.strip_prefix(PREFIX)?;
    let end = rest.rfind(MIDDLE)?;
    Some(&rest[..end])
}

#[cfg(test)]
mod tests {
    use super::*;

    const TPVS_GOLDEN: &str = "This is a hard problem. The following is a caption from a video: [\"a dog runs\"]. Based on this caption, carefully generate a paraphrased caption capturing the key information and main themes in one sentence with up to twenty words:";
    const RE_GOLDEN: &str = "This is a hard problem. The following is a caption from a video: [\"a dog runs\"]. Based on this caption, carefully generate a paraphrased caption capturing the key information and main themes in one sentence with up to twenty words (feel free to add more relevant details based on your knowledge and specalutaion):";

    #[test]
    fn golden_prompts() {
        assert_eq!(
            build_prompt("a dog runs", AugMode::Tpvs).unwrap(),
            TPVS_GOLDEN
        );
        assert_eq!(build_prompt("a dog runs", AugMode::Re).unwrap(), RE_GOLDEN);
    }

    #[test]
    fn empty_caption_rejected() {
        assert!(build_prompt("   ", AugMode::Tpvs).is_err());
        assert!(build_prompt("", AugMode::Re).is_err());
    }

    #[test]
    fn caption_recovered() {
        for mode in [AugMode::Tpvs, AugMode::Re] {
            let p = build_prompt("two \"quoted\"] words", mode).unwrap();
            assert_eq!(caption_from_prompt(&p), Some("two \"quoted\"] words"));
        }
        assert_eq!(caption_from_prompt("hello"), None);
    }
}
