use std::collections::HashSet;

use super::tokenize;

/// Assigns a language label to a post, or `None` when undecided.
pub trait LanguageIdentifier {
    fn identify(&self, text: &str) -> Option<String>;
}

impl<F> LanguageIdentifier for F
where
    F: Fn(&str) -> Option<String>,
{
    fn identify(&self, text: &str) -> Option<String> {
        self(text)
    }
}

const EN: &[&str] = &[
    "the", "and", "is", "to", "of", "a", "in", "that", "it", "you", "i", "for", "this", "with", "are", "be", "not", "have", "they", "on", "was", "but", "what", "just", "my", "me", "so", "do", "if", "at",
];
const FR: &[&str] = &[
    "le", "la", "les", "et", "est", "des", "un", "une", "du", "que", "qui", "pas", "je", "il", "dans", "pour", "ce", "sur", "avec", "vous", "nous", "mais", "ne", "au", "sont",
];
const ES: &[&str] = &[
    "el", "los", "las", "y", "es", "en", "que", "un", "una", "por", "con", "para", "del", "se", "lo", "como", "pero", "su", "yo", "al", "muy", "esta", "son", "tiene",
];
const DE: &[&str] = &[
    "der", "die", "das", "und", "ist", "nicht", "ein", "eine", "zu", "den", "mit", "sich", "auf", "ich", "es", "sie", "dem", "auch", "von", "wir", "aber", "wie", "sind", "nur",
];

/// Bundled fallback: counts stopword hits per language over the post's
/// tokens and returns the language with the most hits. Zero hits or a tie
/// for first place leaves the post unlabeled.
#[derive(Debug, Clone)]
pub struct StopwordLanguageId {
    languages: Vec<(String, HashSet<&'static str>)>,
}

impl Default for StopwordLanguageId {
    fn default() -> Self {
        let langs = [("en", EN), ("fr", FR), ("es", ES), ("de", DE)];
        StopwordLanguageId {
            languages: langs
                .iter()
                .map(|(label, words)| (label.to_string(), words.iter().copied().collect()))
                .collect(),
        }
    }
}

impl LanguageIdentifier for StopwordLanguageId {
    fn identify(&self, text: &str) -> Option<String> {
        let tokens = tokenize(text);
        let scores: Vec<usize> = self
            .languages
            .iter()
            .map(|(_, words)| tokens.iter().filter(|t| words.contains(t.as_str())).count())
            .collect();
        let best = *scores.iter().max()?;
        if best == 0 || scores.iter().filter(|&&s| s == best).count() > 1 {
            return None;
        }
        let idx = scores.iter().position(|&s| s == best)?;
        Some(self.languages[idx].0.clone())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn detects_common_languages() {
        let id = StopwordLanguageId::default();
        assert_eq!(id.identify("this is what they do to you").as_deref(), Some("en"));
        assert_eq!(id.identify("je ne sais pas ce que vous voulez").as_deref(), Some("fr"));
        assert_eq!(id.identify("der Hund ist nicht auf dem Sofa").as_deref(), Some("de"));
        assert_eq!(id.identify("los perros son muy grandes pero").as_deref(), Some("es"));
        assert_eq!(id.identify("foid cope rope").as_deref(), None);
    }
}
