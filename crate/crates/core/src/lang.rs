//! ISO 639-1 language tags.

use std::collections::BTreeSet;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Deserializer, Serialize, Serializer};
use thiserror::Error;

/// Built-in languages with their English names.
pub const BUILTIN_LANGUAGES: [(&str, &str); 14] = [
    ("ar", "Arabic"),
    ("de", "German"),
    ("en", "English"),
    ("es", "Spanish"),
    ("fr", "French"),
    ("hi", "Hindi"),
    ("id", "Indonesian"),
    ("it", "Italian"),
    ("ja", "Japanese"),
    ("nl", "Dutch"),
    ("pt", "Portuguese"),
    ("ru", "Russian"),
    ("vi", "Vietnamese"),
    ("zh", "Chinese"),
];

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum LangError {
    #[error("malformed language code {0:?}: expected two lowercase ASCII letters")]
    Malformed(String),
    #[error("unsupported language code {0:?}")]
    Unsupported(String),
}

/// Two-letter lowercase language tag.
///
/// Parsing through [`FromStr`] accepts only the built-in set; codes outside it
/// must go through a [`LangRegistry`] that has them registered.
#[derive(Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct LangCode([u8; 2]);

impl LangCode {
    fn from_shape(code: &str) -> Result<Self, LangError> {
        let bytes = code.as_bytes();
        if bytes.len() != 2 || !bytes.iter().all(u8::is_ascii_lowercase) {
            return Err(LangError::Malformed(code.to_string()));
        }
        Ok(LangCode([bytes[0], bytes[1]]))
    }

    pub fn as_str(&self) -> &str {
        // Both bytes are ASCII lowercase by construction.
        std::str::from_utf8(&self.0).expect("ascii language code")
    }

    /// English name used in prompts. Registered non-builtin codes fall back to
    /// the upper-cased code.
    pub fn english_name(&self) -> String {
        BUILTIN_LANGUAGES
            .iter()
            .find(|(code, _)| *code == self.as_str())
            .map(|(_, name)| (*name).to_string())
            .unwrap_or_else(|| self.as_str().to_ascii_uppercase())
    }

    pub fn is_builtin(&self) -> bool {
        BUILTIN_LANGUAGES.iter().any(|(code, _)| *code == self.as_str())
    }
}

impl FromStr for LangCode {
    type Err = LangError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let code = Self::from_shape(s)?;
        if code.is_builtin() {
            Ok(code)
        } else {
            Err(LangError::Unsupported(s.to_string()))
        }
    }
}

impl fmt::Display for LangCode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl fmt::Debug for LangCode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "LangCode({})", self.as_str())
    }
}

impl Serialize for LangCode {
    fn serialize<S: Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        serializer.serialize_str(self.as_str())
    }
}

impl<'de> Deserialize<'de> for LangCode {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        let raw = String::deserialize(deserializer)?;
        // Serialized codes were validated on the way in; only the shape is
        // rechecked so registered codes survive a round trip.
        LangCode::from_shape(&raw).map_err(serde::de::Error::custom)
    }
}

/// The set of accepted language codes: the built-ins plus anything registered.
#[derive(Debug, Clone, Default)]
pub struct LangRegistry {
    extra: BTreeSet<LangCode>,
}

impl LangRegistry {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn register(&mut self, code: &str) -> Result<LangCode, LangError> {
        let lang = LangCode::from_shape(code)?;
        if !lang.is_builtin() {
            self.extra.insert(lang);
        }
        Ok(lang)
    }

    pub fn parse(&self, code: &str) -> Result<LangCode, LangError> {
        let lang = LangCode::from_shape(code)?;
        if lang.is_builtin() || self.extra.contains(&lang) {
            Ok(lang)
        } else {
            Err(LangError::Unsupported(code.to_string()))
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_all_builtin_codes() {
        for (code, _) in BUILTIN_LANGUAGES {
            let lang: LangCode = code.parse().unwrap();
            assert_eq!(lang.as_str(), code);
        }
        assert_eq!(BUILTIN_LANGUAGES.len(), 14);
    }

    #[test]
    fn rejects_unknown_and_malformed() {
        assert_eq!("ko".parse::<LangCode>(), Err(LangError::Unsupported("ko".into())));
        assert!(matches!("EN".parse::<LangCode>(), Err(LangError::Malformed(_))));
        assert!(matches!("eng".parse::<LangCode>(), Err(LangError::Malformed(_))));
        assert!(matches!("".parse::<LangCode>(), Err(LangError::Malformed(_))));
    }

    #[test]
    fn registry_accepts_registered_codes() {
        let mut registry = LangRegistry::new();
        assert!(registry.parse("ko").is_err());
        registry.register("ko").unwrap();
        let ko = registry.parse("ko").unwrap();
        assert_eq!(ko.english_name(), "KO");
        assert_eq!(registry.parse("fr").unwrap().english_name(), "French");
    }

    #[test]
    fn serde_round_trip() {
        let fr: LangCode = "fr".parse().unwrap();
        let json = serde_json::to_string(&fr).unwrap();
        assert_eq!(json, "\"fr\"");
        assert_eq!(serde_json::from_str::<LangCode>(&json).unwrap(), fr);
    }
}
