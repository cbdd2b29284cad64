use std::collections::HashMap;

use sha2::{Digest, Sha256};

use super::LangId;

/// Dense interning table from (language, surface string) to index.
///
/// A `None` language marks a vocabulary entry shared across languages.
#[derive(Debug, Clone, Default)]
pub struct Vocab {
    surfaces: Vec<String>,
    langs: Vec<Option<LangId>>,
    index: HashMap<(Option<LangId>, String), u32>,
}

impl Vocab {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn intern(&mut self, lang: Option<LangId>, surface: &str) -> u32 {
        if let Some(&id) = self.index.get(&(lang, surface.to_owned())) {
            return id;
        }
        let id = self.surfaces.len() as u32;
        self.surfaces.push(surface.to_owned());
        self.langs.push(lang);
        self.index.insert((lang, surface.to_owned()), id);
        id
    }

    pub fn get(&self, lang: Option<LangId>, surface: &str) -> Option<u32> {
        self.index.get(&(lang, surface.to_owned())).copied()
    }

    pub fn len(&self) -> usize {
        self.surfaces.len()
    }

    pub fn is_empty(&self) -> bool {
        self.surfaces.is_empty()
    }

    pub fn surface(&self, id: u32) -> &str {
        &self.surfaces[id as usize]
    }

    pub fn lang(&self, id: u32) -> Option<LangId> {
        self.langs[id as usize]
    }

    /// SHA-256 over `lang\tsurface\n` lines in index order.
    pub fn digest(&self, languages: &[String]) -> String {
        let mut h = Sha256::new();
        for (s, l) in self.surfaces.iter().zip(&self.langs) {
            let tag = l.map(|l| languages[l.index()].as_str()).unwrap_or("*");
            h.update(tag.as_bytes());
            h.update(b"\t");
            h.update(s.as_bytes());
            h.update(b"\n");
        }
        h.finalize().iter().map(|b| format!("{b:02x}")).collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn interning_is_dense_and_language_scoped() {
        let mut v = Vocab::new();
        let a = v.intern(Some(LangId(0)), "x");
        let b = v.intern(Some(LangId(1)), "x");
        let c = v.intern(Some(LangId(0)), "x");
        assert_eq!((a, b, c), (0, 1, 0));
        assert_eq!(v.len(), 2);
        assert_eq!(v.get(Some(LangId(1)), "x"), Some(1));
        assert_eq!(v.get(None, "x"), None);
    }

    #[test]
    fn digest_depends_on_content() {
        let langs = vec!["en".to_string(), "fr".to_string()];
        let mut a = Vocab::new();
        a.intern(Some(LangId(0)), "x");
        let mut b = Vocab::new();
        b.intern(Some(LangId(1)), "x");
        assert_ne!(a.digest(&langs), b.digest(&langs));
        assert_eq!(a.digest(&langs), a.clone().digest(&langs));
        assert_eq!(a.digest(&langs).len(), 64);
    }
}
