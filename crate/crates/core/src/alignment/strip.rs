use regex::{Regex, RegexBuilder};

use crate::error::{Error, Result};
use crate::store::DescriptorSet;

/// Characters that glue onto a class-name occurrence and make it part of a
/// larger token ("cat-like", "cat_food", "cat's").
fn is_word_char(c: char) -> bool {
    c.is_alphanumeric() || c == '_' || c == '-' || c == '\''
}

fn is_separator(c: char) -> bool {
    matches!(c, ',' | ';' | ':')
}

const LEAD_PHRASES: [&str; 4] = ["which is an ", "which is a ", "which has ", "which is "];
const TAIL_PHRASES: [&str; 3] = ["which is an", "which is a", "which has"];

/// Matches a class name case-insensitively, treating runs of spaces,
/// underscores and hyphens as interchangeable.
pub(crate) struct ClassNameMatcher {
    re: Option<Regex>,
}

impl ClassNameMatcher {
    pub(crate) fn new(class: &str) -> Self {
        let tokens: Vec<String> = class
            .split(|c: char| c.is_whitespace() || c == '_' || c == '-')
            .filter(|t| !t.is_empty())
            .map(regex::escape)
            .collect();
        if tokens.is_empty() {
            return ClassNameMatcher { re: None };
        }
        let re = RegexBuilder::new(&tokens.join(r"[\s_-]+"))
            .case_insensitive(true)
            .build()
            .expect("escaped tokens always form a valid pattern");
        ClassNameMatcher { re: Some(re) }
    }

    /// Byte ranges of standalone occurrences in `text`.
    fn occurrences(&self, text: &str) -> Vec<(usize, usize)> {
        let Some(re) = &self.re else {
            return Vec::new();
        };
        let mut out = Vec::new();
        let mut at = 0;
        while at <= text.len() {
            let Some(m) = re.find_at(text, at) else { break };
            let before = text[..m.start()].chars().next_back();
            let after = text[m.end()..].chars().next();
            if before.is_some_and(is_word_char) || after.is_some_and(is_word_char) {
                // retry one character later; a shorter standalone match may
                // start inside this one
                at = m.start() + text[m.start()..].chars().next().map_or(1, char::len_utf8);
                continue;
            }
            out.push((m.start(), m.end()));
            at = m.end().max(m.start() + 1);
        }
        out
    }

    /// Removes standalone occurrences and tidies the leftover separators.
    pub(crate) fn strip(&self, descriptor: &str) -> String {
        let hits = self.occurrences(descriptor);
        if hits.is_empty() {
            return descriptor.to_owned();
        }
        let mut removed = String::with_capacity(descriptor.len());
        let mut last = 0;
        for (s, e) in hits {
            removed.push_str(&descriptor[last..s]);
            removed.push(' ');
            last = e;
        }
        removed.push_str(&descriptor[last..]);
        tidy(&removed)
    }
}

/// Collapses whitespace, merges separator runs and trims leading/trailing
/// separators and dangling "which is a" phrases.
fn tidy(text: &str) -> String {
    let mut out = String::with_capacity(text.len());
    let mut pending_space = false;
    let mut after_separator = false;
    for c in text.chars() {
        if c.is_whitespace() {
            pending_space = true;
        } else if is_separator(c) {
            if !after_separator {
                out.push(c);
                after_separator = true;
            }
            pending_space = true;
        } else {
            if pending_space && !out.is_empty() {
                out.push(' ');
            }
            out.push(c);
            pending_space = false;
            after_separator = false;
        }
    }

    let mut s = out.as_str();
    loop {
        let trimmed = s.trim_end_matches(|c: char| c.is_whitespace() || is_separator(c));
        let hit = TAIL_PHRASES.iter().find_map(|p| {
            let cut = trimmed.len().checked_sub(p.len())?;
            let tail = trimmed.get(cut..)?;
            let glued = trimmed[..cut].ends_with([' ', ',']);
            (tail.eq_ignore_ascii_case(p) && (cut == 0 || glued)).then_some(cut)
        });
        match hit {
            Some(cut) => s = &trimmed[..cut],
            None => {
                s = trimmed;
                break;
            }
        }
    }
    loop {
        let trimmed = s.trim_start_matches(|c: char| c.is_whitespace() || is_separator(c) || c == '.');
        let hit = LEAD_PHRASES.iter().find(|p| {
            trimmed.len() > p.len() && trimmed.get(..p.len()).is_some_and(|h| h.eq_ignore_ascii_case(p))
        });
        match hit {
            Some(p) => s = &trimmed[p.len()..],
            None => {
                s = trimmed;
                break;
            }
        }
    }
    s.to_owned()
}

/// Removes a class name from one descriptor.
pub fn strip_class_name(descriptor: &str, class: &str) -> String {
    ClassNameMatcher::new(class).strip(descriptor)
}

/// Removes every class's own name from its descriptors. Descriptors left
/// empty are dropped; a class left with none is an error.
pub fn strip_class_names(set: &DescriptorSet) -> Result<DescriptorSet> {
    let mut entries = Vec::with_capacity(set.num_classes());
    for (class, list) in set.iter() {
        let matcher = ClassNameMatcher::new(class);
        let kept: Vec<String> = list
            .iter()
            .map(|d| matcher.strip(d))
            .filter(|d| !d.trim().is_empty())
            .collect();
        if kept.is_empty() {
            return Err(Error::EmptyClass(class.to_owned()));
        }
        entries.push((class.to_owned(), kept));
    }
    DescriptorSet::new(entries, set.source_label())
}
