use std::collections::HashSet;
use std::fmt;
use std::path::Path;

use serde::de::{self, Deserializer, MapAccess, Visitor};
use serde::ser::{SerializeMap, Serializer};
use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::error::{Error, Result};

/// Reserved top-level key carrying generator metadata; never a class.
pub const META_KEY: &str = "_meta";

/// Ordered mapping from class name to its descriptor strings.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DescriptorSet {
    classes: Vec<String>,
    descriptors: Vec<Vec<String>>,
    source_label: String,
}

impl DescriptorSet {
    /// Validates and builds a set from `(class, descriptors)` pairs in order.
    pub fn new(
        entries: Vec<(String, Vec<String>)>,
        source_label: impl Into<String>,
    ) -> Result<Self> {
        if entries.is_empty() {
            return Err(Error::NoClasses);
        }
        let mut seen = HashSet::with_capacity(entries.len());
        let mut classes = Vec::with_capacity(entries.len());
        let mut descriptors = Vec::with_capacity(entries.len());
        for (class, list) in entries {
            if !seen.insert(class.clone()) {
                return Err(Error::DuplicateClass(class));
            }
            if list.is_empty() {
                return Err(Error::EmptyClass(class));
            }
            if let Some(position) = list.iter().position(|d| d.trim().is_empty()) {
                return Err(Error::EmptyDescriptor { class, position });
            }
            classes.push(class);
            descriptors.push(list);
        }
        Ok(DescriptorSet {
            classes,
            descriptors,
            source_label: source_label.into(),
        })
    }

    pub fn classes(&self) -> &[String] {
        &self.classes
    }

    pub fn num_classes(&self) -> usize {
        self.classes.len()
    }

    pub fn descriptors(&self, class: usize) -> &[String] {
        &self.descriptors[class]
    }

    pub fn source_label(&self) -> &str {
        &self.source_label
    }

    pub fn with_source_label(mut self, label: impl Into<String>) -> Self {
        self.source_label = label.into();
        self
    }

    /// Total descriptor count across classes, duplicates included.
    pub fn len(&self) -> usize {
        self.descriptors.iter().map(Vec::len).sum()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &[String])> {
        self.classes
            .iter()
            .map(String::as_str)
            .zip(self.descriptors.iter().map(Vec::as_slice))
    }

    /// Parses the JSON object form. A top-level `_meta` entry is skipped.
    pub fn from_json_str(text: &str, source_label: impl Into<String>) -> Result<Self> {
        let entries: OrderedEntries =
            serde_json::from_str(text).map_err(|e| Error::DescriptorJson(e.to_string()))?;
        let mut out = Vec::with_capacity(entries.0.len());
        for (key, value) in entries.0 {
            if key == META_KEY {
                continue;
            }
            let Value::Array(items) = value else {
                return Err(Error::DescriptorJson(format!(
                    "class {key:?} must map to an array of strings"
                )));
            };
            let mut list = Vec::with_capacity(items.len());
            for (i, item) in items.into_iter().enumerate() {
                match item {
                    Value::String(s) => list.push(s),
                    other => {
                        return Err(Error::DescriptorJson(format!(
                            "class {key:?} entry {i} is not a string: {other}"
                        )))
                    }
                }
            }
            out.push((key, list));
        }
        Self::new(out, source_label)
    }

    /// Serializes to pretty JSON in class order, optionally preceded by a
    /// `_meta` object.
    pub fn to_json_string(&self, meta: Option<&Value>) -> String {
        let mut s = serde_json::to_string_pretty(&OrderedOut { set: self, meta })
            .expect("descriptor sets always serialize");
        s.push('\n');
        s
    }
}

pub fn load_descriptor_set(path: impl AsRef<Path>) -> Result<DescriptorSet> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let label = path
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_default();
    DescriptorSet::from_json_str(&text, label)
}

pub fn save_descriptor_set(
    set: &DescriptorSet,
    meta: Option<&Value>,
    path: impl AsRef<Path>,
) -> Result<()> {
    let path = path.as_ref();
    std::fs::write(path, set.to_json_string(meta)).map_err(|e| Error::io(path, e))
}

/// Top-level object entries in file order, duplicates kept.
struct OrderedEntries(Vec<(String, Value)>);

impl<'de> Deserialize<'de> for OrderedEntries {
    fn deserialize<D: Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        struct EntriesVisitor;

        impl<'de> Visitor<'de> for EntriesVisitor {
            type Value = OrderedEntries;

            fn expecting(&self, f: &mut fmt::Formatter) -> fmt::Result {
                f.write_str("a JSON object mapping class names to descriptor arrays")
            }

            fn visit_map<A: MapAccess<'de>>(self, mut map: A) -> std::result::Result<Self::Value, A::Error> {
                let mut out = Vec::new();
                while let Some((k, v)) = map.next_entry::<String, Value>()? {
                    out.push((k, v));
                }
                Ok(OrderedEntries(out))
            }

            fn visit_unit<E: de::Error>(self) -> std::result::Result<Self::Value, E> {
                Err(E::invalid_type(de::Unexpected::Unit, &self))
            }
        }

        d.deserialize_map(EntriesVisitor)
    }
}

struct OrderedOut<'a> {
    set: &'a DescriptorSet,
    meta: Option<&'a Value>,
}

impl Serialize for OrderedOut<'_> {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        let mut map = s.serialize_map(Some(self.set.classes.len() + self.meta.is_some() as usize))?;
        if let Some(meta) = self.meta {
            map.serialize_entry(META_KEY, meta)?;
        }
        for (class, list) in self.set.iter() {
            map.serialize_entry(class, list)?;
        }
        map.end()
    }
}
