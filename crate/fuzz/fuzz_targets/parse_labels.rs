#![no_main]

use desceval::store::{parse_labels, LabelVector};
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else { return };
    if let Ok(labels) = parse_labels(text) {
        let classes = labels.iter().max().map_or(1, |m| m.saturating_add(1));
        let _ = LabelVector::new(labels, classes);
    }
});
