#![no_main]

use desceval::alignment::strip_class_name;
use libfuzzer_sys::fuzz_target;

// input: class name, a zero byte, then the descriptor
fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else { return };
    let (class, descriptor) = text.split_once('\0').unwrap_or(("", text));
    let out = strip_class_name(descriptor, class);
    if out != descriptor {
        assert_eq!(out, out.trim());
    }
});
