#![no_main]

use desceval::store::DescriptorSet;
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else { return };
    if let Ok(set) = DescriptorSet::from_json_str(text, "fuzz") {
        let again = DescriptorSet::from_json_str(&set.to_json_string(None), "fuzz").expect("own output parses");
        assert_eq!(again, set);
    }
});
