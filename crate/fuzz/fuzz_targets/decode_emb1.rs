#![no_main]

use desceval::store::{decode_emb1, encode_emb1};
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    if let Ok(m) = decode_emb1(data) {
        assert_eq!(m.data().len(), m.rows() * m.dims());
        assert_eq!(encode_emb1(&m), data);
    }
});
