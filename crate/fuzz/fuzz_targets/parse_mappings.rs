#![no_main]
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &str| {
    if let Ok(m) = kgeffect::align::parse_mappings(data) {
        let _ = kgeffect::align::evaluate_alignment(&m, &m);
        let _ = kgeffect::align::filter_one_to_one(&m);
    }
});
