#![no_main]
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &str| {
    if let Ok(fps) = kgeffect::kg::parse_fingerprints(data) {
        if fps.len() <= 64 {
            let _ = kgeffect::kg::emit_similarity_triples(&fps, 0.9);
        }
    }
});
