#![no_main]
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &str| {
    if let Ok(g) = kgeffect::kg::parse_triples(data) {
        let clean = g.drop_literals();
        assert!(clean.num_triples() <= g.num_triples());
        let _ = kgeffect::kg::compute_stats(&clean);
    }
});
