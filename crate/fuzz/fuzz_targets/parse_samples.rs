#![no_main]
use libfuzzer_sys::fuzz_target;

use kgeffect::effects::{parse_samples, write_samples};

fuzz_target!(|data: &str| {
    if let Ok(samples) = parse_samples(data) {
        let mut out = Vec::new();
        write_samples(&samples, &mut out).expect("writing to memory");
        let again = parse_samples(std::str::from_utf8(&out).expect("utf-8")).expect("own output parses");
        assert_eq!(again.len(), samples.len());
    }
});
