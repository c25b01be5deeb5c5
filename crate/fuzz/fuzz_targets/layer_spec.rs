#![no_main]
use libfuzzer_sys::fuzz_target;

use kgeffect::classifier::LayerSpec;

fuzz_target!(|data: &str| {
    if let Ok(spec) = data.parse::<LayerSpec>() {
        assert_eq!(spec.to_string().parse::<LayerSpec>().expect("display parses"), spec);
    }
});
