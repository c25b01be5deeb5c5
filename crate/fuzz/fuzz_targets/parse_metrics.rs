#![no_main]
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &str| {
    let _ = kgeffect::eval::parse_metrics(data);
});
