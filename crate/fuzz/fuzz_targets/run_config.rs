#![no_main]
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &str| {
    let _ = kgeffect::experiment::RunConfig::from_toml(data);
});
