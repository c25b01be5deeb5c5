#![no_main]
use libfuzzer_sys::fuzz_target;

use kgeffect::effects::{convert_units, parse_effects, UnitRegistry};

fuzz_target!(|data: &str| {
    if let Ok(records) = parse_effects(data) {
        let units = UnitRegistry::default();
        for r in &records {
            let _ = convert_units(r, &units);
        }
    }
});
