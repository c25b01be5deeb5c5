#![no_main]
use libfuzzer_sys::fuzz_target;

use kgeffect::checkpoint::parse_checkpoint;

fuzz_target!(|data: &str| {
    if let Ok(ck) = parse_checkpoint(data) {
        let text = ck.to_text().expect("parsed checkpoint serialises");
        let again = parse_checkpoint(&text).expect("own output parses");
        assert_eq!(again.to_text().expect("serialises"), text);
    }
});
