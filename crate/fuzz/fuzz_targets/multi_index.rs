#![no_main]

use kolmo::MultiIndex;
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else { return };
    if let Ok(m) = text.parse::<MultiIndex>() {
        let back: MultiIndex = m.to_string().parse().expect("display output parses");
        assert_eq!(back, m);
    }
});
