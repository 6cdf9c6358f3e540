#![no_main]

use kolmo::GroupPoint;
use kolmo_cli::config::StructureSection;
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else { return };
    let Ok(s) = StructureSection::parse(text) else { return };
    // an accepted structure must support the basic group operations
    let d = s.dim();
    let z = GroupPoint::from_slice(0.5, &vec![1.0; d]);
    let w = s.compose(&z, &s.inverse(&z));
    let scale = s.matrix().amax();
    if scale <= 1e3 {
        assert!(w.x.amax() <= 1e-9 * (1.0 + scale).powi(s.depth() as i32 + 1), "z ∘ z⁻¹ ≠ 0");
    }
    let _ = s.dilate(2.0, &z);
    let _ = s.exp(1.0);
});
