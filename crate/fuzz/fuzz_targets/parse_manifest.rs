#![no_main]

use libfuzzer_sys::fuzz_target;
use raysense::runner::parse_manifest;

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else {
        return;
    };
    if let Ok(manifest) = parse_manifest(text) {
        assert!(!manifest.runs.is_empty());
        for (i, run) in manifest.runs.iter().enumerate() {
            let label = run.label(i);
            assert!(label.chars().all(|c| c.is_ascii_alphanumeric() || c == '-' || c == '_'));
            let _ = run.to_config(std::path::Path::new("."), label.into());
        }
    }
});
