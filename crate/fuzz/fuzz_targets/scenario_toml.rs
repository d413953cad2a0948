#![no_main]

use icvec_cli::ScenarioFile;
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    if let Ok(text) = std::str::from_utf8(data) {
        if let Ok(scenario) = ScenarioFile::parse(text) {
            // A file that validated once must serialize and validate again.
            let again = toml_roundtrip(&scenario);
            assert!(again.validate().is_ok());
        }
    }
});

fn toml_roundtrip(s: &ScenarioFile) -> ScenarioFile {
    let text = icvec_cli::scenario::to_toml(s).expect("valid scenario serializes");
    ScenarioFile::parse(&text).expect("serialized scenario parses")
}
