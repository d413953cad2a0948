#![no_main]

use icvec_core::training::TrainingSet;
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    if let Ok(set) = TrainingSet::read_csv(data) {
        let mut out = Vec::new();
        set.write_csv(&mut out).expect("parsed set writes");
        let back = TrainingSet::read_csv(out.as_slice()).expect("written set parses");
        assert_eq!(back.full(), set.full());
    }
});
