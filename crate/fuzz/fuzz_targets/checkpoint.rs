#![no_main]

use latode::latent::LatentOdeModel;
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    if let Ok(model) = LatentOdeModel::from_checkpoint_bytes(data) {
        let again = model
            .to_checkpoint_bytes()
            .expect("decoded model re-encodes");
        let back = LatentOdeModel::from_checkpoint_bytes(&again).expect("re-encoded bytes decode");
        assert_eq!(again, back.to_checkpoint_bytes().unwrap());
    }
});
