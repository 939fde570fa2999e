//! Fuzzes the run-configuration TOML schema: deserialization of arbitrary
//! text must never panic, and every cheap validator the commands call on a
//! freshly parsed config must return cleanly (Ok or Err, never a crash).

#![no_main]

use libfuzzer_sys::fuzz_target;

// The schema lives in the command-line crate, which builds no library; pull
// the module in directly so the fuzzer compiles against the real types.
#[path = "../../crates/ecmkit-cli/src/config.rs"]
mod config;

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else {
        return;
    };
    let Ok(cfg) = toml::from_str::<config::RunConfig>(text) else {
        return;
    };
    // Constant-work validation only: nothing here may allocate in proportion
    // to fuzzed numeric values.
    let _ = cfg.cell_spec();
    let _ = cfg.ocv_polynomial();
    if let Some(profile) = &cfg.profile {
        let _ = profile.validate();
    }
    let _ = cfg.thermal.props.validate();
    let _ = cfg.thermal.boundary.validate();
});
