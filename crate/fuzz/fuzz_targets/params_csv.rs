//! Fuzzes the component-table CSV reader: no panic on arbitrary bytes, and a
//! parsed table must round-trip through its own writer bit-for-bit.

#![no_main]

use std::io::Cursor;

use ecmkit::SocParameterTable;
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    let Ok(table) = SocParameterTable::from_csv(Cursor::new(data)) else {
        return;
    };
    let mut written = Vec::new();
    table.to_csv(&mut written).expect("a parsed table always writes");
    let again =
        SocParameterTable::from_csv(Cursor::new(&written)).expect("a written table always re-reads");
    assert_eq!(again.breakpoints(), table.breakpoints());
    assert_eq!(again.rows(), table.rows());
});
