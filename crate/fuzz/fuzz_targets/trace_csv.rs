//! Fuzzes the trace CSV reader: arbitrary bytes must either parse or return
//! an error — never panic — and anything that parses must survive a
//! write/read round trip unchanged (the writer promises lossless formatting).

#![no_main]

use std::io::Cursor;

use ecmkit::{ColumnMap, CurrentVoltageTrace};
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    let map = ColumnMap::default();
    let Ok(trace) = CurrentVoltageTrace::read_csv(Cursor::new(data), &map) else {
        return;
    };
    let mut written = Vec::new();
    trace.write_csv(&mut written).expect("a parsed trace always writes");
    let again = CurrentVoltageTrace::read_csv(Cursor::new(&written), &map)
        .expect("a written trace always re-reads");
    assert_eq!(again.times_s(), trace.times_s());
    assert_eq!(again.currents_a(), trace.currents_a());
    assert_eq!(again.voltages_v(), trace.voltages_v());
});
