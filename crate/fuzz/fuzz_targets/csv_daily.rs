#![no_main]

use latode::data::{parse_csv_daily, Schema};
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    for schema in [Schema::Climate, Schema::Stock] {
        if let Ok(series) = parse_csv_daily(data, schema, None) {
            assert_eq!(series.dates.len(), series.values.len());
            assert!(series.times.windows(2).all(|w| w[0] < w[1]));
        }
    }
    let _ = parse_csv_daily(data, Schema::Stock, Some("AAPL"));
});
