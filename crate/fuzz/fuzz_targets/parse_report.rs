#![no_main]

use libfuzzer_sys::fuzz_target;
use pmri_cli::parse_report;

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else { return };
    if let Ok(report) = parse_report(text) {
        let csv = report.to_csv();
        let again = parse_report(&csv).expect("written reports parse");
        assert_eq!(again.rows.len(), report.rows.len());
    }
});
