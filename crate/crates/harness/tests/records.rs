use proptest::prelude::*;

use comv_harness::records::{format_sig6, CSV_HEADER};
use comv_harness::{emit_csv, parse_csv, to_csv, Metric, RunRecord};

fn sample() -> Vec<RunRecord> {
    vec![
        RunRecord::new("jscc_single", 0.0, 1, Metric::F1Weighted, 0.5),
        RunRecord::new("jscc_coop", 10.0, 0, Metric::Accuracy, 0.75),
        RunRecord::new("jscc_coop", -5.0, 2, Metric::F1Weighted, 1.0 / 3.0),
        RunRecord::new("jscc_coop", -5.0, 2, Metric::Accuracy, 0.25),
        RunRecord::new("digital_baseline", 15.0, 0, Metric::Psnr, 31.234567891),
    ]
}

#[test]
fn empty_list_writes_header_only() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("empty.csv");
    emit_csv(&[], &path).unwrap();
    assert_eq!(std::fs::read_to_string(&path).unwrap(), format!("{CSV_HEADER}\n"));
}

#[test]
fn rows_sorted_and_six_significant_digits() {
    let text = to_csv(&sample());
    let lines: Vec<&str> = text.lines().collect();
    assert_eq!(
        lines,
        [
            CSV_HEADER,
            "digital_baseline,15,0,psnr,31.2346",
            "jscc_coop,-5,2,accuracy,0.25",
            "jscc_coop,-5,2,f1_weighted,0.333333",
            "jscc_coop,10,0,accuracy,0.75",
            "jscc_single,0,1,f1_weighted,0.5",
        ]
    );
}

#[test]
fn parse_rejects_bad_input() {
    assert!(parse_csv("scheme,snr\n").is_err());
    assert!(parse_csv(&format!("{CSV_HEADER}\na,0,0,f1_weighted\n")).is_err());
    assert!(parse_csv(&format!("{CSV_HEADER}\na,0,0,nonsense,1\n")).is_err());
    assert!(parse_csv(&format!("{CSV_HEADER}\na,x,0,accuracy,1\n")).is_err());
    assert!(parse_csv(&format!("{CSV_HEADER}\n")).unwrap().is_empty());
}

proptest! {
    #[test]
    fn shuffled_input_gives_identical_csv(perm in Just((0..5).collect::<Vec<usize>>()).prop_shuffle()) {
        let base = sample();
        let shuffled: Vec<RunRecord> = perm.iter().map(|&i| base[i].clone()).collect();
        prop_assert_eq!(to_csv(&shuffled), to_csv(&base));
    }

    #[test]
    fn round_trip_within_six_digits(v in -1e6f64..1e6, snr in -20i32..30, seed in 0u64..1000) {
        let recs = vec![RunRecord::new("s", snr as f64, seed, Metric::Ber, v)];
        let back = parse_csv(&to_csv(&recs)).unwrap();
        prop_assert_eq!(back.len(), 1);
        prop_assert_eq!(back[0].seed, seed);
        prop_assert_eq!(back[0].snr_db, snr as f64);
        prop_assert!((back[0].value - v).abs() <= 5e-6 * v.abs().max(1e-300));
        prop_assert_eq!(to_csv(&back), to_csv(&recs));
    }

    #[test]
    fn sig6_has_at_most_six_significant_digits(v in -1e9f64..1e9) {
        let s = format_sig6(v);
        let digits: String = s.chars().filter(char::is_ascii_digit).collect();
        prop_assert!(digits.trim_start_matches('0').trim_end_matches('0').len() <= 6, "{}", s);
    }
}
