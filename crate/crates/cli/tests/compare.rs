use std::path::PathBuf;

use dscd_cli::artifacts::MetricRecord;
use dscd_cli::compare::{compare, MetricsFile};

fn series(scale: f64) -> Vec<MetricRecord> {
    (0..4)
        .flat_map(|w| {
            ["video", "ar", "v2x"].map(|class| MetricRecord {
                window_start_tti: w * 100,
                class: class.into(),
                mode: "dscd".into(),
                mean_hol_ms: Some(scale * (1.0 + w as f64)),
                pdr: Some(scale * 0.25),
                throughput_kbps: Some(scale * 100.0 * (w + 1) as f64),
                du_ratio: Some(scale * 0.5),
                cu_ratio: None,
            })
        })
        .collect()
}

fn file(name: &str, records: Vec<MetricRecord>) -> MetricsFile {
    MetricsFile {
        path: PathBuf::from(name),
        records,
        manifest: None,
    }
}

#[test]
fn doubled_series_has_ratio_two() {
    let c = compare(&[file("base.csv", series(1.0)), file("double.csv", series(2.0))]).unwrap();
    assert_eq!(c.unchecked.len(), 2);
    for d in &c.others[0].deltas {
        match d.metric {
            "cu_ratio" => assert_eq!((d.delta, d.ratio), (None, None)),
            _ => {
                assert_eq!(d.ratio, Some(2.0), "{} {}", d.class, d.metric);
                assert_eq!(d.delta, d.base);
            }
        }
    }
}

#[test]
fn one_file_is_rejected() {
    assert!(compare(&[file("a.csv", series(1.0))]).is_err());
}
