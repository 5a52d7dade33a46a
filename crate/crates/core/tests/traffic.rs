use std::collections::BTreeMap;
use std::io::Write;
use std::path::{Path, PathBuf};

use flate2::write::GzEncoder;
use flate2::Compression;
use hmppo::env::ServiceClass;
use hmppo::traffic::{
    aggregate_bins, cached_cdr_trace, cdr_to_trace, load_cdr, synth_trace, write_cdr, MappingConfig, Pattern,
    BINS_PER_DAY, BIN_MS,
};
use hmppo::Error;

const CLASSES: [ServiceClass; 3] = [ServiceClass::Embb, ServiceClass::Urllc, ServiceClass::Mmtc];

fn fixture() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures/milan_2cells_100.tsv")
}

fn write(dir: &Path, name: &str, body: &str) -> PathBuf {
    let p = dir.join(name);
    std::fs::write(&p, body).unwrap();
    p
}

#[test]
fn two_handwritten_rows() {
    let dir = tempfile::tempdir().unwrap();
    let p = write(
        dir.path(),
        "two.tsv",
        "5161\t1383260400000\t39\t0.1\t0.2\t0.3\t0.4\t10.5\n5162\t1383261000000\t0\t1\t2\t3\t4\t5\n",
    );
    let r = load_cdr(&p, None, None).unwrap();
    assert_eq!(r.len(), 2);
    assert_eq!(
        (r[0].square_id, r[0].timestamp, r[0].country_code),
        (5161, 1383260400000, 39)
    );
    assert_eq!(
        [r[0].sms_in, r[0].sms_out, r[0].call_in, r[0].call_out, r[0].internet],
        [0.1, 0.2, 0.3, 0.4, 10.5]
    );
    assert_eq!(
        (r[1].square_id, r[1].timestamp, r[1].country_code),
        (5162, 1383261000000, 0)
    );
    assert_eq!(
        [r[1].sms_in, r[1].sms_out, r[1].call_in, r[1].call_out, r[1].internet],
        [1.0, 2.0, 3.0, 4.0, 5.0]
    );
}

#[test]
fn blank_internet_reads_as_zero() {
    let dir = tempfile::tempdir().unwrap();
    let p = write(dir.path(), "blank.tsv", "7\t1383260400000\t39\t0.5\t\t\t0.25\t\n");
    let r = load_cdr(&p, None, None).unwrap();
    assert_eq!(r[0].internet, 0.0);
    assert_eq!(r[0].sms_out, 0.0);
    assert_eq!(r[0].call_out, 0.25);
}

/// Per-cell counts from an independent reading of the file's first column.
fn line_count_oracle(path: &Path) -> BTreeMap<u32, usize> {
    let mut counts = BTreeMap::new();
    for line in std::fs::read_to_string(path).unwrap().lines() {
        let first = line.split('\t').next().unwrap();
        *counts.entry(first.parse::<u32>().unwrap()).or_insert(0) += 1;
    }
    counts
}

#[test]
fn fixture_counts_match_line_count_per_cell() {
    let oracle = line_count_oracle(&fixture());
    assert_eq!(oracle.len(), 2);
    assert_eq!(oracle.values().sum::<usize>(), 100);
    let records = load_cdr(fixture(), None, None).unwrap();
    let mut counts = BTreeMap::new();
    for r in &records {
        *counts.entry(r.square_id).or_insert(0) += 1;
    }
    assert_eq!(counts, oracle);

    for (&cell, &n) in &oracle {
        assert_eq!(load_cdr(fixture(), Some(&[cell]), None).unwrap().len(), n);
    }
}

#[test]
fn time_range_is_half_open() {
    let all = load_cdr(fixture(), None, None).unwrap();
    let t0 = all[0].timestamp;
    let window = load_cdr(fixture(), None, Some((t0, t0 + 2 * BIN_MS))).unwrap();
    let expect = all.iter().filter(|r| r.timestamp < t0 + 2 * BIN_MS).count();
    assert_eq!(window.len(), expect);
    assert!(load_cdr(fixture(), Some(&[424242]), None).unwrap().is_empty());
}

#[test]
fn malformed_row_reports_its_line() {
    let dir = tempfile::tempdir().unwrap();
    let p = write(
        dir.path(),
        "bad.tsv",
        "1\t1383260400000\t39\t1\t1\t1\t1\t1\n# comment\n1\tnot-a-time\t39\t1\t1\t1\t1\t1\n",
    );
    match load_cdr(&p, None, None) {
        Err(Error::Parse { line, .. }) => assert_eq!(line, 3),
        other => panic!("expected a parse error, got {other:?}"),
    }
    let neg = write(dir.path(), "neg.tsv", "1\t1383260400000\t39\t-1\t1\t1\t1\t1\n");
    assert!(matches!(load_cdr(&neg, None, None), Err(Error::Parse { line: 1, .. })));
}

#[test]
fn gzip_and_write_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let records = load_cdr(fixture(), None, None).unwrap();
    let plain = dir.path().join("copy.tsv");
    write_cdr(&plain, &records).unwrap();
    assert_eq!(load_cdr(&plain, None, None).unwrap(), records);

    let gz = dir.path().join("copy.tsv.gz");
    let mut enc = GzEncoder::new(std::fs::File::create(&gz).unwrap(), Compression::default());
    enc.write_all(&std::fs::read(fixture()).unwrap()).unwrap();
    enc.finish().unwrap();
    assert_eq!(load_cdr(&gz, None, None).unwrap(), records);
}

#[test]
fn fixture_trace_has_one_step_per_bin_and_unit_range() {
    let records = load_cdr(fixture(), None, None).unwrap();
    let mapping = MappingConfig::default_for(&CLASSES);
    let series = aggregate_bins(&records, &mapping).unwrap();
    let span = (records.last().unwrap().timestamp - records[0].timestamp) / BIN_MS + 1;
    assert_eq!(series.num_bins(), span as usize);

    let trace = cdr_to_trace(&records, &mapping, series.num_bins(), 1.0).unwrap();
    assert_eq!(trace.len(), series.num_bins());
    for s in 0..3 {
        let col: Vec<f64> = trace.multipliers.iter().map(|r| r[s]).collect();
        assert!(col.iter().all(|m| (0.0..=1.0).contains(m)));
        assert!((col.iter().cloned().fold(0.0, f64::max) - 1.0).abs() < 1e-12);
    }
}

#[test]
fn one_day_of_bins_gives_144_steps_per_day() {
    let dir = tempfile::tempdir().unwrap();
    let t0 = 1383260400000i64;
    let mut body = String::new();
    for days in [1usize, 2] {
        body.clear();
        for b in 0..days * BINS_PER_DAY {
            for cell in [1, 2, 3, 4] {
                let x = 1.0 + ((b * 7 + cell) % 13) as f64;
                body += &format!("{cell}\t{}\t39\t{x}\t{x}\t{x}\t{x}\t{x}\n", t0 + b as i64 * BIN_MS);
            }
        }
        let p = write(dir.path(), &format!("d{days}.tsv"), &body);
        let records = load_cdr(&p, Some(&[1, 2, 3, 4]), None).unwrap();
        let mapping = MappingConfig::default_for(&CLASSES);
        let series = aggregate_bins(&records, &mapping).unwrap();
        assert_eq!(series.num_bins(), BINS_PER_DAY * days);
        let trace = cdr_to_trace(&records, &mapping, series.num_bins(), 1.0).unwrap();
        assert_eq!(trace.len(), BINS_PER_DAY * days);
        assert!(trace.multipliers.iter().flatten().all(|m| (0.0..=1.0).contains(m)));
    }
}

#[test]
fn cache_returns_the_same_trace() {
    let dir = tempfile::tempdir().unwrap();
    let mapping = MappingConfig::default_for(&CLASSES);
    let cache = dir.path().join("cache");
    let a = cached_cdr_trace(fixture(), &mapping, 120, 1.0, &cache).unwrap();
    assert_eq!(std::fs::read_dir(&cache).unwrap().count(), 1);
    let b = cached_cdr_trace(fixture(), &mapping, 120, 1.0, &cache).unwrap();
    assert_eq!(a, b);
    let direct = cdr_to_trace(&load_cdr(fixture(), None, None).unwrap(), &mapping, 120, 1.0).unwrap();
    assert_eq!(a, direct);
}

#[test]
fn synthetic_patterns_are_seeded() {
    for p in [Pattern::Constant, Pattern::Diurnal, Pattern::Bursty] {
        let a = synth_trace(0.7, p, 300, 11, 3).unwrap();
        assert_eq!(a, synth_trace(0.7, p, 300, 11, 3).unwrap());
        assert!(a.multipliers.iter().flatten().all(|m| *m >= 0.0));
    }
    assert!("weekly".parse::<Pattern>().is_err());
}
