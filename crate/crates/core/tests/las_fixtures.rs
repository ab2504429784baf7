mod common;

use pointclass::las_io::{parse_las, LasError};

#[test]
fn fixtures_match_independent_decoder() {
    let files = common::expected();
    assert_eq!(files.len(), 3);
    for (name, want) in &files {
        let problems = common::fixture_mismatches(name, want);
        assert!(problems.is_empty(), "{problems:#?}");
    }
}

#[test]
fn format0_classification_uses_low_five_bits() {
    let file = pointclass::las_io::read_las(common::fixture("fmt0.las")).unwrap();
    assert_eq!(file.cloud.points[0].class_code, 2);
    assert_eq!(file.cloud.points[0].scan_angle, -12.0);
}

#[test]
fn format6_extended_fields() {
    let file = pointclass::las_io::read_las(common::fixture("fmt6.las")).unwrap();
    let p = &file.cloud.points;
    assert_eq!(file.header.version_minor, 4);
    assert!(p.iter().any(|q| q.return_number == 15 && q.num_returns == 15));
    assert!(p.iter().any(|q| q.class_code == 200));
}

#[test]
fn truncated_and_compressed_inputs_are_rejected() {
    let bytes = std::fs::read(common::fixture("fmt1.las")).unwrap();
    assert!(matches!(parse_las(&bytes[..bytes.len() - 5]), Err(LasError::Truncated { .. })));
    let mut laz = bytes.clone();
    laz[104] |= 0x80;
    assert!(matches!(parse_las(&laz), Err(LasError::Compressed)));
    let mut bad = bytes;
    bad[0] = b'X';
    assert!(matches!(parse_las(&bad), Err(LasError::BadMagic)));
}
