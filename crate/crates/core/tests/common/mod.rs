#![allow(dead_code)]

use std::path::PathBuf;

use pointclass::las_io::{read_las, LasFile};
use serde::Deserialize;

#[derive(Debug, Deserialize)]
pub struct ExpectedPoint {
    pub x: f64,
    pub y: f64,
    pub z: f64,
    pub intensity: f64,
    pub scan_angle: f64,
    pub num_returns: u8,
    pub return_number: u8,
    pub class_code: u8,
}

#[derive(Debug, Deserialize)]
pub struct ExpectedFile {
    pub point_count: u64,
    pub point_format: u8,
    pub record_length: u16,
    pub version_minor: u8,
    pub points: Vec<ExpectedPoint>,
}

pub fn fixture(name: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures").join(name)
}

pub fn expected() -> Vec<(String, ExpectedFile)> {
    let text = std::fs::read_to_string(fixture("expected.json")).unwrap();
    let map: std::collections::BTreeMap<String, ExpectedFile> = serde_json::from_str(&text).unwrap();
    map.into_iter().collect()
}

/// Every mismatch between a parsed fixture and its independently decoded
/// expectation.
pub fn fixture_mismatches(name: &str, want: &ExpectedFile) -> Vec<String> {
    let file: LasFile = match read_las(fixture(name)) {
        Ok(f) => f,
        Err(e) => return vec![format!("{name}: {e}")],
    };
    let mut out = Vec::new();
    let h = &file.header;
    let mut check = |what: &str, ok: bool, detail: String| {
        if !ok {
            out.push(format!("{name} {what}: {detail}"));
        }
    };
    check("point_count", h.point_count == want.point_count, format!("{} vs {}", h.point_count, want.point_count));
    check("format", h.point_data_format == want.point_format, format!("{}", h.point_data_format));
    check("record_length", h.point_record_length == want.record_length, format!("{}", h.point_record_length));
    check("version", h.version_minor == want.version_minor, format!("{}", h.version_minor));
    check("warnings", file.warnings.is_empty(), format!("{:?}", file.warnings));
    check(
        "points",
        file.cloud.len() == want.points.len(),
        format!("{} vs {}", file.cloud.len(), want.points.len()),
    );
    for (i, (got, exp)) in file.cloud.points.iter().zip(&want.points).enumerate() {
        let pairs = [
            ("x", got.x, exp.x),
            ("y", got.y, exp.y),
            ("z", got.z, exp.z),
            ("intensity", got.intensity, exp.intensity),
            ("scan_angle", got.scan_angle, exp.scan_angle),
        ];
        for (field, g, e) in pairs {
            check(&format!("point {i} {field}"), g == e, format!("{g} vs {e}"));
        }
        check(&format!("point {i} num_returns"), got.num_returns == exp.num_returns, format!("{}", got.num_returns));
        check(
            &format!("point {i} return_number"),
            got.return_number == exp.return_number,
            format!("{}", got.return_number),
        );
        check(&format!("point {i} class"), got.class_code == exp.class_code, format!("{}", got.class_code));
    }
    out
}
