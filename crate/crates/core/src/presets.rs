//! Reference urns with known closed-form answers.

use crate::urn_model::{CoreMatrix, SamplingMode, UrnSpec};

fn spec(rows: &[&[i64]], s: u32, x0: &[i64]) -> UrnSpec {
    let core = CoreMatrix::new(rows.iter().map(|r| r.to_vec()).collect()).expect("square core");
    UrnSpec::new(core, s, x0.to_vec(), SamplingMode::WithoutReplacement).expect("valid preset")
}

/// Reducible (3,3,9)-urn whose expansion is a 10-row table.
pub fn three_color_table() -> UrnSpec {
    spec(&[&[3, 3, 3], &[6, 0, 3], &[0, 0, 9]], 3, &[1, 1, 1])
}

/// (3,2,16)-urn with a diagonalizable core and small index.
pub fn small_diagonalizable() -> UrnSpec {
    spec(&[&[6, 4, 6], &[2, 6, 8], &[4, 6, 6]], 2, &[4, 3, 5])
}

/// (4,3,1)-urn whose core has a single 3x3 Jordan block at -3.
pub fn small_defective() -> UrnSpec {
    spec(
        &[&[-2, 3, 0, 0], &[1, -3, 3, 0], &[1, 0, -3, 3], &[1, 0, 0, 0]],
        3,
        &[4, 0, 0, 0],
    )
}

/// (3,2,6)-urn with core index exactly one half.
pub fn critical() -> UrnSpec {
    spec(&[&[4, 0, 2], &[2, 4, 0], &[0, 2, 4]], 2, &[2, 2, 2])
}

/// (3,3,12)-urn with core index 5/8.
pub fn large() -> UrnSpec {
    spec(&[&[9, 3, 0], &[0, 9, 3], &[3, 0, 9]], 3, &[3, 2, 2])
}

pub const NAMES: [&str; 5] = ["table", "small", "defective", "critical", "large"];

pub fn by_name(name: &str) -> Option<UrnSpec> {
    match name {
        "table" => Some(three_color_table()),
        "small" => Some(small_diagonalizable()),
        "defective" => Some(small_defective()),
        "critical" => Some(critical()),
        "large" => Some(large()),
        _ => None,
    }
}

pub fn all() -> Vec<UrnSpec> {
    NAMES.iter().filter_map(|n| by_name(n)).collect()
}

/// The irreducible presets, the ones with asymptotic theory.
pub fn irreducible() -> Vec<UrnSpec> {
    vec![small_diagonalizable(), small_defective(), critical(), large()]
}
