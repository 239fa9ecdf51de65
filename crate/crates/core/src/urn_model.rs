//! Urn declarations, static validation and replacement-matrix expansion.

use std::collections::VecDeque;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::combinatorics::{Composition, Compositions};
use crate::error::{Result, UrnError};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum SamplingMode {
    #[default]
    WithoutReplacement,
    WithReplacement,
}

impl std::str::FromStr for SamplingMode {
    type Err = UrnError;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "without_replacement" | "without-replacement" => Ok(SamplingMode::WithoutReplacement),
            "with_replacement" | "with-replacement" => Ok(SamplingMode::WithReplacement),
            other => Err(UrnError::invalid(format!("unknown sampling mode {:?}", other))),
        }
    }
}

/// The `k x k` integer core; row `i` is the replacement for the sample `s * e_i`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "Vec<Vec<i64>>", into = "Vec<Vec<i64>>")]
pub struct CoreMatrix {
    k: usize,
    entries: Vec<i64>,
}

impl CoreMatrix {
    pub fn new(rows: Vec<Vec<i64>>) -> Result<Self> {
        let k = rows.len();
        if k == 0 {
            return Err(UrnError::invalid("core must have at least one row"));
        }
        if let Some((i, r)) = rows.iter().enumerate().find(|(_, r)| r.len() != k) {
            return Err(UrnError::invalid(format!(
                "core is not square: row {} has {} entries, expected {}",
                i + 1,
                r.len(),
                k
            )));
        }
        Ok(CoreMatrix {
            k,
            entries: rows.into_iter().flatten().collect(),
        })
    }

    pub fn from_row_slice(k: usize, entries: &[i64]) -> Result<Self> {
        CoreMatrix::new(entries.chunks(k.max(1)).map(<[i64]>::to_vec).collect())
    }

    pub fn k(&self) -> usize {
        self.k
    }

    pub fn get(&self, i: usize, j: usize) -> i64 {
        self.entries[i * self.k + j]
    }

    pub fn row(&self, i: usize) -> &[i64] {
        &self.entries[i * self.k..(i + 1) * self.k]
    }

    pub fn rows(&self) -> impl Iterator<Item = &[i64]> {
        self.entries.chunks(self.k)
    }

    pub fn row_sums(&self) -> Vec<i64> {
        self.rows().map(|r| r.iter().sum()).collect()
    }

    /// Common row sum when the core is balanced.
    pub fn balance(&self) -> Option<i64> {
        let sums = self.row_sums();
        sums.iter().all(|&x| x == sums[0]).then_some(sums[0])
    }

    pub fn to_matrix(&self) -> DMatrix<f64> {
        DMatrix::from_row_slice(
            self.k,
            self.k,
            &self.entries.iter().map(|&x| x as f64).collect::<Vec<_>>(),
        )
    }

    /// Scalar core `b * I`.
    pub fn scalar(k: usize, b: i64) -> Self {
        let mut entries = vec![0; k * k];
        for i in 0..k {
            entries[i * k + i] = b;
        }
        CoreMatrix { k, entries }
    }
}

impl TryFrom<Vec<Vec<i64>>> for CoreMatrix {
    type Error = UrnError;

    fn try_from(rows: Vec<Vec<i64>>) -> Result<Self> {
        CoreMatrix::new(rows)
    }
}

impl From<CoreMatrix> for Vec<Vec<i64>> {
    fn from(c: CoreMatrix) -> Self {
        c.rows().map(<[i64]>::to_vec).collect()
    }
}

/// JSON form of an urn specification; `b` is optional and inferred from the core.
#[derive(Debug, Clone, Serialize, Deserialize)]
struct UrnSpecDoc {
    k: usize,
    s: u32,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    b: Option<i64>,
    core: CoreMatrix,
    x0: Vec<i64>,
    #[serde(default)]
    mode: SamplingMode,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "UrnSpecDoc", into = "UrnSpecDoc")]
pub struct UrnSpec {
    pub k: usize,
    pub s: u32,
    pub b: i64,
    pub core: CoreMatrix,
    pub x0: Vec<i64>,
    pub mode: SamplingMode,
}

impl TryFrom<UrnSpecDoc> for UrnSpec {
    type Error = UrnError;

    fn try_from(doc: UrnSpecDoc) -> Result<Self> {
        if doc.core.k() != doc.k {
            return Err(UrnError::invalid(format!(
                "core is {0}x{0} but k = {1}",
                doc.core.k(),
                doc.k
            )));
        }
        if doc.x0.len() != doc.k {
            return Err(UrnError::invalid(format!(
                "x0 has {} entries but k = {}",
                doc.x0.len(),
                doc.k
            )));
        }
        if doc.s == 0 {
            return Err(UrnError::invalid("sample size s must be at least 1"));
        }
        let b = doc.b.unwrap_or_else(|| doc.core.row_sums()[0]);
        Ok(UrnSpec {
            k: doc.k,
            s: doc.s,
            b,
            core: doc.core,
            x0: doc.x0,
            mode: doc.mode,
        })
    }
}

impl From<UrnSpec> for UrnSpecDoc {
    fn from(u: UrnSpec) -> Self {
        UrnSpecDoc {
            k: u.k,
            s: u.s,
            b: Some(u.b),
            core: u.core,
            x0: u.x0,
            mode: u.mode,
        }
    }
}

impl UrnSpec {
    /// Builds a spec with `b` inferred from the first row of the core.
    pub fn new(core: CoreMatrix, s: u32, x0: Vec<i64>, mode: SamplingMode) -> Result<Self> {
        UrnSpec::try_from(UrnSpecDoc {
            k: core.k(),
            s,
            b: None,
            core,
            x0,
            mode,
        })
    }

    pub fn from_json(text: &str) -> Result<Self> {
        serde_json::from_str(text).map_err(|e| UrnError::invalid(format!("bad urn spec: {}", e)))
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("spec serializes")
    }

    pub fn tau0(&self) -> i64 {
        self.x0.iter().sum()
    }

    /// Total count after `n` draws.
    pub fn tau(&self, n: u64) -> i64 {
        self.b * n as i64 + self.tau0()
    }

    pub fn with_mode(mut self, mode: SamplingMode) -> Self {
        self.mode = mode;
        self
    }

    /// Validates and returns the spec, or a model error listing every violation.
    pub fn validated(self) -> Result<Self> {
        let report = validate(&self);
        if report.ok {
            Ok(self)
        } else {
            let msgs: Vec<_> = report
                .violations
                .iter()
                .map(|v| format!("{}: {}", v.rule, v.message))
                .collect();
            Err(UrnError::model(msgs.join("; ")))
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Violation {
    pub rule: String,
    pub message: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ValidationReport {
    pub ok: bool,
    pub violations: Vec<Violation>,
    pub irreducible: bool,
    pub warnings: Vec<String>,
}

/// Checks balance, tenability, start size, integrality and irreducibility.
///
/// Every failing rule is reported; irreducibility is only a warning.
pub fn validate(spec: &UrnSpec) -> ValidationReport {
    let mut violations = Vec::new();
    let mut push = |rule: &str, message: String| {
        violations.push(Violation {
            rule: rule.to_string(),
            message,
        })
    };
    let core = &spec.core;
    let k = core.k();
    let s = spec.s as i64;

    if spec.b < 1 {
        push("balance", format!("balance factor b = {} must be at least 1", spec.b));
    }
    for (i, sum) in core.row_sums().into_iter().enumerate() {
        if sum != spec.b {
            push(
                "balance",
                format!("core row {} sums to {}, expected b = {}", i + 1, sum, spec.b),
            );
        }
    }

    for i in 0..k {
        for j in 0..k {
            let a = core.get(i, j);
            if i != j && a < 0 {
                push(
                    "tenability",
                    format!("off-diagonal entry ({}, {}) = {} is negative", i + 1, j + 1, a),
                );
            }
            if i == j && a < -s {
                push(
                    "tenability",
                    format!("diagonal entry ({0}, {0}) = {1} is below -s = {2}", i + 1, a, -s),
                );
            }
        }
    }

    let tau0 = spec.tau0();
    if tau0 < s {
        push(
            "initial_total",
            format!("initial total {} is smaller than the sample size {}", tau0, s),
        );
    }

    for (i, &x) in spec.x0.iter().enumerate() {
        if x < 0 {
            push("nonnegative_start", format!("x0[{}] = {} is negative", i + 1, x));
        }
    }

    for i in 1..k {
        for j in 0..k {
            if (core.get(i, j) - core.get(0, j)).rem_euclid(s) != 0 {
                push(
                    "integrality",
                    format!(
                        "core rows 1 and {} differ by {} in column {}, not a multiple of s = {}",
                        i + 1,
                        core.get(i, j) - core.get(0, j),
                        j + 1,
                        s
                    ),
                );
            }
        }
    }

    let irreducible = check_irreducible(core, spec.s);
    let mut warnings = Vec::new();
    if !irreducible {
        warnings.push("core is reducible: exact moments are available but asymptotic results are not".to_string());
    }

    ValidationReport {
        ok: violations.is_empty(),
        violations,
        irreducible,
        warnings,
    }
}

/// Strong connectivity of the graph with an edge `i -> j` whenever `(A + sI)[i, j] > 0`.
pub fn check_irreducible(core: &CoreMatrix, s: u32) -> bool {
    let k = core.k();
    let edge = |i: usize, j: usize| {
        let shift = if i == j { s as i64 } else { 0 };
        core.get(i, j) + shift > 0
    };
    let reaches_all = |forward: bool| {
        let mut seen = vec![false; k];
        let mut queue = VecDeque::from([0usize]);
        seen[0] = true;
        while let Some(u) = queue.pop_front() {
            for v in 0..k {
                let e = if forward { edge(u, v) } else { edge(v, u) };
                if e && !seen[v] {
                    seen[v] = true;
                    queue.push_back(v);
                }
            }
        }
        seen.into_iter().all(|x| x)
    };
    reaches_all(true) && reaches_all(false)
}

/// Full replacement matrix, one row per sample in reverse lexicographic order.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ReplacementMatrix {
    pub k: usize,
    pub s: u32,
    pub samples: Vec<Composition>,
    pub rows: Vec<Vec<i64>>,
}

impl ReplacementMatrix {
    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    /// Replacement row for a sample, looked up by rank.
    pub fn row_for(&self, sample: &Composition) -> &[i64] {
        &self.rows[sample.rank()]
    }
}

/// Replacement for one sample: `(1/s) * sample * A`, which must be integral.
pub fn replacement_row(core: &CoreMatrix, sample: &[u32]) -> Result<Vec<i64>> {
    let k = core.k();
    if sample.len() != k {
        return Err(UrnError::invalid(format!(
            "sample has {} parts, core is {}x{}",
            sample.len(),
            k,
            k
        )));
    }
    let s: i64 = sample.iter().map(|&x| x as i64).sum();
    if s == 0 {
        return Err(UrnError::invalid("empty sample"));
    }
    (0..k)
        .map(|j| {
            let num: i64 = sample.iter().enumerate().map(|(i, &c)| c as i64 * core.get(i, j)).sum();
            if num % s != 0 {
                Err(UrnError::model(format!(
                    "sample {:?} gives non-integral replacement {}/{} for color {}",
                    sample,
                    num,
                    s,
                    j + 1
                )))
            } else {
                Ok(num / s)
            }
        })
        .collect()
}

pub fn build_replacement_matrix(core: &CoreMatrix, s: u32) -> Result<ReplacementMatrix> {
    let samples: Vec<Composition> = Compositions::new(core.k(), s)?.collect();
    let rows = samples
        .iter()
        .map(|c| replacement_row(core, c.parts()))
        .collect::<Result<Vec<_>>>()?;
    Ok(ReplacementMatrix {
        k: core.k(),
        s,
        samples,
        rows,
    })
}
