//! Derivation, validation and persistence of per-site Pauli correction
//! tables.
//!
//! For every difference class d the branch operator K_d is computed once.
//! Candidate label vectors L (site 1 most significant, I < X < Y < Z) are
//! scanned in lexicographic order and the first one with
//! |tr(C^dag L K_d)|^2 / (2^n tr(K_d^dag K_d)) >= 1 - 1e-9 is kept, where C is
//! the cyclic permutation. Pauli strings are monomial matrices, so each
//! candidate costs O(2^n).
//!
//! # File format
//!
//! Tables are stored as JSON:
//!
//! ```json
//! {
//!   "format": "chainport-correction-table",
//!   "version": 1,
//!   "fingerprint": { "n": 2, "family": "two-way-vaa", "end_link": "y" },
//!   "entries": [ { "d": [0, 0], "labels": ["I", "I"] }, ... ]
//! }
//! ```
//!
//! Entries are sorted by `d`; `d` holds only 0 and 2; `labels` holds one
//! character per site from `I`, `X`, `Y`, `Z`.

use std::collections::BTreeMap;
use std::fmt;
use std::path::Path;

use nalgebra::DMatrix;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::hilbert::{LocalUnitary, PauliAxis, PureState, C64};
use crate::inputs::{random_entangled, random_product, tomographic_set};
use crate::protocol::{
    branch_kraus, cyclic_permutation_matrix, enumerate_protocol_branches, spin_id, Fingerprint, ProtocolSpec, SpinInput,
};

/// Corrected fidelity must reach 1 - CORRECTION_TOL.
pub const CORRECTION_TOL: f64 = 1e-9;

pub const TABLE_FORMAT: &str = "chainport-correction-table";
pub const TABLE_VERSION: u32 = 1;

/// Default seed for the random part of `validate_table`.
pub const VALIDATION_SEED: u64 = 0x00C0_FFEE;
pub const VALIDATION_RANDOM_PRODUCT: usize = 20;
pub const VALIDATION_RANDOM_ENTANGLED: usize = 5;

/// Class weights below this are treated as absent.
const EMPTY_CLASS: f64 = 1e-20;

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum PauliLabel {
    I,
    X,
    Y,
    Z,
}

impl PauliLabel {
    pub const ALL: [PauliLabel; 4] = [PauliLabel::I, PauliLabel::X, PauliLabel::Y, PauliLabel::Z];

    pub fn axis(self) -> Option<PauliAxis> {
        match self {
            PauliLabel::I => None,
            PauliLabel::X => Some(PauliAxis::X),
            PauliLabel::Y => Some(PauliAxis::Y),
            PauliLabel::Z => Some(PauliAxis::Z),
        }
    }

    pub fn as_char(self) -> char {
        match self {
            PauliLabel::I => 'I',
            PauliLabel::X => 'X',
            PauliLabel::Y => 'Y',
            PauliLabel::Z => 'Z',
        }
    }

    /// Nonzero entry of row `bit`: (column, value).
    fn row_entry(self, bit: usize) -> (usize, C64) {
        let one = C64::new(1.0, 0.0);
        match self {
            PauliLabel::I => (bit, one),
            PauliLabel::X => (bit ^ 1, one),
            PauliLabel::Y => (bit ^ 1, if bit == 0 { -C64::i() } else { C64::i() }),
            PauliLabel::Z => (bit, if bit == 0 { one } else { -one }),
        }
    }
}

impl fmt::Display for PauliLabel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.as_char())
    }
}

pub fn labels_to_string(labels: &[PauliLabel]) -> String {
    labels.iter().map(|l| l.as_char()).collect()
}

/// Map from difference vector to per-site Pauli corrections.
#[derive(Clone, Debug, PartialEq)]
pub struct CorrectionTable {
    fingerprint: Fingerprint,
    entries: BTreeMap<Vec<u8>, Vec<PauliLabel>>,
}

#[derive(Serialize, Deserialize)]
struct TableFile {
    format: String,
    version: u32,
    fingerprint: Fingerprint,
    entries: Vec<EntryRecord>,
}

#[derive(Serialize, Deserialize)]
struct EntryRecord {
    d: Vec<u8>,
    labels: Vec<PauliLabel>,
}

impl CorrectionTable {
    pub fn new(fingerprint: Fingerprint) -> Self {
        Self { fingerprint, entries: BTreeMap::new() }
    }

    pub fn fingerprint(&self) -> Fingerprint {
        self.fingerprint
    }

    pub fn entries(&self) -> &BTreeMap<Vec<u8>, Vec<PauliLabel>> {
        &self.entries
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn get(&self, d: &[u8]) -> Option<&[PauliLabel]> {
        self.entries.get(d).map(|v| v.as_slice())
    }

    pub fn insert(&mut self, d: Vec<u8>, labels: Vec<PauliLabel>) -> Result<()> {
        let n = self.fingerprint.n;
        if d.len() != n || labels.len() != n {
            return Err(Error::DimensionMismatch { expected: n, found: d.len().min(labels.len()) });
        }
        if d.iter().any(|&v| v != 0 && v != 2) {
            return Err(Error::OddDifference(d));
        }
        self.entries.insert(d, labels);
        Ok(())
    }

    pub fn check_fingerprint(&self, spec: &ProtocolSpec) -> Result<()> {
        if self.fingerprint != spec.fingerprint() {
            return Err(Error::FingerprintMismatch {
                expected: spec.fingerprint().to_string(),
                found: self.fingerprint.to_string(),
            });
        }
        Ok(())
    }

    /// Applies entry[d] site by site to a state over the spin registers.
    pub fn apply(&self, d: &[u8], spins: &PureState) -> Result<PureState> {
        let labels = self.get(d).ok_or_else(|| Error::MissingEntry(d.to_vec()))?;
        let mut state = spins.clone();
        for (k, label) in labels.iter().enumerate() {
            if let Some(axis) = label.axis() {
                state = state.apply_local(&LocalUnitary::pauli(spin_id(k + 1), axis))?;
            }
        }
        Ok(state)
    }

    pub fn to_json(&self) -> Result<String> {
        let file = TableFile {
            format: TABLE_FORMAT.into(),
            version: TABLE_VERSION,
            fingerprint: self.fingerprint,
            entries: self.entries.iter().map(|(d, l)| EntryRecord { d: d.clone(), labels: l.clone() }).collect(),
        };
        let mut s = serde_json::to_string_pretty(&file)?;
        s.push('\n');
        Ok(s)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let file: TableFile = serde_json::from_str(text)?;
        if file.format != TABLE_FORMAT {
            return Err(Error::Parse(format!("unexpected format tag '{}'", file.format)));
        }
        if file.version != TABLE_VERSION {
            return Err(Error::Parse(format!("unsupported table version {}", file.version)));
        }
        let mut table = Self::new(file.fingerprint);
        for e in file.entries {
            if table.entries.contains_key(&e.d) {
                return Err(Error::Parse(format!("duplicate entry for d = {:?}", e.d)));
            }
            let d = e.d.clone();
            table.insert(e.d, e.labels).map_err(|err| Error::Parse(format!("entry d = {d:?}: {err}")))?;
        }
        Ok(table)
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_json()?)?;
        Ok(())
    }

    pub fn read(path: &Path) -> Result<Self> {
        Self::from_json(&std::fs::read_to_string(path)?)
    }
}

/// Pauli string as a monomial matrix: for each row its (column, value).
fn pauli_string_rows(labels: &[PauliLabel]) -> Vec<(usize, C64)> {
    let n = labels.len();
    (0..1usize << n)
        .map(|r| {
            let mut col = 0;
            let mut val = C64::new(1.0, 0.0);
            for (k, l) in labels.iter().enumerate() {
                let bit = (r >> (n - 1 - k)) & 1;
                let (c, v) = l.row_entry(bit);
                col |= c << (n - 1 - k);
                val *= v;
            }
            (col, val)
        })
        .collect()
}

fn label_vector(mut index: usize, n: usize) -> Vec<PauliLabel> {
    let mut out = vec![PauliLabel::I; n];
    for slot in out.iter_mut().rev() {
        *slot = PauliLabel::ALL[index % 4];
        index /= 4;
    }
    out
}

/// Best correction for one branch operator: (labels, channel fidelity).
/// Returns the lexicographically first candidate that reaches the
/// tolerance, otherwise the best one seen.
pub fn search_correction(k: &DMatrix<C64>, target: &DMatrix<C64>) -> (Vec<PauliLabel>, f64, bool) {
    let dim = k.nrows();
    let n = dim.trailing_zeros() as usize;
    let weight: f64 = k.iter().map(|z| z.norm_sqr()).sum();
    // tr(C^dag L K) = tr(L M) with M = K C^dag
    let m = k * target.adjoint();
    let mut best = (vec![PauliLabel::I; n], 0.0);
    for index in 0..4usize.pow(n as u32) {
        let labels = label_vector(index, n);
        let tr: C64 = pauli_string_rows(&labels).iter().enumerate().map(|(r, &(c, v))| v * m[(c, r)]).sum();
        let fid = (tr.norm_sqr() / (dim as f64 * weight)).clamp(0.0, 1.0);
        if fid >= 1.0 - CORRECTION_TOL {
            return (labels, fid, true);
        }
        if fid > best.1 {
            best = (labels, fid);
        }
    }
    (best.0, best.1, false)
}

/// Searches a Pauli correction for every nonempty difference class.
pub fn derive_table(spec: &ProtocolSpec) -> Result<CorrectionTable> {
    let kraus = branch_kraus(spec)?;
    let target = cyclic_permutation_matrix(spec.n);
    let mut table = CorrectionTable::new(spec.fingerprint());
    for (d, k) in kraus {
        if k.iter().map(|z| z.norm_sqr()).sum::<f64>() < EMPTY_CLASS {
            continue;
        }
        let (labels, fid, found) = search_correction(&k, &target);
        if !found {
            return Err(Error::NoPauliCorrection { d, best_fidelity: fid });
        }
        table.insert(d, labels)?;
    }
    Ok(table)
}

#[derive(Clone, Debug, Serialize)]
pub struct ValidationReport {
    pub inputs_checked: usize,
    pub branches_checked: usize,
    pub worst_infidelity: f64,
    pub worst_d: Vec<u8>,
    pub worst_input: String,
}

/// Validation inputs: the tomographic product set, then seeded random
/// product and random entangled states.
pub fn validation_inputs(n: usize, seed: u64) -> Vec<(String, SpinInput)> {
    let mut inputs = tomographic_set(n);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    for k in 0..VALIDATION_RANDOM_PRODUCT {
        inputs.push((format!("random-product-{k}"), random_product(n, &mut rng)));
    }
    for k in 0..VALIDATION_RANDOM_ENTANGLED {
        inputs.push((format!("random-entangled-{k}"), random_entangled(n, &mut rng)));
    }
    inputs
}

/// Runs the protocol on every validation input and checks the corrected
/// fidelity of every branch.
pub fn validate_table(spec: &ProtocolSpec, table: &CorrectionTable, seed: u64) -> Result<ValidationReport> {
    validate_table_on(spec, table, &validation_inputs(spec.n, seed))
}

pub fn validate_table_on(
    spec: &ProtocolSpec,
    table: &CorrectionTable,
    inputs: &[(String, SpinInput)],
) -> Result<ValidationReport> {
    table.check_fingerprint(spec)?;
    let zero = vec![0u8; spec.n];
    if table.get(&zero).is_some_and(|l| l.iter().any(|&x| x != PauliLabel::I)) {
        return Err(Error::ValidationFailure { d: zero, input: "table structure".into(), infidelity: 1.0 });
    }
    let mut report = ValidationReport {
        inputs_checked: 0,
        branches_checked: 0,
        worst_infidelity: 0.0,
        worst_d: zero,
        worst_input: String::new(),
    };
    for (label, input) in inputs {
        for b in enumerate_protocol_branches(spec, input, Some(table))? {
            let infidelity = 1.0 - b.fidelity_after.expect("table supplied");
            let d = b.outcome.difference_values();
            if infidelity > report.worst_infidelity || report.worst_input.is_empty() {
                report.worst_infidelity = infidelity.max(0.0);
                report.worst_d = d.clone();
                report.worst_input = label.clone();
            }
            if infidelity > CORRECTION_TOL {
                return Err(Error::ValidationFailure { d, input: label.clone(), infidelity });
            }
            report.branches_checked += 1;
        }
        report.inputs_checked += 1;
    }
    Ok(report)
}
