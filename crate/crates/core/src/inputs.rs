//! Spin input generation and the per-site input file format.
//!
//! Random product inputs are Haar-distributed per site: each qubit is a
//! normalized vector of two complex numbers whose real and imaginary parts are
//! i.i.d. standard normals. Random entangled inputs use the same recipe on the
//! joint 2^n-dimensional spin space. Streams come from `ChaCha8Rng` seeded
//! with a `u64`.
//!
//! Input files hold one site per non-empty line, four whitespace- or
//! comma-separated numbers `re0 im0 re1 im1`; `#` starts a comment.

use rand::Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};
use crate::hilbert::{PauliAxis, C64};
use crate::protocol::{Qubit, SpinInput};

/// Norm deviation above which a loaded input line triggers a warning.
pub const INPUT_NORM_WARN: f64 = 1e-6;

fn gaussian_vector<R: Rng + ?Sized>(rng: &mut R, len: usize) -> Vec<C64> {
    let v: Vec<C64> = (0..len).map(|_| C64::new(rng.sample(StandardNormal), rng.sample(StandardNormal))).collect();
    let norm = v.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt();
    v.into_iter().map(|z| z / norm).collect()
}

pub fn haar_qubit<R: Rng + ?Sized>(rng: &mut R) -> Qubit {
    let v = gaussian_vector(rng, 2);
    [v[0], v[1]]
}

pub fn random_product<R: Rng + ?Sized>(n: usize, rng: &mut R) -> SpinInput {
    SpinInput::Product((0..n).map(|_| haar_qubit(rng)).collect())
}

pub fn random_entangled<R: Rng + ?Sized>(n: usize, rng: &mut R) -> SpinInput {
    SpinInput::Entangled(gaussian_vector(rng, 1 << n))
}

/// The four single-qubit states |0>, |1>, |+>, |+i>.
pub fn tomographic_qubits() -> [(char, Qubit); 4] {
    let one = C64::new(1.0, 0.0);
    let zero = C64::new(0.0, 0.0);
    let plus = PauliAxis::X.eigenvector(true);
    let plus_i = PauliAxis::Y.eigenvector(true);
    [('0', [one, zero]), ('1', [zero, one]), ('+', plus), ('i', plus_i)]
}

/// All 4^n products of `tomographic_qubits`, labelled like "0+i1".
pub fn tomographic_set(n: usize) -> Vec<(String, SpinInput)> {
    let basis = tomographic_qubits();
    (0..4usize.pow(n as u32))
        .map(|mut k| {
            let mut picks = vec![0; n];
            for slot in picks.iter_mut().rev() {
                *slot = k % 4;
                k /= 4;
            }
            let label = picks.iter().map(|&p| basis[p].0).collect();
            (label, SpinInput::Product(picks.iter().map(|&p| basis[p].1).collect()))
        })
        .collect()
}

/// Parsed input file plus human-readable warnings.
#[derive(Debug)]
pub struct LoadedInput {
    pub input: SpinInput,
    pub warnings: Vec<String>,
}

pub fn parse_input_file(text: &str) -> Result<LoadedInput> {
    let mut qubits = Vec::new();
    let mut warnings = Vec::new();
    for (lineno, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let nums = line
            .split(|c: char| c.is_whitespace() || c == ',')
            .filter(|t| !t.is_empty())
            .map(|t| t.parse::<f64>().map_err(|e| Error::Parse(format!("line {}: '{t}': {e}", lineno + 1))))
            .collect::<Result<Vec<f64>>>()?;
        if nums.len() != 4 {
            return Err(Error::Parse(format!("line {}: expected 4 numbers, found {}", lineno + 1, nums.len())));
        }
        if nums.iter().any(|x| !x.is_finite()) {
            return Err(Error::Parse(format!("line {}: non-finite amplitude", lineno + 1)));
        }
        let q = [C64::new(nums[0], nums[1]), C64::new(nums[2], nums[3])];
        let norm = (q[0].norm_sqr() + q[1].norm_sqr()).sqrt();
        if norm == 0.0 {
            return Err(Error::Parse(format!("line {}: zero-norm spin state", lineno + 1)));
        }
        if (norm - 1.0).abs() > INPUT_NORM_WARN {
            warnings.push(format!("site {}: norm {norm} renormalized to 1", qubits.len() + 1));
        }
        qubits.push([q[0] / norm, q[1] / norm]);
    }
    if qubits.is_empty() {
        return Err(Error::Parse("input file lists no sites".into()));
    }
    Ok(LoadedInput { input: SpinInput::Product(qubits), warnings })
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn random_inputs_are_normalized_and_seeded() {
        let mut a = ChaCha8Rng::seed_from_u64(9);
        let mut b = ChaCha8Rng::seed_from_u64(9);
        let x = random_product(3, &mut a);
        assert_eq!(x, random_product(3, &mut b));
        let SpinInput::Product(qs) = x else { unreachable!() };
        for q in qs {
            assert!((q[0].norm_sqr() + q[1].norm_sqr() - 1.0).abs() < 1e-12);
        }
        let e = random_entangled(3, &mut a);
        assert_eq!(e.n(), 3);
        assert!((e.spin_state().unwrap().norm() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn tomographic_set_size_and_labels() {
        let set = tomographic_set(2);
        assert_eq!(set.len(), 16);
        assert_eq!(set[0].0, "00");
        assert_eq!(set[15].0, "ii");
    }

    #[test]
    fn parse_file_with_comments_and_warning() {
        let text = "# site amplitudes\n1 0 0 0\n0.6, 0, 0, 0.8 # comment\n\n3 0 4 0\n";
        let loaded = parse_input_file(text).unwrap();
        assert_eq!(loaded.input.n(), 3);
        assert_eq!(loaded.warnings.len(), 1);
        let SpinInput::Product(qs) = loaded.input else { unreachable!() };
        assert!((qs[2][0].re - 0.6).abs() < 1e-15);
    }

    #[test]
    fn parse_file_errors() {
        assert!(matches!(parse_input_file("1 0 0"), Err(Error::Parse(_))));
        assert!(matches!(parse_input_file("a b c d"), Err(Error::Parse(_))));
        assert!(matches!(parse_input_file("0 0 0 0"), Err(Error::Parse(_))));
        assert!(matches!(parse_input_file("# nothing\n"), Err(Error::Parse(_))));
    }
}
