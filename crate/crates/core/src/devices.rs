//! Measuring devices: Z4 pointer pairs, their entangled initialization and
//! the impulsive spin-pointer couplings.

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::hilbert::{LocalUnitary, PauliAxis, PureState, RegisterId, Role};

/// An integer reduced mod 4.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(into = "u8", try_from = "u8")]
pub struct Z4(u8);

impl Z4 {
    pub const ZERO: Z4 = Z4(0);
    pub const TWO: Z4 = Z4(2);

    pub fn new(value: i64) -> Self {
        Z4(value.rem_euclid(4) as u8)
    }

    pub fn value(self) -> u8 {
        self.0
    }
}

impl From<Z4> for u8 {
    fn from(z: Z4) -> u8 {
        z.0
    }
}

impl TryFrom<u8> for Z4 {
    type Error = String;

    fn try_from(v: u8) -> std::result::Result<Self, String> {
        if v < 4 {
            Ok(Z4(v))
        } else {
            Err(format!("{v} is not a Z4 value"))
        }
    }
}

impl fmt::Display for Z4 {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

/// Link `j` of the chain: pointer Q_j (coupled to spin j at t1) entangled
/// with pointer Q'_{j+1} (coupled to spin j+1 at t2), indices mod N.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct PointerPair {
    /// 1-based link index.
    pub link: usize,
    pub unprimed: RegisterId,
    pub primed: RegisterId,
    pub axis: PauliAxis,
}

/// (q - q') mod 4
pub fn difference_mod4(q: Z4, q_prime: Z4) -> Z4 {
    Z4::new(q.0 as i64 - q_prime.0 as i64)
}

/// Prepares the pair in (1/2) Σ_q |q>|q>. Both registers must hold |0>.
pub fn init_entangled_pair(state: &PureState, pair: &PointerPair) -> Result<PureState> {
    let layout = state.layout();
    for (id, role) in [(pair.unprimed, Role::Pointer), (pair.primed, Role::PointerPrimed)] {
        let reg = layout.register(id)?;
        if reg.role != role {
            return Err(Error::WrongRole {
                register: id,
                expected: if role == Role::Pointer { "pointer" } else { "pointer-primed" },
            });
        }
    }
    if pair.unprimed == pair.primed {
        return Err(Error::DuplicateRegister(pair.unprimed));
    }
    for id in [pair.unprimed, pair.primed] {
        let probs = state.outcome_probabilities(id)?;
        if (probs[0] - 1.0).abs() > 1e-12 {
            return Err(Error::NotFiducial(id));
        }
    }
    let s = state.apply_local(&LocalUnitary::fourier4(pair.unprimed))?;
    s.apply_modular_add(pair.unprimed, pair.primed, 1)
}

/// Unit-strength impulsive coupling P·σ_axis: the pointer moves by the
/// spin's σ_axis eigenvalue.
pub fn couple(state: &PureState, spin: RegisterId, pointer: RegisterId, axis: PauliAxis) -> Result<PureState> {
    state.apply_controlled_shift(spin, axis, pointer, 1)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::hilbert::{DensityMatrix, RegisterLayout, C64};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn pair_layout() -> RegisterLayout {
        RegisterLayout::new([
            (RegisterId(0), Role::Spin),
            (RegisterId(1), Role::Pointer),
            (RegisterId(2), Role::PointerPrimed),
        ])
        .unwrap()
    }

    fn ket(dim: usize, k: usize) -> Vec<C64> {
        (0..dim).map(|i| if i == k { C64::new(1.0, 0.0) } else { C64::new(0.0, 0.0) }).collect()
    }

    fn pair() -> PointerPair {
        PointerPair { link: 1, unprimed: RegisterId(1), primed: RegisterId(2), axis: PauliAxis::X }
    }

    fn initialized(spin: Vec<C64>) -> PureState {
        let s = PureState::product(pair_layout(), &[spin, ket(4, 0), ket(4, 0)]).unwrap();
        init_entangled_pair(&s, &pair()).unwrap()
    }

    #[test]
    fn difference_examples() {
        assert_eq!(difference_mod4(Z4::new(0), Z4::new(0)), Z4::ZERO);
        assert_eq!(difference_mod4(Z4::new(3), Z4::new(1)), Z4::TWO);
        assert_eq!(difference_mod4(Z4::new(1), Z4::new(3)), Z4::TWO);
        assert_eq!(Z4::new(-1).value(), 3);
        assert!(Z4::try_from(4u8).is_err());
    }

    #[test]
    fn entangled_pair_outcomes_agree() {
        let s = initialized(ket(2, 0));
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for _ in 0..32 {
            let (q, _, post) = s.measure(RegisterId(1), &mut rng).unwrap();
            let (qp, p, _) = post.measure(RegisterId(2), &mut rng).unwrap();
            assert_eq!(q, qp);
            assert!((p - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn entangled_pair_marginals_are_maximally_mixed() {
        let s = initialized(ket(2, 1));
        for id in [RegisterId(1), RegisterId(2)] {
            let rho = s.reduced_density(&[id]).unwrap();
            assert!(rho.max_abs_deviation(&DensityMatrix::maximally_mixed(vec![4])) < 1e-12);
        }
        // Schmidt rank 4 with equal coefficients: the pair's reduced state on
        // one side has four eigenvalues 1/4.
        let ev = s.reduced_density(&[RegisterId(1)]).unwrap().eigenvalues();
        assert_eq!(ev.len(), 4);
        assert!(ev.iter().all(|e| (e - 0.25).abs() < 1e-12));
    }

    #[test]
    fn joint_shift_leaves_pair_invariant() {
        let s = initialized(ket(2, 0));
        for steps in 0..4 {
            let t = s
                .apply_local(&LocalUnitary::shift(RegisterId(1), steps))
                .unwrap()
                .apply_local(&LocalUnitary::shift(RegisterId(2), steps))
                .unwrap();
            assert!((s.inner(&t).unwrap().norm() - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn init_requires_fiducial_pointers() {
        let s = PureState::product(pair_layout(), &[ket(2, 0), ket(4, 1), ket(4, 0)]).unwrap();
        assert!(matches!(init_entangled_pair(&s, &pair()), Err(Error::NotFiducial(RegisterId(1)))));
        let bad = PointerPair { unprimed: RegisterId(2), primed: RegisterId(1), ..pair() };
        let s = PureState::product(pair_layout(), &[ket(2, 0), ket(4, 0), ket(4, 0)]).unwrap();
        assert!(matches!(init_entangled_pair(&s, &bad), Err(Error::WrongRole { .. })));
    }

    #[test]
    fn couple_examples() {
        let l = RegisterLayout::new([(RegisterId(0), Role::Spin), (RegisterId(1), Role::Pointer)]).unwrap();
        let s = PureState::product(l.clone(), &[ket(2, 1), ket(4, 0)]).unwrap();
        let out = couple(&s, RegisterId(0), RegisterId(1), PauliAxis::Z).unwrap();
        assert_eq!(out.outcome_probabilities(RegisterId(1)).unwrap(), vec![0.0, 0.0, 0.0, 1.0]);

        let y_plus = PauliAxis::Y.eigenvector(true).to_vec();
        let s = PureState::product(l, &[y_plus, ket(4, 2)]).unwrap();
        let out = couple(&s, RegisterId(0), RegisterId(1), PauliAxis::Y).unwrap();
        let p = out.outcome_probabilities(RegisterId(1)).unwrap();
        assert!((p[3] - 1.0).abs() < 1e-12);
    }

    #[test]
    fn couples_on_disjoint_pairs_commute() {
        let l = RegisterLayout::new([
            (RegisterId(0), Role::Spin),
            (RegisterId(1), Role::Spin),
            (RegisterId(2), Role::Pointer),
            (RegisterId(3), Role::Pointer),
        ])
        .unwrap();
        let a = vec![C64::new(0.6, 0.1), C64::new(-0.2, 0.77)];
        let b = vec![C64::new(0.3, -0.5), C64::new(0.8, 0.1)];
        let s = PureState::product(l, &[a, b, ket(4, 0), ket(4, 1)]).unwrap();
        let ab = couple(
            &couple(&s, RegisterId(0), RegisterId(2), PauliAxis::X).unwrap(),
            RegisterId(1),
            RegisterId(3),
            PauliAxis::Y,
        )
        .unwrap();
        let ba = couple(
            &couple(&s, RegisterId(1), RegisterId(3), PauliAxis::Y).unwrap(),
            RegisterId(0),
            RegisterId(2),
            PauliAxis::X,
        )
        .unwrap();
        for (x, y) in ab.amplitudes().iter().zip(ba.amplitudes()) {
            assert!((x - y).norm() < 1e-12);
        }
    }

    #[test]
    fn single_shift_per_register_gives_even_differences() {
        // One ±1 shift on each side of an initialized pair: Q - Q' ∈ {0, 2}.
        let spin = vec![C64::new(0.8, 0.0), C64::new(0.0, 0.6)];
        let s = initialized(spin);
        let s = couple(&s, RegisterId(0), RegisterId(1), PauliAxis::X).unwrap();
        let s = couple(&s, RegisterId(0), RegisterId(2), PauliAxis::Y).unwrap();
        let branches = s.enumerate_branches(&[RegisterId(1), RegisterId(2)]).unwrap();
        for b in &branches {
            let d = difference_mod4(Z4::new(b.outcomes[0] as i64), Z4::new(b.outcomes[1] as i64));
            assert!(d == Z4::ZERO || d == Z4::TWO, "{d}");
        }
        for id in [RegisterId(1), RegisterId(2)] {
            for p in s.outcome_probabilities(id).unwrap() {
                assert!((p - 0.25).abs() < 1e-10);
            }
        }
    }
}
