//! Dense pure-state engine over registers of dimension 2 (spins) and 4
//! (modular pointers).
//!
//! Amplitudes are stored row-major over the layout's register order: the
//! first register is the most significant digit of the basis index. All
//! operators act on at most two registers and are applied by strided passes
//! over the amplitude vector; no full-space matrix is ever built.

use std::fmt;

use nalgebra::DMatrix;
use num_complex::Complex64;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub type C64 = Complex64;

/// Tolerance used when checking that a supplied matrix is unitary.
pub const UNITARY_TOL: f64 = 1e-12;

/// Branches whose probability falls below this are treated as absent.
pub const ZERO_PROB: f64 = 1e-14;

const ZERO: C64 = C64::new(0.0, 0.0);
const ONE: C64 = C64::new(1.0, 0.0);

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct RegisterId(pub usize);

impl fmt::Display for RegisterId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "r{}", self.0)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Role {
    Spin,
    Pointer,
    PointerPrimed,
    Difference,
}

impl Role {
    pub fn dim(self) -> usize {
        match self {
            Role::Spin => 2,
            Role::Pointer | Role::PointerPrimed | Role::Difference => 4,
        }
    }

    pub fn is_pointer_like(self) -> bool {
        !matches!(self, Role::Spin)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Register {
    pub id: RegisterId,
    pub dim: usize,
    pub role: Role,
}

/// Ordered set of registers making up a composite Hilbert space.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct RegisterLayout {
    registers: Vec<Register>,
    strides: Vec<usize>,
    total_dim: usize,
}

impl RegisterLayout {
    pub fn new<I>(registers: I) -> Result<Self>
    where
        I: IntoIterator<Item = (RegisterId, Role)>,
    {
        let registers: Vec<Register> =
            registers.into_iter().map(|(id, role)| Register { id, dim: role.dim(), role }).collect();
        for (i, r) in registers.iter().enumerate() {
            if registers[..i].iter().any(|o| o.id == r.id) {
                return Err(Error::DuplicateRegister(r.id));
            }
        }
        let mut strides = vec![1; registers.len()];
        for k in (0..registers.len().saturating_sub(1)).rev() {
            strides[k] = strides[k + 1] * registers[k + 1].dim;
        }
        let total_dim = registers.iter().map(|r| r.dim).product();
        Ok(Self { registers, strides, total_dim })
    }

    pub fn registers(&self) -> &[Register] {
        &self.registers
    }

    pub fn total_dim(&self) -> usize {
        self.total_dim
    }

    pub fn len(&self) -> usize {
        self.registers.len()
    }

    pub fn is_empty(&self) -> bool {
        self.registers.is_empty()
    }

    pub fn position(&self, id: RegisterId) -> Result<usize> {
        self.registers.iter().position(|r| r.id == id).ok_or(Error::UnknownRegister(id))
    }

    pub fn register(&self, id: RegisterId) -> Result<&Register> {
        Ok(&self.registers[self.position(id)?])
    }

    fn stride(&self, pos: usize) -> usize {
        self.strides[pos]
    }

    #[inline]
    fn digit(&self, index: usize, pos: usize) -> usize {
        (index / self.strides[pos]) % self.registers[pos].dim
    }

    /// Sub-layout over `ids`, in the order given.
    pub fn select(&self, ids: &[RegisterId]) -> Result<Self> {
        let regs = ids.iter().map(|&id| self.register(id).map(|r| (r.id, r.role))).collect::<Result<Vec<_>>>()?;
        Self::new(regs)
    }

    fn concat(&self, other: &Self) -> Result<Self> {
        Self::new(self.registers.iter().chain(other.registers.iter()).map(|r| (r.id, r.role)))
    }

    /// Mixed-radix encoder for a subset of positions: returns, for every
    /// position, its place value inside the subset index (0 if excluded).
    fn place_values(&self, positions: &[usize]) -> (Vec<usize>, usize) {
        let mut places = vec![0; self.registers.len()];
        let mut size = 1;
        for &p in positions.iter().rev() {
            places[p] = size;
            size *= self.registers[p].dim;
        }
        (places, size)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PauliAxis {
    X,
    Y,
    Z,
}

impl PauliAxis {
    pub const ALL: [PauliAxis; 3] = [PauliAxis::X, PauliAxis::Y, PauliAxis::Z];

    pub fn matrix(self) -> DMatrix<C64> {
        let i = C64::i();
        match self {
            PauliAxis::X => DMatrix::from_row_slice(2, 2, &[ZERO, ONE, ONE, ZERO]),
            PauliAxis::Y => DMatrix::from_row_slice(2, 2, &[ZERO, -i, i, ZERO]),
            PauliAxis::Z => DMatrix::from_row_slice(2, 2, &[ONE, ZERO, ZERO, -ONE]),
        }
    }

    /// Normalized eigenvector for eigenvalue +1 (`positive`) or -1.
    pub fn eigenvector(self, positive: bool) -> [C64; 2] {
        let h = std::f64::consts::FRAC_1_SQRT_2;
        let s = if positive { 1.0 } else { -1.0 };
        match self {
            PauliAxis::X => [C64::new(h, 0.0), C64::new(s * h, 0.0)],
            PauliAxis::Y => [C64::new(h, 0.0), C64::new(0.0, s * h)],
            PauliAxis::Z if positive => [ONE, ZERO],
            PauliAxis::Z => [ZERO, ONE],
        }
    }

    pub fn as_char(self) -> char {
        match self {
            PauliAxis::X => 'x',
            PauliAxis::Y => 'y',
            PauliAxis::Z => 'z',
        }
    }
}

impl fmt::Display for PauliAxis {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.as_char())
    }
}

/// A unitary acting on a single register.
#[derive(Clone, Debug)]
pub struct LocalUnitary {
    matrix: DMatrix<C64>,
    target: RegisterId,
}

impl LocalUnitary {
    pub fn new(target: RegisterId, matrix: DMatrix<C64>) -> Result<Self> {
        if !matrix.is_square() {
            return Err(Error::DimensionMismatch { expected: matrix.nrows(), found: matrix.ncols() });
        }
        let deviation = unitarity_deviation(&matrix);
        if deviation > UNITARY_TOL {
            return Err(Error::NotUnitary { deviation });
        }
        Ok(Self { matrix, target })
    }

    pub fn identity(target: RegisterId, dim: usize) -> Self {
        Self { matrix: DMatrix::identity(dim, dim), target }
    }

    pub fn pauli(target: RegisterId, axis: PauliAxis) -> Self {
        Self { matrix: axis.matrix(), target }
    }

    /// Cyclic Z4 shift |q> -> |q + steps mod 4>.
    pub fn shift(target: RegisterId, steps: i64) -> Self {
        Self { matrix: shift_matrix(steps), target }
    }

    /// Discrete Fourier transform on Z4; maps |0> to the uniform superposition.
    pub fn fourier4(target: RegisterId) -> Self {
        let m = DMatrix::from_fn(4, 4, |r, c| C64::from_polar(0.5, std::f64::consts::FRAC_PI_2 * (r * c) as f64));
        Self { matrix: m, target }
    }

    pub fn matrix(&self) -> &DMatrix<C64> {
        &self.matrix
    }

    pub fn target(&self) -> RegisterId {
        self.target
    }
}

pub fn shift_matrix(steps: i64) -> DMatrix<C64> {
    let s = steps.rem_euclid(4) as usize;
    DMatrix::from_fn(4, 4, |r, c| if r == (c + s) % 4 { ONE } else { ZERO })
}

/// max |U^dag U - I| over all entries.
pub fn unitarity_deviation(m: &DMatrix<C64>) -> f64 {
    let g = m.adjoint() * m;
    let id = DMatrix::<C64>::identity(m.nrows(), m.ncols());
    (g - id).iter().map(|z| z.norm()).fold(0.0, f64::max)
}

/// Reduced state of a set of registers.
#[derive(Clone, Debug)]
pub struct DensityMatrix {
    pub dims: Vec<usize>,
    pub matrix: DMatrix<C64>,
}

impl DensityMatrix {
    pub fn trace(&self) -> C64 {
        self.matrix.trace()
    }

    pub fn hermiticity_deviation(&self) -> f64 {
        (&self.matrix - self.matrix.adjoint()).iter().map(|z| z.norm()).fold(0.0, f64::max)
    }

    pub fn eigenvalues(&self) -> Vec<f64> {
        let herm = (&self.matrix + self.matrix.adjoint()).scale(0.5);
        herm.symmetric_eigenvalues().iter().copied().collect()
    }

    pub fn min_eigenvalue(&self) -> f64 {
        self.eigenvalues().into_iter().fold(f64::INFINITY, f64::min)
    }

    /// Half the trace norm of the difference.
    pub fn trace_distance(&self, other: &DensityMatrix) -> Result<f64> {
        if self.dims != other.dims {
            return Err(Error::LayoutMismatch);
        }
        let diff = &self.matrix - &other.matrix;
        let herm = (&diff + diff.adjoint()).scale(0.5);
        Ok(0.5 * herm.symmetric_eigenvalues().iter().map(|e| e.abs()).sum::<f64>())
    }

    pub fn maximally_mixed(dims: Vec<usize>) -> Self {
        let d: usize = dims.iter().product();
        let matrix = DMatrix::from_diagonal_element(d, d, C64::new(1.0 / d as f64, 0.0));
        Self { dims, matrix }
    }

    pub fn max_abs_deviation(&self, other: &DensityMatrix) -> f64 {
        (&self.matrix - &other.matrix).iter().map(|z| z.norm()).fold(0.0, f64::max)
    }
}

/// One outcome of an exhaustive measurement.
#[derive(Clone, Debug)]
pub struct Branch {
    /// Basis index per measured register, in the order requested.
    pub outcomes: Vec<usize>,
    pub prob: f64,
    pub conditional: PureState,
}

#[derive(Clone, Debug)]
pub struct PureState {
    layout: RegisterLayout,
    amplitudes: Vec<C64>,
}

/// Place values and sizes of a (kept, rest) split of the registers.
struct Bipartition {
    kplaces: Vec<usize>,
    rplaces: Vec<usize>,
    ksize: usize,
    rsize: usize,
    rest_pos: Vec<usize>,
}

impl PureState {
    /// Normalizes `amplitudes` onto `layout`.
    pub fn from_amplitudes(layout: RegisterLayout, amplitudes: Vec<C64>) -> Result<Self> {
        if amplitudes.len() != layout.total_dim() {
            return Err(Error::DimensionMismatch { expected: layout.total_dim(), found: amplitudes.len() });
        }
        let mut state = Self { layout, amplitudes };
        state.normalize()?;
        Ok(state)
    }

    /// Ordered tensor product of one factor per register.
    pub fn product(layout: RegisterLayout, factors: &[Vec<C64>]) -> Result<Self> {
        if factors.len() != layout.len() {
            return Err(Error::DimensionMismatch { expected: layout.len(), found: factors.len() });
        }
        let mut amps = vec![ONE];
        for (reg, factor) in layout.registers().iter().zip(factors) {
            if factor.len() != reg.dim {
                return Err(Error::DimensionMismatch { expected: reg.dim, found: factor.len() });
            }
            let norm = factor.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt();
            if norm == 0.0 || !norm.is_finite() {
                return Err(Error::ZeroNorm);
            }
            let mut next = Vec::with_capacity(amps.len() * reg.dim);
            for a in &amps {
                next.extend(factor.iter().map(|f| a * f / norm));
            }
            amps = next;
        }
        Self::from_amplitudes(layout, amps)
    }

    pub fn layout(&self) -> &RegisterLayout {
        &self.layout
    }

    pub fn amplitudes(&self) -> &[C64] {
        &self.amplitudes
    }

    pub fn norm(&self) -> f64 {
        self.amplitudes.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt()
    }

    fn normalize(&mut self) -> Result<()> {
        let n = self.norm();
        if n <= f64::MIN_POSITIVE || !n.is_finite() {
            return Err(Error::ZeroNorm);
        }
        let inv = 1.0 / n;
        self.amplitudes.iter_mut().for_each(|a| *a *= inv);
        Ok(())
    }

    /// Joint state `self ⊗ other`; register ids must be disjoint.
    pub fn tensor(&self, other: &PureState) -> Result<Self> {
        let layout = self.layout.concat(&other.layout)?;
        let mut amps = Vec::with_capacity(layout.total_dim());
        for a in &self.amplitudes {
            amps.extend(other.amplitudes.iter().map(|b| a * b));
        }
        Ok(Self { layout, amplitudes: amps })
    }

    pub fn scaled(&self, phase: C64) -> Self {
        Self { layout: self.layout.clone(), amplitudes: self.amplitudes.iter().map(|a| a * phase).collect() }
    }

    pub fn apply_local(&self, u: &LocalUnitary) -> Result<Self> {
        let pos = self.layout.position(u.target)?;
        let dim = self.layout.registers()[pos].dim;
        if u.matrix.nrows() != dim {
            return Err(Error::DimensionMismatch { expected: dim, found: u.matrix.nrows() });
        }
        let mut out = self.clone();
        apply_matrix_in_place(&mut out.amplitudes, &u.matrix, self.layout.stride(pos), dim);
        Ok(out)
    }

    /// Impulsive coupling exp(-i P σ_axis) between a spin and a Z4 pointer:
    /// the σ_axis eigencomponent with eigenvalue s shifts the pointer by
    /// `s * steps_for_plus` (mod 4).
    pub fn apply_controlled_shift(
        &self,
        control: RegisterId,
        axis: PauliAxis,
        pointer: RegisterId,
        steps_for_plus: i64,
    ) -> Result<Self> {
        let cpos = self.layout.position(control)?;
        let ppos = self.layout.position(pointer)?;
        if self.layout.registers()[cpos].role != Role::Spin {
            return Err(Error::WrongRole { register: control, expected: "spin" });
        }
        let preg = self.layout.registers()[ppos];
        if !preg.role.is_pointer_like() || preg.dim != 4 {
            return Err(Error::WrongRole { register: pointer, expected: "dim-4 pointer" });
        }
        // V maps the σ_axis eigenbasis (+1 -> |0>, -1 -> |1>) to the computational basis.
        let plus = axis.eigenvector(true);
        let minus = axis.eigenvector(false);
        let v = DMatrix::from_row_slice(2, 2, &[plus[0].conj(), plus[1].conj(), minus[0].conj(), minus[1].conj()]);
        let cstride = self.layout.stride(cpos);
        let pstride = self.layout.stride(ppos);

        let mut amps = self.amplitudes.clone();
        apply_matrix_in_place(&mut amps, &v, cstride, 2);
        let shifts = [steps_for_plus.rem_euclid(4) as usize, (-steps_for_plus).rem_euclid(4) as usize];
        let mut shifted = vec![ZERO; amps.len()];
        for (i, a) in amps.iter().enumerate() {
            let c = (i / cstride) % 2;
            let p = (i / pstride) % 4;
            let np = (p + shifts[c]) % 4;
            shifted[i + np * pstride - p * pstride] = *a;
        }
        apply_matrix_in_place(&mut shifted, &v.adjoint(), cstride, 2);
        Ok(Self { layout: self.layout.clone(), amplitudes: shifted })
    }

    /// Permutation |a>|b> -> |a>|b + sign * a mod 4> on two Z4 registers.
    pub fn apply_modular_add(&self, source: RegisterId, target: RegisterId, sign: i64) -> Result<Self> {
        let spos = self.layout.position(source)?;
        let tpos = self.layout.position(target)?;
        if spos == tpos {
            return Err(Error::DuplicateRegister(source));
        }
        for (pos, id) in [(spos, source), (tpos, target)] {
            if self.layout.registers()[pos].dim != 4 {
                return Err(Error::WrongRole { register: id, expected: "dim-4 pointer" });
            }
        }
        let (ss, ts) = (self.layout.stride(spos), self.layout.stride(tpos));
        let mut out = vec![ZERO; self.amplitudes.len()];
        for (i, a) in self.amplitudes.iter().enumerate() {
            let s = (i / ss) % 4;
            let t = (i / ts) % 4;
            let nt = (t as i64 + sign * s as i64).rem_euclid(4) as usize;
            out[i + nt * ts - t * ts] = *a;
        }
        Ok(Self { layout: self.layout.clone(), amplitudes: out })
    }

    /// Projects a spin onto the σ_axis eigenspace with the given sign.
    /// Returns the branch probability and the renormalized state, or `None`
    /// if the projection vanishes.
    pub fn project_eigen(&self, spin: RegisterId, axis: PauliAxis, positive: bool) -> Result<Option<(f64, Self)>> {
        let pos = self.layout.position(spin)?;
        if self.layout.registers()[pos].role != Role::Spin {
            return Err(Error::WrongRole { register: spin, expected: "spin" });
        }
        let e = axis.eigenvector(positive);
        let proj = DMatrix::from_fn(2, 2, |r, c| e[r] * e[c].conj());
        let mut amps = self.amplitudes.clone();
        apply_matrix_in_place(&mut amps, &proj, self.layout.stride(pos), 2);
        let p: f64 = amps.iter().map(|z| z.norm_sqr()).sum();
        if p < ZERO_PROB {
            return Ok(None);
        }
        let mut st = Self { layout: self.layout.clone(), amplitudes: amps };
        st.normalize()?;
        Ok(Some((p, st)))
    }

    /// Outcome distribution of a computational-basis measurement of `target`.
    pub fn outcome_probabilities(&self, target: RegisterId) -> Result<Vec<f64>> {
        let pos = self.layout.position(target)?;
        let dim = self.layout.registers()[pos].dim;
        let mut probs = vec![0.0; dim];
        for (i, a) in self.amplitudes.iter().enumerate() {
            probs[self.layout.digit(i, pos)] += a.norm_sqr();
        }
        Ok(probs)
    }

    /// Born-rule sample of `target`; returns (outcome, probability, post-state).
    pub fn measure<R: Rng + ?Sized>(&self, target: RegisterId, rng: &mut R) -> Result<(usize, f64, Self)> {
        let probs = self.outcome_probabilities(target)?;
        let total: f64 = probs.iter().sum();
        if total < ZERO_PROB {
            return Err(Error::ZeroProbability);
        }
        let u: f64 = rng.random::<f64>() * total;
        let mut acc = 0.0;
        let mut outcome = probs.iter().rposition(|&p| p > 0.0).unwrap_or(0);
        for (k, &p) in probs.iter().enumerate() {
            acc += p;
            if u < acc && p > 0.0 {
                outcome = k;
                break;
            }
        }
        let pos = self.layout.position(target)?;
        let mut amps = self.amplitudes.clone();
        for (i, a) in amps.iter_mut().enumerate() {
            if self.layout.digit(i, pos) != outcome {
                *a = ZERO;
            }
        }
        let mut post = Self { layout: self.layout.clone(), amplitudes: amps };
        post.normalize().map_err(|_| Error::ZeroProbability)?;
        Ok((outcome, probs[outcome] / total, post))
    }

    /// Conditions on fixed basis values of some registers and drops them.
    /// Returns the probability of the fixed values and the normalized state of
    /// the remaining registers.
    pub fn condition_on(&self, fixed: &[(RegisterId, usize)]) -> Result<(f64, Self)> {
        let mut fixed_pos = Vec::with_capacity(fixed.len());
        for &(id, v) in fixed {
            let p = self.layout.position(id)?;
            if fixed_pos.iter().any(|&(q, _)| q == p) {
                return Err(Error::DuplicateRegister(id));
            }
            let dim = self.layout.registers()[p].dim;
            if v >= dim {
                return Err(Error::DimensionMismatch { expected: dim, found: v });
            }
            fixed_pos.push((p, v));
        }
        let keep: Vec<RegisterId> = self
            .layout
            .registers()
            .iter()
            .enumerate()
            .filter(|(p, _)| !fixed_pos.iter().any(|&(q, _)| q == *p))
            .map(|(_, r)| r.id)
            .collect();
        let sub = self.layout.select(&keep)?;
        let keep_pos: Vec<usize> = keep.iter().map(|&id| self.layout.position(id)).collect::<Result<_>>()?;
        let (places, size) = self.layout.place_values(&keep_pos);
        let mut amps = vec![ZERO; size];
        for (i, a) in self.amplitudes.iter().enumerate() {
            if fixed_pos.iter().all(|&(p, v)| self.layout.digit(i, p) == v) {
                let k: usize = keep_pos.iter().map(|&p| self.layout.digit(i, p) * places[p]).sum();
                amps[k] = *a;
            }
        }
        let prob: f64 = amps.iter().map(|z| z.norm_sqr()).sum();
        if prob < ZERO_PROB {
            return Err(Error::ZeroProbability);
        }
        Ok((prob, Self::from_amplitudes(sub, amps)?))
    }

    /// Splits amplitudes into a (kept index, other index) matrix, where the
    /// kept index runs over `keep` in the given order.
    fn bipartition(&self, keep: &[RegisterId]) -> Result<Bipartition> {
        let mut keep_pos = Vec::with_capacity(keep.len());
        for &id in keep {
            let p = self.layout.position(id)?;
            if keep_pos.contains(&p) {
                return Err(Error::DuplicateRegister(id));
            }
            keep_pos.push(p);
        }
        let rest_pos: Vec<usize> = (0..self.layout.len()).filter(|p| !keep_pos.contains(p)).collect();
        let (kplaces, ksize) = self.layout.place_values(&keep_pos);
        let (rplaces, rsize) = self.layout.place_values(&rest_pos);
        Ok(Bipartition { kplaces, rplaces, ksize, rsize, rest_pos })
    }

    fn split_indices(&self, kplaces: &[usize], rplaces: &[usize]) -> Vec<(usize, usize)> {
        (0..self.amplitudes.len())
            .map(|i| {
                let mut k = 0;
                let mut r = 0;
                for p in 0..self.layout.len() {
                    let d = self.layout.digit(i, p);
                    k += d * kplaces[p];
                    r += d * rplaces[p];
                }
                (k, r)
            })
            .collect()
    }

    /// Exhaustive measurement of `targets`; one entry per outcome tuple with
    /// nonzero probability, conditionals over the full layout.
    pub fn enumerate_branches(&self, targets: &[RegisterId]) -> Result<Vec<Branch>> {
        let Bipartition { kplaces: tplaces, ksize: tsize, .. } = self.bipartition(targets)?;
        let tpos: Vec<usize> = targets.iter().map(|&id| self.layout.position(id)).collect::<Result<_>>()?;
        let keys: Vec<usize> = (0..self.amplitudes.len())
            .map(|i| tpos.iter().map(|&p| self.layout.digit(i, p) * tplaces[p]).sum())
            .collect();
        let mut probs = vec![0.0; tsize];
        for (a, &k) in self.amplitudes.iter().zip(&keys) {
            probs[k] += a.norm_sqr();
        }
        let mut out = Vec::new();
        for (key, &prob) in probs.iter().enumerate() {
            if prob < ZERO_PROB {
                continue;
            }
            let amps = self.amplitudes.iter().zip(&keys).map(|(a, &k)| if k == key { *a } else { ZERO }).collect();
            let conditional = Self::from_amplitudes(self.layout.clone(), amps)?;
            out.push(Branch { outcomes: decode_mixed_radix(key, &tpos, &self.layout), prob, conditional });
        }
        Ok(out)
    }

    /// Measures every register not in `keep` and returns one branch per
    /// nonzero outcome, with the conditional state restricted to `keep`.
    /// Outcomes are listed in layout order of the measured registers.
    pub fn branches_keeping(&self, keep: &[RegisterId]) -> Result<Vec<Branch>> {
        if keep.is_empty() {
            return Err(Error::EmptyKeep);
        }
        let Bipartition { kplaces, rplaces, ksize, rsize, rest_pos } = self.bipartition(keep)?;
        let sub = self.layout.select(keep)?;
        let mut buckets = vec![ZERO; ksize * rsize];
        for (i, (k, r)) in self.split_indices(&kplaces, &rplaces).into_iter().enumerate() {
            buckets[r * ksize + k] = self.amplitudes[i];
        }
        let mut out = Vec::new();
        for (r, chunk) in buckets.chunks(ksize).enumerate() {
            let prob: f64 = chunk.iter().map(|z| z.norm_sqr()).sum();
            if prob < ZERO_PROB {
                continue;
            }
            let conditional = Self::from_amplitudes(sub.clone(), chunk.to_vec())?;
            out.push(Branch { outcomes: decode_mixed_radix(r, &rest_pos, &self.layout), prob, conditional });
        }
        Ok(out)
    }

    /// Partial trace over every register not in `keep`.
    pub fn reduced_density(&self, keep: &[RegisterId]) -> Result<DensityMatrix> {
        if keep.is_empty() {
            return Err(Error::EmptyKeep);
        }
        let Bipartition { kplaces, rplaces, ksize, rsize, .. } = self.bipartition(keep)?;
        let mut m = DMatrix::<C64>::zeros(ksize, rsize);
        for (i, (k, r)) in self.split_indices(&kplaces, &rplaces).into_iter().enumerate() {
            m[(k, r)] = self.amplitudes[i];
        }
        let dims = keep.iter().map(|&id| self.layout.register(id).map(|r| r.dim)).collect::<Result<_>>()?;
        Ok(DensityMatrix { dims, matrix: &m * m.adjoint() })
    }

    pub fn inner(&self, other: &PureState) -> Result<C64> {
        if self.layout != other.layout {
            return Err(Error::LayoutMismatch);
        }
        Ok(self.amplitudes.iter().zip(&other.amplitudes).map(|(a, b)| a.conj() * b).sum())
    }

    /// |<a|b>|^2, clamped to [0, 1].
    pub fn fidelity(&self, other: &PureState) -> Result<f64> {
        Ok(self.inner(other)?.norm_sqr().clamp(0.0, 1.0))
    }
}

fn decode_mixed_radix(mut key: usize, positions: &[usize], layout: &RegisterLayout) -> Vec<usize> {
    let mut out = vec![0; positions.len()];
    for (slot, &p) in positions.iter().enumerate().rev() {
        let d = layout.registers()[p].dim;
        out[slot] = key % d;
        key /= d;
    }
    out
}

/// Applies a `dim`x`dim` matrix to the register whose stride is `stride`.
fn apply_matrix_in_place(amps: &mut [C64], m: &DMatrix<C64>, stride: usize, dim: usize) {
    let block = dim * stride;
    let mut buf = vec![ZERO; dim];
    for outer in (0..amps.len()).step_by(block) {
        for inner in 0..stride {
            let base = outer + inner;
            for (j, b) in buf.iter_mut().enumerate() {
                *b = amps[base + j * stride];
            }
            for r in 0..dim {
                let mut acc = ZERO;
                for (c, b) in buf.iter().enumerate() {
                    acc += m[(r, c)] * b;
                }
                amps[base + r * stride] = acc;
            }
        }
    }
}
