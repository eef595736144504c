//! Protocol construction and execution.
//!
//! A protocol run prepares the spins in the caller's input, entangles the
//! pointer pairs, applies every t1 coupling, then every t2 coupling, reads
//! out all pointers and forms one mod-4 difference per link. Optionally a
//! correction table is consulted and per-site Pauli rotations are applied.
//!
//! Register ids are fixed: spin of site j (1-based) is `RegisterId(j - 1)`.
//! In full mode Q_j is `RegisterId(n + j - 1)` and Q'_j is
//! `RegisterId(2n + j - 1)`; in compact mode the difference register of
//! link j is `RegisterId(n + j - 1)`. Spins always come first in the layout.

use std::fmt;
use std::str::FromStr;

use nalgebra::DMatrix;
use num_complex::Complex64;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::corrections::CorrectionTable;
use crate::devices::{couple, difference_mod4, init_entangled_pair, PointerPair, Z4};
use crate::error::{Error, Result};
use crate::hilbert::{PauliAxis, PureState, RegisterId, RegisterLayout, Role, C64};

/// Largest n simulated with all 2n individual pointers (dimension 2^{5n}).
pub const FULL_MODE_MAX_N: usize = 4;
/// Largest n simulated with one difference register per link (dimension 2^{3n}).
pub const COMPACT_MODE_MAX_N: usize = 8;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Family {
    TwoWayVaa,
    Chain,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum EndLink {
    Z,
    X,
    Y,
    Auto,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SimMode {
    Full,
    Compact,
}

macro_rules! text_enum {
    ($ty:ident { $($variant:ident => $text:literal),+ $(,)? }) => {
        impl $ty {
            pub fn as_str(self) -> &'static str {
                match self { $($ty::$variant => $text),+ }
            }
        }

        impl fmt::Display for $ty {
            fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
                f.write_str(self.as_str())
            }
        }

        impl FromStr for $ty {
            type Err = Error;

            fn from_str(s: &str) -> Result<Self> {
                match s {
                    $($text => Ok($ty::$variant),)+
                    other => Err(Error::Parse(format!(concat!("unknown ", stringify!($ty), " '{}'"), other))),
                }
            }
        }
    };
}

text_enum!(Family { TwoWayVaa => "two-way-vaa", Chain => "chain" });
text_enum!(EndLink { Z => "z", X => "x", Y => "y", Auto => "auto" });
text_enum!(SimMode { Full => "full", Compact => "compact" });

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ProtocolSpec {
    pub n: usize,
    pub family: Family,
    pub end_link: EndLink,
    pub sim_mode: SimMode,
}

/// Identifies which protocol a correction table or report belongs to.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Fingerprint {
    pub n: usize,
    pub family: Family,
    pub end_link: PauliAxis,
}

impl fmt::Display for Fingerprint {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}/n={}/end={}", self.family, self.n, self.end_link)
    }
}

impl ProtocolSpec {
    pub fn new(n: usize, family: Family, end_link: EndLink, sim_mode: SimMode) -> Result<Self> {
        let spec = Self { n, family, end_link, sim_mode };
        spec.validate()?;
        Ok(spec)
    }

    pub fn chain(n: usize, end_link: EndLink) -> Result<Self> {
        Self::new(n, Family::Chain, end_link, SimMode::Full)
    }

    pub fn two_way() -> Self {
        Self { n: 2, family: Family::TwoWayVaa, end_link: EndLink::Auto, sim_mode: SimMode::Full }
    }

    pub fn with_mode(self, sim_mode: SimMode) -> Self {
        Self { sim_mode, ..self }
    }

    pub fn validate(&self) -> Result<()> {
        if self.n < 2 {
            return Err(Error::InvalidSpec(format!("n must be at least 2, got {}", self.n)));
        }
        if self.family == Family::TwoWayVaa && self.n != 2 {
            return Err(Error::InvalidSpec(format!("two-way-vaa requires n = 2, got {}", self.n)));
        }
        Ok(())
    }

    /// Errors with `SizeLimit` if the mode cannot hold `n` sites.
    pub fn check_size(&self) -> Result<()> {
        let limit = match self.sim_mode {
            SimMode::Full => FULL_MODE_MAX_N,
            SimMode::Compact => COMPACT_MODE_MAX_N,
        };
        if self.n > limit {
            return Err(Error::SizeLimit { n: self.n, mode: self.sim_mode.as_str(), limit });
        }
        Ok(())
    }

    /// Axis of the wrap-around link N -> 1. The two-way protocol always
    /// closes with the crossed y measurement.
    pub fn end_axis(&self) -> PauliAxis {
        match (self.family, self.end_link) {
            (Family::TwoWayVaa, _) => PauliAxis::Y,
            (_, EndLink::Z) => PauliAxis::Z,
            (_, EndLink::X) => PauliAxis::X,
            (_, EndLink::Y) => PauliAxis::Y,
            (_, EndLink::Auto) if self.n % 2 == 1 => PauliAxis::X,
            (_, EndLink::Auto) => PauliAxis::Y,
        }
    }

    /// Axis of link j (1-based): x for odd j < N, y for even j < N.
    pub fn link_axis(&self, j: usize) -> PauliAxis {
        if j == self.n {
            self.end_axis()
        } else if j % 2 == 1 {
            PauliAxis::X
        } else {
            PauliAxis::Y
        }
    }

    pub fn fingerprint(&self) -> Fingerprint {
        Fingerprint { n: self.n, family: self.family, end_link: self.end_axis() }
    }
}

pub fn spin_id(site: usize) -> RegisterId {
    RegisterId(site - 1)
}

pub fn spin_ids(n: usize) -> Vec<RegisterId> {
    (1..=n).map(spin_id).collect()
}

fn unprimed_id(n: usize, j: usize) -> RegisterId {
    RegisterId(n + j - 1)
}

fn primed_id(n: usize, j: usize) -> RegisterId {
    RegisterId(2 * n + j - 1)
}

fn difference_id(n: usize, j: usize) -> RegisterId {
    RegisterId(n + j - 1)
}

/// Site following `site` around the ring.
pub fn next_site(n: usize, site: usize) -> usize {
    site % n + 1
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Coupling {
    /// 1-based site index.
    pub site: usize,
    pub pointer: RegisterId,
    pub axis: PauliAxis,
    /// 1-based link index this coupling belongs to.
    pub link: usize,
}

/// The two interaction layers and readout of a protocol, in full mode.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Schedule {
    pub n: usize,
    pub layer_t1: Vec<Coupling>,
    pub layer_t2: Vec<Coupling>,
    pub links: Vec<PointerPair>,
    pub readout_order: Vec<RegisterId>,
}

impl Schedule {
    pub fn full_layout(&self) -> RegisterLayout {
        let n = self.n;
        let regs = (1..=n)
            .map(|j| (spin_id(j), Role::Spin))
            .chain((1..=n).map(|j| (unprimed_id(n, j), Role::Pointer)))
            .chain((1..=n).map(|j| (primed_id(n, j), Role::PointerPrimed)));
        RegisterLayout::new(regs).expect("register ids are distinct by construction")
    }

    pub fn compact_layout(&self) -> RegisterLayout {
        let n = self.n;
        let regs =
            (1..=n).map(|j| (spin_id(j), Role::Spin)).chain((1..=n).map(|j| (difference_id(n, j), Role::Difference)));
        RegisterLayout::new(regs).expect("register ids are distinct by construction")
    }

    /// Sites whose t1 and t2 couplings use the same axis.
    pub fn repeated_axis_sites(&self) -> Vec<usize> {
        (1..=self.n)
            .filter(|&s| {
                let a = self.layer_t1.iter().find(|c| c.site == s).map(|c| c.axis);
                let b = self.layer_t2.iter().find(|c| c.site == s).map(|c| c.axis);
                a == b
            })
            .collect()
    }

    /// Checks that each site is coupled exactly once per layer and that link
    /// j joins site j (t1) to site j+1 (t2).
    pub fn is_well_formed(&self) -> bool {
        let once = |layer: &[Coupling]| (1..=self.n).all(|s| layer.iter().filter(|c| c.site == s).count() == 1);
        once(&self.layer_t1)
            && once(&self.layer_t2)
            && self.layer_t1.len() + self.layer_t2.len() == 2 * self.n
            && self.links.iter().all(|l| {
                let t1 = self.layer_t1.iter().find(|c| c.link == l.link);
                let t2 = self.layer_t2.iter().find(|c| c.link == l.link);
                matches!((t1, t2), (Some(a), Some(b))
                    if a.site == l.link && b.site == next_site(self.n, l.link)
                    && a.axis == l.axis && b.axis == l.axis
                    && a.pointer == l.unprimed && b.pointer == l.primed)
            })
    }
}

pub fn build_schedule(spec: &ProtocolSpec) -> Result<Schedule> {
    spec.validate()?;
    let n = spec.n;
    let links: Vec<PointerPair> = (1..=n)
        .map(|j| PointerPair {
            link: j,
            unprimed: unprimed_id(n, j),
            primed: primed_id(n, next_site(n, j)),
            axis: spec.link_axis(j),
        })
        .collect();
    let layer_t1 =
        links.iter().map(|l| Coupling { site: l.link, pointer: l.unprimed, axis: l.axis, link: l.link }).collect();
    let mut layer_t2: Vec<Coupling> = links
        .iter()
        .map(|l| Coupling { site: next_site(n, l.link), pointer: l.primed, axis: l.axis, link: l.link })
        .collect();
    layer_t2.sort_by_key(|c| c.site);
    let readout_order = (1..=n).map(|j| unprimed_id(n, j)).chain((1..=n).map(|j| primed_id(n, j))).collect();
    Ok(Schedule { n, layer_t1, layer_t2, links, readout_order })
}

/// A single-spin state (unnormalized amplitudes are renormalized on use).
pub type Qubit = [C64; 2];

/// Spin inputs: either one state per site or a joint state over all spins.
#[derive(Clone, Debug, PartialEq)]
pub enum SpinInput {
    Product(Vec<Qubit>),
    Entangled(Vec<C64>),
}

impl SpinInput {
    pub fn n(&self) -> usize {
        match self {
            SpinInput::Product(v) => v.len(),
            SpinInput::Entangled(v) => v.len().trailing_zeros() as usize,
        }
    }

    pub fn spin_state(&self) -> Result<PureState> {
        let n = self.n();
        let layout = RegisterLayout::new(spin_ids(n).into_iter().map(|id| (id, Role::Spin)))?;
        match self {
            SpinInput::Product(qs) => {
                let factors: Vec<Vec<C64>> = qs.iter().map(|q| q.to_vec()).collect();
                PureState::product(layout, &factors)
            }
            SpinInput::Entangled(amps) => {
                if !amps.len().is_power_of_two() || amps.len() < 2 {
                    return Err(Error::DimensionMismatch { expected: 1 << n, found: amps.len() });
                }
                PureState::from_amplitudes(layout, amps.clone())
            }
        }
    }
}

fn check_input(spec: &ProtocolSpec, input: &SpinInput) -> Result<()> {
    if input.n() != spec.n {
        return Err(Error::DimensionMismatch { expected: spec.n, found: input.n() });
    }
    Ok(())
}

/// Target of the protocol: input of site j placed at site j+1 (mod n).
pub fn target_state(input: &SpinInput) -> Result<PureState> {
    match input {
        SpinInput::Product(qs) => {
            let mut rotated = qs.clone();
            rotated.rotate_right(1);
            SpinInput::Product(rotated).spin_state()
        }
        SpinInput::Entangled(_) => Ok(apply_cyclic_permutation(&input.spin_state()?)),
    }
}

/// Basis index of |b_n b_1 ... b_{n-1}> given that of |b_1 ... b_n>; bit
/// b_1 is the most significant.
fn cyclic_image(n: usize, index: usize) -> usize {
    let last = index & 1;
    (index >> 1) | (last << (n - 1))
}

/// The permutation unitary |b_1 ... b_n> -> |b_n b_1 ... b_{n-1}>.
pub fn cyclic_permutation_matrix(n: usize) -> DMatrix<C64> {
    let d = 1usize << n;
    let mut m = DMatrix::zeros(d, d);
    for b in 0..d {
        m[(cyclic_image(n, b), b)] = Complex64::new(1.0, 0.0);
    }
    m
}

/// Applies the cyclic permutation to a state over spin registers only.
pub fn apply_cyclic_permutation(state: &PureState) -> PureState {
    let n = state.layout().len();
    let mut out = vec![C64::new(0.0, 0.0); state.amplitudes().len()];
    for (b, a) in state.amplitudes().iter().enumerate() {
        out[cyclic_image(n, b)] = *a;
    }
    PureState::from_amplitudes(state.layout().clone(), out).expect("permutation preserves the norm")
}

/// Per-coupling eigenvalue signs used to project the evolution onto one
/// spin-observable history; `t1[j-1]`/`t2[j-1]` belong to link j.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct History {
    pub t1: Vec<bool>,
    pub t2: Vec<bool>,
}

impl History {
    pub fn all(n: usize) -> impl Iterator<Item = History> {
        (0..1usize << (2 * n)).map(move |bits| History {
            t1: (0..n).map(|k| bits >> (2 * n - 1 - k) & 1 == 0).collect(),
            t2: (0..n).map(|k| bits >> (n - 1 - k) & 1 == 0).collect(),
        })
    }
}

/// Full-mode evolution up to just before readout. With a history, the spin
/// is projected onto the recorded σ eigenvalue before every coupling;
/// `None` is returned when that history has zero weight.
pub fn evolve_full(spec: &ProtocolSpec, input: &SpinInput, history: Option<&History>) -> Result<Option<PureState>> {
    check_input(spec, input)?;
    let sched = build_schedule(spec)?;
    let layout = sched.full_layout();
    let spins = input.spin_state()?;
    let mut state = spins.tensor(&zero_pointers(&layout, spec.n)?)?;
    for pair in &sched.links {
        state = init_entangled_pair(&state, pair)?;
    }
    for (layer, couplings) in [(0, &sched.layer_t1), (1, &sched.layer_t2)] {
        for c in couplings.iter() {
            if let Some(h) = history {
                let sign = if layer == 0 { h.t1[c.link - 1] } else { h.t2[c.link - 1] };
                match state.project_eigen(spin_id(c.site), c.axis, sign)? {
                    Some((_, s)) => state = s,
                    None => return Ok(None),
                }
            }
            state = couple(&state, spin_id(c.site), c.pointer, c.axis)?;
        }
    }
    Ok(Some(state))
}

fn zero_pointers(layout: &RegisterLayout, n: usize) -> Result<PureState> {
    let regs: Vec<_> = layout.registers()[n..].iter().map(|r| (r.id, r.role)).collect();
    let sub = RegisterLayout::new(regs)?;
    let mut amps = vec![C64::new(0.0, 0.0); sub.total_dim()];
    amps[0] = C64::new(1.0, 0.0);
    PureState::from_amplitudes(sub, amps)
}

/// Compact-mode evolution: one Z4 difference register per link, shifted by
/// +σ at t1 and -σ at t2.
pub fn evolve_compact(spec: &ProtocolSpec, input: &SpinInput) -> Result<PureState> {
    check_input(spec, input)?;
    let sched = build_schedule(spec)?;
    let layout = sched.compact_layout();
    let spins = input.spin_state()?;
    let mut state = spins.tensor(&zero_pointers(&layout, spec.n)?)?;
    let n = spec.n;
    for c in &sched.layer_t1 {
        state = state.apply_controlled_shift(spin_id(c.site), c.axis, difference_id(n, c.link), 1)?;
    }
    for c in &sched.layer_t2 {
        state = state.apply_controlled_shift(spin_id(c.site), c.axis, difference_id(n, c.link), -1)?;
    }
    Ok(state)
}

/// Raw readouts and the per-link differences d_j = Q_j - Q'_{j+1} mod 4.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct OutcomeRecord {
    /// Unprimed pointer readouts Q_1..Q_n (full mode only).
    pub raw_q: Option<Vec<Z4>>,
    /// Primed pointer readouts Q'_1..Q'_n (full mode only).
    pub raw_q_prime: Option<Vec<Z4>>,
    pub differences: Vec<Z4>,
}

impl OutcomeRecord {
    pub fn from_full_readout(n: usize, readout: &[usize]) -> Self {
        let q: Vec<Z4> = readout[..n].iter().map(|&v| Z4::new(v as i64)).collect();
        let qp: Vec<Z4> = readout[n..2 * n].iter().map(|&v| Z4::new(v as i64)).collect();
        let differences = (1..=n).map(|j| difference_mod4(q[j - 1], qp[next_site(n, j) - 1])).collect();
        Self { raw_q: Some(q), raw_q_prime: Some(qp), differences }
    }

    pub fn from_compact_readout(readout: &[usize]) -> Self {
        Self { raw_q: None, raw_q_prime: None, differences: readout.iter().map(|&v| Z4::new(v as i64)).collect() }
    }

    pub fn has_even_support(&self) -> bool {
        self.differences.iter().all(|d| *d == Z4::ZERO || *d == Z4::TWO)
    }

    pub fn difference_values(&self) -> Vec<u8> {
        self.differences.iter().map(|d| d.value()).collect()
    }
}

#[derive(Clone, Debug)]
pub struct TrialResult {
    pub outcome: OutcomeRecord,
    /// Probability of the observed readout combination.
    pub prob: f64,
    pub spin_state_before_correction: PureState,
    pub spin_state_after_correction: Option<PureState>,
    pub fidelity_before: f64,
    pub fidelity_after: Option<f64>,
}

impl TrialResult {
    /// Corrected fidelity when a table was applied, raw fidelity otherwise.
    pub fn fidelity_to_target(&self) -> f64 {
        self.fidelity_after.unwrap_or(self.fidelity_before)
    }
}

fn finish(
    spec: &ProtocolSpec,
    input: &SpinInput,
    outcome: OutcomeRecord,
    prob: f64,
    spins: PureState,
    table: Option<&CorrectionTable>,
) -> Result<TrialResult> {
    if !outcome.has_even_support() {
        return Err(Error::OddDifference(outcome.difference_values()));
    }
    let target = target_state(input)?;
    let fidelity_before = spins.fidelity(&target)?;
    let (after, fidelity_after) = match table {
        Some(t) => {
            t.check_fingerprint(spec)?;
            let corrected = t.apply(&outcome.difference_values(), &spins)?;
            let f = corrected.fidelity(&target)?;
            (Some(corrected), Some(f))
        }
        None => (None, None),
    };
    Ok(TrialResult {
        outcome,
        prob,
        spin_state_before_correction: spins,
        spin_state_after_correction: after,
        fidelity_before,
        fidelity_after,
    })
}

/// One sampled run of the protocol. Dispatches to compact mode when the spec
/// asks for it.
pub fn run_trial<R: Rng + ?Sized>(
    spec: &ProtocolSpec,
    input: &SpinInput,
    rng: &mut R,
    table: Option<&CorrectionTable>,
) -> Result<TrialResult> {
    spec.check_size()?;
    if spec.sim_mode == SimMode::Compact {
        return run_compact(spec, input, rng, table);
    }
    let sched = build_schedule(spec)?;
    let mut state = evolve_full(spec, input, None)?.expect("no history projection");
    let mut prob = 1.0;
    let mut readout = Vec::with_capacity(2 * spec.n);
    for &id in &sched.readout_order {
        let (q, p, post) = state.measure(id, rng)?;
        prob *= p;
        readout.push((id, q));
        state = post;
    }
    let (_, spins) = state.condition_on(&readout)?;
    let values: Vec<usize> = readout.iter().map(|&(_, q)| q).collect();
    finish(spec, input, OutcomeRecord::from_full_readout(spec.n, &values), prob, spins, table)
}

/// Compact-mode trial: the difference registers are measured in link order.
pub fn run_compact<R: Rng + ?Sized>(
    spec: &ProtocolSpec,
    input: &SpinInput,
    rng: &mut R,
    table: Option<&CorrectionTable>,
) -> Result<TrialResult> {
    let spec = spec.with_mode(SimMode::Compact);
    spec.check_size()?;
    let mut state = evolve_compact(&spec, input)?;
    let mut prob = 1.0;
    let mut readout = Vec::with_capacity(spec.n);
    for j in 1..=spec.n {
        let id = difference_id(spec.n, j);
        let (d, p, post) = state.measure(id, rng)?;
        prob *= p;
        readout.push((id, d));
        state = post;
    }
    let (_, spins) = state.condition_on(&readout)?;
    let values: Vec<usize> = readout.iter().map(|&(_, d)| d).collect();
    finish(&spec, input, OutcomeRecord::from_compact_readout(&values), prob, spins, table)
}

/// One readout combination of an exhaustive enumeration.
#[derive(Clone, Debug)]
pub struct BranchReport {
    pub outcome: OutcomeRecord,
    pub prob: f64,
    pub conditional: PureState,
    pub fidelity_before: f64,
    pub fidelity_after: Option<f64>,
}

/// Every readout combination with nonzero probability.
pub fn enumerate_protocol_branches(
    spec: &ProtocolSpec,
    input: &SpinInput,
    table: Option<&CorrectionTable>,
) -> Result<Vec<BranchReport>> {
    spec.check_size()?;
    if let Some(t) = table {
        t.check_fingerprint(spec)?;
    }
    let state = match spec.sim_mode {
        SimMode::Full => evolve_full(spec, input, None)?.expect("no history projection"),
        SimMode::Compact => evolve_compact(spec, input)?,
    };
    let target = target_state(input)?;
    let branches = state.branches_keeping(&spin_ids(spec.n))?;
    branches
        .into_iter()
        .map(|b| {
            let outcome = match spec.sim_mode {
                SimMode::Full => OutcomeRecord::from_full_readout(spec.n, &b.outcomes),
                SimMode::Compact => OutcomeRecord::from_compact_readout(&b.outcomes),
            };
            let fidelity_before = b.conditional.fidelity(&target)?;
            let fidelity_after = match table {
                Some(t) => Some(t.apply(&outcome.difference_values(), &b.conditional)?.fidelity(&target)?),
                None => None,
            };
            Ok(BranchReport { outcome, prob: b.prob, conditional: b.conditional, fidelity_before, fidelity_after })
        })
        .collect()
}

/// Branches grouped by their difference vector.
#[derive(Clone, Debug)]
pub struct DifferenceClass {
    pub differences: Vec<u8>,
    pub prob: f64,
    /// Conditional spin state of the first readout in the class.
    pub conditional: PureState,
    /// Largest infidelity between readouts of the same class.
    pub spread: f64,
    pub readouts: usize,
}

pub fn difference_classes(branches: &[BranchReport]) -> Result<Vec<DifferenceClass>> {
    let mut classes: Vec<DifferenceClass> = Vec::new();
    for b in branches {
        let d = b.outcome.difference_values();
        match classes.iter_mut().find(|c| c.differences == d) {
            Some(c) => {
                c.prob += b.prob;
                c.spread = c.spread.max(1.0 - c.conditional.fidelity(&b.conditional)?);
                c.readouts += 1;
            }
            None => classes.push(DifferenceClass {
                differences: d,
                prob: b.prob,
                conditional: b.conditional.clone(),
                spread: 0.0,
                readouts: 1,
            }),
        }
    }
    classes.sort_by(|a, b| a.differences.cmp(&b.differences));
    Ok(classes)
}

/// Input-independent operator K_d of each difference class, assembled column
/// by column from computational-basis inputs. In full mode the canonical
/// readout Q_j = 0, Q'_{j+1} = -d_j is used and rescaled by 2^n so both modes
/// produce the same operators.
pub fn branch_kraus(spec: &ProtocolSpec) -> Result<Vec<(Vec<u8>, DMatrix<C64>)>> {
    spec.check_size()?;
    let n = spec.n;
    let dim = 1usize << n;
    let classes: Vec<Vec<u8>> = (0..1usize << n)
        .map(|bits| (0..n).map(|k| if bits >> (n - 1 - k) & 1 == 1 { 2 } else { 0 }).collect())
        .collect();
    let mut ops: Vec<DMatrix<C64>> = vec![DMatrix::zeros(dim, dim); classes.len()];
    for b in 0..dim {
        let mut amps = vec![C64::new(0.0, 0.0); dim];
        amps[b] = C64::new(1.0, 0.0);
        let input = SpinInput::Entangled(amps);
        let (state, scale) = match spec.sim_mode {
            SimMode::Full => (evolve_full(spec, &input, None)?.expect("no history projection"), (1u64 << n) as f64),
            SimMode::Compact => (evolve_compact(spec, &input)?, 1.0),
        };
        let pointer_dim = state.amplitudes().len() / dim;
        for (d, op) in classes.iter().zip(ops.iter_mut()) {
            let key = match spec.sim_mode {
                SimMode::Compact => d.iter().fold(0, |acc, &v| acc * 4 + v as usize),
                SimMode::Full => {
                    // digits: Q_1..Q_n = 0, then Q'_1..Q'_n with Q'_{j+1} = -d_j
                    let mut qp = vec![0usize; n];
                    for j in 1..=n {
                        qp[next_site(n, j) - 1] = Z4::new(-(d[j - 1] as i64)).value() as usize;
                    }
                    qp.iter().fold(0, |acc, &v| acc * 4 + v)
                }
            };
            for s in 0..dim {
                op[(s, b)] = state.amplitudes()[s * pointer_dim + key] * scale;
            }
        }
    }
    Ok(classes.into_iter().zip(ops).collect())
}

/// max |K^dag K / c - I| with c = tr(K^dag K) / dim; 0 means K is a
/// multiple of a unitary.
pub fn kraus_unitarity_deviation(k: &DMatrix<C64>) -> f64 {
    let g = k.adjoint() * k;
    let c = g.trace().re / g.nrows() as f64;
    if c <= 0.0 {
        return f64::INFINITY;
    }
    let id = DMatrix::<C64>::identity(g.nrows(), g.ncols());
    (g.unscale(c) - id).iter().map(|z| z.norm()).fold(0.0, f64::max)
}

/// |tr(U^dag K)|^2 / (dim · tr(K^dag K)); equals 1 iff K ∝ U (U unitary).
pub fn channel_fidelity(k: &DMatrix<C64>, u: &DMatrix<C64>) -> f64 {
    let norm = k.iter().map(|z| z.norm_sqr()).sum::<f64>();
    if norm == 0.0 {
        return 0.0;
    }
    let overlap: C64 = u.iter().zip(k.iter()).map(|(a, b)| a.conj() * b).sum();
    (overlap.norm_sqr() / (k.nrows() as f64 * norm)).clamp(0.0, 1.0)
}
