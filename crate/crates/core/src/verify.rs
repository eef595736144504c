//! Property checks: outcome support, no-signaling, full/compact agreement,
//! branch operator structure, sampling statistics and the pointer pairing
//! used for the link differences.

use std::collections::BTreeMap;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::devices::{difference_mod4, Z4};
use crate::error::{Error, Result};
use crate::hilbert::{DensityMatrix, PureState, RegisterId, ZERO_PROB};
use crate::protocol::{
    branch_kraus, channel_fidelity, cyclic_permutation_matrix, difference_classes, enumerate_protocol_branches,
    evolve_full, kraus_unitarity_deviation, next_site, run_trial, spin_id, spin_ids, Family, History, ProtocolSpec,
    SimMode, SpinInput,
};

/// Numerical tolerance for exact-equality properties of the simulation.
pub const TOLERANCE: f64 = 1e-10;

/// Tolerance for branch-operator proportionality checks.
pub const KRAUS_TOL: f64 = 1e-9;

#[derive(Clone, Debug, Serialize)]
pub struct NoSignalingReport {
    /// Site whose input differs between the two variants, if any.
    pub changed_site: Option<usize>,
    /// max over pointers and variants of the trace distance to I/4.
    pub max_pointer_marginal_deviation: f64,
    /// max over remote spins and all pointers of the trace distance between
    /// the two variants.
    pub max_remote_trace_distance: f64,
    pub pass: bool,
}

fn differing_sites(a: &[crate::protocol::Qubit], b: &[crate::protocol::Qubit]) -> Vec<usize> {
    a.iter()
        .zip(b)
        .enumerate()
        .filter(|(_, (x, y))| {
            let na = x[0].norm_sqr() + x[1].norm_sqr();
            let nb = y[0].norm_sqr() + y[1].norm_sqr();
            let ov = (x[0].conj() * y[0] + x[1].conj() * y[1]).norm_sqr() / (na * nb);
            ov < 1.0 - 1e-12
        })
        .map(|(k, _)| k + 1)
        .collect()
}

struct SiteView {
    pointer_states: Vec<(RegisterId, DensityMatrix)>,
    /// Outcome-averaged reduced state of each spin after readout.
    spin_states: Vec<DensityMatrix>,
}

fn pre_communication_view(spec: &ProtocolSpec, input: &SpinInput) -> Result<SiteView> {
    let state = evolve_full(spec, input, None)?.expect("no history projection");
    let n = spec.n;
    let pointer_states = state.layout().registers()[n..]
        .iter()
        .map(|r| Ok((r.id, state.reduced_density(&[r.id])?)))
        .collect::<Result<Vec<_>>>()?;
    let mut spin_states: Vec<DensityMatrix> =
        (0..n).map(|_| DensityMatrix { dims: vec![2], matrix: nalgebra::DMatrix::zeros(2, 2) }).collect();
    for b in state.branches_keeping(&spin_ids(n))? {
        for (site, acc) in spin_states.iter_mut().enumerate() {
            let rho = b.conditional.reduced_density(&[spin_id(site + 1)])?;
            acc.matrix += rho.matrix.scale(b.prob);
        }
    }
    Ok(SiteView { pointer_states, spin_states })
}

/// Compares two product inputs that differ at most at one site. Every other
/// site's outcome-averaged spin state and every pointer's state must be the
/// same for both, and every pointer must be maximally mixed.
pub fn check_no_signaling(spec: &ProtocolSpec, input_a: &SpinInput, input_b: &SpinInput) -> Result<NoSignalingReport> {
    let (SpinInput::Product(a), SpinInput::Product(b)) = (input_a, input_b) else {
        return Err(Error::InvalidSpec("no-signaling check needs product inputs".into()));
    };
    if a.len() != spec.n || b.len() != spec.n {
        return Err(Error::DimensionMismatch { expected: spec.n, found: a.len().min(b.len()) });
    }
    let diff = differing_sites(a, b);
    if diff.len() > 1 {
        return Err(Error::InputsDifferAtMultipleSites(diff));
    }
    let changed_site = diff.first().copied();
    let spec = spec.with_mode(SimMode::Full);
    spec.check_size()?;
    let va = pre_communication_view(&spec, input_a)?;
    let vb = pre_communication_view(&spec, input_b)?;

    let uniform = DensityMatrix::maximally_mixed(vec![4]);
    let mut marginal: f64 = 0.0;
    let mut remote: f64 = 0.0;
    for ((_, ra), (_, rb)) in va.pointer_states.iter().zip(&vb.pointer_states) {
        marginal = marginal.max(ra.trace_distance(&uniform)?).max(rb.trace_distance(&uniform)?);
        remote = remote.max(ra.trace_distance(rb)?);
    }
    for site in 1..=spec.n {
        if Some(site) == changed_site {
            continue;
        }
        remote = remote.max(va.spin_states[site - 1].trace_distance(&vb.spin_states[site - 1])?);
    }
    Ok(NoSignalingReport {
        changed_site,
        max_pointer_marginal_deviation: marginal,
        max_remote_trace_distance: remote,
        pass: marginal < TOLERANCE && remote < TOLERANCE,
    })
}

/// True iff every enumerated branch has all d_j in {0, 2}.
pub fn check_outcome_support(spec: &ProtocolSpec, input: &SpinInput) -> Result<bool> {
    Ok(enumerate_protocol_branches(spec, input, None)?.iter().all(|b| b.outcome.has_even_support()))
}

/// Largest disagreement between full and compact simulation over difference
/// class probabilities and conditional spin states (as infidelity). Also
/// covers disagreement between readouts of the same class in full mode.
pub fn cross_check_modes(spec: &ProtocolSpec, input: &SpinInput) -> Result<f64> {
    let full = difference_classes(&enumerate_protocol_branches(&spec.with_mode(SimMode::Full), input, None)?)?;
    let compact = difference_classes(&enumerate_protocol_branches(&spec.with_mode(SimMode::Compact), input, None)?)?;
    let mut worst: f64 = 0.0;
    for c in &full {
        worst = worst.max(c.spread);
        match compact.iter().find(|k| k.differences == c.differences) {
            Some(k) => {
                worst = worst.max((c.prob - k.prob).abs());
                worst = worst.max(1.0 - c.conditional.fidelity(&k.conditional)?);
            }
            None => worst = worst.max(c.prob),
        }
    }
    for k in &compact {
        if !full.iter().any(|c| c.differences == k.differences) {
            worst = worst.max(k.prob);
        }
    }
    Ok(worst)
}

#[derive(Clone, Debug, Serialize)]
pub struct KrausClass {
    pub differences: Vec<u8>,
    /// tr(K^dag K) / 2^n: the class probability for every input when K is
    /// proportional to a unitary.
    pub weight: f64,
    pub unitarity_deviation: f64,
    /// Channel fidelity of K with the cyclic permutation.
    pub cyclic_fidelity: f64,
}

pub fn check_branch_kraus(spec: &ProtocolSpec) -> Result<Vec<KrausClass>> {
    let c = cyclic_permutation_matrix(spec.n);
    let dim = (1u64 << spec.n) as f64;
    Ok(branch_kraus(spec)?
        .into_iter()
        .map(|(d, k)| KrausClass {
            weight: k.iter().map(|z| z.norm_sqr()).sum::<f64>() / dim,
            unitarity_deviation: kraus_unitarity_deviation(&k),
            cyclic_fidelity: channel_fidelity(&k, &c),
            differences: d,
        })
        .collect())
}

#[derive(Clone, Debug, Serialize)]
pub struct OutcomeHistogram {
    pub seed: u64,
    pub trials: u64,
    pub counts: BTreeMap<String, u64>,
    /// Enumerated class probabilities, when the spec is enumerable.
    pub expected: Option<BTreeMap<String, f64>>,
    pub chi_square: Option<f64>,
    pub degrees_of_freedom: Option<usize>,
    /// Largest |count - T p| / sqrt(T p (1 - p)) over classes.
    pub max_sigma: Option<f64>,
}

pub fn difference_key(d: &[u8]) -> String {
    d.iter().map(|v| v.to_string()).collect::<Vec<_>>().join(",")
}

/// Seeded sampling of difference vectors, compared against enumeration.
pub fn outcome_statistics(spec: &ProtocolSpec, input: &SpinInput, trials: u64, seed: u64) -> Result<OutcomeHistogram> {
    if trials == 0 {
        return Err(Error::InvalidSpec("trials must be at least 1".into()));
    }
    spec.check_size()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut counts: BTreeMap<String, u64> = BTreeMap::new();
    for _ in 0..trials {
        let t = run_trial(spec, input, &mut rng, None)?;
        *counts.entry(difference_key(&t.outcome.difference_values())).or_default() += 1;
    }
    let classes = difference_classes(&enumerate_protocol_branches(spec, input, None)?)?;
    let expected: BTreeMap<String, f64> = classes.iter().map(|c| (difference_key(&c.differences), c.prob)).collect();
    let total = trials as f64;
    let mut chi = 0.0;
    let mut sigma: f64 = 0.0;
    for (key, &p) in &expected {
        let observed = counts.get(key).copied().unwrap_or(0) as f64;
        let mean = total * p;
        chi += (observed - mean).powi(2) / mean;
        let sd = (total * p * (1.0 - p)).sqrt();
        let dev = (observed - mean).abs();
        sigma = sigma.max(if sd > 0.0 {
            dev / sd
        } else if dev > 0.5 {
            f64::INFINITY
        } else {
            0.0
        });
    }
    for (key, &c) in &counts {
        if !expected.contains_key(key) && c > 0 {
            sigma = f64::INFINITY;
            chi = f64::INFINITY;
        }
    }
    Ok(OutcomeHistogram {
        seed,
        trials,
        counts,
        degrees_of_freedom: Some(expected.len().saturating_sub(1)),
        expected: Some(expected),
        chi_square: Some(chi),
        max_sigma: Some(sigma),
    })
}

/// A mod-4 combination of two pointer readouts.
#[derive(Clone, Debug, Serialize)]
pub struct PointerCombination {
    pub label: String,
    /// Index into the readout vector (Q_1..Q_n, Q'_1..Q'_n) of the minuend.
    pub minuend: usize,
    pub subtrahend: usize,
    /// Link whose spin eigenvalues this combination should reproduce.
    pub link: usize,
}

#[derive(Clone, Debug, Serialize)]
pub struct CombinationFinding {
    pub label: String,
    pub link: usize,
    /// Single-valued within every eigenvalue history.
    pub deterministic: bool,
    /// Equals the t1 eigenvalue minus the t2 eigenvalue of the link, mod 4,
    /// in every history.
    pub matches_spin_difference: bool,
    pub values_seen: Vec<u8>,
}

#[derive(Clone, Debug, Serialize)]
pub struct PairingReport {
    pub histories_checked: usize,
    /// Q_j - Q'_{j+1} for every link.
    pub paired: Vec<CombinationFinding>,
    /// Combinations as printed in the literal outcome formula where they
    /// differ from the pairing (even chain links below N; the two-way y link).
    pub literal: Vec<CombinationFinding>,
}

fn q_index(_n: usize, site: usize) -> usize {
    site - 1
}

fn q_prime_index(n: usize, site: usize) -> usize {
    n + site - 1
}

pub fn paired_combinations(spec: &ProtocolSpec) -> Vec<PointerCombination> {
    let n = spec.n;
    (1..=n)
        .map(|j| PointerCombination {
            label: format!("Q{j} - Q'{}", next_site(n, j)),
            minuend: q_index(n, j),
            subtrahend: q_prime_index(n, next_site(n, j)),
            link: j,
        })
        .collect()
}

pub fn literal_combinations(spec: &ProtocolSpec) -> Vec<PointerCombination> {
    let n = spec.n;
    match spec.family {
        Family::TwoWayVaa => vec![PointerCombination {
            label: "Q'1 - Q2".into(),
            minuend: q_prime_index(n, 1),
            subtrahend: q_index(n, 2),
            link: 2,
        }],
        Family::Chain => (2..n)
            .step_by(2)
            .map(|k| PointerCombination {
                label: format!("Q'{k} - Q{}", k + 1),
                minuend: q_prime_index(n, k),
                subtrahend: q_index(n, k + 1),
                link: k,
            })
            .collect(),
    }
}

/// Projects the evolution onto every history of spin eigenvalues at the 2n
/// couplings and checks which pointer combinations are single-valued and
/// equal to the corresponding eigenvalue difference.
pub fn resolve_difference_pairing(spec: &ProtocolSpec, input: &SpinInput) -> Result<PairingReport> {
    let spec = spec.with_mode(SimMode::Full);
    spec.check_size()?;
    let n = spec.n;
    let paired = paired_combinations(&spec);
    let literal = literal_combinations(&spec);
    let all: Vec<&PointerCombination> = paired.iter().chain(&literal).collect();
    let mut det = vec![true; all.len()];
    let mut matches = vec![true; all.len()];
    let mut seen: Vec<Vec<u8>> = vec![Vec::new(); all.len()];
    let mut histories = 0;
    for h in History::all(n) {
        let Some(state) = evolve_full(&spec, input, Some(&h))? else { continue };
        histories += 1;
        let branches = state.branches_keeping(&spin_ids(n))?;
        for (k, comb) in all.iter().enumerate() {
            let eig = |positive: bool| if positive { 1 } else { -1 };
            let expected = Z4::new(eig(h.t1[comb.link - 1]) - eig(h.t2[comb.link - 1]));
            let mut values: Vec<u8> = Vec::new();
            for b in branches.iter().filter(|b| b.prob > ZERO_PROB) {
                let v = difference_mod4(
                    Z4::new(b.outcomes[comb.minuend] as i64),
                    Z4::new(b.outcomes[comb.subtrahend] as i64),
                );
                if !values.contains(&v.value()) {
                    values.push(v.value());
                }
                if v != expected {
                    matches[k] = false;
                }
            }
            if values.len() > 1 {
                det[k] = false;
            }
            for v in values {
                if !seen[k].contains(&v) {
                    seen[k].push(v);
                }
            }
        }
    }
    let finding = |k: usize, c: &PointerCombination| {
        let mut values = seen[k].clone();
        values.sort_unstable();
        CombinationFinding {
            label: c.label.clone(),
            link: c.link,
            deterministic: det[k],
            matches_spin_difference: matches[k],
            values_seen: values,
        }
    };
    Ok(PairingReport {
        histories_checked: histories,
        paired: paired.iter().enumerate().map(|(k, c)| finding(k, c)).collect(),
        literal: literal.iter().enumerate().map(|(k, c)| finding(paired.len() + k, c)).collect(),
    })
}

/// Reduced state of one site from a spins-only state (helper for reports).
pub fn site_state(spins: &PureState, site: usize) -> Result<DensityMatrix> {
    spins.reduced_density(&[spin_id(site)])
}
