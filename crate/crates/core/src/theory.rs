//! A finite, exactly computable instance of the scalar-statistic
//! non-identifiability argument: two alternatives that share the null's
//! statistic marginal, the resulting power = FPR table, and a second
//! statistic that tells the alternatives apart.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::error::check_dim;
use crate::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DiscreteDistribution {
    pub outcomes: Vec<String>,
    pub probs: Vec<f64>,
}

impl DiscreteDistribution {
    pub fn new(outcomes: Vec<String>, probs: Vec<f64>) -> Result<Self> {
        check_dim("distribution probabilities", outcomes.len(), probs.len())?;
        if outcomes.is_empty() {
            return Err(Error::invalid("distribution over an empty outcome set"));
        }
        if probs.iter().any(|p| !(*p >= 0.0) || !p.is_finite()) {
            return Err(Error::invalid("probabilities must be finite and non-negative"));
        }
        let total: f64 = probs.iter().sum();
        if (total - 1.0).abs() > 1e-12 {
            return Err(Error::invalid(format!("probabilities sum to {total}, not 1")));
        }
        Ok(DiscreteDistribution { outcomes, probs })
    }

    pub fn uniform(outcomes: Vec<String>) -> Result<Self> {
        let n = outcomes.len();
        Self::new(outcomes, vec![1.0 / n as f64; n])
    }

    pub fn len(&self) -> usize {
        self.probs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.probs.is_empty()
    }
}

/// Value of a statistic at each outcome, by outcome index.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StatisticMap {
    pub values: Vec<f64>,
}

impl StatisticMap {
    pub fn new(values: Vec<f64>) -> Result<Self> {
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::invalid("statistic values must be finite"));
        }
        Ok(StatisticMap { values })
    }

    /// `1[x = outcome]`.
    pub fn indicator(n: usize, outcome: usize) -> Self {
        StatisticMap {
            values: (0..n).map(|i| if i == outcome { 1.0 } else { 0.0 }).collect(),
        }
    }

    fn check(&self, d: &DiscreteDistribution) -> Result<()> {
        check_dim("statistic map", d.len(), self.values.len())
    }
}

/// Pushforward of a distribution; `values` ascending.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Marginal {
    pub values: Vec<f64>,
    pub probs: Vec<f64>,
}

#[derive(Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
struct Key(i64, u64);

fn key(v: f64) -> Key {
    // total order on finite floats with -0.0 folded into 0.0
    let v = if v == 0.0 { 0.0 } else { v };
    let bits = v.to_bits() as i64;
    Key(if bits < 0 { i64::MIN - bits } else { bits }, 0)
}

fn fibers(phi: &StatisticMap) -> BTreeMap<Key, (f64, Vec<usize>)> {
    let mut map: BTreeMap<Key, (f64, Vec<usize>)> = BTreeMap::new();
    for (i, &v) in phi.values.iter().enumerate() {
        map.entry(key(v)).or_insert_with(|| (v, Vec::new())).1.push(i);
    }
    map
}

pub fn statistic_marginal(d: &DiscreteDistribution, phi: &StatisticMap) -> Result<Marginal> {
    phi.check(d)?;
    let mut values = Vec::new();
    let mut probs = Vec::new();
    for (v, idx) in fibers(phi).into_values() {
        values.push(v);
        probs.push(idx.iter().map(|&i| d.probs[i]).sum());
    }
    Ok(Marginal { values, probs })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Counterexample {
    pub q1: DiscreteDistribution,
    pub q2: DiscreteDistribution,
    /// Statistic value of the re-weighted fiber.
    pub fiber_value: f64,
    /// Outcome indices whose mass moves.
    pub a: usize,
    pub b: usize,
    /// Null mass of the re-weighted fiber.
    pub fiber_mass: f64,
}

/// Takes the first fiber (in outcome order) holding two or more
/// positive-mass outcomes and moves `epsilon_mass` of its conditional mass
/// between the first two such outcomes: towards `a` in `q1`, towards `b` in
/// `q2`. Everything else, including the fiber's total mass, is unchanged.
pub fn build_counterexample(p: &DiscreteDistribution, phi: &StatisticMap, epsilon_mass: f64) -> Result<Counterexample> {
    phi.check(p)?;
    if !(epsilon_mass.is_finite() && epsilon_mass >= 0.0) {
        return Err(Error::invalid(format!("epsilon_mass must be non-negative, got {epsilon_mass}")));
    }
    let mut by_first: Vec<(f64, Vec<usize>)> = fibers(phi).into_values().collect();
    by_first.sort_by_key(|(_, idx)| idx[0]);
    let (fiber_value, idx) = by_first
        .into_iter()
        .find(|(_, idx)| idx.iter().filter(|&&i| p.probs[i] > 0.0).count() >= 2)
        .ok_or_else(|| {
            Error::invalid("no non-degenerate fiber: every level set has at most one positive-mass outcome")
        })?;
    let mut positive = idx.iter().copied().filter(|&i| p.probs[i] > 0.0);
    let (a, b) = (positive.next().unwrap(), positive.next().unwrap());
    let fiber_mass: f64 = idx.iter().map(|&i| p.probs[i]).sum();
    let (ca, cb) = (p.probs[a] / fiber_mass, p.probs[b] / fiber_mass);
    if epsilon_mass > ca.min(cb) || ca.max(cb) + epsilon_mass > 1.0 {
        return Err(Error::invalid(format!(
            "epsilon_mass {epsilon_mass} pushes a conditional outside [0, 1] on fiber {fiber_value}"
        )));
    }
    let delta = epsilon_mass * fiber_mass;
    let mut q1 = p.probs.clone();
    let mut q2 = p.probs.clone();
    q1[a] += delta;
    q1[b] -= delta;
    q2[a] -= delta;
    q2[b] += delta;
    if q1 == p.probs || q2 == p.probs {
        return Err(Error::invalid("construction leaves an alternative equal to the null (epsilon_mass too small)"));
    }
    Ok(Counterexample {
        q1: DiscreteDistribution { outcomes: p.outcomes.clone(), probs: q1 },
        q2: DiscreteDistribution { outcomes: p.outcomes.clone(), probs: q2 },
        fiber_value,
        a,
        b,
        fiber_mass,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PowerRow {
    pub tau: f64,
    pub fpr: f64,
    pub power: f64,
}

/// Exact rejection rates of the test "reject iff φ(x) < τ".
pub fn power_vs_fpr(
    null: &DiscreteDistribution,
    alt: &DiscreteDistribution,
    phi: &StatisticMap,
    thresholds: &[f64],
) -> Result<Vec<PowerRow>> {
    phi.check(null)?;
    phi.check(alt)?;
    let null_m = statistic_marginal(null, phi)?;
    let alt_m = statistic_marginal(alt, phi)?;
    let below = |m: &Marginal, tau: f64| -> f64 {
        m.values.iter().zip(&m.probs).filter(|(v, _)| **v < tau).fold(0.0, |acc, (_, p)| acc + p)
    };
    thresholds
        .iter()
        .map(|&tau| {
            if !tau.is_finite() {
                return Err(Error::invalid("thresholds must be finite"));
            }
            Ok(PowerRow { tau, fpr: below(&null_m, tau), power: below(&alt_m, tau) })
        })
        .collect()
}

/// Half-L1 distance between two distributions on the same outcomes.
pub fn total_variation(a: &DiscreteDistribution, b: &DiscreteDistribution) -> Result<f64> {
    check_dim("total variation", a.len(), b.len())?;
    Ok(0.5 * a.probs.iter().zip(&b.probs).map(|(x, y)| (x - y).abs()).sum::<f64>())
}

fn joint_pushforward(d: &DiscreteDistribution, phi: &StatisticMap, psi: &StatisticMap) -> BTreeMap<(Key, Key), f64> {
    let mut m = BTreeMap::new();
    for i in 0..d.len() {
        *m.entry((key(phi.values[i]), key(psi.values[i]))).or_insert(0.0) += d.probs[i];
    }
    m
}

/// Total variation between the `(φ, ψ)` pushforwards of `q1` and `q2`.
pub fn multi_statistic_separation(
    q1: &DiscreteDistribution,
    q2: &DiscreteDistribution,
    phi: &StatisticMap,
    psi: &StatisticMap,
) -> Result<f64> {
    for s in [phi, psi] {
        s.check(q1)?;
        s.check(q2)?;
    }
    let a = joint_pushforward(q1, phi, psi);
    let b = joint_pushforward(q2, phi, psi);
    let mut cells: Vec<_> = a.keys().chain(b.keys()).copied().collect();
    cells.sort();
    cells.dedup();
    Ok(0.5 * cells
        .iter()
        .map(|c| (a.get(c).unwrap_or(&0.0) - b.get(c).unwrap_or(&0.0)).abs())
        .sum::<f64>())
}

/// Single-outcome indicator with the largest separation (first on ties).
pub fn separating_indicator(
    q1: &DiscreteDistribution,
    q2: &DiscreteDistribution,
    phi: &StatisticMap,
) -> Result<Option<(usize, f64)>> {
    let mut best: Option<(usize, f64)> = None;
    for i in 0..q1.len() {
        let tv = multi_statistic_separation(q1, q2, phi, &StatisticMap::indicator(q1.len(), i))?;
        if tv > 0.0 && best.is_none_or(|(_, b)| tv > b) {
            best = Some((i, tv));
        }
    }
    Ok(best)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TheoryDemoParams {
    pub outcomes: Vec<String>,
    pub p: Vec<f64>,
    pub phi: Vec<f64>,
    pub epsilon_mass: f64,
    pub thresholds: Vec<f64>,
}

impl Default for TheoryDemoParams {
    fn default() -> Self {
        TheoryDemoParams {
            outcomes: ["a1", "a2", "b1", "b2"].map(String::from).to_vec(),
            p: vec![0.25; 4],
            phi: vec![0.0, 0.0, 1.0, 1.0],
            epsilon_mass: 0.25,
            thresholds: vec![-0.5, 0.0, 0.5, 1.0, 1.5],
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SeparatingStatistic {
    pub outcome: String,
    pub total_variation: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TheoryReport {
    pub params: TheoryDemoParams,
    pub p: DiscreteDistribution,
    pub q1: DiscreteDistribution,
    pub q2: DiscreteDistribution,
    pub marginal_p: Marginal,
    pub marginal_q1: Marginal,
    pub marginal_q2: Marginal,
    pub max_marginal_deviation: f64,
    pub power_q1: Vec<PowerRow>,
    pub power_q2: Vec<PowerRow>,
    pub max_power_fpr_deviation: f64,
    pub fiber_mass: f64,
    pub tv_q1_q2: f64,
    pub tv_expected: f64,
    pub separating_statistic: Option<SeparatingStatistic>,
}

pub fn run_demo(params: &TheoryDemoParams) -> Result<TheoryReport> {
    let p = DiscreteDistribution::new(params.outcomes.clone(), params.p.clone())?;
    let phi = StatisticMap::new(params.phi.clone())?;
    let ce = build_counterexample(&p, &phi, params.epsilon_mass)?;
    let marginal_p = statistic_marginal(&p, &phi)?;
    let marginal_q1 = statistic_marginal(&ce.q1, &phi)?;
    let marginal_q2 = statistic_marginal(&ce.q2, &phi)?;
    let max_marginal_deviation = marginal_p
        .probs
        .iter()
        .zip(&marginal_q1.probs)
        .zip(&marginal_q2.probs)
        .map(|((a, b), c)| (a - b).abs().max((a - c).abs()))
        .fold(0.0, f64::max);
    let power_q1 = power_vs_fpr(&p, &ce.q1, &phi, &params.thresholds)?;
    let power_q2 = power_vs_fpr(&p, &ce.q2, &phi, &params.thresholds)?;
    let max_power_fpr_deviation = power_q1
        .iter()
        .chain(&power_q2)
        .map(|r| (r.power - r.fpr).abs())
        .fold(0.0, f64::max);
    let tv_q1_q2 = total_variation(&ce.q1, &ce.q2)?;
    let separating_statistic = separating_indicator(&ce.q1, &ce.q2, &phi)?.map(|(i, tv)| SeparatingStatistic {
        outcome: p.outcomes[i].clone(),
        total_variation: tv,
    });
    Ok(TheoryReport {
        params: params.clone(),
        tv_expected: 2.0 * params.epsilon_mass * ce.fiber_mass,
        fiber_mass: ce.fiber_mass,
        p,
        q1: ce.q1,
        q2: ce.q2,
        marginal_p,
        marginal_q1,
        marginal_q2,
        max_marginal_deviation,
        power_q1,
        power_q2,
        max_power_fpr_deviation,
        tv_q1_q2,
        separating_statistic,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn four() -> (DiscreteDistribution, StatisticMap) {
        let p = DiscreteDistribution::uniform(["a1", "a2", "b1", "b2"].map(String::from).to_vec()).unwrap();
        (p, StatisticMap::new(vec![0.0, 0.0, 1.0, 1.0]).unwrap())
    }

    #[test]
    fn four_point_counterexample() {
        let (p, phi) = four();
        let ce = build_counterexample(&p, &phi, 0.25).unwrap();
        assert_eq!(ce.q1.probs, vec![0.375, 0.125, 0.25, 0.25]);
        assert_eq!(ce.q2.probs, vec![0.125, 0.375, 0.25, 0.25]);
        assert_eq!((ce.a, ce.b, ce.fiber_value, ce.fiber_mass), (0, 1, 0.0, 0.5));
    }

    #[test]
    fn injective_statistic_is_rejected() {
        let (p, _) = four();
        let phi = StatisticMap::new(vec![0.0, 1.0, 2.0, 3.0]).unwrap();
        let e = build_counterexample(&p, &phi, 0.1).unwrap_err().to_string();
        assert!(e.contains("no non-degenerate fiber"), "{e}");
    }

    #[test]
    fn zero_epsilon_is_rejected() {
        let (p, phi) = four();
        assert!(build_counterexample(&p, &phi, 0.0).is_err());
        assert!(build_counterexample(&p, &phi, 0.6).is_err());
    }

    #[test]
    fn marginals_agree() {
        let (p, phi) = four();
        let ce = build_counterexample(&p, &phi, 0.25).unwrap();
        for d in [&p, &ce.q1, &ce.q2] {
            let m = statistic_marginal(d, &phi).unwrap();
            assert_eq!(m.values, vec![0.0, 1.0]);
            assert_eq!(m.probs, vec![0.5, 0.5]);
        }
        let point = DiscreteDistribution::new(p.outcomes.clone(), vec![0.0, 0.0, 1.0, 0.0]).unwrap();
        assert_eq!(statistic_marginal(&point, &phi).unwrap().probs, vec![0.0, 1.0]);
        let constant = StatisticMap::new(vec![2.0; 4]).unwrap();
        assert_eq!(statistic_marginal(&p, &constant).unwrap().probs, vec![1.0]);
    }

    #[test]
    fn power_tables() {
        let (p, phi) = four();
        let ce = build_counterexample(&p, &phi, 0.25).unwrap();
        for alt in [&ce.q1, &ce.q2, &p] {
            for r in power_vs_fpr(&p, alt, &phi, &[-1.0, 0.0, 0.5, 1.0, 2.0]).unwrap() {
                assert_eq!(r.power, r.fpr);
            }
        }
        let low = DiscreteDistribution::new(vec!["z".into(), "y".into()], vec![0.5, 0.5]).unwrap();
        let null = DiscreteDistribution::new(vec!["z".into(), "y".into()], vec![0.0, 1.0]).unwrap();
        let phi2 = StatisticMap::new(vec![-5.0, 3.0]).unwrap();
        let alt_low = DiscreteDistribution::new(vec!["z".into(), "y".into()], vec![1.0, 0.0]).unwrap();
        let rows = power_vs_fpr(&null, &alt_low, &phi2, &[0.0]).unwrap();
        assert_eq!((rows[0].fpr, rows[0].power), (0.0, 1.0));
        assert!(power_vs_fpr(&low, &low, &phi2, &[f64::INFINITY]).is_err());
    }

    #[test]
    fn separation_examples() {
        let (p, phi) = four();
        let ce = build_counterexample(&p, &phi, 0.25).unwrap();
        let psi = StatisticMap::indicator(4, 0);
        assert_eq!(multi_statistic_separation(&ce.q1, &ce.q2, &phi, &psi).unwrap(), 0.25);
        let constant = StatisticMap::new(vec![7.0; 4]).unwrap();
        assert_eq!(multi_statistic_separation(&ce.q1, &ce.q2, &phi, &constant).unwrap(), 0.0);
        assert_eq!(multi_statistic_separation(&ce.q1, &ce.q2, &phi, &phi).unwrap(), 0.0);
        assert_eq!(separating_indicator(&ce.q1, &ce.q2, &phi).unwrap(), Some((0, 0.25)));
    }

    #[test]
    fn demo_report_is_exact() {
        let r = run_demo(&TheoryDemoParams::default()).unwrap();
        assert_eq!(r.max_marginal_deviation, 0.0);
        assert_eq!(r.max_power_fpr_deviation, 0.0);
        assert_eq!(r.tv_q1_q2, 0.25);
        assert_eq!(r.tv_expected, 0.25);
        assert_eq!(r.separating_statistic.unwrap().outcome, "a1");
    }

    fn random_instance() -> impl Strategy<Value = (Vec<f64>, Vec<u8>, f64)> {
        (3usize..9).prop_flat_map(|n| {
            (
                proptest::collection::vec(0.05f64..1.0, n),
                proptest::collection::vec(0u8..3, n),
                0.001f64..0.05,
            )
        })
    }

    proptest! {
        #[test]
        fn construction_invariants((w, fib, eps) in random_instance()) {
            let total: f64 = w.iter().sum();
            let probs: Vec<f64> = w.iter().map(|x| x / total).collect();
            let outcomes = (0..probs.len()).map(|i| format!("x{i}")).collect();
            let p = DiscreteDistribution::new(outcomes, probs).unwrap();
            let phi = StatisticMap::new(fib.iter().map(|&v| v as f64).collect()).unwrap();
            match build_counterexample(&p, &phi, eps) {
                Ok(ce) => {
                    let mp = statistic_marginal(&p, &phi).unwrap();
                    for q in [&ce.q1, &ce.q2] {
                        let mq = statistic_marginal(q, &phi).unwrap();
                        for (a, b) in mp.probs.iter().zip(&mq.probs) {
                            prop_assert!((a - b).abs() <= 1e-12);
                        }
                        for r in power_vs_fpr(&p, q, &phi, &[0.5, 1.5, 2.5]).unwrap() {
                            prop_assert!((r.power - r.fpr).abs() <= 1e-12);
                        }
                        prop_assert!(q.probs.iter().all(|x| *x >= 0.0));
                    }
                    let tv = total_variation(&ce.q1, &ce.q2).unwrap();
                    prop_assert!((tv - 2.0 * eps * ce.fiber_mass).abs() <= 1e-12);
                    prop_assert!(separating_indicator(&ce.q1, &ce.q2, &phi).unwrap().is_some());
                }
                Err(e) => {
                    // only the degenerate or over-large cases may fail
                    let msg = e.to_string();
                    prop_assert!(msg.contains("non-degenerate") || msg.contains("outside"), "{}", msg);
                }
            }
        }
    }
}
