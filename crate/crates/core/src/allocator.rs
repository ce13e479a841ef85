//! Joint bandwidth/power allocation maximizing the total value of
//! information `sum_j xi_j * R_j(B_j, P_j) / L_j` over a transmitter's links.
//!
//! Each per-link rate is concave and degree-1 homogeneous in `(B_j, P_j)`,
//! so the objective is concave over the two budget simplices and the
//! maximizer frequently sits on a vertex (everything on one link). The
//! importance-proportional split is provided as its own strategy; it is
//! optimal only for symmetric channels.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::channel::{LinkState, ResourceAllocation};
use crate::error::{Error, Result};

/// Entries below this fraction of their budget are snapped to zero and the
/// link is treated as inactive.
pub const ZERO_ALLOCATION_FRACTION: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AllocationProblem {
    /// Bits of KL importance per recipient.
    pub importances: Vec<f64>,
    /// Message size in bits per recipient transmission.
    pub message_bits: Vec<f64>,
    pub links: Vec<LinkState>,
    pub bandwidth_budget: f64,
    pub power_budget: f64,
}

impl AllocationProblem {
    pub fn new(
        importances: Vec<f64>,
        message_bits: Vec<f64>,
        links: Vec<LinkState>,
        bandwidth_budget: f64,
        power_budget: f64,
    ) -> Result<Self> {
        let n = importances.len();
        if n == 0 {
            return Err(Error::Domain("allocation problem needs at least one link".into()));
        }
        if message_bits.len() != n || links.len() != n {
            return Err(Error::Domain(format!(
                "allocation problem vectors disagree: {n} importances, {} sizes, {} links",
                message_bits.len(),
                links.len()
            )));
        }
        if importances.iter().any(|x| !x.is_finite() || *x < 0.0) {
            return Err(Error::Domain("importances must be finite and >= 0".into()));
        }
        if message_bits.iter().any(|l| !(*l > 0.0)) {
            return Err(Error::Domain("message sizes must be > 0".into()));
        }
        if !(bandwidth_budget > 0.0 && power_budget > 0.0) {
            return Err(Error::Domain(format!(
                "budgets must be > 0 (bandwidth {bandwidth_budget}, power {power_budget})"
            )));
        }
        Ok(Self {
            importances,
            message_bits,
            links,
            bandwidth_budget,
            power_budget,
        })
    }

    pub fn len(&self) -> usize {
        self.importances.len()
    }

    pub fn is_empty(&self) -> bool {
        self.importances.is_empty()
    }

    fn weight(&self, j: usize) -> f64 {
        self.importances[j] / self.message_bits[j]
    }

    /// Objective at budget fractions `(u, v)` without feasibility checks.
    fn objective_fractions(&self, u: &[f64], v: &[f64]) -> f64 {
        (0..self.len())
            .map(|j| {
                self.weight(j)
                    * self.links[j].rate(u[j] * self.bandwidth_budget, v[j] * self.power_budget)
            })
            .sum()
    }

    fn allocation_from_fractions(&self, u: &[f64], v: &[f64]) -> ResourceAllocation {
        let snap = |x: f64| if x < ZERO_ALLOCATION_FRACTION { 0.0 } else { x };
        ResourceAllocation {
            bandwidth: u.iter().map(|&x| snap(x) * self.bandwidth_budget).collect(),
            power: v.iter().map(|&x| snap(x) * self.power_budget).collect(),
            bandwidth_budget: self.bandwidth_budget,
            power_budget: self.power_budget,
        }
    }
}

/// Total VoI in bits/s of a feasible allocation; zero-rate links add nothing.
pub fn total_voi(problem: &AllocationProblem, alloc: &ResourceAllocation) -> Result<f64> {
    alloc.validate()?;
    if alloc.len() != problem.len() {
        return Err(Error::Domain(format!(
            "allocation covers {} links, problem has {}",
            alloc.len(),
            problem.len()
        )));
    }
    if alloc.bandwidth_budget > problem.bandwidth_budget * (1.0 + 1e-12)
        || alloc.power_budget > problem.power_budget * (1.0 + 1e-12)
    {
        return Err(Error::Domain("allocation budgets exceed the problem budgets".into()));
    }
    Ok((0..problem.len())
        .map(|j| problem.weight(j) * problem.links[j].rate(alloc.bandwidth[j], alloc.power[j]))
        .sum())
}

pub fn allocate_equal(problem: &AllocationProblem) -> ResourceAllocation {
    let n = problem.len() as f64;
    ResourceAllocation {
        bandwidth: vec![problem.bandwidth_budget / n; problem.len()],
        power: vec![problem.power_budget / n; problem.len()],
        bandwidth_budget: problem.bandwidth_budget,
        power_budget: problem.power_budget,
    }
}

/// Budgets split in proportion to importance; equal split if all
/// importances are zero.
pub fn allocate_proportional(problem: &AllocationProblem) -> ResourceAllocation {
    let total: f64 = problem.importances.iter().sum();
    if total <= 0.0 {
        return allocate_equal(problem);
    }
    ResourceAllocation {
        bandwidth: problem
            .importances
            .iter()
            .map(|x| problem.bandwidth_budget * x / total)
            .collect(),
        power: problem
            .importances
            .iter()
            .map(|x| problem.power_budget * x / total)
            .collect(),
        bandwidth_budget: problem.bandwidth_budget,
        power_budget: problem.power_budget,
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SolverOptions {
    pub max_iters: usize,
    /// Relative objective tolerance used for the convergence test.
    pub tolerance: f64,
    /// Extra random interior starts on top of the deterministic ones.
    pub random_starts: usize,
    pub seed: u64,
}

impl Default for SolverOptions {
    fn default() -> Self {
        Self {
            max_iters: 500,
            tolerance: 1e-9,
            random_starts: 2,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct OptimalAllocation {
    pub allocation: ResourceAllocation,
    pub objective: f64,
    /// False if the best start hit `max_iters` before converging.
    pub converged: bool,
}

/// Euclidean projection onto `{x >= 0, sum x = 1}`.
pub(crate) fn project_simplex(y: &[f64]) -> Vec<f64> {
    let mut sorted = y.to_vec();
    sorted.sort_by(|a, b| b.total_cmp(a));
    let mut cumsum = 0.0;
    let mut theta = 0.0;
    for (i, &s) in sorted.iter().enumerate() {
        cumsum += s;
        let t = (cumsum - 1.0) / (i + 1) as f64;
        if s - t > 0.0 {
            theta = t;
        }
    }
    let mut x: Vec<f64> = y.iter().map(|&v| (v - theta).max(0.0)).collect();
    let total: f64 = x.iter().sum();
    if total > 0.0 {
        x.iter_mut().for_each(|v| *v /= total);
    }
    x
}

/// Partial derivatives of one link's rate with respect to bandwidth and
/// power. Bandwidth is floored to keep the log term finite at the boundary.
fn rate_partials(link: &LinkState, bandwidth: f64, power: f64, bandwidth_floor: f64) -> (f64, f64) {
    let gain = 10f64.powf(link.path_loss() / 10.0);
    let noise = gain * link.noise_density;
    let b = bandwidth.max(bandwidth_floor);
    let ln2 = std::f64::consts::LN_2;
    let denom = noise * b + power;
    let d_power = bandwidth / ((noise * bandwidth + power).max(f64::MIN_POSITIVE) * ln2);
    let d_bandwidth = if power <= 0.0 {
        0.0
    } else {
        (power / (noise * b)).ln_1p() / ln2 - power / (denom * ln2)
    };
    (d_bandwidth, d_power)
}

struct Ascent {
    u: Vec<f64>,
    v: Vec<f64>,
    converged: bool,
}

fn projected_ascent(problem: &AllocationProblem, u0: Vec<f64>, v0: Vec<f64>, opts: &SolverOptions) -> Ascent {
    let n = problem.len();
    let (bb, pb) = (problem.bandwidth_budget, problem.power_budget);
    let floor = ZERO_ALLOCATION_FRACTION * bb;
    let mut u = project_simplex(&u0);
    let mut v = project_simplex(&v0);
    let mut value = problem.objective_fractions(&u, &v);
    let mut step = f64::NAN;
    let mut converged = false;

    for _ in 0..opts.max_iters {
        let mut gu = vec![0.0; n];
        let mut gv = vec![0.0; n];
        for j in 0..n {
            let w = problem.weight(j);
            let (db, dp) = rate_partials(&problem.links[j], u[j] * bb, v[j] * pb, floor);
            gu[j] = w * db * bb;
            gv[j] = w * dp * pb;
        }
        let gmax = gu.iter().chain(&gv).fold(0.0f64, |m, g| m.max(g.abs()));
        if gmax == 0.0 {
            converged = true;
            break;
        }
        if !step.is_finite() {
            step = 0.5 / gmax;
        }
        let mut accepted = None;
        while step * gmax > 1e-16 {
            let cu = project_simplex(&u.iter().zip(&gu).map(|(x, g)| x + step * g).collect::<Vec<_>>());
            let cv = project_simplex(&v.iter().zip(&gv).map(|(x, g)| x + step * g).collect::<Vec<_>>());
            let cand = problem.objective_fractions(&cu, &cv);
            let predicted: f64 = (0..n)
                .map(|j| gu[j] * (cu[j] - u[j]) + gv[j] * (cv[j] - v[j]))
                .sum();
            if cand >= value + 1e-4 * predicted && cand.is_finite() {
                accepted = Some((cu, cv, cand));
                break;
            }
            step *= 0.5;
        }
        let Some((cu, cv, cand)) = accepted else {
            converged = true;
            break;
        };
        let moved = (0..n).fold(0.0f64, |m, j| m.max((cu[j] - u[j]).abs()).max((cv[j] - v[j]).abs()));
        let gain = cand - value;
        u = cu;
        v = cv;
        value = cand;
        if moved < 1e-12 || gain <= opts.tolerance * 1e-3 * value.abs() {
            converged = true;
            break;
        }
        step *= 2.0;
    }
    Ascent { u, v, converged }
}

/// Multi-start projected gradient ascent on the budget-fraction simplices.
///
/// Starts: equal split, importance-proportional split, every single-link
/// concentration vertex, and `random_starts` seeded interior points. The
/// returned objective is never below that of [`allocate_equal`] or
/// [`allocate_proportional`] since both are candidates themselves.
pub fn allocate_optimal(problem: &AllocationProblem, opts: &SolverOptions) -> OptimalAllocation {
    let n = problem.len();
    let equal = vec![1.0 / n as f64; n];
    let total: f64 = problem.importances.iter().sum();
    let proportional: Vec<f64> = if total > 0.0 {
        problem.importances.iter().map(|x| x / total).collect()
    } else {
        equal.clone()
    };
    let mut starts = vec![equal.clone(), proportional.clone()];
    for k in 0..n {
        let mut e = vec![0.0; n];
        e[k] = 1.0;
        starts.push(e);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
    for _ in 0..opts.random_starts {
        let raw: Vec<f64> = (0..n).map(|_| -rng.gen_range(1e-12f64..1.0).ln()).collect();
        let s: f64 = raw.iter().sum();
        starts.push(raw.iter().map(|x| x / s).collect());
    }

    let mut best: Option<(ResourceAllocation, f64, bool)> = None;
    let mut consider = |alloc: ResourceAllocation, converged: bool| {
        let value = total_voi(problem, &alloc).unwrap_or(f64::NEG_INFINITY);
        if best.as_ref().is_none_or(|(_, b, _)| value > *b) {
            best = Some((alloc, value, converged));
        }
    };
    consider(allocate_equal(problem), true);
    consider(allocate_proportional(problem), true);
    for s in &starts {
        let run = projected_ascent(problem, s.clone(), s.clone(), opts);
        consider(problem.allocation_from_fractions(&run.u, &run.v), run.converged);
    }
    let (allocation, objective, converged) = best.expect("at least one candidate");
    OptimalAllocation {
        allocation,
        objective,
        converged,
    }
}

/// Stationarity equations to check against.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum KktVariant {
    /// `(xi/L)(log2(1+g) - g/(1+g)) = lambda` and
    /// `xi g B / (L P (1+g)) = mu`, exactly as commonly stated.
    #[default]
    AsPrinted,
    /// Same equations with the `1/ln 2` factors that come from
    /// differentiating `log2`.
    Ln2Corrected,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LinkActivity {
    Interior,
    /// The link holds the entire bandwidth or power budget.
    BoundaryActive,
    /// Zero bandwidth or power; excluded from the multiplier fit.
    Inactive,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KktDiagnostics {
    /// Per-link SNR `P / (10^(PL/10) B N0)`; `None` for inactive links.
    pub snr: Vec<Option<f64>>,
    /// Multiplier fitted to the bandwidth-derivative equation.
    pub lambda_multiplier: f64,
    /// Multiplier fitted to the power-derivative equation.
    pub mu_multiplier: f64,
    pub residuals: Vec<f64>,
    pub activity: Vec<LinkActivity>,
}

impl KktDiagnostics {
    pub fn max_residual(&self) -> f64 {
        self.residuals.iter().copied().fold(0.0, f64::max)
    }
}

/// Evaluates the per-link stationarity equations at `alloc`.
///
/// The two multipliers are fitted by least squares across active links
/// (the mean of each equation's left-hand side); each link's residual is the
/// larger of its two absolute deviations from the fitted values.
pub fn kkt_residuals(
    problem: &AllocationProblem,
    alloc: &ResourceAllocation,
    variant: KktVariant,
) -> Result<KktDiagnostics> {
    if alloc.len() != problem.len() {
        return Err(Error::Domain("allocation and problem sizes differ".into()));
    }
    let n = problem.len();
    let ln2_div = match variant {
        KktVariant::AsPrinted => 1.0,
        KktVariant::Ln2Corrected => std::f64::consts::LN_2,
    };
    let mut snr = vec![None; n];
    let mut activity = vec![LinkActivity::Inactive; n];
    let mut lhs = vec![(0.0, 0.0); n];
    for j in 0..n {
        let (b, p) = (alloc.bandwidth[j], alloc.power[j]);
        if b <= ZERO_ALLOCATION_FRACTION * problem.bandwidth_budget
            || p <= ZERO_ALLOCATION_FRACTION * problem.power_budget
        {
            continue;
        }
        let link = &problem.links[j];
        let gain = 10f64.powf(link.path_loss() / 10.0);
        let g = p / (gain * b * link.noise_density);
        let w = problem.weight(j);
        let a = w * ((1.0 + g).log2() -g / ((1.0 + g) * ln2_div));
        let m = w * g * b / (p * (1.0 + g) * ln2_div);
        snr[j] = Some(g);
        lhs[j] = (a, m);
        let full = 1.0 - ZERO_ALLOCATION_FRACTION;
        activity[j] = if b >= full * problem.bandwidth_budget || p >= full * problem.power_budget {
            LinkActivity::BoundaryActive
        } else {
            LinkActivity::Interior
        };
    }
    let active: Vec<usize> = (0..n).filter(|&j| activity[j] != LinkActivity::Inactive).collect();
    let count = active.len().max(1) as f64;
    let lambda_multiplier = active.iter().map(|&j| lhs[j].0).sum::<f64>() / count;
    let mu_multiplier = active.iter().map(|&j| lhs[j].1).sum::<f64>() / count;
    let residuals = (0..n)
        .map(|j| {
            if activity[j] == LinkActivity::Inactive {
                0.0
            } else {
                (lhs[j].0 - lambda_multiplier)
                    .abs()
                    .max((lhs[j].1 - mu_multiplier).abs())
            }
        })
        .collect();
    Ok(KktDiagnostics {
        snr,
        lambda_multiplier,
        mu_multiplier,
        residuals,
        activity,
    })
}

/// Exhaustive grid search over budget-fraction splits.
///
/// Supports up to three links: with two links the grid is
/// `(grid_resolution + 1)^2` bandwidth/power split pairs; with three links a
/// coarse simplex grid is followed by pairwise-transfer local refinement.
pub fn brute_force_oracle(
    problem: &AllocationProblem,
    grid_resolution: usize,
) -> Result<(ResourceAllocation, f64)> {
    let res = grid_resolution.max(1);
    let eval = |u: &[f64], v: &[f64]| problem.objective_fractions(u, v);
    match problem.len() {
        1 => {
            let alloc = problem.allocation_from_fractions(&[1.0], &[1.0]);
            let value = total_voi(problem, &alloc)?;
            Ok((alloc, value))
        }
        2 => {
            let mut best = (f64::NEG_INFINITY, 0.0, 0.0);
            for i in 0..=res {
                let a = i as f64 / res as f64;
                for k in 0..=res {
                    let c = k as f64 / res as f64;
                    let value = eval(&[a, 1.0 - a], &[c, 1.0 - c]);
                    if value > best.0 {
                        best = (value, a, c);
                    }
                }
            }
            let (_, a, c) = best;
            let alloc = problem.allocation_from_fractions(&[a, 1.0 - a], &[c, 1.0 - c]);
            let value = total_voi(problem, &alloc)?;
            Ok((alloc, value))
        }
        3 => {
            let simplex: Vec<[f64; 3]> = (0..=res)
                .flat_map(|i| (0..=res - i).map(move |k| (i, k)))
                .map(|(i, k)| {
                    let (a, b) = (i as f64 / res as f64, k as f64 / res as f64);
                    [a, b, (1.0 - a - b).max(0.0)]
                })
                .collect();
            let mut best = (f64::NEG_INFINITY, [0.0; 3], [0.0; 3]);
            for u in &simplex {
                for v in &simplex {
                    let value = eval(u, v);
                    if value > best.0 {
                        best = (value, *u, *v);
                    }
                }
            }
            let (mut value, mut u, mut v) = best;
            let mut delta = 1.0 / res as f64;
            while delta > 1e-10 {
                let mut improved = false;
                for which in 0..2 {
                    for from in 0..3 {
                        for to in 0..3 {
                            if from == to {
                                continue;
                            }
                            let (mut cu, mut cv) = (u, v);
                            let x = if which == 0 { &mut cu } else { &mut cv };
                            let moved = delta.min(x[from]);
                            if moved <= 0.0 {
                                continue;
                            }
                            x[from] -= moved;
                            x[to] += moved;
                            let cand = eval(&cu, &cv);
                            if cand > value {
                                (value, u, v) = (cand, cu, cv);
                                improved = true;
                            }
                        }
                    }
                }
                if !improved {
                    delta *= 0.5;
                }
            }
            let alloc = problem.allocation_from_fractions(&u, &v);
            let value = total_voi(problem, &alloc)?;
            Ok((alloc, value))
        }
        n => Err(Error::Domain(format!(
            "brute-force oracle supports at most 3 links, got {n}"
        ))),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn unit_link(j: usize) -> LinkState {
        LinkState::new(0, j + 1, 1.0, 2.0, 0.0, 1.0).unwrap()
    }

    fn unit_problem(importances: &[f64], bandwidth: f64, power: f64) -> AllocationProblem {
        let n = importances.len();
        AllocationProblem::new(
            importances.to_vec(),
            vec![1.0; n],
            (0..n).map(unit_link).collect(),
            bandwidth,
            power,
        )
        .unwrap()
    }

    #[test]
    fn total_voi_examples() {
        let p = unit_problem(&[1.0], 1.0, 1.0);
        assert!((total_voi(&p, &allocate_equal(&p)).unwrap() - 1.0).abs() < 1e-12);

        let p = unit_problem(&[0.0, 0.0, 0.0], 5.0, 5.0);
        assert_eq!(total_voi(&p, &allocate_equal(&p)).unwrap(), 0.0);

        let p = unit_problem(&[1.0, 1.0], 2.0, 2.0);
        assert!((total_voi(&p, &allocate_equal(&p)).unwrap() - 2.0).abs() < 1e-12);
    }

    #[test]
    fn total_voi_rejects_infeasible() {
        let p = unit_problem(&[1.0, 1.0], 2.0, 2.0);
        let mut a = allocate_equal(&p);
        a.power[0] = 5.0;
        assert!(total_voi(&p, &a).is_err());
    }

    #[test]
    fn equal_allocation_examples() {
        let a = allocate_equal(&unit_problem(&[1.0, 2.0], 4.0, 2.0));
        assert_eq!(a.bandwidth, vec![2.0, 2.0]);
        assert_eq!(a.power, vec![1.0, 1.0]);
        let a = allocate_equal(&unit_problem(&[1.0], 4.0, 2.0));
        assert_eq!((a.bandwidth[0], a.power[0]), (4.0, 2.0));
        let a = allocate_equal(&unit_problem(&[1.0; 4], 4.0, 4.0));
        assert!(a.bandwidth.iter().chain(&a.power).all(|&x| x == 1.0));
    }

    #[test]
    fn proportional_allocation_examples() {
        let a = allocate_proportional(&unit_problem(&[3.0, 1.0], 4.0, 2.0));
        assert_eq!(a.bandwidth, vec![3.0, 1.0]);
        assert_eq!(a.power, vec![1.5, 0.5]);
        let a = allocate_proportional(&unit_problem(&[1.0, 1.0], 6.0, 3.0));
        assert_eq!(a.bandwidth, vec![3.0, 3.0]);
        let a = allocate_proportional(&unit_problem(&[0.0, 0.0], 6.0, 3.0));
        assert_eq!(a, allocate_equal(&unit_problem(&[0.0, 0.0], 6.0, 3.0)));
    }

    #[test]
    fn optimal_single_link_takes_everything() {
        let p = unit_problem(&[0.7], 3.0, 2.0);
        let r = allocate_optimal(&p, &SolverOptions::default());
        assert!((r.allocation.bandwidth[0] - 3.0).abs() < 1e-12);
        assert!((r.allocation.power[0] - 2.0).abs() < 1e-12);
    }

    #[test]
    fn optimal_identical_links_reach_two() {
        let p = unit_problem(&[1.0, 1.0], 2.0, 2.0);
        let r = allocate_optimal(&p, &SolverOptions::default());
        assert!((r.objective - 2.0).abs() < 1e-9, "{}", r.objective);
        let (_, oracle) = brute_force_oracle(&p, 200).unwrap();
        assert!((oracle - 2.0).abs() < 1e-9);
    }

    #[test]
    fn optimal_concentrates_on_more_important_identical_link() {
        let (bb, pb) = (2.0, 2.0);
        let p = unit_problem(&[2.0, 1.0], bb, pb);
        let expected = 2.0 * bb * (1.0 + pb / bb).log2();
        let r = allocate_optimal(&p, &SolverOptions::default());
        assert!((r.objective - expected).abs() < 1e-9 * expected);
        let (oracle_alloc, oracle) = brute_force_oracle(&p, 200).unwrap();
        assert!((oracle - expected).abs() < 1e-12 * expected);
        assert_eq!(oracle_alloc.bandwidth[1], 0.0);
    }

    #[test]
    fn oracle_degenerate_zero_importance_moves_everything() {
        let p = unit_problem(&[0.0, 1.5], 2.0, 1.0);
        let (a, _) = brute_force_oracle(&p, 200).unwrap();
        assert_eq!(a.bandwidth, vec![0.0, 2.0]);
        assert_eq!(a.power, vec![0.0, 1.0]);
    }

    #[test]
    fn oracle_refuses_large_problems() {
        let p = unit_problem(&[1.0; 4], 1.0, 1.0);
        assert!(brute_force_oracle(&p, 10).is_err());
    }

    #[test]
    fn simplex_projection() {
        let x = project_simplex(&[0.5, 0.5, 0.5]);
        assert!(x.iter().all(|v| (v - 1.0 / 3.0).abs() < 1e-15));
        assert_eq!(project_simplex(&[2.0, 0.0]), vec![1.0, 0.0]);
        let x = project_simplex(&[0.3, -4.0, 0.2]);
        assert!((x[0] - 0.55).abs() < 1e-12 && x[1] == 0.0 && (x[2] - 0.45).abs() < 1e-12);
    }

    #[test]
    fn kkt_equal_split_with_asymmetric_importance_is_not_stationary() {
        let p = unit_problem(&[3.0, 1.0], 2.0, 2.0);
        let d = kkt_residuals(&p, &allocate_equal(&p), KktVariant::AsPrinted).unwrap();
        // Equal split: gamma = 1 on both links, so the left-hand sides are
        // xi * (1 - 0.5) = (1.5, 0.5) and xi * 0.5 = (1.5, 0.5).
        assert!((d.lambda_multiplier - 1.0).abs() < 1e-12);
        assert!((d.mu_multiplier - 1.0).abs() < 1e-12);
        assert!((d.max_residual() - 0.5).abs() < 1e-12);
    }

    #[test]
    fn kkt_single_link_is_boundary_active() {
        let p = unit_problem(&[1.0], 1.0, 1.0);
        let d = kkt_residuals(&p, &allocate_equal(&p), KktVariant::AsPrinted).unwrap();
        assert_eq!(d.activity, vec![LinkActivity::BoundaryActive]);
        assert_eq!(d.residuals, vec![0.0]);
    }

    #[test]
    fn kkt_zero_link_is_inactive() {
        let p = unit_problem(&[1.0, 1.0], 1.0, 1.0);
        let a = ResourceAllocation {
            bandwidth: vec![1.0, 0.0],
            power: vec![1.0, 0.0],
            bandwidth_budget: 1.0,
            power_budget: 1.0,
        };
        let d = kkt_residuals(&p, &a, KktVariant::AsPrinted).unwrap();
        assert_eq!(d.activity[1], LinkActivity::Inactive);
        assert_eq!(d.snr[1], None);
        assert_eq!(d.residuals[1], 0.0);
    }
}
