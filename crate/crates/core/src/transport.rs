//! Order-2 Wasserstein distance between finitely supported distributions and
//! the guaranteed-cost bound of the penalty reformulation.
//!
//! Two exact solvers are provided: a Hungarian assignment for uniform
//! distributions with equally many atoms, and a successive-shortest-path
//! min-cost-flow solver for the general transportation LP.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::scalar::Real;

#[derive(Debug, Clone, PartialEq)]
pub struct DiscreteDistribution<T: Real> {
    atoms: Vec<DVector<T>>,
    weights: Vec<T>,
}

impl<T: Real> DiscreteDistribution<T> {
    pub fn new(atoms: Vec<DVector<T>>, weights: Vec<T>) -> Result<Self> {
        if atoms.is_empty() || atoms.len() != weights.len() {
            return Err(Error::Config("discrete distribution needs one weight per atom".into()));
        }
        let dim = atoms[0].len();
        if let Some(a) = atoms.iter().find(|a| a.len() != dim) {
            return Err(Error::Dimension { context: "atom", expected: dim, actual: a.len() });
        }
        let total = weights.iter().fold(T::zero(), |s, w| s + *w);
        if weights.iter().any(|w| *w < T::zero())
            || (total - T::one()).abs() > T::lit(1e-9).max(T::default_epsilon() * T::lit(64.0))
        {
            return Err(Error::Config("weights must be nonnegative and sum to 1".into()));
        }
        Ok(DiscreteDistribution { atoms, weights })
    }

    pub fn uniform(atoms: Vec<DVector<T>>) -> Result<Self> {
        let n = T::from_usize(atoms.len()).unwrap_or_else(T::one);
        let weights = vec![T::one() / n; atoms.len()];
        Self::new(atoms, weights)
    }

    pub fn dirac(atom: DVector<T>) -> Self {
        DiscreteDistribution { atoms: vec![atom], weights: vec![T::one()] }
    }

    pub fn atoms(&self) -> &[DVector<T>] {
        &self.atoms
    }

    pub fn weights(&self) -> &[T] {
        &self.weights
    }

    pub fn dim(&self) -> usize {
        self.atoms[0].len()
    }

    pub fn len(&self) -> usize {
        self.atoms.len()
    }

    pub fn is_empty(&self) -> bool {
        self.atoms.is_empty()
    }

    fn is_uniform(&self) -> bool {
        let w0 = self.weights[0];
        self.weights.iter().all(|w| *w == w0)
    }
}

fn squared_costs<T: Real>(p: &[DVector<T>], q: &[DVector<T>]) -> DMatrix<T> {
    DMatrix::from_fn(p.len(), q.len(), |j, k| (&p[j] - &q[k]).norm_squared())
}

/// Minimum-cost perfect matching on a square cost matrix.
///
/// Returns `assignment[row] = column` and the total cost. O(n^3).
pub fn hungarian<T: Real>(cost: &DMatrix<T>) -> (Vec<usize>, T) {
    let n = cost.nrows();
    assert_eq!(n, cost.ncols(), "assignment needs a square cost matrix");
    if n == 0 {
        return (Vec::new(), T::zero());
    }
    let inf = T::max_value().expect("bounded scalar");
    // 1-based potentials; column 0 is a virtual start column.
    let mut u = vec![T::zero(); n + 1];
    let mut v = vec![T::zero(); n + 1];
    let mut matched_row = vec![0usize; n + 1];
    let mut way = vec![0usize; n + 1];
    for i in 1..=n {
        matched_row[0] = i;
        let mut j0 = 0;
        let mut minv = vec![inf; n + 1];
        let mut used = vec![false; n + 1];
        loop {
            used[j0] = true;
            let i0 = matched_row[j0];
            let mut delta = inf;
            let mut j1 = 0;
            for j in 1..=n {
                if used[j] {
                    continue;
                }
                let cur = cost[(i0 - 1, j - 1)] - u[i0] - v[j];
                if cur < minv[j] {
                    minv[j] = cur;
                    way[j] = j0;
                }
                if minv[j] < delta {
                    delta = minv[j];
                    j1 = j;
                }
            }
            for j in 0..=n {
                if used[j] {
                    u[matched_row[j]] += delta;
                    v[j] -= delta;
                } else {
                    minv[j] -= delta;
                }
            }
            j0 = j1;
            if matched_row[j0] == 0 {
                break;
            }
        }
        loop {
            let j1 = way[j0];
            matched_row[j0] = matched_row[j1];
            j0 = j1;
            if j0 == 0 {
                break;
            }
        }
    }
    let mut assignment = vec![0; n];
    for j in 1..=n {
        assignment[matched_row[j] - 1] = j - 1;
    }
    let total = assignment.iter().enumerate().fold(T::zero(), |s, (r, &c)| s + cost[(r, c)]);
    (assignment, total)
}

/// Optimal plan of the transportation LP `min <C, P>` subject to row sums
/// `supply` and column sums `demand`.
#[derive(Debug, Clone)]
pub struct TransportPlan<T: Real> {
    pub flow: DMatrix<T>,
    pub cost: T,
}

/// Successive shortest augmenting paths with Johnson potentials on the dense
/// bipartite residual graph. Costs must be nonnegative; supply and demand
/// must have equal totals.
pub fn transport_plan<T: Real>(cost: &DMatrix<T>, supply: &[T], demand: &[T]) -> TransportPlan<T> {
    let (m, n) = cost.shape();
    assert_eq!(supply.len(), m);
    assert_eq!(demand.len(), n);
    let total = supply.iter().fold(T::zero(), |s, v| s + *v);
    let tiny = T::default_epsilon() * T::lit(64.0) * total.max(T::one());
    let inf = T::max_value().expect("bounded scalar");

    let mut flow = DMatrix::<T>::zeros(m, n);
    let mut supply_left: Vec<T> = supply.to_vec();
    let mut demand_left: Vec<T> = demand.to_vec();
    // Node ids: sources 0..m, sinks m..m+n.
    let nodes = m + n;
    let mut potential = vec![T::zero(); nodes];

    loop {
        if supply_left.iter().all(|s| *s <= tiny) || demand_left.iter().all(|d| *d <= tiny) {
            break;
        }
        let mut dist = vec![inf; nodes];
        let mut prev = vec![usize::MAX; nodes];
        let mut done = vec![false; nodes];
        for j in 0..m {
            if supply_left[j] > tiny {
                dist[j] = T::zero();
            }
        }
        // Dense Dijkstra on reduced costs.
        loop {
            let mut best = usize::MAX;
            for v in 0..nodes {
                if !done[v] && dist[v] < inf && (best == usize::MAX || dist[v] < dist[best]) {
                    best = v;
                }
            }
            if best == usize::MAX {
                break;
            }
            done[best] = true;
            if best < m {
                let j = best;
                for k in 0..n {
                    let to = m + k;
                    if done[to] {
                        continue;
                    }
                    let reduced = (cost[(j, k)] + potential[j] - potential[to]).max(T::zero());
                    let cand = dist[j] + reduced;
                    if cand < dist[to] {
                        dist[to] = cand;
                        prev[to] = j;
                    }
                }
            } else {
                let k = best - m;
                for j in 0..m {
                    if done[j] || flow[(j, k)] <= tiny {
                        continue;
                    }
                    let reduced = (-cost[(j, k)] + potential[best] - potential[j]).max(T::zero());
                    let cand = dist[best] + reduced;
                    if cand < dist[j] {
                        dist[j] = cand;
                        prev[j] = best;
                    }
                }
            }
        }
        let target = (0..n)
            .filter(|&k| demand_left[k] > tiny && dist[m + k] < inf)
            .min_by(|&a, &b| dist[m + a].partial_cmp(&dist[m + b]).unwrap())
            .map(|k| m + k);
        let Some(target) = target else { break };
        let reach = dist[target];
        for v in 0..nodes {
            potential[v] += dist[v].min(reach);
        }
        // Bottleneck along the path.
        let mut amount = demand_left[target - m];
        let mut v = target;
        while prev[v] != usize::MAX {
            let p = prev[v];
            if p >= m {
                // sink p -> source v traverses a backward arc.
                amount = amount.min(flow[(v, p - m)]);
            }
            v = p;
        }
        amount = amount.min(supply_left[v]);
        let start = v;
        let mut v = target;
        while prev[v] != usize::MAX {
            let p = prev[v];
            if p < m {
                flow[(p, v - m)] += amount;
            } else {
                flow[(v, p - m)] -= amount;
            }
            v = p;
        }
        supply_left[start] -= amount;
        demand_left[target - m] -= amount;
    }
    let cost_total = flow.component_mul(cost).sum();
    TransportPlan { flow, cost: cost_total }
}

/// Squared order-2 Wasserstein distance.
pub fn w2_squared<T: Real>(p: &DiscreteDistribution<T>, q: &DiscreteDistribution<T>) -> Result<T> {
    if p.dim() != q.dim() {
        return Err(Error::Dimension { context: "wasserstein atoms", expected: p.dim(), actual: q.dim() });
    }
    let cost = squared_costs(&p.atoms, &q.atoms);
    let value = if p.len() == q.len() && p.is_uniform() && q.is_uniform() {
        let (_, total) = hungarian(&cost);
        total / T::from_usize(p.len()).unwrap()
    } else {
        transport_plan(&cost, &p.weights, &q.weights).cost
    };
    Ok(value.max(T::zero()))
}

pub fn w2_distance<T: Real>(p: &DiscreteDistribution<T>, q: &DiscreteDistribution<T>) -> Result<T> {
    Ok(w2_squared(p, q)?.sqrt())
}

/// Uniform-vs-uniform W2 over equally many atoms, returning the matching too.
pub fn uniform_matching<T: Real>(p: &[DVector<T>], q: &[DVector<T>]) -> (Vec<usize>, T) {
    let cost = squared_costs(p, q);
    let (assignment, total) = hungarian(&cost);
    (assignment, (total / T::from_usize(p.len()).unwrap()).max(T::zero()))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AmbiguityParams<T: Real> {
    /// Wasserstein radius of the ambiguity ball.
    pub theta: T,
    /// Weight on the squared Wasserstein distance in the penalized cost.
    pub lambda: T,
    pub horizon: usize,
}

impl<T: Real> AmbiguityParams<T> {
    /// `theta = 0` is accepted and degenerates the ball to the empirical law.
    pub fn new(theta: T, lambda: T, horizon: usize) -> Result<Self> {
        if !(theta >= T::zero()) || !theta.is_finite_value() {
            return Err(Error::Config("theta must be a finite nonnegative radius".into()));
        }
        if !(lambda > T::zero()) || !lambda.is_finite_value() {
            return Err(Error::Config("lambda must be positive".into()));
        }
        Ok(AmbiguityParams { theta, lambda, horizon })
    }

    /// `lambda * T * theta^2`.
    pub fn penalty_term(&self) -> T {
        self.lambda * T::from_usize(self.horizon).unwrap() * self.theta * self.theta
    }
}

/// Upper bound on the worst-case cost over the ambiguity set given an
/// estimate of the worst-case penalized cost.
pub fn guaranteed_bound<T: Real>(params: &AmbiguityParams<T>, j_lambda_sup_est: T) -> T {
    params.penalty_term() + j_lambda_sup_est
}

#[cfg(test)]
mod tests {
    use super::*;
    use nalgebra::dvector;
    use proptest::prelude::*;

    fn permutations(n: usize) -> Vec<Vec<usize>> {
        if n == 0 {
            return vec![vec![]];
        }
        let mut out = Vec::new();
        for p in permutations(n - 1) {
            for pos in 0..=p.len() {
                let mut q = p.clone();
                q.insert(pos, n - 1);
                out.push(q);
            }
        }
        out
    }

    fn brute_force_w2_sq(p: &[DVector<f64>], q: &[DVector<f64>]) -> f64 {
        permutations(p.len())
            .iter()
            .map(|perm| perm.iter().enumerate().map(|(j, &k)| (&p[j] - &q[k]).norm_squared()).sum::<f64>())
            .fold(f64::INFINITY, f64::min)
            / p.len() as f64
    }

    /// Closed-form 1-D W2^2 by integrating the difference of quantile functions.
    fn quantile_w2_sq(p: &[(f64, f64)], q: &[(f64, f64)]) -> f64 {
        let mut p = p.to_vec();
        let mut q = q.to_vec();
        p.sort_by(|a, b| a.0.partial_cmp(&b.0).unwrap());
        q.sort_by(|a, b| a.0.partial_cmp(&b.0).unwrap());
        let (mut i, mut j) = (0, 0);
        let (mut rp, mut rq) = (p[0].1, q[0].1);
        let mut total = 0.0;
        while i < p.len() && j < q.len() {
            let m = rp.min(rq);
            total += m * (p[i].0 - q[j].0).powi(2);
            rp -= m;
            rq -= m;
            if rp <= 1e-15 {
                i += 1;
                if i < p.len() {
                    rp = p[i].1;
                }
            }
            if rq <= 1e-15 {
                j += 1;
                if j < q.len() {
                    rq = q[j].1;
                }
            }
        }
        total
    }

    #[test]
    fn dirac_distance_is_euclidean() {
        let a = dvector![1.0, 2.0];
        let b = dvector![4.0, 6.0];
        let d = w2_distance(&DiscreteDistribution::dirac(a), &DiscreteDistribution::dirac(b)).unwrap();
        assert_eq!(d, 5.0);
    }

    #[test]
    fn identical_distributions_have_zero_distance() {
        let atoms = vec![dvector![0.0, 1.0], dvector![2.0, -1.0], dvector![0.5, 0.5]];
        let p = DiscreteDistribution::uniform(atoms).unwrap();
        assert_eq!(w2_distance(&p, &p).unwrap(), 0.0);
        let q = DiscreteDistribution::new(p.atoms().to_vec(), vec![0.2, 0.3, 0.5]).unwrap();
        assert!(w2_distance(&q, &q).unwrap() < 1e-12);
    }

    #[test]
    fn four_atom_matches_enumeration() {
        let p = vec![dvector![0.0, 0.0], dvector![1.0, 0.0], dvector![0.0, 1.0], dvector![1.0, 1.0]];
        let q = vec![dvector![0.9, 0.2], dvector![0.1, 1.3], dvector![-0.4, 0.1], dvector![1.6, 1.1]];
        let expected = brute_force_w2_sq(&p, &q).sqrt();
        let got = w2_distance(&DiscreteDistribution::uniform(p).unwrap(), &DiscreteDistribution::uniform(q).unwrap())
            .unwrap();
        assert!((got - expected).abs() < 1e-12);
    }

    #[test]
    fn flow_solver_matches_quantile_formula() {
        let p = [(0.0, 0.1), (1.0, 0.4), (3.0, 0.5)];
        let q = [(0.5, 0.3), (2.0, 0.2), (2.5, 0.25), (4.0, 0.25)];
        let pd = DiscreteDistribution::new(p.iter().map(|a| dvector![a.0]).collect(), p.iter().map(|a| a.1).collect())
            .unwrap();
        let qd = DiscreteDistribution::new(q.iter().map(|a| dvector![a.0]).collect(), q.iter().map(|a| a.1).collect())
            .unwrap();
        let got = w2_squared(&pd, &qd).unwrap();
        assert!((got - quantile_w2_sq(&p, &q)).abs() < 1e-12, "{got}");
    }

    #[test]
    fn dimension_mismatch_is_an_error() {
        let p = DiscreteDistribution::dirac(dvector![0.0]);
        let q = DiscreteDistribution::dirac(dvector![0.0, 1.0]);
        assert!(matches!(w2_distance(&p, &q), Err(Error::Dimension { .. })));
    }

    #[test]
    fn invalid_weights_rejected() {
        assert!(DiscreteDistribution::new(vec![dvector![0.0], dvector![1.0]], vec![0.5, 0.6]).is_err());
        assert!(DiscreteDistribution::new(vec![dvector![0.0], dvector![1.0]], vec![1.5, -0.5]).is_err());
    }

    #[test]
    fn bound_arithmetic() {
        let p = AmbiguityParams::new(0.1f64, 1.0, 10).unwrap();
        assert!((guaranteed_bound(&p, 5.0) - 5.1).abs() < 1e-12);
        let zero = AmbiguityParams::new(0.0, 3.0, 10).unwrap();
        assert_eq!(guaranteed_bound(&zero, 5.0), 5.0);
        let car = AmbiguityParams::new(0.1f64, 9000.0, 800).unwrap();
        assert!((car.penalty_term() - 72000.0).abs() < 1e-6);
        assert!(AmbiguityParams::new(0.1, 0.0, 10).is_err());
    }

    fn arb_uniform(max: usize) -> impl Strategy<Value = Vec<DVector<f64>>> {
        prop::collection::vec(prop::collection::vec(-3.0f64..3.0, 2), 1..=max)
            .prop_map(|v| v.into_iter().map(DVector::from_vec).collect())
    }

    fn arb_weighted() -> impl Strategy<Value = DiscreteDistribution<f64>> {
        prop::collection::vec((prop::collection::vec(-3.0f64..3.0, 2), 0.05f64..1.0), 1..6).prop_map(|v| {
            let total: f64 = v.iter().map(|a| a.1).sum();
            let atoms = v.iter().map(|a| DVector::from_vec(a.0.clone())).collect();
            let mut weights: Vec<f64> = v.iter().map(|a| a.1 / total).collect();
            let drift: f64 = 1.0 - weights.iter().sum::<f64>();
            weights[0] += drift;
            DiscreteDistribution::new(atoms, weights).unwrap()
        })
    }

    proptest! {
        #[test]
        fn hungarian_matches_flow_and_enumeration(p in arb_uniform(6), seed in 0u64..1000) {
            let n = p.len();
            let q: Vec<DVector<f64>> = (0..n)
                .map(|k| DVector::from_fn(2, |i, _| (seed as f64 + 1.3 * k as f64 + 0.7 * i as f64).sin() * 2.0))
                .collect();
            let exact = brute_force_w2_sq(&p, &q);
            let cost = squared_costs(&p, &q);
            let w = vec![1.0 / n as f64; n];
            let lp = transport_plan(&cost, &w, &w).cost;
            let (_, h) = uniform_matching(&p, &q);
            prop_assert!((h - exact).abs() < 1e-9);
            prop_assert!((lp - exact).abs() < 1e-9);
        }

        #[test]
        fn symmetric(p in arb_weighted(), q in arb_weighted()) {
            let a = w2_distance(&p, &q).unwrap();
            let b = w2_distance(&q, &p).unwrap();
            prop_assert!((a - b).abs() < 1e-9);
        }

        #[test]
        fn triangle_inequality(p in arb_weighted(), q in arb_weighted(), r in arb_weighted()) {
            let pq = w2_distance(&p, &q).unwrap();
            let qr = w2_distance(&q, &r).unwrap();
            let pr = w2_distance(&p, &r).unwrap();
            prop_assert!(pr <= pq + qr + 1e-7);
        }

        #[test]
        fn scaling(p in arb_weighted(), q in arb_weighted(), s in -4.0f64..4.0) {
            let scale = |d: &DiscreteDistribution<f64>| {
                DiscreteDistribution::new(d.atoms().iter().map(|a| a * s).collect(), d.weights().to_vec()).unwrap()
            };
            let base = w2_distance(&p, &q).unwrap();
            let scaled = w2_distance(&scale(&p), &scale(&q)).unwrap();
            prop_assert!((scaled - s.abs() * base).abs() < 1e-7 * (1.0 + base));
        }

        #[test]
        fn transport_marginals_hold(p in arb_weighted(), q in arb_weighted()) {
            let plan = transport_plan(&squared_costs(p.atoms(), q.atoms()), p.weights(), q.weights());
            for (j, w) in p.weights().iter().enumerate() {
                prop_assert!((plan.flow.row(j).sum() - w).abs() < 1e-9);
            }
            for (k, w) in q.weights().iter().enumerate() {
                prop_assert!((plan.flow.column(k).sum() - w).abs() < 1e-9);
            }
            prop_assert!(plan.flow.iter().all(|f| *f >= -1e-12));
        }
    }

    #[test]
    fn works_in_single_precision() {
        let p = DiscreteDistribution::<f32>::uniform(vec![dvector![0.0], dvector![1.0]]).unwrap();
        let q = DiscreteDistribution::<f32>::uniform(vec![dvector![0.5], dvector![1.5]]).unwrap();
        assert!((w2_distance(&p, &q).unwrap() - 0.5).abs() < 1e-6);
    }
}
