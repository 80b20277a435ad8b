//! Exact electrical-network computations on finite trees with unit edge
//! conductances: effective resistance via series/parallel reduction,
//! hitting probabilities via harmonic solves, return and commute times
//! via closed forms. Every closed form has a dense linear-solve oracle
//! next to it so the two routes can be compared on random instances.

use crate::analytics::AnalyticProfile;
use crate::tree::sample_trap_tree;
use rand::Rng;
use thiserror::Error;

/// Upper bound on the number of states the dense oracles accept.
pub const ORACLE_MAX_STATES: usize = 2000;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum NetworkError {
    #[error("edge list does not describe a connected tree on {n} vertices")]
    NotATree { n: usize },
    #[error("vertex {0} out of range")]
    VertexOutOfRange(usize),
    #[error("source belongs to the target set")]
    SourceIsTarget,
    #[error("target set is empty")]
    EmptyTargets,
    #[error("vertex sets must be disjoint and exclude the start vertex")]
    OverlappingSets,
    #[error("{states} states exceed the dense-oracle limit {ORACLE_MAX_STATES}")]
    OracleOutOfRange { states: usize },
    #[error("singular linear system")]
    SingularSystem,
}

/// A finite tree with unit conductances, stored as an adjacency list.
#[derive(Debug, Clone)]
pub struct FiniteNetwork {
    adj: Vec<Vec<usize>>,
}

impl FiniteNetwork {
    pub fn from_edges(n: usize, edges: &[(usize, usize)]) -> Result<Self, NetworkError> {
        if n == 0 || edges.len() + 1 != n {
            return Err(NetworkError::NotATree { n });
        }
        let mut adj = vec![Vec::new(); n];
        for &(a, b) in edges {
            if a >= n || b >= n {
                return Err(NetworkError::VertexOutOfRange(a.max(b)));
            }
            adj[a].push(b);
            adj[b].push(a);
        }
        let net = Self { adj };
        if net.reachable_from(0, usize::MAX).iter().filter(|&&r| r).count() != n {
            return Err(NetworkError::NotATree { n });
        }
        Ok(net)
    }

    /// Path graph on `n` vertices, `0 - 1 - ... - n-1`.
    pub fn line(n: usize) -> Self {
        let edges: Vec<_> = (1..n).map(|i| (i - 1, i)).collect();
        Self::from_edges(n, &edges).expect("line is a tree")
    }

    /// Star with `leaves` leaves around center 0.
    pub fn star(leaves: usize) -> Self {
        let edges: Vec<_> = (1..=leaves).map(|i| (0, i)).collect();
        Self::from_edges(leaves + 1, &edges).expect("star is a tree")
    }

    pub fn len(&self) -> usize {
        self.adj.len()
    }

    pub fn is_empty(&self) -> bool {
        self.adj.is_empty()
    }

    pub fn degree(&self, v: usize) -> usize {
        self.adj[v].len()
    }

    pub fn neighbors(&self, v: usize) -> &[usize] {
        &self.adj[v]
    }

    /// Graph distance between two vertices.
    pub fn distance(&self, v: usize, w: usize) -> usize {
        let mut dist = vec![usize::MAX; self.len()];
        dist[v] = 0;
        let mut queue = std::collections::VecDeque::from([v]);
        while let Some(u) = queue.pop_front() {
            if u == w {
                return dist[u];
            }
            for &x in &self.adj[u] {
                if dist[x] == usize::MAX {
                    dist[x] = dist[u] + 1;
                    queue.push_back(x);
                }
            }
        }
        unreachable!("tree is connected")
    }

    /// Vertices reachable without stepping on `blocked`.
    fn reachable_from(&self, start: usize, blocked: usize) -> Vec<bool> {
        let mut seen = vec![false; self.len()];
        if start == blocked {
            return seen;
        }
        seen[start] = true;
        let mut stack = vec![start];
        while let Some(u) = stack.pop() {
            for &x in &self.adj[u] {
                if x != blocked && !seen[x] {
                    seen[x] = true;
                    stack.push(x);
                }
            }
        }
        seen
    }
}

/// Effective resistance between `source` and the target set, by
/// series/parallel reduction of the tree rooted at `source`.
pub fn effective_resistance(
    net: &FiniteNetwork,
    source: usize,
    targets: &[usize],
) -> Result<f64, NetworkError> {
    let c = effective_conductance(net, source, targets)?;
    Ok(1.0 / c)
}

/// Effective conductance between `source` and the target set.
pub fn effective_conductance(
    net: &FiniteNetwork,
    source: usize,
    targets: &[usize],
) -> Result<f64, NetworkError> {
    if targets.is_empty() {
        return Err(NetworkError::EmptyTargets);
    }
    let mut is_target = vec![false; net.len()];
    for &t in targets {
        if t >= net.len() {
            return Err(NetworkError::VertexOutOfRange(t));
        }
        is_target[t] = true;
    }
    if source >= net.len() {
        return Err(NetworkError::VertexOutOfRange(source));
    }
    if is_target[source] {
        return Err(NetworkError::SourceIsTarget);
    }
    // Iterative post-order over the tree rooted at source. A target child
    // contributes its unit edge directly; otherwise the edge sits in series
    // with the subtree conductance (Series Law) and siblings add up
    // (Parallel Law). Targets absorb: nothing below them matters.
    let n = net.len();
    let mut parent = vec![usize::MAX; n];
    let mut order = Vec::with_capacity(n);
    let mut stack = vec![source];
    let mut seen = vec![false; n];
    seen[source] = true;
    while let Some(u) = stack.pop() {
        order.push(u);
        if is_target[u] {
            continue;
        }
        for &x in &self_adj(net, u) {
            if !seen[x] {
                seen[x] = true;
                parent[x] = u;
                stack.push(x);
            }
        }
    }
    let mut down = vec![0.0f64; n];
    for &u in order.iter().rev() {
        if is_target[u] {
            continue;
        }
        let mut cond = 0.0;
        for &x in net.neighbors(u) {
            if parent[x] == u {
                if is_target[x] {
                    cond += 1.0;
                } else if down[x] > 0.0 {
                    cond += down[x] / (1.0 + down[x]);
                }
            }
        }
        down[u] = cond;
    }
    if down[source] <= 0.0 {
        return Err(NetworkError::EmptyTargets);
    }
    Ok(down[source])
}

fn self_adj(net: &FiniteNetwork, u: usize) -> Vec<usize> {
    net.neighbors(u).to_vec()
}

/// Dense-solve oracle for the effective resistance: fix potential 1 at
/// the source and 0 on the targets, solve the interior harmonicity
/// system, and read the resistance off the source current.
pub fn oracle_effective_resistance(
    net: &FiniteNetwork,
    source: usize,
    targets: &[usize],
) -> Result<f64, NetworkError> {
    let phi = harmonic_potential(net, &[source], targets)?;
    let current: f64 = net.neighbors(source).iter().map(|&x| 1.0 - phi[x]).sum();
    Ok(1.0 / current)
}

/// Potential that is 1 on `ones`, 0 on `zeros`, harmonic elsewhere.
fn harmonic_potential(
    net: &FiniteNetwork,
    ones: &[usize],
    zeros: &[usize],
) -> Result<Vec<f64>, NetworkError> {
    let n = net.len();
    if n > ORACLE_MAX_STATES {
        return Err(NetworkError::OracleOutOfRange { states: n });
    }
    let mut boundary = vec![None::<f64>; n];
    for &v in ones {
        boundary[v] = Some(1.0);
    }
    for &v in zeros {
        if boundary[v].is_some() {
            return Err(NetworkError::OverlappingSets);
        }
        boundary[v] = Some(0.0);
    }
    let interior: Vec<usize> = (0..n).filter(|&v| boundary[v].is_none()).collect();
    let index: std::collections::HashMap<usize, usize> =
        interior.iter().enumerate().map(|(i, &v)| (v, i)).collect();
    let m = interior.len();
    let mut a = vec![vec![0.0; m]; m];
    let mut b = vec![0.0; m];
    for (i, &v) in interior.iter().enumerate() {
        a[i][i] = net.degree(v) as f64;
        for &x in net.neighbors(v) {
            match boundary[x] {
                Some(val) => b[i] += val,
                None => a[i][index[&x]] -= 1.0,
            }
        }
    }
    let sol = solve_dense(&mut a, &mut b)?;
    let mut phi = vec![0.0; n];
    for v in 0..n {
        phi[v] = boundary[v].unwrap_or_else(|| sol[index[&v]]);
    }
    Ok(phi)
}

/// `P^x(hit A before B)` by exact harmonic solve.
///
/// When removing `x` separates `A` from `B` the conductance quotient
/// `C(x,A) / (C(x,A) + C(x,B))` applies; [`hitting_probability_closed_form`]
/// exposes it for cross-checking.
pub fn hitting_probability(
    net: &FiniteNetwork,
    a: &[usize],
    b: &[usize],
    x: usize,
) -> Result<f64, NetworkError> {
    validate_hitting_sets(net, a, b, x)?;
    let phi = harmonic_potential(net, a, b)?;
    Ok(phi[x])
}

/// The conductance quotient, valid when no walk excursion from `x` can
/// touch both sets; returns `None` when some component of the tree
/// minus `x` contains vertices of both `A` and `B`.
pub fn hitting_probability_closed_form(
    net: &FiniteNetwork,
    a: &[usize],
    b: &[usize],
    x: usize,
) -> Result<Option<f64>, NetworkError> {
    validate_hitting_sets(net, a, b, x)?;
    for &nbr in net.neighbors(x) {
        let reach = net.reachable_from(nbr, x);
        let has_a = a.iter().any(|&v| reach[v]);
        let has_b = b.iter().any(|&v| reach[v]);
        if has_a && has_b {
            return Ok(None);
        }
    }
    let ca = effective_conductance(net, x, a)?;
    let cb = effective_conductance(net, x, b)?;
    Ok(Some(ca / (ca + cb)))
}

fn validate_hitting_sets(
    net: &FiniteNetwork,
    a: &[usize],
    b: &[usize],
    x: usize,
) -> Result<(), NetworkError> {
    if a.is_empty() || b.is_empty() {
        return Err(NetworkError::EmptyTargets);
    }
    for &v in a.iter().chain(b) {
        if v >= net.len() {
            return Err(NetworkError::VertexOutOfRange(v));
        }
    }
    if a.iter().any(|v| b.contains(v)) || a.contains(&x) || b.contains(&x) {
        return Err(NetworkError::OverlappingSets);
    }
    Ok(())
}

/// Stationary mass of `v` for simple random walk on the tree.
pub fn stationary_probability(net: &FiniteNetwork, v: usize) -> f64 {
    net.degree(v) as f64 / (2.0 * (net.len() as f64 - 1.0))
}

/// Expected first return time to `v`: the reciprocal of the stationary
/// mass, `2 (|T| - 1) / deg(v)`.
pub fn expected_return_time(net: &FiniteNetwork, v: usize) -> f64 {
    1.0 / stationary_probability(net, v)
}

/// Expected hitting times `E^w[H_v]` for every start `w`, by dense solve.
pub fn oracle_hitting_times(net: &FiniteNetwork, v: usize) -> Result<Vec<f64>, NetworkError> {
    let n = net.len();
    if n > ORACLE_MAX_STATES {
        return Err(NetworkError::OracleOutOfRange { states: n });
    }
    let states: Vec<usize> = (0..n).filter(|&w| w != v).collect();
    let index: std::collections::HashMap<usize, usize> =
        states.iter().enumerate().map(|(i, &w)| (w, i)).collect();
    let m = states.len();
    let mut a = vec![vec![0.0; m]; m];
    let mut b = vec![1.0; m];
    for (i, &w) in states.iter().enumerate() {
        a[i][i] = 1.0;
        let deg = net.degree(w) as f64;
        for &x in net.neighbors(w) {
            if x != v {
                a[i][index[&x]] -= 1.0 / deg;
            }
        }
    }
    let sol = solve_dense(&mut a, &mut b)?;
    let mut h = vec![0.0; n];
    for (i, &w) in states.iter().enumerate() {
        h[w] = sol[i];
    }
    Ok(h)
}

/// Oracle for the expected return time: one step plus the mean hitting
/// time from a uniform neighbor.
pub fn oracle_expected_return_time(net: &FiniteNetwork, v: usize) -> Result<f64, NetworkError> {
    let h = oracle_hitting_times(net, v)?;
    let deg = net.degree(v) as f64;
    Ok(1.0 + net.neighbors(v).iter().map(|&x| h[x]).sum::<f64>() / deg)
}

/// Second moment of the first return time to `v`, via the stationary
/// identity `E[(H_v^+)^2] = pi(v)^{-1} (2 sum_w pi(w) E^w[H_v] + 1)`.
pub fn second_moment_return_time(net: &FiniteNetwork, v: usize) -> Result<f64, NetworkError> {
    let h = oracle_hitting_times(net, v)?;
    let weighted: f64 = (0..net.len())
        .map(|w| stationary_probability(net, w) * h[w])
        .sum();
    Ok((2.0 * weighted + 1.0) / stationary_probability(net, v))
}

/// Direct second-moment solve: `s(w) = E^w[H_v^2]` satisfies
/// `s(w) = 1 + 2 mean(h(next)) + mean(s(next))` with `s(v) = h(v) = 0`.
pub fn oracle_second_moment_return_time(
    net: &FiniteNetwork,
    v: usize,
) -> Result<f64, NetworkError> {
    let h = oracle_hitting_times(net, v)?;
    let n = net.len();
    let states: Vec<usize> = (0..n).filter(|&w| w != v).collect();
    let index: std::collections::HashMap<usize, usize> =
        states.iter().enumerate().map(|(i, &w)| (w, i)).collect();
    let m = states.len();
    let mut a = vec![vec![0.0; m]; m];
    let mut b = vec![0.0; m];
    for (i, &w) in states.iter().enumerate() {
        a[i][i] = 1.0;
        let deg = net.degree(w) as f64;
        let mut rhs = 1.0;
        for &x in net.neighbors(w) {
            rhs += 2.0 * h[x] / deg;
            if x != v {
                a[i][index[&x]] -= 1.0 / deg;
            }
        }
        b[i] = rhs;
    }
    let sol = solve_dense(&mut a, &mut b)?;
    let deg = net.degree(v) as f64;
    let mut total = 0.0;
    for &x in net.neighbors(v) {
        let s_x = if x == v { 0.0 } else { sol[index[&x]] };
        total += (1.0 + 2.0 * h[x] + s_x) / deg;
    }
    Ok(total)
}

/// Commute time between two vertices: `2 (|T| - 1) d(v, w)`.
pub fn commute_time(net: &FiniteNetwork, v: usize, w: usize) -> f64 {
    assert_ne!(v, w);
    2.0 * (net.len() as f64 - 1.0) * net.distance(v, w) as f64
}

/// Oracle commute time: sum of the two one-way hitting times.
pub fn oracle_commute_time(net: &FiniteNetwork, v: usize, w: usize) -> Result<f64, NetworkError> {
    Ok(oracle_hitting_times(net, v)?[w] + oracle_hitting_times(net, w)?[v])
}

/// Leading term of the expected trap excursion time, `2 / (1 - mu_star)`,
/// for a backbone vertex carrying at least one trap edge. Zero when the
/// profile has no traps (`q = 0`).
pub fn expected_trap_time(profile: &AnalyticProfile) -> f64 {
    if profile.q <= 0.0 {
        return 0.0;
    }
    2.0 / (1.0 - profile.mu_star)
}

/// One sampled trap excursion: builds a trap (conditioned on being
/// nonempty) at a backbone vertex with one backbone child, then walks
/// from the attachment vertex until first return. Returns the step count.
pub fn mc_trap_time<R: Rng>(profile: &AnalyticProfile, rng: &mut R) -> u64 {
    let trap_law = profile.trap_law(1).expect("delta = 1 in range");
    if trap_law.probs().len() == 1 {
        return 0;
    }
    let u = loop {
        let u = sample_discrete(trap_law.probs(), rng);
        if u > 0 {
            break u;
        }
    };
    // Trap graph: vertex 0 plus `u` independent trap trees, each hanging
    // from one extra edge.
    let fstar = profile.duals().expect("supercritical").fstar.clone();
    let mut adj: Vec<Vec<u32>> = vec![Vec::new()];
    for _ in 0..u {
        let parents = sample_trap_tree(&fstar, u64::MAX, rng).expect("uncapped");
        let base = adj.len() as u32;
        for (i, parent) in parents.iter().enumerate() {
            adj.push(Vec::new());
            let id = base + i as u32;
            match parent {
                None => {
                    adj[0].push(id);
                    adj[id as usize].push(0);
                }
                Some(p) => {
                    let pid = base + *p;
                    adj[id as usize].push(pid);
                    adj[pid as usize].push(id);
                }
            }
        }
    }
    let mut cur = adj[0][rng.gen_range(0..adj[0].len())];
    let mut steps = 1u64;
    while cur != 0 {
        let nbrs = &adj[cur as usize];
        cur = nbrs[rng.gen_range(0..nbrs.len())];
        steps += 1;
    }
    steps
}

fn sample_discrete<R: Rng>(probs: &[f64], rng: &mut R) -> usize {
    let u: f64 = rng.gen();
    let mut acc = 0.0;
    for (k, &p) in probs.iter().enumerate() {
        acc += p;
        if u < acc {
            return k;
        }
    }
    probs.len() - 1
}

/// Gaussian elimination with partial pivoting.
fn solve_dense(a: &mut [Vec<f64>], b: &mut [f64]) -> Result<Vec<f64>, NetworkError> {
    let n = b.len();
    for col in 0..n {
        let pivot = (col..n)
            .max_by(|&i, &j| a[i][col].abs().total_cmp(&a[j][col].abs()))
            .unwrap();
        if a[pivot][col].abs() < 1e-300 {
            return Err(NetworkError::SingularSystem);
        }
        a.swap(col, pivot);
        b.swap(col, pivot);
        for row in col + 1..n {
            let factor = a[row][col] / a[col][col];
            if factor == 0.0 {
                continue;
            }
            for k in col..n {
                a[row][k] -= factor * a[col][k];
            }
            b[row] -= factor * b[col];
        }
    }
    let mut x = vec![0.0; n];
    for row in (0..n).rev() {
        let mut acc = b[row];
        for k in row + 1..n {
            acc -= a[row][k] * x[k];
        }
        x[row] = acc / a[row][row];
    }
    Ok(x)
}

/// Uniform random recursive tree on `n` vertices.
pub fn random_tree<R: Rng>(n: usize, rng: &mut R) -> FiniteNetwork {
    assert!(n >= 2);
    let edges: Vec<_> = (1..n).map(|v| (rng.gen_range(0..v), v)).collect();
    FiniteNetwork::from_edges(n, &edges).expect("recursive construction is a tree")
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::analytics::OffspringLaw;
    use rand::SeedableRng;

    fn y_tree() -> FiniteNetwork {
        // root 0 - a 1, a - b 2, a - c 3
        FiniteNetwork::from_edges(4, &[(0, 1), (1, 2), (1, 3)]).unwrap()
    }

    #[test]
    fn resistance_fixtures() {
        let line = FiniteNetwork::line(6);
        assert!((effective_resistance(&line, 0, &[5]).unwrap() - 5.0).abs() < 1e-12);
        let y = y_tree();
        assert!((effective_resistance(&y, 0, &[2, 3]).unwrap() - 1.5).abs() < 1e-12);
        let edge = FiniteNetwork::line(2);
        assert!((effective_resistance(&edge, 0, &[1]).unwrap() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn resistance_errors() {
        let line = FiniteNetwork::line(3);
        assert!(matches!(
            effective_resistance(&line, 0, &[0]),
            Err(NetworkError::SourceIsTarget)
        ));
        assert!(matches!(
            effective_resistance(&line, 0, &[]),
            Err(NetworkError::EmptyTargets)
        ));
        assert!(FiniteNetwork::from_edges(3, &[(0, 1)]).is_err());
        assert!(FiniteNetwork::from_edges(4, &[(0, 1), (2, 3), (0, 1)]).is_err());
    }

    #[test]
    fn hitting_probability_fixtures() {
        let line = FiniteNetwork::line(6); // vertices 0..5
        for k in 1..5 {
            let p = hitting_probability(&line, &[5], &[0], k).unwrap();
            assert!((p - k as f64 / 5.0).abs() < 1e-12);
        }
        let y = y_tree();
        let p = hitting_probability(&y, &[2], &[0, 3], 1).unwrap();
        assert!((p - 1.0 / 3.0).abs() < 1e-12);
        assert!(hitting_probability(&y, &[1], &[1], 0).is_err());
    }

    #[test]
    fn hitting_closed_form_matches_solve() {
        let line = FiniteNetwork::line(8);
        let cf = hitting_probability_closed_form(&line, &[7], &[0], 3)
            .unwrap()
            .expect("line splits at interior vertex");
        let solve = hitting_probability(&line, &[7], &[0], 3).unwrap();
        assert!((cf - solve).abs() < 1e-12);
        // A and B on the same side of x: closed form does not apply.
        let none = hitting_probability_closed_form(&line, &[6], &[7], 3).unwrap();
        assert!(none.is_none());
    }

    #[test]
    fn return_time_fixtures() {
        let star = FiniteNetwork::star(3);
        assert!((expected_return_time(&star, 0) - 2.0).abs() < 1e-12);
        assert!((expected_return_time(&star, 1) - 6.0).abs() < 1e-12);
        let edge = FiniteNetwork::line(2);
        assert!((expected_return_time(&edge, 0) - 2.0).abs() < 1e-12);

        assert!((second_moment_return_time(&star, 0).unwrap() - 4.0).abs() < 1e-10);
        assert!((second_moment_return_time(&edge, 0).unwrap() - 4.0).abs() < 1e-10);
        // Line 0-1-2 from an end: return time is 2k with probability 2^-k,
        // so the second moment is sum (2k)^2 2^-k = 24.
        let line3 = FiniteNetwork::line(3);
        assert!((second_moment_return_time(&line3, 0).unwrap() - 24.0).abs() < 1e-10);
    }

    #[test]
    fn commute_time_fixtures() {
        let edge = FiniteNetwork::line(2);
        assert!((commute_time(&edge, 0, 1) - 2.0).abs() < 1e-12);
        let line3 = FiniteNetwork::line(3);
        assert!((commute_time(&line3, 0, 2) - 8.0).abs() < 1e-12);
        let star = FiniteNetwork::star(3);
        assert!((commute_time(&star, 1, 2) - 12.0).abs() < 1e-12);
    }

    #[test]
    fn closed_forms_match_oracles_on_random_trees() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(42);
        for trial in 0..100 {
            let n = rng.gen_range(2..=50);
            let net = random_tree(n, &mut rng);
            let v = rng.gen_range(0..n);
            let mut w = rng.gen_range(0..n);
            if w == v {
                w = (w + 1) % n;
            }

            let r = effective_resistance(&net, v, &[w]).unwrap();
            let r_oracle = oracle_effective_resistance(&net, v, &[w]).unwrap();
            assert!((r - r_oracle).abs() <= 1e-10 * r_oracle.max(1.0), "trial {trial}");

            let ret = expected_return_time(&net, v);
            let ret_oracle = oracle_expected_return_time(&net, v).unwrap();
            assert!((ret - ret_oracle).abs() <= 1e-10 * ret_oracle);

            let m2 = second_moment_return_time(&net, v).unwrap();
            let m2_oracle = oracle_second_moment_return_time(&net, v).unwrap();
            assert!((m2 - m2_oracle).abs() <= 1e-10 * m2_oracle);

            let c = commute_time(&net, v, w);
            let c_oracle = oracle_commute_time(&net, v, w).unwrap();
            assert!((c - c_oracle).abs() <= 1e-10 * c_oracle);
        }
    }

    #[test]
    fn hitting_probability_is_harmonic() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(7);
        for _ in 0..20 {
            let n = rng.gen_range(5..=40);
            let net = random_tree(n, &mut rng);
            let a = vec![n - 1];
            let b = vec![0];
            let phi = harmonic_potential(&net, &a, &b).unwrap();
            for v in 0..n {
                if a.contains(&v) || b.contains(&v) {
                    continue;
                }
                assert!((-1e-12..=1.0 + 1e-12).contains(&phi[v]));
                let avg: f64 = net.neighbors(v).iter().map(|&x| phi[x]).sum::<f64>()
                    / net.degree(v) as f64;
                assert!((phi[v] - avg).abs() <= 1e-10);
            }
        }
    }

    #[test]
    fn rayleigh_monotonicity_under_edge_deletion() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(9);
        for _ in 0..50 {
            let n = rng.gen_range(6..=40);
            let net = random_tree(n, &mut rng);
            let source = 0;
            let targets: Vec<usize> = (1..n).filter(|_| rng.gen_bool(0.25)).collect();
            if targets.is_empty() {
                continue;
            }
            let r_full = effective_resistance(&net, source, &targets).unwrap();
            // Delete the subtree hanging below a random non-root vertex,
            // keeping at least one target reachable.
            let cut = rng.gen_range(1..n);
            let mut parent_side = net.reachable_from(source, cut);
            parent_side[cut] = false;
            let kept: Vec<usize> = targets.iter().copied().filter(|&t| parent_side[t]).collect();
            if kept.is_empty() {
                continue;
            }
            let keep_ids: Vec<usize> = (0..n).filter(|&v| parent_side[v]).collect();
            let remap: std::collections::HashMap<usize, usize> =
                keep_ids.iter().enumerate().map(|(i, &v)| (v, i)).collect();
            let mut edges = Vec::new();
            for &v in &keep_ids {
                for &x in net.neighbors(v) {
                    if v < x && parent_side[x] {
                        edges.push((remap[&v], remap[&x]));
                    }
                }
            }
            let pruned = FiniteNetwork::from_edges(keep_ids.len(), &edges).unwrap();
            let kept_remapped: Vec<usize> = kept.iter().map(|t| remap[t]).collect();
            let r_pruned =
                effective_resistance(&pruned, remap[&source], &kept_remapped).unwrap();
            assert!(
                r_pruned >= r_full - 1e-12,
                "resistance dropped after deletion: {r_pruned} < {r_full}"
            );
        }
    }

    #[test]
    fn trap_time_leading_term() {
        let binary = OffspringLaw::point_mass(2);
        let profile = AnalyticProfile::new(binary.clone(), 0.6).unwrap();
        assert!((expected_trap_time(&profile) - 10.0).abs() < 1e-12);
        let at_one = AnalyticProfile::new(binary, 1.0).unwrap();
        assert_eq!(expected_trap_time(&at_one), 0.0);
    }

    #[test]
    fn mc_trap_time_matches_leading_term() {
        // For the binary base with one backbone child the excursion time
        // conditioned on a nonempty trap has mean exactly 2 E|T*|.
        let profile = AnalyticProfile::new(OffspringLaw::point_mass(2), 0.6).unwrap();
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(11);
        let mut stats = crate::stats::RunningStats::new();
        for _ in 0..200_000 {
            stats.push(mc_trap_time(&profile, &mut rng) as f64);
        }
        let expect = expected_trap_time(&profile);
        assert!(
            (stats.mean() - expect).abs() < 3.0 * stats.se(),
            "mean {} vs {expect} (se {})",
            stats.mean(),
            stats.se()
        );
    }
}
