use rand::Rng;

use super::TaskError;

/// Largest node count accepted by [`brute_force`].
pub const BRUTE_FORCE_MAX_NODES: usize = 9;

pub type Point = [f64; 2];

/// Row-major Euclidean distance matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct DistanceMatrix {
    n: usize,
    data: Vec<f64>,
}

impl DistanceMatrix {
    pub fn euclidean(coords: &[Point]) -> Self {
        let n = coords.len();
        let mut data = vec![0.0; n * n];
        for i in 0..n {
            for j in 0..n {
                let dx = coords[i][0] - coords[j][0];
                let dy = coords[i][1] - coords[j][1];
                data[i * n + j] = (dx * dx + dy * dy).sqrt();
            }
        }
        Self { n, data }
    }

    pub fn len(&self) -> usize {
        self.n
    }

    pub fn is_empty(&self) -> bool {
        self.n == 0
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.data[i * self.n + j]
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TspInstance {
    pub coords: Vec<Point>,
    pub dist: DistanceMatrix,
    pub reference_length: Option<f64>,
}

impl TspInstance {
    pub fn from_coords(coords: Vec<Point>) -> Self {
        let dist = DistanceMatrix::euclidean(&coords);
        Self {
            coords,
            dist,
            reference_length: None,
        }
    }

    pub fn n(&self) -> usize {
        self.coords.len()
    }

    /// Exact optimum for small instances, otherwise the nearest-neighbour
    /// tour improved by 2-opt.
    pub fn default_reference(&self) -> f64 {
        if self.n() <= BRUTE_FORCE_MAX_NODES {
            brute_force(self).expect("size checked")
        } else {
            let tour = two_opt(nearest_neighbor_tour(&self.dist, 0), &self.dist);
            tour_length(&tour, &self.dist)
        }
    }
}

pub fn generate<R: Rng + ?Sized>(n: usize, rng: &mut R) -> TspInstance {
    let coords = (0..n).map(|_| [rng.random::<f64>(), rng.random::<f64>()]).collect();
    TspInstance::from_coords(coords)
}

/// Closed tour length, including the edge back to `route[0]`.
pub fn tour_length(route: &[usize], dist: &DistanceMatrix) -> f64 {
    let k = route.len();
    let mut total = 0.0;
    for i in 0..k {
        total += dist.get(route[i], route[(i + 1) % k]);
    }
    total
}

/// True iff `route` is a permutation of `0..n`.
pub fn validate(route: &[usize], n: usize) -> bool {
    if route.len() != n {
        return false;
    }
    let mut seen = vec![false; n];
    for &v in route {
        if v >= n || seen[v] {
            return false;
        }
        seen[v] = true;
    }
    true
}

/// Optimal tour length by enumerating all tours that start at node 0.
pub fn brute_force(instance: &TspInstance) -> Result<f64, TaskError> {
    let n = instance.n();
    if n > BRUTE_FORCE_MAX_NODES {
        return Err(TaskError::TooLarge(format!(
            "TSP with {n} nodes (limit {BRUTE_FORCE_MAX_NODES})"
        )));
    }
    if n < 2 {
        return Err(TaskError::BadParams("TSP needs at least two nodes".into()));
    }
    let mut rest: Vec<usize> = (1..n).collect();
    let mut best = f64::INFINITY;
    let mut route = vec![0; n];
    permute(&mut rest, 0, &mut |perm| {
        route[1..].copy_from_slice(perm);
        best = best.min(tour_length(&route, &instance.dist));
    });
    Ok(best)
}

/// Heap-free recursive permutation visitor.
pub(crate) fn permute<F: FnMut(&[usize])>(items: &mut [usize], k: usize, visit: &mut F) {
    if k == items.len() {
        visit(items);
        return;
    }
    for i in k..items.len() {
        items.swap(k, i);
        permute(items, k + 1, visit);
        items.swap(k, i);
    }
}

pub fn nearest_neighbor_tour(dist: &DistanceMatrix, start: usize) -> Vec<usize> {
    let n = dist.len();
    let mut visited = vec![false; n];
    let mut tour = Vec::with_capacity(n);
    let mut current = start;
    visited[start] = true;
    tour.push(start);
    for _ in 1..n {
        let next = (0..n)
            .filter(|&j| !visited[j])
            .min_by(|&a, &b| dist.get(current, a).total_cmp(&dist.get(current, b)))
            .expect("unvisited node remains");
        visited[next] = true;
        tour.push(next);
        current = next;
    }
    tour
}

/// First-improvement 2-opt on a closed tour until no move helps.
pub fn two_opt(mut tour: Vec<usize>, dist: &DistanceMatrix) -> Vec<usize> {
    let n = tour.len();
    if n < 4 {
        return tour;
    }
    let mut improved = true;
    while improved {
        improved = false;
        for i in 0..n - 1 {
            for j in i + 2..n {
                if i == 0 && j == n - 1 {
                    continue;
                }
                let (a, b) = (tour[i], tour[i + 1]);
                let (c, d) = (tour[j], tour[(j + 1) % n]);
                let delta = dist.get(a, c) + dist.get(b, d) - dist.get(a, b) - dist.get(c, d);
                if delta < -1e-12 {
                    tour[i + 1..=j].reverse();
                    improved = true;
                }
            }
        }
    }
    tour
}
