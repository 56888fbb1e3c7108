use rand::Rng;

use super::tsp::{two_opt, DistanceMatrix, Point};
use super::TaskError;

/// Largest customer count accepted by [`brute_force`].
pub const BRUTE_FORCE_MAX_CUSTOMERS: usize = 7;
/// Generated demands are uniform on `1..=MAX_DEMAND`.
pub const MAX_DEMAND: u32 = 9;
pub const DEPOT: usize = 0;

/// Node 0 is the depot; nodes `1..=customers` are customers.
#[derive(Debug, Clone, PartialEq)]
pub struct CvrpInstance {
    pub coords: Vec<Point>,
    pub demands: Vec<u32>,
    pub capacity: u32,
    pub dist: DistanceMatrix,
    pub reference_cost: Option<f64>,
}

impl CvrpInstance {
    pub fn new(coords: Vec<Point>, demands: Vec<u32>, capacity: u32) -> Result<Self, TaskError> {
        if coords.len() != demands.len() {
            return Err(TaskError::LengthMismatch(coords.len(), demands.len()));
        }
        if coords.len() < 2 {
            return Err(TaskError::BadParams("CVRP needs a depot and a customer".into()));
        }
        if demands[DEPOT] != 0 {
            return Err(TaskError::BadParams("depot demand must be 0".into()));
        }
        if capacity == 0 {
            return Err(TaskError::BadParams("capacity must be positive".into()));
        }
        if let Some(c) = (1..demands.len()).find(|&c| demands[c] == 0 || demands[c] > capacity) {
            return Err(TaskError::BadParams(format!(
                "customer {c} demand {} not in 1..={capacity}",
                demands[c]
            )));
        }
        let dist = DistanceMatrix::euclidean(&coords);
        Ok(Self {
            coords,
            demands,
            capacity,
            dist,
            reference_cost: None,
        })
    }

    pub fn customers(&self) -> usize {
        self.coords.len() - 1
    }

    /// Exact optimum for small instances, otherwise nearest-feasible-neighbour
    /// routes improved by per-route 2-opt.
    pub fn default_reference(&self) -> f64 {
        if self.customers() <= BRUTE_FORCE_MAX_CUSTOMERS {
            brute_force(self).expect("size checked")
        } else {
            cvrp_cost(&baseline_routes(self), self)
        }
    }
}

pub fn generate<R: Rng + ?Sized>(customers: usize, capacity: u32, rng: &mut R) -> CvrpInstance {
    let coords: Vec<Point> = (0..=customers)
        .map(|_| [rng.random::<f64>(), rng.random::<f64>()])
        .collect();
    let mut demands = vec![0];
    demands.extend((0..customers).map(|_| rng.random_range(1..=MAX_DEMAND)));
    CvrpInstance::new(coords, demands, capacity.max(MAX_DEMAND)).expect("generated instance is valid")
}

/// Total distance; every route implicitly starts and ends at the depot.
pub fn cvrp_cost(routes: &[Vec<usize>], instance: &CvrpInstance) -> f64 {
    let d = &instance.dist;
    let mut total = 0.0;
    for route in routes {
        let mut prev = DEPOT;
        for &c in route {
            total += d.get(prev, c);
            prev = c;
        }
        total += d.get(prev, DEPOT);
    }
    total
}

/// Every customer exactly once, no depot inside a route, and no route over
/// capacity.
pub fn cvrp_feasible(routes: &[Vec<usize>], instance: &CvrpInstance) -> bool {
    let n = instance.coords.len();
    let mut seen = vec![false; n];
    for route in routes {
        let mut load = 0u64;
        for &c in route {
            if c == DEPOT || c >= n || seen[c] {
                return false;
            }
            seen[c] = true;
            load += u64::from(instance.demands[c]);
        }
        if load > u64::from(instance.capacity) {
            return false;
        }
    }
    seen[1..].iter().all(|&s| s)
}

/// Optimal cost by enumerating every set of customer sequences that fits
/// the capacity.
pub fn brute_force(instance: &CvrpInstance) -> Result<f64, TaskError> {
    let k = instance.customers();
    if k > BRUTE_FORCE_MAX_CUSTOMERS {
        return Err(TaskError::TooLarge(format!(
            "CVRP with {k} customers (limit {BRUTE_FORCE_MAX_CUSTOMERS})"
        )));
    }
    let mut routes: Vec<Vec<usize>> = Vec::new();
    let mut loads: Vec<u32> = Vec::new();
    let mut best = f64::INFINITY;
    place(instance, 1, &mut routes, &mut loads, &mut best);
    Ok(best)
}

// Customer `c` either opens a new route or is inserted at any position of an
// existing one; this generates each solution exactly once.
fn place(
    inst: &CvrpInstance,
    c: usize,
    routes: &mut Vec<Vec<usize>>,
    loads: &mut Vec<u32>,
    best: &mut f64,
) {
    if c > inst.customers() {
        *best = best.min(cvrp_cost(routes, inst));
        return;
    }
    let demand = inst.demands[c];
    for r in 0..routes.len() {
        if loads[r] + demand > inst.capacity {
            continue;
        }
        loads[r] += demand;
        for pos in 0..=routes[r].len() {
            routes[r].insert(pos, c);
            place(inst, c + 1, routes, loads, best);
            routes[r].remove(pos);
        }
        loads[r] -= demand;
    }
    routes.push(vec![c]);
    loads.push(demand);
    place(inst, c + 1, routes, loads, best);
    routes.pop();
    loads.pop();
}

/// Nearest feasible customer until the vehicle is full, then back to the
/// depot; each route is then improved by 2-opt.
pub fn baseline_routes(instance: &CvrpInstance) -> Vec<Vec<usize>> {
    let d = &instance.dist;
    let n = instance.coords.len();
    let mut visited = vec![false; n];
    visited[DEPOT] = true;
    let mut routes = Vec::new();
    let mut remaining = instance.customers();
    while remaining > 0 {
        let mut route = Vec::new();
        let mut rest = instance.capacity;
        let mut current = DEPOT;
        while let Some(next) = (1..n)
            .filter(|&c| !visited[c] && instance.demands[c] <= rest)
            .min_by(|&a, &b| d.get(current, a).total_cmp(&d.get(current, b)))
        {
            visited[next] = true;
            rest -= instance.demands[next];
            route.push(next);
            current = next;
            remaining -= 1;
        }
        routes.push(route);
    }
    routes
        .into_iter()
        .map(|route| {
            let mut tour = vec![DEPOT];
            tour.extend(route);
            let tour = two_opt(tour, d);
            let start = tour.iter().position(|&v| v == DEPOT).expect("depot in tour");
            tour[start + 1..].iter().chain(&tour[..start]).copied().collect()
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn line(capacity: u32) -> CvrpInstance {
        CvrpInstance::new(vec![[0.0, 0.0], [0.0, 1.0], [0.0, 2.0]], vec![0, 1, 1], capacity).unwrap()
    }

    #[test]
    fn cost_examples() {
        let two = line(2);
        assert!(cvrp_feasible(&[vec![1, 2]], &two));
        assert_eq!(cvrp_cost(&[vec![1, 2]], &two), 4.0);

        let one = line(1);
        assert!(!cvrp_feasible(&[vec![1, 2]], &one));
        assert!(cvrp_feasible(&[vec![1], vec![2]], &one));
        assert_eq!(cvrp_cost(&[vec![1], vec![2]], &one), 6.0);
    }

    #[test]
    fn feasibility_requires_exact_partition() {
        let inst = line(2);
        assert!(!cvrp_feasible(&[vec![1, 2], vec![2]], &inst));
        assert!(!cvrp_feasible(&[vec![1]], &inst));
        assert!(!cvrp_feasible(&[vec![0, 1, 2]], &inst));
        assert!(!cvrp_feasible(&[vec![1, 5]], &inst));
    }

    #[test]
    fn instance_validation() {
        assert!(CvrpInstance::new(vec![[0.0, 0.0], [1.0, 0.0]], vec![0, 5], 4).is_err());
        assert!(CvrpInstance::new(vec![[0.0, 0.0], [1.0, 0.0]], vec![1, 1], 4).is_err());
        assert!(CvrpInstance::new(vec![[0.0, 0.0]], vec![0], 4).is_err());
    }

    #[test]
    fn brute_force_small_cases() {
        let single = CvrpInstance::new(vec![[0.0, 0.0], [0.3, 0.4]], vec![0, 3], 5).unwrap();
        assert!((brute_force(&single).unwrap() - 1.0).abs() < 1e-12);
        assert_eq!(brute_force(&line(2)).unwrap(), 4.0);
        assert_eq!(brute_force(&line(1)).unwrap(), 6.0);
    }

    #[test]
    fn brute_force_dominates_baseline() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for _ in 0..5 {
            let inst = generate(6, 12, &mut rng);
            let routes = baseline_routes(&inst);
            assert!(cvrp_feasible(&routes, &inst));
            assert!(brute_force(&inst).unwrap() <= cvrp_cost(&routes, &inst) + 1e-9);
        }
        assert!(matches!(brute_force(&generate(8, 40, &mut rng)), Err(TaskError::TooLarge(_))));
    }

    #[test]
    fn generated_demands_in_range() {
        let inst = generate(100, 50, &mut ChaCha8Rng::seed_from_u64(2));
        assert_eq!(inst.customers(), 100);
        assert_eq!(inst.capacity, 50);
        assert_eq!(inst.demands[0], 0);
        assert!(inst.demands[1..].iter().all(|&d| (1..=MAX_DEMAND).contains(&d)));
        let routes = baseline_routes(&inst);
        assert!(cvrp_feasible(&routes, &inst));
    }
}
