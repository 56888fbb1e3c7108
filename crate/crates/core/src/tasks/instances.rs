//! Instance sets and their line-delimited file format.
//!
//! The first line is a header object echoing the generation parameters; each
//! following line holds one instance with explicit data and its reference
//! objective.

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::asp::AspParams;
use super::cvrp::{self, CvrpInstance};
use super::tsp::{self, Point, TspInstance};
use super::{TaskError, TaskSpec};

/// Fitness evaluations use this many instances unless configured otherwise.
pub const DEFAULT_INSTANCE_COUNT: usize = 16;

#[derive(Debug, Clone, PartialEq)]
pub enum ProblemInstance {
    Asp(AspParams),
    Tsp(TspInstance),
    Cvrp(CvrpInstance),
}

impl ProblemInstance {
    pub fn reference(&self) -> f64 {
        match self {
            ProblemInstance::Asp(p) => p.reference_size as f64,
            ProblemInstance::Tsp(t) => t.reference_length.expect("reference attached"),
            ProblemInstance::Cvrp(c) => c.reference_cost.expect("reference attached"),
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
enum Line {
    Header {
        task: String,
        seed: u64,
        count: usize,
        coordinate_range: [f64; 2],
        #[serde(default, skip_serializing_if = "Option::is_none")]
        demand_range: Option<[u32; 2]>,
    },
    Asp {
        n: usize,
        w: usize,
        reference: usize,
    },
    Tsp {
        coords: Vec<Point>,
        reference: f64,
    },
    Cvrp {
        coords: Vec<Point>,
        demands: Vec<u32>,
        capacity: u32,
        reference: f64,
    },
}

#[derive(Debug, Clone, PartialEq)]
pub struct InstanceSet {
    pub task: TaskSpec,
    pub seed: u64,
    pub instances: Vec<ProblemInstance>,
}

impl InstanceSet {
    /// Generates `count` instances (ASP always has exactly one) and attaches
    /// default references.
    pub fn generate(task: TaskSpec, count: usize, seed: u64) -> Result<Self, TaskError> {
        task.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let instances = match task {
            TaskSpec::Asp { n, w } => vec![ProblemInstance::Asp(AspParams::with_default_reference(n, w)?)],
            TaskSpec::Tsp { n } => (0..count)
                .map(|_| {
                    let mut t = tsp::generate(n, &mut rng);
                    t.reference_length = Some(t.default_reference());
                    ProblemInstance::Tsp(t)
                })
                .collect(),
            TaskSpec::Cvrp { customers, capacity } => (0..count)
                .map(|_| {
                    let mut c = cvrp::generate(customers, capacity, &mut rng);
                    c.reference_cost = Some(c.default_reference());
                    ProblemInstance::Cvrp(c)
                })
                .collect(),
        };
        Ok(Self { task, seed, instances })
    }

    pub fn len(&self) -> usize {
        self.instances.len()
    }

    pub fn is_empty(&self) -> bool {
        self.instances.is_empty()
    }

    pub fn references(&self) -> Vec<f64> {
        self.instances.iter().map(ProblemInstance::reference).collect()
    }

    pub fn write<W: Write>(&self, mut out: W) -> Result<(), TaskError> {
        let header = Line::Header {
            task: self.task.id(),
            seed: self.seed,
            count: self.instances.len(),
            coordinate_range: [0.0, 1.0],
            demand_range: matches!(self.task, TaskSpec::Cvrp { .. }).then_some([1, cvrp::MAX_DEMAND]),
        };
        writeln!(out, "{}", serde_json::to_string(&header).expect("serializable"))?;
        for inst in &self.instances {
            let line = match inst {
                ProblemInstance::Asp(p) => Line::Asp {
                    n: p.n,
                    w: p.w,
                    reference: p.reference_size,
                },
                ProblemInstance::Tsp(t) => Line::Tsp {
                    coords: t.coords.clone(),
                    reference: inst.reference(),
                },
                ProblemInstance::Cvrp(c) => Line::Cvrp {
                    coords: c.coords.clone(),
                    demands: c.demands.clone(),
                    capacity: c.capacity,
                    reference: inst.reference(),
                },
            };
            writeln!(out, "{}", serde_json::to_string(&line).expect("serializable"))?;
        }
        out.flush()?;
        Ok(())
    }

    pub fn save(&self, path: &Path) -> Result<(), TaskError> {
        self.write(BufWriter::new(File::create(path)?))
    }

    pub fn read<R: BufRead>(input: R) -> Result<Self, TaskError> {
        let mut task = None;
        let mut seed = 0;
        let mut instances = Vec::new();
        for (idx, line) in input.lines().enumerate() {
            let line_no = idx + 1;
            let text = line?;
            if text.trim().is_empty() {
                continue;
            }
            let bad = |message: String| TaskError::Malformed { line: line_no, message };
            let parsed: Line = serde_json::from_str(&text).map_err(|e| bad(e.to_string()))?;
            match parsed {
                Line::Header { task: t, seed: s, .. } => {
                    if task.is_some() {
                        return Err(bad("second header".into()));
                    }
                    task = Some(t.parse::<TaskSpec>().map_err(|e| bad(e.to_string()))?);
                    seed = s;
                }
                _ if task.is_none() => return Err(bad("instance before header".into())),
                Line::Asp { n, w, reference } => {
                    let p = AspParams { n, w, reference_size: reference };
                    p.validate().map_err(|e| bad(e.to_string()))?;
                    instances.push(ProblemInstance::Asp(p));
                }
                Line::Tsp { coords, reference } => {
                    check_reference(reference).map_err(|e| bad(e.to_string()))?;
                    let mut t = TspInstance::from_coords(coords);
                    t.reference_length = Some(reference);
                    instances.push(ProblemInstance::Tsp(t));
                }
                Line::Cvrp {
                    coords,
                    demands,
                    capacity,
                    reference,
                } => {
                    check_reference(reference).map_err(|e| bad(e.to_string()))?;
                    let mut c = CvrpInstance::new(coords, demands, capacity).map_err(|e| bad(e.to_string()))?;
                    c.reference_cost = Some(reference);
                    instances.push(ProblemInstance::Cvrp(c));
                }
            }
        }
        let task = task.ok_or(TaskError::Malformed {
            line: 1,
            message: "missing header".into(),
        })?;
        Ok(Self { task, seed, instances })
    }

    pub fn load(path: &Path) -> Result<Self, TaskError> {
        Self::read(BufReader::new(File::open(path)?))
    }
}

fn check_reference(r: f64) -> Result<(), TaskError> {
    if r > 0.0 && r.is_finite() {
        Ok(())
    } else {
        Err(TaskError::BadReference(r))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn generated_sets_round_trip_through_files() {
        for task in ["tsp7", "cvrp5-c10", "asp-3-2", "tsp12"] {
            let set = InstanceSet::generate(task.parse().unwrap(), 3, 5).unwrap();
            let mut buf = Vec::new();
            set.write(&mut buf).unwrap();
            let back = InstanceSet::read(&buf[..]).unwrap();
            assert_eq!(back, set, "{task}");
        }
    }

    #[test]
    fn asp_has_one_instance() {
        let set = InstanceSet::generate("asp-3-2".parse().unwrap(), 16, 0).unwrap();
        assert_eq!(set.len(), 1);
        assert_eq!(set.references(), vec![3.0]);
    }

    #[test]
    fn same_seed_same_instances() {
        let t: TaskSpec = "cvrp50".parse().unwrap();
        assert_eq!(InstanceSet::generate(t, 2, 9).unwrap(), InstanceSet::generate(t, 2, 9).unwrap());
        assert_ne!(InstanceSet::generate(t, 2, 9).unwrap(), InstanceSet::generate(t, 2, 10).unwrap());
    }

    #[test]
    fn malformed_lines_are_located() {
        let text = "{\"kind\":\"header\",\"task\":\"tsp4\",\"seed\":1,\"count\":1,\"coordinate_range\":[0,1]}\n{\"kind\":\"tsp\",\"coords\":[[0,0]]}\n";
        let err = InstanceSet::read(text.as_bytes()).unwrap_err();
        assert!(err.to_string().starts_with("line 2"), "{err}");
        let err = InstanceSet::read("{\"kind\":\"tsp\",\"coords\":[],\"reference\":1}\n".as_bytes()).unwrap_err();
        assert!(err.to_string().contains("before header"));
    }
}
