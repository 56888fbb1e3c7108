//! Admissible set problem A(n, w).
//!
//! Members are vectors in {0,1,2}^n with exactly `w` non-zero entries and
//! pairwise distinct supports. Every three distinct members must have a
//! coordinate whose values form one of the multisets {0,1,2}, {0,0,1} or
//! {0,0,2}.

use std::collections::HashSet;

use serde::{Deserialize, Serialize};

use super::TaskError;

/// Enumeration refuses to allocate more than this many bytes by default.
pub const DEFAULT_ENUM_BUDGET_BYTES: usize = 256 << 20;

/// Largest candidate count the exhaustive maximum search accepts.
pub const BRUTE_FORCE_LIMIT: u128 = 16;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct AspParams {
    pub n: usize,
    pub w: usize,
    /// Best-known set size used as the gap normalizer.
    pub reference_size: usize,
}

impl AspParams {
    /// Exact maximum when the instance is tiny, otherwise the support-count
    /// bound `C(n, w)`.
    pub fn with_default_reference(n: usize, w: usize) -> Result<Self, TaskError> {
        check_params(n, w)?;
        let reference_size = if candidate_count(n, w) <= BRUTE_FORCE_LIMIT {
            brute_force_max(n, w)?
        } else {
            binomial(n, w) as usize
        };
        Ok(Self { n, w, reference_size })
    }

    pub fn validate(&self) -> Result<(), TaskError> {
        check_params(self.n, self.w)?;
        if self.reference_size == 0 || self.reference_size as u128 > binomial(self.n, self.w) {
            return Err(TaskError::BadParams(format!(
                "reference size {} outside 1..=C({}, {})",
                self.reference_size, self.n, self.w
            )));
        }
        Ok(())
    }
}

fn check_params(n: usize, w: usize) -> Result<(), TaskError> {
    if w == 0 || w > n {
        return Err(TaskError::BadParams(format!("need 0 < w <= n, got n={n} w={w}")));
    }
    Ok(())
}

pub fn binomial(n: usize, k: usize) -> u128 {
    if k > n {
        return 0;
    }
    let k = k.min(n - k);
    (0..k).fold(1u128, |acc, i| acc * (n - i) as u128 / (i + 1) as u128)
}

/// `C(n, w) * 2^w`.
pub fn candidate_count(n: usize, w: usize) -> u128 {
    binomial(n, w) << w
}

/// All candidate vectors, stored flat in lexicographic order.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct AspCandidates {
    n: usize,
    data: Vec<u8>,
}

impl AspCandidates {
    pub fn len(&self) -> usize {
        self.data.len() / self.n
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    pub fn get(&self, i: usize) -> &[u8] {
        &self.data[i * self.n..(i + 1) * self.n]
    }

    pub fn iter(&self) -> std::slice::Chunks<'_, u8> {
        self.data.chunks(self.n)
    }
}

pub fn enumerate_candidates(n: usize, w: usize) -> Result<AspCandidates, TaskError> {
    enumerate_candidates_with_budget(n, w, DEFAULT_ENUM_BUDGET_BYTES)
}

pub fn enumerate_candidates_with_budget(
    n: usize,
    w: usize,
    budget_bytes: usize,
) -> Result<AspCandidates, TaskError> {
    check_params(n, w)?;
    let bytes = candidate_count(n, w).saturating_mul(n as u128);
    if bytes > budget_bytes as u128 {
        return Err(TaskError::TooLarge(format!(
            "A({n},{w}) needs {bytes} bytes, budget is {budget_bytes}"
        )));
    }
    let mut data = Vec::with_capacity(bytes as usize);
    let mut current = vec![0u8; n];
    fill(&mut current, 0, w, &mut data);
    Ok(AspCandidates { n, data })
}

fn fill(current: &mut [u8], pos: usize, left: usize, out: &mut Vec<u8>) {
    let n = current.len();
    if pos == n {
        if left == 0 {
            out.extend_from_slice(current);
        }
        return;
    }
    // a zero here is only possible if the remaining slots can still hold `left` non-zeros
    for value in 0..=2u8 {
        let need = if value == 0 { left } else { left.wrapping_sub(1) };
        if (value != 0 && left == 0) || need > n - pos - 1 {
            continue;
        }
        current[pos] = value;
        fill(current, pos + 1, need, out);
    }
    current[pos] = 0;
}

fn support(v: &[u8]) -> u64 {
    v.iter()
        .enumerate()
        .filter(|(_, &x)| x != 0)
        .fold(0u64, |acc, (i, _)| acc | (1 << i))
}

fn coordinate_ok(a: u8, b: u8, c: u8) -> bool {
    let mut t = [a, b, c];
    t.sort_unstable();
    matches!(t, [0, 1, 2] | [0, 0, 1] | [0, 0, 2])
}

/// Whether some coordinate of the three vectors forms {0,1,2}, {0,0,1} or
/// {0,0,2}.
pub fn triple_ok(a: &[u8], b: &[u8], c: &[u8]) -> Result<bool, TaskError> {
    if a.len() != b.len() {
        return Err(TaskError::LengthMismatch(a.len(), b.len()));
    }
    if a.len() != c.len() {
        return Err(TaskError::LengthMismatch(a.len(), c.len()));
    }
    Ok(triple_ok_unchecked(a, b, c))
}

fn triple_ok_unchecked(a: &[u8], b: &[u8], c: &[u8]) -> bool {
    a.iter()
        .zip(b)
        .zip(c)
        .any(|((&x, &y), &z)| coordinate_ok(x, y, z))
}

/// Whether `v` can join the admissible `set`: new support, and every pair
/// already in the set forms a good triple with `v`.
pub fn can_add<V: AsRef<[u8]>>(set: &[V], v: &[u8]) -> bool {
    let sv = support(v);
    if set.iter().any(|m| m.as_ref().len() != v.len() || support(m.as_ref()) == sv) {
        return false;
    }
    for (i, a) in set.iter().enumerate() {
        for b in &set[i + 1..] {
            if !triple_ok_unchecked(a.as_ref(), b.as_ref(), v) {
                return false;
            }
        }
    }
    true
}

/// Full re-check of every member and every triple of `set`.
pub fn is_admissible<V: AsRef<[u8]>>(set: &[V], n: usize, w: usize) -> bool {
    let members: Vec<&[u8]> = set.iter().map(AsRef::as_ref).collect();
    let well_formed = members.iter().all(|v| {
        v.len() == n && v.iter().all(|&x| x <= 2) && v.iter().filter(|&&x| x != 0).count() == w
    });
    if !well_formed {
        return false;
    }
    let supports: HashSet<u64> = members.iter().map(|v| support(v)).collect();
    if supports.len() != members.len() {
        return false;
    }
    let k = members.len();
    for i in 0..k {
        for j in i + 1..k {
            for l in j + 1..k {
                if !triple_ok_unchecked(members[i], members[j], members[l]) {
                    return false;
                }
            }
        }
    }
    true
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct AspConstruction {
    pub set: Vec<Vec<u8>>,
    pub size: usize,
}

/// Greedy construction: candidates are scanned once in descending score
/// order (ties in lexicographic order) and kept when [`can_add`] allows.
///
/// `scores[i]` belongs to the `i`-th candidate of [`enumerate_candidates`].
pub fn greedy_construct(scores: &[f64], n: usize, w: usize) -> Result<AspConstruction, TaskError> {
    let candidates = enumerate_candidates(n, w)?;
    greedy_construct_over(&candidates, scores)
}

pub fn greedy_construct_over(
    candidates: &AspCandidates,
    scores: &[f64],
) -> Result<AspConstruction, TaskError> {
    if scores.len() != candidates.len() {
        return Err(TaskError::ScoreCount {
            expected: candidates.len(),
            got: scores.len(),
        });
    }
    if let Some(bad) = scores.iter().position(|s| !s.is_finite()) {
        return Err(TaskError::NonFiniteScore(bad));
    }
    let mut order: Vec<usize> = (0..candidates.len()).collect();
    // stable sort keeps lexicographic order among equal scores; 0.0 and -0.0
    // compare equal here, as they do in the scaffold
    order.sort_by(|&a, &b| scores[b].partial_cmp(&scores[a]).expect("finite scores"));

    let mut used_supports = HashSet::new();
    let mut set: Vec<Vec<u8>> = Vec::new();
    for idx in order {
        let v = candidates.get(idx);
        if used_supports.contains(&support(v)) {
            continue;
        }
        if can_add(&set, v) {
            used_supports.insert(support(v));
            set.push(v.to_vec());
        }
    }
    let size = set.len();
    Ok(AspConstruction { set, size })
}

/// Exact maximum admissible-set size by depth-first search. Only for
/// instances with at most [`BRUTE_FORCE_LIMIT`] candidates.
pub fn brute_force_max(n: usize, w: usize) -> Result<usize, TaskError> {
    check_params(n, w)?;
    let count = candidate_count(n, w);
    if count > BRUTE_FORCE_LIMIT {
        return Err(TaskError::TooLarge(format!(
            "A({n},{w}) has {count} candidates, limit is {BRUTE_FORCE_LIMIT}"
        )));
    }
    let candidates = enumerate_candidates(n, w)?;
    let all: Vec<&[u8]> = candidates.iter().collect();
    let mut best = 0;
    let mut chosen: Vec<&[u8]> = Vec::new();
    search(&all, 0, &mut chosen, &mut best);
    Ok(best)
}

fn search<'a>(all: &[&'a [u8]], next: usize, chosen: &mut Vec<&'a [u8]>, best: &mut usize) {
    *best = (*best).max(chosen.len());
    if chosen.len() + (all.len() - next) <= *best {
        return;
    }
    for i in next..all.len() {
        if can_add(chosen, all[i]) {
            chosen.push(all[i]);
            search(all, i + 1, chosen, best);
            chosen.pop();
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn candidate_counts() {
        assert_eq!(enumerate_candidates(4, 2).unwrap().len(), 24);
        assert_eq!(candidate_count(15, 10), 3_075_072);
        let all = enumerate_candidates(2, 2).unwrap();
        let got: Vec<Vec<u8>> = all.iter().map(<[u8]>::to_vec).collect();
        assert_eq!(got, vec![vec![1, 1], vec![1, 2], vec![2, 1], vec![2, 2]]);
    }

    #[test]
    fn enumeration_is_lexicographic_and_exact() {
        let all = enumerate_candidates(5, 3).unwrap();
        assert_eq!(all.len() as u128, candidate_count(5, 3));
        let vs: Vec<&[u8]> = all.iter().collect();
        assert!(vs.windows(2).all(|p| p[0] < p[1]));
        assert!(vs.iter().all(|v| v.iter().filter(|&&x| x != 0).count() == 3));
    }

    #[test]
    fn enumeration_respects_budget() {
        assert!(matches!(
            enumerate_candidates_with_budget(15, 10, 1 << 20),
            Err(TaskError::TooLarge(_))
        ));
    }

    #[test]
    fn large_enumeration_count() {
        assert_eq!(enumerate_candidates(15, 10).unwrap().len(), 3_075_072);
    }

    #[test]
    fn triple_examples() {
        assert!(triple_ok(&[1, 1], &[2, 0], &[0, 0]).unwrap());
        assert!(!triple_ok(&[1, 1], &[1, 1], &[2, 2]).unwrap());
        assert!(triple_ok(&[1, 0], &[0, 0], &[0, 1]).unwrap());
        assert!(matches!(
            triple_ok(&[1], &[1, 0], &[0, 0]),
            Err(TaskError::LengthMismatch(1, 2))
        ));
    }

    #[test]
    fn can_add_rules() {
        let empty: Vec<Vec<u8>> = vec![];
        assert!(can_add(&empty, &[1, 1, 0]));
        assert!(can_add(&[vec![1, 1, 0]], &[0, 2, 2]));
        assert!(!can_add(&[vec![1, 1, 0]], &[2, 1, 0]));
    }

    #[test]
    fn brute_force_values() {
        assert_eq!(brute_force_max(1, 1).unwrap(), 1);
        // regression constants produced by the exhaustive search itself
        assert_eq!(brute_force_max(2, 1).unwrap(), 2);
        assert_eq!(brute_force_max(3, 2).unwrap(), 3);
        assert!(matches!(brute_force_max(4, 2), Err(TaskError::TooLarge(_))));
    }

    #[test]
    fn constant_scores_follow_lexicographic_order() {
        let out = greedy_construct(&[0.0; 12], 3, 2).unwrap();
        assert_eq!(out.set, vec![vec![0, 1, 1], vec![1, 0, 1], vec![1, 2, 0]]);
        assert_eq!(out.size, 3);
        assert!(is_admissible(&out.set, 3, 2));
    }

    #[test]
    fn greedy_rejects_bad_scores() {
        let mut s = vec![0.0; 12];
        s[4] = f64::NAN;
        assert!(matches!(greedy_construct(&s, 3, 2), Err(TaskError::NonFiniteScore(4))));
        assert!(matches!(
            greedy_construct(&[0.0; 3], 3, 2),
            Err(TaskError::ScoreCount { expected: 12, got: 3 })
        ));
    }

    #[test]
    fn default_references() {
        assert_eq!(AspParams::with_default_reference(3, 2).unwrap().reference_size, 3);
        assert_eq!(AspParams::with_default_reference(15, 10).unwrap().reference_size, 3003);
    }
}
