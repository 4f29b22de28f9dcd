//! Coordination classification: enumerate time-set families, test Hessian
//! subblocks for positive definiteness, and assemble per-set solution
//! memberships with their average costs.

use nalgebra::DMatrix;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::problem::{Agent, IndexMap, JointPoint, TwoAgentProblem};
use crate::search::StationaryPoint;

/// Default relative threshold for the positive-definiteness test.
pub const PD_EPS_REL: f64 = 1e-8;

/// A set of time indices in {1, ..., T}. Contiguous intervals keep their
/// [start, end] form; anything else stores explicit sorted indices. The empty
/// set is representable (as an empty subset) but only enters a family when
/// explicitly requested.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum TimeSet {
    Interval { start: usize, end: usize },
    Subset { indices: Vec<usize> },
}

impl TimeSet {
    pub fn interval(start: usize, end: usize) -> Self {
        assert!(start >= 1 && start <= end);
        TimeSet::Interval { start, end }
    }

    pub fn subset(mut indices: Vec<usize>) -> Self {
        indices.sort_unstable();
        indices.dedup();
        TimeSet::Subset { indices }
    }

    pub fn empty() -> Self {
        TimeSet::Subset { indices: vec![] }
    }

    pub fn len(&self) -> usize {
        match self {
            TimeSet::Interval { start, end } => end - start + 1,
            TimeSet::Subset { indices } => indices.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn indices(&self) -> Vec<usize> {
        match self {
            TimeSet::Interval { start, end } => (*start..=*end).collect(),
            TimeSet::Subset { indices } => indices.clone(),
        }
    }

    pub fn contains(&self, t: usize) -> bool {
        match self {
            TimeSet::Interval { start, end } => (*start..=*end).contains(&t),
            TimeSet::Subset { indices } => indices.binary_search(&t).is_ok(),
        }
    }

    pub fn is_subset_of(&self, other: &TimeSet) -> bool {
        self.indices().iter().all(|&t| other.contains(t))
    }

    /// Bitmask over times 1..=64; only valid for max index <= 64.
    fn mask(&self) -> Option<u64> {
        let mut m = 0u64;
        for t in self.indices() {
            if t == 0 || t > 64 {
                return None;
            }
            m |= 1u64 << (t - 1);
        }
        Some(m)
    }

    /// Compact display form: "a-b" for intervals, "t1+t2+..." otherwise,
    /// "{}" for the empty set.
    pub fn label(&self) -> String {
        match self {
            TimeSet::Interval { start, end } => format!("{start}-{end}"),
            TimeSet::Subset { indices } if indices.is_empty() => "{}".to_string(),
            TimeSet::Subset { indices } => indices
                .iter()
                .map(|t| t.to_string())
                .collect::<Vec<_>>()
                .join("+"),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum FamilyMode {
    Contiguous,
    PowerSet,
}

/// Enumerates the time-set family: all contiguous intervals (T(T+1)/2 of
/// them) or all non-empty subsets (2^T - 1, requires T <= 16). Ordered by
/// cardinality ascending, then lexicographically; the empty set, when
/// requested, comes first.
pub fn enumerate_sets(
    horizon: usize,
    mode: FamilyMode,
    include_empty: bool,
) -> Result<Vec<TimeSet>> {
    if horizon < 1 {
        return Err(Error::InvalidParameter {
            name: "horizon",
            reason: "must be >= 1".into(),
        });
    }
    let mut family: Vec<TimeSet> = Vec::new();
    if include_empty {
        family.push(TimeSet::empty());
    }
    match mode {
        FamilyMode::Contiguous => {
            let mut intervals: Vec<(usize, usize)> = (1..=horizon)
                .flat_map(|a| (a..=horizon).map(move |b| (a, b)))
                .collect();
            intervals.sort_by_key(|&(a, b)| (b - a, a));
            family.extend(intervals.into_iter().map(|(a, b)| TimeSet::interval(a, b)));
        }
        FamilyMode::PowerSet => {
            if horizon > 16 {
                return Err(Error::Capacity { horizon });
            }
            let mut subsets: Vec<Vec<usize>> = (1u32..(1u32 << horizon))
                .map(|bits| (1..=horizon).filter(|t| bits & (1 << (t - 1)) != 0).collect())
                .collect();
            subsets.sort_by(|a, b| a.len().cmp(&b.len()).then_with(|| a.cmp(b)));
            family.extend(subsets.into_iter().map(TimeSet::subset));
        }
    }
    Ok(family)
}

/// Principal submatrix of `h` on both agents' variables restricted to the
/// time-steps in `set`, preserving the agent-major order.
pub fn subblock(h: &DMatrix<f64>, set: &TimeSet, map: &IndexMap) -> DMatrix<f64> {
    let dims = map.dims();
    let mut idx = Vec::with_capacity(set.len() * (dims.dx + dims.dy));
    for t in set.indices() {
        for k in 0..dims.dx {
            idx.push(map.flat_index(Agent::One, t, k).expect("set within range"));
        }
    }
    for t in set.indices() {
        for k in 0..dims.dy {
            idx.push(map.flat_index(Agent::Two, t, k).expect("set within range"));
        }
    }
    gather(h, &idx)
}

fn gather(h: &DMatrix<f64>, idx: &[usize]) -> DMatrix<f64> {
    let m = idx.len();
    DMatrix::from_fn(m, m, |r, c| h[(idx[r], idx[c])])
}

/// Strict positive-definiteness test: true iff M - eps I admits a Cholesky
/// factorization, with eps = eps_rel * (1 + max |diagonal|). Semidefinite
/// borderline cases come out false.
pub fn is_pd(m: &DMatrix<f64>, eps_rel: f64) -> Result<bool> {
    let n = m.nrows();
    if n != m.ncols() {
        return Err(Error::NotSymmetric {
            max_asymmetry: f64::INFINITY,
        });
    }
    let mut asym = 0.0_f64;
    for i in 0..n {
        for j in (i + 1)..n {
            asym = asym.max((m[(i, j)] - m[(j, i)]).abs());
        }
    }
    let scale = m.diagonal().amax();
    if asym > 1e-12 * (1.0 + scale) {
        return Err(Error::NotSymmetric { max_asymmetry: asym });
    }
    if n == 0 {
        // Vacuously positive definite; the empty time-set restricts to this.
        return Ok(true);
    }
    let eps = eps_rel * (1.0 + scale);
    let mut shifted = m.clone();
    for i in 0..n {
        shifted[(i, i)] -= eps;
    }
    Ok(shifted.cholesky().is_some())
}

/// Compact membership bitset over an enumerated family.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FamilyBitset {
    blocks: Vec<u64>,
    len: usize,
}

impl FamilyBitset {
    pub fn new(len: usize) -> Self {
        Self {
            blocks: vec![0; len.div_ceil(64)],
            len,
        }
    }

    pub fn set(&mut self, i: usize) {
        self.blocks[i / 64] |= 1u64 << (i % 64);
    }

    pub fn get(&self, i: usize) -> bool {
        self.blocks[i / 64] & (1u64 << (i % 64)) != 0
    }

    pub fn ones(&self) -> Vec<usize> {
        (0..self.len).filter(|&i| self.get(i)).collect()
    }
}

/// One classified stationary point.
#[derive(Debug, Clone, Serialize)]
pub struct SolutionRecord {
    pub point: StationaryPoint,
    pub agent_one_pd: bool,
    pub agent_two_pd: bool,
    /// Indices into the atlas family of the sets this solution is coordinated on.
    pub coordinated_sets: Vec<usize>,
    /// Inclusion-maximal coordinated sets, largest first.
    pub maximal_sets: Vec<TimeSet>,
    pub min_eigenvalue: f64,
    #[serde(skip)]
    membership: FamilyBitset,
}

impl SolutionRecord {
    pub fn is_coordinated_on(&self, family_index: usize) -> bool {
        self.membership.get(family_index)
    }
}

/// Classified solution set for one problem and family.
#[derive(Debug, Clone, Serialize)]
pub struct SolutionAtlas {
    pub problem_name: String,
    pub problem_params: std::collections::BTreeMap<String, f64>,
    pub horizon: usize,
    pub family: Vec<TimeSet>,
    pub records: Vec<SolutionRecord>,
    /// Per family index, the record indices coordinated on that set.
    pub sol_members: Vec<Vec<usize>>,
    /// Per family index, the mean cost over members (None when empty).
    pub fbar: Vec<Option<f64>>,
    /// Family indices whose solution set is empty.
    pub empty_sets: Vec<usize>,
    /// First-order points dropped because an agent block failed the PD test.
    pub discarded_points: usize,
}

/// Classifies stationary points against a time-set family.
///
/// Evaluates one Hessian per point, discards points whose per-agent diagonal
/// blocks are not both positive definite, then tests the family subblocks for
/// the survivors. The assembled atlas is checked for downward closure of the
/// memberships before it is returned.
pub fn classify(
    points: &[StationaryPoint],
    problem: &TwoAgentProblem,
    family: &[TimeSet],
) -> Result<SolutionAtlas> {
    let dims = problem.dims();
    let map = problem.index_map();
    for set in family {
        if let Some(&t) = set.indices().iter().find(|&&t| t < 1 || t > dims.horizon) {
            return Err(Error::InvalidParameter {
                name: "family",
                reason: format!("time index {t} outside 1..={}", dims.horizon),
            });
        }
    }

    let classified: Vec<Option<SolutionRecord>> = points
        .par_iter()
        .map(|sp| classify_one(sp, problem, family, &map))
        .collect::<Result<Vec<_>>>()?;

    let mut records = Vec::new();
    let mut discarded = 0usize;
    for rec in classified {
        match rec {
            Some(r) => records.push(r),
            None => discarded += 1,
        }
    }

    let mut sol_members = vec![Vec::new(); family.len()];
    for (ri, rec) in records.iter().enumerate() {
        for &fi in &rec.coordinated_sets {
            sol_members[fi].push(ri);
        }
    }
    let mut fbar = Vec::with_capacity(family.len());
    let mut empty_sets = Vec::new();
    for (fi, members) in sol_members.iter().enumerate() {
        if members.is_empty() {
            empty_sets.push(fi);
            fbar.push(None);
        } else {
            let sum: f64 = members.iter().map(|&ri| records[ri].point.cost).sum();
            fbar.push(Some(sum / members.len() as f64));
        }
    }

    let atlas = SolutionAtlas {
        problem_name: problem.name().to_string(),
        problem_params: problem.params().clone(),
        horizon: dims.horizon,
        family: family.to_vec(),
        records,
        sol_members,
        fbar,
        empty_sets,
        discarded_points: discarded,
    };
    verify_downward_closure(&atlas)?;
    Ok(atlas)
}

fn classify_one(
    sp: &StationaryPoint,
    problem: &TwoAgentProblem,
    family: &[TimeSet],
    map: &IndexMap,
) -> Result<Option<SolutionRecord>> {
    let dims = problem.dims();
    let z = JointPoint::new(sp.point.clone(), &dims).map_err(|_| Error::SolverFailure(
        "stationary point no longer matches problem dimensions".into(),
    ))?;
    let h = problem.hessian(&z);
    let nx = dims.agent_one_dim();
    let n = dims.joint_dim();

    let hxx = h.view((0, 0), (nx, nx)).into_owned();
    let hyy = h.view((nx, nx), (n - nx, n - nx)).into_owned();
    let agent_one_pd = is_pd(&hxx, PD_EPS_REL)?;
    let agent_two_pd = is_pd(&hyy, PD_EPS_REL)?;
    if !(agent_one_pd && agent_two_pd) {
        return Ok(None);
    }

    let min_eigenvalue = nalgebra::SymmetricEigen::new(h.clone())
        .eigenvalues
        .iter()
        .copied()
        .fold(f64::INFINITY, f64::min);

    let mut membership = FamilyBitset::new(family.len());
    for (fi, set) in family.iter().enumerate() {
        let block = subblock(&h, set, map);
        if is_pd(&block, PD_EPS_REL)? {
            membership.set(fi);
        }
    }
    let coordinated_sets = membership.ones();
    let coordinated: Vec<TimeSet> = coordinated_sets
        .iter()
        .map(|&fi| family[fi].clone())
        .collect();
    let maximal = maximal_sets(&coordinated);

    Ok(Some(SolutionRecord {
        point: sp.clone(),
        agent_one_pd,
        agent_two_pd,
        coordinated_sets,
        maximal_sets: maximal,
        min_eigenvalue,
        membership,
    }))
}

/// Removes every set strictly contained in another member; output ordered by
/// cardinality descending, then lexicographically.
pub fn maximal_sets(sets: &[TimeSet]) -> Vec<TimeSet> {
    let mut out: Vec<TimeSet> = sets
        .iter()
        .filter(|s| {
            !sets
                .iter()
                .any(|other| *s != other && s.is_subset_of(other))
        })
        .cloned()
        .collect();
    out.sort_by(|a, b| {
        b.len()
            .cmp(&a.len())
            .then_with(|| a.indices().cmp(&b.indices()))
    });
    out.dedup();
    out
}

/// Exhaustive nesting-monotonicity check: membership in SOL_{S'} implies
/// membership in SOL_S for every S subset of S' in the family.
pub fn verify_downward_closure(atlas: &SolutionAtlas) -> Result<()> {
    let pairs = subset_pairs(&atlas.family)?;
    for rec in &atlas.records {
        for &(small, large) in &pairs {
            if rec.is_coordinated_on(large) && !rec.is_coordinated_on(small) {
                return Err(Error::SolverFailure(format!(
                    "downward closure violated: coordinated on {} but not on its subset {}",
                    atlas.family[large].label(),
                    atlas.family[small].label()
                )));
            }
        }
    }
    Ok(())
}

/// All (i, j) pairs with family[i] a strict subset of family[j]. Uses bitmask
/// submask enumeration when the family is large (the power-set case).
fn subset_pairs(family: &[TimeSet]) -> Result<Vec<(usize, usize)>> {
    let mut pairs = Vec::new();
    if family.len() > 4096 {
        let masks: Vec<u64> = family
            .iter()
            .map(|s| {
                s.mask().ok_or_else(|| Error::SolverFailure(
                    "family too large for mask-based closure check".into(),
                ))
            })
            .collect::<Result<Vec<_>>>()?;
        let by_mask: std::collections::HashMap<u64, usize> =
            masks.iter().enumerate().map(|(i, &m)| (m, i)).collect();
        for (j, &mj) in masks.iter().enumerate() {
            // Enumerate strict submasks of mj.
            let mut sub = mj.wrapping_sub(1) & mj;
            loop {
                if let Some(&i) = by_mask.get(&sub) {
                    pairs.push((i, j));
                }
                if sub == 0 {
                    break;
                }
                sub = sub.wrapping_sub(1) & mj;
            }
        }
    } else {
        for (i, a) in family.iter().enumerate() {
            for (j, b) in family.iter().enumerate() {
                if i != j && a.is_subset_of(b) && a != b {
                    pairs.push((i, j));
                }
            }
        }
    }
    Ok(pairs)
}
