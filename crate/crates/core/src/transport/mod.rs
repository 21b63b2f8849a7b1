//! Exact squared Wasserstein-2 distance between equal-size uniform
//! ensembles. For such measures an optimal plan is a permutation, so the
//! problem is a linear assignment under squared Euclidean cost.

mod hungarian;

pub use hungarian::AssignmentSolver;

use itertools::Itertools;

use crate::error::{Error, Result};
use crate::linalg::Vec3;
use crate::scalar::Real;

/// Largest instance [`w2_bruteforce`] accepts.
pub const BRUTEFORCE_MAX: usize = 8;

/// A pairing `i -> permutation[i]` of two ensembles and its mean squared
/// displacement.
#[derive(Clone, Debug, PartialEq)]
pub struct CouplingPlan<T> {
    permutation: Vec<usize>,
    cost: T,
}

impl<T: Real> CouplingPlan<T> {
    /// Checks that `permutation` is a bijection and computes its cost on
    /// `(a, b)`.
    pub fn new(permutation: Vec<usize>, a: impl AsRef<[Vec3<T>]>, b: impl AsRef<[Vec3<T>]>) -> Result<Self> {
        let (a, b) = (a.as_ref(), b.as_ref());
        check_sizes(a, b)?;
        if permutation.len() != a.len() || !is_permutation(&permutation) {
            return Err(Error::InvalidPermutation { n: a.len() });
        }
        let cost = cost_of(&permutation, a, b);
        Ok(Self { permutation, cost })
    }

    pub fn identity(a: impl AsRef<[Vec3<T>]>, b: impl AsRef<[Vec3<T>]>) -> Result<Self> {
        let n = a.as_ref().len();
        Self::new((0..n).collect(), a, b)
    }

    pub(crate) fn from_parts(permutation: Vec<usize>, cost: T) -> Self {
        debug_assert!(is_permutation(&permutation));
        Self { permutation, cost }
    }

    pub fn permutation(&self) -> &[usize] {
        &self.permutation
    }

    /// `(1/N) sum_i |A_i - B_perm(i)|^2` on the ensembles the plan was built
    /// for.
    pub fn cost(&self) -> T {
        self.cost
    }

    pub fn len(&self) -> usize {
        self.permutation.len()
    }

    pub fn is_empty(&self) -> bool {
        self.permutation.is_empty()
    }

    pub fn is_identity(&self) -> bool {
        self.permutation.iter().enumerate().all(|(i, &j)| i == j)
    }
}

fn is_permutation(p: &[usize]) -> bool {
    let mut seen = vec![false; p.len()];
    for &j in p {
        if j >= p.len() || std::mem::replace(&mut seen[j], true) {
            return false;
        }
    }
    true
}

fn check_sizes<T>(a: &[Vec3<T>], b: &[Vec3<T>]) -> Result<()> {
    if a.len() != b.len() {
        return Err(Error::SizeMismatch { left: a.len(), right: b.len() });
    }
    if a.is_empty() {
        return Err(Error::param("n", "ensembles must be non-empty"));
    }
    Ok(())
}

fn cost_of<T: Real>(perm: &[usize], a: &[Vec3<T>], b: &[Vec3<T>]) -> T {
    let mut s = T::zero();
    for (i, &j) in perm.iter().enumerate() {
        s = s + (a[i] - b[j]).norm_squared();
    }
    s / T::from_count(a.len())
}

/// `(1/N) sum_i |A_i - B_perm(i)|^2` for `plan`'s permutation on any pair of
/// equal-size ensembles.
pub fn plan_cost<T: Real>(plan: &CouplingPlan<T>, a: impl AsRef<[Vec3<T>]>, b: impl AsRef<[Vec3<T>]>) -> Result<T> {
    let (a, b) = (a.as_ref(), b.as_ref());
    check_sizes(a, b)?;
    if plan.len() != a.len() {
        return Err(Error::SizeMismatch { left: plan.len(), right: a.len() });
    }
    Ok(cost_of(&plan.permutation, a, b))
}

/// Optimal assignment by shortest augmenting paths. Among optimal
/// permutations the lexicographically smallest is returned.
pub fn w2_exact<T: Real>(a: impl AsRef<[Vec3<T>]>, b: impl AsRef<[Vec3<T>]>) -> Result<CouplingPlan<T>> {
    AssignmentSolver::new().solve(a, b)
}

/// Exhaustive search over all `N!` permutations in lexicographic order,
/// keeping the first minimum. Test oracle for `N <= 8`.
pub fn w2_bruteforce<T: Real>(a: impl AsRef<[Vec3<T>]>, b: impl AsRef<[Vec3<T>]>) -> Result<CouplingPlan<T>> {
    let (a, b) = (a.as_ref(), b.as_ref());
    check_sizes(a, b)?;
    let n = a.len();
    if n > BRUTEFORCE_MAX {
        return Err(Error::TooLarge { n, max: BRUTEFORCE_MAX });
    }
    let mut best: Option<(Vec<usize>, T)> = None;
    for perm in (0..n).permutations(n) {
        let c = cost_of(&perm, a, b);
        if best.as_ref().map_or(true, |(_, bc)| c < *bc) {
            best = Some((perm, c));
        }
    }
    let (perm, cost) = best.expect("at least one permutation");
    Ok(CouplingPlan { permutation: perm, cost })
}
