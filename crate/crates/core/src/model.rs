//! The double-core decomposition `(G + H) ×_1 U^(1) ⋯ ×_N U^(N)`.
//!
//! `G` is a free (homogeneous) core. `H` is a heterogeneous core whose slices
//! are tied within subject subgroups: every slice listed in one group must be
//! bitwise identical.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{DcotError, Result};
use crate::linalg::symmetric_eigen;
use crate::tensor::{matricize, multilinear_product, multilinear_product_transposed, DenseMatrix, DenseTensor, Shape};

/// Restricts a group's slices to one index of a second mode, giving
/// fiber-shaped groups such as `H(m, :, κ, :)`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct FixedIndex {
    pub mode: usize,
    pub index: usize,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct SliceGroup {
    /// Slice indices along the partition mode that share one H-subtensor.
    pub members: Vec<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub fixed: Option<FixedIndex>,
}

impl SliceGroup {
    pub fn new(members: Vec<usize>) -> Self {
        SliceGroup { members, fixed: None }
    }

    pub fn with_fixed(members: Vec<usize>, mode: usize, index: usize) -> Self {
        SliceGroup { members, fixed: Some(FixedIndex { mode, index }) }
    }
}

/// Subject subgroups over the slices of one core mode.
#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct SubjectPartition {
    pub mode: usize,
    pub groups: Vec<SliceGroup>,
}

impl SubjectPartition {
    pub fn new(mode: usize, groups: Vec<SliceGroup>) -> Self {
        SubjectPartition { mode, groups }
    }

    /// No ties at all.
    pub fn none() -> Self {
        SubjectPartition::default()
    }

    pub fn is_empty(&self) -> bool {
        self.groups.is_empty()
    }

    /// Contiguous groups of `size` slices each along `mode`, covering `count` slices.
    pub fn contiguous(mode: usize, count: usize, size: usize) -> Self {
        let groups = (0..count)
            .collect::<Vec<_>>()
            .chunks(size.max(1))
            .map(|c| SliceGroup::new(c.to_vec()))
            .collect();
        SubjectPartition { mode, groups }
    }

    pub fn validate(&self, shape: &Shape) -> Result<()> {
        self.slice_positions(shape).map(|_| ())
    }

    /// For every group, the linear positions of each member slice. Positions
    /// within a slice follow storage order, so equal offsets line up across
    /// members.
    pub fn slice_positions(&self, shape: &Shape) -> Result<Vec<Vec<Vec<usize>>>> {
        if self.groups.is_empty() {
            return Ok(Vec::new());
        }
        let ndim = shape.ndim();
        if self.mode >= ndim {
            return Err(DcotError::InvalidPartition(format!(
                "mode {} out of range for a {ndim}-way core",
                self.mode + 1
            )));
        }
        let strides = shape.strides();
        let mut owner = vec![usize::MAX; shape.numel()];
        let mut out = Vec::with_capacity(self.groups.len());
        for (g, group) in self.groups.iter().enumerate() {
            if group.members.is_empty() {
                return Err(DcotError::InvalidPartition(format!("group {} is empty", g + 1)));
            }
            if let Some(f) = group.fixed {
                if f.mode >= ndim || f.mode == self.mode {
                    return Err(DcotError::InvalidPartition(format!(
                        "group {} fixes mode {}, which is not a distinct core mode",
                        g + 1,
                        f.mode + 1
                    )));
                }
                if f.index >= shape.dim(f.mode) {
                    return Err(DcotError::InvalidPartition(format!(
                        "group {} fixes index {} outside mode {} of size {}",
                        g + 1,
                        f.index + 1,
                        f.mode + 1,
                        shape.dim(f.mode)
                    )));
                }
            }
            let mut members = Vec::with_capacity(group.members.len());
            for &m in &group.members {
                if m >= shape.dim(self.mode) {
                    return Err(DcotError::InvalidPartition(format!(
                        "group {} lists slice {} outside mode {} of size {}",
                        g + 1,
                        m + 1,
                        self.mode + 1,
                        shape.dim(self.mode)
                    )));
                }
                let positions: Vec<usize> = (0..shape.numel())
                    .filter(|&l| {
                        (l / strides[self.mode]) % shape.dim(self.mode) == m
                            && group
                                .fixed
                                .is_none_or(|f| (l / strides[f.mode]) % shape.dim(f.mode) == f.index)
                    })
                    .collect();
                for &p in &positions {
                    if owner[p] != usize::MAX {
                        return Err(DcotError::InvalidPartition(format!(
                            "groups {} and {} overlap at {:?}",
                            owner[p] + 1,
                            g + 1,
                            shape.multi_index(p)
                        )));
                    }
                    owner[p] = g;
                }
                members.push(positions);
            }
            out.push(members);
        }
        Ok(out)
    }
}

/// How the slices of a tied group are reconciled.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TieReducer {
    /// Every member takes the arithmetic mean of the group.
    #[default]
    Mean,
    /// Every member copies the group's first listed slice.
    Representative,
}

/// Enforces the subgroup tie constraint on `h`. Slices outside every group
/// are left untouched.
pub fn tie_heterogeneous_core(h: &DenseTensor, partition: &SubjectPartition, reducer: TieReducer) -> Result<DenseTensor> {
    let positions = partition.slice_positions(h.shape())?;
    let mut out = h.clone();
    for members in &positions {
        let len = members[0].len();
        for k in 0..len {
            let value = match reducer {
                TieReducer::Representative => h.data()[members[0][k]],
                TieReducer::Mean => members.iter().map(|m| h.data()[m[k]]).sum::<f64>() / members.len() as f64,
            };
            for m in members {
                out.data_mut()[m[k]] = value;
            }
        }
    }
    Ok(out)
}

/// True when every group's slices are bitwise equal.
pub fn is_tied(h: &DenseTensor, partition: &SubjectPartition) -> Result<bool> {
    let positions = partition.slice_positions(h.shape())?;
    Ok(positions.iter().all(|members| {
        members[1..]
            .iter()
            .all(|m| m.iter().zip(&members[0]).all(|(&a, &b)| h.data()[a].to_bits() == h.data()[b].to_bits()))
    }))
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum InitKind {
    /// The first `rank` columns of the identity.
    Identity,
    Random,
    Hosvd,
}

/// Factor initialization; `kinds` holds either one kind for every mode or one
/// kind per mode.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct InitStrategy {
    pub kinds: Vec<InitKind>,
    #[serde(default)]
    pub seed: u64,
}

impl InitStrategy {
    pub fn new(kind: InitKind, seed: u64) -> Self {
        InitStrategy { kinds: vec![kind], seed }
    }

    pub fn per_mode(kinds: Vec<InitKind>, seed: u64) -> Self {
        InitStrategy { kinds, seed }
    }

    pub fn kind_for(&self, mode: usize) -> InitKind {
        if self.kinds.len() == 1 {
            self.kinds[0]
        } else {
            self.kinds[mode]
        }
    }
}

/// Top-`rank` left singular vectors of `a`, via the eigenvectors of `a aᵀ`.
///
/// Each column's largest-magnitude entry is made positive so the result is
/// deterministic.
pub fn leading_left_singular_vectors(a: &DenseMatrix, rank: usize) -> DenseMatrix {
    let gram = a.transpose().gram();
    let (_, vecs) = symmetric_eigen(&gram);
    let mut u = DenseMatrix::from_fn(a.rows(), rank, |i, j| vecs.get(i, j));
    for j in 0..rank {
        let col = u.column(j);
        let pivot = col.iter().copied().fold(0.0f64, |m, v| if v.abs() > m.abs() { v } else { m });
        if pivot < 0.0 {
            for i in 0..a.rows() {
                let v = u.get(i, j);
                u.set(i, j, -v);
            }
        }
    }
    u
}

pub fn init_factors(x: &DenseTensor, ranks: &[usize], strategy: &InitStrategy) -> Result<Vec<DenseMatrix>> {
    let ndim = x.shape().ndim();
    if ranks.len() != ndim {
        return Err(DcotError::DimensionMismatch(format!("{} ranks for a {ndim}-way tensor", ranks.len())));
    }
    if strategy.kinds.len() != 1 && strategy.kinds.len() != ndim {
        return Err(DcotError::DimensionMismatch(format!(
            "{} init kinds for a {ndim}-way tensor",
            strategy.kinds.len()
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(strategy.seed);
    let mut factors = Vec::with_capacity(ndim);
    for (n, &rank) in ranks.iter().enumerate() {
        let size = x.shape().dim(n);
        if rank == 0 || rank > size {
            return Err(DcotError::RankExceedsMode { mode: n + 1, rank, size });
        }
        let u = match strategy.kind_for(n) {
            InitKind::Identity => DenseMatrix::from_fn(size, rank, |i, j| if i == j { 1.0 } else { 0.0 }),
            InitKind::Random => DenseMatrix::from_fn(size, rank, |_, _| StandardNormal.sample(&mut rng)),
            InitKind::Hosvd => leading_left_singular_vectors(&matricize(x, n)?, rank),
        };
        factors.push(u);
    }
    Ok(factors)
}

/// `x ×_1 U^(1)ᵀ ⋯ ×_N U^(N)ᵀ`
pub fn project_core(x: &DenseTensor, factors: &[DenseMatrix]) -> Result<DenseTensor> {
    multilinear_product_transposed(x, factors)
}

#[derive(Clone, Debug, PartialEq)]
pub struct DcotModel {
    pub factors: Vec<DenseMatrix>,
    pub core_g: DenseTensor,
    pub core_h: DenseTensor,
    pub partition: SubjectPartition,
}

impl DcotModel {
    pub fn new(
        factors: Vec<DenseMatrix>,
        core_g: DenseTensor,
        core_h: DenseTensor,
        partition: SubjectPartition,
    ) -> Result<Self> {
        let model = DcotModel { factors, core_g, core_h, partition };
        model.validate()?;
        Ok(model)
    }

    /// Factors from `strategy`, `G` the projection of `x` onto them and `H`
    /// a tied copy of `G`.
    pub fn initialize(
        x: &DenseTensor,
        ranks: &[usize],
        strategy: &InitStrategy,
        partition: SubjectPartition,
        reducer: TieReducer,
    ) -> Result<Self> {
        let factors = init_factors(x, ranks, strategy)?;
        let core_g = project_core(x, &factors)?;
        let core_h = tie_heterogeneous_core(&core_g, &partition, reducer)?;
        DcotModel::new(factors, core_g, core_h, partition)
    }

    pub fn validate(&self) -> Result<()> {
        let core_shape = self.core_g.shape();
        if self.core_h.shape() != core_shape {
            return Err(DcotError::DimensionMismatch(format!(
                "G has shape {:?} but H has {:?}",
                core_shape,
                self.core_h.shape()
            )));
        }
        if self.factors.len() != core_shape.ndim() {
            return Err(DcotError::DimensionMismatch(format!(
                "{} factors for a {}-way core",
                self.factors.len(),
                core_shape.ndim()
            )));
        }
        for (n, u) in self.factors.iter().enumerate() {
            if u.cols() != core_shape.dim(n) {
                return Err(DcotError::DimensionMismatch(format!(
                    "factor {} has {} columns, core mode has {}",
                    n + 1,
                    u.cols(),
                    core_shape.dim(n)
                )));
            }
        }
        if !is_tied(&self.core_h, &self.partition)? {
            return Err(DcotError::InvalidPartition("H does not satisfy its tie constraint".into()));
        }
        Ok(())
    }

    pub fn ndim(&self) -> usize {
        self.factors.len()
    }

    pub fn ranks(&self) -> Vec<usize> {
        self.core_g.dims().to_vec()
    }

    pub fn data_shape(&self) -> Shape {
        Shape::new(self.factors.iter().map(|u| u.rows()).collect::<Vec<_>>()).expect("factors have positive rows")
    }

    /// `G + H`
    pub fn combined_core(&self) -> DenseTensor {
        self.core_g.add(&self.core_h)
    }

    /// `(G + H) ×_1 U^(1) ⋯ ×_N U^(N)`
    pub fn reconstruct(&self) -> Result<DenseTensor> {
        multilinear_product(&self.combined_core(), &self.factors)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn shape(d: &[usize]) -> Shape {
        Shape::new(d.to_vec()).unwrap()
    }

    #[test]
    fn partition_validation() {
        let s = shape(&[3, 2]);
        assert!(SubjectPartition::new(0, vec![SliceGroup::new(vec![0, 1])]).validate(&s).is_ok());
        assert!(SubjectPartition::new(0, vec![SliceGroup::new(vec![0, 3])]).validate(&s).is_err());
        assert!(SubjectPartition::new(0, vec![SliceGroup::new(vec![])]).validate(&s).is_err());
        assert!(SubjectPartition::new(2, vec![SliceGroup::new(vec![0])]).validate(&s).is_err());
        let overlap = SubjectPartition::new(0, vec![SliceGroup::new(vec![0, 1]), SliceGroup::new(vec![1, 2])]);
        assert!(overlap.validate(&s).is_err());
        // same slices, disjoint fixed indices: fine
        let fibers = SubjectPartition::new(
            0,
            vec![SliceGroup::with_fixed(vec![0, 1], 1, 0), SliceGroup::with_fixed(vec![0, 1], 1, 1)],
        );
        assert!(fibers.validate(&s).is_ok());
        let bad_fixed = SubjectPartition::new(0, vec![SliceGroup::with_fixed(vec![0, 1], 0, 0)]);
        assert!(bad_fixed.validate(&s).is_err());
    }

    #[test]
    fn tie_mean_and_representative() {
        let s = shape(&[2, 1]);
        let h = DenseTensor::new(s, vec![1.0, 3.0]).unwrap();
        let p = SubjectPartition::new(0, vec![SliceGroup::new(vec![0, 1])]);
        assert_eq!(tie_heterogeneous_core(&h, &p, TieReducer::Mean).unwrap().data(), &[2.0, 2.0]);
        assert_eq!(tie_heterogeneous_core(&h, &p, TieReducer::Representative).unwrap().data(), &[1.0, 1.0]);
        let q = SubjectPartition::new(0, vec![SliceGroup::new(vec![1, 0])]);
        assert_eq!(tie_heterogeneous_core(&h, &q, TieReducer::Representative).unwrap().data(), &[3.0, 3.0]);
    }

    #[test]
    fn tie_leaves_ungrouped_slices_and_is_idempotent() {
        let h = DenseTensor::from_fn(shape(&[4, 3]), |ix| (ix[0] * 10 + ix[1]) as f64 * 0.37);
        let p = SubjectPartition::new(0, vec![SliceGroup::new(vec![0, 2])]);
        for reducer in [TieReducer::Mean, TieReducer::Representative] {
            let t = tie_heterogeneous_core(&h, &p, reducer).unwrap();
            assert!(is_tied(&t, &p).unwrap());
            for j in 0..3 {
                assert_eq!(t.get(&[1, j]).unwrap(), h.get(&[1, j]).unwrap());
                assert_eq!(t.get(&[3, j]).unwrap(), h.get(&[3, j]).unwrap());
            }
            let again = tie_heterogeneous_core(&t, &p, reducer).unwrap();
            assert_eq!(again, t);
        }
    }

    #[test]
    fn fiber_groups_tie_only_their_fibers() {
        let h = DenseTensor::from_fn(shape(&[2, 2, 2]), |ix| (ix[0] * 4 + ix[1] * 2 + ix[2]) as f64);
        let p = SubjectPartition::new(0, vec![SliceGroup::with_fixed(vec![0, 1], 2, 1)]);
        let t = tie_heterogeneous_core(&h, &p, TieReducer::Mean).unwrap();
        assert_eq!(t.get(&[0, 0, 1]).unwrap(), t.get(&[1, 0, 1]).unwrap());
        assert_eq!(t.get(&[0, 0, 0]).unwrap(), 0.0);
        assert_eq!(t.get(&[1, 0, 0]).unwrap(), 4.0);
    }

    #[test]
    fn identity_init() {
        let x = DenseTensor::zeros(shape(&[3, 3]));
        let f = init_factors(&x, &[3, 3], &InitStrategy::new(InitKind::Identity, 0)).unwrap();
        assert_eq!(f, vec![DenseMatrix::identity(3), DenseMatrix::identity(3)]);
        let g = init_factors(&x, &[2, 3], &InitStrategy::new(InitKind::Identity, 0)).unwrap();
        assert_eq!(g[0], DenseMatrix::from_fn(3, 2, |i, j| if i == j { 1.0 } else { 0.0 }));
        assert!(matches!(
            init_factors(&x, &[4, 3], &InitStrategy::new(InitKind::Hosvd, 0)),
            Err(DcotError::RankExceedsMode { .. })
        ));
    }

    #[test]
    fn random_init_is_seeded() {
        let x = DenseTensor::zeros(shape(&[4, 3]));
        let s = InitStrategy::new(InitKind::Random, 17);
        assert_eq!(init_factors(&x, &[2, 2], &s).unwrap(), init_factors(&x, &[2, 2], &s).unwrap());
        let other = init_factors(&x, &[2, 2], &InitStrategy::new(InitKind::Random, 18)).unwrap();
        assert_ne!(init_factors(&x, &[2, 2], &s).unwrap(), other);
    }

    #[test]
    fn project_core_identity_and_zero() {
        let x = DenseTensor::from_fn(shape(&[2, 3]), |ix| (ix[0] + 2 * ix[1]) as f64);
        let eye = vec![DenseMatrix::identity(2), DenseMatrix::identity(3)];
        assert_eq!(project_core(&x, &eye).unwrap(), x);
        let z = DenseTensor::zeros(shape(&[2, 3]));
        let u = vec![DenseMatrix::from_fn(2, 1, |_, _| 0.5), DenseMatrix::from_fn(3, 2, |i, j| (i + j) as f64)];
        assert_eq!(project_core(&z, &u).unwrap(), DenseTensor::zeros(shape(&[1, 2])));
    }

    #[test]
    fn reconstruct_trivial_cases() {
        let g = DenseTensor::from_fn(shape(&[2, 2]), |ix| (ix[0] as f64) - 2.0 * ix[1] as f64 + 0.25);
        let eye = vec![DenseMatrix::identity(2), DenseMatrix::identity(2)];
        let m = DcotModel::new(eye.clone(), g.clone(), DenseTensor::zeros(shape(&[2, 2])), SubjectPartition::none())
            .unwrap();
        assert_eq!(m.reconstruct().unwrap(), g);
        let m2 = DcotModel::new(eye, g.clone(), g.clone(), SubjectPartition::none()).unwrap();
        assert_eq!(m2.reconstruct().unwrap(), g.scale(2.0));
    }

    #[test]
    fn model_rejects_untied_h() {
        let h = DenseTensor::new(shape(&[2, 1]), vec![1.0, 2.0]).unwrap();
        let p = SubjectPartition::new(0, vec![SliceGroup::new(vec![0, 1])]);
        let eye = vec![DenseMatrix::identity(2), DenseMatrix::identity(1)];
        assert!(DcotModel::new(eye, h.clone(), h, p).is_err());
    }
}
