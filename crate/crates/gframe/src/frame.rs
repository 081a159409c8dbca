//! Generalized frames: frame operator, bounds, analysis/synthesis, canonical
//! dual and Parseval frames, and the convergence-condition checker.

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha12Rng;
use serde_json::{json, Value};
use thiserror::Error;

use crate::formats::{self, FormatError};
use crate::linalg::{
    herm_eig, hermitian_part, trace_quadratic, HermitianPd, LinalgError, PdExponent,
};
use crate::operators::{OperatorError, StructuredOperator};
use crate::scalar::{Field, Scalar};

/// Eigenvalue threshold (relative to the largest) for rank decisions.
pub const RANK_TOL: f64 = 1e-10;

/// Default number of subspace tests for condition checking.
pub const DEFAULT_WORK_BUDGET: usize = 1_000_000;

#[derive(Debug, Error)]
pub enum FrameError {
    #[error("a frame needs at least one element")]
    Empty,
    #[error("element {index} has {rows} rows, expected ambient dimension {d}")]
    RowMismatch { index: usize, rows: usize, d: usize },
    #[error("not a frame: smallest frame-operator eigenvalue {min_eig:.3e}")]
    NotAFrame { min_eig: f64 },
    #[error("coefficient {index} has length {got}, expected {expected}")]
    CoefficientShape {
        index: usize,
        got: usize,
        expected: usize,
    },
    #[error("expected {expected} coefficient blocks, got {got}")]
    CoefficientCount { expected: usize, got: usize },
    #[error("input vector has length {got}, expected {expected}")]
    VectorShape { got: usize, expected: usize },
    #[error(transparent)]
    Operator(#[from] OperatorError),
    #[error(transparent)]
    Linalg(#[from] LinalgError),
}

/// Ordered collection of operators Tⱼ: 𝕂^{rⱼ} → 𝕂^d.
#[derive(Debug, Clone)]
pub struct GFrame<K: Scalar> {
    d: usize,
    elements: Vec<StructuredOperator<K>>,
}

impl<K: Scalar> GFrame<K> {
    pub fn new(d: usize, elements: Vec<StructuredOperator<K>>) -> Result<Self, FrameError> {
        if elements.is_empty() {
            return Err(FrameError::Empty);
        }
        for (index, op) in elements.iter().enumerate() {
            let (rows, _) = op.shape();
            if rows != d {
                return Err(FrameError::RowMismatch { index, rows, d });
            }
        }
        Ok(Self { d, elements })
    }

    pub fn from_dense(mats: Vec<DMatrix<K>>) -> Result<Self, FrameError> {
        let d = mats.first().map(|m| m.nrows()).ok_or(FrameError::Empty)?;
        Self::new(d, mats.into_iter().map(StructuredOperator::dense).collect())
    }

    /// r = 1 frame from a list of vectors.
    pub fn from_vectors(vectors: Vec<DVector<K>>) -> Result<Self, FrameError> {
        Self::from_dense(
            vectors
                .into_iter()
                .map(|v| DMatrix::from_column_slice(v.len(), 1, v.as_slice()))
                .collect(),
        )
    }

    pub fn ambient_dim(&self) -> usize {
        self.d
    }

    pub fn n(&self) -> usize {
        self.elements.len()
    }

    pub fn elements(&self) -> &[StructuredOperator<K>] {
        &self.elements
    }

    pub fn element_dims(&self) -> Vec<usize> {
        self.elements.iter().map(|op| op.shape().1).collect()
    }

    /// True when every element has a fast (non-dense) apply path.
    pub fn all_fast(&self) -> bool {
        self.elements.iter().all(|op| op.is_fast())
    }

    pub fn dense_elements(&self) -> Vec<DMatrix<K>> {
        self.elements.iter().map(|op| op.to_dense()).collect()
    }

    /// S = Σⱼ Tⱼ Tⱼᴴ (Hermitian positive semidefinite).
    pub fn frame_operator(&self) -> DMatrix<K> {
        let mut s = DMatrix::<K>::zeros(self.d, self.d);
        for op in &self.elements {
            let t = op.to_dense();
            s += &t * t.adjoint();
        }
        hermitian_part(&s)
    }

    /// Optimal frame bounds (A, B) = extreme eigenvalues of S; A clamped at 0.
    pub fn frame_bounds(&self) -> Result<(f64, f64), FrameError> {
        let eig = herm_eig(&self.frame_operator())?;
        Ok((eig.values[0].max(0.0), eig.values[self.d - 1]))
    }

    pub fn is_frame(&self) -> bool {
        match self.frame_bounds() {
            Ok((a, b)) => b > 0.0 && a > RANK_TOL * b,
            Err(_) => false,
        }
    }

    fn frame_operator_pd(&self) -> Result<HermitianPd<K>, FrameError> {
        let (a, b) = self.frame_bounds()?;
        if !(b > 0.0 && a > RANK_TOL * b) {
            return Err(FrameError::NotAFrame { min_eig: a });
        }
        Ok(HermitianPd::new(self.frame_operator())?)
    }

    /// Coefficients cⱼ = Tⱼᴴ x, using each element's fast adjoint.
    pub fn analysis(&self, x: &DVector<K>) -> Result<Vec<DVector<K>>, FrameError> {
        if x.len() != self.d {
            return Err(FrameError::VectorShape {
                got: x.len(),
                expected: self.d,
            });
        }
        let mut coeffs = Vec::with_capacity(self.n());
        for op in &self.elements {
            coeffs.push(op.adjoint_apply(x)?);
        }
        Ok(coeffs)
    }

    /// Σⱼ Tⱼ cⱼ.
    pub fn synthesis(&self, coeffs: &[DVector<K>]) -> Result<DVector<K>, FrameError> {
        if coeffs.len() != self.n() {
            return Err(FrameError::CoefficientCount {
                expected: self.n(),
                got: coeffs.len(),
            });
        }
        let mut out = DVector::zeros(self.d);
        for (index, (op, c)) in self.elements.iter().zip(coeffs).enumerate() {
            let (_, r) = op.shape();
            if c.len() != r {
                return Err(FrameError::CoefficientShape {
                    index,
                    got: c.len(),
                    expected: r,
                });
            }
            out += op.apply(c)?;
        }
        Ok(out)
    }

    /// Canonical dual {S⁻¹ Tⱼ}.
    pub fn canonical_dual(&self) -> Result<GFrame<K>, FrameError> {
        let s_inv = self.frame_operator_pd()?.power(PdExponent::NegOne);
        let elements = self
            .elements
            .iter()
            .map(|op| StructuredOperator::dense(s_inv.matrix() * op.to_dense()))
            .collect();
        GFrame::new(self.d, elements)
    }

    /// Canonical Parseval frame {S^{−1/2} Tⱼ}.
    pub fn canonical_parseval(&self) -> Result<GFrame<K>, FrameError> {
        let s_isqrt = self.frame_operator_pd()?.power(PdExponent::NegHalf);
        let elements = self
            .elements
            .iter()
            .map(|op| StructuredOperator::dense(s_isqrt.matrix() * op.to_dense()))
            .collect();
        GFrame::new(self.d, elements)
    }

    /// α = maxⱼ trace(Tⱼᴴ S⁻¹ Tⱼ).
    pub fn alpha(&self) -> Result<f64, FrameError> {
        let s_inv = self.frame_operator_pd()?.power(PdExponent::NegOne);
        let mut alpha: f64 = 0.0;
        for op in &self.elements {
            alpha = alpha.max(trace_quadratic(&op.to_dense(), &s_inv)?);
        }
        Ok(alpha)
    }

    pub fn check_conditions(&self, mode: CheckMode) -> ConditionReport<K> {
        self.check_conditions_with_budget(mode, DEFAULT_WORK_BUDGET)
    }

    pub fn check_conditions_with_budget(
        &self,
        mode: CheckMode,
        work_budget: usize,
    ) -> ConditionReport<K> {
        check_conditions_impl(self, mode, work_budget)
    }
}

// ---------------------------------------------------------------------------
// Condition checking
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CheckMode {
    Exhaustive,
    Heuristic,
}

impl CheckMode {
    pub fn name(self) -> &'static str {
        match self {
            CheckMode::Exhaustive => "exhaustive",
            CheckMode::Heuristic => "heuristic",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CondStatus {
    Holds,
    Violated,
    Undecided,
}

impl CondStatus {
    pub fn name(self) -> &'static str {
        match self {
            CondStatus::Holds => "holds",
            CondStatus::Violated => "violated",
            CondStatus::Undecided => "undecided",
        }
    }
}

/// A proper subspace certifying a violation of condition (iii) or (iv).
#[derive(Debug, Clone)]
pub struct SubspaceWitness<K: Scalar> {
    /// Orthonormal basis of the subspace (d×dim).
    pub basis: DMatrix<K>,
    /// Indices of the elements whose range lies inside the subspace.
    pub members: Vec<usize>,
}

impl<K: Scalar> SubspaceWitness<K> {
    pub fn dim(&self) -> usize {
        self.basis.ncols()
    }
}

/// A partition of the elements for which neither side spans, violating (ii).
#[derive(Debug, Clone)]
pub struct PartitionWitness {
    pub side_a: Vec<usize>,
    pub side_b: Vec<usize>,
}

#[derive(Debug, Clone)]
pub struct ConditionReport<K: Scalar> {
    pub is_frame: bool,
    pub cond_ii: CondStatus,
    pub cond_iii: CondStatus,
    pub cond_iv: CondStatus,
    /// maxⱼ trace(Tⱼᴴ S⁻¹ Tⱼ); NaN when S is singular.
    pub alpha: f64,
    pub witness_ii: Option<PartitionWitness>,
    pub witness_iii: Option<SubspaceWitness<K>>,
    pub witness_iv: Option<SubspaceWitness<K>>,
    pub method: CheckMode,
    /// Condition (ii) was certified through (iii) ⟹ (ii) for d ≥ 2.
    pub cond_ii_via_iii: bool,
    pub work_used: usize,
}

impl<K: Scalar> ConditionReport<K> {
    pub fn any_violated(&self) -> bool {
        !self.is_frame
            || self.cond_ii == CondStatus::Violated
            || self.cond_iii == CondStatus::Violated
            || self.cond_iv == CondStatus::Violated
    }

    pub fn all_hold(&self) -> bool {
        self.is_frame
            && self.cond_ii == CondStatus::Holds
            && self.cond_iii == CondStatus::Holds
            && self.cond_iv == CondStatus::Holds
    }

    pub fn to_json(&self) -> Value {
        let witness_sub = |w: &Option<SubspaceWitness<K>>| match w {
            Some(w) => json!({
                "dim": w.dim(),
                "members": w.members,
                "basis": formats::write_matrix(&w.basis),
            }),
            None => Value::Null,
        };
        json!({
            "is_frame": self.is_frame,
            "alpha": if self.alpha.is_nan() { Value::Null } else { json!(self.alpha) },
            "cond_ii": self.cond_ii.name(),
            "cond_iii": self.cond_iii.name(),
            "cond_iv": self.cond_iv.name(),
            "witness_ii": match &self.witness_ii {
                Some(w) => json!({"side_a": w.side_a, "side_b": w.side_b}),
                None => Value::Null,
            },
            "witness_iii": witness_sub(&self.witness_iii),
            "witness_iv": witness_sub(&self.witness_iv),
            "method": self.method.name(),
            "cond_ii_via_iii": self.cond_ii_via_iii,
            "work_used": self.work_used,
        })
    }
}

/// Orthonormal basis for the column space of `m`, rank cut at
/// `RANK_TOL` relative to the largest singular value.
fn range_basis<K: Scalar>(m: &DMatrix<K>) -> DMatrix<K> {
    let svd = m.clone().svd(true, false);
    let u = svd.u.expect("svd with u requested");
    let smax = svd.singular_values.iter().cloned().fold(0.0_f64, f64::max);
    let rank = svd
        .singular_values
        .iter()
        .filter(|&&s| s > RANK_TOL * smax && s > 0.0)
        .count();
    u.columns(0, rank).into_owned()
}

/// Orthonormal basis for the joint span of several orthonormal bases.
fn joint_span<K: Scalar>(bases: &[&DMatrix<K>], d: usize) -> DMatrix<K> {
    let total: usize = bases.iter().map(|b| b.ncols()).sum();
    if total == 0 {
        return DMatrix::zeros(d, 0);
    }
    let mut stacked = DMatrix::zeros(d, total);
    let mut col = 0;
    for b in bases {
        stacked.columns_mut(col, b.ncols()).copy_from(*b);
        col += b.ncols();
    }
    range_basis(&stacked)
}

/// range(U) ⊂ span(Q) up to numerical tolerance; zero-dimensional ranges are
/// contained in everything.
fn contained_in<K: Scalar>(u: &DMatrix<K>, q: &DMatrix<K>) -> bool {
    if u.ncols() == 0 {
        return true;
    }
    if q.ncols() == 0 {
        return false;
    }
    let proj = q * (q.adjoint() * u);
    ((u - proj).norm()) <= 1e-8 * (u.ncols() as f64).sqrt()
}

struct SubspaceScan<K: Scalar> {
    violation_iii: Option<SubspaceWitness<K>>,
    violation_iv: Option<SubspaceWitness<K>>,
}

fn scan_subspace<K: Scalar>(
    bases: &[DMatrix<K>],
    subset: &[usize],
    d: usize,
    n: usize,
    alpha: f64,
    scan: &mut SubspaceScan<K>,
) {
    let selected: Vec<&DMatrix<K>> = subset.iter().map(|&j| &bases[j]).collect();
    let q = joint_span(&selected, d);
    let dim = q.ncols();
    if dim == 0 || dim >= d {
        return;
    }
    let members: Vec<usize> = (0..n).filter(|&j| contained_in(&bases[j], &q)).collect();
    let count = members.len();
    // (iii): #{j: range(Tⱼ) ⊂ L} < n/d, i.e. violated iff count·d ≥ n.
    if scan.violation_iii.is_none() && count * d >= n {
        scan.violation_iii = Some(SubspaceWitness {
            basis: q.clone(),
            members: members.clone(),
        });
    }
    // (iv): count < dim(L)/α.
    if scan.violation_iv.is_none() && alpha.is_finite() && count as f64 >= dim as f64 / alpha {
        scan.violation_iv = Some(SubspaceWitness { basis: q, members });
    }
}

/// Iterate all subsets of {0..n-1} of the given size in lexicographic order.
fn for_each_subset(n: usize, size: usize, mut f: impl FnMut(&[usize]) -> bool) -> bool {
    let mut idx: Vec<usize> = (0..size).collect();
    if size == 0 || size > n {
        return true;
    }
    loop {
        if !f(&idx) {
            return false;
        }
        // advance
        let mut i = size;
        loop {
            if i == 0 {
                return true;
            }
            i -= 1;
            if idx[i] != i + n - size {
                break;
            }
            if i == 0 {
                return true;
            }
        }
        idx[i] += 1;
        for j in i + 1..size {
            idx[j] = idx[j - 1] + 1;
        }
    }
}

fn check_conditions_impl<K: Scalar>(
    frame: &GFrame<K>,
    mode: CheckMode,
    work_budget: usize,
) -> ConditionReport<K> {
    let d = frame.ambient_dim();
    let n = frame.n();
    let dense: Vec<DMatrix<K>> = frame.dense_elements();
    let bases: Vec<DMatrix<K>> = dense.iter().map(range_basis).collect();
    let mut work_used = 0usize;

    let s = frame.frame_operator();
    let eig = herm_eig(&s).expect("frame operator is hermitian by construction");
    let max_eig = eig.values[d - 1];
    let is_frame = max_eig > 0.0 && eig.values[0] > RANK_TOL * max_eig;

    if !is_frame {
        // Every range lies inside the (proper) span of all ranges.
        let all: Vec<&DMatrix<K>> = bases.iter().collect();
        let q = joint_span(&all, d);
        let members: Vec<usize> = (0..n).collect();
        return ConditionReport {
            is_frame: false,
            cond_ii: CondStatus::Violated,
            cond_iii: CondStatus::Violated,
            cond_iv: CondStatus::Undecided,
            alpha: f64::NAN,
            witness_ii: Some(PartitionWitness {
                side_a: members.clone(),
                side_b: Vec::new(),
            }),
            witness_iii: Some(SubspaceWitness { basis: q, members }),
            witness_iv: None,
            method: mode,
            cond_ii_via_iii: false,
            work_used,
        };
    }

    let alpha = frame.alpha().expect("frame operator verified positive definite");

    // Subspaces spanned by unions of element ranges; spans of ≤ d−1 元素
    // generate every candidate (adding a non-contained range raises the
    // dimension), so the sweep below is complete for (iii) and (iv).
    let mut scan = SubspaceScan {
        violation_iii: None,
        violation_iv: None,
    };
    let max_size = d.saturating_sub(1).min(n);
    let mut complete_subspaces = true;
    match mode {
        CheckMode::Exhaustive => {
            'outer: for size in 1..=max_size {
                let done = for_each_subset(n, size, |subset| {
                    if work_used >= work_budget {
                        return false;
                    }
                    work_used += 1;
                    scan_subspace(&bases, subset, d, n, alpha, &mut scan);
                    true
                });
                if !done {
                    complete_subspaces = false;
                    break 'outer;
                }
            }
        }
        CheckMode::Heuristic => {
            complete_subspaces = false;
            let mut rng = ChaCha12Rng::seed_from_u64(0x67_66_72_61); // fixed: deterministic
            let samples = work_budget.min(4096);
            for _ in 0..samples {
                work_used += 1;
                let size = rng.random_range(1..=max_size.max(1));
                let mut subset: Vec<usize> = (0..n).collect();
                for i in 0..size.min(n) {
                    let j = rng.random_range(i..n);
                    subset.swap(i, j);
                }
                subset.truncate(size.min(n));
                scan_subspace(&bases, &subset, d, n, alpha, &mut scan);
            }
        }
    }

    let cond_iii = match (&scan.violation_iii, complete_subspaces) {
        (Some(_), _) => CondStatus::Violated,
        (None, true) => CondStatus::Holds,
        (None, false) => CondStatus::Undecided,
    };
    let cond_iv = match (&scan.violation_iv, complete_subspaces) {
        (Some(_), _) => CondStatus::Violated,
        (None, true) => CondStatus::Holds,
        (None, false) => CondStatus::Undecided,
    };

    // (ii): for d ≥ 2 implied by (iii); otherwise exhaust partitions.
    let mut cond_ii_via_iii = false;
    let mut witness_ii = None;
    let cond_ii = if d >= 2 && cond_iii == CondStatus::Holds {
        cond_ii_via_iii = true;
        CondStatus::Holds
    } else {
        let side_spans = |members: &[usize]| -> bool {
            let selected: Vec<&DMatrix<K>> = members.iter().map(|&j| &bases[j]).collect();
            joint_span(&selected, d).ncols() == d
        };
        let check_mask = |mask: u64, work_used: &mut usize| -> Option<PartitionWitness> {
            *work_used += 1;
            let side_a: Vec<usize> = (0..n).filter(|&j| mask & (1 << j) != 0).collect();
            let side_b: Vec<usize> = (0..n).filter(|&j| mask & (1 << j) == 0).collect();
            if !side_spans(&side_a) && !side_spans(&side_b) {
                Some(PartitionWitness { side_a, side_b })
            } else {
                None
            }
        };
        let remaining = work_budget.saturating_sub(work_used);
        if mode == CheckMode::Exhaustive && n <= 20 && (1u64 << (n - 1)) <= remaining as u64 {
            // element 0 pinned to side A: partitions are unordered.
            let mut found = None;
            for mask in 0..(1u64 << (n - 1)) {
                if let Some(w) = check_mask((mask << 1) | 1, &mut work_used) {
                    found = Some(w);
                    break;
                }
            }
            witness_ii = found;
            match witness_ii {
                Some(_) => CondStatus::Violated,
                None => CondStatus::Holds,
            }
        } else {
            let mut rng = ChaCha12Rng::seed_from_u64(0x70_61_72_74);
            let samples = remaining.min(2048);
            let mut found = None;
            for _ in 0..samples {
                let mask: u64 = rng.random::<u64>() & ((1u64 << n.min(63)) - 1) | 1;
                if let Some(w) = check_mask(mask, &mut work_used) {
                    found = Some(w);
                    break;
                }
            }
            witness_ii = found;
            match witness_ii {
                Some(_) => CondStatus::Violated,
                None => CondStatus::Undecided,
            }
        }
    };

    ConditionReport {
        is_frame,
        cond_ii,
        cond_iii,
        cond_iv,
        alpha,
        witness_ii,
        witness_iii: scan.violation_iii,
        witness_iv: scan.violation_iv,
        method: mode,
        cond_ii_via_iii,
        work_used,
    }
}

// ---------------------------------------------------------------------------
// gframe-json
// ---------------------------------------------------------------------------

fn op_to_json<K: Scalar>(op: &StructuredOperator<K>) -> Value {
    let matrix_rows = |m: &DMatrix<K>| -> Vec<String> {
        (0..m.nrows())
            .map(|i| {
                let row: Vec<K> = (0..m.ncols()).map(|j| m[(i, j)]).collect();
                formats::format_row(&row)
            })
            .collect()
    };
    match op {
        StructuredOperator::Dense(m) => json!({"kind": "dense", "rows": matrix_rows(m)}),
        StructuredOperator::CirculantBlock(b) => json!({
            "kind": "circulant",
            "generator": formats::format_row(b.generator().as_slice()),
            "k": b.k(),
        }),
        StructuredOperator::GaborBlock(g) => json!({
            "kind": "gabor",
            "window": formats::format_row(g.window().as_slice()),
        }),
        StructuredOperator::ProjectorFactor(m) => {
            json!({"kind": "projector", "rows": matrix_rows(m)})
        }
        StructuredOperator::Subsampler { indices, .. } => {
            json!({"kind": "subsampler", "indices": indices})
        }
        StructuredOperator::Scaled { factor, inner } => json!({
            "kind": "scaled",
            "factor": factor,
            "inner": op_to_json(inner),
        }),
    }
}

pub fn gframe_to_json<K: Scalar>(frame: &GFrame<K>) -> Value {
    json!({
        "d": frame.ambient_dim(),
        "field": K::FIELD.name(),
        "elements": frame.elements().iter().map(op_to_json).collect::<Vec<_>>(),
    })
}

fn rows_to_matrix<K: Scalar>(rows: &[Value], d: usize) -> Result<DMatrix<K>, FormatError> {
    let parsed: Vec<Vec<K>> = rows
        .iter()
        .map(|r| {
            r.as_str()
                .ok_or_else(|| FormatError::BadValue {
                    key: "rows".into(),
                    detail: "row must be a string".into(),
                })
                .and_then(formats::parse_row::<K>)
        })
        .collect::<Result<_, _>>()?;
    if parsed.len() != d {
        return Err(FormatError::BadRowCount {
            expected: d,
            found: parsed.len(),
        });
    }
    let cols = parsed.first().map(|r| r.len()).unwrap_or(0);
    if cols == 0 || parsed.iter().any(|r| r.len() != cols) {
        return Err(FormatError::BadValue {
            key: "rows".into(),
            detail: "rows must be nonempty and of equal length".into(),
        });
    }
    let flat: Vec<K> = parsed.into_iter().flatten().collect();
    Ok(DMatrix::from_row_slice(d, cols, &flat))
}

fn op_from_json<K: Scalar>(v: &Value, d: usize) -> Result<StructuredOperator<K>, FormatError> {
    let obj = v.as_object().ok_or_else(|| FormatError::BadValue {
        key: "elements".into(),
        detail: "element must be an object".into(),
    })?;
    let kind = obj
        .get("kind")
        .and_then(Value::as_str)
        .ok_or_else(|| FormatError::MissingKey("kind".into()))?;
    let get_rows = || -> Result<&Vec<Value>, FormatError> {
        obj.get("rows")
            .and_then(Value::as_array)
            .ok_or_else(|| FormatError::MissingKey("rows".into()))
    };
    let bad = |key: &str, detail: &str| FormatError::BadValue {
        key: key.into(),
        detail: detail.into(),
    };
    let op = match kind {
        "dense" => StructuredOperator::dense(rows_to_matrix(get_rows()?, d)?),
        "projector" => StructuredOperator::projector_factor(rows_to_matrix(get_rows()?, d)?)
            .map_err(|e| bad("projector", &e.to_string()))?,
        "circulant" => {
            let generator = obj
                .get("generator")
                .and_then(Value::as_str)
                .ok_or_else(|| FormatError::MissingKey("generator".into()))?;
            let generator = formats::parse_row::<K>(generator)?;
            if generator.len() != d {
                return Err(bad("generator", "length must equal d"));
            }
            let k = obj
                .get("k")
                .and_then(Value::as_u64)
                .ok_or_else(|| FormatError::MissingKey("k".into()))? as usize;
            StructuredOperator::circulant(DVector::from_vec(generator), k)
                .map_err(|e| bad("circulant", &e.to_string()))?
        }
        "gabor" => {
            let window = obj
                .get("window")
                .and_then(Value::as_str)
                .ok_or_else(|| FormatError::MissingKey("window".into()))?;
            let window = formats::parse_row::<K>(window)?;
            if window.len() * window.len() != d {
                return Err(bad("window", "ambient dimension must be window length squared"));
            }
            StructuredOperator::gabor(DVector::from_vec(window))
                .map_err(|e| bad("gabor", &e.to_string()))?
        }
        "subsampler" => {
            let indices = obj
                .get("indices")
                .and_then(Value::as_array)
                .ok_or_else(|| FormatError::MissingKey("indices".into()))?
                .iter()
                .map(|x| {
                    x.as_u64()
                        .map(|v| v as usize)
                        .ok_or_else(|| bad("indices", "must be nonnegative integers"))
                })
                .collect::<Result<Vec<_>, _>>()?;
            StructuredOperator::subsampler(d, indices)
                .map_err(|e| bad("subsampler", &e.to_string()))?
        }
        "scaled" => {
            let factor = obj
                .get("factor")
                .and_then(Value::as_f64)
                .ok_or_else(|| FormatError::MissingKey("factor".into()))?;
            let inner = obj
                .get("inner")
                .ok_or_else(|| FormatError::MissingKey("inner".into()))?;
            StructuredOperator::scaled(op_from_json::<K>(inner, d)?, factor)
                .map_err(|e| bad("scaled", &e.to_string()))?
        }
        other => return Err(FormatError::UnknownKind(other.to_string())),
    };
    Ok(op)
}

/// Field tag of a gframe-json document.
pub fn json_field(v: &Value) -> Result<Field, FormatError> {
    let name = v
        .get("field")
        .and_then(Value::as_str)
        .ok_or_else(|| FormatError::MissingKey("field".into()))?;
    Field::parse(name).ok_or_else(|| FormatError::BadValue {
        key: "field".into(),
        detail: format!("unknown field {name:?}"),
    })
}

pub fn gframe_from_json<K: Scalar>(v: &Value) -> Result<GFrame<K>, FormatError> {
    let field = json_field(v)?;
    if field != K::FIELD {
        return Err(FormatError::FieldMismatch {
            file: field,
            expected: K::FIELD,
        });
    }
    let d = v
        .get("d")
        .and_then(Value::as_u64)
        .ok_or_else(|| FormatError::MissingKey("d".into()))? as usize;
    let elements = v
        .get("elements")
        .and_then(Value::as_array)
        .ok_or_else(|| FormatError::MissingKey("elements".into()))?;
    if elements.is_empty() {
        return Err(FormatError::BadValue {
            key: "elements".into(),
            detail: "a frame needs at least one element".into(),
        });
    }
    let ops = elements
        .iter()
        .map(|e| op_from_json::<K>(e, d))
        .collect::<Result<Vec<_>, _>>()?;
    GFrame::new(d, ops).map_err(|e| FormatError::BadValue {
        key: "elements".into(),
        detail: e.to_string(),
    })
}
