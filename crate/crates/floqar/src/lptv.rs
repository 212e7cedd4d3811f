//! Sampled periodic systems and the implicit companion operator.
//!
//! Discretizing `x' = G(t) x` with a d-step method turns each step into
//!
//! ```text
//!   x_i = Σ_{j=0..d−1} A_j⁽ⁱ⁾ x_{i−d+j},
//!   A_j⁽ⁱ⁾ = −(I − β_d⁽ⁱ⁾ G⁽ⁱ⁾ Δt⁽ⁱ⁾)⁻¹ (α_j⁽ⁱ⁾ I − β_j⁽ⁱ⁾ G⁽ⁱ⁻ᵈ⁺ʲ⁾ Δt⁽ⁱ⁾),
//! ```
//!
//! whose companion linearization `L⁽ⁱ⁾` shifts a window of `d` state blocks
//! and fills the last block with that sum. Nothing here forms `L⁽ⁱ⁾` as an
//! `nd × nd` matrix unless explicitly asked to ([`stm_dense`],
//! [`CompanionOperator::dense_companion`]); the solver paths only use
//! [`CompanionOperator::companion_apply`], which costs one factored solve of
//! dimension `n` plus at most `d` matvecs.
//!
//! The shifted matrices `I − β_d G⁽ⁱ⁾ Δt` are factorized once per slice at
//! [`assemble`] time and reused for every subsequent apply.

use crate::grid::PeriodicGrid;
use crate::multistep::{MultistepScheme, StepCoefficients};
use crate::sparse::CsrMatrix;
use crate::{Error, Result};
use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::Arc;

/// Upper bound on `n·d` for the dense helpers.
pub const DENSE_GUARD: usize = 2000;

/// One slice's system matrix, however it is stored. Implicit slices (used by
/// the DAE reduction) only expose matvecs and shifted solves.
#[derive(Clone)]
pub enum SystemSlice {
    Dense(DMatrix<f64>),
    Sparse(CsrMatrix),
    Implicit(Arc<dyn ImplicitSlice>),
}

/// A system matrix available only through its action: `y = G x` and solves
/// with `I − c G`.
pub trait ImplicitSlice: Send + Sync {
    fn dim(&self) -> usize;
    fn apply(&self, x: &[Complex64], y: &mut [Complex64]);
    /// Factorizes `I − c G` (or an equivalent) and returns a solver for it.
    fn shifted_solver(&self, c: f64) -> Result<Box<dyn ShiftedSolve>>;
}

/// Cached factorization of a shifted slice matrix.
pub trait ShiftedSolve: Send + Sync {
    fn solve(&self, rhs: &[Complex64], out: &mut [Complex64]);
}

impl SystemSlice {
    pub fn dim(&self) -> usize {
        match self {
            SystemSlice::Dense(m) => m.nrows(),
            SystemSlice::Sparse(m) => m.nrows(),
            SystemSlice::Implicit(op) => op.dim(),
        }
    }

    /// `y = G x`.
    pub fn matvec(&self, x: &[Complex64], y: &mut [Complex64]) {
        match self {
            SystemSlice::Dense(m) => {
                for r in 0..m.nrows() {
                    let mut acc = Complex64::new(0.0, 0.0);
                    for c in 0..m.ncols() {
                        acc += x[c] * m[(r, c)];
                    }
                    y[r] = acc;
                }
            }
            SystemSlice::Sparse(m) => m.matvec_complex(x, y),
            SystemSlice::Implicit(op) => op.apply(x, y),
        }
    }

    fn shifted_solver(&self, c: f64) -> Result<Box<dyn ShiftedSolve>> {
        match self {
            SystemSlice::Dense(m) => Ok(Box::new(LuSolve::shifted(m, c)?)),
            SystemSlice::Sparse(m) => Ok(Box::new(LuSolve::shifted(&m.to_dense(), c)?)),
            SystemSlice::Implicit(op) => op.shifted_solver(c),
        }
    }
}

impl std::fmt::Debug for SystemSlice {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            SystemSlice::Dense(m) => write!(f, "Dense({}x{})", m.nrows(), m.ncols()),
            SystemSlice::Sparse(m) => {
                write!(f, "Sparse({}x{}, {} nnz)", m.nrows(), m.ncols(), m.nnz())
            }
            SystemSlice::Implicit(op) => write!(f, "Implicit(dim {})", op.dim()),
        }
    }
}

/// Real LU with partial pivoting of `I − c G`, applied to complex right-hand
/// sides by solving the real and imaginary parts separately.
pub(crate) struct LuSolve {
    lu: nalgebra::LU<f64, nalgebra::Dyn, nalgebra::Dyn>,
    n: usize,
}

impl LuSolve {
    pub(crate) fn shifted(g: &DMatrix<f64>, c: f64) -> Result<Self> {
        let n = g.nrows();
        let mut m = g * (-c);
        for i in 0..n {
            m[(i, i)] += 1.0;
        }
        Self::of_matrix(m)
    }

    pub(crate) fn of_matrix(m: DMatrix<f64>) -> Result<Self> {
        let n = m.nrows();
        let lu = m.lu();
        // partial-pivoting LU leaves the pivots on the diagonal of U
        let mut max_piv = 0.0f64;
        let mut min_piv = f64::INFINITY;
        for i in 0..n {
            let p = lu.u()[(i, i)].abs();
            max_piv = max_piv.max(p);
            min_piv = min_piv.min(p);
        }
        if !(min_piv.is_finite() && max_piv.is_finite())
            || max_piv == 0.0
            || min_piv < 1e-14 * max_piv
        {
            return Err(Error::IllPosedStep { slice: usize::MAX });
        }
        Ok(Self { lu, n })
    }
}

impl ShiftedSolve for LuSolve {
    fn solve(&self, rhs: &[Complex64], out: &mut [Complex64]) {
        let re = DVector::from_iterator(self.n, rhs.iter().map(|z| z.re));
        let im = DVector::from_iterator(self.n, rhs.iter().map(|z| z.im));
        let xre = self.lu.solve(&re).expect("factorized matrix became singular");
        let xim = self.lu.solve(&im).expect("factorized matrix became singular");
        for i in 0..self.n {
            out[i] = Complex64::new(xre[i], xim[i]);
        }
    }
}

/// The sampled system: `p` matrices `G(t_m)` on the slice times of one
/// period; periodicity identifies `t_p` with `t_0`, so sample `m` serves every
/// grid index congruent to `m` mod `p`.
pub struct SampledLptvSystem {
    grid: PeriodicGrid,
    slices: Vec<SystemSlice>,
    n: usize,
}

impl SampledLptvSystem {
    pub fn new(grid: PeriodicGrid, slices: Vec<SystemSlice>) -> Result<Self> {
        if slices.len() != grid.p() {
            return Err(Error::InvalidArgument(format!(
                "expected {} samples (one per grid step), got {}",
                grid.p(),
                slices.len()
            )));
        }
        let n = slices[0].dim();
        if n == 0 || slices.iter().any(|s| s.dim() != n) {
            return Err(Error::InvalidArgument(
                "all samples must be square with a common positive dimension".into(),
            ));
        }
        Ok(Self { grid, slices, n })
    }

    pub fn from_dense(grid: PeriodicGrid, samples: Vec<DMatrix<f64>>) -> Result<Self> {
        for m in &samples {
            if m.nrows() != m.ncols() {
                return Err(Error::InvalidArgument("samples must be square".into()));
            }
        }
        let slices = samples.into_iter().map(SystemSlice::Dense).collect();
        Self::new(grid, slices)
    }

    pub fn from_sparse(grid: PeriodicGrid, samples: Vec<CsrMatrix>) -> Result<Self> {
        let slices = samples.into_iter().map(SystemSlice::Sparse).collect();
        Self::new(grid, slices)
    }

    /// Samples a matrix-valued callback on the grid times `t_0..t_{p−1}`.
    pub fn from_callback(grid: PeriodicGrid, g: impl Fn(f64) -> DMatrix<f64>) -> Result<Self> {
        let samples: Vec<DMatrix<f64>> = (0..grid.p()).map(|m| g(grid.times()[m])).collect();
        Self::from_dense(grid, samples)
    }

    pub fn grid(&self) -> &PeriodicGrid {
        &self.grid
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    /// Sample for any integer grid index, via `G⁽ⁱ⁺ᵖ⁾ = G⁽ⁱ⁾`.
    pub fn sample(&self, i: i64) -> &SystemSlice {
        &self.slices[i.rem_euclid(self.grid.p() as i64) as usize]
    }
}

impl std::fmt::Debug for SampledLptvSystem {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(
            f,
            "SampledLptvSystem(n = {}, p = {}, T = {})",
            self.n,
            self.grid.p(),
            self.grid.period()
        )
    }
}

struct SliceOps {
    coeffs: StepCoefficients,
    dt: f64,
    solver: Box<dyn ShiftedSolve>,
}

/// Implicit cyclic companion operator: `p` factors `L⁽¹⁾..L⁽ᵖ⁾` where slice
/// `s` (0-based) advances the step ending at grid index `s+1`. The product
/// over one period, `L⁽ᵖ⁾ ⋯ L⁽¹⁾`, is the discrete monodromy approximation
/// whose eigenvalues the solver paths compute.
pub struct CompanionOperator {
    system: Arc<SampledLptvSystem>,
    ops: Vec<SliceOps>,
    d: usize,
    solves: AtomicU64,
    matvecs: AtomicU64,
}

/// Builds the companion operator for a scheme, factorizing every slice's
/// shifted matrix once.
pub fn assemble(system: Arc<SampledLptvSystem>, scheme: MultistepScheme) -> Result<CompanionOperator> {
    let coeffs = scheme.period_coefficients(system.grid())?;
    assemble_with_coefficients(system, coeffs)
}

/// Same as [`assemble`] but with explicit per-step coefficients (one set per
/// grid step, in step order). Exists so non-BDF coefficient sets can be
/// exercised; `assemble` is the normal entry point.
pub fn assemble_with_coefficients(
    system: Arc<SampledLptvSystem>,
    coeffs: Vec<StepCoefficients>,
) -> Result<CompanionOperator> {
    let p = system.grid().p();
    if coeffs.len() != p {
        return Err(Error::InvalidArgument(format!(
            "expected {p} coefficient sets, got {}",
            coeffs.len()
        )));
    }
    let d = coeffs[0].d();
    if coeffs.iter().any(|c| c.d() != d) {
        return Err(Error::InvalidArgument(
            "coefficient sets must share the step count".into(),
        ));
    }
    let mut ops = Vec::with_capacity(p);
    for (s, c) in coeffs.into_iter().enumerate() {
        let dt = system.grid().step(s as i64);
        let shift = c.beta[d] * dt;
        let solver = system
            .sample(s as i64 + 1)
            .shifted_solver(shift)
            .map_err(|e| match e {
                Error::IllPosedStep { .. } => Error::IllPosedStep { slice: s },
                other => other,
            })?;
        ops.push(SliceOps { coeffs: c, dt, solver });
    }
    Ok(CompanionOperator {
        system,
        ops,
        d,
        solves: AtomicU64::new(0),
        matvecs: AtomicU64::new(0),
    })
}

impl CompanionOperator {
    pub fn n(&self) -> usize {
        self.system.dim()
    }

    pub fn d(&self) -> usize {
        self.d
    }

    pub fn p(&self) -> usize {
        self.system.grid().p()
    }

    pub fn grid(&self) -> &PeriodicGrid {
        self.system.grid()
    }

    pub(crate) fn step_coefficients(&self) -> Vec<StepCoefficients> {
        self.ops.iter().map(|o| o.coeffs.clone()).collect()
    }

    pub fn system(&self) -> &Arc<SampledLptvSystem> {
        &self.system
    }

    /// Number of shifted solves performed since construction (or the last
    /// reset). One `companion_apply` is exactly one solve.
    pub fn solve_count(&self) -> u64 {
        self.solves.load(Ordering::Relaxed)
    }

    /// Number of `G` matvecs performed. Zero for pure BDF coefficients, at
    /// most `d` per apply in general.
    pub fn matvec_count(&self) -> u64 {
        self.matvecs.load(Ordering::Relaxed)
    }

    pub fn reset_counters(&self) {
        self.solves.store(0, Ordering::Relaxed);
        self.matvecs.store(0, Ordering::Relaxed);
    }

    /// `y = L⁽ˢ⁺¹⁾ v` for the cyclic slice `s`: the first `d−1` output blocks
    /// are the input blocks shifted up; the last is
    /// `Σ_j A_j⁽ˢ⁺¹⁾ v_{block j}`, realized as one solve and at most `d`
    /// matvecs.
    pub fn companion_apply(&self, s: i64, v: &[Complex64]) -> Result<Vec<Complex64>> {
        let n = self.n();
        let d = self.d;
        if v.len() != n * d {
            return Err(Error::InvalidArgument(format!(
                "companion_apply expects a stacked vector of length {}, got {}",
                n * d,
                v.len()
            )));
        }
        let mut out = vec![Complex64::new(0.0, 0.0); n * d];
        out[..n * (d - 1)].copy_from_slice(&v[n..]);

        let (last, _) = self.last_block(s, v);
        out[n * (d - 1)..].copy_from_slice(&last);
        Ok(out)
    }

    /// The new trailing block of [`companion_apply`], plus the count of
    /// matvecs it performed. Split out so the Arnoldi expansion can reuse the
    /// shifted input blocks without copying them.
    pub(crate) fn last_block(&self, s: i64, v: &[Complex64]) -> (Vec<Complex64>, u64) {
        let n = self.n();
        let d = self.d;
        let sl = s.rem_euclid(self.p() as i64) as usize;
        let ops = &self.ops[sl];
        let i = sl as i64 + 1; // grid index of the step endpoint

        // rhs = Σ_j −(α_j I − β_j Δt G^{(i−d+j)}) v_j
        let mut rhs = vec![Complex64::new(0.0, 0.0); n];
        let mut tmp = vec![Complex64::new(0.0, 0.0); n];
        let mut mv = 0u64;
        for j in 0..d {
            let block = &v[j * n..(j + 1) * n];
            let alpha = ops.coeffs.alpha[j];
            let beta = ops.coeffs.beta[j];
            if alpha != 0.0 {
                for r in 0..n {
                    rhs[r] -= block[r] * alpha;
                }
            }
            if beta != 0.0 {
                self.system.sample(i - d as i64 + j as i64).matvec(block, &mut tmp);
                let scale = beta * ops.dt;
                for r in 0..n {
                    rhs[r] += tmp[r] * scale;
                }
                mv += 1;
            }
        }
        let mut last = vec![Complex64::new(0.0, 0.0); n];
        ops.solver.solve(&rhs, &mut last);
        self.solves.fetch_add(1, Ordering::Relaxed);
        self.matvecs.fetch_add(mv, Ordering::Relaxed);
        (last, mv)
    }

    /// Applies the coefficient operator `A_j⁽ˢ⁺¹⁾` alone.
    pub fn apply_coefficient(&self, s: i64, j: usize, x: &[Complex64]) -> Result<Vec<Complex64>> {
        let n = self.n();
        let d = self.d;
        if j >= d {
            return Err(Error::InvalidArgument(format!(
                "coefficient index {j} out of range (d = {d})"
            )));
        }
        if x.len() != n {
            return Err(Error::InvalidArgument("dimension mismatch".into()));
        }
        let sl = s.rem_euclid(self.p() as i64) as usize;
        let ops = &self.ops[sl];
        let i = sl as i64 + 1;

        let mut rhs: Vec<Complex64> = x.iter().map(|z| -z * ops.coeffs.alpha[j]).collect();
        if ops.coeffs.beta[j] != 0.0 {
            let mut tmp = vec![Complex64::new(0.0, 0.0); n];
            self.system.sample(i - d as i64 + j as i64).matvec(x, &mut tmp);
            let scale = ops.coeffs.beta[j] * ops.dt;
            for r in 0..n {
                rhs[r] += tmp[r] * scale;
            }
            self.matvecs.fetch_add(1, Ordering::Relaxed);
        }
        let mut out = vec![Complex64::new(0.0, 0.0); n];
        ops.solver.solve(&rhs, &mut out);
        self.solves.fetch_add(1, Ordering::Relaxed);
        Ok(out)
    }

    /// Dense `nd × nd` companion block for slice `s`, formed column by column
    /// through the implicit apply. Small problems only.
    pub fn dense_companion(&self, s: i64) -> Result<DMatrix<Complex64>> {
        let nd = self.n() * self.d;
        if nd > DENSE_GUARD {
            return Err(Error::SizeGuard {
                nd,
                guard: DENSE_GUARD,
            });
        }
        let mut m = DMatrix::zeros(nd, nd);
        let mut e = vec![Complex64::new(0.0, 0.0); nd];
        for c in 0..nd {
            e[c] = Complex64::new(1.0, 0.0);
            let col = self.companion_apply(s, &e)?;
            for r in 0..nd {
                m[(r, c)] = col[r];
            }
            e[c] = Complex64::new(0.0, 0.0);
        }
        Ok(m)
    }
}

impl std::fmt::Debug for CompanionOperator {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(
            f,
            "CompanionOperator(n = {}, d = {}, p = {})",
            self.n(),
            self.d,
            self.p()
        )
    }
}

/// Discrete state-transition matrix `F_{start+length,start} =
/// L⁽ˢᵗᵃʳᵗ⁺ˡᵉⁿ⁾ ⋯ L⁽ˢᵗᵃʳᵗ⁺¹⁾` as a dense matrix, by propagating identity
/// columns. Guarded to `n·d ≤ 2000`.
pub fn stm_dense(op: &CompanionOperator, start: i64, length: usize) -> Result<DMatrix<Complex64>> {
    let nd = op.n() * op.d();
    if nd > DENSE_GUARD {
        return Err(Error::SizeGuard {
            nd,
            guard: DENSE_GUARD,
        });
    }
    let mut m = DMatrix::identity(nd, nd);
    let mut col = vec![Complex64::new(0.0, 0.0); nd];
    for step in 0..length {
        let s = start + step as i64;
        for c in 0..nd {
            for r in 0..nd {
                col[r] = m[(r, c)];
            }
            let out = op.companion_apply(s, &col)?;
            for r in 0..nd {
                m[(r, c)] = out[r];
            }
        }
    }
    Ok(m)
}
