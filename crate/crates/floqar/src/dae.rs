//! Semi-explicit index-1 descriptor pairs and their reduction to an ODE.
//!
//! A sampled pair (C(t), G(t)) with
//!
//! ```text
//!   C = [ C11  0 ]      G = [ G11  G12 ]
//!       [  0   0 ],         [ G21  G22 ],
//! ```
//!
//! C11 and G22 nonsingular, decouples into a differential part and an
//! algebraic constraint. For the adjoint equation −Cᵀẏ + Gᵀy = 0 the
//! differential variables obey
//!
//! ```text
//!   ẏ1 = C11⁻ᵀ (G11ᵀ − G21ᵀ G22⁻ᵀ G12ᵀ) y1,    y2 = −G22⁻ᵀ G12ᵀ y1,
//! ```
//!
//! and the forward equation Cẋ + Gx = 0 gives the analogous untransposed
//! form with a leading minus sign. [`decouple`] wraps each slice in an
//! applier that performs this action without ever forming the Schur
//! complement: one apply is two factored solves (G22, C11) plus three sparse
//! matvecs, and the shifted solves needed by the companion operator go
//! through a bordered system in the full (n1+n2) space, factorized once per
//! slice per shift.

use crate::grid::PeriodicGrid;
use crate::lptv::{ImplicitSlice, LuSolve, SampledLptvSystem, ShiftedSolve, SystemSlice};
use crate::sparse::CsrMatrix;
use crate::{Error, Result};
use nalgebra::DVector;
use num_complex::Complex64;
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::Arc;

/// The nonzero blocks of one slice of a semi-explicit descriptor pair.
#[derive(Clone, Debug)]
pub struct DaeBlocks {
    /// n1×n1 differential mass block, nonsingular.
    pub c11: CsrMatrix,
    /// n1×n1 differential conductance block.
    pub g11: CsrMatrix,
    /// n1×n2 coupling into the algebraic variables.
    pub g12: CsrMatrix,
    /// n2×n1 coupling from the differential variables.
    pub g21: CsrMatrix,
    /// n2×n2 algebraic block, nonsingular.
    pub g22: CsrMatrix,
}

/// A descriptor pair sampled on the slice times of one period. The block
/// partition comes from the caller's metadata; nothing is inferred from
/// sparsity patterns.
pub struct SampledDaeSystem {
    grid: PeriodicGrid,
    slices: Vec<DaeBlocks>,
    n1: usize,
    n2: usize,
}

impl SampledDaeSystem {
    /// Validates block shapes against the first slice and checks that every
    /// C11 and G22 factorizes; a singular block reports its slice.
    pub fn new(grid: PeriodicGrid, slices: Vec<DaeBlocks>) -> Result<Self> {
        if slices.len() != grid.p() {
            return Err(Error::InvalidArgument(format!(
                "expected {} slice blocks (one per grid step), got {}",
                grid.p(),
                slices.len()
            )));
        }
        let n1 = slices[0].c11.nrows();
        let n2 = slices[0].g22.nrows();
        if n1 == 0 || n2 == 0 {
            return Err(Error::InvalidArgument(
                "both the differential and algebraic blocks must be nonempty".into(),
            ));
        }
        for (i, b) in slices.iter().enumerate() {
            let shapes = [
                (b.c11.nrows(), b.c11.ncols(), n1, n1),
                (b.g11.nrows(), b.g11.ncols(), n1, n1),
                (b.g12.nrows(), b.g12.ncols(), n1, n2),
                (b.g21.nrows(), b.g21.ncols(), n2, n1),
                (b.g22.nrows(), b.g22.ncols(), n2, n2),
            ];
            if shapes.iter().any(|&(r, c, wr, wc)| r != wr || c != wc) {
                return Err(Error::InvalidArgument(format!(
                    "slice {i} block shapes do not match n1 = {n1}, n2 = {n2}"
                )));
            }
            if LuSolve::of_matrix(b.c11.to_dense()).is_err()
                || LuSolve::of_matrix(b.g22.to_dense()).is_err()
            {
                return Err(Error::IndexViolation { slice: i });
            }
        }
        Ok(Self {
            grid,
            slices,
            n1,
            n2,
        })
    }

    pub fn grid(&self) -> &PeriodicGrid {
        &self.grid
    }

    pub fn n1(&self) -> usize {
        self.n1
    }

    pub fn n2(&self) -> usize {
        self.n2
    }

    /// Blocks of slice `i`, extended periodically.
    pub fn blocks(&self, i: i64) -> &DaeBlocks {
        let p = self.grid.p() as i64;
        &self.slices[i.rem_euclid(p) as usize]
    }
}

/// Reduces the descriptor pair to its differential part as an implicit
/// sampled system of dimension n1. With `transpose` set the slices act as
/// the adjoint operator C11⁻ᵀ(G11ᵀ − G21ᵀ G22⁻ᵀ G12ᵀ); cleared, as the
/// forward operator −C11⁻¹(G11 − G12 G22⁻¹ G21).
pub fn decouple(sys: SampledDaeSystem, transpose: bool) -> Result<SampledLptvSystem> {
    let mut slices = Vec::with_capacity(sys.slices.len());
    for (i, b) in sys.slices.iter().enumerate() {
        let applier = ReducedSlice::build(b, transpose)
            .map_err(|_| Error::IndexViolation { slice: i })?;
        slices.push(SystemSlice::Implicit(Arc::new(applier)));
    }
    SampledLptvSystem::new(sys.grid, slices)
}

/// Algebraic completion of an adjoint differential state:
/// y2 = −G22⁻ᵀ G12ᵀ y1 at slice `i`.
pub fn recover_algebraic(
    sys: &SampledDaeSystem,
    i: i64,
    y1: &DVector<Complex64>,
) -> Result<DVector<Complex64>> {
    if y1.len() != sys.n1 {
        return Err(Error::InvalidArgument(format!(
            "differential state has length {}, expected n1 = {}",
            y1.len(),
            sys.n1
        )));
    }
    let p = sys.grid.p() as i64;
    let slice = i.rem_euclid(p) as usize;
    let b = &sys.slices[slice];
    let lu = LuSolve::of_matrix(b.g22.to_dense().transpose())
        .map_err(|_| Error::IndexViolation { slice })?;
    let mut rhs = vec![Complex64::new(0.0, 0.0); sys.n2];
    b.g12
        .transpose()
        .matvec_complex(y1.as_slice(), &mut rhs);
    for v in &mut rhs {
        *v = -*v;
    }
    let mut y2 = vec![Complex64::new(0.0, 0.0); sys.n2];
    lu.solve(&rhs, &mut y2);
    Ok(DVector::from_vec(y2))
}

/// One slice of the reduced operator, stored in apply orientation: the
/// action is `sign · C⁻¹(A11 x − A12 A22⁻¹ A21 x)` where the A blocks are
/// the (possibly transposed) G blocks.
pub(crate) struct ReducedSlice {
    a11: CsrMatrix,
    a12: CsrMatrix,
    a21: CsrMatrix,
    a22: CsrMatrix,
    c: CsrMatrix,
    c_lu: LuSolve,
    a22_lu: LuSolve,
    sign: f64,
    n1: usize,
    n2: usize,
    solves: AtomicU64,
    matvecs: AtomicU64,
}

impl ReducedSlice {
    pub(crate) fn build(b: &DaeBlocks, transpose: bool) -> Result<Self> {
        let (a11, a12, a21, a22, c, sign) = if transpose {
            (
                b.g11.transpose(),
                b.g21.transpose(),
                b.g12.transpose(),
                b.g22.transpose(),
                b.c11.transpose(),
                1.0,
            )
        } else {
            (
                b.g11.clone(),
                b.g12.clone(),
                b.g21.clone(),
                b.g22.clone(),
                b.c11.clone(),
                -1.0,
            )
        };
        let c_lu = LuSolve::of_matrix(c.to_dense())?;
        let a22_lu = LuSolve::of_matrix(a22.to_dense())?;
        Ok(Self {
            n1: c.nrows(),
            n2: a22.nrows(),
            a11,
            a12,
            a21,
            a22,
            c,
            c_lu,
            a22_lu,
            sign,
            solves: AtomicU64::new(0),
            matvecs: AtomicU64::new(0),
        })
    }

    #[cfg(test)]
    pub(crate) fn solve_count(&self) -> u64 {
        self.solves.load(Ordering::Relaxed)
    }

    #[cfg(test)]
    pub(crate) fn matvec_count(&self) -> u64 {
        self.matvecs.load(Ordering::Relaxed)
    }
}

impl ImplicitSlice for ReducedSlice {
    fn dim(&self) -> usize {
        self.n1
    }

    fn apply(&self, x: &[Complex64], y: &mut [Complex64]) {
        let mut t1 = vec![Complex64::new(0.0, 0.0); self.n2];
        self.a21.matvec_complex(x, &mut t1);
        let mut t2 = vec![Complex64::new(0.0, 0.0); self.n2];
        self.a22_lu.solve(&t1, &mut t2);
        self.a11.matvec_complex(x, y);
        let mut t3 = vec![Complex64::new(0.0, 0.0); self.n1];
        self.a12.matvec_complex(&t2, &mut t3);
        for i in 0..self.n1 {
            y[i] = (y[i] - t3[i]) * self.sign;
        }
        let mut out = vec![Complex64::new(0.0, 0.0); self.n1];
        self.c_lu.solve(y, &mut out);
        y.copy_from_slice(&out);
        self.solves.fetch_add(2, Ordering::Relaxed);
        self.matvecs.fetch_add(3, Ordering::Relaxed);
    }

    /// Solves (I − c·M)x = b through the bordered system
    ///
    /// ```text
    ///   [ C − c·sign·A11   −c·sign·A12 ] [x]   [C b]
    ///   [      A21              A22    ] [w] = [ 0 ],
    /// ```
    ///
    /// which never forms the Schur complement; one factorization serves all
    /// later right-hand sides.
    fn shifted_solver(&self, shift: f64) -> Result<Box<dyn ShiftedSolve>> {
        let n = self.n1 + self.n2;
        let mut block = nalgebra::DMatrix::zeros(n, n);
        let cs = shift * self.sign;
        for (r, col, v) in self.c.triplets() {
            block[(r, col)] += v;
        }
        for (r, col, v) in self.a11.triplets() {
            block[(r, col)] -= cs * v;
        }
        for (r, col, v) in self.a12.triplets() {
            block[(r, self.n1 + col)] = -cs * v;
        }
        for (r, col, v) in self.a21.triplets() {
            block[(self.n1 + r, col)] = v;
        }
        for (r, col, v) in self.a22.triplets() {
            block[(self.n1 + r, self.n1 + col)] = v;
        }
        Ok(Box::new(BorderedSolve {
            lu: LuSolve::of_matrix(block)?,
            c: self.c.clone(),
            n1: self.n1,
            n2: self.n2,
        }))
    }
}

struct BorderedSolve {
    lu: LuSolve,
    c: CsrMatrix,
    n1: usize,
    n2: usize,
}

impl ShiftedSolve for BorderedSolve {
    fn solve(&self, rhs: &[Complex64], out: &mut [Complex64]) {
        let mut full = vec![Complex64::new(0.0, 0.0); self.n1 + self.n2];
        self.c.matvec_complex(rhs, &mut full[..self.n1]);
        let mut sol = vec![Complex64::new(0.0, 0.0); self.n1 + self.n2];
        self.lu.solve(&full, &mut sol);
        out.copy_from_slice(&sol[..self.n1]);
    }
}
