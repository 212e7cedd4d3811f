//! Floquet-level assembly of solver output: multipliers with parasitic-root
//! tags, per-slice eigenvectors, propagation residuals, and the separation
//! diagnostics (spectral gap, subspace angles) that tell how much of the
//! computed spectrum deserves trust.

use crate::lptv::CompanionOperator;
use crate::pschur;
use crate::ptoar;
use crate::scaled::ExponentScaled;
use crate::spurious::{self, SpectrumTag};
use crate::{Error, Result};
use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;

/// How the companion eigenproblem behind a solution is solved.
#[derive(Clone, Copy, Debug)]
pub enum SolverChoice {
    /// Full periodic QR on the dense companion sequence. Exact up to
    /// backward error, limited to small stacked dimensions.
    Dense,
    /// Compressed periodic Arnoldi for the dominant part of the spectrum.
    Iterative { tol: f64, max_cycles: usize },
}

/// Separation between the kept spectrum and the first discarded multiplier.
#[derive(Clone, Copy, Debug)]
pub struct GapReport {
    /// `log10 |λ_k|` of the last kept multiplier.
    pub log10_kept: f64,
    /// `log10 |λ_{k+1}|` of the first discarded one.
    pub log10_next: f64,
    /// `|λ_{k+1}| / |λ_k|`, in [0, 1] for a correctly ordered spectrum.
    pub gap: f64,
    /// Set when the ratio exceeds 1 − 1e-3: the cut runs through a cluster
    /// and per-vector results across it are unreliable (the invariant
    /// subspace as a whole still is).
    pub ill_separated: bool,
}

/// Multipliers of the one-period map together with everything needed to
/// judge them: parasitic-root tags, per-slice eigenvector samples, and the
/// measured propagation residual of each pair.
#[derive(Clone, Debug)]
pub struct FloquetSolution {
    /// Multipliers by descending magnitude.
    pub multipliers: Vec<ExponentScaled>,
    /// Advisory classification of each multiplier against the scheme's
    /// parasitic-root magnitudes.
    pub tags: Vec<SpectrumTag>,
    /// `eigenvectors[j][i]`: unit state-space eigenvector sample of
    /// multiplier `j` at grid slice `i`.
    pub eigenvectors: Vec<Vec<DVector<Complex64>>>,
    /// Unit slice-0 eigenvector of the stacked period map, one per
    /// multiplier; the vector the residual is measured on.
    pub companion_vectors: Vec<DVector<Complex64>>,
    /// Relative one-period propagation residual `‖F w − λ w‖ / |λ|` with
    /// `‖w‖ = 1`, per multiplier.
    pub residuals: Vec<f64>,
    /// Separation at the cut, when one more multiplier was available.
    pub gap: Option<GapReport>,
}

impl FloquetSolution {
    pub fn k(&self) -> usize {
        self.multipliers.len()
    }

    pub fn p(&self) -> usize {
        self.eigenvectors.first().map_or(0, |v| v.len())
    }

    pub fn n(&self) -> usize {
        self.eigenvectors
            .first()
            .and_then(|v| v.first())
            .map_or(0, |x| x.len())
    }

    /// Eigenvector sample of multiplier `which` at slice `i`. The stored
    /// vector equals the slice-0 vector propagated to slice `i` and
    /// renormalized, up to the reported residual.
    pub fn eigenvector_at_slice(&self, which: usize, i: usize) -> &DVector<Complex64> {
        &self.eigenvectors[which][i]
    }
}

/// `|λ − exact| / |exact|` in scaled arithmetic.
pub fn eig_error(computed: ExponentScaled, exact: ExponentScaled) -> Result<f64> {
    if exact.is_zero() {
        return Err(Error::InvalidArgument(
            "exact multiplier must be nonzero".into(),
        ));
    }
    Ok(computed.relative_diff(&exact))
}

/// `‖c·x − σ‖ / ‖σ‖` minimized over the complex scale `c`, aligning the
/// computed vector to the exact one before differencing (eigenvectors are
/// only defined up to a complex scale).
pub fn vec_error(computed: &DVector<Complex64>, exact: &DVector<Complex64>) -> Result<f64> {
    if computed.len() != exact.len() {
        return Err(Error::InvalidArgument(format!(
            "vector lengths differ: {} vs {}",
            computed.len(),
            exact.len()
        )));
    }
    let en = exact.norm();
    if en == 0.0 {
        return Err(Error::InvalidArgument("exact vector must be nonzero".into()));
    }
    let xx = computed.norm_squared();
    if xx == 0.0 {
        return Ok(1.0);
    }
    let c = computed.dotc(exact) / Complex64::from(xx);
    Ok((computed * c - exact).norm() / en)
}

/// Largest principal angle between the column spans of `u` and `v`, in
/// [0, π/2]. Both inputs are orthonormalized defensively first; a basis that
/// loses rank in the process is rejected.
pub fn subspace_angle(u: &DMatrix<Complex64>, v: &DMatrix<Complex64>) -> Result<f64> {
    if u.nrows() != v.nrows() || u.ncols() != v.ncols() {
        return Err(Error::InvalidArgument(format!(
            "subspace bases must share dimensions, got {}x{} vs {}x{}",
            u.nrows(),
            u.ncols(),
            v.nrows(),
            v.ncols()
        )));
    }
    if u.ncols() == 0 || u.ncols() > u.nrows() {
        return Err(Error::InvalidArgument(format!(
            "a {}-dimensional subspace basis needs 1..={} columns, got {}",
            u.nrows(),
            u.nrows(),
            u.ncols()
        )));
    }
    let qu = orthonormalize(u)?;
    let qv = orthonormalize(v)?;
    let overlap = qu.ad_mul(&qv);
    let sv = overlap.svd(false, false).singular_values;
    let smin = sv.iter().fold(f64::INFINITY, |m, &s| m.min(s));
    Ok(smin.clamp(0.0, 1.0).acos())
}

fn orthonormalize(m: &DMatrix<Complex64>) -> Result<DMatrix<Complex64>> {
    let k = m.ncols();
    let qr = m.clone().qr();
    let r = qr.r();
    let dmax = (0..k).map(|i| r[(i, i)].norm()).fold(0.0, f64::max);
    if dmax == 0.0 || (0..k).any(|i| r[(i, i)].norm() < 1e-10 * dmax) {
        return Err(Error::InvalidArgument(
            "rank-deficient subspace basis".into(),
        ));
    }
    Ok(qr.q())
}

/// Magnitude separation `|λ_{k+1}| / |λ_k|` of a spectrum cut after its `k`
/// dominant multipliers. The input is sorted by descending magnitude
/// defensively; at least `k + 1` multipliers are required.
pub fn gap_report(multipliers: &[ExponentScaled], k: usize) -> Result<GapReport> {
    if k == 0 || multipliers.len() < k + 1 {
        return Err(Error::InvalidArgument(format!(
            "gap after {k} multipliers needs at least {} values, got {}",
            k + 1,
            multipliers.len()
        )));
    }
    let mut sorted = multipliers.to_vec();
    sorted.sort_by(|a, b| b.cmp_magnitude(a));
    let kept = sorted[k - 1];
    let next = sorted[k];
    if kept.is_zero() {
        return Err(Error::InvalidArgument(
            "zero multiplier at the cut has no meaningful gap".into(),
        ));
    }
    let gap = if next.is_zero() {
        0.0
    } else {
        next.div(kept).magnitude()
    };
    Ok(GapReport {
        log10_kept: kept.log10_magnitude(),
        log10_next: next.log10_magnitude(),
        gap,
        ill_separated: gap > 1.0 - 1e-3,
    })
}

/// Computes the `k` dominant multipliers of the discretized period map and
/// assembles them into a [`FloquetSolution`]: eigenvector samples at every
/// slice, parasitic-root tags, the measured propagation residual per pair,
/// and the separation at the cut.
pub fn solve(op: &CompanionOperator, k: usize, choice: SolverChoice) -> Result<FloquetSolution> {
    let n = op.n();
    let d = op.d();
    let p = op.p();
    let nd = n * d;
    if k == 0 || k > nd {
        return Err(Error::InvalidArgument(format!(
            "k must be in 1..={nd}, got {k}"
        )));
    }

    let mut multipliers = Vec::with_capacity(k);
    let mut eigenvectors = Vec::with_capacity(k);
    let mut companion_vectors = Vec::with_capacity(k);
    let gap;

    match choice {
        SolverChoice::Dense => {
            let seq = (0..p as i64)
                .map(|s| op.dense_companion(s))
                .collect::<Result<Vec<_>>>()?;
            let mut form = pschur::periodic_schur(&seq)?;
            pschur::reorder_top(&mut form, (k + 1).min(nd))?;
            for j in 0..k {
                multipliers.push(form.eigenvalues()[j]);
                let ws = form.eigenvector(j);
                let mut w0 = ws[0].clone();
                let nrm = w0.norm();
                if nrm > 0.0 {
                    w0 /= Complex64::from(nrm);
                }
                eigenvectors.push(ws.iter().map(|w| unit_state_block(w, n, d)).collect());
                companion_vectors.push(w0);
            }
            gap = if nd > k {
                Some(gap_report(&form.eigenvalues()[..k + 1], k)?)
            } else {
                None
            };
        }
        SolverChoice::Iterative { tol, max_cycles } => {
            let out = ptoar::solve_dominant(op, k, tol, max_cycles)?;
            gap = out.diagnostics.spectral_gap.map(|g| {
                let log10_kept = out.pairs[k - 1].value.log10_magnitude();
                let ratio = if g.is_infinite() { 0.0 } else { 1.0 / g };
                GapReport {
                    log10_kept,
                    log10_next: log10_kept - g.log10(),
                    gap: ratio,
                    ill_separated: ratio > 1.0 - 1e-3,
                }
            });
            for pr in out.pairs {
                multipliers.push(pr.value);
                eigenvectors.push(pr.vectors);
                companion_vectors.push(pr.stacked);
            }
        }
    }

    let prediction =
        spurious::prediction_from_coefficients(&op.step_coefficients(), p as u32)?;
    let tags = spurious::tag_spectrum(&multipliers, &prediction, n);
    let residuals = multipliers
        .iter()
        .zip(&companion_vectors)
        .map(|(lam, w)| propagation_residual(op, w, *lam))
        .collect::<Result<Vec<_>>>()?;

    Ok(FloquetSolution {
        multipliers,
        tags,
        eigenvectors,
        companion_vectors,
        residuals,
        gap,
    })
}

fn unit_state_block(w: &DVector<Complex64>, n: usize, d: usize) -> DVector<Complex64> {
    let mut x = w.rows((d - 1) * n, n).clone_owned();
    let nrm = x.norm();
    if nrm > 0.0 {
        x /= Complex64::from(nrm);
    }
    x
}

/// `‖F w − λ w‖ / |λ|` for a unit vector `w`, measured by propagating `w`
/// through the period one step at a time with the running scale factored
/// out, so graded products far outside `f64` range stay exact.
fn propagation_residual(
    op: &CompanionOperator,
    w: &DVector<Complex64>,
    lambda: ExponentScaled,
) -> Result<f64> {
    let n0 = w.norm();
    if n0 == 0.0 {
        return Err(Error::InvalidArgument(
            "zero vector has no propagation residual".into(),
        ));
    }
    let mut u: Vec<Complex64> = w.iter().map(|z| z / n0).collect();
    let mut scale = ExponentScaled::ONE;
    for s in 0..op.p() as i64 {
        u = op.companion_apply(s, &u)?;
        let nrm = u.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt();
        if nrm == 0.0 {
            return Ok(if lambda.is_zero() { 0.0 } else { f64::INFINITY });
        }
        scale = scale.mul(ExponentScaled::from_f64(nrm));
        for z in u.iter_mut() {
            *z /= nrm;
        }
    }
    if lambda.is_zero() {
        return Ok(f64::INFINITY);
    }
    let c = scale.div(lambda);
    if c.log2_magnitude() > 512.0 {
        return Ok(f64::INFINITY);
    }
    let cc = c.to_complex();
    let diff: f64 = u
        .iter()
        .zip(w.iter())
        .map(|(z, w0)| (cc * z - w0 / n0).norm_sqr())
        .sum();
    Ok(diff.sqrt())
}
