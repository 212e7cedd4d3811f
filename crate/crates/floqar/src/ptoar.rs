//! Compressed periodic Arnoldi for the cyclic companion eigenproblem.
//!
//! One expansion cycle grows a cyclic Krylov decomposition
//!
//! ```text
//! L⁽ˢ⁾ V⁽ˢ⁾ = V⁽ˢ⁺¹⁾ T⁽ˢ⁾       (cyclically, s = 0..p−1)
//! ```
//!
//! by one column per slice: every `T⁽ˢ⁾` is upper triangular except the
//! closing factor, which carries one extra coupling row, so slice 0 holds
//! `k+1` basis columns. The stacked bases are never stored. Block row `j`
//! of `V⁽ˢ⁾` is block row `j+1` of `V⁽ˢ⁻¹⁾` mixed by a triangular factor,
//! so its span nests inside the span written at slice `slot(s, j)`; the
//! state keeps one shared orthonormal basis per slot plus small per-slice
//! coordinate matrices, cutting the basis memory from `p·n·d·k` to about
//! `p·n·k + p·d·k²`. Ritz extraction runs the periodic QR on the projected
//! factors alone, and restarts truncate the reordered form Krylov–Schur
//! style.

use crate::lptv::CompanionOperator;
use crate::pschur::{self, PeriodicSchurForm};
use crate::scaled::ExponentScaled;
use crate::{Error, Result};
use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// A level-1 remainder below this fraction of the candidate norm is treated
/// as no new state-space direction.
const GROWTH_TOL: f64 = 1e-14;
/// A level-2 remainder below this fraction of the candidate norm is a happy
/// breakdown: the cyclic subspace is invariant.
const BREAKDOWN_TOL: f64 = 1e-14;

/// Result of one expansion cycle.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ExpandOutcome {
    Expanded,
    /// The subspace closed on itself at the given slice. The state is still
    /// valid: the basis was continued with a random orthogonal direction and
    /// an exactly zero subdiagonal, so captured eigenpairs are exact.
    InvariantSubspace { slice: usize },
}

/// One approximate eigenpair of the period product.
#[derive(Clone, Debug)]
pub struct RitzPair {
    /// Product eigenvalue approximation, exponent-scaled.
    pub value: ExponentScaled,
    /// Unit state-space eigenvector approximation per slice (the last block
    /// of the stacked Ritz vector).
    pub vectors: Vec<DVector<Complex64>>,
    /// Unit slice-0 Ritz vector in the full stacked space, for residual
    /// verification against the period map.
    pub stacked: DVector<Complex64>,
    /// Relative residual estimate from the boundary coupling row.
    pub residual: f64,
}

/// Compressed cyclic Krylov decomposition.
pub struct PeriodicArnoldiState {
    q: Vec<DMatrix<Complex64>>,
    u: Vec<DMatrix<Complex64>>,
    t: Vec<DMatrix<Complex64>>,
    k: usize,
    n: usize,
    d: usize,
    rng: ChaCha8Rng,
}

impl PeriodicArnoldiState {
    fn p(&self) -> usize {
        self.q.len()
    }

    pub fn k(&self) -> usize {
        self.k
    }

    /// (state dimension, block rows, slices)
    pub fn dims(&self) -> (usize, usize, usize) {
        (self.n, self.d, self.p())
    }

    /// Slot whose last-block writes created the span of block `j` of slice
    /// `s`: chasing the shift relation up-left lands at slice s−(d−1)+j.
    fn slot(&self, s: usize, j: usize) -> usize {
        (s + self.p() + 1 + j - self.d) % self.p()
    }

    fn block_start(&self, s: usize, j: usize) -> usize {
        (0..j).map(|jj| self.q[self.slot(s, jj)].ncols()).sum()
    }

    fn u_rows(&self, s: usize) -> usize {
        (0..self.d).map(|j| self.q[self.slot(s, j)].ncols()).sum()
    }

    /// Newest basis column of slice `s` assembled in state space.
    fn newest_stacked(&self, s: usize) -> Vec<Complex64> {
        let n = self.n;
        let last = self.u[s].ncols() - 1;
        let mut v = vec![Complex64::new(0.0, 0.0); n * self.d];
        for j in 0..self.d {
            let q = &self.q[self.slot(s, j)];
            if q.ncols() == 0 {
                continue;
            }
            let r0 = self.block_start(s, j);
            let x = q * self.u[s].view((r0, last), (q.ncols(), 1));
            for r in 0..n {
                v[j * n + r] = x[(r, 0)];
            }
        }
        v
    }

    /// CGS2 of a state-space vector against one slot basis; grows the slot
    /// when a meaningful new direction remains. Returns the coordinates of
    /// `w` in the (possibly grown) slot basis.
    fn orthogonalize_into_slot(&mut self, slot: usize, w: &DVector<Complex64>) -> DVector<Complex64> {
        let wnorm = w.norm();
        let (coeffs, rem, rho) = {
            let q = &self.q[slot];
            if q.ncols() == 0 {
                (DVector::zeros(0), w.clone(), wnorm)
            } else {
                let mut c = q.ad_mul(w);
                let mut rem = w - q * &c;
                let c2 = q.ad_mul(&rem);
                rem -= q * &c2;
                c += c2;
                let rho = rem.norm();
                (c, rem, rho)
            }
        };
        if rho > GROWTH_TOL * wnorm && rho > 0.0 {
            self.push_slot_column(slot, &(rem / Complex64::from(rho)));
            let m = coeffs.len();
            let mut out = DVector::zeros(m + 1);
            out.rows_mut(0, m).copy_from(&coeffs);
            out[m] = Complex64::from(rho);
            out
        } else {
            coeffs
        }
    }

    /// Appends a column to a slot basis. Every coordinate matrix indexing
    /// the slot gets a zero row at its block boundary first, while the block
    /// offsets still reflect the old slot sizes.
    fn push_slot_column(&mut self, slot: usize, col: &DVector<Complex64>) {
        let p = self.p();
        let old = self.q[slot].ncols();
        for s in 0..p {
            for j in 0..self.d {
                if self.slot(s, j) == slot {
                    let pos = self.block_start(s, j) + old;
                    let m = self.u[s].clone().insert_row(pos, Complex64::new(0.0, 0.0));
                    self.u[s] = m;
                }
            }
        }
        let mut q = DMatrix::zeros(self.n, old + 1);
        q.columns_mut(0, old).copy_from(&self.q[slot]);
        q.column_mut(old).copy_from(col);
        self.q[slot] = q;
    }

    fn append_u_column(&mut self, s: usize, col: &DVector<Complex64>) {
        let u = &self.u[s];
        let mut m = DMatrix::zeros(u.nrows(), u.ncols() + 1);
        m.view_mut((0, 0), (u.nrows(), u.ncols())).copy_from(u);
        m.column_mut(u.ncols()).copy_from(col);
        self.u[s] = m;
    }

    /// CGS2 against the stacked coordinate columns of slice `s`.
    fn stacked_cgs2(
        &self,
        s: usize,
        cand: &DVector<Complex64>,
    ) -> (DVector<Complex64>, DVector<Complex64>, f64) {
        let u = &self.u[s];
        if u.ncols() == 0 {
            return (DVector::zeros(0), cand.clone(), cand.norm());
        }
        let mut h = u.ad_mul(cand);
        let mut rem = cand - u * &h;
        let h2 = u.ad_mul(&rem);
        rem -= u * &h2;
        h += h2;
        let tau = rem.norm();
        (h, rem, tau)
    }

    fn random_vector(&mut self, len: usize) -> DVector<Complex64> {
        let rng = &mut self.rng;
        DVector::from_fn(len, |_, _| {
            Complex64::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0))
        })
    }

    /// Continues the basis after a happy breakdown with a random orthogonal
    /// direction. The matching projected column keeps an exactly zero
    /// subdiagonal entry, so the decomposition stays exact.
    fn inject_direction(&mut self, target: usize) -> Result<()> {
        for attempt in 0..6 {
            let cand = if attempt < 3 {
                // a last-block direction keeps every slot at its
                // one-column-per-cycle growth budget
                let w = self.random_vector(self.n);
                let coords = self.orthogonalize_into_slot(target, &w);
                let mut cand = DVector::zeros(self.u_rows(target));
                let dst0 = self.block_start(target, self.d - 1);
                for r in 0..coords.len() {
                    cand[dst0 + r] = coords[r];
                }
                cand
            } else {
                // rare fallback when the last-block directions are exhausted
                let mut parts = Vec::with_capacity(self.d);
                for j in 0..self.d {
                    let w = self.random_vector(self.n);
                    let slot = self.slot(target, j);
                    parts.push(self.orthogonalize_into_slot(slot, &w));
                }
                let mut cand = DVector::zeros(self.u_rows(target));
                for (j, part) in parts.iter().enumerate() {
                    let dst0 = self.block_start(target, j);
                    for r in 0..part.len() {
                        cand[dst0 + r] = part[r];
                    }
                }
                cand
            };
            let scale = cand.norm();
            if scale == 0.0 {
                continue;
            }
            let (_, rem, tau) = self.stacked_cgs2(target, &cand);
            if tau > 1e-8 * scale {
                self.append_u_column(target, &(rem / Complex64::from(tau)));
                return Ok(());
            }
        }
        Err(Error::InvalidArgument(
            "breakdown continuation could not find a new direction".into(),
        ))
    }

    /// One full expansion cycle: every slice gains one basis column and one
    /// projected column. Returns the first slice where the subspace closed
    /// on itself, if any.
    fn cycle(&mut self, op: &CompanionOperator) -> Result<Option<usize>> {
        let p = self.p();
        let d = self.d;
        let nd = self.n * d;
        let mut breakdown = None;
        let mut tcols: Vec<Vec<Complex64>> = Vec::with_capacity(p);
        for s in 0..p {
            let target = (s + 1) % p;
            let last = self.u[s].ncols() - 1;
            let stacked = self.newest_stacked(s);
            let (w_last, _) = op.last_block(s as i64, &stacked);
            let w_last = DVector::from_vec(w_last);
            let coords_last = self.orthogonalize_into_slot(target, &w_last);

            // image in slice-(s+1) coordinates: the old blocks shift up one
            // row, the solve output lands in the last block
            let mut cand = DVector::zeros(self.u_rows(target));
            for j in 0..d - 1 {
                let src0 = self.block_start(s, j + 1);
                let len = self.q[self.slot(s, j + 1)].ncols();
                let dst0 = self.block_start(target, j);
                for r in 0..len {
                    cand[dst0 + r] = self.u[s][(src0 + r, last)];
                }
            }
            let dst0 = self.block_start(target, d - 1);
            for r in 0..coords_last.len() {
                cand[dst0 + r] = coords_last[r];
            }

            let scale = cand.norm();
            let (h, rem, tau) = self.stacked_cgs2(target, &cand);
            let mut col: Vec<Complex64> = h.iter().copied().collect();
            if tau > BREAKDOWN_TOL * scale {
                self.append_u_column(target, &(rem / Complex64::from(tau)));
                col.push(Complex64::from(tau));
            } else if self.u[target].ncols() < nd {
                if breakdown.is_none() {
                    breakdown = Some(s);
                }
                self.inject_direction(target)?;
                col.push(Complex64::new(0.0, 0.0));
            } else {
                // the target slice already spans the whole space; the column
                // closes the relation without a new direction
                if breakdown.is_none() {
                    breakdown = Some(s);
                }
            }
            tcols.push(col);
        }
        for s in 0..p {
            let target = (s + 1) % p;
            let rows = self.u[target].ncols();
            let old = &self.t[s];
            let cols = old.ncols() + 1;
            let mut t = DMatrix::zeros(rows, cols);
            t.view_mut((0, 0), (old.nrows(), old.ncols())).copy_from(old);
            for (r, v) in tcols[s].iter().enumerate() {
                t[(r, cols - 1)] = *v;
            }
            self.t[s] = t;
        }
        self.k += 1;
        Ok(breakdown)
    }

    /// Periodic Schur form of the projected factors with the `top` largest
    /// product eigenvalues reordered to the front, plus the coupling row in
    /// the rotated basis.
    fn reduced(&self, top: usize) -> Result<(PeriodicSchurForm, DVector<Complex64>)> {
        let p = self.p();
        let k = self.k;
        let seq: Vec<DMatrix<Complex64>> = (0..p)
            .map(|s| self.t[s].view((0, 0), (k, k)).into_owned())
            .collect();
        let mut form = pschur::periodic_schur(&seq)?;
        pschur::reorder_top(&mut form, top)?;
        let g = if self.t[p - 1].nrows() > k {
            let b = self.t[p - 1].row(k).into_owned();
            (b * &form.z()[p - 1]).transpose()
        } else {
            DVector::zeros(k)
        };
        Ok((form, g))
    }

    /// Per-slice state-space Ritz vectors from the reduced-space eigenvector
    /// sequence `ws`: the last block of `V⁽ˢ⁾ w_s`, unit normalized.
    fn state_blocks(&self, ws: &[DVector<Complex64>]) -> Vec<DVector<Complex64>> {
        let k = self.k;
        ws.iter()
            .enumerate()
            .map(|(s, w)| {
                let r0 = self.block_start(s, self.d - 1);
                let q = &self.q[s];
                let mut x = q * (self.u[s].view((r0, 0), (q.ncols(), k)) * w);
                let nrm = x.norm();
                if nrm > 0.0 {
                    x /= Complex64::from(nrm);
                }
                x
            })
            .collect()
    }

    /// Full stacked Ritz vector `V⁽ˢ⁾ w`, unit normalized.
    fn stacked_vector(&self, s: usize, w: &DVector<Complex64>) -> DVector<Complex64> {
        let k = self.k;
        let mut v = DVector::zeros(self.n * self.d);
        for j in 0..self.d {
            let q = &self.q[self.slot(s, j)];
            if q.ncols() == 0 {
                continue;
            }
            let r0 = self.block_start(s, j);
            let block = q * (self.u[s].view((r0, 0), (q.ncols(), k)) * w);
            v.rows_mut(j * self.n, self.n).copy_from(&block);
        }
        let nrm = v.norm();
        if nrm > 0.0 {
            v /= Complex64::from(nrm);
        }
        v
    }

    /// Scalars held in the shared bases and coordinate blocks (the basis
    /// storage the compression is about; projected factors are counted by
    /// [`projected_entry_count`](Self::projected_entry_count)).
    pub fn basis_entry_count(&self) -> usize {
        let qe: usize = self.q.iter().map(|q| q.nrows() * q.ncols()).sum();
        let ue: usize = self.u.iter().map(|u| u.nrows() * u.ncols()).sum();
        qe + ue
    }

    pub fn projected_entry_count(&self) -> usize {
        self.t.iter().map(|t| t.nrows() * t.ncols()).sum()
    }

    /// Stacked basis of one slice assembled densely, for verification at
    /// small sizes.
    pub fn dense_basis(&self, s: usize) -> DMatrix<Complex64> {
        let cols = self.u[s].ncols();
        let mut v = DMatrix::zeros(self.n * self.d, cols);
        for j in 0..self.d {
            let q = &self.q[self.slot(s, j)];
            if q.ncols() == 0 {
                continue;
            }
            let r0 = self.block_start(s, j);
            let block = q * self.u[s].view((r0, 0), (q.ncols(), cols));
            v.view_mut((j * self.n, 0), (self.n, cols)).copy_from(&block);
        }
        v
    }

    pub fn projected_factors(&self) -> &[DMatrix<Complex64>] {
        &self.t
    }

    pub fn shared_basis(&self, i: usize) -> &DMatrix<Complex64> {
        &self.q[i]
    }

    /// Shrinks every slot basis to the span actually referenced by its
    /// coordinate blocks. After a truncation the retained spans nest, so
    /// the rank is at most keep+1.
    fn recompress(&mut self) {
        let p = self.p();
        let d = self.d;
        for slot in 0..p {
            let qc = self.q[slot].ncols();
            if qc == 0 {
                continue;
            }
            let members: Vec<(usize, usize)> = (0..p)
                .flat_map(|s| (0..d).map(move |j| (s, j)))
                .filter(|&(s, j)| self.slot(s, j) == slot)
                .collect();
            let total: usize = members.iter().map(|&(s, _)| self.u[s].ncols()).sum();
            let mut w = DMatrix::zeros(qc, total);
            let mut c0 = 0;
            for &(s, j) in &members {
                let r0 = self.block_start(s, j);
                let cols = self.u[s].ncols();
                w.view_mut((0, c0), (qc, cols))
                    .copy_from(&self.u[s].view((r0, 0), (qc, cols)));
                c0 += cols;
            }
            let svd = w.svd(true, false);
            let smax = svd.singular_values.iter().cloned().fold(0.0f64, f64::max);
            let rank = svd
                .singular_values
                .iter()
                .filter(|&&x| x > 1e-14 * smax)
                .count();
            let gm = svd.u.as_ref().expect("svd with u requested").columns(0, rank).into_owned();
            for &(s, j) in &members {
                let r0 = self.block_start(s, j);
                let cols = self.u[s].ncols();
                let nb = gm.ad_mul(&self.u[s].view((r0, 0), (qc, cols)).into_owned());
                let old = &self.u[s];
                let tail = old.nrows() - r0 - qc;
                let mut m = DMatrix::zeros(old.nrows() - qc + rank, cols);
                m.view_mut((0, 0), (r0, cols)).copy_from(&old.view((0, 0), (r0, cols)));
                m.view_mut((r0, 0), (rank, cols)).copy_from(&nb);
                m.view_mut((r0 + rank, 0), (tail, cols))
                    .copy_from(&old.view((r0 + qc, 0), (tail, cols)));
                self.u[s] = m;
            }
            self.q[slot] = &self.q[slot] * &gm;
        }
    }
}

impl std::fmt::Debug for PeriodicArnoldiState {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(
            f,
            "PeriodicArnoldiState(k = {}, n = {}, d = {}, p = {})",
            self.k,
            self.n,
            self.d,
            self.p()
        )
    }
}

/// Builds a k=1 state from a start vector (default: normalized all-ones)
/// by seeding the slot bases with its blocks and running one cycle.
pub fn init(op: &CompanionOperator, start: Option<&[Complex64]>) -> Result<PeriodicArnoldiState> {
    let n = op.n();
    let d = op.d();
    let p = op.p();
    let nd = n * d;
    if p <= d {
        return Err(Error::InvalidArgument(format!(
            "compressed Arnoldi needs more slices than block rows, got p = {p}, d = {d}"
        )));
    }
    let mut v: Vec<Complex64> = match start {
        Some(x) => {
            if x.len() != nd {
                return Err(Error::InvalidArgument(format!(
                    "start vector has length {}, expected {nd}",
                    x.len()
                )));
            }
            x.to_vec()
        }
        None => vec![Complex64::new(1.0, 0.0); nd],
    };
    let norm = v.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt();
    if norm == 0.0 {
        return Err(Error::InvalidArgument("start vector is zero".into()));
    }
    for z in v.iter_mut() {
        *z /= norm;
    }

    let mut state = PeriodicArnoldiState {
        q: vec![DMatrix::zeros(n, 0); p],
        u: vec![DMatrix::zeros(0, 0); p],
        t: vec![DMatrix::zeros(0, 0); p],
        k: 0,
        n,
        d,
        rng: ChaCha8Rng::seed_from_u64(0x70_746f_6172),
    };
    for j in 0..d {
        let slot = state.slot(0, j);
        let block = DVector::from_column_slice(&v[j * n..(j + 1) * n]);
        let bnorm = block.norm();
        if bnorm > 0.0 {
            state.push_slot_column(slot, &(block / Complex64::from(bnorm)));
        }
    }
    let mut u0 = DMatrix::zeros(state.u_rows(0), 1);
    for j in 0..d {
        let bnorm = v[j * n..(j + 1) * n]
            .iter()
            .map(|z| z.norm_sqr())
            .sum::<f64>()
            .sqrt();
        if bnorm > 0.0 {
            u0[(state.block_start(0, j), 0)] = Complex64::from(bnorm);
        }
    }
    state.u[0] = u0;
    state.cycle(op)?;
    Ok(state)
}

/// Grows the subspace by one column per slice (p solves).
pub fn expand(state: &mut PeriodicArnoldiState, op: &CompanionOperator) -> Result<ExpandOutcome> {
    if (op.n(), op.d(), op.p()) != state.dims() {
        return Err(Error::InvalidArgument(
            "operator dimensions do not match the state".into(),
        ));
    }
    if state.k >= state.n * state.d {
        return Err(Error::InvalidArgument(
            "the subspace already spans the full companion space".into(),
        ));
    }
    Ok(match state.cycle(op)? {
        Some(slice) => ExpandOutcome::InvariantSubspace { slice },
        None => ExpandOutcome::Expanded,
    })
}

fn coupling_residual(g: &DVector<Complex64>, j: usize, value: ExponentScaled) -> f64 {
    let gm = g[j].norm();
    if value.is_zero() {
        return if gm == 0.0 { 0.0 } else { f64::INFINITY };
    }
    ExponentScaled::from_f64(gm).div(value).magnitude()
}

/// The `want` dominant Ritz pairs, sorted by descending magnitude.
pub fn extract_ritz(state: &PeriodicArnoldiState, want: usize) -> Result<Vec<RitzPair>> {
    if want > state.k {
        return Err(Error::InvalidArgument(format!(
            "want = {want} exceeds the subspace size {}",
            state.k
        )));
    }
    if want == 0 {
        return Ok(Vec::new());
    }
    let (form, g) = state.reduced(want)?;
    let mut pairs: Vec<RitzPair> = (0..want)
        .map(|j| {
            let value = form.eigenvalue_at(j);
            let ws = form.eigenvector(j);
            let stacked = state.stacked_vector(0, &ws[0]);
            RitzPair {
                value,
                vectors: state.state_blocks(&ws),
                stacked,
                residual: coupling_residual(&g, j, value),
            }
        })
        .collect();
    pairs.sort_by(|a, b| b.value.cmp_magnitude(&a.value));
    Ok(pairs)
}

/// Krylov–Schur truncation to the `keep` dominant pairs. Retained Ritz
/// values are preserved; the slot bases are recompressed to the truncated
/// spans afterwards.
pub fn restart(state: &mut PeriodicArnoldiState, keep: usize) -> Result<()> {
    if keep == 0 || keep >= state.k {
        return Err(Error::InvalidArgument(format!(
            "keep must be in 1..{}, got {keep}",
            state.k
        )));
    }
    let p = state.p();
    let k = state.k;
    // a full invariant subspace has no residual column to carry over
    let has_residual = state.u[0].ncols() > k;
    let (form, g) = state.reduced(keep)?;
    let z = form.z();
    let r = form.r();
    for s in 0..p {
        let core = state.u[s].columns(0, k) * z[s].columns(0, keep);
        state.u[s] = if s == 0 && has_residual {
            let mut m = DMatrix::zeros(core.nrows(), keep + 1);
            m.columns_mut(0, keep).copy_from(&core);
            m.column_mut(keep).copy_from(&state.u[0].column(k));
            m
        } else {
            core
        };
    }
    for s in 0..p - 1 {
        state.t[s] = r[s].view((0, 0), (keep, keep)).into_owned();
    }
    state.t[p - 1] = if has_residual {
        // coupling entries already inside the relation's rounding budget
        // are zeroed, freezing the corresponding converged columns
        let scale = r[p - 1].norm().max(g.norm());
        let mut boundary = DMatrix::zeros(keep + 1, keep);
        boundary
            .view_mut((0, 0), (keep, keep))
            .copy_from(&r[p - 1].view((0, 0), (keep, keep)));
        for j in 0..keep {
            if g[j].norm() > 1e-13 * scale {
                boundary[(keep, j)] = g[j];
            }
        }
        boundary
    } else {
        let mut boundary = DMatrix::zeros(keep + 1, keep);
        boundary
            .view_mut((0, 0), (keep, keep))
            .copy_from(&r[p - 1].view((0, 0), (keep, keep)));
        boundary
    };
    state.k = keep;
    if !has_residual {
        // resume with a fresh unprocessed direction; its zero coupling row
        // keeps the truncated relation exact
        state.inject_direction(0)?;
    }
    state.recompress();
    Ok(())
}

/// Solver diagnostics; one residual-history row per cycle with the leading
/// (sorted) relative residual estimates at that point.
#[derive(Clone, Debug)]
pub struct SolveDiagnostics {
    pub cycles: usize,
    pub final_k: usize,
    pub restarts: usize,
    pub breakdowns: usize,
    pub residual_history: Vec<Vec<f64>>,
    /// |λ_{k_want}| / |λ_{k_want+1}| when one more pair was available.
    pub spectral_gap: Option<f64>,
    /// Pairs whose magnitude falls below 10³ times the largest parasitic
    /// root product of the scheme; advisory, never filtered.
    pub spurious_suspect: Vec<bool>,
}

#[derive(Debug)]
pub struct PtoarResult {
    pub pairs: Vec<RitzPair>,
    pub diagnostics: SolveDiagnostics,
}

fn leading_residuals(
    state: &PeriodicArnoldiState,
    want: usize,
) -> Result<(Vec<ExponentScaled>, Vec<f64>)> {
    let w = want.min(state.k);
    let (form, g) = state.reduced(w)?;
    let values: Vec<ExponentScaled> = (0..w).map(|j| form.eigenvalue_at(j)).collect();
    let mut idx: Vec<usize> = (0..w).collect();
    idx.sort_by(|&a, &b| values[b].cmp_magnitude(&values[a]));
    let sorted: Vec<ExponentScaled> = idx.iter().map(|&j| values[j]).collect();
    let resids: Vec<f64> = idx
        .iter()
        .map(|&j| coupling_residual(&g, j, values[j]))
        .collect();
    Ok((sorted, resids))
}

/// Decade floor below which a Ritz value is a parasitic-root suspect.
fn spurious_floor(op: &CompanionOperator) -> Result<Option<f64>> {
    if op.d() < 2 {
        return Ok(None);
    }
    let pred =
        crate::spurious::prediction_from_coefficients(&op.step_coefficients(), op.p() as u32)?;
    Ok(pred
        .predicted_log10_magnitudes
        .iter()
        .copied()
        .max_by(f64::total_cmp)
        .map(|m| m + 3.0))
}

/// Runs the iteration until the `k_want` dominant pairs have relative
/// residual at most `tol`, restarting when the subspace reaches
/// `max(2·k_want + 10, 30)` columns. The init cycle counts toward
/// `max_cycles`; every cycle costs exactly p linear solves.
pub fn solve_dominant(
    op: &CompanionOperator,
    k_want: usize,
    tol: f64,
    max_cycles: usize,
) -> Result<PtoarResult> {
    let nd = op.n() * op.d();
    if k_want == 0 || k_want > nd {
        return Err(Error::InvalidArgument(format!(
            "k_want must be in 1..={nd}, got {k_want}"
        )));
    }
    if !(tol > 0.0) {
        return Err(Error::InvalidArgument("tolerance must be positive".into()));
    }
    if max_cycles == 0 {
        return Err(Error::InvalidArgument("max_cycles must be positive".into()));
    }
    let mut state = init(op, None)?;
    let trigger = (2 * k_want + 10).max(30).min(nd);
    let mut history: Vec<Vec<f64>> = Vec::new();
    let mut restarts = 0usize;
    let mut breakdowns = 0usize;
    let mut cycles = 1usize;
    loop {
        let (_, resids) = leading_residuals(&state, k_want)?;
        let converged = resids.iter().take_while(|x| **x <= tol).count();
        history.push(resids);
        let done = state.k >= k_want && converged >= k_want;
        if done || state.k == nd {
            break;
        }
        if cycles >= max_cycles {
            return Err(Error::NotConverged {
                wanted: k_want,
                got: converged,
                cycles,
            });
        }
        if state.k >= trigger {
            let keep = (k_want + 5 + converged).min(state.k - 1);
            restart(&mut state, keep)?;
            restarts += 1;
        }
        if let ExpandOutcome::InvariantSubspace { .. } = expand(&mut state, op)? {
            breakdowns += 1;
        }
        cycles += 1;
    }
    let pairs = extract_ritz(&state, k_want)?;
    let spectral_gap = if state.k > k_want {
        let (vals, _) = leading_residuals(&state, k_want + 1)?;
        if vals.len() > k_want {
            Some(if vals[k_want].is_zero() {
                f64::INFINITY
            } else {
                vals[k_want - 1].div(vals[k_want]).magnitude()
            })
        } else {
            None
        }
    } else {
        None
    };
    let floor = spurious_floor(op)?;
    let spurious_suspect = pairs
        .iter()
        .map(|pr| match floor {
            Some(f) => pr.value.log10_magnitude() < f,
            None => false,
        })
        .collect();
    let final_k = state.k;
    Ok(PtoarResult {
        pairs,
        diagnostics: SolveDiagnostics {
            cycles,
            final_k,
            restarts,
            breakdowns,
            residual_history: history,
            spectral_gap,
            spurious_suspect,
        },
    })
}
