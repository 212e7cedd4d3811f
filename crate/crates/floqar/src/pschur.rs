//! Dense periodic Schur decomposition.
//!
//! Given square complex factors `L⁽⁰⁾..L⁽ᵖ⁻¹⁾`, computes unitary bases
//! `Z⁽ⁱ⁾` and reduced factors `R⁽ⁱ⁾ = Z⁽⁽ⁱ⁺¹⁾ ᵐᵒᵈ ᵖ⁾ᴴ L⁽ⁱ⁾ Z⁽ⁱ⁾` with every
//! `R⁽ⁱ⁾` upper triangular, without ever forming the cyclic product
//! `L⁽ᵖ⁻¹⁾ ⋯ L⁽⁰⁾`. The product's eigenvalues are the per-position products
//! of the `R` diagonals, accumulated in [`ExponentScaled`] arithmetic so that
//! magnitudes far beyond the f64 range survive.
//!
//! Everything is complex single-shift: one slice (the last) is kept upper
//! Hessenberg during the iteration and carries the subdiagonal that the
//! implicit shifted sweeps drive to zero; all other slices stay triangular,
//! with each sweep rotation chased once around the cycle. Reordering moves a
//! selected eigenvalue up by adjacent swaps, each swap solved through the
//! cyclic 2×2 coupling equations in scaled arithmetic.

use crate::scaled::ExponentScaled;
use crate::{Error, Result};
use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;

/// Unitary plane rotation `[[c, s], [−s̄, c]]` with real `c ≥ 0`.
#[derive(Clone, Copy, Debug)]
pub(crate) struct Givens {
    pub c: f64,
    pub s: Complex64,
}

impl Givens {
    pub(crate) const IDENTITY: Givens = Givens {
        c: 1.0,
        s: Complex64::new(0.0, 0.0),
    };

    /// Rotation with `G · (f, g)ᵀ = (r, 0)ᵀ`.
    pub(crate) fn make(f: Complex64, g: Complex64) -> Givens {
        let af = f.norm();
        let ag = g.norm();
        if ag == 0.0 {
            return Givens::IDENTITY;
        }
        if af == 0.0 {
            return Givens {
                c: 0.0,
                s: g.conj() / ag,
            };
        }
        let w = af.max(ag);
        let d = w * ((af / w).powi(2) + (ag / w).powi(2)).sqrt();
        Givens {
            c: af / d,
            s: (f / af) * g.conj() / d,
        }
    }

    /// Rotation for a pair held in scaled form; only the ratio matters, so
    /// the common exponent is removed first. Exponent gaps beyond the f64
    /// range underflow gracefully to an identity-like rotation.
    pub(crate) fn make_scaled(f: &ExponentScaled, g: &ExponentScaled) -> Givens {
        if g.is_zero() {
            return Givens::IDENTITY;
        }
        if f.is_zero() {
            let m = g.mantissa();
            return Givens {
                c: 0.0,
                s: m.conj() / m.norm(),
            };
        }
        let e = f.exponent().max(g.exponent());
        let fv = f.mantissa() * exp2_clamped(f.exponent() - e);
        let gv = g.mantissa() * exp2_clamped(g.exponent() - e);
        Givens::make(fv, gv)
    }

    /// `A ← G A` restricted to rows `i`, `j`.
    pub(crate) fn left(&self, a: &mut DMatrix<Complex64>, i: usize, j: usize) {
        let n = a.ncols();
        for k in 0..n {
            let x = a[(i, k)];
            let y = a[(j, k)];
            a[(i, k)] = x * self.c + y * self.s;
            a[(j, k)] = -x * self.s.conj() + y * self.c;
        }
    }

    /// `A ← A Gᴴ` restricted to columns `i`, `j`.
    pub(crate) fn right_h(&self, a: &mut DMatrix<Complex64>, i: usize, j: usize) {
        let n = a.nrows();
        for k in 0..n {
            let x = a[(k, i)];
            let y = a[(k, j)];
            a[(k, i)] = x * self.c + y * self.s.conj();
            a[(k, j)] = -x * self.s + y * self.c;
        }
    }
}

fn exp2_clamped(e: i64) -> f64 {
    if e > 1100 {
        f64::INFINITY
    } else if e < -1100 {
        0.0
    } else {
        (e as f64).exp2()
    }
}

/// `z · 2ᵉ` with the exponent applied in two halves, so intermediate
/// `exp2` calls cannot overflow for |e| up to ~2000.
fn scale_by_exp2(z: Complex64, e: i64) -> Complex64 {
    let e1 = e / 2;
    let e2 = e - e1;
    z * exp2_clamped(e1) * exp2_clamped(e2)
}

/// The computed decomposition. Slice `i` satisfies
/// `z[(i+1) mod p]ᴴ · L⁽ⁱ⁾ · z[i] = r[i]` with `r[i]` upper triangular.
pub struct PeriodicSchurForm {
    z: Vec<DMatrix<Complex64>>,
    r: Vec<DMatrix<Complex64>>,
    eigenvalues: Vec<ExponentScaled>,
}

impl PeriodicSchurForm {
    pub fn p(&self) -> usize {
        self.r.len()
    }

    pub fn m(&self) -> usize {
        self.r[0].nrows()
    }

    pub fn z(&self) -> &[DMatrix<Complex64>] {
        &self.z
    }

    pub fn r(&self) -> &[DMatrix<Complex64>] {
        &self.r
    }

    /// Product eigenvalues by diagonal position (not sorted).
    pub fn eigenvalues(&self) -> &[ExponentScaled] {
        &self.eigenvalues
    }

    /// Recomputes the eigenvalue at diagonal position `j` from the current
    /// factors.
    pub fn eigenvalue_at(&self, j: usize) -> ExponentScaled {
        ExponentScaled::product(self.r.iter().map(|r| r[(j, j)]))
    }

    fn refresh_eigenvalues(&mut self) {
        self.eigenvalues = (0..self.m()).map(|j| self.eigenvalue_at(j)).collect();
    }

    /// Per-slice eigenvector of the reduced cyclic form for the eigenvalue at
    /// diagonal position `j`: vectors `v_0..v_{p−1}` (unit max component,
    /// support on positions `0..=j`) with `r[s] v_s ∝ v_{s+1}` cyclically.
    ///
    /// Solved by back-substitution row by row; each row is a scalar cyclic
    /// recursion handled in scaled arithmetic, with near-singular cyclic
    /// denominators (clustered eigenvalues) perturbed rather than failed:
    /// the returned vector is then only as good as the cluster allows.
    pub fn schur_eigenvector(&self, j: usize) -> Vec<DVector<Complex64>> {
        let p = self.p();
        let m = self.m();
        let mut v: Vec<Vec<ExponentScaled>> = vec![vec![ExponentScaled::ZERO; j + 1]; p];
        for vs in v.iter_mut() {
            vs[j] = ExponentScaled::ONE;
        }
        let mu: Vec<ExponentScaled> = (0..p)
            .map(|s| {
                let d = ExponentScaled::from_complex(self.r[s][(j, j)]);
                if d.is_zero() {
                    ExponentScaled::from_f64(1e-140)
                } else {
                    d
                }
            })
            .collect();
        for row in (0..j).rev() {
            // v_{s+1}[row] = (a_s v_s[row] + b_s) / μ_s cyclically
            let a: Vec<ExponentScaled> = (0..p)
                .map(|s| ExponentScaled::from_complex(self.r[s][(row, row)]))
                .collect();
            let b: Vec<ExponentScaled> = (0..p)
                .map(|s| {
                    let mut acc = ExponentScaled::ZERO;
                    for l in (row + 1)..=j {
                        acc = acc
                            .add(ExponentScaled::from_complex(self.r[s][(row, l)]).mul(v[s][l]));
                    }
                    acc
                })
                .collect();
            let mut pf = ExponentScaled::ONE;
            let mut sf = ExponentScaled::ZERO;
            for s in 0..p {
                sf = a[s].mul(sf).add(b[s]).div(mu[s]);
                pf = a[s].mul(pf).div(mu[s]);
            }
            let mut denom = ExponentScaled::ONE.sub(pf);
            if denom.magnitude() < 1e-13 {
                denom = ExponentScaled::from_f64(1e-13);
            }
            let mut x = sf.div(denom);
            for s in 0..p {
                v[s][row] = x;
                x = a[s].mul(x).add(b[s]).div(mu[s]);
            }
        }
        v.into_iter()
            .map(|vs| {
                let mut best = ExponentScaled::ZERO;
                for c in &vs {
                    if c.cmp_magnitude(&best) == std::cmp::Ordering::Greater {
                        best = *c;
                    }
                }
                let mut out = DVector::zeros(m);
                if !best.is_zero() {
                    for (i, c) in vs.iter().enumerate() {
                        out[i] = c.div(best).to_complex();
                    }
                }
                out
            })
            .collect()
    }

    /// Like [`schur_eigenvector`](Self::schur_eigenvector) but mapped back to
    /// the original coordinates through the `Z` bases: vectors `w_s = z[s] v_s`
    /// with `L⁽ˢ⁾ w_s ∝ w_{s+1}`.
    pub fn eigenvector(&self, j: usize) -> Vec<DVector<Complex64>> {
        self.schur_eigenvector(j)
            .into_iter()
            .enumerate()
            .map(|(s, v)| &self.z[s] * v)
            .collect()
    }
}

impl std::fmt::Debug for PeriodicSchurForm {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "PeriodicSchurForm(m = {}, p = {})", self.m(), self.p())
    }
}

struct Cycle {
    a: Vec<DMatrix<Complex64>>,
    z: Vec<DMatrix<Complex64>>,
}

impl Cycle {
    fn p(&self) -> usize {
        self.a.len()
    }

    /// Left-rotates rows (`i`, `j`) of slice `s` and keeps the cyclic
    /// relation intact: the same rotation right-multiplies (as `Gᴴ`) the
    /// basis `z[(s+1) mod p]` and the next slice. With `p = 1` the right
    /// update lands on the same slice, which is the ordinary similarity.
    fn rotate(&mut self, s: usize, g: Givens, i: usize, j: usize) {
        let next = (s + 1) % self.p();
        g.left(&mut self.a[s], i, j);
        g.right_h(&mut self.z[next], i, j);
        g.right_h(&mut self.a[next], i, j);
    }
}

/// Trailing 2×2 of a slice product, kept as a mantissa matrix with a shared
/// base-2 exponent.
#[derive(Clone, Copy)]
struct Scaled2 {
    m: [[Complex64; 2]; 2],
    e: i64,
}

impl Scaled2 {
    const IDENTITY: Scaled2 = Scaled2 {
        m: [
            [Complex64::new(1.0, 0.0), Complex64::new(0.0, 0.0)],
            [Complex64::new(0.0, 0.0), Complex64::new(1.0, 0.0)],
        ],
        e: 0,
    };

    fn of_block(a: &DMatrix<Complex64>, lo: usize) -> Scaled2 {
        Scaled2 {
            m: [
                [a[(lo, lo)], a[(lo, lo + 1)]],
                [a[(lo + 1, lo)], a[(lo + 1, lo + 1)]],
            ],
            e: 0,
        }
        .normalized()
    }

    fn normalized(mut self) -> Scaled2 {
        let mx = self
            .m
            .iter()
            .flatten()
            .map(|z| z.norm())
            .fold(0.0f64, f64::max);
        if mx == 0.0 || !mx.is_finite() {
            self.e = 0;
            return self;
        }
        let shift = mx.log2().floor() as i64;
        for row in self.m.iter_mut() {
            for z in row.iter_mut() {
                *z = scale_by_exp2(*z, -shift);
            }
        }
        self.e += shift;
        self
    }

    fn mul(self, rhs: Scaled2) -> Scaled2 {
        let a = &self.m;
        let b = &rhs.m;
        Scaled2 {
            m: [
                [
                    a[0][0] * b[0][0] + a[0][1] * b[1][0],
                    a[0][0] * b[0][1] + a[0][1] * b[1][1],
                ],
                [
                    a[1][0] * b[0][0] + a[1][1] * b[1][0],
                    a[1][0] * b[0][1] + a[1][1] * b[1][1],
                ],
            ],
            e: self.e + rhs.e,
        }
        .normalized()
    }

    /// Eigenvalue of the 2×2 closest to its (2,2) entry, as a scaled value.
    fn wilkinson(&self) -> ExponentScaled {
        let [[a, b], [c, d]] = self.m;
        let t = (a + d) * 0.5;
        let disc = (t * t - (a * d - b * c)).sqrt();
        let m1 = t + disc;
        let m2 = t - disc;
        let mu = if (m1 - d).norm() <= (m2 - d).norm() {
            m1
        } else {
            m2
        };
        ExponentScaled::new(mu, self.e)
    }
}

/// Reduces the cyclic sequence to periodic Schur form.
///
/// Backward error per slice stays within a small multiple of machine epsilon
/// times the slice norm; exact-zero diagonals of triangular slices are
/// perturbed at the `1e-13·‖slice‖` level to keep the shift machinery alive,
/// which is inside that budget.
pub fn periodic_schur(seq: &[DMatrix<Complex64>]) -> Result<PeriodicSchurForm> {
    let p = seq.len();
    if p == 0 {
        return Err(Error::InvalidArgument("empty slice sequence".into()));
    }
    let m = seq[0].nrows();
    if m == 0 || seq.iter().any(|a| a.nrows() != m || a.ncols() != m) {
        return Err(Error::InvalidArgument(
            "slices must be square with a common positive dimension".into(),
        ));
    }

    let mut cy = Cycle {
        a: seq.to_vec(),
        z: vec![DMatrix::identity(m, m); p],
    };

    if let Some(s0) = (0..p).find(|&s| cy.a[s].norm() == 0.0) {
        // a zero slice annihilates the product; triangularize by marching
        // once around the cycle starting past it, no iteration needed
        for off in 1..p {
            let s = (s0 + off) % p;
            let qr = cy.a[s].clone().qr();
            let q = qr.q();
            cy.a[s] = qr.r();
            let next = (s + 1) % p;
            cy.z[next] = &cy.z[next] * &q;
            cy.a[next] = &cy.a[next] * &q;
        }
        let mut form = PeriodicSchurForm {
            z: cy.z,
            r: cy.a,
            eigenvalues: Vec::new(),
        };
        clean_lower(&mut form.r);
        form.refresh_eigenvalues();
        return Ok(form);
    }

    // triangularize every slice but the last, pushing each Q into the next
    for s in 0..p.saturating_sub(1) {
        let qr = cy.a[s].clone().qr();
        let q = qr.q();
        cy.a[s] = qr.r();
        cy.z[s + 1] = &cy.z[s + 1] * &q;
        cy.a[s + 1] = &cy.a[s + 1] * &q;
    }

    // Hessenberg reduction of the last slice. Each left rotation propagates
    // through z[0] into slice 0 as a column rotation, whose triangular fill
    // is chased around the cycle and returns to the last slice as a benign
    // column rotation.
    let last = p - 1;
    for c in 0..m.saturating_sub(2) {
        for r in (c + 2..m).rev() {
            let g = Givens::make(cy.a[last][(r - 1, c)], cy.a[last][(r, c)]);
            cy.rotate(last, g, r - 1, r);
            cy.a[last][(r, c)] = Complex64::new(0.0, 0.0);
            if p > 1 {
                for s in 0..p - 1 {
                    let v = Givens::make(cy.a[s][(r - 1, r - 1)], cy.a[s][(r, r - 1)]);
                    cy.rotate(s, v, r - 1, r);
                    cy.a[s][(r, r - 1)] = Complex64::new(0.0, 0.0);
                }
            }
        }
    }

    // slice norms are unitarily invariant; used for zero-diagonal rescue
    // floors and the stagnation deflation cap below
    let floors: Vec<f64> = cy.a.iter().map(|a| 1e-13 * a.norm()).collect();

    // implicit single-shift periodic QR on the Hessenberg slice
    let max_sweeps = 30 * m;
    let mut sweeps = 0usize;
    let mut hi = m.saturating_sub(1);
    let mut since_deflation = 0usize;
    let hnorm = cy.a[last].norm();
    while hi > 0 {
        // A stubborn subdiagonal that rounding noise keeps just above the
        // strict threshold (multiple eigenvalues do this) is flushed once the
        // window stagnates, as long as zeroing it stays an order of magnitude
        // inside the backward-error budget.
        let stagnant = since_deflation >= 15;
        for j in 0..hi {
            let h = &mut cy.a[last];
            let scale = h[(j, j)].norm() + h[(j + 1, j + 1)].norm();
            let tol = if scale > 0.0 {
                8.0 * f64::EPSILON * scale
            } else {
                8.0 * f64::EPSILON * hnorm
            };
            let sub = h[(j + 1, j)].norm();
            if sub <= tol || (stagnant && sub <= 1e-13 * hnorm) {
                h[(j + 1, j)] = Complex64::new(0.0, 0.0);
            }
        }
        if cy.a[last][(hi, hi - 1)].norm() == 0.0 {
            hi -= 1;
            since_deflation = 0;
            continue;
        }
        let mut lo = hi - 1;
        while lo > 0 && cy.a[last][(lo, lo - 1)].norm() != 0.0 {
            lo -= 1;
        }
        sweeps += 1;
        since_deflation += 1;
        if sweeps > max_sweeps {
            return Err(Error::IterationLimit { sweeps });
        }

        // shift from the trailing 2×2 of the window product, accumulated in
        // scaled arithmetic; an occasional detuned shift breaks stagnation
        let mut tail = Scaled2::IDENTITY;
        let lo2 = hi - 1;
        for s in 0..p - 1 {
            tail = Scaled2::of_block(&cy.a[s], lo2).mul(tail);
        }
        tail = Scaled2::of_block(&cy.a[last], lo2).mul(tail);
        let mut sigma = tail.wilkinson();
        if since_deflation % 10 == 0 {
            sigma = sigma.scale(Complex64::new(1.0, 0.375));
        }

        let mut y_lo = ExponentScaled::product((0..p - 1).map(|s| cy.a[s][(lo, lo)]));
        if y_lo.is_zero() {
            // a rotation cancelled a triangular diagonal to exact zero;
            // nudge only the exact zeros so the shift stays meaningful
            for s in 0..p - 1 {
                for jj in lo..=hi {
                    if cy.a[s][(jj, jj)].norm() == 0.0 {
                        cy.a[s][(jj, jj)] = Complex64::new(floors[s], 0.0);
                    }
                }
            }
            y_lo = ExponentScaled::product((0..p - 1).map(|s| cy.a[s][(lo, lo)]));
        }
        let mut x1 = y_lo
            .mul(ExponentScaled::from_complex(cy.a[last][(lo, lo)]))
            .sub(sigma);
        let x2 = y_lo.mul(ExponentScaled::from_complex(cy.a[last][(lo + 1, lo)]));
        // A strongly graded diagonal chain pushes y_lo so far below the
        // shift that the opening rotation rounds to the identity and the
        // sweep stalls. An unshifted sweep still contracts the product
        // subdiagonal by the eigenvalue ratio, which is astronomically
        // small exactly when this happens.
        if !x2.is_zero() && !x1.is_zero() && x2.log2_magnitude() - x1.log2_magnitude() < -54.0 {
            x1 = y_lo.mul(ExponentScaled::from_complex(cy.a[last][(lo, lo)]));
        }

        for b in lo..hi {
            let g = if b == lo {
                Givens::make_scaled(&x1, &x2)
            } else {
                Givens::make(cy.a[last][(b, b - 1)], cy.a[last][(b + 1, b - 1)])
            };
            cy.rotate(last, g, b, b + 1);
            if b > lo {
                cy.a[last][(b + 1, b - 1)] = Complex64::new(0.0, 0.0);
            }
            if p > 1 {
                for s in 0..p - 1 {
                    let v = Givens::make(cy.a[s][(b, b)], cy.a[s][(b + 1, b)]);
                    cy.rotate(s, v, b, b + 1);
                    cy.a[s][(b + 1, b)] = Complex64::new(0.0, 0.0);
                }
            }
        }
    }

    let mut form = PeriodicSchurForm {
        z: cy.z,
        r: cy.a,
        eigenvalues: Vec::new(),
    };
    clean_lower(&mut form.r);
    form.refresh_eigenvalues();
    Ok(form)
}

/// Convenience wrapper for real input slices.
pub fn periodic_schur_real(seq: &[DMatrix<f64>]) -> Result<PeriodicSchurForm> {
    let cseq: Vec<DMatrix<Complex64>> = seq
        .iter()
        .map(|a| a.map(|x| Complex64::new(x, 0.0)))
        .collect();
    periodic_schur(&cseq)
}

fn clean_lower(r: &mut [DMatrix<Complex64>]) {
    let m = r[0].nrows();
    for a in r.iter_mut() {
        for c in 0..m {
            for rw in c + 1..m {
                a[(rw, c)] = Complex64::new(0.0, 0.0);
            }
        }
    }
}

/// Moves the eigenvalues picked by `select` (evaluated on the current
/// diagonal positions) to the leading positions, preserving their relative
/// order, through adjacent swaps.
pub fn reorder(form: &mut PeriodicSchurForm, select: impl Fn(&ExponentScaled) -> bool) -> Result<()> {
    let m = form.m();
    let mut flags: Vec<bool> = form.eigenvalues.iter().map(|e| select(e)).collect();
    let mut target = 0usize;
    for _ in 0..m {
        let Some(j) = (target..m).find(|&j| flags[j]) else {
            break;
        };
        for pos in (target..j).rev() {
            swap_adjacent(form, pos)?;
            flags.swap(pos, pos + 1);
        }
        target += 1;
    }
    form.refresh_eigenvalues();
    Ok(())
}

/// Reorders the `k` largest-magnitude eigenvalues to the front, sorted
/// descending.
pub fn reorder_top(form: &mut PeriodicSchurForm, k: usize) -> Result<()> {
    let m = form.m();
    let k = k.min(m);
    // selection sort by magnitude: for each slot pick the largest remaining
    // eigenvalue and bubble it up
    for t in 0..k {
        let mut best = t;
        for j in t + 1..m {
            if form.eigenvalues[j].cmp_magnitude(&form.eigenvalues[best])
                == std::cmp::Ordering::Greater
            {
                best = j;
            }
        }
        for pos in (t..best).rev() {
            swap_adjacent(form, pos)?;
        }
        form.refresh_eigenvalues();
    }
    Ok(())
}

/// Swaps diagonal positions `j` and `j+1` of the cyclic triangular form.
///
/// The per-slice 2×2 blocks `[[a_s, b_s], [0, c_s]]` admit an eigenvector
/// chain `(x_s, 1)` for the trailing eigenvalue, with `x_{s+1} =
/// (a_s x_s + b_s)/c_s` cyclically. The chain is solved in scaled
/// arithmetic, each slice gets the rotation sending `(x_s, 1)` to `e₁`, and
/// the swap is rejected if the transformed blocks fail to come back
/// triangular to 1e-8 relative (nearly identical eigenvalues).
fn swap_adjacent(form: &mut PeriodicSchurForm, j: usize) -> Result<()> {
    let p = form.p();
    let a: Vec<ExponentScaled> = (0..p)
        .map(|s| ExponentScaled::from_complex(form.r[s][(j, j)]))
        .collect();
    let b: Vec<ExponentScaled> = (0..p)
        .map(|s| ExponentScaled::from_complex(form.r[s][(j, j + 1)]))
        .collect();
    let c: Vec<ExponentScaled> = (0..p)
        .map(|s| {
            let v = ExponentScaled::from_complex(form.r[s][(j + 1, j + 1)]);
            if v.is_zero() {
                ExponentScaled::from_f64(1e-140)
            } else {
                v
            }
        })
        .collect();

    let mut pf = ExponentScaled::ONE;
    let mut sf = ExponentScaled::ZERO;
    for s in 0..p {
        sf = a[s].mul(sf).add(b[s]).div(c[s]);
        pf = a[s].mul(pf).div(c[s]);
    }
    let denom = ExponentScaled::ONE.sub(pf);
    if denom.is_zero() {
        return Err(Error::ReorderFailure {
            position: j,
            residual: f64::INFINITY,
        });
    }

    let mut x = sf.div(denom);
    let mut rots = Vec::with_capacity(p);
    for s in 0..p {
        rots.push(Givens::make_scaled(&x, &ExponentScaled::ONE));
        x = a[s].mul(x).add(b[s]).div(c[s]);
    }

    // dry-run on the 2×2 blocks: the swap must leave them triangular
    let mut worst = 0.0f64;
    for s in 0..p {
        let mut blk = DMatrix::from_row_slice(
            2,
            2,
            &[
                form.r[s][(j, j)],
                form.r[s][(j, j + 1)],
                Complex64::new(0.0, 0.0),
                form.r[s][(j + 1, j + 1)],
            ],
        );
        rots[s].right_h(&mut blk, 0, 1);
        rots[(s + 1) % p].left(&mut blk, 0, 1);
        let scale = form.r[s].norm();
        if scale > 0.0 {
            worst = worst.max(blk[(1, 0)].norm() / scale);
        }
    }
    if worst > 1e-8 {
        return Err(Error::ReorderFailure {
            position: j,
            residual: worst,
        });
    }

    for s in 0..p {
        rots[s].right_h(&mut form.r[s], j, j + 1);
        rots[s].right_h(&mut form.z[s], j, j + 1);
        rots[(s + 1) % p].left(&mut form.r[s], j, j + 1);
        form.r[s][(j + 1, j)] = Complex64::new(0.0, 0.0);
    }
    Ok(())
}

/// One-call eigenvalues of the cyclic product, sorted by descending
/// magnitude.
pub fn product_eigvals(seq: &[DMatrix<Complex64>]) -> Result<Vec<ExponentScaled>> {
    let form = periodic_schur(seq)?;
    let mut eigs = form.eigenvalues;
    eigs.sort_by(|a, b| b.cmp_magnitude(a));
    Ok(eigs)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::prelude::*;
    use rand_chacha::ChaCha8Rng;

    fn random_seq(rng: &mut ChaCha8Rng, m: usize, p: usize) -> Vec<DMatrix<Complex64>> {
        (0..p)
            .map(|_| DMatrix::from_fn(m, m, |_, _| Complex64::new(rng.gen_range(-1.0..1.0), 0.0)))
            .collect()
    }

    fn explicit_product(seq: &[DMatrix<Complex64>]) -> DMatrix<Complex64> {
        let m = seq[0].nrows();
        let mut f = DMatrix::identity(m, m);
        for a in seq {
            f = a * f;
        }
        f
    }

    /// Eigenvalues of the explicit product (test sequences are real) via the
    /// real Schur path, as the independent oracle.
    fn oracle_eigenvalues(seq: &[DMatrix<Complex64>]) -> Vec<Complex64> {
        let prod = explicit_product(seq).map(|z| z.re);
        prod.complex_eigenvalues().iter().copied().collect()
    }

    /// Factor relations and orthonormality, at the spec thresholds.
    fn check_form(seq: &[DMatrix<Complex64>], form: &PeriodicSchurForm) {
        let p = seq.len();
        let m = seq[0].nrows();
        for s in 0..p {
            let rel = form.z[(s + 1) % p].adjoint() * &seq[s] * &form.z[s] - &form.r[s];
            let scale = seq[s].norm().max(1e-300);
            assert!(
                rel.norm() <= 1e-12 * scale,
                "slice {s}: relation residual {} vs {}",
                rel.norm(),
                1e-12 * scale
            );
            let orth = form.z[s].adjoint() * &form.z[s] - DMatrix::<Complex64>::identity(m, m);
            assert!(orth.norm() <= 1e-13, "slice {s}: orthonormality {}", orth.norm());
            for c in 0..m {
                for r in c + 1..m {
                    assert_eq!(form.r[s][(r, c)], Complex64::new(0.0, 0.0));
                }
            }
        }
    }

    /// Greedy nearest matching of two eigenvalue sets under relative scaled
    /// difference.
    fn assert_spectra_match(got: &[ExponentScaled], want: &[Complex64], tol: f64) {
        assert_eq!(got.len(), want.len());
        let mut used = vec![false; want.len()];
        for g in got {
            let mut best = None;
            let mut best_d = f64::INFINITY;
            for (i, w) in want.iter().enumerate() {
                if used[i] {
                    continue;
                }
                let d = g.relative_diff(&ExponentScaled::from_complex(*w));
                if d < best_d {
                    best_d = d;
                    best = Some(i);
                }
            }
            let i = best.expect("unmatched eigenvalue");
            assert!(
                best_d <= tol,
                "eigenvalue {:?} differs from {:?} by {best_d:.3e}",
                g.to_complex(),
                want[i]
            );
            used[i] = true;
        }
    }

    #[test]
    fn single_slice_diagonal() {
        let seq = vec![DMatrix::from_diagonal(&DVector::from_vec(vec![
            Complex64::new(2.0, 0.0),
            Complex64::new(0.5, 0.0),
        ]))];
        let form = periodic_schur(&seq).unwrap();
        check_form(&seq, &form);
        let eigs = product_eigvals(&seq).unwrap();
        assert!(eigs[0].relative_diff(&ExponentScaled::from_f64(2.0)) < 1e-14);
        assert!(eigs[1].relative_diff(&ExponentScaled::from_f64(0.5)) < 1e-14);
    }

    #[test]
    fn quarter_rotations_compose_to_identity() {
        let (s, c) = (std::f64::consts::FRAC_PI_2).sin_cos();
        let rot = DMatrix::from_row_slice(2, 2, &[c, -s, s, c])
            .map(|x| Complex64::new(x, 0.0));
        let seq = vec![rot; 4];
        let form = periodic_schur(&seq).unwrap();
        check_form(&seq, &form);
        for j in 0..2 {
            assert!(
                form.eigenvalue_at(j)
                    .relative_diff(&ExponentScaled::ONE)
                    < 1e-12
            );
        }
    }

    #[test]
    fn diagonal_product_eigenvalues() {
        let d = |a: f64, b: f64| {
            DMatrix::from_diagonal(&DVector::from_vec(vec![
                Complex64::new(a, 0.0),
                Complex64::new(b, 0.0),
            ]))
        };
        let seq = vec![d(2.0, 1.0), d(3.0, 1.0), d(4.0, 1.0)];
        let eigs = product_eigvals(&seq).unwrap();
        assert!(eigs[0].relative_diff(&ExponentScaled::from_f64(24.0)) < 1e-14);
        assert!(eigs[1].relative_diff(&ExponentScaled::ONE) < 1e-14);
    }

    #[test]
    fn random_product_matches_explicit_eigenvalues() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let seq = random_seq(&mut rng, 4, 5);
        let form = periodic_schur(&seq).unwrap();
        check_form(&seq, &form);
        assert_spectra_match(form.eigenvalues(), &oracle_eigenvalues(&seq), 1e-9);
    }

    #[test]
    fn cyclic_rotation_preserves_spectrum() {
        // conjugate pairs share a magnitude, so match greedily instead of
        // zipping the magnitude-sorted lists
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let seq = random_seq(&mut rng, 5, 4);
        let base: Vec<Complex64> = product_eigvals(&seq)
            .unwrap()
            .iter()
            .map(|e| e.to_complex())
            .collect();
        for rot in 1..4 {
            let mut rotated = seq.clone();
            rotated.rotate_left(rot);
            let eigs = product_eigvals(&rotated).unwrap();
            assert_spectra_match(&eigs, &base, 1e-9);
        }
    }

    #[test]
    fn exponent_scaling_survives_extreme_products() {
        let d = DMatrix::from_diagonal(&DVector::from_vec(vec![
            Complex64::new(1e-8, 0.0),
            Complex64::new(1e8, 0.0),
        ]));
        let seq = vec![d.clone(), d];
        let eigs = product_eigvals(&seq).unwrap();
        assert!((eigs[0].log10_magnitude() - 16.0).abs() < 1e-10);
        assert!((eigs[1].log10_magnitude() + 16.0).abs() < 1e-10);
    }

    #[test]
    fn identity_slices_yield_ones() {
        let seq = vec![DMatrix::<Complex64>::identity(3, 3); 5];
        let eigs = product_eigvals(&seq).unwrap();
        for e in &eigs {
            assert!(e.relative_diff(&ExponentScaled::ONE) < 1e-13);
        }
    }

    #[test]
    fn zero_slice_annihilates_product() {
        let mut rng = ChaCha8Rng::seed_from_u64(13);
        let mut seq = random_seq(&mut rng, 3, 4);
        seq[2] = DMatrix::zeros(3, 3);
        let form = periodic_schur(&seq).unwrap();
        check_form(&seq, &form);
        for e in form.eigenvalues() {
            assert!(e.is_zero());
        }
    }

    #[test]
    fn reorder_selects_leading_eigenvalue() {
        // p = 1 diag(1, 3): bring 3 to the front
        let seq = vec![DMatrix::from_diagonal(&DVector::from_vec(vec![
            Complex64::new(1.0, 0.0),
            Complex64::new(3.0, 0.0),
        ]))];
        let mut form = periodic_schur(&seq).unwrap();
        reorder(&mut form, |e| e.magnitude() > 2.0).unwrap();
        check_form(&seq, &form);
        assert!(form.eigenvalue_at(0).relative_diff(&ExponentScaled::from_f64(3.0)) < 1e-12);
    }

    #[test]
    fn reorder_none_is_identity_transform() {
        let mut rng = ChaCha8Rng::seed_from_u64(21);
        let seq = random_seq(&mut rng, 4, 3);
        let mut form = periodic_schur(&seq).unwrap();
        let before: Vec<Complex64> = form.r.iter().map(|r| r[(0, 0)]).collect();
        reorder(&mut form, |_| false).unwrap();
        let after: Vec<Complex64> = form.r.iter().map(|r| r[(0, 0)]).collect();
        assert_eq!(before, after);
    }

    #[test]
    fn reorder_top_brings_largest_forward() {
        let mut rng = ChaCha8Rng::seed_from_u64(33);
        let seq = random_seq(&mut rng, 5, 4);
        let mut sorted = product_eigvals(&seq).unwrap();
        sorted.sort_by(|a, b| b.cmp_magnitude(a));
        let mut form = periodic_schur(&seq).unwrap();
        reorder_top(&mut form, 2).unwrap();
        check_form(&seq, &form);
        assert!(form.eigenvalue_at(0).relative_diff(&sorted[0]) < 1e-9);
        assert!(form.eigenvalue_at(1).relative_diff(&sorted[1]) < 1e-9);
    }

    #[test]
    fn eigenvector_satisfies_product_relation() {
        let mut rng = ChaCha8Rng::seed_from_u64(41);
        let seq = random_seq(&mut rng, 4, 3);
        let mut form = periodic_schur(&seq).unwrap();
        reorder_top(&mut form, 1).unwrap();
        let lam = form.eigenvalue_at(0).to_complex();
        let w = form.eigenvector(0);
        let f = explicit_product(&seq);
        let fw = &f * &w[0];
        let want = &w[0] * lam;
        assert!(
            (fw.clone() - want.clone()).norm() <= 1e-8 * want.norm(),
            "residual {}",
            (fw - want).norm() / w[0].norm()
        );
        // the per-slice chain: seq[s] w_s ∝ w_{s+1}
        for s in 0..3 {
            let lhs = &seq[s] * &w[s];
            let rhs = &w[(s + 1) % 3];
            let scale = rhs.dotc(&lhs) / rhs.dotc(rhs);
            assert!((lhs.clone() - rhs * scale).norm() <= 1e-8 * lhs.norm().max(1e-10));
        }
    }

    proptest::proptest! {
        #![proptest_config(proptest::prelude::ProptestConfig::with_cases(24))]
        #[test]
        fn factor_relations_hold_for_random_sequences(
            seed in 0u64..1u64 << 40,
            m in 2usize..6,
            p in 1usize..5,
        ) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let seq = random_seq(&mut rng, m, p);
            let form = periodic_schur(&seq).unwrap();
            check_form(&seq, &form);
            assert_spectra_match(form.eigenvalues(), &oracle_eigenvalues(&seq), 1e-8);
        }
    }

    #[test]
    fn larger_random_case_stays_within_budget() {
        let mut rng = ChaCha8Rng::seed_from_u64(55);
        let seq = random_seq(&mut rng, 12, 6);
        let form = periodic_schur(&seq).unwrap();
        check_form(&seq, &form);
        assert_spectra_match(form.eigenvalues(), &oracle_eigenvalues(&seq), 1e-8);
    }
}
