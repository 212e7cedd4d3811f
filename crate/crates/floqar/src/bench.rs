//! Benchmark systems with known answers and the convergence-study harness:
//! the rotating 2×2 model with a closed-form Floquet decomposition, the
//! coupled oscillator pair whose anti-phase orbit is found by shooting, and
//! the p-refinement study that fits observed convergence orders.

use crate::floquet::{self, SolverChoice};
use crate::grid::PeriodicGrid;
use crate::lptv::{assemble, SampledLptvSystem};
use crate::multistep::MultistepScheme;
use crate::scaled::ExponentScaled;
use crate::spurious::SpectrumTag;
use crate::{Error, Result};
use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use std::sync::Arc;

/// Admissible coupling range for [`coupled_stuart_landau`]: below the lower
/// bound the anti-phase orbit's unit multiplier degenerates toward
/// multiplicity two and shooting loses its Jacobian; above the upper bound
/// the orbit heads into the heteroclinic limit.
pub const COUPLING_RANGE: (f64, f64) = (0.05, 0.20);

/// Steps per period of the internal fixed-step integrator behind the
/// shooting method (rounded up to a multiple of the output density).
const SHOOTING_STEPS: usize = 4096;

/// Linearization of the Stuart–Landau oscillator along its limit cycle,
/// sampled on a grid, with the closed-form Floquet data alongside.
#[derive(Clone, Debug)]
pub struct StuartLandauModel {
    pub system: Arc<SampledLptvSystem>,
    pub alpha: f64,
    pub beta: f64,
}

/// `G(t)` of the Stuart–Landau linearization.
pub fn stuart_landau_jacobian(alpha: f64, beta: f64, t: f64) -> DMatrix<f64> {
    let (s, c) = t.sin_cos();
    let off = (beta - alpha - 2.0) * s * c;
    DMatrix::from_row_slice(
        2,
        2,
        &[
            alpha * c * c + (beta - 2.0) * s * s,
            1.0 + off,
            -1.0 + off,
            alpha * s * s + (beta - 2.0) * c * c,
        ],
    )
}

/// The rotating eigenvector basis `U(t)`; its columns are the Floquet
/// eigenvectors at time `t`, ordered like [`StuartLandauModel::multipliers`].
pub fn rotating_basis(t: f64) -> DMatrix<f64> {
    let (s, c) = t.sin_cos();
    DMatrix::from_row_slice(2, 2, &[c, s, -s, c])
}

/// Samples the Stuart–Landau linearization on `grid`, which must span one
/// full period 2π of the underlying limit cycle.
pub fn stuart_landau(alpha: f64, beta: f64, grid: PeriodicGrid) -> Result<StuartLandauModel> {
    let period = 2.0 * std::f64::consts::PI;
    if (grid.period() - period).abs() > 1e-12 * period {
        return Err(Error::InvalidArgument(format!(
            "the limit cycle has period 2π, the grid covers {}",
            grid.period()
        )));
    }
    let system = Arc::new(SampledLptvSystem::from_callback(grid, |t| {
        stuart_landau_jacobian(alpha, beta, t)
    })?);
    Ok(StuartLandauModel {
        system,
        alpha,
        beta,
    })
}

impl StuartLandauModel {
    /// Exact multipliers, eigenvector-column order of [`rotating_basis`].
    pub fn multipliers(&self) -> [ExponentScaled; 2] {
        let tau = 2.0 * std::f64::consts::PI;
        [
            ExponentScaled::from_f64((tau * self.alpha).exp()),
            ExponentScaled::from_f64((tau * (self.beta - 2.0)).exp()),
        ]
    }

    /// Diagonal Floquet exponent matrix `M` with `U̇ = G U − U M`.
    pub fn exponent_matrix(&self) -> DMatrix<f64> {
        DMatrix::from_diagonal(&DVector::from_vec(vec![self.alpha, self.beta - 2.0]))
    }

    /// The dominant exact eigenpair as a study reference.
    pub fn reference(&self) -> ReferenceSolution {
        let vals = self.multipliers();
        let dominant = usize::from(vals[1].cmp_magnitude(&vals[0]) == std::cmp::Ordering::Greater);
        let u0 = rotating_basis(0.0);
        let vector = DVector::from_iterator(
            2,
            u0.column(dominant).iter().map(|&x| Complex64::new(x, 0.0)),
        );
        ReferenceSolution {
            multipliers: vec![vals[dominant]],
            vectors: vec![vector],
        }
    }
}

/// The coupled oscillator pair behind [`coupled_stuart_landau`].
#[derive(Clone, Copy, Debug)]
struct CoupledOde {
    beta: f64,
    delta: f64,
}

impl CoupledOde {
    fn f(&self, x: &[f64; 4]) -> [f64; 4] {
        let (b, d) = (self.beta, self.delta);
        let coupling = d * (x[2] - x[0] + x[3] - x[1]);
        let r1 = x[0] * x[0] + x[1] * x[1];
        let r2 = x[2] * x[2] + x[3] * x[3];
        [
            x[0] + b * x[1] - x[0] * r1 + coupling,
            -b * x[0] + x[1] - x[1] * r1 + coupling,
            x[2] + b * x[3] - x[2] * r2 - coupling,
            -b * x[2] + x[3] - x[3] * r2 - coupling,
        ]
    }

    fn jacobian(&self, x: &[f64; 4]) -> DMatrix<f64> {
        let (b, d) = (self.beta, self.delta);
        let (x1, y1, x2, y2) = (x[0], x[1], x[2], x[3]);
        DMatrix::from_row_slice(
            4,
            4,
            &[
                1.0 - 3.0 * x1 * x1 - y1 * y1 - d,
                b - 2.0 * x1 * y1 - d,
                d,
                d,
                -b - 2.0 * x1 * y1 - d,
                1.0 - x1 * x1 - 3.0 * y1 * y1 - d,
                d,
                d,
                d,
                d,
                1.0 - 3.0 * x2 * x2 - y2 * y2 - d,
                b - 2.0 * x2 * y2 - d,
                d,
                d,
                -b - 2.0 * x2 * y2 - d,
                1.0 - x2 * x2 - 3.0 * y2 * y2 - d,
            ],
        )
    }
}

/// One RK4 step of the coupled system.
fn rk4_step(ode: &CoupledOde, x: &[f64; 4], h: f64) -> [f64; 4] {
    let k1 = ode.f(x);
    let mut tmp = [0.0; 4];
    for i in 0..4 {
        tmp[i] = x[i] + 0.5 * h * k1[i];
    }
    let k2 = ode.f(&tmp);
    for i in 0..4 {
        tmp[i] = x[i] + 0.5 * h * k2[i];
    }
    let k3 = ode.f(&tmp);
    for i in 0..4 {
        tmp[i] = x[i] + h * k3[i];
    }
    let k4 = ode.f(&tmp);
    let mut out = [0.0; 4];
    for i in 0..4 {
        out[i] = x[i] + h / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]);
    }
    out
}

/// Fixed-step trajectory over `[0, t_total]` in `steps` steps: RK4 startup
/// for the first three points, then the implicit 4-step Gear corrector with
/// a per-step Newton solve. Returns all `steps + 1` states.
fn gear4_trajectory(
    ode: &CoupledOde,
    x0: [f64; 4],
    t_total: f64,
    steps: usize,
) -> Result<Vec<[f64; 4]>> {
    let h = t_total / steps as f64;
    let coeffs = MultistepScheme::Gear4.coefficients_from_ratios(&[1.0, 1.0, 1.0])?;
    let beta_h = coeffs.beta[4] * h;

    let mut traj = Vec::with_capacity(steps + 1);
    traj.push(x0);
    let mut x = x0;
    for _ in 0..steps.min(3) {
        x = rk4_step(ode, &x, h);
        traj.push(x);
    }
    for m in 4..=steps {
        // Σ_{j<4} α_j x_{m−4+j} folded into the right-hand side
        let mut rhs = [0.0; 4];
        for j in 0..4 {
            let xj = &traj[m - 4 + j];
            for i in 0..4 {
                rhs[i] -= coeffs.alpha[j] * xj[i];
            }
        }
        // Newton on x − βΔt f(x) = rhs from the previous state
        let mut iterations = 0;
        loop {
            let fx = ode.f(&x);
            let res =
                DVector::from_iterator(4, (0..4).map(|i| x[i] - beta_h * fx[i] - rhs[i]));
            let jac = DMatrix::identity(4, 4) - ode.jacobian(&x) * beta_h;
            let delta = jac.lu().solve(&res).ok_or(Error::OrbitNotFound {
                iterations,
                residual: res.norm(),
            })?;
            for i in 0..4 {
                x[i] -= delta[i];
            }
            iterations += 1;
            let scale = 1.0 + x.iter().map(|v| v.abs()).fold(0.0, f64::max);
            if delta.norm() <= 1e-14 * scale || iterations >= 12 {
                break;
            }
        }
        traj.push(x);
    }
    Ok(traj)
}

fn endpoint(ode: &CoupledOde, x0: [f64; 4], t_total: f64, steps: usize) -> Result<[f64; 4]> {
    Ok(*gear4_trajectory(ode, x0, t_total, steps)?.last().unwrap())
}

/// The anti-phase reduction: on the symmetry manifold `x2 = −x1, y2 = −y1`
/// the pair collapses to one oscillator with shifted coefficients, where the
/// orbit is attracting and relaxation is safe.
fn reduced_f(beta: f64, delta: f64, x: f64, y: f64) -> (f64, f64) {
    let r = x * x + y * y;
    (
        (1.0 - 2.0 * delta) * x + (beta - 2.0 * delta) * y - x * r,
        -(beta + 2.0 * delta) * x + (1.0 - 2.0 * delta) * y - y * r,
    )
}

fn reduced_rk4(beta: f64, delta: f64, x: f64, y: f64, h: f64) -> (f64, f64) {
    let k1 = reduced_f(beta, delta, x, y);
    let k2 = reduced_f(beta, delta, x + 0.5 * h * k1.0, y + 0.5 * h * k1.1);
    let k3 = reduced_f(beta, delta, x + 0.5 * h * k2.0, y + 0.5 * h * k2.1);
    let k4 = reduced_f(beta, delta, x + h * k3.0, y + h * k3.1);
    (
        x + h / 6.0 * (k1.0 + 2.0 * k2.0 + 2.0 * k3.0 + k4.0),
        y + h / 6.0 * (k1.1 + 2.0 * k2.1 + 2.0 * k3.1 + k4.1),
    )
}

/// Anti-phase periodic orbit of the coupled pair plus the variational system
/// along it, sampled on a uniform grid of `grid_density` slices.
#[derive(Clone, Debug)]
pub struct CoupledOrbit {
    /// Variational (Jacobian) samples along the orbit.
    pub system: Arc<SampledLptvSystem>,
    pub period: f64,
    /// Orbit state at `t = 0`, phase-pinned to `x1 = 0`.
    pub initial_state: DVector<f64>,
    /// Final Newton residual of the shooting solve.
    pub newton_residual: f64,
    /// Orbit states at the grid times.
    pub samples: Vec<DVector<f64>>,
    pub beta: f64,
    pub delta: f64,
}

/// Finds the anti-phase orbit of the coupled oscillator pair by single
/// shooting (Newton on the period map, phase pinned at an upward `x1 = 0`
/// crossing) and samples its variational system on `grid_density` slices.
pub fn coupled_stuart_landau(
    beta: f64,
    delta: f64,
    grid_density: usize,
) -> Result<CoupledOrbit> {
    if !(COUPLING_RANGE.0..=COUPLING_RANGE.1).contains(&delta) {
        return Err(Error::InvalidArgument(format!(
            "coupling delta = {delta} outside the admissible range [{}, {}]",
            COUPLING_RANGE.0, COUPLING_RANGE.1
        )));
    }
    if beta <= 2.0 * delta {
        return Err(Error::InvalidArgument(format!(
            "beta = {beta} must exceed 2·delta = {} for the orbit to rotate",
            2.0 * delta
        )));
    }
    if grid_density < 8 {
        return Err(Error::InvalidArgument(format!(
            "grid density {grid_density} is too coarse to sample the orbit"
        )));
    }

    let ode = CoupledOde { beta, delta };
    let steps = grid_density * SHOOTING_STEPS.div_ceil(grid_density);

    let (y_cross, period_guess) = relaxed_guess(beta, delta)?;
    // unknowns: (y1, x2, y2, T) with x1 pinned at 0
    let mut v = [y_cross, 0.0, -y_cross, period_guess];
    let mut residual = f64::INFINITY;
    let mut converged = false;
    for iteration in 0..50 {
        let x0 = [0.0, v[0], v[1], v[2]];
        let base = endpoint(&ode, x0, v[3], steps)?;
        let r = DVector::from_iterator(4, (0..4).map(|i| base[i] - x0[i]));
        residual = r.norm();
        if residual <= 1e-12 * (1.0 + r_norm(&x0)) {
            converged = true;
            break;
        }
        let mut jac = DMatrix::zeros(4, 4);
        let fd = 1e-7;
        for (col, comp) in [1usize, 2, 3].iter().enumerate() {
            let mut xp = x0;
            xp[*comp] += fd;
            let pert = endpoint(&ode, xp, v[3], steps)?;
            for row in 0..4 {
                jac[(row, col)] = (pert[row] - base[row]) / fd - f64::from(u8::from(row == *comp));
            }
        }
        let f_end = ode.f(&base);
        for row in 0..4 {
            jac[(row, 3)] = f_end[row];
        }
        let delta_v = jac.lu().solve(&(-&r)).ok_or(Error::OrbitNotFound {
            iterations: iteration,
            residual,
        })?;
        for i in 0..4 {
            v[i] += delta_v[i];
        }
        if !v[3].is_finite() || v[3] <= 0.0 {
            return Err(Error::OrbitNotFound {
                iterations: iteration,
                residual,
            });
        }
    }
    if !converged && residual > 1e-10 {
        return Err(Error::OrbitNotFound {
            iterations: 50,
            residual,
        });
    }

    let x0 = [0.0, v[0], v[1], v[2]];
    let period = v[3];
    let traj = gear4_trajectory(&ode, x0, period, steps)?;
    let per_slice = steps / grid_density;
    let grid = PeriodicGrid::uniform(grid_density, period)?;
    let samples: Vec<DVector<f64>> = (0..grid_density)
        .map(|i| DVector::from_row_slice(&traj[i * per_slice]))
        .collect();
    let jacobians: Vec<DMatrix<f64>> = (0..grid_density)
        .map(|i| ode.jacobian(&traj[i * per_slice]))
        .collect();
    let system = Arc::new(SampledLptvSystem::from_dense(grid, jacobians)?);
    let closure = (0..4)
        .map(|i| (traj[steps][i] - x0[i]).powi(2))
        .sum::<f64>()
        .sqrt();
    Ok(CoupledOrbit {
        system,
        period,
        initial_state: DVector::from_row_slice(&x0),
        newton_residual: residual.max(closure),
        samples,
        beta,
        delta,
    })
}

fn r_norm(x: &[f64; 4]) -> f64 {
    x.iter().map(|v| v * v).sum::<f64>().sqrt()
}

/// Crossing state and period estimate from the relaxed reduced system.
fn relaxed_guess(beta: f64, delta: f64) -> Result<(f64, f64)> {
    let h = 0.02;
    let (mut x, mut y) = (0.0, 1.0);
    for _ in 0..7500 {
        (x, y) = reduced_rk4(beta, delta, x, y, h);
    }
    let mut t = 0.0;
    let mut found: Option<(f64, f64)> = None; // (crossing time, y at crossing)
    let mut first: Option<(f64, f64)> = None;
    for _ in 0..200_000 {
        let (nx, ny) = reduced_rk4(beta, delta, x, y, h);
        if x < 0.0 && nx >= 0.0 && ny > 0.0 {
            let (mut lo, mut hi) = (0.0, h);
            let mut y_hit = ny;
            for _ in 0..60 {
                let mid = 0.5 * (lo + hi);
                let cand = reduced_rk4(beta, delta, x, y, mid);
                if cand.0 >= 0.0 {
                    hi = mid;
                    y_hit = cand.1;
                } else {
                    lo = mid;
                }
            }
            let t_cross = t + hi;
            match first {
                None => first = Some((t_cross, y_hit)),
                Some((t0, y0)) => {
                    found = Some((y0, t_cross - t0));
                    break;
                }
            }
        }
        (x, y) = (nx, ny);
        t += h;
    }
    found.ok_or(Error::OrbitNotFound {
        iterations: 0,
        residual: f64::INFINITY,
    })
}

/// Reference eigenpairs a study measures against: exact when closed-form,
/// otherwise from a finer solve. Vectors are slice-0 samples; their count
/// sets the subspace dimension of the angle metric.
#[derive(Clone, Debug)]
pub struct ReferenceSolution {
    pub multipliers: Vec<ExponentScaled>,
    pub vectors: Vec<DVector<Complex64>>,
}

/// A system that can be sampled at any grid resolution, with a reference
/// answer to measure errors against.
pub trait SystemFamily {
    fn name(&self) -> &str;
    fn period(&self) -> f64;
    fn build(&self, grid: &PeriodicGrid) -> Result<Arc<SampledLptvSystem>>;
    fn reference(&self) -> Result<ReferenceSolution>;
}

/// The Stuart–Landau linearization as a study family with its exact
/// dominant eigenpair as reference.
#[derive(Clone, Copy, Debug)]
pub struct StuartLandauFamily {
    pub alpha: f64,
    pub beta: f64,
}

impl SystemFamily for StuartLandauFamily {
    fn name(&self) -> &str {
        "stuart-landau"
    }

    fn period(&self) -> f64 {
        2.0 * std::f64::consts::PI
    }

    fn build(&self, grid: &PeriodicGrid) -> Result<Arc<SampledLptvSystem>> {
        Ok(stuart_landau(self.alpha, self.beta, grid.clone())?.system)
    }

    fn reference(&self) -> Result<ReferenceSolution> {
        let grid = PeriodicGrid::uniform(4, self.period())?;
        Ok(stuart_landau(self.alpha, self.beta, grid)?.reference())
    }
}

/// One (scheme, p) measurement of a convergence study.
#[derive(Clone, Debug)]
pub struct StudyCell {
    pub scheme: MultistepScheme,
    pub p: usize,
    pub dt_max: f64,
    /// Relative error of the dominant multiplier.
    pub e_val: f64,
    /// Aligned relative error of the dominant slice-0 eigenvector.
    pub e_vec: f64,
    /// Largest principal angle between the computed and reference dominant
    /// subspaces at slice 0.
    pub angle: f64,
    /// log10 magnitudes of the computed eigenvalues tagged as parasitic.
    pub spurious_log10: Vec<f64>,
    /// Set when the cell's solve failed; the study continues without it.
    pub failure: Option<String>,
}

/// Fitted log-log convergence slopes of one scheme across the grid family.
#[derive(Clone, Copy, Debug)]
pub struct SchemeSlopes {
    pub scheme: MultistepScheme,
    pub value_slope: f64,
    pub vector_slope: f64,
}

#[derive(Clone, Debug)]
pub struct ConvergenceStudy {
    pub cells: Vec<StudyCell>,
    pub slopes: Vec<SchemeSlopes>,
}

impl ConvergenceStudy {
    pub fn cells_for(&self, scheme: MultistepScheme) -> impl Iterator<Item = &StudyCell> {
        self.cells.iter().filter(move |c| c.scheme == scheme)
    }

    pub fn slope_for(&self, scheme: MultistepScheme) -> Option<SchemeSlopes> {
        self.slopes.iter().copied().find(|s| s.scheme == scheme)
    }
}

/// Runs each scheme over the 1:2 alternating-step grid family at the given
/// slice counts, measuring against the family's reference and fitting
/// log-log error slopes against the largest stepsize. Solver failures are
/// recorded per cell and skipped by the fits.
pub fn run_convergence(
    family: &dyn SystemFamily,
    schemes: &[MultistepScheme],
    p_values: &[usize],
) -> Result<ConvergenceStudy> {
    let reference = family.reference()?;
    if reference.multipliers.is_empty() || reference.vectors.is_empty() {
        return Err(Error::InvalidArgument(
            "study reference must carry at least one eigenpair".into(),
        ));
    }
    let mut cells = Vec::with_capacity(schemes.len() * p_values.len());
    for &scheme in schemes {
        for &p in p_values {
            cells.push(match study_cell(family, &reference, scheme, p) {
                Ok(cell) => cell,
                Err(e) => StudyCell {
                    scheme,
                    p,
                    dt_max: f64::NAN,
                    e_val: f64::NAN,
                    e_vec: f64::NAN,
                    angle: f64::NAN,
                    spurious_log10: Vec::new(),
                    failure: Some(e.to_string()),
                },
            });
        }
    }
    let slopes = schemes
        .iter()
        .map(|&scheme| {
            let of = |f: &dyn Fn(&StudyCell) -> f64| {
                let pts: Vec<(f64, f64)> = cells
                    .iter()
                    .filter(|c| c.scheme == scheme && c.failure.is_none())
                    .map(|c| (c.dt_max, f(c)))
                    .collect();
                fit_order(&pts)
            };
            SchemeSlopes {
                scheme,
                value_slope: of(&|c| c.e_val),
                vector_slope: of(&|c| c.e_vec),
            }
        })
        .collect();
    Ok(ConvergenceStudy { cells, slopes })
}

fn study_cell(
    family: &dyn SystemFamily,
    reference: &ReferenceSolution,
    scheme: MultistepScheme,
    p: usize,
) -> Result<StudyCell> {
    if p % 2 != 0 {
        return Err(Error::InvalidArgument(format!(
            "the 1:2 alternating pattern needs an even slice count, got {p}"
        )));
    }
    let grid = PeriodicGrid::pattern(family.period(), &[1.0, 2.0], p / 2)?;
    let dt_max = grid.max_step();
    let system = family.build(&grid)?;
    let op = assemble(system, scheme)?;
    let nd = op.n() * op.d();
    let sol = floquet::solve(&op, nd, SolverChoice::Dense)?;

    let e_val = floquet::eig_error(sol.multipliers[0], reference.multipliers[0])?;
    let e_vec = floquet::vec_error(sol.eigenvector_at_slice(0, 0), &reference.vectors[0])?;
    let k = reference.vectors.len();
    let n = sol.n();
    let computed = DMatrix::from_fn(n, k, |r, c| sol.eigenvectors[c][0][r]);
    let wanted = DMatrix::from_fn(n, k, |r, c| reference.vectors[c][r]);
    let angle = floquet::subspace_angle(&computed, &wanted)?;
    let spurious_log10 = sol
        .multipliers
        .iter()
        .zip(&sol.tags)
        .filter(|(_, tag)| **tag == SpectrumTag::SpuriousSuspect)
        .map(|(m, _)| m.log10_magnitude())
        .collect();
    Ok(StudyCell {
        scheme,
        p,
        dt_max,
        e_val,
        e_vec,
        angle,
        spurious_log10,
        failure: None,
    })
}

/// Least-squares slope of `log10 e` against `log10 Δt`, dropping the
/// coarsest point when its error is above 0.1 (outside the asymptotic
/// regime) and any exact zeros. NaN when fewer than two points remain.
pub fn fit_order(points: &[(f64, f64)]) -> f64 {
    let mut pts: Vec<(f64, f64)> = points
        .iter()
        .copied()
        .filter(|&(dt, e)| dt > 0.0 && e > 0.0 && e.is_finite())
        .collect();
    pts.sort_by(|a, b| b.0.total_cmp(&a.0));
    if let Some(&(_, e0)) = pts.first() {
        if e0 > 0.1 {
            pts.remove(0);
        }
    }
    if pts.len() < 2 {
        return f64::NAN;
    }
    let logs: Vec<(f64, f64)> = pts.iter().map(|&(x, y)| (x.log10(), y.log10())).collect();
    let m = logs.len() as f64;
    let sx: f64 = logs.iter().map(|p| p.0).sum();
    let sy: f64 = logs.iter().map(|p| p.1).sum();
    let sxx: f64 = logs.iter().map(|p| p.0 * p.0).sum();
    let sxy: f64 = logs.iter().map(|p| p.0 * p.1).sum();
    (m * sxy - sx * sy) / (m * sxx - sx * sx)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn stuart_landau_samples_match_printed_matrix() {
        let grid = PeriodicGrid::uniform(8, 2.0 * std::f64::consts::PI).unwrap();
        let (alpha, beta) = (0.1, 0.5);
        let model = stuart_landau(alpha, beta, grid).unwrap();
        let at = |i: i64| match model.system.sample(i) {
            crate::lptv::SystemSlice::Dense(m) => m.clone(),
            _ => unreachable!(),
        };
        let t0 = at(0);
        assert_relative_eq!(t0[(0, 0)], alpha, max_relative = 1e-14);
        assert_relative_eq!(t0[(0, 1)], 1.0, max_relative = 1e-14);
        assert_relative_eq!(t0[(1, 0)], -1.0, max_relative = 1e-14);
        assert_relative_eq!(t0[(1, 1)], beta - 2.0, max_relative = 1e-14);
        // a quarter period swaps the diagonal
        let tq = at(2);
        assert_relative_eq!(tq[(0, 0)], beta - 2.0, epsilon = 1e-12);
        assert_relative_eq!(tq[(1, 1)], alpha, epsilon = 1e-12);
        assert_relative_eq!(tq[(0, 1)], 1.0, epsilon = 1e-12);

        let bad = PeriodicGrid::uniform(8, 1.0).unwrap();
        assert!(matches!(
            stuart_landau(alpha, beta, bad),
            Err(Error::InvalidArgument(_))
        ));
    }

    #[test]
    fn stuart_landau_exact_record() {
        let grid = PeriodicGrid::uniform(8, 2.0 * std::f64::consts::PI).unwrap();
        let model = stuart_landau(0.1, 0.1, grid).unwrap();
        let [m1, m2] = model.multipliers();
        assert_relative_eq!(
            m1.magnitude(),
            (0.2 * std::f64::consts::PI).exp(),
            max_relative = 1e-14
        );
        assert_relative_eq!(
            m2.magnitude(),
            (-3.8 * std::f64::consts::PI).exp(),
            max_relative = 1e-14
        );
    }

    #[test]
    fn exact_basis_satisfies_the_variational_ode() {
        // d/dt U = G U − U M, checked by central differences
        let grid = PeriodicGrid::uniform(4, 2.0 * std::f64::consts::PI).unwrap();
        let model = stuart_landau(0.1, 0.5, grid).unwrap();
        let m = model.exponent_matrix();
        let h = 1e-6;
        for &t in &[0.0, 0.7, 2.3, 4.0, 6.0] {
            let du = (rotating_basis(t + h) - rotating_basis(t - h)) / (2.0 * h);
            let rhs = stuart_landau_jacobian(model.alpha, model.beta, t) * rotating_basis(t)
                - rotating_basis(t) * &m;
            let resid = (&du - &rhs).norm();
            assert!(resid < 1e-4, "t = {t}: ODE residual {resid}");
        }
    }

    #[test]
    fn coupled_orbit_closes_and_keeps_antiphase_symmetry() {
        let orbit = coupled_stuart_landau(0.5, 0.1, 64).unwrap();
        assert!(orbit.newton_residual <= 1e-10, "{}", orbit.newton_residual);
        assert!(
            orbit.period > 10.0 && orbit.period < 20.0,
            "period {}",
            orbit.period
        );
        assert_eq!(orbit.samples.len(), 64);
        assert_eq!(orbit.initial_state[0], 0.0);
        for s in &orbit.samples {
            let asym = ((s[0] + s[2]).powi(2) + (s[1] + s[3]).powi(2)).sqrt();
            assert!(asym <= 1e-8, "anti-phase violation {asym}");
        }
    }

    #[test]
    fn coupled_orbit_rejects_out_of_range_coupling() {
        for delta in [0.0, 0.01, 0.25, 0.5] {
            assert!(matches!(
                coupled_stuart_landau(0.5, delta, 64),
                Err(Error::InvalidArgument(_))
            ));
        }
        assert!(matches!(
            coupled_stuart_landau(0.5, 0.1, 4),
            Err(Error::InvalidArgument(_))
        ));
    }

    #[test]
    fn coupled_variational_system_has_a_unit_multiplier() {
        let orbit = coupled_stuart_landau(0.5, 0.1, 256).unwrap();
        let op = assemble(orbit.system.clone(), MultistepScheme::Gear4).unwrap();
        let sol = floquet::solve(&op, 4, SolverChoice::Dense).unwrap();
        // the autonomous-system invariant: one multiplier sits at 1
        let best = sol
            .multipliers
            .iter()
            .map(|m| m.relative_diff(&ExponentScaled::ONE))
            .fold(f64::INFINITY, f64::min);
        assert!(best < 1e-4, "no unit multiplier, closest {best}");
    }

    #[test]
    fn study_measures_first_and_second_order_on_the_toy_model() {
        let family = StuartLandauFamily {
            alpha: 0.1,
            beta: 0.1,
        };
        let study = run_convergence(
            &family,
            &[MultistepScheme::BackwardEuler, MultistepScheme::Gear2],
            &[64, 128, 256, 512, 1024],
        )
        .unwrap();
        let be = study.slope_for(MultistepScheme::BackwardEuler).unwrap();
        let g2 = study.slope_for(MultistepScheme::Gear2).unwrap();
        assert!((be.value_slope - 1.0).abs() < 0.2, "BE {}", be.value_slope);
        assert!((g2.value_slope - 2.0).abs() < 0.2, "Gear2 {}", g2.value_slope);
        assert!((be.vector_slope - 1.0).abs() < 0.2);
        assert!((g2.vector_slope - 2.0).abs() < 0.2);

        // errors shrink monotonically with refinement
        for scheme in [MultistepScheme::BackwardEuler, MultistepScheme::Gear2] {
            let evals: Vec<f64> = study.cells_for(scheme).map(|c| c.e_val).collect();
            assert!(evals.windows(2).all(|w| w[1] < w[0]), "{evals:?}");
        }
        // Gear2 tags (d−1)·n = 2 parasitic eigenvalues per cell
        for cell in study.cells_for(MultistepScheme::Gear2) {
            assert_eq!(cell.spurious_log10.len(), 2);
        }
        for cell in study.cells_for(MultistepScheme::BackwardEuler) {
            assert!(cell.spurious_log10.is_empty());
        }
    }

    #[test]
    fn study_records_failures_and_continues() {
        let family = StuartLandauFamily {
            alpha: 0.1,
            beta: 0.1,
        };
        let study = run_convergence(
            &family,
            &[MultistepScheme::Gear2],
            &[7, 64, 128, 256, 512],
        )
        .unwrap();
        let cells: Vec<&StudyCell> = study.cells_for(MultistepScheme::Gear2).collect();
        assert!(cells[0].failure.is_some(), "odd p cannot form the pattern");
        assert!(cells[1..].iter().all(|c| c.failure.is_none()));
        let slope = study.slope_for(MultistepScheme::Gear2).unwrap();
        assert!((slope.value_slope - 2.0).abs() < 0.2);
    }

    #[test]
    fn fit_order_drops_preasymptotic_head() {
        // clean second-order data with a saturated coarsest point
        let pts = [(0.4, 0.5), (0.2, 0.04), (0.1, 0.01), (0.05, 0.0025)];
        let slope = fit_order(&pts);
        assert!((slope - 2.0).abs() < 1e-12, "{slope}");
        assert!(fit_order(&[(0.1, 0.5)]).is_nan());
    }
}
