//! Variable-step BDF (Gear) coefficient generation, orders 1 to 4.
//!
//! A d-step method advances `x' = f(t, x)` by
//!
//! ```text
//!   Σ_{j=0..d} α_j⁽ⁱ⁾ x_{i−d+j}  =  Δt⁽ⁱ⁾ Σ_{j=0..d} β_j⁽ⁱ⁾ f(t_{i−d+j}, x_{i−d+j})
//! ```
//!
//! normalized so `α_d = 1`. On a variable grid the coefficients change per
//! step; they depend only on the `d−1` stepsize ratios inside the stencil.
//! BDF methods fix `β_j = 0` for `j < d`, which makes the order conditions a
//! square Vandermonde system on the normalized node offsets
//! `ξ_j = (t_{i−d+j} − t_i)/Δt⁽ⁱ⁾`:
//!
//! ```text
//!   Σ_j α_j ξ_j^m − m β_d ξ_d^{m−1} = 0   for m = 0..d   (ξ_d = 0)
//! ```
//!
//! Solving those conditions is the defining property of the family and is how
//! every order here is generated; the published Gear2 closed form
//! `α_0 = ω²/(1+2ω)`, `α_1 = −1−α_0`, `β_2 = (1+ω)/(1+2ω)` is kept as a test
//! oracle.

use crate::grid::PeriodicGrid;
use crate::{Error, Result};
use nalgebra::DMatrix;

/// Order-condition residual above which a generated coefficient set is
/// rejected as degenerate.
const ORDER_CONDITION_TOL: f64 = 1e-10;

/// BDF schemes by step count `d`; the consistency order equals `d`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum MultistepScheme {
    BackwardEuler,
    Gear2,
    Gear3,
    Gear4,
}

impl MultistepScheme {
    pub const ALL: [MultistepScheme; 4] = [
        MultistepScheme::BackwardEuler,
        MultistepScheme::Gear2,
        MultistepScheme::Gear3,
        MultistepScheme::Gear4,
    ];

    /// Step count `d`.
    pub fn steps(&self) -> usize {
        match self {
            MultistepScheme::BackwardEuler => 1,
            MultistepScheme::Gear2 => 2,
            MultistepScheme::Gear3 => 3,
            MultistepScheme::Gear4 => 4,
        }
    }

    /// Consistency order `s` (`= d` for BDF).
    pub fn order(&self) -> usize {
        self.steps()
    }

    pub fn name(&self) -> &'static str {
        match self {
            MultistepScheme::BackwardEuler => "be",
            MultistepScheme::Gear2 => "gear2",
            MultistepScheme::Gear3 => "gear3",
            MultistepScheme::Gear4 => "gear4",
        }
    }

    pub fn from_name(name: &str) -> Result<Self> {
        match name {
            "be" | "gear1" => Ok(MultistepScheme::BackwardEuler),
            "gear2" => Ok(MultistepScheme::Gear2),
            "gear3" => Ok(MultistepScheme::Gear3),
            "gear4" => Ok(MultistepScheme::Gear4),
            other => Err(Error::InvalidArgument(format!(
                "unknown scheme '{other}' (expected be, gear2, gear3 or gear4)"
            ))),
        }
    }

    /// Coefficients for the step ending at grid index `i` (the step from
    /// `t_{i−1}` to `t_i`), from the actual node times.
    pub fn coefficients_at(&self, grid: &PeriodicGrid, i: i64) -> Result<StepCoefficients> {
        let d = self.steps();
        let t_i = grid.time_at(i);
        let dt = grid.step(i - 1);
        let offsets: Vec<f64> = (0..=d)
            .map(|j| (grid.time_at(i - d as i64 + j as i64) - t_i) / dt)
            .collect();
        let slice = i.rem_euclid(grid.p() as i64) as usize;
        solve_order_conditions(&offsets, slice)
    }

    /// Coefficients from the `d−1` stepsize ratios `(ω_{i−d+2}, …, ω_i)`
    /// inside the stencil, oldest first.
    pub fn coefficients_from_ratios(&self, ratios: &[f64]) -> Result<StepCoefficients> {
        let d = self.steps();
        if ratios.len() != d - 1 {
            return Err(Error::InvalidArgument(format!(
                "{} needs {} stepsize ratios, got {}",
                self.name(),
                d - 1,
                ratios.len()
            )));
        }
        if ratios.iter().any(|&w| !(w > 0.0) || !w.is_finite()) {
            return Err(Error::InvalidArgument(
                "stepsize ratios must be positive and finite".into(),
            ));
        }
        // reconstruct offsets: xi_d = 0 and each older interval is the newer
        // one divided by its ratio
        let mut offsets = vec![0.0; d + 1];
        let mut interval = 1.0; // Δt_{i-l+1}/Δt_i, starting with l = 1
        for l in 1..=d {
            offsets[d - l] = offsets[d - l + 1] - interval;
            if l < d {
                interval /= ratios[d - 1 - l];
            }
        }
        solve_order_conditions(&offsets, 0)
    }

    /// Coefficients for every step of one period, in step order `i = 1..p`.
    pub fn period_coefficients(&self, grid: &PeriodicGrid) -> Result<Vec<StepCoefficients>> {
        (1..=grid.p() as i64)
            .map(|i| self.coefficients_at(grid, i))
            .collect()
    }
}

impl serde::Serialize for MultistepScheme {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        s.serialize_str(self.name())
    }
}

impl<'de> serde::Deserialize<'de> for MultistepScheme {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let name = <String as serde::Deserialize>::deserialize(d)?;
        Self::from_name(&name).map_err(serde::de::Error::custom)
    }
}

/// One step's multistep coefficients, `α_0..α_d` and `β_0..β_d` with
/// `α_d = 1`; for the BDF family all `β_j` with `j < d` vanish.
#[derive(Clone, Debug, PartialEq)]
pub struct StepCoefficients {
    pub alpha: Vec<f64>,
    pub beta: Vec<f64>,
    /// Grid index of the step's endpoint, reduced to the base period.
    pub slice: usize,
}

impl StepCoefficients {
    pub fn d(&self) -> usize {
        self.alpha.len() - 1
    }
}

/// Solves the BDF order conditions on normalized offsets `ξ_0..ξ_d`
/// (`ξ_d = 0`, `ξ_{d−1} = −1`). Rows `m ∈ {0, 2, …, d}` determine
/// `α_0..α_{d−1}`, row `m = 1` then yields `β_d`.
fn solve_order_conditions(offsets: &[f64], slice: usize) -> Result<StepCoefficients> {
    let d = offsets.len() - 1;
    debug_assert!(offsets[d] == 0.0 && (offsets[d - 1] + 1.0).abs() < 1e-12);

    let rows: Vec<usize> = std::iter::once(0).chain(2..=d).collect();
    let mat = DMatrix::from_fn(d, d, |r, c| offsets[c].powi(rows[r] as i32));
    let mut rhs = DMatrix::zeros(d, 1);
    rhs[(0, 0)] = -1.0; // α_d ξ_d^0 moved to the right-hand side

    let lu = mat.lu();
    let sol = lu.solve(&rhs).ok_or(Error::DegenerateStencil)?;

    let mut alpha: Vec<f64> = sol.iter().copied().collect();
    alpha.push(1.0);
    let mut beta = vec![0.0; d + 1];
    beta[d] = alpha
        .iter()
        .zip(offsets)
        .map(|(a, xi)| a * xi)
        .sum::<f64>();

    let coeffs = StepCoefficients { alpha, beta, slice };
    if !coeffs.alpha.iter().all(|a| a.is_finite())
        || consistency_residual(&coeffs, offsets, d) > ORDER_CONDITION_TOL
    {
        return Err(Error::DegenerateStencil);
    }
    Ok(coeffs)
}

/// Max over monomials `t^m`, `m ≤ q`, of the truncation functional
/// `|Σ_j α_j t_j^m − Δt Σ_j β_j m t_j^{m−1}|` on nodes normalized so the
/// newest node is 0 and the newest interval is 1. Zero (to roundoff) for
/// `q` up to the consistency order, generically nonzero at `q = s+1`.
pub fn consistency_residual(coeffs: &StepCoefficients, nodes: &[f64], q: usize) -> f64 {
    let d = coeffs.d();
    assert_eq!(nodes.len(), d + 1, "need d+1 stencil nodes");
    let dt = nodes[d] - nodes[d - 1];
    let xi: Vec<f64> = nodes.iter().map(|t| (t - nodes[d]) / dt).collect();

    let mut worst = 0.0f64;
    for m in 0..=q as i32 {
        let mut r = 0.0;
        for j in 0..=d {
            r += coeffs.alpha[j] * xi[j].powi(m);
            if m >= 1 {
                r -= coeffs.beta[j] * m as f64 * xi[j].powi(m - 1);
            }
        }
        worst = worst.max(r.abs());
    }
    worst
}

/// Scalar stability companions, one per supplied coefficient set: ones on the
/// superdiagonal and `(−α_0, …, −α_{d−1})` in the last row. The spectral
/// radius of their period product diagnoses zero-stability on the grid.
pub fn stability_companion(coeffs: &[StepCoefficients]) -> Vec<DMatrix<f64>> {
    coeffs
        .iter()
        .map(|c| {
            let d = c.d();
            let mut f = DMatrix::zeros(d, d);
            for r in 0..d.saturating_sub(1) {
                f[(r, r + 1)] = 1.0;
            }
            for j in 0..d {
                f[(d - 1, j)] = -c.alpha[j];
            }
            f
        })
        .collect()
}
