//! Parasitic-root diagnostics for the multistep discretization.
//!
//! A d-step scheme applied to the scalar test system `η' = 0` produces, over
//! one grid period, a product of d×d stability companions whose eigenvalues
//! are `ν_τ^p`: the principal root `ν₁ = 1` plus `d−1` parasitic roots with
//! `|ν_τ| < 1` for a stable scheme. The same parasitic structure repeats
//! blockwise in the full companion spectrum, where it contributes `(d−1)·n`
//! eigenvalues decaying like `ν^p`. This module predicts those magnitudes
//! and tags a computed spectrum against the prediction.

use crate::grid::PeriodicGrid;
use crate::multistep::{stability_companion, MultistepScheme, StepCoefficients};
use crate::pschur;
use crate::scaled::ExponentScaled;
use crate::Result;
use num_complex::Complex64;

/// Parasitic roots of a scheme on a concrete grid.
///
/// `roots[0]` is the principal root, pinned to exactly 1; the rest are the
/// parasitic roots by descending magnitude, each recovered as the principal
/// p-th root of its period product (the magnitude is exact, the phase is
/// only determined modulo the p-th roots of unity).
#[derive(Clone, Debug)]
pub struct SpuriousPrediction {
    pub roots: Vec<Complex64>,
    /// `p·log10|ν_τ|` per parasitic root: the predicted decade of the
    /// corresponding spurious eigenvalues of the full problem.
    pub predicted_log10_magnitudes: Vec<f64>,
}

impl SpuriousPrediction {
    pub fn d(&self) -> usize {
        self.roots.len()
    }
}

/// Advisory classification of a computed eigenvalue.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum SpectrumTag {
    Physical,
    SpuriousSuspect,
}

/// Eigenvalues of the period product of the scalar stability companions,
/// reported as p-th roots with the principal root pinned to 1.
pub fn scalar_roots(scheme: MultistepScheme, grid: &PeriodicGrid) -> Result<SpuriousPrediction> {
    let coeffs = scheme.period_coefficients(grid)?;
    prediction_from_coefficients(&coeffs, grid.p() as u32)
}

/// Same prediction from already-assembled per-step coefficients, for callers
/// that hold a companion operator rather than a scheme and grid.
pub(crate) fn prediction_from_coefficients(
    coeffs: &[StepCoefficients],
    p: u32,
) -> Result<SpuriousPrediction> {
    let comps = stability_companion(coeffs);
    let cseq: Vec<_> = comps
        .iter()
        .map(|c| c.map(|x| Complex64::new(x, 0.0)))
        .collect();
    let eigs = pschur::product_eigvals(&cseq)?;

    // the consistency condition makes the constant sequence an exact
    // solution, so one product eigenvalue sits at 1
    let principal = (0..eigs.len())
        .min_by(|&a, &b| {
            eigs[a]
                .relative_diff(&ExponentScaled::ONE)
                .total_cmp(&eigs[b].relative_diff(&ExponentScaled::ONE))
        })
        .expect("scheme has at least one root");

    let mut roots = vec![Complex64::new(1.0, 0.0)];
    let mut predicted = Vec::new();
    for (j, e) in eigs.iter().enumerate() {
        if j == principal {
            continue;
        }
        roots.push(e.root(p));
        predicted.push(e.log10_magnitude());
    }
    Ok(SpuriousPrediction {
        roots,
        predicted_log10_magnitudes: predicted,
    })
}

/// Tags each eigenvalue whose magnitude lies within three decades of a
/// predicted spurious magnitude as a spurious suspect. Advisory only; with
/// `d = 1` there are no parasitic roots and everything is physical.
pub fn tag_spectrum(
    eigs: &[ExponentScaled],
    prediction: &SpuriousPrediction,
    n: usize,
) -> Vec<SpectrumTag> {
    assert!(
        eigs.len() <= n * prediction.d(),
        "more eigenvalues than the companion dimension admits"
    );
    eigs.iter()
        .map(|e| {
            let lg = e.log10_magnitude();
            let near = prediction
                .predicted_log10_magnitudes
                .iter()
                .any(|&pl| (lg - pl).abs() <= 3.0);
            if near {
                SpectrumTag::SpuriousSuspect
            } else {
                SpectrumTag::Physical
            }
        })
        .collect()
}
