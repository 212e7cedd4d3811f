//! File formats: Matrix Market matrices, JSON system manifests and run
//! configs, and the CSV tables the command line tool emits.
//!
//! Everything here is deterministic: identical inputs produce byte-identical
//! outputs, numbers are written with shortest round-trip formatting, and no
//! file carries a timestamp.

use crate::bench::ConvergenceStudy;
use crate::dae::{DaeBlocks, SampledDaeSystem};
use crate::floquet::FloquetSolution;
use crate::grid::PeriodicGrid;
use crate::lptv::SampledLptvSystem;
use crate::multistep::MultistepScheme;
use crate::sparse::CsrMatrix;
use crate::spurious::{SpectrumTag, SpuriousPrediction};
use crate::{Error, Result};
use serde::{Deserialize, Serialize};
use std::collections::HashMap;
use std::path::{Path, PathBuf};

const MM_HEADER: &str = "%%MatrixMarket matrix coordinate real general";

/// Reads a coordinate-format real general Matrix Market file.
pub fn read_matrix_market(path: &Path) -> Result<CsrMatrix> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| Error::io(format!("reading {}", path.display()), e))?;
    let file = path.display().to_string();
    let fail = |line: usize, message: String| Error::Parse {
        file: file.clone(),
        line,
        message,
    };

    let mut lines = text.lines().enumerate().map(|(i, l)| (i + 1, l.trim()));
    let (line, header) = lines
        .next()
        .ok_or_else(|| fail(1, "empty file".into()))?;
    if !header.to_ascii_lowercase().starts_with("%%matrixmarket") {
        return Err(fail(line, "missing %%MatrixMarket header".into()));
    }
    if header.to_ascii_lowercase() != MM_HEADER.to_ascii_lowercase() {
        return Err(fail(
            line,
            format!("unsupported format '{header}' (only '{MM_HEADER}')"),
        ));
    }

    let mut content = lines.filter(|(_, l)| !l.is_empty() && !l.starts_with('%'));
    let (line, dims) = content
        .next()
        .ok_or_else(|| fail(1, "missing dimension line".into()))?;
    let parts: Vec<&str> = dims.split_whitespace().collect();
    if parts.len() != 3 {
        return Err(fail(line, format!("expected 'rows cols nnz', got '{dims}'")));
    }
    let parse_dim = |s: &str, line: usize| {
        s.parse::<usize>()
            .map_err(|_| fail(line, format!("bad integer '{s}'")))
    };
    let nrows = parse_dim(parts[0], line)?;
    let ncols = parse_dim(parts[1], line)?;
    let nnz = parse_dim(parts[2], line)?;

    let mut triplets = Vec::with_capacity(nnz);
    for _ in 0..nnz {
        let (line, entry) = content
            .next()
            .ok_or_else(|| fail(0, format!("expected {nnz} entries, file ended early")))?;
        let parts: Vec<&str> = entry.split_whitespace().collect();
        if parts.len() != 3 {
            return Err(fail(line, format!("expected 'row col value', got '{entry}'")));
        }
        let r = parse_dim(parts[0], line)?;
        let c = parse_dim(parts[1], line)?;
        let v = parts[2]
            .parse::<f64>()
            .map_err(|_| fail(line, format!("bad number '{}'", parts[2])))?;
        if r == 0 || c == 0 || r > nrows || c > ncols {
            return Err(fail(
                line,
                format!("entry ({r}, {c}) outside 1..={nrows} x 1..={ncols}"),
            ));
        }
        triplets.push((r - 1, c - 1, v));
    }
    if let Some((line, extra)) = content.next() {
        return Err(fail(line, format!("unexpected content after entries: '{extra}'")));
    }
    CsrMatrix::from_triplets(nrows, ncols, &triplets)
}

/// Writes a matrix in coordinate real general format, entries in row-major
/// order with shortest round-trip number formatting.
pub fn write_matrix_market(path: &Path, m: &CsrMatrix) -> Result<()> {
    let mut out = String::with_capacity(32 + 24 * m.nnz());
    out.push_str(MM_HEADER);
    out.push('\n');
    out.push_str(&format!("{} {} {}\n", m.nrows(), m.ncols(), m.nnz()));
    for (r, c, v) in m.triplets() {
        out.push_str(&format!("{} {} {:e}\n", r + 1, c + 1, v));
    }
    std::fs::write(path, out).map_err(|e| Error::io(format!("writing {}", path.display()), e))
}

/// Step pattern `weights` repeated `repeats` times, scaled to the period.
#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PatternSpec {
    pub weights: Vec<f64>,
    pub repeats: usize,
}

/// Descriptor-pair extension of a system manifest: full C matrices alongside
/// the G files, plus the index set of the differential variables (its order
/// fixes the ordering of the reduced system's variables).
#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DaeManifest {
    pub c_slices: Vec<String>,
    pub differential: Vec<usize>,
}

/// A sampled system on disk: the grid (explicit times or a step pattern) and
/// one Matrix Market file per slice, paths relative to the manifest file.
#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SystemManifest {
    pub period: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub times: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub pattern: Option<PatternSpec>,
    pub slices: Vec<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub dae: Option<DaeManifest>,
}

impl SystemManifest {
    pub fn grid(&self) -> Result<PeriodicGrid> {
        match (&self.times, &self.pattern) {
            (Some(_), Some(_)) => Err(Error::Config(
                "manifest gives both explicit times and a pattern".into(),
            )),
            (None, None) => Err(Error::Config(
                "manifest needs either explicit times or a pattern".into(),
            )),
            (Some(times), None) => {
                let grid = PeriodicGrid::from_times(times)?;
                if (grid.period() - self.period).abs() > 1e-12 * self.period.abs() {
                    return Err(Error::Config(format!(
                        "manifest period {} disagrees with the final grid time {}",
                        self.period,
                        grid.period()
                    )));
                }
                Ok(grid)
            }
            (None, Some(pat)) => PeriodicGrid::pattern(self.period, &pat.weights, pat.repeats),
        }
    }
}

/// Reads and schema-validates a JSON file into `T`.
fn read_json<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<T> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| Error::io(format!("reading {}", path.display()), e))?;
    serde_json::from_str(&text).map_err(|e| Error::Parse {
        file: path.display().to_string(),
        line: e.line(),
        message: e.to_string(),
    })
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value)
        .map_err(|e| Error::Config(format!("serializing {}: {e}", path.display())))?;
    text.push('\n');
    std::fs::write(path, text).map_err(|e| Error::io(format!("writing {}", path.display()), e))
}

pub fn read_manifest(path: &Path) -> Result<SystemManifest> {
    read_json(path)
}

pub fn write_manifest(path: &Path, manifest: &SystemManifest) -> Result<()> {
    write_json(path, manifest)
}

/// Loads the sampled ODE system a manifest describes.
pub fn load_system(manifest_path: &Path) -> Result<SampledLptvSystem> {
    let man = read_manifest(manifest_path)?;
    if man.dae.is_some() {
        return Err(Error::Config(
            "manifest describes a descriptor pair; use the DAE loader".into(),
        ));
    }
    let grid = man.grid()?;
    let base = manifest_path.parent().unwrap_or_else(|| Path::new("."));
    let slices = man
        .slices
        .iter()
        .map(|rel| read_matrix_market(&base.join(rel)))
        .collect::<Result<Vec<_>>>()?;
    SampledLptvSystem::from_sparse(grid, slices)
}

/// Loads the sampled descriptor pair a DAE manifest describes, splitting the
/// full C and G matrices into blocks along the differential index set.
pub fn load_dae_system(manifest_path: &Path) -> Result<SampledDaeSystem> {
    let man = read_manifest(manifest_path)?;
    let dae = man
        .dae
        .as_ref()
        .ok_or_else(|| Error::Config("manifest has no dae section".into()))?;
    if dae.c_slices.len() != man.slices.len() {
        return Err(Error::Config(format!(
            "{} C files for {} G files",
            dae.c_slices.len(),
            man.slices.len()
        )));
    }
    let grid = man.grid()?;
    let base = manifest_path.parent().unwrap_or_else(|| Path::new("."));

    let mut blocks = Vec::with_capacity(man.slices.len());
    for (g_rel, c_rel) in man.slices.iter().zip(&dae.c_slices) {
        let g = read_matrix_market(&base.join(g_rel))?;
        let c = read_matrix_market(&base.join(c_rel))?;
        let n = g.nrows();
        if g.ncols() != n || c.nrows() != n || c.ncols() != n {
            return Err(Error::Config(format!(
                "{g_rel} and {c_rel} must be square matrices of equal size"
            )));
        }
        let differential = &dae.differential;
        let mut seen = vec![false; n];
        for &i in differential {
            if i >= n || seen[i] {
                return Err(Error::Config(format!(
                    "differential index set has out-of-range or repeated index {i}"
                )));
            }
            seen[i] = true;
        }
        if differential.is_empty() || differential.len() == n {
            return Err(Error::Config(
                "differential index set must be a proper nonempty subset".into(),
            ));
        }
        let algebraic: Vec<usize> = (0..n).filter(|i| !seen[*i]).collect();
        if c
            .triplets()
            .any(|(r, cc, v)| v != 0.0 && (!seen[r] || !seen[cc]))
        {
            return Err(Error::Config(format!(
                "{c_rel}: C must be exactly zero outside the differential block"
            )));
        }
        blocks.push(DaeBlocks {
            c11: submatrix(&c, differential, differential),
            g11: submatrix(&g, differential, differential),
            g12: submatrix(&g, differential, &algebraic),
            g21: submatrix(&g, &algebraic, differential),
            g22: submatrix(&g, &algebraic, &algebraic),
        });
    }
    SampledDaeSystem::new(grid, blocks)
}

fn submatrix(m: &CsrMatrix, rows: &[usize], cols: &[usize]) -> CsrMatrix {
    let rmap: HashMap<usize, usize> = rows.iter().enumerate().map(|(k, &i)| (i, k)).collect();
    let cmap: HashMap<usize, usize> = cols.iter().enumerate().map(|(k, &i)| (i, k)).collect();
    let triplets: Vec<(usize, usize, f64)> = m
        .triplets()
        .filter_map(|(r, c, v)| Some((*rmap.get(&r)?, *cmap.get(&c)?, v)))
        .collect();
    CsrMatrix::from_triplets(rows.len(), cols.len(), &triplets).unwrap()
}

/// Writes one Matrix Market file per slice plus a manifest, and returns the
/// manifest path. Used by the fixture generator and tests.
pub fn write_system(
    dir: &Path,
    manifest_name: &str,
    grid: &PeriodicGrid,
    slices: &[CsrMatrix],
) -> Result<PathBuf> {
    std::fs::create_dir_all(dir)
        .map_err(|e| Error::io(format!("creating {}", dir.display()), e))?;
    let mut files = Vec::with_capacity(slices.len());
    for (i, m) in slices.iter().enumerate() {
        let name = format!("g_{i:04}.mtx");
        write_matrix_market(&dir.join(&name), m)?;
        files.push(name);
    }
    let manifest = SystemManifest {
        period: grid.period(),
        times: Some(grid.times().to_vec()),
        pattern: None,
        slices: files,
        dae: None,
    };
    let path = dir.join(manifest_name);
    write_manifest(&path, &manifest)?;
    Ok(path)
}

/// Writes per-slice (C, G) pairs plus a DAE manifest with the given
/// differential index set, and returns the manifest path.
pub fn write_dae_system(
    dir: &Path,
    manifest_name: &str,
    grid: &PeriodicGrid,
    pairs: &[(CsrMatrix, CsrMatrix)],
    differential: &[usize],
) -> Result<PathBuf> {
    std::fs::create_dir_all(dir)
        .map_err(|e| Error::io(format!("creating {}", dir.display()), e))?;
    let mut g_files = Vec::with_capacity(pairs.len());
    let mut c_files = Vec::with_capacity(pairs.len());
    for (i, (c, g)) in pairs.iter().enumerate() {
        let g_name = format!("g_{i:04}.mtx");
        let c_name = format!("c_{i:04}.mtx");
        write_matrix_market(&dir.join(&g_name), g)?;
        write_matrix_market(&dir.join(&c_name), c)?;
        g_files.push(g_name);
        c_files.push(c_name);
    }
    let manifest = SystemManifest {
        period: grid.period(),
        times: Some(grid.times().to_vec()),
        pattern: None,
        slices: g_files,
        dae: Some(DaeManifest {
            c_slices: c_files,
            differential: differential.to_vec(),
        }),
    };
    let path = dir.join(manifest_name);
    write_manifest(&path, &manifest)?;
    Ok(path)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CommandKind {
    Solve,
    Convergence,
    Spurious,
    Dae,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SolverKind {
    #[default]
    Dense,
    Ptoar,
}

/// One command-line run, schema-validated before any computation starts.
#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub command: CommandKind,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub manifest: Option<PathBuf>,
    #[serde(default = "defaults::scheme")]
    pub scheme: MultistepScheme,
    #[serde(default = "defaults::k_want")]
    pub k_want: usize,
    #[serde(default = "defaults::tol")]
    pub tol: f64,
    #[serde(default = "defaults::max_cycles")]
    pub max_cycles: usize,
    #[serde(default)]
    pub solver: SolverKind,
    #[serde(default = "defaults::out_dir")]
    pub out_dir: PathBuf,
    #[serde(default)]
    pub seed: u64,
}

mod defaults {
    use super::MultistepScheme;
    use std::path::PathBuf;

    pub(super) fn scheme() -> MultistepScheme {
        MultistepScheme::Gear2
    }
    pub(super) fn k_want() -> usize {
        4
    }
    pub(super) fn tol() -> f64 {
        1e-10
    }
    pub(super) fn max_cycles() -> usize {
        200
    }
    pub(super) fn out_dir() -> PathBuf {
        PathBuf::from(".")
    }
}

impl RunConfig {
    /// A config for `command` with every other field at its documented
    /// default.
    pub fn new(command: CommandKind) -> Self {
        Self {
            command,
            manifest: None,
            scheme: defaults::scheme(),
            k_want: defaults::k_want(),
            tol: defaults::tol(),
            max_cycles: defaults::max_cycles(),
            solver: SolverKind::default(),
            out_dir: defaults::out_dir(),
            seed: 0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.k_want == 0 {
            return Err(Error::Config("k_want must be at least 1".into()));
        }
        if !(self.tol > 0.0) || !self.tol.is_finite() {
            return Err(Error::Config(format!(
                "tol must be positive and finite, got {}",
                self.tol
            )));
        }
        if self.max_cycles == 0 {
            return Err(Error::Config("max_cycles must be at least 1".into()));
        }
        Ok(())
    }
}

/// Reads and validates a run config.
pub fn read_config(path: &Path) -> Result<RunConfig> {
    let config: RunConfig = read_json(path)?;
    config.validate()?;
    Ok(config)
}

pub fn write_config(path: &Path, config: &RunConfig) -> Result<()> {
    write_json(path, config)
}

fn clamp_magnitude(x: f64) -> f64 {
    if x.is_finite() {
        x
    } else if x > 0.0 {
        f64::MAX
    } else {
        0.0
    }
}

fn tag_name(tag: SpectrumTag) -> &'static str {
    match tag {
        SpectrumTag::Physical => "physical",
        SpectrumTag::SpuriousSuspect => "spurious-suspect",
    }
}

/// Eigenvalue table: one row per computed multiplier, mantissa and base-2
/// exponent kept separate so magnitudes beyond the f64 range survive in
/// text, plus a clamped convenience magnitude.
pub fn eigenvalue_table(sol: &FloquetSolution) -> String {
    let mut out = String::from("index,re_mantissa,im_mantissa,exponent2,magnitude,tag,residual\n");
    for (i, m) in sol.multipliers.iter().enumerate() {
        out.push_str(&format!(
            "{},{:e},{:e},{},{:e},{},{:e}\n",
            i,
            m.mantissa().re,
            m.mantissa().im,
            m.exponent(),
            clamp_magnitude(m.magnitude()),
            tag_name(sol.tags[i]),
            sol.residuals[i],
        ));
    }
    out
}

/// One eigenvector's slice-0 state components.
pub fn eigenvector_table(sol: &FloquetSolution, which: usize) -> String {
    let v = sol.eigenvector_at_slice(which, 0);
    let mut out = String::from("component,re,im\n");
    for (i, z) in v.iter().enumerate() {
        out.push_str(&format!("{},{:e},{:e}\n", i, z.re, z.im));
    }
    out
}

/// The separation report, one row when present.
pub fn gap_table(sol: &FloquetSolution) -> String {
    let mut out = String::from("log10_kept,log10_next,gap,ill_separated\n");
    if let Some(g) = &sol.gap {
        out.push_str(&format!(
            "{:e},{:e},{:e},{}\n",
            g.log10_kept, g.log10_next, g.gap, g.ill_separated
        ));
    }
    out
}

/// Convergence table, one row per successful study cell.
pub fn convergence_table(study: &ConvergenceStudy) -> String {
    let mut out = String::from("scheme,p,dt_max,e_val,e_vec,angle\n");
    for cell in study.cells.iter().filter(|c| c.failure.is_none()) {
        out.push_str(&format!(
            "{},{},{:e},{:e},{:e},{:e}\n",
            cell.scheme.name(),
            cell.p,
            cell.dt_max,
            cell.e_val,
            cell.e_vec,
            cell.angle,
        ));
    }
    out
}

/// Fitted convergence orders per scheme.
pub fn slope_table(study: &ConvergenceStudy) -> String {
    let mut out = String::from("scheme,value_slope,vector_slope\n");
    for s in &study.slopes {
        out.push_str(&format!(
            "{},{:e},{:e}\n",
            s.scheme.name(),
            s.value_slope,
            s.vector_slope
        ));
    }
    out
}

/// Measured parasitic eigenvalue decades per study cell.
pub fn spurious_decay_table(study: &ConvergenceStudy) -> String {
    let mut out = String::from("scheme,p,index,log10_magnitude\n");
    for cell in study.cells.iter().filter(|c| c.failure.is_none()) {
        for (i, m) in cell.spurious_log10.iter().enumerate() {
            out.push_str(&format!(
                "{},{},{},{:e}\n",
                cell.scheme.name(),
                cell.p,
                i,
                m
            ));
        }
    }
    out
}

/// Scalar stability roots and the predicted decade of each family of
/// spurious eigenvalues; the principal root's row predicts decade 0.
pub fn spurious_prediction_table(prediction: &SpuriousPrediction) -> String {
    let mut out = String::from("index,root_re,root_im,predicted_log10\n");
    for (i, root) in prediction.roots.iter().enumerate() {
        let predicted = if i == 0 {
            0.0
        } else {
            prediction.predicted_log10_magnitudes[i - 1]
        };
        out.push_str(&format!("{},{:e},{:e},{:e}\n", i, root.re, root.im, predicted));
    }
    out
}

/// Writes a table with an io error carrying the path.
pub fn write_table(path: &Path, body: &str) -> Result<()> {
    std::fs::write(path, body).map_err(|e| Error::io(format!("writing {}", path.display()), e))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::floquet::GapReport;
    use crate::scaled::ExponentScaled;
    use nalgebra::{DMatrix, DVector};
    use num_complex::Complex64;
    use rand::Rng as _;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn tmp_dir(tag: &str) -> PathBuf {
        let dir = std::env::temp_dir().join(format!("floqar-io-{tag}-{}", std::process::id()));
        std::fs::create_dir_all(&dir).unwrap();
        dir
    }

    fn random_matrix(rng: &mut ChaCha8Rng, n: usize) -> CsrMatrix {
        let mut triplets = Vec::new();
        for r in 0..n {
            for c in 0..n {
                if rng.gen_bool(0.5) {
                    triplets.push((r, c, rng.gen_range(-10.0..10.0)));
                }
            }
            triplets.push((r, r, 1.0 + rng.gen_range(0.0..1.0)));
        }
        CsrMatrix::from_triplets(n, n, &triplets).unwrap()
    }

    #[test]
    fn matrix_market_roundtrip_is_exact() {
        let dir = tmp_dir("mm");
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let m = random_matrix(&mut rng, 9);
        let path = dir.join("m.mtx");
        write_matrix_market(&path, &m).unwrap();
        let back = read_matrix_market(&path).unwrap();
        // shortest round-trip formatting makes this bit-exact
        assert_eq!(m.to_dense(), back.to_dense());

        // and writing twice is byte-identical
        let first = std::fs::read(&path).unwrap();
        write_matrix_market(&path, &m).unwrap();
        assert_eq!(first, std::fs::read(&path).unwrap());
    }

    #[test]
    fn matrix_market_reader_handles_comments_and_rejects_garbage() {
        let dir = tmp_dir("mm-parse");
        let good = "%%MatrixMarket matrix coordinate real general\n\
                    % a comment\n\
                    \n\
                    2 3 2\n\
                    1 3 2.5e-1\n\
                    2 1 -4\n";
        let path = dir.join("good.mtx");
        std::fs::write(&path, good).unwrap();
        let m = read_matrix_market(&path).unwrap();
        assert_eq!(m.nrows(), 2);
        assert_eq!(m.ncols(), 3);
        assert_eq!(m.to_dense()[(0, 2)], 0.25);
        assert_eq!(m.to_dense()[(1, 0)], -4.0);

        let cases = [
            ("not a header\n1 1 0\n", "missing %%MatrixMarket"),
            (
                "%%MatrixMarket matrix coordinate complex general\n1 1 0\n",
                "unsupported format",
            ),
            ("%%MatrixMarket matrix coordinate real general\n", "missing dimension"),
            (
                "%%MatrixMarket matrix coordinate real general\n2 2 1\n3 1 5\n",
                "outside",
            ),
            (
                "%%MatrixMarket matrix coordinate real general\n2 2 2\n1 1 5\n",
                "ended early",
            ),
            (
                "%%MatrixMarket matrix coordinate real general\n2 2 1\n1 1 x\n",
                "bad number",
            ),
            (
                "%%MatrixMarket matrix coordinate real general\n2 2 1\n1 1 5\n2 2 1\n",
                "unexpected content",
            ),
        ];
        for (text, needle) in cases {
            let path = dir.join("bad.mtx");
            std::fs::write(&path, text).unwrap();
            match read_matrix_market(&path) {
                Err(Error::Parse { message, .. }) => {
                    assert!(message.contains(needle), "'{message}' missing '{needle}'")
                }
                other => panic!("expected parse error for {text:?}, got {other:?}"),
            }
        }

        assert!(matches!(
            read_matrix_market(&dir.join("does-not-exist.mtx")),
            Err(Error::Io { .. })
        ));
    }

    #[test]
    fn system_roundtrip_through_manifest() {
        let dir = tmp_dir("system");
        let mut rng = ChaCha8Rng::seed_from_u64(13);
        let grid = PeriodicGrid::pattern(2.0, &[1.0, 2.0], 2).unwrap();
        let slices: Vec<CsrMatrix> = (0..4).map(|_| random_matrix(&mut rng, 5)).collect();
        let manifest = write_system(&dir, "system.json", &grid, &slices).unwrap();
        let sys = load_system(&manifest).unwrap();
        assert_eq!(sys.grid(), &grid);
        for (i, want) in slices.iter().enumerate() {
            match sys.sample(i as i64) {
                crate::lptv::SystemSlice::Sparse(got) => {
                    assert_eq!(got.to_dense(), want.to_dense())
                }
                _ => panic!("expected sparse slice {i}"),
            }
        }
    }

    #[test]
    fn manifests_reject_unknown_and_inconsistent_fields() {
        let dir = tmp_dir("manifest");
        let path = dir.join("man.json");
        std::fs::write(
            &path,
            r#"{"period": 1.0, "times": [0.0, 1.0], "slices": ["g.mtx"], "extra": 3}"#,
        )
        .unwrap();
        assert!(matches!(read_manifest(&path), Err(Error::Parse { .. })));

        let both = SystemManifest {
            period: 1.0,
            times: Some(vec![0.0, 1.0]),
            pattern: Some(PatternSpec {
                weights: vec![1.0],
                repeats: 1,
            }),
            slices: vec!["g.mtx".into()],
            dae: None,
        };
        assert!(matches!(both.grid(), Err(Error::Config(_))));

        let neither = SystemManifest {
            period: 1.0,
            times: None,
            pattern: None,
            slices: vec!["g.mtx".into()],
            dae: None,
        };
        assert!(matches!(neither.grid(), Err(Error::Config(_))));

        let drifted = SystemManifest {
            period: 2.0,
            times: Some(vec![0.0, 0.5, 1.0]),
            pattern: None,
            slices: vec!["a".into(), "b".into()],
            dae: None,
        };
        assert!(matches!(drifted.grid(), Err(Error::Config(_))));
    }

    #[test]
    fn dae_roundtrip_with_permuted_differential_set() {
        let dir = tmp_dir("dae");
        let grid = PeriodicGrid::uniform(2, 1.0).unwrap();
        // full 3x3 pair with differential variables {2, 0} in that order
        let g_full = DMatrix::from_row_slice(
            3,
            3,
            &[
                1.0, 2.0, 3.0, //
                4.0, 5.0, 6.0, //
                7.0, 8.0, 9.5,
            ],
        );
        let mut c_full = DMatrix::zeros(3, 3);
        c_full[(2, 2)] = 2.0;
        c_full[(2, 0)] = 0.5;
        c_full[(0, 0)] = 1.0;
        let pairs: Vec<(CsrMatrix, CsrMatrix)> = (0..2)
            .map(|_| (CsrMatrix::from_dense(&c_full), CsrMatrix::from_dense(&g_full)))
            .collect();
        let manifest = write_dae_system(&dir, "dae.json", &grid, &pairs, &[2, 0]).unwrap();
        let sys = load_dae_system(&manifest).unwrap();
        assert_eq!(sys.n1(), 2);
        assert_eq!(sys.n2(), 1);
        let b = sys.blocks(0);
        // blocks follow the order of the differential set: y1 = (x2, x0)
        let g11 = b.g11.to_dense();
        assert_eq!(g11[(0, 0)], 9.5);
        assert_eq!(g11[(0, 1)], 7.0);
        assert_eq!(g11[(1, 0)], 3.0);
        assert_eq!(g11[(1, 1)], 1.0);
        assert_eq!(b.g22.to_dense()[(0, 0)], 5.0);
        assert_eq!(b.g12.to_dense()[(0, 0)], 8.0);
        assert_eq!(b.g21.to_dense()[(0, 1)], 4.0);
        let c11 = b.c11.to_dense();
        assert_eq!(c11[(0, 0)], 2.0);
        assert_eq!(c11[(0, 1)], 0.5);
        assert_eq!(c11[(1, 1)], 1.0);

        // a C entry outside the differential block is rejected
        let mut c_bad = c_full.clone();
        c_bad[(1, 1)] = 1e-30;
        let pairs_bad = vec![
            (CsrMatrix::from_dense(&c_bad), CsrMatrix::from_dense(&g_full)),
            (CsrMatrix::from_dense(&c_bad), CsrMatrix::from_dense(&g_full)),
        ];
        let manifest_bad = write_dae_system(&dir, "dae-bad.json", &grid, &pairs_bad, &[2, 0]).unwrap();
        assert!(matches!(
            load_dae_system(&manifest_bad),
            Err(Error::Config(_))
        ));
    }

    #[test]
    fn run_config_schema_is_strict_and_defaulted() {
        let dir = tmp_dir("config");
        let path = dir.join("run.json");

        std::fs::write(&path, r#"{"command": "solve"}"#).unwrap();
        let config = read_config(&path).unwrap();
        assert_eq!(config.command, CommandKind::Solve);
        assert_eq!(config.scheme, MultistepScheme::Gear2);
        assert_eq!(config.k_want, 4);
        assert_eq!(config.solver, SolverKind::Dense);
        assert_eq!(config.seed, 0);

        std::fs::write(
            &path,
            r#"{"command": "convergence", "scheme": "gear3", "solver": "ptoar", "k_want": 2, "tol": 1e-9, "max_cycles": 50, "out_dir": "out", "seed": 42}"#,
        )
        .unwrap();
        let config = read_config(&path).unwrap();
        assert_eq!(config.command, CommandKind::Convergence);
        assert_eq!(config.scheme, MultistepScheme::Gear3);
        assert_eq!(config.solver, SolverKind::Ptoar);
        assert_eq!(config.seed, 42);

        std::fs::write(&path, r#"{"command": "solve", "frobnicate": 1}"#).unwrap();
        assert!(matches!(read_config(&path), Err(Error::Parse { .. })));

        std::fs::write(&path, r#"{"command": "solve", "scheme": "rk4"}"#).unwrap();
        assert!(matches!(read_config(&path), Err(Error::Parse { .. })));

        std::fs::write(&path, r#"{"command": "solve", "k_want": 0}"#).unwrap();
        assert!(matches!(read_config(&path), Err(Error::Config(_))));

        let round = RunConfig {
            command: CommandKind::Dae,
            manifest: Some(PathBuf::from("sys.json")),
            scheme: MultistepScheme::Gear4,
            k_want: 6,
            tol: 1e-8,
            max_cycles: 10,
            solver: SolverKind::Ptoar,
            out_dir: PathBuf::from("results"),
            seed: 7,
        };
        write_config(&path, &round).unwrap();
        let back = read_config(&path).unwrap();
        assert_eq!(back.scheme, MultistepScheme::Gear4);
        assert_eq!(back.manifest, round.manifest);
    }

    #[test]
    fn eigenvalue_table_format_is_pinned() {
        let sol = FloquetSolution {
            multipliers: vec![
                ExponentScaled::from_f64(1.5),
                ExponentScaled::new(Complex64::new(1.0, -0.5), -100),
            ],
            tags: vec![SpectrumTag::Physical, SpectrumTag::SpuriousSuspect],
            eigenvectors: vec![
                vec![DVector::from_vec(vec![Complex64::new(1.0, 0.0)])],
                vec![DVector::from_vec(vec![Complex64::new(0.0, 1.0)])],
            ],
            companion_vectors: vec![
                DVector::from_vec(vec![Complex64::new(1.0, 0.0)]),
                DVector::from_vec(vec![Complex64::new(0.0, 1.0)]),
            ],
            residuals: vec![1e-12, 0.5],
            gap: Some(GapReport {
                log10_kept: 0.0,
                log10_next: -3.0,
                gap: 1e-3,
                ill_separated: false,
            }),
        };
        let table = eigenvalue_table(&sol);
        let lines: Vec<&str> = table.lines().collect();
        assert_eq!(
            lines[0],
            "index,re_mantissa,im_mantissa,exponent2,magnitude,tag,residual"
        );
        assert_eq!(lines[1], "0,1.5e0,0e0,0,1.5e0,physical,1e-12");
        // magnitude of the scaled value collapses into ordinary f64 range
        assert!(lines[2].starts_with("1,1e0,-5e-1,-100,"));
        assert!(lines[2].ends_with(",spurious-suspect,5e-1"));
        assert_eq!(table, eigenvalue_table(&sol));

        let gap = gap_table(&sol);
        assert_eq!(gap, "log10_kept,log10_next,gap,ill_separated\n0e0,-3e0,1e-3,false\n");

        let vec0 = eigenvector_table(&sol, 0);
        assert_eq!(vec0, "component,re,im\n0,1e0,0e0\n");
    }

    #[test]
    fn magnitude_clamps_at_the_f64_boundary() {
        let huge = ExponentScaled::new(Complex64::new(1.0, 0.0), 9000);
        assert_eq!(clamp_magnitude(huge.magnitude()), f64::MAX);
        let tiny = ExponentScaled::new(Complex64::new(1.0, 0.0), -9000);
        assert_eq!(clamp_magnitude(tiny.magnitude()), 0.0);
    }

    #[test]
    fn spurious_prediction_table_carries_the_predicted_decade() {
        let grid = PeriodicGrid::uniform(64, 1.0).unwrap();
        let prediction =
            crate::spurious::scalar_roots(MultistepScheme::Gear2, &grid).unwrap();
        let table = spurious_prediction_table(&prediction);
        let lines: Vec<&str> = table.lines().collect();
        assert_eq!(lines.len(), 3);
        assert_eq!(lines[1].split(',').next().unwrap(), "0");
        let last: Vec<&str> = lines[2].split(',').collect();
        let predicted: f64 = last[3].parse().unwrap();
        let want = 64.0 * (1.0f64 / 3.0).log10();
        assert!((predicted - want).abs() < 1e-9, "{predicted} vs {want}");
    }
}
