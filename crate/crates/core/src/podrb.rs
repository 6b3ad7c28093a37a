//! Reduced bases for shifted 2-point snapshots: batch construction via the
//! snapshot correlation matrix or the SVD, and three streaming enrichment
//! updates that absorb buffered snapshots without ever storing the full
//! snapshot history.
//!
//! The enrichment loop screens every incoming snapshot against the current
//! basis with the relative projection error `|s - B B^T s| / |s|`. Snapshots
//! above the tolerance are buffered; a full buffer of `n_a` candidates
//! triggers one of the update procedures:
//!
//! - method A appends modes built from the projection residual and leaves
//!   the existing columns untouched,
//! - method B eigendecomposes a small reconstruction of the enlarged
//!   snapshot correlation matrix and rebuilds the basis,
//! - method C performs an incremental truncated SVD through the compact
//!   core matrix `[[Sigma, B^T dS], [0, Sigma_S W_S^T]]`.
//!
//! The basis is considered converged once `n_c` consecutive snapshots pass
//! the tolerance.

use crate::binio::*;
use crate::error::{Error, Result};
use nalgebra::{DMatrix, DVector};
use std::io::{Read, Write};
use std::path::Path;

/// Relative floor on retained energies (squared singular values); anything
/// a basis would have to retain below `floor * max` trips `IllConditioned`
/// before the inverse square-root scaling can blow up.
const ENERGY_FLOOR: f64 = 1e-12;

/// Maximum admissible `|B^T B - I|_max` before a re-orthogonalization pass.
const ORTHO_TOL: f64 = 1e-8;

/// How the spectrum sidecar is stored.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SpectrumKind {
    /// Eigenvalues of the snapshot correlation matrix (energies).
    Eigenvalues,
    /// Singular values of the snapshot matrix.
    SingularValues,
}

/// Streaming update procedure.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Method {
    A,
    B,
    C,
}

impl Method {
    pub fn parse(s: &str) -> Result<Method> {
        match s.to_ascii_lowercase().as_str() {
            "a" => Ok(Method::A),
            "b" => Ok(Method::B),
            "c" => Ok(Method::C),
            other => Err(Error::InvalidSpec(format!("unknown method {other:?}"))),
        }
    }
}

/// Which procedure produced the current basis.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BasisOrigin {
    BatchCorr,
    BatchSvd,
    MethodA,
    MethodB,
    MethodC,
}

/// Column-orthonormal reduced basis plus its spectral sidecar.
#[derive(Debug, Clone, PartialEq)]
pub struct ReducedBasis {
    modes: DMatrix<f64>,
    spectrum: Vec<f64>,
    kind: SpectrumKind,
    /// Right factor of the latest decomposition (the truncated eigenvector
    /// matrix for the correlation lineage). Only the orthonormality of its
    /// columns matters algebraically, so it is carried as metadata and for
    /// persistence, not consumed by later updates.
    v_sidecar: Option<DMatrix<f64>>,
    /// Running squared Frobenius norm of every absorbed snapshot block.
    frobenius_accum: f64,
    /// Tolerance the basis was built with (header metadata).
    eps: f64,
    origin: BasisOrigin,
}

impl ReducedBasis {
    /// Snapshot dimension `n`.
    pub fn dim(&self) -> usize {
        self.modes.nrows()
    }

    /// Current mode count `N`.
    pub fn mode_count(&self) -> usize {
        self.modes.ncols()
    }

    pub fn modes(&self) -> &DMatrix<f64> {
        &self.modes
    }

    pub fn spectrum(&self) -> &[f64] {
        &self.spectrum
    }

    pub fn spectrum_kind(&self) -> SpectrumKind {
        self.kind
    }

    pub fn v_sidecar(&self) -> Option<&DMatrix<f64>> {
        self.v_sidecar.as_ref()
    }

    pub fn frobenius_accum(&self) -> f64 {
        self.frobenius_accum
    }

    pub fn eps(&self) -> f64 {
        self.eps
    }

    pub fn origin(&self) -> BasisOrigin {
        self.origin
    }

    /// Spectrum as correlation-matrix eigenvalues (energies).
    pub fn eigenvalues(&self) -> Vec<f64> {
        match self.kind {
            SpectrumKind::Eigenvalues => self.spectrum.clone(),
            SpectrumKind::SingularValues => self.spectrum.iter().map(|s| s * s).collect(),
        }
    }

    /// Spectrum as singular values.
    pub fn singular_values(&self) -> Vec<f64> {
        match self.kind {
            SpectrumKind::Eigenvalues => self.spectrum.iter().map(|t| t.sqrt()).collect(),
            SpectrumKind::SingularValues => self.spectrum.clone(),
        }
    }

    /// `|B^T B - I|_max`.
    pub fn orthonormality_drift(&self) -> f64 {
        let gram = self.modes.transpose() * &self.modes;
        let mut drift: f64 = 0.0;
        for i in 0..gram.nrows() {
            for j in 0..gram.ncols() {
                let target = if i == j { 1.0 } else { 0.0 };
                drift = drift.max((gram[(i, j)] - target).abs());
            }
        }
        drift
    }

    /// Reduced coefficients `B^T s`.
    pub fn coefficients(&self, s: &[f64]) -> Result<DVector<f64>> {
        if s.len() != self.dim() {
            return Err(Error::ResolutionMismatch {
                expected: self.dim(),
                got: s.len(),
            });
        }
        let v = DVector::from_column_slice(s);
        Ok(self.modes.transpose() * v)
    }
}

/// Builds a column matrix from equally sized snapshot vectors.
pub fn snapshot_matrix(snapshots: &[Vec<f64>]) -> DMatrix<f64> {
    let n = snapshots.first().map_or(0, Vec::len);
    DMatrix::from_fn(n, snapshots.len(), |i, j| snapshots[j][i])
}

fn sorted_symmetric_eigen(mat: DMatrix<f64>) -> Result<(Vec<f64>, DMatrix<f64>)> {
    let dim = mat.nrows();
    let eig = nalgebra::SymmetricEigen::try_new(mat, f64::EPSILON, 100_000)
        .ok_or_else(|| Error::NonFiniteField("symmetric eigendecomposition".into()))?;
    let mut order: Vec<usize> = (0..dim).collect();
    order.sort_by(|&a, &b| {
        eig.eigenvalues[b]
            .partial_cmp(&eig.eigenvalues[a])
            .unwrap_or(std::cmp::Ordering::Equal)
    });
    let values: Vec<f64> = order
        .iter()
        .map(|&i| eig.eigenvalues[i].max(0.0))
        .collect();
    let vectors = DMatrix::from_fn(dim, dim, |i, j| eig.eigenvectors[(i, order[j])]);
    Ok((values, vectors))
}

fn thin_svd(
    mat: DMatrix<f64>,
    compute_v: bool,
) -> Result<(DMatrix<f64>, Vec<f64>, Option<DMatrix<f64>>)> {
    let svd = mat
        .try_svd(true, compute_v, f64::EPSILON, 100_000)
        .ok_or_else(|| Error::NonFiniteField("singular value decomposition".into()))?;
    let u = svd.u.expect("u requested");
    let sigma: Vec<f64> = svd.singular_values.iter().copied().collect();
    Ok((u, sigma, svd.v_t))
}

/// Smallest retained count for a sorted energy spectrum such that the
/// truncation criterion `sqrt(tail / total) <= eps` holds, never dropping
/// below `min_keep` and never keeping numerically vanished energies. The
/// caller supplies `total` (the squared Frobenius reference of the data the
/// spectrum describes).
fn truncate_energies(energies: &[f64], eps: f64, total: f64, min_keep: usize) -> Result<usize> {
    let e_max = energies.first().copied().unwrap_or(0.0);
    let floor = e_max * ENERGY_FLOOR;
    let n_floor = energies.iter().take_while(|&&e| e > floor).count();
    if min_keep > n_floor {
        return Err(Error::IllConditioned {
            value: energies.get(min_keep - 1).copied().unwrap_or(0.0),
            floor,
        });
    }

    // Walk the spectrum from the tail; `n_eps` is the shortest prefix whose
    // dropped tail stays within the error budget.
    let budget = eps * eps * total;
    let mut tail = 0.0;
    let mut n_eps = energies.len();
    for (idx, &e) in energies.iter().enumerate().rev() {
        if tail + e > budget {
            n_eps = idx + 1;
            break;
        }
        tail += e;
        n_eps = idx;
    }

    Ok(n_eps.max(min_keep).min(n_floor))
}

fn scale_columns_by_inv_sqrt(mat: &mut DMatrix<f64>, energies: &[f64]) {
    for (j, &e) in energies.iter().enumerate() {
        let inv = 1.0 / e.sqrt();
        mat.column_mut(j).scale_mut(inv);
    }
}

/// Two passes of modified Gram-Schmidt over the columns starting at
/// `first_col`; earlier columns are treated as already orthonormal and are
/// not modified.
fn reorthonormalize_from(mat: &mut DMatrix<f64>, first_col: usize) {
    let ncols = mat.ncols();
    for _pass in 0..2 {
        for j in first_col..ncols {
            for k in 0..j {
                let proj = mat.column(k).dot(&mat.column(j));
                let col_k = mat.column(k).clone_owned();
                mat.column_mut(j).axpy(-proj, &col_k, 1.0);
            }
            let norm = mat.column(j).norm();
            if norm > 0.0 {
                mat.column_mut(j).scale_mut(1.0 / norm);
            }
        }
    }
}

fn ensure_orthonormal(basis: &mut ReducedBasis, first_col: usize) {
    if basis.orthonormality_drift() > ORTHO_TOL {
        reorthonormalize_from(&mut basis.modes, first_col);
    }
}

/// Batch POD through the snapshot correlation matrix `C = S^T S`.
pub fn batch_pod_corr(snapshots: &DMatrix<f64>, eps: f64) -> Result<ReducedBasis> {
    let fro2 = snapshots.norm_squared();
    if snapshots.ncols() == 0 || fro2 == 0.0 {
        return Err(Error::DegenerateInput);
    }
    let corr = snapshots.transpose() * snapshots;
    let (theta, vectors) = sorted_symmetric_eigen(corr)?;
    let keep = truncate_energies(&theta, eps, fro2, 1)?;

    let v_trunc = vectors.columns(0, keep).clone_owned();
    let mut modes = snapshots * &v_trunc;
    scale_columns_by_inv_sqrt(&mut modes, &theta[..keep]);

    let mut rb = ReducedBasis {
        modes,
        spectrum: theta[..keep].to_vec(),
        kind: SpectrumKind::Eigenvalues,
        v_sidecar: Some(v_trunc),
        frobenius_accum: fro2,
        eps,
        origin: BasisOrigin::BatchCorr,
    };
    ensure_orthonormal(&mut rb, 0);
    Ok(rb)
}

/// Batch POD through the singular value decomposition of `S`.
pub fn batch_pod_svd(snapshots: &DMatrix<f64>, eps: f64) -> Result<ReducedBasis> {
    let fro2 = snapshots.norm_squared();
    if snapshots.ncols() == 0 || fro2 == 0.0 {
        return Err(Error::DegenerateInput);
    }
    let (u, sigma, v_t) = thin_svd(snapshots.clone(), true)?;
    let energies: Vec<f64> = sigma.iter().map(|s| s * s).collect();
    let keep = truncate_energies(&energies, eps, fro2, 1)?;

    let modes = u.columns(0, keep).clone_owned();
    let v_sidecar = v_t.map(|vt| vt.rows(0, keep).transpose());

    let mut rb = ReducedBasis {
        modes,
        spectrum: sigma[..keep].to_vec(),
        kind: SpectrumKind::SingularValues,
        v_sidecar,
        frobenius_accum: fro2,
        eps,
        origin: BasisOrigin::BatchSvd,
    };
    ensure_orthonormal(&mut rb, 0);
    Ok(rb)
}

/// Relative projection error `|s - B B^T s| / |s|` of one snapshot.
pub fn projection_error(rb: &ReducedBasis, s: &[f64]) -> Result<f64> {
    if s.len() != rb.dim() {
        return Err(Error::ResolutionMismatch {
            expected: rb.dim(),
            got: s.len(),
        });
    }
    let v = DVector::from_column_slice(s);
    let norm = v.norm();
    if norm == 0.0 {
        return Err(Error::ZeroSnapshot);
    }
    let coeffs = rb.modes.transpose() * &v;
    let residual = &v - &rb.modes * coeffs;
    Ok(residual.norm() / norm)
}

/// Method A: orthogonalize the buffer against the basis, eigendecompose its
/// (small) correlation matrix and append the resulting modes. Existing
/// columns are preserved bit for bit; the truncation of the appended block
/// is normalized by the pre-projection norm `|dS|_F`.
pub fn update_method_a(rb: &ReducedBasis, delta: &DMatrix<f64>, eps: f64) -> Result<ReducedBasis> {
    check_block(rb, delta)?;
    let delta_fro2 = delta.norm_squared();
    let mut next = rb.clone();
    next.frobenius_accum += delta_fro2;
    next.origin = BasisOrigin::MethodA;
    next.eps = eps;
    if delta_fro2 == 0.0 {
        return Ok(next);
    }

    let coeffs = rb.modes.transpose() * delta;
    let hat = delta - &rb.modes * coeffs;
    let corr = hat.transpose() * &hat;
    let (theta, vectors) = sorted_symmetric_eigen(corr)?;
    let add = truncate_energies(&theta, eps, delta_fro2, 0)?;
    if add == 0 {
        return Ok(next);
    }

    let mut new_modes = &hat * vectors.columns(0, add);
    scale_columns_by_inv_sqrt(&mut new_modes, &theta[..add]);

    let n = rb.dim();
    let old_n = rb.mode_count();
    let mut modes = DMatrix::zeros(n, old_n + add);
    modes.columns_mut(0, old_n).copy_from(&rb.modes);
    modes.columns_mut(old_n, add).copy_from(&new_modes);
    next.modes = modes;

    // Appended spectrum entries are the block's own values, converted to
    // the lineage of the existing sidecar; the spectrum stays sorted within
    // each block.
    match next.kind {
        SpectrumKind::Eigenvalues => next.spectrum.extend_from_slice(&theta[..add]),
        SpectrumKind::SingularValues => {
            next.spectrum.extend(theta[..add].iter().map(|t| t.sqrt()))
        }
    }

    // Re-orthogonalization may only touch the appended columns.
    ensure_orthonormal(&mut next, old_n);
    Ok(next)
}

/// Method B: approximate reconstruction of the enlarged snapshot
/// correlation matrix. With `M = [B Theta^(1/2) | dS]` the compact core is
/// `C1 = M^T M = [[Theta, Theta^(1/2) B^T dS], [sym, dS^T dS]]`; its sorted
/// eigenpairs rotate and enrich the basis as `B <- M V1 Theta1^(-1/2)`.
/// The basis dimension never shrinks.
pub fn update_method_b(rb: &ReducedBasis, delta: &DMatrix<f64>, eps: f64) -> Result<ReducedBasis> {
    check_block(rb, delta)?;
    let theta_old = rb.eigenvalues();
    let n_old = rb.mode_count();
    let p = delta.ncols();

    let coeffs = rb.modes.transpose() * delta; // N x p
    let gram = delta.transpose() * delta; // p x p

    let dim = n_old + p;
    let mut core = DMatrix::zeros(dim, dim);
    for (i, &t) in theta_old.iter().enumerate() {
        core[(i, i)] = t;
    }
    for i in 0..n_old {
        let scale = theta_old[i].sqrt();
        for j in 0..p {
            let v = scale * coeffs[(i, j)];
            core[(i, n_old + j)] = v;
            core[(n_old + j, i)] = v;
        }
    }
    core.view_mut((n_old, n_old), (p, p)).copy_from(&gram);

    let (theta1, v1) = sorted_symmetric_eigen(core)?;
    let total: f64 = theta1.iter().sum();
    let keep = truncate_energies(&theta1, eps, total, n_old)?;

    // M = [B Theta^(1/2) | dS]
    let mut m = DMatrix::zeros(rb.dim(), dim);
    for i in 0..n_old {
        let scaled = rb.modes.column(i) * theta_old[i].sqrt();
        m.column_mut(i).copy_from(&scaled);
    }
    m.columns_mut(n_old, p).copy_from(delta);

    let v1_trunc = v1.columns(0, keep).clone_owned();
    let mut modes = &m * &v1_trunc;
    scale_columns_by_inv_sqrt(&mut modes, &theta1[..keep]);

    let mut next = ReducedBasis {
        modes,
        spectrum: theta1[..keep].to_vec(),
        kind: SpectrumKind::Eigenvalues,
        v_sidecar: Some(v1_trunc),
        frobenius_accum: rb.frobenius_accum + delta.norm_squared(),
        eps,
        origin: BasisOrigin::MethodB,
    };
    ensure_orthonormal(&mut next, 0);
    Ok(next)
}

/// Method C: incremental truncated SVD. The projection residual of the
/// buffer is factorized, the compact core
/// `Gamma = [[Sigma, B^T dS], [0, Sigma_S W_S^T]]` is decomposed, and the
/// left factor rotates `[B | U_S]` into the enriched basis. The right
/// factor `W` is never stored, and the basis dimension never shrinks.
pub fn update_method_c(rb: &ReducedBasis, delta: &DMatrix<f64>, eps: f64) -> Result<ReducedBasis> {
    check_block(rb, delta)?;
    let sigma_old = rb.singular_values();
    let n_old = rb.mode_count();
    let p = delta.ncols();

    let coeffs = rb.modes.transpose() * delta; // N x p
    let hat = delta - &rb.modes * &coeffs;
    let (u_s, sigma_s, w_s_t) = thin_svd(hat, true)?;
    let w_s_t = w_s_t.expect("v requested");

    // Numerically vanished residual directions carry no content and their
    // left vectors are arbitrary, so they are excluded from the rotation.
    let s_max = sigma_s.first().copied().unwrap_or(0.0);
    let q = sigma_s
        .iter()
        .take_while(|&&s| s > s_max * 1e-12 && s > 0.0)
        .count();

    let mut gamma = DMatrix::zeros(n_old + q, n_old + p);
    for (i, &s) in sigma_old.iter().enumerate() {
        gamma[(i, i)] = s;
    }
    gamma.view_mut((0, n_old), (n_old, p)).copy_from(&coeffs);
    for i in 0..q {
        for j in 0..p {
            gamma[(n_old + i, n_old + j)] = sigma_s[i] * w_s_t[(i, j)];
        }
    }

    let (u_gamma, sigma_gamma, _) = thin_svd(gamma, false)?;
    let energies: Vec<f64> = sigma_gamma.iter().map(|s| s * s).collect();
    let total: f64 = energies.iter().sum();
    let keep = truncate_energies(&energies, eps, total, n_old)?;

    let mut stacked = DMatrix::zeros(rb.dim(), n_old + q);
    stacked.columns_mut(0, n_old).copy_from(&rb.modes);
    stacked.columns_mut(n_old, q).copy_from(&u_s.columns(0, q));
    let modes = &stacked * u_gamma.columns(0, keep);

    let mut next = ReducedBasis {
        modes,
        spectrum: sigma_gamma[..keep].to_vec(),
        kind: SpectrumKind::SingularValues,
        v_sidecar: None,
        frobenius_accum: rb.frobenius_accum + delta.norm_squared(),
        eps,
        origin: BasisOrigin::MethodC,
    };
    ensure_orthonormal(&mut next, 0);
    Ok(next)
}

fn check_block(rb: &ReducedBasis, delta: &DMatrix<f64>) -> Result<()> {
    if delta.nrows() != rb.dim() {
        return Err(Error::ResolutionMismatch {
            expected: rb.dim(),
            got: delta.nrows(),
        });
    }
    if delta.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFiniteField("snapshot buffer".into()));
    }
    Ok(())
}

/// Enrichment loop parameters.
#[derive(Debug, Clone, Copy, serde::Serialize, serde::Deserialize)]
pub struct EnrichParams {
    /// Relative projection tolerance.
    pub eps: f64,
    /// Buffer size that triggers an update.
    pub n_a: usize,
    /// Consecutive passing snapshots that indicate convergence.
    pub n_c: usize,
}

impl Default for EnrichParams {
    fn default() -> Self {
        // Reference operating point for full-scale runs.
        Self {
            eps: 0.025,
            n_a: 75,
            n_c: 100,
        }
    }
}

impl EnrichParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.eps > 0.0) {
            return Err(Error::InvalidSpec(format!("eps {} must be > 0", self.eps)));
        }
        if self.n_a == 0 || self.n_c == 0 {
            return Err(Error::InvalidSpec("n_a and n_c must be positive".into()));
        }
        Ok(())
    }
}

/// Outcome of feeding one snapshot to the enrichment loop.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StepOutcome {
    /// Approximated within tolerance; the acceptance streak grew.
    Accepted,
    /// Above tolerance; parked in the buffer.
    Buffered,
    /// The buffer filled up and an enrichment ran.
    EnrichedNow,
    /// `n_c` consecutive snapshots passed; the basis is converged.
    Converged,
}

/// Mutable state of the streaming enrichment.
#[derive(Debug, Clone)]
pub struct EnrichState {
    method: Method,
    params: EnrichParams,
    buffer: Vec<DVector<f64>>,
    consec_ok: usize,
    n_it: usize,
    n_above: usize,
    n_below: usize,
    converged: bool,
}

impl EnrichState {
    pub fn new(method: Method, params: EnrichParams) -> Result<Self> {
        params.validate()?;
        Ok(Self {
            method,
            params,
            buffer: Vec::with_capacity(params.n_a),
            consec_ok: 0,
            n_it: 0,
            n_above: 0,
            n_below: 0,
            converged: false,
        })
    }

    pub fn method(&self) -> Method {
        self.method
    }

    pub fn params(&self) -> &EnrichParams {
        &self.params
    }

    /// Buffered candidates awaiting the next enrichment.
    pub fn buffered(&self) -> usize {
        self.buffer.len()
    }

    pub fn consecutive_ok(&self) -> usize {
        self.consec_ok
    }

    /// Enrichment steps performed so far.
    pub fn enrichments(&self) -> usize {
        self.n_it
    }

    /// Streamed snapshots with projection error above tolerance.
    pub fn snapshots_above(&self) -> usize {
        self.n_above
    }

    /// Streamed snapshots approximated within tolerance.
    pub fn snapshots_below(&self) -> usize {
        self.n_below
    }

    pub fn is_converged(&self) -> bool {
        self.converged
    }
}

/// Screens one snapshot and, when the buffer fills, runs the configured
/// update. Candidates are judged against the basis as of their arrival;
/// the buffer is not re-screened after intermediate enrichments.
pub fn enrich_step(
    rb: &mut ReducedBasis,
    state: &mut EnrichState,
    snapshot: &[f64],
) -> Result<StepOutcome> {
    if state.converged {
        return Ok(StepOutcome::Converged);
    }
    let error = projection_error(rb, snapshot)?;
    if error <= state.params.eps {
        state.n_below += 1;
        state.consec_ok += 1;
        if state.consec_ok >= state.params.n_c {
            state.converged = true;
            return Ok(StepOutcome::Converged);
        }
        return Ok(StepOutcome::Accepted);
    }

    state.n_above += 1;
    state.consec_ok = 0;
    state.buffer.push(DVector::from_column_slice(snapshot));
    if state.buffer.len() < state.params.n_a {
        return Ok(StepOutcome::Buffered);
    }

    let n = rb.dim();
    let delta = DMatrix::from_fn(n, state.buffer.len(), |i, j| state.buffer[j][i]);
    let updated = match state.method {
        Method::A => update_method_a(rb, &delta, state.params.eps)?,
        Method::B => update_method_b(rb, &delta, state.params.eps)?,
        Method::C => update_method_c(rb, &delta, state.params.eps)?,
    };
    *rb = updated;
    state.buffer.clear();
    state.n_it += 1;
    Ok(StepOutcome::EnrichedNow)
}

/// Relative projection error of the validation block as a function of the
/// retained mode count: `P(N) = sqrt(|S - B_N B_N^T S|_F^2 / |S|_F^2)` for
/// `N = 1..=mode_count`. Non-increasing by construction.
pub fn rb_accuracy_curve(rb: &ReducedBasis, validation: &DMatrix<f64>) -> Vec<f64> {
    let fro2 = validation.norm_squared();
    if fro2 == 0.0 || rb.mode_count() == 0 {
        return vec![0.0; rb.mode_count()];
    }
    let coeffs = rb.modes.transpose() * validation; // N x m
    let mut curve = Vec::with_capacity(rb.mode_count());
    let mut captured = 0.0;
    for j in 0..rb.mode_count() {
        captured += coeffs.row(j).norm_squared();
        let residual = (fro2 - captured).max(0.0);
        curve.push((residual / fro2).sqrt());
    }
    curve
}

/// Report of one streaming training run.
#[derive(Debug, Clone, serde::Serialize)]
pub struct StreamTrainReport {
    pub converged: bool,
    pub final_modes: usize,
    pub snapshots_streamed: usize,
    pub snapshots_above: usize,
    pub snapshots_below: usize,
    pub enrichments: usize,
    pub initial_modes: usize,
}

/// Batch builder used for the initial basis.
#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Initializer {
    CorrelationMatrix,
    Svd,
}

/// Runs the full streaming identification: an initial batch POD over the
/// first `init_count` snapshots, then the enrichment loop until `n_c`
/// consecutive snapshots pass or the stream ends.
pub fn train_streaming<I>(
    mut stream: I,
    init_count: usize,
    initializer: Initializer,
    method: Method,
    params: EnrichParams,
) -> Result<(ReducedBasis, StreamTrainReport)>
where
    I: Iterator<Item = Result<Vec<f64>>>,
{
    params.validate()?;
    if init_count == 0 {
        return Err(Error::InvalidSpec("init_count must be positive".into()));
    }
    let mut initial = Vec::with_capacity(init_count);
    for _ in 0..init_count {
        match stream.next() {
            Some(s) => initial.push(s?),
            None => break,
        }
    }
    if initial.is_empty() {
        return Err(Error::EmptyDataset("snapshot stream is empty".into()));
    }
    let matrix = snapshot_matrix(&initial);
    drop(initial);
    let mut rb = match initializer {
        Initializer::CorrelationMatrix => batch_pod_corr(&matrix, params.eps)?,
        Initializer::Svd => batch_pod_svd(&matrix, params.eps)?,
    };
    drop(matrix);
    let initial_modes = rb.mode_count();

    let mut state = EnrichState::new(method, params)?;
    let mut streamed = 0usize;
    for snapshot in stream {
        let snapshot = snapshot?;
        streamed += 1;
        if enrich_step(&mut rb, &mut state, &snapshot)? == StepOutcome::Converged {
            break;
        }
    }

    let report = StreamTrainReport {
        converged: state.is_converged(),
        final_modes: rb.mode_count(),
        snapshots_streamed: streamed,
        snapshots_above: state.snapshots_above(),
        snapshots_below: state.snapshots_below(),
        enrichments: state.enrichments(),
        initial_modes,
    };
    Ok((rb, report))
}

// ---------------------------------------------------------------------------
// Persistence
// ---------------------------------------------------------------------------

const BASIS_MAGIC: &[u8; 4] = b"MKRB";
const BASIS_VERSION: u32 = 1;

impl ReducedBasis {
    /// Serializes the basis: header (magic, version, config hash, n, N,
    /// method, spectrum kind, eps, Frobenius accumulator), the column-major
    /// mode matrix, the spectrum and the optional right-factor sidecar.
    /// Round-trips bit-exactly.
    pub fn write<W: Write>(&self, w: &mut W, config_hash: &str) -> Result<()> {
        w.write_all(BASIS_MAGIC)?;
        write_u32(w, BASIS_VERSION)?;
        write_str(w, config_hash)?;
        write_u64(w, self.dim() as u64)?;
        write_u64(w, self.mode_count() as u64)?;
        write_u8(
            w,
            match self.origin {
                BasisOrigin::BatchCorr => 0,
                BasisOrigin::BatchSvd => 1,
                BasisOrigin::MethodA => 2,
                BasisOrigin::MethodB => 3,
                BasisOrigin::MethodC => 4,
            },
        )?;
        write_u8(
            w,
            match self.kind {
                SpectrumKind::Eigenvalues => 0,
                SpectrumKind::SingularValues => 1,
            },
        )?;
        write_f64(w, self.eps)?;
        write_f64(w, self.frobenius_accum)?;
        write_f64_slice(w, self.modes.as_slice())?;
        write_f64_slice(w, &self.spectrum)?;
        match &self.v_sidecar {
            None => write_u8(w, 0)?,
            Some(v) => {
                write_u8(w, 1)?;
                write_u64(w, v.nrows() as u64)?;
                write_u64(w, v.ncols() as u64)?;
                write_f64_slice(w, v.as_slice())?;
            }
        }
        Ok(())
    }

    /// Reads a basis written by [`ReducedBasis::write`]; returns the basis
    /// and the recorded config hash.
    pub fn read<R: Read>(r: &mut R) -> Result<(Self, String)> {
        expect_magic(r, BASIS_MAGIC, "reduced basis file")?;
        let version = read_u32(r)?;
        if version != BASIS_VERSION {
            return Err(Error::InvalidFormat(format!(
                "unsupported basis version {version}"
            )));
        }
        let config_hash = read_str(r)?;
        let n = read_u64(r)? as usize;
        let n_modes = read_u64(r)? as usize;
        let origin = match read_u8(r)? {
            0 => BasisOrigin::BatchCorr,
            1 => BasisOrigin::BatchSvd,
            2 => BasisOrigin::MethodA,
            3 => BasisOrigin::MethodB,
            4 => BasisOrigin::MethodC,
            other => return Err(Error::InvalidFormat(format!("unknown origin tag {other}"))),
        };
        let kind = match read_u8(r)? {
            0 => SpectrumKind::Eigenvalues,
            1 => SpectrumKind::SingularValues,
            other => return Err(Error::InvalidFormat(format!("unknown spectrum tag {other}"))),
        };
        let eps = read_f64(r)?;
        let frobenius_accum = read_f64(r)?;
        let modes_data = read_f64_vec(r, n * n_modes)?;
        let modes = DMatrix::from_column_slice(n, n_modes, &modes_data);
        let spectrum = read_f64_vec(r, n_modes)?;
        let v_sidecar = match read_u8(r)? {
            0 => None,
            1 => {
                let rows = read_u64(r)? as usize;
                let cols = read_u64(r)? as usize;
                let data = read_f64_vec(r, rows * cols)?;
                Some(DMatrix::from_column_slice(rows, cols, &data))
            }
            other => return Err(Error::InvalidFormat(format!("unknown sidecar tag {other}"))),
        };
        Ok((
            ReducedBasis {
                modes,
                spectrum,
                kind,
                v_sidecar,
                frobenius_accum,
                eps,
                origin,
            },
            config_hash,
        ))
    }

    pub fn save(&self, path: &Path, config_hash: &str) -> Result<()> {
        let mut file = std::io::BufWriter::new(std::fs::File::create(path)?);
        self.write(&mut file, config_hash)
    }

    pub fn load(path: &Path) -> Result<(Self, String)> {
        let mut file = std::io::BufReader::new(
            std::fs::File::open(path).map_err(|e| Error::Io(format!("{}: {e}", path.display())))?,
        );
        Self::read(&mut file)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng;

    fn rng(seed: u64) -> impl Rng {
        crate::rng::master_rng(seed)
    }

    fn random_matrix(n: usize, cols: usize, seed: u64) -> DMatrix<f64> {
        let mut r = rng(seed);
        DMatrix::from_fn(n, cols, |_, _| r.gen_range(-1.0..1.0))
    }

    fn projector(rb: &ReducedBasis) -> DMatrix<f64> {
        rb.modes() * rb.modes().transpose()
    }

    fn max_abs_diff(a: &DMatrix<f64>, b: &DMatrix<f64>) -> f64 {
        (a - b).amax()
    }

    /// Largest principal angle (radians) between equal-dimension subspaces.
    fn max_principal_angle(b1: &DMatrix<f64>, b2: &DMatrix<f64>) -> f64 {
        let overlap = b1.transpose() * b2;
        let svd = overlap.svd(false, false);
        let min_sigma = svd
            .singular_values
            .iter()
            .fold(f64::INFINITY, |m, &s| m.min(s));
        min_sigma.min(1.0).acos()
    }

    #[test]
    fn batch_corr_orthogonal_columns() {
        // Orthogonal columns of norms 3, 2, 1: modes are the normalized
        // columns (up to sign), spectrum is {9, 4, 1}.
        let mut s = DMatrix::zeros(6, 3);
        s[(0, 0)] = 3.0;
        s[(2, 1)] = 2.0;
        s[(4, 2)] = 1.0;
        let rb = batch_pod_corr(&s, 0.0).unwrap();
        assert_eq!(rb.mode_count(), 3);
        let spec = rb.spectrum();
        assert!((spec[0] - 9.0).abs() < 1e-12);
        assert!((spec[1] - 4.0).abs() < 1e-12);
        assert!((spec[2] - 1.0).abs() < 1e-12);
        for (j, row) in [(0usize, 0usize), (1, 2), (2, 4)] {
            assert!((rb.modes()[(row, j)].abs() - 1.0).abs() < 1e-12);
        }
        assert!(rb.orthonormality_drift() <= ORTHO_TOL);
    }

    #[test]
    fn batch_rank_one_keeps_single_mode() {
        let base = DVector::from_fn(8, |i, _| (i as f64 + 1.0).sin());
        let mut s = DMatrix::zeros(8, 5);
        for j in 0..5 {
            s.set_column(j, &(&base * (j as f64 + 0.5)));
        }
        for eps in [0.0, 0.1, 0.5] {
            let rb = batch_pod_corr(&s, eps).unwrap();
            assert_eq!(rb.mode_count(), 1, "eps {eps}");
            let rb2 = batch_pod_svd(&s, eps).unwrap();
            assert_eq!(rb2.mode_count(), 1);
        }
    }

    #[test]
    fn batch_corr_and_svd_agree_on_random_data() {
        let s = random_matrix(64, 20, 3);
        let a = batch_pod_corr(&s, 0.1).unwrap();
        let b = batch_pod_svd(&s, 0.1).unwrap();
        assert_eq!(a.mode_count(), b.mode_count());
        assert!(max_abs_diff(&projector(&a), &projector(&b)) < 1e-8);
        // Spectra agree after converting to a common form.
        for (x, y) in a.eigenvalues().iter().zip(b.eigenvalues()) {
            assert!((x - y).abs() < 1e-8 * a.eigenvalues()[0]);
        }
    }

    #[test]
    fn batch_rejects_zero_matrix() {
        let s = DMatrix::zeros(10, 4);
        assert!(matches!(
            batch_pod_corr(&s, 0.1),
            Err(Error::DegenerateInput)
        ));
        assert!(matches!(batch_pod_svd(&s, 0.1), Err(Error::DegenerateInput)));
    }

    #[test]
    fn projection_error_cases() {
        let s = random_matrix(16, 3, 5);
        let rb = batch_pod_svd(&s, 0.0).unwrap();
        // In-span snapshot.
        let in_span: Vec<f64> = s.column(0).iter().copied().collect();
        assert!(projection_error(&rb, &in_span).unwrap() < 1e-8);
        // Orthogonal snapshot: build one with Gram-Schmidt.
        let mut q = DVector::from_fn(16, |i, _| ((i * i) as f64).cos());
        let coeffs = rb.modes().transpose() * &q;
        q -= rb.modes() * coeffs;
        q /= q.norm();
        let ortho: Vec<f64> = q.iter().copied().collect();
        assert!((projection_error(&rb, &ortho).unwrap() - 1.0).abs() < 1e-10);
        // Pythagoras: (b1 + q)/sqrt(2) has error 1/sqrt(2).
        let mixed: Vec<f64> = (rb.modes().column(0) + &q)
            .iter()
            .map(|v| v / 2f64.sqrt())
            .collect();
        let err = projection_error(&rb, &mixed).unwrap();
        assert!((err - 1.0 / 2f64.sqrt()).abs() < 1e-10);
        // Zero snapshot is rejected.
        assert!(matches!(
            projection_error(&rb, &vec![0.0; 16]),
            Err(Error::ZeroSnapshot)
        ));
    }

    #[test]
    fn method_a_in_span_block_is_identity() {
        let s = random_matrix(32, 6, 7);
        let rb = batch_pod_svd(&s, 0.0).unwrap();
        let delta = &s * random_matrix(6, 4, 8);
        let next = update_method_a(&rb, &delta, 0.025).unwrap();
        assert_eq!(next.mode_count(), rb.mode_count());
        assert_eq!(next.modes(), rb.modes());
    }

    #[test]
    fn method_a_appends_orthogonal_unit_vector() {
        let s = random_matrix(32, 4, 9);
        let rb = batch_pod_svd(&s, 0.0).unwrap();
        let mut q = DVector::from_fn(32, |i, _| ((3 * i + 1) as f64).sin());
        let c = rb.modes().transpose() * &q;
        q -= rb.modes() * c;
        q /= q.norm();
        let delta = DMatrix::from_column_slice(32, 1, q.as_slice());
        let next = update_method_a(&rb, &delta, 0.0).unwrap();
        assert_eq!(next.mode_count(), rb.mode_count() + 1);
        // Old columns preserved bit for bit; the new one equals q up to sign.
        assert_eq!(
            next.modes().columns(0, rb.mode_count()),
            rb.modes().columns(0, rb.mode_count())
        );
        let last = next.modes().column(next.mode_count() - 1);
        assert!((last.dot(&q).abs() - 1.0).abs() < 1e-10);
    }

    #[test]
    fn method_a_matches_dense_oracle_on_residual() {
        let s = random_matrix(48, 8, 11);
        let rb = batch_pod_svd(&s, 0.0).unwrap();
        let delta = random_matrix(48, 5, 12);
        let next = update_method_a(&rb, &delta, 0.0).unwrap();

        // Dense oracle: eigendecompose the projected residual directly and
        // append its full-rank modes.
        let hat = &delta - rb.modes() * (rb.modes().transpose() * &delta);
        let oracle = batch_pod_corr(&hat, 0.0).unwrap();
        let mut combined = DMatrix::zeros(48, rb.mode_count() + oracle.mode_count());
        combined
            .columns_mut(0, rb.mode_count())
            .copy_from(rb.modes());
        combined
            .columns_mut(rb.mode_count(), oracle.mode_count())
            .copy_from(oracle.modes());

        assert_eq!(next.mode_count(), combined.ncols());
        let p_next = projector(&next);
        let p_comb = &combined * combined.transpose();
        assert!(max_abs_diff(&p_next, &p_comb) < 1e-8);
    }

    #[test]
    fn method_b_replay_doubles_spectrum() {
        let s = random_matrix(40, 6, 13);
        let rb = batch_pod_corr(&s, 0.0).unwrap();
        let next = update_method_b(&rb, &s, 0.0).unwrap();
        let before = projector(&rb);
        let after = projector(&next);
        assert!(max_abs_diff(&before, &after) < 1e-6);
        for (new, old) in next.eigenvalues().iter().zip(rb.eigenvalues()) {
            assert!(
                (new / old - 2.0).abs() < 1e-6,
                "expected doubling, got {new} vs {old}"
            );
        }
    }

    #[test]
    fn method_b_orthonormal_block_adds_unit_eigenvalues() {
        let s = random_matrix(32, 3, 14);
        let rb = batch_pod_corr(&s, 0.0).unwrap();
        let n0 = rb.mode_count();
        // Orthonormal block orthogonal to the basis.
        let mut block = random_matrix(32, 2, 15);
        let coeffs = rb.modes().transpose() * &block;
        block -= rb.modes() * coeffs;
        reorthonormalize_from(&mut block, 0);
        let next = update_method_b(&rb, &block, 0.0).unwrap();
        assert_eq!(next.mode_count(), n0 + 2);
        let eigs = next.eigenvalues();
        let units = eigs.iter().filter(|&&t| (t - 1.0).abs() < 1e-8).count();
        assert!(units >= 2, "expected two unit eigenvalues in {eigs:?}");
    }

    #[test]
    fn method_b_two_blocks_match_batch() {
        let n = 64;
        let s = random_matrix(n, 24, 16);
        let first = s.columns(0, 12).clone_owned();
        let second = s.columns(12, 12).clone_owned();
        let rb0 = batch_pod_corr(&first, 0.0).unwrap();
        let rb1 = update_method_b(&rb0, &second, 0.0).unwrap();
        let batch = batch_pod_corr(&s, 0.0).unwrap();
        assert_eq!(rb1.mode_count(), batch.mode_count());
        assert!(max_principal_angle(rb1.modes(), batch.modes()) < 1e-3);
        assert!(rb1.orthonormality_drift() <= ORTHO_TOL);
    }

    #[test]
    fn method_c_in_span_block_keeps_projector() {
        let s = random_matrix(32, 6, 17);
        let rb = batch_pod_svd(&s, 0.0).unwrap();
        let delta = &s * random_matrix(6, 4, 18);
        let next = update_method_c(&rb, &delta, 0.025).unwrap();
        assert_eq!(next.mode_count(), rb.mode_count());
        assert!(max_abs_diff(&projector(&rb), &projector(&next)) < 1e-8);
    }

    #[test]
    fn method_c_orthogonal_unit_snapshot() {
        let s = random_matrix(32, 4, 19);
        let rb = batch_pod_svd(&s, 0.0).unwrap();
        let mut q = DVector::from_fn(32, |i, _| ((2 * i) as f64).cos() + 0.2);
        let c = rb.modes().transpose() * &q;
        q -= rb.modes() * c;
        q /= q.norm();
        let delta = DMatrix::from_column_slice(32, 1, q.as_slice());
        let next = update_method_c(&rb, &delta, 0.0).unwrap();
        assert_eq!(next.mode_count(), rb.mode_count() + 1);
        let sigmas = next.singular_values();
        assert!(
            sigmas.iter().any(|&sv| (sv - 1.0).abs() < 1e-10),
            "expected a unit singular value in {sigmas:?}"
        );
    }

    #[test]
    fn method_c_two_blocks_match_batch_svd() {
        let n = 64;
        let s = random_matrix(n, 24, 20);
        let first = s.columns(0, 12).clone_owned();
        let second = s.columns(12, 12).clone_owned();
        let rb0 = batch_pod_svd(&first, 0.0).unwrap();
        let rb1 = update_method_c(&rb0, &second, 0.0).unwrap();
        let batch = batch_pod_svd(&s, 0.0).unwrap();
        assert_eq!(rb1.mode_count(), batch.mode_count());
        assert!(max_principal_angle(rb1.modes(), batch.modes()) < 1e-3);
        // Singular values match the batch computation.
        for (a, b) in rb1.singular_values().iter().zip(batch.singular_values()) {
            assert!((a - b).abs() < 1e-6 * batch.singular_values()[0]);
        }
    }

    #[test]
    fn enrich_step_accepts_spanned_and_enriches_orthogonal() {
        let s = random_matrix(24, 4, 21);
        let mut rb = batch_pod_svd(&s, 0.0).unwrap();
        let params = EnrichParams {
            eps: 0.025,
            n_a: 1,
            n_c: 3,
        };
        let mut state = EnrichState::new(Method::C, params).unwrap();
        let in_span: Vec<f64> = s.column(1).iter().copied().collect();
        assert_eq!(
            enrich_step(&mut rb, &mut state, &in_span).unwrap(),
            StepOutcome::Accepted
        );

        let mut q = DVector::from_fn(24, |i, _| (i as f64 * 0.7).sin() + 0.1);
        let c = rb.modes().transpose() * &q;
        q -= rb.modes() * c;
        q /= q.norm();
        let before = rb.mode_count();
        assert_eq!(
            enrich_step(&mut rb, &mut state, q.as_slice()).unwrap(),
            StepOutcome::EnrichedNow
        );
        assert!(rb.mode_count() >= before + 1);
        assert_eq!(state.consecutive_ok(), 0, "buffering resets the streak");
    }

    #[test]
    fn enrich_stream_from_low_dim_subspace_converges() {
        // Snapshots drawn from a fixed 5-dimensional subspace of R^64.
        let basis = random_matrix(64, 5, 22);
        let mut r = rng(23);
        let mut draw = || -> Vec<f64> {
            let w = DVector::from_fn(5, |_, _| r.gen_range(-1.0f64..1.0));
            (&basis * w).iter().copied().collect()
        };
        let init: Vec<Vec<f64>> = (0..6).map(|_| draw()).collect();
        let mut rb = batch_pod_svd(&snapshot_matrix(&init), 0.025).unwrap();
        let initial_modes = rb.mode_count();
        assert!(initial_modes <= 5);

        let params = EnrichParams {
            eps: 0.025,
            n_a: 4,
            n_c: 100,
        };
        let mut state = EnrichState::new(Method::B, params).unwrap();
        let mut outcome = StepOutcome::Accepted;
        for _ in 0..500 {
            outcome = enrich_step(&mut rb, &mut state, &draw()).unwrap();
            if outcome == StepOutcome::Converged {
                break;
            }
        }
        assert_eq!(outcome, StepOutcome::Converged);
        assert!(rb.mode_count() <= 5 + initial_modes);
        assert!(state.is_converged());
    }

    #[test]
    fn accuracy_curve_properties() {
        let s = random_matrix(48, 10, 24);
        let rb = batch_pod_svd(&s, 0.0).unwrap();
        // Training-identical data with full rank: final value is zero.
        let curve = rb_accuracy_curve(&rb, &s);
        assert_eq!(curve.len(), rb.mode_count());
        assert!(curve[curve.len() - 1] < 1e-7);
        for w in curve.windows(2) {
            assert!(w[1] <= w[0] + 1e-12, "curve must be non-increasing");
        }
        // Orthogonal validation data projects to nothing.
        let mut ortho = random_matrix(48, 3, 25);
        let coeffs = rb.modes().transpose() * &ortho;
        ortho -= rb.modes() * coeffs;
        let curve = rb_accuracy_curve(&rb, &ortho);
        for v in curve {
            assert!((v - 1.0).abs() < 1e-10);
        }
    }

    #[test]
    fn orthonormality_after_repeated_enrichment() {
        let init = random_matrix(40, 6, 26);
        for method in [Method::A, Method::B, Method::C] {
            let mut rb = batch_pod_svd(&init, 0.05).unwrap();
            let params = EnrichParams {
                eps: 0.05,
                n_a: 3,
                n_c: 1_000,
            };
            let mut state = EnrichState::new(method, params).unwrap();
            let mut r = rng(27);
            for _ in 0..60 {
                let s: Vec<f64> = (0..40).map(|_| r.gen_range(-1.0..1.0)).collect();
                enrich_step(&mut rb, &mut state, &s).unwrap();
                assert!(
                    rb.orthonormality_drift() <= ORTHO_TOL,
                    "method {method:?} drift {}",
                    rb.orthonormality_drift()
                );
                // Spectrum stays sorted within the lineage (globally for
                // B/C; method A sorts per appended block).
                if method != Method::A {
                    for w in rb.spectrum().windows(2) {
                        assert!(w[1] <= w[0] + 1e-12);
                    }
                }
            }
            assert!(state.enrichments() > 0);
        }
    }

    #[test]
    fn method_a_never_worsens_accepted_snapshots() {
        // Projection errors of previously screened snapshots cannot grow
        // when modes are only appended.
        let init = random_matrix(32, 5, 28);
        let mut rb = batch_pod_svd(&init, 0.1).unwrap();
        let params = EnrichParams {
            eps: 0.2,
            n_a: 2,
            n_c: 1_000,
        };
        let mut state = EnrichState::new(Method::A, params).unwrap();
        let mut r = rng(29);
        let mut seen: Vec<(Vec<f64>, f64)> = Vec::new();
        for _ in 0..40 {
            let s: Vec<f64> = (0..32).map(|_| r.gen_range(-1.0..1.0)).collect();
            let err_before = projection_error(&rb, &s).unwrap();
            let outcome = enrich_step(&mut rb, &mut state, &s).unwrap();
            if outcome == StepOutcome::EnrichedNow {
                for (old, recorded) in &seen {
                    let now = projection_error(&rb, old).unwrap();
                    assert!(now <= recorded + 1e-10);
                }
            }
            seen.push((s, err_before));
        }
    }

    #[test]
    fn persistence_roundtrip_is_bit_exact() {
        let s = random_matrix(30, 8, 30);
        let rb0 = batch_pod_corr(&s, 0.025).unwrap();
        let delta = random_matrix(30, 3, 31);
        let rb = update_method_b(&rb0, &delta, 0.025).unwrap();

        let mut buf = Vec::new();
        rb.write(&mut buf, "deadbeefcafef00d").unwrap();
        let (back, hash) = ReducedBasis::read(&mut buf.as_slice()).unwrap();
        assert_eq!(hash, "deadbeefcafef00d");
        assert_eq!(back, rb);

        let mut buf2 = Vec::new();
        back.write(&mut buf2, "deadbeefcafef00d").unwrap();
        assert_eq!(buf, buf2, "serialized bytes must be stable");
    }

    #[test]
    fn train_streaming_low_rank_converges() {
        let basis = random_matrix(48, 4, 32);
        let mut r = rng(33);
        let stream = (0..400).map(move |_| {
            let w = DVector::from_fn(4, |_, _| r.gen_range(-1.0f64..1.0));
            Ok((&basis * w).iter().copied().collect::<Vec<f64>>())
        });
        let params = EnrichParams {
            eps: 0.025,
            n_a: 4,
            n_c: 50,
        };
        let (rb, report) =
            train_streaming(stream, 8, Initializer::Svd, Method::C, params).unwrap();
        assert!(report.converged);
        assert!(rb.mode_count() <= 4 + report.initial_modes);
        assert_eq!(
            report.snapshots_above + report.snapshots_below,
            report.snapshots_streamed
        );
    }
}
