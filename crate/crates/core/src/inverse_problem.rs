//! Bayesian inverse problems, their augmented least-squares form and the
//! regularized misfit `Φ_R`.

use std::fmt;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Arc;

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::linalg::{cholesky_with_jitter, log_det_from_cholesky, solve_lower_in_place};

/// Symmetric positive-definite matrix with a cached Cholesky factor and a
/// fast path for diagonal input.
#[derive(Debug, Clone, PartialEq)]
pub struct SpdMatrix {
    matrix: DMatrix<f64>,
    chol: DMatrix<f64>,
    diag: Option<Vec<f64>>,
}

impl SpdMatrix {
    pub fn new(matrix: DMatrix<f64>) -> Result<Self> {
        if !matrix.is_square() || matrix.nrows() == 0 {
            return Err(Error::InvalidArgument(format!(
                "covariance must be square and non-empty, got {}x{}",
                matrix.nrows(),
                matrix.ncols()
            )));
        }
        let n = matrix.nrows();
        let is_diag = (0..n).all(|i| (0..n).all(|j| i == j || matrix[(i, j)] == 0.0));
        if is_diag {
            let d: Vec<f64> = matrix.diagonal().iter().copied().collect();
            return Self::diagonal(d);
        }
        let chol = cholesky_with_jitter(&matrix).ok_or(Error::NotPositiveDefinite { what: "SPD matrix" })?;
        Ok(Self {
            matrix,
            chol,
            diag: None,
        })
    }

    pub fn diagonal(d: Vec<f64>) -> Result<Self> {
        if d.is_empty() || d.iter().any(|v| !(*v > 0.0) || !v.is_finite()) {
            return Err(Error::NotPositiveDefinite { what: "diagonal matrix" });
        }
        let matrix = DMatrix::from_diagonal(&DVector::from_vec(d.clone()));
        let chol = DMatrix::from_diagonal(&DVector::from_iterator(d.len(), d.iter().map(|v| v.sqrt())));
        Ok(Self {
            matrix,
            chol,
            diag: Some(d),
        })
    }

    pub fn scaled_identity(n: usize, scale: f64) -> Result<Self> {
        Self::diagonal(vec![scale; n])
    }

    /// `diag(a, b)` with exactly zero off-diagonal blocks.
    pub fn block_diag(a: &SpdMatrix, b: &SpdMatrix) -> Self {
        let (na, nb) = (a.dim(), b.dim());
        let n = na + nb;
        if let (Some(da), Some(db)) = (&a.diag, &b.diag) {
            let d: Vec<f64> = da.iter().chain(db).copied().collect();
            return Self::diagonal(d).expect("blocks are SPD");
        }
        let mut matrix = DMatrix::zeros(n, n);
        let mut chol = DMatrix::zeros(n, n);
        matrix.view_mut((0, 0), (na, na)).copy_from(&a.matrix);
        matrix.view_mut((na, na), (nb, nb)).copy_from(&b.matrix);
        chol.view_mut((0, 0), (na, na)).copy_from(&a.chol);
        chol.view_mut((na, na), (nb, nb)).copy_from(&b.chol);
        Self {
            matrix,
            chol,
            diag: None,
        }
    }

    pub fn dim(&self) -> usize {
        self.matrix.nrows()
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.matrix
    }

    pub fn cholesky(&self) -> &DMatrix<f64> {
        &self.chol
    }

    pub fn is_diagonal(&self) -> bool {
        self.diag.is_some()
    }

    pub fn log_det(&self) -> f64 {
        log_det_from_cholesky(&self.chol)
    }

    /// `½ rᵀ M⁻¹ r`, overwriting `r` with the whitened residual.
    pub fn half_quadratic_in_place(&self, r: &mut [f64]) -> f64 {
        match &self.diag {
            Some(d) => 0.5 * r.iter().zip(d).map(|(v, s)| v * v / s).sum::<f64>(),
            None => {
                solve_lower_in_place(&self.chol, r);
                0.5 * r.iter().map(|v| v * v).sum::<f64>()
            }
        }
    }

    pub fn half_quadratic(&self, r: &DVector<f64>) -> f64 {
        let mut tmp: Vec<f64> = r.iter().copied().collect();
        self.half_quadratic_in_place(&mut tmp)
    }
}

/// Deterministic map `θ ↦ 𝒢(θ)`.
///
/// Implementations must return bitwise-identical output for identical input.
/// Models that keep internal scratch state report `parallel_safe() == false`
/// and are then evaluated from one thread at a time.
pub trait ForwardModel: Send + Sync {
    fn input_dim(&self) -> usize;
    fn output_dim(&self) -> usize;
    fn evaluate(&self, theta: &DVector<f64>) -> Result<DVector<f64>>;

    fn parallel_safe(&self) -> bool {
        true
    }
}

/// Forward model backed by a closure.
pub struct FnForward<F> {
    input_dim: usize,
    output_dim: usize,
    f: F,
}

impl<F> FnForward<F>
where
    F: Fn(&DVector<f64>) -> DVector<f64> + Send + Sync,
{
    pub fn new(input_dim: usize, output_dim: usize, f: F) -> Self {
        Self {
            input_dim,
            output_dim,
            f,
        }
    }
}

impl<F> ForwardModel for FnForward<F>
where
    F: Fn(&DVector<f64>) -> DVector<f64> + Send + Sync,
{
    fn input_dim(&self) -> usize {
        self.input_dim
    }

    fn output_dim(&self) -> usize {
        self.output_dim
    }

    fn evaluate(&self, theta: &DVector<f64>) -> Result<DVector<f64>> {
        check_len("forward input", self.input_dim, theta.len())?;
        let out = (self.f)(theta);
        check_len("forward output", self.output_dim, out.len())?;
        Ok(out)
    }
}

/// Wraps a model and counts successful and failed evaluations.
pub struct CountingForward {
    inner: Arc<dyn ForwardModel>,
    count: AtomicUsize,
}

impl CountingForward {
    pub fn new(inner: Arc<dyn ForwardModel>) -> Self {
        Self {
            inner,
            count: AtomicUsize::new(0),
        }
    }

    pub fn count(&self) -> usize {
        self.count.load(Ordering::Relaxed)
    }

    pub fn reset(&self) {
        self.count.store(0, Ordering::Relaxed);
    }
}

impl ForwardModel for CountingForward {
    fn input_dim(&self) -> usize {
        self.inner.input_dim()
    }

    fn output_dim(&self) -> usize {
        self.inner.output_dim()
    }

    fn evaluate(&self, theta: &DVector<f64>) -> Result<DVector<f64>> {
        self.count.fetch_add(1, Ordering::Relaxed);
        self.inner.evaluate(theta)
    }

    fn parallel_safe(&self) -> bool {
        self.inner.parallel_safe()
    }
}

fn check_len(what: &'static str, expected: usize, got: usize) -> Result<()> {
    if expected == got {
        Ok(())
    } else {
        Err(Error::DimensionMismatch { what, expected, got })
    }
}

/// `y = 𝒢(θ) + η`, `η ~ 𝒩(0, Σ_η)`, with prior `𝒩(r₀, Σ₀)`.
#[derive(Clone)]
pub struct InverseProblem {
    forward: Arc<dyn ForwardModel>,
    y: DVector<f64>,
    sigma_eta: SpdMatrix,
    r0: DVector<f64>,
    sigma_0: SpdMatrix,
}

impl fmt::Debug for InverseProblem {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("InverseProblem")
            .field("n_theta", &self.r0.len())
            .field("n_y", &self.y.len())
            .field("y", &self.y)
            .field("r0", &self.r0)
            .finish_non_exhaustive()
    }
}

impl InverseProblem {
    pub fn new(
        forward: Arc<dyn ForwardModel>,
        y: DVector<f64>,
        sigma_eta: SpdMatrix,
        r0: DVector<f64>,
        sigma_0: SpdMatrix,
    ) -> Result<Self> {
        check_len("data vector", forward.output_dim(), y.len())?;
        check_len("noise covariance", y.len(), sigma_eta.dim())?;
        check_len("prior mean", forward.input_dim(), r0.len())?;
        check_len("prior covariance", r0.len(), sigma_0.dim())?;
        Ok(Self {
            forward,
            y,
            sigma_eta,
            r0,
            sigma_0,
        })
    }

    pub fn n_theta(&self) -> usize {
        self.r0.len()
    }

    pub fn n_y(&self) -> usize {
        self.y.len()
    }

    pub fn forward(&self) -> &Arc<dyn ForwardModel> {
        &self.forward
    }

    pub fn y(&self) -> &DVector<f64> {
        &self.y
    }

    pub fn sigma_eta(&self) -> &SpdMatrix {
        &self.sigma_eta
    }

    pub fn r0(&self) -> &DVector<f64> {
        &self.r0
    }

    pub fn sigma_0(&self) -> &SpdMatrix {
        &self.sigma_0
    }

    /// `½‖Σ_η^{-1/2}(y − 𝒢(θ))‖² + ½‖Σ₀^{-1/2}(θ − r₀)‖²`.
    pub fn phi_r(&self, theta: &DVector<f64>) -> Result<f64> {
        check_len("parameter vector", self.n_theta(), theta.len())?;
        let g = self.forward.evaluate(theta)?;
        Ok(self.sigma_eta.half_quadratic(&(&self.y - g)) + self.sigma_0.half_quadratic(&(theta - &self.r0)))
    }

    pub fn augment(&self) -> AugmentedProblem {
        let mut x = DVector::zeros(self.n_y() + self.n_theta());
        x.rows_mut(0, self.n_y()).copy_from(&self.y);
        x.rows_mut(self.n_y(), self.n_theta()).copy_from(&self.r0);
        AugmentedProblem {
            x,
            f: Arc::new(AugmentedForward {
                inner: self.forward.clone(),
            }),
            sigma_nu: SpdMatrix::block_diag(&self.sigma_eta, &self.sigma_0),
            n_theta: self.n_theta(),
        }
    }
}

/// `θ ↦ [𝒢(θ); θ]`.
pub struct AugmentedForward {
    inner: Arc<dyn ForwardModel>,
}

impl ForwardModel for AugmentedForward {
    fn input_dim(&self) -> usize {
        self.inner.input_dim()
    }

    fn output_dim(&self) -> usize {
        self.inner.output_dim() + self.inner.input_dim()
    }

    fn evaluate(&self, theta: &DVector<f64>) -> Result<DVector<f64>> {
        let g = self.inner.evaluate(theta)?;
        let mut out = DVector::zeros(g.len() + theta.len());
        out.rows_mut(0, g.len()).copy_from(&g);
        out.rows_mut(g.len(), theta.len()).copy_from(theta);
        Ok(out)
    }

    fn parallel_safe(&self) -> bool {
        self.inner.parallel_safe()
    }
}

/// Least-squares form `x = ℱ(θ) + ν`, `ν ~ 𝒩(0, Σ_ν)`, so that
/// `Φ_R(θ) = ½‖Σ_ν^{-1/2}(x − ℱ(θ))‖²`.
///
/// Usually obtained from [`InverseProblem::augment`]; [`AugmentedProblem::direct`]
/// builds one from any residual map, which is how targets given directly by a
/// misfit function are expressed.
#[derive(Clone)]
pub struct AugmentedProblem {
    x: DVector<f64>,
    f: Arc<dyn ForwardModel>,
    sigma_nu: SpdMatrix,
    n_theta: usize,
}

impl fmt::Debug for AugmentedProblem {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("AugmentedProblem")
            .field("n_theta", &self.n_theta)
            .field("x", &self.x)
            .finish_non_exhaustive()
    }
}

impl AugmentedProblem {
    pub fn direct(f: Arc<dyn ForwardModel>, x: DVector<f64>, sigma_nu: SpdMatrix) -> Result<Self> {
        check_len("augmented data", f.output_dim(), x.len())?;
        check_len("augmented covariance", x.len(), sigma_nu.dim())?;
        Ok(Self {
            n_theta: f.input_dim(),
            x,
            f,
            sigma_nu,
        })
    }

    pub fn n_theta(&self) -> usize {
        self.n_theta
    }

    pub fn x(&self) -> &DVector<f64> {
        &self.x
    }

    pub fn sigma_nu(&self) -> &SpdMatrix {
        &self.sigma_nu
    }

    pub fn forward(&self) -> &Arc<dyn ForwardModel> {
        &self.f
    }

    /// `ℱ(θ)`.
    pub fn evaluate(&self, theta: &DVector<f64>) -> Result<DVector<f64>> {
        check_len("parameter vector", self.n_theta, theta.len())?;
        let out = self.f.evaluate(theta)?;
        if out.iter().any(|v| !v.is_finite()) {
            return Err(Error::Forward("forward model returned a non-finite value".into()));
        }
        Ok(out)
    }

    /// `Φ_R` from an already evaluated `ℱ(θ)`.
    pub fn phi_r_from_output(&self, f_value: &DVector<f64>) -> f64 {
        let mut r: Vec<f64> = self.x.iter().zip(f_value.iter()).map(|(a, b)| a - b).collect();
        self.sigma_nu.half_quadratic_in_place(&mut r)
    }

    pub fn phi_r(&self, theta: &DVector<f64>) -> Result<f64> {
        Ok(self.phi_r_from_output(&self.evaluate(theta)?))
    }
}
