//! Diagonal Lyapunov certificates: checking `AᵀΛ + ΛA ≺ 0`, searching for
//! a diagonal `Λ`, and sampling certified random networks.

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::net::NetworkSpec;
use crate::tol;

/// Diagonal weights `λ` with the contraction rate `μ` and margin
/// `λ_max(AᵀΛ + ΛA)` they achieve.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DiagonalCertificate {
    pub lambda: Vec<f64>,
    pub mu: f64,
    pub margin: f64,
}

impl DiagonalCertificate {
    /// Re-check against `a` and wrap the result, failing if it does not certify.
    pub fn from_lambda(a: &DMatrix<f64>, lambda: &[f64]) -> Result<Self> {
        let check = check_certificate(a, lambda)?;
        if !check.valid {
            return Err(Error::Numerical(format!(
                "λ = {lambda:?} does not certify A (margin {:.3e})",
                check.margin
            )));
        }
        Ok(Self {
            lambda: lambda.to_vec(),
            mu: check.mu,
            margin: check.margin,
        })
    }

    pub fn identity(a: &DMatrix<f64>) -> Result<Self> {
        Self::from_lambda(a, &vec![1.0; a.nrows()])
    }

    pub fn lambda_vec(&self) -> DVector<f64> {
        DVector::from_column_slice(&self.lambda)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CertificateCheck {
    /// Largest eigenvalue of `S = AᵀΛ + ΛA`.
    pub margin: f64,
    /// `-½ λ_max(Λ^{-1/2} S Λ^{-1/2})`; positive exactly when `valid`.
    pub mu: f64,
    pub valid: bool,
}

fn check_square(a: &DMatrix<f64>) -> Result<()> {
    if a.nrows() != a.ncols() || a.nrows() == 0 {
        return Err(Error::Domain(format!(
            "A must be square and non-empty, got {}x{}",
            a.nrows(),
            a.ncols()
        )));
    }
    if a.iter().any(|v| !v.is_finite()) {
        return Err(Error::Domain("A has non-finite entries".into()));
    }
    Ok(())
}

fn max_eigenpair(m: DMatrix<f64>, what: &str) -> Result<(f64, DVector<f64>)> {
    let eig = SymmetricEigen::try_new(m.clone(), f64::EPSILON, 10_000).ok_or_else(|| {
        Error::Numerical(format!(
            "{what}: symmetric eigensolver did not converge on {m}"
        ))
    })?;
    let (k, &val) = eig
        .eigenvalues
        .iter()
        .enumerate()
        .max_by(|a, b| a.1.total_cmp(b.1))
        .expect("non-empty spectrum");
    if !val.is_finite() {
        return Err(Error::Numerical(format!(
            "{what}: non-finite eigenvalue for {m}"
        )));
    }
    Ok((val, eig.eigenvectors.column(k).into_owned()))
}

/// `S = AᵀΛ + ΛA` for diagonal `Λ`.
pub fn lyapunov_form(a: &DMatrix<f64>, lambda: &[f64]) -> DMatrix<f64> {
    let n = a.nrows();
    DMatrix::from_fn(n, n, |i, j| a[(j, i)] * lambda[j] + lambda[i] * a[(i, j)])
}

/// Test whether `λ` certifies `A`, with the default `ε_cert`.
pub fn check_certificate(a: &DMatrix<f64>, lambda: &[f64]) -> Result<CertificateCheck> {
    check_certificate_eps(a, lambda, tol::CERT_EPS)
}

pub fn check_certificate_eps(
    a: &DMatrix<f64>,
    lambda: &[f64],
    eps: f64,
) -> Result<CertificateCheck> {
    check_square(a)?;
    if lambda.len() != a.nrows() {
        return Err(Error::Domain(format!(
            "λ has {} entries, A is {}x{}",
            lambda.len(),
            a.nrows(),
            a.ncols()
        )));
    }
    if let Some(i) = lambda.iter().position(|&l| !(l > 0.0 && l.is_finite())) {
        return Err(Error::Domain(format!(
            "λ[{i}] = {} is not positive",
            lambda[i]
        )));
    }
    let s = lyapunov_form(a, lambda);
    let (margin, _) = max_eigenpair(s.clone(), "margin")?;
    let n = a.nrows();
    let scaled = DMatrix::from_fn(n, n, |i, j| s[(i, j)] / (lambda[i] * lambda[j]).sqrt());
    let (top, _) = max_eigenpair(scaled, "rate")?;
    Ok(CertificateCheck {
        margin,
        mu: -0.5 * top,
        valid: margin < -eps,
    })
}

/// Necessary conditions that rule out diagonal stability outright.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Obstruction {
    /// `A_ii ≥ 0` makes `(AᵀΛ+ΛA)_ii = 2λ_i A_ii ≥ 0`.
    NonNegativeDiagonal { index: usize, value: f64 },
    /// A diagonally stable matrix is Hurwitz.
    NotHurwitz { max_real_part: f64 },
}

pub fn structural_obstruction(a: &DMatrix<f64>) -> Option<Obstruction> {
    if let Some(i) = (0..a.nrows()).find(|&i| a[(i, i)] >= 0.0) {
        return Some(Obstruction::NonNegativeDiagonal {
            index: i,
            value: a[(i, i)],
        });
    }
    let max_re = a
        .clone()
        .complex_eigenvalues()
        .iter()
        .map(|z| z.re)
        .fold(f64::NEG_INFINITY, f64::max);
    if max_re >= 0.0 {
        return Some(Obstruction::NotHurwitz {
            max_real_part: max_re,
        });
    }
    None
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct CertSearchConfig {
    pub max_dim: usize,
    pub restarts: usize,
    pub iterations: usize,
    pub eps_cert: f64,
    /// Initial gradient step on `log λ`.
    pub step: f64,
    /// A restart is abandoned after this many iterations without improving
    /// its best value by more than `1e-10`.
    pub stall_iterations: usize,
    pub seed: u64,
}

impl Default for CertSearchConfig {
    fn default() -> Self {
        Self {
            max_dim: 16,
            restarts: 32,
            iterations: 500,
            eps_cert: tol::CERT_EPS,
            step: 0.5,
            stall_iterations: 60,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "status", rename_all = "snake_case")]
pub enum CertificateSearch {
    Certified(DiagonalCertificate),
    /// Inconclusive unless `obstruction` is set.
    NotCertified {
        best_margin: f64,
        best_lambda: Vec<f64>,
        obstruction: Option<Obstruction>,
    },
}

impl CertificateSearch {
    pub fn certificate(&self) -> Option<&DiagonalCertificate> {
        match self {
            CertificateSearch::Certified(c) => Some(c),
            _ => None,
        }
    }

    pub fn into_certificate(self) -> Option<DiagonalCertificate> {
        match self {
            CertificateSearch::Certified(c) => Some(c),
            _ => None,
        }
    }
}

/// `λ_max(M)` and its gradient in `y = log λ`, where
/// `M = B + Bᵀ`, `B = Λ^{1/2} A Λ^{-1/2}` is congruent to `Λ^{-1/2} S Λ^{-1/2}`.
fn scaled_objective(a: &DMatrix<f64>, y: &[f64]) -> Result<(f64, Vec<f64>)> {
    let n = a.nrows();
    let b = DMatrix::from_fn(n, n, |i, j| a[(i, j)] * (0.5 * (y[i] - y[j])).exp());
    let m = &b + b.transpose();
    let (val, v) = max_eigenpair(m, "certificate search")?;
    let bv = &b * &v;
    let btv = b.tr_mul(&v);
    let grad = (0..n).map(|k| v[k] * (bv[k] - btv[k])).collect();
    Ok((val, grad))
}

fn normalize_log(y: &mut [f64]) {
    let m = y.iter().copied().fold(f64::INFINITY, f64::min);
    y.iter_mut().for_each(|v| *v -= m);
}

/// Search for a diagonal certificate by gradient descent with backtracking on
/// `log λ`, minimizing `λ_max(Λ^{-1/2}(AᵀΛ+ΛA)Λ^{-1/2})`, with random restarts.
///
/// The first restart starts from `Λ = I`. The returned certificate is
/// normalized so that `min λ_i = 1`. Failure is inconclusive unless a
/// structural obstruction is reported.
pub fn find_certificate(a: &DMatrix<f64>, config: &CertSearchConfig) -> Result<CertificateSearch> {
    check_square(a)?;
    let n = a.nrows();
    if n > config.max_dim {
        return Err(Error::Config(format!(
            "dimension {n} exceeds certificate search limit {}",
            config.max_dim
        )));
    }
    if let Some(obstruction) = structural_obstruction(a) {
        let ones = vec![1.0; n];
        let margin = check_certificate_eps(a, &ones, config.eps_cert)?.margin;
        return Ok(CertificateSearch::NotCertified {
            best_margin: margin,
            best_lambda: ones,
            obstruction: Some(obstruction),
        });
    }

    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut best: Option<(f64, Vec<f64>)> = None;

    for restart in 0..config.restarts.max(1) {
        let mut y: Vec<f64> = if restart == 0 {
            vec![0.0; n]
        } else {
            (0..n).map(|_| rng.gen_range(-3.0..3.0)).collect()
        };
        let (mut val, mut grad) = scaled_objective(a, &y)?;
        let mut step = config.step;
        let mut best_here = val;
        let mut since_improvement = 0;

        for _ in 0..=config.iterations {
            if val < -2.0 * config.eps_cert {
                // Candidate: confirm on the unscaled form (same sign by congruence).
                let mut yn = y.clone();
                normalize_log(&mut yn);
                let lambda: Vec<f64> = yn.iter().map(|v| v.exp()).collect();
                let check = check_certificate_eps(a, &lambda, config.eps_cert)?;
                if check.valid {
                    return Ok(CertificateSearch::Certified(DiagonalCertificate {
                        lambda,
                        mu: check.mu,
                        margin: check.margin,
                    }));
                }
            }
            let gnorm2: f64 = grad.iter().map(|g| g * g).sum();
            if gnorm2 < 1e-28 {
                break;
            }
            // Backtracking line search on the nonsmooth objective.
            let mut accepted = false;
            while step > 1e-12 {
                let trial: Vec<f64> = y.iter().zip(&grad).map(|(yi, gi)| yi - step * gi).collect();
                let (tv, tg) = scaled_objective(a, &trial)?;
                if tv <= val - 1e-4 * step * gnorm2 {
                    y = trial;
                    val = tv;
                    grad = tg;
                    step = (step * 2.0).min(8.0);
                    accepted = true;
                    break;
                }
                step *= 0.5;
            }
            if !accepted {
                break;
            }
            if val < best_here - 1e-10 {
                best_here = val;
                since_improvement = 0;
            } else {
                since_improvement += 1;
                if since_improvement >= config.stall_iterations {
                    break;
                }
            }
        }
        if !matches!(&best, Some((bv, _)) if val >= *bv) {
            best = Some((val, y));
        }
    }

    let (_, mut y) = best.expect("at least one restart");
    normalize_log(&mut y);
    let lambda: Vec<f64> = y.iter().map(|v| v.exp()).collect();
    let check = check_certificate_eps(a, &lambda, config.eps_cert)?;
    if check.valid {
        return Ok(CertificateSearch::Certified(DiagonalCertificate {
            lambda,
            mu: check.mu,
            margin: check.margin,
        }));
    }
    Ok(CertificateSearch::NotCertified {
        best_margin: check.margin,
        best_lambda: lambda,
        obstruction: None,
    })
}

/// Distribution of the random ensemble: `W_ij ~ U[-w_bar, w_bar]`,
/// `d_i ~ U[d_lo, d_hi]`, `u_i ~ U[-u_bar, u_bar]`, kept only when `W - D` is
/// certified.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SamplerConfig {
    pub w_bar: f64,
    pub d_range: [f64; 2],
    pub u_bar: f64,
    pub max_attempts: usize,
    pub search: CertSearchConfig,
}

impl Default for SamplerConfig {
    fn default() -> Self {
        Self {
            w_bar: 2.0,
            d_range: [0.1, 2.0],
            u_bar: 1.0,
            max_attempts: 20_000,
            search: CertSearchConfig::default(),
        }
    }
}

impl SamplerConfig {
    fn validate(&self) -> Result<()> {
        let [lo, hi] = self.d_range;
        if !(lo > 0.0 && hi >= lo && hi.is_finite()) {
            return Err(Error::Config(format!(
                "d_range must satisfy 0 < lo ≤ hi, got {:?}",
                self.d_range
            )));
        }
        if !(self.w_bar >= 0.0
            && self.w_bar.is_finite()
            && self.u_bar >= 0.0
            && self.u_bar.is_finite())
        {
            return Err(Error::Config(
                "w_bar and u_bar must be non-negative and finite".into(),
            ));
        }
        if self.max_attempts == 0 {
            return Err(Error::Config("max_attempts must be positive".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct EnsembleMember {
    /// Position in the ensemble; together with the seed it fixes the RNG stream.
    pub index: usize,
    pub attempts: usize,
    pub spec: NetworkSpec,
    pub certificate: DiagonalCertificate,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Ensemble {
    pub n: usize,
    pub seed: u64,
    pub sampler: SamplerConfig,
    /// Human-readable description of the distribution, stored for replay.
    pub procedure: String,
    pub members: Vec<EnsembleMember>,
}

impl Ensemble {
    pub fn acceptance_rate(&self) -> f64 {
        let attempts: usize = self.members.iter().map(|m| m.attempts).sum();
        self.members.len() as f64 / attempts.max(1) as f64
    }

    /// JSON lines, one `{index, attempts, spec, certificate}` record per member.
    pub fn to_jsonl(&self) -> Result<String> {
        let mut out = String::new();
        for m in &self.members {
            out.push_str(&serde_json::to_string(m)?);
            out.push('\n');
        }
        Ok(out)
    }
}

/// RNG stream for ensemble member `index`; independent of evaluation order.
pub fn member_rng(seed: u64, index: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(index as u64);
    rng
}

fn draw_spec(n: usize, cfg: &SamplerConfig, rng: &mut ChaCha8Rng) -> Result<NetworkSpec> {
    let uni =
        |rng: &mut ChaCha8Rng, lo: f64, hi: f64| if hi > lo { rng.gen_range(lo..hi) } else { lo };
    let w = DMatrix::from_fn(n, n, |_, _| uni(rng, -cfg.w_bar, cfg.w_bar));
    let d = DVector::from_fn(n, |_, _| uni(rng, cfg.d_range[0], cfg.d_range[1]));
    let u = DVector::from_fn(n, |_, _| uni(rng, -cfg.u_bar, cfg.u_bar));
    NetworkSpec::new(w, d, u)
}

/// Draw one certified member on its own stream.
pub fn sample_member(
    n: usize,
    index: usize,
    seed: u64,
    cfg: &SamplerConfig,
) -> Result<EnsembleMember> {
    cfg.validate()?;
    let mut rng = member_rng(seed, index);
    let mut structural = 0;
    let mut searched = 0;
    for attempt in 1..=cfg.max_attempts {
        let spec = draw_spec(n, cfg, &mut rng)?;
        let search_cfg = CertSearchConfig {
            seed: rng.gen(),
            ..cfg.search.clone()
        };
        match find_certificate(spec.a(), &search_cfg)? {
            CertificateSearch::Certified(certificate) => {
                return Ok(EnsembleMember {
                    index,
                    attempts: attempt,
                    spec,
                    certificate,
                })
            }
            CertificateSearch::NotCertified {
                obstruction: Some(_),
                ..
            } => structural += 1,
            CertificateSearch::NotCertified {
                obstruction: None, ..
            } => searched += 1,
        }
    }
    Err(Error::SamplerExhausted {
        index,
        attempts: cfg.max_attempts,
        rejected_structural: structural,
        rejected_search: searched,
    })
}

/// Draw `count` networks with certified `W - D`.
pub fn sample_lds_ensemble(
    n: usize,
    count: usize,
    seed: u64,
    cfg: &SamplerConfig,
) -> Result<Ensemble> {
    if count == 0 {
        return Err(Error::Config("ensemble count must be at least 1".into()));
    }
    if n == 0 || n > cfg.search.max_dim {
        return Err(Error::Config(format!(
            "ensemble dimension {n} outside 1..={}",
            cfg.search.max_dim
        )));
    }
    cfg.validate()?;
    let members = (0..count)
        .into_par_iter()
        .map(|i| sample_member(n, i, seed, cfg))
        .collect::<Result<Vec<_>>>()?;
    Ok(Ensemble {
        n,
        seed,
        sampler: cfg.clone(),
        procedure: format!(
            "W_ij ~ U[-{w}, {w}], d_i ~ U[{dlo}, {dhi}], u_i ~ U[-{ub}, {ub}] i.i.d.; \
             ChaCha8 stream (seed, index); rejected unless a diagonal certificate is found \
             (stand-in distribution, not a reproduction of any published ensemble)",
            w = cfg.w_bar,
            dlo = cfg.d_range[0],
            dhi = cfg.d_range[1],
            ub = cfg.u_bar
        ),
        members,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn mat(rows: &[&[f64]]) -> DMatrix<f64> {
        DMatrix::from_fn(rows.len(), rows.len(), |i, j| rows[i][j])
    }

    fn fig1_a() -> DMatrix<f64> {
        mat(&[&[-0.8, -1.6], &[1.6, -1.0]])
    }

    #[test]
    fn fig1_identity_certificate() {
        let c = check_certificate(&fig1_a(), &[1.0, 1.0]).unwrap();
        assert!(c.valid);
        assert!((c.margin + 1.6).abs() <= 1e-12);
        assert!((c.mu - 0.8).abs() <= 1e-12);
    }

    #[test]
    fn negative_identity() {
        let a = -DMatrix::<f64>::identity(3, 3);
        let c = check_certificate(&a, &[1.0; 3]).unwrap();
        assert!((c.margin + 2.0).abs() < 1e-14);
        assert!((c.mu - 1.0).abs() < 1e-14);
    }

    #[test]
    fn skew_matrix_never_certifies() {
        let a = mat(&[&[0.0, 1.0], &[-1.0, 0.0]]);
        for &p in &[0.01, 0.1, 0.5, 1.0, 2.0, 10.0, 100.0] {
            for &q in &[0.01, 1.0, 3.0, 50.0] {
                let c = check_certificate(&a, &[p, q]).unwrap();
                assert!(c.margin >= -1e-12, "margin {} at λ=({p},{q})", c.margin);
                assert!(!c.valid);
            }
        }
    }

    #[test]
    fn check_rejects_bad_lambda() {
        assert!(check_certificate(&fig1_a(), &[1.0, 0.0]).is_err());
        assert!(check_certificate(&fig1_a(), &[1.0]).is_err());
        assert!(check_certificate(&fig1_a(), &[1.0, f64::NAN]).is_err());
    }

    #[test]
    fn find_fig1_and_diagonal() {
        let cfg = CertSearchConfig::default();
        let c = find_certificate(&fig1_a(), &cfg)
            .unwrap()
            .into_certificate()
            .unwrap();
        assert!(c.margin < 0.0);
        assert_eq!(c.lambda, vec![1.0, 1.0]);
        let d = mat(&[&[-1.0, 0.0], &[0.0, -2.0]]);
        let c = find_certificate(&d, &cfg)
            .unwrap()
            .into_certificate()
            .unwrap();
        assert_eq!(c.lambda, vec![1.0, 1.0]);
        assert!((c.margin + 2.0).abs() < 1e-14);
    }

    #[test]
    fn fig3_is_not_certified() {
        let a = mat(&[&[3.1, -4.0], &[3.0, -1.5]]);
        match find_certificate(&a, &CertSearchConfig::default()).unwrap() {
            CertificateSearch::NotCertified {
                obstruction,
                best_margin,
                ..
            } => {
                assert!(obstruction.is_some());
                assert!(best_margin >= 0.0);
            }
            other => panic!("unexpected {other:?}"),
        }
        // trace 1.6 > 0 rules out Hurwitz even with a negative diagonal entry.
        let b = mat(&[&[-0.5, 4.0], &[-1.0, 2.1]]);
        assert!(matches!(
            structural_obstruction(&b),
            Some(Obstruction::NonNegativeDiagonal { index: 1, .. })
        ));
    }

    #[test]
    fn search_needs_nontrivial_scaling() {
        // Hurwitz with negative diagonal, Λ = I fails but a diagonal scaling works.
        let a = mat(&[&[-1.0, 10.0], &[-0.05, -1.0]]);
        assert!(!check_certificate(&a, &[1.0, 1.0]).unwrap().valid);
        let c = find_certificate(&a, &CertSearchConfig::default())
            .unwrap()
            .into_certificate()
            .unwrap();
        assert!(check_certificate(&a, &c.lambda).unwrap().valid);
        assert!((c.lambda.iter().copied().fold(f64::INFINITY, f64::min) - 1.0).abs() < 1e-12);
    }

    #[test]
    fn dimension_limit() {
        let a = -DMatrix::<f64>::identity(17, 17);
        assert!(matches!(
            find_certificate(&a, &CertSearchConfig::default()),
            Err(Error::Config(_))
        ));
    }

    #[test]
    fn ensemble_is_deterministic_and_certified() {
        let cfg = SamplerConfig::default();
        let e1 = sample_lds_ensemble(3, 10, 42, &cfg).unwrap();
        let e2 = sample_lds_ensemble(3, 10, 42, &cfg).unwrap();
        assert_eq!(e1.members.len(), 10);
        for (a, b) in e1.members.iter().zip(&e2.members) {
            assert_eq!(a.spec, b.spec);
            assert_eq!(a.certificate, b.certificate);
        }
        // Member i does not depend on how many members were requested.
        let e3 = sample_lds_ensemble(3, 4, 42, &cfg).unwrap();
        assert_eq!(e3.members[3].spec, e1.members[3].spec);
        assert!(e1.to_jsonl().unwrap().lines().count() == 10);
    }

    #[test]
    fn degenerate_sampler_yields_negative_identity() {
        let cfg = SamplerConfig {
            w_bar: 0.0,
            d_range: [1.0, 1.0],
            u_bar: 0.0,
            ..SamplerConfig::default()
        };
        let e = sample_lds_ensemble(2, 1, 7, &cfg).unwrap();
        assert_eq!(e.members[0].spec.a(), &(-DMatrix::<f64>::identity(2, 2)));
        assert_eq!(e.members[0].certificate.lambda, vec![1.0, 1.0]);
    }

    #[test]
    fn sampler_errors() {
        assert!(sample_lds_ensemble(3, 0, 1, &SamplerConfig::default()).is_err());
        // Impossible distribution: positive diagonal for every draw.
        let cfg = SamplerConfig {
            w_bar: 0.0,
            d_range: [1.0, 1.0],
            max_attempts: 5,
            ..SamplerConfig::default()
        };
        let spec_a_pos = sample_member(
            2,
            0,
            1,
            &SamplerConfig {
                d_range: [-1.0, 1.0],
                ..cfg.clone()
            },
        );
        assert!(matches!(spec_a_pos, Err(Error::Config(_))));
    }

    fn lds_matrix(n: usize) -> impl Strategy<Value = DMatrix<f64>> {
        (prop::collection::vec(-1.0f64..1.0, n * n), 0.5f64..2.0).prop_map(move |(v, shift)| {
            // Skew part plus a dominant negative diagonal: Λ = I certifies it.
            let m = DMatrix::from_row_slice(n, n, &v);
            let skew = (&m - m.transpose()) * 2.0;
            let sym = (&m + m.transpose()) * 0.25;
            skew + sym - DMatrix::identity(n, n) * (shift + n as f64 * 0.5)
        })
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(64))]

        #[test]
        fn validity_and_rate_are_scale_free(a in lds_matrix(3), c in 0.01f64..100.0, l in prop::collection::vec(0.2f64..5.0, 3)) {
            let base = check_certificate(&a, &l).unwrap();
            let scaled: Vec<f64> = l.iter().map(|v| v * c).collect();
            let other = check_certificate(&a, &scaled).unwrap();
            prop_assert_eq!(base.margin < 0.0, other.margin < 0.0);
            prop_assert!((base.mu - other.mu).abs() <= 1e-9 * base.mu.abs().max(1.0));
        }

        #[test]
        fn preserved_under_tau_scaling(a in lds_matrix(3), tau in 1e-3f64..1e3) {
            let lam = [1.0, 1.0, 1.0];
            let base = check_certificate(&a, &lam).unwrap();
            prop_assume!(base.valid);
            let scaled = check_certificate(&(&a * tau), &lam).unwrap();
            prop_assert!(scaled.valid);
            prop_assert!((scaled.margin - tau * base.margin).abs() <= 1e-9 * (tau * base.margin).abs());
            prop_assert!((scaled.mu - tau * base.mu).abs() <= 1e-9 * (tau * base.mu).abs());
        }

        #[test]
        fn rate_inequality_holds(a in lds_matrix(3), z in prop::collection::vec(-10.0f64..10.0, 3)) {
            let lam = [1.0, 1.0, 1.0];
            let chk = check_certificate(&a, &lam).unwrap();
            let s = lyapunov_form(&a, &lam);
            let zv = DVector::from_vec(z);
            let lhs = (zv.transpose() * &s * &zv)[(0, 0)];
            let rhs = -2.0 * chk.mu * zv.norm_squared();
            prop_assert!(lhs <= rhs + 1e-9 * zv.norm_squared().max(1.0));
        }

        #[test]
        fn search_and_check_agree(a in lds_matrix(4)) {
            let found = find_certificate(&a, &CertSearchConfig { restarts: 4, ..Default::default() }).unwrap();
            let c = found.certificate().expect("diagonally dominant matrices are certifiable");
            let chk = check_certificate(&a, &c.lambda).unwrap();
            prop_assert!(chk.valid);
            prop_assert_eq!(chk.margin, c.margin);
        }
    }
}
