//! Factor structure: Gaussian updates of factor scores and loadings, sign
//! identification, and reconstruction of `Σ_t = Λ V_t Λ' + U_t` with its
//! derived correlation and communality summaries.

use nalgebra::DMatrix;
use rand::Rng;

use crate::data::{LatentPaths, ParameterDraw};
use crate::linalg::{draw_from_precision, NotPositiveDefinite};

/// Draws `f_t | y_t ~ N(P⁻¹ Λ' U_t⁻¹ y_t, P⁻¹)` with `P = V_t⁻¹ + Λ' U_t⁻¹ Λ`.
///
/// `u` and `v` are the diagonal variances `e^{h}` at time `t`.
pub fn sample_factors<R: Rng + ?Sized>(
    y: &[f64],
    loadings: &DMatrix<f64>,
    u: &[f64],
    v: &[f64],
    rng: &mut R,
) -> Result<Vec<f64>, NotPositiveDefinite> {
    let (m, r) = loadings.shape();
    assert!(y.len() == m && u.len() == m && v.len() == r, "factor draw shape mismatch");
    let mut prec = vec![0.0; r * r];
    let mut lin = vec![0.0; r];
    for j in 0..r {
        prec[j * r + j] = 1.0 / v[j];
    }
    for i in 0..m {
        let w = 1.0 / u[i];
        for j in 0..r {
            let lij = loadings[(i, j)] * w;
            lin[j] += lij * y[i];
            for k in 0..=j {
                prec[j * r + k] += lij * loadings[(i, k)];
            }
        }
    }
    draw_from_precision(&mut prec, &mut lin, r, rng)?;
    Ok(lin)
}

/// Draws row `Λ_i` from the heteroskedastic regression
/// `y_it = Λ_i f_t + ε_it`, `ε_it ~ N(0, e^{h_it})`, prior `N(0, loading_var·I)`.
///
/// `f` holds the `r` factor paths; `h` holds `h_i1..h_iT`.
pub fn sample_loadings_row<R: Rng + ?Sized>(
    y: &[f64],
    f: &[Vec<f64>],
    h: &[f64],
    loading_var: f64,
    rng: &mut R,
) -> Result<Vec<f64>, NotPositiveDefinite> {
    let r = f.len();
    let n = y.len();
    assert!(h.len() == n && f.iter().all(|p| p.len() == n), "loadings draw shape mismatch");
    let mut prec = vec![0.0; r * r];
    let mut lin = vec![0.0; r];
    for j in 0..r {
        prec[j * r + j] = 1.0 / loading_var;
    }
    for t in 0..n {
        let w = (-h[t]).exp();
        for j in 0..r {
            let fj = f[j][t] * w;
            lin[j] += fj * y[t];
            for k in 0..=j {
                prec[j * r + k] += fj * f[k][t];
            }
        }
    }
    draw_from_precision(&mut prec, &mut lin, r, rng)?;
    Ok(lin)
}

/// Flips factor signs so that the largest-magnitude loading in each column
/// is positive (ties go to the lowest row). Returns the flipped columns.
pub fn identify_signs_draw(params: &mut ParameterDraw, latent: &mut LatentPaths) -> Vec<usize> {
    let (m, r) = params.loadings.shape();
    let mut flipped = Vec::new();
    for j in 0..r {
        let mut best = 0;
        for i in 1..m {
            if params.loadings[(i, j)].abs() > params.loadings[(best, j)].abs() {
                best = i;
            }
        }
        if params.loadings[(best, j)] < 0.0 {
            params.loadings.column_mut(j).iter_mut().for_each(|v| *v = -*v);
            latent.f[j].iter_mut().for_each(|v| *v = -*v);
            flipped.push(j);
        }
    }
    flipped
}

/// Applies [`identify_signs_draw`] to every stored draw.
pub fn identify_signs(mut store: crate::mcmc::PosteriorStore) -> crate::mcmc::PosteriorStore {
    for (p, l) in store.draws.iter_mut() {
        identify_signs_draw(p, l);
    }
    store
}

/// `Λ_i` has its largest-magnitude entry positive in every column.
pub fn signs_identified(loadings: &DMatrix<f64>) -> bool {
    loadings.column_iter().all(|col| {
        let mut best = 0;
        for i in 1..col.len() {
            if col[i].abs() > col[best].abs() {
                best = i;
            }
        }
        col.is_empty() || col[best] >= 0.0
    })
}

/// `Σ_t = Λ V_t Λ' + U_t`.
pub fn reconstruct_covariance(loadings: &DMatrix<f64>, v: &[f64], u: &[f64]) -> DMatrix<f64> {
    let (m, r) = loadings.shape();
    assert!(v.len() == r && u.len() == m, "covariance shape mismatch");
    let mut s = DMatrix::zeros(m, m);
    for a in 0..m {
        for b in 0..=a {
            let mut acc = 0.0;
            for j in 0..r {
                acc += loadings[(a, j)] * v[j] * loadings[(b, j)];
            }
            if a == b {
                acc += u[a];
            }
            s[(a, b)] = acc;
            s[(b, a)] = acc;
        }
    }
    s
}

#[derive(Debug, Clone, Copy, PartialEq, thiserror::Error)]
#[error("covariance diagonal entry {index} is {value}, must be positive")]
pub struct NonPositiveDiagonal {
    pub index: usize,
    pub value: f64,
}

/// `R_ij = Σ_ij / √(Σ_ii Σ_jj)`, with the diagonal set to exactly 1.
pub fn covariance_to_correlation(sigma: &DMatrix<f64>) -> Result<DMatrix<f64>, NonPositiveDiagonal> {
    let m = sigma.nrows();
    let mut sd = Vec::with_capacity(m);
    for i in 0..m {
        let d = sigma[(i, i)];
        if !(d > 0.0) {
            return Err(NonPositiveDiagonal { index: i, value: d });
        }
        sd.push(d.sqrt());
    }
    Ok(DMatrix::from_fn(m, m, |a, b| {
        if a == b {
            1.0
        } else {
            (sigma[(a, b)] / (sd[a] * sd[b])).clamp(-1.0, 1.0)
        }
    }))
}

/// Share of each series' variance explained by the factors.
pub fn communalities(loadings: &DMatrix<f64>, v: &[f64], u: &[f64]) -> Vec<f64> {
    let (m, r) = loadings.shape();
    (0..m)
        .map(|i| {
            let common: f64 = (0..r).map(|j| loadings[(i, j)].powi(2) * v[j]).sum();
            common / (common + u[i])
        })
        .collect()
}

/// `Λ_t = Λ V_t^{1/2}`.
pub fn dynamic_loadings(loadings: &DMatrix<f64>, v: &[f64]) -> DMatrix<f64> {
    let mut out = loadings.clone();
    for (j, mut col) in out.column_iter_mut().enumerate() {
        let s = v[j].sqrt();
        col.iter_mut().for_each(|x| *x *= s);
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::substream;
    use nalgebra::DVector;
    use proptest::prelude::*;
    use rand::Rng;

    fn moments(draws: &[Vec<f64>]) -> (Vec<f64>, DMatrix<f64>) {
        let n = draws.len() as f64;
        let r = draws[0].len();
        let mean: Vec<f64> = (0..r).map(|j| draws.iter().map(|d| d[j]).sum::<f64>() / n).collect();
        let cov = DMatrix::from_fn(r, r, |a, b| {
            draws.iter().map(|d| (d[a] - mean[a]) * (d[b] - mean[b])).sum::<f64>() / n
        });
        (mean, cov)
    }

    /// Dense Bayesian linear model `y = X β + e`, `e ~ N(0, diag(noise))`,
    /// `β ~ N(0, diag(prior))`, solved through the joint covariance.
    fn dense_posterior(x: &DMatrix<f64>, y: &[f64], noise: &[f64], prior: &[f64]) -> (DVector<f64>, DMatrix<f64>) {
        let prior_cov = DMatrix::from_diagonal(&DVector::from_row_slice(prior));
        let obs_cov = x * &prior_cov * x.transpose() + DMatrix::from_diagonal(&DVector::from_row_slice(noise));
        let gain = &prior_cov * x.transpose() * obs_cov.try_inverse().unwrap();
        let mean = &gain * DVector::from_row_slice(y);
        let cov = &prior_cov - &gain * x * &prior_cov;
        (mean, cov)
    }

    fn assert_moments_match(draws: &[Vec<f64>], mean: &DVector<f64>, cov: &DMatrix<f64>) {
        let n = draws.len() as f64;
        let (m, c) = moments(draws);
        for a in 0..m.len() {
            let se = (cov[(a, a)] / n).sqrt();
            assert!((m[a] - mean[a]).abs() < 3.5 * se, "mean[{a}] {} vs {}", m[a], mean[a]);
            for b in 0..m.len() {
                // se of a sample covariance ≈ √((Σ_aa Σ_bb + Σ_ab²)/n)
                let se = ((cov[(a, a)] * cov[(b, b)] + cov[(a, b)].powi(2)) / n).sqrt();
                assert!((c[(a, b)] - cov[(a, b)]).abs() < 3.5 * se, "cov[{a},{b}] {} vs {}", c[(a, b)], cov[(a, b)]);
            }
        }
    }

    #[test]
    fn zero_loadings_draw_from_factor_prior() {
        let l = DMatrix::zeros(3, 2);
        let mut rng = substream(1, 0, 0);
        let draws: Vec<Vec<f64>> =
            (0..100_000).map(|_| sample_factors(&[1.0, 2.0, 3.0], &l, &[1.0; 3], &[0.5, 2.0], &mut rng).unwrap()).collect();
        let mean = DVector::zeros(2);
        let cov = DMatrix::from_diagonal(&DVector::from_row_slice(&[0.5, 2.0]));
        assert_moments_match(&draws, &mean, &cov);
    }

    #[test]
    fn scalar_factor_conjugate_case() {
        let l = DMatrix::from_element(1, 1, 1.0);
        let mut rng = substream(2, 0, 0);
        let draws: Vec<Vec<f64>> =
            (0..100_000).map(|_| sample_factors(&[2.0], &l, &[1.0], &[1.0], &mut rng).unwrap()).collect();
        assert_moments_match(&draws, &DVector::from_element(1, 1.0), &DMatrix::from_element(1, 1, 0.5));
    }

    #[test]
    fn factor_draws_match_dense_oracle() {
        for (m, r, seed) in [(2, 1, 3u64), (3, 2, 4)] {
            let mut g = substream(seed, 1, 1);
            let l = DMatrix::from_fn(m, r, |_, _| g.random::<f64>() * 2.0 - 1.0);
            let u: Vec<f64> = (0..m).map(|_| 0.2 + g.random::<f64>()).collect();
            let v: Vec<f64> = (0..r).map(|_| 0.2 + g.random::<f64>()).collect();
            let y: Vec<f64> = (0..m).map(|_| g.random::<f64>() * 3.0 - 1.5).collect();
            // y = Λ f + ε: regressors Λ, coefficients f with prior V.
            let (mean, cov) = dense_posterior(&l, &y, &u, &v);
            let mut rng = substream(seed, 0, 0);
            let draws: Vec<Vec<f64>> = (0..100_000).map(|_| sample_factors(&y, &l, &u, &v, &mut rng).unwrap()).collect();
            assert_moments_match(&draws, &mean, &cov);
        }
    }

    #[test]
    fn loadings_without_factor_signal_follow_prior() {
        let f = vec![vec![0.0; 5], vec![0.0; 5]];
        let mut rng = substream(5, 0, 0);
        let draws: Vec<Vec<f64>> = (0..100_000)
            .map(|_| sample_loadings_row(&[1.0, -1.0, 2.0, 0.0, 3.0], &f, &[0.0; 5], 2.0, &mut rng).unwrap())
            .collect();
        let cov = DMatrix::from_diagonal(&DVector::from_row_slice(&[2.0, 2.0]));
        assert_moments_match(&draws, &DVector::zeros(2), &cov);
    }

    #[test]
    fn scalar_loading_conjugate_case() {
        let mut rng = substream(6, 0, 0);
        let draws: Vec<Vec<f64>> =
            (0..100_000).map(|_| sample_loadings_row(&[3.0], &[vec![1.0]], &[0.0], 1.0, &mut rng).unwrap()).collect();
        assert_moments_match(&draws, &DVector::from_element(1, 1.5), &DMatrix::from_element(1, 1, 0.5));
    }

    #[test]
    fn loadings_match_weighted_least_squares_oracle() {
        let mut g = substream(7, 1, 1);
        let t = 4;
        let f: Vec<Vec<f64>> = (0..2).map(|_| (0..t).map(|_| g.random::<f64>() * 2.0 - 1.0).collect()).collect();
        let h: Vec<f64> = (0..t).map(|_| g.random::<f64>() - 0.5).collect();
        let y: Vec<f64> = (0..t).map(|_| g.random::<f64>() * 2.0 - 1.0).collect();
        let x = DMatrix::from_fn(t, 2, |a, j| f[j][a]);
        let noise: Vec<f64> = h.iter().map(|v| v.exp()).collect();
        let (mean, cov) = dense_posterior(&x, &y, &noise, &[0.7, 0.7]);
        let mut rng = substream(7, 0, 0);
        let draws: Vec<Vec<f64>> =
            (0..100_000).map(|_| sample_loadings_row(&y, &f, &h, 0.7, &mut rng).unwrap()).collect();
        assert_moments_match(&draws, &mean, &cov);
    }

    fn draw_with(loadings: DMatrix<f64>, f: Vec<Vec<f64>>) -> (ParameterDraw, LatentPaths) {
        let (m, r) = loadings.shape();
        let p = ParameterDraw { mu: vec![0.0; m + r], phi: vec![0.5; m + r], sigma: vec![0.1; m + r], loadings };
        let t = f.first().map_or(1, |x| x.len());
        let l = LatentPaths { h: vec![vec![0.0; t + 1]; m + r], f };
        (p, l)
    }

    #[test]
    fn sign_flip_examples() {
        let (mut p, mut l) = draw_with(DMatrix::from_column_slice(2, 1, &[-3.0, 1.0]), vec![vec![0.5, -2.0]]);
        assert_eq!(identify_signs_draw(&mut p, &mut l), vec![0]);
        assert_eq!(p.loadings.as_slice(), &[3.0, -1.0]);
        assert_eq!(l.f[0], vec![-0.5, 2.0]);

        let (mut p, mut l) = draw_with(DMatrix::from_column_slice(2, 1, &[2.0, 1.0]), vec![vec![0.5, -2.0]]);
        assert!(identify_signs_draw(&mut p, &mut l).is_empty());
        assert_eq!(p.loadings.as_slice(), &[2.0, 1.0]);

        // ties: lowest row decides
        let (mut p, mut l) = draw_with(DMatrix::from_column_slice(2, 1, &[-2.0, 2.0]), vec![vec![1.0]]);
        identify_signs_draw(&mut p, &mut l);
        assert_eq!(p.loadings.as_slice(), &[2.0, -2.0]);
        assert!(signs_identified(&p.loadings));
    }

    #[test]
    fn covariance_examples() {
        let s = reconstruct_covariance(&DMatrix::zeros(2, 1), &[3.0], &[1.0, 1.0]);
        assert_eq!(s, DMatrix::identity(2, 2));
        let s = reconstruct_covariance(&DMatrix::from_element(1, 1, 2.0), &[1.0], &[1.0]);
        assert_eq!(s[(0, 0)], 5.0);

        let l = DMatrix::from_column_slice(2, 1, &[1.0, 0.5]);
        let (v, u) = ([0.2f64.exp()], [(-0.1f64).exp(), 0.3f64.exp()]);
        let s = reconstruct_covariance(&l, &v, &u);
        let dense = &l * DMatrix::from_element(1, 1, v[0]) * l.transpose()
            + DMatrix::from_diagonal(&DVector::from_row_slice(&u));
        assert!((s - dense).abs().max() < 1e-14);
    }

    #[test]
    fn correlation_examples() {
        let r = covariance_to_correlation(&DMatrix::from_diagonal(&DVector::from_row_slice(&[2.0, 9.0]))).unwrap();
        assert_eq!(r, DMatrix::identity(2, 2));
        let r = covariance_to_correlation(&DMatrix::from_row_slice(2, 2, &[4.0, 2.0, 2.0, 4.0])).unwrap();
        assert_eq!(r.as_slice(), &[1.0, 0.5, 0.5, 1.0]);
        let err = covariance_to_correlation(&DMatrix::from_row_slice(2, 2, &[1.0, 0.0, 0.0, 0.0])).unwrap_err();
        assert_eq!(err.index, 1);
    }

    #[test]
    fn communality_examples() {
        assert_eq!(communalities(&DMatrix::zeros(3, 1), &[2.0], &[1.0; 3]), vec![0.0; 3]);
        assert_eq!(communalities(&DMatrix::from_element(1, 1, 1.0), &[1.0], &[1.0]), vec![0.5]);
        assert!((communalities(&DMatrix::from_element(1, 1, 2.0), &[1.0], &[1.0])[0] - 0.8).abs() < 1e-15);
    }

    #[test]
    fn dynamic_loading_examples() {
        let l = DMatrix::from_row_slice(2, 2, &[1.0, -2.0, 0.5, 3.0]);
        assert_eq!(dynamic_loadings(&l, &[1.0, 1.0]), l);
        let l1 = DMatrix::from_column_slice(2, 1, &[1.0, -0.5]);
        assert_eq!(dynamic_loadings(&l1, &[4.0]).as_slice(), &[2.0, -1.0]);
    }

    fn instance() -> impl Strategy<Value = (DMatrix<f64>, Vec<f64>, Vec<f64>)> {
        (1usize..6, 0usize..4).prop_flat_map(|(m, r)| {
            (
                proptest::collection::vec(-3.0f64..3.0, m * r).prop_map(move |v| DMatrix::from_vec(m, r, v)),
                proptest::collection::vec(-3.0f64..3.0, r).prop_map(|v| v.iter().map(|x| x.exp()).collect()),
                proptest::collection::vec(-3.0f64..3.0, m).prop_map(|v| v.iter().map(|x| x.exp()).collect()),
            )
        })
    }

    proptest! {
        #[test]
        fn reconstruction_invariants((l, v, u) in instance()) {
            let s = reconstruct_covariance(&l, &v, &u);
            prop_assert!(s.clone().cholesky().is_some());
            prop_assert_eq!(&s, &s.transpose());

            let lt = dynamic_loadings(&l, &v);
            let alt = &lt * lt.transpose() + DMatrix::from_diagonal(&DVector::from_row_slice(&u));
            let scale = s.abs().max();
            prop_assert!((&alt - &s).abs().max() <= 1e-14 * scale.max(1.0));

            let r = covariance_to_correlation(&s).unwrap();
            for a in 0..r.nrows() {
                prop_assert_eq!(r[(a, a)], 1.0);
                for b in 0..r.ncols() {
                    prop_assert!(r[(a, b)].abs() <= 1.0);
                    prop_assert_eq!(r[(a, b)], r[(b, a)]);
                }
            }

            let c = communalities(&l, &v, &u);
            for (i, ci) in c.iter().enumerate() {
                prop_assert!((0.0..=1.0).contains(ci));
                let idio = u[i] / s[(i, i)];
                prop_assert!((ci + idio - 1.0).abs() < 1e-14);
            }
        }

        #[test]
        fn sign_step_leaves_covariance_bit_identical((l, v, u) in instance()) {
            let t = 3;
            let r = l.ncols();
            let f: Vec<Vec<f64>> = (0..r).map(|j| (0..t).map(|k| (j * 3 + k) as f64 - 2.5).collect()).collect();
            let (mut p, mut lat) = draw_with(l.clone(), f.clone());
            let before = reconstruct_covariance(&p.loadings, &v, &u);
            let fitted_before = &p.loadings * DMatrix::from_fn(r, t, |j, k| lat.f[j][k]);
            identify_signs_draw(&mut p, &mut lat);
            prop_assert!(signs_identified(&p.loadings));
            prop_assert_eq!(reconstruct_covariance(&p.loadings, &v, &u), before);
            let fitted_after = &p.loadings * DMatrix::from_fn(r, t, |j, k| lat.f[j][k]);
            prop_assert_eq!(fitted_after, fitted_before);
        }
    }
}
