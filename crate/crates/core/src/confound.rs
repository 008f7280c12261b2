//! Partialling the background scores out of the channels of interest, and the
//! static PCA baseline.

use log::warn;
use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::dpca::{choose_k, prepare_background, ComponentRule, ScoreMatrix};
use crate::error::{Error, Result};
use crate::numeric::{hermitian_eig, ols_fit, ols_fit_pruned, ComplexMatrix, OlsFit};
use crate::series::MultiChannelSeries;

/// Which columns enter the background regression.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct RegressionSpec {
    pub include_intercept: bool,
    pub include_interactions: bool,
}

impl Default for RegressionSpec {
    fn default() -> Self {
        Self {
            include_intercept: true,
            include_interactions: false,
        }
    }
}

impl RegressionSpec {
    /// Order of the product terms; pairwise products only.
    pub const INTERACTION_ORDER: usize = 2;

    pub fn n_columns(&self, k: usize) -> usize {
        usize::from(self.include_intercept)
            + k
            + if self.include_interactions {
                k * k.saturating_sub(1) / 2
            } else {
                0
            }
    }
}

/// Residual ("isolated") versions of a pair of channels.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct IsolatedPair {
    pub x: Vec<f64>,
    pub y: Vec<f64>,
    pub fit_x: OlsFit,
    pub fit_y: OlsFit,
}

/// `[1] ++ scores ++ {s_i * s_j : i < j}`.
pub fn build_design(scores: &ScoreMatrix, spec: &RegressionSpec) -> DMatrix<f64> {
    let t = scores.len();
    let k = scores.k_scores();
    let cols: Vec<Vec<f64>> = (0..k).map(|j| scores.column(j)).collect();
    let mut design = DMatrix::zeros(t, spec.n_columns(k));
    let mut c = 0;
    if spec.include_intercept {
        design.column_mut(0).fill(1.0);
        c = 1;
    }
    for col in &cols {
        design.column_mut(c).copy_from_slice(col);
        c += 1;
    }
    if spec.include_interactions {
        for i in 0..k {
            for j in i + 1..k {
                for t in 0..t {
                    design[(t, c)] = cols[i][t] * cols[j][t];
                }
                c += 1;
            }
        }
    }
    design
}

/// Indices of the interaction columns in a design built by [`build_design`].
pub(crate) fn interaction_columns(k: usize, spec: &RegressionSpec) -> Vec<usize> {
    if !spec.include_interactions {
        return Vec::new();
    }
    let start = usize::from(spec.include_intercept) + k;
    (start..spec.n_columns(k)).collect()
}

/// Regresses one channel on the design, pruning collinear interaction columns.
pub fn residualize_channel(
    target: &[f64],
    design: &DMatrix<f64>,
    droppable: &[usize],
) -> Result<OlsFit> {
    if droppable.is_empty() {
        return ols_fit(design, target);
    }
    let (fit, dropped) = ols_fit_pruned(design, target, droppable)?;
    if !dropped.is_empty() {
        warn!(
            "dropped {} near-collinear interaction column(s) from the background design",
            dropped.len()
        );
    }
    Ok(fit)
}

/// Residualizes the two channels of `targets` on the score design.
pub fn residualize(
    targets: &MultiChannelSeries,
    scores: &ScoreMatrix,
    spec: &RegressionSpec,
) -> Result<IsolatedPair> {
    if targets.n_channels() != 2 {
        return Err(Error::DimensionMismatch {
            expected: 2,
            found: targets.n_channels(),
        });
    }
    if targets.len() != scores.len() {
        return Err(Error::DimensionMismatch {
            expected: scores.len(),
            found: targets.len(),
        });
    }
    let design = build_design(scores, spec);
    let droppable = interaction_columns(scores.k_scores(), spec);
    let (fit_x, fit_y) = rayon::join(
        || residualize_channel(targets.channel(0), &design, &droppable),
        || residualize_channel(targets.channel(1), &design, &droppable),
    );
    let (fit_x, fit_y) = (fit_x?, fit_y?);
    Ok(IsolatedPair {
        x: fit_x.residuals.clone(),
        y: fit_y.residuals.clone(),
        fit_x,
        fit_y,
    })
}

/// Classical principal component scores of the lag-zero covariance.
#[derive(Debug, Clone)]
pub struct StaticPcaFit {
    pub scores: ScoreMatrix,
    pub k_scores: usize,
    pub explained_variance: Vec<f64>,
    pub dropped: Vec<String>,
}

/// First `k` principal component scores of `background`.
pub fn static_pca_scores(background: &MultiChannelSeries, k: usize) -> Result<ScoreMatrix> {
    let n = background.n_channels();
    if k == 0 || k > n {
        return Err(Error::InvalidParameter(format!(
            "component count {k} must lie in 1..={n}"
        )));
    }
    let z = background.centered();
    let cov = (z.transpose() * &z) / background.len() as f64;
    let eig = hermitian_eig(&ComplexMatrix::from_real_symmetric(&cov)?)?;
    let trace: f64 = (0..n).map(|i| cov[(i, i)]).sum();
    if trace.is_nan() || trace <= 0.0 {
        return Err(Error::DegenerateInput(
            "background has zero total variance".into(),
        ));
    }
    let explained = eig.values.iter().map(|l| l / trace).collect();
    let columns: Vec<Vec<f64>> = (0..k)
        .map(|j| {
            let v: Vec<f64> = eig.vector(j).iter().map(|c| c.re).collect();
            (0..background.len())
                .map(|t| (0..n).map(|c| v[c] * z[(t, c)]).sum())
                .collect()
        })
        .collect();
    ScoreMatrix::from_columns(&columns, explained, 0)
}

/// Static PCA with constant-channel removal and a component rule.
pub fn fit_static_pca(
    background: &MultiChannelSeries,
    rule: ComponentRule,
) -> Result<StaticPcaFit> {
    let (bg, dropped) = prepare_background(background, false)?;
    let n = bg.n_channels();
    let all = static_pca_scores(&bg, 1)?;
    let k_scores = match rule {
        ComponentRule::Count(k) => k,
        ComponentRule::VarianceThreshold(th) => choose_k(&all.explained_variance, th)?,
    };
    if k_scores == 0 || k_scores > n {
        return Err(Error::InvalidParameter(format!(
            "component count {k_scores} must lie in 1..={n}"
        )));
    }
    let scores = static_pca_scores(&bg, k_scores)?;
    Ok(StaticPcaFit {
        explained_variance: scores.explained_variance.clone(),
        scores,
        k_scores,
        dropped,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;
    use rand_distr::{Distribution, Normal, StandardNormal};

    fn gaussian(t: usize, rng: &mut ChaCha8Rng) -> Vec<f64> {
        (0..t).map(|_| StandardNormal.sample(rng)).collect()
    }

    fn scores_from(cols: &[Vec<f64>]) -> ScoreMatrix {
        ScoreMatrix::from_columns(cols, vec![], 0).unwrap()
    }

    fn pair(x: Vec<f64>, y: Vec<f64>) -> MultiChannelSeries {
        MultiChannelSeries::from_columns(vec![x, y], vec!["x".into(), "y".into()]).unwrap()
    }

    #[test]
    fn design_column_counts() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let s2 = scores_from(&[gaussian(20, &mut rng), gaussian(20, &mut rng)]);
        assert_eq!(build_design(&s2, &RegressionSpec::default()).ncols(), 3);
        let s3 = scores_from(&[
            gaussian(20, &mut rng),
            gaussian(20, &mut rng),
            gaussian(20, &mut rng),
        ]);
        let spec = RegressionSpec {
            include_interactions: true,
            ..Default::default()
        };
        assert_eq!(build_design(&s3, &spec).ncols(), 7);
        let no_icpt = RegressionSpec {
            include_intercept: false,
            include_interactions: false,
        };
        assert_eq!(build_design(&s3, &no_icpt).ncols(), 3);
    }

    #[test]
    fn interaction_is_exact_product() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let a = gaussian(30, &mut rng);
        let b = gaussian(30, &mut rng);
        let spec = RegressionSpec {
            include_interactions: true,
            ..Default::default()
        };
        let d = build_design(&scores_from(&[a.clone(), b.clone()]), &spec);
        for t in 0..30 {
            assert_eq!(d[(t, 3)], a[t] * b[t]);
        }
    }

    #[test]
    fn exact_target_leaves_no_residual() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let s1 = gaussian(200, &mut rng);
        let other = gaussian(200, &mut rng);
        let scores = scores_from(std::slice::from_ref(&s1));
        let iso = residualize(
            &pair(s1.clone(), other),
            &scores,
            &RegressionSpec::default(),
        )
        .unwrap();
        let rn: f64 = iso.x.iter().map(|v| v * v).sum::<f64>().sqrt();
        let tn: f64 = s1.iter().map(|v| v * v).sum::<f64>().sqrt();
        assert!(rn / tn < 1e-8);
    }

    #[test]
    fn orthogonal_target_is_only_centered() {
        let t = 64;
        let s1: Vec<f64> = (0..t)
            .map(|i| if i % 2 == 0 { 1.0 } else { -1.0 })
            .collect();
        let target: Vec<f64> = (0..t)
            .map(|i| if (i / 2) % 2 == 0 { 3.0 } else { 1.0 })
            .collect();
        let iso = residualize(
            &pair(target.clone(), s1.clone()),
            &scores_from(&[s1]),
            &RegressionSpec::default(),
        )
        .unwrap();
        let mean = target.iter().sum::<f64>() / t as f64;
        for i in 0..t {
            assert!((iso.x[i] - (target[i] - mean)).abs() < 1e-8);
        }
    }

    #[test]
    fn recovers_planted_coefficient() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let t = 2048;
        let s1 = gaussian(t, &mut rng);
        let noise = Normal::new(0.0, 0.1).unwrap();
        let target: Vec<f64> = s1
            .iter()
            .map(|v| 2.0 * v + noise.sample(&mut rng))
            .collect();
        let other = gaussian(t, &mut rng);
        let iso = residualize(
            &pair(target, other),
            &scores_from(&[s1]),
            &RegressionSpec::default(),
        )
        .unwrap();
        assert!((iso.fit_x.coefficients[1] - 2.0).abs() < 0.05);
    }

    #[test]
    fn duplicated_scores_are_singular() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let s1 = gaussian(50, &mut rng);
        let scores = scores_from(&[s1.clone(), s1]);
        let r = residualize(
            &pair(gaussian(50, &mut rng), gaussian(50, &mut rng)),
            &scores,
            &RegressionSpec::default(),
        );
        assert!(matches!(r, Err(Error::SingularDesign { .. })));
    }

    #[test]
    fn collinear_interaction_is_pruned() {
        // With a binary score, s1 * s1-like products collapse: s2 = s1 makes the
        // product s1*s2 = 1, identical to the intercept, so it gets dropped.
        let t = 40;
        let s1: Vec<f64> = (0..t)
            .map(|i| if i % 3 == 0 { 1.0 } else { -1.0 })
            .collect();
        let s2: Vec<f64> = (0..t)
            .map(|i| if i % 5 == 0 { 1.0 } else { -1.0 })
            .collect();
        let s3: Vec<f64> = s1
            .iter()
            .zip(&s2)
            .map(|(a, b)| a * b * 0.5 + 0.1 * a)
            .collect();
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let spec = RegressionSpec {
            include_interactions: true,
            ..Default::default()
        };
        let iso = residualize(
            &pair(gaussian(t, &mut rng), gaussian(t, &mut rng)),
            &scores_from(&[s1, s2, s3]),
            &spec,
        )
        .unwrap();
        assert!(iso.fit_x.n_params < 7);
    }

    #[test]
    fn residuals_are_orthogonal_idempotent_and_centered() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let t = 300;
        let cols = vec![
            gaussian(t, &mut rng),
            gaussian(t, &mut rng),
            gaussian(t, &mut rng),
        ];
        let scores = scores_from(&cols);
        let spec = RegressionSpec {
            include_interactions: true,
            ..Default::default()
        };
        let targets = pair(gaussian(t, &mut rng), gaussian(t, &mut rng));
        let iso = residualize(&targets, &scores, &spec).unwrap();
        let design = build_design(&scores, &spec);
        for c in 0..design.ncols() {
            let dot: f64 = design
                .column(c)
                .iter()
                .zip(&iso.y)
                .map(|(a, b)| a * b)
                .sum();
            assert!(dot.abs() < 1e-7);
        }
        assert!((iso.x.iter().sum::<f64>() / t as f64).abs() < 1e-9);
        let again = residualize(&pair(iso.x.clone(), iso.y.clone()), &scores, &spec).unwrap();
        for (a, b) in again.x.iter().zip(&iso.x) {
            assert!((a - b).abs() < 1e-9);
        }
    }

    #[test]
    fn static_pca_finds_planted_factor() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let t = 1000;
        let f = gaussian(t, &mut rng);
        let cols: Vec<Vec<f64>> = (0..6)
            .map(|i| {
                let load = 1.0 + 0.2 * i as f64;
                f.iter()
                    .map(|v| {
                        load * v + 0.2 * Distribution::<f64>::sample(&StandardNormal, &mut rng)
                    })
                    .collect()
            })
            .collect();
        let bg = MultiChannelSeries::from_columns(cols, (0..6).map(|i| format!("z{i}")).collect())
            .unwrap();
        let s = static_pca_scores(&bg, 1).unwrap().column(0);
        let fm = f.iter().sum::<f64>() / t as f64;
        let num: f64 = s.iter().zip(&f).map(|(a, b)| a * (b - fm)).sum();
        let den = (s.iter().map(|a| a * a).sum::<f64>()
            * f.iter().map(|b| (b - fm).powi(2)).sum::<f64>())
        .sqrt();
        assert!((num / den).abs() > 0.95);
        assert!(matches!(
            static_pca_scores(&bg, 7),
            Err(Error::InvalidParameter(_))
        ));
    }

    #[test]
    fn full_basis_reconstructs_data() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let cols: Vec<Vec<f64>> = (0..4).map(|_| gaussian(100, &mut rng)).collect();
        let bg = MultiChannelSeries::from_columns(cols, (0..4).map(|i| format!("z{i}")).collect())
            .unwrap();
        let scores = static_pca_scores(&bg, 4).unwrap();
        let z = bg.centered();
        let cov = (z.transpose() * &z) / 100.0;
        let eig = hermitian_eig(&ComplexMatrix::from_real_symmetric(&cov).unwrap()).unwrap();
        for t in 0..100 {
            for c in 0..4 {
                let rec: f64 = (0..4)
                    .map(|j| eig.vectors[(c, j)].re * scores.get(t, j))
                    .sum();
                assert!((rec - z[(t, c)]).abs() < 1e-8);
            }
        }
        let v: f64 = scores.explained_variance.iter().sum();
        assert!((v - 1.0).abs() < 1e-12);
    }
}
