//! Class-conditional Gaussian models over embedding vectors and the
//! log-likelihood-ratio (LLR) score used to judge how well a sample fits the
//! training distribution.
//!
//! Each class `c` is summarized by its center and biased covariance, both
//! computed in closed form from the training embeddings. For an input `x` the
//! score is the best class log-density minus the mean log-density of the `k`
//! strongest competing classes. Low LLR means the sample sits far from its
//! predicted class relative to the others, i.e. a high OOD score.

use std::collections::{BTreeMap, HashMap};
use std::f64::consts::PI;
use std::fs;
use std::path::Path;

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::manifest::EmbeddingTable;
use crate::quantile::nearest_rank_quantile_f64;

pub const DEFAULT_SHRINKAGE: f64 = 1e-3;
pub const MAX_DEFAULT_K: usize = 10;
/// Lower bound on the ridge added to every covariance diagonal.
pub const COVARIANCE_FLOOR: f64 = 1e-6;
const MODEL_FORMAT: &str = "fairset-ood";
const MODEL_VERSION: u32 = 1;

/// One fitted class: center, regularized covariance and its Cholesky factor.
#[derive(Debug, Clone, PartialEq)]
pub struct GaussianClassModel {
    class_id: u32,
    sample_count: usize,
    mu: DVector<f64>,
    sigma: DMatrix<f64>,
    chol_lower: DMatrix<f64>,
    log_det: f64,
}

impl GaussianClassModel {
    /// Builds a class model from a center and a symmetric positive-definite
    /// covariance (row-major), factorizing it once.
    pub fn new(class_id: u32, mu: Vec<f64>, sigma: Vec<f64>, sample_count: usize) -> Result<Self> {
        let d = mu.len();
        if d == 0 || sigma.len() != d * d {
            return Err(Error::data(format!(
                "class {class_id}: covariance has {} entries for dim {d}",
                sigma.len()
            )));
        }
        let sigma = DMatrix::from_row_slice(d, d, &sigma);
        Self::from_parts(class_id, DVector::from_vec(mu), sigma, sample_count)
    }

    fn from_parts(
        class_id: u32,
        mu: DVector<f64>,
        sigma: DMatrix<f64>,
        sample_count: usize,
    ) -> Result<Self> {
        if mu.iter().chain(sigma.iter()).any(|v| !v.is_finite()) {
            return Err(Error::Numeric(format!(
                "class {class_id}: non-finite parameters"
            )));
        }
        let d = mu.len();
        for i in 0..d {
            for j in 0..i {
                let (a, b) = (sigma[(i, j)], sigma[(j, i)]);
                if (a - b).abs() > 1e-12 * a.abs().max(b.abs()).max(1.0) {
                    return Err(Error::Numeric(format!(
                        "class {class_id}: covariance is not symmetric"
                    )));
                }
            }
        }
        let chol = nalgebra::Cholesky::new(sigma.clone()).ok_or_else(|| {
            Error::Numeric(format!(
                "class {class_id}: degenerate class covariance (Cholesky factorization failed)"
            ))
        })?;
        let chol_lower = chol.l();
        let log_det = 2.0 * chol_lower.diagonal().iter().map(|v| v.ln()).sum::<f64>();
        Ok(GaussianClassModel {
            class_id,
            sample_count,
            mu,
            sigma,
            chol_lower,
            log_det,
        })
    }

    pub fn class_id(&self) -> u32 {
        self.class_id
    }

    pub fn sample_count(&self) -> usize {
        self.sample_count
    }

    pub fn dim(&self) -> usize {
        self.mu.len()
    }

    pub fn mu(&self) -> &DVector<f64> {
        &self.mu
    }

    pub fn sigma(&self) -> &DMatrix<f64> {
        &self.sigma
    }

    pub fn chol_lower(&self) -> &DMatrix<f64> {
        &self.chol_lower
    }

    pub fn log_det(&self) -> f64 {
        self.log_det
    }

    /// Squared Mahalanobis distance `(x-mu)^T Sigma^-1 (x-mu)` via one
    /// triangular solve against the cached factor.
    pub fn mahalanobis_sq(&self, x: &[f64]) -> Result<f64> {
        if x.len() != self.dim() {
            return Err(Error::data(format!(
                "dimension mismatch: got {}, model has {}",
                x.len(),
                self.dim()
            )));
        }
        let mut z =
            DVector::from_iterator(x.len(), x.iter().zip(self.mu.iter()).map(|(a, m)| a - m));
        if !self.chol_lower.solve_lower_triangular_mut(&mut z) {
            return Err(Error::Numeric(format!(
                "class {}: singular factor",
                self.class_id
            )));
        }
        Ok(z.norm_squared())
    }

    /// Multivariate normal log-density at `x`.
    pub fn log_density(&self, x: &[f64]) -> Result<f64> {
        let d = self.dim() as f64;
        let m = self.mahalanobis_sq(x)?;
        Ok(-0.5 * d * (2.0 * PI).ln() - 0.5 * self.log_det - 0.5 * m)
    }
}

/// Biased (1/n) center and covariance of the given rows.
pub fn class_moments(rows: &[&[f32]]) -> (DVector<f64>, DMatrix<f64>) {
    let n = rows.len();
    let d = rows.first().map_or(0, |r| r.len());
    let data = DMatrix::from_fn(n, d, |i, j| f64::from(rows[i][j]));
    let mu = data.row_mean().transpose();
    let centered = DMatrix::from_fn(n, d, |i, j| data[(i, j)] - mu[j]);
    let cov = centered.tr_mul(&centered) / n as f64;
    (mu, cov)
}

/// Which class is left out of the competing set when computing an LLR.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Contrast {
    /// Exclude the arg-max class (no ground truth, e.g. augmentations).
    Predicted,
    /// Exclude the given ground-truth class.
    Label(u32),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct OodConfig {
    /// Size of the competing set; `None` means `min(10, classes - 1)`.
    pub k: Option<usize>,
    pub shrinkage: f64,
}

impl Default for OodConfig {
    fn default() -> Self {
        OodConfig {
            k: None,
            shrinkage: DEFAULT_SHRINKAGE,
        }
    }
}

impl OodConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.shrinkage >= 0.0 && self.shrinkage.is_finite()) {
            return Err(Error::config(format!(
                "shrinkage {} must be finite and >= 0",
                self.shrinkage
            )));
        }
        if self.k == Some(0) {
            return Err(Error::config("k must be at least 1"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LlrScore {
    pub id: String,
    pub llr: f64,
    pub predicted_class: u32,
}

#[derive(Debug, Clone, PartialEq)]
pub struct OodModel {
    classes: Vec<GaussianClassModel>,
    dim: usize,
    k: usize,
    shrinkage: f64,
    train_llr: Vec<f64>,
}

impl OodModel {
    /// Assembles a model from already fitted classes. Classes are kept
    /// sorted by id; `train_llr` may be empty.
    pub fn from_classes(
        mut classes: Vec<GaussianClassModel>,
        k: usize,
        shrinkage: f64,
        train_llr: Vec<f64>,
    ) -> Result<Self> {
        let dim = classes
            .first()
            .map(|c| c.dim())
            .ok_or_else(|| Error::data("model has no classes"))?;
        if classes.iter().any(|c| c.dim() != dim) {
            return Err(Error::data("classes differ in dimension"));
        }
        classes.sort_by_key(|c| c.class_id);
        if classes.windows(2).any(|w| w[0].class_id == w[1].class_id) {
            return Err(Error::data("duplicate class id"));
        }
        if k == 0 || k > classes.len() - 1 {
            return Err(Error::config(format!(
                "k = {k} exceeds class count - 1 ({})",
                classes.len() as i64 - 1
            )));
        }
        if train_llr.iter().any(|v| !v.is_finite()) {
            return Err(Error::data("train_llr contains non-finite values"));
        }
        Ok(OodModel {
            classes,
            dim,
            k,
            shrinkage,
            train_llr,
        })
    }

    pub fn classes(&self) -> &[GaussianClassModel] {
        &self.classes
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn k(&self) -> usize {
        self.k
    }

    pub fn shrinkage(&self) -> f64 {
        self.shrinkage
    }

    pub fn train_llr(&self) -> &[f64] {
        &self.train_llr
    }

    /// Per-class log-densities, in class id order.
    pub fn log_densities(&self, x: &[f64]) -> Result<Vec<f64>> {
        self.classes.iter().map(|c| c.log_density(x)).collect()
    }

    pub fn llr(&self, x: &[f64]) -> Result<(f64, u32)> {
        self.llr_with(x, Contrast::Predicted)
    }

    /// LLR of `x` and the predicted (arg-max, smallest id on ties) class.
    pub fn llr_with(&self, x: &[f64], contrast: Contrast) -> Result<(f64, u32)> {
        let f = self.log_densities(x)?;
        let mut best = 0;
        for (i, &v) in f.iter().enumerate() {
            if v > f[best] {
                best = i;
            }
        }
        let excluded = match contrast {
            Contrast::Predicted => best,
            Contrast::Label(label) => self
                .classes
                .iter()
                .position(|c| c.class_id == label)
                .ok_or_else(|| Error::data(format!("label {label} is not a model class")))?,
        };
        let mut others: Vec<usize> = (0..f.len()).filter(|&i| i != excluded).collect();
        // Descending density; stable sort keeps id order on ties.
        others.sort_by(|&a, &b| f[b].total_cmp(&f[a]));
        let contrast_mean = others[..self.k].iter().map(|&i| f[i]).sum::<f64>() / self.k as f64;
        let llr = f[best] - contrast_mean;
        if !llr.is_finite() {
            return Err(Error::Numeric(format!("non-finite LLR ({llr})")));
        }
        Ok((llr, self.classes[best].class_id))
    }

    /// Scores every row of `table`, in row order.
    pub fn score_batch(&self, table: &EmbeddingTable) -> Result<Vec<LlrScore>> {
        if table.is_empty() {
            return Ok(Vec::new());
        }
        if table.dim() != self.dim {
            return Err(Error::data(format!(
                "embedding dim {} does not match model dim {}",
                table.dim(),
                self.dim
            )));
        }
        (0..table.len())
            .into_par_iter()
            .map(|i| {
                let id = &table.ids()[i];
                let x: Vec<f64> = table.row(i).iter().map(|&v| f64::from(v)).collect();
                let (llr, predicted_class) = self
                    .llr(&x)
                    .map_err(|e| Error::data(format!("scoring {id:?}: {e}")))?;
                Ok(LlrScore {
                    id: id.clone(),
                    llr,
                    predicted_class,
                })
            })
            .collect()
    }

    /// Nearest-rank quantile of the training LLR distribution.
    pub fn train_quantile(&self, q: f64) -> Result<f64> {
        if self.train_llr.is_empty() {
            return Err(Error::data("model carries no training LLR scores"));
        }
        nearest_rank_quantile_f64(&self.train_llr, q)
    }

    pub fn to_file(&self, meta: Option<serde_json::Value>) -> OodModelFile {
        OodModelFile {
            format: MODEL_FORMAT.to_string(),
            version: MODEL_VERSION,
            dim: self.dim,
            k: self.k,
            shrinkage: self.shrinkage,
            classes: self
                .classes
                .iter()
                .map(|c| ClassEntry {
                    class_id: c.class_id,
                    sample_count: c.sample_count,
                    mu: c.mu.iter().copied().collect(),
                    sigma_lower: (0..self.dim)
                        .flat_map(|i| (0..=i).map(move |j| (i, j)))
                        .map(|(i, j)| c.sigma[(i, j)])
                        .collect(),
                })
                .collect(),
            train_llr: self.train_llr.clone(),
            meta,
        }
    }

    pub fn from_file(file: OodModelFile) -> Result<Self> {
        if file.format != MODEL_FORMAT || file.version != MODEL_VERSION {
            return Err(Error::data(format!(
                "unsupported model file {} v{}",
                file.format, file.version
            )));
        }
        let d = file.dim;
        let classes = file
            .classes
            .into_iter()
            .map(|c| {
                if c.mu.len() != d || c.sigma_lower.len() != d * (d + 1) / 2 {
                    return Err(Error::data(format!(
                        "class {}: parameter sizes do not match dim {d}",
                        c.class_id
                    )));
                }
                let mut sigma = DMatrix::zeros(d, d);
                let mut it = c.sigma_lower.iter();
                for i in 0..d {
                    for j in 0..=i {
                        let v = *it.next().expect("length checked");
                        sigma[(i, j)] = v;
                        sigma[(j, i)] = v;
                    }
                }
                GaussianClassModel::from_parts(
                    c.class_id,
                    DVector::from_vec(c.mu),
                    sigma,
                    c.sample_count,
                )
            })
            .collect::<Result<Vec<_>>>()?;
        Self::from_classes(classes, file.k, file.shrinkage, file.train_llr)
    }

    pub fn save(&self, path: impl AsRef<Path>, meta: Option<serde_json::Value>) -> Result<()> {
        let path = path.as_ref();
        let text = serde_json::to_string_pretty(&self.to_file(meta)).expect("model serializes");
        fs::write(path, text + "\n").map_err(|e| Error::io(path, e))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let file: OodModelFile = serde_json::from_str(&text)
            .map_err(|e| Error::data(format!("{}: {e}", path.display())))?;
        Self::from_file(file)
    }
}

/// On-disk model document.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OodModelFile {
    pub format: String,
    pub version: u32,
    pub dim: usize,
    pub k: usize,
    pub shrinkage: f64,
    pub classes: Vec<ClassEntry>,
    pub train_llr: Vec<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub meta: Option<serde_json::Value>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassEntry {
    pub class_id: u32,
    pub sample_count: usize,
    pub mu: Vec<f64>,
    /// Row-major lower triangle of the regularized covariance.
    pub sigma_lower: Vec<f64>,
}

/// Fits one Gaussian per class and scores the training rows against the
/// result to populate the reference LLR distribution.
pub fn fit(
    embeddings: &EmbeddingTable,
    labels: &HashMap<String, u32>,
    config: &OodConfig,
) -> Result<OodModel> {
    config.validate()?;
    let mut by_class: BTreeMap<u32, Vec<&[f32]>> = BTreeMap::new();
    for (id, row) in embeddings.rows() {
        let class = labels
            .get(id)
            .ok_or_else(|| Error::data(format!("embedding {id:?} has no class label")))?;
        by_class.entry(*class).or_default().push(row);
    }
    if let Some((class, rows)) = by_class.iter().find(|(_, rows)| rows.len() < 2) {
        return Err(Error::data(format!(
            "class {class} has {} sample(s); at least 2 are required",
            rows.len()
        )));
    }
    let n_classes = by_class.len();
    let k = match config.k {
        Some(k) if k + 1 > n_classes => {
            return Err(Error::config(format!(
                "k = {k} exceeds class count - 1 ({})",
                n_classes as i64 - 1
            )))
        }
        Some(k) => k,
        None if n_classes < 2 => {
            return Err(Error::config(
                "at least two classes are required to form an LLR",
            ));
        }
        None => MAX_DEFAULT_K.min(n_classes - 1),
    };

    let d = embeddings.dim();
    let classes = by_class
        .into_par_iter()
        .map(|(class_id, rows)| {
            let (mu, mut sigma) = class_moments(&rows);
            let ridge = (config.shrinkage * sigma.trace() / d as f64).max(COVARIANCE_FLOOR);
            for i in 0..d {
                sigma[(i, i)] += ridge;
            }
            GaussianClassModel::from_parts(class_id, mu, sigma, rows.len())
        })
        .collect::<Result<Vec<_>>>()?;

    let model = OodModel::from_classes(classes, k, config.shrinkage, Vec::new())?;
    let train_llr = model
        .score_batch(embeddings)?
        .into_iter()
        .map(|s| s.llr)
        .collect();
    Ok(OodModel { train_llr, ..model })
}

/// Score table as `id,llr,predicted_class` rows.
pub fn scores_to_csv(scores: &[LlrScore]) -> String {
    let mut out = String::from("id,llr,predicted_class\n");
    for s in scores {
        out.push_str(&format!("{},{},{}\n", s.id, s.llr, s.predicted_class));
    }
    out
}

pub fn parse_scores(text: &str) -> Result<Vec<LlrScore>> {
    let mut reader = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .from_reader(text.as_bytes());
    let header = reader.headers().map_err(|e| Error::Parse {
        line: 1,
        message: e.to_string(),
    })?;
    if header.iter().ne(["id", "llr", "predicted_class"]) {
        return Err(Error::Parse {
            line: 1,
            message: "header must be id,llr,predicted_class".into(),
        });
    }
    reader
        .deserialize::<LlrScore>()
        .enumerate()
        .map(|(i, row)| {
            let s = row.map_err(|e| Error::Parse {
                line: i + 2,
                message: e.to_string(),
            })?;
            if !s.llr.is_finite() {
                return Err(Error::Parse {
                    line: i + 2,
                    message: format!("llr of {:?} is not finite", s.id),
                });
            }
            Ok(s)
        })
        .collect()
}

pub fn load_scores(path: impl AsRef<Path>) -> Result<Vec<LlrScore>> {
    let path = path.as_ref();
    parse_scores(&fs::read_to_string(path).map_err(|e| Error::io(path, e))?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    fn unit(class_id: u32, mu: Vec<f64>) -> GaussianClassModel {
        let d = mu.len();
        let mut sigma = vec![0.0; d * d];
        for i in 0..d {
            sigma[i * d + i] = 1.0;
        }
        GaussianClassModel::new(class_id, mu, sigma, 10).unwrap()
    }

    fn table(rows: &[(&str, Vec<f32>)]) -> EmbeddingTable {
        EmbeddingTable::from_rows(
            rows.iter().map(|(id, _)| id.to_string()).collect(),
            &rows.iter().map(|(_, r)| r.clone()).collect::<Vec<_>>(),
        )
        .unwrap()
    }

    #[test]
    fn standard_normal_at_mean() {
        let m = unit(0, vec![0.0]);
        assert_abs_diff_eq!(
            m.log_density(&[0.0]).unwrap(),
            -0.918_938_533_204_672_7,
            epsilon = 1e-12
        );
    }

    #[test]
    fn identity_covariance_in_two_dims() {
        let m = unit(0, vec![0.0, 0.0]);
        let expected = -(2.0 * PI).ln() - 1.0;
        assert_abs_diff_eq!(
            m.log_density(&[1.0, 1.0]).unwrap(),
            expected,
            epsilon = 1e-12
        );
        assert_abs_diff_eq!(expected, -2.837_877, epsilon = 1e-6);
    }

    #[test]
    fn diagonal_covariance() {
        let m = GaussianClassModel::new(0, vec![0.0, 0.0], vec![4.0, 0.0, 0.0, 1.0], 3).unwrap();
        // -log(2 pi) - 0.5 log 4 - 0.5 * (4/4)
        assert_abs_diff_eq!(
            m.log_density(&[2.0, 0.0]).unwrap(),
            -3.031_024_246_969_290_8,
            epsilon = 1e-12
        );
        assert_abs_diff_eq!(m.log_det(), 4.0f64.ln(), epsilon = 1e-14);
        assert!(m.log_density(&[1.0]).is_err());
    }

    #[test]
    fn factor_reconstructs_covariance() {
        let m = GaussianClassModel::new(
            0,
            vec![0.0; 3],
            vec![4.0, 2.0, 0.6, 2.0, 5.0, 1.0, 0.6, 1.0, 3.0],
            1,
        )
        .unwrap();
        let l = m.chol_lower();
        let rebuilt = l * l.transpose();
        let rel = (&rebuilt - m.sigma()).norm() / m.sigma().norm();
        assert!(rel < 1e-12);
        assert!(GaussianClassModel::new(0, vec![0.0; 2], vec![1.0, 2.0, 2.0, 1.0], 1).is_err());
    }

    #[test]
    fn biased_moments_of_square_corners() {
        let rows: Vec<&[f32]> = vec![&[0.0, 0.0], &[2.0, 0.0], &[0.0, 2.0], &[2.0, 2.0]];
        let (mu, cov) = class_moments(&rows);
        assert_eq!(mu.as_slice(), &[1.0, 1.0]);
        assert_eq!(cov, DMatrix::from_row_slice(2, 2, &[1.0, 0.0, 0.0, 1.0]));
    }

    #[test]
    fn fit_regularizes_with_trace_shrinkage() {
        let t = table(&[
            ("a", vec![0.0, 0.0]),
            ("b", vec![2.0, 0.0]),
            ("c", vec![0.0, 2.0]),
            ("d", vec![2.0, 2.0]),
            ("e", vec![10.0, 10.0]),
            ("f", vec![12.0, 10.0]),
        ]);
        let labels: HashMap<String, u32> =
            [("a", 1), ("b", 1), ("c", 1), ("d", 1), ("e", 2), ("f", 2)]
                .into_iter()
                .map(|(id, c)| (id.to_string(), c))
                .collect();
        let model = fit(
            &t,
            &labels,
            &OodConfig {
                k: None,
                shrinkage: 0.5,
            },
        )
        .unwrap();
        assert_eq!(model.k(), 1);
        let c1 = &model.classes()[0];
        assert_eq!(c1.mu().as_slice(), &[1.0, 1.0]);
        // trace 2, d 2 -> ridge 0.5
        assert_abs_diff_eq!(c1.sigma()[(0, 0)], 1.5, epsilon = 1e-15);
        assert_eq!(c1.sigma()[(0, 1)], 0.0);
        assert_eq!(model.train_llr().len(), 6);
    }

    #[test]
    fn identical_samples_survive_through_the_floor() {
        let t = table(&[
            ("a", vec![1.0, 1.0]),
            ("b", vec![1.0, 1.0]),
            ("c", vec![3.0, 1.0]),
            ("d", vec![3.0, 1.0]),
        ]);
        let labels: HashMap<String, u32> = [("a", 0), ("b", 0), ("c", 1), ("d", 1)]
            .into_iter()
            .map(|(i, c)| (i.to_string(), c))
            .collect();
        let model = fit(&t, &labels, &OodConfig::default()).unwrap();
        assert_abs_diff_eq!(
            model.classes()[0].sigma()[(0, 0)],
            COVARIANCE_FLOOR,
            epsilon = 1e-18
        );
    }

    #[test]
    fn fit_preconditions() {
        let t = table(&[("a", vec![0.0]), ("b", vec![1.0]), ("c", vec![5.0])]);
        let one_class: HashMap<String, u32> =
            ["a", "b", "c"].iter().map(|i| (i.to_string(), 0)).collect();
        let err = fit(
            &t,
            &one_class,
            &OodConfig {
                k: Some(1),
                shrinkage: 1e-3,
            },
        )
        .unwrap_err();
        assert!(err.to_string().contains("exceeds class count - 1"), "{err}");

        let lonely: HashMap<String, u32> = [("a", 0), ("b", 0), ("c", 1)]
            .into_iter()
            .map(|(i, c)| (i.to_string(), c))
            .collect();
        assert!(fit(&t, &lonely, &OodConfig::default()).is_err());

        let partial: HashMap<String, u32> = [("a".to_string(), 0)].into();
        assert!(fit(&t, &partial, &OodConfig::default()).is_err());
    }

    #[test]
    fn llr_of_two_separated_classes() {
        let model = OodModel::from_classes(
            vec![unit(0, vec![0.0]), unit(1, vec![10.0])],
            1,
            0.0,
            vec![],
        )
        .unwrap();
        let f = model.log_densities(&[0.0]).unwrap();
        assert_abs_diff_eq!(f[0], -0.918_938_533_204_672_7, epsilon = 1e-12);
        assert_abs_diff_eq!(f[1], -50.918_938_533_204_67, epsilon = 1e-12);
        let (llr, predicted) = model.llr(&[0.0]).unwrap();
        assert_abs_diff_eq!(llr, 50.0, epsilon = 1e-12);
        assert_eq!(predicted, 0);

        let (llr, predicted) = model.llr(&[5.0]).unwrap();
        assert_eq!(llr, 0.0);
        assert_eq!(predicted, 0);

        // Ground-truth contrast: labelled 1 while the prediction is 0, so the
        // competing set is the predicted class itself.
        let (llr, _) = model.llr_with(&[0.0], Contrast::Label(1)).unwrap();
        assert_eq!(llr, 0.0);
        let (llr, _) = model.llr_with(&[0.0], Contrast::Label(0)).unwrap();
        assert_abs_diff_eq!(llr, 50.0, epsilon = 1e-12);
        assert!(model.llr_with(&[0.0], Contrast::Label(7)).is_err());
    }

    #[test]
    fn identical_classes_give_zero_llr() {
        let classes = (0..3).map(|c| unit(c, vec![1.0, -2.0])).collect();
        let model = OodModel::from_classes(classes, 2, 0.0, vec![]).unwrap();
        for x in [[0.0, 0.0], [7.5, -3.0], [1.0, -2.0]] {
            assert_eq!(model.llr(&x).unwrap(), (0.0, 0));
        }
    }

    #[test]
    fn class_order_does_not_matter() {
        let a = vec![
            unit(3, vec![0.0, 1.0]),
            unit(1, vec![4.0, 0.0]),
            unit(2, vec![-2.0, 3.0]),
        ];
        let mut b = a.clone();
        b.reverse();
        let ma = OodModel::from_classes(a, 2, 0.0, vec![]).unwrap();
        let mb = OodModel::from_classes(b, 2, 0.0, vec![]).unwrap();
        for x in [[0.3, 0.2], [5.0, -1.0], [-2.0, 2.5]] {
            assert_eq!(ma.llr(&x).unwrap(), mb.llr(&x).unwrap());
        }
    }

    #[test]
    fn empty_batch_and_dim_mismatch() {
        let model = OodModel::from_classes(
            vec![unit(0, vec![0.0]), unit(1, vec![10.0])],
            1,
            0.0,
            vec![],
        )
        .unwrap();
        let empty = EmbeddingTable::new(vec![], 1, vec![]).unwrap();
        assert!(model.score_batch(&empty).unwrap().is_empty());
        let wide = table(&[("x", vec![0.0, 0.0])]);
        assert!(model.score_batch(&wide).is_err());
        assert!(model.train_quantile(0.5).is_err());
    }

    #[test]
    fn train_quantiles() {
        let llr: Vec<f64> = (1..=100).map(f64::from).collect();
        let model =
            OodModel::from_classes(vec![unit(0, vec![0.0]), unit(1, vec![10.0])], 1, 0.0, llr)
                .unwrap();
        assert_eq!(model.train_quantile(0.05).unwrap(), 5.0);
        assert_eq!(model.train_quantile(1.0).unwrap(), 100.0);
        assert_eq!(model.train_quantile(0.0).unwrap(), 1.0);
    }
    #[test]
    fn score_csv_round_trip() {
        let scores = vec![
            LlrScore {
                id: "a".into(),
                llr: 0.1 + 0.2,
                predicted_class: 3,
            },
            LlrScore {
                id: "b".into(),
                llr: -1e-300,
                predicted_class: 0,
            },
        ];
        let text = scores_to_csv(&scores);
        assert_eq!(parse_scores(&text).unwrap(), scores);
        assert!(parse_scores("id,score\n").is_err());
        assert!(parse_scores("id,llr,predicted_class\na,x,1\n").is_err());
        assert!(parse_scores("id,llr,predicted_class\na,inf,1\n").is_err());
    }
}
