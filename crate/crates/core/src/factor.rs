//! Nonnegative matrix factorization of the compound x target interaction matrix.
//!
//! Both trainers minimize
//!
//! ```text
//! J = 1/2 ||X - U V^T||_F^2 + lambda/2 * sum_{i<j} S_ij ||u_i - u_j||^2
//! ```
//!
//! with `U, V >= 0`, using multiplicative updates. Unstored entries of `X` are
//! zeros. With `D` the row sums of `S` the updates are
//!
//! ```text
//! U <- U * (X V + lambda S U) / (U V^T V + lambda D U + eps)
//! V <- V * (X^T U) / (V U^T U + eps)
//! ```
//!
//! and plain NMF is the `lambda = 0` case.

use std::collections::BTreeMap;
use std::io::{BufRead, BufReader};
use std::path::Path;

use ndarray::{Array2, Axis};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::corpus::{ActivityType, CompoundId, Corpus, TargetId};
use crate::error::{Error, Result};
use crate::simkit::SimilarityMatrix;

/// Activity values above this are encoded as weak interactions.
pub const ACTIVITY_CUTOFF_NM: f64 = 10_000.0;
pub const WEAK_INTERACTION: f64 = 1.0;

/// Map an IC50-style value in nM to a matrix entry: `(20000 - v) / 2000` on
/// `[0, 10000]` (so `[10, 5]`), and 1 above 10000.
pub fn transform_activity(value_nm: f64) -> Result<f64> {
    if !value_nm.is_finite() || value_nm < 0.0 {
        return Err(Error::InvalidActivityValue(value_nm));
    }
    if value_nm > ACTIVITY_CUTOFF_NM {
        Ok(WEAK_INTERACTION)
    } else {
        Ok((20_000.0 - value_nm) / 2_000.0)
    }
}

/// Sparse nonnegative compound x target matrix, stored row- and column-major.
#[derive(Debug, Clone, PartialEq)]
pub struct InteractionMatrix {
    rows: Vec<CompoundId>,
    cols: Vec<TargetId>,
    row_ptr: Vec<usize>,
    row_idx: Vec<usize>,
    row_val: Vec<f64>,
    col_ptr: Vec<usize>,
    col_idx: Vec<usize>,
    col_val: Vec<f64>,
}

fn compress(n: usize, mut entries: Vec<(usize, usize, f64)>) -> (Vec<usize>, Vec<usize>, Vec<f64>) {
    entries.sort_by_key(|a| (a.0, a.1));
    let mut ptr = vec![0; n + 1];
    for &(i, _, _) in &entries {
        ptr[i + 1] += 1;
    }
    for i in 0..n {
        ptr[i + 1] += ptr[i];
    }
    (ptr, entries.iter().map(|e| e.1).collect(), entries.iter().map(|e| e.2).collect())
}

impl InteractionMatrix {
    pub fn from_triplets(rows: Vec<CompoundId>, cols: Vec<TargetId>, triplets: Vec<(usize, usize, f64)>) -> Result<Self> {
        let (n, m) = (rows.len(), cols.len());
        let mut seen = std::collections::HashSet::new();
        for &(i, j, v) in &triplets {
            if i >= n || j >= m {
                return Err(Error::IndexOutOfRange(format!("entry ({i}, {j}) in a {n}x{m} matrix")));
            }
            if !(v.is_finite() && v >= 0.0) {
                return Err(Error::InvalidActivityValue(v));
            }
            if !seen.insert((i, j)) {
                return Err(Error::ShapeMismatch(format!("duplicate entry ({i}, {j})")));
            }
        }
        let transposed = triplets.iter().map(|&(i, j, v)| (j, i, v)).collect();
        let (row_ptr, row_idx, row_val) = compress(n, triplets);
        let (col_ptr, col_idx, col_val) = compress(m, transposed);
        Ok(InteractionMatrix {
            rows,
            cols,
            row_ptr,
            row_idx,
            row_val,
            col_ptr,
            col_idx,
            col_val,
        })
    }

    pub fn n_rows(&self) -> usize {
        self.rows.len()
    }

    pub fn n_cols(&self) -> usize {
        self.cols.len()
    }

    pub fn nnz(&self) -> usize {
        self.row_val.len()
    }

    pub fn row_ids(&self) -> &[CompoundId] {
        &self.rows
    }

    pub fn col_ids(&self) -> &[TargetId] {
        &self.cols
    }

    /// Stored (column, value) pairs of row `i`, columns ascending.
    pub fn row(&self, i: usize) -> impl Iterator<Item = (usize, f64)> + '_ {
        let r = self.row_ptr[i]..self.row_ptr[i + 1];
        self.row_idx[r.clone()].iter().copied().zip(self.row_val[r].iter().copied())
    }

    pub fn row_len(&self, i: usize) -> usize {
        self.row_ptr[i + 1] - self.row_ptr[i]
    }

    pub fn col(&self, j: usize) -> impl Iterator<Item = (usize, f64)> + '_ {
        let r = self.col_ptr[j]..self.col_ptr[j + 1];
        self.col_idx[r.clone()].iter().copied().zip(self.col_val[r].iter().copied())
    }

    /// Stored value, 0 when absent.
    pub fn get(&self, i: usize, j: usize) -> f64 {
        let r = self.row_ptr[i]..self.row_ptr[i + 1];
        match self.row_idx[r.clone()].binary_search(&j) {
            Ok(k) => self.row_val[r.start + k],
            Err(_) => 0.0,
        }
    }

    pub fn contains(&self, i: usize, j: usize) -> bool {
        let r = self.row_ptr[i]..self.row_ptr[i + 1];
        self.row_idx[r].binary_search(&j).is_ok()
    }

    /// All stored entries in row-major order.
    pub fn triplets(&self) -> Vec<(usize, usize, f64)> {
        (0..self.n_rows())
            .flat_map(|i| self.row(i).map(move |(j, v)| (i, j, v)))
            .collect()
    }

    /// Same shape with the given entries removed (set to zero).
    pub fn without(&self, removed: &[(usize, usize, f64)]) -> Result<Self> {
        let drop: std::collections::HashSet<(usize, usize)> = removed.iter().map(|&(i, j, _)| (i, j)).collect();
        let kept = self.triplets().into_iter().filter(|&(i, j, _)| !drop.contains(&(i, j))).collect();
        Self::from_triplets(self.rows.clone(), self.cols.clone(), kept)
    }

    pub fn frobenius_sq(&self) -> f64 {
        self.row_val.iter().map(|v| v * v).sum()
    }

    /// Mean over all `rows x cols` cells, unstored cells counting as zero.
    pub fn dense_mean(&self) -> f64 {
        let cells = (self.n_rows() * self.n_cols()) as f64;
        if cells == 0.0 {
            0.0
        } else {
            self.row_val.iter().sum::<f64>() / cells
        }
    }

    pub fn to_dense(&self) -> Array2<f64> {
        let mut d = Array2::zeros((self.n_rows(), self.n_cols()));
        for (i, j, v) in self.triplets() {
            d[[i, j]] = v;
        }
        d
    }
}

/// Interaction matrix over compounds and targets that have at least one record
/// of `activity_type`, entries transformed by [`transform_activity`].
pub fn build_interaction_matrix(corpus: &Corpus, activity_type: &ActivityType) -> Result<InteractionMatrix> {
    let records: Vec<_> = corpus
        .activities()
        .iter()
        .filter(|r| &r.activity_type == activity_type)
        .collect();
    if records.is_empty() {
        return Err(Error::NoInteractions);
    }
    let mut row_of = vec![usize::MAX; corpus.n_compounds()];
    let mut col_of = vec![usize::MAX; corpus.n_targets()];
    for r in &records {
        row_of[corpus.compound_idx(r.compound.as_str()).unwrap()] = 0;
        col_of[corpus.target_idx(r.target.as_str()).unwrap()] = 0;
    }
    let mut rows = Vec::new();
    for (c, slot) in row_of.iter_mut().enumerate() {
        if *slot == 0 {
            *slot = rows.len();
            rows.push(corpus.compound(c).clone());
        }
    }
    let mut cols = Vec::new();
    for (t, slot) in col_of.iter_mut().enumerate() {
        if *slot == 0 {
            *slot = cols.len();
            cols.push(corpus.targets()[t].clone());
        }
    }
    let triplets = records
        .iter()
        .map(|r| {
            let i = row_of[corpus.compound_idx(r.compound.as_str()).unwrap()];
            let j = col_of[corpus.target_idx(r.target.as_str()).unwrap()];
            Ok((i, j, transform_activity(r.value_nm)?))
        })
        .collect::<Result<Vec<_>>>()?;
    InteractionMatrix::from_triplets(rows, cols, triplets)
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainConfig {
    pub rank: usize,
    pub lambda: f64,
    pub max_iters: usize,
    pub rel_tol: f64,
    pub epsilon: f64,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            rank: 50,
            lambda: 0.1,
            max_iters: 200,
            rel_tol: 1e-5,
            epsilon: 1e-12,
            seed: 0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.rank == 0 || self.max_iters == 0 {
            return Err(Error::InvalidConfig("rank and max_iters must be positive".into()));
        }
        if !(self.lambda >= 0.0 && self.lambda.is_finite()) {
            return Err(Error::InvalidConfig(format!("lambda must be >= 0, got {}", self.lambda)));
        }
        if !(self.rel_tol > 0.0 && self.epsilon > 0.0) {
            return Err(Error::InvalidConfig("tolerance and epsilon must be positive".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FactorModel {
    pub rows: Vec<CompoundId>,
    pub cols: Vec<TargetId>,
    /// compounds x rank
    pub u: Array2<f64>,
    /// targets x rank
    pub v: Array2<f64>,
    pub config: TrainConfig,
    /// Objective before training followed by one value per iteration.
    pub trace: Vec<f64>,
    pub converged: bool,
    /// Free-form provenance, e.g. activity type and similarity source.
    pub meta: BTreeMap<String, String>,
}

impl FactorModel {
    pub fn iterations(&self) -> usize {
        self.trace.len().saturating_sub(1)
    }

    pub fn predict(&self, row: usize, col: usize) -> Result<f64> {
        if row >= self.u.nrows() || col >= self.v.nrows() {
            return Err(Error::IndexOutOfRange(format!(
                "({row}, {col}) in a {}x{} model",
                self.u.nrows(),
                self.v.nrows()
            )));
        }
        Ok(dot(self.u.row(row).as_slice().unwrap(), self.v.row(col).as_slice().unwrap()))
    }

    /// Predicted scores of one compound for every target.
    pub fn predict_row(&self, row: usize) -> Result<Vec<f64>> {
        if row >= self.u.nrows() {
            return Err(Error::IndexOutOfRange(format!("row {row} of {}", self.u.nrows())));
        }
        let u = self.u.row(row);
        let u = u.as_slice().unwrap();
        Ok(self.v.outer_iter().map(|v| dot(u, v.as_slice().unwrap())).collect())
    }

    /// Targets ranked by predicted score (descending, ties by column index),
    /// skipping columns for which `skip` returns true.
    pub fn ranked_targets(&self, row: usize, skip: impl Fn(usize) -> bool) -> Result<Vec<(usize, f64)>> {
        let mut scored: Vec<(usize, f64)> = self
            .predict_row(row)?
            .into_iter()
            .enumerate()
            .filter(|&(j, _)| !skip(j))
            .collect();
        scored.sort_by(|a, b| b.1.total_cmp(&a.1).then(a.0.cmp(&b.0)));
        Ok(scored)
    }

    pub fn row_index(&self, id: &str) -> Option<usize> {
        self.rows.iter().position(|r| r.as_str() == id)
    }

    pub fn save_tsv(&self, path: &Path) -> Result<()> {
        let f = |x: f64| format!("{x:.16e}");
        let mut out = String::from("format\trepurpose-factor-model\t1\n");
        let c = &self.config;
        out.push_str(&format!("config\trank\t{}\n", c.rank));
        out.push_str(&format!("config\tlambda\t{}\n", f(c.lambda)));
        out.push_str(&format!("config\tmax_iters\t{}\n", c.max_iters));
        out.push_str(&format!("config\trel_tol\t{}\n", f(c.rel_tol)));
        out.push_str(&format!("config\tepsilon\t{}\n", f(c.epsilon)));
        out.push_str(&format!("config\tseed\t{}\n", c.seed));
        out.push_str(&format!("converged\t{}\n", self.converged));
        for (k, v) in &self.meta {
            out.push_str(&format!("meta\t{k}\t{v}\n"));
        }
        for (t, j) in self.trace.iter().enumerate() {
            out.push_str(&format!("trace\t{t}\t{}\n", f(*j)));
        }
        for (i, r) in self.rows.iter().enumerate() {
            out.push_str(&format!("row\t{i}\t{r}\n"));
        }
        for (j, t) in self.cols.iter().enumerate() {
            out.push_str(&format!("col\t{j}\t{t}\n"));
        }
        for (name, m) in [("U", &self.u), ("V", &self.v)] {
            for (i, r) in m.outer_iter().enumerate() {
                out.push_str(&format!("{name}\t{i}"));
                for x in r {
                    out.push('\t');
                    out.push_str(&f(*x));
                }
                out.push('\n');
            }
        }
        crate::corpus::write_string(path, &out)
    }

    pub fn load_tsv(path: &Path) -> Result<FactorModel> {
        let bad = |message: String| Error::InvalidModel {
            path: path.to_path_buf(),
            message,
        };
        let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
        let mut config = TrainConfig::default();
        let mut converged = false;
        let mut meta = BTreeMap::new();
        let mut trace = Vec::new();
        let mut rows = Vec::new();
        let mut cols = Vec::new();
        let mut u_rows: Vec<Vec<f64>> = Vec::new();
        let mut v_rows: Vec<Vec<f64>> = Vec::new();
        let mut saw_format = false;
        for (n, line) in BufReader::new(file).lines().enumerate() {
            let line = line.map_err(|e| Error::io(path, e))?;
            if line.is_empty() {
                continue;
            }
            let fields: Vec<&str> = line.split('\t').collect();
            let field = |k: usize| {
                fields
                    .get(k)
                    .copied()
                    .ok_or_else(|| bad(format!("line {}: missing field {}", n + 1, k + 1)))
            };
            let num = |s: &str| -> Result<f64> {
                s.parse::<f64>().map_err(|_| bad(format!("line {}: bad number {s:?}", n + 1)))
            };
            let int = |s: &str| -> Result<usize> {
                s.parse::<usize>().map_err(|_| bad(format!("line {}: bad integer {s:?}", n + 1)))
            };
            match fields[0] {
                "format" => {
                    if field(1)? != "repurpose-factor-model" || field(2)? != "1" {
                        return Err(bad("unsupported format".into()));
                    }
                    saw_format = true;
                }
                "config" => {
                    let value = field(2)?;
                    match field(1)? {
                        "rank" => config.rank = int(value)?,
                        "lambda" => config.lambda = num(value)?,
                        "max_iters" => config.max_iters = int(value)?,
                        "rel_tol" => config.rel_tol = num(value)?,
                        "epsilon" => config.epsilon = num(value)?,
                        "seed" => {
                            config.seed = value.parse().map_err(|_| bad(format!("bad seed {value:?}")))?
                        }
                        other => return Err(bad(format!("unknown config key {other}"))),
                    }
                }
                "converged" => converged = field(1)? == "true",
                "meta" => {
                    meta.insert(field(1)?.to_string(), field(2)?.to_string());
                }
                "trace" => trace.push(num(field(2)?)?),
                "row" => rows.push(CompoundId::new(field(2)?)),
                "col" => cols.push(TargetId::new(field(2)?)),
                kind @ ("U" | "V") => {
                    let values = fields[2..].iter().map(|s| num(s)).collect::<Result<Vec<_>>>()?;
                    if values.len() != config.rank {
                        return Err(bad(format!("line {}: expected {} factors", n + 1, config.rank)));
                    }
                    if kind == "U" { u_rows.push(values) } else { v_rows.push(values) }
                }
                other => return Err(bad(format!("line {}: unknown record {other:?}", n + 1))),
            }
        }
        if !saw_format {
            return Err(bad("missing format line".into()));
        }
        if u_rows.len() != rows.len() || v_rows.len() != cols.len() {
            return Err(bad("factor row counts do not match the index maps".into()));
        }
        let to_array = |r: Vec<Vec<f64>>| {
            let n = r.len();
            Array2::from_shape_vec((n, config.rank), r.into_iter().flatten().collect())
                .map_err(|e| bad(e.to_string()))
        };
        Ok(FactorModel {
            rows,
            cols,
            u: to_array(u_rows)?,
            v: to_array(v_rows)?,
            config: config.clone(),
            trace,
            converged,
            meta,
        })
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn check_shapes(x: &InteractionMatrix, u: &Array2<f64>, v: &Array2<f64>, s: Option<&SimilarityMatrix>) -> Result<()> {
    if u.nrows() != x.n_rows() || v.nrows() != x.n_cols() || u.ncols() != v.ncols() {
        return Err(Error::ShapeMismatch(format!(
            "X is {}x{}, U is {}x{}, V is {}x{}",
            x.n_rows(),
            x.n_cols(),
            u.nrows(),
            u.ncols(),
            v.nrows(),
            v.ncols()
        )));
    }
    if let Some(s) = s {
        if s.len() != x.n_rows() {
            return Err(Error::ShapeMismatch(format!(
                "similarity over {} compounds, X has {} rows",
                s.len(),
                x.n_rows()
            )));
        }
    }
    Ok(())
}

/// Graph penalty `sum_{i<j} S_ij ||u_i - u_j||^2` (without the lambda/2 factor).
pub fn similarity_penalty(u: &Array2<f64>, s: &SimilarityMatrix) -> f64 {
    s.pairs()
        .map(|(i, j, w)| {
            let d: f64 = u
                .row(i)
                .iter()
                .zip(u.row(j).iter())
                .map(|(a, b)| (a - b) * (a - b))
                .sum();
            w * d
        })
        .sum()
}

/// Evaluate `J` with dense Frobenius semantics (unstored entries of `X` are 0).
pub fn objective(
    x: &InteractionMatrix,
    u: &Array2<f64>,
    v: &Array2<f64>,
    s: Option<&SimilarityMatrix>,
    lambda: f64,
) -> Result<f64> {
    check_shapes(x, u, v, s)?;
    // ||X - UV^T||^2 = sum_stored (x - p)^2 + (||UV^T||^2 - sum_stored p^2)
    let gram_u = u.t().dot(u);
    let gram_v = v.t().dot(v);
    let full: f64 = (&gram_u * &gram_v).sum();
    let (mut resid, mut stored_p2) = (0.0, 0.0);
    for i in 0..x.n_rows() {
        let ui = u.row(i);
        let ui = ui.as_slice().unwrap();
        for (j, val) in x.row(i) {
            let p = dot(ui, v.row(j).as_slice().unwrap());
            resid += (val - p) * (val - p);
            stored_p2 += p * p;
        }
    }
    let unstored = (full - stored_p2).max(0.0);
    let mut j = 0.5 * (resid + unstored);
    if let Some(s) = s {
        j += 0.5 * lambda * similarity_penalty(u, s);
    }
    Ok(j)
}

/// Analytic gradient of `J` with respect to `U`: `(UV^T - X)V + lambda (D - S) U`.
pub fn gradient_u(
    x: &InteractionMatrix,
    u: &Array2<f64>,
    v: &Array2<f64>,
    s: Option<&SimilarityMatrix>,
    lambda: f64,
) -> Result<Array2<f64>> {
    check_shapes(x, u, v, s)?;
    let mut g = u.dot(&v.t().dot(v)) - sparse_times(x, v);
    if let Some(s) = s {
        let degrees = s.degrees();
        let su = similarity_times(s, u);
        for i in 0..u.nrows() {
            for k in 0..u.ncols() {
                g[[i, k]] += lambda * (degrees[i] * u[[i, k]] - su[[i, k]]);
            }
        }
    }
    Ok(g)
}

/// `X * dense`, rows in parallel with a fixed per-row summation order.
fn sparse_times(x: &InteractionMatrix, dense: &Array2<f64>) -> Array2<f64> {
    let r = dense.ncols();
    let mut out = Array2::zeros((x.n_rows(), r));
    out.axis_iter_mut(Axis(0))
        .into_par_iter()
        .enumerate()
        .for_each(|(i, mut row)| {
            for (j, val) in x.row(i) {
                row.scaled_add(val, &dense.row(j));
            }
        });
    out
}

/// `X^T * dense`.
fn sparse_t_times(x: &InteractionMatrix, dense: &Array2<f64>) -> Array2<f64> {
    let r = dense.ncols();
    let mut out = Array2::zeros((x.n_cols(), r));
    out.axis_iter_mut(Axis(0))
        .into_par_iter()
        .enumerate()
        .for_each(|(j, mut row)| {
            for (i, val) in x.col(j) {
                row.scaled_add(val, &dense.row(i));
            }
        });
    out
}

fn similarity_times(s: &SimilarityMatrix, dense: &Array2<f64>) -> Array2<f64> {
    let mut out = Array2::zeros((s.len(), dense.ncols()));
    out.axis_iter_mut(Axis(0))
        .into_par_iter()
        .enumerate()
        .for_each(|(i, mut row)| {
            for (j, w) in s.neighbors(i) {
                row.scaled_add(w, &dense.row(j));
            }
        });
    out
}

fn multiplicative_step(base: &mut Array2<f64>, numer: &Array2<f64>, denom: &Array2<f64>, eps: f64) {
    ndarray::Zip::from(base)
        .and(numer)
        .and(denom)
        .for_each(|b, &n, &d| *b *= n / (d + eps));
}

fn init_factors(x: &InteractionMatrix, config: &TrainConfig) -> (Array2<f64>, Array2<f64>) {
    let mean = x.dense_mean();
    let scale = if mean > 0.0 { (mean / config.rank as f64).sqrt() } else { 1.0 };
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    // gen::<f64>() is in [0, 1); 1 - g is in (0, 1]
    let mut draw = |shape: (usize, usize)| Array2::from_shape_simple_fn(shape, || (1.0 - rng.gen::<f64>()) * scale);
    let u = draw((x.n_rows(), config.rank));
    let v = draw((x.n_cols(), config.rank));
    (u, v)
}

/// Plain NMF: minimize `1/2 ||X - UV^T||^2` by Lee-Seung multiplicative updates.
pub fn train_nmf(x: &InteractionMatrix, config: &TrainConfig) -> Result<FactorModel> {
    train(x, None, config)
}

/// NMF with a compound-similarity graph penalty on the rows of `U`.
pub fn train_csnmf(x: &InteractionMatrix, s: &SimilarityMatrix, config: &TrainConfig) -> Result<FactorModel> {
    if s.compounds() != x.row_ids() {
        return Err(Error::ShapeMismatch(
            "similarity matrix index differs from the interaction matrix rows".into(),
        ));
    }
    s.validate()?;
    train(x, Some(s), config)
}

/// Factors after initialization (iteration 0) and after every update.
pub type Observer<'a> = &'a mut dyn FnMut(usize, &Array2<f64>, &Array2<f64>);

/// Like [`train_nmf`] / [`train_csnmf`] but calls `observer` with the factors
/// at every iteration.
pub fn train_observed(
    x: &InteractionMatrix,
    s: Option<&SimilarityMatrix>,
    config: &TrainConfig,
    observer: Observer<'_>,
) -> Result<FactorModel> {
    if let Some(s) = s {
        if s.compounds() != x.row_ids() {
            return Err(Error::ShapeMismatch(
                "similarity matrix index differs from the interaction matrix rows".into(),
            ));
        }
        s.validate()?;
    }
    train_inner(x, s, config, Some(observer))
}

fn train(x: &InteractionMatrix, s: Option<&SimilarityMatrix>, config: &TrainConfig) -> Result<FactorModel> {
    train_inner(x, s, config, None)
}

fn train_inner(
    x: &InteractionMatrix,
    s: Option<&SimilarityMatrix>,
    config: &TrainConfig,
    mut observer: Option<Observer<'_>>,
) -> Result<FactorModel> {
    config.validate()?;
    let max_rank = x.n_rows().min(x.n_cols());
    if config.rank > max_rank {
        return Err(Error::RankTooLarge {
            rank: config.rank,
            max: max_rank,
        });
    }
    let lambda = if s.is_some() { config.lambda } else { 0.0 };
    let degrees = s.map(|s| s.degrees());
    let eps = config.epsilon;

    let (mut u, mut v) = init_factors(x, config);
    let mut trace = vec![objective(x, &u, &v, s, lambda)?];
    let mut converged = false;
    if let Some(obs) = observer.as_mut() {
        obs(0, &u, &v);
    }

    for iteration in 1..=config.max_iters {
        let mut numer = sparse_times(x, &v);
        let mut denom = u.dot(&v.t().dot(&v));
        if let (Some(s), Some(degrees)) = (s, &degrees) {
            numer.scaled_add(lambda, &similarity_times(s, &u));
            let mut du = u.clone();
            for (mut row, d) in du.outer_iter_mut().zip(degrees) {
                row *= *d;
            }
            denom.scaled_add(lambda, &du);
        }
        multiplicative_step(&mut u, &numer, &denom, eps);

        let numer = sparse_t_times(x, &u);
        let denom = v.dot(&u.t().dot(&u));
        multiplicative_step(&mut v, &numer, &denom, eps);

        if !(u.iter().all(|x| x.is_finite()) && v.iter().all(|x| x.is_finite())) {
            return Err(Error::NonFinite { iteration });
        }
        debug_assert!(u.iter().chain(v.iter()).all(|&x| x >= 0.0));
        if let Some(obs) = observer.as_mut() {
            obs(iteration, &u, &v);
        }

        let j = objective(x, &u, &v, s, lambda)?;
        if !j.is_finite() {
            return Err(Error::NonFinite { iteration });
        }
        let prev = *trace.last().unwrap();
        trace.push(j);
        if prev == 0.0 || (prev - j) / prev < config.rel_tol {
            converged = true;
            break;
        }
    }
    log::debug!(
        "trained rank {} lambda {} in {} iterations, J = {:.6e}",
        config.rank,
        lambda,
        trace.len() - 1,
        trace.last().unwrap()
    );

    Ok(FactorModel {
        rows: x.row_ids().to_vec(),
        cols: x.col_ids().to_vec(),
        u,
        v,
        config: config.clone(),
        trace,
        converged,
        meta: BTreeMap::new(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::{ActivityRecord, CompoundRecord};
    use ndarray::array;

    fn ids(n: usize, prefix: &str) -> Vec<String> {
        (0..n).map(|i| format!("{prefix}{i}")).collect()
    }

    fn matrix(dense: &Array2<f64>) -> InteractionMatrix {
        let mut t = vec![];
        for ((i, j), &v) in dense.indexed_iter() {
            if v != 0.0 {
                t.push((i, j, v));
            }
        }
        InteractionMatrix::from_triplets(
            ids(dense.nrows(), "c").iter().map(|s| CompoundId::new(s.as_str())).collect(),
            ids(dense.ncols(), "t").iter().map(|s| TargetId::new(s.as_str())).collect(),
            t,
        )
        .unwrap()
    }

    #[test]
    fn transform_endpoints() {
        assert_eq!(transform_activity(0.0).unwrap(), 10.0);
        assert_eq!(transform_activity(10_000.0).unwrap(), 5.0);
        assert_eq!(transform_activity(20_000.0).unwrap(), 1.0);
        assert_eq!(transform_activity(6_000.0).unwrap(), 7.0);
        assert!(transform_activity(-1.0).is_err());
        assert!(transform_activity(f64::NAN).is_err());
        assert!(transform_activity(f64::INFINITY).is_err());
    }

    fn act(c: &str, t: &str, ty: ActivityType, v: f64) -> ActivityRecord {
        ActivityRecord {
            compound: CompoundId::from(c),
            target: TargetId::from(t),
            activity_type: ty,
            value_nm: v,
        }
    }

    #[test]
    fn interaction_matrix_from_corpus() {
        let compounds = ["c1", "c2", "c3", "c4"]
            .iter()
            .map(|c| CompoundRecord { id: CompoundId::from(*c), smiles: None })
            .collect();
        let corpus = Corpus::from_records(
            compounds,
            vec![],
            vec![
                act("c1", "t1", ActivityType::Ic50, 2000.0),
                act("c1", "t1", ActivityType::Ic50, 4000.0),
                act("c2", "t2", ActivityType::Ic50, 50_000.0),
                act("c3", "t1", ActivityType::Ic50, 10_000.0),
                act("c3", "t2", ActivityType::Ic50, 0.5),
                act("c4", "t1", ActivityType::Ec50, 1.0),
            ],
        )
        .unwrap();
        let x = build_interaction_matrix(&corpus, &ActivityType::Ic50).unwrap();
        assert_eq!(x.row_ids().iter().map(|c| c.as_str()).collect::<Vec<_>>(), vec!["c1", "c2", "c3"]);
        assert_eq!(x.col_ids().iter().map(|c| c.as_str()).collect::<Vec<_>>(), vec!["t1", "t2"]);
        let expected = array![[9.0, 0.0], [0.0, 1.0], [5.0, 9.99975]];
        assert_eq!(x.to_dense(), expected);
        assert!(matches!(
            build_interaction_matrix(&corpus, &ActivityType::Ld50),
            Err(Error::NoInteractions)
        ));
    }

    #[test]
    fn objective_cases() {
        let u = array![[1.0, 0.0], [0.0, 1.0]];
        let v = array![[1.0, 0.0], [0.0, 1.0]];
        let x = matrix(&array![[1.0, 0.0], [0.0, 1.0]]);
        assert_eq!(objective(&x, &u, &v, None, 0.0).unwrap(), 0.0);

        // U = [[1,1],[0,1]], V = [[1,1],[1,0]] -> UV^T = [[2,1],[1,0]]; X = I.
        // residual [[1,1],[1,-1]] -> J = 1/2 * 4 = 2
        let u2 = array![[1.0, 1.0], [0.0, 1.0]];
        let v2 = array![[1.0, 1.0], [1.0, 0.0]];
        assert!((objective(&x, &u2, &v2, None, 0.0).unwrap() - 2.0).abs() < 1e-12);

        // S_01 = 0.5, lambda = 2: penalty 0.5 * ||(1,0)||^2 = 0.5; J += 2/2 * 0.5
        let s = SimilarityMatrix::from_pairs(x.row_ids().to_vec(), &[(0, 1, 0.5)], 0.0).unwrap();
        assert!((objective(&x, &u2, &v2, Some(&s), 2.0).unwrap() - 2.5).abs() < 1e-12);

        let same = array![[0.3, 0.7], [0.3, 0.7]];
        assert_eq!(similarity_penalty(&same, &s), 0.0);

        let bad = Array2::zeros((3, 2));
        assert!(matches!(objective(&x, &bad, &v, None, 0.0), Err(Error::ShapeMismatch(_))));
    }

    #[test]
    fn rank_one_recovery() {
        let a = array![1.0, 2.0, 0.5, 3.0, 1.5];
        let b = array![2.0, 1.0, 4.0, 0.5];
        let dense = Array2::from_shape_fn((5, 4), |(i, j)| a[i] * b[j]);
        let x = matrix(&dense);
        let config = TrainConfig { rank: 1, max_iters: 500, rel_tol: 1e-15, seed: 3, ..Default::default() };
        let m = train_nmf(&x, &config).unwrap();
        let j = *m.trace.last().unwrap();
        assert!(j < 1e-6 * x.frobenius_sq(), "J = {j}");
        for i in 0..5 {
            for t in 0..4 {
                assert!((m.predict(i, t).unwrap() - dense[[i, t]]).abs() < 1e-3);
            }
        }
    }

    #[test]
    fn zero_matrix_stays_nonnegative() {
        let x = InteractionMatrix::from_triplets(
            vec![CompoundId::from("a"), CompoundId::from("b")],
            vec![TargetId::from("t"), TargetId::from("s")],
            vec![],
        )
        .unwrap();
        let m = train_nmf(&x, &TrainConfig { rank: 2, ..Default::default() }).unwrap();
        assert!(m.u.iter().chain(m.v.iter()).all(|&v| v >= 0.0));
        assert!(*m.trace.last().unwrap() <= m.trace[0]);
        assert!(*m.trace.last().unwrap() < 1e-6);
    }

    #[test]
    fn rank_too_large() {
        let x = matrix(&array![[1.0, 2.0], [3.0, 4.0]]);
        assert!(matches!(
            train_nmf(&x, &TrainConfig { rank: 3, ..Default::default() }),
            Err(Error::RankTooLarge { rank: 3, max: 2 })
        ));
    }

    #[test]
    fn predict_cases() {
        let m = FactorModel {
            rows: vec![CompoundId::from("a"), CompoundId::from("b")],
            cols: vec![TargetId::from("t"), TargetId::from("s")],
            u: array![[1.0, 2.0], [0.0, 0.0]],
            v: array![[3.0, 4.0], [0.5, 0.25]],
            config: TrainConfig { rank: 2, ..Default::default() },
            trace: vec![],
            converged: false,
            meta: BTreeMap::new(),
        };
        assert_eq!(m.predict(0, 0).unwrap(), 11.0);
        assert_eq!(m.predict(0, 1).unwrap(), 1.0);
        assert_eq!(m.predict_row(1).unwrap(), vec![0.0, 0.0]);
        assert!(m.predict(2, 0).is_err());
        assert_eq!(m.ranked_targets(0, |_| false).unwrap(), vec![(0, 11.0), (1, 1.0)]);
        assert_eq!(m.ranked_targets(0, |j| j == 0).unwrap(), vec![(1, 1.0)]);
    }

    #[test]
    fn csnmf_rejects_mismatched_similarity() {
        let x = matrix(&array![[1.0, 2.0], [3.0, 4.0]]);
        let config = TrainConfig { rank: 1, ..Default::default() };
        let other = SimilarityMatrix::empty(vec![CompoundId::from("zz"), CompoundId::from("c1")]);
        assert!(matches!(train_csnmf(&x, &other, &config), Err(Error::ShapeMismatch(_))));
        let asym = SimilarityMatrix::from_entries(x.row_ids().to_vec(), vec![(0, 1, 0.3)]).unwrap();
        assert!(matches!(train_csnmf(&x, &asym, &config), Err(Error::AsymmetricSimilarity { .. })));
    }

    #[test]
    fn similarity_pulls_pairs_together() {
        // rows 0 and 1 are identical; both models start from the same seed
        let dense = array![
            [5.0, 9.0, 0.0, 1.0],
            [5.0, 9.0, 0.0, 1.0],
            [0.0, 1.0, 8.0, 6.0],
            [9.0, 0.0, 7.0, 0.0],
        ];
        let x = matrix(&dense);
        let s = SimilarityMatrix::from_pairs(x.row_ids().to_vec(), &[(0, 1, 1.0)], 0.0).unwrap();
        let dist = |m: &FactorModel| {
            m.u.row(0).iter().zip(m.u.row(1).iter()).map(|(a, b)| (a - b).powi(2)).sum::<f64>().sqrt()
        };
        for seed in 0..5 {
            let config = TrainConfig { rank: 2, lambda: 1.0, seed, ..Default::default() };
            let plain = train_csnmf(&x, &s, &TrainConfig { lambda: 0.0, ..config.clone() }).unwrap();
            let reg = train_csnmf(&x, &s, &config).unwrap();
            assert!(dist(&reg) < dist(&plain), "seed {seed}: {} vs {}", dist(&reg), dist(&plain));
            assert!(similarity_penalty(&reg.u, &s) <= similarity_penalty(&plain.u, &s));
        }
    }

    #[test]
    fn save_load_round_trip() {
        let x = matrix(&array![[1.0, 2.0, 0.0], [3.0, 0.0, 4.0], [0.0, 7.0, 1.0]]);
        let mut m = train_nmf(&x, &TrainConfig { rank: 2, seed: 9, max_iters: 20, ..Default::default() }).unwrap();
        m.meta.insert("activity_type".into(), "IC50".into());
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("model.tsv");
        m.save_tsv(&p).unwrap();
        let back = FactorModel::load_tsv(&p).unwrap();
        assert_eq!(back, m);
    }

    #[test]
    fn load_rejects_garbage() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("bad.tsv");
        std::fs::write(&p, "hello\tworld\n").unwrap();
        assert!(matches!(FactorModel::load_tsv(&p), Err(Error::InvalidModel { .. })));
    }
}
