//! Dataset representations, bounded domains, CSV/JSON ingestion, synthetic
//! generators and label-noise injection.
//!
//! Points and labels are row-major `Array2<f64>` matrices, one sample per row.
//! Every generator is a pure function of its arguments and seed.

use std::fs::File;
use std::io::{BufWriter, Read, Write};
use std::path::Path;

use ndarray::{concatenate, Array1, Array2, ArrayView1, Axis};
use rand::seq::index;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Seeded generator used throughout the crate.
pub fn rng_from_seed(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Axis-aligned box `[lower, upper]` over the input space.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "BoxRepr", into = "BoxRepr")]
pub struct DomainBox {
    lower: Vec<f64>,
    upper: Vec<f64>,
}

#[derive(Serialize, Deserialize)]
struct BoxRepr {
    lower: Vec<f64>,
    upper: Vec<f64>,
}

impl TryFrom<BoxRepr> for DomainBox {
    type Error = Error;
    fn try_from(r: BoxRepr) -> Result<Self> {
        DomainBox::new(r.lower, r.upper)
    }
}

impl From<DomainBox> for BoxRepr {
    fn from(b: DomainBox) -> Self {
        BoxRepr {
            lower: b.lower,
            upper: b.upper,
        }
    }
}

impl DomainBox {
    pub fn new(lower: Vec<f64>, upper: Vec<f64>) -> Result<Self> {
        if lower.is_empty() {
            return Err(Error::arg("domain needs at least one dimension"));
        }
        if lower.len() != upper.len() {
            return Err(Error::arg(format!(
                "domain bounds disagree in length ({} vs {})",
                lower.len(),
                upper.len()
            )));
        }
        for (d, (lo, hi)) in lower.iter().zip(&upper).enumerate() {
            if !(lo.is_finite() && hi.is_finite() && lo < hi) {
                return Err(Error::arg(format!(
                    "domain dimension {d}: need finite lower < upper, got [{lo}, {hi}]"
                )));
            }
        }
        Ok(Self { lower, upper })
    }

    /// The interval `[lower, upper]`.
    pub fn interval(lower: f64, upper: f64) -> Result<Self> {
        Self::new(vec![lower], vec![upper])
    }

    pub fn dim(&self) -> usize {
        self.lower.len()
    }

    pub fn lower(&self) -> &[f64] {
        &self.lower
    }

    pub fn upper(&self) -> &[f64] {
        &self.upper
    }

    pub fn width(&self, d: usize) -> f64 {
        self.upper[d] - self.lower[d]
    }

    pub fn widths(&self) -> Vec<f64> {
        (0..self.dim()).map(|d| self.width(d)).collect()
    }

    pub fn volume(&self) -> f64 {
        self.widths().iter().product()
    }

    /// Inclusive containment test.
    pub fn contains(&self, x: &[f64]) -> bool {
        x.len() == self.dim()
            && x
                .iter()
                .zip(self.lower.iter().zip(&self.upper))
                .all(|(v, (lo, hi))| *v >= *lo && *v <= *hi)
    }

    fn first_violation(&self, x: ArrayView1<f64>) -> Option<(usize, f64)> {
        x.iter()
            .enumerate()
            .find(|(d, v)| !(**v >= self.lower[*d] && **v <= self.upper[*d]))
            .map(|(d, v)| (d, *v))
    }

    /// Exact per-dimension min/max of the points.
    pub fn infer(points: &Array2<f64>) -> Result<Self> {
        if points.nrows() == 0 {
            return Err(Error::arg("cannot infer a domain from zero points"));
        }
        let mut lower = Vec::with_capacity(points.ncols());
        let mut upper = Vec::with_capacity(points.ncols());
        for col in points.columns() {
            let lo = col.iter().copied().fold(f64::INFINITY, f64::min);
            let hi = col.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            lower.push(lo);
            upper.push(hi);
        }
        Self::new(lower, upper).map_err(|e| {
            Error::arg(format!(
                "cannot infer domain ({e}); supply an explicit box for constant columns"
            ))
        })
    }
}

/// Input points inside a box together with their vector labels.
#[derive(Debug, Clone, PartialEq)]
pub struct LabeledDataset {
    points: Array2<f64>,
    labels: Array2<f64>,
    domain: DomainBox,
}

impl LabeledDataset {
    pub fn new(points: Array2<f64>, labels: Array2<f64>, domain: DomainBox) -> Result<Self> {
        if points.nrows() == 0 {
            return Err(Error::arg("dataset needs at least one row"));
        }
        if points.nrows() != labels.nrows() {
            return Err(Error::arg(format!(
                "{} points but {} labels",
                points.nrows(),
                labels.nrows()
            )));
        }
        if points.ncols() != domain.dim() {
            return Err(Error::arg(format!(
                "points have {} columns, domain has {} dimensions",
                points.ncols(),
                domain.dim()
            )));
        }
        if labels.ncols() == 0 {
            return Err(Error::arg("labels need at least one column"));
        }
        for (row, p) in points.rows().into_iter().enumerate() {
            if let Some((dim, value)) = domain.first_violation(p) {
                return Err(Error::Domain { row, dim, value });
            }
        }
        Ok(Self {
            points,
            labels,
            domain,
        })
    }

    pub fn len(&self) -> usize {
        self.points.nrows()
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn n_inputs(&self) -> usize {
        self.points.ncols()
    }

    pub fn n_outputs(&self) -> usize {
        self.labels.ncols()
    }

    pub fn points(&self) -> &Array2<f64> {
        &self.points
    }

    pub fn labels(&self) -> &Array2<f64> {
        &self.labels
    }

    pub fn domain(&self) -> &DomainBox {
        &self.domain
    }

    pub fn into_parts(self) -> (Array2<f64>, Array2<f64>, DomainBox) {
        (self.points, self.labels, self.domain)
    }

    /// Rows of `self` followed by rows of `other`. Domains must agree.
    pub fn concat(&self, other: &LabeledDataset) -> Result<Self> {
        if self.domain != other.domain {
            return Err(Error::arg("cannot concatenate datasets over different domains"));
        }
        if self.n_outputs() != other.n_outputs() {
            return Err(Error::arg("cannot concatenate datasets with different label widths"));
        }
        let points = concatenate(Axis(0), &[self.points.view(), other.points.view()])
            .expect("column counts checked by domain equality");
        let labels = concatenate(Axis(0), &[self.labels.view(), other.labels.view()])
            .expect("label widths checked");
        Ok(Self {
            points,
            labels,
            domain: self.domain.clone(),
        })
    }

    /// The rows at `indices`, in that order.
    pub fn select(&self, indices: &[usize]) -> Self {
        Self {
            points: self.points.select(Axis(0), indices),
            labels: self.labels.select(Axis(0), indices),
            domain: self.domain.clone(),
        }
    }

    /// Same points, new labels.
    pub fn with_labels(&self, labels: Array2<f64>) -> Result<Self> {
        Self::new(self.points.clone(), labels, self.domain.clone())
    }

    /// Seeded random split; the first returned set holds `round(train_fraction * N)` rows.
    pub fn split(&self, train_fraction: f64, seed: u64) -> Result<(Self, Self)> {
        if !(0.0..=1.0).contains(&train_fraction) {
            return Err(Error::arg("train fraction must lie in [0, 1]"));
        }
        let n = self.len();
        let n_train = (train_fraction * n as f64).round() as usize;
        if n_train == 0 || n_train == n {
            return Err(Error::arg("split leaves one side empty"));
        }
        let mut rng = rng_from_seed(seed);
        let perm = index::sample(&mut rng, n, n).into_vec();
        let (a, b) = perm.split_at(n_train);
        Ok((self.select(a), self.select(b)))
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string(&DatasetJson::from(self))?)
    }

    pub fn from_json(s: &str) -> Result<Self> {
        let raw: DatasetJson = serde_json::from_str(s)?;
        raw.try_into()
    }

    /// Writes inputs then labels, one sample per line, no header.
    pub fn write_csv(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let file = File::create(path).map_err(|e| Error::io(path, e))?;
        let mut w = BufWriter::new(file);
        self.write_csv_to(&mut w).map_err(|e| Error::io(path, e))
    }

    pub fn write_csv_to<W: Write>(&self, w: &mut W) -> std::io::Result<()> {
        for (p, l) in self.points.rows().into_iter().zip(self.labels.rows()) {
            let fields: Vec<String> = p.iter().chain(l.iter()).map(|v| v.to_string()).collect();
            writeln!(w, "{}", fields.join(","))?;
        }
        w.flush()
    }
}

#[derive(Serialize, Deserialize)]
struct DatasetJson {
    points: Vec<Vec<f64>>,
    labels: Vec<Vec<f64>>,
    domain: DomainBox,
}

impl From<&LabeledDataset> for DatasetJson {
    fn from(ds: &LabeledDataset) -> Self {
        DatasetJson {
            points: rows_to_vecs(&ds.points),
            labels: rows_to_vecs(&ds.labels),
            domain: ds.domain.clone(),
        }
    }
}

impl TryFrom<DatasetJson> for LabeledDataset {
    type Error = Error;
    fn try_from(raw: DatasetJson) -> Result<Self> {
        LabeledDataset::new(
            vecs_to_matrix(&raw.points)?,
            vecs_to_matrix(&raw.labels)?,
            raw.domain,
        )
    }
}

pub(crate) fn rows_to_vecs(m: &Array2<f64>) -> Vec<Vec<f64>> {
    m.rows().into_iter().map(|r| r.to_vec()).collect()
}

/// Stacks equally long rows into a matrix.
pub fn vecs_to_matrix(rows: &[Vec<f64>]) -> Result<Array2<f64>> {
    let ncols = rows.first().map_or(0, Vec::len);
    if let Some(i) = rows.iter().position(|r| r.len() != ncols) {
        return Err(Error::arg(format!(
            "ragged rows: row {i} has {} entries, expected {ncols}",
            rows[i].len()
        )));
    }
    let flat: Vec<f64> = rows.iter().flatten().copied().collect();
    Ok(Array2::from_shape_vec((rows.len(), ncols), flat).expect("shape checked"))
}

/// A dataset whose rows carry normalized training weights.
#[derive(Debug, Clone, PartialEq)]
pub struct WeightedDataset {
    base: LabeledDataset,
    weights: Array1<f64>,
}

impl WeightedDataset {
    pub const SUM_TOLERANCE: f64 = 1e-9;

    pub fn new(base: LabeledDataset, weights: Array1<f64>) -> Result<Self> {
        if weights.len() != base.len() {
            return Err(Error::arg(format!(
                "{} weights for {} rows",
                weights.len(),
                base.len()
            )));
        }
        if let Some(i) = weights.iter().position(|w| !(w.is_finite() && *w > 0.0)) {
            return Err(Error::arg(format!(
                "weight {i} is {} but must be strictly positive",
                weights[i]
            )));
        }
        let sum = weights.sum();
        if (sum - 1.0).abs() > Self::SUM_TOLERANCE {
            return Err(Error::arg(format!("weights sum to {sum}, expected 1")));
        }
        Ok(Self { base, weights })
    }

    /// Every row weighted `1/N`.
    pub fn uniform(base: LabeledDataset) -> Self {
        let n = base.len();
        Self {
            base,
            weights: Array1::from_elem(n, 1.0 / n as f64),
        }
    }

    pub fn base(&self) -> &LabeledDataset {
        &self.base
    }

    pub fn weights(&self) -> &Array1<f64> {
        &self.weights
    }

    pub fn len(&self) -> usize {
        self.base.len()
    }

    pub fn is_empty(&self) -> bool {
        false
    }
}

/// How `load_csv` obtains the domain box.
#[derive(Debug, Clone, PartialEq)]
pub enum DomainSpec {
    Infer,
    Explicit(DomainBox),
}

#[derive(Debug, Clone, Copy, Default)]
pub struct CsvOptions {
    pub has_header: bool,
}

/// Reads `n_inputs + n_outputs` numeric fields per row.
pub fn load_csv(
    path: impl AsRef<Path>,
    n_inputs: usize,
    n_outputs: usize,
    domain: DomainSpec,
    opts: CsvOptions,
) -> Result<LabeledDataset> {
    let path = path.as_ref();
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    read_csv(file, n_inputs, n_outputs, domain, opts)
}

/// Like [`load_csv`] over any reader. Row numbers in errors are 1-based data rows.
pub fn read_csv<R: Read>(
    reader: R,
    n_inputs: usize,
    n_outputs: usize,
    domain: DomainSpec,
    opts: CsvOptions,
) -> Result<LabeledDataset> {
    if n_inputs == 0 || n_outputs == 0 {
        return Err(Error::arg("need at least one input and one output column"));
    }
    let width = n_inputs + n_outputs;
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(opts.has_header)
        .flexible(true)
        .trim(csv::Trim::All)
        .from_reader(reader);
    let mut points = Vec::new();
    let mut labels = Vec::new();
    for (i, record) in rdr.records().enumerate() {
        let row = i + 1;
        let record = record.map_err(|e| Error::Parse {
            row,
            message: e.to_string(),
        })?;
        if record.len() != width {
            return Err(Error::Parse {
                row,
                message: format!("expected {width} fields, found {}", record.len()),
            });
        }
        let mut values = Vec::with_capacity(width);
        for field in record.iter() {
            let v: f64 = field.parse().map_err(|_| Error::Parse {
                row,
                message: format!("non-numeric field {field:?}"),
            })?;
            values.push(v);
        }
        labels.push(values.split_off(n_inputs));
        points.push(values);
    }
    if points.is_empty() {
        return Err(Error::Parse {
            row: 0,
            message: "no data rows".into(),
        });
    }
    let points = vecs_to_matrix(&points)?;
    let labels = vecs_to_matrix(&labels)?;
    let domain = match domain {
        DomainSpec::Infer => DomainBox::infer(&points)?,
        DomainSpec::Explicit(b) => b,
    };
    LabeledDataset::new(points, labels, domain)
}

/// `n` i.i.d. points uniform on the box.
pub fn uniform_sample(domain: &DomainBox, n: usize, seed: u64) -> Result<Array2<f64>> {
    if n == 0 {
        return Err(Error::arg("uniform_sample needs n >= 1"));
    }
    let mut rng = rng_from_seed(seed);
    Ok(uniform_with(domain, n, &mut rng))
}

pub(crate) fn uniform_with<R: Rng>(domain: &DomainBox, n: usize, rng: &mut R) -> Array2<f64> {
    let d = domain.dim();
    let mut out = Array2::zeros((n, d));
    for mut row in out.rows_mut() {
        for (j, v) in row.iter_mut().enumerate() {
            let u: f64 = rng.random();
            *v = (domain.lower[j] + domain.width(j) * u).min(domain.upper[j]);
        }
    }
    out
}

/// `n` equally spaced points on a 1-D domain, both endpoints included.
pub fn grid_sample(domain: &DomainBox, n: usize) -> Result<Array2<f64>> {
    if domain.dim() != 1 {
        return Err(Error::arg("grid_sample supports 1-D domains only"));
    }
    if n < 2 {
        return Err(Error::arg("grid_sample needs n >= 2"));
    }
    let (lo, hi) = (domain.lower[0], domain.upper[0]);
    let step = (hi - lo) / (n - 1) as f64;
    let mut out = Array2::from_shape_fn((n, 1), |(i, _)| lo + step * i as f64);
    out[[n - 1, 0]] = hi;
    Ok(out)
}

/// Nominal bounding box of the noiseless two-moons curves.
const MOONS_BOX: ([f64; 2], [f64; 2]) = ([-1.0, -0.5], [2.0, 1.0]);

/// Two interleaving half-circles of radius 1; class 0 is the upper arc
/// `(cos a, sin a)` and class 1 the lower arc `(1 - cos a, 0.5 - sin a)`,
/// angles evenly spaced on `[0, pi]`, plus isotropic Gaussian jitter.
///
/// Labels are a single `{0, 1}` column. The domain is the nominal box
/// widened, when jitter pushes points outside, to the exact data extent.
pub fn two_moons(n: usize, noise_sd: f64, seed: u64) -> Result<LabeledDataset> {
    if n == 0 || n % 2 != 0 {
        return Err(Error::arg(format!("two_moons needs an even positive n, got {n}")));
    }
    if !(noise_sd >= 0.0 && noise_sd.is_finite()) {
        return Err(Error::arg("noise_sd must be finite and non-negative"));
    }
    let half = n / 2;
    let mut rng = rng_from_seed(seed);
    let jitter = Normal::new(0.0, noise_sd.max(f64::MIN_POSITIVE)).expect("valid sd");
    let mut points = Array2::zeros((n, 2));
    let mut labels = Array2::zeros((n, 1));
    let denom = (half.max(2) - 1) as f64;
    for i in 0..half {
        let a = std::f64::consts::PI * i as f64 / denom;
        points[[i, 0]] = a.cos();
        points[[i, 1]] = a.sin();
        points[[half + i, 0]] = 1.0 - a.cos();
        points[[half + i, 1]] = 0.5 - a.sin();
        labels[[half + i, 0]] = 1.0;
    }
    if noise_sd > 0.0 {
        for v in points.iter_mut() {
            *v += jitter.sample(&mut rng);
        }
    }
    let (mut lower, mut upper) = (MOONS_BOX.0.to_vec(), MOONS_BOX.1.to_vec());
    for (d, col) in points.columns().into_iter().enumerate() {
        for v in col {
            lower[d] = lower[d].min(*v);
            upper[d] = upper[d].max(*v);
        }
    }
    LabeledDataset::new(points, labels, DomainBox::new(lower, upper)?)
}

/// Label layout detected for categorical data.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LabelEncoding {
    /// One column holding the class index.
    Integer,
    /// `num_classes` columns, exactly one of them 1.
    OneHot,
}

/// Class index of every row, plus the layout it was read from.
pub fn class_indices(
    labels: &Array2<f64>,
    num_classes: usize,
) -> Result<(Vec<usize>, LabelEncoding)> {
    if num_classes < 2 {
        return Err(Error::arg("need at least two classes"));
    }
    if labels.ncols() == 1 {
        let mut out = Vec::with_capacity(labels.nrows());
        for (i, v) in labels.column(0).iter().enumerate() {
            if v.fract() != 0.0 || *v < 0.0 || *v >= num_classes as f64 {
                return Err(Error::NotCategorical(format!(
                    "row {i}: {v} is not a class index below {num_classes}"
                )));
            }
            out.push(*v as usize);
        }
        return Ok((out, LabelEncoding::Integer));
    }
    if labels.ncols() == num_classes {
        let mut out = Vec::with_capacity(labels.nrows());
        for (i, row) in labels.rows().into_iter().enumerate() {
            let ones: Vec<usize> = row
                .iter()
                .enumerate()
                .filter(|(_, v)| **v == 1.0)
                .map(|(c, _)| c)
                .collect();
            let zeros = row.iter().filter(|v| **v == 0.0).count();
            if ones.len() != 1 || zeros != num_classes - 1 {
                return Err(Error::NotCategorical(format!("row {i} is not one-hot")));
            }
            out.push(ones[0]);
        }
        return Ok((out, LabelEncoding::OneHot));
    }
    Err(Error::NotCategorical(format!(
        "{} label columns fit neither integer nor {num_classes}-way one-hot layout",
        labels.ncols()
    )))
}

/// One-hot matrix for class indices.
pub fn one_hot(classes: &[usize], num_classes: usize) -> Array2<f64> {
    let mut out = Array2::zeros((classes.len(), num_classes));
    for (i, &c) in classes.iter().enumerate() {
        out[[i, c]] = 1.0;
    }
    out
}

fn encode(classes: &[usize], num_classes: usize, enc: LabelEncoding) -> Array2<f64> {
    match enc {
        LabelEncoding::Integer => {
            Array2::from_shape_fn((classes.len(), 1), |(i, _)| classes[i] as f64)
        }
        LabelEncoding::OneHot => one_hot(classes, num_classes),
    }
}

/// Reassigns exactly `round(p * N)` rows to a different class drawn
/// uniformly among the other classes. The label layout is preserved.
pub fn inject_label_noise(
    ds: &LabeledDataset,
    p: f64,
    num_classes: usize,
    seed: u64,
) -> Result<LabeledDataset> {
    if !(0.0..=1.0).contains(&p) {
        return Err(Error::arg(format!("noise fraction {p} outside [0, 1]")));
    }
    let (mut classes, enc) = class_indices(ds.labels(), num_classes)?;
    let n = ds.len();
    let flips = (p * n as f64).round() as usize;
    let mut rng = rng_from_seed(seed);
    let mut rows = index::sample(&mut rng, n, flips).into_vec();
    rows.sort_unstable();
    for i in rows {
        let shift = rng.random_range(1..num_classes);
        classes[i] = (classes[i] + shift) % num_classes;
    }
    ds.with_labels(encode(&classes, num_classes, enc))
}

/// Single-column CSV of `values`, one per line.
pub fn write_column_csv(path: impl AsRef<Path>, values: &[f64]) -> Result<()> {
    let path = path.as_ref();
    let mut body = String::with_capacity(values.len() * 12);
    for v in values {
        body.push_str(&v.to_string());
        body.push('\n');
    }
    std::fs::write(path, body).map_err(|e| Error::io(path, e))
}
