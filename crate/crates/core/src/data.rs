//! Samples, discrete distributions, dataset splits and the plain-text
//! dataset format.

use std::fmt::Write as _;
use std::ops::Range;
use std::path::Path;
use std::sync::Arc;

use rand::seq::index;
use rand::Rng;

use crate::error::{invalid, Error, Result};
use crate::rng::RandomSource;

/// An owned observation.
#[derive(Clone, Debug, PartialEq)]
pub enum Point {
    Real(Vec<f64>),
    /// 1-based category index.
    Categorical(u32),
}

/// A borrowed observation, as handed out by [`Sample::point`].
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum PointRef<'a> {
    Real(&'a [f64]),
    Categorical(u32),
}

impl PointRef<'_> {
    pub fn to_owned(self) -> Point {
        match self {
            PointRef::Real(v) => Point::Real(v.to_vec()),
            PointRef::Categorical(c) => Point::Categorical(c),
        }
    }
}

impl<'a> From<&'a Point> for PointRef<'a> {
    fn from(p: &'a Point) -> Self {
        match p {
            Point::Real(v) => PointRef::Real(v),
            Point::Categorical(c) => PointRef::Categorical(*c),
        }
    }
}

/// The observation space shared by all points of a sample.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Space {
    Real { dim: usize },
    /// Categories `1..=k`.
    Categorical { k: u32 },
}

#[derive(Debug)]
enum Store {
    Real { dim: usize, values: Vec<f64> },
    Categorical { k: u32, idx: Vec<u32> },
}

#[derive(Clone, Debug)]
enum View {
    Range(Range<usize>),
    Indices(Arc<[usize]>),
}

/// An immutable, ordered collection of points.
///
/// Cloning, slicing and subsampling share the underlying storage; a sample
/// is a view (range or index list) into it.
#[derive(Clone, Debug)]
pub struct Sample {
    store: Arc<Store>,
    view: View,
}

impl Sample {
    /// Real-valued sample from a row-major buffer of `values.len() / dim` points.
    pub fn real(dim: usize, values: Vec<f64>) -> Result<Self> {
        if dim == 0 {
            return Err(invalid("real points need dimension >= 1"));
        }
        if !values.len().is_multiple_of(dim) {
            return Err(invalid(format!(
                "buffer of {} values is not a multiple of dim {dim}",
                values.len()
            )));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("sample coordinates".into()));
        }
        let n = values.len() / dim;
        Ok(Self {
            store: Arc::new(Store::Real { dim, values }),
            view: View::Range(0..n),
        })
    }

    /// One-dimensional real sample.
    pub fn scalars(values: Vec<f64>) -> Result<Self> {
        Self::real(1, values)
    }

    /// Categorical sample over `1..=k`.
    pub fn categorical(k: u32, idx: Vec<u32>) -> Result<Self> {
        if k == 0 {
            return Err(invalid("categorical support size must be >= 1"));
        }
        if let Some(bad) = idx.iter().find(|&&c| c == 0 || c > k) {
            return Err(invalid(format!("category {bad} outside 1..={k}")));
        }
        let n = idx.len();
        Ok(Self {
            store: Arc::new(Store::Categorical { k, idx }),
            view: View::Range(0..n),
        })
    }

    pub fn from_points(points: &[Point]) -> Result<Self> {
        match points.first() {
            None => Err(invalid("cannot infer the space of an empty point list")),
            Some(Point::Real(first)) => {
                let dim = first.len();
                let mut values = Vec::with_capacity(points.len() * dim);
                for p in points {
                    match p {
                        Point::Real(v) if v.len() == dim => values.extend_from_slice(v),
                        _ => {
                            return Err(Error::IncompatiblePoints(
                                "mixed variants or dimensions".into(),
                            ))
                        }
                    }
                }
                Self::real(dim, values)
            }
            Some(Point::Categorical(_)) => {
                let mut idx = Vec::with_capacity(points.len());
                for p in points {
                    match p {
                        Point::Categorical(c) => idx.push(*c),
                        _ => return Err(Error::IncompatiblePoints("mixed variants".into())),
                    }
                }
                let k = idx.iter().copied().max().unwrap_or(1);
                Self::categorical(k, idx)
            }
        }
    }

    pub fn len(&self) -> usize {
        match &self.view {
            View::Range(r) => r.len(),
            View::Indices(ix) => ix.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn space(&self) -> Space {
        match &*self.store {
            Store::Real { dim, .. } => Space::Real { dim: *dim },
            Store::Categorical { k, .. } => Space::Categorical { k: *k },
        }
    }

    /// Position in the backing store of the `i`-th point of this view.
    pub fn position(&self, i: usize) -> usize {
        match &self.view {
            View::Range(r) => {
                assert!(i < r.len(), "index {i} out of range for sample of size {}", r.len());
                r.start + i
            }
            View::Indices(ix) => ix[i],
        }
    }

    pub fn point(&self, i: usize) -> PointRef<'_> {
        let pos = self.position(i);
        match &*self.store {
            Store::Real { dim, values } => PointRef::Real(&values[pos * dim..(pos + 1) * dim]),
            Store::Categorical { idx, .. } => PointRef::Categorical(idx[pos]),
        }
    }

    /// Real coordinates of point `i`; panics on categorical samples.
    pub fn real_point(&self, i: usize) -> &[f64] {
        match self.point(i) {
            PointRef::Real(v) => v,
            PointRef::Categorical(_) => panic!("real_point on a categorical sample"),
        }
    }

    pub fn iter(&self) -> impl Iterator<Item = PointRef<'_>> + '_ {
        (0..self.len()).map(move |i| self.point(i))
    }

    pub fn to_points(&self) -> Vec<Point> {
        self.iter().map(PointRef::to_owned).collect()
    }

    /// Sub-view of consecutive points.
    pub fn slice(&self, range: Range<usize>) -> Result<Self> {
        if range.start > range.end || range.end > self.len() {
            return Err(Error::InsufficientData {
                requested: range.end,
                available: self.len(),
            });
        }
        let view = match &self.view {
            View::Range(r) => View::Range(r.start + range.start..r.start + range.end),
            View::Indices(ix) => View::Indices(ix[range].into()),
        };
        Ok(Self {
            store: Arc::clone(&self.store),
            view,
        })
    }

    /// Sub-view at the given (view-relative) indices, in the given order.
    pub fn select(&self, indices: &[usize]) -> Result<Self> {
        let n = self.len();
        if let Some(&bad) = indices.iter().find(|&&i| i >= n) {
            return Err(Error::InsufficientData {
                requested: bad + 1,
                available: n,
            });
        }
        let positions: Arc<[usize]> = indices.iter().map(|&i| self.position(i)).collect();
        Ok(Self {
            store: Arc::clone(&self.store),
            view: View::Indices(positions),
        })
    }

    /// True if both samples view the same storage and share a position.
    pub fn overlaps(&self, other: &Sample) -> bool {
        if !Arc::ptr_eq(&self.store, &other.store) {
            return false;
        }
        match (&self.view, &other.view) {
            (View::Range(a), View::Range(b)) => a.start < b.end && b.start < a.end,
            _ => {
                let mut mine: Vec<usize> = (0..self.len()).map(|i| self.position(i)).collect();
                mine.sort_unstable();
                (0..other.len()).any(|j| mine.binary_search(&other.position(j)).is_ok())
            }
        }
    }

    /// Category histogram (`counts[c - 1]` = occurrences of category `c`).
    pub fn category_counts(&self) -> Option<Vec<u64>> {
        match &*self.store {
            Store::Categorical { k, idx } => {
                let mut counts = vec![0u64; *k as usize];
                for i in 0..self.len() {
                    counts[(idx[self.position(i)] - 1) as usize] += 1;
                }
                Some(counts)
            }
            Store::Real { .. } => None,
        }
    }

    /// Whether `self` and `other` live in the same space (real dims equal;
    /// categorical samples are always comparable).
    pub fn compatible_with(&self, other: &Sample) -> bool {
        match (self.space(), other.space()) {
            (Space::Real { dim: a }, Space::Real { dim: b }) => a == b,
            (Space::Categorical { .. }, Space::Categorical { .. }) => true,
            _ => false,
        }
    }
}

/// A probability mass function on categories `1..=k`.
#[derive(Clone, Debug, PartialEq)]
pub struct DiscreteDistribution {
    pmf: Vec<f64>,
    cdf: Vec<f64>,
}

impl DiscreteDistribution {
    pub fn new(pmf: Vec<f64>) -> Result<Self> {
        if pmf.is_empty() {
            return Err(Error::InvalidPmf("empty support".into()));
        }
        if let Some(bad) = pmf.iter().find(|p| !p.is_finite() || **p < 0.0) {
            return Err(Error::InvalidPmf(format!("entry {bad} is negative or non-finite")));
        }
        let total: f64 = pmf.iter().sum();
        if (total - 1.0).abs() > 1e-12 {
            return Err(Error::InvalidPmf(format!("entries sum to {total}, not 1")));
        }
        let cdf = pmf
            .iter()
            .scan(0.0, |acc, p| {
                *acc += p;
                Some(*acc)
            })
            .collect();
        Ok(Self { pmf, cdf })
    }

    pub fn uniform(k: usize) -> Result<Self> {
        if k == 0 {
            return Err(Error::InvalidPmf("empty support".into()));
        }
        Self::new(vec![1.0 / k as f64; k])
    }

    pub fn pmf(&self) -> &[f64] {
        &self.pmf
    }

    pub fn support_size(&self) -> usize {
        self.pmf.len()
    }

    /// One draw, as a 1-based category.
    pub fn draw<R: Rng + ?Sized>(&self, rng: &mut R) -> u32 {
        let u: f64 = rng.random::<f64>() * self.cdf[self.cdf.len() - 1];
        // First category whose cumulative mass exceeds u; zero-mass categories
        // repeat the previous cumulative value and are never selected.
        let i = self.cdf.partition_point(|&c| c <= u).min(self.pmf.len() - 1);
        (i + 1) as u32
    }

    pub fn sample_with<R: Rng + ?Sized>(&self, count: usize, rng: &mut R) -> Vec<u32> {
        (0..count).map(|_| self.draw(rng)).collect()
    }

    /// `(1 - nu) * self + nu * other`, pointwise.
    pub fn mix(&self, other: &DiscreteDistribution, nu: f64) -> Result<Self> {
        check_nu(nu)?;
        check_same_support(self, other)?;
        let pmf: Vec<f64> = self
            .pmf
            .iter()
            .zip(&other.pmf)
            .map(|(a, b)| (1.0 - nu) * a + nu * b)
            .collect();
        let total: f64 = pmf.iter().sum();
        Self::new(pmf.iter().map(|p| p / total).collect())
    }
}

fn check_nu(nu: f64) -> Result<()> {
    if !(0.0..=1.0).contains(&nu) {
        return Err(invalid(format!("mixture rate {nu} outside [0, 1]")));
    }
    Ok(())
}

fn check_same_support(a: &DiscreteDistribution, b: &DiscreteDistribution) -> Result<()> {
    if a.support_size() != b.support_size() {
        return Err(Error::SizeMismatch(format!(
            "supports of size {} and {}",
            a.support_size(),
            b.support_size()
        )));
    }
    Ok(())
}

/// `count` i.i.d. draws from `dist`.
pub fn sample_discrete(dist: &DiscreteDistribution, count: usize, rng: &RandomSource) -> Result<Sample> {
    if count == 0 {
        return Err(invalid("count must be >= 1"));
    }
    let mut r = rng.rng();
    Sample::categorical(dist.support_size() as u32, dist.sample_with(count, &mut r))
}

/// Draws from whichever of `px` / `py` a per-point `Bernoulli(nu)` coin selects.
pub(crate) fn mixture_with<R: Rng + ?Sized>(
    px: &DiscreteDistribution,
    py: &DiscreteDistribution,
    nu: f64,
    count: usize,
    rng: &mut R,
) -> Vec<u32> {
    (0..count)
        .map(|_| {
            if nu > 0.0 && (nu >= 1.0 || rng.random::<f64>() < nu) {
                py.draw(rng)
            } else {
                px.draw(rng)
            }
        })
        .collect()
}

/// `count` i.i.d. draws from `(1 - nu) * px + nu * py`.
pub fn sample_mixture(
    px: &DiscreteDistribution,
    py: &DiscreteDistribution,
    nu: f64,
    count: usize,
    rng: &RandomSource,
) -> Result<Sample> {
    check_nu(nu)?;
    check_same_support(px, py)?;
    if count == 0 {
        return Err(invalid("count must be >= 1"));
    }
    let mut r = rng.rng();
    Sample::categorical(px.support_size() as u32, mixture_with(px, py, nu, count, &mut r))
}

pub(crate) fn subsample_with<R: Rng + ?Sized>(s: &Sample, m: usize, rng: &mut R) -> Result<Sample> {
    if m > s.len() {
        return Err(Error::InsufficientData {
            requested: m,
            available: s.len(),
        });
    }
    let picks = index::sample(rng, s.len(), m).into_vec();
    s.select(&picks)
}

/// `m` distinct positions of `s`, uniform over m-subsets, in random order.
pub fn subsample_without_replacement(s: &Sample, m: usize, rng: &RandomSource) -> Result<Sample> {
    let mut r = rng.rng();
    subsample_with(s, m, &mut r)
}

/// Requested sizes for [`DatasetSplit::carve`].
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct SplitSizes {
    pub n_tr: usize,
    pub n_ev: usize,
    pub n_cal: usize,
    pub n_opt: usize,
    /// Take the evaluation pair from the first `n_ev` training points.
    pub eval_within_train: bool,
}

/// A pair of equally-sized samples, one per class.
#[derive(Clone, Debug)]
pub struct SamplePair {
    pub x: Sample,
    pub y: Sample,
}

/// Train / evaluation / calibration / threshold-optimization partition.
#[derive(Clone, Debug)]
pub struct DatasetSplit {
    pub train: SamplePair,
    pub eval: SamplePair,
    pub cal: SamplePair,
    pub opt: Option<SamplePair>,
    pub eval_within_train: bool,
}

impl DatasetSplit {
    /// Carve consecutive index ranges out of the two class pools.
    pub fn carve(x: &Sample, y: &Sample, sizes: SplitSizes) -> Result<Self> {
        let SplitSizes {
            n_tr,
            n_ev,
            n_cal,
            n_opt,
            eval_within_train,
        } = sizes;
        if eval_within_train && n_ev > n_tr {
            return Err(invalid(format!(
                "evaluation size {n_ev} exceeds training size {n_tr}"
            )));
        }
        let mut cursor = 0usize;
        let mut take = |n: usize| {
            let r = cursor..cursor + n;
            cursor += n;
            r
        };
        let tr = take(n_tr);
        let ev = if eval_within_train { 0..n_ev } else { take(n_ev) };
        let cal = take(n_cal);
        let opt = take(n_opt);
        let needed = opt.end;
        for s in [x, y] {
            if s.len() < needed {
                return Err(Error::InsufficientData {
                    requested: needed,
                    available: s.len(),
                });
            }
        }
        let pair = |r: Range<usize>| -> Result<SamplePair> {
            Ok(SamplePair {
                x: x.slice(r.clone())?,
                y: y.slice(r)?,
            })
        };
        Ok(Self {
            train: pair(tr)?,
            eval: pair(ev)?,
            cal: pair(cal)?,
            opt: if n_opt > 0 { Some(pair(opt)?) } else { None },
            eval_within_train,
        })
    }

    /// Assemble a split from existing pairs, rejecting calibration data that
    /// overlaps the training or evaluation pairs.
    pub fn new(
        train: SamplePair,
        eval: SamplePair,
        cal: SamplePair,
        opt: Option<SamplePair>,
    ) -> Result<Self> {
        let eval_within_train = eval.x.overlaps(&train.x) || eval.y.overlaps(&train.y);
        let split = Self {
            train,
            eval,
            cal,
            opt,
            eval_within_train,
        };
        if !split.calibration_is_disjoint() {
            return Err(Error::CalibrationOverlap);
        }
        Ok(split)
    }

    pub fn calibration_is_disjoint(&self) -> bool {
        let held_out = [&self.cal.x, &self.cal.y];
        let used = [&self.train.x, &self.train.y, &self.eval.x, &self.eval.y];
        !held_out
            .iter()
            .any(|c| used.iter().any(|u| c.overlaps(u)))
    }
}

/// Parse the plain-text dataset format: one point per line, real points as
/// comma-separated decimals, categorical points as bare integers, optional
/// `# dim=<d>` or `# k=<k>` header.
pub fn parse_dataset(text: &str) -> Result<Sample> {
    enum Header {
        None,
        Dim(usize),
        K(u32),
    }
    let mut header = Header::None;
    let mut rows: Vec<(usize, &str)> = Vec::new();
    for (lineno, raw) in text.lines().enumerate() {
        let line = raw.trim();
        if line.is_empty() {
            continue;
        }
        if let Some(rest) = line.strip_prefix('#') {
            let rest = rest.trim();
            let parse_err = |message: String| Error::Parse {
                line: lineno + 1,
                message,
            };
            if let Some(d) = rest.strip_prefix("dim=") {
                let d = d.trim().parse().map_err(|e| parse_err(format!("bad dim: {e}")))?;
                header = Header::Dim(d);
            } else if let Some(k) = rest.strip_prefix("k=") {
                let k = k.trim().parse().map_err(|e| parse_err(format!("bad k: {e}")))?;
                header = Header::K(k);
            }
            continue;
        }
        rows.push((lineno + 1, line));
    }
    if rows.is_empty() {
        return Err(invalid("dataset contains no points"));
    }
    let looks_categorical = rows.iter().all(|(_, l)| l.bytes().all(|b| b.is_ascii_digit()));
    let categorical = match header {
        Header::K(_) => true,
        Header::Dim(_) => false,
        Header::None => looks_categorical,
    };
    if categorical {
        let mut idx = Vec::with_capacity(rows.len());
        for (line, l) in &rows {
            idx.push(l.parse::<u32>().map_err(|e| Error::Parse {
                line: *line,
                message: format!("bad category {l:?}: {e}"),
            })?);
        }
        let k = match header {
            Header::K(k) => k,
            _ => idx.iter().copied().max().unwrap_or(1),
        };
        return Sample::categorical(k, idx);
    }
    let mut dim = match header {
        Header::Dim(d) => Some(d),
        _ => None,
    };
    let mut values = Vec::new();
    for (line, l) in &rows {
        let before = values.len();
        for tok in l.split(',') {
            let v: f64 = tok.trim().parse().map_err(|e| Error::Parse {
                line: *line,
                message: format!("bad decimal {tok:?}: {e}"),
            })?;
            values.push(v);
        }
        let got = values.len() - before;
        match dim {
            Some(d) if d != got => {
                return Err(Error::Parse {
                    line: *line,
                    message: format!("expected {d} coordinates, found {got}"),
                })
            }
            None => dim = Some(got),
            _ => {}
        }
    }
    Sample::real(dim.unwrap_or(1), values)
}

pub fn format_dataset(sample: &Sample) -> String {
    let mut out = String::new();
    match sample.space() {
        Space::Real { dim } => {
            let _ = writeln!(out, "# dim={dim}");
            for p in sample.iter() {
                if let PointRef::Real(v) = p {
                    let row: Vec<String> = v.iter().map(|x| format!("{x:?}")).collect();
                    let _ = writeln!(out, "{}", row.join(","));
                }
            }
        }
        Space::Categorical { k } => {
            let _ = writeln!(out, "# k={k}");
            for p in sample.iter() {
                if let PointRef::Categorical(c) = p {
                    let _ = writeln!(out, "{c}");
                }
            }
        }
    }
    out
}

pub fn read_dataset(path: impl AsRef<Path>) -> Result<Sample> {
    parse_dataset(&std::fs::read_to_string(path)?)
}

pub fn write_dataset(path: impl AsRef<Path>, sample: &Sample) -> Result<()> {
    write_atomic(path.as_ref(), format_dataset(sample).as_bytes())
}

/// Write `bytes` to a sibling temporary file, then rename it over `path`, so
/// readers never observe a half-written file.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let name = path
        .file_name()
        .ok_or_else(|| invalid(format!("{} is not a file path", path.display())))?;
    let mut tmp_name = std::ffi::OsString::from(".");
    tmp_name.push(name);
    tmp_name.push(format!(".tmp{}", std::process::id()));
    let tmp = path.with_file_name(tmp_name);
    std::fs::write(&tmp, bytes)?;
    std::fs::rename(&tmp, path).inspect_err(|_| {
        let _ = std::fs::remove_file(&tmp);
    })?;
    Ok(())
}
