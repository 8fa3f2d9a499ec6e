//! Corpus profiling by typological factors, and the statistics used to
//! compare corpora: correlation, standardisation, k-means, PCA and Huber
//! regression. Also derives recommended training settings from a profile.

use std::collections::HashSet;
use std::fmt;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::conllu::{reconstruct_text, Document};
use crate::tags::UnitMode;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum TypologyError {
    #[error("corpus has no words")]
    EmptyCorpus,
    #[error("need at least {needed} values, got {got}")]
    TooFewPoints { needed: usize, got: usize },
    #[error("length mismatch: {0} vs {1}")]
    LengthMismatch(usize, usize),
    #[error("zero variance")]
    ZeroVariance,
    #[error("feature {0} is constant")]
    ConstantFeature(usize),
    #[error("requested {dims} components from {features} features")]
    TooManyDims { dims: usize, features: usize },
    #[error("singular system")]
    Singular,
    #[error("settings line {line}: {message}")]
    Settings { line: usize, message: String },
}

/// Factor values of one training corpus.
#[derive(Debug, Clone, PartialEq)]
pub struct TypoProfile {
    /// Distinct non-whitespace characters of the raw text.
    pub cs: usize,
    /// Distinct word forms.
    pub ls: usize,
    /// Characters per word.
    pub al: f64,
    /// Words per whitespace-delimited segment.
    pub sf: f64,
    /// Share of tokens that are non-segmental multiword tokens.
    pub mp: f64,
    /// Distinct non-segmental multiword-token surfaces.
    pub ms: usize,
    /// Sentences.
    pub train_size: usize,
    /// Share of words containing whitespace.
    pub internal_space_ratio: f64,
}

impl TypoProfile {
    /// `[TS, CS, LS, AL, SF, MP, MS]`, the order used for analysis.
    pub fn features(&self) -> [f64; 7] {
        [
            self.train_size as f64,
            self.cs as f64,
            self.ls as f64,
            self.al,
            self.sf,
            self.mp,
            self.ms as f64,
        ]
    }
}

pub const FEATURE_NAMES: [&str; 7] = ["TS", "CS", "LS", "AL", "SF", "MP", "MS"];

pub fn compute_factors<'a>(
    docs: impl IntoIterator<Item = &'a Document>,
) -> Result<TypoProfile, TypologyError> {
    let mut chars = HashSet::new();
    let mut forms = HashSet::new();
    let mut mwts = HashSet::new();
    let (mut word_chars, mut words, mut spaced_words) = (0usize, 0usize, 0usize);
    let (mut segments, mut tokens, mut mwt_tokens, mut sentences) =
        (0usize, 0usize, 0usize, 0usize);
    for doc in docs {
        for s in &doc.sentences {
            sentences += 1;
            let text = reconstruct_text(s);
            chars.extend(text.chars().filter(|c| !c.is_whitespace()));
            segments += text.split_whitespace().count();
            for w in &s.words {
                words += 1;
                word_chars += w.form.chars().count();
                if w.form.chars().any(char::is_whitespace) {
                    spaced_words += 1;
                }
                forms.insert(w.form.as_str());
            }
            for t in &s.tokens {
                tokens += 1;
                if s.is_non_segmental(t) {
                    mwt_tokens += 1;
                    mwts.insert(t.form.clone());
                }
            }
        }
    }
    if words == 0 || segments == 0 {
        return Err(TypologyError::EmptyCorpus);
    }
    Ok(TypoProfile {
        cs: chars.len(),
        ls: forms.len(),
        al: word_chars as f64 / words as f64,
        sf: words as f64 / segments as f64,
        mp: mwt_tokens as f64 / tokens as f64,
        ms: mwts.len(),
        train_size: sentences,
        internal_space_ratio: spaced_words as f64 / words as f64,
    })
}

fn mean(xs: &[f64]) -> f64 {
    xs.iter().sum::<f64>() / xs.len() as f64
}

pub fn pearson(xs: &[f64], ys: &[f64]) -> Result<f64, TypologyError> {
    if xs.len() != ys.len() {
        return Err(TypologyError::LengthMismatch(xs.len(), ys.len()));
    }
    if xs.len() < 2 {
        return Err(TypologyError::TooFewPoints {
            needed: 2,
            got: xs.len(),
        });
    }
    let (mx, my) = (mean(xs), mean(ys));
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for (x, y) in xs.iter().zip(ys) {
        sxy += (x - mx) * (y - my);
        sxx += (x - mx) * (x - mx);
        syy += (y - my) * (y - my);
    }
    if sxx == 0.0 || syy == 0.0 {
        return Err(TypologyError::ZeroVariance);
    }
    Ok((sxy / (sxx * syy).sqrt()).clamp(-1.0, 1.0))
}

/// Per-feature z-scoring with population standard deviations.
#[derive(Debug, Clone, PartialEq)]
pub struct Standardizer {
    pub mean: Vec<f64>,
    pub std: Vec<f64>,
}

impl Standardizer {
    pub fn fit(points: &[Vec<f64>]) -> Result<Self, TypologyError> {
        let first = points
            .first()
            .ok_or(TypologyError::TooFewPoints { needed: 1, got: 0 })?;
        let d = first.len();
        let n = points.len() as f64;
        let mut mean = vec![0.0; d];
        for p in points {
            if p.len() != d {
                return Err(TypologyError::LengthMismatch(p.len(), d));
            }
            for (m, x) in mean.iter_mut().zip(p) {
                *m += x / n;
            }
        }
        let mut std = vec![0.0; d];
        for p in points {
            for ((s, x), m) in std.iter_mut().zip(p).zip(&mean) {
                *s += (x - m) * (x - m) / n;
            }
        }
        for (j, s) in std.iter_mut().enumerate() {
            *s = s.sqrt();
            if *s <= 1e-12 * mean[j].abs().max(1.0) {
                return Err(TypologyError::ConstantFeature(j));
            }
        }
        Ok(Standardizer { mean, std })
    }

    pub fn transform(&self, p: &[f64]) -> Vec<f64> {
        p.iter()
            .zip(&self.mean)
            .zip(&self.std)
            .map(|((x, m), s)| (x - m) / s)
            .collect()
    }

    pub fn transform_all(&self, points: &[Vec<f64>]) -> Vec<Vec<f64>> {
        points.iter().map(|p| self.transform(p)).collect()
    }
}

/// Indices of the columns that vary across `points`.
pub fn varying_features(points: &[Vec<f64>]) -> Vec<usize> {
    let Some(first) = points.first() else {
        return Vec::new();
    };
    (0..first.len())
        .filter(|&j| points.iter().any(|p| p[j] != first[j]))
        .collect()
}

fn sq_dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

#[derive(Debug, Clone, PartialEq)]
pub struct KMeansResult {
    pub assignments: Vec<usize>,
    pub centroids: Vec<Vec<f64>>,
    /// Inertia after each assignment step.
    pub inertia: Vec<f64>,
    pub iterations: usize,
}

impl KMeansResult {
    pub fn final_inertia(&self) -> f64 {
        self.inertia.last().copied().unwrap_or(0.0)
    }
}

const KMEANS_MAX_ITER: usize = 100;

fn kmeans_pp(points: &[Vec<f64>], k: usize, rng: &mut ChaCha8Rng) -> Vec<Vec<f64>> {
    let mut chosen = vec![rng.gen_range(0..points.len())];
    while chosen.len() < k {
        let d2: Vec<f64> = points
            .iter()
            .map(|p| {
                chosen
                    .iter()
                    .map(|&c| sq_dist(p, &points[c]))
                    .fold(f64::INFINITY, f64::min)
            })
            .collect();
        let total: f64 = d2.iter().sum();
        let next = if total > 0.0 {
            let mut target = rng.gen::<f64>() * total;
            let mut pick = d2.iter().rposition(|&d| d > 0.0).expect("positive total");
            for (i, &d) in d2.iter().enumerate() {
                if d > 0.0 && target < d {
                    pick = i;
                    break;
                }
                target -= d;
            }
            pick
        } else {
            // all remaining points coincide with a centre
            (0..points.len())
                .find(|i| !chosen.contains(i))
                .expect("k <= n")
        };
        chosen.push(next);
    }
    chosen.into_iter().map(|i| points[i].clone()).collect()
}

/// Lloyd iterations from k-means++ seeding, until the assignment stops
/// changing or 100 iterations. Distance ties go to the lower centroid.
pub fn kmeans(points: &[Vec<f64>], k: usize, seed: u64) -> Result<KMeansResult, TypologyError> {
    if k == 0 || points.len() < k {
        return Err(TypologyError::TooFewPoints {
            needed: k.max(1),
            got: points.len(),
        });
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut centroids = kmeans_pp(points, k, &mut rng);
    let mut assignments: Vec<usize> = Vec::new();
    let mut inertia = Vec::new();
    let mut iterations = 0;
    while iterations < KMEANS_MAX_ITER {
        iterations += 1;
        let mut total = 0.0;
        let next: Vec<usize> = points
            .iter()
            .map(|p| {
                let mut best = (0, f64::INFINITY);
                for (c, centre) in centroids.iter().enumerate() {
                    let d = sq_dist(p, centre);
                    if d < best.1 {
                        best = (c, d);
                    }
                }
                total += best.1;
                best.0
            })
            .collect();
        inertia.push(total);
        if next == assignments {
            break;
        }
        assignments = next;
        for (c, centre) in centroids.iter_mut().enumerate() {
            let members: Vec<&Vec<f64>> = points
                .iter()
                .zip(&assignments)
                .filter(|(_, &a)| a == c)
                .map(|(p, _)| p)
                .collect();
            // an empty cluster keeps its centre
            if !members.is_empty() {
                for (j, x) in centre.iter_mut().enumerate() {
                    *x = members.iter().map(|m| m[j]).sum::<f64>() / members.len() as f64;
                }
            }
        }
    }
    Ok(KMeansResult {
        assignments,
        centroids,
        inertia,
        iterations,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct PcaResult {
    pub projected: Vec<Vec<f64>>,
    /// Unit principal directions, one per row.
    pub components: Vec<Vec<f64>>,
    pub eigenvalues: Vec<f64>,
    pub explained_ratio: Vec<f64>,
}

const PCA_TOL: f64 = 1e-10;
const PCA_MAX_ITER: usize = 100_000;

fn mat_vec(m: &[Vec<f64>], v: &[f64]) -> Vec<f64> {
    m.iter()
        .map(|row| row.iter().zip(v).map(|(a, b)| a * b).sum())
        .collect()
}

fn normalize(v: &mut [f64]) -> f64 {
    let n = v.iter().map(|x| x * x).sum::<f64>().sqrt();
    if n > 0.0 {
        v.iter_mut().for_each(|x| *x /= n);
    }
    n
}

fn project_out(v: &mut [f64], basis: &[Vec<f64>]) {
    for b in basis {
        let dot: f64 = v.iter().zip(b).map(|(x, y)| x * y).sum();
        v.iter_mut().zip(b).for_each(|(x, y)| *x -= dot * y);
    }
}

/// A unit vector orthogonal to `basis`, built from the standard basis.
fn orthogonal_complement(basis: &[Vec<f64>], d: usize) -> Vec<f64> {
    for j in 0..d {
        let mut v = vec![0.0; d];
        v[j] = 1.0;
        project_out(&mut v, basis);
        if normalize(&mut v) > 1e-6 {
            return v;
        }
    }
    vec![0.0; d]
}

fn orient(v: &mut [f64]) {
    if let Some(&first) = v.iter().find(|x| x.abs() > 1e-12) {
        if first < 0.0 {
            v.iter_mut().for_each(|x| *x = -*x);
        }
    }
}

/// Projection onto the top `dims` principal directions found by power
/// iteration with deflation on the sample covariance.
pub fn pca_project(points: &[Vec<f64>], dims: usize) -> Result<PcaResult, TypologyError> {
    if points.len() < 2 {
        return Err(TypologyError::TooFewPoints {
            needed: 2,
            got: points.len(),
        });
    }
    let d = points[0].len();
    if dims > d {
        return Err(TypologyError::TooManyDims { dims, features: d });
    }
    let n = points.len() as f64;
    let means: Vec<f64> = (0..d)
        .map(|j| points.iter().map(|p| p[j]).sum::<f64>() / n)
        .collect();
    let centred: Vec<Vec<f64>> = points
        .iter()
        .map(|p| p.iter().zip(&means).map(|(x, m)| x - m).collect())
        .collect();
    let mut cov = vec![vec![0.0; d]; d];
    for p in &centred {
        for i in 0..d {
            for j in 0..d {
                cov[i][j] += p[i] * p[j] / (n - 1.0);
            }
        }
    }
    let trace: f64 = (0..d).map(|i| cov[i][i]).sum();
    let mut work = cov.clone();
    let mut components: Vec<Vec<f64>> = Vec::new();
    let mut eigenvalues = Vec::new();
    for _ in 0..dims {
        let mut v: Vec<f64> = (0..d).map(|i| 1.0 + 0.1 * i as f64).collect();
        project_out(&mut v, &components);
        let mut degenerate = normalize(&mut v) <= 1e-12;
        for _ in 0..PCA_MAX_ITER {
            if degenerate {
                break;
            }
            let mut next = mat_vec(&work, &v);
            // deflation leaves rounding noise that must not pull the
            // iterate back towards earlier directions
            project_out(&mut next, &components);
            if normalize(&mut next) <= 1e-12 * trace.max(1e-300) {
                degenerate = true;
                break;
            }
            // align signs so the change measures convergence of the direction
            let dot: f64 = next.iter().zip(&v).map(|(a, b)| a * b).sum();
            if dot < 0.0 {
                next.iter_mut().for_each(|x| *x = -*x);
            }
            let delta = next
                .iter()
                .zip(&v)
                .map(|(a, b)| (a - b).abs())
                .fold(0.0, f64::max);
            v = next;
            if delta < PCA_TOL {
                break;
            }
        }
        if degenerate {
            v = orthogonal_complement(&components, d);
        }
        orient(&mut v);
        let lambda: f64 = mat_vec(&cov, &v).iter().zip(&v).map(|(a, b)| a * b).sum();
        let lambda = lambda.max(0.0);
        for i in 0..d {
            for j in 0..d {
                work[i][j] -= lambda * v[i] * v[j];
            }
        }
        components.push(v);
        eigenvalues.push(lambda);
    }
    let explained_ratio = eigenvalues
        .iter()
        .map(|l| if trace > 0.0 { l / trace } else { 0.0 })
        .collect();
    let projected = centred
        .iter()
        .map(|p| {
            components
                .iter()
                .map(|c| c.iter().zip(p).map(|(a, b)| a * b).sum())
                .collect()
        })
        .collect();
    Ok(PcaResult {
        projected,
        components,
        eigenvalues,
        explained_ratio,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct HuberFit {
    pub coefficients: Vec<f64>,
    pub intercept: f64,
    pub iterations: usize,
}

pub const HUBER_DELTA: f64 = 1.35;
const HUBER_MAX_ITER: usize = 200;
const HUBER_TOL: f64 = 1e-8;
const SCALE_FLOOR: f64 = 1e-10;

/// Gaussian elimination with partial pivoting; `a` is `n x n` row-major.
fn solve(mut a: Vec<Vec<f64>>, mut b: Vec<f64>) -> Result<Vec<f64>, TypologyError> {
    let n = b.len();
    let scale = a
        .iter()
        .flatten()
        .fold(0.0f64, |m, x| m.max(x.abs()))
        .max(1e-300);
    for col in 0..n {
        let pivot = (col..n)
            .max_by(|&i, &j| a[i][col].abs().total_cmp(&a[j][col].abs()))
            .expect("non-empty range");
        if a[pivot][col].abs() <= 1e-12 * scale {
            return Err(TypologyError::Singular);
        }
        a.swap(col, pivot);
        b.swap(col, pivot);
        for row in col + 1..n {
            let f = a[row][col] / a[col][col];
            if f != 0.0 {
                let (upper, lower) = a.split_at_mut(row);
                for (x, p) in lower[0][col..].iter_mut().zip(&upper[col][col..]) {
                    *x -= f * p;
                }
                b[row] -= f * b[col];
            }
        }
    }
    let mut x = vec![0.0; n];
    for row in (0..n).rev() {
        let s: f64 = (row + 1..n).map(|k| a[row][k] * x[k]).sum();
        x[row] = (b[row] - s) / a[row][row];
    }
    Ok(x)
}

fn weighted_least_squares(x: &[Vec<f64>], y: &[f64], w: &[f64]) -> Result<Vec<f64>, TypologyError> {
    // last unknown is the intercept
    let p = x[0].len() + 1;
    let mut ata = vec![vec![0.0; p]; p];
    let mut atb = vec![0.0; p];
    for ((row, &yi), &wi) in x.iter().zip(y).zip(w) {
        let r: Vec<f64> = row.iter().copied().chain(std::iter::once(1.0)).collect();
        for i in 0..p {
            atb[i] += wi * r[i] * yi;
            for j in 0..p {
                ata[i][j] += wi * r[i] * r[j];
            }
        }
    }
    solve(ata, atb)
}

fn median(mut xs: Vec<f64>) -> f64 {
    xs.sort_by(f64::total_cmp);
    let n = xs.len();
    if n % 2 == 1 {
        xs[n / 2]
    } else {
        (xs[n / 2 - 1] + xs[n / 2]) / 2.0
    }
}

/// Residual scale from the median absolute deviation, floored.
fn mad_scale(residuals: &[f64]) -> f64 {
    let m = median(residuals.to_vec());
    let mad = median(residuals.iter().map(|r| (r - m).abs()).collect());
    (mad / 0.6745).max(SCALE_FLOOR)
}

/// Linear regression under the Huber loss by iteratively reweighted least
/// squares, starting from the ordinary least-squares fit. The residual scale
/// is re-estimated from the MAD at every iteration.
pub fn huber_regress(x: &[Vec<f64>], y: &[f64], delta: f64) -> Result<HuberFit, TypologyError> {
    if x.len() != y.len() {
        return Err(TypologyError::LengthMismatch(x.len(), y.len()));
    }
    let p = x.first().map_or(0, Vec::len);
    if x.len() < p + 1 || x.is_empty() {
        return Err(TypologyError::TooFewPoints {
            needed: p + 1,
            got: x.len(),
        });
    }
    let mut w = vec![1.0; y.len()];
    let mut beta = weighted_least_squares(x, y, &w)?;
    let mut iterations = 0;
    while iterations < HUBER_MAX_ITER {
        iterations += 1;
        let residuals: Vec<f64> = x
            .iter()
            .zip(y)
            .map(|(row, yi)| yi - row.iter().zip(&beta).map(|(a, b)| a * b).sum::<f64>() - beta[p])
            .collect();
        let s = mad_scale(&residuals);
        for (wi, r) in w.iter_mut().zip(&residuals) {
            let a = r.abs() / s;
            *wi = if a <= delta { 1.0 } else { delta / a };
        }
        let next = weighted_least_squares(x, y, &w)?;
        let change = next
            .iter()
            .zip(&beta)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max);
        beta = next;
        if change < HUBER_TOL {
            break;
        }
    }
    let intercept = beta.pop().expect("intercept");
    Ok(HuberFit {
        coefficients: beta,
        intercept,
        iterations,
    })
}

/// Thresholds of the settings rules.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Thresholds {
    pub internal_space_ratio: f64,
    pub sf: f64,
    pub cs: usize,
    pub ms: usize,
}

impl Default for Thresholds {
    fn default() -> Self {
        Thresholds {
            internal_space_ratio: 0.01,
            sf: 2.0,
            cs: 1000,
            ms: 200,
        }
    }
}

/// Language-specific training settings.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Settings {
    pub unit_mode: UnitMode,
    pub uses_ngrams: bool,
    pub encdec: bool,
}

impl Default for Settings {
    fn default() -> Self {
        Settings {
            unit_mode: UnitMode::Character,
            uses_ngrams: false,
            encdec: false,
        }
    }
}

pub fn recommend_settings(profile: &TypoProfile, th: &Thresholds) -> Settings {
    Settings {
        unit_mode: if profile.internal_space_ratio > th.internal_space_ratio {
            UnitMode::Syllable
        } else {
            UnitMode::Character
        },
        uses_ngrams: profile.sf > th.sf && profile.cs > th.cs,
        encdec: profile.ms > th.ms,
    }
}

impl fmt::Display for Settings {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "unit_mode={}", self.unit_mode.as_str())?;
        writeln!(f, "uses_ngrams={}", self.uses_ngrams)?;
        writeln!(f, "encdec={}", self.encdec)
    }
}

/// Settings as written by [`Settings`]'s `Display`. Missing keys keep their
/// defaults; `#` starts a comment line.
pub fn parse_settings(input: &str) -> Result<Settings, TypologyError> {
    let mut s = Settings::default();
    for (i, line) in input.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let err = |message: String| TypologyError::Settings {
            line: i + 1,
            message,
        };
        let (key, value) = line
            .split_once('=')
            .ok_or_else(|| err("expected key=value".into()))?;
        let flag = |v: &str| {
            v.parse::<bool>()
                .map_err(|_| err(format!("not a boolean: {v}")))
        };
        match key.trim() {
            "unit_mode" => {
                s.unit_mode = UnitMode::parse(value.trim())
                    .ok_or_else(|| err(format!("unknown unit mode {value}")))?
            }
            "uses_ngrams" => s.uses_ngrams = flag(value.trim())?,
            "encdec" => s.encdec = flag(value.trim())?,
            other => return Err(err(format!("unknown key {other}"))),
        }
    }
    Ok(s)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::conllu::{SegmentSpec, Sentence};

    fn spec(surface: &str, words: &[&str], space_after: bool) -> SegmentSpec {
        SegmentSpec {
            surface: surface.into(),
            words: words.iter().map(|w| w.to_string()).collect(),
            space_after,
        }
    }

    #[test]
    fn factors_of_one_sentence() {
        let s =
            Sentence::from_segments(None, &[spec("ab", &["ab"], true), spec("c", &["c"], false)]);
        let p = compute_factors([&Document::new("x", vec![s])]).unwrap();
        assert_eq!((p.cs, p.ls, p.ms, p.train_size), (3, 2, 0, 1));
        assert_eq!((p.al, p.sf, p.mp), (1.5, 1.0, 0.0));
    }

    #[test]
    fn mwt_portion() {
        let mut segs = vec![
            spec("du", &["de", "le"], true),
            spec("du", &["de", "le"], true),
        ];
        for w in ["a", "b", "c", "d", "e", "f", "g", "h"] {
            segs.push(spec(w, &[w], true));
        }
        let p = compute_factors([&Document::new(
            "x",
            vec![Sentence::from_segments(None, &segs)],
        )])
        .unwrap();
        assert_eq!(p.mp, 0.2);
        assert_eq!(p.ms, 1);
    }

    #[test]
    fn empty_corpus() {
        assert_eq!(
            compute_factors([&Document::new("x", vec![])]),
            Err(TypologyError::EmptyCorpus)
        );
    }

    #[test]
    fn pearson_examples() {
        let xs = [1.0, 2.0, 3.0];
        assert!((pearson(&xs, &[3.0, 5.0, 7.0]).unwrap() - 1.0).abs() < 1e-15);
        assert!((pearson(&xs, &[-1.0, -2.0, -3.0]).unwrap() + 1.0).abs() < 1e-15);
        assert!((pearson(&xs, &[1.0, 3.0, 2.0]).unwrap() - 0.5).abs() < 1e-15);
        assert_eq!(
            pearson(&xs, &[1.0, 1.0, 1.0]),
            Err(TypologyError::ZeroVariance)
        );
    }

    #[test]
    fn standardizer() {
        let pts = vec![vec![1.0, 10.0], vec![2.0, 30.0], vec![6.0, 20.0]];
        let st = Standardizer::fit(&pts).unwrap();
        let z = st.transform_all(&pts);
        for j in 0..2 {
            let m: f64 = z.iter().map(|p| p[j]).sum::<f64>() / 3.0;
            let v: f64 = z.iter().map(|p| (p[j] - m).powi(2)).sum::<f64>() / 3.0;
            assert!(m.abs() < 1e-12 && (v.sqrt() - 1.0).abs() < 1e-12);
        }
        let constant = vec![vec![1.0, 2.0], vec![1.0, 3.0]];
        assert_eq!(
            Standardizer::fit(&constant),
            Err(TypologyError::ConstantFeature(0))
        );
        assert_eq!(varying_features(&constant), vec![1]);
    }

    #[test]
    fn kmeans_examples() {
        let pts = vec![vec![0.0, 0.0], vec![2.0, 0.0], vec![0.0, 4.0]];
        let r = kmeans(&pts, 1, 3).unwrap();
        assert!((r.centroids[0][0] - 2.0 / 3.0).abs() < 1e-15);
        assert!((r.centroids[0][1] - 4.0 / 3.0).abs() < 1e-15);
        let r = kmeans(&pts, 3, 3).unwrap();
        assert_eq!(r.final_inertia(), 0.0);
        let mut a = r.assignments.clone();
        a.sort();
        a.dedup();
        assert_eq!(a.len(), 3);
        assert!(kmeans(&pts, 4, 3).is_err());
        assert_eq!(kmeans(&pts, 2, 9), kmeans(&pts, 2, 9));
    }

    #[test]
    fn pca_examples() {
        let line: Vec<Vec<f64>> = (0..5).map(|i| vec![i as f64, 2.0 * i as f64]).collect();
        let r = pca_project(&line, 2).unwrap();
        assert!((r.explained_ratio[0] - 1.0).abs() < 1e-10);
        assert!(r.explained_ratio[1].abs() < 1e-10);
        assert!(r.components[0][0] > 0.0);

        let square = vec![
            vec![0.0, 0.0],
            vec![1.0, 0.0],
            vec![0.0, 1.0],
            vec![1.0, 1.0],
        ];
        let r = pca_project(&square, 2).unwrap();
        assert!((r.explained_ratio[0] - 0.5).abs() < 1e-10);
        assert!((r.explained_ratio[1] - 0.5).abs() < 1e-10);
        assert!(pca_project(&square, 3).is_err());
    }

    #[test]
    fn pca_preserves_distances_in_subspace() {
        // points in a plane of R^3
        let pts: Vec<Vec<f64>> = [(0.0, 0.0), (1.0, 2.0), (3.0, -1.0), (-2.0, 0.5), (0.7, 0.7)]
            .iter()
            .map(|&(a, b)| vec![a + b, a - b, 2.0 * a])
            .collect();
        let r = pca_project(&pts, 2).unwrap();
        for i in 0..pts.len() {
            for j in 0..pts.len() {
                let d0 = sq_dist(&pts[i], &pts[j]).sqrt();
                let d1 = sq_dist(&r.projected[i], &r.projected[j]).sqrt();
                assert!((d0 - d1).abs() < 1e-8);
            }
        }
    }

    fn planted(n: usize) -> (Vec<Vec<f64>>, Vec<f64>) {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let x: Vec<Vec<f64>> = (0..n)
            .map(|_| vec![rng.gen_range(-2.0..2.0), rng.gen_range(-2.0..2.0)])
            .collect();
        let y = x.iter().map(|r| 1.5 * r[0] - 0.5 * r[1] + 3.0).collect();
        (x, y)
    }

    #[test]
    fn huber_recovers_planted_coefficients() {
        let (x, mut y) = planted(50);
        let fit = huber_regress(&x, &y, HUBER_DELTA).unwrap();
        assert!((fit.coefficients[0] - 1.5).abs() < 1e-6);
        assert!((fit.coefficients[1] + 0.5).abs() < 1e-6);
        assert!((fit.intercept - 3.0).abs() < 1e-6);
        y[7] += 1000.0;
        let fit = huber_regress(&x, &y, HUBER_DELTA).unwrap();
        assert!((fit.coefficients[0] - 1.5).abs() < 1e-2);
        assert!((fit.coefficients[1] + 0.5).abs() < 1e-2);
        assert!((fit.intercept - 3.0).abs() < 1e-2);
    }

    #[test]
    fn huber_constant_target() {
        let (x, _) = planted(10);
        let fit = huber_regress(&x, &[2.0; 10], HUBER_DELTA).unwrap();
        assert!(fit.coefficients.iter().all(|c| c.abs() < 1e-12));
        assert!((fit.intercept - 2.0).abs() < 1e-12);
        let dup = vec![vec![1.0, 1.0]; 5];
        assert_eq!(
            huber_regress(&dup, &[1.0; 5], HUBER_DELTA),
            Err(TypologyError::Singular)
        );
    }

    fn profile() -> TypoProfile {
        TypoProfile {
            cs: 108,
            ls: 19672,
            al: 4.06,
            sf: 1.24,
            mp: 0.0,
            ms: 0,
            train_size: 12543,
            internal_space_ratio: 0.0,
        }
    }

    #[test]
    fn recommendations() {
        let th = Thresholds::default();
        assert_eq!(recommend_settings(&profile(), &th), Settings::default());
        let zh = TypoProfile {
            cs: 3600,
            sf: 3.0,
            ..profile()
        };
        assert!(recommend_settings(&zh, &th).uses_ngrams);
        let pt = TypoProfile {
            ms: 710,
            ..profile()
        };
        assert!(recommend_settings(&pt, &th).encdec);
        let vi = TypoProfile {
            internal_space_ratio: 0.2,
            ..profile()
        };
        assert_eq!(recommend_settings(&vi, &th).unit_mode, UnitMode::Syllable);
    }

    #[test]
    fn settings_round_trip() {
        let s = Settings {
            unit_mode: UnitMode::Syllable,
            uses_ngrams: true,
            encdec: false,
        };
        assert_eq!(parse_settings(&s.to_string()).unwrap(), s);
        assert!(parse_settings("bogus=1").is_err());
        assert!(parse_settings("uses_ngrams=maybe").is_err());
    }
}
