//! Random-intercept linear mixed model, fit by maximum likelihood with
//! the variance ratio profiled out.
//!
//! Model: `y = X b + Z u + e` with `u ~ N(0, sigma_b^2 I)` per group and
//! `e ~ N(0, sigma^2 I)`. For a fixed ratio `gamma = sigma_b^2 / sigma^2`
//! the GLS solution and the profiled variance have closed forms built
//! from per-group sufficient statistics (Woodbury identity on the
//! block-diagonal covariance), so the whole fit reduces to a
//! one-dimensional search over `gamma`, done by golden section on a log
//! grid.

use std::collections::BTreeSet;

use nalgebra::{DMatrix, DVector};

use super::records::{ResultRecord, Task};
use super::AnalysisError;

/// Fixed-effect terms. Continuous predictors are pre-scaled to the
/// interpretation units the coefficient magnitudes are read in: steps
/// per 100k, vocabulary per 16k, fine-tuning lines per 512, alpha per
/// 0.1.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FixedTerm {
    Intercept,
    LaptSteps,
    VocabSize,
    FinetuningLines,
    TaskUas,
    /// Plain alpha term (the zero-shot regressions).
    Alpha,
    /// Alpha interacted with the binary high/low resource indicator:
    /// two columns, `resourcehigh:lapt_alpha` and `resourcelow:lapt_alpha`.
    ResourceAlpha,
}

/// Regression specification: terms plus the set of language codes
/// treated as high-resource for the interaction term.
#[derive(Debug, Clone)]
pub struct LmmSpec {
    pub terms: Vec<FixedTerm>,
    pub high_resource: BTreeSet<String>,
}

impl LmmSpec {
    /// Formula used for the fine-tuned settings: steps, vocabulary,
    /// fine-tuning lines, task offset, and the resource-conditional
    /// alpha slope.
    pub fn finetuned(high_resource: BTreeSet<String>) -> Self {
        Self {
            terms: vec![
                FixedTerm::Intercept,
                FixedTerm::LaptSteps,
                FixedTerm::VocabSize,
                FixedTerm::FinetuningLines,
                FixedTerm::TaskUas,
                FixedTerm::ResourceAlpha,
            ],
            high_resource,
        }
    }

    /// Formula used for the zero-shot setting: no fine-tuning lines, a
    /// single alpha slope.
    pub fn zero_shot() -> Self {
        Self {
            terms: vec![
                FixedTerm::Intercept,
                FixedTerm::LaptSteps,
                FixedTerm::VocabSize,
                FixedTerm::Alpha,
                FixedTerm::TaskUas,
            ],
            high_resource: BTreeSet::new(),
        }
    }

    pub fn column_names(&self) -> Vec<String> {
        let mut names = Vec::new();
        for term in &self.terms {
            match term {
                FixedTerm::Intercept => names.push("(Intercept)".into()),
                FixedTerm::LaptSteps => names.push("lapt_steps".into()),
                FixedTerm::VocabSize => names.push("vocab_size".into()),
                FixedTerm::FinetuningLines => names.push("finetuning_lines".into()),
                FixedTerm::TaskUas => names.push("taskuas".into()),
                FixedTerm::Alpha => names.push("lapt_alpha".into()),
                FixedTerm::ResourceAlpha => {
                    names.push("resourcehigh:lapt_alpha".into());
                    names.push("resourcelow:lapt_alpha".into());
                }
            }
        }
        names
    }

    fn row(&self, record: &ResultRecord) -> Vec<f64> {
        let mut row = Vec::new();
        let alpha_scaled = record.alpha / 0.1;
        for term in &self.terms {
            match term {
                FixedTerm::Intercept => row.push(1.0),
                FixedTerm::LaptSteps => row.push(record.lapt_steps as f64 / 100_000.0),
                FixedTerm::VocabSize => row.push(record.vocab_size as f64 / 16_384.0),
                FixedTerm::FinetuningLines => {
                    row.push(record.finetuning_lines as f64 / 512.0)
                }
                FixedTerm::TaskUas => {
                    row.push(if record.task == Task::Uas { 1.0 } else { 0.0 })
                }
                FixedTerm::Alpha => row.push(alpha_scaled),
                FixedTerm::ResourceAlpha => {
                    let high = self.high_resource.contains(&record.language);
                    row.push(if high { alpha_scaled } else { 0.0 });
                    row.push(if high { 0.0 } else { alpha_scaled });
                }
            }
        }
        row
    }
}

/// One fixed-effect estimate.
#[derive(Debug, Clone, PartialEq)]
pub struct Coefficient {
    pub name: String,
    pub estimate: f64,
    pub std_error: f64,
    pub t_value: f64,
}

/// Fitted model.
#[derive(Debug, Clone)]
pub struct LmmFit {
    pub coefficients: Vec<Coefficient>,
    /// Random-intercept variance.
    pub sigma_b2: f64,
    /// Residual variance.
    pub sigma2: f64,
    /// Profiled log-likelihood at the optimum.
    pub log_likelihood: f64,
    /// Variance ratio sigma_b^2 / sigma^2 at the optimum.
    pub gamma: f64,
    /// Per-group intercept predictions (group name, BLUP).
    pub group_intercepts: Vec<(String, f64)>,
}

impl LmmFit {
    /// Coefficient table in the summary layout: estimate, standard
    /// error, t value per fixed effect, then the variance components.
    pub fn to_tsv(&self) -> String {
        let mut out = String::from("term\testimate\tstd_error\tt_value\n");
        for c in &self.coefficients {
            out.push_str(&format!(
                "{}\t{:.6}\t{:.6}\t{:.4}\n",
                c.name, c.estimate, c.std_error, c.t_value
            ));
        }
        out.push_str(&format!("sigma_b2\t{:.6}\t\t\n", self.sigma_b2));
        out.push_str(&format!("sigma2\t{:.6}\t\t\n", self.sigma2));
        out.push_str(&format!("log_likelihood\t{:.6}\t\t\n", self.log_likelihood));
        out
    }
}

struct GroupedData {
    x: DMatrix<f64>,
    y: DVector<f64>,
    group_of: Vec<usize>,
    group_names: Vec<String>,
    group_sizes: Vec<usize>,
    /// Per-group column sums of X.
    s: Vec<DVector<f64>>,
    /// Per-group sums of y.
    t: Vec<f64>,
}

fn assemble(records: &[ResultRecord], spec: &LmmSpec) -> Result<GroupedData, AnalysisError> {
    if records.is_empty() {
        return Err(AnalysisError::EmptyRecords);
    }
    let group_names: Vec<String> = {
        let set: BTreeSet<&str> = records.iter().map(|r| r.language.as_str()).collect();
        set.into_iter().map(str::to_string).collect()
    };
    if group_names.len() < 2 {
        return Err(AnalysisError::TooFewGroups(group_names.len()));
    }
    let n = records.len();
    let rows: Vec<Vec<f64>> = records.iter().map(|r| spec.row(r)).collect();
    let p = rows[0].len();
    let x = DMatrix::from_fn(n, p, |i, j| rows[i][j]);
    let y = DVector::from_fn(n, |i, _| records[i].score);
    let group_of: Vec<usize> = records
        .iter()
        .map(|r| group_names.binary_search(&r.language).expect("name collected above"))
        .collect();
    let g = group_names.len();
    let mut group_sizes = vec![0usize; g];
    let mut s = vec![DVector::zeros(p); g];
    let mut t = vec![0.0f64; g];
    for (i, &gi) in group_of.iter().enumerate() {
        group_sizes[gi] += 1;
        s[gi] += x.row(i).transpose();
        t[gi] += y[i];
    }
    Ok(GroupedData { x, y, group_of, group_names, group_sizes, s, t })
}

fn check_rank(x: &DMatrix<f64>, names: &[String]) -> Result<(), AnalysisError> {
    let p = x.ncols();
    let qr = x.clone().col_piv_qr();
    let r = qr.r();
    let scale = r.diagonal().iter().map(|v| v.abs()).fold(0.0, f64::max);
    let tol = scale * (x.nrows().max(p) as f64) * f64::EPSILON;
    let rank = r.diagonal().iter().filter(|v| v.abs() > tol).count();
    if rank < p {
        // Recover the pivot order by pushing an index row through the
        // permutation; columns beyond the rank are the dependent ones.
        let mut order = DMatrix::<f64>::from_fn(1, p, |_, j| j as f64);
        qr.p().permute_columns(&mut order);
        let mut columns: Vec<String> = (rank..p)
            .map(|j| names[order[(0, j)] as usize].clone())
            .collect();
        columns.sort();
        return Err(AnalysisError::RankDeficient { columns });
    }
    Ok(())
}

struct ProfilePoint {
    log_likelihood: f64,
    beta: DVector<f64>,
    sigma2: f64,
    xtwx: DMatrix<f64>,
    rss: f64,
}

/// GLS fit and profiled log-likelihood at a fixed variance ratio.
fn profile(data: &GroupedData, gamma: f64) -> Option<ProfilePoint> {
    let n = data.x.nrows() as f64;
    let p = data.x.ncols();
    let g = data.group_names.len();

    let mut xtwx = data.x.transpose() * &data.x;
    let mut xtwy = data.x.transpose() * &data.y;
    let mut ytwy = data.y.dot(&data.y);
    let mut logdet = 0.0;
    for gi in 0..g {
        let m = data.group_sizes[gi] as f64;
        if m == 0.0 {
            continue;
        }
        let w = gamma / (1.0 + gamma * m);
        xtwx -= &data.s[gi] * data.s[gi].transpose() * w;
        xtwy -= &data.s[gi] * (w * data.t[gi]);
        ytwy -= w * data.t[gi] * data.t[gi];
        logdet += (1.0 + gamma * m).ln();
    }

    let beta = xtwx.clone().cholesky().map(|ch| ch.solve(&xtwy)).or_else(|| {
        xtwx.clone().lu().solve(&xtwy)
    })?;
    let rss = (ytwy - beta.dot(&xtwy)).max(1e-300);
    let sigma2 = rss / n;
    let log_likelihood = -0.5
        * (n * (2.0 * std::f64::consts::PI).ln() + n * sigma2.ln() + n + logdet);
    let _ = p;
    Some(ProfilePoint { log_likelihood, beta, sigma2, xtwx, rss })
}

/// d(log-likelihood)/d(gamma) at the profiled beta and sigma^2. By the
/// envelope theorem the beta(gamma) dependence drops out, leaving
/// `-1/2 * (n * RSS'/RSS + sum_g m_g / (1 + gamma m_g))` with
/// `RSS' = -sum_g R_g^2 / (1 + gamma m_g)^2` for group residual sums R_g.
fn profile_derivative(data: &GroupedData, gamma: f64) -> Option<f64> {
    let point = profile(data, gamma)?;
    let n = data.x.nrows() as f64;
    let mut rss_prime = 0.0;
    let mut trace = 0.0;
    for gi in 0..data.group_names.len() {
        let m = data.group_sizes[gi] as f64;
        if m == 0.0 {
            continue;
        }
        let residual_sum = data.t[gi] - data.s[gi].dot(&point.beta);
        let denom = 1.0 + gamma * m;
        rss_prime -= residual_sum * residual_sum / (denom * denom);
        trace += m / denom;
    }
    Some(-0.5 * (n * rss_prime / point.rss + trace))
}

const GAMMA_LO: f64 = 1e-8;
const GAMMA_HI: f64 = 1e8;
const GOLDEN_TOL: f64 = 1e-8;
const GOLDEN_MAX_ITERS: usize = 500;

/// Fit the random-intercept model grouped by language.
pub fn fit_lmm(records: &[ResultRecord], spec: &LmmSpec) -> Result<LmmFit, AnalysisError> {
    let data = assemble(records, spec)?;
    let names = spec.column_names();
    check_rank(&data.x, &names)?;

    let eval = |gamma: f64| profile(&data, gamma).map(|pt| pt.log_likelihood);

    // Golden-section on log(gamma); the boundary gamma = 0 competes as a
    // candidate of its own.
    let golden = 0.5 * (5.0f64.sqrt() - 1.0);
    let mut lo = GAMMA_LO.ln();
    let mut hi = GAMMA_HI.ln();
    let mut x1 = hi - golden * (hi - lo);
    let mut x2 = lo + golden * (hi - lo);
    let mut f1 = eval(x1.exp());
    let mut f2 = eval(x2.exp());
    let mut iterations = 0;
    while hi - lo > GOLDEN_TOL {
        iterations += 1;
        if iterations > GOLDEN_MAX_ITERS {
            return Err(AnalysisError::NonConvergence { lo: lo.exp(), hi: hi.exp() });
        }
        match (f1, f2) {
            (Some(a), Some(b)) => {
                if a < b {
                    lo = x1;
                    x1 = x2;
                    f1 = f2;
                    x2 = lo + golden * (hi - lo);
                    f2 = eval(x2.exp());
                } else {
                    hi = x2;
                    x2 = x1;
                    f2 = f1;
                    x1 = hi - golden * (hi - lo);
                    f1 = eval(x1.exp());
                }
            }
            _ => return Err(AnalysisError::NonConvergence { lo: lo.exp(), hi: hi.exp() }),
        }
    }
    // The likelihood is numerically flat around the optimum, so the
    // golden bracket is polished by bisecting the analytic derivative:
    // this pins gamma well past the f64 noise plateau of raw
    // likelihood comparisons.
    let mut interior_gamma = (0.5 * (lo + hi)).exp();
    let mut dlo = lo - 0.5;
    let mut dhi = hi + 0.5;
    if let (Some(flo), Some(fhi)) = (
        profile_derivative(&data, dlo.exp()),
        profile_derivative(&data, dhi.exp()),
    ) {
        if flo > 0.0 && fhi < 0.0 {
            for _ in 0..100 {
                let mid = 0.5 * (dlo + dhi);
                match profile_derivative(&data, mid.exp()) {
                    Some(d) if d > 0.0 => dlo = mid,
                    Some(_) => dhi = mid,
                    None => break,
                }
            }
            interior_gamma = (0.5 * (dlo + dhi)).exp();
        }
    }

    let interior = profile(&data, interior_gamma);
    let boundary = profile(&data, 0.0);
    let (gamma, point) = match (interior, boundary) {
        (Some(i), Some(b)) => {
            if i.log_likelihood >= b.log_likelihood {
                (interior_gamma, i)
            } else {
                (0.0, b)
            }
        }
        (Some(i), None) => (interior_gamma, i),
        (None, Some(b)) => (0.0, b),
        (None, None) => {
            return Err(AnalysisError::NonConvergence { lo: lo.exp(), hi: hi.exp() })
        }
    };

    let cov = point
        .xtwx
        .clone()
        .try_inverse()
        .ok_or(AnalysisError::NonConvergence { lo: lo.exp(), hi: hi.exp() })?
        * point.sigma2;
    let coefficients = names
        .iter()
        .enumerate()
        .map(|(j, name)| {
            let estimate = point.beta[j];
            let std_error = cov[(j, j)].max(0.0).sqrt();
            Coefficient {
                name: name.clone(),
                estimate,
                std_error,
                t_value: if std_error > 0.0 { estimate / std_error } else { f64::NAN },
            }
        })
        .collect();

    let mut group_intercepts = Vec::with_capacity(data.group_names.len());
    for (gi, name) in data.group_names.iter().enumerate() {
        let m = data.group_sizes[gi] as f64;
        let w = gamma / (1.0 + gamma * m);
        let fitted_sum: f64 = data.s[gi].dot(&point.beta);
        group_intercepts.push((name.clone(), w * (data.t[gi] - fitted_sum)));
    }
    let _ = &data.group_of;

    Ok(LmmFit {
        coefficients,
        sigma_b2: gamma * point.sigma2,
        sigma2: point.sigma2,
        log_likelihood: point.log_likelihood,
        gamma,
        group_intercepts,
    })
}

/// Profiled log-likelihood at an arbitrary ratio; exposed so model
/// comparisons can be scripted against the same objective the fitter
/// maximizes.
pub fn log_likelihood_at(
    records: &[ResultRecord],
    spec: &LmmSpec,
    gamma: f64,
) -> Result<f64, AnalysisError> {
    let data = assemble(records, spec)?;
    profile(&data, gamma)
        .map(|p| p.log_likelihood)
        .ok_or(AnalysisError::NonConvergence { lo: gamma, hi: gamma })
}
