//! Least squares on a thin QR factorization with deterministic dropping of
//! collinear columns.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// A column whose norm shrinks below this fraction of its original norm
/// after projecting out the earlier columns is treated as collinear.
pub const COLLINEARITY_TOLERANCE: f64 = 1e-9;

/// Named regressor columns of equal length.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Design {
    pub names: Vec<String>,
    pub columns: Vec<Vec<f64>>,
}

impl Design {
    pub fn new() -> Self {
        Design::default()
    }

    pub fn push(&mut self, name: impl Into<String>, column: Vec<f64>) {
        self.names.push(name.into());
        self.columns.push(column);
    }

    pub fn with(mut self, name: impl Into<String>, column: Vec<f64>) -> Self {
        self.push(name, column);
        self
    }

    pub fn len(&self) -> usize {
        self.columns.len()
    }

    pub fn is_empty(&self) -> bool {
        self.columns.is_empty()
    }

    /// Number of rows, `None` for a design without columns.
    pub fn rows(&self) -> Option<usize> {
        self.columns.first().map(Vec::len)
    }

    pub fn extend(&mut self, other: Design) {
        self.names.extend(other.names);
        self.columns.extend(other.columns);
    }

    /// Keeps rows `rows` in the given order.
    pub fn select_rows(&self, rows: &[usize]) -> Design {
        Design {
            names: self.names.clone(),
            columns: self.columns.iter().map(|c| rows.iter().map(|&i| c[i]).collect()).collect(),
        }
    }

    fn check_rows(&self, n: usize) -> Result<()> {
        match self.columns.iter().position(|c| c.len() != n) {
            Some(j) => Err(Error::Dimension(format!(
                "column `{}` has {} rows, expected {n}",
                self.names[j],
                self.columns[j].len()
            ))),
            None => Ok(()),
        }
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn axpy(alpha: f64, x: &[f64], y: &mut [f64]) {
    for (yi, xi) in y.iter_mut().zip(x) {
        *yi += alpha * xi;
    }
}

/// Thin QR of the kept columns: `X[:, kept] = Q R`, `Q` with orthonormal
/// columns and `R` upper triangular (stored by column).
#[derive(Debug, Clone)]
pub struct ThinQr {
    pub n: usize,
    pub q: Vec<Vec<f64>>,
    /// `r[j]` holds column `j` of `R` (entries `0..=j`).
    pub r: Vec<Vec<f64>>,
    pub kept: Vec<usize>,
    pub dropped: Vec<usize>,
}

impl ThinQr {
    /// Classical Gram-Schmidt with one reorthogonalization pass, columns in
    /// order; a column is dropped when it is (numerically) in the span of
    /// the columns kept before it.
    pub fn new(columns: &[Vec<f64>], n: usize) -> Self {
        let mut qr = ThinQr { n, q: Vec::new(), r: Vec::new(), kept: Vec::new(), dropped: Vec::new() };
        for (j, col) in columns.iter().enumerate() {
            let norm0 = dot(col, col).sqrt();
            if !(norm0 > 0.0) {
                qr.dropped.push(j);
                continue;
            }
            let mut v = col.clone();
            let mut coef = vec![0.0; qr.q.len()];
            for _ in 0..2 {
                for (t, q) in qr.q.iter().enumerate() {
                    let c = dot(q, &v);
                    axpy(-c, q, &mut v);
                    coef[t] += c;
                }
            }
            let norm = dot(&v, &v).sqrt();
            if norm <= COLLINEARITY_TOLERANCE * norm0 {
                qr.dropped.push(j);
                continue;
            }
            v.iter_mut().for_each(|x| *x /= norm);
            coef.push(norm);
            qr.q.push(v);
            qr.r.push(coef);
            qr.kept.push(j);
        }
        qr
    }

    pub fn rank(&self) -> usize {
        self.q.len()
    }

    /// `Q^T v`.
    pub fn qt(&self, v: &[f64]) -> Vec<f64> {
        self.q.iter().map(|q| dot(q, v)).collect()
    }

    /// Residual of `v` after projecting on the column space.
    pub fn residualize(&self, v: &[f64]) -> Vec<f64> {
        let mut out = v.to_vec();
        for _ in 0..2 {
            for q in &self.q {
                let c = dot(q, &out);
                axpy(-c, q, &mut out);
            }
        }
        out
    }

    /// Projection of `v` on the column space.
    pub fn project(&self, v: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; self.n];
        for q in &self.q {
            axpy(dot(q, v), q, &mut out);
        }
        out
    }

    /// Solves `R b = c`.
    pub fn solve_r(&self, c: &[f64]) -> Vec<f64> {
        let k = self.rank();
        let mut b = c.to_vec();
        for j in (0..k).rev() {
            b[j] /= self.r[j][j];
            for i in 0..j {
                b[i] -= self.r[j][i] * b[j];
            }
        }
        b
    }

    /// Row `t` of `R^{-1}`.
    pub fn r_inv_row(&self, t: usize) -> Vec<f64> {
        // x R = e_t, solved left to right
        let k = self.rank();
        let mut x = vec![0.0; k];
        for j in t..k {
            let mut s = if j == t { 1.0 } else { 0.0 };
            for i in t..j {
                s -= x[i] * self.r[j][i];
            }
            x[j] = s / self.r[j][j];
        }
        x
    }

    /// Ratio of the largest to the smallest diagonal entry of `R`, a cheap
    /// lower bound on the condition number of the kept columns.
    pub fn condition(&self) -> f64 {
        let d: Vec<f64> = (0..self.rank()).map(|j| self.r[j][j].abs()).collect();
        let max = d.iter().cloned().fold(0.0, f64::max);
        let min = d.iter().cloned().fold(f64::INFINITY, f64::min);
        if d.is_empty() {
            1.0
        } else {
            max / min
        }
    }
}

/// A block of control columns, factored once and partialled out of every
/// fit that uses it.
#[derive(Debug, Clone)]
pub struct Controls {
    pub names: Vec<String>,
    qr: ThinQr,
}

impl Controls {
    pub fn new(design: &Design, n: usize) -> Result<Self> {
        design.check_rows(n)?;
        Ok(Controls { names: design.names.clone(), qr: ThinQr::new(&design.columns, n) })
    }

    /// No controls at all (not even an intercept).
    pub fn none(n: usize) -> Self {
        Controls { names: Vec::new(), qr: ThinQr::new(&[], n) }
    }

    pub fn n(&self) -> usize {
        self.qr.n
    }

    pub fn rank(&self) -> usize {
        self.qr.rank()
    }

    pub fn dropped(&self) -> Vec<String> {
        self.qr.dropped.iter().map(|&j| self.names[j].clone()).collect()
    }

    pub fn residualize(&self, v: &[f64]) -> Vec<f64> {
        self.qr.residualize(v)
    }

    pub fn condition(&self) -> f64 {
        self.qr.condition()
    }
}

/// Estimate with homoskedastic and heteroskedasticity-robust (HC1)
/// standard errors.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Coefficient {
    pub name: String,
    pub estimate: f64,
    pub se_robust: f64,
    pub se_homoskedastic: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OlsFit {
    /// Coefficients on the focus regressors; controls are partialled out.
    pub coefficients: Vec<Coefficient>,
    pub n: usize,
    /// Kept columns, focus and controls together.
    pub k: usize,
    /// Control columns dropped as collinear, in design order.
    pub dropped: Vec<String>,
    pub rss: f64,
    pub condition: f64,
}

impl OlsFit {
    pub fn get(&self, name: &str) -> Option<&Coefficient> {
        self.coefficients.iter().find(|c| c.name == name)
    }
}

/// Residualized focus block, factored.
struct Focus {
    names: Vec<String>,
    tilde: Vec<Vec<f64>>,
    qr: ThinQr,
}

fn focus_block(focus: &Design, controls: &Controls, what: &str) -> Result<Focus> {
    let n = controls.n();
    focus.check_rows(n)?;
    if focus.is_empty() {
        return Err(Error::Dimension(format!("no {what} columns")));
    }
    let tilde: Vec<Vec<f64>> = focus.columns.iter().map(|c| controls.residualize(c)).collect();
    // collinearity is judged against the original column norms
    for (j, (c, t)) in focus.columns.iter().zip(&tilde).enumerate() {
        if dot(t, t).sqrt() <= COLLINEARITY_TOLERANCE * dot(c, c).sqrt() || dot(c, c) == 0.0 {
            return Err(Error::RankDeficient(format!(
                "{what} `{}` has no variation beyond the controls",
                focus.names[j]
            )));
        }
    }
    let qr = ThinQr::new(&tilde, n);
    if let Some(&j) = qr.dropped.first() {
        return Err(Error::RankDeficient(format!("{what} `{}` is collinear with earlier {what} columns", focus.names[j])));
    }
    Ok(Focus { names: focus.names.clone(), tilde, qr })
}

/// Coefficients `R^{-1} Q^T y`, their residuals from `regressors`, and the
/// sandwich pieces; `qr` factors the (possibly projected) regressors.
fn sandwich(
    names: &[String],
    qr: &ThinQr,
    y: &[f64],
    regressors: &[Vec<f64>],
    k_total: usize,
) -> Result<(Vec<Coefficient>, f64)> {
    let n = qr.n;
    if n <= k_total {
        return Err(Error::Empty(format!("{n} observations for {k_total} parameters")));
    }
    let beta = qr.solve_r(&qr.qt(y));
    let mut u = y.to_vec();
    for (b, x) in beta.iter().zip(regressors) {
        axpy(-b, x, &mut u);
    }
    let rss = dot(&u, &u);
    let dof = (n - k_total) as f64;
    let sigma2 = rss / dof;
    let hc1 = n as f64 / dof;
    let mut out = Vec::with_capacity(beta.len());
    for t in 0..beta.len() {
        let row = qr.r_inv_row(t);
        // a = Q row^T: the weights of coefficient t on the observations
        let mut a = vec![0.0; n];
        for (j, &w) in row.iter().enumerate().skip(t) {
            axpy(w, &qr.q[j], &mut a);
        }
        let meat: f64 = a.iter().zip(&u).map(|(ai, ui)| ai * ai * ui * ui).sum();
        out.push(Coefficient {
            name: names[t].clone(),
            estimate: beta[t],
            se_robust: (hc1 * meat).sqrt(),
            se_homoskedastic: (sigma2 * dot(&row, &row)).sqrt(),
        });
    }
    Ok((out, rss))
}

/// OLS of `y` on `focus` plus `controls`; reports the focus coefficients.
pub fn ols(y: &[f64], focus: &Design, controls: &Controls) -> Result<OlsFit> {
    let n = controls.n();
    if y.len() != n {
        return Err(Error::Dimension(format!("outcome has {} rows, expected {n}", y.len())));
    }
    let f = focus_block(focus, controls, "regressor")?;
    let y_tilde = controls.residualize(y);
    let k = controls.rank() + f.qr.rank();
    let (coefficients, rss) = sandwich(&f.names, &f.qr, &y_tilde, &f.tilde, k)?;
    Ok(OlsFit { coefficients, n, k, dropped: controls.dropped(), rss, condition: controls.condition().max(f.qr.condition()) })
}

/// First-stage regression of one treatment on the excluded instruments.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FirstStage {
    pub treatment: String,
    pub fit: OlsFit,
    /// F statistic of the excluded instruments (homoskedastic).
    pub f_statistic: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IvFit {
    pub coefficients: Vec<Coefficient>,
    pub first_stage: Vec<FirstStage>,
    /// OLS of the same second stage with the treatments themselves.
    pub ols: OlsFit,
    pub n: usize,
    pub k: usize,
    pub dropped: Vec<String>,
    /// Treatments whose first-stage F is below 10.
    pub weak_instruments: Vec<String>,
}

impl IvFit {
    pub fn get(&self, name: &str) -> Option<&Coefficient> {
        self.coefficients.iter().find(|c| c.name == name)
    }
}

/// First-stage F below which identification is reported as weak.
pub const WEAK_F: f64 = 10.0;

/// Two-stage least squares of `y` on `treatments`, instrumented by
/// `instruments`, with `controls` as exogenous regressors.
pub fn two_stage_least_squares(
    y: &[f64],
    treatments: &Design,
    instruments: &Design,
    controls: &Controls,
) -> Result<IvFit> {
    let n = controls.n();
    if y.len() != n {
        return Err(Error::Dimension(format!("outcome has {} rows, expected {n}", y.len())));
    }
    let x = focus_block(treatments, controls, "treatment")?;
    let z = focus_block(instruments, controls, "instrument")?;
    if z.qr.rank() < x.qr.rank() {
        return Err(Error::Underidentified { instruments: z.qr.rank(), treatments: x.qr.rank() });
    }
    let y_tilde = controls.residualize(y);
    let x_hat: Vec<Vec<f64>> = x.tilde.iter().map(|c| z.qr.project(c)).collect();
    let qr_hat = ThinQr::new(&x_hat, n);
    if let Some(&j) = qr_hat.dropped.first() {
        return Err(Error::RankDeficient(format!(
            "treatment `{}` has no first-stage variation",
            treatments.names[j]
        )));
    }
    let k = controls.rank() + x.qr.rank();
    let (coefficients, _) = sandwich(&x.names, &qr_hat, &y_tilde, &x.tilde, k)?;

    let mut first_stage = Vec::with_capacity(x.names.len());
    let mut weak = Vec::new();
    let k_first = controls.rank() + z.qr.rank();
    for (name, xt) in x.names.iter().zip(&x.tilde) {
        let (coefs, rss_u) = sandwich(&z.names, &z.qr, xt, &z.tilde, k_first)?;
        let rss_r = dot(xt, xt);
        let q = z.qr.rank() as f64;
        let f_statistic = ((rss_r - rss_u) / q) / (rss_u / (n - k_first) as f64);
        if !(f_statistic >= WEAK_F) {
            weak.push(name.clone());
        }
        first_stage.push(FirstStage {
            treatment: name.clone(),
            fit: OlsFit {
                coefficients: coefs,
                n,
                k: k_first,
                dropped: controls.dropped(),
                rss: rss_u,
                condition: controls.condition().max(z.qr.condition()),
            },
            f_statistic,
        });
    }
    let (ols_coefs, ols_rss) = sandwich(&x.names, &x.qr, &y_tilde, &x.tilde, k)?;
    let ols = OlsFit {
        coefficients: ols_coefs,
        n,
        k,
        dropped: controls.dropped(),
        rss: ols_rss,
        condition: controls.condition().max(x.qr.condition()),
    };
    Ok(IvFit { coefficients, first_stage, ols, n, k, dropped: controls.dropped(), weak_instruments: weak })
}
