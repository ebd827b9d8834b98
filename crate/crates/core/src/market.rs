//! Price ingestion, cleaning and moment estimation.
//!
//! Input is a wide CSV: a `date` column of ISO-8601 calendar dates followed by
//! one close-price column per asset. Empty cells are missing observations.
//! Assets with any missing observation are dropped rather than imputed.

use std::collections::HashSet;
use std::io::Read;
use std::path::Path;

use chrono::NaiveDate;
use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::spd::{self, condition_and_factor};

#[derive(Debug, Clone, PartialEq)]
pub struct PricePanel {
    dates: Vec<NaiveDate>,
    tickers: Vec<String>,
    /// Row-major: `prices[t][i]` is asset `i` on `dates[t]`.
    prices: Vec<Vec<Option<f64>>>,
}

impl PricePanel {
    pub fn new(
        dates: Vec<NaiveDate>,
        tickers: Vec<String>,
        prices: Vec<Vec<Option<f64>>>,
    ) -> Result<Self> {
        if prices.len() != dates.len() {
            return Err(Error::DimensionMismatch {
                expected: dates.len(),
                got: prices.len(),
            });
        }
        if let Some(row) = prices.iter().find(|r| r.len() != tickers.len()) {
            return Err(Error::DimensionMismatch {
                expected: tickers.len(),
                got: row.len(),
            });
        }
        let mut seen = HashSet::new();
        for t in &tickers {
            if !seen.insert(t.as_str()) {
                return Err(Error::Validation(format!("duplicate ticker {t:?}")));
            }
        }
        if let Some(w) = dates.windows(2).find(|w| w[0] >= w[1]) {
            return Err(Error::Validation(format!(
                "dates not strictly increasing at {}",
                w[1]
            )));
        }
        Ok(Self {
            dates,
            tickers,
            prices,
        })
    }

    pub fn dates(&self) -> &[NaiveDate] {
        &self.dates
    }

    pub fn tickers(&self) -> &[String] {
        &self.tickers
    }

    pub fn prices(&self) -> &[Vec<Option<f64>>] {
        &self.prices
    }

    pub fn price(&self, t: usize, asset: usize) -> Option<f64> {
        self.prices[t][asset]
    }

    pub fn is_complete(&self) -> bool {
        self.prices.iter().all(|r| r.iter().all(Option::is_some))
    }
}

/// Reads a wide price CSV from disk.
pub fn load_prices(path: impl AsRef<Path>) -> Result<PricePanel> {
    let path = path.as_ref();
    let file = std::fs::File::open(path).map_err(|source| Error::Io {
        path: path.to_path_buf(),
        source,
    })?;
    parse_prices(file)
}

/// Parses a wide price CSV. Rows are returned sorted by date; columns keep
/// file order.
pub fn parse_prices<R: Read>(reader: R) -> Result<PricePanel> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(true)
        .trim(csv::Trim::All)
        .from_reader(reader);

    let csv_err = |e: csv::Error| {
        let row = e.position().map(|p| p.line() as usize).unwrap_or(0);
        Error::Format {
            row,
            column: None,
            message: e.to_string(),
        }
    };

    let headers = rdr.headers().map_err(csv_err)?.clone();
    if headers.len() < 2 {
        return Err(Error::Format {
            row: 1,
            column: None,
            message: "expected a date column and at least one ticker column".into(),
        });
    }
    let tickers: Vec<String> = headers.iter().skip(1).map(str::to_owned).collect();
    if let Some(pos) = tickers.iter().position(|t| t.is_empty()) {
        return Err(Error::Format {
            row: 1,
            column: Some(pos + 2),
            message: "empty ticker name".into(),
        });
    }
    let mut seen = HashSet::new();
    for t in &tickers {
        if !seen.insert(t.as_str()) {
            return Err(Error::Validation(format!("duplicate ticker {t:?}")));
        }
    }

    let mut rows: Vec<(NaiveDate, Vec<Option<f64>>)> = Vec::new();
    for record in rdr.records() {
        let record = record.map_err(csv_err)?;
        let line = record.position().map(|p| p.line() as usize).unwrap_or(0);
        let raw_date = record.get(0).unwrap_or_default();
        let date = NaiveDate::parse_from_str(raw_date, "%Y-%m-%d").map_err(|e| Error::Format {
            row: line,
            column: Some(1),
            message: format!("bad date {raw_date:?}: {e}"),
        })?;
        let mut cells = Vec::with_capacity(tickers.len());
        for (j, cell) in record.iter().enumerate().skip(1) {
            if cell.is_empty() {
                cells.push(None);
                continue;
            }
            let v: f64 = cell.parse().map_err(|_| Error::Format {
                row: line,
                column: Some(j + 1),
                message: format!("not a number: {cell:?}"),
            })?;
            if !v.is_finite() {
                return Err(Error::Format {
                    row: line,
                    column: Some(j + 1),
                    message: format!("non-finite price {cell:?}"),
                });
            }
            cells.push(Some(v));
        }
        rows.push((date, cells));
    }

    rows.sort_by_key(|(d, _)| *d);
    let (dates, prices): (Vec<_>, Vec<_>) = rows.into_iter().unzip();
    PricePanel::new(dates, tickers, prices)
}

/// Removes every asset with a missing observation. Returns the reduced
/// panel together with the dropped tickers in file order.
pub fn drop_incomplete_assets(panel: PricePanel) -> Result<(PricePanel, Vec<String>)> {
    let n = panel.tickers.len();
    let keep: Vec<usize> = (0..n)
        .filter(|&i| panel.prices.iter().all(|row| row[i].is_some()))
        .collect();
    if keep.is_empty() {
        return Err(Error::EmptyUniverse);
    }
    let dropped: Vec<String> = (0..n)
        .filter(|i| !keep.contains(i))
        .map(|i| panel.tickers[i].clone())
        .collect();
    if !dropped.is_empty() {
        log::info!("dropped {} incomplete assets: {:?}", dropped.len(), dropped);
    }

    let tickers = keep.iter().map(|&i| panel.tickers[i].clone()).collect();
    let prices = panel
        .prices
        .iter()
        .map(|row| keep.iter().map(|&i| row[i]).collect())
        .collect();
    Ok((
        PricePanel {
            dates: panel.dates,
            tickers,
            prices,
        },
        dropped,
    ))
}

/// Simple per-period returns on a complete panel.
#[derive(Debug, Clone, PartialEq)]
pub struct ReturnPanel {
    dates: Vec<NaiveDate>,
    tickers: Vec<String>,
    /// Rows are periods, columns are assets.
    returns: DMatrix<f64>,
}

impl ReturnPanel {
    pub fn new(dates: Vec<NaiveDate>, tickers: Vec<String>, returns: DMatrix<f64>) -> Result<Self> {
        if returns.ncols() != tickers.len() {
            return Err(Error::DimensionMismatch {
                expected: tickers.len(),
                got: returns.ncols(),
            });
        }
        if returns.nrows() != dates.len() {
            return Err(Error::DimensionMismatch {
                expected: dates.len(),
                got: returns.nrows(),
            });
        }
        if returns.nrows() < 2 {
            return Err(Error::Validation(format!(
                "need at least 2 return rows, got {}",
                returns.nrows()
            )));
        }
        if returns.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite);
        }
        Ok(Self {
            dates,
            tickers,
            returns,
        })
    }

    /// Builds a panel from a bare return matrix, naming assets `A0, A1, …`
    /// and dating rows from 2000-01-01 onwards.
    pub fn from_matrix(returns: DMatrix<f64>) -> Result<Self> {
        let tickers = (0..returns.ncols()).map(|i| format!("A{i}")).collect();
        let start = NaiveDate::from_ymd_opt(2000, 1, 1).expect("valid date");
        let dates = start.iter_days().take(returns.nrows()).collect();
        Self::new(dates, tickers, returns)
    }

    pub fn dates(&self) -> &[NaiveDate] {
        &self.dates
    }

    pub fn tickers(&self) -> &[String] {
        &self.tickers
    }

    pub fn returns(&self) -> &DMatrix<f64> {
        &self.returns
    }
}

/// `returns[t][i] = prices[t+1][i] / prices[t][i] − 1`.
pub fn compute_returns(panel: &PricePanel) -> Result<ReturnPanel> {
    let rows = panel.dates.len();
    if rows < 3 {
        return Err(Error::Validation(format!(
            "need at least 3 dates to estimate a covariance, got {rows}"
        )));
    }
    let n = panel.tickers.len();
    for (t, row) in panel.prices.iter().enumerate() {
        for (i, p) in row.iter().enumerate() {
            let bad = |message: &str| Error::Data {
                ticker: panel.tickers[i].clone(),
                date: panel.dates[t].to_string(),
                message: message.to_owned(),
            };
            match p {
                None => return Err(bad("missing observation")),
                Some(v) if *v <= 0.0 => return Err(bad(&format!("non-positive price {v}"))),
                Some(_) => {}
            }
        }
    }

    let returns = DMatrix::from_fn(rows - 1, n, |t, i| {
        let prev = panel.prices[t][i].expect("checked complete");
        let next = panel.prices[t + 1][i].expect("checked complete");
        next / prev - 1.0
    });
    ReturnPanel::new(panel.dates[1..].to_vec(), panel.tickers.clone(), returns)
}

/// Expected returns and covariance for a universe of assets.
///
/// `sigma` is symmetrized on construction. `jitter` records any diagonal
/// conditioning that was applied after estimation.
#[derive(Debug, Clone, PartialEq)]
pub struct MomentEstimate {
    tickers: Vec<String>,
    mu: DVector<f64>,
    sigma: DMatrix<f64>,
    jitter: f64,
}

impl MomentEstimate {
    pub fn new(tickers: Vec<String>, mu: DVector<f64>, sigma: DMatrix<f64>) -> Result<Self> {
        let n = mu.len();
        if sigma.nrows() != n || sigma.ncols() != n {
            return Err(Error::DimensionMismatch {
                expected: n,
                got: if sigma.nrows() != n {
                    sigma.nrows()
                } else {
                    sigma.ncols()
                },
            });
        }
        if tickers.len() != n {
            return Err(Error::DimensionMismatch {
                expected: n,
                got: tickers.len(),
            });
        }
        if n == 0 {
            return Err(Error::EmptyUniverse);
        }
        if mu.iter().chain(sigma.iter()).any(|v| !v.is_finite()) {
            return Err(Error::NonFinite);
        }
        let sigma = (&sigma + sigma.transpose()) * 0.5;
        Ok(Self {
            tickers,
            mu,
            sigma,
            jitter: 0.0,
        })
    }

    /// Same as [`MomentEstimate::new`] with generated tickers `A0, A1, …`.
    pub fn unnamed(mu: DVector<f64>, sigma: DMatrix<f64>) -> Result<Self> {
        let tickers = (0..mu.len()).map(|i| format!("A{i}")).collect();
        Self::new(tickers, mu, sigma)
    }

    pub fn n(&self) -> usize {
        self.mu.len()
    }

    pub fn tickers(&self) -> &[String] {
        &self.tickers
    }

    pub fn mu(&self) -> &DVector<f64> {
        &self.mu
    }

    pub fn sigma(&self) -> &DMatrix<f64> {
        &self.sigma
    }

    pub fn jitter(&self) -> f64 {
        self.jitter
    }

    /// Applies the jitter ladder so that `sigma` admits a Cholesky factor.
    pub fn conditioned(mut self, max_jitter: f64) -> Result<Self> {
        let (sigma, factor) = condition_and_factor(&self.sigma, max_jitter)?;
        self.sigma = sigma;
        self.jitter += factor.jitter_applied();
        Ok(self)
    }

    /// Subtracts a constant per-period risk-free rate from every expected
    /// return.
    pub fn excess_of(mut self, rf: f64) -> Self {
        self.mu.add_scalar_mut(-rf);
        self
    }

    /// Sub-instance on `idx`, in the given order.
    pub fn subset(&self, idx: &[usize]) -> Self {
        Self {
            tickers: idx.iter().map(|&i| self.tickers[i].clone()).collect(),
            mu: spd::subvector(&self.mu, idx),
            sigma: spd::principal_submatrix(&self.sigma, idx),
            jitter: self.jitter,
        }
    }
}

/// Column sample means and unbiased sample covariance (divisor `T − 1`
/// where `T` is the number of return rows).
pub fn estimate_moments(returns: &ReturnPanel) -> Result<MomentEstimate> {
    let r = &returns.returns;
    let (t, n) = r.shape();
    if t < 2 {
        return Err(Error::Validation(format!(
            "need at least 2 return rows, got {t}"
        )));
    }
    let mu = DVector::from_fn(n, |i, _| r.column(i).sum() / t as f64);
    let mut centered = r.clone();
    for i in 0..n {
        let m = mu[i];
        centered.column_mut(i).add_scalar_mut(-m);
    }
    let sigma = centered.transpose() * &centered / (t as f64 - 1.0);
    MomentEstimate::new(returns.tickers.clone(), mu, sigma)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use nalgebra::dmatrix;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;
    use rand_distr::{Distribution, Normal};

    fn date(s: &str) -> NaiveDate {
        NaiveDate::parse_from_str(s, "%Y-%m-%d").unwrap()
    }

    #[test]
    fn parses_minimal_csv() {
        let p = parse_prices("date,A,B\n2020-01-01,10,20\n2020-01-02,11,19\n".as_bytes()).unwrap();
        assert_eq!(p.dates().len(), 2);
        assert_eq!(p.tickers(), &["A", "B"]);
        assert_eq!(p.price(1, 0), Some(11.0));
        assert_eq!(p.price(1, 1), Some(19.0));
    }

    #[test]
    fn duplicate_header_is_validation_error() {
        let err = parse_prices("date,A,A\n2020-01-01,1,2\n".as_bytes()).unwrap_err();
        assert!(matches!(err, Error::Validation(_)), "{err}");
    }

    #[test]
    fn unsorted_dates_are_reordered() {
        let p =
            parse_prices("date,A\n2020-01-03,3\n2020-01-01,1\n2020-01-02,2\n".as_bytes()).unwrap();
        assert_eq!(
            p.dates(),
            &[date("2020-01-01"), date("2020-01-02"), date("2020-01-03")]
        );
        let col: Vec<_> = (0..3).map(|t| p.price(t, 0).unwrap()).collect();
        assert_eq!(col, vec![1.0, 2.0, 3.0]);
    }

    #[test]
    fn format_errors_carry_location() {
        match parse_prices("date,A,B\n2020-01-01,1,2\n2020-01-02,1,x\n".as_bytes()) {
            Err(Error::Format { row, column, .. }) => {
                assert_eq!(row, 3);
                assert_eq!(column, Some(3));
            }
            other => panic!("{other:?}"),
        }
        match parse_prices("date,A\n01/02/2020,1\n".as_bytes()) {
            Err(Error::Format { row, column, .. }) => {
                assert_eq!(row, 2);
                assert_eq!(column, Some(1));
            }
            other => panic!("{other:?}"),
        }
        assert!(matches!(
            parse_prices("date,A\n2020-01-01,1,2\n".as_bytes()),
            Err(Error::Format { .. })
        ));
        assert!(matches!(
            parse_prices("date,A\n2020-01-01,1\n2020-01-01,2\n".as_bytes()),
            Err(Error::Validation(_))
        ));
    }

    #[test]
    fn drops_assets_with_gaps() {
        let p = parse_prices(
            "date,A,B,C\n2020-01-01,1,2,3\n2020-01-02,1,,3\n2020-01-03,1,2,3\n".as_bytes(),
        )
        .unwrap();
        let (kept, dropped) = drop_incomplete_assets(p).unwrap();
        assert_eq!(kept.tickers(), &["A", "C"]);
        assert_eq!(dropped, vec!["B".to_string()]);
        assert!(kept.is_complete());
    }

    #[test]
    fn complete_panel_is_untouched() {
        let p = parse_prices("date,A,B\n2020-01-01,1,2\n2020-01-02,1,2\n".as_bytes()).unwrap();
        let (kept, dropped) = drop_incomplete_assets(p.clone()).unwrap();
        assert_eq!(kept, p);
        assert!(dropped.is_empty());
    }

    #[test]
    fn all_gappy_is_empty_universe() {
        let p = parse_prices("date,A,B\n2020-01-01,,2\n2020-01-02,1,\n".as_bytes()).unwrap();
        assert!(matches!(
            drop_incomplete_assets(p),
            Err(Error::EmptyUniverse)
        ));
    }

    #[test]
    fn simple_returns() {
        let p = parse_prices(
            "date,A,B\n2020-01-01,10,5\n2020-01-02,11,5\n2020-01-03,11,5\n".as_bytes(),
        )
        .unwrap();
        let r = compute_returns(&p).unwrap();
        assert_eq!(r.returns().nrows(), 2);
        assert_relative_eq!(r.returns()[(0, 0)], 0.10, epsilon = 1e-15);
        assert_eq!(r.returns()[(1, 0)], 0.0);
        assert!(r.returns().column(1).iter().all(|v| *v == 0.0));
        assert_eq!(r.dates()[0], date("2020-01-02"));
    }

    #[test]
    fn zero_price_is_data_error() {
        let p = parse_prices(
            "date,A,B\n2020-01-01,10,5\n2020-01-02,11,0\n2020-01-03,11,5\n".as_bytes(),
        )
        .unwrap();
        match compute_returns(&p) {
            Err(Error::Data { ticker, date, .. }) => {
                assert_eq!(ticker, "B");
                assert_eq!(date, "2020-01-02");
            }
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn two_point_variance() {
        let r = ReturnPanel::from_matrix(dmatrix![0.1; -0.1]).unwrap();
        let m = estimate_moments(&r).unwrap();
        assert_relative_eq!(m.mu()[0], 0.0, epsilon = 1e-18);
        assert_relative_eq!(m.sigma()[(0, 0)], 0.02, epsilon = 1e-15);
    }

    #[test]
    fn identical_columns_are_perfectly_correlated() {
        let r = ReturnPanel::from_matrix(dmatrix![0.1, 0.1; -0.2, -0.2; 0.05, 0.05]).unwrap();
        let m = estimate_moments(&r).unwrap();
        let s = m.sigma();
        assert_eq!(s[(0, 0)], s[(1, 1)]);
        assert_eq!(s[(0, 1)], s[(0, 0)]);
        assert_eq!(s[(1, 0)], s[(0, 1)]);
    }

    #[test]
    fn independent_draws_have_vanishing_covariance() {
        // Off-diagonal sample covariance of independent columns has standard
        // error sd_i·sd_j/√T; every cell must sit within three of them.
        let t = 100_000;
        let sds = [0.01, 0.02, 0.03];
        let mut rng = ChaCha8Rng::seed_from_u64(2024);
        let normals: Vec<Normal<f64>> = sds.iter().map(|&s| Normal::new(0.0, s).unwrap()).collect();
        let r = DMatrix::from_fn(t, 3, |_, j| normals[j].sample(&mut rng));
        let m = estimate_moments(&ReturnPanel::from_matrix(r).unwrap()).unwrap();
        for i in 0..3 {
            for j in 0..3 {
                if i != j {
                    let se = sds[i] * sds[j] / (t as f64).sqrt();
                    assert!(m.sigma()[(i, j)].abs() < 3.0 * se, "({i},{j})");
                }
            }
            let rel = (m.sigma()[(i, i)] - sds[i] * sds[i]).abs() / (sds[i] * sds[i]);
            assert!(rel < 0.02);
        }
    }

    #[test]
    fn moment_validation() {
        let err = MomentEstimate::unnamed(DVector::zeros(2), DMatrix::zeros(3, 3)).unwrap_err();
        assert!(matches!(err, Error::DimensionMismatch { .. }));
        let m = MomentEstimate::unnamed(
            DVector::from_vec(vec![0.1, 0.2]),
            dmatrix![1.0, 0.3; 0.1, 1.0],
        )
        .unwrap();
        assert_eq!(m.sigma()[(0, 1)], m.sigma()[(1, 0)]);
        assert_relative_eq!(m.sigma()[(0, 1)], 0.2);
    }

    #[test]
    fn risk_free_shifts_mu() {
        let m = MomentEstimate::unnamed(DVector::from_vec(vec![0.1, 0.2]), DMatrix::identity(2, 2))
            .unwrap()
            .excess_of(0.05);
        assert_relative_eq!(m.mu()[0], 0.05);
        assert_relative_eq!(m.mu()[1], 0.15);
    }

    #[test]
    fn conditioning_records_jitter() {
        let m = MomentEstimate::unnamed(
            DVector::from_vec(vec![0.1, 0.2]),
            dmatrix![1.0, 1.0; 1.0, 1.0],
        )
        .unwrap()
        .conditioned(1e-6)
        .unwrap();
        assert!(m.jitter() > 0.0);
        assert!(spd::cholesky(m.sigma()).is_ok());
    }
}
