//! Panel outcome data: wide CSV ingestion, random subsampling and
//! synthetic treatment injection.
//!
//! A panel is an `N × S` matrix of outcomes (units in rows, periods in
//! columns) with a cutoff `t_pre`: columns `0..t_pre` are observed before
//! the design is chosen, columns `t_pre..S` are the treated periods.

use std::collections::HashSet;

use nalgebra::DMatrix;
use rand::seq::index;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::selector::Design;

#[derive(Debug, Clone, PartialEq)]
pub struct Panel {
    unit_ids: Vec<String>,
    period_ids: Vec<String>,
    values: DMatrix<f64>,
    t_pre: usize,
}

impl Panel {
    /// Builds a panel after checking shape, finiteness, id uniqueness and
    /// the pre-treatment cutoff.
    pub fn new(
        unit_ids: Vec<String>,
        period_ids: Vec<String>,
        values: DMatrix<f64>,
        t_pre: usize,
    ) -> Result<Self> {
        let (n, s) = values.shape();
        if unit_ids.len() != n {
            return Err(Error::data(format!(
                "{} unit ids for {} rows",
                unit_ids.len(),
                n
            )));
        }
        if period_ids.len() != s {
            return Err(Error::data(format!(
                "{} period labels for {} columns",
                period_ids.len(),
                s
            )));
        }
        if n < 2 {
            return Err(Error::data(format!("panel needs at least 2 units, got {n}")));
        }
        if t_pre < 1 || t_pre > s {
            return Err(Error::data(format!(
                "t_pre = {t_pre} out of range 1..={s}"
            )));
        }
        if let Some(pos) = values.iter().position(|v| !v.is_finite()) {
            let (i, t) = (pos % n, pos / n);
            return Err(Error::data(format!(
                "non-finite outcome at unit '{}', period {}",
                unit_ids[i], t
            )));
        }
        let mut seen = HashSet::with_capacity(n);
        for id in &unit_ids {
            if !seen.insert(id.as_str()) {
                return Err(Error::data(format!("duplicate unit id '{id}'")));
            }
        }
        Ok(Panel {
            unit_ids,
            period_ids,
            values,
            t_pre,
        })
    }

    /// Panel with generated labels (`u0..`, `p0..`), mostly for tests and
    /// simulations.
    pub fn from_matrix(values: DMatrix<f64>, t_pre: usize) -> Result<Self> {
        let (n, s) = values.shape();
        let units = (0..n).map(|i| format!("u{i}")).collect();
        let periods = (0..s).map(|t| format!("p{t}")).collect();
        Panel::new(units, periods, values, t_pre)
    }

    /// Row-major convenience constructor.
    pub fn from_rows(rows: &[Vec<f64>], t_pre: usize) -> Result<Self> {
        let n = rows.len();
        let s = rows.first().map_or(0, Vec::len);
        if rows.iter().any(|r| r.len() != s) {
            return Err(Error::data("ragged rows"));
        }
        let values = DMatrix::from_fn(n, s, |i, t| rows[i][t]);
        Panel::from_matrix(values, t_pre)
    }

    pub fn n_units(&self) -> usize {
        self.values.nrows()
    }

    pub fn n_periods(&self) -> usize {
        self.values.ncols()
    }

    pub fn t_pre(&self) -> usize {
        self.t_pre
    }

    /// Number of treated (post-cutoff) periods, `S - t_pre`.
    pub fn n_post(&self) -> usize {
        self.n_periods() - self.t_pre
    }

    pub fn unit_ids(&self) -> &[String] {
        &self.unit_ids
    }

    pub fn period_ids(&self) -> &[String] {
        &self.period_ids
    }

    pub fn values(&self) -> &DMatrix<f64> {
        &self.values
    }

    pub fn value(&self, unit: usize, period: usize) -> f64 {
        self.values[(unit, period)]
    }

    /// Pre-treatment block, `N × t_pre`.
    pub fn pre(&self) -> DMatrix<f64> {
        self.values.columns(0, self.t_pre).into_owned()
    }

    /// Post-treatment block, `N × (S - t_pre)`.
    pub fn post(&self) -> DMatrix<f64> {
        self.values
            .columns(self.t_pre, self.n_post())
            .into_owned()
    }

    /// Same data with a different cutoff.
    pub fn with_t_pre(&self, t_pre: usize) -> Result<Self> {
        Panel::new(
            self.unit_ids.clone(),
            self.period_ids.clone(),
            self.values.clone(),
            t_pre,
        )
    }

    /// Reorders the columns: column `t` of the result is column
    /// `order[t]` of `self`. The cutoff is kept.
    pub fn permute_periods(&self, order: &[usize]) -> Result<Self> {
        let s = self.n_periods();
        if order.len() != s {
            return Err(Error::usage(format!(
                "period permutation has length {} for {} periods",
                order.len(),
                s
            )));
        }
        let values = DMatrix::from_fn(self.n_units(), s, |i, t| self.values[(i, order[t])]);
        let labels = order.iter().map(|&t| self.period_ids[t].clone()).collect();
        Panel::new(self.unit_ids.clone(), labels, values, self.t_pre)
    }

    /// Selects rows (in the given order) and a contiguous period window.
    pub fn select(&self, units: &[usize], first_period: usize, n_periods: usize, t_pre: usize) -> Result<Self> {
        if first_period + n_periods > self.n_periods() {
            return Err(Error::usage("period window exceeds the panel"));
        }
        if let Some(&bad) = units.iter().find(|&&u| u >= self.n_units()) {
            return Err(Error::usage(format!("unit index {bad} out of range")));
        }
        let values = DMatrix::from_fn(units.len(), n_periods, |i, t| {
            self.values[(units[i], first_period + t)]
        });
        Panel::new(
            units.iter().map(|&u| self.unit_ids[u].clone()).collect(),
            self.period_ids[first_period..first_period + n_periods].to_vec(),
            values,
            t_pre,
        )
    }

    /// Uniformly random unit subset (source row order preserved) and a
    /// uniformly random contiguous window of `n_periods` periods.
    pub fn subsample(&self, n_units: usize, n_periods: usize, t_pre: usize, seed: u64) -> Result<Self> {
        if n_units > self.n_units() || n_periods > self.n_periods() {
            return Err(Error::usage(format!(
                "subsample {}x{} exceeds source {}x{}",
                n_units,
                n_periods,
                self.n_units(),
                self.n_periods()
            )));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut units = index::sample(&mut rng, self.n_units(), n_units).into_vec();
        units.sort_unstable();
        let first = rng.gen_range(0..=self.n_periods() - n_periods);
        self.select(&units, first, n_periods, t_pre)
    }

    /// Adds `scenario.effects[i]` to every post-cutoff cell of each treated
    /// unit `i`.
    pub fn apply_treatment(&self, design: &Design, scenario: &TreatmentScenario) -> Result<Self> {
        if design.n_units() != self.n_units() {
            return Err(Error::usage(format!(
                "design covers {} units, panel has {}",
                design.n_units(),
                self.n_units()
            )));
        }
        self.apply_effects(design.treated(), scenario)
    }

    pub fn apply_effects(&self, treated: &[usize], scenario: &TreatmentScenario) -> Result<Self> {
        if scenario.effects.len() != self.n_units() {
            return Err(Error::usage(format!(
                "{} effects for {} units",
                scenario.effects.len(),
                self.n_units()
            )));
        }
        if scenario.treated_periods != self.n_post() {
            return Err(Error::usage(format!(
                "scenario has {} treated periods, panel has {}",
                scenario.treated_periods,
                self.n_post()
            )));
        }
        let mut out = self.clone();
        for &i in treated {
            let tau = scenario.effects[i];
            for t in self.t_pre..self.n_periods() {
                out.values[(i, t)] += tau;
            }
        }
        Ok(out)
    }

    /// Writes the panel back out in the wide layout `load_panel` reads.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("unit");
        for p in &self.period_ids {
            out.push(',');
            out.push_str(p);
        }
        out.push('\n');
        for i in 0..self.n_units() {
            out.push_str(&self.unit_ids[i]);
            for t in 0..self.n_periods() {
                out.push(',');
                out.push_str(&format!("{}", self.values[(i, t)]));
            }
            out.push('\n');
        }
        out
    }
}

/// Parses a wide CSV: a header row of period labels (first cell ignored),
/// then one row per unit holding the unit id followed by `S` numbers.
pub fn load_panel(csv_text: &str, t_pre: usize) -> Result<Panel> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .flexible(true)
        .trim(csv::Trim::All)
        .from_reader(csv_text.as_bytes());

    let header = reader
        .headers()
        .map_err(|e| Error::data(format!("unreadable header: {e}")))?
        .clone();
    if header.len() < 2 {
        return Err(Error::data("header must contain at least one period label"));
    }
    let period_ids: Vec<String> = header.iter().skip(1).map(str::to_string).collect();
    let s = period_ids.len();

    let mut unit_ids = Vec::new();
    let mut cells = Vec::new();
    for (row_no, record) in reader.records().enumerate() {
        let record = record.map_err(|e| Error::data(format!("row {}: {e}", row_no + 2)))?;
        if record.len() != s + 1 {
            return Err(Error::data(format!(
                "row {} has {} fields, expected {} (ragged row)",
                row_no + 2,
                record.len(),
                s + 1
            )));
        }
        unit_ids.push(record[0].to_string());
        for (t, cell) in record.iter().skip(1).enumerate() {
            let v: f64 = cell.parse().map_err(|_| {
                Error::data(format!(
                    "row {} ('{}'), period '{}': non-numeric cell '{}'",
                    row_no + 2,
                    &record[0],
                    period_ids[t],
                    cell
                ))
            })?;
            cells.push(v);
        }
    }
    let n = unit_ids.len();
    let values = DMatrix::from_row_slice(n, s, &cells);
    Panel::new(unit_ids, period_ids, values, t_pre)
}

/// Additive effects per unit; only treated units' entries are used.
#[derive(Debug, Clone, PartialEq)]
pub struct TreatmentScenario {
    pub effects: Vec<f64>,
    pub treated_periods: usize,
}

impl TreatmentScenario {
    pub fn new(effects: Vec<f64>, treated_periods: usize) -> Result<Self> {
        if treated_periods < 1 {
            return Err(Error::usage("scenario needs at least one treated period"));
        }
        if effects.iter().any(|e| !e.is_finite()) {
            return Err(Error::usage("treatment effects must be finite"));
        }
        Ok(TreatmentScenario {
            effects,
            treated_periods,
        })
    }

    pub fn homogeneous(n_units: usize, tau: f64, treated_periods: usize) -> Result<Self> {
        TreatmentScenario::new(vec![tau; n_units], treated_periods)
    }

    /// Effects increasing linearly in row index from `first` to `last`.
    pub fn linear(n_units: usize, first: f64, last: f64, treated_periods: usize) -> Result<Self> {
        let effects = (0..n_units)
            .map(|i| {
                if n_units == 1 {
                    first
                } else {
                    first + (last - first) * i as f64 / (n_units - 1) as f64
                }
            })
            .collect();
        TreatmentScenario::new(effects, treated_periods)
    }

    pub fn negated(&self) -> Self {
        TreatmentScenario {
            effects: self.effects.iter().map(|e| -e).collect(),
            treated_periods: self.treated_periods,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const SMALL: &str = "state,m1,m2,m3\nA,0.05,0.06,0.07\nB,0.04,0.041,0.039\n";

    #[test]
    fn loads_small_wide_csv() {
        let p = load_panel(SMALL, 2).unwrap();
        assert_eq!((p.n_units(), p.n_periods(), p.t_pre()), (2, 3, 2));
        assert_eq!(p.unit_ids(), &["A".to_string(), "B".to_string()]);
        assert_eq!(p.value(1, 1), 0.041);
        assert_eq!(p.n_post(), 1);
    }

    #[test]
    fn rejects_na_cell() {
        let err = load_panel("s,a,b\nA,1,NA\nB,2,3\n", 1).unwrap_err();
        assert!(matches!(err, Error::Data(_)), "{err}");
        assert!(err.to_string().contains("NA"));
    }

    #[test]
    fn rejects_nan_and_inf() {
        assert!(load_panel("s,a,b\nA,1,NaN\nB,2,3\n", 1).is_err());
        assert!(load_panel("s,a,b\nA,1,inf\nB,2,3\n", 1).is_err());
    }

    #[test]
    fn rejects_ragged_rows() {
        let err = load_panel("s,a,b\nA,1\nB,2,3\n", 1).unwrap_err();
        assert!(err.to_string().contains("ragged"));
    }

    #[test]
    fn rejects_duplicate_units_but_not_periods() {
        assert!(load_panel("s,a,b\nA,1,2\nA,2,3\n", 1).is_err());
        let p = load_panel("s,a,a\nA,1,2\nB,2,3\n", 1).unwrap();
        assert_eq!(p.period_ids(), &["a".to_string(), "a".to_string()]);
    }

    #[test]
    fn rejects_t_pre_out_of_range() {
        assert!(load_panel(SMALL, 0).is_err());
        assert!(load_panel(SMALL, 4).is_err());
        assert!(load_panel(SMALL, 3).is_ok());
    }

    #[test]
    fn rejects_single_unit() {
        assert!(load_panel("s,a\nA,1\n", 1).is_err());
    }

    #[test]
    fn csv_round_trip_is_exact() {
        let p = load_panel(SMALL, 2).unwrap();
        let q = load_panel(&p.to_csv(), 2).unwrap();
        assert_eq!(p.values(), q.values());
    }

    fn grid(n: usize, s: usize) -> Panel {
        Panel::from_matrix(DMatrix::from_fn(n, s, |i, t| (i * 100 + t) as f64), 1).unwrap()
    }

    #[test]
    fn full_subsample_is_identity() {
        let p = grid(5, 6);
        let q = p.subsample(5, 6, 1, 9).unwrap();
        assert_eq!(p, q);
    }

    #[test]
    fn subsample_takes_consecutive_columns() {
        let p = grid(50, 40);
        for seed in 0..20 {
            let q = p.subsample(10, 10, 7, seed).unwrap();
            assert_eq!((q.n_units(), q.n_periods(), q.t_pre()), (10, 10, 7));
            for i in 0..10 {
                let unit = q.value(i, 0) as usize / 100;
                let first = q.value(i, 0) as usize % 100;
                for t in 0..10 {
                    assert_eq!(q.value(i, t), p.value(unit, first + t));
                }
                if i > 0 {
                    assert!(q.value(i, 0) > q.value(i - 1, 0), "row order preserved");
                }
            }
        }
    }

    #[test]
    fn subsample_is_seeded() {
        let p = grid(50, 40);
        assert_eq!(p.subsample(10, 10, 7, 3).unwrap(), p.subsample(10, 10, 7, 3).unwrap());
        assert_ne!(p.subsample(10, 10, 7, 3).unwrap(), p.subsample(10, 10, 7, 4).unwrap());
    }

    #[test]
    fn subsample_rejects_oversize() {
        let p = grid(5, 6);
        assert!(p.subsample(6, 6, 1, 0).is_err());
        assert!(p.subsample(5, 7, 1, 0).is_err());
    }

    #[test]
    fn treatment_shifts_only_treated_post_cells() {
        let p = Panel::from_matrix(DMatrix::from_element(4, 5, 0.03), 3).unwrap();
        let sc = TreatmentScenario::homogeneous(4, 0.05, 2).unwrap();
        let q = p.apply_effects(&[1, 3], &sc).unwrap();
        for i in 0..4 {
            for t in 0..5 {
                let expected = if (i == 1 || i == 3) && t >= 3 { 0.03 + 0.05 } else { 0.03 };
                assert_eq!(q.value(i, t), expected);
            }
        }
    }

    #[test]
    fn linear_effects_span_zero_to_point_one() {
        let sc = TreatmentScenario::linear(10, 0.0, 0.1, 3).unwrap();
        assert_eq!(sc.effects[0], 0.0);
        assert!((sc.effects[9] - 0.1).abs() < 1e-15);
        let p = Panel::from_matrix(DMatrix::zeros(10, 10), 7).unwrap();
        let all: Vec<usize> = (0..10).collect();
        let q = p.apply_effects(&all, &sc).unwrap();
        for i in 0..10 {
            assert_eq!(q.value(i, 9), sc.effects[i]);
            assert_eq!(q.value(i, 6), 0.0);
        }
    }

    #[test]
    fn zero_effects_leave_panel_unchanged() {
        let p = grid(4, 5).with_t_pre(2).unwrap();
        let sc = TreatmentScenario::homogeneous(4, 0.0, 3).unwrap();
        assert_eq!(p.apply_effects(&[0, 2], &sc).unwrap(), p);
    }

    #[test]
    fn treatment_dimension_mismatch() {
        let p = grid(4, 5).with_t_pre(2).unwrap();
        assert!(p
            .apply_effects(&[0], &TreatmentScenario::homogeneous(3, 0.1, 3).unwrap())
            .is_err());
        assert!(p
            .apply_effects(&[0], &TreatmentScenario::homogeneous(4, 0.1, 2).unwrap())
            .is_err());
    }

    #[test]
    fn period_permutation_reorders_columns() {
        let p = grid(2, 4).with_t_pre(2).unwrap();
        let q = p.permute_periods(&[2, 3, 0, 1]).unwrap();
        assert_eq!(q.value(1, 0), p.value(1, 2));
        assert_eq!(q.period_ids()[0], "p2");
    }
}
