//! Monthly aggregation of accounting entries and derived analyses.
//!
//! Entries are posted against standard codes after chart normalization.
//! Aggregation produces one trial balance per company per month; balance-sheet
//! classes carry forward across months while result accounts accumulate
//! within the calendar year and reset every January. Vertical analysis
//! expresses each tracked account as a share of total assets, horizontal
//! analysis as the relative change against the previous month, and the ratio
//! set evaluates the shipped ratio definitions. One `MonthlyVector` per
//! company per month collects all of it.

pub mod ratio;

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use chrono::{Datelike, NaiveDate};
use serde::{Deserialize, Serialize};

use crate::chart::{StandardChart, VECTOR_ACCOUNTS};
use crate::error::{Error, Result};
use ratio::RatioDefinition;

/// Relative changes are capped at the magnitude where the square-root pixel
/// coding saturates; a change from zero to a nonzero balance encodes as the
/// cap itself.
pub const CHANGE_CAP: f64 = 1.69;

/// A calendar month.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Period {
    pub year: i32,
    pub month: u8,
}

impl Period {
    pub fn new(year: i32, month: u8) -> Self {
        assert!((1..=12).contains(&month), "month {month} out of range");
        Self { year, month }
    }

    pub fn from_date(date: NaiveDate) -> Self {
        Self::new(date.year(), date.month() as u8)
    }

    /// Months since 0000-01, a total order usable for arithmetic.
    pub fn index(self) -> i64 {
        i64::from(self.year) * 12 + i64::from(self.month) - 1
    }

    pub fn from_index(index: i64) -> Self {
        Self::new(
            i32::try_from(index.div_euclid(12)).expect("year in range"),
            (index.rem_euclid(12) + 1) as u8,
        )
    }

    pub fn plus_months(self, months: i32) -> Self {
        Self::from_index(self.index() + i64::from(months))
    }

    pub fn next(self) -> Self {
        self.plus_months(1)
    }
}

impl fmt::Display for Period {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{:04}-{:02}", self.year, self.month)
    }
}

impl FromStr for Period {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let (y, m) = s
            .split_once('-')
            .ok_or_else(|| Error::invalid(format!("bad period {s:?}, expected YYYY-MM")))?;
        let year: i32 = y.parse().map_err(|_| Error::invalid(format!("bad year in {s:?}")))?;
        let month: u8 = m.parse().map_err(|_| Error::invalid(format!("bad month in {s:?}")))?;
        if !(1..=12).contains(&month) {
            return Err(Error::invalid(format!("month out of range in {s:?}")));
        }
        Ok(Self { year, month })
    }
}

impl Serialize for Period {
    fn serialize<S: serde::Serializer>(&self, serializer: S) -> std::result::Result<S::Ok, S::Error> {
        serializer.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for Period {
    fn deserialize<D: serde::Deserializer<'de>>(deserializer: D) -> std::result::Result<Self, D::Error> {
        let s = String::deserialize(deserializer)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

/// One dated debit/credit posting against a standard account code.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AccountingEntry {
    pub company_id: String,
    pub date: NaiveDate,
    pub account_code: u32,
    pub debit: f64,
    pub credit: f64,
}

impl AccountingEntry {
    pub fn validate(&self) -> Result<()> {
        if self.debit < 0.0 || self.credit < 0.0 {
            return Err(Error::invalid(format!(
                "entry for {} on {} has negative amounts",
                self.company_id, self.date
            )));
        }
        if self.debit == 0.0 && self.credit == 0.0 {
            return Err(Error::invalid(format!(
                "entry for {} on {} has neither debit nor credit",
                self.company_id, self.date
            )));
        }
        Ok(())
    }

    pub fn period(&self) -> Period {
        Period::from_date(self.date)
    }
}

/// Whether healthy balances of a code sit on the debit or credit side.
/// Assets and expense-type result accounts are debit-natural; liabilities,
/// net worth, and revenue accounts are credit-natural.
fn debit_natural(code: u32) -> bool {
    match StandardChart::class_of(code) {
        1 => true,
        2 => false,
        3 => !(31000..32000).contains(&code),
        4 => code < 42000,
        _ => true,
    }
}

/// Signed contribution of one entry to its account's balance.
fn signed_amount(entry: &AccountingEntry) -> f64 {
    if debit_natural(entry.account_code) {
        entry.debit - entry.credit
    } else {
        entry.credit - entry.debit
    }
}

/// Trial balance of one company for one month.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MonthlyBalance {
    pub company_id: String,
    pub period: Period,
    /// Signed balance per posted code; absent codes read as zero.
    pub balances: BTreeMap<u32, f64>,
}

impl MonthlyBalance {
    /// Balance recorded directly on `code`, zero if absent.
    pub fn amount(&self, code: u32) -> f64 {
        self.balances.get(&code).copied().unwrap_or(0.0)
    }

    /// Balance of `code`'s whole subtree (postings on the code itself plus
    /// any descendant accounts).
    pub fn rollup(&self, code: u32, chart: &StandardChart) -> f64 {
        match chart.subtree(code) {
            Some(codes) if codes.len() == 1 => self.amount(codes[0]),
            Some(codes) => codes.iter().map(|c| self.amount(*c)).sum(),
            None => 0.0,
        }
    }

    /// Sum of all class-1 balances.
    pub fn total_assets(&self) -> f64 {
        self.balances
            .iter()
            .filter(|(code, _)| StandardChart::class_of(**code) == 1)
            .map(|(_, v)| v)
            .sum()
    }
}

/// An entry excluded from aggregation, with the reason.
#[derive(Debug, Clone, PartialEq)]
pub struct RejectedEntry {
    pub entry: AccountingEntry,
    pub reason: String,
}

/// Result of monthly aggregation: per-company balances in period order plus
/// the entries that were rejected.
#[derive(Debug, Clone, Default)]
pub struct Aggregation {
    pub companies: BTreeMap<String, Vec<MonthlyBalance>>,
    pub rejected: Vec<RejectedEntry>,
}

/// Aggregate entries into monthly trial balances.
///
/// For every company a balance exists for each month from its first to its
/// last entry. Classes 1, 2, and 4 accumulate across the whole history;
/// class 3 accumulates within a calendar year and restarts every January.
/// Entries with unknown codes or invalid amounts are rejected, not fatal.
pub fn aggregate_monthly(entries: &[AccountingEntry], chart: &StandardChart) -> Aggregation {
    let mut agg = Aggregation::default();
    // Canonical processing order makes the fold independent of input order.
    let mut accepted: Vec<&AccountingEntry> = Vec::with_capacity(entries.len());
    for entry in entries {
        if let Err(e) = entry.validate() {
            agg.rejected.push(RejectedEntry { entry: entry.clone(), reason: e.to_string() });
            continue;
        }
        if !chart.contains(entry.account_code) {
            agg.rejected.push(RejectedEntry {
                entry: entry.clone(),
                reason: format!("unknown account code {}", entry.account_code),
            });
            continue;
        }
        accepted.push(entry);
    }
    accepted.sort_by(|a, b| {
        (&a.company_id, a.date, a.account_code)
            .cmp(&(&b.company_id, b.date, b.account_code))
            .then(a.debit.total_cmp(&b.debit))
            .then(a.credit.total_cmp(&b.credit))
    });

    let mut by_company: BTreeMap<&str, Vec<&AccountingEntry>> = BTreeMap::new();
    for entry in accepted {
        by_company.entry(&entry.company_id).or_default().push(entry);
    }

    for (company, entries) in by_company {
        let first = entries.first().expect("non-empty").period();
        let last = entries.iter().map(|e| e.period()).max().expect("non-empty");
        let mut deltas: BTreeMap<Period, BTreeMap<u32, f64>> = BTreeMap::new();
        for entry in &entries {
            *deltas
                .entry(entry.period())
                .or_default()
                .entry(entry.account_code)
                .or_insert(0.0) += signed_amount(entry);
        }

        let mut carried: BTreeMap<u32, f64> = BTreeMap::new();
        let mut result_ytd: BTreeMap<u32, f64> = BTreeMap::new();
        let mut months = Vec::new();
        let mut period = first;
        loop {
            if period.month == 1 {
                result_ytd.clear();
            }
            if let Some(month_deltas) = deltas.get(&period) {
                for (&code, &delta) in month_deltas {
                    let target = if StandardChart::class_of(code) == 3 {
                        &mut result_ytd
                    } else {
                        &mut carried
                    };
                    *target.entry(code).or_insert(0.0) += delta;
                }
            }
            let mut balances = carried.clone();
            balances.extend(result_ytd.iter().map(|(&c, &v)| (c, v)));
            months.push(MonthlyBalance {
                company_id: company.to_string(),
                period,
                balances,
            });
            if period == last {
                break;
            }
            period = period.next();
        }
        agg.companies.insert(company.to_string(), months);
    }
    agg
}

/// Each tracked account as a share of total assets. `None` marks an invalid
/// month (total assets not strictly positive); such months are excluded from
/// window selection downstream.
pub fn vertical_analysis(balance: &MonthlyBalance, chart: &StandardChart) -> Option<[f64; 21]> {
    let total = balance.total_assets();
    if total <= 0.0 {
        return None;
    }
    let mut values = [0.0; 21];
    for (i, code) in VECTOR_ACCOUNTS.iter().enumerate() {
        values[i] = balance.rollup(*code, chart) / total;
    }
    Some(values)
}

/// Month-over-month relative change per tracked account, capped at
/// ±[`CHANGE_CAP`]. A move off a zero balance is reported as the signed cap;
/// zero to zero is zero.
pub fn horizontal_analysis(
    prev: &MonthlyBalance,
    curr: &MonthlyBalance,
    chart: &StandardChart,
) -> Result<[f64; 21]> {
    if prev.company_id != curr.company_id {
        return Err(Error::contract(format!(
            "horizontal analysis across companies {} and {}",
            prev.company_id, curr.company_id
        )));
    }
    if prev.period.next() != curr.period {
        return Err(Error::contract(format!(
            "periods {} and {} are not consecutive",
            prev.period, curr.period
        )));
    }
    let mut values = [0.0; 21];
    for (i, code) in VECTOR_ACCOUNTS.iter().enumerate() {
        let before = prev.rollup(*code, chart);
        let after = curr.rollup(*code, chart);
        values[i] = if before == 0.0 {
            if after == 0.0 {
                0.0
            } else {
                after.signum() * CHANGE_CAP
            }
        } else {
            ((after - before) / before.abs()).clamp(-CHANGE_CAP, CHANGE_CAP)
        };
    }
    Ok(values)
}

/// Static company attributes carried into vectors and image headers.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct CompanyMeta {
    pub division: u8,
    pub group: u16,
    pub region_code: u8,
    pub country_code: u8,
}

/// Monthly inflation attached to a vector: the month's rate and the trailing
/// twelve-month rate, both as decimal fractions.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct InflationPoint {
    pub monthly: f64,
    pub twelve_month: f64,
}

/// The per-company-per-month record feeding the image encoder.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MonthlyVector {
    pub company_id: String,
    pub period: Period,
    pub division: u8,
    pub group: u16,
    pub region_code: u8,
    pub country_code: u8,
    pub inflation_month: f64,
    pub inflation_12m: f64,
    pub vertical: [f64; 21],
    pub horizontal: [f64; 21],
    pub ratios: [Option<f64>; 21],
    pub valid: bool,
}

/// Build one vector per month of a company's balance history.
///
/// The first month has all-zero horizontal analysis. Months whose total
/// assets are not strictly positive are marked invalid and carry zeroed
/// analyses. `inflation(period)` supplies the index values for the header.
pub fn build_monthly_vectors(
    history: &[MonthlyBalance],
    meta: CompanyMeta,
    ratio_defs: &[RatioDefinition],
    inflation: impl Fn(Period) -> InflationPoint,
    chart: &StandardChart,
) -> Result<Vec<MonthlyVector>> {
    if ratio_defs.len() != 21 {
        return Err(Error::contract(format!(
            "expected 21 ratio definitions, got {}",
            ratio_defs.len()
        )));
    }
    for w in history.windows(2) {
        if w[0].company_id != w[1].company_id || w[0].period.next() != w[1].period {
            return Err(Error::contract(
                "balance history must be one company in consecutive-month order",
            ));
        }
    }
    let mut vectors = Vec::with_capacity(history.len());
    for (i, balance) in history.iter().enumerate() {
        let vertical = vertical_analysis(balance, chart);
        let valid = vertical.is_some();
        let horizontal = if i == 0 {
            [0.0; 21]
        } else {
            horizontal_analysis(&history[i - 1], balance, chart)?
        };
        let mut ratios = [None; 21];
        for (slot, def) in ratios.iter_mut().zip(ratio_defs) {
            *slot = def.evaluate_at(history, i, chart);
        }
        let point = inflation(balance.period);
        vectors.push(MonthlyVector {
            company_id: balance.company_id.clone(),
            period: balance.period,
            division: meta.division,
            group: meta.group,
            region_code: meta.region_code,
            country_code: meta.country_code,
            inflation_month: point.monthly,
            inflation_12m: point.twelve_month,
            vertical: vertical.unwrap_or([0.0; 21]),
            horizontal,
            ratios,
            valid,
        });
    }
    Ok(vectors)
}

/// The twelve consecutive valid months ending at `anchor`, oldest first.
pub fn select_window(vectors: &[MonthlyVector], anchor: Period) -> Result<&[MonthlyVector]> {
    let company = vectors
        .first()
        .map(|v| v.company_id.clone())
        .unwrap_or_default();
    let exclusion = |reason: String| Error::InsufficientHistory {
        company: company.clone(),
        reason,
    };
    let end = vectors
        .iter()
        .position(|v| v.period == anchor)
        .ok_or_else(|| exclusion(format!("no data for anchor month {anchor}")))?;
    if end + 1 < 12 {
        return Err(exclusion(format!(
            "only {} months of history end at {anchor}, need 12",
            end + 1
        )));
    }
    let window = &vectors[end + 1 - 12..=end];
    for (i, v) in window.iter().enumerate() {
        if v.period != anchor.plus_months(i as i32 - 11) {
            return Err(exclusion("months are not consecutive".into()));
        }
        if !v.valid {
            return Err(exclusion(format!("month {} is invalid", v.period)));
        }
    }
    Ok(window)
}

// ------------------------------------------------------------- entry IO

/// Read entries from CSV with header `company_id,date,account_code,debit,credit`.
/// Malformed rows are returned as rejections, not errors.
pub fn read_entries_csv<R: std::io::Read>(
    reader: R,
) -> Result<(Vec<AccountingEntry>, Vec<String>)> {
    let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(reader);
    let mut entries = Vec::new();
    let mut rejects = Vec::new();
    for (i, record) in rdr.deserialize::<AccountingEntry>().enumerate() {
        match record {
            Ok(entry) => entries.push(entry),
            Err(e) => rejects.push(format!("row {}: {e}", i + 2)),
        }
    }
    Ok((entries, rejects))
}

pub fn write_entries_csv<W: std::io::Write>(writer: W, entries: &[AccountingEntry]) -> Result<()> {
    let mut wtr = csv::Writer::from_writer(writer);
    for entry in entries {
        wtr.serialize(entry)?;
    }
    wtr.flush()?;
    Ok(())
}

/// Read entries from JSON Lines with the same field names as the CSV form.
pub fn read_entries_jsonl<R: std::io::BufRead>(
    reader: R,
) -> Result<(Vec<AccountingEntry>, Vec<String>)> {
    let mut entries = Vec::new();
    let mut rejects = Vec::new();
    for (i, line) in reader.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        match serde_json::from_str(&line) {
            Ok(entry) => entries.push(entry),
            Err(e) => rejects.push(format!("line {}: {e}", i + 1)),
        }
    }
    Ok((entries, rejects))
}

pub fn write_entries_jsonl<W: std::io::Write>(
    mut writer: W,
    entries: &[AccountingEntry],
) -> Result<()> {
    for entry in entries {
        serde_json::to_writer(&mut writer, entry)?;
        writer.write_all(b"\n")?;
    }
    Ok(())
}

/// Write vectors as JSON Lines, one vector per line.
pub fn write_vectors_jsonl<W: std::io::Write>(
    mut writer: W,
    vectors: &[MonthlyVector],
) -> Result<()> {
    for vector in vectors {
        serde_json::to_writer(&mut writer, vector)?;
        writer.write_all(b"\n")?;
    }
    Ok(())
}

pub fn read_vectors_jsonl<R: std::io::BufRead>(reader: R) -> Result<Vec<MonthlyVector>> {
    let mut vectors = Vec::new();
    for (i, line) in reader.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let v: MonthlyVector = serde_json::from_str(&line)
            .map_err(|e| Error::data("vectors", format!("line {}: {e}", i + 1)))?;
        vectors.push(v);
    }
    Ok(vectors)
}

#[cfg(test)]
pub(crate) mod tests {
    use super::*;
    use crate::chart::StandardChart;

    pub(crate) fn balance_with(pairs: &[(u32, f64)]) -> MonthlyBalance {
        MonthlyBalance {
            company_id: "C1".into(),
            period: Period::new(2022, 6),
            balances: pairs.iter().copied().collect(),
        }
    }

    fn entry(company: &str, date: &str, code: u32, debit: f64, credit: f64) -> AccountingEntry {
        AccountingEntry {
            company_id: company.into(),
            date: date.parse().unwrap(),
            account_code: code,
            debit,
            credit,
        }
    }

    fn chart() -> &'static StandardChart {
        StandardChart::builtin()
    }

    #[test]
    fn period_arithmetic() {
        let p = Period::new(2020, 12);
        assert_eq!(p.next(), Period::new(2021, 1));
        assert_eq!(p.plus_months(-12), Period::new(2019, 12));
        assert_eq!(p.to_string(), "2020-12");
        assert_eq!("2020-12".parse::<Period>().unwrap(), p);
        assert!("2020-13".parse::<Period>().is_err());
    }

    #[test]
    fn balance_sheet_codes_carry_forward() {
        let entries = vec![entry("C1", "2022-01-15", 11100, 100.0, 0.0)];
        let agg = aggregate_monthly(&entries, chart());
        let months = &agg.companies["C1"];
        assert_eq!(months.len(), 1);
        assert_eq!(months[0].amount(11100), 100.0);

        // A later entry on another code extends the range; 11100 carries.
        let entries = vec![
            entry("C1", "2022-01-15", 11100, 100.0, 0.0),
            entry("C1", "2022-02-10", 11300, 20.0, 0.0),
        ];
        let agg = aggregate_monthly(&entries, chart());
        let months = &agg.companies["C1"];
        assert_eq!(months.len(), 2);
        assert_eq!(months[1].amount(11100), 100.0);
        assert_eq!(months[1].amount(11300), 20.0);
        assert_eq!(months[1].amount(11500), 0.0);
    }

    #[test]
    fn result_codes_reset_in_january() {
        let entries = vec![
            entry("C1", "2021-12-20", 31100, 0.0, 50.0),
            entry("C1", "2022-01-05", 11100, 10.0, 0.0),
        ];
        let agg = aggregate_monthly(&entries, chart());
        let months = &agg.companies["C1"];
        assert_eq!(months[0].period, Period::new(2021, 12));
        assert_eq!(months[0].amount(31100), 50.0);
        assert_eq!(months[1].period, Period::new(2022, 1));
        assert_eq!(months[1].amount(31100), 0.0);
    }

    #[test]
    fn result_codes_accumulate_within_year() {
        let entries = vec![
            entry("C1", "2022-01-20", 31100, 0.0, 50.0),
            entry("C1", "2022-02-20", 31100, 0.0, 30.0),
        ];
        let agg = aggregate_monthly(&entries, chart());
        let months = &agg.companies["C1"];
        assert_eq!(months[0].amount(31100), 50.0);
        assert_eq!(months[1].amount(31100), 80.0);
    }

    #[test]
    fn unknown_codes_and_bad_amounts_are_rejected() {
        let entries = vec![
            entry("C1", "2022-01-15", 11100, 100.0, 0.0),
            entry("C1", "2022-01-15", 99999, 5.0, 0.0),
            entry("C1", "2022-01-16", 11100, 0.0, 0.0),
        ];
        let agg = aggregate_monthly(&entries, chart());
        assert_eq!(agg.rejected.len(), 2);
        assert!(agg.rejected[0].reason.contains("99999") || agg.rejected[1].reason.contains("99999"));
        assert_eq!(agg.companies["C1"][0].amount(11100), 100.0);
    }

    #[test]
    fn aggregation_is_order_independent() {
        let mut entries = vec![
            entry("C1", "2022-01-15", 11100, 100.0, 0.0),
            entry("C1", "2022-01-20", 11100, 0.25, 0.0),
            entry("C1", "2022-02-15", 21100, 0.0, 40.0),
            entry("C2", "2022-01-10", 11100, 7.0, 0.0),
            entry("C1", "2022-02-15", 11100, 3.0, 1.0),
        ];
        let forward = aggregate_monthly(&entries, chart());
        entries.reverse();
        let backward = aggregate_monthly(&entries, chart());
        assert_eq!(forward.companies, backward.companies);
    }

    #[test]
    fn sign_convention_by_class() {
        let entries = vec![
            entry("C1", "2022-01-15", 11100, 100.0, 30.0), // asset: debits - credits
            entry("C1", "2022-01-15", 21100, 10.0, 50.0),  // liability: credits - debits
            entry("C1", "2022-01-15", 31100, 0.0, 80.0),   // revenue: credits - debits
            entry("C1", "2022-01-15", 32100, 60.0, 0.0),   // expense: debits - credits
        ];
        let agg = aggregate_monthly(&entries, chart());
        let m = &agg.companies["C1"][0];
        assert_eq!(m.amount(11100), 70.0);
        assert_eq!(m.amount(21100), 40.0);
        assert_eq!(m.amount(31100), 80.0);
        assert_eq!(m.amount(32100), 60.0);
    }

    #[test]
    fn rollup_sums_subtrees() {
        let balance = balance_with(&[(11101, 5.0), (11102, 7.0), (11200, 10.0)]);
        assert_eq!(balance.rollup(11100, chart()), 12.0);
        assert_eq!(balance.rollup(11000, chart()), 22.0);
        assert_eq!(balance.rollup(10000, chart()), 22.0);
        assert_eq!(balance.total_assets(), 22.0);
    }

    #[test]
    fn vertical_shares_of_total_assets() {
        let balance = balance_with(&[(11100, 50.0), (11300, 150.0)]);
        let v = vertical_analysis(&balance, chart()).unwrap();
        assert_eq!(v[0], 0.25); // 11100 / 200
        assert_eq!(v[2], 0.75); // 11300 / 200
        assert_eq!(v[1], 0.0);
    }

    #[test]
    fn vertical_invalid_when_assets_nonpositive() {
        let zero = balance_with(&[(21100, 10.0)]);
        assert!(vertical_analysis(&zero, chart()).is_none());
        let negative = balance_with(&[(11100, -5.0)]);
        assert!(vertical_analysis(&negative, chart()).is_none());
    }

    #[test]
    fn horizontal_relative_changes() {
        let mut prev = balance_with(&[(11100, 100.0), (11300, 40.0)]);
        prev.period = Period::new(2022, 5);
        let curr = balance_with(&[(11100, 110.0), (11300, 40.0), (11200, 5.0)]);
        let h = horizontal_analysis(&prev, &curr, chart()).unwrap();
        assert!((h[0] - 0.10).abs() < 1e-12);
        assert_eq!(h[1], CHANGE_CAP); // 0 -> 5 saturates
        assert_eq!(h[2], 0.0);
    }

    #[test]
    fn horizontal_of_identical_months_is_zero() {
        let mut prev = balance_with(&[(11100, 100.0), (21100, 30.0), (31100, 7.0)]);
        prev.period = Period::new(2022, 5);
        let mut curr = prev.clone();
        curr.period = Period::new(2022, 6);
        let h = horizontal_analysis(&prev, &curr, chart()).unwrap();
        assert_eq!(h, [0.0; 21]);
    }

    #[test]
    fn horizontal_requires_consecutive_months() {
        let mut prev = balance_with(&[(11100, 1.0)]);
        prev.period = Period::new(2022, 3);
        let mut curr = prev.clone();
        curr.period = Period::new(2022, 5);
        assert!(matches!(
            horizontal_analysis(&prev, &curr, chart()),
            Err(Error::Contract(_))
        ));
    }

    fn two_month_history() -> Vec<MonthlyBalance> {
        let entries = vec![
            entry("C1", "2022-01-15", 11100, 200.0, 0.0),
            entry("C1", "2022-01-15", 21100, 0.0, 50.0),
            entry("C1", "2022-01-15", 31100, 0.0, 80.0),
            entry("C1", "2022-02-15", 11100, 20.0, 0.0),
            entry("C1", "2022-02-15", 31100, 0.0, 10.0),
        ];
        aggregate_monthly(&entries, chart()).companies["C1"].clone()
    }

    fn test_meta() -> CompanyMeta {
        CompanyMeta { division: 47, group: 472, region_code: 35, country_code: 55 }
    }

    fn flat_inflation(_p: Period) -> InflationPoint {
        InflationPoint { monthly: 0.004, twelve_month: 0.05 }
    }

    #[test]
    fn vectors_compose_the_three_analyses() {
        let history = two_month_history();
        let defs = ratio::builtin_ratios();
        let vectors =
            build_monthly_vectors(&history, test_meta(), &defs, flat_inflation, chart()).unwrap();
        assert_eq!(vectors.len(), 2);
        assert_eq!(vectors[0].horizontal, [0.0; 21]);
        assert!(vectors.iter().all(|v| v.valid));

        let expected_vertical = vertical_analysis(&history[1], chart()).unwrap();
        let expected_horizontal = horizontal_analysis(&history[0], &history[1], chart()).unwrap();
        assert_eq!(vectors[1].vertical, expected_vertical);
        assert_eq!(vectors[1].horizontal, expected_horizontal);
        for (i, def) in defs.iter().enumerate() {
            assert_eq!(vectors[1].ratios[i], def.evaluate_at(&history, 1, chart()), "{}", def.name);
        }
        assert_eq!(vectors[1].inflation_month, 0.004);
    }

    #[test]
    fn window_selection_takes_last_twelve() {
        let mut history = Vec::new();
        for m in 0..24 {
            let mut b = balance_with(&[(11100, 100.0 + m as f64)]);
            b.period = Period::new(2021, 1).plus_months(m);
            history.push(b);
        }
        let defs = ratio::builtin_ratios();
        let vectors =
            build_monthly_vectors(&history, test_meta(), &defs, flat_inflation, chart()).unwrap();
        let window = select_window(&vectors, Period::new(2022, 12)).unwrap();
        assert_eq!(window.len(), 12);
        assert_eq!(window[0].period, Period::new(2022, 1));
        assert_eq!(window[11].period, Period::new(2022, 12));
    }

    #[test]
    fn window_selection_rejects_short_or_invalid_history() {
        let mut history = Vec::new();
        for m in 0..11 {
            let mut b = balance_with(&[(11100, 10.0)]);
            b.period = Period::new(2022, 1).plus_months(m);
            history.push(b);
        }
        let defs = ratio::builtin_ratios();
        let vectors =
            build_monthly_vectors(&history, test_meta(), &defs, flat_inflation, chart()).unwrap();
        assert!(matches!(
            select_window(&vectors, Period::new(2022, 11)),
            Err(Error::InsufficientHistory { .. })
        ));

        // Twelve months but one of them invalid.
        let mut history = Vec::new();
        for m in 0..12 {
            let amount = if m == 5 { 0.0 } else { 10.0 };
            let mut b = balance_with(&[(11100, amount)]);
            b.period = Period::new(2022, 1).plus_months(m);
            history.push(b);
        }
        let vectors =
            build_monthly_vectors(&history, test_meta(), &defs, flat_inflation, chart()).unwrap();
        assert!(matches!(
            select_window(&vectors, Period::new(2022, 12)),
            Err(Error::InsufficientHistory { .. })
        ));
    }

    #[test]
    fn entries_csv_round_trip_and_rejects() {
        let text = "company_id,date,account_code,debit,credit\n\
                    C1,2022-01-15,11100,100.0,0\n\
                    C1,not-a-date,11100,1,0\n\
                    C2,2022-02-01,21100,0,40.5\n";
        let (entries, rejects) = read_entries_csv(text.as_bytes()).unwrap();
        assert_eq!(entries.len(), 2);
        assert_eq!(rejects.len(), 1);
        assert!(rejects[0].contains("row 3"));

        let mut out = Vec::new();
        write_entries_csv(&mut out, &entries).unwrap();
        let (back, rejects) = read_entries_csv(out.as_slice()).unwrap();
        assert_eq!(back, entries);
        assert!(rejects.is_empty());
    }

    #[test]
    fn entries_jsonl_round_trip() {
        let entries = vec![
            entry("C1", "2022-01-15", 11100, 100.0, 0.0),
            entry("C2", "2022-02-01", 21100, 0.0, 40.5),
        ];
        let mut out = Vec::new();
        write_entries_jsonl(&mut out, &entries).unwrap();
        let (back, rejects) = read_entries_jsonl(out.as_slice()).unwrap();
        assert_eq!(back, entries);
        assert!(rejects.is_empty());
    }

    #[test]
    fn scaling_amounts_leaves_analyses_unchanged() {
        // Powers of two scale exactly in binary floating point, so the
        // invariance holds bitwise.
        let base = vec![
            entry("C1", "2022-01-15", 11100, 200.0, 0.0),
            entry("C1", "2022-01-15", 11300, 120.5, 0.0),
            entry("C1", "2022-01-15", 21100, 0.0, 50.25),
            entry("C1", "2022-01-15", 31100, 0.0, 80.0),
            entry("C1", "2022-02-15", 11100, 21.75, 0.0),
            entry("C1", "2022-02-15", 32100, 33.0, 0.0),
        ];
        for k in [0.25f64, 2.0, 1024.0] {
            let scaled: Vec<AccountingEntry> = base
                .iter()
                .map(|e| AccountingEntry { debit: e.debit * k, credit: e.credit * k, ..e.clone() })
                .collect();
            let a = aggregate_monthly(&base, chart()).companies["C1"].clone();
            let b = aggregate_monthly(&scaled, chart()).companies["C1"].clone();
            let defs = ratio::builtin_ratios();
            let va = build_monthly_vectors(&a, test_meta(), &defs, flat_inflation, chart()).unwrap();
            let vb = build_monthly_vectors(&b, test_meta(), &defs, flat_inflation, chart()).unwrap();
            for (x, y) in va.iter().zip(&vb) {
                assert_eq!(x.vertical, y.vertical, "k={k}");
                assert_eq!(x.horizontal, y.horizontal, "k={k}");
                assert_eq!(x.ratios, y.ratios, "k={k}");
            }
        }
    }

    #[test]
    fn class1_share_of_total_assets_is_exactly_one() {
        let history = two_month_history();
        for balance in &history {
            let total = balance.total_assets();
            assert!(total > 0.0);
            let class1: f64 = balance.rollup(10000, chart());
            assert_eq!(class1 / total, 1.0);
        }
    }
}
