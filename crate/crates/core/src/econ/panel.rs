use std::collections::BTreeMap;
use std::fmt;
use std::fs::File;
use std::io::BufWriter;
use std::path::Path;
use std::str::FromStr;

use chrono::{Datelike, NaiveDate};
use indexmap::IndexMap;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::month::Month;

/// Row key of a panel: a calendar month or a trading day.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum PanelDate {
    Month(Month),
    Day(NaiveDate),
}

impl PanelDate {
    pub fn month(self) -> Month {
        match self {
            PanelDate::Month(m) => m,
            PanelDate::Day(d) => Month::new(d.year(), d.month() as u8).expect("valid calendar month"),
        }
    }
}

impl fmt::Display for PanelDate {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            PanelDate::Month(m) => m.fmt(f),
            PanelDate::Day(d) => write!(f, "{}", d.format("%Y-%m-%d")),
        }
    }
}

impl FromStr for PanelDate {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let s = s.trim();
        if s.len() == 10 {
            NaiveDate::parse_from_str(s, "%Y-%m-%d")
                .map(PanelDate::Day)
                .map_err(|_| Error::Invalid(format!("invalid date {s:?} (expected YYYY-MM-DD)")))
        } else {
            s.parse().map(PanelDate::Month)
        }
    }
}

impl Serialize for PanelDate {
    fn serialize<S: serde::Serializer>(&self, serializer: S) -> std::result::Result<S::Ok, S::Error> {
        serializer.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for PanelDate {
    fn deserialize<D: serde::Deserializer<'de>>(deserializer: D) -> std::result::Result<Self, D::Error> {
        let s = String::deserialize(deserializer)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Frequency {
    Monthly,
    Daily,
}

/// Measurement unit of a column. Return columns are `Percent` or `Decimal`; anything else is a
/// `Level`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Unit {
    Percent,
    Decimal,
    #[default]
    Level,
}

impl Unit {
    pub fn is_return(self) -> bool {
        self != Unit::Level
    }

    /// Multiplier taking a decimal return into this unit.
    pub fn scale(self) -> f64 {
        if self == Unit::Percent {
            100.0
        } else {
            1.0
        }
    }
}

/// Named columns of optional observations sharing one date index. Monthly panels cover every
/// month between their first and last row so that row offsets are month offsets.
#[derive(Debug, Clone, PartialEq)]
pub struct TimeSeriesPanel {
    dates: Vec<PanelDate>,
    columns: IndexMap<String, Vec<Option<f64>>>,
    units: IndexMap<String, Unit>,
}

/// Complete rows of a set of columns after listwise deletion.
#[derive(Debug, Clone, PartialEq)]
pub struct Aligned {
    pub rows: Vec<usize>,
    pub columns: Vec<Vec<f64>>,
    /// Rows dropped for a missing value.
    pub dropped: usize,
}

impl TimeSeriesPanel {
    /// An empty panel over a strictly increasing index of a single frequency. Monthly indices
    /// must be contiguous.
    pub fn new(dates: Vec<PanelDate>) -> Result<Self> {
        if dates.windows(2).any(|w| w[0] >= w[1]) {
            return Err(Error::Invalid("panel dates must be strictly increasing".into()));
        }
        let monthly = dates.iter().filter(|d| matches!(d, PanelDate::Month(_))).count();
        if monthly != 0 && monthly != dates.len() {
            return Err(Error::Invalid("panel mixes monthly and daily dates".into()));
        }
        if monthly != 0 && dates.windows(2).any(|w| w[1].month().since(w[0].month()) != 1) {
            return Err(Error::Invalid("monthly panel index has gaps".into()));
        }
        Ok(TimeSeriesPanel {
            dates,
            columns: IndexMap::new(),
            units: IndexMap::new(),
        })
    }

    /// A monthly panel covering `first..=last`.
    pub fn monthly(first: Month, last: Month) -> Self {
        Self::new(Month::range(first, last).map(PanelDate::Month).collect()).expect("contiguous months")
    }

    pub fn frequency(&self) -> Frequency {
        match self.dates.first() {
            Some(PanelDate::Day(_)) => Frequency::Daily,
            _ => Frequency::Monthly,
        }
    }

    pub fn dates(&self) -> &[PanelDate] {
        &self.dates
    }

    pub fn len(&self) -> usize {
        self.dates.len()
    }

    pub fn is_empty(&self) -> bool {
        self.dates.is_empty()
    }

    pub fn names(&self) -> impl Iterator<Item = &str> {
        self.columns.keys().map(String::as_str)
    }

    pub fn has(&self, name: &str) -> bool {
        self.columns.contains_key(name)
    }

    pub fn unit(&self, name: &str) -> Unit {
        self.units.get(name).copied().unwrap_or_default()
    }

    /// Row of a month in a monthly panel.
    pub fn row_of(&self, month: Month) -> Option<usize> {
        let first = match self.dates.first()? {
            PanelDate::Month(m) => *m,
            PanelDate::Day(_) => return None,
        };
        let i = month.since(first);
        (0..self.dates.len() as i64).contains(&i).then_some(i as usize)
    }

    /// Adds or replaces a column. Return columns must share one unit.
    pub fn insert(&mut self, name: &str, values: Vec<Option<f64>>, unit: Unit) -> Result<()> {
        if values.len() != self.dates.len() {
            return Err(Error::Dimension(format!(
                "column {name} has {} values for {} dates",
                values.len(),
                self.dates.len()
            )));
        }
        if unit.is_return() {
            if let Some((other, u)) = self.units.iter().find(|(n, u)| u.is_return() && **u != unit && *n != name) {
                return Err(Error::Config(format!("column {name} is {unit:?} but {other} is {u:?}")));
            }
        }
        let values = values.into_iter().map(|v| v.filter(|x| x.is_finite())).collect();
        self.columns.insert(name.to_string(), values);
        self.units.insert(name.to_string(), unit);
        Ok(())
    }

    pub fn insert_full(&mut self, name: &str, values: &[f64], unit: Unit) -> Result<()> {
        self.insert(name, values.iter().map(|&v| Some(v)).collect(), unit)
    }

    pub fn column(&self, name: &str) -> Result<&[Option<f64>]> {
        self.columns
            .get(name)
            .map(Vec::as_slice)
            .ok_or_else(|| Error::Invalid(format!("panel has no column {name:?}")))
    }

    /// Rows where every named column is present, with those columns extracted.
    pub fn aligned(&self, names: &[&str]) -> Result<Aligned> {
        self.aligned_where(names, |_| true)
    }

    /// Like [`aligned`](Self::aligned) but only over rows accepted by `keep`. Rows rejected by
    /// `keep` are not counted as dropped.
    pub fn aligned_where(&self, names: &[&str], keep: impl Fn(usize) -> bool) -> Result<Aligned> {
        let cols: Vec<&[Option<f64>]> = names.iter().map(|n| self.column(n)).collect::<Result<_>>()?;
        let mut out = Aligned {
            rows: Vec::new(),
            columns: vec![Vec::new(); names.len()],
            dropped: 0,
        };
        for r in (0..self.len()).filter(|&r| keep(r)) {
            if cols.iter().all(|c| c[r].is_some()) {
                out.rows.push(r);
                for (dst, c) in out.columns.iter_mut().zip(&cols) {
                    dst.push(c[r].expect("checked"));
                }
            } else {
                out.dropped += 1;
            }
        }
        Ok(out)
    }

    /// Column shifted so that row t holds the value at row t + `lead` (negative for lags).
    pub fn shifted(&self, name: &str, lead: i64) -> Result<Vec<Option<f64>>> {
        let c = self.column(name)?;
        let n = c.len() as i64;
        Ok((0..n)
            .map(|t| {
                let s = t + lead;
                if (0..n).contains(&s) {
                    c[s as usize]
                } else {
                    None
                }
            })
            .collect())
    }

    /// Reads a panel CSV whose first column is the date. Empty cells and `NA` are missing.
    /// Monthly files may skip months; the gaps become missing rows. `units` maps column names to
    /// units; unlisted columns are levels.
    pub fn read_csv(path: &Path, units: &IndexMap<String, Unit>) -> Result<Self> {
        let mut rdr = csv::Reader::from_path(path).map_err(|e| Error::io(path, e.into()))?;
        let parse_err = |line: usize, message: String| Error::Parse {
            path: path.into(),
            line,
            message,
        };
        let header: Vec<String> = rdr
            .headers()
            .map_err(|e| parse_err(1, e.to_string()))?
            .iter()
            .map(|s| s.trim().to_string())
            .collect();
        if header.len() < 2 {
            return Err(parse_err(1, "expected a date column and at least one series".into()));
        }
        let mut rows: BTreeMap<PanelDate, Vec<Option<f64>>> = BTreeMap::new();
        for (i, rec) in rdr.records().enumerate() {
            let line = i + 2;
            let rec = rec.map_err(|e| parse_err(line, e.to_string()))?;
            let date: PanelDate = rec[0].parse().map_err(|e: Error| parse_err(line, e.to_string()))?;
            let values = (1..header.len())
                .map(|j| {
                    let cell = rec.get(j).unwrap_or("").trim();
                    if cell.is_empty() || cell.eq_ignore_ascii_case("na") {
                        Ok(None)
                    } else {
                        cell.parse::<f64>()
                            .map(Some)
                            .map_err(|_| parse_err(line, format!("bad number {cell:?} in column {}", header[j])))
                    }
                })
                .collect::<Result<Vec<_>>>()?;
            if rows.insert(date, values).is_some() {
                return Err(parse_err(line, format!("duplicate date {date}")));
            }
        }
        let dates: Vec<PanelDate> = match (rows.keys().next(), rows.keys().next_back()) {
            (Some(PanelDate::Month(a)), Some(PanelDate::Month(b))) => {
                Month::range(*a, *b).map(PanelDate::Month).collect()
            }
            _ => rows.keys().copied().collect(),
        };
        let mut panel = Self::new(dates).map_err(|e| parse_err(0, e.to_string()))?;
        for (j, name) in header.iter().enumerate().skip(1) {
            let values = panel
                .dates
                .iter()
                .map(|d| rows.get(d).and_then(|r| r[j - 1]))
                .collect();
            let unit = units.get(name).copied().unwrap_or_default();
            panel.insert(name, values, unit)?;
        }
        if let Some(name) = units.keys().find(|n| !panel.has(n)) {
            return Err(Error::Config(format!("unit given for unknown column {name}")));
        }
        Ok(panel)
    }

    /// Reads a unit sidecar: a TOML table mapping column names to `percent`, `decimal` or `level`.
    pub fn read_units(path: &Path) -> Result<IndexMap<String, Unit>> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        toml::from_str(&text).map_err(|e| Error::Parse {
            path: path.into(),
            line: 0,
            message: e.to_string(),
        })
    }

    pub fn units(&self) -> &IndexMap<String, Unit> {
        &self.units
    }

    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let file = File::create(path).map_err(|e| Error::io(path, e))?;
        let mut w = csv::Writer::from_writer(BufWriter::new(file));
        let io = |e: csv::Error| Error::io(path, e.into());
        w.write_record(std::iter::once("date").chain(self.names())).map_err(io)?;
        for (r, d) in self.dates.iter().enumerate() {
            let cells = self
                .columns
                .values()
                .map(|c| c[r].map(|v| format!("{v:.17e}")).unwrap_or_default());
            w.write_record(std::iter::once(d.to_string()).chain(cells)).map_err(io)?;
        }
        w.flush().map_err(|e| Error::io(path, e))
    }

    pub fn write_units(&self, path: &Path) -> Result<()> {
        let text = toml::to_string(&self.units).map_err(|e| Error::Config(e.to_string()))?;
        std::fs::write(path, text).map_err(|e| Error::io(path, e))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn m(s: &str) -> Month {
        s.parse().unwrap()
    }

    #[test]
    fn csv_fills_month_gaps_and_round_trips() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("p.csv");
        std::fs::write(&path, "date,MKT,ENT\n2000-01,1.5,\n2000-03,NA,0.25\n2000-04,-2,0.5\n").unwrap();
        let units: IndexMap<String, Unit> = [("MKT".to_string(), Unit::Percent)].into_iter().collect();
        let p = TimeSeriesPanel::read_csv(&path, &units).unwrap();
        assert_eq!(p.len(), 4);
        assert_eq!(p.column("MKT").unwrap(), &[Some(1.5), None, None, Some(-2.0)]);
        assert_eq!(p.unit("ENT"), Unit::Level);
        let a = p.aligned(&["MKT", "ENT"]).unwrap();
        assert_eq!((a.rows.clone(), a.dropped), (vec![3], 3));
        assert_eq!(p.row_of(m("2000-03")), Some(2));

        let out = dir.path().join("q.csv");
        p.write_csv(&out).unwrap();
        assert_eq!(TimeSeriesPanel::read_csv(&out, &units).unwrap(), p);
    }

    #[test]
    fn mixed_return_units_rejected() {
        let mut p = TimeSeriesPanel::monthly(m("2000-01"), m("2000-02"));
        p.insert_full("MKT", &[1.0, 2.0], Unit::Percent).unwrap();
        assert!(matches!(p.insert_full("SMB", &[0.01, 0.02], Unit::Decimal), Err(Error::Config(_))));
        p.insert_full("DY", &[3.0, 3.1], Unit::Level).unwrap();
    }

    #[test]
    fn daily_dates_parse() {
        let d: PanelDate = "2001-02-03".parse().unwrap();
        assert_eq!(d.to_string(), "2001-02-03");
        assert_eq!(d.month(), m("2001-02"));
        assert!(TimeSeriesPanel::new(vec![d, PanelDate::Month(m("2001-03"))]).is_err());
    }

    #[test]
    fn shifted_leads_and_lags() {
        let mut p = TimeSeriesPanel::monthly(m("2000-01"), m("2000-03"));
        p.insert_full("x", &[1.0, 2.0, 3.0], Unit::Level).unwrap();
        assert_eq!(p.shifted("x", 1).unwrap(), vec![Some(2.0), Some(3.0), None]);
        assert_eq!(p.shifted("x", -1).unwrap(), vec![None, Some(1.0), Some(2.0)]);
    }
}
