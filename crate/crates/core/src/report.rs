//! Tables, JSON dumps and static SVG plots of pipeline results.
//!
//! Plot elements carry the plotted values in `data-*` attributes so a plot can be checked
//! against the table it was drawn from.

use std::fmt::Write as _;
use std::fs::{self, File};
use std::io::BufWriter;
use std::path::{Path, PathBuf};

use serde::Serialize;

use crate::econ::{
    GmmEstimate, InnovationSeries, MimickingPortfolio, OosResult, PanelDate, RegressionFit, SignReport, SpanningR2,
};
use crate::entropy::EntropySeries;
use crate::error::{Error, Result};

/// Output files of one run. Files are written under a `.partial` name and only take their final
/// name in [`finish`](Self::finish), so an aborted run leaves its artifacts marked.
#[derive(Debug)]
pub struct Artifacts {
    dir: PathBuf,
    names: Vec<String>,
}

pub const PARTIAL: &str = ".partial";

impl Artifacts {
    pub fn new(dir: &Path) -> Result<Self> {
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        Ok(Artifacts {
            dir: dir.to_path_buf(),
            names: Vec::new(),
        })
    }

    pub fn dir(&self) -> &Path {
        &self.dir
    }

    /// Where to write artifact `name` while the run is in progress.
    pub fn path(&mut self, name: &str) -> PathBuf {
        if !self.names.iter().any(|n| n == name) {
            self.names.push(name.to_string());
        }
        self.dir.join(format!("{name}{PARTIAL}"))
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    /// Renames every artifact to its final name and returns the final paths in creation order.
    pub fn finish(self) -> Result<Vec<(String, PathBuf)>> {
        let mut out = Vec::with_capacity(self.names.len());
        for name in self.names {
            let from = self.dir.join(format!("{name}{PARTIAL}"));
            let to = self.dir.join(&name);
            fs::rename(&from, &to).map_err(|e| Error::io(&from, e))?;
            out.push((name, to));
        }
        Ok(out)
    }
}

/// One requested out-of-sample window; `result` is `Err` with the reason when it could not run.
#[derive(Debug, Clone, Serialize)]
pub struct OosRow {
    pub predictor: String,
    pub h: usize,
    pub result: std::result::Result<OosResult, String>,
}

/// A mimicking portfolio with the dates of its factor series.
#[derive(Debug, Clone, Serialize)]
pub struct NamedFactor {
    pub name: String,
    pub portfolio: MimickingPortfolio,
    pub dates: Vec<PanelDate>,
}

#[derive(Debug, Clone, Default)]
pub struct Results {
    pub entropy: Option<EntropySeries>,
    pub is_fits: Vec<(String, RegressionFit)>,
    pub oos: Vec<OosRow>,
    pub innovations: Vec<(String, InnovationSeries)>,
    pub factors: Vec<NamedFactor>,
    pub gmm: Vec<(String, GmmEstimate)>,
    pub macro_fits: Vec<(String, RegressionFit)>,
    pub spanning: Vec<SpanningR2>,
    pub sign: Option<SignReport>,
}

fn num(v: f64) -> String {
    if v.is_finite() {
        format!("{v:.17e}")
    } else {
        String::new()
    }
}

fn opt(v: Option<f64>) -> String {
    v.map(num).unwrap_or_default()
}

fn csv_writer(path: &Path) -> Result<csv::Writer<BufWriter<File>>> {
    let f = File::create(path).map_err(|e| Error::io(path, e))?;
    Ok(csv::Writer::from_writer(BufWriter::new(f)))
}

fn write_rows(path: &Path, header: &[&str], rows: impl IntoIterator<Item = Vec<String>>) -> Result<()> {
    let mut w = csv_writer(path)?;
    let io = |e: csv::Error| Error::io(path, e.into());
    w.write_record(header).map_err(io)?;
    for r in rows {
        w.write_record(&r).map_err(io)?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

pub fn write_json<T: Serialize + ?Sized>(path: &Path, value: &T) -> Result<()> {
    let f = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = BufWriter::new(f);
    serde_json::to_writer_pretty(&mut w, value).map_err(|e| Error::io(path, e.into()))?;
    std::io::Write::write_all(&mut w, b"\n").map_err(|e| Error::io(path, e))
}

/// Coefficient table: one row per (model, regressor).
pub fn write_fits_csv(path: &Path, fits: &[(String, RegressionFit)]) -> Result<()> {
    let rows = fits.iter().flat_map(|(model, f)| {
        (0..f.coef.len()).map(move |j| {
            vec![
                model.clone(),
                f.names[j].clone(),
                num(f.coef[j]),
                num(f.se(j)),
                num(f.t_stats[j]),
                opt(f.scaled[j]),
                f.n_obs.to_string(),
                num(f.r2),
                f.dropped.to_string(),
                f.lags.to_string(),
            ]
        })
    });
    write_rows(
        path,
        &["model", "regressor", "coef", "se", "t_stat", "scaled", "n_obs", "r2", "dropped", "hac_lags"],
        rows,
    )
}

pub fn write_oos_csv(path: &Path, rows: &[OosRow]) -> Result<()> {
    let rows = rows.iter().map(|r| match &r.result {
        Ok(o) => vec![
            r.predictor.clone(),
            r.h.to_string(),
            opt(o.r2),
            opt(o.mean_beta),
            opt(o.beta_t),
            o.n_eval.to_string(),
            o.n_fallback.to_string(),
            "ok".to_string(),
        ],
        Err(why) => vec![
            r.predictor.clone(),
            r.h.to_string(),
            String::new(),
            String::new(),
            String::new(),
            "0".to_string(),
            "0".to_string(),
            why.clone(),
        ],
    });
    write_rows(
        path,
        &["predictor", "h", "r2_oos", "mean_beta", "beta_t", "n_eval", "n_fallback", "status"],
        rows,
    )
}

pub fn write_gmm_csv(path: &Path, sets: &[(String, GmmEstimate)]) -> Result<()> {
    let rows = sets.iter().flat_map(|(set, g)| {
        (0..g.factors.len()).map(move |k| {
            vec![
                set.clone(),
                g.factors[k].clone(),
                num(g.lambda[k]),
                num(g.lambda_se[k]),
                num(g.lambda_t[k]),
                num(g.scaled_lambda[k]),
                num(g.beta_std[k]),
                g.assets.len().to_string(),
                g.n_obs.to_string(),
            ]
        })
    });
    write_rows(
        path,
        &["test_assets", "factor", "lambda", "se", "t_stat", "scaled_lambda", "beta_std", "n_assets", "n_obs"],
        rows,
    )
}

pub fn write_mimic_csv(path: &Path, factors: &[NamedFactor]) -> Result<()> {
    let rows = factors.iter().flat_map(|f| {
        let p = &f.portfolio;
        (0..p.fit.coef.len()).map(move |j| {
            vec![
                f.name.clone(),
                p.fit.names[j].clone(),
                num(p.fit.coef[j]),
                num(p.fit.se(j)),
                num(p.fit.t_stats[j]),
                num(p.fit.r2),
                p.fit.n_obs.to_string(),
            ]
        })
    });
    write_rows(path, &["factor", "asset", "weight", "se", "t_stat", "r2", "n_obs"], rows)
}

/// Factor return series on a shared date index; every factor must cover the same dates.
pub fn write_factor_series_csv(path: &Path, factors: &[NamedFactor]) -> Result<()> {
    let Some(first) = factors.first() else {
        return write_rows(path, &["date"], std::iter::empty());
    };
    if factors.iter().any(|f| f.dates != first.dates) {
        return Err(Error::Dimension("factor series have different dates".into()));
    }
    let mut header = vec!["date"];
    header.extend(factors.iter().map(|f| f.name.as_str()));
    let rows = first.dates.iter().enumerate().map(|(i, d)| {
        std::iter::once(d.to_string())
            .chain(factors.iter().map(|f| num(f.portfolio.factor[i])))
            .collect()
    });
    write_rows(path, &header, rows)
}

pub fn write_innovations_csv(path: &Path, inn: &[(String, InnovationSeries)]) -> Result<()> {
    let rows = inn.iter().flat_map(|(name, s)| {
        s.dates
            .iter()
            .zip(&s.residuals)
            .map(move |(d, e)| vec![name.clone(), d.to_string(), s.p.to_string(), num(*e)])
    });
    write_rows(path, &["series", "date", "ar_order", "innovation"], rows)
}

pub fn write_spanning_csv(path: &Path, rows: &[SpanningR2]) -> Result<()> {
    let rows = rows
        .iter()
        .enumerate()
        .map(|(i, r)| vec![(i + 1).to_string(), r.name.clone(), num(r.r2), r.dropped.join(";")]);
    write_rows(path, &["rank", "series", "r2", "dropped_regressors"], rows)
}

pub fn write_sign_csv(path: &Path, report: &SignReport) -> Result<()> {
    let sign = |s: Option<crate::econ::Sign>| s.map(|s| s.to_string()).unwrap_or_default();
    let rows = report.rows.iter().flat_map(|r| {
        r.premia.iter().map(move |p| {
            vec![
                r.factor.clone(),
                r.forecaster.clone().unwrap_or_default(),
                opt(r.forecast_t),
                sign(r.forecast_sign),
                p.test_assets.clone(),
                opt(p.t_stat),
                sign(p.sign),
                r.verdict.to_string(),
            ]
        })
    });
    write_rows(
        path,
        &["factor", "forecaster", "forecast_t", "forecast_sign", "test_assets", "premium_t", "premium_sign", "verdict"],
        rows,
    )
}

const W: f64 = 720.0;
const H: f64 = 360.0;
const PAD: f64 = 48.0;
const COLORS: [&str; 6] = ["#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b"];

fn esc(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;").replace('"', "&quot;")
}

fn svg_open(title: &str) -> String {
    let mut s = String::new();
    let _ = writeln!(
        s,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{W}" height="{H}" viewBox="0 0 {W} {H}" font-family="sans-serif" font-size="11">"#
    );
    let _ = writeln!(s, r#"<title>{}</title>"#, esc(title));
    let _ = writeln!(s, r#"<text x="{}" y="18" text-anchor="middle" font-size="14">{}</text>"#, W / 2.0, esc(title));
    s
}

fn range(values: impl Iterator<Item = f64>) -> (f64, f64) {
    let (lo, hi) = values.fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), v| (a.min(v), b.max(v)));
    if !lo.is_finite() {
        (0.0, 1.0)
    } else if hi - lo < 1e-12 {
        (lo - 0.5, hi + 0.5)
    } else {
        (lo, hi)
    }
}

fn axes(s: &mut String, lo: f64, hi: f64) {
    let _ = writeln!(
        s,
        r##"<line x1="{PAD}" y1="{}" x2="{}" y2="{}" stroke="#333"/><line x1="{PAD}" y1="{PAD}" x2="{PAD}" y2="{}" stroke="#333"/>"##,
        H - PAD,
        W - PAD,
        H - PAD,
        H - PAD
    );
    let _ = writeln!(s, r#"<text x="{}" y="{}" text-anchor="end">{:.3}</text>"#, PAD - 4.0, H - PAD, lo);
    let _ = writeln!(s, r#"<text x="{}" y="{}" text-anchor="end">{:.3}</text>"#, PAD - 4.0, PAD + 4.0, hi);
}

fn write_svg(path: &Path, mut s: String) -> Result<()> {
    s.push_str("</svg>\n");
    fs::write(path, s).map_err(|e| Error::io(path, e))
}

/// Line plot of several series over shared x labels; missing values break the line.
pub fn line_plot_svg(path: &Path, title: &str, labels: &[String], series: &[(String, Vec<Option<f64>>)]) -> Result<()> {
    let mut s = svg_open(title);
    let (lo, hi) = range(series.iter().flat_map(|(_, v)| v.iter().flatten().copied()));
    axes(&mut s, lo, hi);
    let n = labels.len().max(2) - 1;
    let px = |i: usize| PAD + (W - 2.0 * PAD) * i as f64 / n as f64;
    let py = |v: f64| H - PAD - (H - 2.0 * PAD) * (v - lo) / (hi - lo);
    if let (Some(a), Some(b)) = (labels.first(), labels.last()) {
        let _ = writeln!(s, r#"<text x="{PAD}" y="{}">{}</text>"#, H - PAD + 16.0, esc(a));
        let _ = writeln!(s, r#"<text x="{}" y="{}" text-anchor="end">{}</text>"#, W - PAD, H - PAD + 16.0, esc(b));
    }
    for (k, (name, values)) in series.iter().enumerate() {
        let color = COLORS[k % COLORS.len()];
        let mut path_d = String::new();
        let mut pen_down = false;
        for (i, v) in values.iter().enumerate() {
            match v {
                Some(v) => {
                    let _ = write!(path_d, "{}{:.2},{:.2} ", if pen_down { "L" } else { "M" }, px(i), py(*v));
                    pen_down = true;
                }
                None => pen_down = false,
            }
        }
        let _ = writeln!(s, r#"<path d="{}" fill="none" stroke="{color}" data-series="{}"/>"#, path_d.trim_end(), esc(name));
        for (i, v) in values.iter().enumerate() {
            if let Some(v) = v {
                let _ = writeln!(
                    s,
                    r#"<circle cx="{:.2}" cy="{:.2}" r="2" fill="{color}" data-series="{}" data-x="{}" data-y="{}"/>"#,
                    px(i),
                    py(*v),
                    esc(name),
                    esc(&labels[i]),
                    v
                );
            }
        }
        let _ = writeln!(
            s,
            r#"<text x="{}" y="{}" fill="{color}">{}</text>"#,
            W - PAD - 120.0,
            PAD + 14.0 * k as f64,
            esc(name)
        );
    }
    write_svg(path, s)
}

/// Vertical bars, one per label, drawn from zero.
pub fn bar_chart_svg(path: &Path, title: &str, bars: &[(String, f64)]) -> Result<()> {
    let mut s = svg_open(title);
    let (lo, hi) = range(bars.iter().map(|b| b.1).chain([0.0]));
    axes(&mut s, lo, hi);
    let py = |v: f64| H - PAD - (H - 2.0 * PAD) * (v - lo) / (hi - lo);
    let slot = (W - 2.0 * PAD) / bars.len().max(1) as f64;
    for (i, (label, v)) in bars.iter().enumerate() {
        let x = PAD + slot * i as f64 + slot * 0.15;
        let (top, bottom) = (py(v.max(0.0)), py(v.min(0.0)));
        let _ = writeln!(
            s,
            r#"<rect x="{x:.2}" y="{top:.2}" width="{:.2}" height="{:.2}" fill="{}" data-label="{}" data-value="{}"/>"#,
            slot * 0.7,
            (bottom - top).max(0.5),
            COLORS[0],
            esc(label),
            v
        );
        let _ = writeln!(
            s,
            r#"<text x="{:.2}" y="{}" text-anchor="middle">{}</text>"#,
            x + slot * 0.35,
            H - PAD + 14.0,
            esc(label)
        );
    }
    write_svg(path, s)
}

/// Points sorted ascending by value and placed at x = rank 1..n.
pub fn rank_scatter_svg(path: &Path, title: &str, points: &[(String, f64)]) -> Result<()> {
    let mut sorted = points.to_vec();
    sorted.sort_by(|a, b| a.1.total_cmp(&b.1).then_with(|| a.0.cmp(&b.0)));
    let mut s = svg_open(title);
    let (lo, hi) = range(sorted.iter().map(|p| p.1));
    axes(&mut s, lo, hi);
    let n = sorted.len().max(2) - 1;
    let px = |i: usize| PAD + (W - 2.0 * PAD) * i as f64 / n as f64;
    let py = |v: f64| H - PAD - (H - 2.0 * PAD) * (v - lo) / (hi - lo);
    for (i, (name, v)) in sorted.iter().enumerate() {
        let _ = writeln!(
            s,
            r#"<circle cx="{:.2}" cy="{:.2}" r="3" fill="{}" data-rank="{}" data-label="{}" data-value="{}"><title>{}</title></circle>"#,
            px(i),
            py(*v),
            COLORS[0],
            i + 1,
            esc(name),
            v,
            esc(name)
        );
    }
    write_svg(path, s)
}

/// Next-word probabilities as a word cloud: font size grows with the square root of the
/// probability, words laid out in rows in descending order.
pub fn word_cloud_svg(path: &Path, title: &str, words: &[(String, f64)]) -> Result<()> {
    let mut s = svg_open(title);
    let top = words.iter().map(|w| w.1).fold(0.0, f64::max);
    let (mut x, mut y, mut row_h) = (PAD, PAD, 0.0f64);
    for (word, p) in words {
        let size = if top > 0.0 { 10.0 + 30.0 * (p / top).sqrt() } else { 10.0 };
        let width = 0.6 * size * word.chars().count() as f64 + 8.0;
        if x + width > W - PAD && x > PAD {
            x = PAD;
            y += row_h + 4.0;
            row_h = 0.0;
        }
        row_h = row_h.max(size);
        if y + size > H {
            break;
        }
        let _ = writeln!(
            s,
            r#"<text x="{x:.2}" y="{:.2}" font-size="{size:.2}" fill="{}" data-label="{}" data-value="{}">{}</text>"#,
            y + size,
            COLORS[0],
            esc(word),
            p,
            esc(word)
        );
        x += width;
    }
    write_svg(path, s)
}

/// Writes every table and plot for the results that are present. Nothing is written for an
/// empty result set.
pub fn emit_tables_and_plots(results: &Results, out: &mut Artifacts) -> Result<()> {
    if let Some(series) = &results.entropy {
        series.write_csv(&out.path("ent.csv"))?;
        let labels: Vec<String> = series.rows.iter().map(|r| r.month.to_string()).collect();
        let col = |f: fn(&crate::entropy::EntropyRow) -> Option<f64>| series.rows.iter().map(f).collect::<Vec<_>>();
        line_plot_svg(
            &out.path("ent.svg"),
            "Entropy components",
            &labels,
            &[
                ("ENT".to_string(), col(|r| r.ent)),
                ("ENT_NEWS".to_string(), col(|r| r.ent_news)),
                ("ENT_MODEL".to_string(), col(|r| r.ent_model)),
            ],
        )?;
    }
    if !results.is_fits.is_empty() {
        write_fits_csv(&out.path("is.csv"), &results.is_fits)?;
        write_json(&out.path("is.json"), &results.is_fits)?;
    }
    if !results.oos.is_empty() {
        write_oos_csv(&out.path("oos.csv"), &results.oos)?;
        write_json(&out.path("oos.json"), &results.oos)?;
    }
    if !results.innovations.is_empty() {
        write_innovations_csv(&out.path("innovations.csv"), &results.innovations)?;
        write_json(&out.path("innovations.json"), &results.innovations)?;
    }
    if !results.factors.is_empty() {
        write_mimic_csv(&out.path("mimic.csv"), &results.factors)?;
        write_factor_series_csv(&out.path("factors.csv"), &results.factors)?;
        write_json(&out.path("mimic.json"), &results.factors)?;
    }
    if !results.gmm.is_empty() {
        write_gmm_csv(&out.path("fm.csv"), &results.gmm)?;
        write_json(&out.path("fm.json"), &results.gmm)?;
        let bars: Vec<(String, f64)> = results
            .gmm
            .iter()
            .flat_map(|(set, g)| {
                g.factors
                    .iter()
                    .zip(&g.scaled_lambda)
                    .map(move |(f, l)| (if results.gmm.len() > 1 { format!("{set}:{f}") } else { f.clone() }, *l))
            })
            .collect();
        bar_chart_svg(&out.path("fm.svg"), "Scaled risk premia", &bars)?;
    }
    if !results.macro_fits.is_empty() {
        write_fits_csv(&out.path("macro.csv"), &results.macro_fits)?;
        write_json(&out.path("macro.json"), &results.macro_fits)?;
        let pts: Vec<(String, f64)> = results.macro_fits.iter().map(|(n, f)| (n.clone(), f.r2)).collect();
        rank_scatter_svg(&out.path("macro_r2.svg"), "Macro forecast R2", &pts)?;
    }
    if !results.spanning.is_empty() {
        write_spanning_csv(&out.path("spanning.csv"), &results.spanning)?;
        let pts: Vec<(String, f64)> = results.spanning.iter().map(|r| (r.name.clone(), r.r2)).collect();
        rank_scatter_svg(&out.path("spanning_r2.svg"), "Spanning R2", &pts)?;
    }
    if let Some(sign) = &results.sign {
        write_sign_csv(&out.path("sign.csv"), sign)?;
        write_json(&out.path("sign.json"), sign)?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_results_write_nothing() {
        let dir = tempfile::tempdir().unwrap();
        let mut a = Artifacts::new(dir.path()).unwrap();
        emit_tables_and_plots(&Results::default(), &mut a).unwrap();
        assert!(a.names().is_empty());
        assert!(a.finish().unwrap().is_empty());
        assert_eq!(fs::read_dir(dir.path()).unwrap().count(), 0);
    }

    #[test]
    fn partial_names_until_finished() {
        let dir = tempfile::tempdir().unwrap();
        let mut a = Artifacts::new(dir.path()).unwrap();
        fs::write(a.path("x.csv"), "a\n").unwrap();
        assert!(dir.path().join("x.csv.partial").exists());
        a.finish().unwrap();
        assert!(dir.path().join("x.csv").exists() && !dir.path().join("x.csv.partial").exists());
    }
}
