//! Leaderboard tables with a fixed ten-column layout.

use serde::{Deserialize, Serialize};

use super::{combine_reports, HarnessError};
use crate::metrics::{FramesUsed, MetricConfig, MetricReport, SubMetrics};

pub const COLUMNS: [&str; 10] = ["Approach", "MPPE", "HRRE", "AMMD", "CPMSE", "HRTS", "CMD", "PEM", "PDEM", "RMSE×100"];
const DECIMALS: usize = 3;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Aggregation {
    /// Every fold counts equally.
    #[default]
    FoldMean,
    /// Folds weighted by their frame counts.
    FrameWeighted,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LeaderboardRow {
    pub method: String,
    pub report: MetricReport,
    pub fold_count: usize,
    pub aggregation: Aggregation,
}

impl LeaderboardRow {
    /// Aggregates fold reports. PBIAS, PEM and PDEM are recomputed from the
    /// aggregated sub-metrics.
    pub fn aggregate(
        method: &str,
        folds: &[MetricReport],
        aggregation: Aggregation,
        config: &MetricConfig,
    ) -> Result<Self, HarnessError> {
        if folds.is_empty() {
            return Err(HarnessError::EmptyInput("no fold reports"));
        }
        let report = match aggregation {
            Aggregation::FrameWeighted => combine_reports(folds, config)?,
            Aggregation::FoldMean => {
                let n = folds.len() as f64;
                let mean = |f: fn(&MetricReport) -> f64| folds.iter().map(f).sum::<f64>() / n;
                let sum = |f: fn(&MetricReport) -> usize| folds.iter().map(f).sum();
                let sub = SubMetrics {
                    mppe: Some(mean(|r| r.mppe)),
                    hrre: Some(mean(|r| r.hrre)),
                    ammd: Some(mean(|r| r.ammd)),
                    cpmse: Some(mean(|r| r.cpmse)),
                    hrts: Some(mean(|r| r.hrts)),
                    cmd: Some(mean(|r| r.cmd)),
                };
                let used = FramesUsed {
                    mppe: sum(|r| r.frames_used_mppe),
                    hrre: sum(|r| r.frames_used_hrre),
                    ammd: sum(|r| r.frames_used_ammd),
                    cpmse: sum(|r| r.frames_used_cpmse),
                    hrts: sum(|r| r.frames_used_hrts),
                    cmd: sum(|r| r.frames_used_cmd),
                    rmse: sum(|r| r.frames_used_rmse),
                };
                MetricReport::from_parts(&sub, mean(|r| r.rmse), used, &config.amo)?
            }
        };
        Ok(Self {
            method: method.to_string(),
            report,
            fold_count: folds.len(),
            aggregation,
        })
    }

    /// A row built from precomputed sub-metric values.
    pub fn from_sub_metrics(
        method: &str,
        sub: &SubMetrics,
        rmse_x100: f64,
        config: &MetricConfig,
    ) -> Result<Self, HarnessError> {
        let report = MetricReport::from_parts(sub, rmse_x100 / 100.0, FramesUsed::default(), &config.amo)?;
        Ok(Self {
            method: method.to_string(),
            report,
            fold_count: 0,
            aggregation: Aggregation::FoldMean,
        })
    }

    /// The nine numeric columns, in table order.
    pub fn values(&self) -> [f64; 9] {
        let r = &self.report;
        [r.mppe, r.hrre, r.ammd, r.cpmse, r.hrts, r.cmd, r.pem, r.pdem, r.rmse_x100]
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Rank {
    #[default]
    None,
    Best,
    Second,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum LeaderboardFormat {
    Csv,
    Markdown,
    Json,
}

impl std::str::FromStr for LeaderboardFormat {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "csv" => Ok(Self::Csv),
            "markdown" | "md" => Ok(Self::Markdown),
            "json" => Ok(Self::Json),
            other => Err(format!("unknown leaderboard format {other:?}")),
        }
    }
}

/// Rows plus per-cell ranks. Lower is better in every column; ranks are
/// decided on the printed (3-decimal) values so ties on screen are ties.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Leaderboard {
    pub rows: Vec<LeaderboardRow>,
    pub ranks: Vec<[Rank; 9]>,
}

fn printed(v: f64) -> String {
    format!("{v:.DECIMALS$}")
}

impl Leaderboard {
    #[allow(clippy::needless_range_loop)]
    pub fn new(rows: Vec<LeaderboardRow>) -> Result<Self, HarnessError> {
        if rows.is_empty() {
            return Err(HarnessError::EmptyInput("leaderboard needs at least one row"));
        }
        let mut ranks = vec![[Rank::None; 9]; rows.len()];
        for col in 0..9 {
            let shown: Vec<f64> = rows.iter().map(|r| printed(r.values()[col]).parse().unwrap_or(f64::NAN)).collect();
            let best = shown.iter().copied().filter(|v| v.is_finite()).fold(f64::INFINITY, f64::min);
            let second = shown.iter().copied().filter(|v| v.is_finite() && *v > best).fold(f64::INFINITY, f64::min);
            for (i, v) in shown.iter().enumerate() {
                if *v == best {
                    ranks[i][col] = Rank::Best;
                } else if *v == second {
                    ranks[i][col] = Rank::Second;
                }
            }
        }
        Ok(Self { rows, ranks })
    }

    pub fn render(&self, format: LeaderboardFormat) -> String {
        match format {
            LeaderboardFormat::Csv => self.to_csv(),
            LeaderboardFormat::Markdown => self.to_markdown(),
            LeaderboardFormat::Json => serde_json::to_string_pretty(self).expect("leaderboard serializes"),
        }
    }

    /// Plain values; ranks are only carried by the Markdown and JSON forms.
    pub fn to_csv(&self) -> String {
        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record(COLUMNS).expect("in-memory write");
        for row in &self.rows {
            let mut record = vec![row.method.clone()];
            record.extend(row.values().iter().map(|v| printed(*v)));
            w.write_record(&record).expect("in-memory write");
        }
        String::from_utf8(w.into_inner().expect("in-memory flush")).expect("utf-8 output")
    }

    /// Best values in bold, second best in italics.
    pub fn to_markdown(&self) -> String {
        let mut out = format!("| {} |\n", COLUMNS.join(" | "));
        out.push_str("|---|");
        out.push_str(&"---:|".repeat(9));
        out.push('\n');
        for (row, ranks) in self.rows.iter().zip(&self.ranks) {
            out.push_str(&format!("| {} |", row.method.replace('|', "\\|")));
            for (v, rank) in row.values().iter().zip(ranks) {
                let cell = printed(*v);
                let cell = match rank {
                    Rank::Best => format!("**{cell}**"),
                    Rank::Second => format!("_{cell}_"),
                    Rank::None => cell,
                };
                out.push_str(&format!(" {cell} |"));
            }
            out.push('\n');
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn row(name: &str, v: [f64; 6], rmse_x100: f64) -> LeaderboardRow {
        let sub = SubMetrics {
            mppe: Some(v[0]),
            hrre: Some(v[1]),
            ammd: Some(v[2]),
            cpmse: Some(v[3]),
            hrts: Some(v[4]),
            cmd: Some(v[5]),
        };
        LeaderboardRow::from_sub_metrics(name, &sub, rmse_x100, &MetricConfig::default()).unwrap()
    }

    #[test]
    fn single_row_is_best_everywhere() {
        let board = Leaderboard::new(vec![row("only", [1.0, 2.0, 0.1, 3.0, 4.0, 5.0], 0.3)]).unwrap();
        assert!(board.ranks[0].iter().all(|r| *r == Rank::Best));
        let md = board.to_markdown();
        assert!(md.starts_with("| Approach | MPPE | HRRE | AMMD | CPMSE | HRTS | CMD | PEM | PDEM | RMSE×100 |"));
        assert!(md.contains("**1.000**"));
    }

    #[test]
    fn min_per_column_is_flagged() {
        let a = row("a", [1.0, 300.0, 0.2, 3.0, 9.0, 12.0], 0.40);
        let b = row("b", [2.0, 200.0, 0.2, 4.0, 8.0, 13.0], 0.30);
        let c = row("c", [3.0, 250.0, 0.3, 5.0, 10.0, 11.0], 0.35);
        let board = Leaderboard::new(vec![a, b, c]).unwrap();
        use Rank::*;
        assert_eq!(board.ranks[0][..6], [Best, None, Best, Best, Second, Second]);
        assert_eq!(board.ranks[1][..6], [Second, Best, Best, Second, Best, None]);
        assert_eq!(board.ranks[2][..6], [None, Second, Second, None, None, Best]);
        assert_eq!(board.ranks[1][8], Best);
        assert_eq!(board.ranks[2][8], Second);
    }

    #[test]
    fn csv_has_exact_columns() {
        let board = Leaderboard::new(vec![row("x, y", [1.0; 6], 0.312)]).unwrap();
        let csv = board.to_csv();
        let mut lines = csv.lines();
        assert_eq!(lines.next().unwrap(), "Approach,MPPE,HRRE,AMMD,CPMSE,HRTS,CMD,PEM,PDEM,RMSE×100");
        assert!(lines.next().unwrap().starts_with("\"x, y\",1.000,1.000"));
        assert!(csv.trim_end().ends_with("0.312"));
    }

    #[test]
    fn empty_and_aggregation() {
        assert!(matches!(Leaderboard::new(vec![]), Err(HarnessError::EmptyInput(_))));
        let cfg = MetricConfig::default();
        let a = row("m", [1.0, 100.0, 0.1, 2.0, 3.0, 4.0], 10.0).report;
        let b = row("m", [3.0, 300.0, 0.3, 4.0, 5.0, 6.0], 30.0).report;
        let mean = LeaderboardRow::aggregate("m", &[a, b], Aggregation::FoldMean, &cfg).unwrap();
        assert_eq!(mean.report.mppe, 2.0);
        assert_eq!(mean.report.hrre, 200.0);
        assert!((mean.report.rmse - 0.2).abs() < 1e-15);
        assert_eq!(mean.fold_count, 2);
        assert!(LeaderboardRow::aggregate("m", &[], Aggregation::FoldMean, &cfg).is_err());
    }
}
