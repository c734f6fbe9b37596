//! Per-strategy statistics, relative rates and table rendering.

use std::collections::BTreeSet;
use std::fmt::Write as _;
use std::time::Duration;

use super::plan::{Arm, LengthStats};
use crate::corpus::SeedFile;
use crate::{Error, Result};

/// Resources spent producing a seed set.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct Cost {
    pub execs: u64,
    pub wall: Duration,
    pub train_wall: Duration,
}

#[derive(Debug, Clone, PartialEq)]
pub struct StrategyReport {
    pub strategy: String,
    /// `|C|`
    pub seed_count: u64,
    /// `L(C)`
    pub unique_length_count: u64,
    pub unique_fraction: f64,
    /// Distinct lengths absent from the training corpus.
    pub novel_count: u64,
    pub mean_length: f64,
    pub std_length: f64,
    pub execs: u64,
    pub wall_secs: f64,
    pub execs_per_path: f64,
    pub wall_secs_per_path: f64,
    pub train_wall_secs: f64,
}

/// Mean and population standard deviation of `values`.
pub fn mean_std(values: &[u64]) -> (f64, f64) {
    if values.is_empty() {
        return (0.0, 0.0);
    }
    let n = values.len() as f64;
    let mean = values.iter().map(|&v| v as f64).sum::<f64>() / n;
    let var = values.iter().map(|&v| (v as f64 - mean).powi(2)).sum::<f64>() / n;
    (mean, var.sqrt())
}

pub fn compute_report(
    strategy: impl Into<String>,
    seeds: &[SeedFile],
    training_lengths: &BTreeSet<u64>,
    cost: Cost,
    stats: LengthStats,
) -> Result<StrategyReport> {
    let strategy = strategy.into();
    if seeds.is_empty() {
        return Err(Error::usage(format!("no seeds to report for `{strategy}`")));
    }
    let lengths: Vec<u64> = seeds
        .iter()
        .map(|s| {
            s.trace_length
                .ok_or_else(|| Error::usage(format!("seed {:?} of `{strategy}` has no trace length", s.key())))
        })
        .collect::<Result<_>>()?;
    let distinct: BTreeSet<u64> = lengths.iter().copied().collect();
    let novel = distinct.difference(training_lengths).count() as u64;
    let (mean, std) = match stats {
        LengthStats::Unique => mean_std(&distinct.iter().copied().collect::<Vec<_>>()),
        LengthStats::AllSeeds => mean_std(&lengths),
    };
    let n = seeds.len() as u64;
    let wall = cost.wall.as_secs_f64();
    Ok(StrategyReport {
        strategy,
        seed_count: n,
        unique_length_count: distinct.len() as u64,
        unique_fraction: distinct.len() as f64 / n as f64,
        novel_count: novel,
        mean_length: mean,
        std_length: std,
        execs: cost.execs,
        wall_secs: wall,
        execs_per_path: cost.execs as f64 / n as f64,
        wall_secs_per_path: wall / n as f64,
        train_wall_secs: cost.train_wall.as_secs_f64(),
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RateMetric {
    Seeds,
    UniqueLengths,
    Novel,
}

impl RateMetric {
    fn of(self, r: &StrategyReport) -> u64 {
        match self {
            RateMetric::Seeds => r.seed_count,
            RateMetric::UniqueLengths => r.unique_length_count,
            RateMetric::Novel => r.novel_count,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RateBasis {
    /// Both arms ran for the same time: the time cancels.
    EqualTime,
    /// Baseline cost per path over candidate cost per path, in executions.
    ExecsPerPath,
    /// As above in wall-clock seconds.
    WallPerPath,
}

pub fn relative_rate(candidate: &StrategyReport, baseline: &StrategyReport, metric: RateMetric, basis: RateBasis) -> Result<f64> {
    let (c, b) = (metric.of(candidate) as f64, metric.of(baseline) as f64);
    if b == 0.0 {
        return Err(Error::usage(format!("baseline `{}` has a zero count", baseline.strategy)));
    }
    match basis {
        RateBasis::EqualTime => Ok(c / b),
        RateBasis::ExecsPerPath | RateBasis::WallPerPath => {
            if c == 0.0 {
                return Ok(0.0);
            }
            let (cc, bc) = if basis == RateBasis::ExecsPerPath {
                (candidate.execs as f64, baseline.execs as f64)
            } else {
                (candidate.wall_secs, baseline.wall_secs)
            };
            if cc <= 0.0 || bc <= 0.0 {
                return Err(Error::usage("per-path rates need positive costs"));
            }
            Ok((bc / b) / (cc / c))
        }
    }
}

pub fn mean_length_ratio(candidate: &StrategyReport, baseline: &StrategyReport) -> Result<f64> {
    if !(baseline.mean_length > 0.0) {
        return Err(Error::usage(format!("baseline `{}` has zero mean length", baseline.strategy)));
    }
    Ok(candidate.mean_length / baseline.mean_length)
}

/// Equal-window rate after taking the candidate's training time out of its
/// fuzzing window: `(c · (window - train) / window) / b`.
pub fn discounted_rate(candidate_count: u64, baseline_count: u64, window: f64, train: f64) -> Result<f64> {
    if baseline_count == 0 {
        return Err(Error::usage("baseline count is zero"));
    }
    if !(window > 0.0) || !(0.0..window).contains(&train) {
        return Err(Error::usage("need 0 <= train < window"));
    }
    Ok(candidate_count as f64 * (window - train) / window / baseline_count as f64)
}

/// Whether `value` shown with as many decimals as `printed` gives `printed`,
/// by rounding or by truncation.
pub fn matches_printed(value: f64, printed: &str) -> bool {
    let Ok(target) = printed.parse::<f64>() else {
        return false;
    };
    let decimals = printed.split_once('.').map_or(0, |(_, d)| d.len()) as i32;
    let scale = 10f64.powi(decimals);
    let eq = |x: f64| (x - target * scale).abs() < 1e-6;
    eq((value * scale).round()) || eq((value * scale + 1e-9).trunc())
}

/// Everything the report tables show.
#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentReport {
    /// The phase-1 corpus followed by each synthetic batch.
    pub corpus_rows: Vec<StrategyReport>,
    /// Phase-2 discoveries per arm; `None` when an arm found nothing.
    pub phase2_rows: Vec<(Arm, Option<StrategyReport>)>,
    pub baseline: Arm,
}

impl ExperimentReport {
    pub fn phase2(&self, arm: Arm) -> Option<&StrategyReport> {
        self.phase2_rows.iter().find(|(a, _)| *a == arm).and_then(|(_, r)| r.as_ref())
    }

    fn rates(&self, r: &StrategyReport) -> [Option<f64>; 4] {
        let Some(b) = self.phase2(self.baseline) else {
            return [None; 4];
        };
        [
            relative_rate(r, b, RateMetric::Seeds, RateBasis::EqualTime).ok(),
            relative_rate(r, b, RateMetric::UniqueLengths, RateBasis::EqualTime).ok(),
            relative_rate(r, b, RateMetric::Novel, RateBasis::EqualTime).ok(),
            relative_rate(r, b, RateMetric::Seeds, RateBasis::ExecsPerPath).ok(),
        ]
    }

    pub fn to_tsv(&self) -> String {
        let mut s = String::from("# corpus\nclass\tseeds\tunique_lengths\tunique_fraction\tnovel\tmean_length\tstd_length\n");
        for r in &self.corpus_rows {
            let _ = writeln!(
                s,
                "{}\t{}\t{}\t{:.6}\t{}\t{:.6}\t{:.6}",
                r.strategy, r.seed_count, r.unique_length_count, r.unique_fraction, r.novel_count, r.mean_length, r.std_length
            );
        }
        let _ = writeln!(
            s,
            "# phase2 (baseline {})\nclass\tseeds\tunique_lengths\tunique_fraction\tnovel\texecs_per_path\tseed_rate\tlength_rate\tnovel_rate\texec_rate\tmean_length\tstd_length",
            self.baseline
        );
        for (arm, row) in &self.phase2_rows {
            match row {
                None => {
                    let _ = writeln!(s, "{arm}\t0\t0\tn/a\t0\tn/a\tn/a\tn/a\tn/a\tn/a\tn/a\tn/a");
                }
                Some(r) => {
                    let rates = self.rates(r).map(|x| x.map_or("n/a".into(), |v| format!("{v:.6}")));
                    let _ = writeln!(
                        s,
                        "{arm}\t{}\t{}\t{:.6}\t{}\t{:.3}\t{}\t{}\t{}\t{}\t{:.6}\t{:.6}",
                        r.seed_count,
                        r.unique_length_count,
                        r.unique_fraction,
                        r.novel_count,
                        r.execs_per_path,
                        rates[0],
                        rates[1],
                        rates[2],
                        rates[3],
                        r.mean_length,
                        r.std_length
                    );
                }
            }
        }
        s
    }

    pub fn to_text(&self) -> String {
        let mut rows = vec![vec![
            "Class C".to_string(),
            "|C|".into(),
            "L(C)".into(),
            "% Unique".into(),
            "Novel".into(),
            "mu(L(C))".into(),
            "sigma(L(C))".into(),
        ]];
        for r in &self.corpus_rows {
            rows.push(vec![
                r.strategy.clone(),
                r.seed_count.to_string(),
                r.unique_length_count.to_string(),
                format!("{:.3}", r.unique_fraction),
                r.novel_count.to_string(),
                format!("{:.3}", r.mean_length),
                format!("{:.3}", r.std_length),
            ]);
        }
        let mut out = String::from("Seed corpora\n");
        out.push_str(&align(&rows));

        let mut rows = vec![vec![
            "Class C".to_string(),
            "|C|".into(),
            "L(C)".into(),
            "L(C)/|C|".into(),
            "Novel".into(),
            "Execs/Path".into(),
            "Relative Rate".into(),
            "L(C) Rate".into(),
            "Novel Rate".into(),
            "mu(L(C))".into(),
            "sigma(L(C))".into(),
        ]];
        for (arm, row) in &self.phase2_rows {
            let Some(r) = row else {
                let mut v = vec![arm.to_string(), "0".into(), "0".into()];
                v.extend(std::iter::repeat("-".to_string()).take(8));
                rows.push(v);
                continue;
            };
            let rates = self.rates(r).map(|x| x.map_or("-".into(), |v| format!("{v:.4}")));
            rows.push(vec![
                arm.to_string(),
                r.seed_count.to_string(),
                r.unique_length_count.to_string(),
                format!("{:.4}", r.unique_fraction),
                r.novel_count.to_string(),
                format!("{:.3}", r.execs_per_path),
                rates[3].clone(),
                rates[1].clone(),
                rates[2].clone(),
                format!("{:.3}", r.mean_length),
                format!("{:.3}", r.std_length),
            ]);
        }
        let _ = writeln!(out, "\nPhase 2 discoveries (baseline {})", self.baseline);
        out.push_str(&align(&rows));
        out
    }
}

fn align(rows: &[Vec<String>]) -> String {
    let cols = rows.iter().map(Vec::len).max().unwrap_or(0);
    let widths: Vec<usize> = (0..cols)
        .map(|c| rows.iter().filter_map(|r| r.get(c)).map(String::len).max().unwrap_or(0))
        .collect();
    let mut out = String::new();
    for r in rows {
        let cells: Vec<String> = r.iter().enumerate().map(|(i, c)| format!("{c:<w$}", w = widths[i])).collect();
        out.push_str(cells.join("  ").trim_end());
        out.push('\n');
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    fn seeds(lengths: &[u64]) -> Vec<SeedFile> {
        lengths
            .iter()
            .enumerate()
            .map(|(i, &l)| SeedFile {
                trace_length: Some(l),
                ..SeedFile::new(vec![1], i as u32, "mutation", i as u64, 0)
            })
            .collect()
    }

    fn report(lengths: &[u64], execs: u64) -> StrategyReport {
        let cost = Cost {
            execs,
            ..Cost::default()
        };
        compute_report("x", &seeds(lengths), &BTreeSet::new(), cost, LengthStats::Unique).unwrap()
    }

    #[test]
    fn counts_and_novelty() {
        let training: BTreeSet<u64> = [5, 9].into();
        let r = compute_report("g", &seeds(&[5, 7, 5, 9, 11]), &training, Cost::default(), LengthStats::Unique).unwrap();
        assert_eq!((r.seed_count, r.unique_length_count, r.novel_count), (5, 4, 2));
        assert!((r.unique_fraction - 0.8).abs() < 1e-15);
        assert_eq!(r.mean_length, 8.0);
        assert!((r.std_length - 5f64.sqrt()).abs() < 1e-12);

        let all = compute_report("g", &seeds(&[5, 7, 5, 9, 11]), &training, Cost::default(), LengthStats::AllSeeds).unwrap();
        assert!((all.mean_length - 7.4).abs() < 1e-12);
    }

    #[test]
    fn empty_and_unanalysed_are_usage_errors() {
        let none = BTreeSet::new();
        assert!(compute_report("g", &[], &none, Cost::default(), LengthStats::Unique).unwrap_err().is_usage());
        let raw = vec![SeedFile::new(vec![1], 0, "initial", 0, 0)];
        assert!(compute_report("g", &raw, &none, Cost::default(), LengthStats::Unique).unwrap_err().is_usage());
    }

    #[test]
    fn self_rate_is_one() {
        let r = report(&[3, 4, 4, 8], 1000);
        for m in [RateMetric::Seeds, RateMetric::UniqueLengths] {
            for b in [RateBasis::EqualTime, RateBasis::ExecsPerPath] {
                assert_eq!(relative_rate(&r, &r, m, b).unwrap(), 1.0);
            }
        }
        assert_eq!(mean_length_ratio(&r, &r).unwrap(), 1.0);
    }

    #[test]
    fn per_path_rate() {
        let fast = report(&[1, 2, 3, 4], 1000);
        let slow = report(&[1, 2], 1000);
        assert_eq!(relative_rate(&fast, &slow, RateMetric::Seeds, RateBasis::ExecsPerPath).unwrap(), 2.0);
        let mut zero = slow.clone();
        zero.seed_count = 0;
        assert!(relative_rate(&fast, &zero, RateMetric::Seeds, RateBasis::EqualTime).is_err());
    }

    #[test]
    fn printed_precision() {
        assert!(matches_printed(0.81315, "0.813"));
        assert!(matches_printed(1.1177, "1.11"));
        assert!(matches_printed(1.1177, "1.12"));
        assert!(!matches_printed(1.1177, "1.10"));
        assert!(matches_printed(0.00595, "0.006"));
        assert!(!matches_printed(0.0071, "0.006"));
    }

    #[test]
    fn discount() {
        assert!((discounted_rate(10, 10, 24.0, 12.0).unwrap() - 0.5).abs() < 1e-15);
        assert!(discounted_rate(1, 0, 24.0, 1.0).is_err());
        assert!(discounted_rate(1, 1, 24.0, 24.0).is_err());
    }
}
