use std::fmt::Write as _;

use crate::error::{Error, Result};

pub const RUNLOG_HEADER: &str = "gen,best,mean,l2_loss,evals,ms";

#[derive(Clone, Debug, PartialEq)]
pub struct GenerationRecord {
    pub generation: usize,
    pub best: f64,
    pub mean: f64,
    /// Self-tuning loss before this generation's update.
    pub loss: f64,
    /// Cumulative objective evaluations, initialisation included.
    pub evaluations: usize,
    pub millis: f64,
}

/// Per-generation statistics of one run.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct RunLog {
    records: Vec<GenerationRecord>,
}

impl RunLog {
    pub fn push(&mut self, r: GenerationRecord) {
        self.records.push(r);
    }

    pub fn records(&self) -> &[GenerationRecord] {
        &self.records
    }

    pub fn best_curve(&self) -> Vec<f64> {
        self.records.iter().map(|r| r.best).collect()
    }

    pub fn final_best(&self) -> Option<f64> {
        self.records.last().map(|r| r.best)
    }

    /// CSV with an optional leading `# config:` comment.
    pub fn to_csv(&self, config_comment: Option<&str>) -> String {
        let mut s = String::new();
        if let Some(c) = config_comment {
            writeln!(s, "# config: {c}").expect("write to String");
        }
        s.push_str(RUNLOG_HEADER);
        s.push('\n');
        for r in &self.records {
            writeln!(
                s,
                "{},{:e},{:e},{:e},{},{:.3}",
                r.generation, r.best, r.mean, r.loss, r.evaluations, r.millis
            )
            .expect("write to String");
        }
        s
    }

    /// Parses [`RunLog::to_csv`] output; `#` lines are skipped.
    pub fn parse_csv(text: &str) -> Result<Self> {
        let mut lines = text
            .lines()
            .map(str::trim)
            .filter(|l| !l.is_empty() && !l.starts_with('#'));
        match lines.next() {
            Some(h) if h == RUNLOG_HEADER => {}
            other => {
                return Err(Error::Parameter(format!(
                    "expected run log header {RUNLOG_HEADER:?}, found {other:?}"
                )))
            }
        }
        let mut log = RunLog::default();
        for (i, line) in lines.enumerate() {
            let f: Vec<&str> = line.split(',').collect();
            let bad = || Error::Parameter(format!("malformed run log row {}: {line:?}", i + 1));
            if f.len() != 6 {
                return Err(bad());
            }
            let num = |s: &str| s.parse::<f64>().map_err(|_| bad());
            log.push(GenerationRecord {
                generation: f[0].parse().map_err(|_| bad())?,
                best: num(f[1])?,
                mean: num(f[2])?,
                loss: num(f[3])?,
                evaluations: f[4].parse().map_err(|_| bad())?,
                millis: num(f[5])?,
            });
        }
        Ok(log)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn csv_round_trip() {
        let mut log = RunLog::default();
        for g in 1..=3 {
            log.push(GenerationRecord {
                generation: g,
                best: 1.0 / g as f64,
                mean: 2.5e-7 * g as f64,
                loss: 0.125,
                evaluations: 10 * (g + 1),
                millis: 1.5,
            });
        }
        let text = log.to_csv(Some("seed=1"));
        assert!(text.starts_with("# config: seed=1\ngen,best,mean,l2_loss,evals,ms\n"));
        assert_eq!(RunLog::parse_csv(&text).unwrap(), log);
        assert!(RunLog::parse_csv("nope\n1,2").is_err());
    }
}
