//! Tidy result CSVs and the per-condition summary derived from them.

use std::collections::BTreeMap;
use std::io::{Read, Write};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::harness::{ExperimentRun, Label};

pub const RESULT_HEADER: [&str; 9] = [
    "experiment_id",
    "condition",
    "replicate",
    "block",
    "agent",
    "mean_reward",
    "coord_rate",
    "converged_label",
    "seed",
];

/// One row of the results CSV.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResultRow {
    pub experiment_id: String,
    pub condition: String,
    pub replicate: usize,
    pub block: usize,
    pub agent: usize,
    pub mean_reward: f64,
    pub coord_rate: f64,
    pub converged_label: String,
    pub seed: u64,
}

/// Flattens runs into rows: runs in order, then replicate, block, agent.
pub fn result_rows(runs: &[ExperimentRun]) -> Vec<ResultRow> {
    let mut rows = Vec::new();
    for run in runs {
        for r in &run.results {
            for b in &r.blocks {
                for (agent, &mean_reward) in b.mean_reward.iter().enumerate() {
                    rows.push(ResultRow {
                        experiment_id: run.config.experiment_id.clone(),
                        condition: run.config.condition().to_string(),
                        replicate: r.replicate,
                        block: b.block,
                        agent,
                        mean_reward,
                        coord_rate: b.coord_rate,
                        converged_label: r.label.as_str().to_string(),
                        seed: r.seed,
                    });
                }
            }
        }
    }
    rows
}

pub fn write_results<W: Write>(rows: &[ResultRow], out: W) -> Result<()> {
    let mut w = csv::WriterBuilder::new().has_headers(false).from_writer(out);
    w.write_record(RESULT_HEADER)?;
    for row in rows {
        w.serialize(row)?;
    }
    w.flush()?;
    Ok(())
}

/// Reads a results CSV, checking the header column for column.
pub fn read_results<R: Read>(input: R) -> Result<Vec<ResultRow>> {
    let mut r = csv::Reader::from_reader(input);
    let header: Vec<String> = r.headers()?.iter().map(str::to_string).collect();
    if header != RESULT_HEADER {
        return Err(Error::Config(format!(
            "unexpected CSV header {header:?}, expected {RESULT_HEADER:?}"
        )));
    }
    let rows = r.deserialize().collect::<std::result::Result<Vec<ResultRow>, _>>()?;
    for row in &rows {
        if Label::parse(&row.converged_label).is_none() {
            return Err(Error::Config(format!("unknown label `{}`", row.converged_label)));
        }
    }
    Ok(rows)
}

/// Mean with the standard error of the mean; the error is absent for a
/// single sample.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MeanSe {
    pub n: usize,
    pub mean: f64,
    pub se: Option<f64>,
}

pub fn mean_se(values: &[f64]) -> MeanSe {
    let n = values.len();
    let mean = values.iter().sum::<f64>() / n as f64;
    let se = (n > 1).then(|| {
        let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
        var.sqrt() / (n as f64).sqrt()
    });
    MeanSe { n, mean, se }
}

/// Across-replicate statistics for one (experiment, condition, block, agent).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SummaryRow {
    pub experiment_id: String,
    pub condition: String,
    pub block: usize,
    pub agent: usize,
    pub n: usize,
    pub mean_reward: f64,
    pub mean_reward_se: Option<f64>,
    pub coord_rate: f64,
    pub coord_rate_se: Option<f64>,
    pub p_payoff_dominant: f64,
    pub p_payoff_dominant_se: Option<f64>,
}

/// Groups rows by (experiment, condition, block, agent), keeping first
/// appearance order, and reduces each group over replicates.
pub fn aggregate(rows: &[ResultRow]) -> Result<Vec<SummaryRow>> {
    if rows.is_empty() {
        return Err(Error::Config("no result rows to aggregate".into()));
    }
    let mut order: Vec<(String, String, usize, usize)> = Vec::new();
    let mut groups: BTreeMap<(String, String, usize, usize), Vec<&ResultRow>> = BTreeMap::new();
    for row in rows {
        let key = (row.experiment_id.clone(), row.condition.clone(), row.block, row.agent);
        let group = groups.entry(key.clone()).or_default();
        if group.is_empty() {
            order.push(key);
        }
        group.push(row);
    }
    Ok(order
        .into_iter()
        .map(|key| {
            let g = &groups[&key];
            let reward = mean_se(&g.iter().map(|r| r.mean_reward).collect::<Vec<_>>());
            let coord = mean_se(&g.iter().map(|r| r.coord_rate).collect::<Vec<_>>());
            let pd: Vec<f64> = g
                .iter()
                .map(|r| f64::from(u8::from(r.converged_label == Label::PayoffDominant.as_str())))
                .collect();
            let pd = mean_se(&pd);
            let (experiment_id, condition, block, agent) = key;
            SummaryRow {
                experiment_id,
                condition,
                block,
                agent,
                n: reward.n,
                mean_reward: reward.mean,
                mean_reward_se: reward.se,
                coord_rate: coord.mean,
                coord_rate_se: coord.se,
                p_payoff_dominant: pd.mean,
                p_payoff_dominant_se: pd.se,
            }
        })
        .collect())
}

pub fn write_summary<W: Write>(rows: &[SummaryRow], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    for row in rows {
        w.serialize(row)?;
    }
    w.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn row(replicate: usize, block: usize, reward: f64, label: Label) -> ResultRow {
        ResultRow {
            experiment_id: "e".into(),
            condition: "none g=1".into(),
            replicate,
            block,
            agent: 0,
            mean_reward: reward,
            coord_rate: reward.clamp(0.0, 1.0),
            converged_label: label.as_str().into(),
            seed: replicate as u64,
        }
    }

    #[test]
    fn standard_error() {
        let s = mean_se(&[0.0, 1.0]);
        assert_eq!(s.mean, 0.5);
        assert!((s.se.unwrap() - 0.5).abs() < 1e-15);
        assert_eq!(mean_se(&[3.0, 3.0, 3.0]).se, Some(0.0));
        assert_eq!(mean_se(&[3.0]).se, None);
    }

    #[test]
    fn header_is_exact() {
        let mut buf = Vec::new();
        write_results(&[row(0, 0, 1.5, Label::RiskDominant)], &mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert_eq!(
            text.lines().next().unwrap(),
            "experiment_id,condition,replicate,block,agent,mean_reward,coord_rate,converged_label,seed"
        );
        assert_eq!(text.lines().nth(1).unwrap(), "e,none g=1,0,0,0,1.5,1.0,risk-dominant,0");
        assert_eq!(read_results(text.as_bytes()).unwrap(), vec![row(0, 0, 1.5, Label::RiskDominant)]);
        assert!(read_results("a,b\n1,2\n".as_bytes()).is_err());
    }

    #[test]
    fn summary_groups_blocks() {
        let rows = vec![
            row(0, 0, 0.0, Label::RiskDominant),
            row(0, 1, 1.0, Label::RiskDominant),
            row(1, 0, 1.0, Label::PayoffDominant),
            row(1, 1, 1.0, Label::PayoffDominant),
        ];
        let s = aggregate(&rows).unwrap();
        assert_eq!(s.len(), 2);
        assert_eq!((s[0].block, s[0].n, s[0].mean_reward), (0, 2, 0.5));
        assert!((s[0].mean_reward_se.unwrap() - 0.5).abs() < 1e-15);
        assert_eq!(s[1].mean_reward_se, Some(0.0));
        assert_eq!(s[0].p_payoff_dominant, 0.5);
        let one = aggregate(&rows[..1]).unwrap();
        assert_eq!(one[0].mean_reward_se, None);
        assert!(aggregate(&[]).is_err());
        let mut buf = Vec::new();
        write_summary(&one, &mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert!(text.lines().nth(1).unwrap().starts_with("e,none g=1,0,0,1,0.0,,0.0,,0.0,"));
    }
}
