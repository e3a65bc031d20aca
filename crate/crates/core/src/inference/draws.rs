//! Posterior draws with chain structure, their summaries and file formats.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::inference::diagnostics::{ess, rhat};
use crate::stats::{mean, quantile_sorted, sd};

/// Labeled MCMC output, indexed `[chain][iteration][parameter]`.
#[derive(Debug, Clone, PartialEq)]
pub struct PosteriorDraws {
    pub names: Vec<String>,
    pub draws: Vec<Vec<Vec<f64>>>,
    pub n_chains: usize,
    /// Retained (post-warmup) iterations per chain.
    pub n_iterations: usize,
    /// Seed of the run; 0 when read back from a file.
    pub seed: u64,
    /// Post-warmup acceptance rate per chain and block; empty when read from a file.
    pub acceptance: Vec<Vec<f64>>,
}

/// Per-parameter posterior summary.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParamSummary {
    pub mean: f64,
    pub sd: f64,
    #[serde(rename = "q2.5")]
    pub q2_5: f64,
    pub q50: f64,
    #[serde(rename = "q97.5")]
    pub q97_5: f64,
    pub rhat: f64,
    pub ess: f64,
}

impl PosteriorDraws {
    pub fn new(names: Vec<String>, draws: Vec<Vec<Vec<f64>>>, seed: u64, acceptance: Vec<Vec<f64>>) -> Result<Self> {
        let n_chains = draws.len();
        if n_chains == 0 {
            return Err(Error::Empty("chains"));
        }
        let n_iterations = draws[0].len();
        for chain in &draws {
            if chain.len() != n_iterations {
                return Err(Error::Mismatch("chains have different lengths".into()));
            }
            if chain.iter().any(|d| d.len() != names.len()) {
                return Err(Error::Mismatch("draw width differs from parameter count".into()));
            }
            if chain.iter().flatten().any(|v| !v.is_finite()) {
                return Err(Error::InvalidParameter("non-finite draw".into()));
            }
        }
        Ok(PosteriorDraws { names, draws, n_chains, n_iterations, seed, acceptance })
    }

    pub fn index_of(&self, name: &str) -> Option<usize> {
        self.names.iter().position(|n| n == name)
    }

    /// Draws of parameter `p`, one vector per chain.
    pub fn chains(&self, p: usize) -> Vec<Vec<f64>> {
        self.draws.iter().map(|chain| chain.iter().map(|d| d[p]).collect()).collect()
    }

    /// Draws of parameter `p` from all chains concatenated.
    pub fn pooled(&self, p: usize) -> Vec<f64> {
        self.draws.iter().flat_map(|chain| chain.iter().map(move |d| d[p])).collect()
    }

    /// Iterates over every draw, chain-major.
    pub fn iter_draws(&self) -> impl Iterator<Item = &[f64]> {
        self.draws.iter().flat_map(|chain| chain.iter().map(Vec::as_slice))
    }

    pub fn summarize(&self, p: usize) -> Result<ParamSummary> {
        let mut pooled = self.pooled(p);
        let chains = self.chains(p);
        let summary_rhat = rhat(&chains)?;
        let summary_ess = ess(&chains)?;
        pooled.sort_by(f64::total_cmp);
        Ok(ParamSummary {
            mean: mean(&pooled),
            sd: if pooled.len() > 1 { sd(&pooled) } else { 0.0 },
            q2_5: quantile_sorted(&pooled, 0.025),
            q50: quantile_sorted(&pooled, 0.5),
            q97_5: quantile_sorted(&pooled, 0.975),
            rhat: summary_rhat,
            ess: summary_ess,
        })
    }

    /// Summaries of every parameter in `names` order.
    pub fn summary(&self) -> Result<Vec<(String, ParamSummary)>> {
        self.names.iter().enumerate().map(|(p, n)| Ok((n.clone(), self.summarize(p)?))).collect()
    }

    /// JSON object mapping parameter name to its summary.
    pub fn summary_json(&self) -> Result<serde_json::Value> {
        let mut map = serde_json::Map::new();
        for (name, s) in self.summary()? {
            map.insert(name, serde_json::to_value(s)?);
        }
        Ok(serde_json::Value::Object(map))
    }

    /// CSV with columns `chain,iteration,<names...>`; chains and iterations
    /// are 1-based.
    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        let mut header = vec!["chain".to_string(), "iteration".to_string()];
        header.extend(self.names.iter().cloned());
        w.write_record(&header)?;
        for (c, chain) in self.draws.iter().enumerate() {
            for (i, d) in chain.iter().enumerate() {
                let mut row = vec![(c + 1).to_string(), (i + 1).to_string()];
                row.extend(d.iter().map(f64::to_string));
                w.write_record(&row)?;
            }
        }
        w.flush()?;
        Ok(())
    }

    pub fn write_csv_path(&self, path: impl AsRef<Path>) -> Result<()> {
        self.write_csv(BufWriter::new(File::create(path)?))
    }

    pub fn read_csv<R: Read>(input: R) -> Result<Self> {
        let mut reader = csv::Reader::from_reader(input);
        let header = reader.headers()?.clone();
        if header.len() < 3 || &header[0] != "chain" || &header[1] != "iteration" {
            return Err(Error::Validation { row: 0, message: "draws header must start with `chain,iteration`".into() });
        }
        let names: Vec<String> = header.iter().skip(2).map(str::to_string).collect();
        let mut draws: Vec<Vec<Vec<f64>>> = Vec::new();
        for (i, row) in reader.records().enumerate() {
            let row = row?;
            let bad = |message: String| Error::Validation { row: i + 1, message };
            let chain: usize = row[0].parse().map_err(|_| bad(format!("bad chain `{}`", &row[0])))?;
            if chain == 0 || chain > draws.len() + 1 {
                return Err(bad(format!("chain {chain} out of sequence")));
            }
            if chain > draws.len() {
                draws.push(Vec::new());
            }
            let values = row
                .iter()
                .skip(2)
                .map(|v| v.parse::<f64>().map_err(|_| bad(format!("bad value `{v}`"))))
                .collect::<Result<Vec<f64>>>()?;
            draws[chain - 1].push(values);
        }
        PosteriorDraws::new(names, draws, 0, Vec::new())
    }

    pub fn read_csv_path(path: impl AsRef<Path>) -> Result<Self> {
        Self::read_csv(BufReader::new(File::open(path)?))
    }
}
