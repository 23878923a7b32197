//! Clustered binary-classification data with one hyperplane per client.

use std::fs;
use std::path::{Path, PathBuf};

use ndarray::{Array1, Array2, ShapeBuilder};
use rand::Rng;
use rand_distr::{Distribution, Normal, StandardNormal};

use crate::error::{FedError, Result};
use crate::seed::{rng_for, STREAM_DATA};

#[derive(Debug, Clone, PartialEq)]
pub struct ClientData {
    /// `samples x features`, stored column-major by [`Dataset::new`].
    pub features: Array2<f64>,
    /// Entries in `{-1, +1}`.
    pub labels: Array1<f64>,
}

impl ClientData {
    pub fn samples(&self) -> usize {
        self.features.nrows()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    clients: Vec<ClientData>,
    feature_dim: usize,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ClusterConfig {
    pub n_clients: usize,
    pub samples_total: usize,
    pub feature_dim: usize,
    pub heterogeneity_noise: f64,
    pub seed: u64,
}

impl Default for ClusterConfig {
    fn default() -> Self {
        Self {
            n_clients: 30,
            samples_total: 60_000,
            feature_dim: 20,
            heterogeneity_noise: 0.1,
            seed: 1,
        }
    }
}

impl Dataset {
    pub fn new(mut clients: Vec<ClientData>) -> Result<Self> {
        let Some(first) = clients.first() else {
            return Err(FedError::InvalidDimension("dataset needs at least one client".into()));
        };
        let feature_dim = first.features.ncols();
        for (i, c) in clients.iter().enumerate() {
            if c.samples() == 0 {
                return Err(FedError::InvalidDimension(format!("client {i} holds no samples")));
            }
            if c.features.ncols() != feature_dim {
                return Err(FedError::InvalidDimension(format!(
                    "client {i} has {} features, expected {feature_dim}",
                    c.features.ncols()
                )));
            }
            if c.labels.len() != c.samples() {
                return Err(FedError::InvalidDimension(format!("client {i}: label count mismatch")));
            }
        }
        for c in &mut clients {
            if !c.features.t().is_standard_layout() {
                let mut f = Array2::zeros(c.features.raw_dim().f());
                f.assign(&c.features);
                c.features = f;
            }
        }
        Ok(Self { clients, feature_dim })
    }

    pub fn clients(&self) -> &[ClientData] {
        &self.clients
    }

    pub fn client(&self, i: usize) -> Result<&ClientData> {
        self.clients.get(i).ok_or(FedError::ClientOutOfRange {
            client: i,
            n: self.clients.len(),
        })
    }

    pub fn n_clients(&self) -> usize {
        self.clients.len()
    }

    pub fn feature_dim(&self) -> usize {
        self.feature_dim
    }

    pub fn total_samples(&self) -> usize {
        self.clients.iter().map(ClientData::samples).sum()
    }

    /// Writes `client_000.csv`, `client_001.csv`, ... into `dir`; each row
    /// holds the feature columns followed by the label.
    pub fn export_csv(&self, dir: &Path) -> Result<Vec<PathBuf>> {
        fs::create_dir_all(dir)?;
        let mut paths = Vec::with_capacity(self.clients.len());
        for (i, c) in self.clients.iter().enumerate() {
            let path = dir.join(format!("client_{i:03}.csv"));
            let mut w = csv::Writer::from_path(&path)?;
            let mut header: Vec<String> = (0..self.feature_dim).map(|j| format!("f{j}")).collect();
            header.push("label".into());
            w.write_record(&header)?;
            for (row, y) in c.features.outer_iter().zip(c.labels.iter()) {
                let mut rec: Vec<String> = row.iter().map(|v| format!("{v:e}")).collect();
                rec.push(format!("{y}"));
                w.write_record(&rec)?;
            }
            w.flush()?;
            paths.push(path);
        }
        Ok(paths)
    }

    pub fn import_csv(dir: &Path) -> Result<Self> {
        let mut files: Vec<PathBuf> = fs::read_dir(dir)?
            .filter_map(|e| e.ok().map(|e| e.path()))
            .filter(|p| {
                p.file_name()
                    .and_then(|n| n.to_str())
                    .is_some_and(|n| n.starts_with("client_") && n.ends_with(".csv"))
            })
            .collect();
        files.sort();
        let mut clients = Vec::with_capacity(files.len());
        for path in files {
            let mut rdr = csv::Reader::from_path(&path)?;
            let mut feats = Vec::new();
            let mut labels = Vec::new();
            let mut width = None;
            for rec in rdr.records() {
                let rec = rec?;
                let vals: Vec<f64> = rec
                    .iter()
                    .map(|s| s.trim().parse::<f64>())
                    .collect::<std::result::Result<_, _>>()
                    .map_err(|e| FedError::Io(format!("{}: {e}", path.display())))?;
                let (label, row) = vals.split_last().ok_or_else(|| FedError::Io(format!("{}: empty row", path.display())))?;
                width.get_or_insert(row.len());
                feats.extend_from_slice(row);
                labels.push(*label);
            }
            let m = width.unwrap_or(0);
            let s = labels.len();
            let features = Array2::from_shape_vec((s, m), feats)
                .map_err(|e| FedError::Io(format!("{}: {e}", path.display())))?;
            clients.push(ClientData {
                features,
                labels: Array1::from(labels),
            });
        }
        Self::new(clients)
    }
}

/// Each client draws a unit hyperplane normal `w_i`, standard-Gaussian
/// features `a`, and labels `sign(w_i^T a + eps)` with
/// `eps ~ N(0, heterogeneity_noise^2)`. Leftover samples go round-robin to
/// the first clients.
pub fn generate_clustered_data(cfg: &ClusterConfig) -> Result<Dataset> {
    if cfg.n_clients == 0 || cfg.samples_total == 0 || cfg.feature_dim == 0 {
        return Err(FedError::InvalidDimension("client, sample and feature counts must be positive".into()));
    }
    if cfg.samples_total < cfg.n_clients {
        return Err(FedError::InvalidDimension(format!(
            "{} samples cannot cover {} clients",
            cfg.samples_total, cfg.n_clients
        )));
    }
    if !cfg.heterogeneity_noise.is_finite() || cfg.heterogeneity_noise < 0.0 {
        return Err(FedError::InvalidDimension(format!(
            "heterogeneity noise must be finite and >= 0, got {}",
            cfg.heterogeneity_noise
        )));
    }
    let base = cfg.samples_total / cfg.n_clients;
    let extra = cfg.samples_total % cfg.n_clients;
    let m = cfg.feature_dim;
    let mut clients = Vec::with_capacity(cfg.n_clients);
    for i in 0..cfg.n_clients {
        let s = base + usize::from(i < extra);
        let mut rng = rng_for(cfg.seed, &[STREAM_DATA, i as u64]);
        let mut w: Vec<f64> = (0..m).map(|_| rng.sample(StandardNormal)).collect();
        let norm = w.iter().map(|v| v * v).sum::<f64>().sqrt();
        w.iter_mut().for_each(|v| *v /= norm);
        let features = Array2::from_shape_fn((s, m), |_| rng.sample(StandardNormal));
        let noise = Normal::new(0.0, cfg.heterogeneity_noise).expect("checked above");
        let labels = Array1::from_iter(features.outer_iter().map(|a| {
            let score: f64 = a.iter().zip(&w).map(|(x, wj)| x * wj).sum();
            let eps = if cfg.heterogeneity_noise > 0.0 { noise.sample(&mut rng) } else { 0.0 };
            if score + eps >= 0.0 {
                1.0
            } else {
                -1.0
            }
        }));
        clients.push(ClientData { features, labels });
    }
    Dataset::new(clients)
}
