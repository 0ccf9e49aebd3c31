use std::fmt::Write as _;
use std::path::Path;

use potts_sir::io;
use potts_sir::summary::mspe;
use potts_sir::{GibbsModel, RunConfig};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::{CliError, CliResult};

/// Hyperparameter grid; each absent axis keeps the base value.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct GridSpec {
    #[serde(default)]
    pub base: RunConfig,
    pub upsilon: Option<Vec<f64>>,
    pub kappa: Option<Vec<f64>>,
    pub tau: Option<Vec<f64>>,
    pub models: Option<Vec<GibbsModel>>,
    #[serde(default = "default_validation_fraction")]
    pub validation_fraction: f64,
}

fn default_validation_fraction() -> f64 {
    0.25
}

#[derive(Debug, Clone, Copy)]
struct Cell {
    model: GibbsModel,
    upsilon: f64,
    kappa: f64,
    tau: f64,
}

impl GridSpec {
    fn cells(&self) -> CliResult<Vec<Cell>> {
        fn axis<V: Clone>(name: &str, values: &Option<Vec<V>>, base: V) -> CliResult<Vec<V>> {
            match values {
                Some(v) if v.is_empty() => Err(CliError::Usage(format!("empty grid: axis {name:?} has no values"))),
                Some(v) => Ok(v.clone()),
                None => Ok(vec![base]),
            }
        }
        let models = axis("models", &self.models, self.base.model)?;
        let upsilons = axis("upsilon", &self.upsilon, self.base.upsilon)?;
        let kappas = axis("kappa", &self.kappa, self.base.gsw.kappa)?;
        let taus = axis("tau", &self.tau, self.base.gsw.tau)?;
        let mut cells = Vec::new();
        for &model in &models {
            for &upsilon in &upsilons {
                for &kappa in &kappas {
                    for &tau in &taus {
                        cells.push(Cell {
                            model,
                            upsilon,
                            kappa,
                            tau,
                        });
                    }
                }
            }
        }
        Ok(cells)
    }

    fn config_for(&self, cell: &Cell) -> RunConfig {
        let mut c = self.base.clone();
        c.model = cell.model;
        c.upsilon = cell.upsilon;
        c.gsw.kappa = cell.kappa;
        c.gsw.tau = cell.tau;
        c
    }
}

struct CellResult {
    index: usize,
    validation_mspe: f64,
    mean_m: f64,
}

fn model_fields(model: &GibbsModel) -> [String; 3] {
    match *model {
        GibbsModel::Dp { alpha } => ["dp".into(), alpha.to_string(), String::new()],
        GibbsModel::Py { alpha, delta } => ["py".into(), alpha.to_string(), delta.to_string()],
        GibbsModel::Mfm { gamma, lambda, .. } => ["mfm".into(), gamma.to_string(), lambda.to_string()],
    }
}

pub fn gridsearch(data_dir: &Path, config: &Path, out: &Path, seed: Option<u64>, chains: Option<usize>) -> CliResult {
    let mut spec: GridSpec = io::read_json(config)?;
    if let Some(s) = seed {
        spec.base.seed = s;
    }
    if let Some(c) = chains {
        spec.base.chains = c;
    }
    if !(spec.validation_fraction > 0.0 && spec.validation_fraction < 1.0) {
        return Err(CliError::Usage(format!(
            "validation_fraction must lie in (0, 1), got {}",
            spec.validation_fraction
        )));
    }
    let cells = spec.cells()?;
    for cell in &cells {
        spec.config_for(cell).validate()?;
    }
    let data = io::read_dataset(data_dir)?;
    let n_valid = ((data.n() as f64 * spec.validation_fraction).round() as usize).clamp(1, data.n().saturating_sub(1));
    let split = data.n() - n_valid;
    if split == 0 {
        return Err(CliError::Usage(format!("{} samples are too few to split", data.n())));
    }
    let train = data.select_rows(&(0..split).collect::<Vec<_>>())?;
    let valid = data.select_rows(&(split..data.n()).collect::<Vec<_>>())?;
    log::info!(
        "{} grid cells, {} fit / {} validation samples",
        cells.len(),
        train.n(),
        valid.n()
    );

    let mut results = cells
        .par_iter()
        .enumerate()
        .map(|(index, cell)| {
            let fit = potts_sir::run(&train, &spec.config_for(cell))?;
            let mean_m = fit.partition_draws.iter().map(|s| s.num_clusters() as f64).sum::<f64>() / fit.len() as f64;
            Ok(CellResult {
                index,
                validation_mspe: mspe(&valid, &fit.posterior_mean_mu(), &fit.posterior_mean_beta()),
                mean_m,
            })
        })
        .collect::<potts_sir::Result<Vec<_>>>()?;
    results.sort_by(|a, b| {
        a.validation_mspe
            .total_cmp(&b.validation_mspe)
            .then(a.index.cmp(&b.index))
    });

    let mut csv = String::from("rank,cell,model,param_1,param_2,upsilon,kappa,tau,validation_mspe,mean_M\n");
    for (rank, r) in results.iter().enumerate() {
        let cell = &cells[r.index];
        let [name, a, b] = model_fields(&cell.model);
        let _ = writeln!(
            csv,
            "{},{},{name},{a},{b},{},{},{},{},{}",
            rank + 1,
            r.index + 1,
            cell.upsilon,
            cell.kappa,
            cell.tau,
            r.validation_mspe,
            r.mean_m
        );
    }
    io::write_text(&out.join("grid.csv"), &csv)?;
    io::write_json(&out.join("config.json"), &spec)?;
    io::write_json(
        &out.join("best_config.json"),
        &spec.config_for(&cells[results[0].index]),
    )?;
    log::info!(
        "best cell {} with validation MSPE {:.4} -> {}",
        results[0].index + 1,
        results[0].validation_mspe,
        out.display()
    );
    Ok(())
}
