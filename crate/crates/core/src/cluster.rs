//! A validated cluster together with its per-cell residual distributions and
//! tabulated cost models.

use crate::arrivals::{residual_pmf, ResidualPmf};
use crate::cost::{AnticipatedCosts, CellCostModel};
use crate::error::{Error, Result};
use crate::model::{ActionVector, CellState, ClusterConfig};

#[derive(Debug, Clone)]
pub struct Cluster {
    config: ClusterConfig,
    pmfs: Vec<ResidualPmf>,
    models: Vec<CellCostModel>,
}

impl Cluster {
    pub fn new(config: ClusterConfig) -> Result<Self> {
        config.validate()?;
        let seg = config.segment_duration;
        let pmfs = config
            .cells
            .iter()
            .map(|c| residual_pmf(c, seg, config.n_th))
            .collect::<Result<Vec<_>>>()?;
        let models = config
            .cells
            .iter()
            .map(|c| CellCostModel::new(c, &config.power, &config.cost_fn, seg, config.n_th))
            .collect();
        Ok(Cluster {
            config,
            pmfs,
            models,
        })
    }

    pub fn config(&self) -> &ClusterConfig {
        &self.config
    }

    pub fn m(&self) -> usize {
        self.config.m_cells
    }

    pub fn k(&self) -> usize {
        self.config.k_max_off
    }

    pub fn n_th(&self) -> usize {
        self.config.n_th
    }

    pub fn pmfs(&self) -> &[ResidualPmf] {
        &self.pmfs
    }

    pub fn pmf(&self, cell: usize) -> &ResidualPmf {
        &self.pmfs[cell]
    }

    pub fn models(&self) -> &[CellCostModel] {
        &self.models
    }

    pub fn model(&self, cell: usize) -> &CellCostModel {
        &self.models[cell]
    }

    pub fn anticipated_costs(&self) -> Vec<AnticipatedCosts> {
        self.models
            .iter()
            .zip(&self.pmfs)
            .map(|(m, p)| m.anticipated_costs(p))
            .collect()
    }

    /// Same cluster with a different off-count limit.
    pub fn with_k(&self, k: usize) -> Result<Self> {
        let mut c = self.clone();
        c.config = self.config.with_k(k)?;
        Ok(c)
    }

    /// Sum of per-cell immediate costs.
    pub fn cost(&self, state: &[CellState], action: &ActionVector) -> f64 {
        state
            .iter()
            .zip(&self.models)
            .enumerate()
            .map(|(i, (s, m))| m.cost_state(*s, action.is_on(i)))
            .sum()
    }

    /// Reject states with the wrong length or counts above the truncation.
    pub fn check_state(&self, state: &[CellState]) -> Result<()> {
        if state.len() != self.m() {
            return Err(Error::Domain(format!(
                "state has {} cells, cluster has {}",
                state.len(),
                self.m()
            )));
        }
        if let Some(s) = state.iter().find(|s| s.residual_users as usize > self.n_th()) {
            return Err(Error::Domain(format!(
                "residual count {} exceeds n_th = {}",
                s.residual_users,
                self.n_th()
            )));
        }
        Ok(())
    }
}
