//! Genealogies of the conditioned process and the shape of reconstructed
//! trees.

mod coalescent;
mod experiments;
mod tree;

pub use coalescent::{
    coalescent_step_rates, simulate_coalescent, CoalescentRates, CoalescentRun, CoalescentState, FrozenPopulation,
};
pub use experiments::{
    forward_sample_tmrca, gamma_scan, mrca_experiment, write_gamma_csv, write_mrca_csv, GammaRow, MrcaResult,
    MrcaSample, SurvivalRejection,
};
pub use tree::{gamma_statistic, reconstruct_from_tips, reconstruct_tree, yule_internode, ReconstructedTree, TreeNode};
