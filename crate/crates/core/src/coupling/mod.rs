//! Block couplings of two `g`-chains and the associated chain `Y`.

mod bounds;
mod prefix;
mod runner;
mod schedule;
mod ychain;

pub use bounds::{
    choose_k, hellinger_success_bound, level_bound, success_lower_bound, worst_case_success, LogCoshSums, WorstCase,
    DEFAULT_K_MAX,
};
pub use prefix::{
    compare_prefix_dists, compare_probs, maximal_coupling_sample, prefix_dist, Comparison, CoupledDraw,
    MaximalCoupling, PrefixDistribution, DEFAULT_PREFIX_BUDGET, HELLINGER_TOL, PREFIX_MASS_TOL,
};
pub use runner::{
    run_coupled_chains, CouplingOptions, CouplingTrace, Excursion, LevelStats, StepEvent, StepRecord,
};
pub use schedule::BlockSchedule;
pub use ychain::{
    kesten_diagnostic, simulate_y_chain, KestenReport, LevelFrequency, MeanVerdict, YChainParams, YChainRun,
    KESTEN_MIN_SAMPLES, MAX_RECORDED_STEPS,
};
