//! Runs (spec, method, seed) jobs, in parallel, returning results in job
//! order.

use rayon::prelude::*;

use sslab::baselines::{train_self_training, train_supervised};
use sslab::game::run_game;
use sslab::metrics::{Method, RunResult};

use crate::error::Result;
use crate::spec::ExperimentSpec;

pub fn run_one(spec: &ExperimentSpec, method: Method, seed: u64) -> Result<RunResult> {
    let data = spec.data(seed)?;
    let (train, test) = (&data.train, Some(&data.test));
    let r = match method {
        Method::Supervised => train_supervised(&spec.train_config(seed), &spec.arch, train, test)?,
        Method::SelfTraining => train_self_training(&spec.self_train_config(seed), &spec.arch, train, test)?,
        Method::Flexssl => run_game(&spec.game_config(seed), &spec.arch, train, test)?,
    };
    Ok(r)
}

/// Each job owns its run; rayon's indexed collect keeps the output in the
/// order of `jobs` whatever order the runs finish in.
pub fn run_jobs(jobs: &[(&ExperimentSpec, Method, u64)]) -> Result<Vec<RunResult>> {
    jobs.par_iter().map(|&(spec, method, seed)| run_one(spec, method, seed)).collect()
}

/// The method × seed grid of one spec, methods outermost.
pub fn run_grid(spec: &ExperimentSpec, methods: &[Method]) -> Result<Vec<RunResult>> {
    let jobs: Vec<_> = methods.iter().flat_map(|&m| spec.seeds.iter().map(move |&s| (spec, m, s))).collect();
    run_jobs(&jobs)
}
