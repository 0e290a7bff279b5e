//! Event-by-event simulation of the ranked-server M/M/∞ chain.
//!
//! The state is the set of busy servers. From a state with `n` busy servers
//! the next event occurs after an exponential time of rate `λ + n`; it is an
//! arrival with probability `λ/(λ + n)` (the lowest idle server becomes busy)
//! and otherwise the departure of a busy server chosen uniformly. Because
//! service times are exponential this is equivalent to running one clock per
//! customer.
//!
//! Replication `r` of a run seeded with `seed` draws from
//! `ChaCha8Rng::seed_from_u64(seed)` switched to stream `r`. The mapping is
//! part of the output contract: changing it changes every recorded sample.

mod busy_set;
mod stats;

pub use busy_set::BusySet;
pub use stats::{
    batch_summary, compare, dkw_threshold, empirical_survival, mean_var, BatchSummary,
    ComparisonReport,
};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::Exp1;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::{ModelError, ModelParams, Result};

/// Warm-up length used when none is given, in mean service times.
pub const DEFAULT_WARMUP: f64 = 50.0;

/// Batches used for the batch-means standard errors.
const BATCHES: usize = 100;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SimConfig {
    pub lambda: f64,
    pub seed: u64,
    pub warmup_time: f64,
    pub n_samples: u64,
    pub n_replications: u32,
    /// Record every `arrival_spacing`-th post-warm-up arrival (1 records all).
    pub arrival_spacing: u32,
}

impl SimConfig {
    pub fn new(lambda: f64, n_samples: u64) -> Self {
        Self {
            lambda,
            seed: 0,
            warmup_time: DEFAULT_WARMUP,
            n_samples,
            n_replications: 1,
            arrival_spacing: 1,
        }
    }

    pub fn validate(&self) -> Result<ModelParams> {
        let params = ModelParams::new(self.lambda)?;
        if self.n_samples == 0 {
            return Err(ModelError::param("n_samples", "must be at least 1"));
        }
        if !(self.warmup_time >= 0.0) || !self.warmup_time.is_finite() {
            return Err(ModelError::param(
                "warmup_time",
                format!("must be finite and nonnegative, got {}", self.warmup_time),
            ));
        }
        if self.n_replications == 0 {
            return Err(ModelError::param("n_replications", "must be at least 1"));
        }
        if self.arrival_spacing == 0 {
            return Err(ModelError::param("arrival_spacing", "must be at least 1"));
        }
        Ok(params)
    }

    /// Generator for replication `replication`.
    pub fn rng(&self, replication: u32) -> ChaCha8Rng {
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        rng.set_stream(u64::from(replication));
        rng
    }
}

/// Clock plus busy-server configuration.
#[derive(Debug, Clone, PartialEq)]
pub struct SimState {
    pub clock: f64,
    pub busy: BusySet,
}

impl SimState {
    /// Empty system with room for `ceil(λ + 10√λ)` servers before growing.
    pub fn empty(lambda: f64) -> Self {
        let capacity = (lambda + 10.0 * lambda.sqrt()).ceil().max(1.0) as usize;
        Self {
            clock: 0.0,
            busy: BusySet::with_capacity(capacity),
        }
    }

    pub fn busy_count(&self) -> usize {
        self.busy.len()
    }

    pub fn lowest_idle(&self) -> usize {
        self.busy.lowest_idle()
    }

    /// Engages the lowest idle server and returns its index.
    pub fn arrive(&mut self) -> usize {
        let l = self.busy.lowest_idle();
        self.busy.insert(l);
        l
    }

    /// Releases the server held in `slot` of the busy list.
    pub fn depart(&mut self, slot: usize) -> usize {
        self.busy.remove_at(slot)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EventKind {
    Arrival,
    Departure,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Event {
    pub kind: EventKind,
    /// Server engaged by an arrival.
    pub server: Option<usize>,
    /// Busy count just before the event.
    pub busy_before: usize,
    pub time: f64,
}

/// Advances `state` by one event of the chain with load `lambda`.
pub fn step<R: Rng + ?Sized>(state: &mut SimState, lambda: f64, rng: &mut R) -> Event {
    let busy_before = state.busy_count();
    let rate = lambda + busy_before as f64;
    let hold: f64 = rng.sample(Exp1);
    state.clock += hold / rate;
    let u: f64 = rng.random();
    if u * rate < lambda {
        Event {
            kind: EventKind::Arrival,
            server: Some(state.arrive()),
            busy_before,
            time: state.clock,
        }
    } else {
        let slot = rng.random_range(0..busy_before);
        state.depart(slot);
        Event {
            kind: EventKind::Departure,
            server: None,
            busy_before,
            time: state.clock,
        }
    }
}

/// Raw observations from one replication.
#[derive(Debug, Clone, PartialEq)]
pub struct ReplicationTrace {
    /// Server index `L` taken by each recorded arrival.
    pub samples: Vec<u32>,
    /// Busy count seen by each recorded arrival.
    pub busy_at_arrival: Vec<u32>,
    pub events: u64,
    pub arrivals: u64,
    pub end_time: f64,
}

/// Runs one replication from the empty state: events before `warmup_time`
/// are discarded, then the next `n_samples` arrivals are recorded.
pub fn run_replication(config: &SimConfig, replication: u32) -> Result<ReplicationTrace> {
    config.validate()?;
    let mut rng = config.rng(replication);
    let mut state = SimState::empty(config.lambda);
    let n = config.n_samples as usize;
    let mut trace = ReplicationTrace {
        samples: Vec::with_capacity(n),
        busy_at_arrival: Vec::with_capacity(n),
        events: 0,
        arrivals: 0,
        end_time: 0.0,
    };
    while trace.samples.len() < n {
        let event = step(&mut state, config.lambda, &mut rng);
        if event.time < config.warmup_time {
            continue;
        }
        trace.events += 1;
        if let Some(server) = event.server {
            trace.arrivals += 1;
            if (trace.arrivals - 1).is_multiple_of(u64::from(config.arrival_spacing)) {
                trace.samples.push(server as u32);
                trace.busy_at_arrival.push(event.busy_before as u32);
            }
        }
    }
    debug_assert!(state.busy.check_invariants());
    trace.end_time = state.clock;
    Ok(trace)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimResult {
    pub config: SimConfig,
    pub samples_recorded: u64,
    pub empirical_survival: Vec<f64>,
    pub sample_mean_l: f64,
    pub sample_var_l: f64,
    pub mean_l_se: f64,
    pub arrival_epoch_busy_mean: f64,
    pub arrival_epoch_busy_var: f64,
    pub arrival_epoch_busy_mean_se: f64,
    pub arrival_epoch_busy_var_se: f64,
    pub first_half_mean_l: f64,
    pub second_half_mean_l: f64,
    pub first_half_se: f64,
    pub second_half_se: f64,
    /// Fraction of post-warm-up events that were arrivals.
    pub arrival_fraction: f64,
    #[serde(skip)]
    pub samples: Vec<u32>,
}

/// Outcome of the equilibrium sanity checks on a [`SimResult`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EquilibriumChecks {
    /// `(busy mean - λ)/se`
    pub pasta_mean_z: f64,
    /// `(busy variance - λ)/se`
    pub pasta_var_z: f64,
    /// `(first-half mean - second-half mean)/pooled se`
    pub split_half_z: f64,
    pub limit_z: f64,
    pub pasta_pass: bool,
    pub stationarity_pass: bool,
}

impl SimResult {
    /// Arrival-epoch busy counts should be Poisson(λ) (mean and variance λ),
    /// and the two halves of the sample should agree in mean, each within
    /// `limit_z` standard errors.
    pub fn equilibrium_checks(&self, limit_z: f64) -> EquilibriumChecks {
        let lambda = self.config.lambda;
        let pasta_mean_z = (self.arrival_epoch_busy_mean - lambda) / self.arrival_epoch_busy_mean_se;
        let pasta_var_z = (self.arrival_epoch_busy_var - lambda) / self.arrival_epoch_busy_var_se;
        let pooled = self.first_half_se.hypot(self.second_half_se);
        let split_half_z = (self.first_half_mean_l - self.second_half_mean_l) / pooled;
        EquilibriumChecks {
            pasta_mean_z,
            pasta_var_z,
            split_half_z,
            limit_z,
            pasta_pass: pasta_mean_z.abs() <= limit_z && pasta_var_z.abs() <= limit_z,
            stationarity_pass: split_half_z.abs() <= limit_z,
        }
    }
}

/// Runs every replication (in parallel) and aggregates them in replication
/// order, so the result does not depend on scheduling.
pub fn run(config: &SimConfig) -> Result<SimResult> {
    config.validate()?;
    let traces = (0..config.n_replications)
        .into_par_iter()
        .map(|r| run_replication(config, r))
        .collect::<Result<Vec<_>>>()?;

    let samples: Vec<u32> = traces.iter().flat_map(|t| t.samples.iter().copied()).collect();
    let busy: Vec<f64> = traces
        .iter()
        .flat_map(|t| t.busy_at_arrival.iter().map(|&b| f64::from(b)))
        .collect();
    let events: u64 = traces.iter().map(|t| t.events).sum();
    let arrivals: u64 = traces.iter().map(|t| t.arrivals).sum();

    let ls: Vec<f64> = samples.iter().map(|&l| f64::from(l)).collect();
    let all = batch_summary(&ls, BATCHES);
    let half = ls.len() / 2;
    let (first, second) = if half == 0 {
        (all, all)
    } else {
        (
            batch_summary(&ls[..half], BATCHES / 2),
            batch_summary(&ls[half..], BATCHES / 2),
        )
    };
    let busy_summary = batch_summary(&busy, BATCHES);

    Ok(SimResult {
        config: *config,
        samples_recorded: samples.len() as u64,
        empirical_survival: empirical_survival(&samples)?,
        sample_mean_l: all.mean,
        sample_var_l: all.var,
        mean_l_se: all.mean_se,
        arrival_epoch_busy_mean: busy_summary.mean,
        arrival_epoch_busy_var: busy_summary.var,
        arrival_epoch_busy_mean_se: busy_summary.mean_se,
        arrival_epoch_busy_var_se: busy_summary.var_se,
        first_half_mean_l: first.mean,
        second_half_mean_l: second.mean,
        first_half_se: first.mean_se,
        second_half_se: second.mean_se,
        arrival_fraction: arrivals as f64 / events as f64,
        samples,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn forced_arrival_and_departure() {
        let mut state = SimState::empty(3.0);
        assert_eq!(state.arrive(), 1);
        assert_eq!(state.busy.busy_list(), &[1]);
        assert_eq!(state.depart(0), 1);
        assert!(state.busy.is_empty());
    }

    #[test]
    fn first_arrival_from_empty_takes_server_one() {
        let config = SimConfig {
            warmup_time: 0.0,
            ..SimConfig::new(7.0, 1)
        };
        let trace = run_replication(&config, 0).unwrap();
        assert_eq!(trace.samples, vec![1]);
        assert_eq!(trace.busy_at_arrival, vec![0]);
    }

    #[test]
    fn step_keeps_count_and_bits_consistent() {
        let mut state = SimState::empty(20.0);
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let mut last = 0.0;
        for _ in 0..20_000 {
            let before = state.busy_count();
            let e = step(&mut state, 20.0, &mut rng);
            assert!(e.time > last);
            last = e.time;
            match e.kind {
                EventKind::Arrival => {
                    assert_eq!(state.busy_count(), before + 1);
                    assert!(state.busy.contains(e.server.unwrap()));
                }
                EventKind::Departure => assert_eq!(state.busy_count(), before - 1),
            }
        }
        assert!(state.busy.check_invariants());
    }

    #[test]
    fn replication_streams_differ() {
        let config = SimConfig::new(10.0, 200);
        let a = run_replication(&config, 0).unwrap();
        let b = run_replication(&config, 1).unwrap();
        assert_ne!(a.samples, b.samples);
        assert_eq!(a, run_replication(&config, 0).unwrap());
    }

    #[test]
    fn invalid_configs_rejected() {
        let ok = SimConfig::new(10.0, 10);
        assert!(SimConfig { n_samples: 0, ..ok }.validate().is_err());
        assert!(SimConfig { warmup_time: -1.0, ..ok }.validate().is_err());
        assert!(SimConfig { n_replications: 0, ..ok }.validate().is_err());
        assert!(SimConfig { lambda: 0.0, ..ok }.validate().is_err());
    }

    #[test]
    fn arrival_fraction_near_half() {
        // stationary busy count is Poisson(λ), so arrivals ≈ λ/(λ + λ)
        let result = run(&SimConfig::new(40.0, 200_000)).unwrap();
        assert!((result.arrival_fraction - 0.5).abs() < 0.01);
    }
}
