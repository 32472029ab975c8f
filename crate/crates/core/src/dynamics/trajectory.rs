//! Recording sample paths.

use crate::dynamics::stepper::{Model, PathState};
use crate::error::{Error, Result};
use crate::observables::Observable;
use crate::spectral::LayerField;

#[derive(Debug, Clone, PartialEq)]
pub struct RecordOptions {
    /// Record every this many steps (the initial and final states are
    /// always recorded).
    pub every: usize,
    pub store_q: bool,
    pub store_eta_w: bool,
    pub observables: Vec<Observable>,
}

impl RecordOptions {
    pub fn from_model(model: &Model) -> Self {
        Self {
            every: model.config().record_every,
            store_q: true,
            store_eta_w: false,
            observables: model.config().observables.clone(),
        }
    }
}

/// Sampled times with snapshots and named observable series.
#[derive(Debug, Clone, PartialEq)]
pub struct TrajectoryRecord {
    pub times: Vec<f64>,
    pub q: Vec<LayerField>,
    pub eta: Vec<LayerField>,
    pub w: Vec<LayerField>,
    pub names: Vec<String>,
    /// `series[j][i]` is observable `j` at `times[i]`.
    pub series: Vec<Vec<f64>>,
    pub seed: u64,
    pub stream_id: u64,
    pub config_hash: String,
}

impl TrajectoryRecord {
    pub fn series(&self, name: &str) -> Option<&[f64]> {
        self.names
            .iter()
            .position(|n| n == name)
            .map(|j| self.series[j].as_slice())
    }

    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }
}

struct Recorder<'a> {
    model: &'a Model,
    options: &'a RecordOptions,
    record: TrajectoryRecord,
}

impl<'a> Recorder<'a> {
    fn new(model: &'a Model, options: &'a RecordOptions, stream_id: u64) -> Self {
        let names = options.observables.iter().map(|o| o.name()).collect();
        Self {
            model,
            options,
            record: TrajectoryRecord {
                times: Vec::new(),
                q: Vec::new(),
                eta: Vec::new(),
                w: Vec::new(),
                names,
                series: vec![Vec::new(); options.observables.len()],
                seed: model.config().seed,
                stream_id,
                config_hash: model.config().hash(),
            },
        }
    }

    /// Records `state`. An observable that overflows counts as a blow-up
    /// and leaves the record untouched.
    fn push(&mut self, state: &PathState) -> Result<()> {
        let q = state.q();
        let values = self
            .options
            .observables
            .iter()
            .map(|obs| obs.evaluate(self.model.basis(), self.model.pairs(), &q, &state.eta, &state.w))
            .collect::<Result<Vec<f64>>>()?;
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::BlowUp {
                time: self.record.times.last().copied().unwrap_or(0.0),
                partial: None,
            });
        }
        for (v, series) in values.into_iter().zip(&mut self.record.series) {
            series.push(v);
        }
        self.record.times.push(state.time);
        if self.options.store_eta_w {
            self.record.eta.push(state.eta.clone());
            self.record.w.push(state.w.clone());
        }
        if self.options.store_q {
            self.record.q.push(q);
        }
        Ok(())
    }
}

/// Runs one path from `q0` to the configured horizon on stream `stream_id`.
pub fn run_trajectory(
    model: &Model,
    q0: &LayerField,
    options: &RecordOptions,
    stream_id: u64,
) -> Result<TrajectoryRecord> {
    let state = model.start(q0, stream_id)?;
    run_from_state(model, state, options, model.config().steps())
}

/// Advances `state` by `steps` steps, recording as configured. The
/// starting state is recorded first.
pub fn run_from_state(
    model: &Model,
    mut state: PathState,
    options: &RecordOptions,
    steps: usize,
) -> Result<TrajectoryRecord> {
    if options.every == 0 {
        return Err(Error::config("record cadence must be positive"));
    }
    let mut rec = Recorder::new(model, options, state.rng.get_stream());
    let with_partial = |rec: Recorder, err: Error| match err {
        Error::BlowUp { time, .. } => Error::BlowUp {
            time,
            partial: Some(Box::new(rec.record)),
        },
        e => e,
    };
    if let Err(e) = rec.push(&state) {
        return Err(with_partial(rec, e));
    }
    for s in 1..=steps {
        let mut result = model.step(&mut state);
        if result.is_ok() && (s % options.every == 0 || s == steps) {
            result = rec.push(&state);
        }
        if let Err(e) = result {
            return Err(with_partial(rec, e));
        }
    }
    Ok(rec.record)
}
