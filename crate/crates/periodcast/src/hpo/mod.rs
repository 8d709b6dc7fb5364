//! Asynchronous multi-worker hyperparameter search.
//!
//! A fixed pool of worker slots is modeled as a blocking queue of slot ids.
//! The dispatch loop takes a slot, computes the next suggestion under a
//! single lock (history + acquisition state), and hands the trial to a
//! worker thread; the worker evaluates lock-free, then re-acquires the lock
//! to append its result and returns the slot. With one worker this
//! degenerates to plain sequential model-based optimization.

pub mod gpr;
pub mod space;
pub mod suggest;

use std::io::{BufRead, BufWriter, Write};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::{Path, PathBuf};
use std::sync::mpsc;
use std::sync::Mutex;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use space::SearchSpace;
use suggest::{suggest, SuggestContext};

#[derive(Clone, Copy, Debug, Serialize, Deserialize, PartialEq, Eq)]
#[serde(rename_all = "lowercase")]
pub enum TrialStatus {
    Pending,
    Running,
    Done,
    Failed,
}

#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
pub struct TrialRecord {
    pub trial_id: usize,
    #[serde(rename = "H")]
    pub h: Vec<f64>,
    pub status: TrialStatus,
    #[serde(rename = "L_valid", skip_serializing_if = "Option::is_none", default)]
    pub l_valid: Option<f64>,
    pub worker: usize,
    pub seconds: f64,
}

#[derive(Serialize, Deserialize)]
struct JournalLine {
    trial_id: usize,
    status: TrialStatus,
    #[serde(rename = "H")]
    h: Vec<f64>,
    #[serde(rename = "L_valid", skip_serializing_if = "Option::is_none", default)]
    l_valid: Option<f64>,
    worker: usize,
    timestamp: String,
}

#[derive(Clone, Debug)]
pub struct SearchConfig {
    pub n_trials: usize,
    pub n_workers: usize,
    pub seed: u64,
    pub journal_path: Option<PathBuf>,
}

impl Default for SearchConfig {
    fn default() -> Self {
        SearchConfig { n_trials: 32, n_workers: 8, seed: 42, journal_path: None }
    }
}

#[derive(Debug)]
pub struct SearchOutcome {
    pub best: TrialRecord,
    /// Completed (done or failed) trials in completion order.
    pub history: Vec<TrialRecord>,
}

struct Shared {
    history: Vec<TrialRecord>,
    /// Unit-cube points + losses of done trials, for the surrogate.
    completed_units: Vec<(Vec<f64>, f64)>,
    /// (trial_id, unit point) of trials still running.
    pending: Vec<(usize, Vec<f64>)>,
    rng: ChaCha8Rng,
    suggest_count: u64,
    journal: Option<BufWriter<std::fs::File>>,
}

impl Shared {
    fn journal_write(&mut self, trial_id: usize, status: TrialStatus, h: &[f64], l_valid: Option<f64>, worker: usize) {
        if let Some(w) = &mut self.journal {
            let line = JournalLine {
                trial_id,
                status,
                h: h.to_vec(),
                l_valid,
                worker,
                timestamp: chrono::Utc::now().to_rfc3339(),
            };
            if let Ok(js) = serde_json::to_string(&line) {
                let _ = writeln!(w, "{js}");
                let _ = w.flush();
            }
        }
    }
}

/// Run the search: exactly `n_trials` trials reach done or failed, at most
/// `n_workers` concurrently; returns the done trial with minimum loss.
pub fn run<F>(objective: F, space: &SearchSpace, cfg: &SearchConfig) -> Result<SearchOutcome>
where
    F: Fn(&[f64]) -> Result<f64> + Sync,
{
    if cfg.n_trials < 1 {
        return Err(Error::Config("n_trials must be >= 1".into()));
    }
    if cfg.n_workers < 1 {
        return Err(Error::Config("n_workers must be >= 1".into()));
    }
    space.validate()?;

    let journal = match &cfg.journal_path {
        Some(p) => Some(BufWriter::new(
            std::fs::File::create(p).map_err(|e| Error::Data(format!("journal {}: {e}", p.display())))?,
        )),
        None => None,
    };
    let shared = Mutex::new(Shared {
        history: Vec::new(),
        completed_units: Vec::new(),
        pending: Vec::new(),
        rng: ChaCha8Rng::seed_from_u64(cfg.seed),
        suggest_count: 0,
        journal,
    });

    let (slot_tx, slot_rx) = mpsc::channel::<usize>();
    for w in 0..cfg.n_workers {
        slot_tx.send(w).expect("receiver alive");
    }

    std::thread::scope(|scope| {
        for trial_id in 0..cfg.n_trials {
            let worker = slot_rx.recv().expect("slot senders alive");
            // suggestion + bookkeeping under one lock
            let (h, unit) = {
                let mut st = shared.lock().expect("hpo lock");
                let pending_units: Vec<Vec<f64>> = st.pending.iter().map(|(_, u)| u.clone()).collect();
                let unit = {
                    let ctx = SuggestContext {
                        space,
                        completed: &st.completed_units,
                        pending: &pending_units,
                        suggestion_index: st.suggest_count,
                    };
                    // borrow rng separately from the context fields
                    let mut rng = st.rng.clone();
                    let u = suggest(&ctx, &mut rng);
                    st.rng = rng;
                    u
                };
                st.suggest_count += 1;
                let h = space.from_unit(&unit);
                st.pending.push((trial_id, unit.clone()));
                st.journal_write(trial_id, TrialStatus::Running, &h, None, worker);
                (h, unit)
            };
            let shared = &shared;
            let slot_tx = slot_tx.clone();
            let objective = &objective;
            scope.spawn(move || {
                let t0 = std::time::Instant::now();
                let outcome = catch_unwind(AssertUnwindSafe(|| objective(&h)));
                let seconds = t0.elapsed().as_secs_f64();
                let (status, l_valid) = match outcome {
                    Ok(Ok(l)) if l.is_finite() => (TrialStatus::Done, Some(l)),
                    Ok(Ok(_)) | Ok(Err(_)) | Err(_) => (TrialStatus::Failed, None),
                };
                {
                    let mut st = shared.lock().expect("hpo lock");
                    st.pending.retain(|(id, _)| *id != trial_id);
                    if let Some(l) = l_valid {
                        st.completed_units.push((unit, l));
                    }
                    st.history.push(TrialRecord {
                        trial_id,
                        h: h.clone(),
                        status,
                        l_valid,
                        worker,
                        seconds,
                    });
                    st.journal_write(trial_id, status, &h, l_valid, worker);
                }
                // a dropped receiver just means the dispatch loop is done
                let _ = slot_tx.send(worker);
            });
        }
    });

    let st = shared.into_inner().expect("hpo lock");
    let best = st
        .history
        .iter()
        .filter(|r| r.status == TrialStatus::Done)
        .min_by(|a, b| a.l_valid.partial_cmp(&b.l_valid).unwrap())
        .cloned()
        .ok_or_else(|| Error::Numeric("hyperparameter search: every trial failed".into()))?;
    Ok(SearchOutcome { best, history: st.history })
}

/// Read a line-delimited trial journal back into records (final state per
/// trial, in the order trials completed).
pub fn replay_journal(path: &Path) -> Result<Vec<TrialRecord>> {
    let f = std::fs::File::open(path).map_err(|e| Error::Data(format!("{}: {e}", path.display())))?;
    let mut out: Vec<TrialRecord> = Vec::new();
    for (lineno, line) in std::io::BufReader::new(f).lines().enumerate() {
        let line = line.map_err(|e| Error::Data(format!("{}: {e}", path.display())))?;
        if line.trim().is_empty() {
            continue;
        }
        let j: JournalLine = serde_json::from_str(&line).map_err(|e| {
            Error::Data(format!("{} line {}: {e}", path.display(), lineno + 1))
        })?;
        match j.status {
            TrialStatus::Done | TrialStatus::Failed => out.push(TrialRecord {
                trial_id: j.trial_id,
                h: j.h,
                status: j.status,
                l_valid: j.l_valid,
                worker: j.worker,
                seconds: 0.0,
            }),
            TrialStatus::Running | TrialStatus::Pending => {}
        }
    }
    Ok(out)
}

/// Cumulative best loss over completed trials, in the given order.
pub fn best_so_far(history: &[TrialRecord]) -> Vec<f64> {
    let mut best = f64::INFINITY;
    let mut out = Vec::new();
    for r in history {
        if let Some(l) = r.l_valid {
            best = best.min(l);
        }
        out.push(best);
    }
    out
}
