//! Experiment driver: configuration, deterministic parallel sweeps over
//! (model, mode, L, p) cells, CSV/JSON persistence, and analysis helpers.
//!
//! Output bytes are a pure function of (config, master seed): work units are
//! whole circuits, each seeded from the seed tree by its (cell, circuit)
//! index, and results are merged in index order regardless of scheduling.

use std::fmt::Write as _;
use std::io::Write as _;
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::absorbing::{self, generate_absorbing_circuit, run_absorbing_trajectory};
use crate::bernoulli::{
    default_t_max, generate_circuit, run_trajectory, FinalState, Mode, RecordSpec, TimeSample,
};
use crate::bits::{DiagonalObservable, MAX_L_CLASSICAL, MAX_L_QUANTUM};
use crate::rng::SeedTree;
use crate::scaling::{
    fit_coherence_series, fit_fdw_exponent, fss_collapse, tail_rescale_check, CollapseOptions,
    ScalingPoint, TailRescaling,
};
use crate::stats::{decompose_variance, NestedSample};
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Model {
    Bernoulli,
    Absorbing,
}

impl std::fmt::Display for Model {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Model::Bernoulli => write!(f, "bernoulli"),
            Model::Absorbing => write!(f, "absorbing"),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum RecordPolicy {
    /// Moments at the final time only.
    Final,
    /// Moments at every step of the steady-state window (second half of the
    /// evolution), time-averaged into the summary.
    Window,
}

/// Initial product state of the register.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum InitialState {
    /// Single 1 at FDW position L/2, zeros elsewhere.
    Half,
    /// Single 1 at FDW position 1 (used for coherence growth studies).
    One,
    /// All sites 1 (maximally seeded; the absorbing-model default).
    Ones,
}

impl InitialState {
    pub fn word(self, l: u32) -> u64 {
        match self {
            InitialState::Half => 1u64 << (l / 2 - 1),
            InitialState::One => 1,
            InitialState::Ones => (1u64 << l) - 1,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ExperimentConfig {
    pub model: Model,
    pub mode: Mode,
    pub sizes: Vec<u32>,
    /// Control rate `p_ctrl` (bernoulli) or measurement rate `p_m`
    /// (absorbing).
    pub probs: Vec<f64>,
    pub n_circuits: u32,
    pub n_trajectories: u32,
    /// Full-register shots drawn from each trajectory's final state.
    pub n_shots: u32,
    pub seed: u64,
    /// Zero-fluctuation cutoff.
    pub epsilon: f64,
    pub record: RecordPolicy,
    /// Initial register; `None` picks the model default (half for
    /// bernoulli, ones for absorbing).
    pub initial: Option<InitialState>,
    /// Record l1-coherence (quantum mode only).
    pub coherence: bool,
    /// Accumulate the basis-index distribution (2^L bins per cell).
    pub bit_dist: bool,
    pub out: PathBuf,
    /// Rayon worker threads; 0 = library default.
    pub workers: usize,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        ExperimentConfig {
            model: Model::Bernoulli,
            mode: Mode::Quantum,
            sizes: vec![8],
            probs: vec![0.5],
            n_circuits: 10,
            n_trajectories: 1,
            n_shots: 0,
            seed: 1,
            epsilon: 1e-5,
            record: RecordPolicy::Final,
            initial: None,
            coherence: false,
            bit_dist: false,
            out: PathBuf::from("out"),
            workers: 0,
        }
    }
}

impl ExperimentConfig {
    /// Parses the flat `key = value` config grammar: one pair per line, `#`
    /// comments, lists comma-separated. Unknown keys are rejected.
    pub fn from_str_cfg(text: &str) -> Result<Self> {
        let mut cfg = ExperimentConfig::default();
        for (lineno, raw_line) in text.lines().enumerate() {
            let line = raw_line.split('#').next().unwrap().trim();
            if line.is_empty() {
                continue;
            }
            let (key, value) = line.split_once('=').ok_or_else(|| {
                Error::InvalidInput(format!("config line {}: expected key = value", lineno + 1))
            })?;
            cfg.set(key.trim(), value.trim())?;
        }
        Ok(cfg)
    }

    pub fn from_file(path: &Path) -> Result<Self> {
        Self::from_str_cfg(&std::fs::read_to_string(path)?)
    }

    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        let bad = |what: &str| Error::InvalidInput(format!("config key {key}: {what}: {value}"));
        match key {
            "model" => {
                self.model = match value {
                    "bernoulli" => Model::Bernoulli,
                    "absorbing" => Model::Absorbing,
                    _ => return Err(bad("unknown model")),
                }
            }
            "mode" => {
                self.mode = match value {
                    "classical" => Mode::Classical,
                    "quantum" => Mode::Quantum,
                    _ => return Err(bad("unknown mode")),
                }
            }
            "sizes" => {
                self.sizes = value
                    .split(',')
                    .map(|s| s.trim().parse::<u32>())
                    .collect::<std::result::Result<_, _>>()
                    .map_err(|_| bad("expected comma-separated integers"))?;
            }
            "probs" => {
                self.probs = value
                    .split(',')
                    .map(|s| s.trim().parse::<f64>())
                    .collect::<std::result::Result<_, _>>()
                    .map_err(|_| bad("expected comma-separated floats"))?;
            }
            "circuits" => self.n_circuits = value.parse().map_err(|_| bad("expected integer"))?,
            "trajectories" => {
                self.n_trajectories = value.parse().map_err(|_| bad("expected integer"))?
            }
            "shots" => self.n_shots = value.parse().map_err(|_| bad("expected integer"))?,
            "seed" => self.seed = value.parse().map_err(|_| bad("expected 64-bit integer"))?,
            "epsilon" => self.epsilon = value.parse().map_err(|_| bad("expected float"))?,
            "record" => {
                self.record = match value {
                    "final" => RecordPolicy::Final,
                    "window" => RecordPolicy::Window,
                    _ => return Err(bad("expected final|window")),
                }
            }
            "initial" => {
                self.initial = Some(match value {
                    "half" => InitialState::Half,
                    "one" => InitialState::One,
                    "ones" => InitialState::Ones,
                    _ => return Err(bad("expected half|one|ones")),
                })
            }
            "coherence" => self.coherence = value.parse().map_err(|_| bad("expected bool"))?,
            "bit_dist" => self.bit_dist = value.parse().map_err(|_| bad("expected bool"))?,
            "out" => self.out = PathBuf::from(value),
            "workers" => self.workers = value.parse().map_err(|_| bad("expected integer"))?,
            _ => return Err(Error::InvalidInput(format!("unknown config key: {key}"))),
        }
        Ok(())
    }

    /// Validates and normalizes. Classical mode has no trajectory
    /// randomness, so the trajectory count is forced to 1.
    pub fn validate(&mut self) -> Result<()> {
        if self.sizes.is_empty() || self.probs.is_empty() {
            return Err(Error::InvalidInput("sizes and probs must be non-empty".into()));
        }
        let max_l = match self.mode {
            Mode::Classical => MAX_L_CLASSICAL,
            Mode::Quantum => MAX_L_QUANTUM,
        };
        for &l in &self.sizes {
            if l < 4 || l > max_l {
                return Err(Error::InvalidInput(format!(
                    "L={l} outside [4, {max_l}] for {} mode",
                    self.mode
                )));
            }
            if self.model == Model::Absorbing && l % 2 != 0 {
                return Err(Error::InvalidInput(format!("absorbing model requires even L, got {l}")));
            }
        }
        if self.model == Model::Absorbing && self.mode == Mode::Classical {
            return Err(Error::InvalidInput("absorbing model is quantum-only".into()));
        }
        for &p in &self.probs {
            if !(0.0..=1.0).contains(&p) {
                return Err(Error::InvalidInput(format!("probability {p} outside [0, 1]")));
            }
        }
        if self.n_circuits < 2 {
            return Err(Error::InvalidInput("need at least 2 circuits".into()));
        }
        if self.n_trajectories < 1 {
            return Err(Error::InvalidInput("need at least 1 trajectory".into()));
        }
        if self.mode == Mode::Classical {
            self.n_trajectories = 1;
        }
        if !(self.epsilon > 0.0) {
            return Err(Error::InvalidInput(format!("epsilon={} must be positive", self.epsilon)));
        }
        if self.coherence && self.mode == Mode::Classical {
            return Err(Error::InvalidInput("coherence recording is quantum-only".into()));
        }
        if self.bit_dist && self.sizes.iter().any(|&l| l > MAX_L_QUANTUM) {
            return Err(Error::InvalidInput("bit_dist limited to L <= 24".into()));
        }
        Ok(())
    }

    pub fn initial_word(&self, l: u32) -> u64 {
        self.initial
            .unwrap_or(match self.model {
                Model::Bernoulli => InitialState::Half,
                Model::Absorbing => InitialState::Ones,
            })
            .word(l)
    }

    fn t_max(&self, l: u32) -> u32 {
        match self.model {
            Model::Bernoulli => default_t_max(l),
            Model::Absorbing => absorbing::default_t_layers(l),
        }
    }

    fn record_spec(&self, l: u32) -> RecordSpec {
        let t_max = self.t_max(l);
        let times = match self.record {
            RecordPolicy::Final => vec![t_max],
            RecordPolicy::Window => (t_max / 2..=t_max).collect(),
        };
        RecordSpec {
            times,
            coherence: self.coherence,
            fdw_profile: true,
            bit_profile: self.bit_dist,
        }
    }
}

/// 17 significant digits: enough to round-trip f64 exactly, so reruns are
/// byte-stable.
pub fn fmt_float(x: f64) -> String {
    format!("{x:.16e}")
}

fn fnv1a64(bytes: &[u8]) -> u64 {
    let mut h = 0xcbf29ce484222325u64;
    for &b in bytes {
        h ^= b as u64;
        h = h.wrapping_mul(0x100000001b3);
    }
    h
}

/// Everything one trajectory contributes to the outputs.
struct TrajResult {
    samples: Vec<TimeSample>,
    digest: u64,
    /// Window-averaged (mean, second) per channel in order k, mz.
    k: (f64, f64),
    mz: (f64, f64),
    coherence: Option<f64>,
    shot_k: Option<(f64, f64)>,
    fdw_profile: Vec<f64>,
    bit_profile: Option<Vec<f64>>,
}

struct CircuitResult {
    cell: usize,
    circuit: u32,
    trajs: Vec<TrajResult>,
}

fn window_average(samples: &[TimeSample]) -> ((f64, f64), (f64, f64), Option<f64>) {
    let n = samples.len() as f64;
    let k = (
        samples.iter().map(|s| s.k_mean).sum::<f64>() / n,
        samples.iter().map(|s| s.k_second).sum::<f64>() / n,
    );
    let mz = (
        samples.iter().map(|s| s.mz_mean).sum::<f64>() / n,
        samples.iter().map(|s| s.mz_second).sum::<f64>() / n,
    );
    let coh = samples[0]
        .coherence
        .map(|_| samples.iter().filter_map(|s| s.coherence).sum::<f64>() / n);
    (k, mz, coh)
}

fn simulate_circuit(
    cfg: &ExperimentConfig,
    cell: usize,
    l: u32,
    p: f64,
    c: u32,
    tree: &SeedTree,
) -> Result<CircuitResult> {
    let record = cfg.record_spec(l);
    let mut circuit_stream = tree.circuit_stream(c as u64);
    let t_max = cfg.t_max(l);
    enum Frozen {
        Bern(crate::bernoulli::CircuitRealization),
        Abs(crate::absorbing::AbsorbingCircuit),
    }
    let frozen = match cfg.model {
        Model::Bernoulli => {
            Frozen::Bern(generate_circuit(l, p, t_max, cfg.mode, &mut circuit_stream)?)
        }
        Model::Absorbing => {
            Frozen::Abs(generate_absorbing_circuit(l, p, t_max, &mut circuit_stream)?)
        }
    };
    // bernoulli starts fully uncontrolled (all ones, k = L); absorbing starts
    // fully defective (all ones)
    let initial = cfg.initial_word(l);
    let mut trajs = Vec::with_capacity(cfg.n_trajectories as usize);
    for tau in 0..cfg.n_trajectories {
        let mut traj_stream = tree.trajectory_stream(c as u64, tau as u64);
        let (rec, fin) = match &frozen {
            Frozen::Bern(circ) => {
                let rng = (cfg.mode == Mode::Quantum).then_some(&mut traj_stream);
                run_trajectory(circ, initial, rng, &record)?
            }
            Frozen::Abs(circ) => run_absorbing_trajectory(circ, initial, &mut traj_stream, &record)?,
        };
        let (k, mz, coherence) = window_average(&rec.series);
        let shot_k = (cfg.n_shots > 0).then(|| {
            let mut sum = 0.0;
            let mut sum2 = 0.0;
            for s in 0..cfg.n_shots {
                let mut shot_stream = tree.shot_stream(c as u64, tau as u64, s as u64);
                let v = match &fin {
                    FinalState::Classical(n) => DiagonalObservable::Fdw.eigenvalue(*n, l),
                    FinalState::Quantum(_) => {
                        fin.shot_eigenvalue(DiagonalObservable::Fdw, l, &mut shot_stream)
                    }
                };
                sum += v;
                sum2 += v * v;
            }
            (sum / cfg.n_shots as f64, sum2 / cfg.n_shots as f64)
        });
        trajs.push(TrajResult {
            digest: fnv1a64(&rec.outcomes),
            samples: rec.series,
            k,
            mz,
            coherence,
            shot_k,
            fdw_profile: rec.fdw_profile.expect("fdw profile always recorded"),
            bit_profile: rec.bit_profile,
        });
    }
    Ok(CircuitResult { cell, circuit: c, trajs })
}

fn nd_sample(mz: &NestedSample) -> NestedSample {
    NestedSample {
        circuit: mz.circuit,
        trajectory: mz.trajectory,
        mean: (1.0 - mz.mean) / 2.0,
        second: (1.0 - 2.0 * mz.mean + mz.second) / 4.0,
    }
}

pub const RAW_HEADER: &str =
    "model,mode,l,p,circuit,trajectory,t,k_mean,k_second,mz_mean,mz_second,coherence,outcome_digest";

pub const SUMMARY_HEADER: &str = "model,mode,l,p,n_circuits,n_trajectories,n_shots,\
k_mean,k_var_total,k_var_circuit,k_var_traj,k_var_shot,k_order_traj,k_order_shot,k_order_quantum,\
mz_mean,mz_var_total,mz_var_circuit,mz_var_traj,mz_var_shot,mz_order_traj,mz_order_shot,mz_order_quantum,\
nd_mean,nd_var_total,nd_var_circuit,nd_var_traj,nd_var_shot,nd_order_traj,nd_order_shot,nd_order_quantum,\
coherence_mean,shot_k_var_quantum,shot_k_order_quantum";

pub const FDW_DIST_HEADER: &str = "model,mode,l,p,k,weight";
pub const BIT_DIST_HEADER: &str = "model,mode,l,p,n,weight";

#[derive(Debug, Clone, Serialize)]
pub struct RunReport {
    pub raw_path: PathBuf,
    pub summary_path: PathBuf,
    pub fdw_dist_path: PathBuf,
    pub bit_dist_path: Option<PathBuf>,
    pub manifest_path: PathBuf,
    pub content_hash: String,
    pub raw_rows: u64,
    pub summary_rows: u64,
}

/// Executes the sweep and writes `raw.csv`, `summary.csv`, `fdw_dist.csv`,
/// optionally `bit_dist.csv`, and `manifest.json` under `config.out`.
pub fn run(config: &ExperimentConfig) -> Result<RunReport> {
    let mut cfg = config.clone();
    cfg.validate()?;
    let started = std::time::Instant::now();
    std::fs::create_dir_all(&cfg.out)?;

    let mut cells: Vec<(usize, u32, f64)> = Vec::with_capacity(cfg.sizes.len() * cfg.probs.len());
    for (i, &l) in cfg.sizes.iter().enumerate() {
        for (j, &p) in cfg.probs.iter().enumerate() {
            cells.push((i * cfg.probs.len() + j, l, p));
        }
    }
    let tree = SeedTree::new(cfg.seed);
    let units: Vec<(usize, u32, f64, u32)> = cells
        .iter()
        .flat_map(|&(cell, l, p)| (0..cfg.n_circuits).map(move |c| (cell, l, p, c)))
        .collect();

    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(cfg.workers)
        .build()
        .map_err(|e| Error::InvalidInput(format!("worker pool: {e}")))?;
    // deterministic merge: par collect preserves unit order
    let results: Vec<Result<CircuitResult>> = pool.install(|| {
        units
            .par_iter()
            .map(|&(cell, l, p, c)| simulate_circuit(&cfg, cell, l, p, c, &tree.subtree(cell as u64)))
            .collect()
    });
    let mut by_cell: Vec<Vec<CircuitResult>> = (0..cells.len()).map(|_| Vec::new()).collect();
    for r in results {
        let r = r?;
        by_cell[r.cell].push(r);
    }
    for group in by_cell.iter_mut() {
        group.sort_by_key(|r| r.circuit);
    }

    let mut raw = String::new();
    let mut summary = String::new();
    let mut fdw_dist = String::new();
    let mut bit_dist = cfg.bit_dist.then(String::new);
    writeln!(raw, "{RAW_HEADER}").unwrap();
    writeln!(summary, "{SUMMARY_HEADER}").unwrap();
    writeln!(fdw_dist, "{FDW_DIST_HEADER}").unwrap();
    if let Some(b) = bit_dist.as_mut() {
        writeln!(b, "{BIT_DIST_HEADER}").unwrap();
    }
    let mut raw_rows = 0u64;
    let mut summary_rows = 0u64;

    for (&(_, l, p), group) in cells.iter().zip(&by_cell) {
        let p_str = fmt_float(p);
        let mut k_samples = Vec::new();
        let mut mz_samples = Vec::new();
        let mut fdw_acc = vec![0.0f64; l as usize + 1];
        let mut bit_acc = cfg.bit_dist.then(|| vec![0.0f64; 1usize << l]);
        let mut shot_vars: Vec<f64> = Vec::new();
        for cr in group {
            for (tau, tr) in cr.trajs.iter().enumerate() {
                for s in &tr.samples {
                    raw_rows += 1;
                    writeln!(
                        raw,
                        "{},{},{},{},{},{},{},{},{},{},{},{},{:016x}",
                        cfg.model,
                        cfg.mode,
                        l,
                        p_str,
                        cr.circuit,
                        tau,
                        s.t,
                        fmt_float(s.k_mean),
                        fmt_float(s.k_second),
                        fmt_float(s.mz_mean),
                        fmt_float(s.mz_second),
                        s.coherence.map(fmt_float).unwrap_or_default(),
                        tr.digest,
                    )
                    .unwrap();
                }
                k_samples.push(NestedSample {
                    circuit: cr.circuit,
                    trajectory: tau as u32,
                    mean: tr.k.0,
                    second: tr.k.1,
                });
                mz_samples.push(NestedSample {
                    circuit: cr.circuit,
                    trajectory: tau as u32,
                    mean: tr.mz.0,
                    second: tr.mz.1,
                });
                for (k, w) in tr.fdw_profile.iter().enumerate() {
                    fdw_acc[k] += w;
                }
                if let (Some(acc), Some(bp)) = (bit_acc.as_mut(), tr.bit_profile.as_ref()) {
                    for (n, w) in bp.iter().enumerate() {
                        acc[n] += w;
                    }
                }
            }
            if cfg.n_shots > 0 {
                // pooled over this circuit's trajectories: the shot-protocol
                // estimate of within-circuit variance
                let n = cr.trajs.len() as f64;
                let m1 = cr.trajs.iter().map(|t| t.shot_k.unwrap().0).sum::<f64>() / n;
                let m2 = cr.trajs.iter().map(|t| t.shot_k.unwrap().1).sum::<f64>() / n;
                shot_vars.push((m2 - m1 * m1).max(0.0));
            }
        }
        let nd_samples: Vec<NestedSample> = mz_samples.iter().map(nd_sample).collect();
        let dk = decompose_variance(&k_samples, cfg.epsilon)?;
        let dmz = decompose_variance(&mz_samples, cfg.epsilon)?;
        let dnd = decompose_variance(&nd_samples, cfg.epsilon)?;
        let coherence_mean = cfg.coherence.then(|| {
            let vals: Vec<f64> = group
                .iter()
                .flat_map(|cr| cr.trajs.iter().filter_map(|t| t.coherence))
                .collect();
            vals.iter().sum::<f64>() / vals.len() as f64
        });
        let (shot_vq, shot_oq) = if cfg.n_shots > 0 {
            let mean = shot_vars.iter().sum::<f64>() / shot_vars.len() as f64;
            let below = shot_vars.iter().filter(|&&v| v < cfg.epsilon).count();
            (Some(mean), Some(below as f64 / shot_vars.len() as f64))
        } else {
            (None, None)
        };
        summary_rows += 1;
        let mut row = format!(
            "{},{},{},{},{},{},{}",
            cfg.model, cfg.mode, l, p_str, cfg.n_circuits, cfg.n_trajectories, cfg.n_shots
        );
        for d in [&dk, &dmz, &dnd] {
            write!(
                row,
                ",{},{},{},{},{},{},{},{}",
                fmt_float(d.mean),
                fmt_float(d.var_total),
                fmt_float(d.var_circuit),
                fmt_float(d.mean_var_traj),
                fmt_float(d.mean_var_shot),
                fmt_float(d.order_traj),
                fmt_float(d.order_shot),
                fmt_float(d.order_quantum),
            )
            .unwrap();
        }
        write!(
            row,
            ",{},{},{}",
            coherence_mean.map(fmt_float).unwrap_or_default(),
            shot_vq.map(fmt_float).unwrap_or_default(),
            shot_oq.map(fmt_float).unwrap_or_default(),
        )
        .unwrap();
        writeln!(summary, "{row}").unwrap();

        let total: f64 = fdw_acc.iter().sum();
        for (k, w) in fdw_acc.iter().enumerate() {
            writeln!(
                fdw_dist,
                "{},{},{},{},{},{}",
                cfg.model,
                cfg.mode,
                l,
                p_str,
                k,
                fmt_float(w / total)
            )
            .unwrap();
        }
        if let (Some(out), Some(acc)) = (bit_dist.as_mut(), bit_acc.as_ref()) {
            let total: f64 = acc.iter().sum();
            for (n, w) in acc.iter().enumerate() {
                writeln!(
                    out,
                    "{},{},{},{},{},{}",
                    cfg.model,
                    cfg.mode,
                    l,
                    p_str,
                    n,
                    fmt_float(w / total)
                )
                .unwrap();
            }
        }
    }

    let raw_path = cfg.out.join("raw.csv");
    let summary_path = cfg.out.join("summary.csv");
    let fdw_dist_path = cfg.out.join("fdw_dist.csv");
    std::fs::write(&raw_path, &raw)?;
    std::fs::write(&summary_path, &summary)?;
    std::fs::write(&fdw_dist_path, &fdw_dist)?;
    let bit_dist_path = match &bit_dist {
        Some(text) => {
            let p = cfg.out.join("bit_dist.csv");
            std::fs::write(&p, text)?;
            Some(p)
        }
        None => None,
    };

    let mut hasher = Sha256::new();
    hasher.update(raw.as_bytes());
    hasher.update(summary.as_bytes());
    hasher.update(fdw_dist.as_bytes());
    if let Some(b) = &bit_dist {
        hasher.update(b.as_bytes());
    }
    let content_hash = format!("{:x}", hasher.finalize());

    let manifest_path = cfg.out.join("manifest.json");
    let manifest = serde_json::json!({
        "config": &cfg,
        "content_hash": content_hash,
        "raw_rows": raw_rows,
        "summary_rows": summary_rows,
        "wall_seconds": started.elapsed().as_secs_f64(),
    });
    let mut f = std::fs::File::create(&manifest_path)?;
    writeln!(f, "{}", serde_json::to_string_pretty(&manifest)?)?;

    Ok(RunReport {
        raw_path,
        summary_path,
        fdw_dist_path,
        bit_dist_path,
        manifest_path,
        content_hash,
        raw_rows,
        summary_rows,
    })
}

/// A summary.csv loaded into memory as (header index, rows of fields).
pub struct CsvTable {
    pub header: Vec<String>,
    pub rows: Vec<Vec<String>>,
}

impl CsvTable {
    pub fn read(path: &Path) -> Result<Self> {
        let mut rdr = csv::Reader::from_path(path)?;
        let header: Vec<String> = rdr.headers()?.iter().map(str::to_owned).collect();
        let mut rows = Vec::new();
        for rec in rdr.records() {
            rows.push(rec?.iter().map(str::to_owned).collect());
        }
        Ok(CsvTable { header, rows })
    }

    pub fn col(&self, name: &str) -> Result<usize> {
        self.header
            .iter()
            .position(|h| h == name)
            .ok_or_else(|| Error::Schema(format!("missing column: {name}")))
    }

    pub fn f64_at(&self, row: &[String], col: usize) -> Result<f64> {
        row.get(col)
            .and_then(|s| s.parse::<f64>().ok())
            .ok_or_else(|| Error::Schema(format!("non-numeric field in column {col}")))
    }
}

/// How `analyze fss` assigns standard errors to summary rows.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ErrPolicy {
    /// Equal weights.
    Constant,
    /// `sqrt(v (1 - v) / n_circuits)`, for order-parameter fractions.
    Binomial,
}

/// Extracts (L, p, value * L^l_power, stderr) points from a summary table.
pub fn scaling_points(
    table: &CsvTable,
    value_col: &str,
    l_power: f64,
    err: ErrPolicy,
) -> Result<Vec<ScalingPoint>> {
    let ci_l = table.col("l")?;
    let ci_p = table.col("p")?;
    let ci_v = table.col(value_col)?;
    let ci_nc = table.col("n_circuits")?;
    let mut out = Vec::with_capacity(table.rows.len());
    for row in &table.rows {
        let l = table.f64_at(row, ci_l)? as u32;
        let p = table.f64_at(row, ci_p)?;
        let v = table.f64_at(row, ci_v)?;
        let n_c = table.f64_at(row, ci_nc)?;
        let scale = (l as f64).powf(l_power);
        let stderr = match err {
            ErrPolicy::Constant => 1.0,
            ErrPolicy::Binomial => {
                let f = v.clamp(0.0, 1.0);
                (f * (1.0 - f) / n_c).sqrt().max(0.5 / n_c)
            }
        };
        out.push(ScalingPoint { l, p, value: v * scale, stderr: stderr * scale });
    }
    Ok(out)
}

#[derive(Debug, Clone, Serialize)]
pub struct FssReport {
    pub value_col: String,
    pub fit: crate::scaling::CollapseFit,
}

/// `analyze fss`: collapse one summary column; writes `fss_fit.json` and
/// `fss_rescaled.csv` under `out`.
pub fn analyze_fss(
    input: &Path,
    value_col: &str,
    l_power: f64,
    err: ErrPolicy,
    opts: &CollapseOptions,
    out: &Path,
) -> Result<FssReport> {
    let table = CsvTable::read(input)?;
    let points = scaling_points(&table, value_col, l_power, err)?;
    let fit = fss_collapse(&points, opts)?;
    std::fs::create_dir_all(out)?;
    let report = FssReport { value_col: value_col.to_owned(), fit: fit.clone() };
    std::fs::write(out.join("fss_fit.json"), serde_json::to_string_pretty(&report)?)?;
    let mut csv_text = String::from("l,p,u,v\n");
    for pt in &points {
        let u = (pt.p - fit.p_c) * (pt.l as f64).powf(1.0 / fit.nu);
        let v = pt.value * (pt.l as f64).powf(fit.beta / fit.nu)
            / (1.0 + fit.correction / pt.l as f64);
        writeln!(csv_text, "{},{},{},{}", pt.l, fmt_float(pt.p), fmt_float(u), fmt_float(v))
            .unwrap();
    }
    std::fs::write(out.join("fss_rescaled.csv"), csv_text)?;
    Ok(report)
}

/// `analyze coherence`: per control rate, fit
/// `log2(coherence) = a1 L + a0 + a_-1 / L`; writes `coherence_fit.csv`.
pub fn analyze_coherence(input: &Path, out: &Path) -> Result<Vec<(f64, crate::scaling::CoherenceFit)>> {
    let table = CsvTable::read(input)?;
    let ci_l = table.col("l")?;
    let ci_p = table.col("p")?;
    let ci_c = table.col("coherence_mean")?;
    let mut by_p: std::collections::BTreeMap<u64, Vec<(u32, f64)>> = Default::default();
    for row in &table.rows {
        if row[ci_c].is_empty() {
            return Err(Error::Schema("summary has no recorded coherence".into()));
        }
        let l = table.f64_at(row, ci_l)? as u32;
        let p = table.f64_at(row, ci_p)?;
        let c = table.f64_at(row, ci_c)?;
        by_p.entry(p.to_bits()).or_default().push((l, c));
    }
    let mut fits = Vec::new();
    for (pb, pts) in &by_p {
        fits.push((f64::from_bits(*pb), fit_coherence_series(pts)?));
    }
    std::fs::create_dir_all(out)?;
    let mut text = String::from("p,a1,a0,am1,rms_residual\n");
    for (p, fit) in &fits {
        writeln!(
            text,
            "{},{},{},{},{}",
            fmt_float(*p),
            fmt_float(fit.a1),
            fmt_float(fit.a0),
            fmt_float(fit.am1),
            fmt_float(fit.rms_residual)
        )
        .unwrap();
    }
    std::fs::write(out.join("coherence_fit.csv"), text)?;
    Ok(fits)
}

/// `analyze distribution`: per (L, p), slope of `log2 f(k)` over the
/// interior `k` range; writes `fdw_slope.csv`. The slope is the tail
/// exponent `s` (1 fully chaotic, 0 critical, negative controlled).
pub fn analyze_distribution(input: &Path, out: &Path) -> Result<Vec<(u32, f64, f64, f64)>> {
    let table = CsvTable::read(input)?;
    let ci_l = table.col("l")?;
    let ci_p = table.col("p")?;
    let ci_k = table.col("k")?;
    let ci_w = table.col("weight")?;
    let mut by_cell: std::collections::BTreeMap<(u32, u64), Vec<(usize, f64)>> = Default::default();
    for row in &table.rows {
        let l = table.f64_at(row, ci_l)? as u32;
        let p = table.f64_at(row, ci_p)?;
        let k = table.f64_at(row, ci_k)? as usize;
        let w = table.f64_at(row, ci_w)?;
        by_cell.entry((l, p.to_bits())).or_default().push((k, w));
    }
    let mut fits = Vec::new();
    for ((l, pb), rows) in &by_cell {
        let mut profile = vec![0.0f64; *l as usize + 1];
        for &(k, w) in rows {
            if k >= profile.len() {
                return Err(Error::Schema(format!("k={k} out of range for L={l}")));
            }
            profile[k] = w;
        }
        let (s, se) = fit_fdw_exponent(&profile, *l)?;
        fits.push((*l, f64::from_bits(*pb), s, se));
    }
    std::fs::create_dir_all(out)?;
    let mut text = String::from("l,p,s,s_err\n");
    for (l, p, s, se) in &fits {
        writeln!(text, "{},{},{},{}", l, fmt_float(*p), fmt_float(*s), fmt_float(*se)).unwrap();
    }
    std::fs::write(out.join("fdw_slope.csv"), text)?;
    Ok(fits)
}

#[derive(Debug, Clone, Serialize)]
pub struct TailReport {
    pub p: f64,
    pub rescaling: TailRescaling,
    pub residual: f64,
    pub sizes: Vec<u32>,
}

/// `analyze tail`: sup-distance between rescaled basis distributions at one
/// probability across sizes; writes `tail_check.json`.
pub fn analyze_tail(
    input: &Path,
    p_sel: f64,
    rescaling: TailRescaling,
    out: &Path,
) -> Result<TailReport> {
    let table = CsvTable::read(input)?;
    let ci_l = table.col("l")?;
    let ci_p = table.col("p")?;
    let ci_n = table.col("n")?;
    let ci_w = table.col("weight")?;
    let mut by_l: std::collections::BTreeMap<u32, Vec<(usize, f64)>> = Default::default();
    for row in &table.rows {
        let p = table.f64_at(row, ci_p)?;
        if (p - p_sel).abs() > 1e-12 {
            continue;
        }
        let l = table.f64_at(row, ci_l)? as u32;
        let n = table.f64_at(row, ci_n)? as usize;
        let w = table.f64_at(row, ci_w)?;
        by_l.entry(l).or_default().push((n, w));
    }
    let mut dists = Vec::new();
    for (l, rows) in &by_l {
        let mut d = vec![0.0f64; 1usize << l];
        for &(n, w) in rows {
            if n >= d.len() {
                return Err(Error::Schema(format!("n={n} out of range for L={l}")));
            }
            d[n] = w;
        }
        dists.push((*l, d));
    }
    let residual = tail_rescale_check(&dists, rescaling)?;
    let report = TailReport {
        p: p_sel,
        rescaling,
        residual,
        sizes: dists.iter().map(|d| d.0).collect(),
    };
    std::fs::create_dir_all(out)?;
    std::fs::write(out.join("tail_check.json"), serde_json::to_string_pretty(&report)?)?;
    Ok(report)
}
