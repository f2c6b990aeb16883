//! The Bernoulli circuit: frozen random circuit realizations evolved in
//! classical mode (bit strings) or quantum mode (dense state vectors) along
//! one trajectory.
//!
//! Each time step applies either the Bernoulli map (cyclic left shift plus a
//! scrambler on the rightmost sites) or the control map (conditional reset of
//! the last bit followed by a cyclic right shift, steering toward the all-zero
//! string).

use rand::Rng;

use crate::bits::{self, DiagonalObservable, MAX_L_CLASSICAL, MAX_L_QUANTUM};
use crate::rng::{sample_haar_2q, sample_perm8, GateSpec, Stream};
use crate::state::{MeasurementOutcome, PureState, ShiftDirection};
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Mode {
    Classical,
    Quantum,
}

impl std::fmt::Display for Mode {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Mode::Classical => write!(f, "classical"),
            Mode::Quantum => write!(f, "quantum"),
        }
    }
}

/// One step of the frozen circuit.
#[derive(Debug, Clone, PartialEq)]
pub enum Step {
    /// Bernoulli map with its frozen scrambler.
    Bernoulli(GateSpec),
    /// Control map (reset + right shift).
    Control,
}

/// A frozen circuit realization: step kinds drawn i.i.d. (Control with
/// probability `p_ctrl`), gates drawn fresh per Bernoulli step and reused
/// identically when trajectories are resampled.
#[derive(Debug, Clone)]
pub struct CircuitRealization {
    pub l: u32,
    pub p_ctrl: f64,
    pub mode: Mode,
    pub steps: Vec<Step>,
}

impl CircuitRealization {
    pub fn t_max(&self) -> u32 {
        self.steps.len() as u32
    }

    pub fn control_count(&self) -> usize {
        self.steps.iter().filter(|s| matches!(s, Step::Control)).count()
    }
}

/// Steady-state evolution time used throughout: `2 L^2` steps.
pub fn default_t_max(l: u32) -> u32 {
    2 * l * l
}

/// Draws a frozen circuit realization from the circuit stream.
pub fn generate_circuit(
    l: u32,
    p_ctrl: f64,
    t_max: u32,
    mode: Mode,
    stream: &mut Stream,
) -> Result<CircuitRealization> {
    if !(0.0..=1.0).contains(&p_ctrl) {
        return Err(Error::InvalidInput(format!("p_ctrl={p_ctrl} outside [0, 1]")));
    }
    if t_max == 0 {
        return Err(Error::InvalidInput("t_max must be >= 1".into()));
    }
    let max_l = match mode {
        Mode::Classical => MAX_L_CLASSICAL,
        Mode::Quantum => MAX_L_QUANTUM,
    };
    if l < 4 || l > max_l {
        return Err(Error::InvalidInput(format!("L={l} outside [4, {max_l}] for {mode} mode")));
    }
    let mut steps = Vec::with_capacity(t_max as usize);
    for _ in 0..t_max {
        let u: f64 = stream.gen();
        if u < p_ctrl {
            steps.push(Step::Control);
        } else {
            let gate = match mode {
                Mode::Classical => sample_perm8(stream),
                Mode::Quantum => sample_haar_2q(stream),
            };
            steps.push(Step::Bernoulli(gate));
        }
    }
    Ok(CircuitRealization { l, p_ctrl, mode, steps })
}

/// One classical step. Bernoulli: cyclic left shift, then the frozen `S_8`
/// permutation on the last three bits. Control: record `b_L`, reset it to 0,
/// cyclic right shift, yielding `|0 b_1 ... b_(L-1)>`.
pub fn step_classical(n: u64, l: u32, step: &Step) -> Result<(u64, Option<u8>)> {
    match step {
        Step::Bernoulli(GateSpec::Perm8(p)) => {
            let shifted = bits::rotate_left(n, l);
            let scrambled = (shifted & !7) | p[(shifted & 7) as usize] as u64;
            Ok((scrambled, None))
        }
        Step::Control => {
            let outcome = (n & 1) as u8;
            Ok((n >> 1, Some(outcome)))
        }
        Step::Bernoulli(_) => {
            Err(Error::InvalidInput("classical step requires a Perm8 scrambler".into()))
        }
    }
}

/// One quantum step. Bernoulli: left shift then the frozen Haar gate on sites
/// `(L-1, L)`. Control: Born-rule measurement of site `L`, an `X_L` on
/// outcome 1, then a right shift; afterwards all weight sits on `b_1 = 0`.
pub fn step_quantum(
    state: &mut PureState,
    step: &Step,
    rng: &mut Stream,
) -> Result<Option<MeasurementOutcome>> {
    let l = state.sites();
    match step {
        Step::Bernoulli(GateSpec::Haar2Q(u)) => {
            state.apply_cyclic_shift(ShiftDirection::Left);
            state.apply_two_qubit_gate(u, l - 1, l)?;
            Ok(None)
        }
        Step::Control => {
            let m = state.measure_site(l, rng)?;
            if m.outcome == 1 {
                state.apply_x(l)?;
            }
            state.apply_cyclic_shift(ShiftDirection::Right);
            Ok(Some(m))
        }
        Step::Bernoulli(_) => {
            Err(Error::InvalidInput("quantum step requires a Haar2Q scrambler".into()))
        }
    }
}

/// Observable moments recorded at one time.
#[derive(Debug, Clone, PartialEq)]
pub struct TimeSample {
    pub t: u32,
    pub k_mean: f64,
    pub k_second: f64,
    pub mz_mean: f64,
    pub mz_second: f64,
    pub coherence: Option<f64>,
}

/// Final state of a trajectory, owned by the caller (e.g. for shot sampling).
#[derive(Debug, Clone)]
pub enum FinalState {
    Classical(u64),
    Quantum(PureState),
}

impl FinalState {
    /// Diagonal-observable value of one full-register shot.
    pub fn shot_eigenvalue(&self, obs: DiagonalObservable, l: u32, rng: &mut Stream) -> f64 {
        match self {
            FinalState::Classical(n) => obs.eigenvalue(*n, l),
            FinalState::Quantum(st) => obs.eigenvalue(st.sample_shot(rng), l),
        }
    }
}

/// Measurement history plus recorded observable time series for one
/// trajectory of one circuit.
#[derive(Debug, Clone)]
pub struct TrajectoryRecord {
    /// One bit per Control step executed, in step order.
    pub outcomes: Vec<u8>,
    pub series: Vec<TimeSample>,
    /// `sum over record times of |z_x|^2` grouped by FDW position
    /// (length `L + 1`), when requested.
    pub fdw_profile: Option<Vec<f64>>,
    /// `sum over record times of |z_x|^2` per basis index, when requested.
    pub bit_profile: Option<Vec<f64>>,
}

/// What to record along a trajectory.
#[derive(Debug, Clone, Default)]
pub struct RecordSpec {
    /// Sorted times in `[0, t_max]` at which moments are recorded.
    pub times: Vec<u32>,
    pub coherence: bool,
    pub fdw_profile: bool,
    pub bit_profile: bool,
}

impl RecordSpec {
    pub fn final_only(t_max: u32) -> Self {
        RecordSpec { times: vec![t_max], ..Default::default() }
    }

    /// Every step in the steady-state window `[L^2, 2 L^2]`.
    pub fn window(l: u32) -> Self {
        RecordSpec { times: (l * l..=2 * l * l).collect(), ..Default::default() }
    }
}

/// Applies the circuit steps in order, recording diagonal expectations (and
/// coherence / distribution profiles if requested) at the requested times.
/// Classical mode needs no trajectory stream; quantum mode requires one.
pub fn run_trajectory(
    circuit: &CircuitRealization,
    initial: u64,
    traj_rng: Option<&mut Stream>,
    record: &RecordSpec,
) -> Result<(TrajectoryRecord, FinalState)> {
    let l = circuit.l;
    bits::check_index(initial, l)?;
    if record.times.iter().any(|&t| t > circuit.t_max()) {
        return Err(Error::InvalidInput("record time beyond t_max".into()));
    }
    match circuit.mode {
        Mode::Classical => run_classical(circuit, initial, record),
        Mode::Quantum => {
            let rng = traj_rng.ok_or_else(|| {
                Error::InvalidInput("quantum trajectory requires a trajectory stream".into())
            })?;
            run_quantum(circuit, initial, rng, record)
        }
    }
}

fn run_classical(
    circuit: &CircuitRealization,
    initial: u64,
    record: &RecordSpec,
) -> Result<(TrajectoryRecord, FinalState)> {
    let l = circuit.l;
    let mut n = initial;
    let mut outcomes = Vec::new();
    let mut series = Vec::with_capacity(record.times.len());
    let mut fdw_profile = record.fdw_profile.then(|| vec![0.0; l as usize + 1]);
    let mut bit_profile = if record.bit_profile {
        if l > MAX_L_QUANTUM {
            return Err(Error::InvalidInput(
                "bit profile limited to L <= 24 (dense histogram)".into(),
            ));
        }
        Some(vec![0.0; 1usize << l])
    } else {
        None
    };
    let mut next_rec = 0usize;
    let record_now = |t: u32,
                          n: u64,
                          series: &mut Vec<TimeSample>,
                          fdw: &mut Option<Vec<f64>>,
                          bitp: &mut Option<Vec<f64>>| {
        let k = bits::fdw_unchecked(n) as f64;
        let mz = bits::magnetization_unchecked(n, l);
        series.push(TimeSample {
            t,
            k_mean: k,
            k_second: k * k,
            mz_mean: mz,
            mz_second: mz * mz,
            coherence: record.coherence.then_some(0.0),
        });
        if let Some(f) = fdw {
            f[bits::fdw_unchecked(n) as usize] += 1.0;
        }
        if let Some(b) = bitp {
            b[n as usize] += 1.0;
        }
    };
    while next_rec < record.times.len() && record.times[next_rec] == 0 {
        record_now(0, n, &mut series, &mut fdw_profile, &mut bit_profile);
        next_rec += 1;
    }
    for (i, step) in circuit.steps.iter().enumerate() {
        let t = i as u32 + 1;
        let (next, outcome) = step_classical(n, l, step)?;
        n = next;
        if let Some(m) = outcome {
            outcomes.push(m);
        }
        while next_rec < record.times.len() && record.times[next_rec] == t {
            record_now(t, n, &mut series, &mut fdw_profile, &mut bit_profile);
            next_rec += 1;
        }
    }
    Ok((
        TrajectoryRecord { outcomes, series, fdw_profile, bit_profile },
        FinalState::Classical(n),
    ))
}

fn run_quantum(
    circuit: &CircuitRealization,
    initial: u64,
    rng: &mut Stream,
    record: &RecordSpec,
) -> Result<(TrajectoryRecord, FinalState)> {
    let l = circuit.l;
    let mut st = PureState::new_product_state(initial, l)?;
    let mut outcomes = Vec::new();
    let mut series = Vec::with_capacity(record.times.len());
    let mut fdw_profile = record.fdw_profile.then(|| vec![0.0; l as usize + 1]);
    let mut bit_profile = record.bit_profile.then(|| vec![0.0; 1usize << l]);
    let mut next_rec = 0usize;

    fn record_now(
        t: u32,
        st: &PureState,
        with_coherence: bool,
        series: &mut Vec<TimeSample>,
        fdw_profile: &mut Option<Vec<f64>>,
        bit_profile: &mut Option<Vec<f64>>,
    ) {
        let (k_mean, k_second) = st.expect_diagonal(DiagonalObservable::Fdw);
        let (mz_mean, mz_second) = st.expect_diagonal(DiagonalObservable::Magnetization);
        series.push(TimeSample {
            t,
            k_mean,
            k_second,
            mz_mean,
            mz_second,
            coherence: with_coherence.then(|| st.l1_coherence()),
        });
        if let Some(f) = fdw_profile {
            for (n, z) in st.amplitudes().iter().enumerate() {
                let w = z.norm_sqr();
                if w != 0.0 {
                    f[bits::fdw_unchecked(n as u64) as usize] += w;
                }
            }
        }
        if let Some(b) = bit_profile {
            for (n, z) in st.amplitudes().iter().enumerate() {
                b[n] += z.norm_sqr();
            }
        }
    }

    while next_rec < record.times.len() && record.times[next_rec] == 0 {
        record_now(0, &st, record.coherence, &mut series, &mut fdw_profile, &mut bit_profile);
        next_rec += 1;
    }
    for (i, step) in circuit.steps.iter().enumerate() {
        let t = i as u32 + 1;
        if let Some(m) = step_quantum(&mut st, step, rng)? {
            outcomes.push(m.outcome);
        }
        while next_rec < record.times.len() && record.times[next_rec] == t {
            record_now(t, &st, record.coherence, &mut series, &mut fdw_profile, &mut bit_profile);
            next_rec += 1;
        }
    }
    Ok((
        TrajectoryRecord { outcomes, series, fdw_profile, bit_profile },
        FinalState::Quantum(st),
    ))
}

/// Initial basis state with the FDW at position `k` and zeros elsewhere:
/// `|0^(L-k) 1 0^(k-1)>`.
pub fn initial_with_fdw(k: u32, l: u32) -> Result<u64> {
    if k > l {
        return Err(Error::InvalidInput(format!("FDW position {k} > L={l}")));
    }
    Ok(if k == 0 { 0 } else { 1u64 << (k - 1) })
}
