//! Absorbing-state bricklayer model: `1 (+) U(3)` two-qubit gates applied to
//! even and odd pairs alternately, interspersed with probabilistic
//! measure-and-correct feedback (a site is measured with probability `p_m`
//! per layer and flipped on outcome 1). The all-zero string is an exact dark
//! state of the dynamics.

use rand::Rng;

use crate::bernoulli::{FinalState, RecordSpec, TimeSample, TrajectoryRecord};
use crate::bits::{self, DiagonalObservable, MAX_L_QUANTUM};
use crate::rng::{sample_block_1u3, GateSpec, Mat4, Stream};
use crate::state::PureState;
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Parity {
    Even,
    Odd,
}

/// One bricklayer layer: gates on the pairs of one parity plus a frozen
/// measurement mask.
#[derive(Debug, Clone)]
pub struct Layer {
    pub parity: Parity,
    /// One gate per pair, in pair order.
    pub gates: Vec<Mat4>,
    /// Bit `i` set means site `i + 1` is measured this layer.
    pub measure_mask: u64,
}

#[derive(Debug, Clone)]
pub struct AbsorbingCircuit {
    pub l: u32,
    pub p_m: f64,
    pub layers: Vec<Layer>,
}

/// Site pairs of a layer: even layers pair `(1,2), (3,4), ...`; odd layers
/// pair `(2,3), (4,5), ..., (L,1)` with periodic wrap.
pub fn layer_pairs(l: u32, parity: Parity) -> Vec<(u32, u32)> {
    match parity {
        Parity::Even => (0..l / 2).map(|i| (2 * i + 1, 2 * i + 2)).collect(),
        Parity::Odd => (0..l / 2)
            .map(|i| {
                let a = 2 * i + 2;
                let b = if a == l { 1 } else { a + 1 };
                (a, b)
            })
            .collect(),
    }
}

/// Evolution time used for the absorbing model: `6 L^1.6` brick periods,
/// where one period is an even layer followed by an odd layer (so the layer
/// count is twice that). One period is the natural time unit: every site is
/// touched by exactly one gate per period.
pub fn default_t_layers(l: u32) -> u32 {
    2 * (6.0 * (l as f64).powf(1.6)).ceil() as u32
}

/// Draws a frozen absorbing circuit: `t_layers` layers of alternating parity
/// (starting even), gates and measurement masks frozen at generation.
pub fn generate_absorbing_circuit(
    l: u32,
    p_m: f64,
    t_layers: u32,
    stream: &mut Stream,
) -> Result<AbsorbingCircuit> {
    if l % 2 != 0 {
        return Err(Error::InvalidInput(format!("absorbing model requires even L, got {l}")));
    }
    if l < 4 || l > MAX_L_QUANTUM {
        return Err(Error::InvalidInput(format!("L={l} outside [4, {MAX_L_QUANTUM}]")));
    }
    if !(0.0..=1.0).contains(&p_m) {
        return Err(Error::InvalidInput(format!("p_m={p_m} outside [0, 1]")));
    }
    let mut layers = Vec::with_capacity(t_layers as usize);
    for t in 0..t_layers {
        let parity = if t % 2 == 0 { Parity::Even } else { Parity::Odd };
        let n_pairs = (l / 2) as usize;
        let mut gates = Vec::with_capacity(n_pairs);
        for _ in 0..n_pairs {
            let GateSpec::Block1U3(u) = sample_block_1u3(stream) else { unreachable!() };
            gates.push(u);
        }
        let mut measure_mask = 0u64;
        for site in 0..l {
            let u: f64 = stream.gen();
            if u < p_m {
                measure_mask |= 1 << site;
            }
        }
        layers.push(Layer { parity, gates, measure_mask });
    }
    Ok(AbsorbingCircuit { l, p_m, layers })
}

/// Runs one quantum trajectory: per layer, all gates then measure-and-correct
/// on flagged sites. Records FDW and magnetization moments at the requested
/// layer times (defect density derives exactly from magnetization).
///
/// Once the state reaches the dark state exactly, the remaining evolution is
/// the identity and is short-circuited; deterministic measurement branches
/// consume no randomness, so the shortcut is output-equivalent.
pub fn run_absorbing_trajectory(
    circuit: &AbsorbingCircuit,
    initial: u64,
    rng: &mut Stream,
    record: &RecordSpec,
) -> Result<(TrajectoryRecord, FinalState)> {
    let l = circuit.l;
    bits::check_index(initial, l)?;
    if record.times.iter().any(|&t| t > circuit.layers.len() as u32) {
        return Err(Error::InvalidInput("record time beyond layer count".into()));
    }
    let mut st = PureState::new_product_state(initial, l)?;
    let mut outcomes = Vec::new();
    let mut series: Vec<TimeSample> = Vec::with_capacity(record.times.len());
    let mut fdw_profile = record.fdw_profile.then(|| vec![0.0; l as usize + 1]);
    let mut bit_profile = record.bit_profile.then(|| vec![0.0; 1usize << l]);
    let mut next_rec = 0usize;
    let mut absorbed = initial == 0;

    let record_now = |t: u32,
                          st: &PureState,
                          series: &mut Vec<TimeSample>,
                          fdw: &mut Option<Vec<f64>>,
                          bitp: &mut Option<Vec<f64>>| {
        let (k_mean, k_second) = st.expect_diagonal(DiagonalObservable::Fdw);
        let (mz_mean, mz_second) = st.expect_diagonal(DiagonalObservable::Magnetization);
        series.push(TimeSample {
            t,
            k_mean,
            k_second,
            mz_mean,
            mz_second,
            coherence: record.coherence.then(|| st.l1_coherence()),
        });
        if let Some(f) = fdw {
            for (n, z) in st.amplitudes().iter().enumerate() {
                let w = z.norm_sqr();
                if w != 0.0 {
                    f[bits::fdw_unchecked(n as u64) as usize] += w;
                }
            }
        }
        if let Some(b) = bitp {
            for (n, z) in st.amplitudes().iter().enumerate() {
                b[n] += z.norm_sqr();
            }
        }
    };

    while next_rec < record.times.len() && record.times[next_rec] == 0 {
        record_now(0, &st, &mut series, &mut fdw_profile, &mut bit_profile);
        next_rec += 1;
    }
    for (i, layer) in circuit.layers.iter().enumerate() {
        let t = i as u32 + 1;
        if !absorbed {
            for ((a, b), u) in layer_pairs(l, layer.parity).into_iter().zip(&layer.gates) {
                // gate qubit order (a, b); bit position of site s is L - s
                st.apply_two_qubit_unchecked(u, l - a, l - b);
            }
            for site in 1..=l {
                if layer.measure_mask & (1 << (site - 1)) != 0 {
                    let m = st.measure_site(site, rng)?;
                    outcomes.push(m.outcome);
                    if m.outcome == 1 {
                        st.apply_x(site)?;
                    }
                }
            }
            if st.amplitudes()[0].norm_sqr() > 1.0 - 1e-14 {
                absorbed = true;
                st = PureState::new_product_state(0, l)?;
            }
        } else {
            // dark state: gates act trivially, flagged measurements give 0
            let flagged = layer.measure_mask.count_ones() as usize;
            outcomes.extend(std::iter::repeat(0u8).take(flagged));
        }
        while next_rec < record.times.len() && record.times[next_rec] == t {
            record_now(t, &st, &mut series, &mut fdw_profile, &mut bit_profile);
            next_rec += 1;
        }
    }
    Ok((
        TrajectoryRecord { outcomes, series, fdw_profile, bit_profile },
        FinalState::Quantum(st),
    ))
}
