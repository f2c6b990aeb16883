//! Acceptance suite: every headline result the toolkit is expected to
//! reproduce at desk scale, one pass/fail line per criterion.
//!
//! Run with `cargo test --test acceptance -- --nocapture` to watch progress;
//! the full suite is a long single-core run (hours, dominated by the
//! absorbing-model ensembles).
//!
//! Steady-state statistics pool every recorded slice in the window
//! [L^2, 2 L^2] (second half of the run for the absorbing model): each
//! (circuit, time) pair is one sample of the zero-fluctuation classifier,
//! and standard errors are taken across circuits so the time correlation
//! within a circuit never fakes precision.

use std::collections::HashMap;
use std::time::Instant;

use num_complex::Complex64;

use cipt::bernoulli::{
    default_t_max, generate_circuit, run_trajectory, step_quantum, CircuitRealization, FinalState,
    Mode, RecordSpec, Step,
};
use cipt::bits::DiagonalObservable;
use cipt::experiment::InitialState;
use cipt::rng::{sample_block_1u3, sample_haar_2q, GateSpec, SeedTree};
use cipt::scaling::{fit_coherence_series, fit_fdw_exponent, fss_collapse, CollapseOptions, ScalingPoint};
use cipt::state::{PureState, ShiftDirection};
use cipt::stats::{decompose_variance, NestedSample};

const EPS: f64 = 1e-5;
const MASTER: u64 = 0xACCE;

struct Outcome {
    id: &'static str,
    pass: bool,
    detail: String,
}

fn report(results: &mut Vec<Outcome>, id: &'static str, pass: bool, detail: String) {
    let line = format!("{} {:<28} {}", if pass { "PASS" } else { "FAIL" }, id, detail);
    eprintln!("{line}");
    // the harness captures test stderr and hides it on success; write the
    // verdict lines to the process stderr as well so a plain `cargo test`
    // log still records one line per criterion
    if let Ok(mut f) = std::fs::OpenOptions::new().write(true).open("/dev/stderr") {
        use std::io::Write;
        let _ = writeln!(f, "{line}");
    }
    results.push(Outcome { id, pass, detail });
}

/// Sample mean and its standard error.
fn mean_se(v: &[f64]) -> (f64, f64) {
    let n = v.len() as f64;
    let m = v.iter().sum::<f64>() / n;
    let var = v.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (n - 1.0);
    (m, (var.max(0.0) / n).sqrt())
}

// ---------------------------------------------------------------------------
// pooled ensemble cells
// ---------------------------------------------------------------------------

/// One quantum Bernoulli ensemble cell with window-pooled statistics.
///
/// Each field is (value, standard error across circuits). The order
/// parameters are fractions of (circuit, time) pairs whose trajectory /
/// state / total fluctuation falls below the cutoff.
struct PooledCell {
    l: u32,
    p: f64,
    o_t_k: (f64, f64),
    o_s_k: (f64, f64),
    o_q_k: (f64, f64),
    o_t_mz: (f64, f64),
    o_s_mz: (f64, f64),
    mz_mean: (f64, f64),
}

fn pooled_quantum_cell(tree: &SeedTree, l: u32, p: f64, n_c: u32, n_t: u32) -> PooledCell {
    let t_max = default_t_max(l);
    let times: Vec<u32> = (l * l..=t_max).collect();
    let w = times.len();
    let record = RecordSpec { times, ..Default::default() };
    let initial = InitialState::Half.word(l);
    let nt = n_t as f64;
    let mut f_t_k = Vec::with_capacity(n_c as usize);
    let mut f_s_k = Vec::with_capacity(n_c as usize);
    let mut f_q_k = Vec::with_capacity(n_c as usize);
    let mut f_t_z = Vec::with_capacity(n_c as usize);
    let mut f_s_z = Vec::with_capacity(n_c as usize);
    let mut m_z = Vec::with_capacity(n_c as usize);
    // per-trajectory per-slice moments for one circuit at a time
    let mut km = vec![0.0f64; n_t as usize * w];
    let mut k2 = km.clone();
    let mut zm = km.clone();
    let mut z2 = km.clone();
    for c in 0..n_c {
        let circ =
            generate_circuit(l, p, t_max, Mode::Quantum, &mut tree.circuit_stream(c as u64))
                .unwrap();
        for tau in 0..n_t as usize {
            let mut rng = tree.trajectory_stream(c as u64, tau as u64);
            let (rec, _) = run_trajectory(&circ, initial, Some(&mut rng), &record).unwrap();
            for (wi, s) in rec.series.iter().enumerate() {
                let idx = tau * w + wi;
                km[idx] = s.k_mean;
                k2[idx] = s.k_second;
                zm[idx] = s.mz_mean;
                z2[idx] = s.mz_second;
            }
        }
        let (mut ct_k, mut cs_k, mut cq_k, mut ct_z, mut cs_z) = (0u32, 0u32, 0u32, 0u32, 0u32);
        let mut mz_acc = 0.0;
        for wi in 0..w {
            let mut s = [0.0f64; 6];
            for tau in 0..n_t as usize {
                let idx = tau * w + wi;
                s[0] += km[idx];
                s[1] += km[idx] * km[idx];
                s[2] += (k2[idx] - km[idx] * km[idx]).max(0.0);
                s[3] += zm[idx];
                s[4] += zm[idx] * zm[idx];
                s[5] += (z2[idx] - zm[idx] * zm[idx]).max(0.0);
            }
            let vt_k = (s[1] / nt - (s[0] / nt).powi(2)).max(0.0);
            let vs_k = s[2] / nt;
            let vt_z = (s[4] / nt - (s[3] / nt).powi(2)).max(0.0);
            let vs_z = s[5] / nt;
            ct_k += (vt_k < EPS) as u32;
            cs_k += (vs_k < EPS) as u32;
            cq_k += (vt_k + vs_k < EPS) as u32;
            ct_z += (vt_z < EPS) as u32;
            cs_z += (vs_z < EPS) as u32;
            mz_acc += s[3] / nt;
        }
        let wf = w as f64;
        f_t_k.push(ct_k as f64 / wf);
        f_s_k.push(cs_k as f64 / wf);
        f_q_k.push(cq_k as f64 / wf);
        f_t_z.push(ct_z as f64 / wf);
        f_s_z.push(cs_z as f64 / wf);
        m_z.push(mz_acc / wf);
    }
    PooledCell {
        l,
        p,
        o_t_k: mean_se(&f_t_k),
        o_s_k: mean_se(&f_s_k),
        o_q_k: mean_se(&f_q_k),
        o_t_mz: mean_se(&f_t_z),
        o_s_mz: mean_se(&f_s_z),
        mz_mean: mean_se(&m_z),
    }
}

/// Classical ensemble cell: circuit-to-circuit variance of (k, Mz) per
/// window slice, averaged over the window. Circuits are split into blocks;
/// the block spread gives the standard error.
struct ClassicalCell {
    l: u32,
    p: f64,
    var_k: (f64, f64),
    var_mz: (f64, f64),
}

fn classical_pooled_cell(tree: &SeedTree, l: u32, p: f64, n_c: u32, n_blocks: u32) -> ClassicalCell {
    let t_max = default_t_max(l);
    let times: Vec<u32> = (l * l..=t_max).collect();
    let w = times.len();
    let record = RecordSpec { times, ..Default::default() };
    let initial = InitialState::Half.word(l);
    let per_block = n_c / n_blocks;
    let n = per_block as f64;
    let mut vk_blocks = Vec::with_capacity(n_blocks as usize);
    let mut vz_blocks = Vec::with_capacity(n_blocks as usize);
    for b in 0..n_blocks {
        let mut sk = vec![0.0f64; w];
        let mut sk2 = vec![0.0f64; w];
        let mut sz = vec![0.0f64; w];
        let mut sz2 = vec![0.0f64; w];
        for cc in 0..per_block {
            let c = (b * per_block + cc) as u64;
            let circ =
                generate_circuit(l, p, t_max, Mode::Classical, &mut tree.circuit_stream(c))
                    .unwrap();
            let (rec, _) = run_trajectory(&circ, initial, None, &record).unwrap();
            for (wi, s) in rec.series.iter().enumerate() {
                sk[wi] += s.k_mean;
                sk2[wi] += s.k_mean * s.k_mean;
                sz[wi] += s.mz_mean;
                sz2[wi] += s.mz_mean * s.mz_mean;
            }
        }
        let mut vk = 0.0;
        let mut vz = 0.0;
        for wi in 0..w {
            vk += ((sk2[wi] - sk[wi] * sk[wi] / n) / (n - 1.0)).max(0.0);
            vz += ((sz2[wi] - sz[wi] * sz[wi] / n) / (n - 1.0)).max(0.0);
        }
        vk_blocks.push(vk / w as f64);
        vz_blocks.push(vz / w as f64);
    }
    ClassicalCell { l, p, var_k: mean_se(&vk_blocks), var_mz: mean_se(&vz_blocks) }
}

// ---------------------------------------------------------------------------
// criterion 1: fully chaotic coherence approaches the Haar value pi/4 per
// basis state
// ---------------------------------------------------------------------------
fn criterion_1(results: &mut Vec<Outcome>) {
    let t0 = Instant::now();
    let l = 10u32;
    let tree = SeedTree::new(MASTER).subtree(1);
    let t_max = default_t_max(l);
    let record = RecordSpec { times: vec![t_max], coherence: true, ..Default::default() };
    let mut sum = 0.0;
    let n = 1000;
    for c in 0..n {
        let circ =
            generate_circuit(l, 0.0, t_max, Mode::Quantum, &mut tree.circuit_stream(c)).unwrap();
        let mut rng = tree.trajectory_stream(c, 0);
        let (rec, _) = run_trajectory(&circ, 1, Some(&mut rng), &record).unwrap();
        sum += rec.series[0].coherence.unwrap();
    }
    let per_basis = sum / n as f64 / (1u64 << l) as f64;
    let target = std::f64::consts::PI / 4.0;
    let rel = (per_basis - target).abs() / target;
    report(
        results,
        "1 haar-coherence",
        rel < 0.02,
        format!(
            "coherence/2^L = {per_basis:.5} vs pi/4 = {target:.5} (rel {rel:.4}), {:.1}s",
            t0.elapsed().as_secs_f64()
        ),
    );
}

// ---------------------------------------------------------------------------
// criterion 2: classical circuit-to-circuit FDW variance collapses with
// p_c ~ 0.5, nu ~ 1
// ---------------------------------------------------------------------------
fn criterion_2(results: &mut Vec<Outcome>) -> Vec<ClassicalCell> {
    let t0 = Instant::now();
    let sizes = [8u32, 12, 16, 20, 24];
    let probs: Vec<f64> = (0..=20).map(|i| 0.40 + 0.01 * i as f64).collect();
    let n_c = 10_000u32;
    let root = SeedTree::new(MASTER).subtree(2);
    let mut points = Vec::new();
    let mut cells = Vec::new();
    for (i, &l) in sizes.iter().enumerate() {
        for (j, &p) in probs.iter().enumerate() {
            let tree = root.subtree((i * probs.len() + j) as u64);
            let cell = classical_pooled_cell(&tree, l, p, n_c, 20);
            let l2 = (l * l) as f64;
            points.push(ScalingPoint {
                l,
                p,
                value: cell.var_k.0 / l2,
                stderr: (cell.var_k.1 / l2).max(1e-9),
            });
            cells.push(cell);
        }
    }
    // leading finite-size correction 1 + c/L is fitted out: var[k] carries an
    // O(L) term on top of the O(L^2) critical part
    let opts = CollapseOptions {
        fit_beta: false,
        n_bootstrap: 100,
        size_correction: true,
        ..Default::default()
    };
    let fit = fss_collapse(&points, &opts).unwrap();
    let pass = (0.48..=0.52).contains(&fit.p_c) && (0.85..=1.15).contains(&fit.nu);
    report(
        results,
        "2 classical-fdw-variance",
        pass,
        format!(
            "nu = {:.3} +- {:.3}, p_c = {:.4} +- {:.4}, corr c = {:.2}, {:.0}s",
            fit.nu,
            fit.nu_err,
            fit.p_c,
            fit.p_c_err,
            fit.correction,
            t0.elapsed().as_secs_f64()
        ),
    );
    cells
}

// ---------------------------------------------------------------------------
// dataset shared by criteria 3, 4, 7, 8: quantum Bernoulli sweep
// ---------------------------------------------------------------------------
fn quantum_sweep() -> Vec<PooledCell> {
    let sizes = [8u32, 10, 12, 14];
    let probs = [0.40, 0.44, 0.48, 0.50, 0.52, 0.56, 0.60];
    let root = SeedTree::new(MASTER).subtree(3);
    let mut cells = Vec::new();
    for (i, &l) in sizes.iter().enumerate() {
        for (j, &p) in probs.iter().enumerate() {
            let t0 = Instant::now();
            let tree = root.subtree((i * probs.len() + j) as u64);
            let cell = pooled_quantum_cell(&tree, l, p, 100, 50);
            eprintln!(
                "  quantum sweep L={l} p={p:.2}: O_t={:.3} O_s={:.3} O_Q={:.3} ({:.0}s)",
                cell.o_t_k.0,
                cell.o_s_k.0,
                cell.o_q_k.0,
                t0.elapsed().as_secs_f64()
            );
            cells.push(cell);
        }
    }
    cells
}

fn order_points(cells: &[PooledCell], f: impl Fn(&PooledCell) -> (f64, f64)) -> Vec<ScalingPoint> {
    cells
        .iter()
        .map(|c| {
            let (v, se) = f(c);
            ScalingPoint { l: c.l, p: c.p, value: v, stderr: se.max(1e-3) }
        })
        .collect()
}

/// Collapse options for the quantum order parameters: the critical point is
/// pinned at the exactly known p_c = 1/2 of the Bernoulli model, so the fit
/// resolves (nu, beta) without the flat p_c degeneracy of small ensembles.
fn pinned_beta_opts() -> CollapseOptions {
    CollapseOptions {
        fit_beta: true,
        n_bootstrap: 100,
        p_c_fixed: Some(0.5),
        ..Default::default()
    }
}

fn criterion_3(results: &mut Vec<Outcome>, cells: &[PooledCell]) {
    let at = |l: u32, p: f64| -> (f64, f64) {
        cells.iter().find(|c| c.l == l && (c.p - p).abs() < 1e-9).map(|c| c.o_t_k).unwrap()
    };
    let chaotic = at(14, 0.40).0;
    let controlled = at(14, 0.60).0;
    let decay: Vec<(f64, f64)> = [8, 10, 12, 14].iter().map(|&l| at(l, 0.50)).collect();
    let monotone = decay
        .windows(2)
        .all(|w| w[1].0 <= w[0].0 + 2.0 * (w[0].1.powi(2) + w[1].1.powi(2)).sqrt())
        && decay[3].0 < decay[0].0;
    let fit = fss_collapse(&order_points(cells, |c| c.o_t_k), &pinned_beta_opts()).unwrap();
    let pass = chaotic < 0.05
        && controlled > 0.3
        && monotone
        && (0.7..=1.3).contains(&fit.beta)
        && (0.8..=1.2).contains(&fit.nu);
    let decay_vals: Vec<f64> = decay.iter().map(|d| d.0).collect();
    report(
        results,
        "3 trajectory-order-param",
        pass,
        format!(
            "O_t(0.4)={chaotic:.3} O_t(0.6)={controlled:.3} decay@0.5={decay_vals:.3?} beta_t={:.2}+-{:.2} nu={:.2}+-{:.2}",
            fit.beta, fit.beta_err, fit.nu, fit.nu_err
        ),
    );
}

fn criterion_4(results: &mut Vec<Outcome>, cells: &[PooledCell]) {
    let fit = fss_collapse(&order_points(cells, |c| c.o_s_k), &pinned_beta_opts()).unwrap();
    let mut ordered = true;
    for c in cells {
        let sigma = (c.o_t_k.1.powi(2) + c.o_s_k.1.powi(2)).sqrt().max(1e-3);
        if c.o_s_k.0 > c.o_t_k.0 + 3.0 * sigma {
            ordered = false;
        }
    }
    let pass = (0.7..=1.3).contains(&fit.beta) && ordered;
    report(
        results,
        "4 shot-order-param",
        pass,
        format!("beta_s = {:.2} +- {:.2}, O_s <= O_t everywhere: {ordered}", fit.beta, fit.beta_err),
    );
}

fn criterion_7(
    results: &mut Vec<Outcome>,
    classical_cells: &[ClassicalCell],
    cells: &[PooledCell],
) {
    // classical circuit fluctuations of the magnetization; unlike the FDW
    // variance this carries an incoherent O(1/L) background from the bits
    // below the wall, so fit a free scaling dimension, restrict to the
    // central scaling window, and drop the smallest size
    let points: Vec<ScalingPoint> = classical_cells
        .iter()
        .filter(|c| c.l >= 12)
        .map(|c| ScalingPoint { l: c.l, p: c.p, value: c.var_mz.0, stderr: c.var_mz.1.max(1e-9) })
        .collect();
    let free_beta = CollapseOptions {
        fit_beta: true,
        n_bootstrap: 100,
        u_max: 1.0,
        ..Default::default()
    };
    let fit_cl = fss_collapse(&points, &free_beta).unwrap();

    // quantum order parameters in the magnetization channel
    let fit_ot = fss_collapse(&order_points(cells, |c| c.o_t_mz), &pinned_beta_opts()).unwrap();
    let fit_os = fss_collapse(&order_points(cells, |c| c.o_s_mz), &pinned_beta_opts()).unwrap();

    // ensemble-mean magnetization
    let mean_points: Vec<ScalingPoint> = cells
        .iter()
        .map(|c| ScalingPoint { l: c.l, p: c.p, value: c.mz_mean.0, stderr: c.mz_mean.1.max(1e-6) })
        .collect();
    let no_beta = CollapseOptions { fit_beta: false, n_bootstrap: 100, ..Default::default() };
    let fit_mean = fss_collapse(&mean_points, &no_beta).unwrap();

    let pass = (0.85..=1.15).contains(&fit_cl.nu)
        && (0.48..=0.52).contains(&fit_cl.p_c)
        && (0.7..=1.3).contains(&fit_ot.beta)
        && (0.8..=1.2).contains(&fit_ot.nu)
        && (0.7..=1.3).contains(&fit_os.beta)
        && (0.85..=1.2).contains(&fit_mean.nu);
    report(
        results,
        "7 magnetization-channel",
        pass,
        format!(
            "classical nu={:.2} p_c={:.3}, O_t beta={:.2} nu={:.2}, O_s beta={:.2}, <Mz> nu={:.2} p_c={:.3}",
            fit_cl.nu, fit_cl.p_c, fit_ot.beta, fit_ot.nu, fit_os.beta, fit_mean.nu, fit_mean.p_c
        ),
    );
}

fn criterion_8(results: &mut Vec<Outcome>, cells: &[PooledCell]) {
    // shot protocol at L=8, p=0.5: pooled-shot variance estimate vs the exact
    // within-circuit variance, per circuit
    let t0 = Instant::now();
    let tree = SeedTree::new(MASTER).subtree(8);
    let (l, p, n_c, n_t, n_s) = (8u32, 0.5, 30u32, 10u32, 1000u32);
    let t_max = default_t_max(l);
    let record = RecordSpec::final_only(t_max);
    let initial = InitialState::Half.word(l);
    let mut diffs = Vec::new();
    for c in 0..n_c {
        let circ =
            generate_circuit(l, p, t_max, Mode::Quantum, &mut tree.circuit_stream(c as u64))
                .unwrap();
        let mut first = 0.0;
        let mut second = 0.0;
        let mut shot_first = 0.0;
        let mut shot_second = 0.0;
        for tau in 0..n_t {
            let mut rng = tree.trajectory_stream(c as u64, tau as u64);
            let (rec, fin) = run_trajectory(&circ, initial, Some(&mut rng), &record).unwrap();
            first += rec.series[0].k_mean;
            second += rec.series[0].k_second;
            let st = match fin {
                FinalState::Quantum(st) => st,
                _ => unreachable!(),
            };
            for s in 0..n_s {
                let mut shot_rng = tree.shot_stream(c as u64, tau as u64, s as u64);
                let v = DiagonalObservable::Fdw.eigenvalue(st.sample_shot(&mut shot_rng), l);
                shot_first += v;
                shot_second += v * v;
            }
        }
        let exact_var = second / n_t as f64 - (first / n_t as f64).powi(2);
        let n_total = (n_t * n_s) as f64;
        let shot_var = shot_second / n_total - (shot_first / n_total).powi(2);
        diffs.push(shot_var - exact_var);
    }
    let n = diffs.len() as f64;
    let mean_d = diffs.iter().sum::<f64>() / n;
    let sd_d = (diffs.iter().map(|d| (d - mean_d).powi(2)).sum::<f64>() / (n - 1.0)).sqrt();
    let shots_ok = mean_d.abs() <= 3.0 * sd_d / n.sqrt();

    let fit = fss_collapse(&order_points(cells, |c| c.o_q_k), &pinned_beta_opts()).unwrap();
    let pass = shots_ok && (0.7..=1.3).contains(&fit.beta);
    report(
        results,
        "8 shot-protocol",
        pass,
        format!(
            "shot-vs-exact sigma2_Q diff {mean_d:.4} +- {:.4}, beta_Q = {:.2} +- {:.2}, {:.0}s",
            3.0 * sd_d / n.sqrt(),
            fit.beta,
            fit.beta_err,
            t0.elapsed().as_secs_f64()
        ),
    );
}

// ---------------------------------------------------------------------------
// criterion 5: coherence growth rate a1 across the transition
// ---------------------------------------------------------------------------
fn criterion_5(results: &mut Vec<Outcome>) {
    let t0 = Instant::now();
    let sizes = [8u32, 9, 10, 11, 12, 13, 14];
    let probs = [0.3, 0.4, 0.5, 0.6];
    let root = SeedTree::new(MASTER).subtree(5);
    let (n_c, n_t) = (150u64, 8u64);
    let mut a1 = HashMap::new();
    let mut a0 = HashMap::new();
    for (j, &p) in probs.iter().enumerate() {
        let mut pts = Vec::new();
        for (i, &l) in sizes.iter().enumerate() {
            let tree = root.subtree((j * sizes.len() + i) as u64);
            let t_max = default_t_max(l);
            // average over the later half of the window, well past the
            // coherence growth transient
            let record = RecordSpec {
                times: (3 * l * l / 2..=t_max).collect(),
                coherence: true,
                ..Default::default()
            };
            let mut vals = Vec::with_capacity((n_c * n_t) as usize);
            for c in 0..n_c {
                let circ =
                    generate_circuit(l, p, t_max, Mode::Quantum, &mut tree.circuit_stream(c))
                        .unwrap();
                for tau in 0..n_t {
                    let mut rng = tree.trajectory_stream(c, tau);
                    let (rec, _) = run_trajectory(&circ, 1, Some(&mut rng), &record).unwrap();
                    let m: f64 = rec.series.iter().map(|s| s.coherence.unwrap()).sum::<f64>()
                        / rec.series.len() as f64;
                    vals.push(m);
                }
            }
            // winsorized mean: in the controlled phase the coherence is a
            // heavy-tailed multiplicative walk whose plain mean is dominated
            // by rare excursions toward the Haar ceiling; clamping at the
            // 90th percentile gives a stable location estimate and is a
            // negligible change in the growth phase
            vals.sort_by(|a, b| a.partial_cmp(b).unwrap());
            let cut = vals[((vals.len() as f64 * 0.9) as usize).min(vals.len() - 1)];
            let mean = vals.iter().map(|&x| x.min(cut)).sum::<f64>() / vals.len() as f64;
            pts.push((l, mean.max(1e-12)));
        }
        let fit = fit_coherence_series(&pts).unwrap();
        a1.insert(j, fit.a1);
        a0.insert(j, fit.a0);
    }
    let pass = a1[&0] > 0.6
        && a1[&1] > 0.6
        && a1[&2] > 0.6
        && (0.7..=1.0).contains(&a1[&2])
        && a1[&3] < 0.1
        && a0[&3] > 0.0;
    report(
        results,
        "5 coherence-growth",
        pass,
        format!(
            "a1(0.3)={:.2} a1(0.4)={:.2} a1(0.5)={:.2} a1(0.6)={:.2} a0(0.6)={:.2}, {:.0}s",
            a1[&0],
            a1[&1],
            a1[&2],
            a1[&3],
            a0[&3],
            t0.elapsed().as_secs_f64()
        ),
    );
}

// ---------------------------------------------------------------------------
// criterion 6: FDW distribution exponent s
// ---------------------------------------------------------------------------

/// Window-summed FDW occupation profiles, one per circuit block.
fn fdw_profiles_classical(tree: &SeedTree, l: u32, p: f64, n_c: u32, n_blocks: u32) -> Vec<Vec<f64>> {
    let t_max = default_t_max(l);
    let record = RecordSpec {
        times: (l * l..=t_max).collect(),
        fdw_profile: true,
        ..Default::default()
    };
    let initial = InitialState::Half.word(l);
    let per_block = n_c / n_blocks;
    let mut blocks = vec![vec![0.0f64; l as usize + 1]; n_blocks as usize];
    for b in 0..n_blocks as usize {
        for cc in 0..per_block {
            let c = b as u64 * per_block as u64 + cc as u64;
            let circ =
                generate_circuit(l, p, t_max, Mode::Classical, &mut tree.circuit_stream(c))
                    .unwrap();
            let (rec, _) = run_trajectory(&circ, initial, None, &record).unwrap();
            for (k, w) in rec.fdw_profile.unwrap().iter().enumerate() {
                blocks[b][k] += w;
            }
        }
    }
    blocks
}

fn fdw_profiles_quantum(
    tree: &SeedTree,
    l: u32,
    p: f64,
    n_c: u32,
    n_t: u32,
    n_blocks: u32,
) -> Vec<Vec<f64>> {
    let t_max = default_t_max(l);
    let record = RecordSpec {
        times: (l * l..=t_max).collect(),
        fdw_profile: true,
        ..Default::default()
    };
    let initial = InitialState::Half.word(l);
    let per_block = n_c / n_blocks;
    let mut blocks = vec![vec![0.0f64; l as usize + 1]; n_blocks as usize];
    for b in 0..n_blocks as usize {
        for cc in 0..per_block {
            let c = b as u64 * per_block as u64 + cc as u64;
            let circ =
                generate_circuit(l, p, t_max, Mode::Quantum, &mut tree.circuit_stream(c)).unwrap();
            for tau in 0..n_t {
                let mut rng = tree.trajectory_stream(c, tau as u64);
                let (rec, _) = run_trajectory(&circ, initial, Some(&mut rng), &record).unwrap();
                for (k, w) in rec.fdw_profile.unwrap().iter().enumerate() {
                    blocks[b][k] += w;
                }
            }
        }
    }
    blocks
}

/// Exponent from the pooled profile; standard error from the spread of
/// per-block fits. Bins below `min_k` are masked out: the two models decorate
/// the wall differently near the boundary (3-bit scrambler vs 2-site gate),
/// so cross-model comparisons are made on the bulk tail only.
fn fit_profile_blocks(blocks: &[Vec<f64>], l: u32, min_k: usize) -> (f64, f64) {
    let mask = |b: &[f64]| -> Vec<f64> {
        b.iter().enumerate().map(|(k, &w)| if k < min_k { 0.0 } else { w }).collect()
    };
    let mut full = vec![0.0f64; blocks[0].len()];
    for b in blocks {
        for (k, w) in b.iter().enumerate() {
            full[k] += w;
        }
    }
    let (s, _) = fit_fdw_exponent(&mask(&full), l).unwrap();
    let per_block: Vec<f64> = blocks
        .iter()
        .filter_map(|b| fit_fdw_exponent(&mask(b), l).ok().map(|(sb, _)| sb))
        .collect();
    let (_, se) = mean_se(&per_block);
    (s, se.max(1e-4))
}

fn criterion_6(results: &mut Vec<Outcome>) {
    let t0 = Instant::now();
    let root = SeedTree::new(MASTER).subtree(6);
    let (s0, _) =
        fit_profile_blocks(&fdw_profiles_classical(&root.subtree(0), 16, 0.0, 2000, 10), 16, 0);
    let (sc, _) =
        fit_profile_blocks(&fdw_profiles_classical(&root.subtree(1), 16, 0.5, 10_000, 10), 16, 0);

    let mut agree = true;
    let mut pairs = String::new();
    for (j, &p) in [0.3, 0.4, 0.5, 0.6, 0.7].iter().enumerate() {
        let cl = fdw_profiles_classical(&root.subtree(10 + j as u64), 12, p, 5000, 10);
        let (s_cl, se_cl) = fit_profile_blocks(&cl, 12, 4);
        let q = fdw_profiles_quantum(&root.subtree(20 + j as u64), 12, p, 60, 20, 10);
        let (s_q, se_q) = fit_profile_blocks(&q, 12, 4);
        let joint = (se_cl * se_cl + se_q * se_q).sqrt();
        if (s_cl - s_q).abs() > 3.0 * joint {
            agree = false;
        }
        pairs += &format!(" p={p:.1}:{s_cl:.2}/{s_q:.2}");
    }
    let pass = (s0 - 1.0).abs() < 0.05 && sc.abs() < 0.05 && agree;
    report(
        results,
        "6 fdw-exponent",
        pass,
        format!(
            "s(p=0)={s0:.3} s(p=0.5)={sc:.3} cl/q:{pairs}, {:.0}s",
            t0.elapsed().as_secs_f64()
        ),
    );
}

// ---------------------------------------------------------------------------
// criterion 9: absorbing-model crossing and collapse
// ---------------------------------------------------------------------------
fn criterion_9(results: &mut Vec<Outcome>) {
    let t0 = Instant::now();
    let sizes = [8u32, 10, 12, 14];
    let probs = [0.07, 0.08, 0.09, 0.10, 0.11];
    let (n_c, n_t) = (200u32, 100u32);
    let root = SeedTree::new(MASTER).subtree(9);
    // O_t[nd] per (L, p) at the steady-state time t = 6 L^1.6 brick periods:
    // fraction of circuits whose across-trajectory variance of <nd> at that
    // time is zero
    let mut curves: Vec<Vec<f64>> = Vec::new();
    let mut errs: Vec<Vec<f64>> = Vec::new();
    let mut points = Vec::new();
    for (i, &l) in sizes.iter().enumerate() {
        let mut curve = Vec::new();
        let mut err = Vec::new();
        for (j, &p) in probs.iter().enumerate() {
            let tc = Instant::now();
            let tree = root.subtree((i * probs.len() + j) as u64);
            let t_layers = cipt::absorbing::default_t_layers(l);
            let record = RecordSpec::final_only(t_layers);
            let nt = n_t as f64;
            let mut fracs = Vec::with_capacity(n_c as usize);
            for c in 0..n_c {
                let circ = cipt::absorbing::generate_absorbing_circuit(
                    l,
                    p,
                    t_layers,
                    &mut tree.circuit_stream(c as u64),
                )
                .unwrap();
                let mut sum = 0.0;
                let mut sq = 0.0;
                for tau in 0..n_t as usize {
                    let mut rng = tree.trajectory_stream(c as u64, tau as u64);
                    let (rec, _) = cipt::absorbing::run_absorbing_trajectory(
                        &circ,
                        (1 << l) - 1,
                        &mut rng,
                        &record,
                    )
                    .unwrap();
                    let v = (1.0 - rec.series[0].mz_mean) / 2.0;
                    sum += v;
                    sq += v * v;
                }
                let var = (sq / nt - (sum / nt).powi(2)).max(0.0);
                fracs.push((var < EPS) as u32 as f64);
            }
            let (val, se) = mean_se(&fracs);
            eprintln!(
                "  absorbing L={l} p_m={p:.2}: O_t[nd]={val:.3} ({:.0}s)",
                tc.elapsed().as_secs_f64()
            );
            curve.push(val);
            err.push(se.max(1e-3));
            points.push(ScalingPoint { l, p, value: val, stderr: se.max(1e-3) });
        }
        curves.push(curve);
        errs.push(err);
    }
    // pairwise crossings of linearly interpolated O_t curves; a sign change
    // only counts if the difference is resolved (> 2 sigma) at one end of
    // the segment, so noise wiggles deep in the active phase do not register
    let mut crossings = Vec::new();
    for i in 0..sizes.len() {
        for j in i + 1..sizes.len() {
            for w in 0..probs.len() - 1 {
                let d0 = curves[i][w] - curves[j][w];
                let d1 = curves[i][w + 1] - curves[j][w + 1];
                let s0 = 2.0 * (errs[i][w].powi(2) + errs[j][w].powi(2)).sqrt();
                let s1 = 2.0 * (errs[i][w + 1].powi(2) + errs[j][w + 1].powi(2)).sqrt();
                if d0 * d1 < 0.0 && (d0.abs() > s0 || d1.abs() > s1) {
                    let frac = d0 / (d0 - d1);
                    crossings.push(probs[w] + frac * (probs[w + 1] - probs[w]));
                }
            }
        }
    }
    let crossings_ok =
        !crossings.is_empty() && crossings.iter().all(|&x| (0.080..=0.100).contains(&x));
    let opts = CollapseOptions { fit_beta: false, n_bootstrap: 100, ..Default::default() };
    let fit = fss_collapse(&points, &opts).unwrap();
    let pass = crossings_ok && (0.6..=1.3).contains(&fit.nu);
    report(
        results,
        "9 absorbing-crossing",
        pass,
        format!(
            "crossings {crossings:.4?}, collapse nu = {:.2} +- {:.2} p_c = {:.4}, {:.0}s",
            fit.nu,
            fit.nu_err,
            fit.p_c,
            t0.elapsed().as_secs_f64()
        ),
    );
}

// ---------------------------------------------------------------------------
// criterion 10: exact identities and the branch-enumeration oracle
// ---------------------------------------------------------------------------

/// Exhaustive trajectory enumeration for a frozen quantum circuit: every
/// measurement branch with its Born probability and final state.
struct Branch {
    prob: f64,
    outcomes: Vec<u8>,
    state: PureState,
}

fn project_lsb(st: &PureState, outcome: u8, prob: f64) -> PureState {
    let l = st.sites();
    let scale = 1.0 / prob.sqrt();
    let amps: Vec<Complex64> = st
        .amplitudes()
        .iter()
        .enumerate()
        .map(|(n, &z)| if (n as u64 & 1) as u8 == outcome { z * scale } else { Complex64::new(0.0, 0.0) })
        .collect();
    PureState::from_amplitudes(amps, l).unwrap()
}

fn enumerate_branches(circ: &CircuitRealization, initial: u64) -> Vec<Branch> {
    let l = circ.l;
    let mut branches = vec![Branch {
        prob: 1.0,
        outcomes: Vec::new(),
        state: PureState::new_product_state(initial, l).unwrap(),
    }];
    for step in &circ.steps {
        match step {
            Step::Bernoulli(GateSpec::Haar2Q(u)) => {
                for b in branches.iter_mut() {
                    b.state.apply_cyclic_shift(ShiftDirection::Left);
                    b.state.apply_two_qubit_gate(u, l - 1, l).unwrap();
                }
            }
            Step::Control => {
                let mut next = Vec::with_capacity(branches.len() * 2);
                for b in branches {
                    let p1 = b.state.prob_one(l).unwrap();
                    for (outcome, prob) in [(0u8, 1.0 - p1), (1u8, p1)] {
                        if prob < 1e-16 {
                            continue;
                        }
                        let mut st = project_lsb(&b.state, outcome, prob);
                        if outcome == 1 {
                            st.apply_x(l).unwrap();
                        }
                        st.apply_cyclic_shift(ShiftDirection::Right);
                        let mut outcomes = b.outcomes.clone();
                        outcomes.push(outcome);
                        next.push(Branch { prob: b.prob * prob, outcomes, state: st });
                    }
                }
                next.sort_by(|a, b| a.outcomes.cmp(&b.outcomes));
                branches = next;
            }
            _ => unreachable!(),
        }
    }
    branches
}

fn criterion_10(results: &mut Vec<Outcome>) {
    let t0 = Instant::now();
    let mut fails: Vec<String> = Vec::new();

    // (a)+(b) classical limit: no trajectory or shot fluctuations, exact
    // variance split (decompose_variance enforces both identities to 1e-10)
    {
        let tree = SeedTree::new(MASTER).subtree(100);
        let (l, p, n_c) = (12u32, 0.45, 200u32);
        let t_max = default_t_max(l);
        let record = RecordSpec::final_only(t_max);
        let samples: Vec<NestedSample> = (0..n_c)
            .map(|c| {
                let circ = generate_circuit(
                    l,
                    p,
                    t_max,
                    Mode::Classical,
                    &mut tree.circuit_stream(c as u64),
                )
                .unwrap();
                let (rec, _) = run_trajectory(&circ, (1 << l) - 1, None, &record).unwrap();
                let k = rec.series[0].k_mean;
                NestedSample { circuit: c, trajectory: 0, mean: k, second: k * k }
            })
            .collect();
        let d = decompose_variance(&samples, EPS).unwrap();
        if d.mean_var_traj != 0.0 || d.mean_var_shot != 0.0 || d.order_traj != 1.0 || d.order_shot != 1.0
        {
            fails.push("classical fluctuations not identically zero".into());
        }
    }

    // (c) post-control support on b_1 = 1
    {
        let tree = SeedTree::new(MASTER).subtree(101);
        let circ = generate_circuit(8, 0.5, 200, Mode::Quantum, &mut tree.circuit_stream(0)).unwrap();
        let mut st = PureState::new_product_state(0xA5, 8).unwrap();
        let mut rng = tree.trajectory_stream(0, 0);
        for step in &circ.steps {
            let m = step_quantum(&mut st, step, &mut rng).unwrap();
            if m.is_some() && st.weight_msb_one() > 1e-12 {
                fails.push(format!("post-control b_1 support {}", st.weight_msb_one()));
                break;
            }
        }
    }

    // (d) absorbing dark state exactly stationary
    {
        let tree = SeedTree::new(MASTER).subtree(102);
        let circ =
            cipt::absorbing::generate_absorbing_circuit(8, 0.3, 60, &mut tree.circuit_stream(0))
                .unwrap();
        let record = RecordSpec { times: (0..=60).collect(), ..Default::default() };
        let (rec, _) = cipt::absorbing::run_absorbing_trajectory(
            &circ,
            0,
            &mut tree.trajectory_stream(0, 0),
            &record,
        )
        .unwrap();
        if rec.series.iter().any(|s| (s.mz_mean - 1.0).abs() > 1e-12) {
            fails.push("absorbing state drifted".into());
        }
    }

    // (e) sampled gate unitarity
    {
        let tree = SeedTree::new(MASTER).subtree(103);
        let mut stream = tree.circuit_stream(0);
        for i in 0..10_000 {
            let gate = if i % 2 == 0 { sample_haar_2q(&mut stream) } else { sample_block_1u3(&mut stream) };
            let defect = match gate {
                GateSpec::Haar2Q(u) | GateSpec::Block1U3(u) => u.unitarity_defect(),
                _ => unreachable!(),
            };
            if defect > 1e-12 {
                fails.push(format!("gate unitarity defect {defect:.2e}"));
                break;
            }
        }
    }

    // (f) byte-identical outputs across worker counts
    {
        let dir = tempfile::tempdir().unwrap();
        let base = cipt::experiment::ExperimentConfig {
            sizes: vec![6, 8],
            probs: vec![0.4, 0.5],
            n_circuits: 6,
            n_trajectories: 4,
            seed: 77,
            out: dir.path().join("w1"),
            workers: 1,
            ..Default::default()
        };
        let r1 = cipt::experiment::run(&base).unwrap();
        let mut alt = base.clone();
        alt.out = dir.path().join("w4");
        alt.workers = 4;
        let r2 = cipt::experiment::run(&alt).unwrap();
        if r1.content_hash != r2.content_hash {
            fails.push("outputs differ across worker counts".into());
        }
    }

    // (g) branch-enumeration oracle at L = 6: exact law of total variance,
    // and every Monte Carlo trajectory reproduces its branch's moments
    {
        let tree = SeedTree::new(MASTER).subtree(104);
        let (l, t_max) = (6u32, 24u32);
        let record = RecordSpec::final_only(t_max);
        let initial = (1u64 << l) - 1;
        for c in 0..3u64 {
            let circ =
                generate_circuit(l, 0.5, t_max, Mode::Quantum, &mut tree.circuit_stream(c)).unwrap();
            let branches = enumerate_branches(&circ, initial);
            let total_p: f64 = branches.iter().map(|b| b.prob).sum();
            if (total_p - 1.0).abs() > 1e-10 {
                fails.push(format!("branch probabilities sum to {total_p}"));
            }
            // oracle decomposition and the mixture's shot distribution
            let mut mean_q = 0.0;
            let mut e_second = 0.0;
            let mut e_shot_var = 0.0;
            let mut q = vec![0.0f64; 1 << l];
            let mut by_outcome: HashMap<Vec<u8>, (f64, f64)> = HashMap::new();
            for b in &branches {
                let (m, s2) = b.state.expect_diagonal(DiagonalObservable::Fdw);
                mean_q += b.prob * m;
                e_second += b.prob * s2;
                e_shot_var += b.prob * (s2 - m * m);
                for (n, z) in b.state.amplitudes().iter().enumerate() {
                    q[n] += b.prob * z.norm_sqr();
                }
                by_outcome.insert(b.outcomes.clone(), (m, s2));
            }
            let var_traj = e_second - e_shot_var - mean_q * mean_q;
            let mix_mean: f64 = q
                .iter()
                .enumerate()
                .map(|(n, w)| w * DiagonalObservable::Fdw.eigenvalue(n as u64, l))
                .sum();
            let mix_second: f64 = q
                .iter()
                .enumerate()
                .map(|(n, w)| w * DiagonalObservable::Fdw.eigenvalue(n as u64, l).powi(2))
                .sum();
            let mix_var = mix_second - mix_mean * mix_mean;
            if (mix_mean - mean_q).abs() > 1e-6 {
                fails.push(format!("oracle mean mismatch {:.2e}", (mix_mean - mean_q).abs()));
            }
            if (mix_var - (var_traj + e_shot_var)).abs() > 1e-6 {
                fails.push(format!(
                    "law of total variance violated by {:.2e}",
                    (mix_var - (var_traj + e_shot_var)).abs()
                ));
            }
            // Monte Carlo trajectories land exactly on enumerated branches
            let mut mc_mean = 0.0;
            let n_mc = 2000u32;
            for tau in 0..n_mc {
                let mut rng = tree.trajectory_stream(c, tau as u64);
                let (rec, _) = run_trajectory(&circ, initial, Some(&mut rng), &record).unwrap();
                let s = &rec.series[0];
                match by_outcome.get(&rec.outcomes) {
                    None => {
                        fails.push("sampled trajectory missing from enumeration".into());
                        break;
                    }
                    Some(&(m, s2)) => {
                        if (s.k_mean - m).abs() > 1e-6 || (s.k_second - s2).abs() > 1e-6 {
                            fails.push(format!(
                                "trajectory moments deviate from branch by {:.2e}",
                                (s.k_mean - m).abs().max((s.k_second - s2).abs())
                            ));
                            break;
                        }
                        mc_mean += m;
                    }
                }
            }
            // and their average converges to the oracle mean
            let mc_mean = mc_mean / n_mc as f64;
            let se = (var_traj.max(0.0) / n_mc as f64).sqrt() + 1e-9;
            if (mc_mean - mean_q).abs() > 5.0 * se {
                fails.push(format!(
                    "MC trajectory mean {mc_mean:.4} vs oracle {mean_q:.4} (se {se:.4})"
                ));
            }
        }
    }

    let pass = fails.is_empty();
    report(
        results,
        "10 exact-identities",
        pass,
        if pass {
            format!("all identity checks hold, {:.0}s", t0.elapsed().as_secs_f64())
        } else {
            fails.join("; ")
        },
    );
}

#[test]
fn acceptance() {
    let mut results = Vec::new();
    criterion_1(&mut results);
    criterion_10(&mut results);
    criterion_5(&mut results);
    criterion_6(&mut results);
    let classical_cells = criterion_2(&mut results);
    let cells = quantum_sweep();
    criterion_3(&mut results, &cells);
    criterion_4(&mut results, &cells);
    criterion_7(&mut results, &classical_cells, &cells);
    criterion_8(&mut results, &cells);
    criterion_9(&mut results);

    eprintln!("--- acceptance summary ---");
    for r in &results {
        eprintln!("{} {:<28} {}", if r.pass { "PASS" } else { "FAIL" }, r.id, r.detail);
    }
    let failed: Vec<&str> = results.iter().filter(|r| !r.pass).map(|r| r.id).collect();
    assert!(failed.is_empty(), "failed criteria: {failed:?}");
}
