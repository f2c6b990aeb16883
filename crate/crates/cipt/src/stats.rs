//! Nested fluctuation statistics for monitored-circuit ensembles.
//!
//! An observable is sampled over three nested sources of randomness: the
//! circuit realization, the measurement trajectory within a circuit, and the
//! computational-basis shot within a trajectory's final state. The total
//! variance splits exactly (law of total variance, population form):
//!
//! ```text
//! var_total = var_circuit + mean_over_circuits(var_quantum)
//! var_quantum = var_traj + mean_over_trajs(var_shot)
//! ```
//!
//! Per-trajectory shot variance is exact: each trajectory carries the first
//! and second moments of the observable in the final state.

use serde::Serialize;

use crate::{Error, Result};

/// One trajectory's contribution: exact shot moments of a diagonal
/// observable in the final state of trajectory `trajectory` of circuit
/// `circuit`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NestedSample {
    pub circuit: u32,
    pub trajectory: u32,
    /// ⟨O⟩ over shots.
    pub mean: f64,
    /// ⟨O²⟩ over shots.
    pub second: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct FluctuationDecomposition {
    /// Grand mean of the observable.
    pub mean: f64,
    /// Total population variance over (circuit, trajectory, shot).
    pub var_total: f64,
    /// Variance of per-circuit means across circuits.
    pub var_circuit: f64,
    /// Mean over circuits of the within-circuit variance.
    pub mean_var_quantum: f64,
    /// Mean over circuits of the within-circuit trajectory variance
    /// (variance of per-trajectory means).
    pub mean_var_traj: f64,
    /// Mean over circuits and trajectories of the exact shot variance.
    pub mean_var_shot: f64,
    /// Fraction of circuits with within-circuit trajectory variance < eps.
    pub order_traj: f64,
    /// Fraction of trajectories with shot variance < eps.
    pub order_shot: f64,
    /// Fraction of circuits with total within-circuit variance < eps.
    pub order_quantum: f64,
    pub eps: f64,
    pub n_circuits: usize,
    pub n_trajectories: usize,
}

fn population_var(values: &[f64]) -> f64 {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n
}

/// Decomposes the fluctuations of a nested sample set.
///
/// Requires >= 2 circuits and >= 1 trajectory per circuit (a deterministic
/// trajectory layer, as in the classical model, is a valid degenerate case
/// with var_traj identically zero), with the same trajectory count in every
/// circuit. Verifies both variance identities to 1e-10 of the total scale.
pub fn decompose_variance(samples: &[NestedSample], eps: f64) -> Result<FluctuationDecomposition> {
    if eps <= 0.0 {
        return Err(Error::InvalidInput(format!("eps={eps} must be positive")));
    }
    let mut circuits: Vec<u32> = samples.iter().map(|s| s.circuit).collect();
    circuits.sort_unstable();
    circuits.dedup();
    let n_c = circuits.len();
    if n_c < 2 {
        return Err(Error::InsufficientData("need at least 2 circuits".into()));
    }
    let n_t = samples.len() / n_c;
    if n_t == 0 || samples.len() != n_c * n_t {
        return Err(Error::InvalidInput(
            "trajectory count must be equal across circuits".into(),
        ));
    }

    let mut circuit_means = Vec::with_capacity(n_c);
    let mut var_quantums = Vec::with_capacity(n_c);
    let mut var_trajs = Vec::with_capacity(n_c);
    let mut shot_vars_all = Vec::with_capacity(samples.len());
    let mut grand_first = 0.0;
    let mut grand_second = 0.0;
    for &c in &circuits {
        let group: Vec<&NestedSample> = samples.iter().filter(|s| s.circuit == c).collect();
        if group.len() != n_t {
            return Err(Error::InvalidInput(
                "trajectory count must be equal across circuits".into(),
            ));
        }
        let traj_means: Vec<f64> = group.iter().map(|s| s.mean).collect();
        let c_first = traj_means.iter().sum::<f64>() / n_t as f64;
        let c_second = group.iter().map(|s| s.second).sum::<f64>() / n_t as f64;
        let var_traj = population_var(&traj_means);
        let mean_var_shot: f64 =
            group.iter().map(|s| (s.second - s.mean * s.mean).max(0.0)).sum::<f64>() / n_t as f64;
        for s in &group {
            shot_vars_all.push((s.second - s.mean * s.mean).max(0.0));
        }
        circuit_means.push(c_first);
        var_trajs.push(var_traj);
        var_quantums.push((c_second - c_first * c_first).max(0.0));
        grand_first += c_first;
        grand_second += c_second;
        debug_assert!(mean_var_shot.is_finite());
    }
    let mean = grand_first / n_c as f64;
    let grand_second = grand_second / n_c as f64;
    let var_total = (grand_second - mean * mean).max(0.0);
    let var_circuit = population_var(&circuit_means);
    let mean_var_quantum = var_quantums.iter().sum::<f64>() / n_c as f64;
    let mean_var_traj = var_trajs.iter().sum::<f64>() / n_c as f64;
    let mean_var_shot = shot_vars_all.iter().sum::<f64>() / shot_vars_all.len() as f64;

    let scale = var_total.abs().max(1.0);
    if (var_total - var_circuit - mean_var_quantum).abs() > 1e-10 * scale {
        return Err(Error::NumericInvariant(format!(
            "total variance split violated: {} vs {} + {}",
            var_total, var_circuit, mean_var_quantum
        )));
    }
    if (mean_var_quantum - mean_var_traj - mean_var_shot).abs() > 1e-10 * scale {
        return Err(Error::NumericInvariant(format!(
            "within-circuit variance split violated: {} vs {} + {}",
            mean_var_quantum, mean_var_traj, mean_var_shot
        )));
    }

    let order_traj = order_parameter_zero_fluct(&var_trajs, eps)?;
    let order_quantum = order_parameter_zero_fluct(&var_quantums, eps)?;
    let order_shot = order_parameter_zero_fluct(&shot_vars_all, eps)?;

    Ok(FluctuationDecomposition {
        mean,
        var_total,
        var_circuit,
        mean_var_quantum,
        mean_var_traj,
        mean_var_shot,
        order_traj,
        order_shot,
        order_quantum,
        eps,
        n_circuits: n_c,
        n_trajectories: n_t,
    })
}

/// Fraction of variance samples below `eps`. Tiny negative values from
/// floating-point cancellation (>= -1e-10) are treated as zero.
pub fn order_parameter_zero_fluct(variances: &[f64], eps: f64) -> Result<f64> {
    if variances.is_empty() {
        return Err(Error::InsufficientData("no variance samples".into()));
    }
    if eps <= 0.0 {
        return Err(Error::InvalidInput(format!("eps={eps} must be positive")));
    }
    let mut below = 0usize;
    for &v in variances {
        if v < -1e-10 {
            return Err(Error::NumericInvariant(format!("negative variance {v}")));
        }
        if v.max(0.0) < eps {
            below += 1;
        }
    }
    Ok(below as f64 / variances.len() as f64)
}

/// Histogram of variance samples with a dedicated zero bin `[0, eps)`
/// followed by `n_bins` equal-width bins on `[eps, max]`. Returns
/// `(edges, counts)` with `edges.len() == counts.len() + 1`.
pub fn variance_histogram(variances: &[f64], eps: f64, n_bins: usize) -> Result<(Vec<f64>, Vec<u64>)> {
    if variances.is_empty() {
        return Err(Error::InsufficientData("no variance samples".into()));
    }
    if eps <= 0.0 || n_bins == 0 {
        return Err(Error::InvalidInput("need eps > 0 and n_bins > 0".into()));
    }
    let max = variances.iter().cloned().fold(f64::NEG_INFINITY, f64::max).max(eps * 2.0);
    let width = (max - eps) / n_bins as f64;
    let mut edges = vec![0.0, eps];
    for i in 1..=n_bins {
        edges.push(eps + width * i as f64);
    }
    let mut counts = vec![0u64; n_bins + 1];
    for &v in variances {
        let v = v.max(0.0);
        if v < eps {
            counts[0] += 1;
        } else {
            let i = (((v - eps) / width) as usize).min(n_bins - 1);
            counts[i + 1] += 1;
        }
    }
    Ok((edges, counts))
}
