//! Scaling analysis: first-domain-wall tail exponents, coherence growth
//! fits, finite-size-scaling collapse, and distribution-rescaling checks.

use serde::Serialize;

use crate::rng::{splitmix64, Stream};
use crate::{Error, Result};
use rand::SeedableRng;

/// One aggregated data point of an order parameter or variance curve.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ScalingPoint {
    pub l: u32,
    pub p: f64,
    pub value: f64,
    pub stderr: f64,
}

/// Weighted least-squares slope of `log2 f(k)` against `k` over
/// `k in [1, L-1]`, using only bins with positive weight. Each bin is
/// weighted by its probability mass, the multinomial error model for a
/// sampled histogram: the log of a nearly-empty bin carries almost no
/// information and must not steer the fit. Returns `(slope, stderr)`.
///
/// At the critical point the first-domain-wall distribution is flat
/// (slope 0); at zero control rate it grows as `f(k) ~ 2^k` (slope 1).
pub fn fit_fdw_exponent(profile: &[f64], l: u32) -> Result<(f64, f64)> {
    if profile.len() != l as usize + 1 {
        return Err(Error::InvalidInput(format!(
            "profile length {} != L+1 = {}",
            profile.len(),
            l + 1
        )));
    }
    let pts: Vec<(f64, f64, f64)> = (1..l)
        .filter_map(|k| {
            let f = profile[k as usize];
            (f > 0.0).then(|| (k as f64, f.log2(), f))
        })
        .collect();
    if pts.len() < 3 {
        return Err(Error::InsufficientData(format!(
            "only {} positive tail bins, need >= 3",
            pts.len()
        )));
    }
    let sw: f64 = pts.iter().map(|p| p.2).sum();
    let xbar: f64 = pts.iter().map(|p| p.0 * p.2).sum::<f64>() / sw;
    let ybar: f64 = pts.iter().map(|p| p.1 * p.2).sum::<f64>() / sw;
    let sxx: f64 = pts.iter().map(|p| p.2 * (p.0 - xbar).powi(2)).sum();
    let sxy: f64 = pts.iter().map(|p| p.2 * (p.0 - xbar) * (p.1 - ybar)).sum();
    if sxx <= 0.0 {
        return Err(Error::InsufficientData("degenerate tail support".into()));
    }
    let slope = sxy / sxx;
    let chi2: f64 = pts
        .iter()
        .map(|&(x, y, w)| {
            let r = y - ybar - slope * (x - xbar);
            w * r * r
        })
        .sum();
    let n = pts.len() as f64;
    let stderr = (chi2 / (n - 2.0).max(1.0) / sxx).sqrt();
    Ok((slope, stderr))
}

#[derive(Debug, Clone, Copy, Serialize)]
pub struct CoherenceFit {
    /// Linear-in-L coefficient (bits of coherence per site).
    pub a1: f64,
    /// Constant offset.
    pub a0: f64,
    /// 1/L correction coefficient.
    pub am1: f64,
    /// Root-mean-square residual of log2-coherence.
    pub rms_residual: f64,
}

/// Fits `log2(coherence) = a1 * L + a0 + a_{-1} / L` over sizes by
/// unweighted least squares. Needs at least 4 distinct sizes.
pub fn fit_coherence_series(points: &[(u32, f64)]) -> Result<CoherenceFit> {
    let mut sizes: Vec<u32> = points.iter().map(|p| p.0).collect();
    sizes.sort_unstable();
    sizes.dedup();
    if sizes.len() < 4 {
        return Err(Error::InsufficientData(format!(
            "need >= 4 distinct sizes, got {}",
            sizes.len()
        )));
    }
    if points.iter().any(|&(_, c)| c <= 0.0) {
        return Err(Error::InvalidInput("coherence values must be positive".into()));
    }
    // normal equations for basis [L, 1, 1/L]
    let mut ata = [[0.0f64; 3]; 3];
    let mut atb = [0.0f64; 3];
    for &(l, c) in points {
        let x = [l as f64, 1.0, 1.0 / l as f64];
        let y = c.log2();
        for i in 0..3 {
            for j in 0..3 {
                ata[i][j] += x[i] * x[j];
            }
            atb[i] += x[i] * y;
        }
    }
    let coef = solve3(ata, atb).ok_or_else(|| {
        Error::NumericInvariant("singular normal equations in coherence fit".into())
    })?;
    let mut ss = 0.0;
    for &(l, c) in points {
        let pred = coef[0] * l as f64 + coef[1] + coef[2] / l as f64;
        let r = c.log2() - pred;
        ss += r * r;
    }
    Ok(CoherenceFit {
        a1: coef[0],
        a0: coef[1],
        am1: coef[2],
        rms_residual: (ss / points.len() as f64).sqrt(),
    })
}

fn solve3(mut a: [[f64; 3]; 3], mut b: [f64; 3]) -> Option<[f64; 3]> {
    for col in 0..3 {
        let piv = (col..3).max_by(|&i, &j| a[i][col].abs().total_cmp(&a[j][col].abs()))?;
        if a[piv][col].abs() < 1e-14 {
            return None;
        }
        a.swap(col, piv);
        b.swap(col, piv);
        for row in 0..3 {
            if row != col {
                let f = a[row][col] / a[col][col];
                for k in col..3 {
                    a[row][k] -= f * a[col][k];
                }
                b[row] -= f * b[col];
            }
        }
    }
    Some([b[0] / a[0][0], b[1] / a[1][1], b[2] / a[2][2]])
}

#[derive(Debug, Clone, Serialize)]
pub struct CollapseFit {
    pub nu: f64,
    pub nu_err: f64,
    pub p_c: f64,
    pub p_c_err: f64,
    pub beta: f64,
    pub beta_err: f64,
    /// Fitted coefficient of the `1 + c/L` finite-size correction (0 when
    /// disabled).
    pub correction: f64,
    /// Chi-squared per degree of freedom of the shared scaling function.
    pub objective: f64,
    pub n_points_used: usize,
}

#[derive(Debug, Clone, Copy)]
pub struct CollapseOptions {
    /// Fit `value * L^(beta/nu)`; set false to collapse a dimensionless
    /// quantity (beta pinned to 0).
    pub fit_beta: bool,
    /// Only points with `|(p - p_c) L^(1/nu)| <= u_max` enter the fit.
    pub u_max: f64,
    /// Bootstrap resamples for parameter errors.
    pub n_bootstrap: usize,
    pub seed: u64,
    /// Pin the critical point instead of fitting it (for models where it is
    /// known exactly).
    pub p_c_fixed: Option<f64>,
    /// Fit a multiplicative finite-size correction `1 + c/L` dividing the
    /// values, absorbing the leading analytic correction to scaling at
    /// small sizes.
    pub size_correction: bool,
}

impl Default for CollapseOptions {
    fn default() -> Self {
        CollapseOptions {
            fit_beta: true,
            u_max: 2.0,
            n_bootstrap: 100,
            seed: 7,
            p_c_fixed: None,
            size_correction: false,
        }
    }
}

/// Collapse objective: rescale every point to
/// `(u, v) = ((p - p_c) L^(1/nu), value * L^(beta/nu))`, fit one shared
/// degree-4 polynomial `v ~ P(u)` by weighted least squares over points with
/// `|u| <= u_max`, and return chi^2 per degree of freedom with weights
/// `1 / rescaled_stderr^2` (floored). Chi^2/dof is invariant under the
/// `L^(beta/nu)` rescaling of values and errors alike, so beta is judged
/// purely on collapse quality, not on how it deforms the error bars.
fn collapse_objective(
    data: &[ScalingPoint],
    nu: f64,
    p_c: f64,
    beta: f64,
    corr: f64,
    u_max: f64,
) -> Option<(f64, usize)> {
    const DEG: usize = 4;
    let mut rows: Vec<(f64, f64, f64)> = Vec::new(); // (u, v, weight)
    let mut per_size: std::collections::BTreeMap<u32, usize> = std::collections::BTreeMap::new();
    for pt in data {
        per_size.entry(pt.l).or_insert(0);
        let lf = pt.l as f64;
        let u = (pt.p - p_c) * lf.powf(1.0 / nu);
        if u.abs() > u_max {
            continue;
        }
        let correction = 1.0 + corr / lf;
        if correction < 0.1 {
            return None;
        }
        let scale = lf.powf(beta / nu) / correction;
        let v = pt.value * scale;
        let se = (pt.stderr * scale).max(1e-9);
        rows.push((u, v, 1.0 / (se * se)));
        *per_size.get_mut(&pt.l).unwrap() += 1;
    }
    // every size must constrain the shared curve with more points than the
    // polynomial has coefficients, otherwise shrinking the window by pushing
    // nu down trivially reduces the residual
    if per_size.values().any(|&n| n < DEG + 1) {
        return None;
    }
    // weighted LSQ for degree-4 polynomial via normal equations
    let m = DEG + 1;
    let mut ata = vec![vec![0.0f64; m]; m];
    let mut atb = vec![0.0f64; m];
    for &(u, v, w) in &rows {
        let mut pow = [0.0f64; DEG + 1];
        let mut x = 1.0;
        for p in pow.iter_mut() {
            *p = x;
            x *= u;
        }
        for i in 0..m {
            for j in 0..m {
                ata[i][j] += w * pow[i] * pow[j];
            }
            atb[i] += w * pow[i] * v;
        }
    }
    let coef = solve_dense(&mut ata, &mut atb)?;
    let mut chi2 = 0.0;
    for &(u, v, w) in &rows {
        let mut pred = 0.0;
        let mut x = 1.0;
        for c in &coef {
            pred += c * x;
            x *= u;
        }
        let r = v - pred;
        chi2 += w * r * r;
    }
    let dof = rows.len().saturating_sub(m);
    if dof == 0 {
        return None;
    }
    Some((chi2 / dof as f64, rows.len()))
}

fn solve_dense(a: &mut [Vec<f64>], b: &mut [f64]) -> Option<Vec<f64>> {
    let n = b.len();
    for col in 0..n {
        let piv = (col..n).max_by(|&i, &j| a[i][col].abs().total_cmp(&a[j][col].abs()))?;
        if a[piv][col].abs() < 1e-12 {
            return None;
        }
        a.swap(col, piv);
        b.swap(col, piv);
        for row in 0..n {
            if row != col {
                let f = a[row][col] / a[col][col];
                for k in col..n {
                    let v = a[col][k];
                    a[row][k] -= f * v;
                }
                b[row] -= f * b[col];
            }
        }
    }
    Some((0..n).map(|i| b[i] / a[i][i]).collect())
}

/// Finite-size-scaling collapse. Coarse grid search over
/// `nu in [0.5, 2.0]` (step 0.05), `p_c` over the data's probability range
/// (step 0.002), and, when enabled, `beta in [0, 2]` (step 0.05); the best
/// grid cell is refined by Nelder-Mead. Parameter errors come from
/// parametric bootstrap: each resample jitters every point by a Gaussian of
/// its standard error and refits from the optimum.
pub fn fss_collapse(data: &[ScalingPoint], opts: &CollapseOptions) -> Result<CollapseFit> {
    let mut sizes: Vec<u32> = data.iter().map(|d| d.l).collect();
    sizes.sort_unstable();
    sizes.dedup();
    if sizes.len() < 3 {
        return Err(Error::InsufficientData(format!(
            "collapse needs >= 3 sizes, got {}",
            sizes.len()
        )));
    }
    if data.iter().any(|d| !d.value.is_finite() || d.stderr < 0.0) {
        return Err(Error::InvalidInput("non-finite value or negative stderr".into()));
    }
    let p_lo = data.iter().map(|d| d.p).fold(f64::INFINITY, f64::min);
    let p_hi = data.iter().map(|d| d.p).fold(f64::NEG_INFINITY, f64::max);
    if !(p_hi > p_lo) {
        return Err(Error::InsufficientData("need a range of probabilities".into()));
    }

    let betas: Vec<f64> = if opts.fit_beta {
        (0..=40).map(|i| 0.05 * i as f64).collect()
    } else {
        vec![0.0]
    };
    let pcs: Vec<f64> = match opts.p_c_fixed {
        Some(pc) => vec![pc],
        None => {
            let mut v = Vec::new();
            let mut p_c = p_lo;
            while p_c <= p_hi + 1e-12 {
                v.push(p_c);
                p_c += 0.002;
            }
            v
        }
    };
    let corrs: Vec<f64> = if opts.size_correction {
        (-4..=8).map(|i| i as f64).collect()
    } else {
        vec![0.0]
    };
    let mut best = (f64::INFINITY, 1.0, 0.5 * (p_lo + p_hi), 0.0, 0.0);
    let mut nu = 0.5;
    while nu <= 2.0 + 1e-9 {
        for &p_c in &pcs {
            for &beta in &betas {
                for &corr in &corrs {
                    if let Some((obj, _)) =
                        collapse_objective(data, nu, p_c, beta, corr, opts.u_max)
                    {
                        if obj < best.0 {
                            best = (obj, nu, p_c, beta, corr);
                        }
                    }
                }
            }
        }
        nu += 0.05;
    }
    if !best.0.is_finite() {
        return Err(Error::InsufficientData(
            "no parameter cell kept enough points inside the collapse window".into(),
        ));
    }

    // free simplex coordinates: nu, then p_c (unless pinned), then beta
    // (when fitted), then the correction coefficient (when fitted)
    let unpack = |x: &[f64]| -> (f64, f64, f64, f64) {
        let nu = x[0];
        let mut i = 1;
        let p_c = opts.p_c_fixed.unwrap_or_else(|| {
            i += 1;
            x[1]
        });
        let beta = if opts.fit_beta {
            i += 1;
            x[i - 1]
        } else {
            0.0
        };
        let corr = if opts.size_correction { x[i] } else { 0.0 };
        (nu, p_c, beta, corr)
    };
    let eval = |x: &[f64]| -> f64 {
        let (nu, p_c, beta, corr) = unpack(x);
        if nu < 0.2 || nu > 4.0 || p_c < p_lo || p_c > p_hi || beta < -0.5 || beta > 3.0 {
            return f64::INFINITY;
        }
        collapse_objective(data, nu, p_c, beta, corr, opts.u_max)
            .map(|(o, _)| o)
            .unwrap_or(f64::INFINITY)
    };
    let mut x0 = vec![best.1];
    let mut steps = vec![0.05];
    if opts.p_c_fixed.is_none() {
        x0.push(best.2);
        steps.push(0.002);
    }
    if opts.fit_beta {
        x0.push(best.3);
        steps.push(0.05);
    }
    if opts.size_correction {
        x0.push(best.4);
        steps.push(0.25);
    }
    let xopt = nelder_mead(&eval, &x0, &steps, 400, 1e-10);
    let (nu, p_c, beta, corr) = unpack(&xopt);
    let (objective, n_points_used) = collapse_objective(data, nu, p_c, beta, corr, opts.u_max)
        .ok_or_else(|| Error::InsufficientData("refined optimum lost its support".into()))?;

    // parametric bootstrap
    let mut nu_s = Vec::with_capacity(opts.n_bootstrap);
    let mut pc_s = Vec::with_capacity(opts.n_bootstrap);
    let mut beta_s = Vec::with_capacity(opts.n_bootstrap);
    for b in 0..opts.n_bootstrap {
        let mut rng = Stream::seed_from_u64(splitmix64(opts.seed ^ splitmix64(b as u64 + 1)));
        let jittered: Vec<ScalingPoint> = data
            .iter()
            .map(|pt| {
                let g = crate::rng::standard_normal(&mut rng);
                ScalingPoint { value: pt.value + g * pt.stderr, ..*pt }
            })
            .collect();
        let eval_b = |x: &[f64]| -> f64 {
            let (nu, p_c, beta, corr) = unpack(x);
            if nu < 0.2 || nu > 4.0 || p_c < p_lo || p_c > p_hi || beta < -0.5 || beta > 3.0 {
                return f64::INFINITY;
            }
            collapse_objective(&jittered, nu, p_c, beta, corr, opts.u_max)
                .map(|(o, _)| o)
                .unwrap_or(f64::INFINITY)
        };
        let xb = nelder_mead(&eval_b, &xopt, &steps, 200, 1e-9);
        let (nu_b, pc_b, beta_b, _) = unpack(&xb);
        nu_s.push(nu_b);
        pc_s.push(pc_b);
        if opts.fit_beta {
            beta_s.push(beta_b);
        }
    }
    let sd = |v: &[f64]| -> f64 {
        if v.len() < 2 {
            return 0.0;
        }
        let m = v.iter().sum::<f64>() / v.len() as f64;
        (v.iter().map(|x| (x - m) * (x - m)).sum::<f64>() / (v.len() - 1) as f64).sqrt()
    };

    Ok(CollapseFit {
        nu,
        nu_err: sd(&nu_s),
        p_c,
        p_c_err: sd(&pc_s),
        beta,
        beta_err: if opts.fit_beta { sd(&beta_s) } else { 0.0 },
        correction: corr,
        objective,
        n_points_used,
    })
}

fn nelder_mead(
    f: &dyn Fn(&[f64]) -> f64,
    x0: &[f64],
    steps: &[f64],
    max_iter: usize,
    tol: f64,
) -> Vec<f64> {
    let n = x0.len();
    let mut simplex: Vec<(Vec<f64>, f64)> = Vec::with_capacity(n + 1);
    simplex.push((x0.to_vec(), f(x0)));
    for i in 0..n {
        let mut x = x0.to_vec();
        x[i] += steps[i];
        let fx = f(&x);
        simplex.push((x, fx));
    }
    for _ in 0..max_iter {
        simplex.sort_by(|a, b| a.1.total_cmp(&b.1));
        if (simplex[n].1 - simplex[0].1).abs() < tol {
            break;
        }
        let centroid: Vec<f64> = (0..n)
            .map(|i| simplex[..n].iter().map(|s| s.0[i]).sum::<f64>() / n as f64)
            .collect();
        let xr: Vec<f64> = (0..n).map(|i| centroid[i] + (centroid[i] - simplex[n].0[i])).collect();
        let fr = f(&xr);
        if fr < simplex[0].1 {
            let xe: Vec<f64> =
                (0..n).map(|i| centroid[i] + 2.0 * (centroid[i] - simplex[n].0[i])).collect();
            let fe = f(&xe);
            simplex[n] = if fe < fr { (xe, fe) } else { (xr, fr) };
        } else if fr < simplex[n - 1].1 {
            simplex[n] = (xr, fr);
        } else {
            let xc: Vec<f64> =
                (0..n).map(|i| centroid[i] + 0.5 * (simplex[n].0[i] - centroid[i])).collect();
            let fc = f(&xc);
            if fc < simplex[n].1 {
                simplex[n] = (xc, fc);
            } else {
                let x0c = simplex[0].0.clone();
                for s in simplex.iter_mut().skip(1) {
                    for i in 0..n {
                        s.0[i] = x0c[i] + 0.5 * (s.0[i] - x0c[i]);
                    }
                    s.1 = f(&s.0);
                }
            }
        }
    }
    simplex.sort_by(|a, b| a.1.total_cmp(&b.1));
    simplex[0].0.clone()
}

/// Which rescaling of a basis-fraction distribution `p_L(x)`, `x = n / 2^L`,
/// should collapse curves of different sizes onto one shape.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum TailRescaling {
    /// Controlled phase: mass localizes at x = 0, tails vanish; compare raw.
    None,
    /// Critical point: `p(x) ~ 1/x`, so `p(x) * L`-style weight per octave
    /// is flat; compare `x * p(x)` shape (scale-free tail).
    InverseX,
    /// Chaotic phase: flat distribution at scale `2^-L`; compare `p(x) * 2^L`
    /// ... handled through per-curve peak normalization.
    Flat,
}

/// Coarse-grains each size's basis distribution (length `2^L`, excluding
/// `x = 0`) onto the dyadic octave grid `k = 1..=L_min` (mass with leading
/// domain wall at k), applies the chosen rescaling, peak-normalizes each
/// curve, and returns the maximum pairwise sup-distance. Small values mean
/// the rescaled tails share one shape.
pub fn tail_rescale_check(dists: &[(u32, Vec<f64>)], rescaling: TailRescaling) -> Result<f64> {
    if dists.len() < 2 {
        return Err(Error::InsufficientData("need >= 2 sizes".into()));
    }
    let l_min = dists.iter().map(|d| d.0).min().unwrap();
    let mut curves: Vec<Vec<f64>> = Vec::with_capacity(dists.len());
    for (l, dist) in dists {
        if dist.len() != 1usize << l {
            return Err(Error::InvalidInput(format!(
                "distribution for L={l} has length {}, expected {}",
                dist.len(),
                1usize << l
            )));
        }
        // octave k holds all n with first domain wall at depth k; octaves
        // finer than the shared grid are dropped, not folded, so the
        // compared bins mean the same thing at every size
        let mut oct = vec![0.0f64; l_min as usize + 1];
        for (n, &w) in dist.iter().enumerate().skip(1) {
            let k = crate::bits::fdw_unchecked(n as u64);
            if k <= l_min {
                oct[k as usize] += w;
            }
        }
        let mut curve: Vec<f64> = (1..=l_min as usize)
            .map(|k| {
                let w = oct[k];
                match rescaling {
                    TailRescaling::None => w,
                    // per-octave mass of a 1/x tail is already flat; expose
                    // deviations by keeping octave mass as-is
                    TailRescaling::InverseX => w,
                    // flat p(x): octave k holds 2^(k-1) of the 2^L states,
                    // undo that growth
                    TailRescaling::Flat => w / 2f64.powi(k as i32 - 1),
                }
            })
            .collect();
        let peak = curve.iter().cloned().fold(0.0f64, f64::max);
        if peak > 0.0 {
            for c in curve.iter_mut() {
                *c /= peak;
            }
        }
        curves.push(curve);
    }
    let mut worst = 0.0f64;
    for i in 0..curves.len() {
        for j in i + 1..curves.len() {
            let d = curves[i]
                .iter()
                .zip(&curves[j])
                .map(|(a, b)| (a - b).abs())
                .fold(0.0f64, f64::max);
            worst = worst.max(d);
        }
    }
    Ok(worst)
}
