//! Dense pure-state container and the primitive physical operations: cyclic
//! shifts, two-qubit gates, Born-rule measurement, bit flips, full-register
//! shot sampling, diagonal expectations, and l1-coherence.
//!
//! Sites are numbered 1..=L with site 1 the most significant bit, matching
//! the basis-index convention in [`crate::bits`].

use num_complex::Complex64;
use rand::Rng;

use crate::bits::{self, DiagonalObservable, MAX_L_QUANTUM};
use crate::rng::{Mat4, Stream};
use crate::{Error, Result};

const NORM_TOL: f64 = 1e-10;
const PROB_CUTOFF: f64 = 1e-12;
const UNITARY_TOL: f64 = 1e-12;

#[derive(Debug, Clone, Copy)]
pub enum ShiftDirection {
    Left,
    Right,
}

/// Outcome of a projective single-site measurement.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MeasurementOutcome {
    /// Measured site, in `[1, L]`.
    pub site: u32,
    /// Recorded bit.
    pub outcome: u8,
    /// Pre-measurement Born probability of the recorded outcome.
    pub probability: f64,
}

/// Dense complex amplitude vector of length `2^L` with unit l2 norm.
#[derive(Debug, Clone, PartialEq)]
pub struct PureState {
    amps: Vec<Complex64>,
    l: u32,
    scratch: Vec<Complex64>,
}

impl PureState {
    /// Product state with amplitude 1 on basis index `n`.
    pub fn new_product_state(n: u64, l: u32) -> Result<Self> {
        if l == 0 || l > MAX_L_QUANTUM {
            return Err(Error::Domain(format!(
                "site count L={l} outside dense-mode range [1, {MAX_L_QUANTUM}]"
            )));
        }
        bits::check_index(n, l)?;
        let dim = 1usize << l;
        let mut amps = vec![Complex64::new(0.0, 0.0); dim];
        amps[n as usize] = Complex64::new(1.0, 0.0);
        Ok(PureState { amps, l, scratch: Vec::new() })
    }

    /// Product state parsed from a bit string like "0001" (b_1 first).
    pub fn from_bits(s: &str) -> Result<Self> {
        let (n, l) = bits::parse_bits(s)?;
        Self::new_product_state(n, l)
    }

    /// State from an explicit amplitude vector of length `2^L`; must be
    /// normalized within `1e-10`.
    pub fn from_amplitudes(amps: Vec<Complex64>, l: u32) -> Result<Self> {
        if l == 0 || l > MAX_L_QUANTUM || amps.len() != 1usize << l {
            return Err(Error::InvalidInput(format!(
                "amplitude vector length {} does not match L={l}",
                amps.len()
            )));
        }
        let mut st = PureState { amps, l, scratch: Vec::new() };
        st.renormalize()?;
        Ok(st)
    }

    pub fn sites(&self) -> u32 {
        self.l
    }

    pub fn amplitudes(&self) -> &[Complex64] {
        &self.amps
    }

    pub fn norm_sqr(&self) -> f64 {
        self.amps.iter().map(|z| z.norm_sqr()).sum()
    }

    fn check_site(&self, site: u32) -> Result<u32> {
        if site == 0 || site > self.l {
            return Err(Error::Domain(format!("site {site} out of range [1, {}]", self.l)));
        }
        // bit position of site i (b_1 is the MSB)
        Ok(self.l - site)
    }

    /// Basis relabeling `|b_1 b_2 ... b_L> -> |b_2 ... b_L b_1>` (left) or its
    /// inverse (right). Exact norm preservation: pure permutation.
    pub fn apply_cyclic_shift(&mut self, direction: ShiftDirection) {
        let l = self.l;
        let dim = self.amps.len();
        let mut scratch = std::mem::take(&mut self.scratch);
        scratch.resize(dim, Complex64::new(0.0, 0.0));
        match direction {
            ShiftDirection::Left => {
                for n in 0..dim {
                    scratch[bits::rotate_left(n as u64, l) as usize] = self.amps[n];
                }
            }
            ShiftDirection::Right => {
                for n in 0..dim {
                    scratch[bits::rotate_right(n as u64, l) as usize] = self.amps[n];
                }
            }
        }
        std::mem::swap(&mut self.amps, &mut scratch);
        self.scratch = scratch;
    }

    /// Applies a 4x4 unitary on the `(b_site_a, b_site_b)` subspace
    /// (basis order `|b_a b_b> = 00, 01, 10, 11`), identity elsewhere.
    pub fn apply_two_qubit_gate(&mut self, u: &Mat4, site_a: u32, site_b: u32) -> Result<()> {
        u.check_unitary(UNITARY_TOL)?;
        let pa = self.check_site(site_a)?;
        let pb = self.check_site(site_b)?;
        if pa == pb {
            return Err(Error::Domain("two-qubit gate sites must be distinct".into()));
        }
        self.apply_two_qubit_unchecked(u, pa, pb);
        Ok(())
    }

    /// Gate kernel on bit positions `pa` (first gate qubit) and `pb` (second).
    pub(crate) fn apply_two_qubit_unchecked(&mut self, u: &Mat4, pa: u32, pb: u32) {
        if pa == 1 && pb == 0 {
            return self.apply_gate_last_two(u);
        }
        let (hi, lo) = if pa > pb { (pa, pb) } else { (pb, pa) };
        let ia = 1usize << pa;
        let ib = 1usize << pb;
        let lo_mask = (1usize << lo) - 1;
        let mid_mask = (1usize << (hi - 1)) - 1 - lo_mask;
        let m = &u.0;
        let total = self.amps.len() >> 2;
        for c in 0..total {
            let base = (c & lo_mask) | ((c & mid_mask) << 1) | ((c & !(lo_mask | mid_mask)) << 2);
            let i00 = base;
            let i01 = base | ib;
            let i10 = base | ia;
            let i11 = base | ia | ib;
            let a0 = self.amps[i00];
            let a1 = self.amps[i01];
            let a2 = self.amps[i10];
            let a3 = self.amps[i11];
            self.amps[i00] = m[0][0] * a0 + m[0][1] * a1 + m[0][2] * a2 + m[0][3] * a3;
            self.amps[i01] = m[1][0] * a0 + m[1][1] * a1 + m[1][2] * a2 + m[1][3] * a3;
            self.amps[i10] = m[2][0] * a0 + m[2][1] * a1 + m[2][2] * a2 + m[2][3] * a3;
            self.amps[i11] = m[3][0] * a0 + m[3][1] * a1 + m[3][2] * a2 + m[3][3] * a3;
        }
    }

    /// Fast path for the Bernoulli scrambler: gate on sites (L-1, L) acts on
    /// contiguous blocks of four amplitudes.
    fn apply_gate_last_two(&mut self, u: &Mat4) {
        let m = &u.0;
        for chunk in self.amps.chunks_exact_mut(4) {
            let a0 = chunk[0];
            let a1 = chunk[1];
            let a2 = chunk[2];
            let a3 = chunk[3];
            chunk[0] = m[0][0] * a0 + m[0][1] * a1 + m[0][2] * a2 + m[0][3] * a3;
            chunk[1] = m[1][0] * a0 + m[1][1] * a1 + m[1][2] * a2 + m[1][3] * a3;
            chunk[2] = m[2][0] * a0 + m[2][1] * a1 + m[2][2] * a2 + m[2][3] * a3;
            chunk[3] = m[3][0] * a0 + m[3][1] * a1 + m[3][2] * a2 + m[3][3] * a3;
        }
    }

    /// Basis relabeling that flips bit `site`; exact norm preservation.
    pub fn apply_x(&mut self, site: u32) -> Result<()> {
        let p = self.check_site(site)?;
        let stride = 1usize << p;
        let dim = self.amps.len();
        let mut base = 0usize;
        while base < dim {
            for i in base..base + stride {
                self.amps.swap(i, i + stride);
            }
            base += stride << 1;
        }
        Ok(())
    }

    /// Probability that bit `site` measures 1 (pre-measurement `<P_site(1)>`).
    pub fn prob_one(&self, site: u32) -> Result<f64> {
        let p = self.check_site(site)?;
        let bit = 1usize << p;
        Ok(self
            .amps
            .iter()
            .enumerate()
            .filter(|(n, _)| n & bit != 0)
            .map(|(_, z)| z.norm_sqr())
            .sum())
    }

    /// Born-rule measurement of `site`: draws the outcome, projects, and
    /// renormalizes. If one outcome has probability below `1e-12` the other is
    /// taken deterministically without consuming randomness.
    pub fn measure_site(&mut self, site: u32, rng: &mut Stream) -> Result<MeasurementOutcome> {
        let p = self.check_site(site)?;
        let bit = 1usize << p;
        let p1: f64 = if p == 0 {
            self.amps.chunks_exact(2).map(|c| c[1].norm_sqr()).sum()
        } else {
            self.amps
                .iter()
                .enumerate()
                .filter(|(n, _)| n & bit != 0)
                .map(|(_, z)| z.norm_sqr())
                .sum()
        };
        let total = self.norm_sqr();
        if (total - 1.0).abs() > NORM_TOL {
            return Err(Error::NormCorruption(format!(
                "norm^2 = {total} before measurement of site {site}"
            )));
        }
        let p0 = total - p1;
        if p0 < PROB_CUTOFF && p1 < PROB_CUTOFF {
            return Err(Error::NormCorruption(
                "both measurement branches have vanishing probability".into(),
            ));
        }
        let outcome: u8 = if p1 < PROB_CUTOFF {
            0
        } else if p0 < PROB_CUTOFF {
            1
        } else if rng.gen::<f64>() < p1 {
            1
        } else {
            0
        };
        let keep_set = outcome == 1;
        let mut post_norm_sqr = 0.0;
        for (n, z) in self.amps.iter_mut().enumerate() {
            if (n & bit != 0) != keep_set {
                *z = Complex64::new(0.0, 0.0);
            } else {
                post_norm_sqr += z.norm_sqr();
            }
        }
        let scale = 1.0 / post_norm_sqr.sqrt();
        for z in &mut self.amps {
            *z *= scale;
        }
        Ok(MeasurementOutcome {
            site,
            outcome,
            probability: if outcome == 1 { p1 } else { p0 },
        })
    }

    /// Mean and second moment of a diagonal observable:
    /// `sum_x |z_x|^2 g(x)` and `sum_x |z_x|^2 g(x)^2`.
    pub fn expect_diagonal(&self, obs: DiagonalObservable) -> (f64, f64) {
        let l = self.l;
        let mut mean = 0.0;
        let mut second = 0.0;
        for (n, z) in self.amps.iter().enumerate() {
            let w = z.norm_sqr();
            if w == 0.0 {
                continue;
            }
            let g = obs.eigenvalue(n as u64, l);
            mean += w * g;
            second += w * g * g;
        }
        (mean, second)
    }

    /// Draws a basis index with probability `|z_x|^2`; the state is not
    /// mutated.
    pub fn sample_shot(&self, rng: &mut Stream) -> u64 {
        let u: f64 = rng.gen();
        let mut acc = 0.0;
        for (n, z) in self.amps.iter().enumerate() {
            acc += z.norm_sqr();
            if u < acc {
                return n as u64;
            }
        }
        self.amps.len() as u64 - 1
    }

    /// Pure-state l1-coherence `(sum_x |z_x|)^2 - 1`.
    pub fn l1_coherence(&self) -> f64 {
        let s: f64 = self.amps.iter().map(|z| z.norm()).sum();
        (s * s - 1.0).max(0.0)
    }

    /// Total probability weight on basis states with `b_1 = 1`.
    pub fn weight_msb_one(&self) -> f64 {
        let half = self.amps.len() / 2;
        self.amps[half..].iter().map(|z| z.norm_sqr()).sum()
    }

    /// Restores exact unit norm; errors if the drift exceeds the tolerance.
    pub fn renormalize(&mut self) -> Result<()> {
        let n2 = self.norm_sqr();
        if (n2 - 1.0).abs() > NORM_TOL {
            return Err(Error::NormCorruption(format!("norm^2 drifted to {n2}")));
        }
        let scale = 1.0 / n2.sqrt();
        for z in &mut self.amps {
            *z *= scale;
        }
        Ok(())
    }
}
