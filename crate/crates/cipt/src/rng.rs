//! Reproducible randomness: a seed tree separating circuit randomness from
//! trajectory and shot randomness, Haar-random unitaries, and random
//! permutations.
//!
//! The seed tree uses the SplitMix64 finalizer (Steele, Lea & Flood 2014) as
//! the mixing function: starting from the master seed, each `(role, index)`
//! path component is absorbed as
//! `state = splitmix64(state ^ ROLE_CONST); state = splitmix64(state ^ index)`,
//! and the resulting 64-bit value seeds a ChaCha8 stream. Distinct paths give
//! independent streams; identical paths give bit-identical streams.

use num_complex::Complex64;
use rand::{Rng, RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::{Error, Result};

/// One pseudo-random stream. Value-like; independently owned by its consumer.
pub type Stream = ChaCha8Rng;

/// Roles in the seed derivation path. Trajectory streams never consume
/// circuit-stream values and vice versa: each role+index pair maps to its own
/// ChaCha8 stream.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Role {
    Circuit,
    Trajectory,
    Shot,
}

impl Role {
    fn tag(self) -> u64 {
        // arbitrary fixed odd constants, one per role
        match self {
            Role::Circuit => 0x9e3779b97f4a7c15,
            Role::Trajectory => 0xbf58476d1ce4e5b9,
            Role::Shot => 0x94d049bb133111eb,
        }
    }
}

#[inline]
pub fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e3779b97f4a7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58476d1ce4e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d049bb133111eb);
    z ^ (z >> 31)
}

/// Deterministic seed tree rooted at a 64-bit master seed.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SeedTree {
    master: u64,
}

impl SeedTree {
    pub fn new(master: u64) -> Self {
        SeedTree { master }
    }

    pub fn master(&self) -> u64 {
        self.master
    }

    /// Derives a subtree for an independent namespace (e.g. one sweep cell).
    pub fn subtree(&self, index: u64) -> SeedTree {
        let mut s = splitmix64(self.master ^ 0x2545f4914f6cdd1d);
        s = splitmix64(s ^ index);
        SeedTree { master: s }
    }

    /// Derives the deterministic stream for a `(role, index)` path.
    pub fn derive_stream(&self, path: &[(Role, u64)]) -> Stream {
        let mut s = self.master;
        for &(role, index) in path {
            s = splitmix64(s ^ role.tag());
            s = splitmix64(s ^ index);
        }
        ChaCha8Rng::seed_from_u64(s)
    }

    /// Circuit stream: `mix(master, "circuit", c)`.
    pub fn circuit_stream(&self, c: u64) -> Stream {
        self.derive_stream(&[(Role::Circuit, c)])
    }

    /// Trajectory stream: `mix(master, "traj", c, tau)`.
    pub fn trajectory_stream(&self, c: u64, tau: u64) -> Stream {
        self.derive_stream(&[(Role::Trajectory, c), (Role::Trajectory, tau)])
    }

    /// Shot stream: `mix(master, "shot", c, tau, s)`.
    pub fn shot_stream(&self, c: u64, tau: u64, s: u64) -> Stream {
        self.derive_stream(&[
            (Role::Shot, c),
            (Role::Shot, tau),
            (Role::Shot, s),
        ])
    }
}

/// Dense 4x4 complex matrix, row-major, acting on the 2-qubit basis
/// `|00>, |01>, |10>, |11>`.
#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct Mat4(pub [[Complex64; 4]; 4]);

impl Mat4 {
    pub fn identity() -> Self {
        let mut m = [[Complex64::new(0.0, 0.0); 4]; 4];
        for (i, row) in m.iter_mut().enumerate() {
            row[i] = Complex64::new(1.0, 0.0);
        }
        Mat4(m)
    }

    pub fn swap() -> Self {
        let z = Complex64::new(0.0, 0.0);
        let o = Complex64::new(1.0, 0.0);
        Mat4([[o, z, z, z], [z, z, o, z], [z, o, z, z], [z, z, z, o]])
    }

    /// Max-norm deviation of `U^dagger U` from the identity.
    pub fn unitarity_defect(&self) -> f64 {
        let mut worst = 0.0f64;
        for i in 0..4 {
            for j in 0..4 {
                let mut s = Complex64::new(0.0, 0.0);
                for k in 0..4 {
                    s += self.0[k][i].conj() * self.0[k][j];
                }
                let target = if i == j { 1.0 } else { 0.0 };
                worst = worst.max((s - target).norm());
            }
        }
        worst
    }

    pub fn check_unitary(&self, tol: f64) -> Result<()> {
        let d = self.unitarity_defect();
        if d < tol {
            Ok(())
        } else {
            Err(Error::NonUnitary(d))
        }
    }
}

/// A sampled scrambler gate.
#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
pub enum GateSpec {
    /// 2-qubit Haar-random unitary.
    Haar2Q(Mat4),
    /// Uniform permutation of the 8 states of three bits.
    Perm8([u8; 8]),
    /// `1 (+) U(3)` block unitary: identity on `|00>`, Haar on the rest.
    Block1U3(Mat4),
}

pub fn standard_normal(rng: &mut impl Rng) -> f64 {
    // Box-Muller; two uniforms per deviate keeps the draw count fixed.
    let u1: f64 = rng.gen_range(f64::MIN_POSITIVE..1.0);
    let u2: f64 = rng.gen::<f64>();
    (-2.0 * u1.ln()).sqrt() * (2.0 * std::f64::consts::PI * u2).cos()
}

/// Haar-random unitary of dimension `dim <= 4` via the Ginibre + QR recipe:
/// complex standard-normal matrix, modified Gram-Schmidt orthonormalization.
/// MGS produces a triangular factor with positive real diagonal, which makes
/// the factorization (and hence the sample) unique.
fn haar_unitary(rng: &mut impl Rng, dim: usize) -> [[Complex64; 4]; 4] {
    debug_assert!(dim <= 4);
    let mut g = [[Complex64::new(0.0, 0.0); 4]; 4];
    for row in g.iter_mut().take(dim) {
        for entry in row.iter_mut().take(dim) {
            *entry = Complex64::new(standard_normal(rng), standard_normal(rng));
        }
    }
    // orthonormalize columns
    for j in 0..dim {
        for i in 0..j {
            let mut dot = Complex64::new(0.0, 0.0);
            for k in 0..dim {
                dot += g[k][i].conj() * g[k][j];
            }
            for k in 0..dim {
                let qi = g[k][i];
                g[k][j] -= dot * qi;
            }
        }
        let mut norm = 0.0;
        for k in 0..dim {
            norm += g[k][j].norm_sqr();
        }
        let norm = norm.sqrt();
        for k in 0..dim {
            g[k][j] /= norm;
        }
    }
    g
}

/// Samples a 2-qubit Haar-random unitary.
pub fn sample_haar_2q(stream: &mut Stream) -> GateSpec {
    GateSpec::Haar2Q(Mat4(haar_unitary(stream, 4)))
}

/// Samples a uniform permutation of `{0..7}` via Fisher-Yates.
pub fn sample_perm8(stream: &mut Stream) -> GateSpec {
    let mut p: [u8; 8] = [0, 1, 2, 3, 4, 5, 6, 7];
    for i in (1..8usize).rev() {
        let j = (stream.next_u64() % (i as u64 + 1)) as usize;
        p.swap(i, j);
    }
    GateSpec::Perm8(p)
}

/// Samples a `1 (+) U(3)` gate: exact identity on `|00>`, Haar-random on
/// `span{|01>, |10>, |11>}`.
pub fn sample_block_1u3(stream: &mut Stream) -> GateSpec {
    let h = haar_unitary(stream, 3);
    let z = Complex64::new(0.0, 0.0);
    let mut m = [[z; 4]; 4];
    m[0][0] = Complex64::new(1.0, 0.0);
    for i in 0..3 {
        for j in 0..3 {
            m[i + 1][j + 1] = h[i][j];
        }
    }
    GateSpec::Block1U3(Mat4(m))
}
