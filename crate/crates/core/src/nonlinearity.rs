//! Smooth cutoff and the two nonlinearity families.
//!
//! The cutoff is the exponential blend
//!
//! ```text
//! eta(t) = exp(-1/t) for t > 0, 0 otherwise
//! w(s)   = eta(s - 1) / (eta(s - 1) + eta(2 - s))
//! chi(s) = (s - 1) w(s)
//! ```
//!
//! so `chi` vanishes on `(-inf, 1]`, equals `s - 1` on `[2, inf)` and is
//! smooth in between. The potentials are `F(s) = chi^3 - lambda chi^4` in ramp
//! mode and `2 s + chi^3 - lambda chi^4` in zero mode; all derivatives below
//! are the exact analytic ones.

use serde::{Deserialize, Serialize};
use std::fmt;
use std::str::FromStr;

/// Tag recorded in reports so runs with different cutoffs are never mixed.
pub const CHI_TAG: &str = "exp-blend(t0=1,t1=2)";

const ETA_FLOOR: f64 = 1e-12;

/// Which boundary-value family is being solved.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Mode {
    /// `u = 0` on the bottom wall, `u = 1` on the top wall; trivial profile `t`.
    Ramp,
    /// `u = 0` on both walls with the constant forcing `2`; trivial profile `t(1-t)`.
    Zero,
}

impl Mode {
    /// Boundary values `(psi(0), psi(1))`.
    pub fn boundary(self) -> (f64, f64) {
        match self {
            Mode::Ramp => (0.0, 1.0),
            Mode::Zero => (0.0, 0.0),
        }
    }

    /// Top-wall value of the stream function.
    pub fn top_value(self) -> f64 {
        self.boundary().1
    }

    /// The trivial solution of the profile equation, valid for every lambda.
    pub fn trivial(self, t: f64) -> f64 {
        match self {
            Mode::Ramp => t,
            Mode::Zero => t * (1.0 - t),
        }
    }

    /// Continuum energy of the trivial profile: `1/2` or `-1/6`.
    pub fn threshold(self) -> f64 {
        match self {
            Mode::Ramp => 0.5,
            Mode::Zero => -1.0 / 6.0,
        }
    }

    /// Direction used to build the amplified multistart seeds `phi + mu w`.
    pub fn seed_direction(self, t: f64) -> f64 {
        match self {
            Mode::Ramp => (std::f64::consts::PI * t).sin(),
            Mode::Zero => t * (1.0 - t),
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Mode::Ramp => "ramp",
            Mode::Zero => "zero",
        }
    }
}

impl fmt::Display for Mode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Mode {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "ramp" | "c1" | "rampc1" => Ok(Mode::Ramp),
            "zero" | "c0" | "zeroc0" => Ok(Mode::Zero),
            other => Err(format!("unknown mode `{other}` (expected `ramp` or `zero`)")),
        }
    }
}

/// Mode plus the coupling constant `lambda >= 0`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ProblemSpec {
    pub mode: Mode,
    pub lambda: f64,
}

/// `chi` together with its first two derivatives at one point.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ChiJet {
    pub value: f64,
    pub d1: f64,
    pub d2: f64,
}

fn eta_jet(t: f64) -> (f64, f64, f64) {
    if t <= ETA_FLOOR {
        return (0.0, 0.0, 0.0);
    }
    let e = (-1.0 / t).exp();
    let inv = 1.0 / t;
    let inv2 = inv * inv;
    (e, e * inv2, e * (inv2 * inv2 - 2.0 * inv2 * inv))
}

/// Evaluates `chi`, `chi'` and `chi''` at `s`.
pub fn chi_jet(s: f64) -> ChiJet {
    if s <= 1.0 {
        return ChiJet { value: 0.0, d1: 0.0, d2: 0.0 };
    }
    if s >= 2.0 {
        return ChiJet { value: s - 1.0, d1: 1.0, d2: 0.0 };
    }
    let (a, da, dda) = eta_jet(s - 1.0);
    let (b, db0, ddb) = eta_jet(2.0 - s);
    let db = -db0;
    let sum = a + b;
    let dsum = da + db;
    let w = a / sum;
    // w' = (a' b - a b') / S^2
    let num = da * b - a * db;
    let sum2 = sum * sum;
    let dw = num / sum2;
    let dnum = dda * b - a * ddb;
    let ddw = dnum / sum2 - 2.0 * num * dsum / (sum2 * sum);
    let x = s - 1.0;
    ChiJet {
        value: x * w,
        d1: w + x * dw,
        d2: 2.0 * dw + x * ddw,
    }
}

pub fn chi(s: f64) -> f64 {
    chi_jet(s).value
}

pub fn chi_prime(s: f64) -> f64 {
    chi_jet(s).d1
}

impl ProblemSpec {
    pub fn new(mode: Mode, lambda: f64) -> Self {
        Self { mode, lambda }
    }

    /// Total potential `F` (including the linear forcing in zero mode).
    #[allow(non_snake_case)]
    pub fn F(&self, s: f64) -> f64 {
        self.potential_jet(s).0
    }

    /// `f = F'`.
    pub fn f(&self, s: f64) -> f64 {
        self.f_and_prime(s).0
    }

    /// `f' = F''`.
    pub fn f_prime(&self, s: f64) -> f64 {
        self.f_and_prime(s).1
    }

    /// `(f(s), f'(s))` from a single cutoff evaluation.
    pub fn f_and_prime(&self, s: f64) -> (f64, f64) {
        let forcing = match self.mode {
            Mode::Ramp => 0.0,
            Mode::Zero => 2.0,
        };
        if s <= 1.0 {
            return (forcing, 0.0);
        }
        let j = chi_jet(s);
        let c = j.value;
        let c2 = c * c;
        let lam = self.lambda;
        let g = 3.0 * c2 - 4.0 * lam * c2 * c;
        let dg = 6.0 * c - 12.0 * lam * c2;
        (forcing + j.d1 * g, j.d2 * g + j.d1 * j.d1 * dg)
    }

    /// `(F(s), f(s), f'(s))` from a single cutoff evaluation.
    pub fn potential_jet(&self, s: f64) -> (f64, f64, f64) {
        let (lin, forcing) = match self.mode {
            Mode::Ramp => (0.0, 0.0),
            Mode::Zero => (2.0 * s, 2.0),
        };
        if s <= 1.0 {
            return (lin, forcing, 0.0);
        }
        let j = chi_jet(s);
        let c = j.value;
        let c2 = c * c;
        let lam = self.lambda;
        let g = 3.0 * c2 - 4.0 * lam * c2 * c;
        let dg = 6.0 * c - 12.0 * lam * c2;
        (
            lin + c2 * c - lam * c2 * c2,
            forcing + j.d1 * g,
            j.d2 * g + j.d1 * j.d1 * dg,
        )
    }

    /// Energy of the continuum trivial profile.
    pub fn threshold(&self) -> f64 {
        self.mode.threshold()
    }
}
