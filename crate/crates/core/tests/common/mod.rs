//! Independent oracles shared by the integration tests.
#![allow(dead_code)]

use std::cmp::Ordering;
use std::ops::{Add, Div, Mul, Sub};

use num_bigint::{BigInt, Sign};
use num_traits::{One, Signed, ToPrimitive, Zero};

use vrql_core::{QFunction, TabularMdp};

/// Fractional bits carried by [`Fixed`].
pub const FRAC_BITS: u64 = 384;

/// Binary fixed-point real `n / 2^FRAC_BITS` backed by a big integer.
#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord)]
pub struct Fixed(pub BigInt);

impl Fixed {
    /// Exact conversion of a finite `f64`.
    pub fn from_f64(x: f64) -> Fixed {
        assert!(x.is_finite());
        if x == 0.0 {
            return Fixed(BigInt::zero());
        }
        let bits = x.to_bits();
        let sign = if bits >> 63 == 1 { Sign::Minus } else { Sign::Plus };
        let exp = ((bits >> 52) & 0x7ff) as i64;
        let frac = bits & ((1u64 << 52) - 1);
        let (mant, exp) = if exp == 0 { (frac, -1074) } else { (frac | (1u64 << 52), exp - 1075) };
        let mag = BigInt::from(mant);
        let shift = exp + FRAC_BITS as i64;
        let mag = if shift >= 0 { mag << shift as u64 } else { mag >> (-shift) as u64 };
        Fixed(if sign == Sign::Minus { -mag } else { mag })
    }

    pub fn int(i: i64) -> Fixed {
        Fixed(BigInt::from(i) << FRAC_BITS)
    }

    pub fn one() -> Fixed {
        Fixed(BigInt::one() << FRAC_BITS)
    }

    pub fn is_positive(&self) -> bool {
        self.0.is_positive()
    }

    pub fn max(self, other: Fixed) -> Fixed {
        if self >= other {
            self
        } else {
            other
        }
    }

    pub fn powi(&self, n: u32) -> Fixed {
        (0..n).fold(Fixed::one(), |acc, _| &acc * self)
    }

    /// Natural logarithm via binary range reduction and the atanh series.
    pub fn ln(&self) -> Fixed {
        assert!(self.is_positive(), "ln of a nonpositive value");
        let bits = self.0.bits() as i64;
        let k = bits - 1 - FRAC_BITS as i64;
        let m = if k >= 0 { Fixed(&self.0 >> k as u64) } else { Fixed(&self.0 << (-k) as u64) };
        let y = &(&m - &Fixed::one()) / &(&m + &Fixed::one());
        &atanh2(&y) + &(&Fixed::int(k) * &ln2())
    }

    /// Smallest integer not below `self`.
    pub fn ceil(&self) -> BigInt {
        let floor = &self.0 >> FRAC_BITS;
        if (&floor << FRAC_BITS) == self.0 {
            floor
        } else {
            floor + 1
        }
    }

    pub fn to_f64(&self) -> f64 {
        let int = &self.0 >> (FRAC_BITS - 64);
        int.to_f64().unwrap() / 2f64.powi(64)
    }
}

/// `2 atanh(y)` for `|y| < 1`.
fn atanh2(y: &Fixed) -> Fixed {
    let y2 = y * y;
    let mut power = y.clone();
    let mut sum = Fixed(BigInt::zero());
    let mut j = 1i64;
    while !power.0.is_zero() {
        sum = &sum + &Fixed(&power.0 / j);
        power = &power * &y2;
        j += 2;
    }
    &sum + &sum
}

fn ln2() -> Fixed {
    atanh2(&(&Fixed::one() / &Fixed::int(3)))
}

impl Add for &Fixed {
    type Output = Fixed;
    fn add(self, rhs: &Fixed) -> Fixed {
        Fixed(&self.0 + &rhs.0)
    }
}

impl Sub for &Fixed {
    type Output = Fixed;
    fn sub(self, rhs: &Fixed) -> Fixed {
        Fixed(&self.0 - &rhs.0)
    }
}

impl Mul for &Fixed {
    type Output = Fixed;
    fn mul(self, rhs: &Fixed) -> Fixed {
        Fixed((&self.0 * &rhs.0) >> FRAC_BITS)
    }
}

impl Div for &Fixed {
    type Output = Fixed;
    fn div(self, rhs: &Fixed) -> Fixed {
        Fixed((&self.0 << FRAC_BITS) / &rhs.0)
    }
}

fn clamped_ln(x: &Fixed) -> Fixed {
    x.ln().max(Fixed::one())
}

fn f(x: f64) -> Fixed {
    Fixed::from_f64(x)
}

fn to_u64(n: BigInt) -> u64 {
    n.to_u64().expect("count fits in u64")
}

/// High-precision epoch length.
pub fn oracle_epoch_length(gamma: f64, delta: f64, pairs: usize, epochs: usize, c1: f64) -> u64 {
    let h = &Fixed::one() - &f(gamma);
    let arg = &(&Fixed::int(8 * epochs as i64) * &Fixed::int(pairs as i64)) / &(&h * &f(delta));
    to_u64((&(&f(c1) * &clamped_ln(&arg)) / &h.powi(3)).ceil())
}

/// High-precision recentering size for 1-based `epoch`.
pub fn oracle_recenter_size(gamma: f64, delta: f64, pairs: usize, epochs: usize, epoch: u32, c2: f64, base: f64) -> u64 {
    let h = &Fixed::one() - &f(gamma);
    let arg = &(&Fixed::int(8 * epochs as i64) * &Fixed::int(pairs as i64)) / &f(delta);
    let b = f(base);
    let growth = (&b * &b).powi(epoch);
    to_u64((&(&(&f(c2) * &growth) * &clamped_ln(&arg)) / &(&h * &h)).ceil())
}

/// Smallest `M >= 1` with `b0 <= eps * base^M`, in exact arithmetic.
pub fn oracle_epochs_needed(eps: f64, b0: f64, base: f64) -> usize {
    let (eps, b0, base) = (f(eps), f(b0), f(base));
    let mut m = 1;
    let mut scale = base.clone();
    while b0 > &eps * &scale {
        m += 1;
        scale = &scale * &base;
    }
    m
}

pub fn oracle_corollary(gamma: f64, delta: f64, pairs: usize, eps: f64, b0: f64, c: f64, c_prime: f64) -> Fixed {
    let h = &Fixed::one() - &f(gamma);
    let m = oracle_epochs_needed(eps, b0, 2.0) as i64;
    let md = &Fixed::int(8 * m) * &Fixed::int(pairs as i64);
    let ratio = &f(b0) / &f(eps);
    let first = &(&(&f(c) * &clamped_ln(&(&md / &(&h * &f(delta))))) / &h.powi(3)) * &clamped_ln(&ratio);
    let second = &(&(&(&f(c_prime) * &ratio) * &ratio) * &clamped_ln(&(&md / &f(delta)))) / &(&h * &h);
    &first + &second
}

fn oracle_uniform_core(gamma: f64, delta: f64, pairs: usize, eps: f64, r_max: f64, c: f64) -> Fixed {
    let h = &Fixed::one() - &f(gamma);
    let r2 = &f(r_max) * &f(r_max);
    let e2 = &f(eps) * &f(eps);
    let l1 = clamped_ln(&(&Fixed::int(pairs as i64) / &(&h * &f(delta))));
    let l2 = clamped_ln(&(&Fixed::one() / &(&h * &f(eps))));
    &(&(&f(c) * &(&r2 / &e2)) * &l1) * &l2
}

pub fn oracle_worst_case(gamma: f64, delta: f64, pairs: usize, eps: f64, r_max: f64, c: f64) -> Fixed {
    let h = &Fixed::one() - &f(gamma);
    &oracle_uniform_core(gamma, delta, pairs, eps, r_max, c) / &h.powi(4)
}

pub fn oracle_t_max(gamma: f64, delta: f64, pairs: usize, eps: f64, r_max: f64, c: f64) -> Fixed {
    let h = &Fixed::one() - &f(gamma);
    &oracle_uniform_core(gamma, delta, pairs, eps, r_max, c) / &h.powi(3)
}

pub fn ceil_u64(x: &Fixed) -> u64 {
    to_u64(x.ceil())
}

/// `|a - b| <= tol` relative to the larger magnitude.
pub fn close_rel(a: &Fixed, b: &Fixed, rel_bits: u64) -> bool {
    let diff = (&a.0 - &b.0).abs();
    let scale = a.0.abs().max(b.0.abs());
    (diff << rel_bits) <= scale
}

/// Bellman operator evaluated with explicit loops over `(s, a, s', a')`.
pub fn bellman_triple_loop(mdp: &TabularMdp, theta: &QFunction) -> Vec<f64> {
    let (ns, na) = (mdp.num_states(), mdp.num_actions());
    let mut out = vec![0.0; ns * na];
    for s in 0..ns {
        for a in 0..na {
            let mut expect = 0.0;
            for next in 0..ns {
                let mut best = f64::NEG_INFINITY;
                for b in 0..na {
                    best = best.max(theta.get(next, b));
                }
                expect += mdp.kernel()[(s * na + a) * ns + next] * best;
            }
            out[s * na + a] = mdp.reward(s, a) + mdp.discount() * expect;
        }
    }
    out
}

/// `Q^pi` by summing `sum_t gamma^t (P^pi)^t r` until the tail is below `tol`.
pub fn policy_q_power_series(mdp: &TabularMdp, actions: &[usize], tol: f64) -> Vec<f64> {
    let (ns, na) = (mdp.num_states(), mdp.num_actions());
    let d = ns * na;
    let gamma = mdp.discount();
    let mut term: Vec<f64> = mdp.rewards().to_vec();
    let mut total = term.clone();
    let mut scale = 1.0;
    let r_max = term.iter().fold(0.0f64, |m, r| m.max(r.abs()));
    while r_max * scale / (1.0 - gamma) > tol {
        let mut next = vec![0.0; d];
        for s in 0..ns {
            for a in 0..na {
                let row = mdp.transition_row(s, a);
                next[s * na + a] = gamma * (0..ns).map(|y| row[y] * term[y * na + actions[y]]).sum::<f64>();
            }
        }
        term = next;
        scale *= gamma;
        for (t, x) in total.iter_mut().zip(&term) {
            *t += x;
        }
    }
    total
}

pub fn max_abs_diff(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)
}

pub fn cmp_f64(a: &f64, b: &f64) -> Ordering {
    a.total_cmp(b)
}
