//! Closed-form quantities and small dedicated solvers: guaranteed-sweep
//! expectation, random-opening escape rates, sine-profile exit times, and
//! the Fibonacci/Lucas dwell times on the 2xm grid.

use num::bigint::BigInt;
use num::{One, Zero};

use crate::numerics::{rat, rat_int, Rational};
use crate::{Error, Result};

/// Which integer sequence backs the 2xm dwell-time formula.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SequenceKind {
    /// Used when m is even: 0, 1, 1, 2, 3, 5, ...
    Fibonacci,
    /// Used when m is odd: 2, 1, 3, 4, 7, 11, ...
    Lucas,
}

impl SequenceKind {
    /// Sequence matching the parity of `m`.
    pub fn for_width(m: usize) -> Self {
        if m % 2 == 0 {
            SequenceKind::Fibonacci
        } else {
            SequenceKind::Lucas
        }
    }
}

/// Expected duration of the guaranteed sweep 2,3,...,n-1,n-1,...,3,2 on a
/// closed line, by the closed form (2n^3 - 5n^2 + 3n + 2) / (2n(n-1)).
///
/// The derivation assumes odd n; it matches the exact sweep evaluation for
/// n = 3 and 5 but drifts slightly for even n and for n >= 7.
pub fn e_save(n: usize) -> Result<Rational> {
    if n < 3 {
        return Err(Error::InvalidArgument(format!("e_save needs n >= 3, got {n}")));
    }
    let n = n as i64;
    let numer = 2 * n * n * n - 5 * n * n + 3 * n + 2;
    Ok(rat(numer, 2 * n * (n - 1)))
}

/// Expected steps to find the cat when opening boxes uniformly at random on
/// a closed graph of n boxes: exactly n.
pub fn e_random_closed(n: usize) -> Rational {
    rat_int(n as i64)
}

/// Partial sum of the geometric series behind [`e_random_closed`]:
/// sum_{i<=k} i (1/n) (1 - 1/n)^(i-1).
pub fn e_random_partial_sum(n: usize, k: usize) -> f64 {
    let p = 1.0 / n as f64;
    let q = 1.0 - p;
    (1..=k).map(|i| i as f64 * p * q.powi(i as i32 - 1)).sum()
}

/// Expected steps before a lone cat starting in box i leaves an exit line of
/// n boxes: i (n - i + 1).
pub fn e_exit(i: usize, n: usize) -> Result<u64> {
    if i < 1 || i > n {
        return Err(Error::InvalidArgument(format!("box {i} not in 1..={n}")));
    }
    Ok((i * (n - i + 1)) as u64)
}

/// Average of [`e_exit`] over all starting boxes: (n+1)(n+2)/6.
pub fn e_exit_avg(n: usize) -> Rational {
    let n = n as i64;
    rat((n + 1) * (n + 2), 6)
}

/// Expected escape time from the stationary sine profile: 1/(1 - cos(pi/(n+1))).
pub fn e_sin(n: usize) -> f64 {
    let theta = std::f64::consts::PI / (n as f64 + 1.0);
    1.0 / (1.0 - theta.cos())
}

/// The self-reproducing initial profile tan(pi/(2n+2)) sin(i pi/(n+1));
/// sums to 1 and shrinks by cos(pi/(n+1)) per move.
pub fn sine_profile(n: usize) -> Vec<f64> {
    let theta = std::f64::consts::PI / (n as f64 + 1.0);
    let amp = (theta / 2.0).tan();
    (1..=n).map(|i| amp * (theta * i as f64).sin()).collect()
}

/// Escape rate and expected duration when the player opens boxes uniformly
/// at random on an exit line of n boxes.
///
/// Solves the full n-equation system exactly. The system is tridiagonal
/// (box i couples only to its neighbours), so a forward elimination sweep
/// is used instead of dense elimination; the symmetric ceil(n/2) reduction
/// is a further possible optimization that is deliberately not taken.
pub fn random_open_solve(n: usize) -> Result<(Rational, Rational)> {
    if n < 2 {
        return Err(Error::InvalidArgument(format!(
            "random opening needs n >= 2, got {n}"
        )));
    }
    // E(i) = ((n-1)/n) * (E(i-1) + E(i+1)) / 2 with E(0) = E(n+1) = 1:
    // scaled to 2n E(i) - (n-1) E(i-1) - (n-1) E(i+1) = 0 inside and
    // boundary rows absorbing the constant.
    let c = rat_int(n as i64 - 1);
    let diag = rat_int(2 * n as i64);
    // Thomas elimination on the tridiagonal system
    let mut main = vec![diag.clone(); n];
    let mut rhs = vec![Rational::zero(); n];
    rhs[0] = c.clone();
    rhs[n - 1] = c.clone();
    for i in 1..n {
        // eliminate the subdiagonal -(n-1) using row i-1
        let f = &c / &main[i - 1];
        let sup_correction = &f * &c; // -(n-1) * -(n-1) / pivot
        main[i] -= &sup_correction * rat_int(1);
        let add = &f * &rhs[i - 1];
        rhs[i] += add;
    }
    let mut e = vec![Rational::zero(); n];
    e[n - 1] = &rhs[n - 1] / &main[n - 1];
    for i in (0..n - 1).rev() {
        e[i] = (&rhs[i] + &c * &e[i + 1]) / &main[i];
    }
    let escape = e.iter().fold(Rational::zero(), |s, x| s + x) / rat_int(n as i64);
    let duration = rat_int(n as i64) * (Rational::one() - &escape);
    Ok((escape, duration))
}

/// Decay-factor approximation of the random-opening duration:
/// 1/(1 - ((n-1)/n) cos(pi/(n+1))). Overestimates the true value.
pub fn e_approx(n: usize) -> f64 {
    let theta = std::f64::consts::PI / (n as f64 + 1.0);
    let n = n as f64;
    1.0 / (1.0 - (n - 1.0) / n * theta.cos())
}

/// Fibonacci or Lucas numbers extended to negative indices by
/// a_{k-2} = a_k - a_{k-1}.
pub fn fib_lucas_ext(kind: SequenceKind, k: i64) -> BigInt {
    let (a0, a1) = match kind {
        SequenceKind::Fibonacci => (BigInt::zero(), BigInt::one()),
        SequenceKind::Lucas => (BigInt::from(2), BigInt::one()),
    };
    if k >= 0 {
        let (mut a, mut b) = (a0, a1);
        for _ in 0..k {
            let next = &a + &b;
            a = b;
            b = next;
        }
        a
    } else {
        let (mut a, mut b) = (a0, a1); // a = a_0, b = a_1
        for _ in 0..(-k) {
            let prev = &b - &a; // a_{k-1} = a_{k+1} - a_k
            b = a;
            a = prev;
        }
        a
    }
}

fn seq(m: usize, k: i64) -> Rational {
    Rational::from_integer(fib_lucas_ext(SequenceKind::for_width(m), k))
}

/// Expected steps before a lone cat starting in column i leaves the 2xm
/// all-exits grid: 4 (2 a_m - 2 a_{m-2i} - a_{m-2} + a_{m-2-2i}) / a_{m+1},
/// Fibonacci numbers for even m, Lucas numbers for odd m. Columns past the
/// middle fold back by the left-right symmetry.
pub fn e2d(i: usize, m: usize) -> Result<Rational> {
    if m < 2 {
        return Err(Error::InvalidArgument(format!("e2d needs m >= 2, got {m}")));
    }
    if i < 1 || i > m {
        return Err(Error::InvalidArgument(format!("column {i} not in 1..={m}")));
    }
    let i = i.min(m + 1 - i) as i64;
    let m_i = m as i64;
    let numer = rat_int(2) * seq(m, m_i) - rat_int(2) * seq(m, m_i - 2 * i) - seq(m, m_i - 2)
        + seq(m, m_i - 2 - 2 * i);
    Ok(rat_int(4) * numer / seq(m, m_i + 1))
}

/// Average of [`e2d`] over all starting boxes:
/// (4/a_{m+1}) (2(m-1)/m a_m - a_{m-2}).
pub fn e2d_avg(m: usize) -> Result<Rational> {
    if m < 2 {
        return Err(Error::InvalidArgument(format!(
            "e2d_avg needs m >= 2, got {m}"
        )));
    }
    let m_i = m as i64;
    let inner = rat(2 * (m_i - 1), m_i) * seq(m, m_i) - seq(m, m_i - 2);
    Ok(rat_int(4) * inner / seq(m, m_i + 1))
}

#[cfg(test)]
mod tests {
    use super::*;
    use num::ToPrimitive;
    use crate::evaluate::{evaluate_strategy, Value};
    use crate::numerics::{solve_rational_linear, RationalMatrix};
    use crate::strategy::sweep_strategy;
    use crate::topology::{move_kernel, Dest, Topology};

    #[test]
    fn e_save_values() {
        assert_eq!(e_save(5).unwrap(), rat(71, 20));
        assert_eq!(e_save(3).unwrap(), rat(5, 3));
        let v = e_save(1001).unwrap().to_f64().unwrap();
        assert!((v - 999.495).abs() < 5e-3, "e_save(1001) = {v}");
        assert!(e_save(2).is_err());
    }

    #[test]
    fn e_save_vs_exact_sweep_evaluation() {
        // the closed form is derived for odd n: it matches the exact sweep
        // evaluation at n = 3 and 5, and drifts at n = 4 and 7
        for n in [3usize, 5] {
            let t = Topology::parse(&format!("line:{n}")).unwrap();
            let r = evaluate_strategy(&t, &sweep_strategy(n).unwrap()).unwrap();
            assert_eq!(r.duration, Value::Exact(e_save(n).unwrap()), "n = {n}");
        }
        let t = Topology::parse("line:4").unwrap();
        let r = evaluate_strategy(&t, &sweep_strategy(4).unwrap()).unwrap();
        assert_eq!(r.duration, Value::Exact(rat(39, 16)));
        assert_eq!(e_save(4).unwrap(), rat(31, 12)); // formula drifts here

        let t = Topology::parse("line:7").unwrap();
        let r = evaluate_strategy(&t, &sweep_strategy(7).unwrap()).unwrap();
        assert_eq!(r.duration, Value::Exact(rat(9897, 1792)));
        assert_eq!(e_save(7).unwrap(), rat(116, 21)); // and here
    }

    #[test]
    fn e_random_examples() {
        assert_eq!(e_random_closed(7), rat_int(7));
        assert_eq!(e_random_closed(1), rat_int(1));
        let partial = e_random_partial_sum(3, 200);
        assert!((partial - 3.0).abs() < 1e-9, "partial sum {partial}");
    }

    #[test]
    fn e_exit_examples() {
        assert_eq!(e_exit(2, 5).unwrap(), 8);
        assert_eq!(e_exit(1, 1).unwrap(), 1);
        assert_eq!(e_exit_avg(4), rat_int(5));
        assert!(e_exit(6, 5).is_err());
    }

    #[test]
    fn e_sin_examples() {
        assert!((e_sin(11) - 29.35).abs() < 5e-3);
        assert!((e_sin(2) - 2.0).abs() < 1e-12);
        let p = sine_profile(3);
        assert!((p[0] - p[2]).abs() < 1e-15);
        let total: f64 = sine_profile(11).iter().sum();
        assert!((total - 1.0).abs() < 1e-12);
        // 20-step survival for n = 11 is about one half
        let survival = (std::f64::consts::PI / 12.0).cos().powi(20);
        assert!((survival - 0.50).abs() < 5e-3);
    }

    #[test]
    fn random_open_exact_rows() {
        assert_eq!(random_open_solve(2).unwrap(), (rat(1, 3), rat(4, 3)));
        assert_eq!(random_open_solve(3).unwrap(), (rat(8, 21), rat(13, 7)));
        assert_eq!(random_open_solve(4).unwrap(), (rat(12, 31), rat(76, 31)));
        assert_eq!(random_open_solve(5).unwrap(), (rat(124, 325), rat(201, 65)));
        let (esc, dur) = random_open_solve(1000).unwrap();
        assert!((esc.to_f64().unwrap() - 0.044).abs() < 5e-3);
        assert!((dur.to_f64().unwrap() - 956.2).abs() < 5e-3);
    }

    #[test]
    fn random_open_matches_dense_solver() {
        // cross-check the tridiagonal sweep against dense elimination
        for n in 2..=12usize {
            let ni = n as i64;
            let mut a = RationalMatrix::zero(n, n);
            let mut b = vec![Rational::zero(); n];
            for i in 0..n {
                a[(i, i)] = rat_int(2 * ni);
                if i > 0 {
                    a[(i, i - 1)] = rat_int(-(ni - 1));
                }
                if i + 1 < n {
                    a[(i, i + 1)] = rat_int(-(ni - 1));
                }
            }
            b[0] = rat_int(ni - 1);
            b[n - 1] = rat_int(ni - 1);
            let e = solve_rational_linear(&a, &b).unwrap();
            let escape =
                e.iter().fold(Rational::zero(), |s, x| s + x) / rat_int(ni);
            assert_eq!(random_open_solve(n).unwrap().0, escape, "n = {n}");
        }
    }

    #[test]
    fn escape_plus_scaled_duration_is_one() {
        for n in 2..=50usize {
            let (esc, dur) = random_open_solve(n).unwrap();
            assert!(
                (esc + dur / rat_int(n as i64)).is_one(),
                "identity fails at n = {n}"
            );
        }
    }

    #[test]
    fn e_approx_overestimates() {
        assert!((e_approx(1000) - 995.0).abs() < 1.0);
        assert!((e_approx(2) - 4.0 / 3.0).abs() < 1e-12);
        for n in 2..=20usize {
            let (_, dur) = random_open_solve(n).unwrap();
            assert!(
                e_approx(n) >= dur.to_f64().unwrap(),
                "approximation not above the true value at n = {n}"
            );
        }
    }

    #[test]
    fn sequence_extension() {
        use SequenceKind::*;
        assert_eq!(fib_lucas_ext(Fibonacci, -2), BigInt::from(-1));
        assert_eq!(fib_lucas_ext(Fibonacci, -1), BigInt::from(1));
        assert_eq!(fib_lucas_ext(Lucas, -3), BigInt::from(-4));
        assert_eq!(fib_lucas_ext(Lucas, -2), BigInt::from(3));
        assert_eq!(fib_lucas_ext(Lucas, 4), BigInt::from(7));
        assert_eq!(fib_lucas_ext(Fibonacci, 10), BigInt::from(55));
        // the backward recurrence stays consistent with the forward one
        for kind in [Fibonacci, Lucas] {
            for k in -6..8i64 {
                let a = fib_lucas_ext(kind, k);
                let b = fib_lucas_ext(kind, k + 1);
                let c = fib_lucas_ext(kind, k + 2);
                assert_eq!(c, a + b);
            }
        }
    }

    #[test]
    fn e2d_examples() {
        assert_eq!(e2d(1, 2).unwrap(), rat_int(2));
        assert_eq!(e2d(1, 3).unwrap(), rat(16, 7));
        assert_eq!(e2d(2, 3).unwrap(), rat(20, 7));
        assert_eq!(e2d_avg(7).unwrap(), rat(1084, 329));
        // symmetric columns agree
        assert_eq!(e2d(3, 3).unwrap(), e2d(1, 3).unwrap());
        assert!(e2d(4, 3).is_err());
        // averaging e2d by hand matches the closed form
        for m in 2..=12usize {
            let mean = (1..=m)
                .map(|i| e2d(i, m).unwrap())
                .fold(Rational::zero(), |s, x| s + x)
                / rat_int(m as i64);
            assert_eq!(mean, e2d_avg(m).unwrap(), "m = {m}");
        }
    }

    #[test]
    fn e2d_recurrence_holds() {
        // 3 E(i) - E(i-1) - E(i+1) = 4 for interior columns, with the
        // boundary convention E(0) = E(m+1) = 0 replaced by actual interior
        // indices only
        for m in 2..=12usize {
            for i in 2..m {
                let lhs = rat_int(3) * e2d(i, m).unwrap()
                    - e2d(i - 1, m).unwrap()
                    - e2d(i + 1, m).unwrap();
                assert_eq!(lhs, rat_int(4), "m = {m}, i = {i}");
            }
        }
    }

    #[test]
    fn e2d_avg_increases_towards_four() {
        let mut prev = Rational::zero();
        for m in 2..=12usize {
            let v = e2d_avg(m).unwrap();
            assert!(v > prev, "not increasing at m = {m}");
            assert!(v < rat_int(4), "not below 4 at m = {m}");
            prev = v;
        }
        assert_eq!(e2d_avg(12).unwrap(), rat(836, 233));
    }

    /// Independent dwell-time oracle: expected exit steps on the 2xm
    /// all-exits grid by solving (I - Q) x = 1 over the move kernel.
    fn markov_dwell_times(m: usize) -> Vec<Rational> {
        let t = Topology::parse(&format!("grid:2x{m}:exits")).unwrap();
        let kernel = move_kernel(&t);
        let n = t.boxes();
        let mut a = RationalMatrix::zero(n, n);
        for i in 0..n {
            a[(i, i)] = rat_int(1);
            for (dest, p) in &kernel[i] {
                if let Dest::Box(b) = dest {
                    a[(i, b - 1)] -= p.clone();
                }
            }
        }
        let ones = vec![Rational::one(); n];
        solve_rational_linear(&a, &ones).unwrap()
    }

    #[test]
    fn e2d_matches_markov_oracle() {
        for m in 2..=8usize {
            let x = markov_dwell_times(m);
            for i in 1..=m {
                assert_eq!(x[i - 1], e2d(i, m).unwrap(), "m = {m}, column {i}");
                // lower row mirrors the upper row
                assert_eq!(x[m + i - 1], x[i - 1]);
            }
            let mean = x.iter().fold(Rational::zero(), |s, v| s + v)
                / rat_int(2 * m as i64);
            assert_eq!(mean, e2d_avg(m).unwrap());
        }
    }
}
