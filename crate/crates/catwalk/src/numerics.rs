//! Exact rational arithmetic, exact linear solving and numeric spectral
//! utilities.
//!
//! Rationals are `num::BigRational` (arbitrary precision, always reduced,
//! positive denominator). The linear solver runs fraction-free Bareiss
//! elimination on a denominator-cleared augmented matrix, so every
//! intermediate division is exact. Spectral routines work in f64: power
//! iteration for the dominant eigenpair, plus an exact characteristic
//! polynomial (Faddeev-LeVerrier) with bisection-based real root isolation
//! for the few cases where subdominant eigenvalues are needed.

use num::bigint::BigInt;
use num::rational::BigRational;
use num::{Integer, One, Signed, ToPrimitive, Zero};

use crate::{Error, Result};

/// Exact rational number used for all game probabilities and values.
pub type Rational = BigRational;

/// Rational from an integer pair. Panics on zero denominator.
pub fn rat(num: i64, den: i64) -> Rational {
    Rational::new(BigInt::from(num), BigInt::from(den))
}

/// Rational from an integer.
pub fn rat_int(n: i64) -> Rational {
    Rational::from_integer(BigInt::from(n))
}

/// Parses "p/q" or a plain integer "p".
pub fn parse_rational(text: &str) -> Result<Rational> {
    let text = text.trim();
    let parse_int = |s: &str| -> Result<BigInt> {
        s.trim()
            .parse::<BigInt>()
            .map_err(|_| Error::Parse(format!("invalid integer {s:?}")))
    };
    match text.split_once('/') {
        Some((p, q)) => {
            let den = parse_int(q)?;
            if den.is_zero() {
                return Err(Error::Parse("zero denominator".into()));
            }
            Ok(Rational::new(parse_int(p)?, den))
        }
        None => Ok(Rational::from_integer(parse_int(text)?)),
    }
}

/// Formats as "p/q", or "p" for integers.
pub fn format_rational(r: &Rational) -> String {
    if r.denom().is_one() {
        r.numer().to_string()
    } else {
        format!("{}/{}", r.numer(), r.denom())
    }
}

/// Decimal rendering with `places` digits after the point, rounded half away
/// from zero. Exact: works entirely in integers.
pub fn to_decimal_string(r: &Rational, places: usize) -> String {
    let scale = BigInt::from(10u32).pow(places as u32);
    let scaled = r * Rational::from_integer(scale.clone());
    // round half away from zero
    let half = rat(1, 2);
    let rounded = if scaled.is_negative() {
        (scaled - half).ceil()
    } else {
        (scaled + half).floor()
    };
    let v = rounded.to_integer();
    let (sign, abs) = if v.is_negative() {
        ("-", -v)
    } else {
        ("", v)
    };
    let (int_part, frac_part) = abs.div_rem(&scale);
    if places == 0 {
        format!("{sign}{int_part}")
    } else {
        format!("{sign}{int_part}.{frac_part:0places$}", places = places)
    }
}

/// A dense matrix of exact rationals, row major.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RationalMatrix {
    rows: usize,
    cols: usize,
    data: Vec<Rational>,
}

impl RationalMatrix {
    pub fn zero(rows: usize, cols: usize) -> Self {
        assert!(rows > 0 && cols > 0, "matrix dimensions must be positive");
        Self {
            rows,
            cols,
            data: vec![Rational::zero(); rows * cols],
        }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Self::zero(n, n);
        for i in 0..n {
            m[(i, i)] = Rational::one();
        }
        m
    }

    pub fn from_rows(rows: Vec<Vec<Rational>>) -> Self {
        let r = rows.len();
        assert!(r > 0);
        let c = rows[0].len();
        assert!(c > 0 && rows.iter().all(|row| row.len() == c));
        Self {
            rows: r,
            cols: c,
            data: rows.into_iter().flatten().collect(),
        }
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn mul_vec(&self, v: &[Rational]) -> Vec<Rational> {
        assert_eq!(v.len(), self.cols);
        (0..self.rows)
            .map(|i| {
                (0..self.cols)
                    .map(|j| &self[(i, j)] * &v[j])
                    .fold(Rational::zero(), |a, b| a + b)
            })
            .collect()
    }

    pub fn mul_mat(&self, other: &RationalMatrix) -> RationalMatrix {
        assert_eq!(self.cols, other.rows);
        let mut out = RationalMatrix::zero(self.rows, other.cols);
        for i in 0..self.rows {
            for k in 0..self.cols {
                let a = &self[(i, k)];
                if a.is_zero() {
                    continue;
                }
                for j in 0..other.cols {
                    let add = a * &other[(k, j)];
                    out[(i, j)] += add;
                }
            }
        }
        out
    }

    pub fn trace(&self) -> Rational {
        assert_eq!(self.rows, self.cols);
        (0..self.rows).fold(Rational::zero(), |acc, i| acc + &self[(i, i)])
    }

    /// f64 snapshot for the numeric spectral routines.
    pub fn to_f64(&self) -> Vec<Vec<f64>> {
        (0..self.rows)
            .map(|i| (0..self.cols).map(|j| self[(i, j)].to_f64().unwrap()).collect())
            .collect()
    }
}

impl std::ops::Index<(usize, usize)> for RationalMatrix {
    type Output = Rational;
    fn index(&self, (i, j): (usize, usize)) -> &Rational {
        &self.data[i * self.cols + j]
    }
}

impl std::ops::IndexMut<(usize, usize)> for RationalMatrix {
    fn index_mut(&mut self, (i, j): (usize, usize)) -> &mut Rational {
        &mut self.data[i * self.cols + j]
    }
}

/// Solves A x = b exactly. A must be square and nonsingular.
///
/// Rows are cleared to integers, then eliminated fraction-free
/// (Bareiss), so intermediate entries stay integral and every division is
/// exact. Singularity is reported distinctly from a shape mismatch.
pub fn solve_rational_linear(a: &RationalMatrix, b: &[Rational]) -> Result<Vec<Rational>> {
    if a.rows() != a.cols() {
        return Err(Error::DimensionMismatch(format!(
            "matrix is {}x{}, expected square",
            a.rows(),
            a.cols()
        )));
    }
    if b.len() != a.rows() {
        return Err(Error::DimensionMismatch(format!(
            "rhs has length {}, expected {}",
            b.len(),
            a.rows()
        )));
    }
    let n = a.rows();

    // Augmented integer matrix: clear denominators per row.
    let mut m: Vec<Vec<BigInt>> = Vec::with_capacity(n);
    for i in 0..n {
        let mut lcm = BigInt::one();
        for j in 0..n {
            lcm = lcm.lcm(a[(i, j)].denom());
        }
        lcm = lcm.lcm(b[i].denom());
        let mut row: Vec<BigInt> = (0..n)
            .map(|j| {
                let r = &a[(i, j)];
                r.numer() * (&lcm / r.denom())
            })
            .collect();
        row.push(b[i].numer() * (&lcm / b[i].denom()));
        m.push(row);
    }

    let mut prev_pivot = BigInt::one();
    for k in 0..n {
        if m[k][k].is_zero() {
            let swap = (k + 1..n).find(|&i| !m[i][k].is_zero());
            match swap {
                Some(i) => m.swap(k, i),
                None => return Err(Error::Singular),
            }
        }
        for i in k + 1..n {
            for j in k + 1..=n {
                let num = &m[i][j] * &m[k][k] - &m[i][k] * &m[k][j];
                m[i][j] = num / &prev_pivot; // exact by Bareiss
            }
            m[i][k] = BigInt::zero();
        }
        prev_pivot = m[k][k].clone();
    }

    // Back substitution in rationals.
    let mut x = vec![Rational::zero(); n];
    for i in (0..n).rev() {
        if m[i][i].is_zero() {
            return Err(Error::Singular);
        }
        let mut s = Rational::from_integer(m[i][n].clone());
        for j in i + 1..n {
            s -= Rational::from_integer(m[i][j].clone()) * &x[j];
        }
        x[i] = s / Rational::from_integer(m[i][i].clone());
    }
    Ok(x)
}

/// Characteristic polynomial of a square rational matrix via
/// Faddeev-LeVerrier. Returns coefficients `c` with
/// `p(x) = c[n] x^n + ... + c[1] x + c[0]` and `c[n] = 1`.
pub fn char_poly(a: &RationalMatrix) -> Vec<Rational> {
    assert_eq!(a.rows(), a.cols());
    let n = a.rows();
    let mut coeffs = vec![Rational::zero(); n + 1];
    coeffs[n] = Rational::one();
    let mut m = RationalMatrix::identity(n);
    for k in 1..=n {
        m = a.mul_mat(&m);
        let c = -m.trace() / rat_int(k as i64);
        for i in 0..n {
            m[(i, i)] += c.clone();
        }
        coeffs[n - k] = c;
    }
    coeffs
}

fn poly_eval(p: &[Rational], x: &Rational) -> Rational {
    let mut acc = Rational::zero();
    for c in p.iter().rev() {
        acc = acc * x + c;
    }
    acc
}

fn poly_derivative(p: &[Rational]) -> Vec<Rational> {
    if p.len() <= 1 {
        return vec![Rational::zero()];
    }
    p.iter()
        .enumerate()
        .skip(1)
        .map(|(i, c)| c * rat_int(i as i64))
        .collect()
}

fn poly_trim(mut p: Vec<Rational>) -> Vec<Rational> {
    while p.len() > 1 && p.last().unwrap().is_zero() {
        p.pop();
    }
    p
}

fn poly_rem(a: &[Rational], b: &[Rational]) -> Vec<Rational> {
    let b = poly_trim(b.to_vec());
    let mut r = poly_trim(a.to_vec());
    let db = b.len() - 1;
    let lead = b.last().unwrap().clone();
    while !(r.len() == 1 && r[0].is_zero()) && r.len() - 1 >= db {
        let dr = r.len() - 1;
        let f = r.last().unwrap() / &lead;
        for j in 0..=db {
            let sub = &f * &b[j];
            r[dr - db + j] -= sub;
        }
        // the leading term cancels exactly
        r.pop();
        if r.is_empty() {
            r.push(Rational::zero());
        }
        r = poly_trim(r);
    }
    r
}

fn poly_gcd(a: &[Rational], b: &[Rational]) -> Vec<Rational> {
    let mut a = poly_trim(a.to_vec());
    let mut b = poly_trim(b.to_vec());
    while !(b.len() == 1 && b[0].is_zero()) {
        let r = poly_rem(&a, &b);
        a = b;
        b = r;
    }
    // normalize leading coefficient to 1
    let lead = a.last().unwrap().clone();
    if !lead.is_zero() && !lead.is_one() {
        for c in &mut a {
            *c /= lead.clone();
        }
    }
    a
}

fn poly_div_exact(a: &[Rational], b: &[Rational]) -> Vec<Rational> {
    let b = poly_trim(b.to_vec());
    let mut r = poly_trim(a.to_vec());
    let db = b.len() - 1;
    let lead = b.last().unwrap().clone();
    if r.len() - 1 < db {
        return vec![Rational::zero()];
    }
    let mut q = vec![Rational::zero(); r.len() - db];
    while !(r.len() == 1 && r[0].is_zero()) && r.len() - 1 >= db {
        let dr = r.len() - 1;
        let f = r.last().unwrap() / &lead;
        q[dr - db] = f.clone();
        for j in 0..=db {
            let sub = &f * &b[j];
            r[dr - db + j] -= sub;
        }
        r.pop();
        if r.is_empty() {
            r.push(Rational::zero());
        }
        r = poly_trim(r);
    }
    q
}

/// Real roots of a rational polynomial inside `[lo, hi]`, isolated on the
/// square-free part by a sign scan and refined by bisection to width `tol`.
/// Multiple roots are reported once. Intended for small, well separated
/// spectra (characteristic polynomials of game cycle maps).
pub fn real_roots_in(p: &[Rational], lo: f64, hi: f64, tol: f64) -> Vec<f64> {
    let p = poly_trim(p.to_vec());
    if p.len() == 1 {
        return vec![];
    }
    // square-free part
    let d = poly_derivative(&p);
    let g = poly_gcd(&p, &d);
    let sf = if g.len() > 1 { poly_div_exact(&p, &g) } else { p };

    let mut roots = Vec::new();
    let steps = 4096;
    let width = hi - lo;
    let to_rat = |x: f64| -> Rational {
        Rational::from_float(x).expect("finite float")
    };
    let mut prev_x = lo;
    let mut prev_sign = poly_eval(&sf, &to_rat(lo));
    if prev_sign.is_zero() {
        roots.push(lo);
    }
    for s in 1..=steps {
        let x = lo + width * (s as f64) / (steps as f64);
        let val = poly_eval(&sf, &to_rat(x));
        if val.is_zero() {
            roots.push(x);
        } else if !prev_sign.is_zero() && val.is_negative() != prev_sign.is_negative() {
            // bisect in [prev_x, x]
            let (mut a, mut b) = (prev_x, x);
            let fa_neg = prev_sign.is_negative();
            while b - a > tol {
                let mid = 0.5 * (a + b);
                let fm = poly_eval(&sf, &to_rat(mid));
                if fm.is_zero() {
                    a = mid;
                    b = mid;
                    break;
                }
                if fm.is_negative() == fa_neg {
                    a = mid;
                } else {
                    b = mid;
                }
            }
            roots.push(0.5 * (a + b));
        }
        if !val.is_zero() {
            prev_sign = val;
        }
        prev_x = x;
    }
    roots
}

/// Default residual tolerance for power iteration.
pub const EIGEN_TOL: f64 = 1e-12;
/// Iteration cap for power iteration.
pub const EIGEN_MAX_ITER: usize = 1_000_000;

/// Dominant eigenpair by power iteration.
///
/// Starts from `start` (or the all-ones vector), iterates until the residual
/// `max|Mv - lambda v|` drops below `tol`, and fails with
/// [`Error::NonConvergence`] at the iteration cap. The returned vector is
/// normalized to sum 1 when all entries are nonnegative, otherwise to unit
/// max-norm.
pub fn dominant_eigenpair(
    m: &[Vec<f64>],
    tol: f64,
    start: Option<&[f64]>,
) -> Result<(f64, Vec<f64>)> {
    let n = m.len();
    assert!(n > 0 && m.iter().all(|r| r.len() == n));
    let mut v: Vec<f64> = match start {
        Some(s) => {
            assert_eq!(s.len(), n);
            s.to_vec()
        }
        None => vec![1.0; n],
    };
    let norm_inf = |v: &[f64]| v.iter().fold(0.0f64, |a, x| a.max(x.abs()));
    let s = norm_inf(&v);
    if s == 0.0 {
        return Err(Error::InvalidArgument("zero start vector".into()));
    }
    for x in &mut v {
        *x /= s;
    }
    let mul = |v: &[f64]| -> Vec<f64> {
        (0..n)
            .map(|i| (0..n).map(|j| m[i][j] * v[j]).sum())
            .collect()
    };
    for _ in 0..EIGEN_MAX_ITER {
        let w = mul(&v);
        // Rayleigh quotient
        let num: f64 = v.iter().zip(&w).map(|(a, b)| a * b).sum();
        let den: f64 = v.iter().map(|a| a * a).sum();
        let lambda = num / den;
        let resid = v
            .iter()
            .zip(&w)
            .fold(0.0f64, |a, (vi, wi)| a.max((wi - lambda * vi).abs()));
        let s = norm_inf(&w);
        if s == 0.0 {
            // M v = 0: v is an exact eigenvector for eigenvalue 0
            return Ok((0.0, v));
        }
        let mut w: Vec<f64> = w.iter().map(|x| x / s).collect();
        // fix orientation so the iteration cannot flip-flop for negative lambda
        let lead = w
            .iter()
            .cloned()
            .max_by(|a, b| a.abs().partial_cmp(&b.abs()).unwrap())
            .unwrap();
        if lead < 0.0 {
            for x in &mut w {
                *x = -*x;
            }
        }
        v = w;
        if resid < tol {
            let sum: f64 = v.iter().sum();
            if v.iter().all(|x| *x >= -1e-15) && sum > 0.0 {
                for x in &mut v {
                    *x /= sum;
                }
            }
            return Ok((lambda, v));
        }
    }
    Err(Error::NonConvergence(EIGEN_MAX_ITER))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rational_roundtrip_and_decimal() {
        let r = parse_rational("39/16").unwrap();
        assert_eq!(r, rat(39, 16));
        assert_eq!(format_rational(&r), "39/16");
        assert_eq!(to_decimal_string(&r, 5), "2.43750");
        assert_eq!(parse_rational("7").unwrap(), rat_int(7));
        assert_eq!(format_rational(&rat_int(7)), "7");
        assert_eq!(to_decimal_string(&rat(5, 3), 5), "1.66667");
        assert_eq!(to_decimal_string(&rat(-1, 8), 2), "-0.13");
        // non-normalized input reduces
        assert_eq!(parse_rational("4/8").unwrap(), rat(1, 2));
        assert_eq!(parse_rational("3/-6").unwrap(), rat(-1, 2));
    }

    #[test]
    fn solve_identity_is_rhs() {
        let a = RationalMatrix::identity(3);
        let b = vec![rat(1, 3), rat(2, 5), rat_int(4)];
        assert_eq!(solve_rational_linear(&a, &b).unwrap(), b);
    }

    #[test]
    fn solve_small_system_hand_checked() {
        // [[3,-1],[-1,3]] x = [4,4]  =>  x = [2,2]
        let a = RationalMatrix::from_rows(vec![
            vec![rat_int(3), rat_int(-1)],
            vec![rat_int(-1), rat_int(3)],
        ]);
        let x = solve_rational_linear(&a, &[rat_int(4), rat_int(4)]).unwrap();
        assert_eq!(x, vec![rat_int(2), rat_int(2)]);
    }

    #[test]
    fn solve_random_open_n3_gives_8_21() {
        // escape-rate system for three boxes opened uniformly at random:
        //   E1 = (2/3)(1 + E2)/2, E2 = (2/3)(E1 + E3)/2, E3 = (2/3)(E2 + 1)/2
        let third = rat(1, 3);
        let a = RationalMatrix::from_rows(vec![
            vec![rat_int(1), -third.clone(), rat_int(0)],
            vec![-third.clone(), rat_int(1), -third.clone()],
            vec![rat_int(0), -third.clone(), rat_int(1)],
        ]);
        let b = vec![rat(1, 3), rat_int(0), rat(1, 3)];
        let x = solve_rational_linear(&a, &b).unwrap();
        let mean = x.iter().fold(Rational::zero(), |s, e| s + e) / rat_int(3);
        assert_eq!(mean, rat(8, 21));
        // residual is exactly zero
        let ax = a.mul_vec(&x);
        assert_eq!(ax, b);
    }

    #[test]
    fn solve_singular_and_mismatch_are_distinct() {
        let a = RationalMatrix::from_rows(vec![
            vec![rat_int(1), rat_int(2)],
            vec![rat_int(2), rat_int(4)],
        ]);
        match solve_rational_linear(&a, &[rat_int(1), rat_int(2)]) {
            Err(Error::Singular) => {}
            other => panic!("expected Singular, got {other:?}"),
        }
        match solve_rational_linear(&a, &[rat_int(1)]) {
            Err(Error::DimensionMismatch(_)) => {}
            other => panic!("expected DimensionMismatch, got {other:?}"),
        }
    }

    #[test]
    fn dominant_eigenpair_diagonal() {
        let m = vec![vec![2.0, 0.0], vec![0.0, 1.0]];
        let (l, v) = dominant_eigenpair(&m, 1e-12, None).unwrap();
        assert!((l - 2.0).abs() < 1e-10);
        assert!((v[0] - 1.0).abs() < 1e-8 && v[1].abs() < 1e-8);
    }

    #[test]
    fn dominant_eigenpair_of_cycle_transition_matrix() {
        // 4-step transition matrix for the cycle 2,2,6,6 on the 7-box exit
        // line, transient part only; dominant eigenvalue (3+2*sqrt(2))/16.
        let t: [[f64; 7]; 7] = [
            [0., 0., 0., 0., 0., 0., 0.],
            [0., 0., 0., 0., 0., 0., 0.],
            [1., 0., 3., 0., 2., 0., 0.],
            [0., 4., 0., 5., 0., 2., 0.],
            [1., 0., 4., 0., 3., 0., 0.],
            [0., 1., 0., 2., 0., 1., 0.],
            [0., 0., 1., 0., 1., 0., 0.],
        ];
        let m: Vec<Vec<f64>> = t.iter().map(|r| r.iter().map(|x| x / 16.0).collect()).collect();
        let (l, _) = dominant_eigenpair(&m, 1e-12, None).unwrap();
        let expected = (3.0 + 2.0 * 2.0f64.sqrt()) / 16.0;
        assert!((l - expected).abs() < 1e-10, "lambda = {l}");
    }

    #[test]
    fn char_poly_small() {
        // [[2,1],[0,3]] has p(x) = x^2 - 5x + 6
        let a = RationalMatrix::from_rows(vec![
            vec![rat_int(2), rat_int(1)],
            vec![rat_int(0), rat_int(3)],
        ]);
        let p = char_poly(&a);
        assert_eq!(p, vec![rat_int(6), rat_int(-5), rat_int(1)]);
        let roots = real_roots_in(&p, 0.0, 4.0, 1e-12);
        assert_eq!(roots.len(), 2);
        assert!((roots[0] - 2.0).abs() < 1e-9 && (roots[1] - 3.0).abs() < 1e-9);
    }

    #[test]
    fn real_roots_handle_multiplicity() {
        // (x-1)^2 (x-1/4) = x^3 - (9/4)x^2 + (3/2)x - 1/4:
        // the double root at 1 must still be found once
        let p = vec![rat(-1, 4), rat(3, 2), rat(-9, 4), rat_int(1)];
        let roots = real_roots_in(&p, 0.0, 2.0, 1e-12);
        assert_eq!(roots.len(), 2, "roots: {roots:?}");
        assert!((roots[0] - 0.25).abs() < 1e-9);
        assert!((roots[1] - 1.0).abs() < 1e-9);
    }
}
