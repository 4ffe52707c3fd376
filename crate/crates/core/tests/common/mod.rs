//! Independent numerical oracles for the integration tests: double-double
//! arithmetic (~32 significant digits) and Gauss–Legendre quadrature.
#![allow(dead_code)]

use std::ops::{Add, Div, Mul, Neg, Sub};

#[derive(Debug, Clone, Copy, PartialEq, PartialOrd)]
pub struct Dd {
    pub hi: f64,
    pub lo: f64,
}

fn two_sum(a: f64, b: f64) -> (f64, f64) {
    let s = a + b;
    let bb = s - a;
    (s, (a - (s - bb)) + (b - bb))
}

fn quick_two_sum(a: f64, b: f64) -> (f64, f64) {
    let s = a + b;
    (s, b - (s - a))
}

fn two_prod(a: f64, b: f64) -> (f64, f64) {
    let p = a * b;
    (p, a.mul_add(b, -p))
}

impl Dd {
    pub const ZERO: Dd = Dd { hi: 0.0, lo: 0.0 };
    pub const ONE: Dd = Dd { hi: 1.0, lo: 0.0 };
    const LN2: Dd = Dd {
        hi: std::f64::consts::LN_2,
        lo: 2.319_046_813_846_299_6e-17,
    };

    pub fn new(x: f64) -> Dd {
        Dd { hi: x, lo: 0.0 }
    }

    pub fn to_f64(self) -> f64 {
        self.hi + self.lo
    }

    pub fn abs(self) -> Dd {
        if self.hi < 0.0 {
            -self
        } else {
            self
        }
    }

    pub fn sqrt(self) -> Dd {
        if self.hi <= 0.0 {
            return Dd::ZERO;
        }
        let x = Dd::new(self.hi.sqrt());
        // one Newton step doubles the precision
        x + (self - x * x) / (x * Dd::new(2.0))
    }

    pub fn exp(self) -> Dd {
        let k = (self.hi / std::f64::consts::LN_2).round();
        let r = self - Dd::LN2 * Dd::new(k);
        let r = r / Dd::new(16.0);
        let mut term = Dd::ONE;
        let mut sum = Dd::ONE;
        for i in 1..30 {
            term = term * r / Dd::new(i as f64);
            sum = sum + term;
        }
        for _ in 0..4 {
            sum = sum * sum;
        }
        let scale = 2f64.powi(k as i32);
        Dd {
            hi: sum.hi * scale,
            lo: sum.lo * scale,
        }
    }

    pub fn powi(self, n: u32) -> Dd {
        (0..n).fold(Dd::ONE, |acc, _| acc * self)
    }
}

impl From<f64> for Dd {
    fn from(x: f64) -> Dd {
        Dd::new(x)
    }
}

impl Add for Dd {
    type Output = Dd;
    fn add(self, o: Dd) -> Dd {
        let (s, e) = two_sum(self.hi, o.hi);
        let (t, f) = two_sum(self.lo, o.lo);
        let (s, e) = quick_two_sum(s, e + t);
        let (hi, lo) = quick_two_sum(s, e + f);
        Dd { hi, lo }
    }
}

impl Neg for Dd {
    type Output = Dd;
    fn neg(self) -> Dd {
        Dd {
            hi: -self.hi,
            lo: -self.lo,
        }
    }
}

impl Sub for Dd {
    type Output = Dd;
    fn sub(self, o: Dd) -> Dd {
        self + (-o)
    }
}

impl Mul for Dd {
    type Output = Dd;
    fn mul(self, o: Dd) -> Dd {
        let (p, e) = two_prod(self.hi, o.hi);
        let e = e + (self.hi * o.lo + self.lo * o.hi);
        let (hi, lo) = quick_two_sum(p, e);
        Dd { hi, lo }
    }
}

impl Div for Dd {
    type Output = Dd;
    fn div(self, o: Dd) -> Dd {
        let q1 = self.hi / o.hi;
        let r = self - o * Dd::new(q1);
        let q2 = r.hi / o.hi;
        let r = r - o * Dd::new(q2);
        let q3 = r.hi / o.hi;
        Dd::new(q1) + Dd::new(q2) + Dd::new(q3)
    }
}

/// Solve `A X = B` by Gauss–Jordan elimination with partial pivoting in
/// double-double arithmetic.
#[allow(clippy::needless_range_loop)]
pub fn dd_solve(a: &[Vec<f64>], b: &[Vec<f64>]) -> Vec<Vec<Dd>> {
    let n = a.len();
    let mut a: Vec<Vec<Dd>> = a
        .iter()
        .map(|r| r.iter().map(|&x| Dd::new(x)).collect())
        .collect();
    let mut b: Vec<Vec<Dd>> = b
        .iter()
        .map(|r| r.iter().map(|&x| Dd::new(x)).collect())
        .collect();
    for col in 0..n {
        let piv = (col..n)
            .max_by(|&i, &j| {
                a[i][col]
                    .abs()
                    .to_f64()
                    .total_cmp(&a[j][col].abs().to_f64())
            })
            .unwrap();
        a.swap(col, piv);
        b.swap(col, piv);
        let d = a[col][col];
        for v in a[col].iter_mut() {
            *v = *v / d;
        }
        for v in b[col].iter_mut() {
            *v = *v / d;
        }
        for row in 0..n {
            if row == col {
                continue;
            }
            let f = a[row][col];
            for c in 0..n {
                let t = a[col][c];
                a[row][c] = a[row][c] - f * t;
            }
            for c in 0..b[row].len() {
                let t = b[col][c];
                b[row][c] = b[row][c] - f * t;
            }
        }
    }
    b
}

/// Squared-exponential kernel in double-double precision (unit variance).
pub fn dd_kernel(a: &[f64], b: &[f64], lengthscale: f64) -> Dd {
    let mut d2 = Dd::ZERO;
    for (x, y) in a.iter().zip(b) {
        let diff = Dd::new(*x) - Dd::new(*y);
        d2 = d2 + diff * diff;
    }
    let m = Dd::new(lengthscale);
    (-(d2 / (Dd::new(2.0) * m * m))).exp()
}

/// Posterior mean and variance of a zero-mean GP with raw targets, computed
/// by explicit elimination in double-double precision.
pub fn dd_gp_posterior(
    inputs: &[Vec<f64>],
    targets: &[f64],
    lengthscale: f64,
    zeta: f64,
    q: &[f64],
) -> (f64, f64) {
    let t = inputs.len();
    if t == 0 {
        return (0.0, 1.0);
    }
    let a: Vec<Vec<f64>> = (0..t)
        .map(|i| {
            (0..t)
                .map(|j| {
                    let k = dd_kernel(&inputs[i], &inputs[j], lengthscale);
                    (if i == j { k + Dd::new(zeta) } else { k }).to_f64()
                })
                .collect()
        })
        .collect();
    let kq: Vec<Dd> = inputs
        .iter()
        .map(|x| dd_kernel(x, q, lengthscale))
        .collect();
    let rhs: Vec<Vec<f64>> = (0..t).map(|i| vec![targets[i], kq[i].to_f64()]).collect();
    let sol = dd_solve(&a, &rhs);
    let mut mean = Dd::ZERO;
    let mut quad = Dd::ZERO;
    for i in 0..t {
        mean = mean + kq[i] * sol[i][0];
        quad = quad + kq[i] * sol[i][1];
    }
    (mean.to_f64(), (Dd::ONE - quad).to_f64())
}

/// Gauss–Legendre nodes and weights on [-1, 1], by Newton iteration.
pub fn gauss_legendre(n: usize) -> Vec<(f64, f64)> {
    let mut out = Vec::with_capacity(n);
    for i in 0..n {
        let mut x = (std::f64::consts::PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
        let mut dp = 0.0;
        for _ in 0..100 {
            let (mut p0, mut p1) = (1.0, x);
            for k in 2..=n {
                let p2 = ((2 * k - 1) as f64 * x * p1 - (k - 1) as f64 * p0) / k as f64;
                p0 = p1;
                p1 = p2;
            }
            dp = n as f64 * (x * p1 - p0) / (x * x - 1.0);
            let dx = p1 / dp;
            x -= dx;
            if dx.abs() < 1e-16 {
                break;
            }
        }
        out.push((x, 2.0 / ((1.0 - x * x) * dp * dp)));
    }
    out
}

/// Composite Gauss–Legendre integral of `f` over `[a, b]`.
pub fn quad(f: impl Fn(f64) -> f64, a: f64, b: f64, panels: usize) -> f64 {
    let rule = gauss_legendre(20);
    let h = (b - a) / panels as f64;
    let mut total = 0.0;
    for p in 0..panels {
        let (lo, hi) = (a + p as f64 * h, a + (p + 1) as f64 * h);
        let (mid, half) = (0.5 * (lo + hi), 0.5 * (hi - lo));
        total += rule.iter().map(|(x, w)| w * f(mid + half * x)).sum::<f64>() * half;
    }
    total
}

/// `A_{c,k}` in double-double precision.
pub fn dd_bound_constant(c: f64, k: usize) -> Dd {
    let c = Dd::new(c);
    let one_minus = Dd::ONE - (-c).exp();
    let mid = one_minus - c / Dd::new(2.0);
    c * c * mid.powi(k as u32 - 1) / one_minus.powi(k as u32)
}

/// Average-regret bound in double-double precision.
pub fn dd_average_regret_bound(c: f64, k: usize, delta: f64) -> Dd {
    let a = dd_bound_constant(c, k);
    let q = Dd::new(delta).sqrt().sqrt();
    let kf = Dd::new(k as f64);
    Dd::new(6.0) * (q + kf.sqrt()) / (q * kf) + Dd::new(2.0) * a + (Dd::new(2.0) * a).sqrt() / q
}
