//! Independent reference computations used by the integration tests.
#![allow(dead_code)]

/// Every state path of length `t` over `n` states.
pub fn all_paths(n: usize, t: usize) -> Vec<Vec<usize>> {
    let mut out = vec![Vec::new()];
    for _ in 0..t {
        out = out
            .into_iter()
            .flat_map(|p| {
                (0..n).map(move |s| {
                    let mut q = p.clone();
                    q.push(s);
                    q
                })
            })
            .collect();
    }
    out
}

/// P(X, O) for one explicit state path.
pub fn joint(pi: &[f64], a: &[Vec<f64>], b: &[Vec<f64>], path: &[usize], obs: &[usize]) -> f64 {
    let mut p = pi[path[0]] * b[path[0]][obs[0]];
    for t in 1..obs.len() {
        p *= a[path[t - 1]][path[t]] * b[path[t]][obs[t]];
    }
    p
}

/// (sum over paths, max over paths) of P(X, O).
pub fn enumerate(pi: &[f64], a: &[Vec<f64>], b: &[Vec<f64>], obs: &[usize]) -> (f64, f64) {
    let mut sum = 0.0;
    let mut max = 0.0f64;
    for path in all_paths(pi.len(), obs.len()) {
        let p = joint(pi, a, b, &path, obs);
        sum += p;
        max = max.max(p);
    }
    (sum, max)
}

pub fn relative_error(x: f64, reference: f64) -> f64 {
    if reference == 0.0 {
        x.abs()
    } else {
        ((x - reference) / reference).abs()
    }
}

/// Characteristic polynomial coefficients (constant term first, leading 1 last)
/// by the Faddeev-LeVerrier recursion.
pub fn characteristic_polynomial(a: &[Vec<f64>]) -> Vec<f64> {
    let n = a.len();
    let mut c = vec![0.0; n + 1];
    c[n] = 1.0;
    let mut mk = vec![vec![0.0; n]; n];
    for k in 1..=n {
        // M_k = A M_{k-1} + c_{n-k+1} I
        let mut next = vec![vec![0.0; n]; n];
        for i in 0..n {
            for j in 0..n {
                next[i][j] = (0..n).map(|l| a[i][l] * mk[l][j]).sum::<f64>();
            }
            next[i][i] += c[n - k + 1];
        }
        mk = next;
        let trace: f64 = (0..n).map(|i| (0..n).map(|l| a[i][l] * mk[l][i]).sum::<f64>()).sum();
        c[n - k] = -trace / k as f64;
    }
    c
}

#[derive(Clone, Copy, Debug)]
struct Complex {
    re: f64,
    im: f64,
}

impl Complex {
    fn add(self, o: Self) -> Self {
        Self { re: self.re + o.re, im: self.im + o.im }
    }
    fn sub(self, o: Self) -> Self {
        Self { re: self.re - o.re, im: self.im - o.im }
    }
    fn mul(self, o: Self) -> Self {
        Self { re: self.re * o.re - self.im * o.im, im: self.re * o.im + self.im * o.re }
    }
    fn div(self, o: Self) -> Self {
        let d = o.re * o.re + o.im * o.im;
        Self { re: (self.re * o.re + self.im * o.im) / d, im: (self.im * o.re - self.re * o.im) / d }
    }
}

fn horner(c: &[f64], z: Complex) -> Complex {
    c.iter().rev().fold(Complex { re: 0.0, im: 0.0 }, |acc, &k| acc.mul(z).add(Complex { re: k, im: 0.0 }))
}

/// Real parts of the roots of a monic polynomial (Durand-Kerner), descending.
pub fn polynomial_roots(c: &[f64]) -> Vec<f64> {
    let n = c.len() - 1;
    let radius = 1.0 + c[..n].iter().fold(0.0f64, |m, k| m.max(k.abs()));
    let seed = Complex { re: 0.4, im: 0.9 };
    let mut z: Vec<Complex> = (0..n)
        .map(|i| {
            let mut p = Complex { re: radius, im: 0.0 };
            for _ in 0..i {
                p = p.mul(seed);
            }
            p
        })
        .collect();
    for _ in 0..5000 {
        let mut change = 0.0f64;
        for i in 0..n {
            let mut denom = Complex { re: 1.0, im: 0.0 };
            for j in 0..n {
                if i != j {
                    denom = denom.mul(z[i].sub(z[j]));
                }
            }
            let step = horner(c, z[i]).div(denom);
            z[i] = z[i].sub(step);
            change = change.max(step.re.abs() + step.im.abs());
        }
        if change < 1e-15 * radius {
            break;
        }
    }
    let mut roots: Vec<f64> = z.iter().map(|r| r.re).collect();
    roots.sort_by(|a, b| b.total_cmp(a));
    roots
}

/// Solves a dense linear system by Gaussian elimination with partial
/// pivoting; `None` if numerically singular.
pub fn solve(mut m: Vec<Vec<f64>>, mut rhs: Vec<f64>) -> Option<Vec<f64>> {
    let n = rhs.len();
    for col in 0..n {
        let piv = (col..n).max_by(|&a, &b| m[a][col].abs().total_cmp(&m[b][col].abs()))?;
        if m[piv][col].abs() < 1e-12 {
            return None;
        }
        m.swap(col, piv);
        rhs.swap(col, piv);
        for r in col + 1..n {
            let f = m[r][col] / m[col][col];
            for k in col..n {
                m[r][k] -= f * m[col][k];
            }
            rhs[r] -= f * rhs[col];
        }
    }
    let mut x = vec![0.0; n];
    for r in (0..n).rev() {
        let s: f64 = (r + 1..n).map(|k| m[r][k] * x[k]).sum();
        x[r] = (rhs[r] - s) / m[r][r];
    }
    Some(x)
}

/// Global minimizer of `0.5 a'Qa - sum(a)` s.t. `0 <= a <= c`, `y'a = 0`, found
/// by enumerating which coordinates sit at 0, at `c`, or strictly between and
/// solving the equality-constrained stationarity system on each face.
pub fn svm_dual_by_faces(q: &[Vec<f64>], y: &[f64], c: f64) -> (Vec<f64>, f64) {
    let n = y.len();
    let objective = |a: &[f64]| {
        let mut s = 0.0;
        for i in 0..n {
            for j in 0..n {
                s += a[i] * a[j] * q[i][j];
            }
        }
        0.5 * s - a.iter().sum::<f64>()
    };
    let mut best: Option<(Vec<f64>, f64)> = None;
    let patterns = 3usize.pow(n as u32);
    for code in 0..patterns {
        let mut state = vec![0u8; n];
        let mut rest = code;
        for s in state.iter_mut() {
            *s = (rest % 3) as u8;
            rest /= 3;
        }
        let free: Vec<usize> = (0..n).filter(|&i| state[i] == 2).collect();
        let mut alpha: Vec<f64> = state.iter().map(|&s| if s == 1 { c } else { 0.0 }).collect();
        if free.is_empty() {
            if y.iter().zip(&alpha).map(|(a, b)| a * b).sum::<f64>().abs() > 1e-9 {
                continue;
            }
        } else {
            let k = free.len();
            let mut m = vec![vec![0.0; k + 1]; k + 1];
            let mut rhs = vec![0.0; k + 1];
            for (r, &i) in free.iter().enumerate() {
                for (s, &j) in free.iter().enumerate() {
                    m[r][s] = q[i][j];
                }
                m[r][k] = y[i];
                m[k][r] = y[i];
                rhs[r] = 1.0 - (0..n).filter(|j| state[*j] == 1).map(|j| q[i][j] * c).sum::<f64>();
            }
            rhs[k] = -(0..n).filter(|j| state[*j] == 1).map(|j| y[j] * c).sum::<f64>();
            let Some(sol) = solve(m, rhs) else { continue };
            if sol[..k].iter().any(|&v| v < -1e-12 || v > c + 1e-12) {
                continue;
            }
            for (r, &i) in free.iter().enumerate() {
                alpha[i] = sol[r].clamp(0.0, c);
            }
        }
        let f = objective(&alpha);
        if best.as_ref().is_none_or(|(_, b)| f < *b) {
            best = Some((alpha, f));
        }
    }
    best.expect("the zero vector is always feasible")
}

/// Leave-one-out 1-NN accuracy on empirical unigram distributions (L1).
pub fn unigram_1nn_accuracy(seqs: &[Vec<usize>], labels: &[usize], m: usize) -> f64 {
    let hists: Vec<Vec<f64>> = seqs
        .iter()
        .map(|s| {
            let mut h = vec![0.0; m];
            for &c in s {
                h[c] += 1.0;
            }
            h.iter().map(|v| v / s.len() as f64).collect()
        })
        .collect();
    let mut correct = 0;
    for i in 0..hists.len() {
        let mut best = (f64::INFINITY, 0);
        for j in 0..hists.len() {
            if i == j {
                continue;
            }
            let d: f64 = hists[i].iter().zip(&hists[j]).map(|(a, b)| (a - b).abs()).sum();
            if d < best.0 {
                best = (d, labels[j]);
            }
        }
        if best.1 == labels[i] {
            correct += 1;
        }
    }
    correct as f64 / hists.len() as f64
}

/// Central finite difference of `f` at `x` along every coordinate.
pub fn numeric_gradient(x: &[f64], h: f64, f: impl Fn(&[f64]) -> f64) -> Vec<f64> {
    let mut p = x.to_vec();
    (0..x.len())
        .map(|i| {
            p[i] = x[i] + h;
            let up = f(&p);
            p[i] = x[i] - h;
            let down = f(&p);
            p[i] = x[i];
            (up - down) / (2.0 * h)
        })
        .collect()
}

/// max |a - b| / max(|a|, |b|, floor) over coordinates.
pub fn max_relative_gap(a: &[f64], b: &[f64], floor: f64) -> f64 {
    a.iter()
        .zip(b)
        .map(|(x, y)| (x - y).abs() / x.abs().max(y.abs()).max(floor))
        .fold(0.0, f64::max)
}
