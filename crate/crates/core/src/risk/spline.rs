/// End conditions for [`CubicSpline`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EndCondition {
    /// Zero second derivative at both ends.
    Natural,
    /// Continuous third derivative at the second and second-to-last knots.
    /// Falls back to `Natural` with fewer than four knots.
    NotAKnot,
}

/// Interpolating cubic spline through (x_i, y_i), stored as per-interval
/// polynomial coefficients in the local coordinate `h = x - x_i`.
#[derive(Debug, Clone, PartialEq)]
pub struct CubicSpline {
    xs: Vec<f64>,
    coeffs: Vec<[f64; 4]>,
    uniform_step: Option<f64>,
}

impl CubicSpline {
    pub fn natural(xs: &[f64], ys: &[f64]) -> Self {
        Self::new(xs, ys, EndCondition::Natural)
    }

    pub fn not_a_knot(xs: &[f64], ys: &[f64]) -> Self {
        Self::new(xs, ys, EndCondition::NotAKnot)
    }

    /// Panics if fewer than two knots or knots are not strictly increasing.
    pub fn new(xs: &[f64], ys: &[f64], end: EndCondition) -> Self {
        let n = xs.len();
        assert!(n >= 2 && ys.len() == n, "need at least two knots");
        assert!(xs.windows(2).all(|w| w[1] > w[0]), "knots must increase");
        let h: Vec<f64> = xs.windows(2).map(|w| w[1] - w[0]).collect();

        // Second derivatives m_i. Tables are small, so a dense solve keeps
        // both end conditions in one code path.
        let mut a = vec![vec![0.0; n]; n];
        let mut rhs = vec![0.0; n];
        for i in 1..n - 1 {
            a[i][i - 1] = h[i - 1];
            a[i][i] = 2.0 * (h[i - 1] + h[i]);
            a[i][i + 1] = h[i];
            rhs[i] = 6.0 * ((ys[i + 1] - ys[i]) / h[i] - (ys[i] - ys[i - 1]) / h[i - 1]);
        }
        if end == EndCondition::NotAKnot && n >= 4 {
            a[0][0] = h[1];
            a[0][1] = -(h[0] + h[1]);
            a[0][2] = h[0];
            let (p, q) = (h[n - 3], h[n - 2]);
            a[n - 1][n - 3] = q;
            a[n - 1][n - 2] = -(p + q);
            a[n - 1][n - 1] = p;
        } else {
            a[0][0] = 1.0;
            a[n - 1][n - 1] = 1.0;
        }
        let m = solve_dense(a, rhs);

        let coeffs = (0..n - 1)
            .map(|i| {
                let hi = h[i];
                [
                    ys[i],
                    (ys[i + 1] - ys[i]) / hi - hi * (2.0 * m[i] + m[i + 1]) / 6.0,
                    m[i] / 2.0,
                    (m[i + 1] - m[i]) / (6.0 * hi),
                ]
            })
            .collect();

        let step = h[0];
        let uniform_step = h
            .iter()
            .all(|&d| (d - step).abs() <= 1e-12 * step)
            .then_some(step);
        Self {
            xs: xs.to_vec(),
            coeffs,
            uniform_step,
        }
    }

    pub fn knots(&self) -> &[f64] {
        &self.xs
    }

    #[inline]
    fn interval(&self, x: f64) -> usize {
        let last = self.coeffs.len() - 1;
        match self.uniform_step {
            Some(step) => {
                let f = ((x - self.xs[0]) / step).floor();
                if f <= 0.0 {
                    0
                } else {
                    (f as usize).min(last)
                }
            }
            None => self.xs[1..].partition_point(|&k| k <= x).min(last),
        }
    }

    /// Evaluates the spline; outside the knot range the end cubic is
    /// extended.
    #[inline]
    pub fn eval(&self, x: f64) -> f64 {
        self.eval_in(self.interval(x), x)
    }

    /// Evaluates the cubic of interval `i` at `x`. The caller picks the
    /// interval; `i` must be below `knots().len() - 1`.
    #[inline]
    pub fn eval_in(&self, i: usize, x: f64) -> f64 {
        let h = x - self.xs[i];
        let [a, b, c, d] = self.coeffs[i];
        a + h * (b + h * (c + h * d))
    }
}

/// Gaussian elimination with partial pivoting.
fn solve_dense(mut a: Vec<Vec<f64>>, mut b: Vec<f64>) -> Vec<f64> {
    let n = b.len();
    for col in 0..n {
        let piv = (col..n)
            .max_by(|&i, &j| a[i][col].abs().total_cmp(&a[j][col].abs()))
            .expect("non-empty");
        a.swap(col, piv);
        b.swap(col, piv);
        let d = a[col][col];
        for row in col + 1..n {
            let f = a[row][col] / d;
            if f != 0.0 {
                for k in col..n {
                    a[row][k] -= f * a[col][k];
                }
                b[row] -= f * b[col];
            }
        }
    }
    let mut x = vec![0.0; n];
    for row in (0..n).rev() {
        let s: f64 = (row + 1..n).map(|k| a[row][k] * x[k]).sum();
        x[row] = (b[row] - s) / a[row][row];
    }
    x
}
