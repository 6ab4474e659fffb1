//! Explicit Runge-Kutta steppers on flat slices.

/// Scratch space for one RK4 step in dimension `n`.
pub(crate) struct Rk4 {
    k1: Vec<f64>,
    k2: Vec<f64>,
    k3: Vec<f64>,
    k4: Vec<f64>,
    tmp: Vec<f64>,
}

impl Rk4 {
    pub fn new(n: usize) -> Self {
        Self {
            k1: vec![0.0; n],
            k2: vec![0.0; n],
            k3: vec![0.0; n],
            k4: vec![0.0; n],
            tmp: vec![0.0; n],
        }
    }

    /// Classical fourth-order step `x → out` of size `h`.
    pub fn step<F: FnMut(&[f64], &mut [f64])>(
        &mut self,
        f: &mut F,
        x: &[f64],
        h: f64,
        out: &mut [f64],
    ) {
        let n = x.len();
        f(x, &mut self.k1);
        for ((t, xi), ki) in self.tmp.iter_mut().zip(x).zip(&self.k1) {
            *t = xi + 0.5 * h * ki;
        }
        f(&self.tmp, &mut self.k2);
        for ((t, xi), ki) in self.tmp.iter_mut().zip(x).zip(&self.k2) {
            *t = xi + 0.5 * h * ki;
        }
        f(&self.tmp, &mut self.k3);
        for ((t, xi), ki) in self.tmp.iter_mut().zip(x).zip(&self.k3) {
            *t = xi + h * ki;
        }
        f(&self.tmp, &mut self.k4);
        for i in 0..n {
            out[i] =
                x[i] + h / 6.0 * (self.k1[i] + 2.0 * self.k2[i] + 2.0 * self.k3[i] + self.k4[i]);
        }
    }
}

// Dormand-Prince 5(4) tableau.
const A21: f64 = 1.0 / 5.0;
const A31: f64 = 3.0 / 40.0;
const A32: f64 = 9.0 / 40.0;
const A41: f64 = 44.0 / 45.0;
const A42: f64 = -56.0 / 15.0;
const A43: f64 = 32.0 / 9.0;
const A51: f64 = 19372.0 / 6561.0;
const A52: f64 = -25360.0 / 2187.0;
const A53: f64 = 64448.0 / 6561.0;
const A54: f64 = -212.0 / 729.0;
const A61: f64 = 9017.0 / 3168.0;
const A62: f64 = -355.0 / 33.0;
const A63: f64 = 46732.0 / 5247.0;
const A64: f64 = 49.0 / 176.0;
const A65: f64 = -5103.0 / 18656.0;
const B1: f64 = 35.0 / 384.0;
const B3: f64 = 500.0 / 1113.0;
const B4: f64 = 125.0 / 192.0;
const B5: f64 = -2187.0 / 6784.0;
const B6: f64 = 11.0 / 84.0;
const E1: f64 = 71.0 / 57600.0;
const E3: f64 = -71.0 / 16695.0;
const E4: f64 = 71.0 / 1920.0;
const E5: f64 = -17253.0 / 339200.0;
const E6: f64 = 22.0 / 525.0;
const E7: f64 = -1.0 / 40.0;

pub(crate) struct Dopri5 {
    k: [Vec<f64>; 7],
    tmp: Vec<f64>,
}

impl Dopri5 {
    pub fn new(n: usize) -> Self {
        Self {
            k: std::array::from_fn(|_| vec![0.0; n]),
            tmp: vec![0.0; n],
        }
    }

    /// One trial step. Writes the fifth-order solution to `out` and returns
    /// the scaled error norm (accept when `≤ 1`).
    pub fn step<F: FnMut(&[f64], &mut [f64])>(
        &mut self,
        f: &mut F,
        x: &[f64],
        h: f64,
        rtol: f64,
        atol: f64,
        out: &mut [f64],
    ) -> f64 {
        let n = x.len();
        let [k1, k2, k3, k4, k5, k6, k7] = &mut self.k;
        let tmp = &mut self.tmp;
        f(x, k1);
        for i in 0..n {
            tmp[i] = x[i] + h * A21 * k1[i];
        }
        f(tmp, k2);
        for i in 0..n {
            tmp[i] = x[i] + h * (A31 * k1[i] + A32 * k2[i]);
        }
        f(tmp, k3);
        for i in 0..n {
            tmp[i] = x[i] + h * (A41 * k1[i] + A42 * k2[i] + A43 * k3[i]);
        }
        f(tmp, k4);
        for i in 0..n {
            tmp[i] = x[i] + h * (A51 * k1[i] + A52 * k2[i] + A53 * k3[i] + A54 * k4[i]);
        }
        f(tmp, k5);
        for i in 0..n {
            tmp[i] =
                x[i] + h * (A61 * k1[i] + A62 * k2[i] + A63 * k3[i] + A64 * k4[i] + A65 * k5[i]);
        }
        f(tmp, k6);
        for i in 0..n {
            out[i] = x[i] + h * (B1 * k1[i] + B3 * k3[i] + B4 * k4[i] + B5 * k5[i] + B6 * k6[i]);
        }
        f(out, k7);
        let mut err2 = 0.0;
        for i in 0..n {
            let e =
                h * (E1 * k1[i] + E3 * k3[i] + E4 * k4[i] + E5 * k5[i] + E6 * k6[i] + E7 * k7[i]);
            let sc = atol + rtol * x[i].abs().max(out[i].abs());
            err2 += (e / sc) * (e / sc);
        }
        (err2 / n as f64).sqrt()
    }
}
