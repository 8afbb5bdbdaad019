//! Independent dense-matrix oracles and random model instances for tests.
#![allow(dead_code)]

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use infodesign::model::{InputSignal, ModelDims, QuasiLinearModel, StepMatrices};

/// Random quasi-linear model: `A`, `B` and `G` all depend on θ and `u`.
pub struct RandomModel {
    pub dims: ModelDims,
    a0: DMatrix<f64>,
    a1: DMatrix<f64>,
    a2: DMatrix<f64>,
    b0: DVector<f64>,
    b1: DVector<f64>,
    g0: DMatrix<f64>,
    g1: DMatrix<f64>,
    c: DMatrix<f64>,
    sv: DMatrix<f64>,
    m0: DVector<f64>,
    s0: DMatrix<f64>,
}

fn rand_mat(rng: &mut ChaCha8Rng, r: usize, c: usize, scale: f64) -> DMatrix<f64> {
    DMatrix::from_fn(r, c, |_, _| scale * rng.random_range(-1.0..1.0))
}

fn rand_spd(rng: &mut ChaCha8Rng, n: usize, floor: f64) -> DMatrix<f64> {
    let m = rand_mat(rng, n, n, 1.0);
    &m * m.transpose() + DMatrix::identity(n, n) * floor
}

impl RandomModel {
    pub fn new(seed: u64, n: usize, ny: usize, input_dependent_noise: bool) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let nw = n;
        RandomModel {
            dims: ModelDims { state: n, noise: nw, output: ny, input: 1, theta: 1 },
            a0: rand_mat(&mut rng, n, n, 0.5 / n as f64),
            a1: rand_mat(&mut rng, n, n, 0.3 / n as f64),
            a2: rand_mat(&mut rng, n, n, 0.2 / n as f64),
            b0: DVector::from_fn(n, |_, _| rng.random_range(-1.0..1.0)),
            b1: DVector::from_fn(n, |_, _| rng.random_range(-1.0..1.0)),
            g0: rand_mat(&mut rng, n, nw, 0.4),
            g1: if input_dependent_noise { rand_mat(&mut rng, n, nw, 0.2) } else { DMatrix::zeros(n, nw) },
            c: rand_mat(&mut rng, ny, n, 1.0),
            sv: rand_spd(&mut rng, ny, 0.2) * 0.3,
            m0: DVector::from_fn(n, |_, _| rng.random_range(-1.0..1.0)),
            s0: rand_spd(&mut rng, n, 0.1) * 0.5,
        }
    }
}

impl QuasiLinearModel for RandomModel {
    fn dims(&self) -> ModelDims {
        self.dims
    }
    fn step(&self, theta: &[f64], u: &[f64]) -> StepMatrices {
        let t = theta[0];
        StepMatrices {
            a: &self.a0 + &self.a1 * t + &self.a2 * u[0].tanh(),
            b: &self.b0 * (t * u[0]) + &self.b1 * (u[0] * u[0] * 0.1 + t),
            g: &self.g0 * (1.0 + 0.2 * t * t) + &self.g1 * u[0].sin(),
        }
    }
    fn c(&self) -> &DMatrix<f64> {
        &self.c
    }
    fn sv(&self) -> &DMatrix<f64> {
        &self.sv
    }
    fn m0(&self, theta: &[f64]) -> DVector<f64> {
        &self.m0 * theta[0]
    }
    fn s0(&self, theta: &[f64]) -> DMatrix<f64> {
        &self.s0 * (1.0 + theta[0] * theta[0])
    }
}

/// Mean and covariance of the stacked outputs, built from state moments and
/// transition products.
pub fn stacked_moments(model: &dyn QuasiLinearModel, theta: &[f64], u: &InputSignal) -> (DVector<f64>, DMatrix<f64>) {
    let n_steps = u.horizon();
    let ny = model.dims().output;
    let c = model.c();
    let mut means = vec![model.m0(theta)];
    let mut covs = vec![model.s0(theta)];
    let mut a_mats = Vec::new();
    for k in 0..n_steps {
        let st = model.step(theta, u.at(k));
        means.push(&st.a * &means[k] + &st.b);
        covs.push(&st.a * &covs[k] * st.a.transpose() + &st.g * st.g.transpose());
        a_mats.push(st.a);
    }
    let total = (n_steps + 1) * ny;
    let mut f = DVector::zeros(total);
    let mut s = DMatrix::zeros(total, total);
    for k in 0..=n_steps {
        f.rows_mut(k * ny, ny).copy_from(&(c * &means[k]));
        // Cov(x_l, x_k) = A_{l-1} ... A_k P_k for l ≥ k
        let mut cross = covs[k].clone();
        for l in k..=n_steps {
            if l > k {
                cross = &a_mats[l - 1] * cross;
            }
            let block = c * &cross * c.transpose();
            s.view_mut((l * ny, k * ny), (ny, ny)).copy_from(&block);
            s.view_mut((k * ny, l * ny), (ny, ny)).copy_from(&block.transpose());
        }
        let diag = s.view((k * ny, k * ny), (ny, ny)) + model.sv();
        s.view_mut((k * ny, k * ny), (ny, ny)).copy_from(&diag);
    }
    (f, s)
}

pub fn log_det(s: &DMatrix<f64>) -> f64 {
    let ch = nalgebra::Cholesky::new(s.clone()).expect("SPD");
    2.0 * ch.l().diagonal().iter().map(|v| v.ln()).sum::<f64>()
}

/// `ln N(y; f, S)`.
pub fn gaussian_log_density(y: &[f64], f: &DVector<f64>, s: &DMatrix<f64>) -> f64 {
    let r = DVector::from_column_slice(y) - f;
    let quad = (r.transpose() * s.clone().try_inverse().expect("invertible") * &r)[0];
    -0.5 * (quad + log_det(s) + y.len() as f64 * (2.0 * std::f64::consts::PI).ln())
}

/// Bhattacharyya distance between two Gaussians.
pub fn bhattacharyya(f1: &DVector<f64>, s1: &DMatrix<f64>, f2: &DVector<f64>, s2: &DMatrix<f64>) -> f64 {
    let avg = (s1 + s2) * 0.5;
    let df = f1 - f2;
    let quad = (df.transpose() * avg.clone().try_inverse().expect("invertible") * &df)[0];
    0.125 * quad + 0.5 * log_det(&avg) - 0.25 * (log_det(s1) + log_det(s2))
}

pub fn random_signal(rng: &mut ChaCha8Rng, n: usize, scale: f64) -> InputSignal {
    InputSignal::scalar((0..n).map(|_| scale * rng.random_range(-1.0..1.0)).collect())
}

pub fn rel_err(a: f64, b: f64) -> f64 {
    (a - b).abs() / a.abs().max(b.abs()).max(1e-300)
}

/// Model whose output mean is linear in `U` and whose covariance is input-free:
/// `x_{k+1} = A(θ) x_k + b(θ) u_k + G w_k`, `x_0 ~ N(0, S0)`.
pub struct LinearModel {
    dims: ModelDims,
    a0: DMatrix<f64>,
    a1: DMatrix<f64>,
    b0: DVector<f64>,
    b1: DVector<f64>,
    g: DMatrix<f64>,
    c: DMatrix<f64>,
    sv: DMatrix<f64>,
    s0: DMatrix<f64>,
}

impl LinearModel {
    pub fn new(seed: u64, n: usize) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        LinearModel {
            dims: ModelDims { state: n, noise: n, output: 1, input: 1, theta: 1 },
            a0: rand_mat(&mut rng, n, n, 0.5 / n as f64),
            a1: rand_mat(&mut rng, n, n, 0.4 / n as f64),
            b0: DVector::from_fn(n, |_, _| rng.random_range(-1.0..1.0)),
            b1: DVector::from_fn(n, |_, _| rng.random_range(-1.0..1.0)),
            g: rand_mat(&mut rng, n, n, 0.3),
            c: rand_mat(&mut rng, 1, n, 1.0),
            sv: DMatrix::from_element(1, 1, 0.1 + rng.random_range(0.0..0.2)),
            s0: rand_spd(&mut rng, n, 0.1) * 0.2,
        }
    }
}

impl QuasiLinearModel for LinearModel {
    fn dims(&self) -> ModelDims {
        self.dims
    }
    fn step(&self, theta: &[f64], u: &[f64]) -> StepMatrices {
        let t = theta[0];
        StepMatrices { a: &self.a0 + &self.a1 * t, b: (&self.b0 + &self.b1 * t) * u[0], g: self.g.clone() }
    }
    fn c(&self) -> &DMatrix<f64> {
        &self.c
    }
    fn sv(&self) -> &DMatrix<f64> {
        &self.sv
    }
    fn m0(&self, _theta: &[f64]) -> DVector<f64> {
        DVector::zeros(self.dims.state)
    }
    fn s0(&self, _theta: &[f64]) -> DMatrix<f64> {
        self.s0.clone()
    }
}

/// Stacked `F(θ)` with `F(θ) U` the output mean, built column by column.
pub fn linear_response(model: &dyn QuasiLinearModel, theta: &[f64], horizon: usize) -> (DMatrix<f64>, DMatrix<f64>) {
    let rows = (horizon + 1) * model.dims().output;
    let mut f = DMatrix::zeros(rows, horizon);
    let mut s = DMatrix::zeros(rows, rows);
    for k in 0..horizon {
        let mut e = vec![0.0; horizon];
        e[k] = 1.0;
        let (fk, sk) = stacked_moments(model, theta, &InputSignal::scalar(e));
        f.set_column(k, &fk);
        s = sk;
    }
    (f, s)
}
