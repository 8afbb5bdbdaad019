//! Resumable observation-free recursions.
//!
//! A recursion is split into `correct` and `predict` halves so that a sweep
//! can be restarted from a stored state. Finite-difference gradients use this
//! to re-run only the tail of the horizon affected by a perturbed `u_k`.

use nalgebra::{Cholesky, DMatrix, DVector, Dyn};
use rayon::prelude::*;

use crate::error::Result;
use crate::linalg::{block_diag, chol_logdet, chol_quad, cholesky_with, symmetrize};
use crate::model::{InputSignal, QuasiLinearModel};

pub(crate) trait Recursion: Sync {
    type State: Clone + Send + Sync;
    fn start(&self) -> Result<Self::State>;
    fn correct(&self, st: &mut Self::State, k: usize) -> Result<()>;
    fn predict(&self, st: &mut Self::State, k: usize, u: &[f64]);
}

pub(crate) fn run<R: Recursion>(r: &R, u: &InputSignal) -> Result<R::State> {
    let n = u.horizon();
    let mut st = r.start()?;
    for k in 0..=n {
        r.correct(&mut st, k)?;
        if k < n {
            r.predict(&mut st, k, u.at(k));
        }
    }
    Ok(st)
}

/// Value at `U` plus `(value(U + h e_i), value(U - h e_i))` for every component `i`.
pub(crate) fn fd_tails<R, F>(r: &R, u: &InputSignal, h: f64, value: F) -> Result<(f64, Vec<(f64, f64)>)>
where
    R: Recursion,
    F: Fn(&R::State) -> f64 + Sync,
{
    let n = u.horizon();
    let nu = u.input_dim;
    let mut st = r.start()?;
    let mut checkpoints = Vec::with_capacity(n);
    for k in 0..=n {
        r.correct(&mut st, k)?;
        if k < n {
            checkpoints.push(st.clone());
            r.predict(&mut st, k, u.at(k));
        }
    }
    let base = value(&st);
    let tails: Result<Vec<(f64, f64)>> = (0..n * nu)
        .into_par_iter()
        .map(|i| {
            let (k, c) = (i / nu, i % nu);
            let one = |delta: f64| -> Result<f64> {
                let mut s = checkpoints[k].clone();
                let mut uk = u.at(k).to_vec();
                uk[c] += delta;
                r.predict(&mut s, k, &uk);
                for j in k + 1..=n {
                    r.correct(&mut s, j)?;
                    if j < n {
                        r.predict(&mut s, j, u.at(j));
                    }
                }
                Ok(value(&s))
            };
            Ok((one(h)?, one(-h)?))
        })
        .collect();
    Ok((base, tails?))
}

#[derive(Clone)]
pub(crate) struct CovState {
    pub s: DMatrix<f64>,
    pub log_det: f64,
}

/// Covariance-only sweep accumulating `Σ ln|Σ_k|`.
pub(crate) struct CovSweep<'a> {
    model: &'a dyn QuasiLinearModel,
    theta: &'a [f64],
}

impl<'a> CovSweep<'a> {
    pub fn new(model: &'a dyn QuasiLinearModel, theta: &'a [f64]) -> Self {
        CovSweep { model, theta }
    }
}

impl Recursion for CovSweep<'_> {
    type State = CovState;
    fn start(&self) -> Result<CovState> {
        Ok(CovState { s: self.model.s0(self.theta), log_det: 0.0 })
    }
    fn correct(&self, st: &mut CovState, k: usize) -> Result<()> {
        let c = self.model.c();
        let mut sigma = self.model.sv() + c * &st.s * c.transpose();
        symmetrize(&mut sigma);
        let ch = cholesky_with(&sigma, || format!("innovation covariance at step {k}, θ = {:?}", self.theta))?;
        st.log_det += chol_logdet(&ch);
        let gain = ch.solve(&(c * &st.s)).transpose();
        st.s -= &gain * &sigma * gain.transpose();
        symmetrize(&mut st.s);
        Ok(())
    }
    fn predict(&self, st: &mut CovState, _k: usize, u: &[f64]) {
        let m = self.model.step(self.theta, u);
        st.s = &m.a * &st.s * m.a.transpose() + &m.g * m.g.transpose();
        symmetrize(&mut st.s);
    }
}

#[derive(Clone)]
pub(crate) struct PairState {
    pub m: DVector<f64>,
    pub s: DMatrix<f64>,
    /// `Σ |C̃ m̃_k^-|²_{Σ̃_k^{-1}}`
    pub quad: f64,
    /// `Σ ln|Σ̃_k|`
    pub log_det: f64,
}

/// Augmented `2n`-state recursion for the pair `(θ_i, θ_j)` with `ỹ ≡ 0`.
pub(crate) struct PairRecursion<'a> {
    model: &'a dyn QuasiLinearModel,
    ti: &'a [f64],
    tj: &'a [f64],
    ct: DMatrix<f64>,
}

impl<'a> PairRecursion<'a> {
    pub fn new(model: &'a dyn QuasiLinearModel, ti: &'a [f64], tj: &'a [f64]) -> Self {
        let c = model.c();
        let (ny, n) = c.shape();
        let mut ct = DMatrix::zeros(ny, 2 * n);
        ct.view_mut((0, 0), (ny, n)).copy_from(c);
        ct.view_mut((0, n), (ny, n)).copy_from(&-c);
        ct *= std::f64::consts::FRAC_1_SQRT_2;
        PairRecursion { model, ti, tj, ct }
    }

    fn innovation(&self, st: &PairState, k: usize) -> Result<(DMatrix<f64>, Cholesky<f64, Dyn>)> {
        let mut sigma = self.model.sv() + &self.ct * &st.s * self.ct.transpose();
        symmetrize(&mut sigma);
        let ch = cholesky_with(&sigma, || {
            format!("pair innovation covariance at step {k}, θ_i = {:?}, θ_j = {:?}", self.ti, self.tj)
        })?;
        Ok((sigma, ch))
    }

    /// Correction that also returns `Σ̃_k`.
    pub fn correct_record(&self, st: &mut PairState, k: usize) -> Result<DMatrix<f64>> {
        let (sigma, ch) = self.innovation(st, k)?;
        let z = &self.ct * &st.m;
        st.quad += chol_quad(&ch, &z);
        st.log_det += chol_logdet(&ch);
        let gain = ch.solve(&(&self.ct * &st.s)).transpose();
        st.m -= &gain * z;
        st.s -= &gain * &sigma * gain.transpose();
        symmetrize(&mut st.s);
        Ok(sigma)
    }
}

fn pair_predict_mean(
    model: &dyn QuasiLinearModel,
    ti: &[f64],
    tj: &[f64],
    m: &mut DVector<f64>,
    u: &[f64],
) -> (crate::model::StepMatrices, crate::model::StepMatrices) {
    let n = m.len() / 2;
    let mi = model.step(ti, u);
    let mj = model.step(tj, u);
    let top = &mi.a * m.rows(0, n) + &mi.b;
    let bot = &mj.a * m.rows(n, n) + &mj.b;
    m.rows_mut(0, n).copy_from(&top);
    m.rows_mut(n, n).copy_from(&bot);
    (mi, mj)
}

impl Recursion for PairRecursion<'_> {
    type State = PairState;
    fn start(&self) -> Result<PairState> {
        let mi = self.model.m0(self.ti);
        let mj = self.model.m0(self.tj);
        let m = DVector::from_iterator(mi.len() * 2, mi.iter().chain(mj.iter()).cloned());
        let s = block_diag(&self.model.s0(self.ti), &self.model.s0(self.tj));
        Ok(PairState { m, s, quad: 0.0, log_det: 0.0 })
    }
    fn correct(&self, st: &mut PairState, k: usize) -> Result<()> {
        self.correct_record(st, k).map(|_| ())
    }
    fn predict(&self, st: &mut PairState, _k: usize, u: &[f64]) {
        let n = st.m.len() / 2;
        let (mi, mj) = pair_predict_mean(self.model, self.ti, self.tj, &mut st.m, u);
        let s11 = &mi.a * st.s.view((0, 0), (n, n)) * mi.a.transpose() + &mi.g * mi.g.transpose();
        let s12 = &mi.a * st.s.view((0, n), (n, n)) * mj.a.transpose();
        let s22 = &mj.a * st.s.view((n, n), (n, n)) * mj.a.transpose() + &mj.g * mj.g.transpose();
        st.s.view_mut((0, 0), (n, n)).copy_from(&s11);
        st.s.view_mut((0, n), (n, n)).copy_from(&s12);
        st.s.view_mut((n, 0), (n, n)).copy_from(&s12.transpose());
        st.s.view_mut((n, n), (n, n)).copy_from(&s22);
        symmetrize(&mut st.s);
    }
}

#[derive(Clone)]
pub(crate) struct MeanState {
    pub m: DVector<f64>,
    pub quad: f64,
}

/// Covariance-dependent quantities of one reference pair sweep.
pub(crate) struct FastPairCache {
    ct: DMatrix<f64>,
    chols: Vec<Cholesky<f64, Dyn>>,
    gains: Vec<DMatrix<f64>>,
    /// `Σ ln|Σ̃_k|` of the frozen sequence.
    pub log_det: f64,
}

impl FastPairCache {
    pub fn new(model: &dyn QuasiLinearModel, ti: &[f64], tj: &[f64], u: &InputSignal) -> Result<Self> {
        let full = PairRecursion::new(model, ti, tj);
        let n = u.horizon();
        let mut st = full.start()?;
        let mut chols = Vec::with_capacity(n + 1);
        let mut gains = Vec::with_capacity(n + 1);
        for k in 0..=n {
            let (sigma, ch) = full.innovation(&st, k)?;
            let gain = ch.solve(&(&full.ct * &st.s)).transpose();
            st.log_det += chol_logdet(&ch);
            st.s -= &gain * &sigma * gain.transpose();
            symmetrize(&mut st.s);
            chols.push(ch);
            gains.push(gain);
            if k < n {
                full.predict(&mut st, k, u.at(k));
            }
        }
        Ok(FastPairCache { ct: full.ct, chols, gains, log_det: st.log_det })
    }
}

/// Pair mean recursion over a frozen covariance sequence. Exact when `A` and
/// `G` do not depend on the input.
pub(crate) struct FastPair<'a> {
    pub model: &'a dyn QuasiLinearModel,
    pub ti: &'a [f64],
    pub tj: &'a [f64],
    pub cache: &'a FastPairCache,
}

impl Recursion for FastPair<'_> {
    type State = MeanState;
    fn start(&self) -> Result<MeanState> {
        let mi = self.model.m0(self.ti);
        let mj = self.model.m0(self.tj);
        Ok(MeanState { m: DVector::from_iterator(mi.len() * 2, mi.iter().chain(mj.iter()).cloned()), quad: 0.0 })
    }
    fn correct(&self, st: &mut MeanState, k: usize) -> Result<()> {
        let z = &self.cache.ct * &st.m;
        st.quad += chol_quad(&self.cache.chols[k], &z);
        st.m -= &self.cache.gains[k] * z;
        Ok(())
    }
    fn predict(&self, st: &mut MeanState, _k: usize, u: &[f64]) {
        pair_predict_mean(self.model, self.ti, self.tj, &mut st.m, u);
    }
}
