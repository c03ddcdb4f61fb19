//! Dense-matrix evaluation of the DFT-domain Kalman filter recursions,
//! used as an oracle for the per-bin implementation.

use kfasp_core::dsp::{BlockDft, FrameConfig, LoudspeakerHistory};
use kfasp_core::fdkf::{BlockSpectra, KalmanFilter, KfHyperParams};
use nalgebra::DMatrix;
use num_complex::Complex64;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

type CMat = DMatrix<Complex64>;

fn dft_matrix(m: usize) -> CMat {
    CMat::from_fn(m, m, |k, n| Complex64::from_polar(1.0, -2.0 * std::f64::consts::PI * (k * n) as f64 / m as f64))
}

fn diag(v: &[Complex64]) -> CMat {
    CMat::from_diagonal(&nalgebra::DVector::from_row_slice(v))
}

struct Dense {
    b: usize,
    m: usize,
    l: usize,
    r: usize,
    f: CMat,
    f_inv: CMat,
    g: CMat,
    mean: Vec<CMat>,
    p: CMat,
    psi_w: Vec<f64>,
    psi_n: Vec<f64>,
}

impl Dense {
    fn new(frame: &FrameConfig, p0: f64) -> Self {
        let (b, m, l, r) = (frame.channels, frame.dft_len(), frame.filter_len, frame.frame_shift);
        let f = dft_matrix(m);
        let f_inv = f.adjoint() / Complex64::new(m as f64, 0.0);
        let q2 = CMat::from_fn(m, m, |i, j| if i == j && i < l { Complex64::new(1.0, 0.0) } else { Complex64::default() });
        let g = &f * q2 * &f_inv;
        Self {
            b,
            m,
            l,
            r,
            f,
            f_inv,
            g,
            mean: vec![CMat::zeros(m, 1); b],
            p: CMat::identity(m * b, m * b) * Complex64::new(p0, 0.0),
            psi_w: vec![p0; b * m],
            psi_n: vec![1e-10; m],
        }
    }

    fn block(&self, mat: &CMat, i: usize, j: usize) -> CMat {
        mat.view((i * self.m, j * self.m), (self.m, self.m)).into_owned()
    }

    /// Returns the prior error spectrum.
    fn step(&mut self, params: &KfHyperParams, xs: &[CMat], y: &[f64]) -> CMat {
        let (b, m) = (self.b, self.m);
        let q1q1t = CMat::from_fn(m, m, |i, j| if i == j && i >= self.l { Complex64::new(1.0, 0.0) } else { Complex64::default() });
        let mut y_pad = CMat::zeros(m, 1);
        for (k, v) in y.iter().enumerate() {
            y_pad[(self.l + k, 0)] = Complex64::new(*v, 0.0);
        }
        let mut e = &self.f * y_pad;
        for (x, w) in xs.iter().zip(&self.mean) {
            let c = &self.f * &q1q1t * &self.f_inv * x;
            e -= c * w;
        }

        let leak = 1.0 - params.a * params.a;
        let mut psi_dw = CMat::zeros(m * b, m * b);
        for i in 0..b {
            for k in 0..m {
                let idx = i * m + k;
                self.psi_w[idx] = params.lambda_w * self.psi_w[idx] + (1.0 - params.lambda_w) * self.mean[i][(k, 0)].norm_sqr();
                psi_dw[(idx, idx)] = Complex64::new(leak * self.psi_w[idx], 0.0);
            }
        }
        for k in 0..m {
            self.psi_n[k] = params.lambda_n * self.psi_n[k] + (1.0 - params.lambda_n) * e[(k, 0)].norm_sqr();
        }

        let pp = &self.p * Complex64::new(params.a * params.a, 0.0) + psi_dw;
        let mut d = CMat::from_diagonal(&nalgebra::DVector::from_iterator(
            m,
            self.psi_n.iter().map(|v| Complex64::new(v * m as f64 / self.r as f64, 0.0)),
        ));
        for i in 0..b {
            for j in 0..b {
                d += &xs[i] * self.block(&pp, i, j) * xs[j].adjoint();
            }
        }
        let d_inv = d.try_inverse().expect("innovation covariance invertible");
        let mut new_p = pp.clone();
        for i in 0..b {
            let mut acc = CMat::zeros(m, m);
            for j in 0..b {
                acc += self.block(&pp, i, j) * xs[j].adjoint();
            }
            let lambda = acc * &d_inv;
            self.mean[i] += &self.g * &lambda * &e;
            for j in 0..b {
                let mut s = CMat::zeros(m, m);
                for l in 0..b {
                    s += &xs[l] * self.block(&pp, l, j);
                }
                let upd = self.block(&pp, i, j) - &lambda * s * Complex64::new(self.r as f64 / m as f64, 0.0);
                new_p.view_mut((i * m, j * m), (m, m)).copy_from(&upd);
            }
        }
        for k in 0..m * b {
            if new_p[(k, k)].re < 0.0 {
                new_p[(k, k)] = Complex64::default();
            }
        }
        self.p = new_p;
        e
    }
}

fn rel_err(a: &[Complex64], b: &[Complex64]) -> f64 {
    let num: f64 = a.iter().zip(b).map(|(x, y)| (x - y).norm_sqr()).sum();
    let den: f64 = b.iter().map(|y| y.norm_sqr()).sum();
    (num / den.max(1e-300)).sqrt()
}

/// Largest relative deviations between the structured filter and the dense
/// evaluation over 100 random steps.
#[derive(Debug, Clone, Copy, Default)]
pub struct Deviation {
    pub prior_error: f64,
    pub mean: f64,
    pub uncertainty: f64,
    /// Largest entry outside the per-bin diagonals of the dense `P`.
    pub off_diagonal: f64,
}

pub fn run_case(nb: usize, m: usize, seed: u64) -> Deviation {
    let frame = FrameConfig::new(m / 2, m / 2, nb, 8000.0).unwrap();
    let params = KfHyperParams { p0: 0.05, ..Default::default() };
    let ops = BlockDft::new(frame).unwrap();
    let mut fast = KalmanFilter::new(frame, params).unwrap();
    let mut dense = Dense::new(&frame, params.p0);
    let mut hist = LoudspeakerHistory::new(&frame);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut gauss = |n: usize| -> Vec<f64> { (0..n).map(|_| StandardNormal.sample(&mut rng)).collect() };
    let r = frame.frame_shift;
    let h: Vec<Vec<f64>> = (0..nb).map(|_| gauss(m / 2).iter().map(|v| 0.1 * v).collect()).collect();
    let mut dev = Deviation::default();

    for _ in 0..100 {
        let x: Vec<Vec<f64>> = (0..nb).map(|_| gauss(r)).collect();
        let blocks: Vec<&[f64]> = x.iter().map(|v| v.as_slice()).collect();
        hist.push(&blocks).unwrap();
        let spectra = BlockSpectra::from_history(&ops, &hist).unwrap();
        let y: Vec<f64> = {
            let mut acc = gauss(r).iter().map(|v| 0.01 * v).collect::<Vec<f64>>();
            for b in 0..nb {
                let atf = ops.embed_filter(&h[b]).unwrap();
                for (a, v) in acc.iter_mut().zip(ops.os_convolve(hist.channel(b), &atf).unwrap()) {
                    *a += v;
                }
            }
            acc
        };
        let xs: Vec<CMat> = (0..nb).map(|b| diag(spectra.channel(b, m))).collect();
        let e_dense = dense.step(&params, &xs, &y);
        let e_fast = ops.embed_block(&fast.update(&spectra, &y).unwrap().error).unwrap();
        dev.prior_error = dev.prior_error.max(rel_err(&e_fast, e_dense.as_slice()));

        let st = fast.state();
        for b in 0..nb {
            dev.mean = dev.mean.max(rel_err(st.mean_channel(b), dense.mean[b].as_slice()));
            for j in 0..nb {
                let want: Vec<Complex64> = (0..m).map(|k| dense.p[(b * m + k, j * m + k)]).collect();
                if want.iter().any(|w| w.norm() >= 1e-300) {
                    dev.uncertainty = dev.uncertainty.max(rel_err(st.p_block(b, j), &want));
                }
            }
        }
        for i in 0..m * nb {
            for j in 0..m * nb {
                if i % m != j % m {
                    dev.off_diagonal = dev.off_diagonal.max(dense.p[(i, j)].norm());
                }
            }
        }
    }
    dev
}
