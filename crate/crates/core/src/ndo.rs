//! Neural density operator: a visible/hidden/ancilla network whose marginalized
//! form gives every density-matrix entry in closed form,
//!
//! ```text
//! rho(v, v') = exp(A(v, v')) / Z
//! A(v, v')   = Gamma_l^+(v, v') + i Gamma_m^-(v, v') + Pi(v, v')
//! ```
//!
//! with `Gamma^±` built from hidden-unit softplus sums and `Pi` from the
//! ancilla couplings. Visible states are one-hot vectors of length `d`, so each
//! `W v` is a column lookup.

use std::path::Path;

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{CMatrix, C64, I, ZERO};
use crate::state::DensityMatrix;

/// Largest ancilla count the brute-force purification will enumerate.
pub const MAX_ORACLE_ANCILLA: usize = 12;

/// Default initialization half-width.
pub const DEFAULT_INIT_SCALE: f64 = 0.01;

/// `log(1 + e^x)` without overflow.
pub fn softplus(x: f64) -> f64 {
    x.max(0.0) + (-x.abs()).exp().ln_1p()
}

/// Logistic function `1 / (1 + e^{-x})`.
pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// Principal-branch `log(1 + e^z)`, reducing the real part before exponentiating.
pub fn complex_softplus(z: C64) -> C64 {
    if z.re > 0.0 {
        z + (C64::new(1.0, 0.0) + (-z).exp()).ln()
    } else {
        (C64::new(1.0, 0.0) + z.exp()).ln()
    }
}

/// Complex logistic `1 / (1 + e^{-z})`, the derivative of [`complex_softplus`].
pub fn complex_sigmoid(z: C64) -> C64 {
    if z.re >= 0.0 {
        C64::new(1.0, 0.0) / (C64::new(1.0, 0.0) + (-z).exp())
    } else {
        let e = z.exp();
        e / (C64::new(1.0, 0.0) + e)
    }
}

/// One-hot visible configuration.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct VisibleEncoding {
    index: usize,
    dim: usize,
}

impl VisibleEncoding {
    pub fn new(index: usize, dim: usize) -> Result<Self> {
        if index >= dim {
            return Err(Error::invalid(format!(
                "visible index {index} out of range for d={dim}"
            )));
        }
        Ok(Self { index, dim })
    }

    pub fn index(&self) -> usize {
        self.index
    }

    pub fn vector(&self) -> Vec<u8> {
        (0..self.dim).map(|k| u8::from(k == self.index)).collect()
    }
}

/// Offsets of each parameter group in the flattened parameter vector.
///
/// Order: `W_l`, `W_m` (row-major, `m_h x d`), `U_l`, `U_m` (`m_a x d`), `b_l`,
/// `b_m` (`d`), `c_l`, `c_m` (`m_h`), `d_l` (`m_a`).
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ParamLayout {
    pub d: usize,
    pub m_h: usize,
    pub m_a: usize,
    pub w_lambda: usize,
    pub w_mu: usize,
    pub u_lambda: usize,
    pub u_mu: usize,
    pub b_lambda: usize,
    pub b_mu: usize,
    pub c_lambda: usize,
    pub c_mu: usize,
    pub d_lambda: usize,
    pub len: usize,
}

impl ParamLayout {
    pub fn new(d: usize, m_h: usize, m_a: usize) -> Self {
        let w_lambda = 0;
        let w_mu = w_lambda + m_h * d;
        let u_lambda = w_mu + m_h * d;
        let u_mu = u_lambda + m_a * d;
        let b_lambda = u_mu + m_a * d;
        let b_mu = b_lambda + d;
        let c_lambda = b_mu + d;
        let c_mu = c_lambda + m_h;
        let d_lambda = c_mu + m_h;
        let len = d_lambda + m_a;
        Self {
            d,
            m_h,
            m_a,
            w_lambda,
            w_mu,
            u_lambda,
            u_mu,
            b_lambda,
            b_mu,
            c_lambda,
            c_mu,
            d_lambda,
            len,
        }
    }

    /// Named `(group, start, end)` ranges in flattening order.
    pub fn groups(&self) -> [(&'static str, usize, usize); 9] {
        [
            ("W_lambda", self.w_lambda, self.w_mu),
            ("W_mu", self.w_mu, self.u_lambda),
            ("U_lambda", self.u_lambda, self.u_mu),
            ("U_mu", self.u_mu, self.b_lambda),
            ("b_lambda", self.b_lambda, self.b_mu),
            ("b_mu", self.b_mu, self.c_lambda),
            ("c_lambda", self.c_lambda, self.c_mu),
            ("c_mu", self.c_mu, self.d_lambda),
            ("d_lambda", self.d_lambda, self.len),
        ]
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct NdoParams {
    pub w_lambda: DMatrix<f64>,
    pub w_mu: DMatrix<f64>,
    pub u_lambda: DMatrix<f64>,
    pub u_mu: DMatrix<f64>,
    pub b_lambda: DVector<f64>,
    pub b_mu: DVector<f64>,
    pub c_lambda: DVector<f64>,
    pub c_mu: DVector<f64>,
    pub d_lambda: DVector<f64>,
}

impl NdoParams {
    pub fn zeros(d: usize, m_h: usize, m_a: usize) -> Self {
        Self {
            w_lambda: DMatrix::zeros(m_h, d),
            w_mu: DMatrix::zeros(m_h, d),
            u_lambda: DMatrix::zeros(m_a, d),
            u_mu: DMatrix::zeros(m_a, d),
            b_lambda: DVector::zeros(d),
            b_mu: DVector::zeros(d),
            c_lambda: DVector::zeros(m_h),
            c_mu: DVector::zeros(m_h),
            d_lambda: DVector::zeros(m_a),
        }
    }

    pub fn dim(&self) -> usize {
        self.b_lambda.len()
    }

    pub fn hidden(&self) -> usize {
        self.c_lambda.len()
    }

    pub fn ancilla(&self) -> usize {
        self.d_lambda.len()
    }

    pub fn layout(&self) -> ParamLayout {
        ParamLayout::new(self.dim(), self.hidden(), self.ancilla())
    }

    pub fn num_params(&self) -> usize {
        self.layout().len
    }

    /// Checks shapes against `(d, m_h, m_a)` and finiteness.
    pub fn validate(&self) -> Result<()> {
        let (d, mh, ma) = (self.dim(), self.hidden(), self.ancilla());
        let shapes = [
            ("W_lambda", self.w_lambda.shape(), (mh, d)),
            ("W_mu", self.w_mu.shape(), (mh, d)),
            ("U_lambda", self.u_lambda.shape(), (ma, d)),
            ("U_mu", self.u_mu.shape(), (ma, d)),
            ("b_mu", (self.b_mu.len(), 1), (d, 1)),
            ("c_mu", (self.c_mu.len(), 1), (mh, 1)),
        ];
        for (name, got, want) in shapes {
            if got != want {
                return Err(Error::invalid(format!("{name} has shape {got:?}, expected {want:?}")));
            }
        }
        if self.to_vec().iter().any(|x| !x.is_finite()) {
            return Err(Error::invalid("parameters contain non-finite entries"));
        }
        Ok(())
    }

    /// Flattens in [`ParamLayout`] order.
    pub fn to_vec(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.num_params());
        for m in [&self.w_lambda, &self.w_mu, &self.u_lambda, &self.u_mu] {
            for r in 0..m.nrows() {
                out.extend(m.row(r).iter());
            }
        }
        for v in [&self.b_lambda, &self.b_mu, &self.c_lambda, &self.c_mu, &self.d_lambda] {
            out.extend(v.iter());
        }
        out
    }

    pub fn from_vec(d: usize, m_h: usize, m_a: usize, x: &[f64]) -> Result<Self> {
        let lay = ParamLayout::new(d, m_h, m_a);
        if x.len() != lay.len {
            return Err(Error::DimensionMismatch {
                expected: lay.len,
                found: x.len(),
            });
        }
        let mat = |start: usize, rows: usize| DMatrix::from_row_slice(rows, d, &x[start..start + rows * d]);
        let vec = |start: usize, n: usize| DVector::from_column_slice(&x[start..start + n]);
        Ok(Self {
            w_lambda: mat(lay.w_lambda, m_h),
            w_mu: mat(lay.w_mu, m_h),
            u_lambda: mat(lay.u_lambda, m_a),
            u_mu: mat(lay.u_mu, m_a),
            b_lambda: vec(lay.b_lambda, d),
            b_mu: vec(lay.b_mu, d),
            c_lambda: vec(lay.c_lambda, m_h),
            c_mu: vec(lay.c_mu, m_h),
            d_lambda: vec(lay.d_lambda, m_a),
        })
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        std::fs::write(path, self.to_json())?;
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::from_json(&std::fs::read_to_string(path)?)
    }

    pub fn to_json(&self) -> String {
        let lay = self.layout();
        let flat = self.to_vec();
        let arrays = lay
            .groups()
            .iter()
            .map(|&(name, a, b)| (name.to_string(), flat[a..b].to_vec()))
            .collect();
        let file = CheckpointFile {
            format_version: 1,
            d: lay.d,
            m_h: lay.m_h,
            m_a: lay.m_a,
            arrays,
        };
        serde_json::to_string_pretty(&file).expect("checkpoint serializes")
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let file: CheckpointFile = serde_json::from_str(text).map_err(|e| Error::parse("checkpoint", e.to_string()))?;
        if file.format_version != 1 {
            return Err(Error::parse(
                "format_version",
                format!("unsupported version {}", file.format_version),
            ));
        }
        let lay = ParamLayout::new(file.d, file.m_h, file.m_a);
        let mut flat = Vec::with_capacity(lay.len);
        for (name, a, b) in lay.groups() {
            let values = file
                .arrays
                .iter()
                .find(|(n, _)| n == name)
                .map(|(_, v)| v)
                .ok_or_else(|| Error::parse(name, "array missing"))?;
            if values.len() != b - a {
                return Err(Error::parse(
                    name,
                    format!("expected {} values, found {}", b - a, values.len()),
                ));
            }
            flat.extend_from_slice(values);
        }
        let params = Self::from_vec(file.d, file.m_h, file.m_a, &flat)?;
        params.validate()?;
        Ok(params)
    }
}

#[derive(Debug, Serialize, Deserialize)]
struct CheckpointFile {
    format_version: u32,
    d: usize,
    m_h: usize,
    m_a: usize,
    /// `(name, values)` pairs in flattening order.
    arrays: Vec<(String, Vec<f64>)>,
}

/// Parameters i.i.d. uniform on `[-scale, scale]`.
pub fn init_params(d: usize, m_h: usize, m_a: usize, scale: f64, seed: u64) -> Result<NdoParams> {
    if !(scale >= 0.0) || !scale.is_finite() {
        return Err(Error::invalid(format!(
            "init scale {scale} must be finite and non-negative"
        )));
    }
    let len = ParamLayout::new(d, m_h, m_a).len;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let flat: Vec<f64> = (0..len)
        .map(|_| {
            if scale > 0.0 {
                rng.random_range(-scale..=scale)
            } else {
                0.0
            }
        })
        .collect();
    NdoParams::from_vec(d, m_h, m_a, &flat)
}

/// Everything one evaluation of the network produces: the `A` matrix, `log Z`,
/// the normalized density matrix, and the logistic factors reused by the
/// derivatives.
#[derive(Debug, Clone)]
pub struct NdoForward {
    pub layout: ParamLayout,
    /// `sigma(W_l[i, v] + c_l[i])`, `m_h x d`.
    sig_lambda: DMatrix<f64>,
    /// `sigma(W_m[i, v] + c_m[i])`, `m_h x d`.
    sig_mu: DMatrix<f64>,
    /// Complex logistic of the ancilla argument, indexed `(v * d + v') * m_a + i`.
    sig_pi: Vec<C64>,
    pub a: CMatrix,
    pub log_z: f64,
    pub rho: CMatrix,
}

impl NdoForward {
    pub fn new(p: &NdoParams) -> Self {
        let lay = p.layout();
        let (d, mh, ma) = (lay.d, lay.m_h, lay.m_a);
        let mut sp_lambda = vec![0.0; d];
        let mut sp_mu = vec![0.0; d];
        let mut sig_lambda = DMatrix::zeros(mh, d);
        let mut sig_mu = DMatrix::zeros(mh, d);
        for v in 0..d {
            for i in 0..mh {
                let xl = p.w_lambda[(i, v)] + p.c_lambda[i];
                let xm = p.w_mu[(i, v)] + p.c_mu[i];
                sp_lambda[v] += softplus(xl);
                sp_mu[v] += softplus(xm);
                sig_lambda[(i, v)] = sigmoid(xl);
                sig_mu[(i, v)] = sigmoid(xm);
            }
        }
        let mut a = CMatrix::zeros(d, d);
        let mut sig_pi = vec![ZERO; d * d * ma];
        for v in 0..d {
            for w in 0..d {
                let gamma_plus = 0.5 * (sp_lambda[v] + sp_lambda[w] + p.b_lambda[v] + p.b_lambda[w]);
                let gamma_minus = 0.5 * (sp_mu[v] - sp_mu[w] + p.b_mu[v] - p.b_mu[w]);
                let mut pi = ZERO;
                for i in 0..ma {
                    let z = C64::new(
                        0.5 * (p.u_lambda[(i, v)] + p.u_lambda[(i, w)]) + p.d_lambda[i],
                        0.5 * (p.u_mu[(i, v)] - p.u_mu[(i, w)]),
                    );
                    pi += complex_softplus(z);
                    sig_pi[(v * d + w) * ma + i] = complex_sigmoid(z);
                }
                a[(v, w)] = C64::new(gamma_plus, gamma_minus) + pi;
            }
        }
        // The diagonal of A is real; log Z is a log-sum-exp over it.
        let max_diag = (0..d).map(|v| a[(v, v)].re).fold(f64::NEG_INFINITY, f64::max);
        let log_z = max_diag + (0..d).map(|v| (a[(v, v)].re - max_diag).exp()).sum::<f64>().ln();
        let mut rho = a.map(|x| (x - log_z).exp());
        // Exact Hermitian symmetry and a real diagonal.
        for v in 0..d {
            rho[(v, v)].im = 0.0;
            for w in (v + 1)..d {
                rho[(w, v)] = rho[(v, w)].conj();
            }
        }
        Self {
            layout: lay,
            sig_lambda,
            sig_mu,
            sig_pi,
            a,
            log_z,
            rho,
        }
    }

    /// Calls `f(k, dA(v, v')/d theta_k)` for every structurally nonzero
    /// derivative. An index may be visited more than once; contributions add.
    #[inline]
    pub fn visit_grad_a(&self, v: usize, w: usize, mut f: impl FnMut(usize, C64)) {
        let lay = &self.layout;
        let d = lay.d;
        for i in 0..lay.m_h {
            let (sv, sw) = (self.sig_lambda[(i, v)], self.sig_lambda[(i, w)]);
            f(lay.w_lambda + i * d + v, C64::new(0.5 * sv, 0.0));
            f(lay.w_lambda + i * d + w, C64::new(0.5 * sw, 0.0));
            f(lay.c_lambda + i, C64::new(0.5 * (sv + sw), 0.0));
            let (mv, mw) = (self.sig_mu[(i, v)], self.sig_mu[(i, w)]);
            f(lay.w_mu + i * d + v, C64::new(0.0, 0.5 * mv));
            f(lay.w_mu + i * d + w, C64::new(0.0, -0.5 * mw));
            f(lay.c_mu + i, C64::new(0.0, 0.5 * (mv - mw)));
        }
        f(lay.b_lambda + v, C64::new(0.5, 0.0));
        f(lay.b_lambda + w, C64::new(0.5, 0.0));
        f(lay.b_mu + v, C64::new(0.0, 0.5));
        f(lay.b_mu + w, C64::new(0.0, -0.5));
        let base = (v * d + w) * lay.m_a;
        for i in 0..lay.m_a {
            let s = self.sig_pi[base + i];
            let half = s * 0.5;
            f(lay.u_lambda + i * d + v, half);
            f(lay.u_lambda + i * d + w, half);
            f(lay.u_mu + i * d + v, half * I);
            f(lay.u_mu + i * d + w, -half * I);
            f(lay.d_lambda + i, s);
        }
    }

    /// Dense `grad A(v, v')`.
    pub fn grad_a(&self, v: usize, w: usize) -> Vec<C64> {
        let mut g = vec![ZERO; self.layout.len];
        self.visit_grad_a(v, w, |k, x| g[k] += x);
        g
    }

    /// `grad log Z = sum_v rho(v, v) grad A(v, v)`, a real vector.
    pub fn grad_log_z(&self) -> Vec<f64> {
        let mut g = vec![0.0; self.layout.len];
        for v in 0..self.layout.d {
            let weight = self.rho[(v, v)].re;
            self.visit_grad_a(v, v, |k, x| g[k] += weight * x.re);
        }
        g
    }

    pub fn density_matrix(&self) -> DensityMatrix {
        DensityMatrix::from_matrix_unchecked(self.rho.clone())
    }
}

fn encoding_dim_check(params: &NdoParams, v: &VisibleEncoding) {
    assert_eq!(
        v.dim,
        params.dim(),
        "visible encoding dimension does not match parameters"
    );
}

/// `A(v, v')` evaluated directly from the parameters.
pub fn a_entry(params: &NdoParams, v: &VisibleEncoding, vp: &VisibleEncoding) -> C64 {
    encoding_dim_check(params, v);
    encoding_dim_check(params, vp);
    let (v, w) = (v.index, vp.index);
    let sp = |wm: &DMatrix<f64>, c: &DVector<f64>, col: usize| -> f64 {
        (0..c.len()).map(|i| softplus(wm[(i, col)] + c[i])).sum()
    };
    let gamma_plus = 0.5
        * (sp(&params.w_lambda, &params.c_lambda, v)
            + sp(&params.w_lambda, &params.c_lambda, w)
            + params.b_lambda[v]
            + params.b_lambda[w]);
    let gamma_minus =
        0.5 * (sp(&params.w_mu, &params.c_mu, v) - sp(&params.w_mu, &params.c_mu, w) + params.b_mu[v] - params.b_mu[w]);
    let pi: C64 = (0..params.ancilla())
        .map(|i| {
            complex_softplus(C64::new(
                0.5 * (params.u_lambda[(i, v)] + params.u_lambda[(i, w)]) + params.d_lambda[i],
                0.5 * (params.u_mu[(i, v)] - params.u_mu[(i, w)]),
            ))
        })
        .sum();
    C64::new(gamma_plus, gamma_minus) + pi
}

/// `log Z = log sum_v exp A(v, v)`.
pub fn log_z(params: &NdoParams) -> f64 {
    NdoForward::new(params).log_z
}

/// `rho(v, v') = exp(A(v, v')) / Z`.
pub fn density_matrix(params: &NdoParams) -> DensityMatrix {
    NdoForward::new(params).density_matrix()
}

/// Analytic `dA(v, v')/d theta` over the flattened parameter vector.
pub fn grad_a(params: &NdoParams, v: &VisibleEncoding, vp: &VisibleEncoding) -> Vec<C64> {
    encoding_dim_check(params, v);
    encoding_dim_check(params, vp);
    NdoForward::new(params).grad_a(v.index, vp.index)
}

/// Builds the mixed state by explicit purification: enumerate every binary
/// ancilla configuration `a`, form `Psi(v, a) = sqrt(p_l(v, a)) exp(i log p_m(v, a) / 2)`
/// with the hidden layer summed out, and trace the ancilla from `|Psi><Psi|`.
///
/// `d_mu` is an ancilla phase bias absent from [`NdoParams`]; it enters here
/// only to show that it cancels.
pub fn purification_oracle_with_phase_bias(params: &NdoParams, d_mu: &[f64]) -> Result<DensityMatrix> {
    let (d, ma) = (params.dim(), params.ancilla());
    if ma > MAX_ORACLE_ANCILLA {
        return Err(Error::EnumerationTooLarge {
            m_a: ma,
            limit: MAX_ORACLE_ANCILLA,
        });
    }
    if d_mu.len() != ma {
        return Err(Error::DimensionMismatch {
            expected: ma,
            found: d_mu.len(),
        });
    }
    let log_p =
        |w: &DMatrix<f64>, u: &DMatrix<f64>, b: &DVector<f64>, c: &DVector<f64>, dv: &[f64], v: usize, a: u32| {
            let mut s: f64 = (0..c.len()).map(|i| softplus(w[(i, v)] + c[i])).sum();
            s += b[v];
            for k in 0..ma {
                if a >> k & 1 == 1 {
                    s += u[(k, v)] + dv[k];
                }
            }
            s
        };
    let d_lambda: Vec<f64> = params.d_lambda.iter().copied().collect();
    // Log-amplitudes can be large; shift by their maximum before exponentiating.
    let mut log_amp = vec![0.0; d << ma];
    let mut phase = vec![0.0; d << ma];
    for a in 0..(1u32 << ma) {
        for v in 0..d {
            let idx = (a as usize) * d + v;
            log_amp[idx] = 0.5
                * log_p(
                    &params.w_lambda,
                    &params.u_lambda,
                    &params.b_lambda,
                    &params.c_lambda,
                    &d_lambda,
                    v,
                    a,
                );
            phase[idx] = 0.5 * log_p(&params.w_mu, &params.u_mu, &params.b_mu, &params.c_mu, d_mu, v, a);
        }
    }
    let shift = log_amp.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut rho = CMatrix::zeros(d, d);
    for a in 0..(1usize << ma) {
        let psi: Vec<C64> = (0..d)
            .map(|v| C64::from_polar((log_amp[a * d + v] - shift).exp(), phase[a * d + v]))
            .collect();
        for v in 0..d {
            for w in 0..d {
                rho[(v, w)] += psi[v] * psi[w].conj();
            }
        }
    }
    let tr = rho.trace();
    Ok(DensityMatrix::from_matrix_unchecked(rho / tr))
}

/// [`purification_oracle_with_phase_bias`] with `d_mu = 0`.
pub fn purification_oracle(params: &NdoParams) -> Result<DensityMatrix> {
    purification_oracle_with_phase_bias(params, &vec![0.0; params.ancilla()])
}
