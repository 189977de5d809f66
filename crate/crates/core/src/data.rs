//! Trajectory logs, incrementally maintained sample covariances, excitation
//! diagnostics and least-squares identification.
//!
//! With `d_t = [u_t; x_t]` and `D = [d_0, …, d_{t-1}]` the covariance form is
//! `Λ = D Dᵀ / t`, `X̄₁ = X₁ Dᵀ / t` and so on. Because the input and state
//! blocks of `D` are stacked, `Λ = [Ū₀; X̄₀]` holds by construction.

use std::io::{Read, Write};

use crate::error::{check_shape, Error, Result};
use crate::linalg::{self, Mat, Vector};
use crate::lti::LtiSystem;

/// Threshold on `σ_min(Λ)` below which data is treated as not persistently exciting.
pub const PE_TOL: f64 = 1e-8;
const LAMBDA_EIG_FLOOR: f64 = 1e-12;

/// Raw column blocks `X₀`, `U₀`, `X₁` and, when known, the true noises `W₀`.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct DataLog {
    n: usize,
    m: usize,
    x0: Vec<Vector>,
    u0: Vec<Vector>,
    x1: Vec<Vector>,
    w0: Option<Vec<Vector>>,
    // running Σ w wᵀ, kept alongside `w0`
    w_gram: Option<Mat>,
}

impl DataLog {
    pub fn new(n: usize, m: usize) -> Self {
        Self {
            n,
            m,
            ..Default::default()
        }
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn m(&self) -> usize {
        self.m
    }

    pub fn len(&self) -> usize {
        self.x0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.x0.is_empty()
    }

    /// Noise is retained only if every sample supplied it.
    pub fn has_noise(&self) -> bool {
        self.w0.is_some()
    }

    pub fn push(
        &mut self,
        x: &Vector,
        u: &Vector,
        x_next: &Vector,
        w: Option<&Vector>,
    ) -> Result<()> {
        check_shape("DataLog x", x.shape(), (self.n, 1))?;
        check_shape("DataLog u", u.shape(), (self.m, 1))?;
        check_shape("DataLog x_next", x_next.shape(), (self.n, 1))?;
        if let Some(w) = w {
            check_shape("DataLog w", w.shape(), (self.n, 1))?;
        }
        match (self.is_empty(), &mut self.w0, w) {
            (true, slot, Some(w)) => {
                *slot = Some(vec![w.clone()]);
                self.w_gram = Some(w * w.transpose());
            }
            (false, Some(ws), Some(w)) => {
                ws.push(w.clone());
                if let Some(g) = self.w_gram.as_mut() {
                    *g += w * w.transpose();
                }
            }
            (_, slot, None) => {
                *slot = None;
                self.w_gram = None;
            }
            (false, None, Some(_)) => {}
        }
        self.x0.push(x.clone());
        self.u0.push(u.clone());
        self.x1.push(x_next.clone());
        Ok(())
    }

    fn block(cols: &[Vector], rows: usize) -> Mat {
        let mut out = Mat::zeros(rows, cols.len());
        for (j, c) in cols.iter().enumerate() {
            out.set_column(j, c);
        }
        out
    }

    pub fn x0(&self) -> Mat {
        Self::block(&self.x0, self.n)
    }

    pub fn u0(&self) -> Mat {
        Self::block(&self.u0, self.m)
    }

    pub fn x1(&self) -> Mat {
        Self::block(&self.x1, self.n)
    }

    pub fn w0(&self) -> Option<Mat> {
        self.w0.as_ref().map(|w| Self::block(w, self.n))
    }

    /// `D₀ = [U₀; X₀]`.
    pub fn d0(&self) -> Mat {
        linalg::vstack(&self.u0(), &self.x0())
    }

    pub fn sample(&self, i: usize) -> (&Vector, &Vector, &Vector) {
        (&self.x0[i], &self.u0[i], &self.x1[i])
    }

    /// Writes `x1..xn,u1..um,x1'..xn'` rows.
    pub fn write_csv<W: Write>(&self, writer: W) -> Result<()> {
        let mut wtr = csv::Writer::from_writer(writer);
        let header: Vec<String> = (1..=self.n)
            .map(|i| format!("x{i}"))
            .chain((1..=self.m).map(|i| format!("u{i}")))
            .chain((1..=self.n).map(|i| format!("x{i}'")))
            .collect();
        wtr.write_record(&header).map_err(csv_err)?;
        for i in 0..self.len() {
            let (x, u, xn) = self.sample(i);
            let row: Vec<String> = x
                .iter()
                .chain(u.iter())
                .chain(xn.iter())
                .map(|v| format!("{v:e}"))
                .collect();
            wtr.write_record(&row).map_err(csv_err)?;
        }
        wtr.flush().map_err(|e| Error::Csv(e.to_string()))
    }

    /// Reads a log written by [`DataLog::write_csv`]; dimensions come from the header.
    pub fn read_csv<R: Read>(reader: R) -> Result<Self> {
        let mut rdr = csv::Reader::from_reader(reader);
        let header = rdr.headers().map_err(csv_err)?.clone();
        let names: Vec<&str> = header.iter().map(str::trim).collect();
        let n = names
            .iter()
            .filter(|h| h.starts_with('x') && !h.ends_with('\''))
            .count();
        let m = names.iter().filter(|h| h.starts_with('u')).count();
        let expected: Vec<String> = (1..=n)
            .map(|i| format!("x{i}"))
            .chain((1..=m).map(|i| format!("u{i}")))
            .chain((1..=n).map(|i| format!("x{i}'")))
            .collect();
        if n == 0 || m == 0 || names != expected {
            return Err(Error::Csv(format!(
                "unexpected header {names:?}, expected {expected:?}"
            )));
        }
        let mut log = DataLog::new(n, m);
        for (line, rec) in rdr.records().enumerate() {
            let rec = rec.map_err(csv_err)?;
            let vals: Vec<f64> = rec
                .iter()
                .map(|s| s.trim().parse::<f64>())
                .collect::<std::result::Result<_, _>>()
                .map_err(|e| Error::Csv(format!("line {}: {e}", line + 2)))?;
            if vals.len() != 2 * n + m {
                return Err(Error::Csv(format!(
                    "line {}: expected {} fields",
                    line + 2,
                    2 * n + m
                )));
            }
            let x = Vector::from_column_slice(&vals[..n]);
            let u = Vector::from_column_slice(&vals[n..n + m]);
            let xn = Vector::from_column_slice(&vals[n + m..]);
            log.push(&x, &u, &xn, None)?;
        }
        Ok(log)
    }
}

fn csv_err(e: csv::Error) -> Error {
    Error::Csv(e.to_string())
}

/// Sample covariances `Λ`, `X̄₁` and (oracle only) `W̄₀`.
#[derive(Debug, Clone, PartialEq)]
pub struct CovarianceData {
    n: usize,
    m: usize,
    t: usize,
    lambda: Mat,
    xbar1: Mat,
    wbar0: Option<Mat>,
}

impl CovarianceData {
    pub fn new(n: usize, m: usize) -> Self {
        Self {
            n,
            m,
            t: 0,
            lambda: Mat::zeros(n + m, n + m),
            xbar1: Mat::zeros(n, n + m),
            wbar0: Some(Mat::zeros(n, n + m)),
        }
    }

    /// Covariance data from precomputed moments `Λ` and `X̄₁` over `t` samples.
    pub fn from_moments(n: usize, m: usize, t: usize, lambda: Mat, xbar1: Mat) -> Result<Self> {
        check_shape("CovarianceData Lambda", lambda.shape(), (n + m, n + m))?;
        check_shape("CovarianceData Xbar1", xbar1.shape(), (n, n + m))?;
        Ok(Self {
            n,
            m,
            t,
            lambda: linalg::symmetrize(&lambda),
            xbar1,
            wbar0: None,
        })
    }

    /// Batch construction from a full log.
    pub fn from_log(log: &DataLog) -> Self {
        let mut cov = Self::new(log.n(), log.m());
        let ws = log.w0.as_ref();
        for i in 0..log.len() {
            let (x, u, xn) = log.sample(i);
            cov.update(x, u, xn, ws.map(|w| &w[i]));
        }
        cov
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn m(&self) -> usize {
        self.m
    }

    pub fn t(&self) -> usize {
        self.t
    }

    pub fn lambda(&self) -> &Mat {
        &self.lambda
    }

    /// `Ū₀`, the first `m` rows of `Λ`.
    pub fn ubar0(&self) -> Mat {
        self.lambda.rows(0, self.m).into_owned()
    }

    /// `X̄₀`, the last `n` rows of `Λ`.
    pub fn xbar0(&self) -> Mat {
        self.lambda.rows(self.m, self.n).into_owned()
    }

    pub fn xbar1(&self) -> &Mat {
        &self.xbar1
    }

    pub fn wbar0(&self) -> Option<&Mat> {
        self.wbar0.as_ref()
    }

    /// Rank-one running-average update with `d = [u; x]`.
    pub fn update(&mut self, x: &Vector, u: &Vector, x_next: &Vector, w: Option<&Vector>) {
        let mut d = Vector::zeros(self.n + self.m);
        d.rows_mut(0, self.m).copy_from(u);
        d.rows_mut(self.m, self.n).copy_from(x);
        self.t += 1;
        let alpha = 1.0 / self.t as f64;
        let dt = d.transpose();
        self.lambda += (&d * &dt - &self.lambda) * alpha;
        self.lambda = linalg::symmetrize(&self.lambda);
        self.xbar1 += (x_next * &dt - &self.xbar1) * alpha;
        self.wbar0 = match (self.wbar0.take(), w) {
            (Some(mut wb), Some(w)) => {
                wb += (w * &dt - &wb) * alpha;
                Some(wb)
            }
            _ => None,
        };
    }

    /// `Λ⁻¹ rhs` by Cholesky, with an eigenvalue-floored pseudo-inverse fallback.
    pub fn lambda_solve(&self, rhs: &Mat) -> Mat {
        linalg::spd_solve(&self.lambda, rhs, LAMBDA_EIG_FLOOR)
    }

    pub(crate) fn require_pe(&self) -> Result<()> {
        let pe = pe_check(self);
        if pe.excited {
            Ok(())
        } else {
            Err(Error::RankDeficient {
                sigma_min: pe.sigma_min,
            })
        }
    }
}

/// Raw log plus its covariance compression, updated together.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub log: DataLog,
    pub cov: CovarianceData,
}

impl Dataset {
    pub fn new(n: usize, m: usize) -> Self {
        Self {
            log: DataLog::new(n, m),
            cov: CovarianceData::new(n, m),
        }
    }

    pub fn append_sample(
        &mut self,
        x: &Vector,
        u: &Vector,
        x_next: &Vector,
        w: Option<&Vector>,
    ) -> Result<()> {
        self.log.push(x, u, x_next, w)?;
        self.cov.update(x, u, x_next, w);
        Ok(())
    }

    pub fn t(&self) -> usize {
        self.cov.t()
    }
}

/// Persistent-excitation test result.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PeStatus {
    pub excited: bool,
    pub sigma_min: f64,
    /// `γ = sqrt(σ_min(Λ))`.
    pub gamma: f64,
}

pub fn pe_check(cov: &CovarianceData) -> PeStatus {
    if cov.t() == 0 {
        return PeStatus {
            excited: false,
            sigma_min: 0.0,
            gamma: 0.0,
        };
    }
    let sigma_min = linalg::min_sym_eigenvalue(cov.lambda());
    PeStatus {
        excited: sigma_min > PE_TOL,
        sigma_min,
        gamma: sigma_min.max(0.0).sqrt(),
    }
}

/// `[B̂, Â] = X̄₁ Λ⁻¹`.
pub fn ls_identify(cov: &CovarianceData) -> Result<LtiSystem> {
    cov.require_pe()?;
    let est = cov.lambda_solve(&cov.xbar1().transpose()).transpose();
    let b = est.columns(0, cov.m()).into_owned();
    let a = est.columns(cov.m(), cov.n()).into_owned();
    LtiSystem::new(a, b)
}

/// Excitation and noise levels of a dataset.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DataDiagnostics {
    pub gamma: f64,
    pub delta: f64,
    /// `γ/δ`; infinite when `δ = 0`.
    pub snr: f64,
    /// `σ_min(Ū₀)` of the normalized covariance block.
    pub sigma_min_ubar: f64,
    /// `σ_min(U₀)` of the raw `m × t` input block.
    pub sigma_min_u_raw: f64,
}

/// `δ` comes from the logged noise when available, otherwise from `noise_bound`.
pub fn snr_diagnostics(
    log: &DataLog,
    cov: &CovarianceData,
    noise_bound: Option<f64>,
) -> Result<DataDiagnostics> {
    let gamma = pe_check(cov).gamma;
    let delta = match (&log.w_gram, noise_bound) {
        (Some(gram), _) if !log.is_empty() => {
            let gram = gram / log.len() as f64;
            linalg::max_sym_eigenvalue(&gram).max(0.0).sqrt()
        }
        (_, Some(bound)) => bound,
        _ => {
            return Err(Error::Config(
                "noise level unknown: log carries no noise and no bound was configured".into(),
            ))
        }
    };
    let snr = if delta > 0.0 {
        gamma / delta
    } else {
        f64::INFINITY
    };
    // σ_min(U₀)² = t·λ_min(Λ_uu) since Λ_uu = U₀U₀ᵀ/t.
    let sigma_min_u_raw = if cov.t() >= cov.m() {
        let luu = cov.lambda().view((0, 0), (cov.m(), cov.m())).into_owned();
        (cov.t() as f64 * linalg::min_sym_eigenvalue(&luu))
            .max(0.0)
            .sqrt()
    } else {
        0.0
    };
    Ok(DataDiagnostics {
        gamma,
        delta,
        snr,
        sigma_min_ubar: linalg::sigma_min(&cov.ubar0()),
        sigma_min_u_raw,
    })
}

/// Rolls out `steps` samples with inputs drawn from the stream's exploration
/// level, logging the true noise.
pub fn collect_random_data(
    sys: &LtiSystem,
    x0: &Vector,
    steps: usize,
    noise: &mut crate::lti::NoiseStream,
) -> Result<(Dataset, Vector)> {
    let mut data = Dataset::new(sys.n(), sys.m());
    let mut x = x0.clone();
    for _ in 0..steps {
        let u = noise.exploration(sys.m());
        let w = noise.process(sys.n());
        let xn = sys.simulate_step(&x, &u, &w)?;
        data.append_sample(&x, &u, &xn, Some(&w))?;
        x = xn;
    }
    Ok((data, x))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lti::NoiseModel;
    use crate::presets;

    fn v(xs: &[f64]) -> Vector {
        Vector::from_column_slice(xs)
    }

    #[test]
    fn single_sample_covariance() {
        let mut cov = CovarianceData::new(2, 1);
        let (x, u, xn) = (v(&[1.0, 2.0]), v(&[3.0]), v(&[-1.0, 0.5]));
        cov.update(&x, &u, &xn, None);
        let d = v(&[3.0, 1.0, 2.0]);
        assert_eq!(cov.lambda(), &(&d * d.transpose()));
        assert_eq!(cov.xbar1(), &(&xn * d.transpose()));
        assert!(cov.wbar0().is_none());
        cov.update(&x, &u, &xn, None);
        assert!((cov.lambda() - &d * d.transpose()).amax() < 1e-15);
    }

    #[test]
    fn lambda_stacks_ubar_and_xbar() {
        let mut noise = NoiseModel::new(0.1, 1.0, 5).unwrap().stream();
        let sys = presets::benchmark_system(presets::Actuation::Under);
        let (data, _) = collect_random_data(&sys, &Vector::zeros(4), 12, &mut noise).unwrap();
        let stacked = linalg::vstack(&data.cov.ubar0(), &data.cov.xbar0());
        assert_eq!(&stacked, data.cov.lambda());
    }

    #[test]
    fn pe_cases() {
        let mut cov = CovarianceData::new(1, 1);
        assert!(!pe_check(&cov).excited);
        cov.update(&v(&[1.0]), &v(&[0.0]), &v(&[0.0]), None);
        cov.update(&v(&[0.0]), &v(&[1.0]), &v(&[0.0]), None);
        // Λ = I/2
        let pe = pe_check(&cov);
        assert!(pe.excited);
        assert!((pe.gamma - 0.5f64.sqrt()).abs() < 1e-15);

        let mut rep = CovarianceData::new(2, 1);
        for _ in 0..5 {
            rep.update(&v(&[1.0, 1.0]), &v(&[1.0]), &v(&[0.0, 0.0]), None);
        }
        let pe = pe_check(&rep);
        assert!(!pe.excited);
        assert!(pe.gamma < 1e-7);
        assert!(matches!(
            ls_identify(&rep),
            Err(Error::RankDeficient { .. })
        ));
    }

    #[test]
    fn identity_lambda_has_unit_gamma() {
        let cov =
            CovarianceData::from_moments(1, 1, 1, Mat::identity(2, 2), Mat::zeros(1, 2)).unwrap();
        let pe = pe_check(&cov);
        assert!(pe.excited);
        assert_eq!(pe.gamma, 1.0);
    }

    #[test]
    fn noise_free_identification_is_exact() {
        let sys = presets::benchmark_system_full();
        let mut noise = NoiseModel::new(0.0, 1.0, 11).unwrap().stream();
        let (data, _) = collect_random_data(&sys, &Vector::zeros(4), 9, &mut noise).unwrap();
        let est = ls_identify(&data.cov).unwrap();
        assert!((est.a() - sys.a()).amax() < 1e-10);
        assert!((est.b() - sys.b()).amax() < 1e-10);
    }

    #[test]
    fn diagnostics_need_noise_source() {
        let mut log = DataLog::new(1, 1);
        log.push(&v(&[1.0]), &v(&[1.0]), &v(&[1.0]), None).unwrap();
        let cov = CovarianceData::from_log(&log);
        assert!(matches!(
            snr_diagnostics(&log, &cov, None),
            Err(Error::Config(_))
        ));
        let d = snr_diagnostics(&log, &cov, Some(0.5)).unwrap();
        assert_eq!(d.delta, 0.5);

        let mut log = DataLog::new(1, 1);
        log.push(&v(&[1.0]), &v(&[0.0]), &v(&[1.0]), Some(&v(&[0.0])))
            .unwrap();
        log.push(&v(&[0.0]), &v(&[1.0]), &v(&[1.0]), Some(&v(&[0.0])))
            .unwrap();
        let cov = CovarianceData::from_log(&log);
        let d = snr_diagnostics(&log, &cov, None).unwrap();
        assert_eq!(d.delta, 0.0);
        assert!(d.snr.is_infinite());
    }

    #[test]
    fn noise_retention_is_all_or_nothing() {
        let mut log = DataLog::new(1, 1);
        log.push(&v(&[1.0]), &v(&[0.0]), &v(&[1.0]), Some(&v(&[0.1])))
            .unwrap();
        assert!(log.has_noise());
        log.push(&v(&[1.0]), &v(&[0.0]), &v(&[1.0]), None).unwrap();
        assert!(!log.has_noise());
        log.push(&v(&[1.0]), &v(&[0.0]), &v(&[1.0]), Some(&v(&[0.1])))
            .unwrap();
        assert!(!log.has_noise());
    }

    #[test]
    fn csv_roundtrip_is_bit_exact() {
        let sys = presets::benchmark_system(presets::Actuation::Under);
        let mut noise = NoiseModel::new(0.1, 1.0, 2).unwrap().stream();
        let (data, _) = collect_random_data(&sys, &Vector::zeros(4), 7, &mut noise).unwrap();
        let mut buf = Vec::new();
        data.log.write_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf.clone()).unwrap();
        assert!(text.starts_with("x1,x2,x3,x4,u1,u2,x1',x2',x3',x4'\n"));
        let back = DataLog::read_csv(buf.as_slice()).unwrap();
        assert_eq!(back.x0(), data.log.x0());
        assert_eq!(back.u0(), data.log.u0());
        assert_eq!(back.x1(), data.log.x1());
    }

    #[test]
    fn csv_rejects_bad_header() {
        let text = "x1,u1,y1\n1,2,3\n";
        assert!(DataLog::read_csv(text.as_bytes()).is_err());
        let text = "x1,u1,x1'\n1,2\n";
        assert!(DataLog::read_csv(text.as_bytes()).is_err());
    }
}
