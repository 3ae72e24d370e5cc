use std::path::Path;

use ndarray::{Array1, Array2, ArrayView2};
use serde::{Deserialize, Deserializer, Serialize, Serializer};

use super::{fit_kernel, fit_nystrom_with, KernelEstimator, NystromEstimator, PolyEstimator};
use crate::bounds::PacCertificate;
use crate::error::{Error, Result};
use crate::kernel::KernelSpec;
use crate::polybasis::MultiIndexBasis;

/// Kernel estimates larger than this are saved without their factor and
/// refit (deterministically) on load; an N×N factor in JSON grows fast.
const STORED_FACTOR_MAX: usize = 1024;

/// Fixed per-axis affine change of coordinates `(x - center) / scale`,
/// applied before fitting and before every evaluation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AxisScaling {
    pub center: Vec<f64>,
    pub scale: Vec<f64>,
}

impl AxisScaling {
    pub fn new(center: Vec<f64>, scale: Vec<f64>) -> Result<Self> {
        if center.len() != scale.len() {
            return Err(Error::DimensionMismatch {
                expected: center.len(),
                got: scale.len(),
            });
        }
        if center.iter().any(|c| !c.is_finite()) || scale.iter().any(|s| !(*s > 0.0 && s.is_finite())) {
            return Err(Error::argument("scaling needs finite centers and positive scales"));
        }
        Ok(Self { center, scale })
    }

    pub fn dim(&self) -> usize {
        self.center.len()
    }

    pub fn apply(&self, points: ArrayView2<f64>) -> Result<Array2<f64>> {
        if points.ncols() != self.dim() {
            return Err(Error::DimensionMismatch {
                expected: self.dim(),
                got: points.ncols(),
            });
        }
        let mut out = points.to_owned();
        for mut row in out.rows_mut() {
            for ((v, c), s) in row.iter_mut().zip(&self.center).zip(&self.scale) {
                *v = (*v - c) / s;
            }
        }
        Ok(out)
    }
}

#[derive(Debug, Clone)]
pub enum Estimator {
    Poly(PolyEstimator),
    Kernel(KernelEstimator),
    Nystrom(NystromEstimator),
}

impl Estimator {
    pub fn dim(&self) -> usize {
        match self {
            Estimator::Poly(e) => e.basis().n(),
            Estimator::Kernel(e) => e.dim(),
            Estimator::Nystrom(e) => e.dim(),
        }
    }

    pub fn n_samples(&self) -> usize {
        match self {
            Estimator::Poly(e) => e.n_samples(),
            Estimator::Kernel(e) => e.n_samples(),
            Estimator::Nystrom(e) => e.n_samples(),
        }
    }

    pub fn eval_batch(&self, points: ArrayView2<f64>) -> Result<Array1<f64>> {
        match self {
            Estimator::Poly(e) => e.eval_batch(points),
            Estimator::Kernel(e) => e.eval_batch(points),
            Estimator::Nystrom(e) => e.eval_batch(points),
        }
    }
}

/// The set `{x : κ⁻¹(x) ≤ threshold}` together with its certificate.
#[derive(Debug, Clone)]
pub struct SupportEstimate {
    estimator: Estimator,
    threshold: f64,
    scaling: Option<AxisScaling>,
    certificate: PacCertificate,
}

impl SupportEstimate {
    /// `threshold` may be `+∞` (everything is inside) or `0`.
    pub fn new(estimator: Estimator, threshold: f64, certificate: PacCertificate) -> Result<Self> {
        if !(threshold >= 0.0) {
            return Err(Error::argument(format!("threshold must be >= 0, got {threshold}")));
        }
        Ok(Self {
            estimator,
            threshold,
            scaling: None,
            certificate,
        })
    }

    pub fn with_scaling(mut self, scaling: Option<AxisScaling>) -> Result<Self> {
        if let Some(s) = &scaling {
            if s.dim() != self.estimator.dim() {
                return Err(Error::DimensionMismatch {
                    expected: self.estimator.dim(),
                    got: s.dim(),
                });
            }
        }
        self.scaling = scaling;
        Ok(self)
    }

    pub fn estimator(&self) -> &Estimator {
        &self.estimator
    }

    pub fn threshold(&self) -> f64 {
        self.threshold
    }

    pub fn scaling(&self) -> Option<&AxisScaling> {
        self.scaling.as_ref()
    }

    pub fn certificate(&self) -> &PacCertificate {
        &self.certificate
    }

    pub fn dim(&self) -> usize {
        self.estimator.dim()
    }

    /// Estimator values at points given in original coordinates.
    pub fn values(&self, points: ArrayView2<f64>) -> Result<Array1<f64>> {
        if points.ncols() != self.dim() {
            return Err(Error::DimensionMismatch {
                expected: self.dim(),
                got: points.ncols(),
            });
        }
        match &self.scaling {
            Some(s) => self.estimator.eval_batch(s.apply(points)?.view()),
            None => self.estimator.eval_batch(points),
        }
    }

    pub fn value(&self, x: &[f64]) -> Result<f64> {
        let p = Array2::from_shape_vec((1, x.len()), x.to_vec()).expect("row shape");
        Ok(self.values(p.view())?[0])
    }

    /// Boundary points count as inside.
    pub fn contains(&self, x: &[f64]) -> Result<bool> {
        Ok(self.value(x)? <= self.threshold)
    }

    pub fn contains_batch(&self, points: ArrayView2<f64>) -> Result<Vec<bool>> {
        Ok(self.values(points)?.iter().map(|v| *v <= self.threshold).collect())
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string(&self.to_document())?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let doc: EstimateDocument = serde_json::from_str(text)?;
        Self::from_document(doc)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_json()?).map_err(|source| Error::Io {
            path: path.to_owned(),
            source,
        })
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|source| Error::Io {
            path: path.to_owned(),
            source,
        })?;
        Self::from_json(&text)
    }

    fn to_document(&self) -> EstimateDocument {
        let mut doc = EstimateDocument {
            format: 1,
            kind: String::new(),
            n: self.dim(),
            m: None,
            kernel: None,
            sigma0_sq: 0.0,
            n_samples: self.estimator.n_samples(),
            threshold: Threshold(self.threshold),
            scaling: self.scaling.clone(),
            factor: None,
            data: None,
            landmarks: None,
            certificate: self.certificate.clone(),
        };
        match &self.estimator {
            Estimator::Poly(e) => {
                doc.kind = "poly".into();
                doc.m = Some(e.basis().m());
                doc.sigma0_sq = e.sigma0_sq();
                doc.factor = Some(lower_rows(e.factor()));
            }
            Estimator::Kernel(e) => {
                doc.kind = "kernel".into();
                doc.kernel = Some(e.kernel_spec().clone());
                doc.sigma0_sq = e.sigma0_sq();
                doc.data = Some(rows(e.data()));
                if e.n_samples() <= STORED_FACTOR_MAX {
                    doc.factor = Some(lower_rows(e.factor()));
                }
            }
            Estimator::Nystrom(e) => {
                doc.kind = "nystrom".into();
                doc.kernel = Some(e.kernel_spec().clone());
                doc.sigma0_sq = e.sigma0_sq();
                doc.data = Some(rows(e.data()));
                doc.landmarks = Some(e.landmarks().to_vec());
            }
        }
        doc
    }

    fn from_document(doc: EstimateDocument) -> Result<Self> {
        if doc.format != 1 {
            return Err(Error::config("format", format!("unsupported version {}", doc.format)));
        }
        let data = |doc: &EstimateDocument| -> Result<Array2<f64>> {
            let rows = doc.data.as_ref().ok_or_else(|| Error::config("data", "missing"))?;
            from_rows(rows, doc.n)
        };
        let kernel = |doc: &EstimateDocument| -> Result<KernelSpec> {
            doc.kernel.clone().ok_or_else(|| Error::config("kernel", "missing"))
        };
        let estimator = match doc.kind.as_str() {
            "poly" => {
                let m = doc.m.ok_or_else(|| Error::config("m", "missing"))?;
                let basis = MultiIndexBasis::new(doc.n, m)?;
                let rows = doc.factor.as_ref().ok_or_else(|| Error::config("factor", "missing"))?;
                let factor = from_lower_rows(rows, basis.dim())?;
                Estimator::Poly(PolyEstimator::from_parts(basis, doc.sigma0_sq, doc.n_samples, factor)?)
            }
            "kernel" => {
                let spec = kernel(&doc)?;
                let points = data(&doc)?;
                match &doc.factor {
                    Some(rows) => {
                        let factor = from_lower_rows(rows, points.nrows())?;
                        Estimator::Kernel(KernelEstimator::from_parts(&spec, doc.sigma0_sq, points, factor)?)
                    }
                    None => Estimator::Kernel(fit_kernel(points.view(), &spec, doc.sigma0_sq, usize::MAX)?),
                }
            }
            "nystrom" => {
                let spec = kernel(&doc)?;
                let points = data(&doc)?;
                let landmarks = doc
                    .landmarks
                    .clone()
                    .ok_or_else(|| Error::config("landmarks", "missing"))?;
                Estimator::Nystrom(fit_nystrom_with(points.view(), &spec, doc.sigma0_sq, landmarks)?)
            }
            other => return Err(Error::config("type", format!("unknown estimator type {other:?}"))),
        };
        if estimator.n_samples() != doc.n_samples {
            return Err(Error::config(
                "N",
                format!(
                    "declares {} samples, estimator has {}",
                    doc.n_samples,
                    estimator.n_samples()
                ),
            ));
        }
        Self::new(estimator, doc.threshold.0, doc.certificate)?.with_scaling(doc.scaling)
    }
}

fn rows(a: &Array2<f64>) -> Vec<Vec<f64>> {
    a.rows().into_iter().map(|r| r.to_vec()).collect()
}

fn lower_rows(l: &Array2<f64>) -> Vec<Vec<f64>> {
    l.rows()
        .into_iter()
        .enumerate()
        .map(|(i, r)| r.iter().take(i + 1).cloned().collect())
        .collect()
}

fn from_rows(rows: &[Vec<f64>], n: usize) -> Result<Array2<f64>> {
    let mut flat = Vec::with_capacity(rows.len() * n);
    for (i, r) in rows.iter().enumerate() {
        if r.len() != n {
            return Err(Error::config(
                format!("data[{i}]"),
                format!("expected {n} values, got {}", r.len()),
            ));
        }
        flat.extend_from_slice(r);
    }
    Ok(Array2::from_shape_vec((rows.len(), n), flat).expect("shape checked"))
}

fn from_lower_rows(rows: &[Vec<f64>], d: usize) -> Result<Array2<f64>> {
    if rows.len() != d {
        return Err(Error::config(
            "factor",
            format!("expected {d} rows, got {}", rows.len()),
        ));
    }
    let mut l = Array2::zeros((d, d));
    for (i, r) in rows.iter().enumerate() {
        if r.len() != i + 1 {
            return Err(Error::config(
                format!("factor[{i}]"),
                format!("expected {} values", i + 1),
            ));
        }
        for (j, v) in r.iter().enumerate() {
            l[[i, j]] = *v;
        }
    }
    Ok(l)
}

/// Threshold in JSON: a number, or the string `"inf"`.
#[derive(Debug, Clone, Copy)]
struct Threshold(f64);

impl Serialize for Threshold {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        if self.0.is_finite() {
            s.serialize_f64(self.0)
        } else {
            s.serialize_str("inf")
        }
    }
}

impl<'de> Deserialize<'de> for Threshold {
    fn deserialize<D: Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        #[derive(Deserialize)]
        #[serde(untagged)]
        enum Raw {
            Number(f64),
            Text(String),
        }
        match Raw::deserialize(d)? {
            Raw::Number(v) => Ok(Threshold(v)),
            Raw::Text(t) if t == "inf" => Ok(Threshold(f64::INFINITY)),
            Raw::Text(t) => Err(serde::de::Error::custom(format!("bad threshold {t:?}"))),
        }
    }
}

#[derive(Serialize, Deserialize)]
struct EstimateDocument {
    format: u32,
    #[serde(rename = "type")]
    kind: String,
    n: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    m: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    kernel: Option<KernelSpec>,
    sigma0_sq: f64,
    #[serde(rename = "N")]
    n_samples: usize,
    threshold: Threshold,
    #[serde(default)]
    scaling: Option<AxisScaling>,
    #[serde(default)]
    factor: Option<Vec<Vec<f64>>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    data: Option<Vec<Vec<f64>>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    landmarks: Option<Vec<usize>>,
    certificate: PacCertificate,
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::estimators::{fit_nystrom, fit_poly, LandmarkRule};
    use ndarray::array;

    fn cloud() -> Array2<f64> {
        Array2::from_shape_fn((30, 2), |(i, j)| ((i * 7 + j * 3) % 11) as f64 / 11.0 - 0.4)
    }

    fn queries(dim: usize) -> Array2<f64> {
        Array2::from_shape_fn((17, dim), |(i, j)| (i as f64 * 0.13 + j as f64 * 0.7).sin())
    }

    fn roundtrip(e: &SupportEstimate) {
        let back = SupportEstimate::from_json(&e.to_json().unwrap()).unwrap();
        let q = queries(e.dim());
        let a = e.values(q.view()).unwrap();
        let b = back.values(q.view()).unwrap();
        for (x, y) in a.iter().zip(b.iter()) {
            assert_eq!(x.to_bits(), y.to_bits());
        }
        assert_eq!(back.threshold().to_bits(), e.threshold().to_bits());
        assert_eq!(back.certificate(), e.certificate());
    }

    #[test]
    fn poly_roundtrip_is_bit_exact() {
        let basis = MultiIndexBasis::new(2, 4).unwrap();
        let est = fit_poly(cloud().view(), &basis, 1e-3).unwrap();
        let e = SupportEstimate::new(
            Estimator::Poly(est),
            12.345_678_901_234_567,
            PacCertificate::uncertified(30),
        )
        .unwrap()
        .with_scaling(Some(AxisScaling::new(vec![0.1, -0.2], vec![2.0, 0.5]).unwrap()))
        .unwrap();
        roundtrip(&e);
    }

    #[test]
    fn kernel_and_nystrom_roundtrip() {
        let spec = KernelSpec::SquaredExponential { lengthscale: 0.3 };
        let k = fit_kernel(cloud().view(), &spec, 0.1, 100).unwrap();
        roundtrip(&SupportEstimate::new(Estimator::Kernel(k), 0.15, PacCertificate::uncertified(30)).unwrap());
        let ny = fit_nystrom(cloud().view(), &spec, 0.1, 7, LandmarkRule::UniformRandom { seed: 3 }).unwrap();
        roundtrip(&SupportEstimate::new(Estimator::Nystrom(ny), 0.15, PacCertificate::uncertified(30)).unwrap());
    }

    #[test]
    fn infinite_threshold_and_ties() {
        let basis = MultiIndexBasis::new(1, 1).unwrap();
        let est = fit_poly(array![[0.0]].view(), &basis, 1.0).unwrap();
        let all = SupportEstimate::new(
            Estimator::Poly(est.clone()),
            f64::INFINITY,
            PacCertificate::uncertified(1),
        )
        .unwrap();
        assert!(all.contains(&[1e6]).unwrap());
        let json = all.to_json().unwrap();
        assert!(json.contains(r#""threshold":"inf""#));
        roundtrip(&all);
        let at3 = all.value(&[3.0]).unwrap();
        let tie = SupportEstimate::new(Estimator::Poly(est), at3, PacCertificate::uncertified(1)).unwrap();
        assert!(tie.contains(&[3.0]).unwrap());
        assert!(!tie.contains(&[3.1]).unwrap());
        assert!(SupportEstimate::new(tie.estimator().clone(), -1.0, PacCertificate::uncertified(1)).is_err());
    }

    #[test]
    fn rejects_wrong_dimension_and_bad_documents() {
        let basis = MultiIndexBasis::new(2, 1).unwrap();
        let est = fit_poly(cloud().view(), &basis, 1.0).unwrap();
        let e = SupportEstimate::new(Estimator::Poly(est), 1.0, PacCertificate::uncertified(30)).unwrap();
        assert!(e.value(&[1.0]).is_err());
        assert!(SupportEstimate::from_json("{}").is_err());
        let bad = e.to_json().unwrap().replace(r#""type":"poly""#, r#""type":"spline""#);
        assert!(SupportEstimate::from_json(&bad).is_err());
    }
}
