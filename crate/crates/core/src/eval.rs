//! Detection-error trade-off analysis: operating points, detection cost,
//! equal error rate and DET plots on normal-deviate axes.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// One decision threshold. A trial is accepted when `score >= threshold`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OperatingPoint {
    pub threshold: f64,
    pub p_miss: f64,
    pub p_fa: f64,
}

/// Operating points ordered by increasing threshold: one per distinct score
/// plus a final `+inf` threshold that rejects everything.
#[derive(Debug, Clone, PartialEq)]
pub struct DetCurve {
    points: Vec<OperatingPoint>,
    n_target: usize,
    n_nontarget: usize,
}

impl DetCurve {
    pub fn points(&self) -> &[OperatingPoint] {
        &self.points
    }

    pub fn n_target(&self) -> usize {
        self.n_target
    }

    pub fn n_nontarget(&self) -> usize {
        self.n_nontarget
    }

    pub fn to_csv(&self, params: &DcfParams) -> String {
        let mut out = String::from("threshold,p_miss,p_fa,dcf\n");
        for p in &self.points {
            let _ = writeln!(out, "{},{},{},{}", p.threshold, p.p_miss, p.p_fa, dcf(p.p_miss, p.p_fa, params));
        }
        out
    }
}

pub fn det_curve(targets: &[f64], nontargets: &[f64]) -> Result<DetCurve> {
    if targets.is_empty() || nontargets.is_empty() {
        return Err(Error::InsufficientData("DET curve needs target and non-target scores".into()));
    }
    if targets.iter().chain(nontargets).any(|s| !s.is_finite()) {
        return Err(Error::InvalidParameter("non-finite score".into()));
    }
    let mut tar = targets.to_vec();
    let mut non = nontargets.to_vec();
    tar.sort_by(f64::total_cmp);
    non.sort_by(f64::total_cmp);
    let mut thresholds: Vec<f64> = tar.iter().chain(&non).copied().collect();
    thresholds.sort_by(f64::total_cmp);
    thresholds.dedup();
    thresholds.push(f64::INFINITY);

    let (nt, nn) = (tar.len(), non.len());
    let (mut below_t, mut below_n) = (0, 0);
    let points = thresholds
        .into_iter()
        .map(|th| {
            while below_t < nt && tar[below_t] < th {
                below_t += 1;
            }
            while below_n < nn && non[below_n] < th {
                below_n += 1;
            }
            OperatingPoint { threshold: th, p_miss: below_t as f64 / nt as f64, p_fa: (nn - below_n) as f64 / nn as f64 }
        })
        .collect();
    Ok(DetCurve { points, n_target: nt, n_nontarget: nn })
}

/// Costs and prior of the detection-cost function.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DcfParams {
    pub c_miss: f64,
    pub c_fa: f64,
    pub p_true: f64,
}

impl Default for DcfParams {
    fn default() -> Self {
        Self { c_miss: 1.0, c_fa: 1.0, p_true: 0.5 }
    }
}

impl DcfParams {
    pub fn with_prior(p_true: f64) -> Self {
        Self { p_true, ..Self::default() }
    }

    pub fn p_false(&self) -> f64 {
        1.0 - self.p_true
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.c_miss > 0.0 && self.c_fa > 0.0) {
            return Err(Error::InvalidParameter("DCF costs must be positive".into()));
        }
        if !(self.p_true > 0.0 && self.p_true < 1.0) {
            return Err(Error::InvalidParameter(format!("target prior {} outside (0, 1)", self.p_true)));
        }
        Ok(())
    }
}

/// `C_miss P_miss P_true + C_fa P_fa (1 - P_true)`.
pub fn dcf(p_miss: f64, p_fa: f64, params: &DcfParams) -> f64 {
    params.c_miss * p_miss * params.p_true + params.c_fa * p_fa * params.p_false()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MinDcf {
    pub value: f64,
    /// `None` when the optimum rejects every trial.
    pub threshold: Option<f64>,
    pub p_miss: f64,
    pub p_fa: f64,
}

/// Minimum detection cost over the curve's operating points. Among equal
/// costs the point with the lowest false-alarm rate wins.
pub fn min_dcf(curve: &DetCurve, params: &DcfParams) -> MinDcf {
    let mut best: Option<(f64, &OperatingPoint)> = None;
    for p in &curve.points {
        let v = dcf(p.p_miss, p.p_fa, params);
        best = match best {
            Some((bv, bp)) if v > bv || (v == bv && p.p_fa >= bp.p_fa) => Some((bv, bp)),
            _ => Some((v, p)),
        };
    }
    let (value, p) = best.expect("curves are never empty");
    MinDcf { value, threshold: p.threshold.is_finite().then_some(p.threshold), p_miss: p.p_miss, p_fa: p.p_fa }
}

/// Equal error rate, linearly interpolated between the two operating points
/// that bracket `P_miss = P_fa`.
pub fn eer(curve: &DetCurve) -> f64 {
    let pts = &curve.points;
    let i = pts.iter().position(|p| p.p_miss >= p.p_fa).expect("the +inf point has P_miss = 1 >= P_fa = 0");
    let b = pts[i];
    if b.p_miss == b.p_fa || i == 0 {
        return 0.5 * (b.p_miss + b.p_fa);
    }
    let a = pts[i - 1];
    let (da, db) = (a.p_miss - a.p_fa, b.p_miss - b.p_fa);
    let t = -da / (db - da);
    a.p_miss + t * (b.p_miss - a.p_miss)
}

/// Inverse of the standard normal CDF. A rational approximation refined by
/// one Halley step against `erfc`; absolute error well below 1e-8 on
/// `(0, 1)`. Returns `-inf` / `+inf` at 0 / 1.
#[allow(clippy::excessive_precision)]
pub fn probit(p: f64) -> f64 {
    const A: [f64; 6] = [-3.969683028665376e+01, 2.209460984245205e+02, -2.759285104469687e+02, 1.383577518672690e+02, -3.066479806614716e+01, 2.506628277459239e+00];
    const B: [f64; 5] = [-5.447609879822406e+01, 1.615858368580409e+02, -1.556989798598866e+02, 6.680131188771972e+01, -1.328068155288572e+01];
    const C: [f64; 6] = [-7.784894002430293e-03, -3.223964580411365e-01, -2.400758277161838e+00, -2.549732539343734e+00, 4.374664141464968e+00, 2.938163982698783e+00];
    const D: [f64; 4] = [7.784695709041462e-03, 3.224671290700398e-01, 2.445134137142996e+00, 3.754408661907416e+00];
    const P_LOW: f64 = 0.02425;

    if p.is_nan() || !(0.0..=1.0).contains(&p) {
        return f64::NAN;
    }
    if p == 0.0 {
        return f64::NEG_INFINITY;
    }
    if p == 1.0 {
        return f64::INFINITY;
    }
    let tail = |q: f64| {
        let r = (-2.0 * q.ln()).sqrt();
        (((((C[0] * r + C[1]) * r + C[2]) * r + C[3]) * r + C[4]) * r + C[5]) / ((((D[0] * r + D[1]) * r + D[2]) * r + D[3]) * r + 1.0)
    };
    let x = if p < P_LOW {
        tail(p)
    } else if p <= 1.0 - P_LOW {
        let q = p - 0.5;
        let r = q * q;
        (((((A[0] * r + A[1]) * r + A[2]) * r + A[3]) * r + A[4]) * r + A[5]) * q
            / (((((B[0] * r + B[1]) * r + B[2]) * r + B[3]) * r + B[4]) * r + 1.0)
    } else {
        -tail(1.0 - p)
    };
    let e = 0.5 * libm::erfc(-x / std::f64::consts::SQRT_2) - p;
    let u = e * (2.0 * std::f64::consts::PI).sqrt() * (0.5 * x * x).exp();
    x - u / (1.0 + 0.5 * x * u)
}

/// Compact per-curve statistics for reports.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DetSummary {
    pub min_dcf: MinDcf,
    pub eer: f64,
    pub params: DcfParams,
    pub n_target: usize,
    pub n_nontarget: usize,
}

pub fn summarize(curve: &DetCurve, params: &DcfParams) -> DetSummary {
    DetSummary { min_dcf: min_dcf(curve, params), eer: eer(curve), params: *params, n_target: curve.n_target, n_nontarget: curve.n_nontarget }
}

const AXIS_MIN: f64 = 0.001;
const AXIS_MAX: f64 = 0.95;
const TICKS: [f64; 12] = [0.001, 0.002, 0.005, 0.01, 0.02, 0.05, 0.1, 0.2, 0.4, 0.6, 0.8, 0.9];

/// DET plot as SVG, both axes in probit units, min-DCF point circled.
pub fn det_svg(curve: &DetCurve, params: &DcfParams, title: &str) -> String {
    let (size, margin) = (480.0, 60.0);
    let (lo, hi) = (probit(AXIS_MIN), probit(AXIS_MAX));
    let scale = |p: f64| (probit(p.clamp(AXIS_MIN, AXIS_MAX)) - lo) / (hi - lo) * size;
    let px = |p_fa: f64| margin + scale(p_fa);
    let py = |p_miss: f64| margin + size - scale(p_miss);

    let mut s = String::new();
    let total = size + 2.0 * margin;
    let _ = writeln!(s, r#"<svg xmlns="http://www.w3.org/2000/svg" width="{total}" height="{total}" font-family="sans-serif" font-size="11">"#);
    let _ = writeln!(s, r#"<rect x="{margin}" y="{margin}" width="{size}" height="{size}" fill="white" stroke="black"/>"#);
    for t in TICKS {
        let (x, y) = (px(t), py(t));
        let label = format!("{}", t * 100.0);
        let _ = writeln!(s, r##"<line x1="{x:.2}" y1="{margin}" x2="{x:.2}" y2="{:.2}" stroke="#ddd"/>"##, margin + size);
        let _ = writeln!(s, r##"<line x1="{margin}" y1="{y:.2}" x2="{:.2}" y2="{y:.2}" stroke="#ddd"/>"##, margin + size);
        let _ = writeln!(s, r#"<text x="{x:.2}" y="{:.2}" text-anchor="middle">{label}</text>"#, margin + size + 15.0);
        let _ = writeln!(s, r#"<text x="{:.2}" y="{:.2}" text-anchor="end">{label}</text>"#, margin - 5.0, y + 4.0);
    }
    let _ = writeln!(s, r#"<text x="{:.2}" y="{:.2}" text-anchor="middle">False alarm probability (%)</text>"#, margin + size / 2.0, total - 15.0);
    let _ = writeln!(
        s,
        r#"<text x="15" y="{:.2}" text-anchor="middle" transform="rotate(-90 15 {:.2})">Miss probability (%)</text>"#,
        margin + size / 2.0,
        margin + size / 2.0
    );
    let _ = writeln!(s, r#"<text x="{:.2}" y="{:.2}" text-anchor="middle" font-size="13">{}</text>"#, margin + size / 2.0, margin - 20.0, xml_escape(title));

    let path: Vec<String> = curve.points.iter().map(|p| format!("{:.2},{:.2}", px(p.p_fa), py(p.p_miss))).collect();
    let _ = writeln!(s, r#"<polyline fill="none" stroke="navy" stroke-width="1.5" points="{}"/>"#, path.join(" "));
    let m = min_dcf(curve, params);
    let _ = writeln!(s, r#"<circle class="min-dcf" cx="{:.2}" cy="{:.2}" r="5" fill="none" stroke="red" stroke-width="1.5"/>"#, px(m.p_fa), py(m.p_miss));
    let _ = writeln!(s, r#"<text x="{:.2}" y="{:.2}" fill="red">min DCF {:.4}</text>"#, px(m.p_fa) + 8.0, py(m.p_miss) - 8.0, m.value);
    s.push_str("</svg>\n");
    s
}

fn xml_escape(text: &str) -> String {
    text.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

/// Writes `<stem>.csv` and `<stem>.svg` into `dir` and returns both paths.
pub fn export_det(curve: &DetCurve, params: &DcfParams, dir: &Path, stem: &str) -> Result<(PathBuf, PathBuf)> {
    std::fs::create_dir_all(dir)?;
    let csv = dir.join(format!("{stem}.csv"));
    let svg = dir.join(format!("{stem}.svg"));
    std::fs::write(&csv, curve.to_csv(params))?;
    std::fs::write(&svg, det_svg(curve, params, stem))?;
    Ok((csv, svg))
}
