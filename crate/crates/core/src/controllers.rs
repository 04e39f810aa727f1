//! Base controllers and the basis-function adaptation law.
//!
//! A [`Controller`] is a pure function of `(omega_i, phi_i(t), a_hat_i)`; the
//! adaptive estimates live in the simulation state, not here. Every trainable
//! quantity is stored as an unconstrained raw parameter and mapped through
//! softplus, so constraints hold for any raw value.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::dynamics::BasisSignal;
use crate::error::{Error, Result};
use crate::{softplus, softplus_grad, softplus_inv};

/// Lower bound added to every adaptation gain.
pub const GAIN_FLOOR: f64 = 1e-4;

#[derive(Debug, Clone, PartialEq)]
pub struct DroopParams {
    raw: Vec<f64>,
    gains: Vec<f64>,
}

impl DroopParams {
    pub fn from_gains(gains: &[f64]) -> Result<Self> {
        if let Some(g) = gains.iter().find(|g| !(g.is_finite() && **g > 0.0)) {
            return Err(Error::Validation(format!("droop gain {g} is not positive")));
        }
        Ok(Self::from_raw(gains.iter().map(|&g| softplus_inv(g)).collect()))
    }

    pub fn from_raw(raw: Vec<f64>) -> Self {
        let gains = raw.iter().map(|&r| softplus(r)).collect();
        Self { raw, gains }
    }

    pub fn raw(&self) -> &[f64] {
        &self.raw
    }

    pub fn gain(&self, i: usize) -> f64 {
        self.gains[i]
    }

    pub fn gains(&self) -> Vec<f64> {
        self.gains.clone()
    }
}

pub fn droop_u(params: &DroopParams, i: usize, omega_i: f64) -> f64 {
    params.gain(i) * omega_i
}

/// Unconstrained linear feedback `u = k_i * omega_i`.
///
/// Not a member of the base-controller class unless every gain is positive;
/// used for reference runs and for negative-control certification.
#[derive(Debug, Clone, PartialEq)]
pub struct LinearParams {
    pub gains: Vec<f64>,
}

/// Monotone piecewise-linear feedback on a fixed uniform breakpoint grid.
///
/// The grid splits `[lo, hi]` into `segments` cells; the first and last cells
/// extend to minus and plus infinity. Each cell carries a slope
/// `softplus(raw)`, and the function is the integral of the slope from the
/// origin, so `u(0) = 0` exactly and `u` is nondecreasing.
#[derive(Debug, Clone, PartialEq)]
pub struct MonotonePwlParams {
    lo: f64,
    hi: f64,
    raw: Vec<Vec<f64>>,
    slopes: Vec<Vec<f64>>,
    // d slope / d raw
    dslopes: Vec<Vec<f64>>,
    // integral of the slope from lo up to each inner breakpoint
    cumulative: Vec<Vec<f64>>,
    // the same integral up to the origin
    zero: Vec<f64>,
}

impl MonotonePwlParams {
    pub const DEFAULT_SEGMENTS: usize = 20;
    pub const DEFAULT_RANGE: (f64, f64) = (-1.0, 1.0);

    pub fn from_raw(lo: f64, hi: f64, raw: Vec<Vec<f64>>) -> Result<Self> {
        if !(lo.is_finite() && hi.is_finite() && lo < hi) {
            return Err(Error::Validation(format!("invalid PWL range [{lo}, {hi}]")));
        }
        let segments = raw.first().map_or(0, Vec::len);
        if segments == 0 || raw.iter().any(|r| r.len() != segments) {
            return Err(Error::Dimension(
                "every bus needs the same nonzero number of PWL segments".into(),
            ));
        }
        let mut p = Self {
            lo,
            hi,
            raw,
            slopes: Vec::new(),
            dslopes: Vec::new(),
            cumulative: Vec::new(),
            zero: Vec::new(),
        };
        p.refresh();
        if let Some(i) = p.slopes.iter().position(|s| s.iter().all(|&x| x <= 0.0)) {
            return Err(Error::Validation(format!("PWL controller at bus {i} has no positive slope")));
        }
        Ok(p)
    }

    /// Uniform slope on every segment of every bus.
    pub fn uniform(n: usize, slope: f64, segments: usize, range: (f64, f64)) -> Result<Self> {
        if !(slope > 0.0) {
            return Err(Error::Validation(format!("PWL slope {slope} is not positive")));
        }
        Self::from_raw(range.0, range.1, vec![vec![softplus_inv(slope); segments]; n])
    }

    fn refresh(&mut self) {
        let w = self.width();
        self.slopes = self
            .raw
            .iter()
            .map(|r| r.iter().map(|&x| softplus(x)).collect())
            .collect();
        self.cumulative = self
            .slopes
            .iter()
            .map(|s| {
                let mut acc = 0.0;
                let mut c = Vec::with_capacity(s.len());
                for &si in s {
                    c.push(acc);
                    acc += si * w;
                }
                c
            })
            .collect();
        self.dslopes = self
            .raw
            .iter()
            .map(|r| r.iter().map(|&x| softplus_grad(x)).collect())
            .collect();
        self.zero = (0..self.raw.len()).map(|i| self.antiderivative(i, 0.0)).collect();
    }

    pub fn segments(&self) -> usize {
        self.raw[0].len()
    }

    pub fn range(&self) -> (f64, f64) {
        (self.lo, self.hi)
    }

    pub fn width(&self) -> f64 {
        (self.hi - self.lo) / self.segments() as f64
    }

    pub fn raw(&self) -> &[Vec<f64>] {
        &self.raw
    }

    pub fn slopes(&self, i: usize) -> &[f64] {
        &self.slopes[i]
    }

    /// Left edge of segment `k`.
    fn edge(&self, k: usize) -> f64 {
        self.lo + k as f64 * self.width()
    }

    /// Segment containing `omega`; a point on an inner breakpoint belongs to the left segment.
    pub fn segment_of(&self, omega: f64) -> usize {
        let m = self.segments();
        let x = (omega - self.lo) / self.width();
        if !(x > 0.0) {
            return 0;
        }
        if x >= m as f64 {
            return m - 1;
        }
        let k = x.floor() as usize;
        if k > 0 && x == x.floor() {
            k - 1
        } else {
            k
        }
    }

    // integral of the slope from lo to omega (negative below lo)
    fn antiderivative(&self, i: usize, omega: f64) -> f64 {
        let k = self.segment_of(omega);
        self.cumulative[i][k] + self.slopes[i][k] * (omega - self.edge(k))
    }

    pub fn eval(&self, i: usize, omega: f64) -> f64 {
        if omega == 0.0 {
            return 0.0;
        }
        self.antiderivative(i, omega) - self.zero[i]
    }

    /// Slope at `omega` (left slope on breakpoints).
    pub fn derivative(&self, i: usize, omega: f64) -> f64 {
        self.slopes[i][self.segment_of(omega)]
    }

    /// Adds `weight * d u_i(omega) / d raw_{i,k}` into `grad[k]`.
    fn accumulate_raw_grad(&self, i: usize, omega: f64, weight: f64, grad: &mut [f64]) {
        let w = self.width();
        let (k0, kw) = (self.segment_of(0.0), self.segment_of(omega));
        // d antiderivative(x) / d slope_j = overlap of [lo, x] with segment j
        let overlap = |j: usize, k: usize, x: f64| -> f64 {
            if j < k {
                w
            } else if j == k {
                x - self.edge(k)
            } else {
                0.0
            }
        };
        let (a, b) = (k0.min(kw), k0.max(kw));
        for j in a..=b {
            let d = overlap(j, kw, omega) - overlap(j, k0, 0.0);
            if d != 0.0 {
                grad[j] += weight * d * self.dslopes[i][j];
            }
        }
    }
}

pub fn pwl_u(params: &MonotonePwlParams, i: usize, omega_i: f64) -> f64 {
    params.eval(i, omega_i)
}

/// Diagonal adaptation gains `A_i = diag(softplus(raw) + floor)`.
#[derive(Debug, Clone, PartialEq)]
pub struct AdaptiveParams {
    raw: Vec<Vec<f64>>,
    gains: Vec<Vec<f64>>,
}

impl AdaptiveParams {
    pub fn from_raw(raw: Vec<Vec<f64>>) -> Self {
        let mut p = Self { raw, gains: Vec::new() };
        p.refresh();
        p
    }

    fn refresh(&mut self) {
        self.gains = self
            .raw
            .iter()
            .map(|r| r.iter().map(|&x| softplus(x) + GAIN_FLOOR).collect())
            .collect();
    }

    pub fn from_gains(gains: &[Vec<f64>]) -> Result<Self> {
        let raw = gains
            .iter()
            .map(|g| {
                g.iter()
                    .map(|&x| {
                        if x > GAIN_FLOOR && x.is_finite() {
                            Ok(softplus_inv(x - GAIN_FLOOR))
                        } else {
                            Err(Error::Validation(format!(
                                "adaptation gain {x} must exceed the floor {GAIN_FLOOR}"
                            )))
                        }
                    })
                    .collect::<Result<Vec<_>>>()
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(Self::from_raw(raw))
    }

    pub fn uniform(dims: &[usize], gain: f64) -> Result<Self> {
        let gains: Vec<Vec<f64>> = dims.iter().map(|&l| vec![gain; l]).collect();
        Self::from_gains(&gains)
    }

    pub fn raw(&self) -> &[Vec<f64>] {
        &self.raw
    }

    pub fn dim(&self, i: usize) -> usize {
        self.raw[i].len()
    }

    pub fn n(&self) -> usize {
        self.raw.len()
    }

    pub fn gain(&self, i: usize, j: usize) -> f64 {
        self.gains[i][j]
    }

    pub fn diag(&self, i: usize) -> Vec<f64> {
        (0..self.dim(i)).map(|j| self.gain(i, j)).collect()
    }

    pub fn min_gain(&self) -> f64 {
        self.all_gains().fold(f64::INFINITY, f64::min)
    }

    pub fn max_gain(&self) -> f64 {
        self.all_gains().fold(0.0, f64::max)
    }

    fn all_gains(&self) -> impl Iterator<Item = f64> + '_ {
        self.gains.iter().flatten().copied()
    }
}

/// `u_i = base(omega_i) + phi_i^T a_hat_i`.
pub fn adaptive_u(
    base: &BaseController,
    i: usize,
    omega_i: f64,
    phi_i: &[f64],
    a_hat_i: &[f64],
) -> Result<f64> {
    if phi_i.len() != a_hat_i.len() {
        return Err(Error::Dimension(format!(
            "feature vector has {} entries, estimate has {}",
            phi_i.len(),
            a_hat_i.len()
        )));
    }
    Ok(base.eval(i, omega_i) + dot(phi_i, a_hat_i))
}

/// Time derivative of the estimate, `omega_i * A_i * phi_i`.
pub fn adaptation_rhs(ap: &AdaptiveParams, i: usize, omega_i: f64, phi_i: &[f64]) -> Result<Vec<f64>> {
    if phi_i.len() != ap.dim(i) {
        return Err(Error::Dimension(format!(
            "feature vector has {} entries, gain matrix is {}x{}",
            phi_i.len(),
            ap.dim(i),
            ap.dim(i)
        )));
    }
    Ok(phi_i
        .iter()
        .enumerate()
        .map(|(j, &p)| omega_i * ap.gain(i, j) * p)
        .collect())
}

pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

#[derive(Debug, Clone, PartialEq)]
pub enum BaseController {
    Droop(DroopParams),
    Pwl(MonotonePwlParams),
    Linear(LinearParams),
}

impl BaseController {
    pub fn eval(&self, i: usize, omega: f64) -> f64 {
        match self {
            BaseController::Droop(p) => droop_u(p, i, omega),
            BaseController::Pwl(p) => pwl_u(p, i, omega),
            BaseController::Linear(p) => p.gains[i] * omega,
        }
    }

    pub fn derivative(&self, i: usize, omega: f64) -> f64 {
        match self {
            BaseController::Droop(p) => p.gain(i),
            BaseController::Pwl(p) => p.derivative(i, omega),
            BaseController::Linear(p) => p.gains[i],
        }
    }

    pub fn n(&self) -> usize {
        match self {
            BaseController::Droop(p) => p.raw.len(),
            BaseController::Pwl(p) => p.raw.len(),
            BaseController::Linear(p) => p.gains.len(),
        }
    }

    pub fn kind(&self) -> &'static str {
        match self {
            BaseController::Droop(_) => "droop",
            BaseController::Pwl(_) => "pwl",
            BaseController::Linear(_) => "linear",
        }
    }

    /// Monotone and zero at the origin.
    pub fn in_base_class(&self) -> bool {
        match self {
            BaseController::Droop(_) | BaseController::Pwl(_) => true,
            BaseController::Linear(p) => p.gains.iter().all(|&g| g >= 0.0),
        }
    }

    fn params_per_bus(&self) -> usize {
        match self {
            BaseController::Pwl(p) => p.segments(),
            _ => 1,
        }
    }

    fn num_params(&self) -> usize {
        self.n() * self.params_per_bus()
    }

    fn write_raw(&self, out: &mut Vec<f64>) {
        match self {
            BaseController::Droop(p) => out.extend_from_slice(&p.raw),
            BaseController::Pwl(p) => p.raw.iter().for_each(|r| out.extend_from_slice(r)),
            BaseController::Linear(p) => out.extend_from_slice(&p.gains),
        }
    }

    fn read_raw(&mut self, src: &[f64]) {
        match self {
            BaseController::Droop(p) => *p = DroopParams::from_raw(src.to_vec()),
            BaseController::Pwl(p) => {
                let m = p.segments();
                for (r, chunk) in p.raw.iter_mut().zip(src.chunks(m)) {
                    r.copy_from_slice(chunk);
                }
                p.refresh();
            }
            BaseController::Linear(p) => p.gains.copy_from_slice(src),
        }
    }

    /// Adds `weight * d base(omega_i) / d raw` into the bus-`i` slice of `grad`.
    fn accumulate_grad(&self, i: usize, omega: f64, weight: f64, grad: &mut [f64]) {
        match self {
            BaseController::Droop(p) => grad[i] += weight * omega * softplus_grad(p.raw[i]),
            BaseController::Pwl(p) => {
                let m = p.segments();
                p.accumulate_raw_grad(i, omega, weight, &mut grad[i * m..(i + 1) * m]);
            }
            BaseController::Linear(_) => grad[i] += weight * omega,
        }
    }
}

/// Which part of the load basis the adaptation law sees.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum FeatureSet {
    /// The full basis `phi_i(t)`.
    Basis,
    /// Only the constant feature; this is integral control.
    Constant,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Adaptive {
    pub params: AdaptiveParams,
    pub features: FeatureSet,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Controller {
    pub base: BaseController,
    pub adaptive: Option<Adaptive>,
    /// Optional actuation limit `|u_i| <= u_max`, applied after summation.
    pub saturation: Option<f64>,
}

impl Controller {
    pub fn droop(gains: &[f64]) -> Result<Self> {
        Ok(Self::from_base(BaseController::Droop(DroopParams::from_gains(gains)?)))
    }

    pub fn pwl(params: MonotonePwlParams) -> Self {
        Self::from_base(BaseController::Pwl(params))
    }

    pub fn linear(gains: Vec<f64>) -> Self {
        Self::from_base(BaseController::Linear(LinearParams { gains }))
    }

    pub fn from_base(base: BaseController) -> Self {
        Self {
            base,
            adaptive: None,
            saturation: None,
        }
    }

    /// Adds the adaptation law with uniform initial gain on every feature.
    pub fn with_adaptation(mut self, basis: &BasisSignal, features: FeatureSet, gain: f64) -> Result<Self> {
        let dims: Vec<usize> = (0..self.n())
            .map(|i| match features {
                FeatureSet::Basis => basis.dim(i),
                FeatureSet::Constant => 1,
            })
            .collect();
        self.adaptive = Some(Adaptive {
            params: AdaptiveParams::uniform(&dims, gain)?,
            features,
        });
        Ok(self)
    }

    pub fn n(&self) -> usize {
        self.base.n()
    }

    /// Short name, e.g. `droop`, `adaptive-pwl`, `integral-pwl`.
    pub fn name(&self) -> String {
        match &self.adaptive {
            None => self.base.kind().to_string(),
            Some(a) => match a.features {
                FeatureSet::Basis => format!("adaptive-{}", self.base.kind()),
                FeatureSet::Constant => format!("integral-{}", self.base.kind()),
            },
        }
    }

    pub fn is_adaptive(&self) -> bool {
        self.adaptive.is_some()
    }

    pub fn adaptive_params(&self) -> Option<&AdaptiveParams> {
        self.adaptive.as_ref().map(|a| &a.params)
    }

    /// Length of the estimate vector at bus `i`.
    pub fn estimate_dim(&self, basis: &BasisSignal, i: usize) -> usize {
        match &self.adaptive {
            None => 0,
            Some(a) => match a.features {
                FeatureSet::Basis => basis.dim(i),
                FeatureSet::Constant => 1,
            },
        }
    }

    /// Features seen by the adaptation law at bus `i`, given the full basis values.
    pub fn select_features<'a>(&self, basis: &BasisSignal, i: usize, full: &'a [f64]) -> &'a [f64] {
        match &self.adaptive {
            None => &full[..0],
            Some(a) => match a.features {
                FeatureSet::Basis => full,
                FeatureSet::Constant => {
                    let c = basis.const_index(i);
                    &full[c..c + 1]
                }
            },
        }
    }

    /// Structural checks against a network and basis.
    pub fn validate_for(&self, n: usize, basis: &BasisSignal) -> Result<()> {
        if self.n() != n {
            return Err(Error::Dimension(format!(
                "controller is for {} buses, network has {n}",
                self.n()
            )));
        }
        if let Some(a) = &self.adaptive {
            if a.params.n() != n {
                return Err(Error::Dimension(format!(
                    "adaptation gains given for {} buses, network has {n}",
                    a.params.n()
                )));
            }
            for i in 0..n {
                if a.params.dim(i) != self.estimate_dim(basis, i) {
                    return Err(Error::Dimension(format!(
                        "bus {i}: adaptation gain has {} entries, basis provides {}",
                        a.params.dim(i),
                        self.estimate_dim(basis, i)
                    )));
                }
            }
        }
        if let Some(u) = self.saturation {
            if !(u > 0.0) {
                return Err(Error::Validation(format!("saturation limit {u} must be positive")));
            }
        }
        Ok(())
    }

    /// Pre-saturation control `base(omega) + phi^T a_hat`.
    pub fn raw_control(&self, i: usize, omega: f64, phi: &[f64], a_hat: &[f64]) -> f64 {
        self.base.eval(i, omega) + dot(phi, a_hat)
    }

    pub fn control(&self, i: usize, omega: f64, phi: &[f64], a_hat: &[f64]) -> f64 {
        self.saturate(self.raw_control(i, omega, phi, a_hat))
    }

    pub fn saturate(&self, u: f64) -> f64 {
        match self.saturation {
            Some(limit) => u.clamp(-limit, limit),
            None => u,
        }
    }

    /// Derivative of the saturation at the pre-saturation value.
    pub fn saturation_slope(&self, u: f64) -> f64 {
        match self.saturation {
            Some(limit) if u.abs() > limit => 0.0,
            _ => 1.0,
        }
    }

    /// Writes `omega_i * A_i * phi_i` into `out`.
    pub fn adaptation_into(&self, i: usize, omega: f64, phi: &[f64], out: &mut [f64]) {
        if let Some(a) = &self.adaptive {
            for (j, (o, p)) in out.iter_mut().zip(phi).enumerate() {
                *o = omega * a.params.gain(i, j) * p;
            }
        }
    }

    pub fn num_params(&self) -> usize {
        self.base.num_params() + self.adaptive.as_ref().map_or(0, |a| a.params.raw.iter().map(Vec::len).sum())
    }

    /// Flattened raw parameters: base parameters bus by bus, then adaptation gains.
    pub fn raw_params(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.num_params());
        self.base.write_raw(&mut out);
        if let Some(a) = &self.adaptive {
            a.params.raw.iter().for_each(|r| out.extend_from_slice(r));
        }
        out
    }

    pub fn set_raw_params(&mut self, raw: &[f64]) -> Result<()> {
        if raw.len() != self.num_params() {
            return Err(Error::Dimension(format!(
                "{} raw parameters given, controller has {}",
                raw.len(),
                self.num_params()
            )));
        }
        let nb = self.base.num_params();
        self.base.read_raw(&raw[..nb]);
        if let Some(a) = &mut self.adaptive {
            let mut off = nb;
            for r in a.params.raw.iter_mut() {
                let l = r.len();
                r.copy_from_slice(&raw[off..off + l]);
                off += l;
            }
            a.params.refresh();
        }
        Ok(())
    }

    /// Offset of the adaptation gains for bus `i` in the flat parameter vector.
    pub(crate) fn adaptive_offsets(&self) -> Vec<usize> {
        let mut offs = Vec::new();
        if let Some(a) = &self.adaptive {
            let mut off = self.base.num_params();
            for r in &a.params.raw {
                offs.push(off);
                off += r.len();
            }
        }
        offs
    }

    /// Adds `weight * d base(omega_i) / d raw` into the flat gradient.
    pub(crate) fn accumulate_base_grad(&self, i: usize, omega: f64, weight: f64, grad: &mut [f64]) {
        let nb = self.base.num_params();
        self.base.accumulate_grad(i, omega, weight, &mut grad[..nb]);
    }

    /// `d A_ij / d raw_ij`.
    pub(crate) fn gain_raw_grad(&self, i: usize, j: usize) -> f64 {
        self.adaptive
            .as_ref()
            .map_or(0.0, |a| softplus_grad(a.params.raw[i][j]))
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let text = serde_json::to_string_pretty(&ControllerFile::from(self)).expect("serializable");
        std::fs::write(path, text).map_err(|source| Error::Io {
            path: path.to_path_buf(),
            source,
        })
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|source| Error::Io {
            path: path.to_path_buf(),
            source,
        })?;
        Self::from_json(&text)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(&ControllerFile::from(self)).expect("serializable")
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let file: ControllerFile =
            serde_json::from_str(text).map_err(|e| Error::parse("controller file", e))?;
        Controller::try_from(file)
    }
}

/// On-disk controller parameters.
///
/// `raw` arrays are authoritative; the derived `gains` / `slopes` arrays are
/// written for readability and only used on load when `raw` is absent.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ControllerFile {
    #[serde(flatten)]
    pub body: ControllerBody,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub saturation: Option<f64>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "lowercase")]
pub enum ControllerBody {
    Droop {
        #[serde(default, skip_serializing_if = "Option::is_none")]
        raw: Option<Vec<f64>>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        gains: Option<Vec<f64>>,
    },
    Pwl {
        lo: f64,
        hi: f64,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        raw: Option<Vec<Vec<f64>>>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        slopes: Option<Vec<Vec<f64>>>,
    },
    Linear {
        gains: Vec<f64>,
    },
    Adaptive {
        features: FeatureSet,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        raw: Option<Vec<Vec<f64>>>,
        #[serde(default, rename = "A_diag", skip_serializing_if = "Option::is_none")]
        a_diag: Option<Vec<Vec<f64>>>,
        base: Box<ControllerBody>,
    },
}

fn base_body(base: &BaseController) -> ControllerBody {
    match base {
        BaseController::Droop(p) => ControllerBody::Droop {
            raw: Some(p.raw.clone()),
            gains: Some(p.gains()),
        },
        BaseController::Pwl(p) => ControllerBody::Pwl {
            lo: p.lo,
            hi: p.hi,
            raw: Some(p.raw.clone()),
            slopes: Some(p.slopes.clone()),
        },
        BaseController::Linear(p) => ControllerBody::Linear {
            gains: p.gains.clone(),
        },
    }
}

impl From<&Controller> for ControllerFile {
    fn from(c: &Controller) -> Self {
        let body = match &c.adaptive {
            None => base_body(&c.base),
            Some(a) => ControllerBody::Adaptive {
                features: a.features,
                raw: Some(a.params.raw.clone()),
                a_diag: Some((0..a.params.n()).map(|i| a.params.diag(i)).collect()),
                base: Box::new(base_body(&c.base)),
            },
        };
        ControllerFile {
            body,
            saturation: c.saturation,
        }
    }
}

fn base_from_body(body: ControllerBody) -> Result<BaseController> {
    match body {
        ControllerBody::Droop { raw: Some(raw), .. } => Ok(BaseController::Droop(DroopParams::from_raw(raw))),
        ControllerBody::Droop { gains: Some(g), .. } => Ok(BaseController::Droop(DroopParams::from_gains(&g)?)),
        ControllerBody::Droop { .. } => Err(Error::parse("controller file", "droop needs `raw` or `gains`")),
        ControllerBody::Pwl { lo, hi, raw, slopes } => {
            let raw = match (raw, slopes) {
                (Some(raw), _) => raw,
                (None, Some(slopes)) => slopes
                    .iter()
                    .map(|s| {
                        s.iter()
                            .map(|&x| {
                                if x > 0.0 {
                                    Ok(softplus_inv(x))
                                } else {
                                    Err(Error::Validation(format!("PWL slope {x} must be positive")))
                                }
                            })
                            .collect::<Result<Vec<_>>>()
                    })
                    .collect::<Result<Vec<_>>>()?,
                (None, None) => return Err(Error::parse("controller file", "pwl needs `raw` or `slopes`")),
            };
            Ok(BaseController::Pwl(MonotonePwlParams::from_raw(lo, hi, raw)?))
        }
        ControllerBody::Linear { gains } => Ok(BaseController::Linear(LinearParams { gains })),
        ControllerBody::Adaptive { .. } => Err(Error::parse("controller file", "nested adaptive controllers are not supported")),
    }
}

impl TryFrom<ControllerFile> for Controller {
    type Error = Error;

    fn try_from(file: ControllerFile) -> Result<Self> {
        let (base, adaptive) = match file.body {
            ControllerBody::Adaptive {
                features,
                raw,
                a_diag,
                base,
            } => {
                let params = match (raw, a_diag) {
                    (Some(raw), _) => AdaptiveParams::from_raw(raw),
                    (None, Some(g)) => AdaptiveParams::from_gains(&g)?,
                    (None, None) => return Err(Error::parse("controller file", "adaptive needs `raw` or `A_diag`")),
                };
                (base_from_body(*base)?, Some(Adaptive { params, features }))
            }
            other => (base_from_body(other)?, None),
        };
        if let Some(a) = &adaptive {
            if a.params.n() != base.n() {
                return Err(Error::Dimension(format!(
                    "adaptation gains for {} buses, base controller for {}",
                    a.params.n(),
                    base.n()
                )));
            }
        }
        Ok(Controller {
            base,
            adaptive,
            saturation: file.saturation,
        })
    }
}
