//! Parametrized vector-field families and their time-`t` maps.
//!
//! A [`SystemFamily`] is a field `f(λ, x)`; [`evolve`] realizes the semigroup
//! `S_λ(t)` with fixed-step classical Runge–Kutta. The state metric used
//! throughout the crate is the sup (Chebyshev) metric, see [`sup_distance`].

use std::fmt;

use thiserror::Error;

/// Largest time step accepted for the built-in families.
pub const BUILTIN_MAX_DT: f64 = 0.1;

/// Relative slack when deciding that `t / dt` is a whole number of steps.
const STEP_ALIGN_TOL: f64 = 1e-9;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum FlowError {
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("unknown system family `{0}` (expected one of: pitchfork, semistable, lorenz)")]
    UnknownFamily(String),
    #[error("parameter {value} outside documented range [{min}, {max}] of `{family}`")]
    ParamOutOfRange {
        family: String,
        value: f64,
        min: f64,
        max: f64,
    },
    #[error("non-finite value in {0}")]
    NonFinite(&'static str),
    #[error("invalid integrator config: {0}")]
    InvalidConfig(String),
    #[error("negative integration time {0}")]
    NegativeTime(f64),
    #[error("trajectory left the escape box at t={time}: state {state:?}")]
    DomainEscape { time: f64, state: Vec<f64> },
}

/// Axis-aligned closed box in `R^d`.
#[derive(Clone, Debug, PartialEq)]
pub struct Rect {
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
}

impl Rect {
    pub fn new(lower: Vec<f64>, upper: Vec<f64>) -> Self {
        Rect { lower, upper }
    }

    pub fn dim(&self) -> usize {
        self.lower.len()
    }

    pub fn contains(&self, x: &[f64]) -> bool {
        x.iter()
            .zip(self.lower.iter().zip(&self.upper))
            .all(|(&v, (&l, &u))| v >= l && v <= u)
    }

    /// Pads every side by `fraction` of that axis' extent.
    pub fn fattened(&self, fraction: f64) -> Rect {
        let (lower, upper) = self
            .lower
            .iter()
            .zip(&self.upper)
            .map(|(&l, &u)| {
                let pad = (u - l) * fraction;
                (l - pad, u + pad)
            })
            .unzip();
        Rect { lower, upper }
    }
}

/// `d_∞(a, b) = max_i |a_i - b_i|`.
pub fn sup_distance(a: &[f64], b: &[f64]) -> f64 {
    a.iter()
        .zip(b)
        .map(|(x, y)| (x - y).abs())
        .fold(0.0, f64::max)
}

/// `field(params, x, out)` writes `f(λ, x)` into `out`.
pub type VectorField = fn(&[f64], &[f64], &mut [f64]);

/// A parametrized vector field `λ ↦ f(λ, ·)` on `R^d`.
#[derive(Clone)]
pub struct SystemFamily {
    name: String,
    state_dim: usize,
    param_dim: usize,
    default_domain: Rect,
    param_range: Vec<(f64, f64)>,
    max_dt: Option<f64>,
    field: VectorField,
}

impl fmt::Debug for SystemFamily {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("SystemFamily")
            .field("name", &self.name)
            .field("state_dim", &self.state_dim)
            .field("param_dim", &self.param_dim)
            .field("default_domain", &self.default_domain)
            .field("param_range", &self.param_range)
            .finish()
    }
}

fn pitchfork_field(p: &[f64], x: &[f64], out: &mut [f64]) {
    out[0] = p[0] * x[0] - x[0] * x[0] * x[0];
}

fn semistable_field(p: &[f64], x: &[f64], out: &mut [f64]) {
    let y = x[0] - 1.0;
    out[0] = -(y * y) * (x[0] + 1.0) + p[0];
}

const LORENZ_SIGMA: f64 = 10.0;
const LORENZ_BETA: f64 = 8.0 / 3.0;

fn lorenz_field(p: &[f64], x: &[f64], out: &mut [f64]) {
    let rho = p[0];
    out[0] = LORENZ_SIGMA * (x[1] - x[0]);
    out[1] = x[0] * (rho - x[2]) - x[1];
    out[2] = x[0] * x[1] - LORENZ_BETA * x[2];
}

impl SystemFamily {
    /// Builds a user-defined family. No step-size guard is applied.
    pub fn new(
        name: impl Into<String>,
        default_domain: Rect,
        param_range: Vec<(f64, f64)>,
        field: VectorField,
    ) -> Self {
        SystemFamily {
            name: name.into(),
            state_dim: default_domain.dim(),
            param_dim: param_range.len(),
            default_domain,
            param_range,
            max_dt: None,
            field,
        }
    }

    /// `ẋ = λx − x³` on `[−3, 3]`, `λ ∈ [−2, 4]`.
    pub fn pitchfork() -> Self {
        SystemFamily {
            max_dt: Some(BUILTIN_MAX_DT),
            ..Self::new(
                "pitchfork",
                Rect::new(vec![-3.0], vec![3.0]),
                vec![(-2.0, 4.0)],
                pitchfork_field,
            )
        }
    }

    /// `ẋ = −(x−1)²(x+1) + λ` on `[−3, 3]`, `λ ∈ [−1, 1]`.
    pub fn semistable() -> Self {
        SystemFamily {
            max_dt: Some(BUILTIN_MAX_DT),
            ..Self::new(
                "semistable",
                Rect::new(vec![-3.0], vec![3.0]),
                vec![(-1.0, 1.0)],
                semistable_field,
            )
        }
    }

    /// Lorenz system with `σ = 10`, `β = 8/3` and parameter `ρ ∈ [0, 60]`.
    pub fn lorenz() -> Self {
        SystemFamily {
            max_dt: Some(BUILTIN_MAX_DT),
            ..Self::new(
                "lorenz",
                Rect::new(vec![-25.0, -30.0, -5.0], vec![25.0, 30.0, 55.0]),
                vec![(0.0, 60.0)],
                lorenz_field,
            )
        }
    }

    pub fn builtin(name: &str) -> Result<Self, FlowError> {
        match name {
            "pitchfork" => Ok(Self::pitchfork()),
            "semistable" => Ok(Self::semistable()),
            "lorenz" => Ok(Self::lorenz()),
            other => Err(FlowError::UnknownFamily(other.to_string())),
        }
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn state_dim(&self) -> usize {
        self.state_dim
    }

    pub fn param_dim(&self) -> usize {
        self.param_dim
    }

    pub fn default_domain(&self) -> &Rect {
        &self.default_domain
    }

    pub fn param_range(&self) -> &[(f64, f64)] {
        &self.param_range
    }

    pub fn max_dt(&self) -> Option<f64> {
        self.max_dt
    }

    /// Validates `coords` against the documented parameter range.
    pub fn param(&self, coords: &[f64]) -> Result<ParamPoint, FlowError> {
        if coords.len() != self.param_dim {
            return Err(FlowError::DimensionMismatch {
                expected: self.param_dim,
                got: coords.len(),
            });
        }
        for (&v, &(min, max)) in coords.iter().zip(&self.param_range) {
            if !v.is_finite() {
                return Err(FlowError::NonFinite("parameter"));
            }
            if v < min || v > max {
                return Err(FlowError::ParamOutOfRange {
                    family: self.name.clone(),
                    value: v,
                    min,
                    max,
                });
            }
        }
        Ok(ParamPoint(coords.to_vec()))
    }

    /// Evaluates `f(λ, x)` into `out` without dimension checks.
    #[inline]
    pub(crate) fn eval_into(&self, param: &ParamPoint, x: &[f64], out: &mut [f64]) {
        (self.field)(&param.0, x, out)
    }
}

/// A point `λ` of the parameter space.
#[derive(Clone, Debug, PartialEq)]
pub struct ParamPoint(Vec<f64>);

impl ParamPoint {
    /// Unvalidated scalar parameter; use [`SystemFamily::param`] to range-check.
    pub fn scalar(value: f64) -> Self {
        ParamPoint(vec![value])
    }

    pub fn coords(&self) -> &[f64] {
        &self.0
    }

    /// First coordinate; the value swept by one-dimensional parameter grids.
    pub fn value(&self) -> f64 {
        self.0[0]
    }

    /// Shifts the first coordinate by `h`.
    pub fn offset(&self, h: f64) -> Self {
        let mut coords = self.0.clone();
        coords[0] += h;
        ParamPoint(coords)
    }
}

impl fmt::Display for ParamPoint {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let parts: Vec<String> = self.0.iter().map(|v| v.to_string()).collect();
        write!(f, "{}", parts.join(";"))
    }
}

/// Fixed-step classical RK4 settings.
#[derive(Clone, Debug, PartialEq)]
pub struct IntegratorConfig {
    pub dt: f64,
    /// Trajectories leaving this box abort with [`FlowError::DomainEscape`].
    /// `None` means the family's default domain fattened by 50%.
    pub escape: Option<Rect>,
}

impl Default for IntegratorConfig {
    fn default() -> Self {
        IntegratorConfig {
            dt: 1e-3,
            escape: None,
        }
    }
}

impl IntegratorConfig {
    pub fn with_dt(dt: f64) -> Self {
        IntegratorConfig { dt, escape: None }
    }

    pub fn validate(&self, family: &SystemFamily) -> Result<(), FlowError> {
        if !(self.dt.is_finite() && self.dt > 0.0) {
            return Err(FlowError::InvalidConfig(format!(
                "dt must be positive, got {}",
                self.dt
            )));
        }
        if let Some(max) = family.max_dt {
            if self.dt > max {
                return Err(FlowError::InvalidConfig(format!(
                    "dt = {} exceeds the stability guard {} for `{}`",
                    self.dt, max, family.name
                )));
            }
        }
        if let Some(rect) = &self.escape {
            if rect.dim() != family.state_dim || rect.upper.len() != family.state_dim {
                return Err(FlowError::DimensionMismatch {
                    expected: family.state_dim,
                    got: rect.dim(),
                });
            }
        }
        Ok(())
    }

    pub fn escape_box(&self, family: &SystemFamily) -> Rect {
        self.escape
            .clone()
            .unwrap_or_else(|| family.default_domain.fattened(0.5))
    }
}

fn check_state(family: &SystemFamily, x: &[f64]) -> Result<(), FlowError> {
    if x.len() != family.state_dim {
        return Err(FlowError::DimensionMismatch {
            expected: family.state_dim,
            got: x.len(),
        });
    }
    if x.iter().any(|v| !v.is_finite()) {
        return Err(FlowError::NonFinite("state"));
    }
    Ok(())
}

/// `f(λ, x)`.
pub fn vector_field(
    family: &SystemFamily,
    param: &ParamPoint,
    x: &[f64],
) -> Result<Vec<f64>, FlowError> {
    check_state(family, x)?;
    if param.0.len() != family.param_dim {
        return Err(FlowError::DimensionMismatch {
            expected: family.param_dim,
            got: param.0.len(),
        });
    }
    let mut out = vec![0.0; family.state_dim];
    family.eval_into(param, x, &mut out);
    Ok(out)
}

/// Splits `t` into whole `dt` steps plus a final shortened step.
fn step_plan(t: f64, dt: f64) -> (u64, f64) {
    let ratio = t / dt;
    let nearest = ratio.round();
    if (ratio - nearest).abs() <= STEP_ALIGN_TOL * nearest.max(1.0) {
        return (nearest as u64, 0.0);
    }
    let whole = ratio.floor();
    let rest = t - whole * dt;
    (whole as u64, rest.max(0.0))
}

/// RK4 stage buffers; `B` is `[f64; N]` for small fixed dimensions or `Vec<f64>`.
struct Rk4<B> {
    k1: B,
    k2: B,
    k3: B,
    k4: B,
    tmp: B,
}

impl<B: AsMut<[f64]> + AsRef<[f64]> + Clone> Rk4<B> {
    fn new(zero: B) -> Self {
        Rk4 {
            k1: zero.clone(),
            k2: zero.clone(),
            k3: zero.clone(),
            k4: zero.clone(),
            tmp: zero,
        }
    }

    #[inline]
    fn step(&mut self, field: VectorField, p: &[f64], x: &mut [f64], h: f64) {
        let (k1, k2, k3, k4, tmp) = (
            self.k1.as_mut(),
            self.k2.as_mut(),
            self.k3.as_mut(),
            self.k4.as_mut(),
            self.tmp.as_mut(),
        );
        let d = x.len();
        field(p, x, k1);
        for i in 0..d {
            tmp[i] = x[i] + 0.5 * h * k1[i];
        }
        field(p, tmp, k2);
        for i in 0..d {
            tmp[i] = x[i] + 0.5 * h * k2[i];
        }
        field(p, tmp, k3);
        for i in 0..d {
            tmp[i] = x[i] + h * k3[i];
        }
        field(p, tmp, k4);
        for i in 0..d {
            x[i] += h / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]);
        }
    }

    fn run(
        &mut self,
        family: &SystemFamily,
        param: &ParamPoint,
        x: &mut [f64],
        (steps, rest): (u64, f64),
        dt: f64,
        escape: &Rect,
    ) -> Result<(), FlowError> {
        let field = family.field;
        let p = param.coords();
        let escaped = |x: &[f64]| {
            !x.iter()
                .zip(escape.lower.iter().zip(&escape.upper))
                .all(|(&v, (&l, &u))| v >= l && v <= u)
        };
        for n in 0..steps {
            self.step(field, p, x, dt);
            if escaped(x) {
                return Err(FlowError::DomainEscape {
                    time: (n + 1) as f64 * dt,
                    state: x.to_vec(),
                });
            }
        }
        if rest > 0.0 {
            self.step(field, p, x, rest);
            if escaped(x) {
                return Err(FlowError::DomainEscape {
                    time: steps as f64 * dt + rest,
                    state: x.to_vec(),
                });
            }
        }
        Ok(())
    }
}

/// Integrates `x` in place with a pre-resolved escape box. Non-finite states
/// count as escaped.
pub(crate) fn evolve_in_place(
    family: &SystemFamily,
    param: &ParamPoint,
    x: &mut [f64],
    t: f64,
    dt: f64,
    escape: &Rect,
) -> Result<(), FlowError> {
    if t == 0.0 {
        return Ok(());
    }
    let plan = step_plan(t, dt);
    match x.len() {
        1 => Rk4::new([0.0; 1]).run(family, param, x, plan, dt, escape),
        2 => Rk4::new([0.0; 2]).run(family, param, x, plan, dt, escape),
        3 => Rk4::new([0.0; 3]).run(family, param, x, plan, dt, escape),
        d => Rk4::new(vec![0.0; d]).run(family, param, x, plan, dt, escape),
    }
}

/// Approximates `S_λ(t) x0`. `t = 0` returns `x0` untouched.
pub fn evolve(
    family: &SystemFamily,
    param: &ParamPoint,
    x0: &[f64],
    t: f64,
    cfg: &IntegratorConfig,
) -> Result<Vec<f64>, FlowError> {
    check_state(family, x0)?;
    if !t.is_finite() {
        return Err(FlowError::NonFinite("time"));
    }
    if t < 0.0 {
        return Err(FlowError::NegativeTime(t));
    }
    cfg.validate(family)?;
    let mut x = x0.to_vec();
    evolve_in_place(family, param, &mut x, t, cfg.dt, &cfg.escape_box(family))?;
    Ok(x)
}

/// Largest sup-distance between `S(t+s)x` and `S(t)S(s)x` over `samples`.
pub fn check_semigroup(
    family: &SystemFamily,
    param: &ParamPoint,
    samples: &[Vec<f64>],
    t: f64,
    s: f64,
    cfg: &IntegratorConfig,
) -> Result<f64, FlowError> {
    let mut defect: f64 = 0.0;
    for x in samples {
        let direct = evolve(family, param, x, t + s, cfg)?;
        let mid = evolve(family, param, x, s, cfg)?;
        let composed = evolve(family, param, &mid, t, cfg)?;
        defect = defect.max(sup_distance(&direct, &composed));
    }
    Ok(defect)
}

/// One row of the parameter-continuity table.
#[derive(Clone, Debug, PartialEq)]
pub struct ParamModulus {
    pub offset: f64,
    pub modulus: f64,
}

/// `sup_x d_∞(S_{λ0+h}(t)x, S_{λ0}(t)x)` over `samples` for every offset `h`
/// (applied to the first parameter coordinate).
pub fn check_param_continuity(
    family: &SystemFamily,
    param: &ParamPoint,
    offsets: &[f64],
    samples: &[Vec<f64>],
    t: f64,
    cfg: &IntegratorConfig,
) -> Result<Vec<ParamModulus>, FlowError> {
    if !(t > 0.0) {
        return Err(FlowError::InvalidConfig(format!(
            "continuity check needs t > 0, got {t}"
        )));
    }
    let base: Vec<Vec<f64>> = samples
        .iter()
        .map(|x| evolve(family, param, x, t, cfg))
        .collect::<Result<_, _>>()?;
    offsets
        .iter()
        .map(|&h| {
            let shifted = param.offset(h);
            let mut modulus: f64 = 0.0;
            for (x, reference) in samples.iter().zip(&base) {
                let y = evolve(family, &shifted, x, t, cfg)?;
                modulus = modulus.max(sup_distance(&y, reference));
            }
            Ok(ParamModulus { offset: h, modulus })
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn pitchfork_closed_form(x0: f64, lambda: f64, t: f64) -> f64 {
        // Bernoulli ODE; valid for lambda = 1.
        assert_eq!(lambda, 1.0);
        x0 * t.exp() / (1.0 + x0 * x0 * ((2.0 * t).exp() - 1.0)).sqrt()
    }

    #[test]
    fn field_values() {
        let l = SystemFamily::lorenz();
        let v = vector_field(&l, &ParamPoint::scalar(28.0), &[0.0, 0.0, 0.0]).unwrap();
        assert_eq!(v, vec![0.0, 0.0, 0.0]);
        let p = SystemFamily::pitchfork();
        assert_eq!(vector_field(&p, &ParamPoint::scalar(1.0), &[1.0]).unwrap(), vec![0.0]);
        let s = SystemFamily::semistable();
        assert_eq!(vector_field(&s, &ParamPoint::scalar(0.0), &[0.0]).unwrap(), vec![-1.0]);
    }

    #[test]
    fn field_dimension_mismatch() {
        let l = SystemFamily::lorenz();
        let err = vector_field(&l, &ParamPoint::scalar(28.0), &[0.0, 0.0]).unwrap_err();
        assert_eq!(err, FlowError::DimensionMismatch { expected: 3, got: 2 });
    }

    #[test]
    fn param_range_checked() {
        let s = SystemFamily::semistable();
        assert!(s.param(&[0.5]).is_ok());
        assert!(matches!(s.param(&[2.0]), Err(FlowError::ParamOutOfRange { .. })));
        assert!(matches!(s.param(&[f64::NAN]), Err(FlowError::NonFinite(_))));
        assert!(matches!(
            SystemFamily::builtin("duffing"),
            Err(FlowError::UnknownFamily(_))
        ));
    }

    #[test]
    fn dt_guard() {
        let p = SystemFamily::pitchfork();
        let cfg = IntegratorConfig::with_dt(0.2);
        assert!(matches!(
            evolve(&p, &ParamPoint::scalar(1.0), &[0.5], 1.0, &cfg),
            Err(FlowError::InvalidConfig(_))
        ));
        assert!(IntegratorConfig::with_dt(0.0).validate(&p).is_err());
    }

    #[test]
    fn zero_time_is_identity() {
        let cfg = IntegratorConfig::default();
        let l = SystemFamily::lorenz();
        let x0 = [0.1 + 0.2, -7.3e-5, 40.000000001];
        let out = evolve(&l, &ParamPoint::scalar(28.0), &x0, 0.0, &cfg).unwrap();
        assert_eq!(out.iter().map(|v| v.to_bits()).collect::<Vec<_>>(),
                   x0.iter().map(|v| v.to_bits()).collect::<Vec<_>>());
    }

    #[test]
    fn pitchfork_matches_closed_form() {
        let p = SystemFamily::pitchfork();
        let cfg = IntegratorConfig::with_dt(1e-3);
        let x = evolve(&p, &ParamPoint::scalar(1.0), &[2.0], 5.0, &cfg).unwrap()[0];
        let exact = pitchfork_closed_form(2.0, 1.0, 5.0);
        assert!((x - exact).abs() < 1e-9, "{x} vs {exact}");
        assert!((x - 1.0).abs() < 1e-4);
    }

    #[test]
    fn partial_final_step_lands_on_t() {
        let p = SystemFamily::pitchfork();
        let cfg = IntegratorConfig::with_dt(0.01);
        let t = 0.987_654;
        let x = evolve(&p, &ParamPoint::scalar(1.0), &[0.5], t, &cfg).unwrap()[0];
        assert!((x - pitchfork_closed_form(0.5, 1.0, t)).abs() < 1e-10);
    }

    #[test]
    fn lorenz_subcritical_decays_to_origin() {
        let l = SystemFamily::lorenz();
        let lambda = ParamPoint::scalar(0.5);
        let coarse = evolve(&l, &lambda, &[1.0, 1.0, 1.0], 50.0, &IntegratorConfig::with_dt(1e-3)).unwrap();
        let fine = evolve(&l, &lambda, &[1.0, 1.0, 1.0], 50.0, &IntegratorConfig::with_dt(2.5e-4)).unwrap();
        assert!(sup_distance(&coarse, &[0.0; 3]) < 1e-6);
        assert!(sup_distance(&coarse, &fine) < 1e-9);
    }

    #[test]
    fn escape_is_reported() {
        let p = SystemFamily::pitchfork();
        let cfg = IntegratorConfig {
            dt: 1e-2,
            escape: Some(Rect::new(vec![-0.6], vec![0.6])),
        };
        match evolve(&p, &ParamPoint::scalar(1.0), &[0.5], 5.0, &cfg) {
            Err(FlowError::DomainEscape { time, state }) => {
                assert!(time > 0.0 && time < 5.0);
                assert!(state[0] > 0.6);
            }
            other => panic!("expected escape, got {other:?}"),
        }
    }

    #[test]
    fn semigroup_trivial_and_pitchfork() {
        let p = SystemFamily::pitchfork();
        let lambda = ParamPoint::scalar(1.0);
        let cfg = IntegratorConfig::with_dt(1e-3);
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let samples: Vec<Vec<f64>> = (0..100).map(|_| vec![rng.gen_range(-3.0..3.0)]).collect();
        assert_eq!(check_semigroup(&p, &lambda, &samples, 0.0, 0.0, &cfg).unwrap(), 0.0);
        let d = check_semigroup(&p, &lambda, &samples, 0.3, 0.7, &cfg).unwrap();
        assert!(d <= 1e-9, "defect {d}");
    }

    #[test]
    fn semigroup_lorenz() {
        let l = SystemFamily::lorenz();
        let cfg = IntegratorConfig::with_dt(1e-3);
        let d = check_semigroup(&l, &ParamPoint::scalar(28.0), &[vec![1.0, 1.0, 1.0]], 1.0, 1.0, &cfg)
            .unwrap();
        assert!(d <= 1e-6, "defect {d}");
    }

    #[test]
    fn param_continuity_table() {
        let p = SystemFamily::pitchfork();
        let cfg = IntegratorConfig::with_dt(1e-3);
        let samples: Vec<Vec<f64>> = (0..100).map(|i| vec![-3.0 + 6.0 * i as f64 / 99.0]).collect();
        let table = check_param_continuity(
            &p,
            &ParamPoint::scalar(1.0),
            &[0.0, 0.001, 0.01, 0.1],
            &samples,
            1.0,
            &cfg,
        )
        .unwrap();
        assert_eq!(table[0].modulus, 0.0);
        assert!(table[2].modulus > 0.0 && table[2].modulus <= 0.05, "{:?}", table[2]);
        assert!(table[1].modulus <= table[2].modulus);
        assert!(table[2].modulus <= table[3].modulus);
    }

    #[test]
    fn step_plan_alignment() {
        assert_eq!(step_plan(0.3, 1e-3), (300, 0.0));
        assert_eq!(step_plan(1.0, 1e-3), (1000, 0.0));
        let (n, rest) = step_plan(0.0105, 1e-3);
        assert_eq!(n, 10);
        assert!((rest - 0.0005).abs() < 1e-15);
    }
}
