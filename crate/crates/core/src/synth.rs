//! Seeded generators for the synthetic benchmark protocols.
//!
//! Every realisation follows the linear mixed effects model
//!
//! ```text
//! x_{i,t} = μ(t) + ξ_{i,1} φ1(t) + ξ_{i,2} φ2(t) + ε_{i,t}
//! ```
//!
//! on an equally spaced grid over `[0, 1]` with both endpoints included.
//! `N(a, b)` is parameterised by its variance `b`. Realisation `i` of each
//! panel draws from its own substream of the seed, so output does not depend
//! on generation order.

use std::f64::consts::{PI, SQRT_2};

use ndarray::Array2;
use rand_distr::{Distribution, Exp, Normal, StudentT, Uniform};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::panel::{unit_grid, SamplePanel};
use crate::rng::{substream, StreamRng};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Protocol {
    MeanShift,
    VarShift,
    LinearDep,
    SharedCoeff,
    Rotation,
}

impl Protocol {
    fn stream_tag(self) -> u64 {
        match self {
            Protocol::MeanShift => 1,
            Protocol::VarShift => 2,
            Protocol::LinearDep => 3,
            Protocol::SharedCoeff => 4,
            Protocol::Rotation => 5,
        }
    }
}

/// Distribution family of the basis coefficients.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CoeffDist {
    Gaussian,
    /// Standard t with ν = 3 (first coefficient) and ν = 5 (second).
    StudentT,
    /// U[−10, 10] and U[−5, 5].
    Uniform,
    /// Exp(1.5) and Exp(3), centred to zero mean.
    Exponential,
}

pub const XI1_VAR: f64 = 10.0;
pub const XI2_VAR: f64 = 5.0;
pub const NOISE_VAR: f64 = 0.25;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GeneratorSpec {
    pub protocol: Protocol,
    pub m: usize,
    pub n: usize,
    pub t: usize,
    /// Grid length of `Y` for the shared-coefficient protocol; defaults to `t`.
    #[serde(default)]
    pub t_y: Option<usize>,
    #[serde(default)]
    pub delta_mu: f64,
    #[serde(default)]
    pub delta_sigma: f64,
    #[serde(default)]
    pub theta: f64,
    #[serde(default = "default_dist")]
    pub coeff_dist: CoeffDist,
    /// Variance of the additive noise on `Y` in the linear-dependence protocol.
    #[serde(default = "default_lin_noise")]
    pub noise_var_y: f64,
    #[serde(default)]
    pub seed: u64,
}

fn default_dist() -> CoeffDist {
    CoeffDist::Gaussian
}

fn default_lin_noise() -> f64 {
    1.0
}

impl GeneratorSpec {
    fn base(protocol: Protocol, m: usize, n: usize, t: usize, seed: u64) -> Self {
        Self {
            protocol,
            m,
            n,
            t,
            t_y: None,
            delta_mu: 0.0,
            delta_sigma: 0.0,
            theta: 0.0,
            coeff_dist: CoeffDist::Gaussian,
            noise_var_y: 1.0,
            seed,
        }
    }

    pub fn mean_shift(m: usize, n: usize, t: usize, delta_mu: f64, seed: u64) -> Self {
        Self {
            delta_mu,
            ..Self::base(Protocol::MeanShift, m, n, t, seed)
        }
    }

    pub fn var_shift(m: usize, n: usize, t: usize, delta_sigma: f64, seed: u64) -> Self {
        Self {
            delta_sigma,
            ..Self::base(Protocol::VarShift, m, n, t, seed)
        }
    }

    pub fn linear_dep(m: usize, t: usize, seed: u64) -> Self {
        Self::base(Protocol::LinearDep, m, m, t, seed)
    }

    pub fn shared_coeff(m: usize, t: usize, seed: u64) -> Self {
        Self::base(Protocol::SharedCoeff, m, m, t, seed)
    }

    pub fn rotation(m: usize, t: usize, theta: f64, dist: CoeffDist, seed: u64) -> Self {
        Self {
            theta,
            coeff_dist: dist,
            ..Self::base(Protocol::Rotation, m, m, t, seed)
        }
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::InvalidParameter(msg));
        if self.m == 0 || self.n == 0 || self.t == 0 {
            return bad(format!(
                "m, n and t must be positive (m={}, n={}, t={})",
                self.m, self.n, self.t
            ));
        }
        let finite = [self.delta_mu, self.delta_sigma, self.theta, self.noise_var_y];
        if finite.iter().any(|v| !v.is_finite()) {
            return bad("generator parameters must be finite".into());
        }
        let p = self.protocol;
        if self.delta_mu != 0.0 && p != Protocol::MeanShift {
            return bad("delta_mu only applies to the mean-shift protocol".into());
        }
        if self.delta_sigma != 0.0 && p != Protocol::VarShift {
            return bad("delta_sigma only applies to the variance-shift protocol".into());
        }
        if self.theta != 0.0 && p != Protocol::Rotation {
            return bad("theta only applies to the rotation protocol".into());
        }
        if self.delta_mu < 0.0 || self.delta_sigma < 0.0 {
            return bad("shift parameters must be nonnegative".into());
        }
        if self.t_y.is_some() && p != Protocol::SharedCoeff {
            return bad("t_y only applies to the shared-coefficient protocol".into());
        }
        if self.t_y == Some(0) {
            return bad("t_y must be positive".into());
        }
        match p {
            Protocol::Rotation => {
                if !(0.0..=PI / 4.0 + 1e-12).contains(&self.theta) {
                    return bad(format!("theta must lie in [0, π/4], got {}", self.theta));
                }
                if self.coeff_dist == CoeffDist::Gaussian {
                    return bad(
                        "rotation needs student-t, uniform or exponential coefficients".into(),
                    );
                }
            }
            _ if self.coeff_dist != CoeffDist::Gaussian => {
                return bad("coefficient family only applies to the rotation protocol".into());
            }
            _ => {}
        }
        if matches!(p, Protocol::LinearDep | Protocol::SharedCoeff | Protocol::Rotation)
            && self.m != self.n
        {
            return bad("dependence protocols need m = n".into());
        }
        if p == Protocol::LinearDep && (self.noise_var_y.is_nan() || self.noise_var_y < 0.0) {
            return bad("noise_var_y must be nonnegative".into());
        }
        Ok(())
    }
}

/// `(√2 sin 2πt, √2 cos 2πt)`.
pub fn fourier_basis(t: f64) -> (f64, f64) {
    let a = 2.0 * PI * t;
    (SQRT_2 * a.sin(), SQRT_2 * a.cos())
}

fn gaussian(var: f64) -> Normal<f64> {
    Normal::new(0.0, var.sqrt()).expect("valid variance")
}

/// Draw basis coefficient `k` (0 or 1). `gaussian_var` is used for the
/// Gaussian family.
fn draw_coefficient(dist: CoeffDist, k: usize, gaussian_var: f64, rng: &mut StreamRng) -> f64 {
    match dist {
        CoeffDist::Gaussian => gaussian(gaussian_var).sample(rng),
        CoeffDist::StudentT => {
            let nu = if k == 0 { 3.0 } else { 5.0 };
            StudentT::new(nu).expect("valid dof").sample(rng)
        }
        CoeffDist::Uniform => {
            let half = if k == 0 { 10.0 } else { 5.0 };
            Uniform::new_inclusive(-half, half).expect("valid range").sample(rng)
        }
        CoeffDist::Exponential => {
            let lambda = if k == 0 { 1.5 } else { 3.0 };
            Exp::new(lambda).expect("valid rate").sample(rng) - 1.0 / lambda
        }
    }
}

/// Parameters of one panel of the mixed effects model.
struct PanelModel<'a> {
    mean: &'a (dyn Fn(f64) -> f64 + Sync),
    dist: CoeffDist,
    xi1_var: f64,
    xi2_var: f64,
}

/// Draw realisation `i`. `shared_xi2`, when given, replaces the second
/// coefficient.
fn realisation(
    model: &PanelModel<'_>,
    grid: &[f64],
    rng: &mut StreamRng,
    shared_xi2: Option<f64>,
) -> Vec<f64> {
    let xi1 = draw_coefficient(model.dist, 0, model.xi1_var, rng);
    let own_xi2 = draw_coefficient(model.dist, 1, model.xi2_var, rng);
    let xi2 = shared_xi2.unwrap_or(own_xi2);
    let noise = gaussian(NOISE_VAR);
    grid.iter()
        .map(|&t| {
            let (p1, p2) = fourier_basis(t);
            (model.mean)(t) + xi1 * p1 + xi2 * p2 + noise.sample(rng)
        })
        .collect()
}

fn assemble(rows: Vec<Vec<f64>>, grid: Vec<f64>) -> Result<SamplePanel> {
    let m = rows.len();
    let t = grid.len();
    let values = Array2::from_shape_vec((m, t), rows.into_iter().flatten().collect())
        .map_err(|e| Error::Input(format!("generated panel shape: {e}")))?;
    SamplePanel::new(values, grid)
}

const PANEL_X: u64 = 0;
const PANEL_Y: u64 = 1;
const SHARED: u64 = 2;

fn stream(spec: &GeneratorSpec, panel: u64, i: usize) -> StreamRng {
    substream(spec.seed, &[spec.protocol.stream_tag(), panel, i as u64])
}

fn draw_panel(
    spec: &GeneratorSpec,
    panel: u64,
    rows: usize,
    t: usize,
    model: &PanelModel<'_>,
) -> Result<SamplePanel> {
    let grid = unit_grid(t);
    let rows: Vec<Vec<f64>> = (0..rows)
        .into_par_iter()
        .map(|i| realisation(model, &grid, &mut stream(spec, panel, i), None))
        .collect();
    assemble(rows, grid)
}

fn linear_mean(t: f64) -> f64 {
    t
}

fn zero_mean(_: f64) -> f64 {
    0.0
}

fn standard_model(mean: &(dyn Fn(f64) -> f64 + Sync)) -> PanelModel<'_> {
    PanelModel {
        mean,
        dist: CoeffDist::Gaussian,
        xi1_var: XI1_VAR,
        xi2_var: XI2_VAR,
    }
}

/// Mean-shift and variance-shift protocols for the two-sample problem.
pub fn gen_mixed_effects(spec: &GeneratorSpec) -> Result<(SamplePanel, SamplePanel)> {
    spec.validate()?;
    match spec.protocol {
        Protocol::MeanShift => {
            let delta = spec.delta_mu;
            let shifted = move |t: f64| t + delta * t * t * t;
            let x = draw_panel(spec, PANEL_X, spec.m, spec.t, &standard_model(&linear_mean))?;
            let y = draw_panel(spec, PANEL_Y, spec.n, spec.t, &standard_model(&shifted))?;
            Ok((x, y))
        }
        Protocol::VarShift => {
            let x = draw_panel(spec, PANEL_X, spec.m, spec.t, &standard_model(&zero_mean))?;
            let y_model = PanelModel {
                xi1_var: XI1_VAR + spec.delta_sigma,
                ..standard_model(&zero_mean)
            };
            let y = draw_panel(spec, PANEL_Y, spec.n, spec.t, &y_model)?;
            Ok((x, y))
        }
        other => Err(Error::InvalidParameter(format!(
            "{other:?} is not a two-sample protocol"
        ))),
    }
}

/// Linear dependence: `Y` is the first measurement of each `X` realisation
/// plus independent noise, giving a single-column panel.
pub fn gen_linear_dep(spec: &GeneratorSpec) -> Result<(SamplePanel, SamplePanel)> {
    spec.validate()?;
    if spec.protocol != Protocol::LinearDep {
        return Err(Error::InvalidParameter("expected the linear-dependence protocol".into()));
    }
    let x = draw_panel(spec, PANEL_X, spec.m, spec.t, &standard_model(&linear_mean))?;
    let noise = gaussian(spec.noise_var_y);
    let y: Vec<Vec<f64>> = (0..spec.m)
        .map(|i| vec![x.row_slice(i)[0] + noise.sample(&mut stream(spec, PANEL_Y, i))])
        .collect();
    let y = assemble(y, unit_grid(1))?;
    Ok((x, y))
}

/// Dependence through a second basis coefficient shared by `x_i` and `y_i`.
pub fn gen_shared_coeff(spec: &GeneratorSpec) -> Result<(SamplePanel, SamplePanel)> {
    spec.validate()?;
    if spec.protocol != Protocol::SharedCoeff {
        return Err(Error::InvalidParameter("expected the shared-coefficient protocol".into()));
    }
    let model = standard_model(&linear_mean);
    let gx = unit_grid(spec.t);
    let gy = unit_grid(spec.t_y.unwrap_or(spec.t));
    let pairs: Vec<(Vec<f64>, Vec<f64>)> = (0..spec.m)
        .into_par_iter()
        .map(|i| {
            let xi2 = gaussian(XI2_VAR).sample(&mut stream(spec, SHARED, i));
            let x = realisation(&model, &gx, &mut stream(spec, PANEL_X, i), Some(xi2));
            let y = realisation(&model, &gy, &mut stream(spec, PANEL_Y, i), Some(xi2));
            (x, y)
        })
        .collect();
    let (xs, ys): (Vec<_>, Vec<_>) = pairs.into_iter().unzip();
    Ok((assemble(xs, gx)?, assemble(ys, gy)?))
}

/// Dependence through rotation: independent panels with non-Gaussian
/// coefficients, mixed pointwise by the rotation `R(θ)`.
pub fn gen_rotation(spec: &GeneratorSpec) -> Result<(SamplePanel, SamplePanel)> {
    spec.validate()?;
    if spec.protocol != Protocol::Rotation {
        return Err(Error::InvalidParameter("expected the rotation protocol".into()));
    }
    let model = PanelModel {
        dist: spec.coeff_dist,
        ..standard_model(&linear_mean)
    };
    let x0 = draw_panel(spec, PANEL_X, spec.m, spec.t, &model)?;
    let y0 = draw_panel(spec, PANEL_Y, spec.m, spec.t, &model)?;
    let (s, c) = spec.theta.sin_cos();
    let a = x0.values();
    let b = y0.values();
    let x = Array2::from_shape_fn(a.dim(), |ix| c * a[ix] - s * b[ix]);
    let y = Array2::from_shape_fn(a.dim(), |ix| s * a[ix] + c * b[ix]);
    let grid = x0.grid().to_vec();
    Ok((SamplePanel::new(x, grid.clone())?, SamplePanel::new(y, grid)?))
}

/// Dispatch on the protocol.
pub fn generate(spec: &GeneratorSpec) -> Result<(SamplePanel, SamplePanel)> {
    match spec.protocol {
        Protocol::MeanShift | Protocol::VarShift => gen_mixed_effects(spec),
        Protocol::LinearDep => gen_linear_dep(spec),
        Protocol::SharedCoeff => gen_shared_coeff(spec),
        Protocol::Rotation => gen_rotation(spec),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn basis_values() {
        let (a, b) = fourier_basis(0.0);
        assert_eq!((a, b), (0.0, SQRT_2));
        let (a, b) = fourier_basis(0.25);
        assert_relative_eq!(a, SQRT_2, epsilon = 1e-15);
        assert_relative_eq!(b, 0.0, epsilon = 1e-15);
        let (a, b) = fourier_basis(0.5);
        assert_relative_eq!(a, 0.0, epsilon = 1e-15);
        assert_relative_eq!(b, -SQRT_2, epsilon = 1e-15);
    }

    #[test]
    fn shapes_and_grids() {
        let (x, y) = generate(&GeneratorSpec::mean_shift(5, 7, 11, 1.0, 1)).unwrap();
        assert_eq!((x.realisations(), x.time_points()), (5, 11));
        assert_eq!((y.realisations(), y.time_points()), (7, 11));
        assert_eq!(x.grid(), unit_grid(11).as_slice());

        let (x, y) = generate(&GeneratorSpec::linear_dep(6, 4, 1)).unwrap();
        assert_eq!((x.realisations(), x.time_points()), (6, 4));
        assert_eq!((y.realisations(), y.time_points()), (6, 1));

        let mut spec = GeneratorSpec::shared_coeff(6, 4, 1);
        spec.t_y = Some(9);
        let (x, y) = generate(&spec).unwrap();
        assert_eq!((x.time_points(), y.time_points()), (4, 9));
        assert_eq!((x.realisations(), y.realisations()), (6, 6));
    }

    #[test]
    fn deterministic_per_seed() {
        for spec in [
            GeneratorSpec::var_shift(4, 4, 5, 3.0, 9),
            GeneratorSpec::linear_dep(4, 5, 9),
            GeneratorSpec::shared_coeff(4, 5, 9),
            GeneratorSpec::rotation(4, 5, 0.3, CoeffDist::StudentT, 9),
        ] {
            assert_eq!(generate(&spec).unwrap(), generate(&spec).unwrap());
            assert_ne!(generate(&spec).unwrap(), generate(&spec.clone().with_seed(10)).unwrap());
        }
    }

    #[test]
    fn realisations_do_not_depend_on_panel_size() {
        let (small, _) = generate(&GeneratorSpec::mean_shift(3, 3, 6, 0.0, 4)).unwrap();
        let (big, _) = generate(&GeneratorSpec::mean_shift(10, 3, 6, 0.0, 4)).unwrap();
        assert_eq!(small.values(), big.values().slice(ndarray::s![..3, ..]));
    }

    #[test]
    fn mean_shift_is_exact_at_the_end_point() {
        // Same seed: only the mean differs between δ = 0 and δ = 2.5.
        let (_, y0) = generate(&GeneratorSpec::mean_shift(3, 3, 5, 0.0, 2)).unwrap();
        let (_, y1) = generate(&GeneratorSpec::mean_shift(3, 3, 5, 2.5, 2)).unwrap();
        for i in 0..3 {
            assert_relative_eq!(y1.row_slice(i)[4] - y0.row_slice(i)[4], 2.5, epsilon = 1e-12);
            assert_eq!(y1.row_slice(i)[0], y0.row_slice(i)[0]);
        }
    }

    #[test]
    fn rotation_identity_and_norm() {
        let base = GeneratorSpec::rotation(8, 6, 0.0, CoeffDist::Uniform, 5);
        let (x0, y0) = gen_rotation(&base).unwrap();
        let rotated = GeneratorSpec {
            theta: PI / 4.0,
            ..base.clone()
        };
        let (x, y) = gen_rotation(&rotated).unwrap();
        for (((a, b), c), d) in x.values().iter().zip(y.values()).zip(x0.values()).zip(y0.values()) {
            assert!((a * a + b * b - (c * c + d * d)).abs() <= 1e-10);
        }
        // the unrotated panels are the model draws themselves
        let model = PanelModel {
            dist: CoeffDist::Uniform,
            ..standard_model(&linear_mean)
        };
        let raw = draw_panel(&base, PANEL_X, 8, 6, &model).unwrap();
        assert_eq!(raw, x0);
    }

    #[test]
    fn validation() {
        let mut s = GeneratorSpec::rotation(4, 3, 1.0, CoeffDist::Uniform, 0);
        assert!(generate(&s).is_err());
        s.theta = -0.1;
        assert!(generate(&s).is_err());
        s.theta = 0.2;
        s.coeff_dist = CoeffDist::Gaussian;
        assert!(generate(&s).is_err());
        let mut s = GeneratorSpec::mean_shift(4, 4, 3, 1.0, 0);
        s.theta = 0.1;
        assert!(generate(&s).is_err());
        let mut s = GeneratorSpec::shared_coeff(4, 3, 0);
        s.n = 5;
        assert!(generate(&s).is_err());
        assert!(gen_rotation(&GeneratorSpec::mean_shift(4, 4, 3, 1.0, 0)).is_err());
        assert!(generate(&GeneratorSpec::mean_shift(0, 4, 3, 1.0, 0)).is_err());
    }
}
