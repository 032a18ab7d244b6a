//! Closed-form DGP families for calibration and generalization studies:
//! polynomial CEPOs of bounded degree and sinusoidal CEPOs with a frequency
//! knob (omega = 0 degenerates to the linear sub-family).

use crate::error::{Error, Result};
use crate::prior::{draw_treatments, select_factual, DgpInstance, NoiseKind};
use crate::rng::{self, StreamRng};
use crate::stats;
use rand::Rng;

/// Power-extended features (x_1..x_d, x_1^2..x_d^2, ..., x_1^deg..x_d^deg, 1).
pub fn poly_extend(x: &[f64], degree: usize) -> Vec<f64> {
    let d = x.len();
    let mut out = Vec::with_capacity(d * degree + 1);
    for p in 1..=degree {
        for &xi in x {
            out.push(xi.powi(p as i32));
        }
    }
    out.push(1.0);
    out
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(&x, &y)| x * y).sum()
}

/// Sampled parameters of one polynomial DGP.
#[derive(Clone, Debug)]
pub struct PolynomialSpec {
    pub degree: usize,
    pub n_covariates: usize,
    pub w_mu0: Vec<f64>,
    pub w_mu1: Vec<f64>,
    pub w_t: Vec<f64>,
    pub noise_kind: NoiseKind,
}

impl PolynomialSpec {
    pub fn sample(degree: usize, seed: u64) -> Result<Self> {
        if !(1..=4).contains(&degree) {
            return Err(Error::arg("polynomial degree must be in 1..=4"));
        }
        let mut rng = rng::stream(seed);
        let d = rng.gen_range(10..=20usize);
        let width = d * degree + 1;
        let mut draw = |_: ()| -> Vec<f64> {
            (0..width).map(|_| rng.gen_range(-5.0..5.0)).collect()
        };
        let w_mu0 = draw(());
        let w_mu1 = draw(());
        let w_t = draw(());
        let noise_kind = draw_test_noise(&mut rng);
        Ok(PolynomialSpec {
            degree,
            n_covariates: d,
            w_mu0,
            w_mu1,
            w_t,
            noise_kind,
        })
    }

    pub fn cepo(&self, x: &[f64], t: u8) -> f64 {
        let ext = poly_extend(x, self.degree);
        if t == 1 {
            dot(&self.w_mu1, &ext)
        } else {
            dot(&self.w_mu0, &ext)
        }
    }

    pub fn treatment_logit(&self, x: &[f64]) -> f64 {
        dot(&self.w_t, &poly_extend(x, self.degree))
    }

    pub fn instantiate(&self, n_rows: usize, seed: u64) -> Result<DgpInstance> {
        let mut rng = rng::stream(seed);
        let d = self.n_covariates;
        let covariates: Vec<f64> = (0..n_rows * d).map(|_| rng.gen_range(-2.0..2.0)).collect();
        instantiate_family(
            n_rows,
            d,
            covariates,
            |x| self.cepo(x, 0),
            |x| self.cepo(x, 1),
            |x| self.treatment_logit(x),
            self.noise_kind,
            &mut rng,
        )
    }
}

/// Sampled parameters of one sinusoidal DGP:
/// mu_t(x) = sin(omega * w_t . x) + w_t . x.
#[derive(Clone, Debug)]
pub struct SinusoidalSpec {
    pub omega: f64,
    pub n_covariates: usize,
    pub w_mu0: Vec<f64>,
    pub w_mu1: Vec<f64>,
    pub w_t: Vec<f64>,
    pub noise_kind: NoiseKind,
}

impl SinusoidalSpec {
    pub fn sample(omega_range: (f64, f64), seed: u64) -> Result<Self> {
        let (lo, hi) = omega_range;
        if !(0.0..=3.0).contains(&lo) || !(0.0..=3.0).contains(&hi) || lo > hi {
            return Err(Error::arg("omega_range must be within [0,3]"));
        }
        let mut rng = rng::stream(seed);
        let d = rng.gen_range(5..=10usize);
        let mut draw = |_: ()| -> Vec<f64> {
            (0..d).map(|_| rng.gen_range(-10.0..6.0)).collect()
        };
        let w_mu0 = draw(());
        let w_mu1 = draw(());
        let w_t = draw(());
        let omega = if lo == hi { lo } else { rng.gen_range(lo..=hi) };
        let noise_kind = draw_test_noise(&mut rng);
        Ok(SinusoidalSpec {
            omega,
            n_covariates: d,
            w_mu0,
            w_mu1,
            w_t,
            noise_kind,
        })
    }

    pub fn cepo(&self, x: &[f64], t: u8) -> f64 {
        let w = if t == 1 { &self.w_mu1 } else { &self.w_mu0 };
        let z = dot(w, x);
        (self.omega * z).sin() + z
    }

    pub fn treatment_logit(&self, x: &[f64]) -> f64 {
        let z = dot(&self.w_t, x);
        (self.omega * z).sin() + z
    }

    pub fn instantiate(&self, n_rows: usize, seed: u64) -> Result<DgpInstance> {
        let mut rng = rng::stream(seed);
        let d = self.n_covariates;
        let covariates: Vec<f64> = (0..n_rows * d).map(|_| rng.gen_range(-3.0..5.0)).collect();
        instantiate_family(
            n_rows,
            d,
            covariates,
            |x| self.cepo(x, 0),
            |x| self.cepo(x, 1),
            |x| self.treatment_logit(x),
            self.noise_kind,
            &mut rng,
        )
    }
}

/// Test-family noise: standard Normal, Laplace, or Uniform(-1,1) with equal
/// probability, unscaled.
fn draw_test_noise(rng: &mut StreamRng) -> NoiseKind {
    match rng.gen_range(0..3u8) {
        0 => NoiseKind::Gaussian,
        1 => NoiseKind::Laplace,
        _ => NoiseKind::Uniform,
    }
}

fn draw_unit_noise(kind: NoiseKind, rng: &mut StreamRng) -> f64 {
    match kind {
        NoiseKind::Gaussian => rng::normal(rng),
        NoiseKind::Laplace => rng::laplace(rng, 1.0),
        NoiseKind::Uniform => rng.gen_range(-1.0..1.0),
        NoiseKind::None => 0.0,
    }
}

#[allow(clippy::too_many_arguments)]
fn instantiate_family(
    n_rows: usize,
    d: usize,
    covariates: Vec<f64>,
    mu0_fn: impl Fn(&[f64]) -> f64,
    mu1_fn: impl Fn(&[f64]) -> f64,
    logit_fn: impl Fn(&[f64]) -> f64,
    noise_kind: NoiseKind,
    rng: &mut StreamRng,
) -> Result<DgpInstance> {
    let mut mu0 = Vec::with_capacity(n_rows);
    let mut mu1 = Vec::with_capacity(n_rows);
    let mut propensity = Vec::with_capacity(n_rows);
    for i in 0..n_rows {
        let x = &covariates[i * d..(i + 1) * d];
        mu0.push(mu0_fn(x));
        mu1.push(mu1_fn(x));
        // sigmoid saturates to exactly 0/1 in f64 for |logit| above ~36;
        // clamp to keep positivity strict
        propensity.push(stats::sigmoid(logit_fn(x)).clamp(1e-15, 1.0 - 1e-15));
    }
    let y0: Vec<f64> = mu0.iter().map(|&m| m + draw_unit_noise(noise_kind, rng)).collect();
    let y1: Vec<f64> = mu1.iter().map(|&m| m + draw_unit_noise(noise_kind, rng)).collect();
    let treatment = draw_treatments(&propensity, rng);
    let outcome = select_factual(&treatment, &y0, &y1);
    let instance = DgpInstance {
        n_rows,
        n_covariates: d,
        covariates,
        mu0,
        mu1,
        y0,
        y1,
        propensity,
        treatment,
        outcome,
    };
    instance.validate()?;
    Ok(instance)
}

/// One polynomial-family DGP draw (degree in 1..=4).
pub fn make_polynomial_dgp(degree: usize, seed: u64, n_rows: usize) -> Result<DgpInstance> {
    let spec = PolynomialSpec::sample(degree, seed)?;
    spec.instantiate(n_rows, rng::split(seed, 1))
}

/// One sinusoidal-family DGP draw with omega drawn from `omega_range`.
pub fn make_sinusoidal_dgp(
    omega_range: (f64, f64),
    seed: u64,
    n_rows: usize,
) -> Result<DgpInstance> {
    let spec = SinusoidalSpec::sample(omega_range, seed)?;
    spec.instantiate(n_rows, rng::split(seed, 1))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn poly_extend_width_is_d_deg_plus_one() {
        let x = vec![0.5; 13];
        for deg in 1..=4 {
            assert_eq!(poly_extend(&x, deg).len(), 13 * deg + 1);
        }
    }

    #[test]
    fn poly_zero_weights_give_constant_bias() {
        let spec = PolynomialSpec {
            degree: 1,
            n_covariates: 3,
            w_mu0: vec![0.0, 0.0, 0.0, 2.5],
            w_mu1: vec![0.0, 0.0, 0.0, -1.5],
            w_t: vec![0.0; 4],
            noise_kind: NoiseKind::Gaussian,
        };
        for x in [[0.0, 0.0, 0.0], [1.0, -2.0, 0.3], [-1.9, 1.9, 0.0]] {
            assert_eq!(spec.cepo(&x, 0), 2.5);
            assert_eq!(spec.cepo(&x, 1), -1.5);
        }
    }

    #[test]
    fn poly_quadratic_matches_direct_evaluation() {
        // mu(x) = w0 + w1 x + w2 x^2 on a single feature; feature layout is
        // (x, x^2, 1) so weights map as (w1, w2, w0)
        let (w0, w1, w2) = (0.7, -1.2, 0.4);
        let spec = PolynomialSpec {
            degree: 2,
            n_covariates: 1,
            w_mu0: vec![w1, w2, w0],
            w_mu1: vec![0.0, 0.0, 0.0],
            w_t: vec![0.0, 0.0, 0.0],
            noise_kind: NoiseKind::Uniform,
        };
        for x in [-2.0, 0.0, 2.0] {
            let direct = w0 + w1 * x + w2 * x * x;
            assert!((spec.cepo(&[x], 0) - direct).abs() < 1e-12);
        }
    }

    #[test]
    fn sinusoidal_omega_zero_is_linear() {
        let spec = SinusoidalSpec::sample((0.0, 0.0), 21).unwrap();
        assert_eq!(spec.omega, 0.0);
        let x: Vec<f64> = (0..spec.n_covariates).map(|i| 0.3 * i as f64 - 1.0).collect();
        let direct: f64 = spec.w_mu1.iter().zip(&x).map(|(&w, &v)| w * v).sum();
        assert_eq!(spec.cepo(&x, 1), direct);
    }

    #[test]
    fn sinusoidal_probe_point() {
        // choose w so that w . x = pi/2 at the probe; with omega = 1 the CEPO
        // is sin(pi/2) + pi/2 = 1 + pi/2
        let spec = SinusoidalSpec {
            omega: 1.0,
            n_covariates: 2,
            w_mu0: vec![std::f64::consts::FRAC_PI_2, 0.0],
            w_mu1: vec![0.0, 0.0],
            w_t: vec![0.0, 0.0],
            noise_kind: NoiseKind::Gaussian,
        };
        let got = spec.cepo(&[1.0, 3.3], 0);
        assert!((got - (1.0 + std::f64::consts::FRAC_PI_2)).abs() < 1e-12);
    }

    #[test]
    fn sinusoidal_omega_respects_range_bounds() {
        for seed in 0..30 {
            let l1 = SinusoidalSpec::sample((0.0, 1.0), seed).unwrap();
            assert!((0.0..=1.0).contains(&l1.omega));
            let l2 = SinusoidalSpec::sample((1.0001, 2.0), seed).unwrap();
            assert!(l2.omega > 1.0 && l2.omega <= 2.0);
        }
    }

    #[test]
    fn family_dimensions_in_documented_ranges() {
        for seed in 0..10 {
            let p = make_polynomial_dgp(3, seed, 16).unwrap();
            assert!((10..=20).contains(&p.n_covariates));
            assert!(p.covariates.iter().all(|&v| (-2.0..2.0).contains(&v)));
            let s = make_sinusoidal_dgp((0.0, 1.0), seed, 16).unwrap();
            assert!((5..=10).contains(&s.n_covariates));
            assert!(s.covariates.iter().all(|&v| (-3.0..5.0).contains(&v)));
        }
    }

    #[test]
    fn families_are_deterministic() {
        let a = make_sinusoidal_dgp((0.0, 0.0), 5, 32).unwrap();
        let b = make_sinusoidal_dgp((0.0, 0.0), 5, 32).unwrap();
        assert_eq!(a, b);
        let c = make_polynomial_dgp(2, 5, 32).unwrap();
        let d = make_polynomial_dgp(2, 5, 32).unwrap();
        assert_eq!(c, d);
    }
}
