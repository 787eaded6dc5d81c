use std::fmt;
use std::str::FromStr;

use crate::datagen::Dataset;
use crate::error::{PcnnError, Result};
use crate::numerics::{sample_gaussian, sample_student_t, streams, Matrix, Rng};

/// Closed-form scalar subpatterns for synthetic targets.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Subpattern {
    /// `1 + e^u cos u`
    ExpCos,
    /// `-1 - u² cos u`
    NegQuadCos,
    /// `1 + sin(10u)`
    Sin10,
    /// `-2 - u²`
    NegShiftQuad,
    /// `u`
    Linear,
    /// `u²`
    Square,
    /// `slope·u + intercept`
    Affine { slope: f64, intercept: f64 },
}

impl Subpattern {
    pub fn eval(self, u: f64) -> f64 {
        match self {
            Subpattern::ExpCos => 1.0 + u.exp() * u.cos(),
            Subpattern::NegQuadCos => -1.0 - u * u * u.cos(),
            Subpattern::Sin10 => 1.0 + (10.0 * u).sin(),
            Subpattern::NegShiftQuad => -2.0 - u * u,
            Subpattern::Linear => u,
            Subpattern::Square => u * u,
            Subpattern::Affine { slope, intercept } => slope * u + intercept,
        }
    }
}

impl fmt::Display for Subpattern {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Subpattern::ExpCos => f.write_str("exp_cos"),
            Subpattern::NegQuadCos => f.write_str("neg_quad_cos"),
            Subpattern::Sin10 => f.write_str("sin10"),
            Subpattern::NegShiftQuad => f.write_str("neg_shift_quad"),
            Subpattern::Linear => f.write_str("linear"),
            Subpattern::Square => f.write_str("square"),
            Subpattern::Affine { slope, intercept } => write!(f, "affine:{slope}:{intercept}"),
        }
    }
}

impl FromStr for Subpattern {
    type Err = PcnnError;

    fn from_str(s: &str) -> Result<Self> {
        let s = s.trim();
        Ok(match s {
            "exp_cos" => Subpattern::ExpCos,
            "neg_quad_cos" => Subpattern::NegQuadCos,
            "sin10" => Subpattern::Sin10,
            "neg_shift_quad" => Subpattern::NegShiftQuad,
            "linear" => Subpattern::Linear,
            "square" => Subpattern::Square,
            _ => {
                let mut it = s.split(':');
                match (it.next(), it.next(), it.next(), it.next()) {
                    (Some("affine"), Some(a), Some(b), None) => {
                        let parse = |v: &str| {
                            v.parse::<f64>().map_err(|_| {
                                PcnnError::InvalidArgument(format!("bad affine coefficient `{v}`"))
                            })
                        };
                        Subpattern::Affine {
                            slope: parse(a)?,
                            intercept: parse(b)?,
                        }
                    }
                    _ => {
                        return Err(PcnnError::InvalidArgument(format!(
                            "unknown subpattern `{s}`"
                        )))
                    }
                }
            }
        })
    }
}

/// How the scalar switching coordinate `u = A·x` is formed.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Projection {
    /// `A` has i.i.d. standard Gaussian entries.
    Gaussian,
    /// `A` is all ones (`u = Σ x_i`; `u = x` when `d = 1`).
    Unit,
}

/// Parameters of the noisy two-pattern regression problem
/// `y = f(x) + σ·ε`, `ε ~ t(ν)`.
#[derive(Clone, Debug, PartialEq)]
pub struct SyntheticSpec {
    pub d: usize,
    pub n: usize,
    pub sigma: f64,
    pub nu: f64,
    pub r: f64,
    pub f1: Subpattern,
    pub f2: Subpattern,
    pub projection: Projection,
    /// Fraction of rows tagged as test.
    pub test_fraction: f64,
    pub seed: u64,
}

impl Default for SyntheticSpec {
    fn default() -> Self {
        SyntheticSpec {
            d: 1,
            n: 1000,
            sigma: 0.0,
            nu: 30.0,
            r: 0.25,
            f1: Subpattern::ExpCos,
            f2: Subpattern::NegQuadCos,
            projection: Projection::Gaussian,
            test_fraction: 0.2,
            seed: 0,
        }
    }
}

impl SyntheticSpec {
    /// Applies one `key=value` setting.
    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        fn num<T: FromStr>(key: &str, v: &str) -> Result<T> {
            v.trim()
                .parse()
                .map_err(|_| PcnnError::InvalidArgument(format!("`{key}`: cannot parse `{v}`")))
        }
        match key.trim() {
            "d" => self.d = num(key, value)?,
            "n" => self.n = num(key, value)?,
            "sigma" => self.sigma = num(key, value)?,
            "nu" => self.nu = num(key, value)?,
            "r" => self.r = num(key, value)?,
            "f1" => self.f1 = value.parse()?,
            "f2" => self.f2 = value.parse()?,
            "seed" => self.seed = num(key, value)?,
            "test_fraction" => self.test_fraction = num(key, value)?,
            "projection" => {
                self.projection = match value.trim() {
                    "gaussian" => Projection::Gaussian,
                    "unit" => Projection::Unit,
                    other => {
                        return Err(PcnnError::InvalidArgument(format!(
                            "unknown projection `{other}`"
                        )))
                    }
                }
            }
            other => {
                return Err(PcnnError::InvalidArgument(format!(
                    "unknown synthetic key `{other}`"
                )))
            }
        }
        Ok(())
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.r > 0.0) || !self.r.is_finite() {
            return Err(PcnnError::InvalidArgument(format!("r must be > 0, got {}", self.r)));
        }
        if self.d == 0 || self.n == 0 {
            return Err(PcnnError::InvalidArgument("d and n must be >= 1".into()));
        }
        if !(self.sigma >= 0.0) || !self.sigma.is_finite() {
            return Err(PcnnError::InvalidArgument(format!("sigma must be >= 0, got {}", self.sigma)));
        }
        if !(self.nu > 0.0) {
            return Err(PcnnError::InvalidArgument(format!("nu must be > 0, got {}", self.nu)));
        }
        if !(0.0..=1.0).contains(&self.test_fraction) {
            return Err(PcnnError::InvalidArgument(format!(
                "test_fraction must lie in [0, 1], got {}",
                self.test_fraction
            )));
        }
        Ok(())
    }
}

/// Target value and true part (0 or 1) at `x`.
///
/// `u = A·x`; the first pattern is active when `u mod r` falls in `[0, r/2)`,
/// the second on `[r/2, r)`. The modulus is taken in `[0, r)`.
pub fn synth_target(spec: &SyntheticSpec, projection: &[f64], x: &[f64]) -> Result<(Vec<f64>, usize)> {
    if !(spec.r > 0.0) {
        return Err(PcnnError::InvalidArgument(format!("r must be > 0, got {}", spec.r)));
    }
    if projection.len() != x.len() {
        return Err(PcnnError::DimensionMismatch(format!(
            "projection has {} entries, input has {}",
            projection.len(),
            x.len()
        )));
    }
    let u: f64 = projection.iter().zip(x).map(|(a, b)| a * b).sum();
    let phase = u.rem_euclid(spec.r);
    if phase < 0.5 * spec.r {
        Ok((vec![spec.f1.eval(u)], 0))
    } else {
        Ok((vec![spec.f2.eval(u)], 1))
    }
}

/// Draws a synthetic dataset; see [`generate_with_projection`].
pub fn generate(spec: &SyntheticSpec, rng: &mut Rng) -> Result<Dataset> {
    generate_with_projection(spec, rng).map(|(d, _)| d)
}

/// Draws `n` inputs uniformly from `[0,1)^d`, a projection row `A`, and
/// noisy targets. Returns the dataset (true parts stored as part labels)
/// together with `A`.
///
/// Inputs, projection, noise and split each come from their own child
/// stream, so changing `sigma` or `nu` leaves the inputs untouched.
pub fn generate_with_projection(spec: &SyntheticSpec, rng: &mut Rng) -> Result<(Dataset, Vec<f64>)> {
    spec.validate()?;
    let base = Rng::new(rng.next_u64());
    let (n, d) = (spec.n, spec.d);

    let mut input_rng = base.child(streams::DATA);
    let inputs: Vec<f64> = (0..n * d).map(|_| input_rng.next_f64()).collect();
    let inputs = Matrix::from_raw(n, d, inputs);

    let projection = match spec.projection {
        Projection::Gaussian => sample_gaussian(&mut base.child(streams::MODEL), d)?.into_vec(),
        Projection::Unit => vec![1.0; d],
    };

    let noise = sample_student_t(&mut base.child(streams::TRIAL), spec.nu, n)?;
    let mut targets = Vec::with_capacity(n);
    let mut parts = Vec::with_capacity(n);
    for (i, x) in inputs.iter_rows().enumerate() {
        let (value, part) = synth_target(spec, &projection, x)?;
        targets.push(value[0] + spec.sigma * noise.get(i, 0));
        parts.push(part);
    }
    let targets = Matrix::from_vec(n, 1, targets)?;
    let dataset = Dataset::new(inputs, targets)?
        .with_part_labels(parts)?
        .split_random(spec.test_fraction, &mut base.child(streams::SPLIT))?;
    Ok((dataset, projection))
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    fn spec_1d(f1: Subpattern, f2: Subpattern) -> SyntheticSpec {
        SyntheticSpec {
            d: 1,
            r: 0.25,
            f1,
            f2,
            projection: Projection::Unit,
            ..SyntheticSpec::default()
        }
    }

    #[test]
    fn first_pattern_below_half_period() {
        let spec = spec_1d(Subpattern::ExpCos, Subpattern::NegQuadCos);
        let (v, part) = synth_target(&spec, &[1.0], &[0.1]).unwrap();
        assert_eq!(part, 0);
        assert_abs_diff_eq!(v[0], 1.0 + 0.1f64.exp() * 0.1f64.cos(), epsilon = 1e-15);
        assert_abs_diff_eq!(v[0], 2.0996, epsilon = 1e-4);
    }

    #[test]
    fn second_pattern_above_half_period() {
        let spec = spec_1d(Subpattern::ExpCos, Subpattern::NegQuadCos);
        let (v, part) = synth_target(&spec, &[1.0], &[0.2]).unwrap();
        assert_eq!(part, 1);
        assert_abs_diff_eq!(v[0], -1.0 - 0.04 * 0.2f64.cos(), epsilon = 1e-15);
        assert_abs_diff_eq!(v[0], -1.0392, epsilon = 1e-4);
    }

    #[test]
    fn phase_zero_is_first_part_and_negative_u_wraps() {
        let spec = spec_1d(Subpattern::Linear, Subpattern::Square);
        assert_eq!(synth_target(&spec, &[1.0], &[0.0]).unwrap().1, 0);
        assert_eq!(synth_target(&spec, &[1.0], &[0.5]).unwrap().1, 0);
        // -0.05 mod 0.25 = 0.2 ≥ 0.125
        assert_eq!(synth_target(&spec, &[1.0], &[-0.05]).unwrap().1, 1);
        // -0.2 mod 0.25 = 0.05 < 0.125
        assert_eq!(synth_target(&spec, &[1.0], &[-0.2]).unwrap().1, 0);
    }

    #[test]
    fn nonpositive_period_rejected() {
        let mut spec = spec_1d(Subpattern::Linear, Subpattern::Square);
        spec.r = 0.0;
        assert!(synth_target(&spec, &[1.0], &[0.1]).is_err());
        spec.r = -1.0;
        assert!(generate(&spec, &mut Rng::new(0)).is_err());
    }

    #[test]
    fn parse_names_round_trip() {
        for s in ["exp_cos", "neg_quad_cos", "sin10", "neg_shift_quad", "linear", "square", "affine:1:2"] {
            let p: Subpattern = s.parse().unwrap();
            assert_eq!(p.to_string(), s);
        }
        assert!("cubic".parse::<Subpattern>().is_err());
    }

    #[test]
    fn noiseless_targets_match_closed_form() {
        let spec = SyntheticSpec {
            d: 3,
            n: 200,
            sigma: 0.0,
            f1: Subpattern::Sin10,
            f2: Subpattern::NegShiftQuad,
            ..SyntheticSpec::default()
        };
        let (data, a) = generate_with_projection(&spec, &mut Rng::new(4)).unwrap();
        for i in 0..data.len() {
            let (v, part) = synth_target(&spec, &a, data.inputs().row(i)).unwrap();
            assert_eq!(data.targets().get(i, 0), v[0]);
            assert_eq!(data.part_labels().unwrap()[i], part);
        }
        assert!(data.inputs().as_slice().iter().all(|v| (0.0..1.0).contains(v)));
    }

    #[test]
    fn generation_is_deterministic() {
        let spec = SyntheticSpec {
            d: 2,
            n: 50,
            sigma: 0.3,
            ..SyntheticSpec::default()
        };
        let a = generate(&spec, &mut Rng::new(8)).unwrap();
        let b = generate(&spec, &mut Rng::new(8)).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn kv_settings() {
        let mut spec = SyntheticSpec::default();
        spec.set("d", "4").unwrap();
        spec.set("f2", "square").unwrap();
        spec.set("projection", "unit").unwrap();
        assert_eq!(spec.d, 4);
        assert_eq!(spec.f2, Subpattern::Square);
        assert_eq!(spec.projection, Projection::Unit);
        assert!(spec.set("bogus", "1").is_err());
        assert!(spec.set("sigma", "abc").is_err());
    }
}
