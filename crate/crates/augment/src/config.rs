//! Augmentation configuration: per-transform application probabilities and
//! parameter ranges, plus the seeded pipeline that applies every enabled
//! transform to an image/label pair.
//!
//! Defaults follow common 3D segmentation practice (rotations up to ±30°,
//! scale 0.7–1.4, noise variance up to 0.1, blur sigma 0.5–1, brightness and
//! contrast multipliers 0.75–1.25, gamma 0.7–1.5, low-resolution factor
//! 0.5–1, flips at one half per axis); every value is config-exposed.
//! Elastic deformation has a reserved stage in the pipeline but is not
//! implemented, and its flag must stay off.

use pedseg_core::config::ConfigMap;
use pedseg_core::{LabelVolume, VoxelGrid};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::intensity::{brightness, contrast, gamma_correct, gaussian_blur, gaussian_noise};
use crate::spatial::{
    affine_grid, affine_labels, draw_affine, draw_flips, flip_grid, flip_labels,
    simulate_low_resolution,
};

/// Closed interval a parameter is drawn from uniformly.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Range {
    pub low: f64,
    pub high: f64,
}

impl Range {
    /// Builds a range, rejecting non-finite or inverted bounds. A degenerate
    /// range (`low == high`) is allowed and always samples that value.
    pub fn new(low: f64, high: f64) -> Result<Range> {
        if !low.is_finite() || !high.is_finite() || low > high {
            return Err(Error::InvalidConfig(format!(
                "range [{low}, {high}] must be finite with low <= high"
            )));
        }
        Ok(Range { low, high })
    }

    /// Uniform draw from the closed interval.
    pub fn sample<R: Rng>(&self, rng: &mut R) -> f64 {
        if self.low == self.high {
            return self.low;
        }
        rng.gen_range(self.low..=self.high)
    }
}

/// Per-transform probabilities and parameter ranges for one training
/// pipeline, together with the base seed that makes every case
/// reproducible.
#[derive(Debug, Clone, PartialEq)]
pub struct AugmentConfig {
    /// Base seed; each case gets its own stream derived from it.
    pub seed: u64,
    /// Per-axis mirror probability (x, y, z).
    pub flip_probability: [f64; 3],
    /// Probability of applying rotation-plus-scale to a case.
    pub affine_probability: f64,
    /// Euler angles drawn per axis, in degrees.
    pub rotation_degrees: Range,
    /// Isotropic scale about the volume center.
    pub scale: Range,
    pub noise_probability: f64,
    /// Variance of the additive Gaussian noise.
    pub noise_variance: Range,
    pub blur_probability: f64,
    pub blur_sigma: Range,
    pub brightness_probability: f64,
    /// Multiplicative brightness factor.
    pub brightness: Range,
    pub contrast_probability: f64,
    /// Contrast factor about the spatial mean.
    pub contrast: Range,
    pub gamma_probability: f64,
    /// Probability of the second, intensity-inverted gamma pass.
    pub inverted_gamma_probability: f64,
    pub gamma: Range,
    pub low_res_probability: f64,
    /// Downsampling factor for the low-resolution simulation.
    pub low_res_factor: Range,
    /// Reserved pipeline stage; must remain disabled.
    pub elastic_enabled: bool,
}

impl Default for AugmentConfig {
    fn default() -> Self {
        let r = |low, high| Range { low, high };
        AugmentConfig {
            seed: 0,
            flip_probability: [0.5; 3],
            affine_probability: 0.2,
            rotation_degrees: r(-30.0, 30.0),
            scale: r(0.7, 1.4),
            noise_probability: 0.1,
            noise_variance: r(0.0, 0.1),
            blur_probability: 0.2,
            blur_sigma: r(0.5, 1.0),
            brightness_probability: 0.15,
            brightness: r(0.75, 1.25),
            contrast_probability: 0.15,
            contrast: r(0.75, 1.25),
            gamma_probability: 0.3,
            inverted_gamma_probability: 0.1,
            gamma: r(0.7, 1.5),
            low_res_probability: 0.25,
            low_res_factor: r(0.5, 1.0),
            elastic_enabled: false,
        }
    }
}

impl AugmentConfig {
    /// A configuration under which the pipeline is exactly the identity:
    /// every application probability is zero.
    pub fn disabled() -> Self {
        AugmentConfig {
            flip_probability: [0.0; 3],
            affine_probability: 0.0,
            noise_probability: 0.0,
            blur_probability: 0.0,
            brightness_probability: 0.0,
            contrast_probability: 0.0,
            gamma_probability: 0.0,
            inverted_gamma_probability: 0.0,
            low_res_probability: 0.0,
            ..AugmentConfig::default()
        }
    }

    /// Checks every probability and range against its domain.
    pub fn validate(&self) -> Result<()> {
        let prob = |name: &str, p: f64| -> Result<()> {
            if !(0.0..=1.0).contains(&p) || !p.is_finite() {
                return Err(Error::InvalidConfig(format!(
                    "{name} probability {p} outside [0, 1]"
                )));
            }
            Ok(())
        };
        for (axis, &p) in ["flip x", "flip y", "flip z"]
            .iter()
            .zip(&self.flip_probability)
        {
            prob(axis, p)?;
        }
        prob("affine", self.affine_probability)?;
        prob("noise", self.noise_probability)?;
        prob("blur", self.blur_probability)?;
        prob("brightness", self.brightness_probability)?;
        prob("contrast", self.contrast_probability)?;
        prob("gamma", self.gamma_probability)?;
        prob("inverted gamma", self.inverted_gamma_probability)?;
        prob("low-resolution", self.low_res_probability)?;

        let check = |name: &str, r: Range| -> Result<Range> {
            // Re-validates ranges that were built literally.
            Range::new(r.low, r.high)
                .map_err(|_| Error::InvalidConfig(format!("{name} range [{}, {}]", r.low, r.high)))
        };
        check("rotation", self.rotation_degrees)?;
        let scale = check("scale", self.scale)?;
        if scale.low <= 0.0 {
            return Err(Error::InvalidConfig(format!(
                "scale must stay positive, got low {}",
                scale.low
            )));
        }
        let noise = check("noise variance", self.noise_variance)?;
        if noise.low < 0.0 {
            return Err(Error::InvalidConfig(format!(
                "noise variance must be nonnegative, got low {}",
                noise.low
            )));
        }
        let sigma = check("blur sigma", self.blur_sigma)?;
        if sigma.low < 0.0 {
            return Err(Error::InvalidConfig(format!(
                "blur sigma must be nonnegative, got low {}",
                sigma.low
            )));
        }
        check("brightness", self.brightness)?;
        check("contrast", self.contrast)?;
        let gamma = check("gamma", self.gamma)?;
        if gamma.low <= 0.0 {
            return Err(Error::InvalidConfig(format!(
                "gamma must stay positive, got low {}",
                gamma.low
            )));
        }
        let factor = check("low-resolution factor", self.low_res_factor)?;
        if factor.low <= 0.0 || factor.high > 1.0 {
            return Err(Error::InvalidConfig(format!(
                "low-resolution factor must lie in (0, 1], got [{}, {}]",
                factor.low, factor.high
            )));
        }
        if self.elastic_enabled {
            return Err(Error::InvalidConfig(
                "elastic deformation is a reserved stage and cannot be enabled".into(),
            ));
        }
        Ok(())
    }

    /// Builds the configuration from a parsed config file, starting from the
    /// defaults and overriding whatever keys are present. Keys: `augment_seed`,
    /// `flip_probability` (list of three), `affine_probability`,
    /// `rotation_degrees`, `scale_range`, `noise_probability`,
    /// `noise_variance`, `blur_probability`, `blur_sigma`,
    /// `brightness_probability`, `brightness_range`, `contrast_probability`,
    /// `contrast_range`, `gamma_probability`, `inverted_gamma_probability`,
    /// `gamma_range`, `low_res_probability`, `low_res_factor`.
    pub fn from_config(config: &ConfigMap) -> Result<AugmentConfig> {
        let defaults = AugmentConfig::default();
        let range = |key: &str, fallback: Range| -> Result<Range> {
            match config.get_range(key).map_err(Error::Core)? {
                Some((low, high)) => Range::new(low, high),
                None => Ok(fallback),
            }
        };
        let prob = |key: &str, fallback: f64| -> Result<f64> {
            Ok(config.get_f64(key).map_err(Error::Core)?.unwrap_or(fallback))
        };

        let flip_probability = match config.get_list("flip_probability").map_err(Error::Core)? {
            Some(values) => {
                if values.len() != 3 {
                    return Err(Error::InvalidConfig(format!(
                        "flip_probability needs exactly three entries, got {}",
                        values.len()
                    )));
                }
                [values[0], values[1], values[2]]
            }
            None => defaults.flip_probability,
        };

        let built = AugmentConfig {
            seed: config
                .get_u64("augment_seed")
                .map_err(Error::Core)?
                .unwrap_or(defaults.seed),
            flip_probability,
            affine_probability: prob("affine_probability", defaults.affine_probability)?,
            rotation_degrees: range("rotation_degrees", defaults.rotation_degrees)?,
            scale: range("scale_range", defaults.scale)?,
            noise_probability: prob("noise_probability", defaults.noise_probability)?,
            noise_variance: range("noise_variance", defaults.noise_variance)?,
            blur_probability: prob("blur_probability", defaults.blur_probability)?,
            blur_sigma: range("blur_sigma", defaults.blur_sigma)?,
            brightness_probability: prob(
                "brightness_probability",
                defaults.brightness_probability,
            )?,
            brightness: range("brightness_range", defaults.brightness)?,
            contrast_probability: prob("contrast_probability", defaults.contrast_probability)?,
            contrast: range("contrast_range", defaults.contrast)?,
            gamma_probability: prob("gamma_probability", defaults.gamma_probability)?,
            inverted_gamma_probability: prob(
                "inverted_gamma_probability",
                defaults.inverted_gamma_probability,
            )?,
            gamma: range("gamma_range", defaults.gamma)?,
            low_res_probability: prob("low_res_probability", defaults.low_res_probability)?,
            low_res_factor: range("low_res_factor", defaults.low_res_factor)?,
            elastic_enabled: false,
        };
        built.validate()?;
        Ok(built)
    }
}

/// Independent random stream for one case: every case draws from its own
/// stream of the base seed, so cases can be augmented in parallel and in any
/// order without changing each other's outcome.
pub fn case_rng(config: &AugmentConfig, case: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    rng.set_stream(case);
    rng
}

/// Applies the full augmentation pipeline to one image/label pair. The
/// geometric transforms (rotation-plus-scale and flips) are drawn once and
/// applied to both volumes; intensity transforms touch only the image.
///
/// Stage order: spatial, noise, blur, brightness, contrast, low-resolution
/// simulation, the two gamma passes, flips. (An elastic-deformation stage is
/// reserved between the spatial transform and the intensity stages.)
pub fn augment_case<R: Rng>(
    image: &VoxelGrid,
    labels: &LabelVolume,
    config: &AugmentConfig,
    rng: &mut R,
) -> Result<(VoxelGrid, LabelVolume)> {
    config.validate()?;
    if image.dims() != labels.dims() {
        return Err(Error::DimsMismatch(format!(
            "image {:?} vs labels {:?}",
            image.dims(),
            labels.dims()
        )));
    }

    let mut img = image.clone();
    let mut lab = labels.clone();

    if rng.gen::<f64>() < config.affine_probability {
        let draw = draw_affine(config.rotation_degrees, config.scale, rng);
        img = affine_grid(&img, &draw);
        lab = affine_labels(&lab, &draw);
    }
    if rng.gen::<f64>() < config.noise_probability {
        let variance = config.noise_variance.sample(rng);
        img = gaussian_noise(&img, variance, rng);
    }
    if rng.gen::<f64>() < config.blur_probability {
        let sigma = config.blur_sigma.sample(rng);
        img = gaussian_blur(&img, sigma);
    }
    if rng.gen::<f64>() < config.brightness_probability {
        img = brightness(&img, config.brightness.sample(rng));
    }
    if rng.gen::<f64>() < config.contrast_probability {
        img = contrast(&img, config.contrast.sample(rng));
    }
    if rng.gen::<f64>() < config.low_res_probability {
        let factor = config.low_res_factor.sample(rng);
        img = simulate_low_resolution(&img, factor)?;
    }
    if rng.gen::<f64>() < config.gamma_probability {
        img = gamma_correct(&img, config.gamma.sample(rng), false)?;
    }
    if rng.gen::<f64>() < config.inverted_gamma_probability {
        img = gamma_correct(&img, config.gamma.sample(rng), true)?;
    }
    let flips = draw_flips(config.flip_probability, rng);
    img = flip_grid(&img, flips);
    lab = flip_labels(&lab, flips);

    Ok((img, lab))
}

/// Seeded convenience wrapper: augments one case on its own stream.
pub fn augment_case_seeded(
    image: &VoxelGrid,
    labels: &LabelVolume,
    config: &AugmentConfig,
    case: u64,
) -> Result<(VoxelGrid, LabelVolume)> {
    let mut rng = case_rng(config, case);
    augment_case(image, labels, config, &mut rng)
}
