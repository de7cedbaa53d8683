//! Stage width planning and exact parameter accounting.
//!
//! The decoder runs a width list per stage (default 32..320); the encoder
//! runs double that width at every stage. Counting helpers compare the
//! widened encoder against the unwidened baseline and standard against
//! depthwise-separable convolutions.

use crate::error::{Error, Result};

/// Input modalities feeding the first encoder stage.
pub const MODALITY_COUNT: usize = 4;

/// Default decoder stage widths.
pub const DEFAULT_DECODER_WIDTHS: [usize; 6] = [32, 64, 128, 256, 320, 320];

/// Encoder/decoder width lists bound by the doubling invariant
/// encoder[i] = 2 · decoder[i].
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ChannelPlan {
    decoder: Vec<usize>,
    encoder: Vec<usize>,
}

impl ChannelPlan {
    /// Builds the widened plan from decoder widths.
    pub fn new(decoder: Vec<usize>) -> Result<Self> {
        if decoder.is_empty() {
            return Err(Error::InvalidPlan("no stages".into()));
        }
        if decoder.contains(&0) {
            return Err(Error::InvalidPlan("zero-width stage".into()));
        }
        let encoder = decoder.iter().map(|w| w * 2).collect();
        Ok(ChannelPlan { decoder, encoder })
    }

    /// Accepts explicit lists, enforcing the doubling invariant.
    pub fn with_encoder(decoder: Vec<usize>, encoder: Vec<usize>) -> Result<Self> {
        let plan = ChannelPlan::new(decoder)?;
        if plan.encoder != encoder {
            return Err(Error::InvalidPlan(format!(
                "encoder widths {:?} are not 2x the decoder widths {:?}",
                encoder, plan.decoder
            )));
        }
        Ok(plan)
    }

    pub fn stages(&self) -> usize {
        self.decoder.len()
    }

    pub fn decoder_widths(&self) -> &[usize] {
        &self.decoder
    }

    pub fn encoder_widths(&self) -> &[usize] {
        &self.encoder
    }
}

impl Default for ChannelPlan {
    fn default() -> Self {
        ChannelPlan::new(DEFAULT_DECODER_WIDTHS.to_vec()).expect("static widths are valid")
    }
}

/// Which convolution realizes each stage.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ConvVariant {
    Standard,
    Separable,
}

/// Stage topology shared by the counting variants.
#[derive(Debug, Clone, Copy)]
pub struct BlockConfig {
    pub kernel: usize,
    pub variant: ConvVariant,
    /// Channels entering the first stage (imaging modalities).
    pub input_channels: usize,
}

impl Default for BlockConfig {
    fn default() -> Self {
        BlockConfig {
            kernel: 3,
            variant: ConvVariant::Standard,
            input_channels: MODALITY_COUNT,
        }
    }
}

/// Weight count of one convolution: k³·C_in·C_out for standard,
/// k³·C_in + C_in·C_out for the depthwise + pointwise factorization.
pub fn conv_weight_count(kernel: usize, cin: usize, cout: usize, variant: ConvVariant) -> usize {
    let k3 = kernel.pow(3);
    match variant {
        ConvVariant::Standard => k3 * cin * cout,
        ConvVariant::Separable => k3 * cin + cin * cout,
    }
}

/// Bias count of one convolution (reported separately from weights).
pub fn conv_bias_count(cin: usize, cout: usize, variant: ConvVariant) -> usize {
    match variant {
        ConvVariant::Standard => cout,
        ConvVariant::Separable => cin + cout,
    }
}

/// One row of the per-stage table.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct StageCount {
    pub stage: usize,
    pub in_channels: usize,
    pub out_channels: usize,
    pub weights: usize,
    pub biases: usize,
}

/// Per-stage and total parameter counts for one width list.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ParameterCount {
    pub stages: Vec<StageCount>,
    pub total_weights: usize,
    pub total_biases: usize,
}

impl ParameterCount {
    pub fn total_with_bias(&self) -> usize {
        self.total_weights + self.total_biases
    }
}

/// Counts one convolution per stage: stage i maps the previous width (or
/// the modality count for the stem) to widths[i].
pub fn count_parameters(widths: &[usize], config: &BlockConfig) -> ParameterCount {
    let mut stages = Vec::with_capacity(widths.len());
    let mut total_weights = 0;
    let mut total_biases = 0;
    let mut cin = config.input_channels;
    for (i, &cout) in widths.iter().enumerate() {
        let weights = conv_weight_count(config.kernel, cin, cout, config.variant);
        let biases = conv_bias_count(cin, cout, config.variant);
        stages.push(StageCount {
            stage: i,
            in_channels: cin,
            out_channels: cout,
            weights,
            biases,
        });
        total_weights += weights;
        total_biases += biases;
        cin = cout;
    }
    ParameterCount {
        stages,
        total_weights,
        total_biases,
    }
}

impl ChannelPlan {
    /// Counts for the widened encoder widths.
    pub fn encoder_counts(&self, config: &BlockConfig) -> ParameterCount {
        count_parameters(&self.encoder, config)
    }

    /// Counts for an unwidened encoder running the decoder widths —
    /// the baseline the doubling is compared against.
    pub fn baseline_counts(&self, config: &BlockConfig) -> ParameterCount {
        count_parameters(&self.decoder, config)
    }
}
