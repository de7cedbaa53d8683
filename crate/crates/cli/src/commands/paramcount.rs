//! `paramcount`: exact per-stage parameter accounting for the baseline,
//! widened, and depthwise-separable encoder variants.

use serde::Serialize;

use pedseg_nn::plan::{
    conv_weight_count, count_parameters, BlockConfig, ChannelPlan, ConvVariant, ParameterCount,
    MODALITY_COUNT,
};

use crate::error::{CliError, Result};
use crate::manifest::RunContext;

/// Output file name of the accounting report.
pub const OUTPUT_REPORT: &str = "paramcount.json";

#[derive(Debug, Serialize)]
struct StageRow {
    stage: usize,
    in_channels: usize,
    out_channels: usize,
    weights: usize,
    biases: usize,
}

#[derive(Debug, Serialize)]
struct CountTable {
    widths: Vec<usize>,
    stages: Vec<StageRow>,
    total_weights: usize,
    total_biases: usize,
    total_with_bias: usize,
}

impl CountTable {
    fn new(widths: &[usize], counts: &ParameterCount) -> Self {
        CountTable {
            widths: widths.to_vec(),
            stages: counts
                .stages
                .iter()
                .map(|s| StageRow {
                    stage: s.stage,
                    in_channels: s.in_channels,
                    out_channels: s.out_channels,
                    weights: s.weights,
                    biases: s.biases,
                })
                .collect(),
            total_weights: counts.total_weights,
            total_biases: counts.total_biases,
            total_with_bias: counts.total_with_bias(),
        }
    }
}

/// Weight counts of one convolution at the same kernel and channel pair,
/// under both factorizations.
#[derive(Debug, Serialize)]
struct SingleConvExample {
    kernel: usize,
    in_channels: usize,
    out_channels: usize,
    standard_weights: usize,
    separable_weights: usize,
}

#[derive(Debug, Serialize)]
struct ParamCountJson {
    kernel: usize,
    input_channels: usize,
    baseline: CountTable,
    widened: CountTable,
    widened_separable: CountTable,
    single_conv_example: SingleConvExample,
}

fn print_table(name: &str, table: &CountTable) {
    println!("{name} (widths {:?})", table.widths);
    println!(
        "  {:<5} {:>5} {:>5} {:>12} {:>8}",
        "stage", "c_in", "c_out", "weights", "biases"
    );
    for s in &table.stages {
        println!(
            "  {:<5} {:>5} {:>5} {:>12} {:>8}",
            s.stage, s.in_channels, s.out_channels, s.weights, s.biases
        );
    }
    println!(
        "  total: {} weights + {} biases = {}",
        table.total_weights, table.total_biases, table.total_with_bias
    );
}

pub fn run(ctx: &mut RunContext, kernel: usize) -> Result<()> {
    if kernel == 0 {
        return Err(CliError::Input("kernel must be at least 1".to_string()));
    }
    ctx.record("kernel", kernel);

    let plan = match ctx.config.get_list("decoder_widths")? {
        None => ChannelPlan::default(),
        Some(values) => {
            let widths = values
                .iter()
                .map(|&v| {
                    if v.fract() == 0.0 && v >= 1.0 && v <= u32::MAX as f64 {
                        Ok(v as usize)
                    } else {
                        Err(CliError::Input(format!(
                            "decoder_widths: {v} is not a positive channel count"
                        )))
                    }
                })
                .collect::<Result<Vec<usize>>>()?;
            ChannelPlan::new(widths)?
        }
    };
    ctx.record("decoder_widths", format!("{:?}", plan.decoder_widths()));

    let standard = BlockConfig {
        kernel,
        variant: ConvVariant::Standard,
        input_channels: MODALITY_COUNT,
    };
    let separable = BlockConfig {
        variant: ConvVariant::Separable,
        ..standard
    };

    let baseline = CountTable::new(
        plan.decoder_widths(),
        &count_parameters(plan.decoder_widths(), &standard),
    );
    let widened = CountTable::new(plan.encoder_widths(), &plan.encoder_counts(&standard));
    let widened_separable =
        CountTable::new(plan.encoder_widths(), &plan.encoder_counts(&separable));

    let example = SingleConvExample {
        kernel,
        in_channels: 32,
        out_channels: 32,
        standard_weights: conv_weight_count(kernel, 32, 32, ConvVariant::Standard),
        separable_weights: conv_weight_count(kernel, 32, 32, ConvVariant::Separable),
    };

    print_table("baseline", &baseline);
    print_table("widened", &widened);
    print_table("widened_separable", &widened_separable);
    println!(
        "single {0}x{0}x{0} conv at {1}->{2} channels: standard {3} weights, separable {4} weights",
        example.kernel,
        example.in_channels,
        example.out_channels,
        example.standard_weights,
        example.separable_weights
    );

    let report = ParamCountJson {
        kernel,
        input_channels: MODALITY_COUNT,
        baseline,
        widened,
        widened_separable,
        single_conv_example: example,
    };
    ctx.write_json(OUTPUT_REPORT, &report)?;
    Ok(())
}
