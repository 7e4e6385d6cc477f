//! `chiselkit synth` — build a patterned benchmark tensor.
//!
//! The generator comes either from a spec JSON file or from a named preset
//! plus shape flags. The clean tensor can be scrambled behind random basis
//! changes and perturbed with additive noise before it is written, which
//! makes one invocation produce a complete detection challenge: the written
//! `tensor.tnsr` hides the pattern, `truth.pattern.json` records it.

use std::fs;
use std::path::PathBuf;

use clap::{Args, ValueEnum};

use chiselkit::multiarray::write_tensor;
use chiselkit::pattern::write_pattern;
use chiselkit::synthesis::{
    self, Fill, ScrambleKind, SynthesisSpec, DEFAULT_SCRAMBLE_CAP,
};
use chiselkit::{Error, Result};

use super::check_tolerances;

#[derive(Clone, Copy, Debug, ValueEnum)]
pub enum FillArg {
    /// Entries iid uniform on (−1, 1).
    Uniform,
    /// Entries iid standard normal.
    Gaussian,
}

impl From<FillArg> for Fill {
    fn from(fill: FillArg) -> Fill {
        match fill {
            FillArg::Uniform => Fill::Uniform,
            FillArg::Gaussian => Fill::Gaussian,
        }
    }
}

#[derive(Clone, Copy, Debug, ValueEnum)]
pub enum Preset {
    /// Diagonal blocks: centroid chisel, k equal parts on every axis.
    Diagonal,
    /// Face blocks: adjoint chisel coupling two axes, the rest single-block.
    Face,
    /// Near-index-resolution curve under the sum rule i + j = l.
    Curve,
    /// Block-resolution surface under the sum rule.
    Surface,
}

#[derive(Args, Debug)]
pub struct SynthArgs {
    /// Spec JSON file describing the generator; replaces the preset flags.
    #[arg(long, conflicts_with = "preset")]
    spec: Option<PathBuf>,

    /// Named generator preset.
    #[arg(long, value_enum)]
    preset: Option<Preset>,

    /// Axis dimensions, comma separated (e.g. 10,12,14).
    #[arg(long, value_delimiter = ',')]
    dims: Vec<usize>,

    /// Part counts per axis (diagonal/curve/surface), or the shared part
    /// count of the two coupled axes (face; give one value or an equal pair).
    #[arg(long, value_delimiter = ',')]
    parts: Vec<usize>,

    /// The two coupled axes for the face preset, 1-based (e.g. 1,2).
    #[arg(long, value_delimiter = ',')]
    axes: Vec<usize>,

    /// Entry distribution for the block fill (overrides the spec file).
    #[arg(long, value_enum)]
    fill: Option<FillArg>,

    /// Build seed (overrides the spec file).
    #[arg(long)]
    seed: Option<u64>,

    /// Hide the pattern behind a random basis change on every axis.
    #[arg(long)]
    scramble: bool,

    /// Scramble seed [default: build seed + 1].
    #[arg(long)]
    scramble_seed: Option<u64>,

    /// Condition cap for the scramble bases.
    #[arg(long, default_value_t = DEFAULT_SCRAMBLE_CAP)]
    scramble_cap: f64,

    /// Draw orthogonal scramble bases instead of plain Gaussian ones.
    #[arg(long, requires = "scramble")]
    orthogonal: bool,

    /// Additive Gaussian noise level, relative to the root-mean-square
    /// entry; 0 disables.
    #[arg(long, default_value_t = 0.0)]
    noise: f64,

    /// Noise seed [default: build seed + 2].
    #[arg(long)]
    noise_seed: Option<u64>,

    /// Directory for tensor.tnsr and truth.pattern.json.
    #[arg(long, default_value = ".")]
    out_dir: PathBuf,
}

/// Assemble the synthesis spec from either source and apply flag overrides.
fn load_spec(args: &SynthArgs) -> Result<SynthesisSpec> {
    let mut spec = if let Some(path) = &args.spec {
        SynthesisSpec::from_json(&fs::read_to_string(path)?)?
    } else {
        let preset = args
            .preset
            .ok_or_else(|| Error::arg("give --spec FILE or --preset NAME"))?;
        if args.dims.is_empty() {
            return Err(Error::arg("missing --dims"));
        }
        if args.parts.is_empty() {
            return Err(Error::arg("missing --parts"));
        }
        match preset {
            Preset::Diagonal => synthesis::diagonal_blocks(&args.dims, &args.parts)?,
            Preset::Face => {
                let k = match args.parts.as_slice() {
                    [k] => *k,
                    [k1, k2] if k1 == k2 => *k1,
                    _ => {
                        return Err(Error::arg(
                            "the face preset shares one part count across its two coupled \
                             axes; give --parts k or --parts k,k",
                        ))
                    }
                };
                let (a, b) = match args.axes.as_slice() {
                    [a, b] => (*a, *b),
                    [] => return Err(Error::arg("the face preset needs --axes a,b (1-based)")),
                    _ => return Err(Error::arg("--axes takes exactly two axis numbers")),
                };
                if a == 0 || b == 0 {
                    return Err(Error::arg("--axes are 1-based; found 0"));
                }
                synthesis::face_blocks(&args.dims, k, a - 1, b - 1)?
            }
            Preset::Curve => synthesis::curve(&args.dims, &args.parts)?,
            Preset::Surface => synthesis::surface(&args.dims, &args.parts)?,
        }
    };
    if let Some(seed) = args.seed {
        spec.seed = seed;
    }
    if let Some(fill) = args.fill {
        spec.fill = fill.into();
    }
    Ok(spec)
}

pub fn run(args: &SynthArgs) -> Result<u8> {
    check_tolerances(&[("scramble-cap", args.scramble_cap)])?;
    if !(args.noise >= 0.0 && args.noise.is_finite()) {
        return Err(Error::arg(format!("--noise must be finite and ≥ 0, got {}", args.noise)));
    }
    let spec = load_spec(args)?;
    let (mut tensor, truth) = synthesis::build_tensor(&spec)?;
    if args.scramble {
        let kind = if args.orthogonal { ScrambleKind::Orthogonal } else { ScrambleKind::Gaussian };
        let seed = args.scramble_seed.unwrap_or_else(|| spec.seed.wrapping_add(1));
        let (scrambled, _bases) = synthesis::scramble_with(&tensor, seed, args.scramble_cap, kind)?;
        tensor = scrambled;
    }
    if args.noise > 0.0 {
        let seed = args.noise_seed.unwrap_or_else(|| spec.seed.wrapping_add(2));
        tensor = synthesis::add_noise(&tensor, args.noise, seed)?;
    }
    fs::create_dir_all(&args.out_dir)?;
    let tensor_path = args.out_dir.join("tensor.tnsr");
    write_tensor(&tensor, &tensor_path)?;
    let truth_path = args.out_dir.join("truth.pattern.json");
    fs::write(&truth_path, write_pattern(&truth.pattern)?)?;
    let dims: Vec<String> = tensor.dims().iter().map(|d| d.to_string()).collect();
    println!(
        "wrote {} ({} {}) and {} ({} tuples)",
        tensor_path.display(),
        dims.join("×"),
        tensor.field().tag(),
        truth_path.display(),
        truth.pattern.len()
    );
    Ok(0)
}
