use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};

use speckledic::dic::ShapeOrder;
use speckledic::field_gen::StarSpec;
use speckledic::image::BitDepth;
use speckledic::interp::Interp;
use speckledic::metrology::{EvaluationROI, PibMode, StrainComponent};
use speckledic::speckle::{RadiusDist, SpeckleParams};
use speckledic::warp::NoiseModel;

#[derive(Debug, Parser)]
#[command(name = "speckledic", version, about = "Synthetic speckle, DIC and displacement metrology")]
pub struct Cli {
    /// Worker threads (default: all cores).
    #[arg(long, global = true)]
    pub threads: Option<usize>,

    /// Master seed; falls back to SPECKLEDIC_SEED, then 0.
    #[arg(long, global = true, env = "SPECKLEDIC_SEED", default_value_t = 0)]
    pub seed: u64,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Build a training dataset (or only plan it).
    GenDataset(GenDataset),
    /// Render a reference / Star-deformed speckle pair.
    GenStar(GenStar),
    /// Deform an image by a displacement field.
    Warp(WarpArgs),
    /// Add heteroscedastic sensor noise to an image.
    AddNoise(AddNoise),
    /// Dense subset DIC between two images.
    Dic(DicArgs),
    /// AEE / MAE of an estimate against ground truth.
    Evaluate(Evaluate),
    /// Star metrology: attenuation, spatial and displacement resolution.
    Metrology(Metrology),
    /// Pattern-induced bias experiment with the DIC estimator.
    Pib(Pib),
    /// Strain map by Gaussian-derivative filtering.
    Strain(Strain),
    /// Points of interest per second for a field computed in a given time.
    Throughput(Throughput),
}

#[derive(Debug, Args)]
pub struct GenDataset {
    #[arg(long = "version", value_parser = clap::value_parser!(u8).range(1..=2))]
    pub dataset_version: u8,
    /// Output directory (required unless --plan-only).
    #[arg(long, required_unless_present = "plan_only")]
    pub out: Option<PathBuf>,
    /// Count and split the pairs without rendering anything.
    #[arg(long)]
    pub plan_only: bool,
    #[arg(long)]
    pub references: Option<usize>,
    /// Training deformations per reference (and region size).
    #[arg(long)]
    pub train: Option<usize>,
    /// Held-out deformations per reference (and region size).
    #[arg(long)]
    pub test: Option<usize>,
    #[arg(long)]
    pub frame_size: Option<usize>,
    #[arg(long, value_enum)]
    pub depth: Option<Depth>,
}

#[derive(Debug, Args, Clone)]
pub struct StarArgs {
    #[arg(long, default_value_t = 2000)]
    pub width: usize,
    #[arg(long, default_value_t = 501)]
    pub height: usize,
    #[arg(long, default_value_t = 0.5)]
    pub amplitude: f64,
    #[arg(long, default_value_t = 10.0)]
    pub period_left: f64,
    #[arg(long, default_value_t = 300.0)]
    pub period_right: f64,
    /// Symmetry row (default: middle row).
    #[arg(long)]
    pub center_row: Option<f64>,
}

impl StarArgs {
    pub fn spec(&self) -> StarSpec {
        StarSpec {
            width: self.width,
            height: self.height,
            amplitude: self.amplitude,
            period_left: self.period_left,
            period_right: self.period_right,
            center_row: self.center_row.unwrap_or(((self.height - 1) / 2) as f64),
        }
    }
}

#[derive(Debug, Args, Clone)]
pub struct SpeckleArgs {
    #[arg(long, value_enum, default_value_t = Radius::Exponential)]
    pub radius_dist: Radius,
    #[arg(long, default_value_t = 0.5)]
    pub mean_radius: f64,
    /// Mean disk count (default: 0.5566 disks per pixel of the frame).
    #[arg(long)]
    pub disks: Option<f64>,
    #[arg(long, default_value_t = 0.6)]
    pub contrast: f64,
    #[arg(long, default_value_t = 8)]
    pub supersampling: usize,
}

impl SpeckleArgs {
    pub fn params(&self, width: usize, height: usize) -> SpeckleParams {
        let nominal = SpeckleParams::star_nominal();
        let per_pixel = nominal.disks_per_pixel();
        SpeckleParams {
            radius_dist: self.radius_dist.into(),
            mean_radius: self.mean_radius,
            disk_count_mean: self.disks.unwrap_or(per_pixel * (width * height) as f64),
            contrast: self.contrast,
            width,
            height,
            supersampling: self.supersampling,
            ..nominal
        }
    }
}

#[derive(Debug, Args, Clone, Copy)]
pub struct NoiseArgs {
    /// Variance slope: variance = a·brightness + b.
    #[arg(long = "noise-a", default_value_t = 0.0342)]
    pub a: f64,
    #[arg(long = "noise-b", default_value_t = 0.2679)]
    pub b: f64,
}

impl NoiseArgs {
    pub fn model(&self) -> NoiseModel {
        NoiseModel { a: self.a, b: self.b }
    }
}

#[derive(Debug, Args)]
pub struct GenStar {
    #[arg(long)]
    pub out_ref: PathBuf,
    #[arg(long)]
    pub out_def: PathBuf,
    /// Also write the ground-truth field.
    #[arg(long)]
    pub out_gt: Option<PathBuf>,
    /// Also write the disk set as JSON.
    #[arg(long)]
    pub out_disks: Option<PathBuf>,
    #[command(flatten)]
    pub star: StarArgs,
    #[command(flatten)]
    pub speckle: SpeckleArgs,
    #[arg(long, value_enum, default_value_t = Depth::Eight)]
    pub depth: Depth,
}

#[derive(Debug, Args)]
pub struct WarpArgs {
    #[arg(long = "ref")]
    pub reference: PathBuf,
    #[arg(long)]
    pub flow: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long, value_enum, default_value_t = Kernel::Bicubic)]
    pub interp: Kernel,
    #[arg(long, value_enum, default_value_t = Depth::Eight)]
    pub depth: Depth,
}

#[derive(Debug, Args)]
pub struct AddNoise {
    #[arg(long)]
    pub input: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
    #[command(flatten)]
    pub noise: NoiseArgs,
    #[arg(long, value_enum, default_value_t = Depth::Eight)]
    pub depth: Depth,
}

#[derive(Debug, Args, Clone, Copy)]
pub struct DicParams {
    /// Subset width 2M+1.
    #[arg(long, default_value_t = 11)]
    pub window: usize,
    #[arg(long, default_value_t = 1, value_parser = clap::value_parser!(u8).range(1..=2))]
    pub order: u8,
    #[arg(long, default_value_t = 1)]
    pub step: usize,
    #[arg(long, default_value_t = 50)]
    pub max_iters: usize,
    #[arg(long, default_value_t = 1e-4)]
    pub conv_tol: f64,
}

#[derive(Debug, Args)]
pub struct DicArgs {
    #[arg(long = "ref")]
    pub reference: PathBuf,
    #[arg(long = "def")]
    pub deformed: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
    #[command(flatten)]
    pub dic: DicParams,
    /// Integer pre-shift on this many horizontal bands before subset DIC.
    #[arg(long)]
    pub preshift_bands: Option<usize>,
    #[arg(long, default_value_t = 8)]
    pub search_range: i32,
}

#[derive(Debug, Args, Clone, Copy)]
pub struct RoiArgs {
    /// Evaluation zone as x0,y0,width,height.
    #[arg(long, value_parser = parse_roi)]
    pub roi: Option<EvaluationROI>,
}

fn parse_roi(s: &str) -> Result<EvaluationROI, String> {
    let v: Vec<usize> = s
        .split(',')
        .map(|t| t.trim().parse::<usize>().map_err(|e| format!("{t}: {e}")))
        .collect::<Result<_, _>>()?;
    match v[..] {
        [x0, y0, width, height] => Ok(EvaluationROI { x0, y0, width, height }),
        _ => Err("expected x0,y0,width,height".into()),
    }
}

#[derive(Debug, Args)]
pub struct Evaluate {
    #[arg(long)]
    pub est: PathBuf,
    #[arg(long)]
    pub gt: PathBuf,
    #[command(flatten)]
    pub roi: RoiArgs,
    /// Time the estimate took, to report throughput.
    #[arg(long)]
    pub elapsed: Option<f64>,
    /// Write the signed v-error map as a PNG heat map.
    #[arg(long)]
    pub heat_map: Option<PathBuf>,
    /// Error magnitude mapped to full colour in the heat map.
    #[arg(long, default_value_t = 0.1)]
    pub heat_scale: f64,
}

#[derive(Debug, Args)]
pub struct Metrology {
    /// Estimate on noiseless Star images.
    #[arg(long)]
    pub est: PathBuf,
    /// Estimate on noisy Star images, for the displacement resolution.
    #[arg(long)]
    pub noisy: Option<PathBuf>,
    #[command(flatten)]
    pub star: StarArgs,
    #[command(flatten)]
    pub roi: RoiArgs,
    #[arg(long, default_value_t = 0.10)]
    pub threshold: f64,
    #[arg(long, default_value_t = 30)]
    pub smooth_width: usize,
    #[arg(long)]
    pub csv: Option<PathBuf>,
    /// Full report as JSON.
    #[arg(long)]
    pub report: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct Pib {
    #[arg(long, value_enum)]
    pub mode: Mode,
    #[arg(long, default_value_t = 50)]
    pub n: usize,
    #[command(flatten)]
    pub star: StarArgs,
    #[command(flatten)]
    pub speckle: SpeckleArgs,
    #[command(flatten)]
    pub noise: NoiseArgs,
    #[command(flatten)]
    pub dic: DicParams,
    /// Moving-average window for the ripple RMS.
    #[arg(long, default_value_t = 30)]
    pub ripple_window: usize,
    /// Profiles as CSV: column, mean, then one column per trial.
    #[arg(long)]
    pub csv: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct Strain {
    #[arg(long)]
    pub flow: PathBuf,
    #[arg(long, default_value_t = 6.0)]
    pub sigma: f64,
    #[arg(long, value_enum, default_value_t = Component::Exx)]
    pub component: Component,
    /// Strain values as CSV (x,y,strain).
    #[arg(long)]
    pub csv: Option<PathBuf>,
    #[arg(long)]
    pub heat_map: Option<PathBuf>,
    #[arg(long, default_value_t = 0.01)]
    pub heat_scale: f64,
}

#[derive(Debug, Args)]
pub struct Throughput {
    #[arg(long)]
    pub est: PathBuf,
    /// Computing time in seconds.
    #[arg(long)]
    pub elapsed: f64,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum Depth {
    #[value(name = "8")]
    Eight,
    #[value(name = "16")]
    Sixteen,
}

impl From<Depth> for BitDepth {
    fn from(d: Depth) -> Self {
        match d {
            Depth::Eight => BitDepth::Eight,
            Depth::Sixteen => BitDepth::Sixteen,
        }
    }
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum Kernel {
    Bilinear,
    Bicubic,
}

impl From<Kernel> for Interp {
    fn from(k: Kernel) -> Self {
        match k {
            Kernel::Bilinear => Interp::Bilinear,
            Kernel::Bicubic => Interp::Bicubic,
        }
    }
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum Radius {
    Uniform,
    Exponential,
    Poisson,
}

impl From<Radius> for RadiusDist {
    fn from(r: Radius) -> Self {
        match r {
            Radius::Uniform => RadiusDist::Uniform,
            Radius::Exponential => RadiusDist::Exponential,
            Radius::Poisson => RadiusDist::Poisson,
        }
    }
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum Mode {
    Fixed,
    Varied,
}

impl From<Mode> for PibMode {
    fn from(m: Mode) -> Self {
        match m {
            Mode::Fixed => PibMode::FixedPattern,
            Mode::Varied => PibMode::VariedPattern,
        }
    }
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum Component {
    Exx,
    Eyy,
    Exy,
}

impl From<Component> for StrainComponent {
    fn from(c: Component) -> Self {
        match c {
            Component::Exx => StrainComponent::Exx,
            Component::Eyy => StrainComponent::Eyy,
            Component::Exy => StrainComponent::Exy,
        }
    }
}

impl DicParams {
    pub fn config(&self) -> speckledic::Result<speckledic::dic::DicConfig> {
        let mut cfg = speckledic::dic::DicConfig::with_window(self.window, ShapeOrder::from_int(self.order)?)?;
        cfg.step = self.step;
        cfg.max_iters = self.max_iters;
        cfg.conv_tol = self.conv_tol;
        cfg.validate()?;
        Ok(cfg)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use clap::CommandFactory;

    #[test]
    fn cli_definition_is_consistent() {
        Cli::command().debug_assert();
    }

    #[test]
    fn roi_parser() {
        assert_eq!(
            parse_roi("1,2,3,4").unwrap(),
            EvaluationROI {
                x0: 1,
                y0: 2,
                width: 3,
                height: 4
            }
        );
        assert!(parse_roi("1,2,3").is_err());
        assert!(parse_roi("a,2,3,4").is_err());
    }

    #[test]
    fn flag_seed_overrides_default() {
        let cli = Cli::try_parse_from(["speckledic", "--seed", "7", "throughput", "--est", "x", "--elapsed", "1"]).unwrap();
        assert_eq!(cli.seed, 7);
    }

    #[test]
    fn default_star_matches_the_reference_frame() {
        let cli = Cli::try_parse_from(["speckledic", "gen-star", "--out-ref", "a", "--out-def", "b"]).unwrap();
        let Command::GenStar(g) = cli.command else { panic!() };
        assert_eq!(g.star.spec(), StarSpec::default());
        let p = g.speckle.params(2000, 501);
        assert_eq!(p.disk_count_mean.round(), 556_667.0);
        assert_eq!(p.contrast, 0.6);
    }
}
