use std::path::PathBuf;
use std::time::Instant;

use anyhow::{anyhow, bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use pcshape::attacks::{run_attack, AttackConfig, AttackInput, AttackKind};
use pcshape::defenses::{DefenseConfig, DefenseKind};
use pcshape::experiment::{
    load_off, load_xyz, run_experiment, run_sweep, sample_normalized, save_cloud, sweep_csv, DatasetSource, ExperimentConfig, ShapeClass,
    Split, SyntheticSpec,
};
use pcshape::geometry::{estimate_surface, SurfaceIndex};
use pcshape::net::{accuracy, load_checkpoint, save_checkpoint, train, Architecture, ClassifierParams, TrainConfig};

#[derive(Parser)]
#[command(name = "pcshape", version, about = "Adversarial attacks and defenses for point cloud classifiers")]
struct Cli {
    /// Seed for every random choice; overrides the seed in a config file.
    #[arg(long, global = true)]
    seed: Option<u64>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Train a classifier and write a checkpoint.
    Train(TrainArgs),
    /// Attack a single point cloud.
    Attack(AttackArgs),
    /// Apply a defense to a single point cloud and classify the result.
    Defend(DefendArgs),
    /// Evaluate an attack x defense grid from a JSON config.
    Eval(EvalArgs),
    /// Evaluate a grid once per value of one parameter.
    Sweep(SweepArgs),
    /// Sample a point cloud from a synthetic shape or an OFF mesh.
    Export(ExportArgs),
}

#[derive(Args)]
struct DataArgs {
    /// Comma separated synthetic classes.
    #[arg(long, value_delimiter = ',', default_values_t = ShapeClass::ALL.map(|c| c.name().to_string()))]
    classes: Vec<String>,
    #[arg(long, default_value_t = 120)]
    train_per_class: usize,
    #[arg(long, default_value_t = 30)]
    test_per_class: usize,
    #[arg(long, default_value_t = 1024)]
    points: usize,
    /// Use `<dir>/<class>/{train,test}/*.off` instead of synthetic shapes.
    #[arg(long)]
    off_dir: Option<PathBuf>,
}

impl DataArgs {
    fn source(&self, seed: u64) -> Result<DatasetSource> {
        if let Some(path) = &self.off_dir {
            return Ok(DatasetSource::OffDirectory {
                path: path.clone(),
                points: self.points,
                seed,
            });
        }
        let classes = self.classes.iter().map(|c| c.parse::<ShapeClass>().map_err(|e| anyhow!(e))).collect::<Result<_>>()?;
        Ok(DatasetSource::Synthetic(SyntheticSpec {
            classes,
            train_per_class: self.train_per_class,
            test_per_class: self.test_per_class,
            points: self.points,
            seed,
        }))
    }
}

#[derive(Args)]
struct TrainArgs {
    #[command(flatten)]
    data: DataArgs,
    #[arg(long, default_value_t = TrainConfig::default().epochs)]
    epochs: usize,
    #[arg(long, default_value_t = TrainConfig::default().batch_size)]
    batch_size: usize,
    #[arg(long, default_value_t = TrainConfig::default().learning_rate)]
    learning_rate: f64,
    /// Gaussian jitter added to every coordinate during training.
    #[arg(long, default_value_t = TrainConfig::default().jitter)]
    jitter: f64,
    /// Disable random rotation augmentation.
    #[arg(long)]
    no_rotate: bool,
    #[arg(long, short)]
    out: PathBuf,
}

#[derive(Args)]
struct AttackArgs {
    #[arg(long)]
    model: PathBuf,
    /// Input cloud (.xyz).
    #[arg(long, short)]
    input: PathBuf,
    /// True class of the input.
    #[arg(long)]
    label: usize,
    #[arg(long, default_value = "iter_grad_l2")]
    attack: String,
    /// Override an attack parameter, e.g. `--set epsilon=3`.
    #[arg(long = "set", value_name = "NAME=VALUE")]
    set: Vec<String>,
    /// Benign surface mesh (.off); an alpha shape of the input otherwise.
    #[arg(long)]
    surface: Option<PathBuf>,
    /// Adversarial cloud output (.xyz or .ply).
    #[arg(long, short)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct DefendArgs {
    #[arg(long)]
    model: PathBuf,
    #[arg(long, short)]
    input: PathBuf,
    #[arg(long, default_value = "outlier_removal")]
    defense: String,
    #[arg(long, default_value_t = 200)]
    remove: usize,
    #[arg(long, default_value_t = 10)]
    k: usize,
    #[arg(long, default_value_t = 1.0)]
    std_threshold: f64,
    #[arg(long, short)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct GridOverrides {
    #[arg(long)]
    config: PathBuf,
    #[arg(long)]
    model: Option<PathBuf>,
    #[arg(long)]
    sample_limit: Option<usize>,
    #[arg(long)]
    output_dir: Option<PathBuf>,
    #[arg(long)]
    dump_clouds: bool,
}

impl GridOverrides {
    fn load(&self, seed: Option<u64>) -> Result<ExperimentConfig> {
        let mut c = ExperimentConfig::load(&self.config)?;
        if let Some(m) = &self.model {
            c.model = m.clone();
        }
        if let Some(n) = self.sample_limit {
            c.sample_limit = n;
        }
        if let Some(d) = &self.output_dir {
            c.output_dir = Some(d.clone());
        }
        c.dump_clouds |= self.dump_clouds;
        if let Some(s) = seed {
            c.seed = s;
        }
        Ok(c)
    }
}

#[derive(Args)]
struct EvalArgs {
    #[command(flatten)]
    grid: GridOverrides,
}

#[derive(Args)]
struct SweepArgs {
    #[command(flatten)]
    grid: GridOverrides,
    #[arg(long)]
    parameter: String,
    /// Comma separated values; may be empty.
    #[arg(long, value_delimiter = ',', num_args = 0..)]
    values: Vec<f64>,
    /// Long-format CSV output; stdout otherwise.
    #[arg(long, short)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct ExportArgs {
    /// Synthetic shape to sample.
    #[arg(long, conflicts_with = "off")]
    shape: Option<String>,
    /// OFF mesh to sample.
    #[arg(long)]
    off: Option<PathBuf>,
    #[arg(long, default_value_t = 1024)]
    points: usize,
    /// Output file; the extension picks xyz or ply.
    #[arg(long, short)]
    out: PathBuf,
    /// Also write the normalized generating mesh as OFF.
    #[arg(long)]
    mesh_out: Option<PathBuf>,
}

fn parse_assignment(s: &str) -> Result<(&str, f64)> {
    let (k, v) = s.split_once('=').ok_or_else(|| anyhow!("expected NAME=VALUE, got {s:?}"))?;
    Ok((k.trim(), v.trim().parse().with_context(|| format!("bad value in {s:?}"))?))
}

fn cmd_train(a: TrainArgs, seed: u64) -> Result<()> {
    let source = a.data.source(seed)?;
    let train_set = source.load(Split::Train)?;
    let test_set = source.load(Split::Test)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut model = ClassifierParams::init(&Architecture::standard(train_set.class_names.len()), &mut rng)?;
    let cfg = TrainConfig {
        epochs: a.epochs,
        batch_size: a.batch_size,
        learning_rate: a.learning_rate,
        rotate: !a.no_rotate,
        jitter: a.jitter,
    };
    let start = Instant::now();
    train(&mut model, &train_set.labeled(), &cfg, &mut rng, |s| {
        eprintln!("epoch {:>3}  loss {:.4}  train acc {:.4}", s.epoch, s.mean_loss, s.accuracy);
    })?;
    let acc = accuracy(&model, &test_set.labeled())?;
    save_checkpoint(&model, &a.out)?;
    println!(
        "classes {}  test accuracy {:.4}  ({} samples, {:.1}s)  -> {}",
        train_set.class_names.join(","),
        acc,
        test_set.len(),
        start.elapsed().as_secs_f64(),
        a.out.display()
    );
    Ok(())
}

fn cmd_attack(a: AttackArgs, seed: u64) -> Result<()> {
    let model = load_checkpoint(&a.model)?;
    let cloud = load_xyz(&a.input).with_context(|| a.input.display().to_string())?;
    let kind: AttackKind = a.attack.parse().map_err(|e: String| anyhow!(e))?;
    let mut cfg = AttackConfig::defaults(kind);
    for s in &a.set {
        let (name, value) = parse_assignment(s)?;
        cfg.set(name, value)
            .ok_or_else(|| anyhow!("unknown attack parameter {name:?}; valid names: {}", AttackConfig::PARAMETERS.join(", ")))?;
    }
    let mesh = match &a.surface {
        Some(p) => load_off(p).with_context(|| p.display().to_string())?,
        None => estimate_surface(&cloud)?.mesh,
    };
    let surface = SurfaceIndex::new(mesh)?;
    let input = AttackInput {
        cloud: &cloud,
        label: a.label,
        surface: Some(&surface),
    };
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let r = run_attack(&model, &input, &cfg, &mut rng)?;
    if let Some(out) = &a.out {
        save_cloud(&r.cloud, out)?;
    }
    let summary = serde_json::json!({
        "attack": kind.name(),
        "success": r.success,
        "predicted": r.predicted,
        "chamfer": r.chamfer,
        "hausdorff": r.hausdorff,
        "l2": r.l2,
        "lambda": r.lambda,
        "flagged": r.flagged,
        "note": r.note,
    });
    println!("{}", serde_json::to_string_pretty(&summary)?);
    Ok(())
}

fn cmd_defend(a: DefendArgs, seed: u64) -> Result<()> {
    let model = load_checkpoint(&a.model)?;
    let cloud = load_xyz(&a.input).with_context(|| a.input.display().to_string())?;
    let kind: DefenseKind = a.defense.parse().map_err(|e: String| anyhow!(e))?;
    let cfg = DefenseConfig {
        kind,
        remove: a.remove,
        k: a.k,
        std_threshold: a.std_threshold,
        seed,
    };
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let defended = cfg.apply(&model, &cloud, &mut rng)?;
    if let Some(out) = &a.out {
        save_cloud(&defended, out)?;
    }
    println!(
        "defense {}  kept {} of {}  predicted before {}  after {}",
        kind.name(),
        defended.len(),
        cloud.len(),
        model.predict(&cloud)?,
        model.predict(&defended)?
    );
    Ok(())
}

fn cmd_eval(a: EvalArgs, seed: Option<u64>) -> Result<()> {
    let config = a.grid.load(seed)?;
    let out = run_experiment(&config)?;
    eprintln!(
        "model accuracy {:.4} on {} samples; {} evaluated",
        out.model_accuracy,
        out.dataset_size,
        out.samples.len()
    );
    print!("{}", out.table.to_csv());
    Ok(())
}

fn cmd_sweep(a: SweepArgs, seed: Option<u64>) -> Result<()> {
    let config = a.grid.load(seed)?;
    let model = load_checkpoint(&config.model)?;
    let dataset = config.dataset.load(Split::Test)?;
    let runs = run_sweep(&model, &dataset, &config.grid(), &a.parameter, &a.values)?;
    let csv = sweep_csv(&a.parameter, &runs);
    match &a.out {
        Some(p) => std::fs::write(p, csv).with_context(|| p.display().to_string())?,
        None => print!("{csv}"),
    }
    Ok(())
}

fn write_off(mesh: &pcshape::geometry::TriangleMesh, path: &PathBuf) -> Result<()> {
    use std::fmt::Write as _;
    let mut s = format!("OFF\n{} {} 0\n", 3 * mesh.len(), mesh.len());
    for t in &mesh.triangles {
        for v in t.vertices {
            writeln!(s, "{} {} {}", v.x, v.y, v.z)?;
        }
    }
    for i in 0..mesh.len() {
        writeln!(s, "3 {} {} {}", 3 * i, 3 * i + 1, 3 * i + 2)?;
    }
    std::fs::write(path, s).with_context(|| path.display().to_string())
}

fn cmd_export(a: ExportArgs, seed: u64) -> Result<()> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (cloud, mesh) = match (&a.shape, &a.off) {
        (Some(s), None) => {
            let class: ShapeClass = s.parse().map_err(|e: String| anyhow!(e))?;
            sample_normalized(&class.random_mesh(&mut rng), a.points, true, &mut rng)?
        }
        (None, Some(p)) => sample_normalized(&load_off(p).with_context(|| p.display().to_string())?, a.points, false, &mut rng)?,
        _ => bail!("pass exactly one of --shape or --off"),
    };
    save_cloud(&cloud, &a.out).with_context(|| a.out.display().to_string())?;
    if let Some(m) = &a.mesh_out {
        write_off(&mesh, m)?;
    }
    println!("wrote {} points to {}", cloud.len(), a.out.display());
    Ok(())
}

fn main() {
    let cli = Cli::parse();
    let seed = cli.seed.unwrap_or(0);
    let result = match cli.command {
        Command::Train(a) => cmd_train(a, seed),
        Command::Attack(a) => cmd_attack(a, seed),
        Command::Defend(a) => cmd_defend(a, seed),
        Command::Eval(a) => cmd_eval(a, cli.seed),
        Command::Sweep(a) => cmd_sweep(a, cli.seed),
        Command::Export(a) => cmd_export(a, seed),
    };
    if let Err(e) = result {
        eprintln!("error: {e:#}");
        std::process::exit(1);
    }
}
