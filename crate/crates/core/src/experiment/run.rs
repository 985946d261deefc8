use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::time::Instant;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use super::{
    load_off, sample_normalized, save_cloud, Dataset, ExperimentConfig, ExperimentError, Result, Sample, Split, SurfaceSource,
};
use crate::attacks::{run_attack, AttackConfig, AttackInput, AttackKind, AttackResult};
use crate::defenses::DefenseConfig;
use crate::geometry::{estimate_surface, PointCloud, SurfaceIndex};
use crate::net::{load_checkpoint, ClassifierParams};

/// Names accepted by [`apply_parameter`] for the defense grid.
pub const DEFENSE_PARAMETERS: [&str; 4] = ["remove", "k", "std_threshold", "seed"];

/// What happened to one attack on one sample.
#[derive(Debug, Clone)]
pub struct AttackOutcome {
    /// `None` when the attack failed; see `error`.
    pub result: Option<AttackResult>,
    pub error: Option<String>,
    pub seconds: f64,
    /// Prediction on the adversarial cloud after each defense, `None` where
    /// the attack or the defense failed.
    pub defended: Vec<Option<usize>>,
}

#[derive(Debug, Clone)]
pub struct SampleOutcome {
    /// Index into the dataset.
    pub index: usize,
    pub label: usize,
    /// Prediction on the benign cloud after each defense.
    pub benign: Vec<Option<usize>>,
    pub attacks: Vec<AttackOutcome>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ResultsRow {
    pub attack: String,
    pub defense: String,
    /// Correctly classified benign samples the cell was evaluated on.
    pub samples: usize,
    pub successes: usize,
    pub success_rate: f64,
    pub mean_chamfer: f64,
    pub mean_hausdorff: f64,
    pub mean_l2: f64,
    /// Fraction of the samples still classified correctly after the defense
    /// is applied to the benign cloud.
    pub benign_accuracy: f64,
    pub attack_errors: usize,
    pub defense_errors: usize,
    pub flagged: usize,
    /// Mean seconds per sample spent generating the adversarial cloud.
    pub wall_seconds: f64,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct ResultsTable {
    /// One row per (attack, defense) cell, attack-major in grid order.
    pub rows: Vec<ResultsRow>,
}

const CSV_HEADER: &str = "attack,defense,samples,successes,success_rate,mean_chamfer,mean_hausdorff,mean_l2,benign_accuracy,attack_errors,defense_errors,flagged";

fn fmt_metric(x: f64) -> String {
    if x.is_finite() {
        format!("{x:.6}")
    } else {
        String::new()
    }
}

impl ResultsTable {
    pub fn row(&self, attack: &str, defense: &str) -> Option<&ResultsRow> {
        self.rows.iter().find(|r| r.attack == attack && r.defense == defense)
    }

    fn csv_fields(r: &ResultsRow) -> String {
        format!(
            "{},{},{},{},{:.4},{},{},{},{:.4},{},{},{}",
            r.attack,
            r.defense,
            r.samples,
            r.successes,
            r.success_rate,
            fmt_metric(r.mean_chamfer),
            fmt_metric(r.mean_hausdorff),
            fmt_metric(r.mean_l2),
            r.benign_accuracy,
            r.attack_errors,
            r.defense_errors,
            r.flagged
        )
    }

    /// Deterministic table; wall time lives in [`ResultsTable::timings_csv`].
    pub fn to_csv(&self) -> String {
        let mut s = format!("{CSV_HEADER}\n");
        for r in &self.rows {
            s.push_str(&Self::csv_fields(r));
            s.push('\n');
        }
        s
    }

    pub fn timings_csv(&self) -> String {
        let mut s = String::from("attack,defense,seconds_per_sample\n");
        for r in &self.rows {
            let _ = writeln!(s, "{},{},{:.6}", r.attack, r.defense, r.wall_seconds);
        }
        s
    }
}

#[derive(Debug, Clone)]
pub struct ExperimentOutput {
    pub table: ResultsTable,
    pub samples: Vec<SampleOutcome>,
    /// Undefended accuracy of the model on the whole dataset.
    pub model_accuracy: f64,
    pub dataset_size: usize,
}

/// Everything in an [`ExperimentConfig`] except where the model and data
/// come from.
#[derive(Debug, Clone, PartialEq)]
pub struct Grid {
    pub attacks: Vec<AttackConfig>,
    pub defenses: Vec<DefenseConfig>,
    pub sample_limit: usize,
    pub seed: u64,
    pub surface: SurfaceSource,
}

impl ExperimentConfig {
    pub fn grid(&self) -> Grid {
        Grid {
            attacks: self.attacks.clone(),
            defenses: self.defenses.clone(),
            sample_limit: self.sample_limit,
            seed: self.seed,
            surface: self.surface,
        }
    }
}

/// Row labels: the kind name, with the grid position appended when a kind
/// occurs more than once.
fn labels<T>(items: &[T], name: impl Fn(&T) -> &'static str) -> Vec<String> {
    items
        .iter()
        .enumerate()
        .map(|(i, it)| {
            let n = name(it);
            if items.iter().filter(|o| name(o) == n).count() > 1 {
                format!("{n}[{i}]")
            } else {
                n.to_string()
            }
        })
        .collect()
}

fn benign_surface(sample: &Sample, source: SurfaceSource) -> std::result::Result<SurfaceIndex, String> {
    let mesh = match (&sample.mesh, source) {
        (Some(m), SurfaceSource::Generating) => m.clone(),
        _ => estimate_surface(&sample.cloud).map_err(|e| e.to_string())?.mesh,
    };
    SurfaceIndex::new(mesh).map_err(|e| e.to_string())
}

fn defend(model: &ClassifierParams, cloud: &PointCloud, defense: &DefenseConfig, index: usize) -> Option<usize> {
    let mut rng = ChaCha8Rng::seed_from_u64(defense.seed.wrapping_add(index as u64));
    let d = defense.apply(model, cloud, &mut rng).ok()?;
    model.predict(&d).ok()
}

fn evaluate_sample(model: &ClassifierParams, sample: &Sample, index: usize, grid: &Grid, dump: Option<&Path>, attack_labels: &[String]) -> SampleOutcome {
    let benign = grid.defenses.iter().map(|d| defend(model, &sample.cloud, d, index)).collect();
    let needs_surface = grid.attacks.iter().any(|a| a.kind != AttackKind::None);
    let surface = if needs_surface { Some(benign_surface(sample, grid.surface)) } else { None };
    if let Some(dir) = dump {
        let _ = save_cloud(&sample.cloud, dir.join(format!("s{index:05}_benign.xyz")));
    }
    let attacks = grid
        .attacks
        .iter()
        .enumerate()
        .map(|(a, cfg)| {
            let mut rng = ChaCha8Rng::seed_from_u64(grid.seed.wrapping_add(index as u64));
            rng.set_stream(1 + a as u64);
            let start = Instant::now();
            let outcome = match &surface {
                Some(Err(e)) if cfg.kind.needs_surface() => Err(format!("benign surface: {e}")),
                _ => {
                    let input = AttackInput {
                        cloud: &sample.cloud,
                        label: sample.label,
                        surface: surface.as_ref().and_then(|s| s.as_ref().ok()),
                    };
                    run_attack(model, &input, cfg, &mut rng).map_err(|e| e.to_string())
                }
            };
            let seconds = start.elapsed().as_secs_f64();
            match outcome {
                Ok(result) => {
                    if let Some(dir) = dump {
                        let _ = save_cloud(&result.cloud, dir.join(format!("s{index:05}_{}.xyz", attack_labels[a])));
                    }
                    let defended = grid.defenses.iter().map(|d| defend(model, &result.cloud, d, index)).collect();
                    AttackOutcome {
                        result: Some(result),
                        error: None,
                        seconds,
                        defended,
                    }
                }
                Err(e) => AttackOutcome {
                    result: None,
                    error: Some(e),
                    seconds,
                    defended: vec![None; grid.defenses.len()],
                },
            }
        })
        .collect();
    SampleOutcome {
        index,
        label: sample.label,
        benign,
        attacks,
    }
}

fn mean(v: impl Iterator<Item = f64>) -> f64 {
    let (s, n) = v.fold((0.0, 0usize), |(s, n), x| (s + x, n + 1));
    if n == 0 {
        f64::NAN
    } else {
        s / n as f64
    }
}

fn aggregate(grid: &Grid, samples: &[SampleOutcome]) -> ResultsTable {
    let attack_labels = labels(&grid.attacks, |a| a.kind.name());
    let defense_labels = labels(&grid.defenses, |d| d.kind.name());
    let n = samples.len();
    let rate = |k: usize| if n == 0 { 0.0 } else { k as f64 / n as f64 };
    let mut rows = Vec::with_capacity(grid.attacks.len() * grid.defenses.len());
    for (a, alabel) in attack_labels.iter().enumerate() {
        let outcomes: Vec<&AttackOutcome> = samples.iter().map(|s| &s.attacks[a]).collect();
        let results: Vec<&AttackResult> = outcomes.iter().filter_map(|o| o.result.as_ref()).collect();
        let mean_chamfer = mean(results.iter().map(|r| r.chamfer));
        let mean_hausdorff = mean(results.iter().filter_map(|r| r.hausdorff));
        let mean_l2 = mean(results.iter().map(|r| r.l2).filter(|x| x.is_finite()));
        let attack_errors = outcomes.iter().filter(|o| o.result.is_none()).count();
        let flagged = results.iter().filter(|r| r.flagged).count();
        let wall_seconds = mean(outcomes.iter().map(|o| o.seconds));
        for (d, dlabel) in defense_labels.iter().enumerate() {
            let successes = samples.iter().filter(|s| matches!(s.attacks[a].defended[d], Some(p) if p != s.label)).count();
            let defense_errors = outcomes.iter().filter(|o| o.result.is_some() && o.defended[d].is_none()).count();
            let benign_correct = samples.iter().filter(|s| s.benign[d] == Some(s.label)).count();
            rows.push(ResultsRow {
                attack: alabel.clone(),
                defense: dlabel.clone(),
                samples: n,
                successes,
                success_rate: rate(successes),
                mean_chamfer,
                mean_hausdorff,
                mean_l2,
                benign_accuracy: rate(benign_correct),
                attack_errors,
                defense_errors,
                flagged,
                wall_seconds: if n == 0 { 0.0 } else { wall_seconds },
            });
        }
    }
    ResultsTable { rows }
}

/// Up to `limit` of `indices`, taken round-robin over the classes so a cap
/// does not exhaust the first classes. Returned in dataset order.
fn interleave_classes(dataset: &Dataset, indices: &[usize], limit: usize) -> Vec<usize> {
    let mut seen = vec![0usize; dataset.class_names.len()];
    let mut keyed: Vec<(usize, usize, usize)> = indices
        .iter()
        .map(|&i| {
            let y = dataset.samples[i].label;
            seen[y] += 1;
            (seen[y], y, i)
        })
        .collect();
    keyed.sort_unstable();
    let mut chosen: Vec<usize> = keyed.into_iter().take(limit).map(|k| k.2).collect();
    chosen.sort_unstable();
    chosen
}

/// Runs every (attack, defense) cell on up to `sample_limit` samples the
/// undefended model classifies correctly, balanced across classes. Each
/// adversarial cloud is generated once and every defense is applied to it.
pub fn evaluate(model: &ClassifierParams, dataset: &Dataset, grid: &Grid, dump_dir: Option<&Path>) -> Result<ExperimentOutput> {
    if grid.attacks.is_empty() || grid.defenses.is_empty() {
        return Err(ExperimentError::Config("attack and defense grids must be non-empty".into()));
    }
    if dataset.class_names.len() != model.num_classes() {
        return Err(ExperimentError::Config(format!(
            "model has {} classes, dataset has {}",
            model.num_classes(),
            dataset.class_names.len()
        )));
    }
    let predictions: Vec<usize> = dataset
        .samples
        .par_iter()
        .map(|s| model.predict(&s.cloud))
        .collect::<std::result::Result<_, _>>()?;
    let correct: Vec<usize> = (0..dataset.len()).filter(|&i| predictions[i] == dataset.samples[i].label).collect();
    let model_accuracy = if dataset.is_empty() { 0.0 } else { correct.len() as f64 / dataset.len() as f64 };
    let chosen = interleave_classes(dataset, &correct, grid.sample_limit);
    let dump = match dump_dir {
        Some(d) => {
            let d = d.join("clouds");
            std::fs::create_dir_all(&d).map_err(|source| ExperimentError::Io { path: d.clone(), source })?;
            Some(d)
        }
        None => None,
    };
    let attack_labels = labels(&grid.attacks, |a| a.kind.name());
    let samples: Vec<SampleOutcome> = chosen
        .par_iter()
        .map(|&i| evaluate_sample(model, &dataset.samples[i], i, grid, dump.as_deref(), &attack_labels))
        .collect();
    Ok(ExperimentOutput {
        table: aggregate(grid, &samples),
        samples,
        model_accuracy,
        dataset_size: dataset.len(),
    })
}

fn write_file(path: PathBuf, text: &str) -> Result<()> {
    std::fs::write(&path, text).map_err(|source| ExperimentError::Io { path, source })
}

/// Loads the model and the test split, evaluates the grid, and writes
/// `results.csv` and `timings.csv` to the output directory if one is set.
pub fn run_experiment(config: &ExperimentConfig) -> Result<ExperimentOutput> {
    config.validate()?;
    let model = load_checkpoint(&config.model)?;
    let dataset = config.dataset.load(Split::Test)?;
    if let Some(dir) = &config.output_dir {
        std::fs::create_dir_all(dir).map_err(|source| ExperimentError::Io { path: dir.clone(), source })?;
    }
    let dump = config.output_dir.as_deref().filter(|_| config.dump_clouds);
    let out = evaluate(&model, &dataset, &config.grid(), dump)?;
    if let Some(dir) = &config.output_dir {
        write_file(dir.join("results.csv"), &out.table.to_csv())?;
        write_file(dir.join("timings.csv"), &out.table.timings_csv())?;
    }
    Ok(out)
}

/// Sets `name` to `value` on every attack (for attack parameters) or every
/// defense (for defense parameters).
pub fn apply_parameter(grid: &Grid, name: &str, value: f64) -> Result<Grid> {
    let mut g = grid.clone();
    if AttackConfig::PARAMETERS.contains(&name) {
        for a in &mut g.attacks {
            a.set(name, value);
        }
        return Ok(g);
    }
    let count = value.max(0.0).round() as usize;
    for d in &mut g.defenses {
        match name {
            "remove" => d.remove = count,
            "k" => d.k = count,
            "std_threshold" => d.std_threshold = value,
            "seed" => d.seed = count as u64,
            _ => {
                let valid: Vec<&str> = AttackConfig::PARAMETERS.iter().chain(DEFENSE_PARAMETERS.iter()).copied().collect();
                return Err(ExperimentError::UnknownParameter {
                    name: name.to_string(),
                    valid: valid.join(", "),
                });
            }
        }
    }
    Ok(g)
}

/// Evaluates the grid once per value of `parameter`.
pub fn run_sweep(model: &ClassifierParams, dataset: &Dataset, grid: &Grid, parameter: &str, values: &[f64]) -> Result<Vec<(f64, ExperimentOutput)>> {
    // reject unknown names even when there is nothing to run
    apply_parameter(grid, parameter, 0.0)?;
    values
        .iter()
        .map(|&v| Ok((v, evaluate(model, dataset, &apply_parameter(grid, parameter, v)?, None)?)))
        .collect()
}

/// Long-format CSV of a sweep: the table columns prefixed by parameter and
/// value. An empty sweep gives an empty string.
pub fn sweep_csv(parameter: &str, runs: &[(f64, ExperimentOutput)]) -> String {
    if runs.is_empty() {
        return String::new();
    }
    let mut s = format!("parameter,value,{CSV_HEADER}\n");
    for (v, out) in runs {
        for r in &out.table.rows {
            let _ = writeln!(s, "{parameter},{v},{}", ResultsTable::csv_fields(r));
        }
    }
    s
}

/// Reads `<root>/<class>/<split>/*.off`. Classes are the sorted
/// subdirectory names; each mesh is sampled with its own seed.
pub fn load_off_dataset(root: &Path, split: Split, points: usize, seed: u64) -> Result<Dataset> {
    let io_err = |path: &Path| {
        let path = path.to_path_buf();
        move |source| ExperimentError::Io { path, source }
    };
    let mut classes: Vec<String> = std::fs::read_dir(root)
        .map_err(io_err(root))?
        .filter_map(|e| e.ok())
        .filter(|e| e.path().join(split.name()).is_dir())
        .filter_map(|e| e.file_name().into_string().ok())
        .collect();
    classes.sort();
    if classes.is_empty() {
        return Err(ExperimentError::Config(format!("no class directories with a {} split under {}", split.name(), root.display())));
    }
    let mut files = Vec::new();
    for (label, class) in classes.iter().enumerate() {
        let dir = root.join(class).join(split.name());
        let mut paths: Vec<PathBuf> = std::fs::read_dir(&dir)
            .map_err(io_err(&dir))?
            .filter_map(|e| e.ok().map(|e| e.path()))
            .filter(|p| p.extension().and_then(|e| e.to_str()).is_some_and(|e| e.eq_ignore_ascii_case("off")))
            .collect();
        paths.sort();
        files.extend(paths.into_iter().map(|p| (label, p)));
    }
    let samples = files
        .par_iter()
        .enumerate()
        .map(|(i, (label, path))| {
            let mesh = load_off(path).map_err(|source| ExperimentError::Off { path: path.clone(), source })?;
            let mut rng = ChaCha8Rng::seed_from_u64(seed.wrapping_add(i as u64));
            let (cloud, mesh) = sample_normalized(&mesh, points, false, &mut rng)?;
            Ok(Sample {
                cloud,
                label: *label,
                mesh: Some(mesh),
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(Dataset {
        samples,
        class_names: classes,
        split: split.name().to_string(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn cap_is_taken_round_robin_over_classes() {
        let labels = [0, 0, 0, 0, 1, 1, 2, 2, 2];
        let dataset = Dataset {
            samples: labels
                .iter()
                .map(|&label| Sample {
                    cloud: PointCloud::new(vec![]),
                    label,
                    mesh: None,
                })
                .collect(),
            class_names: vec!["a".into(), "b".into(), "c".into()],
            split: "test".into(),
        };
        let all: Vec<usize> = (0..labels.len()).collect();
        assert_eq!(interleave_classes(&dataset, &all, 3), vec![0, 4, 6]);
        assert_eq!(interleave_classes(&dataset, &all, 7), vec![0, 1, 2, 4, 5, 6, 7]);
        assert_eq!(interleave_classes(&dataset, &[1, 2, 3, 8], 2), vec![1, 8]);
        assert_eq!(interleave_classes(&dataset, &all, 100), all);
    }
}
