use std::collections::HashMap;
use std::io::Write;
use std::path::{Path, PathBuf};

use kcounter::dataset::{
    augment_dataset, extract_entries, load_dataset, smoothing_rows, write_features_csv, write_predictions_csv,
    write_smoothing_csv, Dataset, Manifest, ManifestEntry, PredictionRow, SavedModel, TuningRecord,
};
use kcounter::design::{monte_carlo_search, select_thresholds, AnnotatedImage, SearchConfig};
use kcounter::imgcore::{load_image, load_label_raster};
use kcounter::kc::{standardize, Standardized};
use kcounter::synth::{
    model_bounds, model_bounds_with_rounding, run_experiment, vi_si, EtaPolicy, ExperimentConfig, ExperimentMode,
};
use kcounter::tune::{log_grid, loo_cv, r_squared, rule_of_thumb_eta, rule_of_thumb_eta_per_datum, CurvePoint, TuneConfig};
use kcounter::{
    Bandwidth, FeatureExtractor, FeatureVector, KernelModel, Label, Prediction, StandardizationPolicy, ThresholdSet,
    ThresholdVector,
};

use crate::cli::*;
use crate::error::{CliError, CliResult};

fn is_stdout(path: &Path) -> bool {
    path.as_os_str() == "-"
}

/// Writes `bytes` to `path`, or to stdout for `-`.
fn emit(path: &Path, bytes: &[u8]) -> CliResult {
    if is_stdout(path) {
        let mut out = std::io::stdout().lock();
        out.write_all(bytes)
            .and_then(|_| out.flush())
            .map_err(|e| io_error("<stdout>", e))
    } else {
        std::fs::write(path, bytes).map_err(|e| io_error(path, e))
    }
}

fn io_error(path: impl Into<PathBuf>, source: std::io::Error) -> CliError {
    CliError::Core(kcounter::Error::Io {
        path: path.into(),
        source,
    })
}

fn exactly_one(a: bool, a_name: &str, b: bool, b_name: &str) -> CliResult {
    match (a, b) {
        (true, false) | (false, true) => Ok(()),
        (true, true) => Err(CliError::Combination(format!("{a_name} and {b_name} are mutually exclusive"))),
        (false, false) => Err(CliError::Combination(format!("give either {a_name} or {b_name}"))),
    }
}

fn read_thresholds_file(path: &Path) -> CliResult<Vec<ThresholdVector>> {
    let text = std::fs::read_to_string(path).map_err(|e| io_error(path, e))?;
    let mut out = Vec::new();
    for (i, line) in text.lines().enumerate() {
        let line = line.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let t = line.parse().map_err(|e: kcounter::Error| {
            CliError::Core(kcounter::Error::Manifest {
                path: path.to_path_buf(),
                line: i + 1,
                message: e.to_string(),
            })
        })?;
        out.push(t);
    }
    Ok(out)
}

/// Manifest from `--manifest`, or an unlabeled one listing the positional
/// images.
fn image_manifest(input: &ImageInput) -> CliResult<Manifest> {
    exactly_one(input.manifest.is_some(), "--manifest", !input.images.is_empty(), "image arguments")?;
    match &input.manifest {
        Some(p) => Ok(Manifest::load(p)?),
        None => Ok(Manifest {
            entries: input
                .images
                .iter()
                .map(|p| ManifestEntry::new(p.to_string_lossy(), None))
                .collect(),
            ..Manifest::default()
        }),
    }
}

/// Command-line thresholds and options override the manifest's.
fn resolve_extractor(args: &ThresholdArgs, manifest: &Manifest) -> CliResult<FeatureExtractor> {
    let mut thresholds = args.thresholds.clone();
    if let Some(p) = &args.thresholds_file {
        thresholds.extend(read_thresholds_file(p)?);
    }
    if thresholds.is_empty() {
        thresholds = manifest.thresholds.clone();
    }
    if thresholds.is_empty() {
        return Err(CliError::Combination(
            "no threshold vectors: use --threshold, --thresholds-file or a manifest that declares them".into(),
        ));
    }
    let connectivity = args.connectivity.or(manifest.connectivity).unwrap_or_default();
    let min_area = args.min_area.map(|m| m as usize).or(manifest.min_area).unwrap_or(1);
    Ok(FeatureExtractor::new(ThresholdSet::new(thresholds)?, connectivity).with_min_area(min_area))
}

pub fn extract(args: ExtractArgs) -> CliResult {
    let manifest = image_manifest(&args.input)?;
    let extractor = resolve_extractor(&args.thresholds, &manifest)?;
    let entries = extract_entries(&manifest, &extractor, args.input.cache.as_deref())?;
    let rows: Vec<(String, FeatureVector)> = entries
        .into_iter()
        .map(|e| (e.entry.display_id().to_string(), e.features))
        .collect();
    let mut buf = Vec::new();
    write_features_csv(&mut buf, &rows)?;
    emit(&args.output, &buf)
}

fn grid_config(grid: &GridArgs, round: bool) -> CliResult<TuneConfig> {
    if grid.grid_min > grid.grid_max {
        return Err(CliError::Combination("--grid-min exceeds --grid-max".into()));
    }
    let etas = log_grid(grid.grid_min, grid.grid_max, grid.grid_points as usize)?;
    Ok(TuneConfig::new(etas, grid.loss.into(), round)?.with_refinement(grid.refine))
}

/// Contiguous run of grid points around the minimizer whose loss is within
/// `tol` (relative) of the minimum.
fn flat_region(curve: &[CurvePoint], best: f64, tol: f64) -> Option<(f64, f64)> {
    let limit = best + tol * best.abs();
    let ok = |c: &CurvePoint| c.loss <= limit;
    let center = curve
        .iter()
        .enumerate()
        .filter(|(_, c)| !c.loss.is_nan())
        .min_by(|a, b| a.1.loss.total_cmp(&b.1.loss))?
        .0;
    let mut lo = center;
    while lo > 0 && ok(&curve[lo - 1]) {
        lo -= 1;
    }
    let mut hi = center;
    while hi + 1 < curve.len() && ok(&curve[hi + 1]) {
        hi += 1;
    }
    let (a, b) = (curve[lo].eta, curve[hi].eta);
    Some((a.min(b), a.max(b)))
}

pub fn train(args: TrainArgs) -> CliResult {
    exactly_one(args.manifest.is_some(), "--manifest", args.dataset.is_some(), "--dataset")?;
    if args.dataset.is_some() && args.cache.is_some() {
        return Err(CliError::Combination("--cache applies to --manifest only".into()));
    }
    if args.eta.is_some() && args.curve.is_some() {
        return Err(CliError::Combination("--curve needs leave-one-out tuning, not --eta".into()));
    }
    let dataset = match (&args.manifest, &args.dataset) {
        (Some(m), _) => load_dataset(m, args.cache.as_deref())?,
        (_, Some(d)) => Dataset::load(d)?,
        _ => unreachable!("checked above"),
    };
    let policy = match args.standardization {
        StandardizationArg::Pooled => StandardizationPolicy::PooledWithTest,
        StandardizationArg::TrainingOnly => StandardizationPolicy::TrainingOnly,
    };

    let (eta, tuning) = match args.eta {
        Some(eta) => (eta, None),
        None => {
            let config = grid_config(&args.grid, args.round)?;
            let result = loo_cv(&dataset.examples, &config)?;
            if let Some(path) = &args.curve {
                let mut csv = String::from("inv_eta,eta,loss\n");
                for c in &result.curve {
                    csv.push_str(&format!("{},{},{}\n", 1.0 / c.eta, c.eta, c.loss));
                }
                emit(path, csv.as_bytes())?;
            }
            println!("eta = {} (1/eta = {}), leave-one-out {} = {}", result.eta, 1.0 / result.eta, config.loss, result.loss);
            if let Some((lo, hi)) = flat_region(&result.curve, result.loss, args.flat_tolerance) {
                println!(
                    "flat region within {}: eta in [{lo}, {hi}], log-midpoint {}",
                    args.flat_tolerance,
                    (lo * hi).sqrt()
                );
            }
            let record = TuningRecord {
                loss: config.loss,
                loss_value: result.loss,
                grid_points: config.grid.len(),
            };
            (result.eta, Some(record))
        }
    };

    let model = KernelModel::with_policy(dataset.examples.clone(), Bandwidth::global(eta), policy)?;
    let saved = SavedModel {
        model,
        thresholds: dataset.thresholds.clone(),
        connectivity: dataset.connectivity,
        min_area: dataset.min_area,
        reference_histogram: dataset.reference_histogram.clone(),
        tuning,
    };
    saved.save(&args.output)?;
    println!(
        "trained on {} examples ({} images, T = {}); model written to {}",
        saved.model.examples().len(),
        saved.model.image_count(),
        saved.thresholds.len(),
        args.output.display()
    );
    Ok(())
}

/// Distinct training feature vectors in model order, and the row of every
/// example.
fn distinct_rows(model: &KernelModel) -> (Vec<FeatureVector>, Vec<usize>) {
    let mut index: HashMap<&str, usize> = HashMap::new();
    let mut rows = Vec::new();
    let mut of_example = Vec::new();
    for ex in model.examples() {
        let i = *index.entry(ex.id.as_str()).or_insert_with(|| {
            rows.push(ex.features.clone());
            rows.len() - 1
        });
        of_example.push(i);
    }
    (rows, of_example)
}

struct Predictor<'a> {
    model: &'a KernelModel,
    rows: Vec<FeatureVector>,
    row_of_example: Vec<usize>,
    rule: Option<EtaRule>,
    fallback: f64,
    confidence_weighted: bool,
}

impl Predictor<'_> {
    fn bandwidth(&self, test: &FeatureVector, rule: EtaRule) -> CliResult<Bandwidth> {
        let Standardized { train, test: t, stats } = match self.model.policy() {
            StandardizationPolicy::PooledWithTest => standardize(&self.rows, Some(test))?,
            StandardizationPolicy::TrainingOnly => standardize(&self.rows, None)?,
        };
        let test_std = t.unwrap_or_else(|| stats.apply(&test.to_f64()));
        Ok(match rule {
            EtaRule::Global => Bandwidth::global(rule_of_thumb_eta(&train, &test_std, self.fallback)),
            EtaRule::PerDatum => {
                let per_row = rule_of_thumb_eta_per_datum(&train, &test_std, self.fallback);
                Bandwidth::PerExample {
                    etas: self.row_of_example.iter().map(|&r| per_row[r]).collect(),
                }
            }
        })
    }

    fn predict(&self, features: &FeatureVector) -> CliResult<Prediction> {
        let rebuilt;
        let model = match self.rule {
            Some(rule) => {
                rebuilt = self.model.rebandwidth(self.bandwidth(features, rule)?)?;
                &rebuilt
            }
            None => self.model,
        };
        Ok(if self.confidence_weighted {
            model.predict_confidence_weighted(features)?
        } else {
            model.predict(features)?
        })
    }
}

pub fn predict(args: PredictArgs) -> CliResult {
    let saved = SavedModel::load(&args.model)?;
    let manifest = image_manifest(&args.input)?;
    let extractor = saved.extractor();

    let featurized: Vec<(String, FeatureVector, Option<Label>)> = if args.adaptive {
        let reference = saved.reference_histogram.as_ref().ok_or_else(|| {
            CliError::Data(format!("{} has no reference histogram; adaptive prediction is unavailable", args.model.display()))
        })?;
        if args.input.cache.is_some() {
            log::info!("feature cache is not used for adapted thresholds");
        }
        manifest
            .entries
            .iter()
            .map(|e| {
                let img = load_image(&manifest.resolve(e))?;
                let f = extractor.extract_adapted(&img, reference)?;
                Ok((e.display_id().to_string(), f, e.label.clone()))
            })
            .collect::<CliResult<_>>()?
    } else {
        extract_entries(&manifest, &extractor, args.input.cache.as_deref())?
            .into_iter()
            .map(|e| (e.entry.display_id().to_string(), e.features, e.entry.label))
            .collect()
    };

    let (rows, row_of_example) = distinct_rows(&saved.model);
    let predictor = Predictor {
        model: &saved.model,
        rows,
        row_of_example,
        rule: args.eta_rule,
        fallback: args.eta_fallback,
        confidence_weighted: args.confidence_weighted,
    };
    let mut out = Vec::with_capacity(featurized.len());
    let mut scored: Vec<(f64, f64)> = Vec::new();
    for (id, features, label) in &featurized {
        let p = predictor.predict(features)?;
        if let Some(l) = label {
            scored.push((p.value, l.value()));
        }
        out.push(PredictionRow {
            image_id: id.clone(),
            prediction: p.value,
            rounded: p.rounded,
            variance: p.variance,
        });
    }
    let mut buf = Vec::new();
    write_predictions_csv(&mut buf, &out)?;
    emit(&args.output, &buf)?;

    if !scored.is_empty() {
        let (pred, truth): (Vec<f64>, Vec<f64>) = scored.into_iter().unzip();
        let mae = pred.iter().zip(&truth).map(|(p, t)| (p - t).abs()).sum::<f64>() / pred.len() as f64;
        eprintln!("labeled images: n = {}, R^2 = {:.4}, MAE = {:.4}", pred.len(), r_squared(&pred, &truth), mae);
    }
    Ok(())
}

pub fn smooth(args: SmoothArgs) -> CliResult {
    let saved = SavedModel::load(&args.model)?;
    let rows = smoothing_rows(&saved.model, args.review_fraction);
    let mut buf = Vec::new();
    write_smoothing_csv(&mut buf, &rows)?;
    emit(&args.output, &buf)
}

pub fn synth(args: SynthArgs) -> CliResult {
    let eta = match args.eta {
        Some(eta) => EtaPolicy::Fixed { eta },
        None => {
            let config = grid_config(&args.grid, false)?;
            EtaPolicy::Loo {
                grid: config.grid,
                loss: config.loss,
                refine: config.refine,
            }
        }
    };
    let config = ExperimentConfig {
        t_values: args.t_values.iter().map(|&t| t as usize).collect(),
        d: args.d as usize,
        runs: args.runs as usize,
        gammas: args.gammas,
        seed: args.seed,
        n_max: args.n_max,
        eta,
        mode: match args.mode {
            ModeArg::Smoothing => ExperimentMode::Smoothing,
            ModeArg::Prediction => ExperimentMode::Prediction,
        },
    };
    let table = run_experiment(&config)?;
    emit(&args.output, table.to_csv().as_bytes())
}

fn load_pair(pair: &str) -> CliResult<AnnotatedImage> {
    let (img, labels) = pair
        .rsplit_once(':')
        .filter(|(a, b)| !a.is_empty() && !b.is_empty())
        .ok_or_else(|| CliError::Combination(format!("--pair `{pair}` is not IMAGE:LABELS")))?;
    let image = load_image(Path::new(img))?;
    let (w, h, raster) = load_label_raster(Path::new(labels))?;
    if (w, h) != (image.width(), image.height()) {
        return Err(CliError::Data(format!(
            "{labels} is {w}x{h} but {img} is {}x{}",
            image.width(),
            image.height()
        )));
    }
    Ok(AnnotatedImage::from_label_raster(image, &raster)?)
}

pub fn design_thresholds(args: DesignArgs) -> CliResult {
    let images = args.pairs.iter().map(|p| load_pair(p)).collect::<CliResult<Vec<_>>>()?;
    let config = SearchConfig {
        connectivity: args.connectivity,
        min_area: args.min_area as usize,
    };
    let table = monte_carlo_search(&images, args.runs, args.seed, config)?;
    emit(&args.output, table.to_csv().as_bytes())?;
    if let Some(t) = args.select {
        let chosen = select_thresholds(&table, t as usize)?;
        let mut text = String::new();
        for v in &chosen {
            let [a, b, c] = v.channels();
            text.push_str(&format!("{a},{b},{c}\n"));
        }
        match &args.thresholds_out {
            Some(p) => emit(p, text.as_bytes())?,
            None => eprint!("{text}"),
        }
    }
    Ok(())
}

pub fn augment(args: AugmentArgs) -> CliResult {
    exactly_one(args.manifest.is_some(), "--manifest", args.dataset.is_some(), "--dataset")?;
    if args.dataset.is_some() && args.cache.is_some() {
        return Err(CliError::Combination("--cache applies to --manifest only".into()));
    }
    let dataset = match (&args.manifest, &args.dataset) {
        (Some(m), _) => load_dataset(m, args.cache.as_deref())?,
        (_, Some(d)) => Dataset::load(d)?,
        _ => unreachable!("checked above"),
    };
    let out = augment_dataset(&dataset, &args.deltas, !args.fixed_thresholds)?;
    out.save(&args.output)?;
    println!("{} examples ({} before augmentation) written to {}", out.len(), dataset.len(), args.output.display());
    Ok(())
}

pub fn bounds(args: BoundsArgs) -> CliResult {
    let (v, s) = match (args.v, args.s) {
        (Some(v), Some(s)) => (v, s),
        (None, None) => vi_si(args.alpha)?,
        _ => return Err(CliError::Combination("give both --v and --s, or neither".into())),
    };
    let mut csv = String::from("r,alpha,v,s,lower,upper\n");
    for &r in &args.observed {
        let (lo, hi) = if args.with_rounding {
            model_bounds_with_rounding(r, args.alpha, v, s)?
        } else {
            model_bounds(r, args.alpha, v, s)?
        };
        csv.push_str(&format!("{r},{},{v},{s},{lo},{hi}\n", args.alpha));
    }
    emit(&args.output, csv.as_bytes())
}
