use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use breakthrough_core::harness::{
    default_paper_grid, run_grid_with, ExperimentConfig, GridVariant, MetricsTable, METRICS_HEADER,
};
use breakthrough_core::pipeline::{
    build_analysis_dataset, dual_model_comparison, export_dated_cohort, km_by_offset_bins,
    load_cohort_from_reader, parse_date, AnalysisConfig, AnalysisData, DualModelTable, MechanismOptions,
    MechanismReport, TimeZero, DEFAULT_SENSITIVITY_CAP_DAYS,
};
use breakthrough_core::{generate_cohort, CohortConfig};
use serde::Serialize;

use crate::error::CliError;
use crate::manifest::RunManifest;
use crate::{AnalyzeArgs, CohortInput, ExperimentArgs, KmArgs, PaperGrid, SimulateArgs, TimeZeroArg};

fn read(path: &Path) -> Result<Vec<u8>, CliError> {
    fs::read(path).map_err(|e| CliError::io(path, e))
}

fn read_json<T: serde::de::DeserializeOwned>(path: &Path) -> Result<T, CliError> {
    serde_json::from_slice(&read(path)?)
        .map_err(|e| CliError::Config(format!("{}: {e}", path.display())))
}

fn write(path: &Path, bytes: impl AsRef<[u8]>) -> Result<(), CliError> {
    fs::write(path, bytes).map_err(|e| CliError::io(path, e))
}

fn create_dir(dir: &Path) -> Result<(), CliError> {
    fs::create_dir_all(dir).map_err(|e| CliError::io(dir, e))
}

fn file_name(path: &Path) -> String {
    path.file_name()
        .map_or_else(|| path.display().to_string(), |n| n.to_string_lossy().into())
}

/// Writes `name` under `dir` and records it in the manifest.
fn emit(dir: &Path, name: &str, bytes: impl AsRef<[u8]>, manifest: &mut RunManifest) -> Result<(), CliError> {
    write(&dir.join(name), bytes)?;
    manifest.outputs.push(name.into());
    Ok(())
}

fn manifest_path_for(out: &Path) -> PathBuf {
    let mut name = out.as_os_str().to_owned();
    name.push(".manifest.json");
    PathBuf::from(name)
}

pub fn simulate(args: &SimulateArgs) -> Result<(), CliError> {
    let config: CohortConfig = read_json(&args.config)?;
    config.validate()?;
    let origin = parse_date(&args.origin).map_err(CliError::Config)?;
    let cohort = generate_cohort(&config)?;

    let mut manifest = RunManifest::start("simulate", &config, Some(config.seed));
    let mut buf = Vec::new();
    cohort.write_csv(&mut buf)?;
    write(&args.out, &buf)?;
    manifest.outputs.push(file_name(&args.out));

    if let Some(dated) = &args.dated_out {
        let mut buf = Vec::new();
        let analysis = export_dated_cohort(&cohort, origin, &mut buf)?;
        write(dated, &buf)?;
        let config_path = dated.with_extension("config.json");
        write(&config_path, analysis.to_json() + "\n")?;
        manifest.outputs.push(file_name(dated));
        manifest.outputs.push(file_name(&config_path));
    }
    manifest.notes.push(format!(
        "{} rows, {} events, {} candidates left-truncated",
        cohort.rows.len(),
        cohort.n_events(),
        cohort.truncated_count
    ));
    manifest.finish(&manifest_path_for(&args.out))
}

/// Resolves the experiment config from the arguments; worker count is kept out of the hashed config.
pub fn resolve_experiment(args: &ExperimentArgs) -> Result<ExperimentConfig, CliError> {
    let mut config = match (&args.config, args.paper_grid) {
        (Some(path), _) => {
            let c: ExperimentConfig = read_json(path)?;
            if args.desk_scale {
                c.desk_scale()
            } else {
                c
            }
        }
        (None, Some(grid)) => {
            let c = default_paper_grid(match grid {
                PaperGrid::NoSubgroup => GridVariant::NoSubgroup,
                PaperGrid::WithSubgroup => GridVariant::WithSubgroup,
            });
            if args.full_scale {
                c
            } else {
                c.desk_scale()
            }
        }
        (None, None) => return Err(CliError::Config("either --config or --paper-grid is required".into())),
    };
    if let Some(b) = args.replications {
        config.replications = b;
    }
    if let Some(seed) = args.seed {
        config.base_seed = seed;
    }
    config.workers = None;
    config.validate()?;
    Ok(config)
}

pub fn experiment(args: &ExperimentArgs) -> Result<(), CliError> {
    let config = resolve_experiment(args)?;
    let mut manifest = RunManifest::start("experiment", &config, Some(config.base_seed));
    create_dir(&args.out)?;
    write(&args.out.join("experiment_config.json"), canonical_pretty(&config))?;
    manifest.outputs.push("experiment_config.json".into());

    // Rows are appended and flushed per completed cell so an interrupted run keeps its results.
    let metrics_path = args.out.join("metrics.csv");
    let file = fs::File::create(&metrics_path).map_err(|e| CliError::io(&metrics_path, e))?;
    let mut writer = csv::WriterBuilder::new().has_headers(false).from_writer(file);
    writer.write_record(METRICS_HEADER)?;
    writer.flush().map_err(|e| CliError::io(&metrics_path, e))?;

    let run_config = ExperimentConfig {
        workers: args.workers,
        ..config.clone()
    };
    let n_cells = config.grid.len();
    let mut flush_error = None;
    let table = run_grid_with(&run_config, |index, rows| {
        if flush_error.is_some() {
            return;
        }
        let result = rows
            .iter()
            .try_for_each(|r| writer.serialize(r))
            .map_err(CliError::from)
            .and_then(|_| writer.flush().map_err(|e| CliError::io(&metrics_path, e)));
        if let Err(e) = result {
            flush_error = Some(e);
        }
        eprintln!("cell {}/{} done", index + 1, n_cells);
    })?;
    if let Some(e) = flush_error {
        return Err(e);
    }
    drop(writer);
    manifest.outputs.push("metrics.csv".into());
    write_figures(&args.out, &table, &mut manifest)?;
    manifest.finish(&args.out.join("manifest.json"))
}

fn canonical_pretty<T: Serialize>(value: &T) -> String {
    let v: serde_json::Value = serde_json::to_value(value).expect("serializes");
    serde_json::to_string_pretty(&v).expect("serializes") + "\n"
}

fn write_figures(dir: &Path, table: &MetricsTable, manifest: &mut RunManifest) -> Result<(), CliError> {
    let json = table.to_json().map_err(|e| CliError::Io(e.to_string()))? + "\n";
    emit(dir, "metrics.json", json, manifest)?;
    emit(dir, "fig4_power.csv", table.fig4_power_csv()?, manifest)?;
    emit(dir, "figS2_power.csv", table.fig_s2_power_csv()?, manifest)?;
    emit(dir, "fig5_bias_coverage.csv", table.fig5_bias_coverage_csv()?, manifest)?;
    emit(dir, "figS3_bias.csv", table.fig_s3_bias_csv()?, manifest)?;
    emit(dir, "tableS1_type1.csv", table.table_s1_type1_csv()?, manifest)?;
    Ok(())
}

struct LoadedCohort {
    data: AnalysisData,
    manifest: RunManifest,
}

fn load_input<T: Serialize>(
    command: &str,
    input: &CohortInput,
    settings: &T,
) -> Result<LoadedCohort, CliError> {
    let config_bytes = read(&input.config)?;
    let config = AnalysisConfig::from_json(&String::from_utf8_lossy(&config_bytes))?;
    let cohort_bytes = read(&input.cohort)?;
    let raw = load_cohort_from_reader(cohort_bytes.as_slice(), &config.schema)?;
    let data = build_analysis_dataset(&raw, &config.window)?;
    if data.dataset.n_events() == 0 {
        return Err(CliError::Degenerate("no events after landmark".into()));
    }
    let mut manifest = RunManifest::start(command, &(&config, settings), None);
    manifest.record_input(&input.cohort, &cohort_bytes);
    Ok(LoadedCohort { data, manifest })
}

fn row_errors_csv(data: &AnalysisData) -> Result<String, CliError> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(["line", "id", "message"])?;
    for e in &data.errors {
        w.write_record([e.line.to_string(), e.id.clone(), e.message.clone()])?;
    }
    let bytes = w.into_inner().map_err(|e| CliError::Io(e.to_string()))?;
    Ok(String::from_utf8(bytes).expect("utf-8"))
}

#[derive(Debug, Clone, Serialize)]
struct AnalyzeSettings {
    sensitivity_cap: Option<f64>,
    alpha: f64,
}

/// Everything `analyze` computed; also written to the output directory.
#[derive(Debug, Clone, Serialize)]
pub struct AnalyzeOutcome {
    pub exclusions: breakthrough_core::pipeline::ExclusionReport,
    pub rejected_rows: usize,
    pub mechanism: MechanismReport,
    pub dual_model: DualModelTable,
}

pub fn analyze(args: &AnalyzeArgs) -> Result<AnalyzeOutcome, CliError> {
    if !(args.alpha > 0.0 && args.alpha < 1.0) {
        return Err(CliError::Config(format!("alpha must lie in (0,1), got {}", args.alpha)));
    }
    // Validate the input paths' config before anything is computed or written.
    let peek: AnalysisConfig = AnalysisConfig::from_json(&String::from_utf8_lossy(&read(&args.input.config)?))?;
    let cap = if args.no_sensitivity {
        None
    } else {
        Some(
            args.sensitivity_cap
                .or(peek.window.sensitivity_cap_days.map(f64::from))
                .unwrap_or(f64::from(DEFAULT_SENSITIVITY_CAP_DAYS)),
        )
    };
    let settings = AnalyzeSettings {
        sensitivity_cap: cap,
        alpha: args.alpha,
    };
    let LoadedCohort { data, mut manifest } = load_input("analyze", &args.input, &settings)?;

    let options = MechanismOptions {
        sensitivity_cap: cap,
        alpha: args.alpha,
        ..MechanismOptions::default()
    };
    let mechanism = breakthrough_core::pipeline::mechanism_test(&data.dataset, &options)?;
    let dual_model = dual_model_comparison(&data.dataset, None, &options.fit)?;
    let outcome = AnalyzeOutcome {
        exclusions: data.exclusions,
        rejected_rows: data.errors.len(),
        mechanism,
        dual_model,
    };

    let text = format!(
        "{}\n{}\nIncluded {} of {} rows ({} outside the vaccination window, {} with an event on or before the landmark, {} rejected).\n",
        outcome.mechanism.to_text(),
        outcome.dual_model.to_text(),
        data.exclusions.included,
        data.exclusions.input_rows,
        data.exclusions.excluded_by_window,
        data.exclusions.excluded_pre_landmark_event,
        data.exclusions.rejected,
    );
    let dual_csv = outcome.dual_model.to_csv()?;
    let errors_csv = row_errors_csv(&data)?;

    create_dir(&args.out)?;
    let json = serde_json::to_string_pretty(&outcome).expect("report serializes") + "\n";
    emit(&args.out, "mechanism_report.json", json, &mut manifest)?;
    emit(&args.out, "mechanism_report.txt", &text, &mut manifest)?;
    emit(&args.out, "dual_model.csv", dual_csv, &mut manifest)?;
    emit(&args.out, "row_errors.csv", errors_csv, &mut manifest)?;
    manifest.finish(&args.out.join("manifest.json"))?;

    let mut stdout = std::io::stdout().lock();
    stdout
        .write_all(text.as_bytes())
        .map_err(|e| CliError::Io(e.to_string()))?;
    Ok(outcome)
}

#[derive(Debug, Clone, Serialize)]
struct KmSettings {
    bin_width: f64,
    time_zero: TimeZero,
}

pub fn km(args: &KmArgs) -> Result<(), CliError> {
    let time_zero = match args.time_zero {
        TimeZeroArg::Landmark => TimeZero::Landmark,
        TimeZeroArg::Vaccination => TimeZero::Vaccination,
    };
    let settings = KmSettings {
        bin_width: args.bin_width,
        time_zero,
    };
    let LoadedCohort { data, mut manifest } = load_input("km", &args.input, &settings)?;
    let strata = km_by_offset_bins(&data.dataset, args.bin_width, time_zero)?;
    let csv = strata.to_csv()?;
    create_dir(&args.out)?;
    emit(&args.out, "km_curves.csv", csv, &mut manifest)?;
    for s in &strata.empty_strata {
        manifest.notes.push(format!("empty stratum omitted: {s}"));
    }
    manifest.finish(&args.out.join("manifest.json"))
}
