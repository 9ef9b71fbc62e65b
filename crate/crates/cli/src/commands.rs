use ppgmm::data::{self, Dataset, Preprocessor, CLASS_COLUMN};
use ppgmm::ga::{run_ppgmmga_from, PpResult};
use ppgmm::gmm::{select_model, GaussianMixture, ModelDocument};
use ppgmm::metrics::{compare_estimators, CompareConfig, ComparisonDocument};
use ppgmm::negentropy::EstimatorSpec;
use ppgmm::projection::{encode, pca_basis, project_data, AngleGenome, Basis};
use serde::Serialize;
use std::io::{BufRead, BufReader, Write};
use std::path::{Path, PathBuf};

use crate::config::RunConfig;
use crate::svg;
use crate::CliError;

pub const REPORT_SCHEMA_VERSION: u32 = 1;

/// Prefix of the basis CSV comment line that lists the feature names.
const FEATURES_COMMENT: &str = "# features: ";

fn write_file(path: &Path, contents: &str) -> Result<(), CliError> {
    if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        std::fs::create_dir_all(parent).map_err(ppgmm::Error::from)?;
    }
    std::fs::write(path, contents).map_err(ppgmm::Error::from)?;
    Ok(())
}

fn to_json<S: Serialize>(value: &S) -> Result<String, CliError> {
    let mut text = serde_json::to_string_pretty(value).map_err(ppgmm::Error::from)?;
    text.push('\n');
    Ok(text)
}

fn first_line(path: &Path) -> Result<String, CliError> {
    let file = std::fs::File::open(path).map_err(ppgmm::Error::from)?;
    let mut line = String::new();
    BufReader::new(file).read_line(&mut line).map_err(ppgmm::Error::from)?;
    Ok(line)
}

/// Loads the input CSV. Without an explicit label column, a `class` column
/// is used when the header has one.
pub fn load_input(cfg: &RunConfig, path: &Path, min_columns: usize) -> Result<Dataset<f64>, CliError> {
    let label = match (&cfg.label_column, cfg.has_header) {
        (Some(name), _) => Some(name.clone()),
        (None, true) => first_line(path)?
            .trim_end()
            .split(',')
            .any(|c| c.trim() == CLASS_COLUMN)
            .then(|| CLASS_COLUMN.to_string()),
        (None, false) => None,
    };
    let file = std::fs::File::open(path).map_err(ppgmm::Error::from)?;
    Ok(data::read_csv_min_columns(
        BufReader::new(file),
        cfg.has_header,
        label.as_deref(),
        min_columns,
    )?)
}

fn to_csv(data: &Dataset<f64>) -> Result<String, CliError> {
    let mut buf = Vec::new();
    data.write_csv(&mut buf)?;
    Ok(String::from_utf8(buf).expect("CSV output is UTF-8"))
}

pub enum SimulateKind {
    Triangle { n: usize, p: usize },
    Waveform { n: usize },
}

pub fn simulate(kind: SimulateKind, seed: u64, out: &Path) -> Result<String, CliError> {
    let data: Dataset<f64> = match kind {
        SimulateKind::Triangle { n, p } => data::simulate_triangle(n, p, seed)?,
        SimulateKind::Waveform { n } => data::simulate_waveform(n, seed)?,
    };
    write_file(out, &to_csv(&data)?)?;
    Ok(format!(
        "wrote {} rows with {} features to {}",
        data.n(),
        data.p(),
        out.display()
    ))
}

#[derive(Serialize)]
struct FitRow {
    g: usize,
    model: String,
    loglik: Option<f64>,
    n_params: Option<usize>,
    bic: Option<f64>,
    iterations: Option<usize>,
    converged: Option<bool>,
    error: Option<String>,
}

#[derive(Serialize)]
struct FitReportDocument {
    schema_version: u32,
    seed: u64,
    config_hash: String,
    n: usize,
    p: usize,
    best: FitRow,
    table: Vec<FitRow>,
}

fn fitted_model_document(model: &GaussianMixture<f64>, pre: &Preprocessor<f64>, names: &[String]) -> ModelDocument {
    let mut doc = ModelDocument::from_model(model, Some(pre));
    doc.feature_names = Some(names.to_vec());
    doc
}

pub fn fit(cfg: &RunConfig, out_dir: &Path) -> Result<String, CliError> {
    let seed = cfg.seed()?;
    let raw = load_input(cfg, cfg.input()?, 2)?;
    if cfg.gmm.g_min == 0 || cfg.gmm.g_min > cfg.gmm.g_max {
        return Err(CliError::Usage(format!(
            "invalid G range {}..{}",
            cfg.gmm.g_min, cfg.gmm.g_max
        )));
    }
    let pre = Preprocessor::fit(&raw, cfg.preprocess)?;
    let x = pre.apply(&raw)?;
    let selection = select_model(
        &x,
        cfg.gmm.g_min..=cfg.gmm.g_max,
        &cfg.gmm.models,
        seed,
        &cfg.gmm.em_options(),
    )?;
    let best = &selection.best;
    let row = |g: usize, model: String, outcome: &Result<ppgmm::gmm::FitReport<f64>, String>| match outcome {
        Ok(f) => FitRow {
            g,
            model,
            loglik: Some(f.loglik),
            n_params: Some(f.n_params),
            bic: Some(f.bic),
            iterations: Some(f.iterations),
            converged: Some(f.converged),
            error: None,
        },
        Err(e) => FitRow {
            g,
            model,
            loglik: None,
            n_params: None,
            bic: None,
            iterations: None,
            converged: None,
            error: Some(e.clone()),
        },
    };
    let report = FitReportDocument {
        schema_version: REPORT_SCHEMA_VERSION,
        seed,
        config_hash: cfg.hash("fit"),
        n: x.n(),
        p: x.p(),
        best: row(
            best.n_components(),
            best.covariance_model().to_string(),
            &Ok(best.clone()),
        ),
        table: selection
            .table
            .iter()
            .map(|e| row(e.g, e.model.to_string(), &e.outcome))
            .collect(),
    };
    let doc = fitted_model_document(&best.model, &pre, x.feature_names());
    write_file(&out_dir.join("model.json"), &(doc.to_json()? + "\n"))?;
    write_file(&out_dir.join("fit_report.json"), &to_json(&report)?)?;
    Ok(format!(
        "best model {} with G={} (BIC {:.3}, loglik {:.3}, {} parameters)",
        best.covariance_model(),
        best.n_components(),
        best.bic,
        best.loglik,
        best.n_params
    ))
}

/// Input data and the fitted model, with the data preprocessed as recorded
/// in the model document.
struct Fitted {
    data: Dataset<f64>,
    model: GaussianMixture<f64>,
    feature_names: Vec<String>,
}

fn load_fitted(cfg: &RunConfig, model_path: &Path) -> Result<Fitted, CliError> {
    let text = std::fs::read_to_string(model_path).map_err(ppgmm::Error::from)?;
    let doc = ModelDocument::from_json(&text)?;
    let model: GaussianMixture<f64> = doc.to_model()?;
    let raw = load_input(cfg, cfg.input()?, 2)?;
    if raw.p() != model.dim() {
        return Err(
            ppgmm::Error::Dimension(format!("input has {} features, model has {}", raw.p(), model.dim())).into(),
        );
    }
    let data = match doc.preprocessor::<f64>()? {
        Some(pre) => pre.apply(&raw)?,
        None => raw,
    };
    let feature_names = doc
        .feature_names
        .clone()
        .unwrap_or_else(|| data.feature_names().to_vec());
    Ok(Fitted {
        data,
        model,
        feature_names,
    })
}

fn check_d(cfg: &RunConfig, p: usize) -> Result<(), CliError> {
    if cfg.d == 0 || cfg.d >= p {
        return Err(CliError::Usage(format!(
            "d must satisfy 1 <= d < p = {p}, got {}",
            cfg.d
        )));
    }
    Ok(())
}

fn basis_csv(basis: &Basis<f64>, names: &[String]) -> Result<String, CliError> {
    let mut buf = Vec::new();
    writeln!(buf, "{FEATURES_COMMENT}{}", names.join(",")).map_err(ppgmm::Error::from)?;
    basis.write_csv(&mut buf)?;
    Ok(String::from_utf8(buf).expect("CSV output is UTF-8"))
}

#[derive(Serialize)]
struct PursuitDocument {
    schema_version: u32,
    seed: u64,
    config_hash: String,
    d: usize,
    estimator: EstimatorSpec,
    best_fitness: f64,
    best_genome: Vec<f64>,
    /// Row-major `p x d`.
    basis: Vec<Vec<f64>>,
    generations_run: usize,
    fitness_trace: Vec<f64>,
    mean_trace: Vec<f64>,
    warnings: Vec<String>,
}

pub fn pursue(cfg: &RunConfig, model_path: &Path, out_dir: &Path) -> Result<String, CliError> {
    let seed = cfg.seed()?;
    let fitted = load_fitted(cfg, model_path)?;
    check_d(cfg, fitted.model.dim())?;
    let spec = cfg.estimator_spec()?;
    let initial: Vec<AngleGenome<f64>> = if cfg.pca_init {
        vec![encode(pca_basis(&fitted.data, cfg.d)?.basis.matrix())?]
    } else {
        Vec::new()
    };
    let result: PpResult<f64> = run_ppgmmga_from(&fitted.model, cfg.d, &spec, &cfg.ga_config()?, &initial)?;
    let mut warnings = result.warnings.clone();
    if fitted.model.n_components() == 1 {
        warnings.push("the fitted model has a single component: no non-Gaussian structure was found".into());
    }
    let projected = project_data(&fitted.data, &result.best_basis)?;
    let b = result.best_basis.matrix();
    let doc = PursuitDocument {
        schema_version: REPORT_SCHEMA_VERSION,
        seed,
        config_hash: cfg.hash("pursue"),
        d: cfg.d,
        estimator: spec,
        best_fitness: result.best_fitness,
        best_genome: result.best_genome.angles().to_vec(),
        basis: b.row_iter().map(|r| r.iter().copied().collect()).collect(),
        generations_run: result.generations_run,
        fitness_trace: result.fitness_trace.clone(),
        mean_trace: result.mean_trace.clone(),
        warnings: warnings.clone(),
    };
    write_file(
        &out_dir.join("basis.csv"),
        &basis_csv(&result.best_basis, &fitted.feature_names)?,
    )?;
    write_file(&out_dir.join("projected.csv"), &to_csv(&projected)?)?;
    write_file(&out_dir.join("trace.csv"), &result.trace_csv())?;
    write_file(&out_dir.join("result.json"), &to_json(&doc)?)?;
    let mut msg = format!(
        "{} negentropy {:.6} after {} generations",
        spec.kind, result.best_fitness, result.generations_run
    );
    for w in warnings {
        msg.push_str("\nwarning: ");
        msg.push_str(&w);
    }
    Ok(msg)
}

pub fn compare(cfg: &RunConfig, model_path: &Path, out_dir: &Path) -> Result<String, CliError> {
    let seed = cfg.seed()?;
    let fitted = load_fitted(cfg, model_path)?;
    check_d(cfg, fitted.model.dim())?;
    let config = CompareConfig {
        ga: cfg.ga_config()?,
        mc_samples: cfg.mc_samples,
        ..CompareConfig::default()
    };
    let report = compare_estimators(&fitted.model, Some(&fitted.data), cfg.d, &config, seed)?;
    let doc = ComparisonDocument::from_report(&report, seed, Some(cfg.hash("compare")));
    doc.validate()?;
    write_file(&out_dir.join("comparison.json"), &(doc.to_json()? + "\n"))?;
    Ok(render_table(&doc))
}

fn cell(v: Option<f64>, prec: usize) -> String {
    v.map_or_else(|| "---".to_string(), |x| format!("{x:.prec$}"))
}

fn render_table(doc: &ComparisonDocument) -> String {
    fn row(out: &mut String, name: &str, vals: &[Option<f64>], prec: usize) {
        out.push_str(&format!("{name:<18}"));
        for v in vals {
            out.push_str(&format!("{:>10}", cell(*v, prec)));
        }
        out.push('\n');
    }
    let mut out = format!("{:<18}", "");
    for l in &doc.labels {
        out.push_str(&format!("{l:>10}"));
    }
    out.push('\n');
    row(&mut out, "Negentropy", &doc.rows.negentropy, 4);
    row(&mut out, "MC negentropy", &doc.rows.mc_negentropy, 4);
    row(&mut out, "Relative accuracy", &doc.rows.relative_accuracy, 4);
    out.push_str("Angles (degrees)\n");
    for (label, angles) in doc.labels.iter().zip(&doc.angles) {
        row(&mut out, label, angles, 2);
    }
    for (label, note) in doc.labels.iter().zip(&doc.notes) {
        if let Some(n) = note {
            out.push_str(&format!("note [{label}]: {n}\n"));
        }
    }
    out.trim_end().to_string()
}

fn read_basis(path: &Path) -> Result<(Basis<f64>, Option<Vec<String>>), CliError> {
    let text = std::fs::read_to_string(path).map_err(ppgmm::Error::from)?;
    let names = text
        .lines()
        .find_map(|l| l.strip_prefix(FEATURES_COMMENT))
        .map(|l| l.split(',').map(|s| s.trim().to_string()).collect());
    Ok((Basis::read_csv(text.as_bytes())?, names))
}

pub fn project(cfg: &RunConfig, model_path: &Path, basis_path: &Path, out: &Path) -> Result<String, CliError> {
    let fitted = load_fitted(cfg, model_path)?;
    let (basis, _) = read_basis(basis_path)?;
    let projected = project_data(&fitted.data, &basis)?;
    write_file(out, &to_csv(&projected)?)?;
    Ok(format!(
        "wrote {} x {} to {}",
        projected.n(),
        projected.p(),
        out.display()
    ))
}

pub struct PlotOptions {
    pub basis: Option<PathBuf>,
    pub bins: Option<usize>,
    pub title: String,
}

pub fn plot(cfg: &RunConfig, input: &Path, out: &Path, opts: &PlotOptions) -> Result<String, CliError> {
    let data = load_input(cfg, input, 1)?;
    let groups = svg::Groups::from_labels(data.labels(), data.n());
    let names = data.feature_names();
    let col = |j: usize| -> Vec<f64> { data.values().column(j).iter().copied().collect() };
    let svg = match data.p() {
        1 => {
            let bins = opts
                .bins
                .unwrap_or_else(|| ((data.n() as f64).log2().ceil() as usize + 1).max(5));
            svg::histogram(&col(0), &groups, bins, &names[0], &opts.title)
        }
        2 => {
            let arrows = match &opts.basis {
                None => Vec::new(),
                Some(path) => {
                    let (basis, basis_names) = read_basis(path)?;
                    if basis.d() != 2 {
                        return Err(CliError::Usage(format!(
                            "biplot basis has {} columns, expected 2",
                            basis.d()
                        )));
                    }
                    let b = basis.matrix();
                    let labels = basis_names
                        .filter(|n| n.len() == basis.p())
                        .unwrap_or_else(|| (1..=basis.p()).map(|j| format!("x{j}")).collect());
                    labels
                        .into_iter()
                        .enumerate()
                        .map(|(i, label)| svg::Arrow {
                            label,
                            dx: b[(i, 0)],
                            dy: b[(i, 1)],
                        })
                        .collect()
                }
            };
            svg::scatter(&col(0), &col(1), &groups, &arrows, (&names[0], &names[1]), &opts.title)
        }
        d => {
            return Err(CliError::Usage(format!(
                "cannot plot a {d}-dimensional projection; select two columns and plot the pairs separately"
            )))
        }
    };
    write_file(out, &svg)?;
    Ok(format!("wrote {}", out.display()))
}
