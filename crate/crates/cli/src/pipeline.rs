//! Pipeline stages and the commands that sequence them.
//!
//! Every stage writes plain CSV/JSON files into the output directory and
//! reports a [`StageRecord`]; each command finishes by writing
//! `manifest.json` with those records, the config hash and the seed.

use std::collections::BTreeMap;
use std::fs::{self, File};
use std::io::{BufRead, BufReader, BufWriter};
use std::path::{Path, PathBuf};
use std::time::Duration;

use serde::{Deserialize, Serialize};
use serde_json::{json, Value};
use sha2::{Digest, Sha256};

use healthscope_core::classify::{load_labels, Backend, Label, LabeledReview, RemoteConfig};
use healthscope_core::ingest::{
    assign_period, dedup_reviews, parse_counties, parse_covariates, parse_reviews, parse_survey, CountyParseOptions,
    CountySet, ParseStats, PeriodName, Review,
};
use healthscope_core::ontology::{default_ontology, matches, KeywordOntology};
use healthscope_core::pls::{self, ComponentChoice, ModelConfig, PermutationOptions};
use healthscope_core::score::{self, PerceptionScore};
use healthscope_core::spatial::{self, MoranOptions, SpatialWeights};
use healthscope_core::stats::validate_against_survey;

use crate::config::{hex, BackendKind, Components, RunConfig};
use crate::error::CliError;

pub const FILTERED: &str = "filtered.jsonl";
pub const LABELED: &str = "labeled_reviews.csv";
pub const SCORES: &str = "scores.csv";
pub const MANIFEST: &str = "manifest.json";

/// A review that survived ingestion, with its county, period and the
/// ontology categories it mentions.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FilteredReview {
    #[serde(flatten)]
    pub review: Review,
    pub fips: String,
    pub period: PeriodName,
    pub categories: Vec<String>,
}

#[derive(Debug, Clone, Serialize)]
pub struct IngestSummary {
    pub parse: ParseStats,
    pub duplicates_removed: usize,
    pub ontology_matched: usize,
    pub ontology_dropped: usize,
    pub missing_location: usize,
    pub outside_counties: usize,
    pub outside_periods: usize,
    pub kept: usize,
    pub per_period: BTreeMap<PeriodName, usize>,
    pub per_category: BTreeMap<String, usize>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum StageStatus {
    Ok,
    Failed,
    Skipped,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct StageRecord {
    pub name: String,
    pub status: StageStatus,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub reason: Option<String>,
    /// Output file name → SHA-256 of its contents.
    pub outputs: BTreeMap<String, String>,
    #[serde(skip)]
    pub exit_code: i32,
}

#[derive(Debug, Clone, Serialize)]
pub struct Manifest {
    pub command: String,
    pub config_hash: String,
    pub seed: u64,
    pub config: BTreeMap<&'static str, String>,
    pub stages: Vec<StageRecord>,
}

impl Manifest {
    pub fn stage(&self, name: &str) -> Option<&StageRecord> {
        self.stages.iter().find(|s| s.name == name)
    }
}

/// Files written by one stage.
struct Outputs<'a> {
    dir: &'a Path,
    files: BTreeMap<String, String>,
}

impl<'a> Outputs<'a> {
    fn new(dir: &'a Path) -> Self {
        Self {
            dir,
            files: BTreeMap::new(),
        }
    }

    fn write(&mut self, name: &str, bytes: &[u8]) -> Result<(), CliError> {
        let path = self.dir.join(name);
        fs::write(&path, bytes).map_err(|e| CliError::io(&path, e))?;
        self.files.insert(name.to_string(), hex(&Sha256::digest(bytes)));
        Ok(())
    }

    fn write_json(&mut self, name: &str, value: &impl Serialize) -> Result<(), CliError> {
        let mut text = serde_json::to_string_pretty(value).expect("report values serialize");
        text.push('\n');
        self.write(name, text.as_bytes())
    }
}

enum Outcome {
    Done,
    Skipped(String),
}

fn attempt(name: &str, out: &Path, f: impl FnOnce(&mut Outputs) -> Result<Outcome, CliError>) -> StageRecord {
    let mut outputs = Outputs::new(out);
    let result = f(&mut outputs);
    let (status, reason, exit_code) = match result {
        Ok(Outcome::Done) => (StageStatus::Ok, None, 0),
        Ok(Outcome::Skipped(why)) => {
            log::info!("stage {name} skipped: {why}");
            (StageStatus::Skipped, Some(why), 0)
        }
        Err(e) => {
            log::error!("stage {name} failed: {e}");
            (StageStatus::Failed, Some(e.to_string()), e.exit_code())
        }
    };
    StageRecord {
        name: name.to_string(),
        status,
        reason,
        outputs: outputs.files,
        exit_code,
    }
}

fn skipped(name: &str, why: &str) -> StageRecord {
    StageRecord {
        name: name.to_string(),
        status: StageStatus::Skipped,
        reason: Some(why.to_string()),
        outputs: BTreeMap::new(),
        exit_code: 0,
    }
}

fn open(path: &Path) -> Result<BufReader<File>, CliError> {
    File::open(path).map(BufReader::new).map_err(|e| CliError::io(path, e))
}

fn core<T>(stage: &str, r: healthscope_core::Result<T>) -> Result<T, CliError> {
    r.map_err(|e| CliError::stage(stage, e))
}

fn load_counties(cfg: &RunConfig, stage: &str) -> Result<CountySet, CliError> {
    let path = cfg.require("counties", &cfg.counties)?;
    let opts = CountyParseOptions {
        fips_property: cfg.fips_property.clone(),
        name_property: cfg.name_property.clone(),
        state_property: cfg.state_property.clone(),
    };
    core(stage, parse_counties(open(&path)?, &opts))
}

fn load_ontology(cfg: &RunConfig, stage: &str) -> Result<KeywordOntology, CliError> {
    match &cfg.ontology {
        Some(path) => core(stage, KeywordOntology::from_json(open(path)?)),
        None => Ok(default_ontology()),
    }
}

fn ingest_stage(cfg: &RunConfig, out: &mut Outputs) -> Result<Outcome, CliError> {
    const STAGE: &str = "ingest";
    let reviews_path = cfg.require("reviews", &cfg.reviews)?;
    let counties = load_counties(cfg, STAGE)?;
    let ontology = load_ontology(cfg, STAGE)?;
    let parsed = core(STAGE, parse_reviews(open(&reviews_path)?))?;
    let mut reviews = parsed.reviews;
    let duplicates_removed = dedup_reviews(&mut reviews);

    let mut summary = IngestSummary {
        parse: parsed.stats,
        duplicates_removed,
        ontology_matched: 0,
        ontology_dropped: 0,
        missing_location: 0,
        outside_counties: 0,
        outside_periods: 0,
        kept: 0,
        per_period: PeriodName::ALL.iter().map(|&p| (p, 0)).collect(),
        per_category: ontology.categories().keys().map(|k| (k.clone(), 0)).collect(),
    };
    let mut kept = Vec::new();
    for review in reviews {
        let hits = matches(&review.text, &ontology);
        if hits.is_empty() {
            summary.ontology_dropped += 1;
            continue;
        }
        summary.ontology_matched += 1;
        if !review.has_location() {
            summary.missing_location += 1;
            continue;
        }
        let Some(fips) = counties.locate([review.longitude, review.latitude]) else {
            summary.outside_counties += 1;
            continue;
        };
        let Some(period) = assign_period(&review, &cfg.periods) else {
            summary.outside_periods += 1;
            continue;
        };
        let mut categories: Vec<String> = hits.into_iter().map(|h| h.category).collect();
        categories.sort();
        categories.dedup();
        for c in &categories {
            *summary.per_category.entry(c.clone()).or_default() += 1;
        }
        *summary.per_period.entry(period).or_default() += 1;
        kept.push(FilteredReview {
            fips: fips.to_string(),
            review,
            period,
            categories,
        });
    }
    summary.kept = kept.len();
    if kept.is_empty() {
        log::warn!("no review survived ingestion; check the period bounds and county geometries");
    }
    let mut buf = Vec::new();
    core(STAGE, healthscope_core::ingest::write_jsonl(&mut buf, &kept))?;
    out.write(FILTERED, &buf)?;
    out.write_json("ingest_summary.json", &summary)?;
    Ok(Outcome::Done)
}

pub fn read_filtered(path: &Path) -> Result<Vec<FilteredReview>, CliError> {
    let mut out = Vec::new();
    for (i, line) in open(path)?.lines().enumerate() {
        let line = line.map_err(|e| CliError::io(path, e))?;
        if line.trim().is_empty() {
            continue;
        }
        let rec = serde_json::from_str(&line)
            .map_err(|e| CliError::Config(format!("{}:{}: {e}", path.display(), i + 1)))?;
        out.push(rec);
    }
    Ok(out)
}

fn backend(cfg: &RunConfig, stage: &str) -> Result<Backend, CliError> {
    Ok(match cfg.backend {
        BackendKind::Lexicon => Backend::Lexicon(load_ontology(cfg, stage)?),
        BackendKind::Remote => {
            let mut rc = RemoteConfig::new(cfg.endpoint.clone().unwrap_or_default());
            rc.timeout = Duration::from_secs(cfg.remote_timeout_secs);
            rc.max_batch = cfg.remote_batch;
            Backend::Remote(rc)
        }
        BackendKind::File => {
            let path = cfg.require("labels", &cfg.labels)?;
            Backend::File(core(stage, load_labels(open(&path)?))?)
        }
    })
}

fn scores_csv(scores: &[PerceptionScore], stage: &str) -> Result<Vec<u8>, CliError> {
    let mut buf = Vec::new();
    core(stage, score::write_scores_csv(&mut buf, scores))?;
    Ok(buf)
}

fn csv_bytes<R, I>(header: &[&str], rows: I) -> Vec<u8>
where
    R: IntoIterator<Item = String>,
    I: IntoIterator<Item = R>,
{
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(header).expect("in-memory write");
    for row in rows {
        w.write_record(row).expect("in-memory write");
    }
    w.into_inner().expect("in-memory flush")
}

const DELTAS: [(&str, PeriodName, PeriodName); 2] = [
    ("peak_minus_pre", PeriodName::PrePandemic, PeriodName::PeakPandemic),
    ("post_minus_peak", PeriodName::PeakPandemic, PeriodName::PostPeak),
];

fn score_stage(cfg: &RunConfig, out: &mut Outputs) -> Result<Outcome, CliError> {
    const STAGE: &str = "score";
    let counties = load_counties(cfg, STAGE)?;
    let filtered = read_filtered(&cfg.out.join(FILTERED))?;
    let reviews: Vec<Review> = filtered.iter().map(|f| f.review.clone()).collect();
    let labels = core(STAGE, backend(cfg, STAGE)?.label(&reviews))?;
    let labeled: Vec<LabeledReview> = filtered
        .iter()
        .zip(&labels)
        .map(|(f, &label)| LabeledReview {
            review_id: f.review.review_id.clone(),
            fips: f.fips.clone(),
            period: f.period,
            label,
            timestamp: f.review.timestamp,
        })
        .collect();
    let mut w = csv::Writer::from_writer(Vec::new());
    for l in &labeled {
        w.serialize(l).map_err(|e| CliError::stage(STAGE, e.into()))?;
    }
    if labeled.is_empty() {
        w.write_record(["review_id", "fips", "period", "label", "timestamp"]).expect("in-memory write");
    }
    out.write(LABELED, &w.into_inner().expect("in-memory flush"))?;

    let scores = core(STAGE, score::aggregate_scores(&labeled, cfg.min_support))?;
    if scores.is_empty() {
        return Err(CliError::EmptyResult(format!(
            "no county-period cell reached min_support = {} relevant reviews",
            cfg.min_support
        )));
    }
    out.write(SCORES, &scores_csv(&scores, STAGE)?)?;
    for p in PeriodName::ALL {
        out.write(&format!("scores_{p}.csv"), &scores_csv(&score::scores_for(&scores, p), STAGE)?)?;
    }
    let mut delta_summary = BTreeMap::new();
    for (name, earlier, later) in DELTAS {
        let d = score::score_delta(&score::scores_for(&scores, earlier), &score::scores_for(&scores, later));
        out.write(
            &format!("deltas_{name}.csv"),
            &csv_bytes(&["fips", "delta"], d.deltas.iter().map(|(k, v)| [k.clone(), v.to_string()])),
        )?;
        delta_summary.insert(
            name,
            json!({"n": d.deltas.len(), "only_in_earlier": d.only_in_earlier, "only_in_later": d.only_in_later}),
        );
    }
    let trend = score::national_trend(&labeled);
    out.write(
        "national_trend.csv",
        &csv_bytes(
            &["month", "mean", "n"],
            trend.iter().map(|m| [m.month.to_string(), m.mean.to_string(), m.n.to_string()]),
        ),
    )?;
    out.write_json("scores.geojson", &score::scores_geojson(&scores, &counties))?;
    let mut label_counts: BTreeMap<String, usize> = Label::ALL.iter().map(|l| (l.to_string(), 0)).collect();
    for l in &labels {
        *label_counts.entry(l.to_string()).or_default() += 1;
    }
    out.write_json(
        "score_summary.json",
        &json!({
            "min_support": cfg.min_support,
            "labels": label_counts,
            "support": score::support_summary(&scores),
            "deltas": delta_summary,
        }),
    )?;
    Ok(Outcome::Done)
}

fn read_scores(cfg: &RunConfig, stage: &str) -> Result<Vec<PerceptionScore>, CliError> {
    core(stage, score::read_scores_csv(open(&cfg.out.join(SCORES))?))
}

fn weights_label(cfg: &RunConfig) -> Value {
    json!({"scheme": cfg.weights, "isolate_fallback_k": cfg.isolate_fallback_k})
}

fn moran_stage(
    cfg: &RunConfig,
    period: PeriodName,
    scores: &[PerceptionScore],
    weights: &SpatialWeights,
    out: &mut Outputs,
) -> Result<Outcome, CliError> {
    let stage = format!("moran_{period}");
    let values: BTreeMap<String, f64> = score::scores_for(scores, period)
        .into_iter()
        .map(|s| (s.fips, s.score))
        .collect();
    if values.is_empty() {
        return Ok(Outcome::Skipped(format!("no scores for {period}")));
    }
    let opts = MoranOptions {
        n_perm: cfg.n_perm_moran,
        seed: cfg.seed,
        sidedness: cfg.moran_sidedness,
        analytical: cfg.moran_analytical,
    };
    let result = core(&stage, spatial::morans_i(&values, weights, &opts))?;
    let mut report = serde_json::to_value(&result).expect("moran result serializes");
    report["period"] = json!(period);
    report["weights"] = weights_label(cfg);
    out.write_json(&format!("{stage}.json"), &report)?;
    out.write(
        &format!("{stage}_scatter.csv"),
        &csv_bytes(
            &["fips", "z", "lag"],
            result.points.iter().map(|(f, z, l)| [f.clone(), z.to_string(), l.to_string()]),
        ),
    )?;
    Ok(Outcome::Done)
}

fn model_config(cfg: &RunConfig) -> ModelConfig {
    ModelConfig {
        components: match cfg.n_components {
            Components::Fixed(k) => ComponentChoice::Fixed(k),
            Components::CrossValidated => ComponentChoice::CrossValidated {
                folds: cfg.cv_folds,
                max_components: cfg.max_components,
            },
        },
        permutation: PermutationOptions {
            n_perm: cfg.n_perm,
            seed: cfg.seed,
            corrected: cfg.p_value_correction,
        },
        min_counties: cfg.min_counties,
    }
}

/// The five dependent variables: three period levels and two changes.
fn pls_dependents(scores: &[PerceptionScore]) -> Vec<(String, String, BTreeMap<String, f64>)> {
    let mut out = Vec::new();
    for p in PeriodName::ALL {
        let m = score::scores_for(scores, p).into_iter().map(|s| (s.fips, s.score)).collect();
        out.push((format!("pls_{p}"), format!("score in {p}"), m));
    }
    for (name, earlier, later) in DELTAS {
        let d = score::score_delta(&score::scores_for(scores, earlier), &score::scores_for(scores, later));
        out.push((format!("pls_delta_{name}"), format!("score change {later} minus {earlier}"), d.deltas));
    }
    out
}

fn pls_stage(
    cfg: &RunConfig,
    name: &str,
    dependent_label: &str,
    dependent: &BTreeMap<String, f64>,
    covariates: &healthscope_core::ingest::CovariateTable,
    out: &mut Outputs,
) -> Result<Outcome, CliError> {
    let report = core(name, pls::run_rq2_rq3(dependent, covariates, &model_config(cfg)))?;
    let mut buf = Vec::new();
    core(name, pls::write_table_csv(&mut buf, &report.fit))?;
    out.write(&format!("{name}.csv"), &buf)?;
    let mut sidecar = pls::report_json(&report);
    sidecar["model"] = json!(name);
    sidecar["dependent"] = json!(dependent_label);
    out.write_json(&format!("{name}.json"), &sidecar)?;
    Ok(Outcome::Done)
}

fn read_labeled(path: &Path, stage: &str) -> Result<Vec<LabeledReview>, CliError> {
    let mut rdr = csv::Reader::from_reader(open(path)?);
    rdr.deserialize()
        .map(|r| r.map_err(|e: csv::Error| CliError::stage(stage, e.into())))
        .collect()
}

fn validation_stage(cfg: &RunConfig, out: &mut Outputs) -> Result<Outcome, CliError> {
    const STAGE: &str = "validation";
    let Some(survey_path) = &cfg.survey else {
        return Ok(Outcome::Skipped("no survey configured".into()));
    };
    let survey = core(STAGE, parse_survey(open(survey_path)?))?;
    let counties = load_counties(cfg, STAGE)?;
    let labeled = read_labeled(&cfg.out.join(LABELED), STAGE)?;
    let scores = score::state_month_scores(&labeled, &counties);
    let report = core(STAGE, validate_against_survey(&scores, &survey))?;
    out.write_json("validation.json", &report)?;
    Ok(Outcome::Done)
}

/// Re-raise a shared upstream failure in each dependent stage, keeping its
/// I/O-versus-contract classification.
fn replay(e: &CliError) -> CliError {
    match e {
        CliError::Io { path, source } => CliError::io(path, std::io::Error::new(source.kind(), source.to_string())),
        other if other.exit_code() == 2 => CliError::io(Path::new("-"), std::io::Error::other(other.to_string())),
        other => CliError::Config(other.to_string()),
    }
}

fn analysis_stages(cfg: &RunConfig, with_validation: bool) -> Vec<StageRecord> {
    let dir = cfg.out.as_path();
    let mut records = Vec::new();
    let scores = read_scores(cfg, "analyze");
    let weights = load_counties(cfg, "weights").and_then(|c| {
        let fallback = (cfg.isolate_fallback_k > 0).then_some(cfg.isolate_fallback_k);
        core("weights", spatial::build_weights_with_fallback(&c, cfg.weights, fallback))
    });
    for p in PeriodName::ALL {
        records.push(attempt(&format!("moran_{p}"), dir, |out| {
            let scores = scores.as_ref().map_err(replay)?;
            let w = weights.as_ref().map_err(replay)?;
            moran_stage(cfg, p, scores, w, out)
        }));
    }

    let dependents = match &scores {
        Ok(s) => pls_dependents(s),
        Err(_) => pls_dependents(&[]),
    };
    let covariates = cfg
        .covariates
        .as_ref()
        .map(|path| open(path).and_then(|r| core("covariates", parse_covariates(r))));
    for (name, label, dep) in &dependents {
        let Some(covariates) = &covariates else {
            records.push(skipped(name, "no covariates configured"));
            continue;
        };
        records.push(attempt(name, dir, |out| {
            scores.as_ref().map_err(replay)?;
            let cov = covariates.as_ref().map_err(replay)?;
            pls_stage(cfg, name, label, dep, cov, out)
        }));
    }
    if with_validation {
        records.push(attempt("validation", dir, |out| validation_stage(cfg, out)));
    }
    records
}

fn ensure_out(cfg: &RunConfig) -> Result<(), CliError> {
    fs::create_dir_all(&cfg.out).map_err(|e| CliError::io(&cfg.out, e))
}

fn finish(cfg: &RunConfig, command: &str, stages: Vec<StageRecord>) -> Result<Manifest, CliError> {
    let manifest = Manifest {
        command: command.to_string(),
        config_hash: cfg.hash(),
        seed: cfg.seed,
        config: cfg.canonical(),
        stages,
    };
    let path: PathBuf = cfg.out.join(MANIFEST);
    let file = File::create(&path).map_err(|e| CliError::io(&path, e))?;
    let mut w = BufWriter::new(file);
    serde_json::to_writer_pretty(&mut w, &manifest).map_err(|e| CliError::io(&path, e.into()))?;
    std::io::Write::write_all(&mut w, b"\n").map_err(|e| CliError::io(&path, e))?;

    let failed: Vec<&StageRecord> = manifest.stages.iter().filter(|s| s.status == StageStatus::Failed).collect();
    if let Some(first) = failed.first() {
        return Err(CliError::StagesFailed {
            failed: failed.len(),
            total: manifest.stages.len(),
            io: first.exit_code == 2,
        });
    }
    Ok(manifest)
}

/// Parse, deduplicate, filter, and assign county and period.
pub fn cmd_ingest(cfg: &RunConfig) -> Result<Manifest, CliError> {
    cfg.require("reviews", &cfg.reviews)?;
    cfg.require("counties", &cfg.counties)?;
    ensure_out(cfg)?;
    let record = attempt("ingest", &cfg.out, |out| ingest_stage(cfg, out));
    finish(cfg, "ingest", vec![record])
}

/// Label the filtered reviews and aggregate county-period scores.
pub fn cmd_score(cfg: &RunConfig) -> Result<Manifest, CliError> {
    cfg.require("counties", &cfg.counties)?;
    ensure_out(cfg)?;
    let record = attempt("score", &cfg.out, |out| score_stage(cfg, out));
    finish(cfg, "score", vec![record])
}

/// Moran's I per period, the five PLS models, and survey validation.
pub fn cmd_analyze(cfg: &RunConfig) -> Result<Manifest, CliError> {
    cfg.require("counties", &cfg.counties)?;
    ensure_out(cfg)?;
    let stages = analysis_stages(cfg, true);
    finish(cfg, "analyze", stages)
}

/// Survey validation only.
pub fn cmd_validate(cfg: &RunConfig) -> Result<Manifest, CliError> {
    cfg.require("counties", &cfg.counties)?;
    cfg.require("survey", &cfg.survey)?;
    ensure_out(cfg)?;
    let record = attempt("validation", &cfg.out, |out| validation_stage(cfg, out));
    finish(cfg, "validate", vec![record])
}

/// Every stage in order; later stages are skipped when their inputs failed.
pub fn cmd_run_all(cfg: &RunConfig) -> Result<Manifest, CliError> {
    cfg.require("reviews", &cfg.reviews)?;
    cfg.require("counties", &cfg.counties)?;
    ensure_out(cfg)?;
    let mut stages = vec![attempt("ingest", &cfg.out, |out| ingest_stage(cfg, out))];
    let ingest_ok = stages[0].status == StageStatus::Ok;
    stages.push(if ingest_ok {
        attempt("score", &cfg.out, |out| score_stage(cfg, out))
    } else {
        skipped("score", "ingest failed")
    });
    if stages[1].status == StageStatus::Ok {
        stages.extend(analysis_stages(cfg, true));
    } else {
        stages.push(skipped("analyze", "score failed"));
    }
    finish(cfg, "run-all", stages)
}
