//! Subcommands: each loads the corpus, runs one study and writes its
//! artifacts into the configured output directory.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use maxrr::audit::{claims_csv, MemberPool};
use maxrr::pipeline::{check_generalized_exact, train_split, train_unlearning_aware, unlearn, Guarantee};
use maxrr::{CoreRanking, SplitModel, UnlearnRequest};
use serde::Serialize;
use serde_json::json;

use crate::config::ExperimentConfig;
use crate::corpus::{self, Corpus};
use crate::experiments::{self, core_size, csv_header, resolve_forget, run_seeds, AuditStudy};
use crate::CliError;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, clap::ValueEnum)]
#[serde(rename_all = "snake_case")]
pub enum Strategy {
    /// Extractor on the core set, SVM on everything.
    Aware,
    /// Both components on everything.
    Full,
}

fn ensure_dir(dir: &Path) -> Result<(), CliError> {
    std::fs::create_dir_all(dir).map_err(|e| CliError::Io(format!("{}: {e}", dir.display())))
}

fn write(dir: &Path, name: &str, contents: &str) -> Result<PathBuf, CliError> {
    ensure_dir(dir)?;
    let path = dir.join(name);
    std::fs::write(&path, contents).map_err(|e| CliError::Io(format!("{}: {e}", path.display())))?;
    log::info!("wrote {}", path.display());
    Ok(path)
}

fn write_csv(cfg: &ExperimentConfig, name: &str, body: &str) -> Result<PathBuf, CliError> {
    write(&cfg.out_dir, name, &format!("{}{body}", csv_header(cfg)))
}

fn write_json(cfg: &ExperimentConfig, name: &str, value: &serde_json::Value) -> Result<PathBuf, CliError> {
    let mut text = serde_json::to_string_pretty(value).expect("json value serialises");
    text.push('\n');
    write(&cfg.out_dir, name, &text)
}

fn load_corpus(cfg: &ExperimentConfig) -> Result<Corpus, CliError> {
    cfg.validate()?;
    let corpus = corpus::load(cfg)?;
    core_size(cfg, corpus.m())?;
    log::info!("corpus: {} train / {} test samples", corpus.train.len(), corpus.test.len());
    Ok(corpus)
}

fn ranking(cfg: &ExperimentConfig, corpus: &Corpus, path: Option<&Path>) -> Result<CoreRanking, CliError> {
    match path {
        Some(p) => experiments::load_ranking(p, corpus),
        None => experiments::rank(cfg, corpus),
    }
}

fn load_model(path: &Path, corpus: &Corpus) -> Result<SplitModel, CliError> {
    let model = SplitModel::load(path)?;
    if model.manifest().corpus_hash != corpus.train.content_hash() {
        return Err(CliError::Config(format!("{} was trained on a different corpus", path.display())));
    }
    Ok(model)
}

/// Writes `ranking.csv` and `sv_histogram.csv`.
pub fn cmd_rank(cfg: &ExperimentConfig) -> Result<CoreRanking, CliError> {
    let corpus = load_corpus(cfg)?;
    let cr = experiments::rank(cfg, &corpus)?;
    write_csv(cfg, "ranking.csv", &cr.to_csv())?;
    write_csv(cfg, "sv_histogram.csv", &cr.histogram_csv())?;
    Ok(cr)
}

/// Trains one model with `base_seed` and writes `model.bin` and `train.json`.
pub fn cmd_train(cfg: &ExperimentConfig, strategy: Strategy, ranking_path: Option<&Path>) -> Result<SplitModel, CliError> {
    let corpus = load_corpus(cfg)?;
    let hyper = cfg.hyper()?;
    let ds = &corpus.train;
    let model = match strategy {
        Strategy::Aware => {
            let cr = ranking(cfg, &corpus, ranking_path)?;
            train_unlearning_aware(ds, &cr, core_size(cfg, corpus.m())?, &hyper, cfg.base_seed)?
        }
        Strategy::Full => train_split(ds, &ds.id_set(), &ds.id_set(), &hyper, cfg.base_seed)?,
    };
    ensure_dir(&cfg.out_dir)?;
    model.save(&cfg.out_dir.join("model.bin"))?;
    write_json(
        cfg,
        "train.json",
        &json!({
            "config": cfg.hash(),
            "strategy": strategy,
            "seed": cfg.base_seed,
            "fe_train": model.fe_train_ids().len(),
            "svm_train": model.svm_train_ids().len(),
            "support": model.support_ids().len(),
            "test_accuracy": model.accuracy(&corpus.test)?,
            "fingerprint": model.fingerprint(),
        }),
    )?;
    Ok(model)
}

/// Serves a forget request against a saved model. Writes `unlearned.bin` and
/// `unlearn.json`; exact outcomes are checked against a rebuilt witness, and
/// a failed check is an error after the artifacts are written.
pub fn cmd_unlearn(
    cfg: &ExperimentConfig,
    model_path: &Path,
    forget: &str,
    ranking_path: Option<&Path>,
    witness: bool,
) -> Result<serde_json::Value, CliError> {
    let corpus = load_corpus(cfg)?;
    let model = load_model(model_path, &corpus)?;
    let cr = if needs_ranking(forget)? { Some(ranking(cfg, &corpus, ranking_path)?) } else { None };
    let forget = resolve_forget(forget, model.corpus_ids(), cr.as_ref())?;
    let outcome = unlearn(&model, &corpus.train, &UnlearnRequest { forget }, cfg.pool)?;
    ensure_dir(&cfg.out_dir)?;
    outcome.model.save(&cfg.out_dir.join("unlearned.bin"))?;
    let mut failure = None;
    let check = if witness && outcome.guarantee == Guarantee::Exact {
        match check_generalized_exact(&model, &outcome, &corpus.train, &corpus.test, model.manifest().seed) {
            Ok(r) => json!({
                "passed": true,
                "deviation": r.deviation,
                "predictions_equal": r.predictions_equal,
                "fe_identical": r.fe_identical,
                "fingerprint_equal": r.fingerprint_equal,
            }),
            Err(e) => {
                let v = json!({ "passed": false, "error": e.to_string() });
                failure = Some(e);
                v
            }
        }
    } else {
        serde_json::Value::Null
    };
    let report = json!({
        "config": cfg.hash(),
        "mode": outcome.mode,
        "guarantee": outcome.guarantee,
        "retrained": outcome.retrained,
        "forgotten": outcome.forget.len(),
        "fingerprint_before": model.fingerprint(),
        "fingerprint_after": outcome.model.fingerprint(),
        "test_accuracy": outcome.model.accuracy(&corpus.test)?,
        "witness": check,
    });
    write_json(cfg, "unlearn.json", &report)?;
    match failure {
        Some(e) => Err(e.into()),
        None => Ok(report),
    }
}

fn needs_ranking(forget: &str) -> Result<bool, CliError> {
    Ok(experiments::parse_forget(forget)?.needs_ranking())
}

/// Runs the membership audit and writes `audit_claims.csv` (histogram of
/// runs in which each sample is claimed unlearned), `audit_agreement.csv`
/// (complementary CDF of per-sample agreement), `audit_verdicts.csv`,
/// `audit_roc.csv` and `audit.json`.
///
/// With two saved models each is audited once. Otherwise, per run seed, an
/// unlearning-aware model serving the forget set (strategy A) is compared with
/// a full retrain without it (strategy B).
pub fn cmd_audit(
    cfg: &ExperimentConfig,
    models: Option<(&Path, &Path)>,
    ranking_path: Option<&Path>,
) -> Result<AuditStudy, CliError> {
    let corpus = load_corpus(cfg)?;
    let k = core_size(cfg, corpus.m())?;
    let directive = cfg.forget.clone().unwrap_or_else(|| format!("top-k:{k}"));
    let non_core = cfg.mia_pool == MemberPool::NonCore;
    let cr = if models.is_none() || non_core || needs_ranking(&directive)? {
        Some(ranking(cfg, &corpus, ranking_path)?)
    } else {
        None
    };
    let forget = resolve_forget(&directive, &corpus.train.id_set(), cr.as_ref())?;
    let core = match (&cr, non_core) {
        (Some(cr), true) => Some(cr.top_k(k)?),
        _ => None,
    };
    let (pairs, seeds) = match models {
        Some((a, b)) => (vec![(load_model(a, &corpus)?, load_model(b, &corpus)?)], vec![cfg.base_seed]),
        None => {
            let cr = cr.as_ref().expect("ranking built");
            (experiments::strategy_models(cfg, &corpus, cr, &forget)?, run_seeds(cfg))
        }
    };
    let study = experiments::audit(&corpus, &pairs, &forget, cfg.mia_pool, core.as_ref(), &seeds)?;
    write_audit(cfg, &study)?;
    Ok(study)
}

pub fn write_audit(cfg: &ExperimentConfig, study: &AuditStudy) -> Result<(), CliError> {
    write_csv(cfg, "audit_claims.csv", &claims_csv(&study.a, &study.b)?)?;
    write_csv(cfg, "audit_agreement.csv", &study.curve.to_csv())?;
    let mut verdicts = String::from("run,strategy,id,confidence,verdict\n");
    let mut roc = String::from("run,strategy,tau,fpr,tpr\n");
    for (strategy, reports) in [("A", &study.a), ("B", &study.b)] {
        for (r, rep) in reports.iter().enumerate() {
            for line in rep.verdicts_csv().lines().skip(1) {
                writeln!(verdicts, "{r},{strategy},{line}").unwrap();
            }
            for line in rep.roc.to_csv().lines().skip(1) {
                writeln!(roc, "{r},{strategy},{line}").unwrap();
            }
        }
    }
    write_csv(cfg, "audit_verdicts.csv", &verdicts)?;
    write_csv(cfg, "audit_roc.csv", &roc)?;
    let summary = |reports: &[maxrr::audit::AuditReport]| {
        reports
            .iter()
            .map(|r| {
                json!({
                    "seed": r.seed,
                    "tau_star": r.tau_star,
                    "youden_j": r.youden_j,
                    "unlearned_fraction": r.unlearned_fraction(),
                })
            })
            .collect::<Vec<_>>()
    };
    write_json(
        cfg,
        "audit.json",
        &json!({
            "config": cfg.hash(),
            "pool": cfg.mia_pool,
            "forgotten": study.curve.ids.len(),
            "runs": study.curve.runs,
            "strategy_a": summary(&study.a),
            "strategy_b": summary(&study.b),
            "share_agreeing_in_80pct_of_runs": study.curve.share_at_least(0.8),
            "share_agreeing_in_all_runs": study.curve.share_at_least(1.0),
        }),
    )?;
    Ok(())
}

/// Writes `table1.csv` (mean and spread per cell) and `table1_runs.csv`.
pub fn cmd_table1(cfg: &ExperimentConfig, ranking_path: Option<&Path>) -> Result<experiments::Table1, CliError> {
    let corpus = load_corpus(cfg)?;
    let cr = ranking(cfg, &corpus, ranking_path)?;
    let table = experiments::table1(cfg, &corpus, &cr)?;
    write_csv(cfg, "table1.csv", &table.summary_csv())?;
    write_csv(cfg, "table1_runs.csv", &table.runs_csv())?;
    Ok(table)
}

/// Writes `sensitivity.csv`.
pub fn cmd_sensitivity(cfg: &ExperimentConfig) -> Result<Vec<experiments::SensitivityRow>, CliError> {
    let corpus = load_corpus(cfg)?;
    let rows = experiments::sensitivity(cfg, &corpus)?;
    write_csv(cfg, "sensitivity.csv", &experiments::sensitivity_csv(&rows))?;
    Ok(rows)
}
