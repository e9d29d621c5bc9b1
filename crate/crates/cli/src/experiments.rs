//! The studies behind the subcommands. Each returns plain data; writing
//! artifacts is left to the commands.

use std::fmt::Write as _;
use std::path::Path;
use std::time::Instant;

use maxrr::audit::{agreement_curve, verify_unlearning, AgreementCurve, AuditReport, MemberPool};
use maxrr::data::{ForgetSpec, IdSet};
use maxrr::pipeline::{fe_only_unlearn, full_retrain, train_split, train_unlearning_aware, unlearn, Hyper, PoolPolicy, UnlearnMode};
use maxrr::ranking::build_ranking;
use maxrr::{CoreRanking, SplitModel, UnlearnRequest};
use rayon::prelude::*;

use crate::config::ExperimentConfig;
use crate::corpus::Corpus;
use crate::CliError;

/// Experiment runs are seeded apart from the ranking runs.
const RUN_SEED_OFFSET: u64 = 1_000_000;

pub fn run_seeds(cfg: &ExperimentConfig) -> Vec<u64> {
    (0..cfg.runs as u64).map(|r| cfg.base_seed.wrapping_add(RUN_SEED_OFFSET + r)).collect()
}

/// `# config=<hash>` line that starts every CSV artifact.
pub fn csv_header(cfg: &ExperimentConfig) -> String {
    format!("# config={}\n", cfg.hash())
}

pub fn core_size(cfg: &ExperimentConfig, m: usize) -> Result<usize, CliError> {
    let k = cfg.k.unwrap_or(m / 3);
    if k > m {
        return Err(CliError::Config(format!("k = {k} exceeds the corpus size {m}")));
    }
    Ok(k)
}

pub fn rank(cfg: &ExperimentConfig, corpus: &Corpus) -> Result<CoreRanking, CliError> {
    let t = Instant::now();
    let cr = build_ranking(&corpus.train, &cfg.hyper()?, cfg.ranking_runs, cfg.base_seed)?;
    log::info!("ranking over {} runs took {:.1?}", cfg.ranking_runs, t.elapsed());
    Ok(cr)
}

/// Reads a ranking file and checks it covers exactly the training corpus.
pub fn load_ranking(path: &Path, corpus: &Corpus) -> Result<CoreRanking, CliError> {
    let text = std::fs::read_to_string(path).map_err(|e| CliError::Io(format!("{}: {e}", path.display())))?;
    let cr = CoreRanking::from_csv(&text)?;
    if cr.corpus_ids() != &corpus.train.id_set() {
        return Err(CliError::Config(format!("{} ranks a different corpus", path.display())));
    }
    Ok(cr)
}

/// A directive, or a path to a forget file.
pub fn parse_forget(text: &str) -> Result<ForgetSpec, CliError> {
    let path = Path::new(text);
    Ok(if path.is_file() { ForgetSpec::from_file(path)? } else { ForgetSpec::parse_directive(text)? })
}

pub fn resolve_forget(text: &str, universe: &IdSet, ranking: Option<&CoreRanking>) -> Result<IdSet, CliError> {
    Ok(parse_forget(text)?.resolve(universe, ranking)?)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Scenario {
    /// No unlearning.
    No,
    /// SVM refit on the remainder, extractor kept.
    Svm,
    /// Both components retrained on the remainder.
    FeSvm,
    /// Extractor retrained on the remainder, SVM refit on everything.
    Fe,
    /// Unlearning-aware model, then the unlearning dispatch.
    MaxRR,
}

impl Scenario {
    pub const ALL: [Scenario; 5] = [Scenario::No, Scenario::Svm, Scenario::FeSvm, Scenario::Fe, Scenario::MaxRR];

    pub fn as_str(self) -> &'static str {
        match self {
            Scenario::No => "No",
            Scenario::Svm => "SVM",
            Scenario::FeSvm => "FE+SVM",
            Scenario::Fe => "FE",
            Scenario::MaxRR => "MaxRR",
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ForgetSet {
    Core,
    CoreAndRandom,
    NonCore,
}

impl ForgetSet {
    pub const ALL: [ForgetSet; 3] = [ForgetSet::Core, ForgetSet::CoreAndRandom, ForgetSet::NonCore];

    pub fn as_str(self) -> &'static str {
        match self {
            ForgetSet::Core => "D_k",
            ForgetSet::CoreAndRandom => "D_k+D_r",
            ForgetSet::NonCore => "D_not_k",
        }
    }
}

#[derive(Clone, Debug)]
pub struct Cell {
    pub scenario: Scenario,
    pub forget: ForgetSet,
    /// Test accuracy per run.
    pub accuracy: Vec<f64>,
    /// Dispatch mode per run (MaxRR and SVM rows only).
    pub modes: Vec<Option<UnlearnMode>>,
}

impl Cell {
    pub fn mean(&self) -> f64 {
        self.accuracy.iter().sum::<f64>() / self.accuracy.len() as f64
    }

    pub fn std(&self) -> f64 {
        let mu = self.mean();
        (self.accuracy.iter().map(|a| (a - mu) * (a - mu)).sum::<f64>() / self.accuracy.len() as f64).sqrt()
    }
}

#[derive(Clone, Debug)]
pub struct Table1 {
    pub seeds: Vec<u64>,
    pub k: usize,
    pub random_forget: usize,
    pub cells: Vec<Cell>,
    /// Per run: the MaxRR model after unlearning `D_k` and the full retrain
    /// without `D_k`, kept for the audit.
    pub core_models: Vec<(SplitModel, SplitModel)>,
}

impl Table1 {
    pub fn cell(&self, scenario: Scenario, forget: ForgetSet) -> &Cell {
        self.cells
            .iter()
            .find(|c| c.scenario == scenario && c.forget == forget)
            .expect("every cell is filled")
    }

    pub fn mean(&self, scenario: Scenario, forget: ForgetSet) -> f64 {
        self.cell(scenario, forget).mean()
    }

    /// `scenario,forget_set,mean_accuracy,std_accuracy`.
    pub fn summary_csv(&self) -> String {
        let mut s = String::from("scenario,forget_set,mean_accuracy,std_accuracy\n");
        for c in &self.cells {
            writeln!(s, "{},{},{:.6},{:.6}", c.scenario.as_str(), c.forget.as_str(), c.mean(), c.std()).unwrap();
        }
        s
    }

    /// `run,seed,scenario,forget_set,accuracy,mode`.
    pub fn runs_csv(&self) -> String {
        let mut s = String::from("run,seed,scenario,forget_set,accuracy,mode\n");
        for c in &self.cells {
            for (r, (acc, mode)) in c.accuracy.iter().zip(&c.modes).enumerate() {
                let mode = mode.map_or("", UnlearnMode::as_str);
                writeln!(s, "{r},{},{},{},{acc:.6},{mode}", self.seeds[r], c.scenario.as_str(), c.forget.as_str()).unwrap();
            }
        }
        s
    }
}

struct RunResult {
    /// `(scenario, forget, accuracy, mode)`.
    cells: Vec<(Scenario, ForgetSet, f64, Option<UnlearnMode>)>,
    core_models: (SplitModel, SplitModel),
}

fn table1_run(
    corpus: &Corpus,
    cr: &CoreRanking,
    k: usize,
    n_random: usize,
    hyper: &Hyper,
    policy: PoolPolicy,
    seed: u64,
) -> Result<RunResult, CliError> {
    let t = Instant::now();
    let ds = &corpus.train;
    let all = ds.id_set();
    let core = cr.top_k(k)?;
    let non_core = cr.non_top_k(k)?;
    let random = non_core.sample(n_random.min(non_core.len()), seed)?;
    let sets = [
        (ForgetSet::Core, core.clone()),
        (ForgetSet::CoreAndRandom, core.union(&random)),
        (ForgetSet::NonCore, non_core),
    ];
    let acc = |m: &SplitModel| m.accuracy(&corpus.test);

    let no = train_split(ds, &all, &all, hyper, seed)?;
    let maxrr = train_unlearning_aware(ds, cr, k, hyper, seed)?;
    let acc_no = acc(&no)?;
    let mut cells = Vec::new();
    let mut core_models = None;
    for (fs, forget) in &sets {
        let req = UnlearnRequest { forget: forget.clone() };
        cells.push((Scenario::No, *fs, acc_no, None));
        let svm = unlearn(&no, ds, &req, policy)?;
        cells.push((Scenario::Svm, *fs, acc(&svm.model)?, Some(svm.mode)));
        let full = full_retrain(ds, forget, None, hyper, seed)?;
        cells.push((Scenario::FeSvm, *fs, acc(&full)?, None));
        let fe = fe_only_unlearn(ds, forget, hyper, seed)?;
        cells.push((Scenario::Fe, *fs, acc(&fe)?, None));
        let mx = unlearn(&maxrr, ds, &req, policy)?;
        cells.push((Scenario::MaxRR, *fs, acc(&mx.model)?, Some(mx.mode)));
        if *fs == ForgetSet::Core {
            core_models = Some((mx.model, full));
        }
    }
    log::info!("table1 run with seed {seed} took {:.1?}", t.elapsed());
    Ok(RunResult { cells, core_models: core_models.expect("core set is first") })
}

/// Every scenario against every forget set, over the configured run seeds.
pub fn table1(cfg: &ExperimentConfig, corpus: &Corpus, cr: &CoreRanking) -> Result<Table1, CliError> {
    let m = corpus.m();
    let k = core_size(cfg, m)?;
    let n_random = cfg.random_forget.unwrap_or(m / 6);
    let hyper = cfg.hyper()?;
    let seeds = run_seeds(cfg);
    let runs = seeds
        .par_iter()
        .map(|&s| table1_run(corpus, cr, k, n_random, &hyper, cfg.pool, s))
        .collect::<Result<Vec<_>, _>>()?;
    let mut cells = Vec::new();
    for scenario in Scenario::ALL {
        for forget in ForgetSet::ALL {
            let picked: Vec<_> = runs
                .iter()
                .map(|r| *r.cells.iter().find(|c| c.0 == scenario && c.1 == forget).expect("cell filled"))
                .collect();
            cells.push(Cell {
                scenario,
                forget,
                accuracy: picked.iter().map(|c| c.2).collect(),
                modes: picked.iter().map(|c| c.3).collect(),
            });
        }
    }
    let core_models = runs.into_iter().map(|r| r.core_models).collect();
    Ok(Table1 { seeds, k, random_forget: n_random, cells, core_models })
}

#[derive(Clone, Debug)]
pub struct AuditStudy {
    /// Reports for strategy A (the unlearning-aware model), one per run.
    pub a: Vec<AuditReport>,
    /// Reports for strategy B (full retrain), one per run.
    pub b: Vec<AuditReport>,
    pub curve: AgreementCurve,
}

/// For each run seed: the unlearning-aware model after serving `forget`, and
/// the full retrain without `forget`.
pub fn strategy_models(
    cfg: &ExperimentConfig,
    corpus: &Corpus,
    cr: &CoreRanking,
    forget: &IdSet,
) -> Result<Vec<(SplitModel, SplitModel)>, CliError> {
    let k = core_size(cfg, corpus.m())?;
    let hyper = cfg.hyper()?;
    let req = UnlearnRequest { forget: forget.clone() };
    run_seeds(cfg)
        .par_iter()
        .map(|&s| {
            let t = Instant::now();
            let aware = train_unlearning_aware(&corpus.train, cr, k, &hyper, s)?;
            let a = unlearn(&aware, &corpus.train, &req, cfg.pool)?.model;
            let b = full_retrain(&corpus.train, forget, None, &hyper, s)?;
            log::info!("audit models for seed {s} took {:.1?}", t.elapsed());
            Ok((a, b))
        })
        .collect()
}

/// Runs the membership audit on each model pair and compares verdicts.
/// `core` is the set excluded from the members under the non-core pool.
pub fn audit(
    corpus: &Corpus,
    pairs: &[(SplitModel, SplitModel)],
    forget: &IdSet,
    pool: MemberPool,
    core: Option<&IdSet>,
    seeds: &[u64],
) -> Result<AuditStudy, CliError> {
    let reports = pairs
        .par_iter()
        .zip(seeds)
        .map(|((a, b), &s)| {
            let ra = verify_unlearning(a, &corpus.train, &corpus.test, forget, pool, core, s)?;
            let rb = verify_unlearning(b, &corpus.train, &corpus.test, forget, pool, core, s)?;
            Ok((ra, rb))
        })
        .collect::<Result<Vec<_>, CliError>>()?;
    let (a, b): (Vec<_>, Vec<_>) = reports.into_iter().unzip();
    let curve = agreement_curve(&a, &b)?;
    Ok(AuditStudy { a, b, curve })
}

#[derive(Clone, Debug, PartialEq)]
pub struct SensitivityRow {
    pub seed: u64,
    pub forgotten: usize,
    pub base: f64,
    /// Extractor kept, SVM refit without the forgotten support vectors.
    pub svm_unlearn: f64,
    /// Extractor retrained without them, SVM refit on everything.
    pub fe_unlearn: f64,
    /// Both retrained without them.
    pub full_retrain: f64,
}

/// Forgets a seeded sample of support vectors of a model trained on all data
/// and measures how much each component depends on them.
pub fn sensitivity(cfg: &ExperimentConfig, corpus: &Corpus) -> Result<Vec<SensitivityRow>, CliError> {
    let hyper = cfg.hyper()?;
    let ds = &corpus.train;
    let all = ds.id_set();
    let n = cfg.sensitivity_forget.unwrap_or(corpus.m() / 6);
    run_seeds(cfg)
        .par_iter()
        .map(|&seed| {
            let t = Instant::now();
            let base = train_split(ds, &all, &all, &hyper, seed)?;
            let sv = base.support_ids();
            let forget = sv.sample(n.min(sv.len()), seed)?;
            let req = UnlearnRequest { forget: forget.clone() };
            let svm = unlearn(&base, ds, &req, PoolPolicy::Full)?.model;
            let fe = fe_only_unlearn(ds, &forget, &hyper, seed)?;
            let full = full_retrain(ds, &forget, None, &hyper, seed)?;
            let row = SensitivityRow {
                seed,
                forgotten: forget.len(),
                base: base.accuracy(&corpus.test)?,
                svm_unlearn: svm.accuracy(&corpus.test)?,
                fe_unlearn: fe.accuracy(&corpus.test)?,
                full_retrain: full.accuracy(&corpus.test)?,
            };
            log::info!("sensitivity run with seed {seed} took {:.1?}", t.elapsed());
            Ok(row)
        })
        .collect()
}

/// `run,seed,forgotten,base,svm_unlearn,fe_unlearn,full_retrain`, then a
/// `mean` row.
pub fn sensitivity_csv(rows: &[SensitivityRow]) -> String {
    let mut s = String::from("run,seed,forgotten,base,svm_unlearn,fe_unlearn,full_retrain\n");
    for (r, row) in rows.iter().enumerate() {
        writeln!(
            s,
            "{r},{},{},{:.6},{:.6},{:.6},{:.6}",
            row.seed, row.forgotten, row.base, row.svm_unlearn, row.fe_unlearn, row.full_retrain
        )
        .unwrap();
    }
    let n = rows.len().max(1) as f64;
    let mean = |f: fn(&SensitivityRow) -> f64| rows.iter().map(f).sum::<f64>() / n;
    writeln!(
        s,
        "mean,,,{:.6},{:.6},{:.6},{:.6}",
        mean(|r| r.base),
        mean(|r| r.svm_unlearn),
        mean(|r| r.fe_unlearn),
        mean(|r| r.full_retrain)
    )
    .unwrap();
    s
}
