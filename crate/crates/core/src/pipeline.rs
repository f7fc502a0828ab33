//! Experiment matrix (sequences x iterations x judges) on the filesystem.
//!
//! Layout under the output directory:
//!
//! ```text
//! <out>/<sequence>/<iteration>/manifest.json
//! <out>/<sequence>/<iteration>/codes/codes_NN.csv
//! <out>/<sequence>/<iteration>/reduce/<judge>/{ucc,duplicates,counts}.csv
//! <out>/<sequence>/<iteration>/reduce/<judge>/{report,frontier}.json
//! <out>/report/...
//! ```

use std::collections::BTreeMap;
use std::fs::File;
use std::io::BufWriter;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::codebook::{read_entries_file, write_duplicates_csv, write_entries_csv, InterviewCodeSet};
use crate::coder::{code_corpus, load_corpus, read_code_sets, write_code_sets, CodingConfig};
use crate::config::{Backend, JudgeMode, RunConfig};
use crate::error::{Error, Result};
use crate::gateway::{CompletionSettings, Gateway, ScriptedGateway};
use crate::judge::{always_different, always_similar, DuplicateJudge, PairwiseJudge, SimilarityTable, ZeroShotJudge};
use crate::metrics::{build_report, its_ratio, mse_between_fits, summarize_runs, PositionCount, SaturationReport, StabilitySummary};
use crate::plot::{fit_annotation, fit_series, line_chart_svg, Series};
use crate::program::CompiledJudgePrompt;
use crate::reducer::{reduce_with_checkpoints, Frontier, Reduction};
use crate::sequence::AnalysisSequence;

pub const MANIFEST_FILE: &str = "manifest.json";
pub const REPORT_FILE: &str = "report.json";
pub const FRONTIER_FILE: &str = "frontier.json";
pub const REPORT_DIR: &str = "report";

pub fn cell_dir(out: &Path, sequence: &str, iteration: usize) -> PathBuf {
    out.join(sequence).join(format!("{iteration:02}"))
}

pub fn codes_dir(cell: &Path) -> PathBuf {
    cell.join("codes")
}

pub fn reduce_dir(cell: &Path, judge_label: &str) -> PathBuf {
    cell.join("reduce").join(judge_label)
}

/// Directory name for a judge mode.
pub fn judge_label(mode: &JudgeMode) -> String {
    match mode {
        JudgeMode::ZeroShot => "zero-shot".into(),
        JudgeMode::Compiled => "compiled".into(),
        JudgeMode::Stub(name) => format!("stub-{name}"),
    }
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    std::fs::write(path, text).map_err(|e| Error::io(path, e))
}

fn read_json<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<T> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    Ok(serde_json::from_str(&text)?)
}

fn create_file(path: &Path) -> Result<BufWriter<File>> {
    File::create(path).map(BufWriter::new).map_err(|e| Error::io(path, e))
}

fn remove_dir_if_present(dir: &Path) -> Result<()> {
    match std::fs::remove_dir_all(dir) {
        Err(e) if e.kind() != std::io::ErrorKind::NotFound => Err(Error::io(dir, e)),
        _ => Ok(()),
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ManifestEntry {
    pub position: usize,
    pub interview_id: String,
    pub codes: usize,
    pub warnings: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CodeManifest {
    pub sequence: String,
    pub order: Vec<usize>,
    pub iteration: usize,
    pub model_id: String,
    pub temperature: f64,
    pub max_codes: usize,
    pub total_codes: usize,
    pub interviews: Vec<ManifestEntry>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum CellStatus {
    Ran,
    Skipped,
    Resumed,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Cell {
    pub sequence: AnalysisSequence,
    pub iteration: usize,
    pub dir: PathBuf,
}

impl Cell {
    pub fn run_id(&self) -> String {
        format!("{}/{:02}", self.sequence.name, self.iteration)
    }
}

/// Every (sequence, iteration) cell the config describes, sequence-major.
pub fn cells(config: &RunConfig, corpus_size: usize) -> Result<Vec<Cell>> {
    let mut out = Vec::new();
    for sequence in config.resolve_sequences(corpus_size)? {
        for iteration in 1..=config.iterations {
            let dir = cell_dir(&config.output, &sequence.name, iteration);
            out.push(Cell { sequence: sequence.clone(), iteration, dir });
        }
    }
    Ok(out)
}

fn settings(config: &RunConfig) -> CompletionSettings {
    let mut s = CompletionSettings::new(config.model_id.clone());
    s.temperature = config.temperature;
    s.max_output_tokens = config.max_output_tokens;
    s.seed_hint = Some(config.seed);
    s
}

fn open_gateway(config: &RunConfig, script: Option<&Path>, what: &str) -> Result<Box<dyn Gateway>> {
    match config.gateway.backend {
        Backend::Scripted => {
            let path = script.ok_or_else(|| Error::Config(format!("scripted backend needs a {what} script")))?;
            Ok(Box::new(ScriptedGateway::from_file(path)?))
        }
        Backend::Live => live_gateway(config),
    }
}

#[cfg(feature = "live")]
fn live_gateway(config: &RunConfig) -> Result<Box<dyn Gateway>> {
    use crate::gateway::{LiveConfig, LiveGateway};
    let g = &config.gateway;
    let live = LiveConfig {
        endpoint: g.endpoint.clone(),
        api_key_env: g.api_key_env.clone(),
        timeout_secs: g.timeout_secs,
        max_concurrency: g.max_concurrency,
    };
    Ok(Box::new(LiveGateway::new(&live)?))
}

#[cfg(not(feature = "live"))]
fn live_gateway(_: &RunConfig) -> Result<Box<dyn Gateway>> {
    Err(Error::Config("this build has no live backend".into()))
}

pub fn coding_gateway(config: &RunConfig) -> Result<Box<dyn Gateway>> {
    open_gateway(config, config.gateway.script.as_deref(), "coding")
}

pub fn judge_gateway(config: &RunConfig) -> Result<Box<dyn Gateway>> {
    open_gateway(config, config.gateway.judge_script.as_deref(), "judge")
}

/// Builds the configured judge, opening a gateway only when it needs one.
pub fn build_judge(config: &RunConfig) -> Result<Box<dyn DuplicateJudge>> {
    Ok(match &config.judge {
        JudgeMode::ZeroShot => Box::new(ZeroShotJudge::new(judge_gateway(config)?, settings(config))),
        JudgeMode::Compiled => {
            let path = config
                .compiled_prompt
                .as_deref()
                .ok_or_else(|| Error::Config("judge 'compiled' needs compiled_prompt".into()))?;
            let compiled = CompiledJudgePrompt::load(path)?;
            Box::new(PairwiseJudge::new(judge_gateway(config)?, settings(config), compiled))
        }
        JudgeMode::Stub(name) => match name.as_str() {
            "always-similar" => Box::new(always_similar()),
            "always-different" => Box::new(always_different()),
            "lookup" => {
                let path = config
                    .stub_table
                    .as_deref()
                    .ok_or_else(|| Error::Config("judge 'stub:lookup' needs stub_table".into()))?;
                Box::new(SimilarityTable::load(path)?.into_judge())
            }
            other => return Err(Error::Config(format!("unknown stub judge '{other}'"))),
        },
    })
}

/// Codes every cell. Cells with a manifest are skipped unless `force`.
pub fn cmd_code(config: &RunConfig, force: bool) -> Result<Vec<(Cell, CellStatus)>> {
    let transcripts = load_corpus(&config.corpus)?;
    let cells = cells(config, transcripts.len())?;
    let mut gateway: Option<Box<dyn Gateway>> = None;
    let mut out = Vec::with_capacity(cells.len());
    for cell in cells {
        let manifest_path = cell.dir.join(MANIFEST_FILE);
        if manifest_path.exists() && !force {
            log::info!("{}: already coded, skipping", cell.run_id());
            out.push((cell, CellStatus::Skipped));
            continue;
        }
        remove_dir_if_present(&codes_dir(&cell.dir))?;
        let g = match &gateway {
            Some(g) => g,
            None => gateway.insert(coding_gateway(config)?),
        };
        let coding = CodingConfig {
            settings: settings(config),
            max_codes: config.max_codes,
            concurrency: config.coding_workers,
            max_transcript_chars: config.max_transcript_chars,
        };
        log::info!("{}: coding {} interviews", cell.run_id(), transcripts.len());
        let outcomes = code_corpus(&transcripts, &cell.sequence, &coding, g.as_ref())?;
        let sets: Vec<InterviewCodeSet> = outcomes.iter().map(|o| o.set.clone()).collect();
        write_code_sets(&codes_dir(&cell.dir), &sets)?;
        let manifest = CodeManifest {
            sequence: cell.sequence.name.clone(),
            order: cell.sequence.order.clone(),
            iteration: cell.iteration,
            model_id: config.model_id.clone(),
            temperature: config.temperature,
            max_codes: config.max_codes,
            total_codes: sets.iter().map(|s| s.codes.len()).sum(),
            interviews: outcomes
                .iter()
                .map(|o| ManifestEntry {
                    position: o.set.position,
                    interview_id: o.set.interview_id.clone(),
                    codes: o.set.codes.len(),
                    warnings: o.warnings.len(),
                })
                .collect(),
        };
        write_json(&manifest_path, &manifest)?;
        out.push((cell, CellStatus::Ran));
    }
    Ok(out)
}

/// Writes the reduction artifacts for one cell and judge.
pub fn write_reduction(dir: &Path, reduction: &Reduction, report: &SaturationReport) -> Result<()> {
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    write_entries_csv(create_file(&dir.join("ucc.csv"))?, &reduction.ucc.entries)?;
    write_duplicates_csv(create_file(&dir.join("duplicates.csv"))?, &reduction.ucc)?;
    write_counts_csv(&dir.join("counts.csv"), &reduction.counts)?;
    write_json(&dir.join(REPORT_FILE), report)
}

fn write_counts_csv(path: &Path, counts: &[PositionCount]) -> Result<()> {
    let mut w = csv::WriterBuilder::new().terminator(csv::Terminator::Any(b'\n')).from_writer(create_file(path)?);
    for c in counts {
        w.serialize(c)?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

fn read_counts_csv(path: &Path) -> Result<Vec<PositionCount>> {
    let mut r = csv::Reader::from_path(path)?;
    r.deserialize().map(|row| row.map_err(Error::from)).collect()
}

/// Reduces one cell with `judge`, resuming from a frontier when one exists.
pub fn reduce_cell(cell: &Cell, judge: &dyn DuplicateJudge, force: bool) -> Result<(SaturationReport, CellStatus)> {
    let label = judge.label();
    let dir = reduce_dir(&cell.dir, &label);
    let report_path = dir.join(REPORT_FILE);
    let frontier_path = dir.join(FRONTIER_FILE);
    if force {
        remove_dir_if_present(&dir)?;
    } else if report_path.exists() {
        return Ok((read_json(&report_path)?, CellStatus::Skipped));
    }
    let sets = read_code_sets(&codes_dir(&cell.dir))?;
    let start = if frontier_path.exists() { Some(Frontier::load(&frontier_path)?) } else { None };
    let status = if start.is_some() { CellStatus::Resumed } else { CellStatus::Ran };
    std::fs::create_dir_all(&dir).map_err(|e| Error::io(&dir, e))?;
    log::info!("{}: reducing with {label}", cell.run_id());
    let reduction = reduce_with_checkpoints(&sets, judge, start, &mut |f| f.save(&frontier_path))?;
    let report = build_report(cell.run_id(), &cell.sequence.name, &label, reduction.counts.clone())?;
    write_reduction(&dir, &reduction, &report)?;
    Ok((report, status))
}

/// Reduces every coded cell with the configured judge.
pub fn cmd_reduce(config: &RunConfig, force: bool) -> Result<Vec<(SaturationReport, CellStatus)>> {
    let transcripts = load_corpus(&config.corpus)?;
    let judge = build_judge(config)?;
    let mut out = Vec::new();
    for cell in cells(config, transcripts.len())? {
        if !cell.dir.join(MANIFEST_FILE).exists() {
            return Err(Error::Input(format!("{} has not been coded yet", cell.run_id())));
        }
        out.push(reduce_cell(&cell, judge.as_ref(), force)?);
    }
    Ok(out)
}

/// Checks a reduction directory against its own CSVs and returns its report.
pub fn audit_reduce_dir(dir: &Path) -> Result<SaturationReport> {
    let report: SaturationReport = read_json(&dir.join(REPORT_FILE))?;
    let unique = read_entries_file(&dir.join("ucc.csv"))?.len();
    let dup_path = dir.join("duplicates.csv");
    let duplicates = csv::Reader::from_path(&dup_path)?.records().count();
    let counts = read_counts_csv(&dir.join("counts.csv"))?;
    let fail = |what: String| Err(Error::Structural(format!("{}: {what}", dir.display())));
    if report.unique_codes != unique {
        return fail(format!("report says {} unique codes, ucc.csv has {unique}", report.unique_codes));
    }
    if report.total_codes != unique + duplicates {
        return fail(format!(
            "report says {} codes, CSVs hold {unique} unique + {duplicates} duplicates",
            report.total_codes
        ));
    }
    if counts != report.counts {
        return fail("counts.csv disagrees with the report".into());
    }
    if report.its != its_ratio(unique, unique + duplicates)? {
        return fail(format!("ITS {} is not {unique}/{}", report.its, unique + duplicates));
    }
    Ok(report)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitComparison {
    pub run_id: String,
    pub judge_a: String,
    pub judge_b: String,
    pub mse: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct JudgeSummary {
    pub judge: String,
    pub runs: usize,
    /// Absent with fewer than two runs.
    pub stability: Option<StabilitySummary>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportSummary {
    pub reports: Vec<SaturationReport>,
    pub judges: Vec<JudgeSummary>,
    pub fit_mse: Vec<FitComparison>,
}

fn sorted_subdirs(dir: &Path) -> Result<Vec<PathBuf>> {
    let mut out: Vec<PathBuf> = std::fs::read_dir(dir)
        .map_err(|e| Error::io(dir, e))?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.is_dir())
        .collect();
    out.sort();
    Ok(out)
}

/// Every audited report under `out`, in directory order.
pub fn collect_reports(out: &Path) -> Result<Vec<SaturationReport>> {
    let mut reports = Vec::new();
    for seq in sorted_subdirs(out)? {
        if seq.file_name().is_some_and(|n| n == REPORT_DIR) {
            continue;
        }
        for cell in sorted_subdirs(&seq)? {
            let reduce = cell.join("reduce");
            if !reduce.is_dir() {
                continue;
            }
            for judge in sorted_subdirs(&reduce)? {
                if judge.join(REPORT_FILE).exists() {
                    reports.push(audit_reduce_dir(&judge)?);
                }
            }
        }
    }
    Ok(reports)
}

fn file_stem(run_id: &str) -> String {
    run_id.replace('/', "_")
}

/// Assembles the ITS table, stability summary, curve and regression charts.
pub fn cmd_report(out: &Path) -> Result<ReportSummary> {
    let reports = collect_reports(out)?;
    if reports.is_empty() {
        return Err(Error::Input(format!("no completed reductions under {}", out.display())));
    }
    let dir = out.join(REPORT_DIR);
    std::fs::create_dir_all(dir.join("curves")).map_err(|e| Error::io(&dir, e))?;

    let mut by_judge: BTreeMap<&str, Vec<SaturationReport>> = BTreeMap::new();
    let mut by_run: BTreeMap<&str, Vec<&SaturationReport>> = BTreeMap::new();
    for r in &reports {
        by_judge.entry(&r.judge).or_default().push(r.clone());
        by_run.entry(&r.run_id).or_default().push(r);
    }
    let judges = by_judge
        .iter()
        .map(|(judge, rs)| {
            Ok(JudgeSummary {
                judge: judge.to_string(),
                runs: rs.len(),
                stability: if rs.len() >= 2 { Some(summarize_runs(rs)?) } else { None },
            })
        })
        .collect::<Result<Vec<_>>>()?;

    let mut fit_mse = Vec::new();
    for (run_id, rs) in &by_run {
        for (i, a) in rs.iter().enumerate() {
            for b in &rs[i + 1..] {
                if let (Some(fa), Some(fb)) = (&a.fit_unique, &b.fit_unique) {
                    fit_mse.push(FitComparison {
                        run_id: run_id.to_string(),
                        judge_a: a.judge.clone(),
                        judge_b: b.judge.clone(),
                        mse: mse_between_fits(fa, fb, a.counts.len())?,
                    });
                }
            }
        }
    }

    write_its_table(&dir.join("its_table.csv"), &reports, &judges)?;
    write_curves_csv(&dir.join("curves.csv"), &reports)?;
    for (run_id, rs) in &by_run {
        let stem = file_stem(run_id);
        let cum = |f: fn(&PositionCount) -> usize| -> Vec<(f64, f64)> {
            rs[0].counts.iter().enumerate().map(|(k, c)| ((k + 1) as f64, f(c) as f64)).collect()
        };
        let mut series = vec![Series { label: "TCC".into(), points: cum(|c| c.cumulative_total), dashed: false }];
        for r in rs {
            series.push(Series {
                label: format!("UCC {}", r.judge),
                points: r.counts.iter().enumerate().map(|(k, c)| ((k + 1) as f64, c.cumulative_unique as f64)).collect(),
                dashed: false,
            });
        }
        let svg = line_chart_svg(&format!("Cumulative codes, {run_id}"), &series, &[]);
        let path = dir.join("curves").join(format!("{stem}.svg"));
        std::fs::write(&path, svg).map_err(|e| Error::io(&path, e))?;

        let mut fits = Vec::new();
        let mut notes = Vec::new();
        for r in rs {
            if let Some(f) = &r.fit_unique {
                fits.push(fit_series(&format!("fit {}", r.judge), f, r.counts.len()));
                notes.push(fit_annotation(&r.judge, f));
            }
        }
        for c in fit_mse.iter().filter(|c| c.run_id == *run_id) {
            notes.push(format!("MSE {} vs {}: {:.2}", c.judge_a, c.judge_b, c.mse));
        }
        let mut all = series[1..].to_vec();
        all.extend(fits);
        let svg = line_chart_svg(&format!("UCC regression, {run_id}"), &all, &notes);
        let path = dir.join("curves").join(format!("{stem}_regression.svg"));
        std::fs::write(&path, svg).map_err(|e| Error::io(&path, e))?;
    }
    let overlay: Vec<Series> = reports
        .iter()
        .map(|r| Series {
            label: format!("{} {}", r.run_id, r.judge),
            points: r.counts.iter().enumerate().map(|(k, c)| ((k + 1) as f64, c.cumulative_unique as f64)).collect(),
            dashed: false,
        })
        .collect();
    let path = dir.join("curves.svg");
    std::fs::write(&path, line_chart_svg("Unique cumulative codebooks", &overlay, &[])).map_err(|e| Error::io(&path, e))?;

    let summary = ReportSummary { reports, judges, fit_mse };
    write_json(&dir.join("summary.json"), &summary)?;
    Ok(summary)
}

fn write_its_table(path: &Path, reports: &[SaturationReport], judges: &[JudgeSummary]) -> Result<()> {
    let mut w = csv::WriterBuilder::new().terminator(csv::Terminator::Any(b'\n')).from_writer(create_file(path)?);
    w.write_record(["run_id", "sequence", "judge", "total_codes", "unique_codes", "its"])?;
    for r in reports {
        w.write_record([
            r.run_id.clone(),
            r.sequence.clone(),
            r.judge.clone(),
            r.total_codes.to_string(),
            r.unique_codes.to_string(),
            r.its_display(),
        ])?;
    }
    for j in judges {
        if let Some(s) = &j.stability {
            w.write_record(["CoV%", "", &j.judge, "", "", &format!("{:.2}", s.cov_percent)])?;
        }
    }
    w.flush().map_err(|e| Error::io(path, e))
}

fn write_curves_csv(path: &Path, reports: &[SaturationReport]) -> Result<()> {
    let mut w = csv::WriterBuilder::new().terminator(csv::Terminator::Any(b'\n')).from_writer(create_file(path)?);
    w.write_record(["run_id", "judge", "position", "cumulative_total", "cumulative_unique"])?;
    for r in reports {
        for c in &r.counts {
            w.write_record([
                r.run_id.clone(),
                r.judge.clone(),
                c.position.to_string(),
                c.cumulative_total.to_string(),
                c.cumulative_unique.to_string(),
            ])?;
        }
    }
    w.flush().map_err(|e| Error::io(path, e))
}
