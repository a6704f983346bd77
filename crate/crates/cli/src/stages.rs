use std::fs::{self, File};
use std::io::{BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use anyhow::{anyhow, Context};
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use commgen::dataset::Dataset;
use commgen::early::{self, build_early_dataset, EarlyParams};
use commgen::genealogy::{
    emergence_summary, property_time_series, EmergenceRow, GenealogyGraph, GenealogyParams, SeriesRow, DAY,
};
use commgen::growth::{self, build_growth_dataset, GrowthParams, Skipped};
use commgen::ingest::{
    build_index, eligible_children, read_events_file, write_events, CommunityId, CorpusIndex,
};
use commgen::ml::{compare_reports, run_protocol, EvalReport, ModelKind, ProtocolConfig};
use commgen::report::{self, Comparison, SignificanceRow};
use commgen::synth;

use crate::args::*;
use crate::manifest::Manifest;
use crate::Failure;

type Result<T> = std::result::Result<T, Failure>;

const ALL: &str = "all";

pub fn run(cli: Cli) -> Result<()> {
    if let Some(n) = cli.workers {
        if n == 0 {
            return Err(Failure::User(anyhow!("--workers must be at least 1")));
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| Failure::Internal(e.into()))?;
    }
    let w = cli.workers;
    match cli.command {
        Command::Ingest(a) => ingest(&a, w),
        Command::Genealogy(a) => genealogy(&a, w),
        Command::Emergence(a) => emergence(&a, w),
        Command::Timeseries(a) => timeseries(&a, w),
        Command::GrowthDataset(a) => growth_dataset(&a, w),
        Command::GrowthEval(a) => growth_eval(&a, w),
        Command::EarlyDataset(a) => early_dataset(&a, w),
        Command::EarlyEval(a) => early_eval(&a, w),
        Command::Synth(a) => synth_corpus(&a, w),
        Command::Export(a) => export(&a, w),
    }
}

fn create(path: &Path) -> anyhow::Result<BufWriter<File>> {
    if let Some(dir) = path.parent() {
        fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    }
    let file = File::create(path).with_context(|| format!("creating {}", path.display()))?;
    Ok(BufWriter::new(file))
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> anyhow::Result<()> {
    let mut w = create(path)?;
    serde_json::to_writer_pretty(&mut w, value)?;
    w.flush()?;
    Ok(())
}

/// Reads an upstream artifact, naming the stage that produces it when the
/// file is absent.
fn upstream<T: DeserializeOwned>(path: &Path, stage: &str) -> Result<T> {
    if !path.exists() {
        return Err(Failure::User(anyhow!(
            "{} not found; run `commgen {stage}` with the same --out-dir first",
            path.display()
        )));
    }
    let file = File::open(path).with_context(|| format!("opening {}", path.display()))?;
    serde_json::from_reader(BufReader::new(file))
        .with_context(|| format!("reading {}", path.display()))
        .map_err(Failure::User)
}

fn upstream_dataset(path: &Path, stage: &str) -> Result<Dataset> {
    if !path.exists() {
        return Err(Failure::User(anyhow!(
            "{} not found; run `commgen {stage}` with the same --out-dir first",
            path.display()
        )));
    }
    let file = File::open(path).with_context(|| format!("opening {}", path.display()))?;
    Dataset::read_tsv(BufReader::new(file))
        .with_context(|| format!("reading {}", path.display()))
        .map_err(Failure::from)
}

fn load_index(common: &Common) -> Result<(CorpusIndex, PathBuf)> {
    let path = common.index_path();
    if !path.exists() {
        return Err(Failure::User(anyhow!(
            "no corpus index at {}; run `commgen ingest --input <events> --out-dir {}` first",
            path.display(),
            common.out_dir.display()
        )));
    }
    let index = CorpusIndex::load(&path).with_context(|| format!("loading {}", path.display()))?;
    Ok((index, path))
}

fn children(index: &CorpusIndex, c: &Children) -> Result<Vec<CommunityId>> {
    let until = c
        .created_until
        .unwrap_or(index.last_timestamp() - commgen::ingest::DEFAULT_ACCUMULATION_MARGIN);
    let kids = eligible_children(index, c.min_members, c.created_after, until)?;
    if kids.is_empty() {
        return Err(Failure::User(anyhow!(
            "no community has more than {} members and was created in ({}, {}]",
            c.min_members,
            c.created_after,
            until
        )));
    }
    Ok(kids)
}

fn genealogy_params(w: &Window) -> Result<GenealogyParams> {
    if w.window_days == 0 {
        return Err(Failure::User(anyhow!("--window-days must be positive")));
    }
    Ok(GenealogyParams::with_window(i64::from(w.window_days) * DAY))
}

fn check_ks(ks: &[usize]) -> Result<()> {
    if ks.is_empty() || ks.contains(&0) {
        return Err(Failure::User(anyhow!("--k values must be positive")));
    }
    if ks.windows(2).any(|p| p[0] >= p[1]) {
        return Err(Failure::User(anyhow!("--k values must be strictly increasing")));
    }
    Ok(())
}

fn ingest(a: &IngestArgs, workers: Option<usize>) -> Result<()> {
    let mut manifest = Manifest::new("ingest", a, workers);
    manifest.input(&a.input).map_err(Failure::User)?;
    let digest = manifest.inputs[0].sha256.clone();
    let out = a.common.index_path();
    let cached = a
        .cache_dir
        .as_ref()
        .map(|d| d.join(format!("{digest}-t{}.bin", commgen::text::TOKENIZER_VERSION)));

    if let Some(c) = cached.as_ref().filter(|c| c.exists()) {
        if let Some(dir) = out.parent() {
            fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
        }
        CorpusIndex::load(c).with_context(|| format!("cached index {} is unreadable", c.display()))?;
        fs::copy(c, &out).with_context(|| format!("copying {} to {}", c.display(), out.display()))?;
        eprintln!("reused cached index {}", c.display());
    } else {
        let parsed = read_events_file(&a.input)?;
        let index = build_index(&parsed.events)?;
        for dir in [Some(a.common.out_dir.as_path()), out.parent()]
            .into_iter()
            .flatten()
        {
            fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
        }
        index.save(&out)?;
        if let Some(c) = &cached {
            if let Some(dir) = c.parent() {
                fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
            }
            fs::copy(&out, c).with_context(|| format!("caching index at {}", c.display()))?;
        }
        eprintln!(
            "{} posts, {} users, {} communities; {} malformed lines skipped",
            index.num_posts(),
            index.num_users(),
            index.num_communities(),
            parsed.malformed
        );
    }
    manifest.outputs.push(out);
    manifest.write(&a.common.out_dir)?;
    Ok(())
}

fn genealogy(a: &GenealogyArgs, workers: Option<usize>) -> Result<()> {
    check_ks(&[a.k])?;
    let (index, path) = load_index(&a.common)?;
    let params = genealogy_params(&a.window)?;
    let kids = children(&index, &a.children)?;
    let graph = GenealogyGraph::build(&index, &kids, a.k, &params)?;
    let out = a.common.out_dir.join("graph.json");
    write_json(&out, &graph)?;
    eprintln!(
        "{} children, {} edges at k = {}",
        graph.stats.len(),
        graph.edges.len(),
        a.k
    );

    let mut manifest = Manifest::new("genealogy", a, workers);
    manifest.input(&path)?;
    manifest.outputs.push(out);
    manifest.write(&a.common.out_dir)?;
    Ok(())
}

fn emergence(a: &EmergenceArgs, workers: Option<usize>) -> Result<()> {
    check_ks(&a.k)?;
    let (index, path) = load_index(&a.common)?;
    let params = genealogy_params(&a.window)?;
    let kids = children(&index, &a.children)?;
    let rows = emergence_summary(&index, &kids, &a.k, &params)?;
    let out = a.common.out_dir.join("emergence.json");
    write_json(&out, &rows)?;

    let mut manifest = Manifest::new("emergence", a, workers);
    manifest.input(&path)?;
    manifest.outputs.push(out);
    manifest.write(&a.common.out_dir)?;
    Ok(())
}

fn timeseries(a: &TimeseriesArgs, workers: Option<usize>) -> Result<()> {
    check_ks(&a.k)?;
    if a.bucket_days == 0 {
        return Err(Failure::User(anyhow!("--bucket-days must be positive")));
    }
    let (index, path) = load_index(&a.common)?;
    let params = genealogy_params(&a.window)?;
    let kids = children(&index, &a.children)?;
    let rows = property_time_series(&index, &kids, &a.k, &params, i64::from(a.bucket_days) * DAY)?;
    let out = a.common.out_dir.join("timeseries.json");
    write_json(&out, &rows)?;

    let mut manifest = Manifest::new("timeseries", a, workers);
    manifest.input(&path)?;
    manifest.outputs.push(out);
    manifest.write(&a.common.out_dir)?;
    Ok(())
}

#[derive(Debug, Serialize, Deserialize)]
struct GrowthMeta {
    k: usize,
    median: usize,
    rows: usize,
    skipped: Vec<Skipped>,
}

fn write_dataset(path: &Path, data: &Dataset) -> anyhow::Result<()> {
    let mut w = create(path)?;
    data.write_tsv(&mut w)?;
    w.flush()?;
    Ok(())
}

fn growth_dataset(a: &GrowthDatasetArgs, workers: Option<usize>) -> Result<()> {
    check_ks(&[a.k])?;
    let (index, path) = load_index(&a.common)?;
    let kids = children(&index, &a.children)?;
    let mut params = GrowthParams::new(a.k);
    params.genealogy = genealogy_params(&a.window)?;
    params.base_member = a.children.min_members;
    params.lang.min_unique_members = a.lm_min_posters;
    let build = build_growth_dataset(&index, &kids, &params)?;
    let data_path = a.common.out_dir.join("growth_dataset.tsv");
    write_dataset(&data_path, &build.dataset)?;
    let meta_path = a.common.out_dir.join("growth_dataset.json");
    let meta = GrowthMeta {
        k: a.k,
        median: build.median,
        rows: build.dataset.len(),
        skipped: build.skipped,
    };
    write_json(&meta_path, &meta)?;
    eprintln!(
        "{} rows, {} skipped, median size {}",
        meta.rows,
        meta.skipped.len(),
        meta.median
    );

    let mut manifest = Manifest::new("growth-dataset", a, workers);
    manifest.input(&path)?;
    manifest.outputs.extend([data_path, meta_path]);
    manifest.write(&a.common.out_dir)?;
    Ok(())
}

/// Reports for each feature family and for all features together, each
/// family compared against the full set over the same splits.
#[derive(Debug, Serialize, Deserialize)]
struct TaskResult {
    reports: Vec<(String, EvalReport)>,
    comparisons: Vec<Comparison>,
}

fn evaluate(data: &Dataset, kind: ModelKind, families: &[&str], cfg: &ProtocolConfig) -> Result<TaskResult> {
    let all = run_protocol(data, kind, None, cfg)?;
    let mut reports = Vec::new();
    let mut comparisons = Vec::new();
    for &f in families {
        let r = run_protocol(data, kind, Some(&[f]), cfg)?;
        comparisons.push(Comparison {
            feature_set: f.to_owned(),
            reference: ALL.to_owned(),
            result: compare_reports(&r, &all).ok(),
        });
        reports.push((f.to_owned(), r));
    }
    reports.push((ALL.to_owned(), all));
    Ok(TaskResult { reports, comparisons })
}

fn protocol(a: &EvalArgs) -> Result<ProtocolConfig> {
    if a.repeats == 0 {
        return Err(Failure::User(anyhow!("--repeats must be at least 1")));
    }
    Ok(ProtocolConfig::with_seed(a.seed, a.repeats))
}

#[derive(Debug, Serialize, Deserialize)]
struct GrowthEval {
    classification: TaskResult,
    regression: TaskResult,
    label_significance: Vec<SignificanceRow>,
    target_significance: Vec<SignificanceRow>,
}

fn growth_eval(a: &EvalArgs, workers: Option<usize>) -> Result<()> {
    let cfg = protocol(a)?;
    let data_path = a.common.out_dir.join("growth_dataset.tsv");
    let data = upstream_dataset(&data_path, "growth-dataset")?;
    let classification = evaluate(&data, ModelKind::Logistic, &growth::FAMILIES, &cfg)
        .map_err(|f| context(f, "growth classification"))?;
    let mut grown = data.clone();
    grown.rows.retain(|r| r.target.is_some());
    let regression = evaluate(&grown, ModelKind::Ridge, &growth::FAMILIES, &cfg)
        .map_err(|f| context(f, "rate regression over communities above the median"))?;
    let result = GrowthEval {
        classification,
        regression,
        label_significance: report::label_significance(&data)?,
        target_significance: report::target_significance(&grown)?,
    };
    let out = a.common.out_dir.join("growth_eval.json");
    write_json(&out, &result)?;
    for (task, t) in [
        ("classification", &result.classification),
        ("regression", &result.regression),
    ] {
        for (name, r) in &t.reports {
            eprintln!(
                "growth {task} {name}: {} {:.4} ± {:.4}",
                r.metric, r.summary.mean, r.summary.se
            );
        }
    }

    let mut manifest = Manifest::new("growth-eval", a, workers);
    manifest.seeds.push(a.seed);
    manifest.input(&data_path)?;
    manifest.outputs.push(out);
    manifest.write(&a.common.out_dir)?;
    Ok(())
}

fn context(f: Failure, what: &str) -> Failure {
    match f {
        Failure::User(e) => Failure::User(e.context(what.to_owned())),
        Failure::Internal(e) => Failure::Internal(e.context(what.to_owned())),
    }
}

#[derive(Debug, Serialize, Deserialize)]
struct EarlyMeta {
    k: usize,
    tuples: usize,
    pairs: usize,
    unmatched: usize,
    skipped: Vec<Skipped>,
}

fn early_dataset(a: &EarlyDatasetArgs, workers: Option<usize>) -> Result<()> {
    check_ks(&[a.k])?;
    let (index, path) = load_index(&a.common)?;
    let graph_path = a.common.out_dir.join("graph.json");
    let graph: GenealogyGraph = upstream(&graph_path, "genealogy")?;
    let mut params = EarlyParams::new(a.k, a.tuples, a.seed);
    params.window = graph.window;
    let build = build_early_dataset(&index, &graph, &params)?;

    let data_path = a.common.out_dir.join("early_dataset.tsv");
    write_dataset(&data_path, &build.dataset)?;
    let pairs_path = a.common.out_dir.join("early_pairs.tsv");
    let mut w = create(&pairs_path)?;
    writeln!(w, "pair\tparent\tchild\tpositive\tnegative\tmatch_time\tdistance")
        .map_err(anyhow::Error::from)?;
    for (i, p) in build.pairs.iter().enumerate() {
        writeln!(
            w,
            "{i}\t{}\t{}\t{}\t{}\t{}\t{}",
            index.community_name(p.parent),
            index.community_name(p.child),
            index.user_name(p.positive),
            index.user_name(p.negative),
            p.match_time,
            p.distance
        )
        .map_err(anyhow::Error::from)?;
    }
    w.flush().map_err(anyhow::Error::from)?;
    let meta_path = a.common.out_dir.join("early_dataset.json");
    let meta = EarlyMeta {
        k: a.k,
        tuples: build.tuples,
        pairs: build.pairs.len(),
        unmatched: build.unmatched,
        skipped: build.skipped,
    };
    write_json(&meta_path, &meta)?;
    eprintln!(
        "{} tuples, {} pairs, {} unmatched positives, {} skipped",
        meta.tuples,
        meta.pairs,
        meta.unmatched,
        meta.skipped.len()
    );

    let mut manifest = Manifest::new("early-dataset", a, workers);
    manifest.seeds.push(a.seed);
    manifest.input(&path)?;
    manifest.input(&graph_path)?;
    manifest.outputs.extend([data_path, pairs_path, meta_path]);
    manifest.write(&a.common.out_dir)?;
    Ok(())
}

#[derive(Debug, Serialize, Deserialize)]
struct EarlyEval {
    classification: TaskResult,
    significance: Vec<SignificanceRow>,
}

fn early_eval(a: &EvalArgs, workers: Option<usize>) -> Result<()> {
    let cfg = protocol(a)?;
    let data_path = a.common.out_dir.join("early_dataset.tsv");
    let data = upstream_dataset(&data_path, "early-dataset")?;
    let result = EarlyEval {
        classification: evaluate(&data, ModelKind::Logistic, &early::FAMILIES, &cfg)?,
        significance: report::label_significance(&data)?,
    };
    let out = a.common.out_dir.join("early_eval.json");
    write_json(&out, &result)?;
    for (name, r) in &result.classification.reports {
        eprintln!(
            "early {name}: {} {:.4} ± {:.4}",
            r.metric, r.summary.mean, r.summary.se
        );
    }

    let mut manifest = Manifest::new("early-eval", a, workers);
    manifest.seeds.push(a.seed);
    manifest.input(&data_path)?;
    manifest.outputs.push(out);
    manifest.write(&a.common.out_dir)?;
    Ok(())
}

fn synth_corpus(a: &SynthArgs, workers: Option<usize>) -> Result<()> {
    if a.children == 0 || a.k == 0 {
        return Err(Failure::User(anyhow!("--children and --k must be positive")));
    }
    let cfg = match a.scenario {
        Scenario::Growth => synth::growth_scenario(a.seed, a.children, a.k, a.min_members),
        Scenario::Early => synth::early_member_scenario(a.seed, a.children, a.k),
        Scenario::Random => synth::random_plan(a.seed, a.children, a.k),
        Scenario::TwoEra => synth::two_era_scenario(a.seed, a.children.div_ceil(2), a.k, 60 * DAY),
    };
    let (events, truth) = synth::generate_corpus(&cfg)?;
    let events_path = a.out_dir.join("events.jsonl");
    let mut w = create(&events_path)?;
    write_events(&mut w, &events)?;
    w.flush().map_err(anyhow::Error::from)?;
    let truth_path = a.out_dir.join("truth.json");
    write_json(&truth_path, &truth)?;
    eprintln!(
        "{} events in {} communities",
        events.len(),
        truth.communities.len()
    );

    let mut manifest = Manifest::new("synth", a, workers);
    manifest.seeds.push(a.seed);
    manifest.outputs.extend([events_path, truth_path]);
    manifest.write(&a.out_dir)?;
    Ok(())
}

fn table_source(t: Table) -> (&'static str, &'static str) {
    match t {
        Table::Edges | Table::ParentStats => ("graph.json", "genealogy"),
        Table::Emergence => ("emergence.json", "emergence"),
        Table::Timeseries => ("timeseries.json", "timeseries"),
        Table::Growth => ("growth_eval.json", "growth-eval"),
        Table::Early => ("early_eval.json", "early-eval"),
    }
}

fn write_task(dir: &Path, prefix: &str, task: &TaskResult) -> anyhow::Result<Vec<PathBuf>> {
    let mut written = Vec::new();
    let path = dir.join(format!("{prefix}_summary.tsv"));
    report::write_summary(create(&path)?, &task.reports, &task.comparisons)?;
    written.push(path);
    for (name, r) in &task.reports {
        let path = dir.join(format!("{prefix}_runs_{name}.tsv"));
        report::write_runs(create(&path)?, r)?;
        written.push(path);
    }
    if let Some((_, all)) = task.reports.iter().find(|(n, _)| n == ALL) {
        let path = dir.join(format!("{prefix}_coefficients.tsv"));
        report::write_coefficients(create(&path)?, all)?;
        written.push(path);
    }
    Ok(written)
}

fn export(a: &ExportArgs, workers: Option<usize>) -> Result<()> {
    if !(0.0..1.0).contains(&a.edge_filter) {
        return Err(Failure::User(anyhow!("--edge-filter must lie in [0, 1)")));
    }
    let dir = a.out_dir.join("export");
    let explicit = !a.only.is_empty();
    let mut tables = if explicit {
        a.only.clone()
    } else {
        vec![
            Table::Edges,
            Table::ParentStats,
            Table::Emergence,
            Table::Timeseries,
            Table::Growth,
            Table::Early,
        ]
    };
    tables.sort();
    tables.dedup();
    if !explicit {
        tables.retain(|&t| a.out_dir.join(table_source(t).0).exists());
        if tables.is_empty() {
            return Err(Failure::User(anyhow!(
                "nothing to export in {}; run an analysis stage such as `commgen genealogy` first",
                a.out_dir.display()
            )));
        }
    }

    let common = Common {
        out_dir: a.out_dir.clone(),
        index: None,
    };
    let mut manifest = Manifest::new("export", a, workers);
    let mut index: Option<CorpusIndex> = None;
    for t in tables {
        let (file, stage) = table_source(t);
        let src = a.out_dir.join(file);
        match t {
            Table::Edges | Table::ParentStats => {
                let graph: GenealogyGraph = upstream(&src, stage)?;
                if index.is_none() {
                    let (ix, path) = load_index(&common)?;
                    manifest.input(&path)?;
                    index = Some(ix);
                }
                let ix = index.as_ref().expect("index loaded above");
                if t == Table::Edges {
                    let path = dir.join("edges.tsv");
                    report::write_edges(create(&path)?, ix, &graph.edges, Some(a.edge_filter))?;
                    manifest.outputs.push(path);
                } else {
                    let path = dir.join("parent_stats.tsv");
                    report::write_parent_stats(create(&path)?, ix, &graph.stats)?;
                    manifest.outputs.push(path);
                }
            }
            Table::Emergence => {
                let rows: Vec<EmergenceRow> = upstream(&src, stage)?;
                let path = dir.join("emergence.tsv");
                report::write_emergence(create(&path)?, &rows)?;
                manifest.outputs.push(path);
            }
            Table::Timeseries => {
                let rows: Vec<SeriesRow> = upstream(&src, stage)?;
                let path = dir.join("timeseries.tsv");
                report::write_series(create(&path)?, &rows)?;
                manifest.outputs.push(path);
            }
            Table::Growth => {
                let g: GrowthEval = upstream(&src, stage)?;
                manifest
                    .outputs
                    .extend(write_task(&dir, "growth_classification", &g.classification)?);
                manifest
                    .outputs
                    .extend(write_task(&dir, "growth_regression", &g.regression)?);
                for (name, rows) in [
                    ("label", &g.label_significance),
                    ("target", &g.target_significance),
                ] {
                    let path = dir.join(format!("growth_{name}_significance.tsv"));
                    report::write_significance(create(&path)?, rows)?;
                    manifest.outputs.push(path);
                }
            }
            Table::Early => {
                let e: EarlyEval = upstream(&src, stage)?;
                manifest
                    .outputs
                    .extend(write_task(&dir, "early", &e.classification)?);
                let path = dir.join("early_significance.tsv");
                report::write_significance(create(&path)?, &e.significance)?;
                manifest.outputs.push(path);
            }
        }
        if !manifest.inputs.iter().any(|i| i.path == src) {
            manifest.input(&src)?;
        }
    }
    for p in &manifest.outputs {
        eprintln!("wrote {}", p.display());
    }
    manifest.write(&a.out_dir)?;
    Ok(())
}
