//! Command-line front end.
//!
//! Each command computes its outputs first and writes them only on success.
//! Every output file carries a [`RunManifest`]: JSON reports hold it under
//! `"manifest"`, Newick files in a leading `[relate-manifest {..}]` comment
//! and TSV files on a leading `# relate-manifest {..}` line. `relate replay
//! FILE` recomputes a file from its manifest and checks it byte for byte.

use std::collections::BTreeMap;
use std::ffi::OsString;
use std::fs;
use std::path::{Path, PathBuf};
use std::time::{Duration, SystemTime, UNIX_EPOCH};

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};
use sha2::{Digest, Sha256};

use crate::bootsim::{simulate_matrix, SimConfig};
use crate::error::{Error, Result};
use crate::lexdata::{filter_forms, parse_wordlist, select_core_form, DuplicateRows, FilterPolicy, IngestConfig};
use crate::lrt::{run_lrt, Decision, LrtConfig};
use crate::mlsearch::{ml_tree_estimate, ml_tree_with_model, EstimateOptions, FitReport, MlFit, SearchConfig};
use crate::msa::{build_character_matrix, AlignScoring, CharacterMatrix, ConceptBlock};
use crate::permtest::{pairwise_pvalues, run_permtest, ExternalTable, Verdict, WordMetric};
use crate::phylik::{parse_newick, write_newick};
use crate::soundclass::{ClassAlphabet, EncodedWordlist};
use crate::submodel::{build_model, FrequencyMode, ModelOptions};
use crate::treecmp::gqd;

const NEWICK_TAG: &str = "relate-manifest";

#[derive(Parser, Debug)]
#[command(name = "relate", version, about = "Tests of genetic relatedness from sound-class wordlists")]
pub struct Cli {
    /// Worker threads; falls back to RELATE_THREADS, then to all cores.
    #[arg(long, global = true, env = "RELATE_THREADS")]
    pub threads: Option<usize>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Subcommand, Debug, Clone)]
pub enum Command {
    /// Likelihood ratio test on invariant-site proportions.
    Lrt(LrtArgs),
    /// Multilateral permutation test with average-linkage clustering.
    Permtest(PermtestArgs),
    /// Maximum-likelihood tree with estimated p_inv (and optional gamma).
    Mltree(MltreeArgs),
    /// Simulate one replicate matrix from a fitted tree and model.
    Simulate(SimulateArgs),
    /// Generalized quartet distance of a predicted tree to a gold tree.
    Gqd(GqdArgs),
    /// Recompute an output file from its embedded manifest and compare.
    Replay(ReplayArgs),
}

/// Where the character matrix comes from.
#[derive(Args, Debug, Clone, Serialize, Deserialize)]
#[group(required = true, multiple = false)]
pub struct MatrixSource {
    /// Wordlist TSV (LANGUAGE, CONCEPT, FORM, ...).
    #[arg(long)]
    pub wordlist: Option<PathBuf>,
    /// Prebuilt matrix: PHYLIP, FASTA, or a replicate written by `simulate`.
    #[arg(long)]
    pub matrix: Option<PathBuf>,
}

#[derive(Args, Debug, Clone, Serialize, Deserialize)]
pub struct PrepArgs {
    /// SEGMENT<TAB>CLASS table replacing the built-in sound classes.
    #[arg(long)]
    pub alphabet: Option<PathBuf>,
    #[arg(long)]
    pub keep_loans: bool,
    #[arg(long)]
    pub keep_onomatopoeia: bool,
    #[arg(long)]
    pub keep_nursery: bool,
    /// Keep entries tagged SHORT.
    #[arg(long)]
    pub keep_short: bool,
    /// Forms with fewer consonant classes are dropped (0 keeps all).
    #[arg(long, default_value_t = 2)]
    pub min_consonants: usize,
    /// Fail on duplicate rows instead of collapsing them.
    #[arg(long)]
    pub reject_duplicates: bool,
}

#[derive(Args, Debug, Clone, Serialize, Deserialize)]
pub struct AlignArgs {
    #[arg(long, default_value_t = 2.0, allow_negative_numbers = true)]
    pub match_score: f64,
    #[arg(long, default_value_t = -1.0, allow_negative_numbers = true)]
    pub mismatch: f64,
    #[arg(long, default_value_t = -2.0, allow_negative_numbers = true)]
    pub gap_open: f64,
    #[arg(long, default_value_t = -2.0, allow_negative_numbers = true)]
    pub gap_extend: f64,
}

#[derive(ValueEnum, Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum Frequencies {
    #[default]
    Empirical,
    Equal,
}

#[derive(Args, Debug, Clone, Serialize, Deserialize)]
pub struct LrtArgs {
    #[command(flatten)]
    pub source: MatrixSource,
    #[command(flatten)]
    pub prep: PrepArgs,
    #[command(flatten)]
    pub align: AlignArgs,
    /// Invariant proportion under the null hypothesis.
    #[arg(long, default_value_t = 0.01)]
    pub p0: f64,
    /// Invariant proportion under the alternative.
    #[arg(long, default_value_t = 0.06)]
    pub pa: f64,
    /// Number of paired bootstrap runs.
    #[arg(long, default_value_t = 15)]
    pub k: usize,
    #[arg(long, default_value_t = 0.05)]
    pub alpha: f64,
    #[arg(long, default_value_t = 42)]
    pub seed: u64,
    /// Independent tree searches per fit.
    #[arg(long, default_value_t = 1)]
    pub restarts: usize,
    /// Random NNIs on the start tree, as a fraction of its internal edges.
    #[arg(long, default_value_t = 0.5)]
    pub perturbation: f64,
    #[arg(long, value_enum, default_value_t)]
    pub frequencies: Frequencies,
    /// JSON report.
    #[arg(long)]
    #[serde(skip)]
    pub out: PathBuf,
    /// Newick file with the null and alternative trees of every run.
    #[arg(long)]
    #[serde(skip)]
    pub trees: Option<PathBuf>,
}

#[derive(ValueEnum, Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum MetricArg {
    P1dolgo,
    Turchin,
    External,
}

#[derive(Args, Debug, Clone, Serialize, Deserialize)]
pub struct PermtestArgs {
    #[arg(long)]
    pub wordlist: PathBuf,
    #[command(flatten)]
    pub prep: PrepArgs,
    #[arg(long, value_enum, default_value = "p1dolgo")]
    pub metric: MetricArg,
    /// LANG_A WORD_A LANG_B WORD_B DIST table for `--metric external`.
    #[arg(long, required_if_eq("metric", "external"))]
    pub distances: Option<PathBuf>,
    #[arg(long, default_value_t = 1000)]
    pub n_perm: usize,
    #[arg(long, default_value_t = 42)]
    pub seed: u64,
    /// Write the pairwise p-value table (TSV) instead of the merge tree.
    #[arg(long)]
    pub pairwise: bool,
    #[arg(long)]
    #[serde(skip)]
    pub out: PathBuf,
}

#[derive(Args, Debug, Clone, Serialize, Deserialize)]
pub struct MltreeArgs {
    #[command(flatten)]
    pub source: MatrixSource,
    #[command(flatten)]
    pub prep: PrepArgs,
    #[command(flatten)]
    pub align: AlignArgs,
    /// Also estimate the shape of a two-category gamma.
    #[arg(long)]
    pub gamma2: bool,
    /// Fix p_inv instead of estimating it.
    #[arg(long, conflicts_with = "gamma2")]
    pub p_inv: Option<f64>,
    #[arg(long, default_value_t = 0.5)]
    pub max_p_inv: f64,
    #[arg(long, default_value_t = 42)]
    pub seed: u64,
    #[arg(long, default_value_t = 1)]
    pub restarts: usize,
    #[arg(long, default_value_t = 0.0)]
    pub perturbation: f64,
    #[arg(long, value_enum, default_value_t)]
    pub frequencies: Frequencies,
    /// Newick output.
    #[arg(long)]
    #[serde(skip)]
    pub out: PathBuf,
    /// Fit JSON (input to `simulate`).
    #[arg(long)]
    #[serde(skip)]
    pub fit_out: Option<PathBuf>,
}

#[derive(Args, Debug, Clone, Serialize, Deserialize)]
pub struct SimulateArgs {
    /// Fit JSON written by `mltree --fit-out`.
    #[arg(long)]
    pub fit: PathBuf,
    /// Template supplying taxa, width and gap mask.
    #[command(flatten)]
    pub source: MatrixSource,
    #[command(flatten)]
    pub prep: PrepArgs,
    #[command(flatten)]
    pub align: AlignArgs,
    #[arg(long, default_value_t = 42)]
    pub seed: u64,
    /// Number of sites; defaults to the template width.
    #[arg(long)]
    pub sites: Option<usize>,
    /// Do not copy the template's gap cells.
    #[arg(long)]
    pub no_gap_mask: bool,
    #[arg(long)]
    #[serde(skip)]
    pub out: PathBuf,
}

#[derive(Args, Debug, Clone, Serialize, Deserialize)]
pub struct GqdArgs {
    pub predicted: PathBuf,
    pub gold: PathBuf,
    /// JSON score report.
    #[arg(long)]
    #[serde(skip)]
    pub out: Option<PathBuf>,
}

#[derive(Args, Debug, Clone)]
pub struct ReplayArgs {
    pub file: PathBuf,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct InputDigest {
    pub path: String,
    pub sha256: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Timestamps {
    pub started: String,
    pub finished: String,
}

/// Everything needed to reproduce an output file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub command: String,
    pub config: Value,
    /// Keyed by role (`wordlist`, `fit`, `gold`, ...).
    pub inputs: BTreeMap<String, InputDigest>,
    pub seed: Option<u64>,
    pub version: String,
    pub timestamps: Timestamps,
}

enum Body {
    Json { schema: &'static str, payload: Value },
    Newick { trees: Vec<(Option<String>, String)> },
    Tsv { text: String },
}

struct Output {
    /// None: computed for replay but not requested on this run.
    path: Option<PathBuf>,
    body: Body,
}

struct Outcome {
    command: &'static str,
    config: Value,
    seed: Option<u64>,
    inputs: BTreeMap<String, InputDigest>,
    outputs: Vec<Output>,
    stdout: Vec<String>,
}

/// Reads inputs and records their digests.
#[derive(Default)]
struct Inputs(BTreeMap<String, InputDigest>);

impl Inputs {
    fn read(&mut self, role: &str, path: &Path) -> Result<Vec<u8>> {
        let bytes = fs::read(path).map_err(|source| Error::Io { path: path.to_path_buf(), source })?;
        let digest = hex::encode(Sha256::digest(&bytes));
        self.0.insert(role.to_string(), InputDigest { path: path.display().to_string(), sha256: digest });
        Ok(bytes)
    }

    fn read_text(&mut self, role: &str, path: &Path) -> Result<String> {
        let bytes = self.read(role, path)?;
        String::from_utf8(bytes).map_err(|e| Error::Parse { line: 0, message: format!("{}: {e}", path.display()) })
    }
}

fn rfc3339(t: SystemTime) -> String {
    humantime::format_rfc3339_seconds(t).to_string()
}

/// `SOURCE_DATE_EPOCH` pins both timestamps when set.
fn now() -> String {
    let t = std::env::var("SOURCE_DATE_EPOCH")
        .ok()
        .and_then(|s| s.trim().parse::<u64>().ok())
        .map(|s| UNIX_EPOCH + Duration::from_secs(s))
        .unwrap_or_else(SystemTime::now);
    rfc3339(t)
}

fn to_value<T: Serialize>(v: &T) -> Value {
    serde_json::to_value(v).expect("plain data serializes")
}

fn alphabet(prep: &PrepArgs, inputs: &mut Inputs) -> Result<ClassAlphabet> {
    match &prep.alphabet {
        Some(p) => ClassAlphabet::from_tsv(inputs.read("alphabet", p)?.as_slice()),
        None => Ok(ClassAlphabet::dolgopolsky()),
    }
}

fn preprocess(path: &Path, prep: &PrepArgs, seed: u64, inputs: &mut Inputs) -> Result<(crate::lexdata::Wordlist, ClassAlphabet)> {
    let alphabet = alphabet(prep, inputs)?;
    let bytes = inputs.read("wordlist", path)?;
    let ingest = IngestConfig {
        duplicates: if prep.reject_duplicates { DuplicateRows::Reject } else { DuplicateRows::Dedup },
    };
    let wl = parse_wordlist(bytes.as_slice(), &ingest)?;
    let policy = FilterPolicy {
        drop_loans: !prep.keep_loans,
        drop_onomatopoeia: !prep.keep_onomatopoeia,
        drop_nursery: !prep.keep_nursery,
        drop_short_tagged: !prep.keep_short,
        min_consonants: prep.min_consonants,
    };
    let wl = select_core_form(&filter_forms(&wl, &policy, &alphabet), seed);
    Ok((wl, alphabet))
}

/// Serialized replicate matrix.
#[derive(Debug, Clone, Serialize, Deserialize)]
struct MatrixRecord {
    taxa: Vec<String>,
    rows: Vec<String>,
    concept_bounds: Vec<ConceptBlock>,
}

impl MatrixRecord {
    fn from_matrix(m: &CharacterMatrix) -> Self {
        MatrixRecord {
            taxa: m.taxa.clone(),
            rows: m.rows.iter().map(|r| String::from_utf8_lossy(r).into_owned()).collect(),
            concept_bounds: m.concept_bounds.clone(),
        }
    }

    fn into_matrix(self) -> Result<CharacterMatrix> {
        let mut m = CharacterMatrix::new(self.taxa, self.rows.into_iter().map(String::into_bytes).collect())?;
        m.concept_bounds = self.concept_bounds;
        Ok(m)
    }
}

fn load_matrix(
    source: &MatrixSource,
    prep: &PrepArgs,
    align: &AlignArgs,
    seed: u64,
    inputs: &mut Inputs,
) -> Result<CharacterMatrix> {
    match (&source.wordlist, &source.matrix) {
        (Some(w), None) => {
            let (wl, alphabet) = preprocess(w, prep, seed, inputs)?;
            let scoring = AlignScoring {
                match_score: align.match_score,
                mismatch: align.mismatch,
                gap_open: align.gap_open,
                gap_extend: align.gap_extend,
            };
            build_character_matrix(&wl, &alphabet, &scoring)
        }
        (None, Some(m)) => {
            let text = inputs.read_text("matrix", m)?;
            if text.trim_start().starts_with('{') {
                let v: Value = serde_json::from_str(&text)?;
                let rec = v.get("matrix").cloned().ok_or_else(|| Error::Schema("JSON matrix needs a \"matrix\" field".into()))?;
                serde_json::from_value::<MatrixRecord>(rec)?.into_matrix()
            } else {
                CharacterMatrix::parse(&text)
            }
        }
        _ => Err(Error::Schema("give exactly one of --wordlist and --matrix".into())),
    }
}

fn model_options(freqs: Frequencies) -> ModelOptions {
    ModelOptions {
        frequencies: match freqs {
            Frequencies::Empirical => FrequencyMode::Empirical,
            Frequencies::Equal => FrequencyMode::Equal,
        },
        ..ModelOptions::default()
    }
}

fn cmd_lrt(a: &LrtArgs) -> Result<Outcome> {
    let mut inputs = Inputs::default();
    let matrix = load_matrix(&a.source, &a.prep, &a.align, a.seed, &mut inputs)?;
    let cfg = LrtConfig {
        p_inv_null: a.p0,
        p_inv_alt: a.pa,
        k: a.k,
        alpha: a.alpha,
        seed: a.seed,
        search: SearchConfig {
            seed: a.seed,
            random_restarts: a.restarts,
            start_perturbation: a.perturbation,
            ..SearchConfig::default()
        },
        model: model_options(a.frequencies),
    };
    let report = run_lrt(&matrix, &cfg)?;
    let decision = match report.decision {
        Decision::Related => "RELATED",
        Decision::NotSupported => "NOT_SUPPORTED",
    };
    let line = format!(
        "{decision} mean_delta_obs={} mean_delta_null={} t={} p={}",
        report.mean_observed, report.mean_null, report.t, report.p
    );
    let trees = report
            .runs
            .iter()
            .flat_map(|r| {
                [
                    (Some(format!("run={} hypothesis=null p_inv={}", r.j, a.p0)), r.tree_null.clone()),
                    (Some(format!("run={} hypothesis=alt p_inv={}", r.j, a.pa)), r.tree_alt.clone()),
                ]
            })
            .collect();
    let outputs = vec![
        Output { path: Some(a.out.clone()), body: Body::Json { schema: "relate.lrt/1", payload: to_value(&report) } },
        Output { path: a.trees.clone(), body: Body::Newick { trees } },
    ];
    Ok(Outcome {
        command: "lrt",
        config: to_value(a),
        seed: Some(a.seed),
        inputs: inputs.0,
        outputs,
        stdout: vec![line],
    })
}

fn cmd_permtest(a: &PermtestArgs) -> Result<Outcome> {
    let mut inputs = Inputs::default();
    let (wl, alphabet) = preprocess(&a.wordlist, &a.prep, a.seed, &mut inputs)?;
    let enc = EncodedWordlist::encode(&wl, &alphabet)?;
    let metric = match a.metric {
        MetricArg::P1dolgo => WordMetric::P1Dolgo,
        MetricArg::Turchin => WordMetric::Turchin,
        MetricArg::External => {
            let p = a.distances.as_ref().ok_or_else(|| Error::Schema("--metric external needs --distances".into()))?;
            WordMetric::External(ExternalTable::from_tsv(inputs.read("distances", p)?.as_slice())?)
        }
    };
    let (body, stdout) = if a.pairwise {
        let table = pairwise_pvalues(&metric, &enc, a.n_perm, a.seed)?;
        let mut buf = Vec::new();
        table.write_tsv(&mut buf).map_err(|source| Error::Io { path: a.out.clone(), source })?;
        (Body::Tsv { text: String::from_utf8(buf).expect("tsv is utf-8") }, Vec::new())
    } else {
        let tree = run_permtest(&metric, &enc, a.n_perm, a.seed)?;
        let root = tree.root();
        let verdict = match tree.verdict {
            Verdict::Related => "RELATED",
            Verdict::NotSupported => "NOT_SUPPORTED",
        };
        let line = format!("{verdict} metric={} s_hat={} p={}", tree.metric, root.s_hat, root.p_value);
        let mut payload = to_value(&tree);
        payload["tree"] = tree.nested();
        (Body::Json { schema: "relate.permtest/1", payload }, vec![line])
    };
    Ok(Outcome {
        command: "permtest",
        config: to_value(a),
        seed: Some(a.seed),
        inputs: inputs.0,
        outputs: vec![Output { path: Some(a.out.clone()), body }],
        stdout,
    })
}

fn cmd_mltree(a: &MltreeArgs) -> Result<Outcome> {
    let mut inputs = Inputs::default();
    let matrix = load_matrix(&a.source, &a.prep, &a.align, a.seed, &mut inputs)?;
    let search = SearchConfig {
        seed: a.seed,
        random_restarts: a.restarts,
        start_perturbation: a.perturbation,
        ..SearchConfig::default()
    };
    let opts = model_options(a.frequencies);
    let fit = match a.p_inv {
        Some(p) => ml_tree_with_model(&matrix, &build_model(&matrix, &opts)?.with_p_inv(p)?, &search)?,
        None => ml_tree_estimate(&matrix, &opts, &EstimateOptions { max_p_inv: a.max_p_inv, gamma2: a.gamma2 }, &search)?,
    };
    let mut line = format!("logL={} p_inv={}", fit.log_likelihood, fit.model.p_inv);
    if let Some(s) = fit.model.gamma_shape {
        line.push_str(&format!(" gamma_shape={s}"));
    }
    let outputs = vec![
        Output { path: Some(a.out.clone()), body: Body::Newick { trees: vec![(None, write_newick(&fit.tree))] } },
        Output {
            path: a.fit_out.clone(),
            body: Body::Json { schema: "relate.fit/1", payload: json!({ "fit": fit.report() }) },
        },
    ];
    Ok(Outcome {
        command: "mltree",
        config: to_value(a),
        seed: Some(a.seed),
        inputs: inputs.0,
        outputs,
        stdout: vec![line],
    })
}

fn cmd_simulate(a: &SimulateArgs) -> Result<Outcome> {
    let mut inputs = Inputs::default();
    let v: Value = serde_json::from_str(&inputs.read_text("fit", &a.fit)?)?;
    let report: FitReport = serde_json::from_value(v.get("fit").cloned().unwrap_or(v))?;
    let fit = MlFit::from_report(&report)?;
    let template = load_matrix(&a.source, &a.prep, &a.align, a.seed, &mut inputs)?;
    let cfg = SimConfig { seed: a.seed, retain_gap_mask: !a.no_gap_mask, n_sites: a.sites };
    let sim = simulate_matrix(&fit, &template, &cfg)?;
    Ok(Outcome {
        command: "simulate",
        config: to_value(a),
        seed: Some(a.seed),
        inputs: inputs.0,
        outputs: vec![Output {
            path: Some(a.out.clone()),
            body: Body::Json { schema: "relate.replicate/1", payload: json!({ "matrix": MatrixRecord::from_matrix(&sim) }) },
        }],
        stdout: Vec::new(),
    })
}

fn cmd_gqd(a: &GqdArgs) -> Result<Outcome> {
    let mut inputs = Inputs::default();
    let pred = parse_newick(&inputs.read_text("predicted", &a.predicted)?)?;
    let gold = parse_newick(&inputs.read_text("gold", &a.gold)?)?;
    let score = gqd(&pred, &gold)?;
    let outputs = vec![Output {
        path: a.out.clone(),
        body: Body::Json { schema: "relate.gqd/1", payload: to_value(&score) },
    }];
    Ok(Outcome {
        command: "gqd",
        config: to_value(a),
        seed: None,
        inputs: inputs.0,
        outputs,
        stdout: vec![format!("{:?}", score.gqd)],
    })
}

/// JSON safe inside a Newick comment or on one TSV line. Manifests hold no
/// arrays, so every bracket sits inside a string and can be escaped.
fn inline_json(v: &Value) -> String {
    serde_json::to_string(v).expect("manifest serializes").replace('[', "\\u005b").replace(']', "\\u005d")
}

fn render(body: &Body, manifest: &RunManifest) -> String {
    let m = to_value(manifest);
    match body {
        Body::Json { schema, payload } => {
            let mut obj = serde_json::Map::new();
            obj.insert("schema".into(), json!(schema));
            obj.insert("manifest".into(), m);
            if let Value::Object(fields) = payload {
                obj.extend(fields.clone());
            }
            let mut s = serde_json::to_string_pretty(&Value::Object(obj)).expect("report serializes");
            s.push('\n');
            s
        }
        Body::Newick { trees } => {
            let mut s = format!("[{NEWICK_TAG} {}]\n", inline_json(&m));
            for (label, t) in trees {
                if let Some(l) = label {
                    s.push_str(&format!("[{l}]"));
                }
                s.push_str(t);
                s.push('\n');
            }
            s
        }
        Body::Tsv { text } => format!("# {NEWICK_TAG} {}\n{text}", inline_json(&m)),
    }
}

fn manifest_of(o: &Outcome, timestamps: Timestamps) -> RunManifest {
    RunManifest {
        command: o.command.to_string(),
        config: o.config.clone(),
        inputs: o.inputs.clone(),
        seed: o.seed,
        version: env!("CARGO_PKG_VERSION").to_string(),
        timestamps,
    }
}

/// Pull the manifest out of any file written by this tool.
pub fn read_manifest(text: &str) -> Result<RunManifest> {
    let t = text.trim_start();
    let inline = |rest: &str, end: &str| -> Result<RunManifest> {
        let body = rest.split_once(end).map(|(b, _)| b).ok_or_else(|| Error::Schema("unterminated manifest".into()))?;
        Ok(serde_json::from_str(body.trim())?)
    };
    if t.starts_with('{') {
        let v: Value = serde_json::from_str(t)?;
        let m = v.get("manifest").cloned().ok_or_else(|| Error::Schema("no manifest in JSON".into()))?;
        Ok(serde_json::from_value(m)?)
    } else if let Some(rest) = t.strip_prefix(&format!("[{NEWICK_TAG}")) {
        inline(rest, "]")
    } else if let Some(rest) = t.strip_prefix(&format!("# {NEWICK_TAG}")) {
        inline(rest, "\n")
    } else {
        Err(Error::Schema("file carries no relate manifest".into()))
    }
}

fn compute(cmd: &Command) -> Result<Outcome> {
    match cmd {
        Command::Lrt(a) => cmd_lrt(a),
        Command::Permtest(a) => cmd_permtest(a),
        Command::Mltree(a) => cmd_mltree(a),
        Command::Simulate(a) => cmd_simulate(a),
        Command::Gqd(a) => cmd_gqd(a),
        Command::Replay(_) => unreachable!("replay is dispatched separately"),
    }
}

fn command_from_manifest(m: &RunManifest) -> Result<Command> {
    let c = m.config.clone();
    Ok(match m.command.as_str() {
        "lrt" => Command::Lrt(serde_json::from_value(c)?),
        "permtest" => Command::Permtest(serde_json::from_value(c)?),
        "mltree" => Command::Mltree(serde_json::from_value(c)?),
        "simulate" => Command::Simulate(serde_json::from_value(c)?),
        "gqd" => Command::Gqd(serde_json::from_value(c)?),
        other => return Err(Error::Schema(format!("unknown command {other:?} in manifest"))),
    })
}

/// Recompute `file` and compare. Writes nothing.
fn replay(a: &ReplayArgs) -> Result<bool> {
    let text = fs::read_to_string(&a.file).map_err(|source| Error::Io { path: a.file.clone(), source })?;
    let manifest = read_manifest(&text)?;
    let outcome = compute(&command_from_manifest(&manifest)?)?;
    if outcome.inputs != manifest.inputs {
        for (role, d) in &manifest.inputs {
            if outcome.inputs.get(role) != Some(d) {
                eprintln!("input {role} ({}) changed since the run", d.path);
            }
        }
        return Ok(false);
    }
    let again = manifest_of(&outcome, manifest.timestamps.clone());
    Ok(outcome.outputs.iter().any(|o| render(&o.body, &again) == text))
}

fn write_outputs(outcome: &Outcome, manifest: &RunManifest) -> Result<()> {
    for o in &outcome.outputs {
        if let Some(path) = &o.path {
            fs::write(path, render(&o.body, manifest)).map_err(|source| Error::Io { path: path.clone(), source })?;
        }
    }
    Ok(())
}

fn execute(cli: &Cli) -> Result<i32> {
    if let Command::Replay(a) = &cli.command {
        let same = replay(a)?;
        println!("{}", if same { "reproduced" } else { "differs" });
        return Ok(if same { 0 } else { 1 });
    }
    let started = now();
    let outcome = compute(&cli.command)?;
    let manifest = manifest_of(&outcome, Timestamps { started, finished: now() });
    write_outputs(&outcome, &manifest)?;
    for line in &outcome.stdout {
        println!("{line}");
    }
    Ok(0)
}

/// Parse `args` (program name first), run, and return the exit code:
/// 0 on success, 1 on usage or input errors, 2 on numerical failure.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { 1 } else { 0 };
        }
    };
    let mut pool = rayon::ThreadPoolBuilder::new();
    if let Some(n) = cli.threads {
        pool = pool.num_threads(n);
    }
    let result = match pool.build() {
        Ok(pool) => pool.install(|| execute(&cli)),
        Err(e) => Err(Error::domain(format!("thread pool: {e}"))),
    };
    match result {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            if e.is_numerical() {
                2
            } else {
                1
            }
        }
    }
}
