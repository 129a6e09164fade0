//! Text experiments: preprocessing, unsmoothed n-gram models, judge
//! protocols with a resumable label store, and the 7-tuple experiment.

use std::collections::{BTreeMap, HashMap, HashSet};
use std::fs::{File, OpenOptions};
use std::io::{BufRead, Read as _, Write};
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::{mpsc, OnceLock};
use std::time::{Duration, SystemTime, UNIX_EPOCH};

use rand::seq::SliceRandom;
use rand::Rng;
use regex::Regex;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::error::{Error, Result};
use crate::rng::{derive_seed, seeded};

pub const MAX_SENTENCE_TOKENS: usize = 20;
pub const MIN_ORDER: usize = 2;
pub const MAX_ORDER: usize = 7;
pub const MAX_TUPLE_ORDER: usize = 5;

/// Newline-delimited reviews bundled for smoke runs and tests.
pub const MINI_CORPUS: &str = include_str!("../data/mini_reviews.txt");

fn punctuation() -> &'static Regex {
    static RE: OnceLock<Regex> = OnceLock::new();
    RE.get_or_init(|| Regex::new(r"[\p{P}$+<=>^`|~]").unwrap())
}

/// A normalized sentence: lowercase, no punctuation, 1 to 20 tokens.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Sentence {
    pub tokens: Vec<String>,
    pub raw: String,
}

impl Sentence {
    fn from_tokens(tokens: Vec<String>) -> Self {
        let raw = tokens.join(" ");
        Sentence { tokens, raw }
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }
}

/// Lowercases, strips punctuation and ASCII symbols, and splits on
/// whitespace. Returns `None` unless the result has 1 to 20 tokens.
pub fn preprocess(raw_text: &str) -> Option<Sentence> {
    let lower = raw_text.to_lowercase();
    let stripped = punctuation().replace_all(&lower, "");
    let tokens: Vec<String> = stripped.split_whitespace().map(str::to_owned).collect();
    if tokens.is_empty() || tokens.len() > MAX_SENTENCE_TOKENS {
        return None;
    }
    Some(Sentence::from_tokens(tokens))
}

/// Preprocesses every line, dropping the ones that fail the filter.
pub fn preprocess_lines(text: &str) -> Vec<Sentence> {
    text.lines().filter_map(preprocess).collect()
}

pub fn load_sentences(path: &Path) -> Result<Vec<Sentence>> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    Ok(preprocess_lines(&text))
}

type TokenId = u32;
const BOS: TokenId = 0;
const EOS: TokenId = 1;

#[derive(Debug, Clone)]
struct NextTokens {
    tokens: Vec<TokenId>,
    cumulative: Vec<u64>,
}

impl NextTokens {
    fn total(&self) -> u64 {
        *self.cumulative.last().unwrap()
    }

    fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> TokenId {
        let u = rng.random_range(0..self.total());
        let i = self.cumulative.partition_point(|&c| c <= u);
        self.tokens[i]
    }
}

/// Maximum-likelihood n-gram model over interned tokens, padded with
/// `n - 1` BOS sentinels and one EOS.
#[derive(Debug, Clone)]
pub struct NgramModel {
    order: usize,
    vocab: Vec<String>,
    table: HashMap<Vec<TokenId>, NextTokens>,
}

impl NgramModel {
    /// Trains on raw token sequences. Empty sequences are skipped.
    pub fn train<S: AsRef<str>>(sequences: &[Vec<S>], n: usize) -> Result<Self> {
        if !(MIN_ORDER..=MAX_ORDER).contains(&n) {
            return Err(Error::param(format!("n-gram order {n} outside [{MIN_ORDER}, {MAX_ORDER}]")));
        }
        let mut vocab = vec!["<s>".to_owned(), "</s>".to_owned()];
        let mut ids: HashMap<String, TokenId> = HashMap::new();
        let mut counts: HashMap<Vec<TokenId>, BTreeMap<TokenId, u64>> = HashMap::new();
        let mut trained = 0usize;
        for seq in sequences.iter().filter(|s| !s.is_empty()) {
            let mut padded = vec![BOS; n - 1];
            for tok in seq {
                let tok = tok.as_ref();
                let id = match ids.get(tok) {
                    Some(&id) => id,
                    None => {
                        let id = vocab.len() as TokenId;
                        vocab.push(tok.to_owned());
                        ids.insert(tok.to_owned(), id);
                        id
                    }
                };
                padded.push(id);
            }
            padded.push(EOS);
            for w in padded.windows(n) {
                *counts
                    .entry(w[..n - 1].to_vec())
                    .or_default()
                    .entry(w[n - 1])
                    .or_default() += 1;
            }
            trained += 1;
        }
        if trained == 0 {
            return Err(Error::Empty("training corpus"));
        }
        let table = counts
            .into_iter()
            .map(|(ctx, next)| {
                let mut acc = 0;
                let (tokens, cumulative) = next
                    .into_iter()
                    .map(|(t, c)| {
                        acc += c;
                        (t, acc)
                    })
                    .unzip();
                (ctx, NextTokens { tokens, cumulative })
            })
            .collect();
        Ok(NgramModel { order: n, vocab, table })
    }

    pub fn order(&self) -> usize {
        self.order
    }

    /// Number of distinct word types, sentinels excluded.
    pub fn vocab_size(&self) -> usize {
        self.vocab.len() - 2
    }

    pub fn n_contexts(&self) -> usize {
        self.table.len()
    }

    fn id(&self, tok: &str) -> Option<TokenId> {
        match tok {
            "<s>" => Some(BOS),
            "</s>" => Some(EOS),
            _ => self.vocab.iter().skip(2).position(|v| v == tok).map(|i| i as TokenId + 2),
        }
    }

    /// `P(next | context)` as a count ratio. `context` must hold `n - 1`
    /// tokens; `<s>` and `</s>` name the sentinels. Unseen contexts give
    /// `None`.
    pub fn prob(&self, context: &[&str], next: &str) -> Option<f64> {
        if context.len() != self.order - 1 {
            return None;
        }
        let ctx: Option<Vec<TokenId>> = context.iter().map(|t| self.id(t)).collect();
        let row = self.table.get(&ctx?)?;
        let Some(next) = self.id(next) else {
            return Some(0.0);
        };
        let count = match row.tokens.iter().position(|&t| t == next) {
            Some(0) => row.cumulative[0],
            Some(i) => row.cumulative[i] - row.cumulative[i - 1],
            None => 0,
        };
        Some(count as f64 / row.total() as f64)
    }

    /// Ancestral sampling from the all-BOS context until EOS or `max_len`
    /// tokens.
    pub fn generate_tokens<R: Rng + ?Sized>(&self, rng: &mut R, max_len: usize) -> Vec<String> {
        let mut ctx = vec![BOS; self.order - 1];
        let mut out = Vec::new();
        while out.len() < max_len {
            let Some(row) = self.table.get(&ctx) else { break };
            let next = row.sample(rng);
            if next == EOS {
                break;
            }
            out.push(self.vocab[next as usize].clone());
            ctx.remove(0);
            ctx.push(next);
        }
        out
    }
}

pub fn train_ngram(sentences: &[Sentence], n: usize) -> Result<NgramModel> {
    let seqs: Vec<&Vec<String>> = sentences.iter().map(|s| &s.tokens).collect();
    let seqs: Vec<Vec<&str>> = seqs.iter().map(|t| t.iter().map(String::as_str).collect()).collect();
    NgramModel::train(&seqs, n)
}

pub fn generate<R: Rng + ?Sized>(model: &NgramModel, rng: &mut R, max_len: usize) -> Sentence {
    Sentence::from_tokens(model.generate_tokens(rng, max_len))
}

/// `count` generations, each drawn from its own stream derived from `seed`.
pub fn generate_many(model: &NgramModel, count: usize, max_len: usize, seed: u64) -> Vec<Sentence> {
    let mut rng = seeded(seed);
    (0..count).map(|_| generate(model, &mut rng, max_len)).collect()
}

const PROMPT_HEAD: &str = "Is the following text a review? Respond with a 1 if it is, or with a 0 if it isn't. ⟨BEGIN TEXT⟩ ";
const PROMPT_TAIL: &str = " ⟨END TEXT⟩";

pub fn judge_prompt(text: &str) -> Result<String> {
    if text.is_empty() {
        return Err(Error::Precondition("judge prompt needs nonempty text".into()));
    }
    Ok(format!("{PROMPT_HEAD}{text}{PROMPT_TAIL}"))
}

#[derive(Debug, Error)]
pub enum JudgeError {
    #[error("unparseable verdict in reply {raw:?}")]
    Unparseable { raw: String },
    #[error("authentication rejected (HTTP {status})")]
    Auth { status: u16 },
    #[error("HTTP {status}: {body}")]
    Http { status: u16, body: String },
    #[error("transport failure: {0}")]
    Transport(String),
    #[error("malformed response: {0}")]
    Response(String),
}

impl JudgeError {
    fn retryable(&self) -> bool {
        match self {
            JudgeError::Transport(_) => true,
            JudgeError::Http { status, .. } => *status == 429 || *status >= 500,
            _ => false,
        }
    }
}

/// First literal `0` or `1` in the reply.
pub fn parse_verdict(reply: &str) -> Result<u8, JudgeError> {
    reply
        .chars()
        .find_map(|c| match c {
            '0' => Some(0),
            '1' => Some(1),
            _ => None,
        })
        .ok_or_else(|| JudgeError::Unparseable { raw: reply.to_owned() })
}

fn default_key_env() -> String {
    "JUDGE_API_KEY".into()
}

fn default_timeout() -> u64 {
    30
}

fn default_in_flight() -> usize {
    4
}

/// OpenAI-style chat-completions endpoint.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct JudgeConfig {
    pub endpoint: String,
    pub model: String,
    #[serde(default = "default_key_env")]
    pub api_key_env: String,
    #[serde(default = "default_timeout")]
    pub timeout_secs: u64,
    #[serde(default = "default_in_flight")]
    pub max_in_flight: usize,
    #[serde(default)]
    pub debug_http: bool,
}

impl JudgeConfig {
    pub fn new(endpoint: impl Into<String>, model: impl Into<String>) -> Self {
        JudgeConfig {
            endpoint: endpoint.into(),
            model: model.into(),
            api_key_env: default_key_env(),
            timeout_secs: default_timeout(),
            max_in_flight: default_in_flight(),
            debug_http: false,
        }
    }
}

pub const JUDGE_ATTEMPTS: usize = 3;
const BACKOFF_BASE: Duration = Duration::from_millis(250);

fn post_once(agent: &ureq::Agent, cfg: &JudgeConfig, body: &serde_json::Value) -> Result<String, JudgeError> {
    let mut req = agent.post(&cfg.endpoint).header("Content-Type", "application/json");
    if let Ok(key) = std::env::var(&cfg.api_key_env) {
        req = req.header("Authorization", format!("Bearer {key}"));
    }
    if cfg.debug_http {
        eprintln!("> POST {} {}", cfg.endpoint, body);
    }
    let mut resp = req.send_json(body).map_err(|e| JudgeError::Transport(e.to_string()))?;
    let status = resp.status().as_u16();
    let text = resp
        .body_mut()
        .read_to_string()
        .map_err(|e| JudgeError::Transport(e.to_string()))?;
    if cfg.debug_http {
        eprintln!("< {status} {text}");
    }
    match status {
        200..=299 => {}
        401 | 403 => return Err(JudgeError::Auth { status }),
        _ => return Err(JudgeError::Http { status, body: text }),
    }
    let json: serde_json::Value = serde_json::from_str(&text).map_err(|e| JudgeError::Response(e.to_string()))?;
    json.pointer("/choices/0/message/content")
        .and_then(|v| v.as_str())
        .map(str::to_owned)
        .ok_or_else(|| JudgeError::Response(format!("no choices[0].message.content in {text}")))
}

fn agent(cfg: &JudgeConfig) -> ureq::Agent {
    ureq::Agent::config_builder()
        .timeout_global(Some(Duration::from_secs(cfg.timeout_secs)))
        .http_status_as_error(false)
        .build()
        .into()
}

fn judge_with(agent: &ureq::Agent, cfg: &JudgeConfig, text: &str) -> Result<u8, JudgeError> {
    let prompt = judge_prompt(text).map_err(|e| JudgeError::Response(e.to_string()))?;
    let body = serde_json::json!({
        "model": cfg.model,
        "messages": [{"role": "user", "content": prompt}],
        "temperature": 0,
    });
    let mut attempt = 0;
    loop {
        match post_once(agent, cfg, &body) {
            Ok(reply) => return parse_verdict(&reply),
            Err(e) if e.retryable() && attempt + 1 < JUDGE_ATTEMPTS => {
                std::thread::sleep(BACKOFF_BASE * 2u32.pow(attempt as u32));
                attempt += 1;
            }
            Err(e) => return Err(e),
        }
    }
}

/// Sends the judge prompt for `text` and parses the verdict, retrying
/// transport failures with exponential backoff.
pub fn remote_judge(cfg: &JudgeConfig, text: &str) -> Result<u8, JudgeError> {
    judge_with(&agent(cfg), cfg, text)
}

/// Judges every text with at most `cfg.max_in_flight` requests open.
/// `on_result` runs on the calling thread, in completion order.
pub fn judge_all<F>(cfg: &JudgeConfig, texts: &[String], mut on_result: F)
where
    F: FnMut(usize, Result<u8, JudgeError>),
{
    let agent = agent(cfg);
    let next = AtomicUsize::new(0);
    let workers = cfg.max_in_flight.clamp(1, texts.len().max(1));
    std::thread::scope(|s| {
        let (tx, rx) = mpsc::channel();
        for _ in 0..workers {
            let tx = tx.clone();
            let (agent, next) = (&agent, &next);
            s.spawn(move || loop {
                let i = next.fetch_add(1, Ordering::Relaxed);
                if i >= texts.len() {
                    break;
                }
                if tx.send((i, judge_with(agent, cfg, &texts[i]))).is_err() {
                    break;
                }
            });
        }
        drop(tx);
        for (i, r) in rx {
            on_result(i, r);
        }
    });
}

pub const HUMAN_JUDGE: &str = "human";

/// One verdict. `dup` marks statements found verbatim in the training data.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LabelRecord {
    pub text: String,
    pub judge: String,
    pub verdict: u8,
    pub ts: u64,
    pub dup: bool,
}

impl LabelRecord {
    pub fn new(text: impl Into<String>, judge: impl Into<String>, verdict: u8, dup: bool) -> Self {
        let ts = SystemTime::now()
            .duration_since(UNIX_EPOCH)
            .map_or(0, |d| d.as_secs());
        LabelRecord { text: text.into(), judge: judge.into(), verdict, ts, dup }
    }
}

/// Append-only JSONL file of [`LabelRecord`]s. Opening an existing file
/// drops a torn final line left by an interrupted write.
#[derive(Debug)]
pub struct LabelStore {
    path: PathBuf,
    file: File,
    records: Vec<LabelRecord>,
    seen: HashSet<(String, String)>,
}

impl LabelStore {
    pub fn open(path: &Path) -> Result<Self> {
        let mut file = OpenOptions::new()
            .read(true)
            .append(true)
            .create(true)
            .open(path)
            .map_err(|e| Error::io(path, e))?;
        let mut bytes = Vec::new();
        file.read_to_end(&mut bytes).map_err(|e| Error::io(path, e))?;
        let mut records = Vec::new();
        let mut valid = 0usize;
        let mut start = 0usize;
        while let Some(off) = bytes[start..].iter().position(|&b| b == b'\n') {
            let line = &bytes[start..start + off];
            let rec: LabelRecord = match serde_json::from_slice(line) {
                Ok(r) => r,
                Err(e) => {
                    return Err(Error::Parse {
                        location: format!("{}:{}", path.display(), records.len() + 1),
                        message: e.to_string(),
                    })
                }
            };
            if rec.verdict > 1 {
                return Err(Error::Parse {
                    location: format!("{}:{}", path.display(), records.len() + 1),
                    message: format!("verdict {} is not binary", rec.verdict),
                });
            }
            records.push(rec);
            start += off + 1;
            valid = start;
        }
        if valid < bytes.len() {
            file.set_len(valid as u64).map_err(|e| Error::io(path, e))?;
        }
        let seen = records.iter().map(|r| (r.text.clone(), r.judge.clone())).collect();
        Ok(LabelStore { path: path.to_owned(), file, records, seen })
    }

    pub fn records(&self) -> &[LabelRecord] {
        &self.records
    }

    pub fn contains(&self, text: &str, judge: &str) -> bool {
        self.seen.contains(&(text.to_owned(), judge.to_owned()))
    }

    pub fn verdict(&self, text: &str, judge: &str) -> Option<u8> {
        self.records
            .iter()
            .rev()
            .find(|r| r.text == text && r.judge == judge)
            .map(|r| r.verdict)
    }

    /// Writes one line and flushes it to disk.
    pub fn append(&mut self, rec: LabelRecord) -> Result<()> {
        if rec.verdict > 1 {
            return Err(Error::param(format!("verdict {} is not binary", rec.verdict)));
        }
        let mut line = serde_json::to_string(&rec)?;
        line.push('\n');
        self.file
            .write_all(line.as_bytes())
            .and_then(|_| self.file.sync_data())
            .map_err(|e| Error::io(&self.path, e))?;
        self.seen.insert((rec.text.clone(), rec.judge.clone()));
        self.records.push(rec);
        Ok(())
    }

    /// Judges present in the store, sorted.
    pub fn judges(&self) -> Vec<String> {
        let mut j: Vec<String> = self.records.iter().map(|r| r.judge.clone()).collect();
        j.sort();
        j.dedup();
        j
    }
}

/// A statement queued for judging.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Statement {
    pub text: String,
    pub dup: bool,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct LabelStats {
    pub labeled_now: usize,
    pub skipped_training: usize,
    pub skipped_repeat: usize,
    pub already_labeled: usize,
    pub total_labeled: usize,
    pub zeros: usize,
    /// Fraction of the judge's verdicts that are 0; `None` with no labels.
    pub rate: Option<f64>,
    pub quit: bool,
}

/// Presents each statement on `output` and reads `0`, `1` or `q` lines
/// from `input`. Statements found in the training data, repeats, and
/// statements already in the store are skipped.
pub fn interactive_label<I: BufRead, O: Write>(
    statements: &[Statement],
    store: &mut LabelStore,
    mut input: I,
    mut output: O,
) -> Result<LabelStats> {
    let mut stats = LabelStats::default();
    let mut shown: HashSet<&str> = HashSet::new();
    let out_err = |e| Error::io("<output>", e);
    'items: for st in statements {
        if st.dup {
            stats.skipped_training += 1;
            continue;
        }
        if !shown.insert(&st.text) {
            stats.skipped_repeat += 1;
            continue;
        }
        if store.contains(&st.text, HUMAN_JUDGE) {
            stats.already_labeled += 1;
            continue;
        }
        loop {
            write!(output, "{}\n[0/1/q] > ", st.text).map_err(out_err)?;
            output.flush().map_err(out_err)?;
            let mut line = String::new();
            if input.read_line(&mut line).map_err(|e| Error::io("<input>", e))? == 0 {
                stats.quit = true;
                break 'items;
            }
            let verdict = match line.trim() {
                "0" => 0,
                "1" => 1,
                "q" => {
                    stats.quit = true;
                    break 'items;
                }
                _ => {
                    writeln!(output, "enter 0, 1 or q").map_err(out_err)?;
                    continue;
                }
            };
            store.append(LabelRecord::new(st.text.clone(), HUMAN_JUDGE, verdict, false))?;
            stats.labeled_now += 1;
            break;
        }
    }
    let human: Vec<&LabelRecord> = store.records().iter().filter(|r| r.judge == HUMAN_JUDGE).collect();
    stats.total_labeled = human.len();
    stats.zeros = human.iter().filter(|r| r.verdict == 0).count();
    stats.rate = (stats.total_labeled > 0).then(|| stats.zeros as f64 / stats.total_labeled as f64);
    Ok(stats)
}

/// One row of the 7-tuple dataset.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct TupleRecord {
    #[serde(rename = "Name")]
    pub name: String,
    #[serde(rename = "DOB")]
    pub dob: String,
    #[serde(rename = "Birthplace")]
    pub birthplace: String,
    #[serde(rename = "Degree")]
    pub degree: String,
    #[serde(rename = "College/University")]
    pub college: String,
    #[serde(rename = "Job")]
    pub job: String,
    #[serde(rename = "Employer")]
    pub employer: String,
}

impl TupleRecord {
    pub fn fields(&self) -> [&str; 7] {
        [
            &self.name,
            &self.dob,
            &self.birthplace,
            &self.degree,
            &self.college,
            &self.job,
            &self.employer,
        ]
    }

    fn validate(&self) -> std::result::Result<(), String> {
        match self.fields().iter().position(|f| f.trim().is_empty()) {
            Some(i) => Err(format!("field {i} is empty")),
            None => Ok(()),
        }
    }

    fn tagged(&self) -> Vec<String> {
        self.fields()
            .iter()
            .enumerate()
            .map(|(i, f)| format!("{i}\u{1f}{f}"))
            .collect()
    }
}

pub fn load_tuples(path: &Path) -> Result<Vec<TupleRecord>> {
    let mut rdr = csv::Reader::from_path(path)?;
    let mut out = Vec::new();
    for (i, row) in rdr.deserialize::<TupleRecord>().enumerate() {
        let rec = row?;
        rec.validate().map_err(|message| Error::Parse {
            location: format!("{}:{}", path.display(), i + 2),
            message,
        })?;
        out.push(rec);
    }
    Ok(out)
}

pub fn save_tuples(path: &Path, tuples: &[TupleRecord]) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    for t in tuples {
        w.serialize(t)?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

const FIRST: &[&str] = &[
    "Ada", "Bela", "Cyrus", "Dana", "Emil", "Farah", "Gus", "Hana", "Ivo", "Jun", "Kira", "Leon", "Mina",
    "Nils", "Oona", "Pavel", "Quinn", "Rosa", "Sami", "Tara", "Uma", "Viktor", "Wren", "Xena", "Yusuf",
    "Zoe", "Anik", "Bruno", "Celia", "Dario", "Elin", "Felix", "Greta", "Hugo", "Iris", "Jonas", "Kofi",
    "Lena", "Marek", "Nadia",
];
const LAST: &[&str] = &[
    "Abe", "Brandt", "Costa", "Dietz", "Evans", "Fischer", "Garcia", "Horvat", "Ito", "Jensen", "Kowalski",
    "Larsen", "Moreau", "Novak", "Okafor", "Petrov", "Quispe", "Rossi", "Silva", "Tanaka", "Ueda", "Varga",
    "Weber", "Xu", "Yilmaz", "Zapata", "Adler", "Berg", "Cho", "Dubois", "Eriksen", "Ferreira", "Gruber",
    "Hahn", "Ibarra", "Jovanovic", "Kim", "Lindqvist", "Meyer", "Nakamura", "Olsen", "Park", "Quinn",
    "Rahman", "Sato", "Torres", "Urban", "Vogel", "Walsh", "Young",
];
const PLACE_HEADS: &[&str] = &[
    "North", "South", "East", "West", "New", "Port", "Fort", "Lake", "Mount", "Glen", "Spring", "River",
    "Stone", "Oak", "Maple", "Cedar", "Pine", "Elm", "Ash", "Fair",
];
const PLACE_TAILS: &[&str] = &[
    "field", "ville", "ton", "burg", "haven", "ford", "port", "wood", "dale", "view", "bridge", "mouth",
    "brook", "stead", "wick", "minster", "borough", "chester", "land", "side",
];
const DEGREES: &[&str] = &["BA", "BSc", "BEng", "MA", "MSc", "MBA", "PhD", "JD"];
const COLLEGE_KINDS: &[&str] = &[
    "University", "College", "Institute of Technology", "State University", "Polytechnic",
];
const JOBS: &[&str] = &[
    "Accountant", "Actuary", "Architect", "Biologist", "Chemist", "Civil Engineer", "Data Analyst", "Dentist",
    "Economist", "Editor", "Electrician", "Geologist", "Historian", "Journalist", "Lawyer", "Librarian",
    "Nurse", "Pharmacist", "Physicist", "Pilot", "Surveyor", "Teacher", "Translator", "Urban Planner",
    "Veterinarian", "Welder", "Archivist", "Cartographer", "Curator", "Dietitian", "Ecologist", "Firefighter",
    "Glazier", "Hydrologist", "Illustrator", "Machinist", "Optician", "Paramedic", "Radiographer", "Statistician",
];
const INDUSTRIES: &[&str] = &[
    "Labs", "Systems", "Health", "Foods", "Energy", "Bank", "Pharma", "Motors", "Media", "Logistics", "Optics",
    "Law", "Air", "Retail", "Schools", "Mining", "Networks", "Insurance", "Shipping", "Studios",
];

/// `count` synthetic 7-tuples with distinct names. Dates of birth span
/// 1950 to 1999. Birthplaces (400), colleges (2000) and employers (1000)
/// are composed from parts; degrees (8) and jobs (40) come from short
/// lists.
pub fn synthetic_tuples(count: usize, seed: u64) -> Result<Vec<TupleRecord>> {
    let capacity = FIRST.len() * LAST.len();
    if count > capacity {
        return Err(Error::param(format!("at most {capacity} synthetic tuples")));
    }
    let mut rng = seeded(seed);
    let mut names: Vec<(usize, usize)> = (0..FIRST.len())
        .flat_map(|i| (0..LAST.len()).map(move |j| (i, j)))
        .collect();
    names.shuffle(&mut rng);
    let pick = |pool: &[&str], rng: &mut crate::rng::SimRng| pool[rng.random_range(0..pool.len())].to_owned();
    Ok(names[..count]
        .iter()
        .map(|&(i, j)| {
            let dob = format!(
                "{}-{:02}-{:02}",
                rng.random_range(1950..2000),
                rng.random_range(1..=12),
                rng.random_range(1..=28)
            );
            let place = |rng: &mut crate::rng::SimRng| pick(PLACE_HEADS, rng) + &pick(PLACE_TAILS, rng);
            let birthplace = place(&mut rng);
            let degree = pick(DEGREES, &mut rng);
            let college = format!("{} {}", place(&mut rng), pick(COLLEGE_KINDS, &mut rng));
            let job = pick(JOBS, &mut rng);
            let employer = format!("{} {}", pick(LAST, &mut rng), pick(INDUSTRIES, &mut rng));
            TupleRecord {
                name: format!("{} {}", FIRST[i], LAST[j]),
                dob,
                birthplace,
                degree,
                college,
                job,
                employer,
            }
        })
        .collect())
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TupleReport {
    pub n: usize,
    pub corpus_size: usize,
    pub distinct_in_corpus: usize,
    pub generations: usize,
    pub innovations: usize,
    pub hallucinations: usize,
    pub innovation_rate: f64,
    pub hallucination_rate: f64,
}

/// Samples a training corpus of `corpus_size` tuples with replacement,
/// trains an order-`n` model over the 7 field-tagged tokens, and counts
/// generations absent from the corpus (innovations) and absent from the
/// dataset (hallucinations).
pub fn run_tuple_experiment(
    dataset: &[TupleRecord],
    corpus_size: usize,
    n: usize,
    generations: usize,
    seed: u64,
) -> Result<TupleReport> {
    if dataset.is_empty() {
        return Err(Error::Empty("tuple dataset"));
    }
    if !(MIN_ORDER..=MAX_TUPLE_ORDER).contains(&n) {
        return Err(Error::param(format!("tuple n-gram order {n} outside [{MIN_ORDER}, {MAX_TUPLE_ORDER}]")));
    }
    if corpus_size == 0 || generations == 0 {
        return Err(Error::param("corpus size and generation count must be positive"));
    }
    let mut rng = seeded(derive_seed(seed, 0));
    let corpus: Vec<Vec<String>> = (0..corpus_size)
        .map(|_| dataset[rng.random_range(0..dataset.len())].tagged())
        .collect();
    let model = NgramModel::train(&corpus, n)?;
    let training: HashSet<&Vec<String>> = corpus.iter().collect();
    let full: HashSet<Vec<String>> = dataset.iter().map(TupleRecord::tagged).collect();
    let mut rng = seeded(derive_seed(seed, n as u64));
    let (mut innovations, mut hallucinations) = (0, 0);
    for _ in 0..generations {
        let g = model.generate_tokens(&mut rng, 7);
        innovations += usize::from(!training.contains(&g));
        hallucinations += usize::from(!full.contains(&g));
    }
    Ok(TupleReport {
        n,
        corpus_size,
        distinct_in_corpus: training.len(),
        generations,
        innovations,
        hallucinations,
        innovation_rate: innovations as f64 / generations as f64,
        hallucination_rate: hallucinations as f64 / generations as f64,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::measures::empirical_innovation_rate;
    use std::io::Cursor;

    fn s(text: &str) -> Sentence {
        preprocess(text).unwrap()
    }

    #[test]
    fn preprocess_examples() {
        assert_eq!(s("Great phone!!!").tokens, vec!["great", "phone"]);
        assert_eq!(s("  It's «fine», I guess… ").tokens, vec!["its", "fine", "i", "guess"]);
        assert_eq!(s("cost $5 + tax").tokens, vec!["cost", "5", "tax"]);
        let long = vec!["word"; 21].join(" ");
        assert!(preprocess(&long).is_none());
        assert_eq!(preprocess(&vec!["word"; 20].join(" ")).unwrap().len(), 20);
        assert!(preprocess("").is_none());
        assert!(preprocess("?!...").is_none());
    }

    #[test]
    fn preprocess_is_idempotent_on_corpus() {
        for sent in preprocess_lines(MINI_CORPUS) {
            assert_eq!(preprocess(&sent.raw).unwrap(), sent);
        }
    }

    #[test]
    fn bigram_single_path() {
        let m = train_ngram(&[s("a b")], 2).unwrap();
        assert_eq!(m.prob(&["<s>"], "a"), Some(1.0));
        assert_eq!(m.prob(&["a"], "b"), Some(1.0));
        assert_eq!(m.prob(&["b"], "</s>"), Some(1.0));
        assert_eq!(m.prob(&["c"], "b"), None);
        let mut rng = seeded(5);
        for _ in 0..20 {
            assert_eq!(generate(&m, &mut rng, 20).raw, "a b");
        }
    }

    #[test]
    fn counts_are_ratios() {
        let m = train_ngram(&[s("a b"), s("a c"), s("a b")], 2).unwrap();
        assert!((m.prob(&["a"], "b").unwrap() - 2.0 / 3.0).abs() < 1e-15);
        assert!((m.prob(&["a"], "c").unwrap() - 1.0 / 3.0).abs() < 1e-15);
        let tri = train_ngram(&[s("x y z")], 3).unwrap();
        assert_eq!(tri.prob(&["<s>", "<s>"], "x"), Some(1.0));
        assert_eq!(tri.prob(&["y", "z"], "</s>"), Some(1.0));
        assert_eq!(tri.vocab_size(), 3);
    }

    #[test]
    fn unseen_context_is_unreachable() {
        let m = train_ngram(&[s("a b c"), s("d e")], 2).unwrap();
        let mut rng = seeded(1);
        for _ in 0..200 {
            let g = generate(&m, &mut rng, 20);
            assert!(g.raw == "a b c" || g.raw == "d e");
        }
    }

    #[test]
    fn order_and_corpus_preconditions() {
        assert!(train_ngram(&[s("a")], 1).is_err());
        assert!(train_ngram(&[s("a")], 8).is_err());
        assert!(matches!(train_ngram(&[], 2), Err(Error::Empty(_))));
    }

    #[test]
    fn generation_is_deterministic_and_bounded() {
        let sents = preprocess_lines(MINI_CORPUS);
        let m = train_ngram(&sents, 2).unwrap();
        assert_eq!(generate_many(&m, 50, 20, 9), generate_many(&m, 50, 20, 9));
        let mut rng = seeded(3);
        for _ in 0..500 {
            let g = generate(&m, &mut rng, 5);
            assert!(g.len() <= 5);
            assert!(!g.is_empty());
        }
    }

    #[test]
    fn low_order_innovates_more_on_bundled_corpus() {
        let sents = preprocess_lines(MINI_CORPUS);
        assert!(sents.len() >= 100);
        let training: HashSet<String> = sents.iter().map(|s| s.raw.clone()).collect();
        let rate = |n| {
            let m = train_ngram(&sents, n).unwrap();
            let gens: Vec<String> = generate_many(&m, 500, 20, 17).into_iter().map(|g| g.raw).collect();
            empirical_innovation_rate(&gens, &training).unwrap()
        };
        let (r2, r7) = (rate(2), rate(7));
        assert!(r2 > r7, "n=2 rate {r2} vs n=7 rate {r7}");
    }

    #[test]
    fn prompt_template() {
        let p = judge_prompt("good food").unwrap();
        assert!(p.contains("⟨BEGIN TEXT⟩ good food ⟨END TEXT⟩"));
        assert!(p.starts_with("Is the following text a review? Respond with a 1 if it is, or with a 0 if it isn't."));
        let q = judge_prompt("other").unwrap();
        assert_eq!(p.strip_suffix("good food ⟨END TEXT⟩"), q.strip_suffix("other ⟨END TEXT⟩"));
        assert!(judge_prompt("").is_err());
    }

    #[test]
    fn verdict_parsing() {
        assert_eq!(parse_verdict("1").unwrap(), 1);
        assert_eq!(parse_verdict("Answer: 0.").unwrap(), 0);
        assert_eq!(parse_verdict("10").unwrap(), 1);
        assert!(matches!(parse_verdict("maybe"), Err(JudgeError::Unparseable { raw }) if raw == "maybe"));
    }

    #[test]
    fn store_round_trips_bytes() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("labels.jsonl");
        let recs = vec![
            LabelRecord { text: "good food".into(), judge: "human".into(), verdict: 1, ts: 7, dup: false },
            LabelRecord { text: "ünïcode \"quoted\"".into(), judge: "m".into(), verdict: 0, ts: 8, dup: true },
        ];
        {
            let mut st = LabelStore::open(&path).unwrap();
            for r in &recs {
                st.append(r.clone()).unwrap();
            }
        }
        let bytes = std::fs::read(&path).unwrap();
        let st = LabelStore::open(&path).unwrap();
        assert_eq!(st.records(), &recs[..]);
        let rewritten: String = st
            .records()
            .iter()
            .map(|r| serde_json::to_string(r).unwrap() + "\n")
            .collect();
        assert_eq!(rewritten.as_bytes(), &bytes[..]);
        assert_eq!(st.verdict("good food", "human"), Some(1));
        assert_eq!(st.judges(), vec!["human", "m"]);
    }

    #[test]
    fn store_drops_torn_tail() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("labels.jsonl");
        let good = serde_json::to_string(&LabelRecord::new("a", "human", 1, false)).unwrap();
        std::fs::write(&path, format!("{good}\n{{\"text\":\"b\",\"jud")).unwrap();
        let mut st = LabelStore::open(&path).unwrap();
        assert_eq!(st.records().len(), 1);
        st.append(LabelRecord::new("b", "human", 0, false)).unwrap();
        drop(st);
        let st = LabelStore::open(&path).unwrap();
        assert_eq!(st.records().len(), 2);
        std::fs::write(&path, "not json\n").unwrap();
        assert!(matches!(LabelStore::open(&path), Err(Error::Parse { .. })));
    }

    fn items(texts: &[(&str, bool)]) -> Vec<Statement> {
        texts.iter().map(|&(t, dup)| Statement { text: t.into(), dup }).collect()
    }

    #[test]
    fn interactive_rates() {
        let dir = tempfile::tempdir().unwrap();
        let mut st = LabelStore::open(&dir.path().join("a.jsonl")).unwrap();
        let stats = interactive_label(&[], &mut st, Cursor::new(""), Vec::new()).unwrap();
        assert_eq!(stats.total_labeled, 0);
        assert_eq!(stats.rate, None);

        let texts: Vec<String> = (0..10).map(|i| format!("s{i}")).collect();
        let list: Vec<Statement> = texts.iter().map(|t| Statement { text: t.clone(), dup: false }).collect();
        let mut st = LabelStore::open(&dir.path().join("b.jsonl")).unwrap();
        let stats = interactive_label(&list, &mut st, Cursor::new("1\n".repeat(10)), Vec::new()).unwrap();
        assert_eq!(stats.labeled_now, 10);
        assert_eq!(stats.rate, Some(0.0));
    }

    #[test]
    fn interactive_skips_and_reprompts() {
        let dir = tempfile::tempdir().unwrap();
        let mut st = LabelStore::open(&dir.path().join("l.jsonl")).unwrap();
        let list = items(&[("a", false), ("b", true), ("a", false), ("c", false)]);
        let mut out = Vec::new();
        let stats = interactive_label(&list, &mut st, Cursor::new("x\n0\n1\n"), &mut out).unwrap();
        assert_eq!((stats.labeled_now, stats.skipped_training, stats.skipped_repeat), (2, 1, 1));
        assert_eq!(stats.rate, Some(0.5));
        assert!(String::from_utf8(out).unwrap().contains("enter 0, 1 or q"));
    }

    #[test]
    fn interactive_resumes_without_duplicates() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("l.jsonl");
        let list = items(&[("a", false), ("b", false), ("c", false), ("d", false)]);
        {
            let mut st = LabelStore::open(&path).unwrap();
            let stats = interactive_label(&list, &mut st, Cursor::new("0\n1\n"), Vec::new()).unwrap();
            assert!(stats.quit);
        }
        let mut bytes = std::fs::read(&path).unwrap();
        bytes.extend_from_slice(b"{\"text\":\"c\",\"judge\":\"hu");
        std::fs::write(&path, bytes).unwrap();
        let mut st = LabelStore::open(&path).unwrap();
        let mut out = Vec::new();
        let stats = interactive_label(&list, &mut st, Cursor::new("0\n0\n"), &mut out).unwrap();
        assert_eq!(stats.already_labeled, 2);
        assert_eq!(stats.labeled_now, 2);
        assert!(String::from_utf8(out).unwrap().starts_with("c\n"));
        let texts: Vec<&str> = st.records().iter().map(|r| r.text.as_str()).collect();
        assert_eq!(texts, vec!["a", "b", "c", "d"]);
        assert_eq!(stats.rate, Some(0.75));
    }

    #[test]
    fn synthetic_tuples_are_valid_and_distinct() {
        let t = synthetic_tuples(2000, 1).unwrap();
        let names: HashSet<&str> = t.iter().map(|r| r.name.as_str()).collect();
        assert_eq!(names.len(), 2000);
        assert!(t.iter().all(|r| r.validate().is_ok()));
        assert_eq!(t, synthetic_tuples(2000, 1).unwrap());
        assert!(synthetic_tuples(FIRST.len() * LAST.len() + 1, 1).is_err());
    }

    #[test]
    fn tuple_csv_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("t.csv");
        let t = synthetic_tuples(20, 2).unwrap();
        save_tuples(&path, &t).unwrap();
        let header = std::fs::read_to_string(&path).unwrap();
        assert!(header.starts_with("Name,DOB,Birthplace,Degree,College/University,Job,Employer\n"));
        assert_eq!(load_tuples(&path).unwrap(), t);
        std::fs::write(&path, "Name,DOB,Birthplace,Degree,College/University,Job,Employer\na,b,,d,e,f,g\n").unwrap();
        assert!(matches!(load_tuples(&path), Err(Error::Parse { .. })));
    }

    #[test]
    fn tuple_experiment_basics() {
        assert!(run_tuple_experiment(&[], 10, 2, 10, 0).is_err());
        let t = synthetic_tuples(200, 3).unwrap();
        assert!(run_tuple_experiment(&t, 10, 6, 10, 0).is_err());
        for n in 2..=5 {
            let r = run_tuple_experiment(&t, 400, n, 300, 4).unwrap();
            assert!(r.hallucinations <= r.innovations);
            assert_eq!(r, run_tuple_experiment(&t, 400, n, 300, 4).unwrap());
        }
        let one = synthetic_tuples(1, 0).unwrap();
        let r = run_tuple_experiment(&one, 5, 2, 50, 0).unwrap();
        assert_eq!((r.innovations, r.hallucinations), (0, 0));
    }
}
