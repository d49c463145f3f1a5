//! Corpora, featurization, and the two update scenarios.

use std::collections::{BTreeSet, HashMap};
use std::fs::File;
use std::io::{BufRead, BufReader};
use std::path::Path;

use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{Sample, SparseFeatures};
use crate::rng;

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Example {
    pub text: String,
    pub label: String,
}

/// Examples plus a label ↔ id bijection with ids `0..C`.
#[derive(Clone, Debug, PartialEq)]
pub struct LabeledDataset {
    examples: Vec<Example>,
    labels: Vec<String>,
    ids: HashMap<String, usize>,
}

impl LabeledDataset {
    /// Label ids are assigned by first appearance.
    pub fn new(examples: Vec<Example>) -> Result<Self> {
        let mut labels = Vec::new();
        let mut ids = HashMap::new();
        for ex in &examples {
            validate_example(ex)?;
            if !ids.contains_key(&ex.label) {
                ids.insert(ex.label.clone(), labels.len());
                labels.push(ex.label.clone());
            }
        }
        Ok(LabeledDataset { examples, labels, ids })
    }

    /// Uses an explicit label order; every example label must appear in it.
    pub fn with_labels(examples: Vec<Example>, labels: Vec<String>) -> Result<Self> {
        let ids: HashMap<String, usize> = labels.iter().enumerate().map(|(i, l)| (l.clone(), i)).collect();
        if ids.len() != labels.len() {
            return Err(Error::invalid("duplicate label in label order"));
        }
        for ex in &examples {
            validate_example(ex)?;
            if !ids.contains_key(&ex.label) {
                return Err(Error::invalid(format!("label {:?} missing from label order", ex.label)));
            }
        }
        Ok(LabeledDataset { examples, labels, ids })
    }

    pub fn examples(&self) -> &[Example] {
        &self.examples
    }

    pub fn labels(&self) -> &[String] {
        &self.labels
    }

    pub fn num_classes(&self) -> usize {
        self.labels.len()
    }

    pub fn len(&self) -> usize {
        self.examples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.examples.is_empty()
    }

    pub fn label_id(&self, label: &str) -> Option<usize> {
        self.ids.get(label).copied()
    }

    /// Class id of example `i`.
    pub fn class_of(&self, i: usize) -> usize {
        self.ids[&self.examples[i].label]
    }
}

fn validate_example(ex: &Example) -> Result<()> {
    if ex.text.trim().is_empty() {
        return Err(Error::invalid("example text is empty"));
    }
    if ex.label.is_empty() {
        return Err(Error::invalid("example label is empty"));
    }
    Ok(())
}

/// Reads one JSON object per line. Blank lines are skipped.
pub fn load_jsonl(path: &Path, text_field: &str, label_field: &str) -> Result<LabeledDataset> {
    let reader = BufReader::new(File::open(path)?);
    let parse_err = |line: usize, msg: String| Error::Parse {
        path: path.to_path_buf(),
        line,
        msg,
    };
    let mut examples = Vec::new();
    for (i, line) in reader.lines().enumerate() {
        let line_no = i + 1;
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let value: serde_json::Value = serde_json::from_str(&line).map_err(|e| parse_err(line_no, e.to_string()))?;
        let field = |name: &str| -> Result<String> {
            match value.get(name) {
                Some(serde_json::Value::String(s)) => Ok(s.clone()),
                Some(serde_json::Value::Number(n)) => Ok(n.to_string()),
                Some(_) => Err(parse_err(line_no, format!("field {name:?} is not a string"))),
                None => Err(parse_err(line_no, format!("missing field {name:?}"))),
            }
        };
        let example = Example {
            text: field(text_field)?,
            label: field(label_field)?,
        };
        validate_example(&example).map_err(|e| parse_err(line_no, e.to_string()))?;
        examples.push(example);
    }
    if examples.is_empty() {
        return Err(Error::Empty("jsonl file"));
    }
    LabeledDataset::new(examples)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct FeaturizerConfig {
    pub hash_buckets: usize,
    pub ngram_max: usize,
    pub hash_seed: u64,
}

impl Default for FeaturizerConfig {
    fn default() -> Self {
        FeaturizerConfig {
            hash_buckets: 1 << 15,
            ngram_max: 1,
            hash_seed: 0,
        }
    }
}

impl FeaturizerConfig {
    pub fn validate(&self) -> Result<()> {
        if self.hash_buckets < 2 {
            return Err(Error::invalid("hash_buckets must be at least 2"));
        }
        if !(1..=2).contains(&self.ngram_max) {
            return Err(Error::invalid("ngram_max must be 1 or 2"));
        }
        Ok(())
    }

    /// Bucket of an n-gram (tokens joined by a single space):
    /// `splitmix64(fnv1a64(basis = splitmix64(hash_seed), utf8)) mod D`.
    pub fn bucket(&self, ngram: &str) -> usize {
        let basis = rng::splitmix64(self.hash_seed);
        let h = rng::splitmix64(rng::fnv1a64_with(basis, ngram.as_bytes()));
        (h % self.hash_buckets as u64) as usize
    }
}

/// Lowercases and splits on anything that is not alphanumeric.
pub fn tokenize(text: &str) -> Vec<String> {
    text.split(|c: char| !c.is_alphanumeric())
        .filter(|t| !t.is_empty())
        .map(str::to_lowercase)
        .collect()
}

pub fn featurize_text(text: &str, cfg: &FeaturizerConfig) -> SparseFeatures {
    let tokens = tokenize(text);
    let mut pairs: Vec<(usize, f64)> = tokens.iter().map(|t| (cfg.bucket(t), 1.0)).collect();
    if cfg.ngram_max >= 2 {
        for w in tokens.windows(2) {
            pairs.push((cfg.bucket(&format!("{} {}", w[0], w[1])), 1.0));
        }
    }
    // A text that tokenizes to nothing yields an empty feature vector.
    SparseFeatures::from_pairs(pairs).expect("hashed pairs are valid")
}

pub fn featurize(ds: &LabeledDataset, cfg: &FeaturizerConfig) -> Result<Vec<Sample>> {
    cfg.validate()?;
    Ok(ds
        .examples
        .iter()
        .map(|ex| (featurize_text(&ex.text, cfg), ds.ids[&ex.label]))
        .collect())
}

const SYNTH_MIN_LEN: usize = 3;
const SYNTH_MAX_LEN: usize = 7;
const SYNTH_NOISE_VOCAB: usize = 40;

/// Synthetic corpus with one disjoint signature vocabulary per class.
///
/// Each text has 3–7 tokens. Every token is, with probability `noise_rate`,
/// a word from a shared 40-word noise pool, otherwise a uniformly drawn word
/// from the class's own vocabulary. Examples are interleaved by class.
pub fn synth_generate(num_classes: usize, per_class: usize, vocab_per_class: usize, noise_rate: f64, seed: u64) -> Result<LabeledDataset> {
    if num_classes < 2 {
        return Err(Error::invalid("num_classes must be at least 2"));
    }
    if vocab_per_class < 1 {
        return Err(Error::invalid("vocab_per_class must be at least 1"));
    }
    if !(0.0..1.0).contains(&noise_rate) {
        return Err(Error::invalid("noise_rate must be in [0, 1)"));
    }
    let mut rng = rng::stream(seed, "synth/corpus");
    let mut examples = Vec::with_capacity(num_classes * per_class);
    for _ in 0..per_class {
        for class in 0..num_classes {
            let len = rng.random_range(SYNTH_MIN_LEN..=SYNTH_MAX_LEN);
            let mut words = Vec::with_capacity(len);
            let mut has_signature = false;
            for k in 0..len {
                // at least one signature word so noise_rate = 0 stays separable
                // and every text carries some class evidence
                let force = k + 1 == len && !has_signature;
                if !force && rng.random_bool(noise_rate) {
                    words.push(format!("n{}", rng.random_range(0..SYNTH_NOISE_VOCAB)));
                } else {
                    has_signature = true;
                    words.push(format!("c{class}w{}", rng.random_range(0..vocab_per_class)));
                }
            }
            examples.push(Example {
                text: words.join(" "),
                label: format!("class_{class}"),
            });
        }
    }
    LabeledDataset::new(examples)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ScenarioKind {
    AddData,
    AddClasses,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct SplitSizes {
    pub old_train: usize,
    pub new_train: usize,
    pub old_dev: usize,
    pub new_dev: usize,
    pub test: usize,
}

impl SplitSizes {
    pub fn total(&self) -> usize {
        self.old_train + self.new_train + self.old_dev + self.new_dev + self.test
    }
}

/// Index-level description of a scenario: which source examples land in
/// which split, and the class order (old classes first).
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ScenarioManifest {
    pub kind: ScenarioKind,
    pub labels: Vec<String>,
    pub old_classes: Vec<usize>,
    pub new_classes: Vec<usize>,
    pub old_train: Vec<usize>,
    pub old_dev: Vec<usize>,
    pub new_train: Vec<usize>,
    pub new_dev: Vec<usize>,
    pub test: Vec<usize>,
}

impl ScenarioManifest {
    fn splits(&self) -> [(&'static str, &[usize]); 5] {
        [
            ("old_train", &self.old_train),
            ("old_dev", &self.old_dev),
            ("new_train", &self.new_train),
            ("new_dev", &self.new_dev),
            ("test", &self.test),
        ]
    }
}

/// A materialized scenario over a source dataset.
#[derive(Clone, Debug)]
pub struct ScenarioSplit {
    pub kind: ScenarioKind,
    pub old_train: LabeledDataset,
    pub old_dev: LabeledDataset,
    pub new_train: LabeledDataset,
    pub new_dev: LabeledDataset,
    pub test: LabeledDataset,
    pub old_classes: Vec<usize>,
    pub new_classes: Vec<usize>,
    manifest: ScenarioManifest,
}

impl ScenarioSplit {
    /// Rebuilds the splits from a manifest, validating every invariant.
    pub fn from_manifest(source: &LabeledDataset, manifest: ScenarioManifest) -> Result<Self> {
        for (name, idx) in manifest.splits() {
            if let Some(&bad) = idx.iter().find(|&&i| i >= source.len()) {
                return Err(Error::invalid(format!("{name} index {bad} out of range")));
            }
        }
        let take = |idx: &[usize]| {
            LabeledDataset::with_labels(idx.iter().map(|&i| source.examples[i].clone()).collect(), manifest.labels.clone())
        };
        let split = ScenarioSplit {
            kind: manifest.kind,
            old_train: take(&manifest.old_train)?,
            old_dev: take(&manifest.old_dev)?,
            new_train: take(&manifest.new_train)?,
            new_dev: take(&manifest.new_dev)?,
            test: take(&manifest.test)?,
            old_classes: manifest.old_classes.clone(),
            new_classes: manifest.new_classes.clone(),
            manifest,
        };
        split.validate()?;
        Ok(split)
    }

    pub fn manifest(&self) -> &ScenarioManifest {
        &self.manifest
    }

    pub fn labels(&self) -> &[String] {
        &self.manifest.labels
    }

    pub fn num_classes(&self) -> usize {
        self.manifest.labels.len()
    }

    pub fn num_old_classes(&self) -> usize {
        self.old_classes.len()
    }

    /// Checks the per-kind invariants.
    pub fn validate(&self) -> Result<()> {
        let m = &self.manifest;
        let c = m.labels.len();
        let bad = |msg: String| Err(Error::invalid(msg));

        let mut seen = BTreeSet::new();
        for (name, idx) in m.splits() {
            for &i in idx {
                if !seen.insert(i) {
                    return bad(format!("example {i} appears twice (last in {name})"));
                }
            }
        }
        let old: BTreeSet<usize> = m.old_classes.iter().copied().collect();
        let new: BTreeSet<usize> = m.new_classes.iter().copied().collect();
        if old.len() + new.len() != c || old.iter().chain(&new).any(|&k| k >= c) || !old.is_disjoint(&new) {
            return bad("old and new classes must partition the label set".into());
        }
        // old classes occupy the leading ids so the old head is a prefix
        if m.old_classes != (0..old.len()).collect::<Vec<_>>() {
            return bad("old classes must be ids 0..C_old".into());
        }
        let classes_in = |ds: &LabeledDataset| -> BTreeSet<usize> { (0..ds.len()).map(|i| ds.class_of(i)).collect() };
        match self.kind {
            ScenarioKind::AddData => {
                if !new.is_empty() {
                    return bad("AddData scenario must not add classes".into());
                }
            }
            ScenarioKind::AddClasses => {
                if new.is_empty() || old.len() < 2 {
                    return bad("AddClasses needs at least two old classes and one new class".into());
                }
                for (name, ds) in [("old_train", &self.old_train), ("old_dev", &self.old_dev)] {
                    if !classes_in(ds).is_subset(&old) {
                        return bad(format!("{name} contains new-class examples"));
                    }
                }
                for (name, ds) in [("new_train", &self.new_train), ("new_dev", &self.new_dev)] {
                    if !classes_in(ds).is_subset(&new) {
                        return bad(format!("{name} contains old-class examples"));
                    }
                }
            }
        }
        if classes_in(&self.test).len() != c {
            return bad("test split must cover every class".into());
        }
        Ok(())
    }

    pub fn featurize(&self, cfg: &FeaturizerConfig) -> Result<ScenarioData> {
        Ok(ScenarioData {
            old_train: featurize(&self.old_train, cfg)?,
            old_dev: featurize(&self.old_dev, cfg)?,
            new_train: featurize(&self.new_train, cfg)?,
            new_dev: featurize(&self.new_dev, cfg)?,
            test: featurize(&self.test, cfg)?,
            num_old_classes: self.num_old_classes(),
            num_classes: self.num_classes(),
            input_dim: cfg.hash_buckets,
        })
    }
}

/// Featurized splits of a scenario.
#[derive(Clone, Debug)]
pub struct ScenarioData {
    pub old_train: Vec<Sample>,
    pub old_dev: Vec<Sample>,
    pub new_train: Vec<Sample>,
    pub new_dev: Vec<Sample>,
    pub test: Vec<Sample>,
    pub num_old_classes: usize,
    pub num_classes: usize,
    pub input_dim: usize,
}

impl ScenarioData {
    /// `old_train ∪ new_train`, old examples first.
    pub fn updated_train(&self) -> Vec<Sample> {
        self.old_train.iter().chain(&self.new_train).cloned().collect()
    }

    pub fn updated_dev(&self) -> Vec<Sample> {
        self.old_dev.iter().chain(&self.new_dev).cloned().collect()
    }

    pub fn old_data(&self) -> Vec<Sample> {
        self.old_train.iter().chain(&self.old_dev).cloned().collect()
    }
}

/// Takes `n` items from per-class pools. With `n >= classes` the take is
/// stratified proportionally to the pool sizes (largest remainder, ties to
/// the lower class id); otherwise it is a uniform draw from the union.
fn take_from_pools(pools: &mut [Vec<usize>], classes: &[usize], n: usize, rng: &mut rng::StreamRng) -> Result<Vec<usize>> {
    let available: usize = classes.iter().map(|&c| pools[c].len()).sum();
    if n > available {
        return Err(Error::Insufficient(format!("requested {n}, only {available} available")));
    }
    let mut out = Vec::with_capacity(n);
    if n >= classes.len() && available > 0 {
        let mut quotas: Vec<(usize, f64, usize)> = classes
            .iter()
            .map(|&c| {
                let exact = n as f64 * pools[c].len() as f64 / available as f64;
                (c, exact - exact.floor(), exact.floor() as usize)
            })
            .collect();
        let mut remaining = n - quotas.iter().map(|q| q.2).sum::<usize>();
        let mut order: Vec<usize> = (0..quotas.len()).collect();
        order.sort_by(|&a, &b| quotas[b].1.partial_cmp(&quotas[a].1).unwrap().then(a.cmp(&b)));
        for &k in order.iter().cycle() {
            if remaining == 0 {
                break;
            }
            let c = quotas[k].0;
            if quotas[k].2 < pools[c].len() {
                quotas[k].2 += 1;
                remaining -= 1;
            }
        }
        for (c, _, q) in quotas {
            out.extend(pools[c].drain(..q));
        }
    } else {
        let mut union: Vec<(usize, usize)> = classes
            .iter()
            .flat_map(|&c| pools[c].iter().enumerate().map(move |(pos, _)| (c, pos)))
            .collect();
        union.shuffle(rng);
        let mut picked: Vec<(usize, usize)> = union.into_iter().take(n).collect();
        // remove from pools back to front so positions stay valid
        picked.sort_by(|a, b| b.1.cmp(&a.1));
        for (c, pos) in picked {
            out.push(pools[c].remove(pos));
        }
    }
    out.sort_unstable();
    Ok(out)
}

fn class_pools(ds: &LabeledDataset, rng: &mut rng::StreamRng) -> Vec<Vec<usize>> {
    let mut pools = vec![Vec::new(); ds.num_classes()];
    for i in 0..ds.len() {
        pools[ds.class_of(i)].push(i);
    }
    for pool in &mut pools {
        pool.shuffle(rng);
    }
    pools
}

/// Add_Data: the same classes before and after the update.
pub fn build_add_data(ds: &LabeledDataset, sizes: SplitSizes, seed: u64) -> Result<ScenarioSplit> {
    if sizes.total() > ds.len() {
        return Err(Error::Insufficient(format!(
            "splits need {} examples, dataset has {}",
            sizes.total(),
            ds.len()
        )));
    }
    let c = ds.num_classes();
    if sizes.test < c {
        return Err(Error::Insufficient(format!("test size {} cannot cover {c} classes", sizes.test)));
    }
    let mut rng = rng::stream(seed, "scenario/add_data");
    let mut pools = class_pools(ds, &mut rng);
    let all: Vec<usize> = (0..c).collect();
    let test = take_from_pools(&mut pools, &all, sizes.test, &mut rng)?;
    let old_train = take_from_pools(&mut pools, &all, sizes.old_train, &mut rng)?;
    let old_dev = take_from_pools(&mut pools, &all, sizes.old_dev, &mut rng)?;
    let new_train = take_from_pools(&mut pools, &all, sizes.new_train, &mut rng)?;
    let new_dev = take_from_pools(&mut pools, &all, sizes.new_dev, &mut rng)?;
    let manifest = ScenarioManifest {
        kind: ScenarioKind::AddData,
        labels: ds.labels().to_vec(),
        old_classes: all,
        new_classes: Vec::new(),
        old_train,
        old_dev,
        new_train,
        new_dev,
        test,
    };
    ScenarioSplit::from_manifest(ds, manifest)
}

/// Add_Classes: old splits cover only the remaining classes, new splits only
/// `new_class_labels`, test covers all of them.
pub fn build_add_classes(ds: &LabeledDataset, new_class_labels: &[String], sizes: SplitSizes, seed: u64) -> Result<ScenarioSplit> {
    let new_set: BTreeSet<&str> = new_class_labels.iter().map(String::as_str).collect();
    if new_set.is_empty() {
        return Err(Error::invalid("new_class_labels must not be empty"));
    }
    if let Some(missing) = new_set.iter().find(|l| ds.label_id(l).is_none()) {
        return Err(Error::invalid(format!("unknown label {missing:?}")));
    }
    if new_set.len() >= ds.num_classes() {
        return Err(Error::invalid("new_class_labels must be a proper subset of the labels"));
    }
    if sizes.total() > ds.len() {
        return Err(Error::Insufficient(format!(
            "splits need {} examples, dataset has {}",
            sizes.total(),
            ds.len()
        )));
    }
    let c = ds.num_classes();
    if sizes.test < c {
        return Err(Error::Insufficient(format!("test size {} cannot cover {c} classes", sizes.test)));
    }

    let mut rng = rng::stream(seed, "scenario/add_classes");
    let mut pools = class_pools(ds, &mut rng);
    let all: Vec<usize> = (0..c).collect();
    let old_src: Vec<usize> = all.iter().copied().filter(|&k| !new_set.contains(ds.labels()[k].as_str())).collect();
    let new_src: Vec<usize> = all.iter().copied().filter(|&k| new_set.contains(ds.labels()[k].as_str())).collect();

    let test = take_from_pools(&mut pools, &all, sizes.test, &mut rng)?;
    let old_train = take_from_pools(&mut pools, &old_src, sizes.old_train, &mut rng)?;
    let old_dev = take_from_pools(&mut pools, &old_src, sizes.old_dev, &mut rng)?;
    let new_train = take_from_pools(&mut pools, &new_src, sizes.new_train, &mut rng)?;
    let new_dev = take_from_pools(&mut pools, &new_src, sizes.new_dev, &mut rng)?;

    let labels: Vec<String> = old_src.iter().chain(&new_src).map(|&k| ds.labels()[k].clone()).collect();
    let manifest = ScenarioManifest {
        kind: ScenarioKind::AddClasses,
        labels,
        old_classes: (0..old_src.len()).collect(),
        new_classes: (old_src.len()..c).collect(),
        old_train,
        old_dev,
        new_train,
        new_dev,
        test,
    };
    ScenarioSplit::from_manifest(ds, manifest)
}
