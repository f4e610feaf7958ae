//! Synthetic fact datasets.
//!
//! Subjects are pronounceable two-word names; each relation has an object
//! pool, prompt templates (template 0 renders the edit prompt, the rest
//! render paraphrases) and reference sentences about its objects.

use std::collections::BTreeSet;
use std::fs;
use std::io::{BufRead, BufReader, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::editor::{FactRecord, NeighborhoodPrompt};
use crate::error::{Error, Result};
use crate::model::segment;
use crate::numerics::RngStream;

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct RelationSpec {
    pub name: String,
    pub objects: Vec<String>,
    /// Prompt templates with a `{s}` placeholder; the object follows the prompt.
    pub templates: Vec<String>,
    /// Sentences with an `{o}` placeholder describing an object.
    pub references: Vec<String>,
}

fn spec(name: &str, objects: &[&str], templates: &[&str], references: &[&str]) -> RelationSpec {
    let own = |xs: &[&str]| xs.iter().map(|x| x.to_string()).collect();
    RelationSpec { name: name.into(), objects: own(objects), templates: own(templates), references: own(references) }
}

/// Built-in relations, each with six templates. Every template ends with the
/// subject so the object is predicted at the last subject token; templates
/// differ in the context before it.
pub fn relation_catalog() -> Vec<RelationSpec> {
    vec![
        spec(
            "sport",
            &["soccer", "basketball", "tennis", "hockey", "cricket", "golf", "baseball", "rugby"],
            &[
                "the sport played by {s}",
                "the favorite sport of the athlete {s}",
                "on weekends the sport practiced by {s}",
                "fans know the professional sport of {s}",
                "everyone knows the sport of {s}",
                "the team sport chosen by {s}",
            ],
            &["{o} is a sport played by teams around the world", "fans watch {o} matches every season"],
        ),
        spec(
            "city",
            &["paris", "london", "tokyo", "berlin", "madrid", "rome", "cairo", "lima"],
            &[
                "the city of residence of {s}",
                "the hometown of {s}",
                "people say the home city of {s}",
                "the city where you will find {s}",
                "every morning the streets walked by {s}",
                "the place that is home to {s}",
            ],
            &["{o} is a large city with busy streets", "tourists visit {o} in the summer"],
        ),
        spec(
            "language",
            &["english", "french", "spanish", "german", "italian", "russian", "arabic", "hindi"],
            &[
                "the language spoken by {s}",
                "the mother tongue of {s}",
                "letters are written in the language of {s}",
                "at home the language used by {s}",
                "the native language of {s}",
                "friends hear the language of {s}",
            ],
            &["{o} is a language spoken by millions of people", "many books are written in {o}"],
        ),
        spec(
            "instrument",
            &["piano", "guitar", "violin", "drums", "flute", "cello", "trumpet", "harp"],
            &[
                "the instrument played by {s}",
                "the favorite instrument of {s}",
                "on stage the instrument of {s}",
                "music comes from the instrument of {s}",
                "the instrument practiced daily by {s}",
                "at concerts the instrument of {s}",
            ],
            &["the {o} is a musical instrument", "a {o} can fill a concert hall with sound"],
        ),
    ]
}

pub fn catalog_relations(names: &[String]) -> Result<Vec<RelationSpec>> {
    let catalog = relation_catalog();
    names
        .iter()
        .map(|n| {
            catalog
                .iter()
                .find(|r| &r.name == n)
                .cloned()
                .ok_or_else(|| Error::InvalidConfig(format!("unknown relation {n:?}")))
        })
        .collect()
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct DatasetOptions {
    pub n_subjects: usize,
    pub relations: Vec<String>,
    pub templates_per_relation: usize,
    pub neighbors_per_record: usize,
}

impl Default for DatasetOptions {
    fn default() -> Self {
        Self {
            n_subjects: 64,
            relations: vec!["sport".into(), "city".into()],
            templates_per_relation: 4,
            neighbors_per_record: 3,
        }
    }
}

const ONSETS: [&str; 14] = ["b", "d", "f", "g", "k", "l", "m", "n", "p", "r", "s", "t", "v", "z"];
const VOWELS: [&str; 5] = ["a", "e", "i", "o", "u"];
const FIRST_NAMES: usize = 8;

fn name_part(rng: &mut RngStream, syllables: usize) -> String {
    (0..syllables)
        .map(|_| format!("{}{}", ONSETS[rng.next_below(ONSETS.len())], VOWELS[rng.next_below(VOWELS.len())]))
        .collect()
}

fn capitalize(w: &str) -> String {
    let mut c = w.chars();
    match c.next() {
        Some(f) => f.to_uppercase().chain(c).collect(),
        None => String::new(),
    }
}

/// Distinct two-word subject names. First names come from a small shared
/// pool, so only the last name identifies a subject; no word collides with
/// `reserved`.
pub fn subject_names(n: usize, reserved: &BTreeSet<String>, rng: &mut RngStream) -> Vec<String> {
    let mut used = reserved.clone();
    let mut fresh = |rng: &mut RngStream, syllables: usize| loop {
        let w = name_part(rng, syllables);
        if used.insert(w.clone()) {
            return w;
        }
    };
    let firsts: Vec<String> = (0..FIRST_NAMES.min(n)).map(|_| fresh(rng, 2)).collect();
    (0..n)
        .map(|_| {
            let first = &firsts[rng.next_below(firsts.len())];
            let syllables = 2 + rng.next_below(2);
            let last = fresh(rng, syllables);
            format!("{} {}", capitalize(first), capitalize(&last))
        })
        .collect()
}

fn render(template: &str, subject: &str) -> String {
    template.replace("{s}", subject)
}

fn render_reference(template: &str, object: &str) -> String {
    template.replace("{o}", object)
}

/// Generates one record per (subject, relation), relation-major.
pub fn gen_synthetic_dataset(
    relations: &[RelationSpec],
    options: &DatasetOptions,
    seed: u64,
) -> Result<Vec<FactRecord>> {
    if options.n_subjects < 2 {
        return Err(Error::InvalidConfig("need at least 2 subjects".into()));
    }
    if relations.is_empty() {
        return Err(Error::InvalidConfig("need at least one relation".into()));
    }
    if options.templates_per_relation < 2 {
        return Err(Error::InvalidConfig("need at least 2 templates per relation".into()));
    }
    for r in relations {
        if r.objects.iter().collect::<BTreeSet<_>>().len() < 2 {
            return Err(Error::InsufficientPool(r.name.clone()));
        }
        if r.templates.len() < options.templates_per_relation {
            return Err(Error::InvalidConfig(format!(
                "relation {:?} has {} templates, {} requested",
                r.name,
                r.templates.len(),
                options.templates_per_relation
            )));
        }
    }
    let mut rng = RngStream::new(seed, 0);
    let reserved: BTreeSet<String> = relations
        .iter()
        .flat_map(|r| r.objects.iter().chain(&r.templates).chain(&r.references).flat_map(|t| segment(t)))
        .collect();
    let subjects = subject_names(options.n_subjects, &reserved, &mut rng);

    let mut records = Vec::new();
    for rel in relations {
        let truths: Vec<usize> = subjects.iter().map(|_| rng.next_below(rel.objects.len())).collect();
        let templates = &rel.templates[..options.templates_per_relation];
        for (si, subject) in subjects.iter().enumerate() {
            let o = truths[si];
            let mut o_new = rng.next_below(rel.objects.len() - 1);
            if o_new >= o {
                o_new += 1;
            }
            let target_new = rel.objects[o_new].clone();
            let mut others: Vec<usize> = (0..subjects.len()).filter(|&j| j != si && truths[j] != o_new).collect();
            rng.shuffle(&mut others);
            let neighborhood_prompts = others
                .iter()
                .take(options.neighbors_per_record)
                .map(|&j| NeighborhoodPrompt {
                    prompt: render(&templates[0], &subjects[j]),
                    subject: subjects[j].clone(),
                    expected: rel.objects[truths[j]].clone(),
                })
                .collect();
            records.push(FactRecord {
                case_id: format!("{}-{:03}", rel.name, si),
                subject: subject.clone(),
                relation: rel.name.clone(),
                target_true: rel.objects[o].clone(),
                target_new: target_new.clone(),
                edit_prompt: render(&templates[0], subject),
                paraphrase_prompts: templates[1..].iter().map(|t| render(t, subject)).collect(),
                neighborhood_prompts,
                reference_texts: rel.references.iter().map(|t| render_reference(t, &target_new)).collect(),
            });
        }
    }
    Ok(records)
}

/// Every prompt of every record completed with its true object, plus every
/// reference sentence for every object of the given relations.
pub fn training_texts(records: &[FactRecord], relations: &[RelationSpec]) -> Vec<String> {
    let mut out = Vec::new();
    for r in records {
        for p in std::iter::once(&r.edit_prompt).chain(&r.paraphrase_prompts) {
            out.push(format!("{p} {}", r.target_true));
        }
    }
    for rel in relations {
        for o in &rel.objects {
            for t in &rel.references {
                out.push(render_reference(t, o));
            }
        }
    }
    out
}

/// Every string a vocabulary must cover for these records.
pub fn record_texts(records: &[FactRecord]) -> Vec<&str> {
    let mut out = Vec::new();
    for r in records {
        out.extend([r.subject.as_str(), &r.target_true, &r.target_new, &r.edit_prompt]);
        out.extend(r.paraphrase_prompts.iter().map(String::as_str));
        for n in &r.neighborhood_prompts {
            out.extend([n.prompt.as_str(), &n.subject, &n.expected]);
        }
        out.extend(r.reference_texts.iter().map(String::as_str));
    }
    out
}

pub fn write_jsonl(path: &Path, records: &[FactRecord]) -> Result<()> {
    if let Some(parent) = path.parent() {
        fs::create_dir_all(parent)?;
    }
    let mut f = fs::File::create(path)?;
    for r in records {
        writeln!(f, "{}", serde_json::to_string(r)?)?;
    }
    Ok(())
}

pub fn read_jsonl(path: &Path) -> Result<Vec<FactRecord>> {
    let f = fs::File::open(path)?;
    let mut out = Vec::new();
    for line in BufReader::new(f).lines() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        out.push(serde_json::from_str(&line)?);
    }
    Ok(out)
}
