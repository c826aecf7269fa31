//! Dataset ingestion and rule-based filtering.
//!
//! Three input schemas are supported. Malformed items are skipped with a
//! counted warning rather than aborting the load; a file that yields zero
//! valid records is a schema mismatch.
//!
//! GenericJsonl line schema (one JSON object per line):
//! `{"id": "...", "question": "...", "context": "...", "answer": "...",
//!   "tags": ["factoid", ...], "answerable": true}`
//! where `tags` and `answerable` are optional.

use std::collections::HashSet;
use std::io::{BufRead, BufReader};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{CruxError, Result};
use crate::types::{QuestionRecord, SourceDataset};

#[derive(Debug, Clone, Copy, PartialEq, Eq, clap::ValueEnum)]
pub enum DatasetFormat {
    /// SQuAD-style nested JSON: data[].paragraphs[].qas[].
    SquadJson,
    /// CoQA-style JSON: data[].{story, questions[], answers[]}.
    CoqaJson,
    /// One JSON object per line.
    GenericJsonl,
}

/// Load result: valid records plus the count of skipped malformed items.
#[derive(Debug, Clone)]
pub struct LoadedDataset {
    pub records: Vec<QuestionRecord>,
    pub skipped: usize,
}

/// Rule-based record filter. Word counts are whitespace-token counts.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct FilterRules {
    pub min_context_words: Option<usize>,
    pub max_context_words: Option<usize>,
    /// Keep only records whose tags intersect this list (e.g. yes/no and
    /// factoid question kinds).
    pub allowed_question_kinds: Option<Vec<String>>,
    /// Keep only records whose answerable-from-context flag is set true.
    pub require_answerable: bool,
}

impl FilterRules {
    pub fn validate(&self) -> Result<()> {
        if let (Some(lo), Some(hi)) = (self.min_context_words, self.max_context_words) {
            if lo > hi {
                return Err(CruxError::ConfigInvalid(format!(
                    "min_context_words {lo} > max_context_words {hi}"
                )));
            }
        }
        Ok(())
    }

    pub fn is_empty(&self) -> bool {
        *self == FilterRules::default()
    }

    fn keeps(&self, record: &QuestionRecord) -> bool {
        let words = record.context_words();
        if let Some(lo) = self.min_context_words {
            if words < lo {
                return false;
            }
        }
        if let Some(hi) = self.max_context_words {
            if words > hi {
                return false;
            }
        }
        if let Some(kinds) = &self.allowed_question_kinds {
            if !record.tags.iter().any(|t| kinds.contains(t)) {
                return false;
            }
        }
        if self.require_answerable && record.answerable != Some(true) {
            return false;
        }
        true
    }
}

/// Order-preserving subset of `records` satisfying every rule.
pub fn filter_records(records: Vec<QuestionRecord>, rules: &FilterRules) -> Vec<QuestionRecord> {
    if rules.is_empty() {
        return records;
    }
    records.into_iter().filter(|r| rules.keeps(r)).collect()
}

// --- SQuAD-style schema ---

#[derive(Deserialize)]
struct SquadFile {
    data: Vec<SquadArticle>,
}

#[derive(Deserialize)]
struct SquadArticle {
    #[serde(default)]
    paragraphs: Vec<SquadParagraph>,
}

#[derive(Deserialize)]
struct SquadParagraph {
    context: String,
    #[serde(default)]
    qas: Vec<SquadQa>,
}

#[derive(Deserialize)]
struct SquadQa {
    id: String,
    question: String,
    #[serde(default)]
    answers: Vec<SquadAnswer>,
    #[serde(default)]
    is_impossible: bool,
}

#[derive(Deserialize)]
struct SquadAnswer {
    text: String,
}

// --- CoQA-style schema ---

#[derive(Deserialize)]
struct CoqaFile {
    data: Vec<CoqaStory>,
}

#[derive(Deserialize)]
struct CoqaStory {
    id: String,
    story: String,
    #[serde(default)]
    questions: Vec<CoqaTurn>,
    #[serde(default)]
    answers: Vec<CoqaTurn>,
}

#[derive(Deserialize)]
struct CoqaTurn {
    input_text: String,
    turn_id: i64,
}

// --- Generic JSONL schema ---

#[derive(Deserialize)]
struct GenericLine {
    id: String,
    question: String,
    context: String,
    answer: String,
    #[serde(default)]
    tags: Vec<String>,
    #[serde(default)]
    answerable: Option<bool>,
}

fn read_file(path: &Path) -> Result<String> {
    std::fs::read_to_string(path).map_err(|e| CruxError::FileUnreadable {
        path: path.display().to_string(),
        source: e,
    })
}

struct Collector {
    records: Vec<QuestionRecord>,
    seen_ids: HashSet<String>,
    skipped: usize,
    source: &'static str,
}

impl Collector {
    fn new(source: &'static str) -> Self {
        Self {
            records: Vec::new(),
            seen_ids: HashSet::new(),
            skipped: 0,
            source,
        }
    }

    fn push(&mut self, record: QuestionRecord, what: &str) {
        if record.validate().is_err() {
            log::warn!("{}: skipping {what}: invalid record", self.source);
            self.skipped += 1;
            return;
        }
        if !self.seen_ids.insert(record.id.clone()) {
            log::warn!("{}: skipping {what}: duplicate id '{}'", self.source, record.id);
            self.skipped += 1;
            return;
        }
        self.records.push(record);
    }

    fn skip(&mut self, what: &str, why: &str) {
        log::warn!("{}: skipping {what}: {why}", self.source);
        self.skipped += 1;
    }

    fn finish(self, path: &Path) -> Result<LoadedDataset> {
        if self.records.is_empty() {
            return Err(CruxError::SchemaMismatch(path.display().to_string()));
        }
        Ok(LoadedDataset {
            records: self.records,
            skipped: self.skipped,
        })
    }
}

fn load_squad(path: &Path) -> Result<LoadedDataset> {
    let text = read_file(path)?;
    let file: SquadFile = serde_json::from_str(&text)
        .map_err(|_| CruxError::SchemaMismatch(path.display().to_string()))?;
    let mut out = Collector::new("squad");
    for article in file.data {
        for paragraph in article.paragraphs {
            for qa in paragraph.qas {
                if qa.is_impossible || qa.answers.is_empty() {
                    out.skip(&format!("qa '{}'", qa.id), "no reference answer");
                    continue;
                }
                out.push(
                    QuestionRecord {
                        id: qa.id.clone(),
                        query: qa.question,
                        context: paragraph.context.clone(),
                        reference_answer: qa.answers[0].text.clone(),
                        source_dataset: SourceDataset::Squad,
                        tags: Vec::new(),
                        answerable: None,
                    },
                    &format!("qa '{}'", qa.id),
                );
            }
        }
    }
    out.finish(path)
}

fn load_coqa(path: &Path) -> Result<LoadedDataset> {
    let text = read_file(path)?;
    let file: CoqaFile = serde_json::from_str(&text)
        .map_err(|_| CruxError::SchemaMismatch(path.display().to_string()))?;
    let mut out = Collector::new("coqa");
    for story in file.data {
        for question in &story.questions {
            let what = format!("turn {} of story '{}'", question.turn_id, story.id);
            match story.answers.iter().find(|a| a.turn_id == question.turn_id) {
                Some(answer) => out.push(
                    QuestionRecord {
                        id: format!("{}-{}", story.id, question.turn_id),
                        query: question.input_text.clone(),
                        context: story.story.clone(),
                        reference_answer: answer.input_text.clone(),
                        source_dataset: SourceDataset::Coqa,
                        tags: Vec::new(),
                        answerable: None,
                    },
                    &what,
                ),
                None => out.skip(&what, "no answer with matching turn_id"),
            }
        }
    }
    out.finish(path)
}

fn load_generic_jsonl(path: &Path) -> Result<LoadedDataset> {
    let file = std::fs::File::open(path).map_err(|e| CruxError::FileUnreadable {
        path: path.display().to_string(),
        source: e,
    })?;
    let mut out = Collector::new("jsonl");
    for (lineno, line) in BufReader::new(file).lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        match serde_json::from_str::<GenericLine>(&line) {
            Ok(item) => out.push(
                QuestionRecord {
                    id: item.id,
                    query: item.question,
                    context: item.context,
                    reference_answer: item.answer,
                    source_dataset: SourceDataset::Generic,
                    tags: item.tags,
                    answerable: item.answerable,
                },
                &format!("line {}", lineno + 1),
            ),
            Err(e) => out.skip(&format!("line {}", lineno + 1), &e.to_string()),
        }
    }
    out.finish(path)
}

pub fn load_dataset(path: &Path, format: DatasetFormat) -> Result<LoadedDataset> {
    match format {
        DatasetFormat::SquadJson => load_squad(path),
        DatasetFormat::CoqaJson => load_coqa(path),
        DatasetFormat::GenericJsonl => load_generic_jsonl(path),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::io::Write;

    fn write_temp(name: &str, contents: &str) -> std::path::PathBuf {
        let dir = std::env::temp_dir().join("crux-dataset-tests");
        std::fs::create_dir_all(&dir).unwrap();
        let path = dir.join(name);
        let mut f = std::fs::File::create(&path).unwrap();
        f.write_all(contents.as_bytes()).unwrap();
        path
    }

    #[test]
    fn squad_three_qas_share_one_context() {
        let json = serde_json::json!({
            "data": [{
                "paragraphs": [{
                    "context": "The Amazon is a river.",
                    "qas": [
                        {"id": "q1", "question": "What is the Amazon?", "answers": [{"text": "a river"}]},
                        {"id": "q2", "question": "Is it long?", "answers": [{"text": "yes"}]},
                        {"id": "q3", "question": "Where is it?", "answers": [{"text": "South America"}]}
                    ]
                }]
            }]
        });
        let path = write_temp("squad.json", &json.to_string());
        let loaded = load_dataset(&path, DatasetFormat::SquadJson).unwrap();
        assert_eq!(loaded.records.len(), 3);
        assert!(loaded.records.iter().all(|r| r.context == "The Amazon is a river."));
        assert_eq!(loaded.skipped, 0);
    }

    #[test]
    fn generic_jsonl_single_line() {
        let path = write_temp(
            "one.jsonl",
            r#"{"id":"x","question":"q","context":"c","answer":"a"}"#,
        );
        let loaded = load_dataset(&path, DatasetFormat::GenericJsonl).unwrap();
        assert_eq!(loaded.records.len(), 1);
        let r = &loaded.records[0];
        assert_eq!((r.id.as_str(), r.query.as_str()), ("x", "q"));
        assert_eq!(r.source_dataset, SourceDataset::Generic);
    }

    #[test]
    fn empty_file_is_schema_mismatch() {
        let path = write_temp("empty.jsonl", "");
        match load_dataset(&path, DatasetFormat::GenericJsonl) {
            Err(CruxError::SchemaMismatch(_)) => {}
            other => panic!("expected SchemaMismatch, got {other:?}"),
        }
    }

    #[test]
    fn missing_file_is_unreadable() {
        match load_dataset(Path::new("/definitely/missing.json"), DatasetFormat::SquadJson) {
            Err(CruxError::FileUnreadable { .. }) => {}
            other => panic!("expected FileUnreadable, got {other:?}"),
        }
    }

    #[test]
    fn malformed_lines_are_counted_not_fatal() {
        let path = write_temp(
            "mixed.jsonl",
            "{\"id\":\"a\",\"question\":\"q\",\"context\":\"c\",\"answer\":\"x\"}\nnot json\n{\"id\":\"b\",\"question\":\"q2\",\"context\":\"c\",\"answer\":\"y\"}\n",
        );
        let loaded = load_dataset(&path, DatasetFormat::GenericJsonl).unwrap();
        assert_eq!(loaded.records.len(), 2);
        assert_eq!(loaded.skipped, 1);
    }

    #[test]
    fn duplicate_ids_are_skipped() {
        let path = write_temp(
            "dup.jsonl",
            "{\"id\":\"a\",\"question\":\"q\",\"context\":\"c\",\"answer\":\"x\"}\n{\"id\":\"a\",\"question\":\"q2\",\"context\":\"c\",\"answer\":\"y\"}\n",
        );
        let loaded = load_dataset(&path, DatasetFormat::GenericJsonl).unwrap();
        assert_eq!(loaded.records.len(), 1);
        assert_eq!(loaded.skipped, 1);
    }

    #[test]
    fn coqa_turns_align_by_turn_id() {
        let json = serde_json::json!({
            "data": [{
                "id": "s1",
                "story": "A story about things.",
                "questions": [
                    {"input_text": "What?", "turn_id": 1},
                    {"input_text": "Why?", "turn_id": 2}
                ],
                "answers": [
                    {"input_text": "things", "turn_id": 1},
                    {"input_text": "reasons", "turn_id": 2}
                ]
            }]
        });
        let path = write_temp("coqa.json", &json.to_string());
        let loaded = load_dataset(&path, DatasetFormat::CoqaJson).unwrap();
        assert_eq!(loaded.records.len(), 2);
        assert_eq!(loaded.records[0].id, "s1-1");
        assert_eq!(loaded.records[1].reference_answer, "reasons");
    }

    fn record_with_context(words: usize) -> QuestionRecord {
        QuestionRecord {
            id: format!("r{words}"),
            query: "q".into(),
            context: vec!["word"; words].join(" "),
            reference_answer: "a".into(),
            source_dataset: SourceDataset::Generic,
            tags: vec![],
            answerable: None,
        }
    }

    #[test]
    fn word_count_filter_bounds() {
        let rules = FilterRules {
            min_context_words: Some(1000),
            max_context_words: Some(2000),
            ..Default::default()
        };
        let records = vec![
            record_with_context(1500),
            record_with_context(10),
            record_with_context(2500),
        ];
        let kept = filter_records(records, &rules);
        assert_eq!(kept.len(), 1);
        assert_eq!(kept[0].id, "r1500");
    }

    #[test]
    fn empty_rules_are_identity_and_idempotent() {
        let records = vec![record_with_context(5), record_with_context(50)];
        let rules = FilterRules::default();
        let once = filter_records(records.clone(), &rules);
        assert_eq!(once.len(), records.len());

        let rules = FilterRules {
            min_context_words: Some(10),
            ..Default::default()
        };
        let once = filter_records(records, &rules);
        let twice = filter_records(once.clone(), &rules);
        assert_eq!(
            once.iter().map(|r| &r.id).collect::<Vec<_>>(),
            twice.iter().map(|r| &r.id).collect::<Vec<_>>()
        );
    }

    #[test]
    fn kind_and_answerable_filters() {
        let mut yes_no = record_with_context(20);
        yes_no.id = "yn".into();
        yes_no.tags = vec!["yesno".into()];
        yes_no.answerable = Some(true);

        let mut list_kind = record_with_context(20);
        list_kind.id = "list".into();
        list_kind.tags = vec!["list".into()];
        list_kind.answerable = Some(false);

        let rules = FilterRules {
            allowed_question_kinds: Some(vec!["yesno".into(), "factoid".into()]),
            require_answerable: true,
            ..Default::default()
        };
        let kept = filter_records(vec![yes_no, list_kind], &rules);
        assert_eq!(kept.len(), 1);
        assert_eq!(kept[0].id, "yn");
    }
}
