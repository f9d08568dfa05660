//! Metrics and the experiment harness: Recall@5 per report field for the
//! pipeline and the retrieval baseline, extraction precision with and
//! without state tracking, classifier accuracies and segmentation accuracy.
//!
//! Undefined rates are absent rather than zero and render as `-`.

use std::collections::{BTreeMap, BTreeSet, HashSet};
use std::fmt::Write as _;
use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::bundle::ModelBundle;
use crate::corpus::{EntityType, GoldCase, ReportSchema};
use crate::error::{Error, Result};
use crate::filtering::{negation_examples, qid_examples, QidMode};
use crate::linking::normalize;
use crate::recommend::{retrieval_baseline, suggest, SuggestionList, MAX_SUGGESTIONS};
use crate::segmentation::segment_dialogue_with;
use crate::tracker::{
    process_utterance, segment_scorer, KeywordRecord, KeywordState, SessionState, TrackerConfig,
};

/// A count of hits over a count of trials.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Ratio {
    pub hits: u64,
    pub total: u64,
}

impl Ratio {
    pub fn rate(&self) -> Option<f64> {
        (self.total > 0).then(|| self.hits as f64 / self.total as f64)
    }

    pub fn add(&mut self, other: Ratio) {
        self.hits += other.hits;
        self.total += other.total;
    }
}

/// Gold values of one field found among the first five candidates.
pub fn field_recall(candidates: &[String], gold: &[String]) -> Ratio {
    let top: HashSet<String> = candidates
        .iter()
        .take(MAX_SUGGESTIONS)
        .map(|c| normalize(c))
        .collect();
    let gold: BTreeSet<String> = gold.iter().map(|g| normalize(g)).collect();
    Ratio {
        hits: gold.iter().filter(|g| top.contains(*g)).count() as u64,
        total: gold.len() as u64,
    }
}

/// Per-value recall of a gold report against per-field suggestion lists.
/// A field without a list counts as having no suggestions.
pub fn recall_ratio(
    suggestions: &[SuggestionList],
    gold_report: &BTreeMap<String, Vec<String>>,
) -> Ratio {
    let mut out = Ratio::default();
    for (field_id, gold) in gold_report {
        let candidates = suggestions
            .iter()
            .find(|l| &l.field_id == field_id)
            .map(|l| l.candidates.as_slice())
            .unwrap_or(&[]);
        out.add(field_recall(candidates, gold));
    }
    out
}

pub fn recall_at_5(
    suggestions: &[SuggestionList],
    gold_report: &BTreeMap<String, Vec<String>>,
) -> Option<f64> {
    recall_ratio(suggestions, gold_report).rate()
}

/// Confirmed records of `etype` whose value is among the gold values.
pub fn precision_ratio(
    records: &[KeywordRecord],
    gold_values: &BTreeSet<String>,
    etype: EntityType,
) -> Ratio {
    let gold: HashSet<String> = gold_values.iter().map(|g| normalize(g)).collect();
    let mut out = Ratio::default();
    for r in records
        .iter()
        .filter(|r| r.etype == etype && r.state == KeywordState::Confirmed)
    {
        out.total += 1;
        if gold.contains(&normalize(&r.value)) {
            out.hits += 1;
        }
    }
    out
}

pub fn extraction_precision(
    records: &[KeywordRecord],
    gold_values: &BTreeSet<String>,
    etype: EntityType,
) -> Option<f64> {
    precision_ratio(records, gold_values, etype).rate()
}

/// Splits a corpus in order: the first part trains, the rest is held out.
pub fn split_corpus(cases: &[GoldCase], test_fraction: f64) -> (Vec<GoldCase>, Vec<GoldCase>) {
    let n_test = ((cases.len() as f64) * test_fraction.clamp(0.0, 1.0)).round() as usize;
    let cut = cases.len() - n_test;
    (cases[..cut].to_vec(), cases[cut..].to_vec())
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ExperimentConfig {
    /// State tracking for the pipeline whose suggestions are scored.
    pub dst_enabled: bool,
    /// Score the retrieval baseline next to the pipeline.
    pub baseline_enabled: bool,
    /// Question-classifier modes whose accuracy is reported.
    pub modes: Vec<QidMode>,
    pub tracker: TrackerConfig,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        ExperimentConfig {
            dst_enabled: true,
            baseline_enabled: true,
            modes: vec![QidMode::Single, QidMode::Mtl, QidMode::AdvMtl],
            tracker: TrackerConfig::default(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FieldRecall {
    pub field_id: String,
    pub topic_id: String,
    pub etype: EntityType,
    pub pipeline: Ratio,
    /// Absent when the baseline is off or cannot fill the field.
    pub baseline: Option<Ratio>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TypePrecision {
    pub etype: EntityType,
    pub with_dst: Ratio,
    pub without_dst: Ratio,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct RuntimeStats {
    pub events: usize,
    pub mean_ms: f64,
    pub p95_ms: f64,
    pub max_ms: f64,
}

impl RuntimeStats {
    pub fn from_samples(mut ms: Vec<f64>) -> Self {
        if ms.is_empty() {
            return RuntimeStats::default();
        }
        ms.sort_by(f64::total_cmp);
        let n = ms.len();
        RuntimeStats {
            events: n,
            mean_ms: ms.iter().sum::<f64>() / n as f64,
            p95_ms: ms[(n * 95).div_ceil(100) - 1],
            max_ms: ms[n - 1],
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub dialogues: usize,
    pub utterances: usize,
    pub recall: Vec<FieldRecall>,
    pub precision: Vec<TypePrecision>,
    pub question_accuracy: BTreeMap<QidMode, Option<f64>>,
    pub negation_accuracy: Option<f64>,
    pub segmentation: Ratio,
    pub runtime: RuntimeStats,
}

/// One line of the machine-readable report.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "table", rename_all = "snake_case")]
pub enum ReportLine {
    Summary {
        dialogues: usize,
        utterances: usize,
    },
    Recall {
        field_id: String,
        topic_id: String,
        etype: EntityType,
        pipeline: Option<f64>,
        pipeline_hits: u64,
        pipeline_total: u64,
        baseline: Option<f64>,
    },
    Precision {
        etype: EntityType,
        with_dst: Option<f64>,
        without_dst: Option<f64>,
        with_dst_hits: u64,
        with_dst_total: u64,
        without_dst_hits: u64,
        without_dst_total: u64,
    },
    QuestionAccuracy {
        mode: QidMode,
        accuracy: Option<f64>,
    },
    NegationAccuracy {
        accuracy: Option<f64>,
    },
    SegmentationAccuracy {
        accuracy: Option<f64>,
        correct: u64,
        utterances: u64,
    },
    Runtime(RuntimeStats),
}

fn run_case(
    case: &GoldCase,
    bundle: &ModelBundle,
    sq: &crate::segmentation::StandardQuestionSet,
    cfg: &TrackerConfig,
    timings: Option<&mut Vec<f64>>,
) -> Result<SessionState> {
    let mut state = SessionState::new();
    let mut timings = timings;
    for u in &case.dialogue.utterances {
        let start = Instant::now();
        process_utterance(&mut state, u, bundle, sq, cfg)?;
        if let Some(t) = timings.as_deref_mut() {
            t.push(start.elapsed().as_secs_f64() * 1e3);
        }
    }
    Ok(state)
}

fn dialogue_text(case: &GoldCase) -> String {
    case.dialogue
        .utterances
        .iter()
        .map(|u| u.text.as_str())
        .collect::<Vec<_>>()
        .join("\n")
}

/// Runs the pipeline on every test dialogue and aggregates all metrics.
/// Aggregates are sums, so the result does not depend on corpus order.
pub fn run_experiment(
    corpus: &[GoldCase],
    bundle: &ModelBundle,
    schema: &ReportSchema,
    sq: &crate::segmentation::StandardQuestionSet,
    cfg: &ExperimentConfig,
) -> Result<EvalReport> {
    bundle.check_schema(schema)?;
    let train: BTreeSet<&str> = bundle.meta.train_ids.iter().map(String::as_str).collect();
    let overlap: Vec<&str> = corpus
        .iter()
        .map(|c| c.dialogue.id.as_str())
        .filter(|id| train.contains(id))
        .collect();
    if !overlap.is_empty() {
        return Err(Error::SplitOverlap(overlap.join(", ")));
    }
    let with_dst = TrackerConfig {
        dst_enabled: true,
        ..cfg.tracker.clone()
    };
    let without_dst = TrackerConfig {
        dst_enabled: false,
        ..cfg.tracker.clone()
    };
    let fields: Vec<_> = schema.fields().collect();
    let mut recall: Vec<FieldRecall> = fields
        .iter()
        .map(|f| FieldRecall {
            field_id: f.field_id.clone(),
            topic_id: f.topic_id.clone(),
            etype: f.etype,
            pipeline: Ratio::default(),
            baseline: (cfg.baseline_enabled && f.etype != EntityType::Date).then(Ratio::default),
        })
        .collect();
    let mut precision: Vec<TypePrecision> = EntityType::ALL
        .iter()
        .map(|&etype| TypePrecision {
            etype,
            with_dst: Ratio::default(),
            without_dst: Ratio::default(),
        })
        .collect();
    let seg_scorer = segment_scorer(bundle, &cfg.tracker.segmenter)?;
    let mut segmentation = Ratio::default();
    let mut timings = Vec::new();
    let mut utterances = 0;
    for case in corpus {
        utterances += case.dialogue.utterances.len();
        let gated = run_case(case, bundle, sq, &with_dst, Some(&mut timings))?;
        let plain = run_case(case, bundle, sq, &without_dst, None)?;
        let state = if cfg.dst_enabled { &gated } else { &plain };
        let text = dialogue_text(case);
        for (slot, field) in recall.iter_mut().zip(&fields) {
            let gold = case
                .gold_report
                .get(&field.field_id)
                .map(Vec::as_slice)
                .unwrap_or(&[]);
            slot.pipeline
                .add(field_recall(&suggest(state, field).candidates, gold));
            if let Some(b) = slot.baseline.as_mut() {
                let list = retrieval_baseline(&bundle.index, &text, field)?;
                b.add(field_recall(&list.candidates, gold));
            }
        }
        for p in precision.iter_mut() {
            let gold = case.report_values(schema, p.etype);
            p.with_dst
                .add(precision_ratio(&gated.ledger, &gold, p.etype));
            p.without_dst
                .add(precision_ratio(&plain.ledger, &gold, p.etype));
        }
        let assigned =
            segment_dialogue_with(seg_scorer, &case.dialogue, sq, &cfg.tracker.segmenter)?;
        for a in &assigned {
            segmentation.total += 1;
            if a.topic_id.as_ref() == case.gold_topics.get(&a.utterance_index) {
                segmentation.hits += 1;
            }
        }
    }
    let qid = qid_examples(corpus, &bundle.meta.topics)?;
    let mut question_accuracy = BTreeMap::new();
    for &mode in &cfg.modes {
        let acc = match bundle.qid.get(&mode) {
            Some(model) if !qid.is_empty() => Some(model.accuracy(&qid)?),
            _ => None,
        };
        question_accuracy.insert(mode, acc);
    }
    let neg = negation_examples(corpus);
    let negation_accuracy = if neg.is_empty() {
        None
    } else {
        Some(bundle.neg.accuracy(&neg)?)
    };
    Ok(EvalReport {
        dialogues: corpus.len(),
        utterances,
        recall,
        precision,
        question_accuracy,
        negation_accuracy,
        segmentation,
        runtime: RuntimeStats::from_samples(timings),
    })
}

fn percent(rate: Option<f64>) -> String {
    rate.map_or_else(|| "-".to_string(), |r| format!("{:.2}", r * 100.0))
}

impl EvalReport {
    pub fn lines(&self, with_runtime: bool) -> Vec<ReportLine> {
        let mut out = vec![ReportLine::Summary {
            dialogues: self.dialogues,
            utterances: self.utterances,
        }];
        for r in &self.recall {
            out.push(ReportLine::Recall {
                field_id: r.field_id.clone(),
                topic_id: r.topic_id.clone(),
                etype: r.etype,
                pipeline: r.pipeline.rate(),
                pipeline_hits: r.pipeline.hits,
                pipeline_total: r.pipeline.total,
                baseline: r.baseline.and_then(|b| b.rate()),
            });
        }
        for p in &self.precision {
            out.push(ReportLine::Precision {
                etype: p.etype,
                with_dst: p.with_dst.rate(),
                without_dst: p.without_dst.rate(),
                with_dst_hits: p.with_dst.hits,
                with_dst_total: p.with_dst.total,
                without_dst_hits: p.without_dst.hits,
                without_dst_total: p.without_dst.total,
            });
        }
        for (&mode, &accuracy) in &self.question_accuracy {
            out.push(ReportLine::QuestionAccuracy { mode, accuracy });
        }
        out.push(ReportLine::NegationAccuracy {
            accuracy: self.negation_accuracy,
        });
        out.push(ReportLine::SegmentationAccuracy {
            accuracy: self.segmentation.rate(),
            correct: self.segmentation.hits,
            utterances: self.segmentation.total,
        });
        if with_runtime {
            out.push(ReportLine::Runtime(self.runtime.clone()));
        }
        out
    }

    /// Line-delimited JSON records.
    pub fn to_json_lines(&self, with_runtime: bool) -> String {
        self.lines(with_runtime)
            .iter()
            .map(|l| serde_json::to_string(l).expect("plain data serializes") + "\n")
            .collect()
    }

    /// Recall@5 as a topic by entity-type grid with pipeline and retrieval
    /// columns for each type, followed by the precision and accuracy tables.
    pub fn to_text(&self, with_runtime: bool) -> String {
        let mut rows: Vec<Vec<String>> = Vec::new();
        let mut header = vec!["Topic".to_string()];
        for t in EntityType::ALL {
            header.push(format!("{} Pipeline", t.as_str()));
            header.push(format!("{} Retrieval", t.as_str()));
        }
        rows.push(header);
        let mut topics: Vec<&str> = Vec::new();
        for r in &self.recall {
            if !topics.contains(&r.topic_id.as_str()) {
                topics.push(&r.topic_id);
            }
        }
        for topic in topics {
            let mut row = vec![topic.to_string()];
            for t in EntityType::ALL {
                match self
                    .recall
                    .iter()
                    .find(|r| r.topic_id == topic && r.etype == t)
                {
                    Some(r) => {
                        row.push(percent(r.pipeline.rate()));
                        row.push(percent(r.baseline.and_then(|b| b.rate())));
                    }
                    None => row.extend([String::new(), String::new()]),
                }
            }
            rows.push(row);
        }
        let mut out = String::from("Recall@5 (%)\n");
        out.push_str(&align(&rows));
        let mut rows = vec![vec![
            "Type".to_string(),
            "With DST".to_string(),
            "Without DST".to_string(),
        ]];
        for p in &self.precision {
            rows.push(vec![
                p.etype.as_str().to_string(),
                percent(p.with_dst.rate()),
                percent(p.without_dst.rate()),
            ]);
        }
        out.push_str("\nExtraction precision (%)\n");
        out.push_str(&align(&rows));
        let mut rows = vec![vec!["Classifier".to_string(), "Accuracy".to_string()]];
        for (mode, acc) in &self.question_accuracy {
            rows.push(vec![format!("question {mode}"), percent(*acc)]);
        }
        rows.push(vec!["negation".into(), percent(self.negation_accuracy)]);
        rows.push(vec![
            "segmentation".into(),
            percent(self.segmentation.rate()),
        ]);
        out.push_str("\nAccuracy (%)\n");
        out.push_str(&align(&rows));
        let _ = writeln!(
            out,
            "\n{} dialogues, {} utterances",
            self.dialogues, self.utterances
        );
        if with_runtime {
            let r = &self.runtime;
            let _ = writeln!(
                out,
                "per-utterance latency: mean {:.3} ms, p95 {:.3} ms, max {:.3} ms over {} events",
                r.mean_ms, r.p95_ms, r.max_ms, r.events
            );
        }
        out
    }
}

fn align(rows: &[Vec<String>]) -> String {
    let cols = rows.iter().map(Vec::len).max().unwrap_or(0);
    let widths: Vec<usize> = (0..cols)
        .map(|c| {
            rows.iter()
                .filter_map(|r| r.get(c))
                .map(|s| s.chars().count())
                .max()
                .unwrap_or(0)
        })
        .collect();
    let mut out = String::new();
    for row in rows {
        let cells: Vec<String> = row
            .iter()
            .enumerate()
            .map(|(c, s)| {
                if c == 0 {
                    format!("{s:<w$}", w = widths[c])
                } else {
                    format!("{s:>w$}", w = widths[c])
                }
            })
            .collect();
        out.push_str(cells.join("  ").trim_end());
        out.push('\n');
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linking::{LinkMethod, LinkResult};
    use crate::recommend::SuggestionSource;

    fn list(field: &str, c: &[&str]) -> SuggestionList {
        SuggestionList {
            field_id: field.into(),
            candidates: c.iter().map(|s| s.to_string()).collect(),
            source: SuggestionSource::Pipeline,
        }
    }

    fn gold(pairs: &[(&str, &[&str])]) -> BTreeMap<String, Vec<String>> {
        pairs
            .iter()
            .map(|(f, v)| (f.to_string(), v.iter().map(|s| s.to_string()).collect()))
            .collect()
    }

    fn rec(value: &str, etype: EntityType, state: KeywordState) -> KeywordRecord {
        KeywordRecord {
            id: 1,
            value: value.into(),
            etype,
            topic: None,
            utterance_index: 0,
            state,
            link: LinkResult {
                entry_id: None,
                normalized_value: value.into(),
                score: 1.0,
                method: LinkMethod::Exact,
            },
        }
    }

    #[test]
    fn recall_counts_per_value() {
        let g = gold(&[("f1", &["A"]), ("f2", &["B"])]);
        assert_eq!(recall_at_5(&[list("f1", &["A"])], &g), Some(0.5));
        assert_eq!(
            recall_at_5(&[list("f1", &["A"]), list("f2", &["x", "b"])], &g),
            Some(1.0)
        );
        assert_eq!(recall_at_5(&[], &g), Some(0.0));
        assert_eq!(recall_at_5(&[list("f1", &["A"])], &BTreeMap::new()), None);
        let g = gold(&[("f1", &["A", "F"])]);
        let six = list("f1", &["B", "C", "D", "E", "A", "F"]);
        assert_eq!(recall_ratio(&[six], &g), Ratio { hits: 1, total: 2 });
    }

    #[test]
    fn precision_counts_confirmed_records_of_the_type() {
        use EntityType::*;
        use KeywordState::*;
        let g: BTreeSet<String> = ["Renji Hospital".to_string()].into();
        let records = vec![
            rec("Renji Hospital", Hos, Confirmed),
            rec("renji  hospital", Hos, Confirmed),
            rec("Qilu Hospital", Hos, Confirmed),
            rec("Qilu Hospital", Hos, Dropped),
            rec("Huashan Hospital", Hos, Tentative),
            rec("Renji Hospital", Dis, Confirmed),
        ];
        assert_eq!(
            precision_ratio(&records, &g, Hos),
            Ratio { hits: 2, total: 3 }
        );
        assert_eq!(extraction_precision(&records, &g, Date), None);
        assert_eq!(extraction_precision(&records[..1], &g, Hos), Some(1.0));
    }

    #[test]
    fn p95_is_the_nearest_rank() {
        let s = RuntimeStats::from_samples((1..=100).rev().map(f64::from).collect());
        assert_eq!(s.p95_ms, 95.0);
        assert_eq!(s.max_ms, 100.0);
        assert_eq!(RuntimeStats::from_samples(vec![3.0]).p95_ms, 3.0);
        assert_eq!(RuntimeStats::from_samples(vec![]).events, 0);
    }

    #[test]
    fn absent_rates_render_as_dashes() {
        let report = EvalReport {
            dialogues: 0,
            utterances: 0,
            recall: vec![FieldRecall {
                field_id: "d".into(),
                topic_id: "t".into(),
                etype: EntityType::Date,
                pipeline: Ratio { hits: 1, total: 4 },
                baseline: None,
            }],
            precision: vec![],
            question_accuracy: BTreeMap::new(),
            negation_accuracy: None,
            segmentation: Ratio::default(),
            runtime: RuntimeStats::default(),
        };
        let text = report.to_text(false);
        let row = text.lines().nth(2).unwrap();
        assert_eq!(
            row.split_whitespace().collect::<Vec<_>>(),
            ["t", "25.00", "-"]
        );
        assert!(report.to_json_lines(false).contains("\"baseline\":null"));
    }
}
