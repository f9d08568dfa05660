//! Shared helpers for the integration test targets.
#![allow(dead_code, unused_imports)]

pub use claimlens_core::neural::TrainConfig;
pub use claimlens_core::selfcheck::*;

pub struct Fixture {
    pub schema: claimlens_core::corpus::ReportSchema,
    pub kb: Vec<claimlens_core::corpus::KbEntry>,
    pub sq: claimlens_core::segmentation::StandardQuestionSet,
    pub train: Vec<claimlens_core::corpus::GoldCase>,
    pub bundle: claimlens_core::bundle::ModelBundle,
}

impl Fixture {
    pub fn kb_name(&self, etype: claimlens_core::corpus::EntityType, k: usize) -> String {
        self.kb
            .iter()
            .filter(|e| e.etype == etype)
            .nth(k)
            .unwrap()
            .canonical
            .clone()
    }
}

/// Bundle trained once per test binary on the seed-42 corpus.
pub fn fixture() -> &'static Fixture {
    use claimlens_core::bundle::{train_bundle, BundleSpec};
    use claimlens_core::corpus::*;
    use claimlens_core::segmentation::StandardQuestionSet;
    static FIXTURE: std::sync::OnceLock<Fixture> = std::sync::OnceLock::new();
    FIXTURE.get_or_init(|| {
        let schema = ReportSchema::default_schema();
        let kb = generate_kb(&KbGenConfig::default()).unwrap();
        let sq = StandardQuestionSet::default_for(&schema).unwrap();
        let train = generate_corpus(
            &schema,
            &kb,
            &GeneratorConfig::new(40, 0.3, NoiseConfig::clean(), 42),
        )
        .unwrap();
        let bundle = train_bundle(
            &train,
            &kb,
            &schema,
            &TrainConfig::default(),
            &BundleSpec::default(),
        )
        .unwrap();
        Fixture {
            schema,
            kb,
            sq,
            train,
            bundle,
        }
    })
}

pub fn utt(
    index: u64,
    speaker: claimlens_core::corpus::Speaker,
    text: &str,
) -> claimlens_core::corpus::Utterance {
    claimlens_core::corpus::Utterance::new(index, speaker, text)
}

pub struct Experiment {
    pub train: Vec<claimlens_core::corpus::GoldCase>,
    pub test: Vec<claimlens_core::corpus::GoldCase>,
    pub bundle: claimlens_core::bundle::ModelBundle,
}

/// Seed-42 corpus with half of all answers negated, split 2:1, with every
/// question-classifier mode trained.
pub fn experiment() -> &'static Experiment {
    use claimlens_core::bundle::{train_bundle, BundleSpec};
    use claimlens_core::corpus::*;
    use claimlens_core::evalkit::split_corpus;
    use claimlens_core::filtering::QidMode;
    static EXPERIMENT: std::sync::OnceLock<Experiment> = std::sync::OnceLock::new();
    EXPERIMENT.get_or_init(|| {
        let f = fixture();
        let cases = generate_corpus(
            &f.schema,
            &f.kb,
            &GeneratorConfig::new(60, 0.5, NoiseConfig::clean(), 42),
        )
        .unwrap();
        let (train, test) = split_corpus(&cases, 1.0 / 3.0);
        let spec = BundleSpec {
            modes: vec![QidMode::Single, QidMode::Mtl, QidMode::AdvMtl],
            ..BundleSpec::default()
        };
        let bundle =
            train_bundle(&train, &f.kb, &f.schema, &TrainConfig::default(), &spec).unwrap();
        Experiment {
            train,
            test,
            bundle,
        }
    })
}

/// Seed-42 dialogues concatenated and renumbered into one `turns`-long
/// conversation.
pub fn long_replay(turns: usize) -> Vec<claimlens_core::corpus::Utterance> {
    use claimlens_core::corpus::*;
    let f = fixture();
    let cases = generate_corpus(
        &f.schema,
        &f.kb,
        &GeneratorConfig::new(12, 0.5, NoiseConfig::clean(), 42),
    )
    .unwrap();
    let out: Vec<Utterance> = cases
        .iter()
        .flat_map(|c| c.dialogue.utterances.iter())
        .take(turns)
        .enumerate()
        .map(|(i, u)| Utterance::new(i as u64, u.speaker, u.text.clone()))
        .collect();
    assert_eq!(out.len(), turns, "corpus too short for the replay");
    out
}

pub fn manager(dir: &std::path::Path) -> claimlens_core::service::SessionManager {
    use claimlens_core::service::*;
    use std::sync::Arc;
    let f = fixture();
    SessionManager::new(
        Arc::new(f.bundle.clone()),
        Arc::new(f.schema.clone()),
        Arc::new(f.sq.clone()),
        ServiceOptions {
            sessions_dir: dir.to_path_buf(),
            tracker: Default::default(),
            fsync: false,
        },
    )
    .unwrap()
}
