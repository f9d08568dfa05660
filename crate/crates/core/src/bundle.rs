//! All trained models of a deployment in one versioned model file,
//! together with the knowledge base they were trained against.

use std::collections::BTreeMap;
use std::path::Path;

use crate::corpus::{read_file, write_file, GoldCase, KbEntry, ReportSchema};
use crate::error::{Error, Result};
use crate::extraction::{train_tagger, TaggerModel};
use crate::filtering::{
    train_negation_classifier, train_question_classifier, NegationClassifier, QidMode,
    QuestionClassifier,
};
use crate::linking::KbIndex;
use crate::neural::{ModelFile, Section, TrainConfig};
use crate::segmentation::TrainableScorer;

/// Which components `train_bundle` fits.
#[derive(Clone, Debug, PartialEq)]
pub struct BundleSpec {
    /// Question-classifier modes to train. The last one is active.
    pub modes: Vec<QidMode>,
    /// Train the per-token tagger; otherwise the gazetteer backend is used.
    pub trainable_tagger: bool,
    /// Train the learned segmentation scorer.
    pub segmentation_scorer: bool,
}

impl Default for BundleSpec {
    fn default() -> Self {
        BundleSpec {
            modes: vec![QidMode::AdvMtl],
            trainable_tagger: true,
            segmentation_scorer: false,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct BundleMeta {
    /// Topic ids of the schema the classifiers were trained for, in order.
    pub topics: Vec<String>,
    pub active_mode: QidMode,
    /// Dialogue ids of the training split.
    pub train_ids: Vec<String>,
    pub config: TrainConfig,
}

#[derive(Clone, Debug)]
pub struct ModelBundle {
    pub meta: BundleMeta,
    /// Sorted by entry id.
    pub kb: Vec<KbEntry>,
    pub index: KbIndex,
    pub tagger: TaggerModel,
    pub qid: BTreeMap<QidMode, QuestionClassifier>,
    pub neg: NegationClassifier,
    pub seg: Option<TrainableScorer>,
}

pub fn train_bundle(
    cases: &[GoldCase],
    kb: &[KbEntry],
    schema: &ReportSchema,
    cfg: &TrainConfig,
    spec: &BundleSpec,
) -> Result<ModelBundle> {
    cfg.validate()?;
    let Some(&active_mode) = spec.modes.last() else {
        return Err(Error::Invalid(
            "at least one question-classifier mode is required".into(),
        ));
    };
    let topics = schema.topic_ids();
    let tagger = if spec.trainable_tagger {
        train_tagger(cases, kb, cfg)?
    } else {
        TaggerModel::gazetteer(kb)
    };
    let mut qid = BTreeMap::new();
    for &mode in &spec.modes {
        qid.insert(mode, train_question_classifier(mode, cases, &topics, cfg)?);
    }
    let neg = train_negation_classifier(cases, cfg)?;
    let seg = if spec.segmentation_scorer {
        Some(TrainableScorer::train(cases, schema, cfg)?)
    } else {
        None
    };
    let mut kb = kb.to_vec();
    kb.sort_by(|a, b| a.id.cmp(&b.id));
    let mut train_ids: Vec<String> = cases.iter().map(|c| c.dialogue.id.clone()).collect();
    train_ids.sort();
    Ok(ModelBundle {
        meta: BundleMeta {
            topics,
            active_mode,
            train_ids,
            config: cfg.clone(),
        },
        index: KbIndex::build(&kb),
        kb,
        tagger,
        qid,
        neg,
        seg,
    })
}

fn json<T: serde::Serialize>(value: &T) -> String {
    serde_json::to_string(value).expect("plain data serializes")
}

fn from_json<T: serde::de::DeserializeOwned>(section: &Section, key: &str) -> Result<T> {
    serde_json::from_str(section.meta(key)?)
        .map_err(|e| Error::Invalid(format!("section `{}` key `{key}`: {e}", section.name)))
}

impl ModelBundle {
    /// The question classifier used at run time.
    pub fn active_qid(&self) -> &QuestionClassifier {
        &self.qid[&self.meta.active_mode]
    }

    /// Fails unless the bundle was trained for exactly this schema's topics.
    pub fn check_schema(&self, schema: &ReportSchema) -> Result<()> {
        let topics = schema.topic_ids();
        if topics != self.meta.topics {
            return Err(Error::VersionMismatch(format!(
                "bundle was trained for topics [{}], schema has [{}]",
                self.meta.topics.join(", "),
                topics.join(", ")
            )));
        }
        Ok(())
    }

    pub fn to_model_file(&self) -> ModelFile {
        let mut file = ModelFile::default();
        let mut head = Section::new("bundle");
        head.meta.insert("topics".into(), json(&self.meta.topics));
        head.meta
            .insert("active_mode".into(), self.meta.active_mode.to_string());
        head.meta
            .insert("train_ids".into(), json(&self.meta.train_ids));
        head.meta.insert("config".into(), json(&self.meta.config));
        let modes: Vec<&str> = self.qid.keys().map(|m| m.as_str()).collect();
        head.meta.insert("modes".into(), json(&modes));
        file.push(head);
        let mut kb = Section::new("kb");
        for entry in &self.kb {
            kb.meta.insert(format!("entry.{}", entry.id), json(entry));
        }
        file.push(kb);
        file.push(self.tagger.to_section());
        for model in self.qid.values() {
            file.push(model.to_section());
        }
        file.push(self.neg.to_section());
        if let Some(seg) = &self.seg {
            file.push(seg.to_section());
        }
        file
    }

    pub fn from_model_file(file: &ModelFile) -> Result<Self> {
        let head = file.section("bundle")?;
        let topics: Vec<String> = from_json(head, "topics")?;
        let active_mode: QidMode = head.meta("active_mode")?.parse()?;
        let modes: Vec<String> = from_json(head, "modes")?;
        let kb_section = file.section("kb")?;
        let mut kb = Vec::with_capacity(kb_section.meta.len());
        for key in kb_section.meta.keys().filter(|k| k.starts_with("entry.")) {
            kb.push(from_json::<KbEntry>(kb_section, key)?);
        }
        let mut qid = BTreeMap::new();
        for mode in modes {
            let mode: QidMode = mode.parse()?;
            let model = QuestionClassifier::from_section(file.section(mode.section())?)?;
            if model.topics != topics {
                return Err(Error::VersionMismatch(format!(
                    "section `{}` was trained for different topics",
                    mode.section()
                )));
            }
            qid.insert(mode, model);
        }
        if !qid.contains_key(&active_mode) {
            return Err(Error::MissingSection(active_mode.section().to_string()));
        }
        let seg = match file.section("seg") {
            Ok(s) => Some(TrainableScorer::from_section(s)?),
            Err(_) => None,
        };
        Ok(ModelBundle {
            meta: BundleMeta {
                topics,
                active_mode,
                train_ids: from_json(head, "train_ids")?,
                config: from_json(head, "config")?,
            },
            index: KbIndex::build(&kb),
            tagger: TaggerModel::from_section(file.section("tagger")?, &kb)?,
            kb,
            qid,
            neg: NegationClassifier::from_section(file.section("neg")?)?,
            seg,
        })
    }

    pub fn render(&self) -> String {
        self.to_model_file().render()
    }

    pub fn parse(text: &str) -> Result<Self> {
        Self::from_model_file(&ModelFile::parse(text)?)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        write_file(path, &self.render())
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::parse(&read_file(path)?)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::{generate_corpus, generate_kb, GeneratorConfig, KbGenConfig, NoiseConfig};

    fn small() -> (Vec<GoldCase>, Vec<KbEntry>, ReportSchema, TrainConfig) {
        let schema = ReportSchema::default_schema();
        let kb = generate_kb(&KbGenConfig {
            per_type: 12,
            ..KbGenConfig::default()
        })
        .unwrap();
        let cases = generate_corpus(
            &schema,
            &kb,
            &GeneratorConfig::new(3, 0.3, NoiseConfig::clean(), 5),
        )
        .unwrap();
        let cfg = TrainConfig {
            epochs: 2,
            dim: 4,
            embed_dim: 4,
            ..TrainConfig::default()
        };
        (cases, kb, schema, cfg)
    }

    #[test]
    fn render_parse_render_is_identical() {
        let (cases, kb, schema, cfg) = small();
        let spec = BundleSpec {
            modes: vec![QidMode::Single, QidMode::AdvMtl],
            trainable_tagger: true,
            segmentation_scorer: true,
        };
        let bundle = train_bundle(&cases, &kb, &schema, &cfg, &spec).unwrap();
        let text = bundle.render();
        let back = ModelBundle::parse(&text).unwrap();
        assert_eq!(back.render(), text);
        assert_eq!(back.kb, bundle.kb);
        assert_eq!(back.meta, bundle.meta);
        assert_eq!(back.active_qid().mode, QidMode::AdvMtl);
        back.check_schema(&schema).unwrap();
    }

    #[test]
    fn missing_section_is_named() {
        let (cases, kb, schema, cfg) = small();
        let spec = BundleSpec {
            trainable_tagger: false,
            ..BundleSpec::default()
        };
        let bundle = train_bundle(&cases, &kb, &schema, &cfg, &spec).unwrap();
        let mut file = bundle.to_model_file();
        file.sections.retain(|s| s.name != "neg");
        match ModelBundle::from_model_file(&file) {
            Err(Error::MissingSection(name)) => assert_eq!(name, "neg"),
            other => panic!("expected missing section, got {other:?}"),
        }
    }

    #[test]
    fn schema_mismatch_is_a_version_error() {
        let (cases, kb, schema, cfg) = small();
        let spec = BundleSpec {
            trainable_tagger: false,
            ..BundleSpec::default()
        };
        let bundle = train_bundle(&cases, &kb, &schema, &cfg, &spec).unwrap();
        let mut other = schema.clone();
        other.topics.pop();
        assert!(matches!(
            bundle.check_schema(&other),
            Err(Error::VersionMismatch(_))
        ));
    }
}
