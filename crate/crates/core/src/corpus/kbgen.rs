//! Synthetic knowledge base with well-separated names.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::{EntityType, KbEntry};
use crate::error::{Error, Result};

/// Levenshtein distance over Unicode scalar values.
pub fn edit_distance(a: &str, b: &str) -> usize {
    let a: Vec<char> = a.chars().collect();
    let b: Vec<char> = b.chars().collect();
    if a.is_empty() {
        return b.len();
    }
    let mut prev: Vec<usize> = (0..=b.len()).collect();
    let mut cur = vec![0; b.len() + 1];
    for (i, ca) in a.iter().enumerate() {
        cur[0] = i + 1;
        for (j, cb) in b.iter().enumerate() {
            let sub = prev[j] + usize::from(ca != cb);
            cur[j + 1] = sub.min(prev[j + 1] + 1).min(cur[j] + 1);
        }
        std::mem::swap(&mut prev, &mut cur);
    }
    prev[b.len()]
}

#[derive(Clone, Debug)]
pub struct KbGenConfig {
    pub per_type: usize,
    /// Minimum edit distance between any two names of different entries of
    /// the same type (lowercased).
    pub min_distance: usize,
    pub min_length: usize,
    pub seed: u64,
}

impl Default for KbGenConfig {
    fn default() -> Self {
        KbGenConfig {
            per_type: 30,
            min_distance: 3,
            min_length: 5,
            seed: 42,
        }
    }
}

const PLACES: &[&str] = &[
    "Qilu",
    "Renji",
    "Huashan",
    "Ruijin",
    "Xiangya",
    "Tongji",
    "Xiehe",
    "Zhongshan",
    "Changhai",
    "Xijing",
    "Huaxi",
    "Yantai",
    "Weifang",
    "Linyi",
    "Taian",
    "Rizhao",
    "Dezhou",
    "Binzhou",
    "Liaocheng",
    "Heze",
    "Zibo",
    "Jining",
    "Qingdao",
    "Jinan",
    "Nanjing",
    "Suzhou",
    "Wuxi",
    "Hangzhou",
    "Ningbo",
    "Wenzhou",
    "Fuzhou",
    "Xiamen",
    "Hefei",
    "Wuhan",
    "Changsha",
    "Nanchang",
    "Kunming",
    "Guiyang",
    "Chengdu",
    "Lanzhou",
    "Xining",
    "Yinchuan",
    "Harbin",
    "Dalian",
    "Shenyang",
    "Tianjin",
    "Baoding",
    "Handan",
    "Datong",
    "Taiyuan",
];

const STREETS: &[&str] = &[
    "Jingshi",
    "Heping",
    "Jiefang",
    "Renmin",
    "Zhongshan",
    "Huaihai",
    "Nanjing",
    "Beijing",
    "Yan'an",
    "Xinhua",
    "Dongfeng",
    "Wenhua",
    "Chaoyang",
    "Minzu",
    "Gongye",
    "Shengli",
    "Changjiang",
    "Huanghe",
    "Taishan",
    "Lishan",
    "Quancheng",
    "Baotu",
    "Daming",
    "Qianfo",
    "Longao",
    "Aoti",
    "Kuangshan",
    "Shanda",
    "Hongjialou",
    "Wuyingshan",
    "Luoyuan",
    "Weiyi",
    "Jingqi",
    "Tianqiao",
    "Huaiyin",
    "Lixia",
    "Shizhong",
    "Licheng",
    "Changqing",
    "Zhangqiu",
];

const STREET_KINDS: &[(&str, &str)] = &[("Road", "Rd"), ("Street", "St"), ("Avenue", "Ave")];

const HOSPITAL_KINDS: &[&str] = &[
    "Hospital",
    "People's Hospital",
    "Central Hospital",
    "Cancer Hospital",
    "Children's Hospital",
];

const DISEASES: &[(&str, &[&str])] = &[
    ("lung cancer", &["lung carcinoma"]),
    ("gastric cancer", &["stomach cancer"]),
    ("liver cancer", &["hepatoma"]),
    ("breast cancer", &[]),
    ("diabetes", &["diabetes mellitus"]),
    ("hypertension", &["high blood pressure"]),
    ("hepatitis B", &[]),
    ("coronary heart disease", &[]),
    ("pneumonia", &[]),
    ("tuberculosis", &[]),
    ("gastric ulcer", &[]),
    ("leukemia", &[]),
    ("lymphoma", &[]),
    ("stroke", &[]),
    ("asthma", &[]),
    ("arthritis", &[]),
    ("cirrhosis", &[]),
    ("nephritis", &[]),
    ("thyroid cancer", &[]),
    ("colon cancer", &[]),
    ("kidney stones", &[]),
    ("gallstones", &[]),
    ("bronchitis", &[]),
    ("appendicitis", &[]),
    ("anemia", &[]),
    ("epilepsy", &[]),
    ("glaucoma", &[]),
    ("psoriasis", &[]),
    ("osteoporosis", &[]),
    ("heart failure", &[]),
    ("pancreatitis", &[]),
    ("myocarditis", &[]),
    ("cervical cancer", &[]),
    ("gout", &[]),
    ("migraine", &[]),
];

const EXAMS: &[(&str, &[&str])] = &[
    ("CT scan", &["computed tomography"]),
    ("MRI scan", &["magnetic resonance"]),
    ("X-ray", &[]),
    ("blood test", &["blood work"]),
    ("urine test", &[]),
    ("biopsy", &[]),
    ("ultrasound", &["B-ultrasound"]),
    ("gastroscopy", &[]),
    ("colonoscopy", &[]),
    ("electrocardiogram", &["ECG test"]),
    ("PET scan", &[]),
    ("bone density scan", &[]),
    ("liver function test", &[]),
    ("endoscopy", &[]),
    ("mammogram", &[]),
    ("lung function test", &[]),
    ("tumor marker panel", &[]),
    ("bronchoscopy", &[]),
    ("angiography", &[]),
    ("pap smear", &[]),
    ("allergy panel", &[]),
    ("stress test", &[]),
    ("thyroid panel", &[]),
    ("echocardiogram", &[]),
    ("skin prick test", &[]),
    ("genetic screening", &[]),
    ("hearing test", &[]),
    ("vision screening", &[]),
    ("lumbar puncture", &[]),
    ("cystoscopy", &[]),
    ("sleep study", &[]),
    ("holter monitor", &[]),
];

fn candidates(etype: EntityType) -> Vec<(String, Vec<String>)> {
    match etype {
        EntityType::Hos => {
            let mut out = Vec::new();
            for place in PLACES {
                for kind in HOSPITAL_KINDS {
                    let alias = match *kind {
                        "Hospital" => vec![],
                        other => vec![format!("{place} {}", other.replace("Hospital", "Hosp"))],
                    };
                    out.push((format!("{place} {kind}"), alias));
                }
            }
            out
        }
        EntityType::Addr => {
            let mut out = Vec::new();
            for street in STREETS {
                for (kind, short) in STREET_KINDS {
                    out.push((
                        format!("{street} {kind}"),
                        vec![format!("{street} {short}")],
                    ));
                }
            }
            out
        }
        EntityType::Dis => DISEASES
            .iter()
            .map(|(c, a)| (c.to_string(), a.iter().map(|s| s.to_string()).collect()))
            .collect(),
        EntityType::Exam => EXAMS
            .iter()
            .map(|(c, a)| (c.to_string(), a.iter().map(|s| s.to_string()).collect()))
            .collect(),
        EntityType::Date => Vec::new(),
    }
}

fn id_prefix(etype: EntityType) -> &'static str {
    match etype {
        EntityType::Addr => "addr",
        EntityType::Hos => "hos",
        EntityType::Dis => "dis",
        EntityType::Exam => "exam",
        EntityType::Date => "date",
    }
}

/// Draws `per_type` entries for every knowledge-base type. Names of
/// different entries of one type are at least `min_distance` edits apart and
/// at least `min_length` characters long.
pub fn generate_kb(config: &KbGenConfig) -> Result<Vec<KbEntry>> {
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut entries = Vec::new();
    for etype in EntityType::KB_TYPES {
        let mut pool = candidates(etype);
        pool.shuffle(&mut rng);
        let mut accepted: Vec<Vec<String>> = Vec::new();
        let mut chosen = Vec::new();
        for (canonical, aliases) in pool {
            if chosen.len() == config.per_type {
                break;
            }
            let names: Vec<String> = std::iter::once(&canonical)
                .chain(aliases.iter())
                .map(|n| n.to_lowercase())
                .collect();
            if names.iter().any(|n| n.chars().count() < config.min_length) {
                continue;
            }
            let clear = accepted.iter().flatten().all(|other| {
                names
                    .iter()
                    .all(|n| edit_distance(n, other) >= config.min_distance)
            });
            if clear {
                accepted.push(names);
                chosen.push((canonical, aliases));
            }
        }
        if chosen.len() < config.per_type {
            return Err(Error::Generation(format!(
                "only {} well-separated {etype} names available, {} requested",
                chosen.len(),
                config.per_type
            )));
        }
        chosen.sort();
        for (i, (canonical, aliases)) in chosen.into_iter().enumerate() {
            entries.push(KbEntry {
                id: format!("{}-{:03}", id_prefix(etype), i + 1),
                etype,
                canonical,
                aliases,
            });
        }
    }
    Ok(entries)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn edit_distance_basics() {
        assert_eq!(edit_distance("", "abc"), 3);
        assert_eq!(edit_distance("abc", ""), 3);
        assert_eq!(edit_distance("kitten", "sitting"), 3);
        assert_eq!(edit_distance("Qilu Hospital", "Qilu Hosptal"), 1);
        assert_eq!(edit_distance("abc", "abc"), 0);
    }

    #[test]
    fn generated_names_are_separated() {
        let kb = generate_kb(&KbGenConfig::default()).unwrap();
        assert_eq!(kb.len(), 4 * 30);
        for (i, a) in kb.iter().enumerate() {
            for b in &kb[i + 1..] {
                if a.etype != b.etype {
                    continue;
                }
                for na in a.names() {
                    for nb in b.names() {
                        let d = edit_distance(&na.to_lowercase(), &nb.to_lowercase());
                        assert!(d >= 3, "{na} vs {nb}: {d}");
                    }
                }
            }
        }
    }

    #[test]
    fn generation_is_seeded() {
        let a = generate_kb(&KbGenConfig::default()).unwrap();
        let b = generate_kb(&KbGenConfig::default()).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn too_many_requested_is_an_error() {
        let cfg = KbGenConfig {
            per_type: 500,
            ..KbGenConfig::default()
        };
        assert!(matches!(generate_kb(&cfg), Err(Error::Generation(_))));
    }
}
