//! Deterministic synthetic corpora over a label hierarchy.
//!
//! Every fine class owns a handful of made-up keywords and every category a
//! few more, so keyword overlap tracks the hierarchy. Texts are padded with
//! shared filler words and, optionally, usernames, links and accented words
//! for the normalizer to chew on.

use std::sync::Arc;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::corpus::{Dataset, Document, LabelHierarchy, Task, NON_SEXIST, SEXIST};
use crate::error::{Error, Result};

const SYLLABLES: [&str; 12] = [
    "ka", "ro", "mi", "te", "su", "la", "ne", "vo", "pi", "da", "ze", "lu",
];

const FILLER: [&str; 32] = [
    "the", "today", "people", "online", "really", "think", "just", "said", "post", "thread",
    "read", "time", "news", "game", "work", "week", "again", "about", "what", "every", "here",
    "there", "some", "never", "always", "friend", "coffee", "café", "naïve", "déjà", "vu", "city",
];

const KEYWORDS_PER_FINE: usize = 5;
const KEYWORDS_PER_CATEGORY: usize = 3;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SynthSpec {
    pub name: String,
    pub source: String,
    pub id_prefix: String,
    /// Sexist documents generated for each fine class.
    pub per_fine_class: usize,
    pub non_sexist: usize,
    /// Probability that a sexist document's fine label is swapped for another.
    pub label_noise: f64,
    /// Probability that a non-sexist document borrows one fine keyword.
    pub confusion: f64,
    /// Fine-class keywords per sexist document.
    pub keywords_per_doc: usize,
    /// Sprinkle usernames, links and amounts.
    pub decorate: bool,
    /// Emit category and fine labels; otherwise only the binary label plus
    /// the category name as the origin label.
    pub fine_labels: bool,
    pub seed: u64,
}

impl Default for SynthSpec {
    fn default() -> Self {
        SynthSpec {
            name: "synthetic".into(),
            source: "synthetic".into(),
            id_prefix: "syn".into(),
            per_fine_class: 20,
            non_sexist: 200,
            label_noise: 0.0,
            confusion: 0.1,
            keywords_per_doc: 2,
            decorate: true,
            fine_labels: true,
            seed: 0,
        }
    }
}

/// Keywords owned by fine class number `fine` (hierarchy order).
pub fn fine_keywords(fine: usize) -> Vec<String> {
    (0..KEYWORDS_PER_FINE)
        .map(|j| {
            format!(
                "{}{}{}",
                SYLLABLES[fine % 12],
                SYLLABLES[j % 12],
                SYLLABLES[(fine / 12) % 12]
            )
        })
        .collect()
}

/// Keywords owned by category number `category`.
pub fn category_keywords(category: usize) -> Vec<String> {
    (0..KEYWORDS_PER_CATEGORY)
        .map(|j| {
            format!(
                "{}{}r",
                SYLLABLES[category % 12],
                SYLLABLES[(category + j + 3) % 12]
            )
        })
        .collect()
}

fn pick<'a, R: Rng>(rng: &mut R, words: &'a [String], n: usize) -> Vec<&'a str> {
    (0..n)
        .map(|_| words[rng.gen_range(0..words.len())].as_str())
        .collect()
}

fn compose<R: Rng>(rng: &mut R, mut words: Vec<String>, decorate: bool, serial: usize) -> String {
    let n_filler = rng.gen_range(4..8);
    words.extend((0..n_filler).map(|_| FILLER[rng.gen_range(0..FILLER.len())].to_string()));
    words.shuffle(rng);
    if decorate {
        if rng.gen_bool(0.3) {
            words.insert(0, format!("@user{}", rng.gen_range(1..500)));
        }
        if rng.gen_bool(0.15) {
            words.push(format!("https://t.co/{:08x}", rng.gen::<u32>()));
        }
        if rng.gen_bool(0.05) {
            words.push(format!("${}", serial % 90 + 10));
        }
    }
    words.join(" ")
}

pub fn generate(spec: &SynthSpec, hierarchy: Arc<LabelHierarchy>) -> Result<Dataset> {
    if !(0.0..=1.0).contains(&spec.label_noise) || !(0.0..=1.0).contains(&spec.confusion) {
        return Err(Error::Precondition("noise rates must lie in [0, 1]".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let fine = hierarchy.classes(Task::C).to_vec();
    let categories = hierarchy.classes(Task::B).to_vec();
    let fine_kw: Vec<Vec<String>> = (0..fine.len()).map(fine_keywords).collect();
    let cat_kw: Vec<Vec<String>> = (0..categories.len()).map(category_keywords).collect();
    let category_of = |f: usize| {
        let parent = hierarchy.parent(&fine[f]).expect("fine class has a parent");
        categories
            .iter()
            .position(|c| c == parent)
            .expect("parent is a category")
    };

    let mut docs = Vec::with_capacity(fine.len() * spec.per_fine_class + spec.non_sexist);
    let mut serial = 0;
    for (f, keywords) in fine_kw.iter().enumerate() {
        for _ in 0..spec.per_fine_class {
            let c = category_of(f);
            let mut words: Vec<String> = pick(&mut rng, keywords, spec.keywords_per_doc)
                .into_iter()
                .map(String::from)
                .collect();
            words.extend(pick(&mut rng, &cat_kw[c], 1).into_iter().map(String::from));
            let text = compose(&mut rng, words, spec.decorate, serial);
            let mut label = f;
            if spec.label_noise > 0.0 && rng.gen_bool(spec.label_noise) && fine.len() > 1 {
                label = (f + rng.gen_range(1..fine.len())) % fine.len();
            }
            let mut doc = Document::new(
                format!("{}-{serial:05}", spec.id_prefix),
                text,
                spec.source.clone(),
            )
            .with_label(Task::A, SEXIST);
            if spec.fine_labels {
                doc = doc
                    .with_label(Task::B, categories[category_of(label)].clone())
                    .with_label(Task::C, fine[label].clone());
            } else {
                doc.origin_label = Some(categories[category_of(label)].clone());
            }
            docs.push(doc);
            serial += 1;
        }
    }
    for _ in 0..spec.non_sexist {
        let mut words = Vec::new();
        if spec.confusion > 0.0 && rng.gen_bool(spec.confusion) {
            let f = rng.gen_range(0..fine.len());
            words.extend(pick(&mut rng, &fine_kw[f], 1).into_iter().map(String::from));
        }
        let text = compose(&mut rng, words, spec.decorate, serial);
        let mut doc = Document::new(
            format!("{}-{serial:05}", spec.id_prefix),
            text,
            spec.source.clone(),
        )
        .with_label(Task::A, NON_SEXIST);
        if !spec.fine_labels {
            doc.origin_label = Some(NON_SEXIST.to_string());
        }
        docs.push(doc);
        serial += 1;
    }
    docs.shuffle(&mut rng);
    Dataset::new(spec.name.clone(), hierarchy, docs)
}

/// Binary task-A corpus whose classes share no vocabulary at all.
pub fn separable_binary(positives: usize, negatives: usize, seed: u64) -> Dataset {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let pos: Vec<String> = (0..8)
        .map(|j| format!("{}{}", SYLLABLES[j], SYLLABLES[(j + 5) % 12]))
        .collect();
    let neg: Vec<String> = (0..8)
        .map(|j| format!("{}{}", SYLLABLES[(j + 3) % 12], SYLLABLES[j]))
        .collect();
    let make = |rng: &mut ChaCha8Rng, words: &[String], id: String, label: &str| {
        let text = pick(rng, words, 4).join(" ");
        Document::new(id, text, "fixture").with_label(Task::A, label)
    };
    let mut docs: Vec<Document> = (0..positives)
        .map(|i| make(&mut rng, &pos, format!("p{i:04}"), SEXIST))
        .collect();
    docs.extend((0..negatives).map(|i| make(&mut rng, &neg, format!("n{i:04}"), NON_SEXIST)));
    docs.shuffle(&mut rng);
    Dataset::new("separable", Arc::new(LabelHierarchy::canonical()), docs)
        .expect("fixture ids are unique")
}

/// Binary corpus where the minority class differs from the majority only by
/// a weak marker word that also leaks into some majority documents.
pub fn imbalanced_binary(positives: usize, negatives: usize, leak: f64, seed: u64) -> Dataset {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let shared: Vec<String> = FILLER.iter().take(16).map(|w| w.to_string()).collect();
    let markers: Vec<String> = fine_keywords(0);
    let mut docs = Vec::with_capacity(positives + negatives);
    for i in 0..positives {
        let mut words: Vec<String> = pick(&mut rng, &shared, 5)
            .into_iter()
            .map(String::from)
            .collect();
        words.push(pick(&mut rng, &markers, 1)[0].to_string());
        words.shuffle(&mut rng);
        docs.push(
            Document::new(format!("p{i:04}"), words.join(" "), "fixture")
                .with_label(Task::A, SEXIST),
        );
    }
    for i in 0..negatives {
        let mut words: Vec<String> = pick(&mut rng, &shared, 6)
            .into_iter()
            .map(String::from)
            .collect();
        if rng.gen_bool(leak) {
            words[0] = pick(&mut rng, &markers, 1)[0].to_string();
        }
        words.shuffle(&mut rng);
        docs.push(
            Document::new(format!("n{i:04}"), words.join(" "), "fixture")
                .with_label(Task::A, NON_SEXIST),
        );
    }
    docs.shuffle(&mut rng);
    Dataset::new("imbalanced", Arc::new(LabelHierarchy::canonical()), docs)
        .expect("fixture ids are unique")
}
