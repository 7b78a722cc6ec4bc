//! Class-balanced few-shot task sampling.
//!
//! Draw order is fixed: classes, then one permutation per chosen class
//! (in class order), from which support, query and test are consecutive
//! slices. Growing the support size therefore grows the support set by
//! prefix, and the test size never affects support or query.

use std::collections::HashSet;

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use crate::datamodel::DatasetManifest;
use crate::error::{Error, Result};
use crate::rng::rng_from_seed;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Setting {
    Inductive,
    Transductive,
}

impl Setting {
    pub fn name(&self) -> &'static str {
        match self {
            Setting::Inductive => "inductive",
            Setting::Transductive => "transductive",
        }
    }
}

impl std::str::FromStr for Setting {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "inductive" => Ok(Setting::Inductive),
            "transductive" => Ok(Setting::Transductive),
            o => Err(Error::validation(format!("unknown setting {o:?}"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct EpisodeConfig {
    pub ways: usize,
    pub n_support: usize,
    pub n_query: usize,
    pub n_test: usize,
    pub seed: u64,
    pub setting: Setting,
}

impl Default for EpisodeConfig {
    fn default() -> Self {
        EpisodeConfig {
            ways: 5,
            n_support: 5,
            n_query: 0,
            n_test: 100,
            seed: 0,
            setting: Setting::Inductive,
        }
    }
}

impl EpisodeConfig {
    /// Transductive task with `n_support + n_query = total_labeled_pool`.
    pub fn transductive(ways: usize, n_support: usize, pool: usize, n_test: usize, seed: u64) -> Self {
        EpisodeConfig {
            ways,
            n_support,
            n_query: pool.saturating_sub(n_support),
            n_test,
            seed,
            setting: Setting::Transductive,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let w = self.ways;
        if w < 2 {
            return Err(Error::validation(format!("ways must be >= 2, got {w}")));
        }
        if self.n_support < w || !self.n_support.is_multiple_of(w) {
            return Err(Error::validation(format!(
                "support size {} must be a positive multiple of ways {w}",
                self.n_support
            )));
        }
        if !self.n_query.is_multiple_of(w) || !self.n_test.is_multiple_of(w) {
            return Err(Error::validation(format!(
                "query size {} and test size {} must be multiples of ways {w}",
                self.n_query, self.n_test
            )));
        }
        if self.setting == Setting::Inductive && self.n_query != 0 {
            return Err(Error::validation("inductive episodes have no query set"));
        }
        Ok(())
    }

    fn per_class(&self) -> (usize, usize, usize) {
        let w = self.ways;
        (self.n_support / w, self.n_query / w, self.n_test / w)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LabeledItem {
    pub image_id: String,
    /// Index into [`Episode::classes`].
    pub label: usize,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Episode {
    pub seed: u64,
    pub classes: Vec<String>,
    pub support: Vec<LabeledItem>,
    /// Labels are kept for scoring pseudolabels but never used for training.
    pub query: Vec<LabeledItem>,
    pub test: Vec<LabeledItem>,
}

impl Episode {
    pub fn ways(&self) -> usize {
        self.classes.len()
    }

    pub fn check_invariants(&self, config: &EpisodeConfig) -> Result<()> {
        let mut seen = HashSet::new();
        for item in self.support.iter().chain(&self.query).chain(&self.test) {
            if !seen.insert(item.image_id.as_str()) {
                return Err(Error::Internal(format!("image {} drawn twice", item.image_id)));
            }
        }
        let (s, q, t) = config.per_class();
        for c in 0..self.ways() {
            let count = |v: &[LabeledItem]| v.iter().filter(|i| i.label == c).count();
            if count(&self.support) != s || count(&self.query) != q || count(&self.test) != t {
                return Err(Error::Internal(format!("class {c} is unbalanced")));
            }
        }
        Ok(())
    }
}

pub fn sample_episode(manifest: &DatasetManifest, config: &EpisodeConfig) -> Result<Episode> {
    config.validate()?;
    if manifest.classes.len() < config.ways {
        return Err(Error::validation(format!(
            "manifest {} has {} classes, episode needs {}",
            manifest.name,
            manifest.classes.len(),
            config.ways
        )));
    }
    let mut rng = rng_from_seed(config.seed);
    let mut class_idx: Vec<usize> = (0..manifest.classes.len()).collect();
    let (chosen, _) = class_idx.partial_shuffle(&mut rng, config.ways);
    let chosen: Vec<usize> = chosen.to_vec();

    let by_class = manifest.by_class();
    let (s, q, t) = config.per_class();
    let needed = s + q + t;
    let mut episode = Episode {
        seed: config.seed,
        classes: chosen.iter().map(|&c| manifest.classes[c].clone()).collect(),
        support: Vec::with_capacity(config.n_support),
        query: Vec::with_capacity(config.n_query),
        test: Vec::with_capacity(config.n_test),
    };
    for (label, &c) in chosen.iter().enumerate() {
        let name = &manifest.classes[c];
        let pool = by_class.get(name.as_str()).map(Vec::as_slice).unwrap_or(&[]);
        if pool.len() < needed {
            return Err(Error::InsufficientImages {
                class: name.clone(),
                needed,
                available: pool.len(),
            });
        }
        let mut order: Vec<usize> = (0..pool.len()).collect();
        order.shuffle(&mut rng);
        let item = |i: usize| LabeledItem {
            image_id: pool[order[i]].id.clone(),
            label,
        };
        episode.support.extend((0..s).map(item));
        episode.query.extend((s..s + q).map(item));
        episode.test.extend((s + q..needed).map(item));
    }
    Ok(episode)
}
