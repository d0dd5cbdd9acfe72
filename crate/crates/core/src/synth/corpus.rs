use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{generate_scene, GeneratorConfig};
use crate::error::{Error, Result};
use crate::scene::json::SceneDoc;
use crate::scene::FailureScenario;
use crate::{fileio, seed, FORMAT_VERSION};

/// Split fractions: train / validation / test.
pub const SPLIT_FRACTIONS: [f64; 3] = [0.66, 0.17, 0.17];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Split {
    Train,
    Validation,
    Test,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CorpusScene {
    pub split: Split,
    pub scenario: FailureScenario,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Corpus {
    pub config: GeneratorConfig,
    pub scenes: Vec<CorpusScene>,
}

impl Corpus {
    pub fn split(&self, split: Split) -> impl Iterator<Item = &FailureScenario> {
        self.scenes.iter().filter(move |s| s.split == split).map(|s| &s.scenario)
    }

    pub fn scenarios(&self) -> impl Iterator<Item = &FailureScenario> {
        self.scenes.iter().map(|s| &s.scenario)
    }
}

/// Largest-remainder apportionment of `n` scenes over the 66/17/17 split.
/// Remainder ties go to the earlier split. When `n >= 3` and a split would be
/// empty, it takes one scene from the largest split.
pub fn split_counts(n: usize) -> [usize; 3] {
    let quotas: Vec<f64> = SPLIT_FRACTIONS.iter().map(|f| f * n as f64).collect();
    let mut counts: [usize; 3] = [0; 3];
    for (c, q) in counts.iter_mut().zip(&quotas) {
        *c = q.floor() as usize;
    }
    let mut order: Vec<usize> = (0..3).collect();
    order.sort_by(|&a, &b| {
        let ra = quotas[a] - quotas[a].floor();
        let rb = quotas[b] - quotas[b].floor();
        rb.partial_cmp(&ra).unwrap().then(a.cmp(&b))
    });
    let mut left = n - counts.iter().sum::<usize>();
    for &i in order.iter().cycle() {
        if left == 0 {
            break;
        }
        counts[i] += 1;
        left -= 1;
    }
    if n >= 3 {
        for i in 0..3 {
            if counts[i] == 0 {
                let donor = (0..3).max_by_key(|&j| (counts[j], std::cmp::Reverse(j))).unwrap();
                counts[donor] -= 1;
                counts[i] = 1;
            }
        }
    }
    counts
}

/// Generates `n_scenes` scenarios; scene `i` uses seed `derive(seed, i)`.
/// The first scenes are tagged train, then validation, then test.
pub fn build_corpus(config: &GeneratorConfig, n_scenes: usize, seed: u64) -> Result<Corpus> {
    if n_scenes < 3 {
        return Err(Error::Precondition(format!("a corpus needs at least 3 scenes, got {n_scenes}")));
    }
    config.validate()?;
    let scenarios = (0..n_scenes)
        .into_par_iter()
        .map(|i| generate_scene(config, seed::derive(seed, i as u64)).map(|(_, s)| s))
        .collect::<Result<Vec<_>>>()?;
    let [train, validation, _] = split_counts(n_scenes);
    let scenes = scenarios
        .into_iter()
        .enumerate()
        .map(|(i, scenario)| CorpusScene {
            split: if i < train {
                Split::Train
            } else if i < train + validation {
                Split::Validation
            } else {
                Split::Test
            },
            scenario,
        })
        .collect();
    let mut config = config.clone();
    config.rng_seed = seed;
    Ok(Corpus { config, scenes })
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct CorpusDoc {
    format_version: u32,
    config: GeneratorConfig,
    scenes: Vec<CorpusSceneDoc>,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct CorpusSceneDoc {
    split: Split,
    scene: SceneDoc,
}

pub fn corpus_to_json(corpus: &Corpus) -> Result<String> {
    let doc = CorpusDoc {
        format_version: FORMAT_VERSION,
        config: corpus.config.clone(),
        scenes: corpus
            .scenes
            .iter()
            .map(|s| CorpusSceneDoc {
                split: s.split,
                scene: SceneDoc::from_parts(&s.scenario.graph, Some(&s.scenario), None),
            })
            .collect(),
    };
    fileio::to_json(&doc)
}

pub fn parse_corpus(text: &str) -> Result<Corpus> {
    let doc: CorpusDoc = fileio::from_versioned_json(text)?;
    let scenes = doc
        .scenes
        .into_iter()
        .enumerate()
        .map(|(i, s)| {
            if s.scene.format_version.is_some() {
                return Err(Error::InvalidScene(format!("scene {i}: nested scenes carry no format_version")));
            }
            let scenario = s
                .scene
                .into_scene()
                .and_then(|sc| sc.into_scenario())
                .map_err(|e| Error::InvalidScene(format!("scene {i}: {e}")))?;
            Ok(CorpusScene {
                split: s.split,
                scenario,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(Corpus {
        config: doc.config,
        scenes,
    })
}

pub fn save_corpus(corpus: &Corpus, path: &Path) -> Result<()> {
    fileio::write_string(path, &corpus_to_json(corpus)?)
}

pub fn load_corpus(path: &Path) -> Result<Corpus> {
    parse_corpus(&fileio::read_string(path)?)
}
