use std::collections::BTreeMap;

use rand::seq::index::sample;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::augment::{augment, AugmentationConfig};
use crate::encoding::{check_consistent, SeasonFrame, SourceTag};
use crate::error::{Error, Result};

/// Pooled surveillance and modeled frames sharing one grid shape.
#[derive(Debug, Clone, Default)]
pub struct FrameLibrary {
    frames: Vec<SeasonFrame>,
}

impl FrameLibrary {
    pub fn new(frames: Vec<SeasonFrame>) -> Result<Self> {
        check_consistent(&frames)?;
        let mut seen = std::collections::HashSet::new();
        if let Some(dup) = frames.iter().find(|f| !seen.insert(f.id())) {
            return Err(Error::data(format!("duplicate frame id '{}'", dup.id())));
        }
        Ok(Self { frames })
    }

    pub fn frames(&self) -> &[SeasonFrame] {
        &self.frames
    }

    pub fn len(&self) -> usize {
        self.frames.len()
    }

    pub fn is_empty(&self) -> bool {
        self.frames.is_empty()
    }

    pub fn count(&self, tag: SourceTag) -> usize {
        self.frames.iter().filter(|f| f.source() == tag).count()
    }

    pub fn counts(&self) -> BTreeMap<SourceTag, usize> {
        let mut out = BTreeMap::from([(SourceTag::Surveillance, 0), (SourceTag::Modeled, 0)]);
        for f in &self.frames {
            *out.entry(f.source()).or_default() += 1;
        }
        out
    }

    fn indices(&self, tag: SourceTag) -> Vec<usize> {
        (0..self.frames.len())
            .filter(|&i| self.frames[i].source() == tag)
            .collect()
    }
}

/// Source mix and size of a training set.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetComposition {
    pub surveillance_fraction: f64,
    pub modeled_fraction: f64,
    pub target_size: usize,
}

impl DatasetComposition {
    pub fn new(surveillance_fraction: f64, target_size: usize) -> Self {
        Self {
            surveillance_fraction,
            modeled_fraction: 1.0 - surveillance_fraction,
            target_size,
        }
    }

    /// The four mixes studied for the reference library:
    /// `100S` (520), `100M` (1240), `30S70M` and `70S30M` (3000 each).
    pub fn preset(name: &str) -> Result<Self> {
        match name.to_ascii_uppercase().as_str() {
            "100S" => Ok(Self::new(1.0, 520)),
            "100M" => Ok(Self::new(0.0, 1240)),
            "30S70M" => Ok(Self::new(0.3, 3000)),
            "70S30M" => Ok(Self::new(0.7, 3000)),
            other => Err(Error::invalid(format!("unknown composition preset '{other}'"))),
        }
    }

    pub fn validate(&self) -> Result<()> {
        let (s, m) = (self.surveillance_fraction, self.modeled_fraction);
        if !(0.0..=1.0).contains(&s) || !(0.0..=1.0).contains(&m) || (s + m - 1.0).abs() > 1e-9 {
            return Err(Error::invalid(format!(
                "fractions {s} + {m} must lie in [0, 1] and sum to 1"
            )));
        }
        if self.target_size == 0 {
            return Err(Error::invalid("target_size must be positive"));
        }
        Ok(())
    }

    fn fraction(&self, tag: SourceTag) -> f64 {
        match tag {
            SourceTag::Surveillance => self.surveillance_fraction,
            SourceTag::Modeled => self.modeled_fraction,
        }
    }
}

/// A multiset of library frames: `samples[k]` indexes into `frames`.
#[derive(Debug, Clone)]
pub struct TrainingSet {
    pub frames: Vec<SeasonFrame>,
    pub samples: Vec<usize>,
    pub composition: DatasetComposition,
    pub seed: u64,
}

impl TrainingSet {
    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn n_unique(&self) -> usize {
        let mut seen = vec![false; self.frames.len()];
        for &i in &self.samples {
            seen[i] = true;
        }
        seen.into_iter().filter(|&s| s).count()
    }

    /// Number of samples per source tag.
    pub fn sample_counts(&self) -> BTreeMap<SourceTag, usize> {
        let mut out = BTreeMap::new();
        for &i in &self.samples {
            *out.entry(self.frames[i].source()).or_default() += 1;
        }
        out
    }

    /// Occurrences of each frame id.
    pub fn multiplicities(&self) -> BTreeMap<String, usize> {
        let mut out = BTreeMap::new();
        for &i in &self.samples {
            *out.entry(self.frames[i].id().to_string()).or_default() += 1;
        }
        out
    }

    pub fn sample(&self, k: usize) -> &SeasonFrame {
        &self.frames[self.samples[k]]
    }

    /// All samples with independent augmentation draws; sample `k` uses a
    /// stream derived from `(seed, k)` so the result does not depend on
    /// evaluation order.
    pub fn materialize(&self, cfg: &AugmentationConfig, seed: u64) -> Result<Vec<SeasonFrame>> {
        self.samples
            .iter()
            .enumerate()
            .map(|(k, &i)| {
                let mut rng = ChaCha8Rng::seed_from_u64(seed);
                rng.set_stream(k as u64 + 1);
                augment(&self.frames[i], cfg, &mut rng)
            })
            .collect()
    }
}

/// Build a training multiset. Every frame of a tag with positive fraction is
/// used at least once; per-tag sample counts follow the fractions as closely
/// as that allows. Each tag's frames are cycled in full, and the remainder is
/// drawn without replacement using `seed`.
pub fn compose(library: &FrameLibrary, comp: &DatasetComposition, seed: u64) -> Result<TrainingSet> {
    comp.validate()?;
    let tags = [SourceTag::Surveillance, SourceTag::Modeled];
    let pools: Vec<Vec<usize>> = tags
        .iter()
        .map(|&t| if comp.fraction(t) > 0.0 { library.indices(t) } else { Vec::new() })
        .collect();
    for (tag, pool) in tags.iter().zip(&pools) {
        if comp.fraction(*tag) > 0.0 && pool.is_empty() {
            return Err(Error::data(format!(
                "composition needs {tag} frames but the library has none"
            )));
        }
    }
    let unique: usize = pools.iter().map(Vec::len).sum();
    if comp.target_size < unique {
        return Err(Error::invalid(format!(
            "target size {} is smaller than the {unique} unique frames selected",
            comp.target_size
        )));
    }

    let mut counts = [0usize; 2];
    if pools[1].is_empty() {
        counts[0] = comp.target_size;
    } else if pools[0].is_empty() {
        counts[1] = comp.target_size;
    } else {
        let want = (comp.surveillance_fraction * comp.target_size as f64).round() as usize;
        counts[0] = want.clamp(pools[0].len(), comp.target_size - pools[1].len());
        counts[1] = comp.target_size - counts[0];
    }

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut samples = Vec::with_capacity(comp.target_size);
    for (pool, &n) in pools.iter().zip(&counts) {
        if n == 0 {
            continue;
        }
        for _ in 0..n / pool.len() {
            samples.extend_from_slice(pool);
        }
        let rest = n % pool.len();
        let mut extra: Vec<usize> = sample(&mut rng, pool.len(), rest).into_vec();
        extra.sort_unstable();
        samples.extend(extra.into_iter().map(|j| pool[j]));
    }
    Ok(TrainingSet {
        frames: library.frames.clone(),
        samples,
        composition: comp.clone(),
        seed,
    })
}
