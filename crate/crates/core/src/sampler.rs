//! Length-stratified document sampling.
//!
//! The sample size is apportioned across SHORT/MEDIUM/LONG with the
//! largest-remainder method. When a band cannot supply its share the shortfall
//! is re-apportioned over the bands that still have documents left. Within a
//! band, documents are drawn uniformly without replacement from a
//! [`SeededRng`](crate::seed::SeededRng) over the band's doc ids in sorted
//! order, so the sample does not depend on input order.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::complexity::{ComplexityProfile, LengthBand};
use crate::corpus::LegalDocument;
use crate::seed::{largest_remainder, SeededRng};

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum SampleError {
    #[error("band proportions sum to {0}, expected 1")]
    NotNormalized(f64),
    #[error("band proportions must be finite and non-negative")]
    NegativeProportion,
    #[error("sample size must be at least 1")]
    ZeroSize,
    #[error("requested {requested} documents but the corpus holds {available}")]
    TooLarge { requested: usize, available: usize },
    #[error("no complexity profile for document '{0}'")]
    MissingProfile(String),
}

/// Per-band proportions in SHORT, MEDIUM, LONG order.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BandProportions(pub [f64; 3]);

impl BandProportions {
    pub fn get(&self, band: LengthBand) -> f64 {
        self.0[band.index()]
    }

    /// Proportions observed in a set of band counts.
    pub fn from_counts(counts: [usize; 3]) -> Self {
        let total: usize = counts.iter().sum();
        let total = total.max(1) as f64;
        Self(counts.map(|c| c as f64 / total))
    }

    fn validate(&self) -> Result<(), SampleError> {
        if self.0.iter().any(|p| !p.is_finite() || *p < 0.0) {
            return Err(SampleError::NegativeProportion);
        }
        let sum: f64 = self.0.iter().sum();
        if (sum - 1.0).abs() > 1e-9 {
            return Err(SampleError::NotNormalized(sum));
        }
        Ok(())
    }
}

impl From<BTreeMap<LengthBand, f64>> for BandProportions {
    fn from(map: BTreeMap<LengthBand, f64>) -> Self {
        let mut out = [0.0; 3];
        for (band, p) in map {
            out[band.index()] = p;
        }
        Self(out)
    }
}

/// Number of documents to draw from each band.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct StrataAllocation {
    pub per_band: [usize; 3],
}

impl StrataAllocation {
    pub fn get(&self, band: LengthBand) -> usize {
        self.per_band[band.index()]
    }

    pub fn total(&self) -> usize {
        self.per_band.iter().sum()
    }
}

/// Largest-remainder apportionment of `n` over `proportions`; ties go to
/// the shorter band.
pub fn allocate(proportions: &BandProportions, n: usize) -> Result<StrataAllocation, SampleError> {
    proportions.validate()?;
    if n == 0 {
        return Err(SampleError::ZeroSize);
    }
    let seats = largest_remainder(&proportions.0, n);
    Ok(StrataAllocation {
        per_band: [seats[0], seats[1], seats[2]],
    })
}

/// Allocation capped by what each band can supply, with the deficit
/// re-apportioned over bands that still have capacity. Requires
/// `n <= sum(available)`.
pub fn allocate_capped(
    proportions: &BandProportions,
    n: usize,
    available: [usize; 3],
) -> Result<StrataAllocation, SampleError> {
    let total_available: usize = available.iter().sum();
    if n > total_available {
        return Err(SampleError::TooLarge {
            requested: n,
            available: total_available,
        });
    }
    let mut per_band = allocate(proportions, n)?.per_band;
    let mut deficit = 0;
    for b in 0..3 {
        if per_band[b] > available[b] {
            deficit += per_band[b] - available[b];
            per_band[b] = available[b];
        }
    }
    while deficit > 0 {
        let spare: Vec<usize> = (0..3).map(|b| available[b] - per_band[b]).collect();
        let mut weights: Vec<f64> = (0..3)
            .map(|b| if spare[b] > 0 { proportions.0[b] } else { 0.0 })
            .collect();
        if weights.iter().all(|&w| w == 0.0) {
            // only bands the target gave no weight still have room
            weights = spare.iter().map(|&s| s as f64).collect();
        }
        let extra = largest_remainder(&weights, deficit);
        deficit = 0;
        for b in 0..3 {
            let take = extra[b].min(spare[b]);
            per_band[b] += take;
            deficit += extra[b] - take;
        }
    }
    Ok(StrataAllocation { per_band })
}

fn band_members<'a>(
    corpus: &'a [LegalDocument],
    profiles: &BTreeMap<String, ComplexityProfile>,
) -> Result<[Vec<&'a LegalDocument>; 3], SampleError> {
    let mut members: [Vec<&LegalDocument>; 3] = Default::default();
    for doc in corpus {
        let profile = profiles
            .get(&doc.doc_id)
            .ok_or_else(|| SampleError::MissingProfile(doc.doc_id.clone()))?;
        members[profile.band.index()].push(doc);
    }
    for band in members.iter_mut() {
        band.sort_by(|a, b| a.doc_id.cmp(&b.doc_id));
    }
    Ok(members)
}

/// Band counts of a profiled corpus.
pub fn band_counts(
    corpus: &[LegalDocument],
    profiles: &BTreeMap<String, ComplexityProfile>,
) -> Result<[usize; 3], SampleError> {
    Ok(band_members(corpus, profiles)?.map(|m| m.len()))
}

/// Samples `n` documents keeping the corpus's own band proportions.
pub fn stratified_sample(
    corpus: &[LegalDocument],
    profiles: &BTreeMap<String, ComplexityProfile>,
    n: usize,
    seed: u64,
) -> Result<Vec<LegalDocument>, SampleError> {
    let counts = band_counts(corpus, profiles)?;
    stratified_sample_with(corpus, profiles, &BandProportions::from_counts(counts), n, seed)
}

/// Samples `n` documents aiming for explicit target proportions. Output is
/// sorted by doc id.
pub fn stratified_sample_with(
    corpus: &[LegalDocument],
    profiles: &BTreeMap<String, ComplexityProfile>,
    proportions: &BandProportions,
    n: usize,
    seed: u64,
) -> Result<Vec<LegalDocument>, SampleError> {
    if n == 0 {
        return Err(SampleError::ZeroSize);
    }
    if n > corpus.len() {
        return Err(SampleError::TooLarge {
            requested: n,
            available: corpus.len(),
        });
    }
    let members = band_members(corpus, profiles)?;
    let available = [members[0].len(), members[1].len(), members[2].len()];
    let allocation = allocate_capped(proportions, n, available)?;

    let mut rng = SeededRng::new(seed);
    let mut picked: Vec<LegalDocument> = Vec::with_capacity(n);
    for band in LengthBand::ALL {
        let pool = &members[band.index()];
        let take = allocation.get(band);
        for idx in rng.sample_indices(pool.len(), take) {
            picked.push(pool[idx].clone());
        }
    }
    picked.sort_by(|a, b| a.doc_id.cmp(&b.doc_id));
    Ok(picked)
}
