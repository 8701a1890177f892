use std::collections::HashMap;
use std::fmt::Write as _;

use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;
use rand_distr::{Distribution, Normal};

use crate::embedding::{format_embedding_line, parse_embedding_file, Embedding, EmbeddingLine};
use crate::error::{Error, Result};

#[derive(Clone, Debug, PartialEq)]
pub enum Provenance {
    Synthetic(SyntheticConfig),
    Ingested(String),
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SyntheticConfig {
    pub speakers: usize,
    pub utterances: usize,
    pub dim: usize,
    pub sigma_within: f64,
    pub sigma_between: f64,
    pub seed: u64,
}

impl Default for SyntheticConfig {
    fn default() -> Self {
        Self {
            speakers: 50,
            utterances: 10,
            dim: 192,
            sigma_within: 0.3,
            sigma_between: 1.0,
            seed: 2024,
        }
    }
}

/// Embeddings grouped by speaker, in first-seen speaker order.
#[derive(Clone, Debug, PartialEq)]
pub struct SpeakerDataset {
    speakers: Vec<(String, Vec<Embedding>)>,
    dim: usize,
    provenance: Provenance,
}

impl SpeakerDataset {
    pub fn new(speakers: Vec<(String, Vec<Embedding>)>, provenance: Provenance) -> Result<Self> {
        if speakers.len() < 2 {
            return Err(Error::InvalidParameter("a dataset needs at least two speakers".into()));
        }
        let dim = speakers[0].1.first().map(Embedding::dim).unwrap_or(0);
        for (id, utts) in &speakers {
            if utts.len() < 2 {
                return Err(Error::InvalidParameter(format!("speaker {id:?} has fewer than two embeddings")));
            }
            if let Some(e) = utts.iter().find(|e| e.dim() != dim) {
                return Err(Error::DimensionMismatch {
                    expected: dim,
                    actual: e.dim(),
                });
            }
        }
        Ok(Self {
            speakers,
            dim,
            provenance,
        })
    }

    pub fn from_lines(lines: Vec<EmbeddingLine>, source: impl Into<String>) -> Result<Self> {
        let mut order: Vec<(String, Vec<Embedding>)> = Vec::new();
        let mut index: HashMap<String, usize> = HashMap::new();
        for (i, line) in lines.into_iter().enumerate() {
            let id = line
                .speaker
                .ok_or_else(|| Error::parse(i + 1, "dataset lines need a `<speaker_id>:` prefix"))?;
            let slot = *index.entry(id.clone()).or_insert_with(|| {
                order.push((id, Vec::new()));
                order.len() - 1
            });
            order[slot].1.push(line.embedding);
        }
        Self::new(order, Provenance::Ingested(source.into()))
    }

    pub fn parse(text: &str, source: impl Into<String>) -> Result<Self> {
        Self::from_lines(parse_embedding_file(text)?, source)
    }

    pub fn to_text(&self) -> String {
        let mut out = String::new();
        if let Provenance::Synthetic(c) = &self.provenance {
            writeln!(
                out,
                "# synthetic speakers={} utterances={} dim={} sigma_within={} sigma_between={} seed={}",
                c.speakers, c.utterances, c.dim, c.sigma_within, c.sigma_between, c.seed
            )
            .unwrap();
        }
        for (id, utts) in &self.speakers {
            for e in utts {
                out.push_str(&format_embedding_line(Some(id), e));
                out.push('\n');
            }
        }
        out
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn provenance(&self) -> &Provenance {
        &self.provenance
    }

    pub fn speakers(&self) -> impl Iterator<Item = (&str, &[Embedding])> {
        self.speakers.iter().map(|(id, e)| (id.as_str(), e.as_slice()))
    }

    pub fn speaker_count(&self) -> usize {
        self.speakers.len()
    }

    /// `(speaker index, embedding)` for every utterance, speaker-major.
    pub fn flatten(&self) -> Vec<(usize, &Embedding)> {
        self.speakers
            .iter()
            .enumerate()
            .flat_map(|(s, (_, utts))| utts.iter().map(move |e| (s, e)))
            .collect()
    }
}

/// Speaker centers `mu_s ~ N(0, sigma_between^2 I)`; each utterance is
/// `mu_s + N(0, sigma_within^2 I)` scaled to unit length.
pub fn generate_synthetic(config: &SyntheticConfig) -> Result<SpeakerDataset> {
    let SyntheticConfig {
        speakers,
        utterances,
        dim,
        sigma_within,
        sigma_between,
        seed,
    } = *config;
    if speakers < 2 || utterances < 2 {
        return Err(Error::InvalidParameter("need at least 2 speakers and 2 utterances each".into()));
    }
    if dim == 0 {
        return Err(Error::InvalidParameter("dimension must be positive".into()));
    }
    if !(sigma_within.is_finite() && sigma_within >= 0.0) || !(sigma_between.is_finite() && sigma_between > 0.0) {
        return Err(Error::InvalidParameter(
            "sigma_within must be >= 0 and sigma_between > 0".into(),
        ));
    }
    let mut rng = ChaCha20Rng::seed_from_u64(seed);
    let between = Normal::new(0.0, sigma_between).expect("validated sigma");
    let within = Normal::new(0.0, sigma_within).expect("validated sigma");
    let mut out = Vec::with_capacity(speakers);
    for s in 0..speakers {
        let center: Vec<f64> = (0..dim).map(|_| between.sample(&mut rng)).collect();
        let mut utts = Vec::with_capacity(utterances);
        for _ in 0..utterances {
            let raw: Vec<f64> = center.iter().map(|c| c + within.sample(&mut rng)).collect();
            let norm = raw.iter().map(|v| v * v).sum::<f64>().sqrt();
            if norm == 0.0 {
                return Err(Error::Degenerate("zero-length synthetic embedding".into()));
            }
            utts.push(Embedding::new(raw.into_iter().map(|v| v / norm).collect())?);
        }
        out.push((format!("spk{s:04}"), utts));
    }
    SpeakerDataset::new(out, Provenance::Synthetic(*config))
}
