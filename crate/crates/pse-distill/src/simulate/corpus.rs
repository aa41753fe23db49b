//! Speech/noise corpora and dataset manifests.
//!
//! A corpus is a directory of per-speaker WAVs plus held-out enrollment audio
//! and noise clips:
//!
//! ```text
//! corpus/
//!   speakers/<id>/u000.wav ...   # training/eval source material
//!   enroll/<id>/e000.wav ...     # enrollment, disjoint from the above
//!   noise/n000.wav ...
//! ```
//!
//! The synthetic generator builds the same structure (in memory or on disk)
//! so the whole pipeline runs without external data.

use std::collections::BTreeSet;
use std::fs;
use std::io::{BufRead, BufReader, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::dsp::Waveform;
use crate::error::{Error, Result};
use crate::wav::{read_wav, write_wav};

use super::synth::{mix_seed, speaker_voice, synth_noise_clip, synth_utterance};
use super::Scenario;

#[derive(Debug, Clone)]
pub struct SpeakerData {
    pub id: String,
    pub utterances: Vec<Waveform>,
    pub enrollment: Vec<Waveform>,
}

#[derive(Debug, Clone)]
pub struct Corpus {
    pub speakers: Vec<SpeakerData>,
    pub noise: Vec<Waveform>,
}

/// Parameters of the synthetic corpus generator.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SyntheticCorpusConfig {
    pub speakers: usize,
    pub utterances_per_speaker: usize,
    pub enroll_per_speaker: usize,
    pub noise_clips: usize,
    pub utterance_seconds: f64,
    pub seed: u64,
}

impl Default for SyntheticCorpusConfig {
    fn default() -> Self {
        SyntheticCorpusConfig {
            speakers: 12,
            utterances_per_speaker: 20,
            enroll_per_speaker: 3,
            noise_clips: 24,
            utterance_seconds: 4.0,
            seed: 1234,
        }
    }
}

impl SyntheticCorpusConfig {
    /// Builds the corpus in memory. All audio is already on the 16-bit grid,
    /// so this agrees bit-exactly with a materialize/load round trip.
    pub fn build(&self) -> Corpus {
        let mut speakers = Vec::with_capacity(self.speakers);
        for s in 0..self.speakers {
            let voice = speaker_voice(s, self.speakers, self.seed);
            let utterances = (0..self.utterances_per_speaker)
                .map(|u| {
                    synth_utterance(
                        &voice,
                        mix_seed(self.seed, 0x0a11, (s * 10_000 + u) as u64),
                        self.utterance_seconds,
                    )
                })
                .collect();
            let enrollment = (0..self.enroll_per_speaker)
                .map(|u| {
                    synth_utterance(
                        &voice,
                        mix_seed(self.seed, 0xe9c0, (s * 10_000 + u) as u64),
                        self.utterance_seconds,
                    )
                })
                .collect();
            speakers.push(SpeakerData {
                id: format!("s{s:03}"),
                utterances,
                enrollment,
            });
        }
        let noise = (0..self.noise_clips)
            .map(|c| {
                synth_noise_clip(
                    mix_seed(self.seed, 0x0153, c as u64),
                    self.utterance_seconds.max(4.0) + 2.0,
                )
            })
            .collect();
        Corpus { speakers, noise }
    }
}

impl Corpus {
    /// At least two distinct speakers, one noise clip, and one utterance per
    /// speaker; enrollment must be present and is disjoint by construction.
    pub fn validate_for_training(&self) -> Result<()> {
        if self.speakers.len() < 2 {
            return Err(Error::CorpusTooSmall(format!(
                "need >= 2 speakers, found {}",
                self.speakers.len()
            )));
        }
        if self.noise.is_empty() {
            return Err(Error::CorpusTooSmall("no noise clips".into()));
        }
        for spk in &self.speakers {
            if spk.utterances.is_empty() {
                return Err(Error::CorpusTooSmall(format!("speaker {} has no utterances", spk.id)));
            }
            if spk.enrollment.is_empty() {
                return Err(Error::CorpusTooSmall(format!("speaker {} has no enrollment", spk.id)));
            }
        }
        Ok(())
    }

    pub fn speaker_index(&self, id: &str) -> Option<usize> {
        self.speakers.iter().position(|s| s.id == id)
    }

    /// Writes the corpus layout under `dir` (WAVs are already grid-aligned).
    pub fn write_to_dir(&self, dir: &Path) -> Result<()> {
        for spk in &self.speakers {
            let sdir = dir.join("speakers").join(&spk.id);
            fs::create_dir_all(&sdir)?;
            for (u, wave) in spk.utterances.iter().enumerate() {
                write_wav(&sdir.join(format!("u{u:03}.wav")), wave)?;
            }
            let edir = dir.join("enroll").join(&spk.id);
            fs::create_dir_all(&edir)?;
            for (u, wave) in spk.enrollment.iter().enumerate() {
                write_wav(&edir.join(format!("e{u:03}.wav")), wave)?;
            }
        }
        let ndir = dir.join("noise");
        fs::create_dir_all(&ndir)?;
        for (c, wave) in self.noise.iter().enumerate() {
            write_wav(&ndir.join(format!("n{c:03}.wav")), wave)?;
        }
        Ok(())
    }

    pub fn load(dir: &Path) -> Result<Corpus> {
        let speakers_dir = dir.join("speakers");
        if !speakers_dir.is_dir() {
            return Err(Error::CorpusTooSmall(format!(
                "{} has no speakers/ directory",
                dir.display()
            )));
        }
        let mut speakers = Vec::new();
        let mut ids: Vec<String> = fs::read_dir(&speakers_dir)?
            .filter_map(|e| e.ok())
            .filter(|e| e.path().is_dir())
            .map(|e| e.file_name().to_string_lossy().into_owned())
            .collect();
        ids.sort();
        for id in ids {
            let utterances = read_wav_dir(&speakers_dir.join(&id))?;
            let enroll_dir = dir.join("enroll").join(&id);
            let enrollment = if enroll_dir.is_dir() {
                read_wav_dir(&enroll_dir)?
            } else {
                Vec::new()
            };
            speakers.push(SpeakerData {
                id,
                utterances,
                enrollment,
            });
        }
        let noise_dir = dir.join("noise");
        let noise = if noise_dir.is_dir() {
            read_wav_dir(&noise_dir)?
        } else {
            Vec::new()
        };
        Ok(Corpus { speakers, noise })
    }
}

fn read_wav_dir(dir: &Path) -> Result<Vec<Waveform>> {
    let mut paths: Vec<PathBuf> = fs::read_dir(dir)?
        .filter_map(|e| e.ok())
        .map(|e| e.path())
        .filter(|p| p.extension().map(|x| x == "wav").unwrap_or(false))
        .collect();
    paths.sort();
    paths.iter().map(|p| read_wav(p)).collect()
}

// ─── Dataset manifests ──────────────────────────────────────────────────────

/// One dataset record; paths are relative to the manifest's directory.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ManifestRecord {
    pub mixture: String,
    pub clean_target: String,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub interference: Option<String>,
    pub noise: String,
    pub scenario: Scenario,
    pub snr_db: f64,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub sir_db: Option<f64>,
    pub is_its: bool,
    pub target_speaker_id: String,
    pub enrollment: Vec<String>,
    pub seed: u64,
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
pub struct DatasetManifest {
    pub records: Vec<ManifestRecord>,
}

impl DatasetManifest {
    /// JSON Lines, one record per line, UTF-8.
    pub fn save_jsonl(&self, path: &Path) -> Result<()> {
        if let Some(parent) = path.parent() {
            fs::create_dir_all(parent)?;
        }
        let mut file = fs::File::create(path)?;
        for record in &self.records {
            serde_json::to_writer(&mut file, record)?;
            file.write_all(b"\n")?;
        }
        Ok(())
    }

    pub fn load_jsonl(path: &Path) -> Result<DatasetManifest> {
        let reader = BufReader::new(fs::File::open(path)?);
        let mut records = Vec::new();
        for line in reader.lines() {
            let line = line?;
            if line.trim().is_empty() {
                continue;
            }
            records.push(serde_json::from_str(&line)?);
        }
        Ok(DatasetManifest { records })
    }

    /// Every referenced file exists (as 16 kHz mono WAV) and record seeds are
    /// unique.
    pub fn validate(&self, base_dir: &Path) -> Result<()> {
        let mut seeds = BTreeSet::new();
        for record in &self.records {
            if !seeds.insert(record.seed) {
                return Err(Error::Manifest(format!("duplicate seed {}", record.seed)));
            }
            let mut paths = vec![&record.mixture, &record.clean_target, &record.noise];
            if let Some(i) = &record.interference {
                paths.push(i);
            }
            for rel in paths {
                let path = base_dir.join(rel);
                read_wav(&path)?;
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tiny_corpus_cfg() -> SyntheticCorpusConfig {
        SyntheticCorpusConfig {
            speakers: 3,
            utterances_per_speaker: 2,
            enroll_per_speaker: 1,
            noise_clips: 2,
            utterance_seconds: 1.0,
            seed: 7,
        }
    }

    #[test]
    fn synthetic_corpus_materialize_load_roundtrip() {
        let cfg = tiny_corpus_cfg();
        let corpus = cfg.build();
        corpus.validate_for_training().unwrap();
        let dir = tempfile::tempdir().unwrap();
        corpus.write_to_dir(dir.path()).unwrap();
        let loaded = Corpus::load(dir.path()).unwrap();
        assert_eq!(loaded.speakers.len(), corpus.speakers.len());
        for (a, b) in corpus.speakers.iter().zip(loaded.speakers.iter()) {
            assert_eq!(a.id, b.id);
            assert_eq!(a.utterances.len(), b.utterances.len());
            for (ua, ub) in a.utterances.iter().zip(b.utterances.iter()) {
                assert_eq!(ua.samples(), ub.samples());
            }
        }
        assert_eq!(corpus.noise[0].samples(), loaded.noise[0].samples());
    }

    #[test]
    fn corpus_validation() {
        let mut cfg = tiny_corpus_cfg();
        cfg.speakers = 1;
        assert!(cfg.build().validate_for_training().is_err());
        let mut corpus = tiny_corpus_cfg().build();
        corpus.noise.clear();
        assert!(corpus.validate_for_training().is_err());
    }

    #[test]
    fn manifest_roundtrip_and_validation() {
        let dir = tempfile::tempdir().unwrap();
        let wave = Waveform::new(vec![0.1; 400]);
        for name in ["m.wav", "c.wav", "n.wav"] {
            write_wav(&dir.path().join(name), &wave).unwrap();
        }
        let record = ManifestRecord {
            mixture: "m.wav".into(),
            clean_target: "c.wav".into(),
            interference: None,
            noise: "n.wav".into(),
            scenario: Scenario::Ts2,
            snr_db: 5.0,
            sir_db: None,
            is_its: false,
            target_speaker_id: "s000".into(),
            enrollment: vec![],
            seed: 1,
        };
        let manifest = DatasetManifest {
            records: vec![record.clone()],
        };
        let mpath = dir.path().join("manifest.jsonl");
        manifest.save_jsonl(&mpath).unwrap();
        let loaded = DatasetManifest::load_jsonl(&mpath).unwrap();
        assert_eq!(loaded.records.len(), 1);
        assert_eq!(loaded.records[0].seed, 1);
        loaded.validate(dir.path()).unwrap();

        // Duplicate seeds rejected.
        let dup = DatasetManifest {
            records: vec![record.clone(), record],
        };
        assert!(dup.validate(dir.path()).is_err());
    }
}
