//! Microphone recordings and their 16-bit PCM WAV form.

use std::io::{Cursor, Read, Seek, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

const PCM_SCALE: f64 = 32_767.0;

/// A mono real waveform. Samples are in full-scale units (|x| <= 1 for
/// anything that must survive a WAV round trip).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Recording {
    pub sample_rate_hz: u32,
    pub samples: Vec<f64>,
}

impl Recording {
    pub fn new(sample_rate_hz: u32, samples: Vec<f64>) -> Self {
        Self { sample_rate_hz, samples }
    }

    pub fn duration_s(&self) -> f64 {
        self.samples.len() as f64 / f64::from(self.sample_rate_hz)
    }

    pub fn rms(&self) -> f64 {
        if self.samples.is_empty() {
            return 0.0;
        }
        (self.samples.iter().map(|x| x * x).sum::<f64>() / self.samples.len() as f64).sqrt()
    }

    /// Quantizes to 16-bit PCM as it would be stored on disk.
    pub fn quantized(&self) -> Self {
        Self {
            sample_rate_hz: self.sample_rate_hz,
            samples: self.samples.iter().map(|&x| f64::from(to_pcm(x)) / PCM_SCALE).collect(),
        }
    }

    pub fn write_wav(&self, path: impl AsRef<Path>) -> Result<()> {
        let file = std::io::BufWriter::new(std::fs::File::create(path)?);
        self.write_wav_to(file)
    }

    pub fn write_wav_to<W: Write + Seek>(&self, sink: W) -> Result<()> {
        let spec = hound::WavSpec {
            channels: 1,
            sample_rate: self.sample_rate_hz,
            bits_per_sample: 16,
            sample_format: hound::SampleFormat::Int,
        };
        let mut writer = hound::WavWriter::new(sink, spec)?;
        for &x in &self.samples {
            writer.write_sample(to_pcm(x))?;
        }
        writer.finalize()?;
        Ok(())
    }

    pub fn to_wav_bytes(&self) -> Result<Vec<u8>> {
        let mut cursor = Cursor::new(Vec::new());
        self.write_wav_to(&mut cursor)?;
        Ok(cursor.into_inner())
    }

    pub fn read_wav(path: impl AsRef<Path>) -> Result<Self> {
        let reader = hound::WavReader::open(path)?;
        Self::from_wav_reader(reader)
    }

    pub fn from_wav_bytes(bytes: &[u8]) -> Result<Self> {
        Self::from_wav_reader(hound::WavReader::new(Cursor::new(bytes))?)
    }

    fn from_wav_reader<R: Read>(reader: hound::WavReader<R>) -> Result<Self> {
        let spec = reader.spec();
        if spec.channels != 1 {
            return Err(Error::Data(format!("expected mono audio, found {} channels", spec.channels)));
        }
        let samples = match (spec.sample_format, spec.bits_per_sample) {
            (hound::SampleFormat::Int, 16) => reader
                .into_samples::<i16>()
                .map(|s| s.map(|v| f64::from(v) / PCM_SCALE))
                .collect::<Result<Vec<_>, _>>()?,
            (hound::SampleFormat::Float, 32) => reader
                .into_samples::<f32>()
                .map(|s| s.map(f64::from))
                .collect::<Result<Vec<_>, _>>()?,
            (format, bits) => {
                return Err(Error::Data(format!("unsupported WAV sample format {format:?}/{bits} bits")));
            }
        };
        Ok(Self {
            sample_rate_hz: spec.sample_rate,
            samples,
        })
    }
}

fn to_pcm(x: f64) -> i16 {
    (x * PCM_SCALE).round().clamp(-32_768.0, 32_767.0) as i16
}
