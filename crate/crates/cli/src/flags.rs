//! Flag groups, one per configuration struct.
//!
//! Every flag is optional and overrides the matching field of the config
//! file (or the built-in default). Each also reads `LIPSENSE_<FLAG>` from the
//! environment, with the flag name upper-cased and dashes turned into
//! underscores.

use std::path::{Path, PathBuf};
use std::str::FromStr;

use anyhow::Context;
use clap::{Args, ValueEnum};
use serde::{Deserialize, Serialize};

use lipsense::carrier::CarrierSpace;
use lipsense::features::CarrierFusion;
use lipsense::harness::dataset::{DatasetSpec, ScenarioMix};
use lipsense::harness::eval::ScoreMode;
use lipsense::harness::pipeline::PipelineConfig;
use lipsense::harness::training::MotionSetConfig;
use lipsense::segmentation::EnvelopeInterp;
use lipsense::simulator::SceneOptions;
use lipsense::verification::motion::{Optimizer, TrainConfig};
use lipsense::verification::profile::ProfileConfig;
use lipsense::verification::svm::{ClassWeight, Kernel, Scaling};

/// Everything a config file may set. Missing sections keep their defaults.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct FileConfig {
    pub pipeline: PipelineConfig,
    pub profile: ProfileConfig,
    pub scene: SceneOptions,
    pub carriers: CarrierSpace,
    pub train: TrainConfig,
    pub motion_set: MotionSetConfig,
}

impl FileConfig {
    pub fn load(path: Option<&Path>) -> anyhow::Result<Self> {
        match path {
            None => Ok(Self::default()),
            Some(p) => {
                let text = std::fs::read_to_string(p).with_context(|| format!("reading config {}", p.display()))?;
                serde_json::from_str(&text).with_context(|| format!("parsing config {}", p.display()))
            }
        }
    }
}

/// `a,b`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Pair<T>(pub T, pub T);

impl<T: FromStr> FromStr for Pair<T>
where
    T::Err: std::fmt::Display,
{
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        let (a, b) = s.split_once(',').ok_or_else(|| format!("expected 'a,b', got '{s}'"))?;
        let a = a.trim().parse::<T>().map_err(|e| e.to_string())?;
        let b = b.trim().parse::<T>().map_err(|e| e.to_string())?;
        Ok(Pair(a, b))
    }
}

/// A number, or `off`/`auto` for an unset optional field.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MaybeF64(pub Option<f64>);

impl FromStr for MaybeF64 {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "off" | "auto" | "none" => Ok(MaybeF64(None)),
            v => v.parse().map(|x| MaybeF64(Some(x))).map_err(|e| format!("'{v}': {e}")),
        }
    }
}

fn set<T>(slot: &mut T, value: &Option<T>)
where
    T: Clone,
{
    if let Some(v) = value {
        *slot = v.clone();
    }
}

fn set_pair<T: Copy>(slot: &mut (T, T), value: &Option<Pair<T>>) {
    if let Some(Pair(a, b)) = value {
        *slot = (*a, *b);
    }
}

fn set_maybe(slot: &mut Option<f64>, value: &Option<MaybeF64>) {
    if let Some(MaybeF64(v)) = value {
        *slot = *v;
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum InterpArg {
    Linear,
    Pchip,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum FusionArg {
    Mean,
    Concatenate,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum KernelArg {
    Linear,
    Polynomial,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum ScalingArg {
    None,
    ZScore,
    PositiveAnchored,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum ClassWeightArg {
    Uniform,
    Balanced,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum OptimizerArg {
    Adam,
    Sgd,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum ScoreModeArg {
    Final,
    ConsistencyOnly,
}

impl From<ScoreModeArg> for ScoreMode {
    fn from(m: ScoreModeArg) -> Self {
        match m {
            ScoreModeArg::Final => ScoreMode::Final,
            ScoreModeArg::ConsistencyOnly => ScoreMode::ConsistencyOnly,
        }
    }
}

#[derive(Debug, Clone, Default, Args)]
#[command(next_help_heading = "Pipeline")]
pub struct PipelineArgs {
    #[arg(long, env = "LIPSENSE_DEMOD_BANDPASS_HALFWIDTH_HZ")]
    pub demod_bandpass_halfwidth_hz: Option<f64>,
    #[arg(long, env = "LIPSENSE_DEMOD_BANDPASS_TRANSITION_HZ")]
    pub demod_bandpass_transition_hz: Option<f64>,
    #[arg(long, env = "LIPSENSE_DEMOD_LOWPASS_CUTOFF_HZ")]
    pub demod_lowpass_cutoff_hz: Option<f64>,
    #[arg(long, env = "LIPSENSE_DEMOD_LOWPASS_STOP_HZ")]
    pub demod_lowpass_stop_hz: Option<f64>,
    #[arg(long, env = "LIPSENSE_DEMOD_DOWNSAMPLE_FACTOR")]
    pub demod_downsample_factor: Option<usize>,
    #[arg(long, env = "LIPSENSE_DEMOD_FILTER_STOPBAND_DB")]
    pub demod_filter_stopband_db: Option<f64>,
    /// `lo,hi` in Hz.
    #[arg(long, env = "LIPSENSE_DEMOD_CARRIER_BAND_HZ", value_name = "LO,HI")]
    pub demod_carrier_band_hz: Option<Pair<u32>>,

    #[arg(long, env = "LIPSENSE_DETREND_WINDOW_S")]
    pub detrend_window_s: Option<f64>,
    #[arg(long, env = "LIPSENSE_DETREND_ROBUST_ITERATIONS")]
    pub detrend_robust_iterations: Option<usize>,

    /// Fixed motion threshold, or `auto` to calibrate from the leading silence.
    #[arg(long, env = "LIPSENSE_SEG_T_D")]
    pub seg_t_d: Option<MaybeF64>,
    #[arg(long, env = "LIPSENSE_SEG_T_D_FACTOR")]
    pub seg_t_d_factor: Option<f64>,
    #[arg(long, env = "LIPSENSE_SEG_CALIBRATION_S")]
    pub seg_calibration_s: Option<f64>,
    #[arg(long, env = "LIPSENSE_SEG_T_W_S")]
    pub seg_t_w_s: Option<f64>,
    #[arg(long, env = "LIPSENSE_SEG_VAD_ENERGY_RATIO_DB")]
    pub seg_vad_energy_ratio_db: Option<f64>,
    #[arg(long, env = "LIPSENSE_SEG_VAD_FRAME_S")]
    pub seg_vad_frame_s: Option<f64>,
    #[arg(long, env = "LIPSENSE_SEG_VAD_HOP_S")]
    pub seg_vad_hop_s: Option<f64>,
    #[arg(long, env = "LIPSENSE_SEG_VAD_HANGOVER_S")]
    pub seg_vad_hangover_s: Option<f64>,
    #[arg(long, env = "LIPSENSE_SEG_VAD_MARGIN_S")]
    pub seg_vad_margin_s: Option<f64>,
    #[arg(long, env = "LIPSENSE_SEG_MERGE_GAP_S")]
    pub seg_merge_gap_s: Option<f64>,
    #[arg(long, env = "LIPSENSE_SEG_ENVELOPE_INTERP")]
    pub seg_envelope_interp: Option<InterpArg>,

    #[arg(long, env = "LIPSENSE_FEAT_WINDOW_S")]
    pub feat_window_s: Option<f64>,
    #[arg(long, env = "LIPSENSE_FEAT_OVERLAP_S")]
    pub feat_overlap_s: Option<f64>,
    /// `lo,hi` energy fractions bounding the centroid band.
    #[arg(long, env = "LIPSENSE_FEAT_ENERGY_CLIP", value_name = "LO,HI")]
    pub feat_energy_clip: Option<Pair<f64>>,
    #[arg(long, env = "LIPSENSE_FEAT_NFFT")]
    pub feat_nfft: Option<usize>,
    #[arg(long, env = "LIPSENSE_FEAT_FUSION")]
    pub feat_fusion: Option<FusionArg>,
    #[arg(long, env = "LIPSENSE_FEAT_TRACK_LEN")]
    pub feat_track_len: Option<usize>,

    #[arg(long, env = "LIPSENSE_SNR_GATE_DB", allow_negative_numbers = true)]
    pub snr_gate_db: Option<f64>,
    #[arg(long, env = "LIPSENSE_CARRIER_GATE_DB", allow_negative_numbers = true)]
    pub carrier_gate_db: Option<f64>,
    #[arg(long, env = "LIPSENSE_MOTION_THRESHOLD")]
    pub motion_threshold: Option<f64>,
    #[arg(long, env = "LIPSENSE_RUN_ALL_STAGES", value_name = "BOOL")]
    pub run_all_stages: Option<bool>,
}

impl PipelineArgs {
    pub fn apply(&self, c: &mut PipelineConfig) {
        set(&mut c.demod.bandpass_halfwidth_hz, &self.demod_bandpass_halfwidth_hz);
        set(&mut c.demod.bandpass_transition_hz, &self.demod_bandpass_transition_hz);
        set(&mut c.demod.lowpass_cutoff_hz, &self.demod_lowpass_cutoff_hz);
        set(&mut c.demod.lowpass_stop_hz, &self.demod_lowpass_stop_hz);
        set(&mut c.demod.downsample_factor, &self.demod_downsample_factor);
        set(&mut c.demod.filter_stopband_db, &self.demod_filter_stopband_db);
        set_pair(&mut c.demod.carrier_band_hz, &self.demod_carrier_band_hz);

        set(&mut c.detrend.window_s, &self.detrend_window_s);
        set(&mut c.detrend.robust_iterations, &self.detrend_robust_iterations);

        let s = &mut c.segmentation;
        set_maybe(&mut s.t_d, &self.seg_t_d);
        set(&mut s.t_d_factor, &self.seg_t_d_factor);
        set(&mut s.calibration_s, &self.seg_calibration_s);
        set(&mut s.t_w_s, &self.seg_t_w_s);
        set(&mut s.vad_energy_ratio_db, &self.seg_vad_energy_ratio_db);
        set(&mut s.vad_frame_s, &self.seg_vad_frame_s);
        set(&mut s.vad_hop_s, &self.seg_vad_hop_s);
        set(&mut s.vad_hangover_s, &self.seg_vad_hangover_s);
        set(&mut s.vad_margin_s, &self.seg_vad_margin_s);
        set(&mut s.merge_gap_s, &self.seg_merge_gap_s);
        if let Some(i) = self.seg_envelope_interp {
            s.envelope_interp = match i {
                InterpArg::Linear => EnvelopeInterp::Linear,
                InterpArg::Pchip => EnvelopeInterp::Pchip,
            };
        }

        let f = &mut c.features;
        set(&mut f.window_s, &self.feat_window_s);
        set(&mut f.overlap_s, &self.feat_overlap_s);
        set_pair(&mut f.energy_clip, &self.feat_energy_clip);
        set(&mut f.nfft, &self.feat_nfft);
        if let Some(m) = self.feat_fusion {
            f.fusion = match m {
                FusionArg::Mean => CarrierFusion::Mean,
                FusionArg::Concatenate => CarrierFusion::Concatenate,
            };
        }
        set(&mut f.track_len, &self.feat_track_len);

        set(&mut c.snr_gate_db, &self.snr_gate_db);
        set(&mut c.carrier_gate_db, &self.carrier_gate_db);
        set(&mut c.motion_threshold, &self.motion_threshold);
        set(&mut c.run_all_stages, &self.run_all_stages);
    }
}

#[derive(Debug, Clone, Default, Args)]
#[command(next_help_heading = "Consistency profile")]
pub struct ProfileArgs {
    #[arg(long, env = "LIPSENSE_SVM_KERNEL")]
    pub svm_kernel: Option<KernelArg>,
    #[arg(long, env = "LIPSENSE_SVM_DEGREE")]
    pub svm_degree: Option<u32>,
    /// Kernel gamma, or `auto` for 1/dimension.
    #[arg(long, env = "LIPSENSE_SVM_GAMMA")]
    pub svm_gamma: Option<MaybeF64>,
    #[arg(long, env = "LIPSENSE_SVM_COEF0", allow_negative_numbers = true)]
    pub svm_coef0: Option<f64>,
    #[arg(long, env = "LIPSENSE_SVM_C")]
    pub svm_c: Option<f64>,
    #[arg(long, env = "LIPSENSE_SVM_TOLERANCE")]
    pub svm_tolerance: Option<f64>,
    #[arg(long, env = "LIPSENSE_SVM_MAX_ITER")]
    pub svm_max_iter: Option<usize>,
    #[arg(long, env = "LIPSENSE_SVM_SCALING")]
    pub svm_scaling: Option<ScalingArg>,
    #[arg(long, env = "LIPSENSE_SVM_CLASS_WEIGHT")]
    pub svm_class_weight: Option<ClassWeightArg>,
    #[arg(long, env = "LIPSENSE_PROFILE_MAX_SAMPLES")]
    pub profile_max_samples: Option<usize>,
    #[arg(long, env = "LIPSENSE_PROFILE_MIN_POSITIVES")]
    pub profile_min_positives: Option<usize>,
    #[arg(long, env = "LIPSENSE_PROFILE_THRESHOLD", allow_negative_numbers = true)]
    pub profile_threshold: Option<f64>,
}

impl ProfileArgs {
    pub fn apply(&self, c: &mut ProfileConfig) {
        let svm = &mut c.svm;
        if let Some(k) = self.svm_kernel {
            svm.kernel = match (k, svm.kernel) {
                (KernelArg::Linear, _) => Kernel::Linear,
                (KernelArg::Polynomial, p @ Kernel::Polynomial { .. }) => p,
                (KernelArg::Polynomial, Kernel::Linear) => Kernel::cubic(),
            };
        }
        if let Kernel::Polynomial { degree, gamma, coef0 } = &mut svm.kernel {
            set(degree, &self.svm_degree);
            set_maybe(gamma, &self.svm_gamma);
            set(coef0, &self.svm_coef0);
        }
        set(&mut svm.c, &self.svm_c);
        set(&mut svm.tolerance, &self.svm_tolerance);
        set(&mut svm.max_iter, &self.svm_max_iter);
        if let Some(s) = self.svm_scaling {
            svm.scaling = match s {
                ScalingArg::None => Scaling::None,
                ScalingArg::ZScore => Scaling::ZScore,
                ScalingArg::PositiveAnchored => Scaling::PositiveAnchored,
            };
        }
        if let Some(w) = self.svm_class_weight {
            svm.class_weight = match w {
                ClassWeightArg::Uniform => ClassWeight::Uniform,
                ClassWeightArg::Balanced => ClassWeight::Balanced,
            };
        }
        set(&mut c.max_samples, &self.profile_max_samples);
        set(&mut c.min_positives, &self.profile_min_positives);
        set(&mut c.threshold, &self.profile_threshold);
    }
}

#[derive(Debug, Clone, Default, Args)]
#[command(next_help_heading = "Scene")]
pub struct SceneArgs {
    #[arg(long, env = "LIPSENSE_SCENE_PASSCODE_LEN")]
    pub scene_passcode_len: Option<usize>,
    #[arg(long, env = "LIPSENSE_SCENE_LEAD_S")]
    pub scene_lead_s: Option<f64>,
    #[arg(long, env = "LIPSENSE_SCENE_TAIL_S")]
    pub scene_tail_s: Option<f64>,
    #[arg(long, env = "LIPSENSE_SCENE_GAP_RANGE_S", value_name = "LO,HI")]
    pub scene_gap_range_s: Option<Pair<f64>>,
    #[arg(long, env = "LIPSENSE_SCENE_JITTER")]
    pub scene_jitter: Option<f64>,
    #[arg(long, env = "LIPSENSE_SCENE_BODY_CLUTTER", value_name = "BOOL")]
    pub scene_body_clutter: Option<bool>,
    /// Noise floor in dB full scale, or `off`.
    #[arg(long, env = "LIPSENSE_SCENE_NOISE_FLOOR_DB", allow_negative_numbers = true)]
    pub scene_noise_floor_db: Option<MaybeF64>,
    #[arg(long, env = "LIPSENSE_SCENE_STRUCTURE_GAIN")]
    pub scene_structure_gain: Option<f64>,
    #[arg(long, env = "LIPSENSE_SCENE_AIR_GAIN")]
    pub scene_air_gain: Option<f64>,
    #[arg(long, env = "LIPSENSE_SCENE_REFLECTOR_GAIN")]
    pub scene_reflector_gain: Option<f64>,
    #[arg(long, env = "LIPSENSE_SCENE_LIP_GAIN")]
    pub scene_lip_gain: Option<f64>,
    #[arg(long, env = "LIPSENSE_SCENE_CLUTTER_GAIN")]
    pub scene_clutter_gain: Option<f64>,
}

impl SceneArgs {
    pub fn apply(&self, c: &mut SceneOptions) {
        set(&mut c.passcode_len, &self.scene_passcode_len);
        set(&mut c.lead_s, &self.scene_lead_s);
        set(&mut c.tail_s, &self.scene_tail_s);
        set_pair(&mut c.gap_range_s, &self.scene_gap_range_s);
        set(&mut c.jitter, &self.scene_jitter);
        set(&mut c.body_clutter, &self.scene_body_clutter);
        set_maybe(&mut c.noise_floor_db, &self.scene_noise_floor_db);
        set(&mut c.structure_gain, &self.scene_structure_gain);
        set(&mut c.air_gain, &self.scene_air_gain);
        set(&mut c.reflector_gain, &self.scene_reflector_gain);
        set(&mut c.lip_gain, &self.scene_lip_gain);
        set(&mut c.clutter_gain, &self.scene_clutter_gain);
    }
}

#[derive(Debug, Clone, Default, Args)]
#[command(next_help_heading = "Challenge carriers")]
pub struct CarrierArgs {
    #[arg(long, env = "LIPSENSE_CARRIER_TONES")]
    pub carrier_tones: Option<usize>,
    #[arg(long, env = "LIPSENSE_CARRIER_BAND_HZ", value_name = "LO,HI")]
    pub carrier_band_hz: Option<Pair<u32>>,
    #[arg(long, env = "LIPSENSE_CARRIER_MIN_GAP_HZ")]
    pub carrier_min_gap_hz: Option<u32>,
    #[arg(long, env = "LIPSENSE_CARRIER_GRID_HZ")]
    pub carrier_grid_hz: Option<u32>,
}

impl CarrierArgs {
    pub fn apply(&self, c: &mut CarrierSpace) {
        set(&mut c.n_tones, &self.carrier_tones);
        set_pair(&mut c.band_hz, &self.carrier_band_hz);
        set(&mut c.min_gap_hz, &self.carrier_min_gap_hz);
        set(&mut c.grid_hz, &self.carrier_grid_hz);
    }
}

#[derive(Debug, Clone, Default, Args)]
#[command(next_help_heading = "Motion training")]
pub struct TrainArgs {
    #[arg(long, env = "LIPSENSE_TRAIN_LEARNING_RATE")]
    pub train_learning_rate: Option<f64>,
    #[arg(long, env = "LIPSENSE_TRAIN_MAX_ITER")]
    pub train_max_iter: Option<usize>,
    #[arg(long, env = "LIPSENSE_TRAIN_BATCH_SIZE")]
    pub train_batch_size: Option<usize>,
    #[arg(long, env = "LIPSENSE_TRAIN_OPTIMIZER")]
    pub train_optimizer: Option<OptimizerArg>,
    #[arg(long, env = "LIPSENSE_TRAIN_SEED")]
    pub train_seed: Option<u64>,
    #[arg(long, env = "LIPSENSE_MOTION_SET_POSITIVES")]
    pub motion_set_positives: Option<usize>,
    #[arg(long, env = "LIPSENSE_MOTION_SET_NEGATIVES")]
    pub motion_set_negatives: Option<usize>,
    #[arg(long, env = "LIPSENSE_MOTION_SET_SEED")]
    pub motion_set_seed: Option<u64>,
    #[arg(long, env = "LIPSENSE_MOTION_SET_CLUTTER_FRACTION")]
    pub motion_set_clutter_fraction: Option<f64>,
    #[arg(long, env = "LIPSENSE_MOTION_SET_NEGATIVE_WINDOW_S", value_name = "LO,HI")]
    pub motion_set_negative_window_s: Option<Pair<f64>>,
}

impl TrainArgs {
    pub fn apply(&self, train: &mut TrainConfig, set_cfg: &mut MotionSetConfig) {
        set(&mut train.learning_rate, &self.train_learning_rate);
        set(&mut train.max_iter, &self.train_max_iter);
        set(&mut train.batch_size, &self.train_batch_size);
        if let Some(o) = self.train_optimizer {
            train.optimizer = match o {
                OptimizerArg::Adam => Optimizer::Adam,
                OptimizerArg::Sgd => Optimizer::Sgd,
            };
        }
        set(&mut train.seed, &self.train_seed);
        set(&mut set_cfg.positives, &self.motion_set_positives);
        set(&mut set_cfg.negatives, &self.motion_set_negatives);
        set(&mut set_cfg.seed, &self.motion_set_seed);
        set(&mut set_cfg.clutter_fraction, &self.motion_set_clutter_fraction);
        set_pair(&mut set_cfg.negative_window_s, &self.motion_set_negative_window_s);
    }
}

#[derive(Debug, Clone, Args)]
#[command(next_help_heading = "Dataset")]
pub struct DatasetArgs {
    #[arg(long, env = "LIPSENSE_DATASET_SPEAKERS", default_value_t = 10)]
    pub speakers: usize,
    #[arg(long, env = "LIPSENSE_DATASET_ATTEMPTS", default_value_t = 30)]
    pub attempts_per_speaker: usize,
    #[arg(long, env = "LIPSENSE_DATASET_ENROLL", default_value_t = 5)]
    pub enroll_per_speaker: usize,
    /// Relative weights of genuine,visual,replay,imposter test attempts.
    #[arg(long, env = "LIPSENSE_DATASET_MIX", value_name = "G,V,R,I", default_value = "1,0,0,0")]
    pub mix: String,
    #[arg(long, env = "LIPSENSE_DATASET_SEED", default_value_t = 0)]
    pub seed: u64,
}

impl DatasetArgs {
    pub fn spec(&self, scene: SceneOptions) -> anyhow::Result<DatasetSpec> {
        let w: Vec<f64> = self
            .mix
            .split(',')
            .map(|v| v.trim().parse::<f64>())
            .collect::<Result<_, _>>()
            .with_context(|| format!("parsing --mix '{}'", self.mix))?;
        anyhow::ensure!(w.len() == 4, "--mix needs four weights, got {}", w.len());
        Ok(DatasetSpec {
            speakers: self.speakers,
            attempts_per_speaker: self.attempts_per_speaker,
            enroll_per_speaker: self.enroll_per_speaker,
            mix: ScenarioMix {
                genuine: w[0],
                visual_only: w[1],
                replay: w[2],
                imposter: w[3],
            },
            seed: self.seed,
            scene,
        })
    }
}

/// Path of the motion model and profiles.
#[derive(Debug, Clone, Args)]
pub struct StoreArgs {
    /// Directory holding `motion-model.json` and `profiles/<user>.json`.
    #[arg(long, env = "LIPSENSE_STORE", default_value = "lipsense-store", global = true)]
    pub store: PathBuf,
    /// JSON config file; flags override its fields.
    #[arg(long, env = "LIPSENSE_CONFIG", global = true)]
    pub config: Option<PathBuf>,
}

impl StoreArgs {
    pub fn motion_model(&self) -> PathBuf {
        self.store.join("motion-model.json")
    }

    pub fn profile(&self, user: &str) -> PathBuf {
        self.store.join("profiles").join(format!("{user}.json"))
    }

    pub fn profiles_dir(&self) -> PathBuf {
        self.store.join("profiles")
    }
}
