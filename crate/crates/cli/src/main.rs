//! `lipsense` command-line tool.

mod flags;

use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Parser, Subcommand};

use lipsense::carrier::{draw_carriers, CarrierSet};
use lipsense::harness::dataset::{generate_dataset, Manifest};
use lipsense::harness::eval::{evaluate, EvalConfig};
use lipsense::harness::export::{
    read_features_csv, write_baseband_csv, write_features_csv, write_fragments_csv, write_motion_csv, write_to_path,
};
use lipsense::harness::metrics::write_roc_csv;
use lipsense::harness::pipeline::{analyze, extract_features, run_detection, DetectionOutcome};
use lipsense::harness::training::motion_training_set;
use lipsense::recording::Recording;
use lipsense::simulator::{
    make_attack_scene, make_genuine_scene, simulate, AttackInputs, AttackKind, GroundTruth, Scene, SpeakerParams,
};
use lipsense::verification::motion::{train_motion_verifier, MotionVerifierModel};
use lipsense::verification::profile::{enroll, UserProfile};

use flags::{
    CarrierArgs, DatasetArgs, FileConfig, PipelineArgs, ProfileArgs, SceneArgs, ScoreModeArg, StoreArgs, TrainArgs,
};

#[derive(Debug, Parser)]
#[command(name = "lipsense", version, about = "Acoustic lip-motion liveness detection")]
struct Cli {
    #[command(flatten)]
    store: StoreArgs,
    #[command(subcommand)]
    command: Command,
}

/// Where a speaker's lip parameters come from.
#[derive(Debug, Clone, clap::Args)]
#[command(next_help_heading = "Speakers")]
struct SpeakerSource {
    /// Take speakers from this dataset's manifest instead of a fresh population.
    #[arg(long)]
    speakers_from: Option<PathBuf>,
    #[arg(long, env = "LIPSENSE_POPULATION_SIZE", default_value_t = 10)]
    population_size: usize,
    #[arg(long, env = "LIPSENSE_POPULATION_SEED", default_value_t = 0)]
    population_seed: u64,
}

impl SpeakerSource {
    fn speaker(&self, index: usize) -> Result<SpeakerParams> {
        let speakers = match &self.speakers_from {
            Some(dir) => Manifest::load(dir)?.speakers,
            None => SpeakerParams::population(self.population_size, self.population_seed),
        };
        speakers
            .get(index)
            .cloned()
            .with_context(|| format!("speaker {index} not in a population of {}", speakers.len()))
    }
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Count the challenge space and optionally draw one challenge.
    Carriers {
        /// Draw the challenge for this seed.
        #[arg(long)]
        seed: Option<u64>,
        #[command(flatten)]
        carriers: CarrierArgs,
    },
    /// Write a scene JSON for one attempt.
    NewScene {
        #[arg(long, default_value = "genuine")]
        kind: String,
        /// Targeted (or speaking) speaker.
        #[arg(long, default_value_t = 0)]
        speaker: usize,
        /// Attacker for `--kind imposter`.
        #[arg(long)]
        attacker: Option<usize>,
        /// Earlier recording played back by `--kind replay`.
        #[arg(long)]
        prior: Option<PathBuf>,
        /// Challenge seed.
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value_t = 0)]
        scene_seed: u64,
        #[arg(long)]
        out: PathBuf,
        #[command(flatten)]
        speakers: SpeakerSource,
        #[command(flatten)]
        scene: SceneArgs,
        #[command(flatten)]
        carriers: CarrierArgs,
    },
    /// Render a scene JSON to a WAV and a ground-truth sidecar.
    Simulate {
        #[arg(long)]
        scene: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Sidecar path; defaults to `<out stem>.truth.json`.
        #[arg(long)]
        truth: Option<PathBuf>,
        /// Override the scene's duration.
        #[arg(long)]
        duration_s: Option<f64>,
    },
    /// Generate a labelled dataset directory.
    GenDataset {
        #[arg(long)]
        out: PathBuf,
        #[command(flatten)]
        dataset: DatasetArgs,
        #[command(flatten)]
        scene: SceneArgs,
    },
    /// Train the motion verifier on synthetic fragments and store it.
    TrainMotion {
        /// Hold out every k-th fragment and report accuracy on them (0: none).
        #[arg(long, default_value_t = 5)]
        held_out_every: usize,
        /// Model path; defaults to the store.
        #[arg(long)]
        out: Option<PathBuf>,
        #[command(flatten)]
        train: TrainArgs,
        #[command(flatten)]
        scene: SceneArgs,
        #[command(flatten)]
        pipeline: PipelineArgs,
    },
    /// Enroll a user from recordings with ground-truth sidecars.
    Enroll {
        #[arg(long)]
        user: String,
        /// Glob of enrollment WAVs; each needs a `<stem>.truth.json` sidecar.
        #[arg(long)]
        recordings: String,
        /// Glob of other people's WAVs to train against.
        #[arg(long)]
        negatives: Option<String>,
        /// Feature CSV of negatives to train against.
        #[arg(long)]
        negative_features: Option<PathBuf>,
        /// Expected characters per passcode.
        #[arg(long, env = "LIPSENSE_PASSCODE_LEN", default_value_t = 4)]
        passcode_len: usize,
        #[command(flatten)]
        pipeline: PipelineArgs,
        #[command(flatten)]
        profile: ProfileArgs,
    },
    /// Check one attempt. Exit code 0 accepts, 1 rejects, 2 is an error.
    Detect {
        #[arg(long)]
        user: String,
        #[arg(long)]
        recording: PathBuf,
        /// Seed of the challenge that was played.
        #[arg(long)]
        seed: u64,
        #[arg(long, env = "LIPSENSE_PASSCODE_LEN", default_value_t = 4)]
        passcode_len: usize,
        /// File the attempt into the profile and retrain.
        #[arg(long)]
        update: bool,
        /// Motion model path; defaults to the store.
        #[arg(long)]
        motion_model: Option<PathBuf>,
        #[command(flatten)]
        carriers: CarrierArgs,
        #[command(flatten)]
        pipeline: PipelineArgs,
    },
    /// Synthesize an attack recording, optionally checking it against a user.
    Attack {
        #[arg(long, value_parser = ["visual", "visual-only", "replay", "imposter"])]
        kind: String,
        /// Targeted speaker.
        #[arg(long, default_value_t = 0)]
        target: usize,
        #[arg(long)]
        attacker: Option<usize>,
        #[arg(long)]
        prior: Option<PathBuf>,
        /// Seed of the fresh challenge.
        #[arg(long)]
        seed: u64,
        #[arg(long, default_value_t = 0)]
        scene_seed: u64,
        #[arg(long)]
        out: PathBuf,
        /// Run detection against this user's profile; sets the exit code.
        #[arg(long)]
        user: Option<String>,
        #[arg(long)]
        motion_model: Option<PathBuf>,
        #[command(flatten)]
        speakers: SpeakerSource,
        #[command(flatten)]
        scene: SceneArgs,
        #[command(flatten)]
        carriers: CarrierArgs,
        #[command(flatten)]
        pipeline: PipelineArgs,
    },
    /// Evaluate a dataset; writes a JSON report and the ROC as CSV.
    Eval {
        #[arg(long)]
        dataset: PathBuf,
        #[arg(long)]
        report: PathBuf,
        /// ROC CSV path; defaults to `<report stem>.roc.csv`.
        #[arg(long)]
        roc: Option<PathBuf>,
        #[arg(long, env = "LIPSENSE_EVAL_SCORE_MODE", default_value = "final")]
        score_mode: ScoreModeArg,
        #[arg(long, env = "LIPSENSE_EVAL_CROSS_SCORE", default_value_t = true, action = clap::ArgAction::Set)]
        cross_score: bool,
        #[arg(long)]
        motion_model: Option<PathBuf>,
        #[command(flatten)]
        pipeline: PipelineArgs,
        #[command(flatten)]
        profile: ProfileArgs,
    },
    /// Export intermediate signals of one recording as CSV.
    Export {
        #[arg(long)]
        recording: PathBuf,
        /// Challenge seed; without it the carriers come from the sidecar.
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long, env = "LIPSENSE_PASSCODE_LEN", default_value_t = 4)]
        passcode_len: usize,
        #[arg(long)]
        out_dir: PathBuf,
        #[command(flatten)]
        carriers: CarrierArgs,
        #[command(flatten)]
        pipeline: PipelineArgs,
    },
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}

fn sidecar_of(wav: &Path) -> PathBuf {
    wav.with_extension("truth.json")
}

fn read_truth(wav: &Path) -> Result<GroundTruth> {
    let path = sidecar_of(wav);
    let text = std::fs::read_to_string(&path).with_context(|| format!("reading sidecar {}", path.display()))?;
    serde_json::from_str(&text).with_context(|| format!("parsing sidecar {}", path.display()))
}

fn expand(pattern: &str) -> Result<Vec<PathBuf>> {
    let paths = glob::glob(pattern)
        .with_context(|| format!("bad glob '{pattern}'"))?
        .collect::<std::result::Result<Vec<_>, _>>()?;
    if paths.is_empty() {
        bail!("'{pattern}' matches no files");
    }
    Ok(paths)
}

fn load_model(store: &StoreArgs, path: Option<&Path>) -> Result<MotionVerifierModel> {
    let path = path.map_or_else(|| store.motion_model(), Path::to_path_buf);
    MotionVerifierModel::load(&path)
        .with_context(|| format!("loading motion model {} (run `lipsense train-motion` first)", path.display()))
}

fn write_json(path: &Path, value: &impl serde::Serialize) -> Result<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir)?;
    }
    std::fs::write(path, serde_json::to_string_pretty(value)?).with_context(|| format!("writing {}", path.display()))
}

fn verdict(outcome: &DetectionOutcome) -> Result<ExitCode> {
    // A closed pipe on stdout must not turn a verdict into a panic.
    let _ = writeln!(std::io::stdout(), "{}", serde_json::to_string_pretty(outcome)?);
    eprintln!("{}", if outcome.accept { "accept" } else { "reject" });
    Ok(ExitCode::from(if outcome.accept { 0 } else { 1 }))
}

fn run(cli: Cli) -> Result<ExitCode> {
    let store = &cli.store;
    let mut cfg = FileConfig::load(store.config.as_deref())?;
    match cli.command {
        Command::Carriers { seed, carriers } => {
            carriers.apply(&mut cfg.carriers);
            println!("{}", cfg.carriers.count());
            if let Some(seed) = seed {
                println!("{}", serde_json::to_string(&draw_carriers(seed, &cfg.carriers)?)?);
            }
        }
        Command::NewScene {
            kind,
            speaker,
            attacker,
            prior,
            seed,
            scene_seed,
            out,
            speakers,
            scene,
            carriers,
        } => {
            scene.apply(&mut cfg.scene);
            carriers.apply(&mut cfg.carriers);
            let challenge = draw_carriers(seed, &cfg.carriers)?;
            let built = build_scene(&kind, &speakers, speaker, attacker, prior.as_deref(), &challenge, &cfg, scene_seed)?;
            std::fs::write(&out, built.to_json()?).with_context(|| format!("writing {}", out.display()))?;
        }
        Command::Simulate {
            scene,
            out,
            truth,
            duration_s,
        } => {
            let text = std::fs::read_to_string(&scene).with_context(|| format!("reading {}", scene.display()))?;
            let scene = Scene::from_json(&text)?;
            let duration = duration_s.unwrap_or(scene.duration_s);
            let recording = simulate(&scene, duration)?.quantized();
            recording.write_wav(&out)?;
            let mut gt = GroundTruth::of(&scene, cfg.pipeline.demod.baseband_rate_hz());
            gt.duration_s = duration;
            write_json(&truth.unwrap_or_else(|| sidecar_of(&out)), &gt)?;
        }
        Command::GenDataset { out, dataset, scene } => {
            scene.apply(&mut cfg.scene);
            let manifest = generate_dataset(&dataset.spec(cfg.scene.clone())?, &out)?;
            eprintln!("{} recordings in {}", manifest.entries.len(), out.display());
        }
        Command::TrainMotion {
            held_out_every,
            out,
            train,
            scene,
            pipeline,
        } => {
            scene.apply(&mut cfg.motion_set.scene);
            train.apply(&mut cfg.train, &mut cfg.motion_set);
            pipeline.apply(&mut cfg.pipeline);
            let data = motion_training_set(&cfg.motion_set, &cfg.pipeline)?;
            let (fit, held) = data.split_every(held_out_every);
            let (model, report) = train_motion_verifier(&fit.positives, &fit.negatives, &cfg.train)?;
            eprintln!("train accuracy {:.3}", report.train_accuracy);
            let total = held.positives.len() + held.negatives.len();
            if total > 0 {
                let mut correct = 0;
                for (set, live) in [(&held.positives, true), (&held.negatives, false)] {
                    for f in set {
                        correct += usize::from((model.score(f)? > cfg.pipeline.motion_threshold) == live);
                    }
                }
                eprintln!("held-out accuracy {:.3} ({total} fragments)", correct as f64 / total as f64);
            }
            let path = out.unwrap_or_else(|| store.motion_model());
            if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
                std::fs::create_dir_all(dir)?;
            }
            model.save(&path)?;
        }
        Command::Enroll {
            user,
            recordings,
            negatives,
            negative_features,
            passcode_len,
            pipeline,
            profile,
        } => {
            pipeline.apply(&mut cfg.pipeline);
            profile.apply(&mut cfg.profile);
            let features_of = |wav: &Path| -> Result<Vec<f64>> {
                let truth = read_truth(wav)?;
                let rec = Recording::read_wav(wav)?;
                extract_features(&rec, &truth.carriers, &cfg.pipeline, Some(passcode_len))
                    .with_context(|| format!("features of {}", wav.display()))
            };
            let own = expand(&recordings)?.iter().map(|p| features_of(p)).collect::<Result<Vec<_>>>()?;
            let mut others = Vec::new();
            if let Some(pattern) = &negatives {
                for p in expand(pattern)? {
                    others.push(features_of(&p)?);
                }
            }
            if let Some(csv) = &negative_features {
                let file = std::fs::File::open(csv).with_context(|| format!("opening {}", csv.display()))?;
                others.extend(read_features_csv(file)?.into_iter().map(|r| r.2));
            }
            if negatives.is_none() && negative_features.is_none() {
                others = stored_positives(store, &user)?;
            }
            let profile = enroll(&user, &own, &others, &cfg.profile)?;
            std::fs::create_dir_all(store.profiles_dir())?;
            profile.save(store.profile(&user))?;
            eprintln!("enrolled {user}: {} positives, {} negatives", profile.positives.len(), profile.negatives.len());
        }
        Command::Detect {
            user,
            recording,
            seed,
            passcode_len,
            update,
            motion_model,
            carriers,
            pipeline,
        } => {
            carriers.apply(&mut cfg.carriers);
            pipeline.apply(&mut cfg.pipeline);
            let profile = UserProfile::load(store.profile(&user)).with_context(|| format!("loading profile of {user}"))?;
            let model = load_model(store, motion_model.as_deref())?;
            let challenge = draw_carriers(seed, &cfg.carriers)?;
            let rec = Recording::read_wav(&recording)?;
            let outcome = run_detection(&rec, &challenge, &model, &profile, &cfg.pipeline, passcode_len, None);
            if update {
                if let Some(f) = &outcome.features {
                    let mut profile = profile;
                    profile.update(f.clone(), outcome.accept)?;
                    profile.save(store.profile(&user))?;
                }
            }
            return verdict(&outcome);
        }
        Command::Attack {
            kind,
            target,
            attacker,
            prior,
            seed,
            scene_seed,
            out,
            user,
            motion_model,
            speakers,
            scene,
            carriers,
            pipeline,
        } => {
            scene.apply(&mut cfg.scene);
            carriers.apply(&mut cfg.carriers);
            pipeline.apply(&mut cfg.pipeline);
            let challenge = draw_carriers(seed, &cfg.carriers)?;
            let built = build_scene(&kind, &speakers, target, attacker, prior.as_deref(), &challenge, &cfg, scene_seed)?;
            let rec = simulate(&built, built.duration_s)?.quantized();
            rec.write_wav(&out)?;
            write_json(&sidecar_of(&out), &GroundTruth::of(&built, cfg.pipeline.demod.baseband_rate_hz()))?;
            if let Some(user) = user {
                let profile = UserProfile::load(store.profile(&user)).with_context(|| format!("loading profile of {user}"))?;
                let model = load_model(store, motion_model.as_deref())?;
                let outcome = run_detection(
                    &rec,
                    &challenge,
                    &model,
                    &profile,
                    &cfg.pipeline,
                    cfg.scene.passcode_len,
                    Some(built.scenario),
                );
                return verdict(&outcome);
            }
        }
        Command::Eval {
            dataset,
            report,
            roc,
            score_mode,
            cross_score,
            motion_model,
            pipeline,
            profile,
        } => {
            pipeline.apply(&mut cfg.pipeline);
            profile.apply(&mut cfg.profile);
            let config = EvalConfig {
                pipeline: cfg.pipeline,
                profile: cfg.profile,
                score_mode: score_mode.into(),
                cross_score,
            };
            let manifest = Manifest::load(&dataset)?;
            let model = load_model(store, motion_model.as_deref())?;
            let result = evaluate(&manifest, |e| Recording::read_wav(dataset.join(&e.wav)), &model, &config)?;
            write_json(&report, &result)?;
            write_roc_csv(&result.population.roc, roc.unwrap_or_else(|| report.with_extension("roc.csv")))?;
            let p = &result.population;
            println!("population: AUC {:.4}, EER {:.4}, TAR {:.4}, FAR {:.4}", p.auc, p.eer, p.tar, p.far);
            for u in &result.per_user {
                let fmt = |v: Option<f64>| v.map_or("-".to_string(), |x| format!("{x:.4}"));
                println!("{}: EER {}, AUC {}", u.user_id, fmt(u.eer), fmt(u.auc));
            }
        }
        Command::Export {
            recording,
            seed,
            passcode_len,
            out_dir,
            carriers,
            pipeline,
        } => {
            carriers.apply(&mut cfg.carriers);
            pipeline.apply(&mut cfg.pipeline);
            let challenge: CarrierSet = match seed {
                Some(s) => draw_carriers(s, &cfg.carriers)?,
                None => read_truth(&recording)?.carriers,
            };
            let rec = Recording::read_wav(&recording)?;
            let analysis = analyze(&rec, &challenge, &cfg.pipeline, Some(passcode_len))?;
            std::fs::create_dir_all(&out_dir)?;
            write_to_path(out_dir.join("baseband.csv"), |w| write_baseband_csv(&analysis.frame, w))?;
            write_to_path(out_dir.join("motion.csv"), |w| write_motion_csv(&analysis.motion, w))?;
            write_to_path(out_dir.join("fragments.csv"), |w| write_fragments_csv(&analysis.kept, w))?;
            let id = recording.file_stem().map_or_else(String::new, |s| s.to_string_lossy().into_owned());
            match lipsense::features::fragment_features(&analysis.kept, &cfg.pipeline.features) {
                Ok(f) => write_to_path(out_dir.join("features.csv"), |w| {
                    write_features_csv(&[(id, "unknown".into(), f.vector)], w)
                })?,
                Err(e) => eprintln!("no features.csv: {e}"),
            }
        }
    }
    Ok(ExitCode::SUCCESS)
}

#[allow(clippy::too_many_arguments)]
fn build_scene(
    kind: &str,
    speakers: &SpeakerSource,
    target: usize,
    attacker: Option<usize>,
    prior: Option<&Path>,
    challenge: &CarrierSet,
    cfg: &FileConfig,
    scene_seed: u64,
) -> Result<Scene> {
    let target_params = speakers.speaker(target)?;
    if kind == "genuine" {
        return Ok(make_genuine_scene(&cfg.scene, &target_params, challenge, scene_seed)?);
    }
    let kind: AttackKind = kind.parse()?;
    let mut inputs = AttackInputs::default();
    match kind {
        AttackKind::Imposter => {
            let a = attacker.context("--attacker is required for an imposter attack")?;
            inputs.imposter = Some(speakers.speaker(a)?);
        }
        AttackKind::Replay => {
            let p = prior.context("--prior is required for a replay attack")?;
            inputs.prior_recording = Some(Recording::read_wav(p)?);
        }
        AttackKind::VisualOnly => {}
    }
    Ok(make_attack_scene(kind, &target_params, challenge, inputs, &cfg.scene, scene_seed)?)
}

/// Positive samples of every other stored profile, as negatives for `user`.
fn stored_positives(store: &StoreArgs, user: &str) -> Result<Vec<Vec<f64>>> {
    let dir = store.profiles_dir();
    let mut out = Vec::new();
    if dir.is_dir() {
        let mut entries: Vec<PathBuf> = std::fs::read_dir(&dir)?.map(|e| e.map(|e| e.path())).collect::<std::io::Result<_>>()?;
        entries.sort();
        for path in entries {
            if path.extension().is_some_and(|e| e == "json") && path.file_stem().is_some_and(|s| s != user) {
                out.extend(UserProfile::load(&path)?.positives);
            }
        }
    }
    if out.is_empty() {
        bail!("no negatives: pass --negatives or --negative-features, or enroll another user first");
    }
    Ok(out)
}
