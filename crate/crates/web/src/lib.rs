//! Browser demo. Each exported function takes plain numbers and returns a
//! JSON string; the page in `www/` draws the results.

use serde::Serialize;
use wasm_bindgen::prelude::*;

use lipsense::carrier::{draw_carriers, CarrierSet, CarrierSpace};
use lipsense::harness::pipeline::{analyze, extract_features, PipelineConfig};
use lipsense::recording::Recording;
use lipsense::simulator::{
    make_attack_scene, make_genuine_scene, simulate, AttackInputs, AttackKind, GroundTruth, Scene, SceneOptions,
    SpeakerParams,
};
use lipsense::verification::profile::{enroll, ProfileConfig};

pub const SPEAKERS: usize = 6;
const POPULATION_SEED: u64 = 11;
const MAX_POINTS: usize = 400;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ChallengeView {
    /// Decimal, since the count overflows a JS number for larger spaces.
    pub count: String,
    pub frequencies_hz: Vec<u32>,
}

pub fn challenge(seed: u64) -> lipsense::Result<ChallengeView> {
    let space = CarrierSpace::default();
    Ok(ChallengeView {
        count: space.count().to_string(),
        frequencies_hz: draw_carriers(seed, &space)?.frequencies_hz,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FragmentView {
    pub start_s: f64,
    pub end_s: f64,
    pub snr_db: f64,
    pub kept: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AttemptView {
    pub scenario: String,
    pub frequencies_hz: Vec<u32>,
    pub duration_s: f64,
    /// Motion magnitude over all channels, max-pooled to at most 400 points.
    pub envelope: Vec<f64>,
    pub envelope_start_s: f64,
    pub envelope_step_s: f64,
    pub truth_segments: Vec<(f64, f64)>,
    pub fragments: Vec<FragmentView>,
    pub threshold: f64,
    pub carrier_levels_db: Vec<f64>,
    pub carriers_present: bool,
}

fn speaker(index: usize) -> lipsense::Result<SpeakerParams> {
    SpeakerParams::population(SPEAKERS, POPULATION_SEED)
        .get(index)
        .cloned()
        .ok_or_else(|| lipsense::Error::Config(format!("speaker {index} outside 0..{SPEAKERS}")))
}

fn genuine(index: usize, carriers: &CarrierSet, seed: u64) -> lipsense::Result<(Scene, Recording)> {
    let scene = make_genuine_scene(&SceneOptions::default(), &speaker(index)?, carriers, seed)?;
    let rec = simulate(&scene, scene.duration_s)?.quantized();
    Ok((scene, rec))
}

fn scene_for(kind: &str, index: usize, carriers: &CarrierSet, seed: u64) -> lipsense::Result<Scene> {
    let opts = SceneOptions::default();
    if kind == "genuine" {
        return make_genuine_scene(&opts, &speaker(index)?, carriers, seed);
    }
    let kind: AttackKind = kind.parse()?;
    let mut inputs = AttackInputs::default();
    match kind {
        AttackKind::Imposter => inputs.imposter = Some(speaker((index + 1) % SPEAKERS)?),
        AttackKind::Replay => {
            // An earlier genuine attempt under a different challenge.
            let old = draw_carriers(seed.wrapping_add(1), &CarrierSpace::default())?;
            inputs.prior_recording = Some(genuine(index, &old, seed.wrapping_add(1))?.1);
        }
        AttackKind::VisualOnly => {}
    }
    make_attack_scene(kind, &speaker(index)?, carriers, inputs, &opts, seed)
}

/// Simulates one attempt and runs the front end on it.
pub fn attempt(kind: &str, index: usize, seed: u64) -> lipsense::Result<AttemptView> {
    let carriers = draw_carriers(seed, &CarrierSpace::default())?;
    let scene = scene_for(kind, index, &carriers, seed)?;
    let rec = simulate(&scene, scene.duration_s)?.quantized();
    let config = PipelineConfig::default();
    let passcode = SceneOptions::default().passcode_len;
    let analysis = analyze(&rec, &carriers, &config, Some(passcode))?;
    let motion = &analysis.motion;
    let magnitude: Vec<f64> = (0..motion.len())
        .map(|k| motion.channels().map(|c| c[k] * c[k]).sum::<f64>().sqrt())
        .collect();
    let pool = magnitude.len().div_ceil(MAX_POINTS).max(1);
    let kept = |s: f64| analysis.kept.iter().any(|f| f.start_s == s);
    Ok(AttemptView {
        scenario: scene.scenario.to_string(),
        frequencies_hz: carriers.frequencies_hz.clone(),
        duration_s: scene.duration_s,
        envelope: magnitude.chunks(pool).map(|c| c.iter().cloned().fold(0.0, f64::max)).collect(),
        envelope_start_s: motion.start_s,
        envelope_step_s: pool as f64 / motion.rate_hz,
        truth_segments: GroundTruth::of(&scene, motion.rate_hz).segments,
        fragments: analysis
            .segmentation
            .fragments
            .iter()
            .map(|f| FragmentView {
                start_s: f.start_s,
                end_s: f.end_s,
                snr_db: f.snr_db,
                kept: kept(f.start_s),
            })
            .collect(),
        threshold: analysis.segmentation.t_d,
        carrier_levels_db: analysis.carrier_levels_db.clone(),
        carriers_present: analysis.carriers_present(&config),
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ConsistencyView {
    pub enrolled: usize,
    pub negatives: usize,
    pub score: f64,
    pub threshold: f64,
    pub pass: bool,
}

/// Enrolls `user` from five attempts, then scores one attempt by `probe`.
pub fn consistency(user: usize, probe: usize, seed: u64) -> lipsense::Result<ConsistencyView> {
    let config = PipelineConfig::default();
    let passcode = Some(SceneOptions::default().passcode_len);
    let features = |index: usize, s: u64| -> lipsense::Result<Vec<f64>> {
        let carriers = draw_carriers(s, &CarrierSpace::default())?;
        let (_, rec) = genuine(index, &carriers, s)?;
        extract_features(&rec, &carriers, &config, passcode)
    };
    let base = seed.wrapping_mul(1000);
    let own = (0..5).map(|k| features(user, base + k)).collect::<lipsense::Result<Vec<_>>>()?;
    let mut others = Vec::new();
    for other in (0..SPEAKERS).filter(|&o| o != user) {
        for k in 0..2 {
            others.push(features(other, base + 100 + 10 * other as u64 + k)?);
        }
    }
    let profile = enroll(&format!("speaker{user}"), &own, &others, &ProfileConfig::default())?;
    let verdict = profile.verify(&features(probe, base + 500)?)?;
    Ok(ConsistencyView {
        enrolled: own.len(),
        negatives: others.len(),
        score: verdict.score,
        threshold: profile.config.threshold,
        pass: verdict.pass,
    })
}

fn to_js<T: Serialize>(value: lipsense::Result<T>) -> Result<String, JsError> {
    let value = value.map_err(|e| JsError::new(&e.to_string()))?;
    serde_json::to_string(&value).map_err(|e| JsError::new(&e.to_string()))
}

#[wasm_bindgen(js_name = challenge)]
pub fn challenge_js(seed: u32) -> Result<String, JsError> {
    to_js(challenge(seed as u64))
}

#[wasm_bindgen(js_name = attempt)]
pub fn attempt_js(kind: &str, speaker: u32, seed: u32) -> Result<String, JsError> {
    to_js(attempt(kind, speaker as usize, seed as u64))
}

#[wasm_bindgen(js_name = consistency)]
pub fn consistency_js(user: u32, probe: u32, seed: u32) -> Result<String, JsError> {
    to_js(consistency(user as usize, probe as usize, seed as u64))
}

#[wasm_bindgen(js_name = speakerCount)]
pub fn speaker_count() -> u32 {
    SPEAKERS as u32
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn challenge_matches_the_core_draw() {
        let view = challenge(9).unwrap();
        assert_eq!(view.count, "2309764401");
        assert_eq!(view.frequencies_hz.len(), 3);
    }

    #[test]
    fn genuine_attempt_shows_fragments_near_the_truth() {
        let view = attempt("genuine", 2, 4).unwrap();
        assert!(view.carriers_present);
        assert_eq!(view.truth_segments.len(), 4);
        assert!(view.envelope.len() <= MAX_POINTS);
        let kept: Vec<&FragmentView> = view.fragments.iter().filter(|f| f.kept).collect();
        assert!(!kept.is_empty());
        for f in kept {
            let mid = 0.5 * (f.start_s + f.end_s);
            assert!(view.truth_segments.iter().any(|&(a, b)| a - 0.1 <= mid && mid <= b + 0.1));
        }
    }

    #[test]
    fn attacks_render_and_replay_misses_the_fresh_tones() {
        let visual = attempt("visual", 0, 3).unwrap();
        assert!(visual.truth_segments.is_empty());
        let replay = attempt("replay", 0, 3).unwrap();
        assert!(!replay.carriers_present);
        assert!(attempt("dance", 0, 3).is_err());
        assert!(attempt("genuine", SPEAKERS, 3).is_err());
    }

    #[test]
    fn consistency_runs_end_to_end() {
        let view = consistency(1, 1, 2).unwrap();
        assert_eq!(view.enrolled, 5);
        assert_eq!(view.negatives, 2 * (SPEAKERS - 1));
        assert!(view.score.is_finite());
    }
}
