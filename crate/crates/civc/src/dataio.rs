//! Synthetic video benchmark, session splitting, and clip sampling.
//!
//! # The benchmark
//!
//! Each class is a (shape, motion) pair: a small shape moving over a dark
//! noisy background. Motions come in reversal pairs — left/right, up/down,
//! clockwise/counter-clockwise orbit, grow/shrink — and both members of a
//! pair share the same renderer, differing only in the sign of the state
//! update. Playing a video of one class backwards therefore produces a
//! pixel-exact member of the partner class. Single frames carry no class
//! signal beyond the shape; the direction of time is the label.
//!
//! Motion is toroidal (positions, angles and sizes wrap around) and driven
//! by a per-video Bernoulli schedule: each transition either applies one
//! motion step or holds still. Holds make neighbouring frames redundant,
//! which is what gives keyframe compression something to compress. Every
//! frame gets fresh uniform pixel noise so no two frames are bit-identical.
//!
//! # Layout on disk
//!
//! [`save_benchmark`] writes a directory with a `manifest.json` describing
//! classes, sessions and per-video metadata, plus one little-endian `f32`
//! binary file per video. [`load_benchmark`] validates sizes against the
//! manifest on the way back in.
//!
//! # Clip sampling
//!
//! Training and evaluation never see raw videos directly; they see clips of
//! `segments` frames picked one per equal temporal segment — a random frame
//! within each segment during training ([`train_clip`]), the segment centre
//! during evaluation ([`eval_clip`]).

use std::collections::BTreeSet;
use std::io::{Read, Write};
use std::path::Path;

use ndarray::{Array3, Array4, ArrayView3, Axis};
use rand::seq::SliceRandom;
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::config::DataConfig;
use crate::error::{Error, Result};
use crate::seeds;

/// Pixel value of shape interior; noise adds on top, keeping values <= 1.
const SHAPE_AMPLITUDE: f32 = 0.8;
/// Shape edge length for motions that do not change size.
const FIXED_SHAPE_SIZE: usize = 6;
/// Discrete orbit positions for rotational motion.
const ANGLE_STEPS: usize = 16;
/// Discrete sizes for scaling motion; size in pixels is `3 + state`.
const SIZE_STEPS: usize = 8;

// ---- Classes ----

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ShapeKind {
    Square,
    Circle,
    Triangle,
    Bar,
}

impl ShapeKind {
    pub fn name(self) -> &'static str {
        match self {
            ShapeKind::Square => "square",
            ShapeKind::Circle => "circle",
            ShapeKind::Triangle => "triangle",
            ShapeKind::Bar => "bar",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum MotionKind {
    Left,
    Right,
    Up,
    Down,
    Clockwise,
    CounterClockwise,
    Grow,
    Shrink,
}

impl MotionKind {
    /// The motion that equals this one played backwards.
    pub fn reversal_partner(self) -> MotionKind {
        match self {
            MotionKind::Left => MotionKind::Right,
            MotionKind::Right => MotionKind::Left,
            MotionKind::Up => MotionKind::Down,
            MotionKind::Down => MotionKind::Up,
            MotionKind::Clockwise => MotionKind::CounterClockwise,
            MotionKind::CounterClockwise => MotionKind::Clockwise,
            MotionKind::Grow => MotionKind::Shrink,
            MotionKind::Shrink => MotionKind::Grow,
        }
    }

    /// Direction of the state update: +1 or -1 per moving transition.
    fn polarity(self) -> i64 {
        match self {
            MotionKind::Right | MotionKind::Down | MotionKind::Clockwise | MotionKind::Grow => 1,
            _ => -1,
        }
    }

    /// Size of the wrapped state space the motion walks through.
    fn state_space(self, frame_size: usize) -> usize {
        match self {
            MotionKind::Left | MotionKind::Right | MotionKind::Up | MotionKind::Down => frame_size,
            MotionKind::Clockwise | MotionKind::CounterClockwise => ANGLE_STEPS,
            MotionKind::Grow | MotionKind::Shrink => SIZE_STEPS,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            MotionKind::Left => "left",
            MotionKind::Right => "right",
            MotionKind::Up => "up",
            MotionKind::Down => "down",
            MotionKind::Clockwise => "cw",
            MotionKind::CounterClockwise => "ccw",
            MotionKind::Grow => "grow",
            MotionKind::Shrink => "shrink",
        }
    }
}

/// One class of the benchmark: a shape with a motion.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ClassSpec {
    pub shape: ShapeKind,
    pub motion: MotionKind,
}

impl ClassSpec {
    pub fn name(&self) -> String {
        format!("{}-{}", self.shape.name(), self.motion.name())
    }
}

/// The canonical class table: 32 entries, every (shape, motion) combination
/// exactly once. Entries 2q and 2q+1 are always a reversal pair, and the
/// first eight classes cover all four shapes and all four motion families.
pub fn class_table() -> Vec<ClassSpec> {
    let shapes = [ShapeKind::Square, ShapeKind::Circle, ShapeKind::Triangle, ShapeKind::Bar];
    let families = [
        (MotionKind::Left, MotionKind::Right),
        (MotionKind::Up, MotionKind::Down),
        (MotionKind::Clockwise, MotionKind::CounterClockwise),
        (MotionKind::Grow, MotionKind::Shrink),
    ];
    let mut table = Vec::with_capacity(32);
    for q in 0..16 {
        let shape = shapes[(q / 4 + q) % 4];
        let (a, b) = families[q % 4];
        table.push(ClassSpec { shape, motion: a });
        table.push(ClassSpec { shape, motion: b });
    }
    table
}

// ---- Videos and sessions ----

/// A raw benchmark video: `frames` has shape `[raw_frames, channels, h, w]`.
#[derive(Debug, Clone)]
pub struct Video {
    pub id: u64,
    pub label: usize,
    pub frames: Array4<f32>,
}

impl Video {
    pub fn raw_frames(&self) -> usize {
        self.frames.shape()[0]
    }

    pub fn frame(&self, t: usize) -> ArrayView3<'_, f32> {
        self.frames.index_axis(Axis(0), t)
    }
}

/// A sampled fixed-length clip ready for the model:
/// `frames` has shape `[segments, channels, h, w]`.
#[derive(Debug, Clone)]
pub struct Clip {
    pub frames: Array4<f32>,
    pub label: usize,
    pub source_id: u64,
}

/// Videos of one incremental session. Labels always refer to canonical
/// class-table order regardless of how classes were dealt into sessions.
#[derive(Debug, Clone)]
pub struct SessionData {
    pub index: usize,
    pub labels: BTreeSet<usize>,
    pub train: Vec<Video>,
    pub test: Vec<Video>,
}

/// The full incremental stream: one base session plus incremental ones.
#[derive(Debug, Clone)]
pub struct SessionStream {
    pub sessions: Vec<SessionData>,
    pub class_names: Vec<String>,
}

impl SessionStream {
    /// Classes seen once sessions `0..=upto` have been visited.
    pub fn seen_labels(&self, upto: usize) -> BTreeSet<usize> {
        self.sessions[..=upto]
            .iter()
            .flat_map(|s| s.labels.iter().copied())
            .collect()
    }

    /// All training videos of sessions `0..=upto` (for joint retraining).
    pub fn cumulative_train(&self, upto: usize) -> Vec<&Video> {
        self.sessions[..=upto].iter().flat_map(|s| s.train.iter()).collect()
    }
}

/// Deal an ordered class list into session label sets: `base_classes` first,
/// then chunks of `classes_per_session`.
pub fn split_sessions(
    class_order: &[usize],
    base_classes: usize,
    classes_per_session: usize,
) -> Result<Vec<BTreeSet<usize>>> {
    if base_classes == 0 || base_classes > class_order.len() {
        return Err(Error::Contract("base session must take between 1 and all classes".into()));
    }
    let rest = class_order.len() - base_classes;
    if classes_per_session == 0 || rest % classes_per_session != 0 {
        return Err(Error::Contract(format!(
            "{rest} remaining classes do not divide into sessions of {classes_per_session}"
        )));
    }
    let mut sets = vec![class_order[..base_classes].iter().copied().collect::<BTreeSet<_>>()];
    for chunk in class_order[base_classes..].chunks(classes_per_session) {
        sets.push(chunk.iter().copied().collect());
    }
    Ok(sets)
}

// ---- Rendering ----

/// Everything that varies between two videos of the same class.
#[derive(Debug, Clone)]
pub struct VideoParams {
    /// Initial motion state (position / angle step / size step), wrapped.
    pub start_state: i64,
    /// Fixed spatial anchor: the constant coordinate for translations, the
    /// orbit centre for rotations, the shape centre for scaling.
    pub anchor: (i64, i64),
    /// One flag per frame transition: `true` applies a motion step.
    pub schedule: Vec<bool>,
    /// Additive per-pixel noise, shape `[frames, h, w]`, already scaled.
    pub noise: Array3<f32>,
}

impl VideoParams {
    /// Parameters that produce the time-reversed video under the partner
    /// motion: the walk starts where the original ended and replays the
    /// schedule and noise backwards.
    pub fn reversed(&self, motion: MotionKind, frame_size: usize) -> VideoParams {
        let space = motion.state_space(frame_size) as i64;
        let steps: i64 = self.schedule.iter().filter(|&&m| m).count() as i64;
        let final_state = (self.start_state + motion.polarity() * steps).rem_euclid(space);
        let mut schedule = self.schedule.clone();
        schedule.reverse();
        let mut noise = self.noise.clone();
        noise.invert_axis(Axis(0));
        VideoParams { start_state: final_state, anchor: self.anchor, schedule, noise, }
    }
}

/// Render a video of `spec` with explicit parameters. Exposed so the
/// reversal-pairing property can be checked directly; the benchmark
/// generator draws [`VideoParams`] from seeded streams and calls this.
pub fn render_video(spec: ClassSpec, params: &VideoParams, frame_size: usize) -> Array4<f32> {
    let frames = params.noise.shape()[0];
    assert_eq!(params.schedule.len() + 1, frames, "schedule must have frames-1 entries");
    assert_eq!(params.noise.shape()[1], frame_size);
    assert_eq!(params.noise.shape()[2], frame_size);

    let space = spec.motion.state_space(frame_size) as i64;
    let polarity = spec.motion.polarity();
    let mut out = Array4::<f32>::zeros((frames, 1, frame_size, frame_size));

    let mut state = params.start_state.rem_euclid(space);
    for t in 0..frames {
        for (y, x) in shape_pixels(spec, state, params.anchor, frame_size) {
            out[[t, 0, y, x]] = SHAPE_AMPLITUDE;
        }
        for y in 0..frame_size {
            for x in 0..frame_size {
                out[[t, 0, y, x]] += params.noise[[t, y, x]];
            }
        }
        if t + 1 < frames && params.schedule[t] {
            state = (state + polarity).rem_euclid(space);
        }
    }
    out
}

/// Pixels covered by the shape at the given motion state. Coordinates wrap
/// toroidally, so shapes slide off one edge and onto the opposite one.
fn shape_pixels(spec: ClassSpec, state: i64, anchor: (i64, i64), frame_size: usize) -> Vec<(usize, usize)> {
    let (center, size) = match spec.motion {
        MotionKind::Left | MotionKind::Right => ((anchor.0, state), FIXED_SHAPE_SIZE),
        MotionKind::Up | MotionKind::Down => ((state, anchor.1), FIXED_SHAPE_SIZE),
        MotionKind::Clockwise | MotionKind::CounterClockwise => {
            let theta = std::f64::consts::TAU * state as f64 / ANGLE_STEPS as f64;
            let radius = frame_size as f64 * 0.3;
            let cy = anchor.0 + (radius * theta.sin()).round() as i64;
            let cx = anchor.1 + (radius * theta.cos()).round() as i64;
            ((cy, cx), FIXED_SHAPE_SIZE)
        }
        MotionKind::Grow | MotionKind::Shrink => (anchor, 3 + state as usize),
    };

    let k = size as i64;
    let top = center.0 - k / 2;
    let left = center.1 - k / 2;
    let c = (size as f64 - 1.0) / 2.0;
    let mut pixels = Vec::with_capacity(size * size);
    for iy in 0..k {
        for ix in 0..k {
            let inside = match spec.shape {
                ShapeKind::Square => true,
                ShapeKind::Circle => {
                    let dy = iy as f64 - c;
                    let dx = ix as f64 - c;
                    dy * dy + dx * dx <= (size as f64 / 2.0).powi(2)
                }
                ShapeKind::Triangle => (ix as f64 - c).abs() <= (iy as f64 + 1.0) / 2.0,
                ShapeKind::Bar => {
                    let h = (size / 3).max(2) as i64;
                    iy >= (k - h) / 2 && iy < (k - h) / 2 + h
                }
            };
            if inside {
                let y = (top + iy).rem_euclid(frame_size as i64) as usize;
                let x = (left + ix).rem_euclid(frame_size as i64) as usize;
                pixels.push((y, x));
            }
        }
    }
    pixels
}

// ---- Generation ----

fn draw_params(spec: ClassSpec, cfg: &DataConfig, rng: &mut ChaCha8Rng) -> VideoParams {
    let space = spec.motion.state_space(cfg.frame_size) as i64;
    let start_state = rng.gen_range(0..space);
    let anchor = (
        rng.gen_range(0..cfg.frame_size as i64),
        rng.gen_range(0..cfg.frame_size as i64),
    );
    let schedule = (0..cfg.raw_frames - 1).map(|_| rng.gen_bool(cfg.motion_duty)).collect();
    let mut noise = Array3::<f32>::zeros((cfg.raw_frames, cfg.frame_size, cfg.frame_size));
    for v in noise.iter_mut() {
        *v = rng.gen::<f32>() * cfg.noise_level as f32;
    }
    VideoParams { start_state, anchor, schedule, noise }
}

/// Generate the full benchmark stream for one experiment seed.
///
/// Video identities, parameters, and the optional class-to-session shuffle
/// are all derived from `seed` alone, so two calls with equal inputs yield
/// bit-identical streams.
pub fn generate_synthetic_benchmark(cfg: &DataConfig, seed: u64) -> Result<SessionStream> {
    let table = class_table();
    if cfg.num_classes == 0 || cfg.num_classes % 2 != 0 || cfg.num_classes > table.len() {
        return Err(Error::Config(format!(
            "num_classes must be even and within 2..={}",
            table.len()
        )));
    }
    if cfg.raw_frames < 2 {
        return Err(Error::Config("raw_frames must be at least 2".into()));
    }

    let mut order: Vec<usize> = (0..cfg.num_classes).collect();
    if cfg.shuffle_classes {
        order.shuffle(&mut seeds::rng(seed, "class-order", 0));
    }
    let label_sets = split_sessions(&order, cfg.base_classes, cfg.classes_per_session)?;

    let per_class = cfg.train_per_class + cfg.test_per_class;
    let mut by_class: Vec<(Vec<Video>, Vec<Video>)> = Vec::with_capacity(cfg.num_classes);
    for class in 0..cfg.num_classes {
        let spec = table[class];
        let mut train = Vec::with_capacity(cfg.train_per_class);
        let mut test = Vec::with_capacity(cfg.test_per_class);
        for k in 0..per_class {
            let id = (class * per_class + k) as u64;
            let mut rng = seeds::rng(seed, "video", id);
            let params = draw_params(spec, cfg, &mut rng);
            let video = Video { id, label: class, frames: render_video(spec, &params, cfg.frame_size) };
            if k < cfg.train_per_class {
                train.push(video);
            } else {
                test.push(video);
            }
        }
        by_class.push((train, test));
    }

    let mut sessions = Vec::with_capacity(label_sets.len());
    for (index, labels) in label_sets.into_iter().enumerate() {
        let mut train = Vec::new();
        let mut test = Vec::new();
        for &label in &labels {
            let (tr, te) = &by_class[label];
            train.extend(tr.iter().cloned());
            test.extend(te.iter().cloned());
        }
        sessions.push(SessionData { index, labels, train, test });
    }

    Ok(SessionStream {
        sessions,
        class_names: table[..cfg.num_classes].iter().map(|s| s.name()).collect(),
    })
}

// ---- Clip sampling ----

/// Half-open frame ranges of the equal temporal segments. A segment can be
/// empty when there are fewer frames than segments; samplers then fall back
/// to its (clamped) start index.
pub fn segment_bounds(raw_frames: usize, segments: usize) -> Vec<(usize, usize)> {
    (0..segments)
        .map(|i| (i * raw_frames / segments, (i + 1) * raw_frames / segments))
        .collect()
}

fn gather_clip(video: &Video, indices: &[usize]) -> Clip {
    let (_, c, h, w) = (
        video.frames.shape()[0],
        video.frames.shape()[1],
        video.frames.shape()[2],
        video.frames.shape()[3],
    );
    let mut frames = Array4::<f32>::zeros((indices.len(), c, h, w));
    for (slot, &t) in indices.iter().enumerate() {
        frames.index_axis_mut(Axis(0), slot).assign(&video.frame(t));
    }
    Clip { frames, label: video.label, source_id: video.id }
}

/// Deterministic evaluation clip: the centre frame of each segment (the
/// later of the two middle frames when a segment has even length).
pub fn eval_clip(video: &Video, segments: usize) -> Clip {
    let raw = video.raw_frames();
    let indices: Vec<usize> = segment_bounds(raw, segments)
        .into_iter()
        .map(|(a, b)| if a < b { a + (b - a) / 2 } else { a.min(raw - 1) })
        .collect();
    gather_clip(video, &indices)
}

/// Training clip: one uniformly random frame per segment.
pub fn train_clip(video: &Video, segments: usize, rng: &mut ChaCha8Rng) -> Clip {
    let raw = video.raw_frames();
    let indices: Vec<usize> = segment_bounds(raw, segments)
        .into_iter()
        .map(|(a, b)| if a < b { rng.gen_range(a..b) } else { a.min(raw - 1) })
        .collect();
    gather_clip(video, &indices)
}

// ---- Disk cache ----

const BENCHMARK_SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Serialize, Deserialize)]
struct VideoEntry {
    id: u64,
    label: usize,
    split: String,
    session: usize,
    path: String,
    frames: usize,
    channels: usize,
    height: usize,
    width: usize,
}

#[derive(Debug, Serialize, Deserialize)]
struct BenchmarkManifest {
    schema_version: u32,
    class_names: Vec<String>,
    session_labels: Vec<Vec<usize>>,
    videos: Vec<VideoEntry>,
}

/// Write the stream to `dir`: `manifest.json` plus one binary per video.
pub fn save_benchmark(stream: &SessionStream, dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir)?;
    let mut manifest = BenchmarkManifest {
        schema_version: BENCHMARK_SCHEMA_VERSION,
        class_names: stream.class_names.clone(),
        session_labels: stream
            .sessions
            .iter()
            .map(|s| s.labels.iter().copied().collect())
            .collect(),
        videos: Vec::new(),
    };
    for session in &stream.sessions {
        for (split, videos) in [("train", &session.train), ("test", &session.test)] {
            for video in videos {
                let path = format!("video_{:05}.bin", video.id);
                let shape = video.frames.shape();
                manifest.videos.push(VideoEntry {
                    id: video.id,
                    label: video.label,
                    split: split.to_string(),
                    session: session.index,
                    path: path.clone(),
                    frames: shape[0],
                    channels: shape[1],
                    height: shape[2],
                    width: shape[3],
                });
                let mut file = std::fs::File::create(dir.join(&path))?;
                let mut bytes = Vec::with_capacity(video.frames.len() * 4);
                for v in video.frames.iter() {
                    bytes.extend_from_slice(&v.to_le_bytes());
                }
                file.write_all(&bytes)?;
            }
        }
    }
    let file = std::fs::File::create(dir.join("manifest.json"))?;
    serde_json::to_writer_pretty(std::io::BufWriter::new(file), &manifest)?;
    Ok(())
}

/// Read a stream previously written by [`save_benchmark`], validating
/// every video against its manifest entry.
pub fn load_benchmark(dir: &Path) -> Result<SessionStream> {
    let text = std::fs::read_to_string(dir.join("manifest.json"))?;
    let manifest: BenchmarkManifest = serde_json::from_str(&text)?;
    if manifest.schema_version != BENCHMARK_SCHEMA_VERSION {
        return Err(Error::Artifact(format!(
            "benchmark schema {} unsupported (expected {BENCHMARK_SCHEMA_VERSION})",
            manifest.schema_version
        )));
    }
    let mut sessions: Vec<SessionData> = manifest
        .session_labels
        .iter()
        .enumerate()
        .map(|(index, labels)| SessionData {
            index,
            labels: labels.iter().copied().collect(),
            train: Vec::new(),
            test: Vec::new(),
        })
        .collect();

    for entry in &manifest.videos {
        let expected = entry.frames * entry.channels * entry.height * entry.width;
        let mut bytes = Vec::new();
        std::fs::File::open(dir.join(&entry.path))?.read_to_end(&mut bytes)?;
        if bytes.len() != expected * 4 {
            return Err(Error::Artifact(format!(
                "{}: expected {} bytes, found {}",
                entry.path,
                expected * 4,
                bytes.len()
            )));
        }
        let values: Vec<f32> = bytes
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes(c.try_into().unwrap()))
            .collect();
        let frames = Array4::from_shape_vec(
            (entry.frames, entry.channels, entry.height, entry.width),
            values,
        )
        .map_err(|e| Error::Artifact(e.to_string()))?;
        let video = Video { id: entry.id, label: entry.label, frames };
        let session = sessions
            .get_mut(entry.session)
            .ok_or_else(|| Error::Artifact(format!("video {} names session {} not in manifest", entry.id, entry.session)))?;
        if !session.labels.contains(&entry.label) {
            return Err(Error::Artifact(format!(
                "video {} has label {} outside its session's label set",
                entry.id, entry.label
            )));
        }
        match entry.split.as_str() {
            "train" => session.train.push(video),
            "test" => session.test.push(video),
            other => return Err(Error::Artifact(format!("unknown split `{other}`"))),
        }
    }

    Ok(SessionStream { sessions, class_names: manifest.class_names })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::config::DataConfig;

    fn small_cfg() -> DataConfig {
        DataConfig {
            num_classes: 8,
            train_per_class: 3,
            test_per_class: 2,
            ..DataConfig::default()
        }
    }

    #[test]
    fn class_table_covers_all_combinations() {
        let table = class_table();
        assert_eq!(table.len(), 32);
        let unique: BTreeSet<String> = table.iter().map(|s| s.name()).collect();
        assert_eq!(unique.len(), 32);
        // Adjacent entries are reversal pairs of the same shape.
        for pair in table.chunks(2) {
            assert_eq!(pair[0].shape, pair[1].shape);
            assert_eq!(pair[0].motion.reversal_partner(), pair[1].motion);
        }
        // The first eight classes span all shapes and all motion families.
        let shapes: BTreeSet<&str> = table[..8].iter().map(|s| s.shape.name()).collect();
        assert_eq!(shapes.len(), 4);
    }

    #[test]
    fn reversal_pairing_is_pixel_exact() {
        let table = class_table();
        let cfg = DataConfig::default();
        // One pair per motion family.
        for q in 0..4 {
            let fwd = table[2 * q];
            let bwd = table[2 * q + 1];
            let mut rng = seeds::rng(417, "pairing-test", q as u64);
            let params = draw_params(fwd, &cfg, &mut rng);
            let video = render_video(fwd, &params, cfg.frame_size);
            let partner =
                render_video(bwd, &params.reversed(fwd.motion, cfg.frame_size), cfg.frame_size);

            let mut reversed = video.clone();
            reversed.invert_axis(Axis(0));
            assert_eq!(
                reversed, partner,
                "time-reversed {} must equal {}",
                fwd.name(),
                bwd.name()
            );
        }
    }

    #[test]
    fn generation_is_deterministic_and_seed_sensitive() {
        let cfg = small_cfg();
        let a = generate_synthetic_benchmark(&cfg, 11).unwrap();
        let b = generate_synthetic_benchmark(&cfg, 11).unwrap();
        let c = generate_synthetic_benchmark(&cfg, 12).unwrap();
        for (sa, sb) in a.sessions.iter().zip(&b.sessions) {
            for (va, vb) in sa.train.iter().zip(&sb.train) {
                assert_eq!(va.id, vb.id);
                assert_eq!(va.frames, vb.frames);
            }
        }
        assert_ne!(a.sessions[0].train[0].frames, c.sessions[0].train[0].frames);
    }

    #[test]
    fn sessions_are_disjoint_and_complete() {
        let cfg = small_cfg();
        let stream = generate_synthetic_benchmark(&cfg, 5).unwrap();
        assert_eq!(stream.sessions.len(), 4);
        let mut seen = BTreeSet::new();
        for session in &stream.sessions {
            assert_eq!(session.labels.len(), 2);
            assert!(seen.is_disjoint(&session.labels));
            seen.extend(session.labels.iter().copied());
            assert_eq!(session.train.len(), 2 * cfg.train_per_class);
            assert_eq!(session.test.len(), 2 * cfg.test_per_class);
            for v in session.train.iter().chain(&session.test) {
                assert!(session.labels.contains(&v.label));
            }
        }
        assert_eq!(seen, (0..8).collect());

        let mut ids: Vec<u64> = stream
            .sessions
            .iter()
            .flat_map(|s| s.train.iter().chain(&s.test).map(|v| v.id))
            .collect();
        ids.sort_unstable();
        ids.dedup();
        assert_eq!(ids.len(), 8 * (cfg.train_per_class + cfg.test_per_class));
    }

    #[test]
    fn shuffled_class_order_keeps_canonical_labels() {
        let mut cfg = small_cfg();
        cfg.shuffle_classes = true;
        let stream = generate_synthetic_benchmark(&cfg, 9).unwrap();
        let seen: BTreeSet<usize> = stream.seen_labels(3);
        assert_eq!(seen, (0..8).collect());
        // Labels still index the canonical table: video 0 of class c must
        // match an unshuffled render of that class.
        let plain = generate_synthetic_benchmark(&small_cfg(), 9).unwrap();
        let find = |s: &SessionStream, id: u64| -> Video {
            s.sessions
                .iter()
                .flat_map(|x| x.train.iter().chain(&x.test))
                .find(|v| v.id == id)
                .unwrap()
                .clone()
        };
        let a = find(&stream, 7);
        let b = find(&plain, 7);
        assert_eq!(a.label, b.label);
        assert_eq!(a.frames, b.frames);
    }

    #[test]
    fn consecutive_frames_always_differ() {
        // Pixel noise guarantees distinct consecutive frames even when the
        // motion schedule holds still — full-length replay storage relies
        // on this.
        let cfg = small_cfg();
        let stream = generate_synthetic_benchmark(&cfg, 3).unwrap();
        for video in &stream.sessions[0].train {
            for t in 0..video.raw_frames() - 1 {
                assert_ne!(video.frame(t), video.frame(t + 1));
            }
        }
    }

    #[test]
    fn pixel_range_and_shape_mass() {
        let cfg = DataConfig::default();
        let table = class_table();
        // Noise-free translation keeps shape mass constant across frames
        // (toroidal wrap, no clipping at edges).
        let spec = table[0];
        let mut rng = seeds::rng(2, "mass-test", 0);
        let mut params = draw_params(spec, &cfg, &mut rng);
        params.noise.fill(0.0);
        let video = render_video(spec, &params, cfg.frame_size);
        let masses: Vec<usize> = (0..cfg.raw_frames)
            .map(|t| video.index_axis(Axis(0), t).iter().filter(|&&v| v > 0.0).count())
            .collect();
        assert!(masses.iter().all(|&m| m == masses[0] && m > 0));

        let stream = generate_synthetic_benchmark(&small_cfg(), 8).unwrap();
        for v in stream.sessions.iter().flat_map(|s| s.train.iter()) {
            for &p in v.frames.iter() {
                assert!((0.0..=1.0).contains(&p));
            }
        }
    }

    #[test]
    fn eval_clip_picks_segment_centers() {
        let cfg = small_cfg();
        let stream = generate_synthetic_benchmark(&cfg, 1).unwrap();
        let video = &stream.sessions[0].train[0];
        assert_eq!(video.raw_frames(), 16);

        let clip = eval_clip(video, 8);
        let expected: Vec<usize> = vec![1, 3, 5, 7, 9, 11, 13, 15];
        for (slot, &t) in expected.iter().enumerate() {
            assert_eq!(clip.frames.index_axis(Axis(0), slot), video.frame(t));
        }
        assert_eq!(clip.label, video.label);
        assert_eq!(clip.source_id, video.id);
    }

    #[test]
    fn short_videos_repeat_segment_starts() {
        // 4 raw frames into 8 segments: empty segments fall back to their
        // clamped start, duplicating each frame twice.
        let bounds = segment_bounds(4, 8);
        let centers: Vec<usize> = bounds
            .iter()
            .map(|&(a, b)| if a < b { a + (b - a) / 2 } else { a.min(3) })
            .collect();
        assert_eq!(centers, vec![0, 0, 1, 1, 2, 2, 3, 3]);
    }

    #[test]
    fn train_clip_stays_within_segments() {
        let cfg = small_cfg();
        let stream = generate_synthetic_benchmark(&cfg, 2).unwrap();
        let video = &stream.sessions[0].train[0];
        let bounds = segment_bounds(video.raw_frames(), 8);
        let mut rng = seeds::rng(0, "train-clip-test", 0);
        for _ in 0..20 {
            let clip = train_clip(video, 8, &mut rng);
            for (slot, &(a, b)) in bounds.iter().enumerate() {
                let got = clip.frames.index_axis(Axis(0), slot);
                let found = (a..b.max(a + 1)).any(|t| got == video.frame(t));
                assert!(found, "segment {slot} sampled outside [{a}, {b})");
            }
        }
    }

    #[test]
    fn disk_roundtrip_preserves_stream() {
        let cfg = DataConfig {
            num_classes: 4,
            train_per_class: 2,
            test_per_class: 1,
            base_classes: 2,
            ..DataConfig::default()
        };
        let stream = generate_synthetic_benchmark(&cfg, 21).unwrap();
        let dir = tempfile::tempdir().unwrap();
        save_benchmark(&stream, dir.path()).unwrap();
        let back = load_benchmark(dir.path()).unwrap();
        assert_eq!(back.class_names, stream.class_names);
        assert_eq!(back.sessions.len(), stream.sessions.len());
        for (a, b) in stream.sessions.iter().zip(&back.sessions) {
            assert_eq!(a.labels, b.labels);
            assert_eq!(a.train.len(), b.train.len());
            for (va, vb) in a.train.iter().zip(&b.train).chain(a.test.iter().zip(&b.test)) {
                assert_eq!(va.id, vb.id);
                assert_eq!(va.label, vb.label);
                assert_eq!(va.frames, vb.frames);
            }
        }
    }

    #[test]
    fn truncated_cache_is_rejected() {
        let cfg = DataConfig {
            num_classes: 2,
            train_per_class: 1,
            test_per_class: 1,
            base_classes: 2,
            classes_per_session: 2,
            ..DataConfig::default()
        };
        let stream = generate_synthetic_benchmark(&cfg, 0).unwrap();
        let dir = tempfile::tempdir().unwrap();
        save_benchmark(&stream, dir.path()).unwrap();
        let victim = dir.path().join("video_00000.bin");
        let bytes = std::fs::read(&victim).unwrap();
        std::fs::write(&victim, &bytes[..bytes.len() - 4]).unwrap();
        assert!(load_benchmark(dir.path()).is_err());
    }
}
