//! Experiment driver: clips → encodes → (channel → alignment) → scores → curves.

use std::collections::{BTreeMap, HashMap};
use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;

use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use super::manifest::{ClipSource, Manifest, DIRECT};
use super::store::{RecordKind, Store, StoreRecord};
use crate::alignment::{build_alignment_map, pair_captures, AlignmentMap, PairPolicy};
use crate::analysis::{self, build_curve, RateQualityCurve, ReportFiles, SavingsTable};
use crate::channel::{apply_channel_traced, ChannelConfig};
use crate::codec::{self, jnd_ladder_over, CodecConfig, LadderPoint, RateParam, RateParamKind, RateRange};
use crate::error::{Error, Result};
use crate::marker::{embed_markers, embed_markers_in, MarkerGeometry, MarkerPayload};
use crate::media::{
    generate_synthetic_clip, read_y4m_file, write_y4m_file, ClipDescriptor, FrameBuffer, Rect, Role, VideoSpec,
};
use crate::metrics::{psnr_sequence, run_external_metric, QualityRecord, RegionMask};
use crate::rng;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum RunMode {
    /// Score decoded clips against the reference on disk.
    Direct,
    /// Score captures through the simulated channel profiles.
    Camera,
    #[default]
    All,
}

impl FromStr for RunMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "direct" => Ok(RunMode::Direct),
            "camera" | "in-camera" => Ok(RunMode::Camera),
            "all" => Ok(RunMode::All),
            _ => Err(Error::Config(format!("unknown mode `{s}` (direct, camera, all)"))),
        }
    }
}

impl fmt::Display for RunMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            RunMode::Direct => "direct",
            RunMode::Camera => "camera",
            RunMode::All => "all",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TupleFailure {
    pub tuple: String,
    pub error: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
pub struct RunSummary {
    pub manifest_hash: String,
    /// Tuples scored in this run.
    pub evaluated: usize,
    /// Tuples already complete in the store.
    pub skipped: usize,
    pub failures: Vec<TupleFailure>,
    pub records_written: usize,
    pub curves: usize,
    pub warnings: Vec<String>,
}

impl RunSummary {
    /// 0 success, 2 partial failure, 3 total failure.
    pub fn exit_code(&self) -> i32 {
        match (self.failures.is_empty(), self.evaluated + self.skipped) {
            (true, _) => 0,
            (false, 0) => 3,
            (false, _) => 2,
        }
    }
}

/// Scores of one (clip, codec, GOP, rate parameter, channel) tuple.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QualityEntry {
    pub clip: String,
    pub codec: String,
    pub gop: String,
    pub rate_param: RateParam,
    pub channel: String,
    pub bitrate_mbps: f64,
    pub record: QualityRecord,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AlignmentEntry {
    pub clip: String,
    pub channel: String,
    /// Ladder-point key, or `refcam` for the reference capture.
    pub capture: String,
    pub map: AlignmentMap,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CurveEntry {
    pub channel: String,
    pub curve: RateQualityCurve,
}

/// Source clip with per-frame markers in the four frame corners and in the
/// four corners of every crop region.
pub fn embed_clip_markers(
    frames: &[FrameBuffer],
    clip_id: u16,
    geometry: &MarkerGeometry,
    rois: &[Rect],
) -> Result<Vec<FrameBuffer>> {
    let first = frames.first().ok_or_else(|| Error::EmptyInput("clip has no frames".into()))?;
    let mut rects: Vec<Rect> = geometry.corners(first.width(), first.height())?.to_vec();
    let mut regions: Vec<Rect> = Vec::new();
    for roi in rois {
        if regions.contains(roi) || *roi == Rect::new(0, 0, first.width(), first.height()) {
            continue;
        }
        for r in geometry.corners_in(*roi)? {
            if rects.iter().any(|o| *o != r && o.intersects(&r)) {
                return Err(Error::Geometry(format!("marker at {r} overlaps another marker")));
            }
            rects.push(r);
        }
        regions.push(*roi);
    }
    frames
        .iter()
        .enumerate()
        .map(|(i, f)| {
            let payload = MarkerPayload::new(clip_id, i as u32)?;
            let mut out = embed_markers(f, &payload, geometry)?;
            for roi in &regions {
                out = embed_markers_in(&out, &payload, geometry, *roi)?;
            }
            Ok(out)
        })
        .collect()
}

struct PreparedClip {
    desc: ClipDescriptor,
    frames: Vec<FrameBuffer>,
}

struct CameraRef {
    desc: ClipDescriptor,
    frames: Vec<FrameBuffer>,
    map: AlignmentMap,
    profile: ChannelConfig,
}

struct Job {
    clip: usize,
    config: CodecConfig,
    rate_params: Option<Vec<RateParam>>,
}

#[derive(Default)]
struct JobOutput {
    records: Vec<StoreRecord>,
    failures: Vec<TupleFailure>,
    evaluated: usize,
    skipped: usize,
    warnings: Vec<String>,
}

struct Ctx<'a> {
    manifest: &'a Manifest,
    hash: String,
    out_dir: PathBuf,
    store: Mutex<Store>,
    channels: Vec<String>,
    metrics: Vec<String>,
    clips: Vec<std::result::Result<PreparedClip, String>>,
    camera: HashMap<(usize, String), std::result::Result<CameraRef, String>>,
}

fn gop_token(config: &CodecConfig) -> String {
    config.gop.map_or_else(|| "na".to_string(), |g| g.to_string().replace(':', ""))
}

fn point_key(clip: &str, config: &CodecConfig, rp: &RateParam) -> String {
    format!("{clip}|{}|{}|{rp}", config.codec_name, gop_token(config))
}

fn load_source(m: &Manifest, src: &ClipSource) -> Result<(VideoSpec, Vec<FrameBuffer>)> {
    match (&src.path, &src.synthetic) {
        (Some(p), _) => read_y4m_file(m.resolve_path(p)),
        (None, Some(s)) => {
            let spec = s.spec()?;
            let seed = s.seed.unwrap_or_else(|| rng::derive_seed(m.seed, &[rng::label_key(&src.name)]));
            Ok((spec, generate_synthetic_clip(s.kind, &spec, seed)?))
        }
        (None, None) => Err(Error::Manifest(format!("clip {} has no source", src.name))),
    }
}

fn channel_profile(m: &Manifest, clip: &str, channel: &str) -> ChannelConfig {
    let base = m.channel_profiles[channel].clone();
    let seed = rng::derive_seed(m.seed, &[base.seed, rng::label_key(clip), rng::label_key(channel)]);
    ChannelConfig { seed, ..base }
}

fn capture_spec(frames: &[FrameBuffer], rate: crate::media::Rational) -> Result<VideoSpec> {
    let first = frames.first().ok_or_else(|| Error::EmptyInput("capture has no frames".into()))?;
    VideoSpec::new(first.format(), rate, frames.len())
}

impl Ctx<'_> {
    fn lookup(&self, pending: &[StoreRecord], kind: RecordKind, key: &str) -> Option<Value> {
        if let Some(r) = pending.iter().rev().find(|r| r.kind == kind && r.key == key) {
            return Some(r.payload.clone());
        }
        let store = self.store.lock().unwrap_or_else(|e| e.into_inner());
        store.get(&self.hash, kind, key).map(|r| r.payload.clone())
    }

    fn record(&self, kind: RecordKind, key: String, payload: impl Serialize) -> Result<StoreRecord> {
        Ok(StoreRecord::new(kind, key, &self.hash, serde_json::to_value(payload)?))
    }

    fn mask(&self) -> RegionMask {
        RegionMask::ExcludeMarkers { geometry: self.manifest.marker }
    }

    /// Encode (unless stored), then score every metric for one channel.
    /// Returns pooled scores by metric and whether everything was stored.
    fn eval_tuple(
        &self,
        clip: &PreparedClip,
        clip_idx: usize,
        config: &CodecConfig,
        rp: &RateParam,
        channel: &str,
        out: &mut JobOutput,
    ) -> Result<(BTreeMap<String, f64>, bool)> {
        let pkey = point_key(&clip.desc.name, config, rp);
        let qkey = |metric: &str| format!("{pkey}|{channel}|{metric}");
        let mut stored = BTreeMap::new();
        for metric in &self.metrics {
            if let Some(v) = self.lookup(&out.records, RecordKind::Quality, &qkey(metric)) {
                let e: QualityEntry = serde_json::from_value(v)?;
                stored.insert(metric.clone(), e.record.pooled);
            }
        }
        if stored.len() == self.metrics.len() {
            return Ok((stored, true));
        }

        let mut point: Option<LadderPoint> = match self.lookup(&out.records, RecordKind::LadderPoint, &pkey) {
            Some(v) => Some(serde_json::from_value(v)?),
            None => None,
        };
        if point.as_ref().is_none_or(|p| !p.decoded_clip.storage_path.exists()) {
            let work = self.out_dir.join("encodes").join(&clip.desc.name);
            let mut lp = codec::encode(&clip.desc, config, rp, &work)?;
            let timing = json!({ "encode_seconds": lp.encode_seconds, "encode_fps": lp.encode_fps });
            lp.encode_seconds = 0.0;
            lp.encode_fps = 0.0;
            out.records.push(self.record(RecordKind::LadderPoint, pkey.clone(), &lp)?.with_volatile(timing));
            point = Some(lp);
        }
        let point = point.expect("encoded above");
        let (_, decoded) = read_y4m_file(&point.decoded_clip.storage_path)?;

        let (ref_desc, ref_frames, dist_desc, dist_frames): (ClipDescriptor, Vec<FrameBuffer>, ClipDescriptor, Vec<FrameBuffer>);
        if channel == DIRECT {
            ref_desc = clip.desc.clone();
            ref_frames = clip.frames.clone();
            dist_desc = point.decoded_clip.clone();
            dist_frames = decoded;
        } else {
            let cam = match self.camera.get(&(clip_idx, channel.to_string())) {
                Some(Ok(c)) => c,
                Some(Err(e)) => return Err(Error::Consistency(format!("reference capture failed: {e}"))),
                None => return Err(Error::Config(format!("no reference capture for channel {channel}"))),
            };
            let capture_id = rng::derive_seed(1, &[rng::label_key(&pkey)]) | 1;
            let capture = apply_channel_traced(&decoded, &cam.profile.for_capture(capture_id))?;
            let map = build_alignment_map(&capture.frames, clip.desc.clip_id, &self.manifest.marker)?;
            let entry = AlignmentEntry { clip: clip.desc.name.clone(), channel: channel.to_string(), capture: pkey.clone(), map };
            out.records.push(self.record(RecordKind::Alignment, format!("{pkey}|{channel}"), &entry)?);
            let pairs = pair_captures(&cam.map, &cam.frames, &entry.map, &capture.frames, PairPolicy::FirstOfDup)?;
            let (r, d): (Vec<FrameBuffer>, Vec<FrameBuffer>) = pairs.into_iter().map(|(a, b)| (a.clone(), b.clone())).unzip();
            let rate = clip.desc.spec.frame_rate;
            let dir = self.out_dir.join("captures").join(&clip.desc.name);
            let stem = format!("{}.{}.{}.{channel}", config.codec_name, gop_token(config), rp);
            let ref_path = dir.join(format!("{stem}.refcam.y4m"));
            let dist_path = dir.join(format!("{stem}.degdeccam.y4m"));
            let (rs, ds) = (capture_spec(&r, rate)?, capture_spec(&d, rate)?);
            write_y4m_file(&ref_path, &rs, &r)?;
            write_y4m_file(&dist_path, &ds, &d)?;
            ref_desc = ClipDescriptor { spec: rs, storage_path: ref_path, ..cam.desc.clone() };
            dist_desc = point.decoded_clip.derive(Role::DegDecCam, ds, dist_path)?;
            ref_frames = r;
            dist_frames = d;
        }

        let mut scores = BTreeMap::new();
        for metric in &self.metrics {
            let record = match self.lookup(&out.records, RecordKind::Quality, &qkey(metric)) {
                Some(v) => serde_json::from_value::<QualityEntry>(v)?.record,
                None if metric == "psnr" => psnr_sequence(ref_frames.iter().zip(&dist_frames), &self.mask())?,
                None => {
                    let runner = self.manifest.runners.iter().find(|r| &r.name == metric).expect("validated");
                    run_external_metric(runner, &ref_desc.storage_path, &dist_desc.storage_path)?
                }
            };
            let record = record.with_pair(ref_desc.clone(), dist_desc.clone());
            scores.insert(metric.clone(), record.pooled);
            let entry = QualityEntry {
                clip: clip.desc.name.clone(),
                codec: config.codec_name.clone(),
                gop: config.gop_label(),
                rate_param: rp.clone(),
                channel: channel.to_string(),
                bitrate_mbps: point.bitrate_mbps,
                record,
            };
            out.records.push(self.record(RecordKind::Quality, qkey(metric), &entry)?);
        }
        Ok((scores, false))
    }

    fn ladder_for(&self, job: &Job, clip: &PreparedClip, out: &mut JobOutput) -> Result<Vec<RateParam>> {
        if let Some(v) = job.rate_params.clone().or_else(|| self.manifest.ladder.rate_params.clone()) {
            return Ok(v);
        }
        let jnd = self.manifest.ladder.jnd.as_ref().ok_or_else(|| Error::Manifest("no ladder".into()))?;
        let key = format!("{}|{}|{}", clip.desc.name, job.config.codec_name, gop_token(&job.config));
        if let Some(v) = self.lookup(&out.records, RecordKind::Ladder, &key) {
            let ladder: codec::JndLadder = serde_json::from_value(v)?;
            return Ok(ladder.rate_params);
        }
        let mut values = job.config.rate_param_range.values();
        if matches!(job.config.rate_param_range, RateRange::Labels(_)) && job.config.rate_param_kind == RateParamKind::QualityLevel {
            values.reverse();
        }
        let ladder = {
            let mut eval = |rp: &RateParam| -> Result<f64> {
                let (scores, _) = self.eval_tuple(clip, job.clip, &job.config, rp, DIRECT, out)?;
                Ok(scores[&jnd.metric])
            };
            jnd_ladder_over(&values, &mut eval, &jnd.params())?
        };
        out.warnings.extend(ladder.warnings.iter().map(|w| format!("{key}: {w}")));
        out.records.push(self.record(RecordKind::Ladder, key, &ladder)?);
        Ok(ladder.rate_params)
    }

    fn run_job(&self, job: &Job) -> JobOutput {
        let mut out = JobOutput::default();
        let src = &self.manifest.clips[job.clip];
        let prefix = format!("{}|{}|{}", src.name, job.config.codec_name, gop_token(&job.config));
        let clip = match &self.clips[job.clip] {
            Ok(c) => c,
            Err(e) => {
                out.failures.push(TupleFailure { tuple: prefix, error: format!("clip preparation: {e}") });
                return out;
            }
        };
        let rps = match self.ladder_for(job, clip, &mut out) {
            Ok(v) => v,
            Err(e) => {
                out.failures.push(TupleFailure { tuple: prefix, error: e.to_string() });
                return out;
            }
        };
        for rp in &rps {
            for channel in &self.channels {
                match self.eval_tuple(clip, job.clip, &job.config, rp, channel, &mut out) {
                    Ok((_, true)) => out.skipped += 1,
                    Ok((_, false)) => out.evaluated += 1,
                    Err(e) => out.failures.push(TupleFailure { tuple: format!("{prefix}|{rp}|{channel}"), error: e.to_string() }),
                }
            }
        }
        out
    }
}

fn prepare_clip(m: &Manifest, src: &ClipSource, rois: &[Rect], out_dir: &Path) -> Result<PreparedClip> {
    let (spec, frames) = load_source(m, src)?;
    let frames = embed_clip_markers(&frames, src.clip_id, &m.marker, rois)?;
    let path = out_dir.join("clips").join(format!("{}.aref.y4m", src.name));
    write_y4m_file(&path, &spec, &frames)?;
    let desc = ClipDescriptor { clip_id: src.clip_id, name: src.name.clone(), spec, role: Role::Ref, storage_path: path };
    Ok(PreparedClip { desc, frames })
}

fn prepare_camera(m: &Manifest, clip: &PreparedClip, channel: &str, out_dir: &Path) -> Result<CameraRef> {
    let profile = channel_profile(m, &clip.desc.name, channel);
    let capture = apply_channel_traced(&clip.frames, &profile.for_capture(0))?;
    let map = build_alignment_map(&capture.frames, clip.desc.clip_id, &m.marker)?;
    let spec = capture_spec(&capture.frames, clip.desc.spec.frame_rate)?;
    let path = out_dir.join("captures").join(&clip.desc.name).join(format!("{channel}.refcam.y4m"));
    write_y4m_file(&path, &spec, &capture.frames)?;
    let desc = clip.desc.derive(Role::RefCam, spec, path)?;
    Ok(CameraRef { desc, frames: capture.frames, map, profile })
}

/// Run jobs on `workers` threads, committing outputs in job order.
fn run_ordered<J: Sync, O: Send>(jobs: &[J], workers: usize, run: impl Fn(&J) -> O + Sync, mut commit: impl FnMut(O) + Send) {
    let next = AtomicUsize::new(0);
    let state = Mutex::new((jobs.iter().map(|_| None).collect::<Vec<Option<O>>>(), 0usize));
    let commit = Mutex::new(&mut commit);
    std::thread::scope(|s| {
        for _ in 0..workers.min(jobs.len()).max(1) {
            s.spawn(|| loop {
                let i = next.fetch_add(1, Ordering::SeqCst);
                if i >= jobs.len() {
                    break;
                }
                let output = run(&jobs[i]);
                let mut st = state.lock().unwrap_or_else(|e| e.into_inner());
                st.0[i] = Some(output);
                let mut c = commit.lock().unwrap_or_else(|e| e.into_inner());
                while st.1 < jobs.len() {
                    let k = st.1;
                    let Some(o) = st.0[k].take() else { break };
                    (*c)(o);
                    st.1 += 1;
                }
            });
        }
    });
}

/// Execute every pending tuple of the manifest and append results to
/// `<output_dir>/store.jsonl`.
pub fn run_experiment(manifest: &Manifest, mode: RunMode) -> Result<RunSummary> {
    manifest.validate()?;
    let hash = manifest.hash();
    let out_dir = manifest.output_dir();
    let channels: Vec<String> = manifest
        .channels
        .iter()
        .filter(|c| match mode {
            RunMode::All => true,
            RunMode::Direct => *c == DIRECT,
            RunMode::Camera => *c != DIRECT,
        })
        .cloned()
        .collect();
    if channels.is_empty() {
        return Err(Error::Config(format!("manifest declares no channel for mode {mode}")));
    }
    let mut store = Store::open(&manifest.store_path())?;
    let mut summary = RunSummary { manifest_hash: hash.clone(), ..Default::default() };
    let experiment = json!({
        "manifest": manifest,
        "threshold": manifest.threshold,
        "reference_codec": manifest.reference_codec,
        "metrics": manifest.metric_names(),
    });
    summary.records_written += store.append(StoreRecord::new(RecordKind::Experiment, "manifest", &hash, experiment).with_volatile(json!({})))? as usize;

    let rois: Vec<Rect> = channels.iter().filter(|c| *c != DIRECT).filter_map(|c| manifest.channel_profiles[c].roi).collect();
    let clips: Vec<std::result::Result<PreparedClip, String>> =
        manifest.clips.iter().map(|src| prepare_clip(manifest, src, &rois, &out_dir).map_err(|e| e.to_string())).collect();

    let mut camera = HashMap::new();
    for (i, clip) in clips.iter().enumerate() {
        let Ok(clip) = clip else { continue };
        for channel in channels.iter().filter(|c| *c != DIRECT) {
            let cam = prepare_camera(manifest, clip, channel, &out_dir);
            if let Ok(c) = &cam {
                let entry =
                    AlignmentEntry { clip: clip.desc.name.clone(), channel: channel.clone(), capture: "refcam".into(), map: c.map.clone() };
                let rec = StoreRecord::new(RecordKind::Alignment, format!("{}|refcam|{channel}", clip.desc.name), &hash, serde_json::to_value(&entry)?);
                summary.records_written += store.append(rec)? as usize;
            }
            camera.insert((i, channel.clone()), cam.map_err(|e| e.to_string()));
        }
    }

    let jobs: Vec<Job> = (0..manifest.clips.len())
        .flat_map(|clip| {
            manifest.codec_configs().unwrap_or_default().into_iter().map(move |(config, rate_params)| Job { clip, config, rate_params })
        })
        .collect();
    let ctx = Ctx {
        manifest,
        hash: hash.clone(),
        out_dir: out_dir.clone(),
        store: Mutex::new(store),
        channels,
        metrics: manifest.metric_names(),
        clips,
        camera,
    };
    let workers = manifest.worker_count();
    run_ordered(&jobs, workers, |job| ctx.run_job(job), |output: JobOutput| {
        let mut store = ctx.store.lock().unwrap_or_else(|e| e.into_inner());
        for rec in output.records {
            let key = rec.key.clone();
            match store.append(rec) {
                Ok(written) => summary.records_written += written as usize,
                Err(e) => summary.failures.push(TupleFailure { tuple: key, error: e.to_string() }),
            }
        }
        summary.failures.extend(output.failures);
        summary.warnings.extend(output.warnings);
        summary.evaluated += output.evaluated;
        summary.skipped += output.skipped;
    });

    let mut store = ctx.store.into_inner().unwrap_or_else(|e| e.into_inner());
    for (key, entry) in build_store_curves(&store, &hash)? {
        summary.curves += 1;
        let rec = StoreRecord::new(RecordKind::Curve, key, &hash, serde_json::to_value(&entry)?);
        summary.records_written += store.append(rec)? as usize;
    }
    for f in &summary.failures {
        log::error!("{}: {}", f.tuple, f.error);
    }
    Ok(summary)
}

/// Curves from the quality records of one manifest hash, keyed by
/// `clip|codec|gop|channel|metric`.
pub fn build_store_curves(store: &Store, hash: &str) -> Result<Vec<(String, CurveEntry)>> {
    let mut groups: BTreeMap<String, (String, Vec<(LadderPoint, QualityRecord)>)> = BTreeMap::new();
    for rec in store.latest_of(hash, RecordKind::Quality) {
        let q: QualityEntry = serde_json::from_value(rec.payload.clone())?;
        let Some((pkey, _)) = rec.key.split_once(&format!("|{}|", q.channel)) else { continue };
        let Some(lp) = store.get(hash, RecordKind::LadderPoint, pkey) else { continue };
        let lp: LadderPoint = serde_json::from_value(lp.payload.clone())?;
        let key = format!("{}|{}|{}|{}|{}", q.clip, q.codec, gop_token(&lp.config), q.channel, q.record.metric_name);
        groups.entry(key).or_insert_with(|| (q.channel.clone(), Vec::new())).1.push((lp, q.record));
    }
    groups
        .into_iter()
        .map(|(key, (channel, records))| Ok((key, CurveEntry { channel, curve: build_curve(&records)? })))
        .collect()
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct ReportOptions {
    /// Manifest hash to report; defaults to the most recent one in the store.
    pub manifest_hash: Option<String>,
    pub threshold: Option<f64>,
    pub reference_codec: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ChannelReport {
    pub channel: String,
    pub files: ReportFiles,
    pub tables: Vec<SavingsTable>,
}

/// Emit one report directory per channel under `out_dir`. Each holds one
/// savings table per metric and GOP mode: hybrid curves at that GOP plus all
/// GOP-free curves.
pub fn report_store(store_path: &Path, out_dir: &Path, opts: &ReportOptions) -> Result<Vec<ChannelReport>> {
    let store = Store::open(store_path)?;
    let hash = match &opts.manifest_hash {
        Some(h) => h.clone(),
        None => store.latest_hash().ok_or_else(|| Error::EmptyInput(format!("store {} is empty", store_path.display())))?.to_string(),
    };
    let experiment = store.get(&hash, RecordKind::Experiment, "manifest").map(|r| r.payload.clone()).unwrap_or(Value::Null);
    let threshold = opts.threshold.or_else(|| experiment["threshold"].as_f64()).unwrap_or(analysis::DEFAULT_THRESHOLD);
    let reference = opts
        .reference_codec
        .clone()
        .or_else(|| experiment["reference_codec"].as_str().map(String::from))
        .ok_or_else(|| Error::Config("no reference codec given or recorded".into()))?;

    let mut by_channel: BTreeMap<String, Vec<RateQualityCurve>> = BTreeMap::new();
    for rec in store.latest_of(&hash, RecordKind::Curve) {
        let e: CurveEntry = serde_json::from_value(rec.payload.clone())?;
        by_channel.entry(e.channel).or_default().push(e.curve);
    }
    if by_channel.is_empty() {
        return Err(Error::EmptyInput(format!("no curves for manifest {hash}")));
    }
    let mut reports = Vec::new();
    for (channel, curves) in by_channel {
        let mut tables = Vec::new();
        let metrics: std::collections::BTreeSet<&str> = curves.iter().map(|c| c.metric_name.as_str()).collect();
        for metric in metrics {
            let of_metric: Vec<&RateQualityCurve> = curves.iter().filter(|c| c.metric_name == metric).collect();
            let mut gops: Vec<Option<String>> = of_metric.iter().filter_map(|c| c.gop.map(|g| Some(g.to_string()))).collect();
            gops.sort();
            gops.dedup();
            if gops.is_empty() {
                gops.push(None);
            }
            for gop in gops {
                let selected: Vec<RateQualityCurve> = of_metric
                    .iter()
                    .filter(|c| c.gop.is_none() || c.gop.map(|g| g.to_string()) == gop)
                    .map(|c| (*c).clone())
                    .collect();
                if !selected.iter().any(|c| c.codec_name == reference) {
                    log::warn!("{channel}/{metric}: reference {reference} missing at GOP {gop:?}");
                    continue;
                }
                tables.push(analysis::savings_table(&selected, &reference, threshold)?);
            }
        }
        let files = analysis::emit_report(&curves, &tables, &out_dir.join(&channel))?;
        reports.push(ChannelReport { channel, files, tables });
    }
    Ok(reports)
}
