use std::collections::{BTreeMap, HashSet};
use std::fmt::Write as _;
use std::fs;
use std::io::Write as _;
use std::path::{Path, PathBuf};
use std::time::Instant;

use hhmm_core::config::PipelineConfig;
use hhmm_core::features::{analyze_features, compute_features, select_features};
use hhmm_core::gaze::{
    load_labels, load_recording, load_recording_with, load_stimulus, write_labels, write_recording,
    write_stimulus, LoadOptions,
};
use hhmm_core::hierarchy::events_from_labels;
use hhmm_core::metrics::{
    sample_agreement, scores_csv, scores_table, BehaviorScores, Evaluation, MetricsConfig,
};
use hhmm_core::synth::{generate, ideal_scores, Scenario};
use hhmm_core::{
    run_algorithm, Algorithm, Event, GazeRecording, Labeled, SampleLabel, StimulusTrack,
};
use rayon::prelude::*;

use crate::error::{CliError, CliResult};
use crate::manifest::{hash_inputs, io_err, write_atomic, write_manifest, RunManifest};
use crate::Common;

const DEFAULT_SEED: u64 = 42;

/// Prints to stdout; a reader that went away (`| head`) is not an error.
fn emit(text: &str) -> CliResult<()> {
    let mut out = std::io::stdout().lock();
    match out.write_all(text.as_bytes()).and_then(|_| out.flush()) {
        Err(e) if e.kind() != std::io::ErrorKind::BrokenPipe => {
            Err(io_err(Path::new("<stdout>"), e))
        }
        _ => Ok(()),
    }
}

fn create_dir(dir: &Path) -> CliResult<()> {
    fs::create_dir_all(dir).map_err(|e| io_err(dir, e))
}

fn stem(path: &Path) -> String {
    let name = path
        .file_name()
        .map(|n| n.to_string_lossy().into_owned())
        .unwrap_or_default();
    name.strip_suffix(".csv").unwrap_or(&name).to_string()
}

fn fmt6(v: f64) -> String {
    format!("{v:.6}")
}

fn opt6(v: Option<f64>) -> String {
    v.map(fmt6).unwrap_or_default()
}

fn labels_bytes(times: &[f64], labels: &[SampleLabel]) -> Vec<u8> {
    let mut buf = Vec::new();
    write_labels(&mut buf, times, labels).expect("write to memory");
    buf
}

fn events_csv(events: &[Event]) -> String {
    let mut s = String::from("kind,start,end,onset_ms,offset_ms,duration_ms,centroid_x,centroid_y,amplitude_deg,mean_speed\n");
    for e in events {
        writeln!(
            s,
            "{},{},{},{},{},{},{},{},{},{}",
            e.kind.code(),
            e.start,
            e.end,
            fmt6(e.onset),
            fmt6(e.offset),
            fmt6(e.duration()),
            fmt6(e.centroid[0]),
            fmt6(e.centroid[1]),
            fmt6(e.amplitude),
            fmt6(e.mean_speed)
        )
        .unwrap();
    }
    s
}

/// Loads a label file and checks it lines up with the recording.
fn labels_for(path: &Path, rec: &GazeRecording) -> CliResult<Vec<SampleLabel>> {
    let (times, labels) = load_labels(path)?;
    if labels.len() != rec.len() {
        return Err(hhmm_core::Error::LengthMismatch {
            what: "labels",
            got: labels.len(),
            expected: rec.len(),
        }
        .into());
    }
    if let Some(i) = times
        .iter()
        .zip(&rec.samples)
        .position(|(t, s)| (t - s.t).abs() > 1e-6)
    {
        return Err(hhmm_core::Error::InvalidParameter(format!(
            "{}: label time {} at row {} does not match recording time {}",
            path.display(),
            times[i],
            i + 1,
            rec.samples[i].t
        ))
        .into());
    }
    Ok(labels)
}

struct Run {
    command: &'static str,
    started: Instant,
    params: BTreeMap<String, String>,
    inputs: Vec<PathBuf>,
    outputs: Vec<String>,
}

impl Run {
    fn new(command: &'static str, common: &Common) -> Self {
        let mut inputs = Vec::new();
        if let Some(p) = &common.config {
            inputs.push(p.clone());
        }
        Self {
            command,
            started: Instant::now(),
            params: BTreeMap::new(),
            inputs,
            outputs: Vec::new(),
        }
    }

    fn param(&mut self, k: &str, v: impl ToString) {
        self.params.insert(k.to_string(), v.to_string());
    }

    fn write(&mut self, dir: &Path, name: &str, bytes: &[u8]) -> CliResult<()> {
        write_atomic(&dir.join(name), bytes)?;
        self.outputs.push(name.to_string());
        Ok(())
    }

    fn finish(self, dir: &Path, seed: Option<u64>, cfg: &PipelineConfig) -> CliResult<()> {
        let inputs: Vec<&Path> = self.inputs.iter().map(PathBuf::as_path).collect();
        let manifest = RunManifest {
            command: self.command.to_string(),
            tool_version: env!("CARGO_PKG_VERSION").to_string(),
            seed,
            params: self.params,
            config: cfg.to_kv(),
            inputs: hash_inputs(&inputs)?,
            outputs: self.outputs,
            wall_time_ms: self.started.elapsed().as_secs_f64() * 1000.0,
        };
        write_manifest(dir, &manifest)
    }
}

pub fn classify(
    c: &Common,
    recordings: &[PathBuf],
    algo: Algorithm,
    out: &Path,
    drop_duplicates: bool,
) -> CliResult<()> {
    let cfg = c.pipeline_config()?;
    let stems: Vec<String> = recordings.iter().map(|p| stem(p)).collect();
    let mut seen = HashSet::new();
    if let Some(dup) = stems.iter().find(|s| !seen.insert(s.as_str())) {
        return Err(CliError::Usage(format!(
            "two recordings share the output name {dup:?}"
        )));
    }
    create_dir(out)?;
    let mut run = Run::new("classify", c);
    run.param("algo", algo);
    run.param("drop_duplicates", drop_duplicates);

    let opts = LoadOptions { drop_duplicates };
    let pool = c.pool()?;
    let results: Vec<CliResult<(Vec<u8>, String)>> = pool.install(|| {
        recordings
            .par_iter()
            .map(|path| {
                let rec = load_recording_with(path, opts)?.value;
                let r = run_algorithm(algo, &rec, &cfg)?;
                Ok((labels_bytes(&rec.times(), &r.labels), events_csv(&r.events)))
            })
            .collect()
    });
    for ((path, stem), result) in recordings.iter().zip(&stems).zip(results) {
        let (labels, events) = result?;
        run.write(out, &format!("{stem}.labels.csv"), &labels)?;
        run.write(out, &format!("{stem}.events.csv"), events.as_bytes())?;
        run.inputs.push(path.clone());
    }
    run.finish(out, c.seed, &cfg)
}

fn named_label_path(arg: &str) -> (String, PathBuf) {
    match arg.split_once('=') {
        Some((name, path)) if !name.is_empty() => (name.to_string(), PathBuf::from(path)),
        _ => {
            let p = PathBuf::from(arg);
            let s = stem(&p);
            (s.strip_suffix(".labels").unwrap_or(&s).to_string(), p)
        }
    }
}

fn score(
    eval: &Evaluation,
    rec: &GazeRecording,
    labels: &[SampleLabel],
) -> CliResult<BehaviorScores> {
    let events = events_from_labels(labels, rec);
    Ok(eval.scores(labels, &events, &MetricsConfig::default())?)
}

pub fn evaluate(
    c: &Common,
    rec_path: &Path,
    stim_path: &Path,
    labels: &[String],
    out: Option<&Path>,
) -> CliResult<()> {
    let cfg = c.pipeline_config()?;
    let rec = load_recording(rec_path)?;
    let stim = load_stimulus(stim_path)?;
    let eval = Evaluation::new(&rec, &stim)?;
    let mut run = Run::new("evaluate", c);
    run.inputs.push(rec_path.to_path_buf());
    run.inputs.push(stim_path.to_path_buf());

    let mut columns = Vec::new();
    for arg in labels {
        let (name, path) = named_label_path(arg);
        let l = labels_for(&path, &rec)?;
        columns.push((name, score(&eval, &rec, &l)?));
        run.inputs.push(path);
    }
    let table = scores_table(&columns);
    emit(&table)?;
    if let Some(dir) = out {
        create_dir(dir)?;
        run.param(
            "columns",
            columns
                .iter()
                .map(|(n, _)| n.as_str())
                .collect::<Vec<_>>()
                .join(","),
        );
        run.write(dir, "scores.csv", scores_csv(&columns).as_bytes())?;
        run.write(dir, "scores.txt", table.as_bytes())?;
        run.finish(dir, None, &cfg)?;
    }
    Ok(())
}

pub fn features(c: &Common, rec_path: &Path, k: usize, out: &Path) -> CliResult<()> {
    let cfg = c.pipeline_config()?;
    let seed = c.seed.unwrap_or(DEFAULT_SEED);
    let rec = load_recording(rec_path)?;
    let fs = compute_features(&rec, cfg.hierarchy.window_ms)?;
    let analyses = analyze_features(&fs, k, seed)?;
    let selection = select_features(&analyses);
    create_dir(out)?;
    let mut run = Run::new("features", c);
    run.param("k", k);
    run.inputs.push(rec_path.to_path_buf());

    let mut feat = String::from("t_ms,speed,accel,disp\n");
    for (i, s) in rec.samples.iter().enumerate() {
        writeln!(
            feat,
            "{},{},{},{}",
            fmt6(s.t),
            opt6(fs.speed[i]),
            opt6(fs.accel[i]),
            opt6(fs.disp[i])
        )
        .unwrap();
    }
    let mut cluster: Vec<Vec<Option<usize>>> = vec![vec![None; rec.len()]; analyses.len()];
    for (col, a) in cluster.iter_mut().zip(&analyses) {
        for (&i, &k) in a.indices.iter().zip(&a.report.assignments) {
            col[i] = Some(k);
        }
    }
    let mut clusters = String::from("t_ms");
    for a in &analyses {
        write!(clusters, ",{}", a.feature.name()).unwrap();
    }
    clusters.push('\n');
    for (i, s) in rec.samples.iter().enumerate() {
        clusters.push_str(&fmt6(s.t));
        for col in &cluster {
            clusters.push(',');
            if let Some(k) = col[i] {
                clusters.push_str(&k.to_string());
            }
        }
        clusters.push('\n');
    }
    let mut sep = String::from("feature,separation");
    for j in 0..k {
        write!(sep, ",centroid_{j}").unwrap();
    }
    sep.push('\n');
    for a in &analyses {
        write!(sep, "{},{}", a.feature.name(), fmt6(a.separation)).unwrap();
        for v in &a.centroids {
            write!(sep, ",{}", fmt6(*v)).unwrap();
        }
        sep.push('\n');
    }
    emit(&format!(
        "{sep}stage1 feature: {}\nstage2 feature: {}\n",
        selection.stage1.name(),
        selection.stage2.name()
    ))?;
    run.write(out, "features.csv", feat.as_bytes())?;
    run.write(out, "clusters.csv", clusters.as_bytes())?;
    run.write(out, "separation.csv", sep.as_bytes())?;
    run.finish(out, Some(seed), &cfg)
}

fn load_scenario(preset: &str, file: Option<&Path>, seed: Option<u64>) -> CliResult<Scenario> {
    let mut sc = match file {
        Some(p) => {
            let text = fs::read_to_string(p).map_err(|e| io_err(p, e))?;
            serde_json::from_str(&text).map_err(|source| CliError::Scenario {
                path: p.to_path_buf(),
                source,
            })?
        }
        None => Scenario::preset(preset).ok_or_else(|| {
            CliError::Usage(format!(
                "unknown preset {preset:?}; expected one of {}",
                Scenario::PRESETS.join(", ")
            ))
        })?,
    };
    if let Some(s) = seed {
        sc.seed = s;
    }
    sc.validate()?;
    Ok(sc)
}

pub fn synth(c: &Common, preset: &str, scenario: Option<&Path>, out: &Path) -> CliResult<()> {
    let cfg = c.pipeline_config()?;
    let sc = load_scenario(preset, scenario, c.seed)?;
    let data = generate(&sc)?;
    let ideal = ideal_scores(&sc)?;
    create_dir(out)?;
    let mut run = Run::new("synth", c);
    match scenario {
        Some(p) => run.inputs.push(p.to_path_buf()),
        None => run.param("preset", preset),
    }

    let mut rec = Vec::new();
    write_recording(&mut rec, &data.recording).expect("write to memory");
    let mut stim = Vec::new();
    write_stimulus(&mut stim, &data.stimulus).expect("write to memory");
    let mut corr = String::from("start_ms,end_ms,amplitude_deg\n");
    let t = data.recording.times();
    for k in &data.correctives {
        let end = t
            .get(k.end)
            .copied()
            .unwrap_or(t[k.end - 1] + data.recording.period_ms());
        writeln!(
            corr,
            "{},{},{}",
            fmt6(t[k.start]),
            fmt6(end),
            fmt6(k.amplitude)
        )
        .unwrap();
    }
    let mut json = serde_json::to_string_pretty(&sc).expect("scenario serializes");
    json.push('\n');

    run.write(out, "recording.csv", &rec)?;
    run.write(out, "stimulus.csv", &stim)?;
    run.write(out, "truth.csv", &labels_bytes(&t, &data.truth))?;
    run.write(out, "correctives.csv", corr.as_bytes())?;
    run.write(out, "scenario.json", json.as_bytes())?;
    run.write(
        out,
        "ideal_scores.csv",
        scores_csv(&[("ideal".into(), ideal)]).as_bytes(),
    )?;
    run.finish(out, Some(sc.seed), &cfg)
}

pub enum AblateInput {
    Preset(String),
    Files {
        rec: PathBuf,
        stim: PathBuf,
        truth: Option<PathBuf>,
    },
}

fn agreement_csv(rows: &[(String, Vec<SampleLabel>)], truth: &[SampleLabel]) -> CliResult<String> {
    let cell = |v: Option<f64>| v.map_or_else(|| "-".to_string(), |v| format!("{v:.4}"));
    let mut s = String::from("method,accuracy,f1_fix,f1_sac,f1_sp\n");
    for (name, labels) in rows {
        let a = sample_agreement(labels, truth)?;
        writeln!(
            s,
            "{name},{:.4},{},{},{}",
            a.accuracy,
            cell(a.f1(SampleLabel::Fixation)),
            cell(a.f1(SampleLabel::Saccade)),
            cell(a.f1(SampleLabel::Pursuit))
        )
        .unwrap();
    }
    Ok(s)
}

pub fn ablate(c: &Common, input: AblateInput, out: &Path) -> CliResult<()> {
    let cfg = c.pipeline_config()?;
    let mut run = Run::new("ablate", c);
    let mut seed = None;
    let (rec, stim, truth): (GazeRecording, StimulusTrack, Option<Vec<SampleLabel>>) = match input {
        AblateInput::Preset(name) => {
            let sc = load_scenario(&name, None, c.seed)?;
            run.param("preset", &name);
            seed = Some(sc.seed);
            let d = generate(&sc)?;
            (d.recording, d.stimulus, Some(d.truth))
        }
        AblateInput::Files { rec, stim, truth } => {
            let r = load_recording(&rec)?;
            let s = load_stimulus(&stim)?;
            run.inputs.push(rec);
            run.inputs.push(stim);
            let t = match truth {
                Some(p) => {
                    let t = labels_for(&p, &r)?;
                    run.inputs.push(p);
                    Some(t)
                }
                None => None,
            };
            (r, s, t)
        }
    };
    let eval = Evaluation::new(&rec, &stim)?;
    let pool = c.pool()?;
    let results: Vec<CliResult<Labeled>> = pool.install(|| {
        Algorithm::ALL
            .par_iter()
            .map(|&a| Ok(run_algorithm(a, &rec, &cfg)?))
            .collect()
    });
    let mut labeled = Vec::new();
    for (a, r) in Algorithm::ALL.iter().zip(results) {
        labeled.push((a.name().to_string(), r?));
    }

    let mut columns = Vec::new();
    if let Some(t) = &truth {
        columns.push(("ideal".to_string(), score(&eval, &rec, t)?));
    }
    for (name, l) in &labeled {
        columns.push((
            name.clone(),
            eval.scores(&l.labels, &l.events, &MetricsConfig::default())?,
        ));
    }
    create_dir(out)?;
    let table = scores_table(&columns);
    emit(&table)?;
    run.write(out, "scores.csv", scores_csv(&columns).as_bytes())?;
    run.write(out, "scores.txt", table.as_bytes())?;
    if let Some(t) = &truth {
        let rows: Vec<(String, Vec<SampleLabel>)> = labeled
            .iter()
            .map(|(n, l)| (n.clone(), l.labels.clone()))
            .collect();
        let agree = agreement_csv(&rows, t)?;
        emit(&format!("\n{agree}"))?;
        run.write(out, "agreement.csv", agree.as_bytes())?;
    }
    let times = rec.times();
    for (name, l) in &labeled {
        run.write(
            out,
            &format!("{name}.labels.csv"),
            &labels_bytes(&times, &l.labels),
        )?;
    }
    run.finish(out, seed, &cfg)
}

pub fn plot(c: &Common, rec_path: &Path, labels_path: &Path, out: Option<&Path>) -> CliResult<()> {
    c.pipeline_config()?;
    let rec = load_recording(rec_path)?;
    let labels = labels_for(labels_path, &rec)?;
    let mut s = String::from("t_ms,x_deg,y_deg,label\n");
    for (smp, l) in rec.samples.iter().zip(&labels) {
        if smp.valid {
            writeln!(
                s,
                "{},{},{},{}",
                fmt6(smp.t),
                fmt6(smp.x),
                fmt6(smp.y),
                l.code()
            )
            .unwrap();
        } else {
            writeln!(s, "{},,,{}", fmt6(smp.t), l.code()).unwrap();
        }
    }
    match out {
        Some(p) => write_atomic(p, s.as_bytes()),
        None => emit(&s),
    }
}
