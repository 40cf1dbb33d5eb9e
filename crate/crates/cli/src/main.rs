//! Batch entry points wiring the toolkit into reproducible pipelines.
//!
//! Commands communicate exclusively through documented file formats (WAV,
//! label CSV, PFT1 feature tensors, PNW1 weights), so any stage can be
//! swapped or inspected. All randomness flows from `--seed`; reruns with
//! identical flags produce byte-identical outputs.
//!
//! Exit codes: 0 success, 1 usage error, 2 data error. Errors print a
//! single machine-parseable line: `error: usage: ...` or `error: data: ...`.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use clap::{Parser, Subcommand};

use pitchlab_core::audio::{read_wav, resample_to_44100, write_wav, AudioBuffer};
use pitchlab_core::codec::decode_local;
use pitchlab_core::datagen::{
    segment_and_label, synth_sample, vowel_sample, write_manifest, write_sample, ManifestEntry,
    SynthConfig,
};
use pitchlab_core::dsp::{preprocess, write_pft1, FrameSpec};
use pitchlab_core::labeler::{label, read_label_csv, write_label_csv, PitchTrack, TrackerConfig};
use pitchlab_core::metrics::{evaluate, evaluate_delayed};
use pitchlab_core::model::{Model, ModelConfig, WeightStore};

#[derive(Parser)]
#[command(
    name = "pitchlab",
    version,
    about = "Voice pitch estimation pipelines: dataset generation, auto-labeling, features, inference, evaluation"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Clone, clap::Args)]
struct SynthFlags {
    /// Total duration of each sample in seconds.
    #[arg(long, default_value_t = 7.0)]
    duration: f64,
    #[arg(long, default_value_t = 36.0)]
    pitch_min: f64,
    #[arg(long, default_value_t = 84.0)]
    pitch_max: f64,
    #[arg(long, default_value_t = 0.1)]
    note_min: f64,
    #[arg(long, default_value_t = 1.5)]
    note_max: f64,
    #[arg(long, default_value_t = 0.2)]
    rest_prob: f64,
    #[arg(long, default_value_t = 0.3)]
    filter_prob: f64,
    #[arg(long, default_value_t = 1000.0)]
    cutoff_min: f64,
    #[arg(long, default_value_t = 20000.0)]
    cutoff_max: f64,
    /// Gaussian noise sigma as a fraction of the signal peak.
    #[arg(long, default_value_t = 0.1)]
    noise: f64,
}

impl SynthFlags {
    fn config(&self, seed: u64) -> SynthConfig {
        SynthConfig {
            seed,
            total_duration: self.duration,
            pitch_range: (self.pitch_min, self.pitch_max),
            duration_range: (self.note_min, self.note_max),
            rest_probability: self.rest_prob,
            filter_probability: self.filter_prob,
            cutoff_range: (self.cutoff_min, self.cutoff_max),
            noise_amplitude: self.noise,
            ..SynthConfig::default()
        }
    }

    fn echo(&self) -> String {
        format!(
            "--duration {} --pitch-min {} --pitch-max {} --note-min {} --note-max {} --rest-prob {} --filter-prob {} --cutoff-min {} --cutoff-max {} --noise {}",
            self.duration,
            self.pitch_min,
            self.pitch_max,
            self.note_min,
            self.note_max,
            self.rest_prob,
            self.filter_prob,
            self.cutoff_min,
            self.cutoff_max,
            self.noise
        )
    }
}

#[derive(Debug, Clone, clap::Args)]
struct TrackerFlags {
    #[arg(long, default_value_t = 55.0)]
    f_min: f64,
    #[arg(long, default_value_t = 1760.0)]
    f_max: f64,
    #[arg(long, default_value_t = 0.45)]
    voicing_threshold: f64,
    #[arg(long, default_value_t = 0.03)]
    silence_threshold: f64,
    #[arg(long, default_value_t = 0.01)]
    octave_cost: f64,
    #[arg(long, default_value_t = 0.14)]
    voiced_unvoiced_cost: f64,
    #[arg(long, default_value_t = 0.35)]
    octave_jump_cost: f64,
    #[arg(long, default_value_t = 15)]
    max_candidates: usize,
}

impl TrackerFlags {
    fn config(&self) -> TrackerConfig {
        TrackerConfig {
            f_min: self.f_min,
            f_max: self.f_max,
            voicing_threshold: self.voicing_threshold,
            silence_threshold: self.silence_threshold,
            octave_cost: self.octave_cost,
            voiced_unvoiced_cost: self.voiced_unvoiced_cost,
            octave_jump_cost: self.octave_jump_cost,
            max_candidates: self.max_candidates,
        }
    }
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthesizer dataset: wav + label csv pairs and a manifest.
    Synthgen {
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        count: usize,
        #[arg(long)]
        seed: u64,
        #[command(flatten)]
        synth: SynthFlags,
    },
    /// Generate a time-stretched vowel dataset from a directory of wavs.
    Vowelgen {
        #[arg(long)]
        vowels: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        count: usize,
        #[arg(long)]
        seed: u64,
        #[command(flatten)]
        synth: SynthFlags,
    },
    /// Auto-label a wav file with the autocorrelation tracker.
    Label {
        #[arg(long = "in")]
        input: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[command(flatten)]
        tracker: TrackerFlags,
    },
    /// Split a recording into 7 s auto-labeled segments.
    Segment {
        #[arg(long = "in")]
        input: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 7.0)]
        segment_s: f64,
    },
    /// Compute the T x 4 x 513 feature tensor of a wav file (PFT1).
    Features {
        #[arg(long = "in")]
        input: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Run the network forward pass and write the decoded pitch track.
    Infer {
        #[arg(long = "in")]
        input: PathBuf,
        #[arg(long)]
        weights: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Compare a predicted track against a reference track.
    Eval {
        #[arg(long)]
        pred: PathBuf,
        #[arg(long)]
        truth: PathBuf,
        /// Use the +-10 ms delayed comparison.
        #[arg(long)]
        delayed: bool,
        /// Also write the report as key=value lines.
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

struct DataError(String);

impl<E: std::fmt::Display> From<E> for DataError {
    fn from(e: E) -> Self {
        DataError(e.to_string())
    }
}

fn main() {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            use clap::error::ErrorKind;
            if matches!(e.kind(), ErrorKind::DisplayHelp | ErrorKind::DisplayVersion) {
                print!("{e}");
                std::process::exit(0);
            }
            let line = e
                .to_string()
                .lines()
                .next()
                .unwrap_or("invalid arguments")
                .trim_start_matches("error: ")
                .to_string();
            eprintln!("error: usage: {line}");
            std::process::exit(1);
        }
    };
    if let Err(DataError(msg)) = run(cli.command) {
        let line = msg.lines().next().unwrap_or("unknown failure");
        eprintln!("error: data: {line}");
        std::process::exit(2);
    }
}

fn load_audio(path: &Path) -> Result<AudioBuffer, DataError> {
    let buffer = read_wav(path).map_err(|e| DataError(format!("{}: {e}", path.display())))?;
    Ok(resample_to_44100(buffer))
}

fn run(command: Command) -> Result<(), DataError> {
    match command {
        Command::Synthgen {
            out,
            count,
            seed,
            synth,
        } => cmd_synthgen(&out, count, seed, &synth),
        Command::Vowelgen {
            vowels,
            out,
            count,
            seed,
            synth,
        } => cmd_vowelgen(&vowels, &out, count, seed, &synth),
        Command::Label {
            input,
            out,
            tracker,
        } => {
            let audio = load_audio(&input)?;
            let track = label(&audio, &tracker.config());
            write_label_csv(&track, &out)?;
            println!("wrote {} frames to {}", track.len(), out.display());
            Ok(())
        }
        Command::Segment {
            input,
            out,
            segment_s,
        } => cmd_segment(&input, &out, segment_s),
        Command::Features { input, out } => {
            let audio = load_audio(&input)?;
            let tensor = preprocess(&audio, &FrameSpec::default());
            write_pft1(&tensor, &out)?;
            println!("wrote {} frames to {}", tensor.frames, out.display());
            Ok(())
        }
        Command::Infer {
            input,
            weights,
            out,
        } => cmd_infer(&input, &weights, &out),
        Command::Eval {
            pred,
            truth,
            delayed,
            out,
        } => cmd_eval(&pred, &truth, delayed, out.as_deref()),
    }
}

fn cmd_synthgen(out: &Path, count: usize, seed: u64, synth: &SynthFlags) -> Result<(), DataError> {
    fs::create_dir_all(out)?;
    let mut entries = Vec::with_capacity(count);
    for i in 0..count {
        let sample_seed = seed.wrapping_add(i as u64);
        let config = synth.config(sample_seed);
        let sample = synth_sample(&config);
        let name = format!("synth_{i:05}");
        write_sample(out, &name, &sample)?;
        entries.push(ManifestEntry {
            name,
            provenance: sample.provenance,
            seed: sample_seed,
            duration_s: config.total_duration,
        });
    }
    let echo = format!(
        "synthgen --out {} --count {count} --seed {seed} {}",
        out.display(),
        synth.echo()
    );
    write_manifest(out.join("manifest.csv"), &entries, Some(&echo))?;
    println!("wrote {count} samples to {}", out.display());
    Ok(())
}

fn load_vowel_library(dir: &Path) -> Result<Vec<AudioBuffer>, DataError> {
    let mut paths: Vec<PathBuf> = fs::read_dir(dir)
        .map_err(|e| DataError(format!("{}: {e}", dir.display())))?
        .filter_map(|entry| entry.ok().map(|e| e.path()))
        .filter(|p| {
            p.extension()
                .map(|ext| ext.eq_ignore_ascii_case("wav"))
                .unwrap_or(false)
        })
        .collect();
    paths.sort();
    if paths.is_empty() {
        return Err(DataError(format!(
            "vowel directory {} contains no wav files",
            dir.display()
        )));
    }
    paths.iter().map(|p| load_audio(p)).collect()
}

fn cmd_vowelgen(
    vowels: &Path,
    out: &Path,
    count: usize,
    seed: u64,
    synth: &SynthFlags,
) -> Result<(), DataError> {
    let library = load_vowel_library(vowels)?;
    fs::create_dir_all(out)?;
    let mut entries = Vec::with_capacity(count);
    for i in 0..count {
        let sample_seed = seed.wrapping_add(i as u64);
        let config = synth.config(sample_seed);
        let sample = vowel_sample(&library, &config)?;
        let name = format!("vowel_{i:05}");
        write_sample(out, &name, &sample)?;
        entries.push(ManifestEntry {
            name,
            provenance: sample.provenance,
            seed: sample_seed,
            duration_s: config.total_duration,
        });
    }
    let echo = format!(
        "vowelgen --vowels {} --out {} --count {count} --seed {seed} {}",
        vowels.display(),
        out.display(),
        synth.echo()
    );
    write_manifest(out.join("manifest.csv"), &entries, Some(&echo))?;
    println!("wrote {count} samples to {}", out.display());
    Ok(())
}

fn cmd_segment(input: &Path, out: &Path, segment_s: f64) -> Result<(), DataError> {
    let audio = load_audio(input)?;
    fs::create_dir_all(out)?;
    let segments = segment_and_label(&audio, segment_s);
    for (i, segment) in segments.iter().enumerate() {
        let name = format!("seg_{i:05}");
        write_wav(&segment.audio, out.join(format!("{name}.wav")))?;
        write_label_csv(&segment.labels, out.join(format!("{name}.csv")))?;
    }
    println!("wrote {} segments to {}", segments.len(), out.display());
    Ok(())
}

fn cmd_infer(input: &Path, weights: &Path, out: &Path) -> Result<(), DataError> {
    let audio = load_audio(input)?;
    let store = WeightStore::load(weights)
        .map_err(|e| DataError(format!("{}: {e}", weights.display())))?;
    let config = ModelConfig::standard();
    let model = Model::load(&config, &store)?;
    let tensor = preprocess(&audio, &FrameSpec::default());
    let logits = model.forward_features(&[&tensor])?;
    let mut midi = Vec::with_capacity(logits.frames);
    for t in 0..logits.frames {
        let row = logits.frame(0, t);
        let mut probs = pitchlab_core::codec::PitchVector::silence();
        for (i, &v) in row.iter().enumerate() {
            probs.0[i] = (v as f64).exp();
        }
        midi.push(decode_local(&probs, 4));
    }
    let track = PitchTrack {
        frame_times: tensor.frame_times.clone(),
        midi,
    };
    write_label_csv(&track, out)?;
    println!("wrote {} frames to {}", track.len(), out.display());
    Ok(())
}

fn cmd_eval(pred: &Path, truth: &Path, delayed: bool, out: Option<&Path>) -> Result<(), DataError> {
    let pred_track = read_label_csv(pred)?;
    let truth_track = read_label_csv(truth)?;
    let report = if delayed {
        evaluate_delayed(&pred_track, &truth_track, 1)
    } else {
        evaluate(&pred_track, &truth_track)
    }?;
    match report {
        Some(report) => {
            let mut text = String::new();
            let _ = writeln!(text, "{}", report.table().trim_end());
            print!("{text}");
            if let Some(path) = out {
                fs::write(path, report.key_values())?;
            }
            Ok(())
        }
        None => Err(DataError(
            "no voiced frames in the reference track".to_string(),
        )),
    }
}
