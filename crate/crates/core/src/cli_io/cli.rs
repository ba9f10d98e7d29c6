use std::ffi::OsString;
use std::path::{Path, PathBuf};
use std::time::Instant;

use clap::{Args, Parser, Subcommand};
use serde_json::json;

use super::format::{load_mask, load_volume, save_field, save_mask, save_volume};
use super::manifest::{digest_tree, FileDigest, RunManifest};
use super::plot::plotdata;
use super::run::{evaluate_fields, loss_csv, read_trajectory, to_trajectory, write_metrics, write_trajectory, EvalInputs};
use super::sequence::{FrameEntry, LoadedSequence, SequenceFile};
use super::write_atomic;
use crate::engine::{propagate_labels, register_sequence, RegistrationConfig, SequenceSpec};
use crate::error::{Error, Result};
use crate::field_model::save_model;
use crate::phantoms::{atrophying_blob, contracting_annulus, translated_pair, PhantomSequence};

/// Environment variable naming the directory under which runs are created
/// when `--out` is omitted.
pub const OUT_ROOT_VAR: &str = "SEQFLOW_OUT_ROOT";
const DEFAULT_OUT_ROOT: &str = "runs";

#[derive(Parser, Debug)]
#[command(name = "seqflow", version, about = "Sequential deformable registration with neural velocity fields")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Register one moving image to one fixed image.
    RegisterPair(PairArgs),
    /// Register a moving image to a sequence of frames with one model.
    RegisterSeq(SeqArgs),
    /// Warp a label mask through every checkpoint of a run.
    Propagate(PropagateArgs),
    /// Generate a synthetic sequence with ground truth.
    #[command(subcommand)]
    Phantom(PhantomCommand),
    /// Recompute metrics of a run against reference data.
    Evaluate(EvaluateArgs),
    /// Export CSV tables and graymap images of a run.
    Plotdata(PlotArgs),
}

#[derive(Args, Debug)]
struct RunOpts {
    /// JSON registration config; unknown keys are rejected.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    iterations: Option<usize>,
    /// Label whose volume is tracked.
    #[arg(long, default_value_t = 1)]
    label: u32,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct PairArgs {
    #[arg(long)]
    moving: PathBuf,
    #[arg(long)]
    fixed: PathBuf,
    #[arg(long)]
    mask: Option<PathBuf>,
    #[arg(long)]
    fixed_mask: Option<PathBuf>,
    #[command(flatten)]
    run: RunOpts,
}

#[derive(Args, Debug)]
struct SeqArgs {
    /// Sequence descriptor written by `phantom` or by hand.
    #[arg(long)]
    sequence: PathBuf,
    #[command(flatten)]
    run: RunOpts,
}

#[derive(Args, Debug)]
struct PropagateArgs {
    #[arg(long)]
    run: PathBuf,
    #[arg(long)]
    mask: PathBuf,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct EvaluateArgs {
    #[arg(long)]
    run: PathBuf,
    #[arg(long)]
    sequence: PathBuf,
    #[arg(long, default_value_t = 1)]
    label: u32,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct PlotArgs {
    #[arg(long)]
    run: PathBuf,
    /// Defaults to `<run>/plots`.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct PhantomOpts {
    #[arg(long, default_value_t = 0.05)]
    noise: f64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Subcommand, Debug)]
enum PhantomCommand {
    /// Ring whose cavity contracts and recovers over the frames.
    Annulus {
        #[arg(long, default_value_t = 64)]
        size: usize,
        #[arg(long, default_value_t = 8)]
        frames: usize,
        #[arg(long, default_value_t = 0.25)]
        amplitude: f64,
        #[command(flatten)]
        opts: PhantomOpts,
    },
    /// Blob shrinking at a constant annual rate.
    Blob {
        #[arg(long, default_value_t = 64)]
        size: usize,
        #[arg(long, default_value_t = 2)]
        dim: usize,
        /// Acquisition times in years, comma separated, starting at 0.
        #[arg(long, value_delimiter = ',', default_value = "0,0.25,0.5,1,2")]
        times: Vec<f64>,
        #[arg(long, default_value_t = 0.03)]
        rate: f64,
        #[command(flatten)]
        opts: PhantomOpts,
    },
    /// Textured image and a rigidly shifted copy.
    Translate {
        #[arg(long, default_value_t = 64)]
        size: usize,
        /// Shift in voxels along both axes, comma separated.
        #[arg(long, value_delimiter = ',', default_value = "3,0")]
        shift: Vec<f64>,
        #[command(flatten)]
        opts: PhantomOpts,
    },
}

/// Parses `argv` (program name first) and runs the command. Returns the
/// process exit code: 0 on success, 1 on runtime failure, 2 on usage errors.
pub fn run_cli<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let argv: Vec<OsString> = argv.into_iter().map(Into::into).collect();
    let cli = match Cli::try_parse_from(&argv) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return e.exit_code();
        }
    };
    let recorded: Vec<String> = argv.iter().skip(1).map(|a| a.to_string_lossy().into_owned()).collect();
    match dispatch(cli.command, recorded) {
        Ok(dir) => {
            println!("{}", dir.display());
            0
        }
        Err(e) => {
            eprintln!("error: {e}");
            1
        }
    }
}

fn out_dir(given: Option<PathBuf>, command: &str) -> Result<PathBuf> {
    let dir = match given {
        Some(d) => d,
        None => {
            let root = std::env::var_os(OUT_ROOT_VAR).map(PathBuf::from).unwrap_or_else(|| PathBuf::from(DEFAULT_OUT_ROOT));
            (1..)
                .map(|k| root.join(format!("{command}-{k:03}")))
                .find(|p| !p.exists())
                .expect("unbounded range")
        }
    };
    std::fs::create_dir_all(&dir).map_err(|e| Error::io(&dir, e))?;
    Ok(dir)
}

struct Finish<'a> {
    command: &'a str,
    argv: Vec<String>,
    config: serde_json::Value,
    seed: u64,
    inputs: &'a [PathBuf],
    start: Instant,
}

impl Finish<'_> {
    fn write(self, dir: &Path) -> Result<()> {
        let inputs = self
            .inputs
            .iter()
            .map(|p| FileDigest::of(p, p.display().to_string()))
            .collect::<Result<Vec<_>>>()?;
        RunManifest {
            command: self.command.into(),
            argv: self.argv,
            config: self.config,
            seed: self.seed,
            inputs,
            outputs: digest_tree(dir)?,
            wall_time_secs: self.start.elapsed().as_secs_f64(),
            version: env!("CARGO_PKG_VERSION").into(),
        }
        .save(dir)
    }
}

fn load_config(opts: &RunOpts, inputs: &mut Vec<PathBuf>) -> Result<RegistrationConfig> {
    let mut config = match &opts.config {
        Some(p) => {
            let text = std::fs::read_to_string(p).map_err(|e| Error::io(p, e))?;
            inputs.push(p.clone());
            RegistrationConfig::from_json(&text)?
        }
        None => RegistrationConfig::default(),
    };
    if let Some(s) = opts.seed {
        config.seed = s;
    }
    if let Some(n) = opts.iterations {
        config.iterations = n;
    }
    config.validate()?;
    Ok(config)
}

fn dispatch(command: Command, argv: Vec<String>) -> Result<PathBuf> {
    let start = Instant::now();
    match command {
        Command::RegisterPair(a) => {
            let moving = load_volume(&a.moving)?;
            let fixed = load_volume(&a.fixed)?;
            let mask = a.mask.as_deref().map(load_mask).transpose()?;
            let frame_masks = a.fixed_mask.as_deref().map(load_mask).transpose()?.into_iter().collect();
            let mut files = vec![a.moving.clone(), a.fixed.clone()];
            files.extend(a.mask.iter().cloned());
            files.extend(a.fixed_mask.iter().cloned());
            let seq = LoadedSequence {
                spec: SequenceSpec::new(moving, vec![(fixed, 1.0)], mask)?,
                frame_masks,
                true_fields: Vec::new(),
                files,
                frame_paths: vec![a.fixed.clone()],
            };
            register("register-pair", seq, &a.run, argv, start)
        }
        Command::RegisterSeq(a) => register("register-seq", SequenceFile::load(&a.sequence)?, &a.run, argv, start),
        Command::Propagate(a) => {
            let (index, fields) = read_trajectory(&a.run)?;
            let traj = to_trajectory(&index, &fields)?;
            let mask = load_mask(&a.mask)?;
            let out = out_dir(a.out, "propagate")?;
            for (i, m) in propagate_labels(&mask, &traj)?.iter().enumerate() {
                save_mask(m, &out.join(format!("masks/mask_{:03}.sqfv", i + 1)))?;
            }
            let inputs = [vec![a.run.join("trajectory.json")], index.fields.iter().map(|f| a.run.join(f)).collect(), vec![a.mask]].concat();
            Finish { command: "propagate", argv, config: json!({}), seed: 0, inputs: &inputs, start }.write(&out)?;
            Ok(out)
        }
        Command::Evaluate(a) => {
            let seq = SequenceFile::load(&a.sequence)?;
            let (index, fields) = read_trajectory(&a.run)?;
            if fields.len() != seq.spec.frames.len() {
                return Err(Error::Precondition(format!(
                    "run has {} checkpoints but the sequence has {} frames",
                    fields.len(),
                    seq.spec.frames.len()
                )));
            }
            let report = evaluate_fields(
                &fields,
                EvalInputs {
                    times: &seq.spec.times(),
                    mask: seq.spec.mask.as_ref(),
                    frame_masks: &seq.frame_masks,
                    true_fields: &seq.true_fields,
                    label: a.label,
                },
            )?;
            let out = out_dir(a.out, "evaluate")?;
            write_metrics(&out, &report)?;
            print!("{}", report.to_kv());
            let inputs = [seq.files, index.fields.iter().map(|f| a.run.join(f)).collect()].concat();
            Finish { command: "evaluate", argv, config: json!({ "label": a.label }), seed: 0, inputs: &inputs, start }.write(&out)?;
            Ok(out)
        }
        Command::Plotdata(a) => {
            let out = match a.out {
                Some(o) => o,
                None => a.run.join("plots"),
            };
            std::fs::create_dir_all(&out).map_err(|e| Error::io(&out, e))?;
            plotdata(&a.run, &out)?;
            let inputs = vec![a.run.join(super::manifest::MANIFEST_FILE), a.run.join("trajectory.json")];
            Finish { command: "plotdata", argv, config: json!({}), seed: 0, inputs: &inputs, start }.write(&out)?;
            Ok(out)
        }
        Command::Phantom(p) => phantom(p, argv, start),
    }
}

fn register(command: &str, seq: LoadedSequence, opts: &RunOpts, argv: Vec<String>, start: Instant) -> Result<PathBuf> {
    let mut inputs = seq.files.clone();
    let config = load_config(opts, &mut inputs)?;
    let result = register_sequence(&seq.spec, &config)?;
    let out = out_dir(opts.out.clone(), command)?;
    write_atomic(&out.join("config.json"), &serde_json::to_vec_pretty(&config)?)?;
    write_atomic(&out.join("loss.csv"), loss_csv(&result.loss_history).as_bytes())?;
    save_model(&result.final_model, &out.join("model.sqfm"))?;
    let fields = write_trajectory(&out, &seq.spec, &result.trajectory, &seq.frame_paths, Some(result.best_iteration))?;
    let report = evaluate_fields(
        &fields,
        EvalInputs {
            times: &seq.spec.times(),
            mask: seq.spec.mask.as_ref(),
            frame_masks: &seq.frame_masks,
            true_fields: &seq.true_fields,
            label: opts.label,
        },
    )?;
    write_metrics(&out, &report)?;
    Finish { command, argv, config: serde_json::to_value(&config)?, seed: config.seed, inputs: &inputs, start }.write(&out)?;
    Ok(out)
}

fn phantom(p: PhantomCommand, argv: Vec<String>, start: Instant) -> Result<PathBuf> {
    let (kind, params, opts, seq) = match p {
        PhantomCommand::Annulus { size, frames, amplitude, opts } => {
            let seq = contracting_annulus(size, frames, amplitude, opts.noise, opts.seed)?;
            ("annulus", json!({ "size": size, "frames": frames, "amplitude": amplitude }), opts, seq)
        }
        PhantomCommand::Blob { size, dim, times, rate, opts } => {
            let seq = atrophying_blob(&vec![size; dim], &times, rate, opts.noise, opts.seed)?;
            ("blob", json!({ "size": size, "dim": dim, "times": times, "rate": rate }), opts, seq)
        }
        PhantomCommand::Translate { size, shift, opts } => {
            let [sx, sy] = shift[..] else {
                return Err(Error::Config(format!("--shift needs 2 values, got {}", shift.len())));
            };
            let seq = translated_pair(size, [sx, sy], opts.noise, opts.seed)?;
            ("translate", json!({ "size": size, "shift": shift }), opts, seq)
        }
    };
    let out = out_dir(opts.out, &format!("phantom-{kind}"))?;
    write_phantom(&out, &seq)?;
    let mut config = params;
    config["kind"] = json!(kind);
    config["noise"] = json!(opts.noise);
    write_atomic(
        &out.join("phantom.json"),
        &serde_json::to_vec_pretty(&json!({ "times": seq.physical_times, "true_volumes": seq.true_volumes }))?,
    )?;
    Finish { command: "phantom", argv, config, seed: opts.seed, inputs: &[], start }.write(&out)?;
    Ok(out)
}

/// Frames, masks, true fields and a `sequence.json` descriptor.
fn write_phantom(out: &Path, seq: &PhantomSequence) -> Result<()> {
    for (i, f) in seq.frames.iter().enumerate() {
        save_volume(f, &out.join(format!("frame_{i:03}.sqfv")))?;
        save_mask(&seq.masks[i], &out.join(format!("mask_{i:03}.sqfv")))?;
        if i > 0 {
            save_field(&seq.true_fields[i], &out.join(format!("truth/field_{i:03}.sqfv")))?;
        }
    }
    let n = seq.frames.len();
    let desc = SequenceFile {
        moving: "frame_000.sqfv".into(),
        frames: (1..n)
            .map(|i| FrameEntry { path: format!("frame_{i:03}.sqfv"), time: seq.physical_times[i] })
            .collect(),
        mask: Some("mask_000.sqfv".into()),
        frame_masks: (1..n).map(|i| format!("mask_{i:03}.sqfv")).collect(),
        true_fields: (1..n).map(|i| format!("truth/field_{i:03}.sqfv")).collect(),
    };
    desc.save(&out.join("sequence.json"))
}
