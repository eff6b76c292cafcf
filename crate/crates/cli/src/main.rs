mod config;

use std::collections::BTreeMap;
use std::fs;
use std::io::{self, BufRead, BufReader, Write};
use std::net::TcpListener;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{anyhow, bail, Context, Result};
use autocam::arm::protocol::{line_duration, parse_command, ArmReport};
use autocam::arm::{apply_command, forward_kinematics, ArmParams, ArmState};
use autocam::control::plan_command;
use autocam::eval::{
    accuracy_table, confusion_matrices, desired_commands, format_accuracy_table, match_objects, rms_center_error,
    LabelGrouping,
};
use autocam::geometry::{build_pose, triangulate, CameraPose, ObjectEstimate};
use autocam::matching::{pair_detections, Detection, Eye, Pairing};
use autocam::records::{self, RecordError};
use autocam::sim::run_closed_loop;
use autocam::Vec3;
use clap::{Parser, Subcommand};

use config::{Config, ServeConfig};

#[derive(Parser)]
#[command(name = "autocam", version, about = "Stereo camera positioning toolkit")]
struct Cli {
    /// TOML configuration file.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Seed for simulator noise; overrides `[sim] seed`.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Camera pose as `x,y,z,yaw,pitch` (mm, degrees). Defaults to the pose
    /// of `[sim] initial_state`.
    #[arg(long, global = true, allow_hyphen_values = true)]
    pose: Option<String>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Pair detections and write one 3D estimate per paired object.
    Triangulate {
        #[arg(long)]
        detections: Option<PathBuf>,
        /// Estimates file; stdout when absent.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Plan a camera command for each frame of a detection file.
    Plan {
        #[arg(long)]
        detections: Option<PathBuf>,
        /// Also write `frame_id,zoom,tilt,pan` records here.
        #[arg(long)]
        commands_out: Option<PathBuf>,
    },
    /// Run the closed loop on a scene file.
    Simulate {
        #[arg(long)]
        scene: Option<PathBuf>,
        #[arg(long)]
        max_steps: Option<usize>,
        /// Trajectory log; stdout when absent.
        #[arg(long)]
        trajectory_out: Option<PathBuf>,
    },
    /// Perception accuracy and control confusion report.
    Evaluate {
        #[arg(long)]
        predictions: Option<PathBuf>,
        #[arg(long)]
        ground_truth: Option<PathBuf>,
        #[arg(long)]
        survey: Option<PathBuf>,
        #[arg(long)]
        proposed: Option<PathBuf>,
        /// Machine-readable report records.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Emulate the arm controller's serial line on stdin/stdout or TCP.
    ArmServe {
        /// Accept one TCP connection on this address instead of stdin.
        #[arg(long)]
        listen: Option<String>,
        /// Print the bound address on stderr once listening.
        #[arg(long)]
        print_addr: bool,
    },
}

fn pick(flag: Option<PathBuf>, configured: &Option<PathBuf>, what: &str) -> Result<PathBuf> {
    flag.or_else(|| configured.clone())
        .ok_or_else(|| anyhow!("no {what} file given (flag or [paths] entry)"))
}

fn read(path: &Path) -> Result<String> {
    fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))
}

fn parsed<T>(path: &Path, r: Result<T, RecordError>) -> Result<T> {
    r.with_context(|| format!("{}", path.display()))
}

fn parse_pose(s: &str) -> Result<CameraPose> {
    let v: Vec<f64> = s
        .split(',')
        .map(|t| t.trim().parse::<f64>())
        .collect::<Result<_, _>>()
        .with_context(|| format!("--pose {s:?}"))?;
    let [x, y, z, yaw, pitch] = v[..] else {
        bail!("--pose needs x,y,z,yaw,pitch, got {} values", v.len());
    };
    Ok(build_pose(Vec3::new(x, y, z), yaw, pitch)?)
}

fn camera_pose(cli_pose: &Option<String>, cfg: &Config) -> Result<CameraPose> {
    match cli_pose {
        Some(s) => parse_pose(s),
        None => Ok(forward_kinematics(&cfg.sim.initial_state, &cfg.arm)?),
    }
}

fn write_out(path: &Option<PathBuf>, text: &str) -> Result<()> {
    match path {
        Some(p) => fs::write(p, text).with_context(|| format!("writing {}", p.display())),
        None => {
            io::stdout().write_all(text.as_bytes())?;
            Ok(())
        }
    }
}

/// Detections grouped by frame, validated and score-filtered.
fn load_frames(path: &Path, cfg: &Config) -> Result<BTreeMap<String, Vec<Detection>>> {
    let dets = parsed(path, records::parse_detections(&read(path)?))?;
    let mut frames: BTreeMap<String, Vec<Detection>> = BTreeMap::new();
    for d in dets {
        d.validate(&cfg.rig)
            .with_context(|| format!("{}: detection {}", path.display(), records::format_detection(&d).trim_end()))?;
        if d.score >= cfg.pairing.min_score {
            frames.entry(d.frame_id.clone()).or_default().push(d);
        }
    }
    Ok(frames)
}

fn pair_frame(dets: &[Detection], cfg: &Config) -> Result<Pairing> {
    let (left, right): (Vec<_>, Vec<_>) = dets.iter().cloned().partition(|d| d.eye == Eye::Left);
    Ok(pair_detections(&left, &right, cfg.pairing.tolerance_px)?)
}

fn estimates(pairing: &Pairing, pose: &CameraPose, cfg: &Config) -> Result<Vec<ObjectEstimate>> {
    Ok(pairing
        .pairs
        .iter()
        .map(|p| triangulate(p, pose, &cfg.rig))
        .collect::<Result<_, _>>()?)
}

fn report_discarded(frame: &str, pairing: &Pairing) {
    for d in &pairing.discarded {
        eprintln!("discarded {frame}: {}", records::format_detection(d).trim_end());
    }
}

fn cmd_triangulate(cli: &Cli, cfg: &Config, detections: Option<PathBuf>, out: Option<PathBuf>) -> Result<()> {
    let path = pick(detections, &cfg.paths.detections, "detections")?;
    let pose = camera_pose(&cli.pose, cfg)?;
    let mut text = String::new();
    for (frame, dets) in load_frames(&path, cfg)? {
        let pairing = pair_frame(&dets, cfg)?;
        report_discarded(&frame, &pairing);
        for e in estimates(&pairing, &pose, cfg)? {
            text += &records::format_estimate(&frame, &e);
        }
    }
    write_out(&out.or_else(|| cfg.paths.output.clone()), &text)
}

fn cmd_plan(cli: &Cli, cfg: &Config, detections: Option<PathBuf>, commands_out: Option<PathBuf>) -> Result<()> {
    let path = pick(detections, &cfg.paths.detections, "detections")?;
    let pose = camera_pose(&cli.pose, cfg)?;
    let frames = load_frames(&path, cfg)?;
    if frames.is_empty() {
        bail!("{}: no detections (NoObjectsVisible)", path.display());
    }
    let mut out = String::new();
    let mut commands = String::new();
    for (frame, dets) in &frames {
        let pairing = pair_frame(dets, cfg)?;
        report_discarded(frame, &pairing);
        if pairing.pairs.is_empty() {
            bail!("frame {frame}: no paired objects visible (NoObjectsVisible)");
        }
        let ests = estimates(&pairing, &pose, cfg)?;
        let (cmd, report) = plan_command(&ests, &pose, &cfg.rig, &cfg.control)?;
        out += &format!("{cmd}\n");
        out += &records::format_plane_record(frame, &cmd, &report);
        commands += &records::format_command(frame, &cmd);
    }
    io::stdout().write_all(out.as_bytes())?;
    if let Some(p) = commands_out {
        fs::write(&p, commands).with_context(|| format!("writing {}", p.display()))?;
    }
    Ok(())
}

fn cmd_simulate(
    cli: &Cli,
    cfg: &Config,
    scene: Option<PathBuf>,
    max_steps: Option<usize>,
    trajectory_out: Option<PathBuf>,
) -> Result<()> {
    let path = pick(scene, &cfg.paths.scene, "scene")?;
    let scene = parsed(&path, records::parse_scene(&read(&path)?))?;
    let mut lc = cfg.loop_config();
    if let Some(seed) = cli.seed {
        lc.sim.seed = seed;
    }
    lc.sim.workspace.check(&scene)?;
    let steps = max_steps.unwrap_or(lc.sim.max_steps);
    let res = run_closed_loop(&scene, &lc.sim.initial_state, steps, &lc)?;
    let mut log = records::header(&records::TRAJECTORY_FIELDS);
    for (i, s) in res.trajectory.iter().enumerate() {
        log += &records::format_trajectory_step(i + 1, s);
    }
    let summary = format!("converged={} steps={}\n", res.converged, res.steps);
    match &trajectory_out {
        Some(p) => {
            fs::write(p, log).with_context(|| format!("writing {}", p.display()))?;
            io::stdout().write_all(summary.as_bytes())?;
        }
        None => io::stdout().write_all((log + &summary).as_bytes())?,
    }
    if !res.converged {
        bail!("did not converge within {steps} steps");
    }
    Ok(())
}

fn cmd_evaluate(
    cfg: &Config,
    predictions: Option<PathBuf>,
    ground_truth: Option<PathBuf>,
    survey: Option<PathBuf>,
    proposed: Option<PathBuf>,
    out: Option<PathBuf>,
) -> Result<()> {
    let p = &cfg.paths;
    let predictions = predictions.or_else(|| p.predictions.clone());
    let ground_truth = ground_truth.or_else(|| p.ground_truth.clone());
    let survey = survey.or_else(|| p.survey.clone());
    let proposed = proposed.or_else(|| p.proposed.clone());
    let out = out.or_else(|| p.output.clone());

    let mut text = String::new();
    let mut recs = String::new();
    match (predictions, ground_truth) {
        (Some(pp), Some(gp)) => {
            let preds = parsed(&pp, records::parse_detections(&read(&pp)?))?;
            let gts = parsed(&gp, records::parse_ground_truth(&read(&gp)?))?;
            let rows = accuracy_table(&preds, &gts, &LabelGrouping::default());
            text += &format_accuracy_table(&rows);
            for r in &rows {
                recs += &records::format_accuracy(r);
            }
            let pairs: Vec<_> = match_objects(&preds, &gts, None)
                .into_iter()
                .map(|(g, p)| (preds[p].bbox.center(), gts[g].center))
                .collect();
            let (h, v) = rms_center_error(&pairs).context("center error")?;
            text += &format!("\nRMS center error: horizontal {h:.2} px, vertical {v:.2} px ({} matches)\n", pairs.len());
            recs += &records::format_rms(h, v, pairs.len());
        }
        (None, None) => {}
        _ => bail!("--predictions and --ground-truth must be given together"),
    }
    match (survey, proposed) {
        (Some(sp), Some(cp)) => {
            let responses = parsed(&sp, records::parse_survey(&read(&sp)?))?;
            let commands = parsed(&cp, records::parse_commands(&read(&cp)?))?;
            let desired = desired_commands(&responses)?;
            let c = confusion_matrices(&commands, &desired)?;
            text += "\nDesired commands (majority vote)\n";
            for (frame, cmd) in &desired {
                text += &format!("{frame}: {cmd}\n");
                recs += &format!("desired,{}", records::format_command(frame, cmd));
            }
            for m in [c.zoom, c.tilt, c.pan] {
                text += &format!("\n{m}");
                recs += &records::format_confusion(&m);
            }
        }
        (None, None) => {}
        _ => bail!("--survey and --proposed must be given together"),
    }
    if text.is_empty() {
        bail!("nothing to evaluate: give --predictions/--ground-truth and/or --survey/--proposed");
    }
    io::stdout().write_all(text.as_bytes())?;
    if let Some(path) = out {
        fs::write(&path, recs).with_context(|| format!("writing {}", path.display()))?;
    }
    Ok(())
}

/// Serves command lines from `input`, writing reports to `output`. Returns
/// the number of error lines emitted.
fn serve<R: BufRead, W: Write>(
    input: R,
    mut output: W,
    initial: ArmState,
    params: &ArmParams,
    serve: &ServeConfig,
) -> Result<usize> {
    let emit = |out: &mut W, line: &str| -> Result<()> {
        out.write_all(line.as_bytes())?;
        out.flush()?;
        if serve.pace {
            std::thread::sleep(line_duration(line.len(), serve.baud));
        }
        Ok(())
    };
    let mut state = initial;
    let mut errors = 0;
    emit(&mut output, &ArmReport::from_state(&state, params)?.encode())?;
    for line in input.lines() {
        let line = line?;
        match parse_command(&line) {
            Ok(cmd) => {
                let applied = apply_command(&state, &cmd, params)?;
                state = applied.state;
                if applied.unreachable {
                    errors += 1;
                    emit(&mut output, "ERR,unreachable,zoom skipped\n")?;
                }
                emit(&mut output, &ArmReport::from_state(&state, params)?.encode())?;
            }
            Err(e) => {
                errors += 1;
                emit(&mut output, &format!("ERR,malformed,{},{},{}\n", e.offset, e.token, e.reason))?;
            }
        }
    }
    Ok(errors)
}

fn cmd_arm_serve(cfg: &Config, listen: Option<String>, print_addr: bool) -> Result<usize> {
    match listen {
        None => serve(io::stdin().lock(), io::stdout().lock(), cfg.sim.initial_state, &cfg.arm, &cfg.serve),
        Some(addr) => {
            let listener = TcpListener::bind(&addr).with_context(|| format!("binding {addr}"))?;
            if print_addr {
                eprintln!("listening on {}", listener.local_addr()?);
            }
            let (stream, _) = listener.accept()?;
            let reader = BufReader::new(stream.try_clone()?);
            serve(reader, stream, cfg.sim.initial_state, &cfg.arm, &cfg.serve)
        }
    }
}

fn run(cli: Cli) -> Result<ExitCode> {
    let cfg = Config::load(cli.config.as_deref())?;
    match &cli.command {
        Command::Triangulate { detections, out } => cmd_triangulate(&cli, &cfg, detections.clone(), out.clone())?,
        Command::Plan { detections, commands_out } => {
            cmd_plan(&cli, &cfg, detections.clone(), commands_out.clone())?
        }
        Command::Simulate { scene, max_steps, trajectory_out } => {
            cmd_simulate(&cli, &cfg, scene.clone(), *max_steps, trajectory_out.clone())?
        }
        Command::Evaluate { predictions, ground_truth, survey, proposed, out } => cmd_evaluate(
            &cfg,
            predictions.clone(),
            ground_truth.clone(),
            survey.clone(),
            proposed.clone(),
            out.clone(),
        )?,
        Command::ArmServe { listen, print_addr } => {
            let errors = cmd_arm_serve(&cfg, listen.clone(), *print_addr)?;
            if errors > 0 {
                eprintln!("{errors} error line(s) emitted");
                return Ok(ExitCode::FAILURE);
            }
        }
    }
    Ok(ExitCode::SUCCESS)
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
