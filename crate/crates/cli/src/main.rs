use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::sync::Arc;
use std::time::Duration;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};

use evswitch::data::{export_dataset, generate_demos, validate_dataset, CollectionPlan, ExportOptions, ExportTarget};
use evswitch::eval::{run_experiment, EvalConfig, Experiment};
use evswitch::orchestrator::{write_trace_jsonl, EpisodeMeta};
use evswitch::policy::{GraspStub, Policy, VlaStub};
use evswitch::scenario::{random_world, reference_policies, run_options, run_with};
use evswitch::sim::CameraConfig;
use evswitch::transport::{ClientConfig, PolicyFactory, PolicyServer, RemotePolicy, ServerConfig};
use evswitch::{parse_instruction, Mode, ObjectKind, SceneConfig, Vocabulary};
use evswitch_bridge::BridgeConfig;

#[derive(Parser)]
#[command(name = "evswitch", version, about = "Event-signal policy switching for simulated pick-and-place")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct SceneArgs {
    /// Scene TOML; built-in defaults when omitted.
    #[arg(long)]
    config: Option<PathBuf>,
}

impl SceneArgs {
    fn load(&self) -> Result<SceneConfig> {
        match &self.config {
            Some(p) => SceneConfig::load(p).with_context(|| format!("loading {}", p.display())),
            None => Ok(SceneConfig::default()),
        }
    }
}

#[derive(Subcommand)]
enum Command {
    /// Run one episode and write trace.jsonl and meta.json.
    Run {
        #[arg(long)]
        task: String,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value = "hybrid")]
        mode: Mode,
        #[arg(long)]
        out: PathBuf,
        #[command(flatten)]
        scene: SceneArgs,
        /// Vocabulary file for instruction parsing.
        #[arg(long)]
        vocabulary: Option<PathBuf>,
        /// Query the approach policy over the network at this address.
        #[arg(long)]
        remote_vla: Option<String>,
        /// Reply deadline for remote calls.
        #[arg(long, default_value_t = 180)]
        deadline_ms: u64,
        /// Pace ticks at the configured rate.
        #[arg(long)]
        realtime: bool,
    },
    /// Generate the scripted demonstration dataset.
    Collect {
        /// Plan name or a TOML plan file.
        #[arg(long, default_value = "default")]
        plan: String,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
        #[command(flatten)]
        scene: SceneArgs,
    },
    /// Write training samples for one policy family.
    Export {
        #[arg(long, conflicts_with = "diffusion", required_unless_present = "diffusion")]
        vla: bool,
        #[arg(long)]
        diffusion: bool,
        dataset: PathBuf,
        /// Also write preprocessed model-input images.
        #[arg(long)]
        images: bool,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Check a dataset; exits non-zero on any violation.
    Validate {
        dataset: PathBuf,
        #[arg(long)]
        json: bool,
    },
    /// Run an evaluation protocol and write results.csv, report.md and traces/.
    Eval {
        /// reach_offset, offset_sweep, multimodal, recovery, end_to_end or baseline.
        experiment: String,
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Serve a reference policy over the frame protocol.
    ServePolicy {
        /// `vla` or an object name for its grasp policy.
        #[arg(long, default_value = "vla")]
        policy: String,
        #[arg(long, default_value = "127.0.0.1:7070")]
        bind: String,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Artificial delay before every reply.
        #[arg(long, default_value_t = 0)]
        latency_ms: u64,
        #[command(flatten)]
        scene: SceneArgs,
    },
    /// Serve the teleoperation console bridge.
    Bridge {
        #[arg(long, default_value = "127.0.0.1:8080")]
        bind: String,
        /// Where saved recordings go.
        #[arg(long)]
        dataset: PathBuf,
        #[arg(long, default_value = "pick the tape and place on the yellow plate")]
        task: String,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Console frame size as WIDTHxHEIGHT.
        #[arg(long, default_value = "64x48")]
        camera: String,
        #[command(flatten)]
        scene: SceneArgs,
    },
}

fn vocabulary(path: Option<&Path>) -> Result<Vocabulary> {
    match path {
        Some(p) => {
            let text = std::fs::read_to_string(p).with_context(|| format!("reading {}", p.display()))?;
            Ok(Vocabulary::parse(&text)?)
        }
        None => Ok(Vocabulary::default()),
    }
}

fn write_meta(path: &Path, value: &EpisodeMeta) -> Result<()> {
    let text = serde_json::to_string_pretty(value)? + "\n";
    std::fs::write(path, text).with_context(|| format!("writing {}", path.display()))
}

fn parse_camera(s: &str) -> Result<CameraConfig> {
    let (w, h) = s.split_once('x').context("camera size must look like 64x48")?;
    Ok(CameraConfig { width: w.parse()?, height: h.parse()? })
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}

fn run(cli: Cli) -> Result<ExitCode> {
    match cli.command {
        Command::Run { task, seed, mode, out, scene, vocabulary: vocab, remote_vla, deadline_ms, realtime } => {
            let cfg = scene.load()?;
            let instruction = parse_instruction(&task, &vocabulary(vocab.as_deref())?)?;
            let mut world = random_world(&cfg, instruction.object, seed)?;
            let mut policies = reference_policies(&cfg, seed);
            if let Some(addr) = remote_vla {
                let client = ClientConfig { deadline: Duration::from_millis(deadline_ms), ..ClientConfig::default() };
                policies.vla = Box::new(RemotePolicy::connect(&addr, client).with_context(|| format!("connecting to {addr}"))?);
            }
            let opts = evswitch::orchestrator::RunOptions { realtime, ..run_options(&cfg) };
            let result = run_with(&cfg, &mut world, &mut policies, &instruction, mode, &opts, &mut [])?;
            std::fs::create_dir_all(&out)?;
            write_trace_jsonl(&out.join("trace.jsonl"), &result.trace)?;
            let meta = EpisodeMeta::new(&result, &instruction, seed, mode);
            write_meta(&out.join("meta.json"), &meta)?;
            match &meta.score {
                Some(s) => println!("{}: {} score {s} ({}) in {} ticks", instruction, meta.final_phase, meta.reason.as_deref().unwrap_or("-"), meta.ticks),
                None => println!("{}: {} after {} ticks", instruction, meta.final_phase, meta.ticks),
            }
            Ok(ExitCode::SUCCESS)
        }
        Command::Collect { plan, seed, out, scene } => {
            let cfg = scene.load()?;
            let plan = match CollectionPlan::named(&plan) {
                Some(p) => p,
                None => {
                    let text = std::fs::read_to_string(&plan).with_context(|| format!("no plan named or at `{plan}`"))?;
                    toml::from_str::<CollectionPlan>(&text).with_context(|| format!("parsing {plan}"))?
                }
            };
            let manifest = generate_demos(&cfg, &plan, seed, &out)?;
            println!("{} episodes in {} (sha256 {})", manifest.episodes.len(), out.display(), manifest.dataset_sha256);
            Ok(ExitCode::SUCCESS)
        }
        Command::Export { vla, diffusion: _, dataset, images, out } => {
            let target = if vla { ExportTarget::Vla } else { ExportTarget::Diffusion };
            let opts = ExportOptions { images, out, ..ExportOptions::default() };
            let s = export_dataset(&dataset, target, &opts)?;
            println!("{}: {} samples from {} episodes in {}", s.target, s.samples, s.episodes, s.out.display());
            Ok(ExitCode::SUCCESS)
        }
        Command::Validate { dataset, json } => {
            let report = validate_dataset(&dataset, &evswitch::types::HandModel::default(), evswitch::data::DEFAULT_CLOSE_TICKS)?;
            if json {
                println!("{}", serde_json::to_string_pretty(&report)?);
            } else {
                print!("{}", report.to_text());
            }
            Ok(if report.is_clean() { ExitCode::SUCCESS } else { ExitCode::FAILURE })
        }
        Command::Eval { experiment, config, seed, out } => {
            let mut cfg = match &config {
                Some(p) => EvalConfig::load(p).with_context(|| format!("loading {}", p.display()))?,
                None => EvalConfig::default(),
            };
            let experiment = if experiment == "baseline" {
                cfg.end_to_end.modes = vec![Mode::Baseline];
                Experiment::EndToEnd
            } else {
                experiment.parse::<Experiment>().map_err(anyhow::Error::msg)?
            };
            let output = run_experiment(experiment, &cfg, seed)?;
            output.write(&out).with_context(|| format!("writing {}", out.display()))?;
            for c in &output.checks {
                println!("{} {}: {}", if c.pass { "PASS" } else { "FAIL" }, c.name, c.detail);
            }
            Ok(if output.passed() { ExitCode::SUCCESS } else { ExitCode::FAILURE })
        }
        Command::ServePolicy { policy, bind, seed, latency_ms, scene } => {
            let cfg = scene.load()?;
            let factory: PolicyFactory = if policy == "vla" {
                Arc::new(move |_| Box::new(VlaStub::new(cfg.vla.clone(), cfg.sim.workspace.clone(), cfg.dt(), seed)) as Box<dyn Policy>)
            } else {
                let object: ObjectKind = policy.parse().map_err(|_| anyhow::anyhow!("unknown policy `{policy}`"))?;
                Arc::new(move |_| {
                    Box::new(GraspStub::new(cfg.grasp_stub.clone(), object, cfg.sim.hand.clone(), cfg.dt(), seed)) as Box<dyn Policy>
                })
            };
            let server = PolicyServer::spawn(&bind, factory, ServerConfig { latency: Duration::from_millis(latency_ms), ..ServerConfig::default() })
                .with_context(|| format!("binding {bind}"))?;
            println!("serving {policy} on {}", server.local_addr());
            server.join();
            Ok(ExitCode::SUCCESS)
        }
        Command::Bridge { bind, dataset, task, seed, camera, scene } => {
            let cfg = BridgeConfig {
                instruction: parse_instruction(&task, &Vocabulary::default())?,
                scene: scene.load()?,
                camera: parse_camera(&camera)?,
                seed,
                dataset,
                realtime: true,
            };
            if cfg.camera.width == 0 || cfg.camera.height == 0 {
                bail!("camera size must be non-zero");
            }
            let rt = tokio::runtime::Runtime::new()?;
            rt.block_on(async {
                let listener = tokio::net::TcpListener::bind(&bind).await.with_context(|| format!("binding {bind}"))?;
                println!("bridge on http://{}", listener.local_addr()?);
                evswitch_bridge::serve(cfg, listener).await?;
                Ok::<_, anyhow::Error>(())
            })?;
            Ok(ExitCode::SUCCESS)
        }
    }
}
