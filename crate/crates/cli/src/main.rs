//! `emiff-sim`: scene generation, training, pipeline runs, sweeps,
//! gradient checks and offline evaluation.

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use emiff::eval::{ap_compute_frames, default_buckets, Frame, IouMetric};
use emiff::harness::{
    self, compression_csv, loss_trace_csv, micro_scene_gradcheck, pose_csv, results_csv, svg_line_plot, write_text,
    PlotSeries, ScenarioConfig,
};
use emiff::link::write_vicf;
use emiff::model::ParamStore;
use emiff::tensor::gradcheck::FdOptions;
use emiff::tensor::Tensor;
use emiff::{Error, Result};
use serde_json::json;

#[derive(Parser)]
#[command(name = "emiff-sim", version, about = "Cooperative vehicle-infrastructure 3D detection simulator")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Clone)]
struct Common {
    /// Scenario JSON; built-in toy defaults when omitted.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Overrides the config seed.
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long, default_value = "out")]
    out: PathBuf,
}

#[derive(Subcommand)]
enum Command {
    /// Write the resolved scenario as config.json, a starting point for edits.
    Config(Common),
    /// Generate one scene and render both camera views.
    Gen(Common),
    /// Train toy weights; writes weights.vicw and loss_trace.csv.
    Train {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        steps: Option<usize>,
        #[arg(long)]
        lr: Option<f64>,
    },
    /// Run the full pipeline; writes results.csv, summary.json, detections.json.
    Run {
        #[command(flatten)]
        common: Common,
        /// Checkpoint; freshly initialised weights when omitted.
        #[arg(long)]
        weights: Option<PathBuf>,
        /// Print every stage's output shape.
        #[arg(long)]
        trace: bool,
        /// Write each transmitted payload as a .vicf file.
        #[arg(long)]
        dump_features: bool,
    },
    /// AP and Average Byte over the config's ccr × scr grid.
    SweepCompression {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        weights: Option<PathBuf>,
    },
    /// Mean AP versus infrastructure rotation noise.
    SweepPose {
        #[command(flatten)]
        common: Common,
        /// Checkpoint; toy weights are trained per the config when omitted.
        #[arg(long)]
        weights: Option<PathBuf>,
    },
    /// Finite-difference check of the full loss on a micro-scene.
    Gradcheck {
        #[command(flatten)]
        common: Common,
        /// Probed elements per parameter tensor.
        #[arg(long, default_value_t = 8)]
        per_tensor: usize,
    },
    /// AP of saved detections (the detections.json written by `run`).
    Eval {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        input: PathBuf,
    },
}

fn load_config(c: &Common, fallback: fn() -> ScenarioConfig) -> Result<ScenarioConfig> {
    let mut cfg = match &c.config {
        Some(p) => ScenarioConfig::from_json(&std::fs::read_to_string(p)?)?,
        None => fallback(),
    };
    if let Some(s) = c.seed {
        cfg.seed = s;
    }
    cfg.validate()?;
    std::fs::create_dir_all(&c.out)?;
    Ok(cfg)
}

fn load_weights(path: Option<&Path>, cfg: &ScenarioConfig) -> Result<ParamStore> {
    match path {
        Some(p) => ParamStore::load(p),
        None => cfg.model.init_params(&[(cfg.ccr, cfg.scr)], cfg.seed),
    }
}

fn write_ppm(path: &Path, img: &Tensor) -> Result<()> {
    let (h, w) = (img.dim(1), img.dim(2));
    let mut bytes = format!("P6\n{w} {h}\n255\n").into_bytes();
    for i in 0..h * w {
        for c in 0..3 {
            bytes.push((img.data()[c * h * w + i].clamp(0.0, 1.0) * 255.0).round() as u8);
        }
    }
    std::fs::write(path, bytes)?;
    Ok(())
}

fn gen(c: &Common) -> Result<()> {
    let cfg = load_config(c, ScenarioConfig::default)?;
    let scene = harness::generate_scene(&cfg, cfg.seed)?;
    let moved = emiff::geometry::displace_objects(&scene.objects, cfg.delta_t);
    write_ppm(&c.out.join("veh.ppm"), &harness::rasterize(&scene.objects, &scene.cam_veh, cfg.image_size))?;
    write_ppm(&c.out.join("inf.ppm"), &harness::rasterize(&moved, &scene.cam_inf, cfg.image_size))?;
    let doc = json!({
        "seed": cfg.seed,
        "objects": scene.objects,
        "camera_veh": { "flat_r_t_k": scene.cam_veh.flatten().to_vec(), "capture_time": scene.cam_veh.capture_time },
        "camera_inf": { "flat_r_t_k": scene.cam_inf.flatten().to_vec(), "capture_time": scene.cam_inf.capture_time },
    });
    write_text(&c.out.join("scene.json"), &serde_json::to_string_pretty(&doc)?)?;
    println!("{} objects -> {}", scene.objects.len(), c.out.display());
    Ok(())
}

fn train(c: &Common, steps: Option<usize>, lr: Option<f64>) -> Result<ParamStore> {
    let cfg = load_config(c, ScenarioConfig::default)?;
    let steps = steps.unwrap_or(cfg.train.steps);
    let lr = lr.unwrap_or(cfg.train.lr);
    let out = harness::train_toy(&cfg, steps, lr, cfg.seed)?;
    out.params.save(&c.out.join("weights.vicw"))?;
    write_text(&c.out.join("loss_trace.csv"), &loss_trace_csv(&out.trace)?)?;
    let (first, last) = (out.trace[0].total, out.trace.last().expect("non-empty").total);
    println!("loss {first:.6} -> {last:.6} over {steps} steps ({:.1}%)", 100.0 * last / first);
    Ok(out.params)
}

fn run(c: &Common, weights: Option<&Path>, trace: bool, dump: bool) -> Result<()> {
    let cfg = load_config(c, ScenarioConfig::default)?;
    let w = load_weights(weights, &cfg)?;
    let res = harness::run_pipeline(&cfg, &w)?;
    write_text(&c.out.join("results.csv"), &results_csv(std::slice::from_ref(&res))?)?;
    write_text(&c.out.join("summary.json"), &serde_json::to_string_pretty(&res)?)?;
    write_text(&c.out.join("detections.json"), &serde_json::to_string_pretty(&res.frames)?)?;
    if trace {
        for (stage, shape) in &res.trace.stages {
            println!("{stage:<24} {shape:?}");
        }
    }
    if dump {
        for i in 0..cfg.eval_scenes as u64 {
            let sr = harness::run_scene(
                &cfg,
                &w,
                harness::derive_seed(cfg.seed, "scene", i),
                harness::derive_seed(cfg.seed, "pose", i),
            )?;
            write_vicf(&c.out.join(format!("scene{i}.vicf")), &sr.packet)?;
        }
    }
    let ap = |v: Option<f64>| v.map_or("absent".to_string(), |x| format!("{x:.4}"));
    println!(
        "AP3D {} APBEV {} AB {} bytes, delay {:.6} s, {:.2} s wall",
        ap(res.ap_3d[0].ap),
        ap(res.ap_bev[0].ap),
        res.average_byte,
        res.arrival_delay,
        res.wall_time_s
    );
    Ok(())
}

fn sweep_compression(c: &Common, weights: Option<&Path>) -> Result<()> {
    let cfg = load_config(c, ScenarioConfig::default)?;
    let w = weights.map(ParamStore::load).transpose()?;
    let rows = harness::sweep_compression(&cfg, w.as_ref(), &cfg.sweep.ccr, &cfg.sweep.scr)?;
    write_text(&c.out.join("compression.csv"), &compression_csv(&rows)?)?;
    let pts = |f: fn(&harness::CompressionRow) -> f64| {
        rows.iter().map(|r| ((r.total_rate as f64).log2(), f(r))).collect::<Vec<_>>()
    };
    let ab_max = rows.iter().map(|r| r.average_byte).fold(1.0, f64::max);
    let series = [
        PlotSeries {
            name: "AP3D".into(),
            points: pts(|r| r.ap_3d.unwrap_or(f64::NAN)),
        },
        PlotSeries {
            name: "AB / max AB".into(),
            points: rows.iter().map(|r| ((r.total_rate as f64).log2(), r.average_byte / ab_max)).collect(),
        },
    ];
    write_text(
        &c.out.join("compression.svg"),
        &svg_line_plot("AP3D and Average Byte vs compression", "log2(ccr·scr)", "value", &series),
    )?;
    println!("{} rows -> {}", rows.len(), c.out.join("compression.csv").display());
    Ok(())
}

fn sweep_pose(c: &Common, weights: Option<&Path>) -> Result<()> {
    let cfg = load_config(c, ScenarioConfig::default)?;
    let w = match weights {
        Some(p) => ParamStore::load(p)?,
        None => {
            let out = harness::train_toy(&cfg, cfg.train.steps, cfg.train.lr, cfg.seed)?;
            out.params.save(&c.out.join("weights.vicw"))?;
            out.params
        }
    };
    let rows = harness::sweep_pose_noise(&cfg, &w, &cfg.sweep.rot_noise_deg, cfg.sweep.seeds_per_point)?;
    write_text(&c.out.join("pose.csv"), &pose_csv(&rows)?)?;
    let series = [PlotSeries {
        name: "mean AP3D".into(),
        points: rows.iter().map(|r| (r.rot_noise_deg, r.mean_ap_3d)).collect(),
    }];
    write_text(
        &c.out.join("pose.svg"),
        &svg_line_plot("AP3D vs infrastructure rotation noise", "rotation noise (deg)", "mean AP3D", &series),
    )?;
    println!("{} rows -> {}", rows.len(), c.out.join("pose.csv").display());
    Ok(())
}

fn gradcheck(c: &Common, per_tensor: usize) -> Result<()> {
    let cfg = load_config(c, ScenarioConfig::micro)?;
    let opts = FdOptions {
        h: 1e-6,
        tol: 1e-4,
        max_elements_per_input: Some(per_tensor),
        seed: cfg.seed,
    };
    let reports = micro_scene_gradcheck(&cfg, cfg.seed, &opts)?;
    let mut csv = String::from("group,tensors,elements,max_rel_err,passed\n");
    for r in &reports {
        csv.push_str(&format!("{},{},{},{},{}\n", r.group, r.tensors, r.elements_checked, r.max_rel_err, r.passed));
        println!("{:<10} {:>4} probes  max rel err {:.3e}  {}", r.group, r.elements_checked, r.max_rel_err, if r.passed { "ok" } else { "FAIL" });
    }
    write_text(&c.out.join("gradcheck.csv"), &csv)?;
    if reports.iter().all(|r| r.passed) {
        Ok(())
    } else {
        Err(Error::Numeric("gradient check exceeded tolerance".into()))
    }
}

fn eval(c: &Common, input: &Path) -> Result<()> {
    std::fs::create_dir_all(&c.out)?;
    let frames: Vec<Frame> = serde_json::from_str(&std::fs::read_to_string(input)?)?;
    let buckets = default_buckets();
    let mut csv = String::from("metric,bucket,num_gt,ap\n");
    for (name, metric) in [("3d", IouMetric::ThreeD), ("bev", IouMetric::Bev)] {
        for b in ap_compute_frames(&frames, metric, harness::IOU_THRESH, &buckets) {
            let ap = b.ap.map(|x| x.to_string()).unwrap_or_default();
            csv.push_str(&format!("{name},{},{},{ap}\n", b.bucket.name, b.num_gt));
        }
    }
    write_text(&c.out.join("ap.csv"), &csv)?;
    print!("{csv}");
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match &cli.command {
        Command::Config(c) => load_config(c, ScenarioConfig::default)
            .and_then(|cfg| write_text(&c.out.join("config.json"), &(cfg.to_json() + "\n"))),
        Command::Gen(c) => gen(c),
        Command::Train { common, steps, lr } => train(common, *steps, *lr).map(|_| ()),
        Command::Run {
            common,
            weights,
            trace,
            dump_features,
        } => run(common, weights.as_deref(), *trace, *dump_features),
        Command::SweepCompression { common, weights } => sweep_compression(common, weights.as_deref()),
        Command::SweepPose { common, weights } => sweep_pose(common, weights.as_deref()),
        Command::Gradcheck { common, per_tensor } => gradcheck(common, *per_tensor),
        Command::Eval { common, input } => eval(common, input),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
