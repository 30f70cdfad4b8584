use std::fs::{self, File};
use std::io::{self, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use clap::{Parser, Subcommand};
use eos::harness::{run_experiment, write_records, ExperimentConfig};
use eos::mask::Mask;
use eos::metrics::evaluate;
use eos::scene::io::{
    label_map, masks_from_labels, read_pgm, read_scene, write_depth_pgm, write_label_pgm,
};
use eos::scene::render;
use eos::segmenter::bridge::serve;
use eos::segmenter::OracleSegmenter;
use eos::uncos::uncos;

#[derive(Parser)]
#[command(
    name = "eos",
    version,
    about = "Interactive uncertainty-aware segmentation experiments"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run an experiment and write records, reports and label maps.
    Run {
        /// TOML config; defaults are used for missing keys.
        #[arg(long)]
        config: Option<PathBuf>,
        /// Master seed, overriding the config.
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Score a predicted label map against a ground-truth label map.
    Eval {
        #[arg(long)]
        pred: PathBuf,
        #[arg(long)]
        gt: PathBuf,
    },
    /// Segment one scene and dump every hypothesis as a label map.
    Demo {
        /// Scene JSON.
        #[arg(long)]
        scene: PathBuf,
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value = "demo")]
        out: PathBuf,
    },
    /// Serve the oracle segmenter over stdin/stdout.
    #[command(hide = true)]
    ServeOracle {
        #[arg(long)]
        config: Option<PathBuf>,
    },
}

fn load_config(path: Option<&Path>) -> Result<ExperimentConfig> {
    match path {
        Some(p) => ExperimentConfig::load(p).with_context(|| format!("loading {}", p.display())),
        None => Ok(ExperimentConfig::default()),
    }
}

fn write_labels(path: &Path, dims: eos::mask::GridDims, masks: &[Mask]) -> Result<()> {
    let file = File::create(path).with_context(|| format!("creating {}", path.display()))?;
    write_label_pgm(BufWriter::new(file), dims, &label_map(dims, masks))?;
    Ok(())
}

fn run(config: Option<&Path>, seed: Option<u64>, out: &Path) -> Result<()> {
    let mut config = load_config(config)?;
    if let Some(s) = seed {
        config.seed = s;
    }
    config.save_frames = true;
    let (output, report) = run_experiment(&config)?;

    let frames_dir = out.join("frames");
    fs::create_dir_all(&frames_dir)
        .with_context(|| format!("creating {}", frames_dir.display()))?;
    write_records(
        &output.records,
        BufWriter::new(File::create(out.join("records.csv"))?),
    )?;
    fs::write(out.join("report.txt"), report.to_text())?;
    fs::write(out.join("report.csv"), report.to_csv())?;
    fs::write(out.join("config.toml"), config.to_toml())?;
    for f in &output.frames {
        let name = format!("scene{:03}_{}_step{}.pgm", f.scene, f.method, f.step);
        let dims = eos::mask::GridDims::new(f.rows, f.cols);
        write_label_pgm(
            BufWriter::new(File::create(frames_dir.join(name))?),
            dims,
            &f.labels,
        )?;
    }
    let errors = output
        .records
        .iter()
        .filter(|r| r.status.starts_with("error"))
        .count();
    print!("{}", report.to_text());
    if errors > 0 {
        eprintln!("{errors} episodes aborted; see the status column of records.csv");
    }
    Ok(())
}

fn read_labels(path: &Path) -> Result<eos::scene::io::Pgm> {
    let file = File::open(path).with_context(|| format!("opening {}", path.display()))?;
    read_pgm(BufReader::new(file)).with_context(|| format!("reading {}", path.display()))
}

fn eval(pred: &Path, gt: &Path) -> Result<()> {
    let p = read_labels(pred)?;
    let g = read_labels(gt)?;
    if p.dims != g.dims {
        bail!("label maps differ in size: {} vs {}", p.dims, g.dims);
    }
    let e = evaluate::<f64>(
        &masks_from_labels(p.dims, &p.values),
        &masks_from_labels(g.dims, &g.values),
    );
    println!(
        "{},{},{},{},{},{},{},{}",
        e.n_pred, e.n_gt, e.p_n, e.r_n, e.f_n, e.p, e.r, e.f
    );
    Ok(())
}

fn demo(scene: &Path, config: Option<&Path>, seed: u64, out: &Path) -> Result<()> {
    let config = load_config(config)?;
    let file = File::open(scene).with_context(|| format!("opening {}", scene.display()))?;
    let scene = read_scene(BufReader::new(file))?;
    scene.validate()?;
    let obs = render(&scene, config.resolution);
    let segmenter = OracleSegmenter::new(config.oracle.clone());
    let result = uncos(&obs, &segmenter, &config.uncos, seed)?;

    fs::create_dir_all(out).with_context(|| format!("creating {}", out.display()))?;
    let dims = obs.dims;
    write_depth_pgm(
        BufWriter::new(File::create(out.join("depth.pgm"))?),
        dims,
        &obs.depth,
        0.001,
    )?;
    write_labels(
        &out.join("ground_truth.pgm"),
        dims,
        &obs.ground_truth_masks(),
    )?;
    write_labels(&out.join("confident.pgm"), dims, &result.confident)?;
    write_labels(&out.join("most_likely.pgm"), dims, &result.most_likely())?;

    let mut stdout = io::stdout().lock();
    writeln!(
        stdout,
        "{} confident masks, {} uncertain regions",
        result.confident.len(),
        result.uncertain.len()
    )?;
    for (r, region) in result.uncertain.iter().enumerate() {
        writeln!(stdout, "region {r}: {} px", region.region.footprint.len())?;
        for (h, hyp) in region.hypotheses.iter().enumerate() {
            let name = format!("region{r}_hyp{h}.pgm");
            write_labels(&out.join(&name), dims, &hyp.masks)?;
            let partial = if hyp.partial { " partial" } else { "" };
            writeln!(
                stdout,
                "  {name}: {} objects, weight {:.3}{partial}",
                hyp.masks.len(),
                hyp.weight
            )?;
        }
    }
    Ok(())
}

fn serve_oracle(config: Option<&Path>) -> Result<()> {
    let config = load_config(config)?;
    let segmenter = OracleSegmenter::new(config.oracle);
    serve(&segmenter, io::stdin().lock(), io::stdout().lock())?;
    Ok(())
}

fn main() -> Result<()> {
    match Cli::parse().command {
        Command::Run { config, seed, out } => run(config.as_deref(), seed, &out),
        Command::Eval { pred, gt } => eval(&pred, &gt),
        Command::Demo {
            scene,
            config,
            seed,
            out,
        } => demo(&scene, config.as_deref(), seed, &out),
        Command::ServeOracle { config } => serve_oracle(config.as_deref()),
    }
}
