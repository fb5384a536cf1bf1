use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use clap::Args;
use dasco_core::ganlab::{generate, train_dual_gan, Binning, GanConfig, GanMetricsRow, Objective, StaticDataSpec};
use dasco_core::nn::Tensor;
use dasco_core::svg::{LineChart, Series};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::config::{layered, write_json, write_text};
use crate::{CmdResult, Failure};

#[derive(Debug, Args)]
pub struct GanDemoArgs {
    /// Comma-separated 1D mode centers with equal weights.
    #[arg(long, value_delimiter = ',', allow_hyphen_values = true, default_value = "-1,1")]
    pub modes: Vec<f32>,
    /// zero, linear, neg-distance or step.
    #[arg(long, default_value = "linear")]
    pub objective: String,
    /// JSON data spec replacing --modes and --objective (use for 2D data).
    #[arg(long)]
    pub spec: Option<PathBuf>,
    /// JSON object overriding GAN settings.
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub steps: Option<usize>,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Train the primary generator alone against the discriminator.
    #[arg(long)]
    pub no_aux: bool,
    /// Minimize the objective instead of maximizing it.
    #[arg(long)]
    pub minimize: bool,
    #[arg(long)]
    pub f_weight: Option<f32>,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Serialize)]
struct RunConfig<'a> {
    command: &'static str,
    seed: u64,
    use_aux: bool,
    spec: &'a StaticDataSpec,
    gan: &'a GanConfig,
}

fn resolve(a: &GanDemoArgs) -> Result<(StaticDataSpec, GanConfig), Failure> {
    let spec = match &a.spec {
        Some(path) => {
            let text = std::fs::read_to_string(path)
                .map_err(|e| Failure::Io(format!("cannot read {}: {e}", path.display())))?;
            serde_json::from_str(&text).map_err(|e| Failure::Usage(format!("{}: {e}", path.display())))?
        }
        None => StaticDataSpec::one_dimensional(&a.modes, Objective::named(&a.objective, 1)?),
    };
    spec.validate()?;
    let mut gan = layered(&GanConfig::default(), a.config.as_deref())?;
    if let Some(s) = a.steps {
        gan.steps = s;
    }
    if let Some(f) = a.f_weight {
        gan.f_weight = f;
    }
    if a.minimize {
        gan.maximize = false;
    }
    gan.validate()?;
    Ok((spec, gan))
}

fn write_metrics(path: &Path, rows: &[GanMetricsRow]) -> Result<(), Failure> {
    let io = |e: csv::Error| Failure::Io(format!("cannot write {}: {e}", path.display()));
    let mut w = csv::Writer::from_path(path).map_err(io)?;
    for r in rows {
        w.serialize(r).map_err(io)?;
    }
    w.flush().map_err(|e| Failure::Io(e.to_string()))
}

/// One sample per line, coordinates separated by a space.
fn sample_lines(t: &Tensor) -> String {
    let mut s = String::with_capacity(t.len() * 12);
    for row in t.data().chunks(t.cols()) {
        let line: Vec<String> = row.iter().map(|v| v.to_string()).collect();
        let _ = writeln!(s, "{}", line.join(" "));
    }
    s
}

/// Density curves along the first axis, one per sample set.
fn histogram_svg(data: &Tensor, sets: &[(&str, &Tensor)]) -> Result<String, Failure> {
    let first_axis =
        |t: &Tensor| Tensor::matrix(t.rows(), 1, t.data().iter().step_by(t.cols()).copied().collect()).unwrap();
    let data1 = first_axis(data);
    let bins = Binning::for_data(&data1)?;
    let (lo, hi) = bins.range(0);
    let width = (hi - lo) as f64 / bins.bins() as f64;
    let mut chart = LineChart::new("sample histograms", "x", "density");
    for (name, t) in sets {
        let h = bins.histogram(&first_axis(t))?;
        let pts = h
            .iter()
            .enumerate()
            .map(|(i, p)| (lo as f64 + (i as f64 + 0.5) * width, p / width))
            .collect();
        chart = chart.with(Series::new(*name, pts));
    }
    Ok(chart.render())
}

pub fn run(a: GanDemoArgs) -> CmdResult {
    let (spec, gan) = resolve(&a)?;
    let use_aux = !a.no_aux;
    std::fs::create_dir_all(&a.out).map_err(|e| Failure::Io(format!("cannot create {}: {e}", a.out.display())))?;
    write_json(
        &a.out.join("run_config.json"),
        &RunConfig {
            command: "gan-demo",
            seed: a.seed,
            use_aux,
            spec: &spec,
            gan: &gan,
        },
    )?;
    let run = match train_dual_gan(&spec, &gan, a.seed, use_aux) {
        Ok(run) => run,
        Err(abort) => {
            write_metrics(&a.out.join("metrics.csv"), &abort.history)?;
            return Err(abort.error.into());
        }
    };
    write_metrics(&a.out.join("metrics.csv"), &run.history)?;

    let mut rng = ChaCha8Rng::seed_from_u64(a.seed ^ 0x5A3F);
    let primary = generate(&run.primary, gan.eval_samples, gan.noise_dim, &mut rng)?;
    write_text(&a.out.join("samples_data.txt"), &sample_lines(&run.data))?;
    write_text(&a.out.join("samples_primary.txt"), &sample_lines(&primary))?;
    let mut sets = vec![("data", &run.data), ("primary", &primary)];
    let aux_samples;
    if let Some(aux) = &run.aux {
        aux_samples = generate(aux, gan.eval_samples, gan.noise_dim, &mut rng)?;
        write_text(&a.out.join("samples_aux.txt"), &sample_lines(&aux_samples))?;
        sets.push(("auxiliary", &aux_samples));
    }
    write_text(&a.out.join("histogram.svg"), &histogram_svg(&run.data, &sets)?)?;
    if let Some(m) = run.final_metrics() {
        println!("{}", serde_json::to_string(&m).unwrap());
    }
    Ok(())
}
