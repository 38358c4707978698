use std::fs::{self, File};
use std::io::BufWriter;
use std::path::{Path, PathBuf};
use std::time::{Instant, SystemTime, UNIX_EPOCH};

use anyhow::{bail, Context, Result};
use serde::Serialize;
use sha2::{Digest, Sha256};

use screenhist::compare::{aloocv, compare_grid, paired_t_test, predictive_sojourn, write_grid_csv, PredictiveFit};
use screenhist::diagnostics::{psrf, summarize, Functional};
use screenhist::io;
use screenhist::overdx::{self, LifeTable, ProgramSpec};
use screenhist::sampler::{run as run_sampler, DrawStore, Parameter};
use screenhist::sim::{simulate_cohort, SimConfig};
use screenhist::IndividualRecord;

use crate::config::{parse_ages, parse_list, RunConfig};
use crate::{Common, CompareArgs, Data, DiagnoseArgs, FitArgs, OverdxArgs, Sampling, SimulateArgs};

#[derive(Serialize)]
struct Manifest<'a> {
    command: &'a str,
    version: &'a str,
    seed: u64,
    config_sha256: String,
    config: &'a RunConfig,
    started_unix: u64,
    wall_time_s: f64,
    outputs: Vec<String>,
}

struct Run {
    command: &'static str,
    config: RunConfig,
    out: PathBuf,
    started: Instant,
    started_unix: u64,
    outputs: Vec<String>,
}

impl Run {
    fn start(command: &'static str, common: &Common, mut config: RunConfig) -> Result<Self> {
        if let Some(out) = &common.out {
            config.paths.out = Some(out.clone());
        }
        let Some(out) = config.paths.out.clone() else {
            bail!("no output directory: pass --out or set paths.out");
        };
        fs::create_dir_all(&out).with_context(|| format!("creating {}", out.display()))?;
        config.validate()?;
        Ok(Self {
            command,
            config,
            out,
            started: Instant::now(),
            started_unix: SystemTime::now().duration_since(UNIX_EPOCH).map_or(0, |d| d.as_secs()),
            outputs: Vec::new(),
        })
    }

    fn file(&mut self, name: &str) -> Result<BufWriter<File>> {
        let path = self.out.join(name);
        self.outputs.push(name.to_string());
        Ok(BufWriter::new(
            File::create(&path).with_context(|| format!("creating {}", path.display()))?,
        ))
    }

    fn finish(mut self, seed: u64) -> Result<()> {
        let canonical = serde_json::to_vec(&self.config)?;
        let digest = Sha256::digest(&canonical);
        let config_sha256 = digest.iter().map(|b| format!("{b:02x}")).collect();
        self.outputs.push("manifest.json".into());
        let manifest = Manifest {
            command: self.command,
            version: env!("CARGO_PKG_VERSION"),
            seed,
            config_sha256,
            config: &self.config,
            started_unix: self.started_unix,
            wall_time_s: self.started.elapsed().as_secs_f64(),
            outputs: self.outputs.clone(),
        };
        let path = self.out.join("manifest.json");
        serde_json::to_writer_pretty(BufWriter::new(File::create(&path)?), &manifest)?;
        Ok(())
    }
}

fn apply_sampling(config: &mut RunConfig, common: &Common, s: &Sampling) {
    let c = &mut config.sampler;
    if let Some(v) = s.chains {
        c.chains = v;
    }
    if let Some(v) = s.iters {
        c.iterations = v;
    }
    if let Some(v) = s.warmup {
        c.warmup = v;
    }
    if s.thin.is_some() {
        c.thin = s.thin;
    }
    if let Some(v) = common.seed {
        c.seed = v;
    }
}

fn load_records(config: &mut RunConfig, data: &Data) -> Result<Vec<IndividualRecord>> {
    if let Some(p) = &data.screens {
        config.paths.screens = Some(p.clone());
    }
    if let Some(p) = &data.endpoints {
        config.paths.endpoints = Some(p.clone());
    }
    let (Some(s), Some(e)) = (&config.paths.screens, &config.paths.endpoints) else {
        bail!("both --screens and --endpoints (or paths.screens and paths.endpoints) are required");
    };
    let records = io::load_cohort(s, e)?;
    if records.is_empty() {
        bail!("the cohort is empty");
    }
    Ok(records)
}

fn read_fit(path: &Path) -> Result<DrawStore> {
    let file = File::open(path).with_context(|| format!("opening {}", path.display()))?;
    serde_json::from_reader(std::io::BufReader::new(file)).with_context(|| format!("reading {}", path.display()))
}

pub fn simulate(args: SimulateArgs) -> Result<()> {
    let mut config = RunConfig::load(args.common.config.as_deref())?;
    if let Some(n) = args.n {
        config.simulate.n = n;
    }
    if let Some(s) = args.common.seed {
        config.simulate.seed = s;
    }
    let mut run = Run::start("simulate", &args.common, config)?;
    let c = &run.config;
    let t = c.simulate.truth;
    let sim = SimConfig {
        truth: c.model.params(t.onset_rate, t.prog_rate, t.psi, t.beta)?,
        t0: c.model.t0,
        n: c.simulate.n,
        schedule: c.simulate.schedule,
        seed: c.simulate.seed,
    };
    let cohort = simulate_cohort(&sim)?;
    io::write_screens(&cohort.records, run.file("screens.csv")?)?;
    io::write_endpoints(&cohort.records, run.file("endpoints.csv")?)?;
    io::write_truth(&cohort.truth, run.file("truth.csv")?)?;
    let mut counts = [0u64; 3];
    for r in &cohort.records {
        counts[r.group() as usize] += 1;
    }
    let summary = serde_json::json!({
        "n": cohort.records.len(),
        "excluded": cohort.excluded,
        "censored": counts[0],
        "screen_detected": counts[1],
        "interval_detected": counts[2],
    });
    serde_json::to_writer_pretty(run.file("cohort.json")?, &summary)?;
    let seed = sim.seed;
    run.finish(seed)
}

pub fn fit(args: FitArgs) -> Result<()> {
    let mut config = RunConfig::load(args.common.config.as_deref())?;
    apply_sampling(&mut config, &args.common, &args.sampling);
    if let Some(a) = args.alpha_h {
        config.model.onset_shape = a;
    }
    if let Some(a) = args.alpha_prog {
        config.model.prog_shape = a;
    }
    config.sampler.store_latents |= args.export_latents;
    let records = load_records(&mut config, &args.data)?;
    let mut run = Run::start("fit", &args.common, config)?;
    let model = run.config.model_for(run.config.model.onset_shape, run.config.model.prog_shape)?;
    let mut store = run_sampler(&records, &model, &run.config.sampler)?;
    io::export_draws(&store, run.file("draws.csv")?)?;
    if run.config.sampler.store_latents {
        io::export_latents(&store, &records, run.file("latents.csv")?)?;
    }
    for c in &mut store.chains {
        c.latents = None;
    }
    serde_json::to_writer(run.file("fit.json")?, &store)?;
    let seed = run.config.sampler.seed;
    run.finish(seed)
}

pub fn diagnose(args: DiagnoseArgs) -> Result<()> {
    let config = RunConfig::load(args.common.config.as_deref())?;
    let store = read_fit(&args.fit)?;
    let mut run = Run::start("diagnose", &args.common, config)?;
    let t0 = store.model.t0;
    let functionals = [
        Functional::mean_sojourn(),
        Functional::onset_risk(80.0, t0),
        Functional::onset_hazard(50.0, t0),
        Functional::onset_hazard(70.0, t0),
    ];
    let mut summary = summarize(&store, &functionals)?;
    if args.split {
        for s in &mut summary.parameters {
            let p = Parameter::from_name(&s.name).expect("parameter name");
            s.psrf = Some(psrf(&store.traces(p), true)?);
        }
    }
    summary.write_csv(run.file("summary.csv")?)?;
    summary.write_acceptance_csv(run.file("acceptance.csv")?)?;
    serde_json::to_writer_pretty(run.file("summary.json")?, &summary)?;
    io::export_draws(&store, run.file("trace.csv")?)?;
    run.finish(0)
}

fn shape_tag(a: f64) -> String {
    a.to_string().replace('.', "p")
}

pub fn compare(args: CompareArgs) -> Result<()> {
    let mut config = RunConfig::load(args.common.config.as_deref())?;
    apply_sampling(&mut config, &args.common, &args.sampling);
    if let Some(s) = &args.alpha_h {
        config.compare.alpha_h = parse_list(s)?;
    }
    if let Some(s) = &args.alpha_prog {
        config.compare.alpha_prog = parse_list(s)?;
    }
    if let Some(j) = args.j_inner {
        config.compare.j_inner = j;
    }
    if let Some(s) = args.common.seed {
        config.compare.seed = s;
    }
    let records = load_records(&mut config, &args.data)?;
    let mut run = Run::start("compare", &args.common, config)?;
    let c = run.config.clone();
    let mut fits: Vec<(f64, f64, PredictiveFit)> = Vec::new();
    let grid: Vec<f64> = (1..=c.compare.sojourn_points)
        .map(|k| c.compare.sojourn_max * k as f64 / c.compare.sojourn_points as f64)
        .collect();
    for &ah in &c.compare.alpha_h {
        for &ap in &c.compare.alpha_prog {
            let model = c.model_for(ah, ap)?;
            let store = run_sampler(&records, &model, &c.sampler).with_context(|| format!("fitting alpha_h={ah}, alpha_prog={ap}"))?;
            let fit = aloocv(&store, &records, c.compare.j_inner, c.compare.seed)?;
            let tag = format!("ah{}_ap{}", shape_tag(ah), shape_tag(ap));
            fit.write_csv(&records, run.file(&format!("contributions_{tag}.csv"))?)?;
            let pred = predictive_sojourn(&store, &grid, c.compare.sojourn_lower, c.compare.sojourn_upper)?;
            pred.write_csv(run.file(&format!("sojourn_{tag}.csv"))?)?;
            serde_json::to_writer_pretty(
                run.file(&format!("sojourn_tails_{tag}.json"))?,
                &serde_json::json!({
                    "lower": pred.lower, "p_below": pred.p_below,
                    "upper": pred.upper, "p_above": pred.p_above,
                    "mean": pred.mean,
                }),
            )?;
            if !fit.unstable.is_empty() {
                eprintln!("warning: {tag}: {} individuals with a vanishing inner estimate", fit.unstable.len());
            }
            fits.push((ah, ap, fit));
        }
    }
    write_grid_csv(&compare_grid(&fits)?, run.file("grid.csv")?)?;
    let mut out = csv::Writer::from_writer(run.file("pairwise.csv")?);
    out.write_record(["alpha_h_a", "alpha_prog_a", "alpha_h_b", "alpha_prog_b", "delta", "t", "dof", "p_value"])?;
    for (i, a) in fits.iter().enumerate() {
        for b in &fits[i + 1..] {
            let t = paired_t_test(&a.2, &b.2)?;
            out.write_record([
                a.0.to_string(),
                a.1.to_string(),
                b.0.to_string(),
                b.1.to_string(),
                t.delta.to_string(),
                t.t.to_string(),
                t.dof.to_string(),
                t.p_value.to_string(),
            ])?;
        }
    }
    out.flush()?;
    let seed = c.compare.seed;
    run.finish(seed)
}

pub fn overdx(args: OverdxArgs) -> Result<()> {
    let mut config = RunConfig::load(args.common.config.as_deref())?;
    if let Some(s) = &args.program_ages {
        config.overdx.program_ages = parse_ages(s)?;
    }
    if let Some(p) = &args.life_table {
        config.overdx.life_table = Some(p.clone());
    }
    if let Some(n) = args.sims {
        config.overdx.sims_per_draw = n;
    }
    if let Some(s) = args.common.seed {
        config.overdx.seed = s;
    }
    let store = read_fit(&args.fit)?;
    let mut run = Run::start("overdx", &args.common, config)?;
    let c = run.config.overdx.clone();
    let program = ProgramSpec::new(c.program_ages.clone())?;
    let life = match &c.life_table {
        Some(p) => io::load_life_table(p)?,
        None => {
            eprintln!("warning: no life table given; assuming no other-cause mortality");
            LifeTable::immortal(0.0)
        }
    };
    let draws = overdx::overdiagnosis_rate(&store, &program, &life, c.sims_per_draw, c.seed)?;
    overdx::write_draws_csv(&draws, run.file("overdx_draws.csv")?)?;
    let summary = overdx::summarize_overdiagnosis(&draws)?;
    overdx::write_summary_csv(&summary, run.file("overdx_summary.csv")?)?;
    serde_json::to_writer_pretty(run.file("overdx_summary.json")?, &summary)?;
    run.finish(c.seed)
}
