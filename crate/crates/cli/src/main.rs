//! `offaxis` command line: scenario-driven simulation, triangulation,
//! Abel inversion, parameter recovery and model validation.

use clap::{Args, Parser, Subcommand};
use offaxis::forward_model;
use offaxis::geometry::{BeamAxis, Camera, Pixel};
use offaxis::io;
use offaxis::pencil_beam;
use offaxis::pipeline::{self, RidgeReport};
use offaxis::radon::{self, Sinogram};
use offaxis::recovery::RecoveredParams;
use offaxis::scenario::{Provenance, Scenario};
use offaxis::validation::{self, CompareConfig};
use offaxis::{Error, ErrorKind};
use serde::{Deserialize, Serialize};
use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

#[derive(Parser, Debug)]
#[command(name = "offaxis", version, about = "Off-axis inversion of narrow beams")]
struct Cli {
    /// Worker threads for data-parallel stages.
    #[arg(long, global = true)]
    threads: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Debug, Clone)]
struct Common {
    /// Scenario JSON.
    #[arg(long)]
    scenario: PathBuf,
    /// Output directory (created if missing).
    #[arg(long)]
    out: PathBuf,
    /// Overrides every seed in the scenario.
    #[arg(long)]
    seed: Option<u64>,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Spatial marginal of the pencil beam on the scenario grid.
    SimulateBeam(Common),
    /// Camera images for triangulation and station sinograms.
    Synthesize {
        #[command(flatten)]
        common: Common,
        /// Axis JSON from `triangulate`; defaults to the scenario axis.
        #[arg(long)]
        axis: Option<PathBuf>,
    },
    /// Beam axis from the camera images written by `synthesize`.
    Triangulate {
        #[command(flatten)]
        common: Common,
        /// Directory holding `cameras/`; defaults to `--out`.
        #[arg(long)]
        input: Option<PathBuf>,
    },
    /// Radial profile from a `tau,value` sinogram.
    InvertRadon {
        /// Sinogram CSV.
        #[arg(long)]
        input: PathBuf,
        /// Output directory (created if missing).
        #[arg(long)]
        out: PathBuf,
        /// Scenario for provenance (optional).
        #[arg(long)]
        scenario: Option<PathBuf>,
        /// Number of output radii spanning half the window.
        #[arg(long, default_value_t = 256)]
        radii: usize,
    },
    /// Medium parameters from the station sinograms.
    Recover {
        #[command(flatten)]
        common: Common,
        /// Directory holding `stations/`; defaults to `--out`.
        #[arg(long)]
        input: Option<PathBuf>,
    },
    /// Monte Carlo comparison of pencil-beam and ballistic models.
    Validate(Common),
    /// Full chain: synthesize, triangulate, sinograms, inversion, recovery.
    Run(Common),
}

/// Error tagged with the stage that raised it.
struct StageError {
    stage: &'static str,
    err: Error,
}

type CliResult<T> = std::result::Result<T, StageError>;

trait Stage<T> {
    fn stage(self, stage: &'static str) -> CliResult<T>;
}

impl<T, E: Into<Error>> Stage<T> for std::result::Result<T, E> {
    fn stage(self, stage: &'static str) -> CliResult<T> {
        self.map_err(|e| StageError { stage, err: e.into() })
    }
}

fn exit_code(e: &Error) -> u8 {
    match e.kind() {
        ErrorKind::Schema => 2,
        ErrorKind::Numerical => 3,
        ErrorKind::IllPosed => 4,
        ErrorKind::Io => 1,
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    if let Some(n) = cli.threads {
        if !offaxis::par::set_threads(n) {
            log::warn!("--threads ignored: thread pool unavailable or already configured");
        }
    }
    match dispatch(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(StageError { stage, err }) => {
            eprintln!("error [{stage}]: {err}");
            ExitCode::from(exit_code(&err))
        }
    }
}

fn load(c: &Common) -> CliResult<Scenario> {
    let mut sc = Scenario::load(&c.scenario).stage("scenario")?;
    if let Some(seed) = c.seed {
        sc.seeds.noise = Some(seed);
        sc.seeds.mc = Some(seed);
    }
    fs::create_dir_all(&c.out).stage("output")?;
    Ok(sc)
}

#[derive(Serialize)]
struct Stamped<'a, T: Serialize> {
    provenance: &'a Provenance,
    #[serde(flatten)]
    body: T,
}

fn write_json<T: Serialize>(path: &Path, prov: &Provenance, body: T) -> CliResult<()> {
    let text = serde_json::to_string_pretty(&Stamped { provenance: prov, body }).stage("output")?;
    fs::write(path, text + "\n").stage("output")
}

fn dispatch(cmd: Command) -> CliResult<()> {
    match cmd {
        Command::SimulateBeam(c) => simulate_beam(&c),
        Command::Synthesize { common, axis } => {
            let sc = load(&common)?;
            let axis = match axis {
                Some(p) => read_axis(&p)?,
                None => sc.axis,
            };
            synthesize(&sc, &common.out, &axis)
        }
        Command::Triangulate { common, input } => {
            let sc = load(&common)?;
            let input = input.unwrap_or_else(|| common.out.clone());
            triangulate(&sc, &input, &common.out).map(|_| ())
        }
        Command::InvertRadon { input, out, scenario, radii } => invert_radon(&input, &out, scenario.as_deref(), radii),
        Command::Recover { common, input } => {
            let sc = load(&common)?;
            let input = input.unwrap_or_else(|| common.out.clone());
            recover(&sc, &input, &common.out).map(|_| ())
        }
        Command::Validate(c) => validate(&c),
        Command::Run(c) => run(&c),
    }
}

fn simulate_beam(c: &Common) -> CliResult<()> {
    let sc = load(c)?;
    let bg = sc.beam_grid.ok_or_else(|| StageError {
        stage: "scenario",
        err: Error::Schema("`beam_grid` is required for simulate-beam".into()),
    })?;
    let grid = pencil_beam::spatial_marginal_grid(bg.z, bg.grid, &sc.medium).stage("simulate-beam")?;
    let prov = sc.provenance(None);
    let mut meta = prov.meta();
    meta.push(("z".into(), io::format_f64(bg.z)));
    meta.push(("coordinates".into(), "stretched transverse X'".into()));
    let n = grid.spec.points;
    let rows: Vec<Vec<f64>> = (0..n * n)
        .map(|k| vec![grid.spec.coord(k / n), grid.spec.coord(k % n), grid.values[k]])
        .collect();
    io::write_csv(c.out.join("beam_grid.csv"), &meta, &["x", "y", "value"], &rows).stage("output")?;
    io::write_array(c.out.join("beam_grid.bin"), &[n, n], &grid.values).stage("output")?;
    write_json(&c.out.join("beam_grid.json"), &prov, serde_json::json!({ "z": bg.z, "grid": bg.grid, "array": "beam_grid.bin" }))
}

#[derive(Serialize, Deserialize)]
struct AxisFile {
    axis: BeamAxis,
    #[serde(default)]
    ridges: Vec<RidgeReport>,
}

fn read_axis(p: &Path) -> CliResult<BeamAxis> {
    let text = fs::read_to_string(p).stage("axis")?;
    let f: AxisFile = serde_json::from_str(&text).map_err(|e| Error::Schema(e.to_string())).stage("axis")?;
    Ok(f.axis)
}

fn noise_setting(sc: &Scenario) -> Option<(f64, u64)> {
    match (sc.noise.relative_std > 0.0, sc.seeds.noise) {
        (true, Some(seed)) => Some((sc.noise.relative_std, seed)),
        _ => None,
    }
}

/// Camera images under `cameras/` and station sinograms under `stations/`.
fn synthesize(sc: &Scenario, out: &Path, axis: &BeamAxis) -> CliResult<()> {
    let prov = sc.provenance(sc.seeds.noise);
    let beam = sc.beam();
    let dir = out.join("cameras");
    fs::create_dir_all(&dir).stage("output")?;
    for (k, cam) in sc.cameras.iter().enumerate() {
        let (pixels, mut values) = forward_model::camera_image(cam, &beam).stage("synthesize")?;
        if let Some((std, seed)) = noise_setting(sc) {
            let mut rng = camera_rng(seed, k);
            values.iter_mut().for_each(|v| *v = forward_model::apply_noise(*v, std, &mut rng));
        }
        write_json(&dir.join(format!("camera_{k}.json")), &prov, cam)?;
        write_image(&dir.join(format!("camera_{k}.csv")), &prov, &pixels, &values)?;
    }
    let (cams, sinos) = pipeline::synthesize_stations(sc, axis).stage("sinogram")?;
    let sdir = out.join("stations");
    fs::create_dir_all(&sdir).stage("output")?;
    for (j, (c, s)) in cams.iter().zip(&sinos).enumerate() {
        let mut meta = prov.meta();
        meta.push(("offset".into(), io::format_f64(sc.stations.offsets[j])));
        s.write_csv(sdir.join(format!("station_{j}.csv")), &meta).stage("output")?;
        write_json(&sdir.join(format!("station_{j}.json")), &prov, c)?;
    }
    Ok(())
}

/// Same stream layout as the library pipeline.
fn camera_rng(seed: u64, k: usize) -> pipeline::NoiseRng {
    pipeline::noise_rng(seed, 1_000_000 + k as u64)
}

fn write_image(path: &Path, prov: &Provenance, pixels: &[Pixel], values: &[f64]) -> CliResult<()> {
    let rows: Vec<Vec<f64>> = pixels.iter().zip(values).map(|(p, v)| vec![p.u, p.v, *v]).collect();
    io::write_csv(path, &prov.meta(), &["u", "v", "value"], &rows).stage("output")
}

fn read_image(path: &Path, cam: &Camera) -> CliResult<(Vec<Pixel>, Vec<f64>)> {
    let t = io::read_csv(path).stage("triangulate")?;
    let (u, v, val) = (t.column("u"), t.column("v"), t.column("value"));
    let (u, v, val) = (u.stage("triangulate")?, v.stage("triangulate")?, val.stage("triangulate")?);
    let pixels = u.iter().zip(&v).map(|(&u, &v)| Pixel { u, v, x: cam.point(u, v) }).collect();
    Ok((pixels, val))
}

fn triangulate(sc: &Scenario, input: &Path, out: &Path) -> CliResult<BeamAxis> {
    let prov = sc.provenance(sc.seeds.noise);
    let images = sc
        .cameras
        .iter()
        .enumerate()
        .map(|(k, cam)| read_image(&input.join("cameras").join(format!("camera_{k}.csv")), cam))
        .collect::<CliResult<Vec<_>>>()?;
    let (axis, ridges) = pipeline::triangulate_images(&sc.cameras, &images).stage("triangulate")?;
    write_json(&out.join("axis.json"), &prov, AxisFile { axis, ridges })?;
    Ok(axis)
}

fn invert_radon(input: &Path, out: &Path, scenario: Option<&Path>, n: usize) -> CliResult<()> {
    fs::create_dir_all(out).stage("output")?;
    let s = Sinogram::read_csv(input).stage("invert-radon")?;
    let reach = s.taus.last().copied().unwrap_or(0.0).min(-s.taus.first().copied().unwrap_or(0.0));
    let reach = if reach > 0.0 { reach } else { s.taus.last().copied().unwrap_or(0.0) };
    let n = n.max(2);
    let radii: Vec<f64> = (0..n).map(|k| 0.5 * reach * k as f64 / (n - 1) as f64).collect();
    let res = radon::abel_invert_report(&s, &radii).stage("invert-radon")?;
    let mut meta = match scenario {
        Some(p) => Scenario::load(p).stage("scenario")?.provenance(None).meta(),
        None => vec![("scenario_hash".into(), "none".into())],
    };
    meta.push(("source".into(), input.display().to_string()));
    meta.push(("asymmetry".into(), io::format_f64(res.asymmetry)));
    res.profile.write_csv(out.join("profile.csv"), &meta).stage("output")
}

fn read_stations(sc: &Scenario, input: &Path) -> CliResult<Vec<Sinogram>> {
    (0..sc.stations.offsets.len())
        .map(|j| Sinogram::read_csv(input.join("stations").join(format!("station_{j}.csv"))).stage("recover"))
        .collect()
}

#[derive(Serialize)]
struct RecoveredFile<'a> {
    params: &'a RecoveredParams,
    centers: &'a [f64],
    window_masses: &'a [f64],
    masses: &'a [f64],
    tail_iterations: usize,
}

fn recover(sc: &Scenario, input: &Path, out: &Path) -> CliResult<pipeline::PipelineRecovery> {
    let sinos = read_stations(sc, input)?;
    let r = pipeline::recover_from_sinograms(&sinos, &sc.stations.offsets, sc.recovery).stage("recover")?;
    let prov = sc.provenance(sc.seeds.noise);
    write_json(
        &out.join("recovered.json"),
        &prov,
        RecoveredFile {
            params: &r.params,
            centers: &r.centers,
            window_masses: &r.window_masses,
            masses: &r.masses,
            tail_iterations: r.tail_iterations,
        },
    )?;
    Ok(r)
}

fn validate(c: &Common) -> CliResult<()> {
    let sc = load(c)?;
    let spec = sc.validation.clone().ok_or_else(|| StageError {
        stage: "scenario",
        err: Error::Schema("`validation` section is required for validate".into()),
    })?;
    let seed = sc.seeds.mc.expect("checked by scenario validation");
    let cfg = CompareConfig { particles: spec.particles, dz: spec.dz, z: spec.z, centroids: spec.centroids, seed, ..Default::default() };
    let rows = validation::compare_models(&sc.medium, &spec.eps, &cfg).stage("validate")?;
    let prov = sc.provenance(Some(seed));
    validation::write_comparison_csv(c.out.join("comparison.csv"), &rows, &prov.meta()).stage("output")
}

#[derive(Serialize)]
struct Truth {
    lambda: f64,
    s: f64,
    #[serde(rename = "epsD")]
    eps_d: f64,
    #[serde(rename = "C0")]
    c0: f64,
    z0: f64,
}

fn run(c: &Common) -> CliResult<()> {
    let sc = load(c)?;
    if !matches!(sc.source, forward_model::SourceProfile::Point) {
        return Err(StageError {
            stage: "scenario",
            err: Error::Unsupported("`run` handles point sources only".into()),
        });
    }
    let prov = sc.provenance(sc.seeds.noise);
    // Images first; stations are placed on the triangulated axis.
    let beam = sc.beam();
    let dir = c.out.join("cameras");
    fs::create_dir_all(&dir).stage("output")?;
    for (k, cam) in sc.cameras.iter().enumerate() {
        let (pixels, mut values) = forward_model::camera_image(cam, &beam).stage("synthesize")?;
        if let Some((std, seed)) = noise_setting(&sc) {
            let mut rng = camera_rng(seed, k);
            values.iter_mut().for_each(|v| *v = forward_model::apply_noise(*v, std, &mut rng));
        }
        write_json(&dir.join(format!("camera_{k}.json")), &prov, cam)?;
        write_image(&dir.join(format!("camera_{k}.csv")), &prov, &pixels, &values)?;
    }
    let axis = triangulate(&sc, &c.out, &c.out)?;
    let (cams, sinos) = pipeline::synthesize_stations(&sc, &axis).stage("sinogram")?;
    let sdir = c.out.join("stations");
    fs::create_dir_all(&sdir).stage("output")?;
    for (j, (cam, s)) in cams.iter().zip(&sinos).enumerate() {
        let mut meta = prov.meta();
        meta.push(("offset".into(), io::format_f64(sc.stations.offsets[j])));
        s.write_csv(sdir.join(format!("station_{j}.csv")), &meta).stage("output")?;
        write_json(&sdir.join(format!("station_{j}.json")), &prov, cam)?;
        let g = radon::abel_invert(s, &profile_radii(s)).stage("abel")?;
        g.write_csv(sdir.join(format!("profile_{j}.csv")), &meta).stage("output")?;
    }
    let r = recover(&sc, &c.out, &c.out)?;
    let m = &sc.medium;
    let truth = Truth { lambda: m.lambda, s: m.s, eps_d: m.eps_d(), c0: m.c0(), z0: sc.true_z0() };
    let p = &r.params;
    let rel = |a: f64, b: f64| if b != 0.0 { (a - b) / b } else { a - b };
    let deltas = serde_json::json!({
        "lambda": rel(p.lambda, truth.lambda),
        "s": rel(p.s, truth.s),
        "epsD": rel(p.eps_d, truth.eps_d),
        "C0": rel(p.c0, truth.c0),
        "z0": rel(p.z0, truth.z0),
        "axis_angle": offaxis::geometry::line_angle(axis.direction, sc.axis.direction),
        "axis_offset": offaxis::geometry::point_line_distance(axis.point, &sc.axis),
    });
    write_json(
        &c.out.join("summary.json"),
        &prov,
        serde_json::json!({
            "axis": axis,
            "recovered": p,
            "truth": truth,
            "relative_deltas": deltas,
            "stages": ["synthesize", "triangulate", "sinogram", "abel_invert", "recover"],
        }),
    )
}

/// Radii from 0 to a quarter of the window at the sinogram pitch.
fn profile_radii(s: &Sinogram) -> Vec<f64> {
    let h = s.taus[1] - s.taus[0];
    let reach = 0.25 * (s.taus.last().unwrap() - s.taus[0]);
    let n = ((reach / h) as usize).clamp(2, 4096);
    (0..n).map(|k| reach * k as f64 / (n - 1) as f64).collect()
}
