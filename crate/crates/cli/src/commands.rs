use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use unmix_core::bench::loss_grid;
use unmix_core::io::{self, fmt_real, KeyValues};
use unmix_core::metrics::evaluate;
use unmix_core::solver::{solve, Loss, SolverConfig};
use unmix_core::synth::{generate, OutlierKind, SceneSpec};
use unmix_core::{Error, Matrix};

use crate::args::{BenchArgs, Command, EvalArgs, SweepArgs, SynthArgs};
use crate::manifest::{self, config_from, Manifest};
use crate::{usage, Failure};

type CmdResult = Result<(), Failure>;

pub fn dispatch(cmd: Command) -> CmdResult {
    match cmd {
        Command::Synth(a) => synth(&scene_from(&a), &a.out),
        Command::Unmix(a) => unmix(&a.input, &a.solver.to_config(), &a.out),
        Command::Eval(a) => eval(&a),
        Command::Sweep(a) => {
            let cfg = a.solver.to_config();
            sweep(&a, &cfg)
        }
        Command::Bench(a) => bench(&a),
        Command::Replay(a) => replay(&a.manifest, a.out.as_deref()),
    }
}

fn mkdir(dir: &Path) -> Result<(), Error> {
    fs::create_dir_all(dir).map_err(|source| Error::Io {
        path: dir.to_path_buf(),
        source,
    })
}

fn check_config(cfg: &SolverConfig) -> CmdResult {
    cfg.validate().map_err(|e| usage(e.to_string()))
}

fn scene_from(a: &SynthArgs) -> SceneSpec {
    let mut spec = SceneSpec::new(a.width, a.height, a.channels, a.endmembers);
    spec.noise_sigma = a.noise_sigma;
    spec.outlier_fraction = a.outlier_fraction;
    spec.outlier_kind = a.outlier_kind;
    spec.blur_radius = a.blur_radius;
    spec.seed = a.seed;
    spec
}

fn join<T: ToString>(v: &[T]) -> String {
    v.iter().map(T::to_string).collect::<Vec<_>>().join(" ")
}

fn synth(spec: &SceneSpec, out: &Path) -> CmdResult {
    spec.validate().map_err(|e| usage(e.to_string()))?;
    let (cube, truth) = generate(spec)?;
    mkdir(out)?;
    let files = [
        out.join("cube.hsc"),
        out.join("M.csv"),
        out.join("A.csv"),
        out.join("h.csv"),
    ];
    io::write_cube(&cube, &files[0])?;
    io::write_matrix_csv(&truth.m_true, &files[1])?;
    io::write_matrix_csv(&truth.a_true, &files[2])?;
    io::write_guidance_csv(&truth.h_true, &files[3])?;

    let mut m = Manifest::new("synth");
    m.set("scene.width", spec.width)
        .set("scene.height", spec.height)
        .set("scene.channels", spec.channels)
        .set("scene.endmembers", spec.endmembers)
        .set("scene.noise_sigma", spec.noise_sigma)
        .set("scene.outlier_fraction", spec.outlier_fraction)
        .set("scene.outlier_kind", spec.outlier_kind)
        .set("scene.blur_radius", spec.blur_radius)
        .set("scene.seed", spec.seed)
        .set("outlier_count", truth.outlier_channels.len())
        .set("outlier_channels", join(&truth.outlier_channels))
        .path("out", out);
    for f in &files {
        m.checksum(f)?;
    }
    m.write(&out.join(manifest::FILE_NAME))?;
    Ok(())
}

fn unmix(input: &Path, cfg: &SolverConfig, out: &Path) -> CmdResult {
    check_config(cfg)?;
    let cube = io::read_cube(input)?;
    let result = solve(&cube, cfg)?;
    mkdir(out)?;
    let (w, h) = (cube.width(), cube.height());
    let a = result.abundances_sum_to_one();
    let files = [
        out.join("M.csv"),
        out.join("A.csv"),
        out.join("h.csv"),
        out.join("trace.csv"),
        out.join("abundance.ppm"),
        out.join("guidance.ppm"),
    ];
    io::write_matrix_csv(&result.m, &files[0])?;
    io::write_matrix_csv(&a, &files[1])?;
    io::write_guidance_csv(&result.h, &files[2])?;
    io::write_trace_csv(&result.trace, &files[3])?;
    io::write_abundance_ppm(&a, w, h, &files[4])?;
    io::write_guidance_ppm(&result.h, w, h, &files[5])?;

    let mut m = Manifest::new("unmix");
    m.path("input", input).path("out", out).config(cfg);
    m.set("iterations", result.trace.iterations());
    if let Some(last) = result.trace.last() {
        m.set("final_objective", fmt_real(last.objective));
    }
    m.checksum(input)?;
    for f in &files {
        m.checksum(f)?;
    }
    m.write(&out.join(manifest::FILE_NAME))?;
    Ok(())
}

fn read_pair(dir: &Path) -> Result<(Matrix, Matrix), Error> {
    Ok((
        io::read_matrix_csv(&dir.join("M.csv"))?,
        io::read_matrix_csv(&dir.join("A.csv"))?,
    ))
}

fn eval(a: &EvalArgs) -> CmdResult {
    let (m_true, a_true) = read_pair(&a.truth)?;
    let (m_est, a_est) = read_pair(&a.est)?;
    let report = evaluate((&m_true, &a_true), (&m_est, &a_est))?;
    io::write_report(&report, &a.out)?;

    let mut m = Manifest::new("eval");
    m.path("truth", &a.truth)
        .path("est", &a.est)
        .path("out", &a.out);
    if let Some(img) = &a.error_ppm {
        let cube = io::read_cube(&a.truth.join("cube.hsc"))?;
        io::write_error_ppm(&a_true, &a_est, cube.width(), cube.height(), img)?;
        m.path("error_ppm", img);
        m.checksum(img)?;
    }
    m.checksum(&a.out)?;
    m.write(&manifest::beside(&a.out))?;
    Ok(())
}

/// `steps` points from `lo` to `hi`, evenly spaced in log scale.
pub fn geometric_grid(lo: f64, hi: f64, steps: usize) -> Result<Vec<f64>, Failure> {
    if !(lo > 0.0 && hi.is_finite()) {
        return Err(usage(format!(
            "lambda range must be positive and finite, got [{lo}, {hi}]"
        )));
    }
    if lo >= hi {
        return Err(usage(format!(
            "lambda-min ({lo}) must be below lambda-max ({hi})"
        )));
    }
    if steps == 0 {
        return Err(usage("steps must be >= 1"));
    }
    if steps == 1 {
        return Ok(vec![lo]);
    }
    let ratio = (hi / lo).ln();
    Ok((0..steps)
        .map(|i| match i {
            0 => lo,
            i if i == steps - 1 => hi,
            i => lo * (ratio * i as f64 / (steps - 1) as f64).exp(),
        })
        .collect())
}

struct SweepSpec<'a> {
    input: &'a Path,
    truth: &'a Path,
    lambda_min: f64,
    lambda_max: f64,
    steps: usize,
    out: &'a Path,
}

fn sweep(a: &SweepArgs, cfg: &SolverConfig) -> CmdResult {
    run_sweep(
        &SweepSpec {
            input: &a.input,
            truth: &a.truth,
            lambda_min: a.lambda_min,
            lambda_max: a.lambda_max,
            steps: a.steps,
            out: &a.out,
        },
        cfg,
    )
}

fn run_sweep(s: &SweepSpec<'_>, cfg: &SolverConfig) -> CmdResult {
    let grid = geometric_grid(s.lambda_min, s.lambda_max, s.steps)?;
    check_config(cfg)?;
    let cube = io::read_cube(s.input)?;
    let (m_true, a_true) = read_pair(s.truth)?;
    // each point is independent and seeded identically, so order of
    // completion cannot affect the rows
    let rows = grid
        .par_iter()
        .map(|&lambda| {
            let mut c = cfg.clone();
            c.lambda = lambda;
            let r = solve(&cube, &c)?;
            let rep = evaluate((&m_true, &a_true), (&r.m, &r.abundances_sum_to_one()))?;
            Ok((lambda, rep.mean_sad, rep.mean_rmse))
        })
        .collect::<Result<Vec<_>, Error>>()?;
    let mut csv = String::from("lambda,mean_sad,mean_rmse\n");
    for (l, sad, rmse) in rows {
        let _ = writeln!(csv, "{},{},{}", fmt_real(l), fmt_real(sad), fmt_real(rmse));
    }
    io::write_text(s.out, &csv)?;

    let mut m = Manifest::new("sweep");
    m.path("input", s.input)
        .path("truth", s.truth)
        .path("out", s.out)
        .set("lambda_min", s.lambda_min)
        .set("lambda_max", s.lambda_max)
        .set("steps", s.steps)
        .config(cfg);
    m.checksum(s.input)?.checksum(s.out)?;
    m.write(&manifest::beside(s.out))?;
    Ok(())
}

fn bench(a: &BenchArgs) -> CmdResult {
    if a.sides.is_empty() || a.sides.contains(&0) || a.iterations < 2 || a.repeats == 0 {
        return Err(usage(
            "bench needs nonzero sides, >= 2 iterations and >= 1 repeat",
        ));
    }
    let rows = loss_grid(
        &a.sides,
        a.channels,
        a.endmembers,
        a.iterations,
        a.repeats,
        a.seed,
    )
    .map_err(|e| match e {
        Error::InvalidInput(msg) => usage(msg),
        other => other.into(),
    })?;
    let mut csv = String::from("pixels,channels,endmembers,loss,secs_per_iter,ratio_to_fro\n");
    for r in &rows {
        let fro = rows
            .iter()
            .find(|b| b.pixels == r.pixels && b.loss == Loss::Frobenius)
            .map_or(f64::NAN, |b| b.secs_per_iter);
        let _ = writeln!(
            csv,
            "{},{},{},{},{},{}",
            r.pixels,
            r.channels,
            r.endmembers,
            r.loss,
            fmt_real(r.secs_per_iter),
            fmt_real(r.secs_per_iter / fro)
        );
    }
    io::write_text(&a.out, &csv)?;

    let mut m = Manifest::new("bench");
    m.set(
        "sides",
        a.sides
            .iter()
            .map(usize::to_string)
            .collect::<Vec<_>>()
            .join(","),
    )
    .set("channels", a.channels)
    .set("endmembers", a.endmembers)
    .set("iterations", a.iterations)
    .set("repeats", a.repeats)
    .set("seed", a.seed)
    .path("out", &a.out);
    m.write(&manifest::beside(&a.out))?;
    Ok(())
}

fn replay(path: &Path, out: Option<&Path>) -> CmdResult {
    let kv = KeyValues::read(path)?;
    let get = |key: &str| kv.require(path, key).map_err(Failure::from);
    let num = |key: &str| -> Result<f64, Failure> {
        get(key)?
            .parse()
            .map_err(|_| usage(format!("{}: bad value for {key}", path.display())))
    };
    let count = |key: &str| -> Result<usize, Failure> {
        get(key)?
            .parse()
            .map_err(|_| usage(format!("{}: bad value for {key}", path.display())))
    };
    let out_path = |key: &str| -> Result<PathBuf, Failure> {
        match out {
            Some(o) => Ok(o.to_path_buf()),
            None => Ok(PathBuf::from(get(key)?)),
        }
    };
    match get("subcommand")? {
        "synth" => {
            let mut spec = SceneSpec::new(
                count("scene.width")?,
                count("scene.height")?,
                count("scene.channels")?,
                count("scene.endmembers")?,
            );
            spec.noise_sigma = num("scene.noise_sigma")?;
            spec.outlier_fraction = num("scene.outlier_fraction")?;
            spec.outlier_kind = get("scene.outlier_kind")?.parse::<OutlierKind>()?;
            spec.blur_radius = count("scene.blur_radius")?;
            spec.seed = get("scene.seed")?
                .parse()
                .map_err(|_| usage("bad value for scene.seed"))?;
            synth(&spec, &out_path("out")?)
        }
        "unmix" => unmix(
            Path::new(get("input")?),
            &config_from(&kv)?,
            &out_path("out")?,
        ),
        "eval" => eval(&EvalArgs {
            truth: get("truth")?.into(),
            est: get("est")?.into(),
            out: out_path("out")?,
            error_ppm: kv.get("error_ppm").map(PathBuf::from),
        }),
        "sweep" => {
            let out = out_path("out")?;
            run_sweep(
                &SweepSpec {
                    input: Path::new(get("input")?),
                    truth: Path::new(get("truth")?),
                    lambda_min: num("lambda_min")?,
                    lambda_max: num("lambda_max")?,
                    steps: count("steps")?,
                    out: &out,
                },
                &config_from(&kv)?,
            )
        }
        "bench" => bench(&BenchArgs {
            sides: get("sides")?
                .split(',')
                .map(|s| s.parse().map_err(|_| usage("bad value for sides")))
                .collect::<Result<_, _>>()?,
            channels: count("channels")?,
            endmembers: count("endmembers")?,
            iterations: count("iterations")?,
            repeats: count("repeats")?,
            seed: get("seed")?
                .parse()
                .map_err(|_| usage("bad value for seed"))?,
            out: out_path("out")?,
        }),
        other => Err(usage(format!(
            "{}: unknown subcommand {other:?}",
            path.display()
        ))),
    }
}
