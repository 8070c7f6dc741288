//! Command-line front end.

use std::ffi::OsString;
use std::fs::File;
use std::io::{BufReader, Write};
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;
use serde_json::json;

use crate::bifiltration::{parse_bifiltration, BiFiltration};
use crate::distances::{d_phi, matching_distance_sampled, sample_slices};
use crate::error::{Error, Result};
use crate::feature::{BaseKernel, EssentialPolicy, FeatureParams};
use crate::kernel::{gram_matrix, kernel_approx_cached, ApproxInterval, DiagramCache, EngineOptions};
use crate::persistence::compute_diagram;
use crate::point::Rect;
use crate::slicing::{restrict, SliceLine};

pub const EXIT_OK: i32 = 0;
pub const EXIT_INPUT: i32 = 1;
pub const EXIT_CAP: i32 = 2;

#[derive(Parser, Debug)]
#[command(name = "mpk", version, about = "Certified kernels for two-parameter persistence")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Parse and validate a bi-filtration file.
    Validate { file: PathBuf },
    /// Persistence diagram of the slice `(a1, sqrt(1 - a1^2)) * t + (b1, -b1)`.
    Diagram {
        file: PathBuf,
        #[arg(long, num_args = 2, value_names = ["A1", "B1"], allow_negative_numbers = true)]
        line: Vec<f64>,
        #[arg(long, default_value_t = 0)]
        degree: usize,
    },
    /// Mono-filtration obtained by restricting to a slice.
    Slice {
        file: PathBuf,
        #[arg(long, num_args = 2, value_names = ["A1", "B1"], allow_negative_numbers = true)]
        line: Vec<f64>,
    },
    /// Certified kernel value of two bi-filtrations.
    Kernel {
        x: PathBuf,
        y: PathBuf,
        #[command(flatten)]
        opts: EngineArgs,
    },
    /// Gram matrix of several bi-filtrations.
    Gram {
        files: Vec<PathBuf>,
        /// File listing one input path per line.
        #[arg(long)]
        manifest: Option<PathBuf>,
        /// CSV destination; the JSON sidecar goes to `<out>.json`.
        #[arg(long)]
        out: Option<PathBuf>,
        #[command(flatten)]
        opts: EngineArgs,
    },
    /// Kernel-induced distance.
    Distance {
        x: PathBuf,
        y: PathBuf,
        #[command(flatten)]
        opts: EngineArgs,
    },
    /// Sampled lower bound on the matching distance.
    MatchDistance {
        x: PathBuf,
        y: PathBuf,
        #[arg(long, default_value_t = 16)]
        samples: usize,
        #[command(flatten)]
        opts: EngineArgs,
    },
}

#[derive(Copy, Clone, Debug, PartialEq, Eq, ValueEnum)]
enum KernelArg {
    Gaussian,
    Triangle,
}

#[derive(Args, Debug, Clone)]
struct EngineArgs {
    #[arg(long, default_value_t = 0.05)]
    epsilon: f64,
    #[arg(long, default_value_t = 0.1)]
    t: f64,
    #[arg(long, num_args = 4, value_names = ["X0", "Y0", "X1", "Y1"], allow_negative_numbers = true)]
    rect: Option<Vec<f64>>,
    /// Homology degree; a comma-separated list sums the per-degree kernels.
    #[arg(long, value_delimiter = ',', default_value = "0")]
    degree: Vec<usize>,
    #[arg(long, value_enum, default_value_t = KernelArg::Gaussian)]
    kernel: KernelArg,
    /// `drop` or `cap=V`.
    #[arg(long, default_value = "drop", value_parser = parse_essential)]
    essential: EssentialPolicy,
    /// Worker threads (falls back to MPK_THREADS, then to all cores).
    #[arg(long)]
    threads: Option<usize>,
    #[arg(long, default_value_t = 12)]
    max_depth: u32,
    /// Print timing and cache statistics to stderr.
    #[arg(long)]
    verbose: bool,
}

fn parse_essential(s: &str) -> std::result::Result<EssentialPolicy, String> {
    if s == "drop" {
        return Ok(EssentialPolicy::Drop);
    }
    s.strip_prefix("cap=")
        .and_then(|v| v.parse::<f64>().ok())
        .map(EssentialPolicy::Cap)
        .ok_or_else(|| format!("expected `drop` or `cap=V`, got `{s}`"))
}

impl EngineArgs {
    fn params(&self, degree: usize) -> Result<FeatureParams> {
        let rect = match &self.rect {
            Some(r) => Rect::new(r[0], r[1], r[2], r[3]),
            None => Rect::UNIT,
        };
        let p = FeatureParams {
            t: self.t,
            rect,
            base_kernel: match self.kernel {
                KernelArg::Gaussian => BaseKernel::Gaussian,
                KernelArg::Triangle => BaseKernel::Triangle,
            },
            degree,
            essential: self.essential,
        };
        p.validate()?;
        Ok(p)
    }

    fn single_degree(&self) -> Result<FeatureParams> {
        match self.degree.as_slice() {
            [d] => self.params(*d),
            _ => Err(Error::InvalidParameter(
                "this command takes a single homology degree".into(),
            )),
        }
    }

    fn engine(&self) -> EngineOptions {
        let threads = self.threads.or_else(|| {
            std::env::var("MPK_THREADS")
                .ok()
                .and_then(|v| v.trim().parse().ok())
        });
        EngineOptions {
            threads: threads.unwrap_or(0),
            max_depth: self.max_depth,
            ..EngineOptions::default()
        }
    }
}

/// Twelve significant digits, `inf` for infinity.
pub fn fmt_num(v: f64) -> String {
    if v.is_infinite() {
        return if v > 0.0 { "inf".into() } else { "-inf".into() };
    }
    if v == 0.0 {
        return "0".into();
    }
    let mag = v.abs().log10().floor() as i32;
    if (-5..12).contains(&mag) {
        let decimals = (11 - mag).max(0) as usize;
        let s = format!("{v:.decimals$}");
        let s = if s.contains('.') {
            s.trim_end_matches('0').trim_end_matches('.').to_string()
        } else {
            s
        };
        if s == "-0" {
            "0".into()
        } else {
            s
        }
    } else {
        format!("{v:.11e}")
    }
}

fn load(path: &Path) -> Result<BiFiltration> {
    let f = File::open(path).map_err(|e| {
        Error::Io(std::io::Error::new(e.kind(), format!("{}: {e}", path.display())))
    })?;
    parse_bifiltration(BufReader::new(f))
}

fn line_arg(v: &[f64]) -> Result<SliceLine> {
    SliceLine::from_parts(v[0], v[1])
}

#[derive(Serialize)]
struct IntervalOut {
    lo: String,
    hi: String,
}

fn iv_json(iv: &ApproxInterval) -> IntervalOut {
    IntervalOut {
        lo: fmt_num(iv.lo),
        hi: fmt_num(iv.hi),
    }
}

/// Runs the command line `argv` (including the program name), writing to the
/// given streams, and returns the process exit code.
pub fn run<I, T>(argv: I, out: &mut dyn Write, err: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_INPUT } else { EXIT_OK };
            let text = e.render().to_string();
            let _ = if e.use_stderr() {
                err.write_all(text.as_bytes())
            } else {
                out.write_all(text.as_bytes())
            };
            return code;
        }
    };
    match dispatch(cli.command, out, err) {
        Ok(()) => EXIT_OK,
        Err(e) => {
            let _ = writeln!(err, "error: {e}");
            match e {
                Error::ResolutionCap { .. } => EXIT_CAP,
                _ => EXIT_INPUT,
            }
        }
    }
}

fn dispatch(cmd: Command, out: &mut dyn Write, err: &mut dyn Write) -> Result<()> {
    match cmd {
        Command::Validate { file } => {
            let x = load(&file)?;
            writeln!(
                out,
                "ok: {} simplices, dimension {}, {} critical points",
                x.num_simplices(),
                x.max_dim().map_or("-".to_string(), |d| d.to_string()),
                x.size()
            )?;
        }
        Command::Diagram { file, line, degree } => {
            let x = load(&file)?;
            let d = compute_diagram(&restrict(&x, &line_arg(&line)?), degree);
            let mut s = String::from("degree,birth,death\n");
            d.to_csv(&mut s, fmt_num);
            out.write_all(s.as_bytes())?;
        }
        Command::Slice { file, line } => {
            let x = load(&file)?;
            let m = restrict(&x, &line_arg(&line)?);
            for (simplex, value) in m.entries() {
                write!(out, "{} {}", fmt_num(value), simplex.dim())?;
                for v in simplex.vertices() {
                    write!(out, " {v}")?;
                }
                writeln!(out)?;
            }
        }
        Command::Kernel { x, y, opts } => {
            let (x, y) = (load(&x)?, load(&y)?);
            let engine = opts.engine();
            let cache = DiagramCache::with_capacity(engine.cache_capacity);
            let per = opts.epsilon / opts.degree.len().max(1) as f64;
            let mut total = ApproxInterval::ZERO;
            let mut parts = Vec::new();
            for &k in &opts.degree {
                let params = opts.params(k)?;
                let r = kernel_approx_cached(&x, &y, per, &params, &engine, &cache)?;
                if opts.verbose {
                    writeln!(
                        err,
                        "degree {k}: {:.3}s, cache hit rate {:.3}",
                        r.stats.seconds, r.stats.cache_hit_rate
                    )?;
                }
                total = total.add(&r.interval);
                parts.push(json!({
                    "degree": k,
                    "interval": iv_json(&r.interval),
                    "final_resolution": r.final_resolution,
                    "counts": r.stats.counts,
                    "widths": r.levels.iter().map(|l| fmt_num(l.interval.width())).collect::<Vec<_>>(),
                }));
            }
            writeln!(out, "{}", fmt_num(total.lo))?;
            let diag = json!({
                "interval": iv_json(&total),
                "epsilon": fmt_num(opts.epsilon),
                "degrees": parts,
            });
            writeln!(out, "{diag}")?;
        }
        Command::Gram {
            files,
            manifest,
            out: dest,
            opts,
        } => {
            let mut paths = files;
            if let Some(m) = manifest {
                let text = std::fs::read_to_string(&m)?;
                let dir = m.parent().map(Path::to_path_buf).unwrap_or_default();
                for l in text.lines().map(str::trim).filter(|l| !l.is_empty() && !l.starts_with('#')) {
                    let p = PathBuf::from(l);
                    paths.push(if p.is_absolute() { p } else { dir.join(p) });
                }
            }
            if paths.is_empty() {
                return Err(Error::InvalidParameter("no input files".into()));
            }
            let inputs = paths.iter().map(|p| load(p)).collect::<Result<Vec<_>>>()?;
            let params = opts.single_degree()?;
            let g = gram_matrix(&inputs, opts.epsilon, &params, &opts.engine())?;
            let mut csv = String::new();
            for row in &g.values {
                let cells: Vec<String> = row.iter().map(|&v| fmt_num(v)).collect();
                csv.push_str(&cells.join(","));
                csv.push('\n');
            }
            let sidecar = json!({
                "inputs": paths.iter().map(|p| p.display().to_string()).collect::<Vec<_>>(),
                "epsilon": fmt_num(g.epsilon),
                "intervals": g.intervals.iter()
                    .map(|r| r.iter().map(iv_json).collect::<Vec<_>>())
                    .collect::<Vec<_>>(),
                "final_resolution": g.resolutions,
            });
            match dest {
                Some(path) => {
                    std::fs::write(&path, csv)?;
                    let mut side = path.clone().into_os_string();
                    side.push(".json");
                    std::fs::write(PathBuf::from(side), format!("{sidecar:#}\n"))?;
                }
                None => out.write_all(csv.as_bytes())?,
            }
        }
        Command::Distance { x, y, opts } => {
            let (x, y) = (load(&x)?, load(&y)?);
            let params = opts.single_degree()?;
            let r = d_phi(&x, &y, opts.epsilon, &params, &opts.engine())?;
            writeln!(out, "{}", fmt_num(r.value))?;
            let diag = json!({
                "interval": iv_json(&r.interval),
                "epsilon": fmt_num(opts.epsilon),
                "kernels": {
                    "xx": iv_json(&r.kernels[0].interval),
                    "xy": iv_json(&r.kernels[1].interval),
                    "yy": iv_json(&r.kernels[2].interval),
                },
            });
            writeln!(out, "{diag}")?;
        }
        Command::MatchDistance {
            x,
            y,
            samples,
            opts,
        } => {
            let (x, y) = (load(&x)?, load(&y)?);
            let params = opts.single_degree()?;
            let v = matching_distance_sampled(&x, &y, samples, &params)?;
            writeln!(out, "{}", fmt_num(v))?;
            let diag = json!({
                "samples": samples,
                "slices": sample_slices(&params, samples).len(),
                "lower_bound": true,
            });
            writeln!(out, "{diag}")?;
        }
    }
    Ok(())
}
