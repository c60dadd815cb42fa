//! Command-line driver.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use clap::{Parser, Subcommand, ValueEnum};
use scenelang_core::evaluator::{compile, ScenarioModel};
use scenelang_core::modules::Loader;
use scenelang_core::pruning::PruneSet;
use scenelang_core::sampler::{Report, Sampler, SamplerConfig};
use scenelang_core::world::{bundled_names, World};
use scenelang_core::{Error, ResolveError, Span};

use crate::document::{scene_document, to_canonical_string, Provenance};
use crate::svg;

pub const EXIT_OK: i32 = 0;
pub const EXIT_IO: i32 = 1;
pub const EXIT_PROGRAM: i32 = 2;
pub const EXIT_EXHAUSTED: i32 = 3;
pub const EXIT_WORLD: i32 = 4;

#[derive(Parser, Debug)]
#[command(name = "scenelang", version, about = "Compile and sample scenario programs")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Subcommand, Debug)]
pub enum Command {
    /// Sample scenes and write them to a directory.
    Generate {
        scenario: PathBuf,
        /// Bundled world name or path to a .world.json file.
        #[arg(long, default_value = "tworoads")]
        world: String,
        #[arg(short = 'n', long = "count", default_value_t = 1)]
        count: u64,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value = "out")]
        out: PathBuf,
        #[arg(long, value_enum, default_value_t = Format::Json)]
        format: Format,
        /// Iteration budget per scene.
        #[arg(long, default_value_t = 10_000)]
        max_rejections: usize,
        /// all, none, or a comma list of containment, heading, width.
        #[arg(long, default_value = "all")]
        prune: PruneSet,
        /// Print rejection and pruning statistics to stderr.
        #[arg(long)]
        report: bool,
        #[arg(long, default_value_t = 1)]
        workers: usize,
        /// Extra directories searched by `import`.
        #[arg(short = 'I', long = "path")]
        path: Vec<PathBuf>,
    },
    /// Parse, resolve and construct a scenario without sampling.
    Check {
        scenario: PathBuf,
        #[arg(long, default_value = "tworoads")]
        world: String,
        #[arg(short = 'I', long = "path")]
        path: Vec<PathBuf>,
    },
    /// World file utilities.
    Worlds {
        #[command(subcommand)]
        action: WorldsAction,
    },
}

#[derive(Subcommand, Debug)]
pub enum WorldsAction {
    /// Load and validate a world.
    Validate { world: String },
    /// Names of the bundled worlds.
    List,
}

#[derive(ValueEnum, Clone, Copy, Debug, PartialEq, Eq)]
pub enum Format {
    Json,
    Svg,
    Both,
}

pub fn exit_code(e: &Error) -> i32 {
    match e {
        Error::Parse(_) | Error::Resolve(_) | Error::Construct { .. } | Error::Sample { .. } => EXIT_PROGRAM,
        Error::Exhausted { .. } => EXIT_EXHAUSTED,
        Error::World(_) => EXIT_WORLD,
        Error::Io(_) => EXIT_IO,
    }
}

fn span_of(e: &Error) -> Option<Span> {
    match e {
        Error::Parse(p) => Some(p.span),
        Error::Resolve(ResolveError::SpecifiedTwice { span, .. })
        | Error::Resolve(ResolveError::MissingProperty { span, .. })
        | Error::Resolve(ResolveError::Cyclic { span }) => Some(*span),
        Error::Construct { span, .. } => Some(*span),
        Error::Sample { span, .. } => *span,
        _ => None,
    }
}

/// `file:line:col: error: ...` followed by the offending line and a caret.
pub fn diagnostic(e: &Error, file: Option<&Path>, src: Option<&str>) -> String {
    let mut out = String::new();
    let name = file.map(|f| f.display().to_string()).unwrap_or_else(|| "<input>".into());
    match (span_of(e), src) {
        (Some(sp), Some(src)) if sp.line > 0 => {
            let _ = writeln!(out, "{name}:{}:{}: error: {e}", sp.line, sp.col);
            if let Some(line) = src.lines().nth(sp.line as usize - 1) {
                let _ = writeln!(out, "    {line}");
                let _ = writeln!(out, "    {}^", " ".repeat(sp.col.saturating_sub(1) as usize));
            }
        }
        _ => {
            let _ = writeln!(out, "{name}: error: {e}");
        }
    }
    if let Error::Exhausted { histogram, .. } = e {
        out.push_str(&histogram_text(histogram));
    }
    out
}

fn histogram_text(h: &[(String, usize)]) -> String {
    let mut s = String::new();
    for (label, n) in h {
        let _ = writeln!(s, "    {n:>8}  {label}");
    }
    s
}

pub fn report_text(index: u64, r: &Report) -> String {
    let mut s = format!(
        "scene {index}: accepted after {} iteration(s), {} rejected, {:.3} s\n",
        r.iterations,
        r.rejected(),
        r.elapsed.as_secs_f64()
    );
    s.push_str(&histogram_text(&r.rejections));
    for p in &r.pruning {
        let _ = writeln!(
            s,
            "    pruning {}: {} region(s), {:.1}% of sampled area removed",
            p.pass,
            p.contexts,
            100.0 * p.removed_fraction
        );
    }
    s
}

fn read_source(path: &Path) -> Result<String, Error> {
    std::fs::read_to_string(path).map_err(|e| Error::Io(format!("cannot read {}: {e}", path.display())))
}

/// Loads the world and compiles the scenario against it.
pub fn load(scenario: &Path, world: &str, path: &[PathBuf]) -> Result<(String, ScenarioModel), (Error, Option<String>)> {
    let world = Arc::new(World::load(world).map_err(|e| (e, None))?);
    let src = read_source(scenario).map_err(|e| (e, None))?;
    let mut dirs = path.to_vec();
    if let Some(parent) = scenario.parent() {
        dirs.push(parent.to_path_buf());
    }
    let loader = Loader::new(dirs);
    match compile(&src, world, &loader) {
        Ok(m) => Ok((src, m)),
        Err(e) => Err((e, Some(src))),
    }
}

/// Runs the CLI, writing diagnostics to `err`. Returns the exit code.
pub fn run(cli: Cli, out: &mut dyn std::io::Write, err: &mut dyn std::io::Write) -> i32 {
    let fail = |err: &mut dyn std::io::Write, e: &Error, file: Option<&Path>, src: Option<&str>| {
        let _ = err.write_all(diagnostic(e, file, src).as_bytes());
        exit_code(e)
    };
    match cli.command {
        Command::Worlds { action: WorldsAction::List } => {
            for n in bundled_names() {
                let _ = writeln!(out, "{n}");
            }
            EXIT_OK
        }
        Command::Worlds { action: WorldsAction::Validate { world } } => match World::load(&world) {
            Ok(w) => {
                let _ = writeln!(
                    out,
                    "{}: ok, workspace area {:.2}, {} region(s), {} field(s), {} table(s)",
                    w.name,
                    w.workspace.area(),
                    w.regions.len(),
                    w.fields.len(),
                    w.tables.len()
                );
                EXIT_OK
            }
            Err(e) => fail(err, &e, Some(Path::new(&world)), None),
        },
        Command::Check { scenario, world, path } => match load(&scenario, &world, &path) {
            Ok((_, m)) => {
                let _ = writeln!(
                    out,
                    "{}: ok, {} object(s), {} requirement(s), {} parameter(s)",
                    scenario.display(),
                    m.objects.len(),
                    m.requirements.len(),
                    m.params.len()
                );
                EXIT_OK
            }
            Err((e, src)) => fail(err, &e, Some(&scenario), src.as_deref()),
        },
        Command::Generate { scenario, world, count, seed, out: dir, format, max_rejections, prune, report, workers, path } => {
            let (src, model) = match load(&scenario, &world, &path) {
                Ok(x) => x,
                Err((e, src)) => return fail(err, &e, Some(&scenario), src.as_deref()),
            };
            let world_name = model.world.name.clone();
            let world_ref = model.world.clone();
            let config = SamplerConfig { max_iterations: max_rejections, prune, workers: workers.max(1), ..Default::default() };
            let sampler = match Sampler::new(model, config) {
                Ok(s) => s,
                Err(e) => return fail(err, &e, Some(&scenario), Some(&src)),
            };
            if let Err(e) = std::fs::create_dir_all(&dir) {
                return fail(err, &Error::Io(format!("cannot create {}: {e}", dir.display())), None, None);
            }
            for index in 0..count {
                let (scene, rep) = match sampler.sample(seed, index) {
                    Ok(x) => x,
                    Err(e) => return fail(err, &e, Some(&scenario), Some(&src)),
                };
                if report {
                    let _ = err.write_all(report_text(index, &rep).as_bytes());
                }
                let stem = dir.join(format!("scene_{index:04}"));
                let mut files = Vec::new();
                if format != Format::Svg {
                    let prov = Provenance { world: &world_name, seed, index, iterations: rep.iterations };
                    files.push((stem.with_extension("json"), to_canonical_string(&scene_document(&scene, &prov))));
                }
                if format != Format::Json {
                    files.push((stem.with_extension("svg"), svg::render(&scene, &world_ref)));
                }
                for (f, text) in files {
                    if let Err(e) = std::fs::write(&f, text) {
                        return fail(err, &Error::Io(format!("cannot write {}: {e}", f.display())), None, None);
                    }
                }
            }
            let _ = writeln!(out, "wrote {count} scene(s) to {}", dir.display());
            EXIT_OK
        }
    }
}

/// Parses `argv` (program name first) and runs it.
pub fn main_with_args<I, T>(args: I, out: &mut dyn std::io::Write, err: &mut dyn std::io::Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    match Cli::try_parse_from(args) {
        Ok(cli) => run(cli, out, err),
        Err(e) => {
            let _ = write!(err, "{}", e.render());
            if e.use_stderr() {
                EXIT_PROGRAM
            } else {
                let _ = write!(out, "{}", e.render());
                EXIT_OK
            }
        }
    }
}
