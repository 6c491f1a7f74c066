use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use msubdiv::analysis::{
    analyze_convergence, attractor_points, blf_support, difference_decay, Budget, OpSequence, PointCloud, Verdict,
};
use msubdiv::format::read_scheme;
use msubdiv::jsr::{jsr_estimate, JsrBudget, NormChoice};
use msubdiv::omega::{
    construct_omega_c, construct_omega_v, difference_space_report, select_omega, OmegaSet, SelectPolicy,
};
use msubdiv::scheme::ExpansionVerdict;
use msubdiv::transition::{
    build_transition_matrices, restrict_to_difference_space, restrict_to_zero_sum, restricted_dump, transition_dump,
    RestrictedFamily,
};
use msubdiv::{Error, ExactScheme, LatticeSet, Point, Rational};

const EXIT_FAIL: u8 = 1;
const EXIT_PARSE: u8 = 2;
const EXIT_NOT_CONVERGENT: u8 = 3;
const EXIT_INCONCLUSIVE: u8 = 4;

#[derive(Parser)]
#[command(
    name = "msubdiv",
    version,
    about = "Convergence analysis of multiple subdivision schemes"
)]
struct Cli {
    /// Worker threads (0 = all cores).
    #[arg(long, global = true, env = "MSUBDIV_THREADS", default_value_t = 0)]
    threads: usize,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Sum rules, digit sets, joint expansion and Assumption N.
    Validate {
        file: PathBuf,
        /// Longest product tried by the joint expansion test.
        #[arg(long, default_value_t = 4)]
        depth: usize,
        #[arg(long)]
        json: bool,
    },
    /// Invariant index set and its difference-space report.
    Omega {
        file: PathBuf,
        #[command(flatten)]
        set: SetArgs,
        /// Write the points as CSV here instead of stdout.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Transition matrices as a JSON dump.
    Transition {
        file: PathBuf,
        #[command(flatten)]
        set: SetArgs,
        /// Dump the restrictions instead of the full matrices.
        #[arg(long, value_enum)]
        restrict: Option<Restriction>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Joint spectral radius bracket of the restricted family.
    Jsr {
        file: PathBuf,
        #[command(flatten)]
        set: SetArgs,
        #[arg(long, value_enum, default_value_t = Restriction::Difference)]
        restrict: Restriction,
        #[command(flatten)]
        jsr: JsrArgs,
        /// Certificate JSON destination.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Full pipeline; exit 0 convergent, 3 not convergent, 4 inconclusive.
    Convergence {
        file: PathBuf,
        #[command(flatten)]
        jsr: JsrArgs,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Truncated attractor along an operator sequence.
    Attractor {
        file: PathBuf,
        #[command(flatten)]
        seq: SeqArgs,
        #[arg(long, default_value_t = 10)]
        depth: usize,
        /// Largest cloud before random subsampling.
        #[arg(long, default_value_t = 1 << 20)]
        budget: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[command(flatten)]
        render: RenderArgs,
    },
    /// Support of a basic limit function.
    Blf {
        file: PathBuf,
        #[command(flatten)]
        seq: SeqArgs,
        #[arg(long, default_value_t = 9)]
        iterations: usize,
        /// Start position in the sequence (1-based).
        #[arg(long, default_value_t = 1)]
        shift: usize,
        /// Append c_n(alpha) as a last CSV column.
        #[arg(long)]
        values: bool,
        #[command(flatten)]
        render: RenderArgs,
    },
    /// Table of n, m_n and m_n^(1/n).
    Decay {
        file: PathBuf,
        #[command(flatten)]
        seq: SeqArgs,
        #[arg(short = 'n', long, default_value_t = 12)]
        n: usize,
        #[arg(long)]
        json: bool,
    },
}

#[derive(Args)]
struct SetArgs {
    /// Which invariant set to use.
    #[arg(long, value_enum, default_value_t = SetKind::Auto)]
    set: SetKind,
    /// Extra seed points, e.g. "(5)" or "(1,2);(0,-1)".
    #[arg(long)]
    seed: Option<String>,
}

#[derive(Clone, Copy, ValueEnum)]
enum SetKind {
    /// Omega_C, enlarged until connected, else the ball.
    Auto,
    /// Plain fixed point from the seed.
    C,
    /// Integer points of the invariant ball.
    Ball,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Restriction {
    Difference,
    ZeroSum,
}

#[derive(Args)]
struct JsrArgs {
    /// Deepest level of the norm bound.
    #[arg(long, default_value_t = 10)]
    max_depth: usize,
    /// Longest word of the lower bound search.
    #[arg(long, default_value_t = 8)]
    max_len: usize,
    /// Norm used by the upper bound: inf, one, two, ellipsoidal.
    #[arg(long, default_value = "ellipsoidal")]
    method: NormChoice,
    /// Polytope vertex cap, 0 disables it.
    #[arg(long, default_value_t = 200)]
    max_vertices: usize,
}

impl JsrArgs {
    fn budget(&self) -> JsrBudget {
        JsrBudget {
            max_len: self.max_len,
            max_depth: self.max_depth,
            norm: self.method,
            max_vertices: self.max_vertices,
            ..JsrBudget::default()
        }
    }
}

#[derive(Args)]
struct SeqArgs {
    /// 1-based operator indices; "1,2,2" repeats, "1,2,2,1|2" is prefix|period.
    #[arg(long, default_value = "1")]
    sequence: OpSequence,
}

#[derive(Args)]
struct RenderArgs {
    /// Point CSV destination (stdout when absent).
    #[arg(long)]
    out: Option<PathBuf>,
    /// PGM destination.
    #[arg(long)]
    pgm: Option<PathBuf>,
    /// Raster size as WxH.
    #[arg(long, default_value = "512x512", value_parser = parse_raster)]
    raster: (usize, usize),
    /// xmin,xmax,ymin,ymax; defaults to the cloud's own box.
    #[arg(long, value_parser = parse_bbox, allow_hyphen_values = true)]
    bbox: Option<[f64; 4]>,
}

fn parse_raster(s: &str) -> Result<(usize, usize), String> {
    let (w, h) = s.split_once(['x', 'X']).ok_or("expected WxH")?;
    let w: usize = w.parse().map_err(|e| format!("{e}"))?;
    let h: usize = h.parse().map_err(|e| format!("{e}"))?;
    if w == 0 || h == 0 {
        return Err("raster size must be positive".into());
    }
    Ok((w, h))
}

fn parse_bbox(s: &str) -> Result<[f64; 4], String> {
    let v: Vec<f64> = s
        .split([',', ' '])
        .filter(|t| !t.is_empty())
        .map(|t| t.parse::<f64>().map_err(|e| format!("{t:?}: {e}")))
        .collect::<Result<_, _>>()?;
    let b: [f64; 4] = v.try_into().map_err(|_| "expected four numbers".to_string())?;
    if !(b[0] < b[1] && b[2] <= b[3]) {
        return Err("expected xmin < xmax and ymin <= ymax".into());
    }
    Ok(b)
}

fn parse_points(text: &str, dim: usize) -> Result<Vec<Point>, String> {
    text.split(';')
        .filter(|t| !t.trim().is_empty())
        .map(|t| {
            let coords: Vec<i64> = t
                .trim()
                .trim_start_matches('(')
                .trim_end_matches(')')
                .split(',')
                .map(|c| c.trim().parse::<i64>().map_err(|e| format!("{c:?}: {e}")))
                .collect::<Result<_, _>>()?;
            if coords.len() != dim {
                return Err(format!("point {t:?} needs {dim} coordinates"));
            }
            Ok(Point::new(coords))
        })
        .collect()
}

/// Error plus exit code.
struct Failure(u8, String);

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        let code = if matches!(e, Error::Parse { .. }) {
            EXIT_PARSE
        } else {
            EXIT_FAIL
        };
        Failure(code, e.to_string())
    }
}

impl From<std::io::Error> for Failure {
    fn from(e: std::io::Error) -> Self {
        Failure(EXIT_FAIL, e.to_string())
    }
}

fn load(path: &Path) -> Result<ExactScheme, Failure> {
    read_scheme(path).map_err(|e| match e {
        Error::Io(io) => Failure(EXIT_PARSE, format!("{}: {io}", path.display())),
        other => Failure(EXIT_PARSE, format!("{}: {other}", path.display())),
    })
}

fn emit(out: Option<&Path>, bytes: &[u8]) -> Result<(), Failure> {
    match out {
        Some(p) => std::fs::write(p, bytes).map_err(|e| Failure(EXIT_FAIL, format!("{}: {e}", p.display()))),
        None => {
            use std::io::Write;
            std::io::stdout().write_all(bytes)?;
            Ok(())
        }
    }
}

fn json_bytes(v: &impl serde::Serialize) -> Vec<u8> {
    let mut s = serde_json::to_string_pretty(v).expect("plain data");
    s.push('\n');
    s.into_bytes()
}

fn pick_set(s: &ExactScheme, args: &SetArgs) -> Result<OmegaSet, Failure> {
    let mut seed = LatticeSet::singleton(Point::zero(s.dim()));
    if let Some(text) = &args.seed {
        let pts = parse_points(text, s.dim()).map_err(|e| Failure(EXIT_PARSE, format!("--seed: {e}")))?;
        seed = seed.union(&LatticeSet::new(s.dim(), pts)?)?;
    }
    Ok(match args.set {
        SetKind::Auto => select_omega(
            s,
            &SelectPolicy {
                seed: Some(seed),
                ..SelectPolicy::default()
            },
        )?,
        SetKind::C => construct_omega_c(s, &seed)?,
        SetKind::Ball => construct_omega_v(s)?,
    })
}

fn restricted(s: &ExactScheme, set: &SetArgs, how: Restriction) -> Result<RestrictedFamily<Rational>, Failure> {
    let omega = pick_set(s, set)?;
    let ts = build_transition_matrices(s, &omega.points)?;
    Ok(match how {
        Restriction::Difference => restrict_to_difference_space(&ts, &difference_space_report(&omega.points))?,
        Restriction::ZeroSum => restrict_to_zero_sum(&ts)?,
    })
}

fn write_cloud(cloud: &PointCloud, r: &RenderArgs, default_bbox: Option<[f64; 4]>) -> Result<(), Failure> {
    if cloud.subsampled {
        eprintln!("note: {} points drawn at random (budget reached)", cloud.len());
    }
    emit(r.out.as_deref(), cloud.to_csv().as_bytes())?;
    if let Some(pgm) = &r.pgm {
        let bbox = r
            .bbox
            .or(default_bbox)
            .or_else(|| cloud.bbox())
            .ok_or_else(|| Failure(EXIT_FAIL, "empty point cloud".into()))?;
        let (w, h) = r.raster;
        emit(Some(pgm), &cloud.to_pgm(w, h, bbox)?)?;
    }
    Ok(())
}

fn run(cli: Cli) -> Result<u8, Failure> {
    match cli.command {
        Command::Validate { file, depth, json } => {
            let s = load(&file)?;
            let v = s.validate(depth);
            if json {
                emit(None, &json_bytes(&v))?;
            } else {
                for r in &v.sum_rules {
                    println!(
                        "sum rules [{}]: {}",
                        r.op_label,
                        if r.satisfied { "ok" } else { "FAIL" }
                    );
                    for (d, res) in &r.residuals {
                        println!("  coset {d}: residual {res}");
                    }
                }
                for (op, ok) in s.ops().iter().zip(&v.digits) {
                    println!("digit set [{}]: {}", op.label, if *ok { "ok" } else { "FAIL" });
                }
                let je = &v.joint_expansion;
                println!("joint expansion: {:?} (depth {:?})", je.verdict, je.depth);
                if let Some(w) = &je.witness {
                    println!("  witness word: {w:?}");
                }
                for n in &v.assumption_n {
                    println!(
                        "assumption N [{}]: {} (||M^-1||_2 = {:.6})",
                        n.op_label,
                        if n.passes { "ok" } else { "fails" },
                        n.inverse_norm
                    );
                }
                for w in s.warnings() {
                    println!("warning: {w}");
                }
            }
            if v.joint_expansion.verdict == ExpansionVerdict::Inconclusive {
                eprintln!("joint expansion not decided at depth {depth}");
            }
            Ok(if v.passed() { 0 } else { EXIT_FAIL })
        }
        Command::Omega { file, set, out } => {
            let s = load(&file)?;
            let omega = pick_set(&s, &set)?;
            let rep = difference_space_report(&omega.points);
            emit(out.as_deref(), omega.points.to_csv().as_bytes())?;
            eprintln!("points: {}", omega.len());
            eprintln!("provenance: {:?}", omega.provenance);
            eprintln!("dimV: {}", rep.dim_v);
            eprintln!("dimVtilde: {}", rep.dim_v_tilde);
            eprintln!("components: {}", rep.components);
            if rep.components > 1 {
                for k in 0..rep.components {
                    let members = rep.component_members(&omega.points, k);
                    if members.len() * 4 < omega.len() {
                        let list: Vec<String> = members.iter().map(ToString::to_string).collect();
                        eprintln!("  component {k}: {}", list.join(" "));
                    }
                }
            }
            Ok(0)
        }
        Command::Transition {
            file,
            set,
            restrict,
            out,
        } => {
            let s = load(&file)?;
            let dump = match restrict {
                None => {
                    let omega = pick_set(&s, &set)?;
                    transition_dump(&build_transition_matrices(&s, &omega.points)?)
                }
                Some(how) => restricted_dump(&restricted(&s, &set, how)?),
            };
            emit(out.as_deref(), &json_bytes(&dump))?;
            Ok(0)
        }
        Command::Jsr {
            file,
            set,
            restrict,
            jsr,
            out,
        } => {
            let s = load(&file)?;
            let r = restricted(&s, &set, restrict)?;
            let est = jsr_estimate(&r.to_family::<f64>()?, &jsr.budget());
            eprintln!("{:.12} <= rho <= {:.12} ({:?})", est.lower, est.upper, est.status);
            emit(out.as_deref(), &json_bytes(&est.certificate()))?;
            Ok(0)
        }
        Command::Convergence { file, jsr, out } => {
            let s = load(&file)?;
            let budget = Budget {
                jsr: jsr.budget(),
                ..Budget::default()
            };
            let report = analyze_convergence(&s, &budget)?;
            emit(out.as_deref(), &json_bytes(&report))?;
            if let Some(e) = &report.jsr {
                eprintln!("{:?}: {:.12} <= rho <= {:.12}", report.verdict, e.lower, e.upper);
            } else {
                eprintln!("{:?}", report.verdict);
            }
            Ok(match report.verdict {
                Verdict::Convergent => 0,
                Verdict::NotConvergent => EXIT_NOT_CONVERGENT,
                Verdict::Inconclusive => EXIT_INCONCLUSIVE,
            })
        }
        Command::Attractor {
            file,
            seq,
            depth,
            budget,
            seed,
            render,
        } => {
            let s = load(&file)?;
            let cloud = attractor_points(&s, &seq.sequence, depth, budget, seed)?;
            write_cloud(&cloud, &render, None)?;
            Ok(0)
        }
        Command::Blf {
            file,
            seq,
            iterations,
            shift,
            values,
            render,
        } => {
            let s = load(&file)?;
            let mut cloud = blf_support(&s, &seq.sequence, iterations, shift)?;
            if !values {
                cloud.values = None;
            }
            write_cloud(&cloud, &render, None)?;
            Ok(0)
        }
        Command::Decay { file, seq, n, json } => {
            let s = load(&file)?;
            let rows = difference_decay(&s, &seq.sequence, n)?;
            if json {
                emit(None, &json_bytes(&rows))?;
            } else {
                println!("n,m_n,root");
                for r in &rows {
                    let root = r.root.map(|x| format!("{x:.12}")).unwrap_or_default();
                    println!("{},{:.12e},{}", r.n, r.m_n, root);
                }
            }
            Ok(0)
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(cli.threads).build_global() {
        eprintln!("warning: thread pool: {e}");
    }
    match run(cli) {
        Ok(code) => ExitCode::from(code),
        Err(Failure(code, msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(code)
        }
    }
}
