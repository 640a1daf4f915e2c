use std::fmt::Write as _;
use std::fs;
use std::io::Read;
use std::path::Path;

use anyhow::{anyhow, bail, Context, Result};
use pap_core::ad::{self, build_arg, real_leaves, Differentiable};
use pap_core::eval::{self, BottomReason, Env, Outcome};
use pap_core::exec::Exec;
use pap_core::gd::{self, GdConfig, GradMode, Objective, RandomGdConfig, Termination, Trajectory};
use pap_core::numcheck::{fd_derivative, fd_gradient, FdConfig};
use pap_core::parser::parse;
use pap_core::prims::registry;
use pap_core::prob::{self, RunResult, Sampler, SimConfig, TestFn, WeightedOutcome};
use pap_core::syntax::{Term, Type};
use pap_core::typecheck::{typecheck, Context as TyContext};
use serde_json::{json, Value as Json};

use crate::output::{
    csv_manifest_line, csv_real, emit, json_text, real_json, value_json, Manifest,
};
use crate::{Cli, Command, Global, Mode, Status, TraceArg};

/// A parsed, well-typed program and its source text.
struct Program {
    source: String,
    term: Term,
    ty: Type,
}

fn load(path: &Path) -> Result<Program> {
    let source = if path == Path::new("-") {
        let mut s = String::new();
        std::io::stdin().read_to_string(&mut s)?;
        s
    } else {
        fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?
    };
    let term = parse(&source).with_context(|| format!("parsing {}", path.display()))?;
    let ty = typecheck(&TyContext::new(), &term)
        .with_context(|| format!("typechecking {}", path.display()))?;
    Ok(Program { source, term, ty })
}

pub fn parse_reals(s: &str) -> Result<Vec<f64>> {
    s.split(',')
        .map(|p| {
            let p = p.trim();
            p.parse::<f64>()
                .map_err(|_| anyhow!("`{p}` is not a number"))
        })
        .collect()
}

fn parse_range(s: &str) -> Result<(f64, f64)> {
    match parse_reals(s)?.as_slice() {
        [lo, hi] if lo < hi => Ok((*lo, *hi)),
        _ => bail!("expected a range LO,HI with LO < HI, got `{s}`"),
    }
}

fn read_trace(arg: &TraceArg) -> Result<Vec<f64>> {
    let text = match (&arg.trace, &arg.trace_file) {
        (Some(inline), _) => inline.clone(),
        (None, Some(path)) => {
            fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?
        }
        (None, None) => bail!("give --trace or --trace-file"),
    };
    let parts: Vec<&str> = text
        .split([',', '\n'])
        .map(str::trim)
        .filter(|p| !p.is_empty())
        .collect();
    parts
        .iter()
        .map(|p| {
            p.parse::<f64>()
                .map_err(|_| anyhow!("`{p}` is not a number"))
        })
        .collect()
}

fn exec(g: &Global) -> Exec {
    if g.sequential {
        Exec::Sequential
    } else {
        Exec::Parallel
    }
}

fn print(m: &Manifest, body: Json, target: Option<&Path>) -> Result<()> {
    emit(target, &json_text(&m.document(body)))
}

fn bottom_json(r: &BottomReason) -> Json {
    serde_json::to_value(r).expect("serializable")
}

pub fn dispatch(cli: &Cli) -> Result<Status> {
    let g = &cli.global;
    match &cli.command {
        Command::Run { file, args } => run(g, file, args),
        Command::Typecheck { file } => {
            let p = load(file)?;
            let m = Manifest::new("typecheck", &p.source, g.seed, json!({}), g.stable);
            print(
                &m,
                json!({
                    "type": p.ty.to_string(),
                    "deterministic": p.term.is_deterministic(),
                }),
                None,
            )?;
            Ok(Status::Ok)
        }
        Command::Ad {
            file,
            emit: as_source,
        } => {
            let p = load(file)?;
            let d = ad::transform(&p.term)?;
            if *as_source {
                emit(None, &format!("{d}\n"))?;
            } else {
                let m = Manifest::new("ad", &p.source, g.seed, json!({}), g.stable);
                print(
                    &m,
                    json!({
                        "source": d.to_string(),
                        "type": ad::dual_type(&p.ty).to_string(),
                    }),
                    None,
                )?;
            }
            Ok(Status::Ok)
        }
        Command::Grad {
            file,
            at,
            seed_vec,
            check,
        } => grad(g, file, at, seed_vec.as_deref(), *check),
        Command::Gd {
            file,
            x0,
            eps,
            t_max,
            mode,
            stop_tol,
            csv,
        } => {
            let cfg = GdConfig {
                eps: *eps,
                t_max: *t_max,
                mode: match mode {
                    Mode::Ad => GradMode::Ad,
                    Mode::Fd => GradMode::Fd,
                },
                stop_tol: *stop_tol,
                fuel: g.fuel,
                ..GdConfig::default()
            };
            gd_cmd(g, file, &parse_reals(x0)?, &cfg, csv.as_deref())
        }
        Command::GdRandom {
            file,
            l,
            seeds,
            t_max,
            stop_tol,
            x0_range,
            eps_range,
            fixed_eps,
            json: out,
        } => {
            let p = load(file)?;
            let base = RandomGdConfig::default();
            let cfg = RandomGdConfig {
                l: *l,
                eps_range: eps_range.as_deref().map(parse_range).transpose()?,
                fixed_eps: *fixed_eps,
                x0_range: parse_range(x0_range)?,
                n_seeds: *seeds,
                seed: g.seed,
                gd: GdConfig {
                    t_max: *t_max,
                    stop_tol: *stop_tol,
                    fuel: g.fuel,
                    ..base.gd
                },
            };
            let report = gd::randomized_gd(&p.term, &cfg, exec(g))?;
            let m = Manifest::new(
                "gd-random",
                &p.source,
                g.seed,
                serde_json::to_value(cfg)?,
                g.stable,
            );
            let all_converged_monotone = report
                .seeds
                .iter()
                .filter(|s| s.status == gd::SeedStatus::Converged)
                .all(|s| s.monotone);
            let mut body = serde_json::to_value(&report)?;
            body["converged_monotone"] = json!(all_converged_monotone);
            print(&m, body, out.as_deref())?;
            Ok(Status::Ok)
        }
        Command::Trace {
            file,
            trace,
            json: out,
        } => {
            let p = load(file)?;
            let tr = read_trace(trace)?;
            let out_run = prob::run_trace(&p.term, &tr, g.fuel)?;
            let m = Manifest::new("trace", &p.source, g.seed, json!({ "trace": tr }), g.stable);
            let bottom = matches!(out_run.result, RunResult::Bottom(_));
            print(&m, weighted_json(&out_run), out.as_deref())?;
            Ok(if bottom { Status::Bottom } else { Status::Ok })
        }
        Command::Weight { file, trace, grad } => {
            let p = load(file)?;
            let tr = read_trace(trace)?;
            let s = Sampler::new(&p.term, g.fuel)?;
            let w = s.weight_fn(&tr)?;
            let mut body = json!({ "weight": real_json(w) });
            let mut status = Status::Ok;
            if *grad {
                match s.weight_grad(&tr)? {
                    Outcome::Val(gr) => {
                        body["grad"] = Json::Array(gr.into_iter().map(real_json).collect())
                    }
                    Outcome::Bottom(r) => {
                        body["grad"] = Json::Null;
                        body["reason"] = bottom_json(&r);
                        status = Status::Bottom;
                    }
                }
            }
            let m = Manifest::new(
                "weight",
                &p.source,
                g.seed,
                json!({ "trace": tr, "grad": grad }),
                g.stable,
            );
            print(&m, body, None)?;
            Ok(status)
        }
        Command::Simulate {
            file,
            n,
            max_trace,
            csv,
        } => simulate(g, file, *n, *max_trace, csv.as_deref()),
        Command::Estimate {
            file,
            event,
            n,
            max_trace,
        } => {
            let p = load(file)?;
            let test: TestFn = event.parse()?;
            let sim = SimConfig {
                seed: g.seed,
                max_trace_len: *max_trace,
                fuel: g.fuel,
            };
            let est = prob::estimate(&p.term, &test, *n, &sim, exec(g))?;
            let m = Manifest::new(
                "estimate",
                &p.source,
                g.seed,
                json!({ "event": test, "n": n, "max_trace": max_trace }),
                g.stable,
            );
            print(&m, serde_json::to_value(&est)?, None)?;
            Ok(Status::Ok)
        }
        Command::Dim {
            file,
            n,
            tol,
            max_trace,
            json: out,
        } => {
            let p = load(file)?;
            let sim = SimConfig {
                seed: g.seed,
                max_trace_len: *max_trace,
                fuel: g.fuel,
            };
            let hist = prob::support_dim(&p.term, *n, &sim, *tol, exec(g))?;
            let fractions: serde_json::Map<String, Json> = hist
                .counts
                .keys()
                .map(|&r| (r.to_string(), json!(hist.fraction(r))))
                .collect();
            let mut body = serde_json::to_value(&hist)?;
            body["fractions"] = Json::Object(fractions);
            let m = Manifest::new(
                "dim",
                &p.source,
                g.seed,
                json!({ "n": n, "tol": tol, "max_trace": max_trace }),
                g.stable,
            );
            print(&m, body, out.as_deref())?;
            Ok(Status::Ok)
        }
        Command::Prims { json: as_json } => {
            if *as_json {
                let prims: Vec<Json> = registry()
                    .iter()
                    .map(|s| {
                        json!({
                            "name": s.name,
                            "arity": s.arity,
                            "arg_types": s.arg_types().iter().map(ToString::to_string).collect::<Vec<_>>(),
                            "result_type": s.result_type().to_string(),
                            "boundary_note": s.boundary_note,
                        })
                    })
                    .collect();
                let m = Manifest::new("prims", "", g.seed, json!({}), g.stable);
                print(&m, json!({ "prims": prims }), None)?;
            } else {
                let mut text = String::new();
                for s in registry() {
                    let args: Vec<String> = s.arg_types().iter().map(ToString::to_string).collect();
                    writeln!(
                        text,
                        "{:<6} ({}) -> {}  {}",
                        s.name,
                        args.join(", "),
                        s.result_type(),
                        s.boundary_note
                    )?;
                }
                emit(None, &text)?;
            }
            Ok(Status::Ok)
        }
    }
}

/// Applies `t` to one argument per entry of `args`, each a comma-separated
/// list of the real leaves of the next domain type.
fn apply_args(t: &Term, ty: &Type, args: &[String]) -> Result<Term> {
    let mut call = t.clone();
    let mut cur = ty.clone();
    for (i, a) in args.iter().enumerate() {
        let Type::Arrow(dom, cod) = cur else {
            bail!("argument {} given but the program has type {ty}", i + 1);
        };
        let n = real_leaves(&dom).ok_or_else(|| {
            anyhow!(
                "argument {} has type {dom}, which is not a real tuple",
                i + 1
            )
        })?;
        let vals = parse_reals(a)?;
        if vals.len() != n {
            bail!(
                "argument {} needs {n} reals for type {dom}, got {}",
                i + 1,
                vals.len()
            );
        }
        let arg = build_arg(&dom, &mut vals.into_iter().map(Term::Real));
        call = Term::app(call, arg);
        cur = (*cod).clone();
    }
    Ok(call)
}

fn run(g: &Global, file: &Path, args: &[String]) -> Result<Status> {
    let p = load(file)?;
    let call = apply_args(&p.term, &p.ty, args)?;
    let config = json!({ "args": args, "fuel": g.fuel });
    if p.term.is_deterministic() {
        let ev = eval::eval(&call, &Env::new(), g.fuel)?;
        let m = Manifest::new("run", &p.source, g.seed, config, g.stable);
        let (body, status) = match &ev.outcome {
            Outcome::Val(v) => (
                json!({ "status": "val", "value": value_json(v), "steps": ev.steps }),
                Status::Ok,
            ),
            Outcome::Bottom(r) => (
                json!({ "status": "bottom", "reason": bottom_json(r), "steps": ev.steps }),
                Status::Bottom,
            ),
        };
        print(&m, body, None)?;
        return Ok(status);
    }
    // Probabilistic programs run once on stream (seed, 0).
    let s = Sampler::new(&call, g.fuel)?;
    let sim = s.simulate_stream(g.seed, 0, SimConfig::default().max_trace_len)?;
    let m = Manifest::new("run", &p.source, g.seed, config, g.stable);
    let bottom = matches!(sim.outcome.result, RunResult::Bottom(_));
    let mut body = weighted_json(&sim.outcome);
    body["trace"] = json!(sim.trace);
    print(&m, body, None)?;
    Ok(if bottom { Status::Bottom } else { Status::Ok })
}

fn weighted_json(o: &WeightedOutcome) -> Json {
    let mut body = match &o.result {
        RunResult::Val(v) => json!({ "status": "val", "value": value_json(v) }),
        RunResult::Incomplete => json!({ "status": "incomplete" }),
        RunResult::Bottom(r) => json!({ "status": "bottom", "reason": bottom_json(r) }),
    };
    body["weight"] = real_json(o.weight);
    body["consumed"] = json!(o.consumed);
    body["remainder"] = json!(o.remainder);
    body
}

fn scalar_or_vec(v: &[f64]) -> Json {
    if v.len() == 1 {
        real_json(v[0])
    } else {
        Json::Array(v.iter().copied().map(real_json).collect())
    }
}

/// One `grad` report; the bool is true when the program is undefined there.
fn grad_point(
    d: &Differentiable,
    x: &[f64],
    seed: Option<&[f64]>,
    check: bool,
) -> Result<(Json, bool)> {
    let fd_cfg = FdConfig::default();
    let point = scalar_or_vec(x);
    if d.n() == 1 && d.m() == 1 && seed.is_none() && check {
        let r = d.report_at(x[0], &fd_cfg);
        let mut body = serde_json::to_value(&r)?;
        let undefined = r.ad.is_none();
        body["status"] = json!(if undefined { "bottom" } else { "val" });
        if let Some(primal) = d.eval_at(x)?.val() {
            body["primal"] = real_json(primal[0]);
        }
        return Ok((body, undefined));
    }
    let tangent_dir: Vec<f64>;
    let (primal, tangent) = match seed {
        Some(v) => match d.jvp(x, v)? {
            Outcome::Val(j) => {
                tangent_dir = v.to_vec();
                (j.primal, j.tangent)
            }
            Outcome::Bottom(r) => {
                return Ok((
                    json!({ "point": point, "status": "bottom", "reason": bottom_json(&r) }),
                    true,
                ))
            }
        },
        None if d.m() == 1 => match d.gradient(x)? {
            Outcome::Val((f, g)) => {
                tangent_dir = Vec::new();
                (vec![f], g)
            }
            Outcome::Bottom(r) => {
                return Ok((
                    json!({ "point": point, "status": "bottom", "reason": bottom_json(&r) }),
                    true,
                ))
            }
        },
        None => bail!(
            "the program has {} outputs; pass --seed-vec with {} entries",
            d.m(),
            d.n()
        ),
    };
    let mut body = json!({
        "point": point,
        "status": "val",
        "primal": scalar_or_vec(&primal),
        "ad": scalar_or_vec(&tangent),
    });
    if check {
        let fd: Option<Vec<(f64, Json)>> = if tangent_dir.is_empty() {
            // Full gradient of a scalar output.
            fd_gradient(
                |p| d.eval_at(p).ok().and_then(|o| o.val()).map(|v| v[0]),
                x,
                &fd_cfg,
            )
            .ok()
            .map(|es| {
                es.into_iter()
                    .map(|e| (e.value, serde_json::to_value(e.class).unwrap()))
                    .collect()
            })
        } else {
            // Directional derivative of each output along the seed.
            (0..d.m())
                .map(|k| {
                    fd_derivative(
                        |s| {
                            let p: Vec<f64> =
                                x.iter().zip(&tangent_dir).map(|(a, b)| a + s * b).collect();
                            d.eval_at(&p).ok().and_then(|o| o.val()).map(|v| v[k])
                        },
                        0.0,
                        &fd_cfg,
                    )
                    .ok()
                    .map(|e| (e.value, serde_json::to_value(e.class).unwrap()))
                })
                .collect()
        };
        match fd {
            Some(fd) => {
                let vals: Vec<f64> = fd.iter().map(|(v, _)| *v).collect();
                body["fd"] = scalar_or_vec(&vals);
                body["fd_class"] = Json::Array(fd.into_iter().map(|(_, c)| c).collect());
                let err = vals
                    .iter()
                    .zip(&tangent)
                    .map(|(a, b)| (a - b).abs())
                    .fold(0.0f64, f64::max);
                body["abs_err"] = real_json(err);
            }
            None => body["fd"] = Json::Null,
        }
    }
    Ok((body, false))
}

fn grad(g: &Global, file: &Path, at: &[String], seed: Option<&str>, check: bool) -> Result<Status> {
    let p = load(file)?;
    let d = Differentiable::new(&p.term, g.fuel)?;
    let seed = seed.map(parse_reals).transpose()?;
    if let Some(v) = &seed {
        if v.len() != d.n() {
            bail!("--seed-vec needs {} entries, got {}", d.n(), v.len());
        }
    }
    let mut reports = Vec::with_capacity(at.len());
    let mut any_bottom = false;
    for a in at {
        let x = parse_reals(a)?;
        if x.len() != d.n() {
            bail!("--at needs {} coordinates, got {}", d.n(), x.len());
        }
        let (body, bottom) = grad_point(&d, &x, seed.as_deref(), check)?;
        any_bottom |= bottom;
        reports.push(body);
    }
    let m = Manifest::new(
        "grad",
        &p.source,
        g.seed,
        json!({ "at": at, "seed_vec": seed, "check": check, "fuel": g.fuel }),
        g.stable,
    );
    let body = if reports.len() == 1 {
        reports.pop().expect("one report")
    } else {
        json!({ "reports": reports })
    };
    print(&m, body, None)?;
    Ok(if any_bottom {
        Status::Bottom
    } else {
        Status::Ok
    })
}

fn gd_cmd(
    g: &Global,
    file: &Path,
    x0: &[f64],
    cfg: &GdConfig,
    csv: Option<&Path>,
) -> Result<Status> {
    let p = load(file)?;
    let obj = Objective::new(&p.term, cfg.fuel)?;
    let traj = obj.run(x0, cfg)?;
    let m = Manifest::new(
        "gd",
        &p.source,
        g.seed,
        json!({ "x0": x0, "gd": cfg }),
        g.stable,
    );
    match csv {
        Some(target) => emit(Some(target), &gd_csv(&m, &traj, obj.dim()))?,
        None => {
            let body = json!({
                "trajectory": traj,
                "final": traj.last(),
                "monotone": traj.is_monotone(),
            });
            print(&m, body, None)?;
        }
    }
    Ok(match traj.termination {
        Termination::Undefined { .. } => Status::Bottom,
        _ => Status::Ok,
    })
}

fn gd_csv(m: &Manifest, traj: &Trajectory, dim: usize) -> String {
    let mut out = csv_manifest_line(m);
    let cols = |name: &str| -> Vec<String> {
        if dim == 1 {
            vec![name.to_string()]
        } else {
            (0..dim).map(|i| format!("{name}{i}")).collect()
        }
    };
    let mut header = vec!["t".to_string()];
    header.extend(cols("x"));
    header.extend(cols("grad"));
    header.push("f".into());
    out.push_str(&header.join(","));
    out.push('\n');
    for (t, x) in traj.iterates.iter().enumerate() {
        let mut row = vec![t.to_string()];
        row.extend(x.iter().map(|v| v.to_string()));
        match traj.grads.get(t) {
            Some(gr) => row.extend(gr.iter().map(|v| v.to_string())),
            None => row.extend(std::iter::repeat_n(String::new(), dim)),
        }
        row.push(csv_real(traj.values.get(t).copied()));
        out.push_str(&row.join(","));
        out.push('\n');
    }
    out
}

fn simulate(
    g: &Global,
    file: &Path,
    n: usize,
    max_trace: usize,
    csv: Option<&Path>,
) -> Result<Status> {
    let p = load(file)?;
    let s = Sampler::new(&p.term, g.fuel)?;
    let runs = exec(g).map_indexed(n, |i| s.simulate_stream(g.seed, i as u64, max_trace));
    let m = Manifest::new(
        "simulate",
        &p.source,
        g.seed,
        json!({ "n": n, "max_trace": max_trace, "fuel": g.fuel }),
        g.stable,
    );
    let mut rows = Vec::with_capacity(n);
    for (i, r) in runs.into_iter().enumerate() {
        rows.push(match r {
            Ok(sim) => {
                let mut body = weighted_json(&sim.outcome);
                body["index"] = json!(i);
                body["trace"] = json!(sim.trace);
                body
            }
            Err(prob::ProbError::TraceOverflow { max }) => {
                json!({ "index": i, "status": "overflow", "max_trace": max })
            }
            Err(e) => return Err(e.into()),
        });
    }
    match csv {
        Some(target) => {
            let mut out = csv_manifest_line(&m);
            out.push_str("index,status,weight,value,trace\n");
            for r in &rows {
                let value = match &r["value"] {
                    Json::Null => String::new(),
                    Json::Array(_) => flatten_json(&r["value"]).join(";"),
                    v => v.to_string(),
                };
                let trace = r["trace"]
                    .as_array()
                    .map(|a| {
                        a.iter()
                            .map(ToString::to_string)
                            .collect::<Vec<_>>()
                            .join(";")
                    })
                    .unwrap_or_default();
                let weight = r.get("weight").map(ToString::to_string).unwrap_or_default();
                let status = r["status"].as_str().unwrap_or_default();
                writeln!(out, "{},{status},{weight},{value},{trace}", r["index"])?;
            }
            emit(Some(target), &out)?;
        }
        None => print(&m, json!({ "runs": rows }), None)?,
    }
    Ok(Status::Ok)
}

fn flatten_json(v: &Json) -> Vec<String> {
    match v {
        Json::Array(items) => items.iter().flat_map(flatten_json).collect(),
        other => vec![other.to_string()],
    }
}
