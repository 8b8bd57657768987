use std::io::Write;
use std::path::Path;

use anyhow::{anyhow, bail, Context, Result};
use serde_json::{json, Value};

use rwnet::bridge::{exact_posterior, run_bridge, BridgeModel, BridgeOptions, Resampling};
use rwnet::generative::{acl_generate, er_generate, rw_generate, ModelConfig, Selection};
use rwnet::graph::{graph_metrics, read_edge_list, write_edge_list, EdgeListFile};
use rwnet::mle::{fit_mle, MleOptions};
use rwnet::netstats::{compute_fit_statistics, ppd_run, write_tv_csv, PpdModel};
use rwnet::pmcmc::{chain_summary, pg_run, pmmh_run, Chain, ChainSample, PgConfig, PgScheme, PmmhConfig, Priors};
use rwnet::rng::stream;
use rwnet::spectral::{mixing_time_l2, DEFAULT_MIXING_THRESHOLD};
use rwnet::{Graph, GraphMode, History, WalkLengthLaw};

use crate::output::{write_json, write_with_header, Meta};
use crate::settings::{Pair, Settings};
use crate::*;

/// Keys resolved outside the recorded configuration: they never change results.
const UNRECORDED: [&str; 2] = ["threads", "output"];

struct Ctx {
    settings: Settings,
    command: String,
    seed: u64,
    output: Option<String>,
}

impl Ctx {
    fn meta(&self, inputs: &[&[u8]]) -> Meta {
        Meta::new(&self.command, self.seed, &self.settings, inputs)
    }

    fn out(&self) -> Option<&str> {
        self.output.as_deref()
    }
}

pub fn dispatch(cli: Cli, argv: &[String]) -> Result<()> {
    let g = cli.global;
    let mut settings = Settings::load(g.config.as_deref().map(Path::new))?;
    if let Some(n) = settings.peek::<usize>("threads", g.threads)? {
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .context("configuring the thread pool")?;
    }
    let output = settings.peek::<String>("output", g.output)?;
    let seed = settings.get("seed", g.seed, 1u64)?;
    let mut ctx = Ctx {
        settings,
        command: echo_command(argv),
        seed,
        output,
    };
    match cli.command {
        Command::Generate(a) => generate(&mut ctx, a),
        Command::Stats(a) => stats(&mut ctx, a),
        Command::MixingTime(a) => mixing_time(&mut ctx, a),
        Command::Mle(a) => mle(&mut ctx, a),
        Command::Bridge(a) => bridge(&mut ctx, a),
        Command::Pmmh(a) => pmmh(&mut ctx, a),
        Command::Pg(a) => pg(&mut ctx, a),
        Command::Ppd(a) => ppd(&mut ctx, a),
        Command::Oracle(a) => oracle(&mut ctx, a),
    }?;
    for k in ctx.settings.unused_keys() {
        if !UNRECORDED.contains(&k) {
            eprintln!("warning: config key '{k}' is not used by this command");
        }
    }
    Ok(())
}

/// The command line as typed, minus `--threads`, which cannot change output.
fn echo_command(argv: &[String]) -> String {
    let mut kept = vec!["rwnet".to_string()];
    let mut skip = false;
    for a in argv {
        if skip {
            skip = false;
        } else if a == "--threads" {
            skip = true;
        } else if !a.starts_with("--threads=") {
            kept.push(a.clone());
        }
    }
    kept.join(" ")
}

fn parse_with<T>(what: &str, s: &str, f: impl FnOnce(&str) -> rwnet::Result<T>) -> Result<T> {
    f(s).map_err(|e| anyhow!("{what}: {e}"))
}

fn mode(ctx: &mut Ctx, flag: Option<String>, default: &str) -> Result<GraphMode> {
    let s = ctx.settings.get("mode", flag, default.to_string())?;
    parse_with("mode", &s, str::parse)
}

fn selection(ctx: &mut Ctx, flag: Option<String>, default: &str) -> Result<Selection> {
    let s = ctx.settings.get("selection", flag, default.to_string())?;
    parse_with("selection", &s, str::parse)
}

/// Reads the input edge list, returning the parsed graph and its raw bytes.
fn read_input(ctx: &mut Ctx, args: &InputArgs, default_mode: &str) -> Result<(EdgeListFile, Vec<u8>)> {
    let path: String = ctx.settings.require("input", args.input.clone())?;
    let mode = mode(ctx, args.mode.clone(), default_mode)?;
    let bytes = std::fs::read(&path).with_context(|| format!("reading {path}"))?;
    let file = read_edge_list(&bytes[..], mode).with_context(|| format!("parsing {path}"))?;
    Ok((file, bytes))
}

fn generate(ctx: &mut Ctx, a: GenerateArgs) -> Result<()> {
    let model = ctx.settings.get("model", a.model, "rw-u".to_string())?;
    let edges = ctx.settings.get("edges", a.edges, 250usize)?;
    let mut rng = stream(ctx.seed, &[]);
    let g: Graph = match model.to_ascii_lowercase().replace('_', "-").as_str() {
        m @ ("rw-u" | "rw-sb") => {
            let sel = if m == "rw-u" { Selection::Uniform } else { Selection::SizeBiased };
            let alpha = ctx.settings.get("alpha", a.alpha, 0.5)?;
            let lambda = ctx.settings.get("lambda", a.lambda, 4.0)?;
            let mode = mode(ctx, a.mode, "simple")?;
            let cfg = ModelConfig::new(alpha, WalkLengthLaw::poisson(lambda), sel, mode);
            rw_generate(&cfg, edges, &mut rng)?.graph
        }
        "acl" => {
            let alpha = ctx.settings.get("alpha", a.alpha, 0.5)?;
            acl_generate(alpha, edges, &mut rng)?.graph
        }
        "er" => {
            let n = ctx.settings.require("vertices", a.vertices)?;
            er_generate(n, edges, &mut rng)?
        }
        other => bail!("unknown model '{other}'; expected rw-u, rw-sb, acl or er"),
    };
    let meta = ctx.meta(&[]);
    write_with_header(ctx.out(), &meta, |w| Ok(write_edge_list(&g, w)?))
}

fn stats(ctx: &mut Ctx, a: StatsArgs) -> Result<()> {
    let (file, bytes) = read_input(ctx, &a.input, "multigraph")?;
    let fit = ctx.settings.switch("fit-stats", a.fit_stats, false)?;
    let g = &file.graph;
    let mut body = serde_json::to_value(graph_metrics(g))?;
    if fit {
        let s = compute_fit_statistics(&g.simplify())?;
        body["fit_statistics"] = serde_json::to_value(s)?;
    }
    write_json(ctx.out(), &ctx.meta(&[&bytes]), body)
}

fn mixing_time(ctx: &mut Ctx, a: MixingArgs) -> Result<()> {
    let (file, bytes) = read_input(ctx, &a.input, "multigraph")?;
    let threshold = ctx.settings.get("threshold", a.threshold, DEFAULT_MIXING_THRESHOLD)?;
    let t_max = ctx.settings.get("t-max", a.t_max, 1000usize)?;
    let mt = mixing_time_l2(&file.graph, threshold, t_max)?;
    write_json(ctx.out(), &ctx.meta(&[&bytes]), serde_json::to_value(mt)?)
}

fn mle(ctx: &mut Ctx, a: MleArgs) -> Result<()> {
    if ctx.settings.peek::<String>("mode", a.input.mode.clone())?.is_some_and(|m| matches!(m.parse(), Ok(GraphMode::Simple))) {
        bail!("mle needs multigraph input: in simple mode the new-vertex indicators are not identified");
    }
    let (file, bytes) = read_input(ctx, &a.input, "multigraph")?;
    let sel = selection(ctx, a.selection, "size-biased")?;
    let opts = MleOptions {
        lambda_max: ctx.settings.get_opt("lambda-max", a.lambda_max)?,
        include_self_loops: !ctx.settings.switch("no-self-loops", a.no_self_loops, false)?,
    };
    let g = &file.graph;
    let history = History::from_order(g, (0..g.n_edges()).collect()).context("edges are not in a feasible insertion order")?;
    let fit = fit_mle(g, &history, sel, opts)?;
    write_json(ctx.out(), &ctx.meta(&[&bytes]), serde_json::to_value(fit)?)
}

fn fixed_model(ctx: &mut Ctx, m: ModelArgs, mode: GraphMode) -> Result<BridgeModel> {
    let alpha = ctx.settings.get("alpha", m.alpha, 0.5)?;
    let lambda = ctx.settings.get("lambda", m.lambda, 4.0)?;
    let sel = selection(ctx, m.selection, "uniform")?;
    Ok(BridgeModel::fixed(alpha, WalkLengthLaw::poisson(lambda), sel, mode))
}

fn write_orders(w: &mut dyn Write, orders: &[Vec<usize>]) -> Result<()> {
    for o in orders {
        let line: Vec<String> = o.iter().map(usize::to_string).collect();
        writeln!(w, "{}", line.join(","))?;
    }
    Ok(())
}

fn bridge(ctx: &mut Ctx, a: BridgeArgs) -> Result<()> {
    let (file, bytes) = read_input(ctx, &a.input, "simple")?;
    let g = &file.graph;
    let model = fixed_model(ctx, a.model, g.mode())?;
    let n = ctx.settings.get("particles", a.particles, 100usize)?;
    let resampling = match ctx.settings.get("resampling", a.resampling, "multinomial".to_string())?.as_str() {
        "multinomial" => Resampling::Multinomial,
        "stratified" => Resampling::Stratified,
        other => bail!("unknown resampling scheme '{other}'"),
    };
    let histories = ctx.settings.get_opt::<String>("histories", a.histories)?;
    let opts = BridgeOptions {
        n_particles: n,
        resampling,
    };
    let out = run_bridge(g, &model, opts, None, &mut stream(ctx.seed, &[]))?;
    let w = &out.system.final_weights;
    let ess = 1.0 / w.iter().map(|x| x * x).sum::<f64>();
    let meta = ctx.meta(&[&bytes]);
    if let Some(path) = histories {
        write_with_header(Some(&path), &meta, |w| write_orders(w, &out.histories))?;
    }
    let body = json!({
        "n_particles": n,
        "n_edges": g.n_edges(),
        "loglik_estimate": out.loglik,
        "final_ess": ess,
    });
    write_json(ctx.out(), &meta, body)
}

/// Burn-in, thinning, priors and output paths shared by both samplers.
struct ChainPlan {
    particles: usize,
    iters: usize,
    burn: usize,
    thin: usize,
    priors: Priors,
    histories: Option<String>,
    summary: Option<String>,
    raw: Option<String>,
}

impl ChainPlan {
    fn resolve(ctx: &mut Ctx, c: ChainArgs) -> Result<Self> {
        let preset = ctx.settings.get("preset", c.preset, "quick".to_string())?;
        match preset.as_str() {
            "quick" => {}
            "thorough" => ctx.settings.apply_preset(&[("iters", "1000"), ("thin", "40"), ("burn", "1000")]),
            other => bail!("unknown preset '{other}'; expected quick or thorough"),
        }
        let defaults = Priors::default();
        let pa = ctx.settings.get("prior-alpha", parse_pair(c.prior_alpha)?, Pair(defaults.alpha_beta.0, defaults.alpha_beta.1))?;
        let pl = ctx.settings.get("prior-lambda", parse_pair(c.prior_lambda)?, Pair(defaults.lambda_gamma.0, defaults.lambda_gamma.1))?;
        let priors = Priors {
            alpha_beta: (pa.0, pa.1),
            lambda_gamma: (pl.0, pl.1),
        };
        priors.validate()?;
        let plan = ChainPlan {
            particles: ctx.settings.get("particles", c.particles, 100)?,
            iters: ctx.settings.get("iters", c.iters, 1000)?,
            burn: ctx.settings.get("burn", c.burn, 0)?,
            thin: ctx.settings.get("thin", c.thin, 1)?,
            priors,
            histories: ctx.settings.get_opt("histories", c.histories)?,
            summary: ctx.settings.get_opt("summary", c.summary)?,
            raw: ctx.settings.get_opt("raw", c.raw)?,
        };
        if plan.particles == 0 || plan.iters == 0 || plan.thin == 0 {
            bail!("particles, iters and thin must be positive");
        }
        Ok(plan)
    }

    fn total(&self) -> usize {
        self.burn + self.iters * self.thin
    }

    fn write(&self, ctx: &Ctx, chain: &Chain, meta: &Meta) -> Result<()> {
        write_with_header(ctx.out(), meta, |w| Ok(chain.write_csv(w, self.burn, self.thin)?))?;
        if let Some(p) = &self.raw {
            write_with_header(Some(p), meta, |w| Ok(chain.write_csv(w, 0, 1)?))?;
        }
        if let Some(p) = &self.histories {
            write_with_header(Some(p), meta, |w| Ok(chain.write_histories(w, self.burn, self.thin)?))?;
        }
        if let Some(p) = &self.summary {
            let kept = Chain {
                samples: chain.retained(self.burn, self.thin).map(|(_, s)| s.clone()).collect(),
                acceptance_rate: chain.acceptance_rate,
            };
            write_json(Some(p), meta, serde_json::to_value(chain_summary(&kept)?)?)?;
        }
        Ok(())
    }
}

fn parse_pair(s: Option<String>) -> Result<Option<Pair>> {
    s.map(|x| x.parse::<Pair>().map_err(|e| anyhow!(e))).transpose()
}

fn pmmh(ctx: &mut Ctx, a: PmmhArgs) -> Result<()> {
    let (file, bytes) = read_input(ctx, &a.input, "simple")?;
    let g = &file.graph;
    let sel = selection(ctx, a.selection, "uniform")?;
    let plan = ChainPlan::resolve(ctx, a.chain)?;
    let mut cfg = PmmhConfig::new(plan.particles, plan.total(), sel, g.mode());
    cfg.step_alpha = ctx.settings.get("step-alpha", a.step_alpha, cfg.step_alpha)?;
    cfg.step_lambda = ctx.settings.get("step-lambda", a.step_lambda, cfg.step_lambda)?;
    cfg.adapt_iters = ctx.settings.get("adapt", a.adapt, 0)?;
    cfg.keep_histories = plan.histories.is_some();
    let chain = pmmh_run(g, &plan.priors, &cfg, &mut stream(ctx.seed, &[]))?;
    plan.write(ctx, &chain, &ctx.meta(&[&bytes]))
}

fn pg(ctx: &mut Ctx, a: PgArgs) -> Result<()> {
    let (file, bytes) = read_input(ctx, &a.input, "simple")?;
    let g = &file.graph;
    let sel = selection(ctx, a.selection, "uniform")?;
    let plan = ChainPlan::resolve(ctx, a.chain)?;
    let mut cfg = PgConfig::new(plan.particles, plan.total(), sel, g.mode());
    let scheme = ctx.settings.get("scheme", a.scheme, "marginal".to_string())?;
    cfg.scheme = parse_with("scheme", &scheme, str::parse::<PgScheme>)?;
    cfg.k_cap = ctx.settings.get_opt("k-cap", a.k_cap)?;
    cfg.keep_histories = plan.histories.is_some();
    let chain = pg_run(g, &plan.priors, &cfg, &mut stream(ctx.seed, &[]))?;
    plan.write(ctx, &chain, &ctx.meta(&[&bytes]))
}

/// Parses the CSV written by `Chain::write_csv`, skipping `#` lines.
pub fn read_chain_csv(text: &str) -> Result<Chain> {
    let mut samples = Vec::new();
    let mut header_seen = false;
    for (i, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        if !header_seen {
            if !line.starts_with("iteration,alpha,lambda") {
                bail!("chain line {}: expected the chain CSV header", i + 1);
            }
            header_seen = true;
            continue;
        }
        let f: Vec<&str> = line.split(',').collect();
        if f.len() != 5 {
            bail!("chain line {}: expected 5 fields, found {}", i + 1, f.len());
        }
        let num = |s: &str| s.parse::<f64>().with_context(|| format!("chain line {}: bad number {s:?}", i + 1));
        samples.push(ChainSample {
            alpha: num(f[1])?,
            lambda: num(f[2])?,
            loglik: num(f[3])?,
            accepted: f[4] == "1",
            history: None,
        });
    }
    Ok(Chain {
        samples,
        acceptance_rate: None,
    })
}

fn ppd(ctx: &mut Ctx, a: PpdArgs) -> Result<()> {
    let (file, bytes) = read_input(ctx, &a.input, "simple")?;
    let chain_path: String = ctx.settings.require("chain", a.chain)?;
    let chain_text = std::fs::read_to_string(&chain_path).with_context(|| format!("reading {chain_path}"))?;
    let chain = read_chain_csv(&chain_text)?;
    let models = ctx.settings.get("models", a.models, "rw_u,rw_sb,acl,er".to_string())?;
    let models: Vec<PpdModel> = models
        .split(',')
        .map(|m| parse_with("models", m.trim(), str::parse))
        .collect::<Result<_>>()?;
    let n = ctx.settings.get("samples", a.samples, 1000usize)?;
    let json_path = ctx.settings.get_opt::<String>("json", a.json)?;
    let g = file.graph.simplify();
    let results = models
        .iter()
        .enumerate()
        .map(|(i, &m)| Ok(ppd_run(&g, &chain, m, n, &mut stream(ctx.seed, &[i as u64]))?))
        .collect::<Result<Vec<_>>>()?;
    let meta = ctx.meta(&[&bytes, chain_text.as_bytes()]);
    if let Some(p) = json_path {
        write_json(Some(&p), &meta, json!({ "results": serde_json::to_value(&results)? }))?;
    }
    write_with_header(ctx.out(), &meta, |w| Ok(write_tv_csv(w, &results)?))
}

fn oracle(ctx: &mut Ctx, a: OracleArgs) -> Result<()> {
    let (file, bytes) = read_input(ctx, &a.input, "simple")?;
    let g = &file.graph;
    let model = fixed_model(ctx, a.model, g.mode())?;
    let ex = exact_posterior(g, &model)?;
    let orders: Vec<Value> = ex
        .orders
        .iter()
        .map(|o| json!({ "order": o.order, "joint": o.joint, "posterior": o.joint / ex.marginal }))
        .collect();
    let body = json!({
        "n_orders": ex.orders.len(),
        "marginal": ex.marginal,
        "log_marginal": ex.marginal.ln(),
        "first_edge": ex.first_edge_marginal(g.n_edges()),
        "orders": orders,
    });
    write_json(ctx.out(), &ctx.meta(&[&bytes]), body)
}
