use std::fs;
use std::io::{self, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use adagroup::objective::{check_adaptive_submodularity, check_strong_adaptive_monotonicity};
use adagroup::search::{write_findings, ClassMode, CostMode, PriorMode, Thresholds};
use adagroup::{
    bound_audit, counterexample, evaluate_cost, find_partition_violations, greedy_policy, optimal_policy,
    overcount_audit, parse_instance, stop_cover, to_dot, validate_instance, CostProfile, DecisionTree, Instance,
    NodeId, ObjectiveKind, Rational, SearchConfig, TieBreak, Verdict,
};
use anyhow::{bail, Context, Result};
use clap::{Parser, Subcommand, ValueEnum};
use serde_json::{json, Value};
use sha2::{Digest, Sha256};

#[derive(Parser)]
#[command(name = "adagroup", version, about = "Greedy and optimal policies for adaptive group identification")]
struct Cli {
    /// Output format.
    #[arg(long, value_enum, default_value_t = Format::Text, global = true)]
    format: Format,
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Format {
    Text,
    Json,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Property {
    Submodular,
    Monotone,
    Both,
}

#[derive(Subcommand)]
enum Command {
    /// Check an instance file for structural and semantic problems.
    Validate { file: PathBuf },
    /// Build the greedy policy tree.
    Greedy {
        file: PathBuf,
        /// lowest, highest or random:SEED
        #[arg(long, default_value = "lowest")]
        tie: TieBreak,
        /// Write the tree as Graphviz DOT.
        #[arg(long)]
        dot: Option<PathBuf>,
    },
    /// Build the minimum expected cost policy tree.
    Optimal {
        file: PathBuf,
        #[arg(long)]
        dot: Option<PathBuf>,
    },
    /// Compare greedy against the optimum and the worst-case bound.
    Bound {
        file: PathBuf,
        #[arg(long, default_value = "lowest")]
        tie: TieBreak,
    },
    /// Exhaustively check adaptive submodularity and strong adaptive monotonicity.
    Check {
        file: PathBuf,
        #[arg(long, value_enum, default_value_t = Property::Both)]
        property: Property,
    },
    /// Stop-node cover and overcount audit at threshold x.
    Audit {
        file: PathBuf,
        /// Threshold as p/q.
        #[arg(long)]
        x: Rational,
        /// optimal, greedy, or a JSON file mapping realization ids to costs.
        #[arg(long, default_value = "optimal")]
        reference: String,
        #[arg(long, default_value = "lowest")]
        tie: TieBreak,
    },
    /// Mine random instances for overlapping stop-node covers.
    Search(SearchArgs),
    /// Re-derive the reference counterexample and check every published value.
    ReproPaper,
}

#[derive(clap::Args)]
struct SearchArgs {
    /// Realization count, N or MIN..MAX.
    #[arg(long, default_value = "5", value_parser = parse_range)]
    realizations: (usize, usize),
    /// Item count, N or MIN..MAX.
    #[arg(long, default_value = "3", value_parser = parse_range)]
    items: (usize, usize),
    #[arg(long, default_value_t = 2)]
    arity: u32,
    /// unit or int:MAX
    #[arg(long, default_value = "unit", value_parser = parse_costs)]
    costs: CostMode,
    /// uniform or random:MAX_DENOMINATOR
    #[arg(long, default_value = "uniform", value_parser = parse_priors)]
    priors: PriorMode,
    /// distinct or random:MAX_CLASSES
    #[arg(long, default_value = "distinct", value_parser = parse_classes)]
    classes: ClassMode,
    /// Fixed thresholds (repeatable); the midpoint grid is used when absent.
    #[arg(long = "x")]
    thresholds: Vec<Rational>,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Number of valid instances to draw.
    #[arg(long, default_value_t = 100)]
    count: usize,
    #[arg(long, default_value_t = 100_000)]
    max_attempts: usize,
    /// Stop at the first finding.
    #[arg(long)]
    first: bool,
    #[arg(long, default_value = "lowest")]
    tie: TieBreak,
    /// Also audit the built-in counterexample ahead of the random stream.
    #[arg(long)]
    inject_reference: bool,
    /// Write one JSON file per finding into this directory.
    #[arg(long)]
    out: Option<PathBuf>,
}

fn parse_range(s: &str) -> Result<(usize, usize), String> {
    let parse = |t: &str| t.parse::<usize>().map_err(|e| format!("{t:?}: {e}"));
    match s.split_once("..") {
        Some((a, b)) => Ok((parse(a)?, parse(b)?)),
        None => parse(s).map(|n| (n, n)),
    }
}

fn tagged<'a>(s: &'a str, tag: &str) -> Option<Result<u32, String>> {
    s.strip_prefix(tag)
        .and_then(|r| r.strip_prefix(':'))
        .map(|v: &'a str| v.parse().map_err(|e| format!("{s:?}: {e}")))
}

fn parse_costs(s: &str) -> Result<CostMode, String> {
    if s == "unit" {
        return Ok(CostMode::Unit);
    }
    tagged(s, "int").ok_or_else(|| format!("expected unit or int:MAX, got {s:?}"))?.map(|max| CostMode::RandomInt { max })
}

fn parse_priors(s: &str) -> Result<PriorMode, String> {
    if s == "uniform" {
        return Ok(PriorMode::Uniform);
    }
    tagged(s, "random")
        .ok_or_else(|| format!("expected uniform or random:MAX_DENOMINATOR, got {s:?}"))?
        .map(|max_denominator| PriorMode::Random { max_denominator })
}

fn parse_classes(s: &str) -> Result<ClassMode, String> {
    if s == "distinct" {
        return Ok(ClassMode::Distinct);
    }
    tagged(s, "random")
        .ok_or_else(|| format!("expected distinct or random:MAX_CLASSES, got {s:?}"))?
        .map(|k| ClassMode::Random { max_classes: k as usize })
}

/// What a command produced: a JSON payload, the text rendering, and whether
/// the command's check passed.
struct Report {
    digest: Option<String>,
    results: Value,
    text: String,
    ok: bool,
}

fn digest(inst: &Instance) -> String {
    let canonical = serde_json::to_string(&inst.to_document()).expect("document serializes");
    hex::encode(Sha256::digest(canonical.as_bytes()))
}

fn load(path: &Path) -> Result<Instance> {
    let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    parse_instance(&text).with_context(|| format!("parsing {}", path.display()))
}

fn load_valid(path: &Path) -> Result<Instance> {
    let inst = load(path)?;
    validate_instance(&inst).into_result().with_context(|| format!("validating {}", path.display()))?;
    Ok(inst)
}

/// Node names: the conventional letters for the built-in instance, `nK` otherwise.
fn namer<'a>(inst: &Instance, tree: &'a DecisionTree) -> impl Fn(NodeId) -> String + 'a {
    let reference = digest(inst) == digest(&counterexample::instance());
    move |id| match reference.then(|| counterexample::name_of(tree, id)).flatten() {
        Some(name) => name.to_string(),
        None => id.to_string(),
    }
}

fn tree_json(inst: &Instance, tree: &DecisionTree) -> Value {
    let name = namer(inst, tree);
    let nodes: Vec<Value> = tree
        .nodes()
        .map(|(id, n)| {
            json!({
                "id": id.to_string(),
                "name": name(id),
                "set": n.set.iter().map(|r| inst.realizations()[r].id.clone()).collect::<Vec<_>>(),
                "f_e": n.f_e,
                "item": n.item().map(|e| inst.items()[e].id.clone()),
                "children": n.children().iter().map(|(o, c)| json!({"outcome": o, "node": c.to_string()})).collect::<Vec<_>>(),
            })
        })
        .collect();
    json!(nodes)
}

fn tree_text(inst: &Instance, tree: &DecisionTree) -> String {
    let name = namer(inst, tree);
    let mut out = String::new();
    // Depth-first so each child prints under its parent.
    let mut stack = vec![DecisionTree::ROOT];
    while let Some(id) = stack.pop() {
        let n = tree.node(id);
        let what = match n.item() {
            Some(e) => format!("test {}", inst.items()[e].id),
            None => "leaf".to_string(),
        };
        let pad = "  ".repeat(n.depth);
        out.push_str(&format!("{pad}{}: {} f_E = {} -> {what}\n", name(id), n.set.display_ids(inst), n.f_e));
        stack.extend(n.children().iter().rev().map(|(_, c)| *c));
    }
    out
}

fn profile_json(inst: &Instance, p: &CostProfile) -> Value {
    let per: serde_json::Map<String, Value> = inst
        .realizations()
        .iter()
        .zip(&p.per_realization)
        .map(|(r, c)| (r.id.clone(), json!(c)))
        .collect();
    json!({"c_avg": p.c_avg, "per_realization": per})
}

fn profile_text(inst: &Instance, p: &CostProfile) -> String {
    let per: Vec<String> =
        inst.realizations().iter().zip(&p.per_realization).map(|(r, c)| format!("{}={c}", r.id)).collect();
    format!("c_avg = {} ({})\n", p.c_avg, per.join(", "))
}

fn write_dot(path: &Path, inst: &Instance, tree: &DecisionTree) -> Result<()> {
    fs::write(path, to_dot(tree, inst, namer(inst, tree))).with_context(|| format!("writing {}", path.display()))
}

fn policy_report(inst: &Instance, tree: &DecisionTree, profile: &CostProfile, dot: Option<&Path>) -> Result<Report> {
    if let Some(path) = dot {
        write_dot(path, inst, tree)?;
    }
    Ok(Report {
        digest: Some(digest(inst)),
        results: json!({"tree": tree_json(inst, tree), "cost": profile_json(inst, profile)}),
        text: format!("{}{}", tree_text(inst, tree), profile_text(inst, profile)),
        ok: true,
    })
}

fn validate(path: &Path) -> Result<Report> {
    let inst = load(path)?;
    let report = validate_instance(&inst);
    let text = if report.is_valid() {
        format!("ok: {} realizations, {} items, {} classes\n", inst.num_realizations(), inst.num_items(), inst.num_classes())
    } else {
        report.issues.iter().map(|i| format!("error: {i}\n")).collect()
    };
    Ok(Report {
        digest: Some(digest(&inst)),
        results: json!({"valid": report.is_valid(), "issues": report.issues}),
        text,
        ok: report.is_valid(),
    })
}

fn check(path: &Path, property: Property) -> Result<Report> {
    let inst = load_valid(path)?;
    let obj = ObjectiveKind::GroupId;
    let mut found = Vec::new();
    if property != Property::Monotone {
        found.extend(check_adaptive_submodularity(&inst, &obj)?);
    }
    if property != Property::Submodular {
        found.extend(check_strong_adaptive_monotonicity(&inst, &obj)?);
    }
    let text = if found.is_empty() {
        "no violations\n".to_string()
    } else {
        found.iter().map(|v| format!("violation: {}\n", v.describe(&inst))).collect()
    };
    Ok(Report {
        digest: Some(digest(&inst)),
        results: json!({"violations": found, "descriptions": found.iter().map(|v| v.describe(&inst)).collect::<Vec<_>>()}),
        text,
        ok: found.is_empty(),
    })
}

fn read_cost_file(inst: &Instance, path: &Path) -> Result<CostProfile> {
    let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    let map: serde_json::Map<String, Value> =
        serde_json::from_str(&text).with_context(|| format!("parsing {}", path.display()))?;
    let mut costs = vec![None; inst.num_realizations()];
    for (id, v) in map {
        let r = inst.realization_index(&id)?;
        let Some(s) = v.as_str() else { bail!("cost of {id} must be a \"p/q\" string") };
        costs[r] = Some(s.parse::<Rational>().with_context(|| format!("cost of {id}"))?);
    }
    let costs = costs
        .into_iter()
        .enumerate()
        .map(|(r, c)| c.with_context(|| format!("no cost for {}", inst.realizations()[r].id)))
        .collect::<Result<Vec<_>>>()?;
    Ok(CostProfile::from_costs(inst, costs)?)
}

fn verdict_text(verdict: &Verdict, name: &dyn Fn(NodeId) -> String) -> String {
    match verdict {
        Verdict::Partition => "partition".to_string(),
        Verdict::Overlap { first, second } => format!("overlap ({}, {})", name(*first), name(*second)),
        Verdict::Gap { uncovered } => format!("gap (realization {uncovered} uncovered)"),
    }
}

fn audit(path: &Path, x: &Rational, reference: &str, tie: TieBreak) -> Result<Report> {
    let inst = load_valid(path)?;
    let tree = greedy_policy(&inst, tie)?;
    let profile = match reference {
        "optimal" => optimal_policy(&inst)?.1,
        "greedy" => evaluate_cost(&inst, &tree),
        file => read_cost_file(&inst, Path::new(file))?,
    };
    let cover = stop_cover(&tree, x)?;
    let report = overcount_audit(&inst, &tree, &profile, x)?;
    let name = namer(&inst, &tree);
    let ids = |s: &adagroup::RealizationSet| s.iter().map(|r| inst.realizations()[r].id.clone()).collect::<Vec<_>>();

    let mut text = format!("x = {x}\n");
    for r in 0..inst.num_realizations() {
        let stop = cover.entries.iter().find(|e| e.stopping.contains(r)).expect("every realization stops");
        text.push_str(&format!("  psi({}) = {}\n", inst.realizations()[r].id, name(stop.node)));
    }
    text.push_str(&format!("verdict: {}\n", verdict_text(&cover.verdict, &name)));
    text.push_str(&format!(
        "overlap-weighted sum = {}\ntrue expectation = {}\nreference c_avg = {}\ngap = {}\ntotal stop mass = {}\n",
        report.overlap_weighted_sum, report.true_expectation, report.reference_c_avg, report.gap, report.total_stop_mass
    ));
    let entries: Vec<Value> = cover
        .entries
        .iter()
        .map(|e| json!({"node": name(e.node), "set": ids(&e.set), "stopping": ids(&e.stopping), "f_e": e.f_e}))
        .collect();
    let verdict = match &cover.verdict {
        Verdict::Overlap { first, second } => json!({"verdict": "overlap", "first": name(*first), "second": name(*second)}),
        v => json!(v),
    };
    Ok(Report {
        digest: Some(digest(&inst)),
        results: json!({"x": x, "reference": reference, "stop_nodes": entries, "verdict": verdict, "report": report}),
        text,
        ok: true,
    })
}

fn bound(path: &Path, tie: TieBreak) -> Result<Report> {
    let inst = load_valid(path)?;
    let greedy = evaluate_cost(&inst, &greedy_policy(&inst, tie)?);
    let (_, opt) = optimal_policy(&inst)?;
    let b = bound_audit(&inst, &greedy, &opt)?;
    let ratio = b.ratio.as_ref().map_or("undefined".to_string(), |r| r.to_string());
    Ok(Report {
        digest: Some(digest(&inst)),
        text: format!(
            "Q = {}, eta = {}, delta = {}\nbound factor = ln({}) + 1 = {:.6}\ngreedy c_avg = {}, optimal c_avg = {}, ratio = {ratio}\nbound {}\n",
            b.q,
            b.eta,
            b.delta,
            b.log_argument,
            b.bound_factor,
            b.greedy_c_avg,
            b.optimal_c_avg,
            if b.bound_satisfied { "satisfied" } else { "VIOLATED" }
        ),
        ok: b.bound_satisfied,
        results: json!(b),
    })
}

fn search(args: &SearchArgs) -> Result<Report> {
    let cfg = SearchConfig {
        realizations: args.realizations.0..=args.realizations.1,
        items: args.items.0..=args.items.1,
        arity: args.arity,
        costs: args.costs,
        priors: args.priors,
        classes: args.classes,
        thresholds: if args.thresholds.is_empty() { Thresholds::Grid } else { Thresholds::Fixed(args.thresholds.clone()) },
        seed: args.seed,
        max_instances: args.count,
        max_attempts: args.max_attempts,
        stop_after_first: args.first,
        tie: args.tie,
        injected: if args.inject_reference { vec![counterexample::instance()] } else { Vec::new() },
    };
    let findings = find_partition_violations(&cfg)?;
    let written = match &args.out {
        Some(dir) => write_findings(dir, &findings)?,
        None => Vec::new(),
    };
    let mut text = String::new();
    for f in &findings {
        let pair = match f.cover.verdict {
            Verdict::Overlap { first, second } => format!("({first}, {second})"),
            _ => unreachable!("findings are overlaps"),
        };
        text.push_str(&format!("instance {} x = {}: overlap {pair}, gap = {}\n", f.index, f.x, f.audit.gap));
    }
    text.push_str(&format!("{} findings\n", findings.len()));
    for p in &written {
        text.push_str(&format!("wrote {}\n", p.display()));
    }
    let records: Vec<Value> =
        findings.iter().map(|f| serde_json::from_str(&f.to_json()).expect("finding is JSON")).collect();
    Ok(Report {
        digest: None,
        results: json!({"count": findings.len(), "findings": records, "written": written}),
        text,
        ok: true,
    })
}

fn repro_paper() -> Result<Report> {
    let inst = counterexample::instance();
    let tree = greedy_policy(&inst, TieBreak::LowestIndex)?;
    let (_, opt) = optimal_policy(&inst)?;
    let x = counterexample::threshold();
    let node = |n: &str| counterexample::node(&tree, n).with_context(|| format!("greedy tree lacks node {n}"));

    let mut checks: Vec<(String, String, String)> = Vec::new();
    let mut expect = |what: &str, got: String, want: &str| checks.push((what.to_string(), got, want.to_string()));
    for (n, want) in [("r", "1/25"), ("b", "17/25"), ("c", "22/25"), ("d", "1"), ("e", "1"), ("f", "1"), ("g", "22/25")] {
        expect(&format!("f_E({n})"), tree.node(node(n)?).f_e.to_string(), want);
    }
    expect("root item", inst.items()[tree.root().item().unwrap_or(usize::MAX)].id.clone(), "e1");
    expect("item at b", tree.node(node("b")?).item().map_or("-".into(), |e| inst.items()[e].id.clone()), "e2");
    let cover = stop_cover(&tree, &x)?;
    let name = namer(&inst, &tree);
    for (r, want) in ["c", "b", "c", "g", "g"].into_iter().enumerate() {
        let stop = adagroup::stop_node(&tree, r, &x)?;
        expect(&format!("stop node of {} at 23/25", inst.realizations()[r].id), name(stop), want);
    }
    expect("verdict at 23/25", verdict_text(&cover.verdict, &name), "overlap (b, c)");
    let a = overcount_audit(&inst, &tree, &opt, &x)?;
    expect("overlap-weighted sum", a.overlap_weighted_sum.to_string(), "18/5");
    expect("optimal c_avg", a.reference_c_avg.to_string(), "12/5");
    expect("gap", a.gap.to_string(), "6/5");
    expect("total stop mass", a.total_stop_mass.to_string(), "7/5");
    let b = bound_audit(&inst, &evaluate_cost(&inst, &tree), &opt)?;
    expect("eta", b.eta.to_string(), "3/25");
    expect("delta", b.delta.to_string(), "1/5");
    expect("greedy / optimal", b.ratio.map_or("-".into(), |r| r.to_string()), "1");
    expect("bound factor", format!("{:.4}", b.bound_factor), &format!("{:.4}", (125.0f64 / 3.0).ln() + 1.0));

    let ok = checks.iter().all(|(_, got, want)| got == want);
    let text = checks
        .iter()
        .map(|(what, got, want)| {
            let mark = if got == want { "ok  " } else { "FAIL" };
            format!("{mark} {what} = {got} (expected {want})\n")
        })
        .collect();
    let results =
        checks.iter().map(|(what, got, want)| json!({"check": what, "got": got, "expected": want, "ok": got == want}));
    Ok(Report { digest: Some(digest(&inst)), results: json!(results.collect::<Vec<_>>()), text, ok })
}

fn run(cli: &Cli) -> Result<(&'static str, Report)> {
    Ok(match &cli.command {
        Command::Validate { file } => ("validate", validate(file)?),
        Command::Greedy { file, tie, dot } => {
            let inst = load_valid(file)?;
            let tree = greedy_policy(&inst, *tie)?;
            ("greedy", policy_report(&inst, &tree, &evaluate_cost(&inst, &tree), dot.as_deref())?)
        }
        Command::Optimal { file, dot } => {
            let inst = load_valid(file)?;
            let (tree, profile) = optimal_policy(&inst)?;
            ("optimal", policy_report(&inst, &tree, &profile, dot.as_deref())?)
        }
        Command::Bound { file, tie } => ("bound", bound(file, *tie)?),
        Command::Check { file, property } => ("check", check(file, *property)?),
        Command::Audit { file, x, reference, tie } => ("audit", audit(file, x, reference, *tie)?),
        Command::Search(args) => ("search", search(args)?),
        Command::ReproPaper => ("repro-paper", repro_paper()?),
    })
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(&cli) {
        Ok((command, report)) => {
            let out = match cli.format {
                Format::Text => report.text,
                Format::Json => {
                    let doc = json!({"command": command, "instance_digest": report.digest, "results": report.results});
                    serde_json::to_string_pretty(&doc).expect("report serializes") + "\n"
                }
            };
            // A closed pipe (e.g. `| head`) is not an error worth reporting.
            let _ = io::stdout().write_all(out.as_bytes());
            if report.ok {
                ExitCode::SUCCESS
            } else {
                ExitCode::from(1)
            }
        }
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(1)
        }
    }
}
