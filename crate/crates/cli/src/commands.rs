use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use ipg_core::discretizer::discretize_scene;
use ipg_core::map::VectorMap;
use ipg_core::metrics::{
    all_metrics, cohort_csv, cohort_metrics, cohort_report_text, metrics_csv, Partition, CSV_HEADER,
};
use ipg_core::qa::{
    ask_how_with, ask_what, ask_why, intention_trace, nearest_states, PlanObjective,
};
use ipg_core::scene::RawScene;
use ipg_core::synth::{events_jsonl, generate_corpus, ScriptedPolicy, WorldConfig};
use ipg_core::{ActionLabel, DiscreteState, IntentionTable, PolicyGraph, Trajectory};

use crate::error::{CliError, CliResult, Code};
use crate::io::*;
use crate::{Command, Objective, PolicyName, Query, StateArgs, WorldName};

pub fn run(cmd: Command) -> CliResult<()> {
    match cmd {
        Command::Discretize {
            scenes,
            map,
            config,
            out,
        } => discretize(&scenes, map.as_deref(), config.as_deref(), &out),
        Command::Build {
            traj,
            filter_tag,
            out,
        } => build(&traj, &filter_tag, &out),
        Command::Intents {
            pg,
            desires,
            solver,
            out,
        } => intents(&pg, desires.as_deref(), &solver.config(), &out),
        Command::Metrics {
            pg,
            intents,
            c,
            cohort,
            out,
        } => metrics(&pg, &intents, &c, &cohort, out.as_deref()),
        Command::Compare {
            traj,
            split_by,
            desires,
            c,
            solver,
            out,
        } => compare(
            &traj,
            &split_by,
            desires.as_deref(),
            c,
            &solver.config(),
            out.as_deref(),
        ),
        Command::Ask { query } => ask(query),
        Command::Evolve {
            scene,
            traj,
            intents,
            min_peak,
            out,
        } => evolve(&scene, &traj, &intents, min_peak, out.as_deref()),
        Command::Synth {
            policy,
            scenes,
            seed,
            frames,
            world,
            config,
            out,
        } => synth(policy, scenes, seed, frames, world, config.as_deref(), &out),
    }
}

fn scene_map_path(dir: &Path, scene: &RawScene, path: &Path) -> CliResult<PathBuf> {
    let r = scene.map_ref.as_deref().ok_or_else(|| {
        CliError::new(
            Code::InvalidArgument,
            format!(
                "{}: scene has no map_ref and no --map was given",
                path.display()
            ),
        )
    })?;
    let candidates = [
        dir.join(r),
        dir.parent().map_or_else(|| PathBuf::from(r), |p| p.join(r)),
    ];
    candidates
        .iter()
        .find(|c| c.is_file())
        .cloned()
        .ok_or_else(|| CliError::new(Code::Io, format!("{}: map `{r}` not found", path.display())))
}

fn discretize(
    scenes: &Path,
    map: Option<&Path>,
    config: Option<&Path>,
    out: &Path,
) -> CliResult<()> {
    let cfg = read_discretizer_config(config)?;
    let mut maps: BTreeMap<PathBuf, VectorMap> = BTreeMap::new();
    let fixed = map.map(read_map).transpose()?;
    let mut trajectories = Vec::new();
    for (path, scene) in read_scenes(scenes)? {
        let m = match &fixed {
            Some(m) => m,
            None => {
                let p = scene_map_path(scenes, &scene, &path)?;
                if !maps.contains_key(&p) {
                    let loaded = read_map(&p)?;
                    maps.insert(p.clone(), loaded);
                }
                &maps[&p]
            }
        };
        trajectories
            .push(discretize_scene(&scene, m, &cfg).map_err(|e| CliError::from(e).at(&path))?);
    }
    write_trajectories(out, &trajectories)?;
    let steps: usize = trajectories.iter().map(|t| t.steps.len()).sum();
    println!("discretized {} scenes, {steps} steps", trajectories.len());
    Ok(())
}

fn build(traj: &Path, tags: &[String], out: &Path) -> CliResult<()> {
    let all = read_trajectories(traj)?;
    let kept: Vec<Trajectory> = all
        .into_iter()
        .filter(|t| tags.iter().all(|tag| t.has_tag(tag)))
        .collect();
    let g = PolicyGraph::build(&kept).map_err(|e| CliError::from(e).at(traj))?;
    write_atomic(out, g.to_json_pretty().as_bytes())?;
    println!(
        "{} trajectories, {} states, {} edges, {} visits",
        kept.len(),
        g.node_count(),
        g.edge_count(),
        g.total_visits()
    );
    Ok(())
}

fn intents(
    pg: &Path,
    desires: Option<&Path>,
    solver: &ipg_core::SolverConfig,
    out: &Path,
) -> CliResult<()> {
    let g = read_graph(pg)?;
    let registry = read_registry(desires)?;
    let table = IntentionTable::compute(&g, &registry, solver)?;
    write_atomic(out, table.to_json().as_bytes())?;
    println!("desire,iterations,residual");
    for col in table.columns() {
        println!("{},{},{:e}", col.name, col.iterations, col.residual);
    }
    Ok(())
}

fn metrics(
    pg: &Path,
    intents: &Path,
    cs: &[f64],
    cohort: &str,
    out: Option<&Path>,
) -> CliResult<()> {
    let g = read_graph(pg)?;
    let table = read_table(intents)?;
    let mut csv = format!("{CSV_HEADER}\n");
    for &c in cs {
        let rows = all_metrics(&g, &table, c)?;
        let block = metrics_csv(cohort, &rows);
        csv.push_str(block.split_once('\n').map_or("", |(_, body)| body));
    }
    emit(out, &csv)
}

fn parse_split(spec: &str) -> CliResult<Vec<Partition>> {
    if spec == "none" {
        return Ok(vec![Partition::Identity]);
    }
    let tags = spec.strip_prefix("tag:").ok_or_else(|| {
        CliError::new(
            Code::InvalidArgument,
            format!("--split-by must be `tag:<t>[,<t>...]` or `none`, got `{spec}`"),
        )
    })?;
    let parts: Vec<Partition> = tags
        .split(',')
        .map(str::trim)
        .filter(|t| !t.is_empty())
        .map(|t| Partition::Tag(t.to_string()))
        .collect();
    if parts.is_empty() {
        return Err(CliError::new(
            Code::InvalidArgument,
            "--split-by names no tags",
        ));
    }
    Ok(parts)
}

fn compare(
    traj: &Path,
    split_by: &str,
    desires: Option<&Path>,
    c: f64,
    solver: &ipg_core::SolverConfig,
    out: Option<&Path>,
) -> CliResult<()> {
    let partitions = parse_split(split_by)?;
    let trajectories = read_trajectories(traj)?;
    if trajectories.is_empty() {
        return Err(CliError::new(
            Code::NoObservations,
            format!("{}: no trajectories", traj.display()),
        ));
    }
    let registry = read_registry(desires)?;
    let mut reports = Vec::new();
    for p in &partitions {
        let r = cohort_metrics(&trajectories, p, &registry, solver, c)?;
        if let Partition::Tag(t) = p {
            println!("split by tag `{t}` at C = {c}");
        }
        print!("{}", cohort_report_text(&r));
        println!();
        reports.extend(r);
    }
    if let Some(path) = out {
        write_atomic(path, cohort_csv(&reports, c).as_bytes())?;
    }
    Ok(())
}

fn resolve_state(at: &StateArgs) -> CliResult<DiscreteState> {
    let text = at.state.trim();
    if text.starts_with('{') {
        return serde_json::from_str(text)
            .map_err(|e| CliError::new(Code::InvalidArgument, format!("--state: {e}")));
    }
    if text.contains('=') {
        return Ok(text.parse()?);
    }
    let (scene, step) = text
        .rsplit_once(':')
        .and_then(|(s, k)| k.parse::<usize>().ok().map(|k| (s, k)))
        .ok_or_else(|| {
            CliError::new(
                Code::InvalidArgument,
                format!("--state must be a JSON object, a `Predicate=Value,...` key or `scene:step`, got `{text}`"),
            )
        })?;
    let path = at
        .traj
        .as_deref()
        .ok_or_else(|| CliError::new(Code::InvalidArgument, "--state scene:step needs --traj"))?;
    let t = find_scene(&read_trajectories(path)?, scene)?;
    t.steps.get(step).map(|s| s.state).ok_or_else(|| {
        CliError::new(
            Code::InvalidArgument,
            format!(
                "scene `{scene}` has {} steps, step {step} requested",
                t.steps.len()
            ),
        )
    })
}

fn find_scene(trajectories: &[Trajectory], id: &str) -> CliResult<Trajectory> {
    trajectories
        .iter()
        .find(|t| t.scene_id == id)
        .cloned()
        .ok_or_else(|| CliError::new(Code::UnknownScene, format!("no scene `{id}`")))
}

/// Attach the closest observed state to an unknown-state error.
fn with_hint(err: CliError, g: &PolicyGraph, s: &DiscreteState) -> CliError {
    if err.code != Code::UnknownState {
        return err;
    }
    match nearest_states(g, s, 1).first() {
        Some((near, d)) => CliError::new(
            err.code,
            format!(
                "{}; nearest observed state differs in {d} predicates: {near}",
                err.message
            ),
        ),
        None => err,
    }
}

fn to_json<T: serde::Serialize>(v: &T) -> String {
    serde_json::to_string_pretty(v).expect("serializes") + "\n"
}

fn ask(query: Query) -> CliResult<()> {
    let at = match &query {
        Query::What { at, .. } | Query::Why { at, .. } | Query::How { at, .. } => at,
    };
    let g = read_graph(&at.pg)?;
    let table = read_table(&at.intents)?;
    let s = resolve_state(at)?;
    let hint = |e: ipg_core::qa::QaError| with_hint(e.into(), &g, &s);
    let text = match &query {
        Query::What { c, .. } => {
            let rows = ask_what(&table, &s, *c).map_err(hint)?;
            if at.json {
                to_json(&rows)
            } else if rows.is_empty() {
                format!("no desire attributed at C = {c}\n")
            } else {
                let mut out = String::new();
                for (d, v) in &rows {
                    writeln!(out, "{d}\t{v:.4}").unwrap();
                }
                out
            }
        }
        Query::Why { action, c, .. } => {
            let a: ActionLabel = action.parse()?;
            let r = ask_why(&g, &table, &s, a, *c).map_err(hint)?;
            if at.json {
                to_json(&r)
            } else {
                r.render() + "\n"
            }
        }
        Query::How {
            desire,
            max_len,
            objective,
            ..
        } => {
            let objective = match objective {
                Objective::Greedy => PlanObjective::Greedy,
                Objective::MostProbable => PlanObjective::MostProbable,
            };
            let plan = ask_how_with(&g, &table, desire, &s, *max_len, objective).map_err(hint)?;
            if at.json {
                to_json(&plan)
            } else {
                plan.render(desire) + "\n"
            }
        }
    };
    print!("{text}");
    Ok(())
}

fn evolve(
    scene: &str,
    traj: &Path,
    intents: &Path,
    min_peak: f64,
    out: Option<&Path>,
) -> CliResult<()> {
    let t = find_scene(&read_trajectories(traj)?, scene)?;
    let table = read_table(intents)?;
    let trace = intention_trace(&t, &table, min_peak)?;
    emit(out, &trace.to_csv())
}

fn synth(
    policy: PolicyName,
    n_scenes: usize,
    seed: u64,
    frames: usize,
    world: WorldName,
    config: Option<&Path>,
    out: &Path,
) -> CliResult<()> {
    let policy = match policy {
        PolicyName::Compliant => ScriptedPolicy::compliant(),
        PolicyName::Reckless => ScriptedPolicy::reckless(),
    };
    let world = match world {
        WorldName::Mixed => WorldConfig::mixed(),
        WorldName::StopSigns => WorldConfig::stop_signs(),
    };
    let perception = read_discretizer_config(config)?;
    let corpus = generate_corpus(&world, &policy, &perception, n_scenes, frames, seed)?;
    let map = serde_json::to_string(&corpus.world.map).expect("map serializes");
    write_atomic(&out.join("map.json"), map.as_bytes())?;
    for scene in &corpus.scenes {
        let text = serde_json::to_string(scene).expect("scene serializes");
        write_atomic(
            &out.join("scenes").join(format!("{}.json", scene.scene_id)),
            text.as_bytes(),
        )?;
    }
    write_atomic(
        &out.join("events.jsonl"),
        events_jsonl(&corpus.events).as_bytes(),
    )?;
    write_atomic(&out.join("policy.json"), to_json(&policy).as_bytes())?;
    println!(
        "{} scenes, {} ground-truth events -> {}",
        corpus.scenes.len(),
        corpus.events.len(),
        out.display()
    );
    Ok(())
}
