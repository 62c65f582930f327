use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use cloudreg::evaluation::{convergence_table, trace_csv, transform_error, ErrorReport};
use cloudreg::io::{load_cloud, save_cloud};
use cloudreg::keyframe::fmt_real;
use cloudreg::map_pipeline::{merge as merge_maps, serialize_octree, to_octree};
use cloudreg::offload_planner::Scenario;
use cloudreg::registration::{register_with, RegistrationResult};
use cloudreg::synthetic::{desk_pair, disjoint_pair, dense_room, room_quadrant_maps, PairSpec};
use cloudreg::{Algorithm, RigidTransform};
use serde_json::{json, Value};

use crate::json::{object, real, read_transform, read_transforms, to_text, transform};
use crate::{emit, write_file, BenchArgs, Failure, MergeArgs, OffloadArgs, RegisterArgs, SynthArgs, SynthKind};

fn error_fields(e: &ErrorReport) -> [(&'static str, Value); 4] {
    [
        ("e_rr", real(e.e_rr)),
        ("e_rr_offset_free", real(e.e_rr_offset_free)),
        ("rotation_error_deg", real(e.rotation_angle_error)),
        ("translation_error", real(e.translation_error)),
    ]
}

fn strip_timing(mut r: RegistrationResult, keep: bool) -> RegistrationResult {
    if !keep {
        r.trace = r.trace.without_timing();
    }
    r
}

pub fn register(a: &RegisterArgs) -> Result<(), Failure> {
    let config = a.params.config()?;
    let source = load_cloud(&a.source)?;
    let target = load_cloud(&a.target)?;
    let truth = a.truth.as_deref().map(read_transform).transpose()?;
    let algorithm = Algorithm::from(a.algorithm);
    log::info!("registering {} ({} pts) onto {} ({} pts) with {}", a.source.display(), source.len(), a.target.display(), target.len(), algorithm);

    let result = strip_timing(register_with(algorithm, &source, &target, &config)?, a.params.timing);
    let mut fields = vec![
        ("algorithm", json!(algorithm.name())),
        ("converged", json!(result.converged)),
        ("rotation", transform(&result.transform)["rotation"].clone()),
        ("translation", transform(&result.transform)["translation"].clone()),
        ("final_fitness", real(result.final_fitness)),
        ("final_corr_dist", real(result.final_corr_dist)),
        ("iterations", json!(result.trace.len())),
        ("align_rounds", json!(result.trace.align_rounds())),
        ("elapsed_s", real(result.trace.elapsed())),
    ];
    if let Some(t) = &truth {
        fields.extend(error_fields(&transform_error(t, &result.transform)));
    }
    emit(a.out.as_deref(), &to_text(&object(fields)))?;
    if let Some(p) = &a.trace {
        write_file(p, trace_csv(&result.trace).as_bytes())?;
    }
    if result.converged {
        Ok(())
    } else {
        Err(Failure::NotConverged(format!("{} stopped at its iteration cap", algorithm.name())))
    }
}

pub fn merge(a: &MergeArgs) -> Result<(), Failure> {
    let config = a.params.config()?;
    if a.inputs.len() < 2 {
        return Err(Failure::input(format!("merge needs at least 2 inputs, got {}", a.inputs.len())));
    }
    if a.octree.is_some() && !(a.resolution.is_finite() && a.resolution > 0.0) {
        return Err(Failure::input(format!("invalid octree resolution {}", a.resolution)));
    }
    let clouds = a.inputs.iter().map(load_cloud).collect::<Result<Vec<_>, _>>()?;
    let truth = a.truth.as_deref().map(read_transforms).transpose()?;
    if let Some(t) = truth.as_ref().filter(|t| t.len() != clouds.len()) {
        return Err(Failure::input(format!("{} truth transforms for {} inputs", t.len(), clouds.len())));
    }
    let out = merge_maps(&clouds, &config.fs_hicp)?;
    save_cloud(&a.out, &out.global_cloud)?;
    if let Some(p) = &a.octree {
        let map = to_octree(&out.global_cloud, a.resolution)?;
        write_file(p, &serialize_octree(&map))?;
        log::info!("octree: {} leaves at {} m", map.leaf_count(), a.resolution);
    }
    if let Some(p) = &a.transforms {
        let pairs: Vec<Value> = out
            .pair_results
            .iter()
            .enumerate()
            .map(|(i, r)| {
                object([
                    ("pair", json!(i)),
                    ("converged", json!(r.converged)),
                    ("final_fitness", real(r.final_fitness)),
                    ("iterations", json!(r.trace.len())),
                ])
            })
            .collect();
        let mut fields = vec![
            ("inputs", json!(a.inputs.iter().map(|p| p.display().to_string()).collect::<Vec<_>>())),
            ("transforms", Value::Array(out.transforms.iter().map(transform).collect())),
            ("pairs", Value::Array(pairs)),
        ];
        if let Some(truth) = &truth {
            let errors = truth.iter().zip(&out.transforms).map(|(t, e)| object(error_fields(&transform_error(t, e)))).collect();
            fields.push(("errors", Value::Array(errors)));
        }
        let doc = object(fields);
        write_file(p, to_text(&doc).as_bytes())?;
    }
    let stalled: Vec<usize> = out.pair_results.iter().enumerate().filter(|(_, r)| !r.converged).map(|(i, _)| i).collect();
    if stalled.is_empty() {
        Ok(())
    } else {
        Err(Failure::NotConverged(format!("pairs {stalled:?} stopped at their iteration cap")))
    }
}

pub fn offload_plan(a: &OffloadArgs) -> Result<(), Failure> {
    let mut scenario = match &a.scenario {
        Some(p) => Scenario::load(p)?,
        None => Scenario::reference(),
    };
    if let Some(b) = a.bandwidth {
        scenario.platform.bandwidth = b;
    }
    let report = scenario.plan()?;

    let mut table = String::from("     eta  payload_MB     t_tr_s   e_local_J   e_cloud_J      e_tr_J       e_lk_J  payload\n");
    for c in &report.candidates {
        let _ = writeln!(
            table,
            "{:>8.3} {:>11.3} {:>10.4} {:>11.4} {:>11.4} {:>11.4} {:>12.4}  {}",
            c.eta, c.payload, c.t_tr, c.e_local, c.e_cloud, c.e_tr, c.e_lk, c.payload_desc
        );
    }
    let _ = writeln!(table, "best eta = {}", report.best.eta);
    emit(None, &table)?;

    if let Some(p) = &a.out {
        let pl = &scenario.platform;
        let platform = object([
            ("p_local", real(pl.p_local)),
            ("p_cloud", real(pl.p_cloud)),
            ("p_tr", real(pl.p_tr)),
            ("u_local", real(pl.u_local)),
            ("u_cloud", real(pl.u_cloud)),
            ("c_total", real(pl.c_total)),
            ("bandwidth", real(pl.bandwidth)),
        ]);
        let candidates = report
            .candidates
            .iter()
            .map(|c| {
                object([
                    ("eta", real(c.eta)),
                    ("payload", real(c.payload)),
                    ("payload_desc", json!(c.payload_desc)),
                    ("t_tr", real(c.t_tr)),
                    ("e_local", real(c.e_local)),
                    ("e_cloud", real(c.e_cloud)),
                    ("e_tr", real(c.e_tr)),
                    ("e_lk", real(c.e_lk)),
                ])
            })
            .collect();
        let best = object([
            ("eta", real(report.best.eta)),
            ("payload", real(report.best.payload)),
            ("payload_desc", json!(report.best.payload_desc)),
        ]);
        let doc = object([("platform", platform), ("candidates", Value::Array(candidates)), ("best", best)]);
        write_file(p, to_text(&doc).as_bytes())?;
    }
    Ok(())
}

struct Fixture {
    name: String,
    source: PathBuf,
    target: PathBuf,
    truth: Option<PathBuf>,
}

fn fixtures(dir: &Path) -> Result<Vec<Fixture>, Failure> {
    let entries = std::fs::read_dir(dir).map_err(|e| Failure::input(format!("{}: {e}", dir.display())))?;
    let mut names: Vec<String> = entries
        .filter_map(|e| e.ok())
        .filter_map(|e| e.file_name().to_str().and_then(|n| n.strip_suffix(".source.ply")).map(str::to_string))
        .collect();
    names.sort();
    if names.is_empty() {
        return Err(Failure::input(format!("{}: no `<name>.source.ply` fixtures", dir.display())));
    }
    names
        .into_iter()
        .map(|name| {
            let target = dir.join(format!("{name}.target.ply"));
            if !target.is_file() {
                return Err(Failure::input(format!("{}: missing target for fixture `{name}`", target.display())));
            }
            let truth = Some(dir.join(format!("{name}.truth.json"))).filter(|p| p.is_file());
            Ok(Fixture { source: dir.join(format!("{name}.source.ply")), target, truth, name })
        })
        .collect()
}

pub fn bench(a: &BenchArgs) -> Result<(), Failure> {
    let config = a.params.config()?;
    let list = fixtures(&a.fixtures)?;
    let mut summary = String::from(
        "fixture,algorithm,status,iterations,align_rounds,iterations_to_threshold,final_fitness,elapsed_s,e_rr,rotation_error_deg,translation_error\n",
    );
    let mut series = String::new();
    for f in &list {
        let source = load_cloud(&f.source)?;
        let target = load_cloud(&f.target)?;
        let truth = f.truth.as_deref().map(read_transform).transpose()?;
        let mut traces = Vec::new();
        for algorithm in Algorithm::ALL {
            let outcome = register_with(algorithm, &source, &target, &config);
            let (status, result) = match outcome {
                Ok(r) => (if r.converged { "converged" } else { "not-converged" }, Some(strip_timing(r, a.params.timing))),
                Err(e) => {
                    log::warn!("{} / {}: {e}", f.name, algorithm);
                    ("failed", None)
                }
            };
            let _ = write!(summary, "{},{},{status}", f.name, algorithm.name());
            match &result {
                Some(r) => {
                    let table = convergence_table([(algorithm.name(), &r.trace)], a.threshold);
                    let s = &table.summaries[0];
                    let hit = s.iterations_to_threshold.map_or(String::new(), |i| i.to_string());
                    let _ = write!(summary, ",{},{},{hit},{},{}", s.iterations, s.align_rounds, fmt_real(r.final_fitness), fmt_real(s.elapsed));
                    match &truth {
                        Some(t) => {
                            let e = transform_error(t, &r.transform);
                            let _ = writeln!(
                                summary,
                                ",{},{},{}",
                                fmt_real(e.e_rr),
                                fmt_real(e.rotation_angle_error),
                                fmt_real(e.translation_error)
                            );
                        }
                        None => summary.push_str(",,,\n"),
                    }
                    traces.push((algorithm.name(), r.trace.clone()));
                }
                None => summary.push_str(",,,,,,,,\n"),
            }
        }
        let table = convergence_table(traces.iter().map(|(n, t)| (*n, t)), a.threshold);
        let csv = table.series_csv();
        let mut lines = csv.lines();
        if series.is_empty() {
            let _ = writeln!(series, "fixture,{}", lines.next().unwrap_or_default());
        } else {
            lines.next();
        }
        for line in lines {
            let _ = writeln!(series, "{},{line}", f.name);
        }
    }
    match &a.out {
        Some(dir) => {
            write_file(&dir.join("summary.csv"), summary.as_bytes())?;
            write_file(&dir.join("series.csv"), series.as_bytes())
        }
        None => emit(None, &summary),
    }
}

fn write_truth(path: &Path, t: &RigidTransform) -> Result<(), Failure> {
    write_file(path, to_text(&transform(t)).as_bytes())
}

pub fn synth(a: &SynthArgs) -> Result<(), Failure> {
    let dir = &a.out;
    if let Some(o) = a.overlap.filter(|o| !(0.0..=1.0).contains(o)) {
        return Err(Failure::input(format!("overlap {o} must lie in [0, 1]")));
    }
    if a.points == Some(0) {
        return Err(Failure::input("--points must be positive"));
    }
    let save = |name: String, cloud: &cloudreg::PointCloud| -> Result<(), Failure> {
        write_file(&dir.join(name), cloudreg::io::write_ply(cloud).as_bytes())
    };
    match a.kind {
        SynthKind::DeskPairs => {
            let defaults = PairSpec::default();
            let spec = PairSpec {
                points: a.points.unwrap_or(defaults.points),
                overlap: a.overlap.unwrap_or(defaults.overlap),
                ..defaults
            };
            for i in 0..a.count {
                let pair = desk_pair(&spec, a.seed + i as u64);
                let name = format!("pair_{i:02}");
                save(format!("{name}.source.ply"), &pair.source)?;
                save(format!("{name}.target.ply"), &pair.target)?;
                write_truth(&dir.join(format!("{name}.truth.json")), &pair.truth)?;
            }
        }
        SynthKind::Quadrants => {
            let maps = room_quadrant_maps(a.points.unwrap_or(3000), a.overlap.unwrap_or(0.3), 5.0, 0.1, 0.003, a.seed);
            for (i, c) in maps.clouds.iter().enumerate() {
                save(format!("map_{i}.ply"), c)?;
            }
            let doc = object([("transforms", Value::Array(maps.truth.iter().map(transform).collect()))]);
            write_file(&dir.join("quadrants.truth.json"), to_text(&doc).as_bytes())?;
        }
        SynthKind::Room => save("room.ply".into(), &dense_room(a.points.unwrap_or(100_000), a.seed))?,
        SynthKind::Disjoint => {
            let pair = disjoint_pair(a.points.unwrap_or(1000), 10.0, a.seed);
            save("disjoint.source.ply".into(), &pair.source)?;
            save("disjoint.target.ply".into(), &pair.target)?;
            write_truth(&dir.join("disjoint.truth.json"), &pair.truth)?;
        }
    }
    Ok(())
}
