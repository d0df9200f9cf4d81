//! `eval-rope`: restart-based evaluation of a live tracker.

use std::path::Path;
use std::time::Duration;

use anyhow::{bail, Result};
use giteval::attributes::mean_correlation;
use giteval::dataset::SequenceRecord;
use giteval::metrics::{robustness, DEFAULT_MIN_ATTRIBUTE_FRAMES};
use giteval::rope::{run_session, ChildTransport, SessionConfig, SessionResult, TcpServer, DEFAULT_TAU_FAIL};
use rayon::prelude::*;

use super::ope::{collect_attributes, summarize_tracker, Breakdown, DEFAULT_RANK_BY};
use super::{load_dataset, thread_pool};
use crate::config::{absolute, all_grids, RunConfig};
use crate::output::{file_stem, write_file, write_json};
use crate::summary::{ranking_markdown, Failure, Mechanism, Summary};
use crate::Outcome;

pub const DEFAULT_TIMEOUT_SECS: f64 = 30.0;
pub const DEFAULT_NAME: &str = "tracker";

enum Source<'a> {
    Client(&'a str),
    Listen(TcpServer),
}

fn run_one(
    source: &Source<'_>,
    record: &SequenceRecord,
    config: SessionConfig,
) -> Result<SessionResult, String> {
    let result = match source {
        Source::Client(cmd) => {
            let mut transport =
                ChildTransport::spawn_shell(cmd).map_err(|e| format!("cannot start tracker: {e}"))?;
            run_session(record, &mut transport, config)
        }
        Source::Listen(server) => {
            let mut transport = server.accept().map_err(|e| format!("accepting tracker: {e}"))?;
            run_session(record, &mut transport, config)
        }
    };
    let session = result.map_err(|e| e.to_string())?;
    session.check(record)?;
    Ok(session)
}

pub fn run(cfg: &RunConfig, out: &Path) -> Result<Outcome> {
    if cfg.results.is_some() {
        bail!("eval-rope drives a live tracker; use eval-ope for --results");
    }
    let source = match (&cfg.client, &cfg.listen) {
        (Some(cmd), None) => Source::Client(cmd),
        (None, Some(addr)) => {
            let server = TcpServer::bind(addr.as_str())?;
            log::info!("waiting for trackers on {}", server.local_addr()?);
            Source::Listen(server)
        }
        (Some(_), Some(_)) => bail!("give either --client or --listen, not both"),
        (None, None) => bail!("missing --client or --listen"),
    };
    let dataset = absolute(&RunConfig::require_path(&cfg.dataset, "dataset")?)?;
    let attr_dir = cfg.attr_dir.as_deref().map(absolute).transpose()?;
    let thresholds = cfg.thresholds()?;
    let selection = cfg.attribute_selection();
    let min_frames = cfg.min_attribute_frames.unwrap_or(DEFAULT_MIN_ATTRIBUTE_FRAMES);
    let rank_by = cfg.rank_by.unwrap_or(DEFAULT_RANK_BY);
    let tau_fail = cfg.tau_fail.unwrap_or(DEFAULT_TAU_FAIL);
    if !(0.0..=1.0).contains(&tau_fail) {
        bail!("tau_fail must lie in [0, 1], got {tau_fail}");
    }
    let timeout_secs = cfg.timeout_secs.unwrap_or(DEFAULT_TIMEOUT_SECS);
    if !(timeout_secs.is_finite() && timeout_secs > 0.0) {
        bail!("timeout must be positive, got {timeout_secs}");
    }
    let weighting = cfg.weighting.unwrap_or_default();
    let name = cfg.name.clone().unwrap_or_else(|| DEFAULT_NAME.into());
    let jobs = cfg.jobs();
    let pool = thread_pool(jobs)?;

    let (records, mut errors) = load_dataset(&dataset, &pool)?;
    let mut warnings = Vec::new();
    let (records, unscheduled): (Vec<_>, Vec<_>) =
        records.into_iter().partition(|r| !r.restart_schedule.is_empty());
    for r in &unscheduled {
        log::warn!("{}: no restart schedule; skipped", r.id);
        warnings.push(format!("{}: no restart schedule; skipped", r.id));
    }
    let attrs = collect_attributes(&records, cfg, attr_dir.as_deref(), &pool, &mut warnings)?;

    let session_config = SessionConfig {
        tau_fail,
        timeout: Duration::from_secs_f64(timeout_secs),
    };
    let outcomes: Vec<_> = match &source {
        Source::Client(_) => pool.install(|| {
            records
                .par_iter()
                .map(|r| (r, run_one(&source, r, session_config)))
                .collect()
        }),
        // one connection at a time, in sequence order
        Source::Listen(_) => records
            .iter()
            .map(|r| (r, run_one(&source, r, session_config)))
            .collect(),
    };

    let mut sessions = Vec::new();
    let mut evals = Vec::new();
    for (record, outcome) in outcomes {
        let mut session = match outcome {
            Ok(s) => s,
            Err(message) => {
                errors.push(Failure {
                    tracker: Some(name.clone()),
                    sequence: record.id.clone(),
                    message,
                });
                continue;
            }
        };
        session.rho = Some(match attrs.get(&record.id).and_then(|a| mean_correlation(a)) {
            Some(rho) => rho,
            None => {
                warnings.push(format!(
                    "{}: inter-frame correlation unavailable; using 1",
                    record.id
                ));
                1.0
            }
        });
        write_json(
            &out.join("sessions")
                .join(format!("{}.json", file_stem(&record.id))),
            &session,
        )?;
        match session.to_evaluation() {
            Ok(e) => {
                evals.push(e);
                sessions.push(session);
            }
            Err(e) => errors.push(Failure {
                tracker: Some(name.clone()),
                sequence: record.id.clone(),
                message: e.to_string(),
            }),
        }
    }

    let breakdown = Breakdown {
        selection: &selection,
        min_frames,
        attrs: &attrs,
    };
    let mut tracker = summarize_tracker(&name, &evals, &breakdown, &out.join(file_stem(&name)))?;
    for (seq, s) in tracker.sequences.iter_mut().zip(&sessions) {
        seq.restarts_used = Some(s.restarts_used);
        seq.restart_points = Some(s.restart_points);
    }
    let inputs: Vec<_> = sessions
        .iter()
        .filter_map(SessionResult::robustness_input)
        .collect();
    if !inputs.is_empty() {
        let report = robustness(&inputs, weighting)?;
        write_json(&out.join("robustness.json"), &report)?;
        tracker.robustness = Some(report);
    }

    let summary = Summary {
        mechanism: Mechanism::Rope,
        rank_by,
        trackers: vec![tracker],
        errors: errors.clone(),
        warnings,
    };
    write_json(&out.join("summary.json"), &summary)?;
    write_file(&out.join("ranking.md"), &ranking_markdown(&summary))?;

    RunConfig {
        command: Some("eval-rope".into()),
        version: Some(env!("CARGO_PKG_VERSION").into()),
        dataset: Some(dataset),
        client: cfg.client.clone(),
        listen: cfg.listen.clone(),
        jobs: Some(jobs),
        tau_fail: Some(tau_fail),
        timeout_secs: Some(timeout_secs),
        weighting: Some(weighting),
        thresholds: Some(thresholds),
        attributes: Some(selection),
        attr_dir,
        min_attribute_frames: Some(min_frames),
        rank_by: Some(rank_by),
        name: Some(name),
        grids: Some(all_grids()),
        ..Default::default()
    }
    .write_manifest(out)?;
    Ok(Outcome { failures: errors })
}
