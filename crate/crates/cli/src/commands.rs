use std::net::ToSocketAddrs;
use std::path::Path;
use std::sync::Arc;

use anyhow::{bail, Context, Result};
use serde_json::json;
use therblig_core::datagen::{gen_dataset, verb_histogram};
use therblig_core::losses::{finite_diff_check, LossInstance, LossProblem};
use therblig_core::record::{resolve_sequence, ReportView};
use therblig_core::ObjectVocabulary;
use therblig_service::{Store, StoreConfig};

use crate::input::{load_frame_labelings, load_records, load_vocab, read_text, vocab_for};
use crate::report::{emit, frame_report, therblig_report, write_csv};
use crate::{Cli, Command, Global, Outcome};

pub fn run(cli: Cli) -> Result<Outcome> {
    let g = &cli.global;
    if g.n == 0 {
        bail!("--n must be at least 1");
    }
    match cli.command {
        Command::Validate { file } => validate(g, &file),
        Command::Filter { state, goal, remaining } => filter(g, &state, goal.as_deref(), remaining),
        Command::Metrics { pred, gt, frames, csv } => metrics(g, &pred, &gt, frames, csv.as_deref()),
        Command::Loss { instance } => {
            let report = load_problem(g, &instance)?.loss()?;
            emit(&report);
            Ok(Outcome::Clean)
        }
        Command::Gradcheck { instance, h, tol } => {
            let err = finite_diff_check(&load_problem(g, &instance)?, h)?;
            let pass = err <= tol;
            emit(&json!({"max_rel_error": err, "h": h, "tolerance": tol, "pass": pass}));
            if !pass {
                eprintln!("gradient check failed: {err:e} > {tol:e}");
            }
            Ok(if pass { Outcome::Clean } else { Outcome::Findings })
        }
        Command::Gen { vocab_size, videos, chunks, out, vocab_out } => {
            let vocab = match &g.vocab {
                Some(path) => load_vocab(path)?,
                None => ObjectVocabulary::synthetic(vocab_size)?,
            };
            let records = gen_dataset(&vocab, videos, chunks, &g.rules(), g.seed, &out)?;
            if let Some(path) = &vocab_out {
                std::fs::write(path, serde_json::to_string_pretty(&vocab)? + "\n")
                    .with_context(|| format!("cannot write {}", path.display()))?;
            }
            let sequences: Vec<_> = records
                .iter()
                .map(|r| resolve_sequence(&r.therbligs, &vocab))
                .collect::<therblig_core::Result<_>>()?;
            let histogram: serde_json::Map<_, _> = verb_histogram(&sequences)
                .into_iter()
                .map(|(v, n)| (v.code().to_owned(), json!(n)))
                .collect();
            emit(&json!({
                "records": records.len(),
                "path": out,
                "objects": vocab.len(),
                "seed": g.seed,
                "verb_histogram": histogram,
            }));
            Ok(Outcome::Clean)
        }
        Command::Serve { addr } => {
            let addr = addr
                .to_socket_addrs()
                .with_context(|| format!("cannot resolve {addr}"))?
                .next()
                .with_context(|| format!("{addr} resolves to no address"))?;
            let store = Arc::new(open_store(g)?);
            tokio::runtime::Runtime::new()?.block_on(therblig_service::serve(store, addr))?;
            Ok(Outcome::Clean)
        }
        Command::Ingest { csv } => {
            let store = open_store(g)?;
            let file = std::fs::File::open(&csv).with_context(|| format!("cannot read {}", csv.display()))?;
            let report = store.ingest_csv(file)?;
            for e in &report.errors {
                eprintln!("{}:{}: {}", csv.display(), e.line, e.message);
            }
            emit(&report);
            Ok(if report.errors.is_empty() { Outcome::Clean } else { Outcome::Findings })
        }
    }
}

fn open_store(g: &Global) -> Result<Store> {
    let config = match &g.vocab {
        Some(path) => {
            let mut c = StoreConfig::new(load_vocab(path)?);
            c.max_len = g.n;
            c.strict_hold = g.strict_hold;
            Some(c)
        }
        None => None,
    };
    Store::open(&g.store, config).with_context(|| format!("store {}", g.store.display()))
}

fn load_problem(g: &Global, path: &Path) -> Result<LossProblem> {
    let mut instance: LossInstance =
        serde_json::from_str(&read_text(path)?).with_context(|| format!("loss instance {}", path.display()))?;
    if let Some(m) = g.mode {
        instance.mode = m.into();
    }
    if let Some(n) = g.norm {
        instance.norm = n.into();
    }
    if let Some(t) = g.tau {
        instance.tau = t;
    }
    Ok(instance.resolve()?)
}

fn validate(g: &Global, file: &Path) -> Result<Outcome> {
    let records = load_records(file)?;
    let vocab = vocab_for(g.vocab.as_deref(), &records)?;
    let rules = g.rules();
    let mut reports = Vec::with_capacity(records.len());
    let mut violations = 0;
    for r in &records {
        let ctx = || format!("segment {}", r.segment_id);
        let report = r.resolve(&vocab).with_context(ctx)?.validate(&rules, &vocab).with_context(ctx)?;
        violations += report.violations.len();
        if !report.is_consistent() {
            eprintln!("{}: {} violation(s)", r.segment_id, report.violations.len());
        }
        let view = ReportView::new(&report, &vocab)?;
        reports.push(json!({"segment_id": r.segment_id, "report": view}));
    }
    let consistent = reports.iter().filter(|r| r["report"]["consistent"] == true).count();
    emit(&json!({
        "records": records.len(),
        "consistent": consistent,
        "violations": violations,
        "reports": reports,
    }));
    Ok(if violations == 0 { Outcome::Clean } else { Outcome::Findings })
}

fn filter(g: &Global, state: &str, goal: Option<&str>, remaining: Option<usize>) -> Result<Outcome> {
    let Some(path) = &g.vocab else {
        bail!("filter needs --vocab");
    };
    let vocab = load_vocab(path)?;
    let rules = g.rules();
    let current = vocab.parse_contact_set(state)?;
    let candidates = match goal {
        Some(goal) => rules.candidates_with_goal(&current, &vocab.parse_contact_set(goal)?, remaining.unwrap_or(g.n), &vocab)?,
        None => rules.candidates(&current, &vocab),
    };
    let names = candidates
        .iter()
        .map(|&t| vocab.format_therblig(t))
        .collect::<therblig_core::Result<Vec<_>>>()?;
    emit(&json!({
        "state": vocab.format_contact_set(&current)?,
        "goal": goal,
        "remaining": goal.map(|_| remaining.unwrap_or(g.n)),
        "count": names.len(),
        "candidates": names,
    }));
    Ok(Outcome::Clean)
}

fn metrics(g: &Global, pred: &Path, gt: &Path, frames: bool, csv: Option<&Path>) -> Result<Outcome> {
    if frames {
        let report = frame_report(&load_frame_labelings(pred)?, &load_frame_labelings(gt)?)?;
        if let Some(path) = csv {
            write_csv(path, &report.per_video)?;
        }
        emit(&report);
    } else {
        let (p, t) = (load_records(pred)?, load_records(gt)?);
        let vocab = vocab_for(g.vocab.as_deref(), p.iter().chain(&t))?;
        let report = therblig_report(&p, &t, &vocab, &g.rules())?;
        if let Some(path) = csv {
            write_csv(path, &report.per_video)?;
        }
        emit(&report);
    }
    Ok(Outcome::Clean)
}
