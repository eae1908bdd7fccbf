use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;

use anyhow::Context;
use serde::Serialize;

use camr_core::analysis::{binomial, CSV_HEADER};
use camr_core::jobs::corpus_records;
use camr_core::num::BigRational;
use camr_core::simulate::default_value_bytes;
use camr_core::{
    build_design, camr_loads, ccdc_load, fmt_ratio, min_jobs, simulate as run_simulation, uncoded_baseline_load,
    DesignParams, JobId, LoadReport, SimConfig,
};

use crate::args::{CompareArgs, DesignArgs, Format, SimulateArgs, SweepArgs};

pub fn design(args: &DesignArgs, out: &mut dyn Write) -> anyhow::Result<bool> {
    let params = DesignParams::new(args.q, args.k).context("invalid design parameters")?;
    let design = build_design(&params);
    let verdict = design.validate();
    match args.format {
        Format::Json => {
            serde_json::to_writer_pretty(&mut *out, &design.dump())?;
            writeln!(out)?;
        }
        Format::Text | Format::Csv => {
            writeln!(out, "q={} k={} K={} J={}", params.q(), params.k(), params.servers(), params.jobs())?;
            writeln!(out, "blocks:")?;
            for b in design.blocks() {
                let pts: Vec<String> = b.points.iter().map(|j| j.0.to_string()).collect();
                writeln!(out, "  {} = B({},{}): {{{}}}", b.server, b.class, b.symbol, pts.join(", "))?;
            }
            writeln!(out, "classes:")?;
            for (i, class) in design.classes().iter().enumerate() {
                let members: Vec<String> = class.iter().map(ToString::to_string).collect();
                writeln!(out, "  P{}: {{{}}}", i + 1, members.join(", "))?;
            }
            writeln!(out, "owners:")?;
            for job in design.jobs() {
                let owners: Vec<String> = design.owners_of_job(job)?.iter().map(ToString::to_string).collect();
                writeln!(out, "  X({}) = {{{}}}", job.0, owners.join(", "))?;
            }
            match &verdict {
                Ok(()) => writeln!(out, "invariants: ok")?,
                Err(e) => writeln!(out, "invariants: FAILED ({e})")?,
            }
        }
    }
    if let Err(e) = &verdict {
        eprintln!("error: {e}");
    }
    Ok(verdict.is_ok())
}

fn write_json(path: &Path, value: &impl Serialize) -> anyhow::Result<()> {
    let mut w = BufWriter::new(File::create(path).with_context(|| format!("creating {}", path.display()))?);
    serde_json::to_writer_pretty(&mut w, value)?;
    writeln!(w)?;
    w.flush()?;
    Ok(())
}

fn write_json_lines<T: Serialize>(path: &Path, items: impl IntoIterator<Item = T>) -> anyhow::Result<()> {
    let mut w = BufWriter::new(File::create(path).with_context(|| format!("creating {}", path.display()))?);
    for item in items {
        serde_json::to_writer(&mut w, &item)?;
        writeln!(w)?;
    }
    w.flush()?;
    Ok(())
}

fn gamma_notice(gamma: usize) {
    if gamma == 1 {
        eprintln!("note: gamma=1 gives single-subfile batches; the protocol is unchanged");
    }
}

fn config(q: usize, k: usize, gamma: usize, value_bytes: Option<usize>, seed: u64) -> SimConfig {
    let mut cfg = SimConfig::new(q, k, gamma).with_seed(seed);
    if let Some(b) = value_bytes {
        cfg = cfg.with_value_bytes(b);
    }
    cfg
}

fn write_reports(out: &mut dyn Write, format: Format, reports: &[LoadReport]) -> anyhow::Result<()> {
    match format {
        Format::Json => {
            if let [single] = reports {
                serde_json::to_writer_pretty(&mut *out, single)?;
            } else {
                serde_json::to_writer_pretty(&mut *out, reports)?;
            }
            writeln!(out)?;
        }
        Format::Csv => {
            writeln!(out, "{CSV_HEADER}")?;
            for r in reports {
                writeln!(out, "{}", r.csv_row())?;
            }
        }
        Format::Text => {
            for (i, r) in reports.iter().enumerate() {
                if i > 0 {
                    writeln!(out)?;
                }
                write!(out, "{}", r.to_text())?;
            }
        }
    }
    Ok(())
}

pub fn simulate(args: &SimulateArgs, out: &mut dyn Write) -> anyhow::Result<bool> {
    gamma_notice(args.gamma);
    let mut cfg = config(args.q, args.k, args.gamma, args.value_bytes, args.seed);
    cfg.aggregator = args.aggregator.into();
    let sim = run_simulation(&cfg)?;

    if let Some(path) = &args.dump_design {
        write_json(path, &sim.design.dump())?;
    }
    if let Some(path) = &args.dump_placement {
        write_json(path, &sim.plan.dump())?;
    }
    if let Some(path) = &args.dump_log {
        write_json_lines(path, sim.shuffle.log())?;
    }
    if let Some(path) = &args.dump_corpus {
        write_json_lines(path, corpus_records(&sim.corpus)?)?;
    }

    write_reports(out, args.format, std::slice::from_ref(&sim.report))?;
    if !sim.correct() {
        let bad: Vec<String> = sim
            .reduced
            .iter()
            .filter(|(key, v)| sim.oracle.get(key) != Some(v))
            .map(|((f, JobId(j)), _)| format!("phi_{f}^({j})"))
            .collect();
        eprintln!("error: reduced output differs from the oracle for {}", bad.join(", "));
    }
    Ok(sim.correct())
}

pub fn sweep(args: &SweepArgs, out: &mut dyn Write) -> anyhow::Result<bool> {
    anyhow::ensure!(!args.seeds.is_empty(), "at least one seed is required");
    if args.gamma.contains(&1) {
        gamma_notice(1);
    }
    let mut reports = Vec::new();
    let mut ok = true;
    for &q in &args.q {
        for &k in &args.k {
            for &gamma in &args.gamma {
                let value_bytes = args.value_bytes.or_else(|| (k >= 2).then(|| default_value_bytes(k)));
                let mut row: Option<LoadReport> = None;
                let mut all_correct = true;
                for &seed in &args.seeds {
                    let mut cfg = config(q, k, gamma, value_bytes, seed);
                    cfg.aggregator = args.aggregator.into();
                    match run_simulation(&cfg) {
                        Ok(sim) => {
                            all_correct &= sim.correct();
                            row.get_or_insert(sim.report);
                        }
                        Err(e) => {
                            eprintln!("error: q={q} k={k} gamma={gamma} seed={seed}: {e}");
                            all_correct = false;
                            row = None;
                            break;
                        }
                    }
                }
                match row {
                    Some(mut r) => {
                        r.correct = all_correct;
                        ok &= all_correct;
                        reports.push(r);
                    }
                    None => ok = false,
                }
            }
        }
    }
    write_reports(out, args.format, &reports)?;
    Ok(ok)
}

#[derive(Debug, Serialize)]
struct CompareRow {
    #[serde(rename = "K")]
    servers: usize,
    k: usize,
    q: usize,
    #[serde(rename = "J_camr")]
    camr_jobs: String,
    #[serde(rename = "J_ccdc_min")]
    ccdc_jobs: String,
    #[serde(rename = "L_camr")]
    camr_load: String,
    #[serde(rename = "L_ccdc")]
    ccdc_load: String,
    #[serde(rename = "L_baseline")]
    baseline_load: String,
}

pub fn compare(args: &CompareArgs, out: &mut dyn Write) -> anyhow::Result<bool> {
    let servers = args.servers;
    let candidates: Vec<usize> = if args.k.is_empty() {
        (2..=servers / 2).filter(|k| servers % k == 0).collect()
    } else {
        args.k.clone()
    };
    let mut rows = Vec::new();
    let mut ok = true;
    for k in candidates {
        if k < 2 || servers % k != 0 || servers / k < 2 {
            eprintln!("note: skipping k={k}: need k >= 2 dividing K={servers} with K/k >= 2");
            continue;
        }
        let q = servers / k;
        let jobs = min_jobs(q, k)?;
        debug_assert_eq!(jobs.ccdc_min, binomial(servers, k));
        let camr = camr_loads(q, k)?.total;
        let mu = BigRational::new((k as i64 - 1).into(), (servers as i64).into());
        let ccdc = ccdc_load(&mu, servers)?;
        if camr != ccdc {
            eprintln!("error: k={k}: loads differ ({} vs {})", fmt_ratio(&camr), fmt_ratio(&ccdc));
            ok = false;
        }
        rows.push(CompareRow {
            servers,
            k,
            q,
            camr_jobs: jobs.camr.to_string(),
            ccdc_jobs: jobs.ccdc_min.to_string(),
            camr_load: fmt_ratio(&camr),
            ccdc_load: fmt_ratio(&ccdc),
            baseline_load: fmt_ratio(&uncoded_baseline_load(q, k)?),
        });
    }
    match args.format {
        Format::Json => {
            serde_json::to_writer_pretty(&mut *out, &rows)?;
            writeln!(out)?;
        }
        Format::Csv => {
            writeln!(out, "K,k,q,J_camr,J_ccdc_min,L_camr,L_ccdc,L_baseline")?;
            for r in &rows {
                writeln!(
                    out,
                    "{},{},{},{},{},{},{},{}",
                    r.servers, r.k, r.q, r.camr_jobs, r.ccdc_jobs, r.camr_load, r.ccdc_load, r.baseline_load
                )?;
            }
        }
        Format::Text => {
            writeln!(out, "K={servers}")?;
            let header = ["k", "q", "J_camr", "J_ccdc_min", "L_camr", "L_ccdc", "L_uncoded*"];
            let cells: Vec<[String; 7]> = rows
                .iter()
                .map(|r| {
                    [
                        r.k.to_string(),
                        r.q.to_string(),
                        r.camr_jobs.clone(),
                        r.ccdc_jobs.clone(),
                        r.camr_load.clone(),
                        r.ccdc_load.clone(),
                        r.baseline_load.clone(),
                    ]
                })
                .collect();
            let widths: Vec<usize> = (0..header.len())
                .map(|c| cells.iter().map(|row| row[c].len()).chain([header[c].len()]).max().unwrap_or(0))
                .collect();
            let line = |row: &[&str]| {
                row.iter()
                    .zip(&widths)
                    .map(|(cell, w)| format!("{cell:>w$}"))
                    .collect::<Vec<_>>()
                    .join("  ")
            };
            writeln!(out, "{}", line(&header))?;
            for row in &cells {
                let refs: Vec<&str> = row.iter().map(String::as_str).collect();
                writeln!(out, "{}", line(&refs))?;
            }
            writeln!(out, "* simulator-defined uncoded reference")?;
        }
    }
    Ok(ok)
}
