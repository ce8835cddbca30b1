use std::fs;

use anyhow::{bail, Context, Result};
use rgd_core::pipeline::{self, RunConfig};
use rgd_core::proxy::ProxyModel;
use rgd_core::sampler::Strategy;
use serde_json::json;

use crate::artifacts::{self as art, Layout};
use crate::config::{self, FlagOverrides};
use crate::manifest::{config_digest, Recorder};
use crate::{plot, Cli, Command, PlotKind, ProxyChoice, Which};

pub fn run(cli: Cli) -> Result<()> {
    let flags = FlagOverrides {
        seed: cli.global.seed,
        out: cli.global.out.clone(),
        workers: cli.global.workers,
        strategy: cli.global.strategy.clone(),
    };
    let env = config::env_overrides(std::env::vars());
    let cfg = config::resolve(cli.global.config.as_deref(), &env, &flags)?;
    let layout = Layout::new(&cfg.out);
    fs::create_dir_all(&layout.root).with_context(|| format!("cannot create {}", layout.root.display()))?;
    match cli.command {
        Command::GenData => gen_data(&cfg, &layout),
        Command::Train { which, resume, steps } => train(&cfg, &layout, which, resume, steps),
        Command::Refine { freeze_alpha } => refine(cfg, &layout, freeze_alpha),
        Command::Sample { group, proxy } => sample(&cfg, &layout, group, proxy),
        Command::Evaluate { candidates } => evaluate(&cfg, &layout, candidates),
        Command::Ablate => ablate(&cfg, &layout),
        Command::Plot { kind, baseline } => plot_cmd(&cfg, &layout, kind, &baseline),
    }
}

fn gen_data(cfg: &RunConfig, layout: &Layout) -> Result<()> {
    let mut rec = Recorder::new("gen-data", cfg);
    let ds = pipeline::stage_dataset(cfg)?;
    rec.phase("generate");
    ds.save(&layout.dataset())?;
    rec.outputs_in(&layout.dataset())?;
    rec.phase("write");
    eprintln!(
        "dataset: {} × {}, normalized max {:.4} (cap {})",
        ds.len(),
        ds.dim(),
        ds.normalized_max()?,
        cfg.task.cap
    );
    rec.finish()?;
    Ok(())
}

fn train(cfg: &RunConfig, layout: &Layout, which: Which, resume: bool, steps: Option<usize>) -> Result<()> {
    let name = match which {
        Which::Proxy => "proxy",
        Which::Diffusion => "diffusion",
    };
    let mut rec = Recorder::new(&format!("train_{name}"), cfg);
    let ds = art::load_dataset(layout)?;
    rec.inputs_in(&layout.dataset())?;
    let dir = match which {
        Which::Proxy => layout.proxy(),
        Which::Diffusion => layout.diffusion(),
    };
    if resume {
        rec.inputs_in(&dir)?;
    }
    let losses_path = layout.loss_csv(name);
    match which {
        Which::Diffusion => {
            let steps = steps.unwrap_or(cfg.diffusion.train.steps);
            let prior = if resume {
                let (net, adam) = art::load_score(&dir)?;
                let adam = adam.context("diffusion checkpoint has no optimizer state to resume from")?;
                Some((net, adam))
            } else {
                None
            };
            rec.phase("load");
            let t = pipeline::stage_train_diffusion(cfg, &ds, prior, steps)?;
            rec.phase("train");
            art::save_score(&dir, &t.model, cfg.seed, json!({ "steps": t.adam.step }), &t.adam)?;
            art::write_losses(&losses_path, &t.losses, resume)?;
            eprintln!(
                "diffusion: {} steps total, last loss {:.5}",
                t.adam.step,
                last_loss(&t.losses)
            );
        }
        Which::Proxy => {
            let steps = steps.unwrap_or(cfg.proxy.train.steps);
            let prior = if resume {
                let (m, adam) = art::load_proxy(&dir)?;
                let adam = adam.context("proxy checkpoint has no optimizer state to resume from")?;
                Some((m, adam))
            } else {
                None
            };
            rec.phase("load");
            let t = pipeline::stage_train_proxy(cfg, &ds, prior, steps)?;
            rec.phase("train");
            art::save_proxy(&dir, &t.model, cfg.seed, json!({ "steps": t.adam.step }), Some(&t.adam))?;
            art::write_losses(&losses_path, &t.losses, resume)?;
            eprintln!(
                "proxy: {} steps total, last loss {:.5}",
                t.adam.step,
                last_loss(&t.losses)
            );
        }
    }
    rec.arg("resume", resume);
    rec.outputs_in(&dir)?;
    rec.output(&losses_path)?;
    rec.phase("write");
    rec.finish()?;
    Ok(())
}

fn last_loss(l: &[(u64, f64)]) -> f64 {
    l.last().map_or(f64::NAN, |x| x.1)
}

fn refine(mut cfg: RunConfig, layout: &Layout, freeze_alpha: Option<f64>) -> Result<()> {
    if let Some(a) = freeze_alpha {
        cfg.refinement.frozen_alpha = Some(a);
        cfg.validate()?;
    }
    let mut rec = Recorder::new("refine", &cfg);
    let ds = art::load_dataset(layout)?;
    let (score, _) = art::load_score(&layout.diffusion())?;
    let (proxy, _) = art::load_proxy(&layout.proxy())?;
    for d in [layout.dataset(), layout.diffusion(), layout.proxy()] {
        rec.inputs_in(&d)?;
    }
    rec.phase("load");
    let report = pipeline::stage_refine(&cfg, &ds, &score, &proxy)?;
    rec.phase("refine");
    let out = &report.outcome;
    art::save_proxy(
        &layout.refined(),
        &out.proxy,
        cfg.seed,
        json!({ "refine_steps": cfg.refinement.steps, "final_alpha": out.alpha.alpha() }),
        Some(&out.adam),
    )?;
    let alpha_csv = layout.file("alpha.csv");
    let adv_csv = layout.file("adversarial.csv");
    art::write_alpha(&alpha_csv, &out.trace)?;
    art::write_adversarial(&adv_csv, &report.rows)?;
    rec.arg("ode_steps", cfg.refinement.ode.ode_steps);
    rec.arg("mc_samples", cfg.refinement.mc_samples);
    rec.arg("ode_solves", report.ode_solves);
    rec.arg("adversarial_rows", report.rows.len());
    rec.arg("adversarial_fallback", report.adversarial.fallback);
    rec.outputs_in(&layout.refined())?;
    rec.output(&alpha_csv)?;
    rec.output(&adv_csv)?;
    rec.phase("write");
    let (before, after) = report.mean_abs_error();
    eprintln!(
        "refined: α = {:.4}, mean |proxy − oracle| {before:.3} → {after:.3} over {} designs",
        out.alpha.alpha(),
        report.rows.len()
    );
    rec.finish()?;
    Ok(())
}

fn pick_proxy(layout: &Layout, choice: ProxyChoice) -> Result<(ProxyModel, std::path::PathBuf)> {
    let refined = layout.refined();
    let dir = match choice {
        ProxyChoice::Refined => refined,
        ProxyChoice::Unrefined => layout.proxy(),
        ProxyChoice::Auto if refined.join("manifest.json").exists() => refined,
        ProxyChoice::Auto => layout.proxy(),
    };
    Ok((art::load_proxy(&dir)?.0, dir))
}

fn sample(cfg: &RunConfig, layout: &Layout, group: u64, choice: ProxyChoice) -> Result<()> {
    let strategy = cfg.strategy()?;
    let name = strategy.name();
    let mut rec = Recorder::new(&format!("sample_{name}"), cfg);
    let ds = art::load_dataset(layout)?;
    let (score, _) = art::load_score(&layout.diffusion())?;
    let (proxy, proxy_dir) = pick_proxy(layout, choice)?;
    for d in [layout.dataset(), layout.diffusion(), proxy_dir.clone()] {
        rec.inputs_in(&d)?;
    }
    rec.arg("group", group);
    rec.arg("proxy", proxy_dir.display());
    rec.phase("load");
    let sampler = pipeline::sampler_config(cfg, &ds, strategy)?;
    let run = pipeline::stage_sample(cfg, &ds, &score, &proxy, &sampler, group)?;
    rec.phase("sample");
    let failures = run.batch.failures();
    for (i, msg) in &failures {
        eprintln!("chain {i} failed: {msg}");
    }
    let ok: Vec<_> = run
        .batch
        .chains
        .iter()
        .enumerate()
        .filter_map(|(i, c)| c.as_ref().ok().map(|(cand, st)| (i, cand, st)))
        .collect();
    let cand_path = layout.candidates(name);
    let omega_path = layout.omega(name);
    let cands: Vec<_> = ok.iter().map(|(i, c, _)| (*i, *c)).collect();
    let states: Vec<_> = ok.iter().map(|(i, _, s)| (*i, *s)).collect();
    art::write_candidates(&cand_path, &cands, &run.designs)?;
    art::write_omega(&omega_path, &states)?;
    rec.arg("failed_chains", failures.len());
    rec.output(&cand_path)?;
    rec.output(&omega_path)?;
    rec.phase("write");
    eprintln!("{name}: {} of {} chains succeeded", ok.len(), run.batch.chains.len());
    rec.finish()?;
    Ok(())
}

fn evaluate(cfg: &RunConfig, layout: &Layout, candidates: Option<std::path::PathBuf>) -> Result<()> {
    let name = cfg.strategy()?.name();
    let mut rec = Recorder::new(&format!("evaluate_{name}"), cfg);
    let ds = art::load_dataset(layout)?;
    let path = candidates.unwrap_or_else(|| layout.candidates(name));
    if !path.exists() {
        bail!("no candidates at {}; run `sample` first", path.display());
    }
    let designs = art::read_candidates(&path)?;
    rec.inputs_in(&layout.dataset())?;
    rec.input(&path)?;
    rec.phase("load");
    let digest = config_digest(cfg);
    let report = pipeline::stage_evaluate(cfg, &ds, &designs, &digest)?;
    rec.phase("evaluate");
    let (json_path, csv_path) = (layout.eval_json(name), layout.eval_csv(name));
    art::write_eval(&json_path, &csv_path, &report)?;
    rec.output(&json_path)?;
    rec.output(&csv_path)?;
    rec.phase("write");
    println!(
        "{name}: 100th percentile {:.4}, 50th percentile {:.4}",
        report.max, report.median
    );
    rec.finish()?;
    Ok(())
}

fn ablate(cfg: &RunConfig, layout: &Layout) -> Result<()> {
    let mut rec = Recorder::new("ablate", cfg);
    let ds = art::load_dataset(layout)?;
    let (score, _) = art::load_score(&layout.diffusion())?;
    let (unrefined, _) = art::load_proxy(&layout.proxy())?;
    let (refined, _) =
        art::load_proxy(&layout.refined()).context("ablation needs a refined proxy; run `refine` first")?;
    for d in [layout.dataset(), layout.diffusion(), layout.proxy(), layout.refined()] {
        rec.inputs_in(&d)?;
    }
    rec.phase("load");
    let rows = pipeline::run_ablation(cfg, &ds, &score, &unrefined, &refined)?;
    rec.phase("ablate");
    let path = layout.file("ablation.csv");
    art::write_ablation(&path, &rows)?;
    rec.output(&path)?;
    rec.phase("write");
    let failed = rows.iter().filter(|r| r.error.is_some()).count();
    eprintln!("ablation: {} rows, {failed} failed", rows.len());
    rec.finish()?;
    Ok(())
}

fn plot_cmd(cfg: &RunConfig, layout: &Layout, kind: PlotKind, baseline: &str) -> Result<()> {
    let guided = cfg.strategy()?.name();
    match kind {
        PlotKind::Fig1 => {
            let mut rec = Recorder::new("plot_fig1", cfg);
            let ds = art::load_dataset(layout)?;
            if ds.dim() != 2 {
                bail!(
                    "fig1 needs a two-dimensional task, dataset has {} coordinates",
                    ds.dim()
                );
            }
            let base_name = Strategy::parse(baseline)?.name();
            let (bp, gp) = (layout.candidates(base_name), layout.candidates(guided));
            for p in [&bp, &gp] {
                if !p.exists() {
                    bail!("missing {}; run `sample` for that strategy first", p.display());
                }
            }
            let base = art::read_candidates(&bp)?;
            let guided_pts = art::read_candidates(&gp)?;
            rec.inputs_in(&layout.dataset())?;
            rec.input(&bp)?;
            rec.input(&gp)?;
            let initial: Vec<Vec<f64>> = (0..ds.len()).map(|i| ds.row(i).to_vec()).collect();
            let task = cfg.task();
            let svg = plot::fig1(|x| task.oracle(x), task.lo, task.hi, &initial, &base, &guided_pts)?;
            let out = layout.file("fig1.svg");
            fs::write(&out, svg)?;
            rec.output(&out)?;
            rec.phase("plot");
            rec.finish()?;
        }
        PlotKind::Fig4 => {
            let mut rec = Recorder::new("plot_fig4", cfg);
            let path = layout.omega(guided);
            if !path.exists() {
                bail!("missing {}; run `sample` first", path.display());
            }
            let traj = art::read_omega(&path)?;
            rec.input(&path)?;
            let svg = plot::fig4(&traj, cfg.sampler.omega0)?;
            let out = layout.file("fig4.svg");
            fs::write(&out, svg)?;
            rec.output(&out)?;
            rec.phase("plot");
            rec.finish()?;
        }
    }
    Ok(())
}
