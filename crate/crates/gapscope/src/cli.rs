//! Command-line front end: config documents, subcommands and run artifacts.

use crate::error::{Error, Result};
use crate::gap_bounds::{self, gap_report};
use crate::ifs_core::{
    j_extremes, make_gauss, make_linear, make_linear_from, validate_model, Branch, BranchMap, IfsModel, Interval,
    Observable,
};
use crate::normal_form::{self, BiWord, ChiSpec, TestFunction};
use crate::phase_space::captivity_check;
use crate::pressure::{constrained_pressure, hausdorff_dimension, pressure_beta, topological_entropy};
use crate::resonances::{self, Amplitude, Operator, ZetaCheck};
use crate::par;
use clap::{Parser, Subcommand};
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};
use sha2::{Digest, Sha256};
use std::path::{Path, PathBuf};
use std::time::Instant;

pub const FORMAT_VERSION: u32 = 1;

#[derive(Debug, Clone, Deserialize, Serialize)]
#[serde(tag = "type", rename_all = "kebab-case", deny_unknown_fields)]
pub enum ModelSpec {
    Linear { intervals: Vec<[f64; 2]> },
    Gauss { n: usize },
    FromDeltaOmega { delta: f64, omega: f64 },
    Custom { intervals: Vec<[f64; 2]>, branches: Vec<BranchSpec> },
}

#[derive(Debug, Clone, Deserialize, Serialize)]
pub struct BranchSpec {
    /// 1-based symbols.
    pub source: usize,
    pub target: usize,
    #[serde(flatten)]
    pub map: MapSpec,
}

#[derive(Debug, Clone, Deserialize, Serialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum MapSpec {
    Affine { slope: f64, offset: f64 },
    Mobius { a: f64, b: f64, c: f64, d: f64 },
    Expr { expr: String },
}

#[derive(Debug, Clone, Default, Deserialize, Serialize)]
#[serde(tag = "type", rename_all = "kebab-case", deny_unknown_fields)]
pub enum TauSpec {
    #[default]
    Zero,
    LinearSlopes { slopes: Vec<f64> },
    #[serde(rename = "minus-J")]
    MinusJ,
    Expression { expr: String },
}

#[derive(Debug, Clone, Default, Deserialize, Serialize)]
#[serde(tag = "type", rename_all = "kebab-case", deny_unknown_fields)]
pub enum PotentialSpec {
    #[default]
    Zero,
    /// V = (1 − a)J
    Proportional { a: f64 },
    Constant { value: f64 },
    Expression { expr: String },
}

#[derive(Debug, Clone, Deserialize, Serialize)]
#[serde(default, deny_unknown_fields)]
pub struct Numerics {
    pub grid_density: usize,
    pub amplitude: Amplitude,
    pub captivity_words: usize,
    pub captivity_samples: usize,
    pub normalform_samples: usize,
}

impl Default for Numerics {
    fn default() -> Numerics {
        Numerics {
            grid_density: 257,
            amplitude: Amplitude::Adjoint,
            captivity_words: 6,
            captivity_samples: 16,
            normalform_samples: 33,
        }
    }
}

#[derive(Debug, Clone, Deserialize, Serialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub model: ModelSpec,
    #[serde(default)]
    pub tau: TauSpec,
    #[serde(default)]
    pub potential: PotentialSpec,
    #[serde(default)]
    pub numerics: Numerics,
}

fn interval_list(iv: &[[f64; 2]]) -> Vec<Interval> {
    iv.iter().map(|p| Interval::new(p[0], p[1])).collect()
}

impl RunConfig {
    pub fn from_json(text: &str) -> Result<RunConfig> {
        serde_json::from_str(text).map_err(|e| Error::Config(e.to_string()))
    }

    /// Builds the model and runs validation.
    pub fn build(&self) -> Result<IfsModel> {
        let model = match &self.model {
            ModelSpec::Linear { intervals } => make_linear(&interval_list(intervals))?,
            ModelSpec::Gauss { n } => make_gauss(*n)?,
            ModelSpec::FromDeltaOmega { delta, omega } => make_linear_from(*delta, *omega)?,
            ModelSpec::Custom { intervals, branches } => {
                let n = intervals.len();
                let mut adjacency = vec![vec![false; n]; n];
                let mut out = Vec::with_capacity(branches.len());
                for b in branches {
                    if b.source == 0 || b.target == 0 || b.source > n || b.target > n {
                        return Err(Error::Config(format!("branch ({},{}) out of range", b.source, b.target)));
                    }
                    let map = match &b.map {
                        MapSpec::Affine { slope, offset } => BranchMap::Affine { slope: *slope, offset: *offset },
                        MapSpec::Mobius { a, b, c, d } => BranchMap::Mobius { a: *a, b: *b, c: *c, d: *d },
                        MapSpec::Expr { expr } => BranchMap::expression(expr)?,
                    };
                    adjacency[b.source - 1][b.target - 1] = true;
                    out.push(Branch { source: b.source - 1, target: b.target - 1, map, sign: 1.0 });
                }
                IfsModel::new(interval_list(intervals), adjacency, out)?
            }
        };
        let n = model.n_symbols();
        let tau = match &self.tau {
            TauSpec::Zero => Observable::zero(),
            TauSpec::LinearSlopes { slopes } => {
                if slopes.len() != n {
                    return Err(Error::Config(format!("{} tau slopes for {n} intervals", slopes.len())));
                }
                Observable::slopes(slopes.clone())
            }
            TauSpec::MinusJ => Observable::jacobian(-1.0),
            TauSpec::Expression { expr } => Observable::expression(expr)?,
        };
        let potential = match &self.potential {
            PotentialSpec::Zero => Observable::zero(),
            PotentialSpec::Proportional { a } => Observable::jacobian(1.0 - a),
            PotentialSpec::Constant { value } => Observable::constant(*value),
            PotentialSpec::Expression { expr } => Observable::expression(expr)?,
        };
        let model = model.with_tau(tau).with_potential(potential);
        validate_model(&model, self.numerics.grid_density)?;
        Ok(model)
    }
}

#[derive(Debug, Parser)]
#[command(name = "gapscope", version, about = "Pressure, gap bounds and resonances of open interval maps")]
pub struct Cli {
    /// JSON model config.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Output directory for artifacts.
    #[arg(long, global = true, default_value = "gapscope-out")]
    pub out: PathBuf,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Check the model and print diagnostics.
    Validate,
    /// P(β) = Pr(−βJ) on a grid.
    Pressure {
        #[arg(long, default_value_t = 0.0, allow_negative_numbers = true)]
        beta_min: f64,
        #[arg(long, default_value_t = 1.0, allow_negative_numbers = true)]
        beta_max: f64,
        #[arg(long, default_value_t = 21)]
        steps: usize,
    },
    /// Bowen dimension and topological entropy.
    Dimension,
    /// Topological entropy.
    Entropy,
    /// Spectral-gap bounds; --a replaces the potential by (1 − a)J.
    Bounds {
        #[arg(long, allow_negative_numbers = true)]
        a: Option<f64>,
    },
    /// γ(J_c) on a grid.
    GammaCurve {
        #[arg(long, allow_negative_numbers = true)]
        jc_min: Option<f64>,
        #[arg(long, allow_negative_numbers = true)]
        jc_max: Option<f64>,
        #[arg(long, default_value_t = 200)]
        steps: usize,
    },
    /// Best-bound labels over a (δ, ω) grid; no config needed.
    PhaseDiagram {
        #[arg(long, default_value_t = 0.5, allow_negative_numbers = true)]
        a: f64,
        /// W x H cells
        #[arg(long, default_value = "40x40")]
        grid: String,
    },
    /// Resonances at one ℏ (inf for no phase).
    Resonances {
        #[arg(long)]
        hbar: f64,
        #[arg(long, default_value = "matrix")]
        method: String,
        /// Zeta order N or collocation points per interval.
        #[arg(long, default_value_t = 30)]
        order: usize,
    },
    /// log r_s over a 1/ℏ grid.
    Sweep {
        #[arg(long, default_value_t = 1.0)]
        inv_hbar_min: f64,
        #[arg(long, default_value_t = 200.0)]
        inv_hbar_max: f64,
        #[arg(long, default_value_t = 101)]
        steps: usize,
        #[arg(long, default_value_t = 30)]
        order: usize,
        /// Recompute every k-th point with the zeta method (0 = never).
        #[arg(long, default_value_t = 0)]
        zeta_every: usize,
        #[arg(long, default_value_t = 20)]
        zeta_order: usize,
    },
    /// Sampled minimal-captivity test.
    Captivity {
        #[arg(long, default_value_t = 0.05)]
        epsilon: f64,
    },
    /// Constrained word sum against the Legendre prediction.
    Ld {
        /// Observable: J, -J, V, tau, zero, const:c, slopes:a,b,…, or an expression in x.
        #[arg(long, default_value = "J")]
        f: String,
        #[arg(long, default_value = "zero")]
        g: String,
        #[arg(long, allow_negative_numbers = true)]
        ta: f64,
        #[arg(long, allow_negative_numbers = true)]
        tb: f64,
        #[arg(long, default_value_t = 12)]
        n: usize,
    },
    /// Υ_w and H_w samples for a word (1-based letters, comma separated).
    Normalform {
        #[arg(long)]
        word: String,
        #[arg(long, default_value_t = 40)]
        order: usize,
        #[arg(long, default_value_t = 0.1)]
        hbar: f64,
    },
    /// Dilation-expansion residuals over a λ grid; no config needed.
    Dilation {
        #[arg(long, default_value_t = 0)]
        d: usize,
        #[arg(long, default_value_t = 2.0)]
        m: f64,
        #[arg(long, default_value_t = 0.01)]
        hbar: f64,
        #[arg(long, default_value_t = 2.0)]
        lambda_min: f64,
        #[arg(long, default_value_t = 8.0)]
        lambda_max: f64,
        #[arg(long, default_value_t = 13)]
        steps: usize,
    },
}

impl Command {
    pub fn name(&self) -> &'static str {
        match self {
            Command::Validate => "validate",
            Command::Pressure { .. } => "pressure",
            Command::Dimension => "dimension",
            Command::Entropy => "entropy",
            Command::Bounds { .. } => "bounds",
            Command::GammaCurve { .. } => "gamma-curve",
            Command::PhaseDiagram { .. } => "phase-diagram",
            Command::Resonances { .. } => "resonances",
            Command::Sweep { .. } => "sweep",
            Command::Captivity { .. } => "captivity",
            Command::Ld { .. } => "ld",
            Command::Normalform { .. } => "normalform",
            Command::Dilation { .. } => "dilation",
        }
    }

    fn needs_model(&self) -> bool {
        !matches!(self, Command::PhaseDiagram { .. } | Command::Dilation { .. })
    }
}

/// 17 significant digits, fixed format.
pub fn fmt_f64(x: f64) -> String {
    if x.is_nan() {
        "nan".into()
    } else if x.is_infinite() {
        if x > 0.0 { "inf".into() } else { "-inf".into() }
    } else {
        format!("{x:.16e}")
    }
}

pub fn hex_sha256(bytes: &[u8]) -> String {
    Sha256::digest(bytes).iter().map(|b| format!("{b:02x}")).collect()
}

/// Parses an observable flag against a model.
pub fn parse_observable(src: &str, model: &IfsModel) -> Result<Observable> {
    let s = src.trim();
    match s {
        "J" => return Ok(Observable::jacobian(1.0)),
        "-J" => return Ok(Observable::jacobian(-1.0)),
        "V" => return Ok(model.potential.clone()),
        "tau" => return Ok(model.tau.clone()),
        "zero" | "0" => return Ok(Observable::zero()),
        _ => {}
    }
    if let Some(c) = s.strip_prefix("const:") {
        let v = c.trim().parse::<f64>().map_err(|e| Error::Config(format!("const:{c}: {e}")))?;
        return Ok(Observable::constant(v));
    }
    if let Some(list) = s.strip_prefix("slopes:") {
        let v = list
            .split(',')
            .map(|t| t.trim().parse::<f64>().map_err(|e| Error::Config(format!("slopes:{list}: {e}"))))
            .collect::<Result<Vec<f64>>>()?;
        if v.len() != model.n_symbols() {
            return Err(Error::Config(format!("{} slopes for {} intervals", v.len(), model.n_symbols())));
        }
        return Ok(Observable::slopes(v));
    }
    Observable::expression(s)
}

/// 1-based comma-separated letters → 0-based.
pub fn parse_word(src: &str) -> Result<Vec<usize>> {
    src.split(',')
        .map(|t| match t.trim().parse::<usize>() {
            Ok(k) if k >= 1 => Ok(k - 1),
            _ => Err(Error::Config(format!("bad letter '{t}' in word '{src}'"))),
        })
        .collect()
}

fn linspace(a: f64, b: f64, n: usize) -> Vec<f64> {
    if n <= 1 {
        return vec![a];
    }
    (0..n).map(|k| a + (b - a) * k as f64 / (n - 1) as f64).collect()
}

/// One output file held in memory until the run succeeds.
pub struct Artifact {
    pub name: String,
    pub bytes: Vec<u8>,
}

fn csv_artifact(name: &str, header: &[&str], rows: Vec<Vec<String>>) -> Result<Artifact> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(header).map_err(|e| Error::Io(e.to_string()))?;
    for r in rows {
        w.write_record(&r).map_err(|e| Error::Io(e.to_string()))?;
    }
    let bytes = w.into_inner().map_err(|e| Error::Io(e.to_string()))?;
    Ok(Artifact { name: name.into(), bytes })
}

fn json_artifact(name: &str, command: &str, result: Value) -> Result<Artifact> {
    let doc = json!({ "format_version": FORMAT_VERSION, "command": command, "result": result });
    let mut bytes = serde_json::to_vec_pretty(&doc).map_err(|e| Error::Io(e.to_string()))?;
    bytes.push(b'\n');
    Ok(Artifact { name: name.into(), bytes })
}

fn to_value<T: Serialize>(v: &T) -> Result<Value> {
    serde_json::to_value(v).map_err(|e| Error::Io(e.to_string()))
}

/// Output of a command: artifacts plus the summary printed on stdout.
pub struct Outcome {
    pub artifacts: Vec<Artifact>,
    pub summary: Value,
}

fn single_json(command: &str, v: Value) -> Result<Outcome> {
    Ok(Outcome { artifacts: vec![json_artifact(&format!("{command}.json"), command, v.clone())?], summary: v })
}

/// Runs a command against an optional model, without touching the disk.
pub fn execute(command: &Command, cfg: Option<&RunConfig>) -> Result<Outcome> {
    let name = command.name();
    let model = match (command.needs_model(), cfg) {
        (true, Some(c)) => Some(c.build()?),
        (true, None) => return Err(Error::Config(format!("`{name}` needs --config"))),
        _ => None,
    };
    let numerics = cfg.map(|c| c.numerics.clone()).unwrap_or_default();
    let m = || model.as_ref().expect("model built above");
    match command {
        Command::Validate => {
            let d = validate_model(m(), numerics.grid_density)?;
            single_json(name, json!({ "label": m().label, "diagnostics": to_value(&d)? }))
        }
        Command::Pressure { beta_min, beta_max, steps } => {
            let betas = linspace(*beta_min, *beta_max, *steps);
            let vals = betas.iter().map(|&b| pressure_beta(m(), b)).collect::<Result<Vec<f64>>>()?;
            let rows = betas.iter().zip(&vals).map(|(b, p)| vec![fmt_f64(*b), fmt_f64(*p)]).collect();
            let art = csv_artifact("pressure.csv", &["beta", "pressure"], rows)?;
            Ok(Outcome { artifacts: vec![art], summary: json!({ "points": betas.len() }) })
        }
        Command::Dimension => {
            let delta = hausdorff_dimension(m())?;
            let h_top = topological_entropy(m())?;
            single_json(name, json!({ "delta": delta, "h_top": h_top }))
        }
        Command::Entropy => single_json(name, json!({ "h_top": topological_entropy(m())? })),
        Command::Bounds { a } => {
            let model = match a {
                Some(a) => m().clone().with_potential(Observable::jacobian(1.0 - a)),
                None => m().clone(),
            };
            let r = gap_report(&model)?;
            single_json(name, to_value(&r)?)
        }
        Command::GammaCurve { jc_min, jc_max, steps } => {
            let (lo, hi) = j_extremes(m(), gap_bounds::extreme_period(m()))?;
            let c = gap_bounds::gamma_curve(m(), jc_min.unwrap_or(lo), jc_max.unwrap_or(hi), *steps)?;
            let rows = c.jc_grid.iter().zip(&c.gamma_of_jc).map(|(j, g)| vec![fmt_f64(*j), fmt_f64(*g)]).collect();
            let csv = csv_artifact("gamma_curve.csv", &["jc", "gamma"], rows)?;
            let extra = json!({ "j1_star": c.j1_star, "j2_star": c.j2_star, "v1": c.v1, "v2": c.v2 });
            let js = json_artifact("gamma_curve.json", name, extra.clone())?;
            Ok(Outcome { artifacts: vec![csv, js], summary: json!({ "j1_star": c.j1_star, "j2_star": c.j2_star }) })
        }
        Command::PhaseDiagram { a, grid } => {
            let (w, h) = grid
                .split_once(['x', 'X'])
                .and_then(|(w, h)| Some((w.trim().parse::<usize>().ok()?, h.trim().parse::<usize>().ok()?)))
                .filter(|(w, h)| *w > 0 && *h > 0)
                .ok_or_else(|| Error::Config(format!("grid '{grid}' is not WxH")))?;
            let deltas: Vec<f64> = (0..w).map(|k| (k as f64 + 0.5) / w as f64).collect();
            let omegas: Vec<f64> = (0..h).map(|k| (k as f64 + 1.0) / h as f64).collect();
            let pd = gap_bounds::classify(*a, &deltas, &omegas);
            let rows = pd
                .cells
                .iter()
                .map(|c| {
                    vec![
                        fmt_f64(c.delta),
                        fmt_f64(c.omega),
                        c.feasible.to_string(),
                        c.label.map_or("none", |b| b.label()).to_string(),
                        c.tie.to_string(),
                        fmt_f64(c.gamma_gibbs),
                        fmt_f64(c.gamma_sc),
                        fmt_f64(c.gamma_up),
                    ]
                })
                .collect();
            let header = ["delta", "omega", "feasible", "label", "tie", "gamma_gibbs", "gamma_sc", "gamma_up"];
            let art = csv_artifact("phase_diagram.csv", &header, rows)?;
            Ok(Outcome { artifacts: vec![art], summary: json!({ "cells": pd.cells.len(), "a": a }) })
        }
        Command::Resonances { hbar, method, order } => {
            let op = Operator::with_mode(m(), *hbar, numerics.amplitude);
            let set = match method.as_str() {
                "zeta" => resonances::resonances_zeta(&op, *order)?,
                "matrix" => resonances::resonances_matrix(&op, *order)?,
                other => return Err(Error::Config(format!("unknown method '{other}'"))),
            };
            let rows = set
                .eigenvalues
                .iter()
                .enumerate()
                .map(|(k, r)| {
                    vec![
                        (k + 1).to_string(),
                        fmt_f64(r.re),
                        fmt_f64(r.im),
                        fmt_f64(r.modulus),
                        r.trusted.to_string(),
                    ]
                })
                .collect();
            let csv = csv_artifact("resonances.csv", &["index", "re", "im", "modulus", "trusted"], rows)?;
            let summary = json!({
                "hbar": hbar,
                "method": set.method.label(),
                "order": set.order,
                "count": set.eigenvalues.len(),
                "spectral_radius": set.spectral_radius,
                "trust_radius": set.trust_radius,
            });
            let js = json_artifact("resonances.json", name, summary.clone())?;
            Ok(Outcome { artifacts: vec![csv, js], summary })
        }
        Command::Sweep { inv_hbar_min, inv_hbar_max, steps, order, zeta_every, zeta_order } => {
            let grid = linspace(*inv_hbar_min, *inv_hbar_max, *steps);
            let check = (*zeta_every > 0).then_some(ZetaCheck { every: *zeta_every, order: *zeta_order });
            let s = resonances::sweep(m(), numerics.amplitude, &grid, *order, check)?;
            let rows = s
                .rows()
                .map(|(k, l, n, meth)| vec![fmt_f64(k), fmt_f64(l), n.to_string(), meth.label().to_string()])
                .collect();
            let art = csv_artifact("sweep.csv", &["inv_hbar", "log_rs", "n_eigs", "method"], rows)?;
            Ok(Outcome { artifacts: vec![art], summary: json!({ "rows": s.inverse_hbar.len(), "order": order }) })
        }
        Command::Captivity { epsilon } => {
            let r = captivity_check(m(), *epsilon, numerics.captivity_words, numerics.captivity_samples)?;
            let art = json_artifact("captivity.json", name, to_value(&r)?)?;
            let summary = json!({ "passed": r.passed, "epsilon": r.epsilon, "min_branch_gap": r.min_branch_gap });
            Ok(Outcome { artifacts: vec![art], summary })
        }
        Command::Ld { f, g, ta, tb, n } => {
            let fo = parse_observable(f, m())?;
            let go = parse_observable(g, m())?;
            let r = constrained_pressure(m(), &fo, &go, (*ta, *tb), *n)?;
            single_json(name, json!({ "f": f, "g": g, "ta": ta, "tb": tb, "n": n, "sum": to_value(&r)? }))
        }
        Command::Normalform { word, order, hbar } => {
            let letters = parse_word(word)?;
            let w = BiWord::canonical(m(), &letters, order + 2)?;
            let d = normal_form::normal_form_data(m(), *hbar, &w, *order, numerics.normalform_samples)?;
            let art = json_artifact("normalform.json", name, to_value(&d)?)?;
            let summary = json!({
                "x_w": d.x_w,
                "upsilon_at_x_w": d.upsilon_at_x_w,
                "h_at_0": d.h_at_0,
                "h_prime_at_0": d.h_prime_at_0,
                "conjugation_residual": d.conjugation_residual,
            });
            Ok(Outcome { artifacts: vec![art], summary })
        }
        Command::Dilation { d, m: mm, hbar, lambda_min, lambda_max, steps } => {
            let lambdas = linspace(*lambda_min, *lambda_max, *steps);
            let chi = ChiSpec::default();
            let test = dilation_test_function();
            let rep = normal_form::dilation_check(*hbar, &lambdas, *d, *mm, &chi, &test)?;
            let rows = rep
                .lambda_grid
                .iter()
                .zip(&rep.residual_norms)
                .map(|(l, r)| vec![fmt_f64(*l), fmt_f64(*r)])
                .collect();
            let csv = csv_artifact("dilation.csv", &["lambda", "residual"], rows)?;
            let summary = json!({
                "hbar": hbar, "d": d, "m": mm,
                "fitted_slope": rep.fitted_slope,
                "predicted_slope": rep.predicted_slope,
                "chi0": to_value(&chi)?,
                "test_function": to_value(&test)?,
            });
            let js = json_artifact("dilation.json", name, summary.clone())?;
            Ok(Outcome { artifacts: vec![csv, js], summary })
        }
    }
}

/// Test function of the `dilation` command: Gaussian of width 0.04 centred at 0.1.
pub fn dilation_test_function() -> TestFunction {
    TestFunction::Gaussian { center: 0.1, width: 0.04 }
}

fn write_file(path: &Path, bytes: &[u8]) -> Result<()> {
    std::fs::write(path, bytes).map_err(|e| Error::Io(format!("{}: {e}", path.display())))
}

/// Writes artifacts and the manifest; returns the manifest.
pub fn write_run(cli: &Cli, config_bytes: Option<&[u8]>, out: &Outcome, seconds: f64) -> Result<Value> {
    std::fs::create_dir_all(&cli.out).map_err(|e| Error::Io(format!("{}: {e}", cli.out.display())))?;
    let mut files = Vec::new();
    for a in &out.artifacts {
        write_file(&cli.out.join(&a.name), &a.bytes)?;
        files.push(json!({
            "file": a.name,
            "sha256": hex_sha256(&a.bytes),
            "bytes": a.bytes.len(),
            "format_version": FORMAT_VERSION,
        }));
    }
    let name = cli.command.name();
    let manifest = json!({
        "format_version": FORMAT_VERSION,
        "command": name,
        "arguments": format!("{:?}", cli.command),
        "config": cli.config.as_ref().map(|p| p.display().to_string()),
        "config_sha256": config_bytes.map(hex_sha256),
        "versions": {
            "gapscope": env!("CARGO_PKG_VERSION"),
            "parallel_feature": cfg!(feature = "parallel"),
        },
        "parallel_mode": format!("{:?}", par::mode()),
        "threads": std::env::var("GAPSCOPE_THREADS").ok(),
        "timings": { "total_seconds": seconds },
        "outputs": files,
    });
    let mut bytes = serde_json::to_vec_pretty(&manifest).map_err(|e| Error::Io(e.to_string()))?;
    bytes.push(b'\n');
    write_file(&cli.out.join(format!("{name}.manifest.json")), &bytes)?;
    Ok(manifest)
}

/// Error document printed on stderr.
pub fn error_document(e: &Error) -> Value {
    json!({ "format_version": FORMAT_VERSION, "error": { "kind": e.kind(), "message": e.to_string() } })
}

fn run_inner(cli: &Cli) -> Result<Value> {
    if let Ok(t) = std::env::var("GAPSCOPE_THREADS") {
        let n = t.trim().parse::<usize>().map_err(|_| Error::Config(format!("GAPSCOPE_THREADS = '{t}'")))?;
        if n == 0 {
            return Err(Error::Config("GAPSCOPE_THREADS must be positive".into()));
        }
        par::init_threads(n);
    }
    let start = Instant::now();
    let config_bytes = match &cli.config {
        Some(p) => Some(std::fs::read(p).map_err(|e| Error::Io(format!("{}: {e}", p.display())))?),
        None => None,
    };
    let cfg = match &config_bytes {
        Some(b) => Some(RunConfig::from_json(
            std::str::from_utf8(b).map_err(|e| Error::Config(format!("config is not UTF-8: {e}")))?,
        )?),
        None => None,
    };
    let out = execute(&cli.command, cfg.as_ref())?;
    write_run(cli, config_bytes.as_deref(), &out, start.elapsed().as_secs_f64())?;
    Ok(out.summary)
}

/// Exit code 0 on success, 2 on any library error.
pub fn run(cli: &Cli) -> i32 {
    match run_inner(cli) {
        Ok(summary) => {
            println!("{}", serde_json::to_string_pretty(&summary).unwrap_or_default());
            0
        }
        Err(e) => {
            eprintln!("{}", error_document(&e));
            2
        }
    }
}
