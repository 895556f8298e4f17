//! Configuration-driven experiment runner.
//!
//! Parses a flat `key = value` config (one setting per line, `#` comments),
//! validates every key against a published schema, executes one of the
//! experiment pipelines, and writes three artifacts to the output directory:
//! a CSV table (`<subcommand>.csv`), a structured-text summary with verdicts
//! and fitted slopes (`summary.txt`), and the fully resolved configuration
//! (`config.txt`) for reproducibility. Outputs are byte-identical for
//! identical config and seed, except for the `wallclock_ms` CSV column.
//!
//! Exit codes: 0 = all verdicts PASS, 2 = completed with FAIL verdicts,
//! 1 = configuration or runtime error.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::time::Instant;

use num_complex::Complex64;
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::discretization::{assemble, gram, NormSpec};
use crate::error::{Error, Result};
use crate::estimates::{
    best_constant, fit_slope, probe_lower_bound, rescale_check, EstimateForm, Verdict,
};
use crate::grid::LogGrid;
use crate::grushin::{block_scaling, pairing_check, tune_kernel};
use crate::indicial::{central_interval, indicial_roots, mellin_symbol_eval, EndTag};
use crate::model::{AngularMode, ModelParams, OperatorKind, Potential, SpectralParam};
use crate::solve::{lap_limit, BoundaryConditions};
use crate::symbols::{
    bracket, modified_commutator_complex, modified_commutator_complex_target,
    modified_commutator_real, modified_commutator_real_target, re_p_hat, re_p_tilde, weight,
    BracketPoint, SymbolExpr,
};

/// CSV schema version stamped into every table's header comment.
const CSV_SCHEMA: &str = "coniclab csv schema v1";

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Subcommand {
    Indicial,
    VerifySymbols,
    Sweep,
    Lap,
    RescaleCheck,
    Grushin,
    NormsSelftest,
}

impl Subcommand {
    fn parse(s: &str) -> Result<Self> {
        match s {
            "indicial" => Ok(Self::Indicial),
            "verify-symbols" => Ok(Self::VerifySymbols),
            "sweep" => Ok(Self::Sweep),
            "lap" => Ok(Self::Lap),
            "rescale-check" => Ok(Self::RescaleCheck),
            "grushin" => Ok(Self::Grushin),
            "norms-selftest" => Ok(Self::NormsSelftest),
            other => Err(Error::Config(format!(
                "unknown subcommand '{other}'; expected one of indicial, verify-symbols, \
                 sweep, lap, rescale-check, grushin, norms-selftest"
            ))),
        }
    }

    fn name(&self) -> &'static str {
        match self {
            Self::Indicial => "indicial",
            Self::VerifySymbols => "verify-symbols",
            Self::Sweep => "sweep",
            Self::Lap => "lap",
            Self::RescaleCheck => "rescale-check",
            Self::Grushin => "grushin",
            Self::NormsSelftest => "norms-selftest",
        }
    }
}

/// Published configuration schema: every accepted key with its meaning.
/// Unknown keys are rejected at parse time.
pub const CONFIG_SCHEMA: &[(&str, &str)] = &[
    ("dimension", "spatial dimension n (u32, >= 2)"),
    ("modes", "comma-separated spherical mode numbers k (u32 list)"),
    ("beta", "first-order coefficient beta (complex, a+bi)"),
    ("beta_prime", "zeroth-order coefficient beta' (complex, a+bi)"),
    ("gamma", "first-order coefficient gamma (complex, a+bi)"),
    ("varpi", "quadratic spectral coupling (f64)"),
    ("t_min", "log-radial grid start (f64)"),
    ("t_max", "log-radial grid end (f64)"),
    ("num_points", "grid point count (usize, >= 64)"),
    (
        "sigmas",
        "comma-separated spectral parameters, strictly decreasing (for lap: the epsilon list)",
    ),
    ("s", "Sobolev order s (u32)"),
    ("r", "resolved order r (f64; default s + l)"),
    ("l", "weight order l (f64)"),
    ("alpha", "weight exponent alpha (f64)"),
    ("form", "estimate form: thm-main | remark-b | normal0-rescaled"),
    ("out_dir", "output directory for the report files"),
    ("seed", "random seed (u64)"),
    ("workers", "worker pool size (0 = library default)"),
];

#[derive(Clone, Debug)]
pub struct RunConfig {
    pub subcommand: Subcommand,
    pub dimension: u32,
    pub modes: Vec<u32>,
    pub beta: Complex64,
    pub beta_prime: Complex64,
    pub gamma: Complex64,
    pub varpi: f64,
    pub t_min: f64,
    pub t_max: f64,
    pub num_points: usize,
    pub sigmas: Vec<f64>,
    pub s: u32,
    pub r: f64,
    pub l: f64,
    pub alpha: f64,
    pub form: EstimateForm,
    pub out_dir: PathBuf,
    pub seed: u64,
    pub workers: usize,
}

impl RunConfig {
    /// Per-subcommand defaults; any key may be overridden by config or flags.
    fn defaults(sub: Subcommand) -> Self {
        let mut cfg = Self {
            subcommand: sub,
            dimension: 3,
            modes: vec![0, 1, 2],
            beta: Complex64::new(0.0, 0.0),
            beta_prime: Complex64::new(0.0, 0.0),
            gamma: Complex64::new(0.0, 0.0),
            varpi: 0.0,
            t_min: -2.0,
            t_max: 10.0,
            num_points: 241,
            sigmas: vec![1e-1, 1e-2, 1e-3, 1e-4],
            s: 2,
            r: 1.25,
            l: -0.75,
            alpha: 0.0,
            form: EstimateForm::RemarkB,
            out_dir: PathBuf::from("runs").join(sub.name()),
            seed: 7,
            workers: 0,
        };
        match sub {
            Subcommand::Lap => {
                cfg.t_max = 4.0;
                cfg.num_points = 193;
                cfg.modes = vec![0];
                // epsilon list spanning two decades
                cfg.sigmas = vec![1e-1, 3.162e-2, 1e-2, 3.162e-3, 1e-3];
            }
            Subcommand::RescaleCheck => {
                cfg.t_max = 16.0;
                cfg.num_points = 361;
                cfg.sigmas = Vec::new(); // filled from the grid step below
            }
            Subcommand::Grushin => {
                cfg.t_min = -4.0;
                cfg.t_max = 9.0;
                cfg.num_points = 261;
                cfg.modes = vec![0];
                cfg.sigmas = vec![3e-5, 1e-5, 3e-6, 1e-6, 3e-7];
            }
            _ => {}
        }
        cfg
    }

    fn grid(&self) -> Result<LogGrid> {
        LogGrid::new(self.t_min, self.t_max, self.num_points)
    }

    fn params(&self) -> Result<ModelParams> {
        ModelParams::new(
            self.dimension,
            self.beta,
            self.beta_prime,
            self.gamma,
            self.varpi,
            Potential::zero(),
        )
    }

    /// All schema keys with their resolved values, for the config artifact.
    fn resolved(&self) -> BTreeMap<&'static str, String> {
        let mut m = BTreeMap::new();
        m.insert("dimension", self.dimension.to_string());
        m.insert(
            "modes",
            self.modes
                .iter()
                .map(|k| k.to_string())
                .collect::<Vec<_>>()
                .join(","),
        );
        m.insert("beta", fmt_complex(self.beta));
        m.insert("beta_prime", fmt_complex(self.beta_prime));
        m.insert("gamma", fmt_complex(self.gamma));
        m.insert("varpi", fmt_f64(self.varpi));
        m.insert("t_min", fmt_f64(self.t_min));
        m.insert("t_max", fmt_f64(self.t_max));
        m.insert("num_points", self.num_points.to_string());
        m.insert(
            "sigmas",
            self.sigmas
                .iter()
                .map(|&s| fmt_f64(s))
                .collect::<Vec<_>>()
                .join(","),
        );
        m.insert("s", self.s.to_string());
        m.insert("r", fmt_f64(self.r));
        m.insert("l", fmt_f64(self.l));
        m.insert("alpha", fmt_f64(self.alpha));
        m.insert(
            "form",
            match self.form {
                EstimateForm::ThmMain => "thm-main",
                EstimateForm::RemarkB => "remark-b",
                EstimateForm::Normal0Rescaled => "normal0-rescaled",
            }
            .to_string(),
        );
        m.insert("out_dir", self.out_dir.display().to_string());
        m.insert("seed", self.seed.to_string());
        m.insert("workers", self.workers.to_string());
        m
    }
}

fn parse_f64(key: &str, v: &str) -> Result<f64> {
    v.trim()
        .parse::<f64>()
        .map_err(|_| Error::Config(format!("key '{key}': '{v}' is not a number")))
}

/// Parses `a+bi` / `a-bi` / `a` / `bi` complex literals.
fn parse_complex(key: &str, v: &str) -> Result<Complex64> {
    let t = v.trim();
    let bad = || Error::Config(format!("key '{key}': '{v}' is not a complex a+bi literal"));
    if let Some(imag) = t.strip_suffix('i') {
        // split at the last +/- that is not a leading sign or exponent sign
        let bytes = imag.as_bytes();
        let mut split = None;
        for i in (1..bytes.len()).rev() {
            let c = bytes[i] as char;
            if (c == '+' || c == '-') && !matches!(bytes[i - 1] as char, 'e' | 'E') {
                split = Some(i);
                break;
            }
        }
        match split {
            Some(i) => {
                let re = imag[..i].parse::<f64>().map_err(|_| bad())?;
                let im_str = &imag[i..];
                let im = if im_str == "+" || im_str == "-" {
                    return Err(bad());
                } else {
                    im_str.parse::<f64>().map_err(|_| bad())?
                };
                Ok(Complex64::new(re, im))
            }
            None => {
                let im = imag.parse::<f64>().map_err(|_| bad())?;
                Ok(Complex64::new(0.0, im))
            }
        }
    } else {
        let re = t.parse::<f64>().map_err(|_| bad())?;
        Ok(Complex64::new(re, 0.0))
    }
}

fn parse_list<T, F: Fn(&str) -> Result<T>>(v: &str, f: F) -> Result<Vec<T>> {
    v.split(',')
        .map(|p| f(p.trim()))
        .collect::<Result<Vec<T>>>()
}

/// Parses the flat key=value config text, rejecting unknown keys.
pub fn parse_config_text(text: &str) -> Result<BTreeMap<String, String>> {
    let mut out = BTreeMap::new();
    for (lineno, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let (key, value) = line.split_once('=').ok_or_else(|| {
            Error::Config(format!("line {}: expected 'key = value'", lineno + 1))
        })?;
        let key = key.trim();
        if !CONFIG_SCHEMA.iter().any(|(k, _)| *k == key) {
            return Err(Error::Config(format!(
                "line {}: unknown key '{key}' (see the published schema)",
                lineno + 1
            )));
        }
        if out.insert(key.to_string(), value.trim().to_string()).is_some() {
            return Err(Error::Config(format!("line {}: duplicate key '{key}'", lineno + 1)));
        }
    }
    Ok(out)
}

fn apply_config(cfg: &mut RunConfig, kv: &BTreeMap<String, String>) -> Result<()> {
    let mut r_given = false;
    let mut l_given = false;
    for (key, v) in kv {
        match key.as_str() {
            "dimension" => {
                cfg.dimension = v
                    .parse()
                    .map_err(|_| Error::Config(format!("key 'dimension': '{v}' is not a u32")))?
            }
            "modes" => {
                cfg.modes = parse_list(v, |p| {
                    p.parse()
                        .map_err(|_| Error::Config(format!("key 'modes': '{p}' is not a u32")))
                })?
            }
            "beta" => cfg.beta = parse_complex(key, v)?,
            "beta_prime" => cfg.beta_prime = parse_complex(key, v)?,
            "gamma" => cfg.gamma = parse_complex(key, v)?,
            "varpi" => cfg.varpi = parse_f64(key, v)?,
            "t_min" => cfg.t_min = parse_f64(key, v)?,
            "t_max" => cfg.t_max = parse_f64(key, v)?,
            "num_points" => {
                cfg.num_points = v
                    .parse()
                    .map_err(|_| Error::Config(format!("key 'num_points': '{v}' is not a usize")))?
            }
            "sigmas" => cfg.sigmas = parse_list(v, |p| parse_f64("sigmas", p))?,
            "s" => {
                cfg.s = v
                    .parse()
                    .map_err(|_| Error::Config(format!("key 's': '{v}' is not a u32")))?
            }
            "r" => {
                cfg.r = parse_f64(key, v)?;
                r_given = true;
            }
            "l" => {
                cfg.l = parse_f64(key, v)?;
                l_given = true;
            }
            "alpha" => cfg.alpha = parse_f64(key, v)?,
            "form" => {
                cfg.form = match v.as_str() {
                    "thm-main" => EstimateForm::ThmMain,
                    "remark-b" => EstimateForm::RemarkB,
                    "normal0-rescaled" => EstimateForm::Normal0Rescaled,
                    other => {
                        return Err(Error::Config(format!(
                            "key 'form': unknown form '{other}'"
                        )))
                    }
                }
            }
            "out_dir" => cfg.out_dir = PathBuf::from(v),
            "seed" => {
                cfg.seed = v
                    .parse()
                    .map_err(|_| Error::Config(format!("key 'seed': '{v}' is not a u64")))?
            }
            "workers" => {
                cfg.workers = v
                    .parse()
                    .map_err(|_| Error::Config(format!("key 'workers': '{v}' is not a usize")))?
            }
            _ => unreachable!("schema-validated key"),
        }
    }
    // keep r at the b-Sobolev threshold r = s + l unless set explicitly
    if l_given && !r_given {
        cfg.r = cfg.s as f64 + cfg.l;
    }
    Ok(())
}

/// Shortest-roundtrip decimal with `.` separator (Rust's default Display).
fn fmt_f64(v: f64) -> String {
    if v == 0.0 {
        "0".to_string()
    } else if v.abs() < 1e-3 || v.abs() >= 1e7 {
        format!("{v:e}")
    } else {
        format!("{v}")
    }
}

/// `a+bi` literal; zero parts are dropped (`0.5i`, `-2`, `0`).
fn fmt_complex(z: Complex64) -> String {
    if z.im == 0.0 {
        fmt_f64(z.re)
    } else if z.re == 0.0 {
        format!("{}i", fmt_f64(z.im))
    } else if z.im < 0.0 {
        format!("{}-{}i", fmt_f64(z.re), fmt_f64(-z.im))
    } else {
        format!("{}+{}i", fmt_f64(z.re), fmt_f64(z.im))
    }
}

/// One experiment's outputs before they are written to disk.
struct ExperimentOutput {
    csv_columns: &'static str,
    csv_rows: Vec<String>,
    summary: Vec<String>,
    pass: bool,
}

fn write_reports(cfg: &RunConfig, out: &ExperimentOutput) -> Result<()> {
    std::fs::create_dir_all(&cfg.out_dir)?;
    let mut csv = String::new();
    writeln!(csv, "# {CSV_SCHEMA}").unwrap();
    writeln!(csv, "{}", out.csv_columns).unwrap();
    for row in &out.csv_rows {
        writeln!(csv, "{row}").unwrap();
    }
    std::fs::write(
        cfg.out_dir.join(format!("{}.csv", cfg.subcommand.name())),
        csv,
    )?;

    let mut summary = String::new();
    writeln!(summary, "subcommand: {}", cfg.subcommand.name()).unwrap();
    writeln!(
        summary,
        "verdict: {}",
        if out.pass { "PASS" } else { "FAIL" }
    )
    .unwrap();
    for line in &out.summary {
        writeln!(summary, "  {line}").unwrap();
    }
    std::fs::write(cfg.out_dir.join("summary.txt"), summary)?;

    let mut conf = String::new();
    writeln!(conf, "subcommand = {}", cfg.subcommand.name()).unwrap();
    for (k, v) in cfg.resolved() {
        writeln!(conf, "{k} = {v}").unwrap();
    }
    std::fs::write(cfg.out_dir.join("config.txt"), conf)?;
    Ok(())
}

// ---------------------------------------------------------------------------
// subcommand pipelines
// ---------------------------------------------------------------------------

fn exec_indicial(cfg: &RunConfig) -> Result<ExperimentOutput> {
    let params = cfg.params()?;
    let sc = central_interval(&params, EndTag::ScatteringEnd)?;
    let cone = central_interval(&params, EndTag::ConicPoint)?;
    let mut rows = Vec::new();
    let mut max_res: f64 = 0.0;
    for &k in &cfg.modes {
        let mode = AngularMode::sphere(k, cfg.dimension);
        let (a, b) = indicial_roots(&params, mode);
        // report the upper-half-plane root first
        let (hi, lo) = if a.im >= b.im { (a, b) } else { (b, a) };
        let res_hi = mellin_symbol_eval(&params, mode, hi).norm();
        let res_lo = mellin_symbol_eval(&params, mode, lo).norm();
        max_res = max_res.max(res_hi).max(res_lo);
        rows.push(format!(
            "{k},{},{},{},{},{},{},{},{}",
            fmt_complex(hi),
            fmt_complex(lo),
            fmt_f64(res_hi),
            fmt_f64(res_lo),
            fmt_f64(sc.lo),
            fmt_f64(sc.hi),
            fmt_f64(cone.lo),
            fmt_f64(cone.hi),
        ));
    }
    let pass = max_res < 1e-10;
    Ok(ExperimentOutput {
        csv_columns:
            "mode_k,root_plus,root_minus,residual_plus,residual_minus,sc_lo,sc_hi,cone_lo,cone_hi",
        csv_rows: rows,
        summary: vec![
            format!("interval_scattering: ({},{})", fmt_f64(sc.lo), fmt_f64(sc.hi)),
            format!("interval_conic: ({},{})", fmt_f64(cone.lo), fmt_f64(cone.hi)),
            format!("max_root_residual: {}", fmt_f64(max_res)),
        ],
        pass,
    })
}

/// Relative error of two symbol expressions at a point, with the cancellation
/// guard used throughout the symbol tests.
fn symbol_rel_err(lhs: &SymbolExpr, rhs: &SymbolExpr, pt: &BracketPoint) -> Result<f64> {
    let l = lhs.eval(pt)?;
    let r = rhs.eval(pt)?;
    let scale = l
        .norm()
        .max(r.norm())
        .max(1e-3 * lhs.eval_abs(pt))
        .max(1e-30);
    Ok((l - r).norm() / scale)
}

fn random_bracket_point(rng: &mut ChaCha8Rng) -> Result<BracketPoint> {
    BracketPoint::new(
        10f64.powf(rng.gen_range(-2.0..2.0)),
        10f64.powf(rng.gen_range(-2.0..2.0)),
        rng.gen_range(-3.0..3.0),
        rng.gen_range(0.01..9.0),
    )
}

/// Expanded closed form of {Re p̂, a} for a = x^{-2l-1} σ^{2ν} (τ²+μ²)^{r̃-1/2}.
fn bracket_real_target(l: f64, rt: f64, nu: f64) -> SymbolExpr {
    SymbolExpr::real_term(4.0 * (l + rt), -2.0 * l, 2.0 * nu + 1.0, 2, 0, rt - 1.5)
        .add(&SymbolExpr::real_term(
            4.0 * (l + 0.5),
            -2.0 * l,
            2.0 * nu + 1.0,
            0,
            1,
            rt - 1.5,
        ))
        .add(&SymbolExpr::real_term(
            -4.0 * (l + rt),
            -2.0 * l + 1.0,
            2.0 * nu,
            1,
            0,
            rt - 0.5,
        ))
}

/// Expanded closed form of {Re p̃, a} with the complex-σ normalization.
fn bracket_complex_target(l: f64, rt: f64) -> SymbolExpr {
    SymbolExpr::real_term(4.0 * (l + rt), -2.0 * l, 0.0, 2, 0, rt - 1.5)
        .add(&SymbolExpr::real_term(4.0 * (l + 0.5), -2.0 * l, 0.0, 0, 1, rt - 1.5))
        .add(&SymbolExpr::real_term(
            -4.0 * (l + rt),
            -2.0 * l + 1.0,
            1.0,
            1,
            0,
            rt - 0.5,
        ))
}

fn exec_verify_symbols(cfg: &RunConfig) -> Result<ExperimentOutput> {
    const DRAWS: usize = 20;
    const POINTS: usize = 100;
    const TOL: f64 = 1e-12;
    let identities: [&str; 4] = [
        "bracket-real",
        "modified-real",
        "bracket-complex",
        "modified-complex",
    ];
    let mut rows = Vec::new();
    let mut failures = 0usize;
    let mut checks = 0usize;
    for (idx, name) in identities.iter().enumerate() {
        let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed.wrapping_add(idx as u64));
        for draw in 0..DRAWS {
            let l = rng.gen_range(-1.4..-0.3);
            let rt = rng.gen_range(0.5..2.5);
            let nu = rng.gen_range(0.0..1.0);
            let (lhs, rhs) = match idx {
                0 => (
                    bracket(&re_p_hat(), &weight(l, rt, nu)),
                    bracket_real_target(l, rt, nu),
                ),
                1 => {
                    let p = ModelParams {
                        beta: Complex64::new(0.0, rng.gen_range(-0.5..0.5)),
                        gamma: Complex64::new(0.0, rng.gen_range(-0.5..0.5)),
                        ..ModelParams::exact_cone(cfg.dimension)
                    };
                    (
                        modified_commutator_real(&p, l, rt, nu),
                        modified_commutator_real_target(&p, l, rt, nu),
                    )
                }
                2 => (
                    bracket(&re_p_tilde(), &weight(l, rt, 0.0)),
                    bracket_complex_target(l, rt),
                ),
                _ => (
                    modified_commutator_complex(l, rt),
                    modified_commutator_complex_target(l, rt),
                ),
            };
            let mut max_err: f64 = 0.0;
            for _ in 0..POINTS {
                let pt = random_bracket_point(&mut rng)?;
                max_err = max_err.max(symbol_rel_err(&lhs, &rhs, &pt)?);
                checks += 1;
            }
            let ok = max_err < TOL;
            if !ok {
                failures += 1;
            }
            rows.push(format!(
                "{name},{draw},{},{}",
                fmt_f64(max_err),
                if ok { "ok" } else { "fail" }
            ));
        }
    }
    // sign-definiteness of the modified real-σ symbol on both order branches
    let p0 = ModelParams::exact_cone(cfg.dimension);
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed.wrapping_add(100));
    for (name, l, rt, sign) in [
        ("sign-branch-a", -0.75, 2.0, -1.0),
        ("sign-branch-b", 0.0, -0.25, 1.0),
    ] {
        let m = modified_commutator_real(&p0, l, rt, 0.0);
        let mut worst: f64 = 0.0;
        for _ in 0..200 {
            let pt = random_bracket_point(&mut rng)?;
            // sign * value must stay >= -tol
            worst = worst.min(sign * m.eval(&pt)?.re);
        }
        let ok = worst >= -1e-12;
        if !ok {
            failures += 1;
        }
        rows.push(format!(
            "{name},0,{},{}",
            fmt_f64(-worst),
            if ok { "ok" } else { "fail" }
        ));
    }
    Ok(ExperimentOutput {
        csv_columns: "check,draw,max_defect,status",
        csv_rows: rows,
        summary: vec![
            format!(
                "identity_failures: {failures} of {} (4 identities x {DRAWS} draws)",
                identities.len() * DRAWS
            ),
            format!("points_checked: {checks}"),
        ],
        pass: failures == 0,
    })
}

fn exec_sweep(cfg: &RunConfig) -> Result<ExperimentOutput> {
    let params = cfg.params()?;
    let base_grid = cfg.grid()?;
    if cfg.sigmas.len() < 2 || cfg.sigmas.windows(2).any(|w| w[1] >= w[0]) {
        return Err(Error::Config(
            "sweep needs >= 2 strictly decreasing sigmas".into(),
        ));
    }
    let norm_left = NormSpec::hb(cfg.s, cfg.l);
    let norm_right = NormSpec::hb(0, cfg.r);
    norm_left.validate()?;
    norm_right.validate()?;
    let alpha_right = cfg.form.alpha_right(cfg.alpha);

    struct Row {
        sigma: f64,
        k: u32,
        c: f64,
        residual: f64,
        ms: u128,
    }
    use rayon::prelude::*;
    let rows: Vec<Result<Vec<Row>>> = cfg
        .sigmas
        .par_iter()
        .map(|&sigma| {
            let (grid, kind, bc) = match cfg.form {
                EstimateForm::Normal0Rescaled => (
                    base_grid.translated((1.0 / sigma).ln())?,
                    OperatorKind::Normal0,
                    BoundaryConditions::conjugated(),
                ),
                _ => (
                    base_grid.clone(),
                    OperatorKind::Conjugated,
                    BoundaryConditions::conjugated(),
                ),
            };
            let sp = SpectralParam::real(sigma);
            let mut nl = norm_left;
            let mut nr = norm_right;
            nl.sigma_ref = sigma;
            nr.sigma_ref = sigma;
            let mut out = Vec::new();
            for &k in &cfg.modes {
                let t0 = Instant::now();
                let mode = AngularMode::sphere(k, cfg.dimension);
                let op = assemble(&params, mode, sp, kind, &grid, &bc)?;
                let g_l = gram(&nl, &grid, mode, cfg.dimension)?;
                let g_r = gram(&nr, &grid, mode, cfg.dimension)?;
                let c = best_constant(&op, &g_l, &g_r, cfg.alpha, alpha_right)?;
                // relative gap of the randomized probe lower bound; a solver
                // self-check, not a convergence claim
                let lb =
                    probe_lower_bound(&op, &g_l, &g_r, cfg.alpha, alpha_right, cfg.seed, 8)?;
                let residual = (1.0 - lb / c).max(0.0);
                out.push(Row {
                    sigma,
                    k,
                    c,
                    residual,
                    ms: t0.elapsed().as_millis(),
                });
            }
            Ok(out)
        })
        .collect();
    let mut table = Vec::new();
    for r in rows {
        table.extend(r?);
    }
    // max over modes per sigma, then the log-log fit across the sweep
    let mut c_max = Vec::new();
    for &sigma in &cfg.sigmas {
        let m = table
            .iter()
            .filter(|r| r.sigma == sigma)
            .map(|r| r.c)
            .fold(0.0, f64::max);
        c_max.push(m);
    }
    let xs: Vec<f64> = cfg.sigmas.iter().map(|s| s.ln()).collect();
    let ys: Vec<f64> = c_max.iter().map(|c| c.ln()).collect();
    let slope = fit_slope(&xs, &ys);
    let ratio = c_max.iter().fold(f64::MIN, |a, &b| a.max(b))
        / c_max.iter().fold(f64::MAX, |a, &b| a.min(b));
    let verdict = if slope.abs() < 0.1 && ratio < 10.0 {
        Verdict::Pass
    } else if slope <= -0.2 {
        Verdict::SharpnessConfirmed
    } else {
        Verdict::Fail
    };
    let csv_rows = table
        .iter()
        .map(|r| {
            format!(
                "{},{},{},{},{}",
                fmt_f64(r.sigma),
                r.k,
                fmt_f64(r.c),
                fmt_f64(r.residual),
                r.ms
            )
        })
        .collect();
    Ok(ExperimentOutput {
        csv_columns: "sigma,mode_k,C,residual,wallclock_ms",
        csv_rows,
        summary: vec![
            format!("fitted_slope: {}", fmt_f64(slope)),
            format!("constant_ratio: {}", fmt_f64(ratio)),
            format!("sweep_verdict: {verdict}"),
            "thresholds: |slope| < 0.1 and ratio < 10 for PASS; slope <= -0.2 confirms sharpness"
                .to_string(),
        ],
        // sharpness confirmation is a successful experiment outcome
        pass: verdict != Verdict::Fail,
    })
}

/// Interior Gaussian bump in t, used as the forcing for lap and the test
/// vector for rescale-check.
fn gaussian_in_t(grid: &LogGrid, center: f64, width: f64) -> Vec<Complex64> {
    grid.t
        .iter()
        .map(|&t| {
            let z = (t - center) / width;
            Complex64::new((-z * z).exp(), 0.0)
        })
        .collect()
}

fn exec_lap(cfg: &RunConfig) -> Result<ExperimentOutput> {
    let params = cfg.params()?;
    let grid = cfg.grid()?;
    let mode = AngularMode::sphere(cfg.modes[0], cfg.dimension);
    let sigma_r = 0.1;
    let f = gaussian_in_t(&grid, 0.5 * (cfg.t_min + cfg.t_max), 0.4);
    let table = lap_limit(&params, mode, sigma_r, &cfg.sigmas, &f, &grid, cfg.l)?;
    let rows = table
        .eps
        .iter()
        .zip(&table.dist)
        .map(|(&e, &d)| format!("{},{}", fmt_f64(e), fmt_f64(d)))
        .collect();
    let contraction = table.dist[0] / table.dist[table.dist.len() - 1];
    Ok(ExperimentOutput {
        csv_columns: "eps,distance",
        csv_rows: rows,
        summary: vec![
            format!("sigma_r: {}", fmt_f64(sigma_r)),
            format!("contraction_factor: {}", fmt_f64(contraction)),
            format!("monotone_ok: {}", table.monotone_ok),
            format!("contraction_ok: {}", table.contraction_ok),
        ],
        pass: table.monotone_ok && table.contraction_ok,
    })
}

fn exec_rescale_check(cfg: &RunConfig) -> Result<ExperimentOutput> {
    let params = cfg.params()?;
    let grid = cfg.grid()?;
    // default sigmas are exact grid shifts e^{-mh}
    let sigmas = if cfg.sigmas.is_empty() {
        vec![
            (-40.0 * grid.h).exp(),
            (-80.0 * grid.h).exp(),
            (-120.0 * grid.h).exp(),
        ]
    } else {
        cfg.sigmas.clone()
    };
    let v = gaussian_in_t(&grid, 0.5 * (cfg.t_min + cfg.t_max), 0.4);
    let mut rows = Vec::new();
    let mut worst_shift: f64 = 0.0;
    let mut worst_chain: f64 = 0.0;
    for &sigma in &sigmas {
        let rep = rescale_check(&params, sigma, &v, &grid, cfg.s, cfg.l, 0.0)?;
        worst_shift = worst_shift.max(rep.shift_defect);
        worst_chain = worst_chain.max(rep.chain_defect);
        rows.push(format!(
            "{},{},{},{}",
            fmt_f64(sigma),
            rep.shift_steps,
            fmt_f64(rep.shift_defect),
            fmt_f64(rep.chain_defect)
        ));
    }
    Ok(ExperimentOutput {
        csv_columns: "sigma,shift_steps,shift_defect,chain_defect",
        csv_rows: rows,
        summary: vec![
            format!("max_shift_defect: {}", fmt_f64(worst_shift)),
            format!("max_chain_defect: {}", fmt_f64(worst_chain)),
            "thresholds: shift < 1e-12, chain < 1e-6".to_string(),
        ],
        pass: worst_shift < 1e-12 && worst_chain < 1e-6,
    })
}

fn exec_grushin(cfg: &RunConfig) -> Result<ExperimentOutput> {
    // the kernel-engineering experiment runs on the exact cone plus a fixed
    // x^3 tail; the zero-energy kernel then has a genuine x^2 correction and
    // the decay-gain fit sees real signal rather than pure truncation error
    let params = ModelParams {
        potential: Potential::power(2.0, 3.0),
        ..ModelParams::exact_cone(cfg.dimension)
    };
    let grid = cfg.grid()?;
    let mode = AngularMode::sphere(cfg.modes[0], cfg.dimension);
    let setup = tune_kernel(&params, &grid, mode, (0.5, 8.0))?;
    let block = block_scaling(&setup, &cfg.sigmas)?;
    let pairing = pairing_check(&setup, &cfg.sigmas)?;
    let rows = cfg
        .sigmas
        .iter()
        .enumerate()
        .map(|(i, &s)| {
            let b = block.inverse_blocks[i];
            format!(
                "{},{},{},{},{},{},{}",
                fmt_f64(s),
                fmt_f64(b[0]),
                fmt_f64(b[1]),
                fmt_f64(b[2]),
                fmt_f64(b[3]),
                fmt_f64(block.t11[i].norm()),
                fmt_f64(pairing.defects[i])
            )
        })
        .collect();
    let slopes_ok = block.inverse_slopes[0].abs() < 0.1
        && block.inverse_slopes[1].abs() < 0.1
        && block.inverse_slopes[2].abs() < 0.1
        && (block.inverse_slopes[3] + 1.0).abs() < 0.1
        && (block.t11_slope - 1.0).abs() < 0.1;
    let pass = slopes_ok && pairing.defect_slope >= 1.9 && pairing.decay_gain >= 0.9;
    Ok(ExperimentOutput {
        csv_columns: "sigma,block_ee,block_ef,block_fe,block_ff,t11_abs,pairing_defect",
        csv_rows: rows,
        summary: vec![
            format!("coupling_c_star: {}", fmt_f64(setup.c_star)),
            format!(
                "inverse_block_slopes: {},{},{},{}",
                fmt_f64(block.inverse_slopes[0]),
                fmt_f64(block.inverse_slopes[1]),
                fmt_f64(block.inverse_slopes[2]),
                fmt_f64(block.inverse_slopes[3])
            ),
            format!("t11_slope: {}", fmt_f64(block.t11_slope)),
            format!("pairing_defect_slope: {}", fmt_f64(pairing.defect_slope)),
            format!("decay_gain: {}", fmt_f64(pairing.decay_gain)),
            "thresholds: slopes (0,0,0,-1) and t11 slope 1 within 0.1, defect slope >= 1.9, \
             decay gain >= 0.9"
                .to_string(),
        ],
        pass,
    })
}

fn exec_norms_selftest(cfg: &RunConfig) -> Result<ExperimentOutput> {
    let grid = cfg.grid()?;
    let mode = AngularMode::sphere(cfg.modes[0], cfg.dimension);
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let np = grid.num_points;
    let draws: Vec<Vec<Complex64>> = (0..20)
        .map(|_| {
            (0..np)
                .map(|_| Complex64::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)))
                .collect()
        })
        .collect();
    let g0 = gram(&NormSpec::hb(0, cfg.l), &grid, mode, cfg.dimension)?;
    let gs = gram(&NormSpec::hb(cfg.s, cfg.l), &grid, mode, cfg.dimension)?;
    let gres = gram(
        &NormSpec::resolved(cfg.s, cfg.r, cfg.l, cfg.alpha, 0.01),
        &grid,
        mode,
        cfg.dimension,
    )?;
    let gthresh = gram(
        &NormSpec::resolved(cfg.s, cfg.s as f64 + cfg.l, cfg.l, 0.0, 0.01),
        &grid,
        mode,
        cfg.dimension,
    )?;

    let mut rows = Vec::new();
    let mut pass = true;
    let push = |rows: &mut Vec<String>, name: &str, value: f64, thresh: f64, ok: bool| {
        rows.push(format!(
            "{name},{},{},{}",
            fmt_f64(value),
            fmt_f64(thresh),
            if ok { "ok" } else { "fail" }
        ));
        ok
    };
    // positive definiteness: smallest Rayleigh quotient over random draws
    for (name, g) in [("posdef_hb0", &g0), ("posdef_hbs", &gs), ("posdef_resolved", &gres)] {
        let min_q = draws
            .iter()
            .map(|u| g.norm_sq(u) / u.iter().map(|z| z.norm_sqr()).sum::<f64>())
            .fold(f64::MAX, f64::min);
        pass &= push(&mut rows, name, min_q, 0.0, min_q > 0.0);
    }
    // s orders of derivatives dominate the bare weighted L^2 norm
    let max_ratio = draws
        .iter()
        .map(|u| g0.norm_sq(u) / gs.norm_sq(u))
        .fold(0.0, f64::max);
    pass &= push(
        &mut rows,
        "hb0_le_hbs",
        max_ratio,
        1.0 + 1e-12,
        max_ratio <= 1.0 + 1e-12,
    );
    // α = 0 resolved family at the threshold r = s + l degenerates to Hb
    let max_rel = draws
        .iter()
        .map(|u| {
            let a = gthresh.norm_sq(u);
            let b = gs.norm_sq(u);
            (a - b).abs() / b
        })
        .fold(0.0, f64::max);
    pass &= push(
        &mut rows,
        "resolved_matches_hb_at_threshold",
        max_rel,
        1e-10,
        max_rel < 1e-10,
    );
    let n_checks = rows.len();
    Ok(ExperimentOutput {
        csv_columns: "check,value,threshold,status",
        csv_rows: rows,
        summary: vec![format!("checks: {n_checks}")],
        pass,
    })
}

// ---------------------------------------------------------------------------
// argument handling and entry point
// ---------------------------------------------------------------------------

fn build_config(argv: &[String]) -> Result<RunConfig> {
    if argv.is_empty() {
        return Err(Error::Config(
            "usage: coniclab <subcommand> [--config <path>] [--out <dir>] [--seed <u64>] \
             [--workers <int>]"
                .into(),
        ));
    }
    let sub = Subcommand::parse(&argv[0])?;
    let mut cfg = RunConfig::defaults(sub);
    let mut i = 1;
    let mut file_kv: Option<BTreeMap<String, String>> = None;
    let mut flag_out: Option<PathBuf> = None;
    let mut flag_seed: Option<u64> = None;
    let mut flag_workers: Option<usize> = None;
    while i < argv.len() {
        let flag = argv[i].as_str();
        let value = argv
            .get(i + 1)
            .ok_or_else(|| Error::Config(format!("flag '{flag}' needs a value")))?;
        match flag {
            "--config" => {
                let text = std::fs::read_to_string(Path::new(value)).map_err(|e| {
                    Error::Config(format!("cannot read config '{value}': {e}"))
                })?;
                file_kv = Some(parse_config_text(&text)?);
            }
            "--out" => flag_out = Some(PathBuf::from(value)),
            "--seed" => {
                flag_seed = Some(value.parse().map_err(|_| {
                    Error::Config(format!("--seed: '{value}' is not a u64"))
                })?)
            }
            "--workers" => {
                flag_workers = Some(value.parse().map_err(|_| {
                    Error::Config(format!("--workers: '{value}' is not a usize"))
                })?)
            }
            other => return Err(Error::Config(format!("unknown flag '{other}'"))),
        }
        i += 2;
    }
    if let Some(kv) = &file_kv {
        apply_config(&mut cfg, kv)?;
    }
    if let Some(p) = flag_out {
        cfg.out_dir = p;
    }
    if let Some(s) = flag_seed {
        cfg.seed = s;
    }
    if let Some(w) = flag_workers {
        cfg.workers = w;
    }
    if cfg.modes.is_empty() {
        return Err(Error::Config("key 'modes': need at least one mode".into()));
    }
    Ok(cfg)
}

fn execute(cfg: &RunConfig) -> Result<ExperimentOutput> {
    match cfg.subcommand {
        Subcommand::Indicial => exec_indicial(cfg),
        Subcommand::VerifySymbols => exec_verify_symbols(cfg),
        Subcommand::Sweep => exec_sweep(cfg),
        Subcommand::Lap => exec_lap(cfg),
        Subcommand::RescaleCheck => exec_rescale_check(cfg),
        Subcommand::Grushin => exec_grushin(cfg),
        Subcommand::NormsSelftest => exec_norms_selftest(cfg),
    }
}

/// Runs one experiment from the command line. Returns the process exit code:
/// 0 = all verdicts PASS, 2 = completed with a FAIL verdict, 1 = error.
pub fn run(argv: &[String]) -> i32 {
    let cfg = match build_config(argv) {
        Ok(c) => c,
        Err(e) => {
            eprintln!("error: {e}");
            return 1;
        }
    };
    let pool = match rayon::ThreadPoolBuilder::new()
        .num_threads(cfg.workers)
        .build()
    {
        Ok(p) => p,
        Err(e) => {
            eprintln!("error: worker pool: {e}");
            return 1;
        }
    };
    let out = match pool.install(|| execute(&cfg)) {
        Ok(o) => o,
        Err(e) => {
            eprintln!("error: {e}");
            return 1;
        }
    };
    if let Err(e) = write_reports(&cfg, &out) {
        eprintln!("error: writing reports: {e}");
        return 1;
    }
    println!(
        "{}: {} ({} rows) -> {}",
        cfg.subcommand.name(),
        if out.pass { "PASS" } else { "FAIL" },
        out.csv_rows.len(),
        cfg.out_dir.display()
    );
    if out.pass {
        0
    } else {
        2
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn args(list: &[&str]) -> Vec<String> {
        list.iter().map(|s| s.to_string()).collect()
    }

    fn scratch_dir(name: &str) -> PathBuf {
        let d = std::env::temp_dir().join(format!("coniclab-cli-{name}-{}", std::process::id()));
        let _ = std::fs::remove_dir_all(&d);
        d
    }

    fn read(dir: &Path, file: &str) -> String {
        std::fs::read_to_string(dir.join(file)).unwrap()
    }

    #[test]
    fn complex_literals_round_trip() {
        for s in ["1.5+2i", "-3-0.25i", "0.5i", "-0.5i", "2", "-1e-3", "1e-2+1e-3i"] {
            let z = parse_complex("beta", s).unwrap();
            let z2 = parse_complex("beta", &fmt_complex(z)).unwrap();
            assert_eq!(z, z2, "{s}");
        }
        assert_eq!(parse_complex("beta", "0.5i").unwrap(), Complex64::new(0.0, 0.5));
        assert_eq!(fmt_complex(Complex64::new(0.0, -0.5)), "-0.5i");
        assert!(parse_complex("beta", "1+*i").is_err());
    }

    #[test]
    fn unknown_keys_and_bad_values_rejected() {
        assert!(parse_config_text("frobnicate = 3").is_err());
        assert!(parse_config_text("seed = 1\nseed = 2").is_err());
        let kv = parse_config_text("seed = 1 # trailing comment\n\n# full comment\nl = -0.6").unwrap();
        assert_eq!(kv.len(), 2);
        let mut cfg = RunConfig::defaults(Subcommand::Sweep);
        apply_config(&mut cfg, &kv).unwrap();
        assert_eq!(cfg.seed, 1);
        assert_eq!(cfg.l, -0.6);
        // r follows the b-Sobolev threshold when only l is set
        assert!((cfg.r - (cfg.s as f64 + cfg.l)).abs() < 1e-15);
        let bad = parse_config_text("form = nonsense").unwrap();
        assert!(apply_config(&mut cfg, &bad).is_err());
    }

    #[test]
    fn indicial_example_and_determinism() {
        let d1 = scratch_dir("ind1");
        let d2 = scratch_dir("ind2");
        for d in [&d1, &d2] {
            let code = run(&args(&["indicial", "--out", d.to_str().unwrap(), "--seed", "9"]));
            assert_eq!(code, 0);
        }
        let csv = read(&d1, "indicial.csv");
        assert!(csv.starts_with(&format!("# {CSV_SCHEMA}\n")));
        // mode 0 on the n=3 exact cone: roots +-i/2
        assert!(csv.contains("0,0.5i,-0.5i,"), "{csv}");
        let summary = read(&d1, "summary.txt");
        assert!(summary.contains("interval_scattering: (-1.5,-0.5)"), "{summary}");
        assert!(summary.contains("interval_conic: (0.5,1.5)"), "{summary}");
        assert!(summary.contains("verdict: PASS"));
        // byte-identical outputs for identical config and seed (the resolved
        // config differs only in the out_dir line itself)
        for f in ["indicial.csv", "summary.txt"] {
            assert_eq!(read(&d1, f), read(&d2, f), "{f}");
        }
        let strip_out_dir = |text: String| -> String {
            text.lines()
                .filter(|l| !l.starts_with("out_dir"))
                .collect::<Vec<_>>()
                .join("\n")
        };
        assert_eq!(
            strip_out_dir(read(&d1, "config.txt")),
            strip_out_dir(read(&d2, "config.txt"))
        );
        let conf = read(&d1, "config.txt");
        assert!(conf.contains("subcommand = indicial"));
        assert!(conf.contains("dimension = 3"));
    }

    #[test]
    fn verify_symbols_runs_clean() {
        let d = scratch_dir("sym");
        let code = run(&args(&["verify-symbols", "--out", d.to_str().unwrap()]));
        assert_eq!(code, 0);
        let summary = read(&d, "summary.txt");
        assert!(summary.contains("identity_failures: 0 of 80"), "{summary}");
        let csv = read(&d, "verify-symbols.csv");
        assert_eq!(csv.lines().filter(|l| l.ends_with(",ok")).count(), 82);
    }

    #[test]
    fn sweep_smoke_with_config_file() {
        let d = scratch_dir("sweep");
        std::fs::create_dir_all(&d).unwrap();
        let conf = d.join("run.conf");
        std::fs::write(
            &conf,
            "modes = 0,1\nsigmas = 1e-1,1e-2,1e-3\nnum_points = 161\nworkers = 2\n",
        )
        .unwrap();
        let code = run(&args(&[
            "sweep",
            "--config",
            conf.to_str().unwrap(),
            "--out",
            d.to_str().unwrap(),
        ]));
        assert_eq!(code, 0);
        let csv = read(&d, "sweep.csv");
        assert!(csv.lines().nth(1).unwrap() == "sigma,mode_k,C,residual,wallclock_ms");
        // 3 sigmas x 2 modes data rows
        assert_eq!(csv.lines().count(), 8);
        let summary = read(&d, "summary.txt");
        assert!(summary.contains("sweep_verdict: PASS"), "{summary}");
    }

    #[test]
    fn rescale_check_passes_and_rejects_bad_sigma() {
        let d = scratch_dir("resc");
        let code = run(&args(&["rescale-check", "--out", d.to_str().unwrap()]));
        assert_eq!(code, 0);
        let summary = read(&d, "summary.txt");
        assert!(summary.contains("verdict: PASS"), "{summary}");
        // sigma not an exact grid shift -> configuration/runtime error
        let conf = d.join("bad.conf");
        std::fs::write(&conf, "sigmas = 0.123456\n").unwrap();
        let code = run(&args(&[
            "rescale-check",
            "--config",
            conf.to_str().unwrap(),
            "--out",
            d.to_str().unwrap(),
        ]));
        assert_eq!(code, 1);
    }

    #[test]
    fn lap_contracts() {
        let d = scratch_dir("lap");
        let code = run(&args(&["lap", "--out", d.to_str().unwrap()]));
        assert_eq!(code, 0);
        let summary = read(&d, "summary.txt");
        assert!(summary.contains("contraction_ok: true"), "{summary}");
    }

    #[test]
    fn norms_selftest_passes() {
        let d = scratch_dir("norms");
        let code = run(&args(&["norms-selftest", "--out", d.to_str().unwrap()]));
        assert_eq!(code, 0);
    }

    #[test]
    fn usage_errors_exit_one() {
        assert_eq!(run(&args(&[])), 1);
        assert_eq!(run(&args(&["no-such-subcommand"])), 1);
        assert_eq!(run(&args(&["sweep", "--bogus", "1"])), 1);
        assert_eq!(run(&args(&["sweep", "--seed"])), 1);
    }
}
