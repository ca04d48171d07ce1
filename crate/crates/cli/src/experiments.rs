//! One plan type per subcommand: parsed and checked from a [`Config`] up
//! front, then executed into an output directory.

use std::collections::BTreeMap;
use std::fs::File;
use std::io::BufWriter;
use std::path::{Path, PathBuf};

use logbranch::conditioning::{
    q_stationary, r_star_weak, r_star_weak_limit, rate_table_q, rate_table_t, rate_table_t_moran, scaling_check,
    simulate_occupation, AlphaConvention, WeakBeta,
};
use logbranch::dual::{asg_trace, moran_simulate, pi_star, DualParams};
use logbranch::genealogy::{gamma_scan, mrca_experiment, reconstruct_from_tips, write_gamma_csv, write_mrca_csv};
use logbranch::io::{fmt_f64, write_json};
use logbranch::model::{simulate, simulate_with_genealogy, ModelParams};
use logbranch::yaglom::{yaglom_empirical, yaglom_empirical_resampling, yaglom_feynman_kac, yaglom_recursion};
use logbranch::{rng, Error, Result};
use rand::seq::index;
use rayon::prelude::*;
use serde::Serialize;

use crate::config::{Config, Reader};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Experiment {
    Simulate,
    RatesT,
    RatesQ,
    QStationary,
    PiStar,
    Yaglom,
    GammaScan,
    Mrca,
    DualCheck,
    ScalingCheck,
}

impl Experiment {
    pub const ALL: [Experiment; 10] = [
        Experiment::Simulate,
        Experiment::RatesT,
        Experiment::RatesQ,
        Experiment::QStationary,
        Experiment::PiStar,
        Experiment::Yaglom,
        Experiment::GammaScan,
        Experiment::Mrca,
        Experiment::DualCheck,
        Experiment::ScalingCheck,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Experiment::Simulate => "simulate",
            Experiment::RatesT => "rates-T",
            Experiment::RatesQ => "rates-Q",
            Experiment::QStationary => "q-stationary",
            Experiment::PiStar => "pi-star",
            Experiment::Yaglom => "yaglom",
            Experiment::GammaScan => "gamma-scan",
            Experiment::Mrca => "mrca",
            Experiment::DualCheck => "dual-check",
            Experiment::ScalingCheck => "scaling-check",
        }
    }

    pub fn from_name(s: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|e| e.name().eq_ignore_ascii_case(s))
    }
}

#[derive(Debug, Clone)]
enum Plan {
    Simulate {
        p: ModelParams,
        z0: u64,
        horizon: f64,
        genealogy: bool,
    },
    RatesT {
        p: ModelParams,
        horizon: f64,
        t: f64,
        cap: usize,
        paths: usize,
        dt: Option<f64>,
        moran_n: Option<usize>,
    },
    RatesQ {
        p: ModelParams,
        cap: usize,
    },
    QStationary {
        p: ModelParams,
        cap: usize,
        events: u64,
    },
    PiStar {
        dp: DualParams,
        grid_size: usize,
        weak: bool,
        kmax: usize,
    },
    Yaglom {
        p: ModelParams,
        cap: usize,
        tol: f64,
        thetas: Vec<f64>,
        fk_paths: usize,
        fk_dt: f64,
        empirical: String,
        horizon: f64,
        z0: u64,
        replicates: usize,
        particles: usize,
        batches: usize,
        steps: usize,
    },
    GammaScan {
        p: ModelParams,
        lambdas: Vec<f64>,
        sample_time: f64,
        replicates: usize,
        z0: Option<u64>,
    },
    Mrca {
        p: ModelParams,
        sample_time: f64,
        replicates: usize,
        z0: Option<u64>,
    },
    DualCheck {
        dp: DualParams,
        n: usize,
        horizon: f64,
        realizations: usize,
        max_sample: usize,
    },
    ScalingCheck {
        b: f64,
        c: f64,
        ks: Vec<usize>,
        horizon: f64,
        x0: f64,
        replicates: usize,
        dt: f64,
    },
}

/// A parsed configuration: the plan, the resolved key values and every
/// problem found.
pub struct Prepared {
    plan: Option<Plan>,
    pub seed: u64,
    pub resolved: BTreeMap<String, String>,
    pub violations: Vec<String>,
}

fn model(r: &mut Reader, violations: &mut Vec<String>) -> Option<ModelParams> {
    let (b, c, d) = (r.f64("b", None), r.f64("c", None), r.f64("d", None));
    if b.is_nan() || c.is_nan() || d.is_nan() {
        return None;
    }
    ModelParams::new(b, c, d).map_err(|e| violations.push(e.to_string())).ok()
}

fn dual(r: &mut Reader, violations: &mut Vec<String>) -> Option<DualParams> {
    let (s, nu, mu) = (r.f64("s", None), r.f64("nu", None), r.f64("mu", None));
    if s.is_nan() || nu.is_nan() || mu.is_nan() {
        return None;
    }
    DualParams::new(s, nu, mu).map_err(|e| violations.push(e.to_string())).ok()
}

fn optional_z0(r: &mut Reader) -> Option<u64> {
    match r.u64("z0", Some(0)) {
        0 => None,
        z => Some(z),
    }
}

fn require(cond: bool, msg: &str, v: &mut Vec<String>) {
    if !cond {
        v.push(msg.to_string());
    }
}

fn unsupported(msg: &str, v: &mut Vec<String>) {
    v.push(format!("unsupported regime: {msg}"));
}

/// Parses and checks `cfg` for `experiment` without running anything.
pub fn prepare(experiment: Experiment, cfg: &Config) -> Prepared {
    let mut r = Reader::new(cfg);
    let mut v = Vec::new();
    if let Some(name) = cfg.get("experiment") {
        if Experiment::from_name(name) != Some(experiment) {
            v.push(format!("experiment: config is for '{name}', not '{}'", experiment.name()));
        }
    }
    let seed = r.u64("seed", Some(1));
    let plan = match experiment {
        Experiment::Simulate => {
            let p = model(&mut r, &mut v);
            let z0 = r.u64("z0", Some(1));
            let horizon = r.f64("T", Some(10.0));
            let genealogy = r.bool("genealogy", false);
            require(horizon > 0.0, "T must be > 0", &mut v);
            p.map(|p| Plan::Simulate { p, z0, horizon, genealogy })
        }
        Experiment::RatesT => {
            let p = model(&mut r, &mut v);
            let horizon = r.f64("T", Some(10.0));
            let t = r.f64("t", Some(0.0));
            let cap = r.usize("K", Some(20));
            let paths = r.usize("paths", Some(4096));
            let backend = r.string("backend", "diffusion", &["diffusion", "moran"]);
            let dt = cfg.get("dt").map(|_| r.f64("dt", None));
            let moran_n = (backend == "moran").then(|| r.usize("N", Some(1000)));
            require(t >= 0.0 && t < horizon, "need 0 <= t < T", &mut v);
            require(cap >= 2, "K must be >= 2", &mut v);
            require(paths >= 2, "paths must be >= 2", &mut v);
            if let Some(dt) = dt {
                require(dt > 0.0, "dt must be > 0", &mut v);
            }
            p.map(|p| Plan::RatesT { p, horizon, t, cap, paths, dt, moran_n })
        }
        Experiment::RatesQ | Experiment::QStationary => {
            let p = model(&mut r, &mut v);
            let cap = r.usize("K", Some(if experiment == Experiment::RatesQ { 50 } else { 100 }));
            require(cap >= 2, "K must be >= 2", &mut v);
            if let Some(p) = &p {
                if p.c <= 0.0 {
                    unsupported("Q-process rates need c > 0", &mut v);
                }
            }
            if experiment == Experiment::RatesQ {
                p.map(|p| Plan::RatesQ { p, cap })
            } else {
                let events = r.u64("events", Some(0));
                p.map(|p| Plan::QStationary { p, cap, events })
            }
        }
        Experiment::PiStar => {
            let dp = dual(&mut r, &mut v);
            let grid_size = r.usize("grid_size", Some(4096));
            let weak = r.bool("weak_competition", false);
            let kmax = r.usize("kmax", Some(20));
            require(grid_size >= 64, "grid_size must be >= 64", &mut v);
            if let Some(dp) = &dp {
                if dp.nu <= 0.0 || dp.mu <= 0.0 {
                    unsupported("pi* needs nu > 0 and mu > 0", &mut v);
                }
                if weak && dp.s <= dp.mu {
                    unsupported("weak-competition approximation needs s > mu", &mut v);
                }
            }
            dp.map(|dp| Plan::PiStar { dp, grid_size, weak, kmax })
        }
        Experiment::Yaglom => {
            let p = model(&mut r, &mut v);
            let cap = r.usize("K", Some(400));
            let tol = r.f64("tol", Some(1e-10));
            let thetas = r.f64_list("thetas", "0.2,0.5,0.8");
            let fk_paths = r.usize("fk_paths", Some(4000));
            let fk_dt = r.f64("fk_dt", Some(1e-4));
            let empirical = r.string("empirical", "auto", &["none", "rejection", "resampling", "auto"]);
            let horizon = r.f64("T", Some(50.0));
            let z0 = r.u64("z0", Some(1));
            let replicates = r.usize("replicates", Some(10_000));
            let particles = r.usize("particles", Some(2000));
            let batches = r.usize("batches", Some(16));
            let steps = r.usize("steps", Some(500));
            if let Some(p) = &p {
                if p.c <= 0.0 {
                    unsupported("the Yaglom recursion needs c > 0", &mut v);
                }
            }
            require(tol > 0.0, "tol must be > 0", &mut v);
            require(thetas.iter().all(|t| (0.0..=1.0).contains(t)), "thetas must lie in [0, 1]", &mut v);
            require(fk_dt > 0.0, "fk_dt must be > 0", &mut v);
            require(horizon > 0.0 && z0 >= 1, "need T > 0 and z0 >= 1", &mut v);
            p.map(|p| Plan::Yaglom {
                p,
                cap,
                tol,
                thetas,
                fk_paths,
                fk_dt,
                empirical,
                horizon,
                z0,
                replicates,
                particles,
                batches,
                steps,
            })
        }
        Experiment::GammaScan => {
            let p = model(&mut r, &mut v);
            let lambdas = r.f64_list("lambdas", "0.01,0.02,0.05,0.08,0.1,0.2,0.5,1,10");
            let sample_time = r.f64("sample_time", Some(200.0));
            let replicates = r.usize("replicates", Some(200));
            let z0 = optional_z0(&mut r);
            require(lambdas.iter().all(|&l| l > 0.0), "lambdas must be > 0", &mut v);
            require(sample_time > 0.0, "sample_time must be > 0", &mut v);
            require(replicates >= 1, "replicates must be >= 1", &mut v);
            p.map(|p| Plan::GammaScan { p, lambdas, sample_time, replicates, z0 })
        }
        Experiment::Mrca => {
            let p = model(&mut r, &mut v);
            let sample_time = r.f64("sample_time", Some(20.0));
            let replicates = r.usize("replicates", Some(1000));
            let z0 = optional_z0(&mut r);
            require(sample_time > 0.0, "sample_time must be > 0", &mut v);
            require(replicates >= 1, "replicates must be >= 1", &mut v);
            p.map(|p| Plan::Mrca { p, sample_time, replicates, z0 })
        }
        Experiment::DualCheck => {
            let dp = dual(&mut r, &mut v);
            let n = r.usize("N", Some(50));
            let horizon = r.f64("t", Some(5.0));
            let realizations = r.usize("realizations", Some(10_000));
            let max_sample = r.usize("max_sample", Some(5));
            require(n >= 2, "N must be >= 2", &mut v);
            require(horizon > 0.0, "t must be > 0", &mut v);
            require((1..=n).contains(&max_sample), "need 1 <= max_sample <= N", &mut v);
            dp.map(|dp| Plan::DualCheck { dp, n, horizon, realizations, max_sample })
        }
        Experiment::ScalingCheck => {
            let b = r.f64("b", None);
            let c = r.f64("c", None);
            let ks = r.usize_list("Ks", "20,50,100");
            let horizon = r.f64("T", Some(2.0));
            let x0 = r.f64("x0", Some(1.0));
            let replicates = r.usize("replicates", Some(20_000));
            let dt = r.f64("dt", Some(1e-3));
            require(b >= 0.0 && c >= 0.0, "need b, c >= 0", &mut v);
            require(ks.iter().all(|&k| k as f64 > 2.0 * b), "every K must exceed 2b", &mut v);
            require(horizon > 0.0 && x0 > 0.0 && dt > 0.0, "need T, x0, dt > 0", &mut v);
            require(replicates >= 2, "replicates must be >= 2", &mut v);
            (!b.is_nan() && !c.is_nan()).then_some(Plan::ScalingCheck { b, c, ks, horizon, x0, replicates, dt })
        }
    };
    let mut violations = r.errors.clone();
    violations.extend(r.unknown_keys());
    violations.extend(v);
    Prepared {
        plan,
        seed,
        resolved: r.resolved().clone(),
        violations,
    }
}

/// Files written by a run plus free-form notes for the manifest.
#[derive(Debug, Default, Serialize)]
pub struct RunReport {
    pub artifacts: Vec<String>,
    pub notes: Vec<String>,
}

struct Out<'a> {
    dir: &'a Path,
    report: RunReport,
}

impl Out<'_> {
    fn file(&mut self, name: &str) -> Result<BufWriter<File>> {
        self.report.artifacts.push(name.to_string());
        Ok(BufWriter::new(File::create(self.dir.join(name))?))
    }

    fn json<T: Serialize + ?Sized>(&mut self, name: &str, value: &T) -> Result<()> {
        let f = self.file(name)?;
        write_json(f, value)
    }
}

fn write_rows(w: impl std::io::Write, header: &[&str], rows: impl IntoIterator<Item = Vec<String>>) -> Result<()> {
    let mut out = csv::Writer::from_writer(w);
    out.write_record(header)?;
    for row in rows {
        out.write_record(row)?;
    }
    out.flush()?;
    Ok(())
}

#[derive(Serialize)]
struct DualCheckReport {
    params: DualParams,
    n: usize,
    t: f64,
    realizations: usize,
    violations: u64,
    /// Fraction of realizations whose ASG survived, per sample size.
    survival: Vec<f64>,
}

impl Prepared {
    /// Runs the plan, writing artifacts into `dir` (which must exist).
    pub fn execute(&self, dir: &Path) -> Result<RunReport> {
        let plan = self
            .plan
            .as_ref()
            .ok_or_else(|| Error::InvalidArgument("configuration has violations".into()))?;
        let seed = self.seed;
        let mut out = Out {
            dir,
            report: RunReport::default(),
        };
        match plan {
            Plan::Simulate { p, z0, horizon, genealogy } => {
                if *genealogy {
                    let (traj, log) = simulate_with_genealogy(p, *z0, *horizon, seed)?;
                    traj.write_csv(out.file("trajectory.csv")?)?;
                    log.write_csv(out.file("genealogy.csv")?)?;
                    let alive = log.alive_at(*horizon);
                    if !alive.is_empty() {
                        let tree = reconstruct_from_tips(&log, *horizon, &alive)?;
                        let mut f = out.file("tree.nwk")?;
                        std::io::Write::write_all(&mut f, format!("{}\n", tree.newick()).as_bytes())?;
                    }
                } else {
                    simulate(p, *z0, *horizon, seed)?.write_csv(out.file("trajectory.csv")?)?;
                }
            }
            Plan::RatesT { p, horizon, t, cap, paths, dt, moran_n } => {
                let table = match moran_n {
                    Some(n) => rate_table_t_moran(p, *horizon, *t, *cap, *n, *paths, seed)?,
                    None => {
                        let dt = dt.unwrap_or_else(|| DualParams::from_model(p).default_dt());
                        rate_table_t(p, *horizon, *t, *cap, *paths, dt, seed)?
                    }
                };
                if !table.diagnostics.quality_ok {
                    out.report.notes.push(format!(
                        "relative SE {:.3e} exceeds 1%; increase paths",
                        table.diagnostics.max_relative_se
                    ));
                }
                table.write_json(out.file("rates.json")?)?;
            }
            Plan::RatesQ { p, cap } => {
                rate_table_q(p, *cap)?.write_json(out.file("rates.json")?)?;
            }
            Plan::QStationary { p, cap, events } => {
                let table = rate_table_q(p, *cap)?;
                let pmf = q_stationary(&table)?;
                pmf.write_csv(out.file("pmf.csv")?)?;
                if !pmf.is_unimodal() {
                    out.report.notes.push("stationary PMF is not unimodal".into());
                }
                if *events > 0 {
                    let occ = simulate_occupation(&table, pmf.mode(), *events, seed)?;
                    write_rows(
                        out.file("occupation.csv")?,
                        &["k", "occupation", "prob"],
                        occ.iter()
                            .zip(&pmf.probs)
                            .enumerate()
                            .map(|(i, (o, p))| vec![(i + 1).to_string(), fmt_f64(*o), fmt_f64(*p)]),
                    )?;
                }
            }
            Plan::PiStar { dp, grid_size, weak, kmax } => {
                pi_star(*dp, *grid_size)?.write_csv(out.file("pi_star.csv")?)?;
                if *weak {
                    let rows = (1..=*kmax)
                        .map(|k| {
                            let mut row = vec![k.to_string()];
                            for c in AlphaConvention::ALL {
                                row.push(fmt_f64(r_star_weak(dp, k, c)?));
                            }
                            row.push(fmt_f64(r_star_weak_limit(dp.s, dp.mu, k)?));
                            Ok(row)
                        })
                        .collect::<Result<Vec<_>>>()?;
                    write_rows(
                        out.file("weak.csv")?,
                        &["k", "twice_growth", "selection_weighted", "linearised", "limit"],
                        rows,
                    )?;
                    let betas: Vec<WeakBeta> = AlphaConvention::ALL
                        .iter()
                        .map(|&c| WeakBeta::new(dp, c))
                        .collect::<Result<_>>()?;
                    out.json("weak_beta.json", &betas)?;
                }
            }
            Plan::Yaglom {
                p,
                cap,
                tol,
                thetas,
                fk_paths,
                fk_dt,
                empirical,
                horizon,
                z0,
                replicates,
                particles,
                batches,
                steps,
            } => {
                let sol = yaglom_recursion(p, *cap, *tol)?;
                sol.write_json(out.file("yaglom.json")?)?;
                if *fk_paths > 0 {
                    let fk = yaglom_feynman_kac(p, sol.a, thetas, *fk_paths, *fk_dt, rng::derive_seed(seed, 1))?;
                    for pt in &fk.points {
                        out.report.notes.push(format!(
                            "G({}) recursion {} feynman-kac {} se {}",
                            pt.theta,
                            fmt_f64(sol.pgf(pt.theta)),
                            fmt_f64(pt.g),
                            fmt_f64(pt.se)
                        ));
                    }
                    out.json("feynman_kac.json", &fk)?;
                }
                let resample = || yaglom_empirical_resampling(p, *horizon, *z0, *particles, *batches, *steps, seed);
                let emp = match empirical.as_str() {
                    "rejection" => Some(yaglom_empirical(p, *horizon, *z0, *replicates, seed)?),
                    "resampling" => Some(resample()?),
                    "auto" => match yaglom_empirical(p, *horizon, *z0, *replicates, seed) {
                        Err(Error::Impractical { rate, .. }) => {
                            out.report
                                .notes
                                .push(format!("rejection acceptance {rate:e} below 1e-4; used particle resampling"));
                            Some(resample()?)
                        }
                        other => Some(other?),
                    },
                    _ => None,
                };
                if let Some(e) = emp {
                    e.write_csv(out.file("empirical.csv")?)?;
                }
            }
            Plan::GammaScan { p, lambdas, sample_time, replicates, z0 } => {
                let rows = gamma_scan(p, lambdas, *sample_time, *replicates, *z0, seed)?;
                write_gamma_csv(&rows, out.file("gamma.csv")?)?;
            }
            Plan::Mrca { p, sample_time, replicates, z0 } => {
                let res = mrca_experiment(p, *sample_time, *replicates, *z0, seed)?;
                write_mrca_csv(&res.samples, out.file("mrca.csv")?)?;
                let (gap, se) = res.mean_gap();
                out.json(
                    "summary.json",
                    &serde_json::json!({
                        "rejection": res.rejection,
                        "multi_root": res.multi_root,
                        "degenerate": res.samples.iter().filter(|s| s.degenerate).count(),
                        "mean_gap": gap,
                        "mean_gap_se": se,
                    }),
                )?;
            }
            Plan::DualCheck { dp, n, horizon, realizations, max_sample } => {
                let per: Vec<(u64, Vec<bool>)> = (0..*realizations as u64)
                    .into_par_iter()
                    .map(|i| {
                        let real = moran_simulate(*n, *dp, *horizon, rng::derive_seed(seed, i))?;
                        let mut rng = rng::stream(seed, i);
                        let mut bad = 0;
                        let mut survived = Vec::with_capacity(*max_sample);
                        for size in 1..=*max_sample {
                            let sample = index::sample(&mut rng, *n, size).into_vec();
                            let forward = sample.iter().any(|&j| real.final_types[j]);
                            let s = asg_trace(&real, &sample)?.survived;
                            bad += (s != forward) as u64;
                            survived.push(s);
                        }
                        Ok((bad, survived))
                    })
                    .collect::<Result<_>>()?;
                let report = DualCheckReport {
                    params: *dp,
                    n: *n,
                    t: *horizon,
                    realizations: *realizations,
                    violations: per.iter().map(|r| r.0).sum(),
                    survival: (0..*max_sample)
                        .map(|k| per.iter().filter(|r| r.1[k]).count() as f64 / per.len().max(1) as f64)
                        .collect(),
                };
                if report.violations > 0 {
                    out.report.notes.push(format!("{} duality violations", report.violations));
                }
                out.json("dual_check.json", &report)?;
            }
            Plan::ScalingCheck { b, c, ks, horizon, x0, replicates, dt } => {
                let rep = scaling_check(*b, *c, ks, *horizon, *x0, *replicates, *dt, seed)?;
                write_rows(
                    out.file("scaling.csv")?,
                    &["K", "w1", "mean_chain", "se_chain", "mean_diffusion", "se_diffusion"],
                    rep.rows.iter().map(|r| {
                        vec![
                            r.k.to_string(),
                            fmt_f64(r.w1),
                            fmt_f64(r.mean_chain),
                            fmt_f64(r.se_chain),
                            fmt_f64(r.mean_diffusion),
                            fmt_f64(r.se_diffusion),
                        ]
                    }),
                )?;
            }
        }
        Ok(out.report)
    }
}

/// Default output directory for an experiment.
pub fn default_out(experiment: Experiment) -> PathBuf {
    PathBuf::from("out").join(experiment.name())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn prep(e: Experiment, text: &str) -> Prepared {
        prepare(e, &Config::parse(text).unwrap())
    }

    #[test]
    fn names_round_trip() {
        for e in Experiment::ALL {
            assert_eq!(Experiment::from_name(e.name()), Some(e));
        }
        assert_eq!(Experiment::from_name("rates-t"), Some(Experiment::RatesT));
    }

    #[test]
    fn yaglom_without_competition_is_listed() {
        let p = prep(Experiment::Yaglom, "b = 1\nc = 0\nd = 1");
        assert_eq!(p.violations.len(), 1, "{:?}", p.violations);
        assert!(p.violations[0].contains("unsupported regime"));
    }

    #[test]
    fn weak_competition_needs_selection_above_mutation() {
        let p = prep(Experiment::PiStar, "s = 1\nmu = 1.2\nnu = 0.01\nweak_competition = true");
        assert_eq!(p.violations.len(), 1, "{:?}", p.violations);
        assert!(p.violations[0].contains("unsupported regime"));
    }

    #[test]
    fn valid_config_is_clean() {
        let p = prep(Experiment::RatesQ, "b = 1\nc = 0.3\nd = 1\nK = 50\nseed = 4");
        assert!(p.violations.is_empty(), "{:?}", p.violations);
        assert_eq!(p.seed, 4);
        assert_eq!(p.resolved["K"], "50");
    }

    #[test]
    fn unknown_and_mismatched_keys() {
        let p = prep(Experiment::RatesQ, "experiment = mrca\nb = 1\nc = 0.3\nd = 1\nlambda = 2");
        assert_eq!(p.violations.len(), 2, "{:?}", p.violations);
    }

    #[test]
    fn missing_parameters_are_reported() {
        let p = prep(Experiment::Mrca, "b = 1");
        assert_eq!(p.violations.len(), 2, "{:?}", p.violations);
    }
}
