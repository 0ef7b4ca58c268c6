use anyhow::Result;
use serde::Serialize;
use serde_json::{json, Value};

use dyadic_core::calibration::{self, Pinned};
use dyadic_core::decomp::{verify_random_cases, verify_random_product_cases};
use dyadic_core::montecarlo::{average_operator, petermichl_demo, petermichl_shift, EntryTest};
use dyadic_core::norms::{geometric_constant, geometric_constant_limit, geometric_truncation_bound};
use dyadic_core::study::{commutator_bound_study, fs_study, jn_study, uniformity_study};
use dyadic_core::{
    run_selftest, GridSpec, LinearOperator, NormReport, Orientation, ProductGrid, ShiftFamily, StudyKind,
};

use crate::config::{Format, RunConfig};

#[derive(Clone, Debug, Serialize)]
pub struct Failure {
    pub case: String,
    pub detail: String,
    pub replay_seed: u64,
}

pub struct Outcome {
    pub results: Value,
    /// CSV body (header plus rows) when the format is CSV.
    pub csv: Option<Vec<u8>>,
    pub failures: Vec<Failure>,
    pub summary: Vec<String>,
}

fn to_csv<T: Serialize>(rows: &[T]) -> Result<Vec<u8>> {
    let mut w = csv::Writer::from_writer(Vec::new());
    for r in rows {
        w.serialize(r)?;
    }
    Ok(w.into_inner()?)
}

fn csv_if<T: Serialize>(cfg: &RunConfig, rows: &[T]) -> Result<Option<Vec<u8>>> {
    match cfg.format {
        Format::Csv => Ok(Some(to_csv(rows)?)),
        Format::Json => Ok(None),
    }
}

/// Exact upper bounds that hold with no calibration.
const EXACT_LIMIT: f64 = 1.0 + 1e-12;

pub fn run(cfg: &RunConfig) -> Result<Outcome> {
    match cfg.command.as_str() {
        "verify-decomp" => verify_decomp(cfg),
        "norm-study" => norm_study(cfg),
        "jn-check" => jn(cfg),
        "mc-demo" => mc_demo(cfg),
        "bound-study" => bound_study(cfg),
        "selftest" => selftest(cfg),
        other => anyhow::bail!("unknown command {other}"),
    }
}

#[derive(Serialize)]
struct DecompRow {
    case: String,
    shape: String,
    term_count: usize,
    count_bound: usize,
    trials: usize,
    max_residual: f64,
    tol: f64,
    pass: bool,
    worst_seed: u64,
}

fn verify_decomp(cfg: &RunConfig) -> Result<Outcome> {
    let grid = GridSpec::new(cfg.d, cfg.n)?;
    let mut one = Vec::new();
    for i in 0..=cfg.imax {
        for j in 0..=cfg.jmax {
            one.push(verify_random_cases(&grid, i, j, ShiftFamily::Cancellative, cfg.trials, cfg.seed, cfg.tol)?);
        }
    }
    for o in [Orientation::Analysis, Orientation::Synthesis] {
        one.push(verify_random_cases(&grid, 0, 0, ShiftFamily::Noncancellative(o), cfg.trials, cfg.seed, cfg.tol)?);
    }
    let mut rows: Vec<DecompRow> = one
        .iter()
        .map(|r| DecompRow {
            case: r.case.clone(),
            shape: format!("d={} N={} i={} j={}", r.d, r.n, r.i, r.j),
            term_count: r.term_count,
            count_bound: r.count_bound,
            trials: r.trials,
            max_residual: r.max_residual,
            tol: r.tol,
            pass: r.pass && r.term_count <= r.count_bound,
            worst_seed: r.worst_seed,
        })
        .collect();

    let mut two = Vec::new();
    if cfg.biparam {
        let pg = ProductGrid::unshifted(cfg.d, cfg.n2, cfg.d, cfg.n2)?;
        let top = cfg.biparam_max.min(cfg.n2 - 1);
        let mut shapes: Vec<_> =
            (0..=top).flat_map(|i| (0..=top).map(move |j| (i, j, ShiftFamily::Cancellative))).collect();
        shapes.push((0, 0, ShiftFamily::Noncancellative(Orientation::Analysis)));
        shapes.push((0, 0, ShiftFamily::Noncancellative(Orientation::Synthesis)));
        for &a in &shapes {
            for &b in &shapes {
                two.push(verify_random_product_cases(&pg, a, b, cfg.trials, cfg.seed, cfg.tol)?);
            }
        }
        rows.extend(two.iter().map(|r| DecompRow {
            case: r.case.clone(),
            shape: format!("N1={} N2={} ({},{})x({},{})", r.n1, r.n2, r.i1, r.j1, r.i2, r.j2),
            term_count: r.term_count,
            count_bound: r.count_bound,
            trials: r.trials,
            max_residual: r.max_residual,
            tol: r.tol,
            pass: r.pass && r.term_count <= r.count_bound,
            worst_seed: r.worst_seed,
        }));
    }

    let failures = rows
        .iter()
        .filter(|r| !r.pass)
        .map(|r| Failure {
            case: format!("{} {}", r.case, r.shape),
            detail: format!(
                "residual {:e} (tol {:e}), {} terms (bound {})",
                r.max_residual, r.tol, r.term_count, r.count_bound
            ),
            replay_seed: r.worst_seed,
        })
        .collect();
    let worst = rows.iter().map(|r| r.max_residual).fold(0.0, f64::max);
    let summary = vec![format!("{} cases, max residual {worst:.3e} (tol {:e})", rows.len(), cfg.tol)];
    Ok(Outcome {
        results: json!({ "one_parameter": one, "bi_parameter": two, "max_residual": worst }),
        csv: csv_if(cfg, &rows)?,
        failures,
        summary,
    })
}

fn pinned_for(kind: StudyKind) -> Option<Pinned> {
    match kind {
        StudyKind::P => Some(calibration::P_RATIO),
        StudyKind::PP => Some(calibration::PP_RATIO),
        StudyKind::PP1 => Some(calibration::PP1_RATIO),
        StudyKind::BPk => Some(calibration::BPK_RATIO),
        StudyKind::PBl => Some(calibration::PBL_RATIO),
        _ => None,
    }
}

/// Exact limit for `B_k` and `S^(k)`, the pinned one for calibrated kinds,
/// none for `B_{k,l}` (rectangle BMO does not control it).
fn limit_for(kind: StudyKind) -> Option<f64> {
    match kind {
        StudyKind::Bk | StudyKind::Sk => Some(EXACT_LIMIT),
        StudyKind::Bkl => None,
        k => pinned_for(k).map(|p| p.limit()),
    }
}

fn check_reports<'a>(pairs: impl IntoIterator<Item = (&'a NormReport, Option<f64>)>, failures: &mut Vec<Failure>) {
    for (r, lim) in pairs {
        if let Some(lim) = lim {
            if !(r.max_ratio <= lim) {
                failures.push(Failure {
                    case: format!("{} k={:?} l={:?} i={:?} j={:?}", r.kind, r.k, r.l, r.i, r.j),
                    detail: format!("ratio {} exceeds {lim}", r.max_ratio),
                    replay_seed: r.worst_seed,
                });
            }
        }
    }
}

fn norm_study(cfg: &RunConfig) -> Result<Outcome> {
    let mut reports = Vec::new();
    let mut limits = Vec::new();
    for name in &cfg.kinds {
        let kind = StudyKind::parse(name)?;
        let (n, params): (usize, Vec<(usize, usize)>) = if kind.is_biparam() {
            let top = cfg.n2 - 1;
            let ls: Vec<usize> = if matches!(kind, StudyKind::PP | StudyKind::PP1 | StudyKind::BPk) {
                vec![0]
            } else {
                (0..=cfg.lmax.min(top)).collect()
            };
            let ks: Vec<usize> = if matches!(kind, StudyKind::PP | StudyKind::PP1 | StudyKind::PBl) {
                vec![0]
            } else {
                (0..=cfg.kmax.min(top)).collect()
            };
            (cfg.n2, ks.iter().flat_map(|&k| ls.iter().map(move |&l| (k, l))).collect())
        } else if kind == StudyKind::P {
            (cfg.n, vec![(0, 0)])
        } else {
            (cfg.n, (0..=cfg.kmax).map(|k| (k, 0)).collect())
        };
        let reps = uniformity_study(kind, cfg.d, n, &params, cfg.trials, cfg.seed)?;
        limits.extend(std::iter::repeat_n(limit_for(kind), reps.len()));
        reports.extend(reps);
    }
    let mut failures = Vec::new();
    check_reports(reports.iter().zip(limits.iter().copied()), &mut failures);
    let summary = cfg
        .kinds
        .iter()
        .map(|k| {
            let m = reports.iter().filter(|r| r.kind.eq_ignore_ascii_case(k)).map(|r| r.max_ratio).fold(0.0, f64::max);
            format!("{k}: max ratio {m:.6}")
        })
        .collect();
    Ok(Outcome {
        results: json!({ "reports": reports, "limits": limits }),
        csv: csv_if(cfg, &reports)?,
        failures,
        summary,
    })
}

fn pinned_exponent(table: &[(f64, Pinned)], p: f64) -> Option<f64> {
    table.iter().find(|(q, _)| *q == p).map(|(_, pin)| pin.limit())
}

fn jn(cfg: &RunConfig) -> Result<Outcome> {
    let grid = GridSpec::new(cfg.d, cfg.n)?;
    let jn = jn_study(&grid, &cfg.ps, cfg.trials, cfg.seed)?;
    let fs = fs_study(&grid, &cfg.ps, cfg.fs_family, cfg.trials, cfg.seed)?;
    let mut failures = Vec::new();
    // p = 2 is an identity for the square function, so it is checked exactly.
    let jn_limit = |p: f64| if p == 2.0 { Some(EXACT_LIMIT) } else { pinned_exponent(&calibration::JN, p) };
    check_reports(jn.iter().zip(cfg.ps.iter().map(|&p| jn_limit(p))), &mut failures);
    check_reports(fs.iter().zip(cfg.ps.iter().map(|&p| pinned_exponent(&calibration::FS, p))), &mut failures);
    let summary = jn.iter().chain(&fs).map(|r| format!("{}: max ratio {:.6}", r.kind, r.max_ratio)).collect();
    let rows: Vec<NormReport> = jn.iter().chain(&fs).cloned().collect();
    Ok(Outcome { results: json!({ "jn": jn, "fs": fs }), csv: csv_if(cfg, &rows)?, failures, summary })
}

#[derive(Serialize)]
struct MatrixRow {
    row: usize,
    col: usize,
    mean: f64,
    stderr: f64,
}

fn mc_demo(cfg: &RunConfig) -> Result<Outcome> {
    let report = petermichl_demo(cfg.n, cfg.samples, cfg.seed)?;
    let mut failures = Vec::new();
    let mut expect = |name: &str, t: &EntryTest, want: bool| {
        if t.pass != want {
            failures.push(Failure {
                case: name.into(),
                detail: format!("{} exceedances (allowed {:.1}), max z {:.3}", t.exceedances, t.allowed, t.max_z),
                replay_seed: cfg.seed,
            });
        }
    };
    expect("averaged toeplitz", &report.toeplitz, true);
    expect("averaged antisymmetry", &report.antisymmetry, true);
    expect("single grid toeplitz (expected to fail)", &report.single_omega_toeplitz, false);
    let csv = match cfg.format {
        Format::Csv => {
            let base = GridSpec::new(1, cfg.n)?;
            let m = average_operator(
                &base,
                |g| Ok(LinearOperator::from_shift(&petermichl_shift(g)?)),
                cfg.samples,
                cfg.seed,
            )?;
            let rows: Vec<MatrixRow> =
                m.entries().map(|(row, col, mean, stderr)| MatrixRow { row, col, mean, stderr }).collect();
            Some(to_csv(&rows)?)
        }
        Format::Json => None,
    };
    let line = |n: &str, t: &EntryTest| {
        format!("{n}: {} / {:.1} exceedances, max z {:.3}, pass {}", t.exceedances, t.allowed, t.max_z, t.pass)
    };
    let summary = vec![
        line("toeplitz", &report.toeplitz),
        line("antisymmetry", &report.antisymmetry),
        line("single grid toeplitz", &report.single_omega_toeplitz),
    ];
    Ok(Outcome { results: serde_json::to_value(&report)?, csv, failures, summary })
}

/// Smallest cap whose tail bound is below `eps`.
fn cap_for(delta: f64, eps: f64) -> usize {
    (1..).find(|&c| geometric_truncation_bound(delta, c) < eps).expect("the series converges")
}

fn bound_study(cfg: &RunConfig) -> Result<Outcome> {
    let grid = GridSpec::new(cfg.d, cfg.n)?;
    let study = commutator_bound_study(&grid, cfg.delta, cfg.imax, cfg.jmax, cfg.trials, cfg.seed)?;
    let cap = cap_for(cfg.delta, 1e-12);
    let truncated = geometric_constant(cfg.delta, cap);
    let closed = geometric_constant_limit(cfg.delta);
    let gap = (closed - truncated).abs();
    let mut failures = Vec::new();
    check_reports(study.reports.iter().map(|r| (r, Some(calibration::COMMUTATOR_RATIO.limit()))), &mut failures);
    if gap > 1e-10 * closed.max(1.0) {
        failures.push(Failure {
            case: "geometric constant".into(),
            detail: format!("closed form {closed} vs truncated sum {truncated}"),
            replay_seed: cfg.seed,
        });
    }
    let summary = vec![
        format!("sup ratio {:.6} (limit {:.6})", study.sup_ratio, calibration::COMMUTATOR_RATIO.limit()),
        format!(
            "weighted total {:.6} vs geometric constant {:.6} at cap {}",
            study.weighted_total,
            study.geometric_constant,
            cfg.imax.max(cfg.jmax)
        ),
        format!("geometric constant closed form {closed:.12}, truncated at {cap}: {truncated:.12}"),
    ];
    let results = json!({
        "study": study,
        "geometric_constant_closed_form": closed,
        "geometric_constant_truncated": truncated,
        "truncation_cap": cap,
        "closed_form_gap": gap,
    });
    Ok(Outcome { results, csv: csv_if(cfg, &study.reports)?, failures, summary })
}

fn selftest(cfg: &RunConfig) -> Result<Outcome> {
    let report = run_selftest(cfg.d, cfg.n, cfg.seed, cfg.tol_algebra)?;
    let failures = report
        .checks
        .iter()
        .filter(|c| !c.pass)
        .map(|c| Failure {
            case: c.name.clone(),
            detail: format!("{:e} > {:e}", c.value, c.tol),
            replay_seed: cfg.seed,
        })
        .collect();
    let summary = report.checks.iter().map(|c| format!("{}: {:.3e} (tol {:e})", c.name, c.value, c.tol)).collect();
    Ok(Outcome { results: serde_json::to_value(&report)?, csv: csv_if(cfg, &report.checks)?, failures, summary })
}
