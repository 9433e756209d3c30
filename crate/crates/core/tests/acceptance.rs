//! Acceptance checks, one line per criterion. Runs without the libtest
//! harness so every line prints even when an earlier one fails.

use std::f64::consts::PI;
use std::path::Path;
use std::time::{Duration, Instant};

use rateless::capacity::{accumulated_layer_mi, ideal_threshold_gain_sq, CodeSpec};
use rateless::cli::{execute, AllocateArgs, Command, DesignArgs, DitherArg, OptimizeArgs, SimulateArgs, Size, Table};
use rateless::closed_form::{design_2x2, design_3x3, max_rate_3x3, validate_perfect};
use rateless::gain::wrap_phase;
use rateless::optimizer::{optimize_gain_matrix, OptimizerConfig};
use rateless::power_alloc::{efficiency_lower_bound, verify_allocation, PowerAllocation};
use rateless::simulator::{simulate_dithered_repetition, Dither, SimConfig};
use rateless::tables::{shortfall_table, PUBLISHED_SHORTFALL_PCT};
use rateless::Error;

const LOSS_TABLE: [[f64; 9]; 9] = [
    [5.22, 6.77, 7.50, 7.92, 8.20, 8.40, 8.54, 8.65, 8.74],
    [0.00, 1.55, 2.28, 2.70, 2.98, 3.17, 3.32, 3.43, 3.52],
    [0.00, 0.00, 0.73, 1.16, 1.43, 1.63, 1.77, 1.88, 1.97],
    [0.00, 0.00, 0.00, 0.42, 0.70, 0.90, 1.04, 1.15, 1.24],
    [0.00, 0.00, 0.00, 0.00, 0.28, 0.47, 0.62, 0.73, 0.82],
    [0.00, 0.00, 0.00, 0.00, 0.00, 0.20, 0.34, 0.45, 0.54],
    [0.00, 0.00, 0.00, 0.00, 0.00, 0.00, 0.14, 0.26, 0.35],
    [0.00, 0.00, 0.00, 0.00, 0.00, 0.00, 0.00, 0.11, 0.20],
    [0.00, 0.00, 0.00, 0.00, 0.00, 0.00, 0.00, 0.00, 0.09],
];

const POWER_TABLE: [[f64; 5]; 4] = [
    [3.00, 40.80, 48.98, 55.77, 58.79],
    [12.00, 86.70, 61.21, 60.58, 61.65],
    [48.00, 86.70, 81.32, 71.48, 67.50],
    [192.00, 40.80, 63.48, 67.16, 67.06],
];
const POWER_TABLE_GAIN_DB: [f64; 5] = [0.0, -12.30, -16.78, -19.29, -20.99];

type Check = Result<String, String>;
type Criterion = (&'static str, fn() -> Check);

fn ensure(ok: bool, detail: String) -> Check {
    if ok {
        Ok(detail)
    } else {
        Err(detail)
    }
}

fn timed(limit: Duration, f: impl FnOnce() -> Check) -> Check {
    let start = Instant::now();
    let detail = f()?;
    let took = start.elapsed();
    ensure(took < limit, format!("{detail}; {:.2}s (limit {}s)", took.as_secs_f64(), limit.as_secs()))
}

fn csv_rows(dir: &Path, name: &str) -> Vec<Vec<f64>> {
    std::fs::read_to_string(dir.join(name))
        .unwrap()
        .lines()
        .skip(1)
        .map(|l| l.split(',').skip(1).map(|v| v.parse().unwrap()).collect())
        .collect()
}

fn run(cmd: Command, dir: &Path) -> Check {
    execute(&cmd, dir).map(|_| ()).map_err(|e| format!("{e}"))?;
    Ok(String::new())
}

fn table_one() -> Check {
    timed(Duration::from_secs(1), || {
        let dir = tempfile::tempdir().unwrap();
        run(
            Command::Tables {
                which: Table::Loss {
                    rate: 5.0,
                    max_layers: 9,
                    max_blocks: 10,
                },
            },
            dir.path(),
        )?;
        let grid = csv_rows(dir.path(), "loss.csv");
        let mut worst: f64 = 0.0;
        for (got, want) in grid.iter().zip(LOSS_TABLE) {
            for (g, w) in got.iter().zip(want) {
                worst = worst.max((g - w).abs());
            }
        }
        let anchors = [(grid[0][0], 5.22), (grid[2][8], 1.97), (grid[4][8], 0.82)];
        let anchored = anchors.iter().all(|(g, w)| (g - w).abs() <= 0.01);
        ensure(
            grid.len() == 9 && worst <= 0.01 && anchored,
            format!("81 entries, max deviation {worst:.4} dB"),
        )
    })
}

fn closed_form_three() -> Check {
    timed(Duration::from_secs(1), || {
        let g = design_3x3(6.0, 63.0).map_err(|e| e.to_string())?;
        let want = [[3.0, 12.0, 48.0], [24.0, 33.0, 6.0], [36.0, 18.0, 9.0]];
        let mag_err = g
            .magnitudes_sq()
            .iter()
            .zip(want)
            .flat_map(|(r, w)| r.iter().zip(w).map(|(a, b)| (a - b).abs()).collect::<Vec<_>>())
            .fold(0.0, f64::max);
        let phases = [
            (g.entries[1][1].phase_rad, (-5.0 / (2.0 * 22f64.sqrt())).acos()),
            (g.entries[1][2].phase_rad, 2.0 * PI - (3.0 * 7f64.sqrt()).atan()),
            (g.entries[2][1].phase_rad, -(7f64.sqrt()).atan()),
            (g.entries[2][2].phase_rad, PI - (7f64.sqrt() / 3.0).atan()),
        ];
        let phase_err = phases.iter().map(|(a, b)| wrap_phase(a - b).abs()).fold(0.0, f64::max);
        let unitary = g.unitarity_residual().unwrap() * 63.0;
        let spec = CodeSpec::natural(6.0, 3, 3).unwrap();
        let mut mi_err: f64 = 0.0;
        for m in 1..=3 {
            for l in 1..=3 {
                let mi = accumulated_layer_mi(&g, m, l, ideal_threshold_gain_sq(m, &spec), 1.0).unwrap();
                mi_err = mi_err.max((mi - 2.0).abs());
            }
        }
        ensure(
            mag_err < 1e-9 && phase_err < 1e-9 && unitary < 1e-9 && mi_err < 1e-9,
            format!("|g|^2 err {mag_err:.1e}, phase err {phase_err:.1e}, ||G^H G - PI|| {unitary:.1e}, MI err {mi_err:.1e}"),
        )
    })
}

fn existence_boundary() -> Check {
    let below = design_3x3(8.33, 1.0).is_ok();
    let above = matches!(design_3x3(8.34, 1.0), Err(Error::RateTooHigh { .. }));
    let closed = 6.0 * ((3.0 + 5f64.sqrt()) / 2.0).log2();
    let alt = 3.0 * ((7.0 + 3.0 * 5f64.sqrt()).log2() - 1.0);
    let diff = (max_rate_3x3() - closed).abs().max((closed - alt).abs());
    ensure(
        below && above && diff < 1e-12,
        format!("R=8.33 ok: {below}, R=8.34 rejected: {above}, max rate {:.6} (identity err {diff:.1e})", max_rate_3x3()),
    )
}

fn closed_form_two() -> Check {
    let mut worst: f64 = 0.0;
    let mut all = true;
    for k in 1..=20 {
        let rate = 0.6 * k as f64;
        let power = rate.exp2() - 1.0;
        let g = design_2x2(rate, power).map_err(|e| e.to_string())?;
        let spec = CodeSpec::natural(rate, 2, 2).unwrap();
        let check = validate_perfect(&g, &spec, 1e-9).map_err(|e| e.to_string())?;
        all &= check.passed;
        worst = worst.max(check.report.max_abs_relative);
    }
    ensure(all && worst < 1e-9, format!("20 rates in (0, 12], worst relative shortfall {worst:.1e}"))
}

fn table_three() -> Check {
    timed(Duration::from_secs(1), || {
        let dir = tempfile::tempdir().unwrap();
        run(
            Command::Allocate(AllocateArgs {
                per_layer_rate: 2.0,
                layers: 4,
                blocks: 5,
                power: 255.0,
                noise_var: 1.0,
            }),
            dir.path(),
        )?;
        let rows = csv_rows(dir.path(), "powers.csv");
        let gain_err = rows[0].iter().zip(POWER_TABLE_GAIN_DB).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
        let mut power_err: f64 = 0.0;
        for (got, want) in rows[1..].iter().zip(POWER_TABLE) {
            for (g, w) in got.iter().zip(want) {
                power_err = power_err.max((g - w).abs());
            }
        }
        let alloc = PowerAllocation::read(&dir.path().join("allocation.json")).map_err(|e| e.to_string())?;
        let sum_err = alloc.row_sums().iter().map(|s| ((s - 255.0) / 255.0).abs()).fold(0.0, f64::max);
        let residual = verify_allocation(&alloc).iter().flatten().map(|r| r.abs()).fold(0.0, f64::max);
        ensure(
            power_err <= 0.01 && gain_err <= 0.01 && sum_err < 1e-9 && residual < 1e-9,
            format!("power err {power_err:.4}, gain err {gain_err:.4} dB, row-sum err {sum_err:.1e}, rate residual {residual:.1e}"),
        )
    })
}

fn optimizer_square() -> Check {
    let mut parts = Vec::new();
    let mut ok = true;
    for n in 2..=10usize {
        let start = Instant::now();
        let spec = CodeSpec::natural(2.0 * n as f64, n, n).unwrap();
        let worst = match optimize_gain_matrix(&spec, &OptimizerConfig::default()) {
            Ok(r) => r.report.max_shortfall_pct,
            Err(Error::NonConvergence(r)) => r.report.max_shortfall_pct,
            Err(e) => return Err(e.to_string()),
        };
        let limit = if n <= 5 { 0.1 } else { 0.5 };
        let took = start.elapsed();
        ok &= worst <= limit && took < Duration::from_secs(600);
        parts.push(format!("{n}:{worst:.4}%/{:.0}s", took.as_secs_f64()));
    }
    ensure(ok, format!("L=M max shortfall {}", parts.join(" ")))
}

fn optimizer_layered() -> Check {
    let spec = CodeSpec::natural(5.0, 3, 10).unwrap();
    let worst = match optimize_gain_matrix(&spec, &OptimizerConfig::default()) {
        Ok(r) => r.report.max_shortfall_pct,
        Err(Error::NonConvergence(r)) => r.report.max_shortfall_pct,
        Err(e) => return Err(e.to_string()),
    };
    let published = shortfall_table();
    let mut table_err: f64 = 0.0;
    for m in 0..10 {
        for l in 0..3 {
            table_err = table_err.max((published.shortfall_pct[m][l] - PUBLISHED_SHORTFALL_PCT[l][m]).abs());
        }
    }
    ensure(
        worst <= 2.0 && table_err <= 0.05,
        format!("optimized 10x3 max shortfall {worst:.3}%; published design vs table max deviation {table_err:.3} pts"),
    )
}

fn efficiency() -> Check {
    let mid = efficiency_lower_bound(1.0 / 3.0).mid;
    let formula = (std::f64::consts::LN_2 / 3.0) / ((1.0f64 / 3.0).exp2() - 1.0);
    let dir = tempfile::tempdir().unwrap();
    run(
        Command::Tables {
            which: Table::Efficiency {
                max_rate: 4.0,
                points: 200,
            },
        },
        dir.path(),
    )?;
    let rows = csv_rows(dir.path(), "efficiency.csv");
    let ordered = rows.iter().all(|r| r[0] >= r[1]);
    ensure(
        (mid - formula).abs() < 1e-12 && (mid - 0.8889).abs() < 5e-5 && ordered,
        format!("mid bound at 1/3 = {mid:.5}; mid >= linear at all {} points: {ordered}", rows.len()),
    )
}

fn simulator() -> Check {
    timed(Duration::from_secs(30), || {
        let alloc = rateless::tables::power_table(2.0, 4, 5, 255.0).unwrap();
        let cfg = SimConfig::new(alloc, 100_000, 0x5eed);
        let r = simulate_dithered_repetition(&cfg).map_err(|e| e.to_string())?;
        let worst = r.max_relative_error();
        let first_row_three = r.analytic_sinr[0].iter().all(|s| (s - 3.0).abs() < 1e-9);
        let off = simulate_dithered_repetition(&SimConfig {
            dither: Dither::Off,
            ..cfg.clone()
        })
        .map_err(|e| e.to_string())?;
        ensure(
            worst < 0.02 && r.max_offdiag_corr < 0.02 && off.max_offdiag_corr > 0.1 && first_row_three,
            format!(
                "m=1..5 max relative SINR error {:.3}%, off-diagonal {:.4} dithered / {:.3} plain",
                100.0 * worst,
                r.max_offdiag_corr,
                off.max_offdiag_corr
            ),
        )
    })
}

fn determinism() -> Check {
    let dir = tempfile::tempdir().unwrap();
    let alloc_dir = dir.path().join("alloc");
    let alloc_cmd = Command::Allocate(AllocateArgs {
        per_layer_rate: 2.0,
        layers: 4,
        blocks: 5,
        power: 255.0,
        noise_var: 1.0,
    });
    run(alloc_cmd.clone(), &alloc_dir)?;
    let commands = vec![
        alloc_cmd,
        Command::Design(DesignArgs {
            size: Size::ThreeByThree,
            rate: 6.0,
            power: None,
        }),
        Command::Optimize(OptimizeArgs {
            rate: 6.0,
            layers: 3,
            blocks: 4,
            power: None,
            seed: 3,
            restarts: 4,
            max_iterations: 2000,
            target_pct: None,
        }),
        Command::Tables { which: Table::Shortfall },
        Command::Tables {
            which: Table::Powers {
                per_layer_rate: 2.0,
                layers: 4,
                blocks: 5,
                power: 255.0,
            },
        },
        Command::Simulate(SimulateArgs {
            allocation: alloc_dir.join("allocation.json"),
            blocks: Some(3),
            symbols: 20_000,
            seed: 8,
            dither: DitherArg::Binary,
            gain_sq: None,
        }),
    ];
    let mut files = 0;
    for (i, cmd) in commands.into_iter().enumerate() {
        let first = dir.path().join(format!("run{i}"));
        let again = dir.path().join(format!("replay{i}"));
        run(cmd, &first)?;
        let manifest = rateless::formats::RunManifest::read(&first.join("manifest.json")).map_err(|e| e.to_string())?;
        let cmd: Command = serde_json::from_value(manifest.params.clone()).map_err(|e| e.to_string())?;
        run(cmd, &again)?;
        for name in manifest.outputs.keys().chain(std::iter::once(&"manifest.json".to_string())) {
            let a = std::fs::read(first.join(name)).unwrap();
            let b = std::fs::read(again.join(name)).unwrap();
            if a != b {
                return Err(format!("{name} differs after replay"));
            }
            files += 1;
        }
    }
    Ok(format!("6 commands replayed from manifests, {files} files byte-identical"))
}

fn main() {
    let criteria: [Criterion; 10] = [
        ("layering-loss table", table_one),
        ("3x3 closed form at R=6", closed_form_three),
        ("3x3 existence boundary", existence_boundary),
        ("2x2 closed form", closed_form_two),
        ("per-layer power table", table_three),
        ("optimizer, L = M", optimizer_square),
        ("optimizer, L < M", optimizer_layered),
        ("efficiency bounds", efficiency),
        ("simulator agreement", simulator),
        ("determinism", determinism),
    ];
    let mut failed = 0;
    for (i, (name, check)) in criteria.iter().enumerate() {
        match check() {
            Ok(detail) => println!("PASS criterion {:>2} {name}: {detail}", i + 1),
            Err(detail) => {
                failed += 1;
                println!("FAIL criterion {:>2} {name}: {detail}", i + 1);
            }
        }
    }
    println!("{} of {} criteria passed", criteria.len() - failed, criteria.len());
    if failed > 0 {
        std::process::exit(1);
    }
}
