//! CSV output for run prices, per-strike summaries and loss logs.

use std::io::{self, Write};

use crate::solver::{SchemeConfig, SolveResult};

/// Six significant digits, no exponent for ordinary magnitudes.
pub fn sig6(x: f64) -> String {
    if x == 0.0 || !x.is_finite() {
        return format!("{x}");
    }
    let mag = x.abs().log10().floor() as i32;
    if !(-4..=9).contains(&mag) {
        return format!("{x:.5e}");
    }
    let decimals = (5 - mag).max(0) as usize;
    format!("{x:.decimals$}")
}

/// Stable FNV-1a hash of the config's debug representation, used to
/// tag summary rows with the settings that produced them.
pub fn config_hash<T: std::fmt::Debug>(config: &T) -> String {
    let text = format!("{config:?}");
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for b in text.bytes() {
        h ^= b as u64;
        h = h.wrapping_mul(0x0100_0000_01b3);
    }
    format!("{h:016x}")
}

/// One row per independent run; `seed` is the run's own seed.
pub fn write_runs<W: Write>(out: &mut W, results: &[SolveResult], hash: &str) -> io::Result<()> {
    writeln!(out, "run,K,scheme,price,seed,config")?;
    for res in results {
        for r in &res.runs {
            writeln!(
                out,
                "{},{},{},{},{},{}",
                r.run,
                sig6(res.strike),
                res.scheme.label(),
                sig6(r.price),
                r.seed,
                hash
            )?;
        }
    }
    Ok(())
}

/// One row per result; `hash` identifies the full experiment settings.
pub fn write_summary<W: Write>(
    out: &mut W,
    results: &[SolveResult],
    config: &SchemeConfig,
    hash: &str,
) -> io::Result<()> {
    writeln!(out, "scheme,K,mean,rsd,runs,seed,config")?;
    for res in results {
        writeln!(
            out,
            "{},{},{},{},{},{},{}",
            res.scheme.label(),
            sig6(res.strike),
            sig6(res.mean()),
            sig6(res.rsd()),
            res.runs.len(),
            config.seed,
            hash
        )?;
    }
    Ok(())
}

/// Interval-mean loss history of every step of every run.
pub fn write_losses<W: Write>(out: &mut W, result: &SolveResult) -> io::Result<()> {
    writeln!(out, "run,step,iteration,loss")?;
    for r in &result.runs {
        for s in &r.steps {
            for &(it, loss) in &s.history {
                writeln!(out, "{},{},{},{}", r.run, s.step, it, sig6(loss))?;
            }
        }
    }
    Ok(())
}
