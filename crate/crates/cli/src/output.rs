//! CSV series, JSON documents and atomic file replacement.

use std::fmt::Write as _;
use std::io;
use std::path::{Path, PathBuf};

use landau_core::dynamics::RecordFlags;
use landau_core::experiments::StabilityReport;
use landau_core::{CoupledTimeSeries, TimeSeries};
use serde::Serialize;

pub const SIM_HEADER: &str = "t,m2,m4,jgamma,entropy,lp_norm,mean_x,mean_y,mean_z,flags";
pub const COUPLED_HEADER: &str = "t,w2sq,pair_msd,jgamma_a,jgamma_b,jint,flags";

/// 17 significant digits: enough to round-trip any `f64`.
fn num(out: &mut String, x: f64) {
    write!(out, "{x:.16e},").expect("writing to a String");
}

fn flags(out: &mut String, f: &RecordFlags) {
    out.push_str(&f.names().join("|"));
    out.push('\n');
}

pub fn sim_csv(series: &TimeSeries<f64>) -> String {
    let mut out = format!("{SIM_HEADER}\n");
    for r in &series.records {
        for x in [r.t, r.m2, r.m4, r.j_gamma, r.entropy, r.lp_norm, r.mean.x, r.mean.y, r.mean.z] {
            num(&mut out, x);
        }
        flags(&mut out, &r.flags);
    }
    out
}

pub fn coupled_csv(series: &CoupledTimeSeries<f64>) -> String {
    let mut out = format!("{COUPLED_HEADER}\n");
    for r in &series.records {
        for x in [r.t, r.w2sq, r.pair_msd, r.j_a, r.j_b, r.jint] {
            num(&mut out, x);
        }
        flags(&mut out, &r.flags);
    }
    out
}

/// Writes to a sibling temporary file and renames it over `path`.
pub fn write_atomic(path: &Path, contents: &[u8]) -> io::Result<()> {
    let dir = path.parent().filter(|d| !d.as_os_str().is_empty()).unwrap_or(Path::new("."));
    std::fs::create_dir_all(dir)?;
    let name = path.file_name().ok_or_else(|| io::Error::other("output path has no file name"))?;
    let tmp = dir.join(format!(".{}.{}.tmp", name.to_string_lossy(), std::process::id()));
    std::fs::write(&tmp, contents)?;
    std::fs::rename(&tmp, path).inspect_err(|_| {
        std::fs::remove_file(&tmp).ok();
    })
}

pub fn write_json(path: &Path, value: &impl Serialize) -> io::Result<()> {
    let mut text = serde_json::to_string_pretty(value).map_err(io::Error::other)?;
    text.push('\n');
    write_atomic(path, text.as_bytes())
}

#[derive(Debug, Serialize)]
pub struct Manifest<'a, C: Serialize> {
    pub command: &'static str,
    pub version: &'static str,
    pub config_path: &'a Path,
    pub config: &'a C,
    pub seeds: Vec<u64>,
    pub threads: usize,
    /// Seconds since the Unix epoch at start.
    pub started_at: u64,
    pub wall_clock_seconds: f64,
    pub outputs: Vec<PathBuf>,
    pub blow_up: bool,
}

/// JSON view of a [`StabilityReport`]; non-finite numbers become `null`.
#[derive(Debug, Serialize)]
pub struct ReportDoc {
    pub seeds: Vec<u64>,
    pub slopes: Vec<Option<f64>>,
    pub c_hat: Option<f64>,
    pub c_max: Option<f64>,
    pub relative_spread: Option<f64>,
    pub dominance_holds: bool,
    pub envelope_slack: Option<f64>,
    pub envelope_holds: bool,
    pub growth_median: Option<f64>,
    pub trivial: bool,
    pub degenerate: bool,
    pub blow_up: bool,
    pub trajectories: Vec<Vec<(f64, f64)>>,
}

impl From<StabilityReport<f64>> for ReportDoc {
    fn from(r: StabilityReport<f64>) -> Self {
        let fin = |x: Option<f64>| x.filter(|v| v.is_finite());
        Self {
            seeds: r.seeds,
            slopes: r.slopes.into_iter().map(fin).collect(),
            c_hat: fin(r.c_hat),
            c_max: fin(r.c_max),
            relative_spread: fin(r.relative_spread),
            dominance_holds: r.dominance_holds,
            envelope_slack: fin(r.envelope_slack),
            envelope_holds: r.envelope_holds,
            growth_median: fin(r.growth_median),
            trivial: r.trivial,
            degenerate: r.degenerate,
            blow_up: r.blow_up,
            trajectories: r.trajectories,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn numbers_round_trip() {
        let mut s = String::new();
        for x in [0.1, 1.0 / 3.0, -2.5e-300, 6.02e23] {
            s.clear();
            num(&mut s, x);
            assert_eq!(s.trim_end_matches(',').parse::<f64>().unwrap(), x);
        }
    }

    #[test]
    fn atomic_write_replaces() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("sub/a.txt");
        write_atomic(&p, b"one").unwrap();
        write_atomic(&p, b"two").unwrap();
        assert_eq!(std::fs::read_to_string(&p).unwrap(), "two");
        assert_eq!(std::fs::read_dir(p.parent().unwrap()).unwrap().count(), 1);
    }
}
