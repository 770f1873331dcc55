//! Self-describing CSV output: a comment header echoing how the run was
//! produced, followed by a deterministic body.

use std::io::Write;
use std::path::Path;

use vsc_core::{ComparisonReport, ConsistencyTable};

/// Echoed into every output so results carry their own provenance. Only the
/// wall-clock line varies between identical runs, which is why it lives in
/// the comment header and not the body.
pub struct RunManifest {
    pub command: String,
    pub scenario: String,
    pub args: Vec<String>,
    pub overrides: Vec<String>,
    pub out: String,
    pub elapsed_ms: u128,
}

impl RunManifest {
    pub fn write(&self, w: &mut dyn Write) -> std::io::Result<()> {
        writeln!(w, "# vsc {}", env!("CARGO_PKG_VERSION"))?;
        writeln!(w, "# command: {}", self.command)?;
        writeln!(w, "# scenario: {}", self.scenario)?;
        writeln!(w, "# args: {}", join_or_none(&self.args))?;
        writeln!(w, "# overrides: {}", join_or_none(&self.overrides))?;
        writeln!(w, "# output: {}", self.out)?;
        writeln!(w, "# elapsed_ms: {}", self.elapsed_ms)?;
        Ok(())
    }
}

fn join_or_none(items: &[String]) -> String {
    if items.is_empty() {
        "none".to_string()
    } else {
        items.join(" ")
    }
}

pub fn write_consistency_csv(
    w: &mut dyn Write,
    manifest: &RunManifest,
    table: &ConsistencyTable,
) -> std::io::Result<()> {
    manifest.write(w)?;
    writeln!(w, "scenario,n,t_target,time_s,p_cons")?;
    for row in &table.rows {
        let time = match row.time_s {
            None => "inf".to_string(),
            Some(t) => t.to_string(),
        };
        writeln!(
            w,
            "{},{},{},{},{}",
            row.scenario, row.n, row.t_target, time, row.p_cons
        )?;
    }
    Ok(())
}

pub fn write_comparison_csv(
    w: &mut dyn Write,
    manifest: &RunManifest,
    scenario: &str,
    n: u32,
    report: &ComparisonReport,
) -> std::io::Result<()> {
    manifest.write(w)?;
    writeln!(
        w,
        "scenario,n,t_target,time_s,p_hat,half_width_95,p_analytic,z"
    )?;
    for row in &report.rows {
        writeln!(
            w,
            "{},{},{},{},{},{},{},{}",
            scenario,
            n,
            report.t_target,
            row.time_s,
            row.p_hat,
            row.half_width_95,
            row.p_analytic,
            row.z
        )?;
    }
    Ok(())
}

/// Write to the given path, or stdout when no path was supplied.
pub fn emit(
    out: Option<&Path>,
    body: impl FnOnce(&mut dyn Write) -> std::io::Result<()>,
) -> std::io::Result<()> {
    match out {
        Some(path) => {
            let mut file = std::io::BufWriter::new(std::fs::File::create(path)?);
            body(&mut file)?;
            file.flush()
        }
        None => {
            let stdout = std::io::stdout();
            let mut lock = stdout.lock();
            body(&mut lock)?;
            lock.flush()
        }
    }
}
