//! Convergence logs and run summaries.

use crate::error::{Error, Result};
use crate::pdhg::HistoryRecord;
use std::io::Write;
use std::path::Path;

fn sci(v: f64) -> String {
    if v.is_nan() {
        "nan".into()
    } else {
        format!("{v:.6e}")
    }
}

fn opt(v: Option<f64>) -> String {
    match v {
        Some(x) => sci(x),
        None => "nan".into(),
    }
}

/// One row per history record: the error indicator every iteration, the full
/// diagnostics on the rows where they were computed (`nan` elsewhere).
pub fn write_convergence_csv(history: &[HistoryRecord], path: impl AsRef<Path>) -> Result<()> {
    if history.is_empty() {
        return Err(Error::InvalidArgument(
            "refusing to write an empty convergence log".into(),
        ));
    }
    let file = std::fs::File::create(path.as_ref())?;
    let mut w = std::io::BufWriter::new(file);
    writeln!(w, "iter,err,objective,kkt_m,kkt_s,mass_drift,phi_T_sum")?;
    for rec in history {
        match rec.diag {
            Some(d) => writeln!(
                w,
                "{},{},{},{},{},{},{}",
                rec.iter,
                sci(rec.err),
                sci(d.objective),
                sci(d.kkt_flux),
                opt(d.kkt_source),
                sci(d.mass_drift),
                sci(d.phi_terminal_sum),
            )?,
            None => writeln!(
                w,
                "{},{},nan,nan,nan,nan,nan",
                rec.iter,
                sci(rec.err)
            )?,
        }
    }
    w.flush()?;
    Ok(())
}
