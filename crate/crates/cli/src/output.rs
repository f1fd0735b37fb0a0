//! CSV emission and number formatting.

use crate::config::CliResult;
use std::io::Write;
use vropt_core::trace::SolverTrace;

pub const TRACE_HEADER: [&str; 7] = ["step", "passes", "objective", "gap", "grad_norm", "bits", "ms"];

/// Shortest round-trip representation; `inf`/`nan` spelled out.
pub fn num(x: f64) -> String {
    if x.is_nan() {
        "nan".into()
    } else if x.is_infinite() {
        if x > 0.0 { "inf" } else { "-inf" }.into()
    } else {
        format!("{x}")
    }
}

/// Work-table cell: three significant figures, truncated, with all integer
/// digits kept (1.0612 -> "1.06", 116.95 -> "116", 1293.2 -> "1293").
pub fn work_cell(x: f64) -> String {
    if x == 0.0 || !x.is_finite() {
        return num(x);
    }
    let mag = x.abs().log10().floor() as i32;
    let decimals = (2 - mag).max(0);
    let scale = 10f64.powi(decimals);
    format!("{:.*}", decimals as usize, (x * scale + 1e-9).floor() / scale)
}

/// Writes the trace as CSV; `timing = false` leaves `ms` empty.
pub fn write_trace<W: Write>(out: W, trace: &SolverTrace, timing: bool) -> CliResult<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(TRACE_HEADER)?;
    for r in &trace.records {
        w.write_record([
            r.step.to_string(),
            num(r.passes),
            num(r.objective),
            r.gap.map(num).unwrap_or_default(),
            num(r.grad_norm),
            num(r.bits),
            if timing { format!("{:.3}", r.ms) } else { String::new() },
        ])?;
    }
    w.flush()?;
    Ok(())
}

/// Opens `path` for writing, or stdout when absent or `-`.
pub fn sink(path: Option<&str>) -> CliResult<Box<dyn Write>> {
    Ok(match path {
        None | Some("-") => Box::new(std::io::stdout().lock()),
        Some(p) => Box::new(std::io::BufWriter::new(std::fs::File::create(p)?)),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use vropt_core::trace::Tracer;

    #[test]
    fn significant_figures() {
        assert_eq!(work_cell(1.0612), "1.06");
        assert_eq!(work_cell(116.95), "116");
        assert_eq!(work_cell(3.0052), "3.00");
        assert_eq!(work_cell(1293.2), "1293");
        assert_eq!(work_cell(7.5878), "7.58");
    }

    #[test]
    fn trace_layout() {
        let mut t = Tracer::new("x", 0, 1.0);
        t.record(1, 2.0, 0.5, None, 0.25, 0.0);
        t.record(2, 4.0, 0.125, Some(1e-3), 0.0625, 64.0);
        let mut buf = Vec::new();
        write_trace(&mut buf, &t.finish(), false).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert_eq!(text, "step,passes,objective,gap,grad_norm,bits,ms\n1,2,0.5,,0.25,0,\n2,4,0.125,0.001,0.0625,64,\n");
    }
}
