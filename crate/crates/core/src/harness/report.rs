//! Canonical JSON (sorted keys, floats with six decimals) and plain-text
//! tables for reports.

use std::fmt::Write as _;

use serde::Serialize;
use serde_json::Value;

use super::eval::EvalReport;
use super::sweep::SweepReport;
use crate::corpus::Level;
use crate::error::Result;

/// Serializes `value` with object keys sorted, no insignificant whitespace
/// and every non-integer number printed with exactly six decimals.
pub fn to_canonical_json<T: Serialize>(value: &T) -> Result<String> {
    let v = serde_json::to_value(value)?;
    let mut out = String::new();
    write_value(&v, &mut out);
    Ok(out)
}

fn write_value(v: &Value, out: &mut String) {
    match v {
        Value::Null | Value::Bool(_) | Value::String(_) => out.push_str(&v.to_string()),
        Value::Number(n) => {
            if n.is_f64() {
                let f = n.as_f64().expect("f64");
                write!(out, "{f:.6}").expect("write to string");
            } else {
                out.push_str(&n.to_string());
            }
        }
        Value::Array(items) => {
            out.push('[');
            for (i, item) in items.iter().enumerate() {
                if i > 0 {
                    out.push(',');
                }
                write_value(item, out);
            }
            out.push(']');
        }
        Value::Object(map) => {
            let mut keys: Vec<&String> = map.keys().collect();
            keys.sort();
            out.push('{');
            for (i, k) in keys.into_iter().enumerate() {
                if i > 0 {
                    out.push(',');
                }
                out.push_str(&Value::String(k.clone()).to_string());
                out.push(':');
                write_value(&map[k], out);
            }
            out.push('}');
        }
    }
}

fn pct(x: f64) -> String {
    format!("{:.2}", 100.0 * x)
}

/// Rows `P / R / F1` per task, in percent.
pub fn eval_table(report: &EvalReport) -> String {
    let mut out = String::new();
    writeln!(
        out,
        "dataset: {}  variant: {}  n: {}",
        report.dataset, report.variant, report.window_size
    )
    .expect("write");
    writeln!(out, "{:<6} {:>9} {:>9} {:>9} {:>7} {:>7} {:>7}", "task", "P", "R", "F1", "TP", "FP", "FN").expect("write");
    for level in Level::ALL {
        let m = report.task(level);
        writeln!(
            out,
            "{:<6} {:>9} {:>9} {:>9} {:>7} {:>7} {:>7}",
            level.name(),
            pct(m.precision),
            pct(m.recall),
            pct(m.f1),
            m.confusion.tp,
            m.confusion.fp,
            m.confusion.fn_
        )
        .expect("write");
    }
    out
}

/// One row per window size with F1 per task (percent) and throughput.
pub fn sweep_table(report: &SweepReport) -> String {
    let mut out = String::new();
    writeln!(out, "{:>4} {:>9} {:>9} {:>9} {:>12}", "n", "PW", "PPH", "IPH", "samples/s").expect("write");
    for (n, point) in &report.points {
        let r = &point.report;
        writeln!(
            out,
            "{:>4} {:>9} {:>9} {:>9} {:>12.2}",
            n,
            pct(r.task(Level::Pw).f1),
            pct(r.task(Level::Pph).f1),
            pct(r.task(Level::Iph).f1),
            point.samples_per_second
        )
        .expect("write");
    }
    out
}
