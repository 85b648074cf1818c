//! CSV rows with fixed headers and a stable number format.

use std::fmt::Write as _;

use crate::allocation::AllocationSolution;
use crate::hybrid::HybridReport;
use crate::pairing::PairingPlan;

pub const ALLOCATION_HEADER: &str = "instance_id,p1,p2,g1,g2,objective,feasible";
pub const PAIRING_HEADER: &str = "plan_id,group_id,user_ids,beam_width,beam_gains,objective";
pub const HYBRID_HEADER: &str = "mode,chain_id,user_id,rate,mui_power";

/// Nine significant digits: fixed notation for magnitudes in `[1e-5, 1e9)`,
/// scientific otherwise. Negative zero prints as `0`.
pub fn fmt_num(x: f64) -> String {
    if x == 0.0 {
        return "0".into();
    }
    if !x.is_finite() {
        return format!("{x}");
    }
    let mag = x.abs();
    if (1e-5..1e9).contains(&mag) {
        // exponent after rounding to nine digits, so carries are accounted for
        let sci = format!("{x:.8e}");
        let exponent: i32 = sci.rsplit('e').next().and_then(|e| e.parse().ok()).unwrap_or(0);
        let decimals = (8 - exponent).max(0) as usize;
        trim_zeros(format!("{x:.decimals$}"))
    } else {
        format!("{x:.8e}")
    }
}

fn trim_zeros(s: String) -> String {
    if !s.contains('.') {
        return s;
    }
    let t = s.trim_end_matches('0').trim_end_matches('.');
    if t == "-0" {
        "0".into()
    } else {
        t.to_string()
    }
}

/// `;`-joined numbers.
pub fn join_nums(xs: &[f64]) -> String {
    xs.iter().map(|&x| fmt_num(x)).collect::<Vec<_>>().join(";")
}

pub fn allocation_row(instance_id: usize, s: &AllocationSolution) -> String {
    let get = |v: &[f64], i: usize| v.get(i).copied().unwrap_or(0.0);
    format!(
        "{instance_id},{},{},{},{},{},{}",
        fmt_num(get(&s.powers, 0)),
        fmt_num(get(&s.powers, 1)),
        fmt_num(get(&s.gains, 0)),
        fmt_num(get(&s.gains, 1)),
        fmt_num(s.objective),
        s.feasible
    )
}

/// One row per group.
pub fn pairing_rows(plan_id: usize, plan: &PairingPlan) -> String {
    let mut out = String::new();
    for (gid, g) in plan.groups.iter().enumerate() {
        let ids = g.user_ids.iter().map(|u| u.to_string()).collect::<Vec<_>>().join(";");
        let _ = writeln!(
            out,
            "{plan_id},{gid},{ids},{},{},{}",
            fmt_num(g.beam_width),
            join_nums(&g.beam_gains),
            fmt_num(plan.objective)
        );
    }
    out
}

/// One row per user; `mode` is written verbatim.
pub fn hybrid_rows(mode: &str, report: &HybridReport) -> String {
    let mut out = String::new();
    for r in &report.rows {
        let _ = writeln!(out, "{mode},{},{},{},{}", r.chain_id, r.user_id, fmt_num(r.rate), fmt_num(r.mui_power));
    }
    out
}
