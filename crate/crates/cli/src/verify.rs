//! `revgn verify`: the oracle suite with one line per check.

use revgn_core::oracle::{run_suite, OracleReport, SuiteLevel};

pub fn verify(full: bool) -> Vec<OracleReport> {
    run_suite(if full { SuiteLevel::Full } else { SuiteLevel::Fast })
}

pub fn format_report(r: &OracleReport) -> String {
    let residuals: Vec<String> = r.residuals.iter().map(|(k, v)| format!("{k}={v:.3e}")).collect();
    let params: Vec<String> = r.instance_params.iter().map(|(k, v)| format!("{k}={v}")).collect();
    format!("{} {} [{}] {}", if r.pass { "PASS" } else { "FAIL" }, r.check, params.join(" "), residuals.join(" "))
}
