//! Network file checks: rules, conservation, blocking zero and integrator.

use gasnet_core::conservation::{
    analyze_integrator, check_blocking_zero_qp, check_conservation, check_detectability_rank, BlockingZero, ConservationReport,
    DetectabilityReport, IntegratorReport,
};
use gasnet_core::interconnect::{compile, InterconnectError};
use gasnet_core::netdsl::{check_source, ParseDiagnostic, PortCounts};
use serde::Serialize;

#[derive(Debug, Clone, Serialize)]
pub struct NetworkChecks {
    pub counts: PortCounts,
    pub order: usize,
    pub well_posed_cond: f64,
    pub conservation: ConservationReport,
    pub blocking_zero: BlockingZero,
    pub integrator: IntegratorReport,
    pub detectability: DetectabilityReport,
}

#[derive(Debug, Clone, Serialize)]
pub struct CheckReport {
    pub passed: bool,
    pub diagnostics: Vec<ParseDiagnostic>,
    pub error: Option<String>,
    pub checks: Option<NetworkChecks>,
}

impl CheckReport {
    fn failed(diagnostics: Vec<ParseDiagnostic>, error: Option<String>) -> Self {
        CheckReport { passed: false, diagnostics, error, checks: None }
    }
}

/// Runs every check on network source text. Passing means the file is
/// valid and every applicable property holds.
pub fn check_network(source: &str) -> CheckReport {
    let desc = match check_source(source) {
        Ok((d, _)) => d,
        Err(d) => return CheckReport::failed(d, None),
    };
    let net = match compile(&desc) {
        Ok(n) => n,
        Err(InterconnectError::Invalid(d)) => return CheckReport::failed(d, None),
        Err(e) => return CheckReport::failed(Vec::new(), Some(e.to_string())),
    };
    let run = || -> Result<NetworkChecks, gasnet_core::conservation::ConservationError> {
        Ok(NetworkChecks {
            counts: net.counts,
            order: net.closed.order(),
            well_posed_cond: net.matrices.cond,
            conservation: check_conservation(&net.closed, &net.partition)?,
            blocking_zero: check_blocking_zero_qp(&net.closed, &net.partition)?,
            integrator: analyze_integrator(&net)?,
            detectability: check_detectability_rank(&net.aggregate, &net.partition)?,
        })
    };
    match run() {
        Ok(c) => {
            let conservation_ok = !c.conservation.applicable || c.conservation.conserves_mass;
            let zero_ok = matches!(c.blocking_zero, BlockingZero::NotApplicable) || c.blocking_zero.passes();
            CheckReport { passed: conservation_ok && zero_ok, diagnostics: Vec::new(), error: None, checks: Some(c) }
        }
        Err(e) => CheckReport::failed(Vec::new(), Some(e.to_string())),
    }
}
