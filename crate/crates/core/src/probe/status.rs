use crate::model::{AssertionStatus, Finding, ProbeKind, Severity};

/// Assertion status as a pure function of the probe kind and findings.
///
/// Default rule: any Critical is FAIL, else any High is PARTIAL_PASS, else
/// any Medium is WARN, else PASS. Advisory probes cap at WARN.
pub fn derive_status(kind: ProbeKind, findings: &[Finding]) -> AssertionStatus {
    let worst = findings.iter().map(|f| f.severity).max();
    if kind.is_advisory() {
        return match worst {
            Some(_) => AssertionStatus::Warn,
            None => AssertionStatus::Pass,
        };
    }
    match worst {
        Some(Severity::Critical) => AssertionStatus::Fail,
        Some(Severity::High) => AssertionStatus::PartialPass,
        Some(Severity::Medium) => AssertionStatus::Warn,
        None => AssertionStatus::Pass,
    }
}
