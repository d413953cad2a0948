use serde::Serialize;

use super::bus::RoundLog;
use super::message::Provenance;
use crate::CMatrix;

/// Absolute per-entry tolerance for "equal to a secret".
const MATCH_TOL: f64 = 1e-12;

/// Matrices that must never cross the backhaul verbatim.
#[derive(Clone, Debug, Default)]
pub struct Secrets {
    /// Training block of each operator.
    pub training: Vec<CMatrix>,
    /// Transmitted symbols of each operator.
    pub symbols: Vec<CMatrix>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(tag = "kind", content = "operator", rename_all = "snake_case")]
pub enum SecretRef {
    Training(usize),
    Symbols(usize),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Violation {
    /// A payload carried raw symbols instead of a mixed product.
    RawSymbols,
    /// A payload was not built by one of the checked constructors.
    Untagged,
    /// A payload (up to row order) equals a secret.
    SecretExposed,
    /// A channel product equals a secret because the mixing block is trivial
    /// (identity or permutation). This is a property of the channel, not of
    /// the protocol.
    DegenerateMixing,
}

#[derive(Clone, Debug, Serialize)]
pub struct LeakFinding {
    pub message_id: usize,
    pub violation: Violation,
    pub secret: Option<SecretRef>,
}

#[derive(Clone, Debug, Default, Serialize)]
pub struct LeakReport {
    pub messages_checked: usize,
    pub findings: Vec<LeakFinding>,
}

impl LeakReport {
    pub fn passed(&self) -> bool {
        self.findings.is_empty()
    }

    /// Findings other than degenerate-channel warnings.
    pub fn protocol_violations(&self) -> impl Iterator<Item = &LeakFinding> {
        self.findings
            .iter()
            .filter(|f| f.violation != Violation::DegenerateMixing)
    }

    pub fn warnings(&self) -> impl Iterator<Item = &LeakFinding> {
        self.findings
            .iter()
            .filter(|f| f.violation == Violation::DegenerateMixing)
    }
}

/// `true` if the rows of `payload` are a permutation of the rows of `secret`.
fn matches_up_to_row_order(payload: &CMatrix, secret: &CMatrix) -> bool {
    if payload.shape() != secret.shape() {
        return false;
    }
    let rows = payload.nrows();
    let mut used = vec![false; rows];
    'rows: for i in 0..rows {
        for j in 0..rows {
            if used[j] {
                continue;
            }
            let equal = payload
                .row(i)
                .iter()
                .zip(secret.row(j).iter())
                .all(|(a, b)| (a - b).norm() <= MATCH_TOL);
            if equal {
                used[j] = true;
                continue 'rows;
            }
        }
        return false;
    }
    true
}

/// Scan every logged payload for secrets and untagged or raw content.
///
/// Needs a log recorded with `retain_payloads`; messages without a payload
/// are only checked for provenance.
pub fn leak_check(log: &RoundLog, secrets: &Secrets) -> LeakReport {
    let mut report = LeakReport { messages_checked: log.messages.len(), findings: Vec::new() };
    let secret_list = secrets
        .training
        .iter()
        .enumerate()
        .map(|(k, m)| (SecretRef::Training(k), m))
        .chain(secrets.symbols.iter().enumerate().map(|(k, m)| (SecretRef::Symbols(k), m)));
    let secret_list: Vec<_> = secret_list.collect();
    for msg in &log.messages {
        match msg.provenance {
            Provenance::RawSymbols => report.findings.push(LeakFinding {
                message_id: msg.id,
                violation: Violation::RawSymbols,
                secret: None,
            }),
            Provenance::Unverified => report.findings.push(LeakFinding {
                message_id: msg.id,
                violation: Violation::Untagged,
                secret: None,
            }),
            Provenance::ChannelProduct | Provenance::StrippedResidual => {}
        }
        let Some(payload) = &msg.payload else { continue };
        for (secret, matrix) in &secret_list {
            if matches_up_to_row_order(payload, matrix) {
                let violation = match msg.provenance {
                    Provenance::ChannelProduct => Violation::DegenerateMixing,
                    _ => Violation::SecretExposed,
                };
                report.findings.push(LeakFinding {
                    message_id: msg.id,
                    violation,
                    secret: Some(*secret),
                });
            }
        }
    }
    report
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::Complex64;

    #[test]
    fn row_permutation_is_detected() {
        let a = CMatrix::from_fn(3, 2, |i, j| Complex64::new(i as f64, j as f64));
        let mut b = a.clone();
        b.swap_rows(0, 2);
        assert!(matches_up_to_row_order(&b, &a));
        b[(1, 1)] += Complex64::new(1e-9, 0.0);
        assert!(!matches_up_to_row_order(&b, &a));
        assert!(!matches_up_to_row_order(&a.transpose(), &a));
    }

    #[test]
    fn duplicate_rows_need_distinct_partners() {
        let a = CMatrix::from_fn(2, 2, |i, _| Complex64::new(i as f64, 0.0));
        let b = CMatrix::from_element(2, 2, Complex64::new(0.0, 0.0));
        assert!(!matches_up_to_row_order(&b, &a));
    }
}
