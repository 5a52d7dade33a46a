//! Satisfaction and utilization metrics.

use serde::{Deserialize, Serialize};

use crate::env::{DomainVec, QoSRecord, ResourcePool};
use crate::error::{Error, Result};

/// Fraction of (user, step) records with no violation flag set.
pub fn qos_satisfaction_rate(records: &[QoSRecord]) -> Result<f64> {
    if records.is_empty() {
        return Err(Error::InvalidInput("satisfaction rate over an empty window".into()));
    }
    Ok(records.iter().filter(|r| r.satisfied()).count() as f64 / records.len() as f64)
}

/// One row of a utilization table, in percent.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct UtilizationRow {
    pub radio: f64,
    pub bandwidth: f64,
    pub compute: f64,
    pub overall: f64,
}

impl UtilizationRow {
    /// Builds a row from three domain percentages; `overall` is their mean.
    pub fn from_domains(radio: f64, bandwidth: f64, compute: f64) -> Self {
        Self {
            radio,
            bandwidth,
            compute,
            overall: (radio + bandwidth + compute) / 3.0,
        }
    }
}

/// Mean per-domain utilization of each bucket of per-step resource usage.
///
/// `buckets[b]` holds the usage vectors of the steps in bucket `b`.
pub fn utilization_report(buckets: &[Vec<DomainVec>], pool: &ResourcePool) -> Result<Vec<UtilizationRow>> {
    let caps = pool.capacities();
    if caps.iter().any(|c| !(*c > 0.0)) {
        return Err(Error::InvalidConfig("utilization needs positive capacities".into()));
    }
    if buckets.is_empty() || buckets.iter().any(|b| b.is_empty()) {
        return Err(Error::InvalidInput("utilization buckets must be non-empty".into()));
    }
    Ok(buckets
        .iter()
        .map(|steps| {
            let mut pct = [0.0; 3];
            for k in 0..3 {
                let mean = steps.iter().map(|u| u[k]).sum::<f64>() / steps.len() as f64;
                pct[k] = (100.0 * mean / caps[k]).clamp(0.0, 100.0);
            }
            UtilizationRow::from_domains(pct[0], pct[1], pct[2])
        })
        .collect())
}

/// Mean and sample standard deviation.
pub fn mean_std(xs: &[f64]) -> (f64, f64) {
    if xs.is_empty() {
        return (f64::NAN, f64::NAN);
    }
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    let var = if xs.len() > 1 {
        xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0)
    } else {
        0.0
    };
    (mean, var.sqrt())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::env::UserId;

    fn rec(ok: bool) -> QoSRecord {
        QoSRecord {
            user_id: UserId(0),
            achieved_rate: 1.0,
            delay: 0.0,
            reliability: 1.0,
            delay_violation: !ok,
            throughput_violation: false,
            reliability_violation: false,
        }
    }

    #[test]
    fn satisfaction_counts() {
        assert_eq!(qos_satisfaction_rate(&vec![rec(true); 4]).unwrap(), 1.0);
        let r = [rec(true), rec(false), rec(true), rec(true)];
        assert_eq!(qos_satisfaction_rate(&r).unwrap(), 0.75);
        assert!(matches!(qos_satisfaction_rate(&[]), Err(Error::InvalidInput(_))));
    }

    #[test]
    fn overall_is_the_domain_mean() {
        assert_eq!(UtilizationRow::from_domains(40.0, 40.0, 40.0).overall, 40.0);
        let pool = ResourcePool {
            radio_capacity: 10.0,
            bandwidth_capacity: 100.0,
            compute_capacity: 1000.0,
        };
        let rows = utilization_report(&[vec![[5.0, 50.0, 100.0], [5.0, 30.0, 300.0]]], &pool).unwrap();
        assert!((rows[0].radio - 50.0).abs() < 1e-12);
        assert!((rows[0].bandwidth - 40.0).abs() < 1e-12);
        assert!((rows[0].compute - 20.0).abs() < 1e-12);
        assert!((rows[0].overall - 110.0 / 3.0).abs() < 1e-12);
    }

    #[test]
    fn zero_capacity_is_a_config_error() {
        let pool = ResourcePool {
            radio_capacity: 0.0,
            bandwidth_capacity: 1.0,
            compute_capacity: 1.0,
        };
        assert!(matches!(
            utilization_report(&[vec![[0.0; 3]]], &pool),
            Err(Error::InvalidConfig(_))
        ));
    }
}
