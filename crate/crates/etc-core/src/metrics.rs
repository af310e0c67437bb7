//! Classification and routing metrics: accuracy, unweighted macro-F1,
//! routing accuracy against true sample origin, the origin-by-branch
//! confusion matrix, and membership-class counts.

use serde::{Deserialize, Serialize};

use crate::data::Domain;
use crate::error::{Error, Result};
use crate::probe::Route;

/// How many samples fell into each membership class.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct MembershipCounts {
    pub source_only: usize,
    pub target_only: usize,
    pub both: usize,
    pub neither: usize,
}

impl MembershipCounts {
    pub fn total(&self) -> usize {
        self.source_only + self.target_only + self.both + self.neither
    }
}

/// Counts of (true origin, chosen branch) pairs; index 0 = source,
/// 1 = target on both axes.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct RoutingConfusion {
    pub counts: [[usize; 2]; 2],
}

impl RoutingConfusion {
    fn idx(d: Domain) -> usize {
        match d {
            Domain::Source => 0,
            Domain::Target => 1,
        }
    }

    pub fn get(&self, origin: Domain, branch: Domain) -> usize {
        self.counts[Self::idx(origin)][Self::idx(branch)]
    }

    pub fn origin_total(&self, origin: Domain) -> usize {
        let row = self.counts[Self::idx(origin)];
        row[0] + row[1]
    }

    pub fn total(&self) -> usize {
        self.origin_total(Domain::Source) + self.origin_total(Domain::Target)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsRecord {
    pub n: usize,
    pub accuracy: f64,
    pub macro_f1: f64,
    /// Fraction of samples whose chosen branch matches their true origin;
    /// present only when routes and origins were supplied.
    pub routing_accuracy: Option<f64>,
    pub confusion: Option<RoutingConfusion>,
    pub membership: Option<MembershipCounts>,
}

fn check_lengths(left: usize, right: usize) -> Result<()> {
    if left != right {
        return Err(Error::MisalignedLengths { left, right });
    }
    Ok(())
}

fn check_labels(values: &[usize], class_count: usize, what: &str) -> Result<()> {
    for (row, &v) in values.iter().enumerate() {
        if v >= class_count {
            return Err(Error::InvalidTarget(format!(
                "{what} {v} at row {row} exceeds class count {class_count}"
            )));
        }
    }
    Ok(())
}

pub fn accuracy(predictions: &[usize], labels: &[usize]) -> Result<f64> {
    check_lengths(predictions.len(), labels.len())?;
    if predictions.is_empty() {
        return Err(Error::NoSamples);
    }
    let hits = predictions.iter().zip(labels).filter(|(p, l)| p == l).count();
    Ok(hits as f64 / predictions.len() as f64)
}

/// Per-class F1 averaged unweighted over all `class_count` classes; a
/// class absent from both truth and predictions contributes 0.
pub fn macro_f1(predictions: &[usize], labels: &[usize], class_count: usize) -> Result<f64> {
    check_lengths(predictions.len(), labels.len())?;
    if predictions.is_empty() {
        return Err(Error::NoSamples);
    }
    if class_count == 0 {
        return Err(Error::InvalidParameter("class count 0".into()));
    }
    check_labels(labels, class_count, "label")?;
    check_labels(predictions, class_count, "prediction")?;
    let mut tp = vec![0usize; class_count];
    let mut fp = vec![0usize; class_count];
    let mut fn_ = vec![0usize; class_count];
    for (&p, &l) in predictions.iter().zip(labels) {
        if p == l {
            tp[p] += 1;
        } else {
            fp[p] += 1;
            fn_[l] += 1;
        }
    }
    let mut sum = 0.0;
    for c in 0..class_count {
        let denom = 2 * tp[c] + fp[c] + fn_[c];
        if denom > 0 {
            sum += 2.0 * tp[c] as f64 / denom as f64;
        }
    }
    Ok(sum / class_count as f64)
}

/// Summarizes one evaluation pass. Routing fields are filled only when
/// both per-sample routes and true origins are available.
pub fn compute_metrics(
    predictions: &[usize],
    labels: &[usize],
    class_count: usize,
    routes: Option<&[Route]>,
    origins: Option<&[Domain]>,
) -> Result<MetricsRecord> {
    let accuracy = accuracy(predictions, labels)?;
    let macro_f1 = macro_f1(predictions, labels, class_count)?;

    let membership = routes
        .map(|rs| -> Result<MembershipCounts> {
            check_lengths(rs.len(), predictions.len())?;
            let mut m = MembershipCounts::default();
            for r in rs {
                match (r.membership.in_source, r.membership.in_target) {
                    (true, false) => m.source_only += 1,
                    (false, true) => m.target_only += 1,
                    (true, true) => m.both += 1,
                    (false, false) => m.neither += 1,
                }
            }
            Ok(m)
        })
        .transpose()?;

    let (routing_accuracy, confusion) = match (routes, origins) {
        (Some(rs), Some(os)) => {
            check_lengths(os.len(), rs.len())?;
            let mut conf = RoutingConfusion::default();
            let mut hits = 0usize;
            for (r, &o) in rs.iter().zip(os) {
                conf.counts[RoutingConfusion::idx(o)][RoutingConfusion::idx(r.branch)] += 1;
                if r.branch == o {
                    hits += 1;
                }
            }
            (Some(hits as f64 / rs.len() as f64), Some(conf))
        }
        _ => (None, None),
    };

    Ok(MetricsRecord {
        n: predictions.len(),
        accuracy,
        macro_f1,
        routing_accuracy,
        confusion,
        membership,
    })
}
