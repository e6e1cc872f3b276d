use std::fmt::Write as _;

use super::EvalError;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RocPoint {
    pub fpr: f64,
    pub tpr: f64,
}

/// ROC curve from (0,0) to (1,1), one vertex per distinct score. Tied scores
/// form a single diagonal step, which is what gives ties half credit.
pub fn roc_curve(scores: &[f64], labels: &[bool]) -> Result<Vec<RocPoint>, EvalError> {
    assert_eq!(scores.len(), labels.len(), "one label per score");
    if let Some(i) = scores.iter().position(|s| s.is_nan()) {
        return Err(EvalError::NonFiniteScore(i));
    }
    let pos = labels.iter().filter(|&&l| l).count();
    let neg = labels.len() - pos;
    if pos == 0 || neg == 0 {
        return Err(EvalError::DegenerateLabels { positives: pos, negatives: neg });
    }
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[b].total_cmp(&scores[a]));

    let mut pts = vec![RocPoint { fpr: 0.0, tpr: 0.0 }];
    let (mut tp, mut fp) = (0usize, 0usize);
    let mut i = 0;
    while i < order.len() {
        let s = scores[order[i]];
        while i < order.len() && scores[order[i]] == s {
            if labels[order[i]] {
                tp += 1;
            } else {
                fp += 1;
            }
            i += 1;
        }
        pts.push(RocPoint { fpr: fp as f64 / neg as f64, tpr: tp as f64 / pos as f64 });
    }
    Ok(pts)
}

pub fn trapezoid_auc(curve: &[RocPoint]) -> f64 {
    curve.windows(2).map(|w| (w[1].fpr - w[0].fpr) * (w[0].tpr + w[1].tpr) / 2.0).sum()
}

pub fn roc_auc(scores: &[f64], labels: &[bool]) -> Result<(Vec<RocPoint>, f64), EvalError> {
    let curve = roc_curve(scores, labels)?;
    let auc = trapezoid_auc(&curve);
    Ok((curve, auc))
}

/// `fpr,tpr` rows and a trailing `# auc=` comment.
pub fn roc_csv(curve: &[RocPoint], auc: f64) -> String {
    let mut out = String::from("fpr,tpr\n");
    for p in curve {
        writeln!(out, "{},{}", p.fpr, p.tpr).unwrap();
    }
    writeln!(out, "# auc={auc}").unwrap();
    out
}
