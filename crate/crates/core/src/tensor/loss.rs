//! Per-document objectives over candidate scores `h(x)` in (0, 1).

use crate::candgen::Label;

/// Log arguments are clamped to `[LOG_CLAMP, 1 - LOG_CLAMP]`.
pub const LOG_CLAMP: f64 = 1e-12;

pub(crate) fn clamp_prob(p: f64) -> f64 {
    p.clamp(LOG_CLAMP, 1.0 - LOG_CLAMP)
}

/// `-(w * sum_pos ln h(p) + sum_neg ln(1 - h(n)))`.
pub fn weighted_cross_entropy(scores: &[f64], labels: &[Label], pos_weight: f64) -> f64 {
    assert_eq!(scores.len(), labels.len());
    let mut pos = 0.0;
    let mut neg = 0.0;
    for (&h, &label) in scores.iter().zip(labels) {
        let h = clamp_prob(h);
        match label {
            Label::Positive => pos += h.ln(),
            Label::Negative => neg += (1.0 - h).ln(),
        }
    }
    -(pos_weight * pos + neg)
}

/// `sum_pos sum_neg max(0, m - (h(p) - h(n)))` within one document.
pub fn hinge_loss(scores: &[f64], labels: &[Label], margin: f64) -> f64 {
    assert_eq!(scores.len(), labels.len());
    let (pos, neg): (Vec<_>, Vec<_>) = scores
        .iter()
        .zip(labels)
        .partition(|(_, l)| l.is_positive());
    let mut total = 0.0;
    for (&hp, _) in &pos {
        for (&hn, _) in &neg {
            total += (margin - (hp - hn)).max(0.0);
        }
    }
    total
}
