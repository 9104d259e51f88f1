//! Engagement feature mining.
//!
//! * attention span: 5 seconds per non-empty interval bucket, summed over
//!   reports;
//! * scroll depth: share of the document revealed, averaged over the
//!   reports that carry a scroll sample;
//! * CTR over visible impressions rather than rendered ones.

mod compare;
mod correlation;
mod items;

use thiserror::Error;

use crate::model::{EngagementReport, MAX_REPORT_BUCKETS};
use crate::protocol::TICK_SECONDS;

pub use compare::{compare_log, compare_methods, page_load_dwell, ComparisonReport};
pub use correlation::{
    attention_scroll_correlation, pearson, CorrelationReport, CurvePoint, PERCENTILE_BINS,
};
pub use items::{dedup_events, fleet_mean_attention, item_stats, ItemFeatures, ItemStats};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum MineError {
    #[error("invariant violation: {0}")]
    InvariantViolation(String),
    #[error("document height must be positive")]
    NonPositiveDocumentHeight,
    #[error("screen height must be positive")]
    NonPositiveScreenHeight,
    #[error("{0} must not be negative")]
    NegativeInput(&'static str),
    #[error("no report carries a scroll sample")]
    NoScrollData,
    #[error("CTR undefined for zero impressions")]
    ZeroImpressions,
    #[error("insufficient data: {0}")]
    InsufficientData(InsufficientData),
    #[error("ping attention is zero, ratio undefined")]
    ZeroPingAttention,
    #[error("page-load impressions are zero, reduction undefined")]
    ZeroPageLoadImpressions,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Error)]
pub enum InsufficientData {
    #[error("fewer than two items with attention and scroll depth")]
    TooFewItems,
    #[error("zero variance, correlation undefined")]
    ZeroVariance,
}

/// Attention seconds for a sequence of reports of one (entity, target) pair.
pub fn attention_span(reports: &[EngagementReport]) -> Result<u64, MineError> {
    reports.iter().try_fold(0u64, |total, report| {
        let len = report.len();
        if len == 0 || len > MAX_REPORT_BUCKETS {
            return Err(MineError::InvariantViolation(format!(
                "report length {len} outside 1..={MAX_REPORT_BUCKETS}"
            )));
        }
        Ok(total + len as u64 * TICK_SECONDS)
    })
}

/// Percentage of the document revealed, clamped at 100.
pub fn scrolled(
    screen_height: f64,
    max_scroll_top: f64,
    document_height: f64,
) -> Result<f64, MineError> {
    if document_height.is_nan() || document_height <= 0.0 {
        return Err(MineError::NonPositiveDocumentHeight);
    }
    if max_scroll_top.is_nan() || max_scroll_top < 0.0 {
        return Err(MineError::NegativeInput("maxScrollTop"));
    }
    if screen_height.is_nan() || screen_height <= 0.0 {
        return Err(MineError::NonPositiveScreenHeight);
    }
    let total_scrolled = if screen_height + max_scroll_top > document_height {
        document_height
    } else {
        screen_height + max_scroll_top
    };
    Ok(total_scrolled / document_height * 100.0)
}

/// Like [`scrolled`], but measured against a main-content height instead of
/// the whole document when one is given.
pub fn scrolled_within(
    screen_height: f64,
    max_scroll_top: f64,
    document_height: f64,
    content_height: Option<f64>,
) -> Result<f64, MineError> {
    scrolled(
        screen_height,
        max_scroll_top,
        content_height.unwrap_or(document_height),
    )
}

/// Scroll depth of one report: maximum offset across its buckets against
/// the latest screen and document heights. `None` when no bucket scrolled.
pub fn report_scroll_depth(report: &EngagementReport) -> Option<Result<f64, MineError>> {
    let mut samples = report.buckets.iter().filter_map(|b| b.scroll());
    let mut merged = samples.next()?;
    for s in samples {
        merged.merge(s);
    }
    Some(scrolled(
        f64::from(merged.screen_height),
        f64::from(merged.scroll_top),
        f64::from(merged.document_height),
    ))
}

/// Mean scroll depth over the reports that carry scroll samples.
pub fn avg_scroll_depth(reports: &[EngagementReport]) -> Result<f64, MineError> {
    let mut sum = 0.0;
    let mut n = 0usize;
    for depth in reports.iter().filter_map(report_scroll_depth) {
        sum += depth?;
        n += 1;
    }
    if n == 0 {
        return Err(MineError::NoScrollData);
    }
    Ok(sum / n as f64)
}

/// Click-through rate in percent, rounded half-up to two decimals.
pub fn ctr(clicks: u64, visible_impressions: u64) -> Result<f64, MineError> {
    if visible_impressions == 0 {
        return Err(MineError::ZeroImpressions);
    }
    let numerator = u128::from(clicks) * 10_000 * 2 + u128::from(visible_impressions);
    let hundredths = numerator / (2 * u128::from(visible_impressions));
    Ok(hundredths as f64 / 100.0)
}

/// Half-up rounding to two decimals for presentation.
pub fn round2(value: f64) -> f64 {
    (value * 100.0 + 0.5).floor() / 100.0
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fixtures::SAMPLE_REPORT;
    use crate::model::{
        decode_event, DomEvent, IntervalBucket, Payload, ScrollSample, SessionIdentity,
    };

    fn report(lengths: usize) -> EngagementReport {
        let mut b = IntervalBucket::new();
        b.set(DomEvent::MouseMove, Payload::Marker);
        EngagementReport {
            identity: SessionIdentity::new("1", "user", "10", "item", "10.0.0.1"),
            timestamp: 1_459_535_879,
            buckets: vec![b; lengths],
        }
    }

    fn sample() -> EngagementReport {
        EngagementReport::try_from(&decode_event(SAMPLE_REPORT.as_bytes()).unwrap()).unwrap()
    }

    fn scroll_report(tops: &[u32]) -> EngagementReport {
        let buckets = tops
            .iter()
            .map(|t| {
                let mut b = IntervalBucket::new();
                b.set(
                    DomEvent::Scroll,
                    Payload::Scroll(ScrollSample::new(5000, 100, 980, *t)),
                );
                b
            })
            .collect();
        EngagementReport {
            buckets,
            ..report(1)
        }
    }

    #[test]
    fn attention_examples() {
        assert_eq!(attention_span(&[]).unwrap(), 0);
        assert_eq!(
            attention_span(&[report(3), report(3), report(3)]).unwrap(),
            45
        );
        assert_eq!(attention_span(&[sample()]).unwrap(), 15);
        assert!(matches!(
            attention_span(&[report(4)]),
            Err(MineError::InvariantViolation(_))
        ));
        assert!(matches!(
            attention_span(&[report(0)]),
            Err(MineError::InvariantViolation(_))
        ));
    }

    #[test]
    fn scrolled_examples() {
        assert_eq!(scrolled(100.0, 300.0, 5000.0).unwrap(), 8.0);
        assert_eq!(scrolled(100.0, 500.0, 5000.0).unwrap(), 12.0);
        assert_eq!(scrolled(800.0, 4500.0, 5000.0).unwrap(), 100.0);
        assert_eq!(
            scrolled(100.0, 300.0, 0.0),
            Err(MineError::NonPositiveDocumentHeight)
        );
        assert_eq!(
            scrolled(100.0, -1.0, 5000.0),
            Err(MineError::NegativeInput("maxScrollTop"))
        );
        assert_eq!(
            scrolled(0.0, 1.0, 5000.0),
            Err(MineError::NonPositiveScreenHeight)
        );
    }

    #[test]
    fn scrolled_with_content_override() {
        assert_eq!(
            scrolled_within(100.0, 300.0, 5000.0, Some(800.0)).unwrap(),
            50.0
        );
        assert_eq!(scrolled_within(100.0, 300.0, 5000.0, None).unwrap(), 8.0);
    }

    #[test]
    fn avg_scroll_examples() {
        assert_eq!(avg_scroll_depth(&[sample()]).unwrap(), 12.0);
        assert_eq!(
            avg_scroll_depth(&[scroll_report(&[300]), scroll_report(&[500])]).unwrap(),
            10.0
        );
        assert_eq!(
            avg_scroll_depth(&[report(2), report(1)]),
            Err(MineError::NoScrollData)
        );
        // Reports without scroll samples are left out of the mean.
        assert_eq!(
            avg_scroll_depth(&[scroll_report(&[300]), report(2)]).unwrap(),
            8.0
        );
    }

    #[test]
    fn ctr_table_values() {
        assert_eq!(ctr(119, 506).unwrap(), 23.52);
        assert_eq!(ctr(35, 506).unwrap(), 6.92);
        assert_eq!(ctr(119, 2024).unwrap(), 5.88);
        assert_eq!(ctr(35, 2024).unwrap(), 1.73);
        assert_eq!(ctr(0, 100).unwrap(), 0.0);
        assert_eq!(ctr(1, 2).unwrap(), 50.0);
        assert_eq!(ctr(1, 0), Err(MineError::ZeroImpressions));
    }

    #[test]
    fn ctr_rounds_half_up() {
        // 1/8 = 12.5% exactly; 1/16 = 6.25%; 1/32 = 3.125% -> 3.13
        assert_eq!(ctr(1, 32).unwrap(), 3.13);
        // 1/3 = 33.333..% ; 2/3 = 66.666..%
        assert_eq!(ctr(1, 3).unwrap(), 33.33);
        assert_eq!(ctr(2, 3).unwrap(), 66.67);
    }

    #[test]
    fn round2_half_up() {
        assert_eq!(round2(3.486_000_1), 3.49);
        assert_eq!(round2(33.3685), 33.37);
        assert_eq!(round2(32.4), 32.4);
    }
}
