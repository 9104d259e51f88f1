use super::{InsufficientData, ItemStats, MineError};

pub const PERCENTILE_BINS: usize = 20;

/// One bin of the attention-ordered scroll-depth curve.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CurvePoint {
    /// Upper edge of the bin, 5..=100.
    pub percentile: u32,
    pub mean_scroll_depth: f64,
    pub mean_attention_seconds: f64,
    pub items: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CorrelationReport {
    pub curve: Vec<CurvePoint>,
    pub pearson: f64,
    pub items: usize,
}

impl CorrelationReport {
    /// True when the curve never drops between consecutive bins whose upper
    /// edge is above `percentile`.
    pub fn non_decreasing_above(&self, percentile: u32) -> bool {
        self.curve
            .iter()
            .filter(|p| p.percentile > percentile)
            .collect::<Vec<_>>()
            .windows(2)
            .all(|w| w[1].mean_scroll_depth >= w[0].mean_scroll_depth)
    }
}

/// Orders items by attention, bins them into 20 percentile bins, and reports
/// the mean scroll depth per bin together with the Pearson coefficient of
/// the raw (attention, depth) pairs.
pub fn attention_scroll_correlation(items: &ItemStats) -> Result<CorrelationReport, MineError> {
    let mut pairs: Vec<(f64, f64)> = items
        .values()
        .filter(|f| f.attention_seconds > 0)
        .filter_map(|f| {
            f.avg_scroll_depth_percent
                .map(|d| (f.attention_seconds as f64, d))
        })
        .collect();
    if pairs.len() < 2 {
        return Err(MineError::InsufficientData(InsufficientData::TooFewItems));
    }
    let pearson = pearson(&pairs)?;

    // Stable sort keeps item-id order among equal attention values.
    pairs.sort_by(|a, b| a.0.total_cmp(&b.0));
    let n = pairs.len();
    let mut sums = [(0.0f64, 0.0f64, 0usize); PERCENTILE_BINS];
    for (i, (attention, depth)) in pairs.iter().enumerate() {
        let bin = i * PERCENTILE_BINS / n;
        sums[bin].0 += depth;
        sums[bin].1 += attention;
        sums[bin].2 += 1;
    }
    let curve = sums
        .iter()
        .enumerate()
        .filter(|(_, (_, _, count))| *count > 0)
        .map(|(bin, (depth, attention, count))| CurvePoint {
            percentile: ((bin + 1) * 100 / PERCENTILE_BINS) as u32,
            mean_scroll_depth: depth / *count as f64,
            mean_attention_seconds: attention / *count as f64,
            items: *count,
        })
        .collect();
    Ok(CorrelationReport {
        curve,
        pearson,
        items: n,
    })
}

/// Pearson correlation coefficient, computed around the means.
pub fn pearson(pairs: &[(f64, f64)]) -> Result<f64, MineError> {
    if pairs.len() < 2 {
        return Err(MineError::InsufficientData(InsufficientData::TooFewItems));
    }
    let n = pairs.len() as f64;
    let mean_x = pairs.iter().map(|p| p.0).sum::<f64>() / n;
    let mean_y = pairs.iter().map(|p| p.1).sum::<f64>() / n;
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for (x, y) in pairs {
        let dx = x - mean_x;
        let dy = y - mean_y;
        sxy += dx * dy;
        sxx += dx * dx;
        syy += dy * dy;
    }
    if sxx == 0.0 || syy == 0.0 {
        return Err(MineError::InsufficientData(InsufficientData::ZeroVariance));
    }
    Ok(sxy / (sxx.sqrt() * syy.sqrt()))
}
