use std::path::Path;

use serde::{Deserialize, Serialize};

use super::SimError;

/// Log-normal duration in seconds, given by its median and the standard
/// deviation of the underlying normal. A zero median always yields zero.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Duration {
    pub median: f64,
    #[serde(default)]
    pub sigma: f64,
}

/// Inclusive pixel range.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PixelRange {
    pub min: u32,
    pub max: u32,
}

/// Vertical geometry of a listing page: item `i` occupies
/// `[top_offset + i * (item_height + spacing), .. + item_height)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ListingLayout {
    pub top_offset: u32,
    pub item_height: u32,
    pub spacing: u32,
    pub items_per_page: u32,
}

impl ListingLayout {
    pub fn validate(&self) -> Result<(), SimError> {
        if self.item_height == 0 {
            return Err(SimError::InvalidLayout(
                "item_height must be positive".into(),
            ));
        }
        if self.items_per_page == 0 {
            return Err(SimError::InvalidLayout(
                "items_per_page must be positive".into(),
            ));
        }
        Ok(())
    }

    /// Pixel interval `[top, bottom)` of slot `index`.
    pub fn slot(&self, index: usize) -> (u64, u64) {
        let top =
            u64::from(self.top_offset) + index as u64 * u64::from(self.item_height + self.spacing);
        (top, top + u64::from(self.item_height))
    }

    /// Height the listing document needs to hold `items` slots.
    pub fn content_height(&self, items: usize) -> u64 {
        if items == 0 {
            return u64::from(self.top_offset);
        }
        self.slot(items - 1).1 + u64::from(self.spacing)
    }

    /// Slots overlapping the viewport `[scroll_top, scroll_top + screen_height)`.
    pub fn visible_slots(
        &self,
        items: usize,
        scroll_top: u64,
        screen_height: u64,
    ) -> impl Iterator<Item = usize> + '_ {
        let bottom = scroll_top + screen_height;
        (0..items).filter(move |&i| {
            let (top, end) = self.slot(i);
            top < bottom && end > scroll_top
        })
    }
}

impl Default for ListingLayout {
    fn default() -> Self {
        Self {
            top_offset: 160,
            item_height: 240,
            spacing: 24,
            items_per_page: 10,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SessionProfile {
    pub name: String,
    /// Share of sessions generated as bots.
    #[serde(default)]
    pub bot_share: f64,
    /// Share of bot sessions that run the collector under an automation
    /// user agent instead of only fetching pages.
    #[serde(default)]
    pub headless_bot_share: f64,
    /// Mean of the geometric page count, at least 1.
    pub pages_per_session: f64,
    /// Mean number of active bursts per page view, at least 1.
    pub bursts_per_page: f64,
    /// Weight of the item's intrinsic appeal in a reader's intent on an item
    /// page; the rest is per-view noise.
    #[serde(default = "half")]
    pub interest_weight: f64,
    /// How strongly reader intent stretches activity: 0 leaves burst counts
    /// and lengths alone, 1 scales them from nothing up to double.
    #[serde(default)]
    pub intent_attention_gain: f64,
    pub active_burst_seconds: Duration,
    pub idle_gap_seconds: Duration,
    /// Lower bound on the idle time between a page's last activity and the
    /// navigation away from it.
    #[serde(default)]
    pub min_trailing_idle_seconds: u64,
    /// Probability that an active second carries a DOM event.
    pub activity_density: f64,
    /// Probability that an active second's event is a scroll.
    pub scroll_propensity: f64,
    /// Weight of the reader's intent in the final scroll depth; the rest is
    /// independent noise.
    pub engagement_scroll_coupling: f64,
    /// Share of non-referred page views that are listing pages.
    #[serde(default)]
    pub listing_share: f64,
    /// Probability of leaving a listing page by clicking one of its visible
    /// items.
    #[serde(default)]
    pub listing_click_probability: f64,
    /// Probability that a listing page view is scrolled at all.
    #[serde(default)]
    pub listing_scroll_propensity: f64,
    pub catalog_size: u32,
    pub document_height: PixelRange,
    pub screen_height: PixelRange,
    pub screen_width: PixelRange,
    #[serde(default)]
    pub listing_layout: ListingLayout,
}

fn half() -> f64 {
    0.5
}

const BUILTIN: &[(&str, &str)] = &[
    ("human", include_str!("../../profiles/human.toml")),
    ("idle-heavy", include_str!("../../profiles/idle-heavy.toml")),
    ("coupled", include_str!("../../profiles/coupled.toml")),
    ("mixed", include_str!("../../profiles/mixed.toml")),
    ("bot", include_str!("../../profiles/bot.toml")),
];

impl SessionProfile {
    pub fn builtin_names() -> impl Iterator<Item = &'static str> {
        BUILTIN.iter().map(|(name, _)| *name)
    }

    pub fn builtin(name: &str) -> Option<SessionProfile> {
        BUILTIN
            .iter()
            .find(|(n, _)| *n == name)
            .map(|(_, text)| Self::from_toml(text).expect("built-in profile parses"))
    }

    pub fn from_toml(text: &str) -> Result<SessionProfile, SimError> {
        let profile: SessionProfile =
            toml::from_str(text).map_err(|e| SimError::InvalidProfile(e.to_string()))?;
        profile.validate()?;
        Ok(profile)
    }

    pub fn load(path: &Path) -> Result<SessionProfile, SimError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| SimError::InvalidProfile(format!("{}: {e}", path.display())))?;
        Self::from_toml(&text)
    }

    /// A built-in name, or else a path to a profile file.
    pub fn resolve(name_or_path: &str) -> Result<SessionProfile, SimError> {
        match Self::builtin(name_or_path) {
            Some(p) => Ok(p),
            None => Self::load(Path::new(name_or_path)),
        }
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("profile serializes")
    }

    pub fn validate(&self) -> Result<(), SimError> {
        let bad = |what: &str| Err(SimError::InvalidProfile(what.to_string()));
        let probabilities = [
            ("bot_share", self.bot_share),
            ("headless_bot_share", self.headless_bot_share),
            ("activity_density", self.activity_density),
            ("scroll_propensity", self.scroll_propensity),
            (
                "engagement_scroll_coupling",
                self.engagement_scroll_coupling,
            ),
            ("intent_attention_gain", self.intent_attention_gain),
            ("interest_weight", self.interest_weight),
            ("listing_share", self.listing_share),
            ("listing_click_probability", self.listing_click_probability),
            ("listing_scroll_propensity", self.listing_scroll_propensity),
        ];
        for (name, p) in probabilities {
            if !(0.0..=1.0).contains(&p) {
                return bad(&format!("{name} must lie in [0, 1]"));
            }
        }
        for (name, d) in [
            ("active_burst_seconds", self.active_burst_seconds),
            ("idle_gap_seconds", self.idle_gap_seconds),
        ] {
            if !(d.median >= 0.0 && d.median.is_finite())
                || !(d.sigma >= 0.0 && d.sigma.is_finite())
            {
                return bad(&format!(
                    "{name} parameters must be finite and non-negative"
                ));
            }
        }
        if !(self.pages_per_session >= 1.0 && self.pages_per_session.is_finite()) {
            return bad("pages_per_session must be at least 1");
        }
        if !(self.bursts_per_page >= 1.0 && self.bursts_per_page.is_finite()) {
            return bad("bursts_per_page must be at least 1");
        }
        if self.catalog_size == 0 {
            return bad("catalog_size must be positive");
        }
        for (name, r) in [
            ("document_height", self.document_height),
            ("screen_height", self.screen_height),
            ("screen_width", self.screen_width),
        ] {
            if r.min == 0 || r.min > r.max {
                return bad(&format!(
                    "{name} must be a non-empty range of positive pixels"
                ));
            }
        }
        if self.listing_share > 0.0 && self.listing_layout.items_per_page > self.catalog_size {
            return bad("listing_layout.items_per_page exceeds catalog_size");
        }
        self.listing_layout.validate()
    }
}
