use std::collections::BTreeSet;

use rand::seq::index::sample;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Geometric, LogNormal};

use super::profile::{Duration, ListingLayout, PixelRange, SessionProfile};
use super::SimError;
use crate::model::{DomEvent, ScrollSample, SessionIdentity};
use crate::protocol::PageKind;

/// Earliest session start; sessions begin somewhere in the following day.
pub const BASE_EPOCH: u64 = 1_459_468_800;

pub const HUMAN_AGENT: &str =
    "Mozilla/5.0 (X11; Linux x86_64; rv:128.0) Gecko/20100101 Firefox/128.0";
pub const CRAWLER_AGENT: &str =
    "Mozilla/5.0 (compatible; ExampleBot/2.1; +http://www.example.com/bot.html)";
pub const HEADLESS_AGENT: &str =
    "Mozilla/5.0 (X11; Linux x86_64) AppleWebKit/537.36 (KHTML, like Gecko) HeadlessChrome/120.0.0.0 Safari/537.36";

#[derive(Debug, Clone, PartialEq)]
pub struct PageView {
    pub target_id: String,
    pub kind: PageKind,
    pub loaded_at: u64,
    /// When the page was left; the next page loads at the same second.
    pub unloaded_at: u64,
    pub document_height: u32,
    /// Items rendered on a listing page, top to bottom.
    pub listed_items: Vec<String>,
    /// Reached by clicking an item on the previous listing page.
    pub referred_by_click: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TimedEvent {
    pub at: u64,
    /// Index into [`DomEventTimeline::pages`].
    pub page: usize,
    pub event: DomEvent,
    pub scroll: Option<ScrollSample>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DomEventTimeline {
    pub session_id: String,
    pub user_id: String,
    pub ip: String,
    pub user_agent: String,
    pub is_bot: bool,
    /// Whether the browser runs the collector script at all.
    pub runs_collector: bool,
    pub screen_height: u32,
    pub screen_width: u32,
    pub layout: ListingLayout,
    pub pages: Vec<PageView>,
    pub events: Vec<TimedEvent>,
}

impl DomEventTimeline {
    pub fn identity(&self, page: usize) -> SessionIdentity {
        let view = &self.pages[page];
        let kind = match view.kind {
            PageKind::Item => "item",
            PageKind::Listing => "listing",
        };
        SessionIdentity::new(
            self.user_id.clone(),
            "user",
            view.target_id.clone(),
            kind,
            self.ip.clone(),
        )
    }

    pub fn page_events(&self, page: usize) -> impl Iterator<Item = &TimedEvent> {
        self.events.iter().filter(move |e| e.page == page)
    }

    pub fn ended_at(&self) -> Option<u64> {
        self.pages.last().map(|p| p.unloaded_at)
    }

    /// Timestamps are non-decreasing, pages follow each other, and every
    /// event lies within its page view.
    pub fn validate(&self) -> Result<(), SimError> {
        let bad = |msg: String| Err(SimError::InvalidTimeline(msg));
        for (i, page) in self.pages.iter().enumerate() {
            if page.loaded_at == 0 || page.unloaded_at < page.loaded_at {
                return bad(format!("page {i} has an invalid time span"));
            }
            if let Some(next) = self.pages.get(i + 1) {
                if next.loaded_at < page.unloaded_at {
                    return bad(format!("page {} loads before page {i} is left", i + 1));
                }
            }
            if page.kind == PageKind::Item && !page.listed_items.is_empty() {
                return bad(format!("item page {i} lists items"));
            }
        }
        let mut last = 0;
        for (i, e) in self.events.iter().enumerate() {
            let Some(page) = self.pages.get(e.page) else {
                return bad(format!("event {i} refers to missing page {}", e.page));
            };
            if e.at < last {
                return bad(format!("event {i} goes back in time"));
            }
            if e.at < page.loaded_at || e.at > page.unloaded_at {
                return bad(format!("event {i} lies outside its page view"));
            }
            if (e.event == DomEvent::Scroll) != e.scroll.is_some() {
                return bad(format!("event {i} has a mismatched scroll sample"));
            }
            last = e.at;
        }
        Ok(())
    }
}

pub(crate) fn item_id(index: u32) -> String {
    format!("item-{index:05}")
}

/// Intrinsic appeal of a catalog item in `[0, 1)`, spread evenly over the
/// catalog.
pub fn item_interest(index: u32) -> f64 {
    const PHI_FRAC: f64 = 0.618_033_988_749_895;
    ((f64::from(index) + 1.0) * PHI_FRAC).fract()
}

fn item_index(id: &str) -> u32 {
    id.trim_start_matches("item-").parse().unwrap_or(0)
}

fn seconds(rng: &mut ChaCha8Rng, d: Duration, scale: f64) -> u64 {
    let median = d.median * scale;
    if median <= 0.0 {
        return 0;
    }
    let value = if d.sigma == 0.0 {
        median
    } else {
        LogNormal::new(median.ln(), d.sigma)
            .expect("validated parameters")
            .sample(rng)
    };
    value.round().min(86_400.0) as u64
}

/// Number of trials up to and including the first success, with the given mean.
fn geometric_count(rng: &mut ChaCha8Rng, mean: f64) -> u64 {
    if mean <= 1.0 {
        return 1;
    }
    1 + Geometric::new(1.0 / mean)
        .expect("probability in (0, 1]")
        .sample(rng)
}

fn pixels(rng: &mut ChaCha8Rng, r: PixelRange) -> u32 {
    rng.random_range(r.min..=r.max)
}

/// Generates session `index` of a run seeded with `seed`. Each session draws
/// from its own stream, so its timeline does not depend on how many other
/// sessions are generated.
pub fn generate_session(
    profile: &SessionProfile,
    seed: u64,
    index: u64,
) -> Result<DomEventTimeline, SimError> {
    profile.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(index);

    let is_bot = rng.random_bool(profile.bot_share);
    let headless = is_bot && rng.random_bool(profile.headless_bot_share);
    let screen_height = pixels(&mut rng, profile.screen_height);
    let screen_width = pixels(&mut rng, profile.screen_width);
    let start = BASE_EPOCH + rng.random_range(0..86_400);
    let page_count = geometric_count(&mut rng, profile.pages_per_session);

    let (user_agent, ip) = if !is_bot {
        (
            HUMAN_AGENT,
            format!(
                "10.{}.{}.{}",
                (index >> 16) & 0xff,
                (index >> 8) & 0xff,
                index & 0xff
            ),
        )
    } else if headless {
        (
            HEADLESS_AGENT,
            format!("100.64.{}.{}", (index >> 8) & 0xff, index & 0xff),
        )
    } else {
        (
            CRAWLER_AGENT,
            format!("100.65.{}.{}", (index >> 8) & 0xff, index & 0xff),
        )
    };
    let mut timeline = DomEventTimeline {
        session_id: format!("s{seed}-{index}"),
        user_id: format!("u{seed}-{index}"),
        ip,
        user_agent: user_agent.to_string(),
        is_bot,
        runs_collector: !is_bot || headless,
        screen_height,
        screen_width,
        layout: profile.listing_layout,
        pages: Vec::with_capacity(page_count as usize),
        events: Vec::new(),
    };

    let listings = (profile.catalog_size / profile.listing_layout.items_per_page).max(1);
    let mut t = start;
    let mut referral: Option<String> = None;
    for page_index in 0..page_count as usize {
        let (kind, target_id, referred) = match referral.take() {
            Some(item) => (PageKind::Item, item, true),
            None if rng.random_bool(profile.listing_share) => (
                PageKind::Listing,
                format!("listing-{:03}", rng.random_range(0..listings)),
                false,
            ),
            None => (
                PageKind::Item,
                item_id(rng.random_range(0..profile.catalog_size)),
                false,
            ),
        };
        let listed_items: Vec<String> = if kind == PageKind::Listing {
            let n = profile.listing_layout.items_per_page as usize;
            sample(&mut rng, profile.catalog_size as usize, n)
                .into_iter()
                .map(|i| item_id(i as u32))
                .collect()
        } else {
            Vec::new()
        };
        let mut document_height = pixels(&mut rng, profile.document_height);
        if kind == PageKind::Listing {
            let needed = profile.listing_layout.content_height(listed_items.len());
            document_height = document_height.max(needed.min(u64::from(u32::MAX)) as u32);
        }
        let mut page = PageView {
            target_id,
            kind,
            loaded_at: t,
            unloaded_at: t,
            document_height,
            listed_items,
            referred_by_click: referred,
        };

        if !timeline.runs_collector {
            // Crawlers fetch pages on a short fixed cadence and run no script.
            t += rng.random_range(1..=5);
            page.unloaded_at = t;
            timeline.pages.push(page);
            continue;
        }

        let intent = match kind {
            PageKind::Item => {
                let w = profile.interest_weight;
                w * item_interest(item_index(&page.target_id)) + (1.0 - w) * rng.random::<f64>()
            }
            PageKind::Listing => rng.random::<f64>(),
        };
        let scrolls_page = match kind {
            PageKind::Item => true,
            PageKind::Listing => rng.random_bool(profile.listing_scroll_propensity),
        };

        let first_event = timeline.events.len();
        timeline.events.push(TimedEvent {
            at: t,
            page: page_index,
            event: DomEvent::DomContentLoaded,
            scroll: None,
        });
        let gain = 1.0 + profile.intent_attention_gain * (2.0 * intent - 1.0);
        let bursts = geometric_count(&mut rng, 1.0 + (profile.bursts_per_page - 1.0) * gain);
        let mut cursor = t;
        for burst in 0..bursts {
            let len = seconds(&mut rng, profile.active_burst_seconds, gain).max(1);
            for s in 0..len {
                if !rng.random_bool(profile.activity_density) {
                    continue;
                }
                let event = if scrolls_page && rng.random_bool(profile.scroll_propensity) {
                    DomEvent::Scroll
                } else if rng.random_bool(0.8) {
                    DomEvent::MouseMove
                } else {
                    DomEvent::KeyDown
                };
                timeline.events.push(TimedEvent {
                    at: cursor + s,
                    page: page_index,
                    event,
                    scroll: None,
                });
            }
            cursor += len;
            let gap = seconds(&mut rng, profile.idle_gap_seconds, 1.0);
            cursor += if burst + 1 == bursts {
                gap.max(profile.min_trailing_idle_seconds)
            } else {
                gap
            };
        }

        // Scroll offsets climb monotonically towards the page's final depth.
        let scrollable = u64::from(document_height.saturating_sub(screen_height));
        let fraction = match kind {
            PageKind::Item => {
                let c = profile.engagement_scroll_coupling;
                c * intent + (1.0 - c) * rng.random::<f64>()
            }
            PageKind::Listing => rng.random::<f64>(),
        };
        let target = (fraction * scrollable as f64).round() as u64;
        let scroll_total = timeline.events[first_event..]
            .iter()
            .filter(|e| e.event == DomEvent::Scroll)
            .count() as u64;
        let mut nth = 0;
        let mut offsets = vec![0u64];
        for e in timeline.events[first_event..]
            .iter_mut()
            .filter(|e| e.event == DomEvent::Scroll)
        {
            nth += 1;
            let top = target * nth / scroll_total;
            offsets.push(top);
            e.scroll = Some(ScrollSample::new(
                document_height,
                screen_height,
                screen_width,
                top as u32,
            ));
        }

        page.unloaded_at = cursor;
        timeline.events.push(TimedEvent {
            at: cursor,
            page: page_index,
            event: DomEvent::BeforeUnload,
            scroll: None,
        });

        if kind == PageKind::Listing
            && page_index + 1 < page_count as usize
            && rng.random_bool(profile.listing_click_probability)
        {
            let seen: BTreeSet<usize> = offsets
                .iter()
                .flat_map(|&top| {
                    profile.listing_layout.visible_slots(
                        page.listed_items.len(),
                        top,
                        u64::from(screen_height),
                    )
                })
                .collect();
            if !seen.is_empty() {
                let pick = *seen
                    .iter()
                    .nth(rng.random_range(0..seen.len()))
                    .expect("in range");
                referral = Some(page.listed_items[pick].clone());
            }
        }

        t = cursor;
        timeline.pages.push(page);
    }
    Ok(timeline)
}
