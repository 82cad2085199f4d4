use crate::economics::bonus_factor;
use crate::error::Result;
use crate::market::MarketConfig;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AlphabetEntry {
    pub join_round: u32,
    pub h: f64,
}

/// Distinct joining choices open to a type, ordered by bonus factor, largest first.
///
/// Every non-critical round has `h = 1`, so they collapse into one trailing
/// sentinel entry.
#[derive(Debug, Clone, PartialEq)]
pub struct TimeAlphabet {
    entries: Vec<AlphabetEntry>,
}

impl TimeAlphabet {
    /// Joining rounds `from..=T` of `cfg`'s time frame.
    pub fn from_round(cfg: &MarketConfig, from: u32) -> Result<Self> {
        let tf = cfg.timeframe();
        tf.check_round(from)?;
        let mut entries = Vec::new();
        if let Some((start, end)) = tf.clp_window() {
            for t in start.max(from)..=end {
                entries.push(AlphabetEntry {
                    join_round: t,
                    h: bonus_factor(t, tf, cfg.vartheta())?,
                });
            }
        }
        let non_clp = |t: &u32| !tf.is_clp(*t);
        let after_window = tf.clp_window().map_or(from, |(_, end)| (end + 1).max(from));
        let sentinel = (after_window..=tf.total_rounds())
            .find(non_clp)
            .or_else(|| (from..=tf.total_rounds()).find(non_clp));
        if let Some(join_round) = sentinel {
            entries.push(AlphabetEntry { join_round, h: 1.0 });
        }
        Ok(Self { entries })
    }

    /// A single choice with `h = 1`: the joining round carries no weight.
    pub fn time_blind(join_round: u32) -> Self {
        Self {
            entries: vec![AlphabetEntry { join_round, h: 1.0 }],
        }
    }

    /// Arbitrary entries, sorted into alphabet order. Intended for tests and
    /// externally specified search spaces.
    pub fn from_entries(mut entries: Vec<AlphabetEntry>) -> Self {
        entries.sort_by(|a, b| b.h.total_cmp(&a.h).then(a.join_round.cmp(&b.join_round)));
        Self { entries }
    }

    pub fn entries(&self) -> &[AlphabetEntry] {
        &self.entries
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn h(&self, index: usize) -> f64 {
        self.entries[index].h
    }
}
